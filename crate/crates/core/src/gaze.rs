//! Velocity-threshold (I-VT) fixation detection.
//!
//! The chain runs gap fill-in, eye selection, moving-median noise reduction,
//! velocity estimation, threshold classification, merging of adjacent
//! fixations and finally discarding fixations shorter than the minimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{median_in_place, median_interval, GazeSample, ScreenGeometry, TrialEvent};

#[derive(Debug, Error, PartialEq)]
pub enum GazeError {
    #[error("screen geometry lacks a physical size in mm")]
    Geometry,
    #[error("invalid I-VT parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IvtParams {
    pub max_gap_ms: f64,
    pub median_window_samples: usize,
    pub velocity_window_ms: f64,
    pub velocity_threshold_deg_s: f64,
    pub merge_max_gap_ms: f64,
    pub merge_max_angle_deg: f64,
    pub min_fixation_ms: f64,
}

impl Default for IvtParams {
    fn default() -> Self {
        IvtParams {
            max_gap_ms: 75.0,
            median_window_samples: 3,
            velocity_window_ms: 20.0,
            velocity_threshold_deg_s: 30.0,
            merge_max_gap_ms: 75.0,
            merge_max_angle_deg: 0.5,
            min_fixation_ms: 60.0,
        }
    }
}

impl IvtParams {
    pub fn validate(&self) -> Result<(), GazeError> {
        let positive = [
            self.max_gap_ms,
            self.velocity_window_ms,
            self.velocity_threshold_deg_s,
            self.merge_max_gap_ms,
            self.merge_max_angle_deg,
            self.min_fixation_ms,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(GazeError::Params("all thresholds must be positive".into()));
        }
        if self.median_window_samples == 0 || self.median_window_samples % 2 == 0 {
            return Err(GazeError::Params("median window must be a positive odd sample count".into()));
        }
        Ok(())
    }
}

/// Averaged two-eye sample. `pos` is normalized, top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclopeanSample {
    pub t_ms: f64,
    pub pos: Option<[f64; 2]>,
    pub eye_distance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub centroid_px: [f64; 2],
    pub sample_count: usize,
    pub trial_id: Option<u32>,
}

impl Fixation {
    pub fn offset_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saccade {
    pub onset_ms: f64,
    pub offset_ms: f64,
}

impl Saccade {
    pub fn midpoint_ms(&self) -> f64 {
        0.5 * (self.onset_ms + self.offset_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleClass {
    Fixation,
    Saccade,
    /// No velocity available (missing data).
    Gap,
}

/// Screen geometry plus the viewing distance used for angle conversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGeometry {
    pub screen: ScreenGeometry,
    /// Fallback eye-to-screen distance for samples that lack one.
    pub eye_distance_mm: f64,
}

impl ViewGeometry {
    pub fn new(screen: ScreenGeometry, eye_distance_mm: f64) -> Result<Self, GazeError> {
        if !screen.has_physical_size() || !(eye_distance_mm > 0.0) {
            return Err(GazeError::Geometry);
        }
        Ok(ViewGeometry { screen, eye_distance_mm })
    }

    /// Visual angle in degrees subtended by a chord of `chord_mm` at `distance_mm`.
    pub fn chord_angle_deg(chord_mm: f64, distance_mm: f64) -> f64 {
        (2.0 * (chord_mm / (2.0 * distance_mm)).atan()).to_degrees()
    }

    /// Inverse of [`ViewGeometry::chord_angle_deg`].
    pub fn angle_chord_mm(angle_deg: f64, distance_mm: f64) -> f64 {
        2.0 * distance_mm * (angle_deg.to_radians() / 2.0).tan()
    }

    fn norm_chord_mm(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = (b[0] - a[0]) * self.screen.width_mm;
        let dy = (b[1] - a[1]) * self.screen.height_mm;
        dx.hypot(dy)
    }

    fn px_chord_mm(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let (sx, sy) = self.screen.px_per_mm();
        ((b[0] - a[0]) / sx).hypot((b[1] - a[1]) / sy)
    }

    /// Angle between two pixel positions at the fallback distance.
    pub fn px_angle_deg(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        Self::chord_angle_deg(self.px_chord_mm(a, b), self.eye_distance_mm)
    }

    pub fn norm_to_px(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.screen.width_px, p[1] * self.screen.height_px]
    }
}

/// Linear interpolation over runs of invalid samples whose flanking valid
/// samples are at most `max_gap_ms` apart. Each eye is handled separately;
/// runs without a valid sample on both sides are left alone.
pub fn fill_gaps(samples: &[GazeSample], max_gap_ms: f64) -> Vec<GazeSample> {
    let mut out = samples.to_vec();
    for eye in 0..2 {
        let get = |s: &GazeSample| if eye == 0 { s.left } else { s.right };
        let n = out.len();
        let mut i = 0;
        while i < n {
            if get(&out[i]).valid {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && !get(&out[i]).valid {
                i += 1;
            }
            if start == 0 || i == n {
                continue;
            }
            let (a, b) = (out[start - 1], out[i]);
            let (ea, eb) = (get(&a), get(&b));
            if b.t_ms - a.t_ms > max_gap_ms {
                continue;
            }
            for s in out.iter_mut().take(i).skip(start) {
                let f = (s.t_ms - a.t_ms) / (b.t_ms - a.t_ms);
                let filled = crate::dataset::EyeSample {
                    x: ea.x + f * (eb.x - ea.x),
                    y: ea.y + f * (eb.y - ea.y),
                    valid: true,
                };
                if eye == 0 {
                    s.left = filled;
                } else {
                    s.right = filled;
                }
            }
        }
    }
    out
}

/// Averages both eyes when both are valid, otherwise keeps whichever is.
pub fn select_eye(samples: &[GazeSample]) -> Vec<CyclopeanSample> {
    samples
        .iter()
        .map(|s| {
            let pos = match (s.left.valid, s.right.valid) {
                (true, true) => Some([0.5 * (s.left.x + s.right.x), 0.5 * (s.left.y + s.right.y)]),
                (true, false) => Some([s.left.x, s.left.y]),
                (false, true) => Some([s.right.x, s.right.y]),
                (false, false) => None,
            };
            CyclopeanSample { t_ms: s.t_ms, pos, eye_distance_mm: s.eye_distance_mm }
        })
        .collect()
}

/// Centered moving median per coordinate. Near the stream edges the window
/// shrinks symmetrically; invalid samples are skipped and stay invalid.
pub fn smooth_median(samples: &[CyclopeanSample], window: usize) -> Vec<CyclopeanSample> {
    let n = samples.len();
    let half = window / 2;
    let mut xs = Vec::with_capacity(window);
    let mut ys = Vec::with_capacity(window);
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.pos.is_none() {
                return *s;
            }
            let h = half.min(i).min(n - 1 - i);
            xs.clear();
            ys.clear();
            for w in &samples[i - h..=i + h] {
                if let Some(p) = w.pos {
                    xs.push(p[0]);
                    ys.push(p[1]);
                }
            }
            let x = median_in_place(&mut xs).expect("window holds the sample itself");
            let y = median_in_place(&mut ys).expect("window holds the sample itself");
            CyclopeanSample { pos: Some([x, y]), ..*s }
        })
        .collect()
}

/// Number of samples spanned by the velocity window; never fewer than two.
fn window_samples(window_ms: f64, dt_ms: f64) -> usize {
    ((window_ms / dt_ms).round() as usize + 1).max(2)
}

/// Angular velocity (deg/s) per sample. The velocity of sample `i` is the
/// visual angle between the window endpoints divided by their time
/// difference. Samples whose window is incomplete inherit the nearest
/// computable value within their run of valid data. Invalid samples get `None`.
pub fn compute_velocity(
    samples: &[CyclopeanSample],
    geometry: &ViewGeometry,
    window_ms: f64,
) -> Result<Vec<Option<f64>>, GazeError> {
    if !geometry.screen.has_physical_size() {
        return Err(GazeError::Geometry);
    }
    let n = samples.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.t_ms).collect();
    let dt = median_interval(&ts).unwrap_or(1000.0 / crate::dataset::GAZE_RATE_HZ);
    let nw = window_samples(window_ms, dt);
    let back = (nw - 1) / 2;
    let fwd = nw - 1 - back;

    let distance = |s: &CyclopeanSample| {
        if s.eye_distance_mm.is_finite() && s.eye_distance_mm > 0.0 {
            s.eye_distance_mm
        } else {
            geometry.eye_distance_mm
        }
    };

    let mut raw: Vec<Option<f64>> = vec![None; n];
    for i in 0..n {
        if samples[i].pos.is_none() || i < back || i + fwd >= n {
            continue;
        }
        let (a, b) = (&samples[i - back], &samples[i + fwd]);
        if let (Some(pa), Some(pb)) = (a.pos, b.pos) {
            let d = 0.5 * (distance(a) + distance(b));
            let ang = ViewGeometry::chord_angle_deg(geometry.norm_chord_mm(pa, pb), d);
            raw[i] = Some(ang / ((b.t_ms - a.t_ms) / 1000.0));
        }
    }

    // fill incomplete windows from the nearest computed value in the same valid run
    let mut out = raw.clone();
    let mut i = 0;
    while i < n {
        if samples[i].pos.is_none() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && samples[i].pos.is_some() {
            i += 1;
        }
        let run = start..i;
        let computed: Vec<usize> = run.clone().filter(|&k| raw[k].is_some()).collect();
        if computed.is_empty() {
            continue;
        }
        for k in run {
            if raw[k].is_none() {
                let nearest = computed.iter().min_by_key(|&&c| (c.abs_diff(k), c)).copied().unwrap();
                out[k] = raw[nearest];
            }
        }
    }
    Ok(out)
}

/// Per-sample classification: strictly below the threshold is a fixation sample.
pub fn ivt_classify(velocities: &[Option<f64>], threshold_deg_s: f64) -> Vec<SampleClass> {
    velocities
        .iter()
        .map(|v| match v {
            Some(v) if *v < threshold_deg_s => SampleClass::Fixation,
            Some(_) => SampleClass::Saccade,
            None => SampleClass::Gap,
        })
        .collect()
}

/// Groups contiguous runs of equally classified samples into events.
/// Fixation durations count every member sample as one sampling interval,
/// estimated from the valid samples.
pub fn runs_to_events(
    samples: &[CyclopeanSample],
    classes: &[SampleClass],
    geometry: &ViewGeometry,
) -> (Vec<Fixation>, Vec<Saccade>) {
    let ts: Vec<f64> = samples.iter().filter(|s| s.pos.is_some()).map(|s| s.t_ms).collect();
    let dt = median_interval(&ts).unwrap_or(1000.0 / crate::dataset::GAZE_RATE_HZ);
    let mut fixations = Vec::new();
    let mut saccades = Vec::new();
    let n = classes.len();
    let mut i = 0;
    while i < n {
        let class = classes[i];
        let start = i;
        while i < n && classes[i] == class {
            i += 1;
        }
        let (t0, t_last) = (samples[start].t_ms, samples[i - 1].t_ms);
        match class {
            SampleClass::Fixation => {
                let (mut sx, mut sy) = (0.0, 0.0);
                for s in &samples[start..i] {
                    let p = geometry.norm_to_px(s.pos.expect("fixation samples are valid"));
                    sx += p[0];
                    sy += p[1];
                }
                let k = (i - start) as f64;
                fixations.push(Fixation {
                    onset_ms: t0,
                    duration_ms: t_last - t0 + dt,
                    centroid_px: [sx / k, sy / k],
                    sample_count: i - start,
                    trial_id: None,
                });
            }
            SampleClass::Saccade => saccades.push(Saccade { onset_ms: t0, offset_ms: t_last + dt }),
            SampleClass::Gap => {}
        }
    }
    (fixations, saccades)
}

/// Merges neighbouring fixations separated by at most `max_gap_ms` whose
/// centroids lie within `max_angle_deg`, repeating until nothing changes.
pub fn merge_fixations(
    fixations: &[Fixation],
    max_gap_ms: f64,
    max_angle_deg: f64,
    geometry: &ViewGeometry,
) -> Vec<Fixation> {
    let mut cur = fixations.to_vec();
    loop {
        let mut out: Vec<Fixation> = Vec::with_capacity(cur.len());
        let mut changed = false;
        for f in cur {
            if let Some(prev) = out.last_mut() {
                let gap = f.onset_ms - prev.offset_ms();
                if gap <= max_gap_ms && geometry.px_angle_deg(prev.centroid_px, f.centroid_px) <= max_angle_deg {
                    let (na, nb) = (prev.sample_count as f64, f.sample_count as f64);
                    let tot = na + nb;
                    prev.centroid_px = [
                        (prev.centroid_px[0] * na + f.centroid_px[0] * nb) / tot,
                        (prev.centroid_px[1] * na + f.centroid_px[1] * nb) / tot,
                    ];
                    prev.duration_ms = f.offset_ms() - prev.onset_ms;
                    prev.sample_count += f.sample_count;
                    changed = true;
                    continue;
                }
            }
            out.push(f);
        }
        cur = out;
        if !changed {
            return cur;
        }
    }
}

/// Full detection chain. Returns fixations and the saccades that do not fall
/// inside a merged fixation; events are time ordered and carry no trial id.
pub fn detect_fixations(
    samples: &[GazeSample],
    params: &IvtParams,
    geometry: &ViewGeometry,
) -> Result<(Vec<Fixation>, Vec<Saccade>), GazeError> {
    params.validate()?;
    if !geometry.screen.has_physical_size() {
        return Err(GazeError::Geometry);
    }
    let filled = fill_gaps(samples, params.max_gap_ms);
    let cyclopean = select_eye(&filled);
    let smoothed = smooth_median(&cyclopean, params.median_window_samples);
    let velocity = compute_velocity(&smoothed, geometry, params.velocity_window_ms)?;
    let classes = ivt_classify(&velocity, params.velocity_threshold_deg_s);
    let (fixations, saccades) = runs_to_events(&smoothed, &classes, geometry);
    let merged = merge_fixations(&fixations, params.merge_max_gap_ms, params.merge_max_angle_deg, geometry);

    let saccades: Vec<Saccade> = saccades
        .into_iter()
        .filter(|s| !merged.iter().any(|f| s.onset_ms >= f.onset_ms && s.offset_ms <= f.offset_ms()))
        .collect();
    let fixations = merged.into_iter().filter(|f| f.duration_ms >= params.min_fixation_ms).collect();
    Ok((fixations, saccades))
}

/// Tags each fixation with the trial whose search window contains its onset.
pub fn assign_trials(fixations: &mut [Fixation], events: &[TrialEvent]) {
    for f in fixations.iter_mut() {
        f.trial_id = events
            .iter()
            .find(|e| f.onset_ms >= e.search_onset_ms && f.onset_ms < e.search_end_ms)
            .map(|e| e.trial_id);
    }
}

/// Runs detection on a whole recording and assigns trial ids.
pub fn detect_for_recording(
    rec: &crate::dataset::Recording,
    params: &IvtParams,
) -> Result<(Vec<Fixation>, Vec<Saccade>), GazeError> {
    let d = rec.median_eye_distance_mm().ok_or(GazeError::Geometry)?;
    let geometry = ViewGeometry::new(rec.screen, d)?;
    let (mut fixations, saccades) = detect_fixations(&rec.gaze, params, &geometry)?;
    assign_trials(&mut fixations, &rec.events);
    Ok((fixations, saccades))
}
