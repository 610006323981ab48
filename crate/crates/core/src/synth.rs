//! Synthetic multimodal recordings with known ground truth.
//!
//! Each participant gets a visual-search session: scanpaths of fixations and
//! main-sequence saccades sampled at 60 Hz, and 20-channel EEG at 500 Hz made
//! of 1/f background sources, a frontal blink source, sensor and line noise,
//! and a parietal late positive bump time-locked to target fixation onsets.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    quantize6, quantize_time, write_recording, BBox, DatasetError, EegStream, EyeSample, GazeSample, Montage,
    Outcome, Recording, SceneDomain, ScreenGeometry, TrialEvent, BBOX_BUFFER_PX, EEG_RATE_HZ, GAZE_RATE_HZ,
};
use crate::gaze::ViewGeometry;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub trials_per_participant: usize,
    /// Share of trials shown in workshop scenes; the rest are desktop scenes.
    pub workshop_fraction: f64,
    /// Inclusive range of fixations per clicked trial, counting the target.
    pub fixations_per_trial: [usize; 2],
    pub skip_fraction: f64,
    pub target_duration_ms: f64,
    pub nontarget_duration_ms: f64,
    pub duration_shape: f64,
    pub min_duration_ms: f64,
    pub max_duration_ms: f64,
    /// Longer target fixations; only active while `effect_uv > 0`.
    pub duration_effect: bool,
    pub effect_uv: f64,
    pub effect_peak_ms: f64,
    pub effect_width_ms: f64,
    /// Standard deviation of the per-trial effect latency.
    pub effect_jitter_ms: f64,
    pub n_background_sources: usize,
    pub background_uv: f64,
    /// Width (chord distance on the unit sphere) of background source patterns.
    pub pattern_width: f64,
    /// Per-participant jitter of background source positions.
    pub pattern_jitter: f64,
    /// White noise per channel.
    pub sensor_noise_uv: f64,
    /// Independent 1/f noise per channel.
    pub channel_noise_uv: f64,
    pub line_noise_uv: f64,
    pub blink_rate_hz: f64,
    pub blink_uv: f64,
    pub gaze_jitter_deg: f64,
    /// Probability that one eye drops out on a given sample.
    pub dropout_prob: f64,
    pub eye_distance_mm: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_participants: 10,
            trials_per_participant: 60,
            workshop_fraction: 0.5,
            fixations_per_trial: [3, 7],
            skip_fraction: 0.05,
            target_duration_ms: 280.0,
            nontarget_duration_ms: 200.0,
            duration_shape: 6.0,
            min_duration_ms: 80.0,
            max_duration_ms: 1000.0,
            duration_effect: true,
            effect_uv: 4.0,
            effect_peak_ms: 350.0,
            effect_width_ms: 300.0,
            effect_jitter_ms: 150.0,
            n_background_sources: 20,
            background_uv: 6.0,
            pattern_width: 0.8,
            pattern_jitter: 0.1,
            sensor_noise_uv: 0.5,
            channel_noise_uv: 0.0,
            line_noise_uv: 2.0,
            blink_rate_hz: 0.2,
            blink_uv: 80.0,
            gaze_jitter_deg: 0.15,
            dropout_prob: 0.01,
            eye_distance_mm: 600.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.n_participants == 0 || self.trials_per_participant == 0 {
            return bad("n_participants and trials_per_participant must be positive");
        }
        let [lo, hi] = self.fixations_per_trial;
        if lo < 1 || hi < lo {
            return bad("fixations_per_trial must be an increasing range starting at 1 or more");
        }
        if !(0.0..=1.0).contains(&self.workshop_fraction) || !(0.0..1.0).contains(&self.skip_fraction) {
            return bad("workshop_fraction must lie in [0, 1] and skip_fraction in [0, 1)");
        }
        if !(self.effect_uv >= 0.0) {
            return bad("effect_uv must be non-negative");
        }
        let positive = [
            self.target_duration_ms,
            self.nontarget_duration_ms,
            self.duration_shape,
            self.min_duration_ms,
            self.effect_peak_ms,
            self.effect_width_ms,
            self.pattern_width,
            self.eye_distance_mm,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_duration_ms < self.min_duration_ms {
            return bad("durations, widths and distances must be positive");
        }
        let non_negative = [
            self.background_uv,
            self.sensor_noise_uv,
            self.channel_noise_uv,
            self.effect_jitter_ms,
            self.line_noise_uv,
            self.blink_rate_hz,
            self.blink_uv,
            self.gaze_jitter_deg,
            self.pattern_jitter,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) || !(0.0..0.5).contains(&self.dropout_prob) {
            return bad("noise levels must be non-negative and dropout_prob below 0.5");
        }
        Ok(())
    }

    /// Whether the class effects are switched on.
    pub fn has_effect(&self) -> bool {
        self.effect_uv > 0.0
    }

    fn target_mean_ms(&self) -> f64 {
        if self.has_effect() && self.duration_effect {
            self.target_duration_ms
        } else {
            self.nontarget_duration_ms
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    Nontarget,
    Target,
    /// After the target, before the trial ends.
    PostTarget,
    /// Between trials.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFixation {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub position_px: [f64; 2],
    pub kind: PlantedKind,
    pub trial_id: Option<u32>,
}

impl PlantedFixation {
    pub fn duration_ms(&self) -> f64 {
        self.offset_ms - self.onset_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub participant_id: String,
    pub seed: u64,
    pub effect_uv: f64,
    pub duration_effect: bool,
    pub fixations: Vec<PlantedFixation>,
    /// Names of the columns of `forward` and of the rows in `sources.csv`.
    pub source_names: Vec<String>,
    /// channels × sources mixing matrix.
    pub forward: Vec<Vec<f64>>,
    pub blink_onsets_ms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthParticipant {
    pub recording: Recording,
    pub truth: Truth,
    /// sources × EEG samples, in `truth.source_names` order.
    pub sources: Array2<f64>,
}

const SCREEN_MARGIN_PX: f64 = 60.0;
const PRE_ROLL_MS: f64 = 800.0;
const TAIL_MS: f64 = 2000.0;
const MIN_SACCADE_DEG: f64 = 3.0;
const MAX_SACCADE_DEG: f64 = 20.0;
/// Distance kept between non-target fixations and the target box.
const BBOX_CLEARANCE_DEG: f64 = 1.5;
const BLINK_MS: f64 = 200.0;

/// Saccade duration for amplitude `a` degrees.
pub fn main_sequence_ms(amplitude_deg: f64) -> f64 {
    2.2 * amplitude_deg + 21.0
}

/// Fraction of a raised-cosine-velocity saccade completed at phase `u ∈ [0, 1]`.
fn saccade_progress(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u - (TAU * u).sin() / TAU
}

/// Scanpath segment: either a fixation at a point or a saccade between points.
#[derive(Debug, Clone, Copy)]
enum Segment {
    Fix { t1: f64, p: [f64; 2] },
    Sac { t0: f64, t1: f64, from: [f64; 2], to: [f64; 2] },
}

impl Segment {
    fn end(&self) -> f64 {
        match *self {
            Segment::Fix { t1, .. } | Segment::Sac { t1, .. } => t1,
        }
    }

    fn position(&self, t: f64) -> [f64; 2] {
        match *self {
            Segment::Fix { p, .. } => p,
            Segment::Sac { t0, t1, from, to } => {
                let f = saccade_progress((t - t0) / (t1 - t0));
                [from[0] + (to[0] - from[0]) * f, from[1] + (to[1] - from[1]) * f]
            }
        }
    }
}

struct Scanpath {
    segments: Vec<Segment>,
    planted: Vec<PlantedFixation>,
    events: Vec<TrialEvent>,
    target_onsets: Vec<f64>,
}

struct PathBuilder<'a> {
    cfg: &'a SynthConfig,
    geom: ViewGeometry,
    px_per_deg: f64,
    t: f64,
    pos: [f64; 2],
    segments: Vec<Segment>,
    planted: Vec<PlantedFixation>,
}

impl PathBuilder<'_> {
    fn duration(&self, rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        let shape = self.cfg.duration_shape;
        let g = Gamma::new(shape, mean / shape).expect("validated shape");
        g.sample(rng).clamp(self.cfg.min_duration_ms, self.cfg.max_duration_ms)
    }

    fn saccade_to(&mut self, to: [f64; 2]) {
        let amp = self.geom.px_angle_deg(self.pos, to);
        let d = main_sequence_ms(amp);
        self.segments.push(Segment::Sac { t0: self.t, t1: self.t + d, from: self.pos, to });
        self.t += d;
        self.pos = to;
    }

    fn fixate(&mut self, dur: f64, kind: PlantedKind, trial: Option<u32>) {
        self.segments.push(Segment::Fix { t1: self.t + dur, p: self.pos });
        self.planted.push(PlantedFixation {
            onset_ms: self.t,
            offset_ms: self.t + dur,
            position_px: self.pos,
            kind,
            trial_id: trial,
        });
        self.t += dur;
    }

    /// A random screen point at a saccade-sized distance from the current
    /// position that keeps clear of `avoid`.
    fn random_point(&self, rng: &mut ChaCha8Rng, avoid: Option<&BBox>) -> [f64; 2] {
        let s = &self.geom.screen;
        let clearance = BBOX_CLEARANCE_DEG * self.px_per_deg;
        for _ in 0..10_000 {
            let p = [
                rng.random_range(SCREEN_MARGIN_PX..s.width_px - SCREEN_MARGIN_PX),
                rng.random_range(SCREEN_MARGIN_PX..s.height_px - SCREEN_MARGIN_PX),
            ];
            let amp = self.geom.px_angle_deg(self.pos, p);
            if !(MIN_SACCADE_DEG..=MAX_SACCADE_DEG).contains(&amp) {
                continue;
            }
            if avoid.is_some_and(|b| b.expanded(clearance).contains(p[0], p[1])) {
                continue;
            }
            return p;
        }
        unreachable!("screen too small for the scanpath constraints")
    }
}

fn build_scanpath(cfg: &SynthConfig, geom: ViewGeometry, rng: &mut ChaCha8Rng) -> Scanpath {
    let s = geom.screen;
    let px_per_deg = ViewGeometry::angle_chord_mm(1.0, geom.eye_distance_mm) * s.px_per_mm().0;
    let center = [s.width_px / 2.0, s.height_px / 2.0];
    let mut b = PathBuilder {
        cfg,
        geom,
        px_per_deg,
        t: 0.0,
        pos: center,
        segments: Vec::new(),
        planted: Vec::new(),
    };
    b.fixate(PRE_ROLL_MS, PlantedKind::Interval, None);

    let n = cfg.trials_per_participant;
    let n_workshop = (cfg.workshop_fraction * n as f64).round() as usize;
    // scenes come in blocks; block order is shuffled per participant
    let block = 10usize;
    let mut domains: Vec<SceneDomain> = Vec::with_capacity(n);
    let mut blocks: Vec<(SceneDomain, usize)> = Vec::new();
    let mut left = [n_workshop, n - n_workshop];
    while left[0] + left[1] > 0 {
        for (k, d) in [SceneDomain::Workshop, SceneDomain::Desktop].into_iter().enumerate() {
            let take = left[k].min(block);
            if take > 0 {
                blocks.push((d, take));
                left[k] -= take;
            }
        }
    }
    for i in (1..blocks.len()).rev() {
        let j = rng.random_range(0..=i);
        blocks.swap(i, j);
    }
    for (d, k) in blocks {
        domains.extend(std::iter::repeat_n(d, k));
    }

    let mut events = Vec::with_capacity(n);
    let mut target_onsets = Vec::new();
    for (trial, &domain) in domains.iter().enumerate() {
        let trial_id = trial as u32 + 1;
        let skipped = rng.random::<f64>() < cfg.skip_fraction;
        // target object and its buffered box
        let (w, h) = (rng.random_range(60.0..160.0), rng.random_range(60.0..160.0));
        let bbox = loop {
            let x0 = rng.random_range(SCREEN_MARGIN_PX..s.width_px - SCREEN_MARGIN_PX - w);
            let y0 = rng.random_range(SCREEN_MARGIN_PX..s.height_px - SCREEN_MARGIN_PX - h);
            let obj = BBox { x0, y0, x1: x0 + w, y1: y0 + h };
            let c = [(obj.x0 + obj.x1) / 2.0, (obj.y0 + obj.y1) / 2.0];
            let amp = geom.px_angle_deg(b.pos, c);
            let clear = obj.expanded(BBOX_BUFFER_PX + BBOX_CLEARANCE_DEG * px_per_deg);
            if amp >= MIN_SACCADE_DEG + 2.0 && !clear.contains(b.pos[0], b.pos[1]) {
                break obj;
            }
        };
        let target_box = bbox.expanded(BBOX_BUFFER_PX);
        let onset = b.t;
        let [lo, hi] = cfg.fixations_per_trial;
        let n_fix = rng.random_range(lo..=hi);
        for _ in 0..n_fix - 1 {
            let p = b.random_point(rng, Some(&target_box));
            b.saccade_to(p);
            let d = b.duration(rng, cfg.nontarget_duration_ms);
            b.fixate(d, PlantedKind::Nontarget, Some(trial_id));
        }
        let end;
        if skipped {
            end = b.t + 100.0;
        } else {
            // land well inside the object
            let p = loop {
                let p = [
                    rng.random_range(bbox.x0 + 0.25 * w..bbox.x1 - 0.25 * w),
                    rng.random_range(bbox.y0 + 0.25 * h..bbox.y1 - 0.25 * h),
                ];
                if geom.px_angle_deg(b.pos, p) >= MIN_SACCADE_DEG {
                    break p;
                }
                // previous fixation too close; step away first
                let away = b.random_point(rng, Some(&target_box));
                b.saccade_to(away);
                let d = b.duration(rng, cfg.nontarget_duration_ms);
                b.fixate(d, PlantedKind::Nontarget, Some(trial_id));
            };
            b.saccade_to(p);
            target_onsets.push(b.t);
            let d = b.duration(rng, cfg.target_mean_ms());
            b.fixate(d, PlantedKind::Target, Some(trial_id));
            let click = b.t + 150.0;
            let away = b.random_point(rng, Some(&target_box));
            b.saccade_to(away);
            let d = b.duration(rng, cfg.nontarget_duration_ms).max(click - b.t + 50.0);
            b.fixate(d, PlantedKind::PostTarget, Some(trial_id));
            end = click;
        }
        events.push(TrialEvent {
            trial_id,
            scene_id: format!("{}{:02}", domain.short(), trial_id),
            scene_domain: domain,
            target_id: format!("obj{trial_id:03}"),
            target_bbox: target_box,
            search_onset_ms: quantize_time(onset),
            search_end_ms: quantize_time(end),
            outcome: if skipped { Outcome::Skipped } else { Outcome::Clicked },
            n_objects: Some(rng.random_range(5..=30)),
        });
        // inter-trial fixation back near the centre
        let home = [center[0] + rng.random_range(-40.0..40.0), center[1] + rng.random_range(-40.0..40.0)];
        let home = if geom.px_angle_deg(b.pos, home) >= MIN_SACCADE_DEG {
            home
        } else {
            b.random_point(rng, None)
        };
        b.saccade_to(home);
        let d = rng.random_range(400.0..700.0);
        b.fixate(d, PlantedKind::Interval, None);
    }
    Scanpath { segments: b.segments, planted: b.planted, events, target_onsets }
}

fn sample_gaze(cfg: &SynthConfig, geom: &ViewGeometry, path: &Scanpath, rng: &mut ChaCha8Rng) -> Vec<GazeSample> {
    let total = path.segments.last().map(|s| s.end()).unwrap_or(0.0) + TAIL_MS;
    let dt = 1000.0 / GAZE_RATE_HZ;
    let px_per_deg = ViewGeometry::angle_chord_mm(1.0, geom.eye_distance_mm) * geom.screen.px_per_mm().0;
    let jitter = Normal::new(0.0, cfg.gaze_jitter_deg * px_per_deg).expect("non-negative jitter");
    let mut seg = 0;
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * dt;
        if t >= total {
            break;
        }
        while seg + 1 < path.segments.len() && t >= path.segments[seg].end() {
            seg += 1;
        }
        let p = path.segments[seg].position(t);
        let jx = jitter.sample(rng);
        let jy = jitter.sample(rng);
        let nx = ((p[0] + jx) / geom.screen.width_px).clamp(0.0, 1.0);
        let ny = ((p[1] + jy) / geom.screen.height_px).clamp(0.0, 1.0);
        let eye = EyeSample::new(1.0 - quantize6(1.0 - nx), quantize6(ny));
        let left = if rng.random::<f64>() < cfg.dropout_prob { EyeSample::invalid() } else { eye };
        let right = if rng.random::<f64>() < cfg.dropout_prob { EyeSample::invalid() } else { eye };
        out.push(GazeSample { t_ms: quantize_time(t), left, right, eye_distance_mm: quantize6(cfg.eye_distance_mm) });
        k += 1;
    }
    out
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn random_upper_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut v = [gauss(rng), gauss(rng), gauss(rng)];
    v[2] = v[2].abs() + 0.2;
    unit(v)
}

fn gaussian_pattern(positions: &[[f64; 3]], src: [f64; 3], width: f64) -> Vec<f64> {
    let g: Vec<f64> = positions
        .iter()
        .map(|e| {
            let d2 = (e[0] - src[0]).powi(2) + (e[1] - src[1]).powi(2) + (e[2] - src[2]).powi(2);
            (-d2 / (2.0 * width * width)).exp()
        })
        .collect();
    let m = g.iter().copied().fold(0.0, f64::max);
    g.into_iter().map(|v| v / m).collect()
}

/// Unit-variance noise with power spectral density ∝ 1/f.
pub fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(gauss(rng), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64;
        *c = if f == 0.0 { Complex64::new(0.0, 0.0) } else { *c / f.sqrt() };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let m = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    x.into_iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect()
}

/// Half-cosine bump of unit height centred at `peak_ms` after each onset.
pub fn effect_waveform(t_ms: &[f64], onsets: &[f64], peak_ms: f64, width_ms: f64) -> Vec<f64> {
    let mut out = vec![0.0; t_ms.len()];
    let half = width_ms / 2.0;
    for &o in onsets {
        let c = o + peak_ms;
        let lo = t_ms.partition_point(|&t| t < c - half);
        let hi = t_ms.partition_point(|&t| t <= c + half);
        for i in lo..hi {
            out[i] += (PI * (t_ms[i] - c) / width_ms).cos();
        }
    }
    out
}

/// Parietal loadings of the effect source.
pub const EFFECT_LOADINGS: [(&str, f64); 3] = [("Pz", 1.0), ("P3", 0.8), ("P4", 0.8)];
/// Frontal loadings of the blink source.
pub const BLINK_LOADINGS: [(&str, f64); 7] =
    [("Fp1", 1.0), ("Fp2", 1.0), ("F7", 0.45), ("F8", 0.45), ("F3", 0.35), ("Fz", 0.3), ("F4", 0.35)];

fn loadings(montage: &Montage, table: &[(&str, f64)]) -> Vec<f64> {
    montage
        .names
        .iter()
        .map(|n| table.iter().find(|(c, _)| c.eq_ignore_ascii_case(n)).map(|&(_, w)| w).unwrap_or(0.0))
        .collect()
}

/// Background source directions shared by all participants of a dataset.
fn population_sources(cfg: &SynthConfig) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_background_sources).map(|_| random_upper_direction(&mut rng)).collect()
}

fn participant_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Generates one participant (0-based `index`).
pub fn generate_participant(cfg: &SynthConfig, index: usize) -> Result<SynthParticipant, SynthError> {
    cfg.validate()?;
    let mut rng = participant_rng(cfg.seed, index);
    let screen = ScreenGeometry::default();
    let geom = ViewGeometry::new(screen, cfg.eye_distance_mm).map_err(|e| SynthError::Config(e.to_string()))?;
    let path = build_scanpath(cfg, geom, &mut rng);
    let gaze = sample_gaze(cfg, &geom, &path, &mut rng);

    let montage = Montage::standard();
    let nc = montage.names.len();
    let total_ms = gaze.last().map(|g| g.t_ms).unwrap_or(0.0) + 1000.0 / GAZE_RATE_HZ;
    let dt = 1000.0 / EEG_RATE_HZ;
    let ns = (total_ms / dt).floor() as usize;
    let t_ms: Vec<f64> = (0..ns).map(|i| i as f64 * dt).collect();

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut signals: Vec<Vec<f64>> = Vec::new();
    for (k, base) in population_sources(cfg).into_iter().enumerate() {
        let j = [
            base[0] + cfg.pattern_jitter * gauss(&mut rng),
            base[1] + cfg.pattern_jitter * gauss(&mut rng),
            base[2].abs() + cfg.pattern_jitter * gauss(&mut rng),
        ];
        let dir = unit(j);
        let pos = [0.8 * dir[0], 0.8 * dir[1], 0.8 * dir[2]];
        names.push(format!("bg{k:02}"));
        columns.push(gaussian_pattern(&montage.positions, pos, cfg.pattern_width));
        signals.push(pink_noise(ns, &mut rng).into_iter().map(|v| v * cfg.background_uv).collect());
    }

    names.push("effect".into());
    columns.push(loadings(&montage, &EFFECT_LOADINGS));
    let lags: Vec<f64> = path
        .target_onsets
        .iter()
        .map(|&o| o + cfg.effect_jitter_ms * gauss(&mut rng))
        .collect();
    let bump = effect_waveform(&t_ms, &lags, cfg.effect_peak_ms, cfg.effect_width_ms);
    signals.push(bump.into_iter().map(|v| v * cfg.effect_uv).collect());

    let mut blink_onsets = Vec::new();
    if cfg.blink_rate_hz > 0.0 {
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random::<f64>().max(1e-12);
            t += -u.ln() / cfg.blink_rate_hz * 1000.0;
            if t + BLINK_MS >= total_ms {
                break;
            }
            blink_onsets.push(t);
        }
    }
    names.push("blink".into());
    columns.push(loadings(&montage, &BLINK_LOADINGS));
    let blink = effect_waveform(&t_ms, &blink_onsets, BLINK_MS / 2.0, BLINK_MS);
    signals.push(blink.into_iter().map(|v| v * cfg.blink_uv).collect());

    let n_src = signals.len();
    let forward = Array2::from_shape_fn((nc, n_src), |(c, k)| columns[k][c]);
    let sources = Array2::from_shape_fn((n_src, ns), |(k, i)| signals[k][i]);
    let mut data = forward.dot(&sources);
    let line_phase: Vec<f64> = (0..nc).map(|_| rng.random_range(0.0..TAU)).collect();
    let offsets: Vec<f64> = (0..nc).map(|_| rng.random_range(-20.0..20.0)).collect();
    let noise = Normal::new(0.0, cfg.sensor_noise_uv.max(0.0)).expect("non-negative noise");
    for c in 0..nc {
        if cfg.channel_noise_uv > 0.0 {
            let pink = pink_noise(ns, &mut rng);
            data.row_mut(c).zip_mut_with(&ndarray::Array1::from(pink), |d, p| *d += cfg.channel_noise_uv * p);
        }
        for i in 0..ns {
            let line = cfg.line_noise_uv * (TAU * 50.0 * t_ms[i] / 1000.0 + line_phase[c]).sin();
            let v = data[(c, i)] + line + offsets[c] + noise.sample(&mut rng);
            data[(c, i)] = quantize6(v);
        }
    }

    let participant_id = format!("p{:02}", index + 1);
    let recording = Recording {
        participant_id: participant_id.clone(),
        screen,
        gaze,
        eeg: EegStream { t_ms, data },
        channels: montage.names.clone(),
        montage,
        events: path.events,
        montage_overrides: BTreeMap::new(),
    };
    recording.validate()?;
    let truth = Truth {
        participant_id,
        seed: cfg.seed,
        effect_uv: cfg.effect_uv,
        duration_effect: cfg.has_effect() && cfg.duration_effect,
        fixations: path.planted,
        source_names: names,
        forward: forward.outer_iter().map(|r| r.to_vec()).collect(),
        blink_onsets_ms: blink_onsets,
    };
    Ok(SynthParticipant { recording, truth, sources })
}

/// Generates all participants, in parallel, each from its own RNG stream.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthParticipant>, SynthError> {
    cfg.validate()?;
    (0..cfg.n_participants).into_par_iter().map(|i| generate_participant(cfg, i)).collect()
}

/// Writes `p01/`, `p02/`, … under `out`, each a dataset directory plus
/// `truth.json` and `sources.csv`. Returns the participant directories.
pub fn write_dataset(participants: &[SynthParticipant], out: impl AsRef<Path>) -> Result<Vec<PathBuf>, SynthError> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    participants
        .par_iter()
        .map(|p| {
            let dir = out.join(&p.recording.participant_id);
            write_recording(&p.recording, &dir)?;
            let mut truth = serde_json::to_string_pretty(&p.truth).map_err(std::io::Error::other)?;
            truth.push('\n');
            fs::write(dir.join("truth.json"), truth)?;
            write_sources(p, &dir.join("sources.csv"))?;
            Ok(dir)
        })
        .collect()
}

fn write_sources(p: &SynthParticipant, path: &Path) -> Result<(), SynthError> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "t_ms,{}", p.truth.source_names.join(","))?;
    let mut line = String::new();
    for (i, &t) in p.recording.eeg.t_ms.iter().enumerate() {
        line.clear();
        line.push_str(&crate::dataset::fmt_time(t));
        for v in p.sources.column(i) {
            line.push(',');
            line.push_str(&crate::dataset::fmt_sig(*v, 6));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(dir: impl AsRef<Path>) -> Result<Truth, SynthError> {
    let s = fs::read_to_string(dir.as_ref().join("truth.json"))?;
    serde_json::from_str(&s).map_err(|e| SynthError::Io(std::io::Error::other(e)))
}

/// Gaze moving horizontally at a constant angular speed, preceded and
/// followed by `hold_ms` of steady fixation. Both eyes valid.
pub fn velocity_sweep(speed_deg_s: f64, sweep_ms: f64, hold_ms: f64, geom: &ViewGeometry) -> Vec<GazeSample> {
    let dt = 1000.0 / GAZE_RATE_HZ;
    let d = geom.eye_distance_mm;
    let x_mm0 = 0.2 * geom.screen.width_mm;
    let center_mm = geom.screen.width_mm / 2.0;
    // angle measured from the perpendicular through the screen centre
    let a0 = ((x_mm0 - center_mm) / d).atan().to_degrees();
    let n = ((2.0 * hold_ms + sweep_ms) / dt).ceil() as usize;
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let s = (t - hold_ms).clamp(0.0, sweep_ms) / 1000.0;
            let a = (a0 + speed_deg_s * s).to_radians();
            let x = (center_mm + d * a.tan()) / geom.screen.width_mm;
            let eye = EyeSample::new(x, 0.5);
            GazeSample { t_ms: t, left: eye, right: eye, eye_distance_mm: d }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { n_participants: 2, trials_per_participant: 8, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_participant(&small(), 0).unwrap();
        let b = generate_participant(&small(), 0).unwrap();
        assert_eq!(a.recording, b.recording);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.recording.events.len(), 8);
        let c = generate_participant(&small(), 1).unwrap();
        assert_ne!(a.recording.gaze, c.recording.gaze);
    }

    #[test]
    fn target_is_first_in_box() {
        let p = generate_participant(&SynthConfig { trials_per_participant: 30, ..small() }, 0).unwrap();
        for ev in &p.recording.events {
            let in_trial: Vec<&PlantedFixation> =
                p.truth.fixations.iter().filter(|f| f.trial_id == Some(ev.trial_id)).collect();
            let first_in = in_trial
                .iter()
                .find(|f| ev.target_bbox.contains(f.position_px[0], f.position_px[1]));
            match ev.outcome {
                Outcome::Clicked => assert_eq!(first_in.unwrap().kind, PlantedKind::Target),
                Outcome::Skipped => assert!(first_in.is_none()),
            }
        }
    }

    #[test]
    fn main_sequence_and_progress() {
        assert_eq!(main_sequence_ms(10.0), 43.0);
        assert_eq!(saccade_progress(0.0), 0.0);
        assert!((saccade_progress(1.0) - 1.0).abs() < 1e-12);
        assert!((saccade_progress(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pink_noise_is_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = pink_noise(4096, &mut rng);
        let v = x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64;
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config() {
        let c = SynthConfig { fixations_per_trial: [3, 2], ..SynthConfig::default() };
        assert!(matches!(c.validate(), Err(SynthError::Config(_))));
        let c = SynthConfig { effect_uv: -1.0, ..SynthConfig::default() };
        assert!(c.validate().is_err());
    }
}
