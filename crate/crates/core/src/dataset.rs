//! Recording data model and the on-disk session format.
//!
//! A session directory holds four files:
//!
//! * `meta.json`: participant id, screen geometry, channel list, optional montage
//! * `gaze.csv`: `t_ms,lx,ly,lvalid,rx,ry,rvalid,eye_dist_mm`
//! * `eeg.csv`: `t_ms` followed by one column per channel (µV)
//! * `events.jsonl`: one [`TrialEvent`] per line
//!
//! Gaze coordinates in `gaze.csv` follow the eye tracker's convention: normalized,
//! origin at the top-right corner with x growing leftwards. They are flipped once
//! at load time so that every in-memory coordinate uses the usual top-left origin
//! (x rightwards, y downwards). Writing flips them back.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal eye-tracker rate.
pub const GAZE_RATE_HZ: f64 = 60.0;
/// Nominal EEG amplifier rate.
pub const EEG_RATE_HZ: f64 = 500.0;
/// Slack around the target object used for the ground-truth bounding box.
pub const BBOX_BUFFER_PX: f64 = 10.0;

const RATE_TOLERANCE: f64 = 0.05;
const COORD_MIN: f64 = -0.2;
const COORD_MAX: f64 = 1.2;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema error in {file}: {msg}")]
    Schema { file: String, msg: String },
    #[error("clock error in {file}: {msg}")]
    Clock { file: String, msg: String },
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("range error: {0}")]
    Range(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    fn schema(file: &str, msg: impl Into<String>) -> Self {
        DatasetError::Schema { file: file.to_string(), msg: msg.into() }
    }
    fn clock(file: &str, msg: impl Into<String>) -> Self {
        DatasetError::Clock { file: file.to_string(), msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// One eye's reading in normalized screen coordinates (top-left origin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeSample {
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl EyeSample {
    pub fn new(x: f64, y: f64) -> Self {
        EyeSample { x, y, valid: true }
    }
    pub fn invalid() -> Self {
        EyeSample { x: 0.0, y: 0.0, valid: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_ms: f64,
    pub left: EyeSample,
    pub right: EyeSample,
    pub eye_distance_mm: f64,
}

/// One row of the EEG stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EegFrame {
    pub t_ms: f64,
    pub values: Vec<f64>,
}

/// Columnar EEG stream: `data` is channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EegStream {
    pub t_ms: Vec<f64>,
    pub data: Array2<f64>,
}

impl EegStream {
    pub fn len(&self) -> usize {
        self.t_ms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }
    pub fn frame(&self, i: usize) -> EegFrame {
        EegFrame { t_ms: self.t_ms[i], values: self.data.column(i).to_vec() }
    }
    /// Sample rate estimated from the median inter-sample interval.
    pub fn sample_rate_hz(&self) -> f64 {
        1000.0 / median_interval(&self.t_ms).unwrap_or(1000.0 / EEG_RATE_HZ)
    }
    pub fn view(&self, range: Range<usize>) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., range])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneDomain {
    Workshop,
    Desktop,
}

impl SceneDomain {
    pub fn short(self) -> &'static str {
        match self {
            SceneDomain::Workshop => "W",
            SceneDomain::Desktop => "D",
        }
    }
}

/// Class of a fixation: on the search target or elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Nontarget,
    Target,
}

impl Label {
    /// `+1` for targets, `-1` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::Target => 1.0,
            Label::Nontarget => -1.0,
        }
    }
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Clicked,
    Skipped,
}

/// Axis-aligned rectangle in pixels, top-left origin. Containment is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
    /// Grows the rectangle by `px` on every side.
    pub fn expanded(&self, px: f64) -> BBox {
        BBox { x0: self.x0 - px, y0: self.y0 - px, x1: self.x1 + px, y1: self.y1 + px }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub trial_id: u32,
    pub scene_id: String,
    pub scene_domain: SceneDomain,
    pub target_id: String,
    /// Target rectangle including the ground-truth buffer.
    pub target_bbox: BBox,
    pub search_onset_ms: f64,
    pub search_end_ms: f64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_objects: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width_px: f64,
    pub height_px: f64,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl ScreenGeometry {
    pub fn px_per_mm(&self) -> (f64, f64) {
        (self.width_px / self.width_mm, self.height_px / self.height_mm)
    }
    pub fn has_physical_size(&self) -> bool {
        self.width_mm > 0.0 && self.height_mm > 0.0
    }
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        ScreenGeometry { width_px: 1920.0, height_px: 1080.0, width_mm: 598.0, height_mm: 336.0 }
    }
}

/// Unit-sphere electrode positions indexed like the channel list.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    pub names: Vec<String>,
    pub positions: Vec<[f64; 3]>,
}

/// The 20-electrode 10-20 layout used by the recordings, as
/// (name, inclination from Cz in degrees, azimuth in degrees).
/// Positive inclination is the right hemisphere; x points to the right ear,
/// y to the nose, z up.
const STANDARD_1020: [(&str, f64, f64); 20] = [
    ("Fp1", -90.0, -72.0),
    ("Fp2", 90.0, 72.0),
    ("F7", -90.0, -36.0),
    ("F3", -60.0, -51.0),
    ("Fz", 45.0, 90.0),
    ("F4", 60.0, 51.0),
    ("F8", 90.0, 36.0),
    ("T7", -90.0, 0.0),
    ("C3", -45.0, 0.0),
    ("Cz", 0.0, 0.0),
    ("C4", 45.0, 0.0),
    ("T8", 90.0, 0.0),
    ("P7", -90.0, 36.0),
    ("P3", -60.0, 51.0),
    ("Pz", 45.0, -90.0),
    ("P4", 60.0, -51.0),
    ("P8", 90.0, -36.0),
    ("O1", -90.0, 72.0),
    ("Oz", 90.0, -90.0),
    ("O2", 90.0, -72.0),
];

impl Montage {
    /// Channel names of the built-in layout, in canonical order.
    pub fn standard_names() -> Vec<String> {
        STANDARD_1020.iter().map(|(n, _, _)| n.to_string()).collect()
    }

    /// Built-in position for a 10-20 name, if known.
    pub fn standard_position(name: &str) -> Option<[f64; 3]> {
        STANDARD_1020.iter().find(|(n, _, _)| n.eq_ignore_ascii_case(name)).map(|&(_, th, ph)| {
            let (th, ph) = (th.to_radians(), ph.to_radians());
            [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
        })
    }

    pub fn standard() -> Montage {
        let names = Montage::standard_names();
        let positions = names.iter().map(|n| Montage::standard_position(n).unwrap()).collect();
        Montage { names, positions }
    }

    /// Positions for `channels`, taking `overrides` first and the built-in table otherwise.
    pub fn for_channels(
        channels: &[String],
        overrides: &BTreeMap<String, [f64; 3]>,
    ) -> std::result::Result<Montage, String> {
        let mut positions = Vec::with_capacity(channels.len());
        for ch in channels {
            let p = overrides
                .get(ch)
                .copied()
                .or_else(|| Montage::standard_position(ch))
                .ok_or_else(|| format!("no montage position for channel {ch}"))?;
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if !(norm > 0.0) {
                return Err(format!("zero montage position for channel {ch}"));
            }
            positions.push([p[0] / norm, p[1] / norm, p[2] / norm]);
        }
        Ok(Montage { names: channels.to_vec(), positions })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub participant_id: String,
    pub screen: ScreenGeometry,
    pub gaze: Vec<GazeSample>,
    pub eeg: EegStream,
    pub channels: Vec<String>,
    pub montage: Montage,
    pub events: Vec<TrialEvent>,
    /// Montage entries that came from `meta.json` rather than the built-in table.
    pub montage_overrides: BTreeMap<String, [f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Gaze,
    Eeg,
}

impl Recording {
    fn timestamps(&self, kind: StreamKind) -> Vec<f64> {
        match kind {
            StreamKind::Gaze => self.gaze.iter().map(|g| g.t_ms).collect(),
            StreamKind::Eeg => self.eeg.t_ms.clone(),
        }
    }

    /// Index range of the samples with `t0 <= t < t1`.
    pub fn slice_stream(&self, t0_ms: f64, t1_ms: f64, kind: StreamKind) -> Result<Range<usize>> {
        match kind {
            StreamKind::Gaze => {
                let ts: Vec<f64> = self.gaze.iter().map(|g| g.t_ms).collect();
                slice_times(&ts, t0_ms, t1_ms)
            }
            StreamKind::Eeg => slice_times(&self.eeg.t_ms, t0_ms, t1_ms),
        }
    }

    pub fn gaze_window(&self, t0_ms: f64, t1_ms: f64) -> Result<&[GazeSample]> {
        let r = self.slice_stream(t0_ms, t1_ms, StreamKind::Gaze)?;
        Ok(&self.gaze[r])
    }

    pub fn eeg_window(&self, t0_ms: f64, t1_ms: f64) -> Result<EegStream> {
        let r = self.slice_stream(t0_ms, t1_ms, StreamKind::Eeg)?;
        Ok(EegStream { t_ms: self.eeg.t_ms[r.clone()].to_vec(), data: self.eeg.view(r).to_owned() })
    }

    /// Time span `[first, last + period)` of a stream.
    pub fn span(&self, kind: StreamKind) -> Option<(f64, f64)> {
        let ts = self.timestamps(kind);
        stream_span(&ts)
    }

    /// Median of the per-sample eye distances, ignoring non-positive entries.
    pub fn median_eye_distance_mm(&self) -> Option<f64> {
        let mut d: Vec<f64> =
            self.gaze.iter().map(|g| g.eye_distance_mm).filter(|d| d.is_finite() && *d > 0.0).collect();
        median_in_place(&mut d)
    }

    /// Checks every invariant of the format.
    pub fn validate(&self) -> Result<()> {
        validate_gaze(&self.gaze)?;
        validate_eeg(&self.eeg, self.channels.len())?;
        if self.montage.names.len() != self.channels.len() {
            return Err(DatasetError::schema("meta.json", "montage does not cover every channel"));
        }
        let gaze_span = self.span(StreamKind::Gaze);
        let eeg_span = self.span(StreamKind::Eeg);
        for ev in &self.events {
            validate_event(ev, &self.screen)?;
            for (name, span) in [("gaze", gaze_span), ("eeg", eeg_span)] {
                let covered = span.is_some_and(|(a, b)| ev.search_onset_ms >= a && ev.search_end_ms <= b);
                if !covered {
                    return Err(DatasetError::Coverage(format!(
                        "trial {} window [{}, {}) not covered by {name} stream {:?}",
                        ev.trial_id, ev.search_onset_ms, ev.search_end_ms, span
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Index range of timestamps in `[t0, t1)` after checking the window lies in
/// the stream span.
pub fn slice_times(ts: &[f64], t0_ms: f64, t1_ms: f64) -> Result<Range<usize>> {
    if !(t0_ms < t1_ms) {
        return Err(DatasetError::Range(format!("empty window [{t0_ms}, {t1_ms})")));
    }
    let (a, b) = stream_span(ts).ok_or_else(|| DatasetError::Range("empty stream".into()))?;
    if t0_ms < a || t1_ms > b {
        return Err(DatasetError::Range(format!("window [{t0_ms}, {t1_ms}) outside stream span [{a}, {b})")));
    }
    let lo = ts.partition_point(|&t| t < t0_ms);
    let hi = ts.partition_point(|&t| t < t1_ms);
    Ok(lo..hi)
}

fn stream_span(ts: &[f64]) -> Option<(f64, f64)> {
    let first = *ts.first()?;
    let last = *ts.last()?;
    let period = median_interval(ts).unwrap_or(0.0);
    Some((first, last + period))
}

pub(crate) fn median_interval(ts: &[f64]) -> Option<f64> {
    if ts.len() < 2 {
        return None;
    }
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    median_in_place(&mut d)
}

pub(crate) fn median_in_place(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn check_clock(file: &str, ts: &[f64], nominal_hz: f64) -> Result<()> {
    if let Some(i) = ts.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(DatasetError::clock(file, format!("timestamp {} at row {} is not increasing", ts[i + 1], i + 2)));
    }
    if let Some(dt) = median_interval(ts) {
        let nominal = 1000.0 / nominal_hz;
        if (dt - nominal).abs() > RATE_TOLERANCE * nominal {
            return Err(DatasetError::clock(
                file,
                format!("median interval {dt:.4} ms deviates from nominal {nominal:.4} ms"),
            ));
        }
    }
    Ok(())
}

fn validate_gaze(gaze: &[GazeSample]) -> Result<()> {
    let ts: Vec<f64> = gaze.iter().map(|g| g.t_ms).collect();
    check_clock("gaze.csv", &ts, GAZE_RATE_HZ)?;
    for (i, g) in gaze.iter().enumerate() {
        for eye in [g.left, g.right] {
            if eye.valid
                && !(eye.x >= COORD_MIN && eye.x <= COORD_MAX && eye.y >= COORD_MIN && eye.y <= COORD_MAX)
            {
                return Err(DatasetError::schema("gaze.csv", format!("row {}: coordinate out of range", i + 2)));
            }
        }
    }
    Ok(())
}

fn validate_eeg(eeg: &EegStream, n_channels: usize) -> Result<()> {
    if eeg.data.nrows() != n_channels || eeg.data.ncols() != eeg.t_ms.len() {
        return Err(DatasetError::schema("eeg.csv", "channel count does not match meta.json"));
    }
    check_clock("eeg.csv", &eeg.t_ms, EEG_RATE_HZ)?;
    if eeg.data.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::schema("eeg.csv", "non-finite amplitude"));
    }
    Ok(())
}

fn validate_event(ev: &TrialEvent, screen: &ScreenGeometry) -> Result<()> {
    if !(ev.search_onset_ms < ev.search_end_ms) {
        return Err(DatasetError::schema("events.jsonl", format!("trial {}: onset not before end", ev.trial_id)));
    }
    let b = &ev.target_bbox;
    let slack = BBOX_BUFFER_PX;
    let inside = b.x0 <= b.x1
        && b.y0 <= b.y1
        && b.x0 >= -slack
        && b.y0 >= -slack
        && b.x1 <= screen.width_px + slack
        && b.y1 <= screen.height_px + slack;
    if !inside {
        return Err(DatasetError::schema("events.jsonl", format!("trial {}: bbox outside screen", ev.trial_id)));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    participant_id: String,
    screen_px: [f64; 2],
    screen_mm: [f64; 2],
    channels: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    montage: BTreeMap<String, [f64; 3]>,
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(DatasetError::MissingFile(p))
    }
}

fn parse_f64(file: &str, row: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| DatasetError::schema(file, format!("row {row}: cannot parse '{field}' as a number")))
}

fn parse_flag(file: &str, row: usize, field: &str) -> Result<bool> {
    match field.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(DatasetError::schema(file, format!("row {row}: validity flag '{other}' is not 0/1"))),
    }
}

const GAZE_HEADER: [&str; 8] = ["t_ms", "lx", "ly", "lvalid", "rx", "ry", "rvalid", "eye_dist_mm"];

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DatasetError::Io(std::io::Error::other(e)))
}

fn read_gaze(path: &Path) -> Result<Vec<GazeSample>> {
    const F: &str = "gaze.csv";
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> =
        rdr.headers().map_err(|e| DatasetError::schema(F, e.to_string()))?.iter().map(str::to_string).collect();
    if header != GAZE_HEADER {
        return Err(DatasetError::schema(F, format!("expected columns {:?}, found {:?}", GAZE_HEADER, header)));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DatasetError::schema(F, e.to_string()))?;
        if rec.len() != GAZE_HEADER.len() {
            return Err(DatasetError::schema(F, format!("row {row}: expected 8 fields")));
        }
        let eye = |x: &str, y: &str, v: &str| -> Result<EyeSample> {
            Ok(EyeSample {
                // device convention: origin top-right, x leftwards
                x: 1.0 - parse_f64(F, row, x)?,
                y: parse_f64(F, row, y)?,
                valid: parse_flag(F, row, v)?,
            })
        };
        out.push(GazeSample {
            t_ms: parse_f64(F, row, &rec[0])?,
            left: eye(&rec[1], &rec[2], &rec[3])?,
            right: eye(&rec[4], &rec[5], &rec[6])?,
            eye_distance_mm: parse_f64(F, row, &rec[7])?,
        });
    }
    Ok(out)
}

fn read_eeg(path: &Path, channels: &[String]) -> Result<EegStream> {
    const F: &str = "eeg.csv";
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> =
        rdr.headers().map_err(|e| DatasetError::schema(F, e.to_string()))?.iter().map(str::to_string).collect();
    let expected: Vec<String> = std::iter::once("t_ms".to_string()).chain(channels.iter().cloned()).collect();
    if header != expected {
        return Err(DatasetError::schema(F, format!("expected columns {:?}, found {:?}", expected, header)));
    }
    let nc = channels.len();
    let mut t = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DatasetError::schema(F, e.to_string()))?;
        if rec.len() != nc + 1 {
            return Err(DatasetError::schema(F, format!("row {row}: expected {} fields", nc + 1)));
        }
        t.push(parse_f64(F, row, &rec[0])?);
        for f in rec.iter().skip(1) {
            flat.push(parse_f64(F, row, f)?);
        }
    }
    let n = t.len();
    let samples_major = Array2::from_shape_vec((n, nc), flat).expect("row lengths checked");
    Ok(EegStream { t_ms: t, data: samples_major.reversed_axes().as_standard_layout().to_owned() })
}

fn read_events(path: &Path) -> Result<Vec<TrialEvent>> {
    const F: &str = "events.jsonl";
    let rdr = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in rdr.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TrialEvent =
            serde_json::from_str(&line).map_err(|e| DatasetError::schema(F, format!("line {}: {e}", i + 1)))?;
        out.push(ev);
    }
    Ok(out)
}

/// Loads and validates a session directory.
pub fn load_recording(dir: impl AsRef<Path>) -> Result<Recording> {
    let dir = dir.as_ref();
    let meta_p = require(dir, "meta.json")?;
    let gaze_p = require(dir, "gaze.csv")?;
    let eeg_p = require(dir, "eeg.csv")?;
    let events_p = require(dir, "events.jsonl")?;

    let meta: MetaFile = serde_json::from_str(&fs::read_to_string(&meta_p)?)
        .map_err(|e| DatasetError::schema("meta.json", e.to_string()))?;
    if meta.channels.is_empty() {
        return Err(DatasetError::schema("meta.json", "no channels declared"));
    }
    let montage =
        Montage::for_channels(&meta.channels, &meta.montage).map_err(|m| DatasetError::schema("meta.json", m))?;
    let screen = ScreenGeometry {
        width_px: meta.screen_px[0],
        height_px: meta.screen_px[1],
        width_mm: meta.screen_mm[0],
        height_mm: meta.screen_mm[1],
    };
    if !(screen.width_px > 0.0 && screen.height_px > 0.0) {
        return Err(DatasetError::schema("meta.json", "screen_px must be positive"));
    }
    let rec = Recording {
        participant_id: meta.participant_id,
        screen,
        gaze: read_gaze(&gaze_p)?,
        eeg: read_eeg(&eeg_p, &meta.channels)?,
        channels: meta.channels,
        montage,
        events: read_events(&events_p)?,
        montage_overrides: meta.montage,
    };
    rec.validate()?;
    Ok(rec)
}

/// Session directories under `root`: `root` itself if it holds a
/// `meta.json`, otherwise its immediate subdirectories that do, sorted by name.
pub fn find_recordings(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    if root.join("meta.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let p = entry?.path();
        if p.join("meta.json").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(DatasetError::schema("meta.json", format!("no session directories under {}", root.display())));
    }
    Ok(dirs)
}

/// Formats `v` with at most `sig` significant digits, trimming trailing zeros.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    trim_zeros(format!("{:.*}", decimals, v))
}

/// Timestamps keep microsecond resolution.
pub fn fmt_time(t: f64) -> String {
    trim_zeros(format!("{:.3}", t))
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Value after a write/read cycle through [`fmt_sig`] with six digits.
pub fn quantize6(v: f64) -> f64 {
    fmt_sig(v, 6).parse().unwrap_or(v)
}

/// Timestamp after a write/read cycle through [`fmt_time`].
pub fn quantize_time(t: f64) -> f64 {
    fmt_time(t).parse().unwrap_or(t)
}

/// Writes a session directory in the format read by [`load_recording`].
pub fn write_recording(rec: &Recording, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let meta = MetaFile {
        participant_id: rec.participant_id.clone(),
        screen_px: [rec.screen.width_px, rec.screen.height_px],
        screen_mm: [rec.screen.width_mm, rec.screen.height_mm],
        channels: rec.channels.clone(),
        montage: rec.montage_overrides.clone(),
    };
    let mut meta_s = serde_json::to_string_pretty(&meta).map_err(std::io::Error::other)?;
    meta_s.push('\n');
    fs::write(dir.join("meta.json"), meta_s)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("gaze.csv"))?);
    writeln!(w, "{}", GAZE_HEADER.join(","))?;
    for g in &rec.gaze {
        let flag = |b: bool| if b { "1" } else { "0" };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_time(g.t_ms),
            fmt_sig(1.0 - g.left.x, 6),
            fmt_sig(g.left.y, 6),
            flag(g.left.valid),
            fmt_sig(1.0 - g.right.x, 6),
            fmt_sig(g.right.y, 6),
            flag(g.right.valid),
            fmt_sig(g.eye_distance_mm, 6)
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("eeg.csv"))?);
    writeln!(w, "t_ms,{}", rec.channels.join(","))?;
    let mut line = String::new();
    for (i, &t) in rec.eeg.t_ms.iter().enumerate() {
        line.clear();
        line.push_str(&fmt_time(t));
        for v in rec.eeg.data.column(i) {
            line.push(',');
            line.push_str(&fmt_sig(*v, 6));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("events.jsonl"))?);
    for ev in &rec.events {
        writeln!(w, "{}", serde_json::to_string(ev).map_err(std::io::Error::other)?)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_recording() -> Recording {
        let channels: Vec<String> = ["Cz", "Pz"].iter().map(|s| s.to_string()).collect();
        let n_eeg = 1000; // 2 s
        let t_eeg: Vec<f64> = (0..n_eeg).map(|i| i as f64 * 2.0).collect();
        let data = Array2::from_shape_fn((2, n_eeg), |(c, i)| (c as f64 + 1.0) * (i as f64 * 0.01).sin());
        let gaze: Vec<GazeSample> = (0..120)
            .map(|i| GazeSample {
                t_ms: quantize_time(i as f64 * 1000.0 / 60.0),
                left: EyeSample::new(0.25, 0.5),
                right: if i % 7 == 0 { EyeSample::invalid() } else { EyeSample::new(0.75, 0.5) },
                eye_distance_mm: 600.0,
            })
            .collect();
        let events = vec![TrialEvent {
            trial_id: 1,
            scene_id: "w01".into(),
            scene_domain: SceneDomain::Workshop,
            target_id: "hammer".into(),
            target_bbox: BBox { x0: 100.0, y0: 100.0, x1: 200.0, y1: 180.0 },
            search_onset_ms: 100.0,
            search_end_ms: 1500.0,
            outcome: Outcome::Clicked,
            n_objects: Some(120),
        }];
        Recording {
            participant_id: "P01".into(),
            screen: ScreenGeometry::default(),
            gaze,
            eeg: EegStream { t_ms: t_eeg, data },
            montage: Montage::for_channels(&channels, &BTreeMap::new()).unwrap(),
            channels,
            events,
            montage_overrides: BTreeMap::new(),
        }
    }

    #[test]
    fn standard_montage_is_on_unit_sphere_and_upper() {
        let m = Montage::standard();
        assert_eq!(m.names.len(), 20);
        for p in &m.positions {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            assert!(p[2] >= -1e-12);
        }
        let fp1 = m.positions[m.index_of("Fp1").unwrap()];
        let o2 = m.positions[m.index_of("O2").unwrap()];
        assert!(fp1[1] > 0.9 && fp1[0] < 0.0);
        assert!(o2[1] < -0.9 && o2[0] > 0.0);
    }

    #[test]
    fn slicing_counts() {
        let rec = tiny_recording();
        assert_eq!(rec.slice_stream(1000.0, 1250.0, StreamKind::Eeg).unwrap().len(), 125);
        assert_eq!(rec.slice_stream(0.0, 1000.0, StreamKind::Gaze).unwrap().len(), 60);
        assert!(matches!(rec.slice_stream(5.0, 5.0, StreamKind::Eeg), Err(DatasetError::Range(_))));
        assert!(matches!(rec.slice_stream(0.0, 9000.0, StreamKind::Eeg), Err(DatasetError::Range(_))));
    }

    #[test]
    fn roundtrip_through_disk() {
        let rec = tiny_recording();
        let dir = tempfile::tempdir().unwrap();
        write_recording(&rec, dir.path()).unwrap();
        let back = load_recording(dir.path()).unwrap();
        assert_eq!(back.gaze.len(), rec.gaze.len());
        assert_eq!(back.events, rec.events);
        assert_eq!(back.channels, rec.channels);
        for (a, b) in back.gaze.iter().zip(&rec.gaze) {
            assert_eq!(a.t_ms, b.t_ms);
            assert!((a.left.x - b.left.x).abs() < 1e-9);
            assert_eq!(a.right.valid, b.right.valid);
        }
        for (a, b) in back.eeg.data.iter().zip(rec.eeg.data.iter()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3));
        }
        // writing the loaded copy reproduces the same bytes
        let dir2 = tempfile::tempdir().unwrap();
        write_recording(&back, dir2.path()).unwrap();
        for f in ["meta.json", "gaze.csv", "eeg.csv", "events.jsonl"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn decreasing_eeg_timestamp_is_clock_error() {
        let mut rec = tiny_recording();
        rec.eeg.t_ms.swap(10, 11);
        let dir = tempfile::tempdir().unwrap();
        write_recording(&rec, dir.path()).unwrap();
        assert!(matches!(load_recording(dir.path()), Err(DatasetError::Clock { .. })));
    }

    #[test]
    fn event_past_eeg_is_coverage_error() {
        let mut rec = tiny_recording();
        rec.events[0].search_end_ms = 1990.0; // gaze ends at 2000 but eeg at 2000 too
        assert!(rec.validate().is_ok());
        rec.events[0].search_end_ms = 2100.0;
        let dir = tempfile::tempdir().unwrap();
        write_recording(&rec, dir.path()).unwrap();
        assert!(matches!(load_recording(dir.path()), Err(DatasetError::Coverage(_))));
    }

    #[test]
    fn missing_and_malformed_files() {
        let rec = tiny_recording();
        let dir = tempfile::tempdir().unwrap();
        write_recording(&rec, dir.path()).unwrap();
        fs::remove_file(dir.path().join("events.jsonl")).unwrap();
        assert!(matches!(load_recording(dir.path()), Err(DatasetError::MissingFile(_))));

        write_recording(&rec, dir.path()).unwrap();
        let eeg = fs::read_to_string(dir.path().join("eeg.csv")).unwrap().replacen("t_ms,Cz,Pz", "t_ms,Cz,Oz", 1);
        fs::write(dir.path().join("eeg.csv"), eeg).unwrap();
        assert!(matches!(load_recording(dir.path()), Err(DatasetError::Schema { .. })));
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_sig(12.3456789, 6), "12.3457");
        assert_eq!(fmt_sig(-0.000123456789, 6), "-0.000123457");
        assert_eq!(fmt_sig(1.5, 6), "1.5");
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_time(16.666666), "16.667");
        assert_eq!(fmt_time(2.0), "2");
    }

    #[test]
    fn bbox_is_closed() {
        let b = BBox { x0: 0.0, y0: 0.0, x1: 10.0, y1: 10.0 };
        assert!(b.contains(10.0, 0.0));
        assert!(!b.contains(10.0001, 5.0));
    }
}
