//! Fixation-locked and saccade-locked epoch extraction.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::EegMatrix;
use crate::dataset::{Label, SceneDomain};
use crate::gaze::{Fixation, Saccade};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochKind {
    /// From fixation onset through the fixation's duration.
    Frp,
    /// Fixed-length window from the midpoint of the preceding saccade.
    Srp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch<T> {
    /// channels × samples
    pub data: Array2<T>,
    pub kind: EpochKind,
    pub onset_ms: f64,
    pub duration_ms: f64,
    pub fixation_duration_ms: f64,
    pub trial_id: Option<u32>,
    pub participant_id: String,
    pub scene_domain: Option<SceneDomain>,
    pub label: Option<Label>,
}

impl<T: Real> Epoch<T> {
    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Longest preceding gap tolerated between a saccade's end and the fixation it leads to.
pub const SRP_MAX_LEAD_GAP_MS: f64 = 100.0;

/// Samples in `[onset, onset + length)`, or `None` when the window leaves the recording.
pub fn window<T: Real>(x: &EegMatrix<T>, onset_ms: f64, length_ms: f64) -> Option<Array2<T>> {
    let n = ((length_ms * x.sample_rate_hz / 1000.0).round() as usize).max(1);
    let i0 = ((onset_ms - x.start_ms) * x.sample_rate_hz / 1000.0).round();
    if i0 < 0.0 {
        return None;
    }
    let i0 = i0 as usize;
    if i0 + n > x.n_samples() {
        return None;
    }
    Some(x.data.slice(s![.., i0..i0 + n]).to_owned())
}

fn blank<T: Real>(data: Array2<T>, kind: EpochKind, onset: f64, len: f64, f: &Fixation) -> Epoch<T> {
    Epoch {
        data,
        kind,
        onset_ms: onset,
        duration_ms: len,
        fixation_duration_ms: f.duration_ms,
        trial_id: f.trial_id,
        participant_id: String::new(),
        scene_domain: None,
        label: None,
    }
}

/// One epoch per fixation spanning its duration; `None` marks a fixation that
/// is not fully covered by the EEG.
pub fn epoch_fixations<T: Real>(x: &EegMatrix<T>, fixations: &[Fixation]) -> Vec<Option<Epoch<T>>> {
    let out: Vec<Option<Epoch<T>>> = fixations
        .iter()
        .map(|f| {
            window(x, f.onset_ms, f.duration_ms)
                .map(|d| blank(d, EpochKind::Frp, f.onset_ms, f.duration_ms, f))
        })
        .collect();
    let skipped = out.iter().filter(|e| e.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} fixation epochs fall outside the EEG span and were skipped");
    }
    out
}

/// The saccade leading into `f`, if one ends within [`SRP_MAX_LEAD_GAP_MS`] of its onset.
pub fn preceding_saccade<'a>(saccades: &'a [Saccade], f: &Fixation) -> Option<&'a Saccade> {
    let end = saccades.partition_point(|s| s.onset_ms < f.onset_ms);
    let s = saccades[..end].last()?;
    (f.onset_ms - s.offset_ms <= SRP_MAX_LEAD_GAP_MS).then_some(s)
}

/// One saccade-locked epoch of `length_ms` per fixation, starting at the
/// temporal midpoint of the saccade that led to it. `None` records a skip
/// (no leading saccade, or the window runs past the recording).
pub fn epoch_srp<T: Real>(
    x: &EegMatrix<T>,
    saccades: &[Saccade],
    fixations: &[Fixation],
    length_ms: f64,
) -> Vec<Option<Epoch<T>>> {
    fixations
        .iter()
        .map(|f| {
            let s = preceding_saccade(saccades, f)?;
            let onset = s.midpoint_ms();
            window(x, onset, length_ms).map(|d| blank(d, EpochKind::Srp, onset, length_ms, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ns: usize) -> EegMatrix<f64> {
        EegMatrix {
            data: Array2::from_shape_fn((2, ns), |(c, t)| (c * 10_000 + t) as f64),
            sample_rate_hz: 500.0,
            channels: vec!["Cz".into(), "Pz".into()],
            positions: vec![[0.0, 0.0, 1.0]; 2],
            start_ms: 0.0,
        }
    }

    fn fx(onset: f64, dur: f64) -> Fixation {
        Fixation { onset_ms: onset, duration_ms: dur, centroid_px: [0.0, 0.0], sample_count: 1, trial_id: Some(3) }
    }

    #[test]
    fn fixation_epochs() {
        let x = rec(2500); // 5 s
        let e = epoch_fixations(&x, &[fx(1000.0, 250.0), fx(2000.0, 60.0), fx(4900.0, 110.0)]);
        let e0 = e[0].as_ref().unwrap();
        assert_eq!(e0.n_samples(), 125);
        assert_eq!(e0.data[(0, 0)], 500.0);
        assert_eq!(e0.trial_id, Some(3));
        assert_eq!(e[1].as_ref().unwrap().n_samples(), 30);
        assert!(e[2].is_none());
    }

    #[test]
    fn srp_epoch_from_saccade_midpoint() {
        let x = rec(2500);
        let sacc = [Saccade { onset_ms: 900.0, offset_ms: 940.0 }, Saccade { onset_ms: 4500.0, offset_ms: 4520.0 }];
        let fix = [fx(940.0, 200.0), fx(4520.0, 200.0), fx(3000.0, 100.0)];
        let e = epoch_srp(&x, &sacc, &fix, 1000.0);
        let e0 = e[0].as_ref().unwrap();
        assert_eq!(e0.onset_ms, 920.0);
        assert_eq!(e0.n_samples(), 500);
        assert_eq!(e0.data[(0, 0)], 460.0);
        assert!(e[1].is_none(), "midpoint within 1 s of the end");
        assert!(e[2].is_none(), "no leading saccade");
        assert_eq!(e.len(), fix.len());
    }

    #[test]
    fn saccade_ending_a_hair_after_onset_still_leads() {
        let sacc = [Saccade { onset_ms: 1083.333, offset_ms: 1133.334 }];
        let f = fx(1133.333, 133.3);
        assert_eq!(preceding_saccade(&sacc, &f), Some(&sacc[0]));
        assert_eq!(preceding_saccade(&sacc, &fx(1083.333, 50.0)), None);
    }
}
