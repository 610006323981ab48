//! Per-recording pipeline up to fold-independent features: fixation
//! detection, ground truth, EEG cleaning, FRP/SRP epochs, PyEEG and SRP
//! vectors. CSP is fold-dependent and fitted later.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{label_fixations, EvalError, LabeledFixation};
use crate::dataset::{Label, Recording, SceneDomain};
use crate::eeg::{epoch_fixations, epoch_srp, preprocess, EegConfig, EegMatrix, Epoch, EpochKind, EpochSet, PreprocessReport};
use crate::features::{pyeeg_features, pyeeg_schema, srp_features, srp_schema, SrpConfig, GAZE_FEATURE};
use crate::gaze::{detect_for_recording, Fixation, IvtParams, Saccade};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PrepareConfig {
    pub gaze: IvtParams,
    pub eeg: EegConfig,
    pub srp: SrpConfig,
    pub include_unfound: bool,
}

/// One labeled fixation that made it through every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub participant: String,
    pub trial_id: u32,
    pub domain: SceneDomain,
    pub label: Label,
    pub n_objects: Option<u32>,
    pub onset_ms: f64,
    pub fix_dur_ms: f64,
    /// Start of the saccade-locked epoch.
    pub srp_onset_ms: f64,
}

/// Samples with their FRP epochs and fold-independent feature blocks, row-aligned.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub samples: Vec<Sample>,
    pub frp: Vec<Array2<f64>>,
    pub srp_epochs: Vec<Array2<f64>>,
    pub gaze: Array2<f64>,
    pub pyeeg: Array2<f64>,
    pub srp: Array2<f64>,
    pub gaze_schema: Vec<String>,
    pub pyeeg_schema: Vec<String>,
    pub srp_schema: Vec<String>,
}

/// Everything the per-recording stages produced.
#[derive(Debug, Clone)]
pub struct Processed {
    pub participant: String,
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
    pub labeled: Vec<LabeledFixation>,
    pub preprocess: PreprocessReport,
    pub data: PreparedData,
}

fn rows(v: Vec<Vec<f64>>, ncols: usize) -> Array2<f64> {
    let n = v.len();
    Array2::from_shape_vec((n, ncols), v.into_iter().flatten().collect()).expect("uniform row length")
}

struct Builder {
    samples: Vec<Sample>,
    frp: Vec<Array2<f64>>,
    srp_epochs: Vec<Array2<f64>>,
    pyeeg: Vec<Vec<f64>>,
    srp: Vec<Vec<f64>>,
    dropped: usize,
}

impl Builder {
    fn new() -> Self {
        Builder { samples: Vec::new(), frp: Vec::new(), srp_epochs: Vec::new(), pyeeg: Vec::new(), srp: Vec::new(), dropped: 0 }
    }

    fn push(&mut self, s: Sample, frp: Option<Array2<f64>>, srp: Option<Array2<f64>>, fs: f64, cfg: &SrpConfig) {
        let (Some(frp), Some(srp)) = (frp, srp) else {
            self.dropped += 1;
            return;
        };
        match (pyeeg_features(frp.view(), fs), srp_features(srp.view(), fs, cfg)) {
            (Ok(p), Ok(v)) if p.iter().chain(&v).all(|x| x.is_finite()) => {
                self.samples.push(s);
                self.frp.push(frp);
                self.srp_epochs.push(srp);
                self.pyeeg.push(p);
                self.srp.push(v);
            }
            _ => self.dropped += 1,
        }
    }

    fn finish(self, channels: Vec<String>, fs: f64, cfg: &SrpConfig) -> PreparedData {
        let pyeeg_schema = pyeeg_schema(&channels);
        let srp_schema = srp_schema(&channels, cfg.n_bins(fs));
        let gaze = Array2::from_shape_fn((self.samples.len(), 1), |(i, _)| self.samples[i].fix_dur_ms);
        PreparedData {
            sample_rate_hz: fs,
            gaze,
            pyeeg: rows(self.pyeeg, pyeeg_schema.len()),
            srp: rows(self.srp, srp_schema.len()),
            gaze_schema: vec![GAZE_FEATURE.to_string()],
            pyeeg_schema,
            srp_schema,
            channels,
            samples: self.samples,
            frp: self.frp,
            srp_epochs: self.srp_epochs,
        }
    }
}

/// Runs detection, labeling, cleaning, epoching and the fixed feature blocks
/// on one recording. Labeled fixations without a complete FRP and SRP epoch
/// or with non-finite features are dropped (logged).
pub fn process_recording(rec: &Recording, cfg: &PrepareConfig) -> Result<Processed, EvalError> {
    let (fixations, saccades) = detect_for_recording(rec, &cfg.gaze)?;
    let labeled = label_fixations(&rec.participant_id, &fixations, &rec.events, cfg.include_unfound);
    let raw = EegMatrix::<f64>::from_recording(rec)?;
    let (clean, report) = preprocess(&raw, &cfg.eeg)?;
    let fx: Vec<Fixation> = labeled.iter().map(|l| l.fixation.clone()).collect();
    let frp = epoch_fixations(&clean, &fx);
    let srp = epoch_srp(&clean, &saccades, &fx, cfg.srp.length_ms);
    let fs = clean.sample_rate_hz;
    let mut b = Builder::new();
    for ((l, e), s) in labeled.iter().zip(frp).zip(srp) {
        let sample = Sample {
            participant: l.participant.clone(),
            trial_id: l.trial_id,
            domain: l.scene_domain,
            label: l.label,
            n_objects: l.n_objects,
            onset_ms: l.fixation.onset_ms,
            fix_dur_ms: l.fixation.duration_ms,
            srp_onset_ms: s.as_ref().map(|e| e.onset_ms).unwrap_or(f64::NAN),
        };
        b.push(sample, e.map(|e| e.data), s.map(|e| e.data), fs, &cfg.srp);
    }
    if b.dropped > 0 {
        log::warn!("{}: dropped {} of {} labeled fixations without usable epochs", rec.participant_id, b.dropped, labeled.len());
    }
    let data = b.finish(clean.channels.clone(), fs, &cfg.srp);
    log::info!(
        "{}: {} fixations, {} labeled samples ({} targets), {} SOBI components rejected",
        rec.participant_id,
        fixations.len(),
        data.len(),
        data.n_targets(),
        report.rejected_components.len()
    );
    Ok(Processed { participant: rec.participant_id.clone(), fixations, saccades, labeled, preprocess: report, data })
}

impl PreparedData {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_targets(&self) -> usize {
        self.samples.iter().filter(|s| s.label == Label::Target).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn split_keys(&self) -> Vec<super::SplitKey<'_>> {
        self.samples
            .iter()
            .map(|s| super::SplitKey { participant: &s.participant, label: s.label, domain: s.domain })
            .collect()
    }

    /// Stacks participants; channel lists and sample rates must agree.
    pub fn concat(parts: Vec<PreparedData>) -> Result<PreparedData, EvalError> {
        let mut it = parts.into_iter();
        let mut out = it.next().ok_or_else(|| EvalError::TooFewSamples("no recordings".into()))?;
        for p in it {
            if p.channels != out.channels || p.sample_rate_hz != out.sample_rate_hz {
                return Err(EvalError::Mismatch("recordings differ in channels or sample rate".into()));
            }
            out.samples.extend(p.samples);
            out.frp.extend(p.frp);
            out.srp_epochs.extend(p.srp_epochs);
            out.gaze = ndarray::concatenate(Axis(0), &[out.gaze.view(), p.gaze.view()]).expect("same width");
            out.pyeeg = ndarray::concatenate(Axis(0), &[out.pyeeg.view(), p.pyeeg.view()]).expect("same width");
            out.srp = ndarray::concatenate(Axis(0), &[out.srp.view(), p.srp.view()]).expect("same width");
        }
        Ok(out)
    }

    /// FRP epochs followed by SRP epochs in the same sample order.
    pub fn to_epoch_set(&self, provenance: serde_json::Value) -> EpochSet<f64> {
        let mut epochs = Vec::with_capacity(2 * self.len());
        for (kind, list) in [(EpochKind::Frp, &self.frp), (EpochKind::Srp, &self.srp_epochs)] {
            for (s, d) in self.samples.iter().zip(list) {
                let duration = d.ncols() as f64 * 1000.0 / self.sample_rate_hz;
                epochs.push(Epoch {
                    data: d.clone(),
                    kind,
                    onset_ms: if kind == EpochKind::Frp { s.onset_ms } else { s.srp_onset_ms },
                    duration_ms: duration,
                    fixation_duration_ms: s.fix_dur_ms,
                    trial_id: Some(s.trial_id),
                    participant_id: s.participant.clone(),
                    scene_domain: Some(s.domain),
                    label: Some(s.label),
                });
            }
        }
        EpochSet { channels: self.channels.clone(), sample_rate_hz: self.sample_rate_hz, provenance, epochs }
    }

    /// Rebuilds samples and fixed features from an epoch set written by
    /// [`PreparedData::to_epoch_set`]. The i-th SRP epoch belongs to the
    /// i-th FRP epoch; epochs without label, trial or domain are rejected.
    pub fn from_epoch_set(set: &EpochSet<f64>, srp_cfg: &SrpConfig) -> Result<PreparedData, EvalError> {
        let frp: Vec<&Epoch<f64>> = set.epochs.iter().filter(|e| e.kind == EpochKind::Frp).collect();
        let srp: Vec<&Epoch<f64>> = set.epochs.iter().filter(|e| e.kind == EpochKind::Srp).collect();
        if frp.len() != srp.len() {
            return Err(EvalError::Mismatch(format!("{} FRP but {} SRP epochs", frp.len(), srp.len())));
        }
        let fs = set.sample_rate_hz;
        let mut b = Builder::new();
        for (f, s) in frp.into_iter().zip(srp) {
            let (Some(label), Some(trial_id), Some(domain)) = (f.label, f.trial_id, f.scene_domain) else {
                return Err(EvalError::Mismatch("epoch without label, trial or domain".into()));
            };
            if s.participant_id != f.participant_id || s.trial_id != f.trial_id {
                return Err(EvalError::Mismatch("SRP epoch order does not follow FRP epochs".into()));
            }
            let sample = Sample {
                participant: f.participant_id.clone(),
                trial_id,
                domain,
                label,
                n_objects: None,
                onset_ms: f.onset_ms,
                fix_dur_ms: f.fixation_duration_ms,
                srp_onset_ms: s.onset_ms,
            };
            b.push(sample, Some(f.data.clone()), Some(s.data.clone()), fs, srp_cfg);
        }
        if b.dropped > 0 {
            log::warn!("dropped {} epochs with unusable features", b.dropped);
        }
        Ok(b.finish(set.channels.clone(), fs, srp_cfg))
    }
}
