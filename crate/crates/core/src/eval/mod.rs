//! Ground-truth labels, balanced sets, cross-validation splits and the
//! within-/cross-user scene-domain conditions.

pub mod prepare;
pub mod report;
pub mod run;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Label, Outcome, SceneDomain, TrialEvent};
use crate::eeg::EegError;
use crate::features::FeatureError;
use crate::gaze::{Fixation, GazeError};
use crate::learn::{stratified_folds, LearnError};

pub use prepare::{process_recording, PrepareConfig, PreparedData, Processed, Sample};
pub use report::{read_report, report_csv, write_report, EvalReport};
pub use run::{run_condition, run_conditions, ConditionResult, EvalConfig, TrainedPipeline};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("nothing to report")]
    NothingToReport,
    #[error("invalid condition: {0}")]
    Condition(String),
    #[error("inconsistent data: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Eeg(#[from] EegError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("report output: {0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFixation {
    pub fixation: Fixation,
    pub label: Label,
    pub participant: String,
    pub trial_id: u32,
    pub scene_domain: SceneDomain,
    pub n_objects: Option<u32>,
}

/// Per clicked trial, the first fixation whose centroid lies in the target box
/// is the target and every earlier fixation of the trial a non-target; later
/// ones are dropped. Trials that were skipped or never reached the box add
/// nothing, unless `include_unfound`, in which case all their fixations count
/// as non-targets. Trial membership is by onset in `[search_onset, search_end)`.
pub fn label_fixations(
    participant: &str,
    fixations: &[Fixation],
    events: &[TrialEvent],
    include_unfound: bool,
) -> Vec<LabeledFixation> {
    let mut out = Vec::new();
    for ev in events {
        let mut in_trial: Vec<&Fixation> = fixations
            .iter()
            .filter(|f| f.onset_ms >= ev.search_onset_ms && f.onset_ms < ev.search_end_ms)
            .collect();
        in_trial.sort_by(|a, b| a.onset_ms.total_cmp(&b.onset_ms));
        let target = match ev.outcome {
            Outcome::Clicked => in_trial
                .iter()
                .position(|f| ev.target_bbox.contains(f.centroid_px[0], f.centroid_px[1])),
            Outcome::Skipped => None,
        };
        let take = match target {
            Some(t) => t + 1,
            None if include_unfound => in_trial.len(),
            None => 0,
        };
        for (i, f) in in_trial.into_iter().take(take).enumerate() {
            out.push(LabeledFixation {
                fixation: f.clone(),
                label: if Some(i) == target { Label::Target } else { Label::Nontarget },
                participant: participant.to_string(),
                trial_id: ev.trial_id,
                scene_domain: ev.scene_domain,
                n_objects: ev.n_objects,
            });
        }
    }
    out
}

/// Uniformly subsamples the larger class down to the size of the smaller one.
/// Returns the kept positions of `labels` in ascending order.
pub fn balance(labels: &[Label], seed: u64) -> Vec<usize> {
    let t: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Target).collect();
    let n: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Nontarget).collect();
    let (keep_all, mut pool) = if t.len() <= n.len() { (t, n) } else { (n, t) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(keep_all.len());
    let mut out = keep_all;
    out.extend(pool);
    out.sort_unstable();
    out
}

/// Mixes extra words into a seed (splitmix64 finaliser per word).
pub fn derive_seed(seed: u64, words: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h = h.wrapping_add(w).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    WithinUser,
    CrossUser,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::WithinUser => "within_user",
            Split::CrossUser => "cross_user",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "within_user" | "within" => Ok(Split::WithinUser),
            "cross_user" | "cross" => Ok(Split::CrossUser),
            other => Err(EvalError::Condition(format!("unknown split {other:?}"))),
        }
    }
}

/// Training domains and test domain of a condition. `test = None` means both.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DomainCondition {
    pub train: Vec<SceneDomain>,
    pub test: Option<SceneDomain>,
}

impl DomainCondition {
    /// both→both, W→W, D→W, W+D→W, D→D, W→D, W+D→D.
    pub fn canonical() -> Vec<DomainCondition> {
        ["both->both", "W->W", "D->W", "W+D->W", "D->D", "W->D", "W+D->D"]
            .iter()
            .map(|s| s.parse().expect("canonical condition"))
            .collect()
    }

    pub fn trains_on(&self, d: SceneDomain) -> bool {
        self.train.contains(&d)
    }

    pub fn tests_on(&self, d: SceneDomain) -> bool {
        self.test.is_none_or(|t| t == d)
    }

    /// `both->both`, or the training set joined by `+`, `->`, the test domain.
    pub fn name(&self) -> String {
        let both = self.train.len() == 2;
        match self.test {
            None if both => "both->both".into(),
            test => {
                let tr: Vec<&str> = self.train.iter().map(|d| d.short()).collect();
                let te = test.map(|d| d.short()).unwrap_or("both");
                format!("{}->{}", tr.join("+"), te)
            }
        }
    }
}

impl fmt::Display for DomainCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for DomainCondition {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::Condition(format!("cannot parse condition {s:?}"));
        let (tr, te) = s.trim().split_once("->").ok_or_else(bad)?;
        let dom = |p: &str| -> Result<Vec<SceneDomain>, EvalError> {
            match p.trim() {
                "both" | "W+D" | "D+W" => Ok(vec![SceneDomain::Workshop, SceneDomain::Desktop]),
                "W" | "workshop" => Ok(vec![SceneDomain::Workshop]),
                "D" | "desktop" => Ok(vec![SceneDomain::Desktop]),
                _ => Err(bad()),
            }
        };
        let train = dom(tr)?;
        let test = match dom(te)?.as_slice() {
            [d] => Some(*d),
            _ => None,
        };
        Ok(DomainCondition { train, test })
    }
}

/// Expands a condition list; `all` stands for the seven canonical conditions.
pub fn parse_conditions(items: &[String]) -> Result<Vec<DomainCondition>, EvalError> {
    let mut out: Vec<DomainCondition> = Vec::new();
    for it in items {
        let new = if it.trim() == "all" { DomainCondition::canonical() } else { vec![it.parse()?] };
        for c in new {
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    if out.is_empty() {
        return Err(EvalError::Condition("no conditions requested".into()));
    }
    Ok(out)
}

/// What each sample contributes to splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitKey<'a> {
    pub participant: &'a str,
    pub label: Label,
    pub domain: SceneDomain,
}

/// Balanced training and test rows of one fold. `unit` names the participant
/// (within-user) or fold group (cross-user) the test score is aggregated by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub unit: String,
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn balanced(rows: Vec<usize>, keys: &[SplitKey], seed: u64) -> Vec<usize> {
    let labels: Vec<Label> = rows.iter().map(|&i| keys[i].label).collect();
    balance(&labels, seed).into_iter().map(|k| rows[k]).collect()
}

fn has_both(rows: &[usize], keys: &[SplitKey]) -> bool {
    rows.iter().any(|&i| keys[i].label == Label::Target) && rows.iter().any(|&i| keys[i].label == Label::Nontarget)
}

/// Builds the `k` folds of a condition. Within-user folds are stratified
/// per participant (participants with fewer than `min_targets` targets are
/// skipped); cross-user folds hold out groups of participants. Domain
/// filters then restrict training and test rows, and each side is balanced
/// on its own. Folds left without both classes on a side are dropped.
pub fn make_splits(
    keys: &[SplitKey],
    split: Split,
    cond: &DomainCondition,
    k: usize,
    min_targets: usize,
    seed: u64,
) -> Result<Vec<Fold>, EvalError> {
    if k < 2 {
        return Err(EvalError::Condition(format!("need at least 2 folds, got {k}")));
    }
    let mut by_p: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        by_p.entry(key.participant).or_default().push(i);
    }
    let mut folds = Vec::new();
    let mut push = |unit: String, index: usize, train: Vec<usize>, test: Vec<usize>, s: u64| {
        let train = balanced(train, keys, derive_seed(s, &[1]));
        let test = balanced(test, keys, derive_seed(s, &[2]));
        if has_both(&train, keys) && has_both(&test, keys) {
            folds.push(Fold { unit, index, train, test });
        } else {
            log::debug!("fold {index} of {unit} lacks a class after filtering; dropped");
        }
    };
    match split {
        Split::WithinUser => {
            let mut skipped = Vec::new();
            for (pi, (p, rows)) in by_p.iter().enumerate() {
                let labels: Vec<Label> = rows.iter().map(|&i| keys[i].label).collect();
                let n_t = labels.iter().filter(|&&l| l == Label::Target).count();
                if n_t < min_targets {
                    skipped.push(p.to_string());
                    continue;
                }
                let fold = stratified_folds(&labels, k, derive_seed(seed, &[pi as u64]));
                for f in 0..k {
                    let train: Vec<usize> = (0..rows.len())
                        .filter(|&r| fold[r] != f && cond.trains_on(keys[rows[r]].domain))
                        .map(|r| rows[r])
                        .collect();
                    let test: Vec<usize> = (0..rows.len())
                        .filter(|&r| fold[r] == f && cond.tests_on(keys[rows[r]].domain))
                        .map(|r| rows[r])
                        .collect();
                    push(p.to_string(), f, train, test, derive_seed(seed, &[pi as u64, f as u64]));
                }
            }
            if !skipped.is_empty() {
                log::info!("within-user: skipped {} participant(s) with < {min_targets} targets: {}", skipped.len(), skipped.join(", "));
            }
            if by_p.len() == skipped.len() {
                return Err(EvalError::TooFewSamples(format!("no participant has {min_targets} or more targets")));
            }
        }
        Split::CrossUser => {
            let mut parts: Vec<&str> = by_p.keys().copied().collect();
            if parts.len() < 2 {
                return Err(EvalError::TooFewSamples("cross-user evaluation needs two or more participants".into()));
            }
            parts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let groups = k.min(parts.len());
            let group_of: BTreeMap<&str, usize> = parts.iter().enumerate().map(|(i, &p)| (p, i % groups)).collect();
            for g in 0..groups {
                let members: BTreeSet<&str> = group_of.iter().filter(|(_, &v)| v == g).map(|(&p, _)| p).collect();
                let train: Vec<usize> = (0..keys.len())
                    .filter(|&i| !members.contains(keys[i].participant) && cond.trains_on(keys[i].domain))
                    .collect();
                let test: Vec<usize> = (0..keys.len())
                    .filter(|&i| members.contains(keys[i].participant) && cond.tests_on(keys[i].domain))
                    .collect();
                let unit = members.iter().copied().collect::<Vec<_>>().join("+");
                push(unit, g, train, test, derive_seed(seed, &[1000 + g as u64]));
            }
        }
    }
    if folds.is_empty() {
        return Err(EvalError::TooFewSamples(format!("{split} {cond}: no fold has both classes on both sides")));
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BBox;

    fn fx(onset: f64, x: f64) -> Fixation {
        Fixation { onset_ms: onset, duration_ms: 100.0, centroid_px: [x, 50.0], sample_count: 6, trial_id: None }
    }

    fn event(outcome: Outcome) -> TrialEvent {
        TrialEvent {
            trial_id: 1,
            scene_id: "W01".into(),
            scene_domain: SceneDomain::Workshop,
            target_id: "t".into(),
            target_bbox: BBox { x0: 100.0, y0: 0.0, x1: 200.0, y1: 100.0 },
            search_onset_ms: 0.0,
            search_end_ms: 1000.0,
            outcome,
            n_objects: None,
        }
    }

    #[test]
    fn first_in_box_is_target() {
        let f = [fx(0.0, 10.0), fx(200.0, 150.0), fx(400.0, 160.0), fx(1200.0, 150.0)];
        let l = label_fixations("p", &f, &[event(Outcome::Clicked)], false);
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].label, Label::Nontarget);
        assert_eq!(l[1].label, Label::Target);
        assert_eq!(l[1].fixation.onset_ms, 200.0);
    }

    #[test]
    fn edge_counts_as_inside() {
        let l = label_fixations("p", &[fx(0.0, 10.0), fx(100.0, 200.0)], &[event(Outcome::Clicked)], false);
        assert_eq!(l[1].label, Label::Target);
    }

    #[test]
    fn skipped_and_unfound_trials() {
        let f = [fx(0.0, 10.0), fx(200.0, 150.0)];
        assert!(label_fixations("p", &f, &[event(Outcome::Skipped)], false).is_empty());
        let unfound = [fx(0.0, 10.0), fx(200.0, 20.0)];
        assert!(label_fixations("p", &unfound, &[event(Outcome::Clicked)], false).is_empty());
        let l = label_fixations("p", &unfound, &[event(Outcome::Clicked)], true);
        assert_eq!(l.len(), 2);
        assert!(l.iter().all(|x| x.label == Label::Nontarget));
    }

    #[test]
    fn balance_examples() {
        let mut y = vec![Label::Target; 30];
        y.extend(vec![Label::Nontarget; 170]);
        let k = balance(&y, 4);
        assert_eq!(k.len(), 60);
        assert_eq!(k.iter().filter(|&&i| y[i] == Label::Target).count(), 30);
        assert_eq!(k, balance(&y, 4));
        assert_ne!(k, balance(&y, 5));
        let even = [Label::Target, Label::Nontarget, Label::Nontarget, Label::Target];
        assert_eq!(balance(&even, 1), vec![0, 1, 2, 3]);
    }

    #[test]
    fn condition_names_round_trip() {
        let c = DomainCondition::canonical();
        let names: Vec<String> = c.iter().map(|c| c.name()).collect();
        assert_eq!(names, ["both->both", "W->W", "D->W", "W+D->W", "D->D", "W->D", "W+D->D"]);
        for c in &c {
            assert_eq!(&c.name().parse::<DomainCondition>().unwrap(), c);
        }
        assert_eq!(parse_conditions(&["all".into(), "W->W".into()]).unwrap().len(), 7);
        assert!("W=>D".parse::<DomainCondition>().is_err());
    }

    #[test]
    fn derive_seed_separates_words() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
    }
}
