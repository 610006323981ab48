//! Fold-level training and condition-level aggregation.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, make_splits, parse_conditions, DomainCondition, EvalError, Fold, PreparedData, Split};
use crate::dataset::Label;
use crate::features::{csp_fit, BlockKind, CspModel, FeatureSet};
use crate::learn::{accuracy, named_grid, train, FittedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    /// Within-user evaluation skips participants with fewer targets.
    pub min_targets: usize,
    pub csp_components: usize,
    /// SVM grid searched in every training fold: `default`, `linear`, `poly` or `rbf`.
    pub grid: String,
    /// Count fixations of skipped and never-found trials as non-targets.
    pub include_unfound: bool,
    pub splits: Vec<Split>,
    /// Domain conditions such as `W+D->W`; `all` expands to the canonical seven.
    pub conditions: Vec<String>,
    pub feature_sets: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            outer_folds: 10,
            inner_folds: 5,
            min_targets: 10,
            csp_components: 15,
            grid: "default".into(),
            include_unfound: false,
            splits: vec![Split::WithinUser, Split::CrossUser],
            conditions: vec!["all".into()],
            feature_sets: FeatureSet::standard().iter().map(|s| s.name.clone()).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(EvalError::Condition("fold counts must be at least 2".into()));
        }
        if self.csp_components == 0 {
            return Err(EvalError::Condition("csp_components must be positive".into()));
        }
        if named_grid(&self.grid).is_none() {
            return Err(EvalError::Condition(format!("unknown grid {:?}", self.grid)));
        }
        if self.splits.is_empty() || self.feature_sets.is_empty() {
            return Err(EvalError::Condition("no splits or feature sets requested".into()));
        }
        parse_conditions(&self.conditions)?;
        self.parsed_feature_sets()?;
        Ok(())
    }

    pub fn parsed_feature_sets(&self) -> Result<Vec<FeatureSet>, EvalError> {
        self.feature_sets.iter().map(|s| s.parse().map_err(EvalError::from)).collect()
    }
}

/// Feature extraction fitted on training rows plus the fused SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub feature_set: String,
    pub blocks: Vec<BlockKind>,
    pub channels: Vec<String>,
    pub sample_rate_hz: f64,
    pub csp: Option<CspModel<f64>>,
    pub model: FittedModel<f64>,
}

fn csp_block(csp: &CspModel<f64>, data: &PreparedData, rows: &[usize]) -> Result<Array2<f64>, EvalError> {
    let mut out = Array2::zeros((rows.len(), csp.n_components));
    for (r, &i) in rows.iter().enumerate() {
        let v = csp.transform(data.frp[i].view())?;
        out.row_mut(r).assign(&ndarray::Array1::from(v));
    }
    Ok(out)
}

fn block_matrix(
    kind: BlockKind,
    csp: Option<&CspModel<f64>>,
    data: &PreparedData,
    rows: &[usize],
) -> Result<(Vec<String>, Array2<f64>), EvalError> {
    Ok(match kind {
        BlockKind::Gaze => (data.gaze_schema.clone(), data.gaze.select(Axis(0), rows)),
        BlockKind::Pyeeg => (data.pyeeg_schema.clone(), data.pyeeg.select(Axis(0), rows)),
        BlockKind::Srp => (data.srp_schema.clone(), data.srp.select(Axis(0), rows)),
        BlockKind::Csp15 => {
            let csp = csp.expect("CSP fitted for csp blocks");
            (csp.schema(), csp_block(csp, data, rows)?)
        }
    })
}

impl TrainedPipeline {
    /// Fits CSP (if used), per-block scalers and the grid-searched SVM on `rows` only.
    pub fn fit(
        data: &PreparedData,
        rows: &[usize],
        set: &FeatureSet,
        cfg: &EvalConfig,
        seed: u64,
    ) -> Result<TrainedPipeline, EvalError> {
        let y: Vec<Label> = rows.iter().map(|&i| data.samples[i].label).collect();
        let csp = if set.uses(BlockKind::Csp15) {
            let epochs: Vec<_> = rows.iter().map(|&i| data.frp[i].view()).collect();
            let n = cfg.csp_components.min(data.channels.len());
            Some(csp_fit(&epochs, &y, n)?)
        } else {
            None
        };
        let mats = set
            .blocks
            .iter()
            .map(|&b| block_matrix(b, csp.as_ref(), data, rows))
            .collect::<Result<Vec<_>, _>>()?;
        let names: Vec<&str> = set.blocks.iter().map(|b| b.as_str()).collect();
        let blocks: Vec<(&str, &[String], ndarray::ArrayView2<f64>)> =
            mats.iter().zip(&names).map(|((s, m), n)| (*n, s.as_slice(), m.view())).collect();
        let grid = named_grid(&cfg.grid).ok_or_else(|| EvalError::Condition(format!("unknown grid {:?}", cfg.grid)))?;
        let model = train(&blocks, &y, &grid, cfg.inner_folds, seed)?;
        Ok(TrainedPipeline {
            feature_set: set.name.clone(),
            blocks: set.blocks.clone(),
            channels: data.channels.clone(),
            sample_rate_hz: data.sample_rate_hz,
            csp,
            model,
        })
    }

    pub fn predict(&self, data: &PreparedData, rows: &[usize]) -> Result<Vec<Label>, EvalError> {
        if data.channels != self.channels || data.sample_rate_hz != self.sample_rate_hz {
            return Err(EvalError::Mismatch("channels or sample rate differ from the training data".into()));
        }
        let mats = self
            .blocks
            .iter()
            .map(|&b| block_matrix(b, self.csp.as_ref(), data, rows).map(|m| m.1))
            .collect::<Result<Vec<_>, _>>()?;
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        Ok(self.model.predict_blocks(&views)?)
    }
}

/// Correct / total test predictions for scenes with `lo..lo+5` objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBin {
    pub lo: u32,
    pub correct: usize,
    pub total: usize,
}

pub const OBJECT_BIN: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub split: Split,
    pub condition: String,
    pub feature_set: String,
    /// Held-out accuracy per fold, in fold order.
    pub fold_accuracies: Vec<f64>,
    /// Aggregation units: participants (within-user) or folds (cross-user).
    pub units: Vec<String>,
    pub unit_accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Mean rows per fold.
    pub n_train: f64,
    pub n_test: f64,
    /// Selected grid cell per fold.
    pub chosen: Vec<String>,
    pub seed: u64,
    pub reference_accuracy: Option<f64>,
    pub by_objects: Vec<ObjectBin>,
}

impl ConditionResult {
    /// Most frequently selected grid cell; earliest on ties.
    pub fn modal_choice(&self) -> String {
        let mut counts: Vec<(&String, usize)> = Vec::new();
        for c in &self.chosen {
            match counts.iter_mut().find(|(s, _)| *s == c) {
                Some(e) => e.1 += 1,
                None => counts.push((c, 1)),
            }
        }
        let mut best: Option<(&String, usize)> = None;
        for (s, n) in counts {
            if best.is_none_or(|b| n > b.1) {
                best = Some((s, n));
            }
        }
        best.map(|b| b.0.clone()).unwrap_or_default()
    }
}

/// Published accuracies for the pooled-domain condition.
pub fn reference_accuracy(split: Split, cond: &DomainCondition, set: &str) -> Option<f64> {
    if cond.name() != "both->both" {
        return None;
    }
    match (split, set) {
        (Split::CrossUser, "fusion") => Some(0.836),
        (Split::CrossUser, "srp") => Some(0.569),
        (Split::WithinUser, "fusion") => Some(0.789),
        (Split::WithinUser, "gaze") => Some(0.708),
        (Split::WithinUser, "csp15") => Some(0.725),
        (Split::WithinUser, "pyeeg") => Some(0.521),
        (Split::WithinUser, "srp") => Some(0.534),
        _ => None,
    }
}

/// Mean, sample standard deviation and the normal 95% interval `mean ± 1.96·sd/√k`.
pub fn mean_ci(values: &[f64]) -> (f64, f64, f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / k as f64;
    let sd = if k > 1 {
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    let h = 1.96 * sd / (k as f64).sqrt();
    (m, sd, m - h, m + h)
}

fn name_hash(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

struct FoldOutcome {
    accuracy: f64,
    chosen: String,
    n_train: usize,
    n_test: usize,
    objects: Vec<(Option<u32>, bool)>,
}

fn run_fold(data: &PreparedData, fold: &Fold, set: &FeatureSet, cfg: &EvalConfig, seed: u64) -> Result<FoldOutcome, EvalError> {
    let p = TrainedPipeline::fit(data, &fold.train, set, cfg, seed)?;
    let pred = p.predict(data, &fold.test)?;
    let truth: Vec<Label> = fold.test.iter().map(|&i| data.samples[i].label).collect();
    let objects = fold.test.iter().zip(pred.iter().zip(&truth)).map(|(&i, (a, b))| (data.samples[i].n_objects, a == b)).collect();
    Ok(FoldOutcome {
        accuracy: accuracy(&pred, &truth),
        chosen: p.model.svm.spec.to_string(),
        n_train: fold.train.len(),
        n_test: fold.test.len(),
        objects,
    })
}

fn aggregate(
    split: Split,
    cond: &DomainCondition,
    set: &FeatureSet,
    folds: &[Fold],
    outcomes: Vec<FoldOutcome>,
    seed: u64,
) -> ConditionResult {
    let fold_accuracies: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let (units, unit_accuracies) = match split {
        Split::CrossUser => (folds.iter().map(|f| f.unit.clone()).collect(), fold_accuracies.clone()),
        Split::WithinUser => {
            let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for (f, a) in folds.iter().zip(&fold_accuracies) {
                by.entry(&f.unit).or_default().push(*a);
            }
            let units = by.keys().map(|s| s.to_string()).collect();
            let acc = by.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            (units, acc)
        }
    };
    let (mean, sd, ci_low, ci_high) = mean_ci(&unit_accuracies);
    let k = outcomes.len().max(1) as f64;
    let mut bins: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for o in &outcomes {
        for &(n, ok) in &o.objects {
            if let Some(n) = n {
                let e = bins.entry(n / OBJECT_BIN * OBJECT_BIN).or_default();
                e.0 += ok as usize;
                e.1 += 1;
            }
        }
    }
    ConditionResult {
        split,
        condition: cond.name(),
        feature_set: set.name.clone(),
        units,
        unit_accuracies,
        mean,
        sd,
        ci_low,
        ci_high,
        n_train: outcomes.iter().map(|o| o.n_train).sum::<usize>() as f64 / k,
        n_test: outcomes.iter().map(|o| o.n_test).sum::<usize>() as f64 / k,
        chosen: outcomes.iter().map(|o| o.chosen.clone()).collect(),
        fold_accuracies,
        seed,
        reference_accuracy: reference_accuracy(split, cond, &set.name),
        by_objects: bins.into_iter().map(|(lo, (correct, total))| ObjectBin { lo, correct, total }).collect(),
    }
}

/// Evaluates one split × domain condition × feature set.
pub fn run_condition(
    data: &PreparedData,
    split: Split,
    cond: &DomainCondition,
    set: &FeatureSet,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<ConditionResult, EvalError> {
    let mut r = run_conditions_for(data, &[split], std::slice::from_ref(cond), std::slice::from_ref(set), cfg, seed)?;
    Ok(r.remove(0))
}

/// Every requested split × condition × feature set, in that nesting order.
/// Folds depend on the split and condition only, so all feature sets of a
/// condition are scored on identical train/test rows.
pub fn run_conditions(data: &PreparedData, cfg: &EvalConfig, seed: u64) -> Result<Vec<ConditionResult>, EvalError> {
    cfg.validate()?;
    let conds = parse_conditions(&cfg.conditions)?;
    let sets = cfg.parsed_feature_sets()?;
    run_conditions_for(data, &cfg.splits, &conds, &sets, cfg, seed)
}

fn run_conditions_for(
    data: &PreparedData,
    splits: &[Split],
    conds: &[DomainCondition],
    sets: &[FeatureSet],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<ConditionResult>, EvalError> {
    let keys = data.split_keys();
    let mut plans: Vec<(Split, &DomainCondition, u64, Vec<Fold>)> = Vec::new();
    for &split in splits {
        for cond in conds {
            let s = derive_seed(seed, &[split as u64, name_hash(&cond.name())]);
            let folds = make_splits(&keys, split, cond, cfg.outer_folds, cfg.min_targets, s)?;
            plans.push((split, cond, s, folds));
        }
    }
    let mut all: Vec<(usize, usize, usize)> = Vec::new();
    for (p, plan) in plans.iter().enumerate() {
        for f in 0..sets.len() {
            for k in 0..plan.3.len() {
                all.push((p, f, k));
            }
        }
    }
    let outcomes: Vec<Result<FoldOutcome, EvalError>> = all
        .par_iter()
        .map(|&(p, f, k)| {
            let (_, _, s, folds) = &plans[p];
            run_fold(data, &folds[k], &sets[f], cfg, derive_seed(*s, &[k as u64, 7]))
        })
        .collect();
    let mut it = outcomes.into_iter();
    let mut out = Vec::new();
    for (split, cond, s, folds) in &plans {
        for set in sets {
            let o = it.by_ref().take(folds.len()).collect::<Result<Vec<_>, _>>()?;
            log::info!("{split} {cond} {set}: {} folds done", o.len());
            out.push(aggregate(*split, cond, set, folds, o, *s));
        }
    }
    Ok(out)
}
