//! Property tests for the module invariants.

use std::sync::OnceLock;

use gazeeg::dataset::{slice_times, EyeSample, GazeSample, Label, ScreenGeometry};
use gazeeg::eeg::{common_average_reference, EegMatrix};
use gazeeg::eval::{balance, make_splits, process_recording, DomainCondition, EvalConfig, PrepareConfig, PreparedData, Split, TrainedPipeline};
use gazeeg::features::{csp_fit, pyeeg_features, FeatureSet};
use gazeeg::gaze::{detect_fixations, IvtParams, ViewGeometry};
use gazeeg::learn::{svm_fit, Gamma, Kernel, KernelKind, SvmSpec};
use gazeeg::synth::{generate, SynthConfig};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1000.0 / 60.0;

fn screen() -> ScreenGeometry {
    ScreenGeometry { width_px: 1920.0, height_px: 1080.0, width_mm: 530.0, height_mm: 300.0 }
}

fn scanpath(dwells: &[(usize, f64, f64)]) -> Vec<GazeSample> {
    let mut out = Vec::new();
    for &(n, x, y) in dwells {
        for _ in 0..n {
            let t_ms = out.len() as f64 * DT;
            let e = EyeSample::new(x, y);
            out.push(GazeSample { t_ms, left: e, right: e, eye_distance_mm: 600.0 });
        }
    }
    out
}

fn small_data() -> &'static PreparedData {
    static DATA: OnceLock<PreparedData> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = SynthConfig { n_participants: 3, trials_per_participant: 16, ..SynthConfig::default() };
        let parts = generate(&cfg)
            .unwrap()
            .iter()
            .map(|p| process_recording(&p.recording, &PrepareConfig::default()).unwrap().data)
            .collect();
        PreparedData::concat(parts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slices_concatenate(n in 10usize..400, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * 2.0).collect();
        let span = n as f64 * 2.0;
        let mut cuts = [a * span, b * span, c * span];
        cuts.sort_by(f64::total_cmp);
        prop_assume!(cuts[0] < cuts[1] && cuts[1] < cuts[2]);
        let whole = slice_times(&ts, cuts[0], cuts[2]).unwrap();
        let left = slice_times(&ts, cuts[0], cuts[1]).unwrap();
        let right = slice_times(&ts, cuts[1], cuts[2]).unwrap();
        prop_assert_eq!(left.start, whole.start);
        prop_assert_eq!(left.end, right.start);
        prop_assert_eq!(right.end, whole.end);
    }

    #[test]
    fn fixations_ordered_disjoint_and_long_enough(
        dwells in prop::collection::vec((2usize..40, 0.05f64..0.95, 0.05f64..0.95), 1..25),
        trailing in 0usize..30,
    ) {
        let params = IvtParams::default();
        let geometry = ViewGeometry::new(screen(), 600.0).unwrap();
        let samples = scanpath(&dwells);
        let (fx, _) = detect_fixations(&samples, &params, &geometry).unwrap();
        for f in &fx {
            prop_assert!(f.duration_ms >= params.min_fixation_ms);
        }
        for w in fx.windows(2) {
            prop_assert!(w[0].offset_ms() <= w[1].onset_ms);
        }
        let again = detect_fixations(&samples, &params, &geometry).unwrap().0;
        prop_assert_eq!(&again, &fx);

        let mut padded = samples.clone();
        let t_end = padded.last().map(|s| s.t_ms).unwrap_or(0.0);
        for k in 1..=trailing {
            padded.push(GazeSample {
                t_ms: t_end + k as f64 * DT,
                left: EyeSample::invalid(),
                right: EyeSample::invalid(),
                eye_distance_mm: 600.0,
            });
        }
        prop_assert_eq!(detect_fixations(&padded, &params, &geometry).unwrap().0, fx);
    }

    #[test]
    fn car_zeroes_channel_mean(seed in any::<u64>(), nc in 2usize..10, ns in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Array2<f64> = Array2::from_shape_fn((nc, ns), |_| rand::Rng::random_range(&mut rng, -50.0..50.0));
        let x = EegMatrix {
            data,
            sample_rate_hz: 500.0,
            channels: (0..nc).map(|c| format!("C{c}")).collect(),
            positions: vec![[0.0, 0.0, 1.0]; nc],
            start_ms: 0.0,
        };
        let y = common_average_reference(&x);
        for col in y.data.columns() {
            prop_assert!(col.sum().abs() <= 1e-9 * nc as f64);
        }
    }

    #[test]
    fn csp_invariant_to_order_and_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = 5;
        let mut epochs = Vec::new();
        let mut labels = Vec::new();
        for k in 0..24 {
            let gain = if k % 2 == 0 { 2.0 } else { 1.0 };
            epochs.push(Array2::from_shape_fn((nc, 120), |(c, _)| {
                let v: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                if c == 0 { v * gain } else { v }
            }));
            labels.push(if k % 2 == 0 { Label::Target } else { Label::Nontarget });
        }
        let views: Vec<_> = epochs.iter().map(|e| e.view()).collect();
        let base = csp_fit(&views, &labels, nc).unwrap();

        let mut order: Vec<usize> = (0..epochs.len()).collect();
        order.shuffle(&mut rng);
        let moved: Vec<Array2<f64>> = order.iter().map(|&i| &epochs[i] * scale).collect();
        let moved_labels: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
        let mv: Vec<_> = moved.iter().map(|e| e.view()).collect();
        let other = csp_fit(&mv, &moved_labels, nc).unwrap();
        for (a, b) in base.eigenvalues.iter().zip(&other.eigenvalues) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let a = base.filters.row(0);
        let b = other.filters.row(0);
        let cos = a.dot(&b).abs() / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
        prop_assert!(cos >= 1.0 - 1e-9);
    }

    #[test]
    fn pyeeg_is_pure_and_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let epoch: Array2<f64> = Array2::from_shape_fn((4, 400), |_| rand::Rng::random_range(&mut rng, -20.0..20.0));
        let a = pyeeg_features(epoch.view(), 500.0).unwrap();
        let b = pyeeg_features(epoch.view(), 500.0).unwrap();
        prop_assert!(a.iter().all(|v| v.is_finite()));
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn rbf_gram_is_psd(seed in any::<u64>(), n in 2usize..30, gamma in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Array2<f64> = Array2::from_shape_fn((n, 3), |_| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let k = Kernel { kind: KernelKind::Rbf, gamma, degree: 3, coef0: 0.0 };
        let g = DMatrix::from_fn(n, n, |i, j| k.eval(x.row(i), x.row(j)));
        prop_assert!((&g - g.transpose()).amax() <= 1e-12);
        prop_assert!(g.symmetric_eigenvalues().min() >= -1e-8);
    }

    #[test]
    fn smo_meets_kkt(seed in any::<u64>(), c in prop::sample::select(vec![0.1, 1.0, 10.0]), kind in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Target } else { Label::Nontarget }).collect();
        let x: Array2<f64> = Array2::from_shape_fn((n, 4), |(i, _)| {
            let shift = if i % 2 == 0 { 0.5 } else { -0.5 };
            shift + rand::Rng::random_range(&mut rng, -1.0..1.0)
        });
        let spec = match kind {
            0 => SvmSpec::linear(c),
            1 => SvmSpec::poly(c),
            _ => SvmSpec::rbf(c, Gamma::Scale),
        };
        let model = svm_fit(x.view(), &labels, &spec).unwrap();
        let mut alpha = vec![0.0; n];
        for (k, &i) in model.support.iter().enumerate() {
            alpha[i] = model.dual_coef[k].abs();
        }
        let tol = 1e-3;
        let mut ok = 0;
        for i in 0..n {
            let y = if labels[i] == Label::Target { 1.0 } else { -1.0 };
            let yf = y * model.decision_value(x.row(i));
            let fine = if alpha[i] <= 1e-12 {
                yf >= 1.0 - tol
            } else if alpha[i] >= c - 1e-12 {
                yf <= 1.0 + tol
            } else {
                (yf - 1.0).abs() <= tol
            };
            ok += usize::from(fine);
        }
        prop_assert!(ok as f64 >= 0.99 * n as f64, "{ok} of {n} points meet KKT");
    }

    #[test]
    fn balance_is_exact(n_t in 1usize..60, n_n in 1usize..60, seed in any::<u64>()) {
        let mut y = vec![Label::Target; n_t];
        y.extend(vec![Label::Nontarget; n_n]);
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let kept = balance(&y, seed);
        let t = kept.iter().filter(|&&i| y[i] == Label::Target).count();
        prop_assert_eq!(t, n_t.min(n_n));
        prop_assert_eq!(kept.len(), 2 * n_t.min(n_n));
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn folds_are_disjoint_and_balanced(seed in any::<u64>(), k in 2usize..6, cond in 0usize..7, cross in any::<bool>()) {
        let data = small_data();
        let keys = data.split_keys();
        let c = &DomainCondition::canonical()[cond];
        let split = if cross { Split::CrossUser } else { Split::WithinUser };
        let Ok(folds) = make_splits(&keys, split, c, k, 2, seed) else { return Ok(()) };
        for f in &folds {
            prop_assert!(f.train.iter().all(|i| !f.test.contains(i)));
            if cross {
                for &i in &f.test {
                    prop_assert!(f.train.iter().all(|&j| keys[j].participant != keys[i].participant));
                }
            }
            prop_assert!(f.train.iter().all(|&i| c.trains_on(keys[i].domain)));
            prop_assert!(f.test.iter().all(|&i| c.tests_on(keys[i].domain)));
            // a constant predictor scores exactly one half on a balanced test set
            let targets = f.test.iter().filter(|&&i| keys[i].label == Label::Target).count();
            prop_assert_eq!(2 * targets, f.test.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn test_labels_never_reach_the_model(seed in any::<u64>(), set in prop::sample::select(vec!["gaze", "csp15", "fusion"])) {
        let data = small_data();
        let keys = data.split_keys();
        let c = &DomainCondition::canonical()[0];
        let folds = make_splits(&keys, Split::CrossUser, c, 3, 2, seed).unwrap();
        let f = &folds[0];
        let cfg = EvalConfig { grid: "linear".into(), inner_folds: 2, ..EvalConfig::default() };
        let set = FeatureSet::standard().into_iter().find(|s| s.name == set).unwrap();
        let before = TrainedPipeline::fit(data, &f.train, &set, &cfg, seed).unwrap().predict(data, &f.test).unwrap();

        let mut shuffled = data.clone();
        let mut test_labels: Vec<Label> = f.test.iter().map(|&i| data.samples[i].label).collect();
        test_labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (&i, &l) in f.test.iter().zip(&test_labels) {
            shuffled.samples[i].label = if l == Label::Target { Label::Nontarget } else { Label::Target };
        }
        let after = TrainedPipeline::fit(&shuffled, &f.train, &set, &cfg, seed).unwrap().predict(&shuffled, &f.test).unwrap();
        prop_assert_eq!(before, after);
    }
}
