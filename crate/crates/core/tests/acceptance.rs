//! Acceptance gate: one test per shipping criterion, each printing a
//! `pass` line (visible with `--nocapture`) once its check holds.
//!
//! Criteria 1-9 live here; criterion 10 (byte-identical evaluation tables
//! from the command-line binary) lives in the CLI crate's acceptance
//! suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use rescore::data::{simulate, EpochSeries, SimConfig};
use rescore::eval::roc;
use rescore::features::{
    columns, edge_adjacent_borders, feature_frame, features_by_scan, last_features, next_features,
    BorderValues, ScoreSequence,
};
use rescore::joint::JointModel;
use rescore::models::{fit_tree, EdgeMode, TreeNode, WindowSpec};
use rescore::pipeline::{
    evaluate_methods, fit_method, score_nights, EvaluateConfig, FitSettings, Method, SavedModel,
};
use rescore::webster::{apply_webster, RuleParams};

fn random_borders(rng: &mut ChaCha20Rng) -> BorderValues<f64> {
    let mut draw = |_| rng.gen_range(0.0..10.0);
    BorderValues::new([0, 1, 2, 3].map(&mut draw), [4, 5, 6, 7].map(&mut draw)).unwrap()
}

/// Criterion 1: the linear recursion reproduces a literal scan of the
/// sequence exactly, for every binary sequence of length at most 12, two
/// epoch lengths, and 21 border configurations.
#[test]
fn criterion_01_recursion_equals_scan_oracle_on_all_short_binary_sequences() {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut border_sets = vec![BorderValues::default()];
    for _ in 0..20 {
        border_sets.push(random_borders(&mut rng));
    }

    let mut frames = 0u64;
    for eps in [0.5f64, 1.0] {
        for len in 1..=12u32 {
            for bits in 0u32..(1 << len) {
                let pattern: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                let seq = ScoreSequence::from_binary(&pattern, eps).unwrap();
                for borders in &border_sets {
                    let fast = feature_frame(&seq, borders).unwrap();
                    let slow = features_by_scan(&seq, borders).unwrap();
                    assert_eq!(fast, slow, "pattern {pattern:?}, eps {eps}, {borders:?}");
                    frames += 1;
                }
            }
        }
    }
    assert_eq!(frames, 2 * 8190 * 21);
    println!("acceptance 1 (recursion == scan oracle on {frames} frames): pass");
}

/// Criterion 2: forward-looking features are backward-looking features of
/// the reversed sequence, exactly, on binary and continuous inputs.
#[test]
fn criterion_02_forward_features_are_reversed_backward_features() {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    for case in 0..1000 {
        let len = rng.gen_range(1..=500);
        let eps = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
        let values: Vec<f64> = if case % 2 == 0 {
            (0..len).map(|_| f64::from(rng.gen_range(0..2))).collect()
        } else {
            (0..len).map(|_| rng.gen_range(0.0..=1.0)).collect()
        };
        let seq = ScoreSequence::new(values, eps).unwrap();
        let mut end = [0.0; 4];
        for v in &mut end {
            *v = rng.gen_range(0.0..5.0);
        }

        let forward = next_features(&seq, end).unwrap();
        let mut reversed = last_features(&seq.reversed(), end).unwrap();
        reversed.reverse();
        assert_eq!(forward, reversed, "case {case}, len {len}, eps {eps}");
    }
    println!("acceptance 2 (time-reversal identity on 1000 sequences): pass");
}

/// Criterion 3: on independent Bernoulli draws, the mean of the binary
/// backward features converges to the soft features of the probability
/// sequence, componentwise within Monte-Carlo error.
#[test]
fn criterion_03_soft_features_are_the_expectation_over_bernoulli_draws() {
    const T: usize = 20;
    const N: usize = 200_000;
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let eps = 0.5;
    let start = [0.75, 1.5, 0.25, 2.0];
    let pi: Vec<f64> = (0..T).map(|_| rng.gen_range(0.05..0.95)).collect();
    let soft = last_features(&ScoreSequence::new(pi.clone(), eps).unwrap(), start).unwrap();

    let mut sum = vec![[0.0f64; 4]; T];
    let mut sum_sq = vec![[0.0f64; 4]; T];
    for _ in 0..N {
        let draws: Vec<f64> =
            pi.iter().map(|&p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 }).collect();
        let hard = last_features(&ScoreSequence::new(draws, eps).unwrap(), start).unwrap();
        for t in 0..T {
            for i in 0..4 {
                sum[t][i] += hard[t][i];
                sum_sq[t][i] += hard[t][i] * hard[t][i];
            }
        }
    }

    let mut within = 0usize;
    for t in 0..T {
        for i in 0..4 {
            let mean = sum[t][i] / N as f64;
            let variance = (sum_sq[t][i] / N as f64 - mean * mean).max(0.0);
            let standard_error = (variance / N as f64).sqrt();
            if (mean - soft[t][i]).abs() <= 4.0 * standard_error {
                within += 1;
            }
        }
    }
    let cells = T * 4;
    assert!(
        within as f64 >= 0.95 * cells as f64,
        "only {within}/{cells} cells within 4 standard errors"
    );
    println!("acceptance 3 (expectation law, {within}/{cells} cells in 4 SE): pass");
}

fn synthetic_night(seed: u64, len: usize) -> EpochSeries<f64> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x2545_f491_4f6c_dd1d);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut activity = Vec::with_capacity(len);
    let mut labels = Vec::with_capacity(len);
    for _ in 0..len {
        activity.push(12.0 * next());
        labels.push(if next() < 0.5 { 1.0 } else { 0.0 });
    }
    labels[0] = 1.0;
    labels[len - 1] = 0.0;
    EpochSeries::new("n", 1.0, activity, Some(labels)).unwrap()
}

/// A joint model with nonzero coefficients in every slot.
fn busy_joint_model() -> JointModel<f64> {
    let mut model = JointModel::zeros(
        WindowSpec::new(-2, 1).unwrap(),
        EdgeMode::Replicate,
        edge_adjacent_borders(1.0),
    )
    .unwrap();
    model.alpha0 = -0.4;
    model.beta0 = vec![0.12, -0.07, 0.21, 0.05];
    model.alpha1 = 0.3;
    model.beta1 = vec![0.8, -0.25, 0.15, 0.3, -0.2, 0.1, -0.35, 0.22, 0.18];
    model
}

/// The loss is locally nonsmooth where a combined-feature `min` ties;
/// finite differences would straddle the kink there.
fn near_min_tie(model: &JointModel<f64>, night: &EpochSeries<f64>, margin: f64) -> bool {
    let pi = model.first_stage(night).unwrap();
    let frame =
        feature_frame(&ScoreSequence::new(pi, night.epoch_len).unwrap(), &model.borders).unwrap();
    (0..frame.len()).any(|t| {
        let l = frame.last(t);
        let n = frame.next(t);
        (l[3] - n[3]).abs() < margin || (l[2] - n[2]).abs() < margin
    })
}

fn nudged(model: &JointModel<f64>, index: usize, delta: f64) -> JointModel<f64> {
    let mut out = model.clone();
    let width = out.beta0.len();
    if index == 0 {
        out.alpha0 += delta;
    } else if index <= width {
        out.beta0[index - 1] += delta;
    } else if index == width + 1 {
        out.alpha1 += delta;
    } else {
        out.beta1[index - width - 2] += delta;
    }
    out
}

/// Criterion 4: the analytic gradient of the joint loss matches central
/// finite differences on every coefficient, across ten random nights.
#[test]
fn criterion_04_joint_gradient_matches_finite_differences() {
    let model = busy_joint_model();
    let h = 1e-5;
    let mut checked = 0usize;
    let mut seed = 0u64;
    while checked < 10 {
        seed += 1;
        let night = synthetic_night(seed, 50);
        if near_min_tie(&model, &night, 1e-2) {
            continue;
        }
        let nights = std::slice::from_ref(&night);
        let g = model.gradient(nights).unwrap();
        let analytic: Vec<f64> = std::iter::once(g.alpha0)
            .chain(g.beta0.iter().copied())
            .chain(std::iter::once(g.alpha1))
            .chain(g.beta1.iter().copied())
            .collect();
        for (index, &a) in analytic.iter().enumerate() {
            let up = nudged(&model, index, h).loss(nights).unwrap();
            let down = nudged(&model, index, -h).loss(nights).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(
                rel < 1e-4,
                "seed {seed} parameter {index}: analytic {a} vs finite difference {fd} (rel {rel})"
            );
        }
        checked += 1;
    }
    println!("acceptance 4 (gradient check on {checked} nights, h={h}): pass");
}

/// Criterion 5: the joint model initialized from the two sequential fits
/// reproduces the sequential pipeline's predictions.
#[test]
fn criterion_05_joint_initialization_reproduces_the_sequential_pipeline() {
    let nights = simulate(&SimConfig {
        n_participants: 8,
        mean_night_epochs: 240,
        ..SimConfig::default()
    })
    .unwrap();
    let settings =
        FitSettings { window: WindowSpec::new(-4, 2).unwrap(), ..FitSettings::default() };
    let fitted = fit_method(Method::GlmContinuous, &nights, &settings).unwrap();
    let SavedModel::GlmContinuous { window, edge, borders, window_model, rescoring } =
        &fitted.model
    else {
        panic!("glm-continuous fit produced the wrong model kind");
    };
    let joint =
        JointModel::from_sequential(window_model, rescoring, *window, *edge, borders.clone())
            .unwrap();

    let sequential_scores = score_nights(&fitted.model, &nights).unwrap();
    let mut epochs = 0usize;
    for (night, expected) in nights.iter().zip(&sequential_scores) {
        let got = joint.forward(night).unwrap();
        for (t, (g, e)) in got.iter().zip(expected).enumerate() {
            assert!(
                (g - e).abs() <= 1e-10,
                "night {}, epoch {t}: joint {g} vs sequential {e}",
                night.participant_id
            );
        }
        epochs += got.len();
    }
    println!("acceptance 5 (initialization equivalence on {epochs} epochs): pass");
}

/// Criterion 6: rescoring rules only ever relabel sleep as wake, so the
/// rescored sequence dominates the original pointwise.
#[test]
fn criterion_06_rescoring_rules_are_monotone() {
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    let params = RuleParams::default();
    let mut flips = 0usize;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=240);
        let wake_rate = rng.gen_range(0.2..0.8);
        let bits: Vec<u8> = (0..len).map(|_| u8::from(rng.gen::<f64>() < wake_rate)).collect();
        let seq = ScoreSequence::from_binary(&bits, 0.5).unwrap();
        let result = apply_webster(&seq, &params, None).unwrap();
        for (r, o) in result.rescored().iter().zip(result.original()) {
            assert!(r >= o, "rescoring turned wake into sleep");
        }
        flips += result.flip_count();
    }
    println!("acceptance 6 (monotone rescoring on 10000 sequences, {flips} flips): pass");
}

/// Criterion 7: on a simulated cohort (200 nights of roughly eight
/// hours), cross-validated AUC reproduces the qualitative method
/// ordering: bout features beat the short raw window by a clear margin,
/// classic rules hold their own against it, and widening the raw window
/// shrinks the bout-feature advantage.
#[test]
fn criterion_07_bout_features_beat_short_windows_on_synthetic_cohort() {
    let nights = simulate(&SimConfig::default()).unwrap();
    assert_eq!(nights.len(), 200);
    let hours: f64 =
        nights.iter().map(EpochSeries::duration_hours).sum::<f64>() / nights.len() as f64;
    assert!((6.0..=10.0).contains(&hours), "mean night length {hours} h");

    let narrow = WindowSpec::new(-5, 2).unwrap();
    let wide = WindowSpec::new(-30, 20).unwrap();
    let config = EvaluateConfig {
        methods: vec![Method::GlmWindow, Method::GlmContinuous, Method::Webster],
        windows: vec![narrow, wide],
        k: 5,
        seed: 7,
        ..EvaluateConfig::default()
    };
    let report = evaluate_methods(&nights, &config).unwrap();
    let auc = |method: Method, window: WindowSpec| {
        report
            .entries
            .iter()
            .find(|e| e.method == method && e.window == window)
            .map(|e| e.curve.auc)
            .unwrap()
    };

    let narrow_gap = auc(Method::GlmContinuous, narrow) - auc(Method::GlmWindow, narrow);
    assert!(
        narrow_gap >= 0.01,
        "bout features gain only {narrow_gap:.4} AUC over the short window"
    );
    assert!(
        auc(Method::Webster, narrow) >= auc(Method::GlmWindow, narrow) - 0.005,
        "rules fall behind the short window: {:.4} vs {:.4}",
        auc(Method::Webster, narrow),
        auc(Method::GlmWindow, narrow)
    );
    let wide_gap = auc(Method::GlmContinuous, wide) - auc(Method::GlmWindow, wide);
    assert!(
        wide_gap < narrow_gap,
        "widening the window did not shrink the bout-feature advantage \
         ({wide_gap:.4} vs {narrow_gap:.4})"
    );
    println!(
        "acceptance 7 (synthetic cohort: narrow gap {narrow_gap:.4}, wide gap {wide_gap:.4}): pass"
    );
}

/// Criterion 8: the trapezoid area under the ROC curve equals the exact
/// Mann-Whitney pair count, bit for bit.
#[test]
fn criterion_08_auc_equals_pair_counting() {
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    for case in 0..100 {
        let len = rng.gen_range(2..=200);
        let mut labels: Vec<f64> = (0..len).map(|_| f64::from(rng.gen_range(0..2))).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        // Odd cases draw from a coarse grid so ties actually occur.
        let scores: Vec<f64> = if case % 2 == 0 {
            (0..len).map(|_| rng.gen::<f64>()).collect()
        } else {
            (0..len).map(|_| f64::from(rng.gen_range(0..8)) / 8.0).collect()
        };

        let curve = roc(&scores, &labels).unwrap();
        let mut positives = 0u128;
        let mut negatives = 0u128;
        let mut wins_doubled = 0u128;
        for (sp, &yp) in scores.iter().zip(&labels) {
            if yp != 1.0 {
                continue;
            }
            positives += 1;
            for (sn, &yn) in scores.iter().zip(&labels) {
                if yn != 0.0 {
                    continue;
                }
                if sp > sn {
                    wins_doubled += 2;
                } else if sp == sn {
                    wins_doubled += 1;
                }
            }
        }
        negatives += labels.iter().filter(|&&y| y == 0.0).count() as u128;
        let exact = wins_doubled as f64 / (2 * positives * negatives) as f64;
        assert_eq!(curve.auc, exact, "case {case}: trapezoid differs from pair count");
    }

    let labels = vec![1.0, 0.0, 1.0, 0.0, 0.0];
    let perfect = roc(&[0.9, 0.2, 0.8, 0.1, 0.3], &labels).unwrap();
    assert_eq!(perfect.auc, 1.0);
    let constant = roc(&[0.4; 5], &labels).unwrap();
    assert_eq!(constant.auc, 0.5);
    println!("acceptance 8 (AUC == pair counting on 100 instances): pass");
}

/// Criterion 9: a depth-one tree fit on bout features recovers a planted
/// "short sleep bout" rule as a single split on the current sleep-bout
/// length with a threshold just under 14 minutes.
#[test]
fn criterion_09_tree_recovers_a_planted_short_bout_rule() {
    // Alternating wake/sleep bouts with every sleep length from 1 to 30
    // epochs; at one-minute epochs the current-bout-length feature then
    // takes each value from 2 to 31 minutes inside sleep.
    let mut bits: Vec<u8> = Vec::new();
    for sleep_len in 1..=30usize {
        bits.extend(std::iter::repeat(1).take(3 + sleep_len % 4));
        bits.extend(std::iter::repeat(0).take(sleep_len));
    }
    bits.extend(std::iter::repeat(1).take(4));

    let seq = ScoreSequence::from_binary(&bits, 1.0).unwrap();
    let frame = feature_frame(&seq, &edge_adjacent_borders(1.0)).unwrap();
    let features = frame.rows_matrix();
    let labels: Vec<f64> = (0..frame.len())
        .map(|t| f64::from(frame.row(t)[columns::CUR_LEN_SLEEP] < 14.0))
        .collect();
    assert!(labels.iter().any(|&y| y == 0.0) && labels.iter().any(|&y| y == 1.0));

    let tree = fit_tree(&features, &labels, 1, 1).unwrap();
    let TreeNode::Split { feature, threshold, .. } = &tree.nodes[0] else {
        panic!("expected a root split, got {:?}", tree.nodes[0]);
    };
    assert_eq!(*feature, columns::CUR_LEN_SLEEP, "split is on the wrong feature");
    assert!(
        *threshold > 13.0 && *threshold <= 14.0,
        "threshold {threshold} outside (13, 14]"
    );
    println!(
        "acceptance 9 (planted rule recovered: {} <= {threshold}): pass",
        columns::NAMES[*feature]
    );
}
