//! Webster-style rescoring rules over bout features.
//!
//! The classic actigraphy rescoring heuristics take a binary sleep-wake
//! sequence and flip selected sleep epochs to wake. Both rule families are
//! expressed here as threshold conditions on the per-epoch features of a
//! [`FeatureFrame`], which makes them a special case of the rule trees this
//! crate can also fit from data:
//!
//! * Rule 1 ("wake run, then a short tail"): after a wake run of at least
//!   `a` minutes, epochs within `b` minutes of that run are rescored as
//!   wake.
//! * Rule 2 ("short sleep bout between long wake bouts"): a sleep epoch
//!   whose surrounding sleep span is at most `c` minutes and whose
//!   bordering wake bouts are both at least `d` minutes is rescored as
//!   wake.
//!
//! Several `(a, b)` and `(c, d)` versions are evaluated simultaneously
//! against the original sequence and OR-ed together; rules never cascade on
//! each other's output within one application. All constants are durations
//! in minutes, compared against epoch-length-scaled features, so data with
//! 30-second or 1-minute epochs works unchanged.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{edge_adjacent_borders, feature_frame, BorderValues, FeatureFrame, ScoreSequence};
use crate::num::Scalar;

/// Constant pairs for both rule families, all in minutes.
///
/// The JSON form is `{"rule1":[[4,1],[10,3],[15,4]],"rule2":[[6,10],[10,20]]}`
/// (the classic defaults): rule 1 pairs are `(a, b)` = (wake-run duration,
/// rescore-span duration), rule 2 pairs are `(c, d)` = (maximum sleep-bout
/// duration, minimum bordering-wake duration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParams<S> {
    pub rule1: Vec<[S; 2]>,
    pub rule2: Vec<[S; 2]>,
}

impl<S: Scalar> Default for RuleParams<S> {
    fn default() -> Self {
        let c = |v: f64| S::from_f64(v).unwrap();
        RuleParams {
            rule1: vec![[c(4.0), c(1.0)], [c(10.0), c(3.0)], [c(15.0), c(4.0)]],
            rule2: vec![[c(6.0), c(10.0)], [c(10.0), c(20.0)]],
        }
    }
}

impl<S: Scalar> RuleParams<S> {
    /// No rules at all; [`apply_webster`] becomes the identity.
    pub fn empty() -> Self {
        RuleParams { rule1: Vec::new(), rule2: Vec::new() }
    }

    pub fn from_json(json: &str) -> Result<Self>
    where
        S: serde::de::DeserializeOwned,
    {
        let params: RuleParams<S> = serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("bad rule parameters: {e}")))?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for &[x, y] in self.rule1.iter().chain(&self.rule2) {
            for v in [x, y] {
                if !(v > S::zero()) || !v.is_finite() {
                    return Err(Error::InvalidRuleConstant {
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Which rule version flipped an epoch; `Rule1(0)` is the first `(a, b)`
/// pair in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleId {
    Rule1(usize),
    Rule2(usize),
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::Rule1(i) => write!(f, "rule1[{i}]"),
            RuleId::Rule2(i) => write!(f, "rule2[{i}]"),
        }
    }
}

/// Outcome of one rescoring pass.
///
/// `flipped[t]` carries the first rule (in declaration order, rule 1 pairs
/// before rule 2 pairs) that rescored epoch `t`; epochs that kept their
/// original score carry `None`. Rules only ever rescore sleep to wake, so
/// `rescored` dominates `original` elementwise and flips only occur where
/// the original score was sleep.
#[derive(Debug, Clone, PartialEq)]
pub struct RescoreResult<S> {
    original: Vec<S>,
    rescored: Vec<S>,
    flipped: Vec<Option<RuleId>>,
    epoch_len: S,
}

impl<S: Scalar> RescoreResult<S> {
    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    pub fn original(&self) -> &[S] {
        &self.original
    }

    pub fn rescored(&self) -> &[S] {
        &self.rescored
    }

    pub fn flipped(&self) -> &[Option<RuleId>] {
        &self.flipped
    }

    pub fn epoch_len(&self) -> S {
        self.epoch_len
    }

    /// Number of epochs rescored from sleep to wake.
    pub fn flip_count(&self) -> usize {
        self.flipped.iter().filter(|f| f.is_some()).count()
    }

    /// The rescored sequence, ready for further feature computation.
    pub fn rescored_sequence(&self) -> ScoreSequence<S> {
        ScoreSequence::new(self.rescored.clone(), self.epoch_len)
            .expect("rescored output stays a valid binary sequence")
    }

    /// Writes `epoch,original,rescored,rule_id` rows; `rule_id` is empty for
    /// epochs that kept their score.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "original", "rescored", "rule_id"])?;
        for t in 0..self.len() {
            let rule = self.flipped[t].map(|r| r.to_string()).unwrap_or_default();
            w.write_record([
                (t + 1).to_string(),
                format!("{}", self.original[t]),
                format!("{}", self.rescored[t]),
                rule,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn require_binary<S: Scalar>(frame: &FeatureFrame<S>) -> Result<()> {
    if frame.is_binary() {
        return Ok(());
    }
    let (index, &value) = frame
        .scores()
        .iter()
        .enumerate()
        .find(|&(_, &v)| !(v == S::zero() || v == S::one()))
        .expect("a non-binary frame contains a non-binary score");
    Err(Error::NonBinaryScore { index, value: value.to_f64().unwrap_or(f64::NAN) })
}

fn check_constants<S: Scalar>(pair: [S; 2]) -> Result<()> {
    for v in pair {
        if !(v > S::zero()) || !v.is_finite() {
            return Err(Error::InvalidRuleConstant { value: v.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok(())
}

/// Rule 1 trigger flags: epoch `t` triggers when the most recent wake run
/// lasted at least `a` minutes and ended at most `b` minutes ago.
///
/// The lag condition is strict at zero, so epochs currently scored wake
/// (lag exactly 0) never trigger.
pub fn apply_rule1<S: Scalar>(frame: &FeatureFrame<S>, a: S, b: S) -> Result<Vec<bool>> {
    require_binary(frame)?;
    check_constants([a, b])?;
    Ok((0..frame.len())
        .map(|t| {
            let l = frame.last(t);
            l[2] >= a && l[0] > S::zero() && l[0] <= b
        })
        .collect())
}

/// Rule 2 trigger flags: a sleep-scored epoch triggers when its surrounding
/// sleep span measures at most `c` minutes and the shorter of its bordering
/// wake bouts measures at least `d` minutes.
pub fn apply_rule2<S: Scalar>(frame: &FeatureFrame<S>, c: S, d: S) -> Result<Vec<bool>> {
    require_binary(frame)?;
    check_constants([c, d])?;
    Ok((0..frame.len())
        .map(|t| {
            let cmb = frame.combined(t);
            frame.score(t) == S::zero() && cmb[0] <= c && cmb[3] >= d
        })
        .collect())
}

/// Applies every rule version against the original sequence and ORs the
/// triggers into the rescored output.
///
/// `borders` defaults to [`edge_adjacent_borders`], which treats the
/// recording as if an epoch of the opposite state sat just outside each
/// end; this makes a wake run starting at epoch 1 measure its full length.
pub fn apply_webster<S: Scalar>(
    seq: &ScoreSequence<S>,
    params: &RuleParams<S>,
    borders: Option<&BorderValues<S>>,
) -> Result<RescoreResult<S>> {
    params.validate()?;
    let default_borders;
    let borders = match borders {
        Some(b) => b,
        None => {
            default_borders = edge_adjacent_borders(seq.epoch_len());
            &default_borders
        }
    };
    let frame = feature_frame(seq, borders)?;
    require_binary(&frame)?;

    let mut rescored: Vec<S> = seq.values().to_vec();
    let mut flipped: Vec<Option<RuleId>> = vec![None; seq.len()];
    let mut mark = |flags: Vec<bool>, id: RuleId, rescored: &mut Vec<S>| {
        for (t, hit) in flags.into_iter().enumerate() {
            if hit && seq.values()[t] == S::zero() {
                rescored[t] = S::one();
                if flipped[t].is_none() {
                    flipped[t] = Some(id);
                }
            }
        }
    };
    for (i, &[a, b]) in params.rule1.iter().enumerate() {
        mark(apply_rule1(&frame, a, b)?, RuleId::Rule1(i), &mut rescored);
    }
    for (i, &[c, d]) in params.rule2.iter().enumerate() {
        mark(apply_rule2(&frame, c, d)?, RuleId::Rule2(i), &mut rescored);
    }

    Ok(RescoreResult {
        original: seq.values().to_vec(),
        rescored,
        flipped,
        epoch_len: seq.epoch_len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::real;
    use proptest::prelude::*;

    fn binary(bits: &[u8]) -> ScoreSequence<f64> {
        ScoreSequence::from_binary(bits, 1.0).unwrap()
    }

    fn runs(pattern: &[(u8, usize)]) -> ScoreSequence<f64> {
        let bits: Vec<u8> =
            pattern.iter().flat_map(|&(v, n)| std::iter::repeat(v).take(n)).collect();
        binary(&bits)
    }

    fn frame_of(seq: &ScoreSequence<f64>) -> FeatureFrame<f64> {
        feature_frame(seq, &edge_adjacent_borders(seq.epoch_len())).unwrap()
    }

    #[test]
    fn rule1_triggers_once_after_a_four_epoch_wake_run() {
        let seq = binary(&[1, 1, 1, 1, 0, 0, 0]);
        let flags = apply_rule1(&frame_of(&seq), 4.0, 1.0).unwrap();
        assert_eq!(flags, vec![false, false, false, false, true, false, false]);
    }

    #[test]
    fn rule1_never_triggers_on_all_wake() {
        let seq = binary(&[1; 6]);
        let flags = apply_rule1(&frame_of(&seq), 4.0, 1.0).unwrap();
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn rule1_needs_the_full_run_length() {
        let seq = binary(&[1, 1, 1, 0, 0]);
        let flags = apply_rule1(&frame_of(&seq), 4.0, 1.0).unwrap();
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn rule2_rescores_a_short_bout_between_long_wake_runs() {
        let seq = runs(&[(1, 10), (0, 5), (1, 10)]);
        let flags = apply_rule2(&frame_of(&seq), 6.0, 10.0).unwrap();
        let expected: Vec<bool> = (0..25).map(|t| (10..15).contains(&t)).collect();
        assert_eq!(flags, expected);
    }

    #[test]
    fn rule2_leaves_a_longer_bout_alone() {
        let seq = runs(&[(1, 10), (0, 7), (1, 10)]);
        let flags = apply_rule2(&frame_of(&seq), 6.0, 10.0).unwrap();
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn rule2_needs_bordering_wake() {
        let seq = binary(&[0; 8]);
        let frame = feature_frame(&seq, &BorderValues::default()).unwrap();
        let flags = apply_rule2(&frame, 6.0, 10.0).unwrap();
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn default_rules_extend_the_first_wake_run_by_one_epoch() {
        let seq = binary(&[1, 1, 1, 1, 0, 0, 0]);
        let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
        assert_eq!(out.rescored(), &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(out.flipped()[4], Some(RuleId::Rule1(0)));
        assert_eq!(out.flip_count(), 1);
    }

    #[test]
    fn all_wake_is_untouched() {
        let seq = binary(&[1; 9]);
        let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
        assert_eq!(out.rescored(), out.original());
        assert_eq!(out.flip_count(), 0);
    }

    #[test]
    fn short_bouts_between_long_runs_are_fully_eliminated() {
        let seq = runs(&[(1, 20), (0, 5), (1, 20), (0, 3), (1, 20)]);
        let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
        assert!(out.rescored().iter().all(|&v| v == 1.0));
        assert_eq!(out.flip_count(), 8);
        // Epochs deep in a bout are past every rule 1 lag bound and fall to
        // the first rule 2 version.
        assert_eq!(out.flipped()[24], Some(RuleId::Rule2(0)));
    }

    #[test]
    fn empty_params_are_the_identity() {
        let seq = runs(&[(1, 3), (0, 4), (1, 2)]);
        let out = apply_webster(&seq, &RuleParams::empty(), None).unwrap();
        assert_eq!(out.rescored(), out.original());
        assert_eq!(out.flip_count(), 0);
    }

    #[test]
    fn default_params_round_trip_the_documented_json() {
        let json = r#"{"rule1":[[4,1],[10,3],[15,4]],"rule2":[[6,10],[10,20]]}"#;
        let params: RuleParams<f64> = RuleParams::from_json(json).unwrap();
        assert_eq!(params, RuleParams::default());
        let back = serde_json::to_string(&params).unwrap();
        assert_eq!(RuleParams::<f64>::from_json(&back).unwrap(), params);
    }

    #[test]
    fn rejects_nonpositive_constants() {
        let seq = binary(&[1, 0, 1]);
        let frame = frame_of(&seq);
        assert!(matches!(
            apply_rule1(&frame, 0.0, 1.0),
            Err(Error::InvalidRuleConstant { .. })
        ));
        assert!(matches!(
            apply_rule2(&frame, 6.0, -1.0),
            Err(Error::InvalidRuleConstant { .. })
        ));
    }

    #[test]
    fn rejects_continuous_scores() {
        let seq = ScoreSequence::new(vec![0.25, 0.75, 1.0], 1.0).unwrap();
        let frame = frame_of(&seq);
        assert!(matches!(apply_rule1(&frame, 4.0, 1.0), Err(Error::NonBinaryScore { index: 0, .. })));
    }

    #[test]
    fn csv_output_lists_rule_ids() {
        let seq = binary(&[1, 1, 1, 1, 0, 0, 0]);
        let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch,original,rescored,rule_id"));
        assert_eq!(lines.next(), Some("1,1,1,"));
        assert_eq!(text.lines().nth(5), Some("5,0,1,rule1[0]"));
    }

    #[test]
    fn works_in_single_precision() {
        let seq = ScoreSequence::from_binary(&[1, 1, 1, 1, 0, 0], real::<f32>(1.0)).unwrap();
        let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
        assert_eq!(out.rescored(), &[1.0_f32, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn rescoring_is_monotone_toward_wake(bits in proptest::collection::vec(0u8..=1, 1..60)) {
            let seq = binary(&bits);
            let out = apply_webster(&seq, &RuleParams::default(), None).unwrap();
            for (o, r) in out.original().iter().zip(out.rescored()) {
                prop_assert!(r >= o);
            }
        }

        #[test]
        fn iterated_rescoring_reaches_a_fixed_point_quickly(bits in proptest::collection::vec(0u8..=1, 1..50)) {
            let params = RuleParams::default();
            let mut current = binary(&bits);
            let mut steps = 0;
            loop {
                let out = apply_webster(&current, &params, None).unwrap();
                let next = out.rescored_sequence();
                steps += 1;
                prop_assert!(steps <= bits.len(), "no fixed point after {} passes", steps);
                if next.values() == current.values() {
                    break;
                }
                current = next;
            }
        }

        #[test]
        fn wake_prefix_translates_triggers(
            bits in proptest::collection::vec(0u8..=1, 1..40),
            prefix in 0usize..10,
        ) {
            // With the default constants every threshold that involves the
            // leading wake run saturates once that run is long enough, so
            // prepending more wake just shifts the outcome.
            let mut base = vec![1u8; 25];
            base.extend(&bits);
            let shifted: Vec<u8> =
                std::iter::repeat(1u8).take(prefix).chain(base.iter().copied()).collect();
            let out_base = apply_webster(&binary(&base), &RuleParams::default(), None).unwrap();
            let out_shifted =
                apply_webster(&binary(&shifted), &RuleParams::default(), None).unwrap();
            prop_assert_eq!(&out_shifted.rescored()[prefix..], out_base.rescored());
            prop_assert_eq!(&out_shifted.flipped()[prefix..], out_base.flipped());
            prop_assert!(out_shifted.rescored()[..prefix].iter().all(|&v| v == 1.0));
        }
    }
}
