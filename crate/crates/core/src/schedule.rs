//! Pacing schedules: per-epoch data-exposure ratios and subset sampling.
//!
//! A schedule is just a vector of sampling ratios, one per epoch. Effective
//! epochs is the plain sum of that vector, so the ratios are stored as the
//! literal decimals 0.33 / 0.67 / 1.00 rather than thirds.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

pub const EASY_RATIO: f64 = 0.33;
pub const MEDIUM_RATIO: f64 = 0.67;
pub const HARD_RATIO: f64 = 1.0;
pub const TWO_PHASE_LOW_RATIO: f64 = 0.5;

/// Ratios random pacing draws from.
pub const RANDOM_PACING_CHOICES: [f64; 3] = [EASY_RATIO, MEDIUM_RATIO, HARD_RATIO];

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("unknown schedule kind `{0}`")]
    UnknownKind(String),
    #[error("schedule `{name}` is defined for {expected} epochs, got {got} (strict mode)")]
    EpochCount {
        name: String,
        expected: String,
        got: usize,
    },
    #[error("total_epochs must be at least 1")]
    NoEpochs,
    #[error("ratio {ratio} at epoch {epoch} is outside (0, 1]")]
    InvalidRatio { epoch: usize, ratio: f64 },
    #[error("epoch {epoch} is outside 1..={total}")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("phases are only defined for progressive schedules, `{0}` is {1}")]
    NotProgressive(String, ScheduleKind),
    #[error("baseline schedule has zero exposure")]
    ZeroExposure,
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Progressive,
    Standard,
    TwoPhase,
    Reverse,
    Random,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Progressive,
        ScheduleKind::Standard,
        ScheduleKind::TwoPhase,
        ScheduleKind::Reverse,
        ScheduleKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Progressive => "progressive",
            ScheduleKind::Standard => "standard",
            ScheduleKind::TwoPhase => "two_phase",
            ScheduleKind::Reverse => "reverse",
            ScheduleKind::Random => "random",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "progressive" | "curriculum" => Ok(ScheduleKind::Progressive),
            "standard" => Ok(ScheduleKind::Standard),
            "two_phase" | "twophase" => Ok(ScheduleKind::TwoPhase),
            "reverse" => Ok(ScheduleKind::Reverse),
            "random" => Ok(ScheduleKind::Random),
            _ => Err(ScheduleError::UnknownKind(s.to_string())),
        }
    }
}

/// Curriculum phase of a progressive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacingSchedule {
    pub name: String,
    pub kind: ScheduleKind,
    pub total_epochs: usize,
    #[serde(serialize_with = "serialize_ratios")]
    pub ratios: Vec<f64>,
}

/// Writes each ratio with at least two fractional digits (`1.00`, `0.33`),
/// falling back to the shortest round-trip form when two digits lose
/// information.
fn serialize_ratios<S: serde::Serializer>(ratios: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::{Error, SerializeSeq};
    let mut seq = s.serialize_seq(Some(ratios.len()))?;
    for &r in ratios {
        let two = format!("{r:.2}");
        let text = if two.parse::<f64>().ok() == Some(r) {
            two
        } else {
            format!("{r}")
        };
        let raw = RawValue::from_string(text).map_err(S::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

/// Epoch counts accepted in strict mode.
fn strict_epochs(kind: ScheduleKind) -> &'static [usize] {
    match kind {
        ScheduleKind::Standard => &[10, 7],
        _ => &[10],
    }
}

/// Phase lengths (easy, medium, hard) for a progressive schedule of
/// `total` epochs. Yields 3/4/3 for ten epochs.
fn phase_lengths(total: usize) -> (usize, usize, usize) {
    let outer = ((total as f64) * 0.3).round() as usize;
    let outer = outer.min(total / 2);
    (outer, total - 2 * outer, outer)
}

/// Builds one of the named schedules.
///
/// In strict mode, the epoch count must match the reference configuration
/// (10 for everything, or 7 for the standard matched-compute baseline).
/// Permissive mode scales the phase structure to any `total_epochs`.
pub fn build_schedule(
    kind: ScheduleKind,
    total_epochs: usize,
    seed: u64,
    strict: bool,
) -> Result<PacingSchedule, ScheduleError> {
    if total_epochs == 0 {
        return Err(ScheduleError::NoEpochs);
    }
    let allowed = strict_epochs(kind);
    if strict && !allowed.contains(&total_epochs) {
        return Err(ScheduleError::EpochCount {
            name: kind.to_string(),
            expected: allowed
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(" or "),
            got: total_epochs,
        });
    }
    let (ratios, name) = match kind {
        ScheduleKind::Standard => (vec![HARD_RATIO; total_epochs], format!("standard-{total_epochs}")),
        ScheduleKind::Progressive => {
            let (easy, medium, hard) = phase_lengths(total_epochs);
            let mut ratios = vec![EASY_RATIO; easy];
            ratios.extend(std::iter::repeat_n(MEDIUM_RATIO, medium));
            ratios.extend(std::iter::repeat_n(HARD_RATIO, hard));
            (ratios, format!("curriculum-{total_epochs}"))
        }
        ScheduleKind::Reverse => {
            let (easy, medium, hard) = phase_lengths(total_epochs);
            let mut ratios = vec![HARD_RATIO; hard];
            ratios.extend(std::iter::repeat_n(MEDIUM_RATIO, medium));
            ratios.extend(std::iter::repeat_n(EASY_RATIO, easy));
            (ratios, "reverse".to_string())
        }
        ScheduleKind::TwoPhase => {
            let low = total_epochs / 2;
            let mut ratios = vec![TWO_PHASE_LOW_RATIO; low];
            ratios.extend(std::iter::repeat_n(HARD_RATIO, total_epochs - low));
            (ratios, "two-phase".to_string())
        }
        ScheduleKind::Random => {
            let mut rng = stream_rng(seed, 0, Stream::Pacing);
            let ratios = (0..total_epochs)
                .map(|_| *RANDOM_PACING_CHOICES.choose(&mut rng).expect("non-empty"))
                .collect();
            (ratios, "random".to_string())
        }
    };
    Ok(PacingSchedule {
        name,
        kind,
        total_epochs,
        ratios,
    })
}

/// Resolves a condition name as used in experiment configs.
///
/// `curriculum-10`, `standard-10`, `standard-7`, `two-phase`, `reverse`
/// and `random` are the standard conditions; `<kind>-<epochs>` builds a
/// permissive variant.
pub fn schedule_by_name(name: &str, seed: u64) -> Result<PacingSchedule, ScheduleError> {
    let lower = name.to_ascii_lowercase();
    let (kind_part, epochs) = match lower.rsplit_once('-') {
        Some((k, e)) if e.chars().all(|c| c.is_ascii_digit()) && !e.is_empty() => {
            (k.to_string(), e.parse::<usize>().map_err(|_| ScheduleError::UnknownKind(name.into()))?)
        }
        _ => (lower.clone(), 10),
    };
    let kind: ScheduleKind = kind_part.parse().map_err(|_| ScheduleError::UnknownKind(name.to_string()))?;
    let strict = strict_epochs(kind).contains(&epochs);
    let mut schedule = build_schedule(kind, epochs, seed, strict)?;
    if kind == ScheduleKind::Progressive || kind == ScheduleKind::Standard {
        schedule.name = format!(
            "{}-{}",
            if kind == ScheduleKind::Progressive { "curriculum" } else { "standard" },
            epochs
        );
    } else if epochs != 10 {
        schedule.name = format!("{}-{}", schedule.name, epochs);
    }
    Ok(schedule)
}

impl PacingSchedule {
    /// A generalized schedule from explicit ratios.
    pub fn custom(name: impl Into<String>, kind: ScheduleKind, ratios: Vec<f64>) -> Result<Self, ScheduleError> {
        if ratios.is_empty() {
            return Err(ScheduleError::NoEpochs);
        }
        let schedule = PacingSchedule {
            name: name.into(),
            kind,
            total_epochs: ratios.len(),
            ratios,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// A generalized schedule from `(epochs, ratio)` phases.
    pub fn from_phases(
        name: impl Into<String>,
        kind: ScheduleKind,
        phases: &[(usize, f64)],
    ) -> Result<Self, ScheduleError> {
        let ratios = phases
            .iter()
            .flat_map(|&(len, r)| std::iter::repeat_n(r, len))
            .collect();
        Self::custom(name, kind, ratios)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.total_epochs == 0 {
            return Err(ScheduleError::NoEpochs);
        }
        if self.ratios.len() != self.total_epochs {
            return Err(ScheduleError::EpochCount {
                name: self.name.clone(),
                expected: self.ratios.len().to_string(),
                got: self.total_epochs,
            });
        }
        for (i, &r) in self.ratios.iter().enumerate() {
            if !(r > 0.0 && r <= 1.0) {
                return Err(ScheduleError::InvalidRatio { epoch: i + 1, ratio: r });
            }
        }
        Ok(())
    }

    /// Total exposure in full-data epoch equivalents: the sum of ratios.
    pub fn effective_epochs(&self) -> f64 {
        self.ratios.iter().sum()
    }

    /// Sampling ratio for a 1-based epoch.
    pub fn ratio(&self, epoch: usize) -> Result<f64, ScheduleError> {
        if epoch == 0 || epoch > self.total_epochs {
            return Err(ScheduleError::EpochOutOfRange {
                epoch,
                total: self.total_epochs,
            });
        }
        Ok(self.ratios[epoch - 1])
    }

    /// Planned subset sizes for a corpus of `corpus_size` samples.
    pub fn planned_subset_sizes(&self, corpus_size: usize) -> Vec<usize> {
        self.ratios.iter().map(|&r| subset_size(corpus_size, r)).collect()
    }

    /// Number of optimizer updates this schedule implies.
    pub fn planned_updates(&self, corpus_size: usize, batch_size: usize) -> usize {
        self.planned_subset_sizes(corpus_size)
            .into_iter()
            .map(|n| n.div_ceil(batch_size.max(1)))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Phase of a 1-based epoch under a progressive schedule.
pub fn phase_of_epoch(schedule: &PacingSchedule, epoch: usize) -> Result<Phase, ScheduleError> {
    if schedule.kind != ScheduleKind::Progressive {
        return Err(ScheduleError::NotProgressive(schedule.name.clone(), schedule.kind));
    }
    if epoch == 0 || epoch > schedule.total_epochs {
        return Err(ScheduleError::EpochOutOfRange {
            epoch,
            total: schedule.total_epochs,
        });
    }
    let (easy, medium, _) = phase_lengths(schedule.total_epochs);
    Ok(if epoch <= easy {
        Phase::Easy
    } else if epoch <= easy + medium {
        Phase::Medium
    } else {
        Phase::Hard
    })
}

pub fn effective_epochs(schedule: &PacingSchedule) -> f64 {
    schedule.effective_epochs()
}

/// Fraction of exposure saved relative to `baseline`.
pub fn theoretical_speedup(candidate: &PacingSchedule, baseline: &PacingSchedule) -> Result<f64, ScheduleError> {
    let base = baseline.effective_epochs();
    if base <= 0.0 {
        return Err(ScheduleError::ZeroExposure);
    }
    Ok(1.0 - candidate.effective_epochs() / base)
}

/// One epoch's selected training subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub epoch: usize,
    pub ratio: f64,
    pub subset_size: usize,
    pub indices: Vec<usize>,
}

/// `max(1, floor(ratio * n))`.
///
/// The product is nudged by 1e-9 before flooring so decimal ratios such as
/// 0.29 × 100 land on 29 and not 28.999… → 28.
pub fn subset_size(corpus_size: usize, ratio: f64) -> usize {
    let raw = (ratio * corpus_size as f64 + 1e-9).floor() as usize;
    raw.clamp(1, corpus_size.max(1))
}

/// Uniform sample without replacement, keyed by `(run_seed, epoch)`.
///
/// Indices are returned in ascending order; batch order is a separate
/// shuffle stream owned by the trainer. Subsets of different epochs are
/// independent draws and may overlap.
pub fn sample_subset(corpus_size: usize, ratio: f64, run_seed: u64, epoch: usize) -> Result<EpochPlan, ScheduleError> {
    if corpus_size == 0 {
        return Err(ScheduleError::EmptyCorpus);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(ScheduleError::InvalidRatio { epoch, ratio });
    }
    let k = subset_size(corpus_size, ratio);
    let indices = if k == corpus_size {
        (0..corpus_size).collect()
    } else {
        let mut rng = stream_rng(run_seed, epoch as u64, Stream::Subset);
        let mut picked = rand::seq::index::sample(&mut rng, corpus_size, k).into_vec();
        picked.sort_unstable();
        picked
    };
    Ok(EpochPlan {
        epoch,
        ratio,
        subset_size: k,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strict(kind: ScheduleKind, epochs: usize) -> PacingSchedule {
        build_schedule(kind, epochs, 0, true).unwrap()
    }

    #[test]
    fn progressive_ten_ratios() {
        let s = strict(ScheduleKind::Progressive, 10);
        assert_eq!(s.ratios, vec![0.33, 0.33, 0.33, 0.67, 0.67, 0.67, 0.67, 1.0, 1.0, 1.0]);
        assert_eq!(s.name, "curriculum-10");
    }

    #[test]
    fn reverse_and_two_phase_ratios() {
        assert_eq!(
            strict(ScheduleKind::Reverse, 10).ratios,
            vec![1.0, 1.0, 1.0, 0.67, 0.67, 0.67, 0.67, 0.33, 0.33, 0.33]
        );
        assert_eq!(
            strict(ScheduleKind::TwoPhase, 10).ratios,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(strict(ScheduleKind::Standard, 7).ratios, vec![1.0; 7]);
    }

    #[test]
    fn strict_mode_rejects_odd_epoch_counts() {
        assert!(matches!(
            build_schedule(ScheduleKind::Progressive, 7, 0, true),
            Err(ScheduleError::EpochCount { .. })
        ));
        assert!(build_schedule(ScheduleKind::Standard, 5, 0, true).is_err());
        let loose = build_schedule(ScheduleKind::Progressive, 20, 0, false).unwrap();
        assert_eq!(loose.ratios.len(), 20);
        assert_eq!(build_schedule(ScheduleKind::Standard, 0, 0, false), Err(ScheduleError::NoEpochs));
        assert!("warmup".parse::<ScheduleKind>().is_err());
    }

    #[test]
    fn effective_epoch_values() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(strict(ScheduleKind::Progressive, 10).effective_epochs(), 6.67));
        assert!(close(strict(ScheduleKind::Reverse, 10).effective_epochs(), 6.67));
        assert!(close(strict(ScheduleKind::Standard, 7).effective_epochs(), 7.0));
        assert!(close(strict(ScheduleKind::TwoPhase, 10).effective_epochs(), 7.5));
        assert!(close(strict(ScheduleKind::Standard, 10).effective_epochs(), 10.0));
    }

    #[test]
    fn speedups() {
        let p = strict(ScheduleKind::Progressive, 10);
        let s10 = strict(ScheduleKind::Standard, 10);
        let s7 = strict(ScheduleKind::Standard, 7);
        assert!((theoretical_speedup(&p, &s10).unwrap() - 0.333).abs() < 1e-12);
        assert!((theoretical_speedup(&s7, &s10).unwrap() - 0.30).abs() < 1e-12);
        assert_eq!(theoretical_speedup(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn phases() {
        let p = strict(ScheduleKind::Progressive, 10);
        let expect = [
            Phase::Easy,
            Phase::Easy,
            Phase::Easy,
            Phase::Medium,
            Phase::Medium,
            Phase::Medium,
            Phase::Medium,
            Phase::Hard,
            Phase::Hard,
            Phase::Hard,
        ];
        for (e, phase) in expect.iter().enumerate() {
            assert_eq!(phase_of_epoch(&p, e + 1).unwrap(), *phase);
        }
        assert!(matches!(phase_of_epoch(&p, 0), Err(ScheduleError::EpochOutOfRange { .. })));
        assert!(matches!(phase_of_epoch(&p, 11), Err(ScheduleError::EpochOutOfRange { .. })));
        let r = strict(ScheduleKind::Reverse, 10);
        assert!(matches!(phase_of_epoch(&r, 2), Err(ScheduleError::NotProgressive(..))));
    }

    #[test]
    fn random_pacing_is_seeded() {
        let a = strict(ScheduleKind::Random, 10);
        let b = strict(ScheduleKind::Random, 10);
        assert_eq!(a, b);
        assert!(a.ratios.iter().all(|r| RANDOM_PACING_CHOICES.contains(r)));
        let differs = (1..50u64).any(|s| build_schedule(ScheduleKind::Random, 10, s, true).unwrap().ratios != a.ratios);
        assert!(differs);
    }

    #[test]
    fn names_resolve() {
        assert_eq!(schedule_by_name("curriculum-10", 0).unwrap().kind, ScheduleKind::Progressive);
        assert_eq!(schedule_by_name("standard-7", 0).unwrap().ratios.len(), 7);
        assert_eq!(schedule_by_name("two-phase", 0).unwrap().name, "two-phase");
        assert_eq!(schedule_by_name("reverse", 0).unwrap().effective_epochs(), strict(ScheduleKind::Reverse, 10).effective_epochs());
        assert_eq!(schedule_by_name("progressive-20", 0).unwrap().name, "curriculum-20");
        assert!(schedule_by_name("cosine", 0).is_err());
    }

    #[test]
    fn json_keeps_two_fractional_digits() {
        let s = strict(ScheduleKind::Progressive, 10);
        let json = s.to_json();
        assert_eq!(
            json,
            r#"{"name":"curriculum-10","kind":"progressive","total_epochs":10,"ratios":[0.33,0.33,0.33,0.67,0.67,0.67,0.67,1.00,1.00,1.00]}"#
        );
        assert_eq!(PacingSchedule::from_json(&json).unwrap(), s);
        let odd = PacingSchedule::custom("odd", ScheduleKind::Standard, vec![0.125]).unwrap();
        assert!(odd.to_json().contains("[0.125]"));
    }

    #[test]
    fn custom_validation() {
        assert!(matches!(
            PacingSchedule::custom("x", ScheduleKind::Standard, vec![0.5, 0.0]),
            Err(ScheduleError::InvalidRatio { epoch: 2, .. })
        ));
        assert!(PacingSchedule::custom("x", ScheduleKind::Standard, vec![1.5]).is_err());
        let p = PacingSchedule::from_phases("p", ScheduleKind::Progressive, &[(2, 0.25), (2, 1.0)]).unwrap();
        assert_eq!(p.ratios, vec![0.25, 0.25, 1.0, 1.0]);
    }

    #[test]
    fn subset_sizes() {
        assert_eq!(sample_subset(149, 0.33, 1, 1).unwrap().subset_size, 49);
        assert_eq!(sample_subset(149, 0.33, 1, 1).unwrap().indices.len(), 49);
        assert_eq!(subset_size(2, 0.33), 1);
        assert_eq!(subset_size(100, 0.29), 29);
        let full = sample_subset(37, 1.0, 9, 4).unwrap();
        assert_eq!(full.indices, (0..37).collect::<Vec<_>>());
        assert_eq!(sample_subset(0, 0.5, 0, 1), Err(ScheduleError::EmptyCorpus));
        assert!(sample_subset(10, 0.0, 0, 1).is_err());
    }

    #[test]
    fn epochs_draw_independently() {
        for trial in 0..100u64 {
            let a = sample_subset(100, 0.67, trial, 1).unwrap();
            let b = sample_subset(100, 0.67, trial, 2).unwrap();
            assert_ne!(a.indices, b.indices);
        }
    }

    #[test]
    fn planned_updates_ceil_per_epoch() {
        let p = strict(ScheduleKind::Progressive, 10);
        // 165 -> 11, 335 -> 21, 500 -> 32
        assert_eq!(p.planned_updates(500, 16), 3 * 11 + 4 * 21 + 3 * 32);
        assert_eq!(strict(ScheduleKind::Standard, 10).planned_updates(500, 16), 320);
    }

    proptest! {
        #[test]
        fn subset_is_pure_and_valid(n in 1usize..400, ratio in 0.01f64..=1.0, seed: u64, epoch in 1usize..20) {
            let a = sample_subset(n, ratio, seed, epoch).unwrap();
            let b = sample_subset(n, ratio, seed, epoch).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.subset_size, ((ratio * n as f64 + 1e-9).floor() as usize).max(1));
            prop_assert_eq!(a.indices.len(), a.subset_size);
            prop_assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(a.indices.iter().all(|&i| i < n));
        }

        #[test]
        fn effective_epochs_is_sum(kind_ix in 0usize..5, epochs in 1usize..30, seed: u64) {
            let s = build_schedule(ScheduleKind::ALL[kind_ix], epochs, seed, false).unwrap();
            prop_assert_eq!(s.ratios.len(), epochs);
            s.validate().unwrap();
            let sum: f64 = s.ratios.iter().sum();
            prop_assert_eq!(s.effective_epochs(), sum);
        }
    }
}
