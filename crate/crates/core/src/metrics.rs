//! Entity-level precision, recall and F1 over IOB-tagged sequences.
//!
//! Decoding follows the lenient convention of the common `seqeval` default
//! mode: an `I-x` that does not continue an `x` span opens a new one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Tag;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("malformed tag `{0}`")]
    MalformedTag(String),
    #[error("{gold} gold sequences vs {pred} predicted")]
    SequenceCount { gold: usize, pred: usize },
    #[error("sequence {index}: {gold} gold tags vs {pred} predicted")]
    LengthMismatch { index: usize, gold: usize, pred: usize },
}

/// Half-open token range `[start, end)` carrying one entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub pred_spans: usize,
    pub gold_spans: usize,
}

impl Prf {
    pub fn from_counts(true_positives: usize, pred_spans: usize, gold_spans: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(true_positives, pred_spans);
        let recall = ratio(true_positives, gold_spans);
        // Equal to 2PR/(P+R), written over counts so swapping P and R is exact.
        let f1 = ratio(2 * true_positives, pred_spans + gold_spans);
        Prf {
            precision,
            recall,
            f1,
            true_positives,
            pred_spans,
            gold_spans,
        }
    }
}

pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>, MetricsError> {
    let parsed = tags
        .iter()
        .map(|t| Tag::parse(t.as_ref()).ok_or_else(|| MetricsError::MalformedTag(t.as_ref().to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(spans_from_tags(&parsed))
}

pub fn spans_from_tags(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                if let Some((ty, start)) = open.take() {
                    spans.push(Span { entity_type: ty, start, end: i });
                }
            }
            Tag::Begin(ty) => {
                if let Some((prev, start)) = open.take() {
                    spans.push(Span { entity_type: prev, start, end: i });
                }
                open = Some((ty.clone(), i));
            }
            Tag::Inside(ty) => match &open {
                Some((cur, _)) if cur == ty => {}
                _ => {
                    if let Some((prev, start)) = open.take() {
                        spans.push(Span { entity_type: prev, start, end: i });
                    }
                    open = Some((ty.clone(), i));
                }
            },
        }
    }
    if let Some((ty, start)) = open {
        spans.push(Span {
            entity_type: ty,
            start,
            end: tags.len(),
        });
    }
    spans
}

/// Micro-averaged and per-type scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityReport {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

impl EntityReport {
    /// `type,precision,recall,f1,support`, one row per entity type.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# decoding=iob2-lenient (seqeval default mode)\ntype,precision,recall,f1,support\n");
        for (ty, prf) in &self.per_type {
            let _ = writeln!(out, "{ty},{:.4},{:.4},{:.4},{}", prf.precision, prf.recall, prf.f1, prf.gold_spans);
        }
        out
    }
}

pub fn entity_report<G, P>(gold: &[G], pred: &[P]) -> Result<EntityReport, MetricsError>
where
    G: AsRef<[String]>,
    P: AsRef<[String]>,
{
    if gold.len() != pred.len() {
        return Err(MetricsError::SequenceCount {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    #[derive(Default)]
    struct Counts {
        tp: usize,
        pred: usize,
        gold: usize,
    }
    let mut total = Counts::default();
    let mut by_type: BTreeMap<String, Counts> = BTreeMap::new();
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g.len() != p.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gold_spans: BTreeSet<Span> = extract_spans(g)?.into_iter().collect();
        let pred_spans: BTreeSet<Span> = extract_spans(p)?.into_iter().collect();
        for s in &gold_spans {
            by_type.entry(s.entity_type.clone()).or_default().gold += 1;
        }
        for s in &pred_spans {
            let c = by_type.entry(s.entity_type.clone()).or_default();
            c.pred += 1;
            if gold_spans.contains(s) {
                c.tp += 1;
                total.tp += 1;
            }
        }
        total.gold += gold_spans.len();
        total.pred += pred_spans.len();
    }
    Ok(EntityReport {
        overall: Prf::from_counts(total.tp, total.pred, total.gold),
        per_type: by_type
            .into_iter()
            .map(|(t, c)| (t, Prf::from_counts(c.tp, c.pred, c.gold)))
            .collect(),
    })
}

pub fn entity_prf<G, P>(gold: &[G], pred: &[P]) -> Result<Prf, MetricsError>
where
    G: AsRef<[String]>,
    P: AsRef<[String]>,
{
    entity_report(gold, pred).map(|r| r.overall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(t: &str, start: usize, end: usize) -> Span {
        Span {
            entity_type: t.into(),
            start,
            end,
        }
    }

    fn seqs(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn canonical_span() {
        assert_eq!(extract_spans(&["B-a", "I-a", "O"]).unwrap(), vec![span("a", 0, 2)]);
    }

    #[test]
    fn stray_inside_opens_span() {
        assert_eq!(extract_spans(&["I-a", "I-a"]).unwrap(), vec![span("a", 0, 2)]);
        assert_eq!(extract_spans(&["O", "I-a", "I-b"]).unwrap(), vec![span("a", 1, 2), span("b", 2, 3)]);
    }

    #[test]
    fn begin_always_splits() {
        assert_eq!(
            extract_spans(&["B-a", "B-a", "I-b"]).unwrap(),
            vec![span("a", 0, 1), span("a", 1, 2), span("b", 2, 3)]
        );
    }

    #[test]
    fn malformed() {
        assert_eq!(extract_spans(&["B-a", "X"]), Err(MetricsError::MalformedTag("X".into())));
        assert!(extract_spans(&["E-a"]).is_err());
    }

    #[test]
    fn identity_and_empty_prediction() {
        let gold = seqs(&[&["B-a", "I-a", "O", "B-b"]]);
        let p = entity_prf(&gold, &gold).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let none = seqs(&[&["O", "O", "O", "O"]]);
        let p = entity_prf(&gold, &none).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_recall() {
        let gold = seqs(&[&["B-a", "O", "B-b"]]);
        let pred = seqs(&[&["B-a", "O", "O"]]);
        let p = entity_prf(&gold, &pred).unwrap();
        assert_eq!(p.precision, 1.0);
        assert_eq!(p.recall, 0.5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_must_match_exactly() {
        let gold = seqs(&[&["B-a", "I-a", "O"]]);
        let pred = seqs(&[&["B-a", "O", "O"]]);
        assert_eq!(entity_prf(&gold, &pred).unwrap().true_positives, 0);
    }

    #[test]
    fn length_errors() {
        let gold = seqs(&[&["O"]]);
        assert!(matches!(entity_prf(&gold, &seqs(&[])), Err(MetricsError::SequenceCount { .. })));
        assert!(matches!(
            entity_prf(&gold, &seqs(&[&["O", "O"]])),
            Err(MetricsError::LengthMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn csv_report() {
        let gold = seqs(&[&["B-a", "O", "B-b"]]);
        let pred = seqs(&[&["B-a", "O", "O"]]);
        let csv = entity_report(&gold, &pred).unwrap().to_csv();
        assert!(csv.contains("type,precision,recall,f1,support\n"));
        assert!(csv.contains("a,1.0000,1.0000,1.0000,1\n"));
        assert!(csv.contains("b,0.0000,0.0000,0.0000,1\n"));
    }

    fn tag_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("O".to_string()),
            (prop_oneof![Just("B"), Just("I")], prop_oneof![Just("a"), Just("b")]).prop_map(|(p, t)| format!("{p}-{t}")),
        ]
    }

    proptest! {
        #[test]
        fn spans_disjoint_ordered_and_never_cover_o(tags in prop::collection::vec(tag_strategy(), 0..20)) {
            let spans = extract_spans(&tags).unwrap();
            for w in spans.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &spans {
                prop_assert!(s.start < s.end);
                for t in &tags[s.start..s.end] {
                    prop_assert_ne!(t.as_str(), "O");
                }
            }
        }

        #[test]
        fn swapping_exchanges_p_and_r(
            pairs in prop::collection::vec(prop::collection::vec((tag_strategy(), tag_strategy()), 1..12), 1..5)
        ) {
            let gold: Vec<Vec<String>> = pairs.iter().map(|s| s.iter().map(|p| p.0.clone()).collect()).collect();
            let pred: Vec<Vec<String>> = pairs.iter().map(|s| s.iter().map(|p| p.1.clone()).collect()).collect();
            let a = entity_prf(&gold, &pred).unwrap();
            let b = entity_prf(&pred, &gold).unwrap();
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert_eq!(a.f1, b.f1);
            let mut rg = gold.clone();
            let mut rp = pred.clone();
            rg.reverse();
            rp.reverse();
            prop_assert_eq!(entity_prf(&rg, &rp).unwrap().f1, a.f1);
        }
    }
}
