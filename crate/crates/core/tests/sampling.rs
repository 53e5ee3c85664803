use std::collections::BTreeSet;

use curriculum_core::corpus::{generate_synthetic, label_distribution, SyntheticProfile};
use curriculum_core::par;
use curriculum_core::schedule::{build_schedule, sample_subset, ScheduleKind};

#[test]
fn inclusion_frequency_matches_ratio() {
    let n = 60;
    let draws = 10_000;
    for index in [0usize, 17, 59] {
        let hits = par::sum_range(draws, |seed| {
            u64::from(sample_subset(n, 0.33, seed as u64, 1).unwrap().indices.contains(&index))
        });
        // floor(0.33 * 60) = 19 of 60 per draw.
        let freq = hits as f64 / draws as f64;
        assert!((freq - 19.0 / 60.0).abs() <= 0.02, "index {index}: {freq}");
        assert!((freq - 0.33).abs() <= 0.02 + 0.33 - 19.0 / 60.0, "index {index}: {freq}");
    }
    let n = 100;
    let hits = par::sum_range(draws, |seed| u64::from(sample_subset(n, 0.33, 7, seed + 1).unwrap().indices.contains(&42)));
    assert!((hits as f64 / draws as f64 - 0.33).abs() <= 0.02);
}

#[test]
fn parallel_and_sequential_agree() {
    let f = |i: usize| sample_subset(300, 0.67, i as u64, 3).unwrap().indices.iter().sum::<usize>() as u64;
    assert_eq!(par::sum_range(500, f), par::sum_range_seq(500, f));
}

#[test]
fn epochs_draw_independently() {
    let a: BTreeSet<usize> = sample_subset(1000, 0.33, 1, 1).unwrap().indices.into_iter().collect();
    let b: BTreeSet<usize> = sample_subset(1000, 0.33, 1, 2).unwrap().indices.into_iter().collect();
    let overlap = a.intersection(&b).count();
    // Independent draws overlap in about k^2 / N = 109 items.
    assert!((60..160).contains(&overlap), "{overlap}");
}

#[test]
fn subsets_preserve_label_distribution() {
    let corpus = generate_synthetic(SyntheticProfile::Receipts, 800, 3).unwrap();
    let full = label_distribution(&corpus.train, &corpus.schema);
    let sched = build_schedule(ScheduleKind::Progressive, 10, 0, true).unwrap();
    let mut sum = vec![0.0; full.len()];
    let epochs = 40;
    for e in 1..=epochs {
        let plan = sample_subset(corpus.train.len(), sched.ratios[0], 11, e).unwrap();
        let subset: Vec<_> = plan.indices.iter().map(|&i| corpus.train[i].clone()).collect();
        for (s, d) in sum.iter_mut().zip(label_distribution(&subset, &corpus.schema)) {
            *s += d / epochs as f64;
        }
    }
    for (label, (f, s)) in full.iter().zip(&sum).enumerate() {
        assert!((f - s).abs() < 0.01, "label {label}: {f} vs {s}");
    }
}
