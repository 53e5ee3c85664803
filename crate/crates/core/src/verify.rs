//! Self-checks run by `curriculum verify`.
//!
//! Each check recomputes a known quantity through the library and compares it
//! with a closed form or a reference value.

use crate::corpus::{generate_synthetic, SyntheticProfile};
use crate::metrics::extract_spans;
use crate::model::{init_model, loss, loss_and_grads, Arch, ModelSpec};
use crate::par;
use crate::schedule::{build_schedule, sample_subset, theoretical_speedup, ScheduleKind};
use crate::stats::{cohens_dz, p_two_tailed};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn effective_epochs_check() -> Check {
    let p = build_schedule(ScheduleKind::Progressive, 10, 0, true).expect("progressive-10");
    let s = build_schedule(ScheduleKind::Standard, 10, 0, true).expect("standard-10");
    let e = p.effective_epochs();
    let speedup = theoretical_speedup(&p, &s).unwrap_or(f64::NAN);
    check(
        "effective_epochs",
        (e - 6.67).abs() < 1e-9 && (speedup - 0.333).abs() < 1e-9,
        format!("progressive E_eff = {e:.4}, theoretical speedup = {:.1}%", speedup * 100.0),
    )
}

pub fn statistics_check() -> Check {
    let rows = [(6.63, 3.83, Some(0.022)), (0.58, 0.33, Some(0.621)), (0.14, 0.08, None), (-0.83, -0.48, None)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (t, dz, p) in rows {
        let got = cohens_dz(t, 3);
        ok &= (got - dz).abs() <= 0.005 + 1e-12;
        if let Some(p) = p {
            let got_p = p_two_tailed(t, 2).unwrap_or(f64::NAN);
            ok &= (got_p - p).abs() <= 0.002;
            parts.push(format!("t={t}: d_z={got:.2} p={got_p:.3}"));
        } else {
            parts.push(format!("t={t}: d_z={got:.2}"));
        }
    }
    check("paired_statistics", ok, parts.join("; "))
}

pub fn inclusion_check(draws: usize) -> Check {
    let n = 100;
    let hits = par::sum_range(draws, |i| {
        let plan = sample_subset(n, 0.33, i as u64, 1).expect("valid plan");
        u64::from(plan.indices.binary_search(&0).is_ok())
    });
    let freq = hits as f64 / draws as f64;
    check(
        "subset_inclusion",
        (freq - 0.33).abs() <= 0.02,
        format!("index 0 included in {freq:.4} of {draws} draws at ratio 0.33"),
    )
}

pub fn span_check() -> Check {
    let cases: [(&[&str], usize); 4] = [
        (&["B-PER", "I-PER", "O", "B-LOC"], 2),
        (&["I-PER", "I-PER", "O"], 1),
        (&["B-PER", "I-LOC"], 2),
        (&["O", "O"], 0),
    ];
    let ok = cases
        .iter()
        .all(|(tags, n)| extract_spans(tags).map(|s| s.len()) == Ok(*n));
    check("span_decoding", ok, "lenient IOB decoding on fixed cases".into())
}

pub fn gradient_check() -> Check {
    let corpus = match generate_synthetic(SyntheticProfile::Forms, 12, 3) {
        Ok(c) => c,
        Err(e) => return check("gradients", false, e.to_string()),
    };
    let batch: Vec<_> = corpus.train.iter().take(3).collect();
    let mut worst: f64 = 0.0;
    for arch in [Arch::TextOnly, Arch::LayoutAware] {
        let spec = ModelSpec::new(arch, corpus.schema.num_labels());
        let Ok(mut model) = init_model(&spec, 11) else {
            return check("gradients", false, "init failed".into());
        };
        let Ok((_, grads)) = loss_and_grads(&model, &batch) else {
            return check("gradients", false, "backward failed".into());
        };
        for name in model.params.names() {
            let len = model.params.get(name).map_or(0, |t| t.len());
            for idx in (0..len).step_by((len / 5).max(1)) {
                let analytic = grads.get(name).expect("same layout").data[idx];
                let h = 1e-4;
                let orig = model.params.get(name).expect("tensor").data[idx];
                model.params.get_mut(name).expect("tensor").data[idx] = orig + h;
                let up = loss(&model, &batch).unwrap_or(f64::NAN);
                model.params.get_mut(name).expect("tensor").data[idx] = orig - h;
                let down = loss(&model, &batch).unwrap_or(f64::NAN);
                model.params.get_mut(name).expect("tensor").data[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                let err = if scale < 1e-7 { 0.0 } else { (analytic - numeric).abs() / scale };
                worst = worst.max(err);
            }
        }
    }
    check("gradients", worst < 1e-4, format!("max relative error {worst:.2e}"))
}

pub fn run_all() -> Vec<Check> {
    vec![
        effective_epochs_check(),
        statistics_check(),
        inclusion_check(10_000),
        span_check(),
        gradient_check(),
    ]
}
