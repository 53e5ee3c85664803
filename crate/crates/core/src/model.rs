//! Two toy token classifiers with analytic gradients.
//!
//! Each token's feature is the mean of hashed-token embeddings over a
//! centered context window. The layout-aware variant adds one embedding per
//! quantized box coordinate (x0, y0, x1, y1). The feature then goes through
//! a `tanh` hidden layer and a linear output layer:
//!
//! ```text
//! f = mean_{j in window} E[hash(tok_j)]  (+ sum_axis B[axis, bucket(box_axis)])
//! h = tanh(W1 f + b1)
//! s = W2 h + b2
//! ```
//!
//! `tanh` is used because its derivative `1 - tanh²` is exact and reuses
//! the forward activation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocSequence, COORD_MAX};
use crate::rng::{fnv1a64, stream_rng, Stream};

pub const CHECKPOINT_FORMAT: &str = "curriculum-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("layout-aware model needs boxes for every token")]
    MissingBoxes,
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} outside 0..{num_labels}")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    TextOnly,
    LayoutAware,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::TextOnly => "text_only",
            Arch::LayoutAware => "layout_aware",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text_only" | "text-only" => Ok(Arch::TextOnly),
            "layout_aware" | "layout-aware" => Ok(Arch::LayoutAware),
            other => Err(ModelError::InvalidSpec(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub hash_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Full window width `2k + 1`.
    pub context_window: usize,
    pub num_box_buckets: usize,
    pub num_labels: usize,
}

impl ModelSpec {
    /// Desk-scale defaults shared by both architectures.
    pub fn new(arch: Arch, num_labels: usize) -> Self {
        ModelSpec {
            arch,
            hash_vocab: 1024,
            embed_dim: 16,
            hidden_dim: 32,
            context_window: 3,
            num_box_buckets: 8,
            num_labels,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::InvalidSpec(m));
        if self.embed_dim < 4 {
            return fail(format!("embed_dim {} < 4", self.embed_dim));
        }
        if self.context_window.is_multiple_of(2) {
            return fail(format!("context_window {} must be odd", self.context_window));
        }
        if self.hash_vocab == 0 || self.hidden_dim == 0 {
            return fail("hash_vocab and hidden_dim must be positive".into());
        }
        if self.num_labels < 1 {
            return fail("num_labels must be positive".into());
        }
        if self.arch == Arch::LayoutAware && self.num_box_buckets < 2 {
            return fail(format!("layout_aware needs num_box_buckets >= 2, got {}", self.num_box_buckets));
        }
        Ok(())
    }

    fn half_window(&self) -> usize {
        self.context_window / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn row(&self, r: usize) -> &[f64] {
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.shape[1];
        &mut self.data[r * w..(r + 1) * w]
    }
}

/// Named parameter tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub token_embed: Tensor,
    pub box_embed: Option<Tensor>,
    pub hidden_w: Tensor,
    pub hidden_b: Tensor,
    pub output_w: Tensor,
    pub output_b: Tensor,
}

impl Params {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Params {
            token_embed: Tensor::zeros(&[spec.hash_vocab, spec.embed_dim]),
            box_embed: (spec.arch == Arch::LayoutAware).then(|| Tensor::zeros(&[4 * spec.num_box_buckets, spec.embed_dim])),
            hidden_w: Tensor::zeros(&[spec.hidden_dim, spec.embed_dim]),
            hidden_b: Tensor::zeros(&[spec.hidden_dim]),
            output_w: Tensor::zeros(&[spec.num_labels, spec.hidden_dim]),
            output_b: Tensor::zeros(&[spec.num_labels]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(&t.shape);
        Params {
            token_embed: z(&self.token_embed),
            box_embed: self.box_embed.as_ref().map(z),
            hidden_w: z(&self.hidden_w),
            hidden_b: z(&self.hidden_b),
            output_w: z(&self.output_w),
            output_b: z(&self.output_b),
        }
    }

    /// Tensors in fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("token_embed", &self.token_embed)];
        if let Some(b) = &self.box_embed {
            v.push(("box_embed", b));
        }
        v.extend([
            ("hidden_w", &self.hidden_w),
            ("hidden_b", &self.hidden_b),
            ("output_w", &self.output_w),
            ("output_b", &self.output_b),
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut v = vec![("token_embed", &mut self.token_embed)];
        if let Some(b) = &mut self.box_embed {
            v.push(("box_embed", b));
        }
        v.extend([
            ("hidden_w", &mut self.hidden_w),
            ("hidden_b", &mut self.hidden_b),
            ("output_w", &mut self.output_w),
            ("output_b", &mut self.output_b),
        ]);
        v
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors_mut().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn same_shapes(&self, other: &Params) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape == t2.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: Params,
}

impl ModelState {
    pub fn zeros(spec: ModelSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let params = Params::zeros(&spec);
        Ok(ModelState { spec, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_checkpoint_json())?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_checkpoint_json(&self) -> String {
        let tensors = self
            .params
            .tensors()
            .into_iter()
            .map(|(name, t)| CheckpointTensor {
                name: name.to_string(),
                shape: t.shape.clone(),
                data: t.data.clone(),
            })
            .collect();
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            tensors,
        })
        .expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(s: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format {} v{}",
                ck.format, ck.version
            )));
        }
        let mut state = ModelState::zeros(ck.spec)?;
        let expected = state.params.names();
        let found: Vec<&str> = ck.tensors.iter().map(|t| t.name.as_str()).collect();
        if expected != found {
            return Err(ModelError::Checkpoint(format!("tensor names {found:?}, expected {expected:?}")));
        }
        for ct in ck.tensors {
            let t = state.params.get_mut(&ct.name).expect("name checked");
            if t.shape != ct.shape || ct.data.len() != t.len() {
                return Err(ModelError::Checkpoint(format!("shape mismatch for {}", ct.name)));
            }
            t.data = ct.data;
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: ModelSpec,
    tensors: Vec<CheckpointTensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Uniform `±1/sqrt(fan_in)` weights, zero biases. Embedding tables take a
/// one-hot input, so their fan-in is 1.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelState, ModelError> {
    let mut state = ModelState::zeros(spec.clone())?;
    let mut rng = stream_rng(seed, 0, Stream::Init);
    let mut fill = |t: &mut Tensor, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
    };
    let p = &mut state.params;
    fill(&mut p.token_embed, 1);
    if let Some(b) = &mut p.box_embed {
        fill(b, 1);
    }
    fill(&mut p.hidden_w, spec.embed_dim);
    fill(&mut p.output_w, spec.hidden_dim);
    Ok(state)
}

pub fn token_bucket(token: &str, hash_vocab: usize) -> usize {
    (fnv1a64(token) % hash_vocab as u64) as usize
}

/// `floor(coord / (1000 / n))`, clamped to `n - 1`.
pub fn box_bucket(coord: u16, num_buckets: usize) -> usize {
    ((coord as usize * num_buckets) / COORD_MAX as usize).min(num_buckets - 1)
}

/// Per-token intermediate values kept for the backward pass.
struct Activations {
    ids: Vec<usize>,
    box_rows: Vec<[usize; 4]>,
    features: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
}

impl ModelState {
    fn check_input(&self, seq: &DocSequence) -> Result<(), ModelError> {
        if self.spec.arch == Arch::LayoutAware {
            match &seq.boxes {
                Some(b) if b.len() == seq.tokens.len() => {}
                _ => return Err(ModelError::MissingBoxes),
            }
        }
        Ok(())
    }

    fn window(&self, i: usize, n: usize) -> std::ops::Range<usize> {
        let k = self.spec.half_window();
        i.saturating_sub(k)..(i + k + 1).min(n)
    }

    fn activations(&self, seq: &DocSequence) -> Result<Activations, ModelError> {
        self.check_input(seq)?;
        let spec = &self.spec;
        let p = &self.params;
        let n = seq.tokens.len();
        let d = spec.embed_dim;
        let ids: Vec<usize> = seq.tokens.iter().map(|t| token_bucket(t, spec.hash_vocab)).collect();
        let box_rows: Vec<[usize; 4]> = match (&p.box_embed, &seq.boxes) {
            (Some(_), Some(boxes)) => boxes
                .iter()
                .map(|b| {
                    let nb = spec.num_box_buckets;
                    let c = b.coords();
                    [0, 1, 2, 3].map(|axis| axis * nb + box_bucket(c[axis], nb))
                })
                .collect(),
            _ => Vec::new(),
        };
        let mut features = Vec::with_capacity(n);
        let mut hidden = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for i in 0..n {
            let win = self.window(i, n);
            let inv = 1.0 / win.len() as f64;
            let mut f = vec![0.0; d];
            for &id in &ids[win] {
                for (fv, e) in f.iter_mut().zip(p.token_embed.row(id)) {
                    *fv += e * inv;
                }
            }
            if let Some(table) = &p.box_embed {
                for &r in &box_rows[i] {
                    for (fv, e) in f.iter_mut().zip(table.row(r)) {
                        *fv += e;
                    }
                }
            }
            let h: Vec<f64> = (0..spec.hidden_dim)
                .map(|j| {
                    let z = p.hidden_b.data[j] + dot(p.hidden_w.row(j), &f);
                    z.tanh()
                })
                .collect();
            let s: Vec<f64> = (0..spec.num_labels)
                .map(|l| p.output_b.data[l] + dot(p.output_w.row(l), &h))
                .collect();
            features.push(f);
            hidden.push(h);
            scores.push(s);
        }
        Ok(Activations {
            ids,
            box_rows,
            features,
            hidden,
            scores,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-token label scores, `|tokens| × num_labels`.
pub fn forward(model: &ModelState, seq: &DocSequence) -> Result<Vec<Vec<f64>>, ModelError> {
    Ok(model.activations(seq)?.scores)
}

/// Log-softmax cross-entropy of one score row.
fn cross_entropy(scores: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - scores[gold];
    let probs = exps.into_iter().map(|e| e / z).collect();
    (loss, probs)
}

/// Mean token cross-entropy over the batch and its exact gradient.
pub fn loss_and_grads(model: &ModelState, batch: &[&DocSequence]) -> Result<(f64, Params), ModelError> {
    let total_tokens: usize = batch.iter().map(|s| s.len()).sum();
    if batch.is_empty() || total_tokens == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let spec = &model.spec;
    let p = &model.params;
    let mut grads = p.zeros_like();
    let inv_total = 1.0 / total_tokens as f64;
    let mut loss_sum = 0.0;
    for seq in batch {
        let act = model.activations(seq)?;
        let n = seq.len();
        for i in 0..n {
            let gold = seq.labels[i];
            if gold >= spec.num_labels {
                return Err(ModelError::LabelOutOfRange {
                    label: gold,
                    num_labels: spec.num_labels,
                });
            }
            let (loss, mut dscore) = cross_entropy(&act.scores[i], gold);
            loss_sum += loss;
            dscore[gold] -= 1.0;
            dscore.iter_mut().for_each(|g| *g *= inv_total);

            let h = &act.hidden[i];
            let mut dh = vec![0.0; spec.hidden_dim];
            for (l, &ds) in dscore.iter().enumerate() {
                grads.output_b.data[l] += ds;
                for (j, gw) in grads.output_w.row_mut(l).iter_mut().enumerate() {
                    *gw += ds * h[j];
                }
                for (dhj, w) in dh.iter_mut().zip(p.output_w.row(l)) {
                    *dhj += ds * w;
                }
            }
            let f = &act.features[i];
            let mut df = vec![0.0; spec.embed_dim];
            for j in 0..spec.hidden_dim {
                let dz = dh[j] * (1.0 - h[j] * h[j]);
                grads.hidden_b.data[j] += dz;
                for (gw, fv) in grads.hidden_w.row_mut(j).iter_mut().zip(f) {
                    *gw += dz * fv;
                }
                for (dfv, w) in df.iter_mut().zip(p.hidden_w.row(j)) {
                    *dfv += dz * w;
                }
            }
            let win = model.window(i, n);
            let inv = 1.0 / win.len() as f64;
            for &id in &act.ids[win] {
                for (g, dfv) in grads.token_embed.row_mut(id).iter_mut().zip(&df) {
                    *g += dfv * inv;
                }
            }
            if let Some(gb) = &mut grads.box_embed {
                for &r in &act.box_rows[i] {
                    for (g, dfv) in gb.row_mut(r).iter_mut().zip(&df) {
                        *g += dfv;
                    }
                }
            }
        }
    }
    let loss = loss_sum * inv_total;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss(loss));
    }
    Ok((loss, grads))
}

/// Mean token cross-entropy without gradients.
pub fn loss(model: &ModelState, batch: &[&DocSequence]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in batch {
        let scores = forward(model, seq)?;
        for (row, &gold) in scores.iter().zip(&seq.labels) {
            total += cross_entropy(row, gold).0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(ModelError::EmptyBatch);
    }
    Ok(total / count as f64)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &ModelState, seq: &DocSequence) -> Result<Vec<usize>, ModelError> {
    Ok(forward(model, seq)?.iter().map(|r| argmax(r)).collect())
}

/// Predictions for many sequences; parallel when the `parallel` feature is
/// on. Output order matches input order either way.
pub fn predict_all(model: &ModelState, seqs: &[DocSequence]) -> Result<Vec<Vec<usize>>, ModelError> {
    crate::par::map(seqs, |s| predict(model, s)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LayoutBox;

    fn seq(tokens: &[&str], labels: &[usize], boxes: Option<Vec<LayoutBox>>) -> DocSequence {
        DocSequence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            labels: labels.to_vec(),
            boxes,
        }
    }

    fn bx(x0: u16, y0: u16) -> LayoutBox {
        LayoutBox {
            x0,
            y0,
            x1: x0 + 50,
            y1: y0 + 20,
        }
    }

    fn spec(arch: Arch) -> ModelSpec {
        ModelSpec {
            hash_vocab: 64,
            embed_dim: 6,
            hidden_dim: 5,
            num_box_buckets: 8,
            ..ModelSpec::new(arch, 5)
        }
    }

    #[test]
    fn init_is_deterministic_and_gated() {
        let a = init_model(&spec(Arch::TextOnly), 42).unwrap();
        let b = init_model(&spec(Arch::TextOnly), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(&spec(Arch::TextOnly), 43).unwrap());
        assert!(!a.params.names().contains(&"box_embed"));
        assert!(a.params.hidden_b.data.iter().all(|&v| v == 0.0));
        let l = init_model(&spec(Arch::LayoutAware), 42).unwrap();
        assert_eq!(l.params.box_embed.as_ref().unwrap().shape, vec![4 * 8, 6]);
        assert_eq!(l.parameter_count(), a.parameter_count() + 32 * 6);
        let bound = 1.0 / 6f64.sqrt();
        assert!(l.params.hidden_w.data.iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelState::zeros(ModelSpec { embed_dim: 3, ..spec(Arch::TextOnly) }).is_err());
        assert!(ModelState::zeros(ModelSpec { context_window: 4, ..spec(Arch::TextOnly) }).is_err());
        assert!(ModelState::zeros(ModelSpec { num_box_buckets: 1, ..spec(Arch::LayoutAware) }).is_err());
        assert!(ModelState::zeros(ModelSpec { num_box_buckets: 1, ..spec(Arch::TextOnly) }).is_ok());
    }

    #[test]
    fn zero_params_give_zero_scores_and_label_zero() {
        let m = ModelState::zeros(spec(Arch::TextOnly)).unwrap();
        let s = seq(&["a", "b", "c"], &[0, 1, 2], None);
        assert!(forward(&m, &s).unwrap().iter().flatten().all(|&v| v == 0.0));
        assert_eq!(predict(&m, &s).unwrap(), vec![0, 0, 0]);
        let loss = loss_and_grads(&m, &[&s]).unwrap().0;
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn layout_needs_boxes() {
        let m = init_model(&spec(Arch::LayoutAware), 1).unwrap();
        let s = seq(&["a"], &[0], None);
        assert!(matches!(forward(&m, &s), Err(ModelError::MissingBoxes)));
    }

    #[test]
    fn boxes_matter_only_for_layout() {
        let a = seq(&["tok"], &[0], Some(vec![bx(10, 10)]));
        let b = seq(&["tok"], &[0], Some(vec![bx(700, 900)]));
        let text = init_model(&spec(Arch::TextOnly), 3).unwrap();
        assert_eq!(forward(&text, &a).unwrap(), forward(&text, &b).unwrap());
        let layout = init_model(&spec(Arch::LayoutAware), 3).unwrap();
        assert_ne!(forward(&layout, &a).unwrap(), forward(&layout, &b).unwrap());
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
        let row = [0.3, -1.0, 2.2, 2.1];
        let shifted: Vec<f64> = row.iter().map(|v| v + 17.5).collect();
        assert_eq!(argmax(&row), argmax(&shifted));
    }

    #[test]
    fn batch_duplication_keeps_loss() {
        let m = init_model(&spec(Arch::TextOnly), 9).unwrap();
        let s1 = seq(&["a", "b", "c"], &[0, 1, 2], None);
        let s2 = seq(&["d", "e"], &[3, 4], None);
        let (l1, _) = loss_and_grads(&m, &[&s1, &s2]).unwrap();
        let (l2, _) = loss_and_grads(&m, &[&s1, &s2, &s1, &s2]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!((l1 - loss(&m, &[&s1, &s2]).unwrap()).abs() < 1e-12);
        assert!(matches!(loss_and_grads(&m, &[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn other_sequences_do_not_leak() {
        let m = init_model(&spec(Arch::TextOnly), 9).unwrap();
        let s1 = seq(&["a", "b", "c"], &[0, 1, 2], None);
        let before = forward(&m, &s1).unwrap();
        let _ = predict_all(&m, &[seq(&["z"], &[0], None), s1.clone()]).unwrap();
        assert_eq!(forward(&m, &s1).unwrap(), before);
    }

    #[test]
    fn buckets() {
        assert_eq!(box_bucket(0, 8), 0);
        assert_eq!(box_bucket(124, 8), 0);
        assert_eq!(box_bucket(125, 8), 1);
        assert_eq!(box_bucket(999, 8), 7);
        assert_eq!(box_bucket(1000, 8), 7);
        assert!(token_bucket("hello", 64) < 64);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_model(&spec(Arch::LayoutAware), 5).unwrap();
        let json = m.to_checkpoint_json();
        assert_eq!(ModelState::from_checkpoint_json(&json).unwrap(), m);
        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(ModelState::from_checkpoint_json(&bad).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save_checkpoint(&path).unwrap();
        assert_eq!(ModelState::load_checkpoint(&path).unwrap(), m);
    }
}
