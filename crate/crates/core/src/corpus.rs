//! Token sequences with IOB labels and optional layout boxes.
//!
//! Ingestion reads CoNLL-style text: one `token<TAB>tag[<TAB>x0 y0 x1 y1]`
//! line per token, a blank line between sequences. The synthetic generator
//! produces two profiles: `forms`, where the label of most tokens can only
//! be recovered from which column the box sits in, and `receipts`, where
//! token identity and local context predict nearly everything.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

pub const COORD_MAX: u16 = 1000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: unknown tag format `{tag}` (expected O, B-<type> or I-<type>)")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: InvalidBox {detail}")]
    InvalidBox { line: usize, detail: String },
    #[error("line {line}: expected {expected} tab-separated fields, found {found}")]
    LengthMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("corpus `{0}` has an empty split")]
    EmptySplit(String),
    #[error("invalid sequence {index}: {detail}")]
    InvalidSequence { index: usize, detail: String },
    #[error("unknown synthetic profile `{0}`")]
    UnknownProfile(String),
    #[error("synthetic corpora need at least 10 sequences, got {0}")]
    TooFewSequences(usize),
}

/// A parsed IOB tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn parse(s: &str) -> Option<Tag> {
        if s == "O" {
            return Some(Tag::Outside);
        }
        let (prefix, ty) = s.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(Tag::Begin(ty.to_string())),
            "I" => Some(Tag::Inside(ty.to_string())),
            _ => None,
        }
    }

    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub entity_types: Vec<String>,
    pub labels: Vec<String>,
}

impl LabelSchema {
    /// Schema with `O` at index 0 followed by `B-t`, `I-t` for each type in
    /// lexicographic order.
    pub fn from_entity_types<I, S>(types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entity_types: Vec<String> = types
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut labels = Vec::with_capacity(2 * entity_types.len() + 1);
        labels.push("O".to_string());
        for t in &entity_types {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        LabelSchema { entity_types, labels }
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, tag: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == tag)
    }

    pub fn tag(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn tags(&self, labels: &[usize]) -> Vec<String> {
        labels.iter().map(|&l| self.labels[l].clone()).collect()
    }

    /// Union of two schemas.
    pub fn merge(&self, other: &LabelSchema) -> LabelSchema {
        LabelSchema::from_entity_types(self.entity_types.iter().chain(&other.entity_types).cloned())
    }
}

/// Layout box in coordinates normalized to `[0, 1000]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutBox {
    pub x0: u16,
    pub y0: u16,
    pub x1: u16,
    pub y1: u16,
}

impl LayoutBox {
    pub fn new(x0: u16, y0: u16, x1: u16, y1: u16) -> Result<Self, String> {
        let b = LayoutBox { x0, y0, x1, y1 };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(format!("{self} has x1 < x0 or y1 < y0"));
        }
        if self.x1 > COORD_MAX || self.y1 > COORD_MAX {
            return Err(format!("{self} leaves [0, {COORD_MAX}]"));
        }
        Ok(())
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Scales pixel coordinates on a `width`×`height` page into `[0, 1000]`.
    pub fn normalize(px: [f64; 4], width: f64, height: f64) -> Result<Self, String> {
        let scale = |v: f64, extent: f64| -> u16 {
            ((v / extent * f64::from(COORD_MAX)).round()).clamp(0.0, f64::from(COORD_MAX)) as u16
        };
        LayoutBox::new(
            scale(px[0], width),
            scale(px[1], height),
            scale(px[2], width),
            scale(px[3], height),
        )
    }
}

impl std::fmt::Display for LayoutBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {} {}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl FromStr for LayoutBox {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(format!("expected 4 coordinates, found {}", parts.len()));
        }
        let mut c = [0u16; 4];
        for (slot, p) in c.iter_mut().zip(&parts) {
            let v: i64 = p.parse().map_err(|_| format!("`{p}` is not an integer coordinate"))?;
            if !(0..=i64::from(COORD_MAX)).contains(&v) {
                return Err(format!("coordinate {v} outside [0, {COORD_MAX}]"));
            }
            *slot = v as u16;
        }
        LayoutBox::new(c[0], c[1], c[2], c[3])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocSequence {
    pub tokens: Vec<String>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<LayoutBox>>,
}

impl DocSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self, schema: &LabelSchema) -> Result<(), String> {
        if self.labels.len() != self.tokens.len() {
            return Err(format!("{} labels for {} tokens", self.labels.len(), self.tokens.len()));
        }
        if let Some(boxes) = &self.boxes {
            if boxes.len() != self.tokens.len() {
                return Err(format!("{} boxes for {} tokens", boxes.len(), self.tokens.len()));
            }
            for b in boxes {
                b.check()?;
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= schema.num_labels()) {
            return Err(format!("label {bad} >= {}", schema.num_labels()));
        }
        Ok(())
    }
}

/// Sequences from one CoNLL file together with the tag set they use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConllData {
    pub schema: LabelSchema,
    pub sequences: Vec<DocSequence>,
}

impl ConllData {
    /// Re-indexes labels under a wider schema.
    pub fn remap(&self, target: &LabelSchema) -> Vec<DocSequence> {
        let map: Vec<usize> = self
            .schema
            .labels
            .iter()
            .map(|l| target.index_of(l).expect("target schema covers source"))
            .collect();
        self.sequences
            .iter()
            .map(|s| DocSequence {
                labels: s.labels.iter().map(|&l| map[l]).collect(),
                ..s.clone()
            })
            .collect()
    }
}

pub fn parse_conll(text: &str, has_boxes: bool) -> Result<ConllData, CorpusError> {
    struct Raw {
        tokens: Vec<String>,
        tags: Vec<String>,
        boxes: Vec<LayoutBox>,
    }
    let mut raws: Vec<Raw> = Vec::new();
    let mut cur = Raw {
        tokens: Vec::new(),
        tags: Vec::new(),
        boxes: Vec::new(),
    };
    let mut types = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if !cur.tokens.is_empty() {
                raws.push(std::mem::replace(
                    &mut cur,
                    Raw {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                        boxes: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = if has_boxes { 3 } else { 2 };
        if fields.len() != expected && !(fields.len() == 3 && !has_boxes) {
            return Err(CorpusError::LengthMismatch {
                line: lineno,
                expected,
                found: fields.len(),
            });
        }
        if fields[0].is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                detail: "empty token".into(),
            });
        }
        let tag = Tag::parse(fields[1]).ok_or_else(|| CorpusError::UnknownTag {
            line: lineno,
            tag: fields[1].to_string(),
        })?;
        if let Some(t) = tag.entity_type() {
            types.insert(t.to_string());
        }
        if has_boxes {
            let b: LayoutBox = fields[2].parse().map_err(|detail| CorpusError::InvalidBox { line: lineno, detail })?;
            cur.boxes.push(b);
        }
        cur.tokens.push(fields[0].to_string());
        cur.tags.push(fields[1].to_string());
    }
    if !cur.tokens.is_empty() {
        raws.push(cur);
    }
    let schema = LabelSchema::from_entity_types(types);
    let sequences = raws
        .into_iter()
        .map(|r| DocSequence {
            labels: r.tags.iter().map(|t| schema.index_of(t).expect("tag in inferred schema")).collect(),
            tokens: r.tokens,
            boxes: has_boxes.then_some(r.boxes),
        })
        .collect();
    Ok(ConllData { schema, sequences })
}

pub fn load_conll(path: impl AsRef<Path>, has_boxes: bool) -> Result<ConllData, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_conll(&text, has_boxes)
}

/// Canonical CoNLL text: every sequence is followed by one blank line.
pub fn to_conll(schema: &LabelSchema, sequences: &[DocSequence]) -> String {
    let mut out = String::new();
    for seq in sequences {
        for (i, tok) in seq.tokens.iter().enumerate() {
            let _ = write!(out, "{tok}\t{}", schema.tag(seq.labels[i]));
            if let Some(boxes) = &seq.boxes {
                let _ = write!(out, "\t{}", boxes[i]);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub schema: LabelSchema,
    pub train: Vec<DocSequence>,
    pub test: Vec<DocSequence>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        schema: LabelSchema,
        train: Vec<DocSequence>,
        test: Vec<DocSequence>,
    ) -> Result<Self, CorpusError> {
        let corpus = Corpus {
            name: name.into(),
            schema,
            train,
            test,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Builds a corpus from separately loaded splits, unifying their tag sets.
    pub fn from_splits(name: impl Into<String>, train: &ConllData, test: &ConllData) -> Result<Self, CorpusError> {
        let schema = train.schema.merge(&test.schema);
        Corpus::new(name, schema.clone(), train.remap(&schema), test.remap(&schema))
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(CorpusError::EmptySplit(self.name.clone()));
        }
        for (index, seq) in self.train.iter().chain(&self.test).enumerate() {
            seq.validate(&self.schema)
                .map_err(|detail| CorpusError::InvalidSequence { index, detail })?;
        }
        Ok(())
    }

    pub fn has_boxes(&self) -> bool {
        self.train.iter().chain(&self.test).all(|s| s.boxes.is_some())
    }

    pub fn metadata(&self) -> CorpusMetadata {
        let fractions = label_distribution(&self.train, &self.schema);
        CorpusMetadata {
            name: self.name.clone(),
            num_labels: self.schema.num_labels(),
            train_size: self.train.len(),
            test_size: self.test.len(),
            label_frequencies: self.schema.labels.iter().cloned().zip(fractions).collect(),
        }
    }
}

/// Loads a corpus from a training file and a test file.
pub fn load_corpus(
    name: impl Into<String>,
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    has_boxes: bool,
) -> Result<Corpus, CorpusError> {
    let train = load_conll(train_path, has_boxes)?;
    let test = load_conll(test_path, has_boxes)?;
    Corpus::from_splits(name, &train, &test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub name: String,
    pub num_labels: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub label_frequencies: BTreeMap<String, f64>,
}

/// Fraction of tokens carrying each label, indexed like `schema.labels`.
///
/// Returns all zeros when the sequences contain no tokens.
pub fn label_distribution(sequences: &[DocSequence], schema: &LabelSchema) -> Vec<f64> {
    let mut counts = vec![0usize; schema.num_labels()];
    for s in sequences {
        for &l in &s.labels {
            counts[l] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.into_iter().map(|c| c as f64 / total as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticProfile {
    Forms,
    Receipts,
}

impl SyntheticProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticProfile::Forms => "forms",
            SyntheticProfile::Receipts => "receipts",
        }
    }
}

impl FromStr for SyntheticProfile {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forms" => Ok(SyntheticProfile::Forms),
            "receipts" => Ok(SyntheticProfile::Receipts),
            other => Err(CorpusError::UnknownProfile(other.to_string())),
        }
    }
}

pub const VOCAB_SIZE: usize = 500;

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

/// The fixed 500-word synthetic vocabulary.
pub fn vocabulary() -> Vec<String> {
    let syllables: Vec<String> = CONSONANTS
        .iter()
        .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{}{}", c as char, v as char)))
        .collect();
    let n = syllables.len();
    (0..VOCAB_SIZE)
        .map(|i| {
            let a = i % n;
            let b = (i / n * 17 + a * 31) % n;
            format!("{}{}", syllables[a], syllables[b])
        })
        .collect()
}

// Vocabulary partition. Forms share one pool between questions and answers
// so token identity alone cannot separate them.
const FORM_SHARED: std::ops::Range<usize> = 0..150;
const FORM_QUESTION: std::ops::Range<usize> = 150..200;
const FORM_ANSWER: std::ops::Range<usize> = 200..250;
const FORM_HEADER: std::ops::Range<usize> = 250..280;
const FORM_FILLER: std::ops::Range<usize> = 280..320;
const RECEIPT_STORE: std::ops::Range<usize> = 320..345;
const RECEIPT_MENU: std::ops::Range<usize> = 345..425;
const RECEIPT_COUNT: std::ops::Range<usize> = 425..440;
const RECEIPT_PRICE: std::ops::Range<usize> = 440..490;
const RECEIPT_KEYWORDS: std::ops::Range<usize> = 490..500;

/// Probability that a question or answer token comes from the shared pool.
const FORM_SHARED_PROB: f64 = 0.75;

struct Builder<'a> {
    vocab: &'a [String],
    schema: &'a LabelSchema,
    tokens: Vec<String>,
    labels: Vec<usize>,
    boxes: Vec<LayoutBox>,
}

impl<'a> Builder<'a> {
    fn new(vocab: &'a [String], schema: &'a LabelSchema) -> Self {
        Builder {
            vocab,
            schema,
            tokens: Vec::new(),
            labels: Vec::new(),
            boxes: Vec::new(),
        }
    }

    fn push(&mut self, word: usize, tag: &str, x0: i32, y0: i32, width: i32) {
        let clamp = |v: i32| v.clamp(0, i32::from(COORD_MAX)) as u16;
        let (x0c, y0c) = (clamp(x0), clamp(y0));
        let b = LayoutBox {
            x0: x0c,
            y0: y0c,
            x1: clamp(x0 + width).max(x0c),
            y1: clamp(y0 + 18).max(y0c),
        };
        self.tokens.push(self.vocab[word].clone());
        self.labels.push(self.schema.index_of(tag).expect("generator tag in schema"));
        self.boxes.push(b);
    }

    /// Emits a phrase of words starting at `x`, returns the x after it.
    fn phrase(&mut self, words: &[usize], ty: Option<&str>, mut x: i32, y: i32, rng: &mut dyn RngCore) -> i32 {
        for (i, &w) in words.iter().enumerate() {
            let tag = match ty {
                None => "O".to_string(),
                Some(t) if i == 0 => format!("B-{t}"),
                Some(t) => format!("I-{t}"),
            };
            let width = rng.gen_range(70..=95);
            self.push(w, &tag, x, y + rng.gen_range(-3..=3), width);
            x += width + rng.gen_range(8..=14);
        }
        x
    }

    fn finish(self) -> DocSequence {
        DocSequence {
            tokens: self.tokens,
            labels: self.labels,
            boxes: Some(self.boxes),
        }
    }
}

fn pick(range: &std::ops::Range<usize>, rng: &mut dyn RngCore) -> usize {
    rng.gen_range(range.clone())
}

fn form_schema() -> LabelSchema {
    LabelSchema::from_entity_types(["question", "answer", "header"])
}

fn receipt_schema() -> LabelSchema {
    LabelSchema::from_entity_types([
        "store.nm",
        "menu.cnt",
        "menu.nm",
        "menu.price",
        "subtotal.price",
        "tax.price",
        "total.price",
        "total.cash",
    ])
}

fn form_sequence(vocab: &[String], schema: &LabelSchema, rng: &mut dyn RngCore) -> DocSequence {
    let mut b = Builder::new(vocab, schema);
    let header: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| pick(&FORM_HEADER, rng)).collect();
    b.phrase(&header, Some("header"), 330 + rng.gen_range(-20..=20), 50, rng);
    let rows = rng.gen_range(3..=7);
    for row in 0..rows {
        let y = 150 + row * 105 + rng.gen_range(-8..=8);
        let draw = |own: &std::ops::Range<usize>, rng: &mut dyn RngCore| -> usize {
            if rng.gen_bool(FORM_SHARED_PROB) {
                rng.gen_range(FORM_SHARED)
            } else {
                rng.gen_range(own.clone())
            }
        };
        let question: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| draw(&FORM_QUESTION, rng)).collect();
        b.phrase(&question, Some("question"), 40 + rng.gen_range(-12..=12), y, rng);
        if rng.gen_bool(0.85) {
            let answer: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| draw(&FORM_ANSWER, rng)).collect();
            b.phrase(&answer, Some("answer"), 540 + rng.gen_range(-12..=12), y, rng);
        }
    }
    let filler: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| pick(&FORM_FILLER, rng)).collect();
    b.phrase(&filler, None, 60 + rng.gen_range(0..=300), 930, rng);
    b.finish()
}

fn receipt_sequence(vocab: &[String], schema: &LabelSchema, rng: &mut dyn RngCore) -> DocSequence {
    let items = rng.gen_range(1..=5);
    let with_tax = rng.gen_bool(0.6);
    let with_cash = rng.gen_bool(0.5);
    let lines = 1 + items + 2 + usize::from(with_tax) + usize::from(with_cash);
    let step = (880 / lines) as i32;
    let mut b = Builder::new(vocab, schema);
    let mut y = 40;
    let store: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| pick(&RECEIPT_STORE, rng)).collect();
    b.phrase(&store, Some("store.nm"), 300, y, rng);
    for _ in 0..items {
        y += step;
        let x = b.phrase(&[pick(&RECEIPT_COUNT, rng)], Some("menu.cnt"), 60, y, rng);
        let name: Vec<usize> = (0..rng.gen_range(1..=3))
            .map(|_| {
                // Occasional out-of-pool words keep the profile from being
                // a pure lookup table.
                if rng.gen_bool(0.08) {
                    pick(&FORM_SHARED, rng)
                } else {
                    pick(&RECEIPT_MENU, rng)
                }
            })
            .collect();
        b.phrase(&name, Some("menu.nm"), x, y, rng);
        b.phrase(&[pick(&RECEIPT_PRICE, rng)], Some("menu.price"), 820, y, rng);
    }
    let mut summary = |keyword: usize, ty: &str, b: &mut Builder<'_>, rng: &mut dyn RngCore| {
        y += step;
        b.phrase(&[RECEIPT_KEYWORDS.start + keyword], None, 500, y, rng);
        b.phrase(&[pick(&RECEIPT_PRICE, rng)], Some(ty), 820, y, rng);
    };
    summary(0, "subtotal.price", &mut b, rng);
    if with_tax {
        summary(1, "tax.price", &mut b, rng);
    }
    summary(2, "total.price", &mut b, rng);
    if with_cash {
        summary(3, "total.cash", &mut b, rng);
    }
    b.finish()
}

/// Deterministic synthetic corpus with a 75/25 train/test split by
/// sequence.
pub fn generate_synthetic(profile: SyntheticProfile, num_sequences: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if num_sequences < 10 {
        return Err(CorpusError::TooFewSequences(num_sequences));
    }
    let vocab = vocabulary();
    let schema = match profile {
        SyntheticProfile::Forms => form_schema(),
        SyntheticProfile::Receipts => receipt_schema(),
    };
    let mut rng = stream_rng(seed, profile as u64, Stream::Corpus);
    let mut sequences: Vec<DocSequence> = (0..num_sequences)
        .map(|_| match profile {
            SyntheticProfile::Forms => form_sequence(&vocab, &schema, &mut rng),
            SyntheticProfile::Receipts => receipt_sequence(&vocab, &schema, &mut rng),
        })
        .collect();
    sequences.shuffle(&mut rng);
    let train_size = ((num_sequences as f64) * 0.75).round() as usize;
    let test = sequences.split_off(train_size);
    Corpus::new(profile.as_str(), schema, sequences, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file() {
        let data = parse_conll("Date\tB-question\n\n", false).unwrap();
        assert_eq!(data.sequences.len(), 1);
        assert_eq!(data.schema.entity_types, vec!["question"]);
        assert_eq!(data.schema.num_labels(), 3);
        assert_eq!(data.schema.labels, vec!["O", "B-question", "I-question"]);
    }

    #[test]
    fn seven_class_schema() {
        let text = "a\tO\nb\tB-a\nc\tI-a\nd\tB-b\ne\tI-b\nf\tB-c\ng\tI-c\n\n";
        let data = parse_conll(text, false).unwrap();
        assert_eq!(data.schema.num_labels(), 7);
        assert_eq!(data.schema.labels[0], "O");
    }

    #[test]
    fn schema_orders_types_lexicographically() {
        let s = LabelSchema::from_entity_types(["question", "answer", "header", "answer"]);
        assert_eq!(s.entity_types, vec!["answer", "header", "question"]);
        assert_eq!(s.num_labels(), 2 * 3 + 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_conll("tok\tB-x\t10 10 5 20\n\n", true),
            Err(CorpusError::InvalidBox { line: 1, .. })
        ));
        assert!(matches!(
            parse_conll("tok\tB-x\t10 10 1001 20\n", true),
            Err(CorpusError::InvalidBox { .. })
        ));
        assert!(matches!(
            parse_conll("tok\tX-x\n", false),
            Err(CorpusError::UnknownTag { .. })
        ));
        assert!(matches!(parse_conll("tok\tB-\n", false), Err(CorpusError::UnknownTag { .. })));
        assert!(matches!(
            parse_conll("tok\tO\n", true),
            Err(CorpusError::LengthMismatch { expected: 3, found: 2, .. })
        ));
        assert!(matches!(
            parse_conll("tok\tO\tx\ty\n", false),
            Err(CorpusError::LengthMismatch { .. })
        ));
        assert!(matches!(
            parse_conll("tok\tO\t1 2 3\n", true),
            Err(CorpusError::InvalidBox { .. })
        ));
    }

    #[test]
    fn crlf_and_blank_runs() {
        let data = parse_conll("a\tO\r\n\r\n\r\nb\tB-x\r\nc\tI-x\r\n", false).unwrap();
        assert_eq!(data.sequences.len(), 2);
        assert_eq!(data.sequences[1].labels, vec![1, 2]);
    }

    #[test]
    fn round_trip_with_boxes() {
        let text = "Date\tB-question\t10 20 60 40\n:\tI-question\t61 20 70 40\n2021\tB-answer\t500 20 560 40\n\nTotal\tO\t0 0 1000 1000\n\n";
        let data = parse_conll(text, true).unwrap();
        assert_eq!(to_conll(&data.schema, &data.sequences), text);
    }

    #[test]
    fn splits_share_a_schema() {
        let train = parse_conll("a\tB-x\n\n", false).unwrap();
        let test = parse_conll("b\tB-y\nc\tI-y\n\n", false).unwrap();
        let corpus = Corpus::from_splits("t", &train, &test).unwrap();
        assert_eq!(corpus.schema.labels, vec!["O", "B-x", "I-x", "B-y", "I-y"]);
        assert_eq!(corpus.test[0].labels, vec![3, 4]);
        assert!(Corpus::from_splits("t", &train, &parse_conll("", false).unwrap()).is_err());
    }

    #[test]
    fn distribution_counts() {
        let schema = LabelSchema::from_entity_types(["a"]);
        let all_o = DocSequence {
            tokens: vec!["x".into(); 3],
            labels: vec![0; 3],
            boxes: None,
        };
        assert_eq!(label_distribution(&[all_o], &schema), vec![1.0, 0.0, 0.0]);
        let mixed = DocSequence {
            tokens: vec!["x".into(); 4],
            labels: vec![1, 2, 0, 0],
            boxes: None,
        };
        assert_eq!(label_distribution(&[mixed], &schema), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn vocabulary_is_fixed_and_unique() {
        let v = vocabulary();
        assert_eq!(v.len(), VOCAB_SIZE);
        assert_eq!(v.iter().collect::<BTreeSet<_>>().len(), VOCAB_SIZE);
        assert_eq!(v, vocabulary());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(SyntheticProfile::Forms, 100, 42).unwrap();
        let b = generate_synthetic(SyntheticProfile::Forms, 100, 42).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_eq!(a.train.len(), 75);
        assert_eq!(a.test.len(), 25);
        assert_eq!(a.schema.num_labels(), 7);
        let c = generate_synthetic(SyntheticProfile::Forms, 100, 43).unwrap();
        assert_ne!(a, c);
        assert!(matches!(
            generate_synthetic(SyntheticProfile::Receipts, 9, 1),
            Err(CorpusError::TooFewSequences(9))
        ));
    }

    #[test]
    fn forms_have_layout_only_ambiguity() {
        let corpus = generate_synthetic(SyntheticProfile::Forms, 100, 42).unwrap();
        let q: Vec<usize> = ["B-question", "I-question"].iter().map(|t| corpus.schema.index_of(t).unwrap()).collect();
        let a: Vec<usize> = ["B-answer", "I-answer"].iter().map(|t| corpus.schema.index_of(t).unwrap()).collect();
        let mut as_question: BTreeMap<&str, Vec<u16>> = BTreeMap::new();
        let mut as_answer: BTreeMap<&str, Vec<u16>> = BTreeMap::new();
        for seq in corpus.train.iter().chain(&corpus.test) {
            let boxes = seq.boxes.as_ref().unwrap();
            for (i, tok) in seq.tokens.iter().enumerate() {
                let cx = (boxes[i].x0 + boxes[i].x1) / 2;
                if q.contains(&seq.labels[i]) {
                    as_question.entry(tok).or_default().push(cx);
                } else if a.contains(&seq.labels[i]) {
                    as_answer.entry(tok).or_default().push(cx);
                }
            }
        }
        let ambiguous: Vec<&&str> = as_question.keys().filter(|t| as_answer.contains_key(*t)).collect();
        assert!(!ambiguous.is_empty());
        // The box center alone separates the two readings.
        for tok in ambiguous {
            assert!(as_question[*tok].iter().all(|&c| c < 500));
            assert!(as_answer[*tok].iter().all(|&c| c >= 500));
        }
    }

    #[test]
    fn receipts_always_have_entities() {
        let corpus = generate_synthetic(SyntheticProfile::Receipts, 100, 7).unwrap();
        assert_eq!(corpus.schema.num_labels(), 17);
        for seq in corpus.train.iter().chain(&corpus.test) {
            assert!(seq.labels.iter().any(|&l| l != 0));
        }
    }

    #[test]
    fn metadata_dump() {
        let corpus = generate_synthetic(SyntheticProfile::Receipts, 40, 1).unwrap();
        let meta = corpus.metadata();
        assert_eq!(meta.train_size + meta.test_size, 40);
        let total: f64 = meta.label_frequencies.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        let json = serde_json::to_value(&meta).unwrap();
        for key in ["name", "num_labels", "train_size", "test_size", "label_frequencies"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn normalize_pixels() {
        let b = LayoutBox::normalize([0.0, 50.0, 612.0, 100.0], 612.0, 792.0).unwrap();
        assert_eq!(b, LayoutBox { x0: 0, y0: 63, x1: 1000, y1: 126 });
    }

    proptest! {
        #[test]
        fn generated_sequences_are_valid(seed: u64, forms: bool, n in 10usize..40) {
            let profile = if forms { SyntheticProfile::Forms } else { SyntheticProfile::Receipts };
            let corpus = generate_synthetic(profile, n, seed).unwrap();
            prop_assert!(corpus.validate().is_ok());
            let text = to_conll(&corpus.schema, &corpus.train);
            let back = parse_conll(&text, true).unwrap();
            // Round trip through text under the file's own schema.
            prop_assert_eq!(to_conll(&back.schema, &back.sequences), text);
            let fractions = label_distribution(&corpus.train, &corpus.schema);
            prop_assert!((fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
