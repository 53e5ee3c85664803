//! Progressive data scheduling for sequence-labeling training.
//!
//! The crate covers the full loop of a matched-compute curriculum study:
//! pacing schedules ([`schedule`]), IOB corpora ([`corpus`]), two toy token
//! classifiers ([`model`]), an AdamW training loop with compute accounting
//! ([`trainer`]), entity-level F1 ([`metrics`]), paired statistics
//! ([`stats`]) and an experiment-matrix runner with reporting ([`runner`]).

pub mod corpus;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod runner;
pub mod schedule;
pub mod stats;
pub mod trainer;
pub mod verify;

pub use corpus::{Corpus, DocSequence, LabelSchema, LayoutBox, SyntheticProfile};
pub use metrics::{entity_prf, extract_spans, Prf, Span};
pub use model::{Arch, ModelSpec, ModelState};
pub use schedule::{build_schedule, sample_subset, EpochPlan, PacingSchedule, Phase, ScheduleKind};
pub use stats::{paired_test, p_two_tailed, summarize, PairedTestResult, Summary};
pub use trainer::{train, RunResult, TrainConfig};
