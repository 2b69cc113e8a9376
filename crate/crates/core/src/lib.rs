//! Unsourced random access over a MIMO block-fading channel: sparse
//! regression codes, an LDPC outer code, BiGAMP joint detection and
//! successive interference cancellation.

pub mod channel;
pub mod config;
pub mod detector;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod ldpc;
pub mod linalg;
pub mod receiver;
pub mod selftest;
pub mod sparc;

pub use channel::{ChannelMatrix, Message, Observation};
pub use config::{SystemConfig, ValidatedConfig};
pub use detector::{DetectorOutput, DetectorState, ExtrinsicPriors};
pub use dictionary::{Dictionary, DictionaryKind};
pub use error::{Error, Result};
pub use harness::{Axis, PointRow, Scenario, SweepResult, SweepSpec, Threshold, TrialRecord};
pub use ldpc::{BitBeliefs, LdpcCode, SisoOutput};
pub use linalg::{ComplexMatrix, ComplexVector, RngStream, C64};
pub use receiver::{DecodedSet, ReceiverContext, ReceiverResult};
pub use sparc::{SectionPosterior, SupportMatrix, SupportVector};
