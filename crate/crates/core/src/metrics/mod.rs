//! Objective evaluation: STOI, word error rate and an external PESQ hook.

mod pesq;
mod stoi;
mod wer;

pub use pesq::{parse_score, pesq_external};
pub use stoi::{resample, stoi, StoiConfig, STOI};
pub use wer::{edit_distance, parse_transcripts, read_transcripts, wer, Transcript};
