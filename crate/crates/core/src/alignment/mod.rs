//! Correspondences between source and target agent states.

mod dtw;
mod em;
mod pairs;

pub use dtw::{dtw, euclidean, AlignmentPath};
pub use em::{em_align, embedded_dtw, AlignConfig, EmAlignment, RoundDiagnostics};
pub use pairs::{agent_states_csv, pairs_from_paths, time_align, PairEntry, PairSet, Provenance};
