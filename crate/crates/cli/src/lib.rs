//! Library surface of the `sim` binary: scenario parsing, experiment
//! runners, and the CSV/SVG/manifest writers. Kept as a library so the
//! parsing and output layers are directly testable.

pub mod experiments;
pub mod output;
pub mod scenario;
