//! End-to-end group Lasso feature selection: paths, frequency and stability
//! selection, benchmarks and the `fedgl` command line.

pub mod bench;
pub mod cli;
pub mod error;
pub mod output;
pub mod select;
pub mod stability;

pub use bench::{bench, proportional_split, BenchConfig, BenchMode, BenchRow};
pub use error::{PipelineError, Result};
pub use select::{frequency_select, groups_of, selection_frequency, SelectionFrequency};
pub use stability::{entry_order, stability_select, StabilityConfig, StabilityReport};
