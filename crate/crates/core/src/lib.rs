//! Blocked scan statistic for rectangular clusters in Bernoulli-labeled
//! point data.
//!
//! Rectangles are enumerated from an approximating family grouped into blocks
//! by size, scored with Kulldorff's log-likelihood ratio, and calibrated by
//! joint label permutation so that every block gets its own critical value.
//!
//! ```
//! use blockscan::{simulate_null, solve_alpha_tilde, blocked_scan, NullOptions, SynthConfig, WeightScheme};
//!
//! let data = SynthConfig { n_points: 400, ..SynthConfig::default() }.generate().unwrap();
//! let table = simulate_null(&data, 100, 7, &NullOptions::default()).unwrap();
//! let calibration = solve_alpha_tilde(&table, 0.05, WeightScheme::Ell2).unwrap();
//! let found = blocked_scan(&data, &calibration).unwrap();
//! assert!(found.iter().all(|d| d.t_value > d.threshold));
//! ```

pub mod approx;
pub mod calibration;
pub mod detection;
pub mod error;
pub mod model;
pub mod oracle;
pub mod plan;
pub mod statistic;
pub mod synth;

pub use approx::{block_range, blocks, count_all, enumerate_block, ApproxRect, BlockMembership, BlockSpec, RectCoords};
pub use calibration::{
    conventional_threshold, simulate_null, solve_alpha_tilde, CalibrationResult, NullOptions, PermutationTable,
    ScanOptions, WeightScheme,
};
pub use detection::{
    blocked_scan, conventional_scan, minimal_rects, Detection, DetectionRecord, DetectionReport, Method,
};
pub use error::{Error, Result};
pub use model::{ingest_csv, write_csv, Dataset, LabeledPoint};
pub use plan::ScanPlan;
pub use statistic::{llr, llr_two_sided, Counts, HypergeomParams, Side, Sidedness};
pub use synth::SynthConfig;
