//! Case files, PMI date arithmetic, synthetic data and effect tables.

mod cases;
mod dates;
mod effects;
mod synthetic;

pub use cases::{encode_cases, parse_cases, read_cases_file, write_cases, IngestReport, RowError};
pub use dates::{compute_pmi, DateEvidence, DeathDateKind};
pub use effects::{export_effects, EffectRow, EffectsTable, DEFAULT_QUANTILES};
pub use synthetic::{generate_synthetic, DEMO_SYNTHETIC_SPEC, SyntheticSpec, SyntheticSpecDoc};
