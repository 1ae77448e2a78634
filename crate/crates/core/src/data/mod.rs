//! Raw panel ingestion, Kaya decomposition, normalization and splitting.

mod kaya;
mod normalize;
mod panel;
mod records;
pub mod synthetic;
mod variable;

pub use kaya::{kaya_decompose, kaya_decompose_partial, kaya_recompose};
pub use normalize::{normalize_panel, Affine, Normalizer};
pub use panel::{panels_from_records, split_panel, Panel, Units, SHARE_RENORMALIZE_TOLERANCE};
pub use records::{parse_panel_csv, write_panel_csv, RawRecord, CSV_HEADER};
pub use synthetic::{generate_synthetic_panel, DynamicsKind, SynthSpec};
pub use variable::{VariableId, NUM_VARS, SHARE_START};
