//! Lagged inflation models fitted on cumulative curves, with unit-root and
//! cointegration tests, a single-equation error-correction model and
//! forecast evaluation.

pub mod bem;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod reference;
pub mod series;
pub mod stattests;
pub mod vecm;

pub use bem::{BreakModel, ModelForm, SearchSpec};
pub use ingest::{DatasetConfig, Registry};
pub use series::{AnnualSeries, Unit};
