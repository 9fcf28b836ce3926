//! Lipschitz differential forms on boxes in `R^n`, Steklov mollification,
//! and numerical verification of Stokes' theorem on half-spaces and
//! charted manifolds.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod forms;
pub mod integrate;
pub mod manifold;
pub mod mollify;
pub mod quadrature;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{BoxRegion, DerivativeMode, Expr, SamplePlan, ScalarField};
pub use forms::{FormSum, MultiIndex, SimpleForm, TopFormField};
pub use integrate::{BoundarySign, Domain, DomainKind, GridSpec, QuadratureRule};
pub use manifold::{Atlas, Chart};
pub use mollify::{Extension, MollificationSchedule, ProbeReport};
pub use report::StokesReport;
