// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod design;
pub mod em;
pub mod error;
pub mod glm;
pub mod io;
pub mod math;
pub mod mcmc;
pub mod mediation;
pub mod numdiff;
pub mod report;
pub mod roc;
pub mod sim;
pub mod single;
pub mod twostage;

pub use design::DesignMatrix;
pub use em::{Accel, EmOptions};
pub use error::{Error, Result};
pub use report::{FitReport, ParamRow};
