//! Numerical laboratory for the fractional heat operator, its extension
//! problem and the associated frequency functionals.

pub mod blowup;
pub mod error;
pub mod extension;
pub mod fields;
pub mod fracheat;
pub mod frequency;
pub mod quadrature;
pub mod solution;
pub mod specfun;

pub use error::{FhError, Result};
pub use fields::{Mode, SpaceTimeField, SpaceTimeGrid};
pub use num_complex::Complex64;
pub use blowup::{
    almgren_rescale, blowup_sequence, harnack_quotient, nondegeneracy_check, vanishing_order, vanishing_order_field,
    AlmgrenRescaled, BlowupReport, VanishingOptions, VanishingOrder, VanishingReport,
};
pub use extension::{ExtensionField, PotentialMode, YGrid};
pub use fracheat::{frac_heat_balakrishnan, frac_heat_multiplier, manufactured_potential, FracConfig, PotentialField};
pub use frequency::{
    adjusted_frequency_curve, averaged_functionals, calibrate_c, FrequencyCurve, Functionals, GaussianQuadrature,
};
pub use solution::{Builtin, BuiltinKind, Jet, SolutionField, Superposition};
