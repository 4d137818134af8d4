//! Charge correlation functions of singularities in isotropic Gaussian
//! random fields: closed forms, the generic Gaussian matrix scheme, and a
//! Monte Carlo sampler to check both.

pub mod analytic;
pub mod correlation;
pub mod error;
pub mod extended;
pub mod jet;
pub mod kind;
pub mod sampler;
pub mod scheme;
pub mod special;

pub use analytic::{
    charge_correlation, cumulative_charge, density, g_analytic, h_function, hypervolume_constant,
    mean_abs_det_oracle, screening_integral, second_moment, ChargeCorrelation, Estimate, MomentVerdict,
    ScreeningReport, SumRuleReport,
};
pub use correlation::{CorrelationModel, CustomCorrelation, DerivativeStack, DerivedCorrelations};
pub use error::{Error, Result};
pub use jet::Jet;
pub use kind::SingularityKind;
pub use scheme::{assemble_sigma, evaluate_d, scheme_g, wick_pairings, xi_entry, JacobianForm, SchemeProblem};
pub use sampler::{
    detect, simulate, synthesize, FieldRealization, PairHistogram, SimulationConfig, SimulationResult, Singularity,
    Window,
};
