//! Numerics for the Gibbs family `Pi(m)` on S^n.

pub mod ode;
pub mod optimize;
pub mod profile;
pub mod quadrature;
pub mod rate;

pub use profile::{
    capital_lambda, cov_eigen_oracle, cov_min_eigen, gibbs_covariance, lambda_derivative, lambda_profile, rho_ode,
    rho_prime, CapitalLambda, GibbsProfile, QuadratureRho, RhoEvaluator, RhoOde,
};
pub use quadrature::{h_quadrature, rho_quadrature};
pub use rate::{classify_regime, default_kappa, rate_eta, RateParameters, Regime};
