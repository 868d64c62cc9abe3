//! Special functions (backed by statrs).

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, gamma, ln_gamma};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// B(a, b) computed through ln_beta.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// Γ(1+κ)Γ(1−κ)·sin(πκ)/(πκ) − 1; zero by the reflection formula.
pub fn euler_reflection_residual(kappa: f64) -> f64 {
    let pk = std::f64::consts::PI * kappa;
    gamma(1.0 + kappa) * gamma(1.0 - kappa) * pk.sin() / pk - 1.0
}
