//! Environment laws: the distribution of ω₀, κ, moments of ρ₀ and speed.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::quadrature::integrate_unit_interval;
use crate::numeric::rng::{open01, StreamId};
use crate::numeric::special::{digamma, ln_beta};

/// User-supplied law of ω₀ given by a sampler and a density on (0,1).
pub trait CustomLaw: Send + Sync + fmt::Debug {
    fn sample_omega(&self, rng: &mut dyn RngCore) -> f64;
    fn density(&self, omega: f64) -> f64;
}

#[derive(Clone, Debug)]
pub enum Family {
    Beta { alpha: f64, beta: f64 },
    /// Atoms as (ω, probability).
    Discrete { atoms: Vec<(f64, f64)> },
    Custom(Arc<dyn CustomLaw>),
}

#[derive(Clone, Debug)]
enum Sampler {
    Beta(rand_distr::Beta<f64>),
    Discrete { cdf: Vec<f64>, omegas: Vec<f64> },
    Custom(Arc<dyn CustomLaw>),
}

/// Law of ω₀ without derived scalars.
#[derive(Clone, Debug)]
pub struct EnvironmentLaw {
    family: Family,
    sampler: Sampler,
}

const QUAD_TOL: f64 = 1e-12;

impl EnvironmentLaw {
    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidModel(format!("Beta({alpha}, {beta})")));
        }
        let d = rand_distr::Beta::new(alpha, beta)
            .map_err(|e| Error::InvalidModel(format!("Beta({alpha}, {beta}): {e}")))?;
        Ok(EnvironmentLaw {
            family: Family::Beta { alpha, beta },
            sampler: Sampler::Beta(d),
        })
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidModel("no atoms".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("probabilities sum to {total}")));
        }
        for &(w, p) in &atoms {
            if !(w > 0.0 && w < 1.0) || !(p > 0.0) {
                return Err(Error::InvalidModel(format!("bad atom ({w}, {p})")));
            }
        }
        let mut cdf = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.1 / total;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        let omegas = atoms.iter().map(|a| a.0).collect();
        Ok(EnvironmentLaw {
            family: Family::Discrete { atoms },
            sampler: Sampler::Discrete { cdf, omegas },
        })
    }

    pub fn custom(law: Arc<dyn CustomLaw>) -> Self {
        EnvironmentLaw {
            family: Family::Custom(law.clone()),
            sampler: Sampler::Custom(law),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Draw ω₀, strictly inside (0,1).
    #[inline]
    pub fn sample_omega<R: RngCore>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Beta(d) => loop {
                let w = d.sample(rng);
                if w > 0.0 && w < 1.0 {
                    return w;
                }
            },
            Sampler::Discrete { cdf, omegas } => {
                let u = open01(rng);
                let i = cdf.partition_point(|&c| c < u).min(omegas.len() - 1);
                omegas[i]
            }
            Sampler::Custom(c) => loop {
                let w = c.sample_omega(rng);
                if w > 0.0 && w < 1.0 {
                    return w;
                }
            },
        }
    }

    /// Reproducible i.i.d. block of ω.
    pub fn sample_omega_block(&self, length: usize, stream: StreamId) -> Result<Vec<f64>> {
        if length == 0 {
            return Err(Error::InvalidArgument("length must be at least 1".into()));
        }
        let mut rng = stream.rng();
        Ok((0..length).map(|_| self.sample_omega(&mut rng)).collect())
    }

    /// E[ρ₀^s].
    pub fn moment_rho(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::Beta { alpha, beta } => {
                if s >= *alpha || s <= -*beta {
                    return Err(Error::Divergent(s));
                }
                Ok((ln_beta(alpha - s, beta + s) - ln_beta(*alpha, *beta)).exp())
            }
            Family::Discrete { atoms } => Ok(atoms
                .iter()
                .map(|&(w, p)| p * ((1.0 - w) / w).powf(s))
                .sum()),
            Family::Custom(c) => {
                let q = integrate_unit_interval(|w, wc| custom_term(c.density(w), w, wc, s, false), QUAD_TOL)
                    .map_err(|_| Error::Divergent(s))?;
                if !q.value.is_finite() {
                    return Err(Error::Divergent(s));
                }
                Ok(q.value)
            }
        }
    }

    /// log E[ρ₀^s], stable for large moments.
    pub fn log_moment_rho(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::Beta { alpha, beta } => {
                if s >= *alpha || s <= -*beta {
                    return Err(Error::Divergent(s));
                }
                Ok(ln_beta(alpha - s, beta + s) - ln_beta(*alpha, *beta))
            }
            _ => self.moment_rho(s).map(f64::ln),
        }
    }

    /// E[ρ₀^s log ρ₀].
    pub fn rho_log_moment(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::Beta { alpha, beta } => {
                let m = self.moment_rho(s)?;
                Ok(m * (digamma(beta + s) - digamma(alpha - s)))
            }
            Family::Discrete { atoms } => Ok(atoms
                .iter()
                .map(|&(w, p)| {
                    let r: f64 = (1.0 - w) / w;
                    p * r.powf(s) * r.ln()
                })
                .sum()),
            Family::Custom(c) => {
                let q = integrate_unit_interval(
                    |w, wc| custom_term(c.density(w), w, wc, s, true),
                    QUAD_TOL,
                )
                .map_err(|_| Error::Divergent(s))?;
                Ok(q.value)
            }
        }
    }

    /// E[ρ₀^s log ρ₀] by quadrature of the density (atoms are summed).
    pub fn rho_log_moment_quadrature(&self, s: f64) -> Result<f64> {
        match &self.family {
            Family::Beta { alpha, beta } => {
                let (a, b) = (*alpha, *beta);
                let lb = ln_beta(a, b);
                let q = integrate_unit_interval(
                    |w, wc| {
                        let lr = wc.ln() - w.ln();
                        ((a - 1.0) * w.ln() + (b - 1.0) * wc.ln() - lb + s * lr).exp() * lr
                    },
                    QUAD_TOL,
                )
                .map_err(|_| Error::Divergent(s))?;
                Ok(q.value)
            }
            _ => self.rho_log_moment(s),
        }
    }

    /// E[log ρ₀].
    pub fn mean_log_rho(&self) -> Result<f64> {
        self.rho_log_moment(0.0)
    }

    /// E[ω₀].
    pub fn mean_omega(&self) -> Result<f64> {
        match &self.family {
            Family::Beta { alpha, beta } => Ok(alpha / (alpha + beta)),
            Family::Discrete { atoms } => Ok(atoms.iter().map(|a| a.0 * a.1).sum()),
            Family::Custom(c) => Ok(integrate_unit_interval(|w, _| w * c.density(w), QUAD_TOL)?.value),
        }
    }

    /// Speed (1−E[ρ₀])/(1+E[ρ₀]); no assumption on κ.
    pub fn speed(&self) -> Result<f64> {
        Ok(speed_from_mean_rho(self.moment_rho(1.0)?))
    }

    /// Law of ω₀ reweighted by ρ₀^κ (exponential tilt used for rare-event sampling).
    pub fn tilted(&self, kappa: f64) -> Result<EnvironmentLaw> {
        match &self.family {
            Family::Beta { alpha, beta } => EnvironmentLaw::beta(alpha - kappa, beta + kappa),
            Family::Discrete { atoms } => {
                let w: Vec<(f64, f64)> = atoms
                    .iter()
                    .map(|&(o, p)| (o, p * ((1.0 - o) / o).powf(kappa)))
                    .collect();
                let z: f64 = w.iter().map(|a| a.1).sum();
                EnvironmentLaw::discrete(w.into_iter().map(|(o, p)| (o, p / z)).collect())
            }
            Family::Custom(_) => Err(Error::MethodUnavailable(
                "exponential tilt needs a Beta or Discrete law".into(),
            )),
        }
    }

    /// Non-lattice check for Discrete laws: false when every pair of nonzero
    /// log ρ values has a rational ratio with denominator ≤ 64.
    pub fn is_non_lattice(&self) -> Option<bool> {
        let Family::Discrete { atoms } = &self.family else {
            return None;
        };
        let mut logs: Vec<f64> = atoms
            .iter()
            .map(|a| ((1.0 - a.0) / a.0).ln())
            .filter(|l| l.abs() > 1e-12)
            .collect();
        logs.sort_by(f64::total_cmp);
        logs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()));
        if logs.len() < 2 {
            return Some(false);
        }
        let base = logs[0];
        let commensurate = logs[1..].iter().all(|&l| {
            let r = l / base;
            (1..=64).any(|q| {
                let x = r * q as f64;
                (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
            })
        });
        Some(!commensurate)
    }
}

/// density·ρ^s·(ln ρ)^k evaluated in log space so the endpoint decay of the
/// density is not swamped by an overflowing power of ρ.
fn custom_term(density: f64, w: f64, wc: f64, s: f64, with_log: bool) -> f64 {
    if density <= 0.0 {
        return 0.0;
    }
    let lr = wc.ln() - w.ln();
    let v = (density.ln() + s * lr).exp();
    if with_log {
        v * lr
    } else {
        v
    }
}

/// v = (1−m)/(1+m) for m = E[ρ₀].
pub fn speed_from_mean_rho(mean_rho: f64) -> f64 {
    (1.0 - mean_rho) / (1.0 + mean_rho)
}

/// Solve E[ρ₀^κ] = 1 on the convex map s ↦ log E[ρ₀^s].
pub fn solve_kappa(law: &EnvironmentLaw, tol: f64) -> Result<f64> {
    let drift = law.mean_log_rho()?;
    if !(drift < 0.0) {
        return Err(Error::NoRoot(format!("E[log rho] = {drift} is not negative")));
    }
    let mut lo = 1e-6;
    let mut hi: f64 = match law.family() {
        Family::Beta { alpha, .. } => 2.0f64.min(alpha - 1e-6),
        _ => 2.0,
    };
    if hi <= lo {
        return Err(Error::NoRoot("empty bracket".into()));
    }
    let f = |s: f64| law.log_moment_rho(s);
    if f(lo)? >= 0.0 {
        return Err(Error::NoRoot("log E[rho^s] not negative near 0".into()));
    }
    let fhi = f(hi)?;
    if fhi < 0.0 {
        return Err(Error::NoRoot(format!("E[rho^s] < 1 on the whole bracket up to s = {hi}")));
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let k = 0.5 * (lo + hi);
    let resid = (law.moment_rho(k)? - 1.0).abs();
    if resid > tol {
        return Err(Error::Numerical(format!("|E[rho^kappa]-1| = {resid} above tolerance {tol}")));
    }
    Ok(k)
}

/// Validated environment law with cached derived scalars.
#[derive(Clone, Debug)]
pub struct EnvironmentModel {
    law: EnvironmentLaw,
    kappa: f64,
    mean_rho: f64,
    rho_log_moment: f64,
    mean_log_rho: f64,
}

impl EnvironmentModel {
    pub fn new(law: EnvironmentLaw) -> Result<Self> {
        if law.is_non_lattice() == Some(false) {
            return Err(Error::Lattice);
        }
        let kappa = solve_kappa(&law, 1e-8)?;
        if !(kappa > 0.0 && kappa < 2.0) {
            return Err(Error::InvalidModel(format!("kappa = {kappa} outside (0,2)")));
        }
        let mean_log_rho = law.mean_log_rho()?;
        let mean_rho = law.moment_rho(1.0).unwrap_or(f64::INFINITY);
        let rho_log_moment = law.rho_log_moment(kappa)?;
        let model = EnvironmentModel {
            law,
            kappa,
            mean_rho,
            rho_log_moment,
            mean_log_rho,
        };
        if let Family::Custom(_) = model.law.family() {
            model.custom_self_test()?;
        }
        Ok(model)
    }

    /// Construct and check an explicit κ against the solved one.
    pub fn with_kappa_override(law: EnvironmentLaw, kappa: f64) -> Result<Self> {
        let m = Self::new(law)?;
        if (m.kappa - kappa).abs() > 1e-6 {
            return Err(Error::KappaOverride {
                given: kappa,
                solved: m.kappa,
            });
        }
        Ok(m)
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(EnvironmentLaw::beta(alpha, beta)?)
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn mean_rho(&self) -> f64 {
        self.mean_rho
    }
    /// E[ρ₀^κ log ρ₀].
    pub fn rho_log_moment_at_kappa(&self) -> f64 {
        self.rho_log_moment
    }
    pub fn mean_log_rho(&self) -> f64 {
        self.mean_log_rho
    }

    pub fn moment_rho(&self, s: f64) -> Result<f64> {
        self.law.moment_rho(s)
    }
    pub fn rho_log_moment(&self, s: f64) -> Result<f64> {
        self.law.rho_log_moment(s)
    }

    /// Speed v; exactly 0 at κ = 1.
    pub fn speed(&self) -> f64 {
        if (self.kappa - 1.0).abs() <= 1e-9 {
            0.0
        } else {
            speed_from_mean_rho(self.mean_rho)
        }
    }

    #[inline]
    pub fn sample_omega<R: RngCore>(&self, rng: &mut R) -> f64 {
        self.law.sample_omega(rng)
    }

    pub fn sample_omega_block(&self, length: usize, stream: StreamId) -> Result<Vec<f64>> {
        self.law.sample_omega_block(length, stream)
    }

    /// Monte Carlo vs moment-oracle check at 5σ.
    fn custom_self_test(&self) -> Result<()> {
        const N: usize = 20_000;
        let mut rng = StreamId::root(0xC057_0A11).rng();
        let s = 0.5 * self.kappa;
        let (mut a, mut a2, mut b, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..N {
            let w = self.law.sample_omega(&mut rng);
            let r = ((1.0 - w) / w).powf(s);
            a += r;
            a2 += r * r;
            b += w;
            b2 += w * w;
        }
        let n = N as f64;
        let check = |sum: f64, sum2: f64, oracle: f64, what: &str| -> Result<()> {
            let m = sum / n;
            let se = ((sum2 / n - m * m).max(0.0) / n).sqrt();
            if (m - oracle).abs() > 5.0 * se + 1e-9 {
                return Err(Error::CustomMismatch(format!(
                    "{what}: sampler mean {m}, oracle {oracle}, stderr {se}"
                )));
            }
            Ok(())
        };
        check(a, a2, self.law.moment_rho(s)?, "E[rho^(kappa/2)]")?;
        check(b, b2, self.law.mean_omega()?, "E[omega]")
    }
}

/// Serializable model specification (config files and CLI).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Beta {
        alpha: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
    Discrete {
        atoms: Vec<(f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<EnvironmentModel> {
        let (law, kappa) = match self {
            ModelSpec::Beta { alpha, beta, kappa } => (EnvironmentLaw::beta(*alpha, *beta)?, *kappa),
            ModelSpec::Discrete { atoms, kappa } => (EnvironmentLaw::discrete(atoms.clone())?, *kappa),
        };
        match kappa {
            Some(k) => EnvironmentModel::with_kappa_override(law, k),
            None => EnvironmentModel::new(law),
        }
    }

    /// Parse "beta:3,1.5" or "discrete:0.7@0.5,0.4@0.5".
    pub fn parse_short(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse model '{s}'"));
        let (fam, rest) = s.split_once(':').ok_or_else(bad)?;
        match fam.trim().to_ascii_lowercase().as_str() {
            "beta" => {
                let v: Vec<f64> = rest
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                if v.len() != 2 {
                    return Err(bad());
                }
                Ok(ModelSpec::Beta {
                    alpha: v[0],
                    beta: v[1],
                    kappa: None,
                })
            }
            "discrete" => {
                let mut atoms = Vec::new();
                for part in rest.split(',') {
                    let (w, p) = part.split_once('@').ok_or_else(bad)?;
                    atoms.push((
                        w.trim().parse().map_err(|_| bad())?,
                        p.trim().parse().map_err(|_| bad())?,
                    ));
                }
                Ok(ModelSpec::Discrete { atoms, kappa: None })
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::special::beta_fn;

    fn beta_density(a: f64, b: f64) -> impl Fn(f64, f64) -> f64 {
        let lb = ln_beta(a, b);
        move |w: f64, wc: f64| ((a - 1.0) * w.ln() + (b - 1.0) * wc.ln() - lb).exp()
    }

    #[test]
    fn kappa_for_beta_laws() {
        assert!((EnvironmentModel::beta(2.0, 1.0).unwrap().kappa() - 1.0).abs() < 1e-9);
        assert!((EnvironmentModel::beta(3.0, 1.5).unwrap().kappa() - 1.5).abs() < 1e-9);
        assert!((EnvironmentModel::beta(2.8, 1.2).unwrap().kappa() - 1.6).abs() < 1e-9);
    }

    #[test]
    fn kappa_for_two_atoms_matches_scalar_bisection() {
        let m = EnvironmentModel::new(EnvironmentLaw::discrete(vec![(0.7, 0.5), (0.4, 0.5)]).unwrap()).unwrap();
        // independent oracle: bisection on the explicit two-term function
        let g = |k: f64| 0.5 * (3.0f64 / 7.0).powf(k) + 0.5 * 1.5f64.powf(k) - 1.0;
        let (mut lo, mut hi) = (1.0, 2.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((m.kappa() - lo).abs() < 1e-9);
        assert!(g(m.kappa()).abs() < 1e-8);
    }

    #[test]
    fn moment_examples() {
        let l = EnvironmentLaw::beta(3.0, 1.0).unwrap();
        assert!((l.moment_rho(1.0).unwrap() - 0.5).abs() < 1e-13);
        assert!((l.moment_rho(0.0).unwrap() - 1.0).abs() < 1e-14);
        let m = EnvironmentModel::beta(3.0, 1.5).unwrap();
        assert!((m.moment_rho(m.kappa()).unwrap() - 1.0).abs() < 1e-8);
        // quadrature oracle
        let dens = beta_density(3.0, 1.0);
        let q = integrate_unit_interval(|w, wc| dens(w, wc) * wc / w, 1e-12).unwrap();
        assert!((q.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn rho_log_moment_against_quadrature() {
        // 2∫(1−x)log((1−x)/x)dx for Beta(2,1)
        let q = integrate_unit_interval(|x: f64, c: f64| 2.0 * c * (c / x).ln(), 1e-12).unwrap();
        let l = EnvironmentLaw::beta(2.0, 1.0).unwrap();
        assert!((l.rho_log_moment(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((q.value - 1.0).abs() < 1e-9);
        // Beta(2.8,1.2) at s = 1.6: digamma difference vs quadrature
        let q = integrate_unit_interval(
            |w: f64, wc: f64| {
                let lr = (wc / w).ln();
                (1.8 * w.ln() + 0.2 * wc.ln() - ln_beta(2.8, 1.2) + 1.6 * lr).exp() * lr
            },
            1e-12,
        )
        .unwrap();
        let dg = digamma(2.8) - digamma(1.2);
        let l = EnvironmentLaw::beta(2.8, 1.2).unwrap();
        assert!((q.value - dg).abs() < 1e-8 * dg.abs(), "{} vs {}", q.value, dg);
        assert!((l.rho_log_moment(1.6).unwrap() - dg).abs() < 1e-12);
    }

    #[test]
    fn symmetric_atoms_have_zero_log_moment() {
        let c: f64 = 2.5;
        let w1 = 1.0 / (1.0 + c);
        let w2 = 1.0 / (1.0 + 1.0 / c);
        let l = EnvironmentLaw::discrete(vec![(w1, 0.5), (w2, 0.5)]).unwrap();
        assert!(l.rho_log_moment(0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn corollary_kappa_one_moment_differs_from_digamma() {
        // Reported side by side, never asserted as truth.
        for b in [1.0, 1.5, 3.0] {
            let l = EnvironmentLaw::beta(b + 1.0, b).unwrap();
            let direct = l.rho_log_moment(1.0).unwrap();
            assert!((direct - 1.0 / b).abs() < 1e-12);
            let corollary = beta_fn(b, b) / (2.0 * b);
            assert!((direct - corollary).abs() > 1e-3);
        }
    }

    #[test]
    fn speed_examples() {
        assert_eq!(EnvironmentModel::beta(2.0, 1.0).unwrap().speed(), 0.0);
        let m = EnvironmentModel::beta(3.0, 1.2).unwrap();
        assert!((m.speed() - 0.25).abs() < 1e-13);
        let dens = beta_density(3.0, 1.2);
        let q = integrate_unit_interval(|w, wc| dens(w, wc) * wc / w, 1e-12).unwrap();
        assert!((speed_from_mean_rho(q.value) - 0.25).abs() < 1e-9);
        let det = EnvironmentLaw::discrete(vec![(0.8, 1.0)]).unwrap();
        assert!((det.speed().unwrap() - 0.6).abs() < 1e-14);
    }

    #[test]
    fn sampling_contracts() {
        let l = EnvironmentLaw::beta(2.0, 1.0).unwrap();
        assert!(l.sample_omega_block(0, StreamId::root(1)).is_err());
        let xs = l.sample_omega_block(1_000_000, StreamId::root(1)).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (1.0f64 / 18.0).sqrt(); // Beta(2,1) variance = 1/18
        assert!((mean - 2.0 / 3.0).abs() < 4.0 * sd / n.sqrt());
        assert!(xs.iter().all(|&w| w > 0.0 && w < 1.0));
        let p = EnvironmentLaw::discrete(vec![(0.7, 1.0)]).unwrap();
        assert_eq!(p.sample_omega_block(5, StreamId::root(3)).unwrap(), vec![0.7; 5]);
        let a = l.sample_omega_block(10, StreamId::root(9)).unwrap();
        let b = l.sample_omega_block(10, StreamId::root(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_models() {
        // recurrent
        assert!(matches!(EnvironmentModel::beta(1.0, 1.0), Err(Error::NoRoot(_))));
        // κ ≥ 2
        assert!(EnvironmentModel::beta(5.0, 1.0).is_err());
        // lattice: ρ ∈ {1/4, 2}
        let lat = EnvironmentLaw::discrete(vec![(0.8, 0.5), (1.0 / 3.0, 0.5)]).unwrap();
        assert!(matches!(EnvironmentModel::new(lat), Err(Error::Lattice)));
        let two = EnvironmentLaw::discrete(vec![(0.7, 0.5), (0.4, 0.5)]).unwrap();
        assert_eq!(two.is_non_lattice(), Some(true));
        // override
        let l = EnvironmentLaw::beta(3.0, 1.5).unwrap();
        assert!(EnvironmentModel::with_kappa_override(l.clone(), 1.5 + 1e-7).is_ok());
        assert!(matches!(
            EnvironmentModel::with_kappa_override(l, 1.4),
            Err(Error::KappaOverride { .. })
        ));
    }

    #[derive(Debug)]
    struct BetaCustom {
        a: f64,
        b: f64,
        wrong: bool,
    }
    impl CustomLaw for BetaCustom {
        fn sample_omega(&self, rng: &mut dyn RngCore) -> f64 {
            let d = rand_distr::Beta::new(self.a, self.b).unwrap();
            let w: f64 = d.sample(rng);
            if self.wrong {
                w.sqrt()
            } else {
                w
            }
        }
        fn density(&self, w: f64) -> f64 {
            beta_density(self.a, self.b)(w, 1.0 - w)
        }
    }

    #[test]
    fn custom_models_are_self_tested() {
        let ok = EnvironmentModel::new(EnvironmentLaw::custom(Arc::new(BetaCustom {
            a: 3.0,
            b: 1.5,
            wrong: false,
        })))
        .unwrap();
        assert!((ok.kappa() - 1.5).abs() < 1e-7);
        let bad = EnvironmentModel::new(EnvironmentLaw::custom(Arc::new(BetaCustom {
            a: 3.0,
            b: 1.5,
            wrong: true,
        })));
        assert!(matches!(bad, Err(Error::CustomMismatch(_))));
    }

    #[test]
    fn tilt_of_beta_swaps_parameters() {
        let l = EnvironmentLaw::beta(3.0, 1.5).unwrap();
        let t = l.tilted(1.5).unwrap();
        match t.family() {
            Family::Beta { alpha, beta } => {
                assert!((alpha - 1.5).abs() < 1e-15 && (beta - 3.0).abs() < 1e-15)
            }
            _ => panic!(),
        }
        // tilted mean of log ρ equals E[ρ^κ log ρ]
        let direct = l.rho_log_moment(1.5).unwrap();
        assert!((t.mean_log_rho().unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn model_spec_parsing() {
        let s = ModelSpec::parse_short("beta:3,1.5").unwrap();
        assert!((s.build().unwrap().kappa() - 1.5).abs() < 1e-9);
        let d = ModelSpec::parse_short("discrete:0.7@0.5,0.4@0.5").unwrap();
        assert!(d.build().is_ok());
        assert!(ModelSpec::parse_short("gamma:1").is_err());
    }
}
