//! Exact computations in a fixed finite environment: exit and escape
//! probabilities, hitting-time moments, h-transformed valleys and the moments
//! of failed and successful crossing attempts.

use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::numeric::logsum::{log_add, LogSum};
use crate::numeric::rng::StreamId;
use crate::potential::{log_rho, TRUNCATION_REL_TOL};

const LN2: f64 = std::f64::consts::LN_2;
/// Leftmost (or rightmost) increments used to estimate the drift of a tail.
const TAIL_PROBE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// ω at the left cell is treated as 1.
    ReflectLeft,
    /// The environment continues to −∞; left sums are truncated with a
    /// certified geometric remainder.
    OpenLeft,
}

/// ω on [left, right] with a left boundary rule.
#[derive(Clone, Debug)]
pub struct WindowEnvironment {
    left: i64,
    omegas: Vec<f64>,
    boundary: Boundary,
    /// V(x) − V(left).
    v: Vec<f64>,
}

impl WindowEnvironment {
    pub fn new(left: i64, omegas: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if omegas.len() < 2 {
            return Err(Error::InvalidArgument("window needs at least two sites".into()));
        }
        let skip = usize::from(boundary == Boundary::ReflectLeft);
        if let Some(w) = omegas[skip..].iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return Err(Error::InvalidArgument(format!("omega {w} outside (0,1)")));
        }
        let mut v = vec![0.0; omegas.len()];
        for k in 1..omegas.len() {
            v[k] = v[k - 1] + log_rho(omegas[k]);
        }
        Ok(WindowEnvironment {
            left,
            omegas,
            boundary,
            v,
        })
    }

    pub fn left(&self) -> i64 {
        self.left
    }
    pub fn right(&self) -> i64 {
        self.left + self.omegas.len() as i64 - 1
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    fn idx(&self, x: i64) -> Result<usize> {
        if x < self.left || x > self.right() {
            return Err(Error::OutOfWindow(x));
        }
        Ok((x - self.left) as usize)
    }

    /// ω_x, with the reflecting cell reported as 1.
    pub fn omega(&self, x: i64) -> Result<f64> {
        let i = self.idx(x)?;
        Ok(if i == 0 && self.boundary == Boundary::ReflectLeft {
            1.0
        } else {
            self.omegas[i]
        })
    }

    /// V(x) − V(left).
    pub fn v(&self, x: i64) -> Result<f64> {
        Ok(self.v[self.idx(x)?])
    }

    /// P_x(τ(b) < τ(a)).
    pub fn exit_probability(&self, a: i64, x: i64, b: i64) -> Result<f64> {
        if !(a <= x && x <= b) {
            return Err(Error::InvalidArgument(format!("need a <= x <= b, got {a}, {x}, {b}")));
        }
        let (ia, ix, ib) = (self.idx(a)?, self.idx(x)?, self.idx(b)?);
        if ia == ib {
            return Ok(1.0);
        }
        let mut num = LogSum::new();
        let mut den = LogSum::new();
        for k in ia..ib {
            if k < ix {
                num.add(self.v[k]);
            }
            den.add(self.v[k]);
        }
        Ok((num.value() - den.value()).exp())
    }

    /// P_x(τ(a) = ∞), using a certified right tail of Σ_{k≥a} e^{V(k)}.
    pub fn escape_probability(&self, a: i64, x: i64) -> Result<f64> {
        if x < a {
            return Err(Error::InvalidArgument("need x >= a".into()));
        }
        let (ia, ix) = (self.idx(a)?, self.idx(x)?);
        let n = self.omegas.len();
        let mut num = LogSum::new();
        let mut den = LogSum::new();
        for k in ia..n {
            if k < ix {
                num.add(self.v[k]);
            }
            den.add(self.v[k]);
        }
        let probe = (n - 1).min(TAIL_PROBE);
        let slope = (self.v[n - 1] - self.v[n - 1 - probe]) / probe as f64;
        if !(slope < 0.0) {
            return Err(Error::TruncationUncertified);
        }
        let tail = self.v[n - 1] + log_geometric_ratio(-slope);
        if tail - den.value() > TRUNCATION_REL_TOL.ln() {
            return Err(Error::TruncationUncertified);
        }
        Ok((num.value() - log_add(den.value(), tail)).exp())
    }

    /// log of the estimated Σ_{k<left} e^{−(V(k) − V(left))}, from the mean
    /// rise over the leftmost increments; None without upward drift.
    fn left_tail_log(&self) -> Option<f64> {
        let probe = (self.v.len() - 1).min(TAIL_PROBE);
        let rise = (self.v[0] - self.v[probe]) / probe as f64;
        (rise > 0.0).then(|| log_geometric_ratio(rise))
    }

    fn tail_rise(&self) -> Option<f64> {
        let probe = (self.v.len() - 1).min(TAIL_PROBE);
        let rise = (self.v[0] - self.v[probe]) / probe as f64;
        (rise > 0.0).then_some(rise)
    }

    /// log Σ_{k<b} e^{−(V(k)−V(b))}: truncated at the reflecting cell, or
    /// with a certified geometric remainder in OpenLeft mode.
    pub fn left_sum_log(&self, b: i64) -> Result<f64> {
        let ib = self.idx(b)?;
        let mut acc = LogSum::new();
        for k in 0..ib {
            acc.add(self.v[ib] - self.v[k]);
        }
        match self.boundary {
            Boundary::ReflectLeft => Ok(acc.value()),
            Boundary::OpenLeft => {
                let tail = self.left_tail_log().ok_or(Error::TruncationUncertified)? + self.v[ib] - self.v[0];
                if ib == 0 || tail - acc.value() > TRUNCATION_REL_TOL.ln() {
                    return Err(Error::TruncationUncertified);
                }
                Ok(log_add(acc.value(), tail))
            }
        }
    }

    /// Means m_j and variances s_j of the crossing times j → j+1 for
    /// j in [left, b), from a given start at the left cell.
    fn crossing_moments_from(&self, ib: usize, m_prev: f64, s_prev: f64, rho_left: f64) -> (Vec<f64>, Vec<f64>) {
        let mut m = Vec::with_capacity(ib);
        let mut s = Vec::with_capacity(ib);
        let (mut mp, mut sp) = (m_prev, s_prev);
        for j in 0..ib {
            let (w, r) = if j == 0 {
                (1.0 / (1.0 + rho_left), rho_left)
            } else {
                let w = self.omegas[j];
                (w, (1.0 - w) / w)
            };
            let mj = 1.0 / w + r * mp;
            let sj = r * sp + (1.0 - w) * (mp + mj) * (mp + mj);
            m.push(mj);
            s.push(sj);
            mp = mj;
            sp = sj;
        }
        (m, s)
    }

    /// Crossing moments on [left, b) under the boundary rule.
    /// OpenLeft starts from a stationary constant-drift tail and is certified
    /// by agreement with the reflected start.
    fn crossing_moments(&self, b: i64) -> Result<(Vec<f64>, Vec<f64>, bool)> {
        let ib = self.idx(b)?;
        let reflected = self.crossing_moments_from(ib, 0.0, 0.0, 0.0);
        match self.boundary {
            Boundary::ReflectLeft => Ok((reflected.0, reflected.1, true)),
            Boundary::OpenLeft => {
                let Some(rise) = self.tail_rise() else {
                    return Ok((reflected.0, reflected.1, false));
                };
                let r = (-rise).exp();
                let w_r = 1.0 / (1.0 + r);
                let m_inf = (1.0 + r) / (1.0 - r);
                let s_inf = 4.0 * (1.0 - w_r) * m_inf * m_inf / (1.0 - r);
                let w0 = self.omegas[0];
                let open = self.crossing_moments_from(ib, m_inf, s_inf, (1.0 - w0) / w0);
                Ok((open.0, open.1, false))
            }
        }
    }

    /// Certified open-left value of a functional of the crossing moments.
    fn open_left<F: Fn(&[f64], &[f64]) -> f64>(&self, b: i64, f: F) -> Result<f64> {
        let ib = self.idx(b)?;
        let (m, s, exact) = self.crossing_moments(b)?;
        let value = f(&m, &s);
        if exact {
            return Ok(value);
        }
        if self.tail_rise().is_none() {
            return Err(Error::TruncationUncertified);
        }
        let (mr, sr) = self.crossing_moments_from(ib, 0.0, 0.0, 0.0);
        let reflected = f(&mr, &sr);
        if (value - reflected).abs() > TRUNCATION_REL_TOL * value.abs() {
            return Err(Error::TruncationUncertified);
        }
        Ok(value)
    }

    /// E_a[τ(b)].
    pub fn expected_hitting_time(&self, a: i64, b: i64) -> Result<f64> {
        if a >= b {
            return Err(Error::InvalidArgument("need a < b".into()));
        }
        let ia = self.idx(a)?;
        self.open_left(b, |m, _| m[ia..].iter().sum())
    }

    /// Var_a(τ(b)).
    pub fn hitting_time_variance(&self, a: i64, b: i64) -> Result<f64> {
        if a >= b {
            return Err(Error::InvalidArgument("need a < b".into()));
        }
        let ia = self.idx(a)?;
        self.open_left(b, |_, s| s[ia..].iter().sum())
    }

    /// Mean and second moment of a left excursion from b (step to b−1, then
    /// return to b).
    pub fn left_excursion_moments(&self, b: i64) -> Result<(f64, f64)> {
        let ib = self.idx(b)?;
        if ib == 0 {
            return Err(Error::OutOfWindow(b - 1));
        }
        let mean = self.open_left(b, |m, _| 1.0 + m[ib - 1])?;
        let second = self.open_left(b, |m, s| {
            let x = m[ib - 1];
            1.0 + 2.0 * x + s[ib - 1] + x * x
        })?;
        Ok((mean, second))
    }

    /// R⁻ for a valley with bottom b, on the potential re-anchored at b−1:
    /// Σ_{i<b}(1+2Σ_{i<k<b} e^{V(k)−V(i)})(e^{V(b−1)−V(i)}+2Σ_{k<i} e^{V(b−1)−V(k)}).
    pub fn r_minus(&self, b: i64) -> Result<f64> {
        let ib = self.idx(b)?;
        if ib == 0 {
            return Err(Error::OutOfWindow(b - 1));
        }
        let anchor = self.v[ib - 1];
        let tail = match self.boundary {
            Boundary::ReflectLeft => f64::NEG_INFINITY,
            Boundary::OpenLeft => self.left_tail_log().ok_or(Error::TruncationUncertified)? - self.v[0],
        };
        // suffix: log Σ_{i<k<b} e^{V(k)}, built right to left
        let mut suffix = vec![f64::NEG_INFINITY; ib];
        for i in (0..ib.saturating_sub(1)).rev() {
            suffix[i] = log_add(suffix[i + 1], self.v[i + 1]);
        }
        let mut total = LogSum::new();
        // prefix: log Σ_{k<i} e^{−V(k)}, including the open tail
        let mut prefix = tail;
        let mut first_term = f64::NEG_INFINITY;
        for i in 0..ib {
            let p = log_add(0.0, LN2 - self.v[i] + suffix[i]);
            let q = anchor + log_add(-self.v[i], LN2 + prefix);
            if i == 0 {
                first_term = p + q;
            }
            total.add(p + q);
            prefix = log_add(prefix, -self.v[i]);
        }
        let mut value = total.value();
        if self.boundary == Boundary::OpenLeft {
            let rise = self.tail_rise().ok_or(Error::TruncationUncertified)?;
            let rest = first_term + log_geometric_ratio(rise);
            if rest - value > TRUNCATION_REL_TOL.ln() {
                return Err(Error::TruncationUncertified);
            }
            value = log_add(value, rest);
        }
        Ok(value.exp())
    }
}

/// log(r/(1−r)) for r = e^{−d}, d > 0.
fn log_geometric_ratio(d: f64) -> f64 {
    -d - (-(-d).exp_m1()).ln()
}

/// h-transformed environments of a valley [b, d] with e₁ = d − b ≥ 2.
/// Arrays are indexed by the offset x = site − b.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HTransformPair {
    pub bottom: i64,
    pub e1: usize,
    /// ω at the bottom (original law; the first step of every attempt).
    pub omega0: f64,
    /// V(x) − V(b) for x = 0..=e₁.
    pub v: Vec<f64>,
    /// log h(x), x = 0..=e₁ (h(0) = 1, h(e₁) = 0).
    pub log_h: Vec<f64>,
    /// log g(x), x = 0..=e₁.
    pub log_g: Vec<f64>,
    /// ω̂_x for 0 < x < e₁ (index 0 holds ω₀).
    pub omega_hat: Vec<f64>,
    /// 1 − ω̂_x from the harmonic ratio (kept separately for accuracy).
    pub omega_hat_c: Vec<f64>,
    pub omega_bar: Vec<f64>,
    pub omega_bar_c: Vec<f64>,
    /// V̂(x), x = 0..e₁ (V̂(e₁−1) = +∞).
    pub v_hat: Vec<f64>,
    /// W(y) = V̄(y) − V̄(1), y = 1..e₁−1 (index 0 unused).
    pub w_bar: Vec<f64>,
    /// log Σ_{0≤k<e₁} e^{V(k)} = log(M₂e^H).
    pub log_m2_eh: f64,
}

impl HTransformPair {
    pub fn h(&self, x: usize) -> f64 {
        self.log_h[x].exp()
    }
    pub fn g(&self, x: usize) -> f64 {
        self.log_g[x].exp()
    }
    /// 1 − p = ω₀/(M₂e^H).
    pub fn one_minus_p(&self) -> f64 {
        (self.omega0.ln() - self.log_m2_eh).exp()
    }
}

/// Build h and g from prefix/suffix sums of e^{V} and the transformed ω's.
pub fn build_h_transforms(env: &WindowEnvironment, b: i64, d: i64) -> Result<HTransformPair> {
    let e1 = d - b;
    if e1 < 2 {
        return Err(Error::DegenerateValley(e1));
    }
    let e1 = e1 as usize;
    let ib = env.idx(b)?;
    env.idx(d)?;
    let v: Vec<f64> = (0..=e1).map(|x| env.v[ib + x] - env.v[ib]).collect();
    let omega = |x: usize| env.omegas[ib + x];
    // suffix[x] = log Σ_{x≤k<e₁} e^{V(k)}, prefix[x] = log Σ_{0≤k<x} e^{V(k)}
    let mut suffix = vec![f64::NEG_INFINITY; e1 + 1];
    for x in (0..e1).rev() {
        suffix[x] = log_add(suffix[x + 1], v[x]);
    }
    let mut prefix = vec![f64::NEG_INFINITY; e1 + 1];
    for x in 1..=e1 {
        prefix[x] = log_add(prefix[x - 1], v[x - 1]);
    }
    let total = suffix[0];
    let log_h: Vec<f64> = suffix.iter().map(|s| s - total).collect();
    let log_g: Vec<f64> = prefix.iter().map(|s| s - total).collect();
    let w0 = env.omega(b)?;
    let mut omega_hat = vec![w0; e1];
    let mut omega_hat_c = vec![1.0 - w0; e1];
    let mut omega_bar = vec![w0; e1];
    let mut omega_bar_c = vec![1.0 - w0; e1];
    for x in 1..e1 {
        let (w, wc) = (omega(x), 1.0 - omega(x));
        omega_hat[x] = (w.ln() + log_h[x + 1] - log_h[x]).exp();
        omega_hat_c[x] = (wc.ln() + log_h[x - 1] - log_h[x]).exp();
        omega_bar[x] = (w.ln() + log_g[x + 1] - log_g[x]).exp();
        omega_bar_c[x] = (wc.ln() + log_g[x - 1] - log_g[x]).exp();
    }
    let v_hat: Vec<f64> = (0..e1)
        .map(|y| if y == 0 { 0.0 } else { v[y] + log_h[1] - log_h[y] - log_h[y + 1] })
        .collect();
    let mut w_bar = vec![0.0; e1];
    for y in 1..e1 {
        w_bar[y] = v[y] - v[1] + log_g[1] + log_g[2] - log_g[y] - log_g[y + 1];
    }
    let pair = HTransformPair {
        bottom: b,
        e1,
        omega0: w0,
        v,
        log_h,
        log_g,
        omega_hat,
        omega_hat_c,
        omega_bar,
        omega_bar_c,
        v_hat,
        w_bar,
        log_m2_eh: total,
    };
    check_transform(&pair)?;
    Ok(pair)
}

/// V̂ rises at least as fast as V, V̄ at most as fast, and the transformed
/// step probabilities sum to one.
fn check_transform(p: &HTransformPair) -> Result<()> {
    let tol = 1e-9;
    for y in 1..p.e1 {
        let s = p.omega_hat[y] + p.omega_hat_c[y];
        let t = p.omega_bar[y] + p.omega_bar_c[y];
        if (s - 1.0).abs() > 1e-12 || (t - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!("h-transform probabilities at {y}: {s}, {t}")));
        }
    }
    for y in 1..p.e1.saturating_sub(1) {
        // V̂ − V nondecreasing
        let a = p.v_hat[y] - p.v[y];
        let b = p.v_hat[y + 1] - p.v[y + 1];
        if b.is_finite() && b < a - tol * (1.0 + a.abs()) {
            return Err(Error::Numerical(format!("V-hat comparison fails at {y}")));
        }
    }
    for y in 1..p.e1.saturating_sub(1) {
        // V̄ − V nonincreasing (W differs from V̄ by a constant)
        let a = p.w_bar[y] - p.v[y];
        let b = p.w_bar[y + 1] - p.v[y + 1];
        if b > a + tol * (1.0 + a.abs()) {
            return Err(Error::Numerical(format!("V-bar comparison fails at {y}")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureMoments {
    /// 2ω₀M̂₁: mean of an attempt whose first step uses ω₀.
    pub attempt_mean: f64,
    /// 4ω₀R⁺ + 4(1−ω₀)R⁻ for the same attempt.
    pub attempt_second: f64,
    pub one_minus_p: f64,
    /// E_ω[F] for a genuine failure (first step conditioned on failing).
    pub mean: f64,
    /// E_ω[F²] for a genuine failure.
    pub second: f64,
    pub log_m1_hat: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

/// R⁺ = Σ_{1≤i<e₁}(1+2Σ_{0≤j≤i−2} e^{V̂(j)−V̂(i−1)})(e^{−V̂(i−1)}+2Σ_{i<j<e₁} e^{−V̂(j−1)}).
pub fn r_plus(pair: &HTransformPair) -> f64 {
    let e1 = pair.e1;
    let vh = &pair.v_hat;
    // pre[a] = log Σ_{j<a} e^{V̂(j)}, post[a] = log Σ_{a<j'≤e₁−2} e^{−V̂(j')}
    let mut pre = vec![f64::NEG_INFINITY; e1];
    for a in 1..e1 {
        pre[a] = log_add(pre[a - 1], vh[a - 1]);
    }
    let mut post = vec![f64::NEG_INFINITY; e1];
    for a in (0..e1.saturating_sub(1)).rev() {
        post[a] = if a < e1 - 2 { log_add(post[a + 1], -vh[a + 1]) } else { f64::NEG_INFINITY };
    }
    let mut acc = LogSum::new();
    for a in 0..e1 - 1 {
        let f1 = log_add(0.0, LN2 + pre[a] - vh[a]);
        let f2 = log_add(-vh[a], LN2 + post[a]);
        acc.add(f1 + f2);
    }
    acc.value().exp()
}

/// Failure-attempt moments of the valley described by `pair`.
pub fn failure_moments(env: &WindowEnvironment, pair: &HTransformPair) -> Result<FailureMoments> {
    let b = pair.bottom;
    let w0 = pair.omega0;
    let left = env.left_sum_log(b)?;
    let mut inner = LogSum::new();
    for y in 0..pair.e1 {
        inner.add(-pair.v_hat[y]);
    }
    let inner = inner.value();
    let log_m1_hat = log_add(left, inner);
    let attempt_mean = 2.0 * w0 * log_m1_hat.exp();
    let rp = r_plus(pair);
    let rm = env.r_minus(b)?;
    let attempt_second = 4.0 * w0 * rp + 4.0 * (1.0 - w0) * rm;
    let q = pair.one_minus_p();
    let p = 1.0 - q;
    let right_mean = 2.0 * inner.exp();
    let mean = (attempt_mean - q * right_mean) / p;
    let second = (attempt_second - q * 4.0 * rp) / p;
    Ok(FailureMoments {
        attempt_mean,
        attempt_second,
        one_minus_p: q,
        mean,
        second,
        log_m1_hat,
        r_plus: rp,
        r_minus: rm,
    })
}

/// 2(1 + Σ_{1≤i≤j<e₁} e^{W(j)−W(i)}): an upper bound on E_ω[G], not its value.
pub fn success_mean_bound(pair: &HTransformPair) -> f64 {
    let mut acc = LogSum::new();
    acc.add(0.0);
    let mut pre = f64::NEG_INFINITY;
    for j in 1..pair.e1 {
        pre = log_add(pre, -pair.w_bar[j]);
        acc.add(pair.w_bar[j] + pre);
    }
    2.0 * acc.value().exp()
}

/// E_ω[G] = 1 + Σ_{1≤j<e₁}(1 + 2Σ_{1≤i<j} e^{W(j)−W(i)}).
pub fn success_mean_exact(pair: &HTransformPair) -> f64 {
    let mut acc = LogSum::new();
    acc.add(0.0);
    let mut pre = f64::NEG_INFINITY;
    for j in 1..pair.e1 {
        acc.add(log_add(0.0, LN2 + pair.w_bar[j] + pre));
        pre = log_add(pre, -pair.w_bar[j]);
    }
    acc.value().exp()
}

/// Linear-system ground truth for the sum formulas above.
pub mod oracle {
    use super::*;

    /// Solve a tridiagonal system lower[i]x[i−1] + diag[i]x[i] + upper[i]x[i+1] = rhs[i].
    pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let den = diag[i] - lower[i] * c[i - 1];
            c[i] = upper[i] / den;
            d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }

    /// E_x[τ(b)] and E_x[τ(b)²] for x in [L, b), reflecting at L.
    pub fn hitting_moments(omegas: &[f64], b_index: usize) -> (Vec<f64>, Vec<f64>) {
        let n = b_index;
        let mut lower = vec![0.0; n];
        let diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for x in 0..n {
            let w = if x == 0 { 1.0 } else { omegas[x] };
            if x > 0 {
                lower[x] = -(1.0 - w);
            }
            if x + 1 < n {
                upper[x] = -w;
            }
        }
        let t = thomas(&lower, &diag, &upper, &vec![1.0; n]);
        let rhs: Vec<f64> = t.iter().map(|t| 2.0 * t - 1.0).collect();
        let s = thomas(&lower, &diag, &upper, &rhs);
        (t, s)
    }

    /// P_x(τ(b) < τ(a)) for x in [a, b] on sites a..=b.
    pub fn exit_probabilities(omegas: &[f64]) -> Vec<f64> {
        let n = omegas.len();
        if n <= 2 {
            return (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        }
        let m = n - 2;
        let mut lower = vec![0.0; m];
        let diag = vec![1.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let w = omegas[i + 1];
            if i > 0 {
                lower[i] = -(1.0 - w);
            }
            if i + 1 < m {
                upper[i] = -w;
            } else {
                rhs[i] = w;
            }
        }
        let inner = thomas(&lower, &diag, &upper, &rhs);
        let mut out = vec![0.0];
        out.extend(inner);
        out.push(1.0);
        out
    }

    #[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
    pub struct GateReport {
        pub windows: usize,
        pub max_rel_err_mean: f64,
        pub max_rel_err_variance: f64,
        pub max_abs_err_exit: f64,
        pub max_rel_err_exit: f64,
    }

    /// Compare the recursions with the linear systems on random reflected
    /// windows of length ≤ max_len drawn from `law`.
    pub fn gate(law: &EnvironmentLaw, windows: usize, max_len: usize, stream: StreamId) -> Result<GateReport> {
        use rand::Rng;
        let mut rng = stream.rng();
        let mut rep = GateReport {
            windows,
            ..Default::default()
        };
        for _ in 0..windows {
            let len = rng.random_range(2..=max_len.max(2));
            let omegas: Vec<f64> = (0..len).map(|_| law.sample_omega(&mut rng)).collect();
            let env = WindowEnvironment::new(0, omegas.clone(), Boundary::ReflectLeft)?;
            let b = len - 1;
            let (t, s) = hitting_moments(&omegas, b);
            let a = rng.random_range(0..b);
            let mean = env.expected_hitting_time(a as i64, b as i64)?;
            let var = env.hitting_time_variance(a as i64, b as i64)?;
            let var_oracle = s[a] - t[a] * t[a];
            rep.max_rel_err_mean = rep.max_rel_err_mean.max((mean - t[a]).abs() / t[a]);
            let scale = var_oracle.abs().max(f64::MIN_POSITIVE);
            // the oracle variance is a difference of two large numbers; its
            // own rounding error is included in the denominator
            let oracle_noise = 1e-15 * len as f64 * s[a];
            rep.max_rel_err_variance = rep
                .max_rel_err_variance
                .max(((var - var_oracle).abs() - oracle_noise).max(0.0) / scale);
            let probs = exit_probabilities(&omegas);
            let x = rng.random_range(0..=b);
            let p = env.exit_probability(0, x as i64, b as i64)?;
            rep.max_abs_err_exit = rep.max_abs_err_exit.max((p - probs[x]).abs());
            if probs[x] > 0.0 {
                rep.max_rel_err_exit = rep.max_rel_err_exit.max((p - probs[x]).abs() / probs[x]);
            }
        }
        Ok(rep)
    }
}
