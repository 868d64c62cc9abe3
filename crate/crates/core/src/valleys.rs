//! Deep valleys at scale n: critical height, width, decomposition and the
//! non-overlap event.

use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentModel;
use crate::error::{Error, Result};
use crate::numeric::rng::StreamId;
use crate::potential::{estimate_mean_drop, ExcursionRecord};

/// h_n = max(0, (1/κ) log n − log log n).
pub fn critical_height(n: u64, kappa: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::TooSmall(n));
    }
    let ln = (n as f64).ln();
    Ok((ln / kappa - ln.ln()).max(0.0))
}

/// D_n = ⌈(1+γ)/(Aκ) · log n⌉.
pub fn valley_width(n: u64, kappa: f64, gamma: f64, a: f64) -> Result<u64> {
    if !(a > 0.0 && gamma > 0.0 && kappa > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("valley_width needs n ≥ 1 and positive γ, A, κ".into()));
    }
    let x = (1.0 + gamma) / (a * kappa) * (n as f64).ln();
    // guard against 4.000000000001 from rounding in the product
    let r = x.round();
    Ok(if (x - r).abs() <= 1e-12 * r.max(1.0) { r } else { x.ceil() } as u64)
}

/// A = E[−V(e₁)] estimated from `n` excursions.
pub fn estimate_a(model: &EnvironmentModel, n: usize, stream: StreamId) -> f64 {
    estimate_mean_drop(model, n, stream)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValleyParams {
    pub gamma: f64,
    pub a: f64,
    /// Overrides for h_n and D_n; only positivity is checked.
    pub h_n: Option<f64>,
    pub d_n: Option<u64>,
}

impl ValleyParams {
    pub fn new(gamma: f64, a: f64) -> Self {
        ValleyParams {
            gamma,
            a,
            h_n: None,
            d_n: None,
        }
    }

    /// (h_n, D_n) honoring overrides.
    pub fn resolve(&self, n: u64, kappa: f64) -> Result<(f64, u64)> {
        let h = match self.h_n {
            Some(h) if h > 0.0 => h,
            Some(h) => return Err(Error::InvalidArgument(format!("h_n override {h} must be positive"))),
            None => critical_height(n, kappa)?,
        };
        let d = match self.d_n {
            Some(d) if d > 0 => d,
            Some(_) => return Err(Error::InvalidArgument("D_n override must be positive".into())),
            None => valley_width(n, kappa, self.gamma, self.a)?,
        };
        Ok((h, d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Valley {
    /// Excursion index σ(i).
    pub sigma: u64,
    /// Ladder index σ(i) − D_n of the left end (may be negative).
    pub a_index: i64,
    /// Site a_i when the epoch lies inside the supplied records.
    pub a: Option<i64>,
    pub b: i64,
    pub d: i64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValleyDecomposition {
    pub n: u64,
    pub h_n: f64,
    pub d_n_width: u64,
    /// K_n / n.
    pub q_n_hat: f64,
    pub valleys: Vec<Valley>,
    pub k_n: u64,
    pub no_event: bool,
}

/// Streaming K_n and NO(n) from excursion heights in index order.
#[derive(Clone, Copy, Debug)]
pub struct NoOverlapTracker {
    h_n: f64,
    d_n: i64,
    next_index: i64,
    last_sigma: Option<i64>,
    k: u64,
    ok: bool,
}

impl NoOverlapTracker {
    pub fn new(h_n: f64, d_n: u64) -> Self {
        NoOverlapTracker {
            h_n,
            d_n: d_n as i64,
            next_index: 0,
            last_sigma: None,
            k: 0,
            ok: true,
        }
    }

    /// Feed H_j for the next index j; returns whether it is deep.
    #[inline]
    pub fn push(&mut self, height: f64) -> bool {
        let j = self.next_index;
        self.next_index += 1;
        if height < self.h_n {
            return false;
        }
        let a = j - self.d_n;
        self.ok &= match self.last_sigma {
            None => a > 0,
            Some(prev) => prev + 1 < a,
        };
        self.last_sigma = Some(j);
        self.k += 1;
        true
    }

    pub fn k_n(&self) -> u64 {
        self.k
    }
    pub fn no_event(&self) -> bool {
        self.ok
    }
}

/// Deep valleys among excursions 0..n, where `records[first_index]` is the
/// excursion starting at e₀ = 0 and earlier records carry negative indices.
pub fn decompose(
    records: &[ExcursionRecord],
    first_index: usize,
    n: u64,
    params: &ValleyParams,
    kappa: f64,
) -> Result<ValleyDecomposition> {
    let available = records.len().saturating_sub(first_index) as u64;
    if available < n {
        return Err(Error::InsufficientExcursions { needed: n, available });
    }
    let (h_n, d_n) = params.resolve(n, kappa)?;
    let mut tracker = NoOverlapTracker::new(h_n, d_n);
    let mut valleys = Vec::new();
    for j in 0..n as usize {
        let r = &records[first_index + j];
        if tracker.push(r.height) {
            let a_index = j as i64 - d_n as i64;
            let pos = first_index as i64 + a_index;
            valleys.push(Valley {
                sigma: j as u64,
                a_index,
                a: (pos >= 0).then(|| records[pos as usize].start),
                b: r.start,
                d: r.end,
                height: r.height,
            });
        }
    }
    Ok(ValleyDecomposition {
        n,
        h_n,
        d_n_width: d_n,
        q_n_hat: tracker.k_n() as f64 / n as f64,
        k_n: tracker.k_n(),
        no_event: tracker.no_event(),
        valleys,
    })
}

impl ValleyDecomposition {
    /// Pairwise disjointness of [a_i, d_i] as ladder-index intervals.
    pub fn valleys_disjoint(&self) -> bool {
        self.valleys
            .windows(2)
            .all(|w| (w[0].sigma as i64 + 1) < w[1].a_index)
    }
}
