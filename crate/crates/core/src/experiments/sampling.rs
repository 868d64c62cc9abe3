//! Per-replicate samplers shared by the runners. Every sampler owns its
//! streams: the environment draws from `stream.child(0)` and the walk from
//! `stream.child(1)`, so a replicate is a pure function of its stream.

use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentLaw;
use crate::error::Result;
use crate::numeric::rng::StreamId;
use crate::potential::{log_rho, sample_forward_excursion};
use crate::quenched::{build_h_transforms, Boundary, WindowEnvironment};
use crate::valleys::NoOverlapTracker;
use crate::walker::{simulate_hitting_time, simulate_hitting_time_fast, FastValley, LazyEnvironment};

/// Law of the environment left of 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// P: i.i.d. on all of ℤ.
    Iid,
    /// P^{≥0}: left half conditioned on V ≥ 0.
    Conditioned,
}

pub fn lazy_env(law: &EnvironmentLaw, mode: EnvMode, stream: StreamId) -> LazyEnvironment {
    match mode {
        EnvMode::Iid => LazyEnvironment::iid(law, stream),
        EnvMode::Conditioned => LazyEnvironment::conditioned(law, stream),
    }
}

/// One forward excursion of the potential: sites [start, end], height H.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub height: f64,
}

/// Complete ladder excursions of `v` (V on 0..=len, V(0) = 0), left to right.
pub fn forward_spans(v: &[f64]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut height = 0.0f64;
    for (x, &y) in v.iter().enumerate().skip(1) {
        let rel = y - v[start];
        if rel <= 0.0 {
            out.push(Span { start, end: x, height });
            start = x;
            height = 0.0;
        } else {
            height = height.max(rel);
        }
    }
    out
}

/// V on 0..=hi, with V(0) = 0.
pub fn potential_to(env: &mut LazyEnvironment, hi: i64) -> Result<Vec<f64>> {
    env.ensure(0, hi)?;
    let mut v = Vec::with_capacity(hi as usize + 1);
    v.push(0.0);
    for x in 1..=hi {
        let last = v[v.len() - 1];
        v.push(last + log_rho(env.omega(x)?));
    }
    Ok(v)
}

/// Decomposition sampler for the excursion [b, d] of `env`.
pub fn fast_valley(env: &mut LazyEnvironment, b: i64, d: i64) -> Result<FastValley> {
    if d - b == 1 {
        return Ok(FastValley::unit(b, env.omega(b)?));
    }
    let w = WindowEnvironment::new(b, env.omegas(b, d)?, Boundary::OpenLeft)?;
    Ok(FastValley::new(&build_h_transforms(&w, b, d)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSample {
    pub tau: u64,
    pub truncated: bool,
    /// Valleys crossed with the decomposition sampler.
    pub fast_valleys: u64,
}

/// τ(n) from 0. With `fast`, every complete excursion inside [0, n] of height
/// at least `min_height` is crossed by the decomposition sampler.
pub fn sample_tau_n(
    law: &EnvironmentLaw,
    mode: EnvMode,
    n: u64,
    fast: bool,
    min_height: f64,
    budget: u64,
    stream: StreamId,
) -> Result<TauSample> {
    let mut env = lazy_env(law, mode, stream.child(0));
    let mut rng = stream.child(1).rng();
    let n = n as i64;
    let mut valleys = Vec::new();
    if fast {
        let v = potential_to(&mut env, n)?;
        for s in forward_spans(&v).into_iter().filter(|s| s.height >= min_height) {
            valleys.push(fast_valley(&mut env, s.start as i64, s.end as i64)?);
        }
    }
    let out = if valleys.is_empty() {
        simulate_hitting_time(&mut env, 0, n, budget, &mut rng)?
    } else {
        simulate_hitting_time_fast(&mut env, 0, n, &valleys, budget, &mut rng)?
    };
    Ok(TauSample {
        tau: out.tau,
        truncated: out.truncated,
        fast_valleys: valleys.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationSample {
    pub tau: u64,
    pub truncated: bool,
    pub e1: u64,
    pub height: f64,
}

/// τ(e₁) under P^{≥0}.
pub fn sample_tau_e1(law: &EnvironmentLaw, fast: bool, budget: u64, stream: StreamId) -> Result<OccupationSample> {
    let mut env = LazyEnvironment::conditioned(law, stream.child(0));
    let mut rng = stream.child(1).rng();
    let (mut y, mut height, mut x) = (0.0f64, 0.0f64, 0i64);
    loop {
        x += 1;
        y += log_rho(env.omega(x)?);
        if y <= 0.0 {
            break;
        }
        height = height.max(y);
    }
    let out = if fast {
        let v = fast_valley(&mut env, 0, x)?;
        simulate_hitting_time_fast(&mut env, 0, x, &[v], budget, &mut rng)?
    } else {
        simulate_hitting_time(&mut env, 0, x, budget, &mut rng)?
    };
    Ok(OccupationSample {
        tau: out.tau,
        truncated: out.truncated,
        e1: x as u64,
        height,
    })
}

/// K_n and NO(n) from the first n excursions after 0.
pub fn sample_valley_counts(law: &EnvironmentLaw, n: u64, h_n: f64, d_n: u64, stream: StreamId) -> (u64, bool) {
    let mut rng = stream.rng();
    let mut t = NoOverlapTracker::new(h_n, d_n);
    for _ in 0..n {
        t.push(sample_forward_excursion(law, &mut rng).height);
    }
    (t.k_n(), t.no_event())
}
