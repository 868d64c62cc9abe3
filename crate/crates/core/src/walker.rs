//! Step-by-step simulation of the walk in a lazily materialized environment,
//! and the geometric-decomposition sampler for valley crossings.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env_model::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::numeric::rng::{open01, step_right, step_threshold, StreamId, StreamRng};
use crate::potential::sample_excursion_omegas;
use crate::quenched::{HTransformPair, WindowEnvironment};

/// How the environment continues past the materialized cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Fresh i.i.d. draws.
    Iid,
    /// Left side only: forward excursions glued leftward, so V ≥ V(0) on ℤ₋.
    Conditioned,
    /// The last materialized cell is the end of the world (ω = 1 on the left).
    Closed,
}

/// Environment whose cells are drawn on first use and then kept.
///
/// Sites ≥ 1 and sites ≤ 0 live in two vectors; a nearest-neighbour walk only
/// ever touches a contiguous interval, so no hashing is needed.
pub struct LazyEnvironment {
    law: Option<EnvironmentLaw>,
    rng: StreamRng,
    right: Vec<f64>,
    right_thr: Vec<u64>,
    left: Vec<f64>,
    left_thr: Vec<u64>,
    left_ext: Extension,
    right_ext: Extension,
    piece: Vec<f64>,
}

impl LazyEnvironment {
    fn empty(law: Option<EnvironmentLaw>, stream: StreamId, left_ext: Extension, right_ext: Extension) -> Self {
        LazyEnvironment {
            law,
            rng: stream.rng(),
            right: Vec::new(),
            right_thr: Vec::new(),
            left: Vec::new(),
            left_thr: Vec::new(),
            left_ext,
            right_ext,
            piece: Vec::new(),
        }
    }

    /// i.i.d. environment on all of ℤ.
    pub fn iid(law: &EnvironmentLaw, stream: StreamId) -> Self {
        Self::empty(Some(law.clone()), stream, Extension::Iid, Extension::Iid)
    }

    /// Environment under P^{≥0}: conditioned left half (sites ≤ 0), i.i.d. right.
    pub fn conditioned(law: &EnvironmentLaw, stream: StreamId) -> Self {
        Self::empty(Some(law.clone()), stream, Extension::Conditioned, Extension::Iid)
    }

    /// Fixed ω on [left, left + len) with the given continuations. `left ≤ 0`
    /// and the window must reach site 0.
    pub fn from_omegas(
        left: i64,
        omegas: &[f64],
        left_ext: Extension,
        right_ext: Extension,
        law: Option<&EnvironmentLaw>,
        stream: StreamId,
    ) -> Result<Self> {
        let right_end = left + omegas.len() as i64 - 1;
        if left > 0 || right_end < 0 {
            return Err(Error::InvalidArgument("window must contain site 0".into()));
        }
        let needs_law = |e: Extension| e != Extension::Closed;
        if law.is_none() && (needs_law(left_ext) || needs_law(right_ext)) {
            return Err(Error::InvalidArgument("open extension needs a law".into()));
        }
        if right_ext == Extension::Conditioned {
            return Err(Error::InvalidArgument("conditioned extension is left-only".into()));
        }
        let mut env = Self::empty(law.cloned(), stream, left_ext, right_ext);
        for x in (left..=0).rev() {
            env.push_left(omegas[(x - left) as usize]);
        }
        for x in 1..=right_end {
            env.push_right(omegas[(x - left) as usize]);
        }
        Ok(env)
    }

    /// Copy of a quenched window; a reflecting left cell becomes closed.
    pub fn from_window(
        w: &WindowEnvironment,
        open_left: Extension,
        right_ext: Extension,
        law: Option<&EnvironmentLaw>,
        stream: StreamId,
    ) -> Result<Self> {
        let mut om = w.omegas().to_vec();
        let left_ext = match w.boundary() {
            crate::quenched::Boundary::ReflectLeft => {
                om[0] = 1.0;
                Extension::Closed
            }
            crate::quenched::Boundary::OpenLeft => open_left,
        };
        Self::from_omegas(w.left(), &om, left_ext, right_ext, law, stream)
    }

    fn push_left(&mut self, w: f64) {
        self.left.push(w);
        self.left_thr.push(step_threshold(w));
    }

    fn push_right(&mut self, w: f64) {
        self.right.push(w);
        self.right_thr.push(step_threshold(w));
    }

    fn grow_left(&mut self) -> Result<()> {
        let law = self.law.as_ref();
        match (self.left_ext, law) {
            (Extension::Iid, Some(law)) => {
                let w = law.sample_omega(&mut self.rng);
                self.push_left(w);
            }
            (Extension::Conditioned, Some(law)) => {
                let mut piece = std::mem::take(&mut self.piece);
                sample_excursion_omegas(law, &mut self.rng, &mut piece);
                for &w in piece.iter().rev() {
                    self.push_left(w);
                }
                self.piece = piece;
            }
            _ => return Err(Error::OutOfWindow(-(self.left.len() as i64))),
        }
        Ok(())
    }

    fn grow_right(&mut self) -> Result<()> {
        match (self.right_ext, self.law.as_ref()) {
            (Extension::Iid, Some(law)) => {
                let w = law.sample_omega(&mut self.rng);
                self.push_right(w);
                Ok(())
            }
            _ => Err(Error::OutOfWindow(self.right.len() as i64 + 1)),
        }
    }

    /// Materialize every site in [lo, hi].
    pub fn ensure(&mut self, lo: i64, hi: i64) -> Result<()> {
        while (self.right.len() as i64) < hi {
            self.grow_right()?;
        }
        while -(self.left.len() as i64) + 1 > lo {
            self.grow_left()?;
        }
        Ok(())
    }

    #[inline]
    fn threshold(&mut self, x: i64) -> Result<u64> {
        if x >= 1 {
            let i = (x - 1) as usize;
            while i >= self.right_thr.len() {
                self.grow_right()?;
            }
            Ok(self.right_thr[i])
        } else {
            let i = (-x) as usize;
            while i >= self.left_thr.len() {
                self.grow_left()?;
            }
            Ok(self.left_thr[i])
        }
    }

    /// ω_x, materializing it if needed.
    pub fn omega(&mut self, x: i64) -> Result<f64> {
        self.ensure(x, x)?;
        Ok(if x >= 1 {
            self.right[(x - 1) as usize]
        } else {
            self.left[(-x) as usize]
        })
    }

    /// Materialized sites [lo, hi].
    pub fn materialized(&self) -> (i64, i64) {
        (-(self.left.len() as i64) + 1, self.right.len() as i64)
    }

    /// ω on [lo, hi] (materializing as needed).
    pub fn omegas(&mut self, lo: i64, hi: i64) -> Result<Vec<f64>> {
        self.ensure(lo, hi)?;
        (lo..=hi).map(|x| self.omega(x)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkOutcome {
    pub tau: u64,
    pub min_position: i64,
    /// Steps spent at sites ≤ z, when requested.
    pub left_time: Option<u64>,
    pub truncated: bool,
}

impl WalkOutcome {
    /// The outcome, or BudgetExhausted if it was truncated.
    pub fn complete(self) -> Result<Self> {
        if self.truncated {
            Err(Error::BudgetExhausted(self.tau))
        } else {
            Ok(self)
        }
    }
}

/// Walk from `start` until `target` (to its right) is hit, calling
/// `visit(x)` at every time k < τ with the current position.
#[inline]
fn walk_right<R: RngCore + ?Sized, F: FnMut(i64)>(
    env: &mut LazyEnvironment,
    start: i64,
    target: i64,
    budget: u64,
    rng: &mut R,
    mut visit: F,
) -> Result<(u64, i64, bool)> {
    let mut x = start;
    let mut t = 0u64;
    let mut min = start;
    while x != target {
        if t == budget {
            return Ok((t, min, true));
        }
        visit(x);
        let thr = env.threshold(x)?;
        if step_right(rng, thr) {
            x += 1;
        } else {
            x -= 1;
            min = min.min(x);
        }
        t += 1;
    }
    Ok((t, min, false))
}

/// τ(target) from `start`, by direct simulation.
pub fn simulate_hitting_time<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    start: i64,
    target: i64,
    budget: u64,
    rng: &mut R,
) -> Result<WalkOutcome> {
    check_run(start, target, budget)?;
    let (tau, min_position, truncated) = walk_right(env, start, target, budget, rng, |_| {})?;
    Ok(WalkOutcome {
        tau,
        min_position,
        left_time: None,
        truncated,
    })
}

fn check_run(start: i64, target: i64, budget: u64) -> Result<()> {
    if target <= start {
        return Err(Error::InvalidArgument(format!("target {target} must exceed start {start}")));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    Ok(())
}

/// τ̃^{(z)}(x, y): steps k with τ(x) ≤ k < τ(y) and X_k ≤ z, for a walk
/// started at x.
pub fn measure_left_time<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    z: i64,
    x: i64,
    y: i64,
    budget: u64,
    rng: &mut R,
) -> Result<WalkOutcome> {
    if !(z <= x && x <= y) {
        return Err(Error::InvalidArgument("need z <= x <= y".into()));
    }
    if x == y {
        return Ok(WalkOutcome {
            tau: 0,
            min_position: x,
            left_time: Some(0),
            truncated: false,
        });
    }
    let mut left = 0u64;
    let (tau, min_position, truncated) = walk_right(env, x, y, budget, rng, |p| left += u64::from(p <= z))?;
    Ok(WalkOutcome {
        tau,
        min_position,
        left_time: Some(left),
        truncated,
    })
}

/// First passage times of a list of increasing sites, from one walk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageRecord {
    /// τ(targets[k]); shorter than `targets` when truncated.
    pub times: Vec<u64>,
    pub truncated: bool,
}

pub fn simulate_passage_times<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    start: i64,
    targets: &[i64],
    budget: u64,
    rng: &mut R,
) -> Result<PassageRecord> {
    if targets.windows(2).any(|w| w[0] > w[1]) || targets.first().is_some_and(|&t| t < start) {
        return Err(Error::InvalidArgument("targets must be increasing and >= start".into()));
    }
    let mut times = Vec::with_capacity(targets.len());
    let mut x = start;
    let mut t = 0u64;
    for &target in targets {
        if target > x {
            let (dt, _, trunc) = walk_right(env, x, target, budget - t, rng, |_| {})?;
            t += dt;
            if trunc {
                return Ok(PassageRecord { times, truncated: true });
            }
            x = target;
        }
        times.push(t);
    }
    Ok(PassageRecord { times, truncated: false })
}

/// Per-valley crossing times and left times of one walk to `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValleyWalk {
    pub tau: u64,
    /// τ(d_i) − τ(b_i).
    pub crossing: Vec<u64>,
    /// τ̃^{(a_i)}(b_i, d_i).
    pub left_time: Vec<u64>,
    pub truncated: bool,
}

/// Walk from 0 to `target` recording, for each (a_i, b_i, d_i) with
/// 0 ≤ b_i < d_i ≤ target in increasing order, the crossing time and the
/// time spent at or left of a_i during the crossing.
pub fn simulate_valley_walk<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    target: i64,
    valleys: &[(i64, i64, i64)],
    budget: u64,
    rng: &mut R,
) -> Result<ValleyWalk> {
    check_run(0, target, budget)?;
    let mut out = ValleyWalk {
        tau: 0,
        crossing: Vec::with_capacity(valleys.len()),
        left_time: Vec::with_capacity(valleys.len()),
        truncated: false,
    };
    let mut x = 0;
    let mut t = 0u64;
    for &(a, b, d) in valleys {
        if !(a <= b && b < d && d <= target && b >= x) {
            return Err(Error::InvalidArgument(format!("valley ({a}, {b}, {d}) out of order")));
        }
        if b > x {
            let (dt, _, trunc) = walk_right(env, x, b, budget - t, rng, |_| {})?;
            t += dt;
            if trunc {
                out.tau = t;
                out.truncated = true;
                return Ok(out);
            }
        }
        let mut left = 0u64;
        let (dt, _, trunc) = walk_right(env, b, d, budget - t, rng, |p| left += u64::from(p <= a))?;
        t += dt;
        out.crossing.push(dt);
        out.left_time.push(left);
        x = d;
        if trunc {
            out.tau = t;
            out.truncated = true;
            return Ok(out);
        }
    }
    if target > x {
        let (dt, _, trunc) = walk_right(env, x, target, budget - t, rng, |_| {})?;
        t += dt;
        out.truncated = trunc;
    }
    out.tau = t;
    Ok(out)
}

/// Precomputed sampler for the crossing b → d of one valley.
#[derive(Clone, Debug)]
pub struct FastValley {
    pub bottom: i64,
    pub top: i64,
    /// ω̂ thresholds at offsets 0..e₁ (offset 0 unused).
    hat_thr: Vec<u64>,
    /// ω̄ thresholds at offsets 0..e₁.
    bar_thr: Vec<u64>,
    /// log(1 − p).
    log_q: f64,
    /// P(first step left | failure) = (1 − ω₀)/p.
    left_first: f64,
}

impl FastValley {
    pub fn new(pair: &HTransformPair) -> Self {
        let e1 = pair.e1;
        let mut hat_thr = vec![0; e1];
        let mut bar_thr = vec![0; e1];
        for x in 1..e1 {
            hat_thr[x] = step_threshold(pair.omega_hat[x]);
            bar_thr[x] = step_threshold(pair.omega_bar[x]);
        }
        let log_q = pair.omega0.ln() - pair.log_m2_eh;
        let p = -log_q.exp_m1();
        FastValley {
            bottom: pair.bottom,
            top: pair.bottom + e1 as i64,
            hat_thr,
            bar_thr,
            log_q,
            left_first: ((1.0 - pair.omega0) / p).min(1.0),
        }
    }

    /// A valley of length one: every attempt right succeeds at once.
    pub fn unit(bottom: i64, omega0: f64) -> Self {
        FastValley {
            bottom,
            top: bottom + 1,
            hat_thr: Vec::new(),
            bar_thr: Vec::new(),
            log_q: omega0.ln(),
            left_first: 1.0,
        }
    }

    pub fn e1(&self) -> usize {
        (self.top - self.bottom) as usize
    }

    /// 1 − p.
    pub fn success_probability(&self) -> f64 {
        self.log_q.exp()
    }

    /// Number of failures before the first success, by inversion; None if it
    /// exceeds `cap`.
    pub fn sample_failures<R: RngCore + ?Sized>(&self, rng: &mut R, cap: u64) -> Option<u64> {
        if self.log_q >= 0.0 {
            return Some(0);
        }
        let q = self.log_q.exp();
        // −log(1−q) in log form; survives q underflowing to 0
        let log_neg_log_p = if q > 1e-8 { (-(-q).ln_1p()).ln() } else { self.log_q + 0.5 * q };
        let log_neg_log_u = (-open01(rng).ln()).ln();
        let n = (log_neg_log_u - log_neg_log_p).exp().floor();
        (n <= cap as f64).then_some(n as u64)
    }
}

/// Walk on offsets of a transformed valley from `start` to `target`.
#[inline]
fn array_walk<R: RngCore + ?Sized>(thr: &[u64], start: usize, target: usize, budget: u64, rng: &mut R) -> (u64, bool) {
    let mut x = start;
    let mut t = 0u64;
    while x != target {
        if t == budget {
            return (t, true);
        }
        if step_right(rng, thr[x]) {
            x += 1;
        } else {
            x -= 1;
        }
        t += 1;
    }
    (t, false)
}

/// τ(d) − τ(b) for a walk started at the valley bottom, as N failures plus
/// one success. `env` must carry the valley's ω on [b, d].
pub fn simulate_valley_crossing_fast<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    valley: &FastValley,
    budget: u64,
    rng: &mut R,
) -> Result<WalkOutcome> {
    let b = valley.bottom;
    let e1 = valley.e1();
    let mut out = WalkOutcome {
        tau: 0,
        min_position: b,
        left_time: None,
        truncated: false,
    };
    let Some(n) = valley.sample_failures(rng, budget) else {
        out.tau = budget;
        out.truncated = true;
        return Ok(out);
    };
    for _ in 0..n {
        if out.tau >= budget {
            out.truncated = true;
            return Ok(out);
        }
        let room = budget - out.tau - 1;
        let left = open01(rng) < valley.left_first;
        let (dt, trunc) = if left {
            let (dt, min, trunc) = walk_right(env, b - 1, b, room, rng, |_| {})?;
            out.min_position = out.min_position.min(min);
            (dt, trunc)
        } else {
            array_walk(&valley.hat_thr, 1, 0, room, rng)
        };
        out.tau += 1 + dt;
        if trunc {
            out.truncated = true;
            return Ok(out);
        }
    }
    if out.tau >= budget {
        out.truncated = true;
        return Ok(out);
    }
    let (dt, trunc) = if e1 == 1 {
        (0, false)
    } else {
        array_walk(&valley.bar_thr, 1, e1, budget - out.tau - 1, rng)
    };
    out.tau += 1 + dt;
    out.truncated = trunc;
    Ok(out)
}

/// τ(target) from `start`, crossing each listed valley (sorted, disjoint,
/// inside (start, target]) with the decomposition sampler.
pub fn simulate_hitting_time_fast<R: RngCore + ?Sized>(
    env: &mut LazyEnvironment,
    start: i64,
    target: i64,
    valleys: &[FastValley],
    budget: u64,
    rng: &mut R,
) -> Result<WalkOutcome> {
    check_run(start, target, budget)?;
    let mut x = start;
    let mut out = WalkOutcome {
        tau: 0,
        min_position: start,
        left_time: None,
        truncated: false,
    };
    for v in valleys.iter().filter(|v| v.bottom >= start && v.top <= target) {
        if v.bottom < x {
            return Err(Error::InvalidArgument("valleys overlap or are unsorted".into()));
        }
        if v.bottom > x {
            let (dt, min, trunc) = walk_right(env, x, v.bottom, budget - out.tau, rng, |_| {})?;
            out.tau += dt;
            out.min_position = out.min_position.min(min);
            if trunc {
                out.truncated = true;
                return Ok(out);
            }
        }
        let c = simulate_valley_crossing_fast(env, v, budget - out.tau, rng)?;
        out.tau += c.tau;
        out.min_position = out.min_position.min(c.min_position);
        if c.truncated {
            out.truncated = true;
            return Ok(out);
        }
        x = v.top;
    }
    if target > x {
        let (dt, min, trunc) = walk_right(env, x, target, budget - out.tau, rng, |_| {})?;
        out.tau += dt;
        out.min_position = out.min_position.min(min);
        out.truncated = trunc;
    }
    Ok(out)
}
