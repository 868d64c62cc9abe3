//! Potential V, ladder epochs, excursion functionals and the environment
//! conditioned to keep V nonnegative on the left half-line.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env_model::{EnvironmentLaw, EnvironmentModel};
use crate::error::{Error, Result};
use crate::numeric::logsum::{log_add, LogSum};
use crate::numeric::rng::{StreamId, StreamRng};

/// Relative size below which a truncated left remainder counts as certified.
pub const TRUNCATION_REL_TOL: f64 = 1e-12;

/// ln ρ for a given ω.
#[inline]
pub fn log_rho(omega: f64) -> f64 {
    ((1.0 - omega) / omega).ln()
}

/// ω for a given ln ρ.
#[inline]
pub fn omega_of_log_rho(lr: f64) -> f64 {
    1.0 / (1.0 + lr.exp())
}

/// Realized potential on the window [first_site, first_site + len).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPath {
    first_site: i64,
    values: Vec<f64>,
}

/// Ladder epochs found within a window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Epochs {
    /// Increasing sites.
    pub sites: Vec<i64>,
    /// Forward: the window ends inside an unfinished excursion.
    /// Backward: the minimality condition was only checked inside the window.
    pub truncated: bool,
}

impl Epochs {
    /// Number of complete excursions between listed epochs.
    pub fn complete_excursions(&self) -> usize {
        self.sites.len().saturating_sub(1)
    }
}

/// V from an ω block where `block[origin]` is ω₀. The leftmost ω only fixes
/// V(left) − V(left − 1), which lies outside the window, so it is unused.
pub fn build_potential(block: &[f64], origin: usize) -> Result<PotentialPath> {
    if block.is_empty() || origin >= block.len() {
        return Err(Error::InvalidArgument("origin must index a nonempty block".into()));
    }
    let mut values = vec![0.0; block.len()];
    for k in origin + 1..block.len() {
        values[k] = values[k - 1] + log_rho(block[k]);
    }
    for k in (0..origin).rev() {
        values[k] = values[k + 1] - log_rho(block[k + 1]);
    }
    Ok(PotentialPath {
        first_site: -(origin as i64),
        values,
    })
}

impl PotentialPath {
    pub fn from_values(first_site: i64, values: Vec<f64>) -> Result<Self> {
        let p = PotentialPath { first_site, values };
        match p.get(0) {
            Some(0.0) => Ok(p),
            _ => Err(Error::InvalidArgument("window must contain site 0 with V(0) = 0".into())),
        }
    }

    pub fn left(&self) -> i64 {
        self.first_site
    }
    pub fn right(&self) -> i64 {
        self.first_site + self.values.len() as i64 - 1
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: i64) -> Option<f64> {
        let k = x - self.first_site;
        if k < 0 {
            return None;
        }
        self.values.get(k as usize).copied()
    }

    /// V(x); panics outside the window.
    #[inline]
    pub fn v(&self, x: i64) -> f64 {
        self.get(x).expect("site outside potential window")
    }

    /// ln ρ_x = V(x) − V(x−1) for left < x ≤ right.
    pub fn log_rho_at(&self, x: i64) -> f64 {
        self.v(x) - self.v(x - 1)
    }

    pub fn omega_at(&self, x: i64) -> f64 {
        omega_of_log_rho(self.log_rho_at(x))
    }

    /// Same increments, re-anchored so that `site` becomes 0 with V = 0.
    pub fn recentered(&self, site: i64) -> Result<PotentialPath> {
        let v0 = self.get(site).ok_or(Error::OutOfWindow(site))?;
        Ok(PotentialPath {
            first_site: self.first_site - site,
            values: self.values.iter().map(|v| v - v0).collect(),
        })
    }

    /// e₀ = 0 and e_{i+1} = first k > e_i with V(k) ≤ V(e_i).
    pub fn forward_epochs(&self) -> Epochs {
        let mut sites = vec![0i64];
        let mut cur = self.v(0);
        let mut x = 1;
        while x <= self.right() {
            let v = self.v(x);
            if v <= cur {
                sites.push(x);
                cur = v;
            }
            x += 1;
        }
        let truncated = *sites.last().expect("nonempty") < self.right();
        Epochs { sites, truncated }
    }

    /// Sites k ≤ 0 with V(l) ≥ V(k) for every window site l < k, plus e₀ = 0.
    pub fn backward_epochs(&self) -> Epochs {
        let mut sites = Vec::new();
        let mut run_min = f64::INFINITY;
        let mut x = self.left();
        while x < 0 {
            let v = self.v(x);
            if v <= run_min {
                sites.push(x);
            }
            run_min = run_min.min(v);
            x += 1;
        }
        sites.push(0);
        Epochs {
            sites,
            truncated: true,
        }
    }

    /// Functionals of the excursion [e_i, e_{i+1}] given forward epochs.
    /// Left sums run to the window edge and need a certified remainder.
    pub fn excursion_functionals(&self, epochs: &Epochs, i: usize) -> Result<ExcursionRecord> {
        if i + 1 >= epochs.sites.len() {
            return Err(Error::InvalidArgument(format!("excursion {i} is not complete in the window")));
        }
        let (start, end) = (epochs.sites[i], epochs.sites[i + 1]);
        let base = self.v(start);
        let rel: Vec<f64> = (start..=end).map(|x| self.v(x) - base).collect();
        let mut rec = excursion_from_relative(&rel, start);
        let log_r = self.certified_left_sum(start)?;
        rec.set_left(log_r);
        Ok(rec)
    }

    /// log Σ_{k ≤ s} e^{−(V(k)−V(s))} with a geometric remainder bound from the
    /// mean left rise over the leftmost ≤ 64 increments.
    pub fn certified_left_sum(&self, s: i64) -> Result<f64> {
        let base = self.v(s);
        let mut acc = LogSum::new();
        for x in self.left()..=s {
            acc.add(-(self.v(x) - base));
        }
        let sum = acc.value();
        let tail = self.left_remainder_log(base).ok_or(Error::WindowTooSmall)?;
        if tail - sum > TRUNCATION_REL_TOL.ln() {
            return Err(Error::WindowTooSmall);
        }
        Ok(log_add(sum, tail))
    }

    /// log of the estimated Σ_{k < left} e^{−(V(k) − base)}; None when the
    /// window's left end shows no upward drift.
    pub fn left_remainder_log(&self, base: f64) -> Option<f64> {
        let n = (self.values.len() - 1).min(64);
        if n == 0 {
            return None;
        }
        let rise = (self.values[0] - self.values[n]) / n as f64;
        if !(rise > 0.0) {
            return None;
        }
        // r/(1−r) with r = e^{−rise}
        let log_geom = -rise - (-(-rise).exp_m1()).ln();
        Some(-(self.values[0] - base) + log_geom)
    }
}

/// Per-excursion functionals, all sums stored as logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub start: i64,
    pub end: i64,
    /// H = max of V − V(start) over [start, end].
    pub height: f64,
    /// First site attaining the maximum.
    pub t_h: i64,
    /// V(end) − V(start) ≤ 0.
    pub drop: f64,
    /// log Σ_{start≤k<T_H} e^{−(V(k)−V(start))}; −∞ when T_H = start.
    pub log_inner_m1: f64,
    /// log Σ_{start≤k<end} e^{−(V(k)−V(start))}.
    pub log_inner_m1_prime: f64,
    /// log M₂ = log Σ_{start≤k<end} e^{V(k)−V(start)−H}.
    pub log_m2: f64,
    /// log R₋ = log Σ_{k≤start} e^{−(V(k)−V(start))}, when the left is known.
    pub log_r_minus: Option<f64>,
}

impl ExcursionRecord {
    pub fn length(&self) -> i64 {
        self.end - self.start
    }

    fn set_left(&mut self, log_r_minus: f64) {
        self.log_r_minus = Some(log_r_minus);
    }

    /// log M₁ = log(R₋ − 1 + inner) with the site `start` counted once.
    pub fn log_m1(&self) -> Option<f64> {
        self.log_r_minus.map(|r| left_plus_inner(r, self.log_inner_m1))
    }

    pub fn log_m1_prime(&self) -> Option<f64> {
        self.log_r_minus.map(|r| left_plus_inner(r, self.log_inner_m1_prime))
    }

    /// log Z = log M₁ + log M₂ + H.
    pub fn log_z(&self) -> Option<f64> {
        self.log_m1().map(|m1| m1 + self.log_m2 + self.height)
    }
}

/// log((R − 1) + I) where both R and I include the k = start term.
fn left_plus_inner(log_r: f64, log_inner: f64) -> f64 {
    // R − 1 = Σ_{k<start}; evaluated as log_sub to stay in log space
    let strictly_left = if log_r <= 0.0 {
        f64::NEG_INFINITY
    } else {
        log_r + (-(-log_r).exp_m1()).ln()
    };
    log_add(strictly_left, log_inner)
}

/// Record from relative values rel[l] = V(start+l) − V(start), l = 0..=len.
pub fn excursion_from_relative(rel: &[f64], start: i64) -> ExcursionRecord {
    let m = rel.len() - 1;
    let mut acc = ExcursionAccumulator::new();
    for &y in &rel[1..m] {
        acc.push_interior(y);
    }
    acc.finish(start, rel[m])
}

/// Streaming evaluation of one excursion's functionals.
#[derive(Clone, Debug)]
struct ExcursionAccumulator {
    len: i64,
    height: f64,
    t_h: i64,
    neg: LogSum,
    neg_at_max: f64,
    pos: LogSum,
}

impl ExcursionAccumulator {
    fn new() -> Self {
        let mut neg = LogSum::new();
        neg.add(0.0);
        let mut pos = LogSum::new();
        pos.add(0.0);
        ExcursionAccumulator {
            len: 1,
            height: 0.0,
            t_h: 0,
            neg,
            neg_at_max: f64::NEG_INFINITY,
            pos,
        }
    }

    /// Site l = len with value y > 0 (inside the excursion).
    #[inline]
    fn push_interior(&mut self, y: f64) {
        if y > self.height {
            self.height = y;
            self.t_h = self.len;
            self.neg_at_max = self.neg.value();
        }
        self.neg.add(-y);
        self.pos.add(y);
        self.len += 1;
    }

    fn finish(self, start: i64, drop: f64) -> ExcursionRecord {
        ExcursionRecord {
            start,
            end: start + self.len,
            height: self.height,
            t_h: start + self.t_h,
            drop,
            log_inner_m1: self.neg_at_max,
            log_inner_m1_prime: self.neg.value(),
            log_m2: self.pos.value() - self.height,
            log_r_minus: None,
        }
    }
}

/// Draw the ω's of one forward first excursion (sites 1..=e₁) into `buf`.
pub fn sample_excursion_omegas<R: RngCore>(law: &EnvironmentLaw, rng: &mut R, buf: &mut Vec<f64>) {
    buf.clear();
    let mut y = 0.0;
    loop {
        let w = law.sample_omega(rng);
        buf.push(w);
        y += log_rho(w);
        if y <= 0.0 {
            return;
        }
    }
}

/// One forward excursion from its own start, functionals only.
pub fn sample_forward_excursion<R: RngCore>(law: &EnvironmentLaw, rng: &mut R) -> ExcursionRecord {
    let mut acc = ExcursionAccumulator::new();
    let mut y = 0.0;
    loop {
        y += log_rho(law.sample_omega(rng));
        if y <= 0.0 {
            return acc.finish(0, y);
        }
        acc.push_interior(y);
    }
}

/// Endless i.i.d. excursions of a forward path with exact R₋ recursion.
///
/// R₋ at the next epoch is 1 + e^{drop}·M₁′. The stream starts with an empty
/// left and discards excursions until the unknown left part is certified
/// below the relative tolerance, so every emitted record carries R₋ with the
/// law it has under P^{≥0}.
pub struct ExcursionStream<'a> {
    law: &'a EnvironmentLaw,
    rng: StreamRng,
    log_r: f64,
    position: i64,
    emitted: u64,
}

impl<'a> ExcursionStream<'a> {
    pub fn new(model: &'a EnvironmentModel, stream: StreamId) -> Self {
        Self::with_law(model.law(), stream)
    }

    pub fn with_law(law: &'a EnvironmentLaw, stream: StreamId) -> Self {
        let mut s = ExcursionStream {
            law,
            rng: stream.rng(),
            log_r: 0.0,
            position: 0,
            emitted: 0,
        };
        s.burn_in();
        s
    }

    fn burn_in(&mut self) {
        // Left edge at the stream start; the unknown part beyond it is
        // e^{-depth}·G with G the geometric remainder for the observed drift.
        let mut depth = 0.0;
        let mut sites = 0i64;
        loop {
            let rec = self.advance();
            depth -= rec.drop;
            sites += rec.length();
            if sites >= 64 {
                let rise = depth / sites as f64;
                if rise > 0.0 {
                    let log_geom = -rise - (-(-rise).exp_m1()).ln();
                    if log_geom - depth - self.log_r <= TRUNCATION_REL_TOL.ln() {
                        break;
                    }
                }
            }
        }
        self.position = 0;
        self.emitted = 0;
    }

    fn advance(&mut self) -> ExcursionRecord {
        let mut rec = sample_forward_excursion(self.law, &mut self.rng);
        rec.start = self.position;
        rec.end += self.position;
        rec.t_h += self.position;
        rec.log_r_minus = Some(self.log_r);
        let m1p = left_plus_inner(self.log_r, rec.log_inner_m1_prime);
        self.log_r = log_add(0.0, rec.drop + m1p);
        self.position = rec.end;
        self.emitted += 1;
        rec
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

impl Iterator for ExcursionStream<'_> {
    type Item = ExcursionRecord;
    fn next(&mut self) -> Option<ExcursionRecord> {
        Some(self.advance())
    }
}

/// Left half of an environment under P^{≥0}.
#[derive(Clone, Debug)]
pub struct ConditionedLeft {
    /// V on [left, 0].
    pub path: PotentialPath,
    /// ω at sites left+1 ..= 0, increasing site order.
    pub omegas: Vec<f64>,
    /// Concatenation boundaries, increasing, ending at 0.
    pub boundaries: Vec<i64>,
}

/// Lazy generator of the P^{≥0} left environment, one excursion at a time
/// moving away from 0.
pub struct ConditionedLeftGenerator<'a> {
    law: &'a EnvironmentLaw,
    rng: StreamRng,
    buf: Vec<f64>,
}

impl<'a> ConditionedLeftGenerator<'a> {
    pub fn new(law: &'a EnvironmentLaw, stream: StreamId) -> Self {
        ConditionedLeftGenerator {
            law,
            rng: stream.rng(),
            buf: Vec::new(),
        }
    }

    /// ω of the next piece in increasing site order; the piece ends at the
    /// current left boundary.
    pub fn next_piece(&mut self) -> &[f64] {
        sample_excursion_omegas(self.law, &mut self.rng, &mut self.buf);
        &self.buf
    }

    /// Draw with an external rng, for callers that own their streams.
    pub fn next_piece_with<R: RngCore>(law: &EnvironmentLaw, rng: &mut R, buf: &mut Vec<f64>) {
        sample_excursion_omegas(law, rng, buf);
    }
}

/// Concatenate `n_excursions` forward first excursions leftward from 0.
pub fn sample_conditioned_left(model: &EnvironmentModel, n_excursions: usize, stream: StreamId) -> Result<ConditionedLeft> {
    if n_excursions == 0 {
        return Err(Error::InvalidArgument("n_excursions must be at least 1".into()));
    }
    let mut gen = ConditionedLeftGenerator::new(model.law(), stream);
    // pieces listed from 0 outward
    let mut pieces: Vec<Vec<f64>> = Vec::with_capacity(n_excursions);
    for _ in 0..n_excursions {
        pieces.push(gen.next_piece().to_vec());
    }
    let total: usize = pieces.iter().map(Vec::len).sum();
    let mut omegas = Vec::with_capacity(total);
    let mut boundaries = Vec::with_capacity(n_excursions + 1);
    let left = -(total as i64);
    let mut site = left;
    for p in pieces.iter().rev() {
        boundaries.push(site);
        omegas.extend_from_slice(p);
        site += p.len() as i64;
    }
    boundaries.push(0);
    // V(0) = 0 and V(x−1) = V(x) − ln ρ_x
    let mut values = vec![0.0; total + 1];
    for k in (0..total).rev() {
        values[k] = values[k + 1] - log_rho(omegas[k]);
    }
    let path = PotentialPath {
        first_site: left,
        values,
    };
    Ok(ConditionedLeft {
        path,
        omegas,
        boundaries,
    })
}

/// A = E[−V(e₁)] by Monte Carlo.
pub fn estimate_mean_drop(model: &EnvironmentModel, n: usize, stream: StreamId) -> f64 {
    let mut rng = stream.rng();
    let s: f64 = (0..n)
        .map(|_| -sample_forward_excursion(model.law(), &mut rng).drop)
        .sum();
    s / n as f64
}

/// CSV rows: H, T_H, M1, M1', M2, log Z, e1 (T_H and e1 relative to start).
pub fn write_excursions_csv<W: Write>(mut w: W, records: &[ExcursionRecord]) -> Result<()> {
    writeln!(w, "H,T_H,M1,M1_prime,M2,log_Z,e1")?;
    for r in records {
        let f = |x: Option<f64>| x.map_or(String::from("NA"), |v| format!("{}", v.exp()));
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.height,
            r.t_h - r.start,
            f(r.log_m1()),
            f(r.log_m1_prime()),
            r.log_m2.exp(),
            r.log_z().map_or(String::from("NA"), |v| v.to_string()),
            r.length()
        )?;
    }
    Ok(())
}
