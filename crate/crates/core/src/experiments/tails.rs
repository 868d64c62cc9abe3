//! Tail studies (H, Z, τ(e₁)) and the good-environment diagnostic.

use serde::{Deserialize, Serialize};

use super::record::{Gate, ReplicateRecord, Stat, Table};
use super::sampling::sample_tau_e1;
use super::{chunk_len, replicate_map, Context, CHUNK};
use crate::env_model::EnvironmentLaw;
use crate::error::{Error, Result};
use crate::numeric::rng::StreamId;
use crate::numeric::stats::{ols, quantile_sorted};
use crate::potential::{log_rho, sample_forward_excursion, ExcursionStream};
use crate::quenched::{Boundary, WindowEnvironment};
use crate::stable_limits::compute_constants;
use crate::walker::LazyEnvironment;

const CONSTANTS: u64 = 1;
const SAMPLES: u64 = 100;
/// Grid points per decade of t.
const PER_DECADE: usize = 10;
/// Largest left window tried when certifying R⁻.
const MAX_LEFT: i64 = 1 << 20;

/// Empirical tail at t: count of samples ≥ t (or > t), survival and
/// t^κ·survival.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub count: u64,
    pub survival: f64,
    pub plateau: f64,
}

/// Tail points on log t = k/PER_DECADE·ln 10 from `sorted_logs` (ascending
/// logarithms of the samples).
pub fn tail_points(sorted_logs: &[f64], kappa: f64, inclusive: bool) -> Vec<TailPoint> {
    let n = sorted_logs.len();
    if n == 0 {
        return Vec::new();
    }
    let step = std::f64::consts::LN_10 / PER_DECADE as f64;
    let lo = (sorted_logs[0].max(0.0) / step).floor() as i64;
    let hi = (sorted_logs[n - 1] / step).ceil() as i64;
    (lo..=hi)
        .map(|k| {
            let lt = k as f64 * step;
            let below = if inclusive {
                sorted_logs.partition_point(|&x| x < lt - 1e-12)
            } else {
                sorted_logs.partition_point(|&x| x <= lt)
            };
            let count = (n - below) as u64;
            let survival = count as f64 / n as f64;
            TailPoint {
                t: lt.exp(),
                count,
                survival,
                plateau: (kappa * lt).exp() * survival,
            }
        })
        .collect()
}

/// Points in [t_hi/10, t_hi], t_hi the largest t with at least `min_count`
/// exceedances.
pub fn top_decade(points: &[TailPoint], min_count: u64) -> Vec<TailPoint> {
    let Some(hi) = points.iter().rev().find(|p| p.count >= min_count) else {
        return Vec::new();
    };
    let lo = hi.t / 10.0 * (1.0 - 1e-9);
    points.iter().filter(|p| p.t >= lo && p.t <= hi.t).copied().collect()
}

fn tail_table(name: &str, points: &[TailPoint], constant: f64) -> Table {
    let mut t = Table::new(name, &["t", "count", "survival", "plateau", "ratio_to_constant"]);
    for p in points {
        t.rows.push(vec![p.t, p.count as f64, p.survival, p.plateau, p.plateau / constant]);
    }
    t
}

/// Pooled per-chunk samples: values in chunk order and one record per chunk.
fn pooled<F>(ctx: &mut Context, samples: u64, purpose: u64, draw: F) -> Result<(Vec<f64>, u64)>
where
    F: Fn(StreamId, u64) -> Result<(Vec<f64>, u64)> + Sync + Send,
{
    let stream = ctx.root.child(purpose);
    let chunks = samples.div_ceil(CHUNK);
    let rows = replicate_map(chunks, |c| draw(stream.replicate(c), chunk_len(samples, c)))?;
    let mut all = Vec::with_capacity(samples as usize);
    let mut censored = 0;
    for (c, ((vals, cens), wall)) in rows.into_iter().enumerate() {
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vals.iter().sum();
        let mut r = ReplicateRecord::new(c as u64)
            .with("samples", vals.len() as f64)
            .with("censored", cens as f64)
            .with("sum", sum)
            .with("max", max);
        r.censored = cens > 0;
        r.wall_time_s = wall;
        ctx.out.replicates.push(r);
        censored += cens;
        all.extend(vals);
    }
    Ok((all, censored))
}

pub(super) fn iglehart_tail(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let law = ctx.model.law().clone();
    let kappa = ctx.model.kappa();
    let samples = cfg.samples.unwrap_or(0);
    let tol = cfg.tolerances;
    let (mut h, _) = pooled(ctx, samples, SAMPLES, |s, len| {
        let mut rng = s.rng();
        Ok(((0..len).map(|_| sample_forward_excursion(&law, &mut rng).height).collect(), 0))
    })?;
    h.sort_by(f64::total_cmp);
    let n = h.len() as f64;
    // fit range: from the 5% tail down to min_tail_count exceedances
    let p_hi = 0.05;
    let p_lo = (tol.min_tail_count as f64 / n).min(p_hi / 10.0);
    let (h_lo, h_hi) = (quantile_sorted(&h, 1.0 - p_hi), quantile_sorted(&h, 1.0 - p_lo));
    let points = 20;
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    let mut table = Table::new("height_tail", &["h", "count", "survival", "scaled"]);
    for k in 0..points {
        let x = h_lo + (h_hi - h_lo) * k as f64 / (points - 1) as f64;
        let count = h.len() - h.partition_point(|&y| y <= x);
        let p = count as f64 / n;
        xs.push(x);
        ys.push(p.ln());
        table.rows.push(vec![x, count as f64, p, p * (kappa * x).exp()]);
    }
    let fit = ols(&xs, &ys);
    let s = &mut ctx.out.summary;
    s.push(Stat::exact("kappa", kappa));
    s.push(Stat::mc("slope", fit.slope, fit.slope_stderr, samples, 0));
    s.push(Stat::derived("fit_h_lo", h_lo, samples, 0));
    s.push(Stat::derived("fit_h_hi", h_hi, samples, 0));
    ctx.out.gates.push(Gate::within("slope", fit.slope, -kappa - tol.slope, -kappa + tol.slope));
    ctx.out.tables.push(table);
    Ok(())
}

pub(super) fn z_tail(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let model = ctx.model;
    let kappa = model.kappa();
    let samples = cfg.samples.unwrap_or(0);
    let tol = cfg.tolerances;
    let c = compute_constants(model, &cfg.effort(), ctx.root.child(CONSTANTS))?;
    let (mut logs, _) = pooled(ctx, samples, SAMPLES, |s, len| {
        let vals = ExcursionStream::new(model, s)
            .take(len as usize)
            .map(|r| r.log_z().ok_or_else(|| Error::Numerical("excursion without R-".into())))
            .collect::<Result<Vec<f64>>>()?;
        Ok((vals, 0))
    })?;
    logs.sort_by(f64::total_cmp);
    let pts = tail_points(&logs, kappa, false);
    let dec = top_decade(&pts, tol.min_tail_count);
    let cu = c.c_u.value;
    ctx.out.summary.push(Stat::from_estimate("c_u", &c.c_u));
    ctx.out.tables.push(tail_table("z_tail", &pts, cu));
    plateau_gates(ctx, &dec, cu, samples, 0, "c_u")
}

/// Flatness and distance to the constant over the top usable decade.
fn plateau_gates(ctx: &mut Context, dec: &[TailPoint], constant: f64, samples: u64, censored: u64, what: &str) -> Result<()> {
    let tol = ctx.config.tolerances;
    if dec.len() < 2 {
        ctx.out.gates.push(Gate::flag("usable_decade", false));
        return Ok(());
    }
    let mean = dec.iter().map(|p| p.plateau).sum::<f64>() / dec.len() as f64;
    let flat = dec.iter().map(|p| (p.plateau / mean - 1.0).abs()).fold(0.0, f64::max);
    let s = &mut ctx.out.summary;
    s.push(Stat::derived("decade_t_lo", dec[0].t, samples, censored));
    s.push(Stat::derived("decade_t_hi", dec[dec.len() - 1].t, samples, censored));
    s.push(Stat::derived("plateau_mean", mean, samples, censored));
    s.push(Stat::derived("plateau_flatness", flat, samples, censored));
    s.push(Stat::derived(&format!("plateau_over_{what}"), mean / constant, samples, censored));
    ctx.out.gates.push(Gate::at_most("plateau_flatness", flat, tol.plateau_flatness));
    ctx.out.gates.push(Gate::at_most(
        &format!("plateau_vs_{what}"),
        (mean / constant - 1.0).abs(),
        tol.plateau_vs_constant,
    ));
    Ok(())
}

pub(super) fn occupation_tail(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let model = ctx.model;
    let law = model.law().clone();
    let kappa = model.kappa();
    let samples = cfg.samples.unwrap_or(0);
    let tol = cfg.tolerances;
    let (fast, budget) = (cfg.fast(), cfg.budget());
    let c = compute_constants(model, &cfg.effort(), ctx.root.child(CONSTANTS))?;
    let ct = c.c_t.value;
    let (mut logs, censored) = pooled(ctx, samples, SAMPLES, |s, len| {
        let mut vals = Vec::with_capacity(len as usize);
        let mut cens = 0;
        for k in 0..len {
            let o = sample_tau_e1(&law, fast, budget, s.child(k))?;
            cens += u64::from(o.truncated);
            vals.push((o.tau as f64).ln());
        }
        Ok((vals, cens))
    })?;
    logs.sort_by(f64::total_cmp);
    let pts = tail_points(&logs, kappa, true);
    let dec = top_decade(&pts, tol.min_tail_count);
    ctx.out.summary.push(Stat::from_estimate("c_t", &c.c_t));
    ctx.out.tables.push(tail_table("occupation_tail", &pts, ct));
    let monotone = pts.windows(2).all(|w| w[1].survival <= w[0].survival);
    ctx.out.gates.push(Gate::flag("survival_monotone", monotone));
    if dec.is_empty() {
        ctx.out.gates.push(Gate::flag("usable_decade", false));
        return Ok(());
    }
    let top = dec[dec.len() - 1];
    let censored_frac = censored as f64 / top.count as f64;
    let (lo, hi) = tol.occupation_band;
    let ratios: Vec<f64> = dec.iter().map(|p| p.plateau / ct).collect();
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = &mut ctx.out.summary;
    s.push(Stat::derived("decade_t_lo", dec[0].t, samples, censored));
    s.push(Stat::derived("decade_t_hi", top.t, samples, censored));
    s.push(Stat::derived("plateau_ratio_min", min, samples, censored));
    s.push(Stat::derived("plateau_ratio_max", max, samples, censored));
    s.push(Stat::derived("censored_fraction_at_top", censored_frac, samples, censored));
    ctx.out.gates.push(Gate::within("plateau_ratio_min", min, lo, hi));
    ctx.out.gates.push(Gate::within("plateau_ratio_max", max, lo, hi));
    ctx.out.gates.push(Gate::at_most("censored_fraction_at_top", censored_frac, tol.censored_fraction));
    Ok(())
}

/// Outcome of one tilted environment draw at level h_t.
#[derive(Clone, Copy, Debug, Default)]
struct GoodEnvDraw {
    /// Likelihood ratio dP/dQ, 0 when H < h_t.
    weight: f64,
    fail: [bool; 3],
}

/// Largest drop of `v` (as a positive number).
fn largest_drop(v: &[f64]) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut best = 0.0f64;
    for &y in v {
        top = top.max(y);
        best = best.max(top - y);
    }
    best
}

/// Largest rise of `v`.
fn largest_rise(v: &[f64]) -> f64 {
    let mut bottom = f64::INFINITY;
    let mut best = 0.0f64;
    for &y in v {
        bottom = bottom.min(y);
        best = best.max(y - bottom);
    }
    best
}

/// R⁻ at 0 for a conditioned left environment, widening the window until
/// the truncated tail is certified.
fn conditioned_r_minus(law: &EnvironmentLaw, stream: StreamId) -> Result<f64> {
    let mut env = LazyEnvironment::conditioned(law, stream);
    let mut left = 256i64;
    loop {
        let w = WindowEnvironment::new(-left, env.omegas(-left, 0)?, Boundary::OpenLeft)?;
        match w.r_minus(0) {
            Err(Error::TruncationUncertified) if left < MAX_LEFT => left *= 2,
            other => return other,
        }
    }
}

fn good_env_draw(
    law: &EnvironmentLaw,
    tilted: &EnvironmentLaw,
    kappa: f64,
    t: f64,
    c: f64,
    alpha: f64,
    stream: StreamId,
) -> Result<GoodEnvDraw> {
    let lt = t.ln();
    let h_t = lt - lt.ln();
    let mut rng = stream.child(1).rng();
    let mut v = vec![0.0];
    let mut y = 0.0;
    // tilted until V ≥ h_t (or the excursion ends below h_t)
    loop {
        y += log_rho(tilted.sample_omega(&mut rng));
        v.push(y);
        if y <= 0.0 {
            return Ok(GoodEnvDraw::default());
        }
        if y >= h_t {
            break;
        }
    }
    let weight = (-kappa * y).exp();
    loop {
        y += log_rho(law.sample_omega(&mut rng));
        v.push(y);
        if y <= 0.0 {
            break;
        }
    }
    let e1 = (v.len() - 1) as f64;
    let (t_h, _) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(i, m), (k, &x)| if x > m { (k, x) } else { (i, m) });
    let f2 = largest_drop(&v[..=t_h]).max(largest_rise(&v[t_h..])) > alpha * lt;
    let r_minus = conditioned_r_minus(law, stream.child(2))?;
    Ok(GoodEnvDraw {
        weight,
        fail: [e1 > c * lt, f2, r_minus > lt.powi(4) * t.powf(alpha)],
    })
}

pub(super) fn good_env(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.config;
    let model = ctx.model;
    let kappa = model.kappa();
    let law = model.law().clone();
    let tilted = law.tilted(kappa)?;
    let samples = cfg.samples.unwrap_or(0);
    let tol = cfg.tolerances;
    let (lo, hi) = super::config::good_alpha_range(kappa);
    let alpha = cfg.good_env.alpha.unwrap_or(0.5 * (lo + hi));
    let c = cfg.good_env.c;
    let mut table = Table::new(
        "good_env",
        &["t", "h_t", "p_deep", "p_deep_stderr", "fail1", "fail1_se", "fail2", "fail2_se", "fail3", "fail3_se"],
    );
    let mut rates: Vec<[(f64, f64); 3]> = Vec::new();
    for (j, &t) in cfg.t_ladder.iter().enumerate() {
        let stream = ctx.root.child(SAMPLES + j as u64);
        let chunks = samples.div_ceil(CHUNK);
        let rows = replicate_map(chunks, |ch| {
            let s = stream.replicate(ch);
            (0..chunk_len(samples, ch))
                .map(|k| good_env_draw(&law, &tilted, kappa, t, c, alpha, s.child(k)))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut draws = Vec::with_capacity(samples as usize);
        for (ch, (d, wall)) in rows.into_iter().enumerate() {
            let w: f64 = d.iter().map(|x| x.weight).sum();
            let mut r = ReplicateRecord::new(ctx.out.replicates.len() as u64)
                .with("t", t)
                .with("chunk", ch as f64)
                .with("weight_sum", w);
            for i in 0..3 {
                let wf: f64 = d.iter().filter(|x| x.fail[i]).map(|x| x.weight).sum();
                r = r.with(&format!("fail{}_weight", i + 1), wf);
            }
            r.wall_time_s = wall;
            ctx.out.replicates.push(r);
            draws.extend(d);
        }
        let n = draws.len() as f64;
        let sw: f64 = draws.iter().map(|d| d.weight).sum();
        let sw2: f64 = draws.iter().map(|d| d.weight * d.weight).sum();
        let p = sw / n;
        let p_se = ((sw2 / n - p * p).max(0.0) / n).sqrt();
        let mut row = vec![t, t.ln() - t.ln().ln(), p, p_se];
        let mut r3 = [(0.0, 0.0); 3];
        for (i, slot) in r3.iter_mut().enumerate() {
            // ratio estimator Σ w·1_fail / Σ w with its delta-method stderr
            let rate = draws.iter().filter(|d| d.fail[i]).map(|d| d.weight).sum::<f64>() / sw;
            let var: f64 = draws
                .iter()
                .map(|d| {
                    let f = f64::from(u8::from(d.fail[i]));
                    (d.weight * (f - rate)).powi(2)
                })
                .sum();
            let se = var.sqrt() / sw;
            *slot = (rate, se);
            row.extend([rate, se]);
            ctx.out
                .summary
                .push(Stat::mc(&format!("fail{}_rate[t={t}]", i + 1), rate, se, samples, 0));
        }
        ctx.out.summary.push(Stat::mc(&format!("p_deep[t={t}]"), p, p_se, samples, 0));
        rates.push(r3);
        table.rows.push(row);
        if ((t - cfg.good_env.gate_t) / cfg.good_env.gate_t).abs() < 1e-9 {
            ctx.out
                .gates
                .push(Gate::at_most(&format!("omega1_failure_rate[t={t}]"), r3[0].0, tol.omega1_rate));
        }
    }
    // trend: no significant increase between consecutive ladder points
    for i in 0..3 {
        let worst = rates
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0][i], w[1][i]);
                (b.0 - a.0) / (a.1 * a.1 + b.1 * b.1).sqrt().max(1e-300)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let worst = if worst.is_finite() { worst } else { 0.0 };
        ctx.out.gates.push(Gate::at_most(&format!("fail{}_nonincreasing_z", i + 1), worst, 2.0));
    }
    ctx.out.notes.push(format!("good_env uses C = {c}, alpha = {alpha}"));
    ctx.out.tables.push(table);
    Ok(())
}
