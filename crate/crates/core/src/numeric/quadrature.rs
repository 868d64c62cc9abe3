//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One GK15 panel: (kronrod estimate, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

/// Integrate f over [a, b] to max(abs_tol, rel_tol·|I|).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    const MAX_PANELS: usize = 4000;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&f, a, b);
    panels.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numerical("non-finite integrand".into()));
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge: value {total}, error {err}"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            return Err(Error::Numerical("panel underflow".into()));
        }
        let (v1, e1) = gk15(&f, pa, m);
        let (v2, e2) = gk15(&f, m, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
    // re-sum to shed cancellation drift
    let value = panels.iter().map(|p| p.2).sum();
    let error = panels.iter().map(|p| p.3).sum();
    Ok(Quad { value, error })
}

/// Integrate f over [a, ∞) with x = a + t/(1-t).
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<Quad> {
    integrate(
        |t: f64| {
            let s = 1.0 - t;
            let x = a + t / s;
            let y = f(x) / (s * s);
            if y.is_finite() {
                y
            } else if x.is_infinite() {
                0.0
            } else {
                y
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Integrate f(ω, 1−ω) over (0, 1) with ω = e^{-u} near 0 and 1 - ω = e^{-u}
/// near 1, which tames power/log singularities at both endpoints. The
/// complement is passed exactly so integrands never see 1 − ω rounded to 0.
pub fn integrate_unit_interval<F: Fn(f64, f64) -> f64>(f: F, rel_tol: f64) -> Result<Quad> {
    let ln2 = std::f64::consts::LN_2;
    let lower = integrate_to_infinity(
        |u: f64| {
            let w = (-u).exp();
            if w < 1e-300 {
                0.0
            } else {
                f(w, 1.0 - w) * w
            }
        },
        ln2,
        1e-300,
        rel_tol,
    )?;
    let upper = integrate_to_infinity(
        |u: f64| {
            let d = (-u).exp();
            if d < 1e-300 {
                0.0
            } else {
                f(1.0 - d, d) * d
            }
        },
        ln2,
        1e-300,
        rel_tol,
    )?;
    Ok(Quad {
        value: lower.value + upper.value,
        error: lower.error + upper.error,
    })
}
