//! Test-local oracles, independent of the library's solvers.

#![allow(dead_code)]

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// P_x(hit b before a) on omegas indexed from a, for every x in [a, b].
pub fn exit_oracle(om: &[f64]) -> Vec<f64> {
    let m = om.len() - 2;
    if m == 0 {
        return vec![0.0, 1.0];
    }
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let w = om[i + 1];
        a[i][i] = 1.0;
        if i > 0 {
            a[i][i - 1] = -(1.0 - w);
        }
        if i + 1 < m {
            a[i][i + 1] = -w;
        } else {
            rhs[i] = w;
        }
    }
    let mut u = vec![0.0];
    u.extend(dense_solve(a, rhs));
    u.push(1.0);
    u
}

/// (E_x τ(b), E_x τ(b)²) for x in [0, b) on a window reflecting at site 0.
pub fn hitting_oracle(om: &[f64], b: usize) -> (Vec<f64>, Vec<f64>) {
    let system = |rhs: Vec<f64>| {
        let mut a = vec![vec![0.0; b]; b];
        for i in 0..b {
            a[i][i] = 1.0;
            if i == 0 {
                if b > 1 {
                    a[0][1] = -1.0;
                }
                continue;
            }
            a[i][i - 1] = -(1.0 - om[i]);
            if i + 1 < b {
                a[i][i + 1] = -om[i];
            }
        }
        dense_solve(a, rhs)
    };
    let t = system(vec![1.0; b]);
    let at = |j: usize| if j == b { 0.0 } else { t[j] };
    let rhs: Vec<f64> = (0..b)
        .map(|i| {
            if i == 0 {
                1.0 + 2.0 * at(1)
            } else {
                1.0 + 2.0 * (om[i] * at(i + 1) + (1.0 - om[i]) * at(i - 1))
            }
        })
        .collect();
    let s = system(rhs);
    (t, s)
}

/// Composite Simpson rule on [lo, hi] with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
