//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::too_many_arguments, clippy::needless_range_loop)]

use std::sync::OnceLock;

use num_complex::Complex64;
use zoomquant::heat::{heat_system, HeatBenchmark};
use zoomquant::{
    certify, rate_constants, Certification, CertifyOptions, Discretization, RateConstants, Strategy,
};

/// Adaptive Simpson quadrature of a complex integrand.
pub fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    fn rec<F: Fn(f64) -> Complex64>(
        f: &F,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (fa + 4.0 * flm + fm) * ((m - a) / 6.0);
        let right = (fm + 4.0 * frm + fb) * ((b - m) / 6.0);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (fa + 4.0 * fm + fb) * ((b - a) / 6.0);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Classical RK4 on the scalar modal equations over `[0, t]` with step `h`:
/// `φ' = λφ, φ(0) = 1`, `x' = λx + 1, x(0) = 0`, `c' = w(s)φ(s), c(0) = 0`.
/// Returns `(φ(t), x(t), c(t))`, i.e. `e^{λt}`, `ϖ(t)` and `∫ w e^{λs} ds`.
pub fn rk4_mode<W: Fn(f64) -> f64>(
    lambda: Complex64,
    t: f64,
    h: f64,
    w: W,
) -> (Complex64, Complex64, Complex64) {
    let steps = (t / h).round() as usize;
    let h = t / steps as f64;
    let rhs = |s: f64, y: [Complex64; 3]| [lambda * y[0], lambda * y[1] + 1.0, w(s) * y[0]];
    let mut y = [
        Complex64::from(1.0),
        Complex64::from(0.0),
        Complex64::from(0.0),
    ];
    for i in 0..steps {
        let s = i as f64 * h;
        let add = |y: [Complex64; 3], k: [Complex64; 3], f: f64| {
            [y[0] + k[0] * f, y[1] + k[1] * f, y[2] + k[2] * f]
        };
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(s + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(s + h, add(y, k3, h));
        for j in 0..3 {
            y[j] += (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0);
        }
    }
    (y[0], y[1], y[2])
}

const RADAU_A: [[f64; 3]; 3] = {
    let s6 = 2.449_489_742_783_178;
    [
        [
            (88.0 - 7.0 * s6) / 360.0,
            (296.0 - 169.0 * s6) / 1800.0,
            (-2.0 + 3.0 * s6) / 225.0,
        ],
        [
            (296.0 + 169.0 * s6) / 1800.0,
            (88.0 + 7.0 * s6) / 360.0,
            (-2.0 - 3.0 * s6) / 225.0,
        ],
        [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
    ]
};

/// One step of the 3-stage Radau IIA method for `x' = λx + g` written as
/// `x⁺ = α x + β g`. The stage system `(I − hλA) K = λx·1 + g·1` is solved
/// by Gaussian elimination.
pub fn radau_step_coefficients(lambda: f64, h: f64) -> (f64, f64) {
    let solve = |rhs: [f64; 3]| -> [f64; 3] {
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - h * lambda * RADAU_A[i][j];
            }
            m[i][3] = rhs[i];
        }
        for col in 0..3 {
            let piv = (col..3)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for row in col + 1..3 {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut k = [0.0; 3];
        for row in (0..3).rev() {
            let mut acc = m[row][3];
            for j in row + 1..3 {
                acc -= m[row][j] * k[j];
            }
            k[row] = acc / m[row][row];
        }
        k
    };
    // Weights of Radau IIA equal the last row of A.
    let weights = RADAU_A[2];
    let advance = |x: f64, g: f64| {
        let k = solve([lambda * x + g; 3]);
        x + h * (weights[0] * k[0] + weights[1] * k[1] + weights[2] * k[2])
    };
    let alpha = advance(1.0, 0.0);
    let beta = advance(0.0, 1.0);
    (alpha, beta)
}

/// `∫₀^τ w(t) y(t) dt` for the real modal system `x' = diag(λ)x + b·1`,
/// `y = c·x` from rest, integrated with Radau IIA at step `h` and weighted
/// by composite Simpson over the same grid.
pub fn radau_weighted_output<W: Fn(f64) -> f64>(
    lambdas: &[f64],
    b: &[f64],
    c: &[f64],
    tau: f64,
    h: f64,
    w: W,
) -> f64 {
    let mut steps = (tau / h).round() as usize;
    if steps % 2 == 1 {
        steps += 1;
    }
    let h = tau / steps as f64;
    let coeffs: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&l| radau_step_coefficients(l, h))
        .collect();
    let mut x = vec![0.0; lambdas.len()];
    let mut acc = 0.0;
    for i in 0..=steps {
        let y: f64 = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
        let weight = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += weight * w(i as f64 * h) * y;
        if i < steps {
            for ((xi, &(a, g)), &bi) in x.iter_mut().zip(&coeffs).zip(b) {
                *xi = a * *xi + g * bi;
            }
        }
    }
    acc * h / 3.0
}

/// Heat benchmark certified once per test binary and strategy.
pub struct HeatRun {
    pub bench: HeatBenchmark,
    pub disc: Discretization,
    pub cert: Certification,
    pub rc: RateConstants,
}

fn build(strategy: Strategy) -> HeatRun {
    let bench = heat_system(100).unwrap();
    let disc = Discretization::new(&bench.system, &bench.cfg).unwrap();
    let cert = certify(
        &disc,
        &bench.controller,
        strategy,
        &CertifyOptions::new(bench.reference.rho0),
    )
    .unwrap();
    let delta = 1.0 / bench.reference.levels as f64;
    let rc = rate_constants(&cert.norms, &cert.certificate, delta, delta).unwrap();
    HeatRun {
        bench,
        disc,
        cert,
        rc,
    }
}

pub fn heat_run(strategy: Strategy) -> &'static HeatRun {
    static ZERO: OnceLock<HeatRun> = OnceLock::new();
    static HOLD: OnceLock<HeatRun> = OnceLock::new();
    match strategy {
        Strategy::Zero => ZERO.get_or_init(|| build(strategy)),
        Strategy::Hold => HOLD.get_or_init(|| build(strategy)),
        other => panic!("no cached run for {other}"),
    }
}

/// Schedule check written independently of the library: cumulative losses
/// against `xi + nu k` at every prefix.
pub fn prefix_violation(theta: &[bool], xi: f64, nu: f64) -> Option<usize> {
    let mut count = 0usize;
    for k in 1..=theta.len() {
        count += theta[k - 1] as usize;
        if count as f64 > xi + nu * k as f64 + 1e-9 {
            return Some(k);
        }
    }
    None
}
