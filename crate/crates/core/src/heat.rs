//! One-dimensional heat equation on `[0, 1]` with Neumann flux control at
//! `ξ = 0`, insulation at `ξ = 1` and point observation at `ξ = 1`.
//!
//! Eigenfunctions are `φ₁ ≡ 1` and `φₙ(ξ) = √2 cos((n−1)πξ)`, so the input
//! coefficient is `φₙ(0)` and the output coefficient is `φₙ(1)`.

use std::f64::consts::{PI, SQRT_2};

use crate::closed_loop::Controller;
use crate::error::{Error, Result};
use crate::spectral::{DiscretizationConfig, GrowthExponents, Mode, SpectralSystem, TailEstimate};

pub const CATALOG_NAME: &str = "heat-neumann-1d";

/// Values reported for this benchmark, used as comparison targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatReference {
    pub rho: f64,
    pub rho0: f64,
    pub m: f64,
    pub eta1_zero: f64,
    pub eta1_hold: f64,
    pub nu_zero: f64,
    pub nu_hold: f64,
    pub xi: f64,
    pub e0: f64,
    pub levels: u64,
}

pub const REFERENCE: HeatReference = HeatReference {
    rho: 0.908,
    rho0: 0.91,
    m: 1.3770,
    eta1_zero: 1.4626,
    eta1_hold: 2.1515,
    nu_zero: 0.175,
    nu_hold: 0.072,
    xi: 1.0,
    e0: 1.0,
    levels: 150,
};

/// Declared growth exponents. Coefficients are bounded and `|λₙ| ~ n²`, so
/// any `β, γ > 1/4` makes the weighted coefficient sums finite.
pub const EXPONENTS: (f64, f64) = (0.3, 0.3);

#[derive(Clone, Debug)]
pub struct HeatBenchmark {
    pub system: SpectralSystem,
    pub controller: Controller,
    pub cfg: DiscretizationConfig,
    pub reference: HeatReference,
}

/// Mode with 0-based index `n`.
pub fn heat_mode(n: usize) -> Mode {
    if n == 0 {
        return Mode::siso(0.0, 1.0, 1.0);
    }
    let k = n as f64;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Mode::siso(-(k * PI).powi(2), SQRT_2, SQRT_2 * sign)
}

/// Bound on `Σ_{j≥n} j^{-s}` for `n ≥ 1`, `s > 1`.
fn zeta_tail(n: usize, s: f64) -> f64 {
    let n = n as f64;
    n.powf(-s) + n.powf(1.0 - s) / (s - 1.0)
}

fn tail(summed: usize, exponents: GrowthExponents) -> TailEstimate {
    // Remaining modes have 0-based index j >= summed and |λ| = (jπ)².
    let sum = |e: f64| {
        let s = 4.0 * e;
        if summed == 0 || s <= 1.0 {
            f64::INFINITY
        } else {
            2.0 * PI.powf(-s) * zeta_tail(summed, s)
        }
    };
    TailEstimate {
        min_abs_lambda: (summed as f64 * PI).powi(2),
        sup_re_lambda: 0.0,
        input_sums: vec![sum(exponents.beta())],
        output_sums: vec![sum(exponents.gamma())],
    }
}

/// The heat plant as a rule-based spectral system.
pub fn heat_spectral_system() -> SpectralSystem {
    let (beta, gamma) = EXPONENTS;
    SpectralSystem::from_rule(1, 1, heat_mode)
        .expect("heat modes are well formed")
        .named(CATALOG_NAME)
        .with_exponents(
            GrowthExponents::new(beta, gamma).expect("declared exponents are admissible"),
        )
        .with_tail_bound(tail)
}

/// Benchmark with plant, controller `(P, Q, R) = (0.445, 0.3, −3)`,
/// `τ = 0.1` and the averaging sampler. Modes are generated by rule, so any
/// `n_hint` is materializable.
pub fn heat_system(n_hint: usize) -> Result<HeatBenchmark> {
    if n_hint == 0 {
        return Err(Error::Validation("n_hint must be at least 1".into()));
    }
    Ok(HeatBenchmark {
        system: heat_spectral_system(),
        controller: Controller::scalar(0.445, 0.3, -3.0),
        cfg: DiscretizationConfig::new(0.1),
        reference: REFERENCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_modes() {
        let m1 = heat_mode(0);
        assert_eq!(m1.lambda.re, 0.0);
        assert_eq!((m1.input[0].re, m1.output[0].re), (1.0, 1.0));
        let m2 = heat_mode(1);
        assert!((m2.lambda.re + PI * PI).abs() < 1e-12);
        assert_eq!(m2.input[0].re, SQRT_2);
        assert_eq!(m2.output[0].re, -SQRT_2);
        assert_eq!(heat_mode(2).output[0].re, SQRT_2);
    }

    #[test]
    fn tail_sums_dominate_direct_sums() {
        let e = GrowthExponents::new(0.3, 0.3).unwrap();
        let est = tail(10, e);
        let direct: f64 = (10..200_000)
            .map(|j| 2.0 / ((j as f64) * PI).powf(1.2))
            .sum();
        assert!(est.input_sums[0] >= direct);
        assert!(est.input_sums[0] < 1.5 * direct + 1.0);
        assert!(tail(0, e).input_sums[0].is_infinite());
    }

    #[test]
    fn n_hint_zero_rejected() {
        assert!(heat_system(0).is_err());
    }
}
