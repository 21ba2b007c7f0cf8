//! Uniform quantizers and the zoom-parameter recursion that scales them.

use crate::error::{Error, Result};
use crate::norms::RateConstants;

/// Static uniform quantizer with `L` cells on `[-1, 1]` per component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UniformQuantizer {
    levels: u64,
    dims: usize,
}

/// Quantized vector and whether any component was clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub values: Vec<f64>,
    pub saturated: bool,
}

impl UniformQuantizer {
    pub fn new(levels: u64, dims: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Validation(
                "quantizer needs at least one level".into(),
            ));
        }
        if dims == 0 {
            return Err(Error::Validation(
                "quantizer needs at least one channel".into(),
            ));
        }
        Ok(UniformQuantizer { levels, dims })
    }

    pub fn levels(&self) -> u64 {
        self.levels
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Error bound `Δ = 1/L` relative to the zoom parameter, per component.
    pub fn delta(&self) -> f64 {
        1.0 / self.levels as f64
    }

    /// Bound on `‖𝖰(v) − v‖₂ / μ` for `‖v‖₂ ≤ μ`: `√dims · Δ`. This is the
    /// `Δ` that enters the rate constants, which use Euclidean norms.
    pub fn norm_delta(&self) -> f64 {
        (self.dims as f64).sqrt() * self.delta()
    }

    /// Cell index of a scaled value already clamped to `[-1, 1]`.
    fn cell(&self, s: f64) -> u64 {
        let l = self.levels as f64;
        let i = ((s + 1.0) * l / 2.0).floor();
        (i.max(0.0) as u64).min(self.levels - 1)
    }

    /// Center `-1 + (2i+1)/L` of cell `i`.
    pub fn center(&self, i: u64) -> f64 {
        -1.0 + (2 * i + 1) as f64 / self.levels as f64
    }

    /// `μ·𝖰(v/μ)` componentwise. Values on a cell boundary go to the upper
    /// cell; components with `|v| > μ` are clamped and flagged.
    pub fn quantize(&self, v: &[f64], mu: f64) -> Result<Quantized> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain {
                what: "zoom parameter",
                domain: "(0, inf)",
                value: mu,
            });
        }
        if v.len() != self.dims {
            return Err(Error::Validation(format!(
                "quantizer has {} channels, got a {}-vector",
                self.dims,
                v.len()
            )));
        }
        let mut saturated = false;
        let values = v
            .iter()
            .map(|&x| {
                let s = x / mu;
                if s.abs() > 1.0 {
                    saturated = true;
                }
                mu * self.center(self.cell(s.clamp(-1.0, 1.0)))
            })
            .collect();
        Ok(Quantized { values, saturated })
    }
}

/// Zoom parameters `μ`, `μ_in = g_in μ`, `μ_out = g_out μ` at step `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoomState {
    pub mu: f64,
    pub mu_in: f64,
    pub mu_out: f64,
    /// Additive floor `δ` in `μ ← η_θ μ + δ`; zero gives the pure
    /// geometric law.
    pub floor_delta: f64,
    pub k: usize,
}

impl ZoomState {
    /// `μ(0) = M E₀` with the transient constant carried by `rc` (`M_h` for
    /// hold strategies).
    pub fn init(e0: f64, rc: &RateConstants, floor_delta: f64) -> Result<Self> {
        if !(e0 > 0.0 && e0.is_finite()) {
            return Err(Error::Domain {
                what: "initial state bound",
                domain: "(0, inf)",
                value: e0,
            });
        }
        if !(floor_delta >= 0.0 && floor_delta.is_finite()) {
            return Err(Error::Domain {
                what: "zoom floor",
                domain: "[0, inf)",
                value: floor_delta,
            });
        }
        Ok(Self::with_mu(rc.m * e0, rc, floor_delta, 0))
    }

    fn with_mu(mu: f64, rc: &RateConstants, floor_delta: f64, k: usize) -> Self {
        ZoomState {
            mu,
            mu_in: rc.in_gain * mu,
            mu_out: rc.out_gain * mu,
            floor_delta,
            k,
        }
    }

    /// `μ ← η_θ μ + δ`.
    pub fn step(&self, lost: bool, rc: &RateConstants) -> Self {
        let eta = if lost { rc.eta1 } else { rc.eta0 };
        Self::with_mu(
            eta * self.mu + self.floor_delta,
            rc,
            self.floor_delta,
            self.k + 1,
        )
    }
}
