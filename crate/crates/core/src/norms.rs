//! Operator norms of truncated operators and their limits in the
//! truncation order, the transient constant `sup_k ‖(𝒜/ρ₀)^k‖`, and the
//! rate constants `η₀`, `η₁` with the admissible loss fraction they imply.

use nalgebra::linalg::{Schur, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::closed_loop::{assemble, Controller, Strategy};
use crate::error::{Error, Result};
use crate::quantizer::UniformQuantizer;
use crate::spectral::{CMatrix, Discretization};

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 100_000;

struct GramRoots {
    sqrt: CMatrix,
    inv_sqrt: CMatrix,
}

fn gram_roots(g: &CMatrix, dim: usize) -> Result<GramRoots> {
    if g.shape() != (dim, dim) {
        return Err(Error::Validation(format!(
            "Gram matrix is {}x{}, expected {dim}x{dim}",
            g.nrows(),
            g.ncols()
        )));
    }
    let scale = g.norm().max(f64::MIN_POSITIVE);
    if (g - g.adjoint()).norm() > 1e-12 * scale {
        return Err(Error::Validation("Gram matrix is not Hermitian".into()));
    }
    let eig =
        SymmetricEigen::try_new(g.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::Eigen(dim))?;
    let largest = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&v| !(v > 1e-14 * largest)) {
        return Err(Error::Validation(
            "Gram matrix is not positive definite".into(),
        ));
    }
    let v = &eig.eigenvectors;
    let scaled = |f: fn(f64) -> f64| {
        let mut w = v.clone();
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            w.column_mut(j).scale_mut(f(lam));
        }
        &w * v.adjoint()
    };
    Ok(GramRoots {
        sqrt: scaled(f64::sqrt),
        inv_sqrt: scaled(|x| 1.0 / x.sqrt()),
    })
}

fn largest_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Induced norm `‖G_out^{1/2} M G_in^{−1/2}‖₂`; absent Gram matrices mean
/// Euclidean coordinates.
pub fn op_norm(m: &CMatrix, gram_out: Option<&CMatrix>, gram_in: Option<&CMatrix>) -> Result<f64> {
    let mut w = m.clone();
    if let Some(g) = gram_out {
        w = gram_roots(g, m.nrows())?.sqrt * w;
    }
    if let Some(g) = gram_in {
        w *= gram_roots(g, m.ncols())?.inv_sqrt;
    }
    Ok(largest_singular_value(&w))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Validation(
            "spectral radius needs a square matrix".into(),
        ));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let (_, t) = Schur::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(Error::Eigen(n))?
        .unpack();
    let mut radius = 0.0f64;
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != Complex64::new(0.0, 0.0) {
            // Unreduced 2x2 block.
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half_trace = (a + d) / 2.0;
            let disc = (half_trace * half_trace - (a * d - b * c)).sqrt();
            radius = radius
                .max((half_trace + disc).norm())
                .max((half_trace - disc).norm());
            i += 2;
        } else {
            radius = radius.max(t[(i, i)].norm());
            i += 1;
        }
    }
    Ok(radius)
}

/// Consecutive steps below the decay threshold required by [`power_sup`].
pub const DECAY_RUN: usize = 20;

/// `sup_{k≥0} ‖(M/ρ₀)^k‖₂`.
///
/// Powers are formed by repeated multiplication. The sup is accepted once
/// the norm has stayed below `decay_tol` times the running maximum for
/// [`DECAY_RUN`] consecutive steps. Norms of powers need not decrease
/// monotonically (complex eigenvalues make them oscillate), so the run
/// counts steps under the threshold rather than strict decreases. By
/// submultiplicativity, one step with `‖S^k‖ ≤ ε·max` and `ε·max < 1`
/// already rules out a larger value later on.
pub fn power_sup(m: &CMatrix, rho0: f64, decay_tol: f64, k_max: usize) -> Result<f64> {
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::Domain {
            what: "rho0",
            domain: "(0, inf)",
            value: rho0,
        });
    }
    let scaled_radius = spectral_radius(m)? / rho0;
    if scaled_radius >= 1.0 {
        return Err(Error::Infeasible {
            rho0,
            scaled_radius,
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    let s = m / Complex64::new(rho0, 0.0);
    let mut power = CMatrix::identity(n, n);
    let mut max = 1.0f64;
    let mut prev = 1.0f64;
    let mut run = 0usize;
    for _ in 0..k_max {
        power = &s * &power;
        let v = largest_singular_value(&power);
        max = max.max(v);
        run = if v < decay_tol * max { run + 1 } else { 0 };
        prev = v;
        if run >= DECAY_RUN || v == 0.0 {
            return Ok(max);
        }
    }
    Err(Error::NonDecay {
        k_max,
        last: prev,
        max,
    })
}

/// [`power_sup`] in the norm induced by a Gram matrix.
pub fn power_sup_weighted(
    m: &CMatrix,
    gram: &CMatrix,
    rho0: f64,
    decay_tol: f64,
    k_max: usize,
) -> Result<f64> {
    let roots = gram_roots(gram, m.nrows())?;
    power_sup(&(&roots.sqrt * m * &roots.inv_sqrt), rho0, decay_tol, k_max)
}

/// A value accepted by the doubling rule, with the order at which it was
/// accepted and `|v(2N) − v(N)|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Converged {
    pub value: f64,
    pub order: usize,
    pub residual: f64,
}

impl Converged {
    /// A quantity that does not depend on the truncation order.
    pub fn exact(value: f64) -> Self {
        Converged {
            value,
            order: 0,
            residual: 0.0,
        }
    }
}

fn accepted(prev: f64, next: f64, tol: f64) -> bool {
    (next - prev).abs() <= tol * next.abs().max(1.0)
}

fn check_orders(tol: f64, n_start: usize, n_max: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "tolerance",
            domain: "(0, inf)",
            value: tol,
        });
    }
    if n_start == 0 || n_start > n_max {
        return Err(Error::Validation(format!(
            "need 1 <= n_start <= n_max, got {n_start} and {n_max}"
        )));
    }
    Ok(())
}

/// Doubles `N` from `n_start` until `|v(2N) − v(N)| ≤ tol·max(1, v(2N))`
/// and returns `v(2N)`.
pub fn value_limit<F>(mut value: F, tol: f64, n_start: usize, n_max: usize) -> Result<Converged>
where
    F: FnMut(usize) -> Result<f64>,
{
    check_orders(tol, n_start, n_max)?;
    let mut n = n_start;
    let mut prev = value(n)?;
    loop {
        if 2 * n > n_max {
            return Err(Error::NonConvergence {
                n_max,
                previous: f64::NAN,
                last: prev,
            });
        }
        n *= 2;
        let next = value(n)?;
        if accepted(prev, next, tol) {
            return Ok(Converged {
                value: next,
                order: n,
                residual: (next - prev).abs(),
            });
        }
        if 2 * n > n_max {
            return Err(Error::NonConvergence {
                n_max,
                previous: prev,
                last: next,
            });
        }
        prev = next;
    }
}

/// [`value_limit`] of the Euclidean operator norm of `builder(N)`.
pub fn norm_limit<F>(mut builder: F, tol: f64, n_start: usize, n_max: usize) -> Result<Converged>
where
    F: FnMut(usize) -> Result<CMatrix>,
{
    value_limit(
        |n| Ok(largest_singular_value(&builder(n)?)),
        tol,
        n_start,
        n_max,
    )
}

/// Simultaneous [`value_limit`] of several quantities sharing one
/// evaluation per order; each entry records its own acceptance order.
fn joint_limit<F>(mut values: F, tol: f64, n_start: usize, n_max: usize) -> Result<Vec<Converged>>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    check_orders(tol, n_start, n_max)?;
    let mut n = n_start;
    let mut prev = values(n)?;
    let mut done: Vec<Option<Converged>> = vec![None; prev.len()];
    while done.iter().any(Option::is_none) {
        if 2 * n > n_max {
            let (i, _) = done.iter().enumerate().find(|(_, d)| d.is_none()).unwrap();
            return Err(Error::NonConvergence {
                n_max,
                previous: f64::NAN,
                last: prev[i],
            });
        }
        n *= 2;
        let next = values(n)?;
        for (i, slot) in done.iter_mut().enumerate() {
            if slot.is_none() && accepted(prev[i], next[i], tol) {
                *slot = Some(Converged {
                    value: next[i],
                    order: n,
                    residual: (next[i] - prev[i]).abs(),
                });
            }
        }
        if 2 * n > n_max {
            if let Some(i) = done.iter().position(Option::is_none) {
                return Err(Error::NonConvergence {
                    n_max,
                    previous: prev[i],
                    last: next[i],
                });
            }
        }
        prev = next;
    }
    Ok(done.into_iter().map(Option::unwrap).collect())
}

/// Norms entering the rate constants of one strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct NormBundle {
    pub strategy: Strategy,
    /// Plant inputs `m` and outputs `p`.
    pub inputs: usize,
    pub outputs: usize,
    /// `‖R‖`
    pub r: Converged,
    /// `‖Q‖`
    pub q: Converged,
    /// Controller part of `ℬ_out,0`: `‖Q‖`, or `‖[Q; I]‖` for hold strategies.
    pub b_out0: Converged,
    /// `‖D_τ‖ = ‖𝒟₀‖`
    pub d: Converged,
    /// `‖𝒟₁‖`
    pub d1: Converged,
    /// `‖ℬ_in,0‖`
    pub b_in0: Converged,
    /// `‖𝒞_out,0‖`
    pub c_out: Converged,
    /// `‖𝒞_out,1‖`
    pub c_out1: Converged,
    /// `‖B_τ‖`
    pub b_plant: Converged,
    /// `‖𝒜₁‖`
    pub a1: Converged,
}

/// Power-stability data of the ideal closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCertificate {
    /// Decay rate: the user's claim, or the spectral radius when none given.
    pub rho: f64,
    /// Rate at which the transient constant is evaluated; pairs with `m`.
    pub rho0: f64,
    /// `sup_k ‖(𝒜_id/ρ₀)^k‖`, times the projection-norm surrogate.
    pub m: f64,
    /// Same for `𝒜₀` of the hold strategies.
    pub m_h: Option<f64>,
    /// Order at which every certified quantity had converged.
    pub n_used: usize,
    /// `r(𝒜_id)` at `n_used`.
    pub spectral_radius: f64,
    /// Doubling residual of `m`.
    pub m_residual: f64,
    /// Largest `‖Π_N‖` seen; one for orthonormal bases.
    pub projection_norm: f64,
}

/// Tolerances and limits for [`certify`].
#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub rho0: f64,
    pub rho: Option<f64>,
    pub tol: f64,
    pub n_start: usize,
    pub n_max: usize,
    pub decay_tol: f64,
    pub k_max: usize,
}

impl CertifyOptions {
    pub fn new(rho0: f64) -> Self {
        CertifyOptions {
            rho0,
            rho: None,
            tol: 1e-6,
            n_start: 25,
            n_max: 400,
            decay_tol: 1e-6,
            k_max: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certification {
    pub certificate: StabilityCertificate,
    pub norms: NormBundle,
}

fn projection_norm(gram: &CMatrix, n: usize) -> Result<f64> {
    let dim = gram.nrows();
    let mut proj = CMatrix::zeros(dim, dim);
    proj.view_mut((0, 0), (n, n)).fill_with_identity();
    op_norm(&proj, Some(gram), Some(gram))
}

/// Computes the transient constants and all norms for `strategy`, each
/// converged under order doubling.
///
/// With a Gram matrix the transient constants are multiplied by the
/// largest `‖Π_N‖` observed over the orders visited, a finite-data
/// stand-in for `limsup ‖Π_N‖`.
pub fn certify(
    disc: &Discretization,
    ctrl: &Controller,
    strategy: Strategy,
    opts: &CertifyOptions,
) -> Result<Certification> {
    if let Some(rho) = opts.rho {
        if !(rho > 0.0 && rho < opts.rho0) {
            return Err(Error::Validation(format!(
                "need 0 < rho < rho0, got rho = {rho}, rho0 = {}",
                opts.rho0
            )));
        }
    }
    let mut proj_max = 1.0f64;
    let hold = strategy.is_hold();
    let mut values = |n: usize| -> Result<Vec<f64>> {
        let plant = disc.plant(n)?;
        let ideal = assemble(&plant, ctrl, Strategy::Zero)?;
        let ops = assemble(&plant, ctrl, strategy)?;
        let zg = ops.state_gram();
        let zg = zg.as_ref();
        let sup = |a: &CMatrix| match zg {
            None => power_sup(a, opts.rho0, opts.decay_tol, opts.k_max),
            Some(g) => power_sup_weighted(a, g, opts.rho0, opts.decay_tol, opts.k_max),
        };
        let mut out = vec![sup(&ideal.theta[0].a)?];
        out.push(if hold { sup(&ops.theta[0].a)? } else { 0.0 });
        out.push(op_norm(&ops.theta[0].b_in, zg, None)?);
        out.push(op_norm(&ops.theta[0].c_out, None, zg)?);
        out.push(op_norm(&ops.theta[1].c_out, None, zg)?);
        out.push(op_norm(&plant.b_tau, plant.gram.as_ref(), None)?);
        out.push(op_norm(&ops.theta[1].a, zg, zg)?);
        if n * 2 <= opts.n_max {
            if let Some(big) = disc.system().gram(2 * n)? {
                proj_max = proj_max.max(projection_norm(&big, n)?);
            }
        }
        Ok(out)
    };
    // A finite system is evaluated exactly at its full order.
    let limits = match disc.system().available_modes() {
        Some(k) => values(k)?
            .into_iter()
            .map(|value| Converged {
                value,
                order: k,
                residual: 0.0,
            })
            .collect(),
        None => joint_limit(values, opts.tol, opts.n_start, opts.n_max)?,
    };
    let n_used = limits.iter().map(|c| c.order).max().unwrap_or(opts.n_start);

    let plant = disc.plant(n_used)?;
    let ideal = assemble(&plant, ctrl, Strategy::Zero)?;
    let radius = spectral_radius(&ideal.theta[0].a)?;
    let ops = assemble(&plant, ctrl, strategy)?;
    let exact = |m: &CMatrix| op_norm(m, None, None).map(Converged::exact);
    let q = ctrl.q().map(Complex64::from);
    let b_out0 = if hold {
        let p = ctrl.outputs();
        let mut stacked = CMatrix::zeros(q.nrows() + p, p);
        stacked.view_mut((0, 0), q.shape()).copy_from(&q);
        stacked
            .view_mut((q.nrows(), 0), (p, p))
            .fill_with_identity();
        exact(&stacked)?
    } else {
        exact(&q)?
    };
    let r = ctrl.r().map(Complex64::from);
    let norms = NormBundle {
        strategy,
        inputs: ctrl.inputs(),
        outputs: ctrl.outputs(),
        r: exact(&r)?,
        q: exact(&q)?,
        b_out0,
        d: exact(&ops.theta[0].d)?,
        d1: exact(&ops.theta[1].d)?,
        b_in0: limits[2],
        c_out: limits[3],
        c_out1: limits[4],
        b_plant: limits[5],
        a1: limits[6],
    };
    let m = limits[0].value * proj_max;
    let certificate = StabilityCertificate {
        rho: opts.rho.unwrap_or(radius),
        rho0: opts.rho0,
        m,
        m_h: hold.then(|| limits[1].value * proj_max),
        n_used,
        spectral_radius: radius,
        m_residual: limits[0].residual,
        projection_norm: proj_max,
    };
    Ok(Certification { certificate, norms })
}

/// Zoom growth rates and gains of one strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct RateConstants {
    pub strategy: Strategy,
    /// Rate without loss.
    pub eta0: f64,
    /// Rate under loss.
    pub eta1: f64,
    /// Output zoom gain of the simultaneous-hold strategy, zero otherwise.
    pub kappa: f64,
    /// Transient constant used: `M`, or `M_h` for hold strategies.
    pub m: f64,
    pub delta_in: f64,
    pub delta_out: f64,
    /// `μ_in = in_gain · μ`
    pub in_gain: f64,
    /// `μ_out = out_gain · μ`
    pub out_gain: f64,
}

impl RateConstants {
    /// `η₁ < 1` contradicts `η₁ ≥ r(A) ≥ 1`, which the theory assumes.
    pub fn eta1_below_one(&self) -> bool {
        self.eta1 < 1.0
    }
}

/// `η₀` and `η₁` for quantization error bounds `Δ_in`, `Δ_out`.
///
/// `η₀` is built on `ρ₀`, the rate paired with the computed `M`.
pub fn rate_constants(
    norms: &NormBundle,
    cert: &StabilityCertificate,
    delta_in: f64,
    delta_out: f64,
) -> Result<RateConstants> {
    for (what, v) in [("delta_in", delta_in), ("delta_out", delta_out)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain {
                what,
                domain: "[0, inf)",
                value: v,
            });
        }
    }
    let strategy = norms.strategy;
    let m = if strategy.is_hold() {
        cert.m_h.ok_or_else(|| {
            Error::Validation(format!(
                "the {strategy} strategy needs M_h in the certificate"
            ))
        })?
    } else {
        cert.m
    };
    let r = norms.r.value;
    let gain0 = norms.c_out.value + delta_in * norms.d.value * r;
    let gain1 = norms.c_out1.value + delta_in * norms.d1.value * r;
    let (out_gain, kappa) = if strategy == Strategy::SimultaneousHold {
        let kappa = gain0.max(gain1);
        (kappa, kappa)
    } else {
        (gain0, 0.0)
    };
    let eta0 = cert.rho0
        + m * (delta_in * norms.b_in0.value * r + delta_out * norms.b_out0.value * out_gain);
    let eta1 = if strategy.is_simultaneous() {
        m * norms.a1.value
    } else {
        m * (norms.a1.value + delta_in * norms.b_plant.value * r)
    };
    Ok(RateConstants {
        strategy,
        eta0,
        eta1,
        kappa,
        m,
        delta_in,
        delta_out,
        in_gain: r,
        out_gain,
    })
}

/// Largest admissible loss fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NuBound {
    Feasible(f64),
    /// `η₀ ≥ 1`: the zoom grows even without loss.
    Infeasible {
        eta0: f64,
    },
}

impl NuBound {
    pub fn value(self) -> Option<f64> {
        match self {
            NuBound::Feasible(v) => Some(v),
            NuBound::Infeasible { .. } => None,
        }
    }
}

/// `min(1, log(1/η₀)/log(η₁/η₀))` when `η₀ < 1`. If `η₁ ≤ η₀` losses never
/// slow the zoom down and the bound is 1.
pub fn nu_bound(rc: &RateConstants) -> NuBound {
    if !(rc.eta0 < 1.0) {
        return NuBound::Infeasible { eta0: rc.eta0 };
    }
    if rc.eta1 <= rc.eta0 {
        return NuBound::Feasible(1.0);
    }
    NuBound::Feasible(((1.0 / rc.eta0).ln() / (rc.eta1 / rc.eta0).ln()).min(1.0))
}

/// One cell of a quantizer-resolution sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuMapCell {
    pub levels_in: u64,
    pub levels_out: u64,
    pub eta0: f64,
    pub eta1: f64,
    /// `None` where `η₀ ≥ 1`.
    pub nu_bound: Option<f64>,
}

/// Rate constants and loss bound over every pair of input and output
/// levels, row-major in `levels_in`. The certificate is reused for all cells;
/// each level count is turned into [`UniformQuantizer::norm_delta`].
pub fn nu_map(
    cert: &Certification,
    levels_in: &[u64],
    levels_out: &[u64],
) -> Result<Vec<NuMapCell>> {
    let cells: Vec<(u64, u64)> = levels_in
        .iter()
        .flat_map(|&a| levels_out.iter().map(move |&b| (a, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(l_in, l_out)| {
            let q_in = UniformQuantizer::new(l_in, cert.norms.inputs)?;
            let q_out = UniformQuantizer::new(l_out, cert.norms.outputs)?;
            let rc = rate_constants(
                &cert.norms,
                &cert.certificate,
                q_in.norm_delta(),
                q_out.norm_delta(),
            )?;
            Ok(NuMapCell {
                levels_in: l_in,
                levels_out: l_out,
                eta0: rc.eta0,
                eta1: rc.eta1,
                nu_bound: nu_bound(&rc).value(),
            })
        })
        .collect()
}
