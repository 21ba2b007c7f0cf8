//! Riesz-spectral plants described by coefficient data, their truncations
//! and the sampled-data discretization (zero-order hold plus generalized
//! sampler), including the feedthrough series of the discretized plant.
//!
//! All matrices live in the coordinates of the Riesz basis: coordinate `n`
//! of a state is its coefficient against the `n`-th biorthogonal vector.
//! The generator is diagonal in these coordinates, so a non-orthonormal
//! basis only shows up through the optional Gram matrix consumed by the
//! operator norms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `|z|` below which `(e^z - 1)/z` is evaluated by its three-term series.
pub const VARPI_SERIES_SWITCH: f64 = 1e-8;
/// `|z|` below which `(e^z - 1 - z)/z^2` is evaluated by its Taylor series.
const PHI2_SERIES_SWITCH: f64 = 0.1;

/// Consecutive negligible terms after which the feedthrough series is cut
/// when no rigorous tail bound is available.
pub const HEURISTIC_RUN: usize = 50;

/// One spectral mode: eigenvalue `λ_n`, input row `B_{n·}` and output
/// column `C_{·n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub lambda: Complex64,
    pub input: Vec<Complex64>,
    pub output: Vec<Complex64>,
}

impl Mode {
    pub fn new(lambda: Complex64, input: Vec<Complex64>, output: Vec<Complex64>) -> Self {
        Mode {
            lambda,
            input,
            output,
        }
    }

    /// Real single-input single-output mode.
    pub fn siso(lambda: f64, b: f64, c: f64) -> Self {
        Mode::new(lambda.into(), vec![b.into()], vec![c.into()])
    }
}

/// Growth exponents `(β, γ)` declared for the coefficient sums
/// `Σ |B_nℓ|²/(1+|λ_n|^{2β})` and `Σ |C_jn|²/(1+|λ_n|^{2γ})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthExponents {
    beta: f64,
    gamma: f64,
}

impl GrowthExponents {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta >= 0.0 && gamma >= 0.0 && beta + gamma <= 1.0) {
            return Err(Error::Validation(format!(
                "growth exponents need beta, gamma >= 0 and beta + gamma <= 1, got ({beta}, {gamma})"
            )));
        }
        Ok(GrowthExponents { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Upper bounds on quantities over the modes with index `> n` (1-based),
/// used to bound the tail of the feedthrough series.
#[derive(Clone, Debug, PartialEq)]
pub struct TailEstimate {
    /// Lower bound on `|λ_k|` for every `k > n`.
    pub min_abs_lambda: f64,
    /// Upper bound on `Re λ_k` over all modes.
    pub sup_re_lambda: f64,
    /// Per input channel: bound on `Σ_{k>n} |B_kℓ|² / |λ_k|^{2β}`.
    pub input_sums: Vec<f64>,
    /// Per output channel: bound on `Σ_{k>n} |C_jk|² / |λ_k|^{2γ}`.
    pub output_sums: Vec<f64>,
}

type ModeRule = Arc<dyn Fn(usize) -> Mode + Send + Sync>;
type TailRule = Arc<dyn Fn(usize, GrowthExponents) -> TailEstimate + Send + Sync>;
type GramRule = Arc<dyn Fn(usize, usize) -> Complex64 + Send + Sync>;

#[derive(Clone)]
enum Modes {
    Finite(Vec<Mode>),
    Rule(ModeRule),
}

#[derive(Clone)]
enum Gram {
    Matrix(CMatrix),
    Rule(GramRule),
}

/// A plant given by its spectral data.
#[derive(Clone)]
pub struct SpectralSystem {
    name: String,
    modes: Modes,
    inputs: usize,
    outputs: usize,
    feedthrough: CMatrix,
    gram: Option<Gram>,
    exponents: Option<GrowthExponents>,
    tail: Option<TailRule>,
}

impl fmt::Debug for SpectralSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSystem")
            .field("name", &self.name)
            .field("modes", &self.available_modes())
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .field("gram", &self.gram.is_some())
            .field("exponents", &self.exponents)
            .finish()
    }
}

impl SpectralSystem {
    /// System with an explicit finite list of modes.
    pub fn finite(modes: Vec<Mode>, inputs: usize, outputs: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Validation("a system needs at least one mode".into()));
        }
        check_channels(inputs, outputs)?;
        for (n, mode) in modes.iter().enumerate() {
            check_mode(n, mode, inputs, outputs)?;
        }
        Ok(SpectralSystem {
            name: "explicit".into(),
            modes: Modes::Finite(modes),
            inputs,
            outputs,
            feedthrough: CMatrix::zeros(outputs, inputs),
            gram: None,
            exponents: None,
            tail: None,
        })
    }

    /// System whose modes are generated on demand; `rule(n)` returns the
    /// mode with 0-based index `n`.
    pub fn from_rule<F>(inputs: usize, outputs: usize, rule: F) -> Result<Self>
    where
        F: Fn(usize) -> Mode + Send + Sync + 'static,
    {
        check_channels(inputs, outputs)?;
        check_mode(0, &rule(0), inputs, outputs)?;
        Ok(SpectralSystem {
            name: "rule".into(),
            modes: Modes::Rule(Arc::new(rule)),
            inputs,
            outputs,
            feedthrough: CMatrix::zeros(outputs, inputs),
            gram: None,
            exponents: None,
            tail: None,
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_feedthrough(mut self, d: CMatrix) -> Result<Self> {
        if d.shape() != (self.outputs, self.inputs) {
            return Err(Error::Validation(format!(
                "feedthrough must be {}x{}, got {}x{}",
                self.outputs,
                self.inputs,
                d.nrows(),
                d.ncols()
            )));
        }
        self.feedthrough = d;
        Ok(self)
    }

    /// Gram matrix `⟨φ_i, φ_j⟩` of the basis; the leading `N×N` block is
    /// used at truncation order `N`.
    pub fn with_gram(mut self, gram: CMatrix) -> Result<Self> {
        if !gram.is_square() {
            return Err(Error::Validation("Gram matrix must be square".into()));
        }
        if let Some(n) = self.available_modes() {
            if gram.nrows() < n {
                return Err(Error::Validation(format!(
                    "Gram matrix is {0}x{0} but the system has {n} modes",
                    gram.nrows()
                )));
            }
        }
        self.gram = Some(Gram::Matrix(gram));
        Ok(self)
    }

    pub fn with_gram_rule<F>(mut self, rule: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Send + Sync + 'static,
    {
        self.gram = Some(Gram::Rule(Arc::new(rule)));
        self
    }

    pub fn with_exponents(mut self, exponents: GrowthExponents) -> Self {
        self.exponents = Some(exponents);
        self
    }

    /// Closed-form bounds on the mode tail, enabling the rigorous stopping
    /// rule of the feedthrough series.
    pub fn with_tail_bound<F>(mut self, tail: F) -> Self
    where
        F: Fn(usize, GrowthExponents) -> TailEstimate + Send + Sync + 'static,
    {
        self.tail = Some(Arc::new(tail));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn feedthrough(&self) -> &CMatrix {
        &self.feedthrough
    }

    pub fn exponents(&self) -> Option<GrowthExponents> {
        self.exponents
    }

    pub fn has_gram(&self) -> bool {
        self.gram.is_some()
    }

    /// Number of modes, or `None` when the rule is unbounded.
    pub fn available_modes(&self) -> Option<usize> {
        match &self.modes {
            Modes::Finite(list) => Some(list.len()),
            Modes::Rule(_) => None,
        }
    }

    /// Mode with 0-based index `n`.
    pub fn mode(&self, n: usize) -> Result<Mode> {
        match &self.modes {
            Modes::Finite(list) => list.get(n).cloned().ok_or(Error::Capacity {
                requested: n + 1,
                available: list.len(),
            }),
            Modes::Rule(rule) => Ok(rule(n)),
        }
    }

    fn ensure_capacity(&self, order: usize) -> Result<()> {
        if order == 0 {
            return Err(Error::Validation(
                "truncation order must be positive".into(),
            ));
        }
        match self.available_modes() {
            Some(available) if order > available => Err(Error::Capacity {
                requested: order,
                available,
            }),
            _ => Ok(()),
        }
    }

    /// Leading `order×order` block of the Gram matrix, if the basis is not
    /// declared orthonormal.
    pub fn gram(&self, order: usize) -> Result<Option<CMatrix>> {
        match &self.gram {
            None => Ok(None),
            Some(Gram::Matrix(g)) => {
                if order > g.nrows() {
                    return Err(Error::Capacity {
                        requested: order,
                        available: g.nrows(),
                    });
                }
                Ok(Some(g.view((0, 0), (order, order)).into_owned()))
            }
            Some(Gram::Rule(rule)) => Ok(Some(CMatrix::from_fn(order, order, |i, j| rule(i, j)))),
        }
    }

    /// Checks the standing conditions over the first `order` modes.
    ///
    /// Only a finite prefix can be inspected, so `liminf |λ_n| > 0` is
    /// reported as the smallest `|λ_n|` over the second half of the prefix.
    pub fn check_prefix(&self, order: usize) -> Result<PrefixReport> {
        self.ensure_capacity(order)?;
        let beta = self.exponents.map_or(0.0, |e| e.beta);
        let gamma = self.exponents.map_or(0.0, |e| e.gamma);
        let mut input_sums = vec![0.0; self.inputs];
        let mut output_sums = vec![0.0; self.outputs];
        let mut sup_re = f64::NEG_INFINITY;
        let mut tail_min_abs = f64::INFINITY;
        let mut sums_monotone = true;
        for n in 0..order {
            let mode = self.mode(n)?;
            let lam = mode.lambda.norm();
            sup_re = sup_re.max(mode.lambda.re);
            if n >= order / 2 {
                tail_min_abs = tail_min_abs.min(lam);
            }
            for (sum, b) in input_sums.iter_mut().zip(&mode.input) {
                let next = *sum + b.norm_sqr() / (1.0 + lam.powf(2.0 * beta));
                sums_monotone &= next.is_finite() && next >= *sum;
                *sum = next;
            }
            for (sum, c) in output_sums.iter_mut().zip(&mode.output) {
                let next = *sum + c.norm_sqr() / (1.0 + lam.powf(2.0 * gamma));
                sums_monotone &= next.is_finite() && next >= *sum;
                *sum = next;
            }
        }
        if !sup_re.is_finite() {
            return Err(Error::Validation("eigenvalues must be finite".into()));
        }
        Ok(PrefixReport {
            order,
            sup_re_lambda: sup_re,
            tail_min_abs_lambda: tail_min_abs,
            input_sums,
            output_sums,
            sums_monotone,
        })
    }
}

fn check_channels(inputs: usize, outputs: usize) -> Result<()> {
    if inputs == 0 || outputs == 0 {
        return Err(Error::Validation(
            "need at least one input and one output".into(),
        ));
    }
    Ok(())
}

fn check_mode(n: usize, mode: &Mode, inputs: usize, outputs: usize) -> Result<()> {
    if mode.input.len() != inputs || mode.output.len() != outputs {
        return Err(Error::Validation(format!(
            "mode {} has {} input and {} output coefficients, expected {inputs} and {outputs}",
            n + 1,
            mode.input.len(),
            mode.output.len()
        )));
    }
    let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
    if !finite(&mode.lambda) || !mode.input.iter().all(finite) || !mode.output.iter().all(finite) {
        return Err(Error::Validation(format!(
            "mode {} has non-finite data",
            n + 1
        )));
    }
    Ok(())
}

/// Result of [`SpectralSystem::check_prefix`].
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixReport {
    pub order: usize,
    pub sup_re_lambda: f64,
    pub tail_min_abs_lambda: f64,
    pub input_sums: Vec<f64>,
    pub output_sums: Vec<f64>,
    pub sums_monotone: bool,
}

/// Continuous-time truncation `(A_N, B_N, C_N)` in basis coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedPlant {
    pub order: usize,
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
}

/// Keeps the first `order` modes.
pub fn truncate(sys: &SpectralSystem, order: usize) -> Result<TruncatedPlant> {
    sys.ensure_capacity(order)?;
    let mut a = CMatrix::zeros(order, order);
    let mut b = CMatrix::zeros(order, sys.inputs);
    let mut c = CMatrix::zeros(sys.outputs, order);
    for n in 0..order {
        let mode = sys.mode(n)?;
        a[(n, n)] = mode.lambda;
        for (l, v) in mode.input.iter().enumerate() {
            b[(n, l)] = *v;
        }
        for (j, v) in mode.output.iter().enumerate() {
            c[(j, n)] = *v;
        }
    }
    Ok(TruncatedPlant { order, a, b, c })
}

fn expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

/// `(e^z - 1)/z`, continuous at `z = 0`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < VARPI_SERIES_SWITCH {
        ONE + z / 2.0 + z * z / 6.0
    } else {
        expm1(z) / z
    }
}

/// `(e^z - 1 - z)/z²`, continuous at `z = 0`.
pub fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < PHI2_SERIES_SWITCH {
        // 1/2! + z/3! + z²/4! + ...; 14 terms reach round-off for |z| < 0.1.
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for k in 3..17 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        (expm1(z) - z) / (z * z)
    }
}

/// `ϖ(t) = ∫₀ᵗ e^{sλ} ds`.
///
/// For `|λ|t < 1e-8` the series `t + λt²/2 + λ²t³/6` is used.
pub fn varpi(lambda: Complex64, t: f64) -> Complex64 {
    t * phi1(lambda * t)
}

/// Sampler weight `w` on `[0, τ]`.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerWeight {
    /// `w(t) ≡ 1/τ`: the sampler averages the output over each period.
    Average,
    /// Nodal values on a grid covering `[0, τ]`, linear between nodes.
    Tabulated { nodes: Vec<f64>, values: Vec<f64> },
}

/// Sampling period, sampler weight and the controls for the feedthrough
/// series.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizationConfig {
    pub tau: f64,
    pub weight: SamplerWeight,
    /// Absolute tolerance for the feedthrough series.
    pub feedthrough_tol: f64,
    /// Largest number of modes summed in the feedthrough series.
    pub mode_cap: usize,
    /// Allowed relative change of `∫w` between the tabulation grid and its
    /// every-other-node subgrid.
    pub quad_tol: f64,
}

impl DiscretizationConfig {
    pub fn new(tau: f64) -> Self {
        DiscretizationConfig {
            tau,
            weight: SamplerWeight::Average,
            feedthrough_tol: 1e-10,
            mode_cap: 4_000_000,
            quad_tol: 1e-6,
        }
    }

    pub fn with_weight(mut self, weight: SamplerWeight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_feedthrough_tol(mut self, tol: f64) -> Self {
        self.feedthrough_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Domain {
                what: "sampling period",
                domain: "(0, inf)",
                value: self.tau,
            });
        }
        if !(self.feedthrough_tol > 0.0) {
            return Err(Error::Domain {
                what: "feedthrough tolerance",
                domain: "(0, inf)",
                value: self.feedthrough_tol,
            });
        }
        if let SamplerWeight::Tabulated { nodes, values } = &self.weight {
            if nodes.len() < 2 || nodes.len() != values.len() {
                return Err(Error::Validation(
                    "tabulated weight needs at least 2 nodes and one value per node".into(),
                ));
            }
            let span_tol = 1e-12 * self.tau;
            let first = nodes[0];
            let last = nodes[nodes.len() - 1];
            if first.abs() > span_tol || (last - self.tau).abs() > span_tol {
                return Err(Error::Validation(format!(
                    "weight grid must cover [0, {}], got [{first}, {last}]",
                    self.tau
                )));
            }
            if nodes.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Validation(
                    "weight grid must be strictly increasing".into(),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("weight values must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Integrals of the sampler weight against the modal functions of one
/// eigenvalue.
#[derive(Clone, Copy, Debug)]
struct ModalWeights {
    /// `∫₀^τ w(t) e^{λt} dt`
    output: Complex64,
    /// `∫₀^τ w(t) ϖ(t) dt`
    feedthrough: Complex64,
}

/// Five-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

struct WeightRule {
    tau: f64,
    tabulated: Option<(Vec<f64>, Vec<f64>)>,
    total: f64,
    abs_total: f64,
}

impl WeightRule {
    fn new(cfg: &DiscretizationConfig) -> Result<Self> {
        cfg.validate()?;
        match &cfg.weight {
            SamplerWeight::Average => Ok(WeightRule {
                tau: cfg.tau,
                tabulated: None,
                total: 1.0,
                abs_total: 1.0,
            }),
            SamplerWeight::Tabulated { nodes, values } => {
                let trapezoid = |idx: &[usize]| -> f64 {
                    idx.windows(2)
                        .map(|w| 0.5 * (nodes[w[1]] - nodes[w[0]]) * (values[w[0]] + values[w[1]]))
                        .sum()
                };
                let all: Vec<usize> = (0..nodes.len()).collect();
                let total = trapezoid(&all);
                if nodes.len() >= 3 {
                    let mut coarse: Vec<usize> = (0..nodes.len()).step_by(2).collect();
                    if *coarse.last().unwrap() != nodes.len() - 1 {
                        coarse.push(nodes.len() - 1);
                    }
                    let residual = (total - trapezoid(&coarse)).abs() / total.abs().max(1.0);
                    if residual > cfg.quad_tol {
                        return Err(Error::Integration {
                            residual,
                            tol: cfg.quad_tol,
                        });
                    }
                }
                let abs_total = nodes
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(t, w)| (t[1] - t[0]) * w[0].abs().max(w[1].abs()))
                    .sum();
                Ok(WeightRule {
                    tau: cfg.tau,
                    tabulated: Some((nodes.clone(), values.clone())),
                    total,
                    abs_total,
                })
            }
        }
    }

    fn modal(&self, lambda: Complex64) -> ModalWeights {
        let Some((nodes, values)) = &self.tabulated else {
            let z = lambda * self.tau;
            return ModalWeights {
                output: phi1(z),
                feedthrough: self.tau * phi2(z),
            };
        };
        // Product integration: w is linear on each cell, the exponential is
        // integrated exactly.
        let mut output = ZERO;
        for (t, w) in nodes.windows(2).zip(values.windows(2)) {
            // For decaying modes the rest of the grid is bounded by
            // e^{Re λ t₀}·∫|w|; stop once that is below round-off.
            if lambda.re < 0.0 && (lambda.re * t[0]).exp() * self.abs_total <= 1e-18 * output.norm()
            {
                break;
            }
            let h = t[1] - t[0];
            let z = lambda * h;
            let p1 = phi1(z);
            let p2 = phi2(z);
            output += (lambda * t[0]).exp() * h * (w[0] * p2 + w[1] * (p1 - p2));
        }
        let feedthrough = if lambda.norm() * self.tau >= 1.0 {
            (output - self.total) / lambda
        } else {
            let mut acc = ZERO;
            for (t, w) in nodes.windows(2).zip(values.windows(2)) {
                let half = 0.5 * (t[1] - t[0]);
                let mid = 0.5 * (t[1] + t[0]);
                for &(x, gw) in &GAUSS5 {
                    let s = mid + half * x;
                    let ws = w[0] + (w[1] - w[0]) * (s - t[0]) / (t[1] - t[0]);
                    acc += gw * half * ws * varpi(lambda, s);
                }
            }
            acc
        };
        ModalWeights {
            output,
            feedthrough,
        }
    }
}

/// How the feedthrough series was terminated.
#[derive(Clone, Debug, PartialEq)]
pub enum SeriesStop {
    /// Every mode of a finite system was summed.
    Exhausted,
    /// The Cauchy–Schwarz tail bound fell below the tolerance.
    TailBound { bound: f64 },
    /// `HEURISTIC_RUN` consecutive terms were below `tol/100`; the tail
    /// bound at that point is reported when one is available.
    Heuristic { tail_bound: Option<f64> },
}

/// Feedthrough matrix `D_τ` together with how the series was cut.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedthrough {
    pub matrix: CMatrix,
    pub modes_used: usize,
    pub stop: SeriesStop,
}

impl Feedthrough {
    pub fn is_heuristic(&self) -> bool {
        matches!(self.stop, SeriesStop::Heuristic { .. })
    }
}

fn tail_bound(sys: &SpectralSystem, rule: &WeightRule, summed: usize) -> Option<f64> {
    let exponents = sys.exponents?;
    let tail = sys.tail.as_ref()?(summed, exponents);
    if !(tail.min_abs_lambda > 0.0) {
        return None;
    }
    let kappa = 1f64.max((rule.tau * tail.sup_re_lambda).exp());
    let scale = rule.abs_total * (1.0 + kappa)
        / tail
            .min_abs_lambda
            .powf(1.0 - exponents.beta - exponents.gamma);
    let worst = tail
        .output_sums
        .iter()
        .flat_map(|c| tail.input_sums.iter().map(move |b| (c * b).sqrt()))
        .fold(0.0, f64::max);
    Some(scale * worst)
}

/// Feedthrough matrix of the discretized plant,
/// `(D_τ)_{jℓ} = Σ_n C_jn B_nℓ ∫₀^τ w ϖ_n + D_jℓ ∫₀^τ w`, summed over all
/// modes of the system until the tail is below `tol`.
///
/// With declared exponents and a closed-form tail estimate the rigorous
/// Cauchy–Schwarz bound is checked every 64 modes; independently the sum
/// stops once [`HEURISTIC_RUN`] consecutive terms are all below `tol/100`,
/// and the result is then flagged as heuristic.
pub fn feedthrough(
    sys: &SpectralSystem,
    cfg: &DiscretizationConfig,
    tol: f64,
) -> Result<Feedthrough> {
    let rule = WeightRule::new(cfg)?;
    feedthrough_with(sys, &rule, tol, cfg.mode_cap)
}

fn feedthrough_with(
    sys: &SpectralSystem,
    rule: &WeightRule,
    tol: f64,
    cap: usize,
) -> Result<Feedthrough> {
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "feedthrough tolerance",
            domain: "(0, inf)",
            value: tol,
        });
    }
    let mut d = sys.feedthrough.map(|v| v * rule.total);
    let mut quiet = 0usize;
    let mut n = 0usize;
    loop {
        if sys.available_modes() == Some(n) {
            return Ok(Feedthrough {
                matrix: d,
                modes_used: n,
                stop: SeriesStop::Exhausted,
            });
        }
        if n.is_multiple_of(64) && n > 0 {
            if let Some(bound) = tail_bound(sys, rule, n) {
                if bound <= tol {
                    return Ok(Feedthrough {
                        matrix: d,
                        modes_used: n,
                        stop: SeriesStop::TailBound { bound },
                    });
                }
            }
        }
        if n >= cap {
            return Err(Error::SeriesTruncation {
                cap,
                partial: d.norm(),
            });
        }
        let mode = sys.mode(n)?;
        let weight = rule.modal(mode.lambda).feedthrough;
        let mut largest = 0f64;
        for (j, c) in mode.output.iter().enumerate() {
            for (l, b) in mode.input.iter().enumerate() {
                let term = c * b * weight;
                largest = largest.max(term.norm());
                d[(j, l)] += term;
            }
        }
        n += 1;
        if largest < tol / 100.0 {
            quiet += 1;
            if quiet >= HEURISTIC_RUN {
                return Ok(Feedthrough {
                    matrix: d,
                    modes_used: n,
                    stop: SeriesStop::Heuristic {
                        tail_bound: tail_bound(sys, rule, n),
                    },
                });
            }
        } else {
            quiet = 0;
        }
    }
}

/// Discretized plant `(A_τ, B_τ, C_τ, D_τ)` truncated to `order` modes.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedPlant {
    pub order: usize,
    pub tau: f64,
    pub a_tau: CMatrix,
    pub b_tau: CMatrix,
    pub c_tau: CMatrix,
    pub d_tau: CMatrix,
    /// Eigenvalues of the retained modes.
    pub lambdas: Vec<Complex64>,
    /// Continuous-time input coefficients `B_N`.
    pub b_cont: CMatrix,
    /// Leading block of the basis Gram matrix, absent for orthonormal bases.
    pub gram: Option<CMatrix>,
}

impl DiscretizedPlant {
    pub fn inputs(&self) -> usize {
        self.b_tau.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c_tau.nrows()
    }
}

/// A system paired with a sampler; the feedthrough series is summed once
/// and shared by all truncation orders.
#[derive(Clone, Debug)]
pub struct Discretization {
    system: SpectralSystem,
    cfg: DiscretizationConfig,
    feedthrough: Feedthrough,
}

impl Discretization {
    pub fn new(system: &SpectralSystem, cfg: &DiscretizationConfig) -> Result<Self> {
        let rule = WeightRule::new(cfg)?;
        let feedthrough = feedthrough_with(system, &rule, cfg.feedthrough_tol, cfg.mode_cap)?;
        Ok(Discretization {
            system: system.clone(),
            cfg: cfg.clone(),
            feedthrough,
        })
    }

    pub fn system(&self) -> &SpectralSystem {
        &self.system
    }

    pub fn config(&self) -> &DiscretizationConfig {
        &self.cfg
    }

    pub fn feedthrough(&self) -> &Feedthrough {
        &self.feedthrough
    }

    /// Discretized plant at truncation order `order`.
    pub fn plant(&self, order: usize) -> Result<DiscretizedPlant> {
        let rule = WeightRule::new(&self.cfg)?;
        let trunc = truncate(&self.system, order)?;
        let tau = self.cfg.tau;
        let lambdas: Vec<Complex64> = (0..order).map(|n| trunc.a[(n, n)]).collect();
        let mut a_tau = CMatrix::zeros(order, order);
        let mut b_tau = trunc.b.clone();
        let mut c_tau = trunc.c.clone();
        for (n, &lambda) in lambdas.iter().enumerate() {
            a_tau[(n, n)] = (lambda * tau).exp();
            let w = varpi(lambda, tau);
            b_tau.row_mut(n).iter_mut().for_each(|v| *v *= w);
            let out = rule.modal(lambda).output;
            c_tau.column_mut(n).iter_mut().for_each(|v| *v *= out);
        }
        Ok(DiscretizedPlant {
            order,
            tau,
            a_tau,
            b_tau,
            c_tau,
            d_tau: self.feedthrough.matrix.clone(),
            lambdas,
            b_cont: trunc.b,
            gram: self.system.gram(order)?,
        })
    }
}

/// Discretizes `sys` at order `order`.
pub fn discretize(
    sys: &SpectralSystem,
    order: usize,
    cfg: &DiscretizationConfig,
) -> Result<DiscretizedPlant> {
    Discretization::new(sys, cfg)?.plant(order)
}

/// Plant state at time `kτ + t` for `t ∈ [0, τ)` given the sampled state
/// `x_k` and the input held over the period.
pub fn intersample_state(
    plant: &DiscretizedPlant,
    x_k: &CVector,
    input: &CVector,
    t: f64,
) -> Result<CVector> {
    if !(0.0..plant.tau).contains(&t) {
        return Err(Error::Domain {
            what: "inter-sample time",
            domain: "[0, tau)",
            value: t,
        });
    }
    if x_k.len() != plant.order || input.len() != plant.inputs() {
        return Err(Error::Validation(format!(
            "inter-sample state expects a {}-vector and a {}-vector",
            plant.order,
            plant.inputs()
        )));
    }
    let forced = &plant.b_cont * input;
    Ok(CVector::from_fn(plant.order, |n, _| {
        let lambda = plant.lambdas[n];
        (lambda * t).exp() * x_k[n] + varpi(lambda, t) * forced[n]
    }))
}
