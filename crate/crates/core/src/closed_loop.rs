//! Closed-loop operators for the four compensation strategies, the
//! quantized and lossy simulation, and the check of the convergence
//! guarantees on a finished trace.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::loss::LossSchedule;
use crate::norms::RateConstants;
use crate::quantizer::{UniformQuantizer, ZoomState};
use crate::spectral::{intersample_state, CMatrix, CVector, DiscretizedPlant};

/// Finite-dimensional controller `x_c⁺ = P_θ x_c + (1−θ) Q q_out`,
/// `u = R x_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    p1: DMatrix<f64>,
}

impl Controller {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if !p.is_square() || n == 0 {
            return Err(Error::Validation(
                "P must be a non-empty square matrix".into(),
            ));
        }
        if q.nrows() != n || q.ncols() == 0 {
            return Err(Error::Validation(format!(
                "Q must have {n} rows, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if r.ncols() != n || r.nrows() == 0 {
            return Err(Error::Validation(format!(
                "R must have {n} columns, got {}x{}",
                r.nrows(),
                r.ncols()
            )));
        }
        if [&p, &q, &r]
            .iter()
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(
                "controller entries must be finite".into(),
            ));
        }
        Ok(Controller {
            p1: p.clone(),
            p,
            q,
            r,
        })
    }

    /// Scalar controller with `P₁ = P`.
    pub fn scalar(p: f64, q: f64, r: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Controller::new(m(p), m(q), m(r)).expect("scalar controller is well formed")
    }

    /// Dynamics used while the output packet is lost (zero compensation).
    pub fn with_p1(mut self, p1: DMatrix<f64>) -> Result<Self> {
        if p1.shape() != self.p.shape() {
            return Err(Error::Validation("P1 must have the shape of P".into()));
        }
        self.p1 = p1;
        Ok(self)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    pub fn order(&self) -> usize {
        self.p.nrows()
    }

    /// Plant inputs driven by the controller.
    pub fn inputs(&self) -> usize {
        self.r.nrows()
    }

    /// Plant outputs read by the controller.
    pub fn outputs(&self) -> usize {
        self.q.ncols()
    }
}

/// What the receivers substitute for a lost packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Lost sensor packets are replaced by zero.
    Zero,
    /// The controller holds the last received output.
    Hold,
    /// Both channels drop together; zeros are substituted.
    SimultaneousZero,
    /// Both channels drop together; both receivers hold.
    SimultaneousHold,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Zero,
        Strategy::Hold,
        Strategy::SimultaneousZero,
        Strategy::SimultaneousHold,
    ];

    pub fn is_hold(self) -> bool {
        matches!(self, Strategy::Hold | Strategy::SimultaneousHold)
    }

    pub fn is_simultaneous(self) -> bool {
        matches!(
            self,
            Strategy::SimultaneousZero | Strategy::SimultaneousHold
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Zero => "zero",
            Strategy::Hold => "hold",
            Strategy::SimultaneousZero => "simultaneous-zero",
            Strategy::SimultaneousHold => "simultaneous-hold",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown strategy '{s}'")))
    }
}

/// Block sizes of the closed-loop state `(x, q̂_in, x_c, q̂_out)`; absent
/// blocks have size zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub plant: usize,
    pub held_input: usize,
    pub controller: usize,
    pub held_output: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.plant + self.held_input + self.controller + self.held_output
    }

    pub fn held_input_offset(&self) -> usize {
        self.plant
    }

    pub fn controller_offset(&self) -> usize {
        self.plant + self.held_input
    }

    pub fn held_output_offset(&self) -> usize {
        self.plant + self.held_input + self.controller
    }
}

/// Operators selected by one value of `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaOperators {
    pub a: CMatrix,
    pub b_in: CMatrix,
    pub b_out: CMatrix,
    pub c_out: CMatrix,
    pub d: CMatrix,
}

/// `z⁺ = 𝒜_θ z + ℬ_in,θ (q_in − u) + ℬ_out,θ (q_out − y)`,
/// `u = 𝒞_in z`, `y = 𝒞_out,θ z + 𝒟_θ (q_in − u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopOperators {
    pub strategy: Strategy,
    pub layout: StateLayout,
    pub c_in: CMatrix,
    /// Indexed by `θ`.
    pub theta: [ThetaOperators; 2],
    /// Gram matrix of the plant coordinates, if not orthonormal.
    pub plant_gram: Option<CMatrix>,
    pub tau: f64,
}

impl ClosedLoopOperators {
    pub fn at(&self, lost: bool) -> &ThetaOperators {
        &self.theta[lost as usize]
    }

    /// Gram matrix of the product norm on the closed-loop state.
    pub fn state_gram(&self) -> Option<CMatrix> {
        self.plant_gram.as_ref().map(|g| {
            let n = self.layout.plant;
            let mut out = CMatrix::identity(self.layout.dim(), self.layout.dim());
            out.view_mut((0, 0), (n, n)).copy_from(g);
            out
        })
    }

    /// `‖z‖_Z`, the 2-norm combination of the block norms.
    pub fn state_norm(&self, z: &CVector) -> f64 {
        match &self.plant_gram {
            None => z.norm(),
            Some(g) => {
                let n = self.layout.plant;
                let x = z.rows(0, n);
                let plant = (x.adjoint() * g * x)[(0, 0)].re.max(0.0);
                let rest = z.rows(n, z.len() - n).norm_squared();
                (plant + rest).sqrt()
            }
        }
    }
}

fn cx(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

fn put(target: &mut CMatrix, r0: usize, c0: usize, block: &CMatrix) {
    target.view_mut((r0, c0), block.shape()).copy_from(block);
}

/// Builds the closed-loop block operators of `strategy`.
pub fn assemble(
    plant: &DiscretizedPlant,
    ctrl: &Controller,
    strategy: Strategy,
) -> Result<ClosedLoopOperators> {
    let (m, p) = (plant.inputs(), plant.outputs());
    if ctrl.inputs() != m {
        return Err(Error::Validation(format!(
            "block B·R: R has {} rows but the plant has {m} inputs",
            ctrl.inputs()
        )));
    }
    if ctrl.outputs() != p {
        return Err(Error::Validation(format!(
            "block Q·C: Q has {} columns but the plant has {p} outputs",
            ctrl.outputs()
        )));
    }
    if plant.d_tau.shape() != (p, m) {
        return Err(Error::Validation(
            "block Q·D: feedthrough shape does not match the plant".into(),
        ));
    }
    let (a, b, c, d) = (&plant.a_tau, &plant.b_tau, &plant.c_tau, &plant.d_tau);
    let (pm, q, r, p1) = (cx(ctrl.p()), cx(ctrl.q()), cx(ctrl.r()), cx(ctrl.p1()));
    let n = plant.order;
    let nc = ctrl.order();
    let held = strategy.is_hold();
    let layout = StateLayout {
        plant: n,
        held_input: if strategy == Strategy::SimultaneousHold {
            m
        } else {
            0
        },
        controller: nc,
        held_output: if held { p } else { 0 },
    };
    let (oi, oc, oo) = (
        layout.held_input_offset(),
        layout.controller_offset(),
        layout.held_output_offset(),
    );
    let dim = layout.dim();
    let br = b * &r;
    let qc = &q * c;
    let qd = &q * d;
    let dr = d * &r;
    let qdr = &q * &dr;

    let mut c_in = CMatrix::zeros(m, dim);
    put(&mut c_in, 0, oc, &r);

    let build = |lost: bool| -> ThetaOperators {
        let theta = Complex64::from(lost as u8 as f64);
        let s = Complex64::from(1.0) - theta;
        let mut a_t = CMatrix::zeros(dim, dim);
        let mut b_in = CMatrix::zeros(dim, m);
        let mut b_out = CMatrix::zeros(dim, p);
        let mut c_out = CMatrix::zeros(p, dim);
        put(&mut a_t, 0, 0, a);
        put(&mut c_out, 0, 0, c);
        let p_theta = if lost && !held { &p1 } else { &pm };
        put(&mut a_t, oc, oc, &(p_theta + &qdr * s));
        put(&mut a_t, oc, 0, &(&qc * s));
        put(&mut b_out, oc, 0, &(&q * s));
        let d_theta = match strategy {
            Strategy::Zero | Strategy::Hold => d.clone(),
            _ => d * s,
        };
        match strategy {
            Strategy::Zero => {
                put(&mut a_t, 0, oc, &br);
                put(&mut b_in, 0, 0, b);
                put(&mut b_in, oc, 0, &(&qd * s));
                put(&mut c_out, 0, oc, &dr);
            }
            Strategy::Hold => {
                put(&mut a_t, 0, oc, &br);
                put(&mut a_t, oc, oo, &(&q * theta));
                put(&mut a_t, oo, 0, &(c * s));
                put(&mut a_t, oo, oc, &(&dr * s));
                put(&mut a_t, oo, oo, &(CMatrix::identity(p, p) * theta));
                put(&mut b_in, 0, 0, b);
                put(&mut b_in, oc, 0, &(&qd * s));
                put(&mut b_in, oo, 0, &(d * s));
                put(&mut b_out, oo, 0, &(CMatrix::identity(p, p) * s));
                put(&mut c_out, 0, oc, &dr);
            }
            Strategy::SimultaneousZero => {
                put(&mut a_t, 0, oc, &(&br * s));
                put(&mut b_in, 0, 0, &(b * s));
                put(&mut b_in, oc, 0, &(&qd * s));
                put(&mut c_out, 0, oc, &(&dr * s));
            }
            Strategy::SimultaneousHold => {
                put(&mut a_t, 0, oi, &(b * theta));
                put(&mut a_t, 0, oc, &(&br * s));
                put(&mut a_t, oi, oi, &(CMatrix::identity(m, m) * theta));
                put(&mut a_t, oi, oc, &(&r * s));
                put(&mut a_t, oc, oo, &(&q * theta));
                put(&mut a_t, oo, 0, &(c * s));
                put(&mut a_t, oo, oc, &(&dr * s));
                put(&mut a_t, oo, oo, &(CMatrix::identity(p, p) * theta));
                put(&mut b_in, 0, 0, &(b * s));
                put(&mut b_in, oi, 0, &(CMatrix::identity(m, m) * s));
                put(&mut b_in, oc, 0, &(&qd * s));
                put(&mut b_in, oo, 0, &(d * s));
                put(&mut b_out, oo, 0, &(CMatrix::identity(p, p) * s));
                put(&mut c_out, 0, oi, &(d * theta));
                put(&mut c_out, 0, oc, &(&dr * s));
            }
        }
        ThetaOperators {
            a: a_t,
            b_in,
            b_out,
            c_out,
            d: d_theta,
        }
    };

    Ok(ClosedLoopOperators {
        strategy,
        layout,
        c_in,
        theta: [build(false), build(true)],
        plant_gram: plant.gram.clone(),
        tau: plant.tau,
    })
}

/// Input and output quantizers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Quantizers {
    pub input: UniformQuantizer,
    pub output: UniformQuantizer,
}

impl Quantizers {
    pub fn new(levels_in: u64, levels_out: u64, inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Quantizers {
            input: UniformQuantizer::new(levels_in, inputs)?,
            output: UniformQuantizer::new(levels_out, outputs)?,
        })
    }
}

/// Signals at one sampling instant.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub lost: bool,
    pub u: Vec<f64>,
    pub q_in: Vec<f64>,
    pub y: Vec<f64>,
    pub q_out: Vec<f64>,
    pub mu: f64,
    pub mu_in: f64,
    pub mu_out: f64,
    pub norm_z: f64,
    pub sat_in: bool,
    pub sat_out: bool,
}

/// Result of advancing the closed loop by one period.
#[derive(Clone, Debug)]
pub struct Step {
    pub z: CVector,
    pub zoom: ZoomState,
    pub record: StepRecord,
    /// Input applied to the plant over the period.
    pub applied_input: CVector,
}

fn real_part(v: &CVector, signal: &'static str, scale: f64) -> Result<Vec<f64>> {
    let imag = v.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    if imag > 1e-8 * scale.max(1.0) {
        return Err(Error::ComplexSignal { signal, imag });
    }
    Ok(v.iter().map(|z| z.re).collect())
}

fn to_cvector(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// One sampling period: quantize `u` and `y`, apply the `θ`-dependent
/// update and advance the zoom parameters.
pub fn step(
    ops: &ClosedLoopOperators,
    zoom: &ZoomState,
    z: &CVector,
    lost: bool,
    quantizers: &Quantizers,
    rc: &RateConstants,
) -> Result<Step> {
    if z.len() != ops.layout.dim() {
        return Err(Error::Validation(format!(
            "state has length {}, layout needs {}",
            z.len(),
            ops.layout.dim()
        )));
    }
    let op = ops.at(lost);
    let norm_z = ops.state_norm(z);
    let u_c = &ops.c_in * z;
    let u = real_part(&u_c, "u", norm_z)?;
    let q_in = quantizers.input.quantize(&u, zoom.mu_in)?;
    let e_in = to_cvector(&q_in.values) - &u_c;
    let y_c = &op.c_out * z + &op.d * &e_in;
    let y = real_part(&y_c, "y", norm_z)?;
    let q_out = quantizers.output.quantize(&y, zoom.mu_out)?;
    let e_out = to_cvector(&q_out.values) - &y_c;
    let next = &op.a * z + &op.b_in * &e_in + &op.b_out * &e_out;

    let q_in_c = to_cvector(&q_in.values);
    let applied_input = match (ops.strategy, lost) {
        (Strategy::SimultaneousZero, true) => CVector::zeros(q_in_c.len()),
        (Strategy::SimultaneousHold, true) => {
            let m = ops.layout.held_input;
            z.rows(ops.layout.held_input_offset(), m).into_owned()
        }
        _ => q_in_c,
    };

    let record = StepRecord {
        k: zoom.k,
        t: zoom.k as f64 * ops.tau,
        lost,
        u,
        q_in: q_in.values,
        y,
        q_out: q_out.values,
        mu: zoom.mu,
        mu_in: zoom.mu_in,
        mu_out: zoom.mu_out,
        norm_z,
        sat_in: q_in.saturated,
        sat_out: q_out.saturated,
    };
    Ok(Step {
        z: next,
        zoom: zoom.step(lost, rc),
        record,
        applied_input,
    })
}

/// Settings of a simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSpec {
    pub horizon: usize,
    pub e0: f64,
    /// Initial closed-loop state; defaults to the first plant coordinate
    /// set to one and everything else zero.
    pub z0: Option<CVector>,
    /// Equispaced inter-sample snapshots per period (0 disables them).
    pub substeps: usize,
    /// Plant coordinates kept in each snapshot.
    pub head: usize,
    /// Additive zoom floor.
    pub floor_delta: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            horizon: 600,
            e0: 1.0,
            z0: None,
            substeps: 10,
            head: 8,
            floor_delta: 0.0,
        }
    }
}

/// Plant coordinates at `kτ + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersampleRecord {
    pub k: usize,
    pub t: f64,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceMeta {
    pub strategy: Strategy,
    pub order: usize,
    pub eta0: f64,
    pub eta1: f64,
    pub xi: f64,
    pub nu: f64,
    pub e0: f64,
    pub generator: String,
    pub seed: Option<u64>,
    /// Whether `‖z(0)‖ ≤ E₀`, the hypothesis of the convergence guarantee.
    pub initial_bound_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
    pub intersample: Vec<IntersampleRecord>,
    pub meta: TraceMeta,
}

impl SimulationTrace {
    pub fn saturations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.sat_in || r.sat_out)
            .count()
    }
}

/// Runs the closed loop over `spec.horizon` periods; the trace has
/// `horizon + 1` records, the last one without a following update.
pub fn simulate(
    plant: &DiscretizedPlant,
    ctrl: &Controller,
    strategy: Strategy,
    quantizers: &Quantizers,
    schedule: &LossSchedule,
    rc: &RateConstants,
    spec: &SimulationSpec,
) -> Result<SimulationTrace> {
    if rc.strategy != strategy {
        return Err(Error::Validation(format!(
            "rate constants are for the {} strategy, simulation uses {strategy}",
            rc.strategy
        )));
    }
    let check = schedule.verify_bound();
    if !check.ok {
        return Err(Error::Validation(format!(
            "loss schedule violates its claimed bound at k = {}",
            check.first_violation.unwrap_or(0)
        )));
    }
    if schedule.horizon() < spec.horizon {
        return Err(Error::Validation(format!(
            "loss schedule covers {} steps, horizon is {}",
            schedule.horizon(),
            spec.horizon
        )));
    }
    let ops = assemble(plant, ctrl, strategy)?;
    let dim = ops.layout.dim();
    let mut z = match &spec.z0 {
        Some(z0) if z0.len() != dim => {
            return Err(Error::Validation(format!(
                "z0 has length {}, state has {dim}",
                z0.len()
            )));
        }
        Some(z0) => z0.clone(),
        None => {
            let mut z0 = CVector::zeros(dim);
            z0[0] = Complex64::new(1.0, 0.0);
            z0
        }
    };
    let mut zoom = ZoomState::init(spec.e0, rc, spec.floor_delta)?;
    let initial_bound_ok = ops.state_norm(&z) <= spec.e0 * (1.0 + 1e-12);
    let head = spec.head.min(plant.order);

    let mut records = Vec::with_capacity(spec.horizon + 1);
    let mut intersample = Vec::new();
    for k in 0..=spec.horizon {
        let lost = k < spec.horizon && schedule.lost(k);
        let next = step(&ops, &zoom, &z, lost, quantizers, rc)?;
        records.push(next.record);
        if k == spec.horizon {
            break;
        }
        if spec.substeps > 0 {
            let x = z.rows(0, plant.order).into_owned();
            for s in 0..spec.substeps {
                let t = plant.tau * s as f64 / spec.substeps as f64;
                let xt = intersample_state(plant, &x, &next.applied_input, t)?;
                intersample.push(IntersampleRecord {
                    k,
                    t: k as f64 * plant.tau + t,
                    coords: xt.iter().take(head).map(|c| c.re).collect(),
                });
            }
        }
        z = next.z;
        zoom = next.zoom;
    }
    Ok(SimulationTrace {
        records,
        intersample,
        meta: TraceMeta {
            strategy,
            order: plant.order,
            eta0: rc.eta0,
            eta1: rc.eta1,
            xi: schedule.xi(),
            nu: schedule.nu(),
            e0: spec.e0,
            generator: schedule.generator().to_string(),
            seed: schedule.seed(),
            initial_bound_ok,
        },
    })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn columns(name: &str, width: usize) -> Vec<String> {
    if width == 1 {
        vec![name.to_string()]
    } else {
        (1..=width).map(|i| format!("{name}_{i}")).collect()
    }
}

/// Writes the per-step CSV. Vector signals get one column per channel.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, mut out: W) -> Result<()> {
    let (m, p) = trace
        .records
        .first()
        .map_or((1, 1), |r| (r.u.len(), r.y.len()));
    let mut header = vec!["k".to_string(), "t".into(), "theta".into()];
    header.extend(columns("u", m));
    header.extend(columns("q_in", m));
    header.extend(columns("y", p));
    header.extend(columns("q_out", p));
    header.extend(
        ["mu", "mu_in", "mu_out", "norm_z", "sat_in", "sat_out"]
            .iter()
            .map(|s| s.to_string()),
    );
    writeln!(out, "{}", header.join(","))?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), num(r.t), (r.lost as u8).to_string()];
        for v in [&r.u, &r.q_in, &r.y, &r.q_out] {
            row.extend(v.iter().map(|&x| num(x)));
        }
        row.extend([num(r.mu), num(r.mu_in), num(r.mu_out), num(r.norm_z)]);
        row.push((r.sat_in as u8).to_string());
        row.push((r.sat_out as u8).to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes the inter-sample CSV `k,t,coord_1..coord_H`.
pub fn write_intersample_csv<W: Write>(trace: &SimulationTrace, mut out: W) -> Result<()> {
    let head = trace.intersample.first().map_or(0, |r| r.coords.len());
    let mut header = vec!["k".to_string(), "t".into()];
    header.extend((1..=head).map(|i| format!("coord_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for r in &trace.intersample {
        let mut row = vec![r.k.to_string(), num(r.t)];
        row.extend(r.coords.iter().map(|&x| num(x)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Relative slack used by the envelope inequalities.
pub const ENVELOPE_RTOL: f64 = 1e-9;

/// Outcome of [`check_envelope`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeReport {
    /// `‖z(k)‖ ≤ μ(k)` at every step.
    pub a_ok: bool,
    pub a_first_violation: Option<usize>,
    /// Smallest `(μ(k) − ‖z(k)‖)/μ(k)`.
    pub a_worst_margin: f64,
    /// `μ(k) ≤ Ω_μ γ^k μ(0)` (plus the floor term) at every step.
    pub b_holds: bool,
    /// `b_holds` and `γ < 1`.
    pub b_ok: bool,
    pub b_first_violation: Option<usize>,
    /// Smallest `(bound(k) − μ(k))/bound(k)`.
    pub b_worst_margin: f64,
    pub omega_mu: f64,
    pub gamma: f64,
    pub saturations: usize,
}

impl EnvelopeReport {
    pub fn pass(&self) -> bool {
        self.a_ok && self.b_ok
    }
}

/// Checks `‖z(k)‖ ≤ μ(k)` and `μ(k) ≤ Ω_μ γ^k μ(0)` with
/// `Ω_μ = (η₁/η₀)^Ξ`, `γ = (η₁/η₀)^ν η₀`. With a zoom floor `δ` the bound
/// gains `(1 + Ω_μ γ/(1−γ)) δ`.
pub fn check_envelope(
    trace: &SimulationTrace,
    rc: &RateConstants,
    schedule: &LossSchedule,
    floor_delta: f64,
) -> EnvelopeReport {
    let ratio = rc.eta1 / rc.eta0;
    let omega_mu = ratio.powf(schedule.xi());
    let gamma = ratio.powf(schedule.nu()) * rc.eta0;
    let floor_term = if floor_delta == 0.0 {
        0.0
    } else if gamma < 1.0 {
        (1.0 + omega_mu * gamma / (1.0 - gamma)) * floor_delta
    } else {
        f64::INFINITY
    };
    let mu0 = trace.records.first().map_or(0.0, |r| r.mu);

    let mut a_first = None;
    let mut a_margin = f64::INFINITY;
    let mut b_first = None;
    let mut b_margin = f64::INFINITY;
    for r in &trace.records {
        let margin = (r.mu - r.norm_z) / r.mu;
        a_margin = a_margin.min(margin);
        if margin < -ENVELOPE_RTOL && a_first.is_none() {
            a_first = Some(r.k);
        }
        let bound = omega_mu * gamma.powi(r.k as i32) * mu0 + floor_term;
        let margin = (bound - r.mu) / bound;
        b_margin = b_margin.min(margin);
        if margin < -ENVELOPE_RTOL && b_first.is_none() {
            b_first = Some(r.k);
        }
    }
    EnvelopeReport {
        a_ok: a_first.is_none(),
        a_first_violation: a_first,
        a_worst_margin: a_margin,
        b_holds: b_first.is_none(),
        b_ok: b_first.is_none() && gamma < 1.0,
        b_first_violation: b_first,
        b_worst_margin: b_margin,
        omega_mu,
        gamma,
        saturations: trace.saturations(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("hold-ish".parse::<Strategy>().is_err());
    }

    #[test]
    fn controller_dimension_checks() {
        let m = |r, c| DMatrix::<f64>::zeros(r, c);
        assert!(Controller::new(m(2, 2), m(2, 1), m(1, 2)).is_ok());
        assert!(Controller::new(m(2, 3), m(2, 1), m(1, 2)).is_err());
        assert!(Controller::new(m(2, 2), m(3, 1), m(1, 2)).is_err());
        assert!(Controller::new(m(2, 2), m(2, 1), m(1, 3)).is_err());
        assert!(Controller::scalar(1.0, 1.0, 1.0).with_p1(m(2, 2)).is_err());
    }

    #[test]
    fn layouts() {
        let sizes = |s: Strategy| {
            let held_in = if s == Strategy::SimultaneousHold {
                2
            } else {
                0
            };
            let held_out = if s.is_hold() { 3 } else { 0 };
            StateLayout {
                plant: 5,
                held_input: held_in,
                controller: 4,
                held_output: held_out,
            }
        };
        let l = sizes(Strategy::SimultaneousHold);
        assert_eq!(l.dim(), 14);
        assert_eq!(
            (
                l.held_input_offset(),
                l.controller_offset(),
                l.held_output_offset()
            ),
            (5, 7, 11)
        );
        assert_eq!(sizes(Strategy::Zero).dim(), 9);
    }
}
