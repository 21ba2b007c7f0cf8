//! Command-line front end: `norms`, `nu-map`, `simulate` and `verify`.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure,
//! 3 invariant violation reported by `verify`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closed_loop::{
    check_envelope, simulate, write_intersample_csv, write_trace_csv, Controller, EnvelopeReport,
    SimulationTrace, Strategy,
};
use crate::config::{parse_grid, RunConfig};
use crate::error::{Error, Result};
use crate::loss::LossSchedule;
use crate::norms::{
    certify, nu_bound, nu_map, rate_constants, Certification, Converged, NuBound, RateConstants,
};
use crate::spectral::{intersample_state, CVector, Discretization, SeriesStop};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "zoomquant",
    version,
    about = "Certify and simulate zoomed quantized control loops under packet loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the norm bundle, certificate, rate constants and loss bound.
    Norms {
        #[arg(long)]
        config: PathBuf,
        /// Override the strategy of the config file.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep quantizer levels and write `L_in,L_out,eta0,eta1,nu_bound`.
    NuMap {
        #[arg(long)]
        config: PathBuf,
        /// Levels as start:stop:step, used for both channels.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// CSV path; defaults to numap_<strategy>.csv in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed loop and write trace CSVs and the envelope report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check every invariant on a config; exits 3 on any violation.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Runs the CLI on `args` (including the program name), writing reports to
/// `out`. Returns the process exit code.
pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = e.print();
                return EXIT_VALIDATION;
            }
            // Help and version text belong on the report stream.
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let result = match cli.command {
        Command::Norms {
            config,
            strategy,
            out: path,
        } => cmd_norms(&config, strategy, path.as_deref(), out),
        Command::NuMap {
            config,
            grid,
            strategy,
            out: path,
        } => cmd_numap(&config, grid.as_deref(), strategy, path.as_deref(), out),
        Command::Simulate { config } => cmd_simulate(&config, out),
        Command::Verify { config } => cmd_verify(&config, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// [`run_cli_with`] on standard output.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_cli_with(args, &mut lock)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Prepared {
    cfg: RunConfig,
    strategy: Strategy,
    disc: Discretization,
    ctrl: Controller,
    cert: Certification,
}

fn prepare(path: &Path, strategy: Option<Strategy>) -> Result<Prepared> {
    let cfg = RunConfig::read(path)?;
    let strategy = match strategy {
        Some(s) => s,
        None => cfg.strategy()?,
    };
    let sys = cfg.system()?;
    let disc = Discretization::new(&sys, &cfg.discretization()?)?;
    let ctrl = cfg.controller()?;
    let cert = certify(&disc, &ctrl, strategy, &cfg.certify_options())?;
    Ok(Prepared {
        cfg,
        strategy,
        disc,
        ctrl,
        cert,
    })
}

impl Prepared {
    fn rates(&self) -> Result<RateConstants> {
        let n = &self.cert.norms;
        let (din, dout) = self.cfg.deltas(n.inputs, n.outputs)?;
        rate_constants(&self.cert.norms, &self.cert.certificate, din, dout)
    }
}

fn norms_report(p: &Prepared, rc: &RateConstants) -> String {
    let mut s = String::new();
    let ft = p.disc.feedthrough();
    let stop = match &ft.stop {
        SeriesStop::Exhausted => "exhausted".to_string(),
        SeriesStop::TailBound { bound } => format!("tail_bound {}", num(*bound)),
        SeriesStop::Heuristic { .. } => "heuristic".to_string(),
    };
    let c = &p.cert.certificate;
    let n = &p.cert.norms;
    let _ = writeln!(s, "system = {}", p.disc.system().name());
    let _ = writeln!(s, "strategy = {}", p.strategy);
    let _ = writeln!(s, "tau = {}", num(p.disc.config().tau));
    for (j, row) in ft.matrix.row_iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            let _ = writeln!(s, "feedthrough.d_tau[{},{}] = {}", j + 1, l + 1, num(v.re));
        }
    }
    let _ = writeln!(s, "feedthrough.modes = {}", ft.modes_used);
    let _ = writeln!(s, "feedthrough.stop = {stop}");
    let _ = writeln!(s, "certificate.n_used = {}", c.n_used);
    let _ = writeln!(s, "certificate.rho = {}", num(c.rho));
    let _ = writeln!(s, "certificate.rho0 = {}", num(c.rho0));
    let _ = writeln!(s, "certificate.M = {}", num(c.m));
    if let Some(m_h) = c.m_h {
        let _ = writeln!(s, "certificate.M_h = {}", num(m_h));
    }
    let _ = writeln!(s, "certificate.M_residual = {}", num(c.m_residual));
    let _ = writeln!(
        s,
        "certificate.spectral_radius = {}",
        num(c.spectral_radius)
    );
    let _ = writeln!(
        s,
        "certificate.projection_norm = {}",
        num(c.projection_norm)
    );
    let entries: [(&str, &Converged); 10] = [
        ("R", &n.r),
        ("Q", &n.q),
        ("B_out0", &n.b_out0),
        ("D", &n.d),
        ("D1", &n.d1),
        ("B_in0", &n.b_in0),
        ("C_out", &n.c_out),
        ("C_out1", &n.c_out1),
        ("B_plant", &n.b_plant),
        ("A1", &n.a1),
    ];
    for (name, v) in entries {
        let _ = writeln!(
            s,
            "norms.{name} = {} (N = {}, residual = {})",
            num(v.value),
            v.order,
            num(v.residual)
        );
    }
    let _ = writeln!(s, "rates.delta_in = {}", num(rc.delta_in));
    let _ = writeln!(s, "rates.delta_out = {}", num(rc.delta_out));
    let _ = writeln!(s, "rates.eta0 = {}", num(rc.eta0));
    let _ = writeln!(s, "rates.eta1 = {}", num(rc.eta1));
    let _ = writeln!(s, "rates.kappa = {}", num(rc.kappa));
    match nu_bound(rc) {
        NuBound::Feasible(v) => {
            let _ = writeln!(s, "nu_bound = {}", num(v));
        }
        NuBound::Infeasible { .. } => {
            let _ = writeln!(s, "nu_bound = infeasible");
        }
    }
    s
}

fn cmd_norms(
    path: &Path,
    strategy: Option<Strategy>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let p = prepare(path, strategy)?;
    let rc = p.rates()?;
    let report = norms_report(&p, &rc);
    out.write_all(report.as_bytes())?;
    if let Some(dest) = dest {
        write_file(dest, report.as_bytes())?;
    }
    Ok(0)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn cmd_numap(
    path: &Path,
    grid: Option<&str>,
    strategy: Option<Strategy>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let p = prepare(path, strategy)?;
    let levels = parse_grid(grid.unwrap_or(&p.cfg.numap.grid))?;
    let rows = nu_map(&p.cert, &levels, &levels)?;
    let mut csv = String::from("L_in,L_out,eta0,eta1,nu_bound\n");
    for c in &rows {
        let nu = c.nu_bound.map(num).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{nu}",
            c.levels_in,
            c.levels_out,
            num(c.eta0),
            num(c.eta1)
        );
    }
    let dest = dest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| p.cfg.out_dir().join(format!("numap_{}.csv", p.strategy)));
    write_file(&dest, csv.as_bytes())?;
    writeln!(out, "wrote {} cells to {}", rows.len(), dest.display())?;
    Ok(0)
}

struct Run {
    schedule: LossSchedule,
    rc: RateConstants,
    trace: SimulationTrace,
    report: EnvelopeReport,
}

fn run_simulation(p: &Prepared) -> Result<Run> {
    let rc = p.rates()?;
    let schedule = p.cfg.schedule()?;
    let plant = p.disc.plant(p.cert.certificate.n_used)?;
    let quantizers = p.cfg.quantizers(plant.inputs(), plant.outputs())?;
    let spec = p.cfg.simulation_spec();
    let trace = simulate(
        &plant,
        &p.ctrl,
        p.strategy,
        &quantizers,
        &schedule,
        &rc,
        &spec,
    )?;
    let report = check_envelope(&trace, &rc, &schedule, spec.floor_delta);
    Ok(Run {
        schedule,
        rc,
        trace,
        report,
    })
}

fn envelope_text(run: &Run) -> String {
    let r = &run.report;
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    let mut s = String::new();
    let _ = writeln!(s, "strategy = {}", run.trace.meta.strategy);
    let _ = writeln!(s, "order = {}", run.trace.meta.order);
    let _ = writeln!(s, "eta0 = {}", num(run.rc.eta0));
    let _ = writeln!(s, "eta1 = {}", num(run.rc.eta1));
    let _ = writeln!(s, "xi = {}", num(run.schedule.xi()));
    let _ = writeln!(s, "nu = {}", num(run.schedule.nu()));
    let _ = writeln!(s, "losses = {}", run.schedule.losses());
    let _ = writeln!(s, "omega_mu = {}", num(r.omega_mu));
    let _ = writeln!(s, "gamma = {}", num(r.gamma));
    let _ = writeln!(
        s,
        "a = {} (worst margin {})",
        verdict(r.a_ok),
        num(r.a_worst_margin)
    );
    let _ = writeln!(
        s,
        "b = {} (worst margin {})",
        verdict(r.b_ok),
        num(r.b_worst_margin)
    );
    let _ = writeln!(s, "saturations = {}", r.saturations);
    let _ = writeln!(
        s,
        "initial_bound = {}",
        verdict(run.trace.meta.initial_bound_ok)
    );
    let _ = writeln!(s, "envelope = {}", verdict(r.pass() && r.saturations == 0));
    s
}

fn trace_bytes(trace: &SimulationTrace) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut main = Vec::new();
    write_trace_csv(trace, &mut main)?;
    let mut inter = Vec::new();
    write_intersample_csv(trace, &mut inter)?;
    Ok((main, inter))
}

fn cmd_simulate(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let p = prepare(path, None)?;
    let run = run_simulation(&p)?;
    let dir = p.cfg.out_dir();
    let (main, inter) = trace_bytes(&run.trace)?;
    write_file(&dir.join("trace.csv"), &main)?;
    if !run.trace.intersample.is_empty() {
        write_file(&dir.join("intersample.csv"), &inter)?;
    }
    write_file(&dir.join("schedule.txt"), run.schedule.to_text().as_bytes())?;
    let report = envelope_text(&run);
    write_file(&dir.join("envelope.txt"), report.as_bytes())?;
    out.write_all(report.as_bytes())?;
    Ok(0)
}

struct Checks<'a> {
    out: &'a mut dyn Write,
    failures: usize,
}

impl Checks<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: String) -> Result<()> {
        if !ok {
            self.failures += 1;
        }
        writeln!(
            self.out,
            "{} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        )?;
        Ok(())
    }

    fn warn(&mut self, name: &str, detail: String) -> Result<()> {
        writeln!(self.out, "WARN {name}: {detail}")?;
        Ok(())
    }
}

fn violation_text(first: Option<usize>) -> String {
    match first {
        Some(k) => format!("first violation at k = {k}"),
        None => "no violation".into(),
    }
}

fn cmd_verify(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let p = prepare(path, None)?;
    let mut checks = Checks { out, failures: 0 };
    let c = &p.cert.certificate;

    checks.check("transient constant", c.m >= 1.0, format!("M = {:.6}", c.m))?;
    if let Some(m_h) = c.m_h {
        checks.check(
            "hold transient constant",
            m_h >= 1.0,
            format!("M_h = {m_h:.6}"),
        )?;
    }
    checks.check(
        "spectral radius below rho0",
        c.spectral_radius < c.rho0,
        format!("r = {:.6}, rho0 = {}", c.spectral_radius, c.rho0),
    )?;
    if let Some(rho) = p.cfg.certificate.rho {
        checks.check(
            "spectral radius consistent with rho",
            c.spectral_radius <= rho + 1e-3,
            format!("r = {:.6}, rho = {rho}", c.spectral_radius),
        )?;
    }

    let rc = p.rates()?;
    if rc.eta1_below_one() {
        checks.warn("eta1", format!("eta1 = {:.6} < 1", rc.eta1))?;
    }
    let schedule = p.cfg.schedule()?;
    let bound = nu_bound(&rc);
    match bound {
        NuBound::Feasible(nu_max) => checks.check(
            "loss fraction admissible",
            schedule.nu() < nu_max || schedule.losses() == 0,
            format!("nu = {}, bound = {nu_max:.6}", schedule.nu()),
        )?,
        NuBound::Infeasible { eta0 } => {
            checks.check("eta0 below one", false, format!("eta0 = {eta0:.6}"))?
        }
    }
    let bc = schedule.verify_bound();
    checks.check("schedule bound", bc.ok, violation_text(bc.first_violation))?;
    if p.cfg.simulation.floor_delta > 0.0 {
        let wc = schedule.verify_windowed();
        checks.check(
            "schedule windowed bound",
            wc.ok,
            violation_text(wc.first_violation),
        )?;
    }

    let run = run_simulation(&p)?;
    let r = &run.report;
    checks.check(
        "state below zoom",
        r.a_ok,
        format!("worst margin {:.3e}", r.a_worst_margin),
    )?;
    checks.check(
        "zoom envelope",
        r.b_ok,
        format!(
            "gamma = {:.6}, worst margin {:.3e}",
            r.gamma, r.b_worst_margin
        ),
    )?;
    checks.check(
        "no saturation",
        r.saturations == 0,
        format!("{} saturated steps", r.saturations),
    )?;

    let again = run_simulation(&p)?;
    checks.check(
        "deterministic output",
        trace_bytes(&run.trace)? == trace_bytes(&again.trace)?,
        "two runs compared byte for byte".into(),
    )?;

    let n = c.n_used;
    let plant = p.disc.plant(n)?;
    // Finite systems compare their last two orders instead.
    let (lo, hi) = match p.disc.system().available_modes() {
        Some(k) => (k.saturating_sub(1), k),
        None => (n, n + 10),
    };
    if lo > 0 {
        let small = p.disc.plant(lo)?;
        let wider = p.disc.plant(hi)?;
        let same_blocks = wider.a_tau.view((0, 0), (lo, lo)) == small.a_tau
            && wider.b_tau.rows(0, lo) == small.b_tau
            && wider.c_tau.columns(0, lo) == small.c_tau;
        checks.check(
            "truncation is coordinate-wise",
            same_blocks,
            format!("N = {lo} vs N = {hi}"),
        )?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = CVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0f64).into());
    let q = CVector::from_fn(plant.inputs(), |_, _| rng.gen_range(-1.0..1.0f64).into());
    let near = intersample_state(&plant, &x, &q, plant.tau * (1.0 - 1e-9))?;
    let next = &plant.a_tau * &x + &plant.b_tau * &q;
    let gap = (near - next).camax();
    checks.check(
        "inter-sample limit",
        gap <= 1e-6,
        format!("max gap {gap:.3e}"),
    )?;

    let quants = p
        .cfg
        .quantizers(p.cert.norms.inputs, p.cert.norms.outputs)?;
    let mut worst = 0.0f64;
    for quant in [quants.input, quants.output] {
        for _ in 0..10_000 {
            let mu = rng.gen_range(0.1..10.0);
            // Uniform direction, radius up to mu: the hypothesis ‖v‖ ≤ μ.
            let dir: Vec<f64> = (0..quant.dims())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect();
            let len = dir
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let radius = rng.gen_range(0.0..=mu);
            let v: Vec<f64> = dir.iter().map(|x| x / len * radius).collect();
            let q = quant.quantize(&v, mu)?;
            let err = q
                .values
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err / (mu * quant.norm_delta()));
        }
    }
    checks.check(
        "quantization error bound",
        worst <= 1.0 + 1e-12,
        format!("worst error / (delta mu) = {worst:.6}"),
    )?;

    writeln!(checks.out, "{} failure(s)", checks.failures)?;
    Ok(if checks.failures == 0 {
        0
    } else {
        EXIT_VIOLATION
    })
}
