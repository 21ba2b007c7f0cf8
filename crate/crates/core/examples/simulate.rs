//! Closed-loop run of the heat rod under worst-case losses at the reference
//! loss fraction, with the zoom envelope check. Writes trace.csv and
//! intersample.csv to `out/example-<strategy>`.
//!
//! ```text
//! cargo run --release --example simulate -- hold
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use zoomquant::heat::heat_system;
use zoomquant::{
    certify, check_envelope, greedy_worst, nu_bound, rate_constants, simulate,
    write_intersample_csv, write_trace_csv, CertifyOptions, Discretization, Quantizers,
    SimulationSpec, Strategy,
};

fn main() -> zoomquant::Result<()> {
    let strategy: Strategy = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => Strategy::Zero,
    };
    let bench = heat_system(100)?;
    let reference = bench.reference;
    let disc = Discretization::new(&bench.system, &bench.cfg)?;
    let cert = certify(
        &disc,
        &bench.controller,
        strategy,
        &CertifyOptions::new(reference.rho0),
    )?;
    let delta = 1.0 / reference.levels as f64;
    let rc = rate_constants(&cert.norms, &cert.certificate, delta, delta)?;

    let nu = if strategy.is_hold() {
        reference.nu_hold
    } else {
        reference.nu_zero
    };
    println!(
        "{strategy}: eta0 = {:.6}, eta1 = {:.6}, nu = {nu} (bound {:?})",
        rc.eta0,
        rc.eta1,
        nu_bound(&rc).value()
    );

    let spec = SimulationSpec {
        horizon: 600,
        ..SimulationSpec::default()
    };
    let schedule = greedy_worst(reference.xi, nu, spec.horizon)?;
    let plant = disc.plant(cert.certificate.n_used)?;
    let quantizers = Quantizers::new(reference.levels, reference.levels, 1, 1)?;
    let trace = simulate(
        &plant,
        &bench.controller,
        strategy,
        &quantizers,
        &schedule,
        &rc,
        &spec,
    )?;
    let report = check_envelope(&trace, &rc, &schedule, 0.0);

    for r in trace.records.iter().step_by(60) {
        println!(
            "  k {:>3} {} |z| {:.3e}  mu {:.3e}",
            r.k,
            if r.lost { "lost" } else { "    " },
            r.norm_z,
            r.mu
        );
    }
    println!(
        "envelope: a {} b {} (gamma {:.6}), saturations {}",
        report.a_ok, report.b_ok, report.gamma, report.saturations
    );

    let dir = PathBuf::from(format!("out/example-{strategy}"));
    fs::create_dir_all(&dir)?;
    write_trace_csv(&trace, File::create(dir.join("trace.csv"))?)?;
    write_intersample_csv(&trace, File::create(dir.join("intersample.csv"))?)?;
    println!("wrote {}", dir.display());
    Ok(())
}
