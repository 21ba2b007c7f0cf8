//! Stability certificate and rate constants of the heat benchmark for the
//! zero and hold strategies at 150 quantization levels.

use std::time::Instant;

use zoomquant::heat::heat_system;
use zoomquant::{certify, nu_bound, rate_constants, CertifyOptions, Discretization, Strategy};

fn main() -> zoomquant::Result<()> {
    let bench = heat_system(100)?;
    let started = Instant::now();
    let disc = Discretization::new(&bench.system, &bench.cfg)?;
    let ft = disc.feedthrough();
    println!(
        "D_tau = {:.13e} ({} modes, {:?})",
        ft.matrix[(0, 0)].re,
        ft.modes_used,
        ft.stop
    );

    let opts = CertifyOptions::new(bench.reference.rho0);
    let delta = 1.0 / bench.reference.levels as f64;
    for strategy in [Strategy::Zero, Strategy::Hold] {
        let cert = certify(&disc, &bench.controller, strategy, &opts)?;
        let c = &cert.certificate;
        let rc = rate_constants(&cert.norms, c, delta, delta)?;
        println!("[{strategy}]");
        println!(
            "  N = {}, r(A_id) = {:.6}, M = {:.6}",
            c.n_used, c.spectral_radius, c.m
        );
        if let Some(m_h) = c.m_h {
            println!("  M_h = {m_h:.6}");
        }
        println!("  eta0 = {:.6}, eta1 = {:.6}", rc.eta0, rc.eta1);
        match nu_bound(&rc).value() {
            Some(nu) => println!("  nu bound = {nu:.6}"),
            None => println!("  infeasible"),
        }
    }
    println!("elapsed {:.2?}", started.elapsed());
    Ok(())
}
