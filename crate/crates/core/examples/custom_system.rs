//! A user-defined plant: a damped beam-like system with modes generated by
//! rule, certified for every strategy and simulated with random losses.

use nalgebra::DMatrix;
use zoomquant::spectral::CVector;
use zoomquant::{
    assemble, bernoulli_clipped, certify, check_envelope, nu_bound, rate_constants, simulate,
    CertifyOptions, Controller, Discretization, DiscretizationConfig, GrowthExponents, Mode,
    NuBound, Quantizers, SimulationSpec, SpectralSystem, Strategy,
};

fn mode(n: usize) -> Mode {
    // Structural damping: lambda = -a k^2 ± i k^2 for k = 1, 2, ...
    let k = (n / 2 + 1) as f64;
    let im = if n.is_multiple_of(2) { k * k } else { -k * k };
    let lambda = num_complex::Complex64::new(-0.3 * k * k - 0.4, im);
    Mode::new(lambda, vec![(1.0 / k).into()], vec![(1.0 / k).into()])
}

fn main() -> zoomquant::Result<()> {
    let sys = SpectralSystem::from_rule(1, 1, mode)?
        .named("damped-beam")
        .with_exponents(GrowthExponents::new(0.3, 0.3)?);
    let disc = Discretization::new(
        &sys,
        &DiscretizationConfig::new(0.2).with_feedthrough_tol(1e-8),
    )?;
    println!(
        "D_tau = {:.6e} ({} modes)",
        disc.feedthrough().matrix[(0, 0)].re,
        disc.feedthrough().modes_used
    );

    let ctrl = Controller::new(
        DMatrix::from_element(1, 1, 0.2),
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, -0.5),
    )?;
    let levels = 200;
    let delta = 1.0 / levels as f64;
    let opts = CertifyOptions::new(0.95);

    for strategy in Strategy::ALL {
        let cert = certify(&disc, &ctrl, strategy, &opts)?;
        let rc = rate_constants(&cert.norms, &cert.certificate, delta, delta)?;
        let NuBound::Feasible(bound) = nu_bound(&rc) else {
            println!(
                "{strategy:<18} infeasible at {levels} levels (eta0 = {:.4})",
                rc.eta0
            );
            continue;
        };
        let nu = 0.8 * bound;
        let plant = disc.plant(cert.certificate.n_used)?;
        // Modes come in conjugate pairs; start on the real combination of the first pair.
        let ops = assemble(&plant, &ctrl, strategy)?;
        let mut z0 = CVector::zeros(ops.layout.dim());
        z0[0] = 1.0.into();
        z0[1] = 1.0.into();
        let spec = SimulationSpec {
            e0: ops.state_norm(&z0),
            z0: Some(z0),
            ..SimulationSpec::default()
        };
        let schedule = bernoulli_clipped(0.3, 1.0, nu, spec.horizon, 11)?;
        let trace = simulate(
            &plant,
            &ctrl,
            strategy,
            &Quantizers::new(levels, levels, 1, 1)?,
            &schedule,
            &rc,
            &spec,
        )?;
        let report = check_envelope(&trace, &rc, &schedule, 0.0);
        println!(
            "{strategy:<18} N {:>3}  M {:.3}  eta0 {:.4}  eta1 {:.4}  nu bound {bound:.4}  losses {:>3}  |z_K| {:.2e}  envelope {}",
            cert.certificate.n_used,
            cert.certificate.m,
            rc.eta0,
            rc.eta1,
            schedule.losses(),
            trace.records.last().map_or(0.0, |r| r.norm_z),
            report.pass()
        );
    }
    Ok(())
}
