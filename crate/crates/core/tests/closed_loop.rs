mod support;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use zoomquant::spectral::CVector;
use zoomquant::{
    assemble, check_envelope, intersample_state, rate_constants, simulate, step,
    write_intersample_csv, write_trace_csv, Controller, Discretization, DiscretizationConfig,
    DiscretizedPlant, Error, LossSchedule, Mode, Quantizers, RateConstants, SimulationSpec,
    SpectralSystem, Strategy, ZoomState,
};

use support::heat_run;

fn two_mode_plant() -> DiscretizedPlant {
    let sys = SpectralSystem::finite(
        vec![Mode::siso(-1.0, 1.0, 1.0), Mode::siso(-4.0, 0.5, 2.0)],
        1,
        1,
    )
    .unwrap();
    Discretization::new(&sys, &DiscretizationConfig::new(0.2))
        .unwrap()
        .plant(2)
        .unwrap()
}

fn rates(strategy: Strategy) -> RateConstants {
    RateConstants {
        strategy,
        eta0: 0.9,
        eta1: 1.2,
        kappa: 0.0,
        m: 1.0,
        delta_in: 0.0,
        delta_out: 0.0,
        in_gain: 2.0,
        out_gain: 3.0,
    }
}

fn cvec(v: &[f64]) -> CVector {
    DVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
}

fn re(z: &CVector) -> Vec<f64> {
    z.iter().map(|c| c.re).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn layouts() {
    let plant = two_mode_plant();
    let ctrl = Controller::scalar(0.5, 0.3, -0.8);
    let dims: Vec<usize> = Strategy::ALL
        .iter()
        .map(|&s| assemble(&plant, &ctrl, s).unwrap().layout.dim())
        .collect();
    assert_eq!(dims, vec![3, 4, 3, 5]);
    let bad = Controller::new(
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 2),
        DMatrix::zeros(1, 1),
    )
    .unwrap();
    assert!(matches!(
        assemble(&plant, &bad, Strategy::Zero),
        Err(Error::Validation(_))
    ));
}

#[test]
fn block_structure() {
    let plant = two_mode_plant();
    let ctrl = Controller::scalar(0.5, 0.3, -0.8)
        .with_p1(DMatrix::from_element(1, 1, 0.1))
        .unwrap();
    let zero = assemble(&plant, &ctrl, Strategy::Zero).unwrap();
    let lost = zero.at(true);
    assert!(lost.b_out.iter().all(|v| v.norm() == 0.0));
    assert_eq!(lost.a[(2, 2)].re, 0.1);
    assert_eq!((lost.a[(2, 0)].re, lost.a[(2, 1)].re), (0.0, 0.0));
    let received = zero.at(false);
    let d = plant.d_tau[(0, 0)].re;
    assert!((received.a[(2, 2)].re - (0.5 + 0.3 * d * -0.8)).abs() < 1e-15);
    assert_eq!(received.a[(2, 0)], 0.3 * plant.c_tau[(0, 0)]);
    assert_eq!(received.a[(0, 2)], -0.8 * plant.b_tau[(0, 0)]);

    let hold = assemble(&plant, &ctrl, Strategy::Hold).unwrap();
    let last = hold.at(true).a.row(3).map(|v| v.re);
    assert_eq!(last.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    // Hold never uses P₁.
    assert_eq!(hold.at(true).a[(2, 2)].re, 0.5);
    assert_eq!(hold.at(true).a[(2, 3)].re, 0.3);
    assert_eq!(hold.at(false).b_out[(3, 0)].re, 1.0);

    let sim_zero = assemble(&plant, &ctrl, Strategy::SimultaneousZero).unwrap();
    assert!(sim_zero
        .at(true)
        .b_in
        .rows(0, 2)
        .iter()
        .all(|v| v.norm() == 0.0));
    assert!(sim_zero.at(true).d.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn step_matches_hand_arithmetic() {
    let plant = two_mode_plant();
    let (p, q, r) = (0.5, 0.3, -0.8);
    let ctrl = Controller::scalar(p, q, r);
    let quant = Quantizers::new(7, 9, 1, 1).unwrap();
    let tau = 0.2;
    let a: Vec<f64> = [-1.0f64, -4.0].iter().map(|l| (l * tau).exp()).collect();
    let b: Vec<f64> = [(-1.0f64, 1.0), (-4.0, 0.5)]
        .iter()
        .map(|&(l, b)| b * ((l * tau).exp() - 1.0) / l)
        .collect();
    let c: Vec<f64> = [(-1.0f64, 1.0), (-4.0, 2.0)]
        .iter()
        .map(|&(l, c)| c * ((l * tau).exp() - 1.0) / (l * tau))
        .collect();
    let d = plant.d_tau[(0, 0)].re;

    for strategy in [Strategy::Zero, Strategy::Hold] {
        let ops = assemble(&plant, &ctrl, strategy).unwrap();
        let rc = rates(strategy);
        let mut zoom = ZoomState::init(1.0, &rc, 0.0).unwrap();
        let mut z = if strategy.is_hold() {
            cvec(&[0.7, -0.3, 0.4, 0.1])
        } else {
            cvec(&[0.7, -0.3, 0.4])
        };
        for (k, lost) in [false, true, false, false, true].into_iter().enumerate() {
            let v = re(&z);
            let (x, xc) = ([v[0], v[1]], v[2]);
            let u = r * xc;
            let q_in = quant.input.quantize(&[u], zoom.mu_in).unwrap().values[0];
            let y = c[0] * x[0] + c[1] * x[1] + d * q_in;
            let q_out = quant.output.quantize(&[y], zoom.mu_out).unwrap().values[0];
            let x_next = [a[0] * x[0] + b[0] * q_in, a[1] * x[1] + b[1] * q_in];
            let expected = match (strategy, lost) {
                (Strategy::Zero, false) => vec![x_next[0], x_next[1], p * xc + q * q_out],
                (Strategy::Zero, true) => vec![x_next[0], x_next[1], p * xc],
                (_, false) => vec![x_next[0], x_next[1], p * xc + q * q_out, q_out],
                (_, true) => vec![x_next[0], x_next[1], p * xc + q * v[3], v[3]],
            };
            let out = step(&ops, &zoom, &z, lost, &quant, &rc).unwrap();
            assert!(close(&re(&out.z), &expected, 1e-13), "{strategy} k {k}");
            assert_eq!(out.record.q_in, vec![q_in]);
            assert!((out.record.y[0] - y).abs() < 1e-14);
            assert_eq!(out.zoom.mu, zoom.mu * if lost { 1.2 } else { 0.9 });
            z = out.z;
            zoom = out.zoom;
        }
    }
}

#[test]
fn fine_quantization_follows_the_linear_loop() {
    let run = heat_run(Strategy::Zero);
    let plant = run.disc.plant(60).unwrap();
    let ctrl = &run.bench.controller;
    let ops = assemble(&plant, ctrl, Strategy::Zero).unwrap();
    let rc = rate_constants(&run.cert.norms, &run.cert.certificate, 1e-9, 1e-9).unwrap();
    let quant = Quantizers::new(1_000_000_000, 1_000_000_000, 1, 1).unwrap();
    let mut z = CVector::zeros(ops.layout.dim());
    z[0] = Complex64::new(1.0, 0.0);
    let mut linear = z.clone();
    let mut zoom = ZoomState::init(1.0, &rc, 0.0).unwrap();
    for _ in 0..100 {
        let out = step(&ops, &zoom, &z, false, &quant, &rc).unwrap();
        linear = &ops.at(false).a * &linear;
        z = out.z;
        zoom = out.zoom;
        assert!((&z - &linear).norm() <= 1e-6);
    }

    let zero = CVector::zeros(ops.layout.dim());
    let out = step(&ops, &zoom, &zero, false, &quant, &rc).unwrap();
    assert!(out.z.norm() < 1e-6 * zoom.mu);
}

#[test]
fn strategies_agree_without_loss() {
    let zero = heat_run(Strategy::Zero);
    let hold = heat_run(Strategy::Hold);
    let n = zero.cert.certificate.n_used;
    let plant = zero.disc.plant(n).unwrap();
    let quant = Quantizers::new(1_000_000_000, 1_000_000_000, 1, 1).unwrap();
    let schedule = LossSchedule::new(vec![false; 80], 0.0, 0.0).unwrap();
    let spec = SimulationSpec {
        horizon: 80,
        substeps: 0,
        ..SimulationSpec::default()
    };
    let traces: Vec<_> = [zero, hold]
        .iter()
        .map(|run| {
            let rc = rate_constants(&run.cert.norms, &run.cert.certificate, 1e-9, 1e-9).unwrap();
            simulate(
                &plant,
                &run.bench.controller,
                run.rc.strategy,
                &quant,
                &schedule,
                &rc,
                &spec,
            )
            .unwrap()
        })
        .collect();
    for (a, b) in traces[0].records.iter().zip(&traces[1].records) {
        assert!(
            close(&a.u, &b.u, 1e-6) && close(&a.y, &b.y, 1e-6),
            "k {}",
            a.k
        );
    }
}

#[test]
fn intersample_state_reaches_the_next_sample() {
    let run = heat_run(Strategy::Zero);
    let plant = run.disc.plant(40).unwrap();
    let ops = assemble(&plant, &run.bench.controller, Strategy::Zero).unwrap();
    let quant = Quantizers::new(150, 150, 1, 1).unwrap();
    let mut z = CVector::zeros(ops.layout.dim());
    z[0] = Complex64::new(0.6, 0.0);
    z[3] = Complex64::new(-0.4, 0.0);
    let mut zoom = ZoomState::init(1.0, &run.rc, 0.0).unwrap();
    for _ in 0..20 {
        let out = step(&ops, &zoom, &z, false, &quant, &run.rc).unwrap();
        let x = z.rows(0, plant.order).into_owned();
        let end =
            intersample_state(&plant, &x, &out.applied_input, plant.tau * (1.0 - 1e-12)).unwrap();
        assert!((end - out.z.rows(0, plant.order)).camax() < 1e-9);
        let start = intersample_state(&plant, &x, &out.applied_input, 0.0).unwrap();
        assert_eq!(start, x);
        z = out.z;
        zoom = out.zoom;
    }
}

#[test]
fn truncation_order_barely_matters() {
    let run = heat_run(Strategy::Zero);
    let n = run.cert.certificate.n_used;
    let quant = Quantizers::new(1_000_000_000, 1_000_000_000, 1, 1).unwrap();
    let rc = rate_constants(&run.cert.norms, &run.cert.certificate, 1e-9, 1e-9).unwrap();
    let schedule = zoomquant::greedy_worst(1.0, 0.175, 100).unwrap();
    let spec = SimulationSpec {
        horizon: 100,
        substeps: 0,
        ..SimulationSpec::default()
    };
    let norms: Vec<Vec<f64>> = [n, 2 * n]
        .iter()
        .map(|&order| {
            let plant = run.disc.plant(order).unwrap();
            let trace = simulate(
                &plant,
                &run.bench.controller,
                Strategy::Zero,
                &quant,
                &schedule,
                &rc,
                &spec,
            )
            .unwrap();
            trace.records.iter().map(|r| r.norm_z).collect()
        })
        .collect();
    assert!(close(&norms[0], &norms[1], 1e-6));
}

#[test]
fn heat_zero_strategy_converges() {
    let run = heat_run(Strategy::Zero);
    let n = run.cert.certificate.n_used;
    let plant = run.disc.plant(n).unwrap();
    let quant = Quantizers::new(150, 150, 1, 1).unwrap();
    let schedule = LossSchedule::new(vec![false; 600], 0.0, 0.0).unwrap();
    let spec = SimulationSpec::default();
    let trace = simulate(
        &plant,
        &run.bench.controller,
        Strategy::Zero,
        &quant,
        &schedule,
        &run.rc,
        &spec,
    )
    .unwrap();
    assert_eq!(trace.records.len(), 601);
    let mu = |k: usize| trace.records[k].mu;
    assert!(mu(600) / mu(0) < 1e-3);
    assert_eq!(trace.saturations(), 0);
    let env = check_envelope(&trace, &run.rc, &schedule, 0.0);
    assert!(env.pass());
    assert_eq!(env.gamma, run.rc.eta0);
    assert_eq!(env.omega_mu, 1.0);
}

#[test]
fn loss_free_state_obeys_the_transient_bound() {
    let run = heat_run(Strategy::Zero);
    let cert = &run.cert.certificate;
    let plant = run.disc.plant(cert.n_used).unwrap();
    let quant = Quantizers::new(1_000_000_000, 1_000_000_000, 1, 1).unwrap();
    let rc = rate_constants(&run.cert.norms, cert, 1e-9, 1e-9).unwrap();
    let schedule = LossSchedule::new(vec![false; 300], 0.0, 0.0).unwrap();
    let spec = SimulationSpec {
        horizon: 300,
        substeps: 0,
        ..SimulationSpec::default()
    };
    let trace = simulate(
        &plant,
        &run.bench.controller,
        Strategy::Zero,
        &quant,
        &schedule,
        &rc,
        &spec,
    )
    .unwrap();
    for r in &trace.records {
        let bound = cert.m * cert.rho0.powi(r.k as i32) * trace.records[0].norm_z;
        assert!(
            r.norm_z <= bound * (1.0 + 1e-6),
            "k {}: {} > {bound}",
            r.k,
            r.norm_z
        );
    }
}

#[test]
fn horizon_zero_has_one_record() {
    let run = heat_run(Strategy::Hold);
    let plant = run.disc.plant(20).unwrap();
    let quant = Quantizers::new(150, 150, 1, 1).unwrap();
    let schedule = LossSchedule::new(vec![], 0.0, 0.0).unwrap();
    let spec = SimulationSpec {
        horizon: 0,
        ..SimulationSpec::default()
    };
    let trace = simulate(
        &plant,
        &run.bench.controller,
        Strategy::Hold,
        &quant,
        &schedule,
        &run.rc,
        &spec,
    )
    .unwrap();
    assert_eq!(trace.records.len(), 1);
    assert!(trace.intersample.is_empty());
    assert!(trace.meta.initial_bound_ok);
}

#[test]
fn csv_headers() {
    let run = heat_run(Strategy::Zero);
    let plant = run.disc.plant(20).unwrap();
    let quant = Quantizers::new(150, 150, 1, 1).unwrap();
    let schedule = zoomquant::periodic(5, 1, 10).unwrap();
    let spec = SimulationSpec {
        horizon: 10,
        substeps: 4,
        head: 3,
        ..SimulationSpec::default()
    };
    let trace = simulate(
        &plant,
        &run.bench.controller,
        Strategy::Zero,
        &quant,
        &schedule,
        &run.rc,
        &spec,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("k,t,theta,u,q_in,y,q_out,mu,mu_in,mu_out,norm_z,sat_in,sat_out")
    );
    assert_eq!(text.lines().count(), 12);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("0,0.0000000000000000e0,1,"));

    let mut buf = Vec::new();
    write_intersample_csv(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("k,t,coord_1,coord_2,coord_3"));
    assert_eq!(text.lines().count(), 1 + 40);
}

#[test]
fn rejects_mismatched_inputs() {
    let run = heat_run(Strategy::Zero);
    let plant = run.disc.plant(20).unwrap();
    let quant = Quantizers::new(150, 150, 1, 1).unwrap();
    let ctrl = &run.bench.controller;
    let spec = SimulationSpec::default();
    let short = LossSchedule::new(vec![false; 10], 0.0, 0.0).unwrap();
    assert!(simulate(&plant, ctrl, Strategy::Zero, &quant, &short, &run.rc, &spec).is_err());
    let bad = LossSchedule::new(vec![true; 600], 0.0, 0.5).unwrap();
    assert!(simulate(&plant, ctrl, Strategy::Zero, &quant, &bad, &run.rc, &spec).is_err());
    let ok = LossSchedule::new(vec![false; 600], 0.0, 0.0).unwrap();
    assert!(simulate(&plant, ctrl, Strategy::Hold, &quant, &ok, &run.rc, &spec).is_err());
    let wrong_z0 = SimulationSpec {
        z0: Some(CVector::zeros(3)),
        ..SimulationSpec::default()
    };
    assert!(simulate(
        &plant,
        ctrl,
        Strategy::Zero,
        &quant,
        &ok,
        &run.rc,
        &wrong_z0
    )
    .is_err());
}
