use std::f64::consts::{PI, SQRT_2};

use zoomquant::heat::{heat_mode, heat_spectral_system, heat_system, CATALOG_NAME, REFERENCE};

#[test]
fn leading_modes() {
    let m = heat_mode(0);
    assert_eq!((m.lambda.re, m.lambda.im), (0.0, 0.0));
    assert_eq!((m.input[0].re, m.output[0].re), (1.0, 1.0));
    let m = heat_mode(1);
    assert!((m.lambda.re + PI * PI).abs() < 1e-12);
    assert_eq!((m.input[0].re, m.output[0].re), (SQRT_2, -SQRT_2));
}

#[test]
fn mode_rule() {
    let sys = heat_spectral_system();
    for n in 1..50 {
        let m = sys.mode(n).unwrap();
        let k = n as f64;
        assert!((m.lambda.re + (k * PI).powi(2)).abs() <= 1e-12 * (k * PI).powi(2));
        assert_eq!(m.lambda.im, 0.0);
        assert_eq!(m.input[0].re, SQRT_2);
        assert_eq!(m.output[0].re, SQRT_2 * (-1f64).powi(n as i32));
    }
}

#[test]
fn system_properties() {
    let bench = heat_system(100).unwrap();
    let sys = &bench.system;
    assert_eq!(sys.name(), CATALOG_NAME);
    assert_eq!(CATALOG_NAME, "heat-neumann-1d");
    assert!(sys.feedthrough().iter().all(|v| v.norm() == 0.0));
    assert!(!sys.has_gram());
    assert_eq!(sys.available_modes(), None);
    assert_eq!((sys.inputs(), sys.outputs()), (1, 1));
    let e = sys.exponents().unwrap();
    assert!(e.beta() > 0.25 && e.gamma() > 0.25);
    assert_eq!(bench.cfg.tau, 0.1);
    assert_eq!(bench.controller.p()[(0, 0)], 0.445);
    assert_eq!(bench.controller.q()[(0, 0)], 0.3);
    assert_eq!(bench.controller.r()[(0, 0)], -3.0);
    assert!(heat_system(0).is_err());
}

#[test]
fn reference_values() {
    assert_eq!((REFERENCE.rho, REFERENCE.rho0), (0.908, 0.91));
    assert_eq!(REFERENCE.m, 1.3770);
    assert_eq!((REFERENCE.eta1_zero, REFERENCE.eta1_hold), (1.4626, 2.1515));
    assert_eq!((REFERENCE.nu_zero, REFERENCE.nu_hold), (0.175, 0.072));
    assert_eq!(REFERENCE.levels, 150);
}
