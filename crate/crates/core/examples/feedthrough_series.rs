//! Feedthrough D_tau of the heat rod: how many modes the series needs, which
//! stopping rule fires, and what a non-uniform sampler weight changes.

use zoomquant::heat::heat_spectral_system;
use zoomquant::spectral::SeriesStop;
use zoomquant::{feedthrough, DiscretizationConfig, SamplerWeight};

fn describe(stop: &SeriesStop) -> String {
    match stop {
        SeriesStop::Exhausted => "all modes summed".into(),
        SeriesStop::TailBound { bound } => format!("tail bound {bound:.2e}"),
        SeriesStop::Heuristic {
            tail_bound: Some(b),
        } => format!("heuristic (rigorous tail still {b:.2e})"),
        SeriesStop::Heuristic { tail_bound: None } => "heuristic".into(),
    }
}

fn main() -> zoomquant::Result<()> {
    let sys = heat_spectral_system();
    let cfg = DiscretizationConfig::new(0.1);

    println!("averaging sampler, tau = 0.1");
    for tol in [1e-6, 1e-8, 1e-10] {
        let ft = feedthrough(&sys, &cfg, tol)?;
        println!(
            "  tol {tol:.0e}: D_tau = {:.13e} after {:>7} modes, {}",
            ft.matrix[(0, 0)].re,
            ft.modes_used,
            describe(&ft.stop)
        );
    }

    // Triangular weight peaking at the end of the period.
    let nodes: Vec<f64> = (0..=200).map(|i| 0.1 * i as f64 / 200.0).collect();
    let values: Vec<f64> = nodes.iter().map(|t| 200.0 * t).collect();
    let tri = cfg
        .clone()
        .with_weight(SamplerWeight::Tabulated { nodes, values });
    let ft = feedthrough(&sys, &tri, 1e-8)?;
    println!("triangular sampler weight");
    println!(
        "  tol 1e-8: D_tau = {:.13e} after {} modes, {}",
        ft.matrix[(0, 0)].re,
        ft.modes_used,
        describe(&ft.stop)
    );
    Ok(())
}
