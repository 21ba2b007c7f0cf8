//! Admissible loss fraction as a function of the quantizer resolution.
//!
//! ```text
//! cargo run --release --example nu_map -- hold
//! ```

use zoomquant::heat::heat_system;
use zoomquant::{certify, nu_map, CertifyOptions, Discretization, Strategy};

fn main() -> zoomquant::Result<()> {
    let strategy: Strategy = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => Strategy::Zero,
    };
    let bench = heat_system(100)?;
    let disc = Discretization::new(&bench.system, &bench.cfg)?;
    let cert = certify(
        &disc,
        &bench.controller,
        strategy,
        &CertifyOptions::new(bench.reference.rho0),
    )?;

    let levels: Vec<u64> = (1..=10).map(|i| 30 * i).collect();
    let cells = nu_map(&cert, &levels, &levels)?;

    println!("nu bound, {strategy} strategy (rows L_in, columns L_out)");
    print!("{:>6}", "");
    for l in &levels {
        print!("{l:>8}");
    }
    println!();
    for row in cells.chunks(levels.len()) {
        print!("{:>6}", row[0].levels_in);
        for c in row {
            match c.nu_bound {
                Some(nu) => print!("{nu:>8.4}"),
                None => print!("{:>8}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
