//! Packet-loss schedules: the generators, the (xi, nu) bound check and the
//! text format used to replay a schedule.

use zoomquant::{bernoulli_clipped, greedy_worst, periodic, LossSchedule};

fn summary(name: &str, s: &LossSchedule) {
    let head: String = s
        .theta()
        .iter()
        .take(40)
        .map(|&l| if l { 'x' } else { '.' })
        .collect();
    let check = s.verify_bound();
    println!(
        "{name:<10} losses {:>3}/{:<3} xi {:<6.3} nu {:<6.3} bound ok {:<5} {head}",
        s.losses(),
        s.horizon(),
        s.xi(),
        s.nu(),
        check.ok
    );
}

fn main() -> zoomquant::Result<()> {
    let horizon = 200;
    let worst = greedy_worst(1.0, 0.175, horizon)?;
    let random = bernoulli_clipped(0.12, 1.0, 0.175, horizon, 7)?;
    let bursts = periodic(12, 2, horizon)?;
    summary("greedy", &worst);
    summary("bernoulli", &random);
    summary("periodic", &bursts);

    // Claiming a tighter nu than the schedule obeys is caught.
    let tight = bursts.clone().with_claim(0.0, 0.1)?;
    let check = tight.verify_bound();
    println!(
        "periodic claimed at nu = 0.1: ok = {}, first violation at k = {:?}",
        check.ok, check.first_violation
    );

    let text = random.to_text();
    let back = LossSchedule::from_text(&text)?;
    assert_eq!(back.theta(), random.theta());
    println!("text form round-trips; first lines:");
    for line in text.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
