//! Optimizes a preset and verifies the result, printing timings.
//!
//! `cargo run --release -p epictrl-core --example timing -- cities3 8 600`

use epictrl_core::optimize::{optimize_switch_times, OptimizeOptions};
use epictrl_core::preset;
use epictrl_core::verify::verify_schedule;
use std::time::Instant;

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "cities3".into());
    let starts = args.next().map_or(8, |s| s.parse().unwrap());
    let max_iters = args.next().map_or(600, |s| s.parse().unwrap());
    let sc = preset(&name).unwrap();
    let opts = OptimizeOptions {
        starts,
        max_iters,
        ..Default::default()
    };
    let t = Instant::now();
    let r = optimize_switch_times(&sc, &opts).unwrap();
    println!("{name}: J = {:.12} in {:.1?}, {} evaluations", r.j, t.elapsed(), r.evaluations);
    for s in &r.starts {
        println!("  start {}: J = {:.12}, {} evals, converged {}", s.start, s.j, s.evaluations, s.converged);
    }
    for d in &r.diagnostics {
        println!("  {d}");
    }
    let sched = r.schedule.unwrap();
    println!("  tau = {:?}", sched.tau);
    let t = Instant::now();
    let report = verify_schedule(&sc, &sched, opts.h).unwrap();
    print!("{}", report.to_text());
    for s in &report.sections {
        println!("  {}: {:?}", s.name, s.metrics);
    }
    println!("verified in {:.1?}", t.elapsed());
}
