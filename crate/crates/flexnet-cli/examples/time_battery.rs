fn main() {
    let t0 = std::time::Instant::now();
    let report = flexnet_cli::battery::run_bound_battery(100, 20260810, 10);
    println!("bound battery: {:?} elapsed {:.1?}", report, t0.elapsed());
    let t1 = std::time::Instant::now();
    let mono = flexnet_cli::battery::run_monotonicity_battery(&flexnet_cli::battery::MonotonicityOptions {
        count: 50,
        seed: 42,
        ..Default::default()
    });
    println!("monotonicity: all_pass={} elapsed {:.1?}", mono.all_pass, t1.elapsed());
    for o in &mono.outcomes {
        println!("  {}: violations={} worst_margin={:.3e} slack={:.3e} identities={}",
                 o.kind, o.violations, o.worst_margin, o.worst_slack, o.identity_cases);
    }
}
