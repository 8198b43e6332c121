//! Compares the solver's choice against brute-force enumeration on random
//! stacks. Arguments: number of cases (default 1000) and seed (default 7).

use assistive_arm::harness::verify_oracle;

fn main() -> assistive_arm::Result<()> {
    let mut args = std::env::args().skip(1);
    let cases = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);
    let report = verify_oracle(cases, seed)?;
    println!(
        "{} cases, seed {}, by active count {:?}: {} mismatches, max velocity diff {:.2e}, {:.2?}",
        report.cases,
        report.seed,
        report.by_active,
        report.mismatches.len(),
        report.max_velocity_diff,
        report.elapsed
    );
    for m in &report.mismatches {
        println!("  {m:?}");
    }
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}
