// Run the exact-calculus suite, wrap it in a report and read it back.

use feecproj::config::RunConfig;
use feecproj::report::Report;
use feecproj::verify::{run_suite, Suite};

fn main() -> feecproj::Result<()> {
    let cfg = RunConfig::default();
    let mut report = Report::new("verify calculus", &cfg);
    report.suites.push(run_suite(Suite::Calculus, &cfg, &mut None)?);
    report.finish();
    for c in &report.suites[0].checks {
        println!("{:<28} {:>12.3e} {}", c.name, c.value, c.bound);
    }
    let json = report.to_json()?;
    let back = Report::from_json(&json)?;
    println!("{} bytes, round trip equal: {}, pass: {}", json.len(), back == report, back.pass);
    Ok(())
}
