// How far Q_ε is from the identity as ε shrinks, written as CSV.

use feecproj::problem::{Problem, ProblemSpec};
use feecproj::report::write_epsilon_csv;
use feecproj::study::{default_epsilons, interpolation_error_study, StudyBands};

fn main() -> feecproj::Result<()> {
    let pb = Problem::generated(&ProblemSpec::new("unit_square", "P1-minus"), 2)?;
    let bands = StudyBands::default();
    let eps = default_epsilons(pb.ledger.eps_max, 5);
    let study = interpolation_error_study(&pb, 1, &eps, 2, 7, &bands)?;
    write_epsilon_csv(&study, bands.slope, std::io::stdout())?;
    println!("# constant 1-forms away from the boundary: ratio {:e}", study.constant_ratio);
    Ok(())
}
