// Assemble Q_ε for 1-forms on the reference square, invert it on the FE
// space and inspect the resulting projection.

use feecproj::problem::{Problem, ProblemSpec};
use feecproj::projection::{broken_gram, broken_space, gram_matrix, induced_norm, Projection, Smoother};

fn main() -> feecproj::Result<()> {
    let pb = Problem::generated(&ProblemSpec::new("unit_square", "P1-minus"), 1)?;
    let eps = pb.eps();
    let space = &pb.complex.spaces[1];
    let broken = broken_space(space)?;
    let moll = pb.mollifier(eps)?;
    let mats = Smoother::new(&moll, Smoother::default_degree(space)).assemble(space, Some(&broken))?;
    let gram = gram_matrix(space)?;
    let proj = Projection::build(&mats, &gram)?;
    let pi_broken = proj.pi_broken.as_ref().expect("broken columns requested");

    println!("ε = {eps:e} (binding condition: {})", pb.ledger.binding);
    println!("‖Id − Q‖ = {:e}", proj.neumann_norm);
    println!("|J − Neumann series| = {:e}", proj.neumann_gap);
    println!("|π² − π| = {:e}", proj.idempotency_residual());
    println!("‖π‖ from the broken space = {:.6}", induced_norm(pi_broken, &gram, &broken_gram(&broken)?)?);
    Ok(())
}
