// The variable-radius mollifier applied to a constant and to a
// discontinuous piecewise form, at points inside and near the boundary.

use feecproj::extension::{ExtendedField, PiecewiseField};
use feecproj::forms::{Continuity, PiecewiseForm};
use feecproj::problem::{Problem, ProblemSpec};
use feecproj::spaces::constant_form;

fn main() -> feecproj::Result<()> {
    let pb = Problem::generated(&ProblemSpec::new("unit_square", "P1-minus"), 2)?;
    let eps = 0.5 * pb.eps();
    let moll = pb.mollifier(eps)?;
    println!("ε = {eps:e}, {} ball nodes, radius at the centre {:e}", moll.nodes().len(), eps * pb.field.eval(&[0.5, 0.5, 0.0])?);

    let cells = pb.mesh.num_cells();
    let one = PiecewiseField::new(pb.mesh.clone(), &PiecewiseForm::uniform(&constant_form(2, 0, &[1.0]), cells));
    let one_ext = ExtendedField::new(&pb.geometry, &one);

    // cell index as a piecewise-constant 0-form: discontinuous everywhere
    let steps: Vec<_> = (0..cells).map(|c| constant_form(2, 0, &[c as f64])).collect();
    let stairs = PiecewiseField::new(pb.mesh.clone(), &PiecewiseForm::new(steps, Continuity::None));
    let stairs_ext = ExtendedField::new(&pb.geometry, &stairs);

    for x in [[0.5, 0.5, 0.0], [0.3, 0.1, 0.0], [1e-7, 0.4, 0.0]] {
        let r1 = moll.eval(&one_ext, &x)?;
        let rs = moll.eval(&stairs_ext, &x)?;
        println!("x = ({:.1e}, {:.2}): R1 − 1 = {:+.1e}, R(stairs) = {:.6}", x[0], x[1], r1[0] - 1.0, rs[0]);
    }
    Ok(())
}
