// The lowest-order complex on a refined square: interpolate polynomial
// forms and check that interpolation commutes with the exterior derivative.

use feecproj::forms::{PiecewiseForm, PolyForm};
use feecproj::mesh::generate;
use feecproj::poly::Poly;
use feecproj::spaces::{ComplexSpec, FeComplex};
use nalgebra::DVector;
use std::sync::Arc;

fn main() -> feecproj::Result<()> {
    let mesh = Arc::new(generate("unit_square", 2)?);
    let complex = FeComplex::build(mesh.clone(), &ComplexSpec::parse("P1-minus", 2)?)?;
    for (k, space) in complex.spaces.iter().enumerate() {
        println!("degree {k}: {} with {} DOFs", space.spec, space.dim());
    }

    let (x, y) = (Poly::var(2, 0), Poly::var(2, 1));
    let u = PolyForm::scalar(&(&(&x * &x) * &y) - &(&y * &y));
    let cells = mesh.num_cells();
    let pw = PiecewiseForm::uniform(&u, cells);

    let d0 = complex.derivative(0)?;
    let iu = DVector::from_vec(complex.spaces[0].interpolate(&pw));
    let idu = DVector::from_vec(complex.spaces[1].interpolate(&pw.d()));
    println!("|D I u − I du|_max = {:e}", (&d0 * &iu - &idu).amax());

    // a second application of I changes nothing
    let again = complex.spaces[0].interpolate(&complex.spaces[0].to_piecewise(&complex.spaces[0].interpolate_exact(&pw)));
    let drift = again.iter().zip(iu.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("|I I u − I u|_max = {drift:e}");

    let d1 = complex.derivative(1)?;
    println!("|D₁ D₀|_max = {:e}", (&d1 * &d0).amax());
    Ok(())
}
