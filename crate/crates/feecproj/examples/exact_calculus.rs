// Polynomial differential forms with rational coefficients: the exterior
// derivative, the wedge product and Stokes' theorem on a triangle.

use feecproj::chains::WeightedChain;
use feecproj::forms::PolyForm;
use feecproj::poly::{rat, Poly};

fn main() -> feecproj::Result<()> {
    let n = 2;
    let (x, y) = (Poly::var(n, 0), Poly::var(n, 1));
    // u = x²y as a 0-form and α = y dx − x dy as a 1-form
    let u = PolyForm::scalar(&(&x * &x) * &y);
    let alpha = PolyForm::basic(n, 0b01).mul_poly(&y).sub(&PolyForm::basic(n, 0b10).mul_poly(&x))?;

    let du = u.d();
    println!("d(x²y) has degree {:?} and d(d(x²y)) is zero: {}", du.degree(), du.d().is_zero());

    // Leibniz: d(u α) = du ∧ α + u dα
    let lhs = alpha.mul_poly(&u.component(0)).d();
    let rhs = du.wedge(&alpha)?.add(&alpha.d().mul_poly(&u.component(0)))?;
    println!("Leibniz holds exactly: {}", lhs == rhs);

    // dα = −2 dx∧dy, so ∫_T dα = −2 |T| on any triangle
    println!("dα = {} dx∧dy", alpha.d().component(0b11).coeff(&[0, 0, 0]));
    let triangle = WeightedChain::simplex(n, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.5, 0.0]])?;
    let interior = triangle.integrate(&alpha.d());
    let boundary = triangle.boundary().integrate(&alpha);
    println!("∫_T dα = {interior:.15}, ∫_∂T α = {boundary:.15}");

    // rational scaling stays exact
    let third = alpha.scale(&rat(1, 3));
    println!("(α/3)(1, 1) = {:?}", third.eval_f64(&[1.0, 1.0]));
    Ok(())
}
