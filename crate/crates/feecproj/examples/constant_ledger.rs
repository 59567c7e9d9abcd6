// Print the measured and derived constants and the ε conditions.

use feecproj::problem::{Problem, ProblemSpec};

fn main() -> feecproj::Result<()> {
    for domain in ["unit_square", "l_shape"] {
        let pb = Problem::generated(&ProblemSpec::new(domain, "P1-minus"), 1)?;
        let l = &pb.ledger;
        let m = &l.measured;
        println!("{domain}: C_mesh {:.3}, ε_h {:.4}, L_Ψ {:.3}, L_Ω {:.3}", m.c_mesh, m.eps_h, m.l_psi, m.l_omega);
        for b in &l.bounds {
            println!("  {:<28} ε < {:e}", b.condition, b.bound);
        }
        println!("  ε_max {:e}, binding {}", l.eps_max, l.binding);
        for d in &l.derived {
            println!("  k{}: C_Q {:.3e}  C_e {:.3e}  C_π {:.3e}", d.k, d.c_q, d.c_e, d.c_pi);
        }
        println!("  recomputes: {}", l.recomputes());
    }
    Ok(())
}
