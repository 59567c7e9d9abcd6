// Generate each built-in domain, refine it, and print the quantities the
// rest of the library depends on.

use feecproj::mesh::generate;

fn main() -> feecproj::Result<()> {
    for (domain, levels) in [("unit_square", 0..3), ("l_shape", 0..2), ("unit_cube", 0..2), ("crossed_bricks", 0..1)] {
        for level in levels {
            let mesh = generate(domain, level)?;
            let counts: Vec<String> = (0..=mesh.n()).map(|d| mesh.num_simplices(d).to_string()).collect();
            println!(
                "{domain:>15} level {level}: simplices [{}], volume {:.4}, h {:.4}, C_mesh {:.3}, boundary facets {}",
                counts.join(", "),
                mesh.total_volume(),
                mesh.h_max(),
                mesh.shape_constant(),
                mesh.boundary_facets().len(),
            );
        }
    }
    Ok(())
}
