//! Forward Westervelt solve on the desk grid with the smooth onset profile,
//! followed by the Neumann trace on one face.
use westervelt::fields::{l2_sigma, Grid3D};
use westervelt::media::{Nonlinearity, SoundSpeed};
use westervelt::solvers::{dn_trace, solve_westervelt, DirichletProfile};

fn main() -> westervelt::Result<()> {
    let c = SoundSpeed::constant(1.0)?;
    let grid = Grid3D::from_spacing(0.125, 0.03, 3.48)?;
    let f = DirichletProfile::onset(0.1);
    println!("beta,min_factor,max_abs,l2,picard_iterations,max_cg_iterations,dn_l2");
    for beta in [0.0, 0.5, 1.0] {
        let r = solve_westervelt(&c, &Nonlinearity::Constant(beta), &f, grid)?;
        let s = r.summary();
        let dn = dn_trace(&r);
        println!(
            "{beta},{:.6},{:.6},{:.6},{},{},{:.6}",
            s.min_factor, s.max_abs, s.l2, s.picard_iterations, s.max_cg_iterations, l2_sigma(&dn)
        );
    }
    Ok(())
}
