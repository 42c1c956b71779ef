//! Boundary/interior identity for the second-order DN map under grid refinement.
use westervelt::fields::Grid3D;
use westervelt::media::{Nonlinearity, SoundSpeed};
use westervelt::transform::{alessandrini_check, identity_backward_profile, identity_forward_profile, IDENTITY_T_FINAL};

fn main() -> westervelt::Result<()> {
    let c = SoundSpeed::constant(1.0)?;
    let beta = Nonlinearity::Constant(0.3);
    let (f, h) = (identity_forward_profile(), identity_backward_profile());
    println!("dx,dt,lhs,rhs,gap");
    let mut prev: Option<f64> = None;
    for (dx, dt) in [(0.0625, 0.03), (0.03125, 0.015)] {
        let r = alessandrini_check(&c, &beta, &f, &h, Grid3D::from_spacing(dx, dt, IDENTITY_T_FINAL)?)?;
        println!("{dx},{dt},{:e},{:e},{:e}", r.lhs, r.rhs, r.gap);
        if let Some(g) = prev {
            println!("order {:.3}", (g / r.gap).log2());
        }
        prev = Some(r.gap);
    }
    Ok(())
}
