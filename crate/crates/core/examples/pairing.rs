//! Beam pairing integral against the Jacobi-weighted ray transform on the
//! axis chord of the flat cube.
use std::sync::Arc;

use westervelt::beam::{axis_chart, GaussianBeam};
use westervelt::media::{Nonlinearity, SoundSpeed};
use westervelt::transform::{beam_pairing, jacobi_transform};

fn main() -> westervelt::Result<()> {
    let c = SoundSpeed::constant(1.0)?;
    let beta = Nonlinearity::Constant(1.0);
    let chart = Arc::new(axis_chart(&c)?);
    let j = jacobi_transform(&chart, &beta)?.value();
    println!("tau,rho,J_re,J_im,pairing_re,pairing_im,abs_gap");
    for tau in [40.0, 80.0, 160.0, 320.0] {
        let v = GaussianBeam::new(chart.clone(), tau, 1.0 / tau)?;
        let p = beam_pairing(&beta, &v, &v.partner())?;
        println!("{tau},{},{},{},{},{},{}", 1.0 / tau, j.re, j.im, p.re, p.im, (p - j).norm());
    }
    Ok(())
}
