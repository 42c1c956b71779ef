//! Residual and norm scaling of Gaussian beams along the axis chord of the
//! unit cube with `c ≡ 1`.

use std::sync::Arc;

use westervelt::beam::{axis_chart, beam_norms, residual_row, GaussianBeam};
use westervelt::media::SoundSpeed;

fn main() -> westervelt::Result<()> {
    let c = SoundSpeed::constant(1.0)?;
    let chart = Arc::new(axis_chart(&c)?);
    let rho = chart.rho_max;
    println!("tau,rho,l2,c0,core_fraction,residual,residual_refined");
    for tau in [25.0, 50.0, 100.0, 200.0] {
        let beam = GaussianBeam::new(chart.clone(), tau, rho)?;
        let n = beam_norms(&beam)?;
        let r = residual_row(&beam)?;
        println!("{tau},{rho},{},{},{},{},{}", n.l2, n.c0, n.core_fraction, r.residual, r.residual_refined);
    }
    Ok(())
}
