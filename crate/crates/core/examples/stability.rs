//! Deviation of rays, Jacobi determinants and beams as the Herglotz
//! parameter is perturbed, plus the scalar ODE perturbation constant.
use westervelt::experiments::loglog_fit;
use westervelt::geodesic::DEFAULT_STEP;
use westervelt::media::SoundSpeed;
use westervelt::stability::{beam_deviation, ray_deviation, scalar_ode_bound, scalar_ode_constant};

fn main() -> westervelt::Result<()> {
    let alpha = 1.4;
    let (p, dir) = ([-1.0, 0.3, 0.2], [1.0, 0.1, -0.2]);
    let c1 = SoundSpeed::herglotz(alpha)?;
    let (mut geo, mut dety, mut beam) = (Vec::new(), Vec::new(), Vec::new());
    println!("eps,c0,geodesic,det_y,beam");
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let c2 = SoundSpeed::herglotz(alpha + eps)?;
        let d = ray_deviation(&c1, &c2, p, dir, DEFAULT_STEP)?;
        let b = beam_deviation(&c1, &c2, p, dir, DEFAULT_STEP, 50.0, 0.2)?;
        println!("{eps},{:e},{:e},{:e},{:e}", d.c0, d.geodesic, d.det_y, b);
        geo.push((d.c0, d.geodesic));
        dety.push((d.c0, d.det_y));
        beam.push((d.c0, b));
    }
    for (name, pts) in [("geodesic", &geo), ("det Y", &dety), ("beam", &beam)] {
        let f = loglog_fit(pts)?;
        println!("{name}: slope {:.4} R^2 {:.5}", f.slope, f.r2);
    }
    let pairs = [((0.0, 0.0), (0.1, 0.0)), ((0.5, 0.2), (0.5, 0.25)), ((1.0, -0.3), (1.01, -0.29))];
    for h in [1e-2, 5e-3, 2.5e-3] {
        println!("scalar ODE, h = {h}: K = {:.10}, bound {:.4}", scalar_ode_constant(&pairs, 3.0, h)?, scalar_ode_bound(3.0));
    }
    Ok(())
}
