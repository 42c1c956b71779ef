//! Rays and Jacobi fields in a Herglotz medium: exit point, travel time,
//! conserved invariant and the smallest `Im H` eigenvalue along the ray.
use westervelt::fermi::NullTube;
use westervelt::geodesic::{extend_geodesic, shoot_geodesic, DEFAULT_STEP};
use westervelt::jacobi::jacobi_y;
use westervelt::media::SoundSpeed;

fn main() -> westervelt::Result<()> {
    println!("alpha,exit_x,exit_y,exit_z,travel_time,speed_defect,c_theta_drift,min_im_h");
    for alpha in [1.0, 1.25, 1.5, 2.0] {
        let c = SoundSpeed::herglotz(alpha)?;
        let g = shoot_geodesic(&c, [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], DEFAULT_STEP)?;
        let tube = NullTube::new(&c, extend_geodesic(&c, &g, 0.0)?)?;
        let (b, _) = tube.fermi_b(westervelt::beam::DEFAULT_HZ)?;
        let j = jacobi_y(&tube.frame.s, tube.geodesic.entry_index, &b)?;
        let x = g.exit();
        println!(
            "{alpha},{:.6},{:.6},{:.6},{:.6},{:.2e},{:.2e},{:.4}",
            x[0],
            x[1],
            x[2],
            g.t_plus() - g.t_minus(),
            g.speed_defect(&c),
            j.c_theta_drift(),
            j.min_imag_eigenvalue()
        );
    }
    Ok(())
}
