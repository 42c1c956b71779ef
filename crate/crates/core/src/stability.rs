//! Perturbation studies for rays, Jacobi fields, beams and a scalar ODE under
//! changes of the sound speed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::beam::{chart_for_ray, GaussianBeam, TubeLattice, DEFAULT_ENTRY_TIME};
use crate::error::{Error, Result};
use crate::fermi::NullTube;
use crate::geodesic::{extend_geodesic, shoot_geodesic, Geodesic};
use crate::jacobi::{jacobi_y, JacobiData};
use crate::media::{SoundSpeed, Vec3};
use crate::ode::rk4;

/// `max |c₁ - c₂|` over an `n³` lattice of the closed cube.
pub fn c0_distance(c1: &SoundSpeed, c2: &SoundSpeed, n: usize) -> f64 {
    let n = n.max(2);
    let h = 2.0 / (n - 1) as f64;
    (0..n * n * n)
        .into_par_iter()
        .map(|q| {
            let x = [-1.0 + h * (q / (n * n)) as f64, -1.0 + h * ((q / n) % n) as f64, -1.0 + h * (q % n) as f64];
            (c1.c(x) - c2.c(x)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `sup_t |γ₁(t) - γ₂(t)|` over the samples both rays share inside the cube.
pub fn geodesic_deviation(g1: &Geodesic, g2: &Geodesic) -> f64 {
    let last = g1.exit_index.min(g2.exit_index);
    let first = g1.entry_index.max(g2.entry_index);
    (first..=last)
        .map(|k| {
            let (a, b) = (g1.x[k], g2.x[k]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// `sup_s |det Y₁ - det Y₂|` over shared samples.
pub fn det_y_deviation(j1: &JacobiData, j2: &JacobiData, last: usize) -> f64 {
    let k0 = j1.entry_index.max(j2.entry_index);
    (k0..=last.min(j1.s.len() - 1).min(j2.s.len() - 1)).map(|k| (j1.det_y[k] - j2.det_y[k]).norm()).fold(0.0, f64::max)
}

/// Deviations of one ray family between two media.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayDeviation {
    pub c0: f64,
    pub geodesic: f64,
    pub det_y: f64,
}

fn ray_data(c: &SoundSpeed, p: Vec3, dir: Vec3, h: f64) -> Result<(Geodesic, JacobiData)> {
    let g = shoot_geodesic(c, p, dir, h)?;
    let tube = NullTube::new(c, extend_geodesic(c, &g, 0.0)?)?;
    let (b, _) = tube.fermi_b(crate::beam::DEFAULT_HZ)?;
    let j = jacobi_y(&tube.frame.s, tube.geodesic.entry_index, &b)?;
    Ok((g, j))
}

/// Ray and Jacobi deviation for the ray `(p, dir)` in two media.
pub fn ray_deviation(c1: &SoundSpeed, c2: &SoundSpeed, p: Vec3, dir: Vec3, h: f64) -> Result<RayDeviation> {
    let (g1, j1) = ray_data(c1, p, dir, h)?;
    let (g2, j2) = ray_data(c2, p, dir, h)?;
    let last = g1.exit_index.min(g2.exit_index);
    Ok(RayDeviation { c0: c0_distance(c1, c2, 33), geodesic: geodesic_deviation(&g1, &g2), det_y: det_y_deviation(&j1, &j2, last) })
}

/// `max |v₁ - v₂|` of the beams along `(p, dir)` at frequency `tau`, sampled
/// on the union of both tube lattices.
pub fn beam_deviation(c1: &SoundSpeed, c2: &SoundSpeed, p: Vec3, dir: Vec3, h: f64, tau: f64, rho: f64) -> Result<f64> {
    let ch1 = Arc::new(chart_for_ray(c1, p, dir, h, DEFAULT_ENTRY_TIME)?);
    let ch2 = Arc::new(chart_for_ray(c2, p, dir, h, DEFAULT_ENTRY_TIME)?);
    let rho = rho.min(ch1.rho_max).min(ch2.rho_max);
    let v1 = GaussianBeam::new(ch1.clone(), tau, rho)?;
    let v2 = GaussianBeam::new(ch2.clone(), tau, rho)?;
    let mut points = Vec::new();
    for (beam, chart) in [(&v1, &ch1), (&v2, &ch2)] {
        let s_hi = chart.s_plus();
        let lat = TubeLattice { s_lo: 0.0, s_hi, ns: ((s_hi / 0.02).ceil() as usize).max(8), radius: beam.rho, nz: 8 };
        points.extend(lat.nodes(chart, f64::INFINITY).into_iter().map(|n| n.q));
    }
    points
        .par_iter()
        .map(|q| {
            let x = [q[1], q[2], q[3]];
            Ok((v1.eval(q[0], x)? - v2.eval(q[0], x)?).norm())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Empirical Lipschitz constant of `ẋ = sin x + α` on `[0, t_final]`:
/// the largest `‖x₁ - x₂‖_∞ / (|ξ₁ - ξ₂| + |α₁ - α₂|)` over the pairs.
pub fn scalar_ode_constant(pairs: &[((f64, f64), (f64, f64))], t_final: f64, h: f64) -> Result<f64> {
    let solve = |xi: f64, alpha: f64| rk4(move |_, x: &f64| x.sin() + alpha, xi, 0.0, t_final, h);
    let mut k = 0.0f64;
    for &((xi1, a1), (xi2, a2)) in pairs {
        let d = (xi1 - xi2).abs() + (a1 - a2).abs();
        if d == 0.0 {
            continue;
        }
        let (t1, t2) = (solve(xi1, a1)?, solve(xi2, a2)?);
        if t1.x.len() != t2.x.len() {
            return Err(Error::ShapeMismatch("trajectory lengths differ".into()));
        }
        let sup = t1.x.iter().zip(&t2.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        k = k.max(sup / d);
    }
    Ok(k)
}

/// Grönwall bound `max(1, T) e^T` for the scalar test equation.
pub fn scalar_ode_bound(t_final: f64) -> f64 {
    t_final.max(1.0) * t_final.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::loglog_fit;
    use crate::geodesic::DEFAULT_STEP;

    #[test]
    fn identical_media_have_no_deviation() {
        let c = SoundSpeed::herglotz(1.5).unwrap();
        let d = ray_deviation(&c, &c, [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], DEFAULT_STEP).unwrap();
        assert_eq!((d.c0, d.geodesic, d.det_y), (0.0, 0.0, 0.0));
    }

    #[test]
    fn herglotz_distance_is_alpha_gap() {
        let a = SoundSpeed::herglotz(1.5).unwrap();
        let b = SoundSpeed::herglotz(1.4).unwrap();
        assert!((c0_distance(&a, &b, 33) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ray_deviation_is_linear_in_speed_gap() {
        let c = SoundSpeed::herglotz(1.4).unwrap();
        let mut geo = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let d = ray_deviation(&c, &SoundSpeed::herglotz(1.4 + eps).unwrap(), [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], DEFAULT_STEP).unwrap();
            geo.push((d.c0, d.geodesic));
        }
        let f = loglog_fit(&geo).unwrap();
        assert!((f.slope - 1.0).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn scalar_ode_constant_within_gronwall() {
        let pairs = [((0.0, 0.0), (0.1, 0.0)), ((0.5, 0.2), (0.5, 0.25)), ((1.0, -0.3), (1.01, -0.29))];
        let k1 = scalar_ode_constant(&pairs, 3.0, 1e-2).unwrap();
        let k2 = scalar_ode_constant(&pairs, 3.0, 5e-3).unwrap();
        assert!(k1 > 0.0 && k1 <= scalar_ode_bound(3.0));
        assert!(((k1 - k2) / k2).abs() < 1e-6);
        assert_eq!(scalar_ode_constant(&[((0.3, 0.1), (0.3, 0.1))], 1.0, 1e-2).unwrap(), 0.0);
    }
}
