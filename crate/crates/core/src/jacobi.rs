//! Complex Jacobi system `Ẏ = AZ`, `Ż = -BY` along a null geodesic and the
//! Riccati solution `H = Z Y⁻¹`.

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::media::Mat3;

pub type CMat3 = Matrix3<Complex64>;

/// `A = diag(0, 1, 1)`.
pub fn a_matrix() -> CMat3 {
    CMat3::from_diagonal(&nalgebra::Vector3::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)))
}

/// Solution of the Jacobi system on an `s`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiData {
    pub s: Vec<f64>,
    pub y: Vec<CMat3>,
    pub z: Vec<CMat3>,
    pub h: Vec<CMat3>,
    pub det_y: Vec<Complex64>,
    pub b: Vec<Mat3>,
    /// Index of `s₋`, where `Y = I` and `Z = iI`.
    pub entry_index: usize,
    /// `det(Im H) |det Y|^2` at `s₋`.
    pub c_theta: f64,
}

fn real(m: &Mat3) -> CMat3 {
    CMat3::from_fn(|i, j| Complex64::new(m[i][j], 0.0))
}

/// Lagrange interpolation of `B` at `s` from the four samples around it.
pub fn interpolate_b(s_grid: &[f64], b: &[Mat3], s: f64) -> Mat3 {
    let n = s_grid.len();
    if n < 4 {
        let k = s_grid.iter().rposition(|v| *v <= s).unwrap_or(0);
        return b[k];
    }
    let k = match s_grid.binary_search_by(|p| p.partial_cmp(&s).unwrap()) {
        Ok(k) | Err(k) => k,
    };
    let start = k.saturating_sub(2).min(n - 4);
    let mut out = [[0.0; 3]; 3];
    for a in start..start + 4 {
        let mut w = 1.0;
        for m in start..start + 4 {
            if m != a {
                w *= (s - s_grid[m]) / (s_grid[a] - s_grid[m]);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] += w * b[a][i][j];
            }
        }
    }
    out
}

fn imag_det(h: &CMat3) -> f64 {
    h.map(|v| v.im).determinant()
}

/// Integrates the Jacobi system forward and backward from `entry_index`
/// with `Y(s₋) = I`, `Z(s₋) = iI`.
pub fn jacobi_y(s: &[f64], entry_index: usize, b: &[Mat3]) -> Result<JacobiData> {
    if s.len() != b.len() || entry_index >= s.len() || s.len() < 2 {
        return Err(Error::ShapeMismatch(format!("{} s samples, {} B samples", s.len(), b.len())));
    }
    let a = a_matrix();
    let n = s.len();
    let i = Complex64::new(0.0, 1.0);
    let mut y = vec![CMat3::identity(); n];
    let mut z = vec![CMat3::identity() * i; n];
    let rhs = |sv: f64, yy: &CMat3, zz: &CMat3| {
        let bb = real(&interpolate_b(s, b, sv));
        (a * zz, -(bb * yy))
    };
    let step = |s0: f64, h: f64, y0: &CMat3, z0: &CMat3| {
        let (ky1, kz1) = rhs(s0, y0, z0);
        let (ky2, kz2) = rhs(s0 + 0.5 * h, &(y0 + ky1 * Complex64::from(0.5 * h)), &(z0 + kz1 * Complex64::from(0.5 * h)));
        let (ky3, kz3) = rhs(s0 + 0.5 * h, &(y0 + ky2 * Complex64::from(0.5 * h)), &(z0 + kz2 * Complex64::from(0.5 * h)));
        let (ky4, kz4) = rhs(s0 + h, &(y0 + ky3 * Complex64::from(h)), &(z0 + kz3 * Complex64::from(h)));
        let w = Complex64::from(h / 6.0);
        let two = Complex64::from(2.0);
        let yn: CMat3 = y0 + (ky1 + ky2 * two + ky3 * two + ky4) * w;
        let zn: CMat3 = z0 + (kz1 + kz2 * two + kz3 * two + kz4) * w;
        (yn, zn)
    };
    for k in entry_index + 1..n {
        let (yn, zn) = step(s[k - 1], s[k] - s[k - 1], &y[k - 1], &z[k - 1]);
        y[k] = yn;
        z[k] = zn;
    }
    for k in (0..entry_index).rev() {
        let (yn, zn) = step(s[k + 1], s[k] - s[k + 1], &y[k + 1], &z[k + 1]);
        y[k] = yn;
        z[k] = zn;
    }
    let mut h = Vec::with_capacity(n);
    let mut det_y = Vec::with_capacity(n);
    for k in 0..n {
        let d = y[k].determinant();
        if !(d.norm() >= 1e-10) {
            return Err(Error::DetYDegenerate(d.norm(), s[k]));
        }
        let inv = y[k].try_inverse().ok_or(Error::DetYDegenerate(d.norm(), s[k]))?;
        h.push(z[k] * inv);
        det_y.push(d);
    }
    let c_theta = imag_det(&h[entry_index]) * det_y[entry_index].norm_sqr();
    Ok(JacobiData { s: s.to_vec(), y, z, h, det_y, b: b.to_vec(), entry_index, c_theta })
}

impl JacobiData {
    /// Largest relative deviation of `det(Im H) |det Y|^2` from `C_θ`.
    pub fn c_theta_drift(&self) -> f64 {
        self.h
            .iter()
            .zip(&self.det_y)
            .map(|(h, d)| ((imag_det(h) * d.norm_sqr() - self.c_theta) / self.c_theta).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of `Im H` over the samples.
    pub fn min_imag_eigenvalue(&self) -> f64 {
        self.h
            .iter()
            .map(|h| {
                let im = h.map(|v| v.im);
                let sym = (im + im.transpose()) * 0.5;
                sym.symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest entry of `Ḣ + HAH + B` by central differences at interior samples.
    pub fn riccati_residual(&self) -> f64 {
        let a = a_matrix();
        let mut worst = 0.0f64;
        for k in 1..self.s.len() - 1 {
            let (h1, h2) = (self.s[k] - self.s[k - 1], self.s[k + 1] - self.s[k]);
            let hd = self.h[k + 1] * Complex64::from(h1 / (h2 * (h1 + h2)))
                - self.h[k - 1] * Complex64::from(h2 / (h1 * (h1 + h2)))
                + self.h[k] * Complex64::from((h2 - h1) / (h1 * h2));
            let r = hd + self.h[k] * a * self.h[k] + real(&self.b[k]);
            worst = worst.max(r.iter().map(|v| v.norm()).fold(0.0, f64::max));
        }
        worst
    }

    /// `Ḣ = -HAH - B` at sample `k`.
    pub fn h_rate(&self, k: usize) -> CMat3 {
        let a = a_matrix();
        -(self.h[k] * a * self.h[k]) - real(&self.b[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermi::NullTube;
    use crate::geodesic::{extend_geodesic, shoot_geodesic, DEFAULT_STEP};
    use crate::media::SoundSpeed;

    fn herglotz(h: f64) -> (NullTube, JacobiData) {
        let c = SoundSpeed::herglotz(1.5).unwrap();
        let g = shoot_geodesic(&c, [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], h).unwrap();
        let g = extend_geodesic(&c, &g, 0.3).unwrap();
        let tube = NullTube::new(&c, g).unwrap();
        let (b, _) = tube.fermi_b(0.02).unwrap();
        let j = jacobi_y(&tube.frame.s, tube.geodesic.entry_index, &b).unwrap();
        (tube, j)
    }

    #[test]
    fn flat_closed_form() {
        let s: Vec<f64> = (0..=2000).map(|k| -0.5 + k as f64 * 2e-3).collect();
        let b = vec![[[0.0; 3]; 3]; s.len()];
        let j = jacobi_y(&s, 250, &b).unwrap();
        let i = Complex64::new(0.0, 1.0);
        for k in 0..s.len() {
            let ds = s[k] - s[250];
            let w = Complex64::new(1.0, ds);
            assert!((j.det_y[k] - w * w).norm() < 1e-12);
            assert!((j.z[k] - CMat3::identity() * i).norm() < 1e-12);
            let want = [i, i / w, i / w];
            for d in 0..3 {
                assert!((j.h[k][(d, d)] - want[d]).norm() < 1e-12);
            }
        }
        assert!((j.c_theta - 1.0).abs() < 1e-15);
        assert!(j.c_theta_drift() < 1e-12);
    }

    #[test]
    fn herglotz_invariants() {
        let (_, j) = herglotz(DEFAULT_STEP);
        assert!((j.c_theta - 1.0).abs() < 1e-15);
        assert!(j.c_theta_drift() < 1e-6, "drift {}", j.c_theta_drift());
        assert!(j.min_imag_eigenvalue() > 0.0);
        assert!(j.riccati_residual() < 1e-5, "riccati {}", j.riccati_residual());
    }

    #[test]
    fn b_interpolation_is_exact_for_cubics() {
        let s: Vec<f64> = (0..10).map(|k| k as f64 * 0.1 + if k == 9 { -0.03 } else { 0.0 }).collect();
        let f = |x: f64| x * x * x - 2.0 * x + 0.5;
        let b: Vec<Mat3> = s.iter().map(|x| [[f(*x), 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).collect();
        for x in [0.0, 0.05, 0.33, 0.79, 0.85] {
            assert!((interpolate_b(&s, &b, x)[0][0] - f(x)).abs() < 1e-12);
        }
    }
}
