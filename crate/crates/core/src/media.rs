//! Sound-speed and nonlinearity models, the acoustic metric `g = c^-2 δ`,
//! its Christoffel symbols and the Herglotz condition.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::fields::{trilinear_clamped, Grid3D, ScalarField3D};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Half-width of the extended cube on which media must stay positive.
pub const EXTENDED_HALF_WIDTH: f64 = 1.25;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Sampled field with fourth-order derivative tables, continued by a constant
/// outside the cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub field: ScalarField3D,
    grad: [Vec<f64>; 3],
    hess: [Vec<f64>; 6],
}

fn hidx(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    }
}

fn d1_axis(grid: &Grid3D, v: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n as isize;
    let h = grid.dx;
    (0..grid.len())
        .map(|idx| {
            let (i, j, k) = grid.ijk(idx);
            let at = |o: isize| {
                let mut p = [i as isize, j as isize, k as isize];
                p[axis] = (p[axis] + o).clamp(0, n - 1);
                v[grid.idx(p[0] as usize, p[1] as usize, p[2] as usize)]
            };
            (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
        })
        .collect()
}

fn d2_axis(grid: &Grid3D, v: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n as isize;
    let h = grid.dx;
    (0..grid.len())
        .map(|idx| {
            let (i, j, k) = grid.ijk(idx);
            let at = |o: isize| {
                let mut p = [i as isize, j as isize, k as isize];
                p[axis] = (p[axis] + o).clamp(0, n - 1);
                v[grid.idx(p[0] as usize, p[1] as usize, p[2] as usize)]
            };
            (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * h * h)
        })
        .collect()
}

impl Tabulated {
    pub fn new(field: ScalarField3D) -> Self {
        let g = field.grid;
        let v = &field.values;
        let grad = [d1_axis(&g, v, 0), d1_axis(&g, v, 1), d1_axis(&g, v, 2)];
        let hess = [
            d2_axis(&g, v, 0),
            d2_axis(&g, v, 1),
            d2_axis(&g, v, 2),
            d1_axis(&g, &grad[0], 1),
            d1_axis(&g, &grad[0], 2),
            d1_axis(&g, &grad[1], 2),
        ];
        Self { field, grad, hess }
    }

    pub fn value(&self, x: Vec3) -> f64 {
        trilinear_clamped(&self.field.grid, &self.field.values, x)
    }

    fn outside(x: Vec3, d: usize) -> bool {
        x[d].abs() > 1.0
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        let g = &self.field.grid;
        let mut out = [0.0; 3];
        for (d, o) in out.iter_mut().enumerate() {
            if !Self::outside(x, d) {
                *o = trilinear_clamped(g, &self.grad[d], x);
            }
        }
        out
    }

    pub fn hessian(&self, x: Vec3) -> Mat3 {
        let g = &self.field.grid;
        let mut out = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                if !Self::outside(x, a) && !Self::outside(x, b) {
                    out[a][b] = trilinear_clamped(g, &self.hess[hidx(a, b)], x);
                }
            }
        }
        out
    }
}

/// Sound speed `c(x) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum SoundSpeed {
    Constant(f64),
    /// `c_α(x) = α√3 / ((α-1)|x| + √3)`.
    Herglotz(f64),
    Tabulated(Box<Tabulated>),
}

/// Nonlinearity coefficient β(x).
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Constant(f64),
    Tabulated(ScalarField3D),
}

/// `c_α(x) = α√3 / ((α-1)|x| + √3)`.
pub fn herglotz_c(alpha: f64, x: Vec3) -> Result<f64> {
    if !(alpha >= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(herglotz_radial(alpha, norm(x)).0)
}

/// `(c, c', c'')` of the Herglotz profile at radius `r`.
fn herglotz_radial(alpha: f64, r: f64) -> (f64, f64, f64) {
    let k = (alpha - 1.0) / SQRT_3;
    let q = 1.0 + k * r;
    (alpha / q, -alpha * k / (q * q), 2.0 * alpha * k * k / (q * q * q))
}

pub fn norm(x: Vec3) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

impl SoundSpeed {
    pub fn constant(c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidMedium(format!("c = {c0}")));
        }
        Ok(Self::Constant(c0))
    }

    pub fn herglotz(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self::Herglotz(alpha))
    }

    pub fn tabulated(field: ScalarField3D) -> Result<Self> {
        if field.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidMedium("tabulated sound speed must be positive".into()));
        }
        Ok(Self::Tabulated(Box::new(Tabulated::new(field))))
    }

    pub fn c(&self, x: Vec3) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Herglotz(a) => herglotz_radial(*a, norm(x)).0,
            Self::Tabulated(t) => t.value(x),
        }
    }

    pub fn grad(&self, x: Vec3) -> Vec3 {
        match self {
            Self::Constant(_) => [0.0; 3],
            Self::Herglotz(a) => {
                let r = norm(x);
                if r == 0.0 {
                    return [0.0; 3];
                }
                let (_, d1, _) = herglotz_radial(*a, r);
                [d1 * x[0] / r, d1 * x[1] / r, d1 * x[2] / r]
            }
            Self::Tabulated(t) => t.gradient(x),
        }
    }

    /// Hessian of `c`. The Herglotz profile is not differentiable at the
    /// origin; there the Hessian is reported as zero.
    pub fn hess(&self, x: Vec3) -> Mat3 {
        match self {
            Self::Constant(_) => [[0.0; 3]; 3],
            Self::Herglotz(a) => {
                let r = norm(x);
                if r == 0.0 {
                    return [[0.0; 3]; 3];
                }
                let (_, d1, d2) = herglotz_radial(*a, r);
                let u = [x[0] / r, x[1] / r, x[2] / r];
                let mut h = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = d2 * u[i] * u[j] + d1 / r * (delta - u[i] * u[j]);
                    }
                }
                h
            }
            Self::Tabulated(t) => t.hessian(x),
        }
    }

    /// `∇ log c` and its Jacobian.
    pub fn log_derivs(&self, x: Vec3) -> (Vec3, Mat3) {
        let c = self.c(x);
        let g = self.grad(x);
        let h = self.hess(x);
        let l = [g[0] / c, g[1] / c, g[2] / c];
        let mut dl = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                dl[i][j] = h[i][j] / c - l[i] * l[j];
            }
        }
        (l, dl)
    }

    /// Upper bound of `c` on the cube (sampled for tabulated media).
    pub fn max_on_domain(&self) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Herglotz(a) => *a,
            Self::Tabulated(t) => t.field.values.iter().cloned().fold(f64::MIN, f64::max),
        }
    }

    pub fn min_on_domain(&self) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Herglotz(a) => herglotz_radial(*a, SQRT_3).0,
            Self::Tabulated(t) => t.field.values.iter().cloned().fold(f64::MAX, f64::min),
        }
    }

    /// Lower bound of `c` on the extended cube.
    pub fn min_on_extended(&self) -> f64 {
        match self {
            Self::Herglotz(a) => herglotz_radial(*a, SQRT_3 * EXTENDED_HALF_WIDTH).0,
            _ => self.min_on_domain(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }
}

impl Nonlinearity {
    pub fn beta(&self, x: Vec3) -> f64 {
        match self {
            Self::Constant(b) => *b,
            Self::Tabulated(f) => trilinear_clamped(&f.grid, &f.values, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(b) => *b == 0.0,
            Self::Tabulated(f) => f.values.iter().all(|v| *v == 0.0),
        }
    }
}

/// Checks `∂_r (r / c(r)) > 0` at `samples` radii in `(0, √3]`.
pub fn herglotz_check(c: &SoundSpeed, samples: usize) -> Result<bool> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let radii = (1..=samples).map(|i| SQRT_3 * i as f64 / samples as f64);
    match c {
        SoundSpeed::Constant(c0) => Ok(1.0 / c0 > 0.0),
        SoundSpeed::Herglotz(a) => Ok(radii
            .map(|r| {
                let (cv, d1, _) = herglotz_radial(*a, r);
                1.0 / cv - r * d1 / (cv * cv)
            })
            .all(|d| d > 0.0)),
        SoundSpeed::Tabulated(t) => {
            let g = t.field.grid;
            let half = (g.n - 1) / 2;
            for s in 0..=half {
                let along = |d: usize, sign: f64| {
                    let mut x = [0.0; 3];
                    x[d] = sign * s as f64 * g.dx;
                    t.value(x)
                };
                let reference = along(0, 1.0);
                for d in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let v = along(d, sign);
                        if (v - reference).abs() > 1e-9 * reference.abs().max(1.0) {
                            return Err(Error::NonRadial(format!("c differs along axis {d} at r = {}", s as f64 * g.dx)));
                        }
                    }
                }
            }
            let diag = |r: f64| {
                let u = r / SQRT_3;
                r / t.value([u, u, u])
            };
            let h = 1e-4;
            Ok(radii
                .map(|r| {
                    let lo = (r - h).max(0.0);
                    let hi = (r + h).min(SQRT_3);
                    (diag(hi) - diag(lo)) / (hi - lo)
                })
                .all(|d| d > 0.0))
        }
    }
}

/// Christoffel symbols `Γ[k][i][j]` of `g = c^-2 δ`.
pub fn christoffel(c: &SoundSpeed, x: Vec3) -> [[[f64; 3]; 3]; 3] {
    let (l, _) = c.log_derivs(x);
    let mut g = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                if j == k {
                    v -= l[i];
                }
                if i == k {
                    v -= l[j];
                }
                if i == j {
                    v += l[k];
                }
                g[k][i][j] = v;
            }
        }
    }
    g
}

/// Christoffel symbols `Γ̄[μ][ν][σ]` of `-dt^2 + g`, index 0 being time.
pub fn spacetime_christoffel(c: &SoundSpeed, x: Vec3) -> [[[f64; 4]; 4]; 4] {
    let s = christoffel(c, x);
    let mut g = [[[0.0; 4]; 4]; 4];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                g[k + 1][i + 1][j + 1] = s[k][i][j];
            }
        }
    }
    g
}

/// Geodesic acceleration `-Γ(v,v) = 2(v·∇log c)v - |v|^2 ∇log c`.
pub fn geodesic_accel(l: Vec3, v: Vec3) -> Vec3 {
    let vl = v[0] * l[0] + v[1] * l[1] + v[2] * l[2];
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    [2.0 * vl * v[0] - vv * l[0], 2.0 * vl * v[1] - vv * l[1], 2.0 * vl * v[2] - vv * l[2]]
}

/// Directional derivative of [`geodesic_accel`] along `(dx, dv)`.
pub fn geodesic_accel_tangent(l: Vec3, dl: &Mat3, v: Vec3, dx: Vec3, dv: Vec3) -> Vec3 {
    let dot = |a: Vec3, b: Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let mut dlx = [0.0; 3];
    for i in 0..3 {
        dlx[i] = dl[i][0] * dx[0] + dl[i][1] * dx[1] + dl[i][2] * dx[2];
    }
    let vl = dot(v, l);
    let vv = dot(v, v);
    let d_vl = dot(dv, l) + dot(v, dlx);
    let d_vv = 2.0 * dot(v, dv);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = 2.0 * d_vl * v[i] + 2.0 * vl * dv[i] - d_vv * l[i] - vv * dlx[i];
    }
    out
}

/// `ḡ(a, b)` for spacetime vectors at spatial point `x`.
pub fn spacetime_inner(c: &SoundSpeed, x: Vec3, a: [f64; 4], b: [f64; 4]) -> f64 {
    let cv = c.c(x);
    -a[0] * b[0] + (a[1] * b[1] + a[2] * b[2] + a[3] * b[3]) / (cv * cv)
}

/// `1/√2`, used by the null frame.
pub const FRAC_1_SQRT_2: f64 = 1.0 / SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn metric(c: &SoundSpeed, x: Vec3) -> f64 {
        let v = c.c(x);
        1.0 / (v * v)
    }

    /// Christoffel symbols from central differences of `g_ij = c^-2 δ_ij`.
    fn fd_christoffel(c: &SoundSpeed, x: Vec3, h: f64) -> [[[f64; 3]; 3]; 3] {
        let dg = |m: usize| {
            let mut p = x;
            let mut q = x;
            p[m] += h;
            q[m] -= h;
            (metric(c, p) - metric(c, q)) / (2.0 * h)
        };
        let d = [dg(0), dg(1), dg(2)];
        let ginv = 1.0 / metric(c, x);
        let mut out = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let dij = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                    out[k][i][j] = 0.5 * ginv * (d[i] * dij(j, k) + d[j] * dij(i, k) - d[k] * dij(i, j));
                }
            }
        }
        out
    }

    #[test]
    fn herglotz_values() {
        let x = [0.0; 3];
        assert!((herglotz_c(2.7, x).unwrap() - 2.7).abs() < 1e-15);
        assert!((herglotz_c(1.5, [1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        for q in [[0.3, -0.2, 0.9], [1.0, 1.0, -1.0]] {
            assert_eq!(herglotz_c(1.0, q).unwrap(), 1.0);
        }
        assert!(matches!(herglotz_c(0.9, x), Err(Error::InvalidAlpha(_))));
        assert!(SoundSpeed::herglotz(0.5).is_err());
    }

    #[test]
    fn herglotz_condition() {
        assert!(herglotz_check(&SoundSpeed::Constant(1.3), 100).unwrap());
        assert!(herglotz_check(&SoundSpeed::Herglotz(1.5), 100).unwrap());
        let g = Grid3D::new(33, 0.1, 2).unwrap();
        let fast = ScalarField3D::from_fn(g, |x| (5.0 * norm(x)).exp());
        let c = SoundSpeed::tabulated(fast).unwrap();
        assert!(!herglotz_check(&c, 100).unwrap());
        let slow = ScalarField3D::from_fn(g, |x| 1.0 + 0.1 * norm(x));
        assert!(herglotz_check(&SoundSpeed::tabulated(slow).unwrap(), 100).unwrap());
        let skew = ScalarField3D::from_fn(g, |x| 1.0 + 0.2 * x[0]);
        assert!(matches!(herglotz_check(&SoundSpeed::tabulated(skew).unwrap(), 10), Err(Error::NonRadial(_))));
    }

    #[test]
    fn constant_medium_has_flat_connection() {
        let c = SoundSpeed::Constant(1.7);
        let g = christoffel(&c, [0.2, 0.1, -0.4]);
        assert!(g.iter().flatten().flatten().all(|v| *v == 0.0));
        let s = spacetime_christoffel(&c, [0.2, 0.1, -0.4]);
        assert!(s.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn herglotz_christoffel_matches_metric_differences() {
        let c = SoundSpeed::Herglotz(1.5);
        let x = [0.5, 0.0, 0.0];
        let a = christoffel(&c, x);
        let b = fd_christoffel(&c, x, 1e-5);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a[k][i][j] - b[k][i][j]).abs() < 1e-6, "{k}{i}{j}");
                }
            }
        }
    }

    #[test]
    fn tabulated_christoffel_matches_sample_differences() {
        let g = Grid3D::new(41, 0.1, 2).unwrap();
        let f = ScalarField3D::from_fn(g, |x| 1.0 + 0.2 * (x[0] * 1.3).sin() * (0.7 * x[1]).cos() + 0.1 * x[2] * x[2]);
        let c = SoundSpeed::tabulated(f).unwrap();
        let x = [g.coord(23), g.coord(17), g.coord(30)];
        let a = christoffel(&c, x);
        let b = fd_christoffel(&c, x, g.dx);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a[k][i][j] - b[k][i][j]).abs() < 1e-3, "{k}{i}{j}: {} {}", a[k][i][j], b[k][i][j]);
                }
            }
        }
    }

    #[test]
    fn herglotz_hessian_matches_gradient_differences() {
        let c = SoundSpeed::Herglotz(1.5);
        let x = [0.4, -0.3, 0.2];
        let h = c.hess(x);
        let e = 1e-6;
        for j in 0..3 {
            let mut p = x;
            let mut q = x;
            p[j] += e;
            q[j] -= e;
            let (gp, gq) = (c.grad(p), c.grad(q));
            for i in 0..3 {
                assert!((h[i][j] - (gp[i] - gq[i]) / (2.0 * e)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn spacetime_block_structure() {
        let c = SoundSpeed::Herglotz(1.5);
        let x = [0.3, 0.2, -0.1];
        let s = spacetime_christoffel(&c, x);
        let g = christoffel(&c, x);
        for m in 0..4 {
            for n in 0..4 {
                for p in 0..4 {
                    if m == 0 || n == 0 || p == 0 {
                        assert_eq!(s[m][n][p], 0.0);
                    } else {
                        assert_eq!(s[m][n][p], g[m - 1][n - 1][p - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn tabulated_extension_is_constant_continuation() {
        let g = Grid3D::new(9, 0.1, 2).unwrap();
        let c = SoundSpeed::tabulated(ScalarField3D::from_fn(g, |x| 2.0 + x[0])).unwrap();
        assert!((c.c([1.2, 0.0, 0.0]) - 3.0).abs() < 1e-14);
        assert_eq!(c.grad([1.2, 0.0, 0.0])[0], 0.0);
        assert!(c.c([-1.25, 1.25, 1.25]) > 0.0);
    }

    proptest! {
        #[test]
        fn christoffel_is_symmetric(alpha in 1.0f64..3.0, x in proptest::array::uniform3(-1.2f64..1.2)) {
            let g = christoffel(&SoundSpeed::Herglotz(alpha), x);
            for k in 0..3 { for i in 0..3 { for j in 0..3 {
                prop_assert_eq!(g[k][i][j], g[k][j][i]);
            }}}
        }

        #[test]
        fn herglotz_is_bounded_and_radially_decreasing(alpha in 1.0f64..3.0, r in 0.0f64..1.7, dr in 1e-3f64..0.03) {
            let c0 = herglotz_radial(alpha, r).0;
            let c1 = herglotz_radial(alpha, r + dr).0;
            prop_assert!(c0 >= 1.0 - 1e-12 && c0 <= alpha + 1e-12);
            if alpha > 1.0 { prop_assert!(c1 < c0); }
        }

        #[test]
        fn metric_is_positive(alpha in 1.0f64..3.0, x in proptest::array::uniform3(-1.25f64..1.25)) {
            prop_assert!(metric(&SoundSpeed::Herglotz(alpha), x) > 0.0);
        }

        #[test]
        fn christoffel_matches_metric_differences(alpha in 1.0f64..2.0, x in proptest::array::uniform3(0.1f64..1.0)) {
            let c = SoundSpeed::Herglotz(alpha);
            let a = christoffel(&c, x);
            let b = fd_christoffel(&c, x, 1e-4);
            for k in 0..3 { for i in 0..3 { for j in 0..3 {
                prop_assert!((a[k][i][j] - b[k][i][j]).abs() < 1e-5);
            }}}
        }
    }
}
