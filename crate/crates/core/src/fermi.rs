//! Null Fermi frames along the lift `θ(t) = (t, γ(t))`, the chart map
//! `F(s, z') = exp_θ(s)(z^i E_i(s))`, its inverse, and the second-order
//! metric coefficient `B(s)`.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{hermite, Geodesic};
use crate::media::{geodesic_accel, geodesic_accel_tangent, spacetime_inner, Mat3, SoundSpeed, Vec3, FRAC_1_SQRT_2};
use crate::ode::rk4_step;

/// Spacetime vector, index 0 is time.
pub type Vec4 = [f64; 4];
/// Null frame `[E_0, E_1, E_2, E_3]`.
pub type Frame = [Vec4; 4];

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Tolerance on the pseudo-orthonormality defect.
pub const FRAME_TOLERANCE: f64 = 1e-5;

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rotation taking `x̂¹` to the unit vector `d`.
pub fn rotation_to(d: Vec3) -> Mat3 {
    if d[0] < -1.0 + 1e-12 {
        return [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = [0.0, -d[2], d[1]];
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let f = 1.0 / (1.0 + d[0]);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut kk = 0.0;
            for m in 0..3 {
                kk += kx[i][m] * kx[m][j];
            }
            r[i][j] = if i == j { 1.0 } else { 0.0 } + kx[i][j] + f * kk;
        }
    }
    r
}

/// Null frame at `x` for the velocity `v` (`|v| = c(x)`).
pub fn initial_frame(c: &SoundSpeed, x: Vec3, v: Vec3) -> Frame {
    let cv = c.c(x);
    let n = dot(v, v).sqrt();
    let d = [v[0] / n, v[1] / n, v[2] / n];
    let r = rotation_to(d);
    let a = FRAC_1_SQRT_2;
    [
        [a, a * cv * d[0], a * cv * d[1], a * cv * d[2]],
        [-a, a * cv * d[0], a * cv * d[1], a * cv * d[2]],
        [0.0, cv * r[0][1], cv * r[1][1], cv * r[2][1]],
        [0.0, cv * r[0][2], cv * r[1][2], cv * r[2][2]],
    ]
}

/// Spatial rate `-Γ(v, e)` of a parallel-transported vector.
pub fn transport_rate(l: Vec3, v: Vec3, e: Vec3) -> Vec3 {
    let el = dot(e, l);
    let vl = dot(v, l);
    let ve = dot(v, e);
    [v[0] * el + e[0] * vl - ve * l[0], v[1] * el + e[1] * vl - ve * l[1], v[2] * el + e[2] * vl - ve * l[2]]
}

/// Largest deviation of the Gram matrix of `e` from the null-frame pattern.
pub fn frame_defect(c: &SoundSpeed, x: Vec3, e: &Frame) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..4 {
        for n in m..4 {
            let target = match (m, n) {
                (0, 1) | (2, 2) | (3, 3) => 1.0,
                _ => 0.0,
            };
            worst = worst.max((spacetime_inner(c, x, e[m], e[n]) - target).abs());
        }
    }
    worst
}

fn spatial(e: &Vec4) -> Vec3 {
    [e[1], e[2], e[3]]
}

fn frame_rate(c: &SoundSpeed, x: Vec3, v: Vec3, e: &Frame) -> Frame {
    let (l, _) = c.log_derivs(x);
    let mut out = [[0.0; 4]; 4];
    for m in 0..4 {
        let r = transport_rate(l, v, spatial(&e[m]));
        out[m] = [0.0, r[0], r[1], r[2]];
    }
    out
}

/// Parallel-transported null frame sampled on the geodesic's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FermiFrame {
    /// `s_k = √2 (t_k - t₋)`.
    pub s: Vec<f64>,
    pub e: Vec<Frame>,
    /// Time derivatives of the frame vectors.
    pub de: Vec<Frame>,
    pub max_defect: f64,
}

/// Transports the initial null frame at the entry point along the geodesic.
pub fn fermi_frame(c: &SoundSpeed, g: &Geodesic) -> Result<FermiFrame> {
    let n = g.t.len();
    let k0 = g.entry_index;
    let mut e = vec![[[0.0; 4]; 4]; n];
    e[k0] = initial_frame(c, g.x[k0], g.v[k0]);
    // state: x, v, then spatial parts of E_0..E_3
    let rhs = |_: f64, st: &[f64; 18]| {
        let x = [st[0], st[1], st[2]];
        let v = [st[3], st[4], st[5]];
        let (l, _) = c.log_derivs(x);
        let a = geodesic_accel(l, v);
        let mut out = [0.0; 18];
        out[..3].copy_from_slice(&v);
        out[3..6].copy_from_slice(&a);
        for m in 0..4 {
            let em = [st[6 + 3 * m], st[7 + 3 * m], st[8 + 3 * m]];
            let r = transport_rate(l, v, em);
            out[6 + 3 * m..9 + 3 * m].copy_from_slice(&r);
        }
        out
    };
    let pack = |k: usize, f: &Frame| {
        let mut st = [0.0; 18];
        st[..3].copy_from_slice(&g.x[k]);
        st[3..6].copy_from_slice(&g.v[k]);
        for m in 0..4 {
            st[6 + 3 * m..9 + 3 * m].copy_from_slice(&spatial(&f[m]));
        }
        st
    };
    let unpack = |st: &[f64; 18], f0: &Frame| {
        let mut f = *f0;
        for m in 0..4 {
            f[m][1] = st[6 + 3 * m];
            f[m][2] = st[7 + 3 * m];
            f[m][3] = st[8 + 3 * m];
        }
        f
    };
    let f0 = e[k0];
    for k in k0 + 1..n {
        let st = rk4_step(&rhs, g.t[k - 1], &pack(k - 1, &e[k - 1]), g.t[k] - g.t[k - 1]);
        e[k] = unpack(&st, &f0);
    }
    for k in (0..k0).rev() {
        let st = rk4_step(&rhs, g.t[k + 1], &pack(k + 1, &e[k + 1]), g.t[k] - g.t[k + 1]);
        e[k] = unpack(&st, &f0);
    }
    let mut max_defect = 0.0f64;
    for k in 0..n {
        let d = frame_defect(c, g.x[k], &e[k]);
        if !d.is_finite() || d > FRAME_TOLERANCE {
            return Err(Error::FrameDegeneracy(d));
        }
        max_defect = max_defect.max(d);
    }
    let t0 = g.t[k0];
    let s = g.t.iter().map(|t| SQRT_2 * (t - t0)).collect();
    let de = (0..n).map(|k| frame_rate(c, g.x[k], g.v[k], &e[k])).collect();
    Ok(FermiFrame { s, e, de, max_defect })
}

/// Geodesic with its null frame, giving the Fermi chart map.
#[derive(Debug, Clone)]
pub struct NullTube {
    pub c: SoundSpeed,
    pub geodesic: Geodesic,
    pub frame: FermiFrame,
    accel: Vec<Vec3>,
    flat: bool,
}

/// Chart value with its partial derivatives `[∂_s F, ∂_{z^1} F, ∂_{z^2} F, ∂_{z^3} F]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub point: Vec4,
    pub tangents: [Vec4; 4],
}

impl NullTube {
    pub fn new(c: &SoundSpeed, geodesic: Geodesic) -> Result<Self> {
        let frame = fermi_frame(c, &geodesic)?;
        let accel = geodesic
            .x
            .iter()
            .zip(&geodesic.v)
            .map(|(x, v)| geodesic_accel(c.log_derivs(*x).0, *v))
            .collect();
        Ok(NullTube { c: c.clone(), geodesic, frame, accel, flat: c.is_constant() })
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// `s` at the exit point.
    pub fn s_plus(&self) -> f64 {
        self.frame.s[self.geodesic.exit_index]
    }

    /// Sampled `s` range, including the extension margins.
    pub fn s_range(&self) -> (f64, f64) {
        (self.frame.s[0], *self.frame.s.last().unwrap())
    }

    /// Entry time `t₋`.
    pub fn t_minus(&self) -> f64 {
        self.geodesic.t_minus()
    }

    fn locate(&self, s: f64) -> (usize, f64, f64) {
        let ss = &self.frame.s;
        let n = ss.len();
        let k = match ss.binary_search_by(|p| p.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(0) => 0,
            Err(k) => (k - 1).min(n - 2),
        };
        let h = self.geodesic.t[k + 1] - self.geodesic.t[k];
        let t = self.t_minus() + s / SQRT_2;
        (k, (t - self.geodesic.t[k]) / h, h)
    }

    /// `θ(s)` with its time velocity `γ̇`.
    pub fn theta(&self, s: f64) -> (Vec4, Vec3) {
        let t = self.t_minus() + s / SQRT_2;
        if self.flat {
            let k = self.geodesic.entry_index;
            let (x0, v) = (self.geodesic.x[k], self.geodesic.v[k]);
            let dt = t - self.geodesic.t[k];
            return ([t, x0[0] + dt * v[0], x0[1] + dt * v[1], x0[2] + dt * v[2]], v);
        }
        let (k, u, h) = self.locate(s);
        let g = &self.geodesic;
        let (h00, h10, h01, h11) = hermite(u);
        let mut x = [0.0; 3];
        let mut v = [0.0; 3];
        for d in 0..3 {
            x[d] = h00 * g.x[k][d] + h10 * h * g.v[k][d] + h01 * g.x[k + 1][d] + h11 * h * g.v[k + 1][d];
            v[d] = h00 * g.v[k][d] + h10 * h * self.accel[k][d] + h01 * g.v[k + 1][d] + h11 * h * self.accel[k + 1][d];
        }
        ([t, x[0], x[1], x[2]], v)
    }

    /// Frame at `s` and its `s`-derivative.
    pub fn frame_at(&self, s: f64) -> (Frame, Frame) {
        if self.flat {
            return (self.frame.e[self.geodesic.entry_index], [[0.0; 4]; 4]);
        }
        let (k, u, h) = self.locate(s);
        let (h00, h10, h01, h11) = hermite(u);
        let (d00, d10, d01, d11) = hermite_deriv(u);
        let (e0, e1, r0, r1) = (&self.frame.e[k], &self.frame.e[k + 1], &self.frame.de[k], &self.frame.de[k + 1]);
        let mut e = [[0.0; 4]; 4];
        let mut de = [[0.0; 4]; 4];
        for m in 0..4 {
            for d in 0..4 {
                e[m][d] = h00 * e0[m][d] + h10 * h * r0[m][d] + h01 * e1[m][d] + h11 * h * r1[m][d];
                de[m][d] = (d00 * e0[m][d] + d10 * h * r0[m][d] + d01 * e1[m][d] + d11 * h * r1[m][d]) / (h * SQRT_2);
            }
        }
        (e, de)
    }

    /// `F(s, z')`.
    pub fn chart_map(&self, s: f64, z: Vec3) -> Vec4 {
        self.shoot(s, z, 0).point
    }

    /// `F(s, z')` with all four coordinate tangents.
    pub fn chart_map_full(&self, s: f64, z: Vec3) -> ChartPoint {
        self.shoot(s, z, 4)
    }

    /// Pulled-back metric component `ḡ(∂_s F, ∂_s F)`.
    pub fn g_ss(&self, s: f64, z: Vec3) -> f64 {
        let cp = self.shoot(s, z, 1);
        let x = [cp.point[1], cp.point[2], cp.point[3]];
        spacetime_inner(&self.c, x, cp.tangents[0], cp.tangents[0])
    }

    /// Exponential map by RK4 in the affine parameter, carrying `ntan`
    /// variational fields (`∂_s` first, then `∂_{z^i}`).
    fn shoot(&self, s: f64, z: Vec3, ntan: usize) -> ChartPoint {
        let (th, gd) = self.theta(s);
        let (e, de) = self.frame_at(s);
        let mut vel = [0.0; 4];
        let mut dvel = [0.0; 4];
        for i in 0..3 {
            for d in 0..4 {
                vel[d] += z[i] * e[i + 1][d];
                dvel[d] += z[i] * de[i + 1][d];
            }
        }
        let point = [th[0] + vel[0], th[1] + vel[1], th[2] + vel[2], th[3] + vel[3]];
        let a = FRAC_1_SQRT_2;
        let ds_theta = [a, a * gd[0], a * gd[1], a * gd[2]];
        if self.flat {
            let mut tangents = [[0.0; 4]; 4];
            tangents[0] = ds_theta;
            for i in 0..3 {
                tangents[i + 1] = e[i + 1];
            }
            return ChartPoint { point, tangents };
        }
        // state: x, w, then (J, J') per tangent
        let dim = 6 + 6 * ntan;
        let mut st = vec![0.0; dim];
        st[..3].copy_from_slice(&[th[1], th[2], th[3]]);
        st[3..6].copy_from_slice(&[vel[1], vel[2], vel[3]]);
        if ntan > 0 {
            st[6..9].copy_from_slice(&[ds_theta[1], ds_theta[2], ds_theta[3]]);
            st[9..12].copy_from_slice(&[dvel[1], dvel[2], dvel[3]]);
        }
        for i in 1..ntan {
            let o = 6 + 6 * i;
            st[o + 3..o + 6].copy_from_slice(&spatial(&e[i]));
        }
        let c = &self.c;
        let rhs = |_: f64, y: &Vec<f64>| {
            let x = [y[0], y[1], y[2]];
            let w = [y[3], y[4], y[5]];
            let (l, dl) = c.log_derivs(x);
            let mut out = vec![0.0; y.len()];
            out[..3].copy_from_slice(&w);
            out[3..6].copy_from_slice(&geodesic_accel(l, w));
            for i in 0..ntan {
                let o = 6 + 6 * i;
                let j = [y[o], y[o + 1], y[o + 2]];
                let jp = [y[o + 3], y[o + 4], y[o + 5]];
                out[o..o + 3].copy_from_slice(&jp);
                out[o + 3..o + 6].copy_from_slice(&geodesic_accel_tangent(l, &dl, w, j, jp));
            }
            out
        };
        let len = dot([vel[1], vel[2], vel[3]], [vel[1], vel[2], vel[3]]).sqrt();
        let steps = ((len / 0.005).ceil() as usize).max(2);
        let h = 1.0 / steps as f64;
        for m in 0..steps {
            st = rk4_step(&rhs, m as f64 * h, &st, h);
        }
        let mut tangents = [[0.0; 4]; 4];
        if ntan > 0 {
            tangents[0] = [a, st[6], st[7], st[8]];
        }
        for i in 1..ntan {
            let o = 6 + 6 * i;
            tangents[i] = [e[i][0], st[o], st[o + 1], st[o + 2]];
        }
        ChartPoint { point: [point[0], st[0], st[1], st[2]], tangents }
    }

    /// First-order Fermi coordinates of `q` from the frame at `s`.
    fn frame_solve(&self, s: f64, q: Vec4) -> (f64, Vec3) {
        let (th, gd) = self.theta(s);
        let (e, _) = self.frame_at(s);
        let a = FRAC_1_SQRT_2;
        let cols = [[a, a * gd[0], a * gd[1], a * gd[2]], e[1], e[2], e[3]];
        let m = Matrix4::from_fn(|r, col| cols[col][r]);
        let rhs = Vector4::new(q[0] - th[0], q[1] - th[1], q[2] - th[2], q[3] - th[3]);
        match m.lu().solve(&rhs) {
            Some(d) => (s + d[0], [d[1], d[2], d[3]]),
            None => (f64::NAN, [f64::NAN; 3]),
        }
    }

    /// Cheap estimate of the Fermi coordinates of `q`, exact for constant media.
    pub fn approx_inverse(&self, q: Vec4) -> (f64, Vec3) {
        let s0 = SQRT_2 * (q[0] - self.t_minus());
        let (s1, z1) = self.frame_solve(s0, q);
        if self.flat {
            return (s1, z1);
        }
        let (lo, hi) = self.s_range();
        self.frame_solve(s1.clamp(lo, hi), q)
    }

    /// Inverse chart by damped Newton iteration.
    pub fn inverse(&self, q: Vec4) -> Result<(f64, Vec3)> {
        let (mut s, mut z) = self.approx_inverse(q);
        if self.flat {
            return Ok((s, z));
        }
        let fail = || Error::ChartInversion(q);
        if !(s.is_finite() && z.iter().all(|v| v.is_finite())) {
            return Err(fail());
        }
        let resid = |cp: &ChartPoint| {
            Vector4::new(cp.point[0] - q[0], cp.point[1] - q[1], cp.point[2] - q[2], cp.point[3] - q[3])
        };
        let mut cp = self.chart_map_full(s, z);
        let mut r = resid(&cp);
        for _ in 0..40 {
            if r.amax() < 1e-12 {
                return Ok((s, z));
            }
            let jac = Matrix4::from_fn(|row, col| cp.tangents[col][row]);
            let step = jac.lu().solve(&r).ok_or_else(fail)?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let s_new = s - lambda * step[0];
                let z_new = [z[0] - lambda * step[1], z[1] - lambda * step[2], z[2] - lambda * step[3]];
                let cp_new = self.chart_map_full(s_new, z_new);
                let r_new = resid(&cp_new);
                if r_new.norm() < r.norm() {
                    s = s_new;
                    z = z_new;
                    cp = cp_new;
                    r = r_new;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return if r.amax() < 1e-10 { Ok((s, z)) } else { Err(fail()) };
            }
        }
        if r.amax() < 1e-10 {
            Ok((s, z))
        } else {
            Err(fail())
        }
    }

    /// `B(s)` at every geodesic sample: minus half the `z'`-Hessian of
    /// `ḡ(∂_s F, ∂_s F)`. Returns the matrices and the largest asymmetry.
    pub fn fermi_b(&self, h_z: f64) -> Result<(Vec<Mat3>, f64)> {
        if self.flat {
            return Ok((vec![[[0.0; 3]; 3]; self.frame.s.len()], 0.0));
        }
        let out: Vec<(Mat3, f64)> = self.frame.s.par_iter().map(|&s| self.metric_hessian(s, h_z)).collect();
        let defect = out.iter().map(|o| o.1).fold(0.0, f64::max);
        if !(defect <= 1e-4) {
            return Err(Error::NonSymmetricHessian(defect));
        }
        Ok((out.into_iter().map(|o| o.0).collect(), defect))
    }

    /// Coefficient matrix at a single `s`, with its asymmetry.
    pub fn metric_hessian(&self, s: f64, h: f64) -> (Mat3, f64) {
        let f = |z: Vec3| self.g_ss(s, z);
        let unit = |i: usize, a: f64| {
            let mut z = [0.0; 3];
            z[i] = a;
            z
        };
        let f0 = f([0.0; 3]);
        let mut fp = [0.0; 3];
        let mut fm = [0.0; 3];
        for i in 0..3 {
            fp[i] = f(unit(i, h));
            fm[i] = f(unit(i, -h));
        }
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            hess[i][i] = (fp[i] - 2.0 * f0 + fm[i]) / (h * h);
        }
        let mut defect = 0.0f64;
        for i in 0..3 {
            for j in i + 1..3 {
                let mut zpp = [0.0; 3];
                zpp[i] = h;
                zpp[j] = h;
                let mut zpm = zpp;
                zpm[j] = -h;
                let zmp = [-zpm[0], -zpm[1], -zpm[2]];
                let zmm = [-zpp[0], -zpp[1], -zpp[2]];
                let (pp, pm, mp, mm) = (f(zpp), f(zpm), f(zmp), f(zmm));
                let hij = (pp - pm - mp + mm) / (4.0 * h * h);
                let hji = (pp - mp - pm + mm) / (4.0 * h * h);
                defect = defect.max((hij - hji).abs());
                hess[i][j] = hij;
                hess[j][i] = hji;
            }
        }
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = -0.5 * hess[i][j];
            }
        }
        (b, defect)
    }
}

/// Derivatives of the cubic Hermite basis.
pub fn hermite_deriv(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    (6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{extend_geodesic, shoot_geodesic, DEFAULT_STEP};

    fn tube(c: &SoundSpeed, p: Vec3, dir: Vec3, h: f64) -> NullTube {
        let g = shoot_geodesic(c, p, dir, h).unwrap();
        let g = extend_geodesic(c, &g, 0.3).unwrap();
        NullTube::new(c, g).unwrap()
    }

    fn herglotz_tube(h: f64) -> NullTube {
        tube(&SoundSpeed::herglotz(1.5).unwrap(), [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], h)
    }

    #[test]
    fn rotation_is_orthogonal_and_maps_axis() {
        for d in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.6, 0.0, -0.8], [-0.6, 0.48, 0.64]] {
            let r = rotation_to(d);
            for i in 0..3 {
                assert!((r[i][0] - d[i]).abs() < 1e-14);
                for j in 0..3 {
                    let g: f64 = (0..3).map(|m| r[m][i] * r[m][j]).sum();
                    assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_frame_is_constant() {
        let t = tube(&SoundSpeed::constant(1.0).unwrap(), [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], DEFAULT_STEP);
        let e0 = t.frame.e[t.geodesic.entry_index];
        let a = FRAC_1_SQRT_2;
        assert_eq!(e0[0], [a, a, 0.0, 0.0]);
        assert_eq!(e0[1], [-a, a, 0.0, 0.0]);
        for e in &t.frame.e {
            for m in 0..4 {
                for d in 0..4 {
                    assert!((e[m][d] - e0[m][d]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn herglotz_frame_stays_pseudo_orthonormal() {
        let t = herglotz_tube(DEFAULT_STEP);
        assert!(t.frame.max_defect < 1e-6, "{}", t.frame.max_defect);
    }

    #[test]
    fn herglotz_frame_self_converges() {
        let a = herglotz_tube(DEFAULT_STEP);
        let b = herglotz_tube(DEFAULT_STEP / 8.0);
        for s in [0.0, 0.5, 1.3, 2.2] {
            let (ea, _) = a.frame_at(s);
            let (eb, _) = b.frame_at(s);
            for m in 0..4 {
                for d in 0..4 {
                    assert!((ea[m][d] - eb[m][d]).abs() < 1e-6, "s {s} m {m} d {d}");
                }
            }
        }
    }

    #[test]
    fn chart_passes_through_the_lift() {
        let t = herglotz_tube(DEFAULT_STEP);
        for k in [0, 300, 1000, t.geodesic.exit_index] {
            let s = t.frame.s[k];
            let p = t.chart_map(s, [0.0; 3]);
            assert!((p[0] - t.geodesic.t[k]).abs() < 1e-12);
            for d in 0..3 {
                assert!((p[d + 1] - t.geodesic.x[k][d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn flat_chart_differentials_give_ds() {
        let t = tube(&SoundSpeed::constant(1.0).unwrap(), [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], DEFAULT_STEP);
        let cp = t.chart_map_full(0.7, [0.05, -0.02, 0.1]);
        let jac = Matrix4::from_fn(|r, col| cp.tangents[col][r]);
        let inv = jac.try_inverse().unwrap();
        let a = FRAC_1_SQRT_2;
        for (d, want) in [a, a, 0.0, 0.0].iter().enumerate() {
            assert!((inv[(0, d)] - want).abs() < 1e-8);
        }
        let q = t.chart_map(1.1, [0.1, 0.2, -0.1]);
        let (s, z) = t.inverse(q).unwrap();
        assert!((s - 1.1).abs() < 1e-12 && (z[0] - 0.1).abs() < 1e-12 && (z[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn chart_tangents_match_differences() {
        let t = herglotz_tube(DEFAULT_STEP);
        let (s, z) = (1.2, [0.05, -0.08, 0.06]);
        let cp = t.chart_map_full(s, z);
        let h = 1e-5;
        for m in 0..4 {
            let mut sp = (s, z);
            let mut sm = (s, z);
            if m == 0 {
                sp.0 += h;
                sm.0 -= h;
            } else {
                sp.1[m - 1] += h;
                sm.1[m - 1] -= h;
            }
            let a = t.chart_map(sp.0, sp.1);
            let b = t.chart_map(sm.0, sm.1);
            for d in 0..4 {
                let fd = (a[d] - b[d]) / (2.0 * h);
                assert!((fd - cp.tangents[m][d]).abs() < 1e-6, "m {m} d {d}: {fd} vs {}", cp.tangents[m][d]);
            }
        }
    }

    #[test]
    fn herglotz_round_trip() {
        let t = herglotz_tube(DEFAULT_STEP);
        for s in [0.1, 1.0, 2.0] {
            for z in [[0.1, 0.0, 0.0], [-0.05, 0.08, 0.03], [0.02, -0.1, -0.1]] {
                let q = t.chart_map(s, z);
                let (s2, z2) = t.inverse(q).unwrap();
                assert!((s2 - s).abs() < 1e-8);
                for d in 0..3 {
                    assert!((z2[d] - z[d]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn flat_metric_coefficient_vanishes() {
        let t = tube(&SoundSpeed::constant(1.3).unwrap(), [-1.0, 0.2, 0.0], [1.0, 0.0, 0.3], DEFAULT_STEP);
        let (b, _) = t.fermi_b(0.02).unwrap();
        assert!(b.iter().all(|m| m.iter().flatten().all(|v| *v == 0.0)));
        // the general shooting path agrees
        let (bs, _) = NullTube { flat: false, ..t.clone() }.metric_hessian(0.8, 0.02);
        assert!(bs.iter().flatten().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn metric_coefficient_converges_at_second_order() {
        let t = herglotz_tube(DEFAULT_STEP);
        let s = 1.1;
        let (b1, d1) = t.metric_hessian(s, 0.04);
        let (b2, _) = t.metric_hessian(s, 0.02);
        let (b3, _) = t.metric_hessian(s, 0.01);
        assert!(d1 < 1e-10);
        let diff = |a: &Mat3, b: &Mat3| a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let ratio = diff(&b1, &b2) / diff(&b2, &b3);
        assert!((3.0..5.5).contains(&ratio), "ratio {ratio}");
    }
}
