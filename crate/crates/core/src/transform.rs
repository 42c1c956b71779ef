//! Jacobi-weighted ray transform, the beam pairing integral and the
//! boundary/interior identity for the second-order DN map.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::beam::{FermiChart, GaussianBeam, TubeLattice};
use crate::error::{Error, Result};
use crate::fields::{det_sum, sigma_integral, BoundaryTrace, Grid3D, SpaceTimeField};
use crate::media::{Nonlinearity, SoundSpeed, Vec3};
use crate::solvers::{dn_trace, solve_backward, solve_linear, solve_second_linearization, DirichletProfile};

/// Value of the transform with its weight samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayTransformResult {
    pub entry: Vec3,
    pub direction: Vec3,
    pub value_re: f64,
    pub value_im: f64,
    /// `C = 2(2π)^{3/2} C_θ^{-1/2} c(p)^{3/2}`.
    pub constant: f64,
    pub s: Vec<f64>,
    /// `c(θ(s))^{3/2} (det Y(s))^{-1/2}` as `(re, im)`.
    pub weights: Vec<(f64, f64)>,
}

impl RayTransformResult {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

/// `2(2π)^{3/2}`.
pub fn transform_prefactor() -> f64 {
    2.0 * (2.0 * PI).powf(1.5)
}

/// `J β = C ∫_{s₋}^{s₊} β(θ(s)) c(θ(s))^{3/2} (det Y)^{-1/2} ds` by the
/// trapezoid rule on the chart's native samples.
pub fn jacobi_transform(chart: &FermiChart, beta: &Nonlinearity) -> Result<RayTransformResult> {
    let g = &chart.tube.geodesic;
    let c = &chart.tube.c;
    let (k0, k1) = (g.entry_index, g.exit_index);
    let cp = c.c(g.x[k0]);
    if !(chart.jacobi.c_theta > 0.0) {
        return Err(Error::DetYDegenerate(chart.jacobi.c_theta, 0.0));
    }
    let constant = transform_prefactor() * chart.jacobi.c_theta.powf(-0.5) * cp.powf(1.5);
    let mut weights = Vec::with_capacity(k1 - k0 + 1);
    let mut s = Vec::with_capacity(k1 - k0 + 1);
    for k in k0..=k1 {
        let ck = c.c(g.x[k]);
        // A⁰ carries (c(p)/c)^{1/2} on top of (det Y)^{-1/2}
        let w = ck.powf(1.5) * chart.amplitude[k] * (ck / cp).sqrt();
        weights.push(w);
        s.push(chart.jacobi.s[k]);
    }
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..weights.len() - 1 {
        let h = s[k + 1] - s[k];
        let b0 = beta.beta(g.x[k0 + k]);
        let b1 = beta.beta(g.x[k0 + k + 1]);
        total += 0.5 * h * (b0 * weights[k] + b1 * weights[k + 1]);
    }
    let v = constant * total;
    let vel = g.v[k0];
    let sp = (vel[0] * vel[0] + vel[1] * vel[1] + vel[2] * vel[2]).sqrt();
    Ok(RayTransformResult {
        entry: g.x[k0],
        direction: [vel[0] / sp, vel[1] / sp, vel[2] / sp],
        value_re: v.re,
        value_im: v.im,
        constant,
        s,
        weights: weights.iter().map(|w| (w.re, w.im)).collect(),
    })
}

/// `2(2π)^{3/2} ∫_0^{L} (1 + is)^{-1} ds = 2(2π)^{3/2}(-i) log(1 + iL)`.
pub fn flat_transform_closed_form(length_s: f64) -> Complex64 {
    transform_prefactor() * Complex64::new(0.0, -1.0) * Complex64::new(1.0, length_s).ln()
}

/// Largest admissible `2τ·dx` for the pairing quadrature.
pub const PAIRING_SAMPLING_LIMIT: f64 = 0.5;

/// `τ^{-1/2} ∫_M β ∂_t(v²) ∂_t ϑ dx dt` by tube quadrature with central time
/// differences; `theta` must be the partner of `v`.
pub fn beam_pairing(beta: &Nonlinearity, v: &GaussianBeam, theta: &GaussianBeam) -> Result<Complex64> {
    if !(theta.conjugate && theta.multiplier == 2.0 && theta.tau == v.tau && std::sync::Arc::ptr_eq(&theta.chart, &v.chart)) {
        return Err(Error::InvalidArgument("pairing needs the doubled conjugate partner on the same chart".into()));
    }
    let rho = v.rho;
    let dz = rho / 10.0;
    let nz = 20;
    let h = dz;
    if 2.0 * v.tau * dz >= PAIRING_SAMPLING_LIMIT {
        return Err(Error::ResolutionGuard(format!("2 tau dx = {} >= {PAIRING_SAMPLING_LIMIT}", 2.0 * v.tau * dz)));
    }
    let s_lo = -rho;
    let s_hi = v.chart.s_plus() + rho;
    let lat = TubeLattice { s_lo, s_hi, ns: (((s_hi - s_lo) / 0.02).ceil() as usize).max(8), radius: rho, nz };
    let integral = crate::beam::tube_integral(v, &lat, |node| {
        let q = node.q;
        let x = [q[1], q[2], q[3]];
        let b = beta.beta(x);
        if b == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let vp = v.eval(q[0] + h, x)?;
        let vm = v.eval(q[0] - h, x)?;
        let dv2 = (vp * vp - vm * vm) / (2.0 * h);
        let dth = (theta.eval(q[0] + h, x)? - theta.eval(q[0] - h, x)?) / (2.0 * h);
        Ok(b * dv2 * dth)
    })?;
    Ok(integral / v.tau.sqrt())
}

/// Both sides of the identity and their relative gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlessandriniResult {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// `∂_t` by central differences, one-sided second order at the ends.
fn time_derivative(u: &SpaceTimeField<f64>) -> SpaceTimeField<f64> {
    let g = u.grid;
    let nt = g.n_t;
    let inv = 1.0 / (2.0 * g.dt);
    let frames = (0..nt)
        .map(|m| {
            (0..g.len())
                .into_par_iter()
                .map(|i| {
                    let f = |k: usize| u.frames[k][i];
                    if m == 0 {
                        (-3.0 * f(0) + 4.0 * f(1) - f(2)) * inv
                    } else if m == nt - 1 {
                        (3.0 * f(m) - 4.0 * f(m - 1) + f(m - 2)) * inv
                    } else {
                        (f(m + 1) - f(m - 1)) * inv
                    }
                })
                .collect()
        })
        .collect();
    SpaceTimeField { grid: g, frames }
}

/// `∫_Σ ∂_ν w · h` against `∫_M β ∂_t(v²) ∂_t ϑ`, with `v`, `w`, `ϑ` from the
/// forward, second-linearization and backward solvers.
pub fn alessandrini_check(
    c: &SoundSpeed,
    beta: &Nonlinearity,
    f: &DirichletProfile,
    h: &DirichletProfile,
    grid: Grid3D,
) -> Result<AlessandriniResult> {
    let v = solve_linear(c, f, grid)?.solution;
    let w = solve_second_linearization(c, beta, &v)?;
    let theta = solve_backward(c, h, grid)?.solution;
    let dw = dn_trace(&w);
    let htrace = BoundaryTrace::from_fn(grid, |t, x| h.eval(t, x));
    let lhs = sigma_integral(&dw.zip_map(&htrace, |a, b| a * b)?);
    let v2 = v.map(|a| a * a);
    let dv2 = time_derivative(&v2);
    let dth = time_derivative(&theta);
    let len = grid.len();
    let bvals: Vec<f64> = (0..len)
        .map(|idx| {
            let (i, j, k) = grid.ijk(idx);
            beta.beta(grid.point(i, j, k))
        })
        .collect();
    let rhs = det_sum(grid.n_t * len, |q| {
        let (m, idx) = (q / len, q % len);
        grid.wt(m) * grid.wvol(idx) * bvals[idx] * dv2.frames[m][idx] * dth.frames[m][idx]
    });
    let scale = lhs.abs().max(rhs.abs());
    let gap = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
    Ok(AlessandriniResult { lhs, rhs, gap })
}

/// Smooth bump supported in `(a, b)`.
pub fn time_bump(t: f64, a: f64, b: f64) -> f64 {
    if t <= a || t >= b {
        0.0
    } else {
        let r = (t - a) / (b - a);
        (4.0 - 1.0 / (r * (1.0 - r))).exp()
    }
}

/// `(1 - y²)³(1 - z²)³` in the tangential coordinates of the face containing
/// `x`; zero on edges.
pub fn face_patch(x: Vec3) -> f64 {
    let on: Vec<usize> = (0..3).filter(|&d| (x[d].abs() - 1.0).abs() < 1e-12).collect();
    if on.len() != 1 {
        return 0.0;
    }
    (0..3).filter(|&d| d != on[0]).map(|d| (1.0 - x[d] * x[d]).powi(3)).product()
}

/// Forward data for the identity check: a face patch switched on in `(0, 3)`.
pub fn identity_forward_profile() -> DirichletProfile {
    DirichletProfile::new(|t, x| time_bump(t, 0.0, 3.0) * face_patch(x))
}

/// Backward data for the identity check: a face patch in `(0.6, 3.6)`.
pub fn identity_backward_profile() -> DirichletProfile {
    DirichletProfile::new(|t, x| time_bump(t, 0.6, 3.6) * face_patch(x))
}

/// Final time of the identity check.
pub const IDENTITY_T_FINAL: f64 = 3.6;
