//! Order-(2,0,0) Gaussian beams `v = χ_ρ A⁰ e^{iτφ}` in Fermi coordinates,
//! their sampling on space-time grids, and tube quadrature for norms and
//! residuals.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fermi::{NullTube, Vec4};
use crate::fields::{det_sum, det_sum_c, BoundaryTrace, Grid3D, SpaceTimeField};
use crate::geodesic::{extend_geodesic, hermite, shoot_geodesic_from, DEFAULT_STEP};
use crate::jacobi::{a_matrix, jacobi_y, CMat3, JacobiData};
use crate::media::{SoundSpeed, Vec3};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Time margin by which geodesics are continued past the cube.
pub const TUBE_MARGIN: f64 = 0.5;
/// Expansion step for the metric coefficient `B`.
pub const DEFAULT_HZ: f64 = 0.02;
/// Largest tube radius considered.
pub const RHO_CAP: f64 = 0.25;

/// Fermi chart with Jacobi data and the leading amplitude.
#[derive(Debug, Clone)]
pub struct FermiChart {
    pub tube: NullTube,
    pub jacobi: JacobiData,
    /// `A⁰` at the samples.
    pub amplitude: Vec<Complex64>,
    /// `dA⁰/ds` at the samples.
    pub amplitude_rate: Vec<Complex64>,
    pub rho_max: f64,
}

/// Entry time used when none is given; the beam vanishes near `t = 0`.
pub const DEFAULT_ENTRY_TIME: f64 = 0.5;

/// Shoots the ray from `(p, dir)` entering at `t_minus` and builds its chart.
pub fn chart_for_ray(c: &SoundSpeed, p: Vec3, dir: Vec3, step: f64, t_minus: f64) -> Result<FermiChart> {
    let g = shoot_geodesic_from(c, p, dir, step, t_minus)?;
    let g = extend_geodesic(c, &g, TUBE_MARGIN)?;
    let tube = NullTube::new(c, g)?;
    let (b, _) = tube.fermi_b(DEFAULT_HZ)?;
    let jacobi = jacobi_y(&tube.frame.s, tube.geodesic.entry_index, &b)?;
    build_chart(tube, jacobi)
}

/// Axis chord `(-1,0,0) → (1,0,0)` entering at [`DEFAULT_ENTRY_TIME`].
pub fn axis_chart(c: &SoundSpeed) -> Result<FermiChart> {
    chart_for_ray(c, [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], DEFAULT_STEP, DEFAULT_ENTRY_TIME)
}

/// `A⁰(s) = (c(p)/c(θ(s)))^{1/2} (det Y)^{-1/2}` with the square-root branch
/// followed continuously from 1 at `s₋`, and its `s`-derivative.
pub fn amplitude(tube: &NullTube, jacobi: &JacobiData) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let g = &tube.geodesic;
    let n = jacobi.s.len();
    let k0 = jacobi.entry_index;
    let mut arg = vec![0.0; n];
    let wrap = |d: f64| (d + PI).rem_euclid(2.0 * PI) - PI;
    arg[k0] = jacobi.det_y[k0].arg();
    for k in k0 + 1..n {
        let d = wrap(jacobi.det_y[k].arg() - jacobi.det_y[k - 1].arg());
        if d.abs() > FRAC_PI_2 {
            return Err(Error::BranchJump(d, jacobi.s[k]));
        }
        arg[k] = arg[k - 1] + d;
    }
    for k in (0..k0).rev() {
        let d = wrap(jacobi.det_y[k].arg() - jacobi.det_y[k + 1].arg());
        if d.abs() > FRAC_PI_2 {
            return Err(Error::BranchJump(d, jacobi.s[k]));
        }
        arg[k] = arg[k + 1] + d;
    }
    let cp = tube.c.c(g.x[k0]);
    let a = a_matrix();
    let mut amp = Vec::with_capacity(n);
    let mut rate = Vec::with_capacity(n);
    for k in 0..n {
        let ck = tube.c.c(g.x[k]);
        let m = jacobi.det_y[k].norm();
        let val = Complex64::from_polar((cp / ck).sqrt() / m.sqrt(), -0.5 * (arg[k] - arg[k0]));
        let (l, _) = tube.c.log_derivs(g.x[k]);
        let dlogc = (l[0] * g.v[k][0] + l[1] * g.v[k][1] + l[2] * g.v[k][2]) / SQRT_2;
        let tr = (jacobi.h[k] * a).trace();
        amp.push(val);
        rate.push(-0.5 * val * (tr + dlogc));
    }
    Ok((amp, rate))
}

/// Assembles the chart and finds the validity radius by shrinking from
/// [`RHO_CAP`] until Newton inversion round-trips on a test lattice.
pub fn build_chart(tube: NullTube, jacobi: JacobiData) -> Result<FermiChart> {
    let (amplitude, amplitude_rate) = amplitude(&tube, &jacobi)?;
    let mut chart = FermiChart { tube, jacobi, amplitude, amplitude_rate, rho_max: RHO_CAP };
    if chart.tube.is_flat() {
        return Ok(chart);
    }
    let mut rho = RHO_CAP;
    while rho >= 0.02 {
        if chart.round_trip_ok(rho) {
            chart.rho_max = rho;
            return Ok(chart);
        }
        rho *= 0.8;
    }
    Err(Error::ChartInversion([f64::NAN; 4]))
}

impl FermiChart {
    fn round_trip_ok(&self, rho: f64) -> bool {
        let s1 = self.tube.s_plus();
        let r3 = rho / 3f64.sqrt();
        let mut dirs: Vec<Vec3> = Vec::new();
        for d in 0..3 {
            for sg in [-1.0, 1.0] {
                let mut z = [0.0; 3];
                z[d] = sg * rho;
                dirs.push(z);
            }
        }
        for a in [-1.0, 1.0] {
            for b in [-1.0, 1.0] {
                for c in [-1.0, 1.0] {
                    dirs.push([a * r3, b * r3, c * r3]);
                }
            }
        }
        (0..9).all(|i| {
            let s = -rho + (s1 + 2.0 * rho) * i as f64 / 8.0;
            dirs.iter().all(|z| {
                let q = self.tube.chart_map(s, *z);
                match self.tube.inverse(q) {
                    Ok((s2, z2)) => (s2 - s).abs() < 1e-6 && (0..3).all(|d| (z2[d] - z[d]).abs() < 1e-6),
                    Err(_) => false,
                }
            })
        })
    }

    fn locate(&self, s: f64) -> Result<(usize, f64, f64)> {
        let ss = &self.jacobi.s;
        let n = ss.len();
        if !(s >= ss[0] && s <= ss[n - 1]) {
            return Err(Error::InvalidArgument(format!("s = {s} outside the sampled tube")));
        }
        let k = match ss.binary_search_by(|p| p.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(k) => (k - 1).min(n - 2),
        };
        let h = ss[k + 1] - ss[k];
        Ok((k, (s - ss[k]) / h, h))
    }

    /// `H(s)` by cubic Hermite interpolation using the Riccati rate.
    pub fn h_at(&self, s: f64) -> Result<CMat3> {
        let (k, u, h) = self.locate(s)?;
        let (h00, h10, h01, h11) = hermite(u);
        let j = &self.jacobi;
        let c = Complex64::from;
        Ok(j.h[k] * c(h00) + j.h_rate(k) * c(h10 * h) + j.h[k + 1] * c(h01) + j.h_rate(k + 1) * c(h11 * h))
    }

    /// `A⁰(s)` by cubic Hermite interpolation.
    pub fn amplitude_at(&self, s: f64) -> Result<Complex64> {
        let (k, u, h) = self.locate(s)?;
        let (h00, h10, h01, h11) = hermite(u);
        Ok(self.amplitude[k] * h00
            + self.amplitude_rate[k] * (h10 * h)
            + self.amplitude[k + 1] * h01
            + self.amplitude_rate[k + 1] * (h11 * h))
    }

    /// `φ(s, z') = z¹ + ½ zᵀ H(s) z`.
    pub fn phase(&self, s: f64, z: Vec3) -> Result<Complex64> {
        let h = self.h_at(s)?;
        let mut q = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                q += h[(i, j)] * z[i] * z[j];
            }
        }
        Ok(z[0] + 0.5 * q)
    }

    /// `s₊`.
    pub fn s_plus(&self) -> f64 {
        self.tube.s_plus()
    }
}

/// Smooth cutoff: 1 for `r ≤ ρ/2`, 0 for `r ≥ ρ`.
pub fn cutoff(r: f64, rho: f64) -> f64 {
    let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let u = (r - 0.5 * rho) / (0.5 * rho);
    if u <= 0.0 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        let a = psi(1.0 - u);
        a / (a + psi(u))
    }
}

/// Gaussian beam on a chart.
#[derive(Debug, Clone)]
pub struct GaussianBeam {
    pub chart: Arc<FermiChart>,
    pub tau: f64,
    pub rho: f64,
    /// Phase frequency is `multiplier · τ`.
    pub multiplier: f64,
    pub conjugate: bool,
}

impl GaussianBeam {
    pub fn new(chart: Arc<FermiChart>, tau: f64, rho: f64) -> Result<Self> {
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau = {tau} must be >= 1")));
        }
        if !(rho > 0.0 && rho <= chart.rho_max + 1e-15) {
            return Err(Error::InvalidArgument(format!("rho = {rho} outside (0, {}]", chart.rho_max)));
        }
        Ok(GaussianBeam { chart, tau, rho, multiplier: 1.0, conjugate: false })
    }

    /// The partner `ϑ = χ conj(A⁰) e^{-2iτ conj φ}`.
    pub fn partner(&self) -> Self {
        GaussianBeam { multiplier: 2.0, conjugate: true, ..self.clone() }
    }

    /// Value at Fermi coordinates.
    pub fn eval_fermi(&self, s: f64, z: Vec3) -> Result<Complex64> {
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        let chi = cutoff(r, self.rho);
        if chi == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let phi = self.chart.phase(s, z)?;
        let a = self.chart.amplitude_at(s)?;
        let val = chi * a * (Complex64::new(0.0, self.multiplier * self.tau) * phi).exp();
        Ok(if self.conjugate { val.conj() } else { val })
    }

    /// Fermi coordinates of `(t, x)` if it may lie in the tube.
    pub fn locate(&self, q: Vec4) -> Result<Option<(f64, Vec3)>> {
        let tube = &self.chart.tube;
        let (s, z) = tube.approx_inverse(q);
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        if !(r.is_finite() && s.is_finite()) {
            return Err(Error::ChartInversion(q));
        }
        let (lo, hi) = tube.s_range();
        if tube.is_flat() {
            return Ok((r < self.rho && s > lo && s < hi).then_some((s, z)));
        }
        if r > 2.0 * self.rho + 0.05 || s < lo - 0.1 || s > hi + 0.1 {
            return Ok(None);
        }
        let (s, z) = tube.inverse(q)?;
        let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        Ok((r < self.rho && s > lo && s < hi).then_some((s, z)))
    }

    /// `v(t, x)`; zero outside the tube.
    pub fn eval(&self, t: f64, x: Vec3) -> Result<Complex64> {
        match self.locate([t, x[0], x[1], x[2]])? {
            Some((s, z)) => self.eval_fermi(s, z),
            None => Ok(Complex64::new(0.0, 0.0)),
        }
    }

    /// `Pv = -∂_t² v + c²Δv` by central differences with step `h`.
    pub fn apply_p(&self, q: Vec4, h: f64) -> Result<Complex64> {
        let x = [q[1], q[2], q[3]];
        let v0 = self.eval(q[0], x)?;
        let mut lap = Complex64::new(0.0, 0.0);
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            lap += self.eval(q[0], xp)? + self.eval(q[0], xm)? - 2.0 * v0;
        }
        let tt = self.eval(q[0] + h, x)? + self.eval(q[0] - h, x)? - 2.0 * v0;
        let c = self.chart.tube.c.c(x);
        Ok((c * c * lap - tt) / (h * h))
    }
}

/// Samples the beam on every node of the space-time grid.
pub fn beam_to_field(beam: &GaussianBeam, grid: Grid3D) -> Result<SpaceTimeField<Complex64>> {
    let mut frames = Vec::with_capacity(grid.n_t);
    for m in 0..grid.n_t {
        let t = grid.time(m);
        let frame: Result<Vec<Complex64>> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = grid.ijk(idx);
                beam.eval(t, grid.point(i, j, k))
            })
            .collect();
        frames.push(frame?);
    }
    SpaceTimeField::new(grid, frames)
}

/// Samples the beam on the boundary lattice.
pub fn beam_boundary_trace(beam: &GaussianBeam, grid: Grid3D) -> Result<BoundaryTrace<Complex64>> {
    let err = std::sync::Mutex::new(None);
    let tr = BoundaryTrace::from_fn(grid, |t, x| match beam.eval(t, x) {
        Ok(v) => v,
        Err(e) => {
            err.lock().unwrap().get_or_insert(e);
            Complex64::new(0.0, 0.0)
        }
    });
    match err.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(tr),
    }
}

/// Midpoint lattice in Fermi coordinates covering the tube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeLattice {
    pub s_lo: f64,
    pub s_hi: f64,
    pub ns: usize,
    /// Half-width of the `z'` cube.
    pub radius: f64,
    pub nz: usize,
}

/// Quadrature node in `M` with its weight `|det DF| ds dz'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeNode {
    pub s: f64,
    pub z: Vec3,
    pub q: Vec4,
    pub weight: f64,
}

impl TubeLattice {
    /// Lattice for a beam: `s` over the chord plus `ρ`, `z'` resolving both the
    /// cutoff and the Gaussian width `τ^{-1/2}`.
    pub fn for_beam(beam: &GaussianBeam) -> Self {
        let rho = beam.rho;
        let width = (beam.multiplier * beam.tau).powf(-0.5);
        let dz = (rho / 10.0).min(width / 3.0);
        let nz = ((2.0 * rho / dz).ceil() as usize).max(8);
        let s_lo = -rho;
        let s_hi = beam.chart.s_plus() + rho;
        let ns = (((s_hi - s_lo) / 0.04).ceil() as usize).max(8);
        TubeLattice { s_lo, s_hi, ns, radius: rho, nz }
    }

    /// Nodes inside the ball `|z'| < radius` whose image lies in
    /// `[0, t_final] × [-1,1]³`.
    pub fn nodes(&self, chart: &FermiChart, t_final: f64) -> Vec<TubeNode> {
        let ds = (self.s_hi - self.s_lo) / self.ns as f64;
        let dz = 2.0 * self.radius / self.nz as f64;
        let nz = self.nz;
        let per_s = nz * nz * nz;
        let tube = &chart.tube;
        (0..self.ns * per_s)
            .into_par_iter()
            .filter_map(|q| {
                let (a, r) = (q / per_s, q % per_s);
                let z = [
                    -self.radius + ((r / (nz * nz)) as f64 + 0.5) * dz,
                    -self.radius + (((r / nz) % nz) as f64 + 0.5) * dz,
                    -self.radius + ((r % nz) as f64 + 0.5) * dz,
                ];
                if z[0] * z[0] + z[1] * z[1] + z[2] * z[2] >= self.radius * self.radius {
                    return None;
                }
                let s = self.s_lo + (a as f64 + 0.5) * ds;
                let cp = if tube.is_flat() {
                    let mut cp = tube.chart_map_full(s, z);
                    cp.point = tube.chart_map(s, z);
                    cp
                } else {
                    tube.chart_map_full(s, z)
                };
                let p = cp.point;
                let inside = p[0] >= 0.0 && p[0] <= t_final && p[1..].iter().all(|v| v.abs() <= 1.0);
                if !inside {
                    return None;
                }
                let m = nalgebra::Matrix4::from_fn(|row, col| cp.tangents[col][row]);
                Some(TubeNode { s, z, q: p, weight: m.determinant().abs() * ds * dz * dz * dz })
            })
            .collect()
    }
}

/// End time of the space-time slab used for beam norms: the tube leaves the
/// cube before it.
pub fn beam_slab_end(chart: &FermiChart) -> f64 {
    chart.tube.geodesic.t_plus() + 1.0
}

/// Norms of a beam on `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamNorms {
    pub tau: f64,
    pub rho: f64,
    pub l2: f64,
    pub c0: f64,
    /// Fraction of `‖v‖²` inside `|z'| < τ^{-1/3}`.
    pub core_fraction: f64,
}

/// `‖v‖_{L²(M)}`, `‖v‖_{C⁰}` and the core mass fraction by tube quadrature.
pub fn beam_norms(beam: &GaussianBeam) -> Result<BeamNorms> {
    let lat = TubeLattice::for_beam(beam);
    let nodes = lat.nodes(&beam.chart, beam_slab_end(&beam.chart));
    let vals: Result<Vec<Complex64>> = nodes.par_iter().map(|n| beam.eval_fermi(n.s, n.z)).collect();
    let vals = vals?;
    let core = beam.tau.powf(-1.0 / 3.0);
    let total = det_sum(nodes.len(), |k| vals[k].norm_sqr() * nodes[k].weight);
    let inner = det_sum(nodes.len(), |k| {
        let z = nodes[k].z;
        if z[0] * z[0] + z[1] * z[1] + z[2] * z[2] < core * core {
            vals[k].norm_sqr() * nodes[k].weight
        } else {
            0.0
        }
    });
    let c0 = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(BeamNorms { tau: beam.tau, rho: beam.rho, l2: total.sqrt(), c0, core_fraction: inner / total })
}

/// `‖Pv‖_{L²(M)}` with difference step `h`.
pub fn residual_norm(beam: &GaussianBeam, h: f64) -> Result<f64> {
    let lat = TubeLattice::for_beam(beam);
    let nodes = lat.nodes(&beam.chart, beam_slab_end(&beam.chart));
    let vals: Result<Vec<Complex64>> = nodes.par_iter().map(|n| beam.apply_p(n.q, h)).collect();
    let vals = vals?;
    Ok(det_sum(nodes.len(), |k| vals[k].norm_sqr() * nodes[k].weight).sqrt())
}

/// One row of a residual study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub tau: f64,
    pub residual: f64,
    pub residual_refined: f64,
    pub step: f64,
}

/// Relative change of the residual norm under halving of the difference
/// step above which the resolution guard trips.
pub const RESIDUAL_GUARD: f64 = 0.05;

/// `‖Pv‖` at step `1/(10τ)` checked against step `1/(20τ)`.
pub fn residual_row(beam: &GaussianBeam) -> Result<ResidualRow> {
    let step = 1.0 / (10.0 * beam.tau * beam.multiplier);
    let r1 = residual_norm(beam, step)?;
    let r2 = residual_norm(beam, 0.5 * step)?;
    let rel = (r1 - r2).abs() / r2.max(f64::MIN_POSITIVE);
    if !(rel <= RESIDUAL_GUARD) {
        return Err(Error::ResolutionGuard(format!(
            "residual changes by {rel:.3e} under step refinement at tau = {}",
            beam.tau
        )));
    }
    Ok(ResidualRow { tau: beam.tau, residual: r1, residual_refined: r2, step })
}

/// Integral of `f(v)` over `M` for complex integrands, by tube quadrature.
pub fn tube_integral<F>(beam: &GaussianBeam, lat: &TubeLattice, f: F) -> Result<Complex64>
where
    F: Fn(&TubeNode) -> Result<Complex64> + Sync,
{
    let nodes = lat.nodes(&beam.chart, beam_slab_end(&beam.chart));
    let vals: Result<Vec<Complex64>> = nodes.par_iter().map(&f).collect();
    let vals = vals?;
    Ok(det_sum_c(nodes.len(), |k| vals[k] * nodes[k].weight))
}
