//! Crank–Nicolson solvers for the linear wave equation, the second
//! linearization, the backward problem and the Westervelt equation, written
//! in the integrated form `c^-2 a ∂_t u - Δ ∫_0^t u = 0`.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{det_sum, l2_spacetime, laplacian_interior, normal_derivative, BoundaryTrace, Grid3D, SpaceTimeField};
use crate::media::{Nonlinearity, SoundSpeed, Vec3};

/// Smallest admissible value of `1 - 2βu`.
pub const DEGENERACY_THRESHOLD: f64 = 0.1;
/// Relative residual target of the inner CG solve.
pub const CG_TOLERANCE: f64 = 1e-10;
pub const CG_MAX_ITERATIONS: usize = 500;
/// Relative update target of the Picard iteration.
pub const PICARD_TOLERANCE: f64 = 1e-10;
pub const PICARD_MAX_ITERATIONS: usize = 20;
/// `dt ≤ CFL_FACTOR · dx / max c`.
pub const CFL_FACTOR: f64 = 0.9;

type ProfileFn = dyn Fn(f64, Vec3) -> f64 + Send + Sync;

/// Dirichlet data `f(t, x)` on the boundary, times a scale `C`.
#[derive(Clone)]
pub struct DirichletProfile {
    f: Arc<ProfileFn>,
    pub scale: f64,
    /// `Some(T)` when evaluated at `T - t`.
    reversal: Option<f64>,
}

impl fmt::Debug for DirichletProfile {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("DirichletProfile").field("scale", &self.scale).finish()
    }
}

/// `e^{-1/t^2}` for `t > 0`, zero otherwise; all time derivatives vanish at 0.
pub fn smooth_onset(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / (t * t)).exp()
    } else {
        0.0
    }
}

impl DirichletProfile {
    pub fn new<F: Fn(f64, Vec3) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        DirichletProfile { f: Arc::new(f), scale: 1.0, reversal: None }
    }

    /// `C e^{-t^-2}`, uniform over the boundary.
    pub fn onset(scale: f64) -> Self {
        DirichletProfile { f: Arc::new(|t, _| smooth_onset(t)), scale, reversal: None }
    }

    pub fn zero() -> Self {
        DirichletProfile { f: Arc::new(|_, _| 0.0), scale: 0.0, reversal: None }
    }

    /// Same shape with the scale multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        DirichletProfile { scale: self.scale * k, ..self.clone() }
    }

    /// `t ↦ f(t_final - t)`.
    pub fn reversed(&self, t_final: f64) -> Self {
        match self.reversal {
            None => DirichletProfile { reversal: Some(t_final), ..self.clone() },
            Some(t0) if t0 == t_final => DirichletProfile { reversal: None, ..self.clone() },
            Some(t0) => {
                let f = self.f.clone();
                let inner = move |t: f64, x: Vec3| f(t0 - t, x);
                DirichletProfile { f: Arc::new(inner), scale: self.scale, reversal: Some(t_final) }
            }
        }
    }

    pub fn eval(&self, t: f64, x: Vec3) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.scale * (self.f)(self.reversal.map_or(t, |t0| t0 - t), x)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }
}

/// Solution with solver diagnostics. `wall_time` is informational and never
/// written to result files.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: SpaceTimeField<f64>,
    /// Smallest `1 - 2βu` over all nodes and steps (1 for linear solves).
    pub min_factor: f64,
    /// `min(1 - 2βu)` after each step.
    pub step_min_factor: Vec<f64>,
    pub cg_iterations: usize,
    pub max_cg_iterations: usize,
    pub picard_iterations: usize,
    pub wall_time: f64,
}

/// Serializable summary of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub n_t: usize,
    pub min_factor: f64,
    pub cg_iterations: usize,
    pub max_cg_iterations: usize,
    pub picard_iterations: usize,
    pub max_abs: f64,
    pub l2: f64,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        let g = self.solution.grid;
        SolveSummary {
            n: g.n,
            dx: g.dx,
            dt: g.dt,
            n_t: g.n_t,
            min_factor: self.min_factor,
            cg_iterations: self.cg_iterations,
            max_cg_iterations: self.max_cg_iterations,
            picard_iterations: self.picard_iterations,
            max_abs: self.solution.max_abs(),
            l2: l2_spacetime(&self.solution),
        }
    }
}

/// CFL guard.
pub fn check_cfl(c: &SoundSpeed, grid: &Grid3D) -> Result<()> {
    let limit = CFL_FACTOR * grid.dx / c.max_on_domain();
    if grid.dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: grid.dt, limit });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    det_sum(a.len(), |i| a[i] * b[i])
}

struct Stepper {
    grid: Grid3D,
    inv_c2: Vec<f64>,
    beta: Vec<f64>,
    interior: Vec<bool>,
}

struct CgOutcome {
    iterations: usize,
}

impl Stepper {
    fn new(c: &SoundSpeed, beta: &Nonlinearity, grid: Grid3D) -> Self {
        let len = grid.len();
        let mut inv_c2 = vec![0.0; len];
        let mut b = vec![0.0; len];
        let mut interior = vec![false; len];
        inv_c2.par_iter_mut().zip(b.par_iter_mut()).zip(interior.par_iter_mut()).enumerate().for_each(
            |(idx, ((ic, bv), inn))| {
                let (i, j, k) = grid.ijk(idx);
                let x = grid.point(i, j, k);
                let cv = c.c(x);
                *ic = 1.0 / (cv * cv);
                *bv = beta.beta(x);
                *inn = !grid.is_boundary(i, j, k);
            },
        );
        Stepper { grid, inv_c2, beta: b, interior }
    }

    /// Solves `(diag(m) - κΔ_h) x = rhs` on interior nodes; boundary entries of
    /// `x` are zero on return. `x` holds the initial guess.
    fn cg(&self, m: &[f64], rhs: &[f64], x: &mut [f64]) -> Result<CgOutcome> {
        let g = &self.grid;
        let kappa = 0.25 * g.dt * g.dt;
        let diag_lap = 6.0 / (g.dx * g.dx);
        let len = g.len();
        let apply = |v: &[f64], out: &mut [f64]| {
            laplacian_interior(g, v, out);
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                *o = if self.interior[i] { m[i] * v[i] - kappa * *o } else { 0.0 };
            });
        };
        for (i, v) in x.iter_mut().enumerate() {
            if !self.interior[i] {
                *v = 0.0;
            }
        }
        let mut r = vec![0.0; len];
        apply(x, &mut r);
        r.par_iter_mut().enumerate().for_each(|(i, ri)| {
            *ri = if self.interior[i] { rhs[i] - *ri } else { 0.0 };
        });
        let bnorm = dot(rhs, rhs).sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgOutcome { iterations: 0 });
        }
        let pre: Vec<f64> = (0..len).map(|i| if self.interior[i] { 1.0 / (m[i] + kappa * diag_lap) } else { 0.0 }).collect();
        let mut zv: Vec<f64> = r.iter().zip(&pre).map(|(a, b)| a * b).collect();
        let mut p = zv.clone();
        let mut rz = dot(&r, &zv);
        let mut ap = vec![0.0; len];
        let mut rnorm = dot(&r, &r).sqrt();
        for it in 0..CG_MAX_ITERATIONS {
            if rnorm <= CG_TOLERANCE * bnorm {
                return Ok(CgOutcome { iterations: it });
            }
            apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            rnorm = dot(&r, &r).sqrt();
            if !rnorm.is_finite() {
                return Err(Error::NonFiniteState(0.0));
            }
            zv.par_iter_mut().zip(r.par_iter().zip(&pre)).for_each(|(zi, (ri, pi))| *zi = ri * pi);
            let rz_new = dot(&r, &zv);
            let b = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&zv).for_each(|(pi, zi)| *pi = zi + b * *pi);
        }
        if rnorm <= CG_TOLERANCE * bnorm {
            return Ok(CgOutcome { iterations: CG_MAX_ITERATIONS });
        }
        Err(Error::CgNonConvergence { iterations: CG_MAX_ITERATIONS, residual: rnorm / bnorm })
    }

    fn boundary_frame(&self, f: &DirichletProfile, t: f64) -> Vec<f64> {
        let g = self.grid;
        (0..g.len())
            .into_par_iter()
            .map(|idx| {
                if self.interior[idx] {
                    0.0
                } else {
                    let (i, j, k) = g.ijk(idx);
                    f.eval(t, g.point(i, j, k))
                }
            })
            .collect()
    }

    /// Runs the scheme. With `nonlinear`, `m = c^-2 (1 - β(uⁿ + uⁿ⁺¹))`;
    /// otherwise `m = c^-2`. `source(n)` is added to the step-`n` right-hand side.
    fn run(
        &self,
        f: &DirichletProfile,
        nonlinear: bool,
        source: Option<&(dyn Fn(usize) -> Vec<f64> + Sync)>,
    ) -> Result<SolveReport> {
        let start = Instant::now();
        let g = self.grid;
        let len = g.len();
        let kappa = 0.25 * g.dt * g.dt;
        let mut frames = Vec::with_capacity(g.n_t);
        let u0 = self.boundary_frame(f, 0.0);
        let mut s = vec![0.0; len];
        let mut lap = vec![0.0; len];
        let mut cg_total = 0;
        let mut cg_max = 0;
        let mut picard_total = 0;
        let factor = |u: &[f64]| {
            if nonlinear {
                u.par_iter().zip(&self.beta).map(|(u, b)| 1.0 - 2.0 * b * u).reduce(|| f64::INFINITY, f64::min)
            } else {
                1.0
            }
        };
        let mut step_min = vec![factor(&u0)];
        if step_min[0] < DEGENERACY_THRESHOLD {
            return Err(Error::NonlinearDegeneracy { step: 0, min_factor: step_min[0] });
        }
        frames.push(u0);
        for n in 0..g.n_t - 1 {
            let un = &frames[n];
            let t1 = g.time(n + 1);
            let bnext = self.boundary_frame(f, t1);
            // dt Δ(Sⁿ + dt/4 uⁿ) + κ Δ(boundary of uⁿ⁺¹)
            let tmp: Vec<f64> = (0..len).into_par_iter().map(|i| g.dt * (s[i] + 0.25 * g.dt * un[i]) + kappa * bnext[i]).collect();
            laplacian_interior(&g, &tmp, &mut lap);
            let src = source.map(|sf| sf(n));
            let base: Vec<f64> = (0..len)
                .into_par_iter()
                .map(|i| {
                    if self.interior[i] {
                        lap[i] + src.as_ref().map_or(0.0, |v| v[i])
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut guess = un.clone();
            let mut m = vec![0.0; len];
            let mut iterations = 0;
            loop {
                m.par_iter_mut().enumerate().for_each(|(i, mi)| {
                    *mi = if nonlinear {
                        let ub = if self.interior[i] { guess[i] } else { bnext[i] };
                        self.inv_c2[i] * (1.0 - self.beta[i] * (un[i] + ub))
                    } else {
                        self.inv_c2[i]
                    };
                });
                let rhs: Vec<f64> = (0..len).into_par_iter().map(|i| if self.interior[i] { m[i] * un[i] + base[i] } else { 0.0 }).collect();
                let mut x = guess.clone();
                let out = self.cg(&m, &rhs, &mut x)?;
                cg_total += out.iterations;
                cg_max = cg_max.max(out.iterations);
                iterations += 1;
                for i in 0..len {
                    if !self.interior[i] {
                        x[i] = bnext[i];
                    }
                }
                if !nonlinear {
                    guess = x;
                    break;
                }
                let mf = factor(&x);
                if mf < DEGENERACY_THRESHOLD {
                    return Err(Error::NonlinearDegeneracy { step: n + 1, min_factor: mf });
                }
                let diff = x.iter().zip(&guess).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let scale = x.iter().map(|a| a.abs()).fold(0.0, f64::max);
                guess = x;
                if diff <= PICARD_TOLERANCE * scale || scale == 0.0 {
                    break;
                }
                if iterations >= PICARD_MAX_ITERATIONS {
                    let mf = factor(&guess);
                    if mf < DEGENERACY_THRESHOLD {
                        return Err(Error::NonlinearDegeneracy { step: n + 1, min_factor: mf });
                    }
                    return Err(Error::PicardNonConvergence { step: n + 1, update: diff / scale });
                }
            }
            picard_total += iterations;
            if guess.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState(t1));
            }
            let mf = factor(&guess);
            if mf < DEGENERACY_THRESHOLD {
                return Err(Error::NonlinearDegeneracy { step: n + 1, min_factor: mf });
            }
            step_min.push(mf);
            s.par_iter_mut().enumerate().for_each(|(i, si)| *si += 0.5 * g.dt * (un[i] + guess[i]));
            frames.push(guess);
        }
        let min_factor = step_min.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SolveReport {
            solution: SpaceTimeField { grid: g, frames },
            min_factor,
            step_min_factor: step_min,
            cg_iterations: cg_total,
            max_cg_iterations: cg_max,
            picard_iterations: picard_total,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// `□_c v = 0` with `v|_Σ = f` and zero initial data.
pub fn solve_linear(c: &SoundSpeed, f: &DirichletProfile, grid: Grid3D) -> Result<SolveReport> {
    check_cfl(c, &grid)?;
    Stepper::new(c, &Nonlinearity::Constant(0.0), grid).run(f, false, None)
}

/// Backward problem with `ϑ|_Σ = h` and vanishing data at `t = T`.
pub fn solve_backward(c: &SoundSpeed, h: &DirichletProfile, grid: Grid3D) -> Result<SolveReport> {
    let mut rep = solve_linear(c, &h.reversed(grid.t_final()), grid)?;
    rep.solution = rep.solution.reversed();
    rep.step_min_factor.reverse();
    Ok(rep)
}

/// `□_c w = β ∂_t² v²` with `w|_Σ = 0`; each step integrates the source
/// exactly as `β[(vⁿ⁺¹)² - (vⁿ)²]`.
pub fn solve_second_linearization(c: &SoundSpeed, beta: &Nonlinearity, v: &SpaceTimeField<f64>) -> Result<SolveReport> {
    let grid = v.grid;
    check_cfl(c, &grid)?;
    let st = Stepper::new(c, beta, grid);
    let bvals = st.beta.clone();
    let src = move |n: usize| -> Vec<f64> {
        let (a, b) = (&v.frames[n], &v.frames[n + 1]);
        (0..a.len()).into_par_iter().map(|i| bvals[i] * (b[i] * b[i] - a[i] * a[i])).collect()
    };
    st.run(&DirichletProfile::zero(), false, Some(&src))
}

/// Westervelt equation `c^-2 (1 - 2βu) ∂_t u - Δ ∫_0^t u = 0`, `u|_Σ = f`.
pub fn solve_westervelt(c: &SoundSpeed, beta: &Nonlinearity, f: &DirichletProfile, grid: Grid3D) -> Result<SolveReport> {
    check_cfl(c, &grid)?;
    let st = Stepper::new(c, beta, grid);
    st.run(f, !beta.is_zero(), None)
}

/// Neumann trace `∂_ν u|_Σ`.
pub fn dn_trace(report: &SolveReport) -> BoundaryTrace<f64> {
    normal_derivative(&report.solution).expect("solver grids have n >= 3")
}

/// Remainders of the expansion `u = εv + ε²w + R` for one `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderRow {
    pub eps: f64,
    /// `‖u - εv‖_{L²(M)}`.
    pub first: f64,
    /// `‖u - εv - ε²w‖_{L²(M)}`.
    pub second: f64,
    pub min_factor: f64,
}

/// Solves `v` and `w` once, then `u` for each `ε` with data `εf`.
pub fn expansion_remainders(
    c: &SoundSpeed,
    beta: &Nonlinearity,
    f: &DirichletProfile,
    grid: Grid3D,
    eps: &[f64],
) -> Result<Vec<RemainderRow>> {
    let v = solve_linear(c, f, grid)?.solution;
    let w = solve_second_linearization(c, beta, &v)?.solution;
    eps.iter()
        .map(|&e| {
            let u = solve_westervelt(c, beta, &f.scaled(e), grid)?;
            let q = u.solution.zip_map(&v, |a, b| a - e * b)?;
            let r = q.zip_map(&w, |a, b| a - e * e * b)?;
            Ok(RemainderRow { eps: e, first: l2_spacetime(&q), second: l2_spacetime(&r), min_factor: u.min_factor })
        })
        .collect()
}

/// `∂_ν D²u|_Σ` with `D²u = 2ε⁻²(u_{εf} - 2u_{(ε/2)f})`.
pub fn second_order_dn_fd(
    c: &SoundSpeed,
    beta: &Nonlinearity,
    f: &DirichletProfile,
    grid: Grid3D,
    eps: f64,
) -> Result<BoundaryTrace<f64>> {
    let u1 = solve_westervelt(c, beta, &f.scaled(eps), grid)?;
    let u2 = solve_westervelt(c, beta, &f.scaled(0.5 * eps), grid)?;
    let k = 2.0 / (eps * eps);
    let d = u1.solution.zip_map(&u2.solution, |a, b| k * (a - 2.0 * b))?;
    normal_derivative(&d)
}
