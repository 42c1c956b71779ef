//! Parameter sweeps of the boundary measurement difference, log-log slope
//! fits and breakdown probing.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{fmt_g17, l2_sigma, BoundaryTrace, Grid3D};
use crate::media::{Nonlinearity, SoundSpeed};
use crate::solvers::{dn_trace, solve_linear, solve_westervelt, DirichletProfile};

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Ordinary least squares on `(ln x, ln y)`; needs at least four points.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!("log-log fit needs >= 4 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument(format!("non-positive point ({}, {}) in log-log fit", p.0, p.1)));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(SlopeFit { slope, intercept, r2, points: points.len() })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn measurement(c: &SoundSpeed, beta: &Nonlinearity, f: &DirichletProfile, grid: Grid3D) -> Result<(BoundaryTrace<f64>, f64)> {
    let rep = if beta.is_zero() { solve_linear(c, f, grid)? } else { solve_westervelt(c, beta, f, grid)? };
    Ok((dn_trace(&rep), rep.min_factor))
}

fn trace_distance(a: &BoundaryTrace<f64>, b: &BoundaryTrace<f64>) -> Result<f64> {
    Ok(l2_sigma(&a.zip_map(b, |x, y| x - y)?))
}

/// `‖∂_ν(u₁ - u₂)‖_{L²(Σ)}` for two media driven by the same data.
pub fn dn_difference(
    medium1: (&SoundSpeed, &Nonlinearity),
    medium2: (&SoundSpeed, &Nonlinearity),
    f: &DirichletProfile,
    grid: Grid3D,
) -> Result<f64> {
    let (a, _) = measurement(medium1.0, medium1.1, f, grid)?;
    let (b, _) = measurement(medium2.0, medium2.1, f, grid)?;
    trace_distance(&a, &b)
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// `β` varies at constant `c = fixed`.
    BetaSweep,
    /// Constant `c` varies at `β = fixed`.
    CConstSweep,
    /// `β` varies in the Herglotz medium with `α = fixed`.
    HerglotzBetaSweep,
    /// `α` varies at `β = fixed`.
    HerglotzAlphaSweep,
    /// Beam residual against `τ`.
    ResidualScaling,
    /// Expansion remainders against `ε`.
    LinearizationScaling,
}

impl StudyKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "beta_sweep" => Self::BetaSweep,
            "c_const_sweep" => Self::CConstSweep,
            "herglotz_beta_sweep" => Self::HerglotzBetaSweep,
            "herglotz_alpha_sweep" => Self::HerglotzAlphaSweep,
            "residual_scaling" => Self::ResidualScaling,
            "linearization_scaling" => Self::LinearizationScaling,
            other => return Err(Error::Config(format!("unknown study kind '{other}'"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BetaSweep => "beta_sweep",
            Self::CConstSweep => "c_const_sweep",
            Self::HerglotzBetaSweep => "herglotz_beta_sweep",
            Self::HerglotzAlphaSweep => "herglotz_alpha_sweep",
            Self::ResidualScaling => "residual_scaling",
            Self::LinearizationScaling => "linearization_scaling",
        }
    }

    fn medium(self, fixed: f64, p: f64) -> Result<(SoundSpeed, Nonlinearity)> {
        match self {
            Self::BetaSweep => Ok((SoundSpeed::constant(fixed)?, Nonlinearity::Constant(p))),
            Self::CConstSweep => Ok((SoundSpeed::constant(p)?, Nonlinearity::Constant(fixed))),
            Self::HerglotzBetaSweep => Ok((SoundSpeed::herglotz(fixed)?, Nonlinearity::Constant(p))),
            Self::HerglotzAlphaSweep => Ok((SoundSpeed::herglotz(p)?, Nonlinearity::Constant(fixed))),
            _ => Err(Error::Config(format!("{} is not a parameter sweep", self.name()))),
        }
    }
}

/// A sweep of `anchor + δ` for every `δ` in `ladder` and `probes`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub kind: StudyKind,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    /// `C` in `f = C e^{-t⁻²}`.
    pub profile_scale: f64,
    /// The parameter held fixed (`c`, `α` or `β`).
    pub fixed: f64,
    pub anchor: f64,
    /// Differences entering the slope fit.
    pub ladder: Vec<f64>,
    /// Larger differences probing breakdown; never fitted.
    pub probes: Vec<f64>,
}

impl SweepConfig {
    /// Sweep on the desk grid `Δx = 2⁻³`, `Δt = 0.03`, `T = 3.48`.
    pub fn desk(kind: StudyKind, fixed: f64, anchor: f64, ladder: Vec<f64>) -> Self {
        SweepConfig { kind, dx: 0.125, dt: 0.03, t_final: 3.48, profile_scale: 0.1, fixed, anchor, ladder, probes: Vec::new() }
    }

    pub fn grid(&self) -> Result<Grid3D> {
        Grid3D::from_spacing(self.dx, self.dt, self.t_final)
    }
}

/// One completed sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub anchor: f64,
    pub other: f64,
    pub delta: f64,
    pub dn_difference: f64,
    pub min_factor: f64,
    pub fitted: bool,
}

/// A sweep point that failed with a typed error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub anchor: f64,
    pub other: f64,
    pub delta: f64,
    pub exit_code: i32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: StudyKind,
    pub rows: Vec<SweepRow>,
    pub breakdown: Vec<BreakdownRow>,
    pub fit: Option<SlopeFit>,
    /// Fitted values non-decreasing in `δ` up to `1e-10`.
    pub monotone: bool,
}

impl SweepResult {
    /// Smallest difference that broke down.
    pub fn first_breakdown(&self) -> Option<f64> {
        self.breakdown.iter().map(|b| b.delta).fold(None, |a, d| Some(a.map_or(d, |a: f64| a.min(d))))
    }

    /// Largest difference that completed.
    pub fn largest_stable(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.delta).fold(None, |a, d| Some(a.map_or(d, |a: f64| a.max(d))))
    }
}

/// Runs every sweep point in parallel; rows stay in config order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let grid = cfg.grid()?;
    let f = DirichletProfile::onset(cfg.profile_scale);
    let (c1, b1) = cfg.kind.medium(cfg.fixed, cfg.anchor)?;
    let (reference, _) = measurement(&c1, &b1, &f, grid)?;
    let points: Vec<(f64, bool)> = cfg.ladder.iter().map(|d| (*d, true)).chain(cfg.probes.iter().map(|d| (*d, false))).collect();
    let outcomes: Vec<Result<(f64, f64)>> = points
        .par_iter()
        .map(|&(delta, _)| {
            let (c2, b2) = cfg.kind.medium(cfg.fixed, cfg.anchor + delta)?;
            let (trace, mf) = measurement(&c2, &b2, &f, grid)?;
            Ok((trace_distance(&reference, &trace)?, mf))
        })
        .collect();
    let mut rows = Vec::new();
    let mut breakdown = Vec::new();
    for (&(delta, fitted), out) in points.iter().zip(outcomes) {
        let other = cfg.anchor + delta;
        match out {
            Ok((d, mf)) => rows.push(SweepRow { anchor: cfg.anchor, other, delta, dn_difference: d, min_factor: mf, fitted }),
            Err(e @ (Error::NonlinearDegeneracy { .. } | Error::PicardNonConvergence { .. } | Error::CgNonConvergence { .. } | Error::NonFiniteState(_))) => {
                breakdown.push(BreakdownRow { anchor: cfg.anchor, other, delta, exit_code: e.exit_code(), error: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    let mut fit_points: Vec<(f64, f64)> = rows.iter().filter(|r| r.fitted).map(|r| (r.delta, r.dn_difference)).collect();
    fit_points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = fit_points.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-10);
    let fit = if fit_points.len() >= 4 { Some(loglog_fit(&fit_points)?) } else { None };
    Ok(SweepResult { kind: cfg.kind, rows, breakdown, fit, monotone })
}

fn require(cfg: &SweepConfig, kinds: &[StudyKind]) -> Result<()> {
    if kinds.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!("sweep kind {} not accepted here", cfg.kind.name())))
    }
}

/// `β₁` against `β₁ + δ` at constant sound speed.
pub fn beta_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    require(cfg, &[StudyKind::BetaSweep])?;
    run_sweep(cfg)
}

/// Constant `c₁` against `c₁ + δ`.
pub fn c_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    require(cfg, &[StudyKind::CConstSweep])?;
    run_sweep(cfg)
}

/// Either a `β`-sweep at fixed `α` or an `α`-sweep at fixed `β`.
pub fn herglotz_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    require(cfg, &[StudyKind::HerglotzBetaSweep, StudyKind::HerglotzAlphaSweep])?;
    run_sweep(cfg)
}

/// `anchor,other,delta,dn_difference,min_factor,fitted`.
pub fn write_sweep_csv<W: Write>(w: &mut W, result: &SweepResult) -> Result<()> {
    writeln!(w, "anchor,other,delta,dn_difference,min_factor,fitted")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_g17(r.anchor),
            fmt_g17(r.other),
            fmt_g17(r.delta),
            fmt_g17(r.dn_difference),
            fmt_g17(r.min_factor),
            r.fitted as u8
        )?;
    }
    Ok(())
}

/// `anchor,other,delta,exit_code,error`.
pub fn write_breakdown_csv<W: Write>(w: &mut W, result: &SweepResult) -> Result<()> {
    writeln!(w, "anchor,other,delta,exit_code,error")?;
    for b in &result.breakdown {
        writeln!(w, "{},{},{},{},\"{}\"", fmt_g17(b.anchor), fmt_g17(b.other), fmt_g17(b.delta), b.exit_code, b.error.replace('"', "'"))?;
    }
    Ok(())
}
