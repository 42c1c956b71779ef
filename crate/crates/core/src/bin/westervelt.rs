//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 numerical breakdown, 4 resolution guard.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use westervelt::beam::{beam_norms, chart_for_ray, residual_row, GaussianBeam};
use westervelt::config::{parse_geometric, Config};
use westervelt::experiments::{log_ladder, loglog_fit, run_sweep, write_breakdown_csv, write_sweep_csv, StudyKind, SweepConfig};
use westervelt::fields::{fmt_g17, write_spacetime, write_trace_csv, Grid3D};
use westervelt::geodesic::{scattering_relation, shoot_geodesic_from};
use westervelt::media::Nonlinearity;
use westervelt::solvers::{dn_trace, expansion_remainders, solve_linear, solve_westervelt, DirichletProfile};
use westervelt::transform::{beam_pairing, jacobi_transform};
use westervelt::{Error, Result};

#[derive(Parser)]
#[command(name = "westervelt", version, about = "Westervelt forward solver, Gaussian beams and stability sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`westervelt-config 1` header, `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Westervelt equation; writes the field container, the Neumann trace and a summary.
    Simulate(Common),
    /// Trace a ray; writes samples, Jacobi determinants and the scattering datum.
    Geodesic {
        #[command(flatten)]
        common: Common,
        /// Herglotz parameter; selects the Herglotz medium.
        #[arg(long)]
        alpha: Option<f64>,
        /// Entry point `px,py,pz` on the boundary.
        #[arg(long)]
        entry: Option<String>,
        /// Direction `dx,dy,dz`.
        #[arg(long)]
        dir: Option<String>,
        /// RK4 step.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Beam norms and residuals over the configured frequencies.
    Beam(Common),
    /// Ray transform and beam pairing over a frequency sweep.
    Transform {
        #[command(flatten)]
        common: Common,
        /// `lo:hi:factor`.
        #[arg(long)]
        tau_sweep: Option<String>,
    },
    /// Parameter sweeps and scaling studies.
    Sweep(Common),
    /// Quick invariant suite.
    Check(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(common: &Common) -> Result<Config> {
    let cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    fs::create_dir_all(&common.out).map_err(|e| Error::Config(format!("{}: {e}", common.out.display())))?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn grid(cfg: &Config) -> Result<Grid3D> {
    Grid3D::from_spacing(cfg.f64_or("dx", 0.125)?, cfg.f64_or("dt", 0.03)?, cfg.f64_or("t_final", 3.48)?)
        .map_err(|e| Error::Config(e.to_string()))
}

fn beta(cfg: &Config, default: f64) -> Result<Nonlinearity> {
    cfg.nonlinearity(default)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(common) => simulate(&load(&common)?, &common.out),
        Command::Geodesic { common, alpha, entry, dir, step } => {
            let mut text = String::new();
            if let Some(p) = &common.config {
                text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            } else {
                text.push_str(westervelt::config::CONFIG_HEADER);
            }
            let cfg = Config::parse(&text)?;
            let mut over = Vec::new();
            if let Some(a) = alpha {
                over.push(("c.kind", "herglotz".to_string()));
                over.push(("c.alpha", a.to_string()));
            }
            if let Some(e) = entry {
                over.push(("ray_entry", e));
            }
            if let Some(d) = dir {
                over.push(("ray_direction", d));
            }
            if let Some(h) = step {
                over.push(("ray_step", h.to_string()));
            }
            let cfg = cfg.with_overrides(&over)?;
            fs::create_dir_all(&common.out).map_err(|e| Error::Config(format!("{}: {e}", common.out.display())))?;
            geodesic(&cfg, &common.out)
        }
        Command::Beam(common) => beam(&load(&common)?, &common.out),
        Command::Transform { common, tau_sweep } => {
            let cfg = load(&common)?;
            transform(&cfg, &common.out, tau_sweep.as_deref())
        }
        Command::Sweep(common) => sweep(&load(&common)?, &common.out),
        Command::Check(common) => check(&common.out, &load(&common)?),
    }
}

fn simulate(cfg: &Config, out: &Path) -> Result<()> {
    let c = cfg.sound_speed()?;
    let b = beta(cfg, 0.5)?;
    let g = grid(cfg)?;
    let f = DirichletProfile::onset(cfg.f64_or("profile_scale", 0.1)?);
    let rep = if b.is_zero() { solve_linear(&c, &f, g)? } else { solve_westervelt(&c, &b, &f, g)? };
    let mut w = create(out, "field.wvf")?;
    write_spacetime(&mut w, &rep.solution)?;
    w.flush()?;
    let mut w = create(out, "dn_trace.csv")?;
    write_trace_csv(&mut w, &dn_trace(&rep))?;
    w.flush()?;
    write_json(out, "report.json", &rep.summary())?;
    println!("min(1 - 2 beta u) = {:.6}, {} CG iterations", rep.min_factor, rep.cg_iterations);
    Ok(())
}

fn ray(cfg: &Config) -> Result<([f64; 3], [f64; 3], f64)> {
    Ok((cfg.vec3_or("ray_entry", [-1.0, 0.0, 0.0])?, cfg.vec3_or("ray_direction", [1.0, 0.0, 0.0])?, cfg.f64_or("ray_step", 1e-3)?))
}

#[derive(Serialize)]
struct GeodesicSummary {
    scattering: westervelt::geodesic::ScatteringDatum,
    speed_defect: f64,
    c_theta: f64,
    c_theta_drift: f64,
    min_imag_eigenvalue: f64,
    riccati_residual: f64,
    rho_max: f64,
}

fn geodesic(cfg: &Config, out: &Path) -> Result<()> {
    let c = cfg.sound_speed()?;
    let (p, dir, h) = ray(cfg)?;
    let t_minus = cfg.f64_or("entry_time", 0.5)?;
    let g = shoot_geodesic_from(&c, p, dir, h, t_minus)?;
    let mut w = create(out, "geodesic.csv")?;
    writeln!(w, "t,x,y,z,vx,vy,vz")?;
    for k in g.entry_index..=g.exit_index {
        let (x, v) = (g.x[k], g.v[k]);
        let row: Vec<String> = [g.t[k], x[0], x[1], x[2], v[0], v[1], v[2]].iter().map(|a| fmt_g17(*a)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let chart = chart_for_ray(&c, p, dir, h, t_minus)?;
    let j = &chart.jacobi;
    let mut w = create(out, "jacobi.csv")?;
    writeln!(w, "s,det_y_re,det_y_im,amplitude_re,amplitude_im")?;
    let g2 = &chart.tube.geodesic;
    for k in g2.entry_index..=g2.exit_index {
        let row: Vec<String> =
            [j.s[k], j.det_y[k].re, j.det_y[k].im, chart.amplitude[k].re, chart.amplitude[k].im].iter().map(|a| fmt_g17(*a)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let summary = GeodesicSummary {
        scattering: scattering_relation(&c, p, dir, h)?,
        speed_defect: g.speed_defect(&c),
        c_theta: j.c_theta,
        c_theta_drift: j.c_theta_drift(),
        min_imag_eigenvalue: j.min_imag_eigenvalue(),
        riccati_residual: j.riccati_residual(),
        rho_max: chart.rho_max,
    };
    write_json(out, "geodesic.json", &summary)?;
    println!("exit {:?} after length {:.6}, C_theta drift {:.3e}", summary.scattering.exit, summary.scattering.length, summary.c_theta_drift);
    Ok(())
}

#[derive(Serialize)]
struct ScalingFits {
    residual: Option<westervelt::experiments::SlopeFit>,
    l2: Option<westervelt::experiments::SlopeFit>,
    c0_variation: f64,
}

fn beam(cfg: &Config, out: &Path) -> Result<()> {
    let c = cfg.sound_speed()?;
    let (p, dir, h) = ray(cfg)?;
    let chart = Arc::new(chart_for_ray(&c, p, dir, h, cfg.f64_or("entry_time", 0.5)?)?);
    let taus = cfg.list_or("tau", &[25.0, 50.0, 100.0, 200.0])?;
    let mut w = create(out, "beam.csv")?;
    writeln!(w, "tau,rho,l2,c0,core_fraction,residual,residual_refined")?;
    let (mut res, mut l2, mut c0) = (Vec::new(), Vec::new(), Vec::new());
    for &tau in &taus {
        let v = GaussianBeam::new(chart.clone(), tau, chart.rho_max)?;
        let n = beam_norms(&v)?;
        let r = residual_row(&v)?;
        let row: Vec<String> = [tau, v.rho, n.l2, n.c0, n.core_fraction, r.residual, r.residual_refined].iter().map(|a| fmt_g17(*a)).collect();
        writeln!(w, "{}", row.join(","))?;
        res.push((tau, r.residual));
        l2.push((tau, n.l2));
        c0.push(n.c0);
    }
    w.flush()?;
    let max = c0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = c0.iter().copied().fold(f64::INFINITY, f64::min);
    let fits = ScalingFits {
        residual: loglog_fit(&res).ok(),
        l2: loglog_fit(&l2).ok(),
        c0_variation: if c0.is_empty() { 0.0 } else { (max - min) / max },
    };
    write_json(out, "beam_fit.json", &fits)?;
    if let (Some(r), Some(l)) = (fits.residual, fits.l2) {
        println!("residual slope {:.4}, L2 slope {:.4}", r.slope, l.slope);
    }
    Ok(())
}

fn transform(cfg: &Config, out: &Path, tau_sweep: Option<&str>) -> Result<()> {
    let c = cfg.sound_speed()?;
    let b = beta(cfg, 1.0)?;
    let (p, dir, h) = ray(cfg)?;
    let chart = Arc::new(chart_for_ray(&c, p, dir, h, cfg.f64_or("entry_time", 0.5)?)?);
    let j = jacobi_transform(&chart, &b)?;
    let taus = match tau_sweep {
        Some(s) => {
            let (lo, hi, factor) = parse_geometric("--tau-sweep", s)?;
            westervelt::config::geometric(lo, hi, factor).map_err(|e| Error::Config(format!("--tau-sweep: {e}")))?
        }
        None => cfg.geometric_or("tau_sweep", (40.0, 160.0, 2.0))?,
    };
    let mut w = create(out, "weights.csv")?;
    writeln!(w, "s,weight_re,weight_im")?;
    for (s, (re, im)) in j.s.iter().zip(&j.weights) {
        writeln!(w, "{},{},{}", fmt_g17(*s), fmt_g17(*re), fmt_g17(*im))?;
    }
    w.flush()?;
    let mut w = create(out, "transform.csv")?;
    writeln!(w, "tau,rho,J_re,J_im,pairing_re,pairing_im,abs_gap")?;
    let jv = j.value();
    for tau in taus {
        let rho = (1.0 / tau).min(chart.rho_max);
        let v = GaussianBeam::new(chart.clone(), tau, rho)?;
        let pr = beam_pairing(&b, &v, &v.partner())?;
        let row: Vec<String> = [tau, rho, jv.re, jv.im, pr.re, pr.im, (pr - jv).norm()].iter().map(|a| fmt_g17(*a)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    write_json(out, "transform.json", &j)?;
    println!("J = {} {:+}i", jv.re, jv.im);
    Ok(())
}

#[derive(Serialize)]
struct LinearizationFit {
    first: westervelt::experiments::SlopeFit,
    second: westervelt::experiments::SlopeFit,
}

fn sweep(cfg: &Config, out: &Path) -> Result<()> {
    let kind = StudyKind::parse(cfg.str_or("study", "beta_sweep"))?;
    match kind {
        StudyKind::ResidualScaling => return beam(cfg, out),
        StudyKind::LinearizationScaling => {
            let c = cfg.sound_speed()?;
            let eps = cfg.list_or("eps", &[0.04, 0.02, 0.01, 0.005])?;
            let rows = expansion_remainders(&c, &beta(cfg, 0.5)?, &DirichletProfile::onset(cfg.f64_or("profile_scale", 1.0)?), grid(cfg)?, &eps)?;
            let mut w = create(out, "linearization.csv")?;
            writeln!(w, "eps,first,second,min_factor")?;
            for r in &rows {
                writeln!(w, "{},{},{},{}", fmt_g17(r.eps), fmt_g17(r.first), fmt_g17(r.second), fmt_g17(r.min_factor))?;
            }
            w.flush()?;
            let first = loglog_fit(&rows.iter().map(|r| (r.eps, r.first)).collect::<Vec<_>>())?;
            let second = loglog_fit(&rows.iter().map(|r| (r.eps, r.second)).collect::<Vec<_>>())?;
            write_json(out, "fit.json", &LinearizationFit { first, second })?;
            println!("remainder slopes {:.4} {:.4}", first.slope, second.slope);
            return Ok(());
        }
        _ => {}
    }
    let (fixed_default, anchor_default) = match kind {
        StudyKind::BetaSweep => (1.0, 0.1),
        StudyKind::CConstSweep => (0.0, 1.4),
        StudyKind::HerglotzBetaSweep => (1.5, 0.1),
        _ => (0.0, 1.1),
    };
    let ladder_default = match kind {
        StudyKind::BetaSweep | StudyKind::HerglotzBetaSweep => log_ladder(1e-3, 0.1, 7),
        _ => log_ladder(1e-2, 0.4, 7),
    };
    let mut sc = SweepConfig::desk(kind, cfg.f64_or("fixed", fixed_default)?, cfg.f64_or("anchor", anchor_default)?, Vec::new());
    sc.dx = cfg.f64_or("dx", sc.dx)?;
    sc.dt = cfg.f64_or("dt", sc.dt)?;
    sc.t_final = cfg.f64_or("t_final", sc.t_final)?;
    sc.profile_scale = cfg.f64_or("profile_scale", sc.profile_scale)?;
    sc.ladder = cfg.list_or("ladder", &ladder_default)?;
    sc.probes = cfg.list_or("probes", &[])?;
    let r = run_sweep(&sc)?;
    let mut w = create(out, "sweep.csv")?;
    write_sweep_csv(&mut w, &r)?;
    w.flush()?;
    let mut w = create(out, "breakdown.csv")?;
    write_breakdown_csv(&mut w, &r)?;
    w.flush()?;
    write_json(out, "fit.json", &r)?;
    if let Some(f) = r.fit {
        println!("{}: slope {:.4}, R^2 {:.5}, {} breakdown points", kind.name(), f.slope, f.r2, r.breakdown.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckLine {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(out: &Path, _cfg: &Config) -> Result<()> {
    use westervelt::beam::axis_chart;
    use westervelt::media::SoundSpeed;
    use westervelt::transform::flat_transform_closed_form;
    let mut lines = Vec::new();
    let mut push = |name, value: f64, tolerance| lines.push(CheckLine { name, value, tolerance, pass: value <= tolerance });

    let flat = SoundSpeed::constant(1.0)?;
    let chart = axis_chart(&flat)?;
    let j = &chart.jacobi;
    let k0 = j.entry_index;
    let det_err = (k0..j.s.len())
        .map(|k| {
            let w = num_complex::Complex64::new(1.0, j.s[k] - j.s[k0]);
            (j.det_y[k] - w * w).norm()
        })
        .fold(0.0, f64::max);
    push("flat det Y closed form", det_err, 1e-8);
    push("flat Jacobi invariant drift", j.c_theta_drift(), 1e-8);
    let jv = jacobi_transform(&chart, &Nonlinearity::Constant(1.0))?.value();
    let want = flat_transform_closed_form(2.0 * std::f64::consts::SQRT_2);
    push("flat ray transform closed form", (jv - want).norm() / want.norm(), 1e-6);

    let herg = SoundSpeed::herglotz(1.5)?;
    let hc = chart_for_ray(&herg, [-1.0, 0.3, 0.2], [1.0, 0.1, -0.2], 1e-3, 0.5)?;
    push("Herglotz Jacobi invariant drift", hc.jacobi.c_theta_drift(), 1e-6);
    push("Herglotz Riccati residual", hc.jacobi.riccati_residual(), 1e-5);

    let g = Grid3D::from_spacing(0.25, 0.1, 2.0)?;
    let f = DirichletProfile::onset(0.1);
    let lin = solve_linear(&herg, &f, g)?.solution;
    let non = solve_westervelt(&herg, &Nonlinearity::Constant(0.0), &f, g)?.solution;
    let gap = lin.zip_map(&non, |a, b| a - b)?.max_abs();
    push("linear and zero-nonlinearity solvers agree", gap, 1e-8);

    let pts: Vec<(f64, f64)> = (1..=5).map(|k| (k as f64, (k * k) as f64)).collect();
    push("log-log fit of x^2", (loglog_fit(&pts)?.slope - 2.0).abs(), 1e-12);

    let mut all = true;
    for l in &lines {
        println!("{} {} ({} <= {})", if l.pass { "PASS" } else { "FAIL" }, l.name, fmt_g17(l.value), fmt_g17(l.tolerance));
        all &= l.pass;
    }
    write_json(out, "check.json", &lines)?;
    if all {
        Ok(())
    } else {
        Err(Error::CheckFailed(lines.iter().filter(|l| !l.pass).map(|l| l.name).collect::<Vec<_>>().join(", ")))
    }
}
