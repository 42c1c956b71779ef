//! Stability sweeps of the boundary measurement difference on the desk grid.
use westervelt::experiments::{log_ladder, run_sweep, StudyKind, SweepConfig, SweepResult};

fn report(label: &str, r: &SweepResult) {
    println!("== {label}");
    for row in &r.rows {
        println!("  delta {:.4e}  diff {:.6e}  min factor {:.4}", row.delta, row.dn_difference, row.min_factor);
    }
    for b in &r.breakdown {
        println!("  delta {:.4e}  breakdown: {}", b.delta, b.error);
    }
    if let Some(f) = r.fit {
        println!("  slope {:.4}  R^2 {:.5}  monotone {}", f.slope, f.r2, r.monotone);
    }
}

fn main() -> westervelt::Result<()> {
    let fine = log_ladder(1e-3, 1e-1, 7);
    let probes = vec![0.2, 0.3, 0.5, 0.7, 0.9];
    let mut beta = SweepConfig::desk(StudyKind::BetaSweep, 1.0, 0.1, fine.clone());
    report("beta sweep, C = 1/10", &run_sweep(&beta)?);
    beta.ladder.clear();
    beta.probes = probes.clone();
    report("breakdown probe, C = 1/10", &run_sweep(&beta)?);
    beta.profile_scale = 1.0;
    beta.probes = vec![0.05, 0.1, 0.15, 0.2];
    report("breakdown probe, C = 1", &run_sweep(&beta)?);
    let c = SweepConfig::desk(StudyKind::CConstSweep, 0.0, 1.4, log_ladder(1e-2, 0.4, 7));
    report("sound speed sweep, c1 = 1.4", &run_sweep(&c)?);
    let c_small = SweepConfig::desk(StudyKind::CConstSweep, 0.0, 1.0, log_ladder(1e-4, 1e-2, 5));
    report("sound speed sweep, c1 = 1", &run_sweep(&c_small)?);
    let hb = SweepConfig::desk(StudyKind::HerglotzBetaSweep, 1.5, 0.1, fine);
    report("Herglotz beta sweep, alpha = 3/2", &run_sweep(&hb)?);
    let ha = SweepConfig::desk(StudyKind::HerglotzAlphaSweep, 0.0, 1.1, log_ladder(1e-2, 0.4, 7));
    report("Herglotz alpha sweep, beta = 0", &run_sweep(&ha)?);
    let mut hab = SweepConfig::desk(StudyKind::HerglotzAlphaSweep, 1.0, 1.1, log_ladder(1e-2, 0.4, 7));
    hab.probes = vec![0.6, 0.9, 1.4, 1.9];
    report("Herglotz alpha sweep, beta = 1", &run_sweep(&hab)?);
    Ok(())
}
