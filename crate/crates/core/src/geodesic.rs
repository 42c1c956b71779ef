//! Unit-speed geodesics of `g = c^-2 δ`, boundary exit detection and the
//! scattering relation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::media::{geodesic_accel, norm, SoundSpeed, Vec3};
use crate::ode::rk4_step;

/// Default RK4 step for rays, frames and Jacobi fields.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Sampled geodesic. Samples may extend beyond the cube on either side;
/// `entry_index` and `exit_index` mark the boundary crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub t: Vec<f64>,
    pub x: Vec<Vec3>,
    /// Velocities, `|v| = c(x)`.
    pub v: Vec<Vec3>,
    pub entry_index: usize,
    pub exit_index: usize,
    pub step: f64,
}

impl Geodesic {
    pub fn t_minus(&self) -> f64 {
        self.t[self.entry_index]
    }
    pub fn t_plus(&self) -> f64 {
        self.t[self.exit_index]
    }
    pub fn entry(&self) -> Vec3 {
        self.x[self.entry_index]
    }
    pub fn exit(&self) -> Vec3 {
        self.x[self.exit_index]
    }
    pub fn length(&self) -> f64 {
        self.t_plus() - self.t_minus()
    }

    /// Largest deviation of `c^-2 |v|^2` from 1 over the samples.
    pub fn speed_defect(&self, c: &SoundSpeed) -> f64 {
        self.x
            .iter()
            .zip(&self.v)
            .map(|(x, v)| {
                let cv = c.c(*x);
                ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / (cv * cv) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Position at time `t` by cubic Hermite interpolation of the samples,
    /// clamped to the sampled range.
    pub fn position_at(&self, t: f64) -> Vec3 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.x[0];
        }
        if t >= self.t[n - 1] {
            return self.x[n - 1];
        }
        let k = match self.t.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.x[k],
            Err(k) => k - 1,
        };
        let h = self.t[k + 1] - self.t[k];
        let u = (t - self.t[k]) / h;
        let (h00, h10, h01, h11) = hermite(u);
        let mut out = [0.0; 3];
        for d in 0..3 {
            out[d] = h00 * self.x[k][d] + h10 * h * self.v[k][d] + h01 * self.x[k + 1][d] + h11 * h * self.v[k + 1][d];
        }
        out
    }
}

/// Cubic Hermite basis.
pub fn hermite(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2)
}

/// Exit point, exit covector `c^-2 γ̇` and geodesic length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteringDatum {
    pub entry: Vec3,
    pub entry_covector: Vec3,
    pub exit: Vec3,
    pub exit_covector: Vec3,
    pub exit_velocity: Vec3,
    pub length: f64,
}

fn ray_rhs(c: &SoundSpeed) -> impl Fn(f64, &[f64; 6]) -> [f64; 6] + '_ {
    move |_, s| {
        let x = [s[0], s[1], s[2]];
        let v = [s[3], s[4], s[5]];
        let (l, _) = c.log_derivs(x);
        let a = geodesic_accel(l, v);
        [v[0], v[1], v[2], a[0], a[1], a[2]]
    }
}

fn outside(x: &[f64]) -> f64 {
    x[0].abs().max(x[1].abs()).max(x[2].abs()) - 1.0
}

/// Outward normal sum of the faces containing `p`.
fn boundary_normal(p: Vec3) -> Option<Vec3> {
    let tol = 1e-9;
    if p.iter().any(|v| v.abs() > 1.0 + tol) {
        return None;
    }
    let mut n = [0.0; 3];
    let mut on = false;
    for d in 0..3 {
        if (p[d].abs() - 1.0).abs() <= tol {
            n[d] = p[d].signum();
            on = true;
        }
    }
    on.then_some(n)
}

/// Unit-speed velocity at `p` along direction `dir`.
pub fn unit_velocity(c: &SoundSpeed, p: Vec3, dir: Vec3) -> Result<Vec3> {
    let len = norm(dir);
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidArgument("zero direction".into()));
    }
    let cp = c.c(p);
    Ok([cp * dir[0] / len, cp * dir[1] / len, cp * dir[2] / len])
}

/// Shoots the unit-speed geodesic entering at `p ∈ ∂Ω` along the inward
/// direction `dir`, starting at time `t_minus`, until it leaves the cube.
pub fn shoot_geodesic_from(c: &SoundSpeed, p: Vec3, dir: Vec3, h: f64, t_minus: f64) -> Result<Geodesic> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h}")));
    }
    let normal = boundary_normal(p).ok_or_else(|| Error::InvalidArgument(format!("entry {p:?} not on the boundary")))?;
    let v0 = unit_velocity(c, p, dir)?;
    if normal[0] * v0[0] + normal[1] * v0[1] + normal[2] * v0[2] >= 0.0 {
        return Err(Error::InvalidArgument("direction is not inward".into()));
    }
    let f = ray_rhs(c);
    let limit = 10.0 * 2.0 * 3f64.sqrt() / c.min_on_extended();
    let mut t = vec![t_minus];
    let mut state = vec![[p[0], p[1], p[2], v0[0], v0[1], v0[2]]];
    loop {
        let tn = *t.last().unwrap();
        let sn = *state.last().unwrap();
        if tn - t_minus > limit {
            return Err(Error::TrappedRay(tn));
        }
        let next = rk4_step(&f, tn, &sn, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(tn + h));
        }
        if outside(&next) > 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if outside(&rk4_step(&f, tn, &sn, mid)) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let tau = 0.5 * (lo + hi);
            t.push(tn + tau);
            state.push(rk4_step(&f, tn, &sn, tau));
            break;
        }
        t.push(tn + h);
        state.push(next);
    }
    let exit_index = t.len() - 1;
    Ok(Geodesic {
        t,
        x: state.iter().map(|s| [s[0], s[1], s[2]]).collect(),
        v: state.iter().map(|s| [s[3], s[4], s[5]]).collect(),
        entry_index: 0,
        exit_index,
        step: h,
    })
}

/// [`shoot_geodesic_from`] with `t_minus = 0`.
pub fn shoot_geodesic(c: &SoundSpeed, p: Vec3, dir: Vec3, h: f64) -> Result<Geodesic> {
    shoot_geodesic_from(c, p, dir, h, 0.0)
}

/// Continues the geodesic by `margin` time units before entry and after exit.
pub fn extend_geodesic(c: &SoundSpeed, g: &Geodesic, margin: f64) -> Result<Geodesic> {
    let f = ray_rhs(c);
    let pack = |k: usize| {
        let (x, v) = (g.x[k], g.v[k]);
        [x[0], x[1], x[2], v[0], v[1], v[2]]
    };
    let run = |k: usize, dir: f64| -> Result<(Vec<f64>, Vec<[f64; 6]>)> {
        let steps = (margin / g.step - 1e-9).ceil() as usize;
        let mut t = vec![g.t[k]];
        let mut s = vec![pack(k)];
        for _ in 0..steps {
            let next = rk4_step(&f, *t.last().unwrap(), s.last().unwrap(), dir * g.step);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState(*t.last().unwrap()));
            }
            t.push(t.last().unwrap() + dir * g.step);
            s.push(next);
        }
        Ok((t, s))
    };
    let (tb, sb) = run(g.entry_index, -1.0)?;
    let (tf, sf) = run(g.exit_index, 1.0)?;
    let mut t = Vec::new();
    let mut x = Vec::new();
    let mut v = Vec::new();
    for k in (1..tb.len()).rev() {
        t.push(tb[k]);
        x.push([sb[k][0], sb[k][1], sb[k][2]]);
        v.push([sb[k][3], sb[k][4], sb[k][5]]);
    }
    let entry_index = t.len();
    for k in g.entry_index..=g.exit_index {
        t.push(g.t[k]);
        x.push(g.x[k]);
        v.push(g.v[k]);
    }
    let exit_index = t.len() - 1;
    for k in 1..tf.len() {
        t.push(tf[k]);
        x.push([sf[k][0], sf[k][1], sf[k][2]]);
        v.push([sf[k][3], sf[k][4], sf[k][5]]);
    }
    Ok(Geodesic { t, x, v, entry_index, exit_index, step: g.step })
}

/// Scattering relation `(p, ξ') ↦ (q, η')` with the geodesic length.
pub fn scattering_relation(c: &SoundSpeed, p: Vec3, dir: Vec3, h: f64) -> Result<ScatteringDatum> {
    let g = shoot_geodesic(c, p, dir, h)?;
    let cov = |x: Vec3, v: Vec3| {
        let cv = c.c(x);
        [v[0] / (cv * cv), v[1] / (cv * cv), v[2] / (cv * cv)]
    };
    let v0 = g.v[g.entry_index];
    let v1 = g.v[g.exit_index];
    Ok(ScatteringDatum {
        entry: g.entry(),
        entry_covector: cov(g.entry(), v0),
        exit: g.exit(),
        exit_covector: cov(g.exit(), v1),
        exit_velocity: v1,
        length: g.length(),
    })
}
