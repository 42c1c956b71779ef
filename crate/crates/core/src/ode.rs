//! Classical fixed-step fourth-order Runge–Kutta.

use crate::error::{Error, Result};

/// State vectors the integrator can advance.
pub trait OdeState: Clone {
    /// `self + a k`.
    fn axpy(&self, a: f64, k: &Self) -> Self;
    fn finite(&self) -> bool;
}

impl OdeState for f64 {
    fn axpy(&self, a: f64, k: &Self) -> Self {
        self + a * k
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl<const N: usize> OdeState for [f64; N] {
    fn axpy(&self, a: f64, k: &Self) -> Self {
        let mut out = *self;
        for (o, v) in out.iter_mut().zip(k) {
            *o += a * v;
        }
        out
    }
    fn finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&self, a: f64, k: &Self) -> Self {
        self.iter().zip(k).map(|(x, v)| x + a * v).collect()
    }
    fn finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Sampled solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub t: Vec<f64>,
    pub x: Vec<S>,
}

/// One RK4 step of size `h` from `(t, x)`.
pub fn rk4_step<S, F>(f: &F, t: f64, x: &S, h: f64) -> S
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k2));
    let k4 = f(t + h, &x.axpy(h, &k3));
    x.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4)
}

/// Integrates `x' = f(t, x)` from `t0` to `t1` with step `h`; the last step is
/// shortened to land on `t1`. Works in either time direction.
pub fn rk4<S, F>(f: F, x0: S, t0: f64, t1: f64, h: f64) -> Result<Trajectory<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h}")));
    }
    if !x0.finite() {
        return Err(Error::NonFiniteState(t0));
    }
    let span = t1 - t0;
    let dir = span.signum();
    let full = (span.abs() / h).floor() as usize;
    let mut t = vec![t0];
    let mut x = vec![x0];
    for step in 0..full {
        let tn = t0 + dir * step as f64 * h;
        let next = rk4_step(&f, tn, x.last().unwrap(), dir * h);
        if !next.finite() {
            return Err(Error::NonFiniteState(tn + dir * h));
        }
        t.push(t0 + dir * (step + 1) as f64 * h);
        x.push(next);
    }
    let tn = *t.last().unwrap();
    let rest = t1 - tn;
    if rest.abs() > 1e-14 * h.max(span.abs()) {
        let next = rk4_step(&f, tn, x.last().unwrap(), rest);
        if !next.finite() {
            return Err(Error::NonFiniteState(t1));
        }
        t.push(t1);
        x.push(next);
    } else if let Some(last) = t.last_mut() {
        *last = t1;
    }
    Ok(Trajectory { t, x })
}
