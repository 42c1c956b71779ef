//! Uniform grids over the cube [-1,1]^3 and the time interval [0,T], the
//! fields that live on them, second-order stencils and trapezoid norms.
//!
//! Node `(i,j,k)` sits at `(-1 + i dx, -1 + j dx, -1 + k dx)` and is stored at
//! flat index `(i n + j) n + k`.

use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Scalar types a field may carry.
pub trait Value:
    Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    const COMPLEX: bool;
    fn abs2(self) -> f64;
    fn parts(self) -> (f64, f64);
    fn from_parts(re: f64, im: f64) -> Self;
    fn is_finite_value(self) -> bool {
        let (a, b) = self.parts();
        a.is_finite() && b.is_finite()
    }
}

impl Value for f64 {
    const COMPLEX: bool = false;
    fn abs2(self) -> f64 {
        self * self
    }
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl Value for Complex64 {
    const COMPLEX: bool = true;
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
}

/// Sum `f(0) + ... + f(len-1)` in parallel with a fixed reduction order, so
/// results are bit-identical regardless of scheduling.
pub fn det_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    const CHUNK: usize = 4096;
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Complex counterpart of [`det_sum`].
pub fn det_sum_c<F>(len: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    const CHUNK: usize = 4096;
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<Complex64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(len);
            (lo..hi).map(&f).sum::<Complex64>()
        })
        .collect();
    partial.iter().sum()
}

/// Space-time lattice: `n` nodes per axis on [-1,1]^3 and `n_t` time levels
/// `t_m = m dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub n_t: usize,
}

impl Grid3D {
    pub fn new(n: usize, dt: f64, n_t: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::GridTooSmall(n));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("dt = {dt}")));
        }
        if n_t < 2 {
            return Err(Error::InvalidGrid(format!("n_t = {n_t}")));
        }
        Ok(Self { n, dx: 2.0 / (n - 1) as f64, dt, n_t })
    }

    /// Grid with spacing `dx` (which must divide 2) and final time `t_final`
    /// (rounded to the nearest multiple of `dt`).
    pub fn from_spacing(dx: f64, dt: f64, t_final: f64) -> Result<Self> {
        let cells = (2.0 / dx).round();
        if cells < 2.0 || ((cells * dx) - 2.0).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!("dx = {dx} does not divide 2")));
        }
        let steps = (t_final / dt).round();
        if steps < 1.0 {
            return Err(Error::InvalidGrid(format!("T = {t_final} shorter than dt")));
        }
        Self::new(cells as usize + 1, dt, steps as usize + 1)
    }

    pub fn t_final(&self) -> f64 {
        (self.n_t - 1) as f64 * self.dt
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.dx
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        (idx / (self.n * self.n), j, k)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        let m = self.n - 1;
        i == 0 || j == 0 || k == 0 || i == m || j == m || k == m
    }

    /// Trapezoid weight of node `i` along one spatial axis.
    #[inline]
    pub fn wx(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Trapezoid weight of time level `m`.
    #[inline]
    pub fn wt(&self, m: usize) -> f64 {
        if m == 0 || m == self.n_t - 1 {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Tensor-product trapezoid weight of a volume node.
    #[inline]
    pub fn wvol(&self, idx: usize) -> f64 {
        let (i, j, k) = self.ijk(idx);
        self.wx(i) * self.wx(j) * self.wx(k)
    }

    /// Same spatial lattice with a different time axis.
    pub fn with_time(&self, dt: f64, n_t: usize) -> Result<Self> {
        Self::new(self.n, dt, n_t)
    }
}

/// Real values on the spatial lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    pub grid: Grid3D,
    pub values: Vec<f64>,
}

impl ScalarField3D {
    pub fn new(grid: Grid3D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite field value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64 + Sync>(grid: Grid3D, f: F) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = grid.ijk(idx);
                f(grid.point(i, j, k))
            })
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid3D, v: f64) -> Self {
        Self { grid, values: vec![v; grid.len()] }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }
}

/// One frame per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<T: Value = f64> {
    pub grid: Grid3D,
    pub frames: Vec<Vec<T>>,
}

impl<T: Value> SpaceTimeField<T> {
    pub fn zeros(grid: Grid3D) -> Self {
        Self { grid, frames: vec![vec![T::default(); grid.len()]; grid.n_t] }
    }

    pub fn new(grid: Grid3D, frames: Vec<Vec<T>>) -> Result<Self> {
        if frames.len() != grid.n_t || frames.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::ShapeMismatch("frames do not match grid".into()));
        }
        Ok(Self { grid, frames })
    }

    pub fn from_fn<F: Fn(f64, [f64; 3]) -> T + Sync>(grid: Grid3D, f: F) -> Self {
        let frames = (0..grid.n_t)
            .map(|m| {
                let t = grid.time(m);
                (0..grid.len())
                    .into_par_iter()
                    .map(|idx| {
                        let (i, j, k) = grid.ijk(idx);
                        f(t, grid.point(i, j, k))
                    })
                    .collect()
            })
            .collect();
        Self { grid, frames }
    }

    pub fn map<U: Value, F: Fn(T) -> U + Sync>(&self, f: F) -> SpaceTimeField<U> {
        SpaceTimeField {
            grid: self.grid,
            frames: self.frames.iter().map(|fr| fr.par_iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    pub fn zip_map<F: Fn(T, T) -> T + Sync>(&self, other: &Self, f: F) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("grids differ".into()));
        }
        Ok(Self {
            grid: self.grid,
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| a.par_iter().zip(b.par_iter()).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }

    /// Frames in reverse time order.
    pub fn reversed(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.reverse();
        Self { grid: self.grid, frames }
    }

    pub fn max_abs(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .map(|v| v.abs2().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.frames.iter().all(|f| f.iter().all(|v| v.is_finite_value()))
    }
}

/// Values on the six faces at every time level. Faces are ordered
/// `x=-1, x=+1, y=-1, y=+1, z=-1, z=+1`; on each face `(a,b)` index the two
/// remaining axes in increasing axis order. Edge and corner nodes appear once
/// per face they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace<T: Value = f64> {
    pub grid: Grid3D,
    pub values: Vec<T>,
}

/// Lattice node `(i,j,k)` of point `(a,b)` on `face`.
#[inline]
pub fn face_node(n: usize, face: usize, a: usize, b: usize) -> (usize, usize, usize) {
    let side = if face % 2 == 0 { 0 } else { n - 1 };
    match face / 2 {
        0 => (side, a, b),
        1 => (a, side, b),
        _ => (a, b, side),
    }
}

impl<T: Value> BoundaryTrace<T> {
    pub fn zeros(grid: Grid3D) -> Self {
        Self { grid, values: vec![T::default(); grid.n_t * 6 * grid.n * grid.n] }
    }

    pub fn from_fn<F: Fn(f64, [f64; 3]) -> T + Sync>(grid: Grid3D, f: F) -> Self {
        let n = grid.n;
        let per_t = 6 * n * n;
        let values = (0..grid.n_t * per_t)
            .into_par_iter()
            .map(|q| {
                let m = q / per_t;
                let r = q % per_t;
                let (face, a, b) = (r / (n * n), (r / n) % n, r % n);
                let (i, j, k) = face_node(n, face, a, b);
                f(grid.time(m), grid.point(i, j, k))
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn index(&self, m: usize, face: usize, a: usize, b: usize) -> usize {
        let n = self.grid.n;
        ((m * 6 + face) * n + a) * n + b
    }

    pub fn get(&self, m: usize, face: usize, a: usize, b: usize) -> T {
        self.values[self.index(m, face, a, b)]
    }

    pub fn zip_map<U: Value, F: Fn(T, T) -> U + Sync>(&self, other: &Self, f: F) -> Result<BoundaryTrace<U>> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("grids differ".into()));
        }
        Ok(BoundaryTrace {
            grid: self.grid,
            values: self.values.par_iter().zip(other.values.par_iter()).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn map<U: Value, F: Fn(T) -> U + Sync>(&self, f: F) -> BoundaryTrace<U> {
        BoundaryTrace { grid: self.grid, values: self.values.par_iter().map(|&v| f(v)).collect() }
    }

    /// Quadrature weight of a trace sample.
    #[inline]
    pub fn weight(&self, q: usize) -> f64 {
        let n = self.grid.n;
        let per_t = 6 * n * n;
        let m = q / per_t;
        let r = q % per_t;
        self.grid.wt(m) * self.grid.wx((r / n) % n) * self.grid.wx(r % n)
    }
}

/// Seven-point Laplacian of `src` on interior nodes written into `dst`;
/// boundary entries of `dst` are left untouched.
pub fn laplacian_interior(grid: &Grid3D, src: &[f64], dst: &mut [f64]) {
    let n = grid.n;
    let inv = 1.0 / (grid.dx * grid.dx);
    let nn = n * n;
    dst.par_chunks_mut(nn).enumerate().for_each(|(i, plane)| {
        if i == 0 || i == n - 1 {
            return;
        }
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                let c = (i * n + j) * n + k;
                plane[j * n + k] = (src[c - nn] + src[c + nn] + src[c - n] + src[c + n] + src[c - 1] + src[c + 1]
                    - 6.0 * src[c])
                    * inv;
            }
        }
    });
}

/// Seven-point Laplacian; boundary nodes carry 0 and are not part of the
/// result's meaning.
pub fn laplacian7(field: &ScalarField3D) -> ScalarField3D {
    let mut out = vec![0.0; field.grid.len()];
    laplacian_interior(&field.grid, &field.values, &mut out);
    ScalarField3D { grid: field.grid, values: out }
}

/// Outward normal derivative `(3u0 - 4u1 + u2)/(2dx)` on every face node at
/// every time level.
pub fn normal_derivative<T: Value>(u: &SpaceTimeField<T>) -> Result<BoundaryTrace<T>> {
    let g = u.grid;
    if g.n < 3 {
        return Err(Error::GridTooSmall(g.n));
    }
    let n = g.n;
    let inv = 1.0 / (2.0 * g.dx);
    let per_t = 6 * n * n;
    let values = (0..g.n_t * per_t)
        .into_par_iter()
        .map(|q| {
            let m = q / per_t;
            let r = q % per_t;
            let (face, a, b) = (r / (n * n), (r / n) % n, r % n);
            let axis = face / 2;
            let node = |d: usize| {
                let s = if face % 2 == 0 { d } else { n - 1 - d };
                let (i, j, k) = match axis {
                    0 => (s, a, b),
                    1 => (a, s, b),
                    _ => (a, b, s),
                };
                u.frames[m][g.idx(i, j, k)]
            };
            (node(0) * 3.0 - node(1) * 4.0 + node(2)) * inv
        })
        .collect();
    Ok(BoundaryTrace { grid: g, values })
}

/// `L^2(Sigma)` norm by trapezoid quadrature in time and on each face.
pub fn l2_sigma<T: Value>(trace: &BoundaryTrace<T>) -> f64 {
    det_sum(trace.values.len(), |q| trace.weight(q) * trace.values[q].abs2()).sqrt()
}

/// Trapezoid quadrature of a real trace over Sigma.
pub fn sigma_integral(trace: &BoundaryTrace<f64>) -> f64 {
    det_sum(trace.values.len(), |q| trace.weight(q) * trace.values[q])
}

/// Cumulative trapezoid integral in time; frame 0 is zero.
pub fn time_integral<T: Value>(u: &SpaceTimeField<T>) -> SpaceTimeField<T> {
    let g = u.grid;
    let mut frames = Vec::with_capacity(g.n_t);
    frames.push(vec![T::default(); g.len()]);
    for m in 1..g.n_t {
        let prev: &Vec<T> = &frames[m - 1];
        let next: Vec<T> = prev
            .par_iter()
            .zip(u.frames[m - 1].par_iter().zip(u.frames[m].par_iter()))
            .map(|(&s, (&a, &b))| s + (a + b) * (0.5 * g.dt))
            .collect();
        frames.push(next);
    }
    SpaceTimeField { grid: g, frames }
}

/// `L^2(M)` norm with trapezoid weights in space and time.
pub fn l2_spacetime<T: Value>(u: &SpaceTimeField<T>) -> f64 {
    let g = u.grid;
    let len = g.len();
    det_sum(g.n_t * len, |q| {
        let (m, idx) = (q / len, q % len);
        g.wt(m) * g.wvol(idx) * u.frames[m][idx].abs2()
    })
    .sqrt()
}

/// Trilinear interpolation at a point of [-1,1]^3.
pub fn trilinear_sample(field: &ScalarField3D, x: [f64; 3]) -> Result<f64> {
    let tol = 1e-12;
    if x.iter().any(|c| !c.is_finite() || *c < -1.0 - tol || *c > 1.0 + tol) {
        return Err(Error::OutsideDomain(x));
    }
    Ok(trilinear_clamped(&field.grid, &field.values, x))
}

/// Trilinear interpolation after clamping the point into the cube.
pub fn trilinear_clamped(grid: &Grid3D, values: &[f64], x: [f64; 3]) -> f64 {
    let n = grid.n;
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        let s = ((x[d].clamp(-1.0, 1.0) + 1.0) / grid.dx).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        base[d] = i0;
        frac[d] = s - i0 as f64;
    }
    let mut acc = 0.0;
    for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
        for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
            for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                acc += wi * wj * wk * values[grid.idx(base[0] + di, base[1] + dj, base[2] + dk)];
            }
        }
    }
    acc
}

/// `%.17g` formatting, the float format of every CSV this crate writes.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..17).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Kind tag stored in the binary container header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    Scalar3D = 0,
    SpaceTime = 1,
    Trace = 2,
}

const MAGIC: &[u8; 4] = b"WVFC";
const VERSION: u32 = 1;

/// Decoded binary container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub n: usize,
    pub n_t: usize,
    pub dt: f64,
    pub kind: ContainerKind,
    pub complex: bool,
    pub payload: Vec<f64>,
}

fn write_header<W: Write>(w: &mut W, g: &Grid3D, kind: ContainerKind, complex: bool) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.n as u64).to_le_bytes())?;
    w.write_all(&(g.n_t as u64).to_le_bytes())?;
    w.write_all(&g.dt.to_le_bytes())?;
    w.write_all(&[kind as u8, complex as u8])?;
    Ok(())
}

fn write_value<W: Write, T: Value>(w: &mut W, v: T) -> Result<()> {
    let (re, im) = v.parts();
    w.write_all(&re.to_le_bytes())?;
    if T::COMPLEX {
        w.write_all(&im.to_le_bytes())?;
    }
    Ok(())
}

/// Scalar field payload in i→j→k order.
pub fn write_scalar_field<W: Write>(w: &mut W, f: &ScalarField3D) -> Result<()> {
    write_header(w, &f.grid, ContainerKind::Scalar3D, false)?;
    let mut buf = Vec::with_capacity(8 * f.values.len());
    for v in &f.values {
        write_value(&mut buf, *v)?;
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Space-time payload in i→j→k→t order (time fastest).
pub fn write_spacetime<W: Write, T: Value>(w: &mut W, u: &SpaceTimeField<T>) -> Result<()> {
    write_header(w, &u.grid, ContainerKind::SpaceTime, T::COMPLEX)?;
    let mut buf = Vec::with_capacity(16 * u.grid.len() * u.grid.n_t);
    for idx in 0..u.grid.len() {
        for fr in &u.frames {
            write_value(&mut buf, fr[idx])?;
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Trace payload in face→a→b→t order (time fastest).
pub fn write_trace<W: Write, T: Value>(w: &mut W, tr: &BoundaryTrace<T>) -> Result<()> {
    write_header(w, &tr.grid, ContainerKind::Trace, T::COMPLEX)?;
    let n = tr.grid.n;
    let mut buf = Vec::new();
    for face in 0..6 {
        for a in 0..n {
            for b in 0..n {
                for m in 0..tr.grid.n_t {
                    write_value(&mut buf, tr.get(m, face, a, b))?;
                }
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_container<R: Read>(r: &mut R) -> Result<Container> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Io(format!("malformed container: {m}"));
    if bytes.len() < 34 || &bytes[0..4] != MAGIC {
        return Err(bad("header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("version"));
    }
    let n = u64_at(8) as usize;
    let n_t = u64_at(16) as usize;
    let dt = f64::from_bits(u64_at(24));
    let kind = match bytes[32] {
        0 => ContainerKind::Scalar3D,
        1 => ContainerKind::SpaceTime,
        2 => ContainerKind::Trace,
        _ => return Err(bad("kind")),
    };
    let complex = bytes[33] != 0;
    let body = &bytes[34..];
    if body.len() % 8 != 0 {
        return Err(bad("payload length"));
    }
    let payload: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let per = if complex { 2 } else { 1 };
    let expected = match kind {
        ContainerKind::Scalar3D => n * n * n,
        ContainerKind::SpaceTime => n * n * n * n_t,
        ContainerKind::Trace => 6 * n * n * n_t,
    } * per;
    if payload.len() != expected {
        return Err(bad("payload size"));
    }
    Ok(Container { n, n_t, dt, kind, complex, payload })
}

/// Reads a real scalar field written by [`write_scalar_field`].
pub fn read_scalar_field<R: Read>(r: &mut R) -> Result<ScalarField3D> {
    let c = read_container(r)?;
    if c.kind != ContainerKind::Scalar3D || c.complex {
        return Err(Error::Io("container is not a real scalar field".into()));
    }
    let grid = Grid3D::new(c.n, if c.dt > 0.0 { c.dt } else { 1.0 }, c.n_t.max(2))?;
    ScalarField3D::new(grid, c.payload)
}

/// Reads a space-time field written by [`write_spacetime`].
pub fn read_spacetime<R: Read, T: Value>(r: &mut R) -> Result<SpaceTimeField<T>> {
    let c = read_container(r)?;
    if c.kind != ContainerKind::SpaceTime || c.complex != T::COMPLEX {
        return Err(Error::Io("container kind mismatch".into()));
    }
    let grid = Grid3D::new(c.n, c.dt, c.n_t)?;
    let mut u = SpaceTimeField::<T>::zeros(grid);
    let per = if T::COMPLEX { 2 } else { 1 };
    let mut q = 0;
    for idx in 0..grid.len() {
        for m in 0..grid.n_t {
            let im = if T::COMPLEX { c.payload[q + 1] } else { 0.0 };
            u.frames[m][idx] = T::from_parts(c.payload[q], im);
            q += per;
        }
    }
    Ok(u)
}

/// DN-trace CSV with columns `t,face,i,j,value` (or `re,im` for complex).
pub fn write_trace_csv<W: Write, T: Value>(w: &mut W, tr: &BoundaryTrace<T>) -> Result<()> {
    let n = tr.grid.n;
    let mut out = String::new();
    out.push_str(if T::COMPLEX { "t,face,i,j,re,im\n" } else { "t,face,i,j,value\n" });
    for m in 0..tr.grid.n_t {
        let t = fmt_g17(tr.grid.time(m));
        for face in 0..6 {
            for a in 0..n {
                for b in 0..n {
                    let (re, im) = tr.get(m, face, a, b).parts();
                    if T::COMPLEX {
                        out.push_str(&format!("{t},{face},{a},{b},{},{}\n", fmt_g17(re), fmt_g17(im)));
                    } else {
                        out.push_str(&format!("{t},{face},{a},{b},{}\n", fmt_g17(re)));
                    }
                }
            }
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid3D {
        Grid3D::new(n, 0.1, 3).unwrap()
    }

    fn order(e1: f64, e2: f64) -> f64 {
        (e1 / e2).log2()
    }

    #[test]
    fn grid_spans_the_cube() {
        let g = Grid3D::from_spacing(0.0625, 0.03, 3.48).unwrap();
        assert_eq!(g.n, 33);
        assert_eq!(g.n_t, 117);
        assert_eq!(g.dx * (g.n - 1) as f64, 2.0);
        assert!((g.t_final() - 3.48).abs() < 1e-12);
        assert_eq!(g.coord(g.n - 1), 1.0);
        assert!(Grid3D::new(2, 0.1, 3).is_err());
    }

    #[test]
    fn laplacian_of_constant_and_quadratic() {
        let g = grid(9);
        let c = laplacian7(&ScalarField3D::constant(g, 3.0));
        let q = laplacian7(&ScalarField3D::from_fn(g, |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
        for idx in 0..g.len() {
            let (i, j, k) = g.ijk(idx);
            if !g.is_boundary(i, j, k) {
                assert_eq!(c.values[idx], 0.0);
                assert!((q.values[idx] - 6.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_sine_converges_at_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let l = laplacian7(&ScalarField3D::from_fn(g, |x| (PI * x[0]).sin()));
            let mut e: f64 = 0.0;
            for idx in 0..g.len() {
                let (i, j, k) = g.ijk(idx);
                if !g.is_boundary(i, j, k) {
                    e = e.max((l.values[idx] + PI * PI * (PI * g.coord(i)).sin()).abs());
                }
            }
            e
        };
        let p = order(err(17), err(33));
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }

    #[test]
    fn normal_derivative_of_linear_field() {
        let g = Grid3D::new(7, 0.1, 3).unwrap();
        let u = SpaceTimeField::from_fn(g, |_, x| x[0]);
        let d = normal_derivative(&u).unwrap();
        for m in 0..g.n_t {
            for face in 0..6 {
                for a in 0..g.n {
                    for b in 0..g.n {
                        let expect = match face {
                            0 => -1.0,
                            1 => 1.0,
                            _ => 0.0,
                        };
                        assert!((d.get(m, face, a, b) - expect).abs() < 1e-12);
                    }
                }
            }
        }
        let c = normal_derivative(&SpaceTimeField::from_fn(g, |_, _| 2.5)).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn normal_derivative_of_cubic_converges() {
        let err = |n: usize| {
            let g = Grid3D::new(n, 0.1, 2).unwrap();
            let d = normal_derivative(&SpaceTimeField::from_fn(g, |_, x| x[0].powi(3))).unwrap();
            (d.get(0, 1, n / 2, n / 2) - 3.0).abs()
        };
        let p = order(err(17), err(33));
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }

    #[test]
    fn l2_sigma_of_one_is_surface_times_time() {
        let g = Grid3D::from_spacing(0.25, 0.03, 3.48).unwrap();
        let one = BoundaryTrace::from_fn(g, |_, _| 1.0);
        assert!((l2_sigma(&one) - 83.52f64.sqrt()).abs() < 1e-12);
        assert_eq!(l2_sigma(&BoundaryTrace::<f64>::zeros(g)), 0.0);
    }

    #[test]
    fn l2_sigma_of_sine_in_time_converges() {
        let t_final = 3.48;
        let exact = (24.0 * (t_final / 2.0 - (2.0 * PI * t_final).sin() / (4.0 * PI))).sqrt();
        let err = |dt: f64| {
            let g = Grid3D::new(5, dt, (t_final / dt).round() as usize + 1).unwrap();
            (l2_sigma(&BoundaryTrace::from_fn(g, |t, _| (PI * t).sin())) - exact).abs()
        };
        let p = order(err(0.03), err(0.015));
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }

    #[test]
    fn time_integral_exact_cases() {
        let g = Grid3D::new(3, 0.1, 11).unwrap();
        let one = time_integral(&SpaceTimeField::from_fn(g, |_, _| 1.0));
        let lin = time_integral(&SpaceTimeField::from_fn(g, |t, _| t));
        for m in 0..g.n_t {
            let t = g.time(m);
            assert!((one.frames[m][0] - t).abs() < 1e-14);
            assert!((lin.frames[m][5] - t * t / 2.0).abs() < 1e-14);
        }
        assert!(one.frames[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn time_integral_of_sine_converges() {
        let err = |dt: f64| {
            let nt = (2.0 / dt).round() as usize + 1;
            let g = Grid3D::new(3, dt, nt).unwrap();
            let s = time_integral(&SpaceTimeField::from_fn(g, |t, _| t.sin()));
            (0..nt).map(|m| (s.frames[m][0] - (1.0 - g.time(m).cos())).abs()).fold(0.0, f64::max)
        };
        let p = order(err(0.05), err(0.025));
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }

    #[test]
    fn trilinear_exactness_and_domain() {
        let g = grid(5);
        let f = ScalarField3D::from_fn(g, |x| x[0]);
        assert!((trilinear_sample(&f, [0.123, -0.7, 0.31]).unwrap() - 0.123).abs() < 1e-14);
        let c = ScalarField3D::constant(g, 4.0);
        assert!((trilinear_sample(&c, [0.9, 0.9, -0.2]).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(trilinear_sample(&f, [1.2, 0.0, 0.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn trilinear_error_is_second_order() {
        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField3D::from_fn(g, |x| (PI * x[0]).sin());
            (0..200)
                .map(|q| {
                    let x = -1.0 + 2.0 * (q as f64 + 0.37) / 200.0;
                    (trilinear_sample(&f, [x, 0.1, 0.2]).unwrap() - (PI * x).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let p = order(err(17), err(33));
        assert!((1.8..=2.2).contains(&p), "order {p}");
    }

    #[test]
    fn g17_matches_printf() {
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(0.0), "0");
    }

    #[test]
    fn containers_round_trip() {
        let g = Grid3D::new(3, 0.25, 4).unwrap();
        let u = SpaceTimeField::from_fn(g, |t, x| Complex64::new(t + x[0], x[1] * x[2]));
        let mut buf = Vec::new();
        write_spacetime(&mut buf, &u).unwrap();
        let back: SpaceTimeField<Complex64> = read_spacetime(&mut buf.as_slice()).unwrap();
        assert_eq!(back, u);
        let f = ScalarField3D::from_fn(g, |x| x[0] - x[2]);
        let mut buf = Vec::new();
        write_scalar_field(&mut buf, &f).unwrap();
        assert_eq!(read_scalar_field(&mut buf.as_slice()).unwrap().values, f.values);
    }

    fn random_trace(g: Grid3D, seed: &[f64]) -> BoundaryTrace<f64> {
        let mut tr = BoundaryTrace::zeros(g);
        for (q, v) in tr.values.iter_mut().enumerate() {
            *v = seed[q % seed.len()] * ((q as f64) * 0.37).sin();
        }
        tr
    }

    proptest! {
        #[test]
        fn l2_sigma_is_a_norm(a in proptest::collection::vec(-5.0f64..5.0, 7),
                              b in proptest::collection::vec(-5.0f64..5.0, 5),
                              lambda in -3.0f64..3.0) {
            let g = Grid3D::new(4, 0.2, 3).unwrap();
            let x = random_trace(g, &a);
            let y = random_trace(g, &b);
            let scaled = x.map(|v| v * lambda);
            let nx = l2_sigma(&x);
            prop_assert!((l2_sigma(&scaled) - lambda.abs() * nx).abs() <= 1e-12 * (1.0 + nx));
            let sum = x.zip_map(&y, |p, q| p + q).unwrap();
            prop_assert!(l2_sigma(&sum) <= nx + l2_sigma(&y) + 1e-12);
        }

        #[test]
        fn normal_derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, w in 0.5f64..4.0) {
            let g = Grid3D::new(5, 0.1, 3).unwrap();
            let u = SpaceTimeField::from_fn(g, |t, x| (w * x[0] + t).sin() * x[1]);
            let v = SpaceTimeField::from_fn(g, |t, x| x[2].powi(3) - t * x[0]);
            let comb = u.zip_map(&v, |p, q| p * a + q * b).unwrap();
            let du = normal_derivative(&u).unwrap();
            let dv = normal_derivative(&v).unwrap();
            let dc = normal_derivative(&comb).unwrap();
            for q in 0..dc.values.len() {
                let expect = du.values[q] * a + dv.values[q] * b;
                prop_assert!((dc.values[q] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }
    }
}
