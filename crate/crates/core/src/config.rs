//! Flat `key = value` run configuration.
//!
//! The first non-blank, non-comment line must be the header
//! `westervelt-config 1`. Every other line is `key = value`; `#` starts a
//! comment. Lists are comma separated, ranges are `lo:hi:n` (log-spaced, `n`
//! points) or `lo:hi:factor` where the key asks for it.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `c.kind` | `constant`, `herglotz` or `tabulated` | `constant` |
//! | `c.value` | constant sound speed | `1` |
//! | `c.alpha` | Herglotz parameter | `1.5` |
//! | `c.path` | scalar field container for `tabulated` | none |
//! | `beta.kind` | `constant` or `tabulated` | `constant` |
//! | `beta.value` | constant nonlinearity | per command |
//! | `beta.path` | scalar field container for `tabulated` | none |
//! | `dx`, `dt`, `t_final` | space-time grid | `0.125`, `0.03`, `3.48` |
//! | `profile_scale` | `C` in `f = C e^{-t⁻²}` | `0.1` |
//! | `ray_entry`, `ray_direction` | ray start and direction | `-1,0,0`, `1,0,0` |
//! | `ray_step` | RK4 step | `0.001` |
//! | `entry_time` | `t₋` of beams | `0.5` |
//! | `tau` | beam frequencies | `25,50,100,200` |
//! | `tau_sweep` | `lo:hi:factor` for the pairing study | `40:160:2` |
//! | `study` | sweep kind | `beta_sweep` |
//! | `fixed`, `anchor` | sweep parameters | `1`, `0.1` |
//! | `ladder` | fitted differences, list or `lo:hi:n` | `0.001:0.1:7` |
//! | `probes` | breakdown differences | empty |
//! | `eps` | expansion amplitudes | `0.04,0.02,0.01,0.005` |

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::experiments::log_ladder;
use crate::fields::{read_scalar_field, ScalarField3D};
use crate::media::{Nonlinearity, SoundSpeed, Vec3};

/// Required first line.
pub const CONFIG_HEADER: &str = "westervelt-config 1";

const KEYS: &[&str] = &[
    "c.kind",
    "c.value",
    "c.alpha",
    "c.path",
    "beta.kind",
    "beta.value",
    "beta.path",
    "dx",
    "dt",
    "t_final",
    "profile_scale",
    "ray_entry",
    "ray_direction",
    "ray_step",
    "entry_time",
    "tau",
    "tau_sweep",
    "study",
    "fixed",
    "anchor",
    "ladder",
    "probes",
    "eps",
];

/// Parsed configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, h)) if h == CONFIG_HEADER => {}
            Some((n, h)) => return Err(Error::Config(format!("line {n}: expected header '{CONFIG_HEADER}', found '{h}'"))),
            None => return Err(Error::Config(format!("empty config, expected header '{CONFIG_HEADER}'"))),
        }
        let mut values = BTreeMap::new();
        for (n, line) in lines {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {n}: expected key = value")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {n}: unknown key '{k}'")));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {n}: duplicate key '{k}'")));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Copy with `key = value` pairs replaced or added.
    pub fn with_overrides(&self, pairs: &[(&str, String)]) -> Result<Self> {
        let mut out = self.clone();
        for (k, v) in pairs {
            if !KEYS.contains(k) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
            out.values.insert(k.to_string(), v.clone());
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma list, or `lo:hi:n` log-spaced.
    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let Some(v) = self.get(key) else { return Ok(default.to_vec()) };
        if v.is_empty() {
            return Ok(Vec::new());
        }
        if v.contains(':') {
            let parts: Vec<&str> = v.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("{key}: expected lo:hi:n")));
            }
            let (lo, hi) = (parse_f64(key, parts[0])?, parse_f64(key, parts[1])?);
            let n: usize = parts[2].trim().parse().map_err(|_| Error::Config(format!("{key}: bad count '{}'", parts[2])))?;
            if !(lo > 0.0 && hi >= lo && n >= 1) {
                return Err(Error::Config(format!("{key}: need 0 < lo <= hi and n >= 1")));
            }
            return Ok(log_ladder(lo, hi, n));
        }
        v.split(',').map(|s| parse_f64(key, s)).collect()
    }

    /// `lo:hi:factor` geometric range.
    pub fn geometric_or(&self, key: &str, default: (f64, f64, f64)) -> Result<Vec<f64>> {
        let (lo, hi, factor) = match self.get(key) {
            None => default,
            Some(v) => parse_geometric(key, v)?,
        };
        geometric(lo, hi, factor).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    pub fn vec3_or(&self, key: &str, default: Vec3) -> Result<Vec3> {
        let Some(v) = self.get(key) else { return Ok(default) };
        let xs: Vec<f64> = v.split(',').map(|s| parse_f64(key, s)).collect::<Result<_>>()?;
        if xs.len() != 3 {
            return Err(Error::Config(format!("{key}: expected three comma-separated numbers")));
        }
        Ok([xs[0], xs[1], xs[2]])
    }

    fn field(&self, key: &str) -> Result<ScalarField3D> {
        let path = self.get(key).ok_or_else(|| Error::Config(format!("{key} is required for tabulated media")))?;
        let mut f = std::fs::File::open(path).map_err(|e| Error::Config(format!("{key}: {path}: {e}")))?;
        read_scalar_field(&mut f).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Sound speed from the `c.*` keys.
    pub fn sound_speed(&self) -> Result<SoundSpeed> {
        match self.str_or("c.kind", "constant") {
            "constant" => SoundSpeed::constant(self.f64_or("c.value", 1.0)?),
            "herglotz" => SoundSpeed::herglotz(self.f64_or("c.alpha", 1.5)?),
            "tabulated" => SoundSpeed::tabulated(self.field("c.path")?),
            other => Err(Error::Config(format!("c.kind: unknown kind '{other}'"))),
        }
        .map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    /// Nonlinearity from the `beta.*` keys.
    pub fn nonlinearity(&self, default: f64) -> Result<Nonlinearity> {
        match self.str_or("beta.kind", "constant") {
            "constant" => Ok(Nonlinearity::Constant(self.f64_or("beta.value", default)?)),
            "tabulated" => Ok(Nonlinearity::Tabulated(self.field("beta.path")?)),
            other => Err(Error::Config(format!("beta.kind: unknown kind '{other}'"))),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| Error::Config(format!("{key}: '{}' is not a number", v.trim())))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: value must be finite")));
    }
    Ok(x)
}

/// Parses `lo:hi:factor`.
pub fn parse_geometric(key: &str, v: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("{key}: expected lo:hi:factor")));
    }
    Ok((parse_f64(key, parts[0])?, parse_f64(key, parts[1])?, parse_f64(key, parts[2])?))
}

/// `lo, lo·factor, …` up to `hi` inclusive (relative slack `1e-9`).
pub fn geometric(lo: f64, hi: f64, factor: f64) -> std::result::Result<Vec<f64>, String> {
    if !(lo > 0.0 && hi >= lo && factor > 1.0) {
        return Err("need 0 < lo <= hi and factor > 1".into());
    }
    let mut out = vec![lo];
    loop {
        let next = out.last().unwrap() * factor;
        if next > hi * (1.0 + 1e-9) || out.len() > 64 {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_lists_and_ranges() {
        let c = Config::parse("# comment\nwestervelt-config 1\nbeta.value = 0.3 # trailing\ntau = 25, 50\nladder = 0.001:0.1:3\nc.kind = herglotz\n").unwrap();
        assert_eq!(c.nonlinearity(0.0).unwrap(), Nonlinearity::Constant(0.3));
        assert_eq!(c.f64_or("dx", 0.125).unwrap(), 0.125);
        assert_eq!(c.list_or("tau", &[]).unwrap(), vec![25.0, 50.0]);
        let l = c.list_or("ladder", &[]).unwrap();
        assert_eq!(l.len(), 3);
        assert!((l[1] - 0.01).abs() < 1e-15);
        assert_eq!(c.sound_speed().unwrap(), SoundSpeed::herglotz(1.5).unwrap());
        assert_eq!(c.geometric_or("tau_sweep", (40.0, 160.0, 2.0)).unwrap(), vec![40.0, 80.0, 160.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        for text in [
            "",
            "beta = 1",
            "westervelt-config 2\n",
            "westervelt-config 1\nbogus = 1",
            "westervelt-config 1\nbeta.value 1",
            "westervelt-config 1\nc.value = 1\nc.value = 2",
        ] {
            assert!(matches!(Config::parse(text), Err(Error::Config(_))), "{text:?}");
        }
        let c = Config::parse("westervelt-config 1\nbeta.value = x\nc.kind = foam\nc.path = /nonexistent").unwrap();
        assert!(c.nonlinearity(0.0).is_err());
        assert_eq!(c.sound_speed().unwrap_err().exit_code(), 2);
        let t = Config::parse("westervelt-config 1\nc.kind = tabulated\nc.path = /nonexistent").unwrap();
        assert_eq!(t.sound_speed().unwrap_err().exit_code(), 2);
        assert_eq!(Config::parse("westervelt-config 1\nc.value = -1").unwrap().sound_speed().unwrap_err().exit_code(), 2);
    }
}
