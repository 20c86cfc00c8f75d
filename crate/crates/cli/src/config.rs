//! Line-based run configuration: `[section]` headers, `key = value` pairs,
//! `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cpl_core::domain::{MeridianDomain, ProfileFunction};
use cpl_core::nonlinearity::Nonlinearity;

use crate::error::{CliError, Result};

const KEYS: &[(&str, &[&str])] = &[
    ("", &["seed"]),
    ("domain", &["n", "kind", "a", "b", "coefficients", "knots", "values", "table", "description"]),
    ("nonlinearity", &["kind", "c", "lambda", "p", "u", "phi", "alpha", "beta"]),
    ("grid", &["nr", "nz"]),
    ("solver", &["tol_pde", "tol_lin", "max_newton", "max_lin_iter", "tol_eig"]),
    ("continuation", &["t_step0", "t_step_min"]),
    ("oracle", &["N"]),
    ("output", &["directory", "emit_fields"]),
    ("verify", &["seeds", "tol_cp"]),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: MeridianDomain,
    pub nonlinearity: Nonlinearity,
    pub nr: usize,
    pub nz: usize,
    pub tol_pde: f64,
    pub tol_lin: f64,
    pub tol_eig: f64,
    pub max_newton: usize,
    pub max_lin_iter: usize,
    pub t_step0: f64,
    pub t_step_min: f64,
    pub oracle_n: usize,
    pub out_dir: PathBuf,
    pub emit_fields: bool,
    pub seed: u64,
    pub seeds: usize,
    pub tol_cp: f64,
}

struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs with the lookups that record what was consumed.
struct Sections {
    path: String,
    map: BTreeMap<(String, String), Entry>,
    missing: Vec<String>,
}

impl Sections {
    fn err(&self, line: usize, msg: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), line, msg: msg.into() }
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.map.get(&(section.to_string(), key.to_string()))
    }

    fn require(&mut self, section: &str, key: &str) -> Option<&Entry> {
        if self.get(section, key).is_none() {
            self.missing.push(format!("{section}.{key}"));
        }
        self.get(section, key)
    }

    fn parse_num<T: std::str::FromStr>(&self, e: &Entry, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        e.value.parse::<T>().map_err(|err| self.err(e.line, format!("`{key}`: {err}")))
    }

    fn number(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            Some(e) => {
                let v: f64 = self.parse_num(e, key)?;
                if !v.is_finite() {
                    return Err(self.err(e.line, format!("`{key}` must be finite")));
                }
                Ok(v)
            }
            None => Ok(default),
        }
    }

    fn positive(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v = self.number(section, key, default)?;
        if v <= 0.0 {
            let line = self.get(section, key).map_or(0, |e| e.line);
            return Err(self.err(line, format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonnegative(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        let v = self.number(section, key, default)?;
        if v < 0.0 {
            let line = self.get(section, key).map_or(0, |e| e.line);
            return Err(self.err(line, format!("`{key}` must be >= 0, got {v}")));
        }
        Ok(v)
    }

    fn count(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            Some(e) => self.parse_num(e, key),
            None => Ok(default),
        }
    }

    fn list(&self, e: &Entry, key: &str) -> Result<Vec<f64>> {
        e.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|err| self.err(e.line, format!("`{key}`: {err}"))))
            .collect()
    }

    fn required_number(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        if self.require(section, key).is_none() {
            return Ok(None);
        }
        self.number(section, key, 0.0).map(Some)
    }

    fn required_list(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.require(section, key) {
            None => Ok(None),
            Some(_) => {
                let e = self.get(section, key).unwrap();
                self.list(e, key).map(Some)
            }
        }
    }
}

fn tokenize(path: &str, text: &str) -> Result<Sections> {
    let mut map: BTreeMap<(String, String), Entry> = BTreeMap::new();
    let mut section = String::new();
    let err = |line: usize, msg: String| CliError::Config { path: path.to_string(), line, msg };
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(line, format!("malformed section header `{l}`")))?.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(err(line, format!("unknown section `[{name}]`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = l.split_once('=').ok_or_else(|| err(line, format!("expected `key = value`, found `{l}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let known = KEYS.iter().find(|(s, _)| *s == section).map_or(&[][..], |(_, keys)| *keys);
        if !known.contains(&key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("section [{section}]") };
            return Err(err(line, format!("unknown key `{key}` in {place}")));
        }
        if value.is_empty() {
            return Err(err(line, format!("empty value for `{key}`")));
        }
        if let Some(prev) = map.get(&(section.clone(), key.to_string())) {
            return Err(err(line, format!("duplicate key `{key}` (lines {} and {line})", prev.line)));
        }
        map.insert((section.clone(), key.to_string()), Entry { value: value.to_string(), line });
    }
    Ok(Sections { path: path.to_string(), map, missing: Vec::new() })
}

fn core_err(s: &Sections, section: &str, key: &str, e: cpl_core::Error) -> CliError {
    let line = s.get(section, key).map_or(0, |e| e.line);
    s.err(line, e.to_string())
}

fn parse_domain(s: &mut Sections, base: &Path) -> Result<Option<MeridianDomain>> {
    let n = s.count("domain", "n", 3)?;
    if n < 2 {
        let line = s.get("domain", "n").map_or(0, |e| e.line);
        return Err(s.err(line, format!("`n` must be at least 2, got {n}")));
    }
    let Some(kind) = s.require("domain", "kind").map(|e| e.value.clone()) else {
        return Ok(None);
    };
    let profile = match kind.as_str() {
        "ball" => s.required_number("domain", "a")?.map(ProfileFunction::ball),
        "spheroid" => {
            let a = s.required_number("domain", "a")?;
            let b = s.required_number("domain", "b")?;
            a.zip(b).map(|(a, b)| ProfileFunction::spheroid(a, b))
        }
        "polynomial" => s.required_list("domain", "coefficients")?.map(ProfileFunction::polynomial),
        "tabulated" => {
            if let Some(e) = s.get("domain", "table") {
                let p = base.join(&e.value);
                Some(ProfileFunction::from_table_file(&p))
            } else {
                let r = s.required_list("domain", "knots")?;
                let g = s.required_list("domain", "values")?;
                r.zip(g).map(|(r, g)| ProfileFunction::tabulated(r, g))
            }
        }
        other => {
            let line = s.get("domain", "kind").map_or(0, |e| e.line);
            return Err(s.err(line, format!("unknown domain kind `{other}` (ball, spheroid, polynomial, tabulated)")));
        }
    };
    let Some(profile) = profile else { return Ok(None) };
    let profile = profile.map_err(|e| core_err(s, "domain", "kind", e))?;
    let description = s.get("domain", "description").map(|e| e.value.clone()).unwrap_or_default();
    MeridianDomain::new(n, profile, description).map(Some).map_err(|e| core_err(s, "domain", "n", e))
}

fn parse_nonlinearity(s: &mut Sections) -> Result<Option<Nonlinearity>> {
    let Some(kind) = s.require("nonlinearity", "kind").map(|e| e.value.clone()) else {
        return Ok(None);
    };
    let sec = "nonlinearity";
    let lambda_nonneg = |s: &mut Sections| -> Result<Option<f64>> {
        let v = s.required_number(sec, "lambda")?;
        if let Some(l) = v.filter(|l| *l < 0.0) {
            let line = s.get(sec, "lambda").map_or(0, |e| e.line);
            return Err(s.err(line, format!("`lambda` must be >= 0 for {kind}, got {l}")));
        }
        Ok(v)
    };
    let nl = match kind.as_str() {
        "constant" => Some(Nonlinearity::constant(s.number(sec, "c", 1.0)?)),
        "affine" => {
            let l = s.required_number(sec, "lambda")?;
            let c = s.number(sec, "c", 1.0)?;
            l.map(|l| Nonlinearity::affine(l, c))
        }
        "gelfand" => lambda_nonneg(s)?.map(Nonlinearity::gelfand),
        "power" => {
            let l = lambda_nonneg(s)?;
            let p = s.required_number(sec, "p")?;
            l.zip(p).map(|(l, p)| Nonlinearity::power(l, p))
        }
        "tabulated" => {
            let u = s.required_list(sec, "u")?;
            let phi = s.required_list(sec, "phi")?;
            u.zip(phi).map(|(u, phi)| Nonlinearity::tabulated(u, phi))
        }
        other => {
            let line = s.get(sec, "kind").map_or(0, |e| e.line);
            return Err(s.err(line, format!("unknown nonlinearity kind `{other}` (constant, affine, gelfand, power, tabulated)")));
        }
    };
    let Some(nl) = nl else { return Ok(None) };
    let mut nl = nl.map_err(|e| core_err(s, sec, "kind", e))?;
    if s.get(sec, "alpha").is_some() || s.get(sec, "beta").is_some() {
        let alpha = s.nonnegative(sec, "alpha", 0.0)?;
        let beta = s.nonnegative(sec, "beta", 0.0)?;
        nl = nl.separable(alpha, beta).map_err(|e| core_err(s, sec, "alpha", e))?;
    }
    Ok(Some(nl))
}

/// `nz` giving square cells over `[0, R] x [-g(0), g(0)]`.
pub fn default_nz(nr: usize, radial_extent: f64, axis_height: f64) -> usize {
    let j0 = ((nr - 1) as f64 * axis_height / radial_extent).ceil() as usize;
    2 * j0.max(4) + 1
}

pub fn parse_config_str(text: &str, path: &str, base: &Path) -> Result<RunConfig> {
    let mut s = tokenize(path, text)?;
    let domain = parse_domain(&mut s, base)?;
    let nonlinearity = parse_nonlinearity(&mut s)?;
    if !s.missing.is_empty() {
        return Err(CliError::Missing { path: path.to_string(), keys: s.missing.clone() });
    }
    let (domain, nonlinearity) = (domain.unwrap(), nonlinearity.unwrap());

    let nr = s.count("grid", "nr", 129)?;
    let nz = match s.get("grid", "nz") {
        Some(_) => s.count("grid", "nz", 0)?,
        None => default_nz(nr.max(2), domain.profile.first_zero(), domain.profile.a0()),
    };
    if nz % 2 == 0 {
        let line = s.get("grid", "nz").map_or(0, |e| e.line);
        return Err(s.err(line, format!("`nz` must be odd, got {nz}")));
    }
    let t_step0 = s.positive("continuation", "t_step0", 0.05)?;
    if t_step0 > 0.1 {
        let line = s.get("continuation", "t_step0").map_or(0, |e| e.line);
        return Err(s.err(line, format!("`t_step0` must be at most 0.1, got {t_step0}")));
    }
    let oracle_n = s.count("oracle", "N", 48)?;
    if !(4..=cpl_core::oracle3d::MAX_N).contains(&oracle_n) {
        let line = s.get("oracle", "N").map_or(0, |e| e.line);
        return Err(s.err(line, format!("`N` must lie in 4..={}, got {oracle_n}", cpl_core::oracle3d::MAX_N)));
    }
    let emit_fields = match s.get("output", "emit_fields") {
        None => false,
        Some(e) => match e.value.as_str() {
            "true" => true,
            "false" => false,
            v => return Err(s.err(e.line, format!("`emit_fields` must be true or false, got `{v}`"))),
        },
    };
    Ok(RunConfig {
        domain,
        nonlinearity,
        nr,
        nz,
        tol_pde: s.positive("solver", "tol_pde", 1e-9)?,
        tol_lin: s.positive("solver", "tol_lin", 1e-11)?,
        tol_eig: s.positive("solver", "tol_eig", 1e-8)?,
        max_newton: s.count("solver", "max_newton", 30)?,
        max_lin_iter: s.count("solver", "max_lin_iter", 50_000)?,
        t_step0,
        t_step_min: s.positive("continuation", "t_step_min", 1e-4)?,
        oracle_n,
        out_dir: s.get("output", "directory").map_or_else(|| PathBuf::from("out"), |e| base.join(&e.value)),
        emit_fields,
        seed: s.count("", "seed", 0)? as u64,
        seeds: s.count("verify", "seeds", 5)?,
        tol_cp: s.positive("verify", "tol_cp", 1e-8)?,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, &path.display().to_string(), base)
}
