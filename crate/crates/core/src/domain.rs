//! Rotationally symmetric domains described by a meridian profile.
//!
//! A domain in `R^n` is `{ x : |x_n| < g(|x'|) }` with `x' = (x_1, .., x_{n-1})`
//! and `g` a continuous nonincreasing profile with first zero `R`. The
//! homotopy family deforms the ball `B_a` (`a = g(0)`) into the target by
//! blending profiles linearly in `t`.

use std::path::Path;


use crate::error::{Error, Result};

/// Anything that can serve as the profile of a meridian domain.
pub trait Profile: Sync {
    /// Half-height `g(r)` of the domain at radius `r`; `0` beyond the extent.
    fn height(&self, r: f64) -> f64;
    /// First zero of the profile.
    fn radial_extent(&self) -> f64;
    fn axis_height(&self) -> f64 {
        self.height(0.0)
    }
    fn inside(&self, r: f64, z: f64) -> bool {
        r >= 0.0 && r < self.radial_extent() && z.abs() < self.height(r)
    }
}

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::InvalidProfile(
                "tabulated profile needs at least two (r, g) pairs".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite tabulated value".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile(
                "tabulation knots must be strictly increasing".into(),
            ));
        }
        let slopes = pchip_slopes(&knots, &values);
        Ok(Self { knots, values, slopes })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Derivative of the interpolant; zero outside the knot range.
    pub fn deriv(&self, x: f64) -> f64 {
        let k = &self.knots;
        let last = k.len() - 1;
        if x < k[0] || x > k[last] {
            return 0.0;
        }
        let i = (k.partition_point(|&v| v <= x).max(1) - 1).min(last - 1);
        let h = k[i + 1] - k[i];
        let s = (x - k[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * d1)
            / h
    }

    /// Evaluates the interpolant; constant extension outside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return self.values[0];
        }
        let last = k.len() - 1;
        if x >= k[last] {
            return self.values[last];
        }
        let i = k.partition_point(|&v| v <= x) - 1;
        let h = k[i + 1] - k[i];
        let s = (x - k[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..m - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if m == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; m];
    for k in 1..m - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[m - 1] = pchip_end(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `g(r) = sqrt(a^2 - r^2)`.
    Ball { a: f64 },
    /// `g(r) = b sqrt(1 - (r/a)^2)`: radial semi-axis `a`, axial semi-axis `b`.
    Spheroid { a: f64, b: f64 },
    /// `g(r) = sum_k c_k r^k`, cut off at its first positive zero.
    Polynomial { coefficients: Vec<f64> },
    Tabulated(MonotoneCubic),
}

/// Meridian profile with its first zero `R` and axis height `g(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFunction {
    kind: ProfileKind,
    first_zero: f64,
    a0: f64,
}

impl ProfileFunction {
    pub fn ball(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidProfile(format!("ball radius must be positive, got {a}")));
        }
        Ok(Self { kind: ProfileKind::Ball { a }, first_zero: a, a0: a })
    }

    pub fn spheroid(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "spheroid semi-axes must be positive, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { kind: ProfileKind::Spheroid { a, b }, first_zero: a, a0: b })
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        let mut c = coefficients;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite polynomial coefficient".into()));
        }
        while c.len() > 1 && c[c.len() - 1] == 0.0 {
            c.pop();
        }
        if c.is_empty() || c[0] <= 0.0 {
            return Err(Error::InvalidProfile("polynomial profile needs g(0) > 0".into()));
        }
        let first_zero = smallest_positive_root(&c).ok_or_else(|| {
            Error::InvalidProfile("polynomial profile has no positive zero".into())
        })?;
        let a0 = c[0];
        Ok(Self { kind: ProfileKind::Polynomial { coefficients: c }, first_zero, a0 })
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.first().copied() != Some(0.0) {
            return Err(Error::InvalidProfile("tabulated profile must start at r = 0".into()));
        }
        let spline = MonotoneCubic::new(knots, values)?;
        let k = spline.knots();
        let v = spline.values();
        let mut first_zero = k[k.len() - 1];
        if let Some(i) = v.iter().position(|&g| g <= 0.0) {
            if i == 0 {
                return Err(Error::InvalidProfile("tabulated profile needs g(0) > 0".into()));
            }
            // the interpolant is monotone on each interval, so the zero is bracketed
            let (mut lo, mut hi) = (k[i - 1], k[i]);
            if v[i] < 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if spline.eval(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
            first_zero = hi;
        }
        let a0 = v[0];
        Ok(Self { kind: ProfileKind::Tabulated(spline), first_zero, a0 })
    }

    /// Reads a two-column `r g` table; `#` starts a comment.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (r, g) = parse_table(&text)?;
        Self::tabulated(r, g)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn first_zero(&self) -> f64 {
        self.first_zero
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Formula value without the zero extension.
    pub fn raw(&self, r: f64) -> f64 {
        match &self.kind {
            ProfileKind::Ball { a } => (a * a - r * r).max(0.0).sqrt(),
            ProfileKind::Spheroid { a, b } => b * (1.0 - (r / a) * (r / a)).max(0.0).sqrt(),
            ProfileKind::Polynomial { coefficients } => horner(coefficients, r),
            ProfileKind::Tabulated(s) => s.eval(r),
        }
    }

    /// `g(r)` extended by zero for `r >= R`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.first_zero {
            0.0
        } else {
            self.raw(r).max(0.0)
        }
    }
}

pub(crate) fn parse_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = Vec::new();
    let mut g = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::Format { line: lineno + 1, msg: "expected two columns".into() });
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format { line: lineno + 1, msg: format!("{s}: {e}") })
        };
        r.push(parse(cols[0])?);
        g.push(parse(cols[1])?);
    }
    Ok((r, g))
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

/// Real roots of `c` in `[lo, hi]`, ascending. The critical points of `c`
/// split the interval into monotone pieces; a root is either a sign change
/// inside a piece or a critical point where the value vanishes.
fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        let x = -c[0] / c[1];
        return if (lo..=hi).contains(&x) { vec![x] } else { Vec::new() };
    }
    let d: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, &ck)| k as f64 * ck).collect();
    let scale = c.iter().map(|v| v.abs()).fold(0.0, f64::max) * hi.abs().max(1.0).powi(deg as i32);
    let mut breaks = vec![lo];
    breaks.extend(real_roots(&d, lo, hi));
    breaks.push(hi);
    let mut roots: Vec<f64> = Vec::new();
    let push = |x: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&l| (x - l).abs() > 1e-12 * x.abs().max(1.0)) {
            roots.push(x);
        }
    };
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (horner(c, a), horner(c, b));
        if fa.abs() <= 1e-13 * scale {
            push(a, &mut roots);
        }
        if fa * fb < 0.0 {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (x0 + x1);
                if mid <= x0 || mid >= x1 {
                    break;
                }
                let fm = horner(c, mid);
                if fm == 0.0 {
                    x0 = mid;
                    x1 = mid;
                    break;
                }
                if (fm < 0.0) == (f0 < 0.0) {
                    x0 = mid;
                    f0 = fm;
                } else {
                    x1 = mid;
                }
            }
            push(0.5 * (x0 + x1), &mut roots);
        }
    }
    if horner(c, hi).abs() <= 1e-13 * scale {
        push(hi, &mut roots);
    }
    roots
}

/// Smallest positive real root.
fn smallest_positive_root(c: &[f64]) -> Option<f64> {
    let deg = c.len() - 1;
    if deg == 0 {
        return None;
    }
    // Cauchy bound on the root modulus
    let bound = 1.0 + c[..deg].iter().map(|v| (v / c[deg]).abs()).fold(0.0, f64::max);
    real_roots(c, 0.0, bound).into_iter().find(|&x| x > 0.0)
}

/// A simple rotationally symmetric domain in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeridianDomain {
    pub n: usize,
    pub profile: ProfileFunction,
    pub description: String,
}

impl MeridianDomain {
    pub fn new(n: usize, profile: ProfileFunction, description: impl Into<String>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be at least 2, got {n}")));
        }
        Ok(Self { n, profile, description: description.into() })
    }
}

impl Profile for MeridianDomain {
    fn height(&self, r: f64) -> f64 {
        self.profile.eval(r)
    }
    fn radial_extent(&self) -> f64 {
        self.profile.first_zero()
    }
}

/// The blend `t g(r) + (1 - t) sqrt(a^2 - r^2)` between `B_a` and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyFamily {
    pub target: MeridianDomain,
    pub a: f64,
}

impl HomotopyFamily {
    /// Uses `a = g(0)` so that every member has the same axis height.
    pub fn new(target: MeridianDomain) -> Self {
        let a = target.profile.a0();
        Self { target, a }
    }

    pub fn profile_at_t(&self, r: f64, t: f64) -> f64 {
        let r = r.abs();
        let ball = if r < self.a { (self.a * self.a - r * r).sqrt() } else { 0.0 };
        let g = self.target.profile.eval(r);
        if t == 0.0 {
            ball
        } else if t == 1.0 {
            g
        } else {
            t * g + (1.0 - t) * ball
        }
    }

    /// First zero of the interpolated profile.
    pub fn extent_at_t(&self, t: f64) -> f64 {
        let big = self.target.profile.first_zero();
        if t == 0.0 {
            self.a
        } else if t == 1.0 {
            big
        } else {
            big.max(self.a)
        }
    }

    /// `true` when every member equals the target (the target is `B_a`).
    pub fn is_constant(&self) -> bool {
        matches!(self.target.profile.kind(), ProfileKind::Ball { .. })
    }

    /// Radial extent covering every member of the family.
    pub fn max_extent(&self) -> f64 {
        self.a.max(self.target.profile.first_zero())
    }

    pub fn at(&self, t: f64) -> DomainAtT<'_> {
        DomainAtT { family: self, t: t.clamp(0.0, 1.0) }
    }
}

/// One member `Ω_t` of a [`HomotopyFamily`].
#[derive(Debug, Clone, Copy)]
pub struct DomainAtT<'a> {
    pub family: &'a HomotopyFamily,
    pub t: f64,
}

impl Profile for DomainAtT<'_> {
    fn height(&self, r: f64) -> f64 {
        if r.abs() >= self.radial_extent() {
            return 0.0;
        }
        self.family.profile_at_t(r, self.t)
    }
    fn radial_extent(&self) -> f64 {
        self.family.extent_at_t(self.t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub radial_extent: f64,
    pub axis_height: f64,
    /// `g` is concave on `[0, R]`, i.e. the domain is convex.
    pub convex: bool,
    pub pass: bool,
}

impl ValidationReport {
    pub fn failed(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Sampled check that the profile defines a simple rotationally symmetric domain.
pub fn validate_simple_domain(d: &MeridianDomain, samples: usize) -> Result<ValidationReport> {
    let samples = samples.max(8);
    let p = &d.profile;
    let big_r = p.first_zero();
    let a0 = p.a0();
    let rs: Vec<f64> = (0..=samples).map(|k| big_r * k as f64 / samples as f64).collect();
    let gs: Vec<f64> = rs.iter().map(|&r| p.raw(r)).collect();
    if let Some(k) = gs.iter().position(|g| !g.is_finite()) {
        return Err(Error::InvalidProfile(format!("g({}) is not finite", rs[k])));
    }
    let eps = 1e-12 * a0.abs().max(1.0);
    let mut checks = Vec::new();

    let nonpos = rs[..samples].iter().zip(&gs).find(|(_, &g)| g <= 0.0);
    checks.push(ValidationCheck {
        name: "positive",
        pass: nonpos.is_none() && d.n >= 2,
        detail: match nonpos {
            Some((r, g)) => format!("g({r}) = {g} <= 0 before the first zero"),
            None => format!("g > 0 on [0, {big_r})"),
        },
    });

    let g_end = gs[samples];
    checks.push(ValidationCheck {
        name: "vanishes_at_extent",
        pass: g_end.abs() <= 1e-9 * a0.abs().max(1.0),
        detail: format!("g(R) = {g_end:e} at R = {big_r}"),
    });

    let rise = gs.windows(2).enumerate().find(|(_, w)| w[1] > w[0] + eps);
    checks.push(ValidationCheck {
        name: "nonincreasing",
        pass: rise.is_none(),
        detail: match rise {
            Some((k, w)) => format!("g rises from {} to {} on [{}, {}]", w[0], w[1], rs[k], rs[k + 1]),
            None => "monotone profile: the domain is x_i-convex for every axis".into(),
        },
    });

    checks.push(ValidationCheck {
        name: "even_in_x_n",
        pass: true,
        detail: "structural for profile domains".into(),
    });

    let ceps = 1e-10 * a0.abs().max(1.0);
    let convex = gs.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] <= ceps);
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, radial_extent: big_r, axis_height: a0, convex, pass })
}
