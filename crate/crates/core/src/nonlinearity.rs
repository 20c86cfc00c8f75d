//! Right-hand sides `f(x, u)` of `-Δu = f(x, u)`.
//!
//! Every catalog entry depends on `x` only through `r = |x'|` and `|x_n|`,
//! is convex in `u` on `u >= 0`, and (for the separable form) is
//! nonincreasing in `r` and `|x_n|`.

use crate::domain::MonotoneCubic;
use crate::error::{Error, Result};

/// The `u`-dependence of a nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    Constant { c: f64 },
    /// `λ u + c`.
    Affine { lambda: f64, c: f64 },
    /// `λ e^u`.
    Gelfand { lambda: f64 },
    /// `λ (1 + u)^p`.
    Power { lambda: f64, p: f64 },
    /// Interpolated table; admitted for negative tests only.
    Tabulated(MonotoneCubic),
}

/// Spatial weight `κ(r, s) = exp(-α r² - β s²)` with `s = |x_n|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub alpha: f64,
    pub beta: f64,
}

impl Kappa {
    fn eval(&self, r: f64, z: f64) -> f64 {
        let s = z.abs();
        (-self.alpha * r * r - self.beta * s * s).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    phi: Phi,
    kappa: Option<Kappa>,
}

/// Largest exponent accepted before reporting overflow.
const EXP_LIMIT: f64 = 700.0;

impl Nonlinearity {
    pub fn constant(c: f64) -> Result<Self> {
        finite("c", c)?;
        Ok(Self { phi: Phi::Constant { c }, kappa: None })
    }

    pub fn affine(lambda: f64, c: f64) -> Result<Self> {
        finite("lambda", lambda)?;
        finite("c", c)?;
        Ok(Self { phi: Phi::Affine { lambda, c }, kappa: None })
    }

    pub fn gelfand(lambda: f64) -> Result<Self> {
        nonnegative("lambda", lambda)?;
        Ok(Self { phi: Phi::Gelfand { lambda }, kappa: None })
    }

    pub fn power(lambda: f64, p: f64) -> Result<Self> {
        nonnegative("lambda", lambda)?;
        finite("p", p)?;
        if p < 1.0 {
            return Err(Error::InvalidNonlinearity(format!("power needs p >= 1 for convexity, got {p}")));
        }
        Ok(Self { phi: Phi::Power { lambda, p }, kappa: None })
    }

    /// `φ(u)` sampled at strictly increasing `u` knots.
    pub fn tabulated(u: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let s = MonotoneCubic::new(u, phi)
            .map_err(|e| Error::InvalidNonlinearity(e.to_string()))?;
        Ok(Self { phi: Phi::Tabulated(s), kappa: None })
    }

    /// `κ(r, |x_n|) φ(u)` with the `u`-dependence taken from `self`.
    pub fn separable(self, alpha: f64, beta: f64) -> Result<Self> {
        nonnegative("alpha", alpha)?;
        nonnegative("beta", beta)?;
        Ok(Self { phi: self.phi, kappa: Some(Kappa { alpha, beta }) })
    }

    pub fn phi(&self) -> &Phi {
        &self.phi
    }

    pub fn kappa(&self) -> Option<Kappa> {
        self.kappa
    }

    pub fn x_dependent(&self) -> bool {
        self.kappa.is_some_and(|k| k.alpha != 0.0 || k.beta != 0.0)
    }

    /// `true` for entries the theorems cover (everything except tables).
    pub fn conforming(&self) -> bool {
        !matches!(self.phi, Phi::Tabulated(_))
    }

    /// Forms whose Newton iteration is exact after one step.
    pub fn is_linear(&self) -> bool {
        matches!(self.phi, Phi::Constant { .. } | Phi::Affine { .. })
    }

    /// `f(0)` is positive everywhere (so nontrivial solutions are positive).
    pub fn positive_at_zero(&self) -> bool {
        match &self.phi {
            Phi::Constant { c } | Phi::Affine { c, .. } => *c > 0.0,
            Phi::Gelfand { lambda } | Phi::Power { lambda, .. } => *lambda > 0.0,
            Phi::Tabulated(s) => s.eval(0.0) > 0.0,
        }
    }

    fn phi_eval(&self, u: f64) -> Result<f64> {
        Ok(match &self.phi {
            Phi::Constant { c } => *c,
            Phi::Affine { lambda, c } => lambda * u + c,
            Phi::Gelfand { lambda } => {
                if u > EXP_LIMIT {
                    return Err(Error::Overflow { u });
                }
                lambda * u.exp()
            }
            Phi::Power { lambda, p } => {
                let v = lambda * (1.0 + u).max(0.0).powf(*p);
                if !v.is_finite() {
                    return Err(Error::Overflow { u });
                }
                v
            }
            Phi::Tabulated(s) => s.eval(u),
        })
    }

    fn phi_du(&self, u: f64) -> Result<f64> {
        Ok(match &self.phi {
            Phi::Constant { .. } => 0.0,
            Phi::Affine { lambda, .. } => *lambda,
            Phi::Gelfand { lambda } => {
                if u > EXP_LIMIT {
                    return Err(Error::Overflow { u });
                }
                lambda * u.exp()
            }
            Phi::Power { lambda, p } => {
                let v = lambda * p * (1.0 + u).max(0.0).powf(p - 1.0);
                if !v.is_finite() {
                    return Err(Error::Overflow { u });
                }
                v
            }
            Phi::Tabulated(s) => s.deriv(u),
        })
    }

    fn weight(&self, r: f64, z: f64) -> f64 {
        self.kappa.map_or(1.0, |k| k.eval(r, z))
    }

    /// `f(x, u)` at meridian point `(r, z)`.
    pub fn eval(&self, r: f64, z: f64, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Overflow { u });
        }
        Ok(self.weight(r, z) * self.phi_eval(u)?)
    }

    /// `∂f/∂u` at `(r, z)`.
    pub fn eval_du(&self, r: f64, z: f64, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::Overflow { u });
        }
        Ok(self.weight(r, z) * self.phi_du(u)?)
    }

    /// `∂f/∂r` at fixed `u` (the `x_i` derivative is this times `x_i / r`).
    pub fn eval_dr(&self, r: f64, z: f64, u: f64) -> Result<f64> {
        match self.kappa {
            None => Ok(0.0),
            Some(k) => Ok(-2.0 * k.alpha * r * k.eval(r, z) * self.phi_eval(u)?),
        }
    }

    /// `∂f/∂x_n` at fixed `u`.
    pub fn eval_dz(&self, r: f64, z: f64, u: f64) -> Result<f64> {
        match self.kappa {
            None => Ok(0.0),
            Some(k) => Ok(-2.0 * k.beta * z * k.eval(r, z) * self.phi_eval(u)?),
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidNonlinearity(format!("{name} must be finite")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    finite(name, v)?;
    if v < 0.0 {
        return Err(Error::InvalidNonlinearity(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub convex_in_u: bool,
    pub kappa_monotone: bool,
    pub even_in_z: bool,
    pub conforming: bool,
    pub violations: Vec<String>,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Range of `u` over which convexity is sampled.
pub const HYPOTHESIS_U_MAX: f64 = 4.0;

/// Sampled check of convexity in `u`, monotonicity of `κ` and evenness in `z`.
pub fn check_hypotheses(nl: &Nonlinearity, samples: usize) -> HypothesisReport {
    let m = samples.max(8);
    let mut violations = Vec::new();

    let du = HYPOTHESIS_U_MAX / m as f64;
    let mut convex = true;
    let mut worst = (0.0, 0.0);
    for k in 1..m {
        let u = k as f64 * du;
        let (Ok(a), Ok(b), Ok(c)) = (nl.phi_eval(u - du), nl.phi_eval(u), nl.phi_eval(u + du)) else {
            continue;
        };
        let second = a - 2.0 * b + c;
        if second < -1e-10 * (1.0 + b.abs()) {
            if convex || second < worst.1 {
                worst = (u, second);
            }
            convex = false;
        }
    }
    if !convex {
        violations.push(format!(
            "not convex in u: second difference {:e} at u = {}",
            worst.1, worst.0
        ));
    }

    let mut kappa_monotone = true;
    let mut even = true;
    let grid: Vec<f64> = (0..=m).map(|k| 2.0 * k as f64 / m as f64).collect();
    for w in grid.windows(2) {
        for &s in &grid {
            let f0 = nl.weight(w[0], s);
            let f1 = nl.weight(w[1], s);
            let g0 = nl.weight(s, w[0]);
            let g1 = nl.weight(s, w[1]);
            if f1 > f0 || g1 > g0 {
                kappa_monotone = false;
            }
            let u = 0.5;
            if nl.eval(w[0], s, u).ok() != nl.eval(w[0], -s, u).ok() {
                even = false;
            }
        }
    }
    if !kappa_monotone {
        violations.push("spatial weight increases in r or |x_n|".into());
    }
    if !even {
        violations.push("not even in x_n".into());
    }
    HypothesisReport {
        convex_in_u: convex,
        kappa_monotone,
        even_in_z: even,
        conforming: nl.conforming(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn catalog() -> Vec<Nonlinearity> {
        vec![
            Nonlinearity::constant(1.0).unwrap(),
            Nonlinearity::affine(2.0, 1.0).unwrap(),
            Nonlinearity::gelfand(1.0).unwrap(),
            Nonlinearity::power(0.5, 3.0).unwrap(),
            Nonlinearity::gelfand(1.0).unwrap().separable(1.0, 1.0).unwrap(),
            Nonlinearity::power(1.0, 2.0).unwrap().separable(0.5, 2.0).unwrap(),
        ]
    }

    #[test]
    fn values() {
        let c = Nonlinearity::constant(1.0).unwrap();
        assert_eq!(c.eval(0.3, -0.2, 7.0).unwrap(), 1.0);
        assert_eq!(c.eval_du(0.3, -0.2, 7.0).unwrap(), 0.0);
        let a = Nonlinearity::affine(2.0, 1.0).unwrap();
        assert_eq!(a.eval(0.0, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(a.eval_du(0.0, 0.0, 0.5).unwrap(), 2.0);
        let g = Nonlinearity::gelfand(1.0).unwrap();
        assert_relative_eq!(g.eval(0.0, 0.0, 1.0).unwrap(), std::f64::consts::E);
        assert_eq!(g.eval_du(0.0, 0.0, 0.0).unwrap(), 1.0);
        assert!(matches!(g.eval(0.0, 0.0, 800.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn range_errors() {
        assert!(Nonlinearity::gelfand(-1.0).is_err());
        assert!(Nonlinearity::power(1.0, 0.5).is_err());
        assert!(Nonlinearity::gelfand(1.0).unwrap().separable(-1.0, 0.0).is_err());
    }

    #[test]
    fn hypotheses() {
        assert!(check_hypotheses(&Nonlinearity::gelfand(1.0).unwrap(), 100).convex_in_u);
        let sep = Nonlinearity::gelfand(1.0).unwrap().separable(1.0, 1.0).unwrap();
        let rep = check_hypotheses(&sep, 50);
        assert!(rep.kappa_monotone && rep.pass());
        let u: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let phi: Vec<f64> = u.iter().map(|u| -u * u).collect();
        let bad = Nonlinearity::tabulated(u, phi).unwrap();
        let rep = check_hypotheses(&bad, 100);
        assert!(!rep.convex_in_u);
        assert!(!rep.conforming);
        assert!(!rep.pass());
    }

    proptest! {
        #[test]
        fn du_matches_centered_difference(
            which in 0usize..6, r in 0.0f64..1.5, z in -1.0f64..1.0, u in 0.0f64..3.0
        ) {
            let nl = &catalog()[which];
            let step = 1e-6;
            let fd = (nl.eval(r, z, u + step).unwrap() - nl.eval(r, z, u - step).unwrap()) / (2.0 * step);
            let du = nl.eval_du(r, z, u).unwrap();
            prop_assert!((du - fd).abs() <= 1e-6 * (1.0 + du.abs()));
        }

        #[test]
        fn even_in_z_bit_exact(which in 0usize..6, r in 0.0f64..1.5, z in 0.0f64..1.0, u in 0.0f64..3.0) {
            let nl = &catalog()[which];
            prop_assert_eq!(nl.eval(r, z, u).unwrap().to_bits(), nl.eval(r, -z, u).unwrap().to_bits());
        }

        #[test]
        fn spatial_derivatives_match(r in 0.0f64..1.5, z in -1.0f64..1.0, u in 0.0f64..2.0) {
            let nl = &catalog()[5];
            let s = 1e-6;
            let fr = (nl.eval(r + s, z, u).unwrap() - nl.eval(r - s, z, u).unwrap()) / (2.0 * s);
            let fz = (nl.eval(r, z + s, u).unwrap() - nl.eval(r, z - s, u).unwrap()) / (2.0 * s);
            prop_assert!((fr - nl.eval_dr(r, z, u).unwrap()).abs() <= 1e-6);
            prop_assert!((fz - nl.eval_dz(r, z, u).unwrap()).abs() <= 1e-6);
        }
    }
}
