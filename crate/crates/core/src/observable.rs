//! Observables on [0, 1].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_system::{FiberMap, IntervalMap};
use crate::transfer::bin_centers;

/// A raw (uncentered) observable. Most kinds ignore the fiber; a
/// [`Observable::Coboundary`] is `g ∘ f_ω − g` and so depends on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Observable {
    /// `cos(2π·freq·x)`.
    Cos { freq: f64 },
    /// Hölder kink `|x − center|^exponent`.
    Kink { center: f64, exponent: f64 },
    /// `Σ coeffs[i]·xⁱ`.
    Polynomial { coeffs: Vec<f64> },
    Constant { value: f64 },
    /// `g ∘ f_ω − g`.
    Coboundary { g: Box<Observable> },
    /// `base + g ∘ f_ω − g`.
    Perturbed { base: Box<Observable>, g: Box<Observable> },
}

impl Observable {
    pub fn cos() -> Self {
        Observable::Cos { freq: 1.0 }
    }

    pub fn coboundary(g: Observable) -> Self {
        Observable::Coboundary { g: Box::new(g) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Observable::Kink { exponent, .. } if !(*exponent > 0.0 && *exponent <= 1.0) => {
                Err(Error::InvalidArgument(format!("kink exponent {exponent} not in (0, 1]")))
            }
            Observable::Polynomial { coeffs } if coeffs.is_empty() => {
                Err(Error::InvalidArgument("polynomial needs at least one coefficient".into()))
            }
            Observable::Coboundary { g } => g.validate(),
            Observable::Perturbed { base, g } => base.validate().and(g.validate()),
            _ => Ok(()),
        }
    }

    /// True when the value does not depend on the fiber.
    pub fn is_autonomous(&self) -> bool {
        !matches!(self, Observable::Coboundary { .. } | Observable::Perturbed { .. })
    }

    pub fn eval(&self, fiber: FiberMap, x: f64) -> f64 {
        match self {
            Observable::Cos { freq } => (2.0 * PI * freq * x).cos(),
            Observable::Kink { center, exponent } => (x - center).abs().powf(*exponent),
            Observable::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Observable::Constant { value } => *value,
            Observable::Coboundary { g } => g.eval(fiber, fiber.eval(x)) - g.eval(fiber, x),
            Observable::Perturbed { base, g } => {
                base.eval(fiber, x) + g.eval(fiber, fiber.eval(x)) - g.eval(fiber, x)
            }
        }
    }

    /// Bin-center samples at resolution `n`.
    pub fn table(&self, fiber: FiberMap, n: usize) -> Vec<f64> {
        bin_centers(n).map(|x| self.eval(fiber, x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_system::MapFamily;

    #[test]
    fn evaluations() {
        let f = MapFamily::Expanding.fiber(0.5);
        assert!((Observable::cos().eval(f, 0.5) + 1.0).abs() < 1e-15);
        let k = Observable::Kink {
            center: 0.3,
            exponent: 0.5,
        };
        assert!((k.eval(f, 0.55) - 0.5).abs() < 1e-15);
        let p = Observable::Polynomial {
            coeffs: vec![1.0, -2.0, 3.0],
        };
        assert!((p.eval(f, 2.0) - 9.0).abs() < 1e-15);
        let c = Observable::coboundary(Observable::Polynomial {
            coeffs: vec![0.0, 1.0],
        });
        // g(x) = x, f(0.3) = 0.6
        assert!((c.eval(f, 0.3) - 0.3).abs() < 1e-15);
        assert!(!c.is_autonomous());
    }

    #[test]
    fn validation() {
        assert!(Observable::Kink {
            center: 0.0,
            exponent: 1.5
        }
        .validate()
        .is_err());
        assert!(Observable::Polynomial { coeffs: vec![] }.validate().is_err());
        assert!(Observable::cos().validate().is_ok());
    }

    #[test]
    fn serde_round_trip() {
        let o = Observable::coboundary(Observable::Cos { freq: 2.0 });
        let s = serde_json::to_string(&o).unwrap();
        let back: Observable = serde_json::from_str(&s).unwrap();
        assert_eq!(o, back);
    }
}
