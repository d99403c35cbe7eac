//! Pulse envelopes normalized to unit area over their truncated support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the Gaussian support in units of `1/σ`.
pub const GAUSSIAN_CUTOFF: f64 = 4.0;
/// Half-width of the sech support in units of `1/σ`.
pub const SECH_CUTOFF: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Gaussian,
    Sech,
}

/// `norm · exp(−σ²(t−c)²/2)` or `norm · sech(σ(t−c))` on `|t−c| ≤ cutoff`,
/// zero outside; `norm` makes the integral exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub shape: Shape,
    pub center: f64,
    pub sigma: f64,
    pub cutoff: f64,
    norm: f64,
}

fn gudermannian(x: f64) -> f64 {
    2.0 * (x / 2.0).tanh().atan()
}

impl Envelope {
    pub fn new(shape: Shape, center: f64, sigma: f64, cutoff: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("envelope bandwidth {sigma} must be positive")));
        }
        if !(cutoff * sigma >= 3.0) {
            return Err(Error::Domain(format!(
                "envelope cutoff {:.3}/σ is shorter than 3/σ",
                cutoff * sigma
            )));
        }
        let x = sigma * cutoff;
        let area = match shape {
            Shape::Gaussian => (2.0 * std::f64::consts::PI).sqrt() / sigma * libm::erf(x / 2f64.sqrt()),
            Shape::Sech => 2.0 * gudermannian(x) / sigma,
        };
        Ok(Envelope {
            shape,
            center,
            sigma,
            cutoff,
            norm: 1.0 / area,
        })
    }

    pub fn gaussian(center: f64, sigma: f64) -> Result<Self> {
        Envelope::new(Shape::Gaussian, center, sigma, GAUSSIAN_CUTOFF / sigma)
    }

    pub fn sech(center: f64, sigma: f64) -> Result<Self> {
        Envelope::new(Shape::Sech, center, sigma, SECH_CUTOFF / sigma)
    }

    pub fn start(&self) -> f64 {
        self.center - self.cutoff
    }

    pub fn end(&self) -> f64 {
        self.center + self.cutoff
    }

    pub fn value(&self, t: f64) -> f64 {
        let x = t - self.center;
        if x.abs() > self.cutoff {
            return 0.0;
        }
        let s = self.sigma * x;
        self.norm
            * match self.shape {
                Shape::Gaussian => (-0.5 * s * s).exp(),
                Shape::Sech => 1.0 / s.cosh(),
            }
    }

    pub fn peak(&self) -> f64 {
        self.norm
    }

    /// Integral from the start of the support to `t`.
    pub fn integral_to(&self, t: f64) -> f64 {
        let t = t.clamp(self.start(), self.end());
        let (a, b) = (self.sigma * -self.cutoff, self.sigma * (t - self.center));
        let raw = match self.shape {
            Shape::Gaussian => {
                let k = (std::f64::consts::PI / 2.0).sqrt() / self.sigma;
                k * (libm::erf(b / 2f64.sqrt()) - libm::erf(a / 2f64.sqrt()))
            }
            Shape::Sech => (gudermannian(b) - gudermannian(a)) / self.sigma,
        };
        self.norm * raw
    }
}
