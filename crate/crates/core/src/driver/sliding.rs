//! Sampled checks that a map is a sliding deformation in a ball.

use crate::complex::BoundarySpec;
use crate::dyadic::{euclid, EPS_GEOM};
use crate::error::{Error, Result};
use crate::measure::SampledSet;
use serde::Serialize;

/// The boundary set `Γ`.
#[derive(Debug, Clone)]
pub enum Gamma {
    Faces(BoundarySpec),
    Anchors(Vec<Vec<f64>>),
}

impl Gamma {
    pub fn dist(&self, x: &[f64]) -> f64 {
        match self {
            Gamma::Faces(b) => b.dist(x),
            Gamma::Anchors(a) => a.iter().map(|p| euclid(p, x)).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlidingCheck {
    pub pass: bool,
    /// Worst value seen (margin, distance or ratio, per check).
    pub value: f64,
    pub witness: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlidingReport {
    /// Moved samples lie compactly inside the ball; value is the margin.
    pub moved_inside: SlidingCheck,
    /// `Γ`-samples stay on `Γ`; value is the largest distance.
    pub gamma_preserved: SlidingCheck,
    /// Samples in the ball stay in the ball; value is the largest `|f(x) − c| − r`.
    pub ball_preserved: SlidingCheck,
    /// `d(f(x), Γ) ≤ C d(x, Γ)`; value is the largest ratio.
    pub gamma_lipschitz: SlidingCheck,
}

impl SlidingReport {
    pub fn pass(&self) -> bool {
        self.moved_inside.pass && self.gamma_preserved.pass && self.ball_preserved.pass && self.gamma_lipschitz.pass
    }
}

pub fn sliding_validate(
    e: &SampledSet,
    images: &[Vec<f64>],
    gamma: &Gamma,
    center: &[f64],
    radius: f64,
    c_bound: f64,
) -> Result<SlidingReport> {
    if images.len() != e.len() {
        return Err(Error::DimensionMismatch { expected: e.len(), got: images.len() });
    }
    let mut a = SlidingCheck { pass: true, value: radius, witness: None };
    let mut b = SlidingCheck { pass: true, value: 0.0, witness: None };
    let mut c = SlidingCheck { pass: true, value: f64::NEG_INFINITY, witness: None };
    let mut d = SlidingCheck { pass: true, value: 0.0, witness: None };
    for (i, (x, fx)) in e.points.iter().zip(images).enumerate() {
        let r = euclid(x, center);
        if euclid(x, fx) > EPS_GEOM {
            let margin = radius - r;
            if margin < a.value {
                a.value = margin;
                a.witness = Some(i);
            }
        }
        let gx = gamma.dist(x);
        let gfx = gamma.dist(fx);
        if gx <= EPS_GEOM && gfx > b.value {
            b.value = gfx;
            b.witness = Some(i);
        }
        if r < radius {
            let over = euclid(fx, center) - radius;
            if over > c.value {
                c.value = over;
                c.witness = Some(i);
            }
        }
        let ratio = if gx > EPS_GEOM {
            gfx / gx
        } else if gfx <= EPS_GEOM {
            if gx > 0.0 {
                gfx / gx
            } else {
                1.0
            }
        } else {
            f64::INFINITY
        };
        if ratio > d.value {
            d.value = ratio;
            d.witness = Some(i);
        }
    }
    a.pass = a.value > EPS_GEOM;
    b.pass = b.value <= EPS_GEOM;
    c.pass = c.value < 0.0;
    d.pass = d.value <= c_bound;
    Ok(SlidingReport { moved_inside: a, gamma_preserved: b, ball_preserved: c, gamma_lipschitz: d })
}
