//! The `q(k)` refinement schedule, built and checked in exact arithmetic.

use crate::error::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{FromPrimitive, One, Signed, Zero};
use serde::Serialize;

pub const MAX_SCHEDULE_LEN: usize = 60;

fn half() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2))
}

fn pow2_neg(q: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << q as usize)
}

fn check_mu(mu: &BigRational) -> Result<()> {
    if !(mu.is_positive() && *mu < BigRational::one()) {
        return Err(Error::InvalidInput(format!("mu must lie in (0,1), got {mu}")));
    }
    Ok(())
}

/// Exact rational value of a double.
pub fn rational_of(x: f64) -> Result<BigRational> {
    BigRational::from_f64(x).ok_or_else(|| Error::InvalidInput(format!("{x} is not finite")))
}

/// `q(k)`: the least `q ≥ 0` with `2^{-q} ≤ (1−μ)(½ − Σ_{i<k} 2^{-q(i)})`.
pub fn q_schedule_exact(mu: &BigRational, count: usize) -> Result<Vec<u32>> {
    check_mu(mu)?;
    if count > MAX_SCHEDULE_LEN {
        return Err(Error::InvalidInput(format!("count {count} exceeds {MAX_SCHEDULE_LEN}")));
    }
    let one_minus = BigRational::one() - mu;
    let mut rem = half();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let bound = &one_minus * &rem;
        let mut q = 0u32;
        while pow2_neg(q) > bound {
            q += 1;
        }
        rem -= pow2_neg(q);
        out.push(q);
    }
    Ok(out)
}

/// [`q_schedule_exact`] at the exact binary value of `mu`.
pub fn q_schedule(mu: f64, count: usize) -> Result<Vec<u32>> {
    q_schedule_exact(&rational_of(mu)?, count)
}

/// Exact verification of the schedule's properties.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleCheck {
    /// `q(k) ≥ 2` for all `k`.
    pub at_least_two: bool,
    pub non_decreasing: bool,
    pub strictly_increasing: bool,
    /// `½ − Σ_{i<k} 2^{-q(i)} ≥ ½ μ^k`.
    pub lower_remainder: bool,
    /// `2^{-q(k)} ≥ ¼ (1−μ) μ^k`.
    pub term_lower: bool,
    /// `½(1−μ) < 2^{-q(k)} / (½ − Σ_{i<k} 2^{-q(i)}) ≤ 1−μ`.
    pub sandwich: bool,
    /// `½ − Σ_{i≤k} 2^{-q(i)} ≤ ½ ((1+μ)/2)^{k+1}`, which forces `Σ = ½`.
    pub geometric_certificate: bool,
    /// `½ − Σ_{i<count} 2^{-q(i)}` as a double.
    pub remainder: f64,
}

impl ScheduleCheck {
    pub fn all_hold(&self) -> bool {
        self.at_least_two
            && self.non_decreasing
            && self.lower_remainder
            && self.term_lower
            && self.sandwich
            && self.geometric_certificate
    }
}

pub fn verify_schedule(mu: &BigRational, q: &[u32]) -> Result<ScheduleCheck> {
    check_mu(mu)?;
    let one = BigRational::one();
    let quarter = BigRational::new(BigInt::one(), BigInt::from(4));
    let rho = (&one + mu) / BigRational::from_integer(BigInt::from(2));
    let mut rem = half();
    let mut mu_k = one.clone();
    let mut rho_k1 = rho.clone();
    let mut c = ScheduleCheck {
        at_least_two: q.iter().all(|&x| x >= 2),
        non_decreasing: q.windows(2).all(|w| w[0] <= w[1]),
        strictly_increasing: q.windows(2).all(|w| w[0] < w[1]),
        lower_remainder: true,
        term_lower: true,
        sandwich: true,
        geometric_certificate: true,
        remainder: 0.0,
    };
    for &qk in q {
        let t = pow2_neg(qk);
        if rem < &half() * &mu_k {
            c.lower_remainder = false;
        }
        if t < &quarter * (&one - mu) * &mu_k {
            c.term_lower = false;
        }
        if rem.is_zero() {
            c.sandwich = false;
        } else {
            let ratio = &t / &rem;
            if !(ratio > &half() * (&one - mu) && ratio <= &one - mu) {
                c.sandwich = false;
            }
        }
        rem -= t;
        if rem.is_negative() || rem > &half() * &rho_k1 {
            c.geometric_certificate = false;
        }
        mu_k *= mu;
        rho_k1 *= &rho;
    }
    c.remainder = num::ToPrimitive::to_f64(&rem).unwrap_or(f64::NAN);
    Ok(c)
}
