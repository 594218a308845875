//! Nested dyadic complexes on growing or shrinking cubes.

use crate::complex::{maximal_cells, Complex};
use crate::dyadic::{Cell, DyadicScalar, MAX_EXP};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Expanding,
    Shrinking,
}

/// Half-widths of the supports: `½ + Σ_{i<k} 2^{-q(i)}` or `1 − Σ_{i<k} 2^{-q(i)}`.
pub fn half_widths(direction: Direction, q: &[u32]) -> Result<Vec<DyadicScalar>> {
    let mut acc = match direction {
        Direction::Expanding => DyadicScalar::new(1, 1),
        Direction::Shrinking => DyadicScalar::ONE,
    };
    let mut out = Vec::with_capacity(q.len());
    for &qk in q {
        if qk > MAX_EXP {
            return Err(Error::Overflow);
        }
        if acc <= DyadicScalar::ZERO {
            return Err(Error::InvalidInput("schedule empties the cube".into()));
        }
        out.push(acc);
        let t = DyadicScalar::pow2_neg(qk as i32);
        acc = match direction {
            Direction::Expanding => acc.checked_add(t)?,
            Direction::Shrinking => acc.checked_sub(t)?,
        };
    }
    Ok(out)
}

fn cube_grid(a: DyadicScalar, n: usize, q: u32) -> Result<Complex> {
    Complex::grid(&vec![-a; n], &vec![a; n], q, true)
}

/// `K_0, K_1, …` for the schedule `q`.
///
/// Expanding: `K_k` holds the maximal cells of the level-`q(i)` grids of
/// the cubes `a_i[−1,1]^n`, `i ≤ k`, boundary faces excluded. Shrinking:
/// `K_k` is the level-`q(k)` grid of `b_k[−1,1]^n`, boundary excluded.
pub fn nested_complexes(direction: Direction, q: &[u32], n: usize) -> Result<Vec<Complex>> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let widths = half_widths(direction, q)?;
    let mut out = Vec::with_capacity(q.len());
    match direction {
        Direction::Expanding => {
            let mut acc = Complex::empty(n);
            for (k, (&qk, &a)) in q.iter().zip(&widths).enumerate() {
                if k > 0 && qk < q[k - 1] {
                    return Err(Error::InvalidInput("expanding schedule must be non-decreasing".into()));
                }
                let g = cube_grid(a, n, qk)?;
                let mut all = acc.clone();
                for c in g.cells() {
                    all.insert(c.clone())?;
                }
                acc = maximal_cells(&all)?;
                out.push(acc.clone());
            }
        }
        Direction::Shrinking => {
            for (&qk, &b) in q.iter().zip(&widths) {
                out.push(cube_grid(b, n, qk)?);
            }
        }
    }
    Ok(out)
}

/// Whether `int(A) ⊆ ]−a,a[^n`.
fn inside_open_cube(c: &Cell, a: DyadicScalar) -> bool {
    (0..c.ambient_dim()).all(|i| {
        if c.is_open_axis(i) {
            c.lo(i) >= -a && c.hi(i) <= a
        } else {
            c.lo(i) > -a && c.lo(i) < a
        }
    })
}

/// Whether `int(A) ∩ ]−a,a[^n = ∅`.
fn outside_open_cube(c: &Cell, a: DyadicScalar) -> bool {
    (0..c.ambient_dim()).any(|i| {
        if c.is_open_axis(i) {
            c.hi(i) <= -a || c.lo(i) >= a
        } else {
            c.lo(i) <= -a || c.lo(i) >= a
        }
    })
}

/// Every cell of `next` lies inside `]−a,a[^n` or misses it, so
/// `|next| ∖ U` is the union of the cells of `next` that miss `U`.
pub fn expanding_step_identity(next: &Complex, a: DyadicScalar) -> bool {
    next.cells().iter().all(|c| inside_open_cube(c, a) || outside_open_cube(c, a))
}
