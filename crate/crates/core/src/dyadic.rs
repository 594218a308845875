//! Exact dyadic numbers, dyadic cells and the domain oracles.
//!
//! Cell combinatorics (containment, interiors, nesting) is done with
//! [`DyadicScalar`] and is exact. Sampled geometry uses `f64`; any `f64`
//! produced from a dyadic with at most 53 significant bits is exact, so
//! float comparisons against cell walls are exact for such values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

/// Default tolerance for float point-versus-cell queries.
pub const EPS_GEOM: f64 = 1e-9;
/// Largest exponent a [`DyadicScalar`] may carry.
pub const MAX_EXP: u32 = 62;

/// `mantissa / 2^exponent`, kept in canonical form (odd mantissa, or zero
/// with exponent zero).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDyadic")]
pub struct DyadicScalar {
    mantissa: i64,
    exponent: u32,
}

#[derive(Deserialize)]
struct RawDyadic {
    mantissa: i64,
    exponent: u32,
}

impl TryFrom<RawDyadic> for DyadicScalar {
    type Error = Error;
    fn try_from(r: RawDyadic) -> Result<DyadicScalar> {
        DyadicScalar::try_new(r.mantissa as i128, r.exponent)
    }
}

impl DyadicScalar {
    pub const ZERO: DyadicScalar = DyadicScalar { mantissa: 0, exponent: 0 };
    pub const ONE: DyadicScalar = DyadicScalar { mantissa: 1, exponent: 0 };

    /// Build and canonicalize. Panics if `exponent > MAX_EXP`.
    pub fn new(mantissa: i64, exponent: u32) -> DyadicScalar {
        Self::try_new(mantissa as i128, exponent).expect("dyadic overflow")
    }

    pub fn try_new(mantissa: i128, exponent: u32) -> Result<DyadicScalar> {
        let (mut m, mut e) = (mantissa, exponent);
        if m == 0 {
            return Ok(Self::ZERO);
        }
        while e > 0 && m % 2 == 0 {
            m /= 2;
            e -= 1;
        }
        if e > MAX_EXP || m > i64::MAX as i128 || m < i64::MIN as i128 {
            return Err(Error::Overflow);
        }
        Ok(DyadicScalar { mantissa: m as i64, exponent: e })
    }

    pub fn from_int(v: i64) -> DyadicScalar {
        Self::new(v, 0)
    }

    /// `2^{-k}`; negative `k` gives `2^{|k|}`.
    pub fn pow2_neg(k: i32) -> DyadicScalar {
        if k >= 0 {
            Self::new(1, k as u32)
        } else {
            Self::new(1i64 << (-k), 0)
        }
    }

    pub fn mantissa(&self) -> i64 {
        self.mantissa
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    /// Exact conversion from `f64`, if the value fits.
    pub fn from_f64_exact(x: f64) -> Option<DyadicScalar> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Self::ZERO);
        }
        // x = m * 2^e with integer m of at most 53 bits.
        let bits = x.to_bits();
        let sign: i128 = if bits >> 63 == 1 { -1 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if raw_exp == 0 { (frac as i128, -1074) } else { ((frac | (1u64 << 52)) as i128, raw_exp - 1075) };
        if e >= 0 {
            if e > 70 {
                return None;
            }
            let v = m.checked_shl(e as u32)?;
            Self::try_new(sign * v, 0).ok()
        } else {
            // canonicalize before checking the exponent bound
            let mut mm = m;
            let mut ee = (-e) as u32;
            while ee > 0 && mm % 2 == 0 {
                mm /= 2;
                ee -= 1;
            }
            Self::try_new(sign * mm, ee).ok()
        }
    }

    /// Nearest dyadic with denominator `2^exp`.
    pub fn round_f64(x: f64, exp: u32) -> Result<DyadicScalar> {
        let scaled = (x * (2f64).powi(exp as i32)).round();
        if !scaled.is_finite() || scaled.abs() >= 9.2e18 {
            return Err(Error::Overflow);
        }
        Self::try_new(scaled as i128, exp)
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 / (2f64).powi(self.exponent as i32)
    }

    /// Mantissa rescaled to exponent `e >= self.exponent`.
    pub fn mantissa_at(&self, e: u32) -> i128 {
        (self.mantissa as i128) << (e - self.exponent)
    }

    /// Multiply by `2^{-k}`.
    pub fn scale_pow2(&self, k: i32) -> Result<DyadicScalar> {
        if k >= 0 {
            Self::try_new(self.mantissa as i128, self.exponent + k as u32)
        } else {
            let s = (-k) as u32;
            if s >= self.exponent {
                let v = (self.mantissa as i128).checked_shl(s - self.exponent).ok_or(Error::Overflow)?;
                Self::try_new(v, 0)
            } else {
                Self::try_new(self.mantissa as i128, self.exponent - s)
            }
        }
    }

    pub fn checked_add(self, o: DyadicScalar) -> Result<DyadicScalar> {
        let e = self.exponent.max(o.exponent);
        Self::try_new(self.mantissa_at(e) + o.mantissa_at(e), e)
    }

    pub fn checked_sub(self, o: DyadicScalar) -> Result<DyadicScalar> {
        self.checked_add(-o)
    }

    /// Whether the value lies on the lattice `2^{-k} Z`.
    pub fn on_lattice(&self, k: i32) -> bool {
        if k >= 0 {
            self.exponent <= k as u32
        } else {
            self.exponent == 0 && self.mantissa % (1i64 << (-k)) == 0
        }
    }

    /// Largest multiple of `2^{-k}` not exceeding the value.
    pub fn floor_to(&self, k: u32) -> DyadicScalar {
        if self.exponent <= k {
            return *self;
        }
        let shift = self.exponent - k;
        let q = (self.mantissa as i128) >> shift; // arithmetic shift floors
        Self::try_new(q, k).expect("floor stays in range")
    }
}

impl PartialOrd for DyadicScalar {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for DyadicScalar {
    fn cmp(&self, o: &Self) -> Ordering {
        let e = self.exponent.max(o.exponent);
        self.mantissa_at(e).cmp(&o.mantissa_at(e))
    }
}

impl Add for DyadicScalar {
    type Output = DyadicScalar;
    fn add(self, o: DyadicScalar) -> DyadicScalar {
        self.checked_add(o).expect("dyadic overflow")
    }
}

impl Sub for DyadicScalar {
    type Output = DyadicScalar;
    fn sub(self, o: DyadicScalar) -> DyadicScalar {
        self.checked_sub(o).expect("dyadic overflow")
    }
}

impl Neg for DyadicScalar {
    type Output = DyadicScalar;
    fn neg(self) -> DyadicScalar {
        DyadicScalar { mantissa: -self.mantissa, exponent: self.exponent }
    }
}

impl fmt::Debug for DyadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 0 {
            write!(f, "{}", self.mantissa)
        } else {
            write!(f, "{}/2^{}", self.mantissa, self.exponent)
        }
    }
}

impl fmt::Display for DyadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Where a point sits relative to a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Outside,
    Interior,
    Boundary,
}

/// A face of a dyadic cube: `Π [a_i, a_i + 2^{-k} s_i]` with `s_i ∈ {0,1}`.
///
/// The anchor is the lowest corner. Cells of the canonical complex that
/// extend in the negative direction are stored with their anchor shifted.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Cell {
    anchor: Vec<DyadicScalar>,
    span: u32,
    scale_exp: u32,
}

impl Cell {
    pub fn new(anchor: Vec<DyadicScalar>, span: u32, scale_exp: u32) -> Result<Cell> {
        let n = anchor.len();
        if n == 0 || n > 31 {
            return Err(Error::InvalidInput(format!("ambient dimension {n} unsupported")));
        }
        if span >> n != 0 {
            return Err(Error::InvalidInput("span has bits beyond ambient dimension".into()));
        }
        if scale_exp > MAX_EXP {
            return Err(Error::Overflow);
        }
        // the far corner must be representable
        let side = DyadicScalar::pow2_neg(scale_exp as i32);
        for a in &anchor {
            a.checked_add(side)?;
        }
        Ok(Cell { anchor, span, scale_exp })
    }

    /// Cell `Π [p_i, p_i + 2^{-k} α_i]` for `α ∈ {-1,0,1}^n`.
    pub fn from_alpha(p: &[DyadicScalar], alpha: &[i8], k: u32) -> Result<Cell> {
        if p.len() != alpha.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), got: alpha.len() });
        }
        let side = DyadicScalar::pow2_neg(k as i32);
        let mut anchor = Vec::with_capacity(p.len());
        let mut span = 0u32;
        for (i, (&pi, &a)) in p.iter().zip(alpha).enumerate() {
            match a {
                0 => anchor.push(pi),
                1 => {
                    anchor.push(pi);
                    span |= 1 << i;
                }
                -1 => {
                    anchor.push(pi.checked_sub(side)?);
                    span |= 1 << i;
                }
                _ => return Err(Error::InvalidInput(format!("alpha entry {a} not in {{-1,0,1}}"))),
            }
        }
        Cell::new(anchor, span, k)
    }

    pub fn anchor(&self) -> &[DyadicScalar] {
        &self.anchor
    }

    pub fn span(&self) -> u32 {
        self.span
    }

    pub fn scale_exp(&self) -> u32 {
        self.scale_exp
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn dim(&self) -> usize {
        self.span.count_ones() as usize
    }

    pub fn is_open_axis(&self, i: usize) -> bool {
        self.span >> i & 1 == 1
    }

    pub fn side(&self) -> DyadicScalar {
        DyadicScalar::pow2_neg(self.scale_exp as i32)
    }

    pub fn side_f64(&self) -> f64 {
        (0.5f64).powi(self.scale_exp as i32)
    }

    pub fn lo(&self, i: usize) -> DyadicScalar {
        self.anchor[i]
    }

    pub fn hi(&self, i: usize) -> DyadicScalar {
        if self.is_open_axis(i) {
            self.anchor[i] + self.side()
        } else {
            self.anchor[i]
        }
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        self.anchor.iter().map(|a| a.to_f64()).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        (0..self.ambient_dim()).map(|i| self.hi(i).to_f64()).collect()
    }

    pub fn center(&self) -> Vec<DyadicScalar> {
        let half = DyadicScalar::pow2_neg(self.scale_exp as i32 + 1);
        (0..self.ambient_dim())
            .map(|i| if self.is_open_axis(i) { self.anchor[i] + half } else { self.anchor[i] })
            .collect()
    }

    pub fn center_f64(&self) -> Vec<f64> {
        self.center().iter().map(|c| c.to_f64()).collect()
    }

    pub fn diam(&self) -> f64 {
        self.side_f64() * (self.dim() as f64).sqrt()
    }

    /// The concentric cell of half the sidelength.
    pub fn half(&self) -> Cell {
        let quarter = DyadicScalar::pow2_neg(self.scale_exp as i32 + 2);
        let anchor = (0..self.ambient_dim())
            .map(|i| if self.is_open_axis(i) { self.anchor[i] + quarter } else { self.anchor[i] })
            .collect();
        Cell { anchor, span: self.span, scale_exp: self.scale_exp + 1 }
    }

    /// Closed containment `other ⊆ self`.
    pub fn contains_cell(&self, other: &Cell) -> bool {
        if self.ambient_dim() != other.ambient_dim() {
            return false;
        }
        (0..self.ambient_dim()).all(|i| self.lo(i) <= other.lo(i) && other.hi(i) <= self.hi(i))
    }

    /// `int(other) ⊆ int(self)`, interiors relative to affine spans.
    pub fn interior_contains_interior(&self, other: &Cell) -> bool {
        if self.ambient_dim() != other.ambient_dim() {
            return false;
        }
        (0..self.ambient_dim()).all(|i| match (self.is_open_axis(i), other.is_open_axis(i)) {
            (true, true) => self.lo(i) <= other.lo(i) && other.hi(i) <= self.hi(i),
            (true, false) => self.lo(i) < other.lo(i) && other.lo(i) < self.hi(i),
            (false, false) => self.lo(i) == other.lo(i),
            (false, true) => false,
        })
    }

    /// `int(self) ∩ int(other) ≠ ∅`.
    pub fn interiors_intersect(&self, other: &Cell) -> bool {
        if self.ambient_dim() != other.ambient_dim() {
            return false;
        }
        (0..self.ambient_dim()).all(|i| match (self.is_open_axis(i), other.is_open_axis(i)) {
            (true, true) => self.lo(i) < other.hi(i) && other.lo(i) < self.hi(i),
            (true, false) => self.lo(i) < other.lo(i) && other.lo(i) < self.hi(i),
            (false, true) => other.lo(i) < self.lo(i) && self.lo(i) < other.hi(i),
            (false, false) => self.lo(i) == other.lo(i),
        })
    }

    /// All faces of the cell, itself included (`3^dim` of them).
    pub fn faces(&self) -> Vec<Cell> {
        let open: Vec<usize> = (0..self.ambient_dim()).filter(|&i| self.is_open_axis(i)).collect();
        let mut out = Vec::with_capacity(3usize.pow(open.len() as u32));
        let total = 3usize.pow(open.len() as u32);
        let side = self.side();
        for code in 0..total {
            let mut c = code;
            let mut anchor = self.anchor.clone();
            let mut span = self.span;
            for &i in &open {
                match c % 3 {
                    0 => {}
                    1 => span &= !(1 << i),
                    _ => {
                        span &= !(1 << i);
                        anchor[i] = anchor[i] + side;
                    }
                }
                c /= 3;
            }
            out.push(Cell { anchor, span, scale_exp: self.scale_exp });
        }
        out
    }

    /// The `2·dim` facets forming the relative boundary.
    pub fn facets(&self) -> Vec<Cell> {
        self.faces().into_iter().filter(|f| f.dim() + 1 == self.dim()).collect()
    }

    /// Classify `x`. With `tol = 0` the test is exact on the given floats.
    pub fn membership(&self, x: &[f64], tol: f64) -> Result<Membership> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), got: x.len() });
        }
        let mut on_wall = false;
        let side = self.side_f64();
        for (i, &xi) in x.iter().enumerate() {
            let lo = self.anchor[i].to_f64();
            if self.is_open_axis(i) {
                let hi = lo + side;
                if xi < lo - tol || xi > hi + tol {
                    return Ok(Membership::Outside);
                }
                if xi <= lo + tol || xi >= hi - tol {
                    on_wall = true;
                }
            } else if (xi - lo).abs() > tol {
                return Ok(Membership::Outside);
            }
        }
        Ok(if on_wall { Membership::Boundary } else { Membership::Interior })
    }

    /// Exact classification of a dyadic point.
    pub fn membership_exact(&self, x: &[DyadicScalar]) -> Result<Membership> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), got: x.len() });
        }
        let mut on_wall = false;
        for (i, xi) in x.iter().enumerate() {
            let lo = self.lo(i);
            if self.is_open_axis(i) {
                let hi = self.hi(i);
                if *xi < lo || *xi > hi {
                    return Ok(Membership::Outside);
                }
                if *xi == lo || *xi == hi {
                    on_wall = true;
                }
            } else if *xi != lo {
                return Ok(Membership::Outside);
            }
        }
        Ok(if on_wall { Membership::Boundary } else { Membership::Interior })
    }

    /// Euclidean distance from `x` to the closed cell.
    pub fn dist(&self, x: &[f64]) -> f64 {
        let side = self.side_f64();
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let lo = self.anchor[i].to_f64();
            let hi = if self.is_open_axis(i) { lo + side } else { lo };
            let c = xi.clamp(lo, hi);
            s += (xi - c) * (xi - c);
        }
        s.sqrt()
    }

    /// Euclidean distance from `x` to the relative boundary.
    pub fn dist_to_boundary(&self, x: &[f64]) -> Result<f64> {
        if self.dim() == 0 {
            return Err(Error::ZeroDimCell);
        }
        Ok(self.facets().iter().map(|f| f.dist(x)).fold(f64::INFINITY, f64::min))
    }

    pub fn to_json(&self) -> CellJson {
        let e = self.anchor.iter().map(|a| a.exponent()).max().unwrap_or(0);
        CellJson {
            anchor_num: self.anchor.iter().map(|a| a.mantissa_at(e) as i64).collect(),
            anchor_exp: e,
            span_mask: self.span,
            scale_exp: self.scale_exp,
        }
    }

    pub fn from_json(j: &CellJson) -> Result<Cell> {
        let anchor =
            j.anchor_num.iter().map(|&m| DyadicScalar::try_new(m as i128, j.anchor_exp)).collect::<Result<Vec<_>>>()?;
        Cell::new(anchor, j.span_mask, j.scale_exp)
    }
}

impl fmt::Debug for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cell[")?;
        let side = self.side();
        for i in 0..self.ambient_dim() {
            if i > 0 {
                write!(f, "x")?;
            }
            if self.is_open_axis(i) {
                write!(f, "[{},{}]", self.anchor[i], self.anchor[i] + side)?;
            } else {
                write!(f, "{{{}}}", self.anchor[i])?;
            }
        }
        write!(f, "]")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Wire format of a cell: anchor numerators over a common `2^anchor_exp`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellJson {
    pub anchor_num: Vec<i64>,
    pub anchor_exp: u32,
    pub span_mask: u32,
    pub scale_exp: u32,
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Cell, D::Error> {
        let j = CellJson::deserialize(d)?;
        Cell::from_json(&j).map_err(serde::de::Error::custom)
    }
}

/// The open set `X` the problem lives in.
pub trait DomainOracle: Send + Sync {
    fn dim(&self) -> usize;
    /// Euclidean `d(x, X^c)`; infinite for the whole space.
    fn dist_to_complement(&self, x: &[f64]) -> f64;
    /// Sup-norm `d_∞(x, X^c)`.
    fn dist_inf_to_complement(&self, x: &[f64]) -> f64;
    /// Whether the closed box `[lo, hi]` lies inside `X`.
    fn contains_closed_box(&self, lo: &[f64], hi: &[f64]) -> bool;
    /// A box containing `X` (for unbounded `X`, a truncation window).
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);

    fn contains(&self, x: &[f64]) -> bool {
        self.dist_to_complement(x) > 0.0
    }
}

/// `R^n`, with a window used only for enumeration.
#[derive(Debug, Clone)]
pub struct FullSpace {
    pub window_lo: Vec<f64>,
    pub window_hi: Vec<f64>,
}

impl DomainOracle for FullSpace {
    fn dim(&self) -> usize {
        self.window_lo.len()
    }
    fn dist_to_complement(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn dist_inf_to_complement(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn contains_closed_box(&self, _lo: &[f64], _hi: &[f64]) -> bool {
        true
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.window_lo.clone(), self.window_hi.clone())
    }
}

/// Open box `]lo, hi[`.
#[derive(Debug, Clone)]
pub struct OpenBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OpenBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<OpenBox> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("box must have lo < hi".into()));
        }
        Ok(OpenBox { lo, hi })
    }

    fn margin(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..x.len() {
            m = m.min(x[i] - self.lo[i]).min(self.hi[i] - x[i]);
        }
        m.max(0.0)
    }
}

impl DomainOracle for OpenBox {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    // inside a box the nearest complement point is across the nearest face
    fn dist_to_complement(&self, x: &[f64]) -> f64 {
        self.margin(x)
    }
    fn dist_inf_to_complement(&self, x: &[f64]) -> f64 {
        self.margin(x)
    }
    fn contains_closed_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        (0..self.lo.len()).all(|i| self.lo[i] < lo[i] && hi[i] < self.hi[i])
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
}

/// Open box with finitely many points removed.
#[derive(Debug, Clone)]
pub struct PuncturedBox {
    pub bx: OpenBox,
    pub holes: Vec<Vec<f64>>,
}

impl DomainOracle for PuncturedBox {
    fn dim(&self) -> usize {
        self.bx.dim()
    }
    fn dist_to_complement(&self, x: &[f64]) -> f64 {
        let mut d = self.bx.dist_to_complement(x);
        for h in &self.holes {
            d = d.min(euclid(x, h));
        }
        d
    }
    fn dist_inf_to_complement(&self, x: &[f64]) -> f64 {
        let mut d = self.bx.dist_inf_to_complement(x);
        for h in &self.holes {
            let di = x.iter().zip(h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            d = d.min(di);
        }
        d
    }
    fn contains_closed_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        self.bx.contains_closed_box(lo, hi)
            && !self.holes.iter().any(|h| (0..h.len()).all(|i| lo[i] <= h[i] && h[i] <= hi[i]))
    }
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.bx.bounding_box()
    }
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scale function `r_s(x) = min{ s/(1+s) d(x, X^c), s }`.
///
/// `s = ∞` gives `d(x, X^c)`; `X = R^n` gives `s`.
pub fn scale_radius(x: &[f64], s: f64, domain: &dyn DomainOracle) -> Result<f64> {
    if x.len() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: x.len() });
    }
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {s}")));
    }
    let d = domain.dist_to_complement(x);
    if s.is_infinite() {
        return Ok(d);
    }
    if d.is_infinite() {
        return Ok(s);
    }
    Ok((s / (1.0 + s) * d).min(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dy(m: i64, e: u32) -> DyadicScalar {
        DyadicScalar::new(m, e)
    }

    fn seg() -> Cell {
        // [0,1] x {0}
        Cell::new(vec![dy(0, 0), dy(0, 0)], 0b01, 0).unwrap()
    }

    #[test]
    fn canonical_form() {
        assert_eq!(dy(4, 3), dy(1, 1));
        assert_eq!(dy(0, 5), DyadicScalar::ZERO);
        assert_eq!(dy(6, 1).mantissa(), 3);
        assert!(dy(1, 1) < dy(3, 2));
        assert_eq!(dy(1, 1) + dy(1, 2), dy(3, 2));
        assert_eq!(dy(1, 1) - dy(1, 1), DyadicScalar::ZERO);
    }

    #[test]
    fn f64_round_trip() {
        for &x in &[0.5, -0.375, 3.0, 1.0 / 1024.0, 0.1, -7.25e-3] {
            let d = DyadicScalar::from_f64_exact(x).unwrap();
            assert_eq!(d.to_f64(), x);
        }
        assert!(DyadicScalar::from_f64_exact(f64::NAN).is_none());
        assert!(DyadicScalar::from_f64_exact(1e-300).is_none());
    }

    #[test]
    fn floor_and_lattice() {
        assert_eq!(dy(7, 3).floor_to(1), dy(1, 1));
        assert_eq!(dy(-1, 3).floor_to(0), dy(-1, 0));
        assert!(dy(3, 2).on_lattice(2));
        assert!(!dy(3, 2).on_lattice(1));
        assert!(dy(4, 0).on_lattice(-2));
    }

    #[test]
    fn membership_examples() {
        let a = seg();
        assert_eq!(a.membership(&[0.5, 0.0], 0.0).unwrap(), Membership::Interior);
        assert_eq!(a.membership(&[0.0, 0.0], 0.0).unwrap(), Membership::Boundary);
        assert_eq!(a.membership(&[0.5, 0.1], 0.0).unwrap(), Membership::Outside);
        let v = Cell::new(vec![dy(0, 0), dy(0, 0)], 0, 0).unwrap();
        assert_eq!(v.membership(&[0.0, 0.0], 0.0).unwrap(), Membership::Interior);
        assert!(matches!(a.membership(&[0.0], 0.0), Err(Error::DimensionMismatch { .. })));
        assert_eq!(a.membership_exact(&[dy(1, 1), DyadicScalar::ZERO]).unwrap(), Membership::Interior);
    }

    #[test]
    fn dims_and_alpha() {
        assert_eq!(Cell::new(vec![dy(0, 0); 2], 0b00, 0).unwrap().dim(), 0);
        assert_eq!(Cell::new(vec![dy(0, 0); 2], 0b11, 0).unwrap().dim(), 2);
        let c = Cell::from_alpha(&[dy(0, 0), dy(0, 0)], &[-1, 1], 0).unwrap();
        assert_eq!(c.lo(0), dy(-1, 0));
        assert_eq!(c.hi(1), dy(1, 0));
    }

    #[test]
    fn faces_and_nesting() {
        let sq = Cell::new(vec![dy(0, 0); 2], 0b11, 0).unwrap();
        assert_eq!(sq.faces().len(), 9);
        assert_eq!(sq.facets().len(), 4);
        let e = seg();
        assert!(sq.contains_cell(&e));
        assert!(!sq.interior_contains_interior(&e));
        assert!(sq.interior_contains_interior(&sq.half()));
        assert!(!sq.interiors_intersect(&e));
        let shifted = Cell::new(vec![dy(1, 1), dy(0, 0)], 0b11, 0).unwrap();
        assert!(sq.interiors_intersect(&shifted));
        assert_eq!(sq.half().lo(0), dy(1, 2));
        assert_eq!(sq.half().side(), dy(1, 1));
    }

    #[test]
    fn cell_distances() {
        let a = seg();
        assert!((a.dist(&[0.5, 0.1]) - 0.1).abs() < 1e-15);
        let db = a.dist_to_boundary(&[0.5, 0.1]).unwrap();
        assert!((db - (0.26f64).sqrt()).abs() < 1e-15);
        let v = Cell::new(vec![dy(0, 0); 2], 0, 0).unwrap();
        assert!(matches!(v.dist_to_boundary(&[1.0, 0.0]), Err(Error::ZeroDimCell)));
    }

    #[test]
    fn json_round_trip() {
        let c = Cell::new(vec![dy(3, 2), dy(-5, 40)], 0b10, 3).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: Cell = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.to_json().anchor_exp, 40);
    }

    #[test]
    fn scale_radius_examples() {
        let full = FullSpace { window_lo: vec![0.0; 2], window_hi: vec![1.0; 2] };
        assert_eq!(scale_radius(&[0.3, 0.3], 2.0, &full).unwrap(), 2.0);
        let bx = OpenBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        // d(0, X^c) = 1
        assert_eq!(scale_radius(&[0.0, 0.0], 1.0, &bx).unwrap(), 0.5);
        let far = OpenBox::new(vec![-0.7, -5.0], vec![5.0, 5.0]).unwrap();
        assert!((scale_radius(&[0.0, 0.0], f64::INFINITY, &far).unwrap() - 0.7).abs() < 1e-15);
        assert!(scale_radius(&[0.0, 0.0], 0.0, &bx).is_err());
    }

    #[test]
    fn punctured_box() {
        let p = PuncturedBox { bx: OpenBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), holes: vec![vec![0.5, 0.5]] };
        assert!((p.dist_to_complement(&[0.5, 0.6]) - 0.1).abs() < 1e-12);
        assert!(!p.contains_closed_box(&[0.25, 0.25], &[0.5, 0.5]));
        assert!(p.contains_closed_box(&[0.25, 0.25], &[0.375, 0.375]));
    }

    proptest! {
        #[test]
        fn scale_radius_is_one_lipschitz(
            x in proptest::collection::vec(-0.99f64..0.99, 2),
            y in proptest::collection::vec(-0.99f64..0.99, 2),
            s in 0.01f64..50.0,
        ) {
            let bx = PuncturedBox {
                bx: OpenBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
                holes: vec![vec![0.2, -0.3]],
            };
            let rx = scale_radius(&x, s, &bx).unwrap();
            let ry = scale_radius(&y, s, &bx).unwrap();
            prop_assert!((rx - ry).abs() <= euclid(&x, &y) + EPS_GEOM);
        }

        #[test]
        fn membership_partitions(
            x in proptest::collection::vec(-0.5f64..1.5, 2),
            span in 0u32..4,
        ) {
            let c = Cell::new(vec![DyadicScalar::ZERO; 2], span, 0).unwrap();
            let m = c.membership(&x, 0.0).unwrap();
            let closed = c.dist(&x) == 0.0;
            prop_assert_eq!(m != Membership::Outside, closed);
        }

        #[test]
        fn dyadic_round_trip(m in -(1i64 << 52)..(1i64 << 52), e in 0u32..=62) {
            let d = DyadicScalar::new(m, e);
            let back = DyadicScalar::from_f64_exact(d.to_f64()).unwrap();
            prop_assert_eq!(d, back);
            let j = serde_json::to_string(&d).unwrap();
            let d2: DyadicScalar = serde_json::from_str(&j).unwrap();
            prop_assert_eq!(d, d2);
        }
    }
}
