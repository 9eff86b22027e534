//! Uniform grids `μZⁿ ∩ B` over half-open boxes, nearest-point quantizers and
//! binary encoding lengths.
//!
//! Boxes are half-open on every axis (`[lower, upper)`), so a grid point on the
//! upper face never belongs to the grid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when turning `bound / μ` into an integer index so that bounds
/// which are exact multiples of `μ` in decimal are not lost to rounding.
const INDEX_SLACK: f64 = 1e-9;

/// Axis-aligned half-open box `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBox(format!("axis {i}: [{lo}, {hi}) has no interior")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v < hi)
    }

    /// Inclusion with the closed upper face, used to admit the end points of
    /// numerically integrated arcs that graze `upper`.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn is_subset_of(&self, other: &Rect) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }

    /// Smallest axis extent, the largest grid step that still covers the box.
    pub fn min_span(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min)
    }

    /// Samples a point uniformly from the box.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "[{lo},{hi}[")?;
        }
        Ok(())
    }
}

/// Nearest point of `μZⁿ`, ties broken toward −∞ on every axis.
pub fn grid_quantize(a: &[f64], mu: f64) -> Vec<f64> {
    quantize_index(a, mu).into_iter().map(|k| k as f64 * mu).collect()
}

/// Integer multi-index of [`grid_quantize`].
pub fn quantize_index(a: &[f64], mu: f64) -> Vec<i64> {
    a.iter().map(|v| (v / mu - 0.5).ceil() as i64).collect()
}

/// `⌈log₂ count⌉`, with a single symbol needing no bits.
pub fn encode_bits(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        u64::BITS - (count - 1).leading_zeros()
    }
}

pub fn min_span(bounds: &Rect) -> f64 {
    bounds.min_span()
}

/// Cardinality of `μZⁿ ∩ bounds`.
pub fn grid_count(bounds: &Rect, mu: f64) -> Result<u64> {
    Ok(Grid::new(bounds.clone(), mu)?.len() as u64)
}

/// The grid `[B]_μ`, with points addressed either by integer multi-index
/// (`point = μ·k`) or by a dense row-major flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    mu: f64,
    bounds: Rect,
    k_lo: Vec<i64>,
    dims: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(bounds: Rect, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("grid step must be positive, got {mu}")));
        }
        let mut k_lo = Vec::with_capacity(bounds.dim());
        let mut dims = Vec::with_capacity(bounds.dim());
        for (lo, hi) in bounds.lower.iter().zip(&bounds.upper) {
            let first = (lo / mu - INDEX_SLACK).ceil() as i64;
            let last = (hi / mu - INDEX_SLACK).ceil() as i64 - 1;
            if last < first {
                return Err(Error::EmptyGrid { mu, bounds: bounds.to_string() });
            }
            k_lo.push(first);
            dims.push((last - first + 1) as usize);
        }
        let len = dims.iter().product();
        Ok(Self { mu, bounds, k_lo, dims, len })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of points along each axis.
    pub fn shape(&self) -> &[usize] {
        &self.dims
    }

    /// Smallest multi-index on each axis.
    pub fn first_index(&self) -> &[i64] {
        &self.k_lo
    }

    pub fn flat_of(&self, multi: &[i64]) -> Option<usize> {
        if multi.len() != self.dim() {
            return None;
        }
        let mut flat = 0usize;
        for ((k, lo), d) in multi.iter().zip(&self.k_lo).zip(&self.dims) {
            let off = k - lo;
            if off < 0 || off as usize >= *d {
                return None;
            }
            flat = flat * d + off as usize;
        }
        Some(flat)
    }

    pub fn multi_of(&self, mut flat: usize) -> Vec<i64> {
        debug_assert!(flat < self.len);
        let mut multi = vec![0i64; self.dim()];
        for i in (0..self.dim()).rev() {
            multi[i] = self.k_lo[i] + (flat % self.dims[i]) as i64;
            flat /= self.dims[i];
        }
        multi
    }

    pub fn point_of_multi(&self, multi: &[i64]) -> Vec<f64> {
        multi.iter().map(|k| *k as f64 * self.mu).collect()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.point_of_multi(&self.multi_of(flat))
    }

    /// Flat index of `[x]_μ`, or `None` when the quantized point falls outside
    /// the grid.
    pub fn quantize(&self, x: &[f64]) -> Option<usize> {
        self.flat_of(&quantize_index(x, self.mu))
    }

    /// Flat indices of all grid points `p` with `‖p − center‖∞ ≤ radius`, in
    /// ascending order.
    pub fn ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        let mut ranges = Vec::with_capacity(self.dim());
        for (i, c) in center.iter().enumerate() {
            let lo = ((c - radius) / self.mu - INDEX_SLACK).ceil() as i64;
            let hi = ((c + radius) / self.mu + INDEX_SLACK).floor() as i64;
            let lo = lo.max(self.k_lo[i]);
            let hi = hi.min(self.k_lo[i] + self.dims[i] as i64 - 1);
            if hi < lo {
                return Vec::new();
            }
            ranges.push((lo, hi));
        }
        let mut out = Vec::new();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let p = self.point_of_multi(&cur);
            if linf(&p, center) <= radius + 1e-12 {
                out.push(self.flat_of(&cur).expect("in range"));
            }
            let mut axis = self.dim();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cur[axis] < ranges[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = ranges[axis].0;
            }
        }
    }

    /// Flat indices of the cells `]kμ − μ/2, kμ + μ/2]` that meet the box
    /// `]lo, hi]`, in ascending order; touching boundaries do not count.
    pub fn cells_meeting(&self, lo: &[f64], hi: &[f64]) -> Vec<usize> {
        let mut ranges = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let a = ((lo[i] / self.mu - 0.5 + INDEX_SLACK).floor() as i64 + 1).max(self.k_lo[i]);
            let b = ((hi[i] / self.mu + 0.5 - INDEX_SLACK).ceil() as i64 - 1).min(self.k_lo[i] + self.dims[i] as i64 - 1);
            if b < a {
                return Vec::new();
            }
            ranges.push((a, b));
        }
        let mut out = Vec::new();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(self.flat_of(&cur).expect("in range"));
            let mut axis = self.dim();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                if cur[axis] < ranges[axis].1 {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = ranges[axis].0;
            }
        }
    }
}

/// Infinity-norm distance.
pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unicycle_x() -> Rect {
        Rect::new(vec![-1.0, -1.0, -PI], vec![1.0, 1.0, PI]).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert!((grid_quantize(&[0.13], 0.1)[0] - 0.1).abs() < 1e-12);
        assert_eq!(grid_quantize(&[0.05], 0.1), vec![0.0]);
        assert_eq!(grid_quantize(&[-0.05], 0.1)[0], -0.1);
        assert_eq!(grid_quantize(&[0.5, -1.5], 0.5), vec![0.5, -1.5]);
    }

    #[test]
    fn counts() {
        assert_eq!(grid_count(&unicycle_x(), 0.02).unwrap(), 3_150_000);
        let u = Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(grid_count(&u, 0.25).unwrap(), 64);
        let unit = Rect::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(grid_count(&unit, 0.5).unwrap(), 2);
        let thin = Rect::new(vec![0.1], vec![0.2]).unwrap();
        assert!(matches!(grid_count(&thin, 0.5), Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn spans_and_bits() {
        assert_eq!(min_span(&unicycle_x()), 2.0);
        assert_eq!(min_span(&Rect::new(vec![0.0], vec![1.0]).unwrap()), 1.0);
        assert_eq!(min_span(&Rect::new(vec![0.0, 0.0], vec![3.0, 1.0]).unwrap()), 1.0);
        assert_eq!(encode_bits(3_150_000), 22);
        assert_eq!(encode_bits(64), 6);
        assert_eq!(encode_bits(65), 7);
        assert_eq!(encode_bits(1), 0);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(Rect::new(vec![1.0], vec![1.0]).is_err());
        assert!(Rect::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn flat_and_multi_agree() {
        let g = Grid::new(unicycle_x(), 0.25).unwrap();
        for flat in [0, 1, 17, g.len() - 1] {
            assert_eq!(g.flat_of(&g.multi_of(flat)), Some(flat));
        }
        assert_eq!(g.flat_of(&[4, 0, 0]), None);
    }

    fn brute_count(b: &Rect, mu: f64) -> u64 {
        // independent enumeration over a generous index window
        let mut per_axis = Vec::new();
        for i in 0..b.dim() {
            let n = (-10_000..10_000)
                .filter(|k| {
                    let p = *k as f64 * mu;
                    p >= b.lower()[i] - 1e-9 && p < b.upper()[i] - 1e-9
                })
                .count() as u64;
            per_axis.push(n);
        }
        per_axis.iter().product()
    }

    proptest! {
        #[test]
        fn quantization_error_is_half_step(a in prop::collection::vec(-50.0f64..50.0, 1..4), mu in 0.01f64..2.0) {
            let q = grid_quantize(&a, mu);
            prop_assert!(linf(&a, &q) <= mu / 2.0 + 1e-9);
        }

        #[test]
        fn covering_for_small_steps(x in 0.0f64..1.0, y in 0.0f64..1.0, frac in 0.05f64..1.0) {
            let b = Rect::new(vec![-0.3, 0.2], vec![0.9, 1.4]).unwrap();
            let mu = frac * b.min_span();
            let g = Grid::new(b.clone(), mu).unwrap();
            let a = [-0.3 + 1.2 * x, 0.2 + 1.2 * y];
            prop_assert!((0..g.len()).any(|f| linf(&g.point(f), &a) <= mu + 1e-12));
        }

        #[test]
        fn count_matches_enumeration(lo in -3.0f64..3.0, w in 0.3f64..3.0, lo2 in -3.0f64..3.0, w2 in 0.3f64..3.0, mu in 0.05f64..0.3) {
            let b = Rect::new(vec![lo, lo2], vec![lo + w, lo2 + w2]).unwrap();
            prop_assert_eq!(grid_count(&b, mu).unwrap(), brute_count(&b, mu));
        }

        #[test]
        fn ball_matches_scan(cx in -1.0f64..1.0, cy in -1.0f64..1.0, r in 0.0f64..0.7) {
            let g = Grid::new(Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), 0.1).unwrap();
            let c = [cx, cy];
            let scan: Vec<usize> = (0..g.len()).filter(|f| linf(&g.point(*f), &c) <= r + 1e-12).collect();
            prop_assert_eq!(g.ball(&c, r), scan);
        }
    }
}
