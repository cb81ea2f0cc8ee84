//! Closed real intervals with infinite endpoints standing in for "unbounded".

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Relative outward widening applied after every arithmetic step so that
/// floating-point evaluation in a different order stays inside the enclosure.
const WIDEN_REL: f64 = 1e-12;
const WIDEN_ABS: f64 = 1e-300;

impl Interval {
    pub const TOP: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Sum; opposite infinities give the unbounded endpoint.
    pub fn add(self, o: Interval) -> Interval {
        let lo = self.lo + o.lo;
        let hi = self.hi + o.hi;
        Interval {
            lo: if lo.is_nan() { f64::NEG_INFINITY } else { lo },
            hi: if hi.is_nan() { f64::INFINITY } else { hi },
        }
    }

    /// Product with a scalar; `0 · ∞` is taken as 0.
    pub fn scale(self, c: f64) -> Interval {
        if c == 0.0 {
            return Interval::point(0.0);
        }
        let (a, b) = (self.lo * c, self.hi * c);
        if c > 0.0 {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    /// Interval product, with `0 · ∞` taken as 0.
    pub fn mul(self, o: Interval) -> Interval {
        let m = |x: f64, y: f64| if x == 0.0 || y == 0.0 { 0.0 } else { x * y };
        let c = [m(self.lo, o.lo), m(self.lo, o.hi), m(self.hi, o.lo), m(self.hi, o.hi)];
        Interval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn hull(self, o: Interval) -> Interval {
        Interval {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    pub fn intersect(self, o: Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn is_subset_of(&self, o: &Interval) -> bool {
        o.lo <= self.lo && self.hi <= o.hi
    }

    /// Widen outward by a tiny relative margin.
    pub fn widen(self) -> Interval {
        self.widen_by(self.lo.abs(), self.hi.abs())
    }

    /// Widen outward in proportion to the magnitudes of the terms that were
    /// summed into each endpoint, which bounds the rounding error of any
    /// evaluation order even under cancellation.
    fn widen_by(self, mag_lo: f64, mag_hi: f64) -> Interval {
        let w = |m: f64| m * WIDEN_REL + WIDEN_ABS;
        Interval {
            lo: if self.lo.is_finite() {
                self.lo - w(mag_lo)
            } else {
                self.lo
            },
            hi: if self.hi.is_finite() {
                self.hi + w(mag_hi)
            } else {
                self.hi
            },
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Per-coordinate interval box.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox(pub Vec<Interval>);

impl IntervalBox {
    pub fn top(dim: usize) -> Self {
        IntervalBox(vec![Interval::TOP; dim])
    }

    pub fn uniform(dim: usize, iv: Interval) -> Self {
        IntervalBox(vec![iv; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Interval::is_finite)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len() && self.0.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    /// Coordinate-wise sum, widened for the rounding of the addition.
    pub fn add(&self, o: &IntervalBox) -> IntervalBox {
        IntervalBox(
            self.0
                .iter()
                .zip(&o.0)
                .map(|(a, b)| a.add(*b).widen_by(a.lo.abs() + b.lo.abs(), a.hi.abs() + b.hi.abs()))
                .collect(),
        )
    }

    pub fn widen(&self) -> IntervalBox {
        IntervalBox(self.0.iter().map(|iv| iv.widen()).collect())
    }

    /// Image of the box under `x ↦ W x + b` with row-major `W`, using the
    /// exact per-coordinate affine rule (each term `W_ij · x_j` is an interval).
    pub fn affine(&self, weights: &[f64], bias: &[f64]) -> IntervalBox {
        let cols = self.dim();
        IntervalBox(
            bias.iter()
                .enumerate()
                .map(|(i, &b)| {
                    let mut acc = Interval::point(b);
                    let (mut mag_lo, mut mag_hi) = (b.abs(), b.abs());
                    for (&w, x) in weights[i * cols..(i + 1) * cols].iter().zip(&self.0) {
                        let t = x.scale(w);
                        mag_lo += t.lo.abs();
                        mag_hi += t.hi.abs();
                        acc = acc.add(t);
                    }
                    acc.widen_by(mag_lo, mag_hi)
                })
                .collect(),
        )
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_monotone_example() {
        let x = IntervalBox(vec![Interval::new(0.0, 1.0)]);
        let y = x.affine(&[2.0], &[1.0]);
        assert!((y.0[0].lo - 1.0).abs() < 1e-9 && (y.0[0].hi - 3.0).abs() < 1e-9);
        assert!(y.0[0].lo <= 1.0 && y.0[0].hi >= 3.0);
    }

    #[test]
    fn zero_weight_kills_infinity() {
        let x = IntervalBox::top(2);
        let y = x.affine(&[0.0, 0.0], &[4.0]);
        assert!(y.is_finite());
        assert!(y.0[0].contains(4.0));
    }

    #[test]
    fn unbounded_propagates() {
        let x = IntervalBox(vec![Interval::TOP, Interval::new(0.0, 1.0)]);
        let y = x.affine(&[0.5, 1.0], &[0.0]);
        assert!(!y.is_finite());
    }

    #[test]
    fn cancellation_is_covered() {
        // 1e6 − 1e6·(1 − 1e-15) evaluated in f64 differs from the exact value
        // by far more than a margin relative to the tiny result
        let x = IntervalBox(vec![Interval::point(1.0 - 1e-15)]);
        let y = x.affine(&[-1e6], &[1e6]).0[0];
        let computed = 1e6 + (-1e6) * (1.0 - 1e-15);
        let exact = 1e-9;
        assert!(y.contains(computed) && y.contains(exact), "{y}");
    }

    #[test]
    fn opposite_infinities() {
        let a = Interval::new(f64::INFINITY, f64::INFINITY);
        let b = Interval::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        assert_eq!(a.add(b), Interval::TOP);
    }

    #[test]
    fn products() {
        let a = Interval::new(0.0, 1.0);
        let b = Interval::new(-1.0, 1.0);
        assert_eq!(a.mul(b), Interval::new(-1.0, 1.0));
        assert_eq!(a.mul(Interval::TOP), Interval::TOP);
        assert_eq!(Interval::point(0.0).mul(Interval::TOP), Interval::point(0.0));
    }
}
