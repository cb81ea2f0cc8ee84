//! Unbounded sequences and their sliding-window supervision pairs.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::DatasetError;
use crate::interval::Interval;

pub const DEFAULT_LOOKBACK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceKind {
    Line,
    Trend { slope: f64, noise_sd: f64 },
    RandomWalk { step: f64 },
}

impl SequenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SequenceKind::Line => "line",
            SequenceKind::Trend { .. } => "trend",
            SequenceKind::RandomWalk { .. } => "random_walk",
        }
    }
}

/// One supervision pair: `lookback` consecutive values and the value after them.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    /// Time index of the target.
    pub t: usize,
    pub window: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub kind: SequenceKind,
    /// `(t, x_t)` with `t = 0, 1, …`.
    pub points: Vec<(usize, f64)>,
    /// Pairs whose target lies in this range form the training split.
    pub train_range: Interval,
    pub lookback: usize,
    pub seed: u64,
}

/// Values of the middle half of the sequence (indices `n/4 ..= 3n/4`) define
/// the training range; for the 41-point line this is `[-10, 10]`.
fn middle_half_range(values: &[f64]) -> Interval {
    let n = values.len();
    let mid = &values[n / 4..=(3 * n / 4).min(n - 1)];
    let lo = mid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Interval::new(lo, hi)
}

impl SequenceDataset {
    fn from_values(kind: SequenceKind, values: Vec<f64>, lookback: usize, seed: u64) -> Self {
        SequenceDataset {
            kind,
            train_range: middle_half_range(&values),
            points: values.into_iter().enumerate().collect(),
            lookback,
            seed,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, x)| x).collect()
    }

    /// Every window over the full sequence (the test split).
    pub fn pairs(&self) -> Vec<Pair> {
        let xs = self.values();
        (self.lookback..xs.len())
            .map(|t| Pair {
                t,
                window: xs[t - self.lookback..t].to_vec(),
                target: xs[t],
            })
            .collect()
    }

    /// Pairs whose target lies inside `train_range`; the window itself may reach
    /// outside it.
    pub fn train_pairs(&self) -> Vec<Pair> {
        self.pairs()
            .into_iter()
            .filter(|p| self.train_range.contains(p.target))
            .collect()
    }

    pub fn test_pairs(&self) -> Vec<Pair> {
        self.pairs()
    }

    /// `t,x` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x\n");
        for (t, x) in &self.points {
            writeln!(s, "{t},{x}").unwrap();
        }
        s
    }
}

/// The 41-point straight line `x_t = x_{t-1} + 1` from −20 to 20, lookback 10,
/// training targets in `[−10, 10]`.
pub fn generate_line() -> SequenceDataset {
    let values: Vec<f64> = (-20..=20).map(f64::from).collect();
    SequenceDataset::from_values(SequenceKind::Line, values, DEFAULT_LOOKBACK, 0)
}

/// Trend `x_t = a·(t − ⌊(n−1)/2⌋) + noise` or symmetric ±step random walk
/// from 0, deterministic in `seed`.
pub fn generate_unbounded(kind: SequenceKind, n: usize, seed: u64) -> Result<SequenceDataset, DatasetError> {
    if n <= DEFAULT_LOOKBACK {
        return Err(DatasetError::TooShort {
            n,
            lookback: DEFAULT_LOOKBACK,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = match kind {
        SequenceKind::Line => (0..n).map(|t| t as f64 - ((n - 1) / 2) as f64).collect(),
        SequenceKind::Trend { slope, noise_sd } => {
            let noise = Normal::new(0.0, noise_sd.abs()).expect("finite standard deviation");
            let offset = ((n - 1) / 2) as f64;
            (0..n)
                .map(|t| {
                    let e = if noise_sd == 0.0 { 0.0 } else { noise.sample(&mut rng) };
                    slope * (t as f64 - offset) + e
                })
                .collect()
        }
        SequenceKind::RandomWalk { step } => {
            let mut x = 0.0;
            (0..n)
                .map(|_| {
                    let cur = x;
                    x += if rng.random::<bool>() { step } else { -step };
                    cur
                })
                .collect()
        }
    };
    Ok(SequenceDataset::from_values(kind, values, DEFAULT_LOOKBACK, seed))
}
