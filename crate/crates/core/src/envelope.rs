//! Pair sampling and log-norm envelopes for exponential bound fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::ls_slope;

/// Seed used for reproducible pair sampling.
pub const PAIR_SEED: u64 = 0x5EED;
/// Grids up to this many points are checked on every pair.
pub const ALL_PAIRS_LIMIT: usize = 2000;
/// Number of random pairs used above [`ALL_PAIRS_LIMIT`].
pub const RANDOM_PAIRS: usize = 1_000_000;

/// Which grid index pairs an envelope fit or a verification visits.
#[derive(Debug, Clone)]
pub enum PairPlan {
    /// Every pair `(i, j)` with `0 <= i, j < len`.
    All(usize),
    /// Unordered random pairs, stored as `(larger, smaller)`.
    Sampled(Vec<(usize, usize)>),
}

impl PairPlan {
    pub fn for_len(len: usize) -> Self {
        if len <= ALL_PAIRS_LIMIT {
            PairPlan::All(len)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
            let pairs = (0..RANDOM_PAIRS)
                .map(|_| {
                    let a = rng.random_range(0..len);
                    let b = rng.random_range(0..len);
                    (a.max(b), a.min(b))
                })
                .collect();
            PairPlan::Sampled(pairs)
        }
    }

    /// Pairs `(later, earlier)` grouped by the earlier index, so callers can
    /// sweep outward from each anchor. For `All`, every anchor gets the full
    /// range.
    pub fn is_all(&self) -> bool {
        matches!(self, PairPlan::All(_))
    }
}

/// Per-separation maximum of `log ‖M(later, earlier)‖`.
#[derive(Debug, Clone)]
pub struct Envelope {
    h: f64,
    best: Vec<Option<(f64, usize, usize)>>,
}

impl Envelope {
    pub fn new(len: usize, h: f64) -> Self {
        Self { h, best: vec![None; len] }
    }

    /// Records `log_norm` for the pair `(a, b)` at index separation `sep`.
    pub fn record(&mut self, sep: usize, log_norm: f64, a: usize, b: usize) {
        let slot = &mut self.best[sep];
        match slot {
            Some((v, _, _)) if *v >= log_norm => {}
            _ => *slot = Some((log_norm, a, b)),
        }
    }

    pub fn merge(&mut self, other: &Envelope) {
        for (sep, entry) in other.best.iter().enumerate() {
            if let Some((v, a, b)) = *entry {
                self.record(sep, v, a, b);
            }
        }
    }

    fn points(&self, min_sep: f64) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (j, entry) in self.best.iter().enumerate() {
            if let Some((v, _, _)) = entry {
                let d = j as f64 * self.h;
                if j > 0 && d >= min_sep && v.is_finite() {
                    xs.push(d);
                    ys.push(*v);
                }
            }
        }
        (xs, ys)
    }

    /// Least-squares slope of the envelope over separations `>= 1`, or over
    /// all positive separations when the window is shorter than that.
    pub fn slope(&self) -> Option<f64> {
        let (xs, ys) = self.points(1.0);
        if xs.len() >= 2 {
            return ls_slope(&xs, &ys);
        }
        let (xs, ys) = self.points(0.0);
        ls_slope(&xs, &ys)
    }

    /// `max_j exp(E_j − rate·d_j)` and the pair attaining it.
    pub fn amplitude(&self, rate: f64) -> Option<(f64, (usize, usize))> {
        let mut out: Option<(f64, (usize, usize))> = None;
        for (j, entry) in self.best.iter().enumerate() {
            if let Some((v, a, b)) = *entry {
                if !v.is_finite() {
                    continue;
                }
                let val = v - rate * (j as f64 * self.h);
                if out.map_or(true, |(cur, _)| val > cur) {
                    out = Some((val, (a, b)));
                }
            }
        }
        out.map(|(v, p)| (v.exp(), p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_of_pure_exponential() {
        let h = 0.1;
        let mut env = Envelope::new(50, h);
        for j in 0..50 {
            env.record(j, -2.0 * j as f64 * h + 0.3, j, 0);
        }
        let slope = env.slope().unwrap();
        assert!((slope + 2.0).abs() < 1e-12);
        let (amp, pair) = env.amplitude(slope).unwrap();
        assert!((amp - 0.3f64.exp()).abs() < 1e-12);
        assert!(pair.0 < 50);
    }

    #[test]
    fn record_keeps_maximum() {
        let mut env = Envelope::new(3, 1.0);
        env.record(1, 0.5, 1, 0);
        env.record(1, 0.2, 2, 1);
        env.record(1, 0.9, 2, 1);
        assert_eq!(env.best[1], Some((0.9, 2, 1)));
    }

    #[test]
    fn sampled_plan_is_reproducible() {
        let a = PairPlan::for_len(5000);
        let b = PairPlan::for_len(5000);
        match (a, b) {
            (PairPlan::Sampled(x), PairPlan::Sampled(y)) => {
                assert_eq!(x.len(), RANDOM_PAIRS);
                assert_eq!(x[..100], y[..100]);
                assert!(x.iter().all(|(l, e)| l >= e));
            }
            _ => panic!("expected sampling"),
        }
        assert!(PairPlan::for_len(2000).is_all());
    }
}
