//! Counter-based random number generation.
//!
//! A draw is a pure function of `(seed, counter)`, so any value in a run can
//! be reproduced from the serialized state alone, and independent substreams
//! (per layer, per purpose) never perturb each other.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

const PHI: u64 = 0x9e37_79b9_7f4a_7c15;
const SPLIT: u64 = 0xa24b_aed4_963e_e407;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seedable counter generator with splittable substreams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    /// Derives an independent substream; the parent state is not advanced.
    pub fn split(&self, label: u64) -> RngState {
        RngState {
            seed: mix(self.seed ^ label.wrapping_mul(SPLIT)),
            counter: 0,
        }
    }

    /// Two-level split, e.g. `(layer index, purpose)`.
    pub fn split2(&self, a: u64, b: u64) -> RngState {
        self.split(a).split(b)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(PHI)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe as a log argument.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` by rejection, bias-free.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }
}

/// Sampling distribution for [`sample`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Dist {
    pub fn gaussian(mean: f64, std: f64) -> Self {
        Dist::Gaussian { mean, std }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Dist::Uniform { lo, hi }
    }
}

/// Fills a tensor of the given shape, advancing `state`.
pub fn sample(dist: Dist, shape: &[usize], state: &mut RngState) -> Result<Tensor> {
    match dist {
        Dist::Gaussian { std, .. } if !(std > 0.0) => {
            return Err(Error::invalid("sample", format!("std = {std}")))
        }
        Dist::Uniform { lo, hi } if !(lo < hi) => {
            return Err(Error::invalid("sample", format!("empty range [{lo}, {hi})")))
        }
        _ => {}
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    match dist {
        Dist::Gaussian { mean, std } => {
            for _ in 0..n {
                data.push(mean + std * state.next_gaussian());
            }
        }
        Dist::Uniform { lo, hi } => {
            for _ in 0..n {
                data.push(state.uniform_in(lo, hi));
            }
        }
    }
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_state_same_stream() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        let ta = sample(Dist::gaussian(0.0, 1.0), &[32, 32], &mut a).unwrap();
        let tb = sample(Dist::gaussian(0.0, 1.0), &[32, 32], &mut b).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
    }

    #[test]
    fn split_streams_are_independent_of_parent_consumption() {
        let base = RngState::new(9);
        let child_before = base.split(3);
        let mut consumed = base;
        consumed.next_u64();
        let child_after = consumed.split(3);
        assert_eq!(child_before, child_after);
        assert_ne!(base.split(3), base.split(4));
    }

    #[test]
    fn uniform_mean_statistics() {
        let mut st = RngState::new(123);
        let t = sample(Dist::uniform(0.0, 1.0), &[1_000_000], &mut st).unwrap();
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!((0.497..=0.503).contains(&mean), "mean {mean}");
    }

    #[test]
    fn gaussian_std_statistics() {
        let mut st = RngState::new(321);
        let t = sample(Dist::gaussian(0.0, 0.5), &[1_000_000], &mut st).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.495..=0.505).contains(&std), "std {std}");
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut st = RngState::new(0);
        assert!(sample(Dist::gaussian(0.0, 0.0), &[2], &mut st).is_err());
        assert!(sample(Dist::uniform(1.0, 1.0), &[2], &mut st).is_err());
    }
}
