use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tensor::{Scalar, Tensor};

/// Seeded, serializable random stream.
///
/// The position in the underlying ChaCha stream is exposed through
/// [`Rng::state`] so a training run can be checkpointed and resumed exactly.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Everything needed to rebuild an [`Rng`] at the same position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Self::new(state.seed);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    /// Independent child stream, e.g. one per dataset item.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.random())
    }

    pub fn normal(&mut self) -> Scalar {
        let z: f64 = self.inner.sample(StandardNormal);
        z as Scalar
    }

    pub fn uniform(&mut self) -> Scalar {
        let u: f64 = self.inner.random();
        u as Scalar
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: Scalar, hi: Scalar) -> Scalar {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}

/// Tensor of i.i.d. standard normal entries.
pub fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.normal()).collect();
    Tensor::new(shape, data).expect("positive dims")
}
