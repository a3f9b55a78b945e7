//! LoRA parameter counting and the `W = W0 + BA` merge.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Models at or below this size get rank 16; larger ones rank 32.
pub const SMALL_MODEL_MAX_PARAMS: u64 = 3_000_000_000;
pub const SMALL_MODEL_RANK: u32 = 16;
pub const LARGE_MODEL_RANK: u32 = 32;
pub const LORA_ALPHA: f64 = 32.0;
pub const LORA_DROPOUT: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum LoraError {
    #[error("layer dimensions must be at least 1")]
    EmptyShape,
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("dimension mismatch: W0 is {w0:?}, B is {b:?}, A is {a:?}")]
    DimensionMismatch { w0: (usize, usize), b: (usize, usize), a: (usize, usize) },
}

/// A `d × k` weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub d: u64,
    pub k: u64,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, d: u64, k: u64) -> Result<Self, LoraError> {
        if d == 0 || k == 0 {
            return Err(LoraError::EmptyShape);
        }
        Ok(Self { name: name.into(), d, k })
    }

    pub fn square(name: impl Into<String>, d: u64) -> Result<Self, LoraError> {
        Self::new(name, d, d)
    }

    pub fn full_params(&self) -> u64 {
        self.d * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraSpec {
    pub rank: u32,
    pub alpha: f64,
    pub dropout: f64,
}

impl LoraSpec {
    pub fn with_rank(rank: u32) -> Self {
        Self { rank, alpha: LORA_ALPHA, dropout: LORA_DROPOUT }
    }

    /// True when the rank is not below `min(d, k)`, i.e. the adapter is not low rank.
    pub fn is_full_rank_for(&self, shape: &LayerShape) -> bool {
        u64::from(self.rank) >= shape.d.min(shape.k)
    }
}

/// Rank 16 up to 3B parameters inclusive, 32 above; alpha 32 and dropout 0.05 throughout.
pub fn rank_for_model(param_count: u64) -> LoraSpec {
    let rank = if param_count <= SMALL_MODEL_MAX_PARAMS { SMALL_MODEL_RANK } else { LARGE_MODEL_RANK };
    LoraSpec::with_rank(rank)
}

/// `r · (d + k)`: the entries of B (d×r) and A (r×k).
pub fn trainable_params(shape: &LayerShape, spec: &LoraSpec) -> u64 {
    u64::from(spec.rank) * (shape.d + shape.k)
}

/// Percentage of the layer's `d·k` parameters that LoRA leaves frozen.
pub fn reduction_ratio<T: Scalar>(shape: &LayerShape, spec: &LoraSpec) -> T {
    let trainable = T::from_count(trainable_params(shape, spec));
    let full = T::from_count(shape.full_params());
    T::lit(100.0) * (T::one() - trainable / full)
}

/// Inputs to the merge: frozen `W0` (d×k), `B` (d×r) and `A` (r×k).
#[derive(Debug, Clone, PartialEq)]
pub struct MergeInput<T> {
    pub base: Array2<T>,
    pub b: Array2<T>,
    pub a: Array2<T>,
}

impl<T: Scalar> MergeInput<T> {
    pub fn new(base: Array2<T>, b: Array2<T>, a: Array2<T>) -> Result<Self, LoraError> {
        let input = Self { base, b, a };
        input.check()?;
        Ok(input)
    }

    pub fn rank(&self) -> usize {
        self.b.ncols()
    }

    /// Warning text when `r` is not much smaller than `min(d, k)`.
    pub fn rank_warning(&self) -> Option<String> {
        let (d, k) = self.base.dim();
        let r = self.rank();
        (r >= d.min(k)).then(|| format!("rank {r} is not below min(d, k) = {}; the update is full rank", d.min(k)))
    }

    fn check(&self) -> Result<(), LoraError> {
        let (w0, b, a) = (self.base.dim(), self.b.dim(), self.a.dim());
        if b.0 != w0.0 || a.1 != w0.1 || b.1 != a.0 {
            return Err(LoraError::DimensionMismatch { w0, b, a });
        }
        if b.1 == 0 {
            return Err(LoraError::ZeroRank);
        }
        Ok(())
    }
}

/// `W = W0 + B·A`, literally; inputs are not modified.
pub fn merge_weights<T: Scalar>(input: &MergeInput<T>) -> Result<Array2<T>, LoraError> {
    input.check()?;
    Ok(&input.base + &input.b.dot(&input.a))
}

/// `W = W0 + (α/r)·B·A`, the conventionally scaled variant.
pub fn merge_weights_scaled<T: Scalar>(input: &MergeInput<T>, alpha: T) -> Result<Array2<T>, LoraError> {
    input.check()?;
    let scale = alpha / T::from_count(input.rank() as u64);
    Ok(&input.base + &input.b.dot(&input.a).mapv(|x| x * scale))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use super::*;

    #[test]
    fn param_counts() {
        let shape = LayerShape::square("q_proj", 4096).unwrap();
        assert_eq!(trainable_params(&shape, &LoraSpec::with_rank(16)), 131_072);
        assert_eq!(trainable_params(&shape, &LoraSpec::with_rank(32)), 262_144);
        let full = LoraSpec::with_rank(4096);
        assert_eq!(trainable_params(&shape, &full), 4096 * 2 * 4096);
        assert!(full.is_full_rank_for(&shape));
        assert!(!LoraSpec::with_rank(16).is_full_rank_for(&shape));
    }

    #[test]
    fn reduction_ratios() {
        let shape = LayerShape::square("q_proj", 4096).unwrap();
        let r16: f64 = reduction_ratio(&shape, &LoraSpec::with_rank(16));
        let r32: f64 = reduction_ratio(&shape, &LoraSpec::with_rank(32));
        assert_abs_diff_eq!(r16, 100.0 * (1.0 - 131_072.0 / 16_777_216.0), epsilon = 1e-12);
        let round3 = |x: f64| (x * 1000.0).round() / 1000.0;
        assert_eq!(round3(r16), 99.219);
        assert_eq!(round3(r32), 98.438);
        // rank zero is the hypothetical limit: nothing trainable
        let r0: f64 = reduction_ratio(&shape, &LoraSpec::with_rank(0));
        assert_eq!(r0, 100.0);
    }

    #[test]
    fn ratio_decreases_with_rank() {
        let shape = LayerShape::new("mlp", 2048, 8192).unwrap();
        let ratios: Vec<f64> = (1..=64).map(|r| reduction_ratio(&shape, &LoraSpec::with_rank(r))).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rank_rule() {
        assert_eq!(rank_for_model(1_700_000_000).rank, 16);
        assert_eq!(rank_for_model(4_000_000_000).rank, 32);
        assert_eq!(rank_for_model(3_000_000_000).rank, 16);
        let spec = rank_for_model(12_000_000_000);
        assert_eq!((spec.alpha, spec.dropout), (32.0, 0.05));
    }

    #[test]
    fn zero_update_keeps_base() {
        let base = array![[1.0, 2.0], [3.0, 4.0]];
        let input = MergeInput::new(base.clone(), Array2::zeros((2, 1)), array![[5.0, 6.0]]).unwrap();
        assert_eq!(merge_weights(&input).unwrap(), base);
    }

    #[test]
    fn worked_merge() {
        let input = MergeInput::new(Array2::zeros((2, 2)), array![[1.0], [0.0]], array![[2.0, 3.0]]).unwrap();
        assert_eq!(merge_weights(&input).unwrap(), array![[2.0, 3.0], [0.0, 0.0]]);
        assert!(input.rank_warning().is_none());
        let scaled = merge_weights_scaled(&input, 32.0).unwrap();
        assert_eq!(scaled, array![[64.0, 96.0], [0.0, 0.0]]);
    }

    #[test]
    fn mismatched_shapes() {
        let err = MergeInput::new(Array2::<f64>::zeros((2, 3)), Array2::zeros((2, 1)), Array2::zeros((1, 2))).unwrap_err();
        assert!(matches!(err, LoraError::DimensionMismatch { .. }));
        assert_eq!(LayerShape::new("x", 0, 3), Err(LoraError::EmptyShape));
    }

    #[test]
    fn full_rank_warns() {
        let input = MergeInput::new(Array2::<f32>::zeros((2, 2)), Array2::zeros((2, 2)), Array2::zeros((2, 2))).unwrap();
        assert!(input.rank_warning().is_some());
    }
}
