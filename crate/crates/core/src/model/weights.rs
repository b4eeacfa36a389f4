//! Model parameters and their deterministic initialization.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{ConfigError, ModelConfig, ModelError};
use crate::imaging::{NUM_PATCHES, PATCH_LEN};
use crate::linalg::{Linear, Matrix};
use crate::scalar::Scalar;

/// Per-head projection blocks of the max-relative update.
///
/// Head `h` owns the feature slice `h·d..(h+1)·d` with `d = D / heads` and
/// maps `[x_slice, max_slice]` (length `2d`) to `d` outputs through
/// `heads[h]` (`2d × d`). With one head this is the full `2D × D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateWeights<T> {
    pub heads: Vec<Matrix<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> UpdateWeights<T> {
    pub fn zeros(dim: usize, num_heads: usize) -> Self {
        let d = dim / num_heads;
        Self {
            heads: (0..num_heads).map(|_| Matrix::zeros(2 * d, d)).collect(),
            bias: vec![T::zero(); dim],
        }
    }

    /// Single-head update from a `2D × D` matrix and zero bias.
    pub fn single(weight: Matrix<T>) -> Self {
        let dim = weight.cols();
        Self {
            heads: vec![weight],
            bias: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn head_dim(&self) -> usize {
        self.heads.first().map_or(0, Matrix::cols)
    }

    pub fn cast<U: Scalar>(&self) -> UpdateWeights<U> {
        UpdateWeights {
            heads: self.heads.iter().map(Matrix::cast).collect(),
            bias: self.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    fn is_finite(&self) -> bool {
        self.heads.iter().all(Matrix::is_finite) && self.bias.iter().all(|v| v.is_finite())
    }
}

/// Weights of one grapher + FFN block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    pub w_in: Linear<T>,
    pub update: UpdateWeights<T>,
    pub w_out: Linear<T>,
    pub ffn1: Linear<T>,
    pub ffn2: Linear<T>,
}

impl<T: Scalar> BlockWeights<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden_dim;
        Self {
            w_in: Linear::zeros(d, d),
            update: UpdateWeights::zeros(d, cfg.num_heads),
            w_out: Linear::zeros(d, d),
            ffn1: Linear::zeros(d, cfg.ffn_dim()),
            ffn2: Linear::zeros(cfg.ffn_dim(), d),
        }
    }

    pub fn cast<U: Scalar>(&self) -> BlockWeights<U> {
        BlockWeights {
            w_in: self.w_in.cast(),
            update: self.update.cast(),
            w_out: self.w_out.cast(),
            ffn1: self.ffn1.cast(),
            ffn2: self.ffn2.cast(),
        }
    }

    fn is_finite(&self) -> bool {
        self.w_in.is_finite()
            && self.update.is_finite()
            && self.w_out.is_finite()
            && self.ffn1.is_finite()
            && self.ffn2.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub config: ModelConfig,
    /// Patch projection, `768 × D`.
    pub stem: Linear<T>,
    /// Positional encodings, `196 × D`.
    pub pos_enc: Matrix<T>,
    pub blocks: Vec<BlockWeights<T>>,
    /// Classifier, `D × C`.
    pub head: Linear<T>,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.hidden_dim;
        Ok(Self {
            config: config.clone(),
            stem: Linear::zeros(PATCH_LEN, d),
            pos_enc: Matrix::zeros(NUM_PATCHES, d),
            blocks: (0..config.num_layers).map(|_| BlockWeights::zeros(config)).collect(),
            head: Linear::zeros(d, config.num_classes),
        })
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            config: self.config.clone(),
            stem: self.stem.cast(),
            pos_enc: self.pos_enc.cast(),
            blocks: self.blocks.iter().map(BlockWeights::cast).collect(),
            head: self.head.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.stem.is_finite()
            && self.pos_enc.is_finite()
            && self.blocks.iter().all(BlockWeights::is_finite)
            && self.head.is_finite()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn check_shapes(&self) -> Result<(), ModelError> {
        let cfg = &self.config;
        cfg.validate()?;
        let d = cfg.hidden_dim;
        let hd = cfg.head_dim();
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::Shape(format!("{name}: expected {want:?}, found {got:?}")))
            }
        };
        let lin = |name: &str, l: &Linear<T>, i: usize, o: usize| {
            expect(name, l.weight.shape(), (i, o))?;
            expect(&format!("{name}.bias"), (l.bias.len(), 1), (o, 1))
        };
        lin("stem", &self.stem, PATCH_LEN, d)?;
        expect("pos_enc", self.pos_enc.shape(), (NUM_PATCHES, d))?;
        if self.blocks.len() != cfg.num_layers {
            return Err(ModelError::Shape(format!(
                "{} blocks for {} layers",
                self.blocks.len(),
                cfg.num_layers
            )));
        }
        for (l, b) in self.blocks.iter().enumerate() {
            lin(&format!("blocks.{l}.in"), &b.w_in, d, d)?;
            lin(&format!("blocks.{l}.out"), &b.w_out, d, d)?;
            lin(&format!("blocks.{l}.ffn1"), &b.ffn1, d, cfg.ffn_dim())?;
            lin(&format!("blocks.{l}.ffn2"), &b.ffn2, cfg.ffn_dim(), d)?;
            if b.update.heads.len() != cfg.num_heads {
                return Err(ModelError::Shape(format!(
                    "blocks.{l}.update: {} heads, expected {}",
                    b.update.heads.len(),
                    cfg.num_heads
                )));
            }
            for (h, m) in b.update.heads.iter().enumerate() {
                expect(&format!("blocks.{l}.update.{h}"), m.shape(), (2 * hd, hd))?;
            }
            expect(&format!("blocks.{l}.update.bias"), (b.update.bias.len(), 1), (d, 1))?;
        }
        lin("head", &self.head, d, cfg.num_classes)
    }
}

/// Deterministic uniform draws in `[-scale, scale)`.
///
/// Each value takes one `next_u32` from Xoshiro256++ seeded through
/// SplitMix64 (`seed_from_u64`): `u = (bits >> 8) · 2⁻²⁴ ∈ [0, 1)`, then
/// `(2u − 1) · scale`, all in `f32`.
struct UniformInit {
    rng: Xoshiro256PlusPlus,
}

impl UniformInit {
    fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    fn next(&mut self, scale: f32) -> f32 {
        let u = (self.rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32);
        (2.0 * u - 1.0) * scale
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize, fan_in: usize) -> Matrix<T> {
        let scale = 1.0 / (fan_in as f32).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::from_f32_lossless(self.next(scale)))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized above")
    }

    fn linear<T: Scalar>(&mut self, in_dim: usize, out_dim: usize) -> Linear<T> {
        Linear {
            weight: self.matrix(in_dim, out_dim, in_dim),
            bias: vec![T::zero(); out_dim],
        }
    }
}

/// Seeded random weights, `U[-1, 1) / sqrt(fan_in)` per entry, zero biases.
///
/// Draw order: stem, positional encodings (fan-in `D`), then per layer
/// `W_in`, update heads in order (fan-in `2d`), `W_out`, FFN1, FFN2, and
/// finally the classifier. Values are generated as `f32` and widened, so
/// every scalar type sees the same numbers.
pub fn init_weights<T: Scalar>(config: &ModelConfig) -> Result<ModelWeights<T>, ConfigError> {
    config.validate()?;
    let d = config.hidden_dim;
    let hd = config.head_dim();
    let mut init = UniformInit::new(config.seed);
    let stem = init.linear(PATCH_LEN, d);
    let pos_enc = init.matrix(NUM_PATCHES, d, d);
    let blocks = (0..config.num_layers)
        .map(|_| {
            let w_in = init.linear(d, d);
            let heads = (0..config.num_heads).map(|_| init.matrix(2 * hd, hd, 2 * hd)).collect();
            let update = UpdateWeights {
                heads,
                bias: vec![T::zero(); d],
            };
            let w_out = init.linear(d, d);
            let ffn1 = init.linear(d, config.ffn_dim());
            let ffn2 = init.linear(config.ffn_dim(), d);
            BlockWeights {
                w_in,
                update,
                w_out,
                ffn1,
                ffn2,
            }
        })
        .collect();
    let head = init.linear(d, config.num_classes);
    Ok(ModelWeights {
        config: config.clone(),
        stem,
        pos_enc,
        blocks,
        head,
    })
}
