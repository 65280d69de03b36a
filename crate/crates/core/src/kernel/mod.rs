//! Desk-scale numeric reference for the vision-language architecture:
//! patch embedding, M-RoPE, windowed attention masks, 2x2 token fusion and
//! the autoregressive multi-task loss. Also hosts the deterministic mock
//! model used by the harness.

mod fuse;
mod loss;
mod mask;
mod mock;
mod patch;
mod rope;
mod selftest;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fuse::{token_fuse, Activation, FusionWeights};
pub use loss::{multitask_loss, score_loss, softmax_rows, LossExample};
pub use mask::{allowed_pairs, window_mask};
pub use mock::{mock_generate, planted_correct, MockBehavior, MockModel, REFUSAL_TEXT};
pub use patch::patch_embed;
pub use rope::{mrope_apply, mrope_rotate, rope_1d};
pub use selftest::{selftest, CheckResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub patch_size: usize,
    /// Attention window side, in patches.
    pub window: usize,
    pub full_attention_layers: Vec<usize>,
    pub vision_width: usize,
    pub fusion_hidden: usize,
    pub model_width: usize,
    pub rope_base: f64,
    pub head_dim: usize,
    pub vocab_size: usize,
    /// Rotation pairs given to (t, u, v). `None` splits them into equal
    /// contiguous thirds.
    #[serde(default)]
    pub mrope_sections: Option<[usize; 3]>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            patch_size: 14,
            window: 8,
            full_attention_layers: vec![7, 15, 23, 31],
            vision_width: 1280,
            fusion_hidden: 5120,
            model_width: 3584,
            rope_base: 10000.0,
            head_dim: 126,
            vocab_size: 151646,
            mrope_sections: None,
        }
    }
}

impl KernelConfig {
    /// Small widths for tests and the self-test.
    pub fn toy() -> Self {
        KernelConfig {
            patch_size: 2,
            window: 2,
            vision_width: 4,
            fusion_hidden: 6,
            model_width: 3,
            head_dim: 12,
            vocab_size: 5,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("window", self.window),
            ("vision_width", self.vision_width),
            ("fusion_hidden", self.fusion_hidden),
            ("model_width", self.model_width),
            ("head_dim", self.head_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if self.head_dim % 2 != 0 {
            return Err(Error::Config("`head_dim` must be even".into()));
        }
        match self.mrope_sections {
            None if self.head_dim % 6 != 0 => Err(Error::Config(
                "`head_dim` must be divisible by 6 for equal M-RoPE sections".into(),
            )),
            Some(s) if s.iter().sum::<usize>() != self.head_dim / 2 => Err(Error::Config(format!(
                "M-RoPE sections {s:?} do not sum to head_dim / 2 = {}",
                self.head_dim / 2
            ))),
            _ if !(self.rope_base > 1.0) => Err(Error::Config("`rope_base` must exceed 1".into())),
            _ => Ok(()),
        }
    }

    /// Rotation pairs per (t, u, v) section.
    pub fn sections(&self) -> [usize; 3] {
        self.mrope_sections.unwrap_or([self.head_dim / 6; 3])
    }
}

/// Position of one token: temporal index and patch row/column. `t` may be
/// fractional (frame timestamps in seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionTriple {
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

impl PositionTriple {
    pub fn new(t: f64, u: f64, v: f64) -> Self {
        PositionTriple { t, u, v }
    }

    /// Text token at sequence index `n`: all three components equal `n`.
    pub fn text(n: usize) -> Self {
        let n = n as f64;
        PositionTriple { t: n, u: n, v: n }
    }

    /// Image patch at (`row`, `col`) of frame `t`.
    pub fn patch(t: f64, row: usize, col: usize) -> Self {
        PositionTriple {
            t,
            u: row as f64,
            v: col as f64,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t, self.u, self.v]
    }

    pub fn shifted(&self, by: PositionTriple) -> Self {
        PositionTriple::new(self.t + by.t, self.u + by.u, self.v + by.v)
    }
}

/// Visual tokens of one frame in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    /// N x d_v.
    pub tokens: Array2<f64>,
    pub positions: Vec<PositionTriple>,
    pub rows: usize,
    pub cols: usize,
}

impl TokenGrid {
    pub fn new(tokens: Array2<f64>, rows: usize, cols: usize) -> Result<Self> {
        if tokens.nrows() != rows * cols {
            return Err(Error::Shape(format!(
                "{} tokens for a {rows}x{cols} grid",
                tokens.nrows()
            )));
        }
        let positions = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| PositionTriple::patch(0.0, r, c)))
            .collect();
        Ok(TokenGrid {
            tokens,
            positions,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_and_toy_configs_validate() {
        KernelConfig::default().validate().unwrap();
        KernelConfig::toy().validate().unwrap();
        assert_eq!(KernelConfig::default().full_attention_layers, [7, 15, 23, 31]);
        assert_eq!(KernelConfig::default().patch_size * KernelConfig::default().window, 112);
    }

    #[test]
    fn invalid_configs() {
        let mut c = KernelConfig::toy();
        c.head_dim = 8;
        assert!(c.validate().is_err());
        c.mrope_sections = Some([2, 1, 1]);
        c.validate().unwrap();
        c.mrope_sections = Some([2, 2, 1]);
        assert!(c.validate().is_err());
        let mut c = KernelConfig::toy();
        c.window = 0;
        assert!(c.validate().is_err());
    }
}
