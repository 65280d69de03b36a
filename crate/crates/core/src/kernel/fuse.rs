use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{KernelConfig, TokenGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `W1` has `2m` rows: the first `m` gate, the last `m` carry values;
    /// the hidden vector is `silu(gate) * value`.
    #[default]
    SwiGlu,
    Silu,
    Identity,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

impl Activation {
    /// Rows `W1` must have for a hidden width `m`.
    pub fn w1_rows(self, hidden: usize) -> usize {
        match self {
            Activation::SwiGlu => 2 * hidden,
            _ => hidden,
        }
    }

    fn apply(self, pre: Array1<f64>) -> Array1<f64> {
        match self {
            Activation::SwiGlu => {
                let m = pre.len() / 2;
                Array1::from_shape_fn(m, |i| silu(pre[i]) * pre[m + i])
            }
            Activation::Silu => pre.mapv(silu),
            Activation::Identity => pre,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub activation: Activation,
}

impl FusionWeights {
    fn check(&self, d_v: usize) -> Result<()> {
        let rows = self.w1.nrows();
        let hidden = match self.activation {
            Activation::SwiGlu if rows % 2 == 0 => rows / 2,
            Activation::SwiGlu => return Err(Error::Shape("SwiGLU W1 needs an even row count".into())),
            _ => rows,
        };
        if self.w1.ncols() != 4 * d_v || self.b1.len() != rows {
            return Err(Error::Shape(format!(
                "W1 is {}x{} with b1 of {}; expected {rows}x{} and {rows}",
                rows,
                self.w1.ncols(),
                self.b1.len(),
                4 * d_v
            )));
        }
        if self.w2.ncols() != hidden || self.b2.len() != self.w2.nrows() {
            return Err(Error::Shape(format!(
                "W2 is {}x{} with b2 of {}; expected d_l x {hidden}",
                self.w2.nrows(),
                self.w2.ncols(),
                self.b2.len()
            )));
        }
        Ok(())
    }
}

/// Merges each 2x2 block of the grid into one token:
/// `h = W2 act(W1 [z_tl; z_tr; z_bl; z_br] + b1) + b2`.
/// Blocks are emitted in row-major block order.
pub fn token_fuse(grid: &TokenGrid, weights: &FusionWeights, _config: &KernelConfig) -> Result<Array2<f64>> {
    if grid.rows % 2 != 0 || grid.cols % 2 != 0 {
        return Err(Error::Shape(format!(
            "grid {}x{} has an odd side",
            grid.rows, grid.cols
        )));
    }
    let d_v = grid.tokens.ncols();
    weights.check(d_v)?;
    let (br, bc) = (grid.rows / 2, grid.cols / 2);
    let mut out = Array2::zeros((br * bc, weights.w2.nrows()));
    let at = |r: usize, c: usize| grid.tokens.slice(s![r * grid.cols + c, ..]);
    for r in 0..br {
        for c in 0..bc {
            let x = concatenate(
                Axis(0),
                &[
                    at(2 * r, 2 * c),
                    at(2 * r, 2 * c + 1),
                    at(2 * r + 1, 2 * c),
                    at(2 * r + 1, 2 * c + 1),
                ],
            )
            .map_err(|e| Error::Shape(e.to_string()))?;
            let hidden = weights.activation.apply(weights.w1.dot(&x) + &weights.b1);
            let h = weights.w2.dot(&hidden) + &weights.b2;
            out.row_mut(r * bc + c).assign(&h);
        }
    }
    Ok(out)
}
