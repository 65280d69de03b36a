use ndarray::{Array1, Array2, Array3};

use super::{KernelConfig, TokenGrid};
use crate::error::{Error, Result};

/// Splits an `H x W x 3` image into `P x P` patches and maps each through
/// `z = W_e vec(patch) + b_e`. `vec` flattens the patch row by row, then
/// column, then channel. Tokens come out row-major with `t = 0`.
pub fn patch_embed(
    image: &Array3<f64>,
    w_e: &Array2<f64>,
    b_e: &Array1<f64>,
    config: &KernelConfig,
) -> Result<TokenGrid> {
    let p = config.patch_size;
    let (h, w, c) = image.dim();
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Shape(format!("image {h}x{w} is not divisible by patch size {p}")));
    }
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let flat = p * p * 3;
    if w_e.ncols() != flat || w_e.nrows() != b_e.len() {
        return Err(Error::Shape(format!(
            "W_e is {}x{}, b_e has {}; expected d_v x {flat} and d_v",
            w_e.nrows(),
            w_e.ncols(),
            b_e.len()
        )));
    }
    let (rows, cols) = (h / p, w / p);
    let mut tokens = Array2::zeros((rows * cols, w_e.nrows()));
    let mut patch = Array1::zeros(flat);
    for r in 0..rows {
        for col in 0..cols {
            for y in 0..p {
                for x in 0..p {
                    for ch in 0..3 {
                        patch[(y * p + x) * 3 + ch] = image[(r * p + y, col * p + x, ch)];
                    }
                }
            }
            let z = w_e.dot(&patch) + b_e;
            tokens.row_mut(r * cols + col).assign(&z);
        }
    }
    TokenGrid::new(tokens, rows, cols)
}
