use ndarray::Array2;

use super::KernelConfig;

/// Attention mask over a row-major `rows x cols` token grid. Layers in the
/// config's full-attention set see every token; other layers only see
/// tokens in the same `window x window` tile. Edge tiles may be smaller.
pub fn window_mask(rows: usize, cols: usize, window: usize, layer: usize, config: &KernelConfig) -> Array2<bool> {
    let n = rows * cols;
    if config.full_attention_layers.contains(&layer) || window == 0 {
        return Array2::from_elem((n, n), true);
    }
    let tile = |i: usize| ((i / cols) / window, (i % cols) / window);
    Array2::from_shape_fn((n, n), |(i, j)| tile(i) == tile(j))
}

pub fn allowed_pairs(mask: &Array2<bool>) -> usize {
    mask.iter().filter(|v| **v).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_attention_layers() {
        let cfg = KernelConfig::default();
        let m = window_mask(4, 6, 2, 7, &cfg);
        assert_eq!(allowed_pairs(&m), 24 * 24);
        let m = window_mask(4, 6, 2, 8, &cfg);
        assert!(allowed_pairs(&m) < 24 * 24);
    }

    #[test]
    fn single_window() {
        let m = window_mask(2, 2, 2, 0, &KernelConfig::default());
        assert_eq!(allowed_pairs(&m), 16);
    }

    #[test]
    fn four_by_four_tiles() {
        let m = window_mask(4, 4, 2, 0, &KernelConfig::default());
        assert_eq!(allowed_pairs(&m), 64);
        // token 0 (0,0) and token 5 (1,1) share a tile, token 2 (0,2) does not
        assert!(m[(0, 5)]);
        assert!(!m[(0, 2)]);
    }

    #[test]
    fn ragged_edges() {
        // 5x3 grid, window 2: tiles 2x2,2x1 / 2x2,2x1 / 1x2,1x1
        let m = window_mask(5, 3, 2, 0, &KernelConfig::default());
        let want = 16 + 4 + 16 + 4 + 4 + 1;
        assert_eq!(allowed_pairs(&m), want);
        assert!(want <= 15 * 4);
    }
}
