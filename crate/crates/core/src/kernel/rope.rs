use super::{KernelConfig, PositionTriple};
use crate::error::{Error, Result};

fn rotate_pair(x: &mut [f64], i: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    let (a, b) = (x[2 * i], x[2 * i + 1]);
    x[2 * i] = a * c - b * s;
    x[2 * i + 1] = a * s + b * c;
}

fn inv_freq(i: usize, dim: usize, base: f64) -> f64 {
    base.powf(-2.0 * i as f64 / dim as f64)
}

/// Single-axis RoPE: pair `(x[2i], x[2i+1])` rotated by
/// `n * base^(-2i/d)`.
pub fn rope_1d(x: &[f64], n: f64, base: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in 0..x.len() / 2 {
        rotate_pair(&mut out, i, n * inv_freq(i, x.len(), base));
    }
    out
}

/// M-RoPE of one vector. Rotation pairs are split into contiguous (t, u, v)
/// sections; pair `i` turns by `pos[section(i)] * base^(-2i/d_k)`, with `i`
/// the pair index over the whole head, so equal components reduce to
/// [`rope_1d`].
pub fn mrope_rotate(x: &[f64], pos: PositionTriple, config: &KernelConfig) -> Result<Vec<f64>> {
    if x.len() != config.head_dim {
        return Err(Error::Shape(format!(
            "vector of length {} for head_dim {}",
            x.len(),
            config.head_dim
        )));
    }
    let sections = config.sections();
    let p = pos.as_array();
    let mut out = x.to_vec();
    let mut i = 0;
    for (s, n) in sections.iter().enumerate() {
        for _ in 0..*n {
            rotate_pair(&mut out, i, p[s] * inv_freq(i, x.len(), config.rope_base));
            i += 1;
        }
    }
    Ok(out)
}

/// Rotates a query and a key at their positions.
pub fn mrope_apply(
    q: &[f64],
    k: &[f64],
    pos_q: PositionTriple,
    pos_k: PositionTriple,
    config: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((mrope_rotate(q, pos_q, config)?, mrope_rotate(k, pos_k, config)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    fn vec_of(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn origin_is_identity() {
        let cfg = KernelConfig::toy();
        let q = vec_of(12, 0.7);
        let r = mrope_rotate(&q, PositionTriple::text(0), &cfg).unwrap();
        assert_eq!(r, q);
    }

    #[test]
    fn equal_components_reduce_to_1d() {
        let cfg = KernelConfig::toy();
        let q = vec_of(12, 1.3);
        for n in [1, 5, 17, 400] {
            let m = mrope_rotate(&q, PositionTriple::text(n), &cfg).unwrap();
            let r = rope_1d(&q, n as f64, cfg.rope_base);
            let diff = m.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "n={n} diff={diff}");
        }
    }

    #[test]
    fn norm_preserved_and_relative() {
        let cfg = KernelConfig::toy();
        let q = vec_of(12, 0.3);
        let k = vec_of(12, 2.1);
        let a = PositionTriple::new(2.0, 3.0, 1.0);
        let b = PositionTriple::new(0.5, 7.0, 4.0);
        let (qa, kb) = mrope_apply(&q, &k, a, b, &cfg).unwrap();
        assert!((norm(&qa) - norm(&q)).abs() < 1e-12);
        let shift = PositionTriple::new(4.0, -2.0, 9.0);
        let (qs, ks) = mrope_apply(&q, &k, a.shifted(shift), b.shifted(shift), &cfg).unwrap();
        assert!((dot(&qa, &kb) - dot(&qs, &ks)).abs() < 1e-9);
    }

    #[test]
    fn sections_route_components() {
        let cfg = KernelConfig::toy();
        let q = vec_of(12, 0.9);
        // only u moves: pairs 0..2 (t) and 4..6 (v) stay put
        let r = mrope_rotate(&q, PositionTriple::new(0.0, 3.0, 0.0), &cfg).unwrap();
        assert_eq!(&r[..4], &q[..4]);
        assert_eq!(&r[8..], &q[8..]);
        assert_ne!(&r[4..8], &q[4..8]);
    }
}
