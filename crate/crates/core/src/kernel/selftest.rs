use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    allowed_pairs, mrope_apply, mrope_rotate, multitask_loss, patch_embed, rope_1d, score_loss,
    softmax_rows, token_fuse, window_mask, Activation, FusionWeights, KernelConfig, LossExample,
    PositionTriple, TokenGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative log of the target sequence's probability, found by scanning
/// every length-`L` outcome sequence and multiplying per-position
/// probabilities.
pub(crate) fn brute_force_nll(probs: &Array2<f64>, targets: &[usize]) -> f64 {
    let (l, v) = probs.dim();
    let mut seq = vec![0usize; l];
    loop {
        if seq == targets {
            let joint: f64 = seq.iter().enumerate().map(|(i, s)| probs[(i, *s)]).product();
            return -joint.ln();
        }
        let mut k = 0;
        loop {
            if k == l {
                return f64::INFINITY;
            }
            seq[k] += 1;
            if seq[k] < v {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
    }
}

fn mrope_checks(rng: &mut ChaCha8Rng, cfg: &KernelConfig) -> Vec<CheckResult> {
    let mut reduce = 0.0f64;
    let mut normdiff = 0.0f64;
    let mut relative = 0.0f64;
    for _ in 0..100 {
        let q = random_vec(rng, cfg.head_dim);
        let k = random_vec(rng, cfg.head_dim);
        let n = rng.gen_range(0..4096usize);
        let m = mrope_rotate(&q, PositionTriple::text(n), cfg).expect("head_dim matches");
        reduce = reduce.max(max_abs_diff(&m, &rope_1d(&q, n as f64, cfg.rope_base)));
        normdiff = normdiff.max((norm(&m) - norm(&q)).abs());
        let a = PositionTriple::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0));
        let b = PositionTriple::new(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0));
        let shift = PositionTriple::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
        let (qa, kb) = mrope_apply(&q, &k, a, b, cfg).expect("head_dim matches");
        let (qs, ks) = mrope_apply(&q, &k, a.shifted(shift), b.shifted(shift), cfg).expect("head_dim matches");
        relative = relative.max((dot(&qa, &kb) - dot(&qs, &ks)).abs());
    }
    vec![
        check("mrope_1d_reduction", reduce < 1e-9, format!("max abs diff {reduce:.3e} over 100 draws")),
        check("mrope_norm_preserved", normdiff < 1e-12, format!("max norm change {normdiff:.3e}")),
        check("mrope_relative_position", relative < 1e-9, format!("max dot change under shift {relative:.3e}")),
    ]
}

fn mask_checks(cfg: &KernelConfig) -> Vec<CheckResult> {
    let mut bound_ok = true;
    let mut equality_ok = true;
    for rows in 1..=9 {
        for cols in 1..=9 {
            for m in 1..=5 {
                let n = rows * cols;
                let pairs = allowed_pairs(&window_mask(rows, cols, m, 0, cfg));
                bound_ok &= pairs <= n * m * m;
                if rows % m == 0 && cols % m == 0 {
                    equality_ok &= pairs == n * m * m;
                }
            }
        }
    }
    let full = cfg
        .full_attention_layers
        .iter()
        .all(|l| allowed_pairs(&window_mask(6, 6, 2, *l, cfg)) == 36 * 36);
    vec![
        check("window_pairs_bounded", bound_ok, "pairs <= N*M^2 on grids up to 9x9, M 1..5".into()),
        check("window_pairs_tight", equality_ok, "pairs == N*M^2 when M divides both sides".into()),
        check("full_attention_layers", full, format!("layers {:?} all-true", cfg.full_attention_layers)),
    ]
}

fn fuse_and_patch_checks(rng: &mut ChaCha8Rng, cfg: &KernelConfig) -> Vec<CheckResult> {
    let mut lengths_ok = true;
    for (rows, cols) in [(2, 2), (4, 4), (2, 6), (8, 4)] {
        let grid = TokenGrid::new(random_matrix(rng, rows * cols, cfg.vision_width), rows, cols)
            .expect("shape matches");
        let act = Activation::SwiGlu;
        let w = FusionWeights {
            w1: random_matrix(rng, act.w1_rows(cfg.fusion_hidden), 4 * cfg.vision_width),
            b1: Array1::from(random_vec(rng, act.w1_rows(cfg.fusion_hidden))),
            w2: random_matrix(rng, cfg.model_width, cfg.fusion_hidden),
            b2: Array1::from(random_vec(rng, cfg.model_width)),
            activation: act,
        };
        let out = token_fuse(&grid, &w, cfg).expect("weights sized from config");
        lengths_ok &= out.nrows() * 4 == grid.len() && out.ncols() == cfg.model_width;
    }
    let p = cfg.patch_size;
    let img = Array3::from_shape_fn((2 * p, 3 * p, 3), |(y, x, c)| (y * 31 + x * 7 + c) as f64);
    let flat = p * p * 3;
    let mut w = Array2::zeros((1, flat));
    w[(0, flat - 1)] = 1.0;
    let grid = patch_embed(&img, &w, &Array1::zeros(1), cfg).expect("image divisible");
    let want_last = img[(2 * p - 1, 3 * p - 1, 2)];
    let patch_ok = grid.len() == 6 && grid.tokens[(5, 0)] == want_last;
    vec![
        check("token_fuse_quarter_length", lengths_ok, "output rows = N/4 for 4 grids".into()),
        check("patch_embed_selector", patch_ok, format!("{} tokens, selector picks last pixel", grid.len())),
    ]
}

fn loss_checks(rng: &mut ChaCha8Rng) -> Vec<CheckResult> {
    let (l, v) = (6, 9);
    let uniform = LossExample {
        probs: Array2::from_elem((l, v), 1.0 / v as f64),
        targets: (0..l).map(|i| i % v).collect(),
    };
    let got = multitask_loss(&[uniform]).expect("valid rows");
    let want = l as f64 * (v as f64).ln();
    let uniform_err = (got - want).abs();

    let probs = softmax_rows(&random_matrix(rng, 3, 5));
    let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
    let loss = multitask_loss(&[LossExample {
        probs: probs.clone(),
        targets: targets.clone(),
    }])
    .expect("valid rows");
    let brute_err = (loss - brute_force_nll(&probs, &targets)).abs();

    let mut worst_rel = 0.0f64;
    for _ in 0..10 {
        let scores = random_matrix(rng, 3, 4);
        let t: Vec<usize> = (0..3).map(|_| rng.gen_range(0..4)).collect();
        let (_, grad) = score_loss(&scores, &t).expect("valid targets");
        let h = 1e-5;
        let mut fd = Array2::zeros(scores.dim());
        for idx in ndarray::indices(scores.dim()) {
            let mut plus = scores.clone();
            let mut minus = scores.clone();
            plus[idx] += h;
            minus[idx] -= h;
            let lp = score_loss(&plus, &t).expect("valid").0;
            let lm = score_loss(&minus, &t).expect("valid").0;
            fd[idx] = (lp - lm) / (2.0 * h);
        }
        let diff = (&fd - &grad).mapv(|x| x * x).sum().sqrt();
        let scale = grad.mapv(|x| x * x).sum().sqrt().max(1e-12);
        worst_rel = worst_rel.max(diff / scale);
    }

    let mut probs = softmax_rows(&random_matrix(rng, 1, 5));
    let before = multitask_loss(&[LossExample { probs: probs.clone(), targets: vec![2] }]).expect("valid");
    probs[(0, 2)] += 0.1;
    let z = probs.sum();
    probs.mapv_inplace(|p| p / z);
    let after = multitask_loss(&[LossExample { probs, targets: vec![2] }]).expect("valid");

    vec![
        check("loss_uniform", uniform_err < 1e-9, format!("|loss - L ln V| = {uniform_err:.3e}")),
        check("loss_brute_force", brute_err < 1e-12, format!("|loss - brute force| = {brute_err:.3e}")),
        check("loss_gradient_fd", worst_rel < 1e-5, format!("max relative error {worst_rel:.3e}")),
        check("loss_monotone", after < before, format!("{before:.6} -> {after:.6}")),
    ]
}

/// Runs every kernel invariant at toy widths.
pub fn selftest(seed: u64) -> Vec<CheckResult> {
    let cfg = KernelConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![check(
        "config_valid",
        cfg.validate().is_ok() && KernelConfig::default().validate().is_ok(),
        "toy and default configs".into(),
    )];
    out.extend(mrope_checks(&mut rng, &cfg));
    out.extend(mask_checks(&cfg));
    out.extend(fuse_and_patch_checks(&mut rng, &cfg));
    out.extend(loss_checks(&mut rng));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for seed in [0, 1, 42] {
            for c in selftest(seed) {
                assert!(c.passed, "{}: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn brute_force_scan() {
        let p = ndarray::array![[0.2, 0.8], [0.5, 0.5]];
        assert!((brute_force_nll(&p, &[1, 0]) + (0.8f64 * 0.5).ln()).abs() < 1e-15);
    }
}
