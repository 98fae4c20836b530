//! The six training objectives.
//!
//! Each loss exists twice: a plain function on matrices (used for metrics,
//! tests, and as one side of the oracle checks) and a graph builder in
//! [`graph`] that records the same computation on a [`Tape`] so gradients fall
//! out of `backward`. The two routes are independent code paths on purpose.
//!
//! L1 terms reduce as the mean of absolute deviations by default, which keeps
//! magnitudes comparable across utterance lengths; [`L1Reduction::Sum`] gives
//! the unnormalized variant.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum L1Reduction {
    #[default]
    Mean,
    Sum,
}

fn reduce(total_abs: f64, count: usize, r: L1Reduction) -> f64 {
    match r {
        L1Reduction::Mean => total_abs / count as f64,
        L1Reduction::Sum => total_abs,
    }
}

/// L1 pull of a speaker embedding toward the zero vector.
pub fn intermediate_speaker_loss(e: &[f64], r: L1Reduction) -> f64 {
    reduce(e.iter().map(|v| v.abs()).sum(), e.len(), r)
}

/// L1 distance between a target Mel matrix and a prediction.
pub fn reconstruction_loss(x: &Array2<f64>, x_hat: &Array2<f64>, r: L1Reduction) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::Shape(format!(
            "reconstruction loss on {:?} vs {:?}",
            x.dim(),
            x_hat.dim()
        )));
    }
    let total: f64 = x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(reduce(total, x.len(), r))
}

/// Per-column population standard deviation over the `T` frames.
pub fn std_vector(x: &Array2<f64>) -> Array1<f64> {
    let t = x.nrows() as f64;
    let mut out = Array1::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        let mean = col.sum() / t;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / t;
        out[j] = var.sqrt();
    }
    out
}

/// L1 distance between the per-column standard deviations of target and
/// prediction.
pub fn std_loss(x: &Array2<f64>, x_hat: &Array2<f64>, r: L1Reduction) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::Shape(format!("std loss on {:?} vs {:?}", x.dim(), x_hat.dim())));
    }
    let sx = std_vector(x);
    let sh = std_vector(x_hat);
    let total: f64 = sx.iter().zip(sh.iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(reduce(total, sx.len(), r))
}

/// `1 - cos(s, s_hat)`, in `[0, 2]`.
pub fn speaker_reconstruction_loss(s: &[f64], s_hat: &[f64]) -> Result<f64> {
    if s.len() != s_hat.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: s_hat.len() });
    }
    let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nh = s_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ns == 0.0 || nh == 0.0 {
        return Err(Error::DegenerateInput("speaker loss on zero-norm embedding".into()));
    }
    let dot: f64 = s.iter().zip(s_hat.iter()).map(|(a, b)| a * b).sum();
    Ok(1.0 - dot / (ns * nh))
}

/// Composite objective: the four reconstruction-side terms plus the weighted
/// speaker term.
pub fn total_loss(
    l_mid_spk: f64,
    l_recon: f64,
    l_recon_postnet: f64,
    l_std: f64,
    l_spk: f64,
    lambda_spk: f64,
) -> f64 {
    l_mid_spk + l_recon + l_recon_postnet + l_std + lambda_spk * l_spk
}

/// The named scalar losses of one training step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_mid_spk: f64,
    pub l_recon: f64,
    pub l_recon_postnet: f64,
    pub l_std: f64,
    pub l_spk: f64,
    pub lambda_spk: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn new(
        l_mid_spk: f64,
        l_recon: f64,
        l_recon_postnet: f64,
        l_std: f64,
        l_spk: f64,
        lambda_spk: f64,
    ) -> Self {
        LossBundle {
            l_mid_spk,
            l_recon,
            l_recon_postnet,
            l_std,
            l_spk,
            lambda_spk,
            total: total_loss(l_mid_spk, l_recon, l_recon_postnet, l_std, l_spk, lambda_spk),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_mid_spk, self.l_recon, self.l_recon_postnet, self.l_std, self.l_spk, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Tape-recorded versions of the losses, for training.
pub mod graph {
    use super::*;

    fn reduce_var(t: &mut Tape, v: Var, r: L1Reduction) -> Var {
        match r {
            L1Reduction::Mean => t.mean_all(v),
            L1Reduction::Sum => t.sum_all(v),
        }
    }

    /// Mean (or sum) of absolute entries; the intermediate speaker loss when
    /// applied to an embedding node.
    pub fn l1_to_zero(t: &mut Tape, x: Var, r: L1Reduction) -> Var {
        let a = t.abs(x);
        reduce_var(t, a, r)
    }

    /// L1 distance to a target node of the same shape.
    pub fn reconstruction(t: &mut Tape, target: Var, pred: Var, r: L1Reduction) -> Var {
        let d = t.sub(target, pred);
        let a = t.abs(d);
        reduce_var(t, a, r)
    }

    /// Per-column population standard deviation: `[T, d] -> [1, d]`.
    pub fn std_vector(t: &mut Tape, x: Var) -> Var {
        let mu = t.mean_rows(x);
        let centered = t.sub_row_broadcast(x, mu);
        let sq = t.mul(centered, centered);
        let var = t.mean_rows(sq);
        t.sqrt_floor(var, 0.0)
    }

    /// L1 distance between std vectors; `target_std` is usually a constant.
    pub fn std(t: &mut Tape, target_std: Var, pred: Var, r: L1Reduction) -> Var {
        let sh = std_vector(t, pred);
        let d = t.sub(target_std, sh);
        let a = t.abs(d);
        reduce_var(t, a, r)
    }

    /// `1 - cos` between two `[1, d]` embedding nodes.
    pub fn speaker(t: &mut Tape, s: Var, s_hat: Var) -> Var {
        t.cosine_gap(s, s_hat)
    }

    /// Weighted sum of the five scalar loss nodes.
    pub fn total(
        t: &mut Tape,
        l_mid_spk: Var,
        l_recon: Var,
        l_recon_postnet: Var,
        l_std: Var,
        l_spk: Var,
        lambda_spk: f64,
    ) -> Var {
        let a = t.add(l_mid_spk, l_recon);
        let b = t.add(a, l_recon_postnet);
        let c = t.add(b, l_std);
        let w = t.scale(l_spk, lambda_spk);
        t.add(c, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn intermediate_loss_examples() {
        assert_eq!(intermediate_speaker_loss(&[0.0; 8], L1Reduction::Mean), 0.0);
        assert_eq!(
            intermediate_speaker_loss(&[0.5, -0.5, 0.5, -0.5], L1Reduction::Mean),
            0.5
        );
        assert_eq!(intermediate_speaker_loss(&[1.0, 0.0, 0.0, 0.0], L1Reduction::Mean), 0.25);
        assert_eq!(intermediate_speaker_loss(&[1.0, 0.0, 0.0, 0.0], L1Reduction::Sum), 1.0);
    }

    #[test]
    fn reconstruction_examples() {
        let x = Array2::from_elem((3, 4), 1.0);
        assert_eq!(reconstruction_loss(&x, &x, L1Reduction::Mean).unwrap(), 0.0);
        let zeros = Array2::zeros((3, 4));
        assert_eq!(reconstruction_loss(&x, &zeros, L1Reduction::Mean).unwrap(), 1.0);
        let bad = Array2::zeros((2, 4));
        assert!(matches!(
            reconstruction_loss(&x, &bad, L1Reduction::Mean),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reconstruction_matches_element_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = rand_mat(&mut rng, 3, 4);
        let y = rand_mat(&mut rng, 3, 4);
        let got = reconstruction_loss(&x, &y, L1Reduction::Mean).unwrap();
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..4 {
                acc += (x[[r, c]] - y[[r, c]]).abs();
            }
        }
        let want = acc / 12.0;
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn std_vector_examples() {
        let constant = Array2::from_elem((5, 3), 2.5);
        assert!(std_vector(&constant).iter().all(|&v| v == 0.0));

        let two = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        assert_eq!(std_vector(&two)[0], 1.0);

        // Two-pass oracle on a random matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = rand_mat(&mut rng, 7, 5);
        let got = std_vector(&x);
        for j in 0..5 {
            let mean: f64 = (0..7).map(|i| x[[i, j]]).sum::<f64>() / 7.0;
            let var: f64 = (0..7).map(|i| (x[[i, j]] - mean).powi(2)).sum::<f64>() / 7.0;
            assert!((got[j] - var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn std_vector_single_frame_is_zero() {
        let x = Array2::from_shape_vec((1, 4), vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(std_vector(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn std_loss_examples() {
        let x = Array2::from_elem((4, 3), 1.0);
        assert_eq!(std_loss(&x, &x, L1Reduction::Mean).unwrap(), 0.0);

        // Prediction columns alternate +-1: per-column std exactly 1.
        let pred = Array2::from_shape_fn((4, 3), |(i, _)| if i % 2 == 0 { 1.0 } else { -1.0 });
        assert!((std_loss(&x, &pred, L1Reduction::Mean).unwrap() - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = rand_mat(&mut rng, 6, 5);
        let b = rand_mat(&mut rng, 6, 5);
        let got = std_loss(&a, &b, L1Reduction::Mean).unwrap();
        let sa = std_vector(&a);
        let sb = std_vector(&b);
        let want: f64 = sa.iter().zip(sb.iter()).map(|(u, v)| (u - v).abs()).sum::<f64>() / 5.0;
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn speaker_loss_examples() {
        let s = vec![0.3, -0.4, 0.5];
        assert!(speaker_reconstruction_loss(&s, &s).unwrap().abs() < 1e-15);

        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        assert!((speaker_reconstruction_loss(&a, &b).unwrap() - 1.0).abs() < 1e-15);

        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((speaker_reconstruction_loss(&s, &neg).unwrap() - 2.0).abs() < 1e-12);

        assert!(matches!(
            speaker_reconstruction_loss(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            speaker_reconstruction_loss(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, 0.0, 3.0), 0.0);
        assert!((total_loss(0.1, 0.2, 0.3, 0.4, 0.5, 3.0) - 2.5).abs() < 1e-15);
        // Lambda zero makes the total independent of the speaker term.
        assert_eq!(
            total_loss(0.1, 0.2, 0.3, 0.4, 0.9, 0.0),
            total_loss(0.1, 0.2, 0.3, 0.4, 0.1, 0.0)
        );
    }

    #[test]
    fn bundle_total_is_the_linear_combination() {
        let b = LossBundle::new(0.11, 0.23, 0.31, 0.07, 0.41, 3.0);
        let want = b.l_mid_spk + b.l_recon + b.l_recon_postnet + b.l_std + b.lambda_spk * b.l_spk;
        assert_eq!(b.total, want);
        assert!(b.is_finite());
    }

    #[test]
    fn graph_losses_match_plain_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = rand_mat(&mut rng, 5, 8);
        let y = rand_mat(&mut rng, 5, 8);
        let e = rand_mat(&mut rng, 1, 6);
        let s = rand_mat(&mut rng, 1, 6);

        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let ev = t.constant(e.clone());
        let sv = t.constant(s.clone());

        let g_mid = graph::l1_to_zero(&mut t, ev, L1Reduction::Mean);
        let want_mid = intermediate_speaker_loss(e.row(0).as_slice().unwrap(), L1Reduction::Mean);
        assert!((t.scalar(g_mid) - want_mid).abs() < 1e-12);

        let g_rec = graph::reconstruction(&mut t, xv, yv, L1Reduction::Mean);
        let want_rec = reconstruction_loss(&x, &y, L1Reduction::Mean).unwrap();
        assert!((t.scalar(g_rec) - want_rec).abs() < 1e-12);

        let sx = std_vector(&x);
        let sx_var = t.constant(sx.clone().insert_axis(ndarray::Axis(0)));
        let g_std = graph::std(&mut t, sx_var, yv, L1Reduction::Mean);
        let want_std = std_loss(&x, &y, L1Reduction::Mean).unwrap();
        assert!((t.scalar(g_std) - want_std).abs() < 1e-12);

        let g_spk = graph::speaker(&mut t, ev, sv);
        let want_spk = speaker_reconstruction_loss(
            e.row(0).as_slice().unwrap(),
            s.row(0).as_slice().unwrap(),
        )
        .unwrap();
        assert!((t.scalar(g_spk) - want_spk).abs() < 1e-12);

        let g_total =
            graph::total(&mut t, g_mid, g_rec, g_rec, g_std, g_spk, 3.0);
        let want_total = total_loss(want_mid, want_rec, want_rec, want_std, want_spk, 3.0);
        assert!((t.scalar(g_total) - want_total).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn losses_are_nonnegative(
            xs in proptest::collection::vec(-10.0f64..10.0, 20),
            ys in proptest::collection::vec(-10.0f64..10.0, 20),
        ) {
            let x = Array2::from_shape_vec((4, 5), xs).unwrap();
            let y = Array2::from_shape_vec((4, 5), ys).unwrap();
            prop_assert!(reconstruction_loss(&x, &y, L1Reduction::Mean).unwrap() >= 0.0);
            prop_assert!(std_loss(&x, &y, L1Reduction::Mean).unwrap() >= 0.0);
            prop_assert!(intermediate_speaker_loss(x.as_slice().unwrap(), L1Reduction::Mean) >= 0.0);
        }

        #[test]
        fn reconstruction_is_symmetric_and_scale_equivariant(
            xs in proptest::collection::vec(-5.0f64..5.0, 12),
            ys in proptest::collection::vec(-5.0f64..5.0, 12),
            a in -4.0f64..4.0,
        ) {
            let x = Array2::from_shape_vec((3, 4), xs).unwrap();
            let y = Array2::from_shape_vec((3, 4), ys).unwrap();
            let l = reconstruction_loss(&x, &y, L1Reduction::Mean).unwrap();
            let l_swapped = reconstruction_loss(&y, &x, L1Reduction::Mean).unwrap();
            prop_assert!((l - l_swapped).abs() < 1e-12);
            let lx = reconstruction_loss(&x.mapv(|v| a * v), &y.mapv(|v| a * v), L1Reduction::Mean).unwrap();
            prop_assert!((lx - a.abs() * l).abs() < 1e-9);
        }

        #[test]
        fn speaker_loss_in_range_and_scale_invariant(
            s in proptest::collection::vec(-3.0f64..3.0, 8),
            h in proptest::collection::vec(-3.0f64..3.0, 8),
            a in 0.1f64..50.0,
        ) {
            prop_assume!(s.iter().any(|v| v.abs() > 1e-6));
            prop_assume!(h.iter().any(|v| v.abs() > 1e-6));
            let l = speaker_reconstruction_loss(&s, &h).unwrap();
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&l));
            let scaled: Vec<f64> = s.iter().map(|v| a * v).collect();
            let ls = speaker_reconstruction_loss(&scaled, &h).unwrap();
            prop_assert!((l - ls).abs() < 1e-9);
        }

        #[test]
        fn total_decomposes_exactly(
            parts in proptest::collection::vec(0.0f64..10.0, 5),
            lambda in 0.0f64..5.0,
        ) {
            let b = LossBundle::new(parts[0], parts[1], parts[2], parts[3], parts[4], lambda);
            let recomposed = b.l_mid_spk + b.l_recon + b.l_recon_postnet + b.l_std
                + b.lambda_spk * b.l_spk;
            prop_assert_eq!(b.total, recomposed);
        }
    }
}
