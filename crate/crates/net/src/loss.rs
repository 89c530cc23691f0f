use sdfseg_core::{BinaryVolume, ScalarVolume};
use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor4};
use crate::{NetError, Result};

fn check(pred: &Tensor4<impl Real>, channels: usize, dims: [usize; 3]) -> Result<()> {
    if pred.channels() != channels || pred.dims() != dims {
        return Err(NetError::Shape {
            what: "loss input",
            expected: format!("{channels} x {dims:?}"),
            found: pred.shape(),
        });
    }
    Ok(())
}

/// Mean over voxels of `-ln p(true class)` for two-class logits, with the
/// gradient with respect to the logits, `(softmax - onehot) / N`.
pub fn cross_entropy<T: Real>(logits: &Tensor4<T>, target: &BinaryVolume) -> Result<(f64, Tensor4<T>)> {
    check(logits, 2, target.meta().dims())?;
    let n = logits.voxels();
    let inv = 1.0 / n as f64;
    let mut grad = Tensor4::zeros(2, logits.dims());
    let (g0, g1) = grad.values_mut().split_at_mut(n);
    let mut total = 0.0;
    for (v, &t) in target.voxels().iter().enumerate() {
        let z0 = logits.channel(0)[v].f64();
        let z1 = logits.channel(1)[v].f64();
        let m = z0.max(z1);
        let lse = m + ((z0 - m).exp() + (z1 - m).exp()).ln();
        let (zt, p1) = (if t == 1 { z1 } else { z0 }, (z1 - lse).exp());
        total += lse - zt;
        let p0 = (z0 - lse).exp();
        g0[v] = T::of((p0 - (t == 0) as u8 as f64) * inv);
        g1[v] = T::of((p1 - (t == 1) as u8 as f64) * inv);
    }
    Ok((total * inv, grad))
}

/// How the weighted squared error is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseNormalization {
    /// Divide by the voxel count.
    #[default]
    VoxelCount,
    /// Divide by the sum of the weights.
    WeightSum,
}

/// `(1/N) sum w (pred - d)^2` with `w = 1 / (|d| + epsilon)`, and its gradient.
pub fn weighted_mse<T: Real>(
    pred: &Tensor4<T>,
    target: &ScalarVolume,
    epsilon: f64,
    normalization: MseNormalization,
) -> Result<(f64, Tensor4<T>)> {
    check(pred, 1, target.meta().dims())?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(NetError::Config(format!("weight epsilon must be positive, got {epsilon}")));
    }
    let weights: Vec<f64> = target.voxels().iter().map(|&d| 1.0 / ((d as f64).abs() + epsilon)).collect();
    let norm = match normalization {
        MseNormalization::VoxelCount => weights.len() as f64,
        MseNormalization::WeightSum => weights.iter().sum(),
    };
    let mut grad = Tensor4::zeros(1, pred.dims());
    let mut total = 0.0;
    for (v, g) in grad.values_mut().iter_mut().enumerate() {
        let r = pred.values()[v].f64() - target.voxels()[v] as f64;
        total += weights[v] * r * r;
        *g = T::of(2.0 * weights[v] * r / norm);
    }
    Ok((total / norm, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sdfseg_core::GridMeta;

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
    }

    #[test]
    fn cross_entropy_examples() {
        let meta = GridMeta::unit([2, 2, 1]).unwrap();
        let target = BinaryVolume::new(meta, vec![1, 0, 0, 1]).unwrap();
        let big = 1e3;
        let confident = Tensor4::new(2, [2, 2, 1], vec![0.0, big, big, 0.0, big, 0.0, 0.0, big]).unwrap();
        assert_eq!(cross_entropy(&confident, &target).unwrap().0, 0.0);
        let uniform = Tensor4::<f64>::zeros(2, [2, 2, 1]);
        let (loss, grad) = cross_entropy(&uniform, &target).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad.values(), &[0.125, -0.125, -0.125, 0.125, -0.125, 0.125, 0.125, -0.125]);
        assert!(cross_entropy(&Tensor4::<f64>::zeros(1, [2, 2, 1]), &target).is_err());
    }

    #[test]
    fn weighted_mse_examples() {
        let meta = GridMeta::unit([1, 1, 1]).unwrap();
        let d = ScalarVolume::new(meta, vec![0.0]).unwrap();
        let pred = Tensor4::new(1, [1, 1, 1], vec![1.0f64]).unwrap();
        let (loss, grad) = weighted_mse(&pred, &d, 1.0, MseNormalization::VoxelCount).unwrap();
        assert_eq!((loss, grad.values()[0]), (1.0, 2.0));
        let same = Tensor4::new(1, [1, 1, 1], vec![0.0f64]).unwrap();
        assert_eq!(weighted_mse(&same, &d, 1.0, MseNormalization::VoxelCount).unwrap().0, 0.0);
        assert!(weighted_mse(&pred, &d, 0.0, MseNormalization::VoxelCount).is_err());
    }

    #[test]
    fn weight_sum_normalization() {
        let meta = GridMeta::unit([2, 1, 1]).unwrap();
        let d = ScalarVolume::new(meta, vec![0.0, 3.0]).unwrap();
        let pred = Tensor4::new(1, [2, 1, 1], vec![1.0f64, 1.0]).unwrap();
        // w = (1, 1/4); residuals (1, -2): sum w r^2 = 2, sum w = 1.25.
        let (loss, _) = weighted_mse(&pred, &d, 1.0, MseNormalization::WeightSum).unwrap();
        assert!((loss - 2.0 / 1.25).abs() < 1e-15);
        let (loss, _) = weighted_mse(&pred, &d, 1.0, MseNormalization::VoxelCount).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    fn random_case(seed: u64) -> (Tensor4<f64>, Tensor4<f64>, BinaryVolume, ScalarVolume) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meta = GridMeta::unit([4, 4, 4]).unwrap();
        let logits = Tensor4::new(2, [4, 4, 4], (0..128).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let pred = Tensor4::new(1, [4, 4, 4], (0..64).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
        let mask = BinaryVolume::from_fn(meta, |_, _, _| rng.gen_bool(0.4));
        let sdf = ScalarVolume::from_fn(meta, |_, _, _| rng.gen_range(-6.0f32..6.0)).unwrap();
        (logits, pred, mask, sdf)
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let (logits, _, mask, _) = random_case(1);
        let (_, grad) = cross_entropy(&logits, &mask).unwrap();
        let h = 1e-6;
        for i in 0..logits.values().len() {
            let mut up = logits.clone();
            up.values_mut()[i] += h;
            let mut down = logits.clone();
            down.values_mut()[i] -= h;
            let fd = (cross_entropy(&up, &mask).unwrap().0 - cross_entropy(&down, &mask).unwrap().0) / (2.0 * h);
            assert!(rel_err(grad.values()[i], fd) < 1e-5, "{i}: {} vs {fd}", grad.values()[i]);
        }
    }

    #[test]
    fn weighted_mse_matches_oracles() {
        let (_, pred, _, sdf) = random_case(2);
        for norm in [MseNormalization::VoxelCount, MseNormalization::WeightSum] {
            let (loss, grad) = weighted_mse(&pred, &sdf, 1.0, norm).unwrap();
            // Elementwise-sum oracle.
            let (mut num, mut den) = (0.0, 0.0);
            for (p, d) in pred.values().iter().zip(sdf.voxels()) {
                let w = 1.0 / ((*d as f64).abs() + 1.0);
                num += w * (p - *d as f64).powi(2);
                den += if norm == MseNormalization::WeightSum { w } else { 1.0 };
            }
            assert!(rel_err(loss, num / den) < 1e-12);
            let h = 1e-6;
            for i in 0..64 {
                let mut up = pred.clone();
                up.values_mut()[i] += h;
                let mut down = pred.clone();
                down.values_mut()[i] -= h;
                let fd = (weighted_mse(&up, &sdf, 1.0, norm).unwrap().0
                    - weighted_mse(&down, &sdf, 1.0, norm).unwrap().0)
                    / (2.0 * h);
                assert!(rel_err(grad.values()[i], fd) < 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn weighting_favours_voxels_near_the_contour(
            near in 0.0f32..10.0,
            gap in 0.01f32..10.0,
            residual in 0.1f64..5.0,
        ) {
            let far = near + gap;
            let meta = GridMeta::unit([1, 1, 1]).unwrap();
            let loss_at = |d: f32| {
                let target = ScalarVolume::new(meta, vec![d]).unwrap();
                let pred = Tensor4::new(1, [1, 1, 1], vec![d as f64 + residual]).unwrap();
                weighted_mse(&pred, &target, 1.0, MseNormalization::VoxelCount).unwrap().0
            };
            prop_assert!(loss_at(near) > loss_at(far));
            prop_assert!(loss_at(-near) > loss_at(-far));
        }
    }
}
