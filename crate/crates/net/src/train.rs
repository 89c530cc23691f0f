use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdfseg_core::{BinaryVolume, ScalarVolume};
use serde::{Deserialize, Serialize};

use crate::denormal::FlushDenormals;
use crate::loss::{cross_entropy, weighted_mse, MseNormalization};
use crate::net::{backward, forward_train, Head, NetSpec, Params};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{Real, Tensor4};
use crate::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    WeightedMse,
}

impl LossKind {
    pub fn for_head(head: Head) -> LossKind {
        match head {
            Head::Pwc => LossKind::CrossEntropy,
            Head::Pwr => LossKind::WeightedMse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to the loss that belongs to the head.
    pub loss: Option<LossKind>,
    /// Weight offset of the distance loss, in target units.
    pub weight_epsilon: f64,
    pub optimizer: OptimizerKind,
    /// Clamp distance targets to `±tau` (target units) before training.
    pub clamp_tau: Option<f64>,
    pub mse_normalization: MseNormalization,
    /// World length of one target unit: distance targets are divided by it
    /// for training, and predictions multiplied by it.
    pub sdf_unit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            seed: 0,
            loss: None,
            weight_epsilon: 1.0,
            optimizer: OptimizerKind::Adam,
            clamp_tau: None,
            mse_normalization: MseNormalization::VoxelCount,
            sdf_unit: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, head: Head) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.weight_epsilon > 0.0 && self.weight_epsilon.is_finite()) {
            return bad(format!("weight epsilon must be > 0, got {}", self.weight_epsilon));
        }
        if !(self.sdf_unit > 0.0 && self.sdf_unit.is_finite()) {
            return bad(format!("sdf unit must be > 0, got {}", self.sdf_unit));
        }
        if let Some(tau) = self.clamp_tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("clamp tau must be > 0, got {tau}"));
            }
        }
        if let Some(loss) = self.loss {
            if loss != LossKind::for_head(head) {
                return bad(format!("loss {loss:?} does not belong to the {head} head"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum TrainTarget {
    Label(BinaryVolume),
    Sdf(ScalarVolume),
}

/// One training example at the network's resolution.
#[derive(Debug, Clone)]
pub struct TrainCase {
    pub id: String,
    pub input: ScalarVolume,
    pub target: TrainTarget,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: Params<T>,
    /// Mean loss of each epoch, measured before each step.
    pub history: Vec<f64>,
}

enum Prepared {
    Label(BinaryVolume),
    Sdf(ScalarVolume),
}

/// Batch-size-one training in a seeded shuffled order.
pub fn train<T: Real>(spec: &NetSpec, config: &TrainConfig, cases: &[TrainCase]) -> Result<TrainOutcome<T>> {
    train_with_progress(spec, config, cases, |_, _| {})
}

/// As [`train`], calling `progress(epoch, mean_loss)` after every epoch.
pub fn train_with_progress<T: Real>(
    spec: &NetSpec,
    config: &TrainConfig,
    cases: &[TrainCase],
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome<T>> {
    spec.validate()?;
    config.validate(spec.head)?;
    if cases.is_empty() {
        return Err(NetError::Config("no training cases".into()));
    }
    let mut data = Vec::with_capacity(cases.len());
    for case in cases {
        let dims = case.input.meta().dims();
        if dims != spec.input_dims {
            return Err(NetError::Shape {
                what: "training input",
                expected: format!("{:?}", spec.input_dims),
                found: format!("{dims:?} in case {}", case.id),
            });
        }
        let input = Tensor4::new(1, dims, case.input.voxels().iter().map(|&v| T::of(v as f64)).collect())?;
        let target = match (&case.target, spec.head) {
            (TrainTarget::Label(m), Head::Pwc) if m.meta().dims() == dims => Prepared::Label(m.clone()),
            (TrainTarget::Sdf(d), Head::Pwr) if d.meta().dims() == dims => {
                let (unit, tau) = (config.sdf_unit, config.clamp_tau.unwrap_or(f64::INFINITY));
                let scaled = d.map(|v| ((v as f64 / unit).clamp(-tau, tau)) as f32)?;
                Prepared::Sdf(scaled)
            }
            _ => {
                return Err(NetError::Config(format!(
                    "case {}: target kind or dims do not fit the {} head",
                    case.id, spec.head
                )))
            }
        };
        data.push((input, target));
    }

    let _flush = FlushDenormals::new();
    let mut params = Params::<T>::init(spec, config.seed)?;
    if spec.head == Head::Pwr {
        params.set_output_scale(config.sdf_unit);
    }
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut losses = vec![0.0; data.len()];
        for &i in &order {
            let (input, target) = &data[i];
            let (out, tape) = forward_train(&params, input)?;
            let (loss, grad) = match target {
                Prepared::Label(m) => cross_entropy(&out, m)?,
                Prepared::Sdf(d) => weighted_mse(&out, d, config.weight_epsilon, config.mse_normalization)?,
            };
            if !loss.is_finite() || grad.values().iter().any(|g| !g.is_finite()) {
                return Err(NetError::NonFinite { epoch: epoch + 1, case: cases[i].id.clone() });
            }
            let (grads, _) = backward(&params, &tape, &grad, false)?;
            optimizer.step(params.values_mut(), grads.values());
            losses[i] = loss;
        }
        // Summed in case order so the mean does not depend on the shuffle.
        let mean = losses.iter().sum::<f64>() / data.len() as f64;
        progress(epoch + 1, mean);
        history.push(mean);
    }
    Ok(TrainOutcome { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward;
    use sdfseg_core::sdt::signed_distance;
    use sdfseg_core::GridMeta;

    fn ball_case(dims: [usize; 3], r: f64) -> (BinaryVolume, ScalarVolume) {
        let meta = GridMeta::unit(dims).unwrap();
        let c = meta.center();
        let mask = BinaryVolume::from_fn(meta, |i, j, k| {
            let p = meta.world(i, j, k);
            (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() < r * r
        });
        let sdf = signed_distance(&mask).unwrap();
        (mask, sdf)
    }

    fn spec(head: Head) -> NetSpec {
        NetSpec { levels: 2, base_channels: 4, input_dims: [8, 8, 8], head }
    }

    #[test]
    fn config_validation() {
        let c = TrainConfig { loss: Some(LossKind::WeightedMse), ..TrainConfig::default() };
        assert!(c.validate(Head::Pwc).is_err());
        assert!(c.validate(Head::Pwr).is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate(Head::Pwc).is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate(Head::Pwc).is_err());
        assert!(TrainConfig { clamp_tau: Some(0.0), ..TrainConfig::default() }.validate(Head::Pwr).is_err());
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let (mask, sdf) = ball_case([8, 8, 8], 2.5);
        let case = TrainCase { id: "a".into(), input: mask.to_scalar(), target: TrainTarget::Sdf(sdf) };
        let err = train::<f32>(&spec(Head::Pwc), &TrainConfig::default(), &[case]).unwrap_err();
        assert!(err.to_string().contains("case a"), "{err}");
        let small = TrainCase {
            id: "b".into(),
            input: ScalarVolume::filled(GridMeta::unit([4, 4, 4]).unwrap(), 0.0),
            target: TrainTarget::Label(mask),
        };
        assert!(train::<f32>(&spec(Head::Pwc), &TrainConfig::default(), &[small]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (mask, _) = ball_case([8, 8, 8], 2.5);
        let case = TrainCase { id: "a".into(), input: mask.to_scalar(), target: TrainTarget::Label(mask) };
        let config = TrainConfig { learning_rate: 0.0, epochs: 4, ..TrainConfig::default() };
        let out = train::<f32>(&spec(Head::Pwc), &config, &[case]).unwrap();
        assert_eq!(out.params, Params::init(&spec(Head::Pwc), 0).unwrap());
        assert!(out.history.iter().all(|&l| l == out.history[0]));
    }

    #[test]
    fn training_is_reproducible() {
        let cases: Vec<TrainCase> = [2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(n, &r)| {
                let (mask, sdf) = ball_case([8, 8, 8], r);
                TrainCase { id: n.to_string(), input: mask.to_scalar(), target: TrainTarget::Sdf(sdf) }
            })
            .collect();
        let config = TrainConfig { epochs: 3, seed: 11, ..TrainConfig::default() };
        let a = train::<f32>(&spec(Head::Pwr), &config, &cases).unwrap();
        let b = train::<f32>(&spec(Head::Pwr), &config, &cases).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let c = train::<f32>(&spec(Head::Pwr), &TrainConfig { seed: 12, ..config }, &cases).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn pwc_overfits_one_example() {
        let (mask, _) = ball_case([16, 16, 16], 5.0);
        let case = TrainCase { id: "ball".into(), input: mask.to_scalar(), target: TrainTarget::Label(mask.clone()) };
        let s = NetSpec { input_dims: [16, 16, 16], base_channels: 8, ..spec(Head::Pwc) };
        let config = TrainConfig { epochs: 200, seed: 3, ..TrainConfig::default() };
        let out = train::<f32>(&s, &config, &[case.clone()]).unwrap();
        let input = Tensor4::new(1, [16; 3], case.input.voxels().to_vec()).unwrap();
        let probs = forward(&out.params, &input).unwrap();
        let (mut both, mut total) = (0usize, 0usize);
        for (&p, &t) in probs.channel(1).iter().zip(mask.voxels()) {
            let pred = (p > 0.5) as usize;
            both += pred & t as usize;
            total += pred + t as usize;
        }
        let dice = 2.0 * both as f64 / total as f64;
        assert!(dice > 0.95, "dice {dice}");
    }

    #[test]
    fn pwr_overfits_one_example() {
        let (mask, sdf) = ball_case([16, 16, 16], 5.0);
        let case = TrainCase { id: "ball".into(), input: mask.to_scalar(), target: TrainTarget::Sdf(sdf) };
        let s = NetSpec { input_dims: [16, 16, 16], base_channels: 8, ..spec(Head::Pwr) };
        let config = TrainConfig { epochs: 200, seed: 3, ..TrainConfig::default() };
        let out = train::<f32>(&s, &config, &[case]).unwrap();
        let (first, last) = (out.history[0], *out.history.last().unwrap());
        assert!(last < 0.05 * first, "{first} -> {last}");
    }
}
