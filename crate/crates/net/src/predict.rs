use sdfseg_core::resample::{resample_nearest, resample_trilinear};
use sdfseg_core::ScalarVolume;

use crate::net::{forward, Head, Params};
use crate::tensor::{Real, Tensor4};
use crate::{NetError, Result};

/// Full-resolution prediction: downsample the input trilinearly to the
/// network grid, run the network, and bring one channel back up. `Pwc`
/// returns the foreground probability upsampled by nearest neighbour, `Pwr`
/// the regressed distance (in world units) upsampled trilinearly.
pub fn predict<T: Real>(params: &Params<T>, input: &ScalarVolume) -> Result<ScalarVolume> {
    let spec = params.spec();
    let full = input.meta().dims();
    if (0..3).any(|a| spec.input_dims[a] > full[a]) {
        return Err(NetError::Shape {
            what: "prediction input",
            expected: format!("dims at least {:?}", spec.input_dims),
            found: format!("{full:?}"),
        });
    }
    let coarse = resample_trilinear(input, spec.input_dims)?;
    let x = Tensor4::new(1, spec.input_dims, coarse.voxels().iter().map(|&v| T::of(v as f64)).collect())?;
    let y = forward(params, &x)?;
    let (channel, scale) = match spec.head {
        Head::Pwc => (1, 1.0),
        Head::Pwr => (0, params.output_scale()),
    };
    let values = y.channel(channel).iter().map(|v| (v.f64() * scale) as f32).collect();
    let field = ScalarVolume::new(*coarse.meta(), values)?;
    upsample_output(spec.head, &field, input)
}

/// Brings a network-grid field back to the grid of `like`, by the head's rule.
pub fn upsample_output(head: Head, field: &ScalarVolume, like: &ScalarVolume) -> Result<ScalarVolume> {
    let target = like.meta().dims();
    let up = match head {
        Head::Pwc => resample_nearest(field, target)?,
        Head::Pwr => resample_trilinear(field, target)?,
    };
    Ok(up.with_meta(*like.meta())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetSpec;
    use sdfseg_core::resample::resampled_meta;
    use sdfseg_core::volgrid::{threshold, Sense};
    use sdfseg_core::GridMeta;

    #[test]
    fn pwr_upsampling_is_trilinear() {
        let full = ScalarVolume::filled(GridMeta::new([8, 8, 8], [0.5, 0.5, 0.5], [1.0, 2.0, 3.0]).unwrap(), 0.0);
        let coarse_meta = resampled_meta(full.meta(), [4, 4, 4]).unwrap();
        let coarse = ScalarVolume::from_fn(coarse_meta, |i, j, k| (i + 2 * j) as f32 - k as f32 * 0.5).unwrap();
        let up = upsample_output(Head::Pwr, &coarse, &full).unwrap();
        assert_eq!(up, resample_trilinear(&coarse, [8, 8, 8]).unwrap().with_meta(*full.meta()).unwrap());
        assert_eq!(up.meta(), full.meta());
    }

    #[test]
    fn uniform_pwc_output_thresholds_to_nothing() {
        let full = ScalarVolume::filled(GridMeta::unit([8, 8, 8]).unwrap(), 1.0);
        let spec = NetSpec { levels: 2, base_channels: 2, input_dims: [4, 4, 4], head: Head::Pwc };
        let mut p = Params::<f32>::init(&spec, 0).unwrap();
        p.zero_head();
        let prob = predict(&p, &full).unwrap();
        assert!(prob.voxels().iter().all(|&v| v == 0.5));
        assert_eq!(threshold(&prob, 0.5, Sense::Above).count(), 0);
    }

    #[test]
    fn output_has_input_grid() {
        let meta = GridMeta::new([16, 8, 12], [0.5, 0.5, 0.25], [0.0, 0.0, 0.0]).unwrap();
        let input = ScalarVolume::from_fn(meta, |i, j, k| ((i + j + k) % 2) as f32).unwrap();
        for head in [Head::Pwc, Head::Pwr] {
            let spec = NetSpec { levels: 2, base_channels: 2, input_dims: [8, 4, 6], head };
            let p = Params::<f32>::init(&spec, 1).unwrap();
            let out = predict(&p, &input).unwrap();
            assert_eq!(out.meta(), &meta);
            if head == Head::Pwc {
                assert!(out.voxels().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
        let spec = NetSpec { levels: 1, base_channels: 2, input_dims: [32, 4, 6], head: Head::Pwr };
        assert!(predict(&Params::<f32>::init(&spec, 1).unwrap(), &input).is_err());
    }
}
