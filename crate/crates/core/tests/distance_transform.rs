use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfseg_core::sdt::{edt_brute, edt_exact, signed_distance};
use sdfseg_core::{BinaryVolume, GridMeta};

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryVolume {
    let dims = [rng.gen_range(8..=16), rng.gen_range(8..=16), rng.gen_range(8..=16)];
    let meta = GridMeta::unit(dims).unwrap();
    let density = rng.gen_range(0.01..0.6);
    loop {
        let mask = BinaryVolume::from_fn(meta, |_, _, _| rng.gen_bool(density));
        if mask.count() > 0 {
            return mask;
        }
    }
}

#[test]
fn exact_matches_brute_force_on_200_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 0..200 {
        let mask = random_mask(&mut rng);
        let fast = edt_exact(&mask).unwrap();
        let slow = edt_brute(&mask).unwrap();
        assert_eq!(fast.values(), slow.values(), "mask {n} dims {:?}", mask.meta().dims());
        assert!(fast.values().iter().all(|v| v.fract() == 0.0));
    }
}

#[test]
fn anisotropic_spacing_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mask = random_mask(&mut rng);
        let meta = GridMeta::new(mask.meta().dims(), [0.5, 0.5, 0.25], [0.0; 3]).unwrap();
        let mask = mask.with_meta(meta).unwrap();
        let fast = edt_exact(&mask).unwrap();
        let slow = edt_brute(&mask).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }
}

#[test]
fn signed_distance_thresholds_back_to_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let mask = random_mask(&mut rng);
        if mask.count() == mask.voxels().len() {
            continue;
        }
        let sdf = signed_distance(&mask).unwrap();
        let back: Vec<u8> = sdf.voxels().iter().map(|&v| (v < 0.0) as u8).collect();
        assert_eq!(back, mask.voxels());
    }
}
