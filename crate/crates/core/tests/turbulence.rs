mod common;

use proptest::prelude::*;
use skysim::optics::Grid2D;
use skysim::turbulence::{
    generate_screen, kolmogorov_psd, kolmogorov_structure, omega_to_fried, structure_function, PhaseScreen,
    TurbulenceSpec,
};

#[test]
fn psd_integral_reproduces_structure_law() {
    let r0 = 1e-3;
    for r in [2e-4, 1e-3, 5e-3] {
        let d = common::structure_from_psd(r, r0);
        let law = kolmogorov_structure(r, r0);
        // The rounded 0.023 prefactor integrates to 6.915 rather than 6.88.
        assert!((d / law - 1.0).abs() < 1e-2, "r = {r}: {d} vs {law}");
    }
}

#[test]
fn structure_function_follows_kolmogorov() {
    let grid = Grid2D::<f64>::new(128, 0.032).unwrap();
    let r0 = 2e-3;
    let screens: Vec<_> = (0..120).map(|k| generate_screen(&TurbulenceSpec::new(r0, grid, 100 + k)).unwrap()).collect();
    let seps = [5e-4, 1e-3, 2e-3, 4e-3];
    let d = structure_function(&screens, &seps).unwrap();
    for (r, v) in seps.iter().zip(&d) {
        let ratio = v / common::structure_from_psd(*r, r0);
        assert!((ratio - 1.0).abs() < 0.15, "r = {r}: ratio {ratio}");
    }
}

#[test]
fn subharmonics_restore_low_order_power() {
    let grid = Grid2D::<f64>::new(64, 0.016).unwrap();
    let r0 = 1e-3;
    let pool = |n_sub: u32| -> f64 {
        let screens: Vec<_> = (0..80)
            .map(|k| generate_screen(&TurbulenceSpec::new(r0, grid, k).with_subharmonics(n_sub)).unwrap())
            .collect();
        structure_function(&screens, &[4e-3]).unwrap()[0]
    };
    let law = common::structure_from_psd(4e-3, r0);
    let (without, with) = (pool(0), pool(5));
    assert!(without < with);
    assert!((with / law - 1.0).abs() < (without / law - 1.0).abs());
}

#[test]
fn structure_function_preconditions() {
    let grid = Grid2D::<f64>::new(32, 0.032).unwrap();
    let few: Vec<_> = (0..10).map(|k| generate_screen(&TurbulenceSpec::new(4e-3, grid, k)).unwrap()).collect();
    assert!(structure_function(&few, &[1e-3]).is_err());
    assert!(omega_to_fried(0.0, 0, 1e-3).is_err());
    assert!(kolmogorov_psd(1.0, -1.0).is_err());
}

#[test]
fn fixed_seed_scales_with_fried_parameter() {
    let grid = Grid2D::<f64>::new(64, 0.016).unwrap();
    let a = generate_screen(&TurbulenceSpec::new(1e-3, grid, 5)).unwrap();
    let b = generate_screen(&TurbulenceSpec::new(4e-3, grid, 5)).unwrap();
    let s = 4f64.powf(-5.0 / 6.0);
    let scale = a.phase.iter().map(|p| p.abs()).fold(0.0, f64::max);
    let worst = a.phase.iter().zip(&b.phase).map(|(x, y)| (x * s - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-12 * scale, "{worst}");
}

#[test]
fn skyp_header_layout() {
    let grid = Grid2D::<f64>::new(16, 0.016).unwrap();
    let s = generate_screen(&TurbulenceSpec::new(3e-3, grid, 42).with_subharmonics(2)).unwrap();
    let mut buf = Vec::new();
    s.write_skyp(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"SKYP");
    assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 16);
    assert_eq!(f64::from_le_bytes(buf[10..18].try_into().unwrap()), 1e-3);
    assert_eq!(f64::from_le_bytes(buf[18..26].try_into().unwrap()), 3e-3);
    assert_eq!(u64::from_le_bytes(buf[26..34].try_into().unwrap()), 42);
    assert_eq!(u16::from_le_bytes(buf[34..36].try_into().unwrap()), 2);
    assert_eq!(buf.len(), 36 + 16 * 16 * 8);
    assert_eq!(f64::from_le_bytes(buf[36..44].try_into().unwrap()), s.phase[0]);
}

#[test]
fn single_precision_screens_track_double() {
    let g64 = Grid2D::new(64, 0.016).unwrap();
    let g32 = Grid2D::<f32>::new(64, 0.016).unwrap();
    let a = generate_screen(&TurbulenceSpec::new(1e-3, g64, 9)).unwrap();
    let b = generate_screen(&TurbulenceSpec::new(1e-3f32, g32, 9)).unwrap();
    let worst = a.phase.iter().zip(&b.phase).map(|(x, y)| (x - *y as f64).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn skyp_round_trip(seed in any::<u64>(), r0 in 2.5e-3f64..2e-2, n_sub in 0u32..6) {
        let grid = Grid2D::<f64>::new(32, 0.032).unwrap();
        let s = generate_screen(&TurbulenceSpec::new(r0, grid, seed).with_subharmonics(n_sub)).unwrap();
        let mut buf = Vec::new();
        s.write_skyp(&mut buf).unwrap();
        let back = PhaseScreen::<f64>::read_skyp(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.hash(), s.hash());
    }

    #[test]
    fn screens_are_seeded_and_zero_mean(seed in any::<u64>()) {
        let grid = Grid2D::<f64>::new(32, 0.032).unwrap();
        let spec = TurbulenceSpec::new(4e-3, grid, seed);
        let a = generate_screen(&spec).unwrap();
        prop_assert_eq!(&a, &generate_screen(&spec).unwrap());
        prop_assert_ne!(a.phase.clone(), generate_screen(&spec.with_seed(seed.wrapping_add(1))).unwrap().phase);
        prop_assert!(a.mean().abs() < 1e-10);
    }

    #[test]
    fn psd_scaling(f in 1.0f64..1e4, r0 in 1e-4f64..1e-1) {
        let p = kolmogorov_psd(f, r0).unwrap();
        prop_assert!((kolmogorov_psd(2.0 * f, r0).unwrap() / p - 2f64.powf(-11.0 / 3.0)).abs() < 1e-9);
        prop_assert!((kolmogorov_psd(f, 2.0 * r0).unwrap() / p - 2f64.powf(-5.0 / 3.0)).abs() < 1e-9);
    }
}
