use num_complex::Complex64;
use proptest::prelude::*;
use skysim::optics::{lg_field, oam_spectrum, ComplexField, Grid2D, LgMode, OamAnalyzer};

fn grid() -> Grid2D<f64> {
    Grid2D::new(256, 0.016).unwrap()
}

/// Closed-form LG amplitude written out independently of the library.
fn lg_oracle(ell: i32, w: f64, x: f64, y: f64) -> Complex64 {
    let l = ell.unsigned_abs() as i32;
    let fact: f64 = (1..=l).map(f64::from).product();
    let r = x.hypot(y);
    let amp =
        (2.0 / (std::f64::consts::PI * fact)).sqrt() / w * (2f64.sqrt() * r / w).powi(l) * (-(r * r) / (w * w)).exp();
    Complex64::from_polar(amp, ell as f64 * y.atan2(x))
}

#[test]
fn amplitude_matches_closed_form() {
    for ell in [-3, -1, 0, 2, 5] {
        let m = LgMode::new(ell, 1e-3).unwrap();
        for (x, y) in [(3e-4, -2e-4), (-1e-3, 5e-4), (2e-3, 2e-3)] {
            let d = m.amplitude(x, y) - lg_oracle(ell, 1e-3, x, y);
            assert!(d.norm() < 1e-9 * lg_oracle(ell, 1e-3, x, y).norm().max(1.0));
        }
    }
}

#[test]
fn sampled_modes_are_orthonormal() {
    let g = grid();
    let fields: Vec<_> = (-3..=3).map(|l| lg_field(&LgMode::new(l, 1e-3).unwrap(), &g).unwrap()).collect();
    for (i, a) in fields.iter().enumerate() {
        for (j, b) in fields.iter().enumerate() {
            let ip = a.inner(b).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).norm() < 1e-9, "({i}, {j}) -> {ip}");
        }
    }
}

#[test]
fn pure_mode_has_delta_spectrum() {
    let g = grid();
    for ell in [-4, 0, 3] {
        let f = lg_field(&LgMode::new(ell, 1e-3).unwrap(), &g).unwrap();
        let s = oam_spectrum(&f, 1e-3, -6, 6).unwrap();
        assert!((s.get(ell).unwrap() - 1.0).abs() < 1e-3);
        assert!((s.total() - 1.0).abs() < 1e-3);
        assert!((s.mean_ell() - ell as f64).abs() < 1e-3);
        assert!(s.ell_variance() < 1e-3);
    }
}

#[test]
fn undersampled_modes_are_rejected() {
    let coarse = Grid2D::new(32, 0.016).unwrap();
    assert!(lg_field(&LgMode::new(0, 1e-3).unwrap(), &coarse).is_err());
    assert!(lg_field(&LgMode::new(0, 6e-3).unwrap(), &grid()).is_err());
}

#[test]
fn f32_fields_agree_with_f64() {
    let g64 = grid();
    let g32 = Grid2D::<f32>::new(256, 0.016).unwrap();
    let a = lg_field(&LgMode::new(2, 1e-3).unwrap(), &g64).unwrap();
    let b = lg_field(&LgMode::new(2, 1e-3f32).unwrap(), &g32).unwrap();
    let worst = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| ((x.re - y.re as f64).abs()).max((x.im - y.im as f64).abs()))
        .fold(0.0, f64::max);
    let peak = a.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(worst < 1e-5 * peak);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn superposition_spectrum_recovers_weights(weights in prop::collection::vec((0.0f64..1.0, -3.1f64..3.1), 5)) {
        prop_assume!(weights.iter().map(|(a, _)| a * a).sum::<f64>() > 0.05);
        let g = grid();
        let ells = [-2, -1, 0, 1, 3];
        let fields: Vec<_> = ells.iter().map(|&l| lg_field(&LgMode::new(l, 1e-3).unwrap(), &g).unwrap()).collect();
        let terms: Vec<_> = weights.iter().zip(&fields).map(|((a, p), f)| (Complex64::from_polar(*a, *p), f)).collect();
        let f = ComplexField::superpose(&terms).unwrap();
        let norm: f64 = weights.iter().map(|(a, _)| a * a).sum();
        let analyzer = OamAnalyzer::new(g, 1e-3, -5, 5).unwrap();
        let s = analyzer.analyze(&f).unwrap();
        for (&l, (a, _)) in ells.iter().zip(&weights) {
            prop_assert!((s.get(l).unwrap() - a * a / norm).abs() < 2e-3);
            prop_assert!((s.lg0_power[(l + 5) as usize] - a * a / norm).abs() < 2e-3);
        }
        prop_assert!(s.get(2).unwrap() < 1e-3);
    }

    #[test]
    fn skyf_round_trip(ell in -3i32..=3, n in prop::sample::select(vec![128usize, 160, 192])) {
        let g = Grid2D::new(n, 0.016).unwrap();
        let f = lg_field(&LgMode::new(ell, 2e-3).unwrap(), &g).unwrap();
        let mut buf = Vec::new();
        f.write_skyf(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 32 + n * n * 16);
        let back = ComplexField::<f64>::read_skyf(buf.as_slice()).unwrap();
        prop_assert_eq!(back, f);
    }
}
