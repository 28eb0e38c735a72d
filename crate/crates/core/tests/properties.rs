use approx::assert_abs_diff_eq;
use hcsim_core::ensemble::equivariance_check;
use hcsim_core::guidance::{drift_at, Configuration};
use hcsim_core::io::{decode_hcf1, encode_hcf1};
use hcsim_core::measurement::readout;
use hcsim_core::{
    build_grid, density_of, gaussian_packet, Grid, PhysicalParams, Potential, Propagator, WaveField,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn grid() -> Grid {
    build_grid(&[[-10.0, 10.0]], &[128]).unwrap()
}

fn packet(c: f64, s: f64, k: f64) -> WaveField {
    gaussian_packet(&grid(), &[c], s, &[k]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn global_phase_leaves_density_and_drift_alone(
        c in -2.0..2.0f64, s in 0.6..1.2f64, k in -1.5..1.5f64, phase in 0.0..std::f64::consts::TAU, alpha in 0.0..2.0f64,
    ) {
        let f = packet(c, s, k);
        let rot = WaveField::linear_combination(&[(Complex64::from_polar(1.0, phase), &f)]).unwrap();
        let (a, b) = (density_of(&f).unwrap(), density_of(&rot).unwrap());
        for (x, y) in a.rho().iter().zip(b.rho()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
        let p = PhysicalParams::natural(1, alpha).unwrap();
        let d1 = drift_at(&f, &[c + 0.3], &p, 1e-12).unwrap();
        let d2 = drift_at(&rot, &[c + 0.3], &p, 1e-12).unwrap();
        assert_abs_diff_eq!(d1.b[0], d2.b[0], epsilon = 1e-9);
    }

    #[test]
    fn propagation_is_linear(
        a in -1.0..1.0f64, b in -1.0..1.0f64, c1 in -2.0..0.0f64, c2 in 0.0..2.0f64, alpha in 0.0..2.0f64,
    ) {
        let g = grid();
        let p = PhysicalParams::natural(1, alpha).unwrap();
        let prop = Propagator::new(&g, Potential::harmonic(&g, &p, 0.8, &[0.0]).unwrap(), vec![], &p).unwrap();
        let (u, v) = (packet(c1, 0.8, 0.5), packet(c2, 1.0, -0.5));
        let (ca, cb) = (Complex64::new(a, 0.3), Complex64::new(0.0, b));
        let mixed = WaveField::linear_combination(&[(ca, &u), (cb, &v)]).unwrap();
        let lhs = prop.step(&mixed, 0.01).unwrap();
        let rhs = WaveField::linear_combination(&[
            (ca, &prop.step(&u, 0.01).unwrap()),
            (cb, &prop.step(&v, 0.01).unwrap()),
        ]).unwrap();
        prop_assert!(lhs.l2_distance(&rhs) < 1e-12);
    }

    #[test]
    fn step_preserves_norm(c in -2.0..2.0f64, k in -2.0..2.0f64, dt in 0.001..0.05f64) {
        let g = grid();
        let p = PhysicalParams::natural(1, 1.0).unwrap();
        let prop = Propagator::new(&g, Potential::harmonic(&g, &p, 1.0, &[0.0]).unwrap(), vec![], &p).unwrap();
        let f = packet(c, 0.9, k);
        let next = prop.step(&f, dt).unwrap();
        assert_abs_diff_eq!(next.norm_sqr(), f.norm_sqr(), epsilon = 1e-12);
    }

    #[test]
    fn drift_is_affine_in_alpha(x in -1.5..1.5f64, a1 in 0.0..2.0f64, a2 in 0.0..2.0f64) {
        let f = WaveField::linear_combination(&[
            (Complex64::new(0.8, 0.0), &packet(-1.0, 0.7, 1.0)),
            (Complex64::new(0.0, 0.6), &packet(1.0, 0.8, -0.5)),
        ]).unwrap();
        let at = |alpha: f64| drift_at(&f, &[x], &PhysicalParams::natural(1, alpha).unwrap(), 1e-12).unwrap();
        let (d0, d1, d2) = (at(0.0), at(a1), at(a2));
        // b(alpha) = b(0) + alpha * u with one u for every alpha
        if a1 > 1e-3 && a2 > 1e-3 {
            let u1 = (d1.b[0] - d0.b[0]) / a1;
            let u2 = (d2.b[0] - d0.b[0]) / a2;
            assert_abs_diff_eq!(u1, u2, epsilon = 1e-8);
        }
        // the mean of forward and backward drift is alpha-free
        assert_abs_diff_eq!(d1.b[0] + d1.b_star[0], 2.0 * d0.b[0], epsilon = 1e-9);
    }

    #[test]
    fn hcf1_roundtrip(c in -2.0..2.0f64, s in 0.6..1.0f64, k in -3.0..3.0f64, alpha in -5.0..5.0f64, t in 0.0..10.0f64) {
        let g = grid();
        let f = gaussian_packet(&g, &[c], s, &[k]).unwrap();
        let (_, psi, _) = f.into_parts();
        let f = WaveField::new(g, psi, t).unwrap();
        let bytes = encode_hcf1(&f, alpha);
        let (back, a) = decode_hcf1(&bytes).unwrap();
        prop_assert_eq!(a, alpha);
        prop_assert_eq!(back.time(), t);
        prop_assert_eq!(encode_hcf1(&back, alpha), bytes);
    }

    #[test]
    fn hcf1_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_hcf1(&bytes);
    }

    #[test]
    fn metric_ignores_member_order(seed in 0u64..1000, n in 10usize..200) {
        let f = packet(0.0, 1.0, 0.0);
        let rho = density_of(&f).unwrap();
        let ens = hcsim_core::sample_from_density(&f, n, seed).unwrap();
        let mut pos: Vec<Configuration> = ens.positions();
        let fwd = equivariance_check(&pos, &rho, &[32]).unwrap();
        pos.reverse();
        let rev = equivariance_check(&pos, &rho, &[32]).unwrap();
        prop_assert_eq!(fwd.l1_distance, rev.l1_distance);
        prop_assert!((0.0..=2.0).contains(&fwd.l1_distance));
    }

    #[test]
    fn readout_is_antisymmetric(z in -10.0..10.0f64, shift in 0.5..6.0f64) {
        let (a, b) = (readout(shift, z), readout(shift, -z));
        match a {
            1 => prop_assert_eq!(b, 2),
            2 => prop_assert_eq!(b, 1),
            _ => prop_assert_eq!(b, 0),
        }
    }
}
