//! Randomized invariants across modules.

use cmv_core::analysis::{
    coefficient_identities, equivalence_check, log_coeffs, moments, spectral_measure, xi_of_operator,
    xi_of_operator_with_sites, ArcSpec,
};
use cmv_core::herglotz::cayley_value;
use cmv_core::linalg::{identity, min_hermitian_eigenvalue, operator_norm, re_part, try_inverse, unitarity_deviation};
use cmv_core::verblunsky::{random_contraction, random_unitary, SiteBlocks};
use cmv_core::weyl::{
    m11_from_pair, riccati_residual_minus, riccati_residual_plus, riccati_step_down, riccati_step_up_minus,
    schur_pair,
};
use cmv_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn window(seed: u64, m: usize, lo: i64, len: usize) -> VerblunskySequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..len).map(|_| random_contraction(&mut rng, m, 0.85)).collect();
    VerblunskySequence::from_window(m, lo, w).unwrap()
}

fn disk_point(rng: &mut ChaCha8Rng, rmax: f64) -> C64 {
    C64::from_polar(rmax * rng.random::<f64>().sqrt(), rng.random::<f64>() * std::f64::consts::TAU)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cayley_round_trip(seed in any::<u64>(), m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_contraction(&mut rng, m, 0.95);
        let f = cayley_value(&phi, false).unwrap();
        prop_assert!(min_hermitian_eigenvalue(&re_part(&f)) > -1e-12);
        let id = identity(m);
        let back = (&f - &id) * try_inverse(&(&f + &id)).unwrap();
        prop_assert!(operator_norm(&(back - &phi)) < 1e-12);
    }

    #[test]
    fn site_blocks_intertwine(seed in any::<u64>(), m in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_contraction(&mut rng, m, 0.97);
        let s = SiteBlocks::new(&a, 0).unwrap();
        let ad = a.adjoint();
        prop_assert!(operator_norm(&(&s.rho_tilde * &a - &a * &s.rho)) < 1e-11);
        prop_assert!(operator_norm(&(&ad * &s.rho_tilde - &s.rho * &ad)) < 1e-11);
        prop_assert!(operator_norm(&(&s.rho * &s.rho - (identity(m) - &ad * &a))) < 1e-12);
    }

    #[test]
    fn truncation_factors_are_unitary(seed in any::<u64>(), m in 1usize..4, len in 1usize..16, lo in -8i64..8) {
        let seq = window(seed, m, lo, len);
        let t = CmvTruncation::build(&seq, lo - 3, lo + len as i64 + 3).unwrap();
        for op in [Op::U, Op::V, Op::W] {
            prop_assert!(unitarity_deviation(&t.dense(op)) < 1e-10);
        }
        prop_assert!(operator_norm(&(t.dense(Op::UAdj) - t.dense(Op::U).adjoint())) < 1e-13);
    }

    #[test]
    fn m11_is_caratheodory(seed in any::<u64>(), m in 1usize..4) {
        let seq = window(seed, m, -6, 12);
        // wide enough that |z|^N wrap-around terms vanish at |z| = 0.9
        let t = CmvTruncation::build(&seq, -401, 400).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        prop_assert!(operator_norm(&(t.m11(c(0.0, 0.0), 0).unwrap() - identity(m))) < 1e-13);
        for _ in 0..8 {
            let z = disk_point(&mut rng, 0.9);
            let f = t.m11(z, 0).unwrap();
            prop_assert!(min_hermitian_eigenvalue(&re_part(&f)) > -1e-10);
            let pair = schur_pair(&seq, z, 0, &SchurOptions::default()).unwrap();
            prop_assert!(operator_norm(&(m11_from_pair(&pair).unwrap() - &f)) < 1e-8);
        }
    }

    #[test]
    fn scalar_log_series(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<C64> = (0..8).map(|_| disk_point(&mut rng, 0.5)).collect();
        // n g_n = n a_n − Σ_{k<n} k g_k a_{n−k}
        let mut g = vec![c(0.0, 0.0); 8];
        for n in 1..=8 {
            let mut s = a[n - 1] * n as f64;
            for k in 1..n {
                s -= g[k - 1] * a[n - k - 1] * k as f64;
            }
            g[n - 1] = s / n as f64;
        }
        let l = log_coeffs(&a.iter().map(|&x| CMatrix::from_element(1, 1, x)).collect::<Vec<_>>());
        for n in 0..8 {
            prop_assert!((l[n][(0, 0)] - g[n]).norm() < 1e-13);
        }
    }

    #[test]
    fn moments_from_spectral_measure(seed in any::<u64>(), m in 1usize..3, k0 in -3i64..3) {
        let seq = window(seed, m, -8, 16);
        let t = CmvTruncation::build(&seq, -15, 16).unwrap();
        let sd = spectral_measure(&t, k0, &Tolerances::default()).unwrap();
        prop_assert!(operator_norm(&(sd.total_mass() - identity(m))) < 1e-10);
        let ms = moments(&t, k0, 4).unwrap();
        prop_assert!(ms.closed_form_deviation < 1e-12);
        for p in 1..=4 {
            // M_p = 2 Δ (U*)^p Δ
            prop_assert!(operator_norm(&(sd.moment(p as i64) * c(2.0, 0.0) - &ms.values[p - 1])) < 1e-10);
        }
    }

    #[test]
    fn riccati_steps_solve_their_equations(seed in any::<u64>(), m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_contraction(&mut rng, m, 0.9);
        let phi = random_contraction(&mut rng, m, 0.9);
        let z = disk_point(&mut rng, 0.95);
        let down = riccati_step_down(&phi, &a, z).unwrap();
        prop_assert!(riccati_residual_plus(&phi, &down, &a, z).unwrap() < 1e-10);
        let up = riccati_step_up_minus(&phi, &a, z).unwrap();
        prop_assert!(riccati_residual_minus(&up, &phi, &a, z).unwrap() < 1e-10);
    }

    #[test]
    fn borg_identities_any_arc(t0 in 0.0f64..6.28, len in 0.2f64..6.0, seed in any::<u64>(), m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arc = ArcSpec::new(t0, t0 + len).unwrap();
        let seq = borg_sequence(arc.theta0, arc.theta1, &random_unitary(&mut rng, m)).unwrap();
        prop_assert!(coefficient_identities(&seq, &arc, -30, 30).unwrap().max_deviation() < 1e-12);
        prop_assert!(seq.validate(-10..=10).ok);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), m in 1usize..4, len in 0usize..6) {
        let seq = window(seed, m, -2, len);
        let back = VerblunskySequence::from_json(&seq.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, seq);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conjugation_keeps_spectrum(seed in any::<u64>(), m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = window(seed, m, -10, 20);
        let (g1, g2) = (random_unitary(&mut rng, m), random_unitary(&mut rng, m));
        prop_assert!(equivalence_check(&seq, &g1, &g2, 32, 0).unwrap().max_deviation < 1e-10);
    }
}

#[test]
fn borg_xi_does_not_depend_on_site() {
    let arc = ArcSpec::new(0.7, 4.1).unwrap();
    let seq = borg_sequence(arc.theta0, arc.theta1, &identity(1)).unwrap();
    let grid = ThetaGrid::new(1024);
    let sched = RadialSchedule::single(1.0 - 1e-3);
    let a = xi_of_operator(&seq, 0, grid, &sched).unwrap();
    let b = xi_of_operator(&seq, 2, grid, &sched).unwrap();
    let mut worst = 0.0f64;
    for j in 0..grid.n {
        if arc.distance_to_jumps(grid.theta(j)) >= 0.05 {
            worst = worst.max(operator_norm(&(&a.values[j] - &b.values[j])));
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn xi_is_normalized_for_compact_perturbations() {
    let seq = window(17, 2, -6, 12);
    let xi = xi_of_operator_with_sites(&seq, 0, ThetaGrid::new(512), &RadialSchedule::single(0.995), 4096).unwrap();
    assert!(operator_norm(&xi.mean()) < 1e-2);
    assert!(xi.values.iter().map(operator_norm).fold(0.0, f64::max) > 1e-2);
    assert!(xi.bound_excess() < 1e-9);
}
