#![allow(clippy::needless_range_loop)]

mod common;

use neumann::neumann as dynamics;
use neumann::spectral;
use neumann::NeumannState;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn conservation_along_trajectories() {
    for (label, a, s) in common::flow_fixtures() {
        let traj = dynamics::integrate(&a, &s, 10.0, 0.01, 1e-10).unwrap();
        let drift = spectral::conserved_report(&traj, &a).unwrap();
        assert!(drift["H"] <= 1e-8, "{label}: H {:e}", drift["H"]);
        for i in 1..=a.len() {
            assert!(drift[&format!("m_{i}")] <= 1e-7, "{label}: m_{i}");
        }
        for i in 1..a.len() {
            assert!(drift[&format!("c_{i}")] <= 1e-7, "{label}: c_{i}");
        }
        assert!(traj.max_residual("phi").unwrap() <= 1e-9);
        assert!(traj.max_residual("phi_dot").unwrap() <= 1e-9);
    }
}

#[test]
fn energy_identity_chain_along_trajectories() {
    for (label, a, s) in common::flow_fixtures() {
        let traj = dynamics::integrate(&a, &s, 10.0, 0.05, 1e-10).unwrap();
        for (t, st) in traj.times.iter().zip(&traj.states) {
            let sd = spectral::spectrum_from_state(&a, st).unwrap();
            let h = dynamics::hamiltonian(&a, st);
            let half_sum_am: f64 = 0.5 * a.iter().zip(&sd.m).map(|(x, m)| x * m).sum::<f64>();
            assert!((h - sd.curve.hamiltonian()).abs() <= 1e-9, "{label} t={t}");
            assert!((h - half_sum_am).abs() <= 1e-9, "{label} t={t}");
        }
    }
}

#[test]
fn finite_difference_acceleration() {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (label, a, s) in common::flow_fixtures() {
        let traj = dynamics::integrate(&a, &s, 10.0, 0.1, 1e-10).unwrap();
        for _ in 0..10 {
            let mid = &traj.states[rng.gen_range(0..traj.len())];
            let plus = dynamics::integrate(&a, mid, h, h, 1e-13).unwrap();
            let minus = dynamics::integrate(&a, &mid.reversed(), h, h, 1e-13).unwrap();
            let plus = plus.states.last().unwrap();
            let minus = minus.states.last().unwrap().reversed();
            let lagr = dynamics::lagrangian(&a, mid);
            for i in 0..a.len() {
                let fd = (plus.q[i] - 2.0 * mid.q[i] + minus.q[i]) / (h * h);
                let want = -(2.0 * lagr + a[i]) * mid.q[i];
                assert!((fd - want).abs() <= 1e-5, "{label} i={i}");
            }
        }
    }
}

#[test]
fn reversibility() {
    let (a, s) = common::random_system(3, 2);
    let fwd = dynamics::integrate(&a, &s, 5.0, 5.0, 1e-11).unwrap();
    let back = dynamics::integrate(&a, &fwd.states.last().unwrap().reversed(), 5.0, 5.0, 1e-11).unwrap();
    let end = back.states.last().unwrap().reversed();
    for i in 0..a.len() {
        assert!((end.q[i] - s.q[i]).abs() < 1e-6);
        assert!((end.qdot[i] - s.qdot[i]).abs() < 1e-6);
    }
}

#[test]
fn zero_span_returns_initial_state() {
    let (a, s) = common::e1();
    let traj = dynamics::integrate(&a, &s, 0.0, 0.1, 1e-10).unwrap();
    assert_eq!(traj.times, vec![0.0]);
    assert_eq!(traj.states[0], s);
}

#[test]
fn e1_energy_stays_put() {
    let (a, s) = common::e1();
    let traj = dynamics::integrate(&a, &s, 5.0, 0.01, 1e-10).unwrap();
    for st in &traj.states {
        assert!((dynamics::hamiltonian(&a, st) - 1.265).abs() <= 1e-8);
    }
}

fn state(n: usize) -> impl Strategy<Value = NeumannState> {
    (prop::collection::vec(-1.0..1.0f64, n), prop::collection::vec(-2.0..2.0f64, n)).prop_filter_map(
        "q too small to normalise",
        |(q, qdot)| {
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.1).then(|| {
                let mut s = NeumannState { q, qdot };
                s.project();
                s
            })
        },
    )
}

proptest! {
    #[test]
    fn vector_field_forms_agree(s in state(4)) {
        let a = [-0.5, 0.4, 1.1, 2.6];
        let (_, acc) = dynamics::vector_field(&a, &s).unwrap();
        let other = dynamics::acceleration_lagrangian_form(&a, &s);
        let scale = acc.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        for (x, y) in acc.iter().zip(&other) {
            prop_assert!((x - y).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn sum_am_is_twice_energy(s in state(3)) {
        let a = [0.3, 1.0, 2.2];
        let m = dynamics::uhlenbeck_m(&a, &s);
        let sum_am: f64 = a.iter().zip(&m).map(|(x, m)| x * m).sum();
        prop_assert!((sum_am - 2.0 * dynamics::hamiltonian(&a, &s)).abs() <= 1e-12 * (1.0 + sum_am.abs()));
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn energy_minus_lagrangian_is_potential(s in state(3)) {
        let a = [0.3, 1.0, 2.2];
        let pot: f64 = a.iter().zip(&s.q).map(|(x, q)| x * q * q).sum();
        let d = dynamics::hamiltonian(&a, &s) - dynamics::lagrangian(&a, &s);
        prop_assert!((d - pot).abs() <= 1e-13);
    }
}
