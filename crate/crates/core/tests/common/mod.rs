#![allow(dead_code)]

use neumann::spectral;
use neumann::NeumannState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const E1_A: [f64; 2] = [1.0, 3.0];

pub fn e1() -> (Vec<f64>, NeumannState) {
    (
        E1_A.to_vec(),
        NeumannState::new(vec![0.6, 0.8], vec![-0.4, 0.3]).unwrap(),
    )
}

/// Increasing couplings with gaps in `[0.4, 1.6)`.
pub fn random_couplings<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(n);
    let mut x = rng.gen_range(-1.0..1.0);
    for _ in 0..n {
        a.push(x);
        x += rng.gen_range(0.4..1.6);
    }
    a
}

/// A random system of genus `g` whose spectrum is interlaced with every
/// `m_i` comfortably positive.
pub fn random_system(seed: u64, g: usize) -> (Vec<f64>, NeumannState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = random_couplings(&mut rng, g + 1);
        for _ in 0..200 {
            let s = NeumannState::random(g + 1, rng.gen_range(0.3..1.5), &mut rng);
            if let Ok(sd) = spectral::spectrum_from_state(&a, &s) {
                if sd.curve.is_interlaced() && sd.m.iter().all(|&m| m > 0.02) {
                    return (a, s);
                }
            }
        }
    }
}

/// E1 plus seeded random systems for genus 1, 2 and 3.
pub fn flow_fixtures() -> Vec<(String, Vec<f64>, NeumannState)> {
    let mut out = vec![{
        let (a, s) = e1();
        ("E1".to_string(), a, s)
    }];
    for g in 1..=3 {
        for k in 0..2 {
            let seed = 100 * g as u64 + k;
            let (a, s) = random_system(seed, g);
            out.push((format!("g{g}#{k}"), a, s));
        }
    }
    out
}
