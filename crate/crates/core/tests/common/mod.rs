//! Random system generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rssd::lti::eigenvalues;
use rssd::{Mat, StateSpacePlant};

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-scale..=scale))
}

/// Largest real part of the eigenvalues of `a`.
pub fn abscissa(a: &Mat) -> f64 {
    eigenvalues(a)
        .expect("eigenvalues")
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random system with state matrix shifted so every pole has real part at
/// most `-margin`.
pub fn random_stable(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    r: usize,
    margin: f64,
) -> StateSpacePlant {
    let mut a = random_mat(rng, n, n, 2.0);
    let shift = abscissa(&a) + margin + rng.random_range(0.0..1.0);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let d = random_mat(rng, r, m, 0.5);
    StateSpacePlant::new(a, random_mat(rng, n, m, 1.0), random_mat(rng, r, n, 1.0), d)
        .expect("plant")
}

/// Random system with no poles closer than `gap` to the imaginary axis.
pub fn random_plant(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    r: usize,
    gap: f64,
) -> StateSpacePlant {
    loop {
        let a = random_mat(rng, n, n, 2.0);
        let ok = eigenvalues(&a)
            .expect("eigenvalues")
            .iter()
            .all(|z| z.re.abs() > gap);
        if ok {
            return StateSpacePlant::strictly_proper(
                a,
                random_mat(rng, n, m, 1.0),
                random_mat(rng, r, n, 1.0),
            )
            .expect("plant");
        }
    }
}

pub fn siso_static(k: f64) -> StateSpacePlant {
    StateSpacePlant::static_gain(Mat::from_element(1, 1, k))
}

pub fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}
