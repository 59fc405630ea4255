//! Regularity probing for matrix pencils `{E, A}`.
//!
//! `det(lambda E - A)` is a polynomial of degree at most `n`; a regular
//! pencil vanishes at no more than `n` points, so evaluating at `2n + 1`
//! random points separates regular from singular pencils with probability
//! one. Determinants are compared against the Hadamard bound of the sampled
//! matrix to stay scale-invariant.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::system::DEFAULT_VALIDATION_SEED;

/// Tolerance factor: a determinant counts as vanishing when its magnitude is
/// below `1e-12` times the Hadamard bound of the evaluated matrix.
pub const PENCIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PencilSample {
    pub lambda: f64,
    pub determinant: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub regular: bool,
    pub samples: Vec<PencilSample>,
}

impl std::fmt::Display for RegularityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} sample points)",
            if self.regular { "regular" } else { "singular" },
            self.samples.len()
        )
    }
}

/// Declares `{E, A}` singular iff `det(lambda E - A)` vanishes at all
/// `2n + 1` sampled points.
pub fn pencil_regularity(e: &DMatrix<f64>, a: &DMatrix<f64>) -> RegularityReport {
    pencil_regularity_seeded(e, a, DEFAULT_VALIDATION_SEED)
}

pub fn pencil_regularity_seeded(
    e: &DMatrix<f64>,
    a: &DMatrix<f64>,
    seed: u64,
) -> RegularityReport {
    assert_eq!(e.nrows(), e.ncols(), "pencil matrices must be square");
    assert_eq!(e.shape(), a.shape(), "pencil matrices must share a shape");
    let n = e.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(2 * n + 1);
    let mut regular = false;
    for _ in 0..(2 * n + 1) {
        let lambda: f64 = rng.random_range(-2.0..2.0);
        let m = e * lambda - a;
        let scale = hadamard_bound(&m).max(1e-300);
        let determinant = m.determinant();
        if determinant.abs() > PENCIL_TOL * scale {
            regular = true;
        }
        samples.push(PencilSample {
            lambda,
            determinant,
            scale,
        });
    }
    RegularityReport { regular, samples }
}

fn hadamard_bound(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).norm()).product()
}
