//! Seeded random generators for matrices, bases, and measurement families.
//!
//! Everything here is deterministic given the seed; test suites and the CLI
//! lean on that for reproducibility.

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::linalg::HermitianMatrix;
use crate::povm::Povm;

pub fn seeded_rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn gaussian(rng: &mut StdRng) -> f64 {
    // Box-Muller; avoids pulling in rand_distr for one distribution
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random Hermitian matrix with Gaussian entries of the given scale.
pub fn random_hermitian(dim: usize, scale: f64, rng: &mut StdRng) -> HermitianMatrix {
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = Complex64::new(scale * gaussian(rng), 0.0);
        for j in (i + 1)..dim {
            let z = Complex64::new(scale * gaussian(rng), scale * gaussian(rng));
            entries[i * dim + j] = z;
            entries[j * dim + i] = z.conj();
        }
    }
    HermitianMatrix::from_entries(dim, entries).expect("random Hermitian is well formed")
}

/// Uniform point on the unit sphere.
pub fn random_unit_vector(rng: &mut StdRng) -> [f64; 3] {
    loop {
        let v = [gaussian(rng), gaussian(rng), gaussian(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Haar-ish random unitary: complex Gaussian matrix, modified Gram-Schmidt.
/// Returned as column vectors.
pub fn random_unitary_columns(dim: usize, rng: &mut StdRng) -> Vec<Vec<Complex64>> {
    let mut cols: Vec<Vec<Complex64>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
                .collect()
        })
        .collect();
    for k in 0..dim {
        for prev in 0..k {
            let dot: Complex64 = (0..dim).map(|i| cols[prev][i].conj() * cols[k][i]).sum();
            for i in 0..dim {
                let correction = dot * cols[prev][i];
                cols[k][i] -= correction;
            }
        }
        let norm = cols[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..dim {
            cols[k][i] /= norm;
        }
    }
    cols
}

fn projector_onto(cols: &[Vec<Complex64>], members: &[usize], dim: usize) -> HermitianMatrix {
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for &c in members {
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] += cols[c][i] * cols[c][j].conj();
            }
        }
    }
    HermitianMatrix::from_entries(dim, data).expect("projector is Hermitian")
}

/// Random PVM: a random orthonormal basis partitioned into rank blocks.
pub fn random_pvm(dim: usize, rng: &mut StdRng) -> Povm {
    let cols = random_unitary_columns(dim, rng);
    random_pvm_in_basis(&cols, rng)
}

/// Random PVM over a fixed orthonormal basis (for building commuting families).
pub fn random_pvm_in_basis(cols: &[Vec<Complex64>], rng: &mut StdRng) -> Povm {
    let dim = cols.len();
    // partition 0..dim into 2..=dim nonempty blocks
    let blocks = rng.gen_range(2..=dim);
    let mut assignment: Vec<usize> = (0..dim).map(|i| i % blocks).collect();
    for i in (1..dim).rev() {
        let j = rng.gen_range(0..=i);
        assignment.swap(i, j);
    }
    let effects = (0..blocks)
        .map(|b| {
            let members: Vec<usize> = (0..dim).filter(|&i| assignment[i] == b).collect();
            (format!("e{b}"), projector_onto(cols, &members, dim))
        })
        .collect();
    Povm::new(dim, effects).expect("projector blocks form a PVM")
}

/// Random POVM diagonal in a fixed basis: effects `U diag(w_k) U^dag` where
/// the weights form a stochastic table over outcomes.
pub fn random_povm_in_basis(cols: &[Vec<Complex64>], outcomes: usize, rng: &mut StdRng) -> Povm {
    let dim = cols.len();
    // per basis column, a random point in the probability simplex
    let mut weights = vec![vec![0.0f64; dim]; outcomes];
    for pos in 0..dim {
        let mut total = 0.0;
        let mut raw = vec![0.0; outcomes];
        for w in raw.iter_mut() {
            *w = -(rng.gen_range(f64::MIN_POSITIVE..1.0f64)).ln();
            total += *w;
        }
        for (k, w) in raw.iter().enumerate() {
            weights[k][pos] = w / total;
        }
    }
    let effects = (0..outcomes)
        .map(|k| {
            let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
            for pos in 0..dim {
                let w = weights[k][pos];
                for i in 0..dim {
                    for j in 0..dim {
                        data[i * dim + j] += w * cols[pos][i] * cols[pos][j].conj();
                    }
                }
            }
            (
                format!("o{k}"),
                HermitianMatrix::from_entries(dim, data).expect("weighted projector sum"),
            )
        })
        .collect();
    Povm::new(dim, effects).expect("stochastic weights form a POVM")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;

    #[test]
    fn random_pvm_is_valid_and_sharp() {
        let tol = Tolerances::default();
        let mut rng = seeded_rng(11);
        for &dim in &[2usize, 3, 4] {
            for _ in 0..20 {
                let p = random_pvm(dim, &mut rng);
                assert!(p.validate(&tol).passed);
                assert!(p.is_pvm(tol.pvm));
            }
        }
    }

    #[test]
    fn random_povm_is_valid() {
        let tol = Tolerances::default();
        let mut rng = seeded_rng(13);
        for &dim in &[2usize, 3, 4] {
            let cols = random_unitary_columns(dim, &mut rng);
            let p = random_povm_in_basis(&cols, 3, &mut rng);
            assert!(p.validate(&tol).passed);
        }
    }

    #[test]
    fn unitary_columns_orthonormal() {
        let mut rng = seeded_rng(17);
        let cols = random_unitary_columns(4, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: Complex64 = (0..4).map(|i| cols[a][i].conj() * cols[b][i]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((dot - target).norm() < 1e-12);
            }
        }
    }
}
