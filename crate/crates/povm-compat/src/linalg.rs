//! Dense complex Hermitian matrix kernel for tiny dimensions (d <= 8).
//!
//! Everything the rest of the crate touches operator-wise goes through this
//! module: arithmetic, eigendecomposition, PSD membership and PSD-cone
//! projection. Dimension 2 uses the closed-form eigensolution; larger
//! dimensions use cyclic Jacobi sweeps, which always converge on Hermitian
//! input.

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar carried by every matrix entry.
pub type ComplexScalar = Complex64;

/// Largest matrix dimension the kernel accepts.
pub const MAX_DIM: usize = 8;

/// Asymmetry beyond this is rejected instead of being symmetrized away.
pub const HERMITICITY_REJECT: f64 = 1e-8;

/// Jacobi sweeps stop once the off-diagonal norm falls below this, scaled by
/// `max(1, ||A||_F)`.
const JACOBI_OFF_TOL: f64 = 1e-13;

const MAX_JACOBI_SWEEPS: usize = 64;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension {0} outside supported range 1..=8")]
    DimOutOfRange(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("entry table has {got} entries, expected {expected}")]
    BadEntryCount { got: usize, expected: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("input is not Hermitian: asymmetry {0:.3e} exceeds 1e-8")]
    NotHermitian(f64),
}

/// Small dense complex Hermitian matrix, row-major storage.
///
/// Construction symmetrizes the input via `(A + A^dag)/2` and rejects inputs
/// whose asymmetry exceeds [`HERMITICITY_REJECT`], so a value of this type is
/// Hermitian to machine precision by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub eigenvalues: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector column for `eigenvalues[k]`.
    pub vectors: Vec<Vec<Complex64>>,
}

impl HermitianMatrix {
    /// Builds a matrix from row-major entries, symmetrizing round-off away.
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self, LinalgError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LinalgError::DimOutOfRange(dim));
        }
        if entries.len() != dim * dim {
            return Err(LinalgError::BadEntryCount {
                got: entries.len(),
                expected: dim * dim,
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let mut asym: f64 = 0.0;
        let mut data = entries;
        for i in 0..dim {
            for j in i..dim {
                let a = data[i * dim + j];
                let b = data[j * dim + i];
                let sym = 0.5 * (a + b.conj());
                asym = asym.max((a - b.conj()).norm());
                data[i * dim + j] = sym;
                data[j * dim + i] = sym.conj();
            }
            // symmetrization forces the diagonal real
            data[i * dim + i] = Complex64::new(data[i * dim + i].re, 0.0);
        }
        if asym > HERMITICITY_REJECT {
            return Err(LinalgError::NotHermitian(asym));
        }
        Ok(HermitianMatrix { dim, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        Self::from_entries(
            dim,
            entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM, "dimension out of range");
        HermitianMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(HermitianMatrix {
            dim: self.dim,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_dim(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(HermitianMatrix {
            dim: self.dim,
            data,
        })
    }

    /// Scales by a real factor (a complex factor would break Hermiticity).
    pub fn scale(&self, factor: f64) -> Self {
        HermitianMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// General matrix product. The result need not be Hermitian, so it is
    /// returned as a raw row-major entry table.
    pub fn matmul(&self, other: &Self) -> Result<Vec<Complex64>, LinalgError> {
        self.check_dim(other)?;
        Ok(raw_matmul(&self.data, &other.data, self.dim))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise absolute difference to another matrix.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, LinalgError> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn frob_dist(&self, other: &Self) -> Result<f64, LinalgError> {
        let d = self.sub(other)?;
        Ok(d.frob_norm())
    }

    /// Eigendecomposition: closed form for d <= 2, cyclic Jacobi otherwise.
    pub fn eig(&self) -> Eigendecomposition {
        match self.dim {
            1 => Eigendecomposition {
                eigenvalues: vec![self.data[0].re],
                vectors: vec![vec![Complex64::new(1.0, 0.0)]],
            },
            2 => eig2(&self.data),
            _ => {
                let mut w = self.data.clone();
                let mut v = identity_raw(self.dim);
                let scale = self.frob_norm().max(1.0);
                jacobi_hermitian(&mut w, &mut v, self.dim, JACOBI_OFF_TOL * scale);
                collect_eig(&w, &v, self.dim)
            }
        }
    }

    /// Smallest eigenvalue; cheaper to read off than a full decomposition
    /// would suggest at these sizes.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().eigenvalues[0]
    }

    /// PSD membership: true iff the smallest eigenvalue is >= -tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Frobenius-nearest PSD matrix: negative eigenvalues clipped to zero.
    pub fn psd_project(&self) -> Self {
        let dec = self.eig();
        let d = self.dim;
        let mut data = vec![Complex64::new(0.0, 0.0); d * d];
        for (k, &lam) in dec.eigenvalues.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let v = &dec.vectors[k];
            for i in 0..d {
                for j in 0..d {
                    data[i * d + j] += lam * v[i] * v[j].conj();
                }
            }
        }
        // projection of a Hermitian matrix is Hermitian; symmetrization only
        // mops up round-off
        HermitianMatrix::from_entries(d, data).expect("projection preserves Hermiticity")
    }

    fn check_dim(&self, other: &Self) -> Result<(), LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimMismatch(self.dim, other.dim));
        }
        Ok(())
    }
}

/// Real part of the Hilbert-Schmidt inner product `Tr(A^dag B)`.
pub fn frob_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64, LinalgError> {
    if a.dim != b.dim {
        return Err(LinalgError::DimMismatch(a.dim, b.dim));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x.conj() * y).re)
        .sum())
}

/// Frobenius norm of the commutator `AB - BA`; zero exactly when the two
/// operators commute.
pub fn commutator_norm(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64, LinalgError> {
    if a.dim != b.dim {
        return Err(LinalgError::DimMismatch(a.dim, b.dim));
    }
    let ab = raw_matmul(&a.data, &b.data, a.dim);
    let ba = raw_matmul(&b.data, &a.data, a.dim);
    Ok(ab
        .iter()
        .zip(&ba)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

pub(crate) fn raw_matmul(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

pub(crate) fn identity_raw(d: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        v[i * d + i] = Complex64::new(1.0, 0.0);
    }
    v
}

/// Closed-form eigensolution of a 2x2 Hermitian matrix.
fn eig2(w: &[Complex64]) -> Eigendecomposition {
    let a = w[0].re;
    let c = w[3].re;
    let b = w[1];
    let mid = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
    let lo = mid - disc;
    let hi = mid + disc;
    let scale = (a.abs() + c.abs() + b.norm()).max(1.0);
    if disc <= 1e-15 * scale {
        // (near-)degenerate: any orthonormal basis works
        return Eigendecomposition {
            eigenvalues: vec![lo, hi],
            vectors: vec![
                vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            ],
        };
    }
    let vector_for = |lam: f64| -> Vec<Complex64> {
        // two algebraically equivalent forms; pick the better conditioned one
        let cand1 = [b, Complex64::new(lam - a, 0.0)];
        let cand2 = [Complex64::new(lam - c, 0.0), b.conj()];
        let n1 = cand1[0].norm_sqr() + cand1[1].norm_sqr();
        let n2 = cand2[0].norm_sqr() + cand2[1].norm_sqr();
        let v = if n1 >= n2 { cand1 } else { cand2 };
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        vec![v[0] / n, v[1] / n]
    };
    let v0 = vector_for(lo);
    // the orthogonal complement of a 2-vector is exact and keeps V unitary
    let v1 = vec![-v0[1].conj(), v0[0].conj()];
    Eigendecomposition {
        eigenvalues: vec![lo, hi],
        vectors: vec![v0, v1],
    }
}

/// Cyclic Jacobi sweeps on a Hermitian matrix held in `w`, accumulating the
/// unitary into `v`. Runs until the off-diagonal Frobenius norm drops below
/// `off_tol`. Generic over `d`; callers outside the public type use it for
/// small real symmetric systems as well.
pub(crate) fn jacobi_hermitian(w: &mut [Complex64], v: &mut [Complex64], d: usize, off_tol: f64) {
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += 2.0 * w[i * d + j].norm_sqr();
            }
        }
        if off.sqrt() <= off_tol {
            break;
        }
        for p in 0..d.saturating_sub(1) {
            for q in (p + 1)..d {
                let apq = w[p * d + q];
                let r = apq.norm();
                if r < 1e-300 {
                    continue;
                }
                let u = apq / r; // phase of the pivot
                let app = w[p * d + p].re;
                let aqq = w[q * d + q].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = t * cth;
                let uc = u.conj();
                // W <- J^dag W J with J mixing columns p and q
                for k in 0..d {
                    let wkp = w[k * d + p];
                    let wkq = w[k * d + q];
                    w[k * d + p] = wkp * cth - wkq * (sth * uc);
                    w[k * d + q] = wkp * sth + wkq * (cth * uc);
                }
                for k in 0..d {
                    let wpk = w[p * d + k];
                    let wqk = w[q * d + k];
                    w[p * d + k] = wpk * cth - wqk * (sth * u);
                    w[q * d + k] = wpk * sth + wqk * (cth * u);
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = vkp * cth - vkq * (sth * uc);
                    v[k * d + q] = vkp * sth + vkq * (cth * uc);
                }
                w[p * d + q] = Complex64::new(0.0, 0.0);
                w[q * d + p] = Complex64::new(0.0, 0.0);
                w[p * d + p] = Complex64::new(w[p * d + p].re, 0.0);
                w[q * d + q] = Complex64::new(w[q * d + q].re, 0.0);
            }
        }
    }
}

fn collect_eig(w: &[Complex64], v: &[Complex64], d: usize) -> Eigendecomposition {
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| w[i * d + i].re.partial_cmp(&w[j * d + j].re).unwrap());
    let eigenvalues = order.iter().map(|&i| w[i * d + i].re).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..d).map(|row| v[row * d + col]).collect())
        .collect();
    Eigendecomposition {
        eigenvalues,
        vectors,
    }
}
