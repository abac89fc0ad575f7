//! Dense complex matrix arithmetic, structure predicates and the small
//! eigendecompositions everything else consumes.
//!
//! All matrices are `DMatrix<Complex<f64>>`; block sizes stay small (L <= 32)
//! so plain dense algorithms are the right tool.

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Default tolerance for structure predicates, scaled by the matrix max-norm.
pub const DEFAULT_TOL: f64 = 1e-10;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn ci(im: f64) -> C64 {
    C64::new(0.0, im)
}

/// Entrywise max modulus.
pub fn max_norm(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn from_real(a: &RMatrix) -> CMatrix {
    a.map(c)
}

pub fn real_part(a: &CMatrix) -> RMatrix {
    a.map(|x| x.re)
}

/// Max modulus of any imaginary part; used to check matrices expected real.
pub fn imag_norm(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.im.abs()).fold(0.0, f64::max)
}

fn ensure_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// `true` iff ||A - A*||_max <= tol (absolute).
pub fn is_selfadjoint(a: &CMatrix, tol: f64) -> Result<bool> {
    ensure_square(a)?;
    Ok(max_norm(&(a - a.adjoint())) <= tol)
}

/// Selfadjoint within tol and smallest eigenvalue > tol * ||T||_max.
pub fn is_positive_definite(t: &CMatrix, tol: f64) -> Result<bool> {
    ensure_square(t)?;
    if !is_selfadjoint(t, tol.max(DEFAULT_TOL * max_norm(t)))? {
        return Ok(false);
    }
    let (vals, _) = hermitian_eigen(&symmetrize(t));
    Ok(vals[0] > tol * max_norm(t))
}

/// `true` iff ||U*U - 1||_max <= tol.
pub fn is_unitary(u: &CMatrix, tol: f64) -> Result<bool> {
    let n = ensure_square(u)?;
    Ok(max_norm(&(u.adjoint() * u - identity(n))) <= tol)
}

pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// The fixed matrix I of the self-duality symmetry class (dimension even,
/// four blocks of size L/2).
#[derive(Debug, Clone)]
pub struct DualityForm {
    dim: usize,
    mat: CMatrix,
}

impl DualityForm {
    pub fn new(dim: usize) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(Error::OddDimension(dim));
        }
        let h = dim / 2;
        let mut mat = zeros(dim, dim);
        for k in 0..h {
            mat[(k, h + k)] = c(-1.0);
            mat[(h + k, k)] = c(1.0);
        }
        Ok(Self { dim, mat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// I* A^t I
    pub fn dual(&self, a: &CMatrix) -> CMatrix {
        self.mat.adjoint() * a.transpose() * &self.mat
    }

    /// I* conj(A) I
    pub fn conj_dual(&self, a: &CMatrix) -> CMatrix {
        self.mat.adjoint() * a.conjugate() * &self.mat
    }

    /// Self-dual projection (A + I* A^t I)/2; idempotent, preserves
    /// hermiticity and positivity.
    pub fn project(&self, a: &CMatrix) -> CMatrix {
        (a + self.dual(a)).scale(0.5)
    }
}

/// `true` iff ||I* A^t I - A||_max <= tol; equivalently (IA)^t = -(IA).
pub fn is_selfdual(a: &CMatrix, form: &DualityForm, tol: f64) -> Result<bool> {
    let n = ensure_square(a)?;
    if n != form.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {n}x{n} but duality form has dimension {}",
            form.dim()
        )));
    }
    Ok(max_norm(&(form.dual(a) - a)) <= tol)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending,
/// eigenvector columns orthonormal.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let se = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vecs = zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(k));
    }
    (vals, vecs)
}

/// Eigenphases of a unitary matrix with an orthonormal eigenvector matrix.
///
/// A unitary is normal, so H = (U+U*)/2 and K = (U-U*)/2i commute; H is
/// diagonalized first and K resolves phase pairs within each cos-cluster.
/// Phases are returned sorted ascending in [0, 2pi).
pub fn unitary_eigenphases(u: &CMatrix, tol: f64) -> Result<(Vec<f64>, CMatrix)> {
    let n = ensure_square(u)?;
    let defect = max_norm(&(u.adjoint() * u - identity(n)));
    if defect > tol {
        return Err(Error::NotUnitary { defect });
    }
    let h = (u + u.adjoint()).scale(0.5);
    let k = (u - u.adjoint()).scale(0.5) * ci(-1.0);
    let (hvals, mut vecs) = hermitian_eigen(&h);

    // split cos-degenerate clusters with the sine part
    let cluster_tol = 1e-7 * (1.0 + max_norm(&h));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && hvals[end] - hvals[end - 1] <= cluster_tol {
            end += 1;
        }
        if end - start > 1 {
            let block = vecs.columns(start, end - start).into_owned();
            let kb = block.adjoint() * &k * &block;
            let (_, w) = hermitian_eigen(&symmetrize(&kb));
            let rotated = block * w;
            for (j, col) in rotated.column_iter().enumerate() {
                vecs.set_column(start + j, &col);
            }
        }
        start = end;
    }

    let two_pi = 2.0 * std::f64::consts::PI;
    let mut pairs: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            let v = vecs.column(j);
            let lam: C64 = (v.adjoint() * u * v)[(0, 0)];
            let mut th = lam.arg();
            if th < 0.0 {
                th += two_pi;
            }
            if th >= two_pi {
                th -= two_pi;
            }
            (th, j)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut phases = Vec::with_capacity(n);
    let mut sorted = zeros(n, n);
    for (col, (th, j)) in pairs.into_iter().enumerate() {
        phases.push(th);
        sorted.set_column(col, &vecs.column(j));
    }
    Ok((phases, sorted))
}

/// Eigenvalues of a general complex matrix via complex Schur.
pub fn complex_eigenvalues(a: &CMatrix) -> Result<Vec<C64>> {
    let schur = Schur::try_new(a.clone(), 1e-13, 100_000).ok_or(Error::EigenFailure)?;
    let (_, t) = schur.unpack();
    Ok((0..a.nrows()).map(|k| t[(k, k)]).collect())
}

/// Full eigendecomposition of a general complex matrix (Schur plus
/// back-substitution on the triangular factor). Eigenvector columns are
/// normalized; callers gate on the residual / conditioning themselves.
pub fn complex_eigen(a: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let n = ensure_square(a)?;
    let schur = Schur::try_new(a.clone(), 1e-13, 100_000).ok_or(Error::EigenFailure)?;
    let (q, t) = schur.unpack();
    let scale = max_norm(&t).max(1.0);
    let mut vecs = zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for kk in 0..n {
        let lam = t[(kk, kk)];
        vals.push(lam);
        let mut y = vec![C64::new(0.0, 0.0); n];
        y[kk] = c(1.0);
        for i in (0..kk).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=kk {
                s += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < 1e-300 * scale {
                d = c(1e-300 * scale);
            }
            y[i] = -s / d;
        }
        let yv = CMatrix::from_column_slice(n, 1, &y);
        let x = &q * yv;
        let nrm = x.norm();
        vecs.set_column(kk, &x.column(0).unscale(nrm));
    }
    Ok((vals, vecs))
}

/// Singular values, descending.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

pub fn smallest_singular_value(a: &CMatrix) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Number of singular values <= rel_tol * sigma_max.
pub fn kernel_dim(a: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return s.len();
    }
    s.iter().filter(|&&x| x <= rel_tol * smax).count()
}

pub fn try_inverse(a: &CMatrix) -> Result<CMatrix> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("matrix not invertible".into()))
}

pub fn determinant(a: &CMatrix) -> C64 {
    a.clone().lu().determinant()
}

/// log det via LU: real part exact, imaginary part a sum of principal
/// per-factor arguments (a valid branch; exp of differences is exact).
pub fn log_determinant(a: &CMatrix) -> C64 {
    let n = a.nrows();
    let lu = a.clone().lu();
    let mut re = 0.0;
    let mut im = 0.0;
    let u = lu.u();
    for k in 0..n {
        let d = u[(k, k)];
        re += d.norm().ln();
        im += d.arg();
    }
    // permutation parity contributes a sign
    if lu.p().len() % 2 != 0 {
        im += std::f64::consts::PI;
    }
    C64::new(re, im)
}

/// Nearest-unitary projection via polar decomposition; stabilizes long
/// unitary flows without changing exact solutions.
pub fn polar_unitary(a: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    u * vt
}
