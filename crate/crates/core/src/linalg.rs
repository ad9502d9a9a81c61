//! Dense numeric helpers shared by the algebra modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance for exact-structure checks.
pub const TOL_EXACT: f64 = 1e-12;
/// Tolerance for results of eigensolves and span membership.
pub const TOL_SOLVE: f64 = 1e-9;
/// Tolerance for unitarity of inputs.
pub const TOL_UNITARY: f64 = 1e-10;

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    frob(&(m - m.adjoint()))
}

pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    frob(&(u * u.adjoint() - CMat::identity(n, n)))
}

pub fn is_diagonal(m: &CMat, tol: f64) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)].norm() <= tol))
}

/// Real coordinates of a Hermitian matrix: the diagonal followed by
/// `sqrt(2)·Re` and `sqrt(2)·Im` of each upper entry. The map is an isometry
/// from the Hilbert-Schmidt inner product to the Euclidean one.
pub fn herm_to_vec(m: &CMat) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * n);
    for i in 0..n {
        v[i] = m[(i, i)].re;
    }
    let s = std::f64::consts::SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            v[k] = s * m[(i, j)].re;
            v[k + 1] = s * m[(i, j)].im;
            k += 2;
        }
    }
    v
}

pub fn vec_to_herm(v: &DVector<f64>, n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(v[i], 0.0);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = Complex64::new(s * v[k], s * v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Orthonormal basis of a real subspace, used for projection-based span tests.
#[derive(Debug, Clone)]
pub struct Subspace {
    dim_ambient: usize,
    basis: Vec<DVector<f64>>,
}

impl Subspace {
    pub fn new(dim_ambient: usize) -> Self {
        Subspace { dim_ambient, basis: Vec::new() }
    }

    pub fn from_vectors<'a>(dim_ambient: usize, vs: impl IntoIterator<Item = &'a DVector<f64>>) -> Self {
        let mut s = Subspace::new(dim_ambient);
        for v in vs {
            s.push(v);
        }
        s
    }

    pub fn from_matrices<'a>(n: usize, ms: impl IntoIterator<Item = &'a CMat>) -> Self {
        let mut s = Subspace::new(n * n);
        for m in ms {
            s.push(&herm_to_vec(m));
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient(&self) -> usize {
        self.dim_ambient
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    fn reduce(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        // two passes of modified Gram-Schmidt keep the residual accurate
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        r
    }

    /// Adds `v` if it is independent of the current span; returns whether it was added.
    pub fn push(&mut self, v: &DVector<f64>) -> bool {
        let scale = v.norm();
        if scale < TOL_EXACT {
            return false;
        }
        let r = self.reduce(v);
        let rn = r.norm();
        if rn <= 1e-8 * scale.max(1.0) {
            return false;
        }
        self.basis.push(r / rn);
        true
    }

    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        self.reduce(v).norm()
    }

    pub fn residual_matrix(&self, m: &CMat) -> f64 {
        self.residual(&herm_to_vec(m))
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.residual(v) <= tol
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.reduce(v)
    }

    /// Largest residual of any basis vector of `other` against `self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        other.basis.iter().map(|b| self.residual(b)).fold(0.0, f64::max)
    }

    pub fn same_span(&self, other: &Subspace, tol: f64) -> bool {
        self.dim() == other.dim()
            && self.containment_residual(other) <= tol
            && other.containment_residual(self) <= tol
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending order.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigen-decomposition of a real symmetric matrix with eigenvalues in ascending order.
pub fn eigh_real(m: &RMat) -> (Vec<f64>, RMat) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = RMat::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// `exp(i·omega·g)` for Hermitian `g`.
pub fn expi_hermitian(g: &CMat, omega: f64) -> CMat {
    let (vals, vecs) = eigh(g);
    let n = g.nrows();
    let mut d = CMat::zeros(n, n);
    for (k, v) in vals.iter().enumerate() {
        d[(k, k)] = Complex64::from_polar(1.0, omega * v);
    }
    &vecs * d * vecs.adjoint()
}

/// Haar-random unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Haar-random element of SU(n).
pub fn random_special_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let u = random_unitary(n, rng);
    let (v, _) = split_phase(&u);
    v
}

/// Splits `u = phase · v` with `det v = 1`, taking the principal root of the determinant.
pub fn split_phase(u: &CMat) -> (CMat, Complex64) {
    let n = u.nrows() as f64;
    let det = u.determinant();
    let phase = Complex64::from_polar(1.0, det.arg() / n);
    (u / phase, phase)
}

/// Random Hermitian traceless matrix with Gaussian entries.
pub fn random_traceless_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let mut h = (&z + z.adjoint()) * Complex64::new(0.5, 0.0);
    let t = trace(&h) / Complex64::new(n as f64, 0.0);
    for i in 0..n {
        h[(i, i)] -= t;
    }
    h
}

/// Canonical key of a real span: reduced row echelon form rounded to a grid.
pub fn span_key(vectors: &[DVector<f64>], grid: f64) -> Vec<i64> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let cols = vectors[0].len();
    let mut m = RMat::zeros(vectors.len(), cols);
    for (r, v) in vectors.iter().enumerate() {
        m.set_row(r, &v.transpose());
    }
    let rows = m.nrows();
    let mut lead = 0usize;
    let mut rank = 0usize;
    while rank < rows && lead < cols {
        let (mut best, mut best_val) = (rank, 0.0);
        for r in rank..rows {
            if m[(r, lead)].abs() > best_val {
                best = r;
                best_val = m[(r, lead)].abs();
            }
        }
        if best_val <= 1e-9 {
            lead += 1;
            continue;
        }
        m.swap_rows(rank, best);
        let p = m[(rank, lead)];
        for c in 0..cols {
            m[(rank, c)] /= p;
        }
        for r in 0..rows {
            if r != rank {
                let f = m[(r, lead)];
                if f != 0.0 {
                    for c in 0..cols {
                        m[(r, c)] -= f * m[(rank, c)];
                    }
                }
            }
        }
        rank += 1;
        lead += 1;
    }
    let mut key = Vec::with_capacity(rank * cols);
    for r in 0..rank {
        for c in 0..cols {
            let x = (m[(r, c)] / grid).round() as i64;
            key.push(x);
        }
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn herm_vec_is_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_traceless_hermitian(4, &mut rng);
        let b = random_traceless_hermitian(4, &mut rng);
        let tr = trace(&(&a * &b)).re;
        assert!((herm_to_vec(&a).dot(&herm_to_vec(&b)) - tr).abs() < 1e-12);
        assert!(frob(&(vec_to_herm(&herm_to_vec(&a), 4) - &a)) < 1e-14);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_special_unitary(5, &mut rng);
        assert!(unitarity_error(&u) < 1e-12);
        assert!((u.determinant() - ONE).norm() < 1e-12);
    }

    #[test]
    fn subspace_membership() {
        let mut s = Subspace::new(3);
        assert!(s.push(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        assert!(!s.push(&DVector::from_vec(vec![2.0, 2.0, 0.0])));
        assert!(s.contains(&DVector::from_vec(vec![-3.0, -3.0, 0.0]), 1e-12));
        assert!((s.residual(&DVector::from_vec(vec![0.0, 0.0, 2.0])) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn span_key_ignores_basis_choice() {
        let a = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let k1 = span_key(&[a.clone(), b.clone()], 1e-9);
        let k2 = span_key(&[&a + &b, &a - &b * 3.0], 1e-9);
        assert_eq!(k1, k2);
    }

    #[test]
    fn expi_of_pauli() {
        let x = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let e = expi_hermitian(&x, std::f64::consts::FRAC_PI_2);
        assert!(frob(&(e - &x * I)) < 1e-12);
    }
}
