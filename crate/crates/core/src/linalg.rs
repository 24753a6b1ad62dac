//! Dense matrices over ℝ or ℂ and the handful of spectral kernels the rest of
//! the crate is built on.
//!
//! A [`Mat`] is either a real or a complex dense matrix. Mixed operations
//! promote to complex. All rank and kernel decisions go through Hermitian
//! eigendecompositions or real SVDs with a relative threshold.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub enum Mat {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

/// Eigenvalues in ascending order together with matching unit eigenvectors
/// stored as columns.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat::Real(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Mat::Real(DMatrix::identity(n, n))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Mat::Real(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Mat::Real(m) => m.nrows(),
            Mat::Complex(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Mat::Real(m) => m.ncols(),
            Mat::Complex(m) => m.ncols(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Mat::Complex(_))
    }

    pub fn to_complex(&self) -> DMatrix<C64> {
        match self {
            Mat::Real(m) => m.map(|x| C64::new(x, 0.0)),
            Mat::Complex(m) => m.clone(),
        }
    }

    pub fn into_complex(self) -> Mat {
        match self {
            Mat::Real(m) => Mat::Complex(m.map(|x| C64::new(x, 0.0))),
            c => c,
        }
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        match self {
            Mat::Real(m) => m.clone(),
            Mat::Complex(m) => m.map(|z| z.re),
        }
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        match self {
            Mat::Real(m) => DMatrix::zeros(m.nrows(), m.ncols()),
            Mat::Complex(m) => m.map(|z| z.im),
        }
    }

    /// Largest absolute imaginary entry; zero for real storage.
    pub fn max_imag(&self) -> f64 {
        match self {
            Mat::Real(_) => 0.0,
            Mat::Complex(m) => m.iter().fold(0.0, |acc, z| acc.max(z.im.abs())),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        match self {
            Mat::Real(m) => C64::new(m[(i, j)], 0.0),
            Mat::Complex(m) => m[(i, j)],
        }
    }

    pub fn adjoint(&self) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m.transpose()),
            Mat::Complex(m) => Mat::Complex(m.adjoint()),
        }
    }

    pub fn conj(&self) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m.clone()),
            Mat::Complex(m) => Mat::Complex(m.map(|z| z.conj())),
        }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        match (self, other) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a * b),
            _ => Mat::Complex(self.to_complex() * other.to_complex()),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        match (self, other) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a + b),
            _ => Mat::Complex(self.to_complex() + other.to_complex()),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        match (self, other) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a - b),
            _ => Mat::Complex(self.to_complex() - other.to_complex()),
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m * s),
            Mat::Complex(m) => Mat::Complex(m * C64::new(s, 0.0)),
        }
    }

    pub fn scale_c(&self, s: C64) -> Mat {
        if s.im == 0.0 {
            return self.scale(s.re);
        }
        Mat::Complex(self.to_complex() * s)
    }

    pub fn kron(&self, other: &Mat) -> Mat {
        match (self, other) {
            (Mat::Real(a), Mat::Real(b)) => Mat::Real(a.kronecker(b)),
            _ => Mat::Complex(self.to_complex().kronecker(&other.to_complex())),
        }
    }

    pub fn frobenius(&self) -> f64 {
        match self {
            Mat::Real(m) => m.norm(),
            Mat::Complex(m) => m.norm(),
        }
    }

    pub fn spectral_norm(&self) -> f64 {
        if self.nrows() == 0 || self.ncols() == 0 {
            return 0.0;
        }
        match self {
            Mat::Real(m) => SVD::new(m.clone(), false, false)
                .singular_values
                .iter()
                .fold(0.0, |a: f64, &s| a.max(s)),
            Mat::Complex(m) => SVD::new(m.clone(), false, false)
                .singular_values
                .iter()
                .fold(0.0, |a: f64, &s| a.max(s)),
        }
    }

    /// Frobenius distance from the conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).frobenius()
    }

    /// `(M + M*)/2`, used to scrub round-off before eigendecompositions.
    pub fn symmetrized(&self) -> Mat {
        self.add(&self.adjoint()).scale(0.5)
    }

    /// Collapse complex storage with vanishing imaginary part to real storage.
    pub fn demote(self, tol: f64) -> Mat {
        match self {
            Mat::Complex(m) if m.iter().all(|z| z.im.abs() <= tol) => Mat::Real(m.map(|z| z.re)),
            other => other,
        }
    }

    pub fn herm_eigen(&self) -> HermEigen {
        let n = self.nrows();
        if n == 0 {
            return HermEigen { values: vec![], vectors: Mat::zeros(0, 0) };
        }
        match self.symmetrized() {
            Mat::Real(m) => {
                let eig = SymmetricEigen::new(m);
                let order = ascending(eig.eigenvalues.as_slice());
                let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                HermEigen { values, vectors: Mat::Real(vectors) }
            }
            Mat::Complex(m) => {
                let eig = SymmetricEigen::new(m);
                let order = ascending(eig.eigenvalues.as_slice());
                let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                HermEigen { values, vectors: Mat::Complex(vectors) }
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.herm_eigen().values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn columns(&self, start: usize, count: usize) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m.columns(start, count).into_owned()),
            Mat::Complex(m) => Mat::Complex(m.columns(start, count).into_owned()),
        }
    }

    pub fn rows(&self, start: usize, count: usize) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m.rows(start, count).into_owned()),
            Mat::Complex(m) => Mat::Complex(m.rows(start, count).into_owned()),
        }
    }

    pub fn view(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Mat {
        match self {
            Mat::Real(m) => Mat::Real(m.view((r0, c0), (nr, nc)).into_owned()),
            Mat::Complex(m) => Mat::Complex(m.view((r0, c0), (nr, nc)).into_owned()),
        }
    }

    /// Gather the listed columns (in order) into a new matrix.
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let r = self.nrows();
        match self {
            Mat::Real(m) => Mat::Real(DMatrix::from_fn(r, idx.len(), |i, j| m[(i, idx[j])])),
            Mat::Complex(m) => Mat::Complex(DMatrix::from_fn(r, idx.len(), |i, j| m[(i, idx[j])])),
        }
    }

    /// Hermitian pseudoinverse: eigenvalues with |λ| ≤ rel_tol·max|λ| are
    /// treated as zero.
    pub fn herm_pinv(&self, rel_tol: f64) -> Mat {
        let n = self.nrows();
        let eig = self.herm_eigen();
        let scale = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let cut = rel_tol * scale;
        let inv: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| if v.abs() <= cut || v == 0.0 { 0.0 } else { 1.0 / v })
            .collect();
        let q = &eig.vectors;
        let d = Mat::Real(DMatrix::from_diagonal(&DVector::from_vec(inv)));
        let out = q.mul(&d).mul(&q.adjoint());
        if n == 0 {
            out
        } else {
            out.symmetrized()
        }
    }

    /// Real 2r×2c embedding `[[Re, -Im], [Im, Re]]`.
    pub fn real_embedding(&self) -> DMatrix<f64> {
        let (r, c) = (self.nrows(), self.ncols());
        let re = self.real_part();
        let im = self.imag_part();
        let mut out = DMatrix::zeros(2 * r, 2 * c);
        out.view_mut((0, 0), (r, c)).copy_from(&re);
        out.view_mut((0, c), (r, c)).copy_from(&(-&im));
        out.view_mut((r, 0), (r, c)).copy_from(&im);
        out.view_mut((r, c), (r, c)).copy_from(&re);
        out
    }
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Block matrix from a row-major grid of blocks. Promotes to complex when any
/// block is complex.
pub fn block(grid: &[Vec<Mat>]) -> Mat {
    let row_heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let col_widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    let total_r: usize = row_heights.iter().sum();
    let total_c: usize = col_widths.iter().sum();
    let complex = grid.iter().flatten().any(Mat::is_complex);
    if complex {
        let mut out = DMatrix::<C64>::zeros(total_r, total_c);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                debug_assert_eq!(b.nrows(), row_heights[bi]);
                debug_assert_eq!(b.ncols(), col_widths[bj]);
                out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(&b.to_complex());
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        Mat::Complex(out)
    } else {
        let mut out = DMatrix::<f64>::zeros(total_r, total_c);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                if let Mat::Real(m) = b {
                    out.view_mut((r0, c0), (m.nrows(), m.ncols())).copy_from(m);
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        Mat::Real(out)
    }
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let k = blocks.len();
    let grid: Vec<Vec<Mat>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        blocks[i].clone()
                    } else {
                        Mat::zeros(blocks[i].nrows(), blocks[j].ncols())
                    }
                })
                .collect()
        })
        .collect();
    if k == 0 {
        return Mat::zeros(0, 0);
    }
    block(&grid)
}

/// Orthonormal basis (columns) of the numerical null space of a real matrix.
/// Singular values ≤ `rel_tol·max(1, σ_max)` count as zero. Rows are padded
/// so the full right singular basis is available.
pub fn real_null_space(m: &DMatrix<f64>, rel_tol: f64) -> NullSpace {
    let cols = m.ncols();
    if cols == 0 {
        return NullSpace { basis: DMatrix::zeros(0, 0), singular_values: vec![], cut: 0.0 };
    }
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    let cut = rel_tol * smax.max(1.0);
    // order ascending by singular value so the "most null" directions come first
    let order = ascending(sv.as_slice());
    let null_idx: Vec<usize> = order.iter().copied().filter(|&i| sv[i] <= cut).collect();
    let mut basis = DMatrix::zeros(cols, null_idx.len());
    for (k, &i) in null_idx.iter().enumerate() {
        let mut v: Vec<f64> = vt.row(i).iter().copied().collect();
        sign_fix(&mut v);
        for (r, x) in v.into_iter().enumerate() {
            basis[(r, k)] = x;
        }
    }
    let mut singular_values: Vec<f64> = sv.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    NullSpace { basis, singular_values, cut }
}

#[derive(Clone, Debug)]
pub struct NullSpace {
    pub basis: DMatrix<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    pub cut: f64,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Ratio between the smallest kept singular value and the largest
    /// discarded one; `None` when either side is empty.
    pub fn gap_ratio(&self) -> Option<f64> {
        let kept = self.singular_values.iter().copied().filter(|&s| s > self.cut).fold(f64::INFINITY, f64::min);
        let dropped = self.singular_values.iter().copied().filter(|&s| s <= self.cut).fold(0.0_f64, f64::max);
        (kept.is_finite() && dropped > 0.0).then(|| kept / dropped)
    }
}

/// Flip the sign so that the first coordinate of non-negligible size is positive.
pub fn sign_fix(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-9 * scale.max(1e-300)) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Modified Gram–Schmidt on the columns of a real matrix.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let ci = q.column(i).into_owned();
            q.column_mut(j).axpy(-proj, &ci, 1.0);
        }
        let n = q.column(j).norm();
        if n > 0.0 {
            q.column_mut(j).scale_mut(1.0 / n);
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_ascending() {
        let m = Mat::from_real_rows(&[&[2.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 0.5]]);
        let e = m.herm_eigen();
        assert_eq!(e.values.len(), 3);
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[2] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn complex_hermitian_eigen() {
        // [[0, i], [-i, 0]] has eigenvalues ±1
        let m = Mat::Complex(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(0.0, 0.0)],
        ));
        let e = m.herm_eigen();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v = e.vectors.columns(0, 1);
        let mv = m.mul(&v);
        let resid = mv.add(&v).frobenius();
        assert!(resid < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = real_null_space(&m, 1e-10);
        assert_eq!(ns.dim(), 2);
        for k in 0..2 {
            assert!((m.clone() * ns.basis.column(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn pinv_drops_kernel() {
        let m = Mat::from_real_rows(&[&[2.0, 0.0], &[0.0, 1e-14]]);
        let p = m.herm_pinv(1e-8);
        assert!((p.entry(0, 0).re - 0.5).abs() < 1e-14);
        assert!(p.entry(1, 1).re.abs() < 1e-14);
    }

    #[test]
    fn embedding_preserves_spectrum() {
        let m = Mat::Complex(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.5, 0.3), C64::new(0.5, -0.3), C64::new(-2.0, 0.0)],
        ));
        let e = m.herm_eigen().values;
        let r = Mat::Real(m.real_embedding()).herm_eigen().values;
        assert!((r[0] - e[0]).abs() < 1e-12 && (r[1] - e[0]).abs() < 1e-12);
        assert!((r[3] - e[1]).abs() < 1e-12);
    }
}
