//! Matrix tuples, linear pencils and their evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{block, block_diag, Mat};
use crate::lmi::{self, LmiProblem, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

/// Numerical thresholds shared by every decision in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Self-adjointness check.
    pub tau_sym: f64,
    /// PSD slack: λ_min ≥ −tau_psd counts as PSD.
    pub tau_psd: f64,
    /// Relative threshold for kernel and rank decisions.
    pub tau_ker: f64,
    /// Optimizer convergence.
    pub tau_opt: f64,
    pub max_iter: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig { tau_sym: 1e-10, tau_psd: 1e-9, tau_ker: 1e-8, tau_opt: 1e-9, max_iter: 500 }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tau_sym, self.tau_psd, self.tau_ker, self.tau_opt];
        if all.iter().any(|t| !(t.is_finite() && *t > 0.0)) || self.max_iter == 0 {
            return input("all tolerances must be finite and strictly positive");
        }
        Ok(())
    }
}

/// A g-tuple of equally sized dense matrices over ℝ or ℂ.
///
/// Real tuples always hold real storage and complex tuples complex storage.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTuple {
    field: Field,
    rows: usize,
    cols: usize,
    mats: Vec<Mat>,
}

impl MatrixTuple {
    pub fn new(field: Field, mats: Vec<Mat>) -> Result<Self> {
        let Some(first) = mats.first() else {
            return input("a tuple needs at least one matrix");
        };
        let (rows, cols) = (first.nrows(), first.ncols());
        if mats.iter().any(|m| m.nrows() != rows || m.ncols() != cols) {
            return input("all matrices of a tuple must share dimensions");
        }
        let mats = match field {
            Field::Complex => mats.into_iter().map(Mat::into_complex).collect(),
            Field::Real => {
                if mats.iter().any(|m| m.max_imag() > 0.0) {
                    return input("real tuple with non-zero imaginary entries");
                }
                mats.into_iter().map(|m| Mat::Real(m.real_part())).collect()
            }
        };
        Ok(MatrixTuple { field, rows, cols, mats })
    }

    pub fn real(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        MatrixTuple::new(Field::Real, mats.into_iter().map(Mat::Real).collect())
    }

    /// Tuple of 1×1 real matrices.
    pub fn scalars(values: &[f64]) -> Self {
        MatrixTuple::real(values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
            .expect("non-empty scalar tuple")
    }

    pub fn zeros(field: Field, g: usize, rows: usize, cols: usize) -> Self {
        let mats = (0..g).map(|_| Mat::zeros(rows, cols)).collect();
        MatrixTuple::new(field, mats).expect("g ≥ 1")
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn g(&self) -> usize {
        self.mats.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn mats(&self) -> &[Mat] {
        &self.mats
    }

    pub fn get(&self, j: usize) -> &Mat {
        &self.mats[j]
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.is_square() && self.mats.iter().all(|m| m.hermitian_defect() <= tol * m.frobenius().max(1.0))
    }

    pub fn to_complex(&self) -> MatrixTuple {
        MatrixTuple::new(Field::Complex, self.mats.clone()).expect("same shapes")
    }

    /// Real storage if every imaginary part vanishes within `tol`.
    pub fn to_real(&self, tol: f64) -> Result<MatrixTuple> {
        if self.mats.iter().any(|m| m.max_imag() > tol) {
            return input("tuple has non-negligible imaginary part");
        }
        MatrixTuple::real(self.mats.iter().map(Mat::real_part).collect())
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> MatrixTuple {
        let mats: Vec<Mat> = self.mats.iter().map(f).collect();
        let field = if mats.iter().any(Mat::is_complex) { Field::Complex } else { self.field };
        MatrixTuple::new(field, mats).expect("map preserves shapes")
    }

    pub fn adjoint(&self) -> MatrixTuple {
        self.map(Mat::adjoint)
    }

    pub fn conj(&self) -> MatrixTuple {
        self.map(Mat::conj)
    }

    pub fn scale(&self, s: f64) -> MatrixTuple {
        self.map(|m| m.scale(s))
    }

    pub fn add(&self, other: &MatrixTuple) -> Result<MatrixTuple> {
        self.zip(other, Mat::add)
    }

    pub fn sub(&self, other: &MatrixTuple) -> Result<MatrixTuple> {
        self.zip(other, Mat::sub)
    }

    fn zip(&self, other: &MatrixTuple, f: impl Fn(&Mat, &Mat) -> Mat) -> Result<MatrixTuple> {
        if self.g() != other.g() || self.rows != other.rows || self.cols != other.cols {
            return input("tuple shapes differ");
        }
        let field = if self.field == Field::Complex || other.field == Field::Complex {
            Field::Complex
        } else {
            Field::Real
        };
        MatrixTuple::new(field, self.mats.iter().zip(&other.mats).map(|(a, b)| f(a, b)).collect())
    }

    /// sqrt of the summed squared Frobenius norms.
    pub fn frobenius(&self) -> f64 {
        self.mats.iter().map(|m| m.frobenius().powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_spectral_norm(&self) -> f64 {
        self.mats.iter().map(Mat::spectral_norm).fold(0.0, f64::max)
    }

    /// W*XW for an arbitrary matrix W (no isometry check).
    pub fn conjugate_by(&self, w: &Mat) -> Result<MatrixTuple> {
        if w.nrows() != self.rows || self.rows != self.cols {
            return input("conjugating matrix does not match tuple size");
        }
        let wa = w.adjoint();
        let out = self.map(|m| wa.mul(m).mul(w));
        if w.is_complex() && self.field == Field::Real {
            return Ok(out.to_complex());
        }
        Ok(out)
    }

    /// Cast tuples of n×1 columns to a flat vector of length n·g, coordinate
    /// (j, p) at index j·n + p.
    pub fn stack_columns(&self) -> Vec<num_complex::Complex64> {
        let mut out = Vec::with_capacity(self.g() * self.rows);
        for m in &self.mats {
            for p in 0..self.rows {
                out.push(m.entry(p, 0));
            }
        }
        out
    }
}

/// A monic linear pencil given by its defining tuple of self-adjoint d×d matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Pencil {
    a: MatrixTuple,
}

impl Pencil {
    pub fn new(a: MatrixTuple, cfg: &ToleranceConfig) -> Result<Self> {
        if !a.is_self_adjoint(cfg.tau_sym) {
            return input("pencil coefficients must be square and self-adjoint");
        }
        Ok(Pencil { a })
    }

    pub fn real(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        Pencil::new(MatrixTuple::real(mats)?, &ToleranceConfig::default())
    }

    pub fn tuple(&self) -> &MatrixTuple {
        &self.a
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn g(&self) -> usize {
        self.a.g()
    }

    pub fn field(&self) -> Field {
        self.a.field()
    }

    pub fn coeff(&self, j: usize) -> &Mat {
        self.a.get(j)
    }

    /// sqrt(Σ‖A_j‖_F²), the scale used in containment tolerances.
    pub fn norm(&self) -> f64 {
        self.a.frobenius()
    }

    pub fn conj(&self) -> Pencil {
        Pencil { a: self.a.conj() }
    }

    /// Λ_A(x) = Σ A_j x_j on a real point x ∈ ℝ^g.
    pub fn homogeneous_at(&self, x: &[f64]) -> Mat {
        let d = self.d();
        x.iter()
            .enumerate()
            .fold(Mat::zeros(d, d), |acc, (j, &xj)| acc.add(&self.coeff(j).scale(xj)))
    }

    /// L_A(x) = I + Σ A_j x_j on a real point.
    pub fn monic_at(&self, x: &[f64]) -> Mat {
        Mat::identity(self.d()).add(&self.homogeneous_at(x))
    }
}

/// Σ_j A_j ⊗ B_j for a tuple of rows×cols matrices.
pub fn eval_homogeneous(p: &Pencil, b: &MatrixTuple) -> Result<Mat> {
    if p.g() != b.g() {
        return input(format!("pencil has g = {}, tuple has g = {}", p.g(), b.g()));
    }
    let (d, r, c) = (p.d(), b.rows(), b.cols());
    Ok((0..p.g()).fold(Mat::zeros(d * r, d * c), |acc, j| acc.add(&p.coeff(j).kron(b.get(j)))))
}

/// L_A(X) = I_{dn} + Σ_j A_j ⊗ X_j.
pub fn eval_monic(p: &Pencil, x: &MatrixTuple) -> Result<Mat> {
    if !x.is_square() {
        return input("monic pencil needs a tuple of square matrices");
    }
    let lam = eval_homogeneous(p, x)?;
    Ok(Mat::identity(p.d() * x.rows()).add(&lam))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    pub lambda_min: f64,
}

pub fn is_member(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<Membership> {
    let l = eval_monic(p, x)?;
    let lambda_min = l.min_eigenvalue();
    Ok(Membership { member: lambda_min >= -cfg.tau_psd, lambda_min })
}

/// V*YV for an isometry V (m×n, V*V = I_n).
pub fn compress(y: &MatrixTuple, v: &Mat, cfg: &ToleranceConfig) -> Result<MatrixTuple> {
    let n = v.ncols();
    let defect = v.adjoint().mul(v).sub(&Mat::identity(n)).frobenius();
    if defect > cfg.tau_sym * (n as f64).max(1.0) {
        return input(format!("compression matrix is not an isometry (‖V*V − I‖ = {defect:.3e})"));
    }
    y.conjugate_by(v)
}

pub fn direct_sum(x: &MatrixTuple, z: &MatrixTuple) -> Result<MatrixTuple> {
    if x.g() != z.g() {
        return input("direct sum of tuples with different g");
    }
    if x.field() != z.field() {
        return input("direct sum of tuples over different fields");
    }
    let mats = x.mats.iter().zip(&z.mats).map(|(a, b)| block_diag(&[a.clone(), b.clone()])).collect();
    MatrixTuple::new(x.field(), mats)
}

/// Direct sum of any number of tuples sharing g and field.
pub fn direct_sum_all(parts: &[MatrixTuple]) -> Result<MatrixTuple> {
    let Some(first) = parts.first() else {
        return input("empty direct sum");
    };
    let field = if parts.iter().any(|t| t.field() == Field::Complex) { Field::Complex } else { first.field() };
    let g = first.g();
    if parts.iter().any(|t| t.g() != g) {
        return input("direct sum of tuples with different g");
    }
    let mats = (0..g)
        .map(|j| block_diag(&parts.iter().map(|t| t.get(j).clone()).collect::<Vec<_>>()))
        .collect();
    MatrixTuple::new(field, mats)
}

/// The 2×2 block tuple [[X, β], [β*, γ]].
pub fn block_tuple(x: &MatrixTuple, beta: &MatrixTuple, gamma: &MatrixTuple) -> Result<MatrixTuple> {
    let g = x.g();
    if beta.g() != g || gamma.g() != g {
        return input("block tuple parts have different g");
    }
    if beta.rows() != x.rows() || beta.cols() != gamma.rows() || !gamma.is_square() || !x.is_square() {
        return input("block tuple parts have incompatible shapes");
    }
    let complex = [x, beta, gamma].iter().any(|t| t.field() == Field::Complex);
    let field = if complex { Field::Complex } else { Field::Real };
    let mats = (0..g)
        .map(|j| {
            block(&[
                vec![x.get(j).clone(), beta.get(j).clone()],
                vec![beta.get(j).adjoint(), gamma.get(j).clone()],
            ])
        })
        .collect();
    MatrixTuple::new(field, mats)
}

/// Permutation (as an index map) taking the Kronecker ordering of A ⊗ Y,
/// Y partitioned into diagonal blocks of the given sizes, to the ordering in
/// which each block's A ⊗ Y_{ik} appears contiguously.
///
/// `perm[new] = old`.
pub fn canonical_shuffle(d: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let mut perm = Vec::with_capacity(d * n);
    let mut offset = 0;
    for &s in sizes {
        for a in 0..d {
            for q in 0..s {
                perm.push(a * n + offset + q);
            }
        }
        offset += s;
    }
    perm
}

/// Permutation matrix P with (P*MP)[i][j] = M[perm[i]][perm[j]].
pub fn permutation_matrix(perm: &[usize]) -> Mat {
    let k = perm.len();
    let mut p = DMatrix::zeros(k, k);
    for (new, &old) in perm.iter().enumerate() {
        p[(old, new)] = 1.0;
    }
    Mat::Real(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Boundedness {
    pub bounded: bool,
    /// Largest optimum of ±x_i over the level-1 recession cone inside the unit box.
    pub max_recession: f64,
    pub criterion: &'static str,
}

/// Level-1 recession cone test: the cone {x : Λ_A(x) ⪰ 0} must be {0}.
pub fn is_bounded(p: &Pencil, cfg: &ToleranceConfig) -> Result<Boundedness> {
    let d = p.d();
    let g = p.g();
    let problem = LmiProblem::new(Mat::zeros(d, d), p.tuple().mats().to_vec(), 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..g {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; g];
            c[i] = sign;
            let res = lmi::max_linear(&problem, &c, cfg);
            match res.status {
                Status::Optimal => worst = worst.max(res.objective_value),
                Status::Infeasible => {
                    return Err(Error::Solver("recession cone reported empty; it always contains 0".into()))
                }
                _ => return Err(Error::Solver(format!("recession cone solve did not converge ({:?})", res.status))),
            }
        }
    }
    Ok(Boundedness { bounded: worst <= cfg.tau_psd.sqrt(), max_recession: worst, criterion: "level-1" })
}

/// Largest |x_i| over the level-1 slice {x ∈ ℝ^g : L_A(x) ⪰ 0}; a box radius
/// for every cutting-plane solve whose feasible set lies inside D_A(1).
pub fn level1_radius(p: &Pencil, cfg: &ToleranceConfig) -> Result<f64> {
    let d = p.d();
    let g = p.g();
    let mut radius = 1.0_f64;
    'grow: for _ in 0..40 {
        let problem = LmiProblem::new(Mat::identity(d), p.tuple().mats().to_vec(), radius)?;
        let mut best: f64 = 0.0;
        for i in 0..g {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.0; g];
                c[i] = sign;
                let res = lmi::max_linear(&problem, &c, cfg);
                if res.status != Status::Optimal {
                    return Err(Error::Solver(format!("level-1 radius solve failed ({:?})", res.status)));
                }
                if res.objective_value >= radius * (1.0 - 1e-6) {
                    radius *= 2.0;
                    continue 'grow;
                }
                best = best.max(res.objective_value);
            }
        }
        return Ok(best);
    }
    Err(Error::Input("pencil not certified bounded".into()))
}
