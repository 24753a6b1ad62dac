//! Dilation subspaces, maximal 1-dilations and the Arveson dilation loop.

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;

use crate::error::{input, Error, Result};
use crate::linalg::{real_null_space, HermEigen, Mat, C64};
use crate::lmi::{self, LmiProblem, Status};
use crate::tuple::{
    block_tuple, eval_homogeneous, eval_monic, is_bounded, level1_radius, Field, MatrixTuple, Pencil, ToleranceConfig,
};

/// Orthonormal basis of the dilation subspace of X.
#[derive(Clone, Debug)]
pub struct DilationSubspace {
    pub field: Field,
    /// Each element is a g-tuple of n×1 columns.
    pub basis: Vec<MatrixTuple>,
    pub dim: usize,
    /// Orthonormal columns spanning ker L_A(X).
    pub kernel_basis: Mat,
    /// Smallest non-kernel over largest kernel eigenvalue of L_A(X).
    pub kernel_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DilationStep {
    pub beta: MatrixTuple,
    pub c: f64,
    pub gamma: Vec<f64>,
    pub y_next: MatrixTuple,
    pub dim_before: usize,
    pub dim_after: usize,
    /// Restarts of the norm ascent needed before the dimension dropped.
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DilationTrace {
    pub steps: Vec<DilationStep>,
    pub x_in: MatrixTuple,
    pub y_out: MatrixTuple,
    /// [Iₙ; 0], (n+k)×n.
    pub isometry: Mat,
}

impl DilationTrace {
    pub fn initial_dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.dim_before)
    }
}

/// Eigen-split of a PSD matrix into numerical kernel and the rest.
pub(crate) struct KernelSplit {
    pub eig: HermEigen,
    pub nker: usize,
}

impl KernelSplit {
    pub fn new(l: &Mat, cfg: &ToleranceConfig) -> Self {
        let eig = l.herm_eigen();
        let lmax = eig.values.last().copied().unwrap_or(0.0);
        let cut = cfg.tau_ker * lmax.max(1.0);
        let nker = eig.values.iter().take_while(|&&v| v <= cut).count();
        KernelSplit { eig, nker }
    }

    pub fn kernel(&self) -> Mat {
        self.eig.vectors.columns(0, self.nker)
    }

    pub fn gap(&self) -> Option<f64> {
        let v = &self.eig.values;
        if self.nker == 0 || self.nker == v.len() {
            return None;
        }
        Some(v[self.nker] / v[self.nker - 1].abs().max(f64::MIN_POSITIVE))
    }

    /// Smallest eigenvalue above the kernel cut.
    pub fn lambda_plus(&self) -> Option<f64> {
        self.eig.values.get(self.nker).copied()
    }

    /// Pseudoinverse dropping exactly the kernel directions.
    pub fn pinv(&self) -> Mat {
        let m = self.eig.values.len();
        let inv: Vec<f64> =
            self.eig.values.iter().enumerate().map(|(i, &v)| if i < self.nker { 0.0 } else { 1.0 / v }).collect();
        let q = &self.eig.vectors;
        let d = Mat::Real(DMatrix::from_diagonal(&DVector::from_vec(inv)));
        let out = q.mul(&d).mul(&q.adjoint());
        if m == 0 {
            out
        } else {
            out.symmetrized()
        }
    }
}

fn working_field(p: &Pencil, x: &MatrixTuple) -> Field {
    if p.field() == Field::Complex || x.field() == Field::Complex {
        Field::Complex
    } else {
        Field::Real
    }
}

fn check_member(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<Mat> {
    if !x.is_square() || !x.is_self_adjoint(cfg.tau_sym * x.frobenius().max(1.0)) {
        return input("tuple must consist of self-adjoint square matrices");
    }
    let l = eval_monic(p, x)?;
    let lam = l.min_eigenvalue();
    if lam < -cfg.tau_psd {
        return input(format!("tuple is not in the spectrahedron (λ_min = {lam:.3e})"));
    }
    Ok(l)
}

pub fn dilation_subspace(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<DilationSubspace> {
    dilation_subspace_over(p, x, working_field(p, x), cfg)
}

/// Dilation subspace with β ranging over `field` (complex is allowed for real
/// inputs; real is upgraded to the working field of the inputs).
pub fn dilation_subspace_over(
    p: &Pencil,
    x: &MatrixTuple,
    field: Field,
    cfg: &ToleranceConfig,
) -> Result<DilationSubspace> {
    let field = if working_field(p, x) == Field::Complex { Field::Complex } else { field };
    let l = check_member(p, x, cfg)?;
    let split = KernelSplit::new(&l, cfg);
    if let Some(gap) = split.gap() {
        if gap < 1e2 {
            log::warn!("kernel cut of L_A(X) is ambiguous (gap ratio {gap:.2e})");
        }
    }
    let (d, n, g) = (p.d(), x.rows(), p.g());
    let kernel = split.kernel();
    let ng = n * g;
    let params = if field == Field::Real { ng } else { 2 * ng };

    let null_basis = if split.nker == 0 {
        DMatrix::identity(params, params)
    } else {
        let kc = kernel.to_complex();
        let rows_per = if field == Field::Real { d } else { 2 * d };
        let mut m = DMatrix::<f64>::zeros(split.nker * rows_per, params);
        let coeffs: Vec<DMatrix<C64>> = (0..g).map(|j| p.coeff(j).to_complex()).collect();
        for k in 0..split.nker {
            for (j, aj) in coeffs.iter().enumerate() {
                for q in 0..n {
                    // w = A_j v_q with v_q[b] = v[b·n + q]
                    let vq = DVector::from_fn(d, |b, _| kc[(b * n + q, k)]);
                    let w = aj * vq;
                    let col = j * n + q;
                    for a in 0..d {
                        match field {
                            Field::Real => m[(k * d + a, col)] = w[a].re,
                            Field::Complex => {
                                let base = k * 2 * d;
                                // conj(x + iy)·w = x·w − i·y·w
                                m[(base + a, col)] = w[a].re;
                                m[(base + d + a, col)] = w[a].im;
                                m[(base + a, ng + col)] = w[a].im;
                                m[(base + d + a, ng + col)] = -w[a].re;
                            }
                        }
                    }
                }
            }
        }
        let ns = real_null_space(&m, cfg.tau_ker);
        if let Some(gap) = ns.gap_ratio() {
            if gap < 1e2 {
                log::warn!("dilation subspace rank cut is ambiguous (gap ratio {gap:.2e})");
            }
        }
        ns.basis
    };

    let basis: Vec<MatrixTuple> = match field {
        Field::Real => (0..null_basis.ncols())
            .map(|k| columns_to_tuple(Field::Real, n, g, |i| C64::new(null_basis[(i, k)], 0.0)))
            .collect::<Result<_>>()?,
        Field::Complex => complex_basis(&null_basis, ng)
            .into_iter()
            .map(|v| columns_to_tuple(Field::Complex, n, g, |i| v[i]))
            .collect::<Result<_>>()?,
    };
    Ok(DilationSubspace { field, dim: basis.len(), basis, kernel_basis: kernel, kernel_gap: split.gap() })
}

fn columns_to_tuple(field: Field, n: usize, g: usize, f: impl Fn(usize) -> C64) -> Result<MatrixTuple> {
    let mats = (0..g)
        .map(|j| match field {
            Field::Real => Mat::Real(DMatrix::from_fn(n, 1, |p, _| f(j * n + p).re)),
            Field::Complex => Mat::Complex(DMatrix::from_fn(n, 1, |p, _| f(j * n + p))),
        })
        .collect();
    MatrixTuple::new(field, mats)
}

/// Complex orthonormal basis of the ℂ-span of real parameter vectors
/// (x, y) ↦ x + iy. The real null space is closed under multiplication by i,
/// so its complex dimension is half the real one.
fn complex_basis(null_basis: &DMatrix<f64>, ng: usize) -> Vec<Vec<C64>> {
    let k = null_basis.ncols();
    if k == 0 {
        return Vec::new();
    }
    if k % 2 == 1 {
        log::warn!("real dilation subspace of a complex problem has odd dimension {k}");
    }
    let b = DMatrix::from_fn(ng, k, |i, c| C64::new(null_basis[(i, c)], null_basis[(ng + i, c)]));
    let svd = SVD::new(b, true, false);
    let u = svd.u.expect("requested U");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let dim = k / 2;
    order
        .into_iter()
        .take(dim)
        .map(|c| {
            let mut v: Vec<C64> = u.column(c).iter().copied().collect();
            phase_fix(&mut v);
            v
        })
        .collect()
}

/// Rotate so the first coordinate of non-negligible size is real positive.
pub(crate) fn phase_fix(v: &mut [C64]) {
    let scale = v.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if let Some(first) = v.iter().copied().find(|z| z.norm() > 1e-9 * scale.max(1e-300)) {
        let ph = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= ph);
    }
}

pub fn is_arveson(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<bool> {
    Ok(dilation_subspace(p, x, cfg)?.dim == 0)
}

fn containment_residual(p: &Pencil, beta: &MatrixTuple, split: &KernelSplit) -> Result<f64> {
    if split.nker == 0 {
        return Ok(0.0);
    }
    let r = eval_homogeneous(p, beta)?.adjoint().mul(&split.kernel()).to_complex();
    Ok(r.column_iter().map(|col| col.norm()).fold(0.0, f64::max))
}

fn check_beta(p: &Pencil, x: &MatrixTuple, beta: &MatrixTuple, split: &KernelSplit, cfg: &ToleranceConfig) -> Result<()> {
    if beta.g() != p.g() || beta.rows() != x.rows() || beta.cols() != 1 {
        return input("β must be a g-tuple of n×1 columns");
    }
    let bnorm = beta.frobenius();
    if bnorm == 0.0 {
        return input("β must be nonzero");
    }
    let res = containment_residual(p, beta, split)?;
    let scale = 10.0 * cfg.tau_ker * (1.0 + p.norm() * bnorm) * (split.nker.max(1) as f64).sqrt();
    if res > scale {
        return input(format!("β is not in the dilation subspace (residual {res:.3e})"));
    }
    Ok(())
}

/// c₀ with L_A(X) − c₀²Λ_A(β)Λ_A(β*) ⪰ 0.
pub fn feasibility_scale(p: &Pencil, x: &MatrixTuple, beta: &MatrixTuple, cfg: &ToleranceConfig) -> Result<f64> {
    let l = check_member(p, x, cfg)?;
    let split = KernelSplit::new(&l, cfg);
    check_beta(p, x, beta, &split, cfg)?;
    scale_from_split(p, beta, &split)
}

fn scale_from_split(p: &Pencil, beta: &MatrixTuple, split: &KernelSplit) -> Result<f64> {
    let lam = eval_homogeneous(p, beta)?;
    let m = lam.mul(&lam.adjoint());
    let norm = m.spectral_norm();
    if norm == 0.0 {
        return input("Λ_A(β) vanishes; no dilation direction");
    }
    let lp = split.lambda_plus().ok_or_else(|| Error::Input("L_A(X) vanishes identically".into()))?;
    Ok((lp / norm).sqrt())
}

/// Q = Λ_A(β*) L_A(X)† Λ_A(β), the d×d matrix governing the reduced LMI
/// I − α²Q + Λ_A(γ) ⪰ 0 for the block dilation at scale α.
fn reduced_q(p: &Pencil, beta: &MatrixTuple, split: &KernelSplit) -> Result<Mat> {
    let lam = eval_homogeneous(p, beta)?;
    Ok(lam.adjoint().mul(&split.pinv()).mul(&lam).symmetrized())
}

struct Slice<'a> {
    p: &'a Pencil,
    q: Mat,
    radius: f64,
}

impl Slice<'_> {
    fn problem(&self, alpha: f64) -> Result<LmiProblem> {
        let d = self.p.d();
        let f0 = Mat::identity(d).sub(&self.q.scale(alpha * alpha));
        LmiProblem::new(f0, self.p.tuple().mats().to_vec(), self.radius)
    }

    /// Witness γ with λ_min(I − α²Q + Λ_A(γ)) ≥ 0, if one is found.
    fn test(&self, alpha: f64, cfg: &ToleranceConfig) -> Result<Option<Vec<f64>>> {
        let res = lmi::min_eig_at_least(&self.problem(alpha)?, 0.0, cfg);
        log::trace!("scale test alpha={alpha:.15e} value={:.6e} status={:?}", res.objective_value, res.status);
        Ok((res.status == Status::Optimal).then_some(res.y))
    }
}

const POLISH_CLUSTER: f64 = 1e-4;
const POLISH_GAP: f64 = 1e-2;
const POLISH_MAX_MOVE: f64 = 1e-4;

impl Slice<'_> {
    fn matrix(&self, s: f64, gamma: &[f64]) -> Mat {
        let mut f = Mat::identity(self.p.d()).sub(&self.q.scale(s));
        for (a, &t) in self.p.tuple().mats().iter().zip(gamma) {
            f = f.add(&a.scale(t));
        }
        f
    }

    /// Gauss-Newton on (c², γ) that sends the near-zero eigenvalues of the
    /// slice matrix to zero. The cutting-plane solution leaves them at the
    /// order of the PSD slack, which is too coarse for the kernel count of
    /// the next member. Returns None unless the cluster is well separated
    /// and the correction converges with a small move.
    fn polish(&self, c: f64, gamma: &[f64]) -> Option<(f64, Vec<f64>)> {
        let g = gamma.len();
        let mut s = c * c;
        let mut y = gamma.to_vec();
        let f = self.matrix(s, &y);
        let eig = f.herm_eigen();
        let scale = eig.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let m = eig.values.iter().take_while(|&&v| v <= POLISH_CLUSTER * scale).count();
        if m == 0 || eig.values.get(m).is_some_and(|&v| v < POLISH_GAP * scale) {
            return None;
        }
        for _ in 0..8 {
            let eig = self.matrix(s, &y).herm_eigen();
            let resid = eig.values[..m].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if resid <= 1e-14 * scale {
                break;
            }
            let e = eig.vectors.columns(0, m);
            let ea = e.adjoint();
            let project = |mat: &Mat| ea.mul(mat).mul(&e);
            let mut cols = vec![project(&self.q).scale(-1.0)];
            cols.extend(self.p.tuple().mats().iter().map(project));
            let rhs = project(&self.matrix(s, &y)).scale(-1.0);
            let mut rows = Vec::new();
            let mut b = Vec::new();
            for i in 0..m {
                for j in i..m {
                    rows.push(cols.iter().map(|cm| cm.entry(i, j).re).collect::<Vec<_>>());
                    b.push(rhs.entry(i, j).re);
                    if i != j && e.is_complex() {
                        rows.push(cols.iter().map(|cm| cm.entry(i, j).im).collect());
                        b.push(rhs.entry(i, j).im);
                    }
                }
            }
            let jac = DMatrix::from_fn(rows.len(), g + 1, |r, k| rows[r][k]);
            let svd = jac.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max();
            let step = svd.solve(&DVector::from_vec(b), tol).ok()?;
            s += step[0];
            for (t, d) in y.iter_mut().zip(step.iter().skip(1)) {
                *t += d;
            }
        }
        let moved = ((s - c * c).abs() + y.iter().zip(gamma).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            / (1.0 + c * c + lmi::norm(gamma));
        let eig = self.matrix(s, &y).herm_eigen();
        let resid = eig.values[..m].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let separated = eig.values.get(m).is_none_or(|&v| v >= POLISH_GAP * scale);
        if s <= 0.0 || resid > 1e-12 * scale || moved > POLISH_MAX_MOVE || !separated {
            log::debug!("polish rejected: residual {resid:.3e}, move {moved:.3e}");
            return None;
        }
        log::debug!("polished {m} slice eigenvalues, move {moved:.3e}");
        Some((s.sqrt(), y))
    }
}

pub fn maximal_one_dilation<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    beta: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<DilationStep> {
    let dim_before = dilation_subspace(p, x, cfg)?.dim;
    let radius = level1_radius(p, cfg)?;
    one_dilation(p, x, beta, dim_before, radius, cfg, rng).map(|(s, _)| s)
}

const MAX_RETRIES: usize = 5;

fn one_dilation<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    beta: &MatrixTuple,
    dim_before: usize,
    radius: f64,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<(DilationStep, DilationSubspace)> {
    let l = check_member(p, x, cfg)?;
    let split = KernelSplit::new(&l, cfg);
    check_beta(p, x, beta, &split, cfg)?;
    let c0 = scale_from_split(p, beta, &split)?;
    let slice = Slice { p, q: reduced_q(p, beta, &split)?, radius: radius * 1.01 + 1e-9 };

    let (mut lo, mut witness) = match slice.test(c0, cfg)? {
        Some(w) => (c0, w),
        None => (0.0, vec![0.0; p.g()]),
    };
    let mut hi = 2.0 * c0;
    let mut doublings = 0;
    while let Some(w) = slice.test(hi, cfg)? {
        lo = hi;
        witness = w;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Solver("dilation scale unbounded; the spectrahedron is not compact".into()));
        }
    }
    while hi - lo > cfg.tau_opt * lo.max(1.0) {
        let mid = 0.5 * (lo + hi);
        match slice.test(mid, cfg)? {
            Some(w) => {
                lo = mid;
                witness = w;
            }
            None => hi = mid,
        }
    }
    let mut c = lo;
    log::debug!("maximal scale c = {c:.15e} (c0 = {c0:.6e})");
    let prob = slice.problem(c)?;

    let mut last_dims = None;
    for attempt in 0..=MAX_RETRIES {
        let res = if attempt == 0 {
            lmi::local_norm_max(&prob, &witness, cfg, rng)
        } else {
            let dir = lmi::random_unit(p.g(), rng);
            lmi::local_norm_max_from_direction(&prob, &witness, &dir, cfg, rng)
        };
        if !matches!(res.status, Status::Stationary | Status::Optimal) {
            log::debug!("norm ascent attempt {attempt} ended with {:?}", res.status);
            continue;
        }
        let mut candidates = Vec::with_capacity(2);
        if let Some(polished) = slice.polish(c, &res.y) {
            candidates.push(polished);
        }
        candidates.push((c, res.y));
        for (cand_c, gamma) in candidates {
            let (y, c_used) = match assemble_member(p, x, beta, cand_c, &gamma, cfg) {
                Ok(v) => v,
                Err(e) => {
                    log::debug!("attempt {attempt}: {e}");
                    continue;
                }
            };
            let sub = dilation_subspace(p, &y, cfg)?;
            if sub.dim < dim_before {
                c = c_used;
                let step = DilationStep {
                    beta: beta.clone(),
                    c,
                    gamma,
                    y_next: y,
                    dim_before,
                    dim_after: sub.dim,
                    retries: attempt,
                };
                log::info!("dilation step: c = {c:.9e}, dim {dim_before} -> {}", sub.dim);
                return Ok((step, sub));
            }
            last_dims = Some(sub.dim);
        }
        log::debug!("attempt {attempt}: dimension {dim_before} -> {last_dims:?} did not drop");
    }
    Err(Error::Solver(format!(
        "dilation subspace dimension did not decrease after {MAX_RETRIES} retries (before {dim_before}, after {last_dims:?}, c = {c:.6e})"
    )))
}

/// Y = [[X, cβ], [cβ*, γ]], shrinking c by relative steps of order 1e-10 when
/// rounding leaves L_A(Y) marginally outside the PSD slack.
fn assemble_member(
    p: &Pencil,
    x: &MatrixTuple,
    beta: &MatrixTuple,
    c: f64,
    gamma: &[f64],
    cfg: &ToleranceConfig,
) -> Result<(MatrixTuple, f64)> {
    let gt = MatrixTuple::scalars(gamma);
    let mut shrink = 0.0;
    for k in 0..40 {
        let cc = c * (1.0 - shrink);
        let y = block_tuple(x, &beta.scale(cc), &gt)?;
        let lam = eval_monic(p, &y)?.min_eigenvalue();
        if lam >= -cfg.tau_psd {
            return Ok((y, cc));
        }
        shrink = 1e-10 * 2f64.powi(k);
    }
    Err(Error::Solver("could not place the dilation inside the spectrahedron".into()))
}

/// Iterated maximal 1-dilations until the dilation subspace is trivial.
pub fn arveson_dilation<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<DilationTrace> {
    cfg.validate()?;
    let mut sub = dilation_subspace(p, x, cfg)?;
    let n = x.rows();
    let initial = sub.dim;
    let mut steps = Vec::new();
    let mut y = x.clone();
    if initial > 0 {
        let b = is_bounded(p, cfg)?;
        if !b.bounded {
            return input("pencil not certified bounded");
        }
        let radius = level1_radius(p, cfg)?;
        while sub.dim > 0 {
            if steps.len() >= initial {
                return Err(Error::Internal(format!(
                    "Arveson loop exceeded the initial dimension {initial}; kernel rank was misjudged"
                )));
            }
            let beta = sub.basis[0].clone();
            let (step, next) = one_dilation(p, &y, &beta, sub.dim, radius, cfg, rng)?;
            y = step.y_next.clone();
            sub = next;
            steps.push(step);
        }
    }
    let total = y.rows();
    let isometry = match y.field() {
        Field::Real => Mat::Real(DMatrix::from_fn(total, n, |i, j| if i == j { 1.0 } else { 0.0 })),
        Field::Complex => Mat::Complex(DMatrix::from_fn(total, n, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })),
    };
    Ok(DilationTrace { steps, x_in: x.clone(), y_out: y, isometry })
}
