//! Block Schur-complement and NC LDL* oracles for PSD decisions on block
//! tuples, each cross-checked against a direct eigenvalue test.

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::linalg::{block, block_diag, Mat};
use crate::tuple::{
    block_tuple, canonical_shuffle, eval_homogeneous, eval_monic, permutation_matrix, Field, MatrixTuple, Pencil,
    ToleranceConfig,
};

/// Eigenvalue test on L_A(Y) for the assembled block tuple Y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DirectTest {
    pub psd: bool,
    pub lambda_min: f64,
    /// ‖P*L_A(Y)P − M‖_F for the canonical shuffle P and the block matrix M
    /// assembled from the pencil evaluated on each block.
    pub shuffle_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchurTest {
    pub psd: bool,
    pub pivot_lambda_min: f64,
    pub complement_lambda_min: f64,
    /// ‖(I − PP†)Λ_A(β*)‖_F / max(1, ‖Λ_A(β*)‖_F) for the pivot P = L_A(γ).
    pub range_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schur2Report {
    pub psd: bool,
    pub direct: DirectTest,
    pub schur: SchurTest,
    /// |λ_min| of the direct test is under 10·τ_psd, so the verdicts were not
    /// compared.
    pub indeterminate: bool,
}

/// D factor of the LDL* factorization in pivot order (X, ψ, γ).
#[derive(Clone, Debug)]
pub struct Ncldl3Blocks {
    pub lx: Mat,
    pub s: Mat,
    pub third: Mat,
}

#[derive(Clone, Debug)]
pub struct Ncldl3Report {
    pub psd: bool,
    pub direct: DirectTest,
    pub blocks: Ncldl3Blocks,
    /// Verdict read off the three pivots alone.
    pub factor_psd: bool,
    /// λ_min of L_A(X), S and the third block.
    pub lambda_min: [f64; 3],
    /// Largest relative range residual among the three pseudoinverse steps.
    pub range_residual: f64,
    /// ‖LDL* − M‖_F / ‖M‖_F with M the block matrix in pivot order.
    pub reassembly_residual: f64,
    pub indeterminate: bool,
}

/// Block parts of Y = [[X, β, η], [β*, γ, σ], [η*, σ*, ψ]].
#[derive(Clone, Debug)]
pub struct Block3 {
    pub x: MatrixTuple,
    pub beta: MatrixTuple,
    pub eta: MatrixTuple,
    pub gamma: MatrixTuple,
    pub sigma: MatrixTuple,
    pub psi: MatrixTuple,
}

impl Block3 {
    /// Cuts a square tuple into the 3×3 layout with diagonal sizes n₁, n₂, n₃.
    pub fn split(y: &MatrixTuple, sizes: [usize; 3]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if !y.is_square() || y.rows() != total {
            return input(format!("tuple of size {} cannot be split as {sizes:?}", y.rows()));
        }
        let offsets = [0, sizes[0], sizes[0] + sizes[1]];
        let part = |i: usize, k: usize| -> Result<MatrixTuple> {
            let mats = y.mats().iter().map(|m| m.view(offsets[i], offsets[k], sizes[i], sizes[k])).collect();
            MatrixTuple::new(y.field(), mats)
        };
        Ok(Block3 {
            x: part(0, 0)?,
            beta: part(0, 1)?,
            eta: part(0, 2)?,
            gamma: part(1, 1)?,
            sigma: part(1, 2)?,
            psi: part(2, 2)?,
        })
    }

    pub fn assemble(&self) -> Result<MatrixTuple> {
        self.check_shapes()?;
        let parts = [&self.x, &self.beta, &self.eta, &self.gamma, &self.sigma, &self.psi];
        let field = if parts.iter().any(|t| t.field() == Field::Complex) { Field::Complex } else { Field::Real };
        let mats = (0..self.x.g())
            .map(|j| {
                block(&[
                    vec![self.x.get(j).clone(), self.beta.get(j).clone(), self.eta.get(j).clone()],
                    vec![self.beta.get(j).adjoint(), self.gamma.get(j).clone(), self.sigma.get(j).clone()],
                    vec![self.eta.get(j).adjoint(), self.sigma.get(j).adjoint(), self.psi.get(j).clone()],
                ])
            })
            .collect();
        MatrixTuple::new(field, mats)
    }

    fn sizes(&self) -> [usize; 3] {
        [self.x.rows(), self.gamma.rows(), self.psi.rows()]
    }

    fn check_shapes(&self) -> Result<()> {
        let g = self.x.g();
        let [n1, n2, n3] = self.sizes();
        let ok = [&self.beta, &self.eta, &self.gamma, &self.sigma, &self.psi].iter().all(|t| t.g() == g)
            && self.x.is_square()
            && self.gamma.is_square()
            && self.psi.is_square()
            && (self.beta.rows(), self.beta.cols()) == (n1, n2)
            && (self.eta.rows(), self.eta.cols()) == (n1, n3)
            && (self.sigma.rows(), self.sigma.cols()) == (n2, n3);
        if ok {
            Ok(())
        } else {
            input("3×3 block parts have incompatible shapes")
        }
    }
}

fn check_diagonal(p: &Pencil, parts: &[&MatrixTuple], cfg: &ToleranceConfig) -> Result<()> {
    for t in parts {
        if t.g() != p.g() {
            return input(format!("pencil has g = {}, block has g = {}", p.g(), t.g()));
        }
        if !t.is_self_adjoint(cfg.tau_sym * t.frobenius().max(1.0)) {
            return input("diagonal blocks must be self-adjoint");
        }
    }
    Ok(())
}

fn direct_test(p: &Pencil, y: &MatrixTuple, sizes: &[usize], assembled: &Mat, cfg: &ToleranceConfig) -> Result<DirectTest> {
    let l = eval_monic(p, y)?;
    let perm = permutation_matrix(&canonical_shuffle(p.d(), sizes));
    let shuffled = perm.adjoint().mul(&l).mul(&perm);
    let shuffle_residual = shuffled.sub(assembled).frobenius();
    if shuffle_residual > 1e-12 * assembled.frobenius().max(1.0) {
        return Err(Error::Internal(format!("canonical shuffle mismatch ({shuffle_residual:.3e})")));
    }
    let lambda_min = l.min_eigenvalue();
    Ok(DirectTest { psd: lambda_min >= -cfg.tau_psd, lambda_min, shuffle_residual })
}

fn range_residual(pivot: &Mat, pinv: &Mat, b: &Mat) -> f64 {
    let proj = pivot.mul(pinv);
    let off = b.sub(&proj.mul(b)).frobenius();
    off / b.frobenius().max(1.0)
}

fn undecided(direct: &DirectTest, cfg: &ToleranceConfig) -> bool {
    direct.lambda_min.abs() < 10.0 * cfg.tau_psd
}

/// PSD test for L_A([[X, β], [β*, γ]]) both directly and through the Schur
/// complement with pivot L_A(γ).
pub fn schur2_check(
    p: &Pencil,
    x: &MatrixTuple,
    beta: &MatrixTuple,
    gamma: &MatrixTuple,
    cfg: &ToleranceConfig,
) -> Result<Schur2Report> {
    check_diagonal(p, &[x, gamma], cfg)?;
    let y = block_tuple(x, beta, gamma)?;
    let lx = eval_monic(p, x)?;
    let lg = eval_monic(p, gamma)?;
    let lb = eval_homogeneous(p, beta)?;
    let lbs = eval_homogeneous(p, &beta.adjoint())?;
    let assembled = block(&[vec![lx.clone(), lb.clone()], vec![lbs.clone(), lg.clone()]]);
    let direct = direct_test(p, &y, &[x.rows(), gamma.rows()], &assembled, cfg)?;

    let pinv = lg.herm_pinv(cfg.tau_ker);
    let complement = lx.sub(&lb.mul(&pinv).mul(&lbs));
    let pivot_lambda_min = lg.min_eigenvalue();
    let complement_lambda_min = complement.min_eigenvalue();
    let range = range_residual(&lg, &pinv, &lbs);
    let schur = SchurTest {
        psd: pivot_lambda_min >= -cfg.tau_psd && complement_lambda_min >= -cfg.tau_psd && range <= cfg.tau_ker,
        pivot_lambda_min,
        complement_lambda_min,
        range_residual: range,
    };
    let indeterminate = undecided(&direct, cfg);
    if !indeterminate && schur.psd != direct.psd {
        return Err(Error::Inconsistency(format!(
            "direct λ_min = {:.6e} but Schur test says psd = {} (pivot {:.3e}, complement {:.3e}, range {:.3e})",
            direct.lambda_min, schur.psd, pivot_lambda_min, complement_lambda_min, range
        )));
    }
    Ok(Schur2Report { psd: direct.psd, direct, schur, indeterminate })
}

/// NC LDL* of L_A(Y) for Y in the 3×3 layout, pivoting on X, then ψ, then γ.
pub fn ncldl3(p: &Pencil, parts: &Block3, cfg: &ToleranceConfig) -> Result<Ncldl3Report> {
    parts.check_shapes()?;
    check_diagonal(p, &[&parts.x, &parts.gamma, &parts.psi], cfg)?;
    let y = parts.assemble()?;
    let lx = eval_monic(p, &parts.x)?;
    let lg = eval_monic(p, &parts.gamma)?;
    let lp = eval_monic(p, &parts.psi)?;
    let hom = |t: &MatrixTuple| eval_homogeneous(p, t);
    let (lb, le, ls) = (hom(&parts.beta)?, hom(&parts.eta)?, hom(&parts.sigma)?);
    let (lbs, les, lss) = (lb.adjoint(), le.adjoint(), ls.adjoint());
    let natural = block(&[
        vec![lx.clone(), lb.clone(), le.clone()],
        vec![lbs.clone(), lg.clone(), ls.clone()],
        vec![les.clone(), lss.clone(), lp.clone()],
    ]);
    let direct = direct_test(p, &y, &parts.sizes(), &natural, cfg)?;

    let lx_pinv = lx.herm_pinv(cfg.tau_ker);
    let s = lp.sub(&les.mul(&lx_pinv).mul(&le));
    let w = lss.sub(&les.mul(&lx_pinv).mul(&lb));
    let s_pinv = s.herm_pinv(cfg.tau_ker);
    let third = lg.sub(&lbs.mul(&lx_pinv).mul(&lb)).sub(&w.adjoint().mul(&s_pinv).mul(&w));
    let range = range_residual(&lx, &lx_pinv, &le)
        .max(range_residual(&lx, &lx_pinv, &lb))
        .max(range_residual(&s, &s_pinv, &w));
    let lambda_min = [lx.min_eigenvalue(), s.min_eigenvalue(), third.min_eigenvalue()];
    let psd = lambda_min.iter().all(|&l| l >= -cfg.tau_psd) && range <= cfg.tau_ker;

    let (d, [n1, n2, n3]) = (p.d(), parts.sizes());
    let id = |k: usize| Mat::identity(d * k);
    let zero = |r: usize, c: usize| Mat::zeros(d * r, d * c);
    let lower = block(&[
        vec![id(n1), zero(n1, n3), zero(n1, n2)],
        vec![les.mul(&lx_pinv), id(n3), zero(n3, n2)],
        vec![lbs.mul(&lx_pinv), w.adjoint().mul(&s_pinv), id(n2)],
    ]);
    let dfac = block_diag(&[lx.clone(), s.clone(), third.clone()]);
    let pivoted = block(&[
        vec![lx.clone(), le.clone(), lb.clone()],
        vec![les, lp, lss],
        vec![lbs, ls, lg],
    ]);
    let reassembly_residual =
        lower.mul(&dfac).mul(&lower.adjoint()).sub(&pivoted).frobenius() / pivoted.frobenius().max(1.0);

    let indeterminate = undecided(&direct, cfg);
    if !indeterminate && psd != direct.psd {
        return Err(Error::Inconsistency(format!(
            "direct λ_min = {:.6e} but NC LDL* says psd = {psd} (blocks {lambda_min:?}, range {range:.3e})",
            direct.lambda_min
        )));
    }
    Ok(Ncldl3Report {
        psd: direct.psd,
        direct,
        blocks: Ncldl3Blocks { lx, s, third },
        factor_psd: psd,
        lambda_min,
        range_residual: range,
        reassembly_residual,
        indeterminate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{instance_rng, random_at_fraction, random_pencil};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn interval() -> Pencil {
        Pencil::real(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])]).unwrap()
    }

    fn s(v: f64) -> MatrixTuple {
        MatrixTuple::scalars(&[v])
    }

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn trivial_dilation_reduces_to_x() {
        let p = interval();
        let r = schur2_check(&p, &s(0.5), &s(0.0), &s(0.0), &cfg()).unwrap();
        assert!(r.psd && r.schur.psd && !r.indeterminate);
        assert!((r.direct.lambda_min - 0.5).abs() < 1e-12);
        let r = schur2_check(&p, &s(1.5), &s(0.0), &s(0.0), &cfg()).unwrap();
        assert!(!r.psd && !r.schur.psd);
    }

    #[test]
    fn interval_dilation_of_zero_is_on_the_boundary() {
        let r = schur2_check(&interval(), &s(0.0), &s(1.0), &s(0.0), &cfg()).unwrap();
        assert!(r.psd && r.schur.psd);
        assert!(r.direct.lambda_min.abs() < 1e-12);
        assert!(r.schur.complement_lambda_min.abs() < 1e-12);
        assert!(r.indeterminate);
        let r = schur2_check(&interval(), &s(0.0), &s(1.1), &s(0.0), &cfg()).unwrap();
        assert!(!r.psd && !r.schur.psd);
    }

    #[test]
    fn ncldl3_with_empty_third_row_gives_q() {
        let p = interval();
        let parts = Block3 { x: s(0.5), beta: s(0.4), eta: s(0.0), gamma: s(-0.2), sigma: s(0.0), psi: s(0.0) };
        let r = ncldl3(&p, &parts, &cfg()).unwrap();
        let lx = eval_monic(&p, &s(0.5)).unwrap();
        let lb = eval_homogeneous(&p, &s(0.4)).unwrap();
        let q = lb.adjoint().mul(&lx.herm_pinv(1e-8)).mul(&lb);
        let expect = eval_monic(&p, &s(-0.2)).unwrap().sub(&q);
        assert!(r.blocks.third.sub(&expect).frobenius() < 1e-14);
        assert!(r.blocks.s.sub(&Mat::identity(2)).frobenius() < 1e-14);
        assert!(r.reassembly_residual < 1e-14);
    }

    #[test]
    fn ncldl3_middle_block_is_identity_minus_c2_q() {
        let p = interval();
        for (c, psd) in [(1.0, true), (0.8, true), (1.1, false)] {
            let parts = Block3 { x: s(0.0), beta: s(0.0), eta: s(c), gamma: s(0.0), sigma: s(0.0), psi: s(0.0) };
            let r = ncldl3(&p, &parts, &cfg()).unwrap();
            // Q = I for β̂ = 1 at X = 0
            let expect = Mat::identity(2).scale(1.0 - c * c);
            assert!(r.blocks.s.sub(&expect).frobenius() < 1e-14);
            assert_eq!(r.psd, psd);
        }
    }

    #[test]
    fn shape_errors() {
        let p = interval();
        let bad = MatrixTuple::real(vec![DMatrix::zeros(1, 2)]).unwrap();
        assert!(schur2_check(&p, &s(0.0), &bad, &s(0.0), &cfg()).is_err());
        let y = MatrixTuple::real(vec![DMatrix::identity(3, 3)]).unwrap();
        assert!(Block3::split(&y, [1, 1, 2]).is_err());
    }

    #[test]
    fn random_instances_agree() {
        let cfg = cfg();
        let (mut decided, mut psd_count) = (0, 0);
        for i in 0..60u64 {
            let mut rng = instance_rng(11, i);
            let p = random_pencil(1 + (i % 3) as usize, 1 + (i % 2) as usize, &mut rng).unwrap();
            let field = if i % 4 == 3 { Field::Complex } else { Field::Real };
            let sizes = [1 + (i % 2) as usize, 1, 1 + (i % 3 == 0) as usize];
            let frac = rng.random_range(0.5..1.5);
            let y = random_at_fraction(&p, sizes.iter().sum(), field, frac, &mut rng).unwrap();
            let parts = Block3::split(&y, sizes).unwrap();
            assert_eq!(parts.assemble().unwrap(), y);
            let three = ncldl3(&p, &parts, &cfg).unwrap();
            let n1 = sizes[0];
            let rest = sizes[1] + sizes[2];
            let cut = |r0: usize, c0: usize, nr: usize, nc: usize| {
                MatrixTuple::new(field, y.mats().iter().map(|m| m.view(r0, c0, nr, nc)).collect()).unwrap()
            };
            let two = schur2_check(&p, &cut(0, 0, n1, n1), &cut(0, n1, n1, rest), &cut(n1, n1, rest, rest), &cfg).unwrap();
            assert_eq!(two.direct.lambda_min, three.direct.lambda_min);
            if !three.indeterminate {
                decided += 1;
                psd_count += three.psd as usize;
                assert_eq!(two.schur.psd, two.psd);
                assert!(three.reassembly_residual < 1e-8, "{}", three.reassembly_residual);
            }
        }
        assert!(decided > 50 && psd_count > 10 && psd_count < decided - 10, "{decided} {psd_count}");
    }
}
