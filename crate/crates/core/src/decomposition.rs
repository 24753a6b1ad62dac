//! Commutants, irreducible splitting and decomposition into absolute extreme points.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complexify;
use crate::dilation::{arveson_dilation, is_arveson, DilationTrace};
use crate::error::{Error, Result};
use crate::linalg::{real_null_space, Mat, C64};
use crate::tuple::{Field, MatrixTuple, Pencil, ToleranceConfig};

#[derive(Clone, Debug)]
pub struct CommutantBasis {
    pub field: Field,
    /// Self-adjoint n×n matrices, orthonormal in the Frobenius inner product.
    pub basis: Vec<Mat>,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub irreducible: bool,
    pub arveson: bool,
    pub absolute_extreme: bool,
    /// Irreducibility over ℂ, reported separately for real tuples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irreducible_over_complex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeDecomposition {
    pub field: Field,
    pub input: MatrixTuple,
    pub components: Vec<MatrixTuple>,
    /// Vᵢ, nᵢ×n, with X = Σ Vᵢ*YⁱVᵢ.
    pub isometries: Vec<Mat>,
    pub flags: Vec<Flags>,
    pub total_size: usize,
    /// n(g+1) over ℝ, 2n(g+1) when the dilation ran on a realification.
    pub bound: usize,
    pub dilation_steps: usize,
    /// Class label per component; equal labels mean the word-trace test
    /// could not tell the components apart (a heuristic, not a proof).
    pub equivalence_classes: Vec<usize>,
}

impl ExtremeDecomposition {
    /// Vᵢ*Vᵢ for each component.
    pub fn weights(&self) -> Vec<Mat> {
        self.isometries.iter().map(|v| v.adjoint().mul(v)).collect()
    }

    pub fn reconstruction_error(&self) -> f64 {
        let n = self.input.rows();
        (0..self.input.g())
            .map(|j| {
                let sum = self
                    .components
                    .iter()
                    .zip(&self.isometries)
                    .fold(Mat::zeros(n, n), |acc, (y, v)| acc.add(&v.adjoint().mul(y.get(j)).mul(v)));
                sum.sub(self.input.get(j)).frobenius().powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn partition_error(&self) -> f64 {
        let n = self.input.rows();
        self.weights().iter().fold(Mat::zeros(n, n), |acc, w| acc.add(w)).sub(&Mat::identity(n)).frobenius()
    }
}

/// Frobenius-orthonormal basis of the self-adjoint n×n matrices over `field`.
fn self_adjoint_basis(n: usize, field: Field) -> Vec<Mat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            let mut m = DMatrix::<f64>::zeros(n, n);
            if a == b {
                m[(a, a)] = 1.0;
            } else {
                m[(a, b)] = s;
                m[(b, a)] = s;
            }
            out.push(Mat::Real(m));
        }
    }
    if field == Field::Complex {
        out = out.into_iter().map(Mat::into_complex).collect();
        for a in 0..n {
            for b in a + 1..n {
                let mut m = DMatrix::<C64>::zeros(n, n);
                m[(a, b)] = C64::new(0.0, s);
                m[(b, a)] = C64::new(0.0, -s);
                out.push(Mat::Complex(m));
            }
        }
    }
    out
}

pub fn commutant(x: &MatrixTuple, field: Field, cfg: &ToleranceConfig) -> CommutantBasis {
    let field = if x.field() == Field::Complex { Field::Complex } else { field };
    let n = x.rows();
    let gens = self_adjoint_basis(n, field);
    let per = if field == Field::Real { n * n } else { 2 * n * n };
    let mut m = DMatrix::<f64>::zeros(x.g() * per, gens.len());
    for (k, e) in gens.iter().enumerate() {
        for j in 0..x.g() {
            let xj = x.get(j);
            let comm = e.mul(xj).sub(&xj.mul(e)).to_complex();
            for (idx, z) in comm.iter().enumerate() {
                m[(j * per + idx, k)] = z.re;
                if field == Field::Complex {
                    m[(j * per + n * n + idx, k)] = z.im;
                }
            }
        }
    }
    let ns = real_null_space(&m, cfg.tau_ker);
    let basis: Vec<Mat> = (0..ns.dim())
        .map(|c| {
            gens.iter()
                .enumerate()
                .fold(Mat::zeros(n, n), |acc, (k, e)| acc.add(&e.scale(ns.basis[(k, c)])))
                .demote(0.0)
        })
        .map(|w| if field == Field::Complex { w.into_complex() } else { w })
        .collect();
    CommutantBasis { field, dim: basis.len(), basis }
}

pub fn is_irreducible(x: &MatrixTuple, field: Field, cfg: &ToleranceConfig) -> bool {
    x.rows() <= 1 || commutant(x, field, cfg).dim == 1
}

/// Components Yⁱ with isometries Vᵢ (n×nᵢ, Yⁱ = Vᵢ*XVᵢ); the Vᵢ side by side
/// form a unitary that block-diagonalizes X.
pub fn split_irreducible(x: &MatrixTuple, field: Field, cfg: &ToleranceConfig) -> Result<Vec<(MatrixTuple, Mat)>> {
    let field = if x.field() == Field::Complex { Field::Complex } else { field };
    let x = if field == Field::Complex { x.to_complex() } else { x.clone() };
    split_rec(&x, field, cfg, 0)
}

fn identity_in(n: usize, field: Field) -> Mat {
    match field {
        Field::Real => Mat::identity(n),
        Field::Complex => Mat::identity(n).into_complex(),
    }
}

fn split_rec(x: &MatrixTuple, field: Field, cfg: &ToleranceConfig, depth: usize) -> Result<Vec<(MatrixTuple, Mat)>> {
    let n = x.rows();
    if n <= 1 {
        return Ok(vec![(x.clone(), identity_in(n, field))]);
    }
    if depth > n + 64 {
        return Err(Error::Internal("irreducible splitting failed to terminate".into()));
    }
    let cb = commutant(x, field, cfg);
    if cb.dim <= 1 {
        return Ok(vec![(x.clone(), identity_in(n, field))]);
    }
    let centred: Vec<Mat> = cb
        .basis
        .iter()
        .map(|w| {
            let tr: f64 = (0..n).map(|i| w.entry(i, i).re).sum();
            w.sub(&identity_in(n, field).scale(tr / n as f64))
        })
        .collect();
    let mut order: Vec<usize> = (0..centred.len()).collect();
    order.sort_by(|&a, &b| centred[b].frobenius().total_cmp(&centred[a].frobenius()));

    for &k in &order {
        let w = &centred[k];
        let wnorm = w.frobenius();
        if wnorm == 0.0 {
            continue;
        }
        let eig = w.herm_eigen();
        let gap_min = 10.0 * cfg.tau_ker * wnorm;
        let mut clusters = vec![vec![0usize]];
        for i in 1..n {
            if eig.values[i] - eig.values[i - 1] >= gap_min {
                clusters.push(Vec::new());
            }
            clusters.last_mut().expect("nonempty").push(i);
        }
        if clusters.len() < 2 {
            continue;
        }
        let mut out = Vec::new();
        for cl in clusters {
            let v = eig.vectors.select_columns(&cl);
            let v = if field == Field::Real { v.demote(f64::INFINITY) } else { v.into_complex() };
            let y = x.conjugate_by(&v)?;
            for (yy, vv) in split_rec(&y, field, cfg, depth + 1)? {
                out.push((yy, v.mul(&vv)));
            }
        }
        return Ok(out);
    }
    Err(Error::Solver(format!(
        "commutant of dimension {} has no eigenvalue gap of relative size {:.1e}",
        cb.dim,
        10.0 * cfg.tau_ker
    )))
}

pub fn absolute_extreme_certify(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<Flags> {
    let field = if p.field() == Field::Complex || x.field() == Field::Complex { Field::Complex } else { Field::Real };
    let irreducible = is_irreducible(x, field, cfg);
    let arveson = is_arveson(p, x, cfg)?;
    let irreducible_over_complex = (field == Field::Real).then(|| is_irreducible(x, Field::Complex, cfg));
    let warning = (p.field() == Field::Complex)
        .then(|| "complex pencil: closure under complex conjugation is not certified".to_string());
    Ok(Flags { irreducible, arveson, absolute_extreme: irreducible && arveson, irreducible_over_complex, warning })
}

/// Arveson-dilate X, split the dilation into irreducibles and express X as a
/// matrix convex combination of them. Complex tuples go through the real
/// pipeline of [`complexify::complex_decompose`] when the pencil is real.
pub fn decompose_extreme<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<ExtremeDecomposition> {
    decompose_with_trace(p, x, cfg, rng).map(|(d, _)| d)
}

/// [`decompose_extreme`] together with the dilation trace it ran. For a
/// complex member of a real pencil the trace is that of the realification.
pub fn decompose_with_trace<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<(ExtremeDecomposition, DilationTrace)> {
    if x.field() == Field::Complex && p.field() == Field::Real {
        return complexify::complex_decompose_with_trace(p, x, cfg, rng);
    }
    let field = if p.field() == Field::Complex { Field::Complex } else { x.field() };
    let x_work = if field == Field::Complex { x.to_complex() } else { x.clone() };
    let trace = arveson_dilation(p, &x_work, cfg, rng)?;
    let n = x.rows();
    let dec = assemble(p, x_work, &trace.y_out, &trace.isometry, field, n * (p.g() + 1), trace.steps.len(), cfg)?;
    Ok((dec, trace))
}

/// Split a dilation Y of X (X = V*YV) into certified components.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    p: &Pencil,
    input: MatrixTuple,
    y: &MatrixTuple,
    v: &Mat,
    field: Field,
    bound: usize,
    steps: usize,
    cfg: &ToleranceConfig,
) -> Result<ExtremeDecomposition> {
    let parts = split_irreducible(y, field, cfg)?;
    let mut components = Vec::with_capacity(parts.len());
    let mut isometries = Vec::with_capacity(parts.len());
    let mut flags = Vec::with_capacity(parts.len());
    let v = if field == Field::Complex { v.clone().into_complex() } else { v.clone() };
    for (yi, ui) in parts {
        let vi = ui.adjoint().mul(&v);
        let vi = if field == Field::Real { vi.demote(f64::INFINITY) } else { vi };
        let fl = absolute_extreme_certify(p, &yi, cfg)?;
        components.push(yi);
        isometries.push(vi);
        flags.push(fl);
    }
    let total_size = components.iter().map(MatrixTuple::rows).sum();
    let equivalence_classes = equivalence_classes(&components);
    Ok(ExtremeDecomposition {
        field,
        input,
        components,
        isometries,
        flags,
        total_size,
        bound,
        dilation_steps: steps,
        equivalence_classes,
    })
}

/// Normalized traces of all words of length ≤ 3 in the tuple.
fn word_traces(y: &MatrixTuple) -> Vec<C64> {
    let g = y.g();
    let n = y.rows() as f64;
    let tr = |m: &Mat| (0..m.nrows()).map(|i| m.entry(i, i)).sum::<C64>() / n;
    let mut out = Vec::new();
    for a in 0..g {
        out.push(tr(y.get(a)));
        for b in 0..g {
            let ab = y.get(a).mul(y.get(b));
            out.push(tr(&ab));
            for c in 0..g {
                out.push(tr(&ab.mul(y.get(c))));
            }
        }
    }
    out
}

pub fn equivalence_classes(components: &[MatrixTuple]) -> Vec<usize> {
    let sigs: Vec<Vec<C64>> = components.iter().map(word_traces).collect();
    let mut labels: Vec<usize> = Vec::with_capacity(components.len());
    let mut reps: Vec<usize> = Vec::new();
    for (i, s) in sigs.iter().enumerate() {
        let found = reps.iter().position(|&r| {
            components[r].rows() == components[i].rows()
                && sigs[r].iter().zip(s).all(|(a, b)| (a - b).norm() <= 1e-8 * (1.0 + a.norm()))
        });
        match found {
            Some(l) => labels.push(l),
            None => {
                labels.push(reps.len());
                reps.push(i);
            }
        }
    }
    labels
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub n: u64,
    pub g: u64,
    pub classical_params: u128,
    pub free_params: u128,
}

pub fn parameter_report(n: u64, g: u64) -> Result<ParameterReport> {
    if n == 0 || g == 0 {
        return Err(Error::Input("n and g must be at least 1".into()));
    }
    let (nn, gg) = (n as u128, g as u128);
    let half = nn * (nn + 1) * gg / 2;
    let m = nn + nn * gg;
    Ok(ParameterReport { n, g, classical_params: (half + 1) * half, free_params: 2 * m * (m + 1) * gg })
}
