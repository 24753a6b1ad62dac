//! Kelley cutting planes for small LMIs in a handful of scalar variables.
//!
//! The feasible set is {y ∈ ℝᵏ : F(y) = F₀ + Σ yᵢFᵢ ⪰ 0} intersected with the
//! box ‖y‖_∞ ≤ R. At an iterate y with bottom eigenvector u, the halfspace
//! u*F₀u + Σ yᵢ u*Fᵢu ≥ 0 contains the feasible set, so the polyhedral
//! relaxation only ever shrinks towards it. The relaxation is re-solved by a
//! dense dual simplex that keeps its basis between cuts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{input, Result};
use crate::linalg::Mat;
use crate::tuple::ToleranceConfig;

#[derive(Clone, Debug)]
pub struct LmiProblem {
    f0: Mat,
    fs: Vec<Mat>,
    radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Linear(Vec<f64>),
    MinEig,
    LocalNormMax(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Stationary,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverResult {
    pub y: Vec<f64>,
    pub objective_value: f64,
    pub status: Status,
    /// λ_min(F(y)) at the returned point.
    pub lambda_min: f64,
    pub iterations: usize,
}

impl LmiProblem {
    /// `radius` bounds every coordinate of the search box.
    pub fn new(f0: Mat, fs: Vec<Mat>, radius: f64) -> Result<Self> {
        let m = f0.nrows();
        if fs.is_empty() {
            return input("an LMI needs at least one variable");
        }
        if f0.ncols() != m || fs.iter().any(|f| f.nrows() != m || f.ncols() != m) {
            return input("LMI coefficients must be square and equally sized");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return input("box radius must be positive");
        }
        let sym_tol = 1e-9;
        if std::iter::once(&f0).chain(&fs).any(|f| f.hermitian_defect() > sym_tol * f.frobenius().max(1.0)) {
            return input("LMI coefficients must be self-adjoint");
        }
        Ok(LmiProblem { f0, fs, radius })
    }

    pub fn k(&self) -> usize {
        self.fs.len()
    }

    pub fn size(&self) -> usize {
        self.f0.nrows()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eval(&self, y: &[f64]) -> Mat {
        self.fs.iter().zip(y).fold(self.f0.clone(), |acc, (f, &yi)| acc.add(&f.scale(yi)))
    }

    pub fn lambda_min(&self, y: &[f64]) -> f64 {
        self.eval(y).min_eigenvalue()
    }

    /// (u*F₀u, [u*Fᵢu]) for a unit vector u given as a column.
    fn cut_coefficients(&self, u: &Mat) -> (f64, Vec<f64>) {
        let ua = u.adjoint();
        let quad = |f: &Mat| ua.mul(&f.mul(u)).entry(0, 0).re;
        (quad(&self.f0), self.fs.iter().map(quad).collect())
    }

    fn upper_eig_bound(&self) -> f64 {
        let spread: f64 = self.fs.iter().map(Mat::spectral_norm).sum();
        self.f0.spectral_norm() + self.radius * spread + 1.0
    }

    pub fn solve<R: Rng + ?Sized>(&self, objective: &Objective, cfg: &ToleranceConfig, rng: &mut R) -> SolverResult {
        match objective {
            Objective::Linear(c) => max_linear(self, c, cfg),
            Objective::MinEig => max_min_eig(self, cfg),
            Objective::LocalNormMax(start) => local_norm_max(self, start, cfg, rng),
        }
    }
}

/// Maximize cᵀy over the LMI.
pub fn max_linear(prob: &LmiProblem, c: &[f64], cfg: &ToleranceConfig) -> SolverResult {
    assert_eq!(c.len(), prob.k(), "objective length must equal the number of variables");
    kelley(prob, Mode::Linear(c), cfg, None)
}

/// Maximize λ_min(F(y)).
pub fn max_min_eig(prob: &LmiProblem, cfg: &ToleranceConfig) -> SolverResult {
    kelley(prob, Mode::MinEig, cfg, None)
}

/// Decide whether max λ_min(F(y)) ≥ `threshold`, stopping as soon as either a
/// certificate point or an upper bound settles it. The returned status is
/// `Optimal` when the threshold is met (y is the witness) and `Infeasible`
/// otherwise.
pub(crate) fn min_eig_at_least(prob: &LmiProblem, threshold: f64, cfg: &ToleranceConfig) -> SolverResult {
    let mut res = kelley(prob, Mode::MinEig, cfg, Some(threshold));
    if res.status == Status::Optimal || res.status == Status::MaxIter {
        res.status = if res.objective_value >= threshold { Status::Optimal } else { Status::Infeasible };
    }
    res
}

/// Conditional-gradient ascent of ‖y‖² from a feasible start: each step
/// maximizes the linearization ⟨y, ·⟩ over the LMI. Stops once a step gains
/// at most τ_opt in norm.
pub fn local_norm_max<R: Rng + ?Sized>(
    prob: &LmiProblem,
    start: &[f64],
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> SolverResult {
    let lam0 = prob.lambda_min(start);
    let mut y = start.to_vec();
    if lam0 < -cfg.tau_psd {
        return SolverResult { objective_value: norm(&y), y, status: Status::Infeasible, lambda_min: lam0, iterations: 0 };
    }
    let mut lam = lam0;
    let mut total = 0;
    for _ in 0..cfg.max_iter {
        let dir = if norm(&y) <= cfg.tau_opt { random_unit(prob.k(), rng) } else { y.clone() };
        let step = max_linear(prob, &dir, cfg);
        total += step.iterations;
        if step.status != Status::Optimal {
            return SolverResult { objective_value: norm(&y), y, status: step.status, lambda_min: lam, iterations: total };
        }
        let (old, new) = (norm(&y), norm(&step.y));
        log::trace!("norm-ascent old={old:.12e} new={new:.12e}");
        if new <= old + cfg.tau_opt {
            if new >= old - cfg.tau_opt {
                y = step.y;
                lam = step.lambda_min;
            }
            return SolverResult { objective_value: norm(&y), y, status: Status::Stationary, lambda_min: lam, iterations: total };
        }
        y = step.y;
        lam = step.lambda_min;
    }
    SolverResult { objective_value: norm(&y), y, status: Status::MaxIter, lambda_min: lam, iterations: total }
}

/// Conditional-gradient ascent started along a prescribed direction instead
/// of the start point itself; used to steer towards a different local
/// maximizer.
pub(crate) fn local_norm_max_from_direction<R: Rng + ?Sized>(
    prob: &LmiProblem,
    start: &[f64],
    direction: &[f64],
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> SolverResult {
    let first = max_linear(prob, direction, cfg);
    if first.status != Status::Optimal {
        return local_norm_max(prob, start, cfg, rng);
    }
    let mut res = local_norm_max(prob, &first.y, cfg, rng);
    res.iterations += first.iterations;
    res
}

pub(crate) fn random_unit<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

enum Mode<'a> {
    Linear(&'a [f64]),
    MinEig,
}

/// Cuts generated per iteration at most.
const MAX_CUTS: usize = 4;

fn kelley(prob: &LmiProblem, mode: Mode<'_>, cfg: &ToleranceConfig, threshold: Option<f64>) -> SolverResult {
    let k = prob.k();
    let r = prob.radius;
    let with_t = matches!(mode, Mode::MinEig);
    let dim = if with_t { k + 1 } else { k };
    let obj: Vec<f64> = match mode {
        Mode::Linear(c) => c.to_vec(),
        Mode::MinEig => {
            let mut o = vec![0.0; dim];
            o[k] = 1.0;
            o
        }
    };
    let mut lp = DualSimplex::new(obj.clone());
    for i in 0..k {
        let mut up = vec![0.0; dim];
        up[i] = 1.0;
        let mut lo = vec![0.0; dim];
        lo[i] = -1.0;
        let iu = lp.push(up, r);
        let il = lp.push(lo, r);
        // dual-feasible start: push each coordinate to the box face its
        // objective coefficient prefers
        lp.active.push(if obj[i] > 0.0 { iu } else { il });
    }
    if with_t {
        let mut up = vec![0.0; dim];
        up[k] = 1.0;
        let it = lp.push(up, prob.upper_eig_bound());
        lp.active.push(it);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_y = vec![0.0; k];
    let mut last_lam = f64::NEG_INFINITY;
    for iter in 0..cfg.max_iter {
        let z = match lp.solve(20 * cfg.max_iter) {
            LpOutcome::Optimal(z) => z,
            LpOutcome::Infeasible => {
                return SolverResult {
                    y: last_y,
                    objective_value: f64::NEG_INFINITY,
                    status: Status::Infeasible,
                    lambda_min: last_lam,
                    iterations: iter,
                };
            }
            LpOutcome::IterLimit => break,
        };
        let y: Vec<f64> = z[..k].to_vec();
        let f = prob.eval(&y);
        let eig = f.herm_eigen();
        let lam = eig.values[0];
        last_y.clone_from(&y);
        last_lam = lam;
        match mode {
            Mode::Linear(c) => {
                let value: f64 = c.iter().zip(&y).map(|(a, b)| a * b).sum();
                log::trace!("kelley iter={iter} lambda_min={lam:.6e} objective={value:.12e}");
                if lam >= -cfg.tau_psd {
                    return SolverResult { y, objective_value: value, status: Status::Optimal, lambda_min: lam, iterations: iter + 1 };
                }
            }
            Mode::MinEig => {
                let upper = z[k];
                if best.as_ref().is_none_or(|(b, _)| lam > *b) {
                    best = Some((lam, y.clone()));
                }
                let (lower, _) = best.as_ref().expect("set above");
                log::trace!("kelley iter={iter} lambda_min={lam:.6e} upper={upper:.12e} lower={lower:.12e}");
                let done = upper - lower <= cfg.tau_opt
                    || threshold.is_some_and(|t| *lower >= t || upper < t);
                if done {
                    let (lower, y) = best.take().expect("set above");
                    let value = if threshold.is_some_and(|t| upper < t) { upper } else { lower };
                    let lambda_min = prob.lambda_min(&y);
                    return SolverResult { y, objective_value: value, status: Status::Optimal, lambda_min, iterations: iter + 1 };
                }
            }
        }
        // cuts from the bottom of the spectrum
        let window = 1e-2 * (1.0 + lam.abs());
        for (idx, &v) in eig.values.iter().enumerate().take(MAX_CUTS) {
            if idx > 0 && v > lam + window {
                break;
            }
            if matches!(mode, Mode::Linear(_)) && v >= 0.0 {
                break;
            }
            let u = eig.vectors.columns(idx, 1);
            let (g0, gs) = prob.cut_coefficients(&u);
            let mut row = vec![0.0; dim];
            for i in 0..k {
                row[i] = -gs[i];
            }
            // linear mode relaxes the cuts by half the PSD slack: an iterate
            // rejected by the stopping test stays separated by τ_psd/2, and
            // sets that are feasible only within the slack keep a nonempty
            // relaxation
            let slack = if with_t {
                row[k] = 1.0;
                0.0
            } else {
                0.5 * cfg.tau_psd
            };
            lp.push_normalized(row, g0 + slack);
        }
    }
    let (value, y, lam) = match (mode, best) {
        (Mode::MinEig, Some((b, y))) => {
            let lam = prob.lambda_min(&y);
            (b, y, lam)
        }
        (Mode::Linear(c), _) => (c.iter().zip(&last_y).map(|(a, b)| a * b).sum(), last_y, last_lam),
        (Mode::MinEig, None) => (f64::NEG_INFINITY, last_y, last_lam),
    };
    SolverResult { y, objective_value: value, status: Status::MaxIter, lambda_min: lam, iterations: cfg.max_iter }
}

enum LpOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    IterLimit,
}

/// max objᵀz s.t. rowsᵢ·z ≤ rhsᵢ, kept at a dual-feasible vertex.
struct DualSimplex {
    obj: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    active: Vec<usize>,
}

impl DualSimplex {
    fn new(obj: Vec<f64>) -> Self {
        DualSimplex { obj, rows: Vec::new(), rhs: Vec::new(), active: Vec::new() }
    }

    fn dim(&self) -> usize {
        self.obj.len()
    }

    fn push(&mut self, row: Vec<f64>, rhs: f64) -> usize {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    fn push_normalized(&mut self, row: Vec<f64>, rhs: f64) {
        let n = norm(&row);
        if n > 0.0 {
            self.push(row.into_iter().map(|x| x / n).collect(), rhs / n);
        } else {
            self.push(row, rhs);
        }
    }

    fn basis(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| self.rows[self.active[i]][j])
    }

    fn solve(&mut self, max_pivots: usize) -> LpOutcome {
        let m = self.dim();
        for _ in 0..max_pivots {
            let basis = self.basis();
            let lu = basis.clone().lu();
            let b = DVector::from_iterator(m, self.active.iter().map(|&i| self.rhs[i]));
            let Some(z) = lu.solve(&b) else {
                return LpOutcome::IterLimit;
            };
            let mut enter = None;
            let mut worst = 0.0;
            for (idx, row) in self.rows.iter().enumerate() {
                if self.active.contains(&idx) {
                    continue;
                }
                let viol = row.iter().zip(z.iter()).map(|(a, x)| a * x).sum::<f64>() - self.rhs[idx];
                if viol > 1e-12 * (1.0 + self.rhs[idx].abs()) && viol > worst {
                    worst = viol;
                    enter = Some(idx);
                }
            }
            let Some(r) = enter else {
                return LpOutcome::Optimal(z.iter().copied().collect());
            };
            let lut = basis.transpose().lu();
            let lam = lut.solve(&DVector::from_column_slice(&self.obj)).unwrap_or_else(|| DVector::zeros(m));
            let Some(w) = lut.solve(&DVector::from_column_slice(&self.rows[r])) else {
                return LpOutcome::IterLimit;
            };
            let wscale = w.amax().max(1e-300);
            let mut leave: Option<(usize, f64)> = None;
            for j in 0..m {
                if w[j] > 1e-11 * wscale {
                    let theta = lam[j].max(0.0) / w[j];
                    let better = match leave {
                        None => true,
                        Some((jl, tl)) => {
                            theta < tl - 1e-14 * (1.0 + tl.abs())
                                || (theta <= tl + 1e-14 * (1.0 + tl.abs()) && self.active[j] < self.active[jl])
                        }
                    };
                    if better {
                        leave = Some((j, theta));
                    }
                }
            }
            let Some((j, _)) = leave else {
                return LpOutcome::Infeasible;
            };
            self.active[j] = r;
        }
        LpOutcome::IterLimit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn interval_slice() -> LmiProblem {
        // F(y) = diag(1 − y, 1 + y)
        LmiProblem::new(Mat::identity(2), vec![Mat::from_real_rows(&[&[-1.0, 0.0], &[0.0, 1.0]])], 10.0).unwrap()
    }

    fn disk_slice() -> LmiProblem {
        LmiProblem::new(
            Mat::identity(2),
            vec![
                Mat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
                Mat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
            ],
            10.0,
        )
        .unwrap()
    }

    fn square_slice() -> LmiProblem {
        // |y1| ≤ 1, |y2| ≤ 1 as a diagonal LMI
        let e = |v: [f64; 4]| Mat::Real(DMatrix::from_diagonal(&DVector::from_row_slice(&v)));
        LmiProblem::new(e([1.0; 4]), vec![e([1.0, -1.0, 0.0, 0.0]), e([0.0, 0.0, 1.0, -1.0])], 5.0).unwrap()
    }

    #[test]
    fn linear_interval_right_endpoint() {
        let res = max_linear(&interval_slice(), &[1.0], &ToleranceConfig::default());
        assert_eq!(res.status, Status::Optimal);
        assert!((res.y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_zero_objective_is_feasible() {
        let res = max_linear(&disk_slice(), &[0.0, 0.0], &ToleranceConfig::default());
        assert_eq!(res.status, Status::Optimal);
        assert_eq!(res.objective_value, 0.0);
        assert!(res.lambda_min >= -1e-9);
    }

    #[test]
    fn linear_disk_first_coordinate() {
        let res = max_linear(&disk_slice(), &[1.0, 0.0], &ToleranceConfig::default());
        assert_eq!(res.status, Status::Optimal);
        assert!((res.objective_value - 1.0).abs() < 1e-8, "{res:?}");
        assert!((res.y[0] - 1.0).abs() < 1e-8 && res.y[1].abs() < 1e-4, "{res:?}");
    }

    #[test]
    fn min_eig_examples() {
        let cfg = ToleranceConfig::default();
        let res = max_min_eig(&interval_slice(), &cfg);
        assert!(res.y[0].abs() < 1e-8 && (res.objective_value - 1.0).abs() < 1e-8, "{res:?}");
        let res = max_min_eig(&disk_slice(), &cfg);
        assert!(norm(&res.y) < 1e-8 && (res.objective_value - 1.0).abs() < 1e-8, "{res:?}");
        let constant = LmiProblem::new(Mat::from_real_rows(&[&[2.0, 0.0], &[0.0, 3.0]]), vec![Mat::zeros(2, 2)], 1.0).unwrap();
        let res = max_min_eig(&constant, &cfg);
        assert!((res.objective_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_lmi_detected() {
        // F(y) = diag(−1 + 0·y): never PSD
        let p = LmiProblem::new(Mat::from_real_rows(&[&[-1.0]]), vec![Mat::zeros(1, 1)], 1.0).unwrap();
        let res = max_linear(&p, &[1.0], &ToleranceConfig::default());
        assert_eq!(res.status, Status::Infeasible);
    }

    #[test]
    fn norm_ascent_examples() {
        let cfg = ToleranceConfig::default();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let res = local_norm_max(&interval_slice(), &[0.0], &cfg, &mut rng);
        assert_eq!(res.status, Status::Stationary);
        assert!((res.y[0].abs() - 1.0).abs() < 1e-9);

        let res = local_norm_max(&disk_slice(), &[0.3, 0.0], &cfg, &mut rng);
        assert!((res.y[0] - 1.0).abs() < 1e-8 && res.y[1].abs() < 1e-4, "{res:?}");

        // the corner is reached up to the relaxation of the cuts
        let res = local_norm_max(&square_slice(), &[1.0, 1.0], &cfg, &mut rng);
        assert!((res.y[0] - 1.0).abs() <= cfg.tau_psd && (res.y[1] - 1.0).abs() <= cfg.tau_psd, "{res:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = ToleranceConfig::default();
        let a = local_norm_max(&disk_slice(), &[0.0, 0.0], &cfg, &mut ChaCha20Rng::seed_from_u64(3));
        let b = local_norm_max(&disk_slice(), &[0.0, 0.0], &cfg, &mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(a.y, b.y);
    }
}
