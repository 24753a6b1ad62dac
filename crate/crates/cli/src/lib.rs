//! Commands behind the `freespec` binary. Each command reads JSON documents,
//! runs one operation and returns a [`RunReport`] with the exit code.
//!
//! Exit codes: 0 success or member, 1 negative answer (non-member, failed
//! verification), 2 input error, 3 solver failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use freespec::batch::solver_rng;
use freespec::decomposition::{decompose_with_trace, is_irreducible, parameter_report, ParameterReport};
use freespec::dilation::{dilation_subspace_over, DilationTrace};
use freespec::generate::{instance, InstanceSpec, MemberKind};
use freespec::io;
use freespec::linalg::Mat;
use freespec::schur::schur2_check;
use freespec::tuple::{is_bounded, is_member, Field, MatrixTuple, Pencil, ToleranceConfig};
use freespec::{Error, ExtremeDecomposition, Flags};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const RECONSTRUCTION_TOL: f64 = 1e-6;
pub const PARTITION_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Outcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounded: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// dim 𝔎 before the first step, then after each step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flags: Option<Vec<Flags>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<Check>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParameterReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Vec<InputFile>,
    pub cfg: ToleranceConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub outcome: Outcome,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Failure that ends a command with the given exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Input(_) | Error::Format(_) => EXIT_INPUT,
            Error::Solver(_) | Error::Internal(_) | Error::Inconsistency(_) => EXIT_SOLVER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_failure(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, message: msg.into() }
}

/// Parses `key=value` pairs separated by commas into a configuration on top
/// of the defaults.
pub fn parse_tolerances(spec: Option<&str>) -> Result<ToleranceConfig, Failure> {
    let mut cfg = ToleranceConfig::default();
    let Some(spec) = spec else {
        return Ok(cfg);
    };
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item.split_once('=').ok_or_else(|| input_failure(format!("bad tolerance \"{item}\"")))?;
        let num = || value.parse::<f64>().map_err(|_| input_failure(format!("bad value in \"{item}\"")));
        match key {
            "tau_sym" => cfg.tau_sym = num()?,
            "tau_psd" => cfg.tau_psd = num()?,
            "tau_ker" => cfg.tau_ker = num()?,
            "tau_opt" => cfg.tau_opt = num()?,
            "max_iter" => {
                cfg.max_iter = value.parse().map_err(|_| input_failure(format!("bad value in \"{item}\"")))?
            }
            _ => return Err(input_failure(format!("unknown tolerance \"{key}\""))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub struct Session {
    command: String,
    cfg: ToleranceConfig,
    seed: Option<u64>,
    inputs: Vec<InputFile>,
    started: Instant,
}

impl Session {
    pub fn new(command: &str, cfg: ToleranceConfig, seed: Option<u64>) -> Self {
        Session { command: command.into(), cfg, seed, inputs: Vec::new(), started: Instant::now() }
    }

    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| input_failure(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputFile { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&bytes)) });
        String::from_utf8(bytes).map_err(|_| input_failure(format!("{} is not UTF-8", path.display())))
    }

    fn pencil(&mut self, path: &Path) -> Result<Pencil, Failure> {
        let text = self.read(path)?;
        Ok(io::pencil_from_json(&text, &self.cfg)?)
    }

    fn tuple(&mut self, path: &Path) -> Result<MatrixTuple, Failure> {
        let text = self.read(path)?;
        Ok(io::tuple_from_json(&text)?)
    }

    pub fn finish(self, result: Result<(i32, Outcome), Failure>) -> RunReport {
        let (exit_code, outcome, message) = match result {
            Ok((code, outcome)) => (code, outcome, None),
            Err(f) => (f.code, Outcome::default(), Some(f.message)),
        };
        RunReport {
            command: self.command,
            inputs: self.inputs,
            cfg: self.cfg,
            seed: self.seed,
            outcome,
            exit_code,
            message,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| input_failure(format!("cannot write {}: {e}", path.display())))
}

fn same_g(p: &Pencil, x: &MatrixTuple) -> Result<(), Failure> {
    if p.g() != x.g() {
        return Err(input_failure(format!("pencil has g = {}, tuple has g = {}", p.g(), x.g())));
    }
    if !x.is_square() {
        return Err(input_failure("tuple matrices must be square"));
    }
    Ok(())
}

fn require_bounded(p: &Pencil, cfg: &ToleranceConfig) -> Result<(), Failure> {
    if !is_bounded(p, cfg)?.bounded {
        return Err(input_failure("pencil not certified bounded"));
    }
    Ok(())
}

fn require_member(p: &Pencil, x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<(), Failure> {
    let m = is_member(p, x, cfg)?;
    if !m.member {
        return Err(input_failure(format!("tuple is not in the spectrahedron (λ_min = {:.3e})", m.lambda_min)));
    }
    Ok(())
}

fn dims_of(trace: &DilationTrace) -> Vec<usize> {
    match trace.steps.first() {
        Some(s) => std::iter::once(s.dim_before).chain(trace.steps.iter().map(|s| s.dim_after)).collect(),
        None => vec![0],
    }
}

pub fn cmd_check(s: &mut Session, pencil: &Path, tuple: &Path) -> Result<(i32, Outcome), Failure> {
    let p = s.pencil(pencil)?;
    let x = s.tuple(tuple)?;
    same_g(&p, &x)?;
    let m = is_member(&p, &x, &s.cfg)?;
    let bounded = is_bounded(&p, &s.cfg)?.bounded;
    let outcome = Outcome { member: Some(m.member), lambda_min: Some(m.lambda_min), bounded: Some(bounded), ..Outcome::default() };
    Ok((if m.member { EXIT_OK } else { EXIT_NEGATIVE }, outcome))
}

/// Returns the trace document alongside the outcome.
pub fn cmd_dilate(s: &mut Session, pencil: &Path, tuple: &Path) -> Result<(i32, Outcome, String), Failure> {
    let p = s.pencil(pencil)?;
    let x = s.tuple(tuple)?;
    same_g(&p, &x)?;
    require_member(&p, &x, &s.cfg)?;
    require_bounded(&p, &s.cfg)?;
    let mut rng = solver_rng(s.seed.unwrap_or(0), 0);
    let trace = freespec::arveson_dilation(&p, &x, &s.cfg, &mut rng)?;
    let doc = io::trace_to_json(&trace)?;
    let outcome = Outcome {
        steps: Some(trace.steps.len()),
        dims: Some(dims_of(&trace)),
        total_size: Some(trace.y_out.rows()),
        bound: Some(x.rows() * (p.g() + 1)),
        ..Outcome::default()
    };
    Ok((EXIT_OK, outcome, doc))
}

pub fn cmd_decompose(s: &mut Session, pencil: &Path, tuple: &Path) -> Result<(i32, Outcome, String), Failure> {
    let p = s.pencil(pencil)?;
    let x = s.tuple(tuple)?;
    same_g(&p, &x)?;
    require_member(&p, &x, &s.cfg)?;
    require_bounded(&p, &s.cfg)?;
    let mut rng = solver_rng(s.seed.unwrap_or(0), 0);
    let (dec, trace) = decompose_with_trace(&p, &x, &s.cfg, &mut rng)?;
    let doc = io::decomposition_to_json(&dec)?;
    let outcome = Outcome {
        steps: Some(trace.steps.len()),
        dims: Some(dims_of(&trace)),
        total_size: Some(dec.total_size),
        bound: Some(dec.bound),
        flags: Some(dec.flags.clone()),
        ..Outcome::default()
    };
    Ok((EXIT_OK, outcome, doc))
}

pub fn cmd_verify(s: &mut Session, pencil: &Path, decomposition: &Path) -> Result<(i32, Outcome), Failure> {
    let p = s.pencil(pencil)?;
    let text = s.read(decomposition)?;
    let dec = io::decomposition_from_json(&text)?;
    same_g(&p, &dec.input)?;
    let checks = verify(&p, &dec, &s.cfg);
    let ok = checks.iter().all(|c| c.passed);
    for c in checks.iter().filter(|c| !c.passed) {
        log::warn!("check {} failed: {}", c.name, c.detail);
    }
    Ok((if ok { EXIT_OK } else { EXIT_NEGATIVE }, Outcome { checks: Some(checks), ..Outcome::default() }))
}

#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub d: usize,
    pub g: usize,
    pub n: usize,
    pub field: Field,
    pub kind: MemberKind,
    pub index: u64,
}

/// Writes `pencil.json` and `tuple.json` into `out`.
pub fn cmd_gen(s: &mut Session, opts: &GenOptions, out: &Path) -> Result<(i32, Outcome), Failure> {
    let spec = InstanceSpec { d: opts.d, g: opts.g, n: opts.n, field: opts.field, kind: opts.kind };
    let inst = instance(&spec, s.seed.unwrap_or(0), opts.index)?;
    std::fs::create_dir_all(out).map_err(|e| input_failure(format!("cannot create {}: {e}", out.display())))?;
    let (pp, tp) = (out.join("pencil.json"), out.join("tuple.json"));
    write(&pp, &io::pencil_to_json(&inst.pencil)?)?;
    write(&tp, &io::tuple_to_json(&inst.x)?)?;
    let m = is_member(&inst.pencil, &inst.x, &s.cfg)?;
    let outcome = Outcome {
        member: Some(m.member),
        lambda_min: Some(m.lambda_min),
        bounded: Some(is_bounded(&inst.pencil, &s.cfg)?.bounded),
        outputs: vec![pp, tp],
        ..Outcome::default()
    };
    Ok((EXIT_OK, outcome))
}

pub fn cmd_params(n: u64, g: u64) -> Result<(i32, Outcome), Failure> {
    let r = parameter_report(n, g)?;
    Ok((EXIT_OK, Outcome { params: Some(r), ..Outcome::default() }))
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

/// PSD decision for a component through the block Schur oracle, splitting off
/// the last row and column.
fn component_psd(p: &Pencil, y: &MatrixTuple, cfg: &ToleranceConfig) -> Result<(bool, f64), Error> {
    let m = y.rows();
    if m < 2 {
        let r = is_member(p, y, cfg)?;
        return Ok((r.member, r.lambda_min));
    }
    let cut = |r0: usize, c0: usize, nr: usize, nc: usize| {
        MatrixTuple::new(y.field(), y.mats().iter().map(|a| a.view(r0, c0, nr, nc)).collect())
    };
    let r = schur2_check(p, &cut(0, 0, m - 1, m - 1)?, &cut(0, m - 1, m - 1, 1)?, &cut(m - 1, m - 1, 1, 1)?, cfg)?;
    Ok((r.psd, r.direct.lambda_min))
}

/// Re-derives every invariant of a decomposition from the pencil alone.
pub fn verify(p: &Pencil, dec: &ExtremeDecomposition, cfg: &ToleranceConfig) -> Vec<Check> {
    let mut out = Vec::new();
    let n = dec.input.rows();
    let part = dec.partition_error();
    out.push(check("partition_of_identity", part <= PARTITION_TOL, format!("‖Σ V*V − I‖_F = {part:.3e}")));
    let rec = dec.reconstruction_error();
    out.push(check("reconstruction", rec <= RECONSTRUCTION_TOL, format!("‖Σ V*YV − X‖_F = {rec:.3e}")));

    let realified = dec.field == Field::Complex && p.field() == Field::Real;
    let bound = if realified { 2 * n * (p.g() + 1) } else { n * (p.g() + 1) };
    let total: usize = dec.components.iter().map(MatrixTuple::rows).sum();
    out.push(check(
        "size_bound",
        total == dec.total_size && dec.bound == bound && total <= bound,
        format!("total {total} (claimed {}), bound {bound} (claimed {})", dec.total_size, dec.bound),
    ));

    let work = if p.field() == Field::Complex { Field::Complex } else { dec.field };
    for (i, (y, claimed)) in dec.components.iter().zip(&dec.flags).enumerate() {
        if y.g() != p.g() || !y.is_square() || !y.is_self_adjoint(cfg.tau_sym * y.frobenius().max(1.0)) {
            out.push(check(format!("component_{i}_shape"), false, "not a self-adjoint square g-tuple"));
            continue;
        }
        match component_psd(p, y, cfg) {
            Ok((psd, lam)) => out.push(check(format!("component_{i}_member"), psd, format!("λ_min = {lam:.3e}"))),
            Err(e) => out.push(check(format!("component_{i}_member"), false, e.to_string())),
        }
        match dilation_subspace_over(p, y, work, cfg) {
            Ok(sub) => out.push(check(format!("component_{i}_arveson"), sub.dim == 0, format!("dim 𝔎 = {}", sub.dim))),
            Err(e) => out.push(check(format!("component_{i}_arveson"), false, e.to_string())),
        }
        let irr = is_irreducible(y, work, cfg);
        out.push(check(format!("component_{i}_irreducible"), irr, ""));
        out.push(check(
            format!("component_{i}_flags"),
            claimed.absolute_extreme,
            format!("claimed absolute_extreme = {}", claimed.absolute_extreme),
        ));
        let v: &Mat = &dec.isometries[i];
        if (v.nrows(), v.ncols()) != (y.rows(), n) {
            out.push(check(format!("component_{i}_isometry"), false, "wrong shape"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use freespec::generate::instance_rng;
    use freespec::decompose_extreme;

    #[test]
    fn tolerance_parsing() {
        assert_eq!(parse_tolerances(None).unwrap(), ToleranceConfig::default());
        let cfg = parse_tolerances(Some("tau_ker=1e-7, max_iter=20")).unwrap();
        assert_eq!((cfg.tau_ker, cfg.max_iter), (1e-7, 20));
        assert_eq!(cfg.tau_psd, ToleranceConfig::default().tau_psd);
        for bad in ["tau_psd", "tau_psd=x", "foo=1", "max_iter=1.5", "tau_sym=0"] {
            assert_eq!(parse_tolerances(Some(bad)).unwrap_err().code, EXIT_INPUT, "{bad}");
        }
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(Failure::from(Error::Format("x".into())).code, EXIT_INPUT);
        assert_eq!(Failure::from(Error::Solver("x".into())).code, EXIT_SOLVER);
        assert_eq!(Failure::from(Error::Inconsistency("x".into())).code, EXIT_SOLVER);
    }

    #[test]
    fn verify_interval_decomposition() {
        let p = Pencil::real(vec![nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])]).unwrap();
        let cfg = ToleranceConfig::default();
        let dec = decompose_extreme(&p, &MatrixTuple::scalars(&[0.25]), &cfg, &mut instance_rng(5, 0)).unwrap();
        let checks = verify(&p, &dec, &cfg);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");

        let mut bad = dec.clone();
        bad.bound += 1;
        assert!(!verify(&p, &bad, &cfg).iter().find(|c| c.name == "size_bound").unwrap().passed);
    }
}
