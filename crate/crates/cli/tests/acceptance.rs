//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process exits non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use freespec::batch::{solver_rng, standard_corpus};
use freespec::decomposition::{decompose_with_trace, is_irreducible};
use freespec::dilation::{dilation_subspace, dilation_subspace_over, maximal_one_dilation};
use freespec::generate::{instance, instance_rng, random_at_fraction, random_member, random_pencil, random_unitary, MemberKind};
use freespec::schur::{ncldl3, schur2_check, Block3};
use freespec::tuple::direct_sum;
use freespec::*;
use nalgebra::DMatrix;
use rand::Rng;

const SEED: u64 = 2024;
const REAL_CORPUS: u64 = 120;
const COMPLEX_CORPUS: u64 = 60;

const WORKED_TOL: f64 = 1e-6;
const RECONSTRUCTION_TOL: f64 = 1e-6;
const PARTITION_TOL: f64 = 1e-8;
const CORPUS_BUDGET: Duration = Duration::from_secs(300);
const WORKED_BUDGET: Duration = Duration::from_secs(1);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn interval() -> Pencil {
    Pencil::real(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])]).unwrap()
}

/// (component value, weight) pairs of a decomposition of a scalar, sorted by value.
fn scalar_weights(dec: &ExtremeDecomposition) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = dec
        .components
        .iter()
        .zip(dec.weights())
        .map(|(y, w)| (y.get(0).entry(0, 0).re, w.entry(0, 0).re))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= WORKED_TOL
}

fn interval_at_zero() -> Verdict {
    let start = Instant::now();
    let p = interval();
    let x = MatrixTuple::scalars(&[0.0]);
    let trace = match arveson_dilation(&p, &x, &cfg(), &mut solver_rng(1, 0)) {
        Ok(t) => t,
        Err(e) => return verdict(false, e.to_string()),
    };
    let y = trace.y_out.get(0);
    let dist = [1.0, -1.0]
        .iter()
        .map(|&s| {
            let expect = Mat::from_real_rows(&[&[0.0, s], &[s, 0.0]]);
            y.sub(&expect).frobenius()
        })
        .fold(f64::INFINITY, f64::min);
    let dec = match decompose_extreme(&p, &x, &cfg(), &mut solver_rng(1, 0)) {
        Ok(d) => d,
        Err(e) => return verdict(false, e.to_string()),
    };
    let w = scalar_weights(&dec);
    let elapsed = start.elapsed();
    let shape = w.len() == 2 && near(w[0].0, -1.0) && near(w[1].0, 1.0);
    let weights = shape && near(w[0].1, 0.5) && near(w[1].1, 0.5);
    verdict(
        dist <= WORKED_TOL && weights && elapsed < WORKED_BUDGET,
        format!("‖Y − Y*‖ = {dist:.1e}, components {w:?}, {elapsed:.2?}"),
    )
}

fn interval_at_half() -> Verdict {
    let p = interval();
    let x = MatrixTuple::scalars(&[0.5]);
    let trace = match arveson_dilation(&p, &x, &cfg(), &mut solver_rng(2, 0)) {
        Ok(t) => t,
        Err(e) => return verdict(false, e.to_string()),
    };
    if trace.steps.len() != 1 {
        return verdict(false, format!("{} steps", trace.steps.len()));
    }
    let step = &trace.steps[0];
    let eig = trace.y_out.get(0).herm_eigen().values;
    let dec = match decompose_extreme(&p, &x, &cfg(), &mut solver_rng(2, 0)) {
        Ok(d) => d,
        Err(e) => return verdict(false, e.to_string()),
    };
    let w = scalar_weights(&dec);
    let ok = near(step.c, 3f64.sqrt() / 2.0)
        && near(step.gamma[0], -0.5)
        && eig.len() == 2
        && near(eig[0], -1.0)
        && near(eig[1], 1.0)
        && w.len() == 2
        && near(w[0].0, -1.0)
        && near(w[0].1, 0.25)
        && near(w[1].0, 1.0)
        && near(w[1].1, 0.75);
    // the standalone step must agree with the one inside the trace
    let single = maximal_one_dilation(&p, &x, &MatrixTuple::scalars(&[1.0]), &cfg(), &mut solver_rng(2, 0));
    let same = single.map(|s| near(s.c, step.c) && near(s.gamma[0], step.gamma[0])).unwrap_or(false);
    verdict(ok && same, format!("c = {:.9}, γ = {:.9}, eigenvalues {eig:?}, weights {w:?}", step.c, step.gamma[0]))
}

struct CorpusRun {
    pencil: Pencil,
    x: MatrixTuple,
    dec: Result<(ExtremeDecomposition, DilationTrace)>,
}

fn run_corpus(field: Field, count: u64) -> (Vec<CorpusRun>, Duration) {
    let start = Instant::now();
    let runs = standard_corpus(field, count)
        .iter()
        .map(|job| {
            let inst = instance(&job.spec, SEED, job.index).expect("corpus instance");
            let mut rng = solver_rng(SEED, job.index);
            let dec = decompose_with_trace(&inst.pencil, &inst.x, &cfg(), &mut rng);
            CorpusRun { pencil: inst.pencil, x: inst.x, dec }
        })
        .collect();
    (runs, start.elapsed())
}

fn errors(runs: &[CorpusRun]) -> usize {
    runs.iter().filter(|r| r.dec.is_err()).count()
}

fn dimension_decrease(runs: &[CorpusRun], elapsed: Duration) -> Verdict {
    let mut steps = 0;
    let mut violations = 0;
    for r in runs {
        if let Ok((_, trace)) = &r.dec {
            for s in &trace.steps {
                steps += 1;
                violations += (s.dim_after >= s.dim_before) as usize;
            }
        }
    }
    let failed = errors(runs);
    verdict(
        runs.len() >= 100 && violations == 0 && failed == 0 && elapsed < CORPUS_BUDGET,
        format!("{} instances, {steps} steps, {violations} violations, {failed} errors, {elapsed:.2?}", runs.len()),
    )
}

fn step_and_size_bounds(runs: &[CorpusRun]) -> Verdict {
    let mut violations = 0;
    for r in runs {
        let Ok((dec, trace)) = &r.dec else { continue };
        let (n, g) = (r.x.rows(), r.pencil.g());
        let initial = trace.steps.first().map_or(0, |s| s.dim_before);
        let ok = trace.steps.len() <= initial
            && initial <= n * g
            && dec.total_size == trace.y_out.rows()
            && dec.total_size <= n * (g + 1);
        violations += !ok as usize;
    }
    let failed = errors(runs);
    verdict(violations == 0 && failed == 0, format!("{} instances, {violations} violations, {failed} errors", runs.len()))
}

fn complex_bound(runs: &[CorpusRun]) -> Verdict {
    let mut violations = 0;
    for r in runs {
        let Ok((dec, _)) = &r.dec else { continue };
        let (n, g) = (r.x.rows(), r.pencil.g());
        let size: usize = dec.components.iter().map(MatrixTuple::rows).sum();
        violations += !(size == dec.total_size && size <= 2 * n * (g + 1)) as usize;
    }
    let failed = errors(runs);
    let members = runs.iter().filter(|r| r.x.field() == Field::Complex && r.pencil.field() == Field::Real).count();
    verdict(
        members >= 50 && violations == 0 && failed == 0,
        format!("{members} complex members, {violations} violations, {failed} errors"),
    )
}

fn in_field(m: Mat, field: Field) -> Mat {
    if field == Field::Complex {
        m.into_complex()
    } else {
        m
    }
}

fn fidelity(all: &[&CorpusRun]) -> Verdict {
    let (mut worst_rec, mut worst_part) = (0f64, 0f64);
    let mut violations = 0;
    for r in all {
        let Ok((dec, _)) = &r.dec else {
            violations += 1;
            continue;
        };
        // recomputed here rather than read back from the decomposition
        let n = r.x.rows();
        let x = if dec.field == Field::Complex { r.x.to_complex() } else { r.x.clone() };
        let mut sum = MatrixTuple::zeros(dec.field, x.g(), n, n);
        let mut part = in_field(Mat::zeros(n, n), dec.field);
        for (y, v) in dec.components.iter().zip(&dec.isometries) {
            let compressed = MatrixTuple::new(dec.field, y.mats().iter().map(|m| v.adjoint().mul(m).mul(v)).collect()).unwrap();
            sum = sum.add(&compressed).unwrap();
            part = part.add(&v.adjoint().mul(v));
        }
        let rec = sum.sub(&x).unwrap().frobenius();
        let prt = part.sub(&in_field(Mat::identity(n), dec.field)).frobenius();
        worst_rec = worst_rec.max(rec);
        worst_part = worst_part.max(prt);
        violations += !(rec <= RECONSTRUCTION_TOL && prt <= PARTITION_TOL) as usize;
    }
    verdict(
        violations == 0,
        format!("{} instances, worst reconstruction {worst_rec:.1e}, worst partition {worst_part:.1e}", all.len()),
    )
}

fn certification(all: &[&CorpusRun]) -> Verdict {
    let (mut components, mut failures, mut rejected) = (0, 0, 0);
    for r in all {
        let Ok((dec, _)) = &r.dec else {
            failures += 1;
            continue;
        };
        // the decomposition file must also pass the command-line verifier
        let reread = freespec::io::decomposition_to_json(dec).and_then(|t| freespec::io::decomposition_from_json(&t));
        match reread {
            Ok(back) if freespec_cli::verify(&r.pencil, &back, &cfg()).iter().all(|c| c.passed) => {}
            _ => rejected += 1,
        }
        let work = dec.field;
        for y in &dec.components {
            components += 1;
            let arveson = dilation_subspace_over(&r.pencil, y, work, &cfg()).map(|s| s.dim == 0).unwrap_or(false);
            if !(arveson && is_irreducible(y, work, &cfg())) {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0 && rejected == 0,
        format!("{components} components, {failures} failures, {rejected} decompositions rejected by verify"),
    )
}

fn real_complex_agreement(runs: &[CorpusRun]) -> Verdict {
    let mut members: Vec<(&Pencil, MatrixTuple)> = Vec::new();
    for r in runs {
        members.push((&r.pencil, r.x.clone()));
        if let Ok((dec, _)) = &r.dec {
            members.extend(dec.components.iter().map(|y| (&r.pencil, y.clone())));
        }
    }
    let (mut arveson, mut disagreements) = (0, 0);
    for (p, x) in &members {
        let real = is_arveson(p, x, &cfg());
        let complex = dilation_subspace_over(p, &x.to_complex(), Field::Complex, &cfg()).map(|s| s.dim == 0);
        match (real, complex) {
            (Ok(a), Ok(b)) => {
                arveson += a as usize;
                disagreements += (a != b) as usize;
            }
            _ => disagreements += 1,
        }
    }
    let ok = members.len() >= 50 && disagreements == 0 && arveson > 0 && arveson < members.len();
    verdict(ok, format!("{} real members ({arveson} Arveson), {disagreements} disagreements", members.len()))
}

fn subspace_algebra() -> Verdict {
    let (mut pairs, mut failures, mut nonzero) = (0, 0, 0);
    for i in 0..60u64 {
        let mut rng = instance_rng(SEED + 9, i);
        let field = if i % 3 == 2 { Field::Complex } else { Field::Real };
        let p = random_pencil(1 + (i % 4) as usize, 1 + (i % 3) as usize, &mut rng).unwrap();
        let (n1, n2) = (1 + (i % 2) as usize, 1 + (i % 3) as usize);
        let kind = |k| if k % 2 == 0 { MemberKind::Boundary } else { MemberKind::Interior };
        let x = random_member(&p, n1, field, kind(i), &mut rng).unwrap();
        let z = random_member(&p, n2, field, kind(i / 2), &mut rng).unwrap();
        let u = random_unitary(n1 + n2, field, &mut rng);
        let dim = |t: &MatrixTuple| dilation_subspace(&p, t, &cfg()).map(|s| s.dim);
        let sum = direct_sum(&x, &z).unwrap();
        let ok = match (dim(&x), dim(&z), dim(&sum), dim(&sum.conjugate_by(&u).unwrap())) {
            (Ok(a), Ok(b), Ok(s), Ok(r)) => {
                nonzero += (a + b > 0) as usize;
                s == a + b && r == s
            }
            _ => false,
        };
        pairs += 1;
        failures += !ok as usize;
    }
    verdict(
        pairs >= 50 && failures == 0 && nonzero > 0,
        format!("{pairs} pairs ({nonzero} with nonzero dims), {failures} failures"),
    )
}

fn oracle_equivalence() -> Verdict {
    let cfg = cfg();
    let (mut accepted, mut drawn, mut psd, mut disagreements) = (0, 0u64, 0, 0);
    while accepted < 200 && drawn < 2000 {
        let mut rng = instance_rng(SEED + 10, drawn);
        drawn += 1;
        let p = random_pencil(1 + rng.random_range(0..3), 1 + rng.random_range(0..3), &mut rng).unwrap();
        let field = if rng.random_bool(0.25) { Field::Complex } else { Field::Real };
        let sizes = [1 + rng.random_range(0..2), 1 + rng.random_range(0..2), 1 + rng.random_range(0..2)];
        let frac = rng.random_range(0.5..1.5);
        let y = random_at_fraction(&p, sizes.iter().sum(), field, frac, &mut rng).unwrap();
        // independent verdict: smallest eigenvalue of the full evaluation
        let lambda = eval_monic(&p, &y).unwrap().min_eigenvalue();
        if lambda.abs() < 10.0 * cfg.tau_psd {
            continue;
        }
        accepted += 1;
        let truth = lambda >= 0.0;
        psd += truth as usize;
        let three = Block3::split(&y, sizes).and_then(|parts| ncldl3(&p, &parts, &cfg));
        let n1 = sizes[0];
        let rest = sizes[1] + sizes[2];
        let cut = |r0: usize, c0: usize, nr: usize, nc: usize| {
            MatrixTuple::new(field, y.mats().iter().map(|m| m.view(r0, c0, nr, nc)).collect()).unwrap()
        };
        let two = schur2_check(&p, &cut(0, 0, n1, n1), &cut(0, n1, n1, rest), &cut(n1, n1, rest, rest), &cfg);
        let agree = match (three, two) {
            (Ok(t), Ok(s)) => t.factor_psd == truth && t.psd == truth && s.schur.psd == truth && s.psd == truth,
            _ => false,
        };
        disagreements += !agree as usize;
    }
    verdict(
        accepted == 200 && disagreements == 0 && psd > 0 && psd < accepted,
        format!("{accepted} instances ({psd} PSD) from {drawn} draws, {disagreements} disagreements"),
    )
}

fn parameter_counts() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_freespec");
    let mut mismatches = Vec::new();
    for n in 1..=5u64 {
        for g in 1..=5u64 {
            let out = Command::new(bin)
                .args(["params", "--n", &n.to_string(), "--g", &g.to_string()])
                .env("FS_LOG", "quiet")
                .output()
                .expect("run freespec");
            let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
            let got = (
                report["outcome"]["params"]["classical_params"].as_u64(),
                report["outcome"]["params"]["free_params"].as_u64(),
            );
            let k = g * n * (n + 1) / 2;
            let m = n * (g + 1);
            let want = (Some(k * (k + 1)), Some(2 * g * m * (m + 1)));
            if !out.status.success() || got != want {
                mismatches.push((n, g));
            }
        }
    }
    verdict(mismatches.is_empty(), format!("25 pairs, mismatches {mismatches:?}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    results.push(("1 interval worked example at 0", interval_at_zero()));
    results.push(("2 interval worked example at 1/2", interval_at_half()));

    let (real, real_time) = run_corpus(Field::Real, REAL_CORPUS);
    let (complex, _) = run_corpus(Field::Complex, COMPLEX_CORPUS);
    results.push(("3 dimension decrease", dimension_decrease(&real, real_time)));
    results.push(("4 step and size bounds", step_and_size_bounds(&real)));
    results.push(("5 complex size bound", complex_bound(&complex)));
    let all: Vec<&CorpusRun> = real.iter().chain(&complex).collect();
    results.push(("6 compression fidelity and partition of identity", fidelity(&all)));
    results.push(("7 certification", certification(&all)));
    results.push(("8 real/complex Arveson agreement", real_complex_agreement(&real)));
    results.push(("9 dilation subspace algebra", subspace_algebra()));
    results.push(("10 oracle equivalence", oracle_equivalence()));
    results.push(("11 parameter counts", parameter_counts()));

    let mut failed = 0;
    for (name, v) in &results {
        println!("criterion {name}: {} ({})", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        failed += !v.passed as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
