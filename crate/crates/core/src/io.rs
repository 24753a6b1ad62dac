//! JSON documents for tuples, pencils, dilation traces and decompositions.
//!
//! Matrices are row-major arrays of rows. Real entries are numbers, complex
//! entries `[re, im]` pairs. Floats are written in shortest round-trip form, so
//! `parse(write(t)) == t` holds bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::decomposition::{ExtremeDecomposition, Flags};
use crate::dilation::{DilationStep, DilationTrace};
use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};
use crate::tuple::{block_tuple, Field, MatrixTuple, Pencil, ToleranceConfig};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatDoc {
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<[f64; 2]>>),
}

#[derive(Serialize, Deserialize)]
struct TupleDoc {
    field: Field,
    g: usize,
    rows: usize,
    cols: usize,
    matrices: Vec<MatDoc>,
}

#[derive(Serialize, Deserialize)]
struct KindedTuple {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(flatten)]
    tuple: TupleDoc,
}

#[derive(Serialize, Deserialize)]
struct StepDoc {
    beta: TupleDoc,
    c: f64,
    gamma: Vec<f64>,
    dim_before: usize,
    dim_after: usize,
    retries: usize,
}

#[derive(Serialize, Deserialize)]
struct TraceDoc {
    kind: String,
    #[serde(flatten)]
    y_out: TupleDoc,
    input: TupleDoc,
    steps: Vec<StepDoc>,
    isometry: MatDoc,
}

#[derive(Serialize, Deserialize)]
struct Equivalence {
    heuristic: String,
    classes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DecompositionDoc {
    kind: String,
    field: Field,
    input: TupleDoc,
    components: Vec<TupleDoc>,
    isometries: Vec<MatDoc>,
    flags: Vec<Flags>,
    total_size: usize,
    bound: usize,
    dilation_steps: usize,
    equivalence: Equivalence,
}

const WORD_TRACES: &str = "word-traces";

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn mat_doc(m: &Mat) -> MatDoc {
    match m {
        Mat::Real(a) => MatDoc::Real(a.row_iter().map(|r| r.iter().copied().collect()).collect()),
        Mat::Complex(a) => MatDoc::Complex(a.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()),
    }
}

fn ragged<T>(rows: &[Vec<T>]) -> Result<(usize, usize)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return format_err("matrix rows have different lengths");
    }
    Ok((rows.len(), cols))
}

fn mat_from_doc(doc: &MatDoc) -> Result<Mat> {
    Ok(match doc {
        MatDoc::Real(rows) => {
            let (r, c) = ragged(rows)?;
            Mat::Real(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
        }
        MatDoc::Complex(rows) => {
            let (r, c) = ragged(rows)?;
            Mat::Complex(DMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
        }
    })
}

fn tuple_doc(t: &MatrixTuple) -> TupleDoc {
    TupleDoc { field: t.field(), g: t.g(), rows: t.rows(), cols: t.cols(), matrices: t.mats().iter().map(mat_doc).collect() }
}

fn tuple_from_doc(doc: &TupleDoc) -> Result<MatrixTuple> {
    if doc.g == 0 || doc.matrices.len() != doc.g {
        return format_err(format!("expected g = {} matrices, found {}", doc.g, doc.matrices.len()));
    }
    let mut mats = Vec::with_capacity(doc.g);
    for (j, m) in doc.matrices.iter().enumerate() {
        let storage_ok = match (doc.field, m) {
            (Field::Real, MatDoc::Real(_)) | (Field::Complex, MatDoc::Complex(_)) => true,
            // an empty row list carries no entry type
            (_, MatDoc::Real(rows)) => rows.iter().all(Vec::is_empty),
            _ => false,
        };
        if !storage_ok {
            return format_err(format!("matrix {j} does not match field {:?}", doc.field));
        }
        let mat = mat_from_doc(m)?;
        if (mat.nrows(), mat.ncols()) != (doc.rows, doc.cols) {
            return format_err(format!(
                "matrix {j} is {}×{}, header says {}×{}",
                mat.nrows(),
                mat.ncols(),
                doc.rows,
                doc.cols
            ));
        }
        mats.push(mat);
    }
    MatrixTuple::new(doc.field, mats).map_err(|e| Error::Format(e.to_string()))
}

fn to_string<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string_pretty(doc).map_err(|e| Error::Format(e.to_string()))
}

fn from_str<'a, T: Deserialize<'a>>(s: &'a str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
}

fn check_kind(found: Option<&str>, want: &str) -> Result<()> {
    match found {
        Some(k) if k != want => format_err(format!("expected a {want} document, found kind \"{k}\"")),
        _ => Ok(()),
    }
}

pub fn tuple_to_json(t: &MatrixTuple) -> Result<String> {
    to_string(&tuple_doc(t))
}

/// Reads a tuple file. A document carrying a `kind` other than "tuple" is
/// refused.
pub fn tuple_from_json(s: &str) -> Result<MatrixTuple> {
    let doc: KindedTuple = from_str(s)?;
    check_kind(doc.kind.as_deref(), "tuple")?;
    tuple_from_doc(&doc.tuple)
}

pub fn pencil_to_json(p: &Pencil) -> Result<String> {
    to_string(&KindedTuple { kind: Some("pencil".into()), tuple: tuple_doc(p.tuple()) })
}

pub fn pencil_from_json(s: &str, cfg: &ToleranceConfig) -> Result<Pencil> {
    let doc: KindedTuple = from_str(s)?;
    check_kind(doc.kind.as_deref(), "pencil")?;
    let t = tuple_from_doc(&doc.tuple)?;
    if t.rows() != t.cols() {
        return format_err("pencil coefficients must be square");
    }
    Pencil::new(t, cfg)
}

pub fn trace_to_json(t: &DilationTrace) -> Result<String> {
    let steps = t
        .steps
        .iter()
        .map(|s| StepDoc {
            beta: tuple_doc(&s.beta),
            c: s.c,
            gamma: s.gamma.clone(),
            dim_before: s.dim_before,
            dim_after: s.dim_after,
            retries: s.retries,
        })
        .collect();
    to_string(&TraceDoc {
        kind: "trace".into(),
        y_out: tuple_doc(&t.y_out),
        input: tuple_doc(&t.x_in),
        steps,
        isometry: mat_doc(&t.isometry),
    })
}

/// Reads a trace, rebuilding every intermediate member from the recorded
/// β̂, c and γ̂, and checks that the last one equals the stored output.
pub fn trace_from_json(s: &str) -> Result<DilationTrace> {
    let doc: TraceDoc = from_str(s)?;
    check_kind(Some(&doc.kind), "trace")?;
    let x_in = tuple_from_doc(&doc.input)?;
    let y_out = tuple_from_doc(&doc.y_out)?;
    let mut prev = x_in.clone();
    let mut steps = Vec::with_capacity(doc.steps.len());
    for (k, st) in doc.steps.iter().enumerate() {
        let beta = tuple_from_doc(&st.beta)?;
        if st.gamma.len() != prev.g() {
            return format_err(format!("step {k}: γ has {} entries, expected {}", st.gamma.len(), prev.g()));
        }
        let y_next = block_tuple(&prev, &beta.scale(st.c), &MatrixTuple::scalars(&st.gamma))
            .map_err(|e| Error::Format(format!("step {k}: {e}")))?;
        steps.push(DilationStep {
            beta,
            c: st.c,
            gamma: st.gamma.clone(),
            y_next: y_next.clone(),
            dim_before: st.dim_before,
            dim_after: st.dim_after,
            retries: st.retries,
        });
        prev = y_next;
    }
    if prev != y_out {
        return format_err("stored output does not match the recorded steps");
    }
    let isometry = mat_from_doc(&doc.isometry)?;
    if (isometry.nrows(), isometry.ncols()) != (y_out.rows(), x_in.rows()) {
        return format_err("isometry shape does not match the trace");
    }
    Ok(DilationTrace { steps, x_in, y_out, isometry })
}

pub fn decomposition_to_json(d: &ExtremeDecomposition) -> Result<String> {
    to_string(&DecompositionDoc {
        kind: "decomposition".into(),
        field: d.field,
        input: tuple_doc(&d.input),
        components: d.components.iter().map(tuple_doc).collect(),
        isometries: d.isometries.iter().map(mat_doc).collect(),
        flags: d.flags.clone(),
        total_size: d.total_size,
        bound: d.bound,
        dilation_steps: d.dilation_steps,
        equivalence: Equivalence { heuristic: WORD_TRACES.into(), classes: d.equivalence_classes.clone() },
    })
}

/// Reads a decomposition. Only shapes are checked here; the invariants are
/// the business of the verifier.
pub fn decomposition_from_json(s: &str) -> Result<ExtremeDecomposition> {
    let doc: DecompositionDoc = from_str(s)?;
    check_kind(Some(&doc.kind), "decomposition")?;
    let input = tuple_from_doc(&doc.input)?;
    let components = doc.components.iter().map(tuple_from_doc).collect::<Result<Vec<_>>>()?;
    let isometries = doc.isometries.iter().map(mat_from_doc).collect::<Result<Vec<_>>>()?;
    let k = components.len();
    if isometries.len() != k || doc.flags.len() != k || doc.equivalence.classes.len() != k {
        return format_err("components, isometries, flags and classes differ in number");
    }
    for (i, (y, v)) in components.iter().zip(&isometries).enumerate() {
        if y.g() != input.g() || !y.is_square() || (v.nrows(), v.ncols()) != (y.rows(), input.rows()) {
            return format_err(format!("component {i} has an incompatible shape"));
        }
    }
    Ok(ExtremeDecomposition {
        field: doc.field,
        input,
        components,
        isometries,
        flags: doc.flags,
        total_size: doc.total_size,
        bound: doc.bound,
        dilation_steps: doc.dilation_steps,
        equivalence_classes: doc.equivalence.classes,
    })
}
