//! Realification of complex tuples and pencils, and the complex decomposition
//! pipeline that runs the dilation over ℝ.

use nalgebra::DMatrix;
use rand::Rng;

use crate::decomposition::{assemble, ExtremeDecomposition};
use crate::dilation::{arveson_dilation, DilationTrace};
use crate::error::{input, Error, Result};
use crate::linalg::{block, Mat, C64};
use crate::tuple::{Field, MatrixTuple, Pencil, ToleranceConfig};

/// X = S + iT together with Z = [[S, −T], [T, S]] and V with X = V*ZV.
#[derive(Clone, Debug)]
pub struct Realification {
    pub z: MatrixTuple,
    /// (1/√2)[Iₙ; −iIₙ].
    pub v: Mat,
    pub s: MatrixTuple,
    pub t: MatrixTuple,
}

fn realify_mat(m: &Mat) -> (Mat, Mat, Mat) {
    let s = Mat::Real(m.real_part());
    let t = Mat::Real(m.imag_part());
    let z = block(&[vec![s.clone(), t.scale(-1.0)], vec![t.clone(), s.clone()]]);
    (z, s, t)
}

pub fn realify_tuple(x: &MatrixTuple, cfg: &ToleranceConfig) -> Result<Realification> {
    if !x.is_square() || !x.is_self_adjoint(cfg.tau_sym * x.frobenius().max(1.0)) {
        return input("realification needs a self-adjoint tuple");
    }
    let n = x.rows();
    let (mut zs, mut ss, mut ts) = (Vec::new(), Vec::new(), Vec::new());
    for m in x.mats() {
        let (z, s, t) = realify_mat(m);
        zs.push(z);
        ss.push(s);
        ts.push(t);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = Mat::Complex(DMatrix::from_fn(2 * n, n, |i, j| {
        if i == j {
            C64::new(h, 0.0)
        } else if i == n + j {
            C64::new(0.0, -h)
        } else {
            C64::new(0.0, 0.0)
        }
    }));
    let out = Realification {
        z: MatrixTuple::new(Field::Real, zs)?,
        v,
        s: MatrixTuple::new(Field::Real, ss)?,
        t: MatrixTuple::new(Field::Real, ts)?,
    };
    let back = out.z.to_complex().conjugate_by(&out.v)?;
    let err = back.sub(&x.to_complex())?.frobenius();
    if err > 1e-10 * x.frobenius().max(1.0) {
        return Err(Error::Internal(format!("realification does not compress back (error {err:.3e})")));
    }
    Ok(out)
}

/// Real pencil B with B_j = [[Re A_j, −Im A_j], [Im A_j, Re A_j]], together
/// with whether D_B equals D_A. For a real A this is A ⊕ A up to a
/// permutation and the sets agree; otherwise D_B = D_A ∩ D_Ā, which equals D_A
/// only when D_A is closed under conjugation, and that is not decided here.
pub fn realify_pencil(p: &Pencil, cfg: &ToleranceConfig) -> Result<(Pencil, bool)> {
    let exact = p.field() == Field::Real || p.tuple().mats().iter().all(|m| m.max_imag() == 0.0);
    let mats = p.tuple().mats().iter().map(|m| realify_mat(m).0).collect();
    Ok((Pencil::new(MatrixTuple::new(Field::Real, mats)?, cfg)?, exact))
}

/// Decompose a complex member of a real pencil by Arveson-dilating its
/// realification over ℝ and splitting the result over ℂ.
pub fn complex_decompose<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<ExtremeDecomposition> {
    complex_decompose_with_trace(p, x, cfg, rng).map(|(d, _)| d)
}

pub fn complex_decompose_with_trace<R: Rng + ?Sized>(
    p: &Pencil,
    x: &MatrixTuple,
    cfg: &ToleranceConfig,
    rng: &mut R,
) -> Result<(ExtremeDecomposition, DilationTrace)> {
    if p.field() != Field::Real {
        return input("the complex pipeline needs a real pencil");
    }
    let r = realify_tuple(x, cfg)?;
    let trace = arveson_dilation(p, &r.z, cfg, rng)?;
    let total = trace.y_out.rows();
    let n = x.rows();
    let mut vt = DMatrix::<C64>::zeros(total, n);
    vt.view_mut((0, 0), (2 * n, n)).copy_from(&r.v.to_complex());
    let input_tuple = x.to_complex();
    let dec = assemble(p, input_tuple, &trace.y_out, &Mat::Complex(vt), Field::Complex, 2 * n * (p.g() + 1), trace.steps.len(), cfg)?;
    Ok((dec, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::{eval_monic, is_member};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_y(scale: f64) -> MatrixTuple {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, scale), c(0.0, -scale), c(0.0, 0.0)]);
        MatrixTuple::new(Field::Complex, vec![Mat::Complex(m)]).unwrap()
    }

    #[test]
    fn realify_sigma_y() {
        let r = realify_tuple(&sigma_y(1.0), &cfg()).unwrap();
        let expect = Mat::from_real_rows(&[
            &[0.0, 0.0, 0.0, -1.0],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[-1.0, 0.0, 0.0, 0.0],
        ]);
        assert_eq!(r.z.get(0), &expect);
        assert_eq!(r.s.get(0), &Mat::zeros(2, 2));
    }

    #[test]
    fn realify_real_tuple_doubles() {
        let x = MatrixTuple::scalars(&[0.25, -0.5]);
        let r = realify_tuple(&x, &cfg()).unwrap();
        assert_eq!(r.z.get(1), &Mat::from_real_rows(&[&[-0.5, 0.0], &[0.0, -0.5]]));
    }

    #[test]
    fn realified_pencil_matches_membership() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        let p = Pencil::new(MatrixTuple::new(Field::Complex, vec![Mat::Complex(a)]).unwrap(), &cfg()).unwrap();
        let (b, exact) = realify_pencil(&p, &cfg()).unwrap();
        assert!(!exact);
        for t in [-1.5, -0.7, 0.0, 0.4, 1.0, 2.0] {
            let x = MatrixTuple::scalars(&[t]);
            let la = eval_monic(&p, &x).unwrap().min_eigenvalue();
            let lb = eval_monic(&b, &x).unwrap().min_eigenvalue();
            assert!((la - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_interval_example() {
        let p = Pencil::real(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])]).unwrap();
        let x = sigma_y(0.5);
        assert!(is_member(&p, &x, &cfg()).unwrap().member);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let dec = complex_decompose(&p, &x, &cfg(), &mut rng).unwrap();
        assert!(dec.reconstruction_error() < 1e-8, "{}", dec.reconstruction_error());
        assert!(dec.partition_error() < 1e-8);
        assert!(dec.total_size <= 2 * 2 * (1 + 1));
        let mut plus = 0.0;
        for (y, w) in dec.components.iter().zip(dec.weights()) {
            assert_eq!(y.rows(), 1);
            let v = y.get(0).entry(0, 0).re;
            assert!((v.abs() - 1.0).abs() < 1e-6);
            if v > 0.0 {
                plus += (0..2).map(|i| w.entry(i, i).re).sum::<f64>();
            }
        }
        // tr((I + X)/2) = 1
        assert!((plus - 1.0).abs() < 1e-6);
    }
}
