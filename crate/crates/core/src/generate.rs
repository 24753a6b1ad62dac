//! Seeded random pencils, members and unitaries.
//!
//! Every instance is drawn from `ChaCha20Rng::seed_from_u64(seed)` switched to
//! stream `index`, so instance k of a corpus does not depend on how many
//! others were drawn before it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{Mat, C64};
use crate::tuple::{eval_monic, Field, MatrixTuple, Pencil};

/// Half-width of the box appended to every random pencil.
pub const CUBE_HALF_WIDTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    /// 0.9 of the way to the boundary along a random direction.
    Interior,
    /// On the boundary along a random direction.
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    /// Size of the random part of the pencil; the box adds 2g more rows.
    pub d: usize,
    pub g: usize,
    pub n: usize,
    pub field: Field,
    pub kind: MemberKind,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub pencil: Pencil,
    pub x: MatrixTuple,
    pub seed: u64,
    pub index: u64,
}

pub fn instance_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// (G + Gᵀ)/2 for a standard Gaussian G.
pub fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
    (&g + g.transpose()) * 0.5
}

/// (G + G*)/2 for G with independent standard Gaussian real and imaginary parts.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    (&g + g.adjoint()).map(|z| z * 0.5)
}

pub fn random_self_adjoint<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Mat {
    match field {
        Field::Real => Mat::Real(random_symmetric(n, rng)),
        Field::Complex => Mat::Complex(random_hermitian(n, rng)),
    }
}

/// Random real pencil of size d + 2g: a Gaussian symmetric part followed by
/// blocks diag(1/r, −1/r) in coordinate j, which confine |x_j| ≤ r.
pub fn random_pencil<R: Rng + ?Sized>(d: usize, g: usize, rng: &mut R) -> Result<Pencil> {
    if g == 0 {
        return input("g must be at least 1");
    }
    let total = d + 2 * g;
    let inv = 1.0 / CUBE_HALF_WIDTH;
    let mats = (0..g)
        .map(|j| {
            let mut a = DMatrix::zeros(total, total);
            if d > 0 {
                a.view_mut((0, 0), (d, d)).copy_from(&random_symmetric(d, rng));
            }
            a[(d + 2 * j, d + 2 * j)] = inv;
            a[(d + 2 * j + 1, d + 2 * j + 1)] = -inv;
            a
        })
        .collect();
    Pencil::real(mats)
}

/// Random self-adjoint direction with unit Frobenius norm.
pub fn random_direction<R: Rng + ?Sized>(n: usize, g: usize, field: Field, rng: &mut R) -> Result<MatrixTuple> {
    let t = MatrixTuple::new(field, (0..g).map(|_| random_self_adjoint(n, field, rng)).collect())?;
    let norm = t.frobenius();
    Ok(if norm > 0.0 { t.scale(1.0 / norm) } else { t })
}

/// sup{s ≥ 0 : L_A(sH) ⪰ 0}, by doubling then bisection; returns a value on
/// the feasible side.
pub fn boundary_scale(p: &Pencil, h: &MatrixTuple) -> Result<f64> {
    let member = |s: f64| -> Result<bool> { Ok(eval_monic(p, &h.scale(s))?.min_eigenvalue() >= 0.0) };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut grow = 0;
    while member(hi)? {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return input("direction is unbounded in the spectrahedron");
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if member(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn random_member<R: Rng + ?Sized>(
    p: &Pencil,
    n: usize,
    field: Field,
    kind: MemberKind,
    rng: &mut R,
) -> Result<MatrixTuple> {
    let frac = match kind {
        MemberKind::Interior => 0.9,
        MemberKind::Boundary => 1.0,
    };
    random_at_fraction(p, n, field, frac, rng)
}

/// frac·t·H for a random unit direction H with t the boundary scale along H.
/// Fractions above 1 give non-members.
pub fn random_at_fraction<R: Rng + ?Sized>(
    p: &Pencil,
    n: usize,
    field: Field,
    frac: f64,
    rng: &mut R,
) -> Result<MatrixTuple> {
    let h = random_direction(n, p.g(), field, rng)?;
    let t = boundary_scale(p, &h)?;
    Ok(h.scale(frac * t))
}

pub fn instance(spec: &InstanceSpec, seed: u64, index: u64) -> Result<Instance> {
    if spec.n == 0 {
        return input("n must be at least 1");
    }
    let mut rng = instance_rng(seed, index);
    let pencil = random_pencil(spec.d, spec.g, &mut rng)?;
    let x = random_member(&pencil, spec.n, spec.field, spec.kind, &mut rng)?;
    Ok(Instance { pencil, x, seed, index })
}

/// Haar-like unitary from the QR factorization of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Mat {
    match field {
        Field::Real => {
            let g = DMatrix::from_fn(n, n, |_, _| gaussian(rng));
            Mat::Real(g.qr().q())
        }
        Field::Complex => {
            let g = DMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)));
            Mat::Complex(g.qr().q())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::{is_bounded, is_member, ToleranceConfig};

    #[test]
    fn instances_are_reproducible() {
        let spec = InstanceSpec { d: 3, g: 2, n: 2, field: Field::Real, kind: MemberKind::Interior };
        let a = instance(&spec, 9, 4).unwrap();
        let b = instance(&spec, 9, 4).unwrap();
        assert_eq!(a.pencil, b.pencil);
        assert_eq!(a.x, b.x);
        let c = instance(&spec, 9, 5).unwrap();
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn generated_pencil_bounded_and_member_inside() {
        let cfg = ToleranceConfig::default();
        for kind in [MemberKind::Interior, MemberKind::Boundary] {
            let spec = InstanceSpec { d: 2, g: 3, n: 2, field: Field::Complex, kind };
            let inst = instance(&spec, 1, 0).unwrap();
            assert!(is_bounded(&inst.pencil, &cfg).unwrap().bounded);
            let m = is_member(&inst.pencil, &inst.x, &cfg).unwrap();
            assert!(m.member);
            if kind == MemberKind::Boundary {
                assert!(m.lambda_min < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = instance_rng(3, 0);
        for field in [Field::Real, Field::Complex] {
            let u = random_unitary(4, field, &mut rng);
            assert!(u.adjoint().mul(&u).sub(&Mat::identity(4)).frobenius() < 1e-12);
        }
    }
}
