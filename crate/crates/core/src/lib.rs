//! Dilations of members of free spectrahedra to their Arveson boundary, and
//! decompositions of a member into a matrix convex combination of absolute
//! extreme points.
//!
//! A free spectrahedron is the set of self-adjoint tuples X with
//! L_A(X) = I + Σ A_j ⊗ X_j ⪰ 0. [`dilation::arveson_dilation`] enlarges X one
//! row at a time until no further dilation exists; [`decomposition`] splits the
//! result into irreducible pieces and certifies them.
//!
//! ```
//! use freespec::{decompose_extreme, MatrixTuple, Pencil, ToleranceConfig};
//! use nalgebra::DMatrix;
//! use rand::SeedableRng;
//!
//! let p = Pencil::real(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])]).unwrap();
//! let x = MatrixTuple::scalars(&[0.5]);
//! let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
//! let dec = decompose_extreme(&p, &x, &ToleranceConfig::default(), &mut rng).unwrap();
//! assert_eq!(dec.components.len(), 2);
//! assert!(dec.reconstruction_error() < 1e-8);
//! ```

pub mod batch;
pub mod complexify;
pub mod decomposition;
pub mod dilation;
pub mod error;
pub mod generate;
pub mod io;
pub mod linalg;
pub mod lmi;
pub mod schur;
pub mod tuple;

pub use complexify::{complex_decompose, realify_pencil, realify_tuple};
pub use decomposition::{decompose_extreme, decompose_with_trace, parameter_report, ExtremeDecomposition, Flags};
pub use dilation::{arveson_dilation, dilation_subspace, is_arveson, DilationStep, DilationTrace};
pub use error::{Error, Result};
pub use linalg::{Mat, C64};
pub use schur::{ncldl3, schur2_check, Block3};
pub use tuple::{eval_monic, is_bounded, is_member, Field, MatrixTuple, Pencil, ToleranceConfig};
