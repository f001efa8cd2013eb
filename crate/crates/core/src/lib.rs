//! Upper bound hierarchies for the minimal eigenvalue of self-adjoint
//! noncommutative polynomials.
//!
//! The pipeline: words and polynomials over typed generators ([`algebra`]),
//! exact Haar moments via the Weingarten calculus ([`symmetric`], [`haar`]),
//! states built from those moments ([`states`]), and moment-matrix pencils
//! whose largest feasible shift is an upper bound on the minimal eigenvalue
//! ([`hierarchy`]).
//!
//! Everything up to the eigensolve is generic over [`Scalar`]; the aliases
//! below name the exact instantiation used by default.

pub mod algebra;
pub mod haar;
pub mod hierarchy;
pub mod scalar;
pub mod states;
pub mod symmetric;

pub use algebra::{AlgebraError, AlgebraSpec, GeneratorKind, GeneratorSpec, Letter, NcPolynomial, Word};
pub use haar::{Atom, HaarEngine, HaarError, McEstimate, SignatureMatrix, TraceWord};
pub use scalar::{format_rational, parse_rational, Scalar};
pub use symmetric::{Partition, Permutation, WeingartenTable};

/// Exact rational scalar used end to end before the eigensolve.
pub type Rational = num_rational::BigRational;

pub type ExactPolynomial = NcPolynomial<Rational>;
pub type ExactHaarEngine = HaarEngine<Rational>;
pub type FloatHaarEngine = HaarEngine<f64>;
