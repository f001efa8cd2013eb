//! Moment matrices, the symmetric pencil solver, and the λ / η hierarchies.
//!
//! For a state `φ` and basis words `u_i`, `M_G(f φ)_{ij} = φ(u_i* f u_j)`. The
//! λ bound at order `d` is the largest `λ` with `M_G(f ψ_d) ⪰ λ M_G(1 ψ_d)`
//! over the degree-`d` basis. The η bound uses the Hankel matrices
//! `(ψ_d(f^{i+j+1}))` and `(ψ_d(f^{i+j}))`, `0 ≤ i, j ≤ d`. Both are upper
//! bounds on the minimal eigenvalue of `f`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::algebra::{AlgebraSpec, NcPolynomial, Word};
use crate::haar::{HaarEngine, HaarError};
use crate::scalar::Scalar;
use crate::states::{StateError, StateEvaluator, StateSpec};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("objective must satisfy f = f*")]
    NotSelfAdjoint,
    #[error(transparent)]
    State(#[from] StateError),
    #[error("f^{power} has {support} distinct words, above the cap of {cap}")]
    SupportExceeded { power: usize, support: usize, cap: usize },
    #[error("pencil matrices have mismatched sizes {0} and {1}")]
    ShapeMismatch(usize, usize),
    #[error("right-hand matrix is indefinite: smallest eigenvalue {min:.3e} against largest {max:.3e}")]
    Indefinite { min: f64, max: f64 },
    #[error("right-hand matrix is zero")]
    ZeroPencil,
    #[error("kernel of the right-hand matrix is not annihilated: residual {residual:.3e} > {bound:.3e}")]
    KernelViolation { residual: f64, bound: f64 },
    #[error("moment matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Budget,
    Numerical,
}

impl HierarchyError {
    pub fn class(&self) -> ErrorClass {
        match self {
            HierarchyError::SupportExceeded { .. } | HierarchyError::State(StateError::Haar(HaarError::BudgetExceeded { .. })) => {
                ErrorClass::Budget
            }
            HierarchyError::Indefinite { .. }
            | HierarchyError::ZeroPencil
            | HierarchyError::KernelViolation { .. }
            | HierarchyError::Asymmetric(..) => ErrorClass::Numerical,
            _ => ErrorClass::Input,
        }
    }
}

/// Symmetric matrix `[φ(u_i* f u_j)]` over an ordered word basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix<S> {
    pub basis: Vec<Word>,
    pub entries: Vec<Vec<S>>,
}

impl<S: Scalar> MomentMatrix<S> {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        to_dense(&self.entries)
    }
}

pub fn to_dense<S: Scalar>(entries: &[Vec<S>]) -> DMatrix<f64> {
    let n = entries.len();
    DMatrix::from_fn(n, n, |i, j| entries[i][j].to_f64())
}

/// Exact pencil `(A, B)` handed to [`max_shift`].
#[derive(Debug, Clone, PartialEq)]
pub struct PencilInputs<S> {
    pub a: Vec<Vec<S>>,
    pub b: Vec<Vec<S>>,
}

pub fn moment_matrix<S: Scalar>(
    f: &NcPolynomial<S>,
    state: &StateEvaluator<S>,
    basis: &[Word],
) -> Result<MomentMatrix<S>, HierarchyError> {
    let algebra = state.algebra();
    if !f.is_self_adjoint(algebra) {
        return Err(HierarchyError::NotSelfAdjoint);
    }
    let n = basis.len();
    let starred: Vec<Word> = basis.iter().map(|u| algebra.star_word(u)).collect();
    let flat: Vec<S> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let mut total = S::zero();
            for (w, c) in f.terms() {
                let word = algebra.reduce(
                    starred[i]
                        .letters()
                        .iter()
                        .chain(w.letters())
                        .chain(basis[j].letters())
                        .copied(),
                );
                total = total + c.clone() * state.evaluate(&word)?;
            }
            Ok(total)
        })
        .collect::<Result<_, StateError>>()?;
    let entries: Vec<Vec<S>> = flat.chunks(n.max(1)).take(n).map(|row| row.to_vec()).collect();
    if S::EXACT {
        for (i, row) in entries.iter().enumerate() {
            if let Some(j) = (i + 1..n).find(|&j| row[j] != entries[j][i]) {
                return Err(HierarchyError::Asymmetric(i, j));
            }
        }
    }
    Ok(MomentMatrix {
        basis: basis.to_vec(),
        entries,
    })
}

/// `[φ(f^0), φ(f^1), …, φ(f^max_power)]`.
pub fn scalar_moments<S: Scalar>(
    f: &NcPolynomial<S>,
    state: &StateEvaluator<S>,
    max_power: usize,
    support_cap: usize,
) -> Result<Vec<S>, HierarchyError> {
    let algebra = state.algebra();
    if !f.is_self_adjoint(algebra) {
        return Err(HierarchyError::NotSelfAdjoint);
    }
    let mut moments = vec![S::one()];
    let mut power = NcPolynomial::<S>::one();
    for k in 1..=max_power {
        power = power.multiply(f, algebra);
        if power.len() > support_cap {
            return Err(HierarchyError::SupportExceeded {
                power: k,
                support: power.len(),
                cap: support_cap,
            });
        }
        let terms: Vec<(&Word, &S)> = power.terms().collect();
        let values: Vec<S> = terms
            .par_iter()
            .map(|(w, c)| state.evaluate(w).map(|v| (*c).clone() * v))
            .collect::<Result<_, StateError>>()?;
        moments.push(values.into_iter().fold(S::zero(), |acc, v| acc + v));
    }
    Ok(moments)
}

/// `(m_{i+j+shift})_{i,j=0..=order}`.
pub fn hankel<S: Scalar>(moments: &[S], shift: usize, order: usize) -> Vec<Vec<S>> {
    (0..=order)
        .map(|i| (0..=order).map(|j| moments[i + j + shift].clone()).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilReport {
    /// Largest `λ` with `A − λB ⪰ 0`.
    pub lambda: f64,
    pub dimension: usize,
    pub rank_b: usize,
    /// `max ‖A z‖` over unit vectors `z` in the discarded kernel of `B`.
    pub kernel_residual: f64,
    pub tolerance: f64,
}

/// Largest `λ` with `A − λB ⪰ 0` for symmetric `A` and PSD `B`.
///
/// `B` is diagonalized; eigenvectors with eigenvalue at most `tol · λ_max(B)`
/// form its numerical kernel, which must be annihilated by `A` up to
/// `tol · ‖A‖_F`. The bound is the smallest eigenvalue of `A` compressed to the
/// range of `B` and whitened by `B`.
pub fn max_shift(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<PencilReport, HierarchyError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(HierarchyError::ShapeMismatch(n, b.nrows()));
    }
    let eig_b = SymmetricEigen::new(b.clone());
    let max_b = eig_b.eigenvalues.max();
    let min_b = eig_b.eigenvalues.min();
    if n == 0 || max_b <= 0.0 {
        return Err(HierarchyError::ZeroPencil);
    }
    if min_b < -tol * max_b {
        return Err(HierarchyError::Indefinite { min: min_b, max: max_b });
    }
    let cutoff = tol * max_b;
    let keep: Vec<usize> = (0..n).filter(|&k| eig_b.eigenvalues[k] > cutoff).collect();

    let norm_a = a.norm();
    let mut kernel_residual = 0.0f64;
    for k in (0..n).filter(|k| !keep.contains(k)) {
        let z = eig_b.eigenvectors.column(k);
        kernel_residual = kernel_residual.max((a * z).norm());
    }
    let bound = tol * norm_a;
    if kernel_residual > bound {
        return Err(HierarchyError::KernelViolation {
            residual: kernel_residual,
            bound,
        });
    }

    let whitened = DMatrix::from_fn(n, keep.len(), |i, c| {
        let k = keep[c];
        eig_b.eigenvectors[(i, k)] / eig_b.eigenvalues[k].sqrt()
    });
    let compressed = whitened.transpose() * a * &whitened;
    let compressed = (&compressed + compressed.transpose()) * 0.5;
    let lambda = SymmetricEigen::new(compressed).eigenvalues.min();
    Ok(PencilReport {
        lambda,
        dimension: n,
        rank_b: keep.len(),
        kernel_residual,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyOptions {
    pub tol: f64,
    pub support_cap: usize,
    /// Use this state index for every order instead of coupling it to the order.
    pub state_index: Option<usize>,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            tol: DEFAULT_TOLERANCE,
            support_cap: DEFAULT_SUPPORT_CAP,
            state_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Lambda,
    Eta,
    Both,
}

impl Which {
    pub fn lambda(self) -> bool {
        matches!(self, Which::Lambda | Which::Both)
    }

    pub fn eta(self) -> bool {
        matches!(self, Which::Eta | Which::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRecord<S> {
    pub pencil: PencilReport,
    pub inputs: PencilInputs<S>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRecord<S> {
    pub order: usize,
    pub basis_size: usize,
    pub state: String,
    pub lambda: Option<BoundRecord<S>>,
    pub eta: Option<BoundRecord<S>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HierarchyReport<S> {
    pub rows: Vec<OrderRecord<S>>,
}

impl<S: Scalar> HierarchyReport<S> {
    pub fn lambdas(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.lambda.as_ref().map(|b| b.pencil.lambda)).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.eta.as_ref().map(|b| b.pencil.lambda)).collect()
    }

    /// Both columns weakly decreasing up to `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let decreasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] <= w[0] + slack);
        decreasing(self.lambdas()) && decreasing(self.etas())
    }
}

/// λ bound for one order against a compiled state.
pub fn lambda_bound<S: Scalar>(
    f: &NcPolynomial<S>,
    state: &StateEvaluator<S>,
    basis: &[Word],
    tol: f64,
) -> Result<BoundRecord<S>, HierarchyError> {
    let start = Instant::now();
    let a = moment_matrix(f, state, basis)?;
    let b = moment_matrix(&NcPolynomial::one(), state, basis)?;
    let pencil = max_shift(&a.to_f64(), &b.to_f64(), tol)?;
    Ok(BoundRecord {
        pencil,
        inputs: PencilInputs {
            a: a.entries,
            b: b.entries,
        },
        elapsed: start.elapsed(),
    })
}

/// η bound for one order against a compiled state.
pub fn eta_bound<S: Scalar>(
    f: &NcPolynomial<S>,
    state: &StateEvaluator<S>,
    order: usize,
    tol: f64,
    support_cap: usize,
) -> Result<BoundRecord<S>, HierarchyError> {
    let start = Instant::now();
    let moments = scalar_moments(f, state, 2 * order + 1, support_cap)?;
    let a = hankel(&moments, 1, order);
    let b = hankel(&moments, 0, order);
    let pencil = max_shift(&to_dense(&a), &to_dense(&b), tol)?;
    Ok(BoundRecord {
        pencil,
        inputs: PencilInputs { a, b },
        elapsed: start.elapsed(),
    })
}

/// Runs the selected hierarchies at each of `orders`.
///
/// `family(d)` supplies the state paired with order `d`.
#[allow(clippy::too_many_arguments)]
pub fn run_hierarchy<S: Scalar>(
    f: &NcPolynomial<S>,
    algebra: &AlgebraSpec,
    generating_subset: &[usize],
    family: &dyn Fn(usize) -> StateSpec,
    orders: &[usize],
    which: Which,
    engine: Arc<HaarEngine<S>>,
    options: &HierarchyOptions,
) -> Result<HierarchyReport<S>, HierarchyError> {
    if !f.is_self_adjoint(algebra) {
        return Err(HierarchyError::NotSelfAdjoint);
    }
    let mut report = HierarchyReport { rows: Vec::new() };
    for &order in orders {
        let spec = family(options.state_index.unwrap_or(order));
        let state = StateEvaluator::new(algebra, &spec, engine.clone())?;
        let basis = algebra.words_up_to(generating_subset, order);
        let lambda = if which.lambda() {
            Some(lambda_bound(f, &state, &basis, options.tol)?)
        } else {
            None
        };
        let eta = if which.eta() {
            Some(eta_bound(f, &state, order, options.tol, options.support_cap)?)
        } else {
            None
        };
        report.rows.push(OrderRecord {
            order,
            basis_size: basis.len(),
            state: spec.to_string(),
            lambda,
            eta,
        });
    }
    Ok(report)
}

pub fn lambda_sequence<S: Scalar>(
    f: &NcPolynomial<S>,
    algebra: &AlgebraSpec,
    generating_subset: &[usize],
    family: &dyn Fn(usize) -> StateSpec,
    max_order: usize,
    engine: Arc<HaarEngine<S>>,
    options: &HierarchyOptions,
) -> Result<HierarchyReport<S>, HierarchyError> {
    let orders: Vec<usize> = (1..=max_order).collect();
    run_hierarchy(f, algebra, generating_subset, family, &orders, Which::Lambda, engine, options)
}

pub fn eta_sequence<S: Scalar>(
    f: &NcPolynomial<S>,
    algebra: &AlgebraSpec,
    family: &dyn Fn(usize) -> StateSpec,
    max_order: usize,
    engine: Arc<HaarEngine<S>>,
    options: &HierarchyOptions,
) -> Result<HierarchyReport<S>, HierarchyError> {
    let all = algebra.all_generators();
    let orders: Vec<usize> = (1..=max_order).collect();
    run_hierarchy(f, algebra, &all, family, &orders, Which::Eta, engine, options)
}
