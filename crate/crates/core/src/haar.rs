//! Exact Haar expectations of traces of words in independent random unitaries
//! and fixed signature matrices, plus a Monte Carlo estimator used as an
//! independent check.
//!
//! For a cyclic word `tr(X_0 X_1 ⋯ X_{L-1})` every atom `X_p` maps index slot
//! `p` to slot `p+1 (mod L)`. An unstarred unitary contributes the entry
//! `U[i_p, i_{p+1}]`, a starred one `conj(U[i_{p+1}, i_p])`. For each symbol the
//! Weingarten expansion sums over pairs `(σ, τ)` that glue row slots of the
//! unstarred entries to row slots of the conjugated ones (`σ`) and column slots
//! likewise (`τ`), weighted by `Wg(σ τ⁻¹, dim)`. Gluing collapses the slots into
//! loops; a loop carrying signature matrices `D_{r_1}, …, D_{r_m}` contributes
//! `Σ_i Π_c s_{r_c}(i)`, which is `dim` for a loop without constants.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Scalar;
use crate::symmetric::{Partition, Permutation, WeingartenTable};

/// Default cap on the number of `(σ, τ)` configurations per word.
pub const DEFAULT_TERM_BUDGET: u128 = 100_000_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum HaarError {
    #[error("constant {0} is not defined")]
    MissingConstant(usize),
    #[error("constant {id} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: usize,
        found: usize,
        expected: usize,
    },
    #[error("signature matrix with r = {r} does not fit dimension {dim}")]
    BadSignature { dim: usize, r: usize },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("Weingarten expansion needs {terms} terms, above the budget of {budget}")]
    BudgetExceeded { terms: u128, budget: u128 },
    #[error("Monte Carlo needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// `diag(I_r, −I_{dim−r})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignatureMatrix {
    pub dim: usize,
    pub r: usize,
}

impl SignatureMatrix {
    pub fn new(dim: usize, r: usize) -> Result<Self, HaarError> {
        if r > dim {
            return Err(HaarError::BadSignature { dim, r });
        }
        Ok(SignatureMatrix { dim, r })
    }

    pub fn balanced(half: usize) -> Self {
        SignatureMatrix {
            dim: 2 * half,
            r: half,
        }
    }

    pub fn trace(&self) -> i128 {
        2 * self.r as i128 - self.dim as i128
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i != j {
                Complex64::new(0.0, 0.0)
            } else if i < self.r {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(-1.0, 0.0)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Unitary { symbol: usize, starred: bool },
    Constant(usize),
}

impl Atom {
    pub fn unitary(symbol: usize) -> Self {
        Atom::Unitary {
            symbol,
            starred: false,
        }
    }

    pub fn unitary_star(symbol: usize) -> Self {
        Atom::Unitary {
            symbol,
            starred: true,
        }
    }
}

/// Word read cyclically under the trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TraceWord {
    pub atoms: Vec<Atom>,
}

impl TraceWord {
    pub fn new(atoms: Vec<Atom>) -> Self {
        TraceWord { atoms }
    }

    pub fn rotated(&self, shift: usize) -> Self {
        let mut atoms = self.atoms.clone();
        if !atoms.is_empty() {
            let k = shift % atoms.len();
            atoms.rotate_left(k);
        }
        TraceWord { atoms }
    }

    /// Adjoint word: reversed, with every unitary starred/unstarred.
    /// Signature constants are self-adjoint.
    pub fn adjoint(&self) -> Self {
        TraceWord {
            atoms: self
                .atoms
                .iter()
                .rev()
                .map(|a| match *a {
                    Atom::Unitary { symbol, starred } => Atom::Unitary {
                        symbol,
                        starred: !starred,
                    },
                    c => c,
                })
                .collect(),
        }
    }
}

/// Atom with constants resolved to their signature, used for cache keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum KeyAtom {
    U { symbol: u32, starred: bool },
    Sig(u32),
}

impl KeyAtom {
    fn cancels(self, next: KeyAtom) -> bool {
        match (self, next) {
            (KeyAtom::U { symbol: a, starred: s }, KeyAtom::U { symbol: b, starred: t }) => a == b && s != t,
            (KeyAtom::Sig(r), KeyAtom::Sig(q)) => r == q,
            _ => false,
        }
    }
}

/// Free reduction followed by trimming of cancelling ends (cyclic reduction).
fn cyclic_reduce(atoms: impl IntoIterator<Item = KeyAtom>) -> Vec<KeyAtom> {
    let mut stack: Vec<KeyAtom> = Vec::new();
    for atom in atoms {
        match stack.last() {
            Some(&top) if top.cancels(atom) => {
                stack.pop();
            }
            _ => stack.push(atom),
        }
    }
    let mut start = 0;
    let mut end = stack.len();
    while end - start >= 2 && stack[end - 1].cancels(stack[start]) {
        start += 1;
        end -= 1;
    }
    stack[start..end].to_vec()
}

/// Lexicographically least rotation after relabelling symbols by first use.
fn canonical_rotation(atoms: &[KeyAtom]) -> Vec<KeyAtom> {
    let mut best: Option<Vec<KeyAtom>> = None;
    for shift in 0..atoms.len().max(1) {
        let mut relabel: HashMap<u32, u32> = HashMap::new();
        let candidate: Vec<KeyAtom> = atoms[shift..]
            .iter()
            .chain(&atoms[..shift])
            .map(|&a| match a {
                KeyAtom::U { symbol, starred } => {
                    let next = relabel.len() as u32;
                    KeyAtom::U {
                        symbol: *relabel.entry(symbol).or_insert(next),
                        starred,
                    }
                }
                sig => sig,
            })
            .collect();
        if best.as_ref().is_none_or(|b| candidate < *b) {
            best = Some(candidate);
        }
    }
    best.unwrap_or_default()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

/// Exact moment engine with a shared memo cache; safe to use from many threads.
#[derive(Debug)]
pub struct HaarEngine<S> {
    weingarten: WeingartenTable<S>,
    cache: RwLock<HashMap<(Vec<KeyAtom>, usize), S>>,
    budget: u128,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<S: Scalar> Default for HaarEngine<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> HaarEngine<S> {
    pub fn new() -> Self {
        Self::with_budget(DEFAULT_TERM_BUDGET)
    }

    pub fn with_budget(budget: u128) -> Self {
        HaarEngine {
            weingarten: WeingartenTable::new(),
            cache: RwLock::new(HashMap::new()),
            budget,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn budget(&self) -> u128 {
        self.budget
    }

    pub fn weingarten(&self) -> &WeingartenTable<S> {
        &self.weingarten
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.cache.read().len(),
        }
    }

    /// `E_Haar[Tr w]` (unnormalized trace) with every symbol an independent
    /// Haar unitary of size `dim`.
    pub fn exact_trace_moment(
        &self,
        word: &TraceWord,
        dim: usize,
        constants: &HashMap<usize, SignatureMatrix>,
    ) -> Result<S, HaarError> {
        if dim == 0 {
            return Err(HaarError::ZeroDimension);
        }
        let mut resolved = Vec::with_capacity(word.atoms.len());
        for atom in &word.atoms {
            resolved.push(match *atom {
                Atom::Unitary { symbol, starred } => KeyAtom::U {
                    symbol: symbol as u32,
                    starred,
                },
                Atom::Constant(id) => {
                    let sig = constants.get(&id).ok_or(HaarError::MissingConstant(id))?;
                    if sig.dim != dim {
                        return Err(HaarError::DimensionMismatch {
                            id,
                            found: sig.dim,
                            expected: dim,
                        });
                    }
                    if sig.r > sig.dim {
                        return Err(HaarError::BadSignature { dim, r: sig.r });
                    }
                    KeyAtom::Sig(sig.r as u32)
                }
            });
        }

        let reduced = cyclic_reduce(resolved);
        if !phase_balanced(&reduced) {
            return Ok(S::zero());
        }
        if reduced.is_empty() {
            return Ok(S::from_i128(dim as i128));
        }
        let key = (canonical_rotation(&reduced), dim);
        if let Some(v) = self.cache.read().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = self.expand(&key.0, dim)?;
        Ok(self.cache.write().entry(key).or_insert(value).clone())
    }

    fn expand(&self, atoms: &[KeyAtom], dim: usize) -> Result<S, HaarError> {
        let len = atoms.len();
        let symbol_count = atoms
            .iter()
            .filter_map(|a| match a {
                KeyAtom::U { symbol, .. } => Some(*symbol as usize + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);

        // row/column slots of the unstarred entries and of the conjugated ones
        let mut plain: Vec<Vec<(usize, usize)>> = vec![Vec::new(); symbol_count];
        let mut conj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); symbol_count];
        let mut sig_links: Vec<(usize, usize, usize)> = Vec::new();
        for (p, atom) in atoms.iter().enumerate() {
            let next = (p + 1) % len;
            match *atom {
                KeyAtom::U { symbol, starred: false } => plain[symbol as usize].push((p, next)),
                KeyAtom::U { symbol, starred: true } => conj[symbol as usize].push((next, p)),
                KeyAtom::Sig(r) => sig_links.push((p, next, r as usize)),
            }
        }

        let mut terms: u128 = 1;
        for list in &plain {
            let f = crate::symmetric::factorial(list.len());
            terms = terms.saturating_mul(f.saturating_mul(f));
        }
        if terms > self.budget {
            return Err(HaarError::BudgetExceeded {
                terms,
                budget: self.budget,
            });
        }

        let perms: Vec<Vec<Permutation>> = plain.iter().map(|l| Permutation::all(l.len())).collect();
        let classes: Vec<Vec<Vec<Partition>>> = perms
            .iter()
            .map(|ps| {
                ps.iter()
                    .map(|s| ps.iter().map(|t| s.compose(&t.inverse()).cycle_type()).collect())
                    .collect()
            })
            .collect();

        // group configurations by their tuple of cycle types, summing loop values
        let mut grouped: HashMap<Vec<Partition>, i128> = HashMap::new();
        let mut sigma = vec![0usize; symbol_count];
        let mut tau = vec![0usize; symbol_count];
        let mut parent = vec![0usize; len];
        loop {
            for (i, slot) in parent.iter_mut().enumerate() {
                *slot = i;
            }
            for a in 0..symbol_count {
                let s = &perms[a][sigma[a]];
                let t = &perms[a][tau[a]];
                for (k, &(row, col)) in plain[a].iter().enumerate() {
                    union(&mut parent, row, conj[a][s.apply(k)].0);
                    union(&mut parent, col, conj[a][t.apply(k)].1);
                }
            }
            for &(from, to, _) in &sig_links {
                union(&mut parent, from, to);
            }
            let value = loop_value(&mut parent, &sig_links, dim);
            if value != 0 {
                let class: Vec<Partition> = (0..symbol_count)
                    .map(|a| classes[a][sigma[a]][tau[a]].clone())
                    .collect();
                *grouped.entry(class).or_insert(0) += value;
            }
            if !advance(&mut sigma, &mut tau, &perms) {
                break;
            }
        }

        let mut total = S::zero();
        for (class, count) in grouped {
            if count == 0 {
                continue;
            }
            let mut weight = S::from_i128(count);
            for mu in &class {
                weight = weight * self.weingarten.value(mu, dim);
            }
            total = total + weight;
        }
        Ok(total)
    }
}

fn phase_balanced(atoms: &[KeyAtom]) -> bool {
    let mut balance: HashMap<u32, i64> = HashMap::new();
    for a in atoms {
        if let KeyAtom::U { symbol, starred } = a {
            *balance.entry(*symbol).or_insert(0) += if *starred { -1 } else { 1 };
        }
    }
    balance.values().all(|&b| b == 0)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let ra = find(parent, a);
    let rb = find(parent, b);
    if ra != rb {
        parent[ra] = rb;
    }
}

/// Product over loops of `Σ_i Π_c s_{r_c}(i)`, where `s_r(i) = +1` for `i < r`.
fn loop_value(parent: &mut [usize], sig_links: &[(usize, usize, usize)], dim: usize) -> i128 {
    let mut signatures: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..parent.len() {
        let root = find(parent, i);
        signatures.entry(root).or_default();
    }
    for &(from, _, r) in sig_links {
        let root = find(parent, from);
        signatures.entry(root).or_default().push(r);
    }
    let mut product: i128 = 1;
    for (_, mut rs) in signatures {
        rs.sort_unstable();
        let mut sum: i128 = 0;
        let mut prev = 0usize;
        for (k, &r) in rs.iter().chain(std::iter::once(&dim)).enumerate() {
            let width = (r - prev) as i128;
            sum += if k % 2 == 0 { width } else { -width };
            prev = r;
        }
        if sum == 0 {
            return 0;
        }
        product *= sum;
    }
    product
}

/// Odometer over `(σ_a, τ_a)` for every symbol; returns false after the last one.
fn advance(sigma: &mut [usize], tau: &mut [usize], perms: &[Vec<Permutation>]) -> bool {
    for a in 0..sigma.len() {
        let n = perms[a].len();
        tau[a] += 1;
        if tau[a] < n {
            return true;
        }
        tau[a] = 0;
        sigma[a] += 1;
        if sigma[a] < n {
            return true;
        }
        sigma[a] = 0;
    }
    false
}

/// Haar unitary from the QR decomposition of a complex Ginibre matrix, with
/// the phases of `R`'s diagonal moved into `Q`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// `|exact − estimate| ≤ sigmas · stderr`, with a floor for float round-off.
    pub fn agrees_with(&self, exact: f64, sigmas: f64) -> bool {
        (exact - self.estimate).abs() <= sigmas * self.stderr + 1e-9 * (1.0 + exact.abs())
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn finish(&self) -> McEstimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            estimate: self.mean,
            stderr: (var / self.count.max(1) as f64).sqrt(),
        }
    }
}

fn trace_of_product(
    word: &TraceWord,
    unitaries: &[DMatrix<Complex64>],
    adjoints: &[DMatrix<Complex64>],
    constants: &HashMap<usize, DMatrix<Complex64>>,
    dim: usize,
) -> Complex64 {
    let mut acc = DMatrix::<Complex64>::identity(dim, dim);
    for atom in &word.atoms {
        acc = match *atom {
            Atom::Unitary { symbol, starred: false } => acc * &unitaries[symbol],
            Atom::Unitary { symbol, starred: true } => acc * &adjoints[symbol],
            Atom::Constant(id) => acc * &constants[&id],
        };
    }
    acc.trace()
}

/// Monte Carlo estimate of `E[Re Tr w]`, one sample set shared by all words.
///
/// Deterministic for a given seed: every call owns its generator.
pub fn mc_trace_moments(
    words: &[TraceWord],
    dim: usize,
    constants: &HashMap<usize, SignatureMatrix>,
    samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, HaarError> {
    if samples < 2 {
        return Err(HaarError::TooFewSamples(samples));
    }
    if dim == 0 {
        return Err(HaarError::ZeroDimension);
    }
    let mut dense = HashMap::new();
    for word in words {
        for atom in &word.atoms {
            if let Atom::Constant(id) = atom {
                let sig = constants.get(id).ok_or(HaarError::MissingConstant(*id))?;
                if sig.dim != dim {
                    return Err(HaarError::DimensionMismatch {
                        id: *id,
                        found: sig.dim,
                        expected: dim,
                    });
                }
                dense.insert(*id, sig.to_matrix());
            }
        }
    }
    let symbols = words
        .iter()
        .flat_map(|w| w.atoms.iter())
        .filter_map(|a| match a {
            Atom::Unitary { symbol, .. } => Some(symbol + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = vec![RunningMean::default(); words.len()];
    for _ in 0..samples {
        let unitaries: Vec<_> = (0..symbols).map(|_| sample_haar_unitary(dim, &mut rng)).collect();
        let adjoints: Vec<_> = unitaries.iter().map(|u| u.adjoint()).collect();
        for (word, stat) in words.iter().zip(stats.iter_mut()) {
            stat.push(trace_of_product(word, &unitaries, &adjoints, &dense, dim).re);
        }
    }
    Ok(stats.iter().map(RunningMean::finish).collect())
}

pub fn mc_trace_moment(
    word: &TraceWord,
    dim: usize,
    constants: &HashMap<usize, SignatureMatrix>,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, HaarError> {
    Ok(mc_trace_moments(std::slice::from_ref(word), dim, constants, samples, seed)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn u(s: usize) -> Atom {
        Atom::unitary(s)
    }

    fn us(s: usize) -> Atom {
        Atom::unitary_star(s)
    }

    fn no_constants() -> HashMap<usize, SignatureMatrix> {
        HashMap::new()
    }

    #[test]
    fn trace_of_identity_and_phase() {
        let engine = HaarEngine::<Rational>::new();
        for d in 1..=4 {
            let w = TraceWord::new(vec![u(0), us(0)]);
            assert_eq!(engine.exact_trace_moment(&w, d, &no_constants()).unwrap(), q(d as i128, 1));
            let w = TraceWord::new(vec![u(0)]);
            assert_eq!(engine.exact_trace_moment(&w, d, &no_constants()).unwrap(), q(0, 1));
        }
    }

    #[test]
    fn group_commutator() {
        let engine = HaarEngine::<Rational>::new();
        let w = TraceWord::new(vec![u(0), u(1), us(0), us(1)]);
        for d in 1..=5 {
            assert_eq!(engine.exact_trace_moment(&w, d, &no_constants()).unwrap(), q(1, d as i128));
        }
    }

    #[test]
    fn conjugation_averages_to_trace() {
        // E tr(U A U* B) = tr(A) tr(B) / d for fixed A, B.
        let engine = HaarEngine::<Rational>::new();
        for dim in 1..=4usize {
            for r in 0..=dim {
                for s in 0..=dim {
                    let mut constants = HashMap::new();
                    constants.insert(0, SignatureMatrix::new(dim, r).unwrap());
                    constants.insert(1, SignatureMatrix::new(dim, s).unwrap());
                    let w = TraceWord::new(vec![u(0), Atom::Constant(0), us(0), Atom::Constant(1)]);
                    let expected = q(
                        constants[&0].trace() * constants[&1].trace(),
                        dim as i128,
                    );
                    assert_eq!(engine.exact_trace_moment(&w, dim, &constants).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn signature_examples() {
        let engine = HaarEngine::<Rational>::new();
        let mut constants = HashMap::new();
        for m in 1..=3 {
            constants.insert(0, SignatureMatrix::balanced(m));
            let w = TraceWord::new(vec![u(0), Atom::Constant(0), us(0)]);
            assert_eq!(engine.exact_trace_moment(&w, 2 * m, &constants).unwrap(), q(0, 1));
        }
        constants.insert(0, SignatureMatrix::new(4, 2).unwrap());
        let w = TraceWord::new(vec![u(0), Atom::Constant(0), us(0), u(0), Atom::Constant(0), us(0)]);
        assert_eq!(engine.exact_trace_moment(&w, 4, &constants).unwrap(), q(4, 1));
    }

    #[test]
    fn conjugated_projection_pair() {
        // b = U D U*, c = V D V* with D balanced of size 2: E tr(b c b c) / 2 = -1/3,
        // the Bloch-sphere value 2 E[(n·m)^2] - 1.
        let engine = HaarEngine::<Rational>::new();
        let mut constants = HashMap::new();
        constants.insert(0, SignatureMatrix::balanced(1));
        let d = Atom::Constant(0);
        let b = [u(0), d, us(0)];
        let c = [u(1), d, us(1)];
        let atoms: Vec<Atom> = b.iter().chain(&c).chain(&b).chain(&c).copied().collect();
        let value = engine.exact_trace_moment(&TraceWord::new(atoms), 2, &constants).unwrap();
        assert_eq!(value / q(2, 1), q(-1, 3));
    }

    #[test]
    fn errors() {
        let engine = HaarEngine::<Rational>::new();
        let w = TraceWord::new(vec![u(0), Atom::Constant(7), us(0)]);
        assert_eq!(
            engine.exact_trace_moment(&w, 2, &no_constants()),
            Err(HaarError::MissingConstant(7))
        );
        let mut constants = HashMap::new();
        constants.insert(7, SignatureMatrix::balanced(2));
        assert!(matches!(
            engine.exact_trace_moment(&w, 2, &constants),
            Err(HaarError::DimensionMismatch { .. })
        ));
        assert!(SignatureMatrix::new(2, 3).is_err());
        let tight = HaarEngine::<Rational>::with_budget(10);
        let w = TraceWord::new(vec![u(0), u(0), u(0), us(1), us(0), us(0), us(0), u(1)]);
        assert!(matches!(
            tight.exact_trace_moment(&w, 3, &no_constants()),
            Err(HaarError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn cyclic_reduction_and_key() {
        let a = KeyAtom::U { symbol: 0, starred: false };
        let a_ = KeyAtom::U { symbol: 0, starred: true };
        let b = KeyAtom::U { symbol: 1, starred: false };
        assert!(cyclic_reduce([a, b, a_]).len() == 1);
        assert!(cyclic_reduce([a, a_]).is_empty());
        assert!(cyclic_reduce([KeyAtom::Sig(1), KeyAtom::Sig(1)]).is_empty());
        assert_eq!(cyclic_reduce([KeyAtom::Sig(1), KeyAtom::Sig(2)]).len(), 2);
        let rot1 = canonical_rotation(&[b, a, a_]);
        let rot2 = canonical_rotation(&[a, a_, b]);
        assert_eq!(rot1, rot2);
    }

    #[test]
    fn rotations_hit_the_cache() {
        let engine = HaarEngine::<Rational>::new();
        let w = TraceWord::new(vec![u(0), u(1), u(1), us(0), us(1), us(1)]);
        let first = engine.exact_trace_moment(&w, 3, &no_constants()).unwrap();
        let before = engine.cache_stats();
        for shift in 1..w.atoms.len() {
            assert_eq!(engine.exact_trace_moment(&w.rotated(shift), 3, &no_constants()).unwrap(), first);
        }
        let after = engine.cache_stats();
        assert_eq!(after.misses, before.misses);
        assert_eq!(after.hits, before.hits + 5);
    }

    #[test]
    fn monte_carlo_basics() {
        let w = TraceWord::new(vec![u(0), us(0)]);
        let est = mc_trace_moment(&w, 3, &no_constants(), 100, 1).unwrap();
        assert!((est.estimate - 3.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        assert_eq!(
            mc_trace_moment(&w, 3, &no_constants(), 1, 1),
            Err(HaarError::TooFewSamples(1))
        );
        // deterministic per seed
        let w = TraceWord::new(vec![u(0), u(1), us(0), us(1)]);
        let a = mc_trace_moment(&w, 2, &no_constants(), 500, 9).unwrap();
        let b = mc_trace_moment(&w, 2, &no_constants(), 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=5 {
            let u = sample_haar_unitary(dim, &mut rng);
            let err = (&u * u.adjoint() - DMatrix::identity(dim, dim)).norm();
            assert!(err < 1e-12);
        }
    }
}
