//! States on the supported algebras, evaluated exactly on canonical words.
//!
//! A [`StateSpec`] is compiled against an [`AlgebraSpec`] into a
//! [`StateEvaluator`], which checks coverage once and then answers word
//! queries from shared caches. Evaluation is deterministic and thread-safe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::{One, Signed};
use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{AlgebraSpec, GeneratorKind, Letter, NcPolynomial, Word};
use crate::haar::{sample_haar_unitary, Atom, HaarEngine, HaarError, McEstimate, RunningMean, SignatureMatrix, TraceWord};
use crate::scalar::{format_rational, Scalar};
use crate::Rational;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("generator `{0}` is not covered by the state")]
    NotCovered(String),
    #[error("a Haar trace cannot mix generator kinds ({0} and {1})")]
    MixedKinds(&'static str, &'static str),
    #[error("a {0} state cannot span several tensor factors")]
    SpansFactors(&'static str),
    #[error("tensor product names factor {0}, which the algebra does not have")]
    UnknownFactor(usize),
    #[error("free-product components overlap on generator `{0}`")]
    Overlap(String),
    #[error("combination weights must be positive and sum to 1")]
    BadWeights,
    #[error("increasing combination needs at least one base state")]
    EmptyBase,
    #[error("Haar trace dimension must be positive")]
    ZeroDimension,
    #[error("Monte Carlo estimation is not available for {0} states")]
    NoSampler(&'static str),
    #[error(transparent)]
    Haar(#[from] HaarError),
}

/// Declarative description of a state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StateSpec {
    /// Canonical trace of the reduced group algebra: 1 on the identity, 0 elsewhere.
    CanonicalTrace,
    /// Normalized Haar trace. Unitary generators become independent Haar
    /// unitaries of size `dim`; hermitian-unitary generators become
    /// `U D U*` of size `2·dim` with `D` balanced.
    HaarTrace { dim: usize },
    /// Convex combination with exact positive weights summing to 1.
    Combination(Vec<(Rational, StateSpec)>),
    /// One state per factor tag.
    TensorProduct(BTreeMap<usize, StateSpec>),
    /// Reduced free product over a partition of the generators (by position).
    FreeProduct(Vec<(Vec<usize>, StateSpec)>),
}

impl StateSpec {
    pub fn haar(dim: usize) -> Self {
        StateSpec::HaarTrace { dim }
    }

    /// Applies `per_factor` to every factor tag of `algebra`; a single-factor
    /// algebra gets the state itself.
    pub fn per_factor(algebra: &AlgebraSpec, per_factor: impl Fn(usize) -> StateSpec) -> Self {
        if algebra.factor_count() == 1 {
            per_factor(0)
        } else {
            StateSpec::TensorProduct((0..algebra.factor_count()).map(|f| (f, per_factor(f))).collect())
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::CanonicalTrace => write!(f, "canonical-trace"),
            StateSpec::HaarTrace { dim } => write!(f, "haar({dim})"),
            StateSpec::Combination(terms) => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|(w, s)| format!("{}·{}", format_rational(w), s))
                    .collect();
                write!(f, "[{}]", parts.join(" + "))
            }
            StateSpec::TensorProduct(factors) => {
                let parts: Vec<String> = factors.values().map(|s| s.to_string()).collect();
                write!(f, "{}", parts.join(" ⊗ "))
            }
            StateSpec::FreeProduct(components) => {
                let parts: Vec<String> = components.iter().map(|(_, s)| s.to_string()).collect();
                write!(f, "({})", parts.join(" ⋆ "))
            }
        }
    }
}

/// `ψ_d = (2^d / (2^d − 1)) Σ_{i ≤ d} 2^{−i} φ_i` for `d = 1, …, D`.
pub fn make_increasing(base: &[StateSpec]) -> Result<Vec<StateSpec>, StateError> {
    if base.is_empty() {
        return Err(StateError::EmptyBase);
    }
    Ok((1..=base.len())
        .map(|d| StateSpec::Combination(increasing_weights(d).into_iter().zip(base[..d].iter().cloned()).collect()))
        .collect())
}

/// Weights `2^{d−i} / (2^d − 1)`, `i = 1..d`.
pub fn increasing_weights(d: usize) -> Vec<Rational> {
    let two = Rational::from_integer(2.into());
    let total = num_traits::pow(two.clone(), d) - Rational::one();
    (1..=d).map(|i| num_traits::pow(two.clone(), d - i) / total.clone()).collect()
}

#[derive(Debug, Clone)]
enum Node<S> {
    Canonical,
    Haar {
        kind: GeneratorKind,
        size: usize,
        constants: HashMap<usize, SignatureMatrix>,
    },
    Combination(Vec<(S, Rational, usize)>),
    Tensor(BTreeMap<usize, usize>),
    Free {
        component_of: HashMap<usize, usize>,
        components: Vec<usize>,
    },
}

const SIGNATURE_ID: usize = 0;

/// Compiled state with memoized word values.
#[derive(Debug)]
pub struct StateEvaluator<S> {
    algebra: AlgebraSpec,
    spec: StateSpec,
    nodes: Vec<Node<S>>,
    engine: Arc<HaarEngine<S>>,
    cache: RwLock<HashMap<(usize, Word), S>>,
}

const ROOT: usize = 0;

impl<S: Scalar> StateEvaluator<S> {
    pub fn new(algebra: &AlgebraSpec, spec: &StateSpec, engine: Arc<HaarEngine<S>>) -> Result<Self, StateError> {
        let mut evaluator = StateEvaluator {
            algebra: algebra.clone(),
            spec: spec.clone(),
            nodes: Vec::new(),
            engine,
            cache: RwLock::new(HashMap::new()),
        };
        let scope: BTreeSet<usize> = (0..algebra.len()).collect();
        evaluator.compile(spec, &scope)?;
        Ok(evaluator)
    }

    pub fn spec(&self) -> &StateSpec {
        &self.spec
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn engine(&self) -> &Arc<HaarEngine<S>> {
        &self.engine
    }

    fn compile(&mut self, spec: &StateSpec, scope: &BTreeSet<usize>) -> Result<usize, StateError> {
        let id = self.nodes.len();
        self.nodes.push(Node::Canonical);
        let node = match spec {
            StateSpec::CanonicalTrace => {
                for &g in scope {
                    if self.algebra.kind(g) == GeneratorKind::General {
                        return Err(StateError::NotCovered(self.algebra.generator(g).id.clone()));
                    }
                }
                Node::Canonical
            }
            StateSpec::HaarTrace { dim } => {
                if *dim == 0 {
                    return Err(StateError::ZeroDimension);
                }
                self.single_factor(scope, "Haar trace")?;
                let mut kind = None;
                for &g in scope {
                    let k = self.algebra.kind(g);
                    if k == GeneratorKind::General {
                        return Err(StateError::NotCovered(self.algebra.generator(g).id.clone()));
                    }
                    match kind {
                        None => kind = Some(k),
                        Some(prev) if prev != k => return Err(StateError::MixedKinds(prev.as_str(), k.as_str())),
                        _ => {}
                    }
                }
                let kind = kind.unwrap_or(GeneratorKind::Unitary);
                let (size, constants) = match kind {
                    GeneratorKind::HermitianUnitary => {
                        let sig = SignatureMatrix::balanced(*dim);
                        (sig.dim, HashMap::from([(SIGNATURE_ID, sig)]))
                    }
                    _ => (*dim, HashMap::new()),
                };
                Node::Haar { kind, size, constants }
            }
            StateSpec::Combination(terms) => {
                let total: Rational = terms.iter().map(|(w, _)| w.clone()).sum();
                if terms.is_empty() || !total.is_one() || terms.iter().any(|(w, _)| !w.is_positive()) {
                    return Err(StateError::BadWeights);
                }
                let mut children = Vec::with_capacity(terms.len());
                for (w, s) in terms {
                    let child = self.compile(s, scope)?;
                    children.push((S::from_rational(w), w.clone(), child));
                }
                Node::Combination(children)
            }
            StateSpec::TensorProduct(factors) => {
                let mut children = BTreeMap::new();
                for (&tag, s) in factors {
                    if tag >= self.algebra.factor_count() {
                        return Err(StateError::UnknownFactor(tag));
                    }
                    let sub: BTreeSet<usize> = scope.iter().copied().filter(|&g| self.algebra.factor(g) == tag).collect();
                    children.insert(tag, self.compile(s, &sub)?);
                }
                for &g in scope {
                    if !factors.contains_key(&self.algebra.factor(g)) {
                        return Err(StateError::NotCovered(self.algebra.generator(g).id.clone()));
                    }
                }
                Node::Tensor(children)
            }
            StateSpec::FreeProduct(components) => {
                self.single_factor(scope, "free product")?;
                let mut component_of = HashMap::new();
                let mut children = Vec::with_capacity(components.len());
                for (idx, (gens, s)) in components.iter().enumerate() {
                    let mut sub = BTreeSet::new();
                    for &g in gens {
                        if g >= self.algebra.len() || !scope.contains(&g) {
                            return Err(StateError::NotCovered(format!("#{g}")));
                        }
                        if component_of.insert(g, idx).is_some() {
                            return Err(StateError::Overlap(self.algebra.generator(g).id.clone()));
                        }
                        sub.insert(g);
                    }
                    children.push(self.compile(s, &sub)?);
                }
                if let Some(&g) = scope.iter().find(|g| !component_of.contains_key(g)) {
                    return Err(StateError::NotCovered(self.algebra.generator(g).id.clone()));
                }
                Node::Free {
                    component_of,
                    components: children,
                }
            }
        };
        self.nodes[id] = node;
        Ok(id)
    }

    fn single_factor(&self, scope: &BTreeSet<usize>, what: &'static str) -> Result<(), StateError> {
        let tags: BTreeSet<usize> = scope.iter().map(|&g| self.algebra.factor(g)).collect();
        if tags.len() > 1 {
            return Err(StateError::SpansFactors(what));
        }
        Ok(())
    }

    /// `φ(w)` for a canonical word over the algebra.
    pub fn evaluate(&self, word: &Word) -> Result<S, StateError> {
        self.eval_node(ROOT, word.letters())
    }

    fn eval_node(&self, node: usize, letters: &[Letter]) -> Result<S, StateError> {
        if letters.is_empty() {
            return Ok(S::one());
        }
        let key = (node, Word::from_letters(letters.to_vec()));
        if let Some(v) = self.cache.read().get(&key) {
            return Ok(v.clone());
        }
        let value = match &self.nodes[node] {
            Node::Canonical => S::zero(),
            Node::Haar { kind, size, constants } => {
                let trace_word = self.trace_word(*kind, letters);
                let moment = self.engine.exact_trace_moment(&trace_word, *size, constants)?;
                moment / S::from_i128(*size as i128)
            }
            Node::Combination(children) => {
                let mut total = S::zero();
                for (w, _, child) in children {
                    total = total + w.clone() * self.eval_node(*child, letters)?;
                }
                total
            }
            Node::Tensor(children) => {
                let mut product = S::one();
                for (tag, block) in self.algebra.factor_blocks(&key.1) {
                    let child = children[&tag];
                    product = product * self.eval_node(child, block)?;
                    if product.is_zero() {
                        break;
                    }
                }
                product
            }
            Node::Free {
                component_of,
                components,
            } => self.free_moment(node, letters, component_of, components)?,
        };
        self.cache.write().insert(key, value.clone());
        Ok(value)
    }

    fn trace_word(&self, kind: GeneratorKind, letters: &[Letter]) -> TraceWord {
        let mut atoms = Vec::with_capacity(letters.len() * 3);
        for l in letters {
            match kind {
                GeneratorKind::HermitianUnitary => {
                    atoms.push(Atom::unitary(l.gen));
                    atoms.push(Atom::Constant(SIGNATURE_ID));
                    atoms.push(Atom::unitary_star(l.gen));
                }
                _ => atoms.push(Atom::Unitary {
                    symbol: l.gen,
                    starred: l.starred,
                }),
            }
        }
        TraceWord::new(atoms)
    }

    /// Free-product moment of an alternating product `x_1 ⋯ x_m` via
    /// `φ(x_1 ⋯ x_m) = −Σ_{S ⊊ [m]} Π_{i∉S} (−φ(x_i)) · φ(Π_{i∈S} x_i)`,
    /// which follows from `φ((x_1 − φ(x_1)) ⋯ (x_m − φ(x_m))) = 0`.
    fn free_moment(
        &self,
        node: usize,
        letters: &[Letter],
        component_of: &HashMap<usize, usize>,
        components: &[usize],
    ) -> Result<S, StateError> {
        let mut blocks: Vec<(usize, &[Letter])> = Vec::new();
        let mut start = 0;
        while start < letters.len() {
            let comp = component_of[&letters[start].gen];
            let mut end = start + 1;
            while end < letters.len() && component_of[&letters[end].gen] == comp {
                end += 1;
            }
            blocks.push((comp, &letters[start..end]));
            start = end;
        }
        if blocks.len() == 1 {
            return self.eval_node(components[blocks[0].0], blocks[0].1);
        }
        let centered: Vec<S> = blocks
            .iter()
            .map(|(comp, block)| self.eval_node(components[*comp], block).map(|v| -v))
            .collect::<Result<_, _>>()?;

        let m = blocks.len();
        let mut total = S::zero();
        for mask in 0u64..(1u64 << m) - 1 {
            let mut coeff = S::one();
            for (i, c) in centered.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    coeff = coeff * c.clone();
                }
            }
            if coeff.is_zero() {
                continue;
            }
            let kept = self.algebra.reduce(
                blocks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .flat_map(|(_, (_, block))| block.iter().copied()),
            );
            total = total + coeff * self.eval_node(node, kept.letters())?;
        }
        Ok(-total)
    }

    /// Monte Carlo estimate of `φ(w)` by sampling the matrix model directly:
    /// tensor factors become Kronecker products, combinations pick a term at
    /// random with probability equal to its weight.
    pub fn monte_carlo(&self, word: &Word, samples: usize, seed: u64) -> Result<McEstimate, StateError> {
        self.monte_carlo_polynomial(&NcPolynomial::monomial(word.clone(), S::one()), samples, seed)
    }

    /// Monte Carlo estimate of `Re φ(p)`, sampling one model per draw and
    /// evaluating every term of `p` on it.
    pub fn monte_carlo_polynomial(&self, p: &NcPolynomial<S>, samples: usize, seed: u64) -> Result<McEstimate, StateError> {
        if samples < 2 {
            return Err(HaarError::TooFewSamples(samples).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stats = RunningMean::default();
        let gens: Vec<usize> = (0..self.algebra.len()).collect();
        for _ in 0..samples {
            let (size, mats) = self.sample_model(ROOT, &gens, &mut rng)?;
            let mut value = 0.0;
            for (word, c) in p.terms() {
                let mut acc = DMatrix::<Complex64>::identity(size, size);
                for l in word.letters() {
                    let m = &mats[&l.gen];
                    acc = if l.starred { acc * m.adjoint() } else { acc * m };
                }
                value += Scalar::to_f64(c) * acc.trace().re / size as f64;
            }
            stats.push(value);
        }
        Ok(stats.finish())
    }

    fn sample_model(
        &self,
        node: usize,
        gens: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, HashMap<usize, DMatrix<Complex64>>), StateError> {
        match &self.nodes[node] {
            Node::Canonical => Err(StateError::NoSampler("canonical-trace")),
            Node::Free { .. } => Err(StateError::NoSampler("free-product")),
            Node::Haar { kind, size, .. } => {
                let mut mats = HashMap::new();
                let signature = SignatureMatrix::balanced(size / 2).to_matrix();
                for &g in gens {
                    let u = sample_haar_unitary(*size, rng);
                    let m = match kind {
                        GeneratorKind::HermitianUnitary => &u * &signature * u.adjoint(),
                        _ => u,
                    };
                    mats.insert(g, m);
                }
                Ok((*size, mats))
            }
            Node::Combination(children) => {
                let mut pick = rng.random::<f64>();
                let mut chosen = children.last().map(|c| c.2).unwrap_or(ROOT);
                for (_, w, child) in children {
                    let w = Scalar::to_f64(w);
                    if pick < w {
                        chosen = *child;
                        break;
                    }
                    pick -= w;
                }
                self.sample_model(chosen, gens, rng)
            }
            Node::Tensor(children) => {
                let mut parts = Vec::new();
                for (&tag, &child) in children {
                    let sub: Vec<usize> = gens.iter().copied().filter(|&g| self.algebra.factor(g) == tag).collect();
                    parts.push((sub.clone(), self.sample_model(child, &sub, rng)?));
                }
                let total: usize = parts.iter().map(|(_, (size, _))| *size).product();
                let mut mats = HashMap::new();
                let mut before = 1;
                for (sub, (size, local)) in &parts {
                    let after = total / (before * size);
                    let left = DMatrix::<Complex64>::identity(before, before);
                    let right = DMatrix::<Complex64>::identity(after, after);
                    for g in sub {
                        mats.insert(*g, left.kronecker(&local[g]).kronecker(&right));
                    }
                    before *= size;
                }
                Ok((total, mats))
            }
        }
    }
}

/// One-shot evaluation with a private engine.
pub fn evaluate_state(spec: &StateSpec, word: &Word, algebra: &AlgebraSpec) -> Result<Rational, StateError> {
    let evaluator = StateEvaluator::new(algebra, spec, Arc::new(HaarEngine::new()))?;
    evaluator.evaluate(word)
}
