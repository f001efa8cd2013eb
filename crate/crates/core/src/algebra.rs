//! Free ∗-algebra kernel: typed generators, canonical words, polynomials.
//!
//! Generators come in three kinds. Unitary generators satisfy `u u* = u* u = 1`,
//! hermitian-unitary generators satisfy `b* = b` and `b b = 1`, and general
//! generators carry no relations. Generators with different factor tags commute,
//! so a canonical word lists its letters grouped by non-decreasing factor tag
//! and, inside each factor, is freely reduced.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("generator index {0} is out of range")]
    GeneratorIndex(usize),
    #[error("duplicate generator id `{0}`")]
    DuplicateGenerator(String),
    #[error("factor tags must form a contiguous range starting at 0 (missing {0})")]
    FactorGap(usize),
    #[error("algebra has no generators")]
    Empty,
    #[error("matrix for `{gen}` is {rows}x{cols}, expected {dim}x{dim}")]
    DimensionMismatch {
        gen: String,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("no matrix assigned to generator `{0}`")]
    MissingAssignment(String),
    #[error("cannot parse word token `{0}`")]
    BadToken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeneratorKind {
    General,
    Unitary,
    HermitianUnitary,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::General => "general",
            GeneratorKind::Unitary => "unitary",
            GeneratorKind::HermitianUnitary => "hermitian-unitary",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "general" => Some(GeneratorKind::General),
            "unitary" => Some(GeneratorKind::Unitary),
            "hermitian-unitary" => Some(GeneratorKind::HermitianUnitary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GeneratorSpec {
    pub id: String,
    pub kind: GeneratorKind,
    pub factor: usize,
}

impl GeneratorSpec {
    pub fn new(id: impl Into<String>, kind: GeneratorKind, factor: usize) -> Self {
        GeneratorSpec {
            id: id.into(),
            kind,
            factor,
        }
    }
}

/// A letter refers to a generator by its position in the owning [`AlgebraSpec`].
///
/// The derived ordering (position first, unstarred before starred) is the
/// letter order used for degree-lex sorting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub gen: usize,
    pub starred: bool,
}

impl Letter {
    pub fn new(gen: usize, starred: bool) -> Self {
        Letter { gen, starred }
    }
}

/// A ∗-word. The empty word is the unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn unit() -> Self {
        Word::default()
    }

    /// Wraps raw letters without canonicalizing them.
    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Word { letters }
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_unit(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.letters
            .len()
            .cmp(&other.letters.len())
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlgebraSpec {
    generators: Vec<GeneratorSpec>,
    index: HashMap<String, usize>,
    factors: usize,
}

impl AlgebraSpec {
    pub fn new(generators: Vec<GeneratorSpec>) -> Result<Self, AlgebraError> {
        if generators.is_empty() {
            return Err(AlgebraError::Empty);
        }
        let mut index = HashMap::with_capacity(generators.len());
        for (pos, g) in generators.iter().enumerate() {
            if index.insert(g.id.clone(), pos).is_some() {
                return Err(AlgebraError::DuplicateGenerator(g.id.clone()));
            }
        }
        let factors = generators.iter().map(|g| g.factor).max().unwrap_or(0) + 1;
        for tag in 0..factors {
            if !generators.iter().any(|g| g.factor == tag) {
                return Err(AlgebraError::FactorGap(tag));
            }
        }
        Ok(AlgebraSpec {
            generators,
            index,
            factors,
        })
    }

    pub fn generators(&self) -> &[GeneratorSpec] {
        &self.generators
    }

    pub fn generator(&self, pos: usize) -> &GeneratorSpec {
        &self.generators[pos]
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn factor_count(&self) -> usize {
        self.factors
    }

    pub fn position(&self, id: &str) -> Result<usize, AlgebraError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| AlgebraError::UnknownGenerator(id.to_string()))
    }

    pub fn kind(&self, gen: usize) -> GeneratorKind {
        self.generators[gen].kind
    }

    pub fn factor(&self, gen: usize) -> usize {
        self.generators[gen].factor
    }

    /// Builds a letter by generator id; hermitian-unitary letters drop the star.
    pub fn letter(&self, id: &str, starred: bool) -> Result<Letter, AlgebraError> {
        let gen = self.position(id)?;
        Ok(self.normalize_letter(Letter::new(gen, starred)))
    }

    fn normalize_letter(&self, letter: Letter) -> Letter {
        match self.kind(letter.gen) {
            GeneratorKind::HermitianUnitary => Letter::new(letter.gen, false),
            _ => letter,
        }
    }

    fn cancels(&self, left: Letter, right: Letter) -> bool {
        if left.gen != right.gen {
            return false;
        }
        match self.kind(left.gen) {
            GeneratorKind::General => false,
            GeneratorKind::Unitary => left.starred != right.starred,
            GeneratorKind::HermitianUnitary => true,
        }
    }

    /// Canonical form of a word, validating generator references.
    pub fn canonicalize(&self, word: &Word) -> Result<Word, AlgebraError> {
        if let Some(bad) = word.letters.iter().find(|l| l.gen >= self.generators.len()) {
            return Err(AlgebraError::GeneratorIndex(bad.gen));
        }
        Ok(self.reduce(word.letters.iter().copied()))
    }

    /// Canonical form of a letter sequence whose generator indices are known valid.
    pub fn reduce(&self, letters: impl IntoIterator<Item = Letter>) -> Word {
        let mut per_factor: Vec<Vec<Letter>> = vec![Vec::new(); self.factors];
        for letter in letters {
            let letter = self.normalize_letter(letter);
            let stack = &mut per_factor[self.factor(letter.gen)];
            match stack.last() {
                Some(&top) if self.cancels(top, letter) => {
                    stack.pop();
                }
                _ => stack.push(letter),
            }
        }
        Word {
            letters: per_factor.into_iter().flatten().collect(),
        }
    }

    pub fn multiply_words(&self, left: &Word, right: &Word) -> Word {
        self.reduce(left.letters.iter().chain(right.letters.iter()).copied())
    }

    pub fn star_word(&self, word: &Word) -> Word {
        self.reduce(
            word.letters
                .iter()
                .rev()
                .map(|l| Letter::new(l.gen, !l.starred)),
        )
    }

    /// Splits a canonical word into its per-factor subwords (indexed by factor tag).
    pub fn factor_blocks<'w>(&self, word: &'w Word) -> Vec<(usize, &'w [Letter])> {
        let mut blocks = Vec::new();
        let mut start = 0;
        let letters = &word.letters;
        while start < letters.len() {
            let tag = self.factor(letters[start].gen);
            let mut end = start + 1;
            while end < letters.len() && self.factor(letters[end].gen) == tag {
                end += 1;
            }
            blocks.push((tag, &letters[start..end]));
            start = end;
        }
        blocks
    }

    /// All canonical ∗-words of length at most `order` over `subset`, degree-lex sorted.
    pub fn words_up_to(&self, subset: &[usize], order: usize) -> Vec<Word> {
        let mut alphabet: Vec<Letter> = Vec::new();
        for &gen in subset {
            alphabet.push(Letter::new(gen, false));
            if self.kind(gen) != GeneratorKind::HermitianUnitary {
                alphabet.push(Letter::new(gen, true));
            }
        }
        alphabet.sort();
        alphabet.dedup();

        let mut all = vec![Word::unit()];
        let mut frontier = vec![Word::unit()];
        for length in 1..=order {
            let mut next = std::collections::BTreeSet::new();
            for word in &frontier {
                for &letter in &alphabet {
                    let extended = self.reduce(word.letters.iter().copied().chain([letter]));
                    if extended.len() == length {
                        next.insert(extended);
                    }
                }
            }
            frontier = next.into_iter().collect();
            all.extend(frontier.iter().cloned());
        }
        all
    }

    pub fn all_generators(&self) -> Vec<usize> {
        (0..self.generators.len()).collect()
    }

    /// Parses whitespace-separated tokens like `b1 u2* c1`; `1` is the unit.
    pub fn parse_word(&self, text: &str) -> Result<Word, AlgebraError> {
        let mut letters = Vec::new();
        for token in text.split_whitespace() {
            if token == "1" {
                continue;
            }
            let (id, starred) = match token.strip_suffix('*') {
                Some(id) => (id, true),
                None => (token, false),
            };
            if id.is_empty() {
                return Err(AlgebraError::BadToken(token.to_string()));
            }
            letters.push(self.letter(id, starred)?);
        }
        Ok(self.reduce(letters))
    }

    pub fn display_word(&self, word: &Word) -> String {
        if word.is_unit() {
            return "1".to_string();
        }
        word.letters
            .iter()
            .map(|l| {
                let id = &self.generators[l.gen].id;
                if l.starred {
                    format!("{id}*")
                } else {
                    id.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Matrix value of `p` under the assignment `generator id -> matrix`.
    pub fn evaluate<S: Scalar>(
        &self,
        p: &NcPolynomial<S>,
        assignment: &HashMap<String, DMatrix<Complex64>>,
    ) -> Result<DMatrix<Complex64>, AlgebraError> {
        let dim = assignment.values().next().map(|m| m.nrows()).unwrap_or(1);
        for (id, m) in assignment {
            let gen = self.position(id)?;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(AlgebraError::DimensionMismatch {
                    gen: id.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                });
            }
            let identity = DMatrix::<Complex64>::identity(dim, dim);
            let violation = match self.kind(gen) {
                GeneratorKind::General => 0.0,
                GeneratorKind::Unitary => (m * m.adjoint() - &identity).norm(),
                GeneratorKind::HermitianUnitary => {
                    (m - m.adjoint()).norm().max((m * m - &identity).norm())
                }
            };
            if violation > 1e-8 {
                log::warn!("matrix for `{id}` violates its relations by {violation:.3e}");
            }
        }

        let mut total = DMatrix::<Complex64>::zeros(dim, dim);
        for (word, coeff) in p.terms() {
            let mut acc = DMatrix::<Complex64>::identity(dim, dim);
            for letter in word.letters() {
                let id = &self.generators[letter.gen].id;
                let m = assignment
                    .get(id)
                    .ok_or_else(|| AlgebraError::MissingAssignment(id.clone()))?;
                acc = if letter.starred {
                    acc * m.adjoint()
                } else {
                    acc * m
                };
            }
            total += acc * Complex64::new(coeff.to_f64(), 0.0);
        }
        Ok(total)
    }
}

/// Finite sum of canonical words with nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NcPolynomial<S> {
    terms: BTreeMap<Word, S>,
}

impl<S: Scalar> Default for NcPolynomial<S> {
    fn default() -> Self {
        NcPolynomial {
            terms: BTreeMap::new(),
        }
    }
}

impl<S: Scalar> NcPolynomial<S> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(Word::unit(), S::one())
    }

    /// Caller guarantees `word` is canonical.
    pub fn monomial(word: Word, coeff: S) -> Self {
        let mut p = Self::zero();
        p.add_term(word, coeff);
        p
    }

    pub fn constant(value: S) -> Self {
        Self::monomial(Word::unit(), value)
    }

    /// Adds `coeff · word`; `word` must already be canonical.
    pub fn add_term(&mut self, word: Word, coeff: S) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(word) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let sum = slot.get().clone() + coeff;
                if sum.is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &S)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, word: &Word) -> S {
        self.terms.get(word).cloned().unwrap_or_else(S::zero)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-S::one()))
    }

    pub fn scale(&self, factor: &S) -> Self {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            out.add_term(w.clone(), c.clone() * factor.clone());
        }
        out
    }

    /// Exact product with every word reduced to canonical form.
    pub fn multiply(&self, other: &Self, algebra: &AlgebraSpec) -> Self {
        let mut out = Self::zero();
        for (wl, cl) in &self.terms {
            for (wr, cr) in &other.terms {
                out.add_term(algebra.multiply_words(wl, wr), cl.clone() * cr.clone());
            }
        }
        out
    }

    /// Involution: reverses and stars every word. Coefficients are real.
    pub fn star(&self, algebra: &AlgebraSpec) -> Self {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            out.add_term(algebra.star_word(w), c.clone());
        }
        out
    }

    pub fn is_self_adjoint(&self, algebra: &AlgebraSpec) -> bool {
        self.star(algebra) == *self
    }

    pub fn display<'a>(&'a self, algebra: &'a AlgebraSpec) -> DisplayPolynomial<'a, S> {
        DisplayPolynomial { poly: self, algebra }
    }

    pub fn map_coefficients<T: Scalar>(&self, f: impl Fn(&S) -> T) -> NcPolynomial<T> {
        let mut out = NcPolynomial::zero();
        for (w, c) in &self.terms {
            out.add_term(w.clone(), f(c));
        }
        out
    }
}

pub struct DisplayPolynomial<'a, S> {
    pub poly: &'a NcPolynomial<S>,
    pub algebra: &'a AlgebraSpec,
}

impl<S: Scalar + fmt::Display> fmt::Display for DisplayPolynomial<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        for (k, (w, c)) in self.poly.terms().enumerate() {
            let negative = c.to_f64() < 0.0;
            let magnitude = if negative { -c.clone() } else { c.clone() };
            match (k, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if w.is_unit() {
                write!(f, "{magnitude}")?;
            } else if magnitude.is_one() {
                write!(f, "{}", self.algebra.display_word(w))?;
            } else {
                write!(f, "{magnitude} {}", self.algebra.display_word(w))?;
            }
        }
        Ok(())
    }
}
