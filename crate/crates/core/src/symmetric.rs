//! Integer partitions, permutations, symmetric-group characters and the
//! unitary Weingarten function.
//!
//! Characters use the Murnaghan–Nakayama rule on beta-sets: removing a border
//! strip of length `r` moves one bead of the beta-set down by `r`, with sign
//! `(-1)^(beads jumped over)`.
//!
//! The Weingarten function is
//!
//! ```text
//! Wg(μ, d) = (1/n!) Σ_{λ ⊢ n, ℓ(λ) ≤ d} χ^λ(1^n) χ^λ(μ) / Π_{(i,j)∈λ} (d + j − i)
//! ```
//!
//! Restricting to `ℓ(λ) ≤ d` gives the pseudo-inverse of the Gram matrix
//! `[d^{#cycles(σ⁻¹τ)}]`, which is the correct integration weight for every
//! `d`, including `d < n`.

use std::collections::HashMap;
use std::fmt;

use parking_lot::RwLock;

use crate::scalar::Scalar;

/// Weakly decreasing list of positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    parts: Vec<usize>,
}

impl Partition {
    /// Sorts the parts and drops zeros.
    pub fn new(mut parts: Vec<usize>) -> Self {
        parts.retain(|&p| p > 0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition { parts }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn size(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn single_row(n: usize) -> Self {
        Partition::new(vec![n])
    }

    pub fn single_column(n: usize) -> Self {
        Partition::new(vec![1; n])
    }

    /// Centralizer order `z_μ = Π_i i^{m_i} m_i!`.
    pub fn centralizer_order(&self) -> u128 {
        let mut z: u128 = 1;
        let mut i = 0;
        while i < self.parts.len() {
            let part = self.parts[i];
            let mut mult = 0u128;
            while i < self.parts.len() && self.parts[i] == part {
                mult += 1;
                i += 1;
                z *= part as u128 * mult;
            }
        }
        z
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All partitions of `n` in reverse-lexicographic order.
pub fn partitions(n: usize) -> Vec<Partition> {
    fn extend(remaining: usize, max_part: usize, prefix: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if remaining == 0 {
            out.push(Partition {
                parts: prefix.clone(),
            });
            return;
        }
        for part in (1..=remaining.min(max_part)).rev() {
            prefix.push(part);
            extend(remaining - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(n, n, &mut Vec::new(), &mut out);
    out
}

/// Permutation of `{0, …, n-1}` stored as its image list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (0..n).collect(),
        }
    }

    pub fn from_images(images: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            if i >= images.len() || seen[i] {
                return None;
            }
            seen[i] = true;
        }
        Some(Permutation { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        Permutation { images }
    }

    pub fn cycle_type(&self) -> Partition {
        let mut seen = vec![false; self.images.len()];
        let mut lengths = Vec::new();
        for start in 0..self.images.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.images[i];
                len += 1;
            }
            lengths.push(len);
        }
        Partition::new(lengths)
    }

    pub fn cycle_count(&self) -> usize {
        self.cycle_type().len()
    }

    pub fn sign(&self) -> i32 {
        if (self.images.len() - self.cycle_count()).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    /// All `n!` permutations in lexicographic order of image lists.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut current: Vec<usize> = (0..n).collect();
        let mut out = vec![Permutation {
            images: current.clone(),
        }];
        loop {
            let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
                return out;
            };
            let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
            current.swap(i - 1, j);
            current[i..].reverse();
            out.push(Permutation {
                images: current.clone(),
            });
        }
    }
}

pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("character arguments have different sizes: |λ| = {0}, |μ| = {1}")]
pub struct SizeMismatch(pub usize, pub usize);

/// Irreducible character `χ^λ` evaluated on the class of cycle type `μ`.
pub fn character(lambda: &Partition, mu: &Partition) -> Result<i128, SizeMismatch> {
    if lambda.size() != mu.size() {
        return Err(SizeMismatch(lambda.size(), mu.size()));
    }
    let len = lambda.len();
    let beta: Vec<usize> = lambda
        .parts
        .iter()
        .enumerate()
        .map(|(i, &p)| p + len - 1 - i)
        .collect();
    let mut memo = HashMap::new();
    Ok(mn_recursion(beta, &mu.parts, &mut memo))
}

fn mn_recursion(beta: Vec<usize>, strips: &[usize], memo: &mut HashMap<(Vec<usize>, usize), i128>) -> i128 {
    let Some((&r, rest)) = strips.split_first() else {
        return 1;
    };
    if let Some(&v) = memo.get(&(beta.clone(), strips.len())) {
        return v;
    }
    let mut total = 0i128;
    for (idx, &b) in beta.iter().enumerate() {
        if b < r {
            continue;
        }
        let target = b - r;
        if beta.contains(&target) {
            continue;
        }
        let jumped = beta.iter().filter(|&&x| x > target && x < b).count();
        let mut next = beta.clone();
        next[idx] = target;
        next.sort_unstable_by(|a, b| b.cmp(a));
        let value = mn_recursion(next, rest, memo);
        if jumped % 2 == 0 {
            total += value;
        } else {
            total -= value;
        }
    }
    memo.insert((beta, strips.len()), total);
    total
}

/// `Π_{(i,j)∈λ} (d + j − i)`; zero whenever `λ` has more than `d` rows.
pub fn content_product(lambda: &Partition, d: usize) -> i128 {
    let mut product: i128 = 1;
    for (i, &row) in lambda.parts.iter().enumerate() {
        for j in 0..row {
            product *= d as i128 + j as i128 - i as i128;
        }
    }
    product
}

/// Exact Weingarten value `Wg(μ, d)` for the cycle type `μ`.
pub fn weingarten<S: Scalar>(mu: &Partition, d: usize) -> S {
    let n = mu.size();
    let mut total = S::zero();
    for lambda in partitions(n) {
        if lambda.len() > d {
            continue;
        }
        let dim = character(&lambda, &Partition::single_column(n)).expect("same size");
        let chi = character(&lambda, mu).expect("same size");
        let numer = dim * chi;
        if numer != 0 {
            total = total + S::ratio(numer, content_product(&lambda, d));
        }
    }
    total / S::from_i128(factorial(n) as i128)
}

/// Memoized Weingarten values keyed by `(cycle type, d)`.
#[derive(Debug, Default)]
pub struct WeingartenTable<S> {
    cache: RwLock<HashMap<(Partition, usize), S>>,
}

impl<S: Scalar> WeingartenTable<S> {
    pub fn new() -> Self {
        WeingartenTable {
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn value(&self, mu: &Partition, d: usize) -> S {
        let key = (mu.clone(), d);
        if let Some(v) = self.cache.read().get(&key) {
            return v.clone();
        }
        let v = weingarten::<S>(mu, d);
        self.cache.write().entry(key).or_insert(v).clone()
    }

    /// `[Wg(σ τ⁻¹, d)]_{σ,τ ∈ S_k}` indexed like [`Permutation::all`].
    pub fn matrix(&self, k: usize, d: usize) -> Vec<Vec<S>> {
        let perms = Permutation::all(k);
        perms
            .iter()
            .map(|s| {
                perms
                    .iter()
                    .map(|t| self.value(&s.compose(&t.inverse()).cycle_type(), d))
                    .collect()
            })
            .collect()
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().len()
    }
}
