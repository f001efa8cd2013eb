//! Problem files: a JSON document naming the generators, the objective, the
//! state family and the orders to run. See `docs/problem-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ncupper::states::{make_increasing, StateSpec};
use ncupper::{parse_rational, AlgebraSpec, ExactPolynomial, GeneratorKind, GeneratorSpec, Rational};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub generators: Vec<GeneratorDecl>,
    pub objective: Vec<TermDecl>,
    /// Affine change of units applied to the objective: `scale · f + offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    pub state: StateDecl,
    pub orders: Vec<usize>,
    #[serde(default)]
    pub hierarchy: Selector,
    /// Generators spanning the λ basis; all generators when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<String>>,
    /// Known minimal eigenvalue of the (normalized) objective, for display.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_minimum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDecl {
    pub id: String,
    pub kind: KindDecl,
    #[serde(default)]
    pub factor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindDecl {
    General,
    Unitary,
    HermitianUnitary,
}

impl From<KindDecl> for GeneratorKind {
    fn from(kind: KindDecl) -> Self {
        match kind {
            KindDecl::General => GeneratorKind::General,
            KindDecl::Unitary => GeneratorKind::Unitary,
            KindDecl::HermitianUnitary => GeneratorKind::HermitianUnitary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDecl {
    pub coefficient: String,
    pub word: Vec<LetterDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LetterDecl {
    pub gen: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub star: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub scale: String,
    pub offset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Lambda,
    Eta,
    #[default]
    Both,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Lambda => "lambda",
            Selector::Eta => "eta",
            Selector::Both => "both",
        }
    }
}

/// State family declaration. Haar kinds declared over several tensor factors
/// are applied per factor and tensored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateDecl {
    CanonicalTrace,
    /// Order `d` uses the Haar trace of dimension `dims[d-1]` (default `d`).
    Haar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dims: Option<Vec<usize>>,
    },
    /// Order `d` uses the `d`-th increasing combination of Haar traces of the
    /// listed dimensions (default `1..=d`).
    HaarIncreasing {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dims: Option<Vec<usize>>,
    },
    Combination {
        terms: Vec<WeightedDecl>,
    },
    Tensor {
        factors: Vec<FactorDecl>,
    },
    FreeProduct {
        components: Vec<ComponentDecl>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedDecl {
    pub weight: String,
    pub state: StateDecl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDecl {
    pub factor: usize,
    pub state: StateDecl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDecl {
    pub generators: Vec<String>,
    pub state: StateDecl,
}

impl StateDecl {
    /// Replaces the dimension list of every Haar declaration.
    pub fn with_dims(&self, dims: &[usize]) -> StateDecl {
        match self {
            StateDecl::CanonicalTrace => StateDecl::CanonicalTrace,
            StateDecl::Haar { .. } => StateDecl::Haar {
                dims: Some(dims.to_vec()),
            },
            StateDecl::HaarIncreasing { .. } => StateDecl::HaarIncreasing {
                dims: Some(dims.to_vec()),
            },
            StateDecl::Combination { terms } => StateDecl::Combination {
                terms: terms
                    .iter()
                    .map(|t| WeightedDecl {
                        weight: t.weight.clone(),
                        state: t.state.with_dims(dims),
                    })
                    .collect(),
            },
            StateDecl::Tensor { factors } => StateDecl::Tensor {
                factors: factors
                    .iter()
                    .map(|f| FactorDecl {
                        factor: f.factor,
                        state: f.state.with_dims(dims),
                    })
                    .collect(),
            },
            StateDecl::FreeProduct { components } => StateDecl::FreeProduct {
                components: components
                    .iter()
                    .map(|c| ComponentDecl {
                        generators: c.generators.clone(),
                        state: c.state.with_dims(dims),
                    })
                    .collect(),
            },
        }
    }

    /// Largest order the declaration supports, if bounded by a dims list.
    pub fn max_order(&self) -> Option<usize> {
        match self {
            StateDecl::CanonicalTrace => None,
            StateDecl::Haar { dims } | StateDecl::HaarIncreasing { dims } => dims.as_ref().map(|d| d.len()),
            StateDecl::Combination { terms } => terms.iter().filter_map(|t| t.state.max_order()).min(),
            StateDecl::Tensor { factors } => factors.iter().filter_map(|f| f.state.max_order()).min(),
            StateDecl::FreeProduct { components } => components.iter().filter_map(|c| c.state.max_order()).min(),
        }
    }

    pub fn describe(&self) -> String {
        let list = |dims: &Option<Vec<usize>>| match dims {
            Some(d) => format!("{d:?}"),
            None => "[1..d]".to_string(),
        };
        match self {
            StateDecl::CanonicalTrace => "canonical-trace".into(),
            StateDecl::Haar { dims } => format!("haar dims {}", list(dims)),
            StateDecl::HaarIncreasing { dims } => format!("haar-increasing dims {}", list(dims)),
            StateDecl::Combination { terms } => {
                let parts: Vec<String> = terms.iter().map(|t| format!("{}·{}", t.weight, t.state.describe())).collect();
                format!("combination [{}]", parts.join(", "))
            }
            StateDecl::Tensor { factors } => {
                let parts: Vec<String> = factors.iter().map(|f| format!("{}: {}", f.factor, f.state.describe())).collect();
                format!("tensor [{}]", parts.join(", "))
            }
            StateDecl::FreeProduct { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| format!("{{{}}}: {}", c.generators.join(","), c.state.describe()))
                    .collect();
                format!("free-product [{}]", parts.join(", "))
            }
        }
    }
}

/// Which generators a state declaration acts on.
#[derive(Debug, Clone, Copy)]
enum Scope {
    Whole,
    Local,
}

/// A validated problem: the file plus its compiled algebra and objective.
#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub algebra: AlgebraSpec,
    /// Objective after normalization.
    pub objective: ExactPolynomial,
    pub basis_subset: Vec<usize>,
}

impl Problem {
    pub fn from_file(file: ProblemFile) -> Result<Problem, CliError> {
        if file.version != SCHEMA_VERSION {
            return Err(CliError::input(format!(
                "unsupported problem version {} (expected {SCHEMA_VERSION})",
                file.version
            )));
        }
        let algebra = AlgebraSpec::new(
            file.generators
                .iter()
                .map(|g| GeneratorSpec::new(g.id.clone(), g.kind.into(), g.factor))
                .collect(),
        )?;
        let mut raw = ExactPolynomial::zero();
        for (k, term) in file.objective.iter().enumerate() {
            let coefficient = rational(&term.coefficient, &format!("objective term {}", k + 1))?;
            let letters = term
                .word
                .iter()
                .map(|l| algebra.letter(&l.gen, l.star))
                .collect::<Result<Vec<_>, _>>()?;
            raw.add_term(algebra.reduce(letters), coefficient);
        }
        if !raw.is_self_adjoint(&algebra) {
            return Err(CliError::input("objective must satisfy f = f*"));
        }
        let objective = match &file.normalization {
            Some(n) => {
                let scale = rational(&n.scale, "normalization scale")?;
                let offset = rational(&n.offset, "normalization offset")?;
                raw.scale(&scale).add(&ExactPolynomial::constant(offset))
            }
            None => raw,
        };
        let basis_subset = match &file.basis {
            Some(ids) => ids.iter().map(|id| algebra.position(id)).collect::<Result<Vec<_>, _>>()?,
            None => algebra.all_generators(),
        };
        if file.orders.is_empty() || file.orders.contains(&0) {
            return Err(CliError::input("orders must be a non-empty list of positive integers"));
        }
        let problem = Problem {
            file,
            algebra,
            objective,
            basis_subset,
        };
        for &order in &problem.file.orders {
            problem.state_for(order, None)?;
        }
        Ok(problem)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    /// The state declaration, with `dims` replacing every Haar dimension list.
    pub fn state_decl(&self, dims: Option<&[usize]>) -> StateDecl {
        match dims {
            Some(d) => self.file.state.with_dims(d),
            None => self.file.state.clone(),
        }
    }

    /// State paired with `order`.
    pub fn state_for(&self, order: usize, dims: Option<&[usize]>) -> Result<StateSpec, CliError> {
        let decl = self.state_decl(dims);
        let all: BTreeSet<usize> = self.algebra.all_generators().into_iter().collect();
        resolve(&decl, &self.algebra, order, Scope::Whole, &all)
    }
}

fn rational(text: &str, what: &str) -> Result<Rational, CliError> {
    parse_rational(text).ok_or_else(|| CliError::input(format!("{what}: `{text}` is not a rational of the form \"p/q\"")))
}

fn haar_dims(dims: &Option<Vec<usize>>, order: usize, kind: &str) -> Result<Vec<usize>, CliError> {
    let dims = match dims {
        Some(d) => d.clone(),
        None => (1..=order).collect(),
    };
    if dims.len() < order {
        return Err(CliError::input(format!(
            "{kind} state lists {} dimension(s) but order {order} was requested",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(CliError::input(format!("{kind} state dimensions must be positive")));
    }
    Ok(dims)
}

fn resolve(
    decl: &StateDecl,
    algebra: &AlgebraSpec,
    order: usize,
    scope: Scope,
    gens: &BTreeSet<usize>,
) -> Result<StateSpec, CliError> {
    let factors: BTreeSet<usize> = gens.iter().map(|&g| algebra.factor(g)).collect();
    let spread = |local: StateSpec| -> StateSpec {
        match scope {
            Scope::Whole if factors.len() > 1 => {
                StateSpec::TensorProduct(factors.iter().map(|&f| (f, local.clone())).collect())
            }
            _ => local,
        }
    };
    Ok(match decl {
        StateDecl::CanonicalTrace => StateSpec::CanonicalTrace,
        StateDecl::Haar { dims } => {
            let dims = haar_dims(dims, order, "haar")?;
            spread(StateSpec::haar(dims[order - 1]))
        }
        StateDecl::HaarIncreasing { dims } => {
            let dims = haar_dims(dims, order, "haar-increasing")?;
            let base: Vec<StateSpec> = dims[..order].iter().map(|&d| StateSpec::haar(d)).collect();
            let family = make_increasing(&base)?;
            spread(family[order - 1].clone())
        }
        StateDecl::Combination { terms } => {
            let mut parts = Vec::new();
            for (k, t) in terms.iter().enumerate() {
                let w = rational(&t.weight, &format!("combination weight {}", k + 1))?;
                parts.push((w, resolve(&t.state, algebra, order, scope, gens)?));
            }
            StateSpec::Combination(parts)
        }
        StateDecl::Tensor { factors: decls } => {
            let mut map = BTreeMap::new();
            for fd in decls {
                let sub: BTreeSet<usize> = gens.iter().copied().filter(|&g| algebra.factor(g) == fd.factor).collect();
                if map.insert(fd.factor, resolve(&fd.state, algebra, order, Scope::Local, &sub)?).is_some() {
                    return Err(CliError::input(format!("tensor factor {} is declared twice", fd.factor)));
                }
            }
            StateSpec::TensorProduct(map)
        }
        StateDecl::FreeProduct { components } => {
            let mut parts = Vec::new();
            for c in components {
                let positions = c
                    .generators
                    .iter()
                    .map(|id| algebra.position(id))
                    .collect::<Result<Vec<_>, _>>()?;
                let sub: BTreeSet<usize> = positions.iter().copied().collect();
                parts.push((positions, resolve(&c.state, algebra, order, Scope::Local, &sub)?));
            }
            StateSpec::FreeProduct(parts)
        }
    })
}

/// Parses and validates problem text.
pub fn parse_problem_str(text: &str) -> Result<Problem, CliError> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| CliError::input(format!("malformed problem file: {e}")))?;
    Problem::from_file(file)
}

/// Reads a problem from `path`, falling back to a bundled problem of that name.
pub fn parse_problem(path: impl AsRef<Path>) -> Result<Problem, CliError> {
    let path = path.as_ref();
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        return parse_problem_str(&text).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        });
    }
    let name = path.to_string_lossy();
    match crate::bundled::find(&name) {
        Some(text) => parse_problem_str(text),
        None => Err(CliError::input(format!(
            "no such file `{name}` and no bundled problem of that name (try `ncupper examples`)"
        ))),
    }
}

/// Canonical text of a problem file.
pub fn to_text(file: &ProblemFile) -> String {
    let mut text = serde_json::to_string_pretty(file).expect("problem files serialize");
    text.push('\n');
    text
}
