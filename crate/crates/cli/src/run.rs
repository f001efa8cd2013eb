//! Subcommand implementations, independent of argument parsing.

use std::sync::Arc;
use std::time::Instant;

use ncupper::haar::DEFAULT_TERM_BUDGET;
use ncupper::hierarchy::{
    run_hierarchy, BoundRecord, HierarchyOptions, Which, DEFAULT_SUPPORT_CAP, DEFAULT_TOLERANCE,
};
use ncupper::states::{StateEvaluator, StateSpec};
use ncupper::symmetric::partitions;
use ncupper::{format_rational, AlgebraSpec, ExactHaarEngine, ExactPolynomial, Rational, Scalar, WeingartenTable};

use crate::error::CliError;
use crate::problem::{to_text, Problem, Selector};
use crate::record::{
    pencil_digest, rational_matrix, sha256_hex, sig6, BoundResult, McResult, OrderResult, OrderTiming, ResultRecord,
    Settings, Timings, RECORD_FORMAT, RECORD_VERSION,
};

/// Agreement threshold for Monte Carlo checks, in standard errors.
pub const MC_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Run orders `1..=n` instead of the problem's list.
    pub max_order: Option<usize>,
    pub hierarchy: Option<Selector>,
    pub dims: Option<Vec<usize>>,
    pub state_index: Option<usize>,
    pub tol: f64,
    pub budget: u64,
    pub support_cap: usize,
    /// Monte Carlo samples for validating `ψ_d(f)` and `ψ_d(f²)`; 0 disables.
    pub samples: usize,
    pub seed: u64,
    pub timings: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_order: None,
            hierarchy: None,
            dims: None,
            state_index: None,
            tol: DEFAULT_TOLERANCE,
            budget: DEFAULT_TERM_BUDGET as u64,
            support_cap: DEFAULT_SUPPORT_CAP,
            samples: 0,
            seed: 0,
            timings: false,
        }
    }
}

fn engine(budget: u64) -> Arc<ExactHaarEngine> {
    Arc::new(ExactHaarEngine::with_budget(budget as u128))
}

fn bound_result(record: &BoundRecord<Rational>) -> BoundResult {
    let a = rational_matrix(&record.inputs.a);
    let b = rational_matrix(&record.inputs.b);
    BoundResult {
        value: record.pencil.lambda,
        display: sig6(record.pencil.lambda),
        dimension: record.pencil.dimension,
        rank_b: record.pencil.rank_b,
        kernel_residual: record.pencil.kernel_residual,
        inputs_digest: pencil_digest(&a, &b),
        a,
        b,
    }
}

pub fn run_solve(problem: &Problem, options: &SolveOptions) -> Result<ResultRecord, CliError> {
    let start = Instant::now();
    let orders: Vec<usize> = match options.max_order {
        Some(0) => return Err(CliError::input("--order must be positive")),
        Some(n) => (1..=n).collect(),
        None => problem.file.orders.clone(),
    };
    let selector = options.hierarchy.unwrap_or(problem.file.hierarchy);
    let which = match selector {
        Selector::Lambda => Which::Lambda,
        Selector::Eta => Which::Eta,
        Selector::Both => Which::Both,
    };
    let dims = options.dims.as_deref();
    // Resolve every state up front so that declaration errors surface before any work.
    for &order in &orders {
        problem.state_for(options.state_index.unwrap_or(order), dims)?;
    }
    let settings = Settings {
        hierarchy: selector.as_str().to_string(),
        orders: orders.clone(),
        dims: options.dims.clone(),
        state_index: options.state_index,
        tol: options.tol,
        budget: options.budget,
        support_cap: options.support_cap,
        samples: options.samples,
        seed: options.seed,
    };
    let input_hash = sha256_hex(
        format!(
            "{}\n{}",
            to_text(&problem.file),
            serde_json::to_string(&settings).expect("settings serialize")
        )
        .as_bytes(),
    );

    let engine = engine(options.budget);
    let family = |d: usize| problem.state_for(d, dims).expect("states validated above");
    let hierarchy_options = HierarchyOptions {
        tol: options.tol,
        support_cap: options.support_cap,
        state_index: options.state_index,
    };
    let report = run_hierarchy(
        &problem.objective,
        &problem.algebra,
        &problem.basis_subset,
        &family,
        &orders,
        which,
        engine.clone(),
        &hierarchy_options,
    )?;

    let rows: Vec<OrderResult> = report
        .rows
        .iter()
        .map(|r| OrderResult {
            order: r.order,
            basis_size: r.basis_size,
            state: r.state.clone(),
            lambda: r.lambda.as_ref().map(bound_result),
            eta: r.eta.as_ref().map(bound_result),
        })
        .collect();

    let mut monte_carlo = Vec::new();
    if options.samples > 0 {
        for &order in &orders {
            let spec = family(options.state_index.unwrap_or(order));
            monte_carlo.extend(validate_state(problem, &spec, order, options, engine.clone())?);
        }
    }

    let timings = options.timings.then(|| Timings {
        total_ms: start.elapsed().as_secs_f64() * 1e3,
        orders: report
            .rows
            .iter()
            .map(|r| OrderTiming {
                order: r.order,
                lambda_ms: r.lambda.as_ref().map(|b| b.elapsed.as_secs_f64() * 1e3),
                eta_ms: r.eta.as_ref().map(|b| b.elapsed.as_secs_f64() * 1e3),
            })
            .collect(),
    });

    Ok(ResultRecord {
        format: RECORD_FORMAT.to_string(),
        format_version: RECORD_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        input_hash,
        problem: problem.name().to_string(),
        objective: problem.objective.display(&problem.algebra).to_string(),
        state_family: problem.state_decl(dims).describe(),
        settings,
        orders: rows,
        monotone: report.is_monotone(1e-8),
        known_minimum: problem.file.known_minimum,
        monte_carlo,
        timings,
    })
}

/// Compares `ψ(f)` and `ψ(f²)` against Monte Carlo draws from the state's
/// matrix model. States without a sampler are skipped.
fn validate_state(
    problem: &Problem,
    spec: &StateSpec,
    order: usize,
    options: &SolveOptions,
    engine: Arc<ExactHaarEngine>,
) -> Result<Vec<McResult>, CliError> {
    let state = StateEvaluator::new(&problem.algebra, spec, engine)?;
    let f = &problem.objective;
    let square = f.multiply(f, &problem.algebra);
    let mut out = Vec::new();
    for (power, poly) in [(1usize, f), (2, &square)] {
        let seed = options.seed.wrapping_add((order * 2 + power) as u64);
        let estimate = match state.monte_carlo_polynomial(poly, options.samples, seed) {
            Ok(e) => e,
            Err(ncupper::states::StateError::NoSampler(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let exact = evaluate_polynomial(&state, poly)?;
        let exact_decimal = Scalar::to_f64(&exact);
        out.push(McResult {
            order,
            power,
            exact: format_rational(&exact),
            exact_decimal,
            estimate: estimate.estimate,
            stderr: estimate.stderr,
            agrees: estimate.agrees_with(exact_decimal, MC_SIGMAS),
        });
    }
    Ok(out)
}

pub fn evaluate_polynomial(state: &StateEvaluator<Rational>, p: &ExactPolynomial) -> Result<Rational, CliError> {
    let mut total = Rational::from_i128(0);
    for (word, c) in p.terms() {
        total += c.clone() * state.evaluate(word)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateValue {
    pub state: String,
    pub word: String,
    pub exact: Rational,
}

impl StateValue {
    pub fn render(&self) -> String {
        format!(
            "state   {}\nword    {}\nexact   {}\ndecimal {}\n",
            self.state,
            self.word,
            format_rational(&self.exact),
            sig6(Scalar::to_f64(&self.exact))
        )
    }
}

/// `ψ_order(word)` for the problem's state family.
pub fn run_eval_state(
    problem: &Problem,
    word: &str,
    order: usize,
    dims: Option<&[usize]>,
    budget: u64,
) -> Result<StateValue, CliError> {
    let parsed = problem.algebra.parse_word(word)?;
    let spec = problem.state_for(order, dims)?;
    let state = StateEvaluator::new(&problem.algebra, &spec, engine(budget))?;
    Ok(StateValue {
        state: spec.to_string(),
        word: problem.algebra.display_word(&parsed),
        exact: state.evaluate(&parsed)?,
    })
}

/// `(cycle type, Wg)` for every partition of `n`.
pub fn weingarten_table(n: usize, d: usize) -> Result<Vec<(String, Rational)>, CliError> {
    if d == 0 {
        return Err(CliError::input("--d must be positive"));
    }
    let table = WeingartenTable::<Rational>::new();
    Ok(partitions(n).iter().map(|mu| (mu.to_string(), table.value(mu, d))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCheck {
    pub state: String,
    pub word: String,
    pub exact: Rational,
    pub estimate: f64,
    pub stderr: f64,
    pub agrees: bool,
}

impl McCheck {
    pub fn render(&self) -> String {
        let exact = Scalar::to_f64(&self.exact);
        let sigmas = if self.stderr > 0.0 {
            sig6((self.estimate - exact).abs() / self.stderr)
        } else {
            "-".to_string()
        };
        format!(
            "state    {}\nword     {}\nexact    {} ({})\nestimate {} ± {}\ndeviation {} stderr\nverdict  {}\n",
            self.state,
            self.word,
            format_rational(&self.exact),
            sig6(exact),
            sig6(self.estimate),
            sig6(self.stderr),
            sigmas,
            if self.agrees { "agree" } else { "DISAGREE" }
        )
    }
}

/// Exact vs Monte Carlo for `word` under the Haar trace of dimension `dim`
/// on every factor.
pub fn run_mc_check(
    algebra: &AlgebraSpec,
    word: &str,
    dim: usize,
    samples: usize,
    seed: u64,
    budget: u64,
) -> Result<McCheck, CliError> {
    if dim == 0 {
        return Err(CliError::input("--dim must be positive"));
    }
    let parsed = algebra.parse_word(word)?;
    let spec = StateSpec::per_factor(algebra, |_| StateSpec::haar(dim));
    let state = StateEvaluator::new(algebra, &spec, engine(budget))?;
    let exact = state.evaluate(&parsed)?;
    let estimate = state.monte_carlo(&parsed, samples, seed)?;
    Ok(McCheck {
        state: spec.to_string(),
        word: algebra.display_word(&parsed),
        agrees: estimate.agrees_with(Scalar::to_f64(&exact), MC_SIGMAS),
        exact,
        estimate: estimate.estimate,
        stderr: estimate.stderr,
    })
}
