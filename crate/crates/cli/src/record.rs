//! Machine-readable result record and the human table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ncupper::{format_rational, Rational};

pub const RECORD_FORMAT: &str = "ncupper-result";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub format: String,
    pub format_version: u32,
    pub tool_version: String,
    /// `sha256:` digest of the canonical problem text and the settings.
    pub input_hash: String,
    pub problem: String,
    pub objective: String,
    pub state_family: String,
    pub settings: Settings,
    pub orders: Vec<OrderResult>,
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monte_carlo: Vec<McResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Everything besides the problem text that can change the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub hierarchy: String,
    pub orders: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_index: Option<usize>,
    pub tol: f64,
    pub budget: u64,
    pub support_cap: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub order: usize,
    pub basis_size: usize,
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<BoundResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<BoundResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub display: String,
    pub dimension: usize,
    pub rank_b: usize,
    pub kernel_residual: f64,
    /// `sha256:` digest of the exact pencil entries.
    pub inputs_digest: String,
    /// Exact pencil `(A, B)` as `"p/q"` strings, row-major.
    pub a: Vec<Vec<String>>,
    pub b: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub order: usize,
    pub power: usize,
    pub exact: String,
    pub exact_decimal: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub orders: Vec<OrderTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTiming {
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_ms: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn rational_matrix(entries: &[Vec<Rational>]) -> Vec<Vec<String>> {
    entries.iter().map(|row| row.iter().map(format_rational).collect()).collect()
}

/// Digest of an exact pencil: rows joined by `;`, entries by `,`, `A` then `B`.
pub fn pencil_digest(a: &[Vec<String>], b: &[Vec<String>]) -> String {
    let flatten = |m: &[Vec<String>]| m.iter().map(|row| row.join(",")).collect::<Vec<_>>().join(";");
    sha256_hex(format!("A={}\nB={}\n", flatten(a), flatten(b)).as_bytes())
}

/// Six significant digits; scientific notation outside `[1e-5, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // Read the exponent after rounding so that 0.9999999 counts as 1.
    let scientific = format!("{x:.5e}");
    let magnitude: i32 = scientific.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-5..6).contains(&magnitude) {
        return scientific;
    }
    format!("{:.*}", (5 - magnitude) as usize, x)
}

impl ResultRecord {
    pub fn to_machine(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("records serialize");
        text.push('\n');
        text
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("problem   {}\n", self.problem));
        out.push_str(&format!("objective {}\n", self.objective));
        out.push_str(&format!("states    {}\n", self.state_family));
        out.push('\n');
        let show_lambda = self.orders.iter().any(|o| o.lambda.is_some());
        let show_eta = self.orders.iter().any(|o| o.eta.is_some());
        let mut header = format!("{:>5}  {:>5}", "order", "basis");
        if show_lambda {
            header.push_str(&format!("  {:>12}", "lambda"));
        }
        if show_eta {
            header.push_str(&format!("  {:>12}", "eta"));
        }
        header.push_str("  state");
        out.push_str(&header);
        out.push('\n');
        for row in &self.orders {
            let mut line = format!("{:>5}  {:>5}", row.order, row.basis_size);
            let cell = |b: &Option<BoundResult>| b.as_ref().map(|b| b.display.clone()).unwrap_or_else(|| "-".into());
            if show_lambda {
                line.push_str(&format!("  {:>12}", cell(&row.lambda)));
            }
            if show_eta {
                line.push_str(&format!("  {:>12}", cell(&row.eta)));
            }
            line.push_str(&format!("  {}", row.state));
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!("monotone  {}\n", if self.monotone { "yes" } else { "no" }));
        if let Some(m) = self.known_minimum {
            out.push_str(&format!("minimum   {}\n", sig6(m)));
        }
        for mc in &self.monte_carlo {
            out.push_str(&format!(
                "mc        order {} power {}: exact {} estimate {} ± {} {}\n",
                mc.order,
                mc.power,
                sig6(mc.exact_decimal),
                sig6(mc.estimate),
                sig6(mc.stderr),
                if mc.agrees { "ok" } else { "MISMATCH" }
            ));
        }
        if let Some(t) = &self.timings {
            out.push_str(&format!("time      {:.1} ms\n", t.total_ms));
        }
        out
    }
}
