//! Verilog-A export of a trained I-V model.
//!
//! The emitted module unrolls the network into scalar arithmetic with every
//! weight printed in shortest round-trip form, evaluates the mixture CDF
//! through an embedded `erfc`, inverts it by bracketed bisection, and keeps
//! the quantile and device state between time steps. [`reference_interpret`]
//! re-executes the emitted functions so the text can be checked against the
//! native pipeline.

mod emit;
mod interp;
mod lexer;
mod parser;

pub use emit::{emission_order, emit_veriloga, weight_literals, WEIGHTS_BEGIN, WEIGHTS_END};
pub use interp::{Interpreter, Value};
pub use lexer::{lex, Tok, Token};
pub use parser::{parse_module, Expr, Function, Module, Parameter, Stmt, Ty};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::{iv_model_predict, DesignatedInput, DeviceState, VMidRule};
use crate::error::{Error, Result};
use crate::network::MdnNetwork;
use crate::sampling::{inverse_cdf, QuantilePolicy};

pub const EXPORT_SCHEMA_VERSION: u32 = 1;

/// Largest network the emitter will unroll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnrollLimits {
    pub max_components: usize,
    pub max_layer_width: usize,
    pub max_hidden_layers: usize,
}

impl Default for UnrollLimits {
    fn default() -> Self {
        Self {
            max_components: 16,
            max_layer_width: 128,
            max_hidden_layers: 6,
        }
    }
}

/// Everything the emitted module needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub network: MdnNetwork,
    pub policy: QuantilePolicy,
    pub v_mid_rule: VMidRule,
    pub module_name: String,
    /// Default of the module's `seed` parameter.
    pub seed: u64,
    /// Input whose derivative sign changes regenerate `q`.
    pub designated: DesignatedInput,
    /// Gate current is sensed as `V(gate) / r_gate` (ohms).
    pub gate_resistance: f64,
    pub limits: UnrollLimits,
    pub schema_version: u32,
}

const VERILOG_KEYWORDS: [&str; 40] = [
    "module", "endmodule", "input", "output", "inout", "electrical", "parameter", "real",
    "integer", "analog", "function", "endfunction", "begin", "end", "if", "else", "for", "while",
    "case", "endcase", "default", "repeat", "wire", "reg", "branch", "genvar", "initial",
    "always", "assign", "from", "exclude", "inf", "ground", "string", "localparam", "table",
    "V", "I", "discipline", "nature",
];

pub fn is_legal_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    let first_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
    first_ok
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !VERILOG_KEYWORDS.contains(&name)
}

impl ExportBundle {
    pub fn new(
        network: MdnNetwork,
        policy: QuantilePolicy,
        v_mid_rule: VMidRule,
        module_name: impl Into<String>,
    ) -> Result<Self> {
        let b = Self {
            network,
            policy,
            v_mid_rule,
            module_name: module_name.into(),
            seed: 0,
            designated: DesignatedInput::Gate,
            gate_resistance: 1000.0,
            limits: UnrollLimits::default(),
            schema_version: EXPORT_SCHEMA_VERSION,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != EXPORT_SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported export schema_version {}",
                self.schema_version
            )));
        }
        if !is_legal_identifier(&self.module_name) {
            return Err(Error::validation(format!(
                "module name {:?} is not a legal Verilog-A identifier",
                self.module_name
            )));
        }
        let shape = self.network.shape();
        if shape.input_dim != 3 {
            return Err(Error::validation(format!(
                "only the I-V model (3 inputs) can be exported, network has {}",
                shape.input_dim
            )));
        }
        if !self.network.all_finite() {
            return Err(Error::validation("network has non-finite parameters"));
        }
        if !(self.gate_resistance > 0.0 && self.gate_resistance.is_finite()) {
            return Err(Error::validation("gate_resistance must be positive"));
        }
        self.policy.validate()?;
        self.v_mid_rule.validate()?;
        let l = &self.limits;
        let mut problems = Vec::new();
        if shape.k > l.max_components {
            problems.push(format!("K = {} exceeds max_components = {}", shape.k, l.max_components));
        }
        if shape.hidden_sizes.len() > l.max_hidden_layers {
            problems.push(format!(
                "{} hidden layers exceed max_hidden_layers = {}",
                shape.hidden_sizes.len(),
                l.max_hidden_layers
            ));
        }
        for (i, &w) in shape.hidden_sizes.iter().enumerate() {
            if w > l.max_layer_width {
                problems.push(format!(
                    "hidden layer {i} width {w} exceeds max_layer_width = {}",
                    l.max_layer_width
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::validation(format!(
                "network exceeds unroll limits: {}",
                problems.join("; ")
            )));
        }
        Ok(())
    }
}

/// Load voltage the emitted `mdn_vl` function returns for `inputs =
/// (i_g, i_b, state)` at quantile `q`.
pub fn reference_interpret(text: &str, inputs: [f64; 3], q: f64) -> Result<f64> {
    let module = parse_module(text)?;
    Interpreter::new(&module).call("mdn_vl", &[inputs[0], inputs[1], inputs[2], q])
}

/// The native counterpart of [`reference_interpret`].
pub fn native_vl(net: &MdnNetwork, inputs: [f64; 3], q: f64) -> Result<f64> {
    let state = if inputs[2] >= 0.5 {
        DeviceState::Resistive
    } else {
        DeviceState::Superconducting
    };
    let pred = iv_model_predict(net, inputs[0], inputs[1], state)?;
    inverse_cdf(&pred.params, q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub cases: usize,
    pub max_deviation: f64,
    pub worst_case: ([f64; 3], f64),
}

/// Default agreement required between native and interpreted evaluation (V).
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

/// Compares native and interpreted load voltages at `cases` random points
/// drawn uniformly over the training input box, with `q` uniform on
/// `[0.001, 0.999]`, plus the `v_mid` rule at each bias.
pub fn check_equivalence(
    bundle: &ExportBundle,
    text: &str,
    cases: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let module = parse_module(text)?;
    let mut interp = Interpreter::new(&module);
    let norm = bundle.network.normalization();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport {
        cases,
        max_deviation: 0.0,
        worst_case: ([0.0; 3], 0.0),
    };
    for _ in 0..cases {
        let i_g = rng.random_range(norm.min[0]..=norm.max[0]);
        let i_b = rng.random_range(norm.min[1]..=norm.max[1]);
        let st = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let q = rng.random_range(0.001..=0.999);
        let inputs = [i_g, i_b, st];
        let native = native_vl(&bundle.network, inputs, q)?;
        let emitted = interp.call("mdn_vl", &[i_g, i_b, st, q])?;
        let mut dev = (native - emitted).abs();
        let vmid_dev = (bundle.v_mid_rule.at(i_b) - interp.call("mdn_vmid", &[i_b])?).abs();
        dev = dev.max(vmid_dev);
        if !(dev <= report.max_deviation) {
            report.max_deviation = dev;
            report.worst_case = (inputs, q);
        }
    }
    Ok(report)
}

/// Emits the module and verifies it against the native pipeline; fails
/// with a numerical error when the worst deviation exceeds `tolerance`.
pub fn export_verified(bundle: &ExportBundle, cases: usize, seed: u64, tolerance: f64) -> Result<(String, EquivalenceReport)> {
    let text = emit_veriloga(bundle)?;
    let report = check_equivalence(bundle, &text, cases, seed)?;
    if !(report.max_deviation <= tolerance) {
        let ([g, b, s], q) = report.worst_case;
        return Err(Error::numerical(format!(
            "exported model deviates by {:e} V (tolerance {tolerance:e}) at i_g={g}, i_b={b}, state={s}, q={q}",
            report.max_deviation
        )));
    }
    Ok((text, report))
}

#[cfg(test)]
mod tests;
