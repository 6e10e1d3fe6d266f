use std::fmt::Write as _;

use super::lexer::{lex, Tok};
use super::ExportBundle;
use crate::error::{Error, Result};
use crate::mixture::erf::{ERX, PA, PP, QA, QQ, RA, RB, SA, SB};
use crate::network::{Dense, MdnNetwork, SIGMA_EPS};
use crate::sampling::{QuantileMode, BRACKET_EXPANSIONS, BRACKET_SIGMAS};

pub const WEIGHTS_BEGIN: &str = "// ---- begin weights ----";
pub const WEIGHTS_END: &str = "// ---- end weights ----";

/// Fixed bisection count of the emitted inverse CDF.
const BISECTION_STEPS: usize = 60;

/// Shortest round-trip form; negatives parenthesized.
fn lit(x: f64) -> String {
    let s = format!("{x:?}");
    if x.is_sign_negative() {
        format!("({s})")
    } else {
        s
    }
}

/// `c0 + x * (c1 + x * (... + x * cn))`, evaluating exactly like the
/// native Horner fold.
fn horner(x: &str, c: &[f64]) -> String {
    let mut s = lit(c[c.len() - 1]);
    for &ci in c[..c.len() - 1].iter().rev() {
        s = format!("{} + {x} * ({s})", lit(ci));
    }
    s
}

fn poly1(x: &str, c: &[f64]) -> String {
    format!("1.0 + {x} * ({})", horner(x, c))
}

/// Weights in the order they appear in the emitted text: per layer
/// (hidden layers, then the mean, sigma and weight heads), per output
/// unit, the bias followed by that unit's weight row.
pub fn emission_order(net: &MdnNetwork) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.param_count());
    for layer in net.layers() {
        for j in 0..layer.outputs {
            out.push(layer.bias[j]);
            out.extend_from_slice(layer.row(j));
        }
    }
    out
}

/// Numeric literals between the weight markers of emitted text, signs
/// included.
pub fn weight_literals(text: &str) -> Result<Vec<f64>> {
    let start = text
        .find(WEIGHTS_BEGIN)
        .ok_or_else(|| Error::parse("weights", "begin marker not found"))?;
    let end = text[start..]
        .find(WEIGHTS_END)
        .ok_or_else(|| Error::parse("weights", "end marker not found"))?;
    let region = &text[start + WEIGHTS_BEGIN.len()..start + end];
    let toks = lex(region)?;
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        let v = match t.tok {
            Tok::Real(v) => v,
            Tok::Int(v) => v as f64,
            _ => continue,
        };
        let negated = i > 0 && toks[i - 1].tok == Tok::Punct("-");
        out.push(if negated { -v } else { v });
    }
    Ok(out)
}

fn affine_line(out: &mut String, target: &str, layer: &Dense, j: usize, inputs: &[String], wrap: Option<&str>) {
    let terms: Vec<String> = layer
        .row(j)
        .iter()
        .zip(inputs)
        .map(|(w, x)| format!("{} * {x}", lit(*w)))
        .collect();
    let body = format!("{} + ({})", lit(layer.bias[j]), terms.join(" + "));
    let rhs = match wrap {
        Some(f) => format!("{f}({body})"),
        None => body,
    };
    let _ = writeln!(out, "      {target} = {rhs};");
}

fn declare(out: &mut String, indent: &str, ty: &str, names: &[String]) {
    for chunk in names.chunks(12) {
        let _ = writeln!(out, "{indent}{ty} {};", chunk.join(", "));
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn emit_erfc(out: &mut String) {
    let tiny = 3.7252902984619140625e-9;
    let s = format!(
        r#"  analog function real mdn_erfc;
    input x;
    real x;
    real ax, z, y, s, r, qd, t;
    begin
      ax = abs(x);
      if (ax < 0.84375) begin
        if (ax < {tiny}) begin
          mdn_erfc = 1.0 - x;
        end else begin
          z = ax * ax;
          y = x * (({pp}) / ({qq}));
          if (x < 0.25) mdn_erfc = 1.0 - (x + y);
          else mdn_erfc = 0.5 - (y + (x - 0.5));
        end
      end else if (ax < 1.25) begin
        s = ax - 1.0;
        y = ({pa}) / ({qa});
        if (x > 0.0) mdn_erfc = 1.0 - {erx} - y;
        else mdn_erfc = 1.0 + {erx} + y;
      end else if (ax < 28.0) begin
        if (x < (-6.0)) begin
          mdn_erfc = 2.0;
        end else begin
          s = 1.0 / (ax * ax);
          if (ax < {split}) begin
            r = {ra};
            qd = {sa};
          end else begin
            r = {rb};
            qd = {sb};
          end
          z = floor(ax * 1048576.0) / 1048576.0;
          t = exp(-z * z - 0.5625) * exp((z - ax) * (z + ax) + r / qd) / ax;
          if (x > 0.0) mdn_erfc = t;
          else mdn_erfc = 2.0 - t;
        end
      end else if (x > 0.0) begin
        mdn_erfc = 0.0;
      end else begin
        mdn_erfc = 2.0;
      end
    end
  endfunction

"#,
        tiny = lit(tiny),
        pp = horner("z", &PP),
        qq = poly1("z", &QQ),
        pa = horner("s", &PA),
        qa = poly1("s", &QA),
        erx = lit(ERX),
        split = lit(1.0 / 0.35),
        ra = horner("s", &RA),
        sa = poly1("s", &SA),
        rb = horner("s", &RB),
        sb = poly1("s", &SB),
    );
    out.push_str(&s);
}

fn emit_activations(out: &mut String) {
    let eps = lit(SIGMA_EPS);
    let _ = write!(
        out,
        r#"  analog function real mdn_relu;
    input x;
    real x;
    begin
      if (x > 0.0) mdn_relu = x;
      else mdn_relu = 0.0;
    end
  endfunction

  analog function real mdn_elu1;
    input x;
    real x;
    begin
      if (x >= 0.0) mdn_elu1 = x + 1.0 + {eps};
      else mdn_elu1 = 0.5 * (exp(x) - 1.0) + 1.0 + {eps};
    end
  endfunction

"#
    );
}

fn emit_vmid(out: &mut String, bundle: &ExportBundle) {
    let b = &bundle.v_mid_rule.bias_levels;
    let v = &bundle.v_mid_rule.v_mid;
    out.push_str("  analog function real mdn_vmid;\n    input ib;\n    real ib;\n    begin\n");
    let _ = writeln!(out, "      if (ib <= {}) mdn_vmid = {};", lit(b[0]), lit(v[0]));
    for k in 1..b.len() {
        let _ = writeln!(
            out,
            "      else if (ib < {}) mdn_vmid = {} + ((ib - {}) / {}) * {};",
            lit(b[k]),
            lit(v[k - 1]),
            lit(b[k - 1]),
            lit(b[k] - b[k - 1]),
            lit(v[k] - v[k - 1]),
        );
    }
    let _ = writeln!(out, "      else mdn_vmid = {};", lit(v[v.len() - 1]));
    out.push_str("    end\n  endfunction\n\n");
}

fn cdf_expr(x: &str, k: usize) -> String {
    let terms: Vec<String> = (0..k)
        .map(|j| {
            format!(
                "0.5 * w{j} * mdn_erfc(-({x} - m{j}) / (s{j} * {}))",
                lit(std::f64::consts::SQRT_2)
            )
        })
        .collect();
    format!("min(max({}, 0.0), 1.0)", terms.join(" + "))
}

fn emit_vl(out: &mut String, net: &MdnNetwork) {
    let shape = net.shape();
    let k = shape.k;
    let norm = net.normalization();
    out.push_str("  analog function real mdn_vl;\n    input ig, ib, st, q;\n    real ig, ib, st, q;\n");
    declare(out, "    ", "real", &names("n", 3));
    for (l, &w) in shape.hidden_sizes.iter().enumerate() {
        declare(out, "    ", "real", &names(&format!("a{}_", l + 1), w));
    }
    for p in ["m", "sp", "lg", "s", "e", "w"] {
        declare(out, "    ", "real", &names(p, k));
    }
    out.push_str("    real lmax, esum, lo, hi, ctr, half, mid, c, cl, ch;\n    integer it, ok;\n    begin\n");

    for (i, raw) in ["ig", "ib", "st"].iter().enumerate() {
        let (lo, hi) = (norm.min[i], norm.max[i]);
        let span = hi - lo;
        if span > 0.0 {
            let _ = writeln!(out, "      n{i} = 2.0 * ({raw} - {}) / {} - 1.0;", lit(lo), lit(span));
        } else {
            let _ = writeln!(out, "      n{i} = 0.0;");
        }
    }

    let _ = writeln!(out, "      {WEIGHTS_BEGIN}");
    let mut inputs = names("n", 3);
    for (l, layer) in net.hidden_layers().iter().enumerate() {
        let outs = names(&format!("a{}_", l + 1), layer.outputs);
        for (j, target) in outs.iter().enumerate() {
            affine_line(out, target, layer, j, &inputs, Some("mdn_relu"));
        }
        inputs = outs;
    }
    let [mu, sigma, alpha] = net.heads();
    for (head, prefix) in [(mu, "m"), (sigma, "sp"), (alpha, "lg")] {
        for j in 0..k {
            affine_line(out, &format!("{prefix}{j}"), head, j, &inputs, None);
        }
    }
    let _ = writeln!(out, "      {WEIGHTS_END}");

    for j in 0..k {
        let _ = writeln!(out, "      s{j} = mdn_elu1(sp{j});");
    }
    out.push_str("      lmax = lg0;\n");
    for j in 1..k {
        let _ = writeln!(out, "      lmax = max(lmax, lg{j});");
    }
    for j in 0..k {
        let _ = writeln!(out, "      e{j} = exp(lg{j} - lmax);");
    }
    let _ = writeln!(out, "      esum = {};", names("e", k).join(" + "));
    for j in 0..k {
        let _ = writeln!(out, "      w{j} = e{j} / esum;");
    }
    let (off, scale) = (lit(norm.target_offset), lit(norm.target_scale));
    for j in 0..k {
        let _ = writeln!(out, "      m{j} = {off} + {scale} * m{j};");
        let _ = writeln!(out, "      s{j} = {scale} * s{j};");
    }

    let width = lit(BRACKET_SIGMAS);
    let _ = writeln!(out, "      lo = m0 - {width} * s0;");
    for j in 1..k {
        let _ = writeln!(out, "      lo = min(lo, m{j} - {width} * s{j});");
    }
    let _ = writeln!(out, "      hi = m0 + {width} * s0;");
    for j in 1..k {
        let _ = writeln!(out, "      hi = max(hi, m{j} + {width} * s{j});");
    }
    let _ = write!(
        out,
        r#"      ctr = 0.5 * (lo + hi);
      half = 0.5 * (hi - lo);
      ok = 0;
      for (it = 0; it <= {expansions}; it = it + 1) begin
        if (ok == 0) begin
          lo = ctr - half;
          hi = ctr + half;
          cl = {cdf_lo};
          ch = {cdf_hi};
          if (cl <= q && ch >= q) ok = 1;
          else half = 2.0 * half;
        end
      end
      for (it = 0; it < {steps}; it = it + 1) begin
        mid = 0.5 * (lo + hi);
        c = {cdf_mid};
        if (c < q) lo = mid;
        else hi = mid;
      end
      mdn_vl = 0.5 * (lo + hi);
    end
  endfunction

"#,
        expansions = BRACKET_EXPANSIONS,
        steps = BISECTION_STEPS,
        cdf_lo = cdf_expr("lo", k),
        cdf_hi = cdf_expr("hi", k),
        cdf_mid = cdf_expr("mid", k),
    );
}

fn emit_analog_block(out: &mut String, bundle: &ExportBundle) {
    use crate::device::DesignatedInput;
    let watched: &[&str] = match bundle.designated {
        DesignatedInput::Gate => &["ig"],
        DesignatedInput::Bias => &["ib"],
        DesignatedInput::Either => &["ig", "ib"],
    };
    out.push_str(
        "  analog begin\n    @(initial_step) begin\n      rng = seed;\n      st = 0;\n      turn = 0;\n",
    );
    out.push_str("      ig = 1.0e6 * V(gate) / r_gate;\n      ib = 1.0e6 * I(chp, chn);\n");
    for w in watched {
        let _ = writeln!(out, "      {w}_prev = {w};\n      {w}_dir = 0;");
    }
    out.push_str(
        "      if (q_mode == 2) q = q_fixed;\n      else q = $rdist_uniform(rng, clip_low, clip_high);\n    end\n",
    );
    out.push_str("    ig = 1.0e6 * V(gate) / r_gate;\n    ib = 1.0e6 * I(chp, chn);\n    turn = 0;\n");
    for w in watched {
        let _ = write!(
            out,
            r#"    d = {w} - {w}_prev;
    if (d != 0.0) begin
      if ((d > 0.0 && {w}_dir < 0) || (d < 0.0 && {w}_dir > 0)) turn = 1;
      if (d > 0.0) {w}_dir = 1;
      else {w}_dir = -1;
    end
    {w}_prev = {w};
"#
        );
    }
    out.push_str(
        r#"    if (q_mode == 0 || (q_mode == 1 && turn == 1)) q = $rdist_uniform(rng, clip_low, clip_high);
    vl = mdn_vl(ig, ib, st, q);
    vmid = mdn_vmid(ib);
    if (vl > vmid) st = 1;
    else if (vl < vmid) st = 0;
    I(gate) <+ V(gate) / r_gate;
    V(chp, chn) <+ vl;
  end
"#,
    );
}

/// Renders the bundle as a self-contained Verilog-A module.
pub fn emit_veriloga(bundle: &ExportBundle) -> Result<String> {
    bundle.validate()?;
    let net = &bundle.network;
    let shape = net.shape();
    let policy = &bundle.policy;
    let q_mode = match policy.mode {
        QuantileMode::FreshPerCall => 0,
        QuantileMode::HeldPerSweep => 1,
        QuantileMode::Fixed => 2,
    };
    let mut out = String::new();
    let _ = writeln!(out, "// Mixture density network compact model.");
    let _ = writeln!(
        out,
        "// Inputs: gate current (uA), channel bias current (uA), state (0 superconducting, 1 resistive)."
    );
    let _ = writeln!(out, "// Output: load voltage (V) drawn at quantile q by inverse transform sampling.");
    let _ = writeln!(
        out,
        "// Hidden layers {:?}, {} mixture components, export schema {}.",
        shape.hidden_sizes, shape.k, bundle.schema_version
    );
    out.push_str("`include \"disciplines.vams\"\n\n");
    let _ = writeln!(out, "module {}(gate, chp, chn);", bundle.module_name);
    out.push_str("  inout gate, chp, chn;\n  electrical gate, chp, chn;\n\n");
    let _ = writeln!(out, "  parameter integer seed = {};", bundle.seed % (1u64 << 31));
    out.push_str("  // 0 fresh per call, 1 held per sweep, 2 fixed\n");
    let _ = writeln!(out, "  parameter integer q_mode = {q_mode};");
    let _ = writeln!(out, "  parameter real clip_low = {};", lit(policy.clip_low));
    let _ = writeln!(out, "  parameter real clip_high = {};", lit(policy.clip_high));
    let _ = writeln!(out, "  parameter real q_fixed = {};", lit(policy.fixed_q.unwrap_or(0.5)));
    let _ = writeln!(out, "  parameter real r_gate = {};\n", lit(bundle.gate_resistance));
    out.push_str("  real ig, ib, d, q, vl, vmid, ig_prev, ib_prev;\n");
    out.push_str("  integer st, rng, turn, ig_dir, ib_dir;\n\n");
    emit_erfc(&mut out);
    emit_activations(&mut out);
    emit_vmid(&mut out, bundle);
    emit_vl(&mut out, net);
    emit_analog_block(&mut out, bundle);
    out.push_str("endmodule\n");
    Ok(out)
}
