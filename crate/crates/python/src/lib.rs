//! Python bindings: mixtures, networks, quantile sampling, transient
//! simulation, Verilog-A export and the command-line pipeline.

use clap::Parser;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stochastic_mdn::cli::{Cli, RunConfig};
use stochastic_mdn::device::{
    generate_dataset, iv_model_predict, switching_model_predict, transient_simulate,
    triangular_drive as core_triangular_drive, DesignatedInput, DeviceState, DriveWaveform,
    VMidRule,
};
use stochastic_mdn::evalsuite;
use stochastic_mdn::export::{self, ExportBundle};
use stochastic_mdn::mixture::{self, MixtureParams};
use stochastic_mdn::network::{
    init_network, load_weights, save_weights, train as core_train, MdnNetwork, NetworkShape,
    Normalization, TrainConfig, TrainingSet,
};
use stochastic_mdn::sampling::{self, QuantileEvent, QuantileMode, QuantilePolicy, SampleContext};
use stochastic_mdn::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for stochastic_mdn::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn state_from(code: u8) -> PyResult<DeviceState> {
    DeviceState::from_code(code)
        .ok_or_else(|| PyValueError::new_err(format!("state must be 0 or 1, got {code}")))
}

fn designated_from(name: &str) -> PyResult<DesignatedInput> {
    match name {
        "gate" => Ok(DesignatedInput::Gate),
        "bias" => Ok(DesignatedInput::Bias),
        "either" => Ok(DesignatedInput::Either),
        _ => Err(PyValueError::new_err(format!(
            "designated must be 'gate', 'bias' or 'either', got {name:?}"
        ))),
    }
}

fn policy_from(mode: &str, clip_low: f64, clip_high: f64, fixed_q: Option<f64>) -> PyResult<QuantilePolicy> {
    let mode = match mode {
        "fresh" => QuantileMode::FreshPerCall,
        "held" => QuantileMode::HeldPerSweep,
        "fixed" => QuantileMode::Fixed,
        _ => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'fresh', 'held' or 'fixed', got {mode:?}"
            )))
        }
    };
    let policy = QuantilePolicy {
        mode,
        clip_low,
        clip_high,
        fixed_q,
    };
    policy.validate().py()?;
    Ok(policy)
}

/// Gaussian mixture with means, standard deviations and weights.
#[pyclass(name = "Mixture", frozen, skip_from_py_object, module = "stochastic_mdn_py")]
#[derive(Clone)]
pub struct PyMixture(pub MixtureParams);

#[pymethods]
impl PyMixture {
    #[new]
    fn new(means: Vec<f64>, sigmas: Vec<f64>, alphas: Vec<f64>) -> PyResult<Self> {
        Ok(Self(MixtureParams::new(means, sigmas, alphas).py()?))
    }

    /// Builds a mixture from unnormalized non-negative weights.
    #[staticmethod]
    fn normalized(means: Vec<f64>, sigmas: Vec<f64>, weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self(MixtureParams::normalized(means, sigmas, weights).py()?))
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.0.means().to_vec()
    }

    #[getter]
    fn sigmas(&self) -> Vec<f64> {
        self.0.sigmas().to_vec()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.0.alphas().to_vec()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn std_dev(&self) -> f64 {
        self.0.std_dev()
    }

    fn pdf(&self, x: f64) -> f64 {
        mixture::pdf(&self.0, x)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        mixture::log_pdf(&self.0, x)
    }

    fn cdf(&self, x: f64) -> f64 {
        mixture::cdf(&self.0, x)
    }

    fn gnll(&self, x: f64) -> f64 {
        mixture::gnll_point(&self.0, x)
    }

    /// Value whose cumulative probability is `q`, for `0 < q < 1`.
    fn inverse_cdf(&self, q: f64) -> PyResult<f64> {
        sampling::inverse_cdf(&self.0, q).py()
    }

    /// `n` draws by component selection then a normal draw.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sampling::standard_sample(&self.0, &mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mixture(means={:?}, sigmas={:?}, alphas={:?})",
            self.0.means(),
            self.0.sigmas(),
            self.0.alphas()
        )
    }
}

/// Mixture density network.
#[pyclass(name = "Network", skip_from_py_object, module = "stochastic_mdn_py")]
#[derive(Clone)]
pub struct PyNetwork(pub MdnNetwork);

#[pymethods]
impl PyNetwork {
    /// Randomly initialized network with identity input normalization.
    #[new]
    #[pyo3(signature = (input_dim, hidden_sizes, k, seed=0))]
    fn new(input_dim: usize, hidden_sizes: Vec<usize>, k: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = NetworkShape::new(input_dim, hidden_sizes, k);
        Ok(Self(MdnNetwork::new(shape, Normalization::identity(input_dim), &mut rng).py()?))
    }

    /// Network initialized for a dataset: fitted normalization and mean
    /// biases spread over the target quantiles.
    #[staticmethod]
    #[pyo3(signature = (features, targets, hidden_sizes, k, target_scale=1.0, seed=0))]
    fn for_data(
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
        hidden_sizes: Vec<usize>,
        k: usize,
        target_scale: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let set = training_set(&features, &targets)?;
        let shape = NetworkShape::new(set.dim(), hidden_sizes, k);
        Ok(Self(init_network(shape, &set, target_scale, seed).py()?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Self(load_weights(&bytes).py()?))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self(load_weights(text.as_bytes()).py()?))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let bytes = save_weights(&self.0).py()?;
        std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
    }

    fn to_json(&self) -> PyResult<String> {
        let bytes = save_weights(&self.0).py()?;
        Ok(String::from_utf8(bytes).expect("weight files are utf-8"))
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn hidden_sizes(&self) -> Vec<usize> {
        self.0.shape().hidden_sizes.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.0.flat_params()
    }

    fn set_flat_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        self.0.set_flat_params(&params).py()
    }

    /// Mixture in model units for an already normalized input.
    fn forward(&self, input: Vec<f64>) -> PyResult<PyMixture> {
        Ok(PyMixture(self.0.forward(&input).py()?))
    }

    /// Mixture in physical units for a raw input.
    fn predict(&self, raw: Vec<f64>) -> PyResult<PyMixture> {
        Ok(PyMixture(self.0.predict(&raw).py()?))
    }

    /// Loss and flat gradient for one normalized sample.
    fn backward(&self, input: Vec<f64>, target: f64) -> PyResult<(f64, Vec<f64>)> {
        let (loss, grads) = self.0.backward(&input, target).py()?;
        Ok((loss, grads.flatten()))
    }

    /// Load-voltage distribution (V) and an extrapolation warning if any.
    fn iv_predict(&self, i_g: f64, i_b: f64, state: u8) -> PyResult<(PyMixture, Option<String>)> {
        let p = iv_model_predict(&self.0, i_g, i_b, state_from(state)?).py()?;
        Ok((PyMixture(p.params), p.warning))
    }

    /// Switching-current distribution (µA) and an extrapolation warning if any.
    fn switching_predict(&self, i_b: f64, state: u8) -> PyResult<(PyMixture, Option<String>)> {
        let p = switching_model_predict(&self.0, i_b, state_from(state)?).py()?;
        Ok((PyMixture(p.params), p.warning))
    }

    /// Trains a copy with AdamW on raw features; returns it with the
    /// per-epoch loss.
    #[pyo3(signature = (features, targets, epochs=20, learning_rate=1e-3, batch_size=256, weight_decay=1e-4, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &self,
        py: Python<'_>,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        weight_decay: f64,
        seed: u64,
    ) -> PyResult<(PyNetwork, Vec<f64>)> {
        let set = training_set(&features, &targets)?;
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            weight_decay,
            rng_seed: seed,
            ..TrainConfig::default()
        };
        let net = self.0.clone();
        let report = py.detach(|| core_train(net, &set, &cfg)).py()?;
        Ok((PyNetwork(report.network), report.loss_history))
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(input_dim={}, hidden_sizes={:?}, k={})",
            self.0.input_dim(),
            self.0.shape().hidden_sizes,
            self.0.k()
        )
    }
}

fn training_set(features: &[Vec<f64>], targets: &[f64]) -> PyResult<TrainingSet> {
    if features.len() != targets.len() || features.is_empty() {
        return Err(PyValueError::new_err(format!(
            "need equal, non-zero numbers of feature rows and targets, got {} and {}",
            features.len(),
            targets.len()
        )));
    }
    let dim = features[0].len();
    let mut set = TrainingSet::new(dim);
    for (i, (row, &y)) in features.iter().zip(targets).enumerate() {
        if row.len() != dim {
            return Err(PyValueError::new_err(format!("feature row {i} has {} values, expected {dim}", row.len())));
        }
        set.push(row, y);
    }
    Ok(set)
}

/// Quantile sampler carrying its own generator.
#[pyclass(name = "Sampler", module = "stochastic_mdn_py")]
pub struct PySampler(SampleContext);

#[pymethods]
impl PySampler {
    #[new]
    #[pyo3(signature = (mode="held", clip_low=0.05, clip_high=0.95, fixed_q=None, seed=0))]
    fn new(mode: &str, clip_low: f64, clip_high: f64, fixed_q: Option<f64>, seed: u64) -> PyResult<Self> {
        let policy = policy_from(mode, clip_low, clip_high, fixed_q)?;
        Ok(Self(SampleContext::new(policy, seed).py()?))
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.current_q()
    }

    /// Quantile `q` of the mixture, then one step of the policy.
    fn sample(&mut self, mixture: &PyMixture) -> PyResult<f64> {
        self.0.sample(&mixture.0).py()
    }

    /// Marks a sweep boundary. Returns whether `q` was redrawn.
    fn sweep_boundary(&mut self) -> bool {
        self.0.next_quantile(QuantileEvent::SweepBoundary)
    }
}

fn vmid_rule(bias_levels: Vec<f64>, v_mid: Vec<f64>) -> PyResult<VMidRule> {
    VMidRule::new(bias_levels, v_mid).py()
}

/// Triangular gate drive; returns `(t, i_g, i_b)`.
#[pyfunction]
fn triangular_drive(
    i_g_max: f64,
    i_b: f64,
    periods: usize,
    points_per_ramp: usize,
    dt: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = core_triangular_drive(i_g_max, i_b, periods, points_per_ramp, dt).py()?;
    Ok((d.t, d.i_g, d.i_b))
}

/// Simulates the I-V model over a drive waveform. Returns a dict of lists.
#[pyfunction]
#[pyo3(signature = (
    network, t, i_g, i_b, vmid_bias, vmid_values,
    mode="held", clip_low=0.05, clip_high=0.95, fixed_q=None,
    designated="gate", initial_state=0, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn transient<'py>(
    py: Python<'py>,
    network: &PyNetwork,
    t: Vec<f64>,
    i_g: Vec<f64>,
    i_b: Vec<f64>,
    vmid_bias: Vec<f64>,
    vmid_values: Vec<f64>,
    mode: &str,
    clip_low: f64,
    clip_high: f64,
    fixed_q: Option<f64>,
    designated: &str,
    initial_state: u8,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let drive = DriveWaveform::new(t, i_g, i_b).py()?;
    let policy = policy_from(mode, clip_low, clip_high, fixed_q)?;
    let rule = vmid_rule(vmid_bias, vmid_values)?;
    let trace = transient_simulate(
        &network.0,
        &drive,
        &policy,
        &rule,
        designated_from(designated)?,
        state_from(initial_state)?,
        seed,
    )
    .py()?;
    let out = PyDict::new(py);
    out.set_item("transitions", trace.transitions())?;
    out.set_item("t", trace.t)?;
    out.set_item("i_g", trace.i_g)?;
    out.set_item("i_b", trace.i_b)?;
    out.set_item("state", trace.state.iter().map(|s| s.code()).collect::<Vec<_>>())?;
    out.set_item("v_l", trace.v_l)?;
    out.set_item("q", trace.q)?;
    out.set_item("q_events", trace.q_events)?;
    out.set_item("warnings", trace.warnings)?;
    Ok(out)
}

fn bundle(
    network: &PyNetwork,
    vmid_bias: Vec<f64>,
    vmid_values: Vec<f64>,
    module_name: &str,
    seed: u64,
) -> PyResult<ExportBundle> {
    let rule = vmid_rule(vmid_bias, vmid_values)?;
    let mut b = ExportBundle::new(network.0.clone(), QuantilePolicy::default(), rule, module_name).py()?;
    b.seed = seed;
    b.validate().py()?;
    Ok(b)
}

/// Verilog-A source for an I-V network.
#[pyfunction]
#[pyo3(signature = (network, vmid_bias, vmid_values, module_name="htron_mdn", seed=0))]
fn emit_veriloga(
    network: &PyNetwork,
    vmid_bias: Vec<f64>,
    vmid_values: Vec<f64>,
    module_name: &str,
    seed: u64,
) -> PyResult<String> {
    export::emit_veriloga(&bundle(network, vmid_bias, vmid_values, module_name, seed)?).py()
}

/// Worst |native - interpreted| load voltage over `cases` random points.
#[pyfunction]
#[pyo3(signature = (network, text, vmid_bias, vmid_values, cases=100, seed=0))]
fn check_equivalence(
    network: &PyNetwork,
    text: &str,
    vmid_bias: Vec<f64>,
    vmid_values: Vec<f64>,
    cases: usize,
    seed: u64,
) -> PyResult<f64> {
    let b = bundle(network, vmid_bias, vmid_values, "htron_mdn", 0)?;
    Ok(export::check_equivalence(&b, text, cases, seed).py()?.max_deviation)
}

/// Load voltage computed by interpreting emitted Verilog-A.
#[pyfunction]
fn interpret_veriloga(text: &str, i_g: f64, i_b: f64, state: f64, q: f64) -> PyResult<f64> {
    export::reference_interpret(text, [i_g, i_b, state], q).py()
}

/// Synthetic ground-truth sweeps at the default device parameters.
/// Returns `(iv_rows, switching_rows)` as lists of tuples.
#[pyfunction]
#[pyo3(signature = (seed, bias_levels=None, repeats=None))]
#[allow(clippy::type_complexity)]
fn generate(
    py: Python<'_>,
    seed: u64,
    bias_levels: Option<Vec<f64>>,
    repeats: Option<usize>,
) -> PyResult<(Vec<(f64, f64, u8, f64)>, Vec<(f64, u8, f64)>)> {
    let mut cfg = RunConfig::with_defaults(seed);
    if let Some(b) = bias_levels {
        cfg.protocol.bias_levels = b;
    }
    if let Some(r) = repeats {
        cfg.protocol.repeats = r;
    }
    let data = py.detach(|| generate_dataset(&cfg.ground_truth, &cfg.protocol, seed)).py()?;
    Ok((
        data.iv.iter().map(|r| (r.i_g, r.i_b, r.state.code(), r.v_l)).collect(),
        data.switching.iter().map(|r| (r.i_b, r.state.code(), r.i_switch)).collect(),
    ))
}

/// One-sample KS statistic of `samples` against the mixture CDF.
#[pyfunction]
fn ks_statistic(samples: Vec<f64>, mixture: &PyMixture) -> PyResult<f64> {
    evalsuite::ks_statistic(&samples, |x| mixture::cdf(&mixture.0, x)).py()
}

#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    evalsuite::ks_two_sample(&a, &b).py()
}

#[pyfunction]
fn ks_critical_01(n: usize) -> f64 {
    evalsuite::ks_critical_01(n)
}

/// Runs the command-line front end with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> PyResult<i32> {
    let argv = std::iter::once("stochastic-mdn".to_string()).chain(args);
    let cli = Cli::try_parse_from(argv).map_err(|e| PyValueError::new_err(e.render().to_string()))?;
    Ok(match py.detach(|| stochastic_mdn::cli::run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    })
}

#[pymodule]
fn stochastic_mdn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixture>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySampler>()?;
    m.add_function(wrap_pyfunction!(triangular_drive, m)?)?;
    m.add_function(wrap_pyfunction!(transient, m)?)?;
    m.add_function(wrap_pyfunction!(emit_veriloga, m)?)?;
    m.add_function(wrap_pyfunction!(check_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(interpret_veriloga, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(ks_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(ks_critical_01, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("EQUIVALENCE_TOLERANCE", export::EQUIVALENCE_TOLERANCE)?;
    Ok(())
}
