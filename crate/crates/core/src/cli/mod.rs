//! Pipeline front end: one JSON config and a seed drive data generation,
//! training, evaluation, transient replay and export. Every command writes
//! into `<out>/<config hash>/` and records a manifest of what it wrote.

mod args;

pub use args::{run, Cli, Command, Variant};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{
    generate_dataset, iv_training_set, read_iv_csv, read_switching_csv, read_waveform_csv,
    switching_model_predict, switching_training_set, transient_simulate, triangular_drive,
    write_iv_csv, write_switching_csv, write_trace_csv, write_waveform_csv, DesignatedInput,
    DeviceState, DriveWaveform, GroundTruthConfig, SweepProtocol, TransientTrace, VMidRule,
};
use crate::error::{Error, Result};
use crate::evalsuite::{
    default_grid, distribution_report, score_switching, write_curves_csv, write_distribution_csv,
    EvalSummary,
};
use crate::export::{export_verified, ExportBundle, UnrollLimits};
use crate::network::{
    init_network, load_weights, save_weights, MdnNetwork, NetworkShape, TrainConfig, TrainingSet,
};
use crate::sampling::QuantilePolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_sizes: Vec<usize>,
    pub k: usize,
    /// Targets are divided by this before training (V for I-V, µA for
    /// switching). The sigma head cannot go below half a unit.
    pub target_scale: f64,
}

impl NetworkConfig {
    pub fn iv_default() -> Self {
        Self {
            hidden_sizes: vec![32, 32],
            k: 3,
            target_scale: 1e-4,
        }
    }

    pub fn switching_default() -> Self {
        Self {
            hidden_sizes: vec![16, 16],
            k: 2,
            target_scale: 0.01,
        }
    }

    fn validate(&self, section: &str, input_dim: usize) -> Result<()> {
        NetworkShape::new(input_dim, self.hidden_sizes.clone(), self.k)
            .validate()
            .map_err(|e| Error::validation(format!("{section}: {e}")))?;
        if !(self.target_scale > 0.0 && self.target_scale.is_finite()) {
            return Err(Error::validation(format!("{section}.target_scale must be positive")));
        }
        Ok(())
    }
}

fn iv_train_default() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    }
}

fn switching_train_default() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        batch_size: 128,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Gate currents (µA) of the switching curves.
    pub grid: Vec<f64>,
    /// Gate currents (µA) at which load-voltage histograms are tabulated.
    pub distribution_i_g: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            distribution_i_g: vec![1.35, 1.45, 1.55],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientConfig {
    /// Triangular drive used when no waveform CSV is given.
    pub i_b: f64,
    pub i_g_max: f64,
    pub periods: usize,
    pub points_per_ramp: usize,
    pub dt: f64,
    pub designated: DesignatedInput,
    pub initial_state: DeviceState,
    pub quantiles: Vec<f64>,
}

impl Default for TransientConfig {
    fn default() -> Self {
        Self {
            i_b: 23.5,
            i_g_max: 3.0,
            periods: 4,
            points_per_ramp: 61,
            dt: 1e-9,
            designated: DesignatedInput::Gate,
            initial_state: DeviceState::Superconducting,
            quantiles: vec![0.05, 0.5, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub module_name: String,
    /// Random (input, q) pairs in the equivalence check.
    pub cases: usize,
    pub tolerance: f64,
    pub gate_resistance: f64,
    pub limits: UnrollLimits,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            module_name: "htron_mdn".into(),
            cases: 100,
            tolerance: crate::export::EQUIVALENCE_TOLERANCE,
            gate_resistance: 1000.0,
            limits: UnrollLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub ground_truth: GroundTruthConfig,
    pub protocol: SweepProtocol,
    #[serde(default = "NetworkConfig::iv_default")]
    pub network: NetworkConfig,
    #[serde(default = "NetworkConfig::switching_default")]
    pub switching_network: NetworkConfig,
    #[serde(default = "iv_train_default")]
    pub train: TrainConfig,
    #[serde(default = "switching_train_default")]
    pub train_switching: TrainConfig,
    #[serde(default)]
    pub policy: QuantilePolicy,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub transient: TransientConfig,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Parent of the run directories. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults throughout, with the five bias levels and the given seed.
    pub fn with_defaults(seed: u64) -> Self {
        Self {
            ground_truth: GroundTruthConfig::default(),
            protocol: SweepProtocol {
                gate_max: 3.0,
                gate_points: 61,
                bias_levels: vec![14.0, 16.5, 23.5, 28.0, 33.0],
                repeats: 1000,
                ramp_down: true,
            },
            network: NetworkConfig::iv_default(),
            switching_network: NetworkConfig::switching_default(),
            train: iv_train_default(),
            train_switching: switching_train_default(),
            policy: QuantilePolicy::default(),
            eval: EvalConfig::default(),
            transient: TransientConfig::default(),
            export: ExportConfig::default(),
            seed: Some(seed),
            out_dir: None,
        }
    }

    /// Parses and validates; structural errors name the offending path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::validation(format!("config: {inner}"))
            } else {
                Error::validation(format!("config field {path}: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.ground_truth.validate()?;
        self.protocol.validate()?;
        for &b in &self.protocol.bias_levels {
            self.ground_truth.check_bias(b)?;
        }
        self.network.validate("network", 3)?;
        self.switching_network.validate("switching_network", 2)?;
        self.train.validate()?;
        self.train_switching
            .validate()
            .map_err(|e| Error::validation(e.to_string().replace("train.", "train_switching.")))?;
        self.policy.validate()?;
        if self.eval.grid.is_empty() || self.eval.grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::validation("eval.grid must be a non-empty list of finite values"));
        }
        let t = &self.transient;
        if !t.quantiles.iter().all(|q| *q > 0.0 && *q < 1.0) {
            return Err(Error::validation("transient.quantiles must lie in (0, 1)"));
        }
        triangular_drive(t.i_g_max, t.i_b, t.periods, t.points_per_ramp, t.dt)
            .map_err(|e| Error::validation(format!("transient: {e}")))?;
        if self.export.cases == 0 {
            return Err(Error::validation("export.cases must be positive"));
        }
        if !(self.export.tolerance > 0.0) {
            return Err(Error::validation("export.tolerance must be positive"));
        }
        Ok(())
    }

    /// Canonical JSON of everything that affects outputs.
    pub fn canonical_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::validation(format!("serializing config: {e}")))?;
        v.push(b'\n');
        Ok(v)
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.canonical_json()?)[..16].to_string())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent seed for a named pipeline stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    /// Data rows, for CSV files.
    pub rows: Option<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

/// A configured run rooted at its hash-named directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub seed: u64,
    pub hash: String,
    pub dir: PathBuf,
}

impl Run {
    /// Applies the overrides, validates, and creates the run directory with
    /// a copy of the effective config.
    pub fn open(mut config: RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = Some(s);
        }
        let seed = config
            .seed
            .ok_or_else(|| Error::validation("config field seed: required (or pass --seed)"))?;
        config.validate()?;
        let hash = config.hash()?;
        let root = out
            .map(Path::to_path_buf)
            .or_else(|| config.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let dir = root.join(&hash);
        fs::create_dir_all(&dir).map_err(|e| io_context(e, &dir))?;
        let cfg_path = dir.join("config.json");
        fs::write(&cfg_path, config.canonical_json()?).map_err(|e| io_context(e, &cfg_path))?;
        Ok(Self {
            config,
            seed,
            hash,
            dir,
        })
    }

    fn stage(&self, sub: &str, command: &str) -> Result<Stage<'_>> {
        let dir = self.dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io_context(e, &dir))?;
        Ok(Stage {
            run: self,
            sub: sub.to_string(),
            manifest: Manifest {
                command: command.into(),
                seed: self.seed,
                config_hash: self.hash.clone(),
                files: Vec::new(),
            },
        })
    }

    pub fn iv_data_path(&self) -> PathBuf {
        self.dir.join("data").join("iv.csv")
    }

    pub fn switching_data_path(&self) -> PathBuf {
        self.dir.join("data").join("switching.csv")
    }

    pub fn weights_path(&self, variant: Variant) -> PathBuf {
        self.dir.join("train").join(variant.name()).join("weights.json")
    }

    pub fn vmid_path(&self) -> PathBuf {
        self.dir.join("train").join("iv").join("vmid.json")
    }
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

struct Stage<'r> {
    run: &'r Run,
    sub: String,
    manifest: Manifest,
}

impl Stage<'_> {
    fn put(&mut self, name: &str, bytes: &[u8], csv: bool) -> Result<PathBuf> {
        let path = self.run.dir.join(&self.sub).join(name);
        fs::write(&path, bytes).map_err(|e| io_context(e, &path))?;
        let rows = csv.then(|| bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1));
        self.manifest.files.push(FileEntry {
            path: format!("{}/{name}", self.sub),
            rows,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    fn finish(self) -> Result<Manifest> {
        let path = self.run.dir.join(&self.sub).join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)
            .map_err(|e| Error::validation(format!("serializing manifest: {e}")))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| io_context(e, &path))?;
        Ok(self.manifest)
    }
}

fn read_file(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::validation(format!("missing {what} {}: {e}", path.display()))
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)
        .map_err(|e| Error::validation(format!("serializing JSON: {e}")))?;
    b.push(b'\n');
    Ok(b)
}

fn with_location(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{} {location}", path.display()),
            message,
        },
        other => other,
    }
}

pub fn load_network(path: &Path) -> Result<MdnNetwork> {
    load_weights(&read_file(path, "weight file")?).map_err(|e| with_location(e, path))
}

pub fn load_vmid(path: &Path) -> Result<VMidRule> {
    let rule: VMidRule = serde_json::from_slice(&read_file(path, "v_mid file")?)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    rule.validate()?;
    Ok(rule)
}

/// Writes `data/iv.csv` and `data/switching.csv`.
pub fn cmd_generate(run: &Run) -> Result<Manifest> {
    let cfg = &run.config;
    let data = generate_dataset(&cfg.ground_truth, &cfg.protocol, run.seed)?;
    let mut stage = run.stage("data", "generate")?;
    let mut buf = Vec::new();
    write_iv_csv(&mut buf, &data.iv)?;
    stage.put("iv.csv", &buf, true)?;
    let mut buf = Vec::new();
    write_switching_csv(&mut buf, &data.switching)?;
    stage.put("switching.csv", &buf, true)?;
    stage.finish()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub manifest: Manifest,
    pub network: MdnNetwork,
    pub loss_history: Vec<f64>,
}

/// Trains one variant; writes `weights.json`, `loss.csv` and, for the I-V
/// variant, the fitted `vmid.json`.
pub fn cmd_train(run: &Run, variant: Variant, data: Option<&Path>) -> Result<TrainOutcome> {
    let cfg = &run.config;
    let (set, net_cfg, train_cfg, rule): (TrainingSet, _, _, _) = match variant {
        Variant::Iv => {
            let path = data.map(Path::to_path_buf).unwrap_or_else(|| run.iv_data_path());
            let records = read_iv_csv(&read_file(&path, "dataset")?[..])
                .map_err(|e| with_location(e, &path))?;
            let rule = VMidRule::from_records(&records)?;
            (iv_training_set(&records), &cfg.network, &cfg.train, Some(rule))
        }
        Variant::Switching => {
            let path = data.map(Path::to_path_buf).unwrap_or_else(|| run.switching_data_path());
            let records = read_switching_csv(&read_file(&path, "dataset")?[..])
                .map_err(|e| with_location(e, &path))?;
            (switching_training_set(&records), &cfg.switching_network, &cfg.train_switching, None)
        }
    };
    let shape = NetworkShape::new(set.dim(), net_cfg.hidden_sizes.clone(), net_cfg.k);
    let tag = variant.name();
    let net = init_network(shape, &set, net_cfg.target_scale, stage_seed(run.seed, &format!("init-{tag}")))?;
    let train_cfg = TrainConfig {
        rng_seed: stage_seed(run.seed, &format!("train-{tag}")),
        ..train_cfg.clone()
    };
    let report = crate::network::train(net, &set, &train_cfg)?;

    let mut stage = run.stage(&format!("train/{tag}"), &format!("train {tag}"))?;
    stage.put("weights.json", &save_weights(&report.network)?, false)?;
    let mut loss = String::from("epoch,gnll\n");
    for (i, l) in report.loss_history.iter().enumerate() {
        loss.push_str(&format!("{},{l:?}\n", i + 1));
    }
    stage.put("loss.csv", loss.as_bytes(), true)?;
    if let Some(rule) = rule {
        stage.put("vmid.json", &to_json(&rule)?, false)?;
    }
    Ok(TrainOutcome {
        manifest: stage.finish()?,
        network: report.network,
        loss_history: report.loss_history,
    })
}

/// Coverage of held-out switching currents by the predicted mean ± 2 sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub i_b: f64,
    pub state: DeviceState,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub enum EvalOutcome {
    Iv {
        manifest: Manifest,
        vs_empirical: EvalSummary,
        vs_truth: EvalSummary,
    },
    Switching {
        manifest: Manifest,
        coverage: Vec<CoverageRow>,
    },
}

/// Two-sigma coverage of `records` by the switching model, per bias level
/// and state, in the order of `bias_levels`.
pub fn switching_coverage(
    net: &MdnNetwork,
    records: &[crate::device::SwitchRecord],
    bias_levels: &[f64],
) -> Result<Vec<CoverageRow>> {
    let mut rows = Vec::new();
    for &i_b in bias_levels {
        for state in [DeviceState::Superconducting, DeviceState::Resistive] {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.i_b == i_b && r.state == state)
                .map(|r| r.i_switch)
                .collect();
            if values.is_empty() {
                continue;
            }
            let p = switching_model_predict(net, i_b, state)?.params;
            let (mean, sd) = (p.mean(), p.std_dev());
            let inside = values.iter().filter(|v| (**v - mean).abs() <= 2.0 * sd).count();
            rows.push(CoverageRow {
                i_b,
                state,
                n: values.len(),
                mean,
                sd,
                coverage: inside as f64 / values.len() as f64,
            });
        }
    }
    Ok(rows)
}

/// I-V: switching curves, distribution tables and summaries against the
/// empirical curves and the ground-truth law. Switching: two-sigma coverage
/// on a freshly generated held-out dataset.
pub fn cmd_eval(
    run: &Run,
    variant: Variant,
    weights: Option<&Path>,
    data: Option<&Path>,
) -> Result<EvalOutcome> {
    let cfg = &run.config;
    let wpath = weights.map(Path::to_path_buf).unwrap_or_else(|| run.weights_path(variant));
    let net = load_network(&wpath)?;
    match variant {
        Variant::Iv => {
            let rule = load_vmid(&run.vmid_path())?;
            let path = data.map(Path::to_path_buf).unwrap_or_else(|| run.iv_data_path());
            let records = read_iv_csv(&read_file(&path, "dataset")?[..])
                .map_err(|e| with_location(e, &path))?;
            let table = score_switching(
                &net,
                &records,
                &cfg.ground_truth,
                &rule,
                &cfg.protocol.bias_levels,
                &cfg.eval.grid,
            )?;
            let vs_empirical = table.summary_vs_empirical()?;
            let vs_truth = table.summary_vs_truth()?;
            let mut points = Vec::new();
            for &i_b in &cfg.protocol.bias_levels {
                points.extend(distribution_report(&net, &records, &cfg.eval.distribution_i_g, i_b)?);
            }
            let mut stage = run.stage("eval/iv", "eval iv")?;
            let mut buf = Vec::new();
            write_curves_csv(&mut buf, &table)?;
            stage.put("curves.csv", &buf, true)?;
            let mut buf = Vec::new();
            write_distribution_csv(&mut buf, &points)?;
            stage.put("distribution.csv", &buf, true)?;
            stage.put("summary.json", &vs_empirical.to_json()?, false)?;
            stage.put("summary_ground_truth.json", &vs_truth.to_json()?, false)?;
            Ok(EvalOutcome::Iv {
                manifest: stage.finish()?,
                vs_empirical,
                vs_truth,
            })
        }
        Variant::Switching => {
            let held_out = generate_dataset(
                &cfg.ground_truth,
                &cfg.protocol,
                stage_seed(run.seed, "holdout"),
            )?;
            let coverage = switching_coverage(&net, &held_out.switching, &cfg.protocol.bias_levels)?;
            let mut stage = run.stage("eval/switching", "eval switching")?;
            let mut csv = String::from("i_b_uA,state,n,mean_uA,sd_uA,coverage\n");
            for r in &coverage {
                csv.push_str(&format!(
                    "{:?},{},{},{:?},{:?},{:?}\n",
                    r.i_b,
                    r.state.code(),
                    r.n,
                    r.mean,
                    r.sd,
                    r.coverage
                ));
            }
            stage.put("coverage.csv", csv.as_bytes(), true)?;
            Ok(EvalOutcome::Switching {
                manifest: stage.finish()?,
                coverage,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransientOutcome {
    pub manifest: Manifest,
    /// `(file stem, trace)` in the order written.
    pub traces: Vec<(String, TransientTrace)>,
}

/// Replays a drive (the configured triangular one unless a waveform CSV is
/// given) at each fixed quantile, then under held and fresh quantile
/// policies with the configured clip bounds.
pub fn cmd_transient(
    run: &Run,
    weights: Option<&Path>,
    waveform: Option<&Path>,
) -> Result<TransientOutcome> {
    let cfg = &run.config;
    let t = &cfg.transient;
    let wpath = weights.map(Path::to_path_buf).unwrap_or_else(|| run.weights_path(Variant::Iv));
    let net = load_network(&wpath)?;
    let rule = load_vmid(&run.vmid_path())?;
    let drive: DriveWaveform = match waveform {
        Some(p) => read_waveform_csv(&read_file(p, "waveform")?[..]).map_err(|e| with_location(e, p))?,
        None => triangular_drive(t.i_g_max, t.i_b, t.periods, t.points_per_ramp, t.dt)?,
    };
    let mut stage = run.stage("transient", "transient")?;
    let mut buf = Vec::new();
    write_waveform_csv(&mut buf, &drive)?;
    stage.put("waveform.csv", &buf, true)?;

    let mut runs: Vec<(String, QuantilePolicy)> = t
        .quantiles
        .iter()
        .map(|&q| (format!("trace_q{q}"), QuantilePolicy::fixed(q)))
        .collect();
    let (lo, hi) = (cfg.policy.clip_low, cfg.policy.clip_high);
    runs.push(("trace_held".into(), QuantilePolicy::held(lo, hi)));
    runs.push(("trace_fresh".into(), QuantilePolicy::fresh(lo, hi)));

    let mut traces = Vec::new();
    for (name, policy) in runs {
        let seed = stage_seed(run.seed, &format!("transient-{name}"));
        let trace = transient_simulate(&net, &drive, &policy, &rule, t.designated, t.initial_state, seed)?;
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace)?;
        stage.put(&format!("{name}.csv"), &buf, true)?;
        traces.push((name, trace));
    }
    Ok(TransientOutcome {
        manifest: stage.finish()?,
        traces,
    })
}

#[derive(Debug, Clone)]
pub struct ExportOutcome {
    pub manifest: Manifest,
    pub path: PathBuf,
    pub max_deviation: f64,
}

/// Emits the I-V model as Verilog-A after checking it against the native
/// pipeline; nothing is written when the check fails.
pub fn cmd_export(run: &Run, weights: Option<&Path>) -> Result<ExportOutcome> {
    let cfg = &run.config;
    let e = &cfg.export;
    let wpath = weights.map(Path::to_path_buf).unwrap_or_else(|| run.weights_path(Variant::Iv));
    let net = load_network(&wpath)?;
    let rule = load_vmid(&run.vmid_path())?;
    let mut bundle = ExportBundle::new(net, cfg.policy.clone(), rule, e.module_name.clone())?;
    bundle.seed = run.seed;
    bundle.designated = cfg.transient.designated;
    bundle.gate_resistance = e.gate_resistance;
    bundle.limits = e.limits.clone();
    bundle.validate()?;
    let (text, report) = export_verified(&bundle, e.cases, stage_seed(run.seed, "export"), e.tolerance)?;
    let mut stage = run.stage("export", "export")?;
    let path = stage.put(&format!("{}.va", e.module_name), text.as_bytes(), false)?;
    #[derive(Serialize)]
    struct Equivalence {
        cases: usize,
        max_deviation: f64,
        tolerance: f64,
    }
    stage.put(
        "equivalence.json",
        &to_json(&Equivalence {
            cases: report.cases,
            max_deviation: report.max_deviation,
            tolerance: e.tolerance,
        })?,
        false,
    )?;
    Ok(ExportOutcome {
        manifest: stage.finish()?,
        path,
        max_deviation: report.max_deviation,
    })
}
