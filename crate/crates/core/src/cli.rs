//! Command-line front end. Every command writes its artifacts into the
//! output directory and merges its fully resolved configuration into
//! `meta.json` there, keyed by command name.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::alignment::{align, default_layers_per_target, transfer_model, AlignConfig, AlignGradient, AlignedCircuitSet, AlignmentProblem};
use crate::circuit::LayerTemplate;
use crate::encoding::{EncodingSpec, DEFAULT_BASE};
use crate::error::{invalid, Result};
use crate::rl::{align_rl_blocks, dqn_train, write_episodes_csv, Agent, AgentKind, DqnConfig};
use crate::softu::{train_soft, PenaltyForm, SoftUnitaryModel, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE};
use crate::tasks::{
    evaluate_model, make_tophat_dataset, mean_bce, mean_squared_difference, scaling_report, train_vqc_direct, write_grid_csv,
    GridRow, Predictor, Sample, ScalingConfig, TopHat, VqcBaseline, VqcTrainConfig,
};

pub const OUT_ENV: &str = "SOFTQ_OUT";
pub const DEFAULT_OUT: &str = "softq-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const SOFT_MODEL_FILE: &str = "soft_model.json";
pub const ALIGNED_FILE: &str = "aligned_circuits.json";
pub const VQC_MODEL_FILE: &str = "vqc_model.json";
pub const META_FILE: &str = "meta.json";

#[derive(Parser, Debug)]
#[command(name = "softq", version, about = "Soft-unitary training, circuit alignment and cartpole experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a soft-unitary model on the top-hat task.
    TrainSoft(TrainSoftArgs),
    /// Compile every block of a trained soft model into a gate circuit.
    Align(AlignArgs),
    /// Train the gate-based baseline directly on the top-hat task.
    VqcBaseline(VqcArgs),
    /// Evaluate saved models on a uniform grid.
    Eval(EvalArgs),
    /// Time the training stages against dataset size and gate count.
    Scaling(ScalingArgs),
    /// Train a DQN agent on cartpole.
    Rl(RlArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Three qubits and 200 points; minutes on one core.
    Desk,
    /// Five qubits and 1000 points.
    Paper,
}

impl Profile {
    pub fn n_qubits(self) -> usize {
        match self {
            Profile::Desk => 3,
            Profile::Paper => 5,
        }
    }

    pub fn datapoints(self) -> usize {
        match self {
            Profile::Desk => 200,
            Profile::Paper => 1000,
        }
    }
}

pub const DEFAULT_BLOCKS: usize = 4;
pub const DEFAULT_VQC_LAYERS: usize = 10;
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $SOFTQ_OUT, else ./softq-out).
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PenaltyArg {
    Norm,
    Squared,
}

impl From<PenaltyArg> for PenaltyForm {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Norm => PenaltyForm::Norm,
            PenaltyArg::Squared => PenaltyForm::Squared,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TemplateArg {
    Basic,
    Rot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GradientArg {
    Adjoint,
    ParameterShift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    Classical,
    Hybrid,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    datapoints: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BLOCKS)]
    blocks: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Mini-batch size; 0 trains full-batch.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
}

#[derive(Args, Debug)]
struct TrainSoftArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = 1000.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "squared")]
    penalty: PenaltyArg,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[command(flatten)]
    common: Common,
    /// Soft model to compile (default: <out>/soft_model.json).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    layers_per_target: Option<usize>,
    #[arg(long, value_enum, default_value = "rot")]
    template: TemplateArg,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum, default_value = "adjoint")]
    gradient: GradientArg,
}

#[derive(Args, Debug)]
struct VqcArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Basic entangling layers per variational block.
    #[arg(long, default_value_t = DEFAULT_VQC_LAYERS)]
    layers: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Soft model (default: <out>/soft_model.json when present).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Aligned circuits (default: <out>/aligned_circuits.json when present).
    #[arg(long)]
    aligned: Option<PathBuf>,
    /// Baseline model (default: <out>/vqc_model.json when present).
    #[arg(long)]
    vqc: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[command(flatten)]
    common: Common,
    /// Epochs timed per measurement.
    #[arg(long, default_value_t = 30)]
    epochs: usize,
}

#[derive(Args, Debug)]
struct RlArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "hybrid")]
    agent: AgentArg,
    #[arg(long, default_value_t = 340)]
    episodes: usize,
    #[arg(long, default_value_t = 1000.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "squared")]
    penalty: PenaltyArg,
    /// Compile the hybrid agent's quantum blocks after training.
    #[arg(long)]
    align: bool,
    #[arg(long)]
    layers_per_target: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::TrainSoft(a) => cmd_train_soft(a),
        Command::Align(a) => cmd_align(a),
        Command::VqcBaseline(a) => cmd_vqc(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::Rl(a) => cmd_rl(a),
    }
}

/// Files are written only after every computation succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn json<T: Serialize>(&mut self, name: &'static str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name, bytes));
        Ok(())
    }

    fn csv(&mut self, name: &'static str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        self.files.push((name, bytes));
        Ok(())
    }

    fn commit(self, command: &str, meta: Value) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
        }
        let meta_path = self.dir.join(META_FILE);
        let mut all = match fs::read(&meta_path) {
            Ok(bytes) => serde_json::from_slice::<Value>(&bytes).unwrap_or_else(|_| json!({})),
            Err(_) => json!({}),
        };
        if !all.is_object() {
            all = json!({});
        }
        all[command] = meta;
        let mut bytes = serde_json::to_vec_pretty(&all)?;
        bytes.push(b'\n');
        write_atomic(&meta_path, &bytes)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn base_meta(command: &str, common: &Common) -> Value {
    json!({
        "command": command,
        "profile": common.profile,
        "seed": common.seed,
        "out": common.out,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn batch(size: usize) -> Option<usize> {
    (size > 0).then_some(size)
}

fn dataset_csv(points: &[Sample], out: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train_soft(a: TrainSoftArgs) -> Result<()> {
    let c = &a.common;
    let n = a.data.qubits.unwrap_or(c.profile.n_qubits());
    let d = a.data.datapoints.unwrap_or(c.profile.datapoints());
    let shape = TopHat::default();
    let data = make_tophat_dataset(d, shape, c.seed)?;
    let encoder = EncodingSpec::exponential(n, DEFAULT_BASE)?;
    let init = SoftUnitaryModel::random(n, a.data.blocks, encoder, c.seed)?;
    let config = TrainConfig {
        epochs: a.data.epochs,
        learning_rate: a.lr,
        lambda: a.lambda,
        penalty: a.penalty.into(),
        batch_size: batch(a.data.batch_size),
        seed: c.seed,
        ..Default::default()
    };
    let (model, history) = train_soft(&init, &data.points, &config)?;
    let mut out = Outputs::new(&c.out);
    out.json(SOFT_MODEL_FILE, &model)?;
    out.csv("history_soft.csv", |w| history.write_csv(w))?;
    out.csv("dataset.csv", |w| dataset_csv(&data.points, w))?;
    let mut meta = base_meta("train-soft", c);
    meta["config"] = json!({
        "n_qubits": n, "datapoints": d, "n_blocks": a.data.blocks, "top_hat": shape,
        "encoder": model.encoder(), "observable": model.observable(), "train": config,
    });
    meta["metrics"] = json!({
        "final_task_loss": history.last().map(|r| r.task_loss),
        "final_total_loss": history.last().map(|r| r.total_loss),
        "final_max_udev": model.max_unitarity_deviation(),
    });
    out.commit("train_soft", meta)
}

fn cmd_align(a: AlignArgs) -> Result<()> {
    let c = &a.common;
    let model_path = a.model.clone().unwrap_or_else(|| c.out.join(SOFT_MODEL_FILE));
    let soft: SoftUnitaryModel = read_json(&model_path)?;
    let n = soft.n_qubits();
    let defaults = AlignConfig::for_qubits(n);
    let config = AlignConfig {
        layers_per_target: a.layers_per_target.unwrap_or(default_layers_per_target(n)),
        template: match a.template {
            TemplateArg::Basic => LayerTemplate::Basic,
            TemplateArg::Rot => LayerTemplate::Rot,
        },
        epochs: a.epochs,
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: c.seed,
        gradient: match a.gradient {
            GradientArg::Adjoint => AlignGradient::Adjoint,
            GradientArg::ParameterShift => AlignGradient::ParameterShift,
        },
    };
    let set = align(&AlignmentProblem::new(soft.blocks().to_vec(), n, config.clone())?)?;
    let mut out = Outputs::new(&c.out);
    out.json(ALIGNED_FILE, &set)?;
    out.csv("history_align.csv", |w| set.write_history_csv(w))?;
    let mut meta = base_meta("align", c);
    meta["config"] = json!({ "model": model_path, "align": config });
    meta["metrics"] = json!({
        "initial_loss": set.history.first().map(|r| r.loss),
        "final_loss": set.loss(),
        "phase_invariant_loss": set.phase_invariant_loss(),
        "distances": set.distances(),
    });
    out.commit("align", meta)
}

fn cmd_vqc(a: VqcArgs) -> Result<()> {
    let c = &a.common;
    let n = a.data.qubits.unwrap_or(c.profile.n_qubits());
    let d = a.data.datapoints.unwrap_or(c.profile.datapoints());
    let shape = TopHat::default();
    let data = make_tophat_dataset(d, shape, c.seed)?;
    let encoder = EncodingSpec::exponential(n, DEFAULT_BASE)?;
    let init = VqcBaseline::random(n, a.data.blocks, a.layers, encoder, c.seed)?;
    let config = VqcTrainConfig { epochs: a.data.epochs, learning_rate: a.lr, batch_size: batch(a.data.batch_size), seed: c.seed };
    let (model, history) = train_vqc_direct(&init, &data.points, &config)?;
    let mut out = Outputs::new(&c.out);
    out.json(VQC_MODEL_FILE, &model)?;
    out.csv("history_vqc.csv", |w| history.write_csv(w))?;
    let mut meta = base_meta("vqc-baseline", c);
    meta["config"] = json!({
        "n_qubits": n, "datapoints": d, "n_blocks": a.data.blocks, "layers_per_block": a.layers,
        "top_hat": shape, "encoder": model.encoder, "train": config,
    });
    meta["metrics"] = json!({ "final_task_loss": history.last().map(|r| r.task_loss) });
    out.commit("vqc_baseline", meta)
}

fn optional_input(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> Result<Option<PathBuf>> {
    match explicit {
        Some(p) if p.exists() => Ok(Some(p.clone())),
        Some(p) => Err(invalid(format!("input {} does not exist", p.display()))),
        None => Ok(Some(dir.join(name)).filter(|p| p.exists())),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let c = &a.common;
    let soft_path = optional_input(&a.model, &c.out, SOFT_MODEL_FILE)?;
    let aligned_path = optional_input(&a.aligned, &c.out, ALIGNED_FILE)?;
    let vqc_path = optional_input(&a.vqc, &c.out, VQC_MODEL_FILE)?;
    if soft_path.is_none() && vqc_path.is_none() {
        return Err(invalid("nothing to evaluate: no soft model or baseline found"));
    }
    if aligned_path.is_some() && soft_path.is_none() {
        return Err(invalid("aligned circuits need the soft model they were compiled from"));
    }
    let soft: Option<SoftUnitaryModel> = soft_path.as_deref().map(read_json).transpose()?;
    let aligned = match (&soft, aligned_path.as_deref()) {
        (Some(s), Some(p)) => Some(transfer_model(s, &read_json::<AlignedCircuitSet>(p)?)?),
        _ => None,
    };
    let vqc: Option<VqcBaseline> = vqc_path.as_deref().map(read_json).transpose()?;

    let shape = TopHat::default();
    let grid = shape.grid(a.grid_points);
    let eval = |m: Option<&dyn Predictor>| m.map(|m| evaluate_model(m, &grid)).transpose();
    let soft_out = eval(soft.as_ref().map(|m| m as &dyn Predictor))?;
    let aligned_out = eval(aligned.as_ref().map(|m| m as &dyn Predictor))?;
    let vqc_out = eval(vqc.as_ref().map(|m| m as &dyn Predictor))?;
    let rows: Vec<GridRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| GridRow {
            x,
            soft: soft_out.as_ref().map(|v| v[i].1),
            aligned: aligned_out.as_ref().map(|v| v[i].1),
            vqc: vqc_out.as_ref().map(|v| v[i].1),
            truth: shape.label(x),
        })
        .collect();
    let truth: Vec<Sample> = grid.iter().map(|&x| Sample { x, label: shape.label(x) }).collect();
    let bce = |m: Option<&dyn Predictor>| m.map(|m| mean_bce(m, &truth)).transpose();

    let mut out = Outputs::new(&c.out);
    out.csv("grid_eval.csv", |w| write_grid_csv(&rows, w))?;
    let mut meta = base_meta("eval", c);
    meta["config"] = json!({
        "model": soft_path, "aligned": aligned_path, "vqc": vqc_path, "grid_points": a.grid_points, "top_hat": shape,
    });
    meta["metrics"] = json!({
        "mse_soft_aligned": match (&soft_out, &aligned_out) {
            (Some(s), Some(al)) => Some(mean_squared_difference(s, al)),
            _ => None,
        },
        "bce_soft": bce(soft.as_ref().map(|m| m as &dyn Predictor))?,
        "bce_aligned": bce(aligned.as_ref().map(|m| m as &dyn Predictor))?,
        "bce_vqc": bce(vqc.as_ref().map(|m| m as &dyn Predictor))?,
    });
    out.commit("eval", meta)
}

fn cmd_scaling(a: ScalingArgs) -> Result<()> {
    let c = &a.common;
    let n = c.profile.n_qubits();
    let config = ScalingConfig { n_qubits: n, epochs: a.epochs, seed: c.seed, align_layers: default_layers_per_target(n), ..Default::default() };
    let report = scaling_report(&config)?;
    let mut out = Outputs::new(&c.out);
    out.csv("scaling.csv", |w| report.write_csv(w))?;
    let mut meta = base_meta("scaling", c);
    meta["config"] = json!(config);
    meta["metrics"] = json!({
        "soft_gate_spread": report.soft_gate_spread(),
        "soft_linear_fit_error": report.soft_linear_fit_error(),
        "vqc_monotone": report.vqc_monotone(),
        "align_spread": report.align_spread(),
    });
    out.commit("scaling", meta)
}

fn cmd_rl(a: RlArgs) -> Result<()> {
    let c = &a.common;
    let kind = match a.agent {
        AgentArg::Classical => AgentKind::Classical,
        AgentArg::Hybrid => AgentKind::Hybrid,
    };
    if a.align && kind != AgentKind::Hybrid {
        return Err(invalid("--align needs the hybrid agent"));
    }
    let config = DqnConfig { episodes: a.episodes, lambda: a.lambda, penalty: a.penalty.into(), seed: c.seed, ..Default::default() };
    let run = dqn_train(kind, &config)?;
    let mut out = Outputs::new(&c.out);
    out.json("agent.json", &run.agent)?;
    out.csv("episodes.csv", |w| write_episodes_csv(&run.episodes, w))?;
    let mut metrics = json!({
        "final_running_mean": run.final_running_mean(),
        "final_unitary_dev": run.agent.unitarity_deviation(),
        "max_unitary_dev": run.max_unitary_dev(),
    });
    let mut align_config = None;
    if let (true, Agent::Hybrid { network }) = (a.align, &run.agent) {
        let n = network.quantum.n_qubits();
        let cfg = AlignConfig {
            layers_per_target: a.layers_per_target.unwrap_or(default_layers_per_target(n)),
            seed: c.seed,
            ..AlignConfig::for_qubits(n)
        };
        let set = align_rl_blocks(network, cfg.clone())?;
        metrics["alignment_loss"] = json!(set.loss());
        metrics["alignment_phase_invariant_loss"] = json!(set.phase_invariant_loss());
        out.json("aligned_rl.json", &set)?;
        out.csv("history_align_rl.csv", |w| set.write_history_csv(w))?;
        align_config = Some(cfg);
    }
    let mut meta = base_meta("rl", c);
    meta["config"] = json!({ "agent": kind, "dqn": config, "align": align_config });
    meta["metrics"] = metrics;
    out.commit("rl", meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["softq", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["softq", "train-soft", "--profile", "huge"]), EXIT_USAGE);
        assert_eq!(run(["softq", "--help"]), EXIT_OK);
    }

    #[test]
    fn profiles() {
        assert_eq!((Profile::Desk.n_qubits(), Profile::Desk.datapoints()), (3, 200));
        assert_eq!((Profile::Paper.n_qubits(), Profile::Paper.datapoints()), (5, 1000));
    }
}
