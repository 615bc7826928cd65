use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod config;

use config::{DatasetConfig, GanConfig, HnnConfig, SimulationOutput, CONFIG_VERSION};
use hamogen::dataset::{generate_dataset, load_dataset};
use hamogen::eval::{
    energy_report, latent_cyclic_report, motion_manifold, rollout_error, write_csv, EnergyReport,
    DEFAULT_VARIANCE_FRACTION, REPORT_SCHEMA_VERSION,
};
use hamogen::config_map::gaussian_vector;
use hamogen::cyclic::{effective_dimension, DEFAULT_THRESHOLD};
use hamogen::hgan::{load_gan, save_gan, GanModel, GanTrainer, StepMetrics, GAN_MODEL_FILE};
use hamogen::hnn::{load_hnn, save_hnn, train_hnn_from, HnnData, LearnedHamiltonian, HNN_METADATA_FILE};
use hamogen::integrators::{rollout, IntegratorConfig, Scheme, DEFAULT_DT};
use hamogen::systems::{sample_initial, AnalyticSystem, InitSampler, SystemKind, SystemSpec};
use hamogen::{HamiltonianField, PhaseState, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

#[derive(Parser)]
#[command(name = "hamogen", version, about = "Hamiltonian generative dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Leapfrog,
    Euler,
    Rk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Leapfrog => Scheme::Leapfrog,
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Rk4 => Scheme::Rk4,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an analytic system and write the trajectory with its energy report.
    Simulate {
        #[arg(long)]
        system: SystemKind,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = 512)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "leapfrog")]
        scheme: SchemeArg,
        /// Physical parameter override, e.g. `--param g=9.81`.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a video dataset.
    Dataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a Hamiltonian network to a dataset directory or a simulated trajectory file.
    TrainHnn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full adversarial pipeline on a dataset directory.
    TrainHgan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate one video from an adversarial checkpoint.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy, cyclic-coordinate, manifold and rollout-error reports for a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1024)]
        samples: usize,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s}"))?;
    let value: f64 = value.parse().map_err(|e| format!("{name}: {e}"))?;
    Ok((name.to_string(), value))
}

/// Invalid input exits with 2, failures while running with 1.
enum Failure {
    Usage(String),
    Runtime(hamogen::Error),
}

impl From<hamogen::Error> for Failure {
    fn from(e: hamogen::Error) -> Self {
        match e {
            hamogen::Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("{}", serde_json::json!({"error": "usage", "message": message}));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}", serde_json::json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(value) = std::env::var("HAMOGEN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("HAMOGEN_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate {
            system,
            dt,
            steps,
            seed,
            scheme,
            params,
            out,
        } => simulate(system, dt, steps, seed, scheme.into(), params, &out),
        Command::Dataset { config, out } => dataset(&config, &out),
        Command::TrainHnn { data, config, out } => train_hnn_cmd(&data, &config, &out),
        Command::TrainHgan { data, config, out } => train_hgan_cmd(&data, &config, &out),
        Command::Rollout {
            ckpt,
            seed,
            frames,
            out,
        } => rollout_cmd(&ckpt, seed, frames, &out),
        Command::Eval {
            ckpt,
            data,
            report,
            seed,
            samples,
        } => eval_cmd(&ckpt, data.as_deref(), &report, seed, samples),
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == CONFIG_VERSION as u64 => {}
        other => {
            return Err(Failure::Usage(format!(
                "{}: expected \"version\": {CONFIG_VERSION}, found {other:?}",
                path.display()
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn simulate(
    kind: SystemKind,
    dt: f64,
    steps: usize,
    seed: u64,
    scheme: Scheme,
    params: Vec<(String, f64)>,
    out: &Path,
) -> Outcome {
    let spec = SystemSpec::new(kind, params.into_iter().collect::<BTreeMap<_, _>>())?;
    let cfg = IntegratorConfig {
        dt,
        n_steps: steps,
        scheme,
    };
    cfg.validate()?;
    let system = AnalyticSystem::new(spec.clone());
    let s0 = sample_initial(&spec, &InitSampler::new(seed))?;
    let traj = rollout(&system, &s0, &cfg)?;
    let energy = energy_report(&system, &traj)?;
    write_json(
        out,
        &SimulationOutput {
            version: CONFIG_VERSION,
            system: spec,
            seed,
            integrator: cfg,
            trajectory: traj,
            energy,
        },
    )
}

fn dataset(config: &Path, out: &Path) -> Outcome {
    let cfg: DatasetConfig = read_config(config)?;
    cfg.dataset.validate()?;
    let ds = generate_dataset(&cfg.dataset, out)?;
    write_json(&out.join(RESOLVED_CONFIG_FILE), &cfg)?;
    println!(
        "{}",
        serde_json::json!({"trajectories": ds.manifest.completed, "failed": ds.manifest.failed, "out": out})
    );
    Ok(())
}

/// Latent trajectories and their analytic system, from a dataset directory
/// or a `simulate` output file.
fn load_trajectories(data: &Path) -> Outcome<(SystemSpec, Vec<Trajectory>)> {
    if data.is_dir() {
        let ds = load_dataset(data)?;
        let spec = ds.spec();
        let trajs = ds
            .entries()
            .map(|e| {
                let system = AnalyticSystem::new(SystemSpec::new(spec.system.kind, e.params.clone())?);
                rollout(&system, &e.initial_state, &IntegratorConfig::leapfrog(spec.dt, spec.frames - 1))
            })
            .collect::<hamogen::Result<Vec<_>>>()?;
        Ok((spec.system.clone(), trajs))
    } else {
        let sim: SimulationOutput = serde_json::from_slice(&fs::read(data)?)?;
        Ok((sim.system, vec![sim.trajectory]))
    }
}

fn train_hnn_cmd(data: &Path, config: &Path, out: &Path) -> Outcome {
    let cfg: HnnConfig = read_config(config)?;
    cfg.train.validate()?;
    let (spec, trajs) = load_trajectories(data)?;
    let model = LearnedHamiltonian::with_architecture(spec.phase_dim(), &cfg.train.hidden, cfg.train.activation, cfg.train.seed)?;
    let trained = train_hnn_from(model, &HnnData::Trajectories(trajs), &cfg.train)?;
    fs::create_dir_all(out)?;
    save_hnn(out, &trained.model, &cfg.train)?;
    let steps: Vec<f64> = (0..trained.loss_history.len()).map(|i| i as f64).collect();
    write_csv(&out.join("loss.csv"), &["step", "loss"], &[&steps, &trained.loss_history])?;
    write_json(&out.join(RESOLVED_CONFIG_FILE), &cfg)?;
    println!(
        "{}",
        serde_json::json!({"steps": trained.loss_history.len(), "final_loss": trained.loss_history.last()})
    );
    Ok(())
}

fn export_sample(model: &GanModel, seed: u64, frames: usize, dir: &Path, stem: &str) -> Outcome<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_c = gaussian_vector(&mut rng, model.arch.content_dim);
    let z_m = gaussian_vector(&mut rng, model.arch.motion_dim);
    let video = model.generate_video(&z_c, &z_m, frames)?;
    fs::create_dir_all(dir)?;
    video.frames.write(&dir.join(format!("{stem}.hgf")))?;
    video.frames.export_png_strip(&dir.join(format!("{stem}.png")))?;
    Ok(video.latents)
}

fn train_hgan_cmd(data: &Path, config: &Path, out: &Path) -> Outcome {
    let cfg: GanConfig = read_config(config)?;
    cfg.arch.validate()?;
    cfg.train.validate(&cfg.arch)?;
    let videos = load_dataset(data)?.load_all()?;
    let mut model = GanModel::new(cfg.arch.clone(), cfg.model_seed)?;
    if let Some(dir) = &cfg.init_hnn {
        model = model.with_hamiltonian(load_hnn(dir)?.0)?;
    }
    fs::create_dir_all(out)?;
    write_json(&out.join(RESOLVED_CONFIG_FILE), &cfg)?;
    let mut trainer = GanTrainer::new(model, &videos, cfg.train.clone())?;
    let mut history: Vec<StepMetrics> = Vec::with_capacity(cfg.train.steps);
    let samples = out.join("samples");
    for step in 0..cfg.train.steps {
        let m = trainer.train_step()?;
        history.push(m);
        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            println!("{}", serde_json::to_string(&m)?);
        }
        if cfg.sample_every > 0 && (step + 1) % cfg.sample_every == 0 {
            export_sample(&trainer.model, cfg.train.seed, cfg.train.n_frames, &samples, &format!("step_{:05}", step + 1))?;
        }
    }
    let model = trainer.into_model();
    save_gan(out, &model)?;
    export_sample(&model, cfg.train.seed, cfg.train.n_frames, &samples, "final")?;
    let col = |f: fn(&StepMetrics) -> f64| history.iter().map(f).collect::<Vec<f64>>();
    write_csv(
        &out.join("metrics.csv"),
        &["step", "d_loss", "g_loss", "g_adv", "cyclic_term", "d_real_acc", "d_fake_acc"],
        &[
            &col(|m| m.step as f64),
            &col(|m| m.d_loss),
            &col(|m| m.g_loss),
            &col(|m| m.g_adv),
            &col(|m| m.cyclic_term),
            &col(|m| m.d_real_acc),
            &col(|m| m.d_fake_acc),
        ],
    )?;
    Ok(())
}

fn rollout_cmd(ckpt: &Path, seed: u64, frames: usize, out: &Path) -> Outcome {
    if frames == 0 {
        return Err(Failure::Usage("--frames must be at least 1".into()));
    }
    let model = load_gan(ckpt)?;
    let latents = export_sample(&model, seed, frames, out, "video")?;
    let energy = energy_report(&model.hamiltonian, &latents)?;
    write_json(
        &out.join("latents.json"),
        &serde_json::json!({
            "version": REPORT_SCHEMA_VERSION,
            "seed": seed,
            "trajectory": latents,
            "energy": energy,
        }),
    )
}

#[derive(Serialize)]
struct EnergySummary {
    trajectories: usize,
    max_rel_drift: f64,
    mean_rel_drift: f64,
}

fn summarize(reports: &[EnergyReport]) -> EnergySummary {
    let drifts: Vec<f64> = reports.iter().map(|r| r.max_rel_drift).collect();
    EnergySummary {
        trajectories: drifts.len(),
        max_rel_drift: drifts.iter().copied().fold(0.0, f64::max),
        mean_rel_drift: drifts.iter().sum::<f64>() / drifts.len().max(1) as f64,
    }
}

fn eval_cmd(ckpt: &Path, data: Option<&Path>, report: &Path, seed: u64, samples: usize) -> Outcome {
    if samples < 2 {
        return Err(Failure::Usage("--samples must be at least 2".into()));
    }
    let value = if ckpt.join(GAN_MODEL_FILE).exists() {
        let model = load_gan(ckpt)?;
        let frames = model.arch.window.max(16);
        let cyclic = latent_cyclic_report(&model, samples.min(256), frames, seed, DEFAULT_THRESHOLD)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let energies = (0..samples.min(256))
            .map(|_| {
                let tr = model.latent_rollout(&gaussian_vector(&mut rng, model.arch.motion_dim), frames)?;
                energy_report(&model.hamiltonian, &tr)
            })
            .collect::<hamogen::Result<Vec<_>>>()?;
        let manifold = motion_manifold(&model, samples, seed, DEFAULT_VARIANCE_FRACTION)?;
        let dataset = match data {
            Some(d) => Some(load_dataset(d)?.manifest.spec),
            None => None,
        };
        serde_json::json!({
            "version": REPORT_SCHEMA_VERSION,
            "kind": "hgan",
            "dataset": dataset,
            "energy": summarize(&energies),
            "cyclic": cyclic,
            "manifold": manifold,
        })
    } else if ckpt.join(HNN_METADATA_FILE).exists() {
        let (model, meta) = load_hnn(ckpt)?;
        let data = data.ok_or_else(|| {
            Failure::Usage("evaluating a Hamiltonian checkpoint needs --data for the reference system".into())
        })?;
        let (spec, trajs) = load_trajectories(data)?;
        if spec.phase_dim() != model.k() {
            return Err(Failure::Runtime(hamogen::Error::Shape(format!(
                "checkpoint has k = {}, data has k = {}",
                model.k(),
                spec.phase_dim()
            ))));
        }
        let truth = AnalyticSystem::new(spec.clone());
        let starts: Vec<&PhaseState> = trajs.iter().filter_map(|t| t.first()).take(samples.min(64)).collect();
        let steps = trajs.first().map_or(1, |t| t.len().max(2) - 1);
        let cfg = IntegratorConfig::leapfrog(meta.dt, steps);
        let learned = starts.iter().map(|s| rollout(&model, s, &cfg)).collect::<hamogen::Result<Vec<_>>>()?;
        let energies = learned
            .iter()
            .map(|t| energy_report(&model, t))
            .collect::<hamogen::Result<Vec<_>>>()?;
        let curves = starts
            .iter()
            .map(|s| rollout_error(&model, &truth, s, &cfg))
            .collect::<hamogen::Result<Vec<_>>>()?;
        let mean_curve: Vec<f64> = (0..=steps)
            .map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / curves.len().max(1) as f64)
            .collect();
        let cyclic = effective_dimension(&learned, &model as &dyn HamiltonianField, DEFAULT_THRESHOLD)?;
        if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let csv = report.with_extension("rollout_error.csv");
        let steps_col: Vec<f64> = (0..mean_curve.len()).map(|j| j as f64).collect();
        write_csv(&csv, &["step", "mean_l2_error"], &[&steps_col, &mean_curve])?;
        serde_json::json!({
            "version": REPORT_SCHEMA_VERSION,
            "kind": "hnn",
            "system": spec,
            "energy": summarize(&energies),
            "cyclic": cyclic,
            "rollout_error": {"mean_per_step": mean_curve, "csv": csv},
        })
    } else {
        return Err(Failure::Usage(format!(
            "{} holds neither {GAN_MODEL_FILE} nor {HNN_METADATA_FILE}",
            ckpt.display()
        )));
    };
    write_json(report, &value)
}
