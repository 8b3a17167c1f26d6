//! The `lfdeblur` command-line tool.
//!
//! Every config-backed flag carries the name of its config-file key, and
//! values resolve as defaults < `--config` file < flags. Each run writes the
//! resolved settings to `run-config.json` beside its outputs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::blur::{
    generate_dataset, load_dataset, synthesize_blur, trajectory_seeds, BlurJobConfig,
    DatasetConfig, WarpMode, DATASET_MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::json::{read_json, write_json};
use crate::lightfield::{extract_epi, load_lightfield, save_lightfield, BitDepth, EpiAxis};
use crate::metrics::evaluate_lf;
use crate::motion::{make_random_trajectory, normalize_midpoint, TrajectoryFile};
use crate::net::{
    deblur_lightfield_padded, deblur_lightfield_timed, train_from, Deblurred, NetworkConfig,
    NetworkParams, TrainConfig,
};

pub const RUN_CONFIG_FILE: &str = "run-config.json";
pub const CHECKPOINT_FILE: &str = "model.lfdb";
pub const TRAIN_LOG_FILE: &str = "train-log.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "lfdeblur",
    version,
    about = "Light field motion blur synthesis and deblurring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit random midpoint-normalized trajectory files.
    Trajgen(TrajgenArgs),
    /// Blur one sharp light field along a trajectory.
    Synth(SynthArgs),
    /// Blur every light field under a directory into a training dataset.
    Dataset(DatasetArgs),
    /// Train the deblurring network on a dataset.
    Train(TrainArgs),
    /// Deblur one light field with a trained checkpoint.
    Infer(InferArgs),
    /// Score a light field against a reference (PSNR / SSIM / RMSE).
    Eval(EvalArgs),
    /// Export an epipolar plane image as PNG.
    Epi(EpiArgs),
}

fn parse_warp_mode(s: &str) -> std::result::Result<WarpMode, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| "expected literal_eq13 or spatial_rotation".to_string())
}

fn parse_axis(s: &str) -> std::result::Result<EpiAxis, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| "expected horizontal or vertical".to_string())
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected 3 comma-separated values, got {}", p.len()))
}

#[derive(Debug, Clone, Default, Args, Serialize)]
struct BoundsFlags {
    /// Translation limits p_x,p_y (baselines) and p_z.
    #[arg(long = "bounds-translation", value_parser = parse_triple, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    translation: Option<[f64; 3]>,
    /// Rotation limits pitch,yaw,roll in radians.
    #[arg(long = "bounds-rotation", value_parser = parse_triple, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
struct BlurFlags {
    #[command(flatten)]
    bounds: BoundsFlags,
    /// Shutter time samples per exposure.
    #[arg(long = "n-t")]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_t: Option<usize>,
    #[arg(long, value_parser = parse_warp_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    warp_mode: Option<WarpMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// 8 (PNG) or 32 (raw float) output views.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bit_depth: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct TrajgenArgs {
    /// Blur job config JSON (bounds, n_t, seed, rng).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    flags: BlurFlags,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Sharp light field directory.
    #[arg(long)]
    input: PathBuf,
    /// Trajectory file; drawn from `seed` when absent.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    flags: BlurFlags,
}

#[derive(Debug, Args, Serialize)]
struct DatasetArgs {
    /// Directory of sharp light fields, or a single light field.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    motions_per_lf: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    flags: BlurFlags,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
struct TrainFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    angular_samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    color_augment: Option<bool>,
    /// Seeds both initialization and sampling.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_beta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    adam_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
struct NetFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    temporal_radius: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    base_channels: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden_channels: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_blocks: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    norm_eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    zero_init_output: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// `dataset.json`, or the directory holding it.
    #[arg(long)]
    dataset: PathBuf,
    /// Training config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network config JSON.
    #[arg(long)]
    net_config: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    train: TrainFlags,
    #[command(flatten)]
    #[serde(skip)]
    net: NetFlags,
}

#[derive(Debug, Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    bit_depth: u32,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    prediction: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EpiArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "horizontal", value_parser = parse_axis)]
    axis: EpiAxis,
    /// Pixel row (horizontal) or pixel column (vertical).
    #[arg(long)]
    line: usize,
    /// View column (horizontal) or view row (vertical); central by default.
    #[arg(long)]
    view: Option<usize>,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument { .. } | Error::Json { .. } => 1,
                _ => 2,
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Trajgen(a) => trajgen(a),
        Command::Synth(a) => synth(a),
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Epi(a) => epi(a),
    }
}

/// Recursive object merge; `top` wins.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

/// Defaults < `layers` (in order) < config file < flags.
fn resolve<T, F>(defaults: &T, layers: Vec<Value>, file: Option<&Path>, flags: &F) -> Result<T>
where
    T: Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut value = to_value(defaults);
    for layer in layers {
        merge(&mut value, layer);
    }
    if let Some(path) = file {
        let from_file: Value = read_json(path)?;
        if !from_file.is_object() {
            return Err(Error::invalid(
                "config",
                format!("{} must hold a JSON object", path.display()),
            ));
        }
        // Unknown keys must be reported, not silently dropped by the merge.
        serde_json::from_value::<T>({
            let mut probe = to_value(defaults);
            merge(&mut probe, from_file.clone());
            probe
        })
        .map_err(|e| Error::json(path, e))?;
        merge(&mut value, from_file);
    }
    merge(&mut value, to_value(flags));
    serde_json::from_value(value).map_err(|e| Error::json("command line", e))
}

#[derive(Serialize)]
struct Snapshot<'a, A: Serialize, C: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    arguments: &'a A,
    resolved: C,
}

fn write_snapshot<A: Serialize, C: Serialize>(
    dir: &Path,
    command: &str,
    arguments: &A,
    resolved: C,
) -> Result<()> {
    write_json(
        dir.join(RUN_CONFIG_FILE),
        &Snapshot {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            arguments,
            resolved,
        },
    )
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn trajgen(a: TrajgenArgs) -> Result<()> {
    let job: BlurJobConfig = resolve(
        &BlurJobConfig::default(),
        vec![],
        a.config.as_deref(),
        &a.flags,
    )?;
    job.validate()?;
    if a.count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    create_dir(&a.out)?;
    let mut files = Vec::with_capacity(a.count);
    for (i, seed) in trajectory_seeds(job.seed, a.count).into_iter().enumerate() {
        let traj = normalize_midpoint(&make_random_trajectory(seed, &job.bounds)?)?;
        let name = format!("trajectory_{i:04}.json");
        write_json(a.out.join(&name), &TrajectoryFile::new(traj, job.n_t))?;
        files.push(name);
    }
    write_snapshot(
        &a.out,
        "trajgen",
        &a,
        serde_json::json!({ "job": job, "files": files }),
    )?;
    println!("wrote {} trajectories to {}", a.count, a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let given: Option<TrajectoryFile> = a.trajectory.as_deref().map(read_json).transpose()?;
    let mut base = Map::new();
    if let Some(t) = &given {
        base.insert("n_t".into(), Value::from(t.n_t));
        base.insert("bounds".into(), to_value(&t.trajectory.bounds));
    }
    let job: BlurJobConfig = resolve(
        &BlurJobConfig::default(),
        vec![Value::Object(base)],
        a.config.as_deref(),
        &a.flags,
    )?;
    job.validate()?;
    let depth = BitDepth::from_bits(job.bit_depth)?;
    let trajectory = match given {
        Some(t) => t.trajectory,
        None => normalize_midpoint(&make_random_trajectory(
            trajectory_seeds(job.seed, 1)[0],
            &job.bounds,
        )?)?,
    };
    let lf = load_lightfield(&a.input)?;
    let pair = synthesize_blur(&lf, &trajectory, job.n_t, job.warp_mode)?;
    save_lightfield(&pair.blurred, a.out.join("blurred"), depth)?;
    save_lightfield(&pair.ground_truth, a.out.join("sharp"), depth)?;
    write_json(
        a.out.join("trajectory.json"),
        &TrajectoryFile::new(trajectory, job.n_t),
    )?;
    write_snapshot(&a.out, "synth", &a, serde_json::json!({ "job": job }))?;
    println!(
        "wrote blurred and sharp light fields to {}",
        a.out.display()
    );
    Ok(())
}

fn dataset(a: DatasetArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Flags<'a> {
        #[serde(flatten)]
        blur: &'a BlurFlags,
        #[serde(skip_serializing_if = "Option::is_none")]
        motions_per_lf: Option<usize>,
    }
    let flags = Flags {
        blur: &a.flags,
        motions_per_lf: a.motions_per_lf,
    };
    let cfg: DatasetConfig = resolve(
        &DatasetConfig::default(),
        vec![],
        a.config.as_deref(),
        &flags,
    )?;
    let manifest = generate_dataset(&a.input, &cfg, &a.out)?;
    write_snapshot(&a.out, "dataset", &a, serde_json::json!({ "dataset": cfg }))?;
    println!(
        "wrote {} pairs to {}",
        manifest.entries.len(),
        a.out.join(DATASET_MANIFEST_FILE).display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg: TrainConfig = resolve(
        &TrainConfig::default(),
        vec![],
        a.config.as_deref(),
        &a.train,
    )?;
    cfg.validate()?;
    let manifest_path = if a.dataset.is_dir() {
        a.dataset.join(DATASET_MANIFEST_FILE)
    } else {
        a.dataset.clone()
    };
    let params = match &a.init {
        Some(path) => NetworkParams::<f32>::load(path)?,
        None => {
            let mut net: NetworkConfig = resolve(
                &NetworkConfig::default(),
                vec![],
                a.net_config.as_deref(),
                &a.net,
            )?;
            if let Some(s) = a.train.seed {
                net.seed = s;
            }
            NetworkParams::<f32>::init(&net)?
        }
    };
    let (_, pairs) = load_dataset(&manifest_path)?;

    create_dir(&a.out)?;
    write_snapshot(
        &a.out,
        "train",
        &a,
        serde_json::json!({ "train": cfg, "network": params.config }),
    )?;
    let log_path = a.out.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_err = None;
    let outcome = train_from(&pairs, &cfg, params, |record| {
        let line = serde_json::to_string(record).expect("records serialize");
        if let Err(e) = writeln!(log, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e));
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    outcome.params.save(a.out.join(CHECKPOINT_FILE))?;
    if let Some(last) = outcome.log.last() {
        println!(
            "final loss {:.6} after {} iterations ({:.1}s)",
            last.loss,
            outcome.log.len(),
            last.wall_time_s
        );
    }
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let depth = BitDepth::from_bits(a.bit_depth)?;
    let params = NetworkParams::<f32>::load(&a.checkpoint)?;
    let lf = load_lightfield(&a.input)?;
    let start = Instant::now();
    let (h, w) = lf.spatial_size();
    let out = if h % 2 == 0 && w % 2 == 0 {
        deblur_lightfield_timed(&lf, &params)?
    } else {
        Deblurred {
            lightfield: deblur_lightfield_padded(&lf, &params)?,
            step_seconds: Vec::new(),
        }
    };
    let total = start.elapsed().as_secs_f64();
    save_lightfield(&out.lightfield, &a.out, depth)?;
    write_json(
        a.out.join("timing.json"),
        &serde_json::json!({ "total_seconds": total, "step_seconds": out.step_seconds }),
    )?;
    write_snapshot(
        &a.out,
        "infer",
        &a,
        serde_json::json!({ "network": params.config }),
    )?;
    println!("deblurred {} views in {total:.2}s", lf.num_views());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = load_lightfield(&a.prediction)?;
    let gt = load_lightfield(&a.reference)?;
    let report = evaluate_lf(&pred, &gt)?.with_ids(
        a.prediction.display().to_string(),
        a.reference.display().to_string(),
    );
    create_dir(&a.out)?;
    report.save_csv(a.out.join("report.csv"))?;
    write_json(a.out.join("report.json"), &report)?;
    write_snapshot(&a.out, "eval", &a, Value::Null)?;
    println!(
        "psnr {:.4} dB  ssim {:.4}  rmse {:.6}",
        report.mean.psnr, report.mean.ssim, report.mean.rmse
    );
    Ok(())
}

fn epi(a: EpiArgs) -> Result<()> {
    let lf = load_lightfield(&a.input)?;
    let (rows, cols) = lf.angular_size();
    let view = a.view.unwrap_or(match a.axis {
        EpiAxis::Horizontal => cols / 2,
        EpiAxis::Vertical => rows / 2,
    });
    let slice = extract_epi(&lf, a.axis, a.line, view)?;
    let dir = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    slice.save_png(&a.out)?;
    write_snapshot(&dir, "epi", &a, serde_json::json!({ "view": view }))?;
    println!(
        "wrote {}x{} EPI to {}",
        slice.rows,
        slice.cols,
        a.out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_recursive_and_top_wins() {
        let mut base = serde_json::json!({ "a": 1, "b": { "x": 1, "y": 2 } });
        merge(&mut base, serde_json::json!({ "b": { "y": 5 }, "c": 3 }));
        assert_eq!(
            base,
            serde_json::json!({ "a": 1, "b": { "x": 1, "y": 5 }, "c": 3 })
        );
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("job.json");
        fs::write(&path, r#"{ "n_t": 7, "seed": 3, "bounds": { "translation": [1, 1, 0], "rotation": [0, 0, 0] } }"#).unwrap();
        let flags = BlurFlags {
            seed: Some(9),
            bounds: BoundsFlags {
                rotation: Some([0.1, 0.2, 0.3]),
                ..BoundsFlags::default()
            },
            ..BlurFlags::default()
        };
        let job: BlurJobConfig =
            resolve(&BlurJobConfig::default(), vec![], Some(&path), &flags).unwrap();
        assert_eq!(job.n_t, 7);
        assert_eq!(job.seed, 9);
        assert_eq!(job.bounds.translation, [1.0, 1.0, 0.0]);
        assert_eq!(job.bounds.rotation, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn unknown_file_keys_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.json");
        fs::write(&path, r#"{ "learnin_rate": 0.1 }"#).unwrap();
        let err = resolve::<TrainConfig, _>(
            &TrainConfig::default(),
            vec![],
            Some(&path),
            &TrainFlags::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("learnin_rate"), "{err}");
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["lfdeblur", "bogus"]), 1);
        assert_eq!(run(["lfdeblur", "epi", "--input", "x"]), 1);
        assert_eq!(run(["lfdeblur", "--help"]), 0);
    }
}
