//! Command implementations behind the `flowanim` binary.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{ensure, Error, Result};
use crate::eval::{evaluate_video, write_metrics_csv, MetricsRow};
use crate::flow::{flow_to_color, read_flow, ComposeMode, FlowField};
use crate::image::Image;
use crate::inference::{
    animate, file_sha256, write_animation, AnimateOptions, FixedMasks, GeneratorInput, MaskMode, ReferenceClip,
    ReferenceSet, RunManifest,
};
use crate::mask::{MaskSet, SemanticClass};
use crate::model::{Checkpoint, Model};
use crate::synth::{load_clip, make_scene, save_clip, scene_manifest, toy_dataset, Clip, ClipManifest, Scene};
use crate::train::{train_with, write_loss_log};

/// Environment variable naming the default training data directory.
pub const DATA_ENV: &str = "FLOWANIM_DATA";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Renders scene descriptions (one object or an array) into clip
/// directories `out/clip_0000`, `out/clip_0001`, ...
pub fn cmd_synth(scene_file: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = read_text(scene_file)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", scene_file.display())))?;
    let scenes: Vec<Scene> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value),
        _ => serde_json::from_value(value).map(|s| vec![s]),
    }
    .map_err(|e| Error::Usage(format!("{}: {e}", scene_file.display())))?;
    let mut dirs = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let clip = make_scene(scene)?;
        let dir = out.join(format!("clip_{i:04}"));
        save_clip(&dir, &clip, &scene_manifest(scene, &clip))?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Writes the two-region toy dataset.
pub fn cmd_synth_toy(count: usize, size: usize, frames: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    ensure!(count > 0, Usage, "toy dataset needs at least one clip");
    let clips = toy_dataset(count, size, frames, seed)?;
    let mut dirs = Vec::with_capacity(count);
    for (i, clip) in clips.iter().enumerate() {
        let dir = out.join(format!("clip_{i:04}"));
        let manifest = ClipManifest {
            size: [clip.width(), clip.height()],
            frame_count: clip.len(),
            classes: vec!["others".into(), "sky".into(), "water".into()],
            seed: Some(seed),
            motion_models: serde_json::json!({"kind": "two_region_constant", "index": i}),
        };
        save_clip(&dir, clip, &manifest)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

fn is_clip_dir(dir: &Path) -> bool {
    dir.join("frames").is_dir()
}

/// Loads `dir` as one clip, or every clip directory directly inside it
/// (sorted by name).
pub fn load_dataset(dir: &Path, stride: usize) -> Result<Vec<Clip>> {
    if is_clip_dir(dir) {
        return Ok(vec![load_clip(dir, stride)?]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_clip_dir(p))
        .collect();
    subdirs.sort();
    ensure!(!subdirs.is_empty(), Data, "{}: no clip directories found", dir.display());
    subdirs.iter().map(|d| load_clip(d, stride)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub log: Option<PathBuf>,
    pub quiet: bool,
}

/// Trains from scratch and writes the checkpoint plus a CSV loss log
/// (`<out>.loss.csv` unless given).
pub fn cmd_train(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let data = match &args.data {
        Some(d) => d.clone(),
        None => std::env::var_os(DATA_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Usage(format!("no --data given and {DATA_ENV} is unset")))?,
    };
    let dataset = load_dataset(&data, cfg.train.stride)?;
    let model = Model::new(cfg.model.clone(), cfg.train.seed)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.dump_path = Some(args.out.with_extension("dump.json"));
    let quiet = args.quiet;
    let outcome = train_with(&dataset, model, &train_cfg, &cfg.loss, |e| {
        if !quiet {
            eprintln!(
                "epoch {:>4} steps {:>6} total {:.5} frame {:.5} flow {:.5} tv {:.5}",
                e.epoch, e.steps, e.total, e.frame, e.flow, e.tv
            );
        }
    })?;
    let log_path = args.log.clone().unwrap_or_else(|| args.out.with_extension("loss.csv"));
    write_loss_log(&log_path, &outcome.log)?;
    let ck = Checkpoint {
        model: outcome.model,
        metadata: serde_json::json!({
            "config": cfg.to_text(),
            "data": data.display().to_string(),
            "clips": dataset.len(),
            "steps": outcome.steps,
        }),
    };
    ck.save(&args.out)?;
    Ok(cfg)
}

fn parse_class_value<T: std::str::FromStr>(item: &str, what: &str) -> Result<(SemanticClass, T)> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("{what} `{item}` is not `class=value`")))?;
    let class: SemanticClass = k.trim().parse()?;
    let value = v
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("{what} `{item}` has an invalid value")))?;
    Ok((class, value))
}

#[derive(Debug, Clone)]
pub struct AnimateArgs {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    /// Index-map PNG segmenting the input image.
    pub masks: PathBuf,
    /// Reference clip directories (numbered from 1 in `assign`).
    pub refs: Vec<PathBuf>,
    /// `class=index` items, 1-based; unassigned classes use reference 1.
    pub assign: Vec<String>,
    /// `class=speed` items.
    pub speed: Vec<String>,
    pub global_speed: Option<f64>,
    pub steps: usize,
    pub out: PathBuf,
    pub mask_mode: MaskMode,
    pub compose: ComposeMode,
    pub generator_input: GeneratorInput,
    pub visualize: bool,
    pub seed: u64,
}

/// Animates an image and writes frames, flows and the run manifest.
pub fn cmd_animate(args: &AnimateArgs) -> Result<usize> {
    ensure!(!args.refs.is_empty(), Usage, "at least one --ref is required");
    let ck = Checkpoint::load(&args.checkpoint)?;
    let image = Image::load_png(&args.image)?;
    ensure!(image.channels() == 3, Data, "{}: input must be RGB", args.image.display());
    let masks = MaskSet::load_png(&args.masks, SemanticClass::ALL.len())?;
    let n = SemanticClass::ALL.len();
    let refs = args
        .refs
        .iter()
        .map(|d| {
            let clip = load_clip(d, 1)?;
            ReferenceClip::from_clip(d.display().to_string(), &clip)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = ReferenceSet {
        refs,
        assignment: vec![0; n],
        speeds: vec![1.0; n],
    };
    if let Some(s) = args.global_speed {
        set.set_global_speed(s);
    }
    for a in &args.assign {
        let (class, r): (SemanticClass, usize) = parse_class_value(a, "assignment")?;
        ensure!(
            r >= 1 && r <= set.refs.len(),
            Usage,
            "assignment `{a}`: reference index must be in 1..={}",
            set.refs.len()
        );
        set.assignment[class.index()] = r - 1;
    }
    for s in &args.speed {
        let (class, v): (SemanticClass, f64) = parse_class_value(s, "speed")?;
        set.speeds[class.index()] = v;
    }
    let options = AnimateOptions {
        steps: args.steps,
        mask_mode: args.mask_mode,
        compose: args.compose,
        generator_input: args.generator_input,
    };
    let result = animate(&ck.model, &image, &set, &mut FixedMasks(masks), &options)?;
    let manifest = RunManifest {
        input: args.image.display().to_string(),
        references: args.refs.iter().map(|p| p.display().to_string()).collect(),
        assignment: set.assignment.iter().map(|r| r + 1).collect(),
        speeds: set.speeds.clone(),
        seed: args.seed,
        checkpoint_sha256: file_sha256(&args.checkpoint)?,
        options,
    };
    write_animation(&args.out, &result, &manifest, args.visualize)?;
    Ok(result.frames.len())
}

fn load_frames(dir: &Path) -> Result<Vec<Image>> {
    let frames_dir = if dir.join("frames").is_dir() { dir.join("frames") } else { dir.to_path_buf() };
    let mut out = Vec::new();
    while let Some(p) = Some(frames_dir.join(format!("frame_{:06}.png", out.len()))).filter(|p| p.exists()) {
        out.push(Image::load_png(p)?);
    }
    ensure!(!out.is_empty(), Data, "{}: no frames found", frames_dir.display());
    Ok(out)
}

fn load_flows(dir: &Path) -> Result<Option<Vec<FlowField>>> {
    let flows_dir = dir.join("flows");
    if !flows_dir.is_dir() {
        return Ok(None);
    }
    let mut out = Vec::new();
    while let Some(p) = Some(flows_dir.join(format!("flow_{:06}.flo", out.len()))).filter(|p| p.exists()) {
        out.push(read_flow(p)?);
    }
    Ok((!out.is_empty()).then_some(out))
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub generated: PathBuf,
    pub truth: PathBuf,
    pub threshold: f64,
    pub out: PathBuf,
    pub clip: String,
    pub method: String,
}

/// Compares generated frames with ground truth and writes the CSV report.
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsRow> {
    let gen = load_frames(&args.generated)?;
    let truth = load_frames(&args.truth)?;
    let gen_flows = load_flows(&args.generated)?;
    let truth_flows = load_flows(&args.truth)?;
    let flows = match (&truth_flows, &gen_flows) {
        (Some(t), Some(g)) => Some((t.as_slice(), g.as_slice())),
        _ => None,
    };
    let row = evaluate_video(&args.clip, &args.method, &truth, &gen, flows, args.threshold)?;
    write_metrics_csv(&args.out, std::slice::from_ref(&row))?;
    Ok(row)
}

/// Renders a `.flo` file with the standard color wheel. `max_mag` of
/// `None` uses the field's own maximum magnitude.
pub fn cmd_flowviz(flo: &Path, max_mag: Option<f64>, out: &Path) -> Result<()> {
    let flow = read_flow(flo)?;
    let m = match max_mag {
        Some(m) => {
            ensure!(m > 0.0 && m.is_finite(), Usage, "--max-mag must be positive");
            m
        }
        None => {
            let m = flow.max_magnitude();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    flow_to_color(&flow, m)?.save_png(out)
}
