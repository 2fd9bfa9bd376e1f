//! Training samples, the joint forward/backward pass and the optimization loop.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{flow_tensor, prepare_encoder_inputs, EncodeCache, LatentSet};
use crate::error::{ensure, Error, Result};
use crate::eval::endpoint_error;
use crate::flow::{flip_horizontal, warp_backward, warp_backward_flow_grad, FlowField};
use crate::generator::{build_latent_map, latent_map_backward, GeneratorCache};
use crate::image::Image;
use crate::loss::{
    loss_flow, loss_flow_grad, loss_frame, loss_frame_grad, loss_total, loss_tv, loss_tv_grad, LossConfig,
};
use crate::mask::MaskSet;
use crate::model::Model;
use crate::nn::{Adam, Grads};
use crate::synth::Clip;

/// Which tensors are mirrored when building a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipProtocol {
    /// Encoder reads the mirrored flow and masks (values kept); the generator
    /// and all targets stay in the original orientation.
    #[default]
    Encoder,
    /// Encoder reads the original; generator input and targets are mirrored.
    Targets,
    /// No mirroring.
    Off,
}

impl std::str::FromStr for FlipProtocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Self::Encoder),
            "targets" => Ok(Self::Targets),
            "off" => Ok(Self::Off),
            _ => Err(Error::Usage(format!("unknown flip protocol `{s}` (encoder, targets, off)"))),
        }
    }
}

impl std::fmt::Display for FlipProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Encoder => "encoder",
            Self::Targets => "targets",
            Self::Off => "off",
        })
    }
}

/// Frame that weights the smoothness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvFrame {
    /// The warped prediction (gradient flows through the weights as well).
    #[default]
    Generated,
    /// The ground-truth next frame.
    Target,
}

impl std::str::FromStr for TvFrame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(Self::Generated),
            "target" => Ok(Self::Target),
            _ => Err(Error::Usage(format!("unknown tv frame `{s}` (generated, target)"))),
        }
    }
}

impl std::fmt::Display for TvFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Generated => "generated",
            Self::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Temporal stride applied when clips are loaded.
    pub stride: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub clip_norm: f64,
    pub flip: FlipProtocol,
    pub tv_frame: TvFrame,
    /// Where to write a JSON state dump if training hits a non-finite value.
    #[serde(skip)]
    pub dump_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 500,
            batch: 4,
            seed: 0,
            stride: 4,
            max_steps: None,
            clip_norm: 10.0,
            flip: FlipProtocol::Encoder,
            tv_frame: TvFrame::Generated,
            dump_path: None,
        }
    }
}

impl TrainConfig {
    /// Settings used for the synthetic two-region task: a larger step size
    /// and a 2000-step budget.
    pub fn toy(seed: u64) -> Self {
        Self {
            lr: 1e-3,
            epochs: 10_000,
            max_steps: Some(2000),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr > 0.0 && self.lr.is_finite(), Usage, "lr must be positive");
        ensure!(self.epochs > 0, Usage, "epochs must be positive");
        ensure!(self.batch > 0, Usage, "batch must be positive");
        ensure!(self.stride > 0, Usage, "stride must be positive");
        ensure!(self.clip_norm > 0.0, Usage, "clip_norm must be positive");
        ensure!(self.max_steps != Some(0), Usage, "max_steps must be positive");
        Ok(())
    }
}

/// One supervised pair `(I_t, I_{t+1})` with its flow and masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// Half resolution.
    pub encoder_flow: FlowField,
    pub encoder_masks: MaskSet,
    pub gen_image: Image,
    pub gen_masks: MaskSet,
    pub target_flow: FlowField,
    pub target_frame: Image,
}

fn flip_image(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    Image::from_fn(img.channels(), h, w, img.range(), |c, y, x| img.get(c, y, w - 1 - x)).expect("mirror keeps values")
}

/// Builds the sample for pair `(t, t + 1)` of `clip`.
pub fn build_training_sample(clip: &Clip, t: usize, protocol: FlipProtocol) -> Result<TrainingSample> {
    ensure!(clip.len() >= 2, Data, "clip has {} frames, need at least 2", clip.len());
    ensure!(t + 1 < clip.len(), Contract, "pair index {t} out of range for {} frames", clip.len());
    let frame = clip.frames[t].to_normalized();
    let next = clip.frames[t + 1].to_normalized();
    let flow = &clip.flows[t];
    let masks = &clip.masks[t];
    let sample = match protocol {
        FlipProtocol::Encoder => {
            let (ef, em) = prepare_encoder_inputs(&flip_horizontal(flow, false), &masks.flip_horizontal())?;
            TrainingSample {
                encoder_flow: ef,
                encoder_masks: em,
                gen_image: frame,
                gen_masks: masks.clone(),
                target_flow: flow.clone(),
                target_frame: next,
            }
        }
        FlipProtocol::Targets => {
            let (ef, em) = prepare_encoder_inputs(flow, masks)?;
            TrainingSample {
                encoder_flow: ef,
                encoder_masks: em,
                gen_image: flip_image(&frame),
                gen_masks: masks.flip_horizontal(),
                target_flow: flip_horizontal(flow, false),
                target_frame: flip_image(&next),
            }
        }
        FlipProtocol::Off => {
            let (ef, em) = prepare_encoder_inputs(flow, masks)?;
            TrainingSample {
                encoder_flow: ef,
                encoder_masks: em,
                gen_image: frame,
                gen_masks: masks.clone(),
                target_flow: flow.clone(),
                target_frame: next,
            }
        }
    };
    Ok(sample)
}

/// Draws one pair index uniformly from the clip.
pub fn sample_pair_index(clip: &Clip, rng: &mut ChaCha8Rng) -> Result<usize> {
    ensure!(clip.len() >= 2, Data, "clip has {} frames, need at least 2", clip.len());
    Ok(rng.gen_range(0..clip.len() - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub frame: f64,
    pub flow: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn is_finite(&self) -> bool {
        self.frame.is_finite() && self.flow.is_finite() && self.tv.is_finite() && self.total.is_finite()
    }

    fn accumulate(&mut self, other: &LossBreakdown, w: f64) {
        self.frame += w * other.frame;
        self.flow += w * other.flow;
        self.tv += w * other.tv;
        self.total += w * other.total;
    }
}

struct Forward {
    enc: Vec<Option<EncodeCache>>,
    gen: GeneratorCache,
    flow: FlowField,
    warped: Image,
    losses: LossBreakdown,
}

fn forward(model: &Model, s: &TrainingSample, loss: &LossConfig, tv_frame: TvFrame) -> Result<Forward> {
    ensure!(
        s.encoder_masks.len() == s.gen_masks.len(),
        Contract,
        "encoder and generator mask sets differ in size"
    );
    let x = flow_tensor(&s.encoder_flow);
    let d = model.encoder.latent_dim();
    let mut enc = Vec::with_capacity(s.encoder_masks.len());
    let mut rows = Vec::with_capacity(s.encoder_masks.len());
    let mut valid = Vec::with_capacity(s.encoder_masks.len());
    for i in 0..s.encoder_masks.len() {
        match model.encoder.encode_semantic(&model.store, &x, s.encoder_masks.mask(i)) {
            Some((z, cache)) => {
                ensure!(z.iter().all(|v| v.is_finite()), Numeric, "latent of semantic {i} is not finite");
                rows.push(z);
                valid.push(true);
                enc.push(Some(cache));
            }
            None => {
                rows.push(vec![0.0; d]);
                valid.push(false);
                enc.push(None);
            }
        }
    }
    let latents = LatentSet::new(rows, valid)?;
    let map = build_latent_map(&latents, &s.gen_masks)?;
    let (flow, gen) = model.generator.generate(&model.store, &map, &s.gen_image)?;
    let warped = warp_backward(&s.gen_image, &flow)?;
    let frame = loss_frame(&warped, &s.target_frame)?;
    let flow_l = loss_flow(&flow, &s.target_flow)?;
    let tv_img = match tv_frame {
        TvFrame::Generated => &warped,
        TvFrame::Target => &s.target_frame,
    };
    let tv = loss_tv(&flow, tv_img, loss.sigma)?;
    Ok(Forward {
        enc,
        gen,
        flow,
        warped,
        losses: LossBreakdown {
            frame,
            flow: flow_l,
            tv,
            total: loss_total(frame, flow_l, tv, loss),
        },
    })
}

/// Loss of one sample without gradients.
pub fn sample_loss(model: &Model, sample: &TrainingSample, loss: &LossConfig, tv_frame: TvFrame) -> Result<LossBreakdown> {
    forward(model, sample, loss, tv_frame).map(|f| f.losses)
}

/// Adds `d total / d params` of one sample into `grads` and returns its losses.
pub fn forward_backward(
    model: &Model,
    sample: &TrainingSample,
    loss: &LossConfig,
    tv_frame: TvFrame,
    grads: &mut Grads,
) -> Result<LossBreakdown> {
    let f = forward(model, sample, loss, tv_frame)?;
    let mut d_img = loss_frame_grad(&f.warped, &sample.target_frame)?;
    let (mut du, mut dv) = loss_flow_grad(&f.flow, &sample.target_flow)?;
    du.iter_mut().chain(dv.iter_mut()).for_each(|g| *g *= loss.alpha);
    if loss.beta != 0.0 {
        let tv_img = match tv_frame {
            TvFrame::Generated => &f.warped,
            TvFrame::Target => &sample.target_frame,
        };
        let (tu, tv, tf) = loss_tv_grad(&f.flow, tv_img, loss.sigma)?;
        for (a, b) in du.iter_mut().zip(&tu) {
            *a += loss.beta * b;
        }
        for (a, b) in dv.iter_mut().zip(&tv) {
            *a += loss.beta * b;
        }
        if tv_frame == TvFrame::Generated {
            for (a, b) in d_img.iter_mut().zip(&tf) {
                *a += loss.beta * b;
            }
        }
    }
    let (wu, wv) = warp_backward_flow_grad(&sample.gen_image, &f.flow, &d_img)?;
    for (a, b) in du.iter_mut().zip(&wu) {
        *a += b;
    }
    for (a, b) in dv.iter_mut().zip(&wv) {
        *a += b;
    }
    let d_in = model
        .generator
        .backward(&model.store, &f.gen, &du, &dv, grads, true)
        .expect("input gradient requested");
    let d_map = d_in.split(&[model.encoder.latent_dim(), 3]).swap_remove(0);
    let dz = latent_map_backward(&d_map, &sample.gen_masks);
    for (cache, g) in f.enc.iter().zip(&dz) {
        if let Some(cache) = cache {
            model.encoder.backward_semantic(&model.store, cache, g, grads, false);
        }
    }
    Ok(f.losses)
}

/// Mean losses and gradients over a batch. Samples are processed in
/// parallel and reduced in order, so the result does not depend on
/// scheduling.
pub fn batch_gradients(
    model: &Model,
    batch: &[TrainingSample],
    loss: &LossConfig,
    tv_frame: TvFrame,
) -> Result<(LossBreakdown, Grads)> {
    ensure!(!batch.is_empty(), Contract, "empty batch");
    let parts: Vec<Result<(LossBreakdown, Grads)>> = batch
        .par_iter()
        .map(|s| {
            let mut g = model.store.zero_grads();
            forward_backward(model, s, loss, tv_frame, &mut g).map(|l| (l, g))
        })
        .collect();
    let w = 1.0 / batch.len() as f64;
    let mut total = LossBreakdown::default();
    let mut grads = model.store.zero_grads();
    for part in parts {
        let (l, g) = part?;
        total.accumulate(&l, w);
        grads.add_assign(&g);
    }
    grads.scale(w);
    Ok((total, grads))
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    pub frame: f64,
    pub flow: f64,
    pub tv: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub steps: usize,
}

/// Trains with default reporting (none).
pub fn train(dataset: &[Clip], model: Model, config: &TrainConfig, loss: &LossConfig) -> Result<TrainOutcome> {
    train_with(dataset, model, config, loss, |_| {})
}

/// Trains `model` on `dataset`, calling `on_epoch` after every epoch.
///
/// Each epoch visits the clips in a seeded random order, draws one pair per
/// clip, and takes one optimizer step per `batch` samples. Clips must
/// already be on the desired temporal stride.
pub fn train_with(
    dataset: &[Clip],
    mut model: Model,
    config: &TrainConfig,
    loss: &LossConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.validate()?;
    ensure!(!dataset.is_empty(), Data, "training dataset is empty");
    for (i, clip) in dataset.iter().enumerate() {
        ensure!(clip.len() >= 2, Data, "clip {i} has {} frames, need at least 2", clip.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.store, config.lr);
    let mut log = Vec::new();
    let mut steps = 0usize;
    let limit = config.max_steps.unwrap_or(usize::MAX);
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let mut samples = Vec::with_capacity(order.len());
        for &i in &order {
            let t = sample_pair_index(&dataset[i], &mut rng)?;
            samples.push(build_training_sample(&dataset[i], t, config.flip)?);
        }
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for batch in samples.chunks(config.batch) {
            if steps >= limit {
                break;
            }
            let (l, mut grads) = batch_gradients(&model, batch, loss, config.tv_frame)?;
            if !l.is_finite() || !grads.all_finite() {
                return Err(numeric_abort(config, &model, epoch, steps, &l, &grads));
            }
            grads.clip_global_norm(config.clip_norm);
            adam.update(&mut model.store, &grads);
            if !model.store.all_finite() {
                return Err(numeric_abort(config, &model, epoch, steps, &l, &grads));
            }
            sum.accumulate(&l, 1.0);
            batches += 1;
            steps += 1;
        }
        if batches > 0 {
            let n = batches as f64;
            let entry = EpochLog {
                epoch,
                steps,
                frame: sum.frame / n,
                flow: sum.flow / n,
                tv: sum.tv / n,
                total: sum.total / n,
            };
            on_epoch(&entry);
            log.push(entry);
        }
        if steps >= limit {
            break 'epochs;
        }
    }
    Ok(TrainOutcome { model, log, steps })
}

fn numeric_abort(config: &TrainConfig, model: &Model, epoch: usize, step: usize, l: &LossBreakdown, grads: &Grads) -> Error {
    let bad_params: Vec<&str> = model
        .store
        .params()
        .iter()
        .filter(|p| p.data.iter().any(|v| !v.is_finite()))
        .map(|p| p.name.as_str())
        .collect();
    let bad_grads: Vec<&str> = model
        .store
        .params()
        .iter()
        .zip(grads.tensors())
        .filter(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(p, _)| p.name.as_str())
        .collect();
    let state = serde_json::json!({
        "epoch": epoch,
        "step": step,
        "losses": l,
        "grad_norm": grads.global_norm(),
        "non_finite_params": bad_params,
        "non_finite_grads": bad_grads,
        "config": config,
    });
    let mut msg = format!("non-finite value at epoch {epoch}, step {step}: {state}");
    if let Some(path) = &config.dump_path {
        match std::fs::write(path, serde_json::to_string_pretty(&state).unwrap_or_default()) {
            Ok(()) => msg.push_str(&format!(" (state dumped to {})", path.display())),
            Err(e) => msg.push_str(&format!(" (dump to {} failed: {e})", path.display())),
        }
    }
    Error::Numeric(msg)
}

/// Writes the per-epoch log as CSV.
pub fn write_loss_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,steps,frame,flow,tv,total\n");
    for e in log {
        out.push_str(&format!("{},{},{},{},{},{}\n", e.epoch, e.steps, e.frame, e.flow, e.tv, e.total));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Flow the model generates for pair `t` of a clip when the encoder reads
/// that pair's own (unflipped) flow.
pub fn reconstruct_flow(model: &Model, clip: &Clip, t: usize) -> Result<FlowField> {
    let sample = build_training_sample(clip, t, FlipProtocol::Off)?;
    let latents = model.encoder.encode(&model.store, &sample.encoder_flow, &sample.encoder_masks)?;
    let map = build_latent_map(&latents, &sample.gen_masks)?;
    model.generator.generate(&model.store, &map, &sample.gen_image).map(|(f, _)| f)
}

/// Mean endpoint error of [`reconstruct_flow`] against the clips' flows,
/// over the first `pairs_per_clip` pairs of each clip.
pub fn reconstruction_epe(model: &Model, clips: &[Clip], pairs_per_clip: usize) -> Result<f64> {
    ensure!(!clips.is_empty(), Data, "no validation clips");
    let mut sum = 0.0;
    let mut n = 0usize;
    for clip in clips {
        for t in 0..pairs_per_clip.min(clip.len().saturating_sub(1)) {
            sum += endpoint_error(&reconstruct_flow(model, clip, t)?, &clip.flows[t], None)?;
            n += 1;
        }
    }
    ensure!(n > 0, Data, "validation clips contain no frame pairs");
    Ok(sum / n as f64)
}

/// Result of comparing analytic and numeric gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// `|a - n| / max(|a|, |n|)` over the sampled coordinates, as vectors.
    pub relative_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Central finite differences of the total loss on `count` randomly chosen
/// parameter coordinates.
pub fn gradient_check(
    model: &Model,
    sample: &TrainingSample,
    loss: &LossConfig,
    tv_frame: TvFrame,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let mut grads = model.store.zero_grads();
    forward_backward(model, sample, loss, tv_frame, &mut grads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = model.store.params().iter().map(|p| p.data.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut probe = model.clone();
    let mut analytic = Vec::with_capacity(count);
    let mut numeric = Vec::with_capacity(count);
    for _ in 0..count {
        let mut k = rng.gen_range(0..total);
        let mut p = 0;
        while k >= sizes[p] {
            k -= sizes[p];
            p += 1;
        }
        let orig = probe.store.params()[p].data[k];
        probe.store.params_mut()[p].data[k] = orig + step;
        let plus = sample_loss(&probe, sample, loss, tv_frame)?.total;
        probe.store.params_mut()[p].data[k] = orig - step;
        let minus = sample_loss(&probe, sample, loss, tv_frame)?.total;
        probe.store.params_mut()[p].data[k] = orig;
        numeric.push((plus - minus) / (2.0 * step));
        analytic.push(grads.tensors()[p][k]);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let denom = norm(&analytic).max(norm(&numeric));
    let relative_error = if denom == 0.0 { 0.0 } else { norm(&diff) / denom };
    Ok(GradientCheck {
        relative_error,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::generator::GeneratorConfig;
    use crate::model::ModelConfig;
    use crate::synth::{make_scene, two_region_scene};

    fn tiny_model(seed: u64) -> Model {
        Model::new(
            ModelConfig {
                encoder: EncoderConfig {
                    widths: vec![4, 4],
                    ..EncoderConfig::default()
                },
                generator: GeneratorConfig {
                    widths: vec![4, 6],
                    c: 4.0,
                    ..GeneratorConfig::default()
                },
            },
            seed,
        )
        .unwrap()
    }

    fn clip16() -> Clip {
        make_scene(&two_region_scene(16, 3, 5, (1.0, -1.0), (-2.0, 1.0))).unwrap()
    }

    #[test]
    fn flip_protocol_keeps_targets() {
        let clip = clip16();
        let s = build_training_sample(&clip, 1, FlipProtocol::Encoder).unwrap();
        assert_eq!(s.target_flow, clip.flows[1]);
        assert_eq!(s.target_frame, clip.frames[2]);
        assert_eq!(s.gen_image, clip.frames[1]);
        let (ef, _) = prepare_encoder_inputs(&flip_horizontal(&clip.flows[1], false), &clip.masks[1].flip_horizontal()).unwrap();
        assert_eq!(s.encoder_flow, ef);
        // Values are mirrored in position only.
        let w = s.encoder_flow.width();
        assert_eq!(s.encoder_flow.at(0, 0), ef.at(0, 0));
        assert_eq!(s.encoder_flow.at(0, w - 1).0, 1.0);
    }

    #[test]
    fn short_clip_is_data_error() {
        let clip = make_scene(&two_region_scene(16, 1, 5, (1.0, 0.0), (0.0, 1.0))).unwrap();
        assert!(matches!(build_training_sample(&clip, 0, FlipProtocol::Encoder), Err(Error::Data(_))));
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let model = tiny_model(3);
        let sample = build_training_sample(&clip16(), 0, FlipProtocol::Encoder).unwrap();
        let check = gradient_check(&model, &sample, &LossConfig::default(), TvFrame::Generated, 40, 1e-4, 1).unwrap();
        assert!(check.relative_error < 1e-3, "{}", check.relative_error);
    }

    #[test]
    fn zero_weights_reduce_to_frame_loss() {
        let model = tiny_model(4);
        let sample = build_training_sample(&clip16(), 0, FlipProtocol::Encoder).unwrap();
        let cfg = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            sigma: 0.1,
        };
        let l = sample_loss(&model, &sample, &cfg, TvFrame::Generated).unwrap();
        assert_eq!(l.total, l.frame);
        let check = gradient_check(&model, &sample, &cfg, TvFrame::Generated, 30, 1e-4, 2).unwrap();
        assert!(check.relative_error < 1e-3, "{}", check.relative_error);
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let data: Vec<Clip> = (0..3)
            .map(|s| make_scene(&two_region_scene(16, 3, s, (1.0, 0.0), (0.0, -1.0))).unwrap())
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch: 2,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let a = train(&data, tiny_model(1), &cfg, &LossConfig::default()).unwrap();
        let b = train(&data, tiny_model(1), &cfg, &LossConfig::default()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.store, b.model.store);
        assert_eq!(a.steps, 6);
        assert_eq!(a.log.len(), 3);
        let capped = train(&data, tiny_model(1), &TrainConfig { max_steps: Some(4), ..cfg }, &LossConfig::default()).unwrap();
        assert_eq!(capped.steps, 4);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            train(&[], tiny_model(0), &TrainConfig::default(), &LossConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
