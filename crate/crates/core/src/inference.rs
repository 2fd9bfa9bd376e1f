//! Controllable animation of a single image.
//!
//! Every semantic takes its motion latent from a chosen reference clip
//! (optionally sped up or slowed down). Per-step flows are generated
//! recurrently, accumulated, and each output frame is the first frame
//! warped by the accumulated flow.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{flow_tensor, prepare_encoder_inputs, LatentSet};
use crate::error::{ensure, Error, Result};
use crate::flow::{accumulate_flow, flow_to_color, scale_flow, warp_backward, write_flow, ComposeMode, FlowField};
use crate::generator::{build_latent_map, LatentMap};
use crate::image::Image;
use crate::mask::MaskSet;
use crate::model::Model;

/// Motion source: per-step flows and masks at generator resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceClip {
    pub name: String,
    pub flows: Vec<FlowField>,
    /// `masks[t]` segments the frame that `flows[t]` starts from.
    pub masks: Vec<MaskSet>,
}

impl ReferenceClip {
    pub fn new(name: impl Into<String>, flows: Vec<FlowField>, masks: Vec<MaskSet>) -> Result<Self> {
        let name = name.into();
        ensure!(!flows.is_empty(), Data, "reference `{name}` has no flows");
        ensure!(
            masks.len() >= flows.len(),
            Data,
            "reference `{name}` has {} flows but only {} mask sets",
            flows.len(),
            masks.len()
        );
        Ok(Self { name, flows, masks })
    }

    pub fn from_clip(name: impl Into<String>, clip: &crate::synth::Clip) -> Result<Self> {
        Self::new(name, clip.flows.clone(), clip.masks.clone())
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// References plus the per-semantic assignment and speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub refs: Vec<ReferenceClip>,
    /// `assignment[i]` indexes `refs` (0-based) for semantic `i`.
    pub assignment: Vec<usize>,
    /// Flow multiplier per semantic.
    pub speeds: Vec<f64>,
}

impl ReferenceSet {
    /// Every semantic follows reference 0 at unit speed.
    pub fn single(reference: ReferenceClip, semantics: usize) -> Self {
        Self {
            refs: vec![reference],
            assignment: vec![0; semantics],
            speeds: vec![1.0; semantics],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.refs.is_empty(), Data, "no reference clips");
        ensure!(
            self.assignment.len() == self.speeds.len(),
            Usage,
            "{} assignments but {} speeds",
            self.assignment.len(),
            self.speeds.len()
        );
        for (i, &r) in self.assignment.iter().enumerate() {
            ensure!(r < self.refs.len(), Usage, "semantic {i} assigned to missing reference {r}");
        }
        for (i, &s) in self.speeds.iter().enumerate() {
            ensure!(s > 0.0 && s.is_finite(), Usage, "speed of semantic {i} must be positive, got {s}");
        }
        for r in &self.refs {
            ensure!(!r.flows.is_empty(), Data, "reference `{}` has no flows", r.name);
        }
        Ok(())
    }

    /// Sets every semantic's speed.
    pub fn set_global_speed(&mut self, speed: f64) {
        self.speeds.iter_mut().for_each(|s| *s = speed);
    }
}

/// Latents for step `t`: row `i` comes from encoding reference
/// `assignment[i]` at step `t mod len`, scaled by `speeds[i]`.
pub fn reference_latents(model: &Model, refs: &ReferenceSet, t: usize) -> Result<LatentSet> {
    refs.validate()?;
    let n = refs.assignment.len();
    let d = model.encoder.latent_dim();
    let mut out = LatentSet::zeros(n, d);
    for i in 0..n {
        let r = &refs.refs[refs.assignment[i]];
        let step = t % r.flows.len();
        ensure!(
            r.masks[step].len() == n,
            Data,
            "reference `{}` has {} semantics, expected {n}",
            r.name,
            r.masks[step].len()
        );
        let flow = scale_flow(&r.flows[step], refs.speeds[i])?;
        let (flow, masks) = prepare_encoder_inputs(&flow, &r.masks[step])?;
        if let Some((z, _)) = model.encoder.encode_semantic(&model.store, &flow_tensor(&flow), masks.mask(i)) {
            out.set_row(i, z, true);
        }
    }
    Ok(out)
}

/// Supplies segmentation masks for the frames being animated.
pub trait MaskProvider {
    fn masks(&mut self, frame: &Image, step: usize) -> Result<MaskSet>;
}

/// Returns the same masks for every frame.
#[derive(Debug, Clone)]
pub struct FixedMasks(pub MaskSet);

impl MaskProvider for FixedMasks {
    fn masks(&mut self, _frame: &Image, _step: usize) -> Result<MaskSet> {
        Ok(self.0.clone())
    }
}

/// Returns `masks[step]`, failing past the end.
#[derive(Debug, Clone)]
pub struct MaskSequence(pub Vec<MaskSet>);

impl MaskProvider for MaskSequence {
    fn masks(&mut self, _frame: &Image, step: usize) -> Result<MaskSet> {
        self.0
            .get(step)
            .cloned()
            .ok_or_else(|| Error::Data(format!("no masks for step {step} ({} available)", self.0.len())))
    }
}

/// Produces a flow from a latent map and the current frame.
pub trait FlowSource {
    fn flow(&self, latent_map: &LatentMap, image: &Image) -> Result<FlowField>;
}

impl FlowSource for Model {
    fn flow(&self, latent_map: &LatentMap, image: &Image) -> Result<FlowField> {
        self.generator.generate(&self.store, latent_map, image).map(|(f, _)| f)
    }
}

/// Whether masks are recomputed for every generated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    #[default]
    Requery,
    /// Reuse the masks of the input frame.
    First,
}

/// Frame fed to the generator at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorInput {
    /// The most recent generated frame.
    #[default]
    Generated,
    /// Always the input frame.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnimateOptions {
    pub steps: usize,
    pub mask_mode: MaskMode,
    pub compose: ComposeMode,
    pub generator_input: GeneratorInput,
}

impl Default for AnimateOptions {
    fn default() -> Self {
        Self {
            steps: 16,
            mask_mode: MaskMode::Requery,
            compose: ComposeMode::Warp,
            generator_input: GeneratorInput::Generated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnimationResult {
    /// `steps + 1` frames; the first is the input.
    pub frames: Vec<Image>,
    /// Generated per-step flows.
    pub step_flows: Vec<FlowField>,
    /// `accumulated[t]` maps frame 0 to frame `t + 1`.
    pub accumulated: Vec<FlowField>,
    /// Latent maps used at each step.
    pub latent_maps: Vec<LatentMap>,
}

/// Animates `first` with a trained model.
pub fn animate(
    model: &Model,
    first: &Image,
    refs: &ReferenceSet,
    masks: &mut dyn MaskProvider,
    options: &AnimateOptions,
) -> Result<AnimationResult> {
    animate_with(model, model, first, refs, masks, options)
}

/// [`animate`] with an arbitrary flow source (the model still encodes the
/// references).
pub fn animate_with(
    model: &Model,
    source: &dyn FlowSource,
    first: &Image,
    refs: &ReferenceSet,
    masks: &mut dyn MaskProvider,
    options: &AnimateOptions,
) -> Result<AnimationResult> {
    ensure!(options.steps >= 1, Usage, "animation needs at least one step");
    ensure!(first.channels() == 3, Contract, "input image must be RGB");
    refs.validate()?;
    let first = first.to_normalized();
    let mut frames = vec![first.clone()];
    let mut step_flows = Vec::with_capacity(options.steps);
    let mut accumulated: Vec<FlowField> = Vec::with_capacity(options.steps);
    let mut latent_maps = Vec::with_capacity(options.steps);
    let mut first_masks: Option<MaskSet> = None;
    for t in 0..options.steps {
        let current = frames.last().expect("at least the input frame");
        let m = match (options.mask_mode, &first_masks) {
            (MaskMode::First, Some(m)) => m.clone(),
            _ => masks.masks(current, t)?,
        };
        ensure!(
            m.height() == first.height() && m.width() == first.width(),
            Data,
            "masks for step {t} are {}x{}, image is {}x{}",
            m.height(),
            m.width(),
            first.height(),
            first.width()
        );
        if first_masks.is_none() {
            first_masks = Some(m.clone());
        }
        let z = reference_latents(model, refs, t)?;
        let map = build_latent_map(&z, &m)?;
        let input = match options.generator_input {
            GeneratorInput::Generated => current,
            GeneratorInput::First => &first,
        };
        let flow = source.flow(&map, input)?;
        ensure!(flow.is_finite(), Numeric, "generated flow at step {t} is not finite");
        let acc = match accumulated.last() {
            None => flow.clone(),
            Some(prev) => accumulate_flow(prev, &flow, options.compose)?,
        };
        ensure!(acc.is_finite(), Numeric, "accumulated flow at step {t} is not finite");
        frames.push(warp_backward(&first, &acc)?);
        step_flows.push(flow);
        accumulated.push(acc);
        latent_maps.push(map);
    }
    Ok(AnimationResult {
        frames,
        step_flows,
        accumulated,
        latent_maps,
    })
}

/// Run description written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub input: String,
    pub references: Vec<String>,
    pub assignment: Vec<usize>,
    pub speeds: Vec<f64>,
    pub seed: u64,
    pub checkpoint_sha256: String,
    pub options: AnimateOptions,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes frames, per-step and accumulated flows, optional flow
/// visualizations and the manifest under `dir`.
pub fn write_animation(dir: impl AsRef<Path>, result: &AnimationResult, manifest: &RunManifest, visualize: bool) -> Result<()> {
    let dir = dir.as_ref();
    let sub = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };
    let frames = sub("frames")?;
    let flows = sub("flows")?;
    let acc = sub("accumulated")?;
    for (t, f) in result.frames.iter().enumerate() {
        f.save_png(frames.join(format!("frame_{t:06}.png")))?;
    }
    for (t, f) in result.step_flows.iter().enumerate() {
        write_flow(flows.join(format!("flow_{t:06}.flo")), f)?;
    }
    for (t, f) in result.accumulated.iter().enumerate() {
        write_flow(acc.join(format!("acc_{t:06}.flo")), f)?;
    }
    if visualize {
        let viz = sub("viz")?;
        let max = result.step_flows.iter().map(|f| f.max_magnitude()).fold(0.0, f64::max);
        let max = if max > 0.0 { max } else { 1.0 };
        for (t, f) in result.step_flows.iter().enumerate() {
            flow_to_color(f, max)?.save_png(viz.join(format!("flow_{t:06}.png")))?;
        }
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Mean generated flow inside mask `k` over all steps.
pub fn mean_flow_in_mask(flows: &[FlowField], masks: &MaskSet, k: usize) -> Result<(f64, f64, f64)> {
    let mask = masks.mask(k);
    let count = mask.iter().filter(|&&m| m != 0).count();
    ensure!(count > 0, Eval, "mask {k} is empty");
    let (mut su, mut sv, mut sm) = (0.0, 0.0, 0.0);
    for f in flows {
        ensure!(f.height() == masks.height() && f.width() == masks.width(), Contract, "flow and mask sizes differ");
        for (p, &m) in mask.iter().enumerate() {
            if m != 0 {
                su += f.u()[p];
                sv += f.v()[p];
                sm += f.u()[p].hypot(f.v()[p]);
            }
        }
    }
    let n = (count * flows.len()) as f64;
    Ok((su / n, sv / n, sm / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::generator::GeneratorConfig;
    use crate::model::ModelConfig;
    use crate::synth::{make_scene, two_region_scene};

    struct ZeroFlow;

    impl FlowSource for ZeroFlow {
        fn flow(&self, map: &LatentMap, _image: &Image) -> Result<FlowField> {
            Ok(FlowField::zeros(map.height(), map.width()))
        }
    }

    struct ConstFlow(f64, f64);

    impl FlowSource for ConstFlow {
        fn flow(&self, map: &LatentMap, _image: &Image) -> Result<FlowField> {
            Ok(FlowField::constant(map.height(), map.width(), self.0, self.1))
        }
    }

    fn setup() -> (Model, crate::synth::Clip, ReferenceSet) {
        let model = Model::new(
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
            1,
        )
        .unwrap();
        let clip = make_scene(&two_region_scene(16, 4, 2, (1.0, 0.0), (-1.0, 1.0))).unwrap();
        let refs = ReferenceSet::single(ReferenceClip::from_clip("r", &clip).unwrap(), 6);
        (model, clip, refs)
    }

    #[test]
    fn zero_stub_gives_constant_video() {
        let (model, clip, refs) = setup();
        let opts = AnimateOptions {
            steps: 3,
            ..AnimateOptions::default()
        };
        let r = animate_with(&model, &ZeroFlow, &clip.frames[0], &refs, &mut FixedMasks(clip.masks[0].clone()), &opts).unwrap();
        assert_eq!(r.frames.len(), 4);
        for f in &r.frames {
            assert_eq!(f, &clip.frames[0]);
        }
    }

    #[test]
    fn frames_recompute_from_accumulated_flow() {
        let (model, clip, refs) = setup();
        let opts = AnimateOptions {
            steps: 3,
            ..AnimateOptions::default()
        };
        let r = animate(&model, &clip.frames[0], &refs, &mut FixedMasks(clip.masks[0].clone()), &opts).unwrap();
        assert_eq!(r.frames[0], clip.frames[0]);
        for t in 0..3 {
            assert_eq!(warp_backward(&clip.frames[0], &r.accumulated[t]).unwrap(), r.frames[t + 1]);
        }
        assert_eq!(r.accumulated[0], r.step_flows[0]);
    }

    #[test]
    fn constant_stub_accumulates() {
        let (model, clip, refs) = setup();
        let opts = AnimateOptions {
            steps: 3,
            compose: ComposeMode::Add,
            ..AnimateOptions::default()
        };
        let r = animate_with(&model, &ConstFlow(0.5, 0.0), &clip.frames[0], &refs, &mut FixedMasks(clip.masks[0].clone()), &opts).unwrap();
        assert_eq!(r.accumulated[2].at(3, 3), (1.5, 0.0));
    }

    #[test]
    fn single_reference_matches_full_encoding() {
        let (model, clip, refs) = setup();
        let z = reference_latents(&model, &refs, 0).unwrap();
        let (f, m) = prepare_encoder_inputs(&clip.flows[0], &clip.masks[0]).unwrap();
        assert_eq!(z, model.encoder.encode(&model.store, &f, &m).unwrap());
        // Wrap-around.
        assert_eq!(reference_latents(&model, &refs, 3).unwrap(), z);
    }

    #[test]
    fn per_semantic_assignment_picks_rows() {
        let (model, clip, _) = setup();
        let other = make_scene(&two_region_scene(16, 2, 2, (-2.0, 0.0), (2.0, -1.0))).unwrap();
        let refs = ReferenceSet {
            refs: vec![
                ReferenceClip::from_clip("a", &clip).unwrap(),
                ReferenceClip::from_clip("b", &other).unwrap(),
            ],
            assignment: vec![0, 0, 0, 0, 1, 0],
            speeds: vec![1.0; 6],
        };
        let z = reference_latents(&model, &refs, 0).unwrap();
        let za = reference_latents(&model, &ReferenceSet::single(refs.refs[0].clone(), 6), 0).unwrap();
        let zb = reference_latents(&model, &ReferenceSet::single(refs.refs[1].clone(), 6), 0).unwrap();
        assert_eq!(z.row(1), za.row(1));
        assert_eq!(z.row(4), zb.row(4));
    }

    #[test]
    fn swapping_assignment_changes_map_only_inside_mask() {
        let (model, clip, _) = setup();
        let other = make_scene(&two_region_scene(16, 2, 2, (-2.0, 0.0), (2.0, -1.0))).unwrap();
        let both = vec![
            ReferenceClip::from_clip("a", &clip).unwrap(),
            ReferenceClip::from_clip("b", &other).unwrap(),
        ];
        let mk = |water| ReferenceSet {
            refs: both.clone(),
            assignment: vec![0, 0, 0, 0, water, 0],
            speeds: vec![1.0; 6],
        };
        let opts = AnimateOptions {
            steps: 2,
            ..AnimateOptions::default()
        };
        let run = |r: &ReferenceSet| animate(&model, &clip.frames[0], r, &mut FixedMasks(clip.masks[0].clone()), &opts).unwrap();
        let (a, b) = (run(&mk(0)), run(&mk(1)));
        let water = clip.masks[0].mask(4);
        let n = water.len();
        for (ma, mb) in a.latent_maps.iter().zip(&b.latent_maps) {
            for c in 0..ma.dim() {
                for p in 0..n {
                    if water[p] == 0 {
                        assert_eq!(ma.as_tensor().plane(c)[p], mb.as_tensor().plane(c)[p]);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_references_rejected() {
        let (model, clip, mut refs) = setup();
        refs.assignment[0] = 5;
        assert!(matches!(reference_latents(&model, &refs, 0), Err(Error::Usage(_))));
        assert!(ReferenceClip::new("x", vec![], vec![]).is_err());
        let _ = clip;
    }
}
