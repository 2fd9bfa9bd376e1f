//! Synthetic time-lapse scenes with analytic flows and masks, and the
//! on-disk clip layout shared with externally precomputed data.
//!
//! Clip directory layout:
//!
//! ```text
//! <clip>/manifest.json           size, frame_count, classes, seed, motion models
//! <clip>/frames/frame_000000.png RGB frames
//! <clip>/flows/flow_000000.flo   backward flow from frame t to frame t+1
//! <clip>/masks/mask_000000.png   8-bit class-index map per frame
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::flow::{compose_flows, read_flow, warp_backward, write_flow, FlowField};
use crate::image::{Image, ValueRange};
use crate::mask::{MaskSet, SemanticClass};

/// Largest per-step displacement a scene may request, in pixels.
pub const MAX_SCENE_MOTION: f64 = 4.0;
/// Minimum mean squared finite difference of frame 0 inside each region.
pub const MIN_GRADIENT_ENERGY: f64 = 1e-4;

/// Frames, backward flows and masks of one clip. Frames are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: Vec<Image>,
    /// `flows[t]` maps frame `t` to frame `t + 1`.
    pub flows: Vec<FlowField>,
    pub masks: Vec<MaskSet>,
}

impl Clip {
    pub fn new(frames: Vec<Image>, flows: Vec<FlowField>, masks: Vec<MaskSet>) -> Result<Self> {
        ensure!(!frames.is_empty(), Data, "clip has no frames");
        ensure!(
            flows.len() + 1 == frames.len() && masks.len() == frames.len(),
            Data,
            "clip has {} frames, {} flows and {} mask sets",
            frames.len(),
            flows.len(),
            masks.len()
        );
        let (h, w) = (frames[0].height(), frames[0].width());
        for (t, f) in frames.iter().enumerate() {
            ensure!(
                f.height() == h && f.width() == w && f.channels() == 3,
                Data,
                "frame {t} is {}x{}x{}, expected 3x{h}x{w}",
                f.channels(),
                f.height(),
                f.width()
            );
        }
        for (t, f) in flows.iter().enumerate() {
            ensure!(f.height() == h && f.width() == w, Data, "flow {t} has the wrong size");
        }
        for (t, m) in masks.iter().enumerate() {
            ensure!(m.height() == h && m.width() == w, Data, "mask set {t} has the wrong size");
        }
        let frames = frames.into_iter().map(|f| f.to_normalized()).collect();
        Ok(Self { frames, flows, masks })
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps one frame out of every `stride`, composing the flows in between.
    pub fn resample(&self, stride: usize) -> Result<Clip> {
        ensure!(stride >= 1, Usage, "stride must be at least 1");
        if stride == 1 {
            return Ok(self.clone());
        }
        let keep: Vec<usize> = (0..self.frames.len()).step_by(stride).collect();
        let mut flows = Vec::with_capacity(keep.len().saturating_sub(1));
        for pair in keep.windows(2) {
            let mut acc = self.flows[pair[0]].clone();
            for t in pair[0] + 1..pair[1] {
                acc = compose_flows(&acc, &self.flows[t])?;
            }
            flows.push(acc);
        }
        Ok(Clip {
            frames: keep.iter().map(|&i| self.frames[i].clone()).collect(),
            flows,
            masks: keep.iter().map(|&i| self.masks[i].clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
    Rect { x0: usize, y0: usize, x1: usize, y1: usize },
    /// Pixels with `nx * x + ny * y >= offset`.
    HalfPlane { nx: f64, ny: f64, offset: f64 },
}

impl Geometry {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match *self {
            Geometry::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Geometry::HalfPlane { nx, ny, offset } => nx * x as f64 + ny * y as f64 >= offset,
        }
    }
}

/// Sinusoidal plaid texture around a base color (normalized units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f64; 3],
    pub amplitude: f64,
    /// Cycles per pixel along x and y.
    pub freq_x: f64,
    pub freq_y: f64,
    pub phase: f64,
}

impl Texture {
    fn value(&self, c: usize, y: usize, x: usize) -> f64 {
        let cx = (2.0 * PI * self.freq_x * x as f64 + self.phase + 0.9 * c as f64).sin();
        let cy = (2.0 * PI * self.freq_y * y as f64 + 1.7 * self.phase + 1.3 * c as f64).sin();
        self.base[c] + self.amplitude * 0.5 * (cx + cy)
    }
}

/// Per-step displacement of a region, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Constant { u: f64, v: f64 },
    /// `(u + amp_u * sin(2 pi t / period + phase), v + amp_v * sin(...))`.
    Sinusoidal {
        u: f64,
        v: f64,
        amp_u: f64,
        amp_v: f64,
        period: f64,
        phase: f64,
    },
}

impl Motion {
    pub fn at(&self, t: usize) -> (f64, f64) {
        match *self {
            Motion::Constant { u, v } => (u, v),
            Motion::Sinusoidal {
                u,
                v,
                amp_u,
                amp_v,
                period,
                phase,
            } => {
                let s = (2.0 * PI * t as f64 / period + phase).sin();
                (u + amp_u * s, v + amp_v * s)
            }
        }
    }

    fn bound(&self) -> (f64, f64) {
        match *self {
            Motion::Constant { u, v } => (u.abs(), v.abs()),
            Motion::Sinusoidal { u, v, amp_u, amp_v, .. } => (u.abs() + amp_u.abs(), v.abs() + amp_v.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub texture: Texture,
    pub motion: Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub class: SemanticClass,
    pub geometry: Geometry,
    pub texture: Texture,
    pub motion: Motion,
}

/// Description of a synthetic scene; pixels outside every region take the
/// background layer and the class `others`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    /// Number of frames (flows = frames - 1).
    pub frame_count: usize,
    pub seed: u64,
    /// Amplitude of the seeded per-pixel noise added to frame 0.
    #[serde(default)]
    pub noise: f64,
    pub background: Layer,
    pub regions: Vec<Region>,
}

impl Scene {
    fn validate(&self) -> Result<()> {
        ensure!(self.width > 0 && self.height > 0, Scene, "scene size must be positive");
        ensure!(self.frame_count >= 1, Scene, "scene needs at least one frame");
        let layers = std::iter::once(&self.background.motion).chain(self.regions.iter().map(|r| &r.motion));
        for m in layers {
            let (bu, bv) = m.bound();
            ensure!(
                bu.hypot(bv) <= MAX_SCENE_MOTION + 1e-12,
                Scene,
                "motion {m:?} can exceed {MAX_SCENE_MOTION} px/step"
            );
        }
        if let Some(Motion::Sinusoidal { period, .. }) = self
            .regions
            .iter()
            .map(|r| &r.motion)
            .chain(std::iter::once(&self.background.motion))
            .find(|m| matches!(m, Motion::Sinusoidal { period, .. } if *period <= 0.0))
        {
            return Err(Error::Scene(format!("sinusoidal period must be positive, got {period}")));
        }
        Ok(())
    }

    /// Owning region per pixel (`None` = background).
    fn region_map(&self) -> Result<Vec<Option<usize>>> {
        let mut owner = vec![None; self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                let mut hit = None;
                for (i, r) in self.regions.iter().enumerate() {
                    if r.geometry.contains(y, x) {
                        if let Some(j) = hit {
                            return Err(Error::Scene(format!(
                                "regions {j} and {i} overlap at pixel ({x}, {y})"
                            )));
                        }
                        hit = Some(i);
                    }
                }
                owner[y * self.width + x] = hit;
            }
        }
        Ok(owner)
    }

    /// Serialized motion models for manifests.
    pub fn motion_models(&self) -> serde_json::Value {
        let mut list = vec![serde_json::json!({"class": "others", "motion": self.background.motion})];
        for r in &self.regions {
            list.push(serde_json::json!({"class": r.class, "motion": r.motion}));
        }
        serde_json::Value::Array(list)
    }
}

/// Renders a scene: frame 0 from textures, every later frame by warping its
/// predecessor with the analytic backward flow.
pub fn make_scene(scene: &Scene) -> Result<Clip> {
    scene.validate()?;
    let owner = scene.region_map()?;
    let (h, w) = (scene.height, scene.width);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let noise: Vec<f64> = (0..3 * h * w)
        .map(|_| if scene.noise > 0.0 { rng.gen_range(-scene.noise..=scene.noise) } else { 0.0 })
        .collect();
    let texture_of = |p: usize| match owner[p] {
        Some(i) => &scene.regions[i].texture,
        None => &scene.background.texture,
    };
    let frame0 = Image::from_fn(3, h, w, ValueRange::Normalized, |c, y, x| {
        let p = y * w + x;
        (texture_of(p).value(c, y, x) + noise[c * h * w + p]).clamp(-1.0, 1.0)
    })?;
    check_texture_energy(&frame0, &owner, scene.regions.len())?;

    let masks = MaskSet::from_class_fn(h, w, |y, x| match owner[y * w + x] {
        Some(i) => scene.regions[i].class,
        None => SemanticClass::Others,
    });
    let mut frames = vec![frame0];
    let mut flows = Vec::with_capacity(scene.frame_count - 1);
    for t in 0..scene.frame_count - 1 {
        let flow = FlowField::from_fn(h, w, |y, x| match owner[y * w + x] {
            Some(i) => scene.regions[i].motion.at(t),
            None => scene.background.motion.at(t),
        })?;
        let next = warp_backward(frames.last().unwrap(), &flow)?;
        frames.push(next);
        flows.push(flow);
    }
    Clip::new(frames, flows, vec![masks; scene.frame_count])
}

fn check_texture_energy(frame: &Image, owner: &[Option<usize>], regions: usize) -> Result<()> {
    let (h, w) = (frame.height(), frame.width());
    let mut energy = vec![0.0; regions + 1];
    let mut count = vec![0usize; regions + 1];
    let slot = |p: usize| owner[p].map_or(0, |i| i + 1);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let s = slot(p);
            if x + 1 < w && slot(p + 1) == s {
                energy[s] += (0..3).map(|c| (frame.plane(c)[p + 1] - frame.plane(c)[p]).powi(2)).sum::<f64>();
                count[s] += 1;
            }
            if y + 1 < h && slot(p + w) == s {
                energy[s] += (0..3).map(|c| (frame.plane(c)[p + w] - frame.plane(c)[p]).powi(2)).sum::<f64>();
                count[s] += 1;
            }
        }
    }
    for s in 0..=regions {
        if count[s] > 0 {
            let e = energy[s] / (3.0 * count[s] as f64);
            ensure!(
                e > MIN_GRADIENT_ENERGY,
                Scene,
                "texture of {} has gradient energy {e:.2e}, below the floor {MIN_GRADIENT_ENERGY:.0e}",
                if s == 0 { "the background".to_string() } else { format!("region {}", s - 1) }
            );
        }
    }
    Ok(())
}

/// Random plaid texture with a base color drawn around `center`.
pub fn random_texture(rng: &mut ChaCha8Rng, center: [f64; 3]) -> Texture {
    Texture {
        base: center.map(|c| (c + rng.gen_range(-0.15..0.15)).clamp(-0.7, 0.7)),
        amplitude: rng.gen_range(0.2..0.3),
        freq_x: rng.gen_range(0.06..0.12),
        freq_y: rng.gen_range(0.06..0.12),
        phase: rng.gen_range(0.0..2.0 * PI),
    }
}

/// Two-region scene: sky above a random horizontal boundary, water below,
/// each with its own constant motion.
pub fn two_region_scene(size: usize, frame_count: usize, seed: u64, sky_motion: (f64, f64), water_motion: (f64, f64)) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5c_e0e5);
    let boundary = rng.gen_range(size * 5 / 16..=size * 11 / 16) as f64;
    let sky = random_texture(&mut rng, [-0.1, 0.2, 0.6]);
    let water = random_texture(&mut rng, [-0.5, -0.2, 0.1]);
    Scene {
        width: size,
        height: size,
        frame_count,
        seed,
        noise: 0.0,
        background: Layer {
            texture: water.clone(),
            motion: Motion::Constant { u: 0.0, v: 0.0 },
        },
        regions: vec![
            Region {
                class: SemanticClass::Sky,
                geometry: Geometry::HalfPlane {
                    nx: 0.0,
                    ny: -1.0,
                    offset: -(boundary - 1.0),
                },
                texture: sky,
                motion: Motion::Constant {
                    u: sky_motion.0,
                    v: sky_motion.1,
                },
            },
            Region {
                class: SemanticClass::Water,
                geometry: Geometry::HalfPlane {
                    nx: 0.0,
                    ny: 1.0,
                    offset: boundary,
                },
                texture: water,
                motion: Motion::Constant {
                    u: water_motion.0,
                    v: water_motion.1,
                },
            },
        ],
    }
}

/// `count` two-region clips whose motion components are drawn from
/// `{-2, -1, 1, 2}` px/step.
pub fn toy_dataset(count: usize, size: usize, frame_count: usize, seed: u64) -> Result<Vec<Clip>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = [-2.0, -1.0, 1.0, 2.0];
    let pick = |rng: &mut ChaCha8Rng| choices[rng.gen_range(0..4)];
    (0..count)
        .map(|_| {
            let sky = (pick(&mut rng), pick(&mut rng));
            let water = (pick(&mut rng), pick(&mut rng));
            let scene = two_region_scene(size, frame_count, rng.gen(), sky, water);
            make_scene(&scene)
        })
        .collect()
}

/// Clip metadata stored next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    /// `[width, height]`.
    pub size: [usize; 2],
    pub frame_count: usize,
    pub classes: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub motion_models: serde_json::Value,
}

pub fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("frames").join(format!("frame_{t:06}.png"))
}

pub fn flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("flows").join(format!("flow_{t:06}.flo"))
}

pub fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("masks").join(format!("mask_{t:06}.png"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a clip in the directory layout described at module level.
pub fn save_clip(dir: impl AsRef<Path>, clip: &Clip, manifest: &ClipManifest) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["frames", "flows", "masks"] {
        create_dir(&dir.join(sub))?;
    }
    for (t, f) in clip.frames.iter().enumerate() {
        f.save_png(frame_path(dir, t))?;
    }
    for (t, f) in clip.flows.iter().enumerate() {
        write_flow(flow_path(dir, t), f)?;
    }
    for (t, m) in clip.masks.iter().enumerate() {
        m.save_png(mask_path(dir, t))?;
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Manifest for a rendered synthetic scene.
pub fn scene_manifest(scene: &Scene, clip: &Clip) -> ClipManifest {
    let mut classes: Vec<SemanticClass> = vec![SemanticClass::Others];
    classes.extend(scene.regions.iter().map(|r| r.class));
    classes.sort();
    classes.dedup();
    ClipManifest {
        size: [clip.width(), clip.height()],
        frame_count: clip.len(),
        classes: classes.iter().map(|c| c.name().to_string()).collect(),
        seed: Some(scene.seed),
        motion_models: scene.motion_models(),
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Option<ClipManifest>> {
    let path = dir.as_ref().join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Loads a clip directory, optionally keeping one frame in `stride`.
pub fn load_clip(dir: impl AsRef<Path>, stride: usize) -> Result<Clip> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    while frame_path(dir, frames.len()).exists() {
        frames.push(Image::load_png(frame_path(dir, frames.len()))?);
    }
    ensure!(!frames.is_empty(), Data, "{}: no frames found", dir.display());
    let (h, w) = (frames[0].height(), frames[0].width());
    for (t, f) in frames.iter().enumerate() {
        ensure!(
            f.height() == h && f.width() == w && f.channels() == 3,
            Data,
            "{}: frame is {}x{}x{}, expected RGB {h}x{w}",
            frame_path(dir, t).display(),
            f.channels(),
            f.height(),
            f.width()
        );
    }
    let mut flows = Vec::with_capacity(frames.len() - 1);
    for t in 0..frames.len() - 1 {
        let path = flow_path(dir, t);
        ensure!(
            path.exists(),
            Data,
            "missing flow for frame pair ({t}, {}): {}",
            t + 1,
            path.display()
        );
        let f = read_flow(&path)?;
        ensure!(
            f.height() == h && f.width() == w,
            Data,
            "{}: flow is {}x{}, expected {h}x{w}",
            path.display(),
            f.height(),
            f.width()
        );
        flows.push(f);
    }
    let mut masks = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        let path = mask_path(dir, t);
        ensure!(path.exists(), Data, "missing mask for frame {t}: {}", path.display());
        let m = MaskSet::load_png(&path, SemanticClass::ALL.len())?;
        ensure!(
            m.height() == h && m.width() == w,
            Data,
            "{}: mask is {}x{}, expected {h}x{w}",
            path.display(),
            m.height(),
            m.width()
        );
        masks.push(m);
    }
    if let Some(manifest) = read_manifest(dir)? {
        ensure!(
            manifest.size == [w, h],
            Data,
            "{}: manifest size {:?} disagrees with frames ({w}x{h})",
            dir.display(),
            manifest.size
        );
    }
    Clip::new(frames, flows, masks)?.resample(stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_layer(u: f64, v: f64) -> Layer {
        Layer {
            texture: Texture {
                base: [0.0, 0.1, -0.1],
                amplitude: 0.4,
                freq_x: 0.11,
                freq_y: 0.07,
                phase: 0.3,
            },
            motion: Motion::Constant { u, v },
        }
    }

    #[test]
    fn static_scene_repeats_frames() {
        let scene = Scene {
            width: 12,
            height: 10,
            frame_count: 4,
            seed: 1,
            noise: 0.0,
            background: plain_layer(0.0, 0.0),
            regions: vec![],
        };
        let clip = make_scene(&scene).unwrap();
        assert_eq!(clip.len(), 4);
        for f in &clip.frames {
            assert_eq!(f, &clip.frames[0]);
        }
        for f in &clip.flows {
            assert_eq!(f, &FlowField::zeros(10, 12));
        }
    }

    #[test]
    fn half_regions_give_piecewise_flow() {
        let l = plain_layer(0.0, 0.0);
        let scene = Scene {
            width: 8,
            height: 6,
            frame_count: 3,
            seed: 2,
            noise: 0.0,
            background: l.clone(),
            regions: vec![
                Region {
                    class: SemanticClass::Sky,
                    geometry: Geometry::Rect { x0: 0, y0: 0, x1: 4, y1: 6 },
                    texture: l.texture.clone(),
                    motion: Motion::Constant { u: 1.0, v: 0.0 },
                },
                Region {
                    class: SemanticClass::Water,
                    geometry: Geometry::Rect { x0: 4, y0: 0, x1: 8, y1: 6 },
                    texture: l.texture.clone(),
                    motion: Motion::Constant { u: 0.0, v: 1.0 },
                },
            ],
        };
        let clip = make_scene(&scene).unwrap();
        for f in &clip.flows {
            for y in 0..6 {
                for x in 0..8 {
                    assert_eq!(f.at(y, x), if x < 4 { (1.0, 0.0) } else { (0.0, 1.0) });
                }
            }
        }
        assert_eq!(clip.masks[0].count(SemanticClass::Sky.index()), 24);
        clip.masks[0].check_partition().unwrap();
    }

    #[test]
    fn overlapping_regions_are_scene_errors() {
        let l = plain_layer(0.0, 0.0);
        let r = Region {
            class: SemanticClass::Sky,
            geometry: Geometry::Rect { x0: 0, y0: 0, x1: 3, y1: 3 },
            texture: l.texture.clone(),
            motion: Motion::Constant { u: 0.0, v: 0.0 },
        };
        let scene = Scene {
            width: 4,
            height: 4,
            frame_count: 2,
            seed: 0,
            noise: 0.0,
            background: l,
            regions: vec![r.clone(), r],
        };
        assert!(matches!(make_scene(&scene), Err(Error::Scene(_))));
    }

    #[test]
    fn excessive_motion_and_flat_texture_rejected() {
        let mut scene = Scene {
            width: 8,
            height: 8,
            frame_count: 2,
            seed: 0,
            noise: 0.0,
            background: plain_layer(5.0, 0.0),
            regions: vec![],
        };
        assert!(matches!(make_scene(&scene), Err(Error::Scene(_))));
        scene.background = plain_layer(1.0, 0.0);
        scene.background.texture.amplitude = 0.0;
        assert!(matches!(make_scene(&scene), Err(Error::Scene(_))));
    }

    #[test]
    fn frames_follow_their_flows() {
        let scene = two_region_scene(32, 4, 7, (1.0, -2.0), (-1.5, 0.5));
        let clip = make_scene(&scene).unwrap();
        for t in 0..3 {
            let w = warp_backward(&clip.frames[t], &clip.flows[t]).unwrap();
            let diff = w
                .data()
                .iter()
                .zip(clip.frames[t + 1].data())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-6);
        }
    }

    #[test]
    fn determinism() {
        let scene = two_region_scene(16, 3, 11, (1.0, 1.0), (-2.0, 1.0));
        assert_eq!(make_scene(&scene).unwrap(), make_scene(&scene).unwrap());
    }

    #[test]
    fn resample_composes_flows() {
        let scene = two_region_scene(16, 9, 3, (1.0, 0.0), (0.0, 1.0));
        let clip = make_scene(&scene).unwrap();
        let r = clip.resample(4).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.flows.len(), 2);
        assert_eq!(r.frames[1], clip.frames[4]);
        // Deep inside the sky region the composed displacement is 4 steps.
        assert_eq!(r.flows[0].at(0, 2), (4.0, 0.0));
    }
}
