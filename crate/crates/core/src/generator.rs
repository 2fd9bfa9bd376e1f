//! Latent mapping and the skip-connected flow generator.

use rand_chacha::ChaCha8Rng;

use crate::encoder::LatentSet;
use crate::error::{ensure, Result};
use crate::flow::FlowField;
use crate::image::{Image, ValueRange};
use crate::mask::MaskSet;
use crate::nn::{
    instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, Conv2d, ConvShape, Grads,
    InstanceNormCache, Norm, ParamStore, Tensor,
};

/// `d x height x width` spatial broadcast of a [`LatentSet`] over its masks.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMap {
    tensor: Tensor,
}

impl LatentMap {
    pub fn dim(&self) -> usize {
        self.tensor.c
    }

    pub fn height(&self) -> usize {
        self.tensor.h
    }

    pub fn width(&self) -> usize {
        self.tensor.w
    }

    /// Latent vector at pixel `(y, x)`.
    pub fn at(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.tensor.c).map(|c| self.tensor.plane(c)[y * self.tensor.w + x]).collect()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        ensure!(tensor.data.iter().all(|x| x.is_finite()), Contract, "latent map is not finite");
        Ok(Self { tensor })
    }
}

/// Fills each semantic's pixels with that semantic's latent row.
pub fn build_latent_map(latents: &LatentSet, masks: &MaskSet) -> Result<LatentMap> {
    ensure!(
        latents.len() == masks.len(),
        Contract,
        "latent set has {} rows but there are {} masks",
        latents.len(),
        masks.len()
    );
    masks.check_partition()?;
    let (h, w, d) = (masks.height(), masks.width(), latents.dim());
    let mut t = Tensor::zeros(d, h, w);
    let n = h * w;
    for k in 0..masks.len() {
        let row = latents.row(k);
        for (p, &m) in masks.mask(k).iter().enumerate() {
            if m == 1 {
                for (c, &z) in row.iter().enumerate() {
                    t.data[c * n + p] = z;
                }
            }
        }
    }
    Ok(LatentMap { tensor: t })
}

/// Adjoint of [`build_latent_map`]: sums the map gradient inside each mask.
pub fn latent_map_backward(grad: &Tensor, masks: &MaskSet) -> Vec<Vec<f64>> {
    let n = grad.plane_len();
    (0..masks.len())
        .map(|k| {
            let mask = masks.mask(k);
            (0..grad.c)
                .map(|c| {
                    let plane = &grad.data[c * n..(c + 1) * n];
                    plane.iter().zip(mask).filter(|(_, &m)| m == 1).map(|(g, _)| g).sum()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorConfig {
    /// Output range divisor; the tanh output `g` becomes `g / c` in
    /// half-extent normalized coordinates.
    pub c: f64,
    /// Channel widths of the down path; the depth is its length.
    pub widths: Vec<usize>,
    pub latent_dim: usize,
    pub kernel: usize,
    pub norm: Norm,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            c: 32.0,
            widths: vec![16, 32, 64, 64],
            latent_dim: 2,
            kernel: 3,
            norm: Norm::Instance,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.c > 1.0 && self.c.is_finite(), Usage, "c must be > 1, got {}", self.c);
        ensure!(!self.widths.is_empty(), Usage, "generator needs at least one level");
        ensure!(self.widths.iter().all(|&w| w > 0), Usage, "generator widths must be positive");
        ensure!(self.latent_dim > 0, Usage, "latent_dim must be positive");
        ensure!(self.kernel % 2 == 1, Usage, "kernel must be odd");
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// Largest displacement the generator can emit along an axis of `extent` pixels.
    pub fn max_displacement(&self, extent: usize) -> f64 {
        extent as f64 / 2.0 / self.c
    }
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor,
    pre_norm: Tensor,
    norm: Option<InstanceNormCache>,
    pre_act: Tensor,
}

fn block_forward(conv: &Conv2d, norm: Norm, store: &ParamStore, input: Tensor) -> (Tensor, BlockCache) {
    let pre_norm = conv.forward(store, &input);
    let (pre_act, nc) = match norm {
        Norm::Instance => {
            let (y, c) = instance_norm(&pre_norm, None);
            (y, Some(c))
        }
        Norm::None => (pre_norm.clone(), None),
    };
    let out = leaky_relu(&pre_act);
    (
        out,
        BlockCache {
            input,
            pre_norm,
            norm: nc,
            pre_act,
        },
    )
}

fn block_backward(conv: &Conv2d, store: &ParamStore, cache: &BlockCache, grad: &Tensor, grads: &mut Grads, want_input: bool) -> Option<Tensor> {
    let g = leaky_relu_backward(&cache.pre_act, grad);
    let g = match &cache.norm {
        Some(nc) => instance_norm_backward(nc, &g, None),
        None => g,
    };
    debug_assert_eq!(g.data.len(), cache.pre_norm.data.len());
    conv.backward(store, &cache.input, &g, grads, want_input)
}

/// Forward state of one generator pass.
#[derive(Debug, Clone)]
pub struct GeneratorCache {
    down: Vec<BlockCache>,
    up: Vec<BlockCache>,
    up_split: Vec<(usize, usize)>,
    out_input: Tensor,
    tanh_out: Tensor,
    input_channels: usize,
}

/// U-Net style encoder-decoder mapping `latent map (+) image` to a flow.
///
/// Down path: stride-2 convolutions. Up path: nearest 2x upsampling,
/// concatenation with the matching down-path features, stride-1
/// convolution. The output convolution also sees the raw input, then tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionGenerator {
    pub config: GeneratorConfig,
    down: Vec<Conv2d>,
    up: Vec<Conv2d>,
    out: Conv2d,
}

fn down_shape(in_ch: usize, out_ch: usize, k: usize) -> ConvShape {
    ConvShape {
        in_ch,
        out_ch,
        kernel: k,
        stride: 2,
        pad: k / 2,
    }
}

fn same_shape(in_ch: usize, out_ch: usize, k: usize) -> ConvShape {
    ConvShape {
        in_ch,
        out_ch,
        kernel: k,
        stride: 1,
        pad: k / 2,
    }
}

/// Layer shapes in registration order: downs, ups (deepest first), output.
fn layer_shapes(config: &GeneratorConfig) -> (Vec<ConvShape>, Vec<ConvShape>, ConvShape) {
    let input_ch = config.latent_dim + 3;
    let k = config.kernel;
    let depth = config.depth();
    let mut downs = Vec::with_capacity(depth);
    let mut in_ch = input_ch;
    for &w in &config.widths {
        downs.push(down_shape(in_ch, w, k));
        in_ch = w;
    }
    let mut ups = Vec::new();
    let mut cur = config.widths[depth - 1];
    for i in (0..depth - 1).rev() {
        let w = config.widths[i];
        ups.push(same_shape(cur + w, w, k));
        cur = w;
    }
    (downs, ups, same_shape(cur + input_ch, 2, k))
}

impl MotionGenerator {
    pub fn new(store: &mut ParamStore, config: GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let (downs, ups, out) = layer_shapes(&config);
        let down = downs
            .into_iter()
            .enumerate()
            .map(|(i, s)| Conv2d::new(store, &format!("generator.down{i}"), s, rng))
            .collect();
        let up = ups
            .into_iter()
            .enumerate()
            .map(|(i, s)| Conv2d::new(store, &format!("generator.up{i}"), s, rng))
            .collect();
        let out = Conv2d::new(store, "generator.out", out, rng);
        Self { config, down, up, out }
    }

    pub(crate) fn rebind(config: GeneratorConfig, store: &ParamStore) -> Result<Self> {
        let (downs, ups, out) = layer_shapes(&config);
        let down = downs
            .into_iter()
            .enumerate()
            .map(|(i, s)| crate::model::bind_conv(store, &format!("generator.down{i}"), s))
            .collect::<Result<_>>()?;
        let up = ups
            .into_iter()
            .enumerate()
            .map(|(i, s)| crate::model::bind_conv(store, &format!("generator.up{i}"), s))
            .collect::<Result<_>>()?;
        let out = crate::model::bind_conv(store, "generator.out", out)?;
        Ok(Self { config, down, up, out })
    }

    fn check_inputs(&self, latent_map: &LatentMap, image: &Image) -> Result<()> {
        ensure!(
            image.channels() == 3 && image.range() == ValueRange::Normalized,
            Contract,
            "generator expects a normalized 3-channel image"
        );
        ensure!(
            latent_map.dim() == self.config.latent_dim,
            Contract,
            "latent map has {} channels, generator expects {}",
            latent_map.dim(),
            self.config.latent_dim
        );
        ensure!(
            latent_map.height() == image.height() && latent_map.width() == image.width(),
            Contract,
            "latent map is {}x{} but image is {}x{}",
            latent_map.height(),
            latent_map.width(),
            image.height(),
            image.width()
        );
        let unit = 1usize << self.config.depth();
        ensure!(
            image.height().is_multiple_of(unit) && image.width().is_multiple_of(unit),
            Contract,
            "image size {}x{} must be divisible by {unit}",
            image.height(),
            image.width()
        );
        Ok(())
    }

    /// Runs the network on an already-concatenated input tensor.
    pub fn forward_tensor(&self, store: &ParamStore, input: &Tensor) -> (FlowField, GeneratorCache) {
        let mut down_caches = Vec::with_capacity(self.down.len());
        let mut skips: Vec<Tensor> = Vec::with_capacity(self.down.len());
        let mut cur = input.clone();
        for conv in &self.down {
            let (out, cache) = block_forward(conv, self.config.norm, store, cur);
            down_caches.push(cache);
            skips.push(out.clone());
            cur = out;
        }
        let depth = self.down.len();
        let mut up_caches = Vec::with_capacity(self.up.len());
        let mut up_split = Vec::with_capacity(self.up.len());
        for (conv, i) in self.up.iter().zip((0..depth - 1).rev()) {
            let up = cur.upsample2();
            up_split.push((up.c, skips[i].c));
            let cat = Tensor::concat(&[&up, &skips[i]]);
            let (out, cache) = block_forward(conv, self.config.norm, store, cat);
            up_caches.push(cache);
            cur = out;
        }
        let out_input = Tensor::concat(&[&cur.upsample2(), input]);
        let raw = self.out.forward(store, &out_input);
        let tanh_out = Tensor::from_vec(raw.c, raw.h, raw.w, raw.data.iter().map(|v| v.tanh()).collect());
        let flow = self.to_pixels(&tanh_out);
        (
            flow,
            GeneratorCache {
                down: down_caches,
                up: up_caches,
                up_split,
                out_input,
                tanh_out,
                input_channels: input.c,
            },
        )
    }

    fn pixel_scales(&self, h: usize, w: usize) -> (f64, f64) {
        (self.config.max_displacement(w), self.config.max_displacement(h))
    }

    fn to_pixels(&self, g: &Tensor) -> FlowField {
        let (su, sv) = self.pixel_scales(g.h, g.w);
        FlowField::from_parts_unchecked(
            g.h,
            g.w,
            g.plane(0).iter().map(|v| v * su).collect(),
            g.plane(1).iter().map(|v| v * sv).collect(),
        )
    }

    /// Generates a pixel-unit flow from `latent_map (+) image`.
    pub fn generate(&self, store: &ParamStore, latent_map: &LatentMap, image: &Image) -> Result<(FlowField, GeneratorCache)> {
        self.check_inputs(latent_map, image)?;
        let input = generator_input(latent_map, image);
        Ok(self.forward_tensor(store, &input))
    }

    /// Backward from `(dL/du, dL/dv)` of the returned flow. Returns the
    /// gradient with respect to the concatenated input when `want_input`.
    pub fn backward(&self, store: &ParamStore, cache: &GeneratorCache, grad_u: &[f64], grad_v: &[f64], grads: &mut Grads, want_input: bool) -> Option<Tensor> {
        let g = &cache.tanh_out;
        let (su, sv) = self.pixel_scales(g.h, g.w);
        let n = g.plane_len();
        let mut d_raw = Tensor::zeros(2, g.h, g.w);
        for i in 0..n {
            let a = g.data[i];
            let b = g.data[n + i];
            d_raw.data[i] = grad_u[i] * su * (1.0 - a * a);
            d_raw.data[n + i] = grad_v[i] * sv * (1.0 - b * b);
        }
        let d_out_in = self.out.backward(store, &cache.out_input, &d_raw, grads, true).expect("input grad");
        let cur_c = d_out_in.c - cache.input_channels;
        let parts = d_out_in.split(&[cur_c, cache.input_channels]);
        let mut d_input = parts[1].clone();
        let mut d_cur = Tensor::upsample2_backward(&parts[0]);

        let depth = self.down.len();
        let mut d_skips: Vec<Option<Tensor>> = vec![None; depth];
        for (j, conv) in self.up.iter().enumerate().rev() {
            // up[j] consumed the skip from down level depth - 2 - j.
            let i = depth - 2 - j;
            let (uc, sc) = cache.up_split[j];
            let d_cat = block_backward(conv, store, &cache.up[j], &d_cur, grads, true).expect("input grad");
            let parts = d_cat.split(&[uc, sc]);
            d_skips[i] = Some(parts[1].clone());
            d_cur = Tensor::upsample2_backward(&parts[0]);
        }
        for i in (0..depth).rev() {
            if let Some(s) = d_skips[i].take() {
                d_cur.add_assign(&s);
            }
            let need = want_input || i > 0;
            {
                let dx = block_backward(&self.down[i], store, &cache.down[i], &d_cur, grads, need)?;
                d_cur = dx
            }
        }
        d_input.add_assign(&d_cur);
        Some(d_input)
    }
}

/// Channel concatenation `latent map (+) image`.
pub fn generator_input(latent_map: &LatentMap, image: &Image) -> Tensor {
    let img = Tensor::from_vec(image.channels(), image.height(), image.width(), image.data().to_vec());
    Tensor::concat(&[latent_map.as_tensor(), &img])
}

/// Generates a flow from a latent map and a normalized image.
pub fn generate_flow(store: &ParamStore, generator: &MotionGenerator, latent_map: &LatentMap, image: &Image) -> Result<FlowField> {
    generator.generate(store, latent_map, image).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::SemanticClass;
    use rand::SeedableRng;

    #[test]
    fn single_mask_gives_constant_map() {
        let masks = MaskSet::new(2, 3, vec![vec![1; 6]]).unwrap();
        let z = LatentSet::new(vec![vec![0.3, -0.2]], vec![true]).unwrap();
        let map = build_latent_map(&z, &masks).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(map.at(y, x), vec![0.3, -0.2]);
            }
        }
    }

    #[test]
    fn halves_give_piecewise_map() {
        let masks = MaskSet::from_class_fn(2, 4, |_, x| if x < 2 { SemanticClass::Others } else { SemanticClass::Sky });
        let mut z = LatentSet::zeros(6, 2);
        z.set_row(0, vec![1.0, 2.0], true);
        z.set_row(1, vec![-1.0, 0.5], true);
        let map = build_latent_map(&z, &masks).unwrap();
        assert_eq!(map.at(1, 0), vec![1.0, 2.0]);
        assert_eq!(map.at(1, 3), vec![-1.0, 0.5]);
    }

    #[test]
    fn overlapping_masks_rejected() {
        let masks = MaskSet::new(1, 2, vec![vec![1, 1], vec![0, 1]]).unwrap();
        let z = LatentSet::zeros(2, 2);
        assert!(build_latent_map(&z, &masks).is_err());
    }

    #[test]
    fn output_shape_and_bound() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = GeneratorConfig {
            widths: vec![4, 4],
            ..GeneratorConfig::default()
        };
        let gen = MotionGenerator::new(&mut store, config, &mut rng);
        let map = LatentMap::from_tensor(Tensor::from_vec(2, 8, 12, (0..192).map(|i| (i as f64 * 0.37).sin() * 50.0).collect())).unwrap();
        let img = Image::from_fn(3, 8, 12, ValueRange::Normalized, |c, y, x| ((c + y * x) as f64).cos()).unwrap();
        let flow = generate_flow(&store, &gen, &map, &img).unwrap();
        assert_eq!((flow.height(), flow.width()), (8, 12));
        assert!(flow.u().iter().all(|v| v.abs() < 12.0 / 2.0 / 32.0));
        assert!(flow.v().iter().all(|v| v.abs() < 8.0 / 2.0 / 32.0));
        let again = generate_flow(&store, &gen, &map, &img).unwrap();
        assert_eq!(flow, again);
    }

    #[test]
    fn size_not_divisible_by_depth_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gen = MotionGenerator::new(&mut store, GeneratorConfig::default(), &mut rng);
        let map = LatentMap::from_tensor(Tensor::zeros(2, 8, 8)).unwrap();
        let img = Image::filled(3, 8, 8, ValueRange::Normalized, 0.0).unwrap();
        assert!(generate_flow(&store, &gen, &map, &img).is_err());
    }
}
