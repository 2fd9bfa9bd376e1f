//! Fine-grained motion encoder.
//!
//! A stack of partial convolutions reads the flow inside one semantic mask at
//! a time. Features at the final valid positions are averaged and an affine
//! head maps them to a `d`-dimensional latent. Because every layer zeroes
//! masked-out inputs, the latent of semantic `i` depends only on flow values
//! where mask `i` is set.

use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::flow::FlowField;
use crate::mask::MaskSet;
use crate::nn::{
    instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, ConvShape, Grads, InstanceNormCache, Norm,
    ParamId, ParamStore, PartialConv2d, PartialConvOutput, Tensor,
};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub latent_dim: usize,
    pub norm: Norm,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64, 64],
            kernel: 3,
            stride: 2,
            latent_dim: 2,
            norm: Norm::None,
        }
    }
}

/// Per-semantic latent vectors; invalid rows (absent semantics) are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    rows: Vec<Vec<f64>>,
    valid: Vec<bool>,
}

impl LatentSet {
    pub fn new(rows: Vec<Vec<f64>>, valid: Vec<bool>) -> Result<Self> {
        ensure!(rows.len() == valid.len(), Contract, "latent rows and validity flags differ in length");
        ensure!(!rows.is_empty(), Contract, "latent set is empty");
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            ensure!(r.len() == d, Contract, "latent row {i} has dimension {}, expected {d}", r.len());
            ensure!(r.iter().all(|x| x.is_finite()), Contract, "latent row {i} is not finite");
            ensure!(valid[i] || r.iter().all(|&x| x == 0.0), Contract, "invalid latent row {i} must be zero");
        }
        Ok(Self { rows, valid })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            rows: vec![vec![0.0; d]; n],
            valid: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Replaces row `i` (an invalid row must be zero).
    pub fn set_row(&mut self, i: usize, row: Vec<f64>, valid: bool) {
        assert_eq!(row.len(), self.dim(), "latent row dimension");
        self.rows[i] = if valid { row } else { vec![0.0; self.dim()] };
        self.valid[i] = valid;
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Tensor,
    in_mask: Vec<u8>,
    conv: PartialConvOutput,
    norm: Option<InstanceNormCache>,
    pre_act: Tensor,
}

/// Everything the backward pass needs for one semantic.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    layers: Vec<LayerCache>,
    activations: Tensor,
    final_mask: Vec<u8>,
    pooled: Vec<f64>,
    count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionEncoder {
    pub config: EncoderConfig,
    layers: Vec<PartialConv2d>,
    head_weight: ParamId,
    head_bias: ParamId,
}

impl MotionEncoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        assert!(!config.widths.is_empty(), "encoder needs at least one layer");
        let mut layers = Vec::with_capacity(config.widths.len());
        let mut in_ch = 2;
        for (i, &w) in config.widths.iter().enumerate() {
            let shape = ConvShape {
                in_ch,
                out_ch: w,
                kernel: config.kernel,
                stride: config.stride,
                pad: config.kernel / 2,
            };
            layers.push(PartialConv2d::new(store, &format!("encoder.pconv{i}"), shape, rng));
            in_ch = w;
        }
        let bound = 1.0 / (in_ch as f64).sqrt();
        let head_weight = store.add_uniform("encoder.head.weight", vec![config.latent_dim, in_ch], bound, rng);
        let head_bias = store.add_uniform("encoder.head.bias", vec![config.latent_dim], bound, rng);
        Self {
            config,
            layers,
            head_weight,
            head_bias,
        }
    }

    /// Re-binds parameter handles against a store loaded from a checkpoint.
    pub(crate) fn rebind(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        let mut layers = Vec::new();
        let mut in_ch = 2;
        for (i, &w) in config.widths.iter().enumerate() {
            let shape = ConvShape {
                in_ch,
                out_ch: w,
                kernel: config.kernel,
                stride: config.stride,
                pad: config.kernel / 2,
            };
            let conv = crate::model::bind_conv(store, &format!("encoder.pconv{i}"), shape)?;
            layers.push(PartialConv2d { conv });
            in_ch = w;
        }
        let head_weight = crate::model::bind(store, "encoder.head.weight", &[config.latent_dim, in_ch])?;
        let head_bias = crate::model::bind(store, "encoder.head.bias", &[config.latent_dim])?;
        Ok(Self {
            config,
            layers,
            head_weight,
            head_bias,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn layers(&self) -> &[PartialConv2d] {
        &self.layers
    }

    /// Encodes the flow restricted to one binary mask. Returns `None` when
    /// the mask is empty.
    pub fn encode_semantic(&self, store: &ParamStore, flow: &Tensor, mask: &[u8]) -> Option<(Vec<f64>, EncodeCache)> {
        assert_eq!(flow.c, 2, "encoder consumes a 2-channel flow");
        if mask.iter().all(|&m| m == 0) {
            return None;
        }
        let mut x = flow.clone();
        let mut m = mask.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let conv = layer.forward(store, &x, &m);
            let (pre_act, norm) = match self.config.norm {
                Norm::Instance => {
                    let (y, c) = instance_norm(&conv.features, Some(&conv.mask));
                    (y, Some(c))
                }
                Norm::None => (conv.features.clone(), None),
            };
            let act = leaky_relu(&pre_act);
            let next_mask = conv.mask.clone();
            caches.push(LayerCache {
                input: std::mem::replace(&mut x, act),
                in_mask: std::mem::replace(&mut m, next_mask),
                conv,
                norm,
                pre_act,
            });
        }
        let count = m.iter().filter(|&&v| v != 0).count();
        if count == 0 {
            return None;
        }
        let mut pooled = vec![0.0; x.c];
        for (c, slot) in pooled.iter_mut().enumerate() {
            *slot = x
                .plane(c)
                .iter()
                .zip(&m)
                .filter(|(_, &mv)| mv != 0)
                .map(|(v, _)| *v)
                .sum::<f64>()
                / count as f64;
        }
        let w = store.get(self.head_weight);
        let b = store.get(self.head_bias);
        let latent: Vec<f64> = (0..self.config.latent_dim)
            .map(|j| b[j] + (0..x.c).map(|c| w[j * x.c + c] * pooled[c]).sum::<f64>())
            .collect();
        Some((
            latent,
            EncodeCache {
                layers: caches,
                activations: x,
                final_mask: m,
                pooled,
                count,
            },
        ))
    }

    /// Backpropagates `d loss / d latent` for one semantic. Returns the flow
    /// gradient when `want_input`.
    pub fn backward_semantic(
        &self,
        store: &ParamStore,
        cache: &EncodeCache,
        grad_latent: &[f64],
        grads: &mut Grads,
        want_input: bool,
    ) -> Option<Tensor> {
        let ch = cache.activations.c;
        let w = store.get(self.head_weight);
        {
            let gw = grads.get_mut(self.head_weight);
            for j in 0..self.config.latent_dim {
                for c in 0..ch {
                    gw[j * ch + c] += grad_latent[j] * cache.pooled[c];
                }
            }
        }
        {
            let gb = grads.get_mut(self.head_bias);
            for j in 0..self.config.latent_dim {
                gb[j] += grad_latent[j];
            }
        }
        let act = &cache.activations;
        let mut grad = Tensor::zeros(act.c, act.h, act.w);
        for c in 0..ch {
            let gp: f64 = (0..self.config.latent_dim).map(|j| grad_latent[j] * w[j * ch + c]).sum::<f64>()
                / cache.count as f64;
            for (g, &m) in grad.plane_mut(c).iter_mut().zip(&cache.final_mask) {
                if m != 0 {
                    *g = gp;
                }
            }
        }
        for (li, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let g = leaky_relu_backward(&lc.pre_act, &grad);
            let g = match &lc.norm {
                Some(nc) => instance_norm_backward(nc, &g, Some(&lc.conv.mask)),
                None => g,
            };
            let need_input = want_input || li > 0;
            {
                let dx = layer.backward(store, &lc.input, &lc.in_mask, &lc.conv, &g, grads, need_input)?;
                grad = dx
            }
        }
        Some(grad)
    }

    /// Encodes every semantic of `masks`; empty masks give zero, invalid rows.
    pub fn encode(&self, store: &ParamStore, flow: &FlowField, masks: &MaskSet) -> Result<LatentSet> {
        ensure!(
            flow.height() == masks.height() && flow.width() == masks.width(),
            Contract,
            "encode: flow is {}x{} but masks are {}x{}",
            flow.height(),
            flow.width(),
            masks.height(),
            masks.width()
        );
        let x = flow_tensor(flow);
        let d = self.config.latent_dim;
        let mut rows = Vec::with_capacity(masks.len());
        let mut valid = Vec::with_capacity(masks.len());
        for i in 0..masks.len() {
            match self.encode_semantic(store, &x, masks.mask(i)) {
                Some((z, _)) => {
                    rows.push(z);
                    valid.push(true);
                }
                None => {
                    rows.push(vec![0.0; d]);
                    valid.push(false);
                }
            }
        }
        LatentSet::new(rows, valid)
    }
}

pub(crate) fn flow_tensor(flow: &FlowField) -> Tensor {
    let mut data = Vec::with_capacity(2 * flow.height() * flow.width());
    data.extend_from_slice(flow.u());
    data.extend_from_slice(flow.v());
    Tensor::from_vec(2, flow.height(), flow.width(), data)
}

/// Brings generator-resolution flow and masks to encoder resolution:
/// 2x2 average pooling for the flow (values keep their pixel units) and
/// nearest-neighbor for the masks.
pub fn prepare_encoder_inputs(flow: &FlowField, masks: &MaskSet) -> Result<(FlowField, MaskSet)> {
    let (h, w) = (flow.height(), flow.width());
    ensure!(
        h % 2 == 0 && w % 2 == 0,
        Contract,
        "encoder inputs need even dimensions, got {h}x{w}"
    );
    ensure!(
        masks.height() == h && masks.width() == w,
        Contract,
        "flow is {h}x{w} but masks are {}x{}",
        masks.height(),
        masks.width()
    );
    let (oh, ow) = (h / 2, w / 2);
    let pool = |plane: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(oh * ow);
        for y in 0..oh {
            for x in 0..ow {
                let a = plane[(2 * y) * w + 2 * x];
                let b = plane[(2 * y) * w + 2 * x + 1];
                let c = plane[(2 * y + 1) * w + 2 * x];
                let d = plane[(2 * y + 1) * w + 2 * x + 1];
                out.push((a + b + c + d) * 0.25);
            }
        }
        out
    };
    let pooled = FlowField::from_parts_unchecked(oh, ow, pool(flow.u()), pool(flow.v()));
    Ok((pooled, masks.downsample_nearest2()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::SemanticClass;
    use rand::SeedableRng;

    fn small_encoder(norm: Norm) -> (ParamStore, MotionEncoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = MotionEncoder::new(
            &mut store,
            EncoderConfig {
                widths: vec![4, 6],
                norm,
                ..EncoderConfig::default()
            },
            &mut rng,
        );
        (store, enc)
    }

    #[test]
    fn six_masks_give_six_by_two() {
        let (store, enc) = small_encoder(Norm::None);
        let flow = FlowField::from_fn(8, 8, |y, x| (x as f64 * 0.1, y as f64 * -0.2)).unwrap();
        let masks = MaskSet::from_class_fn(8, 8, |y, _| SemanticClass::ALL[y % 3]);
        let z = enc.encode(&store, &flow, &masks).unwrap();
        assert_eq!((z.len(), z.dim()), (6, 2));
        for i in 0..3 {
            assert!(z.is_valid(i));
        }
        for i in 3..6 {
            assert!(!z.is_valid(i));
            assert_eq!(z.row(i), &[0.0, 0.0]);
        }
    }

    #[test]
    fn prepare_inputs_halves_and_keeps_constants() {
        let flow = FlowField::constant(8, 6, 1.5, -2.0);
        let masks = MaskSet::from_class_fn(8, 6, |y, x| if x > y { SemanticClass::Sky } else { SemanticClass::Water });
        let (f, m) = prepare_encoder_inputs(&flow, &masks).unwrap();
        assert_eq!(f, FlowField::constant(4, 3, 1.5, -2.0));
        m.check_partition().unwrap();
        assert_eq!((m.height(), m.width()), (4, 3));
        let odd = FlowField::zeros(5, 6);
        let odd_masks = MaskSet::from_class_fn(5, 6, |_, _| SemanticClass::Sky);
        assert!(prepare_encoder_inputs(&odd, &odd_masks).is_err());
    }

    #[test]
    fn isolation_holds_with_instance_norm_too() {
        let (store, enc) = small_encoder(Norm::Instance);
        let masks = MaskSet::from_class_fn(8, 8, |_, x| if x < 3 { SemanticClass::Sky } else { SemanticClass::Others });
        let a = FlowField::from_fn(8, 8, |y, x| ((x * y) as f64 * 0.1, x as f64 * 0.3)).unwrap();
        let b = FlowField::from_fn(8, 8, |y, x| if x < 3 { a.at(y, x) } else { (-7.0, 9.0) }).unwrap();
        let za = enc.encode(&store, &a, &masks).unwrap();
        let zb = enc.encode(&store, &b, &masks).unwrap();
        assert_eq!(za.row(1), zb.row(1));
        assert_ne!(za.row(0), zb.row(0));
    }
}
