//! Partial convolution renormalization.
//!
//! A constant input seen through masks of different densities produces the
//! same response wherever a window has at least one valid pixel.

use flowanim::nn::{ConvShape, ParamStore, PartialConv2d, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let shape = ConvShape { in_ch: 1, out_ch: 1, kernel: 3, stride: 1, pad: 1 };
    let layer = PartialConv2d::new(&mut store, "demo", shape, &mut rng);
    store.params_mut()[0].data.iter_mut().for_each(|v| *v = 0.25);
    store.params_mut()[1].data[0] = 0.0;

    let (h, w) = (12, 12);
    let x = Tensor::from_vec(1, h, w, vec![2.0; h * w]);
    for density in [0.1, 0.3, 0.6, 0.9] {
        let mask: Vec<u8> = (0..h * w).map(|_| u8::from(rng.gen_bool(density))).collect();
        let out = layer.forward(&store, &x, &mask);
        let live: Vec<f64> = out.features.data.iter().zip(&out.mask).filter(|(_, &m)| m == 1).map(|(v, _)| *v).collect();
        let (lo, hi) = live.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("density {density:.1}: {} valid outputs, range [{lo:.6}, {hi:.6}]", live.len());
    }
}
