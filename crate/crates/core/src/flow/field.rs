use crate::error::{ensure, Error, Result};

/// Dense backward displacement field in pixel units.
///
/// Output pixel `(x, y)` of a warp samples its source at `(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        ensure!(
            height > 0 && width > 0,
            Contract,
            "flow dimensions must be positive, got {height}x{width}"
        );
        ensure!(
            u.len() == height * width && v.len() == height * width,
            Contract,
            "flow planes have {}/{} values, expected {}",
            u.len(),
            v.len(),
            height * width
        );
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Contract("flow contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        assert!(height > 0 && width > 0, "flow dimensions must be positive");
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    /// Builds a field from `f(y, x) -> (u, v)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(y, x);
                u.push(a);
                v.push(b);
            }
        }
        Self::new(height, width, u, v)
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Self {
        debug_assert_eq!(u.len(), height * width);
        debug_assert_eq!(v.len(), height * width);
        Self {
            height,
            width,
            u,
            v,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn into_planes(self) -> (Vec<f64>, Vec<f64>) {
        (self.u, self.v)
    }

    pub fn same_size(&self, other: &FlowField) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    /// Largest absolute value over both components.
    pub fn max_abs_component(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest per-pixel Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

/// Multiplies every component by `s`.
pub fn scale_flow(flow: &FlowField, s: f64) -> Result<FlowField> {
    ensure!(s.is_finite(), Contract, "flow scale must be finite, got {s}");
    Ok(FlowField::from_parts_unchecked(
        flow.height,
        flow.width,
        flow.u.iter().map(|x| x * s).collect(),
        flow.v.iter().map(|x| x * s).collect(),
    ))
}

/// Mirrors the field left-right.
///
/// Values move with their pixels; `negate_u` additionally flips the sign of
/// the horizontal component (the geometrically consistent mirror). The
/// training protocol keeps values as they are (`negate_u = false`).
pub fn flip_horizontal(flow: &FlowField, negate_u: bool) -> FlowField {
    let (h, w) = (flow.height, flow.width);
    let sign = if negate_u { -1.0 } else { 1.0 };
    let mut u = Vec::with_capacity(h * w);
    let mut v = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let src = y * w + (w - 1 - x);
            u.push(sign * flow.u[src]);
            v.push(flow.v[src]);
        }
    }
    FlowField::from_parts_unchecked(h, w, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_flow() -> impl Strategy<Value = FlowField> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            (
                proptest::collection::vec(-10.0f64..10.0, h * w),
                proptest::collection::vec(-10.0f64..10.0, h * w),
            )
                .prop_map(move |(u, v)| FlowField::new(h, w, u, v).unwrap())
        })
    }

    #[test]
    fn scale_examples() {
        let f = FlowField::constant(3, 4, 1.0, 2.0);
        assert_eq!(scale_flow(&f, 1.0).unwrap(), f);
        assert_eq!(scale_flow(&f, 0.0).unwrap(), FlowField::zeros(3, 4));
        assert_eq!(scale_flow(&f, 4.0).unwrap(), FlowField::constant(3, 4, 4.0, 8.0));
        assert!(scale_flow(&f, f64::INFINITY).is_err());
    }

    #[test]
    fn flip_negates_only_when_asked() {
        let f = FlowField::constant(2, 3, 1.0, 0.0);
        assert_eq!(flip_horizontal(&f, true), FlowField::constant(2, 3, -1.0, 0.0));
        assert_eq!(flip_horizontal(&f, false), f);
    }

    #[test]
    fn flip_mirrors_positions_keeping_values() {
        let f = FlowField::from_fn(2, 3, |y, x| (x as f64 + 10.0 * y as f64, -(x as f64))).unwrap();
        let g = flip_horizontal(&f, false);
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(g.at(y, x), f.at(y, 2 - x));
            }
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(FlowField::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
        assert!(FlowField::new(1, 2, vec![0.0], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(f in arb_flow(), negate in any::<bool>()) {
            prop_assert_eq!(flip_horizontal(&flip_horizontal(&f, negate), negate), f);
        }

        #[test]
        fn flip_preserves_value_multiset(f in arb_flow()) {
            let g = flip_horizontal(&f, false);
            let key = |fl: &FlowField| {
                let mut pairs: Vec<(u64, u64)> = fl.u().iter().zip(fl.v())
                    .map(|(a, b)| (a.to_bits(), b.to_bits())).collect();
                pairs.sort_unstable();
                pairs
            };
            prop_assert_eq!(key(&f), key(&g));
        }
    }
}
