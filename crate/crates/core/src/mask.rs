//! Semantic classes and per-frame binary mask sets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};

/// The six semantic groups. The discriminant is the value used in index-map PNGs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticClass {
    Others = 0,
    Sky = 1,
    Tree = 2,
    Grass = 3,
    Water = 4,
    Waterfall = 5,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Others,
        SemanticClass::Sky,
        SemanticClass::Tree,
        SemanticClass::Grass,
        SemanticClass::Water,
        SemanticClass::Waterfall,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SemanticClass> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Others => "others",
            SemanticClass::Sky => "sky",
            SemanticClass::Tree => "tree",
            SemanticClass::Grass => "grass",
            SemanticClass::Water => "water",
            SemanticClass::Waterfall => "waterfall",
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemanticClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Usage(format!("unknown semantic class `{s}`")))
    }
}

/// `N` binary masks over one frame; mask `i` belongs to class index `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    masks: Vec<Vec<u8>>,
}

impl MaskSet {
    /// Wraps binary masks without requiring them to partition the frame.
    pub fn new(height: usize, width: usize, masks: Vec<Vec<u8>>) -> Result<Self> {
        ensure!(!masks.is_empty(), Contract, "mask set must hold at least one mask");
        ensure!(height > 0 && width > 0, Contract, "mask dimensions must be positive");
        for (i, m) in masks.iter().enumerate() {
            ensure!(
                m.len() == height * width,
                Contract,
                "mask {i} has {} values, expected {}",
                m.len(),
                height * width
            );
            ensure!(m.iter().all(|&v| v <= 1), Contract, "mask {i} is not binary");
        }
        Ok(Self {
            height,
            width,
            masks,
        })
    }

    /// Expands a class-index map into a partition with `num_classes` masks.
    pub fn from_index_map(height: usize, width: usize, indices: &[u8], num_classes: usize) -> Result<Self> {
        ensure!(
            indices.len() == height * width,
            Contract,
            "index map has {} values, expected {}",
            indices.len(),
            height * width
        );
        let mut masks = vec![vec![0u8; height * width]; num_classes];
        for (p, &k) in indices.iter().enumerate() {
            let k = k as usize;
            ensure!(
                k < num_classes,
                Data,
                "class index {k} at pixel {p} exceeds the {num_classes}-class taxonomy"
            );
            masks[k][p] = 1;
        }
        Self::new(height, width, masks)
    }

    /// Builds a six-class partition from a per-pixel class function.
    pub fn from_class_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> SemanticClass) -> Self {
        let mut indices = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                indices.push(f(y, x).index() as u8);
            }
        }
        Self::from_index_map(height, width, &indices, SemanticClass::ALL.len()).expect("class indices are in range")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn mask(&self, i: usize) -> &[u8] {
        &self.masks[i]
    }

    pub fn count(&self, i: usize) -> usize {
        self.masks[i].iter().filter(|&&v| v == 1).count()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.len())
            .map(|i| {
                SemanticClass::from_index(i)
                    .map(|c| c.name().to_string())
                    .unwrap_or_else(|| format!("class{i}"))
            })
            .collect()
    }

    /// Checks that every pixel belongs to exactly one mask.
    pub fn check_partition(&self) -> Result<()> {
        for p in 0..self.height * self.width {
            let owners = self.masks.iter().filter(|m| m[p] == 1).count();
            if owners != 1 {
                return Err(Error::Contract(format!(
                    "masks do not partition the frame: pixel ({}, {}) belongs to {owners} masks",
                    p % self.width,
                    p / self.width
                )));
            }
        }
        Ok(())
    }

    /// Class index per pixel. Requires a partition.
    pub fn to_index_map(&self) -> Result<Vec<u8>> {
        self.check_partition()?;
        let mut out = vec![0u8; self.height * self.width];
        for (k, m) in self.masks.iter().enumerate() {
            for (p, &v) in m.iter().enumerate() {
                if v == 1 {
                    out[p] = k as u8;
                }
            }
        }
        Ok(out)
    }

    /// Index of the class owning pixel `p` (first match).
    pub fn owner(&self, p: usize) -> Option<usize> {
        self.masks.iter().position(|m| m[p] == 1)
    }

    pub fn flip_horizontal(&self) -> MaskSet {
        let (h, w) = (self.height, self.width);
        let masks = self
            .masks
            .iter()
            .map(|m| {
                let mut out = Vec::with_capacity(h * w);
                for y in 0..h {
                    for x in 0..w {
                        out.push(m[y * w + (w - 1 - x)]);
                    }
                }
                out
            })
            .collect();
        MaskSet {
            height: h,
            width: w,
            masks,
        }
    }

    /// Halves both dimensions by nearest-neighbor (top-left of each 2x2 block).
    pub fn downsample_nearest2(&self) -> Result<MaskSet> {
        ensure!(
            self.height.is_multiple_of(2) && self.width.is_multiple_of(2),
            Contract,
            "mask downsampling needs even dimensions, got {}x{}",
            self.height,
            self.width
        );
        let (h, w) = (self.height / 2, self.width / 2);
        let masks = self
            .masks
            .iter()
            .map(|m| {
                let mut out = Vec::with_capacity(h * w);
                for y in 0..h {
                    for x in 0..w {
                        out.push(m[(2 * y) * self.width + 2 * x]);
                    }
                }
                out
            })
            .collect();
        Ok(MaskSet {
            height: h,
            width: w,
            masks,
        })
    }

    /// Reads a single-channel 8-bit PNG whose values are class indices.
    pub fn load_png(path: impl AsRef<Path>, num_classes: usize) -> Result<MaskSet> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = match img {
            image::DynamicImage::ImageLuma8(buf) => buf,
            _ => {
                return Err(Error::Data(format!(
                    "{}: mask PNG must be single-channel 8-bit",
                    path.display()
                )))
            }
        };
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        MaskSet::from_index_map(h, w, luma.as_raw(), num_classes).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Writes the partition as a single-channel PNG of class indices.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let indices = self.to_index_map()?;
        image::save_buffer(
            path,
            &indices,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_indices() {
        assert_eq!(SemanticClass::Others.index(), 0);
        assert_eq!(SemanticClass::Sky.index(), 1);
        assert_eq!(SemanticClass::Waterfall.index(), 5);
        assert_eq!("Water".parse::<SemanticClass>().unwrap(), SemanticClass::Water);
        assert!("lava".parse::<SemanticClass>().is_err());
    }

    #[test]
    fn index_value_one_sets_sky() {
        let m = MaskSet::from_index_map(1, 3, &[0, 1, 4], 6).unwrap();
        assert_eq!(m.mask(SemanticClass::Sky.index()), &[0, 1, 0]);
        assert_eq!(m.mask(SemanticClass::Water.index()), &[0, 0, 1]);
        assert_eq!(m.to_index_map().unwrap(), vec![0, 1, 4]);
    }

    #[test]
    fn overlap_and_gaps_fail_partition() {
        let overlap = MaskSet::new(1, 2, vec![vec![1, 1], vec![1, 0]]).unwrap();
        assert!(overlap.check_partition().is_err());
        let gap = MaskSet::new(1, 2, vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert!(gap.check_partition().is_err());
        assert!(MaskSet::new(1, 2, vec![vec![2, 0]]).is_err());
    }

    #[test]
    fn out_of_taxonomy_index_is_data_error() {
        assert!(matches!(MaskSet::from_index_map(1, 1, &[9], 6), Err(Error::Data(_))));
    }

    #[test]
    fn downsample_keeps_partition() {
        let m = MaskSet::from_class_fn(6, 8, |y, x| {
            if (x + y) % 3 == 0 {
                SemanticClass::Tree
            } else {
                SemanticClass::Others
            }
        });
        let d = m.downsample_nearest2().unwrap();
        assert_eq!((d.height(), d.width()), (3, 4));
        d.check_partition().unwrap();
        assert!(MaskSet::from_class_fn(3, 4, |_, _| SemanticClass::Sky)
            .downsample_nearest2()
            .is_err());
    }

    #[test]
    fn png_decode_encode_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = MaskSet::from_class_fn(5, 7, |y, x| SemanticClass::ALL[(x * 3 + y) % 6]);
        m.save_png(&path).unwrap();
        let back = MaskSet::load_png(&path, 6).unwrap();
        assert_eq!(back, m);
        let bytes_a = std::fs::read(&path).unwrap();
        back.save_png(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
    }
}
