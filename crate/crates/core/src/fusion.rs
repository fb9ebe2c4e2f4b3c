//! Spatial alignment and channel concatenation of SD and DINOv2 features.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::{FeatureMap, SourceTag};

/// Resampling kernel used to bring feature grids to a common size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Grid both sources are resized to before concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetGrid {
    #[default]
    DinoGrid,
    SdGrid,
    Explicit {
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub target_grid: TargetGrid,
    /// L2-normalize each source's channel vectors before concatenating.
    pub per_source_l2_normalize: bool,
    pub interpolation: Interpolation,
    pub epsilon: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            target_grid: TargetGrid::DinoGrid,
            per_source_l2_normalize: true,
            interpolation: Interpolation::Bilinear,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Per-axis sampling taps: `(lower index, upper index, weight of upper)`.
fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    let last = (input - 1) as f64;
    (0..output)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = libm::floor(src) as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn nearest_taps(input: usize, output: usize) -> Vec<usize> {
    (0..output)
        .map(|dst| (((2 * dst + 1) * input) / (2 * output)).min(input - 1))
        .collect()
}

/// Resamples the grid to `out_h × out_w`, keeping channels and image geometry.
///
/// Bilinear sampling uses the half-pixel (align-corners = false) convention:
/// the source coordinate of output index `d` is `(d + 0.5) · in/out − 0.5`,
/// clamped to `[0, in − 1]`.
pub fn resize_feature_map(
    fm: &FeatureMap,
    out_h: usize,
    out_w: usize,
    mode: Interpolation,
) -> Result<FeatureMap> {
    if out_h == 0 || out_w == 0 {
        bail!(Param, "resize target must be >= 1x1, got {out_h}x{out_w}");
    }
    let ch = fm.channels();
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    match mode {
        Interpolation::Nearest => {
            let rows = nearest_taps(fm.height(), out_h);
            let cols = nearest_taps(fm.width(), out_w);
            for &r in &rows {
                for &c in &cols {
                    data.extend_from_slice(fm.pixel(r, c));
                }
            }
        }
        Interpolation::Bilinear => {
            let rows = bilinear_taps(fm.height(), out_h);
            let cols = bilinear_taps(fm.width(), out_w);
            for &(r0, r1, ty) in &rows {
                for &(c0, c1, tx) in &cols {
                    let (a, b) = (fm.pixel(r0, c0), fm.pixel(r0, c1));
                    let (c, d) = (fm.pixel(r1, c0), fm.pixel(r1, c1));
                    for k in 0..ch {
                        let top = (1.0 - tx) * a[k] as f64 + tx * b[k] as f64;
                        let bottom = (1.0 - tx) * c[k] as f64 + tx * d[k] as f64;
                        data.push(((1.0 - ty) * top + ty * bottom) as f32);
                    }
                }
            }
        }
    }
    FeatureMap::new(out_h, out_w, ch, data, fm.source(), fm.geometry())
}

/// Scales every cell's channel vector by `1 / max(‖v‖, epsilon)`.
pub fn l2_normalize_channels(fm: &FeatureMap, epsilon: f64) -> FeatureMap {
    let mut data = Vec::with_capacity(fm.data().len());
    for v in fm.cell_vectors() {
        let norm = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
        let denom = norm.max(epsilon);
        data.extend(v.iter().map(|&x| (x as f64 / denom) as f32));
    }
    FeatureMap::new(
        fm.height(),
        fm.width(),
        fm.channels(),
        data,
        fm.source(),
        fm.geometry(),
    )
    .expect("normalization preserves shape and finiteness")
}

/// Concatenates SD and DINOv2 features along channels (SD first) on a common grid.
pub fn fuse(f_sd: &FeatureMap, f_dino: &FeatureMap, cfg: &FusionConfig) -> Result<FeatureMap> {
    if f_sd.geometry() != f_dino.geometry() {
        let (a, b) = (f_sd.geometry(), f_dino.geometry());
        bail!(
            Geometry,
            "sd features describe a {}x{} image, dino features a {}x{} image",
            a.height,
            a.width,
            b.height,
            b.width
        );
    }
    if f_sd.source() != SourceTag::Sd || f_dino.source() != SourceTag::Dino {
        bail!(
            Param,
            "expected (sd, dino) sources, got ({}, {})",
            f_sd.source().name(),
            f_dino.source().name()
        );
    }
    let (h, w) = match cfg.target_grid {
        TargetGrid::DinoGrid => (f_dino.height(), f_dino.width()),
        TargetGrid::SdGrid => (f_sd.height(), f_sd.width()),
        TargetGrid::Explicit { height, width } => (height, width),
    };
    f_sd.geometry().check_grid(h, w)?;

    let prepare = |fm: &FeatureMap| -> Result<FeatureMap> {
        let resized = if (fm.height(), fm.width()) == (h, w) {
            fm.clone()
        } else {
            resize_feature_map(fm, h, w, cfg.interpolation)?
        };
        Ok(if cfg.per_source_l2_normalize {
            l2_normalize_channels(&resized, cfg.epsilon)
        } else {
            resized
        })
    };
    let sd = prepare(f_sd)?;
    let dino = prepare(f_dino)?;

    let channels = sd.channels() + dino.channels();
    let mut data = Vec::with_capacity(h * w * channels);
    for (a, b) in sd.cell_vectors().zip(dino.cell_vectors()) {
        data.extend_from_slice(a);
        data.extend_from_slice(b);
    }
    FeatureMap::new(h, w, channels, data, SourceTag::Fused, f_sd.geometry())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ImageGeometry;
    use alloc::vec;

    fn map(h: usize, w: usize, c: usize, data: Vec<f32>, tag: SourceTag) -> FeatureMap {
        FeatureMap::new(h, w, c, data, tag, ImageGeometry::new(28, 28)).unwrap()
    }

    #[test]
    fn identity_resize_is_exact() {
        let fm = map(
            3,
            2,
            2,
            (0..12).map(|v| v as f32 * 0.37).collect(),
            SourceTag::Dino,
        );
        for mode in [Interpolation::Bilinear, Interpolation::Nearest] {
            assert_eq!(resize_feature_map(&fm, 3, 2, mode).unwrap(), fm);
        }
    }

    #[test]
    fn nearest_replicates_blocks() {
        let fm = map(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0], SourceTag::Dino);
        let up = resize_feature_map(&fm, 4, 4, Interpolation::Nearest).unwrap();
        #[rustfmt::skip]
        let expected = [
            0.0, 0.0, 1.0, 1.0,
            0.0, 0.0, 1.0, 1.0,
            2.0, 2.0, 3.0, 3.0,
            2.0, 2.0, 3.0, 3.0,
        ];
        assert_eq!(up.data(), &expected);
    }

    #[test]
    fn bilinear_half_pixel_row() {
        // sources at -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1)
        let fm = map(1, 2, 1, vec![0.0, 10.0], SourceTag::Dino);
        let up = resize_feature_map(&fm, 1, 4, Interpolation::Bilinear).unwrap();
        assert_eq!(up.data(), &[0.0, 2.5, 7.5, 10.0]);
    }

    #[test]
    fn normalize_three_four_five() {
        let fm = map(1, 2, 2, vec![3.0, 4.0, 0.0, 0.0], SourceTag::Sd);
        let n = l2_normalize_channels(&fm, DEFAULT_EPSILON);
        assert!((n.data()[0] - 0.6).abs() < 1e-7);
        assert!((n.data()[1] - 0.8).abs() < 1e-7);
        assert_eq!(&n.data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn fuse_shapes_and_order() {
        let sd = map(2, 2, 3, (0..12).map(|v| v as f32).collect(), SourceTag::Sd);
        let dino = map(
            2,
            2,
            5,
            (0..20).map(|v| -(v as f32)).collect(),
            SourceTag::Dino,
        );
        let cfg = FusionConfig {
            per_source_l2_normalize: false,
            ..Default::default()
        };
        let f = fuse(&sd, &dino, &cfg).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (2, 2, 8));
        assert_eq!(f.source(), SourceTag::Fused);
        for i in 0..4 {
            assert_eq!(&f.cell(i)[..3], sd.cell(i));
            assert_eq!(&f.cell(i)[3..], dino.cell(i));
        }
    }

    #[test]
    fn fuse_rejects_geometry_mismatch() {
        let sd = FeatureMap::filled(2, 2, 1, 1.0, SourceTag::Sd, ImageGeometry::new(4, 4)).unwrap();
        let dino =
            FeatureMap::filled(2, 2, 1, 1.0, SourceTag::Dino, ImageGeometry::new(4, 5)).unwrap();
        assert!(matches!(
            fuse(&sd, &dino, &FusionConfig::default()),
            Err(crate::Error::Geometry(_))
        ));
    }

    #[test]
    fn fuse_with_zero_map_keeps_original() {
        let sd = map(2, 2, 2, vec![0.0; 8], SourceTag::Sd);
        let dino = map(
            2,
            2,
            3,
            (0..12).map(|v| v as f32 + 1.0).collect(),
            SourceTag::Dino,
        );
        let cfg = FusionConfig {
            per_source_l2_normalize: false,
            ..Default::default()
        };
        let f = fuse(&sd, &dino, &cfg).unwrap();
        for i in 0..4 {
            assert_eq!(&f.cell(i)[2..], dino.cell(i));
        }
    }

    #[test]
    fn explicit_grid() {
        let sd = map(4, 4, 1, vec![1.0; 16], SourceTag::Sd);
        let dino = map(2, 2, 1, vec![2.0; 4], SourceTag::Dino);
        let cfg = FusionConfig {
            target_grid: TargetGrid::Explicit {
                height: 7,
                width: 7,
            },
            ..Default::default()
        };
        let f = fuse(&sd, &dino, &cfg).unwrap();
        assert_eq!((f.height(), f.width(), f.channels()), (7, 7, 2));
        let sd_grid = FusionConfig {
            target_grid: TargetGrid::SdGrid,
            ..Default::default()
        };
        assert_eq!(fuse(&sd, &dino, &sd_grid).unwrap().height(), 4);
    }
}
