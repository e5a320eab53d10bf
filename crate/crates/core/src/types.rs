//! Cubes, label maps, taxonomies, dataset descriptors and the spatial-shape
//! utilities shared by every other module.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Reserved label id for unlabeled pixels.
pub const IGNORE_ID: u8 = 255;

/// One hyperspectral image, stored band-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    bands: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
    wavelength_range_nm: Option<(f64, f64)>,
}

impl HsiCube {
    pub fn new(bands: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!("cube dims must be positive, got {bands}x{height}x{width}")));
        }
        if values.len() != bands * height * width {
            return Err(Error::ShapeMismatch(format!(
                "cube {bands}x{height}x{width} needs {} values, got {}",
                bands * height * width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite reflectance at flat index {i}")));
        }
        Ok(Self { bands, height, width, values, wavelength_range_nm: None })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(bands, height, width, vec![0.0; bands * height * width])
    }

    pub fn with_wavelength_range(mut self, low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::invalid(format!("wavelength range must satisfy low < high, got {low}..{high}")));
        }
        self.wavelength_range_nm = Some((low, high));
        Ok(self)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn wavelength_range_nm(&self) -> Option<(f64, f64)> {
        self.wavelength_range_nm
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.values[(band * self.height + row) * self.width + col]
    }

    /// Per-cube min-max scaling to `[0, 1]`. A constant cube maps to zeros.
    pub fn min_max_scaled(&self) -> HsiCube {
        let (lo, hi) = self.values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let values = if span > 0.0 { self.values.iter().map(|&v| (v - lo) / span).collect() } else { vec![0.0; self.values.len()] };
        HsiCube { values, ..self.clone() }
    }

    /// The cube as a `(1, C, H, W)` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(&[1, self.bands, self.height, self.width], self.values.iter().map(|&v| T::from_f32(v).unwrap()).collect())
            .expect("cube length invariant")
    }
}

/// Per-pixel class ids, row-major; [`IGNORE_ID`] marks unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("label map dims must be positive"));
        }
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch(format!("label map {height}x{width} needs {} ids, got {}", height * width, labels.len())));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, id: u8) -> Result<Self> {
        Self::new(height, width, vec![id; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// An ordered class vocabulary; a class's id is its position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    name: String,
    classes: Vec<String>,
}

impl ClassTaxonomy {
    pub fn new(name: impl Into<String>, classes: Vec<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("taxonomy needs at least one class"));
        }
        if classes.len() > IGNORE_ID as usize {
            return Err(Error::invalid(format!("taxonomy has {} classes; ids must stay below {IGNORE_ID}", classes.len())));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if !seen.insert(c.as_str()) {
                return Err(Error::invalid(format!("duplicate class label {c:?}")));
            }
        }
        Ok(Self { name: name.into(), classes })
    }

    /// Generic `class_0 .. class_{k-1}` vocabulary.
    pub fn numbered(name: impl Into<String>, k: usize) -> Result<Self> {
        Self::new(name, (0..k).map(|i| format!("class_{i}")).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn label(&self, id: u8) -> Option<&str> {
        self.classes.get(id as usize).map(String::as_str)
    }

    /// Consolidated vocabularies. HS-City keeps the six shared classes,
    /// HyKo adds road marking, HSI-Drive adds road marking and glass.
    pub fn consolidated(extra_road_marking: bool, extra_glass: bool) -> Self {
        let mut classes: Vec<String> =
            ["Road", "Vegetation", "Sky", "Metal", "Infrastructure", "People"].iter().map(|s| s.to_string()).collect();
        let mut name = String::from("consolidated");
        if extra_road_marking {
            classes.push("Road Marking".into());
            name.push_str("+marking");
        }
        if extra_glass {
            classes.push("Glass".into());
            name.push_str("+glass");
        }
        Self { name, classes }
    }

    /// HSI-Road's native two-class set.
    pub fn hsi_road() -> Self {
        Self { name: "hsi-road".into(), classes: vec!["Road".into(), "Others".into()] }
    }
}

/// Static description of one dataset configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub num_classes: usize,
    pub wavelength_range_nm: Option<(f64, f64)>,
    pub declared_image_count: usize,
    pub taxonomy: String,
}

impl DatasetDescriptor {
    pub fn new(name: impl Into<String>, (height, width): (usize, usize), bands: usize, num_classes: usize) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 || num_classes == 0 {
            return Err(Error::invalid("descriptor H, W, C and K must be positive"));
        }
        Ok(Self {
            name: name.into(),
            height,
            width,
            bands,
            num_classes,
            wavelength_range_nm: None,
            declared_image_count: 0,
            taxonomy: String::new(),
        })
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn preset(name: &str, hw: (usize, usize), bands: usize, k: usize, range: (f64, f64), count: usize, taxonomy: &str) -> Self {
        Self {
            name: name.into(),
            height: hw.0,
            width: hw.1,
            bands,
            num_classes: k,
            wavelength_range_nm: Some(range),
            declared_image_count: count,
            taxonomy: taxonomy.into(),
        }
    }

    pub fn hyko2_vis() -> Self {
        Self::preset("HyKo2-VIS", (254, 512), 15, 10, (470.0, 630.0), 163, "hyko2")
    }

    pub fn hyko2_nir() -> Self {
        Self::preset("HyKo2-NIR", (214, 407), 25, 10, (630.0, 975.0), 78, "hyko2")
    }

    pub fn hsi_drive_v2() -> Self {
        Self::preset("HSI-Drive v2", (209, 416), 25, 9, (600.0, 975.0), 752, "hsi-drive-v2")
    }

    /// Native HS-City v2 resolution.
    pub fn hs_city_v2() -> Self {
        Self::preset("HS-City v2", (1422, 1889), 128, 19, (450.0, 950.0), 1330, "hs-city-v2")
    }

    /// HS-City v2 after spatial subsampling for training.
    pub fn hs_city_v2_subsampled() -> Self {
        Self { height: 355, width: 472, ..Self::hs_city_v2() }
    }

    pub fn hsi_road() -> Self {
        Self::preset("HSI-Road", (384, 192), 25, 2, (680.0, 960.0), 3799, "hsi-road")
    }

    /// The five benchmark configurations at native resolution.
    pub fn benchmark_presets() -> Vec<Self> {
        vec![Self::hyko2_vis(), Self::hyko2_nir(), Self::hsi_drive_v2(), Self::hs_city_v2(), Self::hsi_road()]
    }

    /// The five configurations at training resolution (HS-City subsampled).
    pub fn training_presets() -> Vec<Self> {
        vec![Self::hyko2_vis(), Self::hyko2_nir(), Self::hsi_drive_v2(), Self::hs_city_v2_subsampled(), Self::hsi_road()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub cube: HsiCube,
    pub labels: LabelMap,
}

impl Sample {
    pub fn new(id: impl Into<String>, cube: HsiCube, labels: LabelMap) -> Self {
        Self { id: id.into(), cube, labels }
    }
}

/// One failed check reported by [`validate_sample`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ShapeMismatch { cube: (usize, usize), labels: (usize, usize) },
    DescriptorSpatial { expected: (usize, usize), actual: (usize, usize) },
    DescriptorBands { expected: usize, actual: usize },
    LabelOutOfRange { id: u8, num_classes: usize, pixels: usize },
    WavelengthRange { expected: (f64, f64), actual: (f64, f64) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ShapeMismatch { cube, labels } => {
                write!(f, "shape mismatch: cube {}x{} vs labels {}x{}", cube.0, cube.1, labels.0, labels.1)
            }
            Violation::DescriptorSpatial { expected, actual } => write!(
                f,
                "shape mismatch: descriptor {}x{} vs sample {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            Violation::DescriptorBands { expected, actual } => {
                write!(f, "band count mismatch: descriptor {expected} vs cube {actual}")
            }
            Violation::LabelOutOfRange { id, num_classes, pixels } => {
                write!(f, "label id out of range: {id} >= {num_classes} ({pixels} pixels)")
            }
            Violation::WavelengthRange { expected, actual } => write!(
                f,
                "wavelength range mismatch: descriptor {}-{} nm vs cube {}-{} nm",
                expected.0, expected.1, actual.0, actual.1
            ),
        }
    }
}

/// Checks a sample against its dataset descriptor. Violations are returned as
/// data; an empty list means the sample is well formed.
pub fn validate_sample(sample: &Sample, descriptor: &DatasetDescriptor) -> Vec<Violation> {
    let mut out = Vec::new();
    let cube_hw = sample.cube.spatial();
    let label_hw = sample.labels.spatial();
    if cube_hw != label_hw {
        out.push(Violation::ShapeMismatch { cube: cube_hw, labels: label_hw });
    }
    if cube_hw != descriptor.spatial() {
        out.push(Violation::DescriptorSpatial { expected: descriptor.spatial(), actual: cube_hw });
    } else if label_hw != descriptor.spatial() && cube_hw == label_hw {
        out.push(Violation::DescriptorSpatial { expected: descriptor.spatial(), actual: label_hw });
    }
    if sample.cube.bands() != descriptor.bands {
        out.push(Violation::DescriptorBands { expected: descriptor.bands, actual: sample.cube.bands() });
    }
    let mut bad = [0usize; 256];
    for &id in sample.labels.labels() {
        if id != IGNORE_ID && id as usize >= descriptor.num_classes {
            bad[id as usize] += 1;
        }
    }
    for (id, &pixels) in bad.iter().enumerate() {
        if pixels > 0 {
            out.push(Violation::LabelOutOfRange { id: id as u8, num_classes: descriptor.num_classes, pixels });
        }
    }
    if let (Some(expected), Some(actual)) = (descriptor.wavelength_range_nm, sample.cube.wavelength_range_nm()) {
        if expected != actual {
            out.push(Violation::WavelengthRange { expected, actual });
        }
    }
    out
}

fn ceil_to(v: usize, stride: usize) -> usize {
    v.div_ceil(stride) * stride
}

/// Zero-pads a cube on the bottom and right so both spatial dims are
/// multiples of `stride`. Returns the padded cube and the original extent.
pub fn pad_to_stride(cube: &HsiCube, stride: usize) -> Result<(HsiCube, (usize, usize))> {
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    let (h, w) = cube.spatial();
    let (ph, pw) = (ceil_to(h, stride), ceil_to(w, stride));
    if (ph, pw) == (h, w) {
        return Ok((cube.clone(), (h, w)));
    }
    let c = cube.bands();
    let mut values = vec![0.0f32; c * ph * pw];
    for b in 0..c {
        for r in 0..h {
            let src = &cube.values[(b * h + r) * w..(b * h + r + 1) * w];
            values[(b * ph + r) * pw..(b * ph + r) * pw + w].copy_from_slice(src);
        }
    }
    let padded = HsiCube { bands: c, height: ph, width: pw, values, wavelength_range_nm: cube.wavelength_range_nm };
    Ok((padded, (h, w)))
}

/// Zero-pads a `(N, C, H, W)` tensor on the bottom and right to multiples of `stride`.
pub fn pad_tensor_to_stride<T: Scalar>(x: &Tensor<T>, stride: usize) -> Tensor<T> {
    let (n, c, h, w) = x.dims4();
    let (ph, pw) = (ceil_to(h, stride.max(1)), ceil_to(w, stride.max(1)));
    if (ph, pw) == (h, w) {
        return x.clone();
    }
    let mut out = Tensor::zeros(&[n, c, ph, pw]);
    let src = x.data();
    let dst = out.data_mut();
    for p in 0..n * c {
        for r in 0..h {
            dst[(p * ph + r) * pw..(p * ph + r) * pw + w].copy_from_slice(&src[(p * h + r) * w..(p * h + r + 1) * w]);
        }
    }
    out
}

/// Top-left `H×W` window of every plane of a `(K, H', W')` logit tensor.
pub fn crop_logits<T: Scalar>(logits: &Tensor<T>, original: (usize, usize)) -> Result<Tensor<T>> {
    let shape = logits.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch(format!("logits must be (K, H, W), got {shape:?}")));
    }
    let (k, ph, pw) = (shape[0], shape[1], shape[2]);
    let (h, w) = original;
    if h > ph || w > pw || h == 0 || w == 0 {
        return Err(Error::InvalidCrop { original, padded: (ph, pw) });
    }
    let src = logits.data();
    let mut out = Vec::with_capacity(k * h * w);
    for p in 0..k {
        for r in 0..h {
            out.extend_from_slice(&src[(p * ph + r) * pw..(p * ph + r) * pw + w]);
        }
    }
    Tensor::from_vec(&[k, h, w], out)
}

/// Nearest-neighbour spatial resampling of a sample; the cube and the labels
/// share one index grid so pixel/label correspondence survives.
pub fn subsample_spatial(sample: &Sample, target: (usize, usize)) -> Result<Sample> {
    let (sh, sw) = sample.cube.spatial();
    if sample.labels.spatial() != (sh, sw) {
        return Err(Error::ShapeMismatch("cube and labels differ in spatial size".into()));
    }
    let (th, tw) = target;
    if th == 0 || tw == 0 || th > sh || tw > sw {
        return Err(Error::invalid(format!("subsample target {th}x{tw} must be within 1..={sh}x{sw}")));
    }
    let rows: Vec<usize> = (0..th).map(|i| i * sh / th).collect();
    let cols: Vec<usize> = (0..tw).map(|j| j * sw / tw).collect();
    let c = sample.cube.bands();
    let mut values = Vec::with_capacity(c * th * tw);
    for b in 0..c {
        for &r in &rows {
            for &q in &cols {
                values.push(sample.cube.get(b, r, q));
            }
        }
    }
    let mut labels = Vec::with_capacity(th * tw);
    for &r in &rows {
        for &q in &cols {
            labels.push(sample.labels.get(r, q));
        }
    }
    let cube = HsiCube { bands: c, height: th, width: tw, values, wavelength_range_nm: sample.cube.wavelength_range_nm };
    Ok(Sample { id: sample.id.clone(), cube, labels: LabelMap::new(th, tw, labels)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(c: usize, h: usize, w: usize, lh: usize, lw: usize, fill: u8) -> Sample {
        Sample::new("s", HsiCube::zeros(c, h, w).unwrap(), LabelMap::filled(lh, lw, fill).unwrap())
    }

    #[test]
    fn hyko_vis_shaped_sample_is_valid() {
        let d = DatasetDescriptor::hyko2_vis();
        let mut s = sample(15, 254, 512, 254, 512, 0);
        s.labels.labels[100] = 9;
        s.labels.labels[101] = IGNORE_ID;
        assert!(validate_sample(&s, &d).is_empty());
    }

    #[test]
    fn label_equal_to_k_is_out_of_range() {
        let d = DatasetDescriptor::hyko2_vis();
        let mut s = sample(15, 254, 512, 254, 512, 0);
        s.labels.labels[7] = 10;
        let v = validate_sample(&s, &d);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("label id out of range"));
    }

    #[test]
    fn off_by_one_label_width_is_shape_mismatch() {
        let d = DatasetDescriptor::hyko2_vis();
        let s = sample(15, 254, 512, 254, 511, 0);
        let v = validate_sample(&s, &d);
        assert!(v.iter().any(|v| v.to_string().starts_with("shape mismatch")));
    }

    #[test]
    fn validate_is_pure() {
        let d = DatasetDescriptor::hsi_road();
        let s = sample(25, 384, 191, 384, 192, 3);
        assert_eq!(validate_sample(&s, &d), validate_sample(&s, &d));
    }

    #[test]
    fn wavelength_range_order_enforced() {
        let c = HsiCube::zeros(1, 1, 1).unwrap();
        assert!(c.clone().with_wavelength_range(630.0, 470.0).is_err());
        assert!(c.with_wavelength_range(470.0, 630.0).is_ok());
    }

    #[test]
    fn non_finite_cube_rejected() {
        assert!(HsiCube::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(HsiCube::new(1, 1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn pad_examples() {
        let cases = [((254, 512), (256, 512)), ((209, 416), (224, 416)), ((384, 192), (384, 192))];
        for ((h, w), want) in cases {
            let cube = HsiCube::zeros(1, h, w).unwrap();
            let (p, orig) = pad_to_stride(&cube, 16).unwrap();
            assert_eq!(p.spatial(), want);
            assert_eq!(orig, (h, w));
        }
        assert!(pad_to_stride(&HsiCube::zeros(1, 2, 2).unwrap(), 0).is_err());
    }

    #[test]
    fn crop_examples() {
        let logits = Tensor::<f32>::zeros(&[10, 256, 512]);
        assert_eq!(crop_logits(&logits, (254, 512)).unwrap().shape(), &[10, 254, 512]);
        assert_eq!(crop_logits(&logits, (256, 512)).unwrap(), logits);
        assert!(matches!(crop_logits(&logits, (300, 512)), Err(Error::InvalidCrop { .. })));
    }

    #[test]
    fn subsample_hs_city_shape() {
        // A thin-banded stand-in keeps the fixture small; band count does not
        // affect the index mapping.
        let s = sample(2, 1422, 1889, 1422, 1889, 4);
        let out = subsample_spatial(&s, (355, 472)).unwrap();
        assert_eq!(out.cube.spatial(), (355, 472));
        assert_eq!(out.labels.spatial(), (355, 472));
        assert_eq!(out.cube.bands(), 2);
    }

    #[test]
    fn subsample_identity_and_errors() {
        let mut s = sample(2, 5, 7, 5, 7, 0);
        s.labels.labels[3] = 1;
        s.cube.values[4] = 2.5;
        assert_eq!(subsample_spatial(&s, (5, 7)).unwrap(), s);
        assert!(subsample_spatial(&s, (0, 7)).is_err());
        assert!(subsample_spatial(&s, (6, 7)).is_err());
    }

    #[test]
    fn subsample_matches_index_oracle() {
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3];
        let values: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let s = Sample::new("x", HsiCube::new(1, 4, 4, values.clone()).unwrap(), LabelMap::new(4, 4, labels.clone()).unwrap());
        let out = subsample_spatial(&s, (2, 2)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // nearest source index: floor(i * 4 / 2)
                let (r, c) = (i * 2, j * 2);
                assert_eq!(out.labels.get(i, j), labels[r * 4 + c]);
                assert_eq!(out.cube.get(0, i, j), values[r * 4 + c]);
            }
        }
        assert_eq!(out.labels.labels(), &[0, 1, 2, 3]);
    }

    #[test]
    fn min_max_scale() {
        let c = HsiCube::new(1, 1, 3, vec![2.0, 4.0, 6.0]).unwrap().min_max_scaled();
        assert_eq!(c.values(), &[0.0, 0.5, 1.0]);
        let flat = HsiCube::new(1, 1, 2, vec![3.0, 3.0]).unwrap().min_max_scaled();
        assert_eq!(flat.values(), &[0.0, 0.0]);
    }

    #[test]
    fn presets_match_benchmark_table() {
        let rows: Vec<_> =
            DatasetDescriptor::benchmark_presets().into_iter().map(|d| (d.height, d.width, d.bands, d.num_classes)).collect();
        assert_eq!(
            rows,
            vec![(254, 512, 15, 10), (214, 407, 25, 10), (209, 416, 25, 9), (1422, 1889, 128, 19), (384, 192, 25, 2)]
        );
    }

    #[test]
    fn taxonomy_rejects_duplicates() {
        assert!(ClassTaxonomy::new("t", vec!["a".into(), "a".into()]).is_err());
        assert_eq!(ClassTaxonomy::consolidated(true, true).num_classes(), 8);
        assert_eq!(ClassTaxonomy::consolidated(false, false).num_classes(), 6);
    }

    proptest! {
        #[test]
        fn pad_then_crop_round_trips(h in 1usize..40, w in 1usize..40, c in 1usize..3, stride in 1usize..17, seed in 0u32..1000) {
            let values: Vec<f32> = (0..c * h * w).map(|i| ((i as u32 ^ seed) % 97) as f32 + 1.0).collect();
            let cube = HsiCube::new(c, h, w, values.clone()).unwrap();
            let (p, orig) = pad_to_stride(&cube, stride).unwrap();
            prop_assert_eq!(p.height() % stride, 0);
            prop_assert_eq!(p.width() % stride, 0);
            prop_assert!(p.height() < h + stride && p.width() < w + stride);
            for b in 0..c {
                for r in 0..p.height() {
                    for q in 0..p.width() {
                        let v = p.get(b, r, q);
                        if r < h && q < w { prop_assert_eq!(v, cube.get(b, r, q)); } else { prop_assert_eq!(v, 0.0); }
                    }
                }
            }
            let t = Tensor::<f32>::from_vec(&[c, p.height(), p.width()], p.values().to_vec()).unwrap();
            let back = crop_logits(&t, orig).unwrap();
            prop_assert_eq!(back.data(), &values[..]);
        }

        #[test]
        fn subsample_never_invents_classes(h in 1usize..20, w in 1usize..20, th in 1usize..20, tw in 1usize..20, seed in 0u64..500) {
            prop_assume!(th <= h && tw <= w);
            let labels: Vec<u8> = (0..h * w).map(|i| ((i as u64 * 31 + seed) % 5) as u8).collect();
            let s = Sample::new("p", HsiCube::zeros(1, h, w).unwrap(), LabelMap::new(h, w, labels.clone()).unwrap());
            let out = subsample_spatial(&s, (th, tw)).unwrap();
            let input: HashSet<u8> = labels.into_iter().collect();
            prop_assert!(out.labels.labels().iter().all(|l| input.contains(l)));
        }
    }
}
