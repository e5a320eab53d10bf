use super::stats::PixelStats;
use crate::types::{ClassTaxonomy, DatasetDescriptor, HsiCube, LabelMap, Sample};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub classes: usize,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { seed: 7, count: 8, height: 16, width: 16, bands: 8, classes: 3, noise_sigma: 0.01 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > 254 {
            return Err(Error::invalid("classes must be ≤ 254 and ≥ 1"));
        }
        if self.bands == 0 || self.height == 0 || self.width == 0 || self.count == 0 {
            return Err(Error::invalid("count, height, width and bands must be ≥ 1"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise must be finite and ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub descriptor: DatasetDescriptor,
    pub taxonomy: ClassTaxonomy,
    /// `signatures[k]` is the noise-free spectrum of class `k`.
    pub signatures: Vec<Vec<f32>>,
    pub samples: Vec<Sample>,
    /// Per-class pixel counts of the generated label maps.
    pub counts: PixelStats,
}

enum Region {
    Rect { r0: usize, r1: usize, c0: usize, c1: usize },
    Triangle([(f64, f64); 3]),
}

impl Region {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Self {
        if rng.random_bool(0.5) {
            let (a, b) = (rng.random_range(0..h), rng.random_range(0..h));
            let (c, d) = (rng.random_range(0..w), rng.random_range(0..w));
            Region::Rect { r0: a.min(b), r1: a.max(b) + 1, c0: c.min(d), c1: c.max(d) + 1 }
        } else {
            let mut pt = || (rng.random_range(-0.5..h as f64 + 0.5), rng.random_range(-0.5..w as f64 + 0.5));
            Region::Triangle([pt(), pt(), pt()])
        }
    }

    fn contains(&self, r: usize, c: usize) -> bool {
        match *self {
            Region::Rect { r0, r1, c0, c1 } => (r0..r1).contains(&r) && (c0..c1).contains(&c),
            Region::Triangle([a, b, q]) => {
                let p = (r as f64, c as f64);
                let side = |u: (f64, f64), v: (f64, f64)| (v.0 - u.0) * (p.1 - u.1) - (v.1 - u.1) * (p.0 - u.0);
                let (d1, d2, d3) = (side(a, b), side(b, q), side(q, a));
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(neg && pos)
            }
        }
    }
}

/// Scenes of rectangular and triangular class regions painted over a random
/// background class; each pixel is its class signature plus `N(0, σ²)` noise.
/// The output is a pure function of the config.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (h, w, c, k) = (cfg.height, cfg.width, cfg.bands, cfg.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let signatures: Vec<Vec<f32>> = (0..k).map(|_| (0..c).map(|_| rng.random::<f32>()).collect()).collect();
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut counts = PixelStats::new(k);
    let mut samples = Vec::with_capacity(cfg.count);
    for n in 0..cfg.count {
        let mut labels = vec![rng.random_range(0..k) as u8; h * w];
        for _ in 0..rng.random_range(2..=5) {
            let region = Region::random(&mut rng, h, w);
            let class = rng.random_range(0..k) as u8;
            for r in 0..h {
                for col in 0..w {
                    if region.contains(r, col) {
                        labels[r * w + col] = class;
                    }
                }
            }
        }
        let mut values = vec![0f32; c * h * w];
        for b in 0..c {
            for (p, &l) in labels.iter().enumerate() {
                let s = signatures[l as usize][b];
                values[b * h * w + p] = if cfg.noise_sigma > 0.0 { (s as f64 + noise.sample(&mut rng)) as f32 } else { s };
            }
        }
        let labels = LabelMap::new(h, w, labels)?;
        counts.add(&labels)?;
        samples.push(Sample::new(format!("synth_{n:04}"), HsiCube::new(c, h, w, values)?, labels));
    }
    let taxonomy = ClassTaxonomy::numbered("synthetic", k)?;
    let mut descriptor = DatasetDescriptor::new("synthetic", (h, w), c, k)?;
    descriptor.declared_image_count = cfg.count;
    descriptor.taxonomy = taxonomy.name().to_string();
    Ok(SynthDataset { descriptor, taxonomy, signatures, samples, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_pixel_stats;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_synthetic(&SynthConfig::default()).unwrap();
        let b = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_synthetic(&SynthConfig { seed: 8, ..SynthConfig::default() }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_noise_reproduces_signatures() {
        let d = generate_synthetic(&SynthConfig { noise_sigma: 0.0, ..SynthConfig::default() }).unwrap();
        for s in &d.samples {
            for r in 0..16 {
                for col in 0..16 {
                    let l = s.labels.get(r, col) as usize;
                    for b in 0..8 {
                        assert_eq!(s.cube.get(b, r, col), d.signatures[l][b]);
                    }
                }
            }
        }
    }

    #[test]
    fn emitted_counts_match_recount() {
        let d = generate_synthetic(&SynthConfig { count: 20, classes: 5, ..SynthConfig::default() }).unwrap();
        let recount = compute_pixel_stats(d.samples.iter().map(|s| &s.labels), 5).unwrap();
        assert_eq!(recount, d.counts);
        assert_eq!(d.counts.total(), 20 * 256);
    }

    #[test]
    fn class_bound_enforced() {
        let err = generate_synthetic(&SynthConfig { classes: 300, ..SynthConfig::default() }).unwrap_err();
        assert!(err.to_string().contains("classes must be ≤ 254"));
    }
}
