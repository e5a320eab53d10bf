//! Class weights and the class-weighted cross-entropy + Dice objective.
//!
//! Losses are computed per image and averaged over the images of a batch,
//! so a batch loss is linear in its images and gradient accumulation over
//! micro-batches matches one larger batch.

use crate::autograd::{Tape, Var};
use crate::dataset::PixelStats;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::types::{LabelMap, IGNORE_ID};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_k ∝ 1 / share_k`.
    #[default]
    InverseFrequency,
    /// `w_k = median(share) / share_k`.
    MedianFrequency,
}

/// Per-class loss weights. Classes with a zero pixel count get weight 0;
/// the remaining weights have mean 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    weights: Vec<f64>,
    counts: Vec<u64>,
}

impl ClassWeights {
    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0; k], counts: Vec::new() }
    }

    /// Explicit weights; must be finite and non-negative with a positive sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("class weights must be finite, non-negative, and not all zero"));
        }
        Ok(Self { weights, counts: Vec::new() })
    }

    pub fn from_counts(counts: &[u64], mode: WeightMode) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::NoLabeledPixels);
        }
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let mut cw = Self::from_shares(&shares, mode)?;
        cw.counts = counts.to_vec();
        Ok(cw)
    }

    /// Weights from class shares (any positive scale, e.g. percentages).
    pub fn from_shares(shares: &[f64], mode: WeightMode) -> Result<Self> {
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("class shares must be finite and non-negative"));
        }
        let present: Vec<f64> = shares.iter().copied().filter(|&s| s > 0.0).collect();
        if present.is_empty() {
            return Err(Error::NoLabeledPixels);
        }
        let numerator = match mode {
            WeightMode::InverseFrequency => 1.0,
            WeightMode::MedianFrequency => median(&present),
        };
        let raw: Vec<f64> = shares.iter().map(|&s| if s > 0.0 { numerator / s } else { 0.0 }).collect();
        let mean = raw.iter().sum::<f64>() / present.len() as f64;
        Ok(Self { weights: raw.iter().map(|w| w / mean).collect(), counts: Vec::new() })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Pixel counts the weights were derived from, if any.
    pub fn source_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Reciprocal-frequency weights from labeled-pixel statistics.
pub fn compute_class_weights(stats: &PixelStats) -> Result<ClassWeights> {
    ClassWeights::from_counts(&stats.counts, WeightMode::InverseFrequency)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub ce_coefficient: f64,
    pub dice_coefficient: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { ce_coefficient: 1.0, dice_coefficient: 1.0, epsilon: 1e-6 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.ce_coefficient, self.dice_coefficient);
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(Error::invalid("loss coefficients must be >= 0 with a positive sum"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("dice epsilon must be positive"));
        }
        Ok(())
    }

    pub fn cross_entropy_only() -> Self {
        Self { ce_coefficient: 1.0, dice_coefficient: 0.0, ..Self::default() }
    }

    pub fn dice_only() -> Self {
        Self { ce_coefficient: 0.0, dice_coefficient: 1.0, ..Self::default() }
    }
}

fn check_inputs<T>(logits: &[T], k: usize, labels: &LabelMap, weights: &ClassWeights) -> Result<()> {
    if logits.len() != k * labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits hold {} values, expected {k} x {}",
            logits.len(),
            labels.len()
        )));
    }
    if weights.num_classes() != k {
        return Err(Error::ShapeMismatch(format!("{} class weights for {k} classes", weights.num_classes())));
    }
    if let Some(&bad) = labels.labels().iter().find(|&&l| l != IGNORE_ID && l as usize >= k) {
        return Err(Error::invalid(format!("label id {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Softmax over the class axis of `(K, P)` class-major logits.
fn softmax<T: Scalar>(z: &[T], k: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    for i in 0..p {
        let mut m = z[i];
        for c in 1..k {
            m = m.max(z[c * p + i]);
        }
        let mut denom = T::zero();
        for c in 0..k {
            let e = (z[c * p + i] - m).exp();
            out[c * p + i] = e;
            denom += e;
        }
        for c in 0..k {
            out[c * p + i] /= denom;
        }
    }
    out
}

/// Loss value of one image plus, if requested, its gradient with respect to
/// the `(K, H, W)` logits.
fn image_loss<T: Scalar>(
    z: &[T],
    k: usize,
    labels: &LabelMap,
    weights: &ClassWeights,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(T, Option<Vec<T>>)> {
    check_inputs(z, k, labels, weights)?;
    let y = labels.labels();
    let p = y.len();
    if y.iter().all(|&l| l == IGNORE_ID) {
        return Err(Error::NoSupervisedPixels);
    }
    let prob = softmax(z, k, p);
    let (a, b) = (T::lit(cfg.ce_coefficient), T::lit(cfg.dice_coefficient));
    let mut value = T::zero();
    // Gradient with respect to probabilities (dice) and logits (CE) kept apart;
    // the dice part goes through the softmax Jacobian at the end.
    let mut dz = if want_grad { vec![T::zero(); z.len()] } else { Vec::new() };
    let mut dp = if want_grad { vec![T::zero(); z.len()] } else { Vec::new() };

    if cfg.ce_coefficient > 0.0 {
        let w: Vec<T> = weights.weights().iter().map(|&w| T::lit(w)).collect();
        let mut num = T::zero();
        let mut den = T::zero();
        for (i, &l) in y.iter().enumerate() {
            if l == IGNORE_ID {
                continue;
            }
            let c = l as usize;
            // -log softmax computed from logits for accuracy at saturation.
            let mut m = z[i];
            for j in 1..k {
                m = m.max(z[j * p + i]);
            }
            let lse = m + (0..k).map(|j| (z[j * p + i] - m).exp()).sum::<T>().ln();
            num += w[c] * (lse - z[c * p + i]);
            den += w[c];
        }
        if den > T::zero() {
            value += a * num / den;
            if want_grad {
                for (i, &l) in y.iter().enumerate() {
                    if l == IGNORE_ID {
                        continue;
                    }
                    let c = l as usize;
                    let s = a * w[c] / den;
                    for j in 0..k {
                        let delta = if j == c { T::one() } else { T::zero() };
                        dz[j * p + i] += s * (prob[j * p + i] - delta);
                    }
                }
            }
        }
    }

    if cfg.dice_coefficient > 0.0 {
        let eps = T::lit(cfg.epsilon);
        let mut inter = vec![T::zero(); k];
        let mut psum = vec![T::zero(); k];
        let mut gsum = vec![0usize; k];
        for (i, &l) in y.iter().enumerate() {
            if l == IGNORE_ID {
                continue;
            }
            gsum[l as usize] += 1;
            inter[l as usize] += prob[l as usize * p + i];
            for c in 0..k {
                psum[c] += prob[c * p + i];
            }
        }
        let present: Vec<usize> = (0..k).filter(|&c| gsum[c] > 0).collect();
        let n = T::lit(present.len() as f64);
        let two = T::lit(2.0);
        let mut dice_mean = T::zero();
        for &c in &present {
            let den = psum[c] + T::lit(gsum[c] as f64) + eps;
            let num = two * inter[c] + eps;
            dice_mean += num / den;
            if want_grad {
                // d(1 - mean dice)/dp_ic over non-ignore pixels.
                let base = num / (den * den);
                for (i, &l) in y.iter().enumerate() {
                    if l == IGNORE_ID {
                        continue;
                    }
                    let g = if l as usize == c { two / den } else { T::zero() };
                    dp[c * p + i] -= b * (g - base) / n;
                }
            }
        }
        value += b * (T::one() - dice_mean / n);
        if want_grad {
            for i in 0..p {
                if y[i] == IGNORE_ID {
                    continue;
                }
                let dot: T = (0..k).map(|c| prob[c * p + i] * dp[c * p + i]).sum();
                for c in 0..k {
                    dz[c * p + i] += prob[c * p + i] * (dp[c * p + i] - dot);
                }
            }
        }
    }
    Ok((value, want_grad.then_some(dz)))
}

/// `Σ w·nll / Σ w` over non-ignore pixels of `(K, H, W)` logits.
pub fn weighted_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &LabelMap, weights: &ClassWeights) -> Result<T> {
    let k = class_dim(logits)?;
    Ok(image_loss(logits.data(), k, labels, weights, &LossConfig::cross_entropy_only(), false)?.0)
}

/// `1 − mean dice` over classes present in the non-ignore region.
pub fn dice_loss<T: Scalar>(logits: &Tensor<T>, labels: &LabelMap, epsilon: f64) -> Result<T> {
    let k = class_dim(logits)?;
    let cfg = LossConfig { epsilon, ..LossConfig::dice_only() };
    Ok(image_loss(logits.data(), k, labels, &ClassWeights::uniform(k), &cfg, false)?.0)
}

/// `ce_coefficient · CE + dice_coefficient · Dice` of one image.
pub fn combined_loss<T: Scalar>(
    logits: &Tensor<T>,
    labels: &LabelMap,
    weights: &ClassWeights,
    cfg: &LossConfig,
) -> Result<T> {
    let k = class_dim(logits)?;
    Ok(image_loss(logits.data(), k, labels, weights, cfg, false)?.0)
}

/// Value and logit gradient of [`combined_loss`].
pub fn combined_loss_grad<T: Scalar>(
    logits: &Tensor<T>,
    labels: &LabelMap,
    weights: &ClassWeights,
    cfg: &LossConfig,
) -> Result<(T, Tensor<T>)> {
    let k = class_dim(logits)?;
    let (v, g) = image_loss(logits.data(), k, labels, weights, cfg, true)?;
    Ok((v, Tensor::from_vec(logits.shape(), g.expect("gradient requested"))?))
}

fn class_dim<T: Scalar>(logits: &Tensor<T>) -> Result<usize> {
    match logits.shape() {
        [k, _, _] => Ok(*k),
        s => Err(Error::ShapeMismatch(format!("logits must be (K, H, W), got {s:?}"))),
    }
}

/// Differentiable batch loss: the mean of [`combined_loss`] over the images
/// of `(N, K, H, W)` logits.
pub fn batch_loss<T: Scalar>(
    tape: &Tape<T>,
    logits: &Var<T>,
    labels: &[&LabelMap],
    weights: &ClassWeights,
    cfg: &LossConfig,
) -> Result<Var<T>> {
    let (n, k, h, w) = logits.dims4();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} label maps for a batch of {n}", labels.len())));
    }
    let want_grad = tape.needs_grad(&[logits]);
    let plane = k * h * w;
    let scale = T::one() / T::lit(n as f64);
    let mut total = T::zero();
    let mut grad = if want_grad { Vec::with_capacity(n * plane) } else { Vec::new() };
    for (i, lm) in labels.iter().enumerate() {
        if lm.spatial() != (h, w) {
            return Err(Error::ShapeMismatch(format!("labels {:?} vs logits {:?}", lm.spatial(), (h, w))));
        }
        let (v, g) = image_loss(&logits.value().data()[i * plane..(i + 1) * plane], k, lm, weights, cfg, want_grad)?;
        total += v;
        if let Some(g) = g {
            grad.extend(g.into_iter().map(|x| x * scale));
        }
    }
    let value = Tensor::scalar(total * scale);
    let bw = want_grad.then(|| {
        let grad = Tensor::from_vec(&[n, k, h, w], grad).expect("gradient shape");
        Box::new(move |g: &Tensor<T>| {
            let mut d = grad.clone();
            d.scale(g.data()[0]);
            vec![Some(d)]
        }) as crate::autograd::BackwardFn<T>
    });
    Ok(tape.op(value, &[logits], bw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(h: usize, w: usize, v: &[u8]) -> LabelMap {
        LabelMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn weights_from_three_to_one_split() {
        let cw = ClassWeights::from_counts(&[75, 25], WeightMode::InverseFrequency).unwrap();
        assert!((cw.weights()[0] - 0.5).abs() < 1e-12 && (cw.weights()[1] - 1.5).abs() < 1e-12);
        let balanced = ClassWeights::from_counts(&[7; 5], WeightMode::InverseFrequency).unwrap();
        assert!(balanced.weights().iter().all(|w| (w - 1.0).abs() < 1e-12));
        let with_gap = ClassWeights::from_counts(&[10, 0, 30], WeightMode::InverseFrequency).unwrap();
        assert_eq!(with_gap.weights()[1], 0.0);
        assert!((with_gap.weights()[0] + with_gap.weights()[2] - 2.0).abs() < 1e-12);
        assert!(ClassWeights::from_counts(&[0, 0], WeightMode::InverseFrequency).is_err());
    }

    #[test]
    fn median_frequency_mode() {
        let cw = ClassWeights::from_counts(&[60, 30, 10], WeightMode::MedianFrequency).unwrap();
        // median share 0.3 → raw (0.5, 1, 3), mean 1.5.
        let expect = [0.5 / 1.5, 1.0 / 1.5, 3.0 / 1.5];
        for (a, b) in cw.weights().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_hand_example() {
        let logits = Tensor::from_vec(&[2, 1, 1], vec![0.0f64, 0.0]).unwrap();
        let cw = ClassWeights::from_weights(vec![1.0, 2.0]).unwrap();
        let v = weighted_cross_entropy(&logits, &labels(1, 1, &[1]), &cw).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturates_to_zero() {
        let logits = Tensor::from_vec(&[2, 1, 1], vec![0.0f64, 50.0]).unwrap();
        let v = weighted_cross_entropy(&logits, &labels(1, 1, &[1]), &ClassWeights::uniform(2)).unwrap();
        assert!(v >= 0.0 && v < 1e-20);
    }

    #[test]
    fn ignored_pixel_is_masked() {
        let two = Tensor::from_vec(&[2, 1, 2], vec![0.3f64, -1.0, 0.1, 2.0]).unwrap();
        let one = Tensor::from_vec(&[2, 1, 1], vec![0.3f64, 0.1]).unwrap();
        let cw = ClassWeights::from_weights(vec![1.0, 3.0]).unwrap();
        let cfg = LossConfig::default();
        let a = combined_loss(&two, &labels(1, 2, &[1, IGNORE_ID]), &cw, &cfg).unwrap();
        let b = combined_loss(&one, &labels(1, 1, &[1]), &cw, &cfg).unwrap();
        assert!((a - b).abs() < 1e-15);
        let (_, g) = combined_loss_grad(&two, &labels(1, 2, &[1, IGNORE_ID]), &cw, &cfg).unwrap();
        assert_eq!(g.data()[1], 0.0);
        assert_eq!(g.data()[3], 0.0);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let z = Tensor::<f64>::zeros(&[2, 1, 2]);
        let err = combined_loss(&z, &labels(1, 2, &[IGNORE_ID; 2]), &ClassWeights::uniform(2), &LossConfig::default());
        assert!(matches!(err, Err(Error::NoSupervisedPixels)));
    }

    #[test]
    fn dice_hand_examples() {
        let z = Tensor::<f64>::zeros(&[2, 2, 2]);
        let v = dice_loss(&z, &labels(2, 2, &[0, 0, 1, 1]), 1e-6).unwrap();
        assert!((v - 0.5).abs() < 1e-6);
        let mut sat = vec![0.0f64; 8];
        for (i, &l) in [0u8, 1, 1, 0].iter().enumerate() {
            sat[l as usize * 4 + i] = 40.0;
        }
        let sat = Tensor::from_vec(&[2, 2, 2], sat).unwrap();
        assert!(dice_loss(&sat, &labels(2, 2, &[0, 1, 1, 0]), 1e-6).unwrap() < 1e-4);
    }

    #[test]
    fn combined_is_sum_of_parts() {
        let z = Tensor::<f64>::zeros(&[2, 2, 2]);
        let lm = labels(2, 2, &[0, 0, 1, 1]);
        let cw = ClassWeights::uniform(2);
        let ce = combined_loss(&z, &lm, &cw, &LossConfig::cross_entropy_only()).unwrap();
        assert_eq!(ce, weighted_cross_entropy(&z, &lm, &cw).unwrap());
        let d = combined_loss(&z, &lm, &cw, &LossConfig::dice_only()).unwrap();
        assert_eq!(d, dice_loss(&z, &lm, 1e-6).unwrap());
        let both = combined_loss(&z, &lm, &cw, &LossConfig::default()).unwrap();
        assert!((both - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-6);
    }

    /// Per-class dice computed directly from the definition.
    fn dice_oracle(z: &[f64], k: usize, y: &[u8], eps: f64) -> f64 {
        let p = y.len();
        let mut dices = Vec::new();
        for c in 0..k {
            let (mut inter, mut ps, mut gs) = (0.0, 0.0, 0.0);
            for i in 0..p {
                if y[i] == IGNORE_ID {
                    continue;
                }
                let m = (0..k).map(|j| z[j * p + i]).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..k).map(|j| (z[j * p + i] - m).exp()).sum();
                let pc = (z[c * p + i] - m).exp() / s;
                let g = if y[i] as usize == c { 1.0 } else { 0.0 };
                inter += pc * g;
                ps += pc;
                gs += g;
            }
            if gs > 0.0 {
                dices.push((2.0 * inter + eps) / (ps + gs + eps));
            }
        }
        1.0 - dices.iter().sum::<f64>() / dices.len() as f64
    }

    fn instance() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<u8>)> {
        (2usize..=4, 1usize..=6, 1usize..=6).prop_flat_map(|(k, h, w)| {
            let labels = prop::collection::vec(
                prop_oneof![4 => 0..k as u8, 1 => Just(IGNORE_ID)],
                h * w,
            )
            .prop_filter("needs a supervised pixel", |v| v.iter().any(|&l| l != IGNORE_ID));
            (Just(k), Just(h), Just(w), prop::collection::vec(-3.0f64..3.0, k * h * w), labels)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dice_matches_oracle((k, h, w, z, y) in instance()) {
            let t = Tensor::from_vec(&[k, h, w], z.clone()).unwrap();
            let v = dice_loss(&t, &LabelMap::new(h, w, y.clone()).unwrap(), 1e-6).unwrap();
            prop_assert!((v - dice_oracle(&z, k, &y, 1e-6)).abs() < 1e-12);
        }

        #[test]
        fn combined_gradient_matches_finite_differences((k, h, w, z, y) in instance()) {
            let lm = LabelMap::new(h, w, y).unwrap();
            let cw = ClassWeights::from_weights((0..k).map(|c| 0.5 + c as f64).collect()).unwrap();
            let cfg = LossConfig::default();
            let t = Tensor::from_vec(&[k, h, w], z.clone()).unwrap();
            let (_, g) = combined_loss_grad(&t, &lm, &cw, &cfg).unwrap();
            let eps = 1e-6;
            for i in 0..z.len() {
                let mut up = z.clone();
                up[i] += eps;
                let mut down = z.clone();
                down[i] -= eps;
                let f = |v: Vec<f64>| combined_loss(&Tensor::from_vec(&[k, h, w], v).unwrap(), &lm, &cw, &cfg).unwrap();
                let fd = (f(up) - f(down)) / (2.0 * eps);
                prop_assert!((fd - g.data()[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "{i}: {fd} vs {}", g.data()[i]);
            }
        }

        #[test]
        fn cross_entropy_shift_invariant((k, h, w, z, y) in instance(), shift in -5.0f64..5.0) {
            let lm = LabelMap::new(h, w, y).unwrap();
            let cw = ClassWeights::uniform(k);
            let a = weighted_cross_entropy(&Tensor::from_vec(&[k, h, w], z.clone()).unwrap(), &lm, &cw).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let b = weighted_cross_entropy(&Tensor::from_vec(&[k, h, w], shifted).unwrap(), &lm, &cw).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn pixel_permutation_invariant((k, h, w, z, y) in instance(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let p = h * w;
            let mut perm: Vec<usize> = (0..p).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let zp: Vec<f64> = (0..k * p).map(|i| z[(i / p) * p + perm[i % p]]).collect();
            let yp: Vec<u8> = perm.iter().map(|&j| y[j]).collect();
            let cw = ClassWeights::from_weights((0..k).map(|c| 1.0 + c as f64).collect()).unwrap();
            let cfg = LossConfig::default();
            let a = combined_loss(&Tensor::from_vec(&[k, h, w], z).unwrap(), &LabelMap::new(h, w, y).unwrap(), &cw, &cfg).unwrap();
            let b = combined_loss(&Tensor::from_vec(&[k, 1, p], zp).unwrap(), &LabelMap::new(1, p, yp).unwrap(), &cw, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }
    }

    #[test]
    fn batch_loss_is_mean_of_images() {
        let z: Vec<f64> = (0..2 * 3 * 2 * 2).map(|i| ((i * 5) % 7) as f64 * 0.3 - 1.0).collect();
        let lm0 = labels(2, 2, &[0, 1, 2, 1]);
        let lm1 = labels(2, 2, &[2, 2, IGNORE_ID, 0]);
        let cw = ClassWeights::uniform(3);
        let cfg = LossConfig::default();
        let tape = Tape::new();
        let x = tape.leaf(std::sync::Arc::new(Tensor::from_vec(&[2, 3, 2, 2], z.clone()).unwrap()));
        let loss = batch_loss(&tape, &x, &[&lm0, &lm1], &cw, &cfg).unwrap();
        let a = combined_loss(&Tensor::from_vec(&[3, 2, 2], z[..12].to_vec()).unwrap(), &lm0, &cw, &cfg).unwrap();
        let b = combined_loss(&Tensor::from_vec(&[3, 2, 2], z[12..].to_vec()).unwrap(), &lm1, &cw, &cfg).unwrap();
        assert!((loss.value().data()[0] - 0.5 * (a + b)).abs() < 1e-15);
        let grads = tape.backward(&loss);
        let (_, ga) = combined_loss_grad(&Tensor::from_vec(&[3, 2, 2], z[..12].to_vec()).unwrap(), &lm0, &cw, &cfg).unwrap();
        let g = grads.get(&x).unwrap();
        for i in 0..12 {
            assert!((g.data()[i] - 0.5 * ga.data()[i]).abs() < 1e-15);
        }
    }
}
