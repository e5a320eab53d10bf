use super::canonical::{DatasetManifest, Split};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Split sizes by largest remainder, then topped up so every part is non-empty.
fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    // Tolerate representation error such as 100 * 0.7 = 69.99999999999999.
    let mut sizes: [usize; 3] = std::array::from_fn(|i| (exact[i] + 1e-9).floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[i] = 1;
        }
    }
    sizes
}

/// Seeded train/val/test assignment keyed on sorted sample ids, so the
/// result does not depend on the order samples are listed in.
pub fn split_dataset(manifest: &DatasetManifest, ratios: (f64, f64, f64), seed: u64) -> Result<DatasetManifest> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("ratios must sum to 1"));
    }
    let n = manifest.samples.len();
    if n < 3 {
        return Err(Error::invalid(format!("cannot split {n} samples into 3 non-empty parts")));
    }
    let mut ids: Vec<&str> = manifest.ids().collect();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes = split_sizes(n, r);
    let mut out = manifest.clone();
    out.splits.clear();
    let mut it = ids.into_iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for id in it.by_ref().take(size) {
            out.splits.insert(id.to_string(), split);
        }
    }
    Ok(out)
}
