//! Canonical on-disk datasets, relabeling into the consolidated taxonomy,
//! pixel statistics, seeded splits, and a synthetic scene generator.

mod canonical;
mod relabel;
mod split;
mod stats;
mod synth;

pub use canonical::{read_canonical, write_canonical, write_manifest, CanonicalDataset, DatasetManifest, SampleEntry, Split, FORMAT_VERSION};
pub use relabel::{builtin_taxonomy, relabel, RelabelMap};
pub use split::{split_dataset, DEFAULT_RATIOS};
pub use stats::{compute_pixel_stats, PixelStats};
pub use synth::{generate_synthetic, SynthConfig, SynthDataset};
