use hsiseg_core::dataset::{
    compute_pixel_stats, generate_synthetic, read_canonical, relabel, split_dataset, write_canonical, RelabelMap, Split,
    SynthConfig, DEFAULT_RATIOS,
};
use hsiseg_core::types::subsample_spatial;
use hsiseg_core::{LabelMap, IGNORE_ID};
use proptest::prelude::*;
use std::collections::BTreeMap;

#[test]
fn synthetic_dataset_survives_canonical_form() {
    let cfg = SynthConfig { count: 6, classes: 4, ..SynthConfig::default() };
    let synth = generate_synthetic(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_canonical(&synth.samples, &synth.descriptor, BTreeMap::new(), dir.path()).unwrap();
    let ds = read_canonical(dir.path()).unwrap();
    let loaded = ds.load_all().unwrap();
    assert_eq!(loaded, synth.samples);
    let stats = compute_pixel_stats(loaded.iter().map(|s| &s.labels), 4).unwrap();
    assert_eq!(stats.counts, synth.counts.counts);
    assert_eq!(stats.labeled() + stats.ignored, 6 * 16 * 16);

    // Splits are a partition and depend only on the seed.
    let a = split_dataset(ds.manifest(), DEFAULT_RATIOS, 3).unwrap();
    let b = split_dataset(ds.manifest(), DEFAULT_RATIOS, 3).unwrap();
    assert_eq!(a.splits, b.splits);
    assert_eq!(a.splits.len(), 6);
    assert!(Split::ALL.iter().all(|s| a.splits.values().any(|v| v == s)));
}

#[test]
fn builtin_maps_relabel_every_native_id() {
    for (name, native) in [("hyko2", 10u8), ("hsi-drive-v2", 9), ("hs-city-v2", 19)] {
        let map = RelabelMap::builtin(name).unwrap();
        let ids: Vec<u8> = (0..native).chain([IGNORE_ID]).collect();
        let out = relabel(&LabelMap::new(1, ids.len(), ids.clone()).unwrap(), &map).unwrap();
        let k = map.target().num_classes() as u8;
        assert!(out.labels().iter().all(|&l| l < k || l == IGNORE_ID), "{name}");
        assert_eq!(*out.labels().last().unwrap(), IGNORE_ID);
        // Relabeled stats conserve the pixel total.
        let stats = compute_pixel_stats([&out], k as usize).unwrap();
        assert_eq!(stats.total(), ids.len() as u64);
        assert!(relabel(&LabelMap::new(1, 1, vec![native]).unwrap(), &map).is_err());
    }
}

#[test]
fn hs_city_subsample_size_keeps_correspondence() {
    let synth = generate_synthetic(&SynthConfig { count: 1, height: 40, width: 50, bands: 2, ..SynthConfig::default() }).unwrap();
    let s = &synth.samples[0];
    let small = subsample_spatial(s, (17, 23)).unwrap();
    assert_eq!(small.cube.spatial(), (17, 23));
    for r in 0..17 {
        for c in 0..23 {
            let (sr, sc) = (r * 40 / 17, c * 50 / 23);
            assert_eq!(small.labels.get(r, c), s.labels.get(sr, sc));
            assert_eq!(small.cube.get(1, r, c), s.cube.get(1, sr, sc));
        }
    }
    assert!(subsample_spatial(s, (41, 10)).is_err());
}

proptest! {
    #[test]
    fn subsampling_only_keeps_existing_labels(h in 1usize..12, w in 1usize..12, th in 1usize..12, tw in 1usize..12, seed in 0u64..50) {
        prop_assume!(th <= h && tw <= w);
        let synth = generate_synthetic(&SynthConfig { seed, count: 1, height: h, width: w, bands: 1, classes: 5, noise_sigma: 0.0 }).unwrap();
        let s = &synth.samples[0];
        let out = subsample_spatial(s, (th, tw)).unwrap();
        prop_assert!(out.labels.labels().iter().all(|l| s.labels.labels().contains(l)));
        prop_assert_eq!(out.labels.get(0, 0), s.labels.get(0, 0));
        if (th, tw) == (h, w) {
            prop_assert_eq!(&out, s);
        }
    }
}
