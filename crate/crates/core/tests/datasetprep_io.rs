use std::collections::{BTreeMap, BTreeSet};

use ctaug_core::datasetprep::{
    balance_factors, balance_unified, filter_samples, make_folds, pareto_train_count, remap_binary, split_pareto,
};
use ctaug_core::io::{load_sample, save_sample};
use ctaug_core::{derive_stream, synthetic, Image, LabelSpace, Mask, Sample};
use proptest::prelude::*;

#[test]
fn reference_balance_case() {
    let sizes = BTreeMap::from([("a".to_string(), 9166), ("b".to_string(), 472)]);
    let r = balance_factors(&sizes).unwrap();
    assert_eq!(r.factor("a"), Some(1));
    assert_eq!(r.factor("b"), Some(20));
    assert_eq!(r.entries[1].replicated_size, 9440);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn balance_factors_are_minimal(sizes in prop::collection::vec(1usize..20_000, 2..7)) {
        let map: BTreeMap<String, usize> = sizes.iter().enumerate().map(|(i, &n)| (format!("d{i}"), n)).collect();
        let r = balance_factors(&map).unwrap();
        let max = *sizes.iter().max().unwrap();
        prop_assert_eq!(map[&r.largest], max);
        for e in &r.entries {
            prop_assert!(e.factor >= 1);
            prop_assert!((e.factor - 1) * e.size < max);
            prop_assert!(max <= e.factor * e.size);
        }
    }

    #[test]
    fn unified_set_has_replicated_sizes(sizes in prop::collection::vec(1usize..40, 2..5)) {
        let sets: BTreeMap<String, Vec<usize>> =
            sizes.iter().enumerate().map(|(i, &n)| (format!("d{i}"), (0..n).collect())).collect();
        let (unified, report) = balance_unified(&sets).unwrap();
        let total: usize = report.entries.iter().map(|e| e.replicated_size).sum();
        prop_assert_eq!(unified.len(), total);
        for e in &report.entries {
            let copies = unified.iter().filter(|r| r.dataset_id == e.dataset_id).count();
            prop_assert_eq!(copies, e.factor * e.size);
        }
    }

    #[test]
    fn split_and_folds_partition(n in 5usize..200, k in 2usize..6, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let (train, test) = split_pareto(&ids, &mut derive_stream(seed, "split", 0, 0)).unwrap();
        prop_assert_eq!(train.len(), pareto_train_count(n));
        prop_assert_eq!(train.len() + test.len(), n);
        let again = split_pareto(&ids, &mut derive_stream(seed, "split", 0, 0)).unwrap();
        prop_assert_eq!(&again.0, &train);
        prop_assume!(k <= train.len());
        let plan = make_folds(&train, k, &mut derive_stream(seed, "folds", 0, 0)).unwrap()
            .with_test_ids(&test).unwrap();
        let sizes = plan.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), train.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let train_set: BTreeSet<&String> = train.iter().collect();
        prop_assert!(plan.test_ids.iter().all(|t| !train_set.contains(t)));
    }

    #[test]
    fn io_roundtrip_is_exact(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let mut rng = derive_stream(seed, "io", 0, 0);
        let px: Vec<u8> = (0..w * h).map(|_| rng.index(256) as u8).collect();
        let labels: Vec<u8> = (0..w * h).map(|_| [0u8, 128, 255][rng.index(3)]).collect();
        let dir = tempfile::tempdir().unwrap();
        let (ip, mp) = (dir.path().join("i.png"), dir.path().join("m.png"));
        let map = synthetic::label_map("syn");
        let raw = Sample::new(Image::new(w, h, px).unwrap(), Mask::new(w, h, labels).unwrap(), "syn", "i").unwrap();
        save_sample(&raw, &ip, &mp).unwrap();
        let back = load_sample(&ip, &mp, &map).unwrap();
        prop_assert_eq!(&back.image, &raw.image);
        prop_assert_eq!(back.mask, map.translate(&raw.mask).unwrap());
        prop_assert_eq!(map.encode_raw(&map.translate(&raw.mask).unwrap()).unwrap(), raw.mask);
    }
}

#[test]
fn filtering_partitions_and_is_idempotent() {
    let map = synthetic::label_map("syn");
    let all = synthetic::dataset("syn", 30, 24, 24, 4, &mut derive_stream(2, "syn", 0, 0)).unwrap();
    let (kept, removed) = filter_samples(all.clone(), &map);
    assert_eq!(kept.len() + removed.len(), all.len());
    assert_eq!(removed.len(), 7);
    let ids: BTreeSet<_> = kept.iter().chain(&removed).map(|s| s.sample_id.clone()).collect();
    assert_eq!(ids.len(), all.len());
    let (kept2, removed2) = filter_samples(kept.clone(), &map);
    assert_eq!((kept2, removed2.len()), (kept.clone(), 0));

    let bin = remap_binary(&kept[0], &map).unwrap();
    assert_eq!(bin.label_space, LabelSpace::Binary);
    assert!(bin.mask.is_binary());
    assert_eq!(remap_binary(&bin, &map).unwrap(), bin);
    let (kept3, _) = filter_samples(vec![bin.clone()], &map);
    assert_eq!(kept3, vec![bin]);
}
