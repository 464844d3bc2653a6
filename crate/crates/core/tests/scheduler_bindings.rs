use ctaug_core::bindings::{augment_batch_arrays, ArrayView, BoundPlan};
use ctaug_core::scheduler::{augment_batch, augment_stream, batch_gate, AugmentationPlan, Batch, GateMode};
use ctaug_core::{derive_stream, synthetic, Sample, TransformKind, TransformSpec};
use proptest::prelude::*;

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    synthetic::dataset("syn", n, 32, 24, 0, &mut derive_stream(seed, "fixture", 0, 0)).unwrap()
}

fn plan(kind: TransformKind, p: f64) -> AugmentationPlan {
    AugmentationPlan::new(TransformSpec::default_for(kind), p).unwrap()
}

#[test]
fn zero_probability_is_identity_and_one_always_applies() {
    let batch = Batch::new(samples(4, 1), 0, 0).unwrap();
    for bi in 0..50 {
        let b = Batch::new(batch.samples().to_vec(), 2, bi).unwrap();
        assert_eq!(augment_batch(&b, &plan(TransformKind::Rotate, 0.0), 7).unwrap(), b);
        let out = augment_batch(&b, &plan(TransformKind::Posterize, 1.0), 7).unwrap();
        assert!(out.samples().iter().zip(b.samples()).all(|(o, i)| o.image != i.image));
    }
}

#[test]
fn gate_rate_near_probability() {
    let fired = (0..10_000).filter(|&bi| batch_gate(0.3, 42, 0, bi)).count();
    let rate = fired as f64 / 10_000.0;
    assert!((rate - 0.3).abs() <= 0.02, "{rate}");
}

#[test]
fn per_batch_gate_is_all_or_nothing() {
    let p = plan(TransformKind::Posterize, 0.5);
    for bi in 0..40 {
        let b = Batch::new(samples(3, bi), 0, bi).unwrap();
        let out = augment_batch(&b, &p, 5).unwrap();
        let changed: Vec<bool> = out.samples().iter().zip(b.samples()).map(|(o, i)| o != i).collect();
        assert!(changed.iter().all(|&c| c) || changed.iter().all(|&c| !c), "batch {bi}: {changed:?}");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let p = plan(TransformKind::ElasticTransform, 0.6);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| augment_stream(samples(20, 3), &p, 4, 99).unwrap().collect::<Result<Vec<_>, _>>().unwrap())
    };
    assert_eq!(run(1), run(6));
}

#[test]
fn per_image_gate_mixes_within_batch() {
    let p = plan(TransformKind::Posterize, 0.5).with_gate(GateMode::PerImage);
    let b = Batch::new(samples(16, 8), 0, 3).unwrap();
    let out = augment_batch(&b, &p, 1).unwrap();
    let changed = out.samples().iter().zip(b.samples()).filter(|(o, i)| o != i).count();
    assert!(changed > 0 && changed < 16, "{changed}");
}

fn flatten(batch: &[Sample]) -> (Vec<u8>, Vec<u8>) {
    let mut i = Vec::new();
    let mut m = Vec::new();
    for s in batch {
        i.extend_from_slice(s.image.pixels());
        m.extend_from_slice(s.mask.labels());
    }
    (i, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn array_boundary_matches_native(
        kind_index in 0usize..TransformKind::ALL.len(),
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
        epoch in 0u64..5,
        bi in 0u64..1000,
        n in 1usize..4,
    ) {
        let kind = TransformKind::ALL[kind_index];
        prop_assume!(kind != TransformKind::RandomCrop);
        let batch = Batch::new(samples(n, seed), epoch, bi).unwrap();
        let plan = plan(kind, p);
        let native = augment_batch(&batch, &plan, seed).unwrap();
        let (imgs, masks) = flatten(batch.samples());
        let bound = BoundPlan::new(plan, seed);
        let (oi, om) = augment_batch_arrays(
            &bound,
            ArrayView::u8(&imgs, [n, 24, 32]),
            ArrayView::u8(&masks, [n, 24, 32]),
            epoch,
            bi,
        ).unwrap();
        let (ni, nm) = flatten(native.samples());
        prop_assert_eq!(&*oi, &ni[..]);
        prop_assert_eq!(&*om, &nm[..]);
    }
}

#[test]
fn bound_plan_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    std::fs::write(&path, r#"{"master_seed": 5, "kind": "GaussianBlur", "probability": 0.25}"#).unwrap();
    let a = BoundPlan::from_config_path(&path).unwrap();
    let b = BoundPlan::from_config_path(&path).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.master_seed(), 5);
    std::fs::write(&path, r#"{"master_seed": 5, "kind": "GaussianBlur", "probability": 1.5}"#).unwrap();
    let err = BoundPlan::from_config_path(&path).unwrap_err();
    assert_eq!(err.to_string(), "invalid transform spec: probability must be in [0, 1], got 1.5");
}
