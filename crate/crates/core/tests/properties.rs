use proptest::prelude::*;
use sgan_core::fields::{make_split_plan, make_split_plan_by_width, pf_k_layers, pf_one_layer, Axis, IndexInterval, SPLIT_OVERLAP};
use sgan_core::model::{build, sample_z, NetworkSpec};
use sgan_core::ops::BnMode;
use sgan_core::synthesis::generate_chunked;
use sgan_core::trainer::PatchSampler;
use sgan_core::Tensor;

proptest! {
    #[test]
    fn sampler_stays_inside(
        sizes in prop::collection::vec((1usize..20, 1usize..20), 1..4),
        ph in 1usize..8,
        pw in 1usize..8,
        seed in any::<u64>(),
    ) {
        let images: Vec<Tensor<f32>> = sizes.iter().map(|&(h, w)| Tensor::zeros(&[h + ph - 1, w + pw - 1, 3])).collect();
        let mut s = PatchSampler::new(images.clone(), (ph, pw), seed).unwrap();
        for _ in 0..50 {
            let (i, y, x) = s.sample_position();
            let shape = images[i].shape();
            prop_assert!(y + ph <= shape[0] && x + pw <= shape[1]);
        }
        let batch = s.sample_batch(3).unwrap();
        prop_assert_eq!(batch.shape(), &[3, ph, pw, 3]);
    }

    #[test]
    fn undersized_sources_rejected(h in 1usize..6, w in 1usize..6) {
        let img = Tensor::<f32>::zeros(&[h, w, 3]);
        prop_assert!(PatchSampler::new(vec![img], (h + 1, w), 0).is_err());
    }

    #[test]
    fn split_plans_tile_the_output(extent in 5usize..80, k in 1u32..5, n in 1usize..6) {
        let Ok(plan) = make_split_plan(extent, k, n, Axis::Rows) else { return Ok(()) };
        let r = 1i64 << k;
        let mut next = 0;
        for c in &plan.chunks {
            prop_assert_eq!(c.keep.a, next);
            next = c.keep.b;
            // kept pixels stay 2r away from any cut in the chunk's own noise
            prop_assert!(c.z.a == 0 || c.keep.a - c.z.a * r >= SPLIT_OVERLAP as i64 * r);
            prop_assert!(c.z.b == extent as i64 || c.z.b * r - c.keep.b >= SPLIT_OVERLAP as i64 * r);
            prop_assert!(c.z.a >= 0 && c.z.b <= extent as i64);
        }
        prop_assert_eq!(next, extent as i64 * r);
    }

    #[test]
    fn width_plans_bound_chunks(extent in 6usize..100, width in 6usize..12) {
        let plan = make_split_plan_by_width(extent, 2, width, Axis::Cols).unwrap();
        prop_assert!(plan.max_z_width() <= width);
        prop_assert_eq!(plan.output_len(), extent * 4);
    }

    #[test]
    fn pf_composes(a in -50i64..50, len in 1i64..10, k in 0u32..8) {
        let iv = IndexInterval::new(a, a + len).unwrap();
        let mut it = iv;
        for _ in 0..k {
            it = pf_one_layer(it);
        }
        prop_assert_eq!(pf_k_layers(iv, k), it);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chunked_equals_full(l in 5usize..20, m in 1usize..4, n in 1usize..4, k in 1u32..4, seed in any::<u64>()) {
        let spec = NetworkSpec::from_hidden(2, &vec![3; k as usize - 1]).unwrap();
        let (g, _) = build::<f32>(&spec, seed).unwrap();
        let z = sample_z::<f32>(l, m, 2, seed ^ 1).unwrap();
        let Ok(plan) = make_split_plan(l, k, n, Axis::Rows) else { return Ok(()) };
        let full = g.generate(&z, BnMode::Infer).unwrap();
        prop_assert_eq!(generate_chunked(&g, &z, &plan).unwrap(), full);
    }
}
