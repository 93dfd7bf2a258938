use privgraph::graphmodel::{Kernel, KernelKind};
use privgraph::metric::{AttributeDataset, Metric, SpaceConfig, build_grid_partition};
use privgraph::noise::NoiseSpec;
use privgraph::psgg::run_psgg;
use privgraph::psmm::DiscreteMeasure;
use privgraph::seed::stream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairs_are_internally_consistent(
        xs in prop::collection::vec(0.0f64..=1.0, 1..20),
        m in 1usize..8,
        a in 0.5f64..15.0,
        b in 0.5f64..15.0,
        eps in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let data = AttributeDataset::from_scalars(&xs).unwrap();
        let part = build_grid_partition(SpaceConfig::new(1, Metric::SupNorm).unwrap(), m).unwrap();
        let kernel = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1).unwrap();
        let noise = NoiseSpec::discrete_laplace(eps).unwrap();
        let pair = run_psgg(&data, &part, &noise, a, b, &kernel, &mut stream(seed)).unwrap();

        prop_assert_eq!(pair.true_graph.len(), pair.shared + pair.extra_true);
        prop_assert_eq!(pair.synthetic_graph.len(), pair.shared + pair.extra_synthetic);
        prop_assert_eq!(pair.true_cells.len(), pair.true_graph.len());
        prop_assert_eq!(pair.synthetic_cells.len(), pair.synthetic_graph.len());
        if a == b {
            prop_assert_eq!(pair.extra_true + pair.extra_synthetic, 0);
        }
        prop_assert!(pair.z() <= pair.shared);
        for mt in &pair.common_matches {
            prop_assert_eq!(pair.true_cells[mt.true_vertex], mt.cell);
            prop_assert_eq!(pair.synthetic_cells[mt.synthetic_vertex], mt.cell);
            // only cells with mass on both sides can be shared
            prop_assert!(pair.psmm.private_measure.weights()[mt.cell] > 0.0);
            prop_assert!(pair.psmm.counts[mt.cell] > 0);
        }
        for (v, &k) in pair.true_graph.vertices.iter().zip(&pair.true_cells) {
            prop_assert!(data.points().contains(&v.attr));
            prop_assert!(part.contains(k, &v.attr));
        }
        for (v, &k) in pair.synthetic_graph.vertices.iter().zip(&pair.synthetic_cells) {
            prop_assert!(part.contains(k, &v.attr));
            prop_assert!(pair.psmm.private_measure.weights()[k] > 0.0);
        }
    }

    #[test]
    fn same_seed_same_pair(seed in any::<u64>()) {
        let data = AttributeDataset::from_scalars(&[0.1, 0.4, 0.8]).unwrap();
        let part = build_grid_partition(SpaceConfig::new(1, Metric::SupNorm).unwrap(), 3).unwrap();
        let kernel = Kernel::new(KernelKind::ChungLu, Metric::SupNorm, 1).unwrap();
        let noise = NoiseSpec::discrete_laplace(1.0).unwrap();
        let p1 = run_psgg(&data, &part, &noise, 5.0, 3.0, &kernel, &mut stream(seed)).unwrap();
        let p2 = run_psgg(&data, &part, &noise, 5.0, 3.0, &kernel, &mut stream(seed)).unwrap();
        prop_assert_eq!(p1, p2);
    }
}
