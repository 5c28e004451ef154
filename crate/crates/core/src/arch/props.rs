//! Property tests over the four presets.

use proptest::prelude::*;

use super::*;

fn presets() -> Vec<ArchitectureSpec> {
    vec![
        build_preset("resnet56", 10, 32).unwrap(),
        build_preset("resnet110", 10, 32).unwrap(),
        build_preset("vgg16", 10, 32).unwrap(),
        build_preset("resnet50", 1000, 224).unwrap(),
    ]
}

/// A preset, its resolution partition, a sub-network index and a valid coding for it.
fn arb_subnet_coding() -> impl Strategy<Value = (usize, usize, Vec<u32>)> {
    (0usize..4, 0usize..4).prop_flat_map(|(p, s)| {
        let arch = &presets()[p];
        let part = partition_by_resolution(arch);
        let s = s % part.len();
        let bounds = arch.subnet_bounds(&part, s).unwrap();
        let genes: Vec<BoxedStrategy<u32>> = bounds.iter().map(|&b| (1..=b).boxed()).collect();
        (Just(p), Just(s), genes)
    })
}

/// Channel/resolution interface of a layer chain: (in channels, input size, out channels, output size).
fn interface(layers: &[LayerSpec]) -> (u32, (u32, u32), u32, (u32, u32)) {
    let first = layers.first().unwrap();
    let last = layers.last().unwrap();
    (
        first.in_channels,
        (first.input_h, first.input_w),
        last.out_channels,
        last.output_size(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn decode_is_deterministic_and_cost_consistent((p, s, genes) in arb_subnet_coding()) {
        let arch = &presets()[p];
        let part = partition_by_resolution(arch);
        let coding = PruneCoding::new(s, genes.clone());
        prop_assert!(arch.validate_coding(&part, &coding).is_valid());
        let a = arch.decode_coding(&part, &coding).unwrap();
        let b = arch.decode_coding(&part, &coding).unwrap();
        prop_assert_eq!(&a, &b);
        let direct: Cost = a.iter().map(layer_cost).sum();
        prop_assert_eq!(arch.subnet_cost(&part, s, Some(&genes)).unwrap(), direct);
        prop_assert!(cost(&a).is_ok());
    }

    #[test]
    fn pruning_preserves_the_subnet_interface((p, s, genes) in arb_subnet_coding()) {
        let arch = &presets()[p];
        let part = partition_by_resolution(arch);
        let pruned = arch.decode_coding(&part, &PruneCoding::new(s, genes)).unwrap();
        let base = arch.decode_coding(&part, &arch.encode_baseline(&part, s).unwrap()).unwrap();
        prop_assert_eq!(interface(&pruned), interface(&base));
    }

    #[test]
    fn cost_strictly_increases_in_every_gene((p, s, genes) in arb_subnet_coding(), pick in any::<prop::sample::Index>()) {
        let arch = &presets()[p];
        let part = partition_by_resolution(arch);
        let bounds = arch.subnet_bounds(&part, s).unwrap();
        let i = pick.index(genes.len());
        prop_assume!(genes[i] < bounds[i]);
        let mut up = genes.clone();
        up[i] += 1;
        let lo = arch.subnet_cost(&part, s, Some(&genes)).unwrap();
        let hi = arch.subnet_cost(&part, s, Some(&up)).unwrap();
        prop_assert!(hi.params > lo.params, "{:?} -> {:?}", lo, hi);
        prop_assert!(hi.flops > lo.flops, "{:?} -> {:?}", lo, hi);
    }

    #[test]
    fn random_partitions_cover_every_block_once(p in 0usize..4, cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..6)) {
        let arch = &presets()[p];
        let n = arch.blocks().len();
        let mut points: Vec<usize> = cuts.iter().map(|c| 1 + c.index(n - 1)).collect();
        points.push(0);
        points.push(n);
        points.sort();
        points.dedup();
        let sizes: Vec<usize> = points.windows(2).map(|w| w[1] - w[0]).collect();
        let part = SubnetPartition::from_sizes(&sizes).unwrap();
        prop_assert_eq!(part.num_blocks(), n);
        for block in 0..n {
            let owners = part.ranges().iter().filter(|r| r.contains(&block)).count();
            prop_assert_eq!(owners, 1);
            let s = part.subnet_of(block).unwrap();
            prop_assert!(part.range(s).contains(&block));
        }
        let total: Cost = (0..part.len()).map(|s| arch.subnet_cost(&part, s, None).unwrap()).sum();
        prop_assert_eq!(arch.fixed_cost() + total, arch.cost());
        prop_assert!(crate::space::divided_space(arch, &part).unwrap() <= crate::space::whole_space(arch, &part).unwrap());
    }
}

#[test]
fn baseline_coding_reproduces_baseline_cost() {
    for arch in presets() {
        let part = partition_by_resolution(&arch);
        let selections: Vec<Option<Vec<u32>>> = (0..part.len())
            .map(|s| Some(arch.encode_baseline(&part, s).unwrap().genes))
            .collect();
        assert_eq!(
            arch.scheme_cost(&part, &selections).unwrap(),
            arch.cost(),
            "{}",
            arch.name()
        );
        for s in 0..part.len() {
            let layers = arch
                .decode_coding(&part, &arch.encode_baseline(&part, s).unwrap())
                .unwrap();
            let original: Vec<LayerSpec> = arch.blocks()[part.range(s)]
                .iter()
                .flat_map(|b| b.layers.clone())
                .collect();
            assert_eq!(layers, original);
        }
    }
}

#[test]
fn resolution_partitions_are_valid() {
    for arch in presets() {
        let part = partition_by_resolution(&arch);
        assert_eq!(part.num_blocks(), arch.blocks().len());
        assert_eq!(
            part.len(),
            if arch.name() == "resnet56" || arch.name() == "resnet110" {
                3
            } else {
                4
            }
        );
    }
}
