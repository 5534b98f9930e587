use monotone_lab::cost::CostFunction;
use monotone_lab::map::GridSpec;
use monotone_lab::transport::{make_generator_map, DensitySpec, GeneratorKind};
use std::time::Instant;

fn main() {
    for &p in &[2.0, 3.0] {
        for target in [
            DensitySpec::Uniform,
            DensitySpec::Gaussian { center: vec![0.2, -0.1], sigma: 0.5 },
            DensitySpec::TwoBump,
        ] {
            let grid = GridSpec::cube(2, -1.0, 1.0, 64).unwrap();
            let cost = CostFunction::isotropic(2, p).unwrap();
            let t0 = Instant::now();
            let kind = GeneratorKind::ot_grid(target.clone(), 11);
            let map = make_generator_map(&kind, &cost, &grid).unwrap();
            println!("p={p} target={target:?}: {:?} nodes={}", t0.elapsed(), map.node_count());
        }
    }
}
