//! Shared corpora for the integration tests.
#![allow(dead_code)]

use fracbloom::generate::{generate_space, SpaceGenerator};
use fracbloom::kernel::{KernelFamily, KernelSpec};
use fracbloom::operator::OperatorMatrix;
use fracbloom::space::SpaceModel;

/// Thirty generated spaces with at most 64 points.
pub fn space_corpus() -> Vec<(String, SpaceModel)> {
    let mut gens = Vec::new();
    for size in [4, 8, 16, 32, 64] {
        gens.push(SpaceGenerator::Grid1d { size });
    }
    for size in [9, 16, 25, 36, 64] {
        gens.push(SpaceGenerator::Grid2d { size });
    }
    for size in [8, 16, 32, 64] {
        gens.push(SpaceGenerator::Tree { size });
    }
    for (size, epsilon) in [(8, 0.5), (16, 0.3), (32, 0.5), (16, 1.0)] {
        gens.push(SpaceGenerator::Snowflake { size, epsilon });
    }
    for seed in 0..12u64 {
        gens.push(SpaceGenerator::RandomCloud {
            size: 10 + 3 * seed as usize,
            seed,
            dim: 1 + seed as usize % 3,
            random_mass: seed % 2 == 1,
        });
    }
    gens.into_iter()
        .map(|g| (format!("{g:?}"), generate_space(&g).unwrap()))
        .collect()
}

/// The four builtin kernel specs.
pub fn kernel_specs() -> Vec<KernelSpec> {
    vec![
        KernelSpec::new(KernelFamily::PowerSign),
        KernelSpec::new(KernelFamily::RieszLike),
        KernelSpec::new(KernelFamily::HilbertGrid),
        KernelSpec::perturbed(KernelFamily::PowerSign, 0.1, 7),
    ]
}

/// Every (space, kernel) pair on which the kernel is defined.
pub fn operator_corpus(max_points: usize) -> Vec<(String, SpaceModel, OperatorMatrix)> {
    let mut out = Vec::new();
    for (name, space) in space_corpus() {
        if space.len() > max_points {
            continue;
        }
        for spec in kernel_specs() {
            if let Ok(op) = OperatorMatrix::new(&spec, &space) {
                out.push((format!("{name} / {:?}", spec.family), space.clone(), op));
            }
        }
    }
    out
}
