//! Built-in example problems, compiled in so the standard experiments run
//! from a clean checkout with no input files.

use crate::measures::{hamming_matrix, DiscreteDistribution, DistortionMatrix};

/// A named built-in problem.
#[derive(Debug, Clone)]
pub enum Fixture {
    /// A discrete source with a default reproduction grid.
    Source {
        source: DiscreteDistribution,
        reproduction_atoms: Vec<f64>,
        /// Distortion between source atoms and the reproduction grid.
        distortion: DistortionMatrix,
    },
    /// A channel transition matrix, rows p(y|x).
    Channel(Vec<Vec<f64>>),
}

pub const FIXTURE_NAMES: [&str; 4] = [
    "fig-sd-rd-5atom",
    "fig-sq-emd-10atom",
    "binary-hamming",
    "bsc-0.11",
];

/// Five-atom squared-error source used for the rate-distortion
/// equivalence experiments.
pub fn five_atom_source() -> DiscreteDistribution {
    DiscreteDistribution::with_atoms(
        vec![-1.0, -0.4, 0.15, 0.7, 1.3],
        vec![0.15, 0.3, 0.2, 0.25, 0.1],
    )
    .expect("fixture weights are valid")
}

/// Ten-atom squared-error source used for the quantizer equivalence
/// experiments. Atoms and weights were drawn once from a seeded Gaussian
/// mixture and frozen.
pub fn ten_atom_source() -> DiscreteDistribution {
    DiscreteDistribution::with_atoms(
        vec![
            -1.978939, -1.099171, -0.799335, -0.12826, 0.500382, 1.102743,
            1.188278, 1.284914, 1.494214, 1.588855,
        ],
        vec![
            0.074779, 0.072488, 0.070294, 0.088006, 0.093544, 0.098102, 0.139262,
            0.120374, 0.104498, 0.138653,
        ],
    )
    .expect("fixture weights are valid")
}

/// Uniform binary source with Hamming distortion; its rate-distortion
/// function is the analytic R(D) = ln 2 − H_b(D).
pub fn binary_hamming() -> (DiscreteDistribution, DistortionMatrix) {
    (
        DiscreteDistribution::with_atoms(vec![0.0, 1.0], vec![0.5, 0.5])
            .expect("fixture weights are valid"),
        hamming_matrix(2, 2).expect("nonempty"),
    )
}

/// Binary symmetric channel with crossover probability 0.11.
pub fn bsc_011() -> Vec<Vec<f64>> {
    vec![vec![0.89, 0.11], vec![0.11, 0.89]]
}

/// Looks up a built-in by its public name.
pub fn fixture(name: &str) -> Option<Fixture> {
    match name {
        "fig-sd-rd-5atom" => {
            let source = five_atom_source();
            let atoms = source.atoms().expect("fixture has atoms").to_vec();
            let distortion =
                crate::measures::squared_error_matrix(&atoms, &atoms).expect("nonempty");
            Some(Fixture::Source {
                source,
                reproduction_atoms: atoms,
                distortion,
            })
        }
        "fig-sq-emd-10atom" => {
            let source = ten_atom_source();
            let atoms = source.atoms().expect("fixture has atoms").to_vec();
            let distortion =
                crate::measures::squared_error_matrix(&atoms, &atoms).expect("nonempty");
            Some(Fixture::Source {
                source,
                reproduction_atoms: atoms,
                distortion,
            })
        }
        "binary-hamming" => {
            let (source, distortion) = binary_hamming();
            Some(Fixture::Source {
                reproduction_atoms: source.atoms().expect("fixture has atoms").to_vec(),
                source,
                distortion,
            })
        }
        "bsc-0.11" => Some(Fixture::Channel(bsc_011())),
        _ => None,
    }
}
