//! Problem definition files.
//!
//! A problem is either a named built-in fixture or a TOML file:
//!
//! ```toml
//! kind = "source"
//! atoms = [-1.0, 0.0, 1.0]
//! weights = [0.25, 0.5, 0.25]
//! reproduction_atoms = [-0.5, 0.5]   # optional, defaults to atoms
//! distortion = "squared-error"       # or "hamming"; optional
//! ```
//!
//! ```toml
//! kind = "channel"
//! matrix = [[0.89, 0.11], [0.11, 0.89]]   # rows p(y|x)
//! ```
//!
//! ```toml
//! fixture = "binary-hamming"   # alias for a built-in
//! ```

use otrd::fixtures::{fixture, Fixture, FIXTURE_NAMES};
use otrd::measures::{hamming_matrix, squared_error_matrix, DiscreteDistribution};
use serde::Deserialize;
use std::path::Path;

/// Raw file contents before validation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSpecFile {
    kind: Option<String>,
    fixture: Option<String>,
    atoms: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
    reproduction_atoms: Option<Vec<f64>>,
    distortion: Option<String>,
    matrix: Option<Vec<Vec<f64>>>,
}

/// Resolves a CLI problem argument: a built-in fixture name, or a path to
/// a TOML problem file. Error messages name the offending field.
pub fn resolve(arg: &str) -> Result<Fixture, String> {
    if let Some(f) = fixture(arg) {
        return Ok(f);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(format!(
            "'{arg}' is neither a built-in fixture ({}) nor an existing file",
            FIXTURE_NAMES.join(", ")
        ));
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("{arg}: {e}"))?;
    let file: ProblemSpecFile =
        toml::from_str(&text).map_err(|e| format!("{arg}: {e}"))?;
    if let Some(name) = &file.fixture {
        return fixture(name).ok_or_else(|| {
            format!(
                "{arg}: fixture: unknown name '{name}' (expected one of {})",
                FIXTURE_NAMES.join(", ")
            )
        });
    }
    match file.kind.as_deref() {
        Some("source") => resolve_source(arg, &file),
        Some("channel") => resolve_channel(arg, &file),
        Some(other) => Err(format!(
            "{arg}: kind: expected \"source\" or \"channel\", got \"{other}\""
        )),
        None => Err(format!("{arg}: kind: missing (or set fixture = \"...\")")),
    }
}

fn resolve_source(arg: &str, file: &ProblemSpecFile) -> Result<Fixture, String> {
    if file.matrix.is_some() {
        return Err(format!("{arg}: matrix: not allowed for kind = \"source\""));
    }
    let atoms = file
        .atoms
        .clone()
        .ok_or_else(|| format!("{arg}: atoms: missing"))?;
    let weights = file
        .weights
        .clone()
        .ok_or_else(|| format!("{arg}: weights: missing"))?;
    let source = DiscreteDistribution::with_atoms(atoms.clone(), weights)
        .map_err(|e| format!("{arg}: weights: {e}"))?;
    let reproduction_atoms = file.reproduction_atoms.clone().unwrap_or(atoms);
    let distortion = match file.distortion.as_deref() {
        None | Some("squared-error") => {
            squared_error_matrix(source.atoms().expect("built with atoms"), &reproduction_atoms)
                .map_err(|e| format!("{arg}: reproduction_atoms: {e}"))?
        }
        Some("hamming") => hamming_matrix(source.len(), reproduction_atoms.len())
            .map_err(|e| format!("{arg}: reproduction_atoms: {e}"))?,
        Some(other) => {
            return Err(format!(
                "{arg}: distortion: expected \"squared-error\" or \"hamming\", got \"{other}\""
            ))
        }
    };
    Ok(Fixture::Source {
        source,
        reproduction_atoms,
        distortion,
    })
}

fn resolve_channel(arg: &str, file: &ProblemSpecFile) -> Result<Fixture, String> {
    for field in ["atoms", "weights", "reproduction_atoms", "distortion"] {
        let present = match field {
            "atoms" => file.atoms.is_some(),
            "weights" => file.weights.is_some(),
            "reproduction_atoms" => file.reproduction_atoms.is_some(),
            _ => file.distortion.is_some(),
        };
        if present {
            return Err(format!("{arg}: {field}: not allowed for kind = \"channel\""));
        }
    }
    let matrix = file
        .matrix
        .clone()
        .ok_or_else(|| format!("{arg}: matrix: missing"))?;
    if matrix.is_empty() {
        return Err(format!("{arg}: matrix: must have at least one row"));
    }
    let m = matrix[0].len();
    for (x, row) in matrix.iter().enumerate() {
        if row.len() != m {
            return Err(format!(
                "{arg}: matrix: row {x} has {} entries, expected {m}",
                row.len()
            ));
        }
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(format!(
                "{arg}: matrix: row {x} has an entry outside [0, 1]"
            ));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(format!("{arg}: matrix: row {x} sums to {s}, expected 1"));
        }
    }
    Ok(Fixture::Channel(matrix))
}

/// The source triple, or an input error when the spec is a channel.
pub fn expect_source(
    arg: &str,
    f: Fixture,
) -> Result<(DiscreteDistribution, Vec<f64>, otrd::measures::DistortionMatrix), String> {
    match f {
        Fixture::Source {
            source,
            reproduction_atoms,
            distortion,
        } => Ok((source, reproduction_atoms, distortion)),
        Fixture::Channel(_) => Err(format!("{arg}: this command needs a source, got a channel")),
    }
}

/// The channel matrix, or an input error when the spec is a source.
pub fn expect_channel(arg: &str, f: Fixture) -> Result<Vec<Vec<f64>>, String> {
    match f {
        Fixture::Channel(rows) => Ok(rows),
        Fixture::Source { .. } => {
            Err(format!("{arg}: this command needs a channel, got a source"))
        }
    }
}
