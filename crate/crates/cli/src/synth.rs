//! Benchmark data generation: writes one of the built-in synthetic series to
//! a CSV that `fit-default`/`fit-advanced` can consume directly.

use std::path::Path;

use autoquant_core::synthetic::{generate, write_csv, SyntheticSpec};

use crate::errors::CliError;

pub fn cmd_synth(generator: &str, length: usize, seed: u64, output: &Path) -> Result<(), CliError> {
    let spec = match generator {
        "hetero_ar1" => SyntheticSpec::hetero_ar1(length, seed),
        "sinusoid_exo" => SyntheticSpec::sinusoid_exo(length, seed),
        "iid_gaussian" => SyntheticSpec::iid_gaussian(length, seed, 0.0, 1.0),
        other => {
            return Err(CliError::Config(format!(
                "unknown generator `{other}`; expected hetero_ar1, sinusoid_exo, or iid_gaussian"
            )))
        }
    };
    let (ds, _oracle) = generate::<f64>(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    write_csv(&ds, output)?;
    println!(
        "wrote {} rows ({} exogenous column{}) to {}",
        ds.len(),
        ds.exo_names.len(),
        if ds.exo_names.len() == 1 { "" } else { "s" },
        output.display()
    );
    Ok(())
}
