//! Run configuration: named benchmark presets with the published parameter
//! sets, and a TOML file format that overrides them field by field.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mesh::{default_resolution, BenchmarkName};
use crate::optimizer::RunConfig;

/// Export formats the CLI can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    VtkLegacyAscii,
    Csv,
    Pgm,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vtk" => Ok(Self::VtkLegacyAscii),
            "csv" => Ok(Self::Csv),
            "pgm" => Ok(Self::Pgm),
            other => Err(Error::Config(format!(
                "unknown export format '{other}' (expected vtk, csv, or pgm)"
            ))),
        }
    }
}

/// A run plus its output destinations.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub run: RunConfig,
    pub out_dir: PathBuf,
    pub export: Vec<ExportFormat>,
}

/// Named presets covering the benchmark studies: two- and three-material
/// gripper and contractor runs, and the single- vs multi-material comparison
/// cases (equal total volume 0.30).
pub fn preset(name: &str) -> Result<RunConfig> {
    let (benchmark, moduli, fractions, delta_eta): (BenchmarkName, Vec<f64>, Vec<f64>, f64) =
        match name {
            "gripper-2mat" => (
                BenchmarkName::Gripper,
                vec![1e7, 1e8],
                vec![0.2, 0.1],
                0.05,
            ),
            "contractor-2mat" => (
                BenchmarkName::Contractor,
                vec![1e7, 1e8],
                vec![0.1, 0.1],
                0.15,
            ),
            "gripper-3mat" => (
                BenchmarkName::Gripper,
                vec![1e7, 5e7, 1e8],
                vec![0.1, 0.1, 0.05],
                0.01,
            ),
            "contractor-3mat" => (
                BenchmarkName::Contractor,
                vec![1e7, 5e7, 1e8],
                vec![0.1, 0.1, 0.05],
                0.01,
            ),
            "gripper-case-i" => (BenchmarkName::ComparisonCase, vec![1e7], vec![0.30], 0.05),
            "gripper-case-ii" => (BenchmarkName::ComparisonCase, vec![1e8], vec![0.30], 0.05),
            "gripper-case-iii" => (
                BenchmarkName::ComparisonCase,
                vec![1e7, 1e8],
                vec![0.15, 0.15],
                0.05,
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown benchmark preset '{other}'; available: gripper-2mat, \
                     contractor-2mat, gripper-3mat, contractor-3mat, gripper-case-i, \
                     gripper-case-ii, gripper-case-iii"
                )))
            }
        };
    let (nelx, nely) = default_resolution(benchmark);
    Ok(RunConfig {
        benchmark,
        nelx,
        nely,
        young_moduli: moduli,
        volume_fractions: fractions,
        delta_eta,
        max_iterations: 400,
        move_limit: 0.1,
        penal: 3.0,
        poisson: 0.4,
        seed: 0,
        perturbation: 0.0,
    })
}

/// The on-disk configuration schema. Every field is optional; omitted fields
/// fall back to the preset named by `benchmark` (default `gripper-2mat`).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    benchmark: Option<String>,
    nelx: Option<usize>,
    nely: Option<usize>,
    young_moduli: Option<Vec<f64>>,
    volume_fractions: Option<Vec<f64>>,
    delta_eta: Option<f64>,
    iterations: Option<usize>,
    move_limit: Option<f64>,
    penal: Option<f64>,
    poisson: Option<f64>,
    seed: Option<u64>,
    perturbation: Option<f64>,
    out_dir: Option<PathBuf>,
    export: Option<Vec<String>>,
}

fn apply_file(mut run: RunConfig, file: &FileConfig) -> RunConfig {
    if let Some(v) = file.nelx {
        run.nelx = v;
    }
    if let Some(v) = file.nely {
        run.nely = v;
    }
    if let Some(v) = &file.young_moduli {
        run.young_moduli = v.clone();
    }
    if let Some(v) = &file.volume_fractions {
        run.volume_fractions = v.clone();
    }
    if let Some(v) = file.delta_eta {
        run.delta_eta = v;
    }
    if let Some(v) = file.iterations {
        run.max_iterations = v;
    }
    if let Some(v) = file.move_limit {
        run.move_limit = v;
    }
    if let Some(v) = file.penal {
        run.penal = v;
    }
    if let Some(v) = file.poisson {
        run.poisson = v;
    }
    if let Some(v) = file.seed {
        run.seed = v;
    }
    if let Some(v) = file.perturbation {
        run.perturbation = v;
    }
    run
}

/// Reads and validates a config file. The `benchmark` key selects the preset
/// supplying defaults for everything the file does not mention.
pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config '{}': {e}", path.display()))
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunSpec> {
    let file: FileConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    let base = preset(file.benchmark.as_deref().unwrap_or("gripper-2mat"))?;
    let run = apply_file(base, &file);
    run.validate()?;
    let export = match &file.export {
        Some(list) => list
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<ExportFormat>>>()?,
        None => vec![ExportFormat::VtkLegacyAscii, ExportFormat::Csv],
    };
    Ok(RunSpec {
        run,
        out_dir: file.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        export,
    })
}
