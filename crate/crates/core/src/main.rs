//! Command-line runner: benchmark presets, config files, history output,
//! field exports, and the small-mesh gradient self-check.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pneumech::config::{parse_config, preset, ExportFormat, RunSpec};
use pneumech::error::Error;
use pneumech::export::{
    mirror_full_design, write_csv, write_pgm, write_vtk, FieldSnapshot, MirrorSpec,
};
use pneumech::fields::Realization;
use pneumech::optimizer::{run_with_observer, IterationRecord};
use pneumech::sensitivity::{finite_difference_check, random_interior_field, validation_model};

#[derive(Parser, Debug)]
#[command(
    name = "pneumech",
    about = "Topology optimization of pneumatically actuated multi-material compliant mechanisms"
)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Benchmark preset (gripper-2mat, contractor-2mat, gripper-3mat,
    /// contractor-3mat, gripper-case-i/ii/iii). Overrides the config file.
    #[arg(long)]
    benchmark: Option<String>,

    /// Maximum number of optimizer iterations.
    #[arg(long)]
    iterations: Option<usize>,

    /// Grid resolution overrides.
    #[arg(long)]
    nelx: Option<usize>,
    #[arg(long)]
    nely: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Comma-separated export formats: vtk, csv, pgm.
    #[arg(long, value_delimiter = ',')]
    export: Option<Vec<String>>,

    /// Seed for the optional random perturbation of the initial design.
    #[arg(long)]
    seed: Option<u64>,

    /// Run the small-mesh adjoint-vs-finite-difference gradient validation
    /// and exit (0 when the worst relative error is at most 1e-3).
    #[arg(long)]
    fd_check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => code,
        Err(Error::Config(msg)) | Err(Error::Validation(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(args: Args) -> pneumech::Result<ExitCode> {
    if args.fd_check {
        return fd_check();
    }

    let mut spec: RunSpec = match (&args.config, &args.benchmark) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(name)) => RunSpec {
            run: preset(name)?,
            out_dir: PathBuf::from("out"),
            export: vec![ExportFormat::VtkLegacyAscii, ExportFormat::Csv],
        },
        (None, None) => {
            return Err(Error::Config(
                "nothing to do: pass --config <file> or --benchmark <preset>".into(),
            ))
        }
    };
    if let (Some(name), Some(_)) = (&args.benchmark, &args.config) {
        // --benchmark beats the file's choice of preset
        let base = preset(name)?;
        spec.run.benchmark = base.benchmark;
        spec.run.young_moduli = base.young_moduli;
        spec.run.volume_fractions = base.volume_fractions;
        spec.run.delta_eta = base.delta_eta;
        spec.run.nelx = base.nelx;
        spec.run.nely = base.nely;
    }
    if let Some(v) = args.iterations {
        spec.run.max_iterations = v;
    }
    if let Some(v) = args.nelx {
        spec.run.nelx = v;
    }
    if let Some(v) = args.nely {
        spec.run.nely = v;
    }
    if let Some(v) = args.seed {
        spec.run.seed = v;
    }
    if let Some(v) = &args.out {
        spec.out_dir = v.clone();
    }
    if let Some(list) = &args.export {
        spec.export = list
            .iter()
            .map(|s| s.parse())
            .collect::<pneumech::Result<Vec<_>>>()?;
    }
    spec.run.validate()?;

    std::fs::create_dir_all(&spec.out_dir)?;
    let history_path = spec.out_dir.join("history.csv");
    let mut history = File::create(&history_path)?;
    let q = pneumech::optimizer::volume_limits(&spec.run.volume_fractions).len();
    let mut header = String::from("iteration,f0,u_out_eroded,u_out_blueprint,se_eroded,se_star");
    for i in 1..=q {
        header.push_str(&format!(",vol_{i}"));
    }
    header.push_str(",g2,beta,max_change\n");
    history.write_all(header.as_bytes())?;

    let started = std::time::Instant::now();
    let last_design: std::cell::RefCell<Option<pneumech::fields::DesignField>> =
        std::cell::RefCell::new(None);
    let outcome = run_with_observer(&spec.run, |rec: &IterationRecord, design| {
        *last_design.borrow_mut() = Some(design.clone());
        let mut line = format!(
            "{},{},{},{},{},{}",
            rec.iteration,
            rec.f0,
            rec.u_out_eroded,
            rec.u_out_blueprint,
            rec.strain_energy_eroded,
            rec.se_star
        );
        for v in &rec.volumes {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{},{},{}\n", rec.g2, rec.beta, rec.max_change));
        // flush every iteration so an aborted run keeps its history
        let _ = history.write_all(line.as_bytes());
        let _ = history.flush();
        if rec.iteration % 10 == 0 || rec.iteration == 1 {
            eprintln!(
                "it {:4}  f0 {:+.4e}  u_e {:+.4e}  u_b {:+.4e}  g2 {:.4}  beta {:>3}  change {:.4}",
                rec.iteration,
                rec.f0,
                rec.u_out_eroded,
                rec.u_out_blueprint,
                rec.g2,
                rec.beta,
                rec.max_change
            );
        }
    });
    let result = match outcome {
        Ok(result) => result,
        Err(err) => {
            // leave a checkpoint of the last analyzed design next to the
            // (already flushed) history before giving up
            if let Some(design) = last_design.borrow().as_ref() {
                let path = spec.out_dir.join("checkpoint_design.csv");
                let mut text = String::from("element");
                for k in 0..design.n_materials() {
                    text.push_str(&format!(",rho_{}", k + 1));
                }
                text.push('\n');
                for e in 0..design.n_elements() {
                    text.push_str(&format!("{e}"));
                    for k in 0..design.n_materials() {
                        text.push_str(&format!(",{}", design.get(e, k)));
                    }
                    text.push('\n');
                }
                let _ = std::fs::write(&path, text);
                eprintln!("checkpoint design written to {}", path.display());
            }
            return Err(err);
        }
    };
    if result.se_star_fallback {
        eprintln!("warning: first-iteration strain energy below 0.5, SE* fell back to 0.5");
    }

    let model = spec.run.build_model()?;
    let snapshot = FieldSnapshot::from_result(&model, &result);
    let full = mirror_full_design(&snapshot, MirrorSpec::for_benchmark(spec.run.benchmark))?;
    for format in &spec.export {
        match format {
            ExportFormat::VtkLegacyAscii => {
                write_vtk(&snapshot, &spec.out_dir.join("design.vtk"))?;
                write_vtk(&full, &spec.out_dir.join("design_full.vtk"))?;
            }
            ExportFormat::Csv => {
                write_csv(&snapshot, &spec.out_dir.join("blueprint.csv"))?;
            }
            ExportFormat::Pgm => {
                for k in 0..snapshot.m {
                    write_pgm(&snapshot, k, &spec.out_dir.join(format!("rho_{}.pgm", k + 1)))?;
                }
            }
        }
    }

    let last = result.final_record();
    println!(
        "finished {} iterations in {:.1} s (reporting iterate {}): u_out eroded {:.4} mm, blueprint {:.4} mm, g2 {:.4}",
        result.history.len(),
        started.elapsed().as_secs_f64(),
        result.reported_iteration,
        1e3 * last.u_out_eroded,
        1e3 * last.u_out_blueprint,
        last.g2
    );
    println!("history: {}", history_path.display());
    Ok(ExitCode::SUCCESS)
}

fn fd_check() -> pneumech::Result<ExitCode> {
    let mut worst = 0.0f64;
    for m in 1..=3usize {
        let model = validation_model(6, 4, m)?;
        let raw = random_interior_field(model.n_elements(), m, 1234 + m as u64);
        for realization in [Realization::Eroded, Realization::Blueprint] {
            let report = finite_difference_check(&model, &raw, 2.0, realization, 1e-6)?;
            println!(
                "m={m} {realization:?}: u_out rel {:.3e}, g2 rel {:.3e} ({} components)",
                report.max_rel_u_out, report.max_rel_g2, report.checked_components
            );
            worst = worst.max(report.max_rel());
        }
    }
    println!("max relative gradient error: {worst:.3e}");
    if worst <= 1e-3 {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::Numerical(format!(
            "gradient validation failed: {worst:.3e} > 1e-3"
        )))
    }
}
