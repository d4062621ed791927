//! The robust optimization loop.
//!
//! Each iteration analyzes the eroded and blueprint realizations, forms the
//! min-max objective `f0 = max(u_out_eroded, u_out_blueprint)` through the
//! MMA bound variable (the two output constraints carry `a_i = 1`), applies
//! the volume constraints to the blueprint design and the strain-energy
//! constraint to the eroded design, and takes one MMA step. The strain
//! energy cap `SE*` is frozen after the first iteration.
//!
//! Output constraints are scaled by a fixed factor and shifted by a constant
//! before entering MMA: the scale balances mm-scale displacements against
//! unit-scale volume constraints, and the shift keeps the subproblem's
//! nonnegative bound variable in play for negative (favourable) outputs.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fields::{DesignField, Realization};
use crate::material::MaterialSet;
use crate::mesh::{build_benchmark, BenchmarkName};
use crate::mma::{Linearization, Mma, MmaOptions};
use crate::pressure::FlowParams;
use crate::sensitivity::{AnalysisModel, RealizationAnalysis};

/// Fixed scale applied to the output-displacement constraints.
pub const OUTPUT_SCALE: f64 = 10.0;
/// Constant shift keeping the scaled output constraints positive.
pub const OUTPUT_SHIFT: f64 = 1.0;
/// Slack penalty handed to MMA for every constraint. Large enough that the
/// subproblem never trades constraint feasibility for objective progress:
/// near-binary projections leave some variables with tiny constraint
/// leverage, and duals can climb to the penalty level before the remaining
/// variables restore a violated strain-energy cap.
const MMA_C: f64 = 1e7;
/// Constraint level that switches the outer step into recovery mode.
const CRISIS_LEVEL: f64 = 1.05;
/// Move limit while recovering from a badly violated constraint. Sharp
/// projections make the eroded strain energy jump far beyond what its
/// linearization predicts when full steps flip hinge elements; small
/// recovery steps let the (then very steep) constraint gradient pull the
/// design back before normal progress resumes.
const CRISIS_MOVE: f64 = 0.01;
/// Convergence threshold on the largest design change.
const CHANGE_TOL: f64 = 1e-4;

/// A complete run description. `preset` constructors for the benchmark
/// configurations live in the `config` module.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub benchmark: BenchmarkName,
    pub nelx: usize,
    pub nely: usize,
    /// Candidate Young's moduli, ascending.
    pub young_moduli: Vec<f64>,
    /// Volume fraction per candidate material.
    pub volume_fractions: Vec<f64>,
    /// Erosion threshold offset.
    pub delta_eta: f64,
    pub max_iterations: usize,
    pub move_limit: f64,
    pub penal: f64,
    pub poisson: f64,
    /// Seed for the optional random perturbation of the initial design.
    pub seed: u64,
    /// Half-width of the uniform perturbation added to the initial design.
    pub perturbation: f64,
}

impl RunConfig {
    pub fn n_materials(&self) -> usize {
        self.young_moduli.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.young_moduli.is_empty() {
            return Err(Error::Validation("no candidate materials given".into()));
        }
        if self.young_moduli.len() != self.volume_fractions.len() {
            return Err(Error::Validation(format!(
                "{} materials but {} volume fractions",
                self.young_moduli.len(),
                self.volume_fractions.len()
            )));
        }
        let total: f64 = self.volume_fractions.iter().sum();
        if total > 1.0 {
            return Err(Error::Validation(format!(
                "volume fractions sum to {total}, must be <= 1"
            )));
        }
        if self.volume_fractions.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Validation("volume fractions must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.delta_eta) {
            return Err(Error::Validation("delta_eta must be in [0, 0.5]".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("need at least one iteration".into()));
        }
        Ok(())
    }

    /// Builds the analysis model this configuration describes.
    pub fn build_model(&self) -> Result<AnalysisModel> {
        self.validate()?;
        let benchmark = build_benchmark(self.benchmark, self.nelx, self.nely)?;
        let mesh = &benchmark.mesh;
        let r_fill = 8.4 * mesh.dx().min(mesh.dy());
        let flow = FlowParams::for_mesh(mesh);
        let materials = MaterialSet::new(
            self.young_moduli.clone(),
            self.penal,
            self.poisson,
            mesh.thickness,
        )?;
        Ok(AnalysisModel::new(
            benchmark,
            materials,
            flow,
            r_fill,
            self.delta_eta,
        ))
    }
}

/// Strain-energy cap from the first eroded analysis: the energy is rounded
/// down to the nearest half-integer. Returns the cap and whether the
/// degenerate small-energy fallback fired.
pub fn compute_se_star(se_eroded: f64) -> (f64, bool) {
    let floor = se_eroded.floor();
    let star = if se_eroded - floor <= 0.5 {
        floor
    } else {
        floor + 0.5
    };
    if star <= 0.0 {
        (0.5, true)
    } else {
        (star, false)
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Worst-case output displacement, `max` over the two realizations.
    pub f0: f64,
    pub u_out_eroded: f64,
    pub u_out_blueprint: f64,
    pub strain_energy_eroded: f64,
    pub se_star: f64,
    /// Normalized blueprint volume per constraint (feasible at <= 1).
    pub volumes: Vec<f64>,
    /// Eroded strain energy over its cap (feasible at <= 1).
    pub g2: f64,
    pub beta: f64,
    /// Largest design-variable change of the step taken this iteration.
    pub max_change: f64,
    /// Wall-clock seconds spent on this iteration (not persisted in the
    /// deterministic history file).
    pub wall_time: f64,
}

/// Feasibility slack accepted at report time.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Result of a completed run. The reported design is the last iterate whose
/// volume and strain-energy constraints hold within [`FEASIBILITY_TOL`]; the
/// history always covers every iterate.
pub struct OptimizationResult {
    pub history: Vec<IterationRecord>,
    /// 1-based iteration index of the reported design.
    pub reported_iteration: usize,
    pub raw: DesignField,
    pub filtered: DesignField,
    pub eroded: RealizationAnalysis,
    pub blueprint: RealizationAnalysis,
    pub se_star: f64,
    pub se_star_fallback: bool,
}

impl OptimizationResult {
    /// History record of the reported design.
    pub fn final_record(&self) -> &IterationRecord {
        &self.history[self.reported_iteration - 1]
    }
}

fn is_feasible(volumes: &[f64], g2: f64) -> bool {
    volumes.iter().all(|&v| v <= 1.0 + FEASIBILITY_TOL) && g2 <= 1.0 + FEASIBILITY_TOL
}

/// Per-constraint volume limits: the topology column is bounded by the sum
/// of all fractions, each material column by its own fraction.
pub fn volume_limits(volume_fractions: &[f64]) -> Vec<f64> {
    let mut limits = Vec::with_capacity(volume_fractions.len());
    limits.push(volume_fractions.iter().sum());
    for &v in &volume_fractions[1..] {
        limits.push(v);
    }
    // for a single material the topology bound is the only constraint
    if volume_fractions.len() == 1 {
        limits.truncate(1);
    }
    limits
}

/// Initial design: every column uniform at its volume limit, with an
/// optional seeded perturbation, passive pins applied last.
pub fn initial_design(model: &AnalysisModel, config: &RunConfig) -> DesignField {
    use rand::{Rng, SeedableRng};
    let nel = model.n_elements();
    let m = config.n_materials();
    let mut raw = DesignField::constant(nel, m, 0.0);
    let total: f64 = config.volume_fractions.iter().sum();
    for e in 0..nel {
        raw.set(e, 0, total);
        for k in 1..m {
            raw.set(e, k, config.volume_fractions[k]);
        }
    }
    if config.perturbation > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let p = config.perturbation;
        for v in raw.as_mut_slice() {
            *v = (*v + rng.gen_range(-p..p)).clamp(0.0, 1.0);
        }
    }
    raw.enforce_passive(&model.passive);
    raw
}

/// Runs the full robust optimization. `observer` is called with each history
/// record and the design it was evaluated at (history sinks, progress
/// logging, trajectory comparisons).
pub fn run_with_observer(
    config: &RunConfig,
    mut observer: impl FnMut(&IterationRecord, &DesignField),
) -> Result<OptimizationResult> {
    let model = config.build_model()?;
    let m = config.n_materials();
    let nel = model.n_elements();
    let limits = volume_limits(&config.volume_fractions);
    let q = limits.len();
    let n_constraints = 2 + q + 1;

    // only design-element variables enter MMA; passive pins stay put
    let active: Vec<usize> = (0..m)
        .flat_map(|k| {
            let passive = &model.passive;
            (0..nel)
                .filter(move |&e| passive.is_design(e))
                .map(move |e| k * nel + e)
        })
        .collect();
    let n_active = active.len();
    let gather = |field: &DesignField, out: &mut Vec<f64>| {
        out.clear();
        out.extend(active.iter().map(|&i| field.as_slice()[i]));
    };

    let mut mma = Mma::new(
        n_active,
        n_constraints,
        MmaOptions {
            move_limit: config.move_limit,
            ..MmaOptions::default()
        },
    );
    let xmin = vec![0.0; n_active];
    let xmax = vec![1.0; n_active];
    let f0_grad = vec![0.0; n_active];
    let mut a = vec![0.0; n_constraints];
    a[0] = 1.0;
    a[1] = 1.0;
    let c = vec![MMA_C; n_constraints];
    let d = vec![1.0; n_constraints];

    let mut raw = initial_design(&model, config);
    let mut se_star = 0.0;
    let mut se_star_fallback = false;
    let mut history: Vec<IterationRecord> = Vec::with_capacity(config.max_iterations);
    let mut x = Vec::with_capacity(n_active);
    let mut fval = vec![0.0; n_constraints];
    let mut fgrad: Vec<Vec<f64>> = vec![Vec::with_capacity(n_active); n_constraints];
    let mut last_feasible: Option<(usize, DesignField)> = None;

    for it in 1..=config.max_iterations {
        let started = Instant::now();
        let beta = model.projection.beta_at(it);
        let filtered = model.filtered(&raw)?;
        let eroded = model.analyze(&filtered, beta, Realization::Eroded)?;
        let blueprint = model.analyze(&filtered, beta, Realization::Blueprint)?;

        if it == 1 {
            let (star, warned) = compute_se_star(eroded.structure.strain_energy);
            se_star = star;
            se_star_fallback = warned;
        }

        fval[0] = OUTPUT_SCALE * eroded.structure.u_out + OUTPUT_SHIFT;
        fval[1] = OUTPUT_SCALE * blueprint.structure.u_out + OUTPUT_SHIFT;
        let g_er = model.output_gradient(&eroded)?;
        let g_bl = model.output_gradient(&blueprint)?;
        gather(&g_er, &mut fgrad[0]);
        gather(&g_bl, &mut fgrad[1]);
        for v in fgrad[0].iter_mut() {
            *v *= OUTPUT_SCALE;
        }
        for v in fgrad[1].iter_mut() {
            *v *= OUTPUT_SCALE;
        }

        let mut volumes = Vec::with_capacity(q);
        for (ci, &limit) in limits.iter().enumerate() {
            let value = model.volume_value(&blueprint.projected, ci, limit);
            volumes.push(value);
            fval[2 + ci] = value - 1.0;
            let g = model.volume_gradient(&blueprint, ci, limit)?;
            gather(&g, &mut fgrad[2 + ci]);
        }

        let g2 = eroded.structure.strain_energy / se_star;
        fval[2 + q] = g2 - 1.0;
        let g_se = model.strain_energy_gradient(&eroded, se_star)?;
        gather(&g_se, &mut fgrad[2 + q]);

        let worst_constraint = volumes
            .iter()
            .copied()
            .fold(g2, f64::max);
        mma.options.move_limit = if worst_constraint > CRISIS_LEVEL {
            CRISIS_MOVE
        } else {
            config.move_limit
        };

        gather(&raw, &mut x);
        let step = mma.step(&Linearization {
            x: &x,
            xmin: &xmin,
            xmax: &xmax,
            f0_grad: &f0_grad,
            f: &fval,
            f_grad: &fgrad,
            a0: 1.0,
            a: &a,
            c: &c,
            d: &d,
        })?;

        let mut max_change = 0.0f64;
        for (idx, &flat) in active.iter().enumerate() {
            max_change = max_change.max((step.x[idx] - raw.as_slice()[flat]).abs());
        }

        if is_feasible(&volumes, g2) {
            last_feasible = Some((it, raw.clone()));
        }

        let record = IterationRecord {
            iteration: it,
            f0: eroded.structure.u_out.max(blueprint.structure.u_out),
            u_out_eroded: eroded.structure.u_out,
            u_out_blueprint: blueprint.structure.u_out,
            strain_energy_eroded: eroded.structure.strain_energy,
            se_star,
            volumes,
            g2,
            beta,
            max_change,
            wall_time: started.elapsed().as_secs_f64(),
        };
        observer(&record, &raw);
        history.push(record);

        let converged = max_change < CHANGE_TOL && beta >= model.projection.beta_max;
        if it == config.max_iterations || converged {
            // report the last feasible iterate when the final one overshoots
            let current_feasible = matches!(&last_feasible, Some((fit, _)) if *fit == it);
            if let (false, Some((fit, fraw))) = (current_feasible, last_feasible) {
                let filtered = model.filtered(&fraw)?;
                let fbeta = model.projection.beta_at(fit);
                let eroded = model.analyze(&filtered, fbeta, Realization::Eroded)?;
                let blueprint = model.analyze(&filtered, fbeta, Realization::Blueprint)?;
                return Ok(OptimizationResult {
                    history,
                    reported_iteration: fit,
                    raw: fraw,
                    filtered,
                    eroded,
                    blueprint,
                    se_star,
                    se_star_fallback,
                });
            }
            return Ok(OptimizationResult {
                history,
                reported_iteration: it,
                raw,
                filtered,
                eroded,
                blueprint,
                se_star,
                se_star_fallback,
            });
        }
        for (idx, &flat) in active.iter().enumerate() {
            raw.as_mut_slice()[flat] = step.x[idx];
        }
    }
    unreachable!("loop always returns at the final iteration")
}

pub fn run(config: &RunConfig) -> Result<OptimizationResult> {
    run_with_observer(config, |_, _| {})
}
