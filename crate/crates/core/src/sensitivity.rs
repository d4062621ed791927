//! The full analysis pipeline for one design realization and the
//! adjoint-variable gradients of the output displacement, the strain-energy
//! constraint, and the volume constraints.
//!
//! Pipeline per realization: raw variables -> density filter (with passive
//! overrides) -> Heaviside projection -> Darcy pressure solve -> consistent
//! loads -> plane-stress solve. Because the load follows the design, the
//! objective gradient carries two terms,
//!
//! ```text
//! d u_out / d rho_bar = lam2^T (dK/drho_bar) u + lam1^T (dA/drho_bar) p,
//! lam2 = -K^-1 l,   lam1 = A^-1 T^T K^-1 l,
//! ```
//!
//! where the second (load) term exists only for the topology column. Both
//! adjoint solves reuse the forward Cholesky factors since `K` and `A` are
//! symmetric. Gradients with respect to the raw variables follow from the
//! chain rule through the projection and the filter transpose.

use crate::elasticity::{kernel_matvec, quadratic_form, ElasticModel, StiffnessSystem};
use crate::error::{Error, Result};
use crate::fields::{
    apply_filter, chain_rule, project, projection_derivative, DesignField, FilterOperator,
    ProjectionParams, Realization,
};
use crate::material::{interpolate, interpolate_gradient, MaterialSet};
use crate::mesh::{BenchmarkModel, BoundaryConditions, PassiveMask, StructuredMesh};
use crate::pressure::{FlowParams, PressureModel, PressureState, Transformation};

/// Everything design-independent: mesh, boundary conditions, materials,
/// filter, and the precomputed element kernels. Built once per run and
/// shared by both realizations.
#[derive(Debug, Clone)]
pub struct AnalysisModel {
    pub mesh: StructuredMesh,
    pub bcs: BoundaryConditions,
    pub passive: PassiveMask,
    pub materials: MaterialSet,
    pub filter: FilterOperator,
    pub projection: ProjectionParams,
    pub pressure_model: PressureModel,
    pub transformation: Transformation,
    pub elastic_model: ElasticModel,
}

impl AnalysisModel {
    pub fn new(
        benchmark: BenchmarkModel,
        materials: MaterialSet,
        flow: FlowParams,
        r_fill: f64,
        delta_eta: f64,
    ) -> Self {
        let BenchmarkModel { mesh, bcs, passive } = benchmark;
        let filter = FilterOperator::build(&mesh, r_fill);
        let pressure_model = PressureModel::new(&mesh, flow);
        let transformation = Transformation::build(&mesh);
        let elastic_model = ElasticModel::new(&mesh, materials.poisson);
        Self {
            mesh,
            bcs,
            passive,
            materials,
            filter,
            projection: ProjectionParams::new(delta_eta),
            pressure_model,
            transformation,
            elastic_model,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn n_materials(&self) -> usize {
        self.materials.n_materials()
    }

    /// Filters the raw field and pins the filtered values of non-design
    /// elements, so passive regions stay exactly solid or void after
    /// projection.
    pub fn filtered(&self, raw: &DesignField) -> Result<DesignField> {
        let mut filtered = apply_filter(&self.filter, raw)?;
        filtered.enforce_passive(&self.passive);
        Ok(filtered)
    }

    /// Runs projection, material interpolation, pressure, and elasticity for
    /// one realization of the filtered field.
    pub fn analyze(
        &self,
        filtered: &DesignField,
        beta: f64,
        realization: Realization,
    ) -> Result<RealizationAnalysis> {
        let params = ProjectionParams {
            beta,
            ..self.projection.clone()
        };
        let projected = project(filtered, &params, realization);
        let dproj = projection_derivative(filtered, &params, realization);

        let nel = self.n_elements();
        let m = self.n_materials();
        let mut moduli = vec![0.0; nel];
        let mut dmoduli = DesignField::constant(nel, m, 0.0);
        let mut row = vec![0.0; m];
        for e in 0..nel {
            for (k, r) in row.iter_mut().enumerate() {
                *r = projected.get(e, k);
            }
            moduli[e] = interpolate(&row, &self.materials)?;
            let grad = interpolate_gradient(&row, &self.materials)?;
            for (k, g) in grad.iter().enumerate() {
                dmoduli.set(e, k, *g);
            }
        }

        let pressure = self.pressure_model.solve(
            &self.mesh,
            &self.bcs,
            &self.transformation,
            projected.column(0),
        )?;
        let structure = self
            .elastic_model
            .solve(&self.mesh, &moduli, &self.bcs, &pressure.load)?;

        Ok(RealizationAnalysis {
            realization,
            beta,
            projected,
            dproj,
            moduli,
            dmoduli,
            pressure,
            structure,
        })
    }

    /// Output selector vector `l`.
    fn selector(&self) -> Vec<f64> {
        let mut l = vec![0.0; self.mesh.n_udofs()];
        l[self.bcs.output_udof] = self.bcs.output_sign;
        l
    }

    fn zero_pressure_dirichlet(&self, v: &mut [f64]) {
        for &(node, _) in &self.bcs.pressure_dirichlet {
            v[node] = 0.0;
        }
    }

    /// Gradient of `u_out` with respect to the projected variables, split
    /// into the stiffness term and the design-dependent load term. The load
    /// term touches the topology column only.
    pub fn output_gradient_wrt_projected(
        &self,
        an: &RealizationAnalysis,
    ) -> Result<(DesignField, DesignField)> {
        // w = K^-1 l, so the structural adjoint is -w
        let w = an.structure.factor.solve(&self.selector());

        let mut flow_rhs = self.transformation.apply_transpose(&w);
        self.zero_pressure_dirichlet(&mut flow_rhs);
        let lam1 = an.pressure.factor.solve(&flow_rhs);

        let nel = self.n_elements();
        let m = self.n_materials();
        let mut structural = DesignField::constant(nel, m, 0.0);
        let mut load = DesignField::constant(nel, m, 0.0);
        for e in 0..nel {
            let dofs = self.mesh.element_udofs(e);
            let mut ue = [0.0; 8];
            let mut we = [0.0; 8];
            for (i, &d) in dofs.iter().enumerate() {
                ue[i] = an.structure.u[d];
                we[i] = w[d];
            }
            let k0u = kernel_matvec(&self.elastic_model.k0, &ue);
            let mut wk0u = 0.0;
            for i in 0..8 {
                wk0u += we[i] * k0u[i];
            }
            for k in 0..m {
                structural.set(e, k, -an.dmoduli.get(e, k) * wk0u);
            }

            load.set(e, 0, self.load_sensitivity_term(an, &lam1, e));
        }
        Ok((structural, load))
    }

    /// `lam^T (dA_e/drho_1) p_e` for one element.
    fn load_sensitivity_term(&self, an: &RealizationAnalysis, lam: &[f64], e: usize) -> f64 {
        let da = self
            .pressure_model
            .element_flow_derivative(an.projected.get(e, 0));
        let nodes = self.mesh.element_nodes(e);
        let mut acc = 0.0;
        for a in 0..4 {
            let la = lam[nodes[a]];
            if la == 0.0 {
                continue;
            }
            let mut rowv = 0.0;
            for b in 0..4 {
                rowv += da[a][b] * an.pressure.pressure[nodes[b]];
            }
            acc += la * rowv;
        }
        acc
    }

    /// Full objective gradient with respect to the raw design variables.
    pub fn output_gradient(&self, an: &RealizationAnalysis) -> Result<DesignField> {
        let (mut total, load) = self.output_gradient_wrt_projected(an)?;
        for (t, l) in total.as_mut_slice().iter_mut().zip(load.as_slice().iter()) {
            *t += l;
        }
        self.pullback(total, an)
    }

    /// Gradient of `g2 = SE / SE*` for the eroded realization. The stiffness
    /// term is self-adjoint; one flow adjoint solve with right-hand side
    /// `T^T u` covers the load term.
    pub fn strain_energy_gradient(
        &self,
        an: &RealizationAnalysis,
        se_star: f64,
    ) -> Result<DesignField> {
        if se_star == 0.0 {
            return Err(Error::Config("SE* must be nonzero".into()));
        }
        let mut flow_rhs = self.transformation.apply_transpose(&an.structure.u);
        self.zero_pressure_dirichlet(&mut flow_rhs);
        let mu = an.pressure.factor.solve(&flow_rhs);

        let nel = self.n_elements();
        let m = self.n_materials();
        let mut grad = DesignField::constant(nel, m, 0.0);
        for e in 0..nel {
            let dofs = self.mesh.element_udofs(e);
            let mut ue = [0.0; 8];
            for (i, &d) in dofs.iter().enumerate() {
                ue[i] = an.structure.u[d];
            }
            let uku = quadratic_form(&self.elastic_model.k0, &ue);
            for k in 0..m {
                grad.set(e, k, -0.5 * an.dmoduli.get(e, k) * uku / se_star);
            }
            let load = self.load_sensitivity_term(an, &mu, e);
            grad.set(e, 0, grad.get(e, 0) + load / se_star);
        }
        self.pullback(grad, an)
    }

    /// Normalized volume of column `k` of a projected field:
    /// `sum(v_i rho_ik) / (V limit)`, so the constraint reads `value <= 1`.
    pub fn volume_value(&self, projected: &DesignField, k: usize, limit: f64) -> f64 {
        let total: f64 = projected.column(k).iter().sum();
        total / (self.n_elements() as f64 * limit)
    }

    /// Gradient of [`Self::volume_value`] with respect to the raw variables.
    /// Only column `k` is touched.
    pub fn volume_gradient(
        &self,
        an: &RealizationAnalysis,
        k: usize,
        limit: f64,
    ) -> Result<DesignField> {
        let nel = self.n_elements();
        let m = self.n_materials();
        let mut grad = DesignField::constant(nel, m, 0.0);
        let g = 1.0 / (nel as f64 * limit);
        for e in 0..nel {
            grad.set(e, k, g);
        }
        self.pullback(grad, an)
    }

    /// Chain rule back to the raw variables with passive masking: passive
    /// elements neither transmit sensitivity (their filtered value is
    /// pinned) nor report any (their raw variables are pinned).
    fn pullback(
        &self,
        mut wrt_projected: DesignField,
        an: &RealizationAnalysis,
    ) -> Result<DesignField> {
        let m = wrt_projected.n_materials();
        for k in 0..m {
            let col = wrt_projected.column_mut(k);
            for (e, v) in col.iter_mut().enumerate() {
                if !self.passive.is_design(e) {
                    *v = 0.0;
                }
            }
        }
        let mut raw = chain_rule(&wrt_projected, &an.dproj, &self.filter)?;
        for k in 0..m {
            let col = raw.column_mut(k);
            for (e, v) in col.iter_mut().enumerate() {
                if !self.passive.is_design(e) {
                    *v = 0.0;
                }
            }
        }
        Ok(raw)
    }
}

/// One realization's intermediate and final analysis state.
#[derive(Debug, Clone)]
pub struct RealizationAnalysis {
    pub realization: Realization,
    pub beta: f64,
    /// Projected (physical) variables.
    pub projected: DesignField,
    /// Entrywise projection derivative at the filtered variables.
    pub dproj: DesignField,
    /// Interpolated Young's modulus per element.
    pub moduli: Vec<f64>,
    /// Partials of the modulus with respect to every projected column.
    pub dmoduli: DesignField,
    pub pressure: PressureState,
    pub structure: StiffnessSystem,
}

/// Small pressurized test domain for gradient validation: left-edge inlet,
/// right-edge vent, clamped left corners, sprung output on the right edge.
pub fn validation_model(nelx: usize, nely: usize, m: usize) -> Result<AnalysisModel> {
    let mesh = crate::mesh::build_grid(nelx, nely, 0.01 * nelx as f64, 0.01 * nely as f64, 0.01)?;
    let mut dirichlet = Vec::new();
    for iy in 0..=nely {
        dirichlet.push((mesh.node_id(nelx, iy), 0.0));
    }
    for iy in 0..=nely {
        dirichlet.push((mesh.node_id(0, iy), 1e5));
    }
    let mut fixed = Vec::new();
    for &iy in &[0usize, nely] {
        let n = mesh.node_id(0, iy);
        fixed.push(2 * n);
        fixed.push(2 * n + 1);
    }
    let output_udof = 2 * mesh.node_id(nelx, nely / 2) + 1;
    let bcs = BoundaryConditions {
        fixed_udofs: fixed,
        symmetry_udofs: vec![],
        pressure_dirichlet: dirichlet,
        output_udof,
        output_sign: 1.0,
        spring_stiffness: 5e4,
    };
    let passive = PassiveMask::all_design(mesh.n_elements());
    let moduli = match m {
        1 => vec![1e7],
        2 => vec![1e7, 1e8],
        3 => vec![1e7, 5e7, 1e8],
        other => {
            return Err(Error::Config(format!(
                "validation model supports 1..=3 materials, got {other}"
            )))
        }
    };
    let materials = MaterialSet::new(moduli, 3.0, 0.4, 0.01)?;
    let flow = FlowParams::for_mesh(&mesh);
    let r_fill = 1.5 * mesh.dx();
    Ok(AnalysisModel::new(
        BenchmarkModel { mesh, bcs, passive },
        materials,
        flow,
        r_fill,
        0.05,
    ))
}

/// Worst observed relative errors of the adjoint gradients against central
/// finite differences through the complete chain.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_u_out: f64,
    pub max_rel_g2: f64,
    pub checked_components: usize,
}

impl FdReport {
    pub fn max_rel(&self) -> f64 {
        self.max_rel_u_out.max(self.max_rel_g2)
    }
}

/// Central-difference check of the full gradient chain on one design.
/// Components whose finite-difference magnitude falls below
/// `1e-8 * ||g||_inf` are skipped as noise.
pub fn finite_difference_check(
    model: &AnalysisModel,
    raw: &DesignField,
    beta: f64,
    realization: Realization,
    step: f64,
) -> Result<FdReport> {
    let se_star = 2.0;
    let filtered = model.filtered(raw)?;
    let an = model.analyze(&filtered, beta, realization)?;
    let grad_u = model.output_gradient(&an)?;
    let grad_g2 = model.strain_energy_gradient(&an, se_star)?;

    let evaluate = |field: &DesignField| -> Result<(f64, f64)> {
        let filtered = model.filtered(field)?;
        let an = model.analyze(&filtered, beta, realization)?;
        Ok((an.structure.u_out, an.structure.strain_energy / se_star))
    };

    let nel = model.n_elements();
    let m = model.n_materials();
    let gu_max = grad_u
        .as_slice()
        .iter()
        .fold(0.0f64, |mx, v| mx.max(v.abs()));
    let gg_max = grad_g2
        .as_slice()
        .iter()
        .fold(0.0f64, |mx, v| mx.max(v.abs()));

    let mut report = FdReport {
        max_rel_u_out: 0.0,
        max_rel_g2: 0.0,
        checked_components: 0,
    };
    let mut work = raw.clone();
    for k in 0..m {
        for e in 0..nel {
            let base = raw.get(e, k);
            work.set(e, k, base + step);
            let (up_u, up_g) = evaluate(&work)?;
            work.set(e, k, base - step);
            let (dn_u, dn_g) = evaluate(&work)?;
            work.set(e, k, base);

            let fd_u = (up_u - dn_u) / (2.0 * step);
            let fd_g = (up_g - dn_g) / (2.0 * step);
            report.checked_components += 1;
            if fd_u.abs() > 1e-8 * gu_max {
                let rel = (grad_u.get(e, k) - fd_u).abs() / fd_u.abs();
                report.max_rel_u_out = report.max_rel_u_out.max(rel);
            }
            if fd_g.abs() > 1e-8 * gg_max {
                let rel = (grad_g2.get(e, k) - fd_g).abs() / fd_g.abs();
                report.max_rel_g2 = report.max_rel_g2.max(rel);
            }
        }
    }
    Ok(report)
}

/// Seeded random interior design for validation runs.
pub fn random_interior_field(nel: usize, m: usize, seed: u64) -> DesignField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut field = DesignField::constant(nel, m, 0.0);
    for k in 0..m {
        for e in 0..nel {
            field.set(e, k, rng.gen_range(0.2..0.8));
        }
    }
    field
}
