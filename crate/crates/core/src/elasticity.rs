//! Plane-stress structural analysis on the regular grid.
//!
//! One unit element stiffness (Young's modulus 1) is integrated once with
//! 2x2 Gauss quadrature; every element contributes that kernel scaled by its
//! interpolated modulus. The workpiece spring adds to the output DOF
//! diagonal, supports and symmetry rollers are imposed symmetrically, and
//! the system is factored with the banded Cholesky solver. Assembly walks
//! elements in index order, so identical inputs give bit-identical matrices.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryConditions, StructuredMesh};
use crate::quad::{shape_gradients, GAUSS_POINTS};
use crate::solver::{BandedCholesky, BandedSpd};

/// Relative residual contract for displacement solves.
pub const DISPLACEMENT_RESIDUAL_TOL: f64 = 1e-10;

/// Unit-modulus plane-stress stiffness of the `dx x dy x t` element.
pub fn element_stiffness_unit(mesh: &StructuredMesh, poisson: f64) -> [[f64; 8]; 8] {
    let (dx, dy, t) = (mesh.dx(), mesh.dy(), mesh.thickness);
    let detj = 0.25 * dx * dy;
    let nu = poisson;
    let c = 1.0 / (1.0 - nu * nu);
    // plane-stress constitutive matrix for E = 1
    let d = [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * (1.0 - nu) / 2.0],
    ];
    let mut k0 = [[0.0; 8]; 8];
    for &(xi, eta) in &GAUSS_POINTS {
        let g = shape_gradients(xi, eta, dx, dy);
        let mut b = [[0.0; 8]; 3];
        for a in 0..4 {
            b[0][2 * a] = g[a].0;
            b[1][2 * a + 1] = g[a].1;
            b[2][2 * a] = g[a].1;
            b[2][2 * a + 1] = g[a].0;
        }
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        acc += b[r][i] * d[r][s] * b[s][j];
                    }
                }
                k0[i][j] += t * detj * acc;
            }
        }
    }
    k0
}

/// Shared kernel plus the Poisson ratio it was integrated with.
#[derive(Debug, Clone)]
pub struct ElasticModel {
    pub k0: [[f64; 8]; 8],
}

impl ElasticModel {
    pub fn new(mesh: &StructuredMesh, poisson: f64) -> Self {
        Self {
            k0: element_stiffness_unit(mesh, poisson),
        }
    }

    /// Global stiffness with the output spring on its diagonal and all
    /// homogeneous displacement constraints imposed. `rhs` is adjusted in
    /// place by the elimination (supports are zero-valued, so it is a no-op
    /// on the load values themselves).
    pub fn assemble(
        &self,
        mesh: &StructuredMesh,
        moduli: &[f64],
        bcs: &BoundaryConditions,
        rhs: &mut [f64],
    ) -> Result<BandedSpd> {
        if moduli.len() != mesh.n_elements() {
            return Err(Error::Contract(format!(
                "{} moduli for {} elements",
                moduli.len(),
                mesh.n_elements()
            )));
        }
        let mut k = BandedSpd::new(mesh.n_udofs(), mesh.u_bandwidth());
        for e in 0..mesh.n_elements() {
            let ee = moduli[e];
            let dofs = mesh.element_udofs(e);
            for a in 0..8 {
                for b in 0..=a {
                    k.add(dofs[a], dofs[b], ee * self.k0[a][b]);
                }
            }
        }
        k.add(bcs.output_udof, bcs.output_udof, bcs.spring_stiffness);
        let constraints: Vec<(usize, f64)> = bcs
            .homogeneous_udofs()
            .into_iter()
            .map(|d| (d, 0.0))
            .collect();
        k.impose_dirichlet(&constraints, rhs);
        Ok(k)
    }

    /// Assembles and solves `K u = F` for one realization.
    pub fn solve(
        &self,
        mesh: &StructuredMesh,
        moduli: &[f64],
        bcs: &BoundaryConditions,
        loads: &[f64],
    ) -> Result<StiffnessSystem> {
        let mut rhs = loads.to_vec();
        let k = self.assemble(mesh, moduli, bcs, &mut rhs)?;
        let factor = k
            .factor()
            .map_err(|e| Error::Model(format!("stiffness not SPD after elimination: {e}")))?;
        let u = factor
            .solve_refined(&k, &rhs, DISPLACEMENT_RESIDUAL_TOL)
            .map_err(|e| Error::Numerical(format!("displacement solve: {e}")))?;

        let u_out = bcs.output_sign * u[bcs.output_udof];
        let strain_energy = self.strain_energy(mesh, moduli, bcs, &u);
        Ok(StiffnessSystem {
            k,
            factor,
            u,
            u_out,
            strain_energy,
        })
    }

    /// `SE = 1/2 u^T K u` accumulated element by element, spring included.
    pub fn strain_energy(
        &self,
        mesh: &StructuredMesh,
        moduli: &[f64],
        bcs: &BoundaryConditions,
        u: &[f64],
    ) -> f64 {
        let mut se = 0.0;
        for e in 0..mesh.n_elements() {
            let dofs = mesh.element_udofs(e);
            let mut ue = [0.0; 8];
            for (i, &d) in dofs.iter().enumerate() {
                ue[i] = u[d];
            }
            se += 0.5 * moduli[e] * quadratic_form(&self.k0, &ue);
        }
        se + 0.5 * bcs.spring_stiffness * u[bcs.output_udof] * u[bcs.output_udof]
    }
}

/// `v^T M v` for the 8x8 element kernel.
#[inline]
pub fn quadratic_form(m: &[[f64; 8]; 8], v: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += m[i][j] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// `M v` for the 8x8 element kernel.
#[inline]
pub fn kernel_matvec(m: &[[f64; 8]; 8], v: &[f64; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for i in 0..8 {
        let mut acc = 0.0;
        for j in 0..8 {
            acc += m[i][j] * v[j];
        }
        out[i] = acc;
    }
    out
}

/// Solved structural state for one realization.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    /// Stiffness after spring addition and support elimination.
    pub k: BandedSpd,
    /// Cholesky factor, reused by the structural adjoint solve.
    pub factor: BandedCholesky,
    pub u: Vec<f64>,
    /// Signed output displacement `l^T u` in meters.
    pub u_out: f64,
    /// Strain energy including the spring contribution, N m.
    pub strain_energy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use nalgebra::{DMatrix, DVector};

    fn free_bcs(output_udof: usize, spring: f64) -> BoundaryConditions {
        BoundaryConditions {
            fixed_udofs: vec![],
            symmetry_udofs: vec![],
            pressure_dirichlet: vec![],
            output_udof,
            output_sign: 1.0,
            spring_stiffness: spring,
        }
    }

    #[test]
    fn unit_stiffness_rows_sum_to_zero() {
        let mesh = build_grid(1, 1, 0.02, 0.01, 0.01).unwrap();
        let k0 = element_stiffness_unit(&mesh, 0.4);
        for row in &k0 {
            let s: f64 = row.iter().sum();
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn unit_stiffness_symmetric() {
        let mesh = build_grid(1, 1, 0.02, 0.01, 0.01).unwrap();
        let k0 = element_stiffness_unit(&mesh, 0.4);
        for i in 0..8 {
            for j in 0..8 {
                assert!((k0[i][j] - k0[j][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn unit_stiffness_has_three_rigid_modes() {
        let mesh = build_grid(1, 1, 0.01, 0.01, 0.01).unwrap();
        let k0 = element_stiffness_unit(&mesh, 0.4);
        let m = DMatrix::from_fn(8, 8, |i, j| k0[i][j]);
        let eig = m.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let scale = vals[7];
        assert_eq!(vals.iter().filter(|v| v.abs() < 1e-12 * scale).count(), 3);
        assert!(vals[3] > 1e-6 * scale);
    }

    #[test]
    fn corner_design_matches_single_material_assembly() {
        // interpolating the binary material-1 corner must reproduce a plain
        // E1 assembly exactly
        use crate::material::{interpolate, MaterialSet};
        let mesh = build_grid(3, 2, 0.03, 0.02, 0.01).unwrap();
        let model = ElasticModel::new(&mesh, 0.4);
        let bcs = free_bcs(0, 0.0);
        let mats = MaterialSet::new(vec![1e7, 1e8], 3.0, 0.4, 0.01).unwrap();
        let interpolated: Vec<f64> = (0..mesh.n_elements())
            .map(|_| interpolate(&[1.0, 0.0], &mats).unwrap())
            .collect();
        let mut rhs1 = vec![0.0; mesh.n_udofs()];
        let mut rhs2 = vec![0.0; mesh.n_udofs()];
        let ka = model.assemble(&mesh, &interpolated, &bcs, &mut rhs1).unwrap();
        let kb = model
            .assemble(&mesh, &vec![1e7; mesh.n_elements()], &bcs, &mut rhs2)
            .unwrap();
        for i in 0..mesh.n_udofs() {
            for j in 0..mesh.n_udofs() {
                assert_eq!(ka.get(i, j).to_bits(), kb.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn spring_adds_to_output_diagonal() {
        let mesh = build_grid(2, 2, 0.02, 0.02, 0.01).unwrap();
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli = vec![1e7; mesh.n_elements()];
        let out = 2 * mesh.node_id(2, 1) + 1;
        let mut rhs = vec![0.0; mesh.n_udofs()];
        let k_plain = model
            .assemble(&mesh, &moduli, &free_bcs(out, 0.0), &mut rhs)
            .unwrap();
        let mut rhs2 = vec![0.0; mesh.n_udofs()];
        let k_spring = model
            .assemble(&mesh, &moduli, &free_bcs(out, 5e4), &mut rhs2)
            .unwrap();
        let diff = k_spring.get(out, out) - k_plain.get(out, out);
        assert_eq!(diff, 5e4);
    }

    fn cantilever(nelx: usize, nely: usize) -> (StructuredMesh, BoundaryConditions, Vec<f64>) {
        let mesh = build_grid(nelx, nely, 0.02 * nelx as f64, 0.02 * nely as f64, 0.01).unwrap();
        let mut fixed = Vec::new();
        for iy in 0..=nely {
            fixed.push(2 * mesh.node_id(0, iy));
            fixed.push(2 * mesh.node_id(0, iy) + 1);
        }
        let tip = 2 * mesh.node_id(nelx, 0) + 1;
        let bcs = BoundaryConditions {
            fixed_udofs: fixed,
            symmetry_udofs: vec![],
            pressure_dirichlet: vec![],
            output_udof: tip,
            output_sign: 1.0,
            spring_stiffness: 0.0,
        };
        let mut loads = vec![0.0; mesh.n_udofs()];
        loads[tip] = -100.0;
        (mesh, bcs, loads)
    }

    fn dense_reference(
        mesh: &StructuredMesh,
        model: &ElasticModel,
        moduli: &[f64],
        bcs: &BoundaryConditions,
        loads: &[f64],
    ) -> Vec<f64> {
        let n = mesh.n_udofs();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for e in 0..mesh.n_elements() {
            let dofs = mesh.element_udofs(e);
            for a in 0..8 {
                for b in 0..8 {
                    k[(dofs[a], dofs[b])] += moduli[e] * model.k0[a][b];
                }
            }
        }
        k[(bcs.output_udof, bcs.output_udof)] += bcs.spring_stiffness;
        let mut rhs = DVector::from_column_slice(loads);
        for d in bcs.homogeneous_udofs() {
            for i in 0..n {
                k[(d, i)] = 0.0;
                k[(i, d)] = 0.0;
            }
            k[(d, d)] = 1.0;
            rhs[d] = 0.0;
        }
        k.lu().solve(&rhs).unwrap().iter().copied().collect()
    }

    #[test]
    fn two_by_one_beam_matches_dense_oracle() {
        let (mesh, bcs, loads) = cantilever(2, 1);
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli = vec![2e7; mesh.n_elements()];
        let sys = model.solve(&mesh, &moduli, &bcs, &loads).unwrap();
        let dense = dense_reference(&mesh, &model, &moduli, &bcs, &loads);
        for i in 0..mesh.n_udofs() {
            assert!((sys.u[i] - dense[i]).abs() <= 1e-12 + 1e-10 * dense[i].abs());
        }
    }

    #[test]
    fn cantilever_patch_matches_dense_oracle() {
        let (mesh, bcs, loads) = cantilever(4, 2);
        assert!(mesh.n_udofs() <= 100);
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli: Vec<f64> = (0..mesh.n_elements())
            .map(|e| 1e7 * (1.0 + 0.3 * (e as f64)))
            .collect();
        let sys = model.solve(&mesh, &moduli, &bcs, &loads).unwrap();
        let dense = dense_reference(&mesh, &model, &moduli, &bcs, &loads);
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..mesh.n_udofs() {
            assert!((sys.u[i] - dense[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn zero_load_means_zero_displacement_and_energy() {
        let (mesh, bcs, _) = cantilever(3, 2);
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli = vec![1e7; mesh.n_elements()];
        let loads = vec![0.0; mesh.n_udofs()];
        let sys = model.solve(&mesh, &moduli, &bcs, &loads).unwrap();
        assert!(sys.u.iter().all(|&v| v == 0.0));
        assert_eq!(sys.strain_energy, 0.0);
    }

    #[test]
    fn strain_energy_equals_half_work() {
        let (mesh, mut bcs, loads) = cantilever(3, 2);
        bcs.spring_stiffness = 5e4;
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli = vec![1e7; mesh.n_elements()];
        let sys = model.solve(&mesh, &moduli, &bcs, &loads).unwrap();
        let work: f64 = loads.iter().zip(&sys.u).map(|(f, u)| f * u).sum();
        assert!((sys.strain_energy - 0.5 * work).abs() <= 1e-9 * sys.strain_energy.abs());
    }

    #[test]
    fn joint_scaling_leaves_displacement_unchanged() {
        let (mesh, mut bcs, mut loads) = cantilever(4, 2);
        bcs.spring_stiffness = 5e4;
        let model = ElasticModel::new(&mesh, 0.4);
        let moduli: Vec<f64> = (0..mesh.n_elements()).map(|e| 1e7 + 1e6 * e as f64).collect();
        let base = model.solve(&mesh, &moduli, &bcs, &loads).unwrap();

        let c = 16.0;
        let scaled_moduli: Vec<f64> = moduli.iter().map(|&e| c * e).collect();
        bcs.spring_stiffness *= c;
        for f in &mut loads {
            *f *= c;
        }
        let scaled = model.solve(&mesh, &scaled_moduli, &bcs, &loads).unwrap();
        for i in 0..mesh.n_udofs() {
            assert!((base.u[i] - scaled.u[i]).abs() <= 1e-12 * base.u[i].abs().max(1e-16));
        }
    }
}
