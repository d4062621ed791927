//! Design-variable fields, the density filter, and the smoothed Heaviside
//! projection with its derivative.
//!
//! Every element carries `m` design variables: column 0 is the topology
//! variable (solid vs void), columns 1.. select among the candidate
//! materials. The raw variables are neighborhood-averaged by a linear,
//! row-stochastic filter and then projected with a tanh-based Heaviside at a
//! realization-dependent threshold: 0.5 for the blueprint design, 0.5 + dEta
//! for the eroded design.

use crate::error::{Error, Result};
use crate::mesh::{ElementTag, PassiveMask, StructuredMesh};

/// Per-element, per-material design variables stored column-major.
#[derive(Debug, Clone)]
pub struct DesignField {
    nel: usize,
    m: usize,
    values: Vec<f64>,
}

impl DesignField {
    pub fn constant(nel: usize, m: usize, value: f64) -> Self {
        Self {
            nel,
            m,
            values: vec![value; nel * m],
        }
    }

    pub fn from_columns(nel: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        let mut values = Vec::with_capacity(nel * m);
        for col in columns {
            if col.len() != nel {
                return Err(Error::Contract(format!(
                    "column length {} does not match element count {nel}",
                    col.len()
                )));
            }
            values.extend_from_slice(col);
        }
        Ok(Self { nel, m, values })
    }

    pub fn n_elements(&self) -> usize {
        self.nel
    }

    pub fn n_materials(&self) -> usize {
        self.m
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.nel..(k + 1) * self.nel]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.nel..(k + 1) * self.nel]
    }

    pub fn get(&self, e: usize, k: usize) -> f64 {
        self.values[k * self.nel + e]
    }

    pub fn set(&mut self, e: usize, k: usize, v: f64) {
        self.values[k * self.nel + e] = v;
    }

    /// Row of all material variables for one element.
    pub fn row(&self, e: usize) -> Vec<f64> {
        (0..self.m).map(|k| self.get(e, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Pins every column of non-design elements: forced-solid elements are
    /// solid in the forced candidate material (the softest when unspecified),
    /// forced-void elements are void.
    pub fn enforce_passive(&mut self, passive: &PassiveMask) {
        for (e, tag) in passive.tags.iter().enumerate() {
            match *tag {
                ElementTag::Design => {}
                ElementTag::ForcedSolid { material } => {
                    self.set(e, 0, 1.0);
                    let mat = material.unwrap_or(0);
                    // candidate `mat` selected: columns up to it at 1, rest 0
                    for k in 1..self.m {
                        self.set(e, k, if k <= mat { 1.0 } else { 0.0 });
                    }
                }
                ElementTag::ForcedVoid => self.set(e, 0, 0.0),
            }
        }
    }
}

/// Row-stochastic sparse filter built from linearly decaying weights on
/// element centroids, `w = max(0, 1 - d/r_fill)`, volume weighted.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    nel: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
}

impl FilterOperator {
    pub fn build(mesh: &StructuredMesh, r_fill: f64) -> Self {
        let (nelx, nely) = (mesh.nelx, mesh.nely);
        let (dx, dy) = (mesh.dx(), mesh.dy());
        let nel = mesh.n_elements();
        let span_x = (r_fill / dx).ceil() as isize;
        let span_y = (r_fill / dy).ceil() as isize;
        let vol = mesh.element_volume();

        let mut row_ptr = Vec::with_capacity(nel + 1);
        let mut col_idx = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0usize);
        for ex in 0..nelx as isize {
            for ey in 0..nely as isize {
                let mut sum = 0.0;
                let start = weights.len();
                for fx in (ex - span_x).max(0)..=(ex + span_x).min(nelx as isize - 1) {
                    for fy in (ey - span_y).max(0)..=(ey + span_y).min(nely as isize - 1) {
                        let ddx = (ex - fx) as f64 * dx;
                        let ddy = (ey - fy) as f64 * dy;
                        let w = 1.0 - (ddx * ddx + ddy * ddy).sqrt() / r_fill;
                        if w > 0.0 {
                            col_idx.push((fx * nely as isize + fy) as u32);
                            weights.push(vol * w);
                            sum += vol * w;
                        }
                    }
                }
                for w in &mut weights[start..] {
                    *w /= sum;
                }
                row_ptr.push(weights.len());
            }
        }
        Self {
            nel,
            row_ptr,
            col_idx,
            weights,
        }
    }

    /// Identity filter (useful for tests and unfiltered validation runs).
    pub fn identity(nel: usize) -> Self {
        Self {
            nel,
            row_ptr: (0..=nel).collect(),
            col_idx: (0..nel as u32).collect(),
            weights: vec![1.0; nel],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.nel
    }

    /// `out = W x` for one column.
    pub fn apply_column(&self, x: &[f64], out: &mut [f64]) {
        for e in 0..self.nel {
            let lo = self.row_ptr[e];
            let hi = self.row_ptr[e + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.weights[k] * x[self.col_idx[k] as usize];
            }
            out[e] = acc;
        }
    }

    /// `out = W^T x` for one column (the adjoint map used by the chain rule).
    pub fn apply_transpose_column(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for e in 0..self.nel {
            let xe = x[e];
            if xe == 0.0 {
                continue;
            }
            let lo = self.row_ptr[e];
            let hi = self.row_ptr[e + 1];
            for k in lo..hi {
                out[self.col_idx[k] as usize] += self.weights[k] * xe;
            }
        }
    }
}

/// Filters every column of the field with the same operator.
pub fn apply_filter(op: &FilterOperator, field: &DesignField) -> Result<DesignField> {
    if op.n_elements() != field.n_elements() {
        return Err(Error::Contract(format!(
            "filter built for {} elements applied to a field with {}",
            op.n_elements(),
            field.n_elements()
        )));
    }
    let mut out = field.clone();
    for k in 0..field.n_materials() {
        op.apply_column(field.column(k), out.column_mut(k));
    }
    Ok(out)
}

/// Which robust realization a projection produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realization {
    Eroded,
    Blueprint,
}

/// Heaviside projection parameters and the beta continuation schedule.
#[derive(Debug, Clone)]
pub struct ProjectionParams {
    pub beta: f64,
    pub delta_eta: f64,
    pub beta_initial: f64,
    pub beta_max: f64,
    /// Iterations between doublings of beta.
    pub doubling_period: usize,
}

impl ProjectionParams {
    pub fn new(delta_eta: f64) -> Self {
        Self {
            beta: 1.0,
            delta_eta,
            beta_initial: 1.0,
            beta_max: 128.0,
            doubling_period: 50,
        }
    }

    pub fn eta(&self, realization: Realization) -> f64 {
        match realization {
            Realization::Eroded => 0.5 + self.delta_eta,
            Realization::Blueprint => 0.5,
        }
    }

    /// Continuation value for a 1-based iteration counter: doubled every
    /// `doubling_period` iterations, capped at `beta_max`.
    pub fn beta_at(&self, iteration: usize) -> f64 {
        let doublings = (iteration.saturating_sub(1)) / self.doubling_period;
        (self.beta_initial * 2f64.powi(doublings as i32)).min(self.beta_max)
    }
}

/// Smoothed Heaviside, `[tanh(be) + tanh(b(x - e))] / [tanh(be) + tanh(b(1 - e))]`.
#[inline]
pub fn heaviside(x: f64, beta: f64, eta: f64) -> f64 {
    ((beta * eta).tanh() + (beta * (x - eta)).tanh())
        / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh())
}

/// Derivative of [`heaviside`] with respect to `x`.
#[inline]
pub fn heaviside_derivative(x: f64, beta: f64, eta: f64) -> f64 {
    let t = (beta * (x - eta)).tanh();
    beta * (1.0 - t * t) / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh())
}

/// Projects a filtered field for the requested realization.
pub fn project(
    field: &DesignField,
    params: &ProjectionParams,
    realization: Realization,
) -> DesignField {
    let eta = params.eta(realization);
    let mut out = field.clone();
    for v in out.as_mut_slice() {
        *v = heaviside(*v, params.beta, eta);
    }
    out
}

/// Entrywise `d(projected)/d(filtered)` for the requested realization.
pub fn projection_derivative(
    field: &DesignField,
    params: &ProjectionParams,
    realization: Realization,
) -> DesignField {
    let eta = params.eta(realization);
    let mut out = field.clone();
    for v in out.as_mut_slice() {
        *v = heaviside_derivative(*v, params.beta, eta);
    }
    out
}

/// Pulls a gradient with respect to projected variables back to the raw
/// design variables: `df/drho = W^T (df/dpbar * dpbar/dptilde)` per column.
pub fn chain_rule(
    df_dprojected: &DesignField,
    dproj_dfiltered: &DesignField,
    op: &FilterOperator,
) -> Result<DesignField> {
    if df_dprojected.n_elements() != dproj_dfiltered.n_elements()
        || df_dprojected.n_materials() != dproj_dfiltered.n_materials()
        || df_dprojected.n_elements() != op.n_elements()
    {
        return Err(Error::Contract("chain rule shape mismatch".into()));
    }
    let nel = df_dprojected.n_elements();
    let mut out = df_dprojected.clone();
    let mut scaled = vec![0.0; nel];
    for k in 0..df_dprojected.n_materials() {
        let a = df_dprojected.column(k);
        let b = dproj_dfiltered.column(k);
        for e in 0..nel {
            scaled[e] = a[e] * b[e];
        }
        op.apply_transpose_column(&scaled, out.column_mut(k));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use proptest::prelude::*;

    #[test]
    fn filter_preserves_constants() {
        let mesh = build_grid(6, 5, 0.6, 0.5, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 2.5 * mesh.dx());
        let field = DesignField::constant(mesh.n_elements(), 2, 0.37);
        let filtered = apply_filter(&op, &field).unwrap();
        for &v in filtered.as_slice() {
            assert!((v - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn filter_on_single_element_is_identity() {
        let mesh = build_grid(1, 1, 1.0, 1.0, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 3.0);
        let field = DesignField::from_columns(1, &[vec![0.42]]).unwrap();
        let filtered = apply_filter(&op, &field).unwrap();
        assert!((filtered.get(0, 0) - 0.42).abs() < 1e-15);
    }

    #[test]
    fn filter_three_element_strip_hand_weights() {
        // end element with neighbors weighted (1, 1/3, 0) under r = 1.5 dx
        let mesh = build_grid(3, 1, 3.0, 1.0, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 1.5 * mesh.dx());
        let field = DesignField::from_columns(3, &[vec![1.0, 0.0, 0.0]]).unwrap();
        let filtered = apply_filter(&op, &field).unwrap();
        assert!((filtered.get(0, 0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn filter_rows_sum_to_one() {
        let mesh = build_grid(9, 4, 0.9, 0.4, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 2.2 * mesh.dx());
        let ones = vec![1.0; op.n_elements()];
        let mut out = vec![0.0; op.n_elements()];
        op.apply_column(&ones, &mut out);
        for v in out {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn filter_shape_mismatch_is_contract_violation() {
        let mesh = build_grid(3, 1, 3.0, 1.0, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 1.0);
        let field = DesignField::constant(5, 1, 0.3);
        assert!(apply_filter(&op, &field).is_err());
    }

    #[test]
    fn projection_endpoints_exact() {
        for beta in [1.0, 8.0, 128.0] {
            for eta in [0.3, 0.5, 0.55] {
                assert!(heaviside(0.0, beta, eta).abs() < 1e-15);
                assert!((heaviside(1.0, beta, eta) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sharp_projection_is_nearly_binary() {
        assert!((heaviside(0.6, 128.0, 0.5) - 1.0).abs() < 1e-9);
        assert!(heaviside(0.4, 128.0, 0.5).abs() < 1e-9);
    }

    #[test]
    fn eroded_below_blueprint() {
        let params = ProjectionParams {
            beta: 6.0,
            ..ProjectionParams::new(0.1)
        };
        let field = DesignField::from_columns(5, &[vec![0.1, 0.3, 0.5, 0.7, 0.9]]).unwrap();
        let eroded = project(&field, &params, Realization::Eroded);
        let blueprint = project(&field, &params, Realization::Blueprint);
        for e in 0..5 {
            assert!(eroded.get(e, 0) <= blueprint.get(e, 0) + 1e-15);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for &(beta, eta) in &[(1.0, 0.5), (4.0, 0.55), (16.0, 0.5), (2.0, 0.3)] {
            for i in 1..10 {
                let x = i as f64 / 10.0;
                let fd = (heaviside(x + h, beta, eta) - heaviside(x - h, beta, eta)) / (2.0 * h);
                let an = heaviside_derivative(x, beta, eta);
                assert!(
                    (an - fd).abs() <= 1e-6 * fd.abs().max(1e-12),
                    "beta={beta} eta={eta} x={x}: {an} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn derivative_peaks_at_threshold() {
        let (beta, eta) = (8.0, 0.45);
        let peak = heaviside_derivative(eta, beta, eta);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!(heaviside_derivative(x, beta, eta) <= peak + 1e-12);
        }
    }

    #[test]
    fn low_beta_derivative_closed_form() {
        let (beta, eta): (f64, f64) = (1.0, 0.5);
        let x = 0.3;
        let sech2 = {
            let t = (beta * (x - eta)).tanh();
            1.0 - t * t
        };
        let expected = beta / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh()) * sech2;
        assert!((heaviside_derivative(x, beta, eta) - expected).abs() < 1e-14);
    }

    #[test]
    fn chain_rule_identity_filter() {
        let op = FilterOperator::identity(4);
        let df = DesignField::from_columns(4, &[vec![1.0, -2.0, 3.0, 0.5]]).unwrap();
        let ones = DesignField::constant(4, 1, 1.0);
        let out = chain_rule(&df, &ones, &op).unwrap();
        for e in 0..4 {
            assert_eq!(out.get(e, 0), df.get(e, 0));
        }
    }

    #[test]
    fn chain_rule_preserves_column_sums() {
        // W^T with row-stochastic W preserves the total of a constant field
        let mesh = build_grid(5, 3, 0.5, 0.3, 0.01).unwrap();
        let op = FilterOperator::build(&mesh, 1.7 * mesh.dx());
        let nel = mesh.n_elements();
        let df = DesignField::constant(nel, 1, 2.5);
        let ones = DesignField::constant(nel, 1, 1.0);
        let out = chain_rule(&df, &ones, &op).unwrap();
        let total: f64 = out.column(0).iter().sum();
        assert!((total - 2.5 * nel as f64).abs() < 1e-10);
    }

    #[test]
    fn capped_beta_is_binary_outside_transition_band() {
        let (beta, eta) = (128.0, 0.5);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            if (x - eta).abs() > 0.1 {
                let v = heaviside(x, beta, eta);
                let nearest = if x < eta { 0.0 } else { 1.0 };
                assert!((v - nearest).abs() <= 1e-6, "x={x}: {v}");
            }
        }
    }

    #[test]
    fn beta_schedule_doubles_every_period() {
        let params = ProjectionParams::new(0.05);
        let expect = [
            (1, 1.0),
            (50, 1.0),
            (51, 2.0),
            (101, 4.0),
            (151, 8.0),
            (201, 16.0),
            (251, 32.0),
            (301, 64.0),
            (351, 128.0),
            (400, 128.0),
            (1000, 128.0),
        ];
        for (it, beta) in expect {
            assert_eq!(params.beta_at(it), beta, "iteration {it}");
        }
    }

    proptest! {
        #[test]
        fn projection_stays_in_unit_interval(x in 0.0f64..=1.0, beta in 0.5f64..128.0, eta in 0.05f64..0.95) {
            let v = heaviside(x, beta, eta);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn projection_monotone_in_x(a in 0.0f64..=1.0, b in 0.0f64..=1.0, beta in 0.5f64..64.0, eta in 0.1f64..0.9) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(heaviside(lo, beta, eta) <= heaviside(hi, beta, eta) + 1e-12);
        }

        #[test]
        fn projection_nonincreasing_in_eta(x in 0.0f64..=1.0, beta in 0.5f64..64.0, e1 in 0.1f64..0.9, e2 in 0.1f64..0.9) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(heaviside(x, beta, hi) <= heaviside(x, beta, lo) + 1e-12);
        }
    }
}
