//! Structured analysis grids for the benchmark mechanisms.
//!
//! The design domain is a regular grid of axis-aligned bilinear quadrilateral
//! elements. Nodes are numbered column by column (x-major, y fastest), which
//! keeps the bandwidth of the assembled operators at `O(nely)`:
//!
//! ```text
//! node(ix, iy)    = ix * (nely + 1) + iy
//! element(ex, ey) = ex * nely + ey
//! ```
//!
//! Each element lists its corner nodes counterclockwise starting at the
//! lower-left corner. Displacement DOFs are `(2n, 2n + 1)` for node `n`;
//! the pressure DOF of node `n` is `n` itself.

use crate::error::{Error, Result};

/// Applied input (excess) pressure for the benchmark mechanisms, in Pa.
pub const INPUT_PRESSURE: f64 = 1.0e5;
/// Workpiece spring stiffness at the output port, in N/m.
pub const OUTPUT_SPRING: f64 = 5.0e4;

/// Regular rectangular grid of 4-node plane elements.
#[derive(Debug, Clone)]
pub struct StructuredMesh {
    pub nelx: usize,
    pub nely: usize,
    pub lx: f64,
    pub ly: f64,
    pub thickness: f64,
    /// Counterclockwise corner nodes per element.
    connectivity: Vec<[usize; 4]>,
    /// Node coordinates in meters, indexed by node id.
    coords: Vec<(f64, f64)>,
}

impl StructuredMesh {
    pub fn n_nodes(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn n_udofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_pdofs(&self) -> usize {
        self.n_nodes()
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nelx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.nely as f64
    }

    /// Element volume `v_i` (area times out-of-plane thickness).
    pub fn element_volume(&self) -> f64 {
        self.dx() * self.dy() * self.thickness
    }

    pub fn node_id(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix <= self.nelx && iy <= self.nely);
        ix * (self.nely + 1) + iy
    }

    pub fn element_id(&self, ex: usize, ey: usize) -> usize {
        debug_assert!(ex < self.nelx && ey < self.nely);
        ex * self.nely + ey
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        self.connectivity[e]
    }

    /// The eight displacement DOFs of an element: (ux, uy) per corner node.
    pub fn element_udofs(&self, e: usize) -> [usize; 8] {
        let n = self.connectivity[e];
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        self.coords[node]
    }

    pub fn element_centroid(&self, e: usize) -> (f64, f64) {
        let ex = e / self.nely;
        let ey = e % self.nely;
        ((ex as f64 + 0.5) * self.dx(), (ey as f64 + 0.5) * self.dy())
    }

    /// Maximum |i - j| over coupled displacement DOFs; sizes banded storage.
    pub fn u_bandwidth(&self) -> usize {
        2 * (self.nely + 2) + 1
    }

    /// Maximum |i - j| over coupled pressure DOFs.
    pub fn p_bandwidth(&self) -> usize {
        self.nely + 2
    }
}

/// Builds the regular grid. Node numbering is column-major (y fastest).
pub fn build_grid(
    nelx: usize,
    nely: usize,
    lx: f64,
    ly: f64,
    thickness: f64,
) -> Result<StructuredMesh> {
    if nelx == 0 || nely == 0 {
        return Err(Error::Config("grid must have at least 1x1 elements".into()));
    }
    if !(lx > 0.0 && ly > 0.0 && thickness > 0.0) {
        return Err(Error::Config(format!(
            "domain dimensions must be positive (lx={lx}, ly={ly}, t={thickness})"
        )));
    }
    let dx = lx / nelx as f64;
    let dy = ly / nely as f64;

    let mut coords = Vec::with_capacity((nelx + 1) * (nely + 1));
    for ix in 0..=nelx {
        for iy in 0..=nely {
            coords.push((ix as f64 * dx, iy as f64 * dy));
        }
    }

    let node = |ix: usize, iy: usize| ix * (nely + 1) + iy;
    let mut connectivity = Vec::with_capacity(nelx * nely);
    for ex in 0..nelx {
        for ey in 0..nely {
            connectivity.push([
                node(ex, ey),
                node(ex + 1, ey),
                node(ex + 1, ey + 1),
                node(ex, ey + 1),
            ]);
        }
    }

    Ok(StructuredMesh {
        nelx,
        nely,
        lx,
        ly,
        thickness,
        connectivity,
        coords,
    })
}

/// Displacement and pressure boundary conditions plus the output port.
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    /// Clamped DOFs (both components fixed at supports).
    pub fixed_udofs: Vec<usize>,
    /// Roller DOFs on symmetry edges (normal displacement fixed).
    pub symmetry_udofs: Vec<usize>,
    /// Prescribed nodal pressures `(node, Pa)`. Symmetry edges are omitted
    /// and therefore get the natural zero-flux condition.
    pub pressure_dirichlet: Vec<(usize, f64)>,
    /// Displacement DOF whose motion the mechanism maximizes.
    pub output_udof: usize,
    /// Entry of the output selector vector at `output_udof`; chosen so that
    /// favourable motion drives `l^T u` negative.
    pub output_sign: f64,
    /// Workpiece spring stiffness added at the output DOF, N/m.
    pub spring_stiffness: f64,
}

impl BoundaryConditions {
    /// Union of clamped and roller DOFs, sorted and deduplicated.
    pub fn homogeneous_udofs(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .fixed_udofs
            .iter()
            .chain(self.symmetry_udofs.iter())
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Per-element design/non-design tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementTag {
    Design,
    /// Always solid; optionally pinned to one candidate material.
    ForcedSolid { material: Option<usize> },
    ForcedVoid,
}

#[derive(Debug, Clone)]
pub struct PassiveMask {
    pub tags: Vec<ElementTag>,
}

impl PassiveMask {
    pub fn all_design(n_elements: usize) -> Self {
        Self {
            tags: vec![ElementTag::Design; n_elements],
        }
    }

    pub fn is_design(&self, e: usize) -> bool {
        self.tags[e] == ElementTag::Design
    }
}

/// Benchmark identifiers. `ComparisonCase` shares the gripper domain and is
/// distinguished only by its material configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkName {
    Gripper,
    Contractor,
    ComparisonCase,
}

impl std::str::FromStr for BenchmarkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gripper" => Ok(Self::Gripper),
            "contractor" => Ok(Self::Contractor),
            "comparison-case" => Ok(Self::ComparisonCase),
            other => Err(Error::Config(format!("unknown benchmark '{other}'"))),
        }
    }
}

/// A fully specified analysis domain.
#[derive(Debug, Clone)]
pub struct BenchmarkModel {
    pub mesh: StructuredMesh,
    pub bcs: BoundaryConditions,
    pub passive: PassiveMask,
}

/// Builds one of the benchmark domains at the requested resolution.
///
/// Gripper: symmetric half-domain of size 0.2 x 0.1 m. The symmetry line is
/// the bottom edge (rollers, zero-flux). Input pressure acts on the whole
/// left edge; the top and right edges are vented to 0 Pa. The workpiece void
/// block sits in the bottom-right corner with the solid jaw strip on top of
/// it; the output DOF is the vertical motion of the jaw tip on the right
/// edge. Solid support pads occupy the top-left and top-right corners, with
/// their boundary nodes clamped.
///
/// Contractor: quarter-domain of size 0.1 x 0.1 m with symmetry (rollers,
/// zero-flux) on the bottom and right edges, input pressure on the left edge
/// and 0 Pa on the top edge. The central workpiece void of the full
/// mechanism maps to the bottom-right corner block, again with the jaw strip
/// above it and the output DOF at the jaw tip on the symmetry line. One
/// support pad occupies the top-left corner.
pub fn build_benchmark(name: BenchmarkName, nelx: usize, nely: usize) -> Result<BenchmarkModel> {
    match name {
        BenchmarkName::Gripper | BenchmarkName::ComparisonCase => gripper(nelx, nely),
        BenchmarkName::Contractor => contractor(nelx, nely),
    }
}

/// Default grid resolution for a benchmark.
pub fn default_resolution(name: BenchmarkName) -> (usize, usize) {
    match name {
        BenchmarkName::Gripper | BenchmarkName::ComparisonCase => (200, 100),
        BenchmarkName::Contractor => (100, 100),
    }
}

fn gripper(nelx: usize, nely: usize) -> Result<BenchmarkModel> {
    let (lx, ly) = (0.2, 0.1);
    let mesh = build_grid(nelx, nely, lx, ly, 0.01)?;
    let tol = 1e-9 * lx;

    // Pressure: vent edges first, inlet last so it wins the shared corners.
    let mut dirichlet = Vec::new();
    for ix in 0..=nelx {
        if ix > 0 {
            dirichlet.push((mesh.node_id(ix, nely), 0.0)); // top edge
        }
    }
    for iy in 1..=nely {
        if iy < nely {
            dirichlet.push((mesh.node_id(nelx, iy), 0.0)); // right edge
        }
    }
    for iy in 0..=nely {
        dirichlet.push((mesh.node_id(0, iy), INPUT_PRESSURE)); // inlet
    }

    // Symmetry rollers on the bottom edge.
    let symmetry_udofs: Vec<usize> = (0..=nelx).map(|ix| 2 * mesh.node_id(ix, 0) + 1).collect();

    // Support pads: lx/20 x ly/20 blocks in the top corners; their nodes on
    // the domain boundary are clamped.
    let (pad_w, pad_h) = (lx / 20.0, ly / 20.0);
    let mut fixed_udofs = Vec::new();
    for n in 0..mesh.n_nodes() {
        let (x, y) = mesh.node_coords(n);
        let in_left_pad = x <= pad_w + tol && y >= ly - pad_h - tol;
        let in_right_pad = x >= lx - pad_w - tol && y >= ly - pad_h - tol;
        let on_boundary = x <= tol || x >= lx - tol || y >= ly - tol;
        if (in_left_pad || in_right_pad) && on_boundary {
            fixed_udofs.push(2 * n);
            fixed_udofs.push(2 * n + 1);
        }
    }

    // Output port: jaw tip on the right edge at the top of the void block.
    let out_iy = ((nely as f64) / 5.0).round() as usize;
    let output_node = mesh.node_id(nelx, out_iy);
    let output_udof = 2 * output_node + 1;

    let mut tags = vec![ElementTag::Design; mesh.n_elements()];
    let void_y = ly / 5.0;
    let strip_h = ly / 50.0;
    for e in 0..mesh.n_elements() {
        let (cx, cy) = mesh.element_centroid(e);
        let in_port_cols = cx > lx - lx / 5.0;
        if in_port_cols && cy < void_y {
            tags[e] = ElementTag::ForcedVoid;
        } else if in_port_cols && cy < void_y + strip_h {
            tags[e] = ElementTag::ForcedSolid { material: None };
        } else if (cx < pad_w || cx > lx - pad_w) && cy > ly - pad_h {
            tags[e] = ElementTag::ForcedSolid { material: None };
        }
    }

    let bcs = BoundaryConditions {
        fixed_udofs,
        symmetry_udofs,
        pressure_dirichlet: dirichlet,
        output_udof,
        output_sign: 1.0,
        spring_stiffness: OUTPUT_SPRING,
    };
    debug_assert!(!bcs.homogeneous_udofs().contains(&output_udof));
    Ok(BenchmarkModel {
        mesh,
        bcs,
        passive: PassiveMask { tags },
    })
}

fn contractor(nelx: usize, nely: usize) -> Result<BenchmarkModel> {
    let (lx, ly) = (0.1, 0.1);
    let mesh = build_grid(nelx, nely, lx, ly, 0.01)?;
    let tol = 1e-9 * lx;

    // Top edge vented, left edge pressurized; right and bottom are symmetry.
    let mut dirichlet = Vec::new();
    for ix in 1..=nelx {
        dirichlet.push((mesh.node_id(ix, nely), 0.0));
    }
    for iy in 0..=nely {
        dirichlet.push((mesh.node_id(0, iy), INPUT_PRESSURE));
    }

    let mut symmetry_udofs = Vec::new();
    for ix in 0..=nelx {
        symmetry_udofs.push(2 * mesh.node_id(ix, 0) + 1); // bottom: uy = 0
    }
    for iy in 0..=nely {
        symmetry_udofs.push(2 * mesh.node_id(nelx, iy)); // right: ux = 0
    }

    // One support pad in the top-left corner (the full mechanism's outer
    // corners after mirroring).
    let (pad_w, pad_h) = (lx / 20.0, ly / 20.0);
    let mut fixed_udofs = Vec::new();
    for n in 0..mesh.n_nodes() {
        let (x, y) = mesh.node_coords(n);
        let in_pad = x <= pad_w + tol && y >= ly - pad_h - tol;
        let on_boundary = x <= tol || y >= ly - tol;
        if in_pad && on_boundary {
            fixed_udofs.push(2 * n);
            fixed_udofs.push(2 * n + 1);
        }
    }

    let out_iy = ((nely as f64) / 5.0).round() as usize;
    let output_udof = 2 * mesh.node_id(nelx, out_iy) + 1;

    let mut tags = vec![ElementTag::Design; mesh.n_elements()];
    let void_y = ly / 5.0;
    let strip_h = ly / 50.0;
    for e in 0..mesh.n_elements() {
        let (cx, cy) = mesh.element_centroid(e);
        let in_port_cols = cx > lx - lx / 5.0;
        if in_port_cols && cy < void_y {
            tags[e] = ElementTag::ForcedVoid;
        } else if in_port_cols && cy < void_y + strip_h {
            tags[e] = ElementTag::ForcedSolid { material: None };
        } else if cx < pad_w && cy > ly - pad_h {
            tags[e] = ElementTag::ForcedSolid { material: None };
        }
    }

    let bcs = BoundaryConditions {
        fixed_udofs,
        symmetry_udofs,
        pressure_dirichlet: dirichlet,
        output_udof,
        output_sign: 1.0,
        spring_stiffness: OUTPUT_SPRING,
    };
    debug_assert!(!bcs.homogeneous_udofs().contains(&output_udof));
    Ok(BenchmarkModel {
        mesh,
        bcs,
        passive: PassiveMask { tags },
    })
}
