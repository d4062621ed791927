//! Bilinear shape functions and 2x2 Gauss quadrature on axis-aligned
//! rectangles. Shared by the flow and elasticity element kernels.

/// Gauss abscissa for the two-point rule.
pub const GAUSS: f64 = 0.577_350_269_189_625_8;

/// The four quadrature points of the 2x2 rule (unit weights).
pub const GAUSS_POINTS: [(f64, f64); 4] = [
    (-GAUSS, -GAUSS),
    (GAUSS, -GAUSS),
    (GAUSS, GAUSS),
    (-GAUSS, GAUSS),
];

/// Shape functions at `(xi, eta)`, corner order counterclockwise from the
/// lower-left node.
#[inline]
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

/// Physical-space shape gradients `(dN/dx, dN/dy)` on a `dx x dy` rectangle.
#[inline]
pub fn shape_gradients(xi: f64, eta: f64, dx: f64, dy: f64) -> [(f64, f64); 4] {
    let gx = 2.0 / dx;
    let gy = 2.0 / dy;
    [
        (-0.25 * (1.0 - eta) * gx, -0.25 * (1.0 - xi) * gy),
        (0.25 * (1.0 - eta) * gx, -0.25 * (1.0 + xi) * gy),
        (0.25 * (1.0 + eta) * gx, 0.25 * (1.0 + xi) * gy),
        (-0.25 * (1.0 + eta) * gx, 0.25 * (1.0 - xi) * gy),
    ]
}
