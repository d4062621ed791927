//! Extended SIMP interpolation of Young's modulus for up to `m` candidate
//! materials.
//!
//! The interpolation nests the two-phase power law: the topology variable
//! blends void against the material stack, and each material variable blends
//! candidate `k` against the remainder of the stack,
//!
//! ```text
//! E = (1 - r1^p) Ev + r1^p B1,   Bk = (1 - r(k+1)^p) Ek + r(k+1)^p B(k+1),
//! Bm = Em.
//! ```
//!
//! Binary corners therefore evaluate exactly to `{Ev, E1, .., Em}`.

use crate::error::{Error, Result};

/// Ordered candidate material set (ascending stiffness) plus the shared
/// interpolation constants.
#[derive(Debug, Clone)]
pub struct MaterialSet {
    /// Candidate Young's moduli in N/m^2, ascending.
    pub young_moduli: Vec<f64>,
    /// Void modulus, fixed at 1e-6 times the softest candidate.
    pub void_modulus: f64,
    /// SIMP penalty exponent.
    pub penal: f64,
    /// Poisson ratio (plane stress).
    pub poisson: f64,
    /// Out-of-plane thickness in meters.
    pub thickness: f64,
}

impl MaterialSet {
    pub fn new(young_moduli: Vec<f64>, penal: f64, poisson: f64, thickness: f64) -> Result<Self> {
        if young_moduli.is_empty() {
            return Err(Error::Validation("at least one candidate material".into()));
        }
        if young_moduli.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Validation("Young's moduli must be positive".into()));
        }
        if young_moduli.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Validation(
                "candidate moduli must be sorted ascending".into(),
            ));
        }
        if !(penal >= 1.0) {
            return Err(Error::Validation("SIMP penalty must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&poisson) {
            return Err(Error::Validation("Poisson ratio must be in [0, 0.5)".into()));
        }
        if !(thickness > 0.0) {
            return Err(Error::Validation("thickness must be positive".into()));
        }
        let void_modulus = 1e-6 * young_moduli[0];
        Ok(Self {
            young_moduli,
            void_modulus,
            penal,
            poisson,
            thickness,
        })
    }

    pub fn n_materials(&self) -> usize {
        self.young_moduli.len()
    }
}

/// Interpolated modulus for one element's projected variable row.
pub fn interpolate(row: &[f64], mats: &MaterialSet) -> Result<f64> {
    let m = mats.n_materials();
    if row.len() != m {
        return Err(Error::Contract(format!(
            "row has {} entries for {m} materials",
            row.len()
        )));
    }
    let p = mats.penal;
    // stack value B1 via backward recursion
    let mut b = mats.young_moduli[m - 1];
    for k in (0..m - 1).rev() {
        let w = row[k + 1].powf(p);
        b = (1.0 - w) * mats.young_moduli[k] + w * b;
    }
    let w0 = row[0].powf(p);
    Ok((1.0 - w0) * mats.void_modulus + w0 * b)
}

/// Analytic partials of [`interpolate`] with respect to every variable.
pub fn interpolate_gradient(row: &[f64], mats: &MaterialSet) -> Result<Vec<f64>> {
    let m = mats.n_materials();
    if row.len() != m {
        return Err(Error::Contract(format!(
            "row has {} entries for {m} materials",
            row.len()
        )));
    }
    let p = mats.penal;
    // stack[k] = B(k+1) in 0-based terms: stack[m-1] = Em
    let mut stack = vec![0.0; m];
    stack[m - 1] = mats.young_moduli[m - 1];
    for k in (0..m - 1).rev() {
        let w = row[k + 1].powf(p);
        stack[k] = (1.0 - w) * mats.young_moduli[k] + w * stack[k + 1];
    }
    let mut grad = vec![0.0; m];
    grad[0] = p * row[0].powf(p - 1.0) * (stack[0] - mats.void_modulus);
    // prefix = r1^p * r2^p * ... down to the variable in question
    let mut prefix = row[0].powf(p);
    for k in 1..m {
        grad[k] = prefix * p * row[k].powf(p - 1.0) * (stack[k] - mats.young_moduli[k - 1]);
        prefix *= row[k].powf(p);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mats(e: &[f64]) -> MaterialSet {
        MaterialSet::new(e.to_vec(), 3.0, 0.4, 0.01).unwrap()
    }

    #[test]
    fn two_material_corners() {
        let m = mats(&[1e7, 1e8]);
        assert_eq!(interpolate(&[1.0, 0.0], &m).unwrap(), 1e7);
        assert_eq!(interpolate(&[1.0, 1.0], &m).unwrap(), 1e8);
        assert_eq!(interpolate(&[0.0, 0.0], &m).unwrap(), m.void_modulus);
        assert_eq!(interpolate(&[0.0, 1.0], &m).unwrap(), m.void_modulus);
    }

    #[test]
    fn three_material_corners() {
        let m = mats(&[1e7, 5e7, 1e8]);
        assert_eq!(interpolate(&[1.0, 0.0, 0.0], &m).unwrap(), 1e7);
        assert_eq!(interpolate(&[1.0, 1.0, 0.0], &m).unwrap(), 5e7);
        assert_eq!(interpolate(&[1.0, 1.0, 1.0], &m).unwrap(), 1e8);
    }

    #[test]
    fn all_binary_corners_hit_candidate_set() {
        for e in [vec![2e6], vec![1e7, 1e8], vec![1e7, 5e7, 1e8]] {
            let m = mats(&e);
            let n = e.len();
            for bits in 0..(1u32 << n) {
                let row: Vec<f64> = (0..n)
                    .map(|k| if bits >> k & 1 == 1 { 1.0 } else { 0.0 })
                    .collect();
                let v = interpolate(&row, &m).unwrap();
                // a corner selects the candidate indexed by the run of ones
                // following the topology variable
                let expected = if row[0] == 0.0 {
                    m.void_modulus
                } else {
                    let mut sel = 0usize;
                    while sel + 1 < n && row[sel + 1] == 1.0 {
                        sel += 1;
                    }
                    e[sel]
                };
                assert_eq!(v, expected, "row {row:?}");
            }
        }
    }

    #[test]
    fn midpoint_two_material_value() {
        let m = mats(&[1e7, 1e8]);
        let v = interpolate(&[0.5, 0.5], &m).unwrap();
        let b1 = 0.875 * 1e7 + 0.125 * 1e8;
        let expected = 0.875 * m.void_modulus + 0.125 * b1;
        assert!((v - expected).abs() < 1e-6 * expected);
        assert!((v - 2.6563e6).abs() < 1e-3 * 2.6563e6);
    }

    #[test]
    fn single_material_matches_power_law() {
        let m = mats(&[3e7]);
        for i in 0..=10 {
            let r = i as f64 / 10.0;
            let w = r.powf(3.0);
            let direct = (1.0 - w) * m.void_modulus + w * 3e7;
            let nested = interpolate(&[r], &m).unwrap();
            assert_eq!(direct.to_bits(), nested.to_bits());
        }
    }

    #[test]
    fn single_material_gradient_closed_form() {
        let m = mats(&[3e7]);
        let r = 0.6;
        let g = interpolate_gradient(&[r], &m).unwrap();
        let expected = 3.0 * r.powf(2.0) * (3e7 - m.void_modulus);
        assert!((g[0] - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn solid_two_material_gradient() {
        let m = mats(&[1e7, 1e8]);
        let r2 = 0.7;
        let g = interpolate_gradient(&[1.0, r2], &m).unwrap();
        let expected = 3.0 * r2.powf(2.0) * (1e8 - 1e7);
        assert!((g[1] - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for e in [vec![2e6], vec![1e7, 1e8], vec![1e7, 5e7, 1e8]] {
            let m = mats(&e);
            for _ in 0..30 {
                let row: Vec<f64> = (0..e.len()).map(|_| rng.gen_range(0.1..0.9)).collect();
                let g = interpolate_gradient(&row, &m).unwrap();
                for k in 0..e.len() {
                    let mut hi = row.clone();
                    let mut lo = row.clone();
                    hi[k] += h;
                    lo[k] -= h;
                    let fd = (interpolate(&hi, &m).unwrap() - interpolate(&lo, &m).unwrap())
                        / (2.0 * h);
                    assert!(
                        (g[k] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                        "row {row:?} k={k}: {} vs {}",
                        g[k],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_in_each_variable_for_ascending_candidates() {
        let m = mats(&[1e7, 5e7, 1e8]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let row: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let base = interpolate(&row, &m).unwrap();
            for k in 0..3 {
                let mut up = row.clone();
                up[k] = (up[k] + 0.05).min(1.0);
                assert!(interpolate(&up, &m).unwrap() >= base - 1e-9);
            }
        }
    }

    #[test]
    fn unsorted_moduli_rejected() {
        assert!(MaterialSet::new(vec![1e8, 1e7], 3.0, 0.4, 0.01).is_err());
    }

    #[test]
    fn wrong_row_length_is_contract_violation() {
        let m = mats(&[1e7, 1e8]);
        assert!(interpolate(&[0.5], &m).is_err());
        assert!(interpolate_gradient(&[0.5, 0.5, 0.5], &m).is_err());
    }
}
