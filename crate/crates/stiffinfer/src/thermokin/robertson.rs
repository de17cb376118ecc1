//! The Robertson three-species test system: closed-form right-hand side,
//! Jacobian, eigenvalues, and left eigenmatrix.

use super::ThermoError;
use nalgebra::{Matrix3, Vector3};

/// Standard rate constants [k1, k2, k3].
pub const ROBERTSON_RATES: [f64; 3] = [0.04, 3.0e7, 1.0e4];

/// dy/dt with the standard rate constants.
///
/// The components are built so their sum cancels structurally: the A→B
/// flux difference is computed once and negated, keeping Σ dy at the
/// rounding floor along physical trajectories.
pub fn robertson_rhs(y: &Vector3<f64>) -> Vector3<f64> {
    rhs_with(y, ROBERTSON_RATES)
}

pub(crate) fn rhs_with(y: &Vector3<f64>, [k1, k2, k3]: [f64; 3]) -> Vector3<f64> {
    let r2 = k2 * y[1] * y[1];
    let g = k1 * y[0] - k3 * y[1] * y[2];
    Vector3::new(-g, g - r2, r2)
}

/// Analytic Jacobian with the standard rate constants.
pub fn robertson_jacobian(y: &Vector3<f64>) -> Matrix3<f64> {
    jacobian_with(y, ROBERTSON_RATES)
}

pub(crate) fn jacobian_with(y: &Vector3<f64>, [k1, k2, k3]: [f64; 3]) -> Matrix3<f64> {
    Matrix3::new(
        -k1,
        k3 * y[2],
        k3 * y[1],
        k1,
        -2.0 * k2 * y[1] - k3 * y[2],
        -k3 * y[1],
        0.0,
        2.0 * k2 * y[1],
        0.0,
    )
}

/// Closed-form spectrum of the Robertson Jacobian at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RobertsonEigen {
    /// λ1 = 0 exactly; λ2 = (−E − Q)/2 ≤ λ3 = (−E + Q)/2 ≤ 0.
    pub lambda: [f64; 3],
    /// Rows are left eigenvectors, row k paired with lambda[k].
    pub l: Matrix3<f64>,
    pub e: f64,
    pub f: f64,
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Eigenvalues and left eigenmatrix with the standard rate constants.
pub fn robertson_eigen(y: &Vector3<f64>) -> Result<RobertsonEigen, ThermoError> {
    eigen_with(y, ROBERTSON_RATES)
}

pub(crate) fn eigen_with(
    y: &Vector3<f64>,
    [k1, k2, k3]: [f64; 3],
) -> Result<RobertsonEigen, ThermoError> {
    let e = k1 + k3 * y[2] + 2.0 * k2 * y[1];
    let f = 2.0 * k1 * k2 * y[1] + 2.0 * k2 * k3 * y[1] * y[1];
    let disc = e * e - 4.0 * f;
    if disc < 0.0 {
        return Err(ThermoError::ComplexSpectrum { discriminant: disc });
    }
    let q = disc.sqrt();
    if q == 0.0 {
        return Err(ThermoError::DegenerateSpectrum);
    }
    let lambda = [0.0, (-e - q) / 2.0, (-e + q) / 2.0];
    let q1 = e / (2.0 * q);
    let q2 = f / (k1 * q);
    let q3 = k3 * y[1] / k1;
    let l = Matrix3::new(
        1.0,
        1.0,
        1.0,
        q1 - 0.5,
        q1 - q2 - 0.5,
        q3 * (0.5 - q1),
        -q1 - 0.5,
        q2 - q1 - 0.5,
        q3 * (q1 + 0.5),
    );
    Ok(RobertsonEigen {
        lambda,
        l,
        e,
        f,
        q,
        q1,
        q2,
        q3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rhs_matches_reference_states() {
        let d = robertson_rhs(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(d, Vector3::new(-0.04, 0.04, 0.0));
        let d = robertson_rhs(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(d, Vector3::new(0.0, 0.0, 0.0));
        // Both reference states close exactly.
        assert_eq!(d.sum(), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let y = Vector3::new(0.95, 5e-6, 0.05);
        let j = robertson_jacobian(&y);
        for col in 0..3 {
            let h = (1e-7 * y[col].abs()).max(1e-12);
            let mut yp = y;
            let mut ym = y;
            yp[col] += h;
            ym[col] -= h;
            let fd = (robertson_rhs(&yp) - robertson_rhs(&ym)) / (2.0 * h);
            for row in 0..3 {
                assert_relative_eq!(
                    j[(row, col)],
                    fd[row],
                    max_relative = 1e-5,
                    epsilon = 1e-9
                );
            }
        }
        // Hand-differentiated entries at this state.
        assert_eq!(j[(0, 1)], 1e4 * 0.05);
        assert_eq!(j[(1, 1)], -2.0 * 3e7 * 5e-6 - 1e4 * 0.05);
        assert_eq!(j[(2, 1)], 2.0 * 3e7 * 5e-6);
        assert_eq!(j[(2, 2)], 0.0);
    }

    #[test]
    fn eigen_closed_form_matches_dense_solver() {
        for y in [
            Vector3::new(0.95, 5e-6, 0.05),
            Vector3::new(0.7, 2e-5, 0.3),
            Vector3::new(0.3, 3.6e-5, 0.6),
        ] {
            let eig = robertson_eigen(&y).unwrap();
            assert_eq!(eig.lambda[0], 0.0);
            assert!(eig.lambda[1] <= eig.lambda[2] && eig.lambda[2] <= 0.0);
            assert_eq!(eig.l.row(0).clone_owned(), nalgebra::RowVector3::new(1.0, 1.0, 1.0));

            let j = robertson_jacobian(&y);
            // Dense-solver oracle for the eigenvalues.
            let mut dense: Vec<f64> = j
                .complex_eigenvalues()
                .iter()
                .map(|c| {
                    assert!(c.im.abs() < 1e-12 * c.re.abs().max(1.0));
                    c.re
                })
                .collect();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut mine = eig.lambda;
            mine.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (m, d) in mine.iter().zip(&dense) {
                assert_relative_eq!(m, d, max_relative = 1e-8, epsilon = 1e-10);
            }

            // Left-eigenvector residuals, row by row.
            for k in 0..3 {
                let row = eig.l.row(k);
                let resid = row * j - row * eig.lambda[k];
                assert!(
                    resid.norm() <= 1e-8 * row.norm() * j.norm().max(1.0),
                    "row {k} residual {:e}",
                    resid.norm()
                );
            }
        }
    }

    #[test]
    fn complex_spectrum_is_an_error() {
        // E^2 - 4F < 0 near y_B = k1/(2 k2) with y_C = 0.
        let y = Vector3::new(0.5, 0.04 / (2.0 * 3e7), 0.0);
        let e = robertson_eigen(&y).unwrap_err();
        assert!(matches!(e, ThermoError::ComplexSpectrum { .. }));
    }

    proptest! {
        /// Mass closure of the right-hand side at the rounding floor on
        /// the physically reachable region (y_B stays below ~4e-5 on
        /// Robertson trajectories).
        #[test]
        fn rhs_components_sum_to_rounding_floor(
            ya in 0.0..1.0f64,
            yb in 0.0..4e-5f64,
            yc in 0.0..1.0f64,
        ) {
            let d = robertson_rhs(&Vector3::new(ya, yb, yc));
            let scale = d.abs().max().max(1e-3);
            prop_assert!(d.sum().abs() <= 4.0 * f64::EPSILON * scale);
        }

        /// Spectrum stays real and ordered on the physical region.
        #[test]
        fn spectrum_real_and_ordered_on_physical_region(
            ya in 0.0..1.0f64,
            yb in 1e-9..4e-5f64,
            yc in 1e-6..1.0f64,
        ) {
            let eig = eigen_with(&Vector3::new(ya, yb, yc), ROBERTSON_RATES);
            prop_assume!(eig.is_ok());
            let eig = eig.unwrap();
            prop_assert!(eig.lambda[1] <= eig.lambda[2]);
            prop_assert!(eig.lambda[2] <= 0.0);
        }
    }
}
