//! Axis-angle rotations: Rodrigues exponential and the left Jacobian of SO(3).

use nalgebra::{Matrix3, Vector3};

/// Below this angle the closed forms are replaced by their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Skew-symmetric cross-product matrix, `hat(a) * b == a.cross(&b)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector (Rodrigues formula).
pub fn exp(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle2 = theta.norm_squared();
    let k = hat(theta);
    let k2 = k * k;
    let (a, b) = if angle2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - angle2 / 6.0, 0.5 - angle2 / 24.0)
    } else {
        let angle = angle2.sqrt();
        (angle.sin() / angle, (1.0 - angle.cos()) / angle2)
    };
    Matrix3::identity() + k * a + k2 * b
}

/// Left Jacobian `J_l(theta)`, defined by `exp(theta + d) ~ exp(J_l d) exp(theta)`.
///
/// The derivative of `exp(theta)` along coordinate `c` is therefore
/// `hat(J_l e_c) * exp(theta)`.
pub fn left_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle2 = theta.norm_squared();
    let k = hat(theta);
    let k2 = k * k;
    let (a, b) = if angle2 < SMALL_ANGLE * SMALL_ANGLE {
        (0.5 - angle2 / 24.0, 1.0 / 6.0 - angle2 / 120.0)
    } else {
        let angle = angle2.sqrt();
        (
            (1.0 - angle.cos()) / angle2,
            (angle - angle.sin()) / (angle2 * angle),
        )
    };
    Matrix3::identity() + k * a + k2 * b
}

/// Axis-angle vector of a rotation matrix (inverse of [`exp`] for angles below pi).
pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let w = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if angle < SMALL_ANGLE {
        return w * 0.5;
    }
    if std::f64::consts::PI - angle < 1e-6 {
        // Near pi the antisymmetric part vanishes; read the axis off the symmetric part.
        let s = (r + Matrix3::identity()) * 0.5;
        let mut col = 0;
        for i in 1..3 {
            if s[(i, i)] > s[(col, col)] {
                col = i;
            }
        }
        let axis = s.column(col).into_owned().normalize();
        return axis * angle;
    }
    w * (angle / (2.0 * angle.sin()))
}

/// Rotation about a unit axis by an angle.
pub fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    exp(&(axis.normalize() * angle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn exp_matches_nalgebra() {
        let cases = [
            Vector3::new(0.3, -0.2, 1.1),
            Vector3::new(1e-8, 2e-8, -1e-9),
            Vector3::new(0.0, 0.0, std::f64::consts::PI),
            Vector3::new(-2.0, 0.5, 0.1),
        ];
        for theta in cases {
            let ours = exp(&theta);
            let theirs = Rotation3::new(theta).into_inner();
            assert!(max_abs(&(ours - theirs)) < 1e-12, "{theta:?}");
        }
    }

    #[test]
    fn log_inverts_exp() {
        for theta in [
            Vector3::new(0.3, -0.2, 1.1),
            Vector3::new(1e-9, 0.0, 0.0),
            Vector3::new(0.0, 3.0, 0.0),
        ] {
            let back = log(&exp(&theta));
            assert!((back - theta).norm() < 1e-9, "{theta:?} -> {back:?}");
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let h = 1e-6;
        for theta in [Vector3::new(0.4, -0.7, 0.2), Vector3::new(1e-9, -3e-9, 0.0)] {
            let r = exp(&theta);
            let jl = left_jacobian(&theta);
            for c in 0..3 {
                let mut e = Vector3::zeros();
                e[c] = h;
                let fd = (exp(&(theta + e)) - exp(&(theta - e))) / (2.0 * h);
                let analytic = hat(&(jl.column(c).into_owned())) * r;
                assert!(max_abs(&(fd - analytic)) < 1e-8);
            }
        }
    }
}
