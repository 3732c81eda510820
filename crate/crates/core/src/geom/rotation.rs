//! Rotation normalization: the proper rotation taking a unit direction to
//! the fixed target axis (1, 0, 0).

use super::{Mat3, Point3};
use crate::error::{Error, Result};

/// Target direction every estimated projection direction is rotated to.
pub const TARGET_DIRECTION: Point3 = Point3::new(1.0, 0.0, 0.0);

/// Cosine threshold below which the antipodal branch is taken; the plain
/// Rodrigues form loses precision as 1/(1 + cos) blows up.
const ANTIPODAL_COS: f64 = -1.0 + 1e-6;

/// Proper rotation R with R * n = (1, 0, 0).
///
/// For n away from -(1,0,0) this is the minimal-angle rotation about
/// n x (1,0,0). The antipodal case (and a small guard band around it) is
/// resolved by first rotating pi about the fixed axis (0,0,1), keeping the
/// result deterministic and well conditioned.
pub fn rotation_to_target(n: Point3) -> Result<Mat3> {
    if !n.is_finite() || (n.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::DirectionNotNormalized);
    }
    let cos = n.x;
    if cos < ANTIPODAL_COS {
        let flip = Mat3::diag(-1.0, -1.0, 1.0); // pi about (0,0,1)
        let flipped = flip.mul_vec(n);
        return Ok(minimal_rotation(flipped).mul_mat(&flip));
    }
    Ok(minimal_rotation(n))
}

/// Rodrigues rotation taking `n` to (1,0,0); requires n.x > -1 + 1e-6.
fn minimal_rotation(n: Point3) -> Mat3 {
    // axis = n x (1,0,0) = (0, n.z, -n.y), |axis| = sin(theta), cos(theta) = n.x
    let ay = n.z;
    let az = -n.y;
    let k = Mat3::from_rows([0.0, -az, ay], [az, 0.0, 0.0], [-ay, 0.0, 0.0]);
    let k2 = k.mul_mat(&k);
    let f = 1.0 / (1.0 + n.x);
    let mut rows = [[0.0; 3]; 3];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let id = if i == j { 1.0 } else { 0.0 };
            *cell = id + k.rows[i][j] + k2.rows[i][j] * f;
        }
    }
    Mat3 { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn assert_proper(r: &Mat3, n: Point3) {
        assert!(r.orthonormality_error() < 1e-9, "R^T R != I");
        assert!((r.det() - 1.0).abs() < 1e-9, "det != 1");
        assert!(r.mul_vec(n).dist(TARGET_DIRECTION) < 1e-9, "R n != target");
    }

    #[test]
    fn target_direction_maps_to_identity() {
        let r = rotation_to_target(TARGET_DIRECTION).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r.rows[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn y_axis_rotates_about_z() {
        let n = Point3::new(0.0, 1.0, 0.0);
        let r = rotation_to_target(n).unwrap();
        assert_proper(&r, n);
    }

    #[test]
    fn antipodal_uses_z_flip() {
        let n = Point3::new(-1.0, 0.0, 0.0);
        let r = rotation_to_target(n).unwrap();
        assert_proper(&r, n);
        let expect = Mat3::diag(-1.0, -1.0, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.rows[i][j] - expect.rows[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_unit_directions_give_proper_rotations() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let Some(n) = n.normalized() else { continue };
            let r = rotation_to_target(n).unwrap();
            assert_proper(&r, n);
        }
    }

    #[test]
    fn near_antipodal_stays_accurate() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let eps = 10f64.powf(rng.random_range(-12.0..-3.0));
            let n = Point3::new(-1.0, eps * rng.random_range(-1.0..1.0), eps)
                .normalized()
                .unwrap();
            let r = rotation_to_target(n).unwrap();
            assert_proper(&r, n);
        }
    }

    #[test]
    fn non_unit_input_rejected() {
        let err = rotation_to_target(Point3::new(0.5, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DirectionNotNormalized));
    }

    proptest::proptest! {
        #[test]
        fn proper_rotation_property(
            x in -1.0f64..1.0,
            y in -1.0f64..1.0,
            z in -1.0f64..1.0,
        ) {
            proptest::prop_assume!(Point3::new(x, y, z).norm() > 1e-3);
            let n = Point3::new(x, y, z).normalized().unwrap();
            let r = rotation_to_target(n).unwrap();
            proptest::prop_assert!(r.orthonormality_error() < 1e-9);
            proptest::prop_assert!((r.det() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(r.mul_vec(n).dist(TARGET_DIRECTION) < 1e-9);
        }
    }
}
