//! Closed-form Q1 element integrals on axis-aligned rectangles.
//!
//! Local node order is (SW, SE, NW, NE). All integrals against a cellwise
//! constant coefficient are exact.

/// x-derivative part of the stiffness, in units of `(b/a) / 6`.
pub const KXX: [[f64; 4]; 4] = [
    [2.0, -2.0, 1.0, -1.0],
    [-2.0, 2.0, -1.0, 1.0],
    [1.0, -1.0, 2.0, -2.0],
    [-1.0, 1.0, -2.0, 2.0],
];

/// y-derivative part of the stiffness, in units of `(a/b) / 6`.
pub const KYY: [[f64; 4]; 4] = [
    [2.0, 1.0, -2.0, -1.0],
    [1.0, 2.0, -1.0, -2.0],
    [-2.0, -1.0, 2.0, 1.0],
    [-1.0, -2.0, 1.0, 2.0],
];

/// Element stiffness `kappa * int grad Ni . grad Nj` for a rectangle `a x b`.
pub fn element_stiffness(a: f64, b: f64, kappa: f64) -> [[f64; 4]; 4] {
    let (cx, cy) = (kappa * b / a / 6.0, kappa * a / b / 6.0);
    let mut k = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            k[i][j] = cx * KXX[i][j] + cy * KYY[i][j];
        }
    }
    k
}

/// Bilinear shape values at local coordinates `(tx, ty)` in `[0,1]^2`.
#[inline]
pub fn shape_values(tx: f64, ty: f64) -> [f64; 4] {
    [
        (1.0 - tx) * (1.0 - ty),
        tx * (1.0 - ty),
        (1.0 - tx) * ty,
        tx * ty,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_element_matches_textbook_values() {
        let k = element_stiffness(1.0, 1.0, 1.0);
        for i in 0..4 {
            assert!((k[i][i] - 2.0 / 3.0).abs() < 1e-15);
            let row_sum: f64 = k[i].iter().sum();
            assert!(row_sum.abs() < 1e-15);
        }
        // opposite corners
        assert!((k[0][3] + 1.0 / 3.0).abs() < 1e-15);
        assert!((k[1][2] + 1.0 / 3.0).abs() < 1e-15);
        // edge neighbors
        assert!((k[0][1] + 1.0 / 6.0).abs() < 1e-15);
        assert!((k[0][2] + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn element_is_symmetric_for_any_aspect() {
        let k = element_stiffness(0.25, 1.75, 3.5);
        for i in 0..4 {
            for j in 0..4 {
                assert!((k[i][j] - k[j][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_values_partition_unity() {
        let n = shape_values(0.3, 0.8);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(shape_values(0.0, 0.0)[0], 1.0);
        assert_eq!(shape_values(1.0, 1.0)[3], 1.0);
    }
}
