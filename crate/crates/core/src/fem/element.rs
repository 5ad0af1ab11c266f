/// Stiffness of a unit-square, unit-thickness bilinear quad in plane stress
/// with unit Young's modulus.
///
/// DOF order is `[u1x, u1y, u2x, u2y, u3x, u3y, u4x, u4y]` with nodes
/// counterclockwise from the lower-left corner. The result is exact: for a
/// rectangular element the 2×2 Gauss rule integrates `BᵀDB` exactly, and the
/// closed form below is that integral.
pub fn element_stiffness(nu: f64) -> [[f64; 8]; 8] {
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for (i, row) in PATTERN.iter().enumerate() {
        for (j, &idx) in row.iter().enumerate() {
            ke[i][j] = scale * k[idx];
        }
    }
    ke
}

/// `uᵀ·KE·u` for one element.
#[inline]
pub(crate) fn element_energy(ke: &[[f64; 8]; 8], ue: &[f64; 8]) -> f64 {
    let mut e = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += ke[i][j] * ue[j];
        }
        e += ue[i] * row;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_for_any_nu() {
        for nu in [0.0, 0.1, 0.3, 0.45, 0.499] {
            let ke = element_stiffness(nu);
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(ke[i][j], ke[j][i]);
                }
            }
        }
    }

    #[test]
    fn rigid_translations_are_null() {
        let ke = element_stiffness(0.3);
        for v in [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        ] {
            for row in &ke {
                let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!(s.abs() < 1e-12);
            }
        }
        // infinitesimal rotation about the element center: u = (-y, x)
        let xy = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
        let mut rot = [0.0; 8];
        for (n, &(x, y)) in xy.iter().enumerate() {
            rot[2 * n] = -y;
            rot[2 * n + 1] = x;
        }
        assert!(element_energy(&ke, &rot).abs() < 1e-12);
    }
}
