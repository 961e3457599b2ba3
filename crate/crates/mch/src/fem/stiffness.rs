//! Stiffness assembly over regions at any nesting level.

use crate::error::Result;
use crate::fem::csr::Csr;
use crate::fem::q1::element_stiffness;
use crate::media::MediumField;
use crate::mesh::{CoarseLayout, Region, SubGrid};

/// Assembled energy inner product `int kappa grad u . grad v` over a region.
///
/// At level `n > 1` the grid cells span `eta^(n-1)` fine cells and the
/// coefficient is the arithmetic average of the fine-cell values inside each
/// grid cell.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    pub grid: SubGrid,
    pub matrix: Csr,
}

impl StiffnessSystem {
    /// Energy product `u^T A v`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.matrix.bilinear(u, v)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.apply(u)
    }
}

/// Assemble the Q1 stiffness over `region` with cells of `step` fine cells
/// per side (`step = eta^(level-1)`).
pub fn assemble_stiffness(
    layout: &CoarseLayout,
    medium: &MediumField,
    region: &Region,
    step: usize,
) -> Result<StiffnessSystem> {
    let grid = SubGrid::new(region, step)?;
    let h = layout.fine_h();
    let (ax, ay) = (h[0] * step as f64, h[1] * step as f64);
    let cells = grid.cells();
    let [nx, _] = grid.nodes();
    let mut triplets = Vec::with_capacity(cells[0] * cells[1] * 16);
    let inv = 1.0 / (step * step) as f64;
    for gy in 0..cells[1] {
        for gx in 0..cells[0] {
            // average fine-cell coefficient inside this grid cell
            let mut kappa = 0.0;
            for sy in 0..step {
                for sx in 0..step {
                    let cx = grid.cell_origin[0] + gx * step + sx;
                    let cy = grid.cell_origin[1] + gy * step + sy;
                    kappa += medium.kappa_at(cx, cy);
                }
            }
            kappa *= inv;
            let ke = element_stiffness(ax, ay, kappa);
            let n0 = gy * nx + gx;
            let nodes = [n0, n0 + 1, n0 + nx, n0 + nx + 1];
            for i in 0..4 {
                for j in 0..4 {
                    triplets.push((nodes[i], nodes[j], ke[i][j]));
                }
            }
        }
    }
    Ok(StiffnessSystem {
        grid,
        matrix: Csr::from_triplets(grid.n_nodes(), grid.n_nodes(), &mut triplets),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{make_kappa, GeometrySpec};
    use crate::mesh::{block_region, build_coarse_layout, oversample_region, prolongate, BlockId, NodalField, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_are_in_the_kernel() {
        let l = build_coarse_layout(4, 5, Rect::UNIT).unwrap();
        let m = make_kappa(&l, &GeometrySpec::layered_default(&l), 0.5, 0).unwrap();
        let region = oversample_region(&l, BlockId::new(1, 2), 1).unwrap();
        let a = assemble_stiffness(&l, &m, &region, 1).unwrap();
        let ones = vec![1.0; a.grid.n_nodes()];
        let y = a.apply(&ones);
        let max = y.iter().cloned().fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max < 1e-13, "kernel defect {max}");
    }

    /// Dense per-element summation oracle on a small random-coefficient region.
    #[test]
    fn matches_dense_assembly_oracle() {
        let l = build_coarse_layout(3, 3, Rect::UNIT).unwrap();
        let mut m = make_kappa(&l, &GeometrySpec::Homogeneous, 1.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in m.kappa.iter_mut() {
            *k = rng.gen_range(0.1..10.0);
        }
        let region = block_region(&l, BlockId::new(1, 1));
        let a = assemble_stiffness(&l, &m, &region, 1).unwrap();
        let n = a.grid.n_nodes();
        let mut dense = vec![vec![0.0f64; n]; n];
        let h = l.fine_h();
        let [nx, _] = a.grid.nodes();
        for gy in 0..3 {
            for gx in 0..3 {
                let (cx, cy) = (a.grid.cell_origin[0] + gx, a.grid.cell_origin[1] + gy);
                let ke = element_stiffness(h[0], h[1], m.kappa_at(cx, cy));
                let n0 = gy * nx + gx;
                let nodes = [n0, n0 + 1, n0 + nx, n0 + nx + 1];
                for i in 0..4 {
                    for j in 0..4 {
                        dense[nodes[i]][nodes[j]] += ke[i][j];
                    }
                }
            }
        }
        for r in 0..n {
            let mut row = vec![0.0; n];
            for (c, v) in a.matrix.row(r) {
                row[c] = v;
            }
            for c in 0..n {
                assert!((row[c] - dense[r][c]).abs() < 1e-14);
            }
        }
    }

    /// Galerkin nesting: with a coefficient resolved on the coarser grid, the
    /// averaged-coefficient assembly agrees with testing prolongated coarse
    /// functions against the finer assembly.
    #[test]
    fn nested_assembly_consistency() {
        let l = build_coarse_layout(2, 8, Rect::UNIT).unwrap();
        let region = oversample_region(&l, BlockId::new(0, 0), 1).unwrap();
        let mut m = make_kappa(&l, &GeometrySpec::Homogeneous, 1.0, 0).unwrap();
        // kappa constant per level-2 (2x2 fine cell) patch
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cells = l.fine_cells();
        for py in 0..cells[1] / 2 {
            for px in 0..cells[0] / 2 {
                let k = rng.gen_range(0.5..5.0);
                for sy in 0..2 {
                    for sx in 0..2 {
                        let idx = (py * 2 + sy) * cells[0] + px * 2 + sx;
                        m.kappa[idx] = k;
                    }
                }
            }
        }
        let a_fine = assemble_stiffness(&l, &m, &region, 1).unwrap();
        let a_coarse = assemble_stiffness(&l, &m, &region, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = NodalField {
            grid: a_coarse.grid,
            values: (0..a_coarse.grid.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let v = NodalField {
            grid: a_coarse.grid,
            values: (0..a_coarse.grid.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let pu = prolongate(&u, a_fine.grid).unwrap();
        let pv = prolongate(&v, a_fine.grid).unwrap();
        let coarse_energy = a_coarse.energy(&u.values, &v.values);
        let fine_energy = a_fine.energy(&pu.values, &pv.values);
        assert!(
            (coarse_energy - fine_energy).abs() <= 1e-12 * fine_energy.abs().max(1.0),
            "coarse {coarse_energy} vs fine {fine_energy}"
        );
    }

    #[test]
    fn nesting_violation_rejected() {
        let l = build_coarse_layout(3, 5, Rect::UNIT).unwrap();
        let m = make_kappa(&l, &GeometrySpec::Homogeneous, 1.0, 0).unwrap();
        let region = block_region(&l, BlockId::new(0, 0));
        assert!(assemble_stiffness(&l, &m, &region, 2).is_err());
    }
}
