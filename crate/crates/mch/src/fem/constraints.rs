//! Per-block per-continuum constraint rows.
//!
//! Row `(q, j)` holds `int_{R_q} v psi_j` for each nodal basis function `v` of
//! the region's grid. Rows exist only for continua present in the block, and
//! the right-hand sides for the average (Eq. 3 type) and first-moment
//! (Eq. 4 type) families are built from exact cellwise integrals.

use crate::error::{Error, Result};
use crate::fem::csr::Csr;
use crate::fem::q1::shape_values;
use crate::media::MediumField;
use crate::mesh::{BlockId, CoarseLayout, Region, SubGrid};

/// Identity of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintRow {
    pub block: BlockId,
    /// 1-based continuum id.
    pub continuum: u8,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub grid: SubGrid,
    pub rows: Vec<ConstraintRow>,
    pub matrix: Csr,
    /// `int_{R_q} psi_j` per row (the measure of the block's continuum part).
    pub row_sums: Vec<f64>,
    /// `int_{R_q} x_m psi_j` per row and direction m.
    pub moments: [Vec<f64>; 2],
}

impl ConstraintSystem {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Average-family targets: `delta_ij int_{R_q} psi_j`.
    pub fn average_targets(&self, continuum: u8) -> Vec<f64> {
        self.rows
            .iter()
            .zip(self.row_sums.iter())
            .map(|(row, s)| if row.continuum == continuum { *s } else { 0.0 })
            .collect()
    }

    /// Moment-family targets: `delta_ij int_{R_q} (x_m - c) psi_j` with a
    /// single centering constant for the whole region.
    pub fn moment_targets(&self, continuum: u8, m: usize, center: f64) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                if row.continuum == continuum {
                    self.moments[m][r] - center * self.row_sums[r]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `C x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.apply(x)
    }

    /// Largest per-row residual `|C x - g|` scaled by the row sum.
    pub fn scaled_residual(&self, x: &[f64], g: &[f64]) -> f64 {
        let cx = self.apply(x);
        cx.iter()
            .zip(g.iter())
            .zip(self.row_sums.iter())
            .map(|((a, b), s)| (a - b).abs() / s.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Assemble the constraint rows of every block in `region` at grid `step`.
pub fn assemble_constraints(
    layout: &CoarseLayout,
    medium: &MediumField,
    region: &Region,
    step: usize,
) -> Result<ConstraintSystem> {
    let grid = SubGrid::new(region, step)?;
    let area = layout.cell_area();
    let [nx, _] = grid.nodes();
    let f = layout.fine_cells_per_block;

    let mut rows = Vec::new();
    let mut row_sums = Vec::new();
    let mut moments = [Vec::new(), Vec::new()];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    let mut scratch = vec![0.0f64; grid.n_nodes()];
    let mut touched: Vec<usize> = Vec::new();

    for block in region.blocks() {
        for j in 1..=medium.n_continua {
            let mut mass = 0.0;
            let mut mom = [0.0f64; 2];
            for t in touched.drain(..) {
                scratch[t] = 0.0;
            }
            for sy in 0..f[1] {
                for sx in 0..f[0] {
                    let (cx, cy) = (block.bx * f[0] + sx, block.by * f[1] + sy);
                    if medium.continuum_at(cx, cy) != j {
                        continue;
                    }
                    let center = layout.cell_center(cx, cy);
                    mass += area;
                    mom[0] += area * center[0];
                    mom[1] += area * center[1];
                    // coarse cell containing this fine cell, local midpoint coords
                    let (rx, ry) = (cx - grid.cell_origin[0], cy - grid.cell_origin[1]);
                    let (gx, gy) = (rx / step, ry / step);
                    let tx = ((rx % step) as f64 + 0.5) / step as f64;
                    let ty = ((ry % step) as f64 + 0.5) / step as f64;
                    let n = shape_values(tx, ty);
                    let n0 = gy * nx + gx;
                    for (w, node) in n.iter().zip([n0, n0 + 1, n0 + nx, n0 + nx + 1]) {
                        if scratch[node] == 0.0 {
                            touched.push(node);
                        }
                        scratch[node] += area * w;
                    }
                }
            }
            if mass == 0.0 {
                continue; // absent continuum: no row
            }
            let r = rows.len();
            rows.push(ConstraintRow { block, continuum: j });
            row_sums.push(mass);
            moments[0].push(mom[0]);
            moments[1].push(mom[1]);
            touched.sort_unstable();
            for &node in &touched {
                triplets.push((r, node, scratch[node]));
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::InvalidMedium(
            "no continuum present anywhere in the region".into(),
        ));
    }

    Ok(ConstraintSystem {
        grid,
        matrix: Csr::from_triplets(rows.len(), grid.n_nodes(), &mut triplets),
        rows,
        row_sums,
        moments,
    })
}

/// Moment targets for a requested (possibly absent) continuum, erroring per
/// the operation contract when the continuum is missing from the region.
pub fn require_continuum(system: &ConstraintSystem, continuum: u8) -> Result<()> {
    if system.rows.iter().any(|r| r.continuum == continuum) {
        Ok(())
    } else {
        Err(Error::AbsentContinuum {
            block: system.rows.first().map(|r| r.block).unwrap_or(BlockId::new(0, 0)),
            continuum,
        })
    }
}
