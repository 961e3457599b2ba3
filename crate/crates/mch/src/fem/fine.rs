//! Global fine-grid reference solve with homogeneous Dirichlet boundary.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::media::{MediumField, SourceField};
use crate::mesh::{CoarseLayout, NodalField, Region, SubGrid};

/// Q1 Galerkin solution on the global fine grid.
#[derive(Debug, Clone)]
pub struct FineSolution {
    pub field: NodalField,
    /// Relative algebraic residual of the interior system.
    pub residual: f64,
}

/// Whole-domain region of a layout.
pub fn global_region(layout: &CoarseLayout) -> Region {
    let cells = layout.fine_cells();
    Region {
        block_lo: [0, 0],
        block_hi: layout.blocks_per_dim,
        cell_lo: [0, 0],
        cell_hi: cells,
        clipped: false,
    }
}

/// Solve `-div(kappa grad u) = f` with `u = 0` on the boundary.
pub fn solve_fine_reference(
    layout: &CoarseLayout,
    medium: &MediumField,
    source: &SourceField,
) -> Result<FineSolution> {
    let region = global_region(layout);
    let grid = SubGrid::new(&region, 1)?;
    let [nx, ny] = grid.nodes();

    // interior numbering
    let mut interior = vec![usize::MAX; nx * ny];
    let mut count = 0;
    for iy in 1..ny - 1 {
        for ix in 1..nx - 1 {
            interior[iy * nx + ix] = count;
            count += 1;
        }
    }

    let h = layout.fine_h();
    let area = layout.cell_area();
    let ke_unit = crate::fem::q1::element_stiffness(h[0], h[1], 1.0);
    let cells = grid.cells();
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(cells[0] * cells[1] * 16);
    let mut rhs = vec![0.0f64; count];
    for cy in 0..cells[1] {
        for cx in 0..cells[0] {
            let kappa = medium.kappa_at(cx, cy);
            let load = source.at(cx, cy) * area / 4.0;
            let n0 = cy * nx + cx;
            let nodes = [n0, n0 + 1, n0 + nx, n0 + nx + 1];
            for i in 0..4 {
                let Some(&ri) = interior.get(nodes[i]).filter(|r| **r != usize::MAX) else {
                    continue;
                };
                rhs[ri] += load;
                for j in 0..4 {
                    let rj = interior[nodes[j]];
                    if rj != usize::MAX {
                        triplets.push(Triplet::new(ri, rj, kappa * ke_unit[i][j]));
                    }
                }
            }
        }
    }

    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(count, count, &triplets)
        .map_err(|e| Error::Solver(format!("fine assembly failed: {e:?}")))?;
    let chol = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Solver(format!("fine Cholesky breakdown: {e:?}")))?;
    let mut b = faer::Mat::<f64>::zeros(count, 1);
    for (i, v) in rhs.iter().enumerate() {
        b[(i, 0)] = *v;
    }
    let x = chol.solve(&b);

    // residual check
    let xv: Vec<f64> = (0..count).map(|i| x[(i, 0)]).collect();
    let mut r = rhs.clone();
    for t in triplets.iter() {
        r[t.row] -= t.val * xv[t.col];
    }
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
    if residual > 1e-10 {
        return Err(Error::Solver(format!(
            "fine solve residual {residual:.3e} exceeds 1e-10"
        )));
    }

    let mut values = vec![0.0; nx * ny];
    for (node, ri) in interior.iter().enumerate() {
        if *ri != usize::MAX {
            values[node] = xv[*ri];
        }
    }
    Ok(FineSolution {
        field: NodalField { grid, values },
        residual,
    })
}
