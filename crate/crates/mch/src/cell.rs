//! Constrained local cell problems and their hierarchical corrections.
//!
//! At a macropoint `x_p^*` the average-family solution `phi_i` minimizes the
//! energy over the oversampled region subject to per-block, per-continuum
//! average constraints, and the gradient family `phi_i^m` does the same with
//! first-moment targets centered at the macropoint's own block. Hierarchical
//! macropoints solve only a correction on a coarser nested grid and combine
//! it with an interpolant of already-computed level-1 solutions.

use crate::config::BoundaryCondition;
use crate::error::{Error, Result};
use crate::fem::constraints::{assemble_constraints, ConstraintSystem};
use crate::fem::csr::Csr;
use crate::fem::saddle::factor_saddle;
use crate::fem::stiffness::assemble_stiffness;
use crate::media::MediumField;
use crate::mesh::{prolongate, prolongate_transpose, BlockId, CoarseLayout, NodalField, Region, SubGrid};

/// Centering constants `c_{mj}` of one block: `c[j-1][m]` zeroes the first
/// moment of continuum `j` along direction `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centering {
    pub c: Vec<[f64; 2]>,
}

/// Continuum centroids of a block. Errors if a requested continuum is absent.
pub fn continuum_centroids(layout: &CoarseLayout, medium: &MediumField, block: BlockId) -> Result<Centering> {
    let mut c = Vec::with_capacity(medium.n_continua as usize);
    for j in 1..=medium.n_continua {
        c.push(block_centroid(layout, medium, block, j)?);
    }
    Ok(Centering { c })
}

/// Continuum centroids with the block center substituted for continua absent
/// from the block.
pub fn centering_with_fallback(layout: &CoarseLayout, medium: &MediumField, block: BlockId) -> Centering {
    let center = layout.block_center(block);
    let c = (1..=medium.n_continua)
        .map(|j| block_centroid(layout, medium, block, j).unwrap_or(center))
        .collect();
    Centering { c }
}

fn block_centroid(layout: &CoarseLayout, medium: &MediumField, block: BlockId, j: u8) -> Result<[f64; 2]> {
    let f = layout.fine_cells_per_block;
    let mut count = 0usize;
    let mut sum = [0.0f64; 2];
    for sy in 0..f[1] {
        for sx in 0..f[0] {
            let (cx, cy) = (block.bx * f[0] + sx, block.by * f[1] + sy);
            if medium.continuum_at(cx, cy) == j {
                let c = layout.cell_center(cx, cy);
                sum[0] += c[0];
                sum[1] += c[1];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::AbsentContinuum { block, continuum: j });
    }
    Ok([sum[0] / count as f64, sum[1] / count as f64])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellVariant {
    Full,
    Hierarchical,
}

/// Knobs shared by every cell solve.
#[derive(Debug, Clone, Copy)]
pub struct CellOptions {
    pub boundary: BoundaryCondition,
    /// Reproduce the literal gradient-correction right-hand side (the
    /// average-family gradient in place of the gradient-family one).
    pub grad_rhs_literal: bool,
    /// Interpolate parent gradient solutions without recentering them.
    pub naive_grad_interpolant: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            boundary: BoundaryCondition::Natural,
            grad_rhs_literal: false,
            naive_grad_interpolant: false,
        }
    }
}

/// Local solutions of one macropoint: all fields stored at the fine grid of
/// the region; hierarchical solves also retain the raw corrections at their
/// own level.
#[derive(Debug, Clone)]
pub struct LocalCellSolutions {
    pub macropoint: BlockId,
    pub level: usize,
    pub region: Region,
    pub centering: Centering,
    pub phi_avg: Vec<NodalField>,
    /// `phi_grad[i][m]`
    pub phi_grad: Vec<[NodalField; 2]>,
    pub xi_avg: Option<Vec<NodalField>>,
    pub xi_grad: Option<Vec<[NodalField; 2]>>,
    /// Energy `xi^T A_n xi` of each correction, zero for full solves.
    pub xi_energy_avg: Vec<f64>,
    pub xi_energy_grad: Vec<[f64; 2]>,
    pub multipliers_avg: Vec<Vec<f64>>,
    pub multipliers_grad: Vec<[Vec<f64>; 2]>,
    pub variant: CellVariant,
}

impl LocalCellSolutions {
    pub fn fine_grid(&self) -> SubGrid {
        self.phi_avg[0].grid
    }

    pub fn n_continua(&self) -> usize {
        self.phi_avg.len()
    }
}

/// Solve the full (Eq. 3 / Eq. 4 type) cell problems of one macropoint on its
/// oversampled region from the layout's layer rule.
pub fn solve_full_cell(
    layout: &CoarseLayout,
    medium: &MediumField,
    macropoint: BlockId,
    level: usize,
    step: usize,
    opts: &CellOptions,
) -> Result<LocalCellSolutions> {
    let region = crate::mesh::oversample_region(layout, macropoint, layout.oversample_layers)?;
    solve_full_cell_on_region(layout, medium, macropoint, level, step, &region, opts)
}

/// Full cell solve on an explicit region (the driver enlarges level-1
/// regions to cover all assigned children).
pub fn solve_full_cell_on_region(
    layout: &CoarseLayout,
    medium: &MediumField,
    macropoint: BlockId,
    level: usize,
    step: usize,
    region: &Region,
    opts: &CellOptions,
) -> Result<LocalCellSolutions> {
    let stiff = assemble_stiffness(layout, medium, region, step)?;
    let cons = assemble_constraints(layout, medium, region, step)?;
    let centering = centering_with_fallback(layout, medium, macropoint);
    let fine_grid = SubGrid::new(region, 1)?;

    let reduced = ReducedSystem::build(&stiff.matrix, &cons, stiff.grid, opts.boundary);
    let (ra, rc) = reduced.parts();
    let factor = factor_saddle(ra, rc)?;

    let n_c = medium.n_continua as usize;
    let zeros = vec![0.0; factor.n_primal()];
    let mut phi_avg = Vec::with_capacity(n_c);
    let mut multipliers_avg = Vec::with_capacity(n_c);
    for i in 1..=medium.n_continua {
        let g = cons.average_targets(i);
        let sol = reduced.solve(&factor, &zeros, &g)?;
        phi_avg.push(to_fine(&sol.0, stiff.grid, fine_grid)?);
        multipliers_avg.push(sol.1);
    }
    let mut phi_grad = Vec::with_capacity(n_c);
    let mut multipliers_grad = Vec::with_capacity(n_c);
    for i in 1..=medium.n_continua {
        let mut fields: Vec<NodalField> = Vec::with_capacity(2);
        let mut mults: Vec<Vec<f64>> = Vec::with_capacity(2);
        for m in 0..2 {
            let g = cons.moment_targets(i, m, centering.c[i as usize - 1][m]);
            let sol = reduced.solve(&factor, &zeros, &g)?;
            fields.push(to_fine(&sol.0, stiff.grid, fine_grid)?);
            mults.push(sol.1);
        }
        let [f0, f1]: [NodalField; 2] = fields.try_into().expect("two directions");
        let [m0, m1]: [Vec<f64>; 2] = mults.try_into().expect("two directions");
        phi_grad.push([f0, f1]);
        multipliers_grad.push([m0, m1]);
    }

    Ok(LocalCellSolutions {
        macropoint,
        level,
        region: *region,
        centering,
        xi_energy_avg: vec![0.0; n_c],
        xi_energy_grad: vec![[0.0; 2]; n_c],
        phi_avg,
        phi_grad,
        xi_avg: None,
        xi_grad: None,
        multipliers_avg,
        multipliers_grad,
        variant: CellVariant::Full,
    })
}

/// Interpolant of parent solutions at a child macropoint.
///
/// Average family: the weighted parent fields restricted to the child's
/// region. Gradient family: the same, recentered through the parent average
/// functions so targets stay anchored at the child's block (unless
/// `naive_grad_interpolant` is set).
pub struct Interpolant {
    pub avg: Vec<NodalField>,
    pub grad: Vec<[NodalField; 2]>,
}

pub fn interpolate_parents(
    child_centering: &Centering,
    parents: &[(&LocalCellSolutions, f64)],
    region: &Region,
    opts: &CellOptions,
) -> Result<Interpolant> {
    let weight_sum: f64 = parents.iter().map(|(_, w)| w).sum();
    if (weight_sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidLayout(format!(
            "interpolation weights sum to {weight_sum}, expected 1"
        )));
    }
    for (p, _) in parents {
        if !p.region.contains_region(region) {
            return Err(Error::InvalidLayout(format!(
                "parent ({},{}) region does not cover the child's oversampled region",
                p.macropoint.bx, p.macropoint.by
            )));
        }
    }
    let fine_grid = SubGrid::new(region, 1)?;
    let n_c = parents[0].0.n_continua();
    let mut avg = vec![NodalField::zeros(fine_grid); n_c];
    let mut grad = vec![[NodalField::zeros(fine_grid), NodalField::zeros(fine_grid)]; n_c];
    for (p, w) in parents {
        for i in 0..n_c {
            let pa = p.phi_avg[i].restrict_to(fine_grid)?;
            axpy(&mut avg[i].values, *w, &pa.values);
            for m in 0..2 {
                let pg = p.phi_grad[i][m].restrict_to(fine_grid)?;
                axpy(&mut grad[i][m].values, *w, &pg.values);
                if !opts.naive_grad_interpolant {
                    let dc = child_centering.c[i][m] - p.centering.c[i][m];
                    axpy(&mut grad[i][m].values, -w * dc, &pa.values);
                }
            }
        }
    }
    Ok(Interpolant { avg, grad })
}

/// Solve the correction problems of a hierarchical macropoint and combine
/// them with the parent interpolant.
pub fn solve_correction(
    layout: &CoarseLayout,
    medium: &MediumField,
    macropoint: BlockId,
    level: usize,
    step: usize,
    region: &Region,
    parents: &[(&LocalCellSolutions, f64)],
    opts: &CellOptions,
) -> Result<LocalCellSolutions> {
    let centering = centering_with_fallback(layout, medium, macropoint);
    let interp = interpolate_parents(&centering, parents, region, opts)?;

    let coarse = assemble_stiffness(layout, medium, region, step)?;
    let cons_n = assemble_constraints(layout, medium, region, step)?;
    let fine = assemble_stiffness(layout, medium, region, 1)?;
    let cons_f = assemble_constraints(layout, medium, region, 1)?;

    let reduced = ReducedSystem::build(&coarse.matrix, &cons_n, coarse.grid, opts.boundary);
    let (ra, rc) = reduced.parts();
    let factor = factor_saddle(ra, rc)?;

    let n_c = medium.n_continua as usize;
    let mut phi_avg = Vec::with_capacity(n_c);
    let mut xi_avg = Vec::with_capacity(n_c);
    let mut xi_energy_avg = Vec::with_capacity(n_c);
    let mut multipliers_avg = Vec::with_capacity(n_c);
    for i in 1..=medium.n_continua {
        let idx = i as usize - 1;
        let (rhs, g) = correction_data(
            &fine,
            &cons_f,
            &cons_f.average_targets(i),
            &interp.avg[idx],
            coarse.grid,
        )?;
        let sol = reduced.solve(&factor, &rhs, &g)?;
        xi_energy_avg.push(coarse.energy(&sol.0, &sol.0));
        let xi = NodalField {
            grid: coarse.grid,
            values: sol.0,
        };
        phi_avg.push(combine(&xi, &interp.avg[idx])?);
        xi_avg.push(xi);
        multipliers_avg.push(sol.1);
    }

    let mut phi_grad = Vec::with_capacity(n_c);
    let mut xi_grad = Vec::with_capacity(n_c);
    let mut xi_energy_grad = Vec::with_capacity(n_c);
    let mut multipliers_grad = Vec::with_capacity(n_c);
    for i in 1..=medium.n_continua {
        let idx = i as usize - 1;
        let mut fields = Vec::with_capacity(2);
        let mut xis = Vec::with_capacity(2);
        let mut energies = [0.0f64; 2];
        let mut mults = Vec::with_capacity(2);
        for m in 0..2 {
            let targets = cons_f.moment_targets(i, m, centering.c[idx][m]);
            // constraints always target the gradient interpolant
            let (rhs_grad, g) =
                correction_data(&fine, &cons_f, &targets, &interp.grad[idx][m], coarse.grid)?;
            // the literal text drives the gradient correction with the
            // average-family interpolant instead
            let rhs = if opts.grad_rhs_literal {
                correction_data(&fine, &cons_f, &targets, &interp.avg[idx], coarse.grid)?.0
            } else {
                rhs_grad
            };
            let sol = reduced.solve(&factor, &rhs, &g)?;
            energies[m] = coarse.energy(&sol.0, &sol.0);
            let xi = NodalField {
                grid: coarse.grid,
                values: sol.0,
            };
            fields.push(combine(&xi, &interp.grad[idx][m])?);
            xis.push(xi);
            mults.push(sol.1);
        }
        let [f0, f1]: [NodalField; 2] = fields.try_into().expect("two directions");
        let [x0, x1]: [NodalField; 2] = xis.try_into().expect("two directions");
        let [m0, m1]: [Vec<f64>; 2] = mults.try_into().expect("two directions");
        phi_grad.push([f0, f1]);
        xi_grad.push([x0, x1]);
        xi_energy_grad.push(energies);
        multipliers_grad.push([m0, m1]);
    }

    Ok(LocalCellSolutions {
        macropoint,
        level,
        region: *region,
        centering,
        phi_avg,
        phi_grad,
        xi_avg: Some(xi_avg),
        xi_grad: Some(xi_grad),
        xi_energy_avg,
        xi_energy_grad,
        multipliers_avg,
        multipliers_grad,
        variant: CellVariant::Hierarchical,
    })
}

/// Correction right-hand sides: the primal side is the fine-grid stiffness
/// action on the interpolant reduced onto coarse test functions, and the
/// constraint side is the full target minus the interpolant's fine-quadrature
/// constraint values.
fn correction_data(
    fine: &crate::fem::stiffness::StiffnessSystem,
    cons_f: &ConstraintSystem,
    targets: &[f64],
    interp: &NodalField,
    coarse_grid: SubGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let action = NodalField {
        grid: fine.grid,
        values: fine.apply(&interp.values),
    };
    let reduced = prolongate_transpose(&action, coarse_grid)?;
    let rhs: Vec<f64> = reduced.values.iter().map(|v| -v).collect();
    let cx = cons_f.apply(&interp.values);
    let g = targets.iter().zip(cx.iter()).map(|(t, v)| t - v).collect();
    Ok((rhs, g))
}

/// `prolongate(xi) + interpolant`, the combined local solution at the fine
/// grid. Linear in both inputs.
pub fn combine(xi: &NodalField, interpolant: &NodalField) -> Result<NodalField> {
    let mut out = prolongate(xi, interpolant.grid)?;
    for (o, v) in out.values.iter_mut().zip(interpolant.values.iter()) {
        *o += v;
    }
    Ok(out)
}

/// Largest fine-quadrature constraint residual over every stored field,
/// scaled per row by the block-continuum measure.
pub fn verify_constraints(
    layout: &CoarseLayout,
    medium: &MediumField,
    sol: &LocalCellSolutions,
) -> Result<f64> {
    let cons = assemble_constraints(layout, medium, &sol.region, 1)?;
    let mut worst = 0.0f64;
    for i in 1..=medium.n_continua {
        let idx = i as usize - 1;
        let g = cons.average_targets(i);
        worst = worst.max(cons.scaled_residual(&sol.phi_avg[idx].values, &g));
        for m in 0..2 {
            let g = cons.moment_targets(i, m, sol.centering.c[idx][m]);
            worst = worst.max(cons.scaled_residual(&sol.phi_grad[idx][m].values, &g));
        }
    }
    Ok(worst)
}

/// Energy `u^T A u` of a stored fine-grid field over the solve region.
pub fn fine_energy(layout: &CoarseLayout, medium: &MediumField, sol: &LocalCellSolutions, field: &NodalField) -> Result<f64> {
    let a = assemble_stiffness(layout, medium, &sol.region, 1)?;
    Ok(a.energy(&field.values, &field.values))
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x.iter()) {
        *a += alpha * b;
    }
}

fn to_fine(values: &[f64], grid: SubGrid, fine_grid: SubGrid) -> Result<NodalField> {
    let field = NodalField {
        grid,
        values: values.to_vec(),
    };
    if grid.step == 1 {
        Ok(field)
    } else {
        prolongate(&field, fine_grid)
    }
}

/// Saddle system with optional homogeneous Dirichlet condition on the region
/// boundary. Under the natural condition the assembled operators are used
/// as-is; under Dirichlet the boundary nodes are eliminated.
enum ReducedSystem<'s> {
    Natural {
        a: &'s Csr,
        c: &'s ConstraintSystem,
    },
    Dirichlet {
        a: Csr,
        c: ConstraintSystem,
        scatter: Vec<usize>,
        full_nodes: usize,
    },
}

impl<'s> ReducedSystem<'s> {
    fn build(a: &'s Csr, c: &'s ConstraintSystem, grid: SubGrid, bc: BoundaryCondition) -> ReducedSystem<'s> {
        match bc {
            BoundaryCondition::Natural => ReducedSystem::Natural { a, c },
            BoundaryCondition::Dirichlet => {
                let [nx, ny] = grid.nodes();
                let mut keep = vec![usize::MAX; nx * ny];
                let mut scatter = Vec::new();
                for iy in 1..ny - 1 {
                    for ix in 1..nx - 1 {
                        keep[iy * nx + ix] = scatter.len();
                        scatter.push(iy * nx + ix);
                    }
                }
                let n = scatter.len();
                let mut at = Vec::new();
                for r in 0..a.nrows {
                    if keep[r] == usize::MAX {
                        continue;
                    }
                    for (col, v) in a.row(r) {
                        if keep[col] != usize::MAX {
                            at.push((keep[r], keep[col], v));
                        }
                    }
                }
                let mut ct = Vec::new();
                for r in 0..c.n_rows() {
                    for (col, v) in c.matrix.row(r) {
                        if keep[col] != usize::MAX {
                            ct.push((r, keep[col], v));
                        }
                    }
                }
                ReducedSystem::Dirichlet {
                    a: Csr::from_triplets(n, n, &mut at),
                    c: ConstraintSystem {
                        grid: c.grid,
                        rows: c.rows.clone(),
                        matrix: Csr::from_triplets(c.n_rows(), n, &mut ct),
                        row_sums: c.row_sums.clone(),
                        moments: c.moments.clone(),
                    },
                    scatter,
                    full_nodes: a.nrows,
                }
            }
        }
    }

    fn parts(&self) -> (&Csr, &ConstraintSystem) {
        match self {
            ReducedSystem::Natural { a, c } => (a, c),
            ReducedSystem::Dirichlet { a, c, .. } => (a, c),
        }
    }

    fn solve(
        &self,
        factor: &crate::fem::saddle::SaddleFactor<'_>,
        rhs_primal: &[f64],
        g: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            ReducedSystem::Natural { .. } => {
                let s = factor.solve(rhs_primal, g)?;
                Ok((s.primal, s.multipliers))
            }
            ReducedSystem::Dirichlet { scatter, full_nodes, .. } => {
                let reduced_rhs: Vec<f64> = scatter.iter().map(|i| rhs_primal[*i]).collect();
                let s = factor.solve(&reduced_rhs, g)?;
                let mut full = vec![0.0; *full_nodes];
                for (r, node) in scatter.iter().enumerate() {
                    full[*node] = s.primal[r];
                }
                Ok((full, s.multipliers))
            }
        }
    }
}
