//! Structured rectangular grids: the coarse block layout, oversampled
//! regions, nested macrogrid hierarchies and nodal transfer operators.
//!
//! The domain is split into `blocks_per_dim` coarse blocks per direction,
//! each block into `fine_cells_per_block` fine cells per direction. Every
//! coarse block is an exact union of fine cells, so the constraint integrals
//! assembled elsewhere are quadrature-exact. Coarser finite element levels
//! use cells of `eta^(level-1)` fine cells per side on the same node lattice.

use crate::error::{Error, Result};

/// Axis-aligned rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub origin: [f64; 2],
    pub extent: [f64; 2],
}

impl Rect {
    pub const UNIT: Rect = Rect {
        origin: [0.0, 0.0],
        extent: [1.0, 1.0],
    };
}

/// Index of a coarse block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub bx: usize,
    pub by: usize,
}

impl BlockId {
    pub fn new(bx: usize, by: usize) -> Self {
        BlockId { bx, by }
    }
}

/// Coarse/fine grid layout over a rectangular domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseLayout {
    pub domain: Rect,
    pub blocks_per_dim: [usize; 2],
    pub fine_cells_per_block: [usize; 2],
    pub oversample_layers: usize,
}

impl CoarseLayout {
    /// Coarse mesh size per direction.
    pub fn coarse_h(&self) -> [f64; 2] {
        [
            self.domain.extent[0] / self.blocks_per_dim[0] as f64,
            self.domain.extent[1] / self.blocks_per_dim[1] as f64,
        ]
    }

    /// Fine mesh size per direction.
    pub fn fine_h(&self) -> [f64; 2] {
        let h = self.coarse_h();
        [
            h[0] / self.fine_cells_per_block[0] as f64,
            h[1] / self.fine_cells_per_block[1] as f64,
        ]
    }

    /// Global fine-cell counts.
    pub fn fine_cells(&self) -> [usize; 2] {
        [
            self.blocks_per_dim[0] * self.fine_cells_per_block[0],
            self.blocks_per_dim[1] * self.fine_cells_per_block[1],
        ]
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks_per_dim[0] * self.blocks_per_dim[1]
    }

    /// Linear block id, `by` major.
    pub fn block_index(&self, b: BlockId) -> usize {
        b.by * self.blocks_per_dim[0] + b.bx
    }

    pub fn block_at(&self, index: usize) -> BlockId {
        BlockId::new(index % self.blocks_per_dim[0], index / self.blocks_per_dim[0])
    }

    /// Iterate blocks in linear order.
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        (0..self.n_blocks()).map(|i| self.block_at(i))
    }

    pub fn contains_block(&self, b: BlockId) -> bool {
        b.bx < self.blocks_per_dim[0] && b.by < self.blocks_per_dim[1]
    }

    /// Center of a coarse block (the macropoint attached to it).
    pub fn block_center(&self, b: BlockId) -> [f64; 2] {
        let h = self.coarse_h();
        [
            self.domain.origin[0] + (b.bx as f64 + 0.5) * h[0],
            self.domain.origin[1] + (b.by as f64 + 0.5) * h[1],
        ]
    }

    /// Center coordinates of a global fine cell.
    pub fn cell_center(&self, cx: usize, cy: usize) -> [f64; 2] {
        let h = self.fine_h();
        [
            self.domain.origin[0] + (cx as f64 + 0.5) * h[0],
            self.domain.origin[1] + (cy as f64 + 0.5) * h[1],
        ]
    }

    /// Area of one fine cell.
    pub fn cell_area(&self) -> f64 {
        let h = self.fine_h();
        h[0] * h[1]
    }

    /// Oversampling layer count from the `ceil(-2 ln H)` rule, clipped at 0.
    pub fn default_oversample_layers(blocks_per_dim: usize) -> usize {
        let h = 1.0 / blocks_per_dim as f64;
        (-2.0 * h.ln()).ceil().max(0.0) as usize
    }
}

/// Build a square layout: `H = 1/blocks_per_dim`, `h = H/fine_cells_per_block`,
/// oversampling layers from the `ceil(-2 ln H)` rule.
pub fn build_coarse_layout(
    blocks_per_dim: usize,
    fine_cells_per_block: usize,
    domain: Rect,
) -> Result<CoarseLayout> {
    if blocks_per_dim == 0 || fine_cells_per_block == 0 {
        return Err(Error::InvalidLayout(format!(
            "block and cell counts must be positive, got {blocks_per_dim} blocks x {fine_cells_per_block} cells"
        )));
    }
    if domain.extent[0] <= 0.0 || domain.extent[1] <= 0.0 {
        return Err(Error::InvalidLayout("domain extents must be positive".into()));
    }
    Ok(CoarseLayout {
        domain,
        blocks_per_dim: [blocks_per_dim; 2],
        fine_cells_per_block: [fine_cells_per_block; 2],
        oversample_layers: CoarseLayout::default_oversample_layers(blocks_per_dim),
    })
}

/// Contiguous rectangle of whole coarse blocks, with its fine-cell window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    /// Block range `[bx0, bx1) x [by0, by1)`.
    pub block_lo: [usize; 2],
    pub block_hi: [usize; 2],
    /// Fine-cell range `[cx0, cx1) x [cy0, cy1)`, consistent with the blocks.
    pub cell_lo: [usize; 2],
    pub cell_hi: [usize; 2],
    /// Whether clipping at the domain boundary truncated the request.
    pub clipped: bool,
}

impl Region {
    pub fn block_counts(&self) -> [usize; 2] {
        [
            self.block_hi[0] - self.block_lo[0],
            self.block_hi[1] - self.block_lo[1],
        ]
    }

    pub fn n_blocks(&self) -> usize {
        let c = self.block_counts();
        c[0] * c[1]
    }

    pub fn cell_counts(&self) -> [usize; 2] {
        [self.cell_hi[0] - self.cell_lo[0], self.cell_hi[1] - self.cell_lo[1]]
    }

    pub fn contains_block(&self, b: BlockId) -> bool {
        b.bx >= self.block_lo[0] && b.bx < self.block_hi[0] && b.by >= self.block_lo[1] && b.by < self.block_hi[1]
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.block_lo[0] <= other.block_lo[0]
            && self.block_lo[1] <= other.block_lo[1]
            && self.block_hi[0] >= other.block_hi[0]
            && self.block_hi[1] >= other.block_hi[1]
    }

    /// Blocks of the region in linear (`by` major) order.
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        let (lo, hi) = (self.block_lo, self.block_hi);
        (lo[1]..hi[1]).flat_map(move |by| (lo[0]..hi[0]).map(move |bx| BlockId::new(bx, by)))
    }

    pub fn union(&self, other: &Region) -> Region {
        Region {
            block_lo: [
                self.block_lo[0].min(other.block_lo[0]),
                self.block_lo[1].min(other.block_lo[1]),
            ],
            block_hi: [
                self.block_hi[0].max(other.block_hi[0]),
                self.block_hi[1].max(other.block_hi[1]),
            ],
            cell_lo: [
                self.cell_lo[0].min(other.cell_lo[0]),
                self.cell_lo[1].min(other.cell_lo[1]),
            ],
            cell_hi: [
                self.cell_hi[0].max(other.cell_hi[0]),
                self.cell_hi[1].max(other.cell_hi[1]),
            ],
            clipped: self.clipped || other.clipped,
        }
    }
}

/// Region of a single block.
pub fn block_region(layout: &CoarseLayout, block: BlockId) -> Region {
    oversample_region(layout, block, 0).expect("zero layers cannot fail on a valid block")
}

/// Extend a block by `layers` blocks on each side, clipped to the domain.
pub fn oversample_region(layout: &CoarseLayout, block: BlockId, layers: usize) -> Result<Region> {
    if !layout.contains_block(block) {
        return Err(Error::InvalidLayout(format!(
            "block ({},{}) outside the {}x{} layout",
            block.bx, block.by, layout.blocks_per_dim[0], layout.blocks_per_dim[1]
        )));
    }
    let nb = layout.blocks_per_dim;
    let lo = [
        block.bx.saturating_sub(layers),
        block.by.saturating_sub(layers),
    ];
    let hi = [
        (block.bx + 1 + layers).min(nb[0]),
        (block.by + 1 + layers).min(nb[1]),
    ];
    let clipped = block.bx < layers
        || block.by < layers
        || block.bx + 1 + layers > nb[0]
        || block.by + 1 + layers > nb[1];
    let f = layout.fine_cells_per_block;
    Ok(Region {
        block_lo: lo,
        block_hi: hi,
        cell_lo: [lo[0] * f[0], lo[1] * f[1]],
        cell_hi: [hi[0] * f[0], hi[1] * f[1]],
        clipped,
    })
}

/// Node lattice of a region at some coarsening step.
///
/// `step` is the number of fine cells per grid cell (`eta^(level-1)`); nodes
/// sit on the fine lattice so grids of different steps over the same region
/// are nested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubGrid {
    /// Fine-cell origin of the region.
    pub cell_origin: [usize; 2],
    /// Fine-cell counts of the region.
    pub fine_cells: [usize; 2],
    /// Fine cells per grid cell in each direction.
    pub step: usize,
}

impl SubGrid {
    pub fn new(region: &Region, step: usize) -> Result<SubGrid> {
        let counts = region.cell_counts();
        if step == 0 || counts[0] % step != 0 || counts[1] % step != 0 {
            return Err(Error::Divisibility(format!(
                "region of {}x{} fine cells is not divisible by step {step}",
                counts[0], counts[1]
            )));
        }
        Ok(SubGrid {
            cell_origin: region.cell_lo,
            fine_cells: counts,
            step,
        })
    }

    /// Grid cells per direction at this step.
    pub fn cells(&self) -> [usize; 2] {
        [self.fine_cells[0] / self.step, self.fine_cells[1] / self.step]
    }

    /// Nodes per direction.
    pub fn nodes(&self) -> [usize; 2] {
        let c = self.cells();
        [c[0] + 1, c[1] + 1]
    }

    pub fn n_nodes(&self) -> usize {
        let n = self.nodes();
        n[0] * n[1]
    }

    /// Linear node index, `iy` major.
    #[inline]
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes()[0] + ix
    }

    /// Physical coordinates of a node.
    pub fn node_coord(&self, layout: &CoarseLayout, ix: usize, iy: usize) -> [f64; 2] {
        let h = layout.fine_h();
        [
            layout.domain.origin[0] + (self.cell_origin[0] + ix * self.step) as f64 * h[0],
            layout.domain.origin[1] + (self.cell_origin[1] + iy * self.step) as f64 * h[1],
        ]
    }

    /// Linear index of the node shared with a finer grid of step `self.step / eta`.
    pub fn is_nested_refinement_of(&self, coarser: &SubGrid) -> bool {
        self.cell_origin == coarser.cell_origin
            && self.fine_cells == coarser.fine_cells
            && coarser.step % self.step == 0
    }
}

/// Nodal scalar field on a [`SubGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub grid: SubGrid,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(grid: SubGrid) -> Self {
        NodalField {
            values: vec![0.0; grid.n_nodes()],
            grid,
        }
    }

    pub fn from_fn(grid: SubGrid, layout: &CoarseLayout, f: impl Fn(f64, f64) -> f64) -> Self {
        let [nx, ny] = grid.nodes();
        let mut values = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let [x, y] = grid.node_coord(layout, ix, iy);
                values.push(f(x, y));
            }
        }
        NodalField { grid, values }
    }

    /// Restrict to a sub-window by nodal injection. The target grid must use
    /// the same step and align with this grid's node lattice.
    pub fn restrict_to(&self, target: SubGrid) -> Result<NodalField> {
        if target.step != self.grid.step {
            return Err(Error::DimensionMismatch(
                "nodal restriction requires matching steps".into(),
            ));
        }
        let off = [
            target.cell_origin[0].checked_sub(self.grid.cell_origin[0]),
            target.cell_origin[1].checked_sub(self.grid.cell_origin[1]),
        ];
        let (Some(ox), Some(oy)) = (off[0], off[1]) else {
            return Err(Error::DimensionMismatch("restriction window outside source grid".into()));
        };
        if ox % self.grid.step != 0
            || oy % self.grid.step != 0
            || target.cell_origin[0] + target.fine_cells[0] > self.grid.cell_origin[0] + self.grid.fine_cells[0]
            || target.cell_origin[1] + target.fine_cells[1] > self.grid.cell_origin[1] + self.grid.fine_cells[1]
        {
            return Err(Error::DimensionMismatch("restriction window outside source grid".into()));
        }
        let (ox, oy) = (ox / self.grid.step, oy / self.grid.step);
        let [tnx, tny] = target.nodes();
        let mut values = Vec::with_capacity(tnx * tny);
        for iy in 0..tny {
            for ix in 0..tnx {
                values.push(self.values[self.grid.node_index(ix + ox, iy + oy)]);
            }
        }
        Ok(NodalField { grid: target, values })
    }
}

/// Bilinear prolongation from a coarse grid (step `eta * target_step`) onto
/// the nested finer grid over the same region.
///
/// Shared nodes are injected exactly; intermediate nodes are interpolated, so
/// constants and linear functions are reproduced to machine precision and
/// repeated application composes.
pub fn prolongate(coarse: &NodalField, target: SubGrid) -> Result<NodalField> {
    let cg = coarse.grid;
    if !target.is_nested_refinement_of(&cg) || cg.step % target.step != 0 {
        return Err(Error::DimensionMismatch(format!(
            "grids are not nested: coarse step {} over {:?} cells, target step {}",
            cg.step, cg.fine_cells, target.step
        )));
    }
    let eta = cg.step / target.step;
    let [nx, ny] = target.nodes();
    let [cnx, cny] = cg.nodes();
    let mut values = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        let (jy, ry) = (iy / eta, iy % eta);
        for ix in 0..nx {
            let (jx, rx) = (ix / eta, ix % eta);
            if rx == 0 && ry == 0 {
                values.push(coarse.values[cg.node_index(jx, jy)]);
                continue;
            }
            let tx = rx as f64 / eta as f64;
            let ty = ry as f64 / eta as f64;
            let jx1 = (jx + 1).min(cnx - 1);
            let jy1 = (jy + 1).min(cny - 1);
            let v00 = coarse.values[cg.node_index(jx, jy)];
            let v10 = coarse.values[cg.node_index(jx1, jy)];
            let v01 = coarse.values[cg.node_index(jx, jy1)];
            let v11 = coarse.values[cg.node_index(jx1, jy1)];
            values.push(
                v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty,
            );
        }
    }
    Ok(NodalField { grid: target, values })
}

/// Transpose of [`prolongate`]: scatter fine-grid nodal weights back onto the
/// coarse nodes. Used to reduce fine-grid residuals against coarse test
/// functions.
pub fn prolongate_transpose(fine: &NodalField, coarse_grid: SubGrid) -> Result<NodalField> {
    let fg = fine.grid;
    if !fg.is_nested_refinement_of(&coarse_grid) || coarse_grid.step % fg.step != 0 {
        return Err(Error::DimensionMismatch("grids are not nested".into()));
    }
    let eta = coarse_grid.step / fg.step;
    let [nx, ny] = fg.nodes();
    let [cnx, cny] = coarse_grid.nodes();
    let mut out = vec![0.0; cnx * cny];
    for iy in 0..ny {
        let (jy, ry) = (iy / eta, iy % eta);
        for ix in 0..nx {
            let (jx, rx) = (ix / eta, ix % eta);
            let v = fine.values[fg.node_index(ix, iy)];
            if v == 0.0 {
                continue;
            }
            let tx = rx as f64 / eta as f64;
            let ty = ry as f64 / eta as f64;
            let jx1 = (jx + 1).min(cnx - 1);
            let jy1 = (jy + 1).min(cny - 1);
            out[jy * cnx + jx] += v * (1.0 - tx) * (1.0 - ty);
            if rx != 0 {
                out[jy * cnx + jx1] += v * tx * (1.0 - ty);
            }
            if ry != 0 {
                out[jy1 * cnx + jx] += v * (1.0 - tx) * ty;
            }
            if rx != 0 && ry != 0 {
                out[jy1 * cnx + jx1] += v * tx * ty;
            }
        }
    }
    Ok(NodalField {
        grid: coarse_grid,
        values: out,
    })
}

/// Nested macrogrid hierarchy.
///
/// `T_n` grids have block spacing `eta^(L-n)`, each realized by an existing
/// block of the finest level; `S_n` are the per-level disjoint sets with
/// `S_1 = T_1` and `S_n = T_n \ T_{n-1}`. Every `S_n` point with `n > 1`
/// carries a weighted parent list (currently the single nearest `S_1` point).
#[derive(Debug, Clone)]
pub struct MacroHierarchy {
    pub eta: usize,
    pub levels: usize,
    /// Per-dimension offsets of each `T_n` grid, `n = 1..=L`.
    pub offsets: Vec<[usize; 2]>,
    /// Level assignment of every block (values `1..=L`), linear block order.
    pub level_of: Vec<u8>,
    /// Parent list per block (empty for level-1 points), linear block order.
    pub parents: Vec<Vec<(BlockId, f64)>>,
    blocks_per_dim: [usize; 2],
}

impl MacroHierarchy {
    /// Blocks of the disjoint level set `S_n` (1-based), linear order.
    pub fn level_set(&self, n: usize) -> Vec<BlockId> {
        assert!(n >= 1 && n <= self.levels);
        self.level_of
            .iter()
            .enumerate()
            .filter(|(_, l)| **l as usize == n)
            .map(|(i, _)| BlockId::new(i % self.blocks_per_dim[0], i / self.blocks_per_dim[0]))
            .collect()
    }

    /// Blocks of the nested grid `T_n = S_1 U ... U S_n`.
    pub fn tier(&self, n: usize) -> Vec<BlockId> {
        assert!(n >= 1 && n <= self.levels);
        self.level_of
            .iter()
            .enumerate()
            .filter(|(_, l)| (**l as usize) <= n)
            .map(|(i, _)| BlockId::new(i % self.blocks_per_dim[0], i / self.blocks_per_dim[0]))
            .collect()
    }

    pub fn level(&self, layout: &CoarseLayout, b: BlockId) -> usize {
        self.level_of[layout.block_index(b)] as usize
    }

    pub fn parents_of(&self, layout: &CoarseLayout, b: BlockId) -> &[(BlockId, f64)] {
        &self.parents[layout.block_index(b)]
    }

    /// One line per macropoint: `level bx by [parent_bx parent_by weight]...`
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, level) in self.level_of.iter().enumerate() {
            let b = BlockId::new(i % self.blocks_per_dim[0], i / self.blocks_per_dim[0]);
            out.push_str(&format!("{} {} {}", level, b.bx, b.by));
            for (p, w) in &self.parents[i] {
                out.push_str(&format!(" {} {} {:.17e}", p.bx, p.by, w));
            }
            out.push('\n');
        }
        out
    }
}

/// Build the nested macrogrid hierarchy for a layout.
///
/// The `T_n` grids are chosen inductively from the finest level down: within
/// each level-`n` agglomerate the `T_{n+1}` point nearest the agglomerate
/// center is kept, ties to the smaller index. This keeps `T_n` a subset of
/// `T_{n+1}` and places a macropoint inside every coarser block.
pub fn build_hierarchy(layout: &CoarseLayout, eta: usize, levels: usize) -> Result<MacroHierarchy> {
    if levels == 0 {
        return Err(Error::InvalidLayout("hierarchy needs at least one level".into()));
    }
    if levels > 1 && eta < 2 {
        return Err(Error::InvalidLayout(format!(
            "coarsening factor must be >= 2, got {eta}"
        )));
    }
    let nb = layout.blocks_per_dim;
    let span = eta.pow(levels as u32 - 1);
    if nb[0] % span != 0 || nb[1] % span != 0 {
        return Err(Error::Divisibility(format!(
            "eta^(L-1) = {span} must divide blocks_per_dim = {}x{}",
            nb[0], nb[1]
        )));
    }

    // Per-dimension offsets, finest to coarsest. The spacing at level n is
    // eta^(L-n) blocks.
    let mut offsets = vec![[0usize; 2]; levels + 1]; // 1-based
    offsets[levels] = [0, 0];
    for n in (1..levels).rev() {
        let s_n = eta.pow((levels - n) as u32);
        let s_next = s_n / eta;
        let prev = offsets[n + 1];
        let mut o_n = [0usize; 2];
        for dim in 0..2 {
            let center = s_n as f64 / 2.0;
            let mut best_k = 0usize;
            let mut best_d = f64::INFINITY;
            for k in 0..eta {
                let pos = prev[dim] as f64 + (k * s_next) as f64 + 0.5;
                let d = (pos - center).abs();
                if d < best_d - 1e-12 {
                    best_d = d;
                    best_k = k;
                }
            }
            o_n[dim] = prev[dim] + best_k * s_next;
        }
        offsets[n] = o_n;
    }
    let offsets: Vec<[usize; 2]> = offsets[1..].to_vec();

    // Level of each block: the smallest n with the block on the T_n lattice.
    let on_tier = |b: BlockId, n: usize| -> bool {
        let s = eta.pow((levels - n) as u32);
        let o = offsets[n - 1];
        (b.bx >= o[0] && (b.bx - o[0]) % s == 0) && (b.by >= o[1] && (b.by - o[1]) % s == 0)
    };
    let mut level_of = vec![0u8; layout.n_blocks()];
    for i in 0..layout.n_blocks() {
        let b = layout.block_at(i);
        for n in 1..=levels {
            if on_tier(b, n) {
                level_of[i] = n as u8;
                break;
            }
        }
        debug_assert!(level_of[i] >= 1);
    }

    // Nearest level-1 parent, weight 1; ties broken by linear block id.
    let s1: Vec<BlockId> = level_of
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == 1)
        .map(|(i, _)| layout.block_at(i))
        .collect();
    let h = layout.coarse_h();
    let mut parents = vec![Vec::new(); layout.n_blocks()];
    for i in 0..layout.n_blocks() {
        if level_of[i] == 1 {
            continue;
        }
        let b = layout.block_at(i);
        let c = layout.block_center(b);
        let tol = 1e-12 * (h[0] * h[0] + h[1] * h[1]);
        let mut best: Option<(f64, usize, BlockId)> = None;
        for t in &s1 {
            let tc = layout.block_center(*t);
            let d2 = (c[0] - tc[0]).powi(2) + (c[1] - tc[1]).powi(2);
            let id = layout.block_index(*t);
            let better = match &best {
                None => true,
                Some((bd, bid, _)) => d2 < bd - tol || ((d2 - bd).abs() <= tol && id < *bid),
            };
            if better {
                best = Some((d2, id, *t));
            }
        }
        let (_, _, p) = best.expect("S_1 is nonempty");
        parents[i] = vec![(p, 1.0)];
    }

    Ok(MacroHierarchy {
        eta,
        levels,
        offsets,
        level_of,
        parents,
        blocks_per_dim: nb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_from_table_rows() {
        let l = build_coarse_layout(12, 20, Rect::UNIT).unwrap();
        assert_eq!(l.coarse_h()[0], 1.0 / 12.0);
        assert!((l.fine_h()[0] - 1.0 / 240.0).abs() < 1e-15);
        assert_eq!(l.oversample_layers, 5);
        assert_eq!(CoarseLayout::default_oversample_layers(24), 7);
        assert_eq!(CoarseLayout::default_oversample_layers(48), 8);
    }

    #[test]
    fn degenerate_single_block_layout() {
        let l = build_coarse_layout(1, 1, Rect::UNIT).unwrap();
        assert_eq!(l.oversample_layers, 0);
        let r = oversample_region(&l, BlockId::new(0, 0), 0).unwrap();
        assert_eq!(r.n_blocks(), 1);
        assert!(!r.clipped);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(build_coarse_layout(0, 4, Rect::UNIT).is_err());
        assert!(build_coarse_layout(4, 0, Rect::UNIT).is_err());
    }

    #[test]
    fn oversample_interior_and_corner() {
        let l = build_coarse_layout(8, 4, Rect::UNIT).unwrap();
        let r = oversample_region(&l, BlockId::new(4, 4), 2).unwrap();
        assert_eq!(r.block_counts(), [5, 5]);
        assert!(!r.clipped);

        let c = oversample_region(&l, BlockId::new(0, 0), 2).unwrap();
        assert_eq!(c.block_counts(), [3, 3]);
        assert!(c.clipped);

        let id = oversample_region(&l, BlockId::new(3, 3), 0).unwrap();
        assert_eq!(id.block_counts(), [1, 1]);
        assert_eq!(id.cell_counts(), [4, 4]);
    }

    #[test]
    fn hierarchy_counts_8_blocks() {
        let l = build_coarse_layout(8, 4, Rect::UNIT).unwrap();
        let h = build_hierarchy(&l, 2, 3).unwrap();
        assert_eq!(h.tier(1).len(), 4);
        assert_eq!(h.tier(2).len(), 16);
        assert_eq!(h.tier(3).len(), 64);
        assert_eq!(h.level_set(1).len(), 4);
        assert_eq!(h.level_set(2).len(), 12);
        assert_eq!(h.level_set(3).len(), 48);
        // The T_1 points sit at blocks {2, 6} per dimension and persist in T_2.
        let t1 = h.tier(1);
        for b in &t1 {
            assert!([2usize, 6].contains(&b.bx) && [2usize, 6].contains(&b.by));
        }
        let t2 = h.tier(2);
        for b in &t1 {
            assert!(t2.contains(b));
        }
    }

    #[test]
    fn hierarchy_single_level_has_no_parents() {
        let l = build_coarse_layout(8, 2, Rect::UNIT).unwrap();
        let h = build_hierarchy(&l, 2, 1).unwrap();
        assert_eq!(h.level_set(1).len(), 64);
        assert!(h.parents.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn hierarchy_divisibility_rejected() {
        let l = build_coarse_layout(9, 2, Rect::UNIT).unwrap();
        assert!(build_hierarchy(&l, 2, 3).is_err());
    }

    /// Brute-force check of the dense property on a 9x9 grid with eta = 3.
    #[test]
    fn hierarchy_dense_property_9_blocks() {
        let l = build_coarse_layout(9, 2, Rect::UNIT).unwrap();
        let h = build_hierarchy(&l, 3, 2).unwrap();
        assert_eq!(h.level_set(1).len(), 9);
        assert_eq!(h.level_set(2).len(), 72);
        let hh = l.coarse_h();
        let diag = (hh[0] * hh[0] + hh[1] * hh[1]).sqrt();
        for b in h.level_set(2) {
            let parents = h.parents_of(&l, b);
            assert_eq!(parents.len(), 1);
            let (p, w) = parents[0];
            assert_eq!(w, 1.0);
            let (c, pc) = (l.block_center(b), l.block_center(p));
            let d = ((c[0] - pc[0]).powi(2) + (c[1] - pc[1]).powi(2)).sqrt();
            // spacing of T_1 is 3H, so the parent lies within 3H*sqrt(2)
            assert!(d <= 3.0 * diag + 1e-12, "parent too far: {d}");
        }
    }

    #[test]
    fn level_sets_partition_all_blocks() {
        for (nb, eta, levels) in [(8, 2, 3), (12, 2, 3), (9, 3, 2), (16, 4, 2), (8, 2, 2)] {
            let l = build_coarse_layout(nb, 2, Rect::UNIT).unwrap();
            let h = build_hierarchy(&l, eta, levels).unwrap();
            let mut total = 0;
            for n in 1..=levels {
                total += h.level_set(n).len();
                let expect = (nb / eta.pow((levels - n) as u32)).pow(2);
                assert_eq!(h.tier(n).len(), expect);
            }
            assert_eq!(total, l.n_blocks());
            // dense property with the assigned (nearest level-1) parent
            let hh = l.coarse_h();
            let diag = (hh[0] * hh[0] + hh[1] * hh[1]).sqrt();
            for i in 0..l.n_blocks() {
                let b = l.block_at(i);
                let n = h.level(&l, b);
                if n == 1 {
                    continue;
                }
                let (p, _) = h.parents_of(&l, b)[0];
                let (c, pc) = (l.block_center(b), l.block_center(p));
                let d = ((c[0] - pc[0]).powi(2) + (c[1] - pc[1]).powi(2)).sqrt();
                let bound = eta.pow((levels - n + 1) as u32) as f64 * diag;
                assert!(d <= bound + 1e-12, "dist {d} exceeds bound {bound}");
            }
        }
    }

    #[test]
    fn describe_lists_every_block_once() {
        let l = build_coarse_layout(8, 2, Rect::UNIT).unwrap();
        let h = build_hierarchy(&l, 2, 2).unwrap();
        let text = h.describe();
        assert_eq!(text.lines().count(), 64);
        assert!(text.lines().any(|ln| ln.starts_with("1 ")));
        assert!(text.lines().any(|ln| ln.split_whitespace().count() == 6));
    }

    #[test]
    fn prolongate_reproduces_constants_and_linears() {
        let l = build_coarse_layout(4, 8, Rect::UNIT).unwrap();
        let region = oversample_region(&l, BlockId::new(1, 1), 1).unwrap();
        let coarse = SubGrid::new(&region, 4).unwrap();
        let fine = SubGrid::new(&region, 1).unwrap();

        let ones = NodalField::from_fn(coarse, &l, |_, _| 1.0);
        let p = prolongate(&ones, fine).unwrap();
        assert!(p.values.iter().all(|v| (v - 1.0).abs() < 1e-15));

        let x1 = NodalField::from_fn(coarse, &l, |x, _| x);
        let p = prolongate(&x1, fine).unwrap();
        let exact = NodalField::from_fn(fine, &l, |x, _| x);
        for (a, b) in p.values.iter().zip(exact.values.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn prolongate_rejects_non_nested() {
        let l = build_coarse_layout(4, 6, Rect::UNIT).unwrap();
        let region = block_region(&l, BlockId::new(0, 0));
        let coarse = SubGrid::new(&region, 3).unwrap();
        let fine = SubGrid::new(&region, 2).unwrap();
        let f = NodalField::zeros(coarse);
        assert!(prolongate(&f, fine).is_err());
    }

    proptest! {
        /// Composing eta=2 twice matches a single eta=4 prolongation.
        #[test]
        fn prolongate_composes(vals in proptest::collection::vec(-10.0f64..10.0, 9)) {
            let l = build_coarse_layout(2, 4, Rect::UNIT).unwrap();
            let region = oversample_region(&l, BlockId::new(0, 0), 2).unwrap();
            let g4 = SubGrid::new(&region, 4).unwrap();
            let g2 = SubGrid::new(&region, 2).unwrap();
            let g1 = SubGrid::new(&region, 1).unwrap();
            prop_assert_eq!(g4.n_nodes(), 9);
            let coarse = NodalField { grid: g4, values: vals };
            let two_step = prolongate(&prolongate(&coarse, g2).unwrap(), g1).unwrap();
            let one_step = prolongate(&coarse, g1).unwrap();
            for (a, b) in two_step.values.iter().zip(one_step.values.iter()) {
                prop_assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())));
            }
        }
    }
}
