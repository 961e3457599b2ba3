//! Coefficient fields, continuum masks and source terms.
//!
//! The conductivity is `kappa = g1 * g2` with the slowly varying factor
//! `g1 = 2 + sin(pi x1) sin(pi x2)` and a high-contrast factor `g2` equal to
//! `eps/10000` in the low region and `1/(100 eps)` in the high region. Both
//! `kappa` and the source are sampled at fine-cell centers and treated as
//! piecewise constant per cell, so every constraint and load integral in the
//! pipeline is quadrature-exact.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{BlockId, CoarseLayout};

const RASTER_MAGIC: &str = "MCHRASTER1";

/// Geometry family of the high-contrast region, with its parameters.
///
/// Lengths are physical (fractions of the domain), so a medium is identical
/// across a coarse-mesh sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    /// Single continuum, `kappa = g1`.
    Homogeneous,
    /// Stripes of the high region, normal to `axis`.
    Layered {
        period: f64,
        fraction: f64,
        offset: f64,
        axis: usize,
    },
    /// Union of horizontal and vertical stripes.
    Crossed { period: f64, fraction: f64, offset: f64 },
    /// One seeded rectangular inclusion per coarse block, at least one cell
    /// of margin inside the block.
    RandomInclusions { density: f64 },
}

impl GeometrySpec {
    pub fn tag(&self) -> GeometryTag {
        match self {
            GeometrySpec::Homogeneous => GeometryTag::Homogeneous,
            GeometrySpec::Layered { .. } => GeometryTag::Layered,
            GeometrySpec::Crossed { .. } => GeometryTag::Crossed,
            GeometrySpec::RandomInclusions { .. } => GeometryTag::RandomInclusions,
        }
    }

    /// Stripe layout with the default parameters: period of two coarse
    /// blocks, high-region fraction 1/2, aligned with block boundaries.
    pub fn layered_default(layout: &CoarseLayout) -> Self {
        GeometrySpec::Layered {
            period: 2.0 * layout.coarse_h()[1],
            fraction: 0.5,
            offset: 0.0,
            axis: 1,
        }
    }

    pub fn crossed_default(layout: &CoarseLayout) -> Self {
        GeometrySpec::Crossed {
            period: 2.0 * layout.coarse_h()[0],
            fraction: 0.5,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryTag {
    Homogeneous,
    Layered,
    Crossed,
    RandomInclusions,
}

impl GeometryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeometryTag::Homogeneous => "homogeneous",
            GeometryTag::Layered => "layered",
            GeometryTag::Crossed => "crossed",
            GeometryTag::RandomInclusions => "random_inclusions",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(GeometryTag::Homogeneous),
            "layered" => Ok(GeometryTag::Layered),
            "crossed" => Ok(GeometryTag::Crossed),
            "random_inclusions" => Ok(GeometryTag::RandomInclusions),
            other => Err(Error::InvalidMedium(format!("unknown geometry tag {other:?}"))),
        }
    }
}

/// Cellwise conductivity and continuum masks on the global fine grid.
///
/// Masks hold 1-based continuum ids and partition the cells: every cell
/// belongs to exactly one continuum.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumField {
    pub cells: [usize; 2],
    pub kappa: Vec<f64>,
    pub mask: Vec<u8>,
    pub n_continua: u8,
    pub epsilon: f64,
    pub geometry: GeometryTag,
    pub seed: u64,
}

impl MediumField {
    #[inline]
    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        cy * self.cells[0] + cx
    }

    #[inline]
    pub fn kappa_at(&self, cx: usize, cy: usize) -> f64 {
        self.kappa[self.cell_index(cx, cy)]
    }

    /// 1-based continuum id of a cell.
    #[inline]
    pub fn continuum_at(&self, cx: usize, cy: usize) -> u8 {
        self.mask[self.cell_index(cx, cy)]
    }

    /// Number of cells of continuum `j` (1-based) inside a block.
    pub fn block_continuum_cells(&self, layout: &CoarseLayout, block: BlockId, j: u8) -> usize {
        let f = layout.fine_cells_per_block;
        let (cx0, cy0) = (block.bx * f[0], block.by * f[1]);
        let mut count = 0;
        for cy in cy0..cy0 + f[1] {
            for cx in cx0..cx0 + f[0] {
                if self.continuum_at(cx, cy) == j {
                    count += 1;
                }
            }
        }
        count
    }

    /// Continua present in a block (1-based ids).
    pub fn block_continua(&self, layout: &CoarseLayout, block: BlockId) -> Vec<u8> {
        (1..=self.n_continua)
            .filter(|j| self.block_continuum_cells(layout, block, *j) > 0)
            .collect()
    }

    /// Stable 64-bit fingerprint of the payload, used for cache keys.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::config::Fnv1a::new();
        h.write_u64(self.cells[0] as u64);
        h.write_u64(self.cells[1] as u64);
        h.write_u64(self.n_continua as u64);
        h.write_u64(self.epsilon.to_bits());
        h.write_u64(self.seed);
        for k in &self.kappa {
            h.write_u64(k.to_bits());
        }
        h.write(&self.mask);
        h.finish()
    }
}

/// Slowly varying factor of the conductivity.
pub fn g1(x: f64, y: f64) -> f64 {
    2.0 + (PI * x).sin() * (PI * y).sin()
}

/// High-contrast factor by continuum id (1 = low region, 2 = high region).
pub fn g2(continuum: u8, epsilon: f64) -> f64 {
    match continuum {
        1 => epsilon / 10000.0,
        _ => 1.0 / (100.0 * epsilon),
    }
}

/// Build the conductivity field and continuum masks for a geometry family.
pub fn make_kappa(
    layout: &CoarseLayout,
    geometry: &GeometrySpec,
    epsilon: f64,
    seed: u64,
) -> Result<MediumField> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidMedium(format!(
            "contrast parameter must be positive, got {epsilon}"
        )));
    }
    let cells = layout.fine_cells();
    let mut mask = vec![1u8; cells[0] * cells[1]];
    let n_continua: u8 = match geometry {
        GeometrySpec::Homogeneous => 1,
        _ => 2,
    };

    match geometry {
        GeometrySpec::Homogeneous => {}
        GeometrySpec::Layered {
            period,
            fraction,
            offset,
            axis,
        } => {
            check_stripe_params(*period, *fraction)?;
            for cy in 0..cells[1] {
                for cx in 0..cells[0] {
                    let c = layout.cell_center(cx, cy);
                    let t = c[*axis.min(&1)];
                    if in_stripe(t, *period, *fraction, *offset) {
                        mask[cy * cells[0] + cx] = 2;
                    }
                }
            }
        }
        GeometrySpec::Crossed {
            period,
            fraction,
            offset,
        } => {
            check_stripe_params(*period, *fraction)?;
            for cy in 0..cells[1] {
                for cx in 0..cells[0] {
                    let c = layout.cell_center(cx, cy);
                    if in_stripe(c[0], *period, *fraction, *offset)
                        || in_stripe(c[1], *period, *fraction, *offset)
                    {
                        mask[cy * cells[0] + cx] = 2;
                    }
                }
            }
        }
        GeometrySpec::RandomInclusions { density } => {
            if !(0.0 < *density && *density < 1.0) {
                return Err(Error::InvalidMedium(format!(
                    "inclusion density must lie in (0,1), got {density}"
                )));
            }
            scatter_inclusions(layout, *density, seed, &mut mask)?;
        }
    }

    let mut kappa = Vec::with_capacity(cells[0] * cells[1]);
    for cy in 0..cells[1] {
        for cx in 0..cells[0] {
            let c = layout.cell_center(cx, cy);
            let g = g1(c[0], c[1]);
            let k = match geometry {
                GeometrySpec::Homogeneous => g,
                _ => g * g2(mask[cy * cells[0] + cx], epsilon),
            };
            kappa.push(k);
        }
    }

    let field = MediumField {
        cells,
        kappa,
        mask,
        n_continua,
        epsilon,
        geometry: geometry.tag(),
        seed,
    };

    if matches!(geometry, GeometrySpec::RandomInclusions { .. }) {
        for b in layout.blocks() {
            for j in 1..=2u8 {
                if field.block_continuum_cells(layout, b, j) == 0 {
                    return Err(Error::InvalidMedium(format!(
                        "random geometry left block ({},{}) without continuum {j}; \
                         re-generate with another seed or lower density",
                        b.bx, b.by
                    )));
                }
            }
        }
    }

    Ok(field)
}

fn check_stripe_params(period: f64, fraction: f64) -> Result<()> {
    if period <= 0.0 || !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidMedium(format!(
            "stripe period must be positive and fraction in (0,1), got period={period}, fraction={fraction}"
        )));
    }
    Ok(())
}

fn in_stripe(t: f64, period: f64, fraction: f64, offset: f64) -> bool {
    let s = ((t - offset) / period).rem_euclid(1.0);
    s < fraction
}

/// One rectangular inclusion per coarse block with a one-cell margin, so
/// inclusions never touch and every block keeps both continua.
fn scatter_inclusions(layout: &CoarseLayout, density: f64, seed: u64, mask: &mut [u8]) -> Result<()> {
    let f = layout.fine_cells_per_block;
    if f[0] < 3 || f[1] < 3 {
        return Err(Error::InvalidMedium(
            "random inclusions need at least 3 fine cells per block".into(),
        ));
    }
    let cells = layout.fine_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wmax, hmax) = (f[0] - 2, f[1] - 2);
    for b in layout.blocks() {
        let target = ((density * (f[0] * f[1]) as f64).round() as usize).max(1);
        let wlo = (target + hmax - 1) / hmax; // ceil(target / hmax)
        let wlo = wlo.clamp(1, wmax);
        let whi = target.min(wmax).max(wlo);
        let w = rng.gen_range(wlo..=whi);
        let h = ((target as f64 / w as f64).round() as usize).clamp(1, hmax);
        let ox = rng.gen_range(1..=f[0] - 1 - w);
        let oy = rng.gen_range(1..=f[1] - 1 - h);
        let (cx0, cy0) = (b.bx * f[0] + ox, b.by * f[1] + oy);
        for cy in cy0..cy0 + h {
            for cx in cx0..cx0 + w {
                mask[cy * cells[0] + cx] = 2;
            }
        }
    }
    Ok(())
}

/// Cellwise source values.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub cells: [usize; 2],
    pub f: Vec<f64>,
}

impl SourceField {
    #[inline]
    pub fn at(&self, cx: usize, cy: usize) -> f64 {
        self.f[cy * self.cells[0] + cx]
    }
}

/// Gaussian bump source, damped by `eps/10` in the low-conductivity region.
pub fn make_source(layout: &CoarseLayout, medium: &MediumField) -> SourceField {
    let cells = layout.fine_cells();
    let mut f = Vec::with_capacity(cells[0] * cells[1]);
    for cy in 0..cells[1] {
        for cx in 0..cells[0] {
            let c = layout.cell_center(cx, cy);
            let r2 = (c[0] - 0.5).powi(2) + (c[1] - 0.5).powi(2);
            let bump = (-40.0 * r2.abs()).exp();
            let v = if medium.continuum_at(cx, cy) == 1 {
                medium.epsilon / 10.0 * bump
            } else {
                bump
            };
            f.push(v);
        }
    }
    SourceField { cells, f }
}

/// Raster header, readable without touching the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterHeader {
    pub cells: [usize; 2],
    pub n_continua: u8,
    pub geometry: GeometryTag,
    pub epsilon: f64,
    pub seed: u64,
}

/// Write a medium as a text header plus little-endian binary payload
/// (row-major f64 kappa, then u8 continuum ids).
pub fn save_raster(field: &MediumField, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "{} {} {} {} {} {} {}",
        RASTER_MAGIC,
        field.cells[0],
        field.cells[1],
        field.n_continua,
        field.geometry.as_str(),
        format_f64(field.epsilon),
        field.seed
    )?;
    for k in &field.kappa {
        w.write_all(&k.to_le_bytes())?;
    }
    w.write_all(&field.mask)?;
    w.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<RasterHeader> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != RASTER_MAGIC {
        return Err(Error::MalformedRaster(format!("bad header line {line:?}")));
    }
    let bad = |what: &str| Error::MalformedRaster(format!("cannot parse {what} in header"));
    Ok(RasterHeader {
        cells: [
            parts[1].parse().map_err(|_| bad("nx"))?,
            parts[2].parse().map_err(|_| bad("ny"))?,
        ],
        n_continua: parts[3].parse().map_err(|_| bad("continuum count"))?,
        geometry: GeometryTag::parse(parts[4])?,
        epsilon: parts[5].parse().map_err(|_| bad("epsilon"))?,
        seed: parts[6].parse().map_err(|_| bad("seed"))?,
    })
}

/// Read only the header of a raster file.
pub fn inspect_raster(path: &Path) -> Result<RasterHeader> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    parse_header(line.trim_end())
}

pub fn load_raster(path: &Path) -> Result<MediumField> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = parse_header(line.trim_end())?;
    let n = header.cells[0] * header.cells[1];

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = n * 8 + n;
    if payload.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "raster payload holds {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut kappa = Vec::with_capacity(n);
    for i in 0..n {
        let bytes: [u8; 8] = payload[i * 8..(i + 1) * 8].try_into().unwrap();
        kappa.push(f64::from_le_bytes(bytes));
    }
    let mask = payload[n * 8..].to_vec();
    if mask.iter().any(|m| *m == 0 || *m > header.n_continua) {
        return Err(Error::MalformedRaster("continuum id outside 1..=C".into()));
    }
    Ok(MediumField {
        cells: header.cells,
        kappa,
        mask,
        n_continua: header.n_continua,
        epsilon: header.epsilon,
        geometry: header.geometry,
        seed: header.seed,
    })
}

/// 17 significant digits; round-trips any f64 exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}
