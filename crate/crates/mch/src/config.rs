//! Flat key-value experiment configuration.
//!
//! The format is one `key = value` pair per line, `#` comments, chosen for
//! diff-friendliness in regression suites. A canonical FNV-1a hash of the
//! parsed configuration stamps every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::media::{format_f64, GeometryTag};

/// Cell-problem boundary condition on the oversampled region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// No essential condition; well-posedness comes from the constraints.
    Natural,
    /// Homogeneous Dirichlet on the oversampling boundary (sensitivity toggle).
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    Hierarchical,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Hierarchical => "hierarchical",
        }
    }
}

/// Parsed and validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub geometry: GeometryTag,
    pub epsilon: f64,
    /// Coarse meshes to sweep; the first entry defines the fine grid.
    pub blocks: Vec<usize>,
    /// Fine cells per block of the first (coarsest) sweep entry.
    pub cells_per_block: usize,
    pub eta: usize,
    pub levels: usize,
    /// `None` = the `ceil(-2 ln H)` rule.
    pub oversample: Option<usize>,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cache: bool,
    pub boundary: BoundaryCondition,
    /// Reproduce the literal gradient-correction right-hand side.
    pub grad_rhs_literal: bool,
    /// Use the spec-literal gradient interpolant without recentering.
    pub naive_grad_interpolant: bool,
    /// Evaluate macro block values at block centers instead of averages.
    pub macro_center_values: bool,
    /// Work-model exponent (work per task = dofs^gamma).
    pub gamma: f64,
    /// Stripe period in units of the coarsest block size.
    pub stripe_period_blocks: f64,
    pub stripe_fraction: f64,
    /// Stripe offset in units of the coarsest block size.
    pub stripe_offset_blocks: f64,
    /// 0 = stripes normal to x, 1 = stripes normal to y.
    pub stripe_axis: usize,
    pub inclusion_density: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            geometry: GeometryTag::Layered,
            epsilon: 1.0 / 48.0,
            blocks: vec![12, 24],
            cells_per_block: 20,
            eta: 2,
            levels: 2,
            oversample: None,
            variants: vec![Variant::Full, Variant::Hierarchical],
            seed: 0,
            out_dir: PathBuf::from("out"),
            cache: false,
            boundary: BoundaryCondition::Natural,
            grad_rhs_literal: false,
            naive_grad_interpolant: false,
            macro_center_values: false,
            gamma: 1.0,
            stripe_period_blocks: 2.0,
            stripe_fraction: 0.5,
            stripe_offset_blocks: 0.0,
            stripe_axis: 1,
            inclusion_density: 0.3,
        }
    }
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("cannot parse {what} from {value:?}"));
        match key {
            "geometry" => self.geometry = GeometryTag::parse(value).map_err(|e| Error::Config(e.to_string()))?,
            "eps" | "epsilon" => self.epsilon = value.parse().map_err(|_| bad("eps"))?,
            "blocks" => {
                self.blocks = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad("blocks")))
                    .collect::<Result<Vec<_>>>()?;
            }
            "cells_per_block" => self.cells_per_block = value.parse().map_err(|_| bad("cells_per_block"))?,
            "eta" => self.eta = value.parse().map_err(|_| bad("eta"))?,
            "levels" => self.levels = value.parse().map_err(|_| bad("levels"))?,
            "oversample" => {
                self.oversample = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("oversample"))?)
                };
            }
            "variants" => {
                self.variants = value
                    .split(',')
                    .map(|s| match s.trim() {
                        "full" => Ok(Variant::Full),
                        "hierarchical" => Ok(Variant::Hierarchical),
                        other => Err(Error::Config(format!("unknown variant {other:?}"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "out" => self.out_dir = PathBuf::from(value),
            "cache" => self.cache = parse_bool(value)?,
            "bc" | "boundary" => {
                self.boundary = match value {
                    "natural" => BoundaryCondition::Natural,
                    "dirichlet" => BoundaryCondition::Dirichlet,
                    other => return Err(Error::Config(format!("unknown boundary condition {other:?}"))),
                };
            }
            "grad_rhs_literal" => self.grad_rhs_literal = parse_bool(value)?,
            "naive_grad_interpolant" => self.naive_grad_interpolant = parse_bool(value)?,
            "macro_center_values" => self.macro_center_values = parse_bool(value)?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "stripe_period_blocks" => self.stripe_period_blocks = value.parse().map_err(|_| bad("stripe_period_blocks"))?,
            "stripe_fraction" => self.stripe_fraction = value.parse().map_err(|_| bad("stripe_fraction"))?,
            "stripe_offset_blocks" => self.stripe_offset_blocks = value.parse().map_err(|_| bad("stripe_offset_blocks"))?,
            "stripe_axis" => {
                self.stripe_axis = match value {
                    "x" | "0" => 0,
                    "y" | "1" => 1,
                    other => return Err(Error::Config(format!("unknown stripe axis {other:?}"))),
                };
            }
            "inclusion_density" => self.inclusion_density = value.parse().map_err(|_| bad("inclusion_density"))?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("blocks list is empty".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.cells_per_block == 0 {
            return Err(Error::Config("cells_per_block must be positive".into()));
        }
        let fine = self.blocks[0] * self.cells_per_block;
        for &b in &self.blocks {
            if fine % b != 0 {
                return Err(Error::Config(format!(
                    "blocks entry {b} does not divide the fine grid of {fine} cells \
                     (set by blocks[0] * cells_per_block)"
                )));
            }
            let span = self.eta.pow(self.levels.saturating_sub(1) as u32);
            if b % span != 0 {
                return Err(Error::Config(format!(
                    "eta^(levels-1) = {span} must divide blocks entry {b}"
                )));
            }
            if (fine / b) % span != 0 {
                return Err(Error::Config(format!(
                    "eta^(levels-1) = {span} must divide the {} cells per block at blocks = {b}",
                    fine / b
                )));
            }
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.levels > 1 && self.eta < 2 {
            return Err(Error::Config("eta must be at least 2".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants requested".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config("gamma must be positive".into()));
        }
        Ok(())
    }

    /// Canonical serialization; hashing this stamps the outputs.
    pub fn canonical(&self) -> String {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let variants = self
            .variants
            .iter()
            .map(|v| v.as_str())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "geometry={}\neps={}\nblocks={}\ncells_per_block={}\neta={}\nlevels={}\noversample={}\nvariants={}\nseed={}\ncache={}\nbc={}\ngrad_rhs_literal={}\nnaive_grad_interpolant={}\nmacro_center_values={}\ngamma={}\nstripe_period_blocks={}\nstripe_fraction={}\nstripe_offset_blocks={}\nstripe_axis={}\ninclusion_density={}\n",
            self.geometry.as_str(),
            format_f64(self.epsilon),
            blocks,
            self.cells_per_block,
            self.eta,
            self.levels,
            self.oversample.map(|l| l.to_string()).unwrap_or_else(|| "auto".into()),
            variants,
            self.seed,
            self.cache,
            match self.boundary {
                BoundaryCondition::Natural => "natural",
                BoundaryCondition::Dirichlet => "dirichlet",
            },
            self.grad_rhs_literal,
            self.naive_grad_interpolant,
            self.macro_center_values,
            format_f64(self.gamma),
            format_f64(self.stripe_period_blocks),
            format_f64(self.stripe_fraction),
            format_f64(self.stripe_offset_blocks),
            self.stripe_axis,
            format_f64(self.inclusion_density),
        )
    }

    pub fn hash(&self) -> String {
        let mut h = Fnv1a::new();
        h.write(self.canonical().as_bytes());
        format!("{:016x}", h.finish())
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("expected a boolean, got {other:?}"))),
    }
}

/// 64-bit FNV-1a. Stable across platforms; used for config stamps and cache
/// keys, not for security.
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}
