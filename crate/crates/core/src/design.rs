//! Morris one-at-a-time trajectory designs and Saltelli cross-sampled
//! designs over the unit hypercube, plus their file representation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::sobol;

pub const DEFAULT_RUN_BUDGET: u64 = 10_000_000;
pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_SKIP: u64 = 1;

fn check_budget(rows: u128, cap: u64) -> Result<usize> {
    if rows > cap as u128 {
        return Err(Error::Budget { rows, cap });
    }
    Ok(rows as usize)
}

/// Step size in unit coordinates for a `p`-level Morris grid.
pub fn morris_delta(p: usize) -> f64 {
    p as f64 / (2.0 * (p as f64 - 1.0))
}

#[derive(Debug, Clone, Copy)]
pub struct MorrisConfig {
    pub r: usize,
    pub p: usize,
    pub seed: u64,
    pub run_budget: u64,
}

impl MorrisConfig {
    pub fn new(r: usize, p: usize, seed: u64) -> Self {
        MorrisConfig {
            r,
            p,
            seed,
            run_budget: DEFAULT_RUN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorrisDesign {
    pub factors: FactorSet,
    pub points: Vec<Vec<f64>>,
    pub r: usize,
    pub p: usize,
    pub delta: f64,
    pub seed: u64,
    pub trajectory: Vec<usize>,
    /// Factor changed relative to the previous row; `None` on trajectory base rows.
    pub perturbed: Vec<Option<usize>>,
}

/// Randomized one-at-a-time design with `r` trajectories of `k + 1` points.
///
/// Each trajectory starts at a random grid point, visits the factors in a
/// random order, and steps each coordinate by `+delta` when that stays in
/// range and by `-delta` otherwise. With `delta = p / (2(p - 1))` exactly one
/// direction is feasible for every grid level.
pub fn generate_morris_design(factors: &FactorSet, cfg: MorrisConfig) -> Result<MorrisDesign> {
    let k = factors.k();
    if k == 0 {
        return Err(Error::Config("Morris design needs at least one factor".into()));
    }
    if cfg.r == 0 {
        return Err(Error::Config("Morris design needs r >= 1".into()));
    }
    if cfg.p < 2 || cfg.p % 2 != 0 {
        return Err(Error::Config(format!(
            "Morris level count p must be even and >= 2, got {}",
            cfg.p
        )));
    }
    let total = check_budget(cfg.r as u128 * (k as u128 + 1), cfg.run_budget)?;

    let p = cfg.p;
    let half = p / 2;
    let scale = (p - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = Vec::with_capacity(total);
    let mut trajectory = Vec::with_capacity(total);
    let mut perturbed = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..k).collect();

    for t in 0..cfg.r {
        let mut levels: Vec<usize> = (0..k).map(|_| rng.random_range(0..p)).collect();
        order.shuffle(&mut rng);
        points.push(levels.iter().map(|&l| l as f64 / scale).collect());
        trajectory.push(t);
        perturbed.push(None);
        for &i in &order {
            if levels[i] < half {
                levels[i] += half;
            } else {
                levels[i] -= half;
            }
            points.push(levels.iter().map(|&l| l as f64 / scale).collect());
            trajectory.push(t);
            perturbed.push(Some(i));
        }
    }

    Ok(MorrisDesign {
        factors: factors.clone(),
        points,
        r: cfg.r,
        p,
        delta: morris_delta(p),
        seed: cfg.seed,
        trajectory,
        perturbed,
    })
}

impl MorrisDesign {
    /// Row range of trajectory `t`.
    pub fn trajectory_rows(&self, t: usize) -> std::ops::Range<usize> {
        let len = self.factors.k() + 1;
        t * len..(t + 1) * len
    }
}

/// Saltelli block label of a design row. Factor indices are zero based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    A,
    B,
    /// `A` with column `i` taken from `B`.
    AB(usize),
    /// `B` with column `i` taken from `A`.
    BA(usize),
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::A => f.write_str("A"),
            Block::B => f.write_str("B"),
            Block::AB(i) => write!(f, "AB:{i}"),
            Block::BA(i) => write!(f, "BA:{i}"),
        }
    }
}

impl FromStr for Block {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("bad block label `{s}`");
        match s {
            "A" => Ok(Block::A),
            "B" => Ok(Block::B),
            _ => {
                let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
                let i = idx.parse().map_err(|_| bad())?;
                match kind {
                    "AB" => Ok(Block::AB(i)),
                    "BA" => Ok(Block::BA(i)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SaltelliConfig {
    pub n: usize,
    pub skip: u64,
    /// Include the `BA(i)` blocks needed for second-order indices.
    pub second_order: bool,
    pub run_budget: u64,
}

impl SaltelliConfig {
    pub fn new(n: usize) -> Self {
        SaltelliConfig {
            n,
            skip: DEFAULT_SKIP,
            second_order: true,
            run_budget: DEFAULT_RUN_BUDGET,
        }
    }

    pub fn first_and_total_only(mut self) -> Self {
        self.second_order = false;
        self
    }

    pub fn with_skip(mut self, skip: u64) -> Self {
        self.skip = skip;
        self
    }
}

/// Number of runs in a Saltelli design: `N(2k + 2)`, or `N(k + 2)` without
/// the `BA` blocks.
pub fn saltelli_rows(n: usize, k: usize, second_order: bool) -> u128 {
    let per = if second_order { 2 * k + 2 } else { k + 2 };
    n as u128 * per as u128
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    pub factors: FactorSet,
    pub points: Vec<Vec<f64>>,
    pub n: usize,
    pub skip: u64,
    pub second_order: bool,
    pub blocks: Vec<Block>,
}

/// Saltelli design built from one `2k`-dimensional Sobol sample: the first
/// `k` columns form `A`, the last `k` form `B`.
///
/// Rows are laid out as `A`, `B`, `AB(0..k)` and, when `second_order` is
/// set, `BA(0..k)`, each block `n` rows long.
pub fn generate_saltelli_design(
    factors: &FactorSet,
    cfg: SaltelliConfig,
) -> Result<SaltelliDesign> {
    let k = factors.k();
    if cfg.n < 2 {
        return Err(Error::Config("Saltelli design needs n >= 2".into()));
    }
    if k == 0 || (cfg.second_order && k < 2) {
        return Err(Error::Config(format!(
            "Saltelli design with second-order blocks needs k >= 2, got k = {k}"
        )));
    }
    let total = check_budget(saltelli_rows(cfg.n, k, cfg.second_order), cfg.run_budget)?;

    let base = sobol::sobol_sequence(2 * k, cfg.n, cfg.skip)?;
    let a: Vec<Vec<f64>> = base.iter().map(|row| row[..k].to_vec()).collect();
    let b: Vec<Vec<f64>> = base.iter().map(|row| row[k..].to_vec()).collect();

    let mut points = Vec::with_capacity(total);
    let mut blocks = Vec::with_capacity(total);
    let mut push_block = |rows: Vec<Vec<f64>>, block: Block| {
        points.extend(rows);
        blocks.extend(std::iter::repeat_n(block, cfg.n));
    };
    push_block(a.clone(), Block::A);
    push_block(b.clone(), Block::B);
    let hybrid = |into: &[Vec<f64>], from: &[Vec<f64>], i: usize| -> Vec<Vec<f64>> {
        into.iter()
            .zip(from)
            .map(|(x, y)| {
                let mut row = x.clone();
                row[i] = y[i];
                row
            })
            .collect()
    };
    for i in 0..k {
        push_block(hybrid(&a, &b, i), Block::AB(i));
    }
    if cfg.second_order {
        for i in 0..k {
            push_block(hybrid(&b, &a, i), Block::BA(i));
        }
    }

    Ok(SaltelliDesign {
        factors: factors.clone(),
        points,
        n: cfg.n,
        skip: cfg.skip,
        second_order: cfg.second_order,
        blocks,
    })
}

impl SaltelliDesign {
    /// Row index of sample `j` within `block`.
    pub fn row_of(&self, block: Block, j: usize) -> usize {
        let k = self.factors.k();
        let offset = match block {
            Block::A => 0,
            Block::B => 1,
            Block::AB(i) => 2 + i,
            Block::BA(i) => 2 + k + i,
        };
        offset * self.n + j
    }
}

/// Sidecar metadata written next to every design file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetadata {
    pub kind: DesignKind,
    pub k: usize,
    pub rows: usize,
    pub content_hash: String,
    pub factors: FactorSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignKind {
    Morris {
        r: usize,
        p: usize,
        delta: f64,
        seed: u64,
    },
    Saltelli {
        n: usize,
        skip: u64,
        second_order: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Morris(MorrisDesign),
    Saltelli(SaltelliDesign),
}

impl From<MorrisDesign> for Design {
    fn from(d: MorrisDesign) -> Self {
        Design::Morris(d)
    }
}

impl From<SaltelliDesign> for Design {
    fn from(d: SaltelliDesign) -> Self {
        Design::Saltelli(d)
    }
}

/// Path of the metadata sidecar for a design file.
pub fn metadata_path(design_path: &Path) -> PathBuf {
    let mut s = design_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl Design {
    pub fn factors(&self) -> &FactorSet {
        match self {
            Design::Morris(d) => &d.factors,
            Design::Saltelli(d) => &d.factors,
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        match self {
            Design::Morris(d) => &d.points,
            Design::Saltelli(d) => &d.points,
        }
    }

    pub fn rows(&self) -> usize {
        self.points().len()
    }

    pub fn as_morris(&self) -> Option<&MorrisDesign> {
        match self {
            Design::Morris(d) => Some(d),
            Design::Saltelli(_) => None,
        }
    }

    pub fn as_saltelli(&self) -> Option<&SaltelliDesign> {
        match self {
            Design::Saltelli(d) => Some(d),
            Design::Morris(_) => None,
        }
    }

    pub fn kind(&self) -> DesignKind {
        match self {
            Design::Morris(d) => DesignKind::Morris {
                r: d.r,
                p: d.p,
                delta: d.delta,
                seed: d.seed,
            },
            Design::Saltelli(d) => DesignKind::Saltelli {
                n: d.n,
                skip: d.skip,
                second_order: d.second_order,
            },
        }
    }

    /// Canonical comma-separated rendering:
    /// `run_id,<factor names...>,block,trajectory,perturbed_factor`.
    pub fn to_csv(&self) -> String {
        let factors = self.factors();
        let mut out = String::with_capacity(self.rows() * (factors.k() + 3) * 20);
        out.push_str("run_id");
        for name in factors.names() {
            out.push(',');
            out.push_str(&name);
        }
        out.push_str(",block,trajectory,perturbed_factor\n");
        for (row, point) in self.points().iter().enumerate() {
            out.push_str(&row.to_string());
            for v in point {
                out.push(',');
                out.push_str(&v.to_string());
            }
            match self {
                Design::Morris(d) => {
                    out.push_str(",,");
                    out.push_str(&d.trajectory[row].to_string());
                    out.push(',');
                    if let Some(i) = d.perturbed[row] {
                        out.push_str(&factors.get(i).name);
                    }
                }
                Design::Saltelli(d) => {
                    out.push(',');
                    out.push_str(&d.blocks[row].to_string());
                    out.push_str(",,");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical CSV rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    pub fn metadata(&self) -> DesignMetadata {
        DesignMetadata {
            kind: self.kind(),
            k: self.factors().k(),
            rows: self.rows(),
            content_hash: self.content_hash(),
            factors: self.factors().clone(),
        }
    }

    /// Write the design table and its `.meta.json` sidecar.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv = self.to_csv();
        let meta = DesignMetadata {
            kind: self.kind(),
            k: self.factors().k(),
            rows: self.rows(),
            content_hash: hex::encode(Sha256::digest(csv.as_bytes())),
            factors: self.factors().clone(),
        };
        std::fs::write(path, csv)?;
        std::fs::write(metadata_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    /// Read a design table together with its sidecar, checking that the
    /// table content matches the recorded hash.
    pub fn read(path: impl AsRef<Path>) -> Result<Design> {
        let path = path.as_ref();
        let meta_path = metadata_path(path);
        let meta: DesignMetadata = serde_json::from_str(
            &std::fs::read_to_string(&meta_path).map_err(|e| {
                Error::Config(format!("cannot read design metadata {}: {e}", meta_path.display()))
            })?,
        )?;
        let text = std::fs::read_to_string(path)?;
        let design = Design::parse_csv(&text, &meta, &path.display().to_string())?;
        let hash = design.content_hash();
        if hash != meta.content_hash {
            return Err(Error::Alignment(format!(
                "{} does not match the content hash in its metadata ({} vs {})",
                path.display(),
                hash,
                meta.content_hash
            )));
        }
        Ok(design)
    }

    fn parse_csv(text: &str, meta: &DesignMetadata, source: &str) -> Result<Design> {
        let factors = &meta.factors;
        let k = factors.k();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "empty design file".into()))?;
        let mut expected = vec!["run_id".to_string()];
        expected.extend(factors.names());
        expected.extend(["block", "trajectory", "perturbed_factor"].map(String::from));
        if header.split(',').ne(expected.iter().map(String::as_str)) {
            return Err(parse_err(1, "header does not match the design metadata".into()));
        }

        let mut points = Vec::with_capacity(meta.rows);
        let mut blocks = Vec::new();
        let mut trajectory = Vec::new();
        let mut perturbed = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 4 {
                return Err(parse_err(line_no, format!("expected {} fields", k + 4)));
            }
            if fields[0] != idx.to_string() {
                return Err(parse_err(line_no, format!("expected run_id {idx}")));
            }
            let point = fields[1..=k]
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            points.push(point);
            let (block, traj, pert) = (fields[k + 1], fields[k + 2], fields[k + 3]);
            match meta.kind {
                DesignKind::Morris { .. } => {
                    trajectory.push(
                        traj.parse::<usize>()
                            .map_err(|e| parse_err(line_no, e.to_string()))?,
                    );
                    perturbed.push(if pert.is_empty() {
                        None
                    } else {
                        Some(factors.index_of(pert).ok_or_else(|| {
                            parse_err(line_no, format!("unknown factor `{pert}`"))
                        })?)
                    });
                }
                DesignKind::Saltelli { .. } => {
                    blocks.push(block.parse().map_err(|m| parse_err(line_no, m))?);
                }
            }
        }
        if points.len() != meta.rows {
            return Err(Error::Alignment(format!(
                "{source}: {} rows, metadata records {}",
                points.len(),
                meta.rows
            )));
        }

        Ok(match meta.kind {
            DesignKind::Morris { r, p, delta, seed } => Design::Morris(MorrisDesign {
                factors: factors.clone(),
                points,
                r,
                p,
                delta,
                seed,
                trajectory,
                perturbed,
            }),
            DesignKind::Saltelli {
                n,
                skip,
                second_order,
            } => Design::Saltelli(SaltelliDesign {
                factors: factors.clone(),
                points,
                n,
                skip,
                second_order,
                blocks,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(k: usize) -> FactorSet {
        FactorSet::uniform(k, 0.0, 1.0).unwrap()
    }

    #[test]
    fn morris_small_design() {
        let d = generate_morris_design(&unit(2), MorrisConfig::new(1, 4, 3)).unwrap();
        assert_eq!(d.points.len(), 3);
        assert_eq!(d.delta, 2.0 / 3.0);
        for w in d.points.windows(2) {
            let diffs: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect();
            assert_eq!(diffs.iter().filter(|x| **x != 0.0).count(), 1);
            let step = diffs.iter().find(|x| **x != 0.0).unwrap().abs();
            assert!((step - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn morris_rejects_odd_levels_and_budget() {
        assert!(matches!(
            generate_morris_design(&unit(3), MorrisConfig::new(2, 5, 0)),
            Err(Error::Config(_))
        ));
        let mut cfg = MorrisConfig::new(10, 4, 0);
        cfg.run_budget = 39;
        assert!(matches!(
            generate_morris_design(&unit(3), cfg),
            Err(Error::Budget { rows: 40, cap: 39 })
        ));
    }

    #[test]
    fn morris_is_deterministic() {
        let a = generate_morris_design(&unit(3), MorrisConfig::new(4, 4, 7)).unwrap();
        let b = generate_morris_design(&unit(3), MorrisConfig::new(4, 4, 7)).unwrap();
        assert_eq!(a, b);
        let c = generate_morris_design(&unit(3), MorrisConfig::new(4, 4, 8)).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn saltelli_block_layout() {
        let d = generate_saltelli_design(&unit(3), SaltelliConfig::new(4)).unwrap();
        assert_eq!(d.points.len(), 32);
        for j in 0..4 {
            let a = &d.points[j];
            let b = &d.points[4 + j];
            let ab1 = &d.points[8 + j];
            assert_eq!(d.blocks[8 + j], Block::AB(0));
            assert_eq!(ab1[0], b[0]);
            assert_eq!(&ab1[1..], &a[1..]);
        }
        assert_eq!(d.row_of(Block::BA(2), 3), 7 * 4 + 3);
        assert_eq!(d.blocks[d.row_of(Block::BA(2), 3)], Block::BA(2));
    }

    #[test]
    fn saltelli_preconditions() {
        assert!(generate_saltelli_design(&unit(3), SaltelliConfig::new(1)).is_err());
        assert!(generate_saltelli_design(&unit(1), SaltelliConfig::new(8)).is_err());
        let first_only = SaltelliConfig::new(8).first_and_total_only();
        assert_eq!(
            generate_saltelli_design(&unit(1), first_only).unwrap().points.len(),
            24
        );
    }

    #[test]
    fn block_labels_round_trip() {
        for b in [Block::A, Block::B, Block::AB(0), Block::BA(17)] {
            assert_eq!(b.to_string().parse::<Block>().unwrap(), b);
        }
        assert!("AB".parse::<Block>().is_err());
        assert!("C:1".parse::<Block>().is_err());
    }

    #[test]
    fn file_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        for design in [
            Design::from(generate_morris_design(&unit(3), MorrisConfig::new(3, 6, 1)).unwrap()),
            Design::from(generate_saltelli_design(&unit(3), SaltelliConfig::new(8)).unwrap()),
        ] {
            design.write(&path).unwrap();
            assert_eq!(Design::read(&path).unwrap(), design);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("0.5", "0.25", 1)).unwrap();
        assert!(matches!(Design::read(&path), Err(Error::Alignment(_))));
    }
}
