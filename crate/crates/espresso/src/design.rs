//! Replicated, randomized microarray layout generation.
//!
//! Source clones are shuffled into independent printing-plate sets, one
//! unbiased permutation per set. Each array type consumes `replicates`
//! consecutive plate sets, which fill the array's quadrants in declared
//! order, row-major within a quadrant. With the 4x16x24 configuration and
//! 384 clones this reproduces the classic two-type design: every clone
//! appears exactly four times per array type, at random positions, for a
//! total of 1536 spots per array.
//!
//! Reproducibility is part of the file-format contract: permutations come
//! from a ChaCha8 stream seeded with the layout seed, consumed by a
//! Fisher-Yates shuffle whose index draws use rejection sampling on
//! `next_u64`. The same seed yields byte-identical exports on any build.

use std::collections::BTreeMap;
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::descriptor::{Record, Value};
use crate::tsv;

/// Geometry of one printed array: quadrants x rows x cols grid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrintingConfiguration {
    pub name: String,
    pub quadrants: u32,
    pub rows: u32,
    pub cols: u32,
}

impl PrintingConfiguration {
    pub fn new(name: impl Into<String>, quadrants: u32, rows: u32, cols: u32) -> Self {
        PrintingConfiguration {
            name: name.into(),
            quadrants,
            rows,
            cols,
        }
    }

    /// Total spots on one array of this configuration.
    pub fn spots_per_array(&self) -> usize {
        self.quadrants as usize * self.rows as usize * self.cols as usize
    }

    /// Read the geometry from a `PRINTING_CONFIGURATION` description record:
    /// `PRINTING_CONFIGURATION <name> <quadrants> <rows> <cols> ...`.
    pub fn from_record(record: &Record) -> Result<Self, LayoutError> {
        if record.keyword != "PRINTING_CONFIGURATION" {
            return Err(LayoutError::BadConfigRecord(format!(
                "expected PRINTING_CONFIGURATION record, found {}",
                record.keyword
            )));
        }
        let name = record
            .fields
            .first()
            .and_then(Value::as_str)
            .ok_or_else(|| LayoutError::BadConfigRecord("missing configuration name".into()))?;
        let dim = |i: usize, what: &str| -> Result<u32, LayoutError> {
            record
                .fields
                .get(i)
                .and_then(Value::as_int)
                .filter(|v| *v > 0)
                .map(|v| v as u32)
                .ok_or_else(|| {
                    LayoutError::BadConfigRecord(format!("missing or non-positive {what}"))
                })
        };
        Ok(PrintingConfiguration {
            name: name.to_string(),
            quadrants: dim(1, "quadrant count")?,
            rows: dim(2, "row count")?,
            cols: dim(3, "column count")?,
        })
    }

    /// Parse a configuration from its conventional name, which ends in the
    /// geometry: `Stanford4x16x24` is 4 quadrants of 16x24.
    pub fn parse_name(name: &str) -> Result<Self, LayoutError> {
        let bad = || LayoutError::BadConfigName(name.to_string());
        let mut parts = Vec::new();
        let mut rest = name;
        for _ in 0..2 {
            let x = rest.rfind('x').ok_or_else(bad)?;
            parts.push(&rest[x + 1..]);
            rest = &rest[..x];
        }
        let digits_start = rest
            .rfind(|c: char| !c.is_ascii_digit())
            .map(|i| i + 1)
            .unwrap_or(0);
        parts.push(&rest[digits_start..]);
        let mut dims = [0u32; 3];
        for (slot, text) in dims.iter_mut().zip(parts.iter().rev()) {
            *slot = text.parse().map_err(|_| bad())?;
            if *slot == 0 {
                return Err(bad());
            }
        }
        Ok(PrintingConfiguration::new(name, dims[0], dims[1], dims[2]))
    }
}

/// Spot addresses are `(quadrant, row, col)`, zero-based internally and
/// one-based in exported files.
pub type Position = (u32, u32, u32);

/// One array type's full spot map: clone index per position, row-major
/// within quadrants, quadrants in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayTypeMap {
    pub array_type: String,
    /// `spots[p]` is an index into the layout's clone list.
    pub spots: Vec<usize>,
}

/// A complete randomized design: plate-set permutations plus the array maps
/// they induce.
///
/// A glass slide carries two identical arrays of one type, so a slide holds
/// `2 * replicates` measurements of every clone, and a comparison probed on
/// two slides of different types holds `4 * replicates` (16 in the classic
/// design).
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutDesign {
    pub clone_ids: Vec<String>,
    pub config: PrintingConfiguration,
    pub replicates: usize,
    pub seed: u64,
    /// One independent permutation of the clone list per plate set;
    /// `array_types.len() * replicates` sets in all.
    pub plate_sets: Vec<Vec<usize>>,
    pub array_types: Vec<ArrayTypeMap>,
}

impl LayoutDesign {
    pub fn spots_per_array(&self) -> usize {
        self.config.spots_per_array()
    }

    /// Replicates of each clone on one slide (two identical arrays).
    pub fn replicates_per_slide(&self) -> usize {
        2 * self.replicates
    }

    /// Replicates of each clone across one comparison: two slides, one of
    /// each of two array types.
    pub fn replicates_per_comparison(&self) -> usize {
        4 * self.replicates
    }

    pub fn position_of_index(&self, p: usize) -> Position {
        let per_quadrant = (self.config.rows * self.config.cols) as usize;
        let q = p / per_quadrant;
        let rem = p % per_quadrant;
        (
            q as u32,
            (rem / self.config.cols as usize) as u32,
            (rem % self.config.cols as usize) as u32,
        )
    }

    /// Lookup table mapping `(array type, position)` to clone id.
    pub fn array_map_table(&self) -> ArrayMapTable {
        let mut maps = BTreeMap::new();
        for tm in &self.array_types {
            let clones = tm
                .spots
                .iter()
                .map(|&ci| self.clone_ids[ci].clone())
                .collect();
            let config = PrintingConfiguration::new(
                format!("{}-map", tm.array_type),
                self.config.quadrants,
                self.config.rows,
                self.config.cols,
            );
            maps.insert(tm.array_type.clone(), TypeMap { config, clones });
        }
        ArrayMapTable { maps }
    }
}

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error(
        "clone count x replicates ({clones} x {replicates} = {supply}) does not match \
         configuration capacity {capacity} ({config})"
    )]
    CountMismatch {
        clones: usize,
        replicates: usize,
        supply: usize,
        capacity: usize,
        config: String,
    },
    #[error("clone list is empty")]
    NoClones,
    #[error("duplicate clone id {0:?}")]
    DuplicateClone(String),
    #[error("replicates must be >= 1")]
    NoReplicates,
    #[error("array type count must be >= 1")]
    NoArrayTypes,
    #[error("bad PRINTING_CONFIGURATION record: {0}")]
    BadConfigRecord(String),
    #[error("configuration name {0:?} does not end in QxRxC geometry")]
    BadConfigName(String),
    #[error("tsv: {0}")]
    Tsv(#[from] tsv::TsvError),
    #[error("plate map row {line}: unknown well label {well:?}")]
    BadWell { line: usize, well: String },
}

/// Unbiased integer in `[0, bound)` by rejection sampling on `next_u64`.
/// The rejection zone is the low `2^64 mod bound` values, so every residue
/// is equally likely. This sampler is frozen: layouts regenerated from a
/// seed must match existing exports.
fn uniform_index(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound; // 2^64 mod bound
    loop {
        let r = rng.next_u64();
        if r >= threshold {
            return r % bound;
        }
    }
}

/// Fisher-Yates with the frozen index sampler; every permutation of the
/// input is equally likely.
fn shuffled_identity(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_index(rng, (i + 1) as u64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Excel-style type names: A..Z, AA, AB, ...
fn array_type_name(index: usize) -> String {
    let mut n = index + 1;
    let mut name = Vec::new();
    while n > 0 {
        n -= 1;
        name.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    name.reverse();
    String::from_utf8(name).unwrap()
}

/// Generate a randomized replicated layout.
///
/// Deterministic given the seed. Every clone appears exactly `replicates`
/// times per array type; each plate set is an independent uniform
/// permutation of the clone list.
pub fn generate_layout(
    clone_ids: &[String],
    config: &PrintingConfiguration,
    replicates: usize,
    array_types: usize,
    seed: u64,
) -> Result<LayoutDesign, LayoutError> {
    if clone_ids.is_empty() {
        return Err(LayoutError::NoClones);
    }
    if replicates == 0 {
        return Err(LayoutError::NoReplicates);
    }
    if array_types == 0 {
        return Err(LayoutError::NoArrayTypes);
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for id in clone_ids {
            if !seen.insert(id) {
                return Err(LayoutError::DuplicateClone(id.clone()));
            }
        }
    }
    let supply = replicates * clone_ids.len();
    let capacity = config.spots_per_array();
    if supply != capacity {
        return Err(LayoutError::CountMismatch {
            clones: clone_ids.len(),
            replicates,
            supply,
            capacity,
            config: format!(
                "{} = {}x{}x{}",
                config.name, config.quadrants, config.rows, config.cols
            ),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plate_sets: Vec<Vec<usize>> = (0..array_types * replicates)
        .map(|_| shuffled_identity(clone_ids.len(), &mut rng))
        .collect();

    let maps = (0..array_types)
        .map(|t| {
            let mut spots = Vec::with_capacity(capacity);
            for set in &plate_sets[t * replicates..(t + 1) * replicates] {
                spots.extend_from_slice(set);
            }
            ArrayTypeMap {
                array_type: array_type_name(t),
                spots,
            }
        })
        .collect();

    Ok(LayoutDesign {
        clone_ids: clone_ids.to_vec(),
        config: config.clone(),
        replicates,
        seed,
        plate_sets,
        array_types: maps,
    })
}

/// One confirmed problem found by [`verify_layout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutViolation {
    ReplicateCount {
        array_type: String,
        clone_id: String,
        expected: usize,
        actual: usize,
    },
    TotalSpots {
        array_type: String,
        expected: usize,
        actual: usize,
    },
    PlateSetNotPermutation {
        plate_set: usize,
        clone_id: String,
        count: usize,
    },
    IdenticalArrayMaps {
        first: String,
        second: String,
    },
}

impl fmt::Display for LayoutViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutViolation::ReplicateCount {
                array_type,
                clone_id,
                expected,
                actual,
            } => write!(
                f,
                "type {array_type}: clone {clone_id} placed {actual} times, expected {expected}"
            ),
            LayoutViolation::TotalSpots {
                array_type,
                expected,
                actual,
            } => write!(
                f,
                "type {array_type}: {actual} spots, expected {expected}"
            ),
            LayoutViolation::PlateSetNotPermutation {
                plate_set,
                clone_id,
                count,
            } => write!(
                f,
                "plate set {plate_set}: clone {clone_id} appears {count} times, expected 1"
            ),
            LayoutViolation::IdenticalArrayMaps { first, second } => {
                write!(f, "array types {first} and {second} have identical maps")
            }
        }
    }
}

/// Per-type tallies reported by verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayTypeReport {
    pub array_type: String,
    pub total_spots: usize,
    /// Placements per clone id.
    pub replicate_counts: BTreeMap<String, usize>,
    /// Spots per quadrant, indexed by quadrant.
    pub quadrant_spots: Vec<usize>,
    /// Distinct clones per quadrant.
    pub quadrant_distinct_clones: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutReport {
    pub array_reports: Vec<ArrayTypeReport>,
    pub violations: Vec<LayoutViolation>,
}

impl LayoutReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every design invariant and report tallies. Violations are data,
/// not errors: an empty violation list means the layout is sound.
pub fn verify_layout(layout: &LayoutDesign) -> LayoutReport {
    let mut violations = Vec::new();
    let mut array_reports = Vec::new();
    let expected_spots = layout.config.spots_per_array();
    let per_quadrant = (layout.config.rows * layout.config.cols) as usize;

    for tm in &layout.array_types {
        let mut counts: BTreeMap<String, usize> = layout
            .clone_ids
            .iter()
            .map(|id| (id.clone(), 0))
            .collect();
        let quadrants = layout.config.quadrants as usize;
        let mut quadrant_spots = vec![0usize; quadrants];
        let mut quadrant_sets: Vec<std::collections::BTreeSet<usize>> =
            vec![Default::default(); quadrants];
        for (p, &clone_idx) in tm.spots.iter().enumerate() {
            let q = (p / per_quadrant).min(quadrants.saturating_sub(1));
            quadrant_spots[q] += 1;
            quadrant_sets[q].insert(clone_idx);
            *counts
                .entry(layout.clone_ids[clone_idx].clone())
                .or_insert(0) += 1;
        }
        if tm.spots.len() != expected_spots {
            violations.push(LayoutViolation::TotalSpots {
                array_type: tm.array_type.clone(),
                expected: expected_spots,
                actual: tm.spots.len(),
            });
        }
        for (clone_id, &count) in &counts {
            if count != layout.replicates {
                violations.push(LayoutViolation::ReplicateCount {
                    array_type: tm.array_type.clone(),
                    clone_id: clone_id.clone(),
                    expected: layout.replicates,
                    actual: count,
                });
            }
        }
        array_reports.push(ArrayTypeReport {
            array_type: tm.array_type.clone(),
            total_spots: tm.spots.len(),
            replicate_counts: counts,
            quadrant_spots,
            quadrant_distinct_clones: quadrant_sets.iter().map(|s| s.len()).collect(),
        });
    }

    for (set_idx, set) in layout.plate_sets.iter().enumerate() {
        let mut counts = vec![0usize; layout.clone_ids.len()];
        for &ci in set {
            if let Some(slot) = counts.get_mut(ci) {
                *slot += 1;
            }
        }
        for (ci, &count) in counts.iter().enumerate() {
            if count != 1 {
                violations.push(LayoutViolation::PlateSetNotPermutation {
                    plate_set: set_idx,
                    clone_id: layout.clone_ids[ci].clone(),
                    count,
                });
            }
        }
    }

    // distinct arrangements are only possible with at least two clones
    if layout.clone_ids.len() >= 2 {
        for i in 0..layout.array_types.len() {
            for j in i + 1..layout.array_types.len() {
                if layout.array_types[i].spots == layout.array_types[j].spots {
                    violations.push(LayoutViolation::IdenticalArrayMaps {
                        first: layout.array_types[i].array_type.clone(),
                        second: layout.array_types[j].array_type.clone(),
                    });
                }
            }
        }
    }

    LayoutReport {
        array_reports,
        violations,
    }
}

/// Read a clone list: one id per line, blank lines and `#` comments
/// ignored.
pub fn read_clone_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

const WELLS_PER_PLATE: usize = 96;
const PLATE_COLS: usize = 12;

fn well_label(index: usize) -> String {
    let row = b'A' + (index / PLATE_COLS) as u8;
    format!("{}{:02}", row as char, index % PLATE_COLS + 1)
}

fn parse_well_label(label: &str) -> Option<usize> {
    let mut chars = label.chars();
    let row = chars.next()?;
    if !row.is_ascii_uppercase() {
        return None;
    }
    let col: usize = chars.as_str().parse().ok()?;
    if col == 0 || col > PLATE_COLS {
        return None;
    }
    Some((row as u8 - b'A') as usize * PLATE_COLS + col - 1)
}

const PLATE_MAP_HEADER: [&str; 4] = ["plate_set", "plate", "well", "clone_id"];

/// Re-pipetting instructions: one row per (plate set, plate, well, clone).
/// Plate sets and plates are 1-based; plates are standard 96-well.
pub fn export_plate_maps(layout: &LayoutDesign) -> String {
    let mut w = tsv::Writer::new(&PLATE_MAP_HEADER);
    for (set_idx, set) in layout.plate_sets.iter().enumerate() {
        for (well_seq, &clone_idx) in set.iter().enumerate() {
            let plate = well_seq / WELLS_PER_PLATE + 1;
            let well = well_label(well_seq % WELLS_PER_PLATE);
            w.row(&[
                &(set_idx + 1).to_string(),
                &plate.to_string(),
                &well,
                &layout.clone_ids[clone_idx],
            ])
            .expect("clone ids contain no tabs");
        }
    }
    w.finish()
}

/// Parse a plate-map export back into per-set clone-id sequences, in well
/// order. `import(export(layout))` equals the layout's permutations.
pub fn import_plate_maps(text: &str) -> Result<Vec<Vec<String>>, LayoutError> {
    let rows = tsv::parse(text, &PLATE_MAP_HEADER)?;
    let mut sets: Vec<Vec<String>> = Vec::new();
    for row in rows {
        let set: usize = tsv::parse_cell(&row, 0, "plate_set")?;
        let plate: usize = tsv::parse_cell(&row, 1, "plate")?;
        let well = parse_well_label(row.cells[2]).ok_or(LayoutError::BadWell {
            line: row.line,
            well: row.cells[2].to_string(),
        })?;
        if set == 0 || plate == 0 {
            return Err(LayoutError::BadWell {
                line: row.line,
                well: row.cells[2].to_string(),
            });
        }
        while sets.len() < set {
            sets.push(Vec::new());
        }
        let seq = (plate - 1) * WELLS_PER_PLATE + well;
        let target = &mut sets[set - 1];
        while target.len() <= seq {
            target.push(String::new());
        }
        target[seq] = row.cells[3].to_string();
    }
    Ok(sets)
}

const ARRAY_MAP_HEADER: [&str; 5] = ["array_type", "quadrant", "row", "col", "clone_id"];

/// Spot coordinates per array type, 1-based, row-major within quadrants.
pub fn export_array_maps(layout: &LayoutDesign) -> String {
    let mut w = tsv::Writer::new(&ARRAY_MAP_HEADER);
    for tm in &layout.array_types {
        for (p, &clone_idx) in tm.spots.iter().enumerate() {
            let (q, r, c) = layout.position_of_index(p);
            w.row(&[
                &tm.array_type,
                &(q + 1).to_string(),
                &(r + 1).to_string(),
                &(c + 1).to_string(),
                &layout.clone_ids[clone_idx],
            ])
            .expect("clone ids contain no tabs");
        }
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
struct TypeMap {
    config: PrintingConfiguration,
    /// Clone id per position, row-major within quadrants.
    clones: Vec<String>,
}

/// Position-to-clone lookup for a set of array types, either built from a
/// [`LayoutDesign`] or parsed from an `arraymap.tsv` export.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayMapTable {
    maps: BTreeMap<String, TypeMap>,
}

impl ArrayMapTable {
    pub fn parse(text: &str) -> Result<ArrayMapTable, LayoutError> {
        let rows = tsv::parse(text, &ARRAY_MAP_HEADER)?;
        // first pass: geometry per type
        let mut dims: BTreeMap<String, (u32, u32, u32)> = BTreeMap::new();
        for row in &rows {
            let q: u32 = tsv::parse_cell(row, 1, "quadrant")?;
            let r: u32 = tsv::parse_cell(row, 2, "row")?;
            let c: u32 = tsv::parse_cell(row, 3, "col")?;
            let entry = dims.entry(row.cells[0].to_string()).or_insert((0, 0, 0));
            entry.0 = entry.0.max(q);
            entry.1 = entry.1.max(r);
            entry.2 = entry.2.max(c);
        }
        let mut maps = BTreeMap::new();
        for (ty, (q, r, c)) in &dims {
            let config = PrintingConfiguration::new(format!("{ty}-map"), *q, *r, *c);
            maps.insert(
                ty.clone(),
                TypeMap {
                    clones: vec![String::new(); config.spots_per_array()],
                    config,
                },
            );
        }
        for row in &rows {
            let ty = row.cells[0];
            let q: u32 = tsv::parse_cell(row, 1, "quadrant")?;
            let r: u32 = tsv::parse_cell(row, 2, "row")?;
            let c: u32 = tsv::parse_cell(row, 3, "col")?;
            if q == 0 || r == 0 || c == 0 {
                return Err(tsv::TsvError::Cell {
                    line: row.line,
                    column: "quadrant",
                    message: "coordinates are 1-based".into(),
                }
                .into());
            }
            let map = maps.get_mut(ty).expect("type collected in first pass");
            let idx = position_index(&map.config, q - 1, r - 1, c - 1);
            map.clones[idx] = row.cells[4].to_string();
        }
        Ok(ArrayMapTable { maps })
    }

    pub fn array_types(&self) -> impl Iterator<Item = &str> {
        self.maps.keys().map(|s| s.as_str())
    }

    pub fn has_type(&self, array_type: &str) -> bool {
        self.maps.contains_key(array_type)
    }

    /// Clone at a zero-based position of the given array type.
    pub fn clone_at(&self, array_type: &str, pos: Position) -> Option<&str> {
        let map = self.maps.get(array_type)?;
        let idx = position_index(&map.config, pos.0, pos.1, pos.2);
        map.clones.get(idx).map(|s| s.as_str()).filter(|s| !s.is_empty())
    }

    /// All positions of an array type in row-major order with their clones.
    pub fn positions(&self, array_type: &str) -> Option<Vec<(Position, &str)>> {
        let map = self.maps.get(array_type)?;
        let mut out = Vec::with_capacity(map.clones.len());
        for (idx, clone) in map.clones.iter().enumerate() {
            if clone.is_empty() {
                continue;
            }
            let per_quadrant = (map.config.rows * map.config.cols) as usize;
            let q = (idx / per_quadrant) as u32;
            let rem = idx % per_quadrant;
            let r = (rem / map.config.cols as usize) as u32;
            let c = (rem % map.config.cols as usize) as u32;
            out.push(((q, r, c), clone.as_str()));
        }
        Some(out)
    }

    /// Distinct clone ids across all types, sorted.
    pub fn all_clones(&self) -> Vec<&str> {
        let mut set = std::collections::BTreeSet::new();
        for map in self.maps.values() {
            for clone in &map.clones {
                if !clone.is_empty() {
                    set.insert(clone.as_str());
                }
            }
        }
        set.into_iter().collect()
    }
}

fn position_index(config: &PrintingConfiguration, q: u32, r: u32, c: u32) -> usize {
    (q as usize * config.rows as usize + r as usize) * config.cols as usize + c as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| i.to_string()).collect()
    }

    fn paper_layout(seed: u64) -> LayoutDesign {
        let config = PrintingConfiguration::new("Stanford4x16x24", 4, 16, 24);
        generate_layout(&ids(384), &config, 4, 2, seed).unwrap()
    }

    #[test]
    fn paper_scale_maps_have_1536_spots() {
        let layout = paper_layout(7);
        assert_eq!(layout.array_types.len(), 2);
        for tm in &layout.array_types {
            assert_eq!(tm.spots.len(), 1536);
        }
        assert_eq!(layout.plate_sets.len(), 8);
        assert_eq!(layout.replicates_per_slide(), 8);
        assert_eq!(layout.replicates_per_comparison(), 16);
    }

    #[test]
    fn single_clone_single_spot_is_forced() {
        let config = PrintingConfiguration::new("1x1x1", 1, 1, 1);
        let layout = generate_layout(&ids(1), &config, 1, 1, 123).unwrap();
        assert_eq!(layout.array_types[0].spots, vec![0]);
        assert!(verify_layout(&layout).is_valid());
    }

    #[test]
    fn same_seed_same_layout() {
        let a = paper_layout(42);
        let b = paper_layout(42);
        assert_eq!(a, b);
        assert_eq!(export_plate_maps(&a), export_plate_maps(&b));
        assert_eq!(export_array_maps(&a), export_array_maps(&b));
    }

    #[test]
    fn different_seeds_differ() {
        assert_ne!(paper_layout(1).plate_sets, paper_layout(2).plate_sets);
    }

    #[test]
    fn count_mismatch_names_both_quantities() {
        let config = PrintingConfiguration::new("Stanford4x16x24", 4, 16, 24);
        let err = generate_layout(&ids(100), &config, 4, 2, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("400"), "{msg}");
        assert!(msg.contains("1536"), "{msg}");
    }

    #[test]
    fn verify_counts_replicates() {
        let layout = paper_layout(5);
        let report = verify_layout(&layout);
        assert!(report.is_valid(), "{:?}", report.violations);
        for ar in &report.array_reports {
            assert_eq!(ar.total_spots, 1536);
            assert!(ar.replicate_counts.values().all(|&c| c == 4));
            assert_eq!(ar.quadrant_spots, vec![384; 4]);
        }
    }

    #[test]
    fn verify_flags_misplaced_clone() {
        let mut layout = paper_layout(5);
        // move one spot from clone at position 0 to the clone at position 1
        let donor = layout.array_types[0].spots[0];
        let receiver = layout.array_types[0].spots[1];
        assert_ne!(donor, receiver);
        layout.array_types[0].spots[0] = receiver;
        let report = verify_layout(&layout);
        let replicate_violations: Vec<_> = report
            .violations
            .iter()
            .filter(|v| matches!(v, LayoutViolation::ReplicateCount { .. }))
            .collect();
        assert_eq!(replicate_violations.len(), 2);
    }

    #[test]
    fn quadrant_occupancy_matches_naive_tally() {
        let layout = paper_layout(11);
        let report = verify_layout(&layout);
        let per_quadrant = (layout.config.rows * layout.config.cols) as usize;
        for (tm, ar) in layout.array_types.iter().zip(&report.array_reports) {
            for q in 0..layout.config.quadrants as usize {
                let mut distinct = std::collections::BTreeSet::new();
                let mut total = 0;
                for (p, clone) in tm.spots.iter().enumerate() {
                    if p / per_quadrant == q {
                        total += 1;
                        distinct.insert(*clone);
                    }
                }
                assert_eq!(ar.quadrant_spots[q], total);
                assert_eq!(ar.quadrant_distinct_clones[q], distinct.len());
            }
        }
    }

    #[test]
    fn plate_map_export_has_expected_row_count() {
        let layout = paper_layout(3);
        let text = export_plate_maps(&layout);
        // header + 8 sets x 384 wells
        assert_eq!(text.lines().count(), 1 + 8 * 384);
        let layout1 = generate_layout(
            &ids(1),
            &PrintingConfiguration::new("1x1x1", 1, 1, 1),
            1,
            1,
            0,
        )
        .unwrap();
        assert_eq!(export_plate_maps(&layout1).lines().count(), 2);
    }

    #[test]
    fn plate_map_round_trip() {
        let layout = paper_layout(9);
        let sets = import_plate_maps(&export_plate_maps(&layout)).unwrap();
        let expected: Vec<Vec<String>> = layout
            .plate_sets
            .iter()
            .map(|set| set.iter().map(|&ci| layout.clone_ids[ci].clone()).collect())
            .collect();
        assert_eq!(sets, expected);
    }

    #[test]
    fn array_map_table_round_trip() {
        let layout = paper_layout(13);
        let table = ArrayMapTable::parse(&export_array_maps(&layout)).unwrap();
        assert_eq!(table, layout.array_map_table());
        // spot check one position
        let (q, r, c) = layout.position_of_index(100);
        let expected = &layout.clone_ids[layout.array_types[0].spots[100]];
        assert_eq!(table.clone_at("A", (q, r, c)), Some(expected.as_str()));
    }

    #[test]
    fn plate_sets_are_independent_permutations() {
        // deterministic: fixed seeds, generously sized permutation space
        let config = PrintingConfiguration::new("1x2x4", 1, 2, 4);
        let mut all_equal_runs = 0;
        for seed in 0..100 {
            let layout = generate_layout(&ids(8), &config, 1, 2, seed).unwrap();
            let first = &layout.plate_sets[0];
            if layout.plate_sets.iter().all(|s| s == first) {
                all_equal_runs += 1;
            }
        }
        assert!(all_equal_runs <= 1, "{all_equal_runs} degenerate runs");
    }

    #[test]
    fn config_from_record_and_name() {
        let desc = crate::descriptor::parse_description(
            "PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS",
        )
        .unwrap();
        let config = PrintingConfiguration::from_record(&desc.records[0]).unwrap();
        assert_eq!(config.spots_per_array(), 1536);
        let parsed = PrintingConfiguration::parse_name("Stanford4x16x24").unwrap();
        assert_eq!((parsed.quadrants, parsed.rows, parsed.cols), (4, 16, 24));
        let parsed = PrintingConfiguration::parse_name("Stanford4x22x24").unwrap();
        assert_eq!((parsed.quadrants, parsed.rows, parsed.cols), (4, 22, 24));
        assert!(PrintingConfiguration::parse_name("NoGeometry").is_err());
    }

    #[test]
    fn well_labels_round_trip() {
        for i in 0..96 {
            assert_eq!(parse_well_label(&well_label(i)), Some(i));
        }
        assert_eq!(well_label(0), "A01");
        assert_eq!(well_label(95), "H12");
        assert_eq!(parse_well_label("Z99"), None);
    }
}
