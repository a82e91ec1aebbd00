//! Spot quantification: segmentation, background-corrected ratios, flags,
//! and per-array calibration.
//!
//! A grid cell holds the two-channel pixel matrix around one nominal spot
//! plus the candidate spot mask. The mask is accepted as the spot when a
//! one-sided Mann-Whitney test finds its intensities stochastically greater
//! than the surrounding background at the requested confidence (alpha 0.01
//! for the conventional 99% level). Mean spot and background intensities
//! per channel give the background-corrected ratio, and a per-array
//! calibration factor re-centers the log-ratio distribution so an
//! unchanged clone has median log ratio zero.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::design::ArrayMapTable;
use crate::tsv;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("intensities must be finite")]
    NonFinite,
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("candidate mask has {0} pixels; at least 4 are required")]
    MaskTooSmall(usize),
    #[error("candidate mask covers the whole cell; background would be empty")]
    EmptyBackground,
    #[error("mask references pixel ({0}, {1}) absent from the cell")]
    MaskNotSubset(u32, u32),
    #[error("cell has no pixels")]
    EmptyCell,
    #[error("all measurements are flagged; cannot calibrate")]
    AllFlagged,
    #[error("calibration did not converge in 50 iterations")]
    DidNotConverge,
    #[error("array {0}: {1}")]
    Array(String, Box<QuantError>),
    #[error("tsv: {0}")]
    Tsv(#[from] tsv::TsvError),
}

/// Mann-Whitney result for the alternative "xs stochastically greater".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U for the first sample, computed with midranks.
    pub u: f64,
    /// One-sided p-value: exact for pooled sizes up to 12, normal
    /// approximation with tie correction beyond.
    pub p_value: f64,
}

/// One-sided Mann-Whitney U test of `xs` greater than `ys`.
///
/// U uses the midrank method, so tied observations contribute half-wins.
/// For `|xs| + |ys| <= 12` the p-value is exact: the observed U is referred
/// to the full distribution of U over all rank assignments. Larger samples
/// use the normal approximation with tie correction and continuity
/// correction.
pub fn mann_whitney(xs: &[f64], ys: &[f64]) -> Result<MannWhitney, QuantError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(QuantError::EmptySample);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(QuantError::NonFinite);
    }
    let n = xs.len();
    let m = ys.len();
    let total = n + m;

    let mut pooled: Vec<(f64, bool)> = xs
        .iter()
        .map(|&v| (v, true))
        .chain(ys.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // midranks and tie census in one pass over runs of equal values
    let mut rank_sum_x = 0.0f64;
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < total {
        let mut j = i + 1;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let run = (j - i) as f64;
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_x += midrank;
            }
        }
        tie_term += run * run * run - run;
        i = j;
    }
    let u = rank_sum_x - (n * (n + 1)) as f64 / 2.0;

    let p_value = if total <= 12 {
        classical_u_tail(n, m, u)
    } else {
        let nm = (n * m) as f64;
        let nt = total as f64;
        let sigma_sq = nm / 12.0 * (nt + 1.0 - tie_term / (nt * (nt - 1.0)));
        if sigma_sq <= 0.0 {
            0.5
        } else {
            let z = (u - nm / 2.0 - 0.5) / sigma_sq.sqrt();
            normal_sf(z)
        }
    };

    Ok(MannWhitney { u, p_value })
}

/// Exact tail of the null distribution of U for sample sizes (n, m):
/// probability over all equally likely assignments of the ranks 1..n+m that
/// U reaches at least `u_obs`. U takes integer values; a half-integer
/// observed U (from midranks) falls between them and collects the tail
/// above it.
fn classical_u_tail(n: usize, m: usize, u_obs: f64) -> f64 {
    let total = n + m;
    let max_sum = (total - n + 1..=total).sum::<usize>();
    // ways[k][s]: subsets of size k of the ranks seen so far with rank sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for rank in 1..=total {
        for k in (1..=n.min(rank)).rev() {
            for s in (rank..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - rank];
            }
        }
    }
    let offset = n * (n + 1) / 2;
    let mut tail = 0u64;
    let mut all = 0u64;
    for (s, &count) in ways[n].iter().enumerate() {
        if count == 0 {
            continue;
        }
        all += count;
        let u = (s - offset.min(s)) as f64;
        if s >= offset && u >= u_obs {
            tail += count;
        }
    }
    tail as f64 / all as f64
}

/// Upper tail of the standard normal distribution, accurate to about 1e-7.
fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    // Numerical Recipes rational Chebyshev fit, |error| <= 1.2e-7
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277))))))));
    let approx = t * poly.exp();
    if x >= 0.0 {
        approx
    } else {
        2.0 - approx
    }
}

/// One pixel of a grid cell, addressed within the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub row: u32,
    pub col: u32,
    pub ch1: f64,
    pub ch2: f64,
}

/// Which intensities drive segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channel {
    Ch1,
    Ch2,
    /// Per-pixel mean of both channels; the default so a single
    /// segmentation serves both measurements.
    #[default]
    Combined,
}

impl Channel {
    pub fn parse(s: &str) -> Option<Channel> {
        match s {
            "ch1" => Some(Channel::Ch1),
            "ch2" => Some(Channel::Ch2),
            "combined" => Some(Channel::Combined),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ch1 => "ch1",
            Channel::Ch2 => "ch2",
            Channel::Combined => "combined",
        }
    }

    fn intensity(self, p: &Pixel) -> f64 {
        match self {
            Channel::Ch1 => p.ch1,
            Channel::Ch2 => p.ch2,
            Channel::Combined => (p.ch1 + p.ch2) / 2.0,
        }
    }
}

/// The pixel neighborhood of one nominal spot.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub array_id: String,
    pub quadrant: u32,
    pub row: u32,
    pub col: u32,
    pub pixels: Vec<Pixel>,
    /// Candidate spot disk, as pixel coordinates within the cell.
    pub mask: BTreeSet<(u32, u32)>,
}

/// Spot/background partition of a cell, with the detection decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub detected: bool,
    pub u_statistic: f64,
    pub p_value: f64,
    pub spot: BTreeSet<(u32, u32)>,
    pub background: BTreeSet<(u32, u32)>,
}

/// Test the candidate mask against its background.
///
/// Detection means the mask intensities are stochastically greater than the
/// complement at level `alpha`; the partition is returned either way, with
/// `detected` false meaning the spot is absent.
pub fn segment_spot(
    cell: &GridCell,
    channel: Channel,
    alpha: f64,
) -> Result<Segmentation, QuantError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(QuantError::AlphaOutOfRange(alpha));
    }
    if cell.pixels.is_empty() {
        return Err(QuantError::EmptyCell);
    }
    if cell.mask.len() < 4 {
        return Err(QuantError::MaskTooSmall(cell.mask.len()));
    }
    let coords: BTreeSet<(u32, u32)> = cell.pixels.iter().map(|p| (p.row, p.col)).collect();
    if let Some(&(r, c)) = cell.mask.iter().find(|rc| !coords.contains(rc)) {
        return Err(QuantError::MaskNotSubset(r, c));
    }
    if cell.mask.len() == cell.pixels.len() {
        return Err(QuantError::EmptyBackground);
    }

    let mut spot_values = Vec::with_capacity(cell.mask.len());
    let mut background_values = Vec::with_capacity(cell.pixels.len() - cell.mask.len());
    let mut background = BTreeSet::new();
    for p in &cell.pixels {
        if cell.mask.contains(&(p.row, p.col)) {
            spot_values.push(channel.intensity(p));
        } else {
            background_values.push(channel.intensity(p));
            background.insert((p.row, p.col));
        }
    }
    let mw = mann_whitney(&spot_values, &background_values)?;
    Ok(Segmentation {
        detected: mw.p_value <= alpha,
        u_statistic: mw.u,
        p_value: mw.p_value,
        spot: cell.mask.clone(),
        background,
    })
}

/// Quality flags for one spot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpotFlags {
    /// Segmentation did not detect the spot.
    pub absent: bool,
    /// A background-corrected channel mean was not positive.
    pub low_signal: bool,
    /// A spot pixel reached the scanner ceiling.
    pub saturated: bool,
}

impl SpotFlags {
    pub fn is_clean(self) -> bool {
        !self.absent && !self.low_signal && !self.saturated
    }

    pub fn render(self) -> String {
        let mut parts = Vec::new();
        if self.absent {
            parts.push("absent");
        }
        if self.low_signal {
            parts.push("low-signal");
        }
        if self.saturated {
            parts.push("saturated");
        }
        if parts.is_empty() {
            "-".to_string()
        } else {
            parts.join(",")
        }
    }

    pub fn parse(s: &str) -> Option<SpotFlags> {
        let mut flags = SpotFlags::default();
        if s == "-" {
            return Some(flags);
        }
        for part in s.split(',') {
            match part {
                "absent" => flags.absent = true,
                "low-signal" => flags.low_signal = true,
                "saturated" => flags.saturated = true,
                _ => return None,
            }
        }
        Some(flags)
    }
}

/// Per-spot quantification: channel means, the corrected ratio, and the
/// calibrated ratio once [`calibrate_array`] has run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotMeasurement {
    pub array_id: String,
    pub quadrant: u32,
    pub row: u32,
    pub col: u32,
    pub clone_id: Option<String>,
    pub spot_mean: [f64; 2],
    pub background_mean: [f64; 2],
    /// `(spot1 - bg1) / (spot2 - bg2)`, defined only when both
    /// background-corrected means are positive.
    pub corrected_ratio: Option<f64>,
    /// Corrected ratio scaled by the array calibration factor; `None` for
    /// flagged spots, which pass through uncalibrated.
    pub calibrated_ratio: Option<f64>,
    pub flags: SpotFlags,
}

/// Default scanner ceiling: 16-bit full scale.
pub const DEFAULT_SATURATION_CEILING: f64 = 65535.0;

/// Compute channel means and the background-corrected ratio for one cell
/// under a segmentation of that same cell. Degenerate cases become flags,
/// never errors.
pub fn measure_spot(
    cell: &GridCell,
    segmentation: &Segmentation,
    saturation_ceiling: f64,
) -> SpotMeasurement {
    let mut spot_sum = [0.0f64; 2];
    let mut spot_n = 0usize;
    let mut bg_sum = [0.0f64; 2];
    let mut bg_n = 0usize;
    let mut saturated = false;
    for p in &cell.pixels {
        if segmentation.spot.contains(&(p.row, p.col)) {
            spot_sum[0] += p.ch1;
            spot_sum[1] += p.ch2;
            spot_n += 1;
            if p.ch1 >= saturation_ceiling || p.ch2 >= saturation_ceiling {
                saturated = true;
            }
        } else if segmentation.background.contains(&(p.row, p.col)) {
            bg_sum[0] += p.ch1;
            bg_sum[1] += p.ch2;
            bg_n += 1;
        }
    }
    let spot_mean = [
        spot_sum[0] / spot_n.max(1) as f64,
        spot_sum[1] / spot_n.max(1) as f64,
    ];
    let background_mean = [
        bg_sum[0] / bg_n.max(1) as f64,
        bg_sum[1] / bg_n.max(1) as f64,
    ];

    let mut flags = SpotFlags {
        absent: !segmentation.detected,
        low_signal: false,
        saturated,
    };
    let num = spot_mean[0] - background_mean[0];
    let den = spot_mean[1] - background_mean[1];
    let corrected_ratio = if flags.absent {
        None
    } else if num > 0.0 && den > 0.0 && (num / den).is_finite() {
        Some(num / den)
    } else {
        flags.low_signal = true;
        None
    };

    SpotMeasurement {
        array_id: cell.array_id.clone(),
        quadrant: cell.quadrant,
        row: cell.row,
        col: cell.col,
        clone_id: None,
        spot_mean,
        background_mean,
        corrected_ratio,
        calibrated_ratio: None,
        flags,
    }
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Calibrate one array's measurements so the median log calibrated ratio of
/// unflagged spots is zero (within 1e-9).
///
/// The factor is re-estimated from the ratio median — the geometric median
/// for even counts — and refined until the residual median log ratio is
/// inside tolerance, at most 50 rounds. Flagged spots pass through with
/// their corrected ratio intact and no calibrated ratio. Returns the
/// calibration factor `c` with `calibrated = c * corrected`.
pub fn calibrate_array(
    measurements: Vec<SpotMeasurement>,
) -> Result<(f64, Vec<SpotMeasurement>), QuantError> {
    let mut ratios: Vec<f64> = measurements
        .iter()
        .filter(|m| m.flags.is_clean())
        .filter_map(|m| m.corrected_ratio)
        .collect();
    if ratios.is_empty() {
        return Err(QuantError::AllFlagged);
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    let mut divisor = if n % 2 == 1 {
        ratios[n / 2]
    } else {
        (ratios[n / 2 - 1] * ratios[n / 2]).sqrt()
    };

    let mut converged = false;
    for _ in 0..50 {
        let logs: Vec<f64> = ratios.iter().map(|r| (r / divisor).ln()).collect();
        let med = median_of_sorted(&logs);
        if med.abs() <= 1e-9 {
            converged = true;
            break;
        }
        divisor *= med.exp();
    }
    if !converged {
        return Err(QuantError::DidNotConverge);
    }

    let calibrated = measurements
        .into_iter()
        .map(|mut m| {
            m.calibrated_ratio = if m.flags.is_clean() {
                m.corrected_ratio.map(|r| r / divisor)
            } else {
                None
            };
            m
        })
        .collect();
    Ok((divisor.recip(), calibrated))
}

/// Segmentation and measurement parameters for a quantification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub alpha: f64,
    pub channel: Channel,
    pub saturation_ceiling: f64,
}

impl Default for QuantParams {
    fn default() -> Self {
        QuantParams {
            alpha: 0.01,
            channel: Channel::Combined,
            saturation_ceiling: DEFAULT_SATURATION_CEILING,
        }
    }
}

/// Per-array quantification result.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayQuant {
    pub array_id: String,
    pub calibration_factor: f64,
    pub measurements: Vec<SpotMeasurement>,
}

/// Quantify a full set of grid cells: segment and measure every cell, then
/// calibrate each array as a whole. Cells are processed in
/// (array, quadrant, row, col) order, so output is deterministic. When an
/// array map table is supplied, clone ids are attached by position.
pub fn quantify_cells(
    cells: &[GridCell],
    params: &QuantParams,
    maps: Option<(&ArrayMapTable, &BTreeMap<String, String>)>,
) -> Result<Vec<ArrayQuant>, QuantError> {
    let mut by_array: BTreeMap<&str, Vec<&GridCell>> = BTreeMap::new();
    for cell in cells {
        by_array.entry(&cell.array_id).or_default().push(cell);
    }
    let mut out = Vec::new();
    for (array_id, mut cells) in by_array {
        cells.sort_by_key(|c| (c.quadrant, c.row, c.col));
        let mut measurements = Vec::with_capacity(cells.len());
        for cell in cells {
            let seg = segment_spot(cell, params.channel, params.alpha)
                .map_err(|e| QuantError::Array(array_id.to_string(), Box::new(e)))?;
            let mut m = measure_spot(cell, &seg, params.saturation_ceiling);
            if let Some((table, array_types)) = maps {
                if let Some(ty) = array_types.get(array_id) {
                    m.clone_id = table
                        .clone_at(ty, (cell.quadrant, cell.row, cell.col))
                        .map(str::to_string);
                }
            }
            measurements.push(m);
        }
        let (factor, measurements) = calibrate_array(measurements)
            .map_err(|e| QuantError::Array(array_id.to_string(), Box::new(e)))?;
        out.push(ArrayQuant {
            array_id: array_id.to_string(),
            calibration_factor: factor,
            measurements,
        });
    }
    Ok(out)
}

const PIXELS_HEADER: [&str; 8] = [
    "array_id", "quadrant", "row", "col", "px_row", "px_col", "ch1", "ch2",
];
const MASK_HEADER: [&str; 6] = ["array_id", "quadrant", "row", "col", "px_row", "px_col"];

fn grid_coord(row: &tsv::Row<'_>, index: usize, column: &'static str) -> Result<u32, QuantError> {
    let value: u32 = tsv::parse_cell(row, index, column)?;
    if value == 0 {
        return Err(tsv::TsvError::Cell {
            line: row.line,
            column,
            message: "grid coordinates are 1-based".into(),
        }
        .into());
    }
    Ok(value - 1)
}

/// Read `pixels.tsv` plus `mask.tsv` into grid cells. Grid coordinates are
/// 1-based in the files and zero-based in memory, matching the array map
/// convention; pixel coordinates within a cell are opaque labels.
pub fn read_pixel_grid(pixels_tsv: &str, mask_tsv: &str) -> Result<Vec<GridCell>, QuantError> {
    type Key = (String, u32, u32, u32);
    let mut cells: BTreeMap<Key, GridCell> = BTreeMap::new();
    for row in tsv::parse(pixels_tsv, &PIXELS_HEADER)? {
        let key: Key = (
            row.cells[0].to_string(),
            grid_coord(&row, 1, "quadrant")?,
            grid_coord(&row, 2, "row")?,
            grid_coord(&row, 3, "col")?,
        );
        let pixel = Pixel {
            row: tsv::parse_cell(&row, 4, "px_row")?,
            col: tsv::parse_cell(&row, 5, "px_col")?,
            ch1: tsv::parse_cell(&row, 6, "ch1")?,
            ch2: tsv::parse_cell(&row, 7, "ch2")?,
        };
        cells
            .entry(key.clone())
            .or_insert_with(|| GridCell {
                array_id: key.0,
                quadrant: key.1,
                row: key.2,
                col: key.3,
                pixels: Vec::new(),
                mask: BTreeSet::new(),
            })
            .pixels
            .push(pixel);
    }
    for row in tsv::parse(mask_tsv, &MASK_HEADER)? {
        let key: Key = (
            row.cells[0].to_string(),
            grid_coord(&row, 1, "quadrant")?,
            grid_coord(&row, 2, "row")?,
            grid_coord(&row, 3, "col")?,
        );
        let px: (u32, u32) = (
            tsv::parse_cell(&row, 4, "px_row")?,
            tsv::parse_cell(&row, 5, "px_col")?,
        );
        if let Some(cell) = cells.get_mut(&key) {
            cell.mask.insert(px);
        }
    }
    Ok(cells.into_values().collect())
}

const SPOTS_HEADER: [&str; 12] = [
    "array_id",
    "quadrant",
    "row",
    "col",
    "clone_id",
    "spot_mean_ch1",
    "spot_mean_ch2",
    "bg_mean_ch1",
    "bg_mean_ch2",
    "corrected_ratio",
    "calibrated_ratio",
    "flags",
];

/// Serialize spot measurements; one row per spot, columns fixed, grid
/// coordinates 1-based.
pub fn write_spots_tsv(arrays: &[ArrayQuant]) -> String {
    let mut w = tsv::Writer::new(&SPOTS_HEADER);
    for array in arrays {
        for m in &array.measurements {
            let opt = |v: Option<f64>| v.map(tsv::fmt_f64).unwrap_or_default();
            w.row(&[
                &m.array_id,
                &(m.quadrant + 1).to_string(),
                &(m.row + 1).to_string(),
                &(m.col + 1).to_string(),
                m.clone_id.as_deref().unwrap_or(""),
                &tsv::fmt_f64(m.spot_mean[0]),
                &tsv::fmt_f64(m.spot_mean[1]),
                &tsv::fmt_f64(m.background_mean[0]),
                &tsv::fmt_f64(m.background_mean[1]),
                &opt(m.corrected_ratio),
                &opt(m.calibrated_ratio),
                &m.flags.render(),
            ])
            .expect("identifiers contain no tabs");
        }
    }
    w.finish()
}

/// Parse a `spots.tsv` document back into measurements.
pub fn read_spots_tsv(text: &str) -> Result<Vec<SpotMeasurement>, QuantError> {
    let mut out = Vec::new();
    for row in tsv::parse(text, &SPOTS_HEADER)? {
        let opt = |i: usize, col: &'static str| -> Result<Option<f64>, QuantError> {
            if row.cells[i].is_empty() {
                Ok(None)
            } else {
                Ok(Some(tsv::parse_cell(&row, i, col)?))
            }
        };
        out.push(SpotMeasurement {
            array_id: row.cells[0].to_string(),
            quadrant: grid_coord(&row, 1, "quadrant")?,
            row: grid_coord(&row, 2, "row")?,
            col: grid_coord(&row, 3, "col")?,
            clone_id: if row.cells[4].is_empty() {
                None
            } else {
                Some(row.cells[4].to_string())
            },
            spot_mean: [
                tsv::parse_cell(&row, 5, "spot_mean_ch1")?,
                tsv::parse_cell(&row, 6, "spot_mean_ch2")?,
            ],
            background_mean: [
                tsv::parse_cell(&row, 7, "bg_mean_ch1")?,
                tsv::parse_cell(&row, 8, "bg_mean_ch2")?,
            ],
            corrected_ratio: opt(9, "corrected_ratio")?,
            calibrated_ratio: opt(10, "calibrated_ratio")?,
            flags: SpotFlags::parse(row.cells[11]).ok_or(tsv::TsvError::Cell {
                line: row.line,
                column: "flags",
                message: "unknown flag".into(),
            })?,
        });
    }
    Ok(out)
}
