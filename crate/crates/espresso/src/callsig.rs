//! Expression calls from replicated log ratios.
//!
//! A comparison of two treatments is hybridized on several arrays, half of
//! them with the dye assignment swapped. Assembly collects each clone's log
//! calibrated ratios across those arrays, negating the swapped ones so every
//! value points the same way, and drops flagged spots. Classification then
//! applies a zero-centered sign test: under the null the number of positive
//! log ratios is binomial with p = 1/2, so a clone is called up (or down)
//! when its positive (or negative) count reaches the smallest threshold
//! whose exact binomial upper tail is at or below alpha. With 16 replicates
//! and alpha 0.05 that threshold is 12.
//!
//! Tail probabilities are computed in exact integer arithmetic and converted
//! to floating point only at the boundary.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::design::ArrayMapTable;
use crate::quant::SpotMeasurement;
use crate::tsv;

#[derive(Debug, Error)]
pub enum CallError {
    #[error("k must satisfy 0 <= k <= n, got n={n}, k={k}")]
    TailArgument { n: u64, k: i64 },
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("replicate vector is empty")]
    NoReplicates,
    #[error("log ratios must be finite")]
    NonFinite,
    #[error("pairing for {comparison} lists no arrays")]
    EmptyPairing { comparison: String },
    #[error("array {array_id} referenced by pairing for {comparison} is absent from spot data")]
    ArrayMissing {
        comparison: String,
        array_id: String,
    },
    #[error("pairing references array type {array_type} absent from the layout")]
    ArrayTypeMissing { array_type: String },
    #[error("tsv: {0}")]
    Tsv(#[from] tsv::TsvError),
    #[error("line {line}: unknown orientation {text:?} (expected forward or swapped)")]
    BadOrientation { line: usize, text: String },
    #[error("line {line}: unknown call {text:?}")]
    BadCall { line: usize, text: String },
}

/// Exact upper tail of the symmetric binomial: P(X >= k) for
/// X ~ Binomial(n, 1/2), as a ratio of big integers.
pub fn binomial_upper_tail_exact(n: u64, k: i64) -> Result<BigRational, CallError> {
    if k < 0 || k as u64 > n {
        return Err(CallError::TailArgument { n, k });
    }
    let k = k as u64;
    let mut favorable = BigUint::zero();
    // running C(n, i) from i = k upward
    let mut coeff = binomial_coefficient(n, k);
    for i in k..=n {
        favorable += &coeff;
        if i < n {
            // C(n, i+1) = C(n, i) * (n - i) / (i + 1)
            coeff = coeff * BigUint::from(n - i) / BigUint::from(i + 1);
        }
    }
    let denom = BigUint::one() << n;
    Ok(BigRational::new(favorable.into(), denom.into()))
}

fn binomial_coefficient(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

/// [`binomial_upper_tail_exact`] converted to floating point.
pub fn binomial_upper_tail(n: u64, k: i64) -> Result<f64, CallError> {
    Ok(binomial_upper_tail_exact(n, k)?
        .to_f64()
        .expect("tail probability fits in f64"))
}

/// Smallest count t whose exact upper tail is at or below alpha, or `None`
/// when even t = n is not significant. Alpha is compared as the exact
/// rational value of the given float.
///
/// One downward sweep: the tail at t accumulates C(n, t) onto the tail at
/// t + 1, and tails grow as t falls, so the sweep stops at the first
/// threshold crossing.
pub fn sign_test_threshold(n: u64, alpha: f64) -> Result<Option<u64>, CallError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CallError::AlphaOutOfRange(alpha));
    }
    let alpha = BigRational::from_float(alpha).expect("alpha is finite");
    let denom: num_bigint::BigInt = (BigUint::one() << n).into();
    let mut favorable = BigUint::zero();
    let mut coeff = BigUint::one(); // C(n, n)
    let mut best = None;
    for t in (0..=n).rev() {
        favorable += &coeff;
        let tail = BigRational::new(favorable.clone().into(), denom.clone());
        if tail <= alpha {
            best = Some(t);
        } else {
            break;
        }
        if t > 0 {
            // C(n, t-1) = C(n, t) * t / (n - t + 1)
            coeff = coeff * BigUint::from(t) / BigUint::from(n - t + 1);
        }
    }
    Ok(best)
}

/// Three-way response classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallClass {
    Up,
    Down,
    Unchanged,
}

impl CallClass {
    pub fn name(self) -> &'static str {
        match self {
            CallClass::Up => "up",
            CallClass::Down => "down",
            CallClass::Unchanged => "unchanged",
        }
    }

    pub fn parse(s: &str) -> Option<CallClass> {
        match s {
            "up" => Some(CallClass::Up),
            "down" => Some(CallClass::Down),
            "unchanged" => Some(CallClass::Unchanged),
            _ => None,
        }
    }
}

impl fmt::Display for CallClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sign-test outcome for one replicate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SignTestResult {
    pub call: CallClass,
    /// Replicates entering the test; exact zeros are excluded and shrink n.
    pub n: usize,
    pub k_positive: usize,
    pub k_negative: usize,
    /// Exact upper tail at the larger of the two counts.
    pub tail_probability: f64,
}

/// Classify one clone's replicate log ratios.
///
/// Up and down are tested independently, each one-sided at `alpha`. Exact
/// zeros count in neither direction and reduce n, the standard sign-test
/// treatment of ties against a zero-centered null.
pub fn classify_clone(log_ratios: &[f64], alpha: f64) -> Result<SignTestResult, CallError> {
    if log_ratios.is_empty() {
        return Err(CallError::NoReplicates);
    }
    if log_ratios.iter().any(|v| !v.is_finite()) {
        return Err(CallError::NonFinite);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CallError::AlphaOutOfRange(alpha));
    }
    let k_positive = log_ratios.iter().filter(|&&v| v > 0.0).count();
    let k_negative = log_ratios.iter().filter(|&&v| v < 0.0).count();
    let n = k_positive + k_negative;

    let threshold = sign_test_threshold(n as u64, alpha)?;
    let call = match threshold {
        Some(t) if k_positive as u64 >= t => CallClass::Up,
        Some(t) if k_negative as u64 >= t => CallClass::Down,
        _ => CallClass::Unchanged,
    };
    let k_max = k_positive.max(k_negative) as i64;
    let tail_probability = binomial_upper_tail(n as u64, k_max)?;
    Ok(SignTestResult {
        call,
        n,
        k_positive,
        k_negative,
        tail_probability,
    })
}

/// Dye assignment of one array within a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyeOrientation {
    Forward,
    Swapped,
}

impl DyeOrientation {
    pub fn name(self) -> &'static str {
        match self {
            DyeOrientation::Forward => "forward",
            DyeOrientation::Swapped => "swapped",
        }
    }

    pub fn parse(s: &str) -> Option<DyeOrientation> {
        match s {
            "forward" => Some(DyeOrientation::Forward),
            "swapped" => Some(DyeOrientation::Swapped),
            _ => None,
        }
    }
}

/// One hybridized array contributing to a comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingArray {
    pub array_id: String,
    pub array_type: String,
    pub orientation: DyeOrientation,
}

/// A comparison descriptor: which arrays carry it and how each is labeled.
/// The classic design pairs two slides of different types, four arrays in
/// all, labeled reciprocally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonPairing {
    pub comparison_id: String,
    pub arrays: Vec<PairingArray>,
}

/// Provenance of one replicate value.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateValue {
    pub log_ratio: f64,
    pub array_id: String,
    pub quadrant: u32,
    pub row: u32,
    pub col: u32,
    pub orientation: DyeOrientation,
}

/// All replicate vectors for one comparison, keyed by clone in clone order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonDataset {
    pub comparison_id: String,
    pub clones: Vec<(String, Vec<ReplicateValue>)>,
}

/// Clone ids sort numerically when they are plain integers, otherwise
/// lexicographically; numeric ids come first.
fn clone_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Collect each clone's sign-corrected log calibrated ratios for one
/// comparison.
///
/// Forward arrays contribute `ln(calibrated)`, swapped arrays
/// `-ln(calibrated)`; values are concatenated in (array, position) order.
/// Flagged spots are omitted, shrinking that clone's replicate count. Every
/// array named by the pairing must be present in the spot data.
pub fn assemble_replicates(
    spots: &[SpotMeasurement],
    maps: &ArrayMapTable,
    pairing: &ComparisonPairing,
) -> Result<ComparisonDataset, CallError> {
    if pairing.arrays.is_empty() {
        return Err(CallError::EmptyPairing {
            comparison: pairing.comparison_id.clone(),
        });
    }
    let mut by_position: BTreeMap<(&str, u32, u32, u32), &SpotMeasurement> = BTreeMap::new();
    for spot in spots {
        by_position.insert(
            (spot.array_id.as_str(), spot.quadrant, spot.row, spot.col),
            spot,
        );
    }
    let arrays_present: std::collections::BTreeSet<&str> =
        spots.iter().map(|s| s.array_id.as_str()).collect();

    let mut clones: BTreeMap<&str, Vec<ReplicateValue>> = BTreeMap::new();
    for array in &pairing.arrays {
        if !arrays_present.contains(array.array_id.as_str()) {
            return Err(CallError::ArrayMissing {
                comparison: pairing.comparison_id.clone(),
                array_id: array.array_id.clone(),
            });
        }
        let positions =
            maps.positions(&array.array_type)
                .ok_or_else(|| CallError::ArrayTypeMissing {
                    array_type: array.array_type.clone(),
                })?;
        for ((q, r, c), clone_id) in positions {
            let entry = clones.entry(clone_id).or_default();
            let Some(spot) = by_position.get(&(array.array_id.as_str(), q, r, c)) else {
                continue;
            };
            if !spot.flags.is_clean() {
                continue;
            }
            let Some(ratio) = spot.calibrated_ratio else {
                continue;
            };
            let log = ratio.ln();
            entry.push(ReplicateValue {
                log_ratio: match array.orientation {
                    DyeOrientation::Forward => log,
                    DyeOrientation::Swapped => -log,
                },
                array_id: array.array_id.clone(),
                quadrant: q,
                row: r,
                col: c,
                orientation: array.orientation,
            });
        }
    }

    let mut clone_list: Vec<(String, Vec<ReplicateValue>)> = clones
        .into_iter()
        .map(|(id, values)| (id.to_string(), values))
        .collect();
    clone_list.sort_by(|a, b| clone_id_order(&a.0, &b.0));
    Ok(ComparisonDataset {
        comparison_id: pairing.comparison_id.clone(),
        clones: clone_list,
    })
}

/// One clone's call for one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionCall {
    pub clone_id: String,
    pub comparison_id: String,
    pub call: CallClass,
    pub n: usize,
    pub k_positive: usize,
    pub k_negative: usize,
    pub tail_probability: f64,
}

/// Classify every clone of a comparison dataset, in clone order.
///
/// A clone with no usable replicates (all spots flagged) is reported
/// unchanged with n = 0 rather than failing the run.
pub fn classify_all(dataset: &ComparisonDataset, alpha: f64) -> Result<Vec<ExpressionCall>, CallError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CallError::AlphaOutOfRange(alpha));
    }
    let mut calls = Vec::with_capacity(dataset.clones.len());
    for (clone_id, values) in &dataset.clones {
        let result = if values.is_empty() {
            SignTestResult {
                call: CallClass::Unchanged,
                n: 0,
                k_positive: 0,
                k_negative: 0,
                tail_probability: 1.0,
            }
        } else {
            let logs: Vec<f64> = values.iter().map(|v| v.log_ratio).collect();
            classify_clone(&logs, alpha)?
        };
        calls.push(ExpressionCall {
            clone_id: clone_id.clone(),
            comparison_id: dataset.comparison_id.clone(),
            call: result.call,
            n: result.n,
            k_positive: result.k_positive,
            k_negative: result.k_negative,
            tail_probability: result.tail_probability,
        });
    }
    Ok(calls)
}

const PAIRING_HEADER: [&str; 4] = ["comparison", "array_id", "array_type", "orientation"];

/// Parse `pairing.tsv`: one row per array, grouped into comparisons in
/// first-appearance order.
pub fn read_pairing_tsv(text: &str) -> Result<Vec<ComparisonPairing>, CallError> {
    let mut pairings: Vec<ComparisonPairing> = Vec::new();
    for row in tsv::parse(text, &PAIRING_HEADER)? {
        let orientation =
            DyeOrientation::parse(row.cells[3]).ok_or_else(|| CallError::BadOrientation {
                line: row.line,
                text: row.cells[3].to_string(),
            })?;
        let array = PairingArray {
            array_id: row.cells[1].to_string(),
            array_type: row.cells[2].to_string(),
            orientation,
        };
        match pairings
            .iter_mut()
            .find(|p| p.comparison_id == row.cells[0])
        {
            Some(p) => p.arrays.push(array),
            None => pairings.push(ComparisonPairing {
                comparison_id: row.cells[0].to_string(),
                arrays: vec![array],
            }),
        }
    }
    Ok(pairings)
}

pub fn write_pairing_tsv(pairings: &[ComparisonPairing]) -> String {
    let mut w = tsv::Writer::new(&PAIRING_HEADER);
    for p in pairings {
        for a in &p.arrays {
            w.row(&[
                &p.comparison_id,
                &a.array_id,
                &a.array_type,
                a.orientation.name(),
            ])
            .expect("identifiers contain no tabs");
        }
    }
    w.finish()
}

const CALLS_HEADER: [&str; 7] = [
    "clone_id",
    "comparison",
    "call",
    "n",
    "k_pos",
    "k_neg",
    "tail_probability",
];

/// Serialize expression calls; tail probabilities carry seven decimals.
pub fn write_calls_tsv(calls: &[ExpressionCall]) -> String {
    let mut w = tsv::Writer::new(&CALLS_HEADER);
    for c in calls {
        w.row(&[
            &c.clone_id,
            &c.comparison_id,
            c.call.name(),
            &c.n.to_string(),
            &c.k_positive.to_string(),
            &c.k_negative.to_string(),
            &format!("{:.7}", c.tail_probability),
        ])
        .expect("identifiers contain no tabs");
    }
    w.finish()
}

pub fn read_calls_tsv(text: &str) -> Result<Vec<ExpressionCall>, CallError> {
    let mut out = Vec::new();
    for row in tsv::parse(text, &CALLS_HEADER)? {
        let call = CallClass::parse(row.cells[2]).ok_or_else(|| CallError::BadCall {
            line: row.line,
            text: row.cells[2].to_string(),
        })?;
        out.push(ExpressionCall {
            clone_id: row.cells[0].to_string(),
            comparison_id: row.cells[1].to_string(),
            call,
            n: tsv::parse_cell(&row, 3, "n")?,
            k_positive: tsv::parse_cell(&row, 4, "k_pos")?,
            k_negative: tsv::parse_cell(&row, 5, "k_neg")?,
            tail_probability: tsv::parse_cell(&row, 6, "tail_probability")?,
        });
    }
    Ok(out)
}
