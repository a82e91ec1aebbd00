//! Shared fixtures and independent oracles for the integration tests.
//!
//! The synthetic experiment reproduces the classic scale end to end: 384
//! clones, the 4x16x24 printing configuration, two comparisons on four
//! reciprocally labeled arrays each, and a category table sized so the
//! published rule confidences fall out of the mined output.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

use espresso::callsig::{ComparisonPairing, DyeOrientation, PairingArray};
use espresso::design::{generate_layout, LayoutDesign, PrintingConfiguration};
use espresso::pipeline::{RunManifest, Stage};
use espresso::rulemine::{
    enumerate_hypotheses, evaluate_rule, Expression, FactBase, HypothesisLanguage, MinedRule,
};

pub fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------------------
// synthetic end-to-end experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Up,
    Down,
    Unchanged,
}

/// The designed truth behind the synthetic experiment.
pub struct SyntheticTruth {
    /// Per-clone targets (index = clone id - 1) for CvsM and CvsS.
    pub cvs_m: Vec<Target>,
    pub cvs_s: Vec<Target>,
    pub clone_count: usize,
}

impl SyntheticTruth {
    pub fn paper_scale() -> SyntheticTruth {
        let n = 384;
        let mut cvs_m = vec![Target::Unchanged; n];
        let mut cvs_s = vec![Target::Unchanged; n];
        cvs_m[..72].fill(Target::Up);
        cvs_m[72..115].fill(Target::Down);
        // three of the 72 mild responders stay up under severe stress;
        // 35 drop, the rest flatten
        cvs_s[..3].fill(Target::Up);
        cvs_s[3..38].fill(Target::Down);
        // lignin biosynthesis clones respond negatively under severe stress
        cvs_s[72..81].fill(Target::Down);
        SyntheticTruth {
            cvs_m,
            cvs_s,
            clone_count: n,
        }
    }

    pub fn counts(&self, targets: &[Target]) -> (usize, usize, usize) {
        let up = targets.iter().filter(|t| **t == Target::Up).count();
        let down = targets.iter().filter(|t| **t == Target::Down).count();
        (up, down, targets.len() - up - down)
    }
}

/// Category table sized to reproduce the published confidences on one fact
/// base: heat 5/6, membrane transport 7/11, cell wall 13/16 (all up in
/// CvsM), lignin biosynthesis 9/11 down in CvsS.
pub fn synthetic_categories() -> Vec<(String, String)> {
    let mut cats: Vec<(u32, &str)> = Vec::new();
    cats.extend((1..=5).map(|c| (c, "heat")));
    cats.push((200, "heat"));
    cats.extend((6..=12).map(|c| (c, "membranetransportprotein")));
    cats.extend((201..=204).map(|c| (c, "membranetransportprotein")));
    cats.extend((13..=25).map(|c| (c, "cellwallrelated")));
    cats.extend((205..=207).map(|c| (c, "cellwallrelated")));
    cats.extend((73..=81).map(|c| (c, "ligninbiosynthesis")));
    cats.extend((208..=209).map(|c| (c, "ligninbiosynthesis")));
    cats.into_iter()
        .map(|(c, name)| (c.to_string(), name.to_string()))
        .collect()
}

/// Measured two-channel ratio for one spot: the clone's true ratio under
/// the comparison, reciprocal on swapped arrays. Unchanged clones carry a
/// sign-balanced replicate pattern.
fn measured_ratio(target: Target, occurrence: usize, orientation: DyeOrientation) -> f64 {
    let true_ratio = match target {
        Target::Up => 2.0,
        Target::Down => 0.5,
        Target::Unchanged => [1.25, 0.8, 1.0, 1.0][occurrence % 4],
    };
    match orientation {
        DyeOrientation::Forward => true_ratio,
        DyeOrientation::Swapped => 1.0 / true_ratio,
    }
}

const MASK_JITTER: [f64; 5] = [-1.0, -1.0, 0.0, 1.0, 1.0];
const BG_JITTER: [f64; 8] = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];

pub fn synthetic_pairings() -> Vec<ComparisonPairing> {
    let build = |comparison: &str, prefix: &str| ComparisonPairing {
        comparison_id: comparison.to_string(),
        arrays: vec![
            PairingArray {
                array_id: format!("{prefix}1"),
                array_type: "A".into(),
                orientation: DyeOrientation::Forward,
            },
            PairingArray {
                array_id: format!("{prefix}2"),
                array_type: "A".into(),
                orientation: DyeOrientation::Swapped,
            },
            PairingArray {
                array_id: format!("{prefix}3"),
                array_type: "B".into(),
                orientation: DyeOrientation::Forward,
            },
            PairingArray {
                array_id: format!("{prefix}4"),
                array_type: "B".into(),
                orientation: DyeOrientation::Swapped,
            },
        ],
    };
    vec![build("CvsM", "M"), build("CvsS", "S")]
}

/// Write pixels.tsv and mask.tsv for all arrays of both comparisons.
///
/// Every cell is a 5-pixel candidate disk over an 8-pixel background with
/// zero-mean jitter, so channel means are exact: background 100, spot ch2
/// 500, spot ch1 100 + 400 * ratio. Per-array ratio medians are 1 by
/// construction, so calibration is the identity and the sign pattern of
/// each clone's 16 replicates is exactly the designed one.
fn write_pixels(
    dir: &Path,
    layout: &LayoutDesign,
    truth: &SyntheticTruth,
) -> (PathBuf, PathBuf) {
    let mut pixels = String::from("array_id\tquadrant\trow\tcol\tpx_row\tpx_col\tch1\tch2\n");
    let mut mask = String::from("array_id\tquadrant\trow\tcol\tpx_row\tpx_col\n");
    let maps = layout.array_map_table();

    for pairing in synthetic_pairings() {
        let targets = match pairing.comparison_id.as_str() {
            "CvsM" => &truth.cvs_m,
            _ => &truth.cvs_s,
        };
        for array in &pairing.arrays {
            let positions = maps.positions(&array.array_type).unwrap();
            let mut occurrences: std::collections::BTreeMap<&str, usize> = Default::default();
            for ((q, r, c), clone) in positions {
                let occurrence = occurrences.entry(clone).or_insert(0);
                let clone_idx: usize = clone.parse::<usize>().unwrap() - 1;
                let ratio = measured_ratio(targets[clone_idx], *occurrence, array.orientation);
                *occurrence += 1;

                let spot_ch1 = 100.0 + (400.0 * ratio).round();
                let (q1, r1, c1) = (q + 1, r + 1, c + 1);
                for (i, jitter) in MASK_JITTER.iter().enumerate() {
                    pixels.push_str(&format!(
                        "{}\t{q1}\t{r1}\t{c1}\t0\t{i}\t{}\t{}\n",
                        array.array_id,
                        spot_ch1 + jitter,
                        500.0 + jitter,
                    ));
                    mask.push_str(&format!("{}\t{q1}\t{r1}\t{c1}\t0\t{i}\n", array.array_id));
                }
                for (i, jitter) in BG_JITTER.iter().enumerate() {
                    pixels.push_str(&format!(
                        "{}\t{q1}\t{r1}\t{c1}\t1\t{i}\t{}\t{}\n",
                        array.array_id,
                        100.0 + jitter,
                        100.0 + jitter,
                    ));
                }
            }
        }
    }

    let pixels_path = dir.join("pixels.tsv");
    let mask_path = dir.join("mask.tsv");
    fs::write(&pixels_path, pixels).unwrap();
    fs::write(&mask_path, mask).unwrap();
    (pixels_path, mask_path)
}

/// Build the full synthetic experiment under `dir` and return a manifest
/// running all four stages on it.
pub fn build_paper_experiment(dir: &Path, seed: u64) -> (RunManifest, SyntheticTruth) {
    let truth = SyntheticTruth::paper_scale();
    let clone_ids: Vec<String> = (1..=truth.clone_count).map(|i| i.to_string()).collect();
    let config = PrintingConfiguration::new("Stanford4x16x24", 4, 16, 24);
    let layout = generate_layout(&clone_ids, &config, 4, 2, seed).unwrap();

    fs::create_dir_all(dir).unwrap();
    let clones_path = dir.join("clones.txt");
    fs::write(&clones_path, clone_ids.join("\n") + "\n").unwrap();

    let (pixels_path, mask_path) = write_pixels(dir, &layout, &truth);

    let pairing_path = dir.join("pairing.tsv");
    fs::write(
        &pairing_path,
        espresso::callsig::write_pairing_tsv(&synthetic_pairings()),
    )
    .unwrap();

    let categories_path = dir.join("categories.tsv");
    let mut categories = espresso::report::CategoryTable::new();
    for (clone, cat) in synthetic_categories() {
        categories.entry(clone).or_default().push(cat);
    }
    fs::write(
        &categories_path,
        espresso::report::write_categories_tsv(&categories),
    )
    .unwrap();

    let hierarchy_path = dir.join("hierarchy.tsv");
    fs::write(&hierarchy_path, "child\tparent\nheat\tenvironment\n").unwrap();

    let mut manifest = RunManifest::new("PINE_DROUGHT_SYNTH", seed);
    manifest.stages = vec![Stage::Design, Stage::Quant, Stage::Classify, Stage::Mine];
    manifest.config_name = Some("Stanford4x16x24".into());
    manifest.inputs.insert("clones".into(), clones_path);
    manifest.inputs.insert("pixels".into(), pixels_path);
    manifest.inputs.insert("mask".into(), mask_path);
    manifest.inputs.insert("pairing".into(), pairing_path);
    manifest.inputs.insert("categories".into(), categories_path);
    manifest.inputs.insert("hierarchy".into(), hierarchy_path);
    (manifest, truth)
}

// ---------------------------------------------------------------------------
// independent oracles
// ---------------------------------------------------------------------------

/// Sign-test oracle built on Pascal's triangle and integer cross
/// multiplication, sharing nothing with the library's implementation.
pub struct SignOracle {
    /// pascal[n][k] = C(n, k), n up to 64
    pascal: Vec<Vec<u128>>,
}

impl SignOracle {
    pub fn new(max_n: usize) -> SignOracle {
        let mut pascal = vec![vec![1u128]];
        for n in 1..=max_n {
            let prev = &pascal[n - 1];
            let mut row = vec![1u128; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            pascal.push(row);
        }
        SignOracle { pascal }
    }

    /// Exact comparison of sum_{i>=k} C(n,i) / 2^n against alpha, where
    /// alpha is decomposed into its exact binary fraction.
    fn tail_at_most(&self, n: usize, k: usize, alpha: f64) -> bool {
        let favorable: u128 = self.pascal[n][k..].iter().sum();
        if favorable == 0 {
            return alpha >= 0.0;
        }
        // alpha = mantissa * 2^exp exactly
        let bits = alpha.to_bits();
        let exponent = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exponent == 0 {
            (fraction, -1074i64)
        } else {
            (fraction | (1 << 52), exponent - 1075)
        };
        // favorable / 2^n <= mantissa * 2^exp
        // <=> favorable * 2^shift <= mantissa, shift = -(exp + n)
        let shift = -(exp + n as i64);
        if shift >= 128 {
            return false; // favorable > 0 but alpha below every positive tail
        }
        if shift >= 0 {
            return match favorable.checked_shl(shift as u32) {
                Some(scaled) if favorable.leading_zeros() as i64 >= shift => {
                    scaled <= u128::from(mantissa)
                }
                _ => false,
            };
        }
        // favorable <= mantissa * 2^(-shift)
        let up = (-shift) as u32;
        if up >= u128::from(mantissa).leading_zeros() {
            return true;
        }
        favorable <= (u128::from(mantissa) << up)
    }

    pub fn threshold(&self, n: usize, alpha: f64) -> Option<usize> {
        (0..=n).find(|&t| self.tail_at_most(n, t, alpha))
    }

    /// Classify by brute counting: the expected call for a sign pattern.
    pub fn classify(&self, values: &[f64], alpha: f64) -> (Target, usize, usize, usize) {
        let k_pos = values.iter().filter(|&&v| v > 0.0).count();
        let k_neg = values.iter().filter(|&&v| v < 0.0).count();
        let n = k_pos + k_neg;
        let call = match self.threshold(n, alpha) {
            Some(t) if k_pos >= t => Target::Up,
            Some(t) if k_neg >= t => Target::Down,
            _ => Target::Unchanged,
        };
        (call, n, k_pos, k_neg)
    }
}

/// Full-enumeration Mann-Whitney oracle: every assignment of the pooled
/// ranks to the first sample, observed U computed from midranks.
pub fn mw_enumeration_tail(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let m = ys.len();
    let total = n + m;

    // observed U by midranks
    let mut pooled: Vec<(f64, bool)> = xs
        .iter()
        .map(|&v| (v, true))
        .chain(ys.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i + 1;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let obs = rank_sum - (n * (n + 1)) as f64 / 2.0;

    // enumerate combinations of rank positions for the first sample
    let mut indices: Vec<usize> = (0..n).collect();
    let mut tail = 0u64;
    let mut all = 0u64;
    loop {
        let sum: usize = indices.iter().map(|&i| i + 1).sum();
        let u = sum as f64 - (n * (n + 1)) as f64 / 2.0;
        all += 1;
        if u >= obs {
            tail += 1;
        }
        let mut i = n;
        loop {
            if i == 0 {
                return tail as f64 / all as f64;
            }
            i -= 1;
            if indices[i] != i + total - n {
                break;
            }
        }
        indices[i] += 1;
        for j in i + 1..n {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

/// Exhaustive reference miner: enumerate the language, evaluate every rule,
/// filter by thresholds. No pruning and no incremental evaluation.
pub fn brute_force_mine(
    fb: &FactBase,
    min_support: usize,
    min_confidence: f64,
    language: &HypothesisLanguage,
) -> BTreeSet<(String, usize, usize)> {
    let mut out = BTreeSet::new();
    for rule in enumerate_hypotheses(language) {
        let stats = evaluate_rule(&rule, fb);
        if stats.body_support < min_support.max(1) {
            continue;
        }
        let Some((h, s)) = stats.confidence() else {
            continue;
        };
        // h/s >= min_confidence, exactly: h >= min_confidence * s with the
        // float promoted to its exact rational
        if !ratio_at_least(h, s, min_confidence) {
            continue;
        }
        out.insert((rule.to_string(), stats.body_support, stats.head_hits));
    }
    out
}

/// Exact `h/s >= alpha` for an arbitrary finite float alpha.
fn ratio_at_least(h: usize, s: usize, alpha: f64) -> bool {
    if alpha <= 0.0 {
        return true;
    }
    if h == 0 {
        return false;
    }
    let bits = alpha.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if exponent == 0 {
        (fraction, -1074i64)
    } else {
        (fraction | (1 << 52), exponent - 1075)
    };
    // h / s >= mantissa * 2^exp  <=>  h * 2^-exp >= mantissa * s
    let rhs = u128::from(mantissa).checked_mul(s as u128);
    let shift = -exp;
    if !(0..128).contains(&shift) {
        return shift >= 128; // alpha is at least 1 ulp below any ratio
    }
    let lhs = (h as u128).checked_shl(shift as u32);
    match (lhs, rhs) {
        (Some(l), Some(r)) => l >= r,
        // 2^shift overflow means alpha has a tiny exponent; the ratio wins
        (None, _) => true,
        (_, None) => false,
    }
}

pub fn mined_as_set(mined: &[MinedRule]) -> BTreeSet<(String, usize, usize)> {
    mined
        .iter()
        .map(|(rule, stats)| (rule.to_string(), stats.body_support, stats.head_hits))
        .collect()
}

/// Random small fact base for the miner equivalence study: up to 6 clones,
/// 2 comparisons, 3 base categories under a 2-level hierarchy.
pub fn random_factbase(rng: &mut ChaCha8Rng) -> FactBase {
    let clone_count = 1 + (rng.next_u64() % 6) as usize;
    let comparisons = ["CvsM", "CvsS"];
    let categories = ["heat", "wall", "transport"];
    let mut level = Vec::new();
    let mut cats = Vec::new();
    for c in 0..clone_count {
        let clone = format!("{}", c + 1);
        for cmp in comparisons {
            if rng.next_u64() % 5 < 4 {
                let e = match rng.next_u64() % 3 {
                    0 => Expression::Positive,
                    1 => Expression::Negative,
                    _ => Expression::Unchanged,
                };
                level.push((clone.clone(), cmp.to_string(), e));
            }
        }
        for cat in categories {
            if rng.next_u64() % 5 < 2 {
                cats.push((clone.clone(), cat.to_string()));
            }
        }
    }
    let hierarchy = vec![
        ("heat".to_string(), "environment".to_string()),
        ("wall".to_string(), "structure".to_string()),
        ("transport".to_string(), "environment".to_string()),
    ];
    FactBase::from_parts(level, cats, hierarchy).unwrap()
}
