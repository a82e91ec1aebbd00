//! Segment spots, measure background-corrected ratios, and calibrate an
//! array.
//!
//! ```bash
//! cargo run -p espresso --example quantify_spots
//! ```

use std::collections::BTreeSet;

use espresso::quant::{
    calibrate_array, mann_whitney, measure_spot, segment_spot, Channel, GridCell, Pixel,
    DEFAULT_SATURATION_CEILING,
};

/// A 5x5 cell with a 3x3 candidate disk at the center, channel intensities
/// given for the disk; background sits near 100 counts.
fn cell(array: &str, col: u32, spot_ch1: f64, spot_ch2: f64) -> GridCell {
    let mut pixels = Vec::new();
    let mut mask = BTreeSet::new();
    for row in 0..5u32 {
        for c in 0..5u32 {
            let in_disk = (1..=3).contains(&row) && (1..=3).contains(&c);
            let jitter = ((row * 5 + c) % 3) as f64 - 1.0;
            let (ch1, ch2) = if in_disk {
                (spot_ch1 + jitter, spot_ch2 + jitter)
            } else {
                (100.0 + jitter, 100.0 + jitter)
            };
            pixels.push(Pixel { row, col: c, ch1, ch2 });
            if in_disk {
                mask.insert((row, c));
            }
        }
    }
    GridCell {
        array_id: array.into(),
        quadrant: 0,
        row: 0,
        col,
        pixels,
        mask,
    }
}

fn main() {
    // the segmentation statistic on its own
    let bright = mann_whitney(&[410.0, 395.0, 402.0], &[99.0, 101.0, 100.0]).unwrap();
    println!(
        "bright spot vs background: U = {}, one-sided p = {:.6}",
        bright.u, bright.p_value
    );

    // a small array: two real spots, one empty position, one saturated
    let cells = vec![
        cell("A1", 0, 900.0, 500.0),   // ratio 2 before calibration
        cell("A1", 1, 500.0, 500.0),   // ratio 1
        cell("A1", 2, 100.0, 100.0),   // indistinguishable from background
        cell("A1", 3, 66000.0, 500.0), // beyond the scanner ceiling
    ];

    let mut measurements = Vec::new();
    for cell in &cells {
        let segmentation = segment_spot(cell, Channel::Combined, 0.01).unwrap();
        let m = measure_spot(cell, &segmentation, DEFAULT_SATURATION_CEILING);
        println!(
            "cell {}: detected={} p={:.4} corrected_ratio={:?} flags={}",
            cell.col,
            segmentation.detected,
            segmentation.p_value,
            m.corrected_ratio,
            m.flags.render(),
        );
        measurements.push(m);
    }

    // calibration centers the unflagged log ratios at zero
    let (factor, calibrated) = calibrate_array(measurements).unwrap();
    println!("\ncalibration factor: {factor}");
    for m in &calibrated {
        println!(
            "cell {}: calibrated_ratio={:?} flags={}",
            m.col,
            m.calibrated_ratio,
            m.flags.render(),
        );
    }
}
