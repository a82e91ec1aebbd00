//! Classify replicated log ratios with the exact binomial sign test.
//!
//! ```bash
//! cargo run -p espresso --example call_expression
//! ```

use espresso::callsig::{
    binomial_upper_tail, classify_clone, sign_test_threshold, ComparisonDataset, ReplicateValue,
    DyeOrientation,
};

fn main() {
    // under a zero-centered null each replicate is positive with
    // probability one half, so counts follow Binomial(n, 1/2)
    println!("P(X >= 12 of 16) = {:.7}", binomial_upper_tail(16, 12).unwrap());
    println!(
        "call threshold for n = 16 at alpha 0.05: {:?}",
        sign_test_threshold(16, 0.05).unwrap()
    );

    // 12 positive log ratios of 16: up-expressed
    let mut values = vec![0.41; 12];
    values.extend([-0.2, -0.33, -0.1, -0.5]);
    let result = classify_clone(&values, 0.05).unwrap();
    println!(
        "\n12+/4-: call={} n={} k+={} k-={} tail={:.7}",
        result.call, result.n, result.k_positive, result.k_negative, result.tail_probability
    );

    // 11 of 16 misses the threshold
    let mut values = vec![0.41; 11];
    values.extend([-0.2; 5]);
    let result = classify_clone(&values, 0.05).unwrap();
    println!(
        "11+/5-: call={} tail={:.7}",
        result.call, result.tail_probability
    );

    // exact zeros are ties: excluded, n shrinks
    let values = [0.3, 0.5, 0.0, 0.0, -0.1, 0.4, 0.8, 0.2];
    let result = classify_clone(&values, 0.05).unwrap();
    println!(
        "with two zeros: n={} (from {} replicates)",
        result.n,
        values.len()
    );

    // a dye-swapped dataset assembled by hand: swapped arrays contribute
    // sign-corrected values, so a consistently up clone stays up
    let dataset = ComparisonDataset {
        comparison_id: "CvsM".into(),
        clones: vec![(
            "EST042".into(),
            (0..16)
                .map(|i| {
                    let swapped = i % 2 == 1;
                    ReplicateValue {
                        // the swapped arrays measured the reciprocal ratio
                        log_ratio: if swapped {
                            -(0.5f64.ln())
                        } else {
                            2.0f64.ln()
                        },
                        array_id: format!("M{}", i / 4 + 1),
                        quadrant: 0,
                        row: 0,
                        col: i as u32,
                        orientation: if swapped {
                            DyeOrientation::Swapped
                        } else {
                            DyeOrientation::Forward
                        },
                    }
                })
                .collect(),
        )],
    };
    let calls = espresso::callsig::classify_all(&dataset, 0.05).unwrap();
    let call = &calls[0];
    println!(
        "\nassembled clone {}: {} in {} (k+={}, n={})",
        call.clone_id, call.call, call.comparison_id, call.k_positive, call.n
    );
}
