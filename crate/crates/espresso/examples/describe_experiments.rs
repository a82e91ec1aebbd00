//! Parse, query, and diff experiment descriptions.
//!
//! ```bash
//! cargo run -p espresso --example describe_experiments
//! ```

use espresso::descriptor::{
    apply_diff, diff_descriptions, parse_description, query_records, serialize_description,
    CmpOp, Selector, Value,
};

fn main() {
    let text = "\
EXPERIMENT PINE_DROUGHT_GROWTH May-August,2000 \"384 clones\"
DYE CY3 \"Genisphere Kit\"
DYE CY5 \"Genisphere Kit\"
PRINTING_CONFIGURATION Stanford4x16x24 4 16 24 QUADRANTS
TISSUE D4M D4 Needles Unstressed (Control)
TISSUE D4I D4 Needles Intermediate Stressed
CALIBRATION SignalThreshold 0.96
";

    let description = parse_description(text).expect("well-formed description");
    println!("experiment: {}", description.name);
    println!("records: {}", description.records.len());

    // records are self-describing: select by keyword, filter by field
    let descriptions = [description.clone()];
    let dyes = query_records(&descriptions, &Selector::keyword("DYE")).unwrap();
    println!("\ndyes in use:");
    for record in dyes {
        println!("  {record}");
    }

    let stressed = Selector::keyword("TISSUE").with_predicate(
        0,
        CmpOp::Eq,
        Value::Str("D4I".into()),
    );
    for record in query_records(&descriptions, &stressed).unwrap() {
        println!("\nstressed tissue record: {record}");
    }

    // change management: rerun the same experiment with a new threshold
    let mut rerun = description.clone();
    for record in &mut rerun.records {
        if record.keyword == "CALIBRATION" {
            record.fields[1] = Value::Decimal(0.84);
        }
    }
    println!("\nwhat is different between the two runs?");
    let entries = diff_descriptions(&description, &rerun);
    for entry in &entries {
        println!("  {entry}");
    }

    // a diff is also a patch
    let patched = apply_diff(&description, &entries).unwrap();
    assert!(diff_descriptions(&patched, &rerun).is_empty());
    println!("\npatched description matches the rerun:");
    print!("{}", serialize_description(&patched));
}
