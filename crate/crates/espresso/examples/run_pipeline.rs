//! Run the whole pipeline from a manifest: design, quant, classify, mine,
//! then render the report and diff two run manifests.
//!
//! ```bash
//! cargo run -p espresso --example run_pipeline
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use espresso::callsig::read_calls_tsv;
use espresso::descriptor::{diff_descriptions, parse_description};
use espresso::pipeline::{run_pipeline, RunManifest, Stage};
use espresso::report::{read_categories_tsv, report};
use espresso::rulemine::parse_rules_text;

/// Eight clones, two replicates on each of two array types (1x4x4 = 16
/// spots per array), one comparison on four reciprocally labeled arrays.
/// Clone 1 is up (true ratio 2), clone 2 down (0.5); the rest carry a
/// sign-balanced pattern so they call unchanged.
fn synthesize_inputs(dir: &Path) -> std::io::Result<RunManifest> {
    fs::create_dir_all(dir)?;

    let clone_ids: Vec<String> = (1..=8).map(|i| i.to_string()).collect();
    fs::write(dir.join("clones.txt"), clone_ids.join("\n") + "\n")?;

    let config = espresso::design::PrintingConfiguration::parse_name("Demo1x4x4").unwrap();
    let layout = espresso::design::generate_layout(&clone_ids, &config, 2, 2, 7).unwrap();
    let maps = layout.array_map_table();

    let arrays = [
        ("M1", "A", false),
        ("M2", "A", true),
        ("M3", "B", false),
        ("M4", "B", true),
    ];
    let mut pairing = String::from("comparison\tarray_id\tarray_type\torientation\n");
    for (id, ty, swapped) in arrays {
        let orientation = if swapped { "swapped" } else { "forward" };
        pairing.push_str(&format!("CvsM\t{id}\t{ty}\t{orientation}\n"));
    }
    fs::write(dir.join("pairing.tsv"), pairing)?;

    let mut pixels = String::from("array_id\tquadrant\trow\tcol\tpx_row\tpx_col\tch1\tch2\n");
    let mut mask = String::from("array_id\tquadrant\trow\tcol\tpx_row\tpx_col\n");
    for (id, ty, swapped) in arrays {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for ((q, r, c), clone) in maps.positions(ty).unwrap() {
            let occurrence = seen.entry(clone).or_insert(0);
            let true_ratio: f64 = match clone {
                "1" => 2.0,
                "2" => 0.5,
                _ => [1.25, 0.8][*occurrence % 2],
            };
            *occurrence += 1;
            let measured = if swapped { 1.0 / true_ratio } else { true_ratio };
            let spot_ch1 = 100.0 + (400.0 * measured).round();
            for (i, jitter) in [-1.0, -1.0, 0.0, 1.0, 1.0].iter().enumerate() {
                pixels.push_str(&format!(
                    "{id}\t{}\t{}\t{}\t0\t{i}\t{}\t{}\n",
                    q + 1,
                    r + 1,
                    c + 1,
                    spot_ch1 + jitter,
                    500.0 + jitter
                ));
                mask.push_str(&format!("{id}\t{}\t{}\t{}\t0\t{i}\n", q + 1, r + 1, c + 1));
            }
            for i in 0..8 {
                let jitter = if i % 2 == 0 { -1.0 } else { 1.0 };
                pixels.push_str(&format!(
                    "{id}\t{}\t{}\t{}\t1\t{i}\t{}\t{}\n",
                    q + 1,
                    r + 1,
                    c + 1,
                    100.0 + jitter,
                    100.0 + jitter
                ));
            }
        }
    }
    fs::write(dir.join("pixels.tsv"), pixels)?;
    fs::write(dir.join("mask.tsv"), mask)?;

    fs::write(
        dir.join("categories.tsv"),
        "clone_id\tcategory\n1\theat\n2\ttransport\n3\theat\n",
    )?;
    fs::write(dir.join("hierarchy.tsv"), "child\tparent\nheat\tenvironment\n")?;

    let mut manifest = RunManifest::new("DEMO_PIPELINE", 7);
    manifest.stages = vec![Stage::Design, Stage::Quant, Stage::Classify, Stage::Mine];
    manifest.config_name = Some("Demo1x4x4".into());
    manifest.params.replicates = 2;
    manifest.params.min_support = 2;
    for (role, file) in [
        ("clones", "clones.txt"),
        ("pixels", "pixels.tsv"),
        ("mask", "mask.tsv"),
        ("pairing", "pairing.tsv"),
        ("categories", "categories.tsv"),
        ("hierarchy", "hierarchy.tsv"),
    ] {
        manifest.inputs.insert(role.into(), dir.join(file));
    }
    Ok(manifest)
}

fn main() -> std::io::Result<()> {
    let base = std::env::temp_dir().join("espresso-demo");
    let inputs = base.join("inputs");
    let manifest = synthesize_inputs(&inputs)?;

    let run_dir = base.join("run1");
    let summary = run_pipeline(&manifest, &run_dir).expect("pipeline runs");
    println!("ran stages: {:?}", summary.ran_stages);
    for artifact in &summary.artifacts {
        println!("  wrote {}", artifact.display());
    }

    let calls = read_calls_tsv(&fs::read_to_string(run_dir.join("calls.tsv"))?).unwrap();
    let rules = parse_rules_text(&fs::read_to_string(run_dir.join("rules.txt"))?).unwrap();
    let categories = read_categories_tsv(&fs::read_to_string(inputs.join("categories.tsv"))?)
        .unwrap();
    println!("\n{}", report(&calls, &rules, &categories));

    // change management: rerun with a looser confidence threshold and ask
    // what differs between the two run directories
    let mut relaxed = manifest.clone();
    relaxed.params.min_confidence = 0.5;
    let run2 = base.join("run2");
    run_pipeline(&relaxed, &run2).expect("second run");
    let a = parse_description(&fs::read_to_string(run_dir.join("manifest.expd"))?).unwrap();
    let b = parse_description(&fs::read_to_string(run2.join("manifest.expd"))?).unwrap();
    println!("difference between run1 and run2:");
    for entry in diff_descriptions(&a, &b) {
        println!("  {entry}");
    }
    Ok(())
}
