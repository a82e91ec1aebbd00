//! Build a fact base with closed-world negatives and mine relational
//! rules over expression levels and functional categories.
//!
//! ```bash
//! cargo run -p espresso --example mine_rules
//! ```

use espresso::rulemine::{
    mine_rules, write_rules_text, Expression, FactBase, HypothesisLanguage,
};

fn main() {
    // a miniature of the drought study: 20 clones, two comparisons,
    // categorized heat-shock and transport clones
    let mut level = Vec::new();
    let mut categories = Vec::new();
    for i in 1..=20u32 {
        let clone = i.to_string();
        // clones 1..=8 respond to mild stress, and of those only clone 1
        // stays up under severe stress
        let mild = if i <= 8 {
            Expression::Positive
        } else if i <= 11 {
            Expression::Negative
        } else {
            Expression::Unchanged
        };
        let severe = if i == 1 {
            Expression::Positive
        } else if i <= 5 {
            Expression::Negative
        } else {
            Expression::Unchanged
        };
        level.push((clone.clone(), "CvsM".to_string(), mild));
        level.push((clone.clone(), "CvsS".to_string(), severe));
        if i <= 6 {
            categories.push((clone.clone(), "heat".to_string()));
        }
        if (7..=11).contains(&i) {
            categories.push((clone, "membranetransportprotein".to_string()));
        }
    }
    // background knowledge: heat is an environmental-response category
    let hierarchy = vec![("heat".to_string(), "environment".to_string())];

    let fb = FactBase::from_parts(level, categories, hierarchy).unwrap();
    println!(
        "fact base: {} clones, {} level facts, {} negative examples",
        fb.clones().len(),
        fb.level_facts().count(),
        fb.negative_examples().len(),
    );
    println!(
        "saturated categories of clone 3: {:?}",
        fb.categories_of("3").unwrap()
    );

    let language = HypothesisLanguage::from_factbase(&fb);
    let mined = mine_rules(&fb, 4, 0.6, &language);
    println!("\nmined rules (support >= 4, confidence >= 0.6):");
    print!("{}", write_rules_text(&mined));

    // growing the body to two literals sharpens the cross-comparison rule
    let language = language.with_max_body_len(2);
    let mined = mine_rules(&fb, 4, 0.99, &language);
    println!("\nexact rules with two-literal bodies:");
    print!("{}", write_rules_text(&mined));
}
