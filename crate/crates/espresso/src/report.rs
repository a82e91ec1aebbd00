//! Human-readable summaries of a finished analysis.

use std::collections::BTreeMap;

use crate::callsig::{CallClass, ExpressionCall};
use crate::rulemine::MinedRule;
use crate::tsv;

/// Raw clone-to-category table, many categories per clone allowed.
pub type CategoryTable = BTreeMap<String, Vec<String>>;

const CATEGORIES_HEADER: [&str; 2] = ["clone_id", "category"];

pub fn read_categories_tsv(text: &str) -> Result<CategoryTable, tsv::TsvError> {
    let mut table: CategoryTable = BTreeMap::new();
    for row in tsv::parse(text, &CATEGORIES_HEADER)? {
        table
            .entry(row.cells[0].to_string())
            .or_default()
            .push(row.cells[1].to_string());
    }
    Ok(table)
}

pub fn write_categories_tsv(table: &CategoryTable) -> String {
    let mut w = tsv::Writer::new(&CATEGORIES_HEADER);
    for (clone, cats) in table {
        for cat in cats {
            w.row(&[clone, cat]).expect("names contain no tabs");
        }
    }
    w.finish()
}

/// Render per-comparison call counts, the per-category breakdown of
/// up-regulated clones, and the mined rules with confidence percentages
/// rounded to two decimals. Clones absent from the category table are
/// listed as uncategorized.
pub fn report(calls: &[ExpressionCall], rules: &[MinedRule], categories: &CategoryTable) -> String {
    let mut out = String::new();

    out.push_str("Expression call summary\n");
    let mut by_comparison: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for call in calls {
        let counts = by_comparison.entry(&call.comparison_id).or_default();
        match call.call {
            CallClass::Up => counts.0 += 1,
            CallClass::Down => counts.1 += 1,
            CallClass::Unchanged => counts.2 += 1,
        }
    }
    if by_comparison.is_empty() {
        out.push_str("  (no calls)\n");
    }
    for (comparison, (up, down, unchanged)) in &by_comparison {
        out.push_str(&format!(
            "  {comparison}: {up} up, {down} down, {unchanged} unchanged\n"
        ));
    }

    out.push_str("\nUp-regulated clones by category\n");
    let mut any_up = false;
    for comparison in by_comparison.keys() {
        let ups: Vec<&ExpressionCall> = calls
            .iter()
            .filter(|c| c.comparison_id == *comparison && c.call == CallClass::Up)
            .collect();
        if ups.is_empty() {
            continue;
        }
        any_up = true;
        out.push_str(&format!("  {comparison}:\n"));
        let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
        let mut uncategorized = 0usize;
        for call in ups {
            match categories.get(&call.clone_id) {
                Some(cats) if !cats.is_empty() => {
                    for cat in cats {
                        *per_category.entry(cat).or_default() += 1;
                    }
                }
                _ => uncategorized += 1,
            }
        }
        for (category, count) in per_category {
            out.push_str(&format!("    {category}: {count}\n"));
        }
        if uncategorized > 0 {
            out.push_str(&format!("    uncategorized: {uncategorized}\n"));
        }
    }
    if !any_up {
        out.push_str("  (none)\n");
    }

    out.push_str("\nMined rules\n");
    if rules.is_empty() {
        out.push_str("  (none)\n");
    }
    for (rule, stats) in rules {
        match stats.confidence() {
            Some((h, s)) => out.push_str(&format!(
                "  {rule}  [support {}, confidence {h}/{s} = {}]\n",
                stats.body_support,
                crate::rulemine::render_percent(h, s),
            )),
            None => out.push_str(&format!(
                "  {rule}  [support {}, confidence undefined]\n",
                stats.body_support
            )),
        }
    }

    out
}
