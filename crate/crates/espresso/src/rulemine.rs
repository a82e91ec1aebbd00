//! Relational rule mining over expression calls and functional categories.
//!
//! The fact base holds one `level(clone, comparison, expression)` fact per
//! call and `category(clone, name)` facts saturated through a containment
//! hierarchy (a clone in `heat` is also in `environment`, transitively, to
//! fixpoint). Under the closed-world assumption each asserted level fact
//! induces two negative examples: the same clone and comparison at the two
//! other expression values.
//!
//! Hypotheses are single-headed rules whose head is a possibly negated
//! level literal and whose body is a conjunction of level and category
//! literals sharing the clone variable. A negated head `~level(A,cmp,e)` is
//! satisfied by a clone exactly when its asserted value for `cmp` is one of
//! the other two expressions. Rules are scored by body support (clones
//! satisfying every body literal) and confidence (the fraction of those
//! also satisfying the head, kept as an exact ratio). The miner enumerates
//! the whole language, pruning a body extension only when the body's
//! support already falls below the support threshold, which no extension
//! can recover; mined output is therefore identical to exhaustive
//! enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;
use num_traits::FromPrimitive;
use thiserror::Error;

use crate::callsig::{CallClass, ExpressionCall};
use crate::tsv;

/// Expression level of a clone in one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expression {
    Positive,
    Negative,
    Unchanged,
}

impl Expression {
    pub const ALL: [Expression; 3] = [
        Expression::Positive,
        Expression::Negative,
        Expression::Unchanged,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Expression::Positive => "positive",
            Expression::Negative => "negative",
            Expression::Unchanged => "unchanged",
        }
    }

    pub fn parse(s: &str) -> Option<Expression> {
        match s {
            "positive" => Some(Expression::Positive),
            "negative" => Some(Expression::Negative),
            "unchanged" => Some(Expression::Unchanged),
            _ => None,
        }
    }

    pub fn from_call(call: CallClass) -> Expression {
        match call {
            CallClass::Up => Expression::Positive,
            CallClass::Down => Expression::Negative,
            CallClass::Unchanged => Expression::Unchanged,
        }
    }

    /// The two complementary values, the closed-world negatives of a fact.
    pub fn complements(self) -> [Expression; 2] {
        match self {
            Expression::Positive => [Expression::Negative, Expression::Unchanged],
            Expression::Negative => [Expression::Positive, Expression::Unchanged],
            Expression::Unchanged => [Expression::Positive, Expression::Negative],
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One `level(clone, comparison, expression)` fact.
pub type LevelFact = (String, String, Expression);
/// One `category(clone, name)` fact.
pub type CategoryFact = (String, String);

#[derive(Debug, Error)]
pub enum FactError {
    #[error(
        "conflicting expression for clone {clone} in {comparison}: {first} vs {second}"
    )]
    ConflictingLevel {
        clone: String,
        comparison: String,
        first: Expression,
        second: Expression,
    },
    #[error("line {line}: unknown expression {text:?}")]
    BadExpression { line: usize, text: String },
    #[error("line {line}: unknown table {text:?} (expected level or category)")]
    BadTable { line: usize, text: String },
    #[error("tsv: {0}")]
    Tsv(#[from] tsv::TsvError),
}

/// The mined-over database: level facts, saturated category facts, and the
/// containment hierarchy they were saturated through.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FactBase {
    clones: Vec<String>,
    comparisons: Vec<String>,
    level: BTreeMap<(String, String), Expression>,
    raw_categories: BTreeMap<String, BTreeSet<String>>,
    saturated_categories: BTreeMap<String, BTreeSet<String>>,
    hierarchy: Vec<(String, String)>,
}

fn clone_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

impl FactBase {
    /// Assemble and saturate a fact base from raw facts.
    ///
    /// Duplicate identical level facts collapse; duplicate conflicting ones
    /// are an integrity error. Category facts are closed over the hierarchy
    /// to fixpoint, so chains like heat -> environment -> stress yield all
    /// ancestors.
    pub fn from_parts(
        level_facts: Vec<LevelFact>,
        category_facts: Vec<CategoryFact>,
        hierarchy: Vec<(String, String)>,
    ) -> Result<FactBase, FactError> {
        let mut level = BTreeMap::new();
        let mut clones = BTreeSet::new();
        let mut comparisons = BTreeSet::new();
        for (clone, comparison, expression) in level_facts {
            clones.insert(clone.clone());
            comparisons.insert(comparison.clone());
            if let Some(&existing) = level.get(&(clone.clone(), comparison.clone())) {
                if existing != expression {
                    return Err(FactError::ConflictingLevel {
                        clone,
                        comparison,
                        first: existing,
                        second: expression,
                    });
                }
            } else {
                level.insert((clone, comparison), expression);
            }
        }

        let mut raw_categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (clone, category) in category_facts {
            clones.insert(clone.clone());
            raw_categories.entry(clone).or_default().insert(category);
        }

        // ancestor closure of the hierarchy, then one application per clone
        let mut ancestors: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (child, parent) in &hierarchy {
            ancestors.entry(child).or_default().insert(parent);
            ancestors.entry(parent).or_default();
        }
        loop {
            let mut grew = false;
            let names: Vec<&str> = ancestors.keys().copied().collect();
            for name in names {
                let reachable: BTreeSet<&str> = ancestors[name]
                    .iter()
                    .flat_map(|p| ancestors.get(p).into_iter().flatten())
                    .copied()
                    .collect();
                let set = ancestors.get_mut(name).unwrap();
                let before = set.len();
                set.extend(reachable);
                grew |= set.len() != before;
            }
            if !grew {
                break;
            }
        }
        let mut saturated_categories = BTreeMap::new();
        for (clone, cats) in &raw_categories {
            let mut full = cats.clone();
            for cat in cats {
                if let Some(ups) = ancestors.get(cat.as_str()) {
                    full.extend(ups.iter().map(|s| s.to_string()));
                }
            }
            saturated_categories.insert(clone.clone(), full);
        }

        let mut clones: Vec<String> = clones.into_iter().collect();
        clones.sort_by(|a, b| clone_id_order(a, b));
        Ok(FactBase {
            clones,
            comparisons: comparisons.into_iter().collect(),
            level,
            raw_categories,
            saturated_categories,
            hierarchy,
        })
    }

    pub fn clones(&self) -> &[String] {
        &self.clones
    }

    pub fn comparisons(&self) -> &[String] {
        &self.comparisons
    }

    pub fn hierarchy(&self) -> &[(String, String)] {
        &self.hierarchy
    }

    pub fn level_of(&self, clone: &str, comparison: &str) -> Option<Expression> {
        self.level
            .get(&(clone.to_string(), comparison.to_string()))
            .copied()
    }

    pub fn level_facts(&self) -> impl Iterator<Item = (&str, &str, Expression)> {
        self.level
            .iter()
            .map(|((clone, cmp), &e)| (clone.as_str(), cmp.as_str(), e))
    }

    /// Category facts as given, before saturation.
    pub fn raw_category_facts(&self) -> impl Iterator<Item = (&str, &str)> {
        self.raw_categories
            .iter()
            .flat_map(|(clone, cats)| cats.iter().map(move |c| (clone.as_str(), c.as_str())))
    }

    /// Saturated category membership for one clone.
    pub fn categories_of(&self, clone: &str) -> Option<&BTreeSet<String>> {
        self.saturated_categories.get(clone)
    }

    /// All category names occurring after saturation, sorted.
    pub fn category_names(&self) -> Vec<String> {
        let mut names = BTreeSet::new();
        for cats in self.saturated_categories.values() {
            names.extend(cats.iter().cloned());
        }
        names.into_iter().collect()
    }

    /// Closed-world negative examples: for each asserted level fact, the two
    /// complementary facts known to be false.
    pub fn negative_examples(&self) -> Vec<LevelFact> {
        let mut out = Vec::new();
        for ((clone, cmp), &e) in &self.level {
            for neg in e.complements() {
                out.push((clone.clone(), cmp.clone(), neg));
            }
        }
        out
    }

    fn satisfies_literal(&self, clone: &str, literal: &Literal) -> bool {
        match literal {
            Literal::Level {
                comparison,
                expression,
            } => self.level_of(clone, comparison) == Some(*expression),
            Literal::Category { name } => self
                .saturated_categories
                .get(clone)
                .is_some_and(|cats| cats.contains(name)),
        }
    }

    fn satisfies_head(&self, clone: &str, head: &RuleHead) -> bool {
        match self.level_of(clone, &head.comparison) {
            Some(actual) => {
                if head.negated {
                    actual != head.expression
                } else {
                    actual == head.expression
                }
            }
            None => false,
        }
    }
}

/// Map expression calls onto level facts and build the saturated fact base.
pub fn build_factbase(
    calls: &[ExpressionCall],
    category_facts: Vec<CategoryFact>,
    hierarchy: Vec<(String, String)>,
) -> Result<FactBase, FactError> {
    let level_facts = calls
        .iter()
        .map(|c| {
            (
                c.clone_id.clone(),
                c.comparison_id.clone(),
                Expression::from_call(c.call),
            )
        })
        .collect();
    FactBase::from_parts(level_facts, category_facts, hierarchy)
}

/// A body literal over the shared clone variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Level {
        comparison: String,
        expression: Expression,
    },
    Category {
        name: String,
    },
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Level {
                comparison,
                expression,
            } => write!(f, "level(A,{comparison},{expression})"),
            Literal::Category { name } => write!(f, "category(A,{name})"),
        }
    }
}

/// A rule head: a level literal, possibly negated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleHead {
    pub negated: bool,
    pub comparison: String,
    pub expression: Expression,
}

impl fmt::Display for RuleHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "~")?;
        }
        write!(f, "level(A,{},{})", self.comparison, self.expression)
    }
}

/// `head :- body` with a non-empty conjunctive body.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: RuleHead,
    pub body: Vec<Literal>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, lit) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{lit}")?;
        }
        write!(f, ".")
    }
}

/// Support and hit counts for a rule on one fact base. Confidence is the
/// unreduced ratio `head_hits / body_support`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleStats {
    pub body_support: usize,
    pub head_hits: usize,
}

impl RuleStats {
    /// `(head_hits, body_support)`, or `None` when support is zero and
    /// confidence is undefined.
    pub fn confidence(&self) -> Option<(usize, usize)> {
        (self.body_support > 0).then_some((self.head_hits, self.body_support))
    }

    pub fn confidence_f64(&self) -> Option<f64> {
        self.confidence()
            .map(|(h, s)| h as f64 / s as f64)
    }

    /// Exact comparison of two confidences by cross multiplication.
    pub fn cmp_confidence(&self, other: &RuleStats) -> std::cmp::Ordering {
        match (self.confidence(), other.confidence()) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some((h1, s1)), Some((h2, s2))) => {
                (h1 as u128 * s2 as u128).cmp(&(h2 as u128 * s1 as u128))
            }
        }
    }

    /// Confidence as a percentage with two decimals, rounded half-up on the
    /// exact ratio, e.g. 69/72 renders as `95.83%`.
    pub fn percent(&self) -> Option<String> {
        self.confidence().map(|(h, s)| render_percent(h, s))
    }
}

/// Round `100 * h / s` to two decimals in exact integer arithmetic.
pub fn render_percent(h: usize, s: usize) -> String {
    let h = h as u128;
    let s = s as u128;
    let hundredths = (20_000 * h + s) / (2 * s);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Count clones satisfying the body, and how many of those satisfy the head.
pub fn evaluate_rule(rule: &Rule, fb: &FactBase) -> RuleStats {
    let mut body_support = 0;
    let mut head_hits = 0;
    for clone in fb.clones() {
        if rule
            .body
            .iter()
            .all(|lit| fb.satisfies_literal(clone, lit))
        {
            body_support += 1;
            if fb.satisfies_head(clone, &rule.head) {
                head_hits += 1;
            }
        }
    }
    RuleStats {
        body_support,
        head_hits,
    }
}

/// The hypothesis space: which comparisons, expressions, and categories may
/// appear, and how long a body may grow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisLanguage {
    pub comparisons: Vec<String>,
    pub expressions: Vec<Expression>,
    pub categories: Vec<String>,
    pub max_body_len: usize,
}

impl HypothesisLanguage {
    /// The full language a fact base supports, with single-literal bodies.
    pub fn from_factbase(fb: &FactBase) -> HypothesisLanguage {
        HypothesisLanguage {
            comparisons: fb.comparisons().to_vec(),
            expressions: Expression::ALL.to_vec(),
            categories: fb.category_names(),
            max_body_len: 1,
        }
    }

    pub fn with_max_body_len(mut self, max_body_len: usize) -> HypothesisLanguage {
        self.max_body_len = max_body_len;
        self
    }

    /// Body literals in canonical order: level literals by (comparison,
    /// expression), then category literals by name.
    fn literals(&self) -> Vec<Literal> {
        let mut lits = Vec::new();
        for comparison in &self.comparisons {
            for &expression in &self.expressions {
                lits.push(Literal::Level {
                    comparison: comparison.clone(),
                    expression,
                });
            }
        }
        for name in &self.categories {
            lits.push(Literal::Category { name: name.clone() });
        }
        lits
    }

    /// Heads in canonical order: by comparison, expression, plain before
    /// negated.
    fn heads(&self) -> Vec<RuleHead> {
        let mut heads = Vec::new();
        for comparison in &self.comparisons {
            for &expression in &self.expressions {
                for negated in [false, true] {
                    heads.push(RuleHead {
                        negated,
                        comparison: comparison.clone(),
                        expression,
                    });
                }
            }
        }
        heads
    }
}

fn head_atom_in_body(head: &RuleHead, body: &[Literal]) -> bool {
    body.iter().any(|lit| match lit {
        Literal::Level {
            comparison,
            expression,
        } => *comparison == head.comparison && *expression == head.expression,
        Literal::Category { .. } => false,
    })
}

/// Every syntactically distinct rule of the language, in canonical order:
/// bodies are sorted literal subsets of size 1..=max, and a rule whose head
/// atom recurs in its own body is excluded (it would be trivially true or
/// trivially false).
pub fn enumerate_hypotheses(language: &HypothesisLanguage) -> Vec<Rule> {
    let literals = language.literals();
    let heads = language.heads();
    let mut bodies: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    grow_bodies(&mut bodies, &mut stack, 0, literals.len(), language.max_body_len);

    let mut rules = Vec::new();
    for head in &heads {
        for body_idx in &bodies {
            let body: Vec<Literal> = body_idx.iter().map(|&i| literals[i].clone()).collect();
            if head_atom_in_body(head, &body) {
                continue;
            }
            rules.push(Rule {
                head: head.clone(),
                body,
            });
        }
    }
    rules
}

fn grow_bodies(
    bodies: &mut Vec<Vec<usize>>,
    stack: &mut Vec<usize>,
    from: usize,
    total: usize,
    max_len: usize,
) {
    for i in from..total {
        stack.push(i);
        bodies.push(stack.clone());
        if stack.len() < max_len {
            grow_bodies(bodies, stack, i + 1, total, max_len);
        }
        stack.pop();
    }
}

/// A rule together with its statistics.
pub type MinedRule = (Rule, RuleStats);

/// Mine every rule of the language meeting both thresholds, ranked by
/// confidence (descending, compared exactly), then support (descending),
/// then canonical order.
///
/// Bodies are grown literal by literal; a branch is cut only when the
/// current body's support is already below `min_support`, which extending
/// the conjunction can never recover, so the result equals exhaustive
/// enumeration. A `min_confidence` above 1 simply yields nothing.
pub fn mine_rules(
    fb: &FactBase,
    min_support: usize,
    min_confidence: f64,
    language: &HypothesisLanguage,
) -> Vec<MinedRule> {
    let min_support = min_support.max(1);
    let min_confidence_exact =
        BigRational::from_f64(min_confidence).unwrap_or_else(|| BigRational::from_f64(0.0).unwrap());
    let literals = language.literals();
    let heads = language.heads();
    let clones = fb.clones();

    // satisfaction vector per literal and per head
    let lit_sat: Vec<Vec<bool>> = literals
        .iter()
        .map(|lit| {
            clones
                .iter()
                .map(|c| fb.satisfies_literal(c, lit))
                .collect()
        })
        .collect();
    let head_sat: Vec<Vec<bool>> = heads
        .iter()
        .map(|head| clones.iter().map(|c| fb.satisfies_head(c, head)).collect())
        .collect();

    // grow bodies depth-first in canonical literal order, cutting a branch
    // only when its support is already below threshold
    struct Body {
        indices: Vec<usize>,
        support_set: Vec<bool>,
        support: usize,
    }
    let mut live_bodies: Vec<Body> = Vec::new();
    let mut frontier: Vec<Body> = vec![Body {
        indices: Vec::new(),
        support_set: vec![true; clones.len()],
        support: clones.len(),
    }];
    while let Some(body) = frontier.pop() {
        let from = body.indices.last().map(|&i| i + 1).unwrap_or(0);
        for (i, literal_sat) in lit_sat.iter().enumerate().skip(from) {
            let mut support_set = body.support_set.clone();
            let mut support = 0;
            for (slot, &sat) in support_set.iter_mut().zip(literal_sat) {
                *slot = *slot && sat;
                support += *slot as usize;
            }
            if support < min_support {
                continue;
            }
            let mut indices = body.indices.clone();
            indices.push(i);
            let child = Body {
                indices,
                support_set,
                support,
            };
            if child.indices.len() < language.max_body_len {
                frontier.push(Body {
                    indices: child.indices.clone(),
                    support_set: child.support_set.clone(),
                    support: child.support,
                });
            }
            live_bodies.push(child);
        }
    }

    let mut accepted: Vec<((usize, Vec<usize>), MinedRule)> = Vec::new();
    for (head_idx, head) in heads.iter().enumerate() {
        for body in &live_bodies {
            let repeats = body.indices.iter().any(|&j| match &literals[j] {
                Literal::Level {
                    comparison,
                    expression,
                } => *comparison == head.comparison && *expression == head.expression,
                Literal::Category { .. } => false,
            });
            if repeats {
                continue;
            }
            let hits = body
                .support_set
                .iter()
                .zip(&head_sat[head_idx])
                .filter(|(&in_body, &h)| in_body && h)
                .count();
            let conf = BigRational::new((hits as i64).into(), (body.support as i64).into());
            if conf >= min_confidence_exact {
                let rule = Rule {
                    head: head.clone(),
                    body: body.indices.iter().map(|&j| literals[j].clone()).collect(),
                };
                let stats = RuleStats {
                    body_support: body.support,
                    head_hits: hits,
                };
                accepted.push(((head_idx, body.indices.clone()), (rule, stats)));
            }
        }
    }

    accepted.sort_by(|(ka, (_, sa)), (kb, (_, sb))| {
        sb.cmp_confidence(sa)
            .then_with(|| sb.body_support.cmp(&sa.body_support))
            .then_with(|| ka.cmp(kb))
    });
    accepted.into_iter().map(|(_, mined)| mined).collect()
}

/// Render mined rules in the textual syntax, one per line:
/// `~level(A,CvsS,positive) :- level(A,CvsM,positive). % support=72 conf=69/72`
pub fn write_rules_text(rules: &[MinedRule]) -> String {
    let mut out = String::new();
    for (rule, stats) in rules {
        let conf = match stats.confidence() {
            Some((h, s)) => format!("{h}/{s}"),
            None => "undefined".to_string(),
        };
        out.push_str(&format!(
            "{rule} % support={} conf={conf}\n",
            stats.body_support
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum RuleTextError {
    #[error("line {line}: malformed rule text")]
    Malformed { line: usize },
}

/// Parse rules text produced by [`write_rules_text`].
pub fn parse_rules_text(text: &str) -> Result<Vec<MinedRule>, RuleTextError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = || RuleTextError::Malformed { line: idx + 1 };
        let (rule_text, annotation) = line.split_once(" % ").ok_or_else(err)?;
        let rule = parse_rule(rule_text.trim()).ok_or_else(err)?;
        let mut support = None;
        let mut conf = None;
        for part in annotation.split_whitespace() {
            if let Some(v) = part.strip_prefix("support=") {
                support = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("conf=") {
                if v == "undefined" {
                    conf = Some(0);
                } else {
                    conf = v.split('/').next().and_then(|h| h.parse::<usize>().ok());
                }
            }
        }
        let stats = RuleStats {
            body_support: support.ok_or_else(err)?,
            head_hits: conf.ok_or_else(err)?,
        };
        out.push((rule, stats));
    }
    Ok(out)
}

fn parse_rule(text: &str) -> Option<Rule> {
    let text = text.strip_suffix('.')?;
    let (head_text, body_text) = text.split_once(":-")?;
    let head = parse_head(head_text.trim())?;
    let mut body = Vec::new();
    for part in split_literals(body_text.trim()) {
        body.push(parse_literal(part.trim())?);
    }
    if body.is_empty() {
        return None;
    }
    Some(Rule { head, body })
}

/// Split a conjunction on commas that sit between literals, i.e. after a
/// closing parenthesis.
fn split_literals(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn parse_head(text: &str) -> Option<RuleHead> {
    let (negated, rest) = match text.strip_prefix('~') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    match parse_literal(rest)? {
        Literal::Level {
            comparison,
            expression,
        } => Some(RuleHead {
            negated,
            comparison,
            expression,
        }),
        Literal::Category { .. } => None,
    }
}

fn parse_literal(text: &str) -> Option<Literal> {
    if let Some(inner) = text
        .strip_prefix("level(")
        .and_then(|t| t.strip_suffix(')'))
    {
        let mut parts = inner.splitn(3, ',');
        let var = parts.next()?.trim();
        let comparison = parts.next()?.trim().to_string();
        let expression = Expression::parse(parts.next()?.trim())?;
        (var == "A").then_some(Literal::Level {
            comparison,
            expression,
        })
    } else if let Some(inner) = text
        .strip_prefix("category(")
        .and_then(|t| t.strip_suffix(')'))
    {
        let (var, name) = inner.split_once(',')?;
        (var.trim() == "A").then(|| Literal::Category {
            name: name.trim().to_string(),
        })
    } else {
        None
    }
}

const FACTS_HEADER: [&str; 5] = ["table", "clone_id", "comparison", "expression", "category"];

/// Serialize the level and (unsaturated) category tables into one facts
/// file.
pub fn write_facts_tsv(fb: &FactBase) -> String {
    let mut w = tsv::Writer::new(&FACTS_HEADER);
    for (clone, cmp, e) in fb.level_facts() {
        w.row(&["level", clone, cmp, e.name(), ""])
            .expect("identifiers contain no tabs");
    }
    for (clone, category) in fb.raw_category_facts() {
        w.row(&["category", clone, "", "", category])
            .expect("identifiers contain no tabs");
    }
    w.finish()
}

/// Parse a facts file into raw level and category facts.
pub fn read_facts_tsv(text: &str) -> Result<(Vec<LevelFact>, Vec<CategoryFact>), FactError> {
    let mut level = Vec::new();
    let mut categories = Vec::new();
    for row in tsv::parse(text, &FACTS_HEADER)? {
        match row.cells[0] {
            "level" => {
                let e = Expression::parse(row.cells[3]).ok_or_else(|| {
                    FactError::BadExpression {
                        line: row.line,
                        text: row.cells[3].to_string(),
                    }
                })?;
                level.push((
                    row.cells[1].to_string(),
                    row.cells[2].to_string(),
                    e,
                ));
            }
            "category" => {
                categories.push((row.cells[1].to_string(), row.cells[4].to_string()));
            }
            other => {
                return Err(FactError::BadTable {
                    line: row.line,
                    text: other.to_string(),
                })
            }
        }
    }
    Ok((level, categories))
}

const HIERARCHY_HEADER: [&str; 2] = ["child", "parent"];

pub fn write_hierarchy_tsv(hierarchy: &[(String, String)]) -> String {
    let mut w = tsv::Writer::new(&HIERARCHY_HEADER);
    for (child, parent) in hierarchy {
        w.row(&[child, parent]).expect("names contain no tabs");
    }
    w.finish()
}

pub fn read_hierarchy_tsv(text: &str) -> Result<Vec<(String, String)>, FactError> {
    let mut out = Vec::new();
    for row in tsv::parse(text, &HIERARCHY_HEADER)? {
        out.push((row.cells[0].to_string(), row.cells[1].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lf(clone: &str, cmp: &str, e: Expression) -> (String, String, Expression) {
        (clone.to_string(), cmp.to_string(), e)
    }

    fn cf(clone: &str, cat: &str) -> (String, String) {
        (clone.to_string(), cat.to_string())
    }

    fn hf(child: &str, parent: &str) -> (String, String) {
        (child.to_string(), parent.to_string())
    }

    #[test]
    fn level_facts_induce_two_negatives_each() {
        let fb = FactBase::from_parts(
            vec![lf("4", "CvsM", Expression::Positive)],
            vec![],
            vec![],
        )
        .unwrap();
        let negatives = fb.negative_examples();
        assert_eq!(negatives.len(), 2);
        assert!(negatives.contains(&lf("4", "CvsM", Expression::Negative)));
        assert!(negatives.contains(&lf("4", "CvsM", Expression::Unchanged)));
    }

    #[test]
    fn conflicting_levels_are_an_integrity_error() {
        let result = FactBase::from_parts(
            vec![
                lf("4", "CvsM", Expression::Positive),
                lf("4", "CvsM", Expression::Negative),
            ],
            vec![],
            vec![],
        );
        assert!(matches!(result, Err(FactError::ConflictingLevel { .. })));
        // identical duplicates collapse
        let fb = FactBase::from_parts(
            vec![
                lf("4", "CvsM", Expression::Positive),
                lf("4", "CvsM", Expression::Positive),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(fb.level_facts().count(), 1);
    }

    #[test]
    fn saturation_reaches_ancestors() {
        let fb = FactBase::from_parts(
            vec![],
            vec![cf("8", "Heat")],
            vec![hf("Heat", "Environment")],
        )
        .unwrap();
        let cats = fb.categories_of("8").unwrap();
        assert!(cats.contains("Heat"));
        assert!(cats.contains("Environment"));
    }

    #[test]
    fn saturation_is_transitive_and_idempotent() {
        let hierarchy = vec![hf("A", "B"), hf("B", "C")];
        let fb = FactBase::from_parts(vec![], vec![cf("x", "A")], hierarchy.clone()).unwrap();
        let cats = fb.categories_of("x").unwrap();
        assert!(cats.contains("C"), "transitive closure through B");
        // rebuilding from the saturated facts changes nothing
        let resaturated = FactBase::from_parts(
            vec![],
            cats.iter().map(|c| cf("x", c)).collect(),
            hierarchy,
        )
        .unwrap();
        assert_eq!(resaturated.categories_of("x").unwrap(), cats);
    }

    #[test]
    fn empty_calls_give_empty_factbase() {
        let fb = build_factbase(&[], vec![], vec![]).unwrap();
        assert!(fb.clones().is_empty());
        assert_eq!(fb.level_facts().count(), 0);
    }

    fn rule1() -> Rule {
        Rule {
            head: RuleHead {
                negated: true,
                comparison: "CvsS".into(),
                expression: Expression::Positive,
            },
            body: vec![Literal::Level {
                comparison: "CvsM".into(),
                expression: Expression::Positive,
            }],
        }
    }

    /// 72 clones positive in CvsM, 69 of which are not positive in CvsS.
    fn reconstruction() -> FactBase {
        let mut level = Vec::new();
        for i in 0..384u32 {
            let clone = format!("{}", i + 1);
            if i < 72 {
                level.push(lf(&clone, "CvsM", Expression::Positive));
                let cvss = if i < 3 {
                    Expression::Positive
                } else if i < 38 {
                    Expression::Negative
                } else {
                    Expression::Unchanged
                };
                level.push(lf(&clone, "CvsS", cvss));
            } else {
                level.push(lf(&clone, "CvsM", Expression::Unchanged));
                level.push(lf(&clone, "CvsS", Expression::Unchanged));
            }
        }
        FactBase::from_parts(level, vec![], vec![]).unwrap()
    }

    #[test]
    fn rule_one_statistics() {
        let fb = reconstruction();
        let stats = evaluate_rule(&rule1(), &fb);
        assert_eq!(stats.body_support, 72);
        assert_eq!(stats.head_hits, 69);
        assert_eq!(stats.confidence(), Some((69, 72)));
        assert_eq!(stats.percent().unwrap(), "95.83%");
    }

    #[test]
    fn empty_body_category_gives_undefined_confidence() {
        let fb = reconstruction();
        let rule = Rule {
            head: rule1().head,
            body: vec![Literal::Category {
                name: "nothing".into(),
            }],
        };
        let stats = evaluate_rule(&rule, &fb);
        assert_eq!(stats.body_support, 0);
        assert_eq!(stats.confidence(), None);
    }

    #[test]
    fn evaluation_matches_naive_recount() {
        let fb = FactBase::from_parts(
            vec![
                lf("1", "CvsM", Expression::Positive),
                lf("1", "CvsS", Expression::Negative),
                lf("2", "CvsM", Expression::Positive),
                lf("2", "CvsS", Expression::Positive),
                lf("3", "CvsM", Expression::Unchanged),
                lf("4", "CvsM", Expression::Negative),
                lf("4", "CvsS", Expression::Unchanged),
            ],
            vec![cf("1", "heat"), cf("2", "heat"), cf("3", "wall")],
            vec![hf("heat", "env")],
        )
        .unwrap();
        let language = HypothesisLanguage::from_factbase(&fb).with_max_body_len(2);
        for rule in enumerate_hypotheses(&language) {
            let stats = evaluate_rule(&rule, &fb);
            // independent route: nested loops over raw fact views
            let mut support = 0;
            let mut hits = 0;
            for clone in ["1", "2", "3", "4"] {
                let sat = rule.body.iter().all(|lit| match lit {
                    Literal::Level {
                        comparison,
                        expression,
                    } => fb.level_of(clone, comparison) == Some(*expression),
                    Literal::Category { name } => fb
                        .categories_of(clone)
                        .map(|c| c.contains(name))
                        .unwrap_or(false),
                });
                if !sat {
                    continue;
                }
                support += 1;
                let head_ok = match fb.level_of(clone, &rule.head.comparison) {
                    Some(e) => {
                        if rule.head.negated {
                            e != rule.head.expression
                        } else {
                            e == rule.head.expression
                        }
                    }
                    None => false,
                };
                if head_ok {
                    hits += 1;
                }
            }
            assert_eq!((stats.body_support, stats.head_hits), (support, hits));
        }
    }

    #[test]
    fn enumeration_count_matches_closed_form() {
        for (n_cmp, n_cat, max_len) in [(2usize, 1usize, 1usize), (2, 3, 2), (1, 0, 1), (3, 2, 2)] {
            let language = HypothesisLanguage {
                comparisons: (0..n_cmp).map(|i| format!("C{i}")).collect(),
                expressions: Expression::ALL.to_vec(),
                categories: (0..n_cat).map(|i| format!("K{i}")).collect(),
                max_body_len: max_len,
            };
            let rules = enumerate_hypotheses(&language);
            // closed form: heads H = 2*3*n_cmp; literals B = 3*n_cmp + n_cat;
            // bodies of size s containing the head atom: C(B-1, s-1)
            let h = 2 * 3 * n_cmp;
            let b = 3 * n_cmp + n_cat;
            let choose = |n: usize, k: usize| -> usize {
                if k > n {
                    return 0;
                }
                let mut c = 1usize;
                for i in 0..k {
                    c = c * (n - i) / (i + 1);
                }
                c
            };
            let expected: usize = (1..=max_len)
                .map(|s| h * (choose(b, s) - choose(b - 1, s - 1)))
                .sum();
            assert_eq!(rules.len(), expected, "cmp={n_cmp} cat={n_cat} len={max_len}");
            // no duplicates
            let set: std::collections::HashSet<_> = rules.iter().collect();
            assert_eq!(set.len(), rules.len());
        }
    }

    #[test]
    fn enumeration_includes_published_rule_shapes() {
        let language = HypothesisLanguage {
            comparisons: vec!["CvsM".into(), "CvsS".into()],
            expressions: Expression::ALL.to_vec(),
            categories: vec!["heat".into()],
            max_body_len: 1,
        };
        let rules = enumerate_hypotheses(&language);
        assert!(rules.contains(&rule1()));
        let rule4 = Rule {
            head: RuleHead {
                negated: false,
                comparison: "CvsM".into(),
                expression: Expression::Positive,
            },
            body: vec![Literal::Category {
                name: "heat".into(),
            }],
        };
        assert!(rules.contains(&rule4));
    }

    #[test]
    fn zero_categories_restrict_to_level_rules() {
        let language = HypothesisLanguage {
            comparisons: vec!["CvsM".into()],
            expressions: Expression::ALL.to_vec(),
            categories: vec![],
            max_body_len: 1,
        };
        let rules = enumerate_hypotheses(&language);
        // H = 6 heads, B = 3 literals, minus head-atom repeats
        assert_eq!(rules.len(), 6 * 3 - 6);
        assert!(rules
            .iter()
            .all(|r| matches!(r.body[0], Literal::Level { .. })));
    }

    #[test]
    fn mining_reconstruction_finds_rule_one() {
        let fb = reconstruction();
        let language = HypothesisLanguage::from_factbase(&fb);
        let mined = mine_rules(&fb, 5, 0.6, &language);
        let hit = mined.iter().find(|(r, _)| *r == rule1());
        let (_, stats) = hit.expect("rule (1) mined");
        assert_eq!(
            (stats.body_support, stats.head_hits),
            (72, 69)
        );
    }

    #[test]
    fn impossible_confidence_threshold_yields_nothing() {
        let fb = reconstruction();
        let language = HypothesisLanguage::from_factbase(&fb);
        assert!(mine_rules(&fb, 1, 1.5, &language).is_empty());
    }

    #[test]
    fn duplicating_clones_preserves_confidence_and_doubles_support() {
        let base = vec![
            lf("1", "CvsM", Expression::Positive),
            lf("1", "CvsS", Expression::Negative),
            lf("2", "CvsM", Expression::Positive),
            lf("2", "CvsS", Expression::Positive),
            lf("3", "CvsM", Expression::Negative),
            lf("3", "CvsS", Expression::Negative),
        ];
        let cats = vec![cf("1", "heat"), cf("3", "heat")];
        let mut doubled = base.clone();
        let mut doubled_cats = cats.clone();
        for (c, cmp, e) in &base {
            doubled.push((format!("{c}-copy"), cmp.clone(), *e));
        }
        for (c, cat) in &cats {
            doubled_cats.push((format!("{c}-copy"), cat.clone()));
        }
        let fb1 = FactBase::from_parts(base, cats, vec![]).unwrap();
        let fb2 = FactBase::from_parts(doubled, doubled_cats, vec![]).unwrap();
        let language = HypothesisLanguage::from_factbase(&fb1).with_max_body_len(2);
        for rule in enumerate_hypotheses(&language) {
            let s1 = evaluate_rule(&rule, &fb1);
            let s2 = evaluate_rule(&rule, &fb2);
            assert_eq!(s2.body_support, 2 * s1.body_support);
            assert_eq!(s2.head_hits, 2 * s1.head_hits);
            assert_eq!(s1.cmp_confidence(&s2), std::cmp::Ordering::Equal);
        }
    }

    #[test]
    fn evaluation_ignores_fact_insertion_order() {
        let facts = vec![
            lf("1", "CvsM", Expression::Positive),
            lf("2", "CvsM", Expression::Negative),
            lf("1", "CvsS", Expression::Unchanged),
            lf("3", "CvsM", Expression::Positive),
        ];
        let cats = vec![cf("1", "heat"), cf("3", "heat")];
        let mut shuffled_facts = facts.clone();
        shuffled_facts.reverse();
        let mut shuffled_cats = cats.clone();
        shuffled_cats.reverse();
        let a = FactBase::from_parts(facts, cats, vec![]).unwrap();
        let b = FactBase::from_parts(shuffled_facts, shuffled_cats, vec![]).unwrap();
        assert_eq!(a, b);
        for rule in enumerate_hypotheses(&HypothesisLanguage::from_factbase(&a)) {
            assert_eq!(evaluate_rule(&rule, &a), evaluate_rule(&rule, &b));
        }
    }

    #[test]
    fn percent_rendering_rounds_half_up_on_exact_ratios() {
        assert_eq!(render_percent(69, 72), "95.83%");
        assert_eq!(render_percent(5, 6), "83.33%");
        assert_eq!(render_percent(8, 12), "66.67%");
        assert_eq!(render_percent(13, 16), "81.25%");
        assert_eq!(render_percent(1, 1), "100.00%");
        assert_eq!(render_percent(0, 7), "0.00%");
    }

    #[test]
    fn rules_text_round_trip() {
        let mined = vec![
            (
                rule1(),
                RuleStats {
                    body_support: 72,
                    head_hits: 69,
                },
            ),
            (
                Rule {
                    head: RuleHead {
                        negated: false,
                        comparison: "CvsM".into(),
                        expression: Expression::Positive,
                    },
                    body: vec![
                        Literal::Category {
                            name: "heat".into(),
                        },
                        Literal::Level {
                            comparison: "MvsS".into(),
                            expression: Expression::Negative,
                        },
                    ],
                },
                RuleStats {
                    body_support: 6,
                    head_hits: 5,
                },
            ),
        ];
        let text = write_rules_text(&mined);
        assert!(text.contains(
            "~level(A,CvsS,positive) :- level(A,CvsM,positive). % support=72 conf=69/72"
        ));
        let parsed = parse_rules_text(&text).unwrap();
        assert_eq!(parsed, mined);
    }

    #[test]
    fn facts_tsv_round_trip() {
        let fb = FactBase::from_parts(
            vec![
                lf("4", "CvsM", Expression::Positive),
                lf("20", "CvsM", Expression::Negative),
            ],
            vec![cf("5", "RPPP"), cf("8", "Heat")],
            vec![],
        )
        .unwrap();
        let text = write_facts_tsv(&fb);
        let (level, cats) = read_facts_tsv(&text).unwrap();
        let fb2 = FactBase::from_parts(level, cats, vec![]).unwrap();
        assert_eq!(fb, fb2);
    }

    #[test]
    fn hierarchy_tsv_round_trip() {
        let h = vec![hf("Heat", "Environment"), hf("RPPP", "Carbon Metabolism")];
        let text = write_hierarchy_tsv(&h);
        assert_eq!(read_hierarchy_tsv(&text).unwrap(), h);
    }
}
