//! The self-describing experiment-description record format.
//!
//! An experiment description is an ordered sequence of records, one per
//! line. The first token of a line is the record keyword (`DYE`, `TISSUE`,
//! `PRINTING_CONFIGURATION`, ...) and the remaining tokens are its fields.
//! Tokens split on whitespace except inside double quotes; all-digit tokens
//! become integers and `digits.digits` tokens become decimals. Blank lines
//! and lines starting with `#` are ignored and not round-tripped.
//!
//! Descriptions support three operations beyond parse/serialize: selector
//! queries (keyword plus indexed field predicates), structural diff keyed by
//! `(keyword, ordinal-within-keyword)`, and patch application. Diffing two
//! run manifests written in this format answers "what is different between
//! the experiments that produced these two result sets".

use std::fmt;

use thiserror::Error;

/// A single field value. Typing is purely lexical: `^[0-9]+$` is an
/// integer, `^[0-9]*\.[0-9]+$` a decimal, everything else a string.
/// Integer tokens that overflow 64 bits and decimal tokens that are not
/// finite stay strings.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Decimal(f64),
    Str(String),
}

impl Value {
    /// Classify a raw token exactly as the parser does.
    pub fn from_token(token: &str) -> Value {
        if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(i) = token.parse::<i64>() {
                return Value::Int(i);
            }
            return Value::Str(token.to_string());
        }
        if let Some(dot) = token.find('.') {
            let (ipart, fpart) = (&token[..dot], &token[dot + 1..]);
            if !fpart.is_empty()
                && ipart.bytes().all(|b| b.is_ascii_digit())
                && fpart.bytes().all(|b| b.is_ascii_digit())
            {
                if let Ok(d) = token.parse::<f64>() {
                    if d.is_finite() {
                        return Value::Decimal(d);
                    }
                }
            }
        }
        Value::Str(token.to_string())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// The field's logical text, without any serialization quoting.
    pub fn text(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.to_string(),
        }
    }

    /// Numeric view used by selector comparisons: integers and decimals
    /// compare on one axis.
    fn as_number(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Decimal(d) => Some(*d),
            Value::Str(_) => None,
        }
    }

    fn serialize_into(&self, out: &mut String) {
        match self {
            Value::Int(i) => out.push_str(&i.to_string()),
            Value::Decimal(d) => {
                let s = format!("{d}");
                out.push_str(&s);
                // keep the decimal type through a re-parse
                if !s.contains('.') {
                    out.push_str(".0");
                }
            }
            Value::Str(s) => {
                if needs_quoting(s) {
                    out.push('"');
                    out.push_str(s);
                    out.push('"');
                } else {
                    out.push_str(s);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.serialize_into(&mut s);
        f.write_str(&s)
    }
}

/// A string field must be quoted when serializing it bare would change its
/// meaning on re-parse: whitespace, emptiness, a leading `#`, or a shape
/// that the lexical typing rules would read as a number.
fn needs_quoting(s: &str) -> bool {
    s.is_empty()
        || s.starts_with('#')
        || s.chars().any(|c| c.is_whitespace())
        || !matches!(Value::from_token(s), Value::Str(_))
}

/// One description line: a keyword and its ordered field values.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub keyword: String,
    pub fields: Vec<Value>,
}

impl Record {
    pub fn new(keyword: impl Into<String>, fields: Vec<Value>) -> Record {
        Record {
            keyword: keyword.into(),
            fields,
        }
    }

    fn serialize_into(&self, out: &mut String) {
        out.push_str(&self.keyword);
        for field in &self.fields {
            out.push(' ');
            field.serialize_into(out);
        }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.serialize_into(&mut s);
        f.write_str(&s)
    }
}

/// An ordered set of records. The name is taken from the first field of the
/// first `EXPERIMENT` record when one is present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentDescription {
    pub name: String,
    pub records: Vec<Record>,
}

impl ExperimentDescription {
    pub fn from_records(records: Vec<Record>) -> ExperimentDescription {
        let name = records
            .iter()
            .find(|r| r.keyword == "EXPERIMENT")
            .and_then(|r| r.fields.first())
            .map(Value::text)
            .unwrap_or_default();
        ExperimentDescription { name, records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: unterminated quote")]
    UnterminatedQuote { line: usize },
    #[error("line {line}: empty keyword")]
    EmptyKeyword { line: usize },
    #[error("line {line}: keyword must be a bare token, not a quoted string")]
    QuotedKeyword { line: usize },
}

/// Parse a line-oriented description. Blank lines and `#` comments are
/// dropped; everything else becomes one record.
pub fn parse_description(text: &str) -> Result<ExperimentDescription, ParseError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens = tokenize(line, line_no)?;
        let mut tokens = tokens.into_iter();
        let keyword = match tokens.next() {
            Some(Token::Bare(k)) => k,
            Some(Token::Quoted(_)) => return Err(ParseError::QuotedKeyword { line: line_no }),
            None => return Err(ParseError::EmptyKeyword { line: line_no }),
        };
        let fields = tokens
            .map(|t| match t {
                Token::Bare(s) => Value::from_token(&s),
                Token::Quoted(s) => Value::Str(s),
            })
            .collect();
        records.push(Record { keyword, fields });
    }
    Ok(ExperimentDescription::from_records(records))
}

enum Token {
    Bare(String),
    Quoted(String),
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => return Err(ParseError::UnterminatedQuote { line: line_no }),
                }
            }
            tokens.push(Token::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(Token::Bare(s));
        }
    }
    Ok(tokens)
}

/// Canonical text form: one record per line, fields separated by single
/// spaces, strings quoted only where required. `parse(serialize(d)) == d`.
pub fn serialize_description(desc: &ExperimentDescription) -> String {
    let mut out = String::new();
    for record in &desc.records {
        record.serialize_into(&mut out);
        out.push('\n');
    }
    out
}

/// Comparison operator in a selector field predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn test(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

/// `index OP literal`, applied to the field at `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPredicate {
    pub index: usize,
    pub op: CmpOp,
    pub literal: Value,
}

impl FieldPredicate {
    /// Numbers compare numerically, strings lexicographically. A comparison
    /// across incompatible types is false, except `!=` which is true. A
    /// predicate indexing past the record's arity never matches.
    fn matches(&self, record: &Record) -> bool {
        let Some(field) = record.fields.get(self.index) else {
            return false;
        };
        let ord = match (field.as_number(), self.literal.as_number()) {
            (Some(a), Some(b)) => a.partial_cmp(&b),
            _ => match (field, &self.literal) {
                (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
                _ => None,
            },
        };
        match ord {
            Some(ord) => self.op.test(ord),
            None => self.op == CmpOp::Ne,
        }
    }
}

/// A record selector: keyword match plus zero or more field predicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    pub keyword: String,
    pub predicates: Vec<FieldPredicate>,
}

impl Selector {
    pub fn keyword(keyword: impl Into<String>) -> Selector {
        Selector {
            keyword: keyword.into(),
            predicates: Vec::new(),
        }
    }

    pub fn with_predicate(mut self, index: usize, op: CmpOp, literal: Value) -> Selector {
        self.predicates.push(FieldPredicate {
            index,
            op,
            literal,
        });
        self
    }

    /// Parse the CLI form `INDEX OP LITERAL`, e.g. `0=D4I` or `2>=0.9`.
    pub fn parse_predicate(text: &str) -> Result<FieldPredicate, SelectorError> {
        let ops = [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        for (sym, op) in ops {
            if let Some(pos) = text.find(sym) {
                let index: usize = text[..pos]
                    .trim()
                    .parse()
                    .map_err(|_| SelectorError::BadPredicate(text.to_string()))?;
                let literal = Value::from_token(text[pos + sym.len()..].trim());
                return Ok(FieldPredicate { index, op, literal });
            }
        }
        Err(SelectorError::BadPredicate(text.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectorError {
    #[error("selector keyword is empty")]
    EmptyKeyword,
    #[error("malformed predicate {0:?}, expected INDEX OP LITERAL")]
    BadPredicate(String),
}

/// Return every record across `descs` whose keyword matches the selector and
/// whose indexed fields satisfy all predicates, in document order.
pub fn query_records<'a>(
    descs: &'a [ExperimentDescription],
    selector: &Selector,
) -> Result<Vec<&'a Record>, SelectorError> {
    if selector.keyword.is_empty() {
        return Err(SelectorError::EmptyKeyword);
    }
    Ok(descs
        .iter()
        .flat_map(|d| d.records.iter())
        .filter(|r| r.keyword == selector.keyword)
        .filter(|r| selector.predicates.iter().all(|p| p.matches(r)))
        .collect())
}

/// Kind of difference between two descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffKind {
    Changed,
    Added,
    Removed,
}

/// One entry in a structural diff. Records are aligned by
/// `(keyword, ordinal-within-keyword)`; aligned records diff per field,
/// unmatched records appear whole.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffEntry {
    FieldChanged {
        keyword: String,
        ordinal: usize,
        field_index: usize,
        before: Value,
        after: Value,
    },
    FieldAdded {
        keyword: String,
        ordinal: usize,
        field_index: usize,
        after: Value,
    },
    FieldRemoved {
        keyword: String,
        ordinal: usize,
        field_index: usize,
        before: Value,
    },
    RecordAdded {
        keyword: String,
        ordinal: usize,
        record: Record,
    },
    RecordRemoved {
        keyword: String,
        ordinal: usize,
        record: Record,
    },
}

impl DiffEntry {
    pub fn kind(&self) -> DiffKind {
        match self {
            DiffEntry::FieldChanged { .. } => DiffKind::Changed,
            DiffEntry::FieldAdded { .. } | DiffEntry::RecordAdded { .. } => DiffKind::Added,
            DiffEntry::FieldRemoved { .. } | DiffEntry::RecordRemoved { .. } => DiffKind::Removed,
        }
    }
}

impl fmt::Display for DiffEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffEntry::FieldChanged {
                keyword,
                ordinal,
                field_index,
                before,
                after,
            } => write!(
                f,
                "changed {keyword}[{ordinal}] field {field_index}: {before} -> {after}"
            ),
            DiffEntry::FieldAdded {
                keyword,
                ordinal,
                field_index,
                after,
            } => write!(f, "added {keyword}[{ordinal}] field {field_index}: {after}"),
            DiffEntry::FieldRemoved {
                keyword,
                ordinal,
                field_index,
                before,
            } => write!(
                f,
                "removed {keyword}[{ordinal}] field {field_index}: {before}"
            ),
            DiffEntry::RecordAdded {
                keyword, ordinal, ..
            } => write!(f, "added record {keyword}[{ordinal}]"),
            DiffEntry::RecordRemoved {
                keyword, ordinal, ..
            } => write!(f, "removed record {keyword}[{ordinal}]"),
        }
    }
}

/// Structural diff of two descriptions.
///
/// Records are paired by keyword and ordinal within that keyword, so the
/// diff is deterministic and explainable. An empty diff means the two
/// descriptions carry the same record sequence for every keyword; the
/// relative interleaving of different keywords is not part of diff identity.
pub fn diff_descriptions(
    a: &ExperimentDescription,
    b: &ExperimentDescription,
) -> Vec<DiffEntry> {
    let mut keywords: Vec<&str> = Vec::new();
    for r in a.records.iter().chain(b.records.iter()) {
        if !keywords.contains(&r.keyword.as_str()) {
            keywords.push(&r.keyword);
        }
    }

    let mut entries = Vec::new();
    for keyword in keywords {
        let group_a: Vec<&Record> = a.records.iter().filter(|r| r.keyword == keyword).collect();
        let group_b: Vec<&Record> = b.records.iter().filter(|r| r.keyword == keyword).collect();
        let paired = group_a.len().min(group_b.len());
        for ordinal in 0..paired {
            diff_fields(keyword, ordinal, group_a[ordinal], group_b[ordinal], &mut entries);
        }
        // removals descend so they apply cleanly in sequence
        for ordinal in (paired..group_a.len()).rev() {
            entries.push(DiffEntry::RecordRemoved {
                keyword: keyword.to_string(),
                ordinal,
                record: group_a[ordinal].clone(),
            });
        }
        for (ordinal, record) in group_b.iter().enumerate().skip(paired) {
            entries.push(DiffEntry::RecordAdded {
                keyword: keyword.to_string(),
                ordinal,
                record: (*record).clone(),
            });
        }
    }
    entries
}

fn diff_fields(
    keyword: &str,
    ordinal: usize,
    a: &Record,
    b: &Record,
    entries: &mut Vec<DiffEntry>,
) {
    let shared = a.fields.len().min(b.fields.len());
    for i in 0..shared {
        if a.fields[i] != b.fields[i] {
            entries.push(DiffEntry::FieldChanged {
                keyword: keyword.to_string(),
                ordinal,
                field_index: i,
                before: a.fields[i].clone(),
                after: b.fields[i].clone(),
            });
        }
    }
    for i in (shared..a.fields.len()).rev() {
        entries.push(DiffEntry::FieldRemoved {
            keyword: keyword.to_string(),
            ordinal,
            field_index: i,
            before: a.fields[i].clone(),
        });
    }
    for i in shared..b.fields.len() {
        entries.push(DiffEntry::FieldAdded {
            keyword: keyword.to_string(),
            ordinal,
            field_index: i,
            after: b.fields[i].clone(),
        });
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("no record {keyword}[{ordinal}] to patch")]
    MissingRecord { keyword: String, ordinal: usize },
    #[error("field index {field_index} out of range for {keyword}[{ordinal}]")]
    BadFieldIndex {
        keyword: String,
        ordinal: usize,
        field_index: usize,
    },
    #[error("before-value mismatch at {keyword}[{ordinal}] field {field_index}")]
    BeforeMismatch {
        keyword: String,
        ordinal: usize,
        field_index: usize,
    },
}

/// Apply a diff produced by [`diff_descriptions`] to `base`. Applying
/// `diff(a, b)` to `a` reconstructs a description diff-equal to `b`.
pub fn apply_diff(
    base: &ExperimentDescription,
    entries: &[DiffEntry],
) -> Result<ExperimentDescription, PatchError> {
    let mut records = base.records.clone();

    let locate = |records: &[Record], keyword: &str, ordinal: usize| {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.keyword == keyword)
            .nth(ordinal)
            .map(|(i, _)| i)
    };

    for entry in entries {
        match entry {
            DiffEntry::FieldChanged {
                keyword,
                ordinal,
                field_index,
                before,
                after,
            } => {
                let idx = locate(&records, keyword, *ordinal).ok_or_else(|| {
                    PatchError::MissingRecord {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                    }
                })?;
                let slot = records[idx].fields.get_mut(*field_index).ok_or_else(|| {
                    PatchError::BadFieldIndex {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                        field_index: *field_index,
                    }
                })?;
                if slot != before {
                    return Err(PatchError::BeforeMismatch {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                        field_index: *field_index,
                    });
                }
                *slot = after.clone();
            }
            DiffEntry::FieldAdded {
                keyword,
                ordinal,
                field_index,
                after,
            } => {
                let idx = locate(&records, keyword, *ordinal).ok_or_else(|| {
                    PatchError::MissingRecord {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                    }
                })?;
                if *field_index > records[idx].fields.len() {
                    return Err(PatchError::BadFieldIndex {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                        field_index: *field_index,
                    });
                }
                records[idx].fields.insert(*field_index, after.clone());
            }
            DiffEntry::FieldRemoved {
                keyword,
                ordinal,
                field_index,
                before,
            } => {
                let idx = locate(&records, keyword, *ordinal).ok_or_else(|| {
                    PatchError::MissingRecord {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                    }
                })?;
                if *field_index >= records[idx].fields.len() {
                    return Err(PatchError::BadFieldIndex {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                        field_index: *field_index,
                    });
                }
                if records[idx].fields[*field_index] != *before {
                    return Err(PatchError::BeforeMismatch {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                        field_index: *field_index,
                    });
                }
                records[idx].fields.remove(*field_index);
            }
            DiffEntry::RecordAdded { keyword, record, .. } => {
                // append after the last record of this keyword, or at the end
                let insert_at = records
                    .iter()
                    .rposition(|r| r.keyword == *keyword)
                    .map(|i| i + 1)
                    .unwrap_or(records.len());
                records.insert(insert_at, record.clone());
            }
            DiffEntry::RecordRemoved {
                keyword, ordinal, ..
            } => {
                let idx = locate(&records, keyword, *ordinal).ok_or_else(|| {
                    PatchError::MissingRecord {
                        keyword: keyword.clone(),
                        ordinal: *ordinal,
                    }
                })?;
                records.remove(idx);
            }
        }
    }
    Ok(ExperimentDescription::from_records(records))
}
