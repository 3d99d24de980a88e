//! In-memory tables, cell typing, and the unpivot/pivot reshaping operators.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("csv input has no header row")]
    MissingHeader,
    #[error("malformed descriptions json: {0}")]
    Json(String),
    #[error("description key `{0}` is not an attribute")]
    UnknownDescriptionKey(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("generated column name `{0}` collides with a retained attribute")]
    NameCollision(String),
    #[error("variable and value columns must have distinct names (got `{0}` twice)")]
    SameVarValue(String),
    #[error("duplicate spread entry for variable `{var}` in row group {group}")]
    DuplicateSpread { group: usize, var: String },
    #[error("variable cell cannot name a column: {0}")]
    InvalidSpreadName(String),
}

/// A single typed value.
///
/// Reals compare and hash by bit pattern so cells can key hash maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Cell {
    Integer(i64),
    Real(f64),
    Text(String),
    Missing,
}

impl Cell {
    /// Deterministic per-field typing: integer, then finite real, then
    /// missing (empty), then text.
    pub fn parse(field: &str) -> Cell {
        if let Ok(i) = field.parse::<i64>() {
            return Cell::Integer(i);
        }
        if let Ok(f) = field.parse::<f64>() {
            if f.is_finite() {
                return Cell::Real(f);
            }
        }
        if field.is_empty() {
            Cell::Missing
        } else {
            Cell::Text(field.to_string())
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Cell::Integer(i) => Some(*i),
            _ => None,
        }
    }

    /// Text form that parses back to the same cell (reals keep a `.` or
    /// exponent so they never re-type as integers).
    pub fn to_field(&self) -> String {
        match self {
            Cell::Integer(i) => i.to_string(),
            Cell::Real(f) => format!("{f:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_field())
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Integer(a), Cell::Integer(b)) => a == b,
            (Cell::Real(a), Cell::Real(b)) => a.to_bits() == b.to_bits(),
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Missing, Cell::Missing) => true,
            _ => false,
        }
    }
}

impl Eq for Cell {}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Cell::Integer(i) => i.hash(state),
            Cell::Real(f) => f.to_bits().hash(state),
            Cell::Text(s) => s.hash(state),
            Cell::Missing => {}
        }
    }
}

/// A relational table: attributes, optional per-attribute descriptions, and
/// (sampled) records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    name: String,
    attributes: Vec<String>,
    descriptions: BTreeMap<String, String>,
    records: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        attributes: Vec<String>,
        descriptions: BTreeMap<String, String>,
        records: Vec<Vec<Cell>>,
    ) -> Result<Self, TableError> {
        let mut seen = HashSet::with_capacity(attributes.len());
        for a in &attributes {
            if !seen.insert(a.as_str()) {
                return Err(TableError::DuplicateAttribute(a.clone()));
            }
        }
        for key in descriptions.keys() {
            if !seen.contains(key.as_str()) {
                return Err(TableError::UnknownDescriptionKey(key.clone()));
            }
        }
        for (row, rec) in records.iter().enumerate() {
            if rec.len() != attributes.len() {
                return Err(TableError::RaggedRow {
                    row,
                    expected: attributes.len(),
                    found: rec.len(),
                });
            }
        }
        Ok(Table {
            name: name.into(),
            attributes,
            descriptions,
            records,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn descriptions(&self) -> &BTreeMap<String, String> {
        &self.descriptions
    }

    /// Description text, or `None` when absent or empty.
    pub fn description(&self, attr: &str) -> Option<&str> {
        self.descriptions
            .get(attr)
            .map(String::as_str)
            .filter(|d| !d.is_empty())
    }

    pub fn records(&self) -> &[Vec<Cell>] {
        &self.records
    }

    pub fn row_count(&self) -> usize {
        self.records.len()
    }

    pub fn index_of(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attr)
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.records.iter().map(move |r| &r[idx])
    }

    /// Cells of column `idx` among the first `limit` records.
    pub fn column_prefix(&self, idx: usize, limit: usize) -> Vec<Cell> {
        self.records
            .iter()
            .take(limit)
            .map(|r| r[idx].clone())
            .collect()
    }

    /// True when every non-missing cell of the attribute is an integer.
    /// Columns with no values at all count as integer-valued here; callers
    /// that need at least one value check that separately.
    pub fn is_integer_valued(&self, idx: usize) -> bool {
        self.column(idx)
            .all(|c| matches!(c, Cell::Integer(_) | Cell::Missing))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Set descriptions, dropping keys that are not attributes.
    pub fn with_descriptions(mut self, descriptions: BTreeMap<String, String>) -> Self {
        let attrs: HashSet<&str> = self.attributes.iter().map(String::as_str).collect();
        self.descriptions = descriptions
            .into_iter()
            .filter(|(k, _)| attrs.contains(k.as_str()))
            .collect();
        self
    }

    /// Write the table as RFC-4180 CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.attributes).expect("in-memory write");
        for rec in &self.records {
            w.write_record(rec.iter().map(Cell::to_field))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn descriptions_json(&self) -> String {
        serde_json::to_string_pretty(&self.descriptions).expect("string map serializes")
    }
}

/// Parse a CSV document (header required) and an optional descriptions
/// object into a [`Table`].
pub fn load_table(
    csv_text: &str,
    descriptions_json: Option<&str>,
    name: &str,
) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| TableError::Csv(e.to_string()))?,
        None => return Err(TableError::MissingHeader),
    };
    let attributes: Vec<String> = header.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for (row, rec) in rows.enumerate() {
        let rec = rec.map_err(|e| TableError::Csv(e.to_string()))?;
        if rec.len() != attributes.len() {
            return Err(TableError::RaggedRow {
                row,
                expected: attributes.len(),
                found: rec.len(),
            });
        }
        records.push(rec.iter().map(Cell::parse).collect());
    }
    let descriptions = match descriptions_json {
        Some(text) => serde_json::from_str::<BTreeMap<String, String>>(text)
            .map_err(|e| TableError::Json(e.to_string()))?,
        None => BTreeMap::new(),
    };
    Table::new(name, attributes, descriptions, records)
}

/// The unpivot operator: which attributes fold into rows, and the names of
/// the generated variable and value columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnpivotOperator {
    pub unpivot_set: Vec<String>,
    pub var_name: String,
    pub value_name: String,
}

impl UnpivotOperator {
    pub fn new(
        unpivot_set: impl IntoIterator<Item = impl Into<String>>,
        var_name: impl Into<String>,
        value_name: impl Into<String>,
    ) -> Self {
        UnpivotOperator {
            unpivot_set: unpivot_set.into_iter().map(Into::into).collect(),
            var_name: var_name.into(),
            value_name: value_name.into(),
        }
    }

    /// The operator that leaves a table untouched.
    pub fn identity() -> Self {
        UnpivotOperator::new(Vec::<String>::new(), "Metric", "Value")
    }

    pub fn is_identity(&self) -> bool {
        self.unpivot_set.is_empty()
    }

    /// Sorted, deduplicated unpivot set; the cache key ignores listing order.
    pub fn canonical_set(&self) -> Vec<String> {
        let mut s = self.unpivot_set.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn validate(&self, t: &Table) -> Result<(), TableError> {
        if self.unpivot_set.is_empty() {
            return Ok(());
        }
        let mut unpivot = HashSet::new();
        for u in &self.unpivot_set {
            if t.index_of(u).is_none() {
                return Err(TableError::UnknownAttribute(u.clone()));
            }
            unpivot.insert(u.as_str());
        }
        if self.var_name == self.value_name {
            return Err(TableError::SameVarValue(self.var_name.clone()));
        }
        for a in t.attributes() {
            if unpivot.contains(a.as_str()) {
                continue;
            }
            if *a == self.var_name || *a == self.value_name {
                return Err(TableError::NameCollision(a.clone()));
            }
        }
        Ok(())
    }
}

/// Fold the operator's attributes into (variable, value) row pairs.
///
/// Output attributes are the retained ones in their original order, then the
/// variable column, then the value column. Rows are input-row-major; within
/// a row the unpivoted attributes follow the table's attribute order.
pub fn apply_unpivot(t: &Table, op: &UnpivotOperator) -> Result<Table, TableError> {
    op.validate(t)?;
    if op.is_identity() {
        return Ok(t.clone());
    }
    let unpivot: HashSet<&str> = op.unpivot_set.iter().map(String::as_str).collect();
    let (retained, folded): (Vec<usize>, Vec<usize>) =
        (0..t.attributes.len()).partition(|&i| !unpivot.contains(t.attributes[i].as_str()));

    let mut attributes: Vec<String> = retained.iter().map(|&i| t.attributes[i].clone()).collect();
    attributes.push(op.var_name.clone());
    attributes.push(op.value_name.clone());

    let mut records = Vec::with_capacity(t.records.len() * folded.len());
    for rec in &t.records {
        for &u in &folded {
            let mut out = Vec::with_capacity(attributes.len());
            out.extend(retained.iter().map(|&i| rec[i].clone()));
            out.push(Cell::Text(t.attributes[u].clone()));
            out.push(rec[u].clone());
            records.push(out);
        }
    }
    let descriptions = t
        .descriptions
        .iter()
        .filter(|(k, _)| !unpivot.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Table::new(t.name.clone(), attributes, descriptions, records)
}

/// Spread (variable, value) pairs back into columns named by the variable
/// values. Groups and spread columns are ordered by first appearance.
pub fn apply_pivot(t: &Table, var_name: &str, value_name: &str) -> Result<Table, TableError> {
    let var_idx = t
        .index_of(var_name)
        .ok_or_else(|| TableError::UnknownAttribute(var_name.to_string()))?;
    let value_idx = t
        .index_of(value_name)
        .ok_or_else(|| TableError::UnknownAttribute(value_name.to_string()))?;
    if var_idx == value_idx {
        return Err(TableError::SameVarValue(var_name.to_string()));
    }
    let retained: Vec<usize> = (0..t.attributes.len())
        .filter(|&i| i != var_idx && i != value_idx)
        .collect();

    let mut spread_names: Vec<String> = Vec::new();
    let mut spread_index: HashMap<String, usize> = HashMap::new();
    let mut group_keys: Vec<Vec<Cell>> = Vec::new();
    let mut group_index: HashMap<Vec<Cell>, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), Cell> = HashMap::new();

    for rec in &t.records {
        let var = match &rec[var_idx] {
            Cell::Missing => return Err(TableError::InvalidSpreadName("missing cell".into())),
            c => c.to_field(),
        };
        let col = *spread_index.entry(var.clone()).or_insert_with(|| {
            spread_names.push(var.clone());
            spread_names.len() - 1
        });
        let key: Vec<Cell> = retained.iter().map(|&i| rec[i].clone()).collect();
        let group = match group_index.get(&key) {
            Some(&g) => g,
            None => {
                group_keys.push(key.clone());
                group_index.insert(key, group_keys.len() - 1);
                group_keys.len() - 1
            }
        };
        if cells.insert((group, col), rec[value_idx].clone()).is_some() {
            return Err(TableError::DuplicateSpread { group, var });
        }
    }

    let mut attributes: Vec<String> = retained.iter().map(|&i| t.attributes[i].clone()).collect();
    for name in &spread_names {
        if attributes.contains(name) {
            return Err(TableError::DuplicateAttribute(name.clone()));
        }
    }
    attributes.extend(spread_names.iter().cloned());

    let records = group_keys
        .into_iter()
        .enumerate()
        .map(|(g, mut key)| {
            key.extend((0..spread_names.len()).map(|c| cells.remove(&(g, c)).unwrap_or(Cell::Missing)));
            key
        })
        .collect();
    let descriptions = t
        .descriptions
        .iter()
        .filter(|(k, _)| k.as_str() != var_name && k.as_str() != value_name)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Table::new(t.name.clone(), attributes, descriptions, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn football() -> Table {
        load_table("Div,Date,HS,AS,HST,AST\nE0,d1,14,11,6,5\n", None, "football").unwrap()
    }

    #[test]
    fn parses_cells_by_rule() {
        let t = load_table("A,B\n1,x\n1.5,\n", None, "t").unwrap();
        assert_eq!(t.attributes(), ["A", "B"]);
        assert_eq!(t.records()[0], vec![Cell::Integer(1), Cell::Text("x".into())]);
        assert_eq!(t.records()[1], vec![Cell::Real(1.5), Cell::Missing]);
        assert_eq!(Cell::parse("1e3"), Cell::Real(1000.0));
        assert_eq!(Cell::parse("inf"), Cell::Text("inf".into()));
        assert_eq!(Cell::parse("-7"), Cell::Integer(-7));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            load_table("A,A\n1,2\n", None, "t").unwrap_err(),
            TableError::DuplicateAttribute("A".into())
        );
        assert!(matches!(
            load_table("A,B\n1\n", None, "t").unwrap_err(),
            TableError::RaggedRow { row: 0, .. }
        ));
        assert!(matches!(
            load_table("A\n1\n", Some("{not json"), "t").unwrap_err(),
            TableError::Json(_)
        ));
        assert_eq!(
            load_table("A\n1\n", Some(r#"{"Z": "zed"}"#), "t").unwrap_err(),
            TableError::UnknownDescriptionKey("Z".into())
        );
        assert_eq!(load_table("", None, "t").unwrap_err(), TableError::MissingHeader);
    }

    #[test]
    fn quoted_fields_survive() {
        let t = load_table("name,note\n\"a,b\",\"say \"\"hi\"\"\"\n", None, "q").unwrap();
        assert_eq!(t.records()[0][0], Cell::Text("a,b".into()));
        assert_eq!(t.records()[0][1], Cell::Text("say \"hi\"".into()));
        let back = load_table(&t.to_csv(), None, "q").unwrap();
        assert_eq!(back.records(), t.records());
    }

    #[test]
    fn unpivot_football_example() {
        let op = UnpivotOperator::new(["HS", "AS"], "Metric", "Value");
        let out = apply_unpivot(&football(), &op).unwrap();
        assert_eq!(out.attributes(), ["Div", "Date", "HST", "AST", "Metric", "Value"]);
        let row = |a: &str, v: i64| {
            vec![
                Cell::Text("E0".into()),
                Cell::Text("d1".into()),
                Cell::Integer(6),
                Cell::Integer(5),
                Cell::Text(a.into()),
                Cell::Integer(v),
            ]
        };
        assert_eq!(out.records(), [row("HS", 14), row("AS", 11)]);
    }

    #[test]
    fn unpivot_follows_table_order_not_set_order() {
        let op = UnpivotOperator::new(["AS", "HS"], "Metric", "Value");
        let out = apply_unpivot(&football(), &op).unwrap();
        assert_eq!(out.records()[0][4], Cell::Text("HS".into()));
    }

    #[test]
    fn unpivot_identity_and_errors() {
        let t = football();
        assert_eq!(apply_unpivot(&t, &UnpivotOperator::identity()).unwrap(), t);
        assert_eq!(
            apply_unpivot(&t, &UnpivotOperator::new(["X"], "v", "w")).unwrap_err(),
            TableError::UnknownAttribute("X".into())
        );
        assert_eq!(
            apply_unpivot(&t, &UnpivotOperator::new(["HS"], "Div", "w")).unwrap_err(),
            TableError::NameCollision("Div".into())
        );
        assert_eq!(
            apply_unpivot(&t, &UnpivotOperator::new(["HS"], "v", "v")).unwrap_err(),
            TableError::SameVarValue("v".into())
        );
        // reusing an unpivoted attribute's name is not a collision
        assert!(apply_unpivot(&t, &UnpivotOperator::new(["HS", "AS"], "HS", "AS")).is_ok());
    }

    #[test]
    fn unpivot_keeps_missing_cells() {
        let t = load_table("k,a,b\n1,,2\n", None, "t").unwrap();
        let out = apply_unpivot(&t, &UnpivotOperator::new(["a", "b"], "v", "w")).unwrap();
        assert_eq!(out.row_count(), 2);
        assert_eq!(out.records()[0][2], Cell::Missing);
    }

    #[test]
    fn unpivot_descriptions() {
        let t = load_table(
            "k,a,b\n1,2,3\n",
            Some(r#"{"k": "key", "a": "first"}"#),
            "t",
        )
        .unwrap();
        let out = apply_unpivot(&t, &UnpivotOperator::new(["a", "b"], "v", "w")).unwrap();
        assert_eq!(out.description("k"), Some("key"));
        assert_eq!(out.description("v"), None);
        assert!(!out.descriptions().contains_key("a"));
    }

    #[test]
    fn pivot_inverts_unpivot() {
        let t = football();
        let op = UnpivotOperator::new(["HS", "AS", "HST", "AST"], "Metric", "Value");
        let back = apply_pivot(&apply_unpivot(&t, &op).unwrap(), "Metric", "Value").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn pivot_errors_and_empty() {
        let t = load_table("k,v,w\n1,a,2\n1,a,3\n", None, "t").unwrap();
        assert!(matches!(
            apply_pivot(&t, "v", "w").unwrap_err(),
            TableError::DuplicateSpread { group: 0, .. }
        ));
        assert_eq!(
            apply_pivot(&t, "nope", "w").unwrap_err(),
            TableError::UnknownAttribute("nope".into())
        );
        let empty = load_table("k,v,w\n", None, "t").unwrap();
        let out = apply_pivot(&empty, "v", "w").unwrap();
        assert_eq!(out.attributes(), ["k"]);
        assert_eq!(out.row_count(), 0);
    }

    #[test]
    fn pivot_fills_gaps_with_missing() {
        let t = load_table("k,v,w\n1,a,2\n2,b,3\n", None, "t").unwrap();
        let out = apply_pivot(&t, "v", "w").unwrap();
        assert_eq!(out.attributes(), ["k", "a", "b"]);
        assert_eq!(out.records()[0], vec![Cell::Integer(1), Cell::Integer(2), Cell::Missing]);
    }

    #[test]
    fn integer_valued_ignores_missing() {
        let t = load_table("a,b\n1,1\n,2.5\n", None, "t").unwrap();
        assert!(t.is_integer_valued(0));
        assert!(!t.is_integer_valued(1));
    }
}
