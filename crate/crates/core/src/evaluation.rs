//! Ground truth, accuracy metrics, and synthetic instance bundles.
//!
//! Acc_E2E is the share of predicted attributes with a non-null
//! ground-truth target that were matched to it. Acc_per_attr is the share
//! of all source and target attributes that were handled correctly.
//! Matches of the generated variable/value columns only count as correct
//! when the predicted unpivot set is exactly the true one.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matcher::Evaluation;
use crate::table::{apply_pivot, load_table, Cell, Table, TableError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{role} refers to unknown attribute {name:?}")]
    UnknownAttribute { role: &'static str, name: String },
    #[error("ground truth maps more than one source attribute to {0:?}")]
    NotInjective(String),
    #[error("key attributes must be every attribute except {spread:?} and {value:?}")]
    KeyMismatch { spread: String, value: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Target attributes that receive the generated variable and value
/// columns. Stored by role because a predictor may name them freely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTargets {
    pub var: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub unpivot_set: Vec<String>,
    #[serde(default)]
    pub generated_targets: Option<GeneratedTargets>,
    /// Every retained source attribute to its target, `null` for none.
    pub retained_matching: BTreeMap<String, Option<String>>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn validate(&self, source: &Table, target: &Table) -> Result<(), EvalError> {
        let unknown = |role, name: &str| EvalError::UnknownAttribute {
            role,
            name: name.to_string(),
        };
        for a in &self.unpivot_set {
            source.index_of(a).ok_or_else(|| unknown("ground truth unpivot_set", a))?;
        }
        let mut hit = HashSet::new();
        if let Some(g) = &self.generated_targets {
            for t in [&g.var, &g.value] {
                target.index_of(t).ok_or_else(|| unknown("ground truth generated_targets", t))?;
                if !hit.insert(t.as_str()) {
                    return Err(EvalError::NotInjective(t.clone()));
                }
            }
        }
        for (s, t) in &self.retained_matching {
            source.index_of(s).ok_or_else(|| unknown("ground truth retained_matching", s))?;
            if let Some(t) = t {
                target.index_of(t).ok_or_else(|| unknown("ground truth retained_matching", t))?;
                if !hit.insert(t.as_str()) {
                    return Err(EvalError::NotInjective(t.clone()));
                }
            }
        }
        Ok(())
    }

    /// The prediction that reproduces this ground truth, naming the
    /// generated columns after their targets.
    pub fn as_prediction(&self) -> Prediction {
        let mut matches: BTreeMap<String, Option<String>> = self.retained_matching.clone();
        let (var, value) = match &self.generated_targets {
            Some(g) => (g.var.clone(), g.value.clone()),
            None => ("Metric".to_string(), "Value".to_string()),
        };
        if !self.unpivot_set.is_empty() {
            let g = self.generated_targets.as_ref();
            matches.insert(var.clone(), g.map(|g| g.var.clone()));
            matches.insert(value.clone(), g.map(|g| g.value.clone()));
        }
        Prediction {
            unpivot_set: self.unpivot_set.clone(),
            var_name: var,
            value_name: value,
            matches,
        }
    }
}

/// What a matcher claims: the unpivot operator and a one-to-one matching
/// of the unpivoted table's attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub unpivot_set: Vec<String>,
    pub var_name: String,
    pub value_name: String,
    pub matches: BTreeMap<String, Option<String>>,
}

impl From<&Evaluation> for Prediction {
    fn from(e: &Evaluation) -> Self {
        Prediction {
            unpivot_set: e.operator.unpivot_set.clone(),
            var_name: e.operator.var_name.clone(),
            value_name: e.operator.value_name.clone(),
            matches: e
                .matching
                .pairs
                .iter()
                .map(|p| (p.source.clone(), p.target.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc_e2e: f64,
    pub acc_per_attr: f64,
    pub e2e_correct: usize,
    pub e2e_denominator: usize,
    pub correct_set_size: usize,
    /// |source attributes| + |target attributes|.
    pub attr_denominator: usize,
}

/// Round a unit-interval accuracy to a percentage with two decimals.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Credited {
    Source(String),
    Target(String),
}

/// Score a prediction against the ground truth.
///
/// Per predicted attribute:
/// - retained in both: counts when its true target is non-null, correct on
///   an exact target match;
/// - truly unpivoted but predicted retained: counts, never correct;
/// - generated var/value: counts when the truth has a generated target,
///   correct only with the exact unpivot set and a matching target.
///
/// An empty E2E denominator scores 1.0.
pub fn score(gt: &GroundTruth, pred: &Prediction, source: &Table, target: &Table) -> Result<MetricsReport, EvalError> {
    gt.validate(source, target)?;
    for a in &pred.unpivot_set {
        source.index_of(a).ok_or_else(|| EvalError::UnknownAttribute {
            role: "prediction unpivot set",
            name: a.clone(),
        })?;
    }
    for t in pred.matches.values().flatten() {
        target.index_of(t).ok_or_else(|| EvalError::UnknownAttribute {
            role: "prediction matches",
            name: t.clone(),
        })?;
    }

    let truth: BTreeSet<&str> = gt.unpivot_set.iter().map(String::as_str).collect();
    let predicted: BTreeSet<&str> = pred.unpivot_set.iter().map(String::as_str).collect();
    let exact = truth == predicted;
    let pi_prime = |a: &str| pred.matches.get(a).cloned().flatten();

    let mut correct = 0usize;
    let mut denom = 0usize;
    let mut credited: HashSet<Credited> = HashSet::new();
    let mut credit = |c: Credited| {
        let fresh = credited.insert(c);
        debug_assert!(fresh, "attribute credited twice");
    };

    for a in source.attributes().iter().filter(|a| !predicted.contains(a.as_str())) {
        if truth.contains(a.as_str()) {
            denom += 1;
            continue;
        }
        let pi = gt.retained_matching.get(a).cloned().flatten();
        let hit = pi == pi_prime(a);
        if let Some(t) = &pi {
            denom += 1;
            if hit {
                correct += 1;
                credit(Credited::Target(t.clone()));
            }
        }
        if hit {
            credit(Credited::Source(a.clone()));
        }
    }

    if !predicted.is_empty() {
        if let Some(g) = &gt.generated_targets {
            for (name, truth_target) in [(&pred.var_name, &g.var), (&pred.value_name, &g.value)] {
                denom += 1;
                if exact && pi_prime(name).as_ref() == Some(truth_target) {
                    correct += 1;
                    credit(Credited::Target(truth_target.clone()));
                }
            }
        }
    }

    for a in truth.intersection(&predicted) {
        credit(Credited::Source(a.to_string()));
    }

    let attr_denominator = source.attributes().len() + target.attributes().len();
    let correct_set_size = credited.len();
    Ok(MetricsReport {
        acc_e2e: if denom == 0 { 1.0 } else { correct as f64 / denom as f64 },
        acc_per_attr: if attr_denominator == 0 {
            1.0
        } else {
            correct_set_size as f64 / attr_denominator as f64
        },
        e2e_correct: correct,
        e2e_denominator: denom,
        correct_set_size,
        attr_denominator,
    })
}

/// Pivot a tidy table into a test instance. The standard table is the tidy
/// table with its rows shuffled by `seed`.
pub fn generate_instance(
    tidy: &Table,
    key_attrs: &[String],
    spread_attr: &str,
    value_attr: &str,
    seed: u64,
) -> Result<(Table, Table, GroundTruth), EvalError> {
    let expected: BTreeSet<&str> = tidy
        .attributes()
        .iter()
        .map(String::as_str)
        .filter(|a| *a != spread_attr && *a != value_attr)
        .collect();
    let given: BTreeSet<&str> = key_attrs.iter().map(String::as_str).collect();
    if expected != given || given.len() != key_attrs.len() {
        return Err(EvalError::KeyMismatch {
            spread: spread_attr.to_string(),
            value: value_attr.to_string(),
        });
    }
    let pivot = apply_pivot(tidy, spread_attr, value_attr)?.with_name("source");
    let mut rows = tidy.records().to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let standard = Table::new("target", tidy.attributes().to_vec(), tidy.descriptions().clone(), rows)?;
    let gt = GroundTruth {
        unpivot_set: pivot.attributes()[key_attrs.len()..].to_vec(),
        generated_targets: Some(GeneratedTargets {
            var: spread_attr.to_string(),
            value: value_attr.to_string(),
        }),
        retained_matching: key_attrs.iter().map(|k| (k.clone(), Some(k.clone()))).collect(),
    };
    Ok((pivot, standard, gt))
}

/// Shape of a synthetic tidy table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Distinct key combinations, i.e. rows of the pivot table.
    pub entities: usize,
    /// Spread labels, i.e. generated pivot columns.
    pub metrics: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            entities: 6,
            metrics: 4,
            seed: 0,
        }
    }
}

pub const SYNTHETIC_KEYS: [&str; 3] = ["Station", "Year", "Region"];
pub const SYNTHETIC_SPREAD: &str = "Indicator";
pub const SYNTHETIC_VALUE: &str = "Reading";

const REGIONS: [&str; 5] = ["North", "South", "East", "West", "Central"];

/// A complete (every entity has every metric) tidy table with columns
/// Station, Year, Region, Indicator, Reading. Only the key columns carry
/// descriptions: generated unpivot columns never have one, so describing
/// their targets would cap the true operator's reward below 1.
pub fn synthetic_tidy(spec: &SyntheticSpec) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.metrics.max(1).to_string().len();
    let labels: Vec<String> = (1..=spec.metrics).map(|j| format!("IND{j:0width$}")).collect();
    let mut records = Vec::with_capacity(spec.entities * spec.metrics);
    for e in 0..spec.entities {
        let station = Cell::Text(format!("ST{:04}", e + 1));
        let year = Cell::Integer(rng.gen_range(1990..2024));
        let region = Cell::Text(REGIONS[rng.gen_range(0..REGIONS.len())].to_string());
        for (j, label) in labels.iter().enumerate() {
            // each indicator gets its own scale so columns are distinguishable
            let base = 10 * (j as i64 % 7 + 1);
            records.push(vec![
                station.clone(),
                year.clone(),
                region.clone(),
                Cell::Text(label.clone()),
                Cell::Integer(base + rng.gen_range(0..base)),
            ]);
        }
    }
    let mut attributes: Vec<String> = SYNTHETIC_KEYS.iter().map(|s| s.to_string()).collect();
    attributes.push(SYNTHETIC_SPREAD.to_string());
    attributes.push(SYNTHETIC_VALUE.to_string());
    let descriptions = BTreeMap::from([
        ("Station".to_string(), "Monitoring station identifier".to_string()),
        ("Year".to_string(), "Calendar year of the measurement".to_string()),
        ("Region".to_string(), "Geographic region of the station".to_string()),
    ]);
    Table::new("tidy", attributes, descriptions, records).expect("synthetic table is well formed")
}

/// Generate a synthetic (source, target, ground truth) instance.
pub fn synthetic_instance(spec: &SyntheticSpec) -> (Table, Table, GroundTruth) {
    let tidy = synthetic_tidy(spec);
    let keys: Vec<String> = SYNTHETIC_KEYS.iter().map(|s| s.to_string()).collect();
    generate_instance(&tidy, &keys, SYNTHETIC_SPREAD, SYNTHETIC_VALUE, spec.seed)
        .expect("synthetic tidy tables pivot cleanly")
}

/// Replace every distinct text value in `attrs` by a token keyed on
/// `seed`. Equal values get equal tokens across tables sharing the seed.
pub fn anonymize(t: &Table, attrs: &[String], seed: u64) -> Result<Table, EvalError> {
    let idx: Vec<usize> = attrs
        .iter()
        .map(|a| {
            t.index_of(a).ok_or_else(|| EvalError::UnknownAttribute {
                role: "anonymize",
                name: a.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut memo: HashMap<String, String> = HashMap::new();
    let mut token = |s: &str| -> String {
        memo.entry(s.to_string())
            .or_insert_with(|| {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(s.as_bytes());
                let digest = h.finalize();
                let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
                format!("anon_{hex}")
            })
            .clone()
    };
    let records = t
        .records()
        .iter()
        .map(|rec| {
            let mut rec = rec.clone();
            for &i in &idx {
                if let Cell::Text(s) = &rec[i] {
                    rec[i] = Cell::Text(token(s));
                }
            }
            rec
        })
        .collect();
    Ok(Table::new(t.name(), t.attributes().to_vec(), t.descriptions().clone(), records)?)
}

/// An instance on disk: `source.csv`, `target.csv`, `source.desc.json`,
/// `target.desc.json`, `ground_truth.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub source: Table,
    pub target: Table,
    pub ground_truth: GroundTruth,
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Bundle {
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write(&dir.join("source.csv"), &self.source.to_csv())?;
        write(&dir.join("target.csv"), &self.target.to_csv())?;
        write(&dir.join("source.desc.json"), &self.source.descriptions_json())?;
        write(&dir.join("target.desc.json"), &self.target.descriptions_json())?;
        write(&dir.join("ground_truth.json"), &(self.ground_truth.to_json() + "\n"))
    }

    pub fn read(dir: &Path) -> Result<Self, EvalError> {
        let table = |stem: &str| -> Result<Table, EvalError> {
            let csv = read(&dir.join(format!("{stem}.csv")))?;
            let desc_path = dir.join(format!("{stem}.desc.json"));
            let desc = if desc_path.exists() { Some(read(&desc_path)?) } else { None };
            Ok(load_table(&csv, desc.as_deref(), stem)?)
        };
        let gt_path = dir.join("ground_truth.json");
        let ground_truth = GroundTruth::from_json(&read(&gt_path)?).map_err(|source| EvalError::Json {
            path: gt_path.display().to_string(),
            source,
        })?;
        Ok(Bundle {
            source: table("source")?,
            target: table("target")?,
            ground_truth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn football() -> (Table, Table, GroundTruth) {
        let source = load_table("Div,Date,HS,AS,HST,AST\nE0,d1,14,11,6,5\n", None, "s").unwrap();
        let target = load_table("Div,Date,Metric,Value\nE0,d1,HS,14\n", None, "t").unwrap();
        let gt = GroundTruth {
            unpivot_set: s(&["HS", "AS"]),
            generated_targets: Some(GeneratedTargets {
                var: "Metric".into(),
                value: "Value".into(),
            }),
            retained_matching: BTreeMap::from([
                ("Div".into(), Some("Div".into())),
                ("Date".into(), Some("Date".into())),
                ("HST".into(), None),
                ("AST".into(), None),
            ]),
        };
        (source, target, gt)
    }

    fn pred(set: &[&str], matches: &[(&str, Option<&str>)]) -> Prediction {
        Prediction {
            unpivot_set: s(set),
            var_name: "Metric".into(),
            value_name: "Value".into(),
            matches: matches
                .iter()
                .map(|(a, b)| (a.to_string(), b.map(str::to_string)))
                .collect(),
        }
    }

    #[test]
    fn exact_set_scores_perfectly() {
        let (src, tgt, gt) = football();
        let p = pred(
            &["HS", "AS"],
            &[
                ("Div", Some("Div")),
                ("Date", Some("Date")),
                ("HST", None),
                ("AST", None),
                ("Metric", Some("Metric")),
                ("Value", Some("Value")),
            ],
        );
        let r = score(&gt, &p, &src, &tgt).unwrap();
        assert_eq!((r.e2e_correct, r.e2e_denominator), (4, 4));
        assert_eq!((r.correct_set_size, r.attr_denominator), (10, 10));
        assert_eq!((r.acc_e2e, r.acc_per_attr), (1.0, 1.0));
    }

    #[test]
    fn over_inclusive_set() {
        let (src, tgt, gt) = football();
        let p = pred(
            &["HS", "AS", "HST", "AST"],
            &[
                ("Div", Some("Div")),
                ("Date", Some("Date")),
                ("Metric", Some("Metric")),
                ("Value", Some("Value")),
            ],
        );
        let r = score(&gt, &p, &src, &tgt).unwrap();
        assert_eq!((r.e2e_correct, r.e2e_denominator), (2, 4));
        assert_eq!(r.correct_set_size, 6);
        assert_eq!((percent(r.acc_e2e), percent(r.acc_per_attr)), (50.0, 60.0));
    }

    #[test]
    fn no_unpivot_counts_missed_attributes() {
        let (src, tgt, gt) = football();
        let p = pred(
            &[],
            &[("Div", Some("Div")), ("Date", Some("Date")), ("HS", Some("Value")), ("AS", None)],
        );
        let r = score(&gt, &p, &src, &tgt).unwrap();
        assert_eq!((r.e2e_correct, r.e2e_denominator), (2, 4));
        // Div, Date, HST, AST as sources; Div, Date as targets
        assert_eq!(r.correct_set_size, 6);
    }

    #[test]
    fn generated_names_do_not_matter() {
        let (src, tgt, gt) = football();
        let mut p = gt.as_prediction();
        let m = p.matches.remove("Metric").unwrap();
        let v = p.matches.remove("Value").unwrap();
        p.var_name = "Stat".into();
        p.value_name = "Count".into();
        p.matches.insert("Stat".into(), m);
        p.matches.insert("Count".into(), v);
        let r = score(&gt, &p, &src, &tgt).unwrap();
        assert_eq!((r.acc_e2e, r.acc_per_attr), (1.0, 1.0));
    }

    #[test]
    fn unknown_attributes_are_rejected() {
        let (src, tgt, mut gt) = football();
        gt.unpivot_set.push("Nope".into());
        assert!(matches!(
            score(&gt, &gt.as_prediction(), &src, &tgt),
            Err(EvalError::UnknownAttribute { .. })
        ));
        let (_, _, mut gt) = football();
        gt.retained_matching.insert("HST".into(), Some("Div".into()));
        assert!(matches!(gt.validate(&src, &tgt), Err(EvalError::NotInjective(_))));
    }

    #[test]
    fn ground_truth_json_schema() {
        let (_, _, gt) = football();
        let text = gt.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["generated_targets"]["var"], "Metric");
        assert_eq!(v["retained_matching"]["HST"], serde_json::Value::Null);
        assert_eq!(GroundTruth::from_json(&text).unwrap(), gt);
    }

    #[test]
    fn pivot_shape() {
        let tidy = load_table(
            "K,M,V\na,x,1\na,y,2\nb,x,3\nb,y,4\nc,x,5\nc,y,6\n",
            None,
            "tidy",
        )
        .unwrap();
        let (p, std, gt) = generate_instance(&tidy, &s(&["K"]), "M", "V", 3).unwrap();
        assert_eq!(p.row_count(), 3);
        assert_eq!(p.attributes(), ["K", "x", "y"]);
        assert_eq!(std.row_count(), 6);
        assert_eq!(gt.unpivot_set, ["x", "y"]);
        assert!(matches!(
            generate_instance(&tidy, &s(&["K", "M"]), "M", "V", 3),
            Err(EvalError::KeyMismatch { .. })
        ));
        let r = score(&gt, &gt.as_prediction(), &p, &std).unwrap();
        assert_eq!((r.acc_e2e, r.acc_per_attr), (1.0, 1.0));
    }

    #[test]
    fn synthetic_generation_is_seeded() {
        let spec = SyntheticSpec {
            entities: 5,
            metrics: 3,
            seed: 9,
        };
        let (a, b, g) = synthetic_instance(&spec);
        let (a2, b2, g2) = synthetic_instance(&spec);
        assert_eq!((a.to_csv(), b.to_csv(), &g), (a2.to_csv(), b2.to_csv(), &g2));
        assert_eq!(a.attributes().len(), 3 + 3);
        assert_eq!(a.row_count(), 5);
        let other = synthetic_instance(&SyntheticSpec { seed: 10, ..spec });
        assert_ne!(other.1.to_csv(), b.to_csv());
    }

    #[test]
    fn true_operator_is_perfect_on_synthetic_instances() {
        use crate::embedding::HashingEmbedder;
        use crate::matcher::evaluate;
        use crate::table::UnpivotOperator;
        let (src, tgt, gt) = synthetic_instance(&SyntheticSpec::default());
        let g = gt.generated_targets.clone().unwrap();
        let truth = UnpivotOperator::new(gt.unpivot_set.clone(), g.var, g.value);
        let good = evaluate(&src, &tgt, &truth, &HashingEmbedder).unwrap();
        let none = evaluate(&src, &tgt, &UnpivotOperator::identity(), &HashingEmbedder).unwrap();
        assert_eq!(good.reward(), 1.0);
        assert!(good.reward() > none.reward());
        let r = score(&gt, &Prediction::from(&good), &src, &tgt).unwrap();
        assert_eq!((r.acc_e2e, r.acc_per_attr), (1.0, 1.0));
    }

    #[test]
    fn anonymize_is_keyed_and_consistent() {
        let t = load_table("Date,Team,N\nd1,A,1\nd1,B,2\nd2,A,3\n", None, "t").unwrap();
        let a = anonymize(&t, &s(&["Date", "Team"]), 1).unwrap();
        let col = |t: &Table, i| t.column(i).cloned().collect::<Vec<_>>();
        let dates = col(&a, 0);
        assert_eq!(dates[0], dates[1]);
        assert_ne!(dates[0], dates[2]);
        assert_eq!(col(&a, 2), col(&t, 2));
        assert_eq!(anonymize(&t, &s(&["Date", "Team"]), 1).unwrap(), a);
        assert_ne!(anonymize(&t, &s(&["Date"]), 2).unwrap().records()[0][0], dates[0]);
        assert!(anonymize(&t, &s(&["Nope"]), 1).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let dir = std::env::temp_dir().join(format!("pivotmatch-bundle-{}", std::process::id()));
        let (source, target, ground_truth) = synthetic_instance(&SyntheticSpec::default());
        let b = Bundle {
            source,
            target,
            ground_truth,
        };
        b.write(&dir).unwrap();
        let back = Bundle::read(&dir).unwrap();
        assert_eq!(back.source.to_csv(), b.source.to_csv());
        assert_eq!(back.target.descriptions(), b.target.descriptions());
        assert_eq!(back.ground_truth, b.ground_truth);
        fs::remove_dir_all(&dir).unwrap();
        assert!(matches!(Bundle::read(&dir), Err(EvalError::Io { .. })));
    }

    proptest! {
        #[test]
        fn truth_scores_perfectly(entities in 1usize..6, metrics in 1usize..6, seed in any::<u64>()) {
            let (src, tgt, gt) = synthetic_instance(&SyntheticSpec { entities, metrics, seed });
            let r = score(&gt, &gt.as_prediction(), &src, &tgt).unwrap();
            prop_assert_eq!((r.acc_e2e, r.acc_per_attr), (1.0, 1.0));
        }

        #[test]
        fn metrics_ignore_attribute_order(keep in prop::collection::vec(any::<bool>(), 6), rot in 0usize..6) {
            let (src, tgt, gt) = football();
            let names = src.attributes().to_vec();
            let set: Vec<&str> = names.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| n.as_str()).collect();
            let mut p = pred(&set, &[("Div", Some("Div")), ("Date", Some("Value")), ("HST", None)]);
            p.matches.insert("Metric".into(), Some("Metric".into()));
            let base = score(&gt, &p, &src, &tgt).unwrap();
            let mut order = names.clone();
            order.rotate_left(rot);
            let idx: Vec<usize> = order.iter().map(|a| src.index_of(a).unwrap()).collect();
            let recs = src.records().iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
            let permuted = Table::new("s", order, BTreeMap::new(), recs).unwrap();
            p.unpivot_set.reverse();
            let again = score(&gt, &p, &permuted, &tgt).unwrap();
            prop_assert_eq!(base, again);
        }
    }
}
