//! Comparison of pipeline primaries against designer colourings.
//!
//! Each designer's coloring contributes its largest-area colour. These are
//! leader-clustered with the same CIEDE2000 threshold as image grouping and
//! the Lab centroid of the largest cluster is the concept's ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::association::{leader_cluster, rank_clusters, DEFAULT_GROUP_THRESHOLD};
use crate::color_space::{ciede2000, Lab, Rgb8};

pub const AREA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid coloring for {concept}/{designer}: {reason}")]
    InvalidColoring {
        concept: String,
        designer: String,
        reason: String,
    },
    #[error("concept {0:?} has no colorings")]
    EmptyConcept(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Fruit,
    Vegetable,
    Environment,
    Animal,
    Context,
}

impl Category {
    pub fn is_context_dependent(self) -> bool {
        self == Category::Context
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Fruit => "fruit",
            Category::Vegetable => "vegetable",
            Category::Environment => "environment",
            Category::Animal => "animal",
            Category::Context => "context",
        }
    }
}

/// Evaluation condition: queried/generated photos and clipart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Q,
    G,
    QC,
    GC,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Q, Condition::G, Condition::QC, Condition::GC];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Q => "Q",
            Condition::G => "G",
            Condition::QC => "QC",
            Condition::GC => "GC",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Q" => Ok(Condition::Q),
            "G" => Ok(Condition::G),
            "QC" => Ok(Condition::QC),
            "GC" => Ok(Condition::GC),
            other => Err(format!("unknown condition {other:?}, expected Q, G, QC or GC")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorArea {
    pub color: Rgb8,
    pub area: f64,
}

/// One designer's coloring of one concept (one line of `baseline.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignerColoring {
    pub concept: String,
    pub designer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub colors: Vec<ColorArea>,
}

impl DesignerColoring {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |reason: &str| EvalError::InvalidColoring {
            concept: self.concept.clone(),
            designer: self.designer.clone(),
            reason: reason.to_owned(),
        };
        if self.colors.is_empty() {
            return Err(fail("no colours"));
        }
        if self.colors.iter().any(|c| !(c.area.is_finite() && c.area > 0.0)) {
            return Err(fail("area fractions must be positive"));
        }
        let sum: f64 = self.colors.iter().map(|c| c.area).sum();
        if (sum - 1.0).abs() > AREA_TOLERANCE {
            return Err(fail(&format!("area fractions sum to {sum}")));
        }
        Ok(())
    }

    /// Largest-area colour; the first listed wins ties.
    pub fn dominant(&self) -> Option<Rgb8> {
        let mut best: Option<&ColorArea> = None;
        for c in &self.colors {
            if best.is_none_or(|b| c.area > b.area) {
                best = Some(c);
            }
        }
        best.map(|c| c.color)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptColorings {
    pub category: Option<Category>,
    pub colorings: Vec<DesignerColoring>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineDataset {
    pub concepts: BTreeMap<String, ConceptColorings>,
}

impl BaselineDataset {
    pub fn from_colorings(
        colorings: impl IntoIterator<Item = DesignerColoring>,
    ) -> Result<Self, EvalError> {
        let mut ds = Self::default();
        for c in colorings {
            ds.push(c)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, coloring: DesignerColoring) -> Result<(), EvalError> {
        coloring.validate()?;
        let entry = self.concepts.entry(coloring.concept.clone()).or_default();
        match (entry.category, coloring.category) {
            (Some(a), Some(b)) if a != b => {
                return Err(EvalError::InvalidColoring {
                    concept: coloring.concept.clone(),
                    designer: coloring.designer.clone(),
                    reason: format!("category {} conflicts with {}", b.name(), a.name()),
                })
            }
            (None, Some(b)) => entry.category = Some(b),
            _ => {}
        }
        entry.colorings.push(coloring);
        Ok(())
    }

    /// Reads JSON lines; blank lines are ignored.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, EvalError> {
        let mut ds = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let coloring: DesignerColoring =
                serde_json::from_str(&line).map_err(|e| EvalError::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            ds.push(coloring).map_err(|e| EvalError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(ds)
    }

    pub fn sample_count(&self) -> usize {
        self.concepts.values().map(|c| c.colorings.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub color: Rgb8,
    pub lab: Lab,
    pub cluster_size: usize,
    pub designers: usize,
}

pub fn ground_truth_primary(
    concept: &str,
    colorings: &[DesignerColoring],
) -> Result<GroundTruth, EvalError> {
    ground_truth_with_threshold(concept, colorings, DEFAULT_GROUP_THRESHOLD)
}

pub fn ground_truth_with_threshold(
    concept: &str,
    colorings: &[DesignerColoring],
    threshold: f64,
) -> Result<GroundTruth, EvalError> {
    let mut ordered: Vec<&DesignerColoring> = colorings.iter().collect();
    ordered.sort_by(|a, b| a.designer.cmp(&b.designer));
    let dominants: Vec<Lab> = ordered
        .iter()
        .filter_map(|c| c.dominant())
        .map(Rgb8::to_lab)
        .collect();
    if dominants.is_empty() {
        return Err(EvalError::EmptyConcept(concept.to_owned()));
    }
    let mut clusters = leader_cluster(&dominants, threshold);
    rank_clusters(&mut clusters);
    let best = &clusters[0];
    let n = best.members.len() as f64;
    let mut acc = [0.0; 3];
    for &i in &best.members {
        acc[0] += dominants[i].l;
        acc[1] += dominants[i].a;
        acc[2] += dominants[i].b;
    }
    let lab = Lab::new(acc[0] / n, acc[1] / n, acc[2] / n);
    Ok(GroundTruth {
        color: lab.to_rgb8(),
        lab,
        cluster_size: best.members.len(),
        designers: dominants.len(),
    })
}

/// Top-ranked primary per condition and concept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodPrimaries {
    pub by_condition: BTreeMap<Condition, BTreeMap<String, Rgb8>>,
}

impl MethodPrimaries {
    pub fn insert(&mut self, condition: Condition, concept: impl Into<String>, primary: Rgb8) {
        self.by_condition
            .entry(condition)
            .or_default()
            .insert(concept.into(), primary);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub condition: Condition,
    pub concept: String,
    pub category: Option<Category>,
    pub method_primary: Rgb8,
    pub ground_truth: Rgb8,
    pub delta_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Basic,
    ContextDependent,
    All,
}

/// Group key for aggregate rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "snake_case")]
pub enum AggregateKey {
    Kind(ConceptKind),
    Category(Option<Category>),
}

impl AggregateKey {
    pub fn label(&self) -> String {
        match self {
            AggregateKey::Kind(ConceptKind::Basic) => "basic".into(),
            AggregateKey::Kind(ConceptKind::ContextDependent) => "context_dependent".into(),
            AggregateKey::Kind(ConceptKind::All) => "all".into(),
            AggregateKey::Category(Some(c)) => c.name().into(),
            AggregateKey::Category(None) => "uncategorized".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub condition: Condition,
    pub key: AggregateKey,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single row.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingConcept {
    pub condition: Condition,
    pub concept: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<ConceptRow>,
    pub aggregates: Vec<Aggregate>,
    pub missing: Vec<MissingConcept>,
    pub ground_truth: BTreeMap<String, GroundTruth>,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn evaluate(method: &MethodPrimaries, baseline: &BaselineDataset) -> EvaluationReport {
    let mut ground_truth = BTreeMap::new();
    let mut missing = Vec::new();
    for (concept, data) in &baseline.concepts {
        match ground_truth_primary(concept, &data.colorings) {
            Ok(gt) => {
                ground_truth.insert(concept.clone(), gt);
            }
            Err(e) => log::warn!("{e}"),
        }
    }

    let mut rows = Vec::new();
    for (&condition, primaries) in &method.by_condition {
        for (concept, &primary) in primaries {
            let Some(gt) = ground_truth.get(concept) else {
                log::warn!("{condition}/{concept}: not in the baseline, excluded");
                missing.push(MissingConcept {
                    condition,
                    concept: concept.clone(),
                    reason: "not in baseline".into(),
                });
                continue;
            };
            rows.push(ConceptRow {
                condition,
                concept: concept.clone(),
                category: baseline.concepts[concept].category,
                method_primary: primary,
                ground_truth: gt.color,
                delta_e: ciede2000(primary.to_lab(), gt.color.to_lab()),
            });
        }
        for concept in ground_truth.keys() {
            if !primaries.contains_key(concept) {
                missing.push(MissingConcept {
                    condition,
                    concept: concept.clone(),
                    reason: "no palette for this condition".into(),
                });
            }
        }
    }

    let mut buckets: BTreeMap<(Condition, AggregateKey), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let kind = match r.category {
            Some(c) if c.is_context_dependent() => ConceptKind::ContextDependent,
            _ => ConceptKind::Basic,
        };
        for key in [
            AggregateKey::Kind(kind),
            AggregateKey::Kind(ConceptKind::All),
            AggregateKey::Category(r.category),
        ] {
            buckets.entry((r.condition, key)).or_default().push(r.delta_e);
        }
    }
    let aggregates = buckets
        .into_iter()
        .map(|((condition, key), values)| {
            let (mean, sd) = mean_sd(&values);
            Aggregate {
                condition,
                key,
                n: values.len(),
                mean,
                sd,
            }
        })
        .collect();

    EvaluationReport {
        rows,
        aggregates,
        missing,
        ground_truth,
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl EvaluationReport {
    pub fn aggregate(&self, condition: Condition, key: &AggregateKey) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.condition == condition && &a.key == key)
    }

    /// Per-concept rows followed by aggregate rows in one table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,condition,group,concept,n,delta_e_mean,delta_e_sd,method_primary,ground_truth\n",
        );
        for r in &self.rows {
            let group = r.category.map(Category::name).unwrap_or("uncategorized");
            out.push_str(&format!(
                "concept,{},{},{},1,{},,{},{}\n",
                r.condition,
                group,
                csv_field(&r.concept),
                r.delta_e,
                r.method_primary,
                r.ground_truth
            ));
        }
        for a in &self.aggregates {
            out.push_str(&format!(
                "aggregate,{},{},,{},{},{},,\n",
                a.condition,
                a.key.label(),
                a.n,
                a.mean,
                a.sd
            ));
        }
        out
    }
}
