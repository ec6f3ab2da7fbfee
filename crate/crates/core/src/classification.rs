//! Multi-neighbor (MN) classification: rank-weighted votes of the K nearest
//! labelled database images.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, SbaError};
use crate::retrieval::{rank, Database};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub image_id: String,
    pub label: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub query_id: String,
    neighbors: Vec<Neighbor>,
}

impl NeighborList {
    pub fn new(query_id: impl Into<String>, neighbors: Vec<Neighbor>) -> Result<Self> {
        if neighbors.is_empty() {
            return Err(SbaError::Param("a neighbor list needs K >= 1".into()));
        }
        if neighbors.windows(2).any(|w| w[1].distance < w[0].distance) {
            return Err(SbaError::Value("neighbor distances must be non-decreasing".into()));
        }
        Ok(Self {
            query_id: query_id.into(),
            neighbors,
        })
    }

    pub fn neighbors(&self) -> &[Neighbor] {
        &self.neighbors
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }
}

/// The `k` nearest labelled database images (ties in manifest order).
pub fn knn<T: Real>(query: &[T], query_id: &str, database: &Database<T>, k: usize) -> Result<NeighborList> {
    if k == 0 || k > database.len() {
        return Err(SbaError::Param(format!(
            "k={k} must be in 1..={} (database size)",
            database.len()
        )));
    }
    if let Some(i) = (0..database.len()).find(|&i| database.label(i).is_none()) {
        return Err(SbaError::Incomplete(format!(
            "database image {} has no label",
            database.id(i)
        )));
    }
    let ranked = rank(query, query_id, database)?;
    if ranked.entries.len() < k {
        return Err(SbaError::Param(format!(
            "k={k} exceeds the {} candidates left after dropping the query itself",
            ranked.entries.len()
        )));
    }
    let neighbors = ranked
        .entries
        .into_iter()
        .take(k)
        .map(|e| Neighbor {
            label: database.label(e.index).unwrap().to_string(),
            image_id: e.image_id,
            distance: e.distance,
        })
        .collect();
    NeighborList::new(query_id, neighbors)
}

/// Vote given to the k-th neighbor (1-based) out of K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MnWeight {
    /// `K − k`: the K-th neighbor gets no vote.
    #[default]
    Paper,
    /// `K − k + 1`.
    PlusOne,
}

impl MnWeight {
    pub fn vote(self, k: usize, rank: usize) -> u64 {
        match self {
            MnWeight::Paper => (k - rank) as u64,
            MnWeight::PlusOne => (k - rank + 1) as u64,
        }
    }
}

impl FromStr for MnWeight {
    type Err = SbaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(MnWeight::Paper),
            "plus-one" => Ok(MnWeight::PlusOne),
            other => Err(SbaError::Param(format!(
                "unknown MN weighting {other:?} (expected paper or plus-one)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreTable {
    pub scores: BTreeMap<String, u64>,
    pub predicted: String,
}

impl ScoreTable {
    pub fn top_score(&self) -> u64 {
        self.scores[&self.predicted]
    }

    pub fn total(&self) -> u64 {
        self.scores.values().sum()
    }
}

/// Accumulates rank-weighted votes and predicts the best-scoring category.
///
/// Among categories tied on score, the one whose nearest member ranks
/// earliest wins, so K=1 reduces to nearest-neighbor classification.
pub fn mn_classify(neighbors: &NeighborList, weight: MnWeight) -> ScoreTable {
    let k = neighbors.k();
    let mut scores: BTreeMap<String, u64> = BTreeMap::new();
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, n) in neighbors.neighbors.iter().enumerate() {
        *scores.entry(n.label.clone()).or_insert(0) += weight.vote(k, i + 1);
        first_seen.entry(n.label.as_str()).or_insert(i);
    }
    let predicted = scores
        .iter()
        .max_by(|(la, sa), (lb, sb)| {
            sa.cmp(sb)
                .then_with(|| first_seen[lb.as_str()].cmp(&first_seen[la.as_str()]))
                .then_with(|| lb.cmp(la))
        })
        .map(|(l, _)| l.clone())
        .expect("neighbor lists are non-empty");
    ScoreTable { scores, predicted }
}

/// Label of the single nearest neighbor.
pub fn nn_classify(neighbors: &NeighborList) -> &str {
    &neighbors.neighbors[0].label
}

/// Fraction of test images whose prediction equals their label.
pub fn evaluate_accuracy(truth: &[(String, String)], predictions: &HashMap<String, String>) -> Result<f64> {
    if truth.is_empty() {
        return Err(SbaError::EmptyDataset("no labelled test images".into()));
    }
    let mut correct = 0usize;
    for (id, label) in truth {
        let p = predictions
            .get(id)
            .ok_or_else(|| SbaError::Incomplete(format!("no prediction for {id}")))?;
        if p == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub image_id: String,
    pub label: String,
    pub top_score: u64,
}

/// `image_id<TAB>predicted_label<TAB>top_score` lines.
pub fn predictions_to_text(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        writeln!(out, "{}\t{}\t{}", p.image_id, p.label, p.top_score).unwrap();
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, label, score] = fields[..] else {
                return Err(SbaError::Format(format!(
                    "prediction line {}: expected 3 tab-separated fields",
                    i + 1
                )));
            };
            Ok(Prediction {
                image_id: id.to_string(),
                label: label.to_string(),
                top_score: score
                    .parse()
                    .map_err(|_| SbaError::Format(format!("prediction line {}: bad score", i + 1)))?,
            })
        })
        .collect()
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    parse_predictions(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::VectorBatch;

    fn list(labels: &[&str]) -> NeighborList {
        NeighborList::new(
            "q",
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| Neighbor {
                    image_id: format!("n{i}"),
                    label: l.to_string(),
                    distance: i as f64,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn algorithm_trace() {
        let t = mn_classify(&list(&["A", "B", "A"]), MnWeight::Paper);
        assert_eq!(t.scores["A"], 2);
        assert_eq!(t.scores["B"], 1);
        assert_eq!(t.predicted, "A");

        let t = mn_classify(&list(&["A", "B"]), MnWeight::Paper);
        assert_eq!((t.scores["A"], t.scores["B"]), (1, 0));
        assert_eq!(t.predicted, "A");
    }

    #[test]
    fn single_neighbor_falls_back_to_nearest() {
        let t = mn_classify(&list(&["Z"]), MnWeight::Paper);
        assert_eq!(t.scores["Z"], 0);
        assert_eq!(t.predicted, "Z");
    }

    #[test]
    fn score_ties_prefer_nearer_category() {
        // K=4 votes 3,2,1,0: B gets 3, A gets 2+1=3
        let t = mn_classify(&list(&["B", "A", "A", "C"]), MnWeight::Paper);
        assert_eq!(t.scores["A"], t.scores["B"]);
        assert_eq!(t.predicted, "B");
    }

    #[test]
    fn plus_one_weighting() {
        let t = mn_classify(&list(&["A", "B", "B"]), MnWeight::PlusOne);
        assert_eq!((t.scores["A"], t.scores["B"]), (3, 3));
        assert_eq!(t.predicted, "A");
        assert_eq!(t.total(), 6);
        assert_eq!("plus-one".parse::<MnWeight>().unwrap(), MnWeight::PlusOne);
        assert!("other".parse::<MnWeight>().is_err());
    }

    #[test]
    fn knn_checks() {
        let batch = VectorBatch::from_rows(&[vec![0.0f64, 0.0], vec![1.0, 0.0], vec![5.0, 5.0]]).unwrap();
        let ids = vec!["a".to_string(), "b".into(), "c".into()];
        let labels = vec![Some("x".to_string()), Some("y".into()), Some("x".into())];
        let db = Database::with_labels(ids.clone(), labels, batch.clone()).unwrap();
        let nn = knn(&[1.0, 0.0], "q", &db, 1).unwrap();
        assert_eq!(nn.neighbors()[0].image_id, "b");
        assert_eq!(knn(&[0.0, 0.0], "q", &db, 3).unwrap().k(), 3);
        assert!(matches!(knn(&[0.0, 0.0], "q", &db, 4), Err(SbaError::Param(_))));

        let unlabeled = Database::new(ids, batch).unwrap();
        assert!(matches!(
            knn(&[0.0, 0.0], "q", &unlabeled, 1),
            Err(SbaError::Incomplete(_))
        ));
    }

    #[test]
    fn accuracy() {
        let truth = vec![("a".to_string(), "x".to_string()), ("b".into(), "y".into())];
        let mut p = HashMap::new();
        p.insert("a".to_string(), "x".to_string());
        assert!(matches!(evaluate_accuracy(&truth, &p), Err(SbaError::Incomplete(_))));
        p.insert("b".to_string(), "x".to_string());
        assert_eq!(evaluate_accuracy(&truth, &p).unwrap(), 0.5);
        p.insert("b".to_string(), "y".to_string());
        assert_eq!(evaluate_accuracy(&truth, &p).unwrap(), 1.0);
    }

    #[test]
    fn predictions_text() {
        let p = vec![Prediction {
            image_id: "img".into(),
            label: "cloud".into(),
            top_score: 780,
        }];
        let text = predictions_to_text(&p);
        assert_eq!(text, "img\tcloud\t780\n");
        assert_eq!(parse_predictions(&text).unwrap(), p);
    }
}
