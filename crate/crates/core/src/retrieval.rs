//! Exhaustive L2 ranking, average query expansion and retrieval metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::aggregation::VectorBatch;
use crate::error::{Result, SbaError};
use crate::postprocess::normalize_in_place;
use crate::scalar::Real;

/// Squared Euclidean distance, accumulated in `f64`.
pub fn distance<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SbaError::Shape(format!(
            "distance between vectors of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(squared_l2(a, b))
}

#[inline]
fn squared_l2<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.to_f64_lossless() - y.to_f64_lossless();
            d * d
        })
        .sum()
}

/// Vectors with their image ids (and optional labels), in manifest order.
#[derive(Debug, Clone)]
pub struct Database<T> {
    ids: Vec<String>,
    labels: Vec<Option<String>>,
    vectors: VectorBatch<T>,
}

impl<T: Real> Database<T> {
    pub fn new(ids: Vec<String>, vectors: VectorBatch<T>) -> Result<Self> {
        let labels = vec![None; ids.len()];
        Self::with_labels(ids, labels, vectors)
    }

    pub fn with_labels(ids: Vec<String>, labels: Vec<Option<String>>, vectors: VectorBatch<T>) -> Result<Self> {
        if ids.len() != vectors.len() || labels.len() != ids.len() {
            return Err(SbaError::Shape(format!(
                "{} ids, {} labels and {} vectors",
                ids.len(),
                labels.len(),
                vectors.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(SbaError::Duplicate(id.clone()));
            }
        }
        Ok(Self { ids, labels, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels[i].as_deref()
    }

    pub fn vector(&self, i: usize) -> &[T] {
        self.vectors.row(i)
    }

    pub fn vectors(&self) -> &VectorBatch<T> {
        &self.vectors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    /// Row in the database.
    pub index: usize,
    pub image_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.image_id.as_str())
    }
}

/// Ranks the whole database by ascending squared distance to `query`. Equal
/// distances keep manifest order. A database entry whose id equals
/// `query_id` is dropped.
pub fn rank<T: Real>(query: &[T], query_id: &str, database: &Database<T>) -> Result<RankedList> {
    if database.is_empty() {
        return Err(SbaError::EmptyDataset("database is empty".into()));
    }
    if query.len() != database.dim() {
        return Err(SbaError::Shape(format!(
            "query has dimension {}, database {}",
            query.len(),
            database.dim()
        )));
    }
    let distances: Vec<f64> = database
        .vectors
        .data()
        .par_chunks_exact(database.dim())
        .map(|row| squared_l2(query, row))
        .collect();
    let mut order: Vec<usize> = (0..database.len()).filter(|&i| database.ids[i] != query_id).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: order
            .into_iter()
            .map(|i| RankedEntry {
                index: i,
                image_id: database.ids[i].clone(),
                distance: distances[i],
            })
            .collect(),
    })
}

/// Ranks every query row, in parallel across queries.
pub fn rank_all<T: Real>(
    query_ids: &[String],
    queries: &VectorBatch<T>,
    database: &Database<T>,
) -> Result<Vec<RankedList>> {
    if query_ids.len() != queries.len() {
        return Err(SbaError::Shape(format!(
            "{} query ids for {} query vectors",
            query_ids.len(),
            queries.len()
        )));
    }
    (0..queries.len())
        .into_par_iter()
        .map(|i| rank(queries.row(i), &query_ids[i], database))
        .collect()
}

/// Average query expansion: the L2-normalized mean of the query and its
/// `top` best-ranked database vectors.
pub fn query_expansion<T: Real>(
    query: &[T],
    ranked: &RankedList,
    database: &Database<T>,
    top: usize,
) -> Result<Vec<T>> {
    if top == 0 {
        return Err(SbaError::Param("query expansion needs top >= 1".into()));
    }
    if query.len() != database.dim() {
        return Err(SbaError::Shape(format!(
            "query has dimension {}, database {}",
            query.len(),
            database.dim()
        )));
    }
    let used = if top > ranked.entries.len() {
        log::warn!(
            "query expansion top={top} exceeds {} ranked entries; clamping",
            ranked.entries.len()
        );
        ranked.entries.len()
    } else {
        top
    };
    let mut acc: Vec<f64> = query.iter().map(|v| v.to_f64_lossless()).collect();
    for e in &ranked.entries[..used] {
        for (a, v) in acc.iter_mut().zip(database.vector(e.index)) {
            *a += v.to_f64_lossless();
        }
    }
    let count = (used + 1) as f64;
    let mut out: Vec<T> = acc.into_iter().map(|v| T::of(v / count)).collect();
    normalize_in_place(&mut out);
    Ok(out)
}

/// Relevance sets of one query under the good/ok/junk protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryRelevance {
    pub good: HashSet<String>,
    pub ok: HashSet<String>,
    pub junk: HashSet<String>,
}

impl QueryRelevance {
    pub fn is_positive(&self, id: &str) -> bool {
        self.good.contains(id) || self.ok.contains(id)
    }

    pub fn positive_count(&self) -> usize {
        self.good.len() + self.ok.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalGroundTruth {
    pub queries: BTreeMap<String, QueryRelevance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relevance {
    Good,
    Ok,
    Junk,
}

impl RetrievalGroundTruth {
    /// Adds one judgement, rejecting an image placed in two sets.
    pub fn insert(&mut self, query_id: &str, image_id: &str, rel: Relevance) -> Result<()> {
        let q = self.queries.entry(query_id.to_string()).or_default();
        let already = q.good.contains(image_id) || q.ok.contains(image_id) || q.junk.contains(image_id);
        let target = match rel {
            Relevance::Good => &mut q.good,
            Relevance::Ok => &mut q.ok,
            Relevance::Junk => &mut q.junk,
        };
        if already && !target.contains(image_id) {
            return Err(SbaError::Value(format!(
                "image {image_id} has conflicting relevance for query {query_id}"
            )));
        }
        target.insert(image_id.to_string());
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryRelevance> {
        self.queries.get(query_id)
    }

    /// Parses `query_id<TAB>image_id<TAB>{good|ok|junk}` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gt = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [q, img, rel] = fields[..] else {
                return Err(SbaError::Format(format!(
                    "ground truth line {}: expected 3 tab-separated fields",
                    lineno + 1
                )));
            };
            let rel = match rel {
                "good" => Relevance::Good,
                "ok" => Relevance::Ok,
                "junk" => Relevance::Junk,
                other => {
                    return Err(SbaError::Format(format!(
                        "ground truth line {}: unknown relevance {other:?}",
                        lineno + 1
                    )))
                }
            };
            gt.insert(q, img, rel)?;
        }
        Ok(gt)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, rel) in &self.queries {
            for (set, name) in [(&rel.good, "good"), (&rel.ok, "ok"), (&rel.junk, "junk")] {
                let mut ids: Vec<&String> = set.iter().collect();
                ids.sort();
                for id in ids {
                    writeln!(out, "{q}\t{id}\t{name}").unwrap();
                }
            }
        }
        out
    }
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<RetrievalGroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    RetrievalGroundTruth::parse(&text)
}

/// Average precision after removing junk entries: the mean, over all
/// positives, of precision at the rank where each positive is retrieved.
/// Positives never retrieved contribute zero.
pub fn average_precision<'a>(ids: impl IntoIterator<Item = &'a str>, rel: &QueryRelevance) -> Result<f64> {
    let positives = rel.positive_count();
    if positives == 0 {
        return Err(SbaError::Undefined("query has no positive images".into()));
    }
    let mut rank = 0usize;
    let mut hits = 0usize;
    let mut sum = 0.0f64;
    for id in ids {
        if rel.junk.contains(id) {
            continue;
        }
        rank += 1;
        if rel.is_positive(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Ok(sum / positives as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    pub per_query: Vec<(String, f64)>,
    /// Queries without ground truth or without positives.
    pub skipped: Vec<String>,
}

/// Unweighted mean of per-query AP. Queries that cannot be scored are skipped
/// with a warning; at least one must remain.
pub fn mean_average_precision(lists: &[RankedList], gt: &RetrievalGroundTruth) -> Result<MapReport> {
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for list in lists {
        let ap = gt
            .get(&list.query_id)
            .ok_or_else(|| SbaError::Undefined(format!("no ground truth for {}", list.query_id)))
            .and_then(|rel| average_precision(list.ids(), rel));
        match ap {
            Ok(ap) => per_query.push((list.query_id.clone(), ap)),
            Err(e) => {
                log::warn!("query {} excluded from mAP: {e}", list.query_id);
                skipped.push(list.query_id.clone());
            }
        }
    }
    if per_query.is_empty() {
        return Err(SbaError::Undefined("no scorable queries".into()));
    }
    let map = per_query.iter().map(|(_, ap)| ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport {
        map,
        per_query,
        skipped,
    })
}

/// For each `n`, the fraction of queries with at least one positive among
/// their first `n` results. Queries absent from `positives` count as misses.
pub fn recall_at_n(
    lists: &[RankedList],
    positives: &HashMap<String, HashSet<String>>,
    n_values: &[usize],
) -> Result<Vec<f64>> {
    if lists.is_empty() {
        return Err(SbaError::EmptyDataset("no ranked queries".into()));
    }
    let first_hit: Vec<Option<usize>> = lists
        .iter()
        .map(|l| {
            let pos = positives.get(&l.query_id)?;
            l.ids().position(|id| pos.contains(id))
        })
        .collect();
    Ok(n_values
        .iter()
        .map(|&n| {
            let found = first_hit.iter().filter(|h| matches!(h, Some(r) if *r < n)).count();
            found as f64 / lists.len() as f64
        })
        .collect())
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros trimmed.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `query_id<TAB>rank<TAB>image_id<TAB>distance` lines, rank starting at 1.
pub fn ranked_to_text(lists: &[RankedList]) -> String {
    let mut out = String::new();
    for l in lists {
        for (r, e) in l.entries.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                l.query_id,
                r + 1,
                e.image_id,
                format_g6(e.distance)
            )
            .unwrap();
        }
    }
    out
}

/// Parses ranked output back into lists, in order of first appearance.
/// Database indices are not recoverable from text and are set to the rank.
pub fn parse_ranked(text: &str) -> Result<Vec<RankedList>> {
    let mut lists: Vec<RankedList> = Vec::new();
    let mut by_query: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, r, id, d] = fields[..] else {
            return Err(SbaError::Format(format!(
                "ranked line {}: expected 4 tab-separated fields",
                lineno + 1
            )));
        };
        let bad = |what: &str| SbaError::Format(format!("ranked line {}: bad {what}", lineno + 1));
        let r: usize = r.parse().map_err(|_| bad("rank"))?;
        let distance: f64 = d.parse().map_err(|_| bad("distance"))?;
        let slot = *by_query.entry(q.to_string()).or_insert_with(|| {
            lists.push(RankedList {
                query_id: q.to_string(),
                entries: Vec::new(),
            });
            lists.len() - 1
        });
        let list = &mut lists[slot];
        if r != list.entries.len() + 1 {
            return Err(SbaError::Format(format!(
                "ranked line {}: rank {r} out of sequence for query {q}",
                lineno + 1
            )));
        }
        list.entries.push(RankedEntry {
            index: r - 1,
            image_id: id.to_string(),
            distance,
        });
    }
    Ok(lists)
}

pub fn read_ranked(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    parse_ranked(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(good: &[&str], junk: &[&str]) -> QueryRelevance {
        QueryRelevance {
            good: good.iter().map(|s| s.to_string()).collect(),
            ok: HashSet::new(),
            junk: junk.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn db(rows: &[Vec<f64>]) -> Database<f64> {
        let ids = (0..rows.len()).map(|i| format!("d{i}")).collect();
        Database::new(ids, VectorBatch::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn distances() {
        assert_eq!(distance(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(distance(&[0.3f64, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert!(matches!(distance(&[1.0f64], &[1.0, 2.0]), Err(SbaError::Shape(_))));
    }

    #[test]
    fn ranking_self_match_and_ties() {
        let d = db(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8], vec![0.0, -1.0]]);
        let r = rank(&[0.6, 0.8], "q", &d).unwrap();
        assert_eq!(r.entries[0].image_id, "d2");
        assert_eq!(r.entries[0].distance, 0.0);

        // d0 and d1 are equidistant from the diagonal
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = rank(&[h, h], "q", &d).unwrap();
        let ids: Vec<&str> = r.ids().collect();
        assert_eq!(&ids[1..3], &["d0", "d1"]);

        let r = rank(&[0.6, 0.8], "d2", &d).unwrap();
        assert_eq!(r.entries.len(), 3);
        assert!(r.ids().all(|id| id != "d2"));

        let empty = Database::<f64>::new(vec![], VectorBatch::new(2, vec![]).unwrap()).unwrap();
        assert!(matches!(rank(&[0.0, 1.0], "q", &empty), Err(SbaError::EmptyDataset(_))));
    }

    #[test]
    fn expansion() {
        let q = vec![1.0f64, 0.0];
        let dup = db(&[q.clone(), q.clone(), q.clone()]);
        let r = rank(&q, "q", &dup).unwrap();
        assert_eq!(query_expansion(&q, &r, &dup, 10).unwrap(), q);

        let d = db(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let r = rank(&q, "q", &d).unwrap();
        let e = query_expansion(&q, &r, &d, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e[0] - h).abs() < 1e-12 && (e[1] - h).abs() < 1e-12);
        assert!(matches!(query_expansion(&q, &r, &d, 0), Err(SbaError::Param(_))));
    }

    #[test]
    fn hand_traced_average_precision() {
        let ranking = ["x", "a", "y", "b"];
        let ap = average_precision(ranking, &rel(&["a", "b"], &[])).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
        let ap = average_precision(ranking, &rel(&["a", "b"], &["x"])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(["a"], &rel(&["a"], &[])).unwrap(), 1.0);
        assert!(matches!(
            average_precision(ranking, &rel(&[], &["x"])),
            Err(SbaError::Undefined(_))
        ));
    }

    #[test]
    fn map_and_skips() {
        let mk = |q: &str, ids: &[&str]| RankedList {
            query_id: q.into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    index: i,
                    image_id: id.to_string(),
                    distance: i as f64,
                })
                .collect(),
        };
        let mut gt = RetrievalGroundTruth::default();
        gt.insert("q1", "a", Relevance::Good).unwrap();
        gt.insert("q2", "a", Relevance::Good).unwrap();
        gt.insert("q2", "b", Relevance::Ok).unwrap();
        let lists = vec![mk("q1", &["a", "b"]), mk("q2", &["x", "a", "y", "b"]), mk("q3", &["a"])];
        let report = mean_average_precision(&lists, &gt).unwrap();
        assert!((report.map - 0.75).abs() < 1e-12);
        assert_eq!(report.skipped, vec!["q3".to_string()]);
        assert!(mean_average_precision(&lists[2..], &gt).is_err());
    }

    #[test]
    fn recall_steps() {
        let lists: Vec<RankedList> = (0..4)
            .map(|q| RankedList {
                query_id: format!("q{q}"),
                entries: ["n1", "n2", "p", "n3", "n4"]
                    .iter()
                    .enumerate()
                    .map(|(i, id)| RankedEntry {
                        index: i,
                        image_id: id.to_string(),
                        distance: 0.0,
                    })
                    .collect(),
            })
            .collect();
        let positives: HashMap<String, HashSet<String>> = (0..4)
            .map(|q| (format!("q{q}"), HashSet::from(["p".to_string()])))
            .collect();
        assert_eq!(
            recall_at_n(&lists, &positives, &[1, 3, 5]).unwrap(),
            vec![0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn ground_truth_parsing() {
        let gt = RetrievalGroundTruth::parse("q\ta\tgood\nq\tb\tok\nq\tx\tjunk\n").unwrap();
        let r = gt.get("q").unwrap();
        assert!(r.is_positive("a") && r.is_positive("b") && r.junk.contains("x"));
        assert!(RetrievalGroundTruth::parse("q\ta\tgood\nq\ta\tjunk\n").is_err());
        assert!(RetrievalGroundTruth::parse("q\ta\tmaybe\n").is_err());
        assert_eq!(RetrievalGroundTruth::parse(&gt.to_text()).unwrap(), gt);
    }

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(5.0 / 6.0), "0.833333");
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(2.0), "2");
        assert_eq!(format_g6(123456.7), "123457");
        assert_eq!(format_g6(1234567.0), "1.23457e+06");
        assert_eq!(format_g6(0.000123456), "0.000123456");
        assert_eq!(format_g6(0.0000123456), "1.23456e-05");
        assert_eq!(format_g6(999999.5), "1e+06");
    }

    #[test]
    fn ranked_text_round_trip() {
        let d = db(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let lists = vec![rank(&[0.9, 0.1], "q", &d).unwrap()];
        let text = ranked_to_text(&lists);
        assert_eq!(text, "q\t1\td0\t0.02\nq\t2\td1\t1.62\n");
        let back = parse_ranked(&text).unwrap();
        assert_eq!(back[0].ids().collect::<Vec<_>>(), vec!["d0", "d1"]);
        assert!(parse_ranked("q\t2\td0\t0\n").is_err());
    }
}
