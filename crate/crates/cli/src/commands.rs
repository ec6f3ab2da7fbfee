use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use sba_core::aggregation::{aggregate_manifest, read_batch, write_batch};
use sba_core::classification::{evaluate_accuracy, knn, mn_classify, predictions_to_text, MnWeight, Prediction};
use sba_core::detectors::{
    compute_channel_stats, read_detectors, select_detectors, select_random_detectors, write_detectors,
};
use sba_core::postprocess::{fit_pca_whiten, normalize_batch, read_model, write_model};
use sba_core::retrieval::{
    format_g6, mean_average_precision, query_expansion, rank, rank_all, ranked_to_text, read_ground_truth, read_ranked,
    recall_at_n, RankedList,
};
use sba_core::tensor_io::read_manifest;
use sba_core::{Database, PipelineConfig, Result, SbaError, VectorBatch};

use crate::args::*;

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| SbaError::Io {
            context: path.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn select(args: &SelectArgs, cfg: &PipelineConfig) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    let stats = compute_channel_stats::<f64>(&manifest)?;
    let set = if args.random {
        select_random_detectors(stats.channels(), cfg.n_detectors, cfg.seed)?
    } else {
        select_detectors(&stats, cfg.n_detectors)?
    };
    write_detectors(&set, &args.out)?;
    log::info!("selected {} of {} channels", set.len(), set.source_channels());
    Ok(())
}

pub fn aggregate(args: &AggregateArgs, cfg: &PipelineConfig) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    let detectors = read_detectors::<f64>(&args.detectors)?;
    let batch = aggregate_manifest(&manifest, &detectors, cfg.alpha, cfg.beta)?;
    write_batch(&batch, &args.out)
}

pub fn fit_pca(args: &FitPcaArgs, cfg: &PipelineConfig) -> Result<()> {
    let batch = normalize_batch(&read_batch::<f64>(&args.vectors)?)?;
    let cap = batch.dim().min(batch.len().saturating_sub(1));
    let m = if cfg.out_dim > cap {
        log::warn!("output dimension {} capped to {cap} by the training data", cfg.out_dim);
        cap
    } else {
        cfg.out_dim
    };
    let model = fit_pca_whiten(&batch, m)?;
    write_model(&model, &args.out)
}

pub fn apply_pca(args: &ApplyPcaArgs, cfg: &PipelineConfig) -> Result<()> {
    let model = read_model::<f64>(&args.model)?;
    let batch = normalize_batch(&read_batch::<f64>(&args.vectors)?)?;
    let out = model.transform_batch(&batch, cfg.final_norm)?;
    write_batch(&out, &args.out)
}

fn load_database(vectors: &Path, manifest: &Path) -> Result<Database<f64>> {
    let batch: VectorBatch<f64> = read_batch(vectors)?;
    let manifest = read_manifest(manifest)?;
    if manifest.len() != batch.len() {
        return Err(SbaError::Shape(format!(
            "{} has {} rows but its manifest lists {} images",
            vectors.display(),
            batch.len(),
            manifest.len()
        )));
    }
    Database::with_labels(manifest.ids(), manifest.labels(), batch)
}

pub fn retrieve(args: &RetrieveArgs, cfg: &PipelineConfig) -> Result<()> {
    let queries = load_database(&args.queries, &args.query_manifest)?;
    let database = load_database(&args.database, &args.manifest)?;
    let mut lists = rank_all(queries.ids(), queries.vectors(), &database)?;
    if args.shared.qe {
        lists = lists
            .iter()
            .enumerate()
            .map(|(i, list)| {
                let expanded = query_expansion(queries.vector(i), list, &database, cfg.qe_top)?;
                rank(&expanded, &list.query_id, &database)
            })
            .collect::<Result<Vec<RankedList>>>()?;
    }
    write_or_print(args.out.as_deref(), &ranked_to_text(&lists))
}

pub fn eval_map(args: &EvalMapArgs) -> Result<()> {
    let lists = read_ranked(&args.ranked)?;
    let gt = read_ground_truth(&args.gt)?;
    let report = mean_average_precision(&lists, &gt)?;
    if args.per_query {
        for (q, ap) in &report.per_query {
            println!("{q}\t{}", format_g6(*ap));
        }
    }
    println!("{}", format_g6(report.map));
    Ok(())
}

pub fn eval_recall(args: &EvalRecallArgs) -> Result<()> {
    let lists = read_ranked(&args.ranked)?;
    let gt = read_ground_truth(&args.gt)?;
    let positives: HashMap<String, HashSet<String>> = gt
        .queries
        .iter()
        .map(|(q, rel)| (q.clone(), rel.good.union(&rel.ok).cloned().collect()))
        .collect();
    let recalls = recall_at_n(&lists, &positives, &args.n)?;
    for (n, r) in args.n.iter().zip(recalls) {
        println!("recall@{n}\t{}", format_g6(r));
    }
    Ok(())
}

pub fn classify(args: &ClassifyArgs, cfg: &PipelineConfig) -> Result<()> {
    let weight: MnWeight = args.mn_weight.parse()?;
    let queries = load_database(&args.queries, &args.query_manifest)?;
    let database = load_database(&args.database, &args.manifest)?;
    let k = if cfg.k_neighbors > database.len() {
        log::warn!(
            "K={} exceeds database size {}; clamping",
            cfg.k_neighbors,
            database.len()
        );
        database.len()
    } else {
        cfg.k_neighbors
    };
    let predictions = (0..queries.len())
        .map(|i| {
            let qid = queries.id(i);
            // the query may itself be in the database, leaving one fewer candidate
            let available = database.len() - usize::from(database.ids().iter().any(|id| id == qid));
            let neighbors = knn(queries.vector(i), qid, &database, k.min(available))?;
            let table = mn_classify(&neighbors, weight);
            Ok(Prediction {
                image_id: qid.to_string(),
                top_score: table.top_score(),
                label: table.predicted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_or_print(args.out.as_deref(), &predictions_to_text(&predictions))?;

    let truth: Option<Vec<(String, String)>> = (0..queries.len())
        .map(|i| queries.label(i).map(|l| (queries.id(i).to_string(), l.to_string())))
        .collect();
    if let Some(truth) = truth {
        let predicted: HashMap<String, String> = predictions.into_iter().map(|p| (p.image_id, p.label)).collect();
        let acc = evaluate_accuracy(&truth, &predicted)?;
        if args.out.is_some() {
            println!("accuracy\t{}", format_g6(acc));
        } else {
            eprintln!("accuracy\t{}", format_g6(acc));
        }
    }
    Ok(())
}
