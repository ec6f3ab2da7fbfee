use sba_core::aggregation::{aggregate_manifest, read_batch, write_batch};
use sba_core::detectors::{compute_channel_stats, read_detectors, select_detectors, write_detectors};
use sba_core::postprocess::{fit_pca_whiten, normalize_batch, read_model, write_model};
use sba_core::synthetic::PlantedConfig;
use sba_core::tensor_io::{write_manifest, ManifestRecord};
use sba_core::{read_manifest, read_tensor, write_tensor, DatasetManifest, FeatureTensor, SbaError};

fn planted_dataset(dir: &std::path::Path) -> DatasetManifest {
    std::fs::create_dir(dir.join("t")).unwrap();
    let images = PlantedConfig {
        classes: 3,
        per_class: 4,
        seed: 9,
        ..PlantedConfig::default()
    }
    .generate()
    .unwrap();
    let records = images
        .iter()
        .map(|img| {
            let rel = format!("t/{}.sbat", img.id);
            write_tensor(&img.tensor.cast::<f32>(), dir.join(&rel)).unwrap();
            ManifestRecord {
                image_id: img.id.clone(),
                tensor_path: rel,
                label: Some(img.label.clone()),
            }
        })
        .collect();
    let manifest = DatasetManifest::new(records).unwrap();
    write_manifest(&manifest, dir.join("db.tsv")).unwrap();
    read_manifest(dir.join("db.tsv")).unwrap()
}

#[test]
fn tensor_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = FeatureTensor::<f32>::from_fn(3, 2, 4, |c, y, x| (c * 100 + y * 10 + x) as f32 * 0.25).unwrap();
    let path = dir.path().join("x.sbat");
    write_tensor(&t, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 20 + 4 * 24);
    assert_eq!(read_tensor::<f32>(&path).unwrap(), t);
}

#[test]
fn truncated_tensor_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.sbat");
    write_tensor(&FeatureTensor::<f32>::zeros(2, 2, 2).unwrap(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(read_tensor::<f32>(&path), Err(SbaError::Corrupt(_))));
}

#[test]
fn relative_manifest_paths_resolve_against_manifest_dir() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = planted_dataset(dir.path());
    assert_eq!(manifest.len(), 12);
    for r in manifest.records() {
        assert!(manifest.resolve(r).starts_with(dir.path()));
    }
}

#[test]
fn pipeline_artifacts_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = planted_dataset(dir.path());
    let stats = compute_channel_stats::<f64>(&manifest).unwrap();
    let det = select_detectors(&stats, 3).unwrap();
    let det_path = dir.path().join("det.txt");
    write_detectors(&det, &det_path).unwrap();
    let det_back = read_detectors::<f64>(&det_path).unwrap();
    assert_eq!(det_back.indices(), det.indices());

    let batch = aggregate_manifest(&manifest, &det_back, 2.0, 2.0).unwrap();
    let vec_path = dir.path().join("v.sbav");
    write_batch(&batch, &vec_path).unwrap();
    let back = read_batch::<f64>(&vec_path).unwrap();
    assert_eq!((back.len(), back.dim()), (12, 3 * 16));
    for (a, b) in back.data().iter().zip(batch.data()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let model = fit_pca_whiten(&normalize_batch(&back).unwrap(), 5).unwrap();
    let model_path = dir.path().join("m.sbap");
    write_model(&model, &model_path).unwrap();
    let loaded = read_model::<f64>(&model_path).unwrap();
    assert_eq!(loaded.output_dim(), 5);
    let x = normalize_batch(&back).unwrap();
    let (a, b) = (
        model.transform(x.row(0), true).unwrap(),
        loaded.transform(x.row(0), true).unwrap(),
    );
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-5);
    }
}
