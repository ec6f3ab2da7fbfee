//! Regenerates the bundled synthetic fixture:
//!
//! ```text
//! cargo run -p sba-cli --example make_fixture -- crates/cli/fixtures/synthetic
//! ```

use std::fs;
use std::path::PathBuf;

use sba_core::synthetic::{class_ground_truth, PlantedConfig};
use sba_core::tensor_io::{write_manifest, ManifestRecord};
use sba_core::{write_tensor, DatasetManifest};

const QUERIES_PER_CLASS: usize = 2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/synthetic".into()));
    fs::create_dir_all(dir.join("tensors"))?;
    let cfg = PlantedConfig {
        classes: 5,
        per_class: 10,
        seed: 2024,
        ..PlantedConfig::default()
    };
    let mut queries = Vec::new();
    let mut database = Vec::new();
    for img in cfg.generate()? {
        let path = format!("tensors/{}.sbat", img.id);
        write_tensor(&img.tensor.cast::<f32>(), dir.join(&path))?;
        let record = ManifestRecord {
            image_id: img.id.clone(),
            tensor_path: path,
            label: Some(img.label.clone()),
        };
        let seen = queries
            .iter()
            .filter(|r: &&ManifestRecord| r.label == record.label)
            .count();
        if seen < QUERIES_PER_CLASS {
            queries.push(record);
        } else {
            database.push(record);
        }
    }
    let pairs = |rs: &[ManifestRecord]| -> Vec<(String, String)> {
        rs.iter()
            .map(|r| (r.image_id.clone(), r.label.clone().unwrap()))
            .collect()
    };
    let (q, d) = (pairs(&queries), pairs(&database));
    let d_ref: Vec<(&str, &str)> = d.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let gt = class_ground_truth(q.iter().map(|(a, b)| (a.as_str(), b.as_str())), &d_ref)?;
    write_manifest(&DatasetManifest::new(queries)?, dir.join("queries.tsv"))?;
    write_manifest(&DatasetManifest::new(database)?, dir.join("database.tsv"))?;
    fs::write(dir.join("gt.tsv"), gt.to_text())?;
    Ok(())
}
