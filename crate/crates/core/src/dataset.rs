//! End-to-end dataset builds: synthetic tables, structure targets, rendered
//! images and patch files, laid out per split.
//!
//! ```text
//! <out>/dist.json
//! <out>/<split>/tables.jsonl
//! <out>/<split>/targets.jsonl
//! <out>/<split>/manifest.jsonl
//! <out>/<split>/images/<setting>/<id>.pgm
//! <out>/<split>/patches/<setting>/<id>.tpx
//! ```
//!
//! Records are processed in parallel but every line is written in record
//! order, so a build is byte-identical for a given config regardless of the
//! worker count.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::image::Image;
use crate::patch::{extract_patches, gamma_fit, write_patches, FitConfig, GammaFit, PatchError, PatchSeq};
use crate::render::{render, RenderConfig, RenderError, Setting};
use crate::ssl::{structure_target, SslError};
use crate::synth::{build_ssl_corpus, Split, SplitSizes, StructDist};
use crate::table::{serialize_table, Table};

const CHUNK: usize = 128;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad build config: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Ssl(#[from] SslError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BuildError + '_ {
    move |source| BuildError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub seed: u64,
    pub sizes: SplitSizes,
    pub dist: StructDist,
    pub out_dir: PathBuf,
    pub settings: Vec<Setting>,
    pub fit: FitConfig,
    pub render: RenderConfig,
    /// Worker cap; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
}

impl BuildConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            sizes: SplitSizes::default(),
            dist: StructDist::default_dist(),
            out_dir: out_dir.into(),
            settings: Setting::ALL.to_vec(),
            fit: FitConfig::default(),
            render: RenderConfig::default(),
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        self.fit.validate()?;
        self.render.validate()?;
        if self.settings.is_empty() {
            return Err(BuildError::Config("no render settings selected".into()));
        }
        Ok(())
    }
}

/// One line of `manifest.jsonl`: a rendered image and, once patchified, its
/// patch file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub id: String,
    pub setting: String,
    pub width: u32,
    pub height: u32,
    pub path: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub patches: Option<PatchInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchInfo {
    pub patch_path: String,
    pub scale_used: f64,
    pub truncated: bool,
    pub scaled_width: u32,
    pub scaled_height: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub patch_count: usize,
}

impl PatchInfo {
    pub fn new(patch_path: String, fit: &GammaFit, seq: &PatchSeq) -> Self {
        Self {
            patch_path,
            scale_used: fit.scale_used,
            truncated: fit.truncated,
            scaled_width: fit.scaled_width,
            scaled_height: fit.scaled_height,
            grid_rows: seq.grid_rows,
            grid_cols: seq.grid_cols,
            patch_count: seq.len(),
        }
    }
}

/// γ-fits an image to the patch budget and cuts it into patches.
pub fn patchify(img: &Image, fit: &FitConfig) -> Result<(GammaFit, PatchSeq), PatchError> {
    let fitted = gamma_fit(img, fit)?;
    let seq = extract_patches(&fitted.image, fit.patch);
    Ok((fitted, seq))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BuildError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Table record as written to `tables.jsonl`: the ToTTo layout plus `id`.
pub fn table_record(id: &str, t: &Table) -> Value {
    let mut v = serialize_table(t);
    v.as_object_mut()
        .expect("tables serialize to objects")
        .insert("id".into(), Value::String(id.to_owned()));
    v
}

pub fn record_id(index: u64) -> String {
    format!("{index:06}")
}

struct RecordOutput {
    table_line: String,
    target_line: String,
    manifest_lines: Vec<String>,
}

fn build_record(
    cfg: &BuildConfig,
    split_dir: &Path,
    index: u64,
    table: &Table,
) -> Result<RecordOutput, BuildError> {
    let id = record_id(index);
    let target = structure_target(table)?;
    let mut manifest_lines = Vec::with_capacity(cfg.settings.len());
    for &setting in &cfg.settings {
        let img = render(table, &cfg.render, setting)?;
        let image_rel = format!("images/{setting}/{id}.pgm");
        write_file(&split_dir.join(&image_rel), &img.to_pgm_bytes())?;

        let (fitted, seq) = patchify(&img, &cfg.fit)?;
        let patch_rel = format!("patches/{setting}/{id}.tpx");
        let mut buf = Vec::with_capacity(seq.encoded_len());
        write_patches(&seq, &mut buf)?;
        write_file(&split_dir.join(&patch_rel), &buf)?;

        let entry = ManifestEntry {
            id: id.clone(),
            setting: setting.name().to_owned(),
            width: img.width(),
            height: img.height(),
            path: image_rel,
            patches: Some(PatchInfo::new(patch_rel, &fitted, &seq)),
        };
        manifest_lines.push(serde_json::to_string(&entry).expect("manifest entries serialize"));
    }
    Ok(RecordOutput {
        table_line: table_record(&id, table).to_string(),
        target_line: json!({ "id": id, "target": target.text }).to_string(),
        manifest_lines,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildSummary {
    pub train: u64,
    pub val: u64,
    pub test: u64,
    pub images: u64,
}

impl BuildSummary {
    pub fn records(&self) -> u64 {
        self.train + self.val + self.test
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, BuildError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn build_dataset(cfg: &BuildConfig) -> Result<BuildSummary, BuildError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| BuildError::Config(e.to_string()))?;

    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let dist_path = cfg.out_dir.join("dist.json");
    write_file(&dist_path, format!("{}\n", cfg.dist.to_json_string()).as_bytes())?;

    let corpus = build_ssl_corpus(cfg.dist.clone(), cfg.sizes, cfg.seed);
    let mut summary = BuildSummary::default();

    for split in Split::ALL {
        let split_dir = cfg.out_dir.join(split.name());
        for setting in &cfg.settings {
            for kind in ["images", "patches"] {
                let dir = split_dir.join(kind).join(setting.name());
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            }
        }
        let tables_path = split_dir.join("tables.jsonl");
        let targets_path = split_dir.join("targets.jsonl");
        let manifest_path = split_dir.join("manifest.jsonl");
        let mut tables = create(&tables_path)?;
        let mut targets = create(&targets_path)?;
        let mut manifest = create(&manifest_path)?;

        let indices: Vec<u64> = cfg.sizes.range(split).collect();
        for chunk in indices.chunks(CHUNK) {
            let outputs = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&i| build_record(cfg, &split_dir, i, &corpus.record(i)))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            for out in outputs {
                writeln!(tables, "{}", out.table_line).map_err(io_err(&tables_path))?;
                writeln!(targets, "{}", out.target_line).map_err(io_err(&targets_path))?;
                for line in &out.manifest_lines {
                    writeln!(manifest, "{line}").map_err(io_err(&manifest_path))?;
                }
                summary.images += out.manifest_lines.len() as u64;
            }
        }
        for (w, p) in [
            (&mut tables, &tables_path),
            (&mut targets, &targets_path),
            (&mut manifest, &manifest_path),
        ] {
            w.flush().map_err(io_err(p))?;
        }
        let n = indices.len() as u64;
        match split {
            Split::Train => summary.train = n,
            Split::Val => summary.val = n,
            Split::Test => summary.test = n,
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_build_writes_empty_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BuildConfig::new(dir.path());
        let summary = build_dataset(&cfg).unwrap();
        assert_eq!(summary, BuildSummary::default());
        for split in Split::ALL {
            let m = fs::read(dir.path().join(split.name()).join("manifest.jsonl")).unwrap();
            assert!(m.is_empty());
        }
    }

    #[test]
    fn small_build_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = BuildConfig::new(dir.path());
        cfg.sizes = SplitSizes::new(3, 1, 1);
        cfg.seed = 7;
        let summary = build_dataset(&cfg).unwrap();
        assert_eq!(summary.records(), 5);
        assert_eq!(summary.images, 15);
        let val = dir.path().join("val");
        assert!(val.join("images/lcontrol/000003.pgm").is_file());
        assert!(val.join("patches/opene/000003.tpx").is_file());
        let tables = fs::read_to_string(dir.path().join("train/tables.jsonl")).unwrap();
        assert_eq!(tables.lines().count(), 3);
        let first = Table::from_json_str(tables.lines().next().unwrap()).unwrap();
        assert_eq!(first.page_title, "Synthetic Table 0");
    }

    #[test]
    fn manifest_entry_without_patches_has_render_fields_only() {
        let e = ManifestEntry {
            id: "7".into(),
            setting: "opene".into(),
            width: 3,
            height: 4,
            path: "images/opene/7.pgm".into(),
            patches: None,
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"id":"7","setting":"opene","width":3,"height":4,"path":"images/opene/7.pgm"}"#
        );
    }
}
