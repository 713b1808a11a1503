//! `tabpix` command-line driver.
//!
//! Every subcommand accepts `--config <file>`, a flat TOML table whose keys
//! are the long flag names with `-` replaced by `_`. Flags given on the
//! command line win over the file.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Data
//! errors name the offending input line.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use tabpix_core::dataset::{
    build_dataset, patchify, record_id, table_record, write_file, BuildConfig, ManifestEntry,
    PatchInfo,
};
use tabpix_core::patch::write_patches;
use tabpix_core::render::render;
use tabpix_core::ssl::{count_tokens, mask_cells, structure_target, target_token_stats};
use tabpix_core::stats::{length_coverage, size_histogram};
use tabpix_core::synth::{extract_dist, generate_table, SplitSizes};
use tabpix_core::table::Grid;
use tabpix_core::{FitConfig, Image, RenderConfig, Setting, SplitMix64, StructDist, Table};

pub const THREADS_ENV: &str = "TABPIX_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { line: Option<usize>, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data {
            line: None,
            message: format!("{e:#}"),
        }
    }

    fn at_line(line: usize, e: impl std::fmt::Display) -> Self {
        CliError::Data {
            line: Some(line),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error[usage]: {m}"),
            CliError::Data {
                line: Some(l),
                message,
            } => write!(f, "error[data] line {l}: {message}"),
            CliError::Data {
                line: None,
                message,
            } => write!(f, "error[data]: {message}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::data(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "tabpix", version, about = "Render tables into patch sequences and build synthetic corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic tables and their structure targets.
    Synth(SynthArgs),
    /// Emit structure (or masking) targets for a table file.
    SslTargets(SslArgs),
    /// Render tables to PGM images.
    Render(RenderArgs),
    /// Fit rendered images to the patch budget and write patch files.
    Patchify(PatchifyArgs),
    /// Report size buckets, over-budget share and target lengths.
    Stats(StatsArgs),
    /// Measure structure distributions from a table file.
    ExtractDist(ExtractDistArgs),
    /// Build train/val/test splits end to end.
    Build(BuildArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Flat TOML file of defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker cap (also read from TABPIX_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct FitArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_patches: Option<u32>,
    #[arg(long)]
    patch: Option<u32>,
}

#[derive(Args, Debug, Default)]
struct StyleArgs {
    #[arg(long)]
    glyph_w: Option<u32>,
    #[arg(long)]
    glyph_h: Option<u32>,
    #[arg(long)]
    cell_pad: Option<u32>,
    #[arg(long)]
    border: Option<u32>,
    #[arg(long)]
    text_gray: Option<u8>,
    #[arg(long)]
    bg_gray: Option<u8>,
    #[arg(long)]
    highlight_gray: Option<u8>,
    #[arg(long)]
    header_gray: Option<u8>,
    #[arg(long)]
    title_gap: Option<u32>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Structure distribution JSON; the bundled default when omitted.
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `identifier` (random 5-symbol values) or `positional` (`R<row>C<col>`).
    #[arg(long)]
    fill: Option<String>,
}

#[derive(Args, Debug)]
struct SslArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask this many cells per table and add an `answer` field.
    #[arg(long)]
    mask: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the masked tables (masking mode only).
    #[arg(long)]
    masked_tables: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    style: StyleArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of tcontrol,lcontrol,opene.
    #[arg(long)]
    settings: Option<String>,
}

#[derive(Args, Debug)]
struct PatchifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Render manifest; image paths are relative to its directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    style: StyleArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Targets JSONL for token statistics.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long)]
    buckets: Option<usize>,
    /// Token cap for reference-length coverage.
    #[arg(long)]
    cap: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractDistArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    style: StyleArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// `train,val,test` record counts.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    settings: Option<String>,
}

/// Key-value defaults loaded from `--config`.
#[derive(Default)]
struct Config(toml::Table);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(Self(table))
    }

    fn raw(&self, key: &str) -> Option<&toml::Value> {
        self.0.get(key)
    }

    fn int<T: TryFrom<i64>>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => T::try_from(*i)
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key `{key}` is out of range"))),
            Some(_) => Err(CliError::Usage(format!("config key `{key}` must be an integer"))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(CliError::Usage(format!("config key `{key}` must be a number"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(toml::Value::Array(items)) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                Ok(Some(parts.join(",")))
            }
            Some(_) => Err(CliError::Usage(format!("config key `{key}` must be a string"))),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn threads(common: &CommonArgs, cfg: &Config) -> Result<Option<usize>> {
    let flag = match common.threads {
        Some(t) => Some(t),
        None => cfg.int("threads")?,
    };
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a positive integer")))?,
        ),
        Err(_) => None,
    };
    let cap = match (flag, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if cap == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    Ok(cap)
}

fn pool(n: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn fit_config(args: &FitArgs, cfg: &Config) -> Result<FitConfig> {
    let d = FitConfig::default();
    let fit = FitConfig {
        gamma: args.gamma.or(cfg.float("gamma")?).unwrap_or(d.gamma),
        max_patches: args.max_patches.or(cfg.int("max_patches")?).unwrap_or(d.max_patches),
        patch: args.patch.or(cfg.int("patch")?).unwrap_or(d.patch),
    };
    fit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(fit)
}

fn render_config(args: &StyleArgs, cfg: &Config) -> Result<RenderConfig> {
    let d = RenderConfig::default();
    let r = RenderConfig {
        glyph_w: args.glyph_w.or(cfg.int("glyph_w")?).unwrap_or(d.glyph_w),
        glyph_h: args.glyph_h.or(cfg.int("glyph_h")?).unwrap_or(d.glyph_h),
        cell_pad: args.cell_pad.or(cfg.int("cell_pad")?).unwrap_or(d.cell_pad),
        border: args.border.or(cfg.int("border")?).unwrap_or(d.border),
        text_gray: args.text_gray.or(cfg.int("text_gray")?).unwrap_or(d.text_gray),
        bg_gray: args.bg_gray.or(cfg.int("bg_gray")?).unwrap_or(d.bg_gray),
        highlight_gray: args
            .highlight_gray
            .or(cfg.int("highlight_gray")?)
            .unwrap_or(d.highlight_gray),
        header_gray: args.header_gray.or(cfg.int("header_gray")?).unwrap_or(d.header_gray),
        title_gap: args.title_gap.or(cfg.int("title_gap")?).unwrap_or(d.title_gap),
    };
    r.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(r)
}

fn parse_settings(text: Option<String>) -> Result<Vec<Setting>> {
    let Some(text) = text else {
        return Ok(Setting::ALL.to_vec());
    };
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let s: Setting = part.parse().map_err(CliError::Usage)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no settings given".into()));
    }
    Ok(out)
}

fn parse_sizes(text: &str) -> Result<SplitSizes> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--sizes expects train,val,test counts, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: Vec<u64> = parts
        .iter()
        .map(|p| p.parse::<u64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    Ok(SplitSizes::new(n[0], n[1], n[2]))
}

fn load_dist(path: Option<PathBuf>) -> Result<StructDist> {
    match path {
        None => Ok(StructDist::default_dist()),
        Some(p) => {
            let text = fs::read_to_string(&p)
                .with_context(|| format!("reading {}", p.display()))?;
            StructDist::from_json_str(&text)
                .with_context(|| format!("distribution {}", p.display()))
                .map_err(CliError::from)
        }
    }
}

/// Non-blank lines of a JSONL file with their 1-based line numbers.
fn read_jsonl(path: &Path) -> Result<Vec<(usize, Value)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CliError::at_line(i + 1, e))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Tables with their ids: the record's `id` or `example_id` when present,
/// otherwise the line number.
fn read_tables(path: &Path) -> Result<Vec<(usize, String, Table)>> {
    read_jsonl(path)?
        .into_iter()
        .map(|(line, v)| {
            let table = Table::from_json(&v).map_err(|e| CliError::at_line(line, e))?;
            Grid::build(&table).map_err(|e| CliError::at_line(line, e))?;
            let id = match v.get("id").or_else(|| v.get("example_id")) {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => record_id(line as u64),
            };
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return Err(CliError::at_line(line, format!("id {id:?} is not usable as a file name")));
            }
            Ok((line, id, table))
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}").with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::from)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let count = required(args.count.or(cfg.int("count")?), "count")?;
    let seed = args.seed.or(cfg.int("seed")?).unwrap_or(0);
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let positional = match args.fill.or(cfg.string("fill")?).as_deref() {
        None | Some("identifier") => false,
        Some("positional") => true,
        Some(other) => return Err(CliError::Usage(format!("unknown --fill {other:?}"))),
    };
    let dist = load_dist(args.dist.or(cfg.path("dist")?))?;
    let pool = pool(threads(&args.common, &cfg)?)?;

    let records: Vec<(String, String)> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = SplitMix64::for_record(seed, i);
                let mut table = generate_table(&dist, &mut rng, i);
                if positional {
                    let grid = Grid::build(&table).map_err(CliError::data)?;
                    for (id, a) in grid.anchors() {
                        table.cell_mut(id).expect("grid id").value =
                            format!("R{}C{}", a.top_row, a.left_col);
                    }
                }
                let id = record_id(i);
                let target = structure_target(&table).map_err(CliError::data)?;
                Ok((
                    table_record(&id, &table).to_string(),
                    json!({ "id": id, "target": target.text }).to_string(),
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    mkdir(&out)?;
    let (tables, targets): (Vec<String>, Vec<String>) = records.into_iter().unzip();
    write_lines(&out.join("tables.jsonl"), tables)?;
    write_lines(&out.join("targets.jsonl"), targets)?;
    Ok(())
}

fn cmd_ssl_targets(args: SslArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let input = required(args.input.or(cfg.path("input")?), "input")?;
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let mask = match args.mask {
        Some(k) => Some(k),
        None => cfg.int("mask")?,
    };
    let seed = args.seed.or(cfg.int("seed")?).unwrap_or(0);
    let masked_path = args.masked_tables.or(cfg.path("masked_tables")?);
    if masked_path.is_some() && mask.is_none() {
        return Err(CliError::Usage("--masked-tables requires --mask".into()));
    }

    let mut lines = Vec::new();
    let mut masked_lines = Vec::new();
    for (n, (line, id, table)) in read_tables(&input)?.into_iter().enumerate() {
        let target = structure_target(&table).map_err(|e| CliError::at_line(line, e))?;
        let mut record = json!({ "id": id, "target": target.text });
        if let Some(k) = mask {
            let mut rng = SplitMix64::for_record(seed, n as u64);
            let m = mask_cells(&table, k, &mut rng).map_err(|e| CliError::at_line(line, e))?;
            record["answer"] = Value::String(m.answer);
            masked_lines.push(table_record(&id, &m.masked_table).to_string());
        }
        lines.push(record.to_string());
    }
    write_lines(&out, lines)?;
    if let Some(p) = masked_path {
        write_lines(&p, masked_lines)?;
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let input = required(args.input.or(cfg.path("input")?), "input")?;
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let settings = parse_settings(args.settings.or(cfg.string("settings")?))?;
    let style = render_config(&args.style, &cfg)?;
    let pool = pool(threads(&args.common, &cfg)?)?;

    let tables = read_tables(&input)?;
    for s in &settings {
        mkdir(&out.join("images").join(s.name()))?;
    }
    let entries: Vec<Vec<String>> = pool.install(|| {
        tables
            .par_iter()
            .map(|(line, id, table)| {
                settings
                    .iter()
                    .map(|&s| {
                        let img = render(table, &style, s).map_err(|e| CliError::at_line(*line, e))?;
                        let rel = format!("images/{s}/{id}.pgm");
                        write_file(&out.join(&rel), &img.to_pgm_bytes()).map_err(CliError::data)?;
                        let entry = ManifestEntry {
                            id: id.clone(),
                            setting: s.name().to_owned(),
                            width: img.width(),
                            height: img.height(),
                            path: rel,
                            patches: None,
                        };
                        Ok(serde_json::to_string(&entry).expect("manifest entries serialize"))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_lines(&out.join("manifest.jsonl"), entries.into_iter().flatten())
}

fn field<'a>(v: &'a Value, key: &str, line: usize) -> Result<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::at_line(line, format!("missing string field `{key}`")))
}

fn cmd_patchify(args: PatchifyArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let manifest = required(args.manifest.or(cfg.path("manifest")?), "manifest")?;
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let fit = fit_config(&args.fit, &cfg)?;
    let pool = pool(threads(&args.common, &cfg)?)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();

    let records = read_jsonl(&manifest)?;
    let lines: Vec<String> = pool.install(|| {
        records
            .par_iter()
            .map(|(line, v)| {
                let line = *line;
                let id = field(v, "id", line)?;
                let setting: Setting = field(v, "setting", line)?
                    .parse()
                    .map_err(|e: String| CliError::at_line(line, e))?;
                let path = field(v, "path", line)?;
                let file = File::open(base.join(path))
                    .map_err(|e| CliError::at_line(line, format!("{path}: {e}")))?;
                let img = Image::read_pgm(BufReader::new(file))
                    .map_err(|e| CliError::at_line(line, format!("{path}: {e}")))?;
                let (fitted, seq) = patchify(&img, &fit).map_err(|e| CliError::at_line(line, e))?;

                let rel = format!("patches/{setting}/{id}.tpx");
                let dest = out.join(&rel);
                mkdir(dest.parent().expect("has parent"))?;
                let mut buf = Vec::with_capacity(seq.encoded_len());
                write_patches(&seq, &mut buf).map_err(|e| CliError::at_line(line, e))?;
                write_file(&dest, &buf).map_err(CliError::data)?;

                let image_path = if out == base {
                    path.to_owned()
                } else {
                    base.join(path).to_string_lossy().into_owned()
                };
                let entry = ManifestEntry {
                    id: id.to_owned(),
                    setting: setting.name().to_owned(),
                    width: img.width(),
                    height: img.height(),
                    path: image_path,
                    patches: Some(PatchInfo::new(rel, &fitted, &seq)),
                };
                Ok(serde_json::to_string(&entry).expect("manifest entries serialize"))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    mkdir(&out)?;
    write_lines(&out.join("manifest.jsonl"), lines)
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let input = required(args.input.or(cfg.path("input")?), "input")?;
    let targets = args.targets.or(cfg.path("targets")?);
    let k = args.buckets.or(cfg.int("buckets")?).unwrap_or(20);
    let cap = args.cap.or(cfg.int("cap")?).unwrap_or(50);
    let fit = fit_config(&args.fit, &cfg)?;
    let style = render_config(&args.style, &cfg)?;
    let out = args.out.or(cfg.path("out")?);

    let records = read_jsonl(&input)?;
    let mut tables = Vec::with_capacity(records.len());
    let mut reference_lengths = Vec::new();
    for (line, v) in &records {
        let t = Table::from_json(v).map_err(|e| CliError::at_line(*line, e))?;
        Grid::build(&t).map_err(|e| CliError::at_line(*line, e))?;
        tables.push(t);
        if let Some(Value::Array(anns)) = v.get("sentence_annotations") {
            for a in anns {
                if let Some(s) = a.get("final_sentence").and_then(Value::as_str) {
                    reference_lengths.push(s.split_whitespace().count());
                }
            }
        }
    }
    let report = size_histogram(&tables, &style, k, fit.pixel_budget()).map_err(CliError::data)?;
    let mut json = serde_json::to_value(&report).expect("reports serialize");
    json["budget_pixels"] = json!(fit.pixel_budget());

    if !reference_lengths.is_empty() {
        let coverage = length_coverage(reference_lengths.iter().copied(), cap).map_err(CliError::data)?;
        json["length_coverage"] = json!({ "cap": cap, "fraction": coverage, "n": reference_lengths.len() });
    }
    if let Some(path) = targets {
        let mut texts = Vec::new();
        for (line, v) in read_jsonl(&path)? {
            texts.push(field(&v, "target", line)?.to_owned());
        }
        let s = target_token_stats(texts.iter().map(String::as_str)).map_err(CliError::data)?;
        json["target_tokens"] = json!({ "mean": s.mean, "max": s.max, "n": s.n });
        let lengths = texts.iter().map(|t| count_tokens(t));
        json["target_coverage"] = json!({
            "cap": cap,
            "fraction": length_coverage(lengths, cap).map_err(CliError::data)?,
        });
    }

    let text = serde_json::to_string_pretty(&json).expect("reports serialize");
    match out {
        Some(p) => write_lines(&p, [text]),
        None => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn cmd_extract_dist(args: ExtractDistArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let input = required(args.input.or(cfg.path("input")?), "input")?;
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let tables: Vec<Table> = read_tables(&input)?.into_iter().map(|(_, _, t)| t).collect();
    let dist = extract_dist(&tables).map_err(CliError::data)?;
    write_lines(&out, [dist.to_json_string()])
}

fn cmd_build(args: BuildArgs) -> Result<()> {
    let cfg = Config::load(args.common.config.as_deref())?;
    let out = required(args.out.or(cfg.path("out")?), "out")?;
    let sizes = match args.sizes.or(cfg.string("sizes")?) {
        Some(s) => parse_sizes(&s)?,
        None => SplitSizes::default(),
    };
    let mut build = BuildConfig::new(out);
    build.seed = args.seed.or(cfg.int("seed")?).unwrap_or(0);
    build.sizes = sizes;
    build.dist = load_dist(args.dist.or(cfg.path("dist")?))?;
    build.settings = parse_settings(args.settings.or(cfg.string("settings")?))?;
    build.fit = fit_config(&args.fit, &cfg)?;
    build.render = render_config(&args.style, &cfg)?;
    build.threads = threads(&args.common, &cfg)?;

    let summary = build_dataset(&build).map_err(CliError::data)?;
    eprintln!(
        "built {} records ({} train, {} val, {} test), {} images",
        summary.records(),
        summary.train,
        summary.val,
        summary.test,
        summary.images
    );
    Ok(())
}

/// Runs one invocation and returns the process exit code. Diagnostics go to
/// stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::SslTargets(a) => cmd_ssl_targets(a),
        Command::Render(a) => cmd_render(a),
        Command::Patchify(a) => cmd_patchify(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ExtractDist(a) => cmd_extract_dist(a),
        Command::Build(a) => cmd_build(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io::stderr(), "{e}");
            e.exit_code()
        }
    }
}
