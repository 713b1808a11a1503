//! Synthetic tables for the structure-learning curriculum.
//!
//! Table shape (column count, row count, spans) is drawn from discrete
//! distributions that are normally measured on a real corpus with
//! [`extract_dist`]. Cell values are 5-symbol identifiers without repeated
//! symbols, so every cell reads as an opaque key rather than content.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::table::{Cell, Grid, Table, TableError};

pub const MAX_COLS: u32 = 20;
pub const MAX_ROWS: u32 = 75;

pub const VALUE_ALPHABET: &[u8; 62] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
pub const VALUE_LEN: usize = 5;

const PROB_TOLERANCE: f64 = 1e-9;

/// A fixed distribution shipped with the crate, roughly shaped like
/// Wikipedia tables. Useful for tests and for builds without a measured
/// corpus.
pub const DEFAULT_DIST_JSON: &str = include_str!("../data/default_dist.json");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("distribution `{name}`: {reason}")]
    BadDistribution { name: &'static str, reason: String },
    #[error("distribution file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Discrete distribution over positive integers, sampled by inverting the CDF
/// with a 53-bit uniform fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrete {
    values: Vec<u32>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Discrete {
    pub fn new(
        name: &'static str,
        pairs: impl IntoIterator<Item = (u32, f64)>,
        max: Option<u32>,
    ) -> Result<Self, SynthError> {
        let bad = |reason: String| SynthError::BadDistribution { name, reason };
        let mut merged = BTreeMap::new();
        for (v, p) in pairs {
            if v < 1 || max.is_some_and(|m| v > m) {
                return Err(bad(format!("value {v} outside supported range")));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(bad(format!("probability {p} for {v} is not a nonnegative number")));
            }
            *merged.entry(v).or_insert(0.0) += p;
        }
        let (values, probs): (Vec<u32>, Vec<f64>) = merged.into_iter().unzip();
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(bad(format!("probabilities sum to {total}")));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { values, probs, cdf })
    }

    pub fn point(value: u32) -> Self {
        Self {
            values: vec![value],
            probs: vec![1.0],
            cdf: vec![1.0],
        }
    }

    /// Normalized histogram of `counts`.
    fn from_counts(name: &'static str, counts: &BTreeMap<u32, u64>) -> Result<Self, SynthError> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(SynthError::EmptyCorpus);
        }
        Self::new(
            name,
            counts.iter().map(|(&v, &c)| (v, c as f64 / total as f64)),
            None,
        )
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> u32 {
        let u = rng.next_f64();
        let i = self.cdf.partition_point(|&c| c <= u);
        match self.values.get(i) {
            Some(&v) => v,
            // u landed above a CDF that sums to slightly below one.
            None => {
                let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                self.values[last]
            }
        }
    }

    pub fn prob(&self, value: u32) -> f64 {
        self.values
            .binary_search(&value)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn max_value(&self) -> u32 {
        self.values.last().copied().unwrap_or(1)
    }

    fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(v, p)| (v.to_string(), p)).collect()
    }
}

/// Structure distributions for synthetic tables.
#[derive(Debug, Clone, PartialEq)]
pub struct StructDist {
    pub col_count: Discrete,
    pub row_count: Discrete,
    pub col_span: Discrete,
    pub row_span: Discrete,
    pub highlight_count: Discrete,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DistFile {
    col_count: BTreeMap<String, f64>,
    row_count: BTreeMap<String, f64>,
    col_span: BTreeMap<String, f64>,
    row_span: BTreeMap<String, f64>,
    #[serde(default)]
    highlight_count: Option<BTreeMap<String, f64>>,
}

fn parse_support(
    name: &'static str,
    map: &BTreeMap<String, f64>,
    max: Option<u32>,
) -> Result<Discrete, SynthError> {
    let mut pairs = Vec::with_capacity(map.len());
    for (k, &p) in map {
        let v = k.trim().parse::<u32>().map_err(|_| SynthError::BadDistribution {
            name,
            reason: format!("key {k:?} is not a positive integer"),
        })?;
        pairs.push((v, p));
    }
    Discrete::new(name, pairs, max)
}

impl StructDist {
    pub fn from_json_str(s: &str) -> Result<Self, SynthError> {
        let file: DistFile = serde_json::from_str(s)?;
        Ok(Self {
            col_count: parse_support("col_count", &file.col_count, Some(MAX_COLS))?,
            row_count: parse_support("row_count", &file.row_count, Some(MAX_ROWS))?,
            col_span: parse_support("col_span", &file.col_span, Some(MAX_COLS))?,
            row_span: parse_support("row_span", &file.row_span, Some(MAX_ROWS))?,
            highlight_count: match &file.highlight_count {
                Some(m) => parse_support("highlight_count", m, None)?,
                None => Discrete::point(1),
            },
        })
    }

    pub fn to_json_string(&self) -> String {
        let file = DistFile {
            col_count: self.col_count.to_map(),
            row_count: self.row_count.to_map(),
            col_span: self.col_span.to_map(),
            row_span: self.row_span.to_map(),
            highlight_count: Some(self.highlight_count.to_map()),
        };
        serde_json::to_string_pretty(&file).expect("distribution serialization is infallible")
    }

    pub fn default_dist() -> Self {
        Self::from_json_str(DEFAULT_DIST_JSON).expect("bundled distribution is valid")
    }

    /// Every component a point mass: handy for tests.
    pub fn point(cols: u32, rows: u32, col_span: u32, row_span: u32) -> Self {
        Self {
            col_count: Discrete::point(cols),
            row_count: Discrete::point(rows),
            col_span: Discrete::point(col_span),
            row_span: Discrete::point(row_span),
            highlight_count: Discrete::point(1),
        }
    }
}

/// Measures column count, row count and span distributions over a corpus.
///
/// Column counts are clipped to 20 and row counts to 75. Row counts are pooled
/// over all column counts into a single distribution. The highlight-count
/// distribution is taken from tables that carry at least one highlight and
/// falls back to a point mass at 1.
pub fn extract_dist<'a>(corpus: impl IntoIterator<Item = &'a Table>) -> Result<StructDist, SynthError> {
    let mut cols = BTreeMap::new();
    let mut rows = BTreeMap::new();
    let mut col_spans = BTreeMap::new();
    let mut row_spans = BTreeMap::new();
    let mut highlights = BTreeMap::new();

    for t in corpus {
        let grid = Grid::build(t)?;
        let n_cols = (grid.n_cols() as u32).clamp(1, MAX_COLS);
        let n_rows = (grid.n_rows() as u32).clamp(1, MAX_ROWS);
        *cols.entry(n_cols).or_insert(0u64) += 1;
        *rows.entry(n_rows).or_insert(0u64) += 1;
        for cell in t.rows.iter().flatten() {
            *col_spans.entry(cell.col_span.min(MAX_COLS)).or_insert(0u64) += 1;
            *row_spans.entry(cell.row_span.min(MAX_ROWS)).or_insert(0u64) += 1;
        }
        let k = t.highlight_ids().len() as u32;
        if k > 0 {
            *highlights.entry(k).or_insert(0u64) += 1;
        }
    }
    if cols.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    if col_spans.is_empty() {
        col_spans.insert(1, 1);
        row_spans.insert(1, 1);
    }
    Ok(StructDist {
        col_count: Discrete::from_counts("col_count", &cols)?,
        row_count: Discrete::from_counts("row_count", &rows)?,
        col_span: Discrete::from_counts("col_span", &col_spans)?,
        row_span: Discrete::from_counts("row_span", &row_spans)?,
        highlight_count: if highlights.is_empty() {
            Discrete::point(1)
        } else {
            Discrete::from_counts("highlight_count", &highlights)?
        },
    })
}

/// One cell of a skeleton: its anchor and clipped spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub top_row: u32,
    pub left_col: u32,
    pub col_span: u32,
    pub row_span: u32,
}

/// A fully tiled table shape. `rows[r]` lists the cells anchored in grid row
/// `r`, left to right, so feeding the rows through the HTML placement
/// algorithm reproduces the same anchors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pub n_rows: u32,
    pub n_cols: u32,
    pub rows: Vec<Vec<Placement>>,
}

impl Skeleton {
    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn placements(&self) -> impl Iterator<Item = &Placement> {
        self.rows.iter().flatten()
    }

    /// Table with the given value for every cell, in anchor order.
    pub fn fill(&self, mut value: impl FnMut(&Placement) -> String) -> Table {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| Cell::spanning(value(p), p.col_span, p.row_span))
                    .collect()
            })
            .collect();
        Table {
            rows,
            page_title: String::new(),
            section_title: String::new(),
            highlighted: Vec::new(),
        }
    }
}

/// Draws a table shape: column count, then row count, then per new cell a
/// `(col_span, row_span)` pair clipped to the free rectangle at the
/// placement cursor.
pub fn sample_structure(d: &StructDist, rng: &mut SplitMix64) -> Skeleton {
    let n_cols = d.col_count.sample(rng).min(MAX_COLS);
    let n_rows = d.row_count.sample(rng).min(MAX_ROWS);
    let (w, h) = (n_cols as usize, n_rows as usize);
    let mut taken = vec![false; w * h];
    let mut rows = Vec::with_capacity(h);

    for r in 0..h {
        let mut row = Vec::new();
        let mut col = 0;
        loop {
            while col < w && taken[r * w + col] {
                col += 1;
            }
            if col == w {
                break;
            }
            let want_cols = d.col_span.sample(rng) as usize;
            let want_rows = d.row_span.sample(rng) as usize;
            let free_run = (col..w).take_while(|&c| !taken[r * w + c]).count();
            let col_span = want_cols.min(free_run);
            let row_span = want_rows.min(h - r);
            for rr in r..r + row_span {
                taken[rr * w + col..rr * w + col + col_span].fill(true);
            }
            row.push(Placement {
                top_row: r as u32,
                left_col: col as u32,
                col_span: col_span as u32,
                row_span: row_span as u32,
            });
            col += col_span;
        }
        rows.push(row);
    }
    Skeleton {
        n_rows,
        n_cols,
        rows,
    }
}

/// Partial Fisher-Yates: the first `k` entries of a uniform shuffle of
/// `0..n`, in draw order.
pub(crate) fn choose_distinct(n: usize, k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// A 5-symbol identifier with pairwise distinct symbols from `[A-Za-z0-9]`.
pub fn sample_value(rng: &mut SplitMix64) -> String {
    let mut symbols = *VALUE_ALPHABET;
    let n = symbols.len();
    for i in 0..VALUE_LEN {
        let j = i + rng.below((n - i) as u64) as usize;
        symbols.swap(i, j);
    }
    String::from_utf8(symbols[..VALUE_LEN].to_vec()).expect("alphabet is ASCII")
}

/// Number of ordered selections of `k` distinct symbols from `n`.
pub fn permutations(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).map(u128::from).product()
}

/// Size of the cell-value space: `P(62, 5) = 62·61·60·59·58`.
pub fn count_value_space() -> u128 {
    permutations(VALUE_ALPHABET.len() as u64, VALUE_LEN as u64)
}

/// One synthetic table: sampled shape, identifier values, `k` distinct
/// highlighted cells (k clamped to the cell count) and synthetic titles.
pub fn generate_table(d: &StructDist, rng: &mut SplitMix64, id: u64) -> Table {
    let skeleton = sample_structure(d, rng);
    let mut table = skeleton.fill(|_| sample_value(rng));
    let k = d.highlight_count.sample(rng) as usize;
    let ids: Vec<_> = table.cell_ids().collect();
    let mut picked: Vec<(usize, usize)> = choose_distinct(ids.len(), k, rng)
        .into_iter()
        .map(|i| (ids[i].row, ids[i].index))
        .collect();
    picked.sort_unstable();
    table.highlighted = picked;
    table.page_title = format!("Synthetic Table {id}");
    table.section_title = format!("Section {id}");
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SplitSizes {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl SplitSizes {
    pub fn new(train: u64, val: u64, test: u64) -> Self {
        Self { train, val, test }
    }

    pub fn total(&self) -> u64 {
        self.train + self.val + self.test
    }

    /// Global record indices owned by `split`. Ranges are disjoint and
    /// ordered train, val, test.
    pub fn range(&self, split: Split) -> Range<u64> {
        match split {
            Split::Train => 0..self.train,
            Split::Val => self.train..self.train + self.val,
            Split::Test => self.train + self.val..self.total(),
        }
    }
}

/// Synthetic corpus addressed by global record index.
#[derive(Debug, Clone)]
pub struct SslCorpus {
    pub dist: StructDist,
    pub sizes: SplitSizes,
    pub seed: u64,
}

impl SslCorpus {
    pub fn record(&self, index: u64) -> Table {
        let mut rng = SplitMix64::for_record(self.seed, index);
        generate_table(&self.dist, &mut rng, index)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (u64, Table)> + '_ {
        self.sizes.range(split).map(move |i| (i, self.record(i)))
    }
}

pub fn build_ssl_corpus(d: StructDist, sizes: SplitSizes, seed: u64) -> SslCorpus {
    SslCorpus {
        dist: d,
        sizes,
        seed,
    }
}
