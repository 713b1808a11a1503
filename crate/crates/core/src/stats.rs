//! Corpus measurements: rendered-size buckets, share of tables over the
//! patch budget, and target-length coverage.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::render::{measure, RenderConfig, RenderError, Setting};
use crate::table::Table;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("bucket range needs 0 < lo < hi and k >= 1 (got lo={lo}, hi={hi}, k={k})")]
    BadRange { lo: f64, hi: f64, k: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no lengths given")]
    EmptyInput,
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// `k` logarithmically spaced buckets between `lo` and `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBuckets {
    pub lo: f64,
    pub hi: f64,
    pub edges: Vec<f64>,
}

impl SizeBuckets {
    pub fn k(&self) -> usize {
        self.edges.len() - 1
    }
}

/// Up to `n` floats on either side of `x`, including `x`.
fn around(x: f64, n: usize) -> impl Iterator<Item = f64> {
    let mut out = vec![x];
    let (mut up, mut down) = (x, x);
    for _ in 0..n {
        up = up.next_up();
        down = down.next_down();
        out.push(up);
        out.push(down);
    }
    out.into_iter()
}

/// Interior edges such that every consecutive quotient, as computed in
/// binary64, is `c` or the next float above it. Returns `None` when no such
/// chain between `lo` and `hi` exists.
fn uniform_ratio_chain(lo: f64, hi: f64, k: usize, c: f64) -> Option<Vec<f64>> {
    let allowed = |q: f64| q == c || q == c.next_up();
    // Per layer: edge bits -> parent edge bits.
    let mut layers: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::from([(lo.to_bits(), 0)])];
    for _ in 1..k {
        let mut next = BTreeMap::new();
        for &bits in layers.last()?.keys() {
            let e = f64::from_bits(bits);
            for x in around(e * c, 3) {
                if allowed(x / e) {
                    next.entry(x.to_bits()).or_insert(bits);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        layers.push(next);
    }
    let target = hi / c;
    let end = layers
        .last()?
        .keys()
        .map(|&b| f64::from_bits(b))
        .filter(|&e| allowed(hi / e))
        .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))?;

    let mut edges = vec![hi];
    let mut bits = end.to_bits();
    for layer in layers.iter().rev() {
        edges.push(f64::from_bits(bits));
        bits = layer[&bits];
    }
    edges.reverse();
    Some(edges)
}

/// Geometric edges `lo·(hi/lo)^(i/k)`, `i = 0..=k`.
///
/// Interior edges are nudged by a few ulps where that makes every computed
/// ratio `edges[i+1] / edges[i]` agree to within one ulp. Some ranges admit
/// no such chain in binary64; those get the plain closed form.
pub fn bucket_edges(lo: f64, hi: f64, k: usize) -> Result<SizeBuckets, StatsError> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) || k == 0 {
        return Err(StatsError::BadRange { lo, hi, k });
    }
    let log_span = (hi / lo).log2();
    let closed_form: Vec<f64> = (0..=k)
        .map(|i| match i {
            0 => lo,
            i if i == k => hi,
            i => lo * (i as f64 * log_span / k as f64).exp2(),
        })
        .collect();

    let ratio = (log_span / k as f64).exp2();
    let ratios_agree = |e: &[f64]| {
        let q: Vec<f64> = e.windows(2).map(|w| w[1] / w[0]).collect();
        let (min, max) = q
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        max <= min.next_up()
    };
    if ratios_agree(&closed_form) {
        return Ok(SizeBuckets {
            lo,
            hi,
            edges: closed_form,
        });
    }
    let edges = around(ratio, 16)
        .find_map(|c| uniform_ratio_chain(lo, hi, k, c))
        .unwrap_or(closed_form);
    Ok(SizeBuckets { lo, hi, edges })
}

/// `floor(k·(ln size − ln lo)/(ln hi − ln lo))`, clamped to `[0, k−1]`.
pub fn bucket_of(size: f64, b: &SizeBuckets) -> usize {
    let k = b.k();
    let pos = k as f64 * (size.ln() - b.lo.ln()) / (b.hi.ln() - b.lo.ln());
    if pos.is_nan() || pos < 0.0 {
        0
    } else {
        (pos.floor() as usize).min(k - 1)
    }
}

/// Mergeable per-bucket counts plus an over-budget tally.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeHistogram {
    pub buckets: SizeBuckets,
    pub budget: u64,
    pub counts: Vec<u64>,
    pub oversize: u64,
    pub n: u64,
}

impl SizeHistogram {
    pub fn new(buckets: SizeBuckets, budget: u64) -> Self {
        let k = buckets.k();
        Self {
            buckets,
            budget,
            counts: vec![0; k],
            oversize: 0,
            n: 0,
        }
    }

    pub fn add(&mut self, pixels: u64) {
        self.counts[bucket_of(pixels as f64, &self.buckets)] += 1;
        self.oversize += u64::from(pixels > self.budget);
        self.n += 1;
    }

    /// Adds another shard's counts. Both must share buckets and budget.
    pub fn merge(&mut self, other: &SizeHistogram) {
        assert_eq!(self.buckets, other.buckets, "merging different buckets");
        assert_eq!(self.budget, other.budget, "merging different budgets");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.oversize += other.oversize;
        self.n += other.n;
    }

    pub fn report(&self) -> SizeReport {
        let n = self.n.max(1) as f64;
        SizeReport {
            edges: self.buckets.edges.clone(),
            proportions: self.counts.iter().map(|&c| c as f64 / n).collect(),
            oversize_fraction: self.oversize as f64 / n,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub edges: Vec<f64>,
    pub proportions: Vec<f64>,
    pub oversize_fraction: f64,
    pub n: u64,
}

/// Buckets spanning the observed sizes. A single distinct size gets the
/// range `[size, size + 1]`.
pub fn buckets_for(sizes: &[u64], k: usize) -> Result<SizeBuckets, StatsError> {
    let lo = *sizes.iter().min().ok_or(StatsError::EmptyCorpus)?;
    let hi = *sizes.iter().max().expect("non-empty");
    let lo = lo.max(1) as f64;
    let hi = (hi as f64).max(lo + 1.0);
    bucket_edges(lo, hi, k)
}

/// Rendered OPENE pixel count of each table.
pub fn table_sizes<'a>(
    corpus: impl IntoIterator<Item = &'a Table>,
    cfg: &RenderConfig,
) -> Result<Vec<u64>, StatsError> {
    corpus
        .into_iter()
        .map(|t| {
            let (w, h) = measure(t, cfg, Setting::OpenE)?;
            Ok(w * h)
        })
        .collect()
}

/// Size distribution over `k` buckets spanning the corpus, and the share of
/// tables whose OPENE rendering exceeds `budget` pixels.
pub fn size_histogram<'a>(
    corpus: impl IntoIterator<Item = &'a Table>,
    cfg: &RenderConfig,
    k: usize,
    budget: u64,
) -> Result<SizeReport, StatsError> {
    let sizes = table_sizes(corpus, cfg)?;
    let mut hist = SizeHistogram::new(buckets_for(&sizes, k)?, budget);
    for s in sizes {
        hist.add(s);
    }
    Ok(hist.report())
}

/// Share of lengths that are `<= cap`.
pub fn length_coverage(lengths: impl IntoIterator<Item = usize>, cap: usize) -> Result<f64, StatsError> {
    let (mut n, mut covered) = (0u64, 0u64);
    for len in lengths {
        n += 1;
        covered += u64::from(len <= cap);
    }
    if n == 0 {
        return Err(StatsError::EmptyInput);
    }
    Ok(covered as f64 / n as f64)
}
