//! Random table generators and brute-force oracles shared by the integration
//! tests. The oracles deliberately avoid the library's grid code.

#![allow(dead_code)]

use std::collections::HashMap;

use tabpix_core::{Cell, SplitMix64, Table};

/// Ragged table with random spans, empty rows, awkward values and
/// highlights. Spans are not clipped, so grids can be ragged with EMPTY slots.
pub fn random_table(rng: &mut SplitMix64, max_rows: u64, max_cols: u64) -> Table {
    let n_rows = 1 + rng.below(max_rows) as usize;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let n = rng.below(max_cols + 1) as usize;
        let row = (0..n)
            .map(|_| {
                let cs = if rng.below(5) == 0 { 1 + rng.below(3) as u32 } else { 1 };
                let rs = if rng.below(6) == 0 { 1 + rng.below(3) as u32 } else { 1 };
                let mut c = Cell::spanning(random_value(rng), cs, rs);
                c.is_header = rng.below(8) == 0;
                c
            })
            .collect();
        rows.push(row);
    }
    let ids: Vec<(usize, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, row): (usize, &Vec<Cell>)| (0..row.len()).map(move |i| (r, i)))
        .collect();
    let mut highlighted = Vec::new();
    if !ids.is_empty() {
        for _ in 0..1 + rng.below(3) {
            highlighted.push(ids[rng.below(ids.len() as u64) as usize]);
        }
    }
    Table {
        rows,
        page_title: random_value(rng),
        section_title: random_value(rng),
        highlighted,
    }
}

/// Short values drawn from a pool that includes grammar metacharacters,
/// empty strings and non-ASCII text.
pub fn random_value(rng: &mut SplitMix64) -> String {
    const PIECES: &[&str] = &["a", "Zq", "7", " ", "<", ">", "\\", "_", "é", "北", "x y", "1,024"];
    if rng.below(10) == 0 {
        return String::new();
    }
    (0..1 + rng.below(4))
        .map(|_| PIECES[rng.below(PIECES.len() as u64) as usize])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleAnchor {
    pub id: (usize, usize),
    pub top: usize,
    pub left: usize,
    pub rows: usize,
    pub cols: usize,
}

pub struct OracleGrid {
    pub occupied: HashMap<(usize, usize), (usize, usize)>,
    pub anchors: Vec<OracleAnchor>,
    pub n_rows: usize,
    pub n_cols: usize,
}

/// HTML placement done the slow way: each cell scans for the first free
/// column of its row in a hash map and claims its rectangle.
pub fn oracle_grid(t: &Table) -> OracleGrid {
    let mut occupied = HashMap::new();
    let mut anchors = Vec::new();
    let mut n_rows = t.rows.len();
    let mut n_cols = 0;
    for (r, row) in t.rows.iter().enumerate() {
        let mut c = 0;
        for (i, cell) in row.iter().enumerate() {
            while occupied.contains_key(&(r, c)) {
                c += 1;
            }
            let rs = cell.row_span as usize;
            let cs = (0..cell.col_span as usize)
                .take_while(|dc| !occupied.contains_key(&(r, c + dc)))
                .count();
            for dr in 0..rs {
                for dc in 0..cs {
                    let prev = occupied.insert((r + dr, c + dc), (r, i));
                    assert!(prev.is_none(), "oracle overlap");
                }
            }
            anchors.push(OracleAnchor {
                id: (r, i),
                top: r,
                left: c,
                rows: rs,
                cols: cs,
            });
            n_rows = n_rows.max(r + rs);
            n_cols = n_cols.max(c + cs);
            c += cs;
        }
    }
    anchors.sort_by_key(|a| (a.top, a.left));
    OracleGrid {
        occupied,
        anchors,
        n_rows,
        n_cols,
    }
}

fn intersects(a0: usize, alen: usize, b0: usize, blen: usize) -> bool {
    (a0..a0 + alen).any(|x| (b0..b0 + blen).contains(&x))
}

type Ids = Vec<(usize, usize)>;

/// Column-related and row-related cells of `id`, in anchor order.
pub fn oracle_related(g: &OracleGrid, id: (usize, usize)) -> (Ids, Ids) {
    let q = *g.anchors.iter().find(|a| a.id == id).expect("known id");
    let mut cols = Vec::new();
    let mut rows = Vec::new();
    for a in &g.anchors {
        if a.id == id {
            continue;
        }
        if intersects(a.left, a.cols, q.left, q.cols) {
            cols.push(a.id);
        }
        if intersects(a.top, a.rows, q.top, q.rows) {
            rows.push(a.id);
        }
    }
    (cols, rows)
}

fn oracle_escape(v: &str) -> String {
    if v.is_empty() {
        return "\\_".to_owned();
    }
    v.replace('\\', "\\\\")
        .replace(' ', "\\ ")
        .replace('<', "\\<")
        .replace('>', "\\>")
}

/// Pseudo-HTML target assembled from the oracle grid.
pub fn oracle_target(t: &Table) -> String {
    let g = oracle_grid(t);
    let mut hl = t.highlighted.clone();
    hl.sort();
    hl.dedup();
    let value = |id: (usize, usize)| oracle_escape(&t.rows[id.0][id.1].value);
    let mut out = String::new();
    for id in hl {
        let (cols, rows) = oracle_related(&g, id);
        let list = |ids: Ids| ids.into_iter().map(value).collect::<Vec<_>>().join(" ");
        out += &format!("<{} <{}> <{}>>", value(id), list(cols), list(rows));
    }
    out
}
