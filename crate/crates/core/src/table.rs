//! Span-carrying tables in the ToTTo record layout and their resolution into a
//! dense occupancy grid.
//!
//! Rows are kept ragged exactly as they arrive. Coordinates only exist after
//! [`Grid::build`] has run the HTML placement algorithm: every cell takes the
//! leftmost free slot of its row and claims a `row_span × col_span`
//! rectangle, growing the grid downward and rightward as needed.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Widest grid accepted by [`Grid::build`].
pub const MAX_GRID_COLS: usize = 1_000;
/// Tallest grid accepted by [`Grid::build`].
pub const MAX_GRID_ROWS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("cell ({row}, {index}) has {axis} span {span}, expected >= 1")]
    BadSpan {
        row: usize,
        index: usize,
        axis: &'static str,
        span: i64,
    },
    #[error("highlighted cell ({row}, {index}) is outside the table")]
    BadHighlight { row: i64, index: i64 },
    #[error("cell ({row}, {index}) contains a control character")]
    BadValue { row: usize, index: usize },
    #[error("spans expand the grid to {rows} rows x {cols} columns")]
    SpanExplosion { rows: usize, cols: usize },
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub value: String,
    pub col_span: u32,
    pub row_span: u32,
    pub is_header: bool,
}

impl Cell {
    pub fn new(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            col_span: 1,
            row_span: 1,
            is_header: false,
        }
    }

    pub fn spanning(value: impl Into<String>, col_span: u32, row_span: u32) -> Self {
        Self {
            col_span,
            row_span,
            ..Self::new(value)
        }
    }

    pub fn header(mut self) -> Self {
        self.is_header = true;
        self
    }
}

/// Address of a cell in the ragged representation: `rows[row][index]`.
///
/// The derived ordering is ragged row-major, which coincides with the
/// `(top_row, left_col)` order of the cells' grid anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub row: usize,
    pub index: usize,
}

impl CellId {
    pub fn new(row: usize, index: usize) -> Self {
        Self { row, index }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub rows: Vec<Vec<Cell>>,
    pub page_title: String,
    pub section_title: String,
    /// `(row, index)` pairs into the ragged rows.
    pub highlighted: Vec<(usize, usize)>,
}

impl Table {
    /// Builds a table from ragged rows, validating spans and highlight indices.
    pub fn new(
        rows: Vec<Vec<Cell>>,
        page_title: impl Into<String>,
        section_title: impl Into<String>,
        highlighted: Vec<(usize, usize)>,
    ) -> Result<Self, TableError> {
        let table = Self {
            rows,
            page_title: page_title.into(),
            section_title: section_title.into(),
            highlighted,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        if self.rows.is_empty() {
            return Err(TableError::MalformedRecord("table has no rows".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            for (i, cell) in row.iter().enumerate() {
                if cell.col_span < 1 {
                    return Err(TableError::BadSpan {
                        row: r,
                        index: i,
                        axis: "column",
                        span: cell.col_span.into(),
                    });
                }
                if cell.row_span < 1 {
                    return Err(TableError::BadSpan {
                        row: r,
                        index: i,
                        axis: "row",
                        span: cell.row_span.into(),
                    });
                }
                if cell.value.chars().any(char::is_control) {
                    return Err(TableError::BadValue { row: r, index: i });
                }
            }
        }
        for &(r, i) in &self.highlighted {
            if self.cell(CellId::new(r, i)).is_none() {
                return Err(TableError::BadHighlight {
                    row: r as i64,
                    index: i as i64,
                });
            }
        }
        Ok(())
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.rows.get(id.row).and_then(|row| row.get(id.index))
    }

    pub fn cell_mut(&mut self, id: CellId) -> Option<&mut Cell> {
        self.rows.get_mut(id.row).and_then(|row| row.get_mut(id.index))
    }

    /// All cell ids in ragged row-major (= anchor) order.
    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| (0..row.len()).map(move |i| CellId::new(r, i)))
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Highlighted cell ids, sorted and deduplicated.
    pub fn highlight_ids(&self) -> Vec<CellId> {
        let mut ids: Vec<CellId> = self
            .highlighted
            .iter()
            .map(|&(r, i)| CellId::new(r, i))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Parses one ToTTo-schema record. Unknown keys are ignored.
    pub fn from_json(record: &Value) -> Result<Self, TableError> {
        parse_table(record)
    }

    pub fn from_json_str(line: &str) -> Result<Self, TableError> {
        let value: Value = serde_json::from_str(line)
            .map_err(|e| TableError::MalformedRecord(e.to_string()))?;
        parse_table(&value)
    }

    pub fn to_json(&self) -> Value {
        serialize_table(self)
    }
}

#[derive(Deserialize, Serialize)]
struct RawCell {
    value: String,
    #[serde(default = "one")]
    column_span: i64,
    #[serde(default = "one")]
    row_span: i64,
    #[serde(default)]
    is_header: bool,
}

fn one() -> i64 {
    1
}

#[derive(Deserialize)]
struct RawRecord {
    table: Option<Vec<Vec<RawCell>>>,
    #[serde(default)]
    table_page_title: Option<String>,
    #[serde(default)]
    table_section_title: Option<String>,
    #[serde(default)]
    highlighted_cells: Option<Vec<(i64, i64)>>,
}

#[derive(Serialize)]
struct RawRecordOut<'a> {
    table: Vec<Vec<RawCell>>,
    table_page_title: &'a str,
    table_section_title: &'a str,
    highlighted_cells: Vec<(usize, usize)>,
}

fn span(raw: i64, row: usize, index: usize, axis: &'static str) -> Result<u32, TableError> {
    if raw < 1 || raw > i64::from(u32::MAX) {
        return Err(TableError::BadSpan {
            row,
            index,
            axis,
            span: raw,
        });
    }
    Ok(raw as u32)
}

/// Parses a ToTTo-schema JSON object into a [`Table`].
pub fn parse_table(record: &Value) -> Result<Table, TableError> {
    let raw = RawRecord::deserialize(record)
        .map_err(|e| TableError::MalformedRecord(e.to_string()))?;
    let raw_rows = raw
        .table
        .ok_or_else(|| TableError::MalformedRecord("missing `table`".into()))?;

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (r, raw_row) in raw_rows.into_iter().enumerate() {
        let mut row = Vec::with_capacity(raw_row.len());
        for (i, c) in raw_row.into_iter().enumerate() {
            row.push(Cell {
                col_span: span(c.column_span, r, i, "column")?,
                row_span: span(c.row_span, r, i, "row")?,
                value: c.value,
                is_header: c.is_header,
            });
        }
        rows.push(row);
    }

    let mut highlighted = Vec::new();
    for (r, i) in raw.highlighted_cells.unwrap_or_default() {
        let in_range = r >= 0
            && i >= 0
            && rows
                .get(r as usize)
                .is_some_and(|row: &Vec<Cell>| (i as usize) < row.len());
        if !in_range {
            return Err(TableError::BadHighlight { row: r, index: i });
        }
        highlighted.push((r as usize, i as usize));
    }

    Table::new(
        rows,
        raw.table_page_title.unwrap_or_default(),
        raw.table_section_title.unwrap_or_default(),
        highlighted,
    )
}

/// Serializes a table back into the ToTTo record layout.
pub fn serialize_table(t: &Table) -> Value {
    let out = RawRecordOut {
        table: t
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| RawCell {
                        value: c.value.clone(),
                        column_span: c.col_span.into(),
                        row_span: c.row_span.into(),
                        is_header: c.is_header,
                    })
                    .collect()
            })
            .collect(),
        table_page_title: &t.page_title,
        table_section_title: &t.section_title,
        highlighted_cells: t.highlighted.clone(),
    };
    serde_json::to_value(out).expect("table serialization is infallible")
}

/// Grid rectangle claimed by one cell. `col_span` is the effective span,
/// which is shorter than the declared one when it would run into a slot
/// claimed by a row-spanning cell above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchor {
    pub top_row: usize,
    pub left_col: usize,
    pub row_span: usize,
    pub col_span: usize,
}

impl Anchor {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.top_row..self.top_row + self.row_span
    }

    pub fn cols(&self) -> std::ops::Range<usize> {
        self.left_col..self.left_col + self.col_span
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows().contains(&row) && self.cols().contains(&col)
    }
}

fn overlaps(a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Dense occupancy matrix resolving every span to grid coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    n_rows: usize,
    n_cols: usize,
    slots: Vec<Option<CellId>>,
    anchors: BTreeMap<CellId, Anchor>,
}

impl Grid {
    pub fn build(t: &Table) -> Result<Self, TableError> {
        let mut occ: Vec<Vec<Option<CellId>>> = vec![Vec::new(); t.rows.len()];
        let mut anchors = BTreeMap::new();
        let mut n_cols = 0;

        for (r, row) in t.rows.iter().enumerate() {
            let mut col = 0;
            for (i, cell) in row.iter().enumerate() {
                while occ[r].get(col).is_some_and(Option::is_some) {
                    col += 1;
                }
                // A span reaching into a slot already claimed from a row
                // above is clipped at that slot, so rectangles never overlap.
                let free_run = occ[r]
                    .get(col..)
                    .and_then(|rest| rest.iter().position(Option::is_some))
                    .unwrap_or(usize::MAX);
                let col_span = (cell.col_span as usize).min(free_run);
                let row_span = cell.row_span as usize;
                let right = col + col_span;
                let bottom = r + row_span;
                if right > MAX_GRID_COLS || bottom > MAX_GRID_ROWS {
                    return Err(TableError::SpanExplosion {
                        rows: bottom.max(occ.len()),
                        cols: right.max(n_cols),
                    });
                }
                if occ.len() < bottom {
                    occ.resize(bottom, Vec::new());
                }
                let id = CellId::new(r, i);
                for slots in &mut occ[r..bottom] {
                    if slots.len() < right {
                        slots.resize(right, None);
                    }
                    for slot in &mut slots[col..right] {
                        debug_assert!(slot.is_none(), "placement overlap at {id}");
                        *slot = Some(id);
                    }
                }
                anchors.insert(
                    id,
                    Anchor {
                        top_row: r,
                        left_col: col,
                        row_span,
                        col_span,
                    },
                );
                n_cols = n_cols.max(right);
                col = right;
            }
        }

        let n_rows = occ.len();
        let mut slots = vec![None; n_rows * n_cols];
        for (r, row) in occ.into_iter().enumerate() {
            slots[r * n_cols..r * n_cols + row.len()].copy_from_slice(&row);
        }
        Ok(Self {
            n_rows,
            n_cols,
            slots,
            anchors,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Occupant of `(row, col)`, `None` for an EMPTY slot or out-of-range
    /// coordinates.
    pub fn slot(&self, row: usize, col: usize) -> Option<CellId> {
        if row < self.n_rows && col < self.n_cols {
            self.slots[row * self.n_cols + col]
        } else {
            None
        }
    }

    pub fn anchor(&self, id: CellId) -> Option<Anchor> {
        self.anchors.get(&id).copied()
    }

    /// Cells with their anchors, ordered by `(top_row, left_col)`.
    pub fn anchors(&self) -> impl Iterator<Item = (CellId, Anchor)> + '_ {
        self.anchors.iter().map(|(&id, &a)| (id, a))
    }

    pub fn cell_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn empty_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    /// Cells sharing at least one column, then cells sharing at least one row,
    /// with the query cell itself excluded from both lists.
    pub fn related_cells(&self, id: CellId) -> Result<(Vec<CellId>, Vec<CellId>), TableError> {
        let query = self.anchor(id).ok_or(TableError::UnknownCell(id))?;
        let mut col_related = Vec::new();
        let mut row_related = Vec::new();
        for (other, a) in self.anchors() {
            if other == id {
                continue;
            }
            if overlaps(a.cols(), query.cols()) {
                col_related.push(other);
            }
            if overlaps(a.rows(), query.rows()) {
                row_related.push(other);
            }
        }
        Ok((col_related, row_related))
    }
}

pub fn occupancy_grid(t: &Table) -> Result<Grid, TableError> {
    Grid::build(t)
}

pub fn related_cells(g: &Grid, cell: CellId) -> Result<(Vec<CellId>, Vec<CellId>), TableError> {
    g.related_cells(cell)
}

/// Highlighted cells in ragged row-major order, without duplicates.
pub fn extract_highlights(t: &Table) -> Vec<&Cell> {
    t.highlight_ids()
        .into_iter()
        .filter_map(|id| t.cell(id))
        .collect()
}
