//! Self-supervised targets for the structure-learning stage.
//!
//! The pseudo-HTML target holds one container per highlighted cell:
//!
//! ```text
//! <head <col values> <row values>>
//! ```
//!
//! `head` is the highlighted value. The two inner lists hold the values of
//! every other cell sharing a column with it and every other cell sharing a
//! row with it, each ordered by anchor. Values are space-separated. A space,
//! `<`, `>` or `\` inside a value is escaped with a backslash, and an empty
//! value is written as `\_`.

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::synth::{choose_distinct, Skeleton};
use crate::table::{Grid, Table, TableError};

/// Replaces masked cell values. Never produced by the synthetic alphabet.
pub const MASK_MARKER: char = '\u{25AE}';

#[derive(Debug, Error)]
pub enum SslError {
    #[error("table has no highlighted cells")]
    NoHighlights,
    #[error("cannot mask {k} of {cells} cells")]
    BadK { k: usize, cells: usize },
    #[error("no targets given")]
    EmptyInput,
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("grammar error at byte {offset}: {message}")]
pub struct GrammarError {
    pub offset: usize,
    pub message: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub head: String,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureTarget {
    pub text: String,
    pub containers: Vec<Container>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTarget {
    pub masked_table: Table,
    pub answer: String,
}

fn escape_into(out: &mut String, value: &str) {
    if value.is_empty() {
        out.push_str("\\_");
        return;
    }
    for c in value.chars() {
        if matches!(c, ' ' | '<' | '>' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn write_list(out: &mut String, values: &[String]) {
    out.push('<');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        escape_into(out, v);
    }
    out.push('>');
}

/// Serializes containers with the target grammar.
pub fn render_containers(containers: &[Container]) -> String {
    let mut out = String::new();
    for c in containers {
        out.push('<');
        escape_into(&mut out, &c.head);
        out.push(' ');
        write_list(&mut out, &c.columns);
        out.push(' ');
        write_list(&mut out, &c.rows);
        out.push('>');
    }
    out
}

pub fn structure_target(t: &Table) -> Result<StructureTarget, SslError> {
    let highlights = t.highlight_ids();
    if highlights.is_empty() {
        return Err(SslError::NoHighlights);
    }
    let grid = Grid::build(t)?;
    let value = |id| t.cell(id).map(|c| c.value.clone()).unwrap_or_default();
    let containers = highlights
        .into_iter()
        .map(|id| {
            let (cols, rows) = grid.related_cells(id)?;
            Ok(Container {
                head: value(id),
                columns: cols.into_iter().map(value).collect(),
                rows: rows.into_iter().map(value).collect(),
            })
        })
        .collect::<Result<Vec<_>, TableError>>()?;
    Ok(StructureTarget {
        text: render_containers(&containers),
        containers,
    })
}

struct Parser<'a> {
    bytes: &'a [u8],
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &'static str) -> GrammarError {
        GrammarError {
            offset: self.pos,
            message,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8, message: &'static str) -> Result<(), GrammarError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(message))
        }
    }

    fn value(&mut self) -> Result<String, GrammarError> {
        let start = self.pos;
        let mut out = String::new();
        let mut explicit_empty = false;
        loop {
            match self.peek() {
                None | Some(b' ' | b'<' | b'>') => break,
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(b'_') => {
                            self.pos += 1;
                            explicit_empty = true;
                        }
                        Some(b @ (b' ' | b'<' | b'>' | b'\\')) => {
                            self.pos += 1;
                            out.push(b as char);
                        }
                        _ => return Err(self.err("bad escape sequence")),
                    }
                }
                Some(_) => {
                    let c = self.src[self.pos..].chars().next().expect("in bounds");
                    self.pos += c.len_utf8();
                    out.push(c);
                }
            }
        }
        if self.pos == start {
            return Err(self.err("expected a value"));
        }
        if explicit_empty && !out.is_empty() {
            return Err(GrammarError {
                offset: start,
                message: "empty marker mixed with text",
            });
        }
        Ok(out)
    }

    fn list(&mut self) -> Result<Vec<String>, GrammarError> {
        self.expect(b'<', "expected `<` opening a list")?;
        let mut values = Vec::new();
        if self.peek() == Some(b'>') {
            self.pos += 1;
            return Ok(values);
        }
        loop {
            values.push(self.value()?);
            match self.peek() {
                Some(b' ') => self.pos += 1,
                Some(b'>') => {
                    self.pos += 1;
                    return Ok(values);
                }
                _ => return Err(self.err("expected ` ` or `>` in list")),
            }
        }
    }

    fn container(&mut self) -> Result<Container, GrammarError> {
        self.expect(b'<', "expected `<` opening a container")?;
        let head = self.value()?;
        self.expect(b' ', "expected ` ` after head")?;
        let columns = self.list()?;
        self.expect(b' ', "expected ` ` between lists")?;
        let rows = self.list()?;
        self.expect(b'>', "expected `>` closing a container")?;
        Ok(Container {
            head,
            columns,
            rows,
        })
    }
}

pub fn parse_structure_target(s: &str) -> Result<Vec<Container>, GrammarError> {
    let mut p = Parser {
        bytes: s.as_bytes(),
        src: s,
        pos: 0,
    };
    let mut containers = Vec::new();
    while p.peek().is_some() || containers.is_empty() {
        containers.push(p.container()?);
    }
    Ok(containers)
}

/// Fills each skeleton cell with `R<top_row>C<left_col>`.
pub fn positional_fill(skeleton: &Skeleton) -> Table {
    skeleton.fill(|p| format!("R{}C{}", p.top_row, p.left_col))
}

/// Masks `k` distinct cells chosen uniformly. The answer lists the original
/// values in anchor order.
pub fn mask_cells(t: &Table, k: usize, rng: &mut SplitMix64) -> Result<MaskTarget, SslError> {
    let ids: Vec<_> = t.cell_ids().collect();
    if k == 0 || k > ids.len() {
        return Err(SslError::BadK {
            k,
            cells: ids.len(),
        });
    }
    let mut chosen = choose_distinct(ids.len(), k, rng);
    chosen.sort_unstable();

    let mut masked_table = t.clone();
    let mut answer = String::new();
    for (n, i) in chosen.into_iter().enumerate() {
        let cell = masked_table.cell_mut(ids[i]).expect("id from table");
        let original = std::mem::replace(&mut cell.value, MASK_MARKER.to_string());
        if n > 0 {
            answer.push(' ');
        }
        answer.push_str(&original);
    }
    Ok(MaskTarget {
        masked_table,
        answer,
    })
}

/// Number of tokens in a target: each `<` and `>` is a token, as is every
/// maximal run of other non-whitespace characters.
pub fn count_tokens(s: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
                escaped = true;
            }
            '<' | '>' => {
                count += 1;
                in_word = false;
            }
            c if c.is_whitespace() => in_word = false,
            _ => {
                if !in_word {
                    count += 1;
                    in_word = true;
                }
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenStats {
    pub mean: f64,
    pub max: usize,
    pub n: usize,
}

pub fn target_token_stats<'a>(
    targets: impl IntoIterator<Item = &'a str>,
) -> Result<TokenStats, SslError> {
    let (mut n, mut total, mut max) = (0usize, 0u64, 0usize);
    for t in targets {
        let c = count_tokens(t);
        n += 1;
        total += c as u64;
        max = max.max(c);
    }
    if n == 0 {
        return Err(SslError::EmptyInput);
    }
    Ok(TokenStats {
        mean: total as f64 / n as f64,
        max,
        n,
    })
}
