//! Deterministic table rasterizer.
//!
//! Layout is closed-form so [`measure`] can report the exact output size
//! without drawing:
//!
//! * every row is one text line tall: `glyph_h + 2·cell_pad`;
//! * a column is as wide as its widest cell, where a cell spanning `k`
//!   columns asks each of them for `ceil(glyph_w·len / k) + 2·cell_pad`;
//! * borders are shared between neighbours, so a grid of `n` columns is
//!   `Σ widths + (n + 1)·border` wide;
//! * each non-empty title takes one text line followed by `title_gap`.
//!
//! Text never wraps. Characters outside printable ASCII use the replacement
//! glyph.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::font;
use crate::image::Image;
use crate::table::{CellId, Grid, Table, TableError};

/// Largest pixel count [`render`] will allocate.
pub const MAX_IMAGE_PIXELS: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("rendered image would be {width}x{height} pixels")]
    OversizeImage { width: u64, height: u64 },
    #[error("bad render config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderConfig {
    pub glyph_w: u32,
    pub glyph_h: u32,
    pub cell_pad: u32,
    pub border: u32,
    pub text_gray: u8,
    pub bg_gray: u8,
    pub highlight_gray: u8,
    pub header_gray: u8,
    pub title_gap: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            glyph_w: 8,
            glyph_h: 16,
            cell_pad: 4,
            border: 1,
            text_gray: 0,
            bg_gray: 255,
            highlight_gray: 200,
            header_gray: 230,
            title_gap: 4,
        }
    }
}

impl RenderConfig {
    /// The highlight shade must be unique so its presence can be detected.
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.glyph_w == 0 || self.glyph_h == 0 {
            return Err(RenderError::BadConfig("glyph size must be positive".into()));
        }
        if self.cell_pad == 0 {
            return Err(RenderError::BadConfig("cell_pad must be positive".into()));
        }
        let others = [self.text_gray, self.bg_gray, self.header_gray];
        if others.contains(&self.highlight_gray) {
            return Err(RenderError::BadConfig(
                "highlight_gray must differ from text, background and header shades".into(),
            ));
        }
        Ok(())
    }

    fn text_width(&self, s: &str) -> u64 {
        u64::from(self.glyph_w) * s.chars().count() as u64
    }

    fn row_height(&self) -> u64 {
        u64::from(self.glyph_h) + 2 * u64::from(self.cell_pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    /// Highlighted cells only, no table body.
    TControl,
    /// Full table with highlighted cells shaded.
    LControl,
    /// Full table, no highlighting.
    OpenE,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::TControl, Setting::LControl, Setting::OpenE];

    pub fn name(self) -> &'static str {
        match self {
            Setting::TControl => "tcontrol",
            Setting::LControl => "lcontrol",
            Setting::OpenE => "opene",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tcontrol" => Ok(Setting::TControl),
            "lcontrol" => Ok(Setting::LControl),
            "opene" => Ok(Setting::OpenE),
            _ => Err(format!("unknown setting {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fill {
    Background,
    Header,
    Highlight,
}

struct CellBox<'a> {
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    text: &'a str,
    fill: Fill,
    highlighted: bool,
}

struct Body<'a> {
    top: u64,
    col_x: Vec<u64>,
    col_w: Vec<u64>,
    row_y: Vec<u64>,
    boxes: Vec<CellBox<'a>>,
}

impl Body<'_> {
    /// Interior rectangle `(x, y, w, h)` of a box, borders excluded.
    fn interior(&self, b: &CellBox<'_>, row_h: u64) -> (u64, u64, u64, u64) {
        let x = self.col_x[b.cols.start];
        let last = b.cols.end - 1;
        let w = self.col_x[last] + self.col_w[last] - x;
        let y = self.row_y[b.rows.start];
        let h = self.row_y[b.rows.end - 1] + row_h - y;
        (x, y, w, h)
    }
}

struct Layout<'a> {
    width: u64,
    height: u64,
    titles: Vec<(u64, &'a str)>,
    body: Option<Body<'a>>,
}

fn layout<'a>(t: &'a Table, cfg: &RenderConfig, s: Setting) -> Result<Layout<'a>, RenderError> {
    let pad = u64::from(cfg.cell_pad);
    let border = u64::from(cfg.border);
    let line_h = u64::from(cfg.glyph_h) + u64::from(cfg.title_gap);

    let mut titles = Vec::new();
    let mut width = 0;
    for title in [t.page_title.as_str(), t.section_title.as_str()] {
        if !title.is_empty() {
            titles.push((titles.len() as u64 * line_h, title));
            width = width.max(cfg.text_width(title) + 2 * pad);
        }
    }
    let top = titles.len() as u64 * line_h;

    let (n_rows, n_cols, boxes) = match s {
        Setting::TControl => {
            let boxes: Vec<CellBox<'a>> = t
                .highlight_ids()
                .into_iter()
                .filter_map(|id| t.cell(id))
                .enumerate()
                .map(|(i, cell)| CellBox {
                    rows: i..i + 1,
                    cols: 0..1,
                    text: &cell.value,
                    fill: if cell.is_header { Fill::Header } else { Fill::Background },
                    highlighted: false,
                })
                .collect();
            (boxes.len(), usize::from(!boxes.is_empty()), boxes)
        }
        Setting::LControl | Setting::OpenE => {
            let grid = Grid::build(t)?;
            let highlighted: BTreeSet<CellId> = if s == Setting::LControl {
                t.highlight_ids().into_iter().collect()
            } else {
                BTreeSet::new()
            };
            let mut boxes = Vec::with_capacity(grid.cell_count() + grid.empty_slots());
            for (id, a) in grid.anchors() {
                let cell = t.cell(id).expect("grid ids come from the table");
                let lit = highlighted.contains(&id);
                boxes.push(CellBox {
                    rows: a.rows(),
                    cols: a.cols(),
                    text: &cell.value,
                    fill: match (lit, cell.is_header) {
                        (true, _) => Fill::Highlight,
                        (false, true) => Fill::Header,
                        (false, false) => Fill::Background,
                    },
                    highlighted: lit,
                });
            }
            for r in 0..grid.n_rows() {
                for c in 0..grid.n_cols() {
                    if grid.slot(r, c).is_none() {
                        boxes.push(CellBox {
                            rows: r..r + 1,
                            cols: c..c + 1,
                            text: "",
                            fill: Fill::Background,
                            highlighted: false,
                        });
                    }
                }
            }
            (grid.n_rows(), grid.n_cols(), boxes)
        }
    };

    let mut height = top;
    let body = if n_rows > 0 && n_cols > 0 {
        let mut col_w = vec![2 * pad; n_cols];
        for b in &boxes {
            let span = b.cols.len() as u64;
            let need = cfg.text_width(b.text).div_ceil(span) + 2 * pad;
            for w in &mut col_w[b.cols.clone()] {
                *w = (*w).max(need);
            }
        }
        let mut col_x = Vec::with_capacity(n_cols);
        let mut x = border;
        for w in &col_w {
            col_x.push(x);
            x += w + border;
        }
        let row_h = cfg.row_height();
        let row_y = (0..n_rows as u64)
            .map(|r| top + border + r * (row_h + border))
            .collect();
        width = width.max(x);
        height += n_rows as u64 * (row_h + border) + border;
        Some(Body {
            top,
            col_x,
            col_w,
            row_y,
            boxes,
        })
    } else {
        None
    };

    Ok(Layout {
        width: width.max(1),
        height: height.max(1),
        titles,
        body,
    })
}

/// Exact `(width, height)` of [`render`]'s output, computed from the layout
/// alone.
pub fn measure(t: &Table, cfg: &RenderConfig, s: Setting) -> Result<(u64, u64), RenderError> {
    let l = layout(t, cfg, s)?;
    Ok((l.width, l.height))
}

fn draw_text(img: &mut Image, cfg: &RenderConfig, x0: u64, y0: u64, text: &str) {
    let (gw, gh) = (cfg.glyph_w, cfg.glyph_h);
    for (k, c) in text.chars().enumerate() {
        if c == ' ' {
            continue;
        }
        let gx = x0 + k as u64 * u64::from(gw);
        for dy in 0..gh {
            let y = y0 + u64::from(dy);
            if y >= u64::from(img.height()) {
                break;
            }
            for dx in 0..gw {
                let x = gx + u64::from(dx);
                if x < u64::from(img.width()) && font::ink(c, dx, dy, gw, gh) {
                    img.set(x as u32, y as u32, cfg.text_gray);
                }
            }
        }
    }
}

pub fn render(t: &Table, cfg: &RenderConfig, s: Setting) -> Result<Image, RenderError> {
    cfg.validate()?;
    let l = layout(t, cfg, s)?;
    if l.width * l.height > MAX_IMAGE_PIXELS {
        return Err(RenderError::OversizeImage {
            width: l.width,
            height: l.height,
        });
    }
    let mut img = Image::filled(l.width as u32, l.height as u32, cfg.bg_gray);
    let pad = u64::from(cfg.cell_pad);

    for &(y, title) in &l.titles {
        draw_text(&mut img, cfg, pad, y, title);
    }

    if let Some(body) = &l.body {
        debug_assert!(body.top <= l.height);
        let row_h = cfg.row_height();
        let border = u64::from(cfg.border);
        for b in &body.boxes {
            let (x, y, w, h) = body.interior(b, row_h);
            img.fill_rect(
                (x - border) as u32,
                (y - border) as u32,
                (w + 2 * border) as u32,
                (h + 2 * border) as u32,
                cfg.text_gray,
            );
            let fill = match b.fill {
                Fill::Background => cfg.bg_gray,
                Fill::Header => cfg.header_gray,
                Fill::Highlight => cfg.highlight_gray,
            };
            img.fill_rect(x as u32, y as u32, w as u32, h as u32, fill);
            debug_assert!(!b.highlighted || b.fill == Fill::Highlight);
            draw_text(&mut img, cfg, x + pad, y + pad, b.text);
        }
    }
    Ok(img)
}

/// Images for TCONTROL, LCONTROL and OPENE, in that order.
pub fn render_triple(t: &Table, cfg: &RenderConfig) -> Result<(Image, Image, Image), RenderError> {
    Ok((
        render(t, cfg, Setting::TControl)?,
        render(t, cfg, Setting::LControl)?,
        render(t, cfg, Setting::OpenE)?,
    ))
}

/// Pixel rectangles `(x, y, w, h)` of each highlighted cell's interior in the
/// LCONTROL layout.
pub fn highlight_rects(t: &Table, cfg: &RenderConfig) -> Result<Vec<(u32, u32, u32, u32)>, RenderError> {
    let l = layout(t, cfg, Setting::LControl)?;
    let Some(body) = &l.body else {
        return Ok(Vec::new());
    };
    let row_h = cfg.row_height();
    Ok(body
        .boxes
        .iter()
        .filter(|b| b.highlighted)
        .map(|b| {
            let (x, y, w, h) = body.interior(b, row_h);
            (x as u32, y as u32, w as u32, h as u32)
        })
        .collect())
}
