//! 8-bit grayscale raster and binary PGM (P5) I/O.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BadBuffer { got: usize, expected: usize },
    #[error("not a binary PGM: {0}")]
    BadPgm(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn filled(width: u32, height: u32, gray: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![gray; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImageError::BadBuffer {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, gray: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = gray;
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let w = self.width as usize;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    /// Fills the rectangle, clipped to the image.
    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, gray: u8) {
        let x1 = x.saturating_add(w).min(self.width);
        let y1 = y.saturating_add(h).min(self.height);
        if x >= x1 {
            return;
        }
        let stride = self.width as usize;
        for yy in y..y1 {
            let start = yy as usize * stride;
            self.pixels[start + x as usize..start + x1 as usize].fill(gray);
        }
    }

    /// Top-left `w × h` region. Both must not exceed the image.
    pub fn crop(&self, w: u32, h: u32) -> Image {
        assert!(w <= self.width && h <= self.height);
        let mut pixels = Vec::with_capacity(w as usize * h as usize);
        for y in 0..h {
            pixels.extend_from_slice(&self.row(y)[..w as usize]);
        }
        Image {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 32);
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_pgm<R: BufRead>(mut input: R) -> Result<Image, ImageError> {
        let mut fields = [0u32; 3];
        let mut magic = [0u8; 2];
        input.read_exact(&mut magic)?;
        if &magic != b"P5" {
            return Err(ImageError::BadPgm("magic is not P5"));
        }
        for field in &mut fields {
            *field = read_header_number(&mut input)?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(ImageError::BadPgm("maxval must be 255"));
        }
        let mut pixels = vec![0u8; width as usize * height as usize];
        input.read_exact(&mut pixels)?;
        Image::from_pixels(width, height, pixels)
    }
}

/// Skips whitespace and `#` comments, reads a decimal number and consumes the
/// single whitespace byte that terminates it.
fn read_header_number<R: BufRead>(input: &mut R) -> Result<u32, ImageError> {
    let mut byte = [0u8; 1];
    let mut value: Option<u32> = None;
    loop {
        input.read_exact(&mut byte)?;
        match byte[0] {
            b'#' if value.is_none() => {
                let mut line = Vec::new();
                input.read_until(b'\n', &mut line)?;
            }
            b if b.is_ascii_whitespace() => {
                if let Some(v) = value {
                    return Ok(v);
                }
            }
            b @ b'0'..=b'9' => {
                let d = u32::from(b - b'0');
                value = Some(
                    value
                        .unwrap_or(0)
                        .checked_mul(10)
                        .and_then(|v| v.checked_add(d))
                        .ok_or(ImageError::BadPgm("header number overflows"))?,
                );
            }
            _ => return Err(ImageError::BadPgm("unexpected byte in header")),
        }
    }
}
