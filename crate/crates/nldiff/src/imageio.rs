//! PGM and CSV file I/O, noise injection, and synthetic test images.
//!
//! PGM is the only image format: both the ASCII (P2) and binary (P5) readers
//! are strict enough that everything the writer emits round-trips bit-exactly
//! (modulo the generator comment). All operations are deterministic functions
//! of their inputs plus the stated seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::{BoundaryCondition, Dim, GridField};

/// A grayscale image with pixel values normalized to [0,1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Build from raw pixel values; everything is clamped into [0,1].
    pub fn new(width: usize, height: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Interpret the pixels as midpoint samples of a square Neumann grid
    /// (the DCT-II node placement used by the 2D flow).
    pub fn to_field(&self) -> Result<GridField> {
        if self.width != self.height {
            return Err(Error::Unsupported {
                context: format!(
                    "flow fields are square; image is {}x{}",
                    self.width, self.height
                ),
            });
        }
        GridField::from_values(
            self.width,
            BoundaryCondition::Neumann,
            Dim::Two,
            self.pixels.clone(),
        )
    }

    /// Back from a square field, clamping into [0,1].
    pub fn from_field(f: &GridField) -> Result<Self> {
        if f.dim() != Dim::Two {
            return Err(Error::Unsupported {
                context: "images come from 2D fields".to_string(),
            });
        }
        GrayImage::new(f.n(), f.n(), f.values().to_vec())
    }
}

/// Comment line the PGM writer embeds after the magic number.
const GENERATOR_COMMENT: &str = "# written by nldiff";

/// Write a binary (P5) PGM. Pixels are quantized to `round(p * maxval)`.
pub fn write_pgm(img: &GrayImage, path: &Path, maxval: u16) -> Result<()> {
    if maxval == 0 {
        return Err(Error::arg("pgm maxval must be positive".to_string()));
    }
    let mut bytes = Vec::with_capacity(img.pixels.len() * 2 + 64);
    bytes.extend_from_slice(b"P5\n");
    bytes.extend_from_slice(GENERATOR_COMMENT.as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(format!("{} {}\n{}\n", img.width, img.height, maxval).as_bytes());
    for &p in &img.pixels {
        let q = (p * maxval as f64).round() as u16;
        let q = q.min(maxval);
        if maxval > 255 {
            bytes.extend_from_slice(&q.to_be_bytes());
        } else {
            bytes.push(q as u8);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct PgmParser<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> PgmParser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::PgmParse {
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Skip whitespace and `#` comments (header context only).
    fn skip_separators(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("malformed {what}")))
    }
}

/// Read a P2 (ASCII) or P5 (binary) PGM into a normalized image.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&data)
}

/// Parse PGM bytes; exposed separately so round-trip tests can stay in
/// memory.
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut p = PgmParser { data, pos: 0 };
    if data.len() < 2 {
        return Err(p.err("file too short for a PGM magic number"));
    }
    let magic = &data[0..2];
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => {
            return Err(p.err(format!(
                "unsupported magic {:?}; only P2 and P5 are handled",
                String::from_utf8_lossy(magic)
            )))
        }
    };
    p.pos = 2;
    let width = p.read_number("width")? as usize;
    let height = p.read_number("height")? as usize;
    let maxval = p.read_number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(p.err(format!("maxval {maxval} outside 1..=65535")));
    }
    if width == 0 || height == 0 {
        return Err(p.err("zero image dimension"));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if p.pos >= data.len() || !data[p.pos].is_ascii_whitespace() {
            return Err(p.err("expected single whitespace before raster"));
        }
        p.pos += 1;
        let wide = maxval > 255;
        let sample_bytes = if wide { 2 } else { 1 };
        if data.len() - p.pos < count * sample_bytes {
            p.pos = data.len();
            return Err(p.err(format!(
                "raster truncated: need {} bytes",
                count * sample_bytes
            )));
        }
        for _ in 0..count {
            let raw = if wide {
                let v = u16::from_be_bytes([data[p.pos], data[p.pos + 1]]) as u64;
                p.pos += 2;
                v
            } else {
                let v = data[p.pos] as u64;
                p.pos += 1;
                v
            };
            if raw > maxval {
                return Err(p.err(format!("sample {raw} exceeds maxval {maxval}")));
            }
            pixels.push(raw as f64 / maxval as f64);
        }
        if p.pos != data.len() {
            return Err(p.err("trailing bytes after raster"));
        }
    } else {
        for _ in 0..count {
            let raw = p.read_number("ascii sample")?;
            if raw > maxval {
                return Err(p.err(format!("sample {raw} exceeds maxval {maxval}")));
            }
            pixels.push(raw as f64 / maxval as f64);
        }
        p.skip_separators();
        if p.pos != data.len() {
            return Err(p.err("trailing content after raster"));
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Replace exactly `round(fraction * N)` distinct pixels with extreme
/// values, half white and half black (ties go to white). Deterministic for a
/// fixed seed.
pub fn salt_pepper(img: &GrayImage, fraction: f64, seed: u64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::arg(format!(
            "noise fraction must lie in [0,1], got {fraction}"
        )));
    }
    let total = img.pixels.len();
    let count = (fraction * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..total).collect();
    // Partial Fisher-Yates: the first `count` entries are a uniform sample
    // without replacement.
    for i in 0..count {
        let j = rng.gen_range(i..total);
        indices.swap(i, j);
    }
    let mut out = img.clone();
    let salt = count.div_ceil(2);
    for (k, &idx) in indices[..count].iter().enumerate() {
        out.pixels[idx] = if k < salt { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Piecewise-constant synthetic test image: disk, rectangle and wedge on
/// distinct gray levels over a flat background. Levels avoid 0 and 1 so that
/// injected extreme-value noise always changes the pixel it hits.
pub fn make_cartoon(n: usize) -> GrayImage {
    const BACKGROUND: f64 = 0.2;
    const DISK: f64 = 0.85;
    const RECT: f64 = 0.55;
    const WEDGE: f64 = 0.4;
    let nf = n as f64;
    let mut pixels = vec![BACKGROUND; n * n];
    for r in 0..n {
        for c in 0..n {
            let x = (c as f64 + 0.5) / nf;
            let y = (r as f64 + 0.5) / nf;
            let level = &mut pixels[r * n + c];
            let dx = x - 0.32;
            let dy = y - 0.34;
            if (dx * dx + dy * dy).sqrt() < 0.17 {
                *level = DISK;
            } else if (0.58..0.88).contains(&x) && (0.14..0.42).contains(&y) {
                *level = RECT;
            } else if y > 0.62 && y < 0.92 && x > 0.18 && x - 0.18 < (y - 0.62) {
                *level = WEDGE;
            }
        }
    }
    GrayImage {
        width: n,
        height: n,
        pixels,
    }
}

/// Write named columns as CSV: a header row, then one row per entry, values
/// in scientific notation with 17 significant digits (round-trip exact for
/// f64). An optional `# `-prefixed manifest line precedes the header.
pub fn write_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    write_csv_with_manifest(path, None, columns)
}

/// [`write_csv`] with a manifest comment recorded above the header.
pub fn write_csv_with_manifest(
    path: &Path,
    manifest: Option<&str>,
    columns: &[(&str, &[f64])],
) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::arg("csv needs at least one column".to_string()));
    }
    let rows = columns[0].1.len();
    for (name, col) in columns {
        if col.len() != rows {
            return Err(Error::arg(format!(
                "column '{}' has {} rows, expected {}",
                name,
                col.len(),
                rows
            )));
        }
    }
    let mut out = String::new();
    if let Some(m) = manifest {
        out.push_str("# ");
        out.push_str(m);
        out.push('\n');
    }
    let names: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..rows {
        for (i, (_, col)) in columns.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", col[r]));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parse a CSV written by [`write_csv`], skipping `#` comment lines.
/// Returns the header names and per-column values.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::arg("csv file has no header".to_string()))?;
    let names: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::arg(format!(
                "csv row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                names.len()
            )));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::arg(format!("unparsable csv value '{field}'")))?;
            columns[c].push(v);
        }
    }
    Ok((names, columns))
}

#[cfg(test)]
mod tests;
