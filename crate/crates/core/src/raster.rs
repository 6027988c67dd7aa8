//! Image containers and PGM encoding.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PGM: {0}")]
    Malformed(String),
}

/// Per-pixel optical-axis depth (mm). Invalid pixels hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depths: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, depths: vec![0.0; width * height], valid: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let idx = v * self.width + u;
        self.valid[idx].then(|| self.depths[idx])
    }

    pub fn set(&mut self, u: usize, v: usize, depth: Option<f64>) {
        let idx = v * self.width + u;
        match depth {
            Some(d) if d.is_finite() && d > 0.0 => {
                self.depths[idx] = d;
                self.valid[idx] = true;
            }
            _ => {
                self.depths[idx] = 0.0;
                self.valid[idx] = false;
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// 16-bit PGM in 0.1 mm units; 0 marks invalid pixels.
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "P5")?;
        writeln!(w, "# depth_unit_mm=0.1 invalid=0")?;
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "65535")?;
        let mut buf = Vec::with_capacity(self.depths.len() * 2);
        for (d, &ok) in self.depths.iter().zip(&self.valid) {
            let q = if ok { (d * 10.0).round().clamp(1.0, 65535.0) as u16 } else { 0 };
            buf.extend_from_slice(&q.to_be_bytes());
        }
        w.write_all(&buf)
    }
}

/// Grayscale segmentation output: 0 background, 255 crack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: u8) {
        self.data[v * self.width + u] = value;
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn write_pgm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    /// Reads a P5 or P2 PGM, rescaling deeper images to 8 bits.
    pub fn read_pgm(path: &Path) -> Result<Self, PgmError> {
        parse_pgm(&fs::read(path)?)
    }
}

/// Binary image; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Foreground pixels as `(x, y)` in row-major order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        (0..self.height).flat_map(|y| (0..self.width).map(move |x| (x, y))).filter(|&(x, y)| self.get(x, y)).collect()
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (x, y) = ((idx % self.width) as i64, (idx / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get_signed(nx, ny) {
                            let n = ny as usize * self.width + nx as usize;
                            if !seen[n] {
                                seen[n] = true;
                                stack.push(n);
                            }
                        }
                    }
                }
            }
        }
        count
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<MaskImage, PgmError> {
    let mut pos = 0;
    let mut token = || -> Result<String, PgmError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Malformed("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| PgmError::Malformed(format!("bad number {s:?}")));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::Malformed(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval).min(255) as u8;
    let data = match magic.as_str() {
        "P5" => {
            // Exactly one whitespace byte separates the header from raster data.
            let body = &bytes[(pos + 1).min(bytes.len())..];
            let bpp = if maxval > 255 { 2 } else { 1 };
            if body.len() < n * bpp {
                return Err(PgmError::Malformed("truncated raster".into()));
            }
            (0..n)
                .map(|k| {
                    let v = if bpp == 2 {
                        u16::from_be_bytes([body[2 * k], body[2 * k + 1]]) as usize
                    } else {
                        body[k] as usize
                    };
                    scale(v.min(maxval))
                })
                .collect()
        }
        "P2" => {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(scale(num(token()?)?.min(maxval)));
            }
            out
        }
        other => return Err(PgmError::Malformed(format!("unsupported magic {other:?}"))),
    };
    Ok(MaskImage { width, height, data })
}
