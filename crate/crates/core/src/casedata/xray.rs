//! Grayscale X-ray images: preprocessing, anonymization, PGM/PNG I/O, and a
//! synthetic hand-radiograph generator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::{seeded_rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Laterality {
    L,
    R,
    None,
}

impl Laterality {
    pub fn as_str(self) -> &'static str {
        match self {
            Laterality::L => "L",
            Laterality::R => "R",
            Laterality::None => "none",
        }
    }

    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "L" | "l" => Laterality::L,
            "R" | "r" => Laterality::R,
            _ => Laterality::None,
        }
    }
}

/// `H×W×1` image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XrayImage {
    pixels: Tensor,
    pub laterality: Laterality,
    pub source_id: String,
}

/// Axis-aligned pixel rectangle; zero height or width is the empty rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl XrayImage {
    pub fn new(pixels: Tensor, laterality: Laterality, source_id: impl Into<String>) -> Result<Self> {
        let (h, w, c) = pixels.dims3()?;
        if h == 0 || w == 0 || c != 1 {
            return Err(Error::validation(format!(
                "an X-ray must be H×W×1 with H, W > 0, got {h}×{w}×{c}"
            )));
        }
        if pixels.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("pixel values must lie in [0, 1]"));
        }
        Ok(XrayImage {
            pixels,
            laterality,
            source_id: source_id.into(),
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        source_id: impl Into<String>,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        XrayImage::new(Tensor::new(vec![height, width, 1], data)?, Laterality::None, source_id)
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels.data()[y * self.width() + x]
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.data().iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// Centered crop matching the aspect ratio of `target` (rows, cols), as
/// `(top, left, height, width)` in source pixels.
pub fn crop_window(src_h: usize, src_w: usize, target: (usize, usize)) -> Rect {
    let (th, tw) = target;
    // compare src_h/src_w with th/tw without division
    let (ch, cw) = if src_h * tw > th * src_w {
        let ch = ((src_w * th) as f64 / tw as f64).round() as usize;
        (ch.clamp(1, src_h), src_w)
    } else {
        let cw = ((src_h * tw) as f64 / th as f64).round() as usize;
        (src_h, cw.clamp(1, src_w))
    };
    Rect {
        top: (src_h - ch) / 2,
        left: (src_w - cw) / 2,
        height: ch,
        width: cw,
    }
}

/// Aspect-preserving center crop followed by bilinear resize to `target`.
pub fn preprocess_xray(image: &XrayImage, target: (usize, usize)) -> Result<XrayImage> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::validation("target size must be positive"));
    }
    let (h, w) = (image.height(), image.width());
    if h < 2 || w < 2 {
        return Err(Error::validation(format!("cannot resample a degenerate {h}×{w} image")));
    }
    let win = crop_window(h, w, target);
    let sy = win.height as f64 / th as f64;
    let sx = win.width as f64 / tw as f64;
    let mut out = Vec::with_capacity(th * tw);
    for y in 0..th {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (win.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(win.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..tw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (win.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(win.width - 1);
            let tx = fx - x0 as f64;
            let p = |yy: usize, xx: usize| image.get(win.top + yy, win.left + xx);
            let top = p(y0, x0) * (1.0 - tx) + p(y0, x1) * tx;
            let bottom = p(y1, x0) * (1.0 - tx) + p(y1, x1) * tx;
            out.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
        }
    }
    XrayImage::new(
        Tensor::new(vec![th, tw, 1], out)?,
        image.laterality,
        image.source_id.clone(),
    )
}

/// Zeroes `region`; every other pixel is left untouched.
pub fn anonymize_image(image: &XrayImage, region: Rect) -> Result<XrayImage> {
    if region.top + region.height > image.height() || region.left + region.width > image.width() {
        return Err(Error::validation(format!(
            "region {region:?} exceeds the {}×{} image",
            image.height(),
            image.width()
        )));
    }
    let mut out = image.clone();
    let w = image.width();
    let data = out.pixels.data_mut();
    for y in region.top..region.top + region.height {
        data[y * w + region.left..y * w + region.left + region.width].fill(0.0);
    }
    Ok(out)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn read_token<R: Read>(bytes: &mut std::iter::Peekable<std::io::Bytes<R>>, comments: &mut Vec<String>) -> std::io::Result<String> {
    let mut tok = String::new();
    loop {
        let b = match bytes.next() {
            Some(b) => b?,
            None => break,
        };
        if b == b'#' && tok.is_empty() {
            let mut comment = Vec::new();
            for c in bytes.by_ref() {
                let c = c?;
                if c == b'\n' {
                    break;
                }
                comment.push(c);
            }
            comments.push(String::from_utf8_lossy(&comment).trim().to_string());
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b as char);
    }
    Ok(tok)
}

/// Binary PGM (`P5`), 8- or 16-bit. A `# laterality X` comment sets the mark.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<XrayImage> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let file = File::open(path).map_err(io)?;
    let mut bytes = BufReader::new(file).bytes().peekable();
    let mut comments = Vec::new();
    let magic = read_token(&mut bytes, &mut comments).map_err(io)?;
    if magic != "P5" {
        return Err(Error::validation(format!("{}: not a binary PGM", path.display())));
    }
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        let tok = read_token(&mut bytes, &mut comments).map_err(io)?;
        *h = tok
            .parse()
            .map_err(|_| Error::validation(format!("{}: bad PGM header `{tok}`", path.display())))?;
    }
    let [w, h, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::validation(format!("{}: bad PGM maxval {maxval}", path.display())));
    }
    let wide = maxval > 255;
    let raw: Vec<u8> = bytes.collect::<std::io::Result<_>>().map_err(io)?;
    let need = w * h * if wide { 2 } else { 1 };
    if raw.len() < need {
        return Err(Error::validation(format!("{}: truncated PGM raster", path.display())));
    }
    let data = (0..w * h)
        .map(|i| {
            let v = if wide {
                u16::from_be_bytes([raw[2 * i], raw[2 * i + 1]]) as f64
            } else {
                raw[i] as f64
            };
            (v / maxval as f64).min(1.0)
        })
        .collect();
    let laterality = comments
        .iter()
        .find_map(|c| c.strip_prefix("laterality").map(Laterality::parse))
        .unwrap_or(Laterality::None);
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    XrayImage::new(Tensor::new(vec![h, w, 1], data)?, laterality, id)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &XrayImage) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut f = BufWriter::new(File::create(path).map_err(io)?);
    write!(
        f,
        "P5\n# laterality {}\n{} {}\n255\n",
        image.laterality.as_str(),
        image.width(),
        image.height()
    )
    .map_err(io)?;
    let raster: Vec<u8> = image.pixels.data().iter().map(|&v| to_u8(v)).collect();
    f.write_all(&raster).map_err(io)?;
    f.flush().map_err(io)
}

/// 8-bit grayscale PNG; laterality travels in a `laterality` text chunk.
pub fn read_png(path: impl AsRef<Path>) -> Result<XrayImage> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::validation(format!("{}: {m}", path.display()));
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!(
            "expected 8-bit grayscale, got {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let laterality = info
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == "laterality")
        .map_or(Laterality::None, |t| Laterality::parse(&t.text));
    let (w, h) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let stride = frame.line_size;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        data.extend(buf[y * stride..y * stride + w].iter().map(|&b| b as f64 / 255.0));
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    XrayImage::new(Tensor::new(vec![h, w, 1], data)?, laterality, id)
}

pub fn write_png(path: impl AsRef<Path>, image: &XrayImage) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::validation(format!("{}: {m}", path.display()));
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk("laterality".into(), image.laterality.as_str().into())
        .map_err(|e| bad(e.to_string()))?;
    let mut writer = enc.write_header().map_err(|e| bad(e.to_string()))?;
    let raster: Vec<u8> = image.pixels.data().iter().map(|&v| to_u8(v)).collect();
    writer.write_image_data(&raster).map_err(|e| bad(e.to_string()))?;
    writer.finish().map_err(|e| bad(e.to_string()))
}

/// Reads a `.pgm` or `.png` file by extension.
pub fn load_xray(path: impl AsRef<Path>) -> Result<XrayImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => read_pgm(path),
        Some("png") => read_png(path),
        _ => Err(Error::validation(format!(
            "{}: unsupported image format (expected .pgm or .png)",
            path.display()
        ))),
    }
}

/// Synthetic hand radiograph whose texture encodes `bone_age_months`.
///
/// Background intensity rises linearly with bone age (`0.15 + 0.6·b/240`), and
/// `1 + ⌊b/48⌋` bright ossification blobs are scattered over it, plus
/// ±0.03 uniform noise. Both proxies are monotone in bone age.
pub fn synthetic_hand_xray(bone_age_months: f64, size: (usize, usize), seed: u64) -> Result<XrayImage> {
    let (h, w) = size;
    if h == 0 || w == 0 {
        return Err(Error::validation("image size must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let b = bone_age_months.clamp(0.0, 240.0);
    let base = 0.15 + 0.6 * b / 240.0;
    let blobs = 1 + (b / 48.0).floor() as usize;
    let radius = (h.min(w) as f64 / 10.0).max(1.0);
    let centers: Vec<(f64, f64)> = (0..blobs)
        .map(|_| (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64)))
        .collect();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut v = base + rng.gen_range(-0.03..0.03);
            for &(cy, cx) in &centers {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                if dy * dy + dx * dx <= radius * radius {
                    v += 0.15;
                }
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    let lat = if rng.gen_bool(0.5) { Laterality::L } else { Laterality::R };
    XrayImage::new(Tensor::new(vec![h, w, 1], data)?, lat, format!("synthetic-{seed}"))
}
