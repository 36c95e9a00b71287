//! Image file I/O: PFM (lossless float), Radiance RGBE (`.hdr`) and 8-bit PNG.
//!
//! Readers never panic on malformed input; every failure is an
//! [`Error::Format`] carrying the byte offset where parsing stopped.

use std::path::Path;

use crate::error::{format_error, Error, Result};
use crate::image::{BinaryMask, Image};

/// Upper bound on `width * height` accepted by the readers.
pub const MAX_PIXELS: usize = 1 << 24;
const MAX_HEADER: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Rgbe,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("pfm") => Ok(Self::Pfm),
            Some("hdr") | Some("rgbe") | Some("pic") => Ok(Self::Rgbe),
            Some("png") => Ok(Self::Png),
            _ => Err(Error::InvalidArgument(format!(
                "{}: unsupported extension (expected .pfm, .hdr or .png)",
                path.display()
            ))),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn decode(bytes: &[u8], format: ImageFormat) -> Result<Image> {
    match format {
        ImageFormat::Pfm => decode_pfm(bytes),
        ImageFormat::Rgbe => decode_rgbe(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

pub fn encode(image: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Pfm => Ok(encode_pfm(image)),
        ImageFormat::Rgbe => Ok(encode_rgbe(image)),
        ImageFormat::Png => encode_png(image),
    }
}

/// Reads an image, choosing the format from the extension.
pub fn read_image(path: &Path) -> Result<Image> {
    let format = ImageFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes, format)
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let bytes = encode(image, ImageFormat::from_path(path)?)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Mask from an image: a pixel is set when its RGB mean is at least 0.5.
pub fn image_to_mask(image: &Image) -> BinaryMask {
    BinaryMask::from_fn(image.width(), image.height(), |u, v| image.intensity(u, v) >= 0.5)
}

pub fn mask_to_image(mask: &BinaryMask) -> Image {
    Image::from_fn(mask.width(), mask.height(), |u, v| [if mask.get(u, v) { 1.0 } else { 0.0 }; 3])
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(image_to_mask(&read_image(path)?))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_image(path, &mask_to_image(mask))
}

fn check_dims(fmt: &'static str, offset: usize, w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(format_error(fmt, offset, format!("empty image {w}x{h}")));
    }
    match w.checked_mul(h) {
        Some(n) if n <= MAX_PIXELS => Ok(()),
        _ => Err(format_error(fmt, offset, format!("{w}x{h} exceeds the {MAX_PIXELS} pixel limit"))),
    }
}

// ---- PFM ----

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    fmt: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], fmt: &'static str) -> Self {
        Self { bytes, pos: 0, fmt }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        format_error(self.fmt, self.pos, msg)
    }

    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next whitespace-delimited ASCII token.
    fn token(&mut self) -> Result<&'a str> {
        self.skip_whitespace();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.pos - start < 64
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| format_error(self.fmt, start, "non-ASCII header token"))
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| self.err("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut c = Cursor::new(bytes, "pfm");
    let channels = match c.token()? {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(format_error("pfm", 0, format!("bad magic {other:?}")));
        }
    };
    let dim = |c: &mut Cursor| -> Result<usize> {
        let start = c.pos;
        let t = c.token()?;
        t.parse::<usize>()
            .map_err(|_| format_error("pfm", start, format!("bad dimension {t:?}")))
    };
    let w = dim(&mut c)?;
    let h = dim(&mut c)?;
    check_dims("pfm", c.pos, w, h)?;
    let scale_at = c.pos;
    let t = c.token()?;
    let scale: f64 = t
        .parse()
        .map_err(|_| format_error("pfm", scale_at, format!("bad scale {t:?}")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(format_error("pfm", scale_at, "scale must be finite and non-zero"));
    }
    let little = scale < 0.0;
    // Exactly one whitespace byte separates the header from the payload.
    if !c.byte()?.is_ascii_whitespace() {
        return Err(format_error("pfm", c.pos - 1, "header must end with whitespace"));
    }
    let payload_at = c.pos;
    let payload = c.take(w * h * channels * 4)?;
    let mut data = vec![0.0f64; w * h * 3];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        if !x.is_finite() {
            return Err(format_error("pfm", payload_at + 4 * i, "non-finite sample"));
        }
        let px = i / channels;
        // Rows are stored bottom to top.
        let (u, row) = (px % w, px / w);
        let v = h - 1 - row;
        let base = (v * w + u) * 3;
        if channels == 3 {
            data[base + i % 3] = x as f64;
        } else {
            data[base..base + 3].fill(x as f64);
        }
    }
    Image::from_vec(w, h, data)
}

/// Little-endian PFM (scale -1). Lossless for values representable in f32.
pub fn encode_pfm(image: &Image) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for v in (0..h).rev() {
        for u in 0..w {
            for x in image.get(u, v) {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    out
}

// ---- Radiance RGBE ----

/// `m * 2^(e - 136)`; exponent 0 encodes black.
pub fn rgbe_to_float(rgbe: [u8; 4]) -> [f64; 3] {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(rgbe[3] as i32 - 136);
    [rgbe[0] as f64 * f, rgbe[1] as f64 * f, rgbe[2] as f64 * f]
}

pub fn float_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let rgb = rgb.map(|x| if x.is_finite() { x.max(0.0) } else { 0.0 });
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if v < 1e-32 {
        return [0; 4];
    }
    // v = m * 2^e with m in [0.5, 1).
    let mut e = v.log2().floor() as i32 + 1;
    let mut m = v / 2f64.powi(e);
    if m >= 1.0 {
        m /= 2.0;
        e += 1;
    } else if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    if e + 128 > 255 {
        return [255, 255, 255, 255];
    }
    if e + 128 < 1 {
        return [0; 4];
    }
    let scale = m * 256.0 / v;
    let q = |x: f64| (x * scale).min(255.0) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

fn read_line<'a>(c: &mut Cursor<'a>) -> Result<&'a [u8]> {
    let start = c.pos;
    while c.pos < c.bytes.len() && c.bytes[c.pos] != b'\n' {
        c.pos += 1;
        if c.pos - start > MAX_HEADER {
            return Err(c.err("header line too long"));
        }
    }
    if c.pos >= c.bytes.len() {
        return Err(c.err("unterminated header line"));
    }
    c.pos += 1;
    Ok(&c.bytes[start..c.pos - 1])
}

pub fn decode_rgbe(bytes: &[u8]) -> Result<Image> {
    let mut c = Cursor::new(bytes, "rgbe");
    let first = read_line(&mut c)?;
    if !(first.starts_with(b"#?RADIANCE") || first.starts_with(b"#?RGBE")) {
        return Err(format_error("rgbe", 0, "missing #?RADIANCE signature"));
    }
    loop {
        let at = c.pos;
        let line = read_line(&mut c)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix(b"FORMAT=") {
            if fmt != b"32-bit_rle_rgbe" {
                return Err(format_error("rgbe", at, "only 32-bit_rle_rgbe is supported"));
            }
        }
        if c.pos > MAX_HEADER {
            return Err(c.err("header too long"));
        }
    }
    let res_at = c.pos;
    let res = read_line(&mut c)?;
    let res = std::str::from_utf8(res).map_err(|_| format_error("rgbe", res_at, "non-ASCII resolution line"))?;
    let parts: Vec<&str> = res.split_ascii_whitespace().collect();
    let (h, w) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|_| format_error("rgbe", res_at, "bad height"))?,
            w.parse::<usize>().map_err(|_| format_error("rgbe", res_at, "bad width"))?,
        ),
        _ => {
            return Err(format_error("rgbe", res_at, format!("unsupported resolution line {res:?}")));
        }
    };
    check_dims("rgbe", res_at, w, h)?;
    let mut data = Vec::new();
    let mut scan = vec![[0u8; 4]; w];
    for _ in 0..h {
        read_scanline(&mut c, &mut scan)?;
        for p in &scan {
            data.extend_from_slice(&rgbe_to_float(*p));
        }
    }
    Image::from_vec(w, h, data)
}

fn read_scanline(c: &mut Cursor, scan: &mut [[u8; 4]]) -> Result<()> {
    let w = scan.len();
    let rest = &c.bytes[c.pos..];
    let new_rle = (8..=0x7fff).contains(&w) && rest.len() >= 4 && rest[0] == 2 && rest[1] == 2 && rest[2] & 0x80 == 0;
    if new_rle {
        let at = c.pos;
        let hdr = c.take(4)?;
        if ((hdr[2] as usize) << 8 | hdr[3] as usize) != w {
            return Err(format_error("rgbe", at, "scanline width mismatch"));
        }
        for ch in 0..4 {
            let mut u = 0;
            while u < w {
                let at = c.pos;
                let count = c.byte()? as usize;
                if count > 128 {
                    let n = count - 128;
                    if u + n > w {
                        return Err(format_error("rgbe", at, "run overflows scanline"));
                    }
                    let val = c.byte()?;
                    for p in &mut scan[u..u + n] {
                        p[ch] = val;
                    }
                    u += n;
                } else {
                    if count == 0 || u + count > w {
                        return Err(format_error("rgbe", at, "bad literal count"));
                    }
                    let lit = c.take(count)?;
                    for (p, &b) in scan[u..u + count].iter_mut().zip(lit) {
                        p[ch] = b;
                    }
                    u += count;
                }
            }
        }
        return Ok(());
    }
    // Flat pixels, possibly with old-style (1,1,1,n) repeat markers.
    let mut u = 0;
    let mut shift = 0;
    while u < w {
        let at = c.pos;
        let px = c.take(4)?;
        let px = [px[0], px[1], px[2], px[3]];
        if px[0] == 1 && px[1] == 1 && px[2] == 1 {
            if u == 0 || shift > 16 {
                return Err(format_error("rgbe", at, "repeat marker without a previous pixel"));
            }
            let n = (px[3] as usize) << shift;
            if u + n > w {
                return Err(format_error("rgbe", at, "repeat overflows scanline"));
            }
            let prev = scan[u - 1];
            scan[u..u + n].fill(prev);
            u += n;
            shift += 8;
        } else {
            scan[u] = px;
            u += 1;
            shift = 0;
        }
    }
    Ok(())
}

/// Writes new-style run-length scanlines when the width allows, flat pixels otherwise.
pub fn encode_rgbe(image: &Image) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (8..=0x7fff).contains(&w);
    for v in 0..h {
        let scan: Vec<[u8; 4]> = (0..w).map(|u| float_to_rgbe(image.get(u, v))).collect();
        if !rle {
            scan.iter().for_each(|p| out.extend_from_slice(p));
            continue;
        }
        out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
        for ch in 0..4 {
            let vals: Vec<u8> = scan.iter().map(|p| p[ch]).collect();
            rle_channel(&vals, &mut out);
        }
    }
    out
}

fn rle_channel(vals: &[u8], out: &mut Vec<u8>) {
    const MIN_RUN: usize = 4;
    let run_len = |i: usize| vals[i..].iter().take(127).take_while(|&&x| x == vals[i]).count();
    let mut i = 0;
    while i < vals.len() {
        let r = run_len(i);
        if r >= MIN_RUN {
            out.push(128 + r as u8);
            out.push(vals[i]);
            i += r;
            continue;
        }
        let start = i;
        while i < vals.len() && i - start < 128 && run_len(i) < MIN_RUN {
            i += 1;
        }
        out.push((i - start) as u8);
        out.extend_from_slice(&vals[start..i]);
    }
}

// ---- PNG ----

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let perr = |e: png::DecodingError| format_error("png", 0, e.to_string());
    let mut decoder = png::Decoder::new_with_limits(
        std::io::Cursor::new(bytes),
        png::Limits { bytes: MAX_PIXELS * 4 },
    );
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(perr)?;
    {
        let info = reader.info();
        check_dims("png", 16, info.width as usize, info.height as usize)?;
        if info.bit_depth == png::BitDepth::Sixteen {
            return Err(format_error("png", 24, "16-bit PNG is not supported"));
        }
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_error("png", 0, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(perr)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(format_error("png", 0, "palette was not expanded")),
    };
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(format_error("png", 24, format!("unsupported bit depth {:?}", frame.bit_depth)));
    }
    let stride = frame.line_size;
    Ok(Image::from_fn(w, h, |u, v| {
        let p = &buf[v * stride + u * channels..];
        let g = |i: usize| p[i] as f64 / 255.0;
        if channels < 3 {
            [g(0); 3]
        } else {
            [g(0), g(1), g(2)]
        }
    }))
}

/// 8-bit RGB; values are clamped to [0, 1] and stored without a transfer curve.
pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let (w, h) = image.dims();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
        let data: Vec<u8> = image
            .data()
            .iter()
            .map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |u, v| [u as f64 * 0.37, v as f64 * 1.5 + 0.125, ((u * 7 + v) % 5) as f64 * 3.0])
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        let img = sample(9, 5);
        assert_eq!(decode_pfm(&encode_pfm(&img)).unwrap(), img.map(|x| x as f32 as f64));
    }

    #[test]
    fn pfm_hand_bytes() {
        let mut le = b"PF\n1 1\n-1.0\n".to_vec();
        for x in [1.0f32, 0.5, 0.25] {
            le.extend_from_slice(&x.to_le_bytes());
        }
        assert_eq!(decode_pfm(&le).unwrap().get(0, 0), [1.0, 0.5, 0.25]);
        let mut be = b"PF\n1 1\n1.0\n".to_vec();
        for x in [1.0f32, 0.5, 0.25] {
            be.extend_from_slice(&x.to_be_bytes());
        }
        assert_eq!(decode_pfm(&be).unwrap().get(0, 0), [1.0, 0.5, 0.25]);
    }

    #[test]
    fn pfm_bottom_up_rows() {
        let mut bytes = b"Pf\n1 2\n-1\n".to_vec();
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.extend_from_slice(&7.0f32.to_le_bytes());
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [7.0; 3]);
        assert_eq!(img.get(0, 1), [2.0; 3]);
    }

    #[test]
    fn pfm_errors_have_offsets() {
        let good = encode_pfm(&sample(4, 3));
        match decode_pfm(&good[..good.len() - 2]) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("{other:?}"),
        }
        assert!(decode_pfm(b"P6\n1 1\n255\n").is_err());
        assert!(decode_pfm(b"PF\n100000 100000\n-1\n").is_err());
        assert!(decode_pfm(b"PF\n1 1\n0\n............").is_err());
    }

    #[test]
    fn rgbe_reference_pixel() {
        assert_eq!(rgbe_to_float([128, 128, 128, 129]), [1.0, 1.0, 1.0]);
        assert_eq!(float_to_rgbe([1.0, 1.0, 1.0]), [128, 128, 128, 129]);
        assert_eq!(rgbe_to_float([7, 7, 7, 0]), [0.0; 3]);
    }

    #[test]
    fn rgbe_round_trip_within_precision() {
        for w in [5, 40] {
            let img = sample(w, 6);
            let back = decode_rgbe(&encode_rgbe(&img)).unwrap();
            for (a, b) in img.data().chunks(3).zip(back.data().chunks(3)) {
                let m = a.iter().cloned().fold(0.0, f64::max);
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() <= m / 128.0 + 1e-12, "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn rgbe_old_style_repeat() {
        let mut bytes = b"#?RADIANCE\n\n-Y 1 +X 4\n".to_vec();
        bytes.extend_from_slice(&[128, 64, 32, 129, 1, 1, 1, 3]);
        let img = decode_rgbe(&bytes).unwrap();
        for u in 0..4 {
            assert_eq!(img.get(u, 0), [1.0, 0.5, 0.25]);
        }
        bytes.truncate(bytes.len() - 4);
        assert!(decode_rgbe(&bytes).is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = Image::from_fn(6, 3, |u, v| [u as f64 / 5.0, v as f64 / 2.0, 0.5]);
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(decode_png(b"\x89PNG\r\n\x1a\nxx").is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(ImageFormat::from_path(Path::new("a/b.HDR")).unwrap(), ImageFormat::Rgbe);
        assert!(ImageFormat::from_path(Path::new("a.exr")).is_err());
    }
}
