//! On-disk formats: PFM and 16-bit PNG scalar maps, 8/16-bit PNG color
//! images, ASCII PLY point clouds, and JSON/TOML records.

use std::fs;
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::Path;

use roadgamma::{FieldRole, FittedPlane, PlaneModel, PointCloud, RelativePose, RgbImage, ScalarField};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Meters per unit of the 16-bit PNG depth encoding.
pub const PNG_DEPTH_SCALE: f64 = 256.0;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

// ---------------------------------------------------------------- PFM

/// Grayscale PFM (`Pf`), little-endian (negative scale), rows stored bottom
/// to top. Invalid pixels are written as NaN.
pub fn encode_pfm(width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(data.len() * 4);
    for row in (0..height).rev() {
        for x in &data[row * width..(row + 1) * width] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Parses a grayscale PFM into top-to-bottom rows. Either byte order is
/// accepted.
pub fn decode_pfm(path: &Path, bytes: &[u8]) -> CliResult<(usize, usize, Vec<f32>)> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> CliResult<(String, u64)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::format(path, start as u64, format!("missing {what}")));
        }
        let s = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| CliError::format(path, start as u64, format!("non-ASCII {what}")))?;
        Ok((s.to_string(), start as u64))
    };
    let (magic, off) = token("magic")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(CliError::format(path, off, "color PFM is not a scalar map")),
        _ => return Err(CliError::format(path, off, format!("bad magic {magic:?}"))),
    }
    let mut dim = |what: &str| -> CliResult<usize> {
        let (s, off) = token(what)?;
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::format(path, off, format!("bad {what} {s:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (s, off) = token("scale")?;
    let scale: f64 = s
        .parse()
        .ok()
        .filter(|x: &f64| x.is_finite() && *x != 0.0)
        .ok_or_else(|| CliError::format(path, off, format!("bad scale {s:?}")))?;
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CliError::format(path, pos as u64, "header not terminated"));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| CliError::format(path, off, "dimensions overflow"))?;
    let need = n * 4;
    if bytes.len() - pos != need {
        return Err(CliError::format(
            path,
            pos as u64,
            format!("expected {need} raster bytes, found {}", bytes.len() - pos),
        ));
    }
    let raster = &bytes[pos..];
    let mut data = vec![0.0f32; n];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (height - 1 - i / width, i % width);
        data[row * width + col] = x;
    }
    Ok((width, height, data))
}

// ---------------------------------------------------------- PNG depth

pub fn encode_png16(path: &Path, field: &ScalarField) -> CliResult<Vec<u8>> {
    let (w, h) = field.dims();
    let mut raw = Vec::with_capacity(w * h * 2);
    for v in 0..h {
        for u in 0..w {
            let code = match field.get(u, v) {
                None => 0u16,
                Some(x) => {
                    let q = (x * PNG_DEPTH_SCALE).round();
                    if !(q >= 0.0 && q <= u16::MAX as f64) {
                        return Err(CliError::Data(format!(
                            "{}: value {x} at ({u}, {v}) does not fit the 16-bit encoding",
                            path.display()
                        )));
                    }
                    // 0 is reserved for invalid pixels
                    (q as u16).max(1)
                }
            };
            raw.extend_from_slice(&code.to_be_bytes());
        }
    }
    encode_png(path, w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen, &raw)
}

fn encode_png(
    path: &Path,
    w: usize,
    h: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    raw: &[u8],
) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    let err = |e: png::EncodingError| CliError::Data(format!("{}: {e}", path.display()));
    let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(err)?;
    writer.write_image_data(raw).map_err(err)?;
    writer.finish().map_err(err)?;
    Ok(out)
}

struct DecodedPng {
    width: usize,
    height: usize,
    channels: usize,
    sixteen: bool,
    buf: Vec<u8>,
}

impl DecodedPng {
    fn sample(&self, i: usize, c: usize) -> u16 {
        let k = i * self.channels + c;
        if self.sixteen {
            u16::from_be_bytes([self.buf[2 * k], self.buf[2 * k + 1]])
        } else {
            self.buf[k] as u16
        }
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> CliResult<DecodedPng> {
    let fmt = |e: png::DecodingError| CliError::format(path, 0, e.to_string());
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(fmt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| CliError::format(path, 0, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    buf.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        channels: info.color_type.samples(),
        sixteen: info.bit_depth == png::BitDepth::Sixteen,
        buf,
    })
}

// -------------------------------------------------------- scalar maps

/// Reads a scalar map from `.pfm` or 16-bit `.png`. NaN/inf (PFM) and 0
/// (PNG) mark invalid pixels; non-positive depths are treated as invalid.
pub fn read_field(path: &Path, role: FieldRole) -> CliResult<ScalarField> {
    let bytes = read_bytes(path)?;
    let (w, h, data): (usize, usize, Vec<f64>) = match extension(path).as_str() {
        "pfm" => {
            let (w, h, d) = decode_pfm(path, &bytes)?;
            (w, h, d.into_iter().map(f64::from).collect())
        }
        "png" => {
            let img = decode_png(path, &bytes)?;
            if img.channels != 1 || !img.sixteen {
                return Err(CliError::format(path, 0, "depth PNG must be 16-bit grayscale"));
            }
            let n = img.width * img.height;
            let d = (0..n)
                .map(|i| match img.sample(i, 0) {
                    0 => f64::NAN,
                    c => c as f64 / PNG_DEPTH_SCALE,
                })
                .collect();
            (img.width, img.height, d)
        }
        other => return Err(CliError::Usage(format!("{}: unsupported map format {other:?}", path.display()))),
    };
    let valid: Vec<bool> = data
        .iter()
        .map(|x| x.is_finite() && (role != FieldRole::Depth || *x > 0.0))
        .collect();
    let data = data.into_iter().zip(&valid).map(|(x, &ok)| if ok { x } else { 0.0 }).collect();
    Ok(ScalarField::with_validity(w, h, role, data, valid)?)
}

pub fn encode_field(path: &Path, field: &ScalarField) -> CliResult<Vec<u8>> {
    match extension(path).as_str() {
        "pfm" => {
            let (w, h) = field.dims();
            let data: Vec<f32> = (0..h)
                .flat_map(|v| (0..w).map(move |u| (u, v)))
                .map(|(u, v)| field.get(u, v).map_or(f32::NAN, |x| x as f32))
                .collect();
            Ok(encode_pfm(w, h, &data))
        }
        "png" => encode_png16(path, field),
        other => Err(CliError::Usage(format!("{}: unsupported map format {other:?}", path.display()))),
    }
}

pub fn write_field(path: &Path, field: &ScalarField) -> CliResult<()> {
    write_atomic(path, &encode_field(path, field)?)
}

// ------------------------------------------------------- color images

/// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA) scaled to [0, 1].
/// Fully transparent pixels are invalid.
pub fn read_rgb(path: &Path) -> CliResult<RgbImage> {
    let bytes = read_bytes(path)?;
    if extension(path) != "png" {
        return Err(CliError::Usage(format!("{}: color images must be PNG", path.display())));
    }
    let img = decode_png(path, &bytes)?;
    let max = if img.sixteen { 65535.0 } else { 255.0 };
    let n = img.width * img.height;
    let mut data = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let s = |c: usize| img.sample(i, c) as f32 / max;
        let (rgb, alpha) = match img.channels {
            1 => ([s(0); 3], 1.0),
            2 => ([s(0); 3], s(1)),
            3 => ([s(0), s(1), s(2)], 1.0),
            4 => ([s(0), s(1), s(2)], s(3)),
            c => return Err(CliError::format(path, 0, format!("unsupported channel count {c}"))),
        };
        data.push(rgb);
        valid.push(alpha > 0.0);
    }
    Ok(RgbImage::with_validity(img.width, img.height, data, valid)?)
}

/// 8-bit RGB PNG; invalid pixels are written black.
pub fn encode_rgb(path: &Path, img: &RgbImage) -> CliResult<Vec<u8>> {
    let (w, h) = img.dims();
    let mut raw = Vec::with_capacity(w * h * 3);
    for v in 0..h {
        for u in 0..w {
            let px = if img.is_valid(u, v) { img.pixel(u, v) } else { [0.0; 3] };
            raw.extend(px.iter().map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
    }
    encode_png(path, w, h, png::ColorType::Rgb, png::BitDepth::Eight, &raw)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> CliResult<()> {
    write_atomic(path, &encode_rgb(path, img)?)
}

// ---------------------------------------------------------------- PLY

pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\ncomment roadgamma point cloud\n");
    s.push_str(&format!("element vertex {}\n", cloud.points.len()));
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        // shortest representation that parses back to the same f32
        s.push_str(&format!("{} {} {}", p[0], p[1], p[2]));
        if let Some(cs) = &cloud.colors {
            let c = cs[i].map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8);
            s.push_str(&format!(" {} {} {}", c[0], c[1], c[2]));
        }
        s.push('\n');
    }
    s.into_bytes()
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> CliResult<()> {
    if cloud.points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CliError::Data(format!("{}: point cloud has non-finite coordinates", path.display())));
    }
    write_atomic(path, &encode_ply(cloud))
}

struct Lines<'a> {
    reader: BufReader<&'a [u8]>,
    offset: u64,
}

impl Lines<'_> {
    /// Byte offset of the line read into `line`, or `None` at end of file.
    fn next(&mut self, path: &Path, line: &mut String) -> CliResult<Option<u64>> {
        line.clear();
        let at = self.offset;
        let n = self.reader.read_line(line).map_err(|e| CliError::io(path, e))?;
        self.offset += n as u64;
        Ok((n > 0).then_some(at))
    }
}

/// Reads back ASCII PLY files with `x y z` and optional `red green blue`
/// vertex properties.
pub fn read_ply(path: &Path) -> CliResult<PointCloud> {
    let bytes = read_bytes(path)?;
    let mut lines = Lines { reader: BufReader::new(bytes.as_slice()), offset: 0 };
    let mut line = String::new();
    let mut next = |line: &mut String| lines.next(path, line);
    if next(&mut line)?.is_none() || line.trim_end() != "ply" {
        return Err(CliError::format(path, 0, "missing ply magic"));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let at = next(&mut line)?.ok_or_else(|| CliError::format(path, bytes.len() as u64, "unterminated header"))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => {}
            ["format", f, ..] => return Err(CliError::format(path, at, format!("unsupported format {f}"))),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| CliError::format(path, at, "bad vertex count"))?)
            }
            ["element", ..] => return Err(CliError::format(path, at, "only vertex elements are supported")),
            ["property", _, name] => props.push(name.to_string()),
            _ => return Err(CliError::format(path, at, format!("unexpected header line {:?}", line.trim_end()))),
        }
    }
    let count = count.ok_or_else(|| CliError::format(path, 0, "no vertex element"))?;
    let idx = |name: &str| props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (idx("x"), idx("y"), idx("z")) else {
        return Err(CliError::format(path, 0, "vertex lacks x/y/z"));
    };
    let color_idx = match (idx("red"), idx("green"), idx("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut colors = color_idx.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let at = next(&mut line)?.ok_or_else(|| CliError::format(path, bytes.len() as u64, "truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::format(path, at, "non-numeric vertex value"))?;
        if vals.len() != props.len() {
            return Err(CliError::format(path, at, format!("expected {} values", props.len())));
        }
        points.push([vals[ix] as f32, vals[iy] as f32, vals[iz] as f32]);
        if let (Some(cs), Some(ci)) = (colors.as_mut(), color_idx) {
            cs.push(ci.map(|i| (vals[i] / 255.0) as f32));
        }
    }
    Ok(PointCloud { points, colors })
}

// ------------------------------------------------------------ records

fn parse_record<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    if extension(path) == "json" {
        serde_json::from_str(text).map_err(|e| CliError::format(path, 0, e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| {
            let off = e.span().map_or(0, |s| s.start as u64);
            CliError::format(path, off, e.message().to_string())
        })
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Pose file (`.json` or `.toml`): `rotation` as three rows and
/// `translation`, mapping target-camera points into the source camera.
pub fn read_pose(path: &Path) -> CliResult<RelativePose> {
    parse_record(path, &read_text(path)?)
}

/// Plane file: either `{normal, camera_height}` or a fitted-plane record
/// `{normal, offset, ...}` as written by `fit-plane`.
pub fn read_plane(path: &Path) -> CliResult<PlaneModel> {
    let text = read_text(path)?;
    match parse_record::<PlaneModel>(path, &text) {
        Ok(p) => Ok(p),
        Err(first) => match parse_record::<FittedPlane>(path, &text) {
            Ok(f) => Ok(f.to_plane_model()?),
            Err(_) => Err(first),
        },
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("records serialize")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = to_json(value);
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_layout() {
        let bytes = encode_pfm(2, 1, &[1.0, 2.0]);
        assert!(bytes.starts_with(b"Pf\n2 1\n-1.0\n"));
        assert_eq!(bytes.len(), 12 + 8);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
    }

    #[test]
    fn pfm_rows_bottom_first() {
        let bytes = encode_pfm(1, 2, &[1.0, 2.0]);
        assert_eq!(&bytes[12..16], &2.0f32.to_le_bytes());
        let (_, _, d) = decode_pfm(Path::new("x.pfm"), &bytes).unwrap();
        assert_eq!(d, vec![1.0, 2.0]);
    }

    #[test]
    fn pfm_big_endian_accepted() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.5f32.to_be_bytes());
        assert_eq!(decode_pfm(Path::new("x.pfm"), &bytes).unwrap().2, vec![3.5]);
    }

    #[test]
    fn pfm_errors_carry_offsets() {
        let p = Path::new("x.pfm");
        match decode_pfm(p, b"P6\n1 1\n-1.0\n0000") {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        match decode_pfm(p, b"Pf\n1 x\n-1.0\n0000") {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match decode_pfm(p, b"Pf\n1 1\n-1.0\n00") {
            Err(CliError::Format { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ply_empty_and_colored_headers() {
        let empty = String::from_utf8(encode_ply(&PointCloud::default())).unwrap();
        assert!(empty.contains("element vertex 0\n"));
        let cloud = PointCloud { points: vec![[0.0, 1.0, 2.0]], colors: Some(vec![[1.0, 0.5, 0.0]]) };
        let text = String::from_utf8(encode_ply(&cloud)).unwrap();
        assert!(text.contains("property uchar red\nproperty uchar green\nproperty uchar blue\n"));
        assert!(text.ends_with("0 1 2 255 128 0\n"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn pfm_bytes_round_trip(w in 1usize..9, h in 1usize..9, seed in proptest::collection::vec(-1e6f32..1e6, 81)) {
                let data: Vec<f32> = seed[..w * h].to_vec();
                let bytes = encode_pfm(w, h, &data);
                let (w2, h2, back) = decode_pfm(Path::new("x.pfm"), &bytes).unwrap();
                prop_assert_eq!((w2, h2), (w, h));
                prop_assert!(back.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
                prop_assert_eq!(encode_pfm(w, h, &back), bytes);
            }

            #[test]
            fn png_depth_within_quantum(vals in proptest::collection::vec(0.004f64..255.0, 1..40)) {
                let n = vals.len();
                let field = ScalarField::new(n, 1, FieldRole::Depth, vals.clone()).unwrap();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("d.png");
                write_field(&path, &field).unwrap();
                let back = read_field(&path, FieldRole::Depth).unwrap();
                prop_assert_eq!(back.valid_count(), n);
                for (u, x) in vals.iter().enumerate() {
                    prop_assert!((back.get(u, 0).unwrap() - x).abs() <= 0.5 / 256.0 + 1e-12);
                }
            }
        }
    }
}
