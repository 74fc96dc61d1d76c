use std::fs;
use std::io::Write;
use std::path::Path;

use super::DataError;
use crate::geometry::{Point3, PointCloud};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    XyzText,
    PlyBinary,
}

impl CloudFormat {
    /// Format implied by a `.xyz` or `.ply` extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "xyz" => Some(CloudFormat::XyzText),
            "ply" => Some(CloudFormat::PlyBinary),
            _ => None,
        }
    }
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), location, message: message.into() }
}

/// One `x y z` line per point, 17 significant digits, which round-trips f64.
pub fn xyz_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = String::with_capacity(cloud.len() * 72);
    for p in cloud.points() {
        out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p[0], p[1], p[2]));
    }
    out.into_bytes()
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud, DataError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("line {}", i + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(path, loc(), format!("expected 3 coordinates, found {}", fields.len())));
        }
        let mut p = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            p[k] = f.parse().map_err(|e| parse_err(path, loc(), format!("bad coordinate `{f}`: {e}")))?;
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn ply_bytes(cloud: &PointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    let mut out = header.into_bytes();
    out.reserve(cloud.len() * 12);
    for p in cloud.points() {
        for &v in p {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Reads a vertex-only little-endian PLY whose vertices are exactly
/// `x y z` stored as float or double.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud, DataError> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String), DataError> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(path, format!("byte {start}"), "unterminated header"))?;
        *pos = start + end + 1;
        let line = std::str::from_utf8(&bytes[start..start + end])
            .map_err(|_| parse_err(path, format!("byte {start}"), "header is not text"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (at, magic) = next_line(&mut pos)?;
    if magic != "ply" {
        return Err(parse_err(path, format!("byte {at}"), "missing `ply` magic"));
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<(String, usize)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let (at, line) = next_line(&mut pos)?;
        let loc = format!("byte {at}");
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(parse_err(path, loc, format!("unsupported format `{other}`"))),
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| parse_err(path, loc, format!("bad vertex count `{n}`")))?);
                in_vertex = true;
            }
            ["element", name, ..] => return Err(parse_err(path, loc, format!("unsupported element `{name}`"))),
            ["property", ty, name] if in_vertex => {
                let size = match *ty {
                    "float" | "float32" => 4,
                    "double" | "float64" => 8,
                    _ => return Err(parse_err(path, loc, format!("unsupported property type `{ty}`"))),
                };
                props.push((name.to_string(), size));
            }
            _ => return Err(parse_err(path, loc, format!("unexpected header line `{line}`"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(path, format!("byte {pos}"), "no vertex element"))?;
    let names: Vec<&str> = props.iter().map(|(n, _)| n.as_str()).collect();
    if names != ["x", "y", "z"] {
        return Err(parse_err(path, format!("byte {pos}"), format!("vertex properties {names:?} are not x y z")));
    }
    let stride: usize = props.iter().map(|(_, s)| s).sum();
    let need = count * stride;
    if bytes.len() - pos != need {
        return Err(parse_err(
            path,
            format!("byte {pos}"),
            format!("payload is {} bytes, expected {need}", bytes.len() - pos),
        ));
    }
    let mut points = Vec::with_capacity(count);
    let mut at = pos;
    for _ in 0..count {
        let mut p: Point3 = [0.0; 3];
        for (k, (_, size)) in props.iter().enumerate() {
            p[k] = if *size == 4 {
                f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
            };
            at += size;
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<(), DataError> {
    if cloud.is_empty() {
        return Err(DataError::Contract(format!("refusing to write an empty cloud to {}", path.display())));
    }
    let bytes = match format {
        CloudFormat::XyzText => xyz_bytes(cloud),
        CloudFormat::PlyBinary => ply_bytes(cloud),
    };
    write_file(path, &bytes)
}

pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, DataError> {
    let bytes = read_file(path)?;
    match format {
        CloudFormat::XyzText => {
            let text = std::str::from_utf8(&bytes).map_err(|e| {
                parse_err(path, format!("byte {}", e.valid_up_to()), "not valid UTF-8")
            })?;
            parse_xyz(text, path)
        }
        CloudFormat::PlyBinary => parse_ply(&bytes, path),
    }
}

/// Pixel value quantised to a byte, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// 8-bit binary PGM of a `1×h×w` or `h×w` image with values in [0,1].
pub fn pgm_bytes(image: &Tensor) -> Result<Vec<u8>, DataError> {
    let (h, w) = match image.shape() {
        [1, h, w] | [h, w] => (*h, *w),
        other => return Err(DataError::Contract(format!("cannot write image of shape {other:?} as PGM"))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

/// Parses a binary PGM into a `1×h×w` image scaled to [0,1].
pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Tensor, DataError> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, format!("byte {start}"), "truncated PGM header"));
        }
        tokens.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if tokens[0].1 != "P5" {
        return Err(parse_err(path, "byte 0".into(), format!("expected P5 magic, found `{}`", tokens[0].1)));
    }
    let mut nums = [0usize; 3];
    for (k, (at, tok)) in tokens[1..].iter().enumerate() {
        nums[k] = tok.parse().map_err(|_| parse_err(path, format!("byte {at}"), format!("bad header number `{tok}`")))?;
    }
    let [w, h, maxval] = nums;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(path, format!("byte {}", tokens[3].0), format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(path, format!("byte {pos}"), "missing whitespace after header"));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != w * h {
        return Err(parse_err(
            path,
            format!("byte {pos}"),
            format!("raster is {} bytes, expected {}", raster.len(), w * h),
        ));
    }
    let data = raster.iter().map(|&b| b as f64 / maxval as f64).collect();
    Ok(Tensor::new(vec![1, h, w], data)?)
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<(), DataError> {
    write_file(path, &pgm_bytes(image)?)
}

pub fn read_image(path: &Path) -> Result<Tensor, DataError> {
    parse_pgm(&read_file(path)?, path)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io = |e| DataError::Io { path: path.display().to_string(), source: e };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
}
