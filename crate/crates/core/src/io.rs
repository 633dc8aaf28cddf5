//! File formats: Wavefront OBJ (subset), PNG, PFM and CSV loss curves.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::imagebuf::Image;
use crate::math::Vec3;
use crate::scene::TriangleMesh;
use crate::{Error, Result};

/// Reads `v`, `vn`, `vt` and `f` records. Polygons are fan-triangulated.
///
/// Attribute indices in faces are assumed to agree with the position index
/// (per-vertex attributes); mismatched `vt`/`vn` indices are rejected.
pub fn read_obj(reader: impl Read) -> Result<TriangleMesh<f64>> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let mut floats = |k: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = it
                .by_ref()
                .take(k)
                .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad number {t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() < k {
                return Err(err(format!("expected {k} numbers")));
            }
            Ok(v)
        };
        match tag {
            "v" => {
                let v = floats(3)?;
                positions.push(Vec3::new(v[0], v[1], v[2]));
            }
            "vn" => {
                let v = floats(3)?;
                normals.push(Vec3::new(v[0], v[1], v[2]));
            }
            "vt" => {
                let v = floats(2)?;
                uvs.push([v[0], v[1]]);
            }
            "f" => {
                let mut idx = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = parse_index(parts.next().unwrap_or(""), positions.len())
                        .map_err(|m| err(m))?;
                    for (attr, len) in [(parts.next(), uvs.len()), (parts.next(), normals.len())] {
                        if let Some(a) = attr.filter(|a| !a.is_empty()) {
                            if parse_index(a, len).map_err(|m| err(m))? != vi {
                                return Err(err(format!("attribute index in {tok:?} differs from vertex index")));
                            }
                        }
                    }
                    idx.push(vi as u32);
                }
                if idx.len() < 3 {
                    return Err(err(format!("face with {} vertices", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mut mesh = TriangleMesh::new(positions, triangles);
    if !normals.is_empty() {
        mesh.normals = Some(normals);
    }
    if !uvs.is_empty() {
        mesh.uvs = Some(uvs);
    }
    mesh.validate()?;
    Ok(mesh)
}

fn parse_index(tok: &str, len: usize) -> std::result::Result<usize, String> {
    let i: i64 = tok.parse().map_err(|e| format!("bad index {tok:?}: {e}"))?;
    let resolved = if i < 0 { len as i64 + i } else { i - 1 };
    if resolved < 0 || resolved >= len as i64 {
        return Err(format!("index {i} out of range for {len} entries"));
    }
    Ok(resolved as usize)
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh<f64>> {
    read_obj(fs::File::open(path)?)
}

pub fn write_obj(mesh: &TriangleMesh<f64>, mut out: impl Write) -> Result<()> {
    let mut s = String::new();
    for p in &mesh.positions {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    if let Some(uvs) = &mesh.uvs {
        for t in uvs {
            writeln!(s, "vt {} {}", t[0], t[1]).unwrap();
        }
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            writeln!(s, "vn {} {} {}", n.x, n.y, n.z).unwrap();
        }
    }
    let (has_uv, has_n) = (mesh.uvs.is_some(), mesh.normals.is_some());
    for t in &mesh.triangles {
        s.push('f');
        for &i in t {
            let i = i + 1;
            match (has_uv, has_n) {
                (false, false) => write!(s, " {i}"),
                (true, false) => write!(s, " {i}/{i}"),
                (false, true) => write!(s, " {i}//{i}"),
                (true, true) => write!(s, " {i}/{i}/{i}"),
            }
            .unwrap();
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save_obj(mesh: &TriangleMesh<f64>, path: &Path) -> Result<()> {
    write_obj(mesh, BufWriter::new(fs::File::create(path)?))
}

/// 8-bit RGBA PNG; channels are clamped to `[0, 1]` and scaled, no gamma.
pub fn save_png(img: &Image<f64>, path: &Path) -> Result<()> {
    let to8 = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = img.pixels.iter().flat_map(|p| p.map(to8)).collect();
    image::save_buffer(path, &bytes, img.width as u32, img.height as u32, image::ColorType::Rgba8)?;
    Ok(())
}

/// Little-endian PFM. Input rows run top to bottom; the file stores them
/// bottom to top as the format requires.
fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    if data.len() != width * height * channels {
        return Err(Error::Shape(format!("{} floats for {width}×{height}×{channels}", data.len())));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    let tag = if channels == 3 { "PF" } else { "Pf" };
    write!(out, "{tag}\n{width} {height}\n-1.0\n")?;
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &data[y * row..(y + 1) * row] {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_pfm_rgb(path: &Path, width: usize, height: usize, data: &[[f32; 3]]) -> Result<()> {
    let flat: Vec<f32> = data.iter().flatten().copied().collect();
    write_pfm(path, width, height, 3, &flat)
}

pub fn write_pfm_gray(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    write_pfm(path, width, height, 1, data)
}

/// Parsed PFM with rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut token = |line: usize| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                line,
                msg: "truncated header".into(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token(1)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        t => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown PFM tag {t:?}"),
            })
        }
    };
    let dim = |t: String| {
        t.parse::<usize>().map_err(|e| Error::Parse {
            line: 2,
            msg: format!("bad dimension {t:?}: {e}"),
        })
    };
    let width = dim(token(2)?)?;
    let height = dim(token(2)?)?;
    let scale_tok = token(3)?;
    let scale: f64 = scale_tok.parse().map_err(|e| Error::Parse {
        line: 3,
        msg: format!("bad scale {scale_tok:?}: {e}"),
    })?;
    let body = &bytes[pos + 1..];
    let n = width * height * channels;
    if body.len() < 4 * n {
        return Err(Error::Parse {
            line: 4,
            msg: format!("expected {n} floats, found {} bytes", body.len()),
        });
    }
    let raw: Vec<f32> = body
        .chunks_exact(4)
        .take(n)
        .map(|c| {
            let b = [c[0], c[1], c[2], c[3]];
            if scale < 0.0 {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let row = width * channels;
    let mut data = Vec::with_capacity(n);
    for y in (0..height).rev() {
        data.extend_from_slice(&raw[y * row..(y + 1) * row]);
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
";

    #[test]
    fn unit_cube() {
        let m = read_obj(CUBE.as_bytes()).unwrap();
        assert_eq!(m.positions.len(), 8);
        assert_eq!(m.triangles.len(), 12);
    }

    #[test]
    fn obj_round_trip() {
        let mut m = read_obj(CUBE.as_bytes()).unwrap();
        m.uvs = Some(vec![[0.25, 0.5]; 8]);
        let mut buf = Vec::new();
        write_obj(&m, &mut buf).unwrap();
        let back = read_obj(buf.as_slice()).unwrap();
        assert_eq!(back.positions, m.positions);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.uvs, m.uvs);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "v 0 0 0\nv 1 0 0\nv 0 x 0\n";
        assert!(matches!(read_obj(bad.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let bad = "v 0 0 0\nv 1 0 0\nf 1 2 7\n";
        assert!(matches!(read_obj(bad.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn negative_indices() {
        let m = read_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n".as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rgb: Vec<[f32; 3]> = (0..12).map(|i| [i as f32 * 0.1, -(i as f32), f32::MIN_POSITIVE * i as f32]).collect();
        let p = dir.path().join("a.pfm");
        write_pfm_rgb(&p, 4, 3, &rgb).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!((back.width, back.height, back.channels), (4, 3, 3));
        let flat: Vec<u32> = rgb.iter().flatten().map(|v| v.to_bits()).collect();
        let got: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(flat, got);

        let gray: Vec<f32> = (0..6).map(|i| i as f32 - 2.5).collect();
        let p = dir.path().join("g.pfm");
        write_pfm_gray(&p, 2, 3, &gray).unwrap();
        assert_eq!(read_pfm(&p).unwrap().data, gray);
    }

    #[test]
    fn png_writes() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(3, 2, [1.5, 0.5, -1.0, 1.0]);
        let p = dir.path().join("x.png");
        save_png(&img, &p).unwrap();
        let back = image::open(&p).unwrap().to_rgba8();
        assert_eq!(back.get_pixel(1, 1).0, [255, 128, 0, 255]);
    }
}
