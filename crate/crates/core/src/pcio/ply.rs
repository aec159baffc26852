//! PLY point clouds: ASCII and binary little-endian, vertex element only.

use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::{ColoredPointCloud, Vec3};
use crate::raster::quantize;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    /// (name, type); list properties carry (count type, item type).
    props: Vec<(String, Scalar, Option<Scalar>)>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(offset, "unterminated ply header"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::format(offset, "non-utf8 header line"))?
            .trim_end_matches('\r')
            .to_string();
        lines.push((offset, line.clone()));
        offset += end + 1;
        if line.trim() == "end_header" {
            break;
        }
    }
    if lines.first().map(|(_, l)| l.trim()) != Some("ply") {
        return Err(Error::format(0, "missing ply magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for (off, line) in &lines[1..] {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, _] => {
                return Err(Error::format(*off, format!("unsupported ply format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(*off, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(*off, "property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| Error::format(*off, "bad list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| Error::format(*off, "bad list item type"))?;
                el.props.push((name.to_string(), ct, Some(it)));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(*off, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(*off, format!("unknown property type {ty}")))?;
                el.props.push((name.to_string(), ty, None));
            }
            [] => {}
            _ => return Err(Error::format(*off, format!("unrecognized header line `{line}`"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Error::format(0, "missing format line"))?,
        elements,
        body_offset: offset,
    })
}

pub fn parse(bytes: &[u8]) -> Result<ColoredPointCloud> {
    if bytes.is_empty() {
        return Err(Error::input("empty ply file"));
    }
    let header = parse_header(bytes)?;
    let vertex_el = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::input("ply has no vertex element"))?;
    let v = &header.elements[vertex_el];
    let find = |n: &str| v.props.iter().position(|p| p.0 == n);
    let pos = ["x", "y", "z"].map(find);
    if pos.iter().any(|p| p.is_none()) {
        return Err(Error::input("ply vertex lacks x/y/z"));
    }
    let col = {
        let c = ["red", "green", "blue"].map(find);
        if c.iter().any(|p| p.is_none()) {
            let alt = ["r", "g", "b"].map(find);
            if alt.iter().any(|p| p.is_none()) {
                return Err(Error::input("ply vertex has no color attribute"));
            }
            alt
        } else {
            c
        }
    };
    let nrm = ["nx", "ny", "nz"].map(find);
    let has_normals = nrm.iter().all(|p| p.is_some());
    let color_scale = if v.props[col[0].unwrap()].1.is_float() {
        1.0
    } else {
        1.0 / 255.0
    };

    // Rows of scalar values for the vertex element (list props unsupported there).
    if v.props.iter().any(|p| p.2.is_some()) {
        return Err(Error::format(header.body_offset, "list property in vertex element"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(v.count);
    match header.encoding {
        Encoding::Ascii => {
            let text = &bytes[header.body_offset..];
            let mut offset = header.body_offset;
            let mut lines = text.split(|&b| b == b'\n');
            // skip elements preceding the vertex element
            for el in &header.elements[..vertex_el] {
                for _ in 0..el.count {
                    let l = lines.next().ok_or_else(|| Error::format(offset, "truncated body"))?;
                    offset += l.len() + 1;
                }
            }
            while rows.len() < v.count {
                let l = lines
                    .next()
                    .ok_or_else(|| Error::format(offset, "truncated vertex data"))?;
                let s = std::str::from_utf8(l).map_err(|_| Error::format(offset, "non-utf8 data"))?;
                if s.trim().is_empty() {
                    offset += l.len() + 1;
                    continue;
                }
                let vals: std::result::Result<Vec<f64>, _> =
                    s.split_whitespace().map(|t| t.parse::<f64>()).collect();
                let vals = vals.map_err(|_| Error::format(offset, "unparsable vertex value"))?;
                if vals.len() < v.props.len() {
                    return Err(Error::format(offset, "too few vertex values"));
                }
                rows.push(vals);
                offset += l.len() + 1;
            }
        }
        Encoding::BinaryLe => {
            let mut offset = header.body_offset;
            for el in &header.elements[..vertex_el] {
                // only fixed-size elements may precede the vertices
                if el.props.iter().any(|p| p.2.is_some()) {
                    return Err(Error::format(offset, "list element before vertices"));
                }
                offset += el.count * el.props.iter().map(|p| p.1.size()).sum::<usize>();
            }
            let stride: usize = v.props.iter().map(|p| p.1.size()).sum();
            if bytes.len() < offset + stride * v.count {
                return Err(Error::format(bytes.len(), "truncated binary vertex data"));
            }
            for _ in 0..v.count {
                let mut row = Vec::with_capacity(v.props.len());
                let mut o = offset;
                for p in &v.props {
                    row.push(p.1.read_le(&bytes[o..]));
                    o += p.1.size();
                }
                rows.push(row);
                offset += stride;
            }
        }
    }

    let mut positions = Vec::with_capacity(rows.len());
    let mut colors = Vec::with_capacity(rows.len());
    let mut normals = has_normals.then(|| Vec::with_capacity(rows.len()));
    for row in &rows {
        positions.push(Vec3::new(row[pos[0].unwrap()], row[pos[1].unwrap()], row[pos[2].unwrap()]));
        colors.push(col.map(|c| ((row[c.unwrap()] * color_scale) as f32).clamp(0.0, 1.0)));
        if let Some(ns) = normals.as_mut() {
            let n = Vec3::new(row[nrm[0].unwrap()], row[nrm[1].unwrap()], row[nrm[2].unwrap()]);
            let len = n.norm();
            ns.push(if len > 0.0 { n / len } else { n });
        }
    }
    let normals = normals.filter(|ns: &Vec<Vec3>| ns.iter().all(|n| n.norm() > 0.0));
    ColoredPointCloud::new(positions, colors, normals)
}

/// Binary little-endian PLY: double xyz, optional double normals, uchar rgb.
pub fn write(cloud: &ColoredPointCloud, mut w: impl Write) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for c in ["x", "y", "z"] {
        writeln!(w, "property double {c}")?;
    }
    if cloud.normals.is_some() {
        for c in ["nx", "ny", "nz"] {
            writeln!(w, "property double {c}")?;
        }
    }
    for c in ["red", "green", "blue"] {
        writeln!(w, "property uchar {c}")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        for c in cloud.positions[i].iter() {
            w.write_all(&c.to_le_bytes())?;
        }
        if let Some(ns) = &cloud.normals {
            for c in ns[i].iter() {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        w.write_all(&quantize(cloud.colors[i]))?;
    }
    Ok(())
}
