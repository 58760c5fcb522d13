//! Mesh and tabular file formats.
//!
//! Meshes: OBJ (`v`/`f` records), OFF, and PLY in ASCII or binary encodings. Indices
//! are converted to 0-based on read. Tables are headerless or single-header CSV.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("off") => Ok(MeshFormat::Off),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::InvalidInput(format!(
                "cannot infer mesh format of {}",
                path.display()
            ))),
        }
    }
}

/// Load and validate a mesh. The format is inferred from the extension when `None`.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriMesh> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let file = BufReader::new(File::open(path)?);
    let (v, f) = match format {
        MeshFormat::Obj => read_obj(file)?,
        MeshFormat::Off => read_off(file)?,
        MeshFormat::Ply => read_ply(file)?,
    };
    TriMesh::new(v, f)
}

type Soup = (Vec<Vec3>, Vec<[usize; 3]>);

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, "missing coordinate"))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid number '{tok}'")))
}

fn triangle(idx: Vec<usize>, line: usize) -> Result<[usize; 3]> {
    match idx.as_slice() {
        &[a, b, c] => Ok([a, b, c]),
        _ => Err(parse_err(
            line,
            format!("face has {} vertices; only triangles are supported", idx.len()),
        )),
    }
}

pub fn read_obj(reader: impl BufRead) -> Result<Soup> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let no = k + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let x = parse_f64(tok.next(), no)?;
                let y = parse_f64(tok.next(), no)?;
                let z = parse_f64(tok.next(), no)?;
                verts.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let idx = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| parse_err(no, format!("invalid index '{t}'")))?;
                        let resolved = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(parse_err(no, format!("index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<_>>>()?;
                faces.push(triangle(idx, no)?);
            }
            _ => {}
        }
    }
    Ok((verts, faces))
}

pub fn read_off(reader: impl BufRead) -> Result<Soup> {
    // Tokens with their line numbers, comments stripped.
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("");
        tokens.extend(body.split_whitespace().map(|t| (k + 1, t.to_string())));
    }
    let mut it = tokens.into_iter().peekable();
    let mut header = it.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if header.1 == "OFF" {
        header = it.next().ok_or_else(|| parse_err(1, "missing counts"))?;
    } else if let Some(rest) = header.1.strip_prefix("OFF") {
        header.1 = rest.to_string();
    }
    let next_usize = |first: Option<(usize, String)>| -> Result<usize> {
        let (line, t) = match first {
            Some(x) => x,
            None => return Err(parse_err(0, "unexpected end of file")),
        };
        t.parse().map_err(|_| parse_err(line, format!("invalid count '{t}'")))
    };
    let nv = next_usize(Some(header))?;
    let nf = next_usize(it.next())?;
    let _ne = next_usize(it.next())?;
    let mut verts = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut c = [0.0; 3];
        for x in &mut c {
            let (line, t) = it.next().ok_or_else(|| parse_err(0, "truncated vertex list"))?;
            *x = parse_f64(Some(&t), line)?;
        }
        verts.push(Vec3::new(c[0], c[1], c[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, t) = it.next().ok_or_else(|| parse_err(0, "truncated face list"))?;
        let k: usize = t.parse().map_err(|_| parse_err(line, "invalid face size"))?;
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            let (l, t) = it.next().ok_or_else(|| parse_err(line, "truncated face"))?;
            idx.push(t.parse().map_err(|_| parse_err(l, format!("invalid index '{t}'")))?);
        }
        // Optional per-face colour values stay on the same line; skip them.
        while it.peek().map(|(l, _)| *l == line).unwrap_or(false) {
            it.next();
        }
        faces.push(triangle(idx, line)?);
    }
    Ok((verts, faces))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyEncoding {
    Ascii,
    Little,
    Big,
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(name: &str, line: usize) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(parse_err(line, format!("unknown PLY type '{name}'"))),
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
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct PlyBody<R> {
    reader: R,
    encoding: PlyEncoding,
    tokens: std::vec::IntoIter<String>,
}

impl<R: BufRead> PlyBody<R> {
    fn value(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            PlyEncoding::Ascii => loop {
                if let Some(t) = self.tokens.next() {
                    return t
                        .parse()
                        .map_err(|_| parse_err(0, format!("invalid PLY value '{t}'")));
                }
                let mut line = String::new();
                if self.reader.read_line(&mut line)? == 0 {
                    return Err(parse_err(0, "unexpected end of PLY body"));
                }
                self.tokens = line
                    .split_whitespace()
                    .map(String::from)
                    .collect::<Vec<_>>()
                    .into_iter();
            },
            enc => {
                let mut buf = [0u8; 8];
                let n = ty.size();
                self.reader.read_exact(&mut buf[..n])?;
                let b = &mut buf[..n];
                if (enc == PlyEncoding::Big) == cfg!(target_endian = "little") {
                    b.reverse();
                }
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => i16::from_ne_bytes([b[0], b[1]]) as f64,
                    Scalar::U16 => u16::from_ne_bytes([b[0], b[1]]) as f64,
                    Scalar::I32 => i32::from_ne_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::U32 => u32::from_ne_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F32 => f32::from_ne_bytes([b[0], b[1], b[2], b[3]]) as f64,
                    Scalar::F64 => f64::from_ne_bytes(buf),
                })
            }
        }
    }
}

pub fn read_ply(mut reader: impl BufRead) -> Result<Soup> {
    let mut line = String::new();
    let mut line_no = 0;
    let mut next_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<usize> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(parse_err(line_no, "unexpected end of PLY header"));
        }
        line_no += 1;
        Ok(line_no)
    };
    next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(parse_err(1, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let no = next_line(&mut reader, &mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", enc, _] => {
                encoding = Some(match *enc {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::Little,
                    "binary_big_endian" => PlyEncoding::Big,
                    other => return Err(parse_err(no, format!("unknown PLY format '{other}'"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(no, "invalid element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, item, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(no, "property before element"))?
                .props
                .push(Property::List(
                    name.to_string(),
                    Scalar::parse(cnt, no)?,
                    Scalar::parse(item, no)?,
                )),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(no, "property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty, no)?)),
            ["end_header"] => break,
            _ => {}
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(1, "missing PLY format line"))?;
    let mut body = PlyBody {
        reader,
        encoding,
        tokens: Vec::new().into_iter(),
    };
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut idx: Option<Vec<usize>> = None;
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = body.value(*ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            _ => {}
                        }
                    }
                    Property::List(name, cnt, item) => {
                        let n = body.value(*cnt)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(body.value(*item)? as usize);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            idx = Some(vals);
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => verts.push(Vec3::new(xyz[0], xyz[1], xyz[2])),
                "face" => faces.push(triangle(
                    idx.ok_or_else(|| parse_err(0, "face element without vertex_indices"))?,
                    0,
                )?),
                _ => {}
            }
        }
    }
    Ok((verts, faces))
}

/// Write vertices and triangles as OBJ, preserving vertex order.
pub fn write_obj(path: impl AsRef<Path>, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_obj_to(&mut w, vertices, faces)?;
    w.flush()?;
    Ok(())
}

pub fn write_obj_to(w: &mut impl Write, vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    for v in vertices {
        // `{:?}` prints the shortest representation that round-trips exactly.
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Rows of a headerless (or single-header) CSV with exactly `width` numeric fields.
fn read_rows(reader: impl Read, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(k + 1, e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) if vals.len() == width => rows.push((line, vals)),
            Ok(vals) => {
                return Err(parse_err(
                    line,
                    format!("expected {width} fields, found {}", vals.len()),
                ))
            }
            Err(_) if k == 0 => continue,
            Err(_) => return Err(parse_err(line, "non-numeric field")),
        }
    }
    Ok(rows)
}

fn index(v: f64, line: usize, bound: usize, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 0.0 || v >= bound as f64 {
        return Err(parse_err(line, format!("{what} index {v} out of range 0..{bound}")));
    }
    Ok(v as usize)
}

/// `face_index,population` rows; every face must appear exactly once with a positive value.
pub fn read_population_csv(reader: impl Read, num_faces: usize) -> Result<Vec<f64>> {
    let mut pop = vec![f64::NAN; num_faces];
    for (line, r) in read_rows(reader, 2)? {
        let f = index(r[0], line, num_faces, "face")?;
        if !(r[1] > 0.0) || !r[1].is_finite() {
            return Err(parse_err(line, format!("population {} is not positive", r[1])));
        }
        if !pop[f].is_nan() {
            return Err(parse_err(line, format!("face {f} listed twice")));
        }
        pop[f] = r[1];
    }
    if let Some(f) = pop.iter().position(|p| p.is_nan()) {
        return Err(Error::InvalidInput(format!("no population given for face {f}")));
    }
    Ok(pop)
}

/// `vertex_index,qx,qy,qz` rows. Targets are normalized, with a warning when they
/// are more than 1e-6 away from unit length.
pub fn read_landmarks_csv(reader: impl Read, num_vertices: usize) -> Result<Vec<(usize, Vec3)>> {
    let mut out = Vec::new();
    for (line, r) in read_rows(reader, 4)? {
        let v = index(r[0], line, num_vertices, "vertex")?;
        let q = Vec3::new(r[1], r[2], r[3]);
        let n = q.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(parse_err(line, "landmark target has zero length"));
        }
        if (n - 1.0).abs() > 1e-6 {
            log::warn!("line {line}: landmark target has norm {n}; normalizing");
        }
        out.push((v, q / n));
    }
    Ok(out)
}

/// `face_index,region_id` rows; every face must be labelled.
pub fn read_labels_csv(reader: impl Read, num_faces: usize) -> Result<Vec<u32>> {
    let mut labels = vec![None; num_faces];
    for (line, r) in read_rows(reader, 2)? {
        let f = index(r[0], line, num_faces, "face")?;
        let id = index(r[1], line, u32::MAX as usize, "region")? as u32;
        labels[f] = Some(id);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(f, l)| l.ok_or_else(|| Error::InvalidInput(format!("face {f} has no region label"))))
        .collect()
}

/// One index per row, each below `bound`; used for landmark vertex lists and face lists.
pub fn read_index_list_csv(reader: impl Read, bound: usize, what: &str) -> Result<Vec<usize>> {
    read_rows(reader, 1)?
        .into_iter()
        .map(|(line, r)| index(r[0], line, bound, what))
        .collect()
}

/// `region_id,population` rows.
pub fn read_region_populations_csv(reader: impl Read) -> Result<BTreeMap<u32, f64>> {
    let mut out = BTreeMap::new();
    for (line, r) in read_rows(reader, 2)? {
        let id = index(r[0], line, u32::MAX as usize, "region")? as u32;
        if !r[1].is_finite() || r[1] < 0.0 {
            return Err(parse_err(line, format!("invalid population {}", r[1])));
        }
        out.insert(id, r[1]);
    }
    Ok(out)
}
