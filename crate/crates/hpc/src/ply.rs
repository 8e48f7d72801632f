//! PLY reading and writing, ASCII and binary little-endian.
//!
//! `x`, `y`, `z` become point coordinates and an integer `label` property
//! becomes per-point labels. Every other scalar vertex property is kept as a
//! feature column in file order. List properties and non-vertex elements are
//! skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hpc_core::{Matrix, Point3, PointCloud};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl PlyFormat {
    fn header_name(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    Int8,
    UInt8,
    Int16,
    UInt16,
    Int32,
    UInt32,
    Float32,
    Float64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::Int8,
            "uchar" | "uint8" => ScalarType::UInt8,
            "short" | "int16" => ScalarType::Int16,
            "ushort" | "uint16" => ScalarType::UInt16,
            "int" | "int32" => ScalarType::Int32,
            "uint" | "uint32" => ScalarType::UInt32,
            "float" | "float32" => ScalarType::Float32,
            "double" | "float64" => ScalarType::Float64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::Int8 => "char",
            ScalarType::UInt8 => "uchar",
            ScalarType::Int16 => "short",
            ScalarType::UInt16 => "ushort",
            ScalarType::Int32 => "int",
            ScalarType::UInt32 => "uint",
            ScalarType::Float32 => "float",
            ScalarType::Float64 => "double",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ScalarType::Int8 | ScalarType::UInt8 => 1,
            ScalarType::Int16 | ScalarType::UInt16 => 2,
            ScalarType::Int32 | ScalarType::UInt32 | ScalarType::Float32 => 4,
            ScalarType::Float64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, ScalarType::Float32 | ScalarType::Float64)
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::Int8 => b[0] as i8 as f64,
            ScalarType::UInt8 => b[0] as f64,
            ScalarType::Int16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::UInt16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::Int32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::UInt32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::Float32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            ScalarType::Float64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            ScalarType::Int8 => out.push(v as i8 as u8),
            ScalarType::UInt8 => out.push(v as u8),
            ScalarType::Int16 => out.extend((v as i16).to_le_bytes()),
            ScalarType::UInt16 => out.extend((v as u16).to_le_bytes()),
            ScalarType::Int32 => out.extend((v as i32).to_le_bytes()),
            ScalarType::UInt32 => out.extend((v as u32).to_le_bytes()),
            ScalarType::Float32 => out.extend((v as f32).to_le_bytes()),
            ScalarType::Float64 => out.extend(v.to_le_bytes()),
        }
    }

    fn format(self, v: f64) -> String {
        if self.is_integer() {
            format!("{}", v as i64)
        } else {
            significant(v, if self == ScalarType::Float32 { 7 } else { 9 })
        }
    }
}

/// `v` with `digits` significant digits, trailing zeros trimmed.
fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = s.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    if (-5..digits as i32).contains(&exp) {
        // Plain notation reads better for the usual coordinate range.
        let plain: f64 = format!("{mantissa}e{exp}").parse().expect("valid float");
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let p = format!("{plain:.decimals$}");
        if p.contains('.') {
            p.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            p
        }
    } else {
        format!("{mantissa}e{exp}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyProperty {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyElement {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PlyProperty>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyHeaderInfo {
    pub format: PlyFormat,
    pub elements: Vec<PlyElement>,
    /// Lines consumed by the header, `end_header` included.
    pub lines: usize,
}

impl PlyHeaderInfo {
    pub fn vertex(&self) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == "vertex")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex().map_or(0, |e| e.count)
    }
}

/// A cloud plus the names of its feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub feature_names: Vec<String>,
}

pub fn parse_header(r: &mut impl BufRead) -> Result<PlyHeaderInfo> {
    let mut line_no = 0;
    let mut buf = String::new();
    let mut next_line = |buf: &mut String, line_no: &mut usize| -> Result<bool> {
        buf.clear();
        *line_no += 1;
        let n = r.read_line(buf).map_err(|e| Error::Header {
            line: *line_no,
            message: e.to_string(),
        })?;
        Ok(n > 0)
    };
    let err = |line: usize, message: String| Error::Header { line, message };

    if !next_line(&mut buf, &mut line_no)? || buf.trim_end() != "ply" {
        return Err(err(1, "missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        if !next_line(&mut buf, &mut line_no)? {
            return Err(err(line_no, "unexpected end of file before end_header".into()));
        }
        let tokens: Vec<&str> = buf.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", name, version] => {
                if *version != "1.0" {
                    return Err(err(line_no, format!("unsupported version {version}")));
                }
                format = Some(match *name {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(err(line_no, format!("unsupported format '{other}'"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(line_no, format!("bad element count '{count}'")))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let (Some(count), Some(item)) = (ScalarType::parse(count), ScalarType::parse(item)) else {
                    return Err(err(line_no, "unknown list property type".into()));
                };
                if !count.is_integer() {
                    return Err(err(line_no, "list count type must be an integer".into()));
                }
                element.properties.push(PlyProperty {
                    name: name.to_string(),
                    kind: PropertyKind::List { count, item },
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| err(line_no, format!("unknown property type '{ty}'")))?;
                element.properties.push(PlyProperty {
                    name: name.to_string(),
                    kind: PropertyKind::Scalar(ty),
                });
            }
            ["end_header"] => break,
            _ => return Err(err(line_no, format!("unrecognized header line '{}'", buf.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| err(line_no, "missing format line".into()))?;
    let vertex = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| err(line_no, "no vertex element".into()))?;
    for axis in ["x", "y", "z"] {
        let found = vertex.properties.iter().find(|p| p.name == axis);
        if !matches!(
            found,
            Some(PlyProperty {
                kind: PropertyKind::Scalar(_),
                ..
            })
        ) {
            return Err(err(line_no, format!("vertex element lacks scalar property '{axis}'")));
        }
    }
    Ok(PlyHeaderInfo {
        format,
        elements,
        lines: line_no,
    })
}

/// How each scalar vertex property is used.
enum Slot {
    Axis(usize),
    Label,
    Feature(usize),
}

struct VertexSink {
    slots: Vec<Option<Slot>>,
    points: Vec<Point3>,
    labels: Option<Vec<i32>>,
    features: Vec<f64>,
    feature_names: Vec<String>,
    row: Vec<f64>,
}

impl VertexSink {
    fn new(vertex: &PlyElement) -> Self {
        let mut feature_names = Vec::new();
        let mut has_label = false;
        let slots = vertex
            .properties
            .iter()
            .map(|p| match (p.name.as_str(), p.kind) {
                (_, PropertyKind::List { .. }) => None,
                ("x", _) => Some(Slot::Axis(0)),
                ("y", _) => Some(Slot::Axis(1)),
                ("z", _) => Some(Slot::Axis(2)),
                ("label", PropertyKind::Scalar(t)) if t.is_integer() => {
                    has_label = true;
                    Some(Slot::Label)
                }
                (name, _) => {
                    feature_names.push(name.to_string());
                    Some(Slot::Feature(feature_names.len() - 1))
                }
            })
            .collect();
        Self {
            slots,
            points: Vec::with_capacity(vertex.count),
            labels: has_label.then(|| Vec::with_capacity(vertex.count)),
            features: Vec::new(),
            row: vec![0.0; feature_names.len()],
            feature_names,
        }
    }

    fn push(&mut self, values: &[Option<f64>]) {
        let mut xyz = [0.0; 3];
        for (slot, v) in self.slots.iter().zip(values) {
            let (Some(slot), Some(v)) = (slot, v) else { continue };
            match slot {
                Slot::Axis(a) => xyz[*a] = *v,
                Slot::Label => self.labels.as_mut().expect("label slot implies labels").push(*v as i32),
                Slot::Feature(f) => self.row[*f] = *v,
            }
        }
        self.points.push(xyz.into());
        self.features.extend_from_slice(&self.row);
    }

    fn finish(self) -> Result<PlyData> {
        let n = self.points.len();
        let mut cloud = PointCloud::new(self.points)?;
        if let Some(labels) = self.labels {
            cloud = cloud.with_labels(labels)?;
        }
        if !self.feature_names.is_empty() {
            cloud = cloud.with_features(Matrix::from_vec(n, self.feature_names.len(), self.features)?)?;
        }
        Ok(PlyData {
            cloud,
            feature_names: self.feature_names,
        })
    }
}

fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Ok(false),
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Body(e.to_string())),
        }
    }
    Ok(true)
}

fn read_binary(r: &mut impl Read, header: &PlyHeaderInfo) -> Result<PlyData> {
    let vertex = header.vertex().expect("validated header");
    let mut sink = VertexSink::new(vertex);
    let mut values = Vec::new();
    let mut scratch = [0u8; 8];
    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        for row in 0..element.count {
            values.clear();
            for p in &element.properties {
                let truncated = || {
                    if is_vertex {
                        Error::LengthMismatch {
                            expected: element.count,
                            found: row,
                        }
                    } else {
                        Error::Body(format!("truncated '{}' element", element.name))
                    }
                };
                match p.kind {
                    PropertyKind::Scalar(t) => {
                        if !read_exact_or_eof(r, &mut scratch[..t.size()])? {
                            return Err(truncated());
                        }
                        values.push(Some(t.decode(&scratch)));
                    }
                    PropertyKind::List { count, item } => {
                        if !read_exact_or_eof(r, &mut scratch[..count.size()])? {
                            return Err(truncated());
                        }
                        let len = count.decode(&scratch).max(0.0) as usize;
                        let mut skip = vec![0u8; len * item.size()];
                        if !read_exact_or_eof(r, &mut skip)? {
                            return Err(truncated());
                        }
                        values.push(None);
                    }
                }
            }
            if is_vertex {
                sink.push(&values);
            }
        }
        if is_vertex {
            return sink.finish();
        }
    }
    unreachable!("validated header has a vertex element")
}

fn read_ascii(r: &mut impl BufRead, header: &PlyHeaderInfo) -> Result<PlyData> {
    let vertex = header.vertex().expect("validated header");
    let mut sink = VertexSink::new(vertex);
    let mut line_no = header.lines;
    let mut line = String::new();
    let mut values = Vec::new();
    for element in &header.elements {
        let is_vertex = element.name == "vertex";
        let mut row = 0;
        while row < element.count {
            line.clear();
            line_no += 1;
            let n = r.read_line(&mut line).map_err(|e| Error::Body(e.to_string()))?;
            if n == 0 {
                return Err(if is_vertex {
                    Error::LengthMismatch {
                        expected: element.count,
                        found: row,
                    }
                } else {
                    Error::Body(format!("truncated '{}' element", element.name))
                });
            }
            let mut tokens = line.split_whitespace();
            let mut probe = tokens.clone();
            if probe.next().is_none() {
                continue;
            }
            values.clear();
            let parse = |tok: Option<&str>| -> Result<f64> {
                let tok = tok.ok_or_else(|| Error::Body(format!("line {line_no}: too few values")))?;
                tok.parse::<f64>()
                    .map_err(|_| Error::Body(format!("line {line_no}: cannot parse '{tok}'")))
            };
            for p in &element.properties {
                match p.kind {
                    PropertyKind::Scalar(_) => values.push(Some(parse(tokens.next())?)),
                    PropertyKind::List { .. } => {
                        let len = parse(tokens.next())?.max(0.0) as usize;
                        for _ in 0..len {
                            parse(tokens.next())?;
                        }
                        values.push(None);
                    }
                }
            }
            if is_vertex {
                sink.push(&values);
            }
            row += 1;
        }
        if is_vertex {
            return sink.finish();
        }
    }
    unreachable!("validated header has a vertex element")
}

pub fn read_ply_from(mut r: impl BufRead) -> Result<PlyData> {
    let header = parse_header(&mut r)?;
    match header.format {
        PlyFormat::Ascii => read_ascii(&mut r, &header),
        PlyFormat::BinaryLittleEndian => read_binary(&mut r, &header),
    }
}

pub fn read_ply_data(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(file))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    Ok(read_ply_data(path)?.cloud)
}

/// One extra per-vertex property.
#[derive(Debug, Clone, Copy)]
pub struct Column<'a> {
    pub name: &'a str,
    pub kind: ScalarType,
    pub values: &'a [f64],
}

/// Writes `points` with double coordinates followed by `columns`.
pub fn write_columns(
    mut w: impl Write,
    format: PlyFormat,
    points: &[Point3],
    columns: &[Column],
) -> std::io::Result<()> {
    for c in columns {
        assert_eq!(c.values.len(), points.len(), "column '{}' length", c.name);
    }
    let mut header = format!(
        "ply\nformat {} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        format.header_name(),
        points.len()
    );
    for c in columns {
        header.push_str(&format!("property {} {}\n", c.kind.name(), c.name));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;
    match format {
        PlyFormat::Ascii => {
            let mut line = String::new();
            for (i, p) in points.iter().enumerate() {
                line.clear();
                for v in [p.x, p.y, p.z] {
                    line.push_str(&significant(v, 9));
                    line.push(' ');
                }
                for c in columns {
                    line.push_str(&c.kind.format(c.values[i]));
                    line.push(' ');
                }
                line.pop();
                line.push('\n');
                w.write_all(line.as_bytes())?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut row = Vec::new();
            for (i, p) in points.iter().enumerate() {
                row.clear();
                for v in [p.x, p.y, p.z] {
                    row.extend(v.to_le_bytes());
                }
                for c in columns {
                    c.kind.encode(c.values[i], &mut row);
                }
                w.write_all(&row)?;
            }
        }
    }
    w.flush()
}

/// Writes a cloud: coordinates, features as doubles named by
/// `feature_names` (or `feature_<i>`), then an `int label` when present.
pub fn write_ply_to(
    w: impl Write,
    cloud: &PointCloud,
    feature_names: &[String],
    format: PlyFormat,
) -> std::io::Result<()> {
    let mut owned: Vec<(String, Vec<f64>)> = Vec::new();
    if let Some(f) = cloud.features() {
        for c in 0..f.cols() {
            let name = feature_names.get(c).cloned().unwrap_or_else(|| format!("feature_{c}"));
            owned.push((name, (0..f.rows()).map(|r| f.get(r, c)).collect()));
        }
    }
    let labels: Option<Vec<f64>> = cloud.labels().map(|l| l.iter().map(|&v| v as f64).collect());
    let mut columns: Vec<Column> = owned
        .iter()
        .map(|(name, values)| Column {
            name,
            kind: ScalarType::Float64,
            values,
        })
        .collect();
    if let Some(l) = &labels {
        columns.push(Column {
            name: "label",
            kind: ScalarType::Int32,
            values: l,
        });
    }
    write_columns(w, format, cloud.points(), &columns)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_ply_named(
    cloud: &PointCloud,
    feature_names: &[String],
    path: impl AsRef<Path>,
    format: PlyFormat,
) -> Result<()> {
    let path = path.as_ref();
    write_ply_to(create(path)?, cloud, feature_names, format).map_err(|e| Error::io(path, e))
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    write_ply_named(cloud, &[], path, format)
}

/// Writes `points` plus `columns` to a file.
pub fn write_ply_columns(
    path: impl AsRef<Path>,
    format: PlyFormat,
    points: &[Point3],
    columns: &[Column],
) -> Result<()> {
    let path = path.as_ref();
    write_columns(create(path)?, format, points, columns).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    create(path)
}
