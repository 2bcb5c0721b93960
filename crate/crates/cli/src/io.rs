//! Point cloud file I/O: PLY (ascii and binary little-endian) and XYZ text.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use glr_core::{Point, PointCloud};
use log::warn;
use ply_rs_bw::parser::{Parser, Reader};
use ply_rs_bw::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs_bw::writer::Writer;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("invalid coordinate at {unit} {index}")]
    InvalidCoordinate { unit: &'static str, index: usize },
    #[error("unknown file format for {0} (expected .ply or .xyz)")]
    UnknownFormat(PathBuf),
    #[error(transparent)]
    Cloud(#[from] glr_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Xyz,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloudFile {
    pub format: CloudFormat,
    pub path: PathBuf,
}

impl CloudFile {
    /// Picks the format from the extension. `.ply` defaults to binary
    /// little-endian for writing; reading follows the file's own header.
    pub fn from_path(path: impl Into<PathBuf>, ascii_ply: bool) -> Result<Self, IoError> {
        let path = path.into();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let format = match ext.as_deref() {
            Some("ply") if ascii_ply => CloudFormat::PlyAscii,
            Some("ply") => CloudFormat::PlyBinaryLe,
            Some("xyz" | "txt" | "pts") => CloudFormat::Xyz,
            _ => return Err(IoError::UnknownFormat(path)),
        };
        Ok(Self { format, path })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_cloud(file: &CloudFile) -> Result<PointCloud, IoError> {
    let reader = open(&file.path)?;
    match file.format {
        CloudFormat::Xyz => read_xyz(reader),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => read_ply(reader),
    }
}

pub fn read_xyz(reader: impl BufRead) -> Result<PointCloud, IoError> {
    let mut points = Vec::new();
    let mut warned = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::CorruptPayload(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = || IoError::InvalidCoordinate {
            unit: "line",
            index: i + 1,
        };
        let mut fields = trimmed.split_whitespace();
        let mut xyz = [0.0; 3];
        for c in &mut xyz {
            *c = fields
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(bad)?;
        }
        if fields.next().is_some() && !warned {
            warn!("ignoring columns after x y z");
            warned = true;
        }
        points.push(Point::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud::new(points)?)
}

fn scalar_value(p: &Property) -> Option<f64> {
    match *p {
        Property::Float(v) => Some(v as f64),
        Property::Double(v) => Some(v),
        _ => None,
    }
}

pub fn read_ply(reader: impl BufRead) -> Result<PointCloud, IoError> {
    let parser = Parser::<DefaultElement>::new();
    let mut reader = Reader::new(reader);
    let header = parser
        .read_header(&mut reader)
        .map_err(|e| IoError::CorruptHeader(e.to_string()))?;
    let vertex = header
        .elements
        .get("vertex")
        .ok_or_else(|| IoError::UnsupportedLayout("no vertex element".into()))?;
    for axis in ["x", "y", "z"] {
        match vertex.properties.get(axis).map(|p| &p.data_type) {
            Some(PropertyType::Scalar(ScalarType::Float | ScalarType::Double)) => {}
            Some(_) => {
                return Err(IoError::UnsupportedLayout(format!(
                    "property {axis} must be float or double"
                )))
            }
            None => return Err(IoError::UnsupportedLayout(format!("missing property {axis}"))),
        }
    }
    for name in vertex
        .properties
        .keys()
        .filter(|k| !["x", "y", "z"].contains(&k.as_str()))
    {
        warn!("ignoring vertex property {name}");
    }
    let payload = parser
        .read_payload(&mut reader, &header)
        .map_err(|e| match (e.kind(), e.line()) {
            (io::ErrorKind::UnexpectedEof, _) => IoError::CorruptHeader(format!("element count exceeds data ({e})")),
            (_, Some(line)) if header.encoding == Encoding::Ascii => IoError::InvalidCoordinate {
                unit: "line",
                index: line,
            },
            _ => IoError::CorruptPayload(e.to_string()),
        })?;
    let vertices = payload.get("vertex").map(Vec::as_slice).unwrap_or(&[]);
    let mut points = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let bad = || IoError::InvalidCoordinate {
            unit: "record",
            index: i + 1,
        };
        let mut xyz = [0.0; 3];
        for (c, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
            *c = v
                .get(axis)
                .and_then(scalar_value)
                .filter(|x| x.is_finite())
                .ok_or_else(bad)?;
        }
        points.push(Point::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud::new(points)?)
}

pub fn write_cloud(cloud: &PointCloud, file: &CloudFile) -> Result<(), IoError> {
    let io_err = |source| IoError::Io {
        path: file.path.clone(),
        source,
    };
    let mut out = BufWriter::new(File::create(&file.path).map_err(io_err)?);
    match file.format {
        CloudFormat::Xyz => write_xyz(cloud, &mut out),
        CloudFormat::PlyAscii => write_ply(cloud, Encoding::Ascii, &mut out),
        CloudFormat::PlyBinaryLe => write_ply(cloud, Encoding::BinaryLittleEndian, &mut out),
    }
    .and_then(|()| out.flush())
    .map_err(io_err)
}

/// Shortest round-trip decimal form, so text output is exact.
pub fn write_xyz(cloud: &PointCloud, out: &mut impl Write) -> io::Result<()> {
    for p in cloud.points() {
        writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn write_ply(cloud: &PointCloud, encoding: Encoding, out: &mut impl Write) -> io::Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = encoding;
    let mut vertex = ElementDef::new("vertex".into());
    for axis in ["x", "y", "z"] {
        vertex
            .properties
            .add(PropertyDef::new(axis.into(), PropertyType::Scalar(ScalarType::Double)));
    }
    ply.header.elements.add(vertex);
    let rows = cloud
        .points()
        .iter()
        .map(|p| {
            let mut e = DefaultElement::new();
            e.insert("x".into(), Property::Double(p.x));
            e.insert("y".into(), Property::Double(p.y));
            e.insert("z".into(), Property::Double(p.z));
            e
        })
        .collect();
    ply.payload.insert("vertex".into(), rows);
    Writer::new().write_ply(out, &mut ply)?;
    Ok(())
}
