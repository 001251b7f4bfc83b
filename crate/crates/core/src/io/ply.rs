use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;
use ply_rs_bw::parser::Parser;
use ply_rs_bw::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs_bw::writer::Writer;

use super::create_parent;
use crate::calib::CameraId;
use crate::error::{Error, Result};
use crate::fuse::ColourisedCloud;
use crate::geometry::PointCloud;

const VERTEX: &str = "vertex";
const TIMESTAMP: &str = "timestamp_ns";

fn scalar(name: &str, ty: ScalarType) -> PropertyDef {
    PropertyDef::new(name.to_string(), PropertyType::Scalar(ty))
}

fn header(count: usize, props: &[PropertyDef], timestamp_ns: i64) -> Ply<DefaultElement> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    ply.header.comments.push(format!("{TIMESTAMP} {timestamp_ns}"));
    let mut vertex = ElementDef::new(VERTEX.to_string());
    for p in props {
        vertex.properties.add(p.clone());
    }
    vertex.count = count;
    ply.header.elements.add(vertex);
    ply
}

fn xyz(p: &Point3<f64>) -> DefaultElement {
    let mut e = DefaultElement::new();
    e.insert("x".into(), Property::Double(p.x));
    e.insert("y".into(), Property::Double(p.y));
    e.insert("z".into(), Property::Double(p.z));
    e
}

fn emit<W: Write>(out: &mut W, mut ply: Ply<DefaultElement>, rows: Vec<DefaultElement>) -> Result<()> {
    ply.payload.insert(VERTEX.to_string(), rows);
    Writer::new()
        .write_ply(out, &mut ply)
        .map_err(|e| Error::format("<ply>", e.to_string()))?;
    Ok(())
}

/// Binary PLY with double coordinates, plus colour and intensity when the
/// cloud carries them.
pub fn write_cloud_ply<W: Write>(out: &mut W, cloud: &PointCloud) -> Result<()> {
    cloud.validate()?;
    let mut props = vec![
        scalar("x", ScalarType::Double),
        scalar("y", ScalarType::Double),
        scalar("z", ScalarType::Double),
    ];
    if cloud.colors.is_some() {
        props.extend(["red", "green", "blue"].map(|c| scalar(c, ScalarType::UChar)));
    }
    if cloud.intensity.is_some() {
        props.push(scalar("intensity", ScalarType::Float));
    }
    let rows = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut e = xyz(p);
            if let Some(c) = &cloud.colors {
                e.insert("red".into(), Property::UChar(c[i][0]));
                e.insert("green".into(), Property::UChar(c[i][1]));
                e.insert("blue".into(), Property::UChar(c[i][2]));
            }
            if let Some(v) = &cloud.intensity {
                e.insert("intensity".into(), Property::Float(v[i]));
            }
            e
        })
        .collect();
    emit(out, header(cloud.len(), &props, cloud.timestamp_ns), rows)
}

/// Binary PLY with x, y, z, red, green, blue and camera_id (255 = none).
pub fn write_colourised_ply<W: Write>(out: &mut W, cloud: &ColourisedCloud) -> Result<()> {
    if cloud.rgb.len() != cloud.len() || cloud.source.len() != cloud.len() {
        return Err(Error::invalid("colourised cloud arrays differ in length"));
    }
    let mut props = vec![
        scalar("x", ScalarType::Double),
        scalar("y", ScalarType::Double),
        scalar("z", ScalarType::Double),
    ];
    props.extend(["red", "green", "blue", "camera_id"].map(|c| scalar(c, ScalarType::UChar)));
    let rows = cloud
        .points
        .iter()
        .zip(&cloud.rgb)
        .zip(cloud.camera_bytes())
        .map(|((p, c), id)| {
            let mut e = xyz(p);
            e.insert("red".into(), Property::UChar(c[0]));
            e.insert("green".into(), Property::UChar(c[1]));
            e.insert("blue".into(), Property::UChar(c[2]));
            e.insert("camera_id".into(), Property::UChar(id));
            e
        })
        .collect();
    emit(out, header(cloud.len(), &props, cloud.timestamp_ns), rows)
}

struct Parsed {
    rows: Vec<DefaultElement>,
    timestamp_ns: i64,
}

fn parse<R: Read>(input: &mut R) -> Result<Parsed> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(input)
        .map_err(|e| Error::format("<ply>", e.to_string()))?;
    let timestamp_ns = ply
        .header
        .comments
        .iter()
        .find_map(|c| c.strip_prefix(TIMESTAMP)?.trim().parse().ok())
        .unwrap_or(0);
    let mut payload = ply.payload;
    let rows = payload
        .shift_remove(VERTEX)
        .ok_or_else(|| Error::format("<ply>", "no vertex element"))?;
    Ok(Parsed { rows, timestamp_ns })
}

fn number(e: &DefaultElement, name: &str) -> Result<Option<f64>> {
    Ok(match e.get(name) {
        None => None,
        Some(p) => Some(match *p {
            Property::Double(v) => v,
            Property::Float(v) => f64::from(v),
            Property::Char(v) => f64::from(v),
            Property::UChar(v) => f64::from(v),
            Property::Short(v) => f64::from(v),
            Property::UShort(v) => f64::from(v),
            Property::Int(v) => f64::from(v),
            Property::UInt(v) => f64::from(v),
            _ => return Err(Error::format("<ply>", format!("property {name} is a list"))),
        }),
    })
}

fn required(e: &DefaultElement, name: &str) -> Result<f64> {
    number(e, name)?.ok_or_else(|| Error::format("<ply>", format!("vertex lacks {name}")))
}

fn byte(e: &DefaultElement, name: &str) -> Result<Option<u8>> {
    match e.get(name) {
        None => Ok(None),
        Some(Property::UChar(v)) => Ok(Some(*v)),
        Some(_) => match number(e, name)? {
            Some(v) if (0.0..=255.0).contains(&v) => Ok(Some(v.round() as u8)),
            _ => Err(Error::format("<ply>", format!("{name} outside 0..=255"))),
        },
    }
}

fn point(e: &DefaultElement) -> Result<Point3<f64>> {
    Ok(Point3::new(required(e, "x")?, required(e, "y")?, required(e, "z")?))
}

fn rgb(e: &DefaultElement) -> Result<Option<[u8; 3]>> {
    match (byte(e, "red")?, byte(e, "green")?, byte(e, "blue")?) {
        (Some(r), Some(g), Some(b)) => Ok(Some([r, g, b])),
        (None, None, None) => Ok(None),
        _ => Err(Error::format("<ply>", "partial colour properties")),
    }
}

/// Reads any PLY with x/y/z vertices; colour and intensity are kept when
/// every vertex has them.
pub fn read_cloud_ply<R: Read>(input: &mut R) -> Result<PointCloud> {
    let parsed = parse(input)?;
    let mut points = Vec::with_capacity(parsed.rows.len());
    let mut colors = Vec::with_capacity(parsed.rows.len());
    let mut intensity = Vec::with_capacity(parsed.rows.len());
    for e in &parsed.rows {
        points.push(point(e)?);
        if let Some(c) = rgb(e)? {
            colors.push(c);
        }
        if let Some(v) = number(e, "intensity")? {
            intensity.push(v as f32);
        }
    }
    let n = points.len();
    let cloud = PointCloud {
        points,
        timestamp_ns: parsed.timestamp_ns,
        intensity: (n > 0 && intensity.len() == n).then_some(intensity),
        colors: (n > 0 && colors.len() == n).then_some(colors),
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn read_colourised_ply<R: Read>(input: &mut R) -> Result<ColourisedCloud> {
    let parsed = parse(input)?;
    let mut out = ColourisedCloud {
        timestamp_ns: parsed.timestamp_ns,
        ..ColourisedCloud::default()
    };
    for e in &parsed.rows {
        out.points.push(point(e)?);
        out.rgb.push(rgb(e)?.unwrap_or([0, 0, 0]));
        let id = byte(e, "camera_id")?.unwrap_or(CameraId::NONE);
        out.source.push((id != CameraId::NONE).then_some(CameraId(id)));
    }
    Ok(out)
}

fn relabel(path: &Path, e: Error) -> Error {
    match e {
        Error::Format { message, .. } => Error::format(path, message),
        other => other,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    read_cloud_ply(&mut open(path)?).map_err(|e| relabel(path, e))
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_cloud_ply(&mut w, cloud).map_err(|e| relabel(path, e))?;
    finish(path, w)
}

pub fn load_colourised(path: impl AsRef<Path>) -> Result<ColourisedCloud> {
    let path = path.as_ref();
    read_colourised_ply(&mut open(path)?).map_err(|e| relabel(path, e))
}

pub fn save_colourised(path: impl AsRef<Path>, cloud: &ColourisedCloud) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_colourised_ply(&mut w, cloud).map_err(|e| relabel(path, e))?;
    finish(path, w)
}
