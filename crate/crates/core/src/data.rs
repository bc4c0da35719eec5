//! Synthetic pair factory and point/mesh file I/O.
//!
//! Templates are sampled uniformly by area from parametric primitives (or
//! user meshes), centred and scaled into the unit sphere. A partial source
//! keeps the template points closest to a random viewpoint, optionally gets
//! noise and outliers, and is finally moved by a random rigid transform.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::geom::{apply_transform, nearest_neighbors, GeomError, PointCloud, RigidTransform, Vec3};
use crate::masknet::apply_mask;

/// Distance of the simulated sensor from the template centroid.
pub const VIEWPOINT_RADIUS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad shape spec: {0}")]
    BadSpec(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

impl DataError {
    fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Shapes

/// Parametric surface primitives, in their own canonical frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half: Vec3 },
    /// Axis along z, centred at the origin.
    Cylinder { radius: f64, height: f64 },
    /// Symmetry axis along z.
    Torus { major: f64, minor: f64 },
    /// Base disk at z = 0, apex at z = height.
    Cone { radius: f64, height: f64 },
    /// Union of offset primitives (surfaces are sampled independently).
    Composite(Vec<(Shape, Vec3)>),
}

/// The primitive families the synthetic corpus draws categories from.
pub const SHAPE_FAMILIES: [&str; 6] = ["sphere", "box", "cylinder", "torus", "cone", "composite"];

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub seed: u64,
}

impl Shape {
    pub fn family(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Torus { .. } => "torus",
            Shape::Cone { .. } => "cone",
            Shape::Composite(_) => "composite",
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(DataError::BadSpec(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            Shape::Sphere { radius } => positive("radius", *radius),
            Shape::Box { half } => half.iter().try_for_each(|&h| positive("half extent", h)),
            Shape::Cylinder { radius, height } | Shape::Cone { radius, height } => {
                positive("radius", *radius)?;
                positive("height", *height)
            }
            Shape::Torus { major, minor } => {
                positive("major radius", *major)?;
                positive("minor radius", *minor)?;
                if minor >= major {
                    return Err(DataError::BadSpec("torus minor radius must be below major".into()));
                }
                Ok(())
            }
            Shape::Composite(parts) => {
                if parts.is_empty() {
                    return Err(DataError::BadSpec("empty composite".into()));
                }
                parts.iter().try_for_each(|(s, off)| {
                    if !off.iter().all(|c| c.is_finite()) {
                        return Err(DataError::BadSpec("non-finite offset".into()));
                    }
                    s.validate()
                })
            }
        }
    }

    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Box { half } => 8.0 * (half.x * half.y + half.y * half.z + half.x * half.z),
            Shape::Cylinder { radius, height } => 2.0 * PI * radius * (radius + height),
            Shape::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            Shape::Cone { radius, height } => {
                PI * radius * (radius + (radius * radius + height * height).sqrt())
            }
            Shape::Composite(parts) => parts.iter().map(|(s, _)| s.area()).sum(),
        }
    }

    /// One area-uniform surface sample.
    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        use std::f64::consts::TAU;
        match self {
            Shape::Sphere { radius } => unit_direction(rng) * *radius,
            Shape::Box { half } => {
                let areas = [half.y * half.z, half.x * half.z, half.x * half.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (a, &w) in areas.iter().enumerate() {
                    if pick < w {
                        axis = a;
                        break;
                    }
                    pick -= w;
                }
                let mut p = Vec3::new(
                    rng.random_range(-half.x..=half.x),
                    rng.random_range(-half.y..=half.y),
                    rng.random_range(-half.z..=half.z),
                );
                p[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
                p
            }
            Shape::Cylinder { radius, height } => {
                let side = TAU * radius * height;
                let cap = std::f64::consts::PI * radius * radius;
                let theta = rng.random_range(0.0..TAU);
                let pick = rng.random_range(0.0..side + 2.0 * cap);
                if pick < side {
                    Vec3::new(
                        radius * theta.cos(),
                        radius * theta.sin(),
                        rng.random_range(-height / 2.0..=height / 2.0),
                    )
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if pick < side + cap { height / 2.0 } else { -height / 2.0 };
                    Vec3::new(r * theta.cos(), r * theta.sin(), z)
                }
            }
            Shape::Torus { major, minor } => {
                // rejection on the tube angle: density proportional to R + r cos v
                let v = loop {
                    let v = rng.random_range(0.0..TAU);
                    if rng.random_range(0.0..major + minor) < major + minor * v.cos() {
                        break v;
                    }
                };
                let u = rng.random_range(0.0..TAU);
                let ring = major + minor * v.cos();
                Vec3::new(ring * u.cos(), ring * u.sin(), minor * v.sin())
            }
            Shape::Cone { radius, height } => {
                let slant = (radius * radius + height * height).sqrt();
                let lateral = std::f64::consts::PI * radius * slant;
                let base = std::f64::consts::PI * radius * radius;
                let theta = rng.random_range(0.0..TAU);
                let s = rng.random::<f64>().sqrt();
                if rng.random_range(0.0..lateral + base) < lateral {
                    let r = radius * s;
                    Vec3::new(r * theta.cos(), r * theta.sin(), height * (1.0 - s))
                } else {
                    let r = radius * s;
                    Vec3::new(r * theta.cos(), r * theta.sin(), 0.0)
                }
            }
            Shape::Composite(parts) => {
                let total = self.area();
                let mut pick = rng.random_range(0.0..total);
                for (shape, offset) in parts {
                    let a = shape.area();
                    if pick < a {
                        return shape.sample_point(rng) + offset;
                    }
                    pick -= a;
                }
                let (shape, offset) = parts.last().expect("validated");
                shape.sample_point(rng) + offset
            }
        }
    }
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Any unit vector orthogonal to `d`.
fn orthogonal(d: &Vec3) -> Vec3 {
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    d.cross(&helper).normalize()
}

impl ShapeSpec {
    pub fn new(shape: Shape, seed: u64) -> Self {
        Self { shape, seed }
    }

    /// Draws a member of `family` with randomized proportions.
    pub fn random<R: Rng + ?Sized>(family: &str, rng: &mut R) -> Result<Self, DataError> {
        let shape = random_shape(family, rng)?;
        Ok(Self {
            shape,
            seed: rng.next_u64(),
        })
    }

    /// [`ShapeSpec::random`] driven by a generator seeded with `seed`.
    pub fn from_seed(family: &str, seed: u64) -> Result<Self, DataError> {
        Self::random(family, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

fn random_shape<R: Rng + ?Sized>(family: &str, rng: &mut R) -> Result<Shape, DataError> {
    Ok(match family {
        "sphere" => Shape::Sphere { radius: 1.0 },
        "box" => Shape::Box {
            half: Vec3::new(
                rng.random_range(0.3..1.0),
                rng.random_range(0.3..1.0),
                rng.random_range(0.3..1.0),
            ),
        },
        "cylinder" => Shape::Cylinder {
            radius: rng.random_range(0.3..1.0),
            height: rng.random_range(0.5..2.0),
        },
        "torus" => Shape::Torus {
            major: rng.random_range(0.6..1.0),
            minor: rng.random_range(0.15..0.4),
        },
        "cone" => Shape::Cone {
            radius: rng.random_range(0.4..1.0),
            height: rng.random_range(0.6..2.0),
        },
        "composite" => {
            let parts = rng.random_range(2..=3);
            let mut list = Vec::with_capacity(parts);
            for _ in 0..parts {
                let part = match rng.random_range(0..3) {
                    0 => Shape::Sphere {
                        radius: rng.random_range(0.2..0.5),
                    },
                    1 => Shape::Box {
                        half: Vec3::new(
                            rng.random_range(0.1..0.5),
                            rng.random_range(0.1..0.5),
                            rng.random_range(0.1..0.5),
                        ),
                    },
                    _ => Shape::Cylinder {
                        radius: rng.random_range(0.1..0.4),
                        height: rng.random_range(0.3..1.0),
                    },
                };
                let offset = Vec3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                );
                list.push((part, offset));
            }
            Shape::Composite(list)
        }
        other => return Err(DataError::BadSpec(format!("unknown shape family '{other}'"))),
    })
}

/// Centres the cloud on its centroid and scales it so the farthest point
/// sits at radius 1.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centred = cloud.translated(&-c);
    let r = centred.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if r > 0.0 {
        PointCloud::new(centred.iter().map(|p| p / r).collect()).expect("finite")
    } else {
        centred
    }
}

/// `n` area-uniform surface samples, normalized into the unit sphere.
/// Deterministic in `spec.seed`.
pub fn sample_shape(spec: &ShapeSpec, n: usize) -> Result<PointCloud, DataError> {
    if n == 0 {
        return Err(DataError::BadSpec("n must be at least 1".into()));
    }
    spec.shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = match &spec.shape {
        // antipodal pairs (plus a zero-sum triple for odd n) so the sample
        // centroid is exactly the sphere centre
        Shape::Sphere { radius } => {
            let mut pts = Vec::with_capacity(n);
            if n % 2 == 1 && n >= 3 {
                let d = unit_direction(&mut rng);
                let a = orthogonal(&d);
                let b = d.cross(&a);
                let s = 3f64.sqrt() / 2.0;
                pts.push(d * *radius);
                pts.push((d * -0.5 + b * s) * *radius);
                pts.push((d * -0.5 - b * s) * *radius);
            } else if n == 1 {
                pts.push(unit_direction(&mut rng) * *radius);
            }
            while pts.len() < n {
                let d = unit_direction(&mut rng) * *radius;
                pts.push(d);
                pts.push(-d);
            }
            pts
        }
        shape => (0..n).map(|_| shape.sample_point(&mut rng)).collect(),
    };
    Ok(normalize_unit_sphere(&PointCloud::new(points)?))
}

// ---------------------------------------------------------------------------
// Meshes and files

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Polygon count as written in the file (before triangulation).
    pub polygon_count: usize,
}

impl TriangleMesh {
    pub fn vertex_cloud(&self) -> Result<PointCloud, DataError> {
        Ok(PointCloud::new(self.vertices.clone())?)
    }

    fn triangle_area(&self, f: &[usize; 3]) -> f64 {
        let [a, b, c] = f.map(|i| self.vertices[i]);
        (b - a).cross(&(c - a)).norm() * 0.5
    }
}

/// Area-weighted uniform samples on the mesh triangles, unnormalized.
pub fn sample_triangles(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud, DataError> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        total += mesh.triangle_area(f);
        cumulative.push(total);
    }
    if mesh.faces.is_empty() || !(total > 0.0) {
        return Err(DataError::BadSpec("mesh has no surface area".into()));
    }
    if n == 0 {
        return Err(DataError::BadSpec("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let pick = rng.random_range(0.0..total);
            let fi = cumulative.partition_point(|&c| c <= pick).min(mesh.faces.len() - 1);
            let [a, b, c] = mesh.faces[fi].map(|i| mesh.vertices[i]);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    Ok(PointCloud::new(points)?)
}

/// Area-weighted surface samples, normalized into the unit sphere.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud, DataError> {
    Ok(normalize_unit_sphere(&sample_triangles(mesh, n, seed)?))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(path: &Path, text: &str) -> Vec<(usize, String)> {
    let _ = path;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect()
}

fn parse_nums<T: std::str::FromStr>(path: &Path, line: usize, text: &str, what: &str) -> Result<Vec<T>, DataError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| DataError::parse(path, line, format!("bad {what} '{t}'")))
        })
        .collect()
}

fn triangulate(
    path: &Path,
    line: usize,
    poly: &[usize],
    nv: usize,
    faces: &mut Vec<[usize; 3]>,
) -> Result<(), DataError> {
    if poly.len() < 3 {
        return Err(DataError::parse(path, line, "face with fewer than 3 vertices"));
    }
    if let Some(&bad) = poly.iter().find(|&&i| i >= nv) {
        return Err(DataError::parse(path, line, format!("vertex index {bad} out of range")));
    }
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

pub fn parse_off(path: &Path, text: &str) -> Result<TriangleMesh, DataError> {
    let lines = content_lines(path, text);
    let mut it = lines.into_iter();
    let (hline, header) = it
        .next()
        .ok_or_else(|| DataError::parse(path, 1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| DataError::parse(path, hline, "missing OFF header"))?
        .trim()
        .to_string();
    // some exporters glue the counts onto the header line
    let (cline, counts_text) = if rest.is_empty() {
        it.next()
            .ok_or_else(|| DataError::parse(path, hline + 1, "missing element counts"))?
    } else {
        (hline, rest)
    };
    let counts: Vec<usize> = parse_nums(path, cline, &counts_text, "count")?;
    if counts.len() < 2 {
        return Err(DataError::parse(path, cline, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = it
            .next()
            .ok_or_else(|| DataError::parse(path, cline, "file ends before all vertices"))?;
        let v: Vec<f64> = parse_nums(path, ln, &l, "coordinate")?;
        if v.len() < 3 {
            return Err(DataError::parse(path, ln, "vertex needs 3 coordinates"));
        }
        if !v[..3].iter().all(|c| c.is_finite()) {
            return Err(DataError::parse(path, ln, "non-finite coordinate"));
        }
        vertices.push(Vec3::new(v[0], v[1], v[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = it
            .next()
            .ok_or_else(|| DataError::parse(path, cline, "file ends before all faces"))?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| DataError::parse(path, ln, format!("bad index '{t}'")))
            })
            .take_while(|_| true)
            .collect::<Result<_, _>>()
            .or_else(|e| {
                // trailing colour values may be floats; keep the integer prefix
                let ints: Vec<usize> = l
                    .split_whitespace()
                    .map_while(|t| t.parse::<usize>().ok())
                    .collect();
                if ints.is_empty() {
                    Err(e)
                } else {
                    Ok(ints)
                }
            })?;
        let k = *v.first().ok_or_else(|| DataError::parse(path, ln, "empty face"))?;
        if v.len() < k + 1 {
            return Err(DataError::parse(path, ln, "face lists fewer indices than declared"));
        }
        triangulate(path, ln, &v[1..=k], nv, &mut faces)?;
    }
    Ok(TriangleMesh {
        vertices,
        faces,
        polygon_count: nf,
    })
}

pub fn load_off(path: &Path) -> Result<TriangleMesh, DataError> {
    parse_off(path, &fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PlyType::I8 => b[0] as i8 as f64,
            PlyType::U8 => b[0] as f64,
            PlyType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PlyType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            PlyType::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar(String, PlyType),
    List(String, PlyType, PlyType),
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<PlyProperty>,
}

/// Parses ASCII or binary little-endian PLY. Only vertex positions and
/// face index lists are kept.
pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<TriangleMesh, DataError> {
    let mut reader = BufReader::new(bytes);
    let mut line = String::new();
    let mut ln = 0usize;
    let mut next_line = |reader: &mut BufReader<&[u8]>, line: &mut String| -> Result<usize, DataError> {
        line.clear();
        if reader.read_line(line)? == 0 {
            return Err(DataError::parse(path, ln + 1, "unexpected end of header"));
        }
        ln += 1;
        Ok(ln)
    };
    let l = next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(DataError::parse(path, l, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let l = next_line(&mut reader, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLe),
            ["format", other, ..] => {
                return Err(DataError::UnsupportedFormat(format!("PLY format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| DataError::parse(path, l, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| DataError::parse(path, l, "property before element"))?;
                let ct = PlyType::parse(ct).ok_or_else(|| DataError::parse(path, l, "bad type"))?;
                let it = PlyType::parse(it).ok_or_else(|| DataError::parse(path, l, "bad type"))?;
                el.props.push(PlyProperty::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| DataError::parse(path, l, "property before element"))?;
                let ty = PlyType::parse(ty).ok_or_else(|| DataError::parse(path, l, "bad type"))?;
                el.props.push(PlyProperty::Scalar(name.to_string(), ty));
            }
            _ => return Err(DataError::parse(path, l, format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| DataError::parse(path, ln, "missing format line"))?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;

    let mut mesh = TriangleMesh::default();
    match format {
        PlyFormat::Ascii => {
            let text = String::from_utf8_lossy(&body);
            let mut lines = text
                .lines()
                .enumerate()
                .map(|(i, l)| (ln + i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty());
            for el in &elements {
                for _ in 0..el.count {
                    let (lno, l) = lines
                        .next()
                        .ok_or_else(|| DataError::parse(path, ln, format!("missing {} data", el.name)))?;
                    let vals: Vec<f64> = parse_nums(path, lno, l, "value")?;
                    read_element(path, lno, el, &vals, &mut mesh)?;
                }
            }
        }
        PlyFormat::BinaryLe => {
            let mut pos = 0usize;
            let mut take = |n: usize| -> Result<&[u8], DataError> {
                let s = body
                    .get(pos..pos + n)
                    .ok_or_else(|| DataError::parse(path, ln, "binary body truncated"))?;
                pos += n;
                Ok(s)
            };
            for el in &elements {
                for _ in 0..el.count {
                    let mut vals = Vec::new();
                    for p in &el.props {
                        match *p {
                            PlyProperty::Scalar(_, ty) => vals.push(ty.read_le(take(ty.size())?)),
                            PlyProperty::List(_, ct, it) => {
                                let k = ct.read_le(take(ct.size())?);
                                vals.push(k);
                                for _ in 0..k as usize {
                                    vals.push(it.read_le(take(it.size())?));
                                }
                            }
                        }
                    }
                    read_element(path, ln, el, &vals, &mut mesh)?;
                }
            }
        }
    }
    for f in &mesh.faces {
        if f.iter().any(|&i| i >= mesh.vertices.len()) {
            return Err(DataError::parse(path, ln, "face index out of range"));
        }
    }
    Ok(mesh)
}

fn read_element(path: &Path, line: usize, el: &PlyElement, vals: &[f64], mesh: &mut TriangleMesh) -> Result<(), DataError> {
    match el.name.as_str() {
        "vertex" => {
            let mut xyz = [None; 3];
            let mut cursor = 0;
            for p in &el.props {
                match p {
                    PlyProperty::Scalar(name, _) => {
                        let v = *vals
                            .get(cursor)
                            .ok_or_else(|| DataError::parse(path, line, "vertex row too short"))?;
                        match name.as_str() {
                            "x" => xyz[0] = Some(v),
                            "y" => xyz[1] = Some(v),
                            "z" => xyz[2] = Some(v),
                            _ => {}
                        }
                        cursor += 1;
                    }
                    PlyProperty::List(..) => {
                        let k = *vals.get(cursor).unwrap_or(&0.0) as usize;
                        cursor += 1 + k;
                    }
                }
            }
            match xyz {
                [Some(x), Some(y), Some(z)] if x.is_finite() && y.is_finite() && z.is_finite() => {
                    mesh.vertices.push(Vec3::new(x, y, z))
                }
                _ => return Err(DataError::parse(path, line, "vertex lacks finite x/y/z")),
            }
        }
        "face" => {
            let mut cursor = 0;
            for p in &el.props {
                match p {
                    PlyProperty::Scalar(..) => cursor += 1,
                    PlyProperty::List(name, ..) => {
                        let k = *vals
                            .get(cursor)
                            .ok_or_else(|| DataError::parse(path, line, "face row too short"))?
                            as usize;
                        let idx: Vec<usize> = vals
                            .get(cursor + 1..cursor + 1 + k)
                            .ok_or_else(|| DataError::parse(path, line, "face row too short"))?
                            .iter()
                            .map(|&v| v as usize)
                            .collect();
                        if name == "vertex_indices" || name == "vertex_index" {
                            mesh.polygon_count += 1;
                            if idx.len() < 3 {
                                return Err(DataError::parse(path, line, "face with fewer than 3 vertices"));
                            }
                            for j in 1..idx.len() - 1 {
                                mesh.faces.push([idx[0], idx[j], idx[j + 1]]);
                            }
                        }
                        cursor += 1 + k;
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<TriangleMesh, DataError> {
    parse_ply(path, &fs::read(path)?)
}

/// Whitespace-separated `x y z` rows.
pub fn parse_xyz(path: &Path, text: &str) -> Result<PointCloud, DataError> {
    let mut points = Vec::new();
    for (ln, l) in content_lines(path, text) {
        let v: Vec<f64> = parse_nums(path, ln, &l, "coordinate")?;
        if v.len() != 3 {
            return Err(DataError::parse(path, ln, format!("expected 3 values, found {}", v.len())));
        }
        if !v.iter().all(|c| c.is_finite()) {
            return Err(DataError::parse(path, ln, "non-finite coordinate"));
        }
        points.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(PointCloud::new(points)?)
}

pub fn load_xyz(path: &Path) -> Result<PointCloud, DataError> {
    parse_xyz(path, &fs::read_to_string(path)?)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn load_mesh(path: &Path) -> Result<TriangleMesh, DataError> {
    match extension(path).as_str() {
        "off" => load_off(path),
        "ply" => load_ply(path),
        other => Err(DataError::UnsupportedFormat(format!("mesh extension '.{other}'"))),
    }
}

/// Reads a point cloud from `.xyz`, `.ply` or `.off` (vertices only).
pub fn load_cloud(path: &Path) -> Result<PointCloud, DataError> {
    match extension(path).as_str() {
        "xyz" | "txt" => load_xyz(path),
        "ply" => load_ply(path)?.vertex_cloud(),
        "off" => load_off(path)?.vertex_cloud(),
        other => Err(DataError::UnsupportedFormat(format!("cloud extension '.{other}'"))),
    }
}

pub fn xyz_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 64);
    for p in cloud.iter() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn ply_ascii_string(cloud: &PointCloud) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    s.push_str(&xyz_string(cloud));
    s
}

pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    fs::File::create(path)?.write_all(xyz_string(cloud).as_bytes())?;
    Ok(())
}

pub fn write_ply_ascii(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    fs::File::create(path)?.write_all(ply_ascii_string(cloud).as_bytes())?;
    Ok(())
}

/// Writes by extension (`.ply` or `.xyz`).
pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    match extension(path).as_str() {
        "ply" => write_ply_ascii(cloud, path),
        "xyz" | "txt" => write_xyz(cloud, path),
        other => Err(DataError::UnsupportedFormat(format!("cannot write '.{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Partial scans and corruptions

/// Keeps the `round(keep_fraction * N)` points closest to a viewpoint at
/// distance [`VIEWPOINT_RADIUS`] from the centroid along `direction`.
/// Returns the kept indices (ascending) and the template-side mask.
pub fn simulate_partial_from(
    template: &PointCloud,
    keep_fraction: f64,
    direction: &Vec3,
) -> Result<(Vec<usize>, Vec<bool>), DataError> {
    let n = template.len();
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(DataError::BadSpec(format!("keep_fraction {keep_fraction} outside (0, 1]")));
    }
    let k = (keep_fraction * n as f64).round() as usize;
    if k == 0 {
        return Err(DataError::BadSpec("partial scan would keep no points".into()));
    }
    let viewpoint = template.centroid() + direction.normalize() * VIEWPOINT_RADIUS;
    let query = PointCloud::new(vec![viewpoint])?;
    let mut kept = nearest_neighbors(&query, template, k)?.remove(0);
    kept.sort_unstable();
    let mut mask = vec![false; n];
    for &i in &kept {
        mask[i] = true;
    }
    Ok((kept, mask))
}

/// [`simulate_partial_from`] with a uniformly random viewing direction.
pub fn simulate_partial(
    template: &PointCloud,
    keep_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_partial_from(template, keep_fraction, &unit_direction(&mut rng))
}

/// Rotation about a uniformly random axis by an angle uniform in
/// `[0, rot_max_deg]`, translation uniform in `[-trans_max, trans_max]^3`.
pub fn random_transform_with<R: Rng + ?Sized>(rot_max_deg: f64, trans_max: f64, rng: &mut R) -> RigidTransform {
    let axis = unit_direction(rng);
    let angle = rng.random::<f64>() * rot_max_deg.to_radians();
    let mut t = RigidTransform::from_axis_angle(&axis, angle);
    t.translation = Vec3::new(
        (2.0 * rng.random::<f64>() - 1.0) * trans_max,
        (2.0 * rng.random::<f64>() - 1.0) * trans_max,
        (2.0 * rng.random::<f64>() - 1.0) * trans_max,
    );
    t
}

pub fn random_transform(rot_max_deg: f64, trans_max: f64, seed: u64) -> Result<RigidTransform, DataError> {
    if !(0.0..180.0).contains(&rot_max_deg) {
        return Err(DataError::BadSpec(format!("rot_max_deg {rot_max_deg} outside [0, 180)")));
    }
    if !(trans_max >= 0.0 && trans_max.is_finite()) {
        return Err(DataError::BadSpec(format!("trans_max {trans_max} must be >= 0")));
    }
    Ok(random_transform_with(
        rot_max_deg,
        trans_max,
        &mut ChaCha8Rng::seed_from_u64(seed),
    ))
}

/// Appends `round(fraction * N)` points uniform in `[-1, 1]^3`, then
/// shuffles. The mask marks original points `true`.
pub fn inject_outliers(cloud: &PointCloud, fraction: f64, seed: u64) -> Result<(PointCloud, Vec<bool>), DataError> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(DataError::BadSpec(format!("outlier fraction {fraction} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (fraction * cloud.len() as f64).round() as usize;
    let mut tagged: Vec<(Vec3, bool)> = cloud.iter().map(|p| (*p, true)).collect();
    for _ in 0..m {
        tagged.push((
            Vec3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            ),
            false,
        ));
    }
    tagged.shuffle(&mut rng);
    let (points, mask): (Vec<Vec3>, Vec<bool>) = tagged.into_iter().unzip();
    Ok((PointCloud::new(points)?, mask))
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud, DataError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::BadSpec(format!("noise sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| DataError::BadSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = cloud
        .iter()
        .map(|p| {
            p + Vec3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            )
        })
        .collect();
    Ok(PointCloud::new(points)?)
}

// ---------------------------------------------------------------------------
// Dataset

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    All,
    /// First half of the category list.
    Seen,
    /// Second half of the category list.
    Unseen,
}

impl std::str::FromStr for Split {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "all" => Ok(Split::All),
            "seen" => Ok(Split::Seen),
            "unseen" => Ok(Split::Unseen),
            other => Err(DataError::Config(format!("unknown split '{other}'"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::All => "all",
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetConfig {
    /// Shape families (ignored when `mesh_dir` is set).
    pub shapes: Vec<String>,
    /// Directory of `.off`/`.ply` meshes; the category is the first
    /// sub-directory, or the file stem for files at the top level.
    pub mesh_dir: Option<PathBuf>,
    pub n_points: usize,
    pub keep_fraction: f64,
    pub rot_max_deg: f64,
    pub trans_max: f64,
    pub outlier_fraction: f64,
    pub noise_sigma: f64,
    pub split: Split,
    pub seed: u64,
    pub count: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            shapes: SHAPE_FAMILIES.iter().map(|s| s.to_string()).collect(),
            mesh_dir: None,
            n_points: 1024,
            keep_fraction: 0.7,
            rot_max_deg: 45.0,
            trans_max: 1.0,
            outlier_fraction: 0.0,
            noise_sigma: 0.0,
            split: Split::All,
            seed: 0,
            count: 1000,
        }
    }
}

pub const DATASET_KEYS: [&str; 11] = [
    "shapes",
    "mesh_dir",
    "n_points",
    "keep_fraction",
    "rot_max_deg",
    "trans_max",
    "outlier_fraction",
    "noise_sigma",
    "split",
    "seed",
    "count",
];

impl DatasetConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), DataError> {
        let bad = |e: &dyn std::fmt::Display| DataError::Config(format!("{key}: {e}"));
        match key {
            "shapes" => {
                self.shapes = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "mesh_dir" => {
                self.mesh_dir = if value.is_empty() { None } else { Some(PathBuf::from(value)) }
            }
            "n_points" => self.n_points = value.parse().map_err(|e| bad(&e))?,
            "keep_fraction" => self.keep_fraction = value.parse().map_err(|e| bad(&e))?,
            "rot_max_deg" => self.rot_max_deg = value.parse().map_err(|e| bad(&e))?,
            "trans_max" => self.trans_max = value.parse().map_err(|e| bad(&e))?,
            "outlier_fraction" => self.outlier_fraction = value.parse().map_err(|e| bad(&e))?,
            "noise_sigma" => self.noise_sigma = value.parse().map_err(|e| bad(&e))?,
            "split" => self.split = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
            "count" => self.count = value.parse().map_err(|e| bad(&e))?,
            other => return Err(DataError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file over the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DataError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| DataError::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        format!(
            "shapes = {}\nmesh_dir = {}\nn_points = {}\nkeep_fraction = {}\nrot_max_deg = {}\ntrans_max = {}\noutlier_fraction = {}\nnoise_sigma = {}\nsplit = {}\nseed = {}\ncount = {}\n",
            self.shapes.join(","),
            self.mesh_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.n_points,
            self.keep_fraction,
            self.rot_max_deg,
            self.trans_max,
            self.outlier_fraction,
            self.noise_sigma,
            self.split,
            self.seed,
            self.count
        )
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Config(m));
        if self.mesh_dir.is_none() {
            if self.shapes.is_empty() {
                return err("shapes list is empty".into());
            }
            for s in &self.shapes {
                if !SHAPE_FAMILIES.contains(&s.as_str()) {
                    return err(format!("unknown shape family '{s}'"));
                }
            }
            let unique: BTreeSet<&String> = self.shapes.iter().collect();
            if unique.len() != self.shapes.len() {
                return err("duplicate shape family".into());
            }
        }
        if self.n_points < 3 {
            return err("n_points must be at least 3".into());
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return err("keep_fraction must lie in (0, 1]".into());
        }
        if (self.keep_fraction * self.n_points as f64).round() < 1.0 {
            return err("keep_fraction * n_points must round to at least 1".into());
        }
        if !(0.0..180.0).contains(&self.rot_max_deg) {
            return err("rot_max_deg must lie in [0, 180)".into());
        }
        if !(self.trans_max >= 0.0 && self.trans_max.is_finite()) {
            return err("trans_max must be >= 0".into());
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction.is_finite()) {
            return err("outlier_fraction must be >= 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return err("noise_sigma must be >= 0".into());
        }
        if self.count == 0 {
            return err("count must be at least 1".into());
        }
        Ok(())
    }
}

/// One training/evaluation record.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub template: PointCloud,
    pub source: PointCloud,
    /// Template points visible in the source.
    pub gt_mask: Vec<bool>,
    /// Source points that are genuine surface points (false = injected
    /// outlier). All true when no outliers were injected.
    pub source_mask: Vec<bool>,
    /// Transform applied to the partial scan to produce the source, so
    /// `gt_transform^-1` registers the source onto the template.
    pub gt_transform: RigidTransform,
    pub category: String,
}

impl PairSample {
    /// Source-to-template ground truth.
    pub fn registration_truth(&self) -> RigidTransform {
        self.gt_transform.inverse()
    }
}

#[derive(Debug, Clone)]
enum Corpus {
    Shapes(Vec<String>),
    Meshes(Vec<(String, Vec<TriangleMesh>)>),
}

/// A reproducible stream of [`PairSample`]s. Sample `i` depends only on
/// `(config, i)`, so any subset can be regenerated independently.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    corpus: Corpus,
}

/// Categories of the requested half of `all` (first half seen, rest unseen).
pub fn split_categories(all: &[String], split: Split) -> Vec<String> {
    let half = all.len().div_ceil(2);
    match split {
        Split::All => all.to_vec(),
        Split::Seen => all[..half].to_vec(),
        Split::Unseen => all[half..].to_vec(),
    }
}

fn find_meshes(root: &Path) -> Result<Vec<(String, PathBuf)>, DataError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(extension(&path).as_str(), "off" | "ply") {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                let comps: Vec<_> = rel.components().collect();
                let category = if comps.len() >= 2 {
                    comps[0].as_os_str().to_string_lossy().to_string()
                } else {
                    path.file_stem().unwrap_or_default().to_string_lossy().to_string()
                };
                out.push((category, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    pub fn new(config: DatasetConfig) -> Result<Self, DataError> {
        config.validate()?;
        let corpus = match &config.mesh_dir {
            None => {
                let cats = split_categories(&config.shapes, config.split);
                if cats.is_empty() {
                    return Err(DataError::Config("split leaves no categories".into()));
                }
                Corpus::Shapes(cats)
            }
            Some(dir) => {
                let files = find_meshes(dir)?;
                let all: Vec<String> = files
                    .iter()
                    .map(|(c, _)| c.clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let cats = split_categories(&all, config.split);
                if cats.is_empty() {
                    return Err(DataError::Config(format!("no meshes for split in {}", dir.display())));
                }
                let mut groups = Vec::new();
                for c in cats {
                    let meshes = files
                        .iter()
                        .filter(|(fc, _)| *fc == c)
                        .map(|(_, p)| load_mesh(p))
                        .collect::<Result<Vec<_>, _>>()?;
                    groups.push((c, meshes));
                }
                Corpus::Meshes(groups)
            }
        };
        Ok(Self { config, corpus })
    }

    pub fn len(&self) -> usize {
        self.config.count
    }

    pub fn is_empty(&self) -> bool {
        self.config.count == 0
    }

    pub fn categories(&self) -> Vec<String> {
        match &self.corpus {
            Corpus::Shapes(c) => c.clone(),
            Corpus::Meshes(g) => g.iter().map(|(c, _)| c.clone()).collect(),
        }
    }

    /// Generates sample `index` (valid for any index, not only `< count`).
    pub fn sample(&self, index: usize) -> Result<PairSample, DataError> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let (category, template) = match &self.corpus {
            Corpus::Shapes(cats) => {
                let cat = cats[rng.random_range(0..cats.len())].clone();
                let spec = ShapeSpec::random(&cat, &mut rng)?;
                (cat, sample_shape(&spec, cfg.n_points)?)
            }
            Corpus::Meshes(groups) => {
                let (cat, meshes) = &groups[rng.random_range(0..groups.len())];
                let mesh = &meshes[rng.random_range(0..meshes.len())];
                (cat.clone(), sample_mesh_surface(mesh, cfg.n_points, rng.next_u64())?)
            }
        };
        let (_, gt_mask) = simulate_partial(&template, cfg.keep_fraction, rng.next_u64())?;
        let mut partial = apply_mask(&gt_mask, &template).expect("mask length matches");
        let noise_seed = rng.next_u64();
        let outlier_seed = rng.next_u64();
        if cfg.noise_sigma > 0.0 {
            partial = add_gaussian_noise(&partial, cfg.noise_sigma, noise_seed)?;
        }
        let mut source_mask = vec![true; partial.len()];
        if cfg.outlier_fraction > 0.0 {
            let (p, m) = inject_outliers(&partial, cfg.outlier_fraction, outlier_seed)?;
            partial = p;
            source_mask = m;
        }
        let gt_transform = random_transform_with(cfg.rot_max_deg, cfg.trans_max, &mut rng);
        Ok(PairSample {
            source: apply_transform(&gt_transform, &partial),
            template,
            gt_mask,
            source_mask,
            gt_transform,
            category,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<PairSample, DataError>> + '_ {
        (0..self.config.count).map(move |i| self.sample(i))
    }
}

/// Convenience: builds the dataset and collects all samples.
pub fn make_dataset(config: &DatasetConfig) -> Result<Vec<PairSample>, DataError> {
    Dataset::new(config.clone())?.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masknet::apply_mask;

    fn any_spec(rng: &mut ChaCha8Rng) -> ShapeSpec {
        let fam = SHAPE_FAMILIES[rng.random_range(0..SHAPE_FAMILIES.len())];
        ShapeSpec::random(fam, rng).unwrap()
    }

    #[test]
    fn sphere_samples_lie_on_unit_sphere() {
        for n in [1usize, 2, 3, 7, 100, 1024] {
            let cloud = sample_shape(&ShapeSpec::new(Shape::Sphere { radius: 2.5 }, 3), n).unwrap();
            assert_eq!(cloud.len(), n);
            if n > 1 {
                for p in cloud.iter() {
                    assert!((p.norm() - 1.0).abs() < 1e-9, "n={n} radius {}", p.norm());
                }
            }
        }
    }

    #[test]
    fn normalization_holds_for_random_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let spec = any_spec(&mut rng);
            let cloud = sample_shape(&spec, 256).unwrap();
            let max = cloud.iter().map(|p| p.norm()).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-9);
            assert!(cloud.centroid().norm() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = any_spec(&mut rng);
        assert_eq!(sample_shape(&spec, 300).unwrap(), sample_shape(&spec, 300).unwrap());
        assert!(matches!(sample_shape(&spec, 0), Err(DataError::BadSpec(_))));
        let bad = ShapeSpec::new(Shape::Torus { major: 0.2, minor: 0.5 }, 0);
        assert!(matches!(sample_shape(&bad, 10), Err(DataError::BadSpec(_))));
        assert!(ShapeSpec::random("teapot", &mut rng).is_err());
    }

    const TETRA: &str = "OFF\n# unit tetrahedron\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn parses_tetrahedron_off() {
        let mesh = parse_off(Path::new("t.off"), TETRA).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.faces.len(), 4);
        assert_eq!(mesh.polygon_count, 4);
        let glued = parse_off(Path::new("g.off"), "OFF4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 3 2\n").unwrap();
        assert_eq!(glued.faces.len(), 2);
    }

    #[test]
    fn malformed_off_header_names_line_one() {
        let err = parse_off(Path::new("bad.off"), "OOF\n4 4 6\n").unwrap_err();
        match err {
            DataError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_off(Path::new("bad.off"), "OFF\n2 0 0\n0 0 0\n1 x 0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 4, .. }));
    }

    #[test]
    fn single_triangle_samples_are_inside() {
        let mesh = TriangleMesh {
            vertices: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.5)],
            faces: vec![[0, 1, 2]],
            polygon_count: 1,
        };
        let cloud = sample_triangles(&mesh, 2000, 5).unwrap();
        let [a, b, c] = mesh.faces[0].map(|i| mesh.vertices[i]);
        let (e0, e1) = (b - a, c - a);
        let (d00, d01, d11) = (e0.dot(&e0), e0.dot(&e1), e1.dot(&e1));
        let denom = d00 * d11 - d01 * d01;
        for p in cloud.iter() {
            let e2 = p - a;
            let (d20, d21) = (e2.dot(&e0), e2.dot(&e1));
            let v = (d11 * d20 - d01 * d21) / denom;
            let w = (d00 * d21 - d01 * d20) / denom;
            let u = 1.0 - v - w;
            assert!(u >= -1e-12 && v >= -1e-12 && w >= -1e-12);
        }
        let normalized = sample_mesh_surface(&mesh, 500, 5).unwrap();
        assert!(normalized.centroid().norm() < 1e-9);
    }

    #[test]
    fn ply_ascii_and_binary() {
        let ascii = "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 0 0 0\n0 1 0 9\n3 0 1 2\n";
        let mesh = parse_ply(Path::new("a.ply"), ascii.as_bytes()).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for v in [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.25]] {
            for c in v {
                bin.extend_from_slice(&c.to_le_bytes());
            }
        }
        bin.push(3);
        for i in [0u32, 1, 2] {
            bin.extend_from_slice(&i.to_le_bytes());
        }
        let mesh = parse_ply(Path::new("b.ply"), &bin).unwrap();
        assert_eq!(mesh.vertices[2], Vec3::new(0.0, 1.0, 0.25));
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
        assert!(parse_ply(Path::new("c.ply"), &bin[..bin.len() - 2]).is_err());
        assert!(matches!(
            parse_ply(Path::new("d.ply"), b"ply\nformat binary_big_endian 1.0\nend_header\n"),
            Err(DataError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn xyz_and_ply_writers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = sample_shape(&any_spec(&mut rng), 50).unwrap();
        for name in ["c.xyz", "c.ply"] {
            let p = dir.path().join(name);
            write_cloud(&cloud, &p).unwrap();
            assert_eq!(load_cloud(&p).unwrap(), cloud);
        }
        assert!(parse_xyz(Path::new("x.xyz"), "1 2\n").is_err());
        assert!(matches!(load_cloud(Path::new("x.obj")), Err(DataError::UnsupportedFormat(_))));
    }

    #[test]
    fn partial_scan_counts() {
        let cloud = sample_shape(&ShapeSpec::new(Shape::Sphere { radius: 1.0 }, 1), 1024).unwrap();
        let (idx, mask) = simulate_partial(&cloud, 1.0, 3).unwrap();
        assert_eq!(idx.len(), 1024);
        assert!(mask.iter().all(|&b| b));
        let (idx, mask) = simulate_partial(&cloud, 0.7, 3).unwrap();
        assert_eq!(idx.len(), 717);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 717);
        assert!(simulate_partial(&cloud, 0.0, 3).is_err());
    }

    #[test]
    fn partial_scan_keeps_points_facing_viewpoint() {
        let cloud = sample_shape(&ShapeSpec::new(Shape::Sphere { radius: 1.0 }, 4), 500).unwrap();
        let (_, mask) = simulate_partial_from(&cloud, 0.4, &Vec3::z()).unwrap();
        let min_kept = cloud.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| p.z).fold(f64::INFINITY, f64::min);
        let max_dropped = cloud.iter().zip(&mask).filter(|(_, &m)| !m).map(|(p, _)| p.z).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_kept >= max_dropped - 1e-12);
    }

    #[test]
    fn random_transform_bounds() {
        let t = random_transform(0.0, 0.0, 4).unwrap();
        assert!((t.rotation - crate::geom::Mat3::identity()).norm() < 1e-15);
        assert_eq!(t.translation, Vec3::zeros());
        assert_eq!(random_transform(45.0, 1.0, 7).unwrap(), random_transform(45.0, 1.0, 7).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let t = random_transform_with(45.0, 1.0, &mut rng);
            let a = t.angle().to_degrees();
            assert!((0.0..=45.0 + 1e-9).contains(&a));
            assert!(t.translation.iter().all(|c| c.abs() <= 1.0));
            assert!(t.is_valid(1e-9));
        }
        assert!(random_transform(180.0, 1.0, 0).is_err());
    }

    #[test]
    fn outlier_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = sample_shape(&any_spec(&mut rng), 1000).unwrap();
        let (same, mask) = inject_outliers(&cloud, 0.0, 1).unwrap();
        assert_eq!(same.len(), 1000);
        assert!(mask.iter().all(|&b| b));
        let (out, mask) = inject_outliers(&cloud, 0.1, 2).unwrap();
        assert_eq!(out.len(), 1100);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 1000);
        let kept = apply_mask(&mask, &out).unwrap();
        let key = |c: &PointCloud| {
            let mut v: Vec<[u64; 3]> = c.iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
            v.sort();
            v
        };
        assert_eq!(key(&kept), key(&cloud));
        let outliers = apply_mask(&mask.iter().map(|b| !b).collect::<Vec<_>>(), &out).unwrap();
        assert!(outliers.iter().all(|p| p.amax() <= 1.0));
    }

    #[test]
    fn gaussian_noise_statistics() {
        let cloud = PointCloud::new(vec![Vec3::zeros(); 33_334]).unwrap();
        assert_eq!(add_gaussian_noise(&cloud, 0.0, 1).unwrap(), cloud);
        let noisy = add_gaussian_noise(&cloud, 0.06, 2).unwrap();
        assert_eq!(noisy, add_gaussian_noise(&cloud, 0.06, 2).unwrap());
        let samples: Vec<f64> = noisy.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.06).abs() < 0.02 * 0.06, "std {std}");
    }

    #[test]
    fn config_round_trip_and_errors() {
        let mut cfg = DatasetConfig::default();
        cfg.count = 12;
        cfg.split = Split::Unseen;
        cfg.noise_sigma = 0.02;
        assert_eq!(DatasetConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(DatasetConfig::parse("bogus = 1\n").is_err());
        assert!(DatasetConfig::parse("keep_fraction = 1.5\n").is_err());
        assert!(DatasetConfig::parse("shapes = sphere,teapot\n").is_err());
        assert!(DatasetConfig::parse("count\n").is_err());
    }

    #[test]
    fn dataset_is_deterministic_and_splits_are_disjoint() {
        let cfg = DatasetConfig {
            n_points: 128,
            count: 10,
            seed: 3,
            ..DatasetConfig::default()
        };
        assert_eq!(make_dataset(&cfg).unwrap(), make_dataset(&cfg).unwrap());
        let seen = Dataset::new(DatasetConfig { split: Split::Seen, count: 40, ..cfg.clone() }).unwrap();
        let unseen = Dataset::new(DatasetConfig { split: Split::Unseen, count: 40, ..cfg.clone() }).unwrap();
        let a: BTreeSet<String> = seen.iter().map(|s| s.unwrap().category).collect();
        let b: BTreeSet<String> = unseen.iter().map(|s| s.unwrap().category).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(seen.categories(), vec!["sphere", "box", "cylinder"]);
    }

    #[test]
    fn samples_satisfy_pair_invariants() {
        let cfg = DatasetConfig {
            n_points: 256,
            count: 200,
            seed: 11,
            ..DatasetConfig::default()
        };
        for s in Dataset::new(cfg).unwrap().iter() {
            let s = s.unwrap();
            assert_eq!(s.gt_mask.len(), s.template.len());
            let k = s.gt_mask.iter().filter(|&&b| b).count();
            assert_eq!(k, s.source.len());
            assert_eq!(k, (0.7f64 * 256.0).round() as usize);
            let back = apply_transform(&s.gt_transform.inverse(), &s.source);
            let masked = apply_mask(&s.gt_mask, &s.template).unwrap();
            for (p, q) in back.iter().zip(masked.iter()) {
                assert!((p - q).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn mesh_directory_corpus() {
        let dir = tempfile::tempdir().unwrap();
        for cat in ["a", "b"] {
            fs::create_dir_all(dir.path().join(cat)).unwrap();
            fs::write(dir.path().join(cat).join("m.off"), TETRA).unwrap();
        }
        let cfg = DatasetConfig {
            mesh_dir: Some(dir.path().to_path_buf()),
            n_points: 64,
            count: 5,
            split: Split::Unseen,
            ..DatasetConfig::default()
        };
        let ds = Dataset::new(cfg).unwrap();
        assert_eq!(ds.categories(), vec!["b"]);
        assert!(ds.iter().all(|s| s.unwrap().category == "b"));
    }
}
