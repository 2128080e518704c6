//! Minimal PLY support: `ascii` and `binary_little_endian` bodies, scalar and
//! list properties of the standard numeric types. Enough for labeled point
//! clouds and labeled triangle meshes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{LabeledCloud, LabeledMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(name: &str) -> Option<Self> {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct PropertyDef {
    name: String,
    kind: Kind,
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<PropertyDef>,
}

/// Decoded contents of one PLY element.
#[derive(Debug, Clone, Default)]
pub struct PlyElement {
    pub name: String,
    pub count: usize,
    /// Scalar properties as columns, in header order.
    pub scalars: Vec<(String, Vec<f64>)>,
    /// List properties, one list per record.
    pub lists: Vec<(String, Vec<Vec<f64>>)>,
}

impl PlyElement {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn list(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.lists.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct PlyData {
    pub format: PlyFormat,
    pub elements: Vec<PlyElement>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == name)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |e| *pos + e);
        let line = String::from_utf8_lossy(&bytes[*pos..end])
            .trim_end_matches('\r')
            .to_string();
        *pos = (end + 1).min(bytes.len());
        Some(line)
    };

    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        let line = next_line(&mut pos).ok_or_else(|| parse_err(line_no, "missing end_header"))?;
        line_no += 1;
        let mut tok = line.split_whitespace();
        let Some(head) = tok.next() else { continue };
        match head {
            "ply" if line_no == 1 => {}
            _ if line_no == 1 => return Err(parse_err(1, "not a PLY file")),
            "comment" | "obj_info" => {}
            "format" => {
                format = Some(match tok.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => return Err(Error::Schema(format!("unsupported PLY format `{other}`"))),
                    None => return Err(parse_err(line_no, "format without a value")),
                });
            }
            "element" => {
                let name = tok.next().ok_or_else(|| parse_err(line_no, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "element without a count"))?;
                elements.push(ElementDef {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before any element"))?;
                let words: Vec<&str> = tok.collect();
                let bad = || parse_err(line_no, format!("bad property line `{line}`"));
                let prop = match words.as_slice() {
                    ["list", count, item, name] => PropertyDef {
                        name: name.to_string(),
                        kind: Kind::List {
                            count: Scalar::parse(count).ok_or_else(bad)?,
                            item: Scalar::parse(item).ok_or_else(bad)?,
                        },
                    },
                    [ty, name] => PropertyDef {
                        name: name.to_string(),
                        kind: Kind::Scalar(Scalar::parse(ty).ok_or_else(bad)?),
                    },
                    _ => return Err(bad()),
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(parse_err(line_no, format!("unknown header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(line_no, "header has no format line"))?;

    let mut out = Vec::with_capacity(elements.len());
    for def in &elements {
        let mut el = PlyElement {
            name: def.name.clone(),
            count: def.count,
            ..Default::default()
        };
        let mut scalar_cols: Vec<Vec<f64>> = Vec::new();
        let mut list_cols: Vec<Vec<Vec<f64>>> = Vec::new();
        for p in &def.properties {
            match p.kind {
                Kind::Scalar(_) => scalar_cols.push(Vec::with_capacity(def.count)),
                Kind::List { .. } => list_cols.push(Vec::with_capacity(def.count)),
            }
        }
        for _ in 0..def.count {
            let (mut si, mut li) = (0, 0);
            match format {
                PlyFormat::Ascii => {
                    let line = next_line(&mut pos)
                        .ok_or_else(|| parse_err(line_no + 1, format!("truncated `{}` data", def.name)))?;
                    line_no += 1;
                    let mut vals = line.split_whitespace().map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_err(line_no, format!("bad number `{t}`")))
                    });
                    let mut take = || vals.next().unwrap_or_else(|| Err(parse_err(line_no, "too few values")));
                    for p in &def.properties {
                        match p.kind {
                            Kind::Scalar(_) => {
                                scalar_cols[si].push(take()?);
                                si += 1;
                            }
                            Kind::List { .. } => {
                                let n = take()?;
                                if n < 0.0 || n.fract() != 0.0 {
                                    return Err(parse_err(line_no, "bad list length"));
                                }
                                let items = (0..n as usize).map(|_| take()).collect::<Result<Vec<_>>>()?;
                                list_cols[li].push(items);
                                li += 1;
                            }
                        }
                    }
                }
                PlyFormat::BinaryLittleEndian => {
                    let mut read = |ty: Scalar| -> Result<f64> {
                        let end = pos + ty.size();
                        if end > bytes.len() {
                            return Err(Error::Parse {
                                line: line_no,
                                message: format!("binary `{}` data truncated", def.name),
                            });
                        }
                        let v = ty.read_le(&bytes[pos..end]);
                        pos = end;
                        Ok(v)
                    };
                    for p in &def.properties {
                        match p.kind {
                            Kind::Scalar(ty) => {
                                scalar_cols[si].push(read(ty)?);
                                si += 1;
                            }
                            Kind::List { count, item } => {
                                let n = read(count)? as usize;
                                let items = (0..n).map(|_| read(item)).collect::<Result<Vec<_>>>()?;
                                list_cols[li].push(items);
                                li += 1;
                            }
                        }
                    }
                }
            }
        }
        let (mut si, mut li) = (scalar_cols.into_iter(), list_cols.into_iter());
        for p in &def.properties {
            match p.kind {
                Kind::Scalar(_) => el.scalars.push((p.name.clone(), si.next().expect("column"))),
                Kind::List { .. } => el.lists.push((p.name.clone(), li.next().expect("column"))),
            }
        }
        out.push(el);
    }
    Ok(PlyData { format, elements: out })
}

fn first_of<'a>(el: &'a PlyElement, names: &[&str]) -> Option<&'a [f64]> {
    names.iter().find_map(|n| el.scalar(n))
}

fn to_label(v: f64) -> i32 {
    v as i32
}

/// Builds a cloud from the `vertex` element: `x y z`, optional
/// `red green blue`, optional `semantic` and `instance`.
pub fn cloud_from_ply(ply: &PlyData) -> Result<LabeledCloud> {
    let v = ply
        .element("vertex")
        .ok_or_else(|| Error::Schema("PLY has no vertex element".into()))?;
    let coord = |n: &str| {
        v.scalar(n)
            .ok_or_else(|| Error::Schema(format!("PLY vertex has no `{n}` property")))
    };
    let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
    let points = (0..v.count).map(|i| [x[i] as f32, y[i] as f32, z[i] as f32]).collect();
    let mut cloud = LabeledCloud::unlabeled(points);
    if let Some(s) = first_of(v, &["semantic", "label", "class"]) {
        cloud.semantic = s.iter().copied().map(to_label).collect();
    }
    if let Some(s) = first_of(v, &["instance", "instance_id"]) {
        cloud.instance = s.iter().copied().map(to_label).collect();
    }
    if let (Some(r), Some(g), Some(b)) = (v.scalar("red"), v.scalar("green"), v.scalar("blue")) {
        cloud.color = Some((0..v.count).map(|i| [r[i] as u8, g[i] as u8, b[i] as u8]).collect());
    }
    cloud.check_finite()?;
    Ok(cloud)
}

/// Builds a mesh from `vertex` and `face` elements. Polygons are fan
/// triangulated; missing `organ_id`/`instance_id` become -1.
pub fn mesh_from_ply(ply: &PlyData) -> Result<LabeledMesh> {
    let v = ply
        .element("vertex")
        .ok_or_else(|| Error::Schema("PLY has no vertex element".into()))?;
    let coord = |n: &str| {
        v.scalar(n)
            .ok_or_else(|| Error::Schema(format!("PLY vertex has no `{n}` property")))
    };
    let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
    let mut mesh = LabeledMesh {
        vertices: (0..v.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect(),
        ..Default::default()
    };
    let Some(f) = ply.element("face") else {
        return Ok(mesh);
    };
    let idx = f
        .list("vertex_indices")
        .or_else(|| f.list("vertex_index"))
        .ok_or_else(|| Error::Schema("PLY face has no vertex_indices".into()))?;
    let organ = f.scalar("organ_id");
    let inst = f.scalar("instance_id");
    for (i, poly) in idx.iter().enumerate() {
        let o = organ.map_or(-1, |c| to_label(c[i]));
        let n = inst.map_or(-1, |c| to_label(c[i]));
        for k in 1..poly.len().saturating_sub(1) {
            mesh.add_face([poly[0] as u32, poly[k] as u32, poly[k + 1] as u32], o, n);
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Writes a labeled cloud with float coordinates and int labels.
pub fn write_cloud_ply(cloud: &LabeledCloud, path: &Path, format: PlyFormat) -> Result<()> {
    let mut header = String::from("ply\n");
    header += match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    };
    header += &format!("element vertex {}\n", cloud.len());
    header += "property float x\nproperty float y\nproperty float z\n";
    if cloud.color.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    header += "property int semantic\nproperty int instance\nend_header\n";
    let mut buf = header.into_bytes();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let rgb = cloud.color.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p[0], p[1], p[2]);
                if let Some([r, g, b]) = rgb {
                    line += &format!(" {r} {g} {b}");
                }
                line += &format!(" {} {}\n", cloud.semantic[i], cloud.instance[i]);
                buf.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    buf.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(rgb) = rgb {
                    buf.extend_from_slice(&rgb);
                }
                buf.extend_from_slice(&cloud.semantic[i].to_le_bytes());
                buf.extend_from_slice(&cloud.instance[i].to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes a labeled mesh as binary little-endian PLY with double vertices and
/// per-face `organ_id`/`instance_id`.
pub fn write_mesh_ply(mesh: &LabeledMesh, path: &Path) -> Result<()> {
    fs::write(path, mesh_ply_bytes(mesh)).map_err(|e| Error::io(path, e))
}

pub fn mesh_ply_bytes(mesh: &LabeledMesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\n\
         property int organ_id\nproperty int instance_id\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let mut buf = header.into_bytes();
    buf.reserve(mesh.vertices.len() * 24 + mesh.faces.len() * 21);
    for v in &mesh.vertices {
        for c in v.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        buf.push(3);
        for &i in face {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
        buf.extend_from_slice(&mesh.organ[f].to_le_bytes());
        buf.extend_from_slice(&mesh.instance[f].to_le_bytes());
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_cloud_with_labels_and_color() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\n\
                    property float y\nproperty float z\nproperty uchar red\nproperty uchar green\n\
                    property uchar blue\nproperty int semantic\nproperty int instance\nend_header\n\
                    0 0 0 255 0 0 0 -1\n1 2 3 0 255 0 1 4\n";
        let cloud = cloud_from_ply(&parse_ply(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(cloud.points, vec![[0.0; 3], [1.0, 2.0, 3.0]]);
        assert_eq!(cloud.semantic, vec![0, 1]);
        assert_eq!(cloud.instance, vec![-1, 4]);
        assert_eq!(cloud.color.unwrap()[1], [0, 255, 0]);
    }

    #[test]
    fn truncated_ascii_reports_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nend_header\n0 0 0\n1 oops 1\n";
        match parse_ply(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_coordinate_is_schema_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n";
        let ply = parse_ply(text.as_bytes()).unwrap();
        assert!(matches!(cloud_from_ply(&ply), Err(Error::Schema(_))));
    }

    #[test]
    fn big_endian_is_rejected() {
        let text = "ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(matches!(parse_ply(text.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn mesh_round_trip() {
        let mut mesh = LabeledMesh::default();
        mesh.add_triangle(
            [
                Vec3::new(0.1, 0.2, 0.3),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 1e-9),
            ],
            1,
            7,
        );
        mesh.add_face([0, 2, 1], 0, 0);
        let back = mesh_from_ply(&parse_ply(&mesh_ply_bytes(&mesh)).unwrap()).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
                    property float z\nelement face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = mesh_from_ply(&parse_ply(text.as_bytes()).unwrap()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(mesh.organ, vec![-1, -1]);
    }
}
