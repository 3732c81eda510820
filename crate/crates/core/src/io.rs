//! Point-cloud and mesh file I/O. ASCII only: XYZ (one `x y z` triple per
//! line), PLY (ASCII 1.0, vertex element), and a small OBJ subset for
//! triangle meshes. Floats are written in Rust's shortest round-trip form,
//! so serialize -> parse recovers coordinates exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, Triangle};
use crate::shapes::TriangleMesh;

/// Preallocation cap so a lying header cannot force a huge allocation.
const PREALLOC_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

pub fn detect_format(path: &Path) -> Result<CloudFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
        Some("ply") => Ok(CloudFormat::Ply),
        other => Err(Error::InvalidParameter(format!(
            "cannot infer cloud format from extension {:?} of {}",
            other,
            path.display()
        ))),
    }
}

fn parse_coord(tok: &str, path: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line_no, format!("invalid coordinate `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line_no, "non-finite coordinate"));
    }
    Ok(v)
}

/// XYZ: whitespace-separated triples, one point per line. Blank lines and
/// `#` comment lines are skipped.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let path = "xyz";
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b), Some(c)) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::parse(path, line_no, "expected three coordinates"));
        };
        if toks.next().is_some() {
            return Err(Error::parse(path, line_no, "trailing tokens after z"));
        }
        points.push(Point3::new(
            parse_coord(a, path, line_no)?,
            parse_coord(b, path, line_no)?,
            parse_coord(c, path, line_no)?,
        ));
    }
    Ok(PointCloud::new(points))
}

pub fn serialize_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

/// Minimal ASCII PLY: a `vertex` element with float/double properties
/// including x, y, z. Extra scalar vertex properties are skipped; list
/// properties, binary formats, and non-empty foreign elements are rejected.
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let path = "ply";
    let mut lines = text.lines().enumerate();
    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if magic.trim_end() != "ply" {
        return Err(Error::parse(path, 1, "missing `ply` magic"));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut format_seen = false;
    let mut header_done = false;
    let mut last_line = 1;
    for (idx, line) in lines.by_ref() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.trim();
        if line.is_empty() || line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                let kind = toks.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unsupported format `{kind}`; only ascii 1.0"),
                    ));
                }
                format_seen = true;
            }
            Some("element") => {
                let name = toks.next().unwrap_or("");
                let count: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse(path, line_no, "invalid element count"))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(Error::parse(path, line_no, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if count > 0 {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("unsupported element `{name}` with {count} entries"),
                        ));
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue;
                }
                let ty = toks.next().unwrap_or("");
                if ty == "list" {
                    return Err(Error::parse(path, line_no, "list properties unsupported"));
                }
                let name = toks
                    .next()
                    .ok_or_else(|| Error::parse(path, line_no, "property missing name"))?;
                properties.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unexpected header line `{other}`"),
                ))
            }
            None => unreachable!("trimmed non-empty line"),
        }
    }
    if !header_done {
        return Err(Error::parse(path, last_line, "missing end_header"));
    }
    if !format_seen {
        return Err(Error::parse(path, last_line, "missing format line"));
    }
    let count =
        vertex_count.ok_or_else(|| Error::parse(path, last_line, "missing vertex element"))?;
    let find = |name: &str| -> Result<usize> {
        properties
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, last_line, format!("missing property `{name}`")))
    };
    let (ix, iy, iz) = (find("x")?, find("y")?, find("z")?);

    let mut points = Vec::with_capacity(count.min(PREALLOC_CAP));
    for _ in 0..count {
        let Some((idx, line)) = lines.next() else {
            return Err(Error::parse(path, last_line, "truncated vertex data"));
        };
        let line_no = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != properties.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "expected {} values, found {}",
                    properties.len(),
                    toks.len()
                ),
            ));
        }
        points.push(Point3::new(
            parse_coord(toks[ix], path, line_no)?,
            parse_coord(toks[iy], path, line_no)?,
            parse_coord(toks[iz], path, line_no)?,
        ));
    }
    for (idx, line) in lines {
        if !line.trim().is_empty() {
            return Err(Error::parse(path, idx + 1, "trailing content"));
        }
    }
    Ok(PointCloud::new(points))
}

pub fn serialize_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let format = detect_format(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let result = match format {
        CloudFormat::Xyz => parse_xyz(&text),
        CloudFormat::Ply => parse_ply(&text),
    };
    result.map_err(|e| relabel_parse(e, path))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let format = detect_format(path)?;
    let text = match format {
        CloudFormat::Xyz => serialize_xyz(cloud),
        CloudFormat::Ply => serialize_ply(cloud),
    };
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn relabel_parse(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        other => other,
    }
}

/// OBJ subset: `v x y z` vertices and `f` faces (fan-triangulated, `i`,
/// `i/t`, `i//n`, `i/t/n` and negative index forms). Everything else is
/// ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let path = "obj";
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<Triangle> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        match toks.next() {
            Some("v") => {
                let (Some(a), Some(b), Some(c)) = (toks.next(), toks.next(), toks.next()) else {
                    return Err(Error::parse(path, line_no, "vertex needs three numbers"));
                };
                vertices.push(Point3::new(
                    parse_coord(a, path, line_no)?,
                    parse_coord(b, path, line_no)?,
                    parse_coord(c, path, line_no)?,
                ));
            }
            Some("f") => {
                let mut indices = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let raw: i64 = first.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("invalid face index `{tok}`"))
                    })?;
                    let resolved: usize = if raw > 0 {
                        (raw - 1) as usize
                    } else if raw < 0 {
                        let back = (-raw) as usize;
                        if back > vertices.len() {
                            return Err(Error::parse(path, line_no, "negative index out of range"));
                        }
                        vertices.len() - back
                    } else {
                        return Err(Error::parse(path, line_no, "face index 0 is invalid"));
                    };
                    if resolved >= vertices.len() {
                        return Err(Error::parse(path, line_no, "face index out of range"));
                    }
                    indices.push(resolved);
                }
                if indices.len() < 3 {
                    return Err(Error::parse(path, line_no, "face needs at least 3 vertices"));
                }
                for i in 1..indices.len() - 1 {
                    triangles.push(Triangle::new(
                        vertices[indices[0]],
                        vertices[indices[i]],
                        vertices[indices[i + 1]],
                    ));
                }
            }
            _ => {} // vt, vn, o, g, s, usemtl, mtllib, ...
        }
    }
    TriangleMesh::new(triangles)
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_obj(&text).map_err(|e| relabel_parse(e, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn xyz_round_trip_exact() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.1, -2.5e-17, 3.0),
            Point3::new(f64::MIN_POSITIVE, 1.0 / 3.0, -0.0),
        ]);
        let text = serialize_xyz(&cloud);
        let parsed = parse_xyz(&text).unwrap();
        assert_eq!(parsed.points(), cloud.points());
    }

    #[test]
    fn xyz_rejects_malformed() {
        assert!(parse_xyz("1 2").is_err());
        assert!(parse_xyz("1 2 3 4").is_err());
        assert!(parse_xyz("1 2 nan").is_err());
        assert!(parse_xyz("a b c").is_err());
        // Blank lines and comments are fine.
        let ok = parse_xyz("# header\n\n1 2 3\n").unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn ply_round_trip_exact() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.5, 2.25, -3.125),
            Point3::new(0.1, 0.2, 0.3),
        ]);
        let text = serialize_ply(&cloud);
        let parsed = parse_ply(&text).unwrap();
        assert_eq!(parsed.points(), cloud.points());
    }

    #[test]
    fn ply_with_extra_properties_and_comments() {
        let text = "ply\nformat ascii 1.0\ncomment made somewhere\n\
                    element vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nend_header\n\
                    1 2 3 255\n4 5 6 0\n";
        let cloud = parse_ply(text).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], Point3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn ply_rejects_binary_and_lists_and_faces() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let with_list = "ply\nformat ascii 1.0\nelement vertex 1\n\
                         property list uchar int vertex_indices\nend_header\n0\n";
        assert!(parse_ply(with_list).is_err());
        let with_faces = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n\
                          property float y\nproperty float z\nelement face 2\n\
                          end_header\n1 2 3\n";
        assert!(parse_ply(with_faces).is_err());
        assert!(parse_ply("not a ply\n").is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\n\
                         property float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(parse_ply(truncated).is_err());
    }

    #[test]
    fn obj_parses_quads_and_slash_forms() {
        let text = "# cube corner\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n\
                    vn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.triangles().len(), 2);
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn obj_rejects_bad_indices() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        assert!(parse_obj("f 1 2 3\n").is_err());
        assert!(parse_obj("").is_err()); // no triangles
    }

    proptest! {
        #[test]
        fn xyz_round_trip_property(pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 0..50)) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect());
            let parsed = parse_xyz(&serialize_xyz(&cloud)).unwrap();
            prop_assert_eq!(parsed.points(), cloud.points());
        }

        #[test]
        fn ply_round_trip_property(pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 0..50)) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect());
            let parsed = parse_ply(&serialize_ply(&cloud)).unwrap();
            prop_assert_eq!(parsed.points(), cloud.points());
        }

        #[test]
        fn xyz_parser_never_panics(text in "(?s).{0,400}") {
            let _ = parse_xyz(&text);
        }

        #[test]
        fn ply_parser_never_panics(text in "(?s).{0,400}") {
            let _ = parse_ply(&text);
        }

        #[test]
        fn obj_parser_never_panics(text in "(?s).{0,400}") {
            let _ = parse_obj(&text);
        }
    }
}
