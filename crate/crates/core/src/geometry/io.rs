//! ASCII PLY and JSON point cloud files.
//!
//! PLY label names travel in `comment label <id> <name>` header lines; the
//! vertex element carries `x y z [label]` with an integer label id.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

pub fn write_ply_string(cloud: &PointCloud) -> String {
    let names = cloud.label_set();
    let ids: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    for (i, n) in names.iter().enumerate() {
        let _ = writeln!(out, "comment label {i} {n}");
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.labels().is_some() {
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(l) = cloud.label(i) {
            let _ = write!(out, " {}", ids[l]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_ply(text: &str, source: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let loc = |line: usize| format!("{source}:{}", line + 1);
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse(loc(0), "missing `ply` magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut names: BTreeMap<i64, String> = BTreeMap::new();
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(Error::parse(
                        loc(n),
                        format!("unsupported PLY format `{fmt}` (only ascii)"),
                    ));
                }
            }
            ["comment", "label", id, name, ..] => {
                let id: i64 = id
                    .parse()
                    .map_err(|_| Error::parse(loc(n), "bad label id in comment"))?;
                names.insert(id, name.to_string());
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", count] => {
                vertex_count = Some(
                    count
                        .parse::<usize>()
                        .map_err(|_| Error::parse(loc(n), "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(Error::parse(loc(n), "list properties on vertices are not supported"));
                }
            }
            ["property", _ty, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            [] => {}
            _ => return Err(Error::parse(loc(n), format!("unexpected header line `{line}`"))),
        }
    }
    if !header_done {
        return Err(Error::parse(source, "missing end_header"));
    }
    let count = vertex_count.ok_or_else(|| Error::parse(source, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(source, "vertex element lacks x/y/z")),
    };
    let li = col("label");
    let mut points = Vec::with_capacity(count);
    let mut labels = li.map(|_| Vec::with_capacity(count));
    for (n, line) in lines {
        if points.len() == count {
            break;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < props.len() {
            return Err(Error::parse(
                loc(n),
                format!("expected {} values, found {}", props.len(), toks.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            toks[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(loc(n), format!("bad number `{}`", toks[i])))
        };
        points.push(Point3::new(num(xi)?, num(yi)?, num(zi)?));
        if let (Some(li), Some(labels)) = (li, labels.as_mut()) {
            let id: i64 = toks[li]
                .parse()
                .map_err(|_| Error::parse(loc(n), format!("bad label id `{}`", toks[li])))?;
            labels.push(names.get(&id).cloned().unwrap_or_else(|| id.to_string()));
        }
    }
    if points.len() != count {
        return Err(Error::parse(
            source,
            format!("expected {count} vertices, found {}", points.len()),
        ));
    }
    match labels {
        Some(l) => PointCloud::with_labels(points, l),
        None => PointCloud::new(points),
    }
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_ply_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text, &path.display().to_string())
}

pub fn save_json(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(cloud).expect("cloud serialization is infallible");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))
}

/// Loads by extension: `.ply` or `.json`.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_json(path),
        Some("ply") => load_ply(path),
        other => Err(Error::InvalidArgument(format!(
            "unknown cloud extension {other:?} for {}",
            path.display()
        ))),
    }
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => save_json(cloud, path),
        _ => save_ply(cloud, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip_is_exact() {
        let cloud = PointCloud::with_labels(
            vec![
                Point3::new(0.1, -2.5e-3, 1.0 / 3.0),
                Point3::new(7.0, 8.0, 9.0),
                Point3::new(-1e-17, 0.0, 4.4),
            ],
            vec!["handle".into(), "body.inside".into(), "handle".into()],
        )
        .unwrap();
        let back = parse_ply(&write_ply_string(&cloud), "mem").unwrap();
        assert_eq!(back, cloud);
        let plain = cloud.without_labels();
        assert_eq!(parse_ply(&write_ply_string(&plain), "mem").unwrap(), plain);
    }

    #[test]
    fn foreign_ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty int label\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3 255 4\n4 5 6 0 4\n";
        let c = parse_ply(text, "mem").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.label(1), Some("4"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 five 6\n";
        let err = parse_ply(text, "scene.ply").unwrap_err();
        assert!(err.to_string().contains("scene.ply:9"), "{err}");
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(parse_ply(bin, "b.ply").is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(parse_ply(short, "s.ply").is_err());
    }
}
