//! On-disk layout: one `<id>.template.json` per template plus a `db.json`
//! index listing template ids in order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Template;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DB_INDEX_FILE: &str = "db.json";
pub const TEMPLATE_SUFFIX: &str = ".template.json";

#[derive(Serialize, Deserialize)]
struct IndexFile {
    schema_version: u32,
    templates: Vec<String>,
}

#[derive(Serialize)]
struct TemplateFileOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    template: &'a Template,
}

#[derive(Deserialize)]
struct TemplateFileIn {
    schema_version: u32,
    #[serde(flatten)]
    template: Template,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))
}

fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{}: schema_version {found} is not supported (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
        return Err(Error::Schema(format!("invalid template id `{id}`")));
    }
    Ok(())
}

pub fn save_template(template: &Template, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&TemplateFileOut {
        schema_version: SCHEMA_VERSION,
        template,
    })
    .map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_template(path: impl AsRef<Path>) -> Result<Template> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TemplateFileIn = parse_json(&text, path)?;
    check_version(file.schema_version, path)?;
    Ok(file.template)
}

/// Writes every template and the index into `dir`, creating it if needed.
pub fn save_db(templates: &[Template], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::with_capacity(templates.len());
    for t in templates {
        check_id(&t.id)?;
        if ids.contains(&t.id) {
            return Err(Error::Schema(format!("duplicate template id `{}`", t.id)));
        }
        save_template(t, dir.join(format!("{}{TEMPLATE_SUFFIX}", t.id)))?;
        ids.push(t.id.clone());
    }
    let index = IndexFile {
        schema_version: SCHEMA_VERSION,
        templates: ids,
    };
    let path = dir.join(DB_INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Loads the templates listed in `dir/db.json`, in index order.
pub fn load_db(dir: impl AsRef<Path>) -> Result<Vec<Template>> {
    let dir = dir.as_ref();
    let path = dir.join(DB_INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: IndexFile = parse_json(&text, &path)?;
    check_version(index.schema_version, &path)?;
    index
        .templates
        .iter()
        .map(|id| {
            check_id(id)?;
            let t = load_template(dir.join(format!("{id}{TEMPLATE_SUFFIX}")))?;
            if &t.id != id {
                return Err(Error::Schema(format!("index lists `{id}` but file holds `{}`", t.id)));
            }
            Ok(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, PointCloud, RigidTransform};
    use crate::template_db::GraspPose;
    use std::collections::BTreeMap;

    fn template(id: &str, shift: f64) -> Template {
        let pts: Vec<Point3> = (0..20)
            .map(|i| Point3::new(i as f64 * 0.1 + shift, (i as f64).sin() / 3.0, 1.0 / 7.0))
            .collect();
        let labels = (0..20)
            .map(|i| if i < 10 { "handle" } else { "body" }.to_string())
            .collect();
        let full = PointCloud::with_labels(pts, labels).unwrap();
        let mut parts = BTreeMap::new();
        parts.insert("handle".to_string(), full.select(&(0..10).collect::<Vec<_>>()));
        parts.insert("body".to_string(), full.select(&(10..20).collect::<Vec<_>>()));
        let mut grasps = BTreeMap::new();
        grasps.insert(
            "handle".to_string(),
            vec![GraspPose {
                pose: RigidTransform::from_euler_xyz(0.1, 0.2, 0.3 + shift),
                width: 0.0123456789,
            }],
        );
        grasps.insert("body".to_string(), Vec::new());
        Template {
            id: id.into(),
            object_class: "mug".into(),
            full_cloud: full,
            parts,
            grasps,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let db = vec![template("mug-a", 0.0), template("mug-b", 0.37), template("mug-c", -1.1)];
        save_db(&db, dir.path()).unwrap();
        assert_eq!(load_db(dir.path()).unwrap(), db);
    }

    #[test]
    fn empty_db() {
        let dir = tempfile::tempdir().unwrap();
        save_db(&[], dir.path()).unwrap();
        assert!(load_db(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn malformed_file_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(DB_INDEX_FILE),
            "{\n  \"schema_version\": 1,\n  \"templates\": [oops]\n}",
        )
        .unwrap();
        match load_db(dir.path()) {
            Err(Error::Parse { location, .. }) => assert!(location.ends_with("db.json:3:17"), "{location}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_db(&[template("a", 0.0), template("a", 1.0)], dir.path()).is_err());
    }
}
