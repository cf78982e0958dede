use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One node of a class's part tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartNode {
    pub name: String,
    pub children: Vec<PartNode>,
}

/// Offline object-part ontology: class name to part tree.
///
/// The file format is a nested JSON object, e.g.
/// `{"mug": {"handle": {}, "body": {"inside": {}, "outside": {}}}}`.
/// Names are lower-cased on load; siblings are kept in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OntologyGraph {
    classes: BTreeMap<String, Vec<PartNode>>,
}

impl OntologyGraph {
    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Schema("ontology root must be an object".into()))?;
        let mut classes = BTreeMap::new();
        for (class, parts) in obj {
            let class = normalize_name(class)?;
            let nodes = parse_children(parts, &class)?;
            if nodes.is_empty() {
                return Err(Error::Schema(format!("class `{class}` has no parts")));
            }
            if classes.insert(class.clone(), nodes).is_some() {
                return Err(Error::Schema(format!("duplicate class `{class}`")));
            }
        }
        Ok(Self { classes })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("{}:{}", e.line(), e.column()), e.to_string()))?;
        Self::from_json_value(&value)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))?;
        Self::from_json_value(&value)
    }

    pub fn to_json_value(&self) -> Value {
        fn node(children: &[PartNode]) -> Value {
            Value::Object(children.iter().map(|c| (c.name.clone(), node(&c.children))).collect())
        }
        Value::Object(self.classes.iter().map(|(k, v)| (k.clone(), node(v))).collect())
    }

    /// Mug, bottle and scissor classes used throughout the examples and benchmarks.
    pub fn household() -> Self {
        Self::from_json_str(
            r#"{
                "mug": {"handle": {}, "body": {"inside": {}, "outside": {}}},
                "bottle": {"body": {}, "cap": {}},
                "scissor": {"handle": {}, "blade": {}}
            }"#,
        )
        .expect("built-in ontology is valid")
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    pub fn parts(&self, class: &str) -> Option<&[PartNode]> {
        self.classes.get(class).map(Vec::as_slice)
    }

    /// Every node path of a class (internal nodes included), depth-first.
    pub fn part_paths(&self, class: &str) -> Vec<String> {
        fn walk(prefix: &str, nodes: &[PartNode], out: &mut Vec<String>) {
            for n in nodes {
                let path = if prefix.is_empty() {
                    n.name.clone()
                } else {
                    format!("{prefix}.{}", n.name)
                };
                out.push(path.clone());
                walk(&path, &n.children, out);
            }
        }
        let mut out = Vec::new();
        if let Some(nodes) = self.classes.get(class) {
            walk("", nodes, &mut out);
        }
        out
    }

    pub fn leaf_paths(&self, class: &str) -> Vec<String> {
        let all = self.part_paths(class);
        all.iter()
            .filter(|p| {
                !all.iter()
                    .any(|q| q.len() > p.len() && q.starts_with(p.as_str()) && q.as_bytes()[p.len()] == b'.')
            })
            .cloned()
            .collect()
    }

    pub fn contains_path(&self, class: &str, path: &str) -> bool {
        self.part_paths(class).iter().any(|p| p == path)
    }

    /// `Mug → Body → Inside` style lines, one line per class.
    pub fn render_lines(&self) -> Vec<String> {
        self.classes
            .keys()
            .map(|class| {
                self.leaf_paths(class)
                    .iter()
                    .map(|leaf| {
                        std::iter::once(class.as_str())
                            .chain(leaf.split('.'))
                            .map(title_case)
                            .collect::<Vec<_>>()
                            .join(" → ")
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .collect()
    }
}

fn parse_children(value: &Value, context: &str) -> Result<Vec<PartNode>> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Schema(format!("`{context}` must map to an object of parts")))?;
    let mut nodes: Vec<PartNode> = Vec::with_capacity(obj.len());
    for (name, sub) in obj {
        let name = normalize_name(name)?;
        if nodes.iter().any(|n| n.name == name) {
            return Err(Error::Schema(format!("duplicate part `{name}` under `{context}`")));
        }
        let children = parse_children(sub, &format!("{context}.{name}"))?;
        nodes.push(PartNode { name, children });
    }
    nodes.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(nodes)
}

fn normalize_name(name: &str) -> Result<String> {
    let n = name.trim().to_lowercase();
    if n.is_empty() || n.contains('.') {
        return Err(Error::Schema(format!("invalid ontology name `{name}`")));
    }
    Ok(n)
}

pub(crate) fn title_case(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn household_paths() {
        let g = OntologyGraph::household();
        assert_eq!(
            g.part_paths("mug"),
            vec!["body", "body.inside", "body.outside", "handle"]
        );
        assert_eq!(g.leaf_paths("mug"), vec!["body.inside", "body.outside", "handle"]);
        assert!(g.contains_path("scissor", "blade"));
        assert!(!g.contains_path("scissor", "cap"));
    }

    #[test]
    fn renders_arrow_lines() {
        let g = OntologyGraph::from_json_str(
            r#"{"mug": {"handle": {}, "body": {"inside": {}, "outside": {}}}, "scissor": {"handle": {}, "blade": {}}}"#,
        )
        .unwrap();
        assert_eq!(
            g.render_lines(),
            vec![
                "Mug → Body → Inside, Mug → Body → Outside, Mug → Handle".to_string(),
                "Scissor → Blade, Scissor → Handle".to_string()
            ]
        );
    }

    #[test]
    fn rejects_bad_schema() {
        assert!(OntologyGraph::from_json_str(r#"{"mug": {}}"#).is_err());
        assert!(OntologyGraph::from_json_str(r#"{"mug": {"a.b": {}}}"#).is_err());
        assert!(OntologyGraph::from_json_str(r#"{"mug": {"Handle": {}, "handle": {}}}"#).is_err());
        assert!(OntologyGraph::from_json_str(r#"["mug"]"#).is_err());
        assert!(OntologyGraph::from_json_str(r#"{"mug": {"handle": 3}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = OntologyGraph::household();
        assert_eq!(OntologyGraph::from_json_value(&g.to_json_value()).unwrap(), g);
    }
}
