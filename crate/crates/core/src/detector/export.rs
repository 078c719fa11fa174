//! Human-readable and machine-readable exports of a fitted tree.

use serde::{Deserialize, Serialize};

use crate::detector::{DecisionTree, TreeNode};
use crate::error::{Error, Result};

/// Indented if/else rendering of the decision rules.
///
/// `feature_names` and `class_names` must cover the tree's feature and
/// class index spaces.
pub fn rules_text(
    tree: &DecisionTree,
    feature_names: &[String],
    class_names: &[String],
) -> Result<String> {
    check_names(tree, feature_names, class_names)?;
    let mut out = String::new();
    render(tree, 0, 0, feature_names, class_names, &mut out);
    Ok(out)
}

fn render(
    tree: &DecisionTree,
    node: usize,
    depth: usize,
    feature_names: &[String],
    class_names: &[String],
    out: &mut String,
) {
    let pad = "  ".repeat(depth);
    let n = &tree.nodes[node];
    match n.feature {
        None => {
            out.push_str(&format!("{}class: {}\n", pad, class_names[n.class]));
        }
        Some(f) => {
            out.push_str(&format!("{}if {} <= {} {{\n", pad, feature_names[f], n.threshold));
            render(tree, n.left, depth + 1, feature_names, class_names, out);
            out.push_str(&format!("{}}} else {{\n", pad));
            render(tree, n.right, depth + 1, feature_names, class_names, out);
            out.push_str(&format!("{}}}\n", pad));
        }
    }
}

fn check_names(
    tree: &DecisionTree,
    feature_names: &[String],
    class_names: &[String],
) -> Result<()> {
    if feature_names.len() != tree.n_features {
        return Err(Error::config(format!(
            "{} feature names for {} features",
            feature_names.len(),
            tree.n_features
        )));
    }
    if class_names.len() != tree.n_classes {
        return Err(Error::config(format!(
            "{} class names for {} classes",
            class_names.len(),
            tree.n_classes
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonNode {
    id: usize,
    parent: Option<usize>,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    class: usize,
    class_name: String,
    mass: f64,
    gini: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonTree {
    n_features: usize,
    n_classes: usize,
    ccp_alpha: f64,
    seed: u64,
    class_weights: Vec<f64>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    nodes: Vec<JsonNode>,
}

/// Serialize the tree as a JSON node list with parent links.
pub fn tree_to_json(
    tree: &DecisionTree,
    feature_names: &[String],
    class_names: &[String],
) -> Result<String> {
    check_names(tree, feature_names, class_names)?;
    let mut parents = vec![None; tree.nodes.len()];
    for (i, n) in tree.nodes.iter().enumerate() {
        if !n.is_leaf() {
            parents[n.left] = Some(i);
            parents[n.right] = Some(i);
        }
    }
    let nodes = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| JsonNode {
            id: i,
            parent: parents[i],
            kind: if n.is_leaf() { "leaf" } else { "split" }.to_string(),
            feature: n.feature,
            feature_name: n.feature.map(|f| feature_names[f].clone()),
            threshold: n.feature.map(|_| n.threshold),
            left: n.feature.map(|_| n.left),
            right: n.feature.map(|_| n.right),
            class: n.class,
            class_name: class_names[n.class].clone(),
            mass: n.mass,
            gini: n.gini,
        })
        .collect();
    let doc = JsonTree {
        n_features: tree.n_features,
        n_classes: tree.n_classes,
        ccp_alpha: tree.ccp_alpha,
        seed: tree.seed,
        class_weights: tree.class_weights.clone(),
        feature_names: feature_names.to_vec(),
        class_names: class_names.to_vec(),
        nodes,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::parse(format!("tree to JSON: {}", e)))
}

/// Rebuild a tree (plus its name tables) from `tree_to_json` output.
pub fn tree_from_json(text: &str) -> Result<(DecisionTree, Vec<String>, Vec<String>)> {
    let doc: JsonTree =
        serde_json::from_str(text).map_err(|e| Error::parse(format!("tree JSON: {}", e)))?;
    if doc.nodes.is_empty() {
        return Err(Error::parse("tree JSON has no nodes"));
    }
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, jn) in doc.nodes.iter().enumerate() {
        if jn.id != i {
            return Err(Error::parse(format!("node id {} at position {}", jn.id, i)));
        }
        let node = match jn.kind.as_str() {
            "leaf" => TreeNode {
                feature: None,
                threshold: 0.0,
                left: 0,
                right: 0,
                mass: jn.mass,
                gini: jn.gini,
                class: jn.class,
            },
            "split" => {
                let feature = jn.feature.ok_or_else(|| Error::parse("split without feature"))?;
                let threshold =
                    jn.threshold.ok_or_else(|| Error::parse("split without threshold"))?;
                let left = jn.left.ok_or_else(|| Error::parse("split without left"))?;
                let right = jn.right.ok_or_else(|| Error::parse("split without right"))?;
                if feature >= doc.n_features {
                    return Err(Error::parse(format!("feature {} out of range", feature)));
                }
                if left >= doc.nodes.len() || right >= doc.nodes.len() {
                    return Err(Error::parse("child index out of range"));
                }
                TreeNode {
                    feature: Some(feature),
                    threshold,
                    left,
                    right,
                    mass: jn.mass,
                    gini: jn.gini,
                    class: jn.class,
                }
            }
            other => return Err(Error::parse(format!("unknown node kind '{}'", other))),
        };
        if node.class >= doc.n_classes {
            return Err(Error::parse(format!("class {} out of range", node.class)));
        }
        nodes.push(node);
    }
    let tree = DecisionTree {
        nodes,
        n_classes: doc.n_classes,
        n_features: doc.n_features,
        class_weights: doc.class_weights,
        ccp_alpha: doc.ccp_alpha,
        seed: doc.seed,
    };
    Ok((tree, doc.feature_names, doc.class_names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{fit_tree, LabeledDataset, TreeParams};

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{}{}", prefix, i)).collect()
    }

    fn fixture() -> DecisionTree {
        let mut ds = LabeledDataset::new(2, 3);
        let rows: [(f64, f64, usize); 9] = [
            (0.1, 0.9, 0),
            (0.2, 0.8, 0),
            (0.3, 0.2, 1),
            (0.4, 0.1, 1),
            (0.9, 0.9, 2),
            (0.8, 0.8, 2),
            (0.15, 0.85, 0),
            (0.35, 0.15, 1),
            (0.85, 0.95, 2),
        ];
        for (a, b, l) in rows {
            ds.push_row(&[a, b], l).unwrap();
        }
        fit_tree(&ds, &TreeParams { ccp_alpha: 0.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn rules_text_renders_every_leaf() {
        let tree = fixture();
        let text = rules_text(&tree, &names("f", 2), &names("c", 3)).unwrap();
        assert_eq!(text.matches("class:").count(), tree.n_leaves());
        assert!(text.contains("if f"));
        assert!(text.starts_with("if "));
    }

    #[test]
    fn rules_text_checks_name_tables() {
        let tree = fixture();
        assert!(rules_text(&tree, &names("f", 1), &names("c", 3)).is_err());
        assert!(rules_text(&tree, &names("f", 2), &names("c", 2)).is_err());
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let tree = fixture();
        let text = tree_to_json(&tree, &names("f", 2), &names("c", 3)).unwrap();
        let (back, fnames, cnames) = tree_from_json(&text).unwrap();
        assert_eq!(back, tree);
        assert_eq!(fnames, names("f", 2));
        assert_eq!(cnames, names("c", 3));
        for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
            for b in [0.0, 0.5, 1.0] {
                assert_eq!(tree.predict(&[a, b]), back.predict(&[a, b]));
            }
        }
    }

    #[test]
    fn json_carries_parent_links() {
        let tree = fixture();
        let text = tree_to_json(&tree, &names("f", 2), &names("c", 3)).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let nodes = doc["nodes"].as_array().unwrap();
        assert!(nodes[0]["parent"].is_null());
        for node in &nodes[1..] {
            let parent = node["parent"].as_u64().expect("non-root nodes have parents") as usize;
            let id = node["id"].as_u64().unwrap();
            let p = &nodes[parent];
            assert!(p["left"] == id || p["right"] == id);
        }
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(tree_from_json("{}").is_err());
        let tree = fixture();
        let text = tree_to_json(&tree, &names("f", 2), &names("c", 3)).unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(tree_from_json(truncated).is_err());
        let bad_kind = text.replace("\"split\"", "\"branch\"");
        assert!(tree_from_json(&bad_kind).is_err());
    }
}
