use std::fmt::Write;

use crate::data::Dataset;
use crate::error::{ResotError, Result};
use crate::tree::{descend, left_child, right_child, ObliqueTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotOptions {
    /// How many of the largest-magnitude weights to list per split.
    pub top_weights: usize,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self { top_weights: 3 }
    }
}

/// Graphviz digraph of the tree. With a dataset, every node is labelled
/// with the class histogram of the samples single-path routing sends through it.
pub fn export_dot(tree: &ObliqueTree, data: Option<&Dataset>, opts: DotOptions) -> Result<String> {
    let internal = tree.internal_count();
    let total = internal + tree.leaf_count();
    let hist = match data {
        Some(ds) => {
            if ds.features() != tree.feature_count() {
                return Err(ResotError::DimensionMismatch { expected: tree.feature_count(), actual: ds.features() });
            }
            let mut h = vec![vec![0usize; tree.class_count()]; total];
            for n in 0..ds.len() {
                let label = ds.y()[n];
                if label >= tree.class_count() {
                    return Err(ResotError::LabelOutOfRange { label, classes: tree.class_count() });
                }
                let (path, leaf) = descend(tree, ds.row(n));
                for node in path.into_iter().chain(std::iter::once(internal + leaf)) {
                    h[node][label] += 1;
                }
            }
            Some(h)
        }
        None => None,
    };

    let mut out = String::from("digraph resot {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    for node in 0..total {
        let mut label = String::new();
        if node < internal {
            let _ = write!(label, "split {node}");
            let bias = tree.bias_column();
            let mut ws: Vec<(usize, f64)> =
                tree.theta().row(node).iter().copied().enumerate().filter(|&(j, w)| j != bias && w != 0.0).collect();
            ws.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
            let used = ws.len();
            for (j, w) in ws.into_iter().take(opts.top_weights) {
                let _ = write!(label, "\\n{w:+.3} {}", escape(&tree.feature_names()[j]));
            }
            let _ = write!(label, "\\nbias {:+.3}, {used} weights", tree.theta()[[node, bias]]);
        } else {
            let leaf = node - internal;
            let omega = tree.leaf_distribution(leaf);
            let best = omega.iter().enumerate().fold(0, |b, (k, v)| if *v > omega[b] { k } else { b });
            let _ = write!(label, "leaf {leaf}\\nclass {best} ({:.2})", omega[best]);
        }
        if let Some(h) = &hist {
            let counts: Vec<String> = h[node].iter().map(usize::to_string).collect();
            let _ = write!(label, "\\nn={} [{}]", h[node].iter().sum::<usize>(), counts.join(" "));
        }
        let shape = if node < internal { "box" } else { "ellipse" };
        let _ = writeln!(out, "  n{node} [label=\"{label}\", shape={shape}];");
    }
    for node in 0..internal {
        let _ = writeln!(out, "  n{node} -> n{} [label=\">= 0\"];", left_child(node));
        let _ = writeln!(out, "  n{node} -> n{} [label=\"< 0\"];", right_child(node));
    }
    out.push_str("}\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
