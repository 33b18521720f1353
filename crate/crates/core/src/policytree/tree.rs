use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{MopolError, Result};

/// Axis-aligned decision tree mapping covariates to a treatment index.
///
/// Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyTree {
    Leaf {
        treatment: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<PolicyTree>,
        right: Box<PolicyTree>,
    },
}

impl PolicyTree {
    pub fn leaf(treatment: usize) -> Self {
        PolicyTree::Leaf { treatment }
    }

    pub fn split(feature: usize, threshold: f64, left: PolicyTree, right: PolicyTree) -> Self {
        PolicyTree::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            PolicyTree::Leaf { .. } => 0,
            PolicyTree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            PolicyTree::Leaf { .. } => 1,
            PolicyTree::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            PolicyTree::Leaf { .. } => 1,
            PolicyTree::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        match self {
            PolicyTree::Leaf { .. } => None,
            PolicyTree::Split {
                feature, left, right, ..
            } => Some(
                (*feature)
                    .max(left.max_feature().unwrap_or(0))
                    .max(right.max_feature().unwrap_or(0)),
            ),
        }
    }

    pub fn max_treatment(&self) -> usize {
        match self {
            PolicyTree::Leaf { treatment } => *treatment,
            PolicyTree::Split { left, right, .. } => left.max_treatment().max(right.max_treatment()),
        }
    }

    /// Route one covariate row.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                PolicyTree::Leaf { treatment } => return *treatment,
                PolicyTree::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Treatment for every row of `x`.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if let Some(f) = self.max_feature() {
            if f >= x.ncols() {
                return Err(MopolError::invalid(format!(
                    "tree uses feature {f} but covariates have {} columns",
                    x.ncols()
                )));
            }
        }
        let mut buf = vec![0.0; x.ncols()];
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                // rows may be non-contiguous views
                for (b, v) in buf.iter_mut().zip(row.iter()) {
                    *b = *v;
                }
                self.predict(&buf)
            })
            .collect())
    }

    /// Indented if/else rules. A leaf renders as `assign treatment <a>`.
    pub fn render_text(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.text_into(names, 0, &mut out);
        out
    }

    fn text_into(&self, names: &[String], indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match self {
            PolicyTree::Leaf { treatment } => {
                let _ = writeln!(out, "{pad}assign treatment {treatment}");
            }
            PolicyTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "{pad}if {} <= {threshold}:", names[*feature]);
                left.text_into(names, indent + 1, out);
                let _ = writeln!(out, "{pad}else:");
                right.text_into(names, indent + 1, out);
            }
        }
    }

    /// Graphviz digraph; left edges are labelled `yes`.
    pub fn render_dot(&self, names: &[String]) -> String {
        let mut out = String::from("digraph policy_tree {\n  node [shape=box];\n");
        let mut next = 0usize;
        self.dot_into(names, &mut next, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_into(&self, names: &[String], next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match self {
            PolicyTree::Leaf { treatment } => {
                let _ = writeln!(out, "  n{id} [label=\"treatment {treatment}\", shape=ellipse];");
            }
            PolicyTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = names[*feature].replace('"', "\\\"");
                let _ = writeln!(out, "  n{id} [label=\"{name} <= {threshold}\"];");
                let l = left.dot_into(names, next, out);
                let r = right.dot_into(names, next, out);
                let _ = writeln!(out, "  n{id} -> n{l} [label=\"yes\"];");
                let _ = writeln!(out, "  n{id} -> n{r} [label=\"no\"];");
            }
        }
        id
    }

    /// Parse the output of [`PolicyTree::render_text`].
    pub fn parse_text(text: &str, names: &[String]) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let trimmed = l.trim_start_matches(' ');
                ((l.len() - trimmed.len()) / 2, trimmed.trim_end())
            })
            .collect();
        let mut pos = 0;
        let tree = parse_node(&lines, &mut pos, 0, names)?;
        if pos != lines.len() {
            return Err(MopolError::Parse(format!("trailing content at line {}", pos + 1)));
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn parse_node(
    lines: &[(usize, &str)],
    pos: &mut usize,
    indent: usize,
    names: &[String],
) -> Result<PolicyTree> {
    let Some(&(ind, line)) = lines.get(*pos) else {
        return Err(MopolError::Parse("unexpected end of tree text".into()));
    };
    if ind != indent {
        return Err(MopolError::Parse(format!(
            "line {}: expected indent {indent}, found {ind}",
            *pos + 1
        )));
    }
    *pos += 1;
    if let Some(t) = line.strip_prefix("assign treatment ") {
        let treatment = t
            .trim()
            .parse()
            .map_err(|_| MopolError::Parse(format!("bad treatment '{t}'")))?;
        return Ok(PolicyTree::Leaf { treatment });
    }
    let cond = line
        .strip_prefix("if ")
        .and_then(|s| s.strip_suffix(':'))
        .ok_or_else(|| MopolError::Parse(format!("line {}: unrecognized '{line}'", *pos)))?;
    let (name, thr) = cond
        .rsplit_once(" <= ")
        .ok_or_else(|| MopolError::Parse(format!("line {}: missing '<='", *pos)))?;
    let feature = names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| MopolError::Parse(format!("unknown feature '{name}'")))?;
    let threshold: f64 = thr
        .parse()
        .map_err(|_| MopolError::Parse(format!("bad threshold '{thr}'")))?;
    let left = parse_node(lines, pos, indent + 1, names)?;
    match lines.get(*pos) {
        Some(&(ind, "else:")) if ind == indent => *pos += 1,
        _ => return Err(MopolError::Parse(format!("line {}: expected 'else:'", *pos + 1))),
    }
    let right = parse_node(lines, pos, indent + 1, names)?;
    Ok(PolicyTree::split(feature, threshold, left, right))
}
