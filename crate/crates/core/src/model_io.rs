//! Versioned structured-text dumps for the tree-family and stack models.
//!
//! Trees are written preorder, one node per line: `I <feature> <threshold>`
//! for internal nodes and `L ...` for leaves. Floats use shortest
//! round-trip formatting, so reloading reproduces every threshold and leaf
//! value bit-exactly.

use crate::error::{Error, Result};
use crate::stacking::{BaseModel, LogisticModel, StackModel};
use crate::trees::{
    Criterion, ForestConfig, ForestModel, GbmModel, MaxFeatures, RegNode, Splitter, TreeNode,
};

const MAGIC: &str = "foglab-model v1";

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        loop {
            self.line_no += 1;
            match self.lines.next() {
                None => return Err(Error::Format("unexpected end of model file".into())),
                Some(line) if line.trim().is_empty() => continue,
                Some(line) => return Ok(line.trim()),
            }
        }
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format(format!("line {}: {}", self.line_no, msg.into()))
    }

    /// Reads a `key value...` line, checking the key.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            Some(other) => Err(self.fail(format!("expected '{key}', found '{other}'"))),
            None => Err(self.fail(format!("expected '{key}'"))),
        }
    }

    fn keyed_one(&mut self, key: &str) -> Result<&'a str> {
        let parts = self.keyed(key)?;
        if parts.len() != 1 {
            return Err(self.fail(format!("'{key}' wants exactly one value")));
        }
        Ok(parts[0])
    }

    fn keyed_num<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let token = self.keyed_one(key)?;
        num(token, self.line_no)
    }
}

fn num<T: std::str::FromStr>(token: &str, line_no: usize) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::Format(format!("line {line_no}: bad number '{token}'")))
}

// ---- classification trees ----------------------------------------------

fn write_tree(node: &TreeNode, out: &mut String) {
    match node {
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push_str(&format!("I {feature} {threshold}\n"));
            write_tree(left, out);
            write_tree(right, out);
        }
        TreeNode::Leaf { counts, value } => {
            out.push_str(&format!("L {} {} {value}\n", counts.0, counts.1));
        }
    }
}

fn read_tree(cursor: &mut Cursor<'_>) -> Result<TreeNode> {
    let line = cursor.next()?;
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("I") => {
            let feature: usize = num(parts.next().ok_or_else(|| cursor.fail("missing feature"))?, cursor.line_no)?;
            let threshold: f64 = num(parts.next().ok_or_else(|| cursor.fail("missing threshold"))?, cursor.line_no)?;
            let left = Box::new(read_tree(cursor)?);
            let right = Box::new(read_tree(cursor)?);
            Ok(TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            })
        }
        Some("L") => {
            let n0: usize = num(parts.next().ok_or_else(|| cursor.fail("missing n0"))?, cursor.line_no)?;
            let n1: usize = num(parts.next().ok_or_else(|| cursor.fail("missing n1"))?, cursor.line_no)?;
            let value: f64 = num(parts.next().ok_or_else(|| cursor.fail("missing value"))?, cursor.line_no)?;
            Ok(TreeNode::Leaf {
                counts: (n0, n1),
                value,
            })
        }
        other => Err(cursor.fail(format!("expected node record, found {other:?}"))),
    }
}

pub fn write_forest(model: &ForestModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push_str("\nkind forest\n");
    let c = &model.config;
    out.push_str(&format!("criterion {}\n", c.criterion.name()));
    out.push_str(&format!("splitter {}\n", c.splitter.name()));
    out.push_str(&format!("bootstrap {}\n", c.bootstrap));
    out.push_str(&format!("max_features {}\n", c.max_features.name()));
    out.push_str(&format!("max_depth {}\n", c.max_depth));
    out.push_str(&format!("min_samples_split {}\n", c.min_samples_split));
    out.push_str(&format!("min_samples_leaf {}\n", c.min_samples_leaf));
    out.push_str(&format!("seed {}\n", c.seed));
    out.push_str(&format!("n_features {}\n", model.n_features));
    out.push_str(&format!("trees {}\n", model.trees.len()));
    for (i, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree {i} {}\n", tree.node_count()));
        write_tree(tree, &mut out);
    }
    out.push_str("end\n");
    out
}

pub fn read_forest(text: &str) -> Result<ForestModel> {
    let mut cursor = Cursor::new(text);
    let magic = cursor.next()?;
    if magic != MAGIC {
        return Err(cursor.fail(format!("bad magic '{magic}'")));
    }
    let kind = cursor.keyed_one("kind")?;
    if kind != "forest" {
        return Err(cursor.fail(format!("expected forest model, found '{kind}'")));
    }
    read_forest_body(&mut cursor)
}

fn read_forest_body(cursor: &mut Cursor<'_>) -> Result<ForestModel> {
    let criterion = Criterion::parse(cursor.keyed_one("criterion")?)?;
    let splitter = Splitter::parse(cursor.keyed_one("splitter")?)?;
    let bootstrap: bool = cursor.keyed_num("bootstrap")?;
    let max_features = MaxFeatures::parse(cursor.keyed_one("max_features")?)?;
    let max_depth: usize = cursor.keyed_num("max_depth")?;
    let min_samples_split: usize = cursor.keyed_num("min_samples_split")?;
    let min_samples_leaf: usize = cursor.keyed_num("min_samples_leaf")?;
    let seed: u64 = cursor.keyed_num("seed")?;
    let n_features: usize = cursor.keyed_num("n_features")?;
    let n_trees: usize = cursor.keyed_num("trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for i in 0..n_trees {
        let header = cursor.keyed("tree")?;
        if header.first() != Some(&i.to_string().as_str()) {
            return Err(cursor.fail(format!("tree index mismatch, wanted {i}")));
        }
        let declared: usize = num(header.get(1).copied().ok_or_else(|| cursor.fail("missing node count"))?, cursor.line_no)?;
        let tree = read_tree(cursor)?;
        if tree.node_count() != declared {
            return Err(cursor.fail(format!(
                "tree {i} declared {declared} nodes, parsed {}",
                tree.node_count()
            )));
        }
        trees.push(tree);
    }
    cursor.keyed("end").map_err(|_| cursor.fail("missing 'end'"))?;
    Ok(ForestModel {
        config: ForestConfig {
            n_estimators: n_trees,
            max_depth,
            min_samples_split,
            min_samples_leaf,
            criterion,
            splitter,
            bootstrap,
            max_features,
            seed,
        },
        trees,
        n_features,
    })
}

// ---- boosting trees ------------------------------------------------------

fn write_reg_tree(node: &RegNode, out: &mut String) {
    match node {
        RegNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            out.push_str(&format!("I {feature} {threshold}\n"));
            write_reg_tree(left, out);
            write_reg_tree(right, out);
        }
        RegNode::Leaf { value } => out.push_str(&format!("L {value}\n")),
    }
}

fn read_reg_tree(cursor: &mut Cursor<'_>) -> Result<RegNode> {
    let line = cursor.next()?;
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("I") => {
            let feature: usize = num(parts.next().ok_or_else(|| cursor.fail("missing feature"))?, cursor.line_no)?;
            let threshold: f64 = num(parts.next().ok_or_else(|| cursor.fail("missing threshold"))?, cursor.line_no)?;
            let left = Box::new(read_reg_tree(cursor)?);
            let right = Box::new(read_reg_tree(cursor)?);
            Ok(RegNode::Internal {
                feature,
                threshold,
                left,
                right,
            })
        }
        Some("L") => {
            let value: f64 = num(parts.next().ok_or_else(|| cursor.fail("missing value"))?, cursor.line_no)?;
            Ok(RegNode::Leaf { value })
        }
        other => Err(cursor.fail(format!("expected node record, found {other:?}"))),
    }
}

pub fn write_gbm(model: &GbmModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push_str("\nkind gbm\n");
    out.push_str(&format!("base_score {}\n", model.base_score));
    out.push_str(&format!("learning_rate {}\n", model.learning_rate));
    out.push_str(&format!("n_features {}\n", model.n_features));
    out.push_str(&format!("trees {}\n", model.trees.len()));
    for (i, tree) in model.trees.iter().enumerate() {
        out.push_str(&format!("tree {i} {}\n", tree.node_count()));
        write_reg_tree(tree, &mut out);
    }
    out.push_str("end\n");
    out
}

pub fn read_gbm(text: &str) -> Result<GbmModel> {
    let mut cursor = Cursor::new(text);
    let magic = cursor.next()?;
    if magic != MAGIC {
        return Err(cursor.fail(format!("bad magic '{magic}'")));
    }
    let kind = cursor.keyed_one("kind")?;
    if kind != "gbm" {
        return Err(cursor.fail(format!("expected gbm model, found '{kind}'")));
    }
    read_gbm_body(&mut cursor)
}

fn read_gbm_body(cursor: &mut Cursor<'_>) -> Result<GbmModel> {
    let base_score: f64 = cursor.keyed_num("base_score")?;
    let learning_rate: f64 = cursor.keyed_num("learning_rate")?;
    let n_features: usize = cursor.keyed_num("n_features")?;
    let n_trees: usize = cursor.keyed_num("trees")?;
    let mut trees = Vec::with_capacity(n_trees);
    for i in 0..n_trees {
        let header = cursor.keyed("tree")?;
        if header.first() != Some(&i.to_string().as_str()) {
            return Err(cursor.fail(format!("tree index mismatch, wanted {i}")));
        }
        let declared: usize = num(header.get(1).copied().ok_or_else(|| cursor.fail("missing node count"))?, cursor.line_no)?;
        let tree = read_reg_tree(cursor)?;
        if tree.node_count() != declared {
            return Err(cursor.fail(format!("tree {i} node count mismatch")));
        }
        trees.push(tree);
    }
    cursor.keyed("end").map_err(|_| cursor.fail("missing 'end'"))?;
    Ok(GbmModel {
        base_score,
        learning_rate,
        trees,
        n_features,
    })
}

// ---- logistic and stack ----------------------------------------------

pub fn write_logistic(model: &LogisticModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push_str("\nkind logistic\n");
    write_logistic_body(model, &mut out);
    out.push_str("end\n");
    out
}

fn write_logistic_body(model: &LogisticModel, out: &mut String) {
    out.push_str(&format!("n_features {}\n", model.weights.len()));
    out.push_str(&format!("bias {}\n", model.bias));
    out.push_str("weights");
    for w in &model.weights {
        out.push_str(&format!(" {w}"));
    }
    out.push('\n');
    out.push_str(&format!("iterations_run {}\n", model.iterations_run));
    out.push_str(&format!("final_grad_norm {}\n", model.final_grad_norm));
}

pub fn read_logistic(text: &str) -> Result<LogisticModel> {
    let mut cursor = Cursor::new(text);
    let magic = cursor.next()?;
    if magic != MAGIC {
        return Err(cursor.fail(format!("bad magic '{magic}'")));
    }
    let kind = cursor.keyed_one("kind")?;
    if kind != "logistic" {
        return Err(cursor.fail(format!("expected logistic model, found '{kind}'")));
    }
    let model = read_logistic_body(&mut cursor)?;
    cursor.keyed("end").map_err(|_| cursor.fail("missing 'end'"))?;
    Ok(model)
}

fn read_logistic_body(cursor: &mut Cursor<'_>) -> Result<LogisticModel> {
    let n_features: usize = cursor.keyed_num("n_features")?;
    let bias: f64 = cursor.keyed_num("bias")?;
    let tokens = cursor.keyed("weights")?;
    if tokens.len() != n_features {
        return Err(cursor.fail(format!(
            "expected {n_features} weights, found {}",
            tokens.len()
        )));
    }
    let mut weights = Vec::with_capacity(n_features);
    for t in tokens {
        weights.push(num(t, cursor.line_no)?);
    }
    let iterations_run: usize = cursor.keyed_num("iterations_run")?;
    let final_grad_norm: f64 = cursor.keyed_num("final_grad_norm")?;
    Ok(LogisticModel {
        weights,
        bias,
        iterations_run,
        final_grad_norm,
    })
}

/// Stack dump embeds the four base model dumps plus the meta weights.
/// Out-of-fold training metadata is not persisted.
pub fn write_stack(model: &StackModel) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push_str("\nkind stack\n");
    out.push_str(&format!("cv_folds {}\n", model.cv_folds));
    out.push_str(&format!("seed {}\n", model.seed));
    out.push_str(&format!("n_features {}\n", model.n_features));
    out.push_str(&format!("bases {}\n", model.bases.len()));
    for (i, base) in model.bases.iter().enumerate() {
        out.push_str(&format!("base {i} {}\n", base.kind()));
        match base {
            BaseModel::Forest(m) => {
                let body = write_forest(m);
                out.push_str(body.strip_prefix(&format!("{MAGIC}\nkind forest\n")).unwrap());
            }
            BaseModel::Gbm(m) => {
                let body = write_gbm(m);
                out.push_str(body.strip_prefix(&format!("{MAGIC}\nkind gbm\n")).unwrap());
            }
        }
    }
    out.push_str("meta\n");
    write_logistic_body(&model.meta, &mut out);
    out.push_str("end\n");
    out
}

pub fn read_stack(text: &str) -> Result<StackModel> {
    let mut cursor = Cursor::new(text);
    let magic = cursor.next()?;
    if magic != MAGIC {
        return Err(cursor.fail(format!("bad magic '{magic}'")));
    }
    let kind = cursor.keyed_one("kind")?;
    if kind != "stack" {
        return Err(cursor.fail(format!("expected stack model, found '{kind}'")));
    }
    let cv_folds: usize = cursor.keyed_num("cv_folds")?;
    let seed: u64 = cursor.keyed_num("seed")?;
    let n_features: usize = cursor.keyed_num("n_features")?;
    let n_bases: usize = cursor.keyed_num("bases")?;
    let mut bases = Vec::with_capacity(n_bases);
    for i in 0..n_bases {
        let header = cursor.keyed("base")?;
        if header.first() != Some(&i.to_string().as_str()) {
            return Err(cursor.fail(format!("base index mismatch, wanted {i}")));
        }
        // the embedded dump ends with its own 'end' line
        match header.get(1) {
            Some(&"forest") => bases.push(BaseModel::Forest(read_forest_body(&mut cursor)?)),
            Some(&"gbm") => bases.push(BaseModel::Gbm(read_gbm_body(&mut cursor)?)),
            other => return Err(cursor.fail(format!("unknown base kind {other:?}"))),
        }
    }
    cursor.keyed("meta")?;
    let meta = read_logistic_body(&mut cursor)?;
    cursor.keyed("end").map_err(|_| cursor.fail("missing final 'end'"))?;
    Ok(StackModel {
        bases,
        meta,
        cv_folds,
        seed,
        n_features,
        oof: crate::stacking::OofDetail {
            fold_of_row: Vec::new(),
            matrix: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::stacking::{fit_stack, StackConfig};
    use crate::trees::{fit_forest, fit_gbm, GbmConfig};
    use rand::Rng;

    fn dataset(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = rng_from(seed);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] + r[1] > 0.0)).collect();
        (x, y)
    }

    #[test]
    fn forest_round_trip_is_bit_exact() {
        let (x, y) = dataset(1);
        let model = fit_forest(&x, &y, &ForestConfig::random_forest(5, 4, 17)).unwrap();
        let text = write_forest(&model);
        let back = read_forest(&text).unwrap();
        assert_eq!(model.trees, back.trees);
        assert_eq!(model.n_features, back.n_features);
        assert_eq!(write_forest(&back), text);
    }

    #[test]
    fn gbm_round_trip_is_bit_exact() {
        let (x, y) = dataset(2);
        let model = fit_gbm(
            &x,
            &y,
            &GbmConfig {
                iterations: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let back = read_gbm(&write_gbm(&model)).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn stack_round_trip_preserves_predictions() {
        let (x, y) = dataset(3);
        let model = fit_stack(
            &x,
            &y,
            &StackConfig {
                cv_folds: 4,
                ..StackConfig::default_four(5)
            },
        )
        .unwrap();
        let back = read_stack(&write_stack(&model)).unwrap();
        assert_eq!(model.bases, back.bases);
        assert_eq!(model.meta, back.meta);
        assert_eq!(
            model.predict_proba(&x).unwrap(),
            back.predict_proba(&x).unwrap()
        );
    }

    #[test]
    fn malformed_input_is_format_error() {
        assert!(read_forest("nonsense").is_err());
        let (x, y) = dataset(4);
        let model = fit_forest(&x, &y, &ForestConfig::random_forest(2, 2, 0)).unwrap();
        let text = write_forest(&model).replace("kind forest", "kind gbm");
        assert!(read_forest(&text).is_err());
    }
}
