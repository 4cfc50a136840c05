//! Binary regression tree over (temperature, pH, TDS) used as a Good/Bad
//! classifier.
//!
//! Labels are encoded Good = 1, Bad = 0. Splits minimise the weighted sum
//! of child label variance; candidate thresholds are midpoints between
//! consecutive distinct feature values. Because labels are 0/1 every
//! impurity is a ratio of integers, so split comparison is exact and the
//! tie-break (lowest feature, then smallest threshold) is not at the mercy
//! of rounding.

mod codegen;
mod eval;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{Dataset, LabeledSample};
use crate::model::Condition;

pub use codegen::{export_classifier, CodegenError};
pub use eval::{evaluate, Confusion, EvalReport};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("model io on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Temp,
    Ph,
    Tds,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Temp, Feature::Ph, Feature::Tds];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Temp => "temp",
            Feature::Ph => "ph",
            Feature::Tds => "tds",
        }
    }
}

/// A fitted tree. Rows with `feature <= threshold` route left.
///
/// Serialised as `{"feature","threshold","left","right"}` for internal
/// nodes and `{"value","n"}` for leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawNode")]
pub enum TreeNode {
    Internal { feature: Feature, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf {
        value: f64,
        #[serde(rename = "n")]
        n_samples: usize,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    feature: Option<Feature>,
    threshold: Option<f64>,
    left: Option<Box<TreeNode>>,
    right: Option<Box<TreeNode>>,
    value: Option<f64>,
    n: Option<usize>,
}

impl TryFrom<RawNode> for TreeNode {
    type Error = String;

    fn try_from(raw: RawNode) -> Result<Self, Self::Error> {
        match raw {
            RawNode { feature: Some(feature), threshold: Some(threshold), left: Some(left), right: Some(right), value: None, n: None } => {
                Ok(TreeNode::Internal { feature, threshold, left, right })
            }
            RawNode { feature: None, threshold: None, left: None, right: None, value: Some(value), n: Some(n_samples) } => {
                Ok(TreeNode::Leaf { value, n_samples })
            }
            _ => Err("node must have exactly {feature, threshold, left, right} or {value, n}".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeHyperparams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_impurity_decrease: f64,
}

impl Default for TreeHyperparams {
    fn default() -> Self {
        TreeHyperparams { max_depth: 8, min_samples_split: 2, min_impurity_decrease: 0.0 }
    }
}

impl TreeHyperparams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidHyperparams("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(TreeError::InvalidHyperparams("min_samples_split must be >= 2".into()));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(TreeError::InvalidHyperparams("min_impurity_decrease must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub value: f64,
    pub condition: Condition,
}

/// Weighted child impurity `sl(nl-sl)/nl + sr(nr-sr)/nr` held as an exact
/// fraction. Equals the sum of child squared errors for 0/1 labels.
#[derive(Debug, Clone, Copy)]
struct Impurity {
    num: u128,
    den: u128,
}

impl Impurity {
    fn children(nl: u64, sl: u64, nr: u64, sr: u64) -> Self {
        let (nl, sl, nr, sr) = (nl as u128, sl as u128, nr as u128, sr as u128);
        Impurity { num: sl * (nl - sl) * nr + sr * (nr - sr) * nl, den: nl * nr }
    }

    fn less_than(&self, other: &Impurity) -> bool {
        self.num * other.den < other.num * self.den
    }

    fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

struct Split {
    feature: Feature,
    threshold: f64,
    impurity: Impurity,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    // Adjacent floats: keep the split strictly below `hi`.
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn best_split(rows: &[LabeledSample], idx: &mut [usize]) -> Option<Split> {
    let n = idx.len() as u64;
    let positives: u64 = idx.iter().map(|&i| u64::from(rows[i].condition == Condition::Good)).sum();
    let mut best: Option<Split> = None;
    for feature in Feature::ALL {
        let f = feature.index();
        idx.sort_by(|&a, &b| rows[a].features()[f].total_cmp(&rows[b].features()[f]));
        let mut left_pos = 0u64;
        for k in 1..idx.len() {
            left_pos += u64::from(rows[idx[k - 1]].condition == Condition::Good);
            let lo = rows[idx[k - 1]].features()[f];
            let hi = rows[idx[k]].features()[f];
            if lo >= hi {
                continue;
            }
            let nl = k as u64;
            let impurity = Impurity::children(nl, left_pos, n - nl, positives - left_pos);
            if best.as_ref().is_none_or(|b| impurity.less_than(&b.impurity)) {
                best = Some(Split { feature, threshold: midpoint(lo, hi), impurity });
            }
        }
    }
    best
}

fn grow(rows: &[LabeledSample], mut idx: Vec<usize>, depth: usize, hp: &TreeHyperparams) -> TreeNode {
    let n = idx.len();
    let positives = idx.iter().filter(|&&i| rows[i].condition == Condition::Good).count();
    let leaf = TreeNode::Leaf { value: positives as f64 / n as f64, n_samples: n };
    if positives == 0 || positives == n || depth >= hp.max_depth || n < hp.min_samples_split {
        return leaf;
    }
    let Some(split) = best_split(rows, &mut idx) else {
        return leaf;
    };
    let parent_sse = (positives * (n - positives)) as f64 / n as f64;
    let decrease = (parent_sse - split.impurity.as_f64()) / n as f64;
    if decrease < hp.min_impurity_decrease {
        return leaf;
    }
    let f = split.feature.index();
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| rows[i].features()[f] <= split.threshold);
    debug_assert!(!left.is_empty() && !right.is_empty());
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(rows, left, depth + 1, hp)),
        right: Box::new(grow(rows, right, depth + 1, hp)),
    }
}

/// Fits a variance-reduction tree. Deterministic for a given dataset and
/// hyperparameters.
pub fn fit(dataset: &Dataset, hp: &TreeHyperparams) -> Result<TreeNode, TreeError> {
    hp.validate()?;
    if dataset.rows.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    Ok(grow(&dataset.rows, (0..dataset.rows.len()).collect(), 0, hp))
}

pub fn predict(tree: &TreeNode, temp_c: f64, ph: f64, tds_mg_l: f64) -> Prediction {
    let value = tree.leaf_value([temp_c, ph, tds_mg_l]);
    Prediction { value, condition: Condition::from_value(value) }
}

impl TreeNode {
    pub fn leaf(value: f64, n_samples: usize) -> TreeNode {
        TreeNode::Leaf { value, n_samples }
    }

    pub fn leaf_value(&self, x: [f64; 3]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if x[feature.index()] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } => *n_samples,
            TreeNode::Internal { left, right, .. } => left.n_samples() + right.n_samples(),
        }
    }

    /// Structural checks applied to deserialised models.
    pub fn check(&self) -> Result<(), TreeError> {
        match self {
            TreeNode::Leaf { value, .. } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(TreeError::Malformed(format!("leaf value {value} outside [0, 1]")));
                }
            }
            TreeNode::Internal { threshold, left, right, .. } => {
                if !threshold.is_finite() {
                    return Err(TreeError::Malformed("non-finite threshold".into()));
                }
                left.check()?;
                right.check()?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialisation is infallible")
    }

    pub fn from_json(text: &str) -> Result<TreeNode, TreeError> {
        let tree: TreeNode = serde_json::from_str(text)?;
        tree.check()?;
        Ok(tree)
    }
}

/// Seed of the synthetic set behind [`reference_tree`].
pub const REFERENCE_SEED: u64 = 2022;

/// Tree fit with default hyperparameters on 4000 noise-free synthetic rows.
/// Used when no trained model file is supplied.
pub fn reference_tree() -> TreeNode {
    let data = crate::labeling::generate_dataset(4000, REFERENCE_SEED, 0.0).expect("valid generator params");
    fit(&data, &TreeHyperparams::default()).expect("non-empty dataset")
}

pub fn save_model(tree: &TreeNode, path: &Path) -> Result<(), TreeError> {
    std::fs::write(path, tree.to_json() + "\n")
        .map_err(|source| TreeError::Io { path: path.to_path_buf(), source })
}

pub fn load_model(path: &Path) -> Result<TreeNode, TreeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| TreeError::Io { path: path.to_path_buf(), source })?;
    TreeNode::from_json(&text)
}
