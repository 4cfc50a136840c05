use serde::{Deserialize, Serialize};

use super::{predict, TreeError, TreeNode};
use crate::labeling::Dataset;
use crate::model::Condition;

/// Confusion counts with Good as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n: usize,
}

pub fn evaluate(tree: &TreeNode, dataset: &Dataset) -> Result<EvalReport, TreeError> {
    if dataset.rows.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    let mut c = Confusion::default();
    for r in &dataset.rows {
        let predicted = predict(tree, r.temp_c, r.ph, r.tds_mg_l).condition;
        match (predicted, r.condition) {
            (Condition::Good, Condition::Good) => c.tp += 1,
            (Condition::Bad, Condition::Bad) => c.tn += 1,
            (Condition::Good, Condition::Bad) => c.fp += 1,
            (Condition::Bad, Condition::Good) => c.fn_ += 1,
        }
    }
    let n = dataset.rows.len();
    Ok(EvalReport { accuracy: (c.tp + c.tn) as f64 / n as f64, confusion: c, n })
}
