use serde::Serialize;

use crate::error::Result;
use crate::field::{FieldRole, ScalarField};

/// Depth, height and γ of one object at one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectSample {
    pub depth: f64,
    pub height: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureRow {
    pub name: &'static str,
    pub gt: ObjectSample,
    pub pred: ObjectSample,
}

impl FixtureRow {
    /// `(|Δd|, |Δγ|, |Δh|)`.
    pub fn abs_errors(&self) -> (f64, f64, f64) {
        (
            (self.pred.depth - self.gt.depth).abs(),
            (self.pred.gamma - self.gt.gamma).abs(),
            (self.pred.height - self.gt.height).abs(),
        )
    }
}

/// A tall roadside object and a low road bump, both at 3 m, with one
/// prediction each: the depth error is larger for the tall object while the
/// γ error is larger for the bump.
pub fn worked_rows() -> [FixtureRow; 2] {
    [
        FixtureRow {
            name: "tree",
            gt: ObjectSample { depth: 3.00, height: 2.00, gamma: 0.667 },
            pred: ObjectSample { depth: 3.50, height: 2.20, gamma: 0.629 },
        },
        FixtureRow {
            name: "bump",
            gt: ObjectSample { depth: 3.00, height: 0.150, gamma: 0.050 },
            pred: ObjectSample { depth: 3.20, height: 0.000, gamma: 0.000 },
        },
    ]
}

/// The fixture as 2×1 fields: column 0 is the tree, column 1 the bump.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureFields {
    pub gt_depth: ScalarField,
    pub gt_height: ScalarField,
    pub gt_gamma: ScalarField,
    pub pred_depth: ScalarField,
    pub pred_height: ScalarField,
    pub pred_gamma: ScalarField,
}

pub fn worked_fixture() -> Result<FixtureFields> {
    let rows = worked_rows();
    let field = |role: FieldRole, f: fn(&FixtureRow) -> f64| {
        ScalarField::new(2, 1, role, rows.iter().map(f).collect())
    };
    Ok(FixtureFields {
        gt_depth: field(FieldRole::Depth, |r| r.gt.depth)?,
        gt_height: field(FieldRole::Height, |r| r.gt.height)?,
        gt_gamma: field(FieldRole::Gamma, |r| r.gt.gamma)?,
        pred_depth: field(FieldRole::Depth, |r| r.pred.depth)?,
        pred_height: field(FieldRole::Height, |r| r.pred.height)?,
        pred_gamma: field(FieldRole::Gamma, |r| r.pred.gamma)?,
    })
}
