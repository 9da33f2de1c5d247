use rayon::prelude::*;
use serde::Serialize;

use super::loss::{clean_targets, loss_and_grad, nll_loss, Example};
use crate::error::{Error, Result};
use crate::model::FlowModel;

/// Denominator floor of the relative error, so parameters whose true
/// gradient is essentially zero are judged on absolute error.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Relative finite-difference step: `h = STEP · max(|θ|, 1)`.
const STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupError {
    pub name: String,
    pub n_params: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Index within the group of the worst parameter.
    pub worst: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<36} {:>8} {:>12} {:>12}",
            "group", "params", "max_rel", "max_abs"
        )?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<36} {:>8} {:>12.3e} {:>12.3e}",
                g.name, g.n_params, g.max_rel_err, g.max_abs_err
            )?;
        }
        write!(
            f,
            "max relative error {:.3e} (tolerance {:.1e}): {}",
            self.max_rel_err,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares the analytic gradient of the noise-free mean NLL against central
/// differences for every parameter. Passes when every relative error is
/// strictly below `tolerance`.
pub fn grad_check(model: &FlowModel, batch: &[Example], tolerance: f64) -> Result<GradCheckReport> {
    let targets = clean_targets(model, batch);
    let (_, analytic) = loss_and_grad(model, batch, &targets)?;
    let loss_at = |params: &[f64]| -> Result<f64> {
        let mut m = model.clone();
        m.params_mut().copy_from_slice(params);
        nll_loss::<rand_chacha::ChaCha8Rng>(&m, batch, None)
    };
    let base = model.params();
    let numeric: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|i| {
            let h = STEP * base[i].abs().max(1.0);
            let mut p = base.to_vec();
            p[i] = base[i] + h;
            let up = loss_at(&p)?;
            p[i] = base[i] - h;
            let down = loss_at(&p)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(model.layout().entries().len());
    for e in model.layout().entries() {
        let mut g = GroupError {
            name: e.name.clone(),
            n_params: e.len(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst: 0,
        };
        for (j, i) in e.range().enumerate() {
            let rel = relative_error(analytic[i], numeric[i]);
            if !rel.is_finite() {
                return Err(Error::numeric(
                    "grad_check",
                    format!("{}[{j}] is not finite", e.name),
                ));
            }
            if rel > g.max_rel_err {
                g.max_rel_err = rel;
                g.worst = j;
            }
            g.max_abs_err = g.max_abs_err.max((analytic[i] - numeric[i]).abs());
        }
        groups.push(g);
    }
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_rel_err,
        tolerance,
        passed: max_rel_err < tolerance,
    })
}
