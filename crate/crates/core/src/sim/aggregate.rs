use crate::error::{CoreError, Result};
use crate::sma::ReducedModel;

/// Parallel WTGs as one first-order model, expressed on the base of the
/// first unit. Outputs add; the input is broadcast to every unit. Dynamics
/// are averaged with base weights, which is exact for identical units.
pub fn aggregate_wtgs(units: &[ReducedModel], bases: &[f64]) -> Result<ReducedModel> {
    if units.is_empty() || units.len() != bases.len() {
        return Err(CoreError::validation(format!(
            "aggregation needs one base per unit, got {} units and {} bases",
            units.len(),
            bases.len()
        )));
    }
    if let Some(b) = bases.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(CoreError::validation(format!("unit base {b} must be > 0")));
    }
    if let Some(u) = units.iter().find(|u| !(u.a_rd < 0.0)) {
        return Err(CoreError::validation(format!("unit with A_rd = {} is not stable", u.a_rd)));
    }
    let lo = units.iter().map(|u| u.a_rd.abs()).fold(f64::INFINITY, f64::min);
    let hi = units.iter().map(|u| u.a_rd.abs()).fold(0.0, f64::max);
    if hi > 1.25 * lo {
        return Err(CoreError::validation(format!(
            "cannot aggregate WTGs whose |A_rd| range from {lo:.4} to {hi:.4} (more than 25% apart)"
        )));
    }
    let total: f64 = bases.iter().sum();
    let wmean = |f: &dyn Fn(&ReducedModel) -> f64| {
        units.iter().zip(bases).map(|(u, b)| f(u) * b).sum::<f64>() / total
    };
    let scaled = |f: &dyn Fn(&ReducedModel) -> f64| {
        units.iter().zip(bases).map(|(u, b)| f(u) * b / bases[0]).sum::<f64>()
    };
    let first = &units[0];
    Ok(ReducedModel {
        a_rd: wmean(&|u| u.a_rd),
        b_rd: wmean(&|u| u.b_rd),
        b_delta: wmean(&|u| u.b_delta),
        c_rd: scaled(&|u| u.c_rd),
        d_rd: scaled(&|u| u.d_rd),
        d_delta: scaled(&|u| u.d_delta),
        lambda_r: wmean(&|u| u.lambda_r),
        ..first.clone()
    })
}
