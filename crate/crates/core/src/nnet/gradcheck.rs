//! Central finite-difference gradient checking in 64-bit precision.

use std::ops::Range;

/// Finite-difference step used throughout the checks.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Gradients whose magnitudes are both below this are compared absolutely.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|)`, switching to the absolute difference when both
/// values are below [`ABSOLUTE_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < ABSOLUTE_FLOOR {
        diff
    } else {
        diff / scale
    }
}

/// A named contiguous slice of a flattened parameter vector.
#[derive(Clone, Debug)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct GroupResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// (flat index, analytic, numeric) of the worst entry
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.groups.iter().all(|g| g.checked > 0 && g.max_rel_error < tolerance)
    }
}

/// Compares `analytic[i]` against `(loss(θ + h·eᵢ) − loss(θ − h·eᵢ)) / 2h`
/// for every index of every group.
pub fn finite_difference_check(
    theta: &[f64],
    analytic: &[f64],
    groups: &[ParamGroup],
    step: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
    let mut work = theta.to_vec();
    let groups = groups
        .iter()
        .map(|g| {
            let mut result = GroupResult {
                name: g.name.clone(),
                checked: 0,
                max_rel_error: 0.0,
                worst: None,
            };
            for i in g.range.clone() {
                let orig = work[i];
                work[i] = orig + step;
                let plus = loss(&work);
                work[i] = orig - step;
                let minus = loss(&work);
                work[i] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let err = relative_error(analytic[i], numeric);
                result.checked += 1;
                if err > result.max_rel_error || result.worst.is_none() {
                    result.max_rel_error = result.max_rel_error.max(err);
                    result.worst = Some((i, analytic[i], numeric));
                }
            }
            result
        })
        .collect();
    GradCheckReport { groups }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        // loss = Σ i·θᵢ², gradient 2iθᵢ
        let theta = vec![0.5, -1.0, 2.0];
        let analytic: Vec<f64> = theta.iter().enumerate().map(|(i, t)| 2.0 * i as f64 * t).collect();
        let groups = vec![ParamGroup {
            name: "all".into(),
            range: 0..3,
        }];
        let report = finite_difference_check(&theta, &analytic, &groups, DEFAULT_STEP, |t| {
            t.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum()
        });
        assert!(report.passes(1e-8), "{:?}", report);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let theta = vec![1.0];
        let groups = vec![ParamGroup {
            name: "x".into(),
            range: 0..1,
        }];
        let report = finite_difference_check(&theta, &[3.0], &groups, DEFAULT_STEP, |t| t[0] * t[0]);
        assert!(!report.passes(1e-4));
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-9, 2e-9) < 1e-8);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-12);
    }
}
