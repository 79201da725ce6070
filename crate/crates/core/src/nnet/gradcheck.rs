use rand::seq::index::sample;

use super::{named_rng, NnError, ParamSet};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Coordinates sampled per parameter tensor (all of them when smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, tolerance: 1e-4, samples_per_param: 50, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<(String, usize)>,
    /// Every coordinate above tolerance: `(name, index, analytic, numeric)`.
    pub failures: Vec<(String, usize, f64, f64)>,
    pub passed: bool,
}

/// Relative error with a small magnitude floor so that two near-zero
/// derivatives do not produce a spurious blow-up.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the gradients stored in `params` against central differences of
/// `loss_fn` on sampled coordinates.
pub fn finite_difference_check<F>(
    params: &ParamSet,
    mut loss_fn: F,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&ParamSet) -> Result<f64, NnError>,
{
    let mut probe = params.clone();
    let mut report =
        GradCheckReport { checked: 0, max_rel_err: 0.0, worst: None, failures: Vec::new(), passed: true };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let n = params.value(&name)?.data().len();
        let mut rng = named_rng(cfg.seed, &name);
        let mut coords: Vec<usize> = if n <= cfg.samples_per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_param).into_vec()
        };
        coords.sort_unstable();
        for idx in coords {
            let original = params.value(&name)?.data()[idx];
            probe.value_mut(&name)?.data_mut()[idx] = original + cfg.epsilon;
            let plus = loss_fn(&probe)?;
            probe.value_mut(&name)?.data_mut()[idx] = original - cfg.epsilon;
            let minus = loss_fn(&probe)?;
            probe.value_mut(&name)?.data_mut()[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFinite { name, index: idx });
            }
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let analytic = params.grad(&name)?.data()[idx];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.clone(), idx));
            }
            if err > cfg.tolerance {
                report.failures.push((name.clone(), idx, analytic, numeric));
            }
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}
