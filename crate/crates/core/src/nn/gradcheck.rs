//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lm::LanguageModel;
use super::lstm::LstmState;
use super::{NnError, Parameters};
use crate::text::LmBatch;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Coordinates sampled per parameter (all of them when the parameter is smaller).
pub const DEFAULT_SAMPLES: usize = 200;

/// Step reductions tried when a probe crosses into another activation pattern.
pub const MAX_STEP_REDUCTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, worst relative error)` in parameter order.
    pub per_param: Vec<(String, f64)>,
    /// Coordinates compared.
    pub coordinates: usize,
    /// Coordinates compared with a step smaller than epsilon.
    pub reduced_steps: usize,
    /// Coordinates left out because a pattern switch was closer than the smallest step.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradients accumulated by `loss` against
/// `(L(p+ε) − L(p−ε)) / 2ε` on up to `samples` coordinates of every parameter.
///
/// `loss` must compute the loss of `model` and accumulate its gradient; it is
/// called once with zeroed gradients for the analytic pass and then twice per
/// sampled coordinate.
pub fn gradient_check<M, F>(model: &mut M, epsilon: f64, samples: usize, seed: u64, mut loss: F) -> Result<GradCheckReport, NnError>
where
    M: Parameters,
    F: FnMut(&mut M) -> Result<f64, NnError>,
{
    gradient_check_piecewise(model, epsilon, samples, seed, |m| Ok((loss(m)?, Vec::new())))
}

/// [`gradient_check`] for piecewise-smooth losses (ReLU, max pooling).
///
/// `loss` also returns the activation pattern of its evaluation, e.g. ReLU
/// signs and max-pool winners. A central difference whose probes land in a
/// different pattern than the unperturbed point straddles a kink and does not
/// estimate the derivative, so the step for that coordinate is divided by 10,
/// up to [`MAX_STEP_REDUCTIONS`] times, until both probes stay on the same
/// smooth piece. Coordinates where that never happens are counted as skipped.
pub fn gradient_check_piecewise<M, F>(
    model: &mut M,
    epsilon: f64,
    samples: usize,
    seed: u64,
    mut loss: F,
) -> Result<GradCheckReport, NnError>
where
    M: Parameters,
    F: FnMut(&mut M) -> Result<(f64, Vec<usize>), NnError>,
{
    if !(epsilon > 0.0) {
        return Err(NnError::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    model.zero_grad();
    let (_, pattern) = loss(model)?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.to_vec()).collect();
    let names: Vec<String> = model.params().iter().map(|p| p.name.to_string()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: Vec::with_capacity(names.len()),
        coordinates: 0,
        reduced_steps: 0,
        skipped: 0,
    };
    for (g, name) in names.into_iter().enumerate() {
        let len = analytic[g].len();
        let coords: Vec<usize> = if len <= samples {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, samples).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst = 0.0f64;
        for i in coords {
            let original = model.params()[g].value[i];
            let mut step = epsilon;
            let mut numeric = None;
            for attempt in 0..=MAX_STEP_REDUCTIONS {
                model.params_mut()[g].value[i] = original + step;
                let (plus, p_plus) = loss(model)?;
                model.params_mut()[g].value[i] = original - step;
                let (minus, p_minus) = loss(model)?;
                model.params_mut()[g].value[i] = original;
                if p_plus == pattern && p_minus == pattern {
                    numeric = Some((plus - minus) / (2.0 * step));
                    report.reduced_steps += usize::from(attempt > 0);
                    break;
                }
                step /= 10.0;
            }
            match numeric {
                Some(n) => {
                    worst = worst.max(relative_error(analytic[g][i], n));
                    report.coordinates += 1;
                }
                None => report.skipped += 1,
            }
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push((name, worst));
    }
    model.zero_grad();
    Ok(report)
}

/// Gradient check of the LM loss on one window, without dropout.
pub fn check_lm_gradients(
    model: &mut LanguageModel,
    batch: &LmBatch,
    state: &[LstmState],
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    gradient_check(model, epsilon, DEFAULT_SAMPLES, seed, |m| {
        m.loss_and_grads(batch, state, None).map(|s| s.loss)
    })
}
