//! Monte Carlo cross-validation of the analytic moment engine.
//!
//! Draws independent Gaussian parameter samples, re-propagates the exact
//! dynamics per sample (no order truncation), and reports estimator standard
//! errors so analytic values can be checked at a stated confidence. Results
//! are reproducible: sample `i` of seed `s` always sees the same draws, and
//! accumulation order is fixed regardless of thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyson::dyson_column;
use crate::error::CoreError;
use crate::moments::{UncertaintyKind, UncertaintyModel};
use crate::propagate::propagate_column;
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

/// Gaussian draw of all model parameters for one sample.
///
/// Decorrelated counter-based streams: the RNG is seeded with `seed` and
/// moved to stream `sample_index`, so samples are independent of each other
/// and of how work is scheduled. Draws are kept signed; at large sigma a
/// parameter may legitimately cross zero.
pub fn sample_parameters(model: &UncertaintyModel, seed: u64, sample_index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    model
        .means
        .iter()
        .zip(&model.sigmas)
        .map(|(&mean, &sigma)| {
            if sigma == 0.0 {
                mean
            } else {
                Normal::new(mean, sigma).expect("sigma validated nonnegative").sample(&mut rng)
            }
        })
        .collect()
}

/// Sampled statistics of one propagator element under parameter uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStatistics {
    pub samples: usize,
    /// Phase applied to each sampled amplitude before accumulation.
    pub phase: f64,
    /// Mean of `|U|^2`.
    pub expected_probability: f64,
    /// Standard error of `expected_probability`.
    pub se_probability: f64,
    /// Mean sampled amplitude.
    #[serde(with = "crate::serde_complex")]
    pub mean_amplitude: Complex64,
    /// Standard errors of the mean's real and imaginary parts.
    pub se_mean_re: f64,
    pub se_mean_im: f64,
    /// Unbiased component variances of the amplitude.
    pub variance_re: f64,
    pub variance_im: f64,
    /// Standard errors of the variance estimates (via fourth moments).
    pub se_variance_re: f64,
    pub se_variance_im: f64,
    /// Unbiased covariance of the components.
    pub covariance_re_im: f64,
}

/// Running raw power sums for one real observable.
#[derive(Debug, Clone, Copy, Default)]
struct PowerSums {
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

impl PowerSums {
    #[inline]
    fn push(&mut self, x: f64) {
        let x2 = x * x;
        self.s1 += x;
        self.s2 += x2;
        self.s3 += x2 * x;
        self.s4 += x2 * x2;
    }

    fn merge(&mut self, o: &PowerSums) {
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s3 += o.s3;
        self.s4 += o.s4;
    }

    fn mean(&self, n: f64) -> f64 {
        self.s1 / n
    }

    /// Biased central moments (m2, m4) from the raw sums.
    fn central(&self, n: f64) -> (f64, f64) {
        let mean = self.mean(n);
        let m2 = (self.s2 / n - mean * mean).max(0.0);
        let m4 = self.s4 / n - 4.0 * mean * self.s3 / n + 6.0 * mean * mean * self.s2 / n
            - 3.0 * mean.powi(4);
        (m2, m4.max(0.0))
    }

    /// Unbiased variance and its standard error.
    fn variance_with_se(&self, n: f64) -> (f64, f64) {
        let (m2, m4) = self.central(n);
        let var = m2 * n / (n - 1.0);
        // var(s^2) ~ (m4 - s^4 (n-3)/(n-1)) / n for iid samples.
        let spread = (m4 - var * var * (n - 3.0) / (n - 1.0)) / n;
        (var, spread.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    re: PowerSums,
    im: PowerSums,
    prob: PowerSums,
    cross: f64,
}

impl Accumulator {
    #[inline]
    fn push(&mut self, u: Complex64) {
        self.re.push(u.re);
        self.im.push(u.im);
        self.prob.push(u.norm_sqr());
        self.cross += u.re * u.im;
    }

    fn merge(&mut self, o: &Accumulator) {
        self.re.merge(&o.re);
        self.im.merge(&o.im);
        self.prob.merge(&o.prob);
        self.cross += o.cross;
    }
}

/// Owned copies of the problem with one parameter draw applied: amplitude
/// draws replace the field amplitudes, dipole draws replace the nonzero
/// symmetric pairs.
pub(crate) fn perturbed_problem(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    draw: &[f64],
) -> Result<(QuantumSystem, ControlField), CoreError> {
    match model.kind {
        UncertaintyKind::Amplitude => Ok((system.clone(), field.with_amplitudes(draw)?)),
        UncertaintyKind::Dipole => {
            let pairs = system.nonzero_dipole_pairs();
            debug_assert_eq!(pairs.len(), draw.len());
            let mut dipole = system.dipole().clone();
            for (&(p, q), &value) in pairs.iter().zip(draw) {
                dipole[(p, q)] = value;
                dipole[(q, p)] = value;
            }
            Ok((system.with_dipole(dipole)?, field.clone()))
        }
    }
}

/// Propagates one parameter draw and returns the sampled element `U_ji`.
fn sample_amplitude(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    initial_state: usize,
    final_state: usize,
    settings: &PropagationSettings,
    seed: u64,
    index: u64,
) -> Result<Complex64, CoreError> {
    let draw = sample_parameters(model, seed, index);
    let (perturbed_system, perturbed_field) = perturbed_problem(system, field, model, &draw)?;
    let column = propagate_column(&perturbed_system, &perturbed_field, initial_state, settings)?;
    Ok(column[final_state])
}

/// Monte Carlo estimate of the element's mean, component variances and
/// expected transition probability, with standard errors.
///
/// `phase` rotates each sampled amplitude by `exp(i phase)` before
/// accumulation (probabilities are unaffected); pass 0 for the lab frame.
/// Runtime is `samples` full propagations; samples are processed in fixed
/// chunks so the result is bit-identical for any worker count.
#[allow(clippy::too_many_arguments)]
pub fn estimate_statistics(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    initial_state: usize,
    final_state: usize,
    samples: usize,
    seed: u64,
    settings: &PropagationSettings,
    phase: f64,
) -> Result<SampleStatistics, CoreError> {
    validate_inputs(system, field, model, initial_state, final_state, samples)?;
    let rot = Complex64::from_polar(1.0, phase);

    const CHUNK: usize = 256;
    let chunks: Vec<(u64, usize)> = (0..samples)
        .step_by(CHUNK)
        .map(|start| (start as u64, CHUNK.min(samples - start)))
        .collect();
    let partials: Result<Vec<Accumulator>, CoreError> = chunks
        .par_iter()
        .map(|&(start, len)| {
            let mut acc = Accumulator::default();
            for offset in 0..len {
                let index = start + offset as u64;
                let u = sample_amplitude(
                    system,
                    field,
                    model,
                    initial_state,
                    final_state,
                    settings,
                    seed,
                    index,
                )
                .map_err(|e| CoreError::SampleFailed {
                    index: index as usize,
                    source: Box::new(e),
                })?;
                acc.push(u * rot);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::default();
    for part in partials? {
        total.merge(&part);
    }

    let n = samples as f64;
    let (var_re, se_var_re) = total.re.variance_with_se(n);
    let (var_im, se_var_im) = total.im.variance_with_se(n);
    let (var_p, _) = total.prob.variance_with_se(n);
    let mean_re = total.re.mean(n);
    let mean_im = total.im.mean(n);
    let cov = (total.cross / n - mean_re * mean_im) * n / (n - 1.0);

    Ok(SampleStatistics {
        samples,
        phase,
        expected_probability: total.prob.mean(n),
        se_probability: (var_p / n).sqrt(),
        mean_amplitude: Complex64::new(mean_re, mean_im),
        se_mean_re: (var_re / n).sqrt(),
        se_mean_im: (var_im / n).sqrt(),
        variance_re: var_re,
        variance_im: var_im,
        se_variance_re: se_var_re,
        se_variance_im: se_var_im,
        covariance_re_im: cov,
    })
}

/// Sampled per-order statistics of the element's Dyson terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatistics {
    pub samples: usize,
    pub max_order: usize,
    /// `E[U_m]`, order 0 first.
    #[serde(with = "crate::serde_complex::vec")]
    pub order_means: Vec<Complex64>,
    /// `E[|U_m|^2]` per order.
    pub same_order: Vec<f64>,
    /// `E[|sum_m U_m|^2]` of the truncated element.
    pub total_second: f64,
}

impl OrderStatistics {
    /// Sampled cross-order interference `E[sum_{m != n} conj(U_m) U_n]`.
    pub fn cross_order_total(&self) -> f64 {
        self.total_second - self.same_order.iter().sum::<f64>()
    }
}

/// Samples per-order Dyson terms of the element under the model; the
/// per-sample cost is `max_order + 1` coupled column propagations.
#[allow(clippy::too_many_arguments)]
pub fn estimate_order_statistics(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    initial_state: usize,
    final_state: usize,
    max_order: usize,
    samples: usize,
    seed: u64,
    settings: &PropagationSettings,
) -> Result<OrderStatistics, CoreError> {
    validate_inputs(system, field, model, initial_state, final_state, samples)?;
    let dim = system.dimension();

    let mut order_means = vec![Complex64::default(); max_order + 1];
    let mut same_order = vec![0.0; max_order + 1];
    let mut total_second = 0.0;
    for index in 0..samples as u64 {
        let draw = sample_parameters(model, seed, index);
        let (sys, fld) = match model.kind {
            UncertaintyKind::Amplitude => {
                (system.clone(), field.with_amplitudes(&draw)?)
            }
            UncertaintyKind::Dipole => {
                let pairs = system.nonzero_dipole_pairs();
                let mut dipole = system.dipole().clone();
                for (&(p, q), &value) in pairs.iter().zip(&draw) {
                    dipole[(p, q)] = value;
                    dipole[(q, p)] = value;
                }
                (system.with_dipole(dipole)?, field.clone())
            }
        };
        let grades = dyson_column(&sys, &fld, initial_state, max_order, settings)?;
        let mut sum = Complex64::default();
        for m in 0..=max_order {
            let u_m = grades[m * dim + final_state];
            order_means[m] += u_m;
            same_order[m] += u_m.norm_sqr();
            sum += u_m;
        }
        total_second += sum.norm_sqr();
    }
    let n = samples as f64;
    for z in order_means.iter_mut() {
        *z /= n;
    }
    for v in same_order.iter_mut() {
        *v /= n;
    }
    Ok(OrderStatistics {
        samples,
        max_order,
        order_means,
        same_order,
        total_second: total_second / n,
    })
}

fn validate_inputs(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    initial_state: usize,
    final_state: usize,
    samples: usize,
) -> Result<(), CoreError> {
    if samples < 2 {
        return Err(CoreError::Invalid("need at least 2 samples".into()));
    }
    let dim = system.dimension();
    for idx in [initial_state, final_state] {
        if idx >= dim {
            return Err(CoreError::IndexOutOfRange { index: idx, dim });
        }
    }
    let expected = match model.kind {
        UncertaintyKind::Amplitude => field.modes().len(),
        UncertaintyKind::Dipole => system.nonzero_dipole_pairs().len(),
    };
    if model.param_count() != expected {
        return Err(CoreError::Dimension(format!(
            "model has {} parameters, target has {}",
            model.param_count(),
            expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{moment_report, UncertaintyModel};
    use crate::pathway::{assign_encoding_frequencies, extract_amplitude_pathways};
    use crate::system::FieldMode;
    use ndarray::array;

    fn toy() -> (QuantumSystem, ControlField) {
        let system =
            QuantumSystem::new(vec![0.0, 1.0], array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let field = ControlField::new(
            vec![
                FieldMode { omega: 1.0, amplitude: 0.08, phase: 0.3 },
                FieldMode { omega: 1.7, amplitude: 0.05, phase: 1.1 },
            ],
            6.0,
        )
        .unwrap();
        (system, field)
    }

    fn toy_model(field: &ControlField, fraction: f64) -> UncertaintyModel {
        UncertaintyModel::amplitude_relative(field, fraction).unwrap()
    }

    #[test]
    fn draws_are_reproducible_and_stream_separated() {
        let (_, field) = toy();
        let model = toy_model(&field, 0.2);
        let a = sample_parameters(&model, 7, 3);
        let b = sample_parameters(&model, 7, 3);
        assert_eq!(a, b);
        let c = sample_parameters(&model, 7, 4);
        assert_ne!(a, c);
        let d = sample_parameters(&model, 8, 3);
        assert_ne!(a, d);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn draw_statistics_match_the_model() {
        let (_, field) = toy();
        let model = toy_model(&field, 0.25);
        let n = 20_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for idx in 0..n as u64 {
            let draw = sample_parameters(&model, 11, idx);
            for k in 0..2 {
                sum[k] += draw[k];
                sq[k] += draw[k] * draw[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            let want_sigma = model.sigmas[k];
            assert!((mean - model.means[k]).abs() < 4.0 * want_sigma / (n as f64).sqrt());
            assert!((var.sqrt() - want_sigma).abs() / want_sigma < 0.03);
        }
    }

    #[test]
    fn zero_sigma_sampling_is_deterministic_nominal() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.0);
        let settings = PropagationSettings::new(200).unwrap();
        let stats = estimate_statistics(&system, &field, &model, 0, 1, 16, 5, &settings, 0.0)
            .unwrap();
        let direct = propagate_column(&system, &field, 0, &settings).unwrap()[1];
        assert!((stats.mean_amplitude - direct).norm() < 1e-14);
        // Raw-sum cancellation leaves ~eps * mean^2 of noise at sigma = 0.
        assert!(stats.variance_re < 1e-15);
        assert!(stats.variance_im < 1e-15);
        assert!((stats.expected_probability - direct.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn sampled_moments_agree_with_analytic_within_three_se() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.15);
        let settings = PropagationSettings::new(250).unwrap();
        let scheme = assign_encoding_frequencies(2, 8).unwrap();
        let table =
            extract_amplitude_pathways(&system, &field, &scheme, &settings, 0, 1).unwrap();
        let analytic = moment_report(&table, &model).unwrap();

        let stats =
            estimate_statistics(&system, &field, &model, 0, 1, 20_000, 42, &settings, 0.0)
                .unwrap();
        assert!(
            (stats.expected_probability - analytic.second_abs).abs()
                < 3.0 * stats.se_probability
        );
        assert!(
            (stats.mean_amplitude.re - analytic.mean_amplitude.re).abs()
                < 3.0 * stats.se_mean_re
        );
        assert!(
            (stats.mean_amplitude.im - analytic.mean_amplitude.im).abs()
                < 3.0 * stats.se_mean_im
        );
        assert!(
            (stats.variance_re - analytic.variance_re()).abs() < 3.0 * stats.se_variance_re,
            "var re {} vs {} (se {})",
            stats.variance_re,
            analytic.variance_re(),
            stats.se_variance_re
        );
        assert!(
            (stats.variance_im - analytic.variance_im()).abs() < 3.0 * stats.se_variance_im,
            "var im {} vs {} (se {})",
            stats.variance_im,
            analytic.variance_im(),
            stats.se_variance_im
        );
    }

    #[test]
    fn estimates_are_worker_count_invariant_and_seed_sensitive() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.2);
        let settings = PropagationSettings::new(120).unwrap();
        let run = |seed| {
            estimate_statistics(&system, &field, &model, 0, 1, 600, seed, &settings, 0.0)
                .unwrap()
        };
        let a = run(1);
        let b = run(1);
        assert_eq!(a, b);
        let c = run(2);
        assert_ne!(a.expected_probability, c.expected_probability);
        // Distinct seeds still agree statistically.
        assert!(
            (a.expected_probability - c.expected_probability).abs()
                < 4.0 * (a.se_probability + c.se_probability)
        );
    }

    #[test]
    fn phase_rotation_preserves_probability_statistics() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.2);
        let settings = PropagationSettings::new(120).unwrap();
        let plain = estimate_statistics(&system, &field, &model, 0, 1, 400, 3, &settings, 0.0)
            .unwrap();
        let rot = estimate_statistics(&system, &field, &model, 0, 1, 400, 3, &settings, 0.9)
            .unwrap();
        assert!((plain.expected_probability - rot.expected_probability).abs() < 1e-14);
        assert!(
            (plain.mean_amplitude.norm() - rot.mean_amplitude.norm()).abs() < 1e-14
        );
        // Total scatter is frame-invariant even though components move.
        assert!(
            ((plain.variance_re + plain.variance_im) - (rot.variance_re + rot.variance_im))
                .abs()
                < 1e-14
        );
        assert!((plain.variance_re - rot.variance_re).abs() > 1e-8);
    }

    #[test]
    fn dipole_sampling_cross_checks_dipole_moments() {
        let system = QuantumSystem::new(
            vec![0.0, 1.0, 1.6],
            array![[0.0, 1.0, 0.5], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]],
        )
        .unwrap();
        let field = ControlField::new(
            vec![FieldMode { omega: 1.0, amplitude: 0.06, phase: 0.7 }],
            6.0,
        )
        .unwrap();
        let settings = PropagationSettings::new(250).unwrap();
        let model = UncertaintyModel::dipole_absolute(&system, 0.05).unwrap();
        let scheme = crate::pathway::EncodingScheme::assign(
            crate::pathway::PathwayKind::Dipole,
            2,
            8,
            1,
        )
        .unwrap();
        let table = crate::pathway::extract_dipole_pathways(
            &system, &field, &scheme, &settings, 0, 1,
        )
        .unwrap();
        let analytic = moment_report(&table, &model).unwrap();
        let stats =
            estimate_statistics(&system, &field, &model, 0, 1, 12_000, 9, &settings, 0.0)
                .unwrap();
        assert!(
            (stats.expected_probability - analytic.second_abs).abs()
                < 3.0 * stats.se_probability
        );
        assert!((stats.variance_re - analytic.variance_re()).abs() < 3.0 * stats.se_variance_re);
        assert!((stats.variance_im - analytic.variance_im()).abs() < 3.0 * stats.se_variance_im);
    }

    #[test]
    fn order_sampling_matches_interference_diagonal() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.18);
        let settings = PropagationSettings::new(200).unwrap();
        let scheme = assign_encoding_frequencies(2, 8).unwrap();
        let table =
            extract_amplitude_pathways(&system, &field, &scheme, &settings, 0, 1).unwrap();
        let analytic = moment_report(&table, &model).unwrap();

        let orders = estimate_order_statistics(
            &system, &field, &model, 0, 1, 8, 4000, 17, &settings,
        )
        .unwrap();
        // Same-order diagonal and total interference, sampled vs exact.
        let n = orders.samples as f64;
        for m in 0..=4usize {
            let got = orders.same_order[m];
            let want = analytic.interference.at(m, m).re;
            let spread = (orders.same_order[m] / n.sqrt()).max(1e-9);
            assert!(
                (got - want).abs() < 6.0 * spread + 1e-9,
                "order {m}: sampled {got} vs analytic {want}"
            );
        }
        let total_err = (orders.total_second - analytic.second_abs).abs();
        assert!(total_err < 0.01, "total second moment off by {total_err}");
        assert!(
            (orders.cross_order_total() - analytic.interference.cross_order_total()).abs()
                < 0.01
        );
    }

    #[test]
    fn input_validation_rejects_mismatches() {
        let (system, field) = toy();
        let model = toy_model(&field, 0.1);
        let settings = PropagationSettings::default();
        assert!(
            estimate_statistics(&system, &field, &model, 0, 5, 10, 1, &settings, 0.0).is_err()
        );
        assert!(
            estimate_statistics(&system, &field, &model, 0, 1, 1, 1, &settings, 0.0).is_err()
        );
        let short = UncertaintyModel::new(UncertaintyKind::Amplitude, vec![0.1], vec![0.0])
            .unwrap();
        assert!(
            estimate_statistics(&system, &field, &short, 0, 1, 10, 1, &settings, 0.0).is_err()
        );
    }
}
