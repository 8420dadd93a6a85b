//! Series builders behind the plot-data reports: each returns typed rows
//! (one struct per figure family) that the CLI serializes to CSV.
//!
//! All sigma arguments here are fractions of the nominal parameter values;
//! absolute standard deviations are `fraction * |mean_k|` per parameter.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyson::dyson_column;
use crate::error::CoreError;
use crate::moments::{gaussian_raw_moment, moment_report, UncertaintyModel};
use crate::montecarlo::{estimate_statistics, perturbed_problem, sample_parameters};
use crate::pathway::PathwayTable;
use crate::propagate::{coupling_row_major, run_propagation};
use crate::rcga::{optimize, GaConfig, GaObjective};
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

fn check_fraction(fraction: f64) -> Result<(), CoreError> {
    if !fraction.is_finite() || fraction < 0.0 {
        return Err(CoreError::Invalid(format!(
            "sigma fraction must be finite and >= 0, got {fraction}"
        )));
    }
    Ok(())
}

/// Uncertainty model for a table with per-parameter sigma fractions.
fn table_model(table: &PathwayTable, fractions: &[f64]) -> Result<UncertaintyModel, CoreError> {
    if fractions.len() != table.parameter_means.len() {
        return Err(CoreError::Dimension(format!(
            "{} sigma fractions for {} parameters",
            fractions.len(),
            table.parameter_means.len()
        )));
    }
    for &f in fractions {
        check_fraction(f)?;
    }
    let sigmas = table
        .parameter_means
        .iter()
        .zip(fractions)
        .map(|(m, f)| m.abs() * f)
        .collect();
    UncertaintyModel::new(table.kind, table.parameter_means.clone(), sigmas)
}

/// Growth of the raw Gaussian moment `E[A^p]` against the nominal power
/// `A^p` for one parameter; the ratio grows roughly exponentially in `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowthRow {
    pub power: u32,
    pub nominal: f64,
    pub expected: f64,
    pub ratio: f64,
}

pub fn moment_growth_series(
    mean: f64,
    fraction: f64,
    max_power: u32,
) -> Result<Vec<MomentGrowthRow>, CoreError> {
    check_fraction(fraction)?;
    if !mean.is_finite() || mean == 0.0 {
        return Err(CoreError::Invalid(format!(
            "mean must be finite and nonzero, got {mean}"
        )));
    }
    let sigma = mean.abs() * fraction;
    Ok((0..=max_power)
        .map(|p| {
            let nominal = mean.powi(p as i32);
            let expected = gaussian_raw_moment(mean, sigma, p);
            MomentGrowthRow {
                power: p,
                nominal,
                expected,
                ratio: expected / nominal,
            }
        })
        .collect())
}

/// Expected transfer and interference resolved over a shared sigma sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSweepRow {
    pub sigma: f64,
    pub expected_probability: f64,
    pub same_order_total: f64,
    pub cross_order_total: f64,
    pub total_variance: f64,
}

pub fn interference_sweep(
    table: &PathwayTable,
    fractions: &[f64],
) -> Result<Vec<InterferenceSweepRow>, CoreError> {
    fractions
        .iter()
        .map(|&f| {
            let model = table_model(table, &vec![f; table.parameter_means.len()])?;
            let report = moment_report(table, &model)?;
            Ok(InterferenceSweepRow {
                sigma: f,
                expected_probability: report.expected_probability(),
                same_order_total: report.interference.same_order_total(),
                cross_order_total: report.interference.cross_order_total(),
                total_variance: report.total_variance(),
            })
        })
        .collect()
}

/// One cell of the order-by-order interference matrix, nominal next to a
/// noisy case. Only `row <= col` is emitted; the matrix is Hermitian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderInterferenceRow {
    pub order_row: usize,
    pub order_col: usize,
    #[serde(with = "crate::serde_complex")]
    pub nominal: Complex64,
    #[serde(with = "crate::serde_complex")]
    pub expected: Complex64,
}

pub fn order_interference_matrix(
    table: &PathwayTable,
    fraction: f64,
) -> Result<Vec<OrderInterferenceRow>, CoreError> {
    let params = table.parameter_means.len();
    let nominal = moment_report(table, &table_model(table, &vec![0.0; params])?)?;
    let noisy = moment_report(table, &table_model(table, &vec![fraction; params])?)?;
    let m = table.scheme.max_order;
    let mut rows = Vec::with_capacity((m + 1) * (m + 2) / 2);
    for r in 0..=m {
        for c in r..=m {
            rows.push(OrderInterferenceRow {
                order_row: r,
                order_col: c,
                nominal: nominal.interference.at(r, c),
                expected: noisy.interference.at(r, c),
            });
        }
    }
    Ok(rows)
}

/// Per-order expected amplitude contribution `E[U^(m)_ji]`, nominal next to
/// a noisy case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderAmplitudeRow {
    pub order: usize,
    #[serde(with = "crate::serde_complex")]
    pub nominal: Complex64,
    #[serde(with = "crate::serde_complex")]
    pub expected: Complex64,
}

pub fn order_amplitude_series(
    table: &PathwayTable,
    fraction: f64,
) -> Result<Vec<OrderAmplitudeRow>, CoreError> {
    let params = table.parameter_means.len();
    let nominal = moment_report(table, &table_model(table, &vec![0.0; params])?)?;
    let noisy = moment_report(table, &table_model(table, &vec![fraction; params])?)?;
    Ok(nominal
        .order_means
        .iter()
        .zip(&noisy.order_means)
        .enumerate()
        .map(|(order, (&n, &e))| OrderAmplitudeRow {
            order,
            nominal: n,
            expected: e,
        })
        .collect())
}

/// Sweep of one parameter's sigma with the remaining sigmas pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSigmaSweepRow {
    pub varied_sigma: f64,
    pub expected_probability: f64,
    pub cross_order_total: f64,
    pub total_variance: f64,
}

pub fn mode_sigma_sweep(
    table: &PathwayTable,
    varied_index: usize,
    varied_fractions: &[f64],
    fixed_fraction: f64,
) -> Result<Vec<ModeSigmaSweepRow>, CoreError> {
    let params = table.parameter_means.len();
    if varied_index >= params {
        return Err(CoreError::IndexOutOfRange {
            index: varied_index,
            dim: params,
        });
    }
    check_fraction(fixed_fraction)?;
    varied_fractions
        .iter()
        .map(|&f| {
            let mut fractions = vec![fixed_fraction; params];
            fractions[varied_index] = f;
            let report = moment_report(table, &table_model(table, &fractions)?)?;
            Ok(ModeSigmaSweepRow {
                varied_sigma: f,
                expected_probability: report.expected_probability(),
                cross_order_total: report.interference.cross_order_total(),
                total_variance: report.total_variance(),
            })
        })
        .collect()
}

/// One time sample of the control field and the population-transfer
/// trajectory, nominal next to the Monte Carlo average over parameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub field_value: f64,
    pub nominal_probability: f64,
    pub expected_probability: f64,
}

/// `P_{i->f}(t_k)` on a uniform grid of `points` segments for one problem
/// instance; used both for the nominal run and per draw.
fn probability_trajectory(
    system: &QuantumSystem,
    field: &ControlField,
    initial_state: usize,
    final_state: usize,
    points: usize,
    steps_per_segment: usize,
) -> Result<Vec<f64>, CoreError> {
    let dim = system.dimension();
    let coupling = coupling_row_major(system.dipole());
    let seg_settings = PropagationSettings::new(steps_per_segment)?;
    let seg_duration = field.duration() / points as f64;
    let mut state = vec![Complex64::default(); dim];
    state[initial_state] = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(points + 1);
    out.push(state[final_state].norm_sqr());
    for seg in 0..points {
        let t0 = seg as f64 * seg_duration;
        run_propagation(
            system.energies(),
            &coupling,
            |_, t| Complex64::new(field.value(t0 + t), 0.0),
            seg_duration,
            &seg_settings,
            &mut state,
            1,
        )?;
        out.push(state[final_state].norm_sqr());
    }
    Ok(out)
}

/// Temporal field profile plus nominal and expected population-transfer
/// trajectories. The time grid has `points + 1` rows covering `[0, T]`; the
/// expected curve averages `samples` Monte Carlo draws from `model`
/// (deterministic for a fixed seed and any worker count). Total steps are
/// rounded up to a multiple of `points`.
#[allow(clippy::too_many_arguments)]
pub fn field_trajectory(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
    initial_state: usize,
    final_state: usize,
    points: usize,
    samples: usize,
    seed: u64,
    settings: &PropagationSettings,
) -> Result<Vec<TrajectoryRow>, CoreError> {
    let dim = system.dimension();
    for state in [initial_state, final_state] {
        if state >= dim {
            return Err(CoreError::IndexOutOfRange { index: state, dim });
        }
    }
    if points == 0 {
        return Err(CoreError::Invalid("points must be >= 1".into()));
    }
    if samples == 0 {
        return Err(CoreError::Invalid("samples must be >= 1".into()));
    }
    if model.param_count() != expected_param_count(system, field, model) {
        return Err(CoreError::Dimension(
            "uncertainty model does not match the problem".into(),
        ));
    }
    let steps_per_segment = settings.steps.div_ceil(points).max(1);

    let nominal = probability_trajectory(
        system,
        field,
        initial_state,
        final_state,
        points,
        steps_per_segment,
    )?;

    // Ordered parallel draws keep the average bit-identical across worker
    // counts.
    let per_draw: Result<Vec<Vec<f64>>, CoreError> = (0..samples as u64)
        .into_par_iter()
        .map(|index| {
            let draw = sample_parameters(model, seed, index);
            let (sys, fld) = perturbed_problem(system, field, model, &draw)?;
            probability_trajectory(
                &sys,
                &fld,
                initial_state,
                final_state,
                points,
                steps_per_segment,
            )
        })
        .collect();
    let per_draw = per_draw?;
    let mut expected = vec![0.0; points + 1];
    for trajectory in &per_draw {
        for (acc, p) in expected.iter_mut().zip(trajectory) {
            *acc += p;
        }
    }
    for acc in expected.iter_mut() {
        *acc /= samples as f64;
    }

    let seg_duration = field.duration() / points as f64;
    Ok((0..=points)
        .map(|k| {
            let time = k as f64 * seg_duration;
            TrajectoryRow {
                time,
                field_value: field.value(time),
                nominal_probability: nominal[k],
                expected_probability: expected[k],
            }
        })
        .collect())
}

fn expected_param_count(
    system: &QuantumSystem,
    field: &ControlField,
    model: &UncertaintyModel,
) -> usize {
    match model.kind {
        crate::moments::UncertaintyKind::Amplitude => field.modes().len(),
        crate::moments::UncertaintyKind::Dipole => system.nonzero_dipole_pairs().len(),
    }
}

/// One amplitude point of the optimality/robustness trade-off: the best
/// synthesized field over the seed set, its nominal yield, its expected
/// yield under amplitude uncertainty, and how many perturbation orders carry
/// its dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTradeoffRow {
    pub amplitude: f64,
    pub best_nominal: f64,
    pub expected_probability: f64,
    pub significant_orders: usize,
    pub best_genes: Vec<f64>,
    pub best_seed: u64,
}

/// Sweeps the fixed mode amplitude, synthesizing a field per `(amplitude,
/// seed)` pair and reporting the best-of-seeds row for each amplitude.
///
/// `robustness_fraction` sets the relative amplitude sigma for the expected
/// yield; `order_budget` caps the perturbation-order count (orders holding
/// at least 1% of the largest order's magnitude are counted).
#[allow(clippy::too_many_arguments)]
pub fn amplitude_tradeoff(
    objective: &GaObjective,
    config: &GaConfig,
    amplitudes: &[f64],
    seeds: &[u64],
    robustness_fraction: f64,
    mc_samples: usize,
    mc_seed: u64,
    order_budget: usize,
) -> Result<Vec<AmplitudeTradeoffRow>, CoreError> {
    if amplitudes.is_empty() || seeds.is_empty() {
        return Err(CoreError::Invalid(
            "need at least one amplitude and one seed".into(),
        ));
    }
    check_fraction(robustness_fraction)?;
    let modes = objective.modes();
    amplitudes
        .iter()
        .map(|&amplitude| {
            if !(amplitude.is_finite()) || amplitude == 0.0 {
                return Err(CoreError::Invalid(format!(
                    "amplitude must be finite and nonzero, got {amplitude}"
                )));
            }
            let mut point = objective.clone();
            point.amplitudes = vec![amplitude; modes];
            let mut best: Option<(u64, crate::rcga::Individual)> = None;
            for &seed in seeds {
                let mut cfg = config.clone();
                cfg.seed = seed;
                let outcome = optimize(&point, &cfg)?;
                let better = best
                    .as_ref()
                    .map(|(_, b)| outcome.best.fitness > b.fitness)
                    .unwrap_or(true);
                if better {
                    best = Some((seed, outcome.best));
                }
            }
            let (best_seed, winner) = best.expect("seeds is nonempty");
            let field = point.field(&winner.genes)?;
            let model = UncertaintyModel::amplitude_relative(&field, robustness_fraction)?;
            let stats = estimate_statistics(
                &point.system,
                &field,
                &model,
                point.initial_state,
                point.final_state,
                mc_samples,
                mc_seed,
                &point.settings,
                0.0,
            )?;
            let significant_orders = significant_order_count(
                &point.system,
                &field,
                point.initial_state,
                point.final_state,
                order_budget,
                &point.settings,
            )?;
            Ok(AmplitudeTradeoffRow {
                amplitude,
                best_nominal: winner.fitness,
                expected_probability: stats.expected_probability,
                significant_orders,
                best_genes: winner.genes,
                best_seed,
            })
        })
        .collect()
}

/// Counts perturbation orders whose final-state contribution is at least 1%
/// of the largest order's, a proxy for how many coupled pathways the field
/// exploits.
fn significant_order_count(
    system: &QuantumSystem,
    field: &ControlField,
    initial_state: usize,
    final_state: usize,
    max_order: usize,
    settings: &PropagationSettings,
) -> Result<usize, CoreError> {
    let dim = system.dimension();
    let flat = dyson_column(system, field, initial_state, max_order, settings)?;
    let magnitudes: Vec<f64> = (0..=max_order)
        .map(|m| flat[m * dim + final_state].norm())
        .collect();
    let peak = magnitudes.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0);
    }
    Ok(magnitudes.iter().filter(|&&v| v >= 0.01 * peak).count())
}
