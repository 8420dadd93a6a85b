//! One function per subcommand; each returns the artifact paths it wrote.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;

use qrobust_core::{
    amplitude_tradeoff, estimate_statistics, extract_amplitude_pathways,
    extract_dipole_pathways, field_trajectory, interference_sweep, mode_sigma_sweep,
    moment_growth_series, moment_report, optimize, order_amplitude_series,
    order_interference_matrix, propagate, transition_probability, unitarity_defect,
    worst_case_report, MomentReport, ParameterCovariance, PathwayTable, UncertaintyKind,
};

use crate::artifacts::{complex_matrix_json, csv_file, write_csv_rows, write_json, Meta};
use crate::config::Resolved;

pub const FIGURES: [&str; 7] = [
    "moment-growth",
    "interference",
    "interference-orders",
    "order-amplitudes",
    "mode-sigma-sweep",
    "field-trajectory",
    "amplitude-tradeoff",
];

fn meta(resolved: &Resolved) -> Meta {
    Meta::for_config(&resolved.config)
}

pub fn simulate(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    let u = propagate(&resolved.system, &resolved.field, &resolved.settings)?;
    let probability = transition_probability(&u, resolved.initial_state, resolved.final_state)?;
    let payload = json!({
        "dimension": resolved.system.dimension(),
        "duration": resolved.field.duration(),
        "steps": resolved.config.analysis.steps,
        "initial_state": resolved.initial_state + 1,
        "final_state": resolved.final_state + 1,
        "transition_probability": probability,
        "unitarity_defect": unitarity_defect(&u),
        "propagator": complex_matrix_json(&u),
    });
    Ok(vec![write_json(
        &out.join("simulate.json"),
        &meta(resolved),
        &payload,
    )?])
}

/// Shared extraction for pathway-based commands, reported in the configured
/// rotation frame (interference and probability outputs are frame
/// invariant; complex amplitudes are not).
fn build_table(resolved: &Resolved) -> Result<PathwayTable> {
    let scheme = resolved.scheme()?;
    let table = match resolved.config.uncertainty.kind {
        UncertaintyKind::Amplitude => extract_amplitude_pathways(
            &resolved.system,
            &resolved.field,
            &scheme,
            &resolved.settings,
            resolved.initial_state,
            resolved.final_state,
        )?,
        UncertaintyKind::Dipole => extract_dipole_pathways(
            &resolved.system,
            &resolved.field,
            &scheme,
            &resolved.settings,
            resolved.initial_state,
            resolved.final_state,
        )?,
    };
    Ok(table.rotated(resolved.reporting_phase()))
}

pub fn pathways(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    let table = build_table(resolved)?;
    let meta = meta(resolved);
    let json_path = write_json(&out.join("pathways.json"), &meta, &table)?;
    let csv_path = out.join("pathways.csv");
    let file = csv_file(&csv_path, &meta)?;
    table.write_csv(file)?;
    Ok(vec![json_path, csv_path])
}

#[derive(Serialize)]
struct MomentRow {
    sigma: f64,
    expected_probability: f64,
    mean_re: f64,
    mean_im: f64,
    variance_re: f64,
    variance_im: f64,
    covariance_re_im: f64,
    total_variance: f64,
    same_order_total: f64,
    cross_order_total: f64,
}

impl MomentRow {
    fn new(sigma: f64, report: &MomentReport) -> Self {
        Self {
            sigma,
            expected_probability: report.expected_probability(),
            mean_re: report.mean_amplitude.re,
            mean_im: report.mean_amplitude.im,
            variance_re: report.variance_re(),
            variance_im: report.variance_im(),
            covariance_re_im: report.covariance_re_im(),
            total_variance: report.total_variance(),
            same_order_total: report.interference.same_order_total(),
            cross_order_total: report.interference.cross_order_total(),
        }
    }
}

pub fn moments(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    let table = build_table(resolved)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &sigma in &resolved.config.uncertainty.sweep {
        let model = resolved.model_from_shared(sigma)?;
        let report = moment_report(&table, &model)?;
        rows.push(MomentRow::new(sigma, &report));
        reports.push(json!({ "sigma": sigma, "report": report }));
    }
    let meta = meta(resolved);
    Ok(vec![
        write_csv_rows(&out.join("moments.csv"), &meta, &rows)?,
        write_json(&out.join("moments.json"), &meta, &reports)?,
    ])
}

pub fn worstcase(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    if resolved.config.uncertainty.kind != UncertaintyKind::Dipole {
        bail!("worstcase requires uncertainty.kind = \"dipole\" (sigma is absolute)");
    }
    let pairs = resolved.system.dipole_pairs().len();
    let covariance = match &resolved.config.uncertainty.sigmas {
        None => ParameterCovariance::isotropic(pairs, resolved.config.uncertainty.sigma)?,
        Some(list) => {
            if list.len() != pairs {
                bail!(
                    "uncertainty.sigmas: worstcase needs one sigma per dipole pair \
                     ({pairs} including zero couplings), got {}",
                    list.len()
                );
            }
            ParameterCovariance::diagonal(list)?
        }
    };
    let report = worst_case_report(
        &resolved.system,
        &resolved.field,
        resolved.initial_state,
        resolved.final_state,
        &resolved.settings,
        covariance,
        resolved.config.analysis.confidence,
    )?;
    Ok(vec![write_json(
        &out.join("worstcase.json"),
        &meta(resolved),
        &report,
    )?])
}

pub fn sample(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    let model = resolved.single_model()?;
    let stats = estimate_statistics(
        &resolved.system,
        &resolved.field,
        &model,
        resolved.initial_state,
        resolved.final_state,
        resolved.config.mc.samples,
        resolved.config.mc.seed,
        &resolved.settings,
        resolved.reporting_phase(),
    )?;
    let payload = json!({
        "model": model,
        "seed": resolved.config.mc.seed,
        "statistics": stats,
    });
    Ok(vec![write_json(
        &out.join("sample.json"),
        &meta(resolved),
        &payload,
    )?])
}

pub fn optimize_fields(resolved: &Resolved, out: &Path) -> Result<Vec<PathBuf>> {
    let objective = resolved.ga_objective()?;
    let config = resolved.config.ga.to_core(objective.modes())?;
    let outcome = optimize(&objective, &config)?;
    let field = objective.field(&outcome.best.genes)?;
    let modes: Vec<_> = field
        .modes()
        .iter()
        .map(|m| json!({ "omega": m.omega, "amplitude": m.amplitude, "phase": m.phase }))
        .collect();
    let payload = json!({
        "best_fitness": outcome.best.fitness,
        "genes": outcome.best.genes,
        "modes": modes,
        "duration": field.duration(),
        "evaluations": outcome.evaluations,
        "generations": config.generations,
        "seed": config.seed,
    });
    let meta = meta(resolved);
    Ok(vec![
        write_json(&out.join("optimize.json"), &meta, &payload)?,
        write_csv_rows(&out.join("history.csv"), &meta, &outcome.history)?,
    ])
}

#[derive(Serialize)]
struct ComplexPairRow {
    order: usize,
    nominal_re: f64,
    nominal_im: f64,
    nominal_abs: f64,
    expected_re: f64,
    expected_im: f64,
    expected_abs: f64,
}

#[derive(Serialize)]
struct InterferenceCellRow {
    order_row: usize,
    order_col: usize,
    nominal_re: f64,
    nominal_im: f64,
    expected_re: f64,
    expected_im: f64,
}

#[derive(Serialize)]
struct TradeoffRow {
    amplitude: f64,
    best_seed: u64,
    best_nominal: f64,
    expected_probability: f64,
    significant_orders: usize,
    genes: String,
}

pub fn report(resolved: &Resolved, out: &Path, figure: &str) -> Result<Vec<PathBuf>> {
    let meta = meta(resolved);
    let sigma = resolved.config.uncertainty.sigma;
    let sweep = &resolved.config.uncertainty.sweep;
    let path = out.join(format!("figure_{}.csv", figure.replace('-', "_")));
    match figure {
        "moment-growth" => {
            let mean = resolved.field.amplitudes()[0];
            let rows =
                moment_growth_series(mean, sigma, 2 * resolved.config.analysis.max_order as u32)?;
            write_csv_rows(&path, &meta, &rows)?;
        }
        "interference" => {
            let table = build_table(resolved)?;
            let rows = interference_sweep(&table, sweep)?;
            write_csv_rows(&path, &meta, &rows)?;
        }
        "interference-orders" => {
            let table = build_table(resolved)?;
            let rows: Vec<InterferenceCellRow> = order_interference_matrix(&table, sigma)?
                .into_iter()
                .map(|cell| InterferenceCellRow {
                    order_row: cell.order_row,
                    order_col: cell.order_col,
                    nominal_re: cell.nominal.re,
                    nominal_im: cell.nominal.im,
                    expected_re: cell.expected.re,
                    expected_im: cell.expected.im,
                })
                .collect();
            write_csv_rows(&path, &meta, &rows)?;
        }
        "order-amplitudes" => {
            let table = build_table(resolved)?;
            let rows: Vec<ComplexPairRow> = order_amplitude_series(&table, sigma)?
                .into_iter()
                .map(|row| ComplexPairRow {
                    order: row.order,
                    nominal_re: row.nominal.re,
                    nominal_im: row.nominal.im,
                    nominal_abs: row.nominal.norm(),
                    expected_re: row.expected.re,
                    expected_im: row.expected.im,
                    expected_abs: row.expected.norm(),
                })
                .collect();
            write_csv_rows(&path, &meta, &rows)?;
        }
        "mode-sigma-sweep" => {
            let table = build_table(resolved)?;
            let varied = if table.parameter_means.len() > 1 { 1 } else { 0 };
            let rows = mode_sigma_sweep(&table, varied, sweep, sigma)?;
            write_csv_rows(&path, &meta, &rows)?;
        }
        "field-trajectory" => {
            let model = resolved.single_model()?;
            let rows = field_trajectory(
                &resolved.system,
                &resolved.field,
                &model,
                resolved.initial_state,
                resolved.final_state,
                resolved.config.analysis.trajectory_points,
                resolved.config.analysis.trajectory_samples,
                resolved.config.mc.seed,
                &resolved.settings,
            )?;
            write_csv_rows(&path, &meta, &rows)?;
        }
        "amplitude-tradeoff" => {
            let objective = resolved.ga_objective()?;
            let config = resolved.config.ga.to_core(objective.modes())?;
            let ga = &resolved.config.ga;
            let seeds: Vec<u64> = (0..ga.sweep_seeds as u64).map(|k| ga.seed + k).collect();
            let order_budget = resolved.config.analysis.max_order.clamp(4, 16);
            let rows: Vec<TradeoffRow> = amplitude_tradeoff(
                &objective,
                &config,
                &ga.sweep_amplitudes,
                &seeds,
                ga.robustness_sigma,
                resolved.config.mc.samples,
                resolved.config.mc.seed,
                order_budget,
            )?
            .into_iter()
            .map(|row| TradeoffRow {
                amplitude: row.amplitude,
                best_seed: row.best_seed,
                best_nominal: row.best_nominal,
                expected_probability: row.expected_probability,
                significant_orders: row.significant_orders,
                genes: row
                    .best_genes
                    .iter()
                    .map(|g| format!("{g:.12e}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            })
            .collect();
            write_csv_rows(&path, &meta, &rows)?;
        }
        other => bail!("unknown figure {other:?}; expected one of {}", FIGURES.join(", ")),
    }
    Ok(vec![path])
}
