//! JSON experiment configuration: parsing, defaulting, validation, and
//! conversion into core domain objects.
//!
//! Every block is optional; an empty document resolves to the reference
//! four-level system driven by the `eps1` preset field. State indices in
//! the file are 1-based; the resolved form used by commands is 0-based.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use qrobust_core::pathway::EncodingScheme;
use qrobust_core::presets::{preset_field, preset_names, reference_system};
use qrobust_core::{
    ControlField, FieldMode, GaConfig, GaObjective, PathwayKind, PropagationSettings,
    QuantumSystem, UncertaintyKind, UncertaintyModel, Waveform,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub field: FieldConfig,
    pub uncertainty: UncertaintyConfig,
    pub analysis: AnalysisConfig,
    pub mc: McConfig,
    pub ga: GaBlock,
}

/// Level energies plus a real symmetric dipole matrix; defaults to the
/// reference four-level system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub energies: Vec<f64>,
    pub dipole: Vec<Vec<f64>>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let system = reference_system();
        let dipole = system
            .dipole()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect();
        Self {
            energies: system.energies().to_vec(),
            dipole,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Named preset `eps1` .. `eps8`; mutually exclusive with `modes`.
    pub preset: Option<String>,
    pub modes: Option<Vec<ModeConfig>>,
    /// Required alongside `modes`; fixed at 10 for presets.
    pub duration: Option<f64>,
    pub waveform: Option<Waveform>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Gaussian parameter uncertainty. For `amplitude` kind, `sigma`, `sigmas`
/// and `sweep` are fractions of the nominal mode amplitudes; for `dipole`
/// kind they are absolute standard deviations on the nonzero couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub kind: UncertaintyKind,
    /// Shared sigma used by single-point commands.
    pub sigma: f64,
    /// Optional per-parameter override of `sigma`.
    pub sigmas: Option<Vec<f64>>,
    /// Shared-sigma list used by sweep commands and sweep figures.
    pub sweep: Vec<f64>,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            kind: UncertaintyKind::Amplitude,
            sigma: 0.3,
            sigmas: None,
            sweep: vec![0.06, 0.12, 0.18, 0.24, 0.30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Pathway truncation order M.
    pub max_order: usize,
    /// Lowest encoding frequency; the ladder is `base_gamma * (M+1)^k`.
    pub base_gamma: u64,
    /// Optional phase-grid override (power of two above the top frequency).
    pub grid_size: Option<usize>,
    /// Decode residual-energy gate as a fraction of total energy.
    pub residual_tolerance: f64,
    /// 1-based initial state.
    pub initial_state: usize,
    /// 1-based final state.
    pub final_state: usize,
    pub confidence: f64,
    /// Integrator steps over the full duration.
    pub steps: usize,
    /// Reporting rotation in radians applied to complex outputs. Omitted:
    /// `E_final * T` (the interaction picture the reference tables use).
    /// Set 0 for the lab frame.
    pub phase: Option<f64>,
    /// Time-grid segments for trajectory figures.
    pub trajectory_points: usize,
    /// Monte Carlo draws behind the expected trajectory.
    pub trajectory_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            max_order: 21,
            base_gamma: 1,
            grid_size: None,
            residual_tolerance: 1e-3,
            initial_state: 1,
            final_state: 4,
            confidence: 0.95,
            steps: 5000,
            phase: None,
            trajectory_points: 200,
            trajectory_samples: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 7,
        }
    }
}

/// Genetic-optimizer block; unset fields take the reference protocol values
/// for the resolved mode count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaBlock {
    pub population: Option<usize>,
    pub reproductive: Option<usize>,
    pub crossover_probability: Option<f64>,
    pub eta_c: Option<f64>,
    pub mutation_probability: Option<f64>,
    pub mutation_scales: Option<Vec<f64>>,
    pub tournament_size: Option<usize>,
    pub generations: Option<usize>,
    /// Per-gene `[lower, upper]` pairs, frequencies first then phases.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub elites: Option<usize>,
    pub seed: u64,
    /// Integrator steps per fitness evaluation.
    pub fitness_steps: usize,
    /// Fixed-amplitude grid for the trade-off figure.
    pub sweep_amplitudes: Vec<f64>,
    /// Independent optimization runs per amplitude (seeds `seed..seed+n`).
    pub sweep_seeds: usize,
    /// Relative amplitude sigma for the trade-off robustness column.
    pub robustness_sigma: f64,
}

impl Default for GaBlock {
    fn default() -> Self {
        Self {
            population: None,
            reproductive: None,
            crossover_probability: None,
            eta_c: None,
            mutation_probability: None,
            mutation_scales: None,
            tournament_size: None,
            generations: None,
            bounds: None,
            elites: None,
            seed: 1,
            fitness_steps: 400,
            sweep_amplitudes: vec![0.05, 0.075, 0.1, 0.125, 0.15],
            sweep_seeds: 10,
            robustness_sigma: 0.2,
        }
    }
}

impl GaBlock {
    pub fn to_core(&self, modes: usize) -> Result<GaConfig> {
        let mut config = GaConfig::reference(modes, self.seed);
        if let Some(v) = self.population {
            config.population = v;
        }
        if let Some(v) = self.reproductive {
            config.reproductive = v;
        }
        if let Some(v) = self.crossover_probability {
            config.crossover_probability = v;
        }
        if let Some(v) = self.eta_c {
            config.eta_c = v;
        }
        if let Some(v) = self.mutation_probability {
            config.mutation_probability = v;
        }
        if let Some(v) = &self.mutation_scales {
            config.mutation_scales = v.clone();
        }
        if let Some(v) = self.tournament_size {
            config.tournament_size = v;
        }
        if let Some(v) = self.generations {
            config.generations = v;
        }
        if let Some(v) = &self.bounds {
            config.bounds = v.clone();
            if self.mutation_scales.is_none() {
                config.mutation_scales =
                    v.iter().map(|(lo, hi)| 0.05 * (hi - lo)).collect();
            }
        }
        if let Some(v) = self.elites {
            config.elites = v;
        }
        config
            .validate()
            .map_err(|e| anyhow!("ga: {e}"))?;
        Ok(config)
    }
}

/// Command-line overrides folded into the config before hashing, so the
/// recorded hash always describes the effective inputs.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub sigma: Option<Vec<f64>>,
    pub preset: Option<String>,
}

/// Parses the JSON document at `path`; parse errors carry line/column.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text)?;
    Ok(config)
}

pub fn apply_overrides(config: &mut ExperimentConfig, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        config.mc.seed = seed;
        config.ga.seed = seed;
    }
    if let Some(sigmas) = &overrides.sigma {
        if sigmas.len() == 1 {
            config.uncertainty.sigma = sigmas[0];
        }
        config.uncertainty.sweep = sigmas.clone();
        config.uncertainty.sigmas = None;
    }
    if let Some(preset) = &overrides.preset {
        config.field = FieldConfig {
            preset: Some(preset.clone()),
            ..FieldConfig::default()
        };
    }
}

/// Fully validated, core-typed view of a config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub system: QuantumSystem,
    pub field: ControlField,
    /// 0-based.
    pub initial_state: usize,
    /// 0-based.
    pub final_state: usize,
    pub settings: PropagationSettings,
}

impl Resolved {
    /// Reporting rotation: configured phase, or the final state's
    /// free-evolution phase `E_final * T`.
    pub fn reporting_phase(&self) -> f64 {
        self.config.analysis.phase.unwrap_or_else(|| {
            self.system.energies()[self.final_state] * self.field.duration()
        })
    }

    /// Parameter count of the configured uncertainty kind.
    pub fn param_count(&self) -> usize {
        match self.config.uncertainty.kind {
            UncertaintyKind::Amplitude => self.field.modes().len(),
            UncertaintyKind::Dipole => self.system.nonzero_dipole_pairs().len(),
        }
    }

    /// Model holding the shared `sigma` (or explicit per-parameter list).
    pub fn single_model(&self) -> Result<UncertaintyModel> {
        let u = &self.config.uncertainty;
        match &u.sigmas {
            Some(list) => self.model_from_list(list),
            None => self.model_from_shared(u.sigma),
        }
    }

    /// Model with one shared sigma value (fraction or absolute by kind).
    pub fn model_from_shared(&self, sigma: f64) -> Result<UncertaintyModel> {
        let model = match self.config.uncertainty.kind {
            UncertaintyKind::Amplitude => UncertaintyModel::amplitude_relative(&self.field, sigma),
            UncertaintyKind::Dipole => UncertaintyModel::dipole_absolute(&self.system, sigma),
        };
        model.map_err(|e| anyhow!("uncertainty: {e}"))
    }

    fn model_from_list(&self, list: &[f64]) -> Result<UncertaintyModel> {
        if list.len() != self.param_count() {
            bail!(
                "uncertainty.sigmas: {} values for {} parameters",
                list.len(),
                self.param_count()
            );
        }
        let (kind, means): (UncertaintyKind, Vec<f64>) = match self.config.uncertainty.kind {
            UncertaintyKind::Amplitude => (UncertaintyKind::Amplitude, self.field.amplitudes()),
            UncertaintyKind::Dipole => {
                let pairs = self.system.nonzero_dipole_pairs();
                let means = pairs
                    .iter()
                    .map(|&(p, q)| self.system.dipole()[(p, q)])
                    .collect();
                (UncertaintyKind::Dipole, means)
            }
        };
        let sigmas = match kind {
            // Fractions of the nominal amplitudes.
            UncertaintyKind::Amplitude => means
                .iter()
                .zip(list)
                .map(|(m, s)| m.abs() * s)
                .collect(),
            // Absolute values.
            UncertaintyKind::Dipole => list.to_vec(),
        };
        UncertaintyModel::new(kind, means, sigmas).map_err(|e| anyhow!("uncertainty: {e}"))
    }

    /// Encoding scheme for the configured kind and analysis block.
    pub fn scheme(&self) -> Result<EncodingScheme> {
        let a = &self.config.analysis;
        let kind = match self.config.uncertainty.kind {
            UncertaintyKind::Amplitude => PathwayKind::Amplitude,
            UncertaintyKind::Dipole => PathwayKind::Dipole,
        };
        let mut scheme = EncodingScheme::assign(kind, self.param_count(), a.max_order, a.base_gamma)
            .map_err(|e| anyhow!("analysis: {e}"))?
            .with_residual_tolerance(a.residual_tolerance);
        if let Some(grid) = a.grid_size {
            scheme = scheme
                .with_grid_size(grid)
                .map_err(|e| anyhow!("analysis.grid_size: {e}"))?;
        }
        Ok(scheme)
    }

    /// Synthesis objective sharing the config's system, duration and states;
    /// amplitudes start from the configured field.
    pub fn ga_objective(&self) -> Result<GaObjective> {
        let settings = PropagationSettings::new(self.config.ga.fitness_steps)
            .map_err(|e| anyhow!("ga.fitness_steps: {e}"))?;
        Ok(GaObjective {
            system: self.system.clone(),
            amplitudes: self.field.amplitudes(),
            duration: self.field.duration(),
            waveform: self.field.waveform(),
            initial_state: self.initial_state,
            final_state: self.final_state,
            settings,
        })
    }
}

/// Validates a parsed config and builds the core objects.
pub fn resolve(config: ExperimentConfig) -> Result<Resolved> {
    let system = build_system(&config.system)?;
    let field = build_field(&config.field)?;
    let a = &config.analysis;
    let dim = system.dimension();
    for (name, value) in [
        ("analysis.initial_state", a.initial_state),
        ("analysis.final_state", a.final_state),
    ] {
        if value == 0 || value > dim {
            bail!("{name}: must be 1..={dim} (1-based), got {value}");
        }
    }
    if !(0.0 < a.confidence && a.confidence < 1.0) {
        bail!("analysis.confidence: must lie in (0, 1), got {}", a.confidence);
    }
    let settings =
        PropagationSettings::new(a.steps).map_err(|e| anyhow!("analysis.steps: {e}"))?;
    let u = &config.uncertainty;
    for (name, ok) in [
        ("uncertainty.sigma", u.sigma.is_finite() && u.sigma >= 0.0),
        (
            "uncertainty.sweep",
            !u.sweep.is_empty() && u.sweep.iter().all(|s| s.is_finite() && *s >= 0.0),
        ),
    ] {
        if !ok {
            bail!("{name}: sigmas must be a nonempty list of finite values >= 0");
        }
    }
    if config.mc.samples < 2 {
        bail!("mc.samples: need at least 2, got {}", config.mc.samples);
    }
    let resolved = Resolved {
        initial_state: a.initial_state - 1,
        final_state: a.final_state - 1,
        system,
        field,
        settings,
        config,
    };
    // Surface dimension mismatches (sigmas list vs parameters) at load time.
    resolved.single_model()?;
    Ok(resolved)
}

fn build_system(block: &SystemConfig) -> Result<QuantumSystem> {
    let n = block.energies.len();
    if block.dipole.len() != n || block.dipole.iter().any(|row| row.len() != n) {
        bail!(
            "system.dipole: must be {n}x{n} to match {n} energies, got {}x{}",
            block.dipole.len(),
            block.dipole.first().map(|r| r.len()).unwrap_or(0)
        );
    }
    let flat: Vec<f64> = block.dipole.iter().flatten().copied().collect();
    let dipole = Array2::from_shape_vec((n, n), flat).expect("shape checked above");
    QuantumSystem::new(block.energies.clone(), dipole).map_err(|e| anyhow!("system: {e}"))
}

fn build_field(block: &FieldConfig) -> Result<ControlField> {
    if block.preset.is_some() && block.modes.is_some() {
        bail!("field: preset and modes are mutually exclusive");
    }
    let waveform = block.waveform.unwrap_or_default();
    match (&block.preset, &block.modes) {
        (Some(name), None) => {
            if block.duration.is_some() {
                bail!("field.duration: presets fix the duration; remove the field");
            }
            let field = preset_field(name).ok_or_else(|| {
                anyhow!(
                    "field.preset: unknown preset {name:?}; expected one of {}",
                    preset_names().join(", ")
                )
            })?;
            ControlField::with_waveform(field.modes().to_vec(), field.duration(), waveform)
                .map_err(|e| anyhow!("field: {e}"))
        }
        (None, Some(modes)) => {
            let duration = block
                .duration
                .ok_or_else(|| anyhow!("field.duration: required alongside modes"))?;
            let modes = modes
                .iter()
                .map(|m| FieldMode {
                    omega: m.omega,
                    amplitude: m.amplitude,
                    phase: m.phase,
                })
                .collect();
            ControlField::with_waveform(modes, duration, waveform)
                .map_err(|e| anyhow!("field: {e}"))
        }
        (None, None) => build_field(&FieldConfig {
            preset: Some("eps1".into()),
            waveform: block.waveform,
            ..FieldConfig::default()
        }),
        (Some(_), Some(_)) => unreachable!("rejected above"),
    }
}
