//! Pathway extraction: resolve the final-time propagator element into the
//! contributions of individual control-parameter products.
//!
//! Each uncertain parameter (mode amplitude `A_k` or dipole entry `mu_pq`)
//! is tagged with an integer frequency `gamma_k` and modulated by
//! `exp(i gamma_k s)` over an auxiliary phase `s`. Propagating once per
//! sample of `s` on a uniform grid and taking a forward DFT of the final
//! amplitude separates the terms of the perturbation series by their total
//! frequency `gamma = sum_k alpha_k gamma_k`: the bin at `gamma` holds the
//! summed contribution of every process using parameter `k` exactly
//! `alpha_k` times. With `gamma_k = (M+1)^(k-1)` the digits of `gamma` in
//! base `M+1` recover the exponent vector uniquely for total order <= M.

use std::cmp::Ordering;
use std::io::Write as IoWrite;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::propagate::run_propagation;
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

/// Which family of parameters a table resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    /// Mode amplitudes `A_k` of the control field.
    Amplitude,
    /// Nonzero dipole entries `mu_pq` (p < q) of the system.
    Dipole,
}

impl PathwayKind {
    pub fn label(self) -> &'static str {
        match self {
            PathwayKind::Amplitude => "amplitude",
            PathwayKind::Dipole => "dipole",
        }
    }
}

/// Exponent vector of one pathway, in parameter enumeration order: entry `k`
/// is the power of the parameter carrying encoding frequency `gamma_k`.
///
/// Reference listings often print exponents with the highest-frequency
/// parameter first; reverse such labels before building an index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathwayIndex {
    pub exponents: Vec<u32>,
}

impl PathwayIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    /// Total perturbation order `m = sum_k alpha_k`.
    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_free(&self) -> bool {
        self.exponents.iter().all(|&a| a == 0)
    }

    /// Hyphen-joined exponents, e.g. `2-1-0`.
    pub fn label(&self) -> String {
        self.exponents
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Orders two pathways by their encoding frequency: exponents are compared
/// from the highest-frequency parameter down, which coincides with comparing
/// the numeric `gamma` values under any shared scheme.
pub fn pathway_compare(a: &PathwayIndex, b: &PathwayIndex) -> Ordering {
    debug_assert_eq!(a.exponents.len(), b.exponents.len());
    for (x, y) in a.exponents.iter().rev().zip(b.exponents.iter().rev()) {
        match x.cmp(y) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    Ordering::Equal
}

/// Frequency assignment and grid geometry for one extraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingScheme {
    pub kind: PathwayKind,
    /// Frequency of the first parameter; all others are multiples of it.
    pub base_gamma: u64,
    /// `gamma_k = base_gamma * (M+1)^(k-1)`, parameter enumeration order.
    pub gammas: Vec<u64>,
    /// Highest total order `M` resolved by the digit expansion.
    pub max_order: usize,
    /// Phase samples per period; smallest power of two above `M * gamma_K`.
    pub grid_size: usize,
    /// Accepted fraction of spectral energy outside decodable bins.
    pub residual_tolerance: f64,
}

/// Default accepted fraction of undecodable spectral energy.
pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 1e-3;

/// Builds the canonical digit-encoding scheme for `param_count` parameters
/// resolved to total order `max_order`, with `gamma_1 = 1`.
pub fn assign_encoding_frequencies(
    param_count: usize,
    max_order: usize,
) -> Result<EncodingScheme, CoreError> {
    EncodingScheme::assign(PathwayKind::Amplitude, param_count, max_order, 1)
}

impl EncodingScheme {
    pub fn assign(
        kind: PathwayKind,
        param_count: usize,
        max_order: usize,
        base_gamma: u64,
    ) -> Result<Self, CoreError> {
        if param_count == 0 {
            return Err(CoreError::Invalid("parameter count must be >= 1".into()));
        }
        if max_order == 0 {
            return Err(CoreError::Invalid("max order must be >= 1".into()));
        }
        if base_gamma == 0 {
            return Err(CoreError::Invalid("base frequency must be >= 1".into()));
        }
        let radix = max_order as u64 + 1;
        let mut gammas = Vec::with_capacity(param_count);
        let mut g = base_gamma;
        for k in 0..param_count {
            gammas.push(g);
            if k + 1 < param_count {
                g = g
                    .checked_mul(radix)
                    .ok_or_else(|| CoreError::GammaOverflow(overflow_msg(param_count, max_order)))?;
            }
        }
        let top = gammas[param_count - 1]
            .checked_mul(max_order as u64)
            .ok_or_else(|| CoreError::GammaOverflow(overflow_msg(param_count, max_order)))?;
        let grid_size = usize::try_from(top)
            .ok()
            .and_then(|t| t.checked_add(1))
            .map(usize::next_power_of_two)
            .ok_or_else(|| CoreError::GammaOverflow(overflow_msg(param_count, max_order)))?;
        Ok(Self {
            kind,
            base_gamma,
            gammas,
            max_order,
            grid_size,
            residual_tolerance: DEFAULT_RESIDUAL_TOLERANCE,
        })
    }

    pub fn with_kind(mut self, kind: PathwayKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_residual_tolerance(mut self, tolerance: f64) -> Self {
        self.residual_tolerance = tolerance;
        self
    }

    /// Overrides the phase grid with a larger power of two. Extra headroom
    /// pushes orders just above `M` onto undecodable bins instead of letting
    /// them alias onto pathway bins.
    pub fn with_grid_size(mut self, grid_size: usize) -> Result<Self, CoreError> {
        if !grid_size.is_power_of_two() || (grid_size as u64) <= self.top_frequency() {
            return Err(CoreError::Invalid(format!(
                "grid size must be a power of two above the top frequency {}",
                self.top_frequency()
            )));
        }
        self.grid_size = grid_size;
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.gammas.len()
    }

    /// Highest decodable total frequency `M * gamma_K`.
    pub fn top_frequency(&self) -> u64 {
        self.gammas[self.gammas.len() - 1] * self.max_order as u64
    }
}

fn overflow_msg(param_count: usize, max_order: usize) -> String {
    format!(
        "frequency ladder for {param_count} parameters at order {max_order} \
         exceeds the addressable grid"
    )
}

/// Total frequency `gamma = sum_k alpha_k gamma_k` of a pathway.
pub fn alpha_to_gamma(index: &PathwayIndex, scheme: &EncodingScheme) -> Result<u64, CoreError> {
    if index.exponents.len() != scheme.param_count() {
        return Err(CoreError::Dimension(format!(
            "exponent vector has {} entries, scheme has {} parameters",
            index.exponents.len(),
            scheme.param_count()
        )));
    }
    if index.order() as usize > scheme.max_order {
        return Err(CoreError::Invalid(format!(
            "pathway order {} exceeds scheme maximum {}",
            index.order(),
            scheme.max_order
        )));
    }
    let mut gamma = 0u64;
    for (&a, &g) in index.exponents.iter().zip(&scheme.gammas) {
        gamma += u64::from(a) * g;
    }
    Ok(gamma)
}

/// Inverts [`alpha_to_gamma`]: base-(M+1) digit expansion of
/// `gamma / base_gamma`, least-significant digit pairing with parameter 1.
pub fn gamma_to_alpha(gamma: u64, scheme: &EncodingScheme) -> Result<PathwayIndex, CoreError> {
    let max_order = scheme.max_order;
    if gamma % scheme.base_gamma != 0 {
        return Err(CoreError::InvalidGamma { gamma, max_order });
    }
    let mut val = gamma / scheme.base_gamma;
    let radix = max_order as u64 + 1;
    let mut exponents = vec![0u32; scheme.param_count()];
    for slot in exponents.iter_mut() {
        *slot = (val % radix) as u32;
        val /= radix;
    }
    if val != 0 {
        return Err(CoreError::InvalidGamma { gamma, max_order });
    }
    let index = PathwayIndex::new(exponents);
    if index.order() as usize > max_order {
        return Err(CoreError::InvalidGamma { gamma, max_order });
    }
    Ok(index)
}

/// One resolved pathway: raw contribution and normalized coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayEntry {
    pub index: PathwayIndex,
    pub gamma: u64,
    /// Contribution `U(T; alpha)` to the propagator element.
    #[serde(with = "crate::serde_complex")]
    pub raw: Complex64,
    /// `raw / prod_k mean_k^alpha_k`, invariant under parameter rescaling.
    #[serde(with = "crate::serde_complex")]
    pub coeff: Complex64,
}

impl PathwayEntry {
    pub fn order(&self) -> u32 {
        self.index.order()
    }
}

/// Complete decomposition of one propagator element `U_ji(T)`.
///
/// Entries are sorted by `(order, gamma)` and cover every decodable pathway
/// of order 1..=M; the order-0 term is kept separately in `free_term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayTable {
    pub kind: PathwayKind,
    pub initial_state: usize,
    pub final_state: usize,
    pub scheme: EncodingScheme,
    /// Nominal parameter values used for normalization (amplitudes `A_k` or
    /// dipole entries `mu_pq`), parameter enumeration order.
    pub parameter_means: Vec<f64>,
    /// For dipole tables, the `(p, q)` pair behind each parameter.
    pub dipole_pairs: Option<Vec<(usize, usize)>>,
    pub entries: Vec<PathwayEntry>,
    /// Order-0 (free-evolution) contribution, decoded from bin 0.
    #[serde(with = "crate::serde_complex")]
    pub free_term: Complex64,
    /// `U_ji(T)` at nominal parameters (the s = 0 grid sample).
    #[serde(with = "crate::serde_complex")]
    pub nominal: Complex64,
    /// Total spectral energy `sum_bins |bin|^2` of the decoded signal.
    pub total_energy: f64,
    /// Energy at bins with an invalid digit expansion or order above M.
    pub residual_energy: f64,
    pub steps: usize,
    pub duration: f64,
}

impl PathwayTable {
    pub fn entries(&self) -> &[PathwayEntry] {
        &self.entries
    }

    /// Entry at total frequency `gamma`, if decodable.
    pub fn entry(&self, gamma: u64) -> Option<&PathwayEntry> {
        self.entries.iter().find(|e| e.gamma == gamma)
    }

    /// Sum of raw contributions at total order `m` (`m = 0` gives the free
    /// term).
    pub fn order_sum(&self, m: u32) -> Complex64 {
        if m == 0 {
            return self.free_term;
        }
        self.entries
            .iter()
            .filter(|e| e.order() == m)
            .map(|e| e.raw)
            .sum()
    }

    /// Free term plus all resolved pathways; approaches `nominal` as the
    /// order cutoff grows.
    pub fn reconstruction(&self) -> Complex64 {
        self.free_term + self.entries.iter().map(|e| e.raw).sum::<Complex64>()
    }

    /// Fraction of spectral energy left in undecodable bins.
    pub fn residual_fraction(&self) -> f64 {
        if self.total_energy == 0.0 {
            0.0
        } else {
            self.residual_energy / self.total_energy
        }
    }

    /// Same table with every complex value rotated by `exp(i phase)`;
    /// used to report amplitudes in a rotating (interaction) frame.
    pub fn rotated(&self, phase: f64) -> PathwayTable {
        let rot = Complex64::from_polar(1.0, phase);
        let mut out = self.clone();
        for e in out.entries.iter_mut() {
            e.raw *= rot;
            e.coeff *= rot;
        }
        out.free_term *= rot;
        out.nominal *= rot;
        out
    }

    /// Writes the table as CSV with columns
    /// `kind,alpha,gamma,order,re_raw,im_raw,re_coeff,im_coeff`.
    pub fn write_csv<W: IoWrite>(&self, dest: W) -> Result<(), CoreError> {
        let mut w = csv::Writer::from_writer(dest);
        w.write_record([
            "kind", "alpha", "gamma", "order", "re_raw", "im_raw", "re_coeff", "im_coeff",
        ])
        .map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                self.kind.label().to_string(),
                e.index.label(),
                e.gamma.to_string(),
                e.order().to_string(),
                format!("{:.15e}", e.raw.re),
                format!("{:.15e}", e.raw.im),
                format!("{:.15e}", e.coeff.re),
                format!("{:.15e}", e.coeff.im),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(csv::Error::from(e)))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CoreError {
    CoreError::Invalid(format!("csv write failed: {e}"))
}

/// Sum of raw pathway contributions at total order `m`.
pub fn pathway_order_sum(table: &PathwayTable, m: u32) -> Complex64 {
    table.order_sum(m)
}

/// All exponent vectors with `1 <= order <= max_order`.
fn enumerate_indices(param_count: usize, max_order: usize) -> Vec<PathwayIndex> {
    let mut out = Vec::new();
    let mut current = vec![0u32; param_count];
    fn recurse(
        slot: usize,
        remaining: u32,
        current: &mut Vec<u32>,
        out: &mut Vec<PathwayIndex>,
    ) {
        if slot == current.len() {
            if current.iter().any(|&a| a > 0) {
                out.push(PathwayIndex::new(current.clone()));
            }
            return;
        }
        for a in 0..=remaining {
            current[slot] = a;
            recurse(slot + 1, remaining - a, current, out);
        }
        current[slot] = 0;
    }
    recurse(0, max_order as u32, &mut current, &mut out);
    out
}

/// Decoded spectrum of one propagator element over the encoding phase grid.
struct DecodedSignal {
    bins: Vec<Complex64>,
    nominal: Complex64,
}

/// Propagates the `initial`-state column once per phase sample and DFTs the
/// final amplitude at `final_state`. `sample_run` fills the signal value for
/// one sample index.
fn decode_signal<F>(grid_size: usize, sample_run: F) -> Result<DecodedSignal, CoreError>
where
    F: Fn(usize, f64) -> Result<Complex64, CoreError> + Sync,
{
    let signal: Result<Vec<Complex64>, CoreError> = (0..grid_size)
        .into_par_iter()
        .map(|idx| {
            let s = 2.0 * std::f64::consts::PI * idx as f64 / grid_size as f64;
            sample_run(idx, s)
        })
        .collect();
    let mut bins = signal?;
    let nominal = bins[0];
    let fft = FftPlanner::new().plan_fft_forward(grid_size);
    fft.process(&mut bins);
    let scale = 1.0 / grid_size as f64;
    for b in bins.iter_mut() {
        *b *= scale;
    }
    Ok(DecodedSignal { bins, nominal })
}

/// Assembles entries, energy accounting, and the residual check shared by
/// both extraction modes.
#[allow(clippy::too_many_arguments)]
fn build_table(
    kind: PathwayKind,
    scheme: &EncodingScheme,
    decoded: DecodedSignal,
    parameter_means: Vec<f64>,
    dipole_pairs: Option<Vec<(usize, usize)>>,
    initial_state: usize,
    final_state: usize,
    settings: &PropagationSettings,
    duration: f64,
) -> Result<PathwayTable, CoreError> {
    let bins = decoded.bins;
    let total_energy: f64 = bins.iter().map(|b| b.norm_sqr()).sum();

    let mut entries = Vec::new();
    let mut valid_energy = bins[0].norm_sqr();
    for index in enumerate_indices(scheme.param_count(), scheme.max_order) {
        let gamma = alpha_to_gamma(&index, scheme)?;
        let raw = bins[gamma as usize];
        valid_energy += raw.norm_sqr();
        let mut denom = 1.0;
        for (&a, &mean) in index.exponents.iter().zip(&parameter_means) {
            denom *= mean.powi(a as i32);
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(CoreError::Invalid(
                "parameter means must be nonzero and finite for normalization".into(),
            ));
        }
        entries.push(PathwayEntry {
            coeff: raw / denom,
            index,
            gamma,
            raw,
        });
    }
    entries.sort_by(|a, b| (a.order(), a.gamma).cmp(&(b.order(), b.gamma)));

    let residual_energy = (total_energy - valid_energy).max(0.0);
    if total_energy > 0.0 && residual_energy > scheme.residual_tolerance * total_energy {
        return Err(CoreError::ResidualAboveThreshold {
            residual: residual_energy,
            tolerance: scheme.residual_tolerance,
            total: total_energy,
        });
    }

    Ok(PathwayTable {
        kind,
        initial_state,
        final_state,
        scheme: scheme.clone(),
        parameter_means,
        dipole_pairs,
        entries,
        free_term: bins[0],
        nominal: decoded.nominal,
        total_energy,
        residual_energy,
        steps: settings.steps,
        duration,
    })
}

fn check_states(
    system: &QuantumSystem,
    initial_state: usize,
    final_state: usize,
) -> Result<(), CoreError> {
    let dim = system.dimension();
    for idx in [initial_state, final_state] {
        if idx >= dim {
            return Err(CoreError::IndexOutOfRange { index: idx, dim });
        }
    }
    Ok(())
}

/// Midpoint-time carrier values, `steps x param_count`, shared across phase
/// samples so each sample only mixes them with its own complex amplitudes.
fn carrier_table(field: &ControlField, settings: &PropagationSettings) -> Vec<f64> {
    let modes = field.modes().len();
    let dt = field.duration() / settings.steps as f64;
    let mut table = vec![0.0; settings.steps * modes];
    for n in 0..settings.steps {
        let t_mid = (n as f64 + 0.5) * dt;
        for k in 0..modes {
            table[n * modes + k] = field.carrier_at(k, t_mid);
        }
    }
    table
}

/// Resolves `U_ji(T)` into pathways over the field-mode amplitudes.
///
/// `scheme` must carry one frequency per field mode. Runtime scales with
/// `grid_size * steps`; results are deterministic for fixed inputs.
pub fn extract_amplitude_pathways(
    system: &QuantumSystem,
    field: &ControlField,
    scheme: &EncodingScheme,
    settings: &PropagationSettings,
    initial_state: usize,
    final_state: usize,
) -> Result<PathwayTable, CoreError> {
    if scheme.kind != PathwayKind::Amplitude {
        return Err(CoreError::Invalid(
            "scheme kind must be amplitude for amplitude extraction".into(),
        ));
    }
    let modes = field.modes().len();
    if scheme.param_count() != modes {
        return Err(CoreError::Dimension(format!(
            "scheme has {} frequencies, field has {} modes",
            scheme.param_count(),
            modes
        )));
    }
    check_states(system, initial_state, final_state)?;

    let dim = system.dimension();
    let coupling = crate::propagate::coupling_row_major(system.dipole());
    let carriers = carrier_table(field, settings);
    let amplitudes = field.amplitudes();
    let energies = system.energies().to_vec();
    let duration = field.duration();

    let decoded = decode_signal(scheme.grid_size, |_, s| {
        let camp: Vec<Complex64> = amplitudes
            .iter()
            .zip(&scheme.gammas)
            .map(|(&a, &g)| Complex64::from_polar(a, g as f64 * s))
            .collect();
        let mut state = vec![Complex64::default(); dim];
        state[initial_state] = Complex64::new(1.0, 0.0);
        run_propagation(
            &energies,
            &coupling,
            |n, _| {
                let row = &carriers[n * camp.len()..(n + 1) * camp.len()];
                camp.iter()
                    .zip(row)
                    .map(|(c, &w)| c * w)
                    .sum::<Complex64>()
            },
            duration,
            settings,
            &mut state,
            1,
        )?;
        Ok(state[final_state])
    })?;

    build_table(
        PathwayKind::Amplitude,
        scheme,
        decoded,
        amplitudes,
        None,
        initial_state,
        final_state,
        settings,
        duration,
    )
}

/// Resolves `U_ji(T)` into pathways over the nonzero dipole entries.
///
/// Parameters are the pairs returned by
/// [`QuantumSystem::nonzero_dipole_pairs`], in that order; `scheme` must
/// carry one frequency per pair. Both `(p,q)` and `(q,p)` entries of a pair
/// are modulated together, preserving the symmetric coupling structure.
pub fn extract_dipole_pathways(
    system: &QuantumSystem,
    field: &ControlField,
    scheme: &EncodingScheme,
    settings: &PropagationSettings,
    initial_state: usize,
    final_state: usize,
) -> Result<PathwayTable, CoreError> {
    if scheme.kind != PathwayKind::Dipole {
        return Err(CoreError::Invalid(
            "scheme kind must be dipole for dipole extraction".into(),
        ));
    }
    let pairs = system.nonzero_dipole_pairs();
    if pairs.is_empty() {
        return Err(CoreError::Invalid("system has no nonzero dipole entries".into()));
    }
    if scheme.param_count() != pairs.len() {
        return Err(CoreError::Dimension(format!(
            "scheme has {} frequencies, system has {} nonzero dipole pairs",
            scheme.param_count(),
            pairs.len()
        )));
    }
    check_states(system, initial_state, final_state)?;

    let dim = system.dimension();
    let energies = system.energies().to_vec();
    let duration = field.duration();
    let means: Vec<f64> = pairs.iter().map(|&(p, q)| system.dipole()[(p, q)]).collect();

    // Real field weights are shared across samples; the phase tags live in
    // the per-sample complex coupling matrix instead.
    let dt = duration / settings.steps as f64;
    let eps_mid: Vec<f64> = (0..settings.steps)
        .map(|n| field.value((n as f64 + 0.5) * dt))
        .collect();

    let decoded = decode_signal(scheme.grid_size, |_, s| {
        let mut coupling = vec![Complex64::default(); dim * dim];
        for (k, &(p, q)) in pairs.iter().enumerate() {
            let tagged = Complex64::from_polar(means[k], scheme.gammas[k] as f64 * s);
            coupling[p * dim + q] = tagged;
            coupling[q * dim + p] = tagged;
        }
        let mut state = vec![Complex64::default(); dim];
        state[initial_state] = Complex64::new(1.0, 0.0);
        run_propagation(
            &energies,
            &coupling,
            |n, _| Complex64::new(eps_mid[n], 0.0),
            duration,
            settings,
            &mut state,
            1,
        )?;
        Ok(state[final_state])
    })?;

    build_table(
        PathwayKind::Dipole,
        scheme,
        decoded,
        means,
        Some(pairs),
        initial_state,
        final_state,
        settings,
        duration,
    )
}
