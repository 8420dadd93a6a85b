//! Fixed-step exponential-midpoint propagation of `dU/dt = -i (H0 - mu eps(t)) U`.
//!
//! One kernel serves every propagation in the crate: the generator per step
//! is `G = -i dt (diag(E) - w C)` with a scalar weight `w` (the field value,
//! real or encoding-complex) and a coupling matrix `C` (the dipole, real or
//! encoding-complex), applied to a state block (full matrix or a single
//! column) through a truncated Taylor series for `exp(G)`. Real inputs give
//! a unitary result to series tolerance; complex encodings reuse the exact
//! same stepping, which is what makes the `s = 0` encoded propagation equal
//! the nominal one bit-for-bit.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::CoreError;
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

/// Taylor exp-action workspace reused across steps.
pub(crate) struct Stepper {
    dim: usize,
    ncols: usize,
    g: Vec<Complex64>,
    term: Vec<Complex64>,
    next: Vec<Complex64>,
    tolerance: f64,
    /// Number of per-step splittings (exp(G) = exp(G/2^s)^{2^s}) chosen from
    /// the generator norm; 0 for all realistic step counts.
    splits: u32,
}

impl Stepper {
    pub(crate) fn new(dim: usize, ncols: usize, tolerance: f64) -> Self {
        Self {
            dim,
            ncols,
            g: vec![Complex64::default(); dim * dim],
            term: vec![Complex64::default(); dim * ncols],
            next: vec![Complex64::default(); dim * ncols],
            tolerance,
            splits: 0,
        }
    }

    /// Fills `G = -i dt (diag(E) - w C)` and picks the splitting level.
    pub(crate) fn load_generator(
        &mut self,
        energies: &[f64],
        coupling: &[Complex64],
        weight: Complex64,
        dt: f64,
    ) {
        let n = self.dim;
        let scale = Complex64::new(0.0, -dt);
        let mut norm_inf: f64 = 0.0;
        for r in 0..n {
            let mut row_sum = 0.0;
            for c in 0..n {
                let mut h = -weight * coupling[r * n + c];
                if r == c {
                    h += energies[r];
                }
                let g = scale * h;
                self.g[r * n + c] = g;
                row_sum += g.norm();
            }
            norm_inf = norm_inf.max(row_sum);
        }
        // Keep the Taylor series short and well conditioned.
        let mut splits = 0u32;
        let mut nrm = norm_inf;
        while nrm > 0.25 && splits < 30 {
            nrm *= 0.5;
            splits += 1;
        }
        if splits > 0 {
            let half = Complex64::new(0.5f64.powi(splits as i32), 0.0);
            for g in &mut self.g {
                *g *= half;
            }
        }
        self.splits = splits;
    }

    /// In-place `state <- exp(G) state`, `state` is dim x ncols row-major.
    pub(crate) fn apply(&mut self, state: &mut [Complex64]) {
        debug_assert_eq!(state.len(), self.dim * self.ncols);
        for _ in 0..(1u64 << self.splits) {
            self.apply_once(state);
        }
    }

    fn apply_once(&mut self, state: &mut [Complex64]) {
        let (n, nc) = (self.dim, self.ncols);
        self.term.copy_from_slice(state);
        let mut acc_max: f64 = state.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        for k in 1..200u32 {
            let inv_k = Complex64::new(1.0 / f64::from(k), 0.0);
            let mut term_max: f64 = 0.0;
            for r in 0..n {
                for c in 0..nc {
                    let mut acc = Complex64::default();
                    for m in 0..n {
                        acc += self.g[r * n + m] * self.term[m * nc + c];
                    }
                    acc *= inv_k;
                    self.next[r * nc + c] = acc;
                    term_max = term_max.max(acc.norm_sqr());
                }
            }
            std::mem::swap(&mut self.term, &mut self.next);
            for (s, t) in state.iter_mut().zip(&self.term) {
                *s += t;
            }
            acc_max = acc_max.max(state.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max));
            if term_max <= self.tolerance * self.tolerance * acc_max {
                break;
            }
        }
    }
}

/// Drives `settings.steps` midpoint steps over `[0, duration]`.
///
/// `state` is a dim x ncols row-major block evolved in place; `weight_at`
/// returns the (possibly complex) field weight at a step's midpoint time.
pub(crate) fn run_propagation(
    energies: &[f64],
    coupling: &[Complex64],
    mut weight_at: impl FnMut(usize, f64) -> Complex64,
    duration: f64,
    settings: &PropagationSettings,
    state: &mut [Complex64],
    ncols: usize,
) -> Result<(), CoreError> {
    let dim = energies.len();
    debug_assert_eq!(coupling.len(), dim * dim);
    debug_assert_eq!(state.len(), dim * ncols);
    if settings.steps == 0 {
        return Err(CoreError::Invalid("steps must be >= 1".into()));
    }
    let dt = duration / settings.steps as f64;
    let mut stepper = Stepper::new(dim, ncols, settings.entry_tolerance);
    for n in 0..settings.steps {
        let t_mid = (n as f64 + 0.5) * dt;
        stepper.load_generator(energies, coupling, weight_at(n, t_mid), dt);
        stepper.apply(state);
    }
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CoreError::NonFinite);
    }
    Ok(())
}

pub(crate) fn coupling_row_major(m: &Array2<f64>) -> Vec<Complex64> {
    m.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn identity_flat(dim: usize) -> Vec<Complex64> {
    let mut u = vec![Complex64::default(); dim * dim];
    for r in 0..dim {
        u[r * dim + r] = Complex64::new(1.0, 0.0);
    }
    u
}

pub(crate) fn flat_to_array(flat: Vec<Complex64>, dim: usize) -> Array2<Complex64> {
    Array2::from_shape_vec((dim, dim), flat).expect("shape fixed by construction")
}

/// Propagator `U(T)` of the real-field dynamics; unitary to integration
/// tolerance, deterministic for fixed inputs.
pub fn propagate(
    system: &QuantumSystem,
    field: &ControlField,
    settings: &PropagationSettings,
) -> Result<Array2<Complex64>, CoreError> {
    propagate_generalized(system, field, None, None, settings)
}

/// Same stepping with complex per-mode amplitude factors and/or an
/// entrywise-complex coupling modulation; the result is generally not
/// unitary. With both factors absent this is exactly `propagate`.
pub fn propagate_generalized(
    system: &QuantumSystem,
    field: &ControlField,
    amplitude_factors: Option<&[Complex64]>,
    coupling_factors: Option<&Array2<f64>>,
    settings: &PropagationSettings,
) -> Result<Array2<Complex64>, CoreError> {
    let coupling = match coupling_factors {
        None => coupling_row_major(system.dipole()),
        Some(_) => {
            return Err(CoreError::Invalid(
                "use propagate_generalized_complex for complex couplings".into(),
            ))
        }
    };
    let weights = complex_mode_amplitudes(field, amplitude_factors)?;
    let mut state = identity_flat(system.dimension());
    run_propagation(
        system.energies(),
        &coupling,
        |_, t| encoded_field_value(field, &weights, t),
        field.duration(),
        settings,
        &mut state,
        system.dimension(),
    )?;
    Ok(flat_to_array(state, system.dimension()))
}

/// Fully general variant: complex amplitude factors and a complex coupling
/// matrix (used by the dipole encoder).
pub fn propagate_generalized_complex(
    system: &QuantumSystem,
    field: &ControlField,
    amplitude_factors: Option<&[Complex64]>,
    coupling: &Array2<Complex64>,
    settings: &PropagationSettings,
) -> Result<Array2<Complex64>, CoreError> {
    let dim = system.dimension();
    if coupling.nrows() != dim || coupling.ncols() != dim {
        return Err(CoreError::Dimension(format!(
            "coupling is {}x{}, expected {dim}x{dim}",
            coupling.nrows(),
            coupling.ncols()
        )));
    }
    let coupling: Vec<Complex64> = coupling.iter().copied().collect();
    let weights = complex_mode_amplitudes(field, amplitude_factors)?;
    let mut state = identity_flat(dim);
    run_propagation(
        system.energies(),
        &coupling,
        |_, t| encoded_field_value(field, &weights, t),
        field.duration(),
        settings,
        &mut state,
        dim,
    )?;
    Ok(flat_to_array(state, dim))
}

pub(crate) fn complex_mode_amplitudes(
    field: &ControlField,
    factors: Option<&[Complex64]>,
) -> Result<Vec<Complex64>, CoreError> {
    match factors {
        None => Ok(field
            .modes()
            .iter()
            .map(|m| Complex64::new(m.amplitude, 0.0))
            .collect()),
        Some(f) => {
            if f.len() != field.modes().len() {
                return Err(CoreError::Dimension(format!(
                    "{} amplitude factors for {} modes",
                    f.len(),
                    field.modes().len()
                )));
            }
            Ok(field
                .modes()
                .iter()
                .zip(f)
                .map(|(m, &fac)| fac * m.amplitude)
                .collect())
        }
    }
}

pub(crate) fn encoded_field_value(
    field: &ControlField,
    weights: &[Complex64],
    t: f64,
) -> Complex64 {
    weights
        .iter()
        .enumerate()
        .map(|(k, &w)| w * field.carrier_at(k, t))
        .sum()
}

/// Propagates the basis column `e_initial`, returning the final state vector.
/// The cheap path used by sampling and fitness loops.
pub fn propagate_column(
    system: &QuantumSystem,
    field: &ControlField,
    initial: usize,
    settings: &PropagationSettings,
) -> Result<Vec<Complex64>, CoreError> {
    let dim = system.dimension();
    if initial >= dim {
        return Err(CoreError::IndexOutOfRange {
            index: initial,
            dim,
        });
    }
    let coupling = coupling_row_major(system.dipole());
    let mut state = vec![Complex64::default(); dim];
    state[initial] = Complex64::new(1.0, 0.0);
    run_propagation(
        system.energies(),
        &coupling,
        |_, t| Complex64::new(field.value(t), 0.0),
        field.duration(),
        settings,
        &mut state,
        1,
    )?;
    Ok(state)
}

/// `P_{ji} = |U_{ji}|^2` (i = initial state, j = final state, zero-based).
pub fn transition_probability(
    u: &Array2<Complex64>,
    i: usize,
    j: usize,
) -> Result<f64, CoreError> {
    let dim = u.nrows();
    for index in [i, j] {
        if index >= dim {
            return Err(CoreError::IndexOutOfRange { index, dim });
        }
    }
    Ok(u[(j, i)].norm_sqr())
}

/// Max entrywise `|U^dagger U - I|`, the unitarity defect.
pub fn unitarity_defect(u: &Array2<Complex64>) -> f64 {
    let n = u.nrows();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::default();
            for m in 0..n {
                acc += u[(m, r)].conj() * u[(m, c)];
            }
            if r == c {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// Max entrywise change of `U(T)` when the step count is doubled; the
/// convergence check advertised by the settings contract.
pub fn step_doubling_delta(
    system: &QuantumSystem,
    field: &ControlField,
    settings: &PropagationSettings,
) -> Result<f64, CoreError> {
    let coarse = propagate(system, field, settings)?;
    let fine = propagate(system, field, &settings.doubled())?;
    Ok((&coarse - &fine)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}
