//! Order-by-order expansion of the propagator in powers of the coupling.
//!
//! The propagator is split as `U(T) = sum_m U^m(T)` where `U^m` collects the
//! terms containing the field-coupling `mu eps(t)` exactly `m` times. Instead
//! of nested time-ordered quadrature, all orders co-propagate in one pass:
//! the block generator acts grade-wise as `(A X)_m = A X_m + B X_{m-1}` with
//! `A = -i dt diag(E)` and `B = +i dt eps(t) mu` (the interaction raises the
//! grade), and each step applies its exact exponential by the same truncated
//! Taylor action the plain propagator uses. Grade 0 therefore carries the
//! free evolution and grade m the m-th Dyson term.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::CoreError;
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

/// Per-order propagator terms `U^0(T) .. U^M(T)`.
#[derive(Debug, Clone)]
pub struct DysonDecomposition {
    orders: Vec<Array2<Complex64>>,
}

impl DysonDecomposition {
    /// Maximum retained order M.
    pub fn max_order(&self) -> usize {
        self.orders.len() - 1
    }

    /// The m-th order term.
    pub fn order(&self, m: usize) -> &Array2<Complex64> {
        &self.orders[m]
    }

    pub fn orders(&self) -> &[Array2<Complex64>] {
        &self.orders
    }

    /// `sum_{m<=M} U^m(T)`; approaches the directly propagated `U(T)`.
    pub fn partial_sum(&self) -> Array2<Complex64> {
        let mut acc = self.orders[0].clone();
        for term in &self.orders[1..] {
            acc += term;
        }
        acc
    }
}

/// Grade-raising co-propagation of orders 0..=M.
pub fn dyson_decompose(
    system: &QuantumSystem,
    field: &ControlField,
    max_order: usize,
    settings: &PropagationSettings,
) -> Result<DysonDecomposition, CoreError> {
    let dim = system.dimension();
    let mut state = graded_identity(dim, max_order, dim);
    run_graded(
        system,
        |t| Complex64::new(field.value(t), 0.0),
        field.duration(),
        max_order,
        settings,
        &mut state,
        dim,
    )?;
    let orders = (0..=max_order)
        .map(|m| {
            let flat = state[m * dim * dim..(m + 1) * dim * dim].to_vec();
            Array2::from_shape_vec((dim, dim), flat).expect("shape fixed")
        })
        .collect();
    Ok(DysonDecomposition { orders })
}

/// Column variant: per-order final states from the basis column `e_initial`,
/// as a (M+1) x dim row-major buffer. Used for per-sample order statistics.
pub(crate) fn dyson_column(
    system: &QuantumSystem,
    field: &ControlField,
    initial: usize,
    max_order: usize,
    settings: &PropagationSettings,
) -> Result<Vec<Complex64>, CoreError> {
    let dim = system.dimension();
    if initial >= dim {
        return Err(CoreError::IndexOutOfRange {
            index: initial,
            dim,
        });
    }
    let mut state = vec![Complex64::default(); (max_order + 1) * dim];
    state[initial] = Complex64::new(1.0, 0.0);
    run_graded(
        system,
        |t| Complex64::new(field.value(t), 0.0),
        field.duration(),
        max_order,
        settings,
        &mut state,
        1,
    )?;
    Ok(state)
}

fn graded_identity(dim: usize, max_order: usize, ncols: usize) -> Vec<Complex64> {
    let mut state = vec![Complex64::default(); (max_order + 1) * dim * ncols];
    for r in 0..dim.min(ncols) {
        state[r * ncols + r] = Complex64::new(1.0, 0.0);
    }
    state
}

/// Evolves the graded state: `state` holds M+1 blocks of dim x ncols.
fn run_graded(
    system: &QuantumSystem,
    mut weight_at: impl FnMut(f64) -> Complex64,
    duration: f64,
    max_order: usize,
    settings: &PropagationSettings,
    state: &mut [Complex64],
    ncols: usize,
) -> Result<(), CoreError> {
    if settings.steps == 0 {
        return Err(CoreError::Invalid("steps must be >= 1".into()));
    }
    let dim = system.dimension();
    let block = dim * ncols;
    let nblocks = max_order + 1;
    debug_assert_eq!(state.len(), nblocks * block);
    let dt = duration / settings.steps as f64;
    let energies = system.energies();
    let mu = system.dipole();

    let mut term = vec![Complex64::default(); nblocks * block];
    let mut next = vec![Complex64::default(); nblocks * block];
    let tol2 = settings.entry_tolerance * settings.entry_tolerance;

    for n in 0..settings.steps {
        let t_mid = (n as f64 + 0.5) * dt;
        // A = -i dt diag(E) acts within a grade; B = +i dt eps mu raises it.
        let a_scale = Complex64::new(0.0, -dt);
        let b_scale = Complex64::new(0.0, dt) * weight_at(t_mid);
        term.copy_from_slice(state);
        let mut acc_max: f64 = state.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        for k in 1..200u32 {
            let inv_k = 1.0 / f64::from(k);
            let mut term_max: f64 = 0.0;
            for m in 0..nblocks {
                for r in 0..dim {
                    let diag = a_scale * energies[r];
                    for c in 0..ncols {
                        let mut acc = diag * term[m * block + r * ncols + c];
                        if m > 0 {
                            let lower = &term[(m - 1) * block..m * block];
                            let mut coupled = Complex64::default();
                            for s in 0..dim {
                                let mu_rs = mu[(r, s)];
                                if mu_rs != 0.0 {
                                    coupled += mu_rs * lower[s * ncols + c];
                                }
                            }
                            acc += b_scale * coupled;
                        }
                        acc *= inv_k;
                        next[m * block + r * ncols + c] = acc;
                        term_max = term_max.max(acc.norm_sqr());
                    }
                }
            }
            std::mem::swap(&mut term, &mut next);
            for (s, t) in state.iter_mut().zip(&term) {
                *s += t;
            }
            acc_max = acc_max.max(state.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max));
            if term_max <= tol2 * acc_max.max(1.0) {
                break;
            }
        }
    }
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CoreError::NonFinite);
    }
    Ok(())
}
