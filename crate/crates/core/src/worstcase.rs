//! First-order worst-case analysis over a confidence ellipsoid of dipole
//! parameters.
//!
//! The exact gradient of the transition probability with respect to every
//! dipole entry comes from co-propagating each derivative alongside the
//! state: the coupled generator is block lower triangular, so one graded
//! Taylor step advances state and derivatives together and differentiates
//! the discrete integrator itself (not just the continuum limit). On the
//! ellipsoid `theta^T Sigma^{-1} theta <= chi2_K(c)` the linearized worst
//! case is attained on the boundary along `-Sigma g`, giving
//! `|delta J| = sqrt(chi2) sqrt(g^T Sigma g)`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::CoreError;
use crate::system::{ControlField, PropagationSettings, QuantumSystem};

/// Largest probability-conservation violation tolerated in a gradient:
/// unitarity forces `sum_f dP_fi/dmu = 0` exactly, so anything above this
/// signals a defective co-propagation.
const CONSERVATION_TOLERANCE: f64 = 1e-8;

/// Gradient `dP_{i->f}/dmu_pq` over all upper-triangle dipole pairs, in
/// [`QuantumSystem::dipole_pairs`] order (zero entries included).
///
/// Exact for the discrete integrator, so central finite differences of the
/// same propagation converge to it quadratically in the step size.
pub fn gradient_dipole(
    system: &QuantumSystem,
    field: &ControlField,
    initial_state: usize,
    final_state: usize,
    settings: &PropagationSettings,
) -> Result<Vec<f64>, CoreError> {
    let dim = system.dimension();
    for idx in [initial_state, final_state] {
        if idx >= dim {
            return Err(CoreError::IndexOutOfRange { index: idx, dim });
        }
    }
    let pairs = system.dipole_pairs();
    let (u, derivs) = co_propagate_derivatives(system, field, initial_state, &pairs, settings)?;

    // dP/dmu = 2 Re[conj(U_fi) dU_fi/dmu]; unitarity keeps the column norm
    // fixed, so the same expression summed over f must vanish.
    let mut gradient = Vec::with_capacity(pairs.len());
    for d in &derivs {
        let g = 2.0 * (u[final_state].conj() * d[final_state]).re;
        let leak: f64 = u
            .iter()
            .zip(d)
            .map(|(uf, df)| 2.0 * (uf.conj() * df).re)
            .sum();
        if leak.abs() > CONSERVATION_TOLERANCE {
            return Err(CoreError::ImaginaryResidue(leak.abs()));
        }
        gradient.push(g);
    }
    Ok(gradient)
}

/// Co-propagates the initial-state column `u` and one derivative column per
/// pair. Returns `(u, d_k columns)` at the final time.
fn co_propagate_derivatives(
    system: &QuantumSystem,
    field: &ControlField,
    initial_state: usize,
    pairs: &[(usize, usize)],
    settings: &PropagationSettings,
) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>), CoreError> {
    if settings.steps == 0 {
        return Err(CoreError::Invalid("steps must be >= 1".into()));
    }
    let dim = system.dimension();
    let np = pairs.len();
    let dt = field.duration() / settings.steps as f64;
    let energies = system.energies();
    let mu = system.dipole();
    let tol2 = settings.entry_tolerance * settings.entry_tolerance;

    // Block 0: u; block 1+k: du/dmu_k. The coupled generator is block lower
    // triangular: d(u)/dt = A u, d(d_k)/dt = A d_k + i eps X_k u.
    let nblocks = 1 + np;
    let mut state = vec![Complex64::default(); nblocks * dim];
    state[initial_state] = Complex64::new(1.0, 0.0);
    let mut term = vec![Complex64::default(); nblocks * dim];
    let mut next = vec![Complex64::default(); nblocks * dim];

    for n in 0..settings.steps {
        let t_mid = (n as f64 + 0.5) * dt;
        let eps = field.value(t_mid);
        // Generator norm stays well below 1 at sane step counts; split the
        // exponential if a coarse grid pushes it up anyway.
        let a_norm: f64 = (0..dim)
            .map(|r| {
                dt * (energies[r].abs()
                    + eps.abs() * (0..dim).map(|s| mu[(r, s)].abs()).sum::<f64>())
            })
            .fold(0.0, f64::max);
        let splits = if a_norm > 0.25 {
            (a_norm / 0.25).log2().ceil() as u32
        } else {
            0
        };
        let scale = 1.0 / f64::from(1u32 << splits);
        let a_scale = Complex64::new(0.0, -dt * scale);
        let b_scale = Complex64::new(0.0, dt * scale * eps);

        for _ in 0..(1u32 << splits) {
            term.copy_from_slice(&state);
            let mut acc_max: f64 = state.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            for k in 1..200u32 {
                let inv_k = 1.0 / f64::from(k);
                let mut term_max: f64 = 0.0;
                for (m, block) in next.chunks_exact_mut(dim).enumerate() {
                    let src = &term[m * dim..(m + 1) * dim];
                    for r in 0..dim {
                        // A x = -i dt (E_r x_r - eps sum_s mu_rs x_s).
                        let mut acc = a_scale * energies[r] * src[r];
                        let mut coupled = Complex64::default();
                        for s in 0..dim {
                            let mu_rs = mu[(r, s)];
                            if mu_rs != 0.0 {
                                coupled += mu_rs * src[s];
                            }
                        }
                        acc += b_scale * coupled;
                        // Grade-raising source i dt eps X_k u.
                        if m > 0 {
                            let (p, q) = pairs[m - 1];
                            if r == p {
                                acc += b_scale * term[q];
                            } else if r == q {
                                acc += b_scale * term[p];
                            }
                        }
                        acc *= inv_k;
                        block[r] = acc;
                        term_max = term_max.max(acc.norm_sqr());
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
    }
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CoreError::NonFinite);
    }

    let u = state[..dim].to_vec();
    let derivs = (0..np).map(|k| state[(1 + k) * dim..(2 + k) * dim].to_vec()).collect();
    Ok((u, derivs))
}

/// Symmetric positive-semidefinite covariance of the uncertain parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCovariance {
    matrix: Array2<f64>,
}

impl ParameterCovariance {
    /// Validates symmetry and positive semidefiniteness (by eigenvalues).
    pub fn new(matrix: Array2<f64>) -> Result<Self, CoreError> {
        let (r, c) = matrix.dim();
        if r == 0 || r != c {
            return Err(CoreError::Dimension(format!("covariance shape {r}x{c}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite);
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(CoreError::Invalid("covariance must be symmetric".into()));
                }
            }
        }
        let (eigenvalues, _) = jacobi_eigen(&matrix);
        let max_eig = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let min_eig = eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if min_eig < -1e-12 * max_eig.max(1.0) {
            return Err(CoreError::NotPositiveSemidefinite(min_eig));
        }
        Ok(Self { matrix })
    }

    /// Independent identical parameters: `Sigma = sigma^2 I`.
    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self, CoreError> {
        if dim == 0 || !sigma.is_finite() || sigma < 0.0 {
            return Err(CoreError::Invalid("need dim >= 1 and sigma >= 0".into()));
        }
        Ok(Self { matrix: Array2::eye(dim) * (sigma * sigma) })
    }

    /// Independent parameters with per-parameter standard deviations.
    pub fn diagonal(sigmas: &[f64]) -> Result<Self, CoreError> {
        if sigmas.is_empty() || sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(CoreError::Invalid("sigmas must be finite and >= 0".into()));
        }
        let mut m = Array2::zeros((sigmas.len(), sigmas.len()));
        for (i, &s) in sigmas.iter().enumerate() {
            m[(i, i)] = s * s;
        }
        Ok(Self { matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `Sigma g`.
    pub fn mul(&self, g: &[f64]) -> Result<Vec<f64>, CoreError> {
        if g.len() != self.dim() {
            return Err(CoreError::Dimension(format!(
                "gradient length {} vs covariance dim {}",
                g.len(),
                self.dim()
            )));
        }
        Ok((0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.matrix[(i, j)] * g[j]).sum())
            .collect())
    }

    /// `g^T Sigma g`.
    pub fn quadratic_form(&self, g: &[f64]) -> Result<f64, CoreError> {
        let sg = self.mul(g)?;
        let q: f64 = g.iter().zip(&sg).map(|(a, b)| a * b).sum();
        if q < -1e-12 * self.matrix.iter().fold(1.0f64, |m, v| m.max(v.abs())) {
            return Err(CoreError::NegativeQuadraticForm(q));
        }
        Ok(q.max(0.0))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        jacobi_eigen(&self.matrix).0
    }

    /// Symmetric square root `V sqrt(Lambda) V^T`; maps the unit sphere onto
    /// the one-sigma ellipsoid surface.
    pub fn sqrt_matrix(&self) -> Array2<f64> {
        let (values, vectors) = jacobi_eigen(&self.matrix);
        let n = self.dim();
        let mut out = Array2::zeros((n, n));
        for k in 0..n {
            let root = values[k].max(0.0).sqrt();
            if root == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += root * vectors[(i, k)] * vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: returns
/// `(eigenvalues, orthogonal V)` with `A V = V diag(eigenvalues)`.
fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                // Classic Jacobi rotation annihilating m[(p, q)].
                let tau = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

/// Joint confidence region `theta^T Sigma^{-1} theta <= chi2_K(confidence)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipsoid {
    pub covariance: ParameterCovariance,
    pub confidence: f64,
    /// Chi-square quantile at `confidence` with `dim` degrees of freedom.
    pub chi2: f64,
}

impl ConfidenceEllipsoid {
    pub fn new(covariance: ParameterCovariance, confidence: f64) -> Result<Self, CoreError> {
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(CoreError::InvalidConfidence(confidence));
        }
        let chi2 = ChiSquared::new(covariance.dim() as f64)
            .map_err(|e| CoreError::Invalid(format!("chi-square setup: {e}")))?
            .inverse_cdf(confidence);
        Ok(Self { covariance, confidence, chi2 })
    }

    /// Ellipsoid radius in whitened coordinates, `sqrt(chi2)`.
    pub fn radius(&self) -> f64 {
        self.chi2.sqrt()
    }
}

/// Linearized objective spread `sigma_J = sqrt(g^T Sigma g)`.
pub fn linearized_sigma_j(
    gradient: &[f64],
    covariance: &ParameterCovariance,
) -> Result<f64, CoreError> {
    Ok(covariance.quadratic_form(gradient)?.sqrt())
}

/// First-order worst case of `J(theta) ~ J0 + g^T theta` over the ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseDeviation {
    /// Minimizing boundary point `-sqrt(chi2) Sigma g / sqrt(g^T Sigma g)`.
    pub delta_params: Vec<f64>,
    /// Objective change at that point, `-sqrt(chi2) sigma_j` (nonpositive).
    pub delta_j: f64,
    /// `sqrt(g^T Sigma g)`.
    pub sigma_j: f64,
    /// Set when the gradient lies in the covariance null space: no linear
    /// excursion is possible and `delta_params` is zero.
    pub degenerate: bool,
}

/// Minimizes the linearized objective over the confidence ellipsoid.
pub fn worst_case_deviation(
    gradient: &[f64],
    ellipsoid: &ConfidenceEllipsoid,
) -> Result<WorstCaseDeviation, CoreError> {
    let quad = ellipsoid.covariance.quadratic_form(gradient)?;
    let sigma_j = quad.sqrt();
    let gnorm: f64 = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    if sigma_j <= 1e-14 * gnorm.max(1e-300) || gnorm == 0.0 {
        return Ok(WorstCaseDeviation {
            delta_params: vec![0.0; gradient.len()],
            delta_j: 0.0,
            sigma_j: 0.0,
            degenerate: true,
        });
    }
    let scale = -ellipsoid.radius() / sigma_j;
    let delta_params: Vec<f64> =
        ellipsoid.covariance.mul(gradient)?.into_iter().map(|v| v * scale).collect();
    Ok(WorstCaseDeviation {
        delta_params,
        delta_j: -ellipsoid.radius() * sigma_j,
        sigma_j,
        degenerate: false,
    })
}

/// Full gradient-plus-ellipsoid analysis of one transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub initial_state: usize,
    pub final_state: usize,
    /// Upper-triangle dipole pairs the gradient entries refer to.
    pub pairs: Vec<(usize, usize)>,
    pub gradient: Vec<f64>,
    pub nominal_probability: f64,
    pub confidence: f64,
    pub chi2: f64,
    pub sigma_j: f64,
    pub deviation: WorstCaseDeviation,
    /// Linearized prediction at the worst boundary point (may leave [0, 1]
    /// when the linear model is stressed).
    pub predicted_worst_probability: f64,
}

/// Computes gradient, spread and worst-case excursion of `P_{i->f}` for
/// dipole uncertainty described by `covariance` (over all dipole pairs).
pub fn worst_case_report(
    system: &QuantumSystem,
    field: &ControlField,
    initial_state: usize,
    final_state: usize,
    settings: &PropagationSettings,
    covariance: ParameterCovariance,
    confidence: f64,
) -> Result<WorstCaseReport, CoreError> {
    let pairs = system.dipole_pairs();
    if covariance.dim() != pairs.len() {
        return Err(CoreError::Dimension(format!(
            "covariance dim {} vs {} dipole pairs",
            covariance.dim(),
            pairs.len()
        )));
    }
    let gradient = gradient_dipole(system, field, initial_state, final_state, settings)?;
    let u = crate::propagate::propagate_column(system, field, initial_state, settings)?;
    let nominal = u[final_state].norm_sqr();
    let ellipsoid = ConfidenceEllipsoid::new(covariance, confidence)?;
    let deviation = worst_case_deviation(&gradient, &ellipsoid)?;
    Ok(WorstCaseReport {
        initial_state,
        final_state,
        pairs,
        gradient,
        nominal_probability: nominal,
        confidence,
        chi2: ellipsoid.chi2,
        sigma_j: deviation.sigma_j,
        deviation: deviation.clone(),
        predicted_worst_probability: nominal + deviation.delta_j,
    })
}
