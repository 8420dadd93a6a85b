//! Exact uncertainty moments of transition amplitudes over a pathway table.
//!
//! A decoded table represents the propagator element as a polynomial in the
//! uncertain parameters, `U = sum_a c_a prod_k A_k^{alpha_ak}` (the free term
//! is the constant). For independent Gaussian parameters every moment of `U`
//! reduces to closed-form Gaussian moments of the `A_k`, so expectations,
//! variances and inter-order interference terms follow from one pass over
//! entry pairs with no sampling error; the only approximation is the order
//! cutoff `M` of the table itself.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf_inv;

use crate::error::CoreError;
use crate::pathway::{PathwayEntry, PathwayTable};
use crate::system::{ControlField, QuantumSystem};

pub use crate::pathway::PathwayKind as UncertaintyKind;

/// Independent Gaussian uncertainty on the table's parameters:
/// `A_k ~ N(means[k], sigmas[k]^2)`, `sigmas` absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub kind: UncertaintyKind,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl UncertaintyModel {
    pub fn new(
        kind: UncertaintyKind,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if means.is_empty() || means.len() != sigmas.len() {
            return Err(CoreError::Dimension(format!(
                "{} means vs {} sigmas",
                means.len(),
                sigmas.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(CoreError::NonFinite);
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(CoreError::Invalid("sigmas must be finite and >= 0".into()));
        }
        Ok(Self { kind, means, sigmas })
    }

    /// Mode amplitudes with a shared standard deviation of `fraction` times
    /// each nominal amplitude.
    pub fn amplitude_relative(field: &ControlField, fraction: f64) -> Result<Self, CoreError> {
        if !(0.0..).contains(&fraction) || !fraction.is_finite() {
            return Err(CoreError::Invalid("fraction must be finite and >= 0".into()));
        }
        let means = field.amplitudes();
        let sigmas = means.iter().map(|a| a.abs() * fraction).collect();
        Self::new(UncertaintyKind::Amplitude, means, sigmas)
    }

    /// Nonzero dipole entries with one shared absolute standard deviation.
    pub fn dipole_absolute(system: &QuantumSystem, sigma: f64) -> Result<Self, CoreError> {
        if !(0.0..).contains(&sigma) || !sigma.is_finite() {
            return Err(CoreError::Invalid("sigma must be finite and >= 0".into()));
        }
        let pairs = system.nonzero_dipole_pairs();
        let means: Vec<f64> = pairs.iter().map(|&(p, q)| system.dipole()[(p, q)]).collect();
        if means.is_empty() {
            return Err(CoreError::Invalid("system has no nonzero dipole entries".into()));
        }
        let sigmas = vec![sigma; means.len()];
        Self::new(UncertaintyKind::Dipole, means, sigmas)
    }

    pub fn param_count(&self) -> usize {
        self.means.len()
    }
}

/// Raw Gaussian moment `E[X^j]` for `X ~ N(mean, sigma^2)`.
///
/// Binomial expansion around the mean; odd central moments vanish and
/// `E[(X-mean)^i] = sigma^i (i-1)!!` for even `i`.
pub fn gaussian_raw_moment(mean: f64, sigma: f64, j: u32) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0f64;
    for i in (0..=j).step_by(2) {
        // binom = C(j, i), double factorial (i-1)!!.
        let mut dfact = 1.0f64;
        let mut v = i as i64 - 1;
        while v > 1 {
            dfact *= v as f64;
            v -= 2;
        }
        total += binom * mean.powi((j - i) as i32) * sigma.powi(i as i32) * dfact;
        // Advance C(j, i) -> C(j, i+2).
        if i + 2 <= j {
            binom *= ((j - i) * (j - i - 1)) as f64 / ((i + 1) * (i + 2)) as f64;
        }
    }
    total
}

/// Per-parameter table of raw moments up to power `2M`, the highest power a
/// pair of order-M pathways can request.
struct MomentTable {
    powers: usize,
    data: Vec<f64>,
}

impl MomentTable {
    fn build(model: &UncertaintyModel, max_order: usize) -> Self {
        let powers = 2 * max_order + 1;
        let mut data = vec![0.0; model.param_count() * powers];
        for (k, (&mean, &sigma)) in model.means.iter().zip(&model.sigmas).enumerate() {
            for p in 0..powers {
                data[k * powers + p] = gaussian_raw_moment(mean, sigma, p as u32);
            }
        }
        Self { powers, data }
    }

    #[inline]
    fn get(&self, param: usize, power: u32) -> f64 {
        self.data[param * self.powers + power as usize]
    }
}

/// `E[c prod A^alpha]` of one pathway under the model.
pub fn expected_pathway(entry: &PathwayEntry, model: &UncertaintyModel) -> Complex64 {
    let mut prod = 1.0;
    for (k, &a) in entry.index.exponents.iter().enumerate() {
        prod *= gaussian_raw_moment(model.means[k], model.sigmas[k], a);
    }
    entry.coeff * prod
}

/// Inter-order interference moments `I_mn = E[conj(U_m) U_n]` for orders
/// `0..=M`; `U_m` is the summed order-m contribution and `U_0` the free term.
///
/// Hermitian (`I_nm = conj(I_mn)`), invariant under a global phase, and
/// `sum_mn I_mn = E[|U|^2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMatrix {
    /// Matrix edge, `M + 1`.
    pub orders: usize,
    #[serde(with = "crate::serde_complex::vec")]
    pub data: Vec<Complex64>,
}

impl InterferenceMatrix {
    fn zero(orders: usize) -> Self {
        Self { orders, data: vec![Complex64::default(); orders * orders] }
    }

    pub fn at(&self, m: usize, n: usize) -> Complex64 {
        self.data[m * self.orders + n]
    }

    /// `sum_m I_mm`: the incoherent (same-order) part of `E[|U|^2]`.
    pub fn same_order_total(&self) -> f64 {
        (0..self.orders).map(|m| self.at(m, m).re).sum()
    }

    /// `sum_{m != n} I_mn`: the coherent cross-order part of `E[|U|^2]`.
    /// Real by hermiticity.
    pub fn cross_order_total(&self) -> f64 {
        self.total() - self.same_order_total()
    }

    /// `E[|U|^2]` as resolved by this matrix.
    pub fn total(&self) -> f64 {
        self.data.iter().map(|z| z.re).sum()
    }
}

/// Second-moment summary of one propagator element under parameter
/// uncertainty. All values are exact for the polynomial the table encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub kind: UncertaintyKind,
    pub initial_state: usize,
    pub final_state: usize,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// `E[U]`.
    #[serde(with = "crate::serde_complex")]
    pub mean_amplitude: Complex64,
    /// `E[|U|^2]`, also the expected transition probability.
    pub second_abs: f64,
    /// Pseudo second moment `E[U^2]`; with `E[U]` it fixes the component
    /// variances and their covariance.
    #[serde(with = "crate::serde_complex")]
    pub pseudo_second: Complex64,
    /// `E[U_m]` per order, order 0 first.
    #[serde(with = "crate::serde_complex::vec")]
    pub order_means: Vec<Complex64>,
    pub interference: InterferenceMatrix,
}

impl MomentReport {
    /// `E[P] = E[|U|^2]`.
    pub fn expected_probability(&self) -> f64 {
        self.second_abs
    }

    /// Scatter `E[|U - E[U]|^2] = var(Re U) + var(Im U)`.
    pub fn total_variance(&self) -> f64 {
        (self.second_abs - self.mean_amplitude.norm_sqr()).max(0.0)
    }

    /// Centered pseudo variance `E[(U - E[U])^2]`.
    pub fn pseudo_variance(&self) -> Complex64 {
        self.pseudo_second - self.mean_amplitude * self.mean_amplitude
    }

    /// `var(Re U)`.
    pub fn variance_re(&self) -> f64 {
        ((self.total_variance() + self.pseudo_variance().re) / 2.0).max(0.0)
    }

    /// `var(Im U)`.
    pub fn variance_im(&self) -> f64 {
        ((self.total_variance() - self.pseudo_variance().re) / 2.0).max(0.0)
    }

    /// `cov(Re U, Im U)`.
    pub fn covariance_re_im(&self) -> f64 {
        self.pseudo_variance().im / 2.0
    }

    /// Report with every amplitude rotated by `exp(i phase)`, e.g. into the
    /// final state's rotating frame. Probabilities, total variance and
    /// interference terms are invariant; component variances are not.
    pub fn rotated(&self, phase: f64) -> MomentReport {
        let rot = Complex64::from_polar(1.0, phase);
        let mut out = self.clone();
        out.mean_amplitude *= rot;
        out.pseudo_second *= rot * rot;
        for z in out.order_means.iter_mut() {
            *z *= rot;
        }
        out
    }
}

fn check_model(table: &PathwayTable, model: &UncertaintyModel) -> Result<(), CoreError> {
    if model.kind != table.kind {
        return Err(CoreError::Invalid(format!(
            "model kind {} does not match table kind {}",
            model.kind.label(),
            table.kind.label()
        )));
    }
    if model.param_count() != table.scheme.param_count() {
        return Err(CoreError::Dimension(format!(
            "model has {} parameters, table has {}",
            model.param_count(),
            table.scheme.param_count()
        )));
    }
    Ok(())
}

/// Exact second-moment analysis of the table's propagator element under the
/// model. One pass over all entry pairs, `O((entries K)^2)` but a few
/// milliseconds at production sizes; deterministic.
pub fn moment_report(
    table: &PathwayTable,
    model: &UncertaintyModel,
) -> Result<MomentReport, CoreError> {
    check_model(table, model)?;
    let max_order = table.scheme.max_order;
    let moments = MomentTable::build(model, max_order);
    let params = model.param_count();

    // The free term joins the pair pass as a constant pathway of order 0.
    struct Term {
        coeff: Complex64,
        exps: Vec<u32>,
        order: usize,
        /// prod_k E[A_k^{alpha_k}], reused by the pair pass via the identity
        /// only when exponent sets do not overlap; pairs need joint powers.
        first: f64,
    }
    let mut terms = Vec::with_capacity(table.entries.len() + 1);
    terms.push(Term {
        coeff: table.free_term,
        exps: vec![0; params],
        order: 0,
        first: 1.0,
    });
    for e in &table.entries {
        let mut first = 1.0;
        for (k, &a) in e.index.exponents.iter().enumerate() {
            first *= moments.get(k, a);
        }
        terms.push(Term {
            coeff: e.coeff,
            exps: e.index.exponents.clone(),
            order: e.order() as usize,
            first,
        });
    }

    let mut mean = Complex64::default();
    let mut order_means = vec![Complex64::default(); max_order + 1];
    for t in &terms {
        let contribution = t.coeff * t.first;
        mean += contribution;
        order_means[t.order] += contribution;
    }

    let mut interference = InterferenceMatrix::zero(max_order + 1);
    let mut pseudo = Complex64::default();
    for a in &terms {
        for b in &terms {
            let mut joint = 1.0;
            for k in 0..params {
                joint *= moments.get(k, a.exps[k] + b.exps[k]);
            }
            let cross = a.coeff.conj() * b.coeff * joint;
            interference.data[a.order * (max_order + 1) + b.order] += cross;
            pseudo += a.coeff * b.coeff * joint;
        }
    }
    let second_abs = interference.total();

    Ok(MomentReport {
        kind: model.kind,
        initial_state: table.initial_state,
        final_state: table.final_state,
        means: model.means.clone(),
        sigmas: model.sigmas.clone(),
        mean_amplitude: mean,
        second_abs,
        pseudo_second: pseudo,
        order_means,
        interference,
    })
}

/// `E[U]` of the table's element under the model.
pub fn expected_transition_amplitude(
    table: &PathwayTable,
    model: &UncertaintyModel,
) -> Result<Complex64, CoreError> {
    check_model(table, model)?;
    let mut mean = table.free_term;
    for e in &table.entries {
        mean += expected_pathway(e, model);
    }
    Ok(mean)
}

/// `E[P] = E[|U|^2]` of the table's element under the model.
pub fn expected_transition_probability(
    table: &PathwayTable,
    model: &UncertaintyModel,
) -> Result<f64, CoreError> {
    Ok(moment_report(table, model)?.second_abs)
}

/// `(var(Re U), var(Im U))` under the model, in the table's frame.
pub fn variance_transition_amplitude(
    table: &PathwayTable,
    model: &UncertaintyModel,
) -> Result<(f64, f64), CoreError> {
    let report = moment_report(table, model)?;
    Ok((report.variance_re(), report.variance_im()))
}

/// Inter-order interference moments `I_mn` under the model.
pub fn interference_moments(
    table: &PathwayTable,
    model: &UncertaintyModel,
) -> Result<InterferenceMatrix, CoreError> {
    Ok(moment_report(table, model)?.interference)
}

/// Gaussian lower quantile: the objective value exceeded with probability
/// `confidence` when `J ~ N(mean_j, sigma_j^2)`,
/// `mean_j - sqrt(2) sigma_j erfinv(2 confidence - 1)`.
pub fn distributional_worst_case(
    mean_j: f64,
    sigma_j: f64,
    confidence: f64,
) -> Result<f64, CoreError> {
    if !(0.0..1.0).contains(&confidence) || confidence <= 0.0 {
        return Err(CoreError::InvalidConfidence(confidence));
    }
    if !(sigma_j >= 0.0 && sigma_j.is_finite() && mean_j.is_finite()) {
        return Err(CoreError::Invalid("mean and sigma must be finite, sigma >= 0".into()));
    }
    Ok(mean_j - std::f64::consts::SQRT_2 * sigma_j * erf_inv(2.0 * confidence - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::{assign_encoding_frequencies, extract_amplitude_pathways};
    use crate::system::{ControlField, FieldMode, PropagationSettings, QuantumSystem};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn toy_table() -> PathwayTable {
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
        let scheme = assign_encoding_frequencies(2, 8).unwrap();
        let settings = PropagationSettings::new(300).unwrap();
        extract_amplitude_pathways(&system, &field, &scheme, &settings, 0, 1).unwrap()
    }

    fn toy_model(table: &PathwayTable, fraction: f64) -> UncertaintyModel {
        let means = table.parameter_means.clone();
        let sigmas = means.iter().map(|m| m * fraction).collect();
        UncertaintyModel::new(UncertaintyKind::Amplitude, means, sigmas).unwrap()
    }

    #[test]
    fn raw_gaussian_moments_match_closed_forms() {
        let (m, s) = (0.1, 0.03);
        // Frozen against an independent symbolic evaluation.
        let cases = [
            (0u32, 1.0),
            (1, 0.1),
            (2, 1.09e-2),
            (3, 1.27e-3),
            (4, 1.5643e-4),
            (5, 2.0215e-5),
            (6, 2.725435e-6),
            (7, 3.817045e-7),
            (8, 5.53406905e-8),
        ];
        for (j, want) in cases {
            assert_relative_eq!(gaussian_raw_moment(m, s, j), want, max_relative = 1e-12);
        }
        // Central moments: zero mean kills odd orders.
        assert_eq!(gaussian_raw_moment(0.0, 0.5, 3), 0.0);
        assert_relative_eq!(gaussian_raw_moment(0.0, 0.5, 4), 3.0 * 0.5f64.powi(4));
        // Degenerate sigma reduces to plain powers.
        assert_relative_eq!(gaussian_raw_moment(1.3, 0.0, 5), 1.3f64.powi(5));
    }

    #[test]
    fn model_constructors_validate() {
        assert!(UncertaintyModel::new(UncertaintyKind::Amplitude, vec![], vec![]).is_err());
        assert!(
            UncertaintyModel::new(UncertaintyKind::Amplitude, vec![0.1], vec![0.1, 0.2]).is_err()
        );
        assert!(
            UncertaintyModel::new(UncertaintyKind::Amplitude, vec![0.1], vec![-0.1]).is_err()
        );
        let system =
            QuantumSystem::new(vec![0.0, 1.0], array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let model = UncertaintyModel::dipole_absolute(&system, 0.05).unwrap();
        assert_eq!(model.means, vec![1.0]);
        assert_eq!(model.sigmas, vec![0.05]);
    }

    #[test]
    fn zero_sigma_collapses_to_nominal() {
        let table = toy_table();
        let model = toy_model(&table, 0.0);
        let report = moment_report(&table, &model).unwrap();
        let recon = table.reconstruction();
        assert!((report.mean_amplitude - recon).norm() < 1e-12);
        assert_relative_eq!(report.second_abs, recon.norm_sqr(), max_relative = 1e-10);
        assert!(report.total_variance() < 1e-12);
        assert!(report.variance_re() < 1e-12);
        assert!(report.variance_im() < 1e-12);
        // Interference collapses to products of nominal order sums.
        let i12 = report.interference.at(1, 2);
        let want = table.order_sum(1).conj() * table.order_sum(2);
        assert!((i12 - want).norm() < 1e-12);
    }

    #[test]
    fn interference_matrix_resolves_expected_probability() {
        let table = toy_table();
        let model = toy_model(&table, 0.1);
        let report = moment_report(&table, &model).unwrap();
        // Hermitian.
        let orders = report.interference.orders;
        for m in 0..orders {
            for n in 0..orders {
                let diff =
                    (report.interference.at(m, n) - report.interference.at(n, m).conj()).norm();
                assert!(diff < 1e-15);
            }
        }
        // Same-order + cross-order parts resolve E[P].
        let resolved =
            report.interference.same_order_total() + report.interference.cross_order_total();
        assert_relative_eq!(resolved, report.second_abs, max_relative = 1e-12);
        // Diagonal terms are nonnegative.
        for m in 0..orders {
            assert!(report.interference.at(m, m).re >= -1e-15);
            assert!(report.interference.at(m, m).im.abs() < 1e-15);
        }
    }

    #[test]
    fn pair_pass_matches_independent_double_sum() {
        let table = toy_table();
        let model = toy_model(&table, 0.12);
        let report = moment_report(&table, &model).unwrap();

        // Independent accumulation straight from the definition.
        let mut terms: Vec<(Complex64, Vec<u32>)> =
            vec![(table.free_term, vec![0, 0])];
        for e in &table.entries {
            terms.push((e.coeff, e.index.exponents.clone()));
        }
        let mut second = Complex64::default();
        let mut pseudo = Complex64::default();
        for (ca, ea) in &terms {
            for (cb, eb) in &terms {
                let mut joint = 1.0;
                for k in 0..2 {
                    joint *= gaussian_raw_moment(
                        model.means[k],
                        model.sigmas[k],
                        ea[k] + eb[k],
                    );
                }
                second += ca.conj() * cb * joint;
                pseudo += ca * cb * joint;
            }
        }
        assert_relative_eq!(report.second_abs, second.re, max_relative = 1e-12);
        assert!((report.pseudo_second - pseudo).norm() < 1e-14);

        let mean = expected_transition_amplitude(&table, &model).unwrap();
        assert!((report.mean_amplitude - mean).norm() < 1e-14);
        let p = expected_transition_probability(&table, &model).unwrap();
        assert_relative_eq!(p, second.re, max_relative = 1e-12);
    }

    #[test]
    fn component_variances_recombine() {
        let table = toy_table();
        let model = toy_model(&table, 0.2);
        let report = moment_report(&table, &model).unwrap();
        let (vr, vi) = variance_transition_amplitude(&table, &model).unwrap();
        assert_relative_eq!(vr + vi, report.total_variance(), max_relative = 1e-10);
        assert!(vr >= 0.0 && vi >= 0.0);
        // Covariance bounded by the component variances.
        assert!(report.covariance_re_im().abs() <= (vr * vi).sqrt() + 1e-15);
    }

    #[test]
    fn rotation_moves_components_but_not_invariants() {
        let table = toy_table();
        let model = toy_model(&table, 0.15);
        let report = moment_report(&table, &model).unwrap();
        let theta = 1.1504099;
        let rot = report.rotated(theta);

        assert_relative_eq!(rot.second_abs, report.second_abs);
        assert_relative_eq!(rot.total_variance(), report.total_variance(), max_relative = 1e-10);
        assert_relative_eq!(
            rot.variance_re() + rot.variance_im(),
            report.variance_re() + report.variance_im(),
            max_relative = 1e-10
        );
        assert!((rot.mean_amplitude.norm() - report.mean_amplitude.norm()).abs() < 1e-14);

        // Rotating the table first and analyzing then must agree.
        let table_rot = table.rotated(theta);
        let direct = moment_report(&table_rot, &model).unwrap();
        assert!((direct.mean_amplitude - rot.mean_amplitude).norm() < 1e-12);
        assert!((direct.pseudo_second - rot.pseudo_second).norm() < 1e-12);
        assert_relative_eq!(direct.variance_re(), rot.variance_re(), max_relative = 1e-9);
        assert_relative_eq!(direct.variance_im(), rot.variance_im(), max_relative = 1e-9);
    }

    #[test]
    fn variances_grow_with_sigma() {
        let table = toy_table();
        let mut last = -1.0;
        for fraction in [0.0, 0.06, 0.12, 0.18, 0.24, 0.3] {
            let model = toy_model(&table, fraction);
            let report = moment_report(&table, &model).unwrap();
            let total = report.total_variance();
            assert!(total > last, "variance not increasing at fraction {fraction}");
            last = total;
        }
    }

    #[test]
    fn kind_and_length_mismatches_rejected() {
        let table = toy_table();
        let wrong_kind = UncertaintyModel::new(
            UncertaintyKind::Dipole,
            table.parameter_means.clone(),
            vec![0.01, 0.01],
        )
        .unwrap();
        assert!(moment_report(&table, &wrong_kind).is_err());
        let wrong_len =
            UncertaintyModel::new(UncertaintyKind::Amplitude, vec![0.1], vec![0.01]).unwrap();
        assert!(moment_report(&table, &wrong_len).is_err());
    }

    #[test]
    fn lower_quantile_matches_normal_table() {
        // 95% and 97.5% one-sided z-scores.
        let q95 = distributional_worst_case(0.0, 1.0, 0.95).unwrap();
        assert_relative_eq!(q95, -1.6448536269514722, max_relative = 1e-9);
        let q975 = distributional_worst_case(1.0, 2.0, 0.975).unwrap();
        assert_relative_eq!(q975, 1.0 - 2.0 * 1.959963984540054, max_relative = 1e-9);
        // Median and degenerate sigma.
        assert_relative_eq!(distributional_worst_case(0.7, 0.1, 0.5).unwrap(), 0.7);
        assert!(distributional_worst_case(0.0, 1.0, 0.0).is_err());
        assert!(distributional_worst_case(0.0, 1.0, 1.0).is_err());
    }
}
