//! End-to-end acceptance checks for the four-level benchmark system.
//!
//! Every check prints one `[PASS]`/`[FAIL]` line (visible with
//! `--nocapture`, and echoed automatically for failing tests) and then
//! asserts, so `cargo test --test acceptance` doubles as a report.
//!
//! Reference data: the frozen constants below are the regression reference
//! values for the benchmark field `eps1` on the four-level system. All
//! complex amplitudes are quoted in the interaction picture, i.e. rotated by
//! `exp(i E_final T)` with `E_final T = 20`.
//!
//! One check is a known, documented failure: the per-entry pathway
//! comparison in `decoded_pathway_entries_match_reference_values`. Our
//! decomposition reconstructs the propagator element to 4e-10 relative and
//! reproduces the per-order sums within 5%, but no global phase,
//! conjugation, or mode relabeling reconciles the individual reference
//! entries with any internally consistent decomposition (worst deviation
//! 2.3x); the entries are kept verbatim and the check reports the best
//! reconciliation it could find.

use std::time::Instant;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qrobust_core::presets::{preset_field, reference_system};
use qrobust_core::{
    alpha_to_gamma, amplitude_tradeoff, assign_encoding_frequencies, estimate_statistics,
    extract_amplitude_pathways, extract_dipole_pathways, gamma_to_alpha, gradient_dipole,
    interference_sweep, moment_report, propagate, transition_probability, unitarity_defect,
    worst_case_deviation, ConfidenceEllipsoid, ControlField, EncodingScheme, GaConfig,
    GaObjective, ParameterCovariance, PathwayIndex, PathwayKind, PathwayTable,
    PropagationSettings, QuantumSystem, UncertaintyModel, Waveform,
};

/// Interaction-picture rotation for reported amplitudes: `E_final * T`.
const REPORTING_PHASE: f64 = 2.0 * 10.0;

/// Amplitude-uncertainty sweep: `(sigma fraction, reference E[P])`.
const EXPECTED_PROBABILITY: [(f64, f64); 5] = [
    (0.06, 0.9571),
    (0.12, 0.9392),
    (0.18, 0.9115),
    (0.24, 0.8766),
    (0.30, 0.8374),
];

/// Reference `(var Re U, var Im U)` per sigma, analytic column.
const VARIANCE_ANALYTIC: [(f64, f64); 5] = [
    (8.295e-4, 6.968e-5),
    (3.163e-3, 5.661e-4),
    (6.558e-3, 2.185e-3),
    (1.038e-2, 5.571e-3),
    (1.397e-2, 1.072e-2),
];

/// Reference `(var Re U, var Im U)` per sigma, sampled column (800 draws).
const VARIANCE_SAMPLED: [(f64, f64); 5] = [
    (9.323e-4, 9.243e-5),
    (3.388e-3, 6.441e-4),
    (7.091e-3, 2.265e-3),
    (1.165e-2, 8.212e-3),
    (1.587e-2, 1.361e-2),
];

/// Reference order sums of the decoded transition amplitude.
const ORDER_SUMS: [(u32, f64, f64); 2] = [(2, 0.2346, -2.3926), (4, 0.3342, 2.0936)];

/// Reference pathway entries: label as printed (descending encoding
/// frequency), frequency, complex contribution. Labels are reversed before
/// lookup because our exponent vectors run in parameter enumeration order
/// (ascending frequency).
const REFERENCE_ENTRIES: [([u32; 3], u64, f64, f64); 14] = [
    ([0, 0, 2], 2, 0.1816, -0.2149),
    ([0, 1, 1], 23, 0.7366, -0.8381),
    ([0, 2, 0], 44, 0.7462, -0.8164),
    ([1, 0, 1], 485, -0.04693, -0.07756),
    ([1, 1, 0], 506, -0.09012, -0.1555),
    ([0, 0, 4], 4, -0.01389, 0.02558),
    ([0, 1, 3], 25, -0.1101, 0.2025),
    ([0, 2, 2], 46, -0.3281, 0.6014),
    ([0, 3, 1], 67, -0.4356, 0.7946),
    ([0, 4, 0], 88, -0.21739, 0.3941),
    ([1, 0, 3], 487, 0.01617, 0.01658),
    ([1, 1, 2], 508, 0.09452, 0.09914),
    ([1, 2, 1], 529, 0.1841, 0.1979),
    ([1, 3, 0], 550, 0.1194, 0.1318),
];

fn benchmark() -> (QuantumSystem, ControlField) {
    (reference_system(), preset_field("eps1").expect("preset exists"))
}

fn production_settings() -> PropagationSettings {
    PropagationSettings::default()
}

/// Sampling runs use fewer steps: the integrator bias at 600 steps is below
/// 2e-6 in probability, two orders of magnitude under the tightest 3-SE gate.
fn sampling_settings() -> PropagationSettings {
    PropagationSettings {
        steps: 600,
        ..Default::default()
    }
}

/// Production amplitude-pathway table (order 21, grid 16384, 5000 steps),
/// rotated to the reporting frame, plus the extraction wall time in seconds.
static AMP_TABLE: Lazy<(PathwayTable, f64)> = Lazy::new(|| {
    let (system, field) = benchmark();
    let scheme = assign_encoding_frequencies(3, 21).expect("scheme");
    let t0 = Instant::now();
    let table =
        extract_amplitude_pathways(&system, &field, &scheme, &production_settings(), 0, 3)
            .expect("amplitude extraction");
    (table.rotated(REPORTING_PHASE), t0.elapsed().as_secs_f64())
});

/// Dipole-pathway table over the three nonzero pairs. Order 14 leaves a
/// reconstruction defect of 7e-6, far below the sampling gates it feeds.
static DIPOLE_TABLE: Lazy<PathwayTable> = Lazy::new(|| {
    let (system, field) = benchmark();
    let scheme = EncodingScheme::assign(PathwayKind::Dipole, 3, 14, 1).expect("scheme");
    let table = extract_dipole_pathways(&system, &field, &scheme, &production_settings(), 0, 3)
        .expect("dipole extraction");
    table.rotated(REPORTING_PHASE)
});

fn check(label: &str, ok: bool, detail: &str) -> bool {
    println!("[{}] {label}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn rel_dev(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}

#[test]
fn expected_probability_and_variance_sweep_match_reference_values() {
    let (_, field) = benchmark();
    let (table, extraction_seconds) = &*AMP_TABLE;
    let t0 = Instant::now();
    let mut all = true;
    for (i, &(sigma, reference)) in EXPECTED_PROBABILITY.iter().enumerate() {
        let model = UncertaintyModel::amplitude_relative(&field, sigma).expect("model");
        let report = moment_report(table, &model).expect("moments");
        let p = report.expected_probability();
        all &= check(
            &format!("expected probability, sigma {sigma}"),
            (p - reference).abs() <= 0.02,
            &format!("E[P] {p:.4} vs reference {reference:.4} (tolerance 0.02)"),
        );

        let vr = report.variance_re();
        let vi = report.variance_im();
        let pair_ok = |col: &(f64, f64)| rel_dev(vr, col.0) <= 0.25 && rel_dev(vi, col.1) <= 0.25;
        let analytic_ok = pair_ok(&VARIANCE_ANALYTIC[i]);
        let sampled_ok = pair_ok(&VARIANCE_SAMPLED[i]);
        let column = if analytic_ok {
            "analytic column"
        } else if sampled_ok {
            "sampled column"
        } else {
            "no column"
        };
        all &= check(
            &format!("variance pair, sigma {sigma}"),
            analytic_ok || sampled_ok,
            &format!("var(Re) {vr:.3e}, var(Im) {vi:.3e} within 25% of the {column}"),
        );
    }
    let sweep_seconds = t0.elapsed().as_secs_f64();
    let total = extraction_seconds + sweep_seconds;
    all &= check(
        "sweep runtime",
        total < 300.0,
        &format!("extraction {extraction_seconds:.1} s + sweep {sweep_seconds:.3} s < 300 s"),
    );
    assert!(all, "expected-probability sweep diverged from reference");
}

#[test]
fn decoded_pathway_entries_match_reference_values() {
    let (table, _) = &*AMP_TABLE;
    let ours: Vec<Complex64> = REFERENCE_ENTRIES
        .iter()
        .map(|&(_, gamma, _, _)| {
            table
                .entry(gamma)
                .unwrap_or_else(|| panic!("entry gamma {gamma} missing"))
                .raw
        })
        .collect();
    let reference: Vec<Complex64> = REFERENCE_ENTRIES
        .iter()
        .map(|&(_, _, re, im)| Complex64::new(re, im))
        .collect();

    // Best single reconciliation: optional conjugation plus one global phase
    // chosen by least squares over all 14 entries.
    let mut best: Option<(f64, bool, f64)> = None;
    for conjugate in [false, true] {
        let aligned: Vec<Complex64> = ours
            .iter()
            .map(|u| if conjugate { u.conj() } else { *u })
            .collect();
        let phase = aligned
            .iter()
            .zip(&reference)
            .map(|(u, r)| u * r.conj())
            .sum::<Complex64>()
            .arg();
        let rot = Complex64::from_polar(1.0, -phase);
        let worst = aligned
            .iter()
            .zip(&reference)
            .map(|(u, r)| (u * rot - r).norm() / r.norm())
            .fold(0.0, f64::max);
        if best.is_none() || worst < best.unwrap().0 {
            best = Some((worst, conjugate, phase));
        }
    }
    let (worst, conjugate, phase) = best.unwrap();
    let rot = Complex64::from_polar(1.0, -phase);
    println!("best reconciliation: conjugate = {conjugate}, global phase = {phase:+.4}");
    for (i, &(label, gamma, _, _)) in REFERENCE_ENTRIES.iter().enumerate() {
        let u = if conjugate { ours[i].conj() } else { ours[i] } * rot;
        let r = reference[i];
        println!(
            "  {label:?} gamma {gamma:3}: ours {:+.4}{:+.4}i vs reference {:+.4}{:+.4}i, \
             rel dev {:.3}, |mag| ratio {:.3}",
            u.re,
            u.im,
            r.re,
            r.im,
            (u - r).norm() / r.norm(),
            ours[i].norm() / r.norm(),
        );
    }
    let defect = (table.reconstruction() - table.nominal).norm() / table.nominal.norm();
    println!(
        "context: reconstruction defect {defect:.1e}, order sums match within 5% \
         (see the order-sum check); the discrepancy is confined to the per-entry attribution"
    );
    let ok = check(
        "per-entry pathway values",
        worst <= 0.05,
        &format!("worst relative deviation {worst:.3} (tolerance 0.05)"),
    );
    assert!(
        ok,
        "reference pathway entries are not reproduced by any global phase or conjugation: \
         worst relative deviation {worst:.3}; the decomposition itself is internally \
         consistent (reconstruction defect {defect:.1e}, order sums within 5%)"
    );
}

#[test]
fn pathway_order_sums_match_reference_values() {
    let (table, _) = &*AMP_TABLE;
    let mut all = true;
    for &(order, re, im) in &ORDER_SUMS {
        let reference = Complex64::new(re, im);
        let sum = table.order_sum(order);
        let dev = (sum - reference).norm() / reference.norm();
        all &= check(
            &format!("order-{order} sum"),
            dev <= 0.05,
            &format!(
                "{:+.4}{:+.4}i vs reference {:+.4}{:+.4}i, rel dev {dev:.4}",
                sum.re, sum.im, reference.re, reference.im
            ),
        );
    }
    assert!(all, "order sums diverged from reference");
}

#[test]
fn encoding_frequency_labels_match_reference_values() {
    let (table, _) = &*AMP_TABLE;
    let mut all = true;
    all &= check(
        "frequency ladder",
        table.scheme.gammas == [1, 22, 484],
        &format!("gammas {:?} (expected [1, 22, 484])", table.scheme.gammas),
    );
    let mut labels_ok = true;
    for &(label, gamma, _, _) in &REFERENCE_ENTRIES {
        let mut exponents = label.to_vec();
        exponents.reverse();
        let index = PathwayIndex { exponents };
        let computed = alpha_to_gamma(&index, &table.scheme).expect("gamma");
        let decoded = gamma_to_alpha(gamma, &table.scheme).expect("alpha");
        let present = table.entry(gamma).is_some();
        if computed != gamma || decoded != index || !present {
            labels_ok = false;
            println!(
                "  label {label:?}: computed gamma {computed} vs {gamma}, decoded {:?}, \
                 present {present}",
                decoded.exponents
            );
        }
    }
    all &= check(
        "reference labels",
        labels_ok,
        "all 14 reference labels map onto decoded table entries both ways",
    );
    assert!(all, "encoding frequencies diverged from reference");
}

#[test]
fn analytic_moments_match_sampling_under_amplitude_uncertainty() {
    let (system, field) = benchmark();
    let (table, _) = &*AMP_TABLE;
    let mut all = true;
    for &(sigma, _) in &EXPECTED_PROBABILITY {
        let model = UncertaintyModel::amplitude_relative(&field, sigma).expect("model");
        let report = moment_report(table, &model).expect("moments");
        let stats = estimate_statistics(
            &system,
            &field,
            &model,
            0,
            3,
            100_000,
            20_260_816,
            &sampling_settings(),
            REPORTING_PHASE,
        )
        .expect("sampling");
        let z_p = (stats.expected_probability - report.expected_probability())
            / stats.se_probability;
        let z_re = (stats.variance_re - report.variance_re()) / stats.se_variance_re;
        let z_im = (stats.variance_im - report.variance_im()) / stats.se_variance_im;
        all &= check(
            &format!("amplitude sampling agreement, sigma {sigma}"),
            z_p.abs() <= 3.0 && z_re.abs() <= 3.0 && z_im.abs() <= 3.0,
            &format!("z(E[P]) {z_p:+.2}, z(var Re) {z_re:+.2}, z(var Im) {z_im:+.2}"),
        );
    }
    assert!(all, "analytic moments disagree with sampling beyond 3 SE");
}

#[test]
fn analytic_moments_match_sampling_under_dipole_uncertainty() {
    let (system, field) = benchmark();
    let table = &*DIPOLE_TABLE;
    let defect = (table.reconstruction() - table.nominal).norm();
    println!("dipole table reconstruction defect {defect:.1e}");
    let model = UncertaintyModel::dipole_absolute(&system, 0.05).expect("model");
    let report = moment_report(table, &model).expect("moments");
    let stats = estimate_statistics(
        &system,
        &field,
        &model,
        0,
        3,
        100_000,
        20_260_817,
        &sampling_settings(),
        REPORTING_PHASE,
    )
    .expect("sampling");
    let z_p =
        (stats.expected_probability - report.expected_probability()) / stats.se_probability;
    let z_re = (stats.variance_re - report.variance_re()) / stats.se_variance_re;
    let z_im = (stats.variance_im - report.variance_im()) / stats.se_variance_im;
    let ok = check(
        "dipole sampling agreement, sigma 0.05",
        z_p.abs() <= 3.0 && z_re.abs() <= 3.0 && z_im.abs() <= 3.0,
        &format!("z(E[P]) {z_p:+.2}, z(var Re) {z_re:+.2}, z(var Im) {z_im:+.2}"),
    );
    assert!(ok, "dipole moments disagree with sampling beyond 3 SE");
}

#[test]
fn structural_invariants_hold() {
    let (system, field) = benchmark();
    let mut all = true;

    let u = propagate(&system, &field, &production_settings()).expect("propagation");
    let defect = unitarity_defect(&u);
    all &= check(
        "unitarity",
        defect < 1e-10,
        &format!("max |U^dag U - I| = {defect:.2e} (tolerance 1e-10)"),
    );

    let (table, _) = &*AMP_TABLE;
    let rec = (table.reconstruction() - table.nominal).norm() / table.nominal.norm();
    all &= check(
        "pathway-sum reconstruction",
        rec <= 1e-2,
        &format!("relative defect {rec:.2e} at order 21 (tolerance 1e-2)"),
    );

    let mut round_trips = 0usize;
    let mut roundtrip_ok = true;
    for params in 1..=3usize {
        for max_order in 1..=4usize {
            let scheme =
                EncodingScheme::assign(PathwayKind::Amplitude, params, max_order, 1).expect("scheme");
            let mut stack = vec![vec![]];
            while let Some(prefix) = stack.pop() {
                if prefix.len() == params {
                    let total: u32 = prefix.iter().sum();
                    if total as usize > max_order {
                        continue;
                    }
                    let index = PathwayIndex { exponents: prefix };
                    let gamma = alpha_to_gamma(&index, &scheme).expect("encode");
                    let back = gamma_to_alpha(gamma, &scheme).expect("decode");
                    roundtrip_ok &= back == index;
                    round_trips += 1;
                    continue;
                }
                for digit in 0..=max_order as u32 {
                    let mut next = prefix.clone();
                    next.push(digit);
                    stack.push(next);
                }
            }
        }
    }
    all &= check(
        "index round trip",
        roundtrip_ok,
        &format!("{round_trips} exponent vectors encode and decode exactly (orders <= 4, <= 3 parameters)"),
    );

    // Scaling invariance of normalized coefficients: raw contributions scale
    // as the parameter monomial, so coefficients must not move. Entries below
    // 1e-6 of the largest are skipped; they sit at the spectral-aliasing
    // floor of the reduced order-14 grid.
    let scheme = assign_encoding_frequencies(3, 14)
        .expect("scheme")
        .with_residual_tolerance(1.0);
    let base = extract_amplitude_pathways(&system, &field, &scheme, &sampling_settings(), 0, 3)
        .expect("extraction");
    let lambda = 0.8;
    let scaled_amps: Vec<f64> = field.modes().iter().map(|m| m.amplitude * lambda).collect();
    let scaled_field = field.with_amplitudes(&scaled_amps).expect("field");
    let scaled =
        extract_amplitude_pathways(&system, &scaled_field, &scheme, &sampling_settings(), 0, 3)
            .expect("extraction");
    let max_raw = base.entries.iter().map(|e| e.raw.norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for entry in &base.entries {
        if entry.raw.norm() < 1e-6 * max_raw {
            continue;
        }
        let other = scaled.entry(entry.gamma).expect("scaled entry");
        worst = worst.max((entry.coeff - other.coeff).norm() / entry.coeff.norm());
        compared += 1;
    }
    all &= check(
        "coefficient scaling invariance",
        worst <= 1e-6,
        &format!("worst relative shift {worst:.2e} over {compared} entries at amplitude scale {lambda}"),
    );

    let model = UncertaintyModel::amplitude_relative(&field, 0.30).expect("model");
    let report = moment_report(table, &model).expect("moments");
    let identity = (report.expected_probability()
        - (report.mean_amplitude.norm_sqr() + report.variance_re() + report.variance_im()))
    .abs();
    all &= check(
        "moment identity",
        identity <= 1e-10,
        &format!("|E[P] - (|E[U]|^2 + var Re + var Im)| = {identity:.2e}"),
    );

    assert!(all, "a structural invariant is violated");
}

#[test]
fn dipole_gradient_matches_central_differences() {
    let (system, field) = benchmark();
    let settings = production_settings();
    let gradient = gradient_dipole(&system, &field, 0, 3, &settings).expect("gradient");
    let pairs = system.dipole_pairs();
    assert_eq!(gradient.len(), pairs.len());
    let h = 1e-5;
    let mut all = true;
    for (k, &(p, q)) in pairs.iter().enumerate() {
        let probe = |delta: f64| {
            let mut dipole = system.dipole().clone();
            dipole[(p, q)] += delta;
            dipole[(q, p)] += delta;
            let perturbed = system.with_dipole(dipole).expect("system");
            let u = propagate(&perturbed, &field, &settings).expect("propagation");
            transition_probability(&u, 0, 3).expect("probability")
        };
        let fd = (probe(h) - probe(-h)) / (2.0 * h);
        let rel = (gradient[k] - fd).abs() / fd.abs();
        all &= check(
            &format!("gradient pair ({p},{q})"),
            rel < 1e-6,
            &format!("analytic {:+.9} vs central difference {fd:+.9}, rel {rel:.2e}", gradient[k]),
        );
    }
    assert!(all, "dipole gradient disagrees with finite differences");
}

#[test]
fn worst_case_deviation_attains_the_ellipsoid_boundary() {
    let (system, field) = benchmark();
    let gradient = gradient_dipole(&system, &field, 0, 3, &production_settings()).expect("gradient");
    let pairs = system.dipole_pairs();
    let uncertain = system.nonzero_dipole_pairs();
    let g3: Vec<f64> = pairs
        .iter()
        .enumerate()
        .filter(|&(_, p)| uncertain.contains(p))
        .map(|(k, _)| gradient[k])
        .collect();
    assert_eq!(g3.len(), 3);

    let cases: [(&str, ParameterCovariance); 2] = [
        (
            "isotropic",
            ParameterCovariance::isotropic(3, 0.05).expect("covariance"),
        ),
        (
            "correlated",
            ParameterCovariance::new(ndarray::arr2(&[
                [2.5e-3, 6.0e-4, 2.0e-4],
                [6.0e-4, 1.6e-3, -3.0e-4],
                [2.0e-4, -3.0e-4, 9.0e-4],
            ]))
            .expect("covariance"),
        ),
    ];

    let mut all = true;
    for (name, covariance) in cases {
        let sqrt = covariance.sqrt_matrix();
        let inverse = invert_3x3(covariance.matrix());
        let ellipsoid = ConfidenceEllipsoid::new(covariance, 0.95).expect("ellipsoid");
        let wc = worst_case_deviation(&g3, &ellipsoid).expect("worst case");
        assert!(!wc.degenerate);

        let d = &wc.delta_params;
        let mut quad = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                quad += d[r] * inverse[(r, c)] * d[c];
            }
        }
        all &= check(
            &format!("boundary attainment, {name}"),
            (quad - ellipsoid.chi2).abs() <= 1e-10 * ellipsoid.chi2,
            &format!(
                "delta^T Sigma^-1 delta = {quad:.12} vs chi2 = {:.12}",
                ellipsoid.chi2
            ),
        );

        // No boundary point may undercut the analytic worst case: sample a
        // million directions on the ellipsoid surface.
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut min_delta_j = f64::INFINITY;
        for _ in 0..1_000_000 {
            let mut u = [0.0f64; 3];
            let mut norm = 0.0;
            while norm < 1e-12 {
                for v in &mut u {
                    *v = rng.sample(StandardNormal);
                }
                norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            let mut delta_j = 0.0;
            for r in 0..3 {
                let mut coord = 0.0;
                for c in 0..3 {
                    coord += sqrt[(r, c)] * u[c] / norm;
                }
                delta_j += g3[r] * coord * ellipsoid.radius();
            }
            min_delta_j = min_delta_j.min(delta_j);
        }
        all &= check(
            &format!("boundary sampling, {name}"),
            min_delta_j >= wc.delta_j - 1e-6,
            &format!(
                "sampled minimum {min_delta_j:.9} vs analytic worst case {:.9} over 1e6 points",
                wc.delta_j
            ),
        );
    }
    assert!(all, "worst-case geometry checks failed");
}

fn invert_3x3(m: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
    let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
    assert!(det.abs() > 1e-300, "singular covariance");
    let mut inv = ndarray::Array2::zeros((3, 3));
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c1, c2) = match c {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = m[(r1, c1)] * m[(r2, c2)] - m[(r1, c2)] * m[(r2, c1)];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            inv[(c, r)] = sign * minor / det;
        }
    }
    inv
}

#[test]
fn optimized_fields_trade_nominal_yield_for_robustness() {
    // Reduced optimizer budget: 48 individuals for 40 generations per
    // (amplitude, seed) pair keeps the sweep near 20 s while still saturating
    // the nominal yield at the upper amplitudes. The trend checks carry a
    // 1e-3 slack because independently seeded runs saturate to within a few
    // 1e-5 of each other.
    let (system, _) = benchmark();
    let objective = GaObjective {
        system,
        amplitudes: vec![0.1; 3],
        duration: 10.0,
        waveform: Waveform::Sine,
        initial_state: 0,
        final_state: 3,
        settings: PropagationSettings {
            steps: 400,
            ..Default::default()
        },
    };
    let mut config = GaConfig::reference(3, 1);
    config.population = 48;
    config.reproductive = 12;
    config.generations = 40;
    config.crossover_probability = 0.9;
    config.mutation_probability = 0.05;
    config.validate().expect("config");

    let amplitudes = [0.05, 0.075, 0.1, 0.125, 0.15];
    let seeds: Vec<u64> = (1..=10).collect();
    let rows = amplitude_tradeoff(&objective, &config, &amplitudes, &seeds, 0.2, 3000, 99, 12)
        .expect("sweep");
    for row in &rows {
        println!(
            "amplitude {:.3}: best nominal {:.6}, expected at sigma 0.2 {:.6}, \
             significant orders {}, seed {}",
            row.amplitude,
            row.best_nominal,
            row.expected_probability,
            row.significant_orders,
            row.best_seed
        );
    }
    let mut all = true;
    let nondecreasing = rows
        .windows(2)
        .all(|w| w[1].best_nominal >= w[0].best_nominal - 1e-3);
    all &= check(
        "nominal yield vs amplitude",
        nondecreasing,
        "best-of-10 nominal yield is nondecreasing in amplitude (1e-3 slack)",
    );
    let rise = rows.last().unwrap().best_nominal - rows[0].best_nominal;
    all &= check(
        "nominal yield range",
        rise > 0.3,
        &format!("yield rises by {rise:.3} across the sweep"),
    );
    let argmax = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.expected_probability.total_cmp(&b.1.expected_probability))
        .map(|(i, _)| i)
        .unwrap();
    all &= check(
        "robust optimum is interior",
        argmax != 0 && argmax != rows.len() - 1,
        &format!(
            "expected yield under uncertainty peaks at amplitude {:.3}, not at an endpoint",
            rows[argmax].amplitude
        ),
    );
    assert!(all, "robustness-optimality trade-off trend not reproduced");
}

#[test]
fn cross_order_interference_grows_more_destructive_with_uncertainty() {
    let (table, _) = &*AMP_TABLE;
    let fractions = [0.0, 0.06, 0.12, 0.18, 0.24, 0.30];
    let rows = interference_sweep(table, &fractions).expect("sweep");
    for row in &rows {
        println!(
            "sigma {:.2}: cross-order total {:+.4}, E[P] {:.4}",
            row.sigma, row.cross_order_total, row.expected_probability
        );
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].cross_order_total < w[0].cross_order_total);
    let ok = check(
        "cross-order interference trend",
        monotone,
        "total cross-order interference decreases monotonically as sigma grows 0 to 0.3",
    );
    assert!(ok, "interference trend not monotone");
}
