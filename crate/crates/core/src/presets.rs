//! Reference four-level system and the eight named control fields used by
//! the regression dataset and the CLI presets.

use ndarray::array;

use crate::system::{ControlField, FieldMode, QuantumSystem};

/// Level energies diag(0, 1, 1.5, 2) with couplings 1-2, 1-3 and 2-4.
/// State 1 -> state 4 has no direct coupling, so the transfer is a
/// multiphoton process and every 1 -> 4 pathway has even order.
pub fn reference_system() -> QuantumSystem {
    QuantumSystem::new(
        vec![0.0, 1.0, 1.5, 2.0],
        array![
            [0.0, 2.0, 1.0, 0.0],
            [2.0, 0.0, 0.0, 2.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
        ],
    )
    .expect("reference system is valid")
}

/// (omega, phi) per mode for the named preset fields; all use K = 3 modes,
/// amplitude 0.1 per mode and duration T = 10.
const PRESET_PARAMS: [(&str, [f64; 3], [f64; 3]); 8] = [
    (
        "eps1",
        [1.0311, 2.4347, 1.0540],
        [3.6380, 3.3807, 3.4839],
    ),
    (
        "eps2",
        [1.7671, 1.0048, 1.0019],
        [4.7794, 4.2516, 4.2667],
    ),
    (
        "eps3",
        [1.0076, 1.0105, 1.7279],
        [1.1894, 1.1694, 1.8371],
    ),
    (
        "eps4",
        [1.0004, 1.0996, 1.0411],
        [2.3030, 3.3381, 3.5704],
    ),
    (
        "eps5",
        [1.0067, 1.8850, 1.0426],
        [0.6550, 0.6656, 0.4101],
    ),
    (
        "eps6",
        [3.7307, 1.0442, 1.0209],
        [0.0449, 0.4724, 0.6493],
    ),
    (
        "eps7",
        [3.0631, 1.0239, 1.0512],
        [0.2068, 0.5943, 0.4091],
    ),
    (
        "eps8",
        [1.0009, 1.0112, 1.8064],
        [0.8815, 0.8174, 1.3002],
    ),
];

pub const PRESET_AMPLITUDE: f64 = 0.1;
pub const PRESET_DURATION: f64 = 10.0;

/// Named preset field (`eps1` .. `eps8`), or `None` for an unknown name.
pub fn preset_field(name: &str) -> Option<ControlField> {
    let (_, omegas, phases) = PRESET_PARAMS.iter().find(|(n, _, _)| *n == name)?;
    let modes = omegas
        .iter()
        .zip(phases)
        .map(|(&omega, &phase)| FieldMode {
            omega,
            amplitude: PRESET_AMPLITUDE,
            phase,
        })
        .collect();
    Some(ControlField::new(modes, PRESET_DURATION).expect("preset parameters are valid"))
}

pub fn preset_names() -> Vec<&'static str> {
    PRESET_PARAMS.iter().map(|(n, _, _)| *n).collect()
}
