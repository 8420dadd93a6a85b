//! Serde adapters mapping `Complex64` to `{"re": x, "im": y}` objects, the
//! JSON convention shared by every artifact this workspace emits.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct ReIm {
    re: f64,
    im: f64,
}

pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    ReIm { re: z.re, im: z.im }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
    let v = ReIm::deserialize(d)?;
    Ok(Complex64::new(v.re, v.im))
}

/// Same adapter for `Vec<Complex64>` fields.
pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let items: Vec<ReIm> = v.iter().map(|z| ReIm { re: z.re, im: z.im }).collect();
        items.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let items = Vec::<ReIm>::deserialize(d)?;
        Ok(items.into_iter().map(|v| Complex64::new(v.re, v.im)).collect())
    }
}
