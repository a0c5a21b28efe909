//! Radial blow-up, bubbling and oscillation laboratory for supercritical
//! exponential nonlinearities in the unit disc.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature nodes are quoted to full published precision; RK and
// Hermite kernels index several parallel arrays at once.
#![allow(clippy::excessive_precision, clippy::needless_range_loop)]

pub mod analysis;
pub mod diagram;
pub mod error;
pub mod growth;
pub mod numerics;
pub mod profiles;
pub mod recurrence;
pub mod shooting;
pub mod singular;

pub use error::{Error, Result};
pub use growth::{Family, FamilyName, GrowthClass, GrowthModel, ModelSpec};

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`, which plain JSON cannot represent.
pub mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid float {other:?}"))),
            },
        }
    }
}
