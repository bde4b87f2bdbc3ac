//! Byte-stable JSON: struct field order is the key order and every real is
//! written with 17 significant digits. Non-finite reals become strings.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use resilience_core::RecoveryTime;

/// A real number in fixed scientific notation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // the sign of zero carries no meaning here
        let v = if self.0 == 0.0 { 0.0 } else { self.0 };
        if v.is_nan() {
            s.serialize_str("nan")
        } else if v.is_infinite() {
            s.serialize_str(if v > 0.0 { "inf" } else { "-inf" })
        } else {
            let text = format!("{v:.16e}");
            RawValue::from_string(text).map_err(serde::ser::Error::custom)?.serialize(s)
        }
    }
}

/// A recovery time as an integer, or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Time(pub RecoveryTime);

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            RecoveryTime::At(t) => s.serialize_u64(t as u64),
            RecoveryTime::Never => s.serialize_str("inf"),
        }
    }
}

pub fn to_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_are_fixed_width() {
        assert_eq!(to_text(&Real(0.875)), "8.7500000000000000e-1\n");
        assert_eq!(to_text(&Real(2.0)), "2.0000000000000000e0\n");
        assert_eq!(to_text(&Real(-0.0)), "0.0000000000000000e0\n");
        assert_eq!(to_text(&Real(0.1)), "1.0000000000000001e-1\n");
        assert_eq!(to_text(&vec![Real(f64::INFINITY)]), "[\n  \"inf\"\n]\n");
        let back: f64 = serde_json::from_str(to_text(&Real(0.1)).trim()).unwrap();
        assert_eq!(back, 0.1);
        assert_eq!(to_text(&Time(RecoveryTime::At(2))), "2\n");
        assert_eq!(to_text(&Time(RecoveryTime::Never)), "\"inf\"\n");
    }
}
