//! JSON encoding of extended nonnegative reals: finite values are plain
//! numbers and `+∞` is the string `"inf"`.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::Deserialize;
use serde_json::Value;
use std::fmt;

pub fn to_value(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::String("inf".to_owned())
    } else {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

pub fn from_value(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        _ => None,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Ext {
    Num(f64),
    Str(String),
}

impl Ext {
    fn into_f64<E: de::Error>(self) -> Result<f64, E> {
        match self {
            Ext::Num(x) => Ok(x),
            Ext::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Ext::Str(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// `#[serde(with = "serde_ext::vec")]` for `Vec<f64>` fields.
pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for &x in values {
            seq.serialize_element(&to_value(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of numbers or \"inf\"")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::new();
                while let Some(x) = seq.next_element::<Ext>()? {
                    out.push(x.into_f64()?);
                }
                Ok(out)
            }
        }
        d.deserialize_seq(V)
    }
}

/// `#[serde(with = "serde_ext::scalar")]` for single `f64` fields.
pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&to_value(*x), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ext::deserialize(d)?.into_f64()
    }
}
