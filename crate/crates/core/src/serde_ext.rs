//! Exponent lists in JSON, where `"inf"` stands for an infinite exponent.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Extended {
    Finite(f64),
    Named(String),
}

fn encode(v: f64) -> Extended {
    if v == f64::INFINITY {
        Extended::Named("inf".into())
    } else {
        Extended::Finite(v)
    }
}

fn decode<E: serde::de::Error>(e: Extended) -> Result<f64, E> {
    match e {
        Extended::Finite(v) => Ok(v),
        Extended::Named(s) if matches!(s.as_str(), "inf" | "Infinity" | "infinity") => Ok(f64::INFINITY),
        Extended::Named(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
    }
}

pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| encode(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Extended>::deserialize(d)?.into_iter().map(decode).collect()
    }
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(encode).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Extended>::deserialize(d)? {
            None => Ok(None),
            Some(e) => decode(e).map(Some),
        }
    }
}

pub fn single<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = decode(Extended::deserialize(d)?)?;
    if v.is_nan() {
        return Err(D::Error::custom("NaN is not a valid exponent"));
    }
    Ok(v)
}

pub fn serialize_single<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    encode(*v).serialize(s)
}

#[cfg(test)]
mod tests {
    #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "super::list")]
        ps: Vec<f64>,
    }

    #[test]
    fn infinity_round_trips() {
        let h = Holder { ps: vec![1.0, f64::INFINITY] };
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(text, r#"{"ps":[1.0,"inf"]}"#);
        assert_eq!(serde_json::from_str::<Holder>(&text).unwrap(), h);
        assert!(serde_json::from_str::<Holder>(r#"{"ps":["big"]}"#).is_err());
    }
}
