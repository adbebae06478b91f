//! Canonical JSON: object keys sorted, no whitespace, shortest round-trip
//! float formatting. Identical values always serialize to identical bytes.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn to_canonical<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value stores objects in a BTreeMap, which sorts keys.
    let v = serde_json::to_value(value).map_err(|e| Error::format("json", e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| Error::format("json", e.to_string()))
}

pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::format("json", e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::format("json", e.to_string()))
}

pub fn from_str<T: DeserializeOwned>(text: &str, what: &'static str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::format(what, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[derive(Serialize)]
    struct S {
        zeta: f64,
        alpha: u32,
    }

    #[test]
    fn keys_are_sorted() {
        let s = to_canonical(&S {
            zeta: 0.1,
            alpha: 3,
        })
        .unwrap();
        assert_eq!(s, r#"{"alpha":3,"zeta":0.1}"#);
    }

    #[test]
    fn hash_map_order_does_not_leak() {
        let mut m = HashMap::new();
        for k in ["q", "b", "x", "a"] {
            m.insert(k.to_string(), 1);
        }
        assert_eq!(to_canonical(&m).unwrap(), r#"{"a":1,"b":1,"q":1,"x":1}"#);
    }
}
