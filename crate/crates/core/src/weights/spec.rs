use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Family, Monomial, Profile, Weight};
use crate::error::{Error, Result};

/// JSON form `{"family": "...", "n": int, "params": {...}}`.
///
/// Params per family:
/// - `fock`: none
/// - `radial_power`: `{"m": 2}`
/// - `gamma_monomials`: `{"gamma": [[1,0],[0,2]], "coefs": [1, 1]}` (coefs default to 1)
/// - `decoupled`: `{"parts": [{"family": "fock"}, {"family": "radial_power", "m": 2}]}`
/// - `custom_radial`: `{"coeffs": [c0, c1, …]}` for Σ c_i |z|^{2i}, or
///   `{"terms": [[c, p], …]}` for Σ c |z|^{2p}
/// - `harmonic`, `flat`: none
///
/// Every family accepts an optional `"offset"` added to φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub family: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub params: Value,
}

impl WeightSpec {
    pub fn new(family: &str, n: usize, params: Value) -> WeightSpec {
        WeightSpec { family: family.to_string(), n: Some(n), params }
    }
}

fn num(params: &Value, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::InvalidParams(format!("`{key}` must be a number"))),
    }
}

fn profile_from(family: &str, params: &Value) -> Result<Profile> {
    match family {
        "fock" => Ok(Profile::power(1.0, 1.0)),
        "radial_power" => {
            let m = num(params, "m")?.ok_or_else(|| Error::InvalidParams("radial_power needs `m`".into()))?;
            Ok(Profile::power(1.0, m))
        }
        "custom_radial" => {
            if let Some(c) = params.get("coeffs") {
                let arr = c
                    .as_array()
                    .ok_or_else(|| Error::InvalidParams("`coeffs` must be an array".into()))?;
                let mut terms = Vec::new();
                for (i, v) in arr.iter().enumerate() {
                    let c = v
                        .as_f64()
                        .ok_or_else(|| Error::InvalidParams("coefficients must be numbers".into()))?;
                    if c != 0.0 {
                        terms.push((c, i as f64));
                    }
                }
                Ok(Profile { terms })
            } else if let Some(t) = params.get("terms") {
                let terms: Vec<(f64, f64)> = serde_json::from_value(t.clone())
                    .map_err(|e| Error::InvalidParams(format!("`terms`: {e}")))?;
                Ok(Profile { terms })
            } else {
                Err(Error::InvalidParams("custom_radial needs `coeffs` or `terms`".into()))
            }
        }
        other => Err(Error::InvalidParams(format!("`{other}` cannot be a one-variable part"))),
    }
}

fn family_from(spec: &WeightSpec) -> Result<(usize, Family)> {
    let p = &spec.params;
    let n_given = spec.n;
    let need_n = |default: usize| n_given.unwrap_or(default);
    Ok(match spec.family.as_str() {
        "fock" => (need_n(1), Family::Fock),
        "radial_power" => {
            let m = num(p, "m")?.ok_or_else(|| Error::InvalidParams("radial_power needs `m`".into()))?;
            (need_n(1), Family::RadialPower { m })
        }
        "gamma_monomials" => {
            let gamma: Vec<Vec<u32>> = serde_json::from_value(p.get("gamma").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::InvalidParams(format!("`gamma`: {e}")))?;
            let coefs: Vec<f64> = match p.get("coefs") {
                None | Some(Value::Null) => vec![1.0; gamma.len()],
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| Error::InvalidParams(format!("`coefs`: {e}")))?,
            };
            if coefs.len() != gamma.len() {
                return Err(Error::InvalidParams("`coefs` and `gamma` lengths differ".into()));
            }
            let n = n_given.or_else(|| gamma.first().map(|a| a.len())).unwrap_or(0);
            let terms = gamma
                .into_iter()
                .zip(coefs)
                .map(|(alpha, coef)| Monomial { alpha, coef })
                .collect();
            (n, Family::GammaMonomials { terms })
        }
        "decoupled" => {
            let parts = p
                .get("parts")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::InvalidParams("decoupled needs a `parts` array".into()))?;
            let mut profiles = Vec::new();
            for part in parts {
                let fam = part
                    .get("family")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| Error::InvalidParams("each part needs a `family`".into()))?;
                let params = part.get("params").cloned().unwrap_or_else(|| part.clone());
                profiles.push(profile_from(fam, &params)?);
            }
            (n_given.unwrap_or(profiles.len()), Family::Decoupled { parts: profiles })
        }
        "custom_radial" => (need_n(1), Family::CustomRadial { profile: profile_from("custom_radial", p)? }),
        "harmonic" => (need_n(1), Family::Harmonic),
        "flat" => (need_n(1), Family::Flat),
        other => return Err(Error::UnknownFamily(other.to_string())),
    })
}

/// Parse, validate and probe a weight spec.
pub fn make_weight(spec: &WeightSpec) -> Result<Weight> {
    let (n, family) = family_from(spec)?;
    let offset = num(&spec.params, "offset")?.unwrap_or(0.0);
    let w = Weight { n, family, offset };
    w.validate()?;
    Ok(w)
}
