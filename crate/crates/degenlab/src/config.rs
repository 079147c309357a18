//! Experiment configuration loading: flat `key = value` files (newline or
//! `;` separated, `#` comments, optional quotes) with a JSON alternative.
//! Unknown keys are rejected so a typo cannot silently change an
//! experiment.

use crate::expr::VarSet;
use crate::koike::DegeneracyFamily;
use crate::matrixcheck::{GrushinMatrix, SosDecomposition, SymbolicMatrix};
use crate::profiles::Profile;
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config `{path}`: {msg}")]
    Bad { path: String, msg: String },
    #[error("config `{path}`: unknown key `{key}`")]
    UnknownKey { path: String, key: String },
    #[error("config `{path}`: missing key `{key}`")]
    MissingKey { path: String, key: String },
    #[error("config `{path}`: key `{key}`: {msg}")]
    BadValue {
        path: String,
        key: String,
        msg: String,
    },
    #[error("cannot read `{path}`: {msg}")]
    Io { path: String, msg: String },
}

/// Parsed key-value view of a config file with taken-key tracking.
pub struct KvMap {
    pub path: String,
    map: BTreeMap<String, String>,
    taken: BTreeSet<String>,
}

impl KvMap {
    pub fn from_file(path: &str) -> Result<KvMap, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_string(),
            msg: e.to_string(),
        })?;
        KvMap::from_text(path, &text)
    }

    pub fn from_text(path: &str, text: &str) -> Result<KvMap, ConfigError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return KvMap::from_json(path, text);
        }
        let mut map = BTreeMap::new();
        for raw_line in text.lines() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            };
            for stmt in line.split(';') {
                let stmt = stmt.trim();
                if stmt.is_empty() {
                    continue;
                }
                let (key, value) = stmt.split_once('=').ok_or_else(|| ConfigError::Bad {
                    path: path.to_string(),
                    msg: format!("expected `key = value`, got `{stmt}`"),
                })?;
                let key = key.trim().to_string();
                let mut value = value.trim().to_string();
                if value.len() >= 2
                    && ((value.starts_with('"') && value.ends_with('"'))
                        || (value.starts_with('\'') && value.ends_with('\'')))
                {
                    value = value[1..value.len() - 1].to_string();
                }
                if map.insert(key.clone(), value).is_some() {
                    return Err(ConfigError::Bad {
                        path: path.to_string(),
                        msg: format!("duplicate key `{key}`"),
                    });
                }
            }
        }
        Ok(KvMap {
            path: path.to_string(),
            map,
            taken: BTreeSet::new(),
        })
    }

    fn from_json(path: &str, text: &str) -> Result<KvMap, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Bad {
            path: path.to_string(),
            msg: format!("invalid JSON: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| ConfigError::Bad {
            path: path.to_string(),
            msg: "top-level JSON must be an object".into(),
        })?;
        let mut map = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                other => {
                    return Err(ConfigError::BadValue {
                        path: path.to_string(),
                        key: k.clone(),
                        msg: format!("unsupported JSON value {other}"),
                    })
                }
            };
            map.insert(k.clone(), s);
        }
        Ok(KvMap {
            path: path.to_string(),
            map,
            taken: BTreeSet::new(),
        })
    }

    pub fn echo(&self) -> Value {
        Value::Object(
            self.map
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect(),
        )
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.taken.insert(key.to_string());
        self.map.get(key).cloned()
    }

    pub fn str_req(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::MissingKey {
            path: self.path.clone(),
            key: key.to_string(),
        })
    }

    pub fn str_opt(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    pub fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        let raw = self.str_req(key)?;
        raw.parse().map_err(|_| ConfigError::BadValue {
            path: self.path.clone(),
            key: key.to_string(),
            msg: format!("expected a number, got `{raw}`"),
        })
    }

    pub fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| ConfigError::BadValue {
                path: self.path.clone(),
                key: key.to_string(),
                msg: format!("expected a number, got `{raw}`"),
            }),
        }
    }

    pub fn usize_req(&mut self, key: &str) -> Result<usize, ConfigError> {
        let raw = self.str_req(key)?;
        raw.parse().map_err(|_| ConfigError::BadValue {
            path: self.path.clone(),
            key: key.to_string(),
            msg: format!("expected an integer, got `{raw}`"),
        })
    }

    pub fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| ConfigError::BadValue {
                path: self.path.clone(),
                key: key.to_string(),
                msg: format!("expected an integer, got `{raw}`"),
            }),
        }
    }

    pub fn bool_opt(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => match raw.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(ConfigError::BadValue {
                    path: self.path.clone(),
                    key: key.to_string(),
                    msg: format!("expected a boolean, got `{raw}`"),
                }),
            },
        }
    }

    /// All keys matching a prefix pattern, marked as taken.
    pub fn take_matching(&mut self, pred: impl Fn(&str) -> bool) -> Vec<(String, String)> {
        let keys: Vec<String> = self.map.keys().filter(|k| pred(k)).cloned().collect();
        for k in &keys {
            self.taken.insert(k.clone());
        }
        keys.into_iter()
            .map(|k| {
                let v = self.map[&k].clone();
                (k, v)
            })
            .collect()
    }

    /// Rejects any key that was never consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        for key in self.map.keys() {
            if !self.taken.contains(key) {
                return Err(ConfigError::UnknownKey {
                    path: self.path,
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Loads a single profile declaration:
/// `name = "lam3"; m = 1; R = 1.0; expr = "exp(-2/abs(x1))"; at0 = 0;
/// elliptical = true`.
pub fn load_profile(path: &str) -> Result<(Profile, Value), ConfigError> {
    let mut kv = KvMap::from_file(path)?;
    let echo = kv.echo();
    let profile = profile_from_kv(&mut kv)?;
    kv.finish()?;
    if profile.elliptical {
        // a declared-elliptical profile is validated on load
        let nodes = if profile.m == 1 { 1025 } else { 65 };
        let grid = crate::grid::Grid::new(profile.m, profile.radius, nodes).map_err(|e| {
            ConfigError::Bad {
                path: path.to_string(),
                msg: e.to_string(),
            }
        })?;
        match crate::profiles::check_elliptical(&profile, &grid) {
            Ok(outcome) if outcome.holds() => {}
            Ok(outcome) => {
                return Err(ConfigError::Bad {
                    path: path.to_string(),
                    msg: format!(
                        "profile declared elliptical but positivity fails: {outcome:?}"
                    ),
                })
            }
            Err(e) => {
                return Err(ConfigError::Bad {
                    path: path.to_string(),
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok((profile, echo))
}

fn profile_from_kv(kv: &mut KvMap) -> Result<Profile, ConfigError> {
    let name = kv.str_opt("name").unwrap_or_else(|| "profile".into());
    let m = kv.usize_req("m")?;
    let radius = kv.f64_req("R")?;
    let expr = kv.str_req("expr")?;
    let at0 = kv.f64_opt("at0")?;
    let elliptical = kv.bool_opt("elliptical")?.unwrap_or(false);
    Profile::parse(&name, &expr, m, radius, at0, elliptical).map_err(|e| ConfigError::Bad {
        path: kv.path.clone(),
        msg: e.to_string(),
    })
}

/// Loads a degeneracy family:
/// `m = 1; p = 3; n = 3; R = 1.0; lambda2.expr = "1";
/// lambda3.expr = "exp(-2/abs(x1))"; lambda3.at0 = 0`.
pub fn load_family(path: &str) -> Result<(DegeneracyFamily, Value), ConfigError> {
    let mut kv = KvMap::from_file(path)?;
    let echo = kv.echo();
    let m = kv.usize_req("m")?;
    let p = kv.usize_req("p")?;
    let n = kv.usize_req("n")?;
    let radius = kv.f64_opt("R")?.unwrap_or(1.0);
    let mut profiles = Vec::new();
    for k in (m + 1)..=p {
        let base = format!("lambda{k}");
        let expr = kv
            .str_opt(&format!("{base}.expr"))
            .or_else(|| kv.str_opt(&base))
            .ok_or_else(|| ConfigError::MissingKey {
                path: path.to_string(),
                key: format!("{base}.expr"),
            })?;
        let at0 = kv.f64_opt(&format!("{base}.at0"))?;
        let r_k = kv.f64_opt(&format!("{base}.R"))?.unwrap_or(radius);
        let profile =
            Profile::parse(&base, &expr, m, r_k, at0, true).map_err(|e| ConfigError::Bad {
                path: path.to_string(),
                msg: e.to_string(),
            })?;
        profiles.push(profile);
    }
    kv.finish()?;
    let family = DegeneracyFamily::new(m, p, n, profiles).map_err(|e| ConfigError::Bad {
        path: path.to_string(),
        msg: e.to_string(),
    })?;
    Ok((family, echo))
}

/// Loads a matrix declaration with entries keyed `a[k][j] = "expr"`.
pub fn load_matrix(path: &str) -> Result<(GrushinMatrix, Value), ConfigError> {
    let mut kv = KvMap::from_file(path)?;
    let echo = kv.echo();
    let n = kv.usize_req("n")?;
    let m = kv.usize_req("m")?;
    let p = kv.usize_req("p")?;
    let mut matrix = GrushinMatrix::new(n, m, p).map_err(|e| ConfigError::Bad {
        path: path.to_string(),
        msg: e.to_string(),
    })?;
    let entries = kv.take_matching(|k| k.starts_with("a["));
    for (key, value) in entries {
        let (k, j) = parse_entry_key(&key, "a").ok_or_else(|| ConfigError::BadValue {
            path: path.to_string(),
            key: key.clone(),
            msg: "expected a[k][j]".into(),
        })?;
        matrix
            .mat
            .set_parse(k, j, &value)
            .map_err(|e| ConfigError::BadValue {
                path: path.to_string(),
                key,
                msg: e.to_string(),
            })?;
    }
    kv.finish()?;
    Ok((matrix, echo))
}

/// Loads a candidate decomposition: vectors `x[k][i] = "c1, c2, ..."`
/// (components in order) and an optional block `q[i][j] = "expr"`.
pub fn load_sos(
    path: &str,
    n: usize,
    p: usize,
) -> Result<(SosDecomposition, Value), ConfigError> {
    let mut kv = KvMap::from_file(path)?;
    let echo = kv.echo();
    let vars = VarSet::spatial(n);
    let mut vectors = Vec::new();
    let vecs = kv.take_matching(|k| k.starts_with("x["));
    for (key, value) in vecs {
        let (k, _i) = parse_entry_key(&key, "x").ok_or_else(|| ConfigError::BadValue {
            path: path.to_string(),
            key: key.clone(),
            msg: "expected x[k][i]".into(),
        })?;
        let mut comps = Vec::new();
        for part in value.split(',') {
            let e = crate::expr::parse(part.trim(), &vars).map_err(|e| ConfigError::BadValue {
                path: path.to_string(),
                key: key.clone(),
                msg: e.to_string(),
            })?;
            comps.push(e);
        }
        vectors.push((k, comps));
    }
    let qsize = n + 1 - p;
    let qp = if qsize > 0 {
        let mut q = SymbolicMatrix::zero(qsize, n);
        let mut any = false;
        for (key, value) in kv.take_matching(|k| k.starts_with("q[")) {
            let (i, j) = parse_entry_key(&key, "q").ok_or_else(|| ConfigError::BadValue {
                path: path.to_string(),
                key: key.clone(),
                msg: "expected q[i][j]".into(),
            })?;
            q.set_parse(i, j, &value)
                .map_err(|e| ConfigError::BadValue {
                    path: path.to_string(),
                    key,
                    msg: e.to_string(),
                })?;
            any = true;
        }
        if !any {
            return Err(ConfigError::MissingKey {
                path: path.to_string(),
                key: "q[1][1]".into(),
            });
        }
        Some(q)
    } else {
        None
    };
    kv.finish()?;
    Ok((SosDecomposition { vectors, qp }, echo))
}

fn parse_entry_key(key: &str, prefix: &str) -> Option<(usize, usize)> {
    let rest = key.strip_prefix(prefix)?;
    let rest = rest.strip_prefix('[')?;
    let (a, rest) = rest.split_once(']')?;
    let rest = rest.strip_prefix('[')?;
    let b = rest.strip_suffix(']')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Parses a sweep spec `lo:hi:COUNT` or `lo:hi:COUNTlog`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:count, got `{spec}`"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("bad lo `{}`", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("bad hi `{}`", parts[1]))?;
    let (count_str, log) = match parts[2].strip_suffix("log") {
        Some(c) => (c, true),
        None => (parts[2], false),
    };
    let count: usize = count_str
        .parse()
        .map_err(|_| format!("bad count `{count_str}`"))?;
    if count < 2 || !(hi > lo) {
        return Err(format!("need hi > lo and count >= 2 in `{spec}`"));
    }
    if log {
        if !(lo > 0.0) {
            return Err("log spacing needs lo > 0".into());
        }
        Ok((0..count)
            .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
            .collect())
    } else {
        Ok((0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect())
    }
}
