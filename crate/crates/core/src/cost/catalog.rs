//! Cost catalog files: network profile, tunable constants and statistics.

use std::collections::BTreeMap;
use std::path::Path;

use num_traits::Float;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::fir::rules::{ForeignKey, RuleContext};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("cannot read catalog `{path}`: {message}")]
    Io { path: String, message: String },
}

fn field_err(path: &str, message: impl Into<String>) -> CatalogError {
    CatalogError::Field {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Network<S> {
    /// Round-trip time per request, seconds.
    pub nrt: S,
    /// Bytes per second; positive.
    pub bandwidth: S,
}

/// Named network profiles selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkProfile {
    SlowRemote,
    FastLocal,
    Custom,
}

impl NetworkProfile {
    pub fn parse(s: &str) -> Option<NetworkProfile> {
        match s {
            "slow-remote" => Some(NetworkProfile::SlowRemote),
            "fast-local" => Some(NetworkProfile::FastLocal),
            "custom" => Some(NetworkProfile::Custom),
            _ => None,
        }
    }

    /// `None` for `Custom`, which keeps the catalog's own values.
    pub fn network<S: Float>(self) -> Option<Network<S>> {
        let (nrt, bw) = match self {
            NetworkProfile::SlowRemote => (0.5, 62_500.0),
            NetworkProfile::FastLocal => (0.0005, 750_000_000.0),
            NetworkProfile::Custom => return None,
        };
        Some(Network {
            nrt: S::from(nrt).unwrap(),
            bandwidth: S::from(bw).unwrap(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants<S> {
    /// Cost of one imperative statement.
    pub cz: S,
    /// Cost of one F-IR operator.
    pub cy: S,
    pub default_iters: S,
    pub default_prob: S,
    /// Server time to first row: `server_first + server_per_input_row * input rows`.
    pub server_first: S,
    pub server_per_input_row: S,
    /// Server time from first to last row, per result row.
    pub server_per_output_row: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostCatalog<S> {
    pub network: Network<S>,
    pub constants: Constants<S>,
    /// Amortization factor per query fingerprint; at least 1, possibly infinite.
    pub amortization: BTreeMap<String, S>,
    /// Overrides every per-query factor when set.
    pub global_af: Option<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationStats<S> {
    pub card: S,
    pub row_bytes: S,
    pub distinct: BTreeMap<String, S>,
    /// Column order; also the schema handed to the rewrite rules.
    pub columns: Vec<String>,
    /// Column widths in bytes; unlisted columns share the rest of `row_bytes`.
    pub widths: BTreeMap<String, S>,
    /// Referencing column to `(relation, column)`.
    pub fk: BTreeMap<String, (String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryOverride<S> {
    pub cqf: Option<S>,
    pub cql: Option<S>,
    pub nq: Option<S>,
    pub srow: Option<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryStats<S> {
    pub relations: BTreeMap<String, RelationStats<S>>,
    /// Keyed by query fingerprint.
    pub overrides: BTreeMap<String, QueryOverride<S>>,
    /// Selectivity keyed by the SQL text of a predicate.
    pub selectivities: BTreeMap<String, S>,
    /// Selectivity of predicates with no better estimate.
    pub default_selectivity: S,
}

impl<S: Float> Default for Constants<S> {
    fn default() -> Self {
        let c = |x: f64| S::from(x).unwrap();
        Constants {
            cz: c(30e-9),
            cy: c(30e-9),
            default_iters: c(1000.0),
            default_prob: c(0.5),
            server_first: c(1e-3),
            server_per_input_row: c(0.1e-6),
            server_per_output_row: c(0.05e-6),
        }
    }
}

impl<S: Float> Default for CostCatalog<S> {
    fn default() -> Self {
        CostCatalog {
            network: NetworkProfile::SlowRemote.network().unwrap(),
            constants: Constants::default(),
            amortization: BTreeMap::new(),
            global_af: None,
        }
    }
}

impl<S: Float> Default for QueryStats<S> {
    fn default() -> Self {
        QueryStats {
            relations: BTreeMap::new(),
            overrides: BTreeMap::new(),
            selectivities: BTreeMap::new(),
            default_selectivity: S::from(0.1).unwrap(),
        }
    }
}

impl<S: Float> RelationStats<S> {
    /// Width of `column`: its listed width, else an even share of the
    /// bytes not claimed by listed columns.
    pub fn width(&self, column: &str) -> S {
        if let Some(w) = self.widths.get(column) {
            return *w;
        }
        let listed = self.widths.values().fold(S::zero(), |a, b| a + *b);
        let rest = self.columns.len().saturating_sub(self.widths.len());
        if rest == 0 {
            return S::zero();
        }
        ((self.row_bytes - listed) / S::from(rest).unwrap()).max(S::zero())
    }
}

impl<S: Float> QueryStats<S> {
    /// Schema and foreign keys for the rewrite rules.
    pub fn rule_context(&self, legacy: bool) -> RuleContext {
        let mut ctx = RuleContext {
            legacy,
            ..RuleContext::default()
        };
        for (name, rel) in &self.relations {
            if !rel.columns.is_empty() {
                ctx.columns.insert(name.clone(), rel.columns.clone());
            }
            for (col, (r, c)) in &rel.fk {
                ctx.foreign_keys.push(ForeignKey {
                    relation: name.clone(),
                    column: col.clone(),
                    ref_relation: r.clone(),
                    ref_column: c.clone(),
                });
            }
        }
        ctx
    }
}

/// Reads a catalog file. Absent fields take defaults, each logged as a warning.
pub fn load_catalog<S: Float>(path: &Path) -> Result<(CostCatalog<S>, QueryStats<S>), CatalogError> {
    let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_catalog(&text)
}

/// Parses catalog JSON text; empty text is an empty catalog.
pub fn parse_catalog<S: Float>(text: &str) -> Result<(CostCatalog<S>, QueryStats<S>), CatalogError> {
    let json: Json = if text.trim().is_empty() {
        Json::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| field_err("$", e.to_string()))?
    };
    let root = object(&json, "$")?;
    let mut cat = CostCatalog::<S>::default();
    let mut stats = QueryStats::<S>::default();
    let empty = Json::Object(Map::new());

    let net = object(root.get("network").unwrap_or(&empty), "network")?;
    let nrt = match (net.get("nrt_s"), net.get("latency_s")) {
        (Some(v), _) => Some(number(v, "network.nrt_s")?),
        (None, Some(v)) => {
            let factor = match net.get("rtt_factor") {
                Some(f) => number(f, "network.rtt_factor")?,
                None => 2.0,
            };
            Some(number(v, "network.latency_s")? * factor)
        }
        (None, None) => None,
    };
    let nrt = nrt.map(|x| S::from(x).unwrap());
    cat.network.nrt = or_default(nrt, cat.network.nrt, "network.nrt_s");
    cat.network.bandwidth = or_default(opt_number(net, "bandwidth_Bps", "network")?, cat.network.bandwidth, "network.bandwidth_Bps");
    if cat.network.bandwidth <= S::zero() {
        return Err(field_err("network.bandwidth_Bps", "must be positive"));
    }
    non_negative(cat.network.nrt, "network.nrt_s")?;

    let k = object(root.get("constants").unwrap_or(&empty), "constants")?;
    let c = &mut cat.constants;
    for (key, slot) in [
        ("cz_s", &mut c.cz),
        ("cy_s", &mut c.cy),
        ("default_iters", &mut c.default_iters),
        ("default_prob", &mut c.default_prob),
        ("default_selectivity", &mut stats.default_selectivity),
        ("server_first_s", &mut c.server_first),
        ("server_per_input_row_s", &mut c.server_per_input_row),
        ("server_per_output_row_s", &mut c.server_per_output_row),
    ] {
        let path = format!("constants.{key}");
        *slot = or_default(opt_number(k, key, "constants")?, *slot, &path);
        non_negative(*slot, &path)?;
    }
    for (key, v) in [("default_prob", c.default_prob), ("default_selectivity", stats.default_selectivity)] {
        if v > S::one() {
            return Err(field_err(&format!("constants.{key}"), "must be at most 1"));
        }
    }

    match root.get("relations") {
        None => log::warn!("catalog: `relations` absent; no statistics"),
        Some(rels) => {
            for (name, r) in object(rels, "relations")? {
                let path = format!("relations.{name}");
                stats.relations.insert(name.clone(), relation(r, &path)?);
            }
        }
    }

    if let Some(ovs) = root.get("query_overrides") {
        let arr = ovs
            .as_array()
            .ok_or_else(|| field_err("query_overrides", "expected an array"))?;
        for (i, o) in arr.iter().enumerate() {
            let path = format!("query_overrides[{i}]");
            let obj = object(o, &path)?;
            let fp = obj
                .get("fingerprint")
                .and_then(Json::as_str)
                .ok_or_else(|| field_err(&format!("{path}.fingerprint"), "expected a string"))?;
            let ov = QueryOverride {
                cqf: opt_number(obj, "cqf_s", &path)?,
                cql: opt_number(obj, "cql_s", &path)?,
                nq: opt_number(obj, "nq", &path)?,
                srow: opt_number(obj, "srow_bytes", &path)?,
            };
            for (key, v) in [("cqf_s", ov.cqf), ("cql_s", ov.cql), ("nq", ov.nq), ("srow_bytes", ov.srow)] {
                if let Some(v) = v {
                    non_negative(v, &format!("{path}.{key}"))?;
                }
            }
            if let (Some(f), Some(l)) = (ov.cqf, ov.cql) {
                if l < f {
                    return Err(field_err(&format!("{path}.cql_s"), "must be at least cqf_s"));
                }
            }
            stats.overrides.insert(fp.to_string(), ov);
        }
    }

    if let Some(sel) = root.get("selectivities") {
        for (pred, v) in object(sel, "selectivities")? {
            let path = format!("selectivities.{pred}");
            let s = S::from(number(v, &path)?).unwrap();
            if s < S::zero() || s > S::one() {
                return Err(field_err(&path, "must lie in [0, 1]"));
            }
            stats.selectivities.insert(pred.clone(), s);
        }
    }

    if let Some(am) = root.get("amortization") {
        for (fp, v) in object(am, "amortization")? {
            let path = format!("amortization.{fp}");
            let af = parse_af::<S>(v).map_err(|m| field_err(&path, m))?;
            cat.amortization.insert(fp.clone(), af);
        }
    }
    Ok((cat, stats))
}

/// An amortization factor: a number at least 1, or `"inf"`.
pub fn parse_af<S: Float>(v: &Json) -> Result<S, String> {
    let af = match v {
        Json::String(s) => parse_af_text(s)?,
        Json::Number(n) => S::from(n.as_f64().unwrap_or(f64::NAN)).unwrap(),
        _ => return Err("expected a number or \"inf\"".into()),
    };
    if af.is_nan() || af < S::one() {
        return Err("amortization factor must be at least 1".into());
    }
    Ok(af)
}

pub fn parse_af_text<S: Float>(s: &str) -> Result<S, String> {
    if s == "inf" {
        return Ok(S::infinity());
    }
    s.parse::<f64>()
        .map(|x| S::from(x).unwrap())
        .map_err(|_| format!("`{s}` is not a number or \"inf\""))
}

fn relation<S: Float>(r: &Json, path: &str) -> Result<RelationStats<S>, CatalogError> {
    let obj = object(r, path)?;
    let card = or_default(opt_number(obj, "card", path)?, S::from(1000.0).unwrap(), &format!("{path}.card"));
    let row_bytes = or_default(opt_number(obj, "row_bytes", path)?, S::from(100.0).unwrap(), &format!("{path}.row_bytes"));
    non_negative(card, &format!("{path}.card"))?;
    non_negative(row_bytes, &format!("{path}.row_bytes"))?;
    let mut rel = RelationStats {
        card,
        row_bytes,
        distinct: BTreeMap::new(),
        columns: Vec::new(),
        widths: BTreeMap::new(),
        fk: BTreeMap::new(),
    };
    if let Some(d) = obj.get("distinct") {
        for (col, v) in object(d, &format!("{path}.distinct"))? {
            let p = format!("{path}.distinct.{col}");
            let n = S::from(number(v, &p)?).unwrap();
            non_negative(n, &p)?;
            rel.distinct.insert(col.clone(), n);
        }
    }
    if let Some(w) = obj.get("widths") {
        for (col, v) in object(w, &format!("{path}.widths"))? {
            let p = format!("{path}.widths.{col}");
            let n = S::from(number(v, &p)?).unwrap();
            non_negative(n, &p)?;
            rel.widths.insert(col.clone(), n);
        }
    }
    if let Some(cols) = obj.get("columns") {
        let p = format!("{path}.columns");
        let arr = cols.as_array().ok_or_else(|| field_err(&p, "expected an array"))?;
        for c in arr {
            rel.columns
                .push(c.as_str().ok_or_else(|| field_err(&p, "column names must be strings"))?.to_string());
        }
    }
    if let Some(fk) = obj.get("fk") {
        for (col, v) in object(fk, &format!("{path}.fk"))? {
            let p = format!("{path}.fk.{col}");
            let target = v.as_str().ok_or_else(|| field_err(&p, "expected \"relation.column\""))?;
            let (r, c) = target
                .split_once('.')
                .ok_or_else(|| field_err(&p, "expected \"relation.column\""))?;
            rel.fk.insert(col.clone(), (r.to_string(), c.to_string()));
        }
    }
    Ok(rel)
}

fn object<'a>(j: &'a Json, path: &str) -> Result<&'a Map<String, Json>, CatalogError> {
    j.as_object().ok_or_else(|| field_err(path, "expected an object"))
}

fn number(j: &Json, path: &str) -> Result<f64, CatalogError> {
    j.as_f64().ok_or_else(|| field_err(path, "expected a number"))
}

fn opt_number<S: Float>(obj: &Map<String, Json>, key: &str, path: &str) -> Result<Option<S>, CatalogError> {
    obj.get(key)
        .map(|v| number(v, &format!("{path}.{key}")).map(|x| S::from(x).unwrap()))
        .transpose()
}

fn or_default<S: Float>(v: Option<S>, default: S, path: &str) -> S {
    v.unwrap_or_else(|| {
        log::warn!("catalog: `{path}` absent; using {}", default.to_f64().unwrap_or(f64::NAN));
        default
    })
}

fn non_negative<S: Float>(v: S, path: &str) -> Result<(), CatalogError> {
    if v.is_nan() || v < S::zero() {
        return Err(field_err(path, "must be a non-negative number"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let (cat, stats) = parse_catalog::<f64>("").unwrap();
        assert_eq!(cat, CostCatalog::default());
        assert!(stats.relations.is_empty());
    }

    #[test]
    fn one_way_latency_doubles() {
        let (cat, _) = parse_catalog::<f64>(r#"{"network": {"latency_s": 0.25, "bandwidth_Bps": 62500}}"#).unwrap();
        assert_eq!(cat.network.nrt, 0.5);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_catalog::<f64>(r#"{"network": {"bandwidth_Bps": 0}}"#).unwrap_err();
        assert_eq!(e.to_string(), "network.bandwidth_Bps: must be positive");
        let e = parse_catalog::<f64>(r#"{"amortization": {"ab": 0.5}}"#).unwrap_err();
        assert!(e.to_string().starts_with("amortization.ab:"));
        let e = parse_catalog::<f64>(r#"{"relations": {"r": {"card": "x"}}}"#).unwrap_err();
        assert_eq!(e.to_string(), "relations.r.card: expected a number");
    }

    #[test]
    fn infinite_amortization() {
        let (cat, _) = parse_catalog::<f32>(r#"{"amortization": {"ab": "inf"}}"#).unwrap();
        assert!(cat.amortization["ab"].is_infinite());
    }

    #[test]
    fn widths_share_the_remainder() {
        let (_, stats) = parse_catalog::<f64>(
            r#"{"relations": {"r": {"card": 1, "row_bytes": 100, "columns": ["a", "b", "c"], "widths": {"a": 40}}}}"#,
        )
        .unwrap();
        let r = &stats.relations["r"];
        assert_eq!(r.width("a"), 40.0);
        assert_eq!(r.width("b"), 30.0);
    }
}
