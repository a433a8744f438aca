//! Scenario files: JSON with expression-valued numbers and `--set`
//! overrides applied before typed decoding.

use affine_levy::generating::{
    build_example_3d, default_b_grid, default_x_grid, dense_b_grid, DriftSpec, GeneratingPair,
};
use affine_levy::measure::LevyMeasure1D;
use affine_levy::model::{GFunction, LevyModel, ThreeDParams};
use affine_levy::pricing::{DEFAULT_TOL, DEFAULT_V_MAX};
use affine_levy::regvar::ScalingRelationEvidence;
use affine_levy::simulate::PathConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::expr;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("bad override {0:?}: {1}")]
    Override(String, String),
    #[error("schema violation: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Validate,
    Canonicalize,
    Classify2d,
    Price,
    Hjm,
    Simulate,
    Martingale,
    Regvar,
    Weyl,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Validate => "validate",
            Analysis::Canonicalize => "canonicalize",
            Analysis::Classify2d => "classify2d",
            Analysis::Price => "price",
            Analysis::Hjm => "hjm",
            Analysis::Simulate => "simulate",
            Analysis::Martingale => "martingale",
            Analysis::Regvar => "regvar",
            Analysis::Weyl => "weyl",
        }
    }
}

fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_hjm_v() -> Vec<f64> {
    (0..=20).map(|i| 0.5 * i as f64).collect()
}

fn default_hjm_x() -> Vec<f64> {
    (0..=10).map(|i| 0.1 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "default_x_grid")]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_b_grid")]
    pub b_grid: Vec<f64>,
    /// Exponent-fitting grid for canonical forms.
    #[serde(default = "dense_b_grid")]
    pub canonical_b_grid: Vec<f64>,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_hjm_v")]
    pub hjm_v: Vec<f64>,
    #[serde(default = "default_hjm_x")]
    pub hjm_x: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("grid defaults")
    }
}

// `deny_unknown_fields` does not combine with `flatten`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub x0: f64,
    #[serde(flatten)]
    pub paths: PathConfig,
}

fn default_maturities() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pricing {
    pub r0: f64,
    #[serde(default = "default_maturities")]
    pub maturities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Martingale {
    pub maturity: f64,
    pub checkpoints: Vec<f64>,
    /// Slope of the deliberately wrong `A(v) + slope v` control.
    #[serde(default = "default_bias")]
    pub control_bias: f64,
}

fn default_bias() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regvar {
    /// Measure to analyse; defaults to the projection measure `mu`.
    #[serde(default)]
    pub measure: Option<LevyMeasure1D>,
    #[serde(default)]
    pub scaling: Option<ScalingRelationEvidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weyl {
    pub p: f64,
    pub q: f64,
    pub x: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family3d {
    pub g3: GFunction,
    pub params: ThreeDParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Absent when `example_3d` builds the pair.
    #[serde(default)]
    pub model: Option<LevyModel>,
    #[serde(default)]
    pub gfun: Option<GFunction>,
    #[serde(default)]
    pub example_3d: Option<Family3d>,
    pub drift: DriftSpec,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub simulation: Option<Simulation>,
    #[serde(default)]
    pub pricing: Option<Pricing>,
    #[serde(default)]
    pub martingale: Option<Martingale>,
    #[serde(default)]
    pub regvar: Option<Regvar>,
    #[serde(default)]
    pub weyl: Option<Weyl>,
    pub analyses: Vec<Analysis>,
}

/// Replaces expression strings by their values, except under free-text keys.
pub fn evaluate_expressions(v: &mut Value) {
    match v {
        Value::String(s) => {
            if let Ok(x) = expr::eval(s) {
                // Integral values stay integers so counts and seeds decode.
                if x.fract() == 0.0 && x.abs() < 2f64.powi(53) {
                    *v = Value::from(x as i64);
                } else if let Some(n) = serde_json::Number::from_f64(x) {
                    *v = Value::Number(n);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(evaluate_expressions),
        Value::Object(m) => {
            for (k, val) in m.iter_mut() {
                if k != "name" && k != "description" {
                    evaluate_expressions(val);
                }
            }
        }
        _ => {}
    }
}

/// Applies `path.to.key=value`; numeric segments index arrays. The value is
/// read as JSON when possible, as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), SchemaError> {
    let err = |m: &str| SchemaError::Override(assignment.to_string(), m.to_string());
    let (path, raw) = assignment.split_once('=').ok_or_else(|| err("expected key=value"))?;
    if path.is_empty() {
        return Err(err("empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(m) => {
                if last {
                    m.insert(part.to_string(), value);
                    return Ok(());
                }
                m.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| err("array segment must be an index"))?;
                let slot = a.get_mut(idx).ok_or_else(|| err("array index out of range"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(err("path runs through a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

impl Scenario {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, SchemaError> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn from_value(mut v: Value) -> Result<Self, SchemaError> {
        evaluate_expressions(&mut v);
        let s: Scenario = serde_json::from_value(v).map_err(|e| SchemaError::Schema(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    /// Canonical JSON form; parsing it yields an equal scenario.
    pub fn normalized(&self) -> Value {
        serde_json::to_value(self).expect("scenario serializes")
    }

    /// Requested analyses plus their prerequisites, in execution order.
    pub fn plan(&self) -> Vec<Analysis> {
        let mut set: Vec<Analysis> = self.analyses.clone();
        let add = |a: Analysis, set: &mut Vec<Analysis>| {
            if !set.contains(&a) {
                set.push(a);
            }
        };
        let snapshot = set.clone();
        for a in snapshot {
            match a {
                Analysis::Martingale => {
                    add(Analysis::Price, &mut set);
                    add(Analysis::Simulate, &mut set);
                }
                Analysis::Hjm => add(Analysis::Price, &mut set),
                _ => {}
            }
        }
        set.sort();
        set.dedup();
        set
    }

    fn check(&self) -> Result<(), SchemaError> {
        let bad = |m: String| Err(SchemaError::Schema(m));
        match (&self.model, &self.gfun, &self.example_3d) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => return bad("give either `model` and `gfun`, or `example_3d`".into()),
        }
        if self.analyses.is_empty() {
            return bad("no analyses requested".into());
        }
        let plan = self.plan();
        let needs = |a: Analysis| plan.contains(&a);
        if needs(Analysis::Simulate) {
            match &self.simulation {
                None => return bad("`simulate` needs a `simulation` section".into()),
                Some(s) => {
                    s.paths.validate().map_err(|e| SchemaError::Schema(e.to_string()))?;
                    if !(s.x0 >= 0.0) {
                        return bad("simulation.x0 must be nonnegative".into());
                    }
                }
            }
        }
        if needs(Analysis::Price) && self.pricing.is_none() {
            return bad("`price` needs a `pricing` section".into());
        }
        if let Some(p) = &self.pricing {
            if p.maturities.iter().any(|&m| !(m >= 0.0 && m <= self.grids.v_max)) {
                return bad("pricing maturities must lie in [0, grids.v_max]".into());
            }
        }
        if needs(Analysis::Martingale) {
            let Some(m) = &self.martingale else {
                return bad("`martingale` needs a `martingale` section".into());
            };
            let sim = self.simulation.as_ref().expect("checked above");
            let cfg = sim.paths;
            if !(m.maturity >= cfg.horizon && m.maturity <= self.grids.v_max) {
                return bad("martingale maturity must lie in [simulation.horizon, grids.v_max]".into());
            }
            let step = cfg.horizon / cfg.n_steps() as f64 * cfg.record_stride as f64;
            for &t in &m.checkpoints {
                let k = t / step;
                let on_grid = (k - k.round()).abs() < 1e-9 || (t - cfg.horizon).abs() < 1e-12;
                if !(t >= 0.0 && t <= cfg.horizon) || !on_grid {
                    return bad(format!("martingale checkpoint {t} is not a recorded time"));
                }
            }
        }
        if needs(Analysis::Weyl) && self.weyl.is_none() {
            return bad("`weyl` needs a `weyl` section".into());
        }
        let g = &self.grids;
        if g.x_grid.len() < 3 || g.b_grid.len() < 2 || g.canonical_b_grid.len() < 4 {
            return bad("grids too small".into());
        }
        if !(g.v_max > 0.0 && g.tol > 0.0) {
            return bad("grids.v_max and grids.tol must be positive".into());
        }
        let pair = self.pair().map_err(|e| SchemaError::Schema(e.to_string()))?;
        if needs(Analysis::Classify2d) && pair.model.dim() != 2 {
            return bad("`classify2d` needs a two-dimensional model".into());
        }
        Ok(())
    }

    pub fn pair(&self) -> affine_levy::Result<GeneratingPair> {
        match (&self.model, &self.gfun, &self.example_3d) {
            (Some(m), Some(g), _) => GeneratingPair::new(m.clone(), g.clone(), self.drift),
            (_, _, Some(f)) => build_example_3d(f.g3.clone(), f.params, self.drift),
            _ => Err(affine_levy::Error::InvalidInput(
                "scenario has no generating pair".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let mut v: Value = serde_json::from_str(r#"{"a":{"b":[1,2]},"c":1}"#).unwrap();
        apply_override(&mut v, "a.b.1=5").unwrap();
        apply_override(&mut v, "c=2^2").unwrap();
        apply_override(&mut v, "d.e=true").unwrap();
        evaluate_expressions(&mut v);
        assert_eq!(v, serde_json::json!({"a":{"b":[1,5]},"c":4,"d":{"e":true}}));
        assert!(apply_override(&mut v, "a.b.9=1").is_err());
        assert!(apply_override(&mut v, "c.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
    }

    #[test]
    fn names_are_not_evaluated() {
        let mut v = serde_json::json!({"name": "pi", "x": "pi", "kind": "finite"});
        evaluate_expressions(&mut v);
        assert_eq!(v["name"], "pi");
        assert_eq!(v["x"], std::f64::consts::PI);
        assert_eq!(v["kind"], "finite");
    }
}
