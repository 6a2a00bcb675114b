//! Experiment configuration: dotted keys with defaults, TOML files and
//! environment overrides.

use crate::amplitude::{ConeCutoff, EnergyWindow};
use crate::error::{LabError, Result};
use crate::grid::GridGeom;
use crate::lab::{default_panel, IdentKind, LabSetup, WavePacket};
use crate::potential::{make_family, PotentialFamily};
use crate::psdo::EngineOptions;
use crate::quadrature::RayQuadratureParams;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::path::Path;
use toml::Value;

pub const ENV_PREFIX: &str = "LRDIRAC_";

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn defaults() -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    put("grid.n", Value::Integer(32));
    put("grid.box", Value::Float(40.0));
    put("grid.center", floats(&[0.0; 3]));
    put("mass", Value::Float(1.0));
    put("window.delta_lo", Value::Float(1.2));
    put("window.delta_hi", Value::Float(2.0));
    put("window.ramp", Value::Float(0.3));
    put("cutoff.nu", Value::Float(0.0));
    put("cutoff.r0", Value::Float(1.0));
    put("cutoff.r1", Value::Float(2.0));
    put("cutoff.omega_halfwidth", Value::Float(0.2));
    put("cutoff.omega_offset", Value::Float(0.0));
    put("potential.family", Value::String("relax".into()));
    put("potential.rho", Value::Float(0.9));
    put("potential.kappa", Value::Float(0.2));
    put("potential.h", Value::Float(10.0));
    put("potential.extra", Value::String("default".into()));
    put("eikonal.terms", Value::Integer(0));
    put("eikonal.nodes", Value::Integer(16));
    put("eikonal.growth", Value::Float(2.0));
    put("eikonal.first_panel", Value::Float(0.5));
    put("eikonal.t_max", Value::Float(1e4));
    put("eikonal.tail_tol", Value::Float(1e-8));
    put("eikonal.table_step", Value::Float(0.2));
    put("engine.prune_tol", Value::Float(0.0));
    put("engine.tile", Value::Integer(512));
    put("engine.cache_mb", Value::Integer(256));
    put("evolve.dt", Value::Float(0.05));
    put("evolve.t", Value::Float(20.0));
    put("packet.zeta0", floats(&[1.2, 0.0, 0.0]));
    put("packet.sigma", Value::Float(0.12));
    put("packet.center", floats(&[0.0; 3]));
    put("packet.component", Value::Integer(0));
    put("packet.panel", Value::Integer(1));
    put("experiment.identification", Value::String("full".into()));
    put("experiment.compare", Value::String("phase-p0".into()));
    put("experiment.factor", Value::Float(1.0 / 3.0));
    put("ladder.t", floats(&[5.0, 10.0, 20.0, 40.0]));
    put("ladder.h", floats(&[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0]));
    put("phase.radii", floats(&[1e3, 1e7]));
    put("residual.radii", floats(&[10.0, 1000.0]));
    put("residual.count", Value::Integer(8));
    put("checks.samples", Value::Integer(50));
    put("seed", Value::Integer(1));
    put("output.dir", Value::String("out".into()));
    m
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Parses a bare TOML value; anything unparsable is taken as a string.
fn parse_scalar(raw: &str) -> Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Fully resolved configuration: every known key has a value.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, Value>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { values: defaults() }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::config("<file>", e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &Value::Table(table), &mut flat);
        let mut cfg = ExperimentConfig::default();
        for (k, v) in flat {
            cfg.insert(&k, v)?;
        }
        Ok(cfg)
    }

    /// Defaults, then the file (if any), then `LRDIRAC_*` variables, then explicit overrides.
    pub fn load<I>(path: Option<&Path>, env: I, overrides: &[(String, String)]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| LabError::config("--config", format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml_str(&text)?
            }
            None => Self::default(),
        };
        let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        for (k, v) in env {
            let key = k[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
            cfg.set(&key, &v)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    fn insert(&mut self, key: &str, v: Value) -> Result<()> {
        match self.values.get(key) {
            None => Err(LabError::config(key, "unknown configuration key")),
            Some(old) => {
                let ok = matches!(
                    (old, &v),
                    (Value::Float(_), Value::Float(_) | Value::Integer(_))
                        | (Value::Integer(_), Value::Integer(_))
                        | (Value::String(_), Value::String(_))
                        | (Value::Array(_), Value::Array(_))
                ) || (key == "grid.n" && matches!(v, Value::Array(_)))
                    || (key == "grid.box" && matches!(v, Value::Array(_)))
                    || (key == "potential.extra" && matches!(v, Value::Float(_) | Value::Integer(_)));
                if !ok {
                    return Err(LabError::config(key, format!("expected a value like {old}, got {v}")));
                }
                let v = match (old, v) {
                    (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
                    (_, v) => v,
                };
                self.values.insert(key.to_string(), v);
                Ok(())
            }
        }
    }

    /// Sets a key from its textual form (TOML syntax, bare strings allowed).
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        self.insert(key, parse_scalar(raw.trim()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.values.keys()
    }

    pub fn value(&self, key: &str) -> Result<&Value> {
        self.values.get(key).ok_or_else(|| LabError::config(key, "missing key"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.value(key)? {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            v => Err(LabError::config(key, format!("expected a number, got {v}"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        match self.value(key)? {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            v => Err(LabError::config(key, format!("expected a non-negative integer, got {v}"))),
        }
    }

    pub fn string(&self, key: &str) -> Result<String> {
        match self.value(key)? {
            Value::String(s) => Ok(s.clone()),
            v => Err(LabError::config(key, format!("expected a string, got {v}"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        match self.value(key)? {
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    v => Err(LabError::config(key, format!("expected numbers, got {v}"))),
                })
                .collect(),
            Value::Float(f) => Ok(vec![*f]),
            Value::Integer(i) => Ok(vec![*i as f64]),
            v => Err(LabError::config(key, format!("expected a list of numbers, got {v}"))),
        }
    }

    fn vec3(&self, key: &str) -> Result<[f64; 3]> {
        let v = self.f64_list(key)?;
        match v.len() {
            1 => Ok([v[0]; 3]),
            3 => Ok([v[0], v[1], v[2]]),
            n => Err(LabError::config(key, format!("expected 1 or 3 numbers, got {n}"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.usize("seed")? as u64)
    }

    pub fn output_dir(&self) -> Result<String> {
        self.string("output.dir")
    }

    pub fn geom(&self) -> Result<GridGeom> {
        let n = self.vec3("grid.n")?;
        if n.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(LabError::config("grid.n", "grid sizes must be positive integers"));
        }
        GridGeom::new([n[0] as usize, n[1] as usize, n[2] as usize], self.vec3("grid.box")?, self.vec3("grid.center")?)
    }

    pub fn mass(&self) -> Result<f64> {
        let m = self.f64("mass")?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(LabError::config("mass", "mass must be positive"));
        }
        Ok(m)
    }

    pub fn window(&self) -> Result<EnergyWindow> {
        EnergyWindow::new(self.f64("window.delta_lo")?, self.f64("window.delta_hi")?, self.f64("window.ramp")?, self.mass()?)
    }

    pub fn cone(&self) -> Result<ConeCutoff> {
        let c = ConeCutoff {
            nu: self.f64("cutoff.nu")?,
            r0: self.f64("cutoff.r0")?,
            r1: self.f64("cutoff.r1")?,
            omega_halfwidth: self.f64("cutoff.omega_halfwidth")?,
            omega_offset: self.f64("cutoff.omega_offset")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn family(&self) -> Result<PotentialFamily> {
        let extra = match self.value("potential.extra")? {
            Value::String(s) if s == "default" => None,
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            v => return Err(LabError::config("potential.extra", format!("expected a number or \"default\", got {v}"))),
        };
        make_family(
            &self.string("potential.family")?,
            self.f64("potential.rho")?,
            self.f64("potential.kappa")?,
            self.f64("potential.h")?,
            extra,
        )
    }

    pub fn quad(&self) -> Result<RayQuadratureParams> {
        let nodes = self.usize("eikonal.nodes")?;
        if nodes == 0 {
            return Err(LabError::config("eikonal.nodes", "need at least one node"));
        }
        Ok(RayQuadratureParams {
            nodes,
            growth: self.f64("eikonal.growth")?,
            first_panel: self.f64("eikonal.first_panel")?,
            t_max: self.f64("eikonal.t_max")?,
            tail_tol: self.f64("eikonal.tail_tol")?,
            ..RayQuadratureParams::default()
        })
    }

    pub fn engine(&self) -> Result<EngineOptions> {
        let tile = self.usize("engine.tile")?;
        if tile == 0 {
            return Err(LabError::config("engine.tile", "tile must be positive"));
        }
        let prune_tol = self.f64("engine.prune_tol")?;
        if !(0.0..1.0).contains(&prune_tol) {
            return Err(LabError::config("engine.prune_tol", "prune_tol must lie in [0, 1)"));
        }
        Ok(EngineOptions {
            tile,
            prune_tol,
            table_step: self.f64("eikonal.table_step")?,
            cache_budget_bytes: self.usize("engine.cache_mb")? << 20,
        })
    }

    pub fn terms(&self) -> Result<Option<usize>> {
        Ok(match self.usize("eikonal.terms")? {
            0 => None,
            n => Some(n),
        })
    }

    pub fn identification(&self, key: &str) -> Result<IdentKind> {
        self.string(key)?.parse().map_err(|e: String| LabError::config(key, e))
    }

    pub fn lab_setup(&self) -> Result<LabSetup> {
        let geom = self.geom()?;
        let window = self.window()?;
        window.check_nyquist(geom.nyquist())?;
        Ok(LabSetup {
            geom,
            mass: self.mass()?,
            window,
            cone: self.cone()?,
            quad: self.quad()?,
            engine: self.engine()?,
            dt: self.f64("evolve.dt")?,
            n_terms: self.terms()?,
        })
    }

    /// The configured packet, or the default panel when `packet.panel` > 1.
    pub fn packets(&self) -> Result<Vec<WavePacket>> {
        let sigma = self.f64("packet.sigma")?;
        let n = self.usize("packet.panel")?;
        if n == 0 {
            return Err(LabError::config("packet.panel", "panel must hold at least one packet"));
        }
        if n > 1 {
            let panel = default_panel(sigma);
            if n > panel.len() {
                return Err(LabError::config("packet.panel", format!("at most {} panel packets", panel.len())));
            }
            return Ok(panel.into_iter().take(n).collect());
        }
        let c = self.usize("packet.component")?;
        if c > 3 {
            return Err(LabError::config("packet.component", "component must be 0..=3"));
        }
        let mut p = WavePacket::new(self.vec3("packet.zeta0")?, sigma);
        p.polarization = [C64::new(0.0, 0.0); 4];
        p.polarization[c] = C64::new(1.0, 0.0);
        p.center = self.vec3("packet.center")?;
        Ok(vec![p])
    }

    /// Checks everything that can be checked without running an experiment.
    pub fn validate(&self) -> Result<()> {
        self.family()?;
        self.lab_setup()?;
        self.packets()?;
        self.identification("experiment.identification")?;
        self.identification("experiment.compare")?;
        for key in ["ladder.t", "ladder.h", "phase.radii", "residual.radii"] {
            let v = self.f64_list(key)?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(LabError::config(key, "values must be finite"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null)))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Flat `key = value` listing that `from_toml_str` reads back.
    pub fn to_toml_string(&self) -> String {
        let mut root = toml::Table::new();
        for (k, v) in &self.values {
            let mut parts: Vec<&str> = k.split('.').collect();
            let last = parts.pop().unwrap();
            let mut t = &mut root;
            for p in parts {
                t = t.entry(p.to_string()).or_insert_with(|| Value::Table(toml::Table::new())).as_table_mut().unwrap();
            }
            t.insert(last.to_string(), v.clone());
        }
        toml::to_string(&root).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.geom().unwrap().n, [32; 3]);
        assert_eq!(c.family().unwrap().rho, 0.9);
    }

    #[test]
    fn file_and_env_override() {
        let c = ExperimentConfig::load(
            None,
            vec![("LRDIRAC_POTENTIAL__RHO".to_string(), "0.75".to_string()), ("OTHER".into(), "x".into())],
            &[("grid.n".into(), "16".into())],
        )
        .unwrap();
        assert_eq!(c.f64("potential.rho").unwrap(), 0.75);
        assert_eq!(c.geom().unwrap().n, [16; 3]);
        let c = ExperimentConfig::from_toml_str("[potential]\nh = inf\nfamily = \"static\"\n[grid]\nn = [8, 8, 12]\n").unwrap();
        assert!(c.family().unwrap().h.is_infinite());
        assert_eq!(c.geom().unwrap().n, [8, 8, 12]);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_toml_str("[grid]\nsize = 3\n").unwrap_err();
        assert!(matches!(e, LabError::Config { ref key, .. } if key == "grid.size"));
        let e = ExperimentConfig::from_toml_str("mass = \"heavy\"\n").unwrap_err();
        assert!(matches!(e, LabError::Config { ref key, .. } if key == "mass"));
    }

    #[test]
    fn small_rho_rejected() {
        let mut c = ExperimentConfig::default();
        c.set("potential.rho", "0.2").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("rho must exceed 1/3"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn toml_roundtrip() {
        let mut c = ExperimentConfig::default();
        c.set("potential.h", "inf").unwrap();
        c.set("ladder.t", "[1, 2.5]").unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }
}
