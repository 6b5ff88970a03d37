use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cem::{ContextWeights, TrainConfig};
use crate::error::{Error, Result};
use crate::lexical::{Rm3Params, DEFAULT_MU};
use crate::synth::GenConfig;

/// The compared re-ranking methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// The initial ranker's own order.
    #[serde(rename = "PROD-proxy", alias = "PROD")]
    ProdProxy,
    #[serde(rename = "RAND")]
    Rand,
    #[serde(rename = "POP")]
    Pop,
    #[serde(rename = "QL")]
    Ql,
    #[serde(rename = "QEM")]
    Qem,
    #[serde(rename = "LCRM3")]
    Lcrm3,
    #[serde(rename = "LCEM")]
    Lcem,
    #[serde(rename = "SCRM3")]
    Scrm3,
    #[serde(rename = "SCEM")]
    Scem,
    #[serde(rename = "LSCEM")]
    Lscem,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::ProdProxy,
        Method::Rand,
        Method::Pop,
        Method::Ql,
        Method::Qem,
        Method::Lcrm3,
        Method::Lcem,
        Method::Scrm3,
        Method::Scem,
        Method::Lscem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProdProxy => "PROD-proxy",
            Method::Rand => "RAND",
            Method::Pop => "POP",
            Method::Ql => "QL",
            Method::Qem => "QEM",
            Method::Lcrm3 => "LCRM3",
            Method::Lcem => "LCEM",
            Method::Scrm3 => "SCRM3",
            Method::Scem => "SCEM",
            Method::Lscem => "LSCEM",
        }
    }

    /// Whether the method needs a trained checkpoint.
    pub fn is_embedding(self) -> bool {
        matches!(
            self,
            Method::Qem | Method::Lcem | Method::Scem | Method::Lscem
        )
    }

    /// Default `(λu, λc)` for embedding methods.
    pub fn default_weights(self) -> Option<ContextWeights> {
        let (u, c) = match self {
            Method::Qem => (0.0, 0.0),
            Method::Lcem => (1.0, 0.0),
            Method::Scem => (0.0, 1.0),
            Method::Lscem => (0.2, 0.8),
            _ => return None,
        };
        Some(ContextWeights {
            lambda_u: u,
            lambda_c: c,
        })
    }

    /// Default feedback weight for the RM3 variants.
    pub fn default_alpha(self) -> Option<f64> {
        match self {
            Method::Lcrm3 => Some(0.8),
            Method::Scrm3 => Some(1.0),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("PROD") {
            return Ok(Method::ProdProxy);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?}")))
    }
}

/// Per-method overrides; unset fields fall back to the method defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Report label; defaults to the method name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_expansion_terms: Option<usize>,
    /// Overrides the shared embedding size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(flatten)]
    pub params: MethodParams,
}

impl From<Method> for MethodSpec {
    fn from(method: Method) -> Self {
        Self {
            method,
            params: MethodParams::default(),
        }
    }
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.params
            .label
            .clone()
            .unwrap_or_else(|| self.method.name().to_string())
    }

    pub fn weights(&self) -> Result<Option<ContextWeights>> {
        let Some(default) = self.method.default_weights() else {
            return Ok(None);
        };
        let w = ContextWeights::new(
            self.params.lambda_u.unwrap_or(default.lambda_u),
            self.params.lambda_c.unwrap_or(default.lambda_c),
        )?;
        Ok(Some(w))
    }

    pub fn rm3_params(&self) -> Result<Option<Rm3Params>> {
        let Some(alpha) = self.method.default_alpha() else {
            return Ok(None);
        };
        let base = Rm3Params::default();
        let p = Rm3Params {
            alpha: self.params.alpha.unwrap_or(alpha),
            n_expansion_terms: self
                .params
                .n_expansion_terms
                .unwrap_or(base.n_expansion_terms),
            mu: self.params.mu.unwrap_or(base.mu),
        };
        p.validate()?;
        Ok(Some(p))
    }

    pub fn mu(&self) -> f64 {
        self.params.mu.unwrap_or(DEFAULT_MU)
    }

    /// The training configuration for this method.
    pub fn train_config(&self, shared: &TrainConfig) -> TrainConfig {
        let mut cfg = shared.clone();
        if let Some(dim) = self.params.dim {
            cfg.dim = dim;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.weights()?;
        self.rm3_params()?;
        if !(self.mu() > 0.0) {
            return Err(Error::Argument(format!(
                "{}: mu must be positive",
                self.label()
            )));
        }
        if self.params.dim == Some(0) {
            return Err(Error::Argument(format!(
                "{}: dim must be positive",
                self.label()
            )));
        }
        Ok(())
    }
}

/// Where the pipeline reads and writes files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub catalog: PathBuf,
    pub sessions: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            catalog: "data/catalog.jsonl".into(),
            sessions: "data/sessions.jsonl".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

impl Paths {
    /// Resolves relative paths against `base`.
    pub fn relative_to(&self, base: &Path) -> Self {
        let join = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        Self {
            catalog: join(&self.catalog),
            sessions: join(&self.sessions),
            checkpoints: join(&self.checkpoints),
            reports: join(&self.reports),
        }
    }

    pub fn checkpoint(&self, label: &str) -> PathBuf {
        self.checkpoints.join(format!("{label}.json"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub generator: GenConfig,
    /// Pages ahead whose items form the candidate set.
    pub k: usize,
    /// Page after which re-ranking happens in evaluation.
    pub t_eval: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub train: TrainConfig,
    pub methods: Vec<MethodSpec>,
    /// Seed for the RAND baseline.
    pub rand_seed: u64,
    /// Corpus seeds for multi-seed runs.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            generator: GenConfig::default(),
            k: 5,
            t_eval: 1,
            train_frac: 0.85,
            valid_frac: 0.05,
            train: TrainConfig::default(),
            methods: Method::ALL.into_iter().map(MethodSpec::from).collect(),
            rand_seed: 7,
            seeds: vec![1, 2, 3],
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths = cfg.paths.relative_to(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("config", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_eval < 1 {
            return Err(Error::Argument("t_eval must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(Error::Argument("k must be >= 1".into()));
        }
        let fracs_ok = self.train_frac > 0.0
            && self.valid_frac > 0.0
            && self.train_frac + self.valid_frac < 1.0;
        if !fracs_ok {
            return Err(Error::Argument(format!(
                "split fractions train={} valid={} must leave a test share",
                self.train_frac, self.valid_frac
            )));
        }
        let mut labels = std::collections::BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            if !labels.insert(m.label()) {
                return Err(Error::Argument(format!(
                    "duplicate method label {}",
                    m.label()
                )));
            }
        }
        self.generator.validate()?;
        self.train.validate()
    }

    /// The configured spec for `method`, or its defaults if unlisted.
    pub fn method_spec(&self, method: Method) -> MethodSpec {
        self.methods
            .iter()
            .find(|m| m.method == method && m.params.label.is_none())
            .or_else(|| self.methods.iter().find(|m| m.method == method))
            .cloned()
            .unwrap_or_else(|| method.into())
    }
}

/// A parameter swept over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    LambdaC,
    LambdaU,
    Dim,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LambdaC => "lambda_c",
            SweepParam::LambdaU => "lambda_u",
            SweepParam::Dim => "dim",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::LambdaC | SweepParam::LambdaU => vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            SweepParam::Dim => vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
        }
    }

    /// Methods whose parameter follows the grid: the embedding model and,
    /// for the λ sweeps, the RM3 variant with the same kind of feedback.
    pub fn methods(self) -> &'static [Method] {
        match self {
            SweepParam::LambdaC => &[Method::Scem, Method::Scrm3],
            SweepParam::LambdaU => &[Method::Lcem, Method::Lcrm3],
            SweepParam::Dim => &[Method::Scem],
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_c" => Ok(SweepParam::LambdaC),
            "lambda_u" => Ok(SweepParam::LambdaU),
            "dim" => Ok(SweepParam::Dim),
            _ => Err(Error::Argument(format!(
                "unknown sweep parameter {s:?}; expected lambda_c, lambda_u or dim"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, grid: Vec<f64>) -> Result<Self> {
        let spec = Self { param, grid };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_default_grid(param: SweepParam) -> Self {
        Self {
            param,
            grid: param.default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Argument("sweep grid is empty".into()));
        }
        for &v in &self.grid {
            let ok = match self.param {
                SweepParam::LambdaC | SweepParam::LambdaU => (0.0..=1.0).contains(&v),
                SweepParam::Dim => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Argument(format!(
                    "grid value {v} is invalid for {}",
                    self.param.name()
                )));
            }
        }
        Ok(())
    }

    /// The method spec evaluated at one grid point.
    pub fn spec_at(&self, base: &MethodSpec, value: f64) -> MethodSpec {
        let mut spec = base.clone();
        let p = &mut spec.params;
        match (self.param, base.method) {
            (SweepParam::LambdaC, Method::Scem) => {
                p.lambda_u = Some(0.0);
                p.lambda_c = Some(value);
            }
            (SweepParam::LambdaU, Method::Lcem) => {
                p.lambda_u = Some(value);
                p.lambda_c = Some(0.0);
            }
            (SweepParam::LambdaC | SweepParam::LambdaU, _) => p.alpha = Some(value),
            (SweepParam::Dim, _) => p.dim = Some(value as usize),
        }
        p.label = Some(format!("{}[{}={}]", base.label(), self.param.name(), value));
        spec
    }
}

/// Parses a comma-separated grid such as `0,0.2,0.4`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("bad grid value {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert_eq!("PROD".parse::<Method>().unwrap(), Method::ProdProxy);
        assert_eq!(
            serde_json::from_str::<Method>("\"PROD\"").unwrap(),
            Method::ProdProxy
        );
        assert!("BM25".parse::<Method>().is_err());
    }

    #[test]
    fn method_defaults() {
        let w = |m: Method| MethodSpec::from(m).weights().unwrap().unwrap();
        assert_eq!(
            (w(Method::Scem).lambda_u, w(Method::Scem).lambda_c),
            (0.0, 1.0)
        );
        assert_eq!(
            (w(Method::Lcem).lambda_u, w(Method::Lcem).lambda_c),
            (1.0, 0.0)
        );
        assert_eq!(w(Method::Qem), ContextWeights::QEM);
        let a = |m: Method| MethodSpec::from(m).rm3_params().unwrap().unwrap().alpha;
        assert_eq!(a(Method::Lcrm3), 0.8);
        assert_eq!(a(Method::Scrm3), 1.0);
        assert!(MethodSpec::from(Method::Pop).weights().unwrap().is_none());
    }

    #[test]
    fn config_json_round_trip_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let cfg = ExperimentConfig::default();
        cfg.save(&path).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(back.paths.catalog, dir.path().join("data/catalog.jsonl"));
        assert_eq!(back.methods, cfg.methods);
        assert_eq!(back.train, cfg.train);

        std::fs::write(
            &path,
            r#"{"methods":[{"method":"SCEM","lambda_c":0.6}], "t_eval": 2}"#,
        )
        .unwrap();
        let partial = ExperimentConfig::load(&path).unwrap();
        assert_eq!(partial.t_eval, 2);
        assert_eq!(partial.k, 5);
        assert_eq!(partial.methods[0].weights().unwrap().unwrap().lambda_c, 0.6);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = ExperimentConfig {
            t_eval: 0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.t_eval = 1;
        cfg.methods = vec![MethodSpec {
            method: Method::Lscem,
            params: MethodParams {
                lambda_u: Some(0.6),
                lambda_c: Some(0.6),
                ..MethodParams::default()
            },
        }];
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Qem.into(), Method::Qem.into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_specs() {
        assert_eq!(parse_grid("0,0.2, 0.4").unwrap(), vec![0.0, 0.2, 0.4]);
        assert!(parse_grid("0,x").is_err());
        assert!(SweepSpec::new(SweepParam::LambdaC, vec![1.2]).is_err());
        assert!(SweepSpec::new(SweepParam::Dim, vec![50.5]).is_err());
        assert!(SweepSpec::new(SweepParam::Dim, vec![]).is_err());
        assert_eq!(SweepSpec::with_default_grid(SweepParam::Dim).grid.len(), 6);

        let spec = SweepSpec::with_default_grid(SweepParam::LambdaC);
        let at = spec.spec_at(&Method::Scem.into(), 0.4);
        let w = at.weights().unwrap().unwrap();
        assert_eq!((w.lambda_u, w.lambda_c), (0.0, 0.4));
        assert_eq!(at.label(), "SCEM[lambda_c=0.4]");
        let rm = spec.spec_at(&Method::Scrm3.into(), 0.4);
        assert_eq!(rm.rm3_params().unwrap().unwrap().alpha, 0.4);
    }
}
