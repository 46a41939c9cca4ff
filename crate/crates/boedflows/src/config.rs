//! Flat `key = value` experiment configuration.
//!
//! One assignment per line; blank lines and `#` comments are ignored. Keys
//! are routed in order to the experiment itself (`model`, `m`, `methods`,
//! `seeds`, `out_dir`, `extract.*`, `report.*`, `reference.*`, `init.*`,
//! model overrides like `toy1d.sigma_y`), then to [`FlowConfig`], then to
//! [`BaselineConfig`]; anything left over is an error naming the key.
//! Later assignments win, which is also how command-line overrides are
//! layered on top of a file.

use std::path::Path;

use crate::baselines::{BaselineConfig, Method};
use crate::error::{Error, Result};
use crate::flows::{Algorithm, FlowConfig, InitSpec, ReferenceMeasure};
use crate::models::MODEL_NAMES;

/// Candidate-harvest and refinement settings for best-of-n extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig {
    /// Candidates assembled from the flow output (`extract.n_eval`).
    pub n_eval: usize,
    /// Shortlist kept for high-fidelity rescoring (`extract.shortlist`).
    pub shortlist: usize,
    /// Fraction of the trajectory discarded before harvesting
    /// (`extract.burn_fraction`).
    pub burn_fraction: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            n_eval: 100,
            shortlist: 10,
            burn_fraction: 0.8,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_eval == 0 || self.shortlist == 0 || self.shortlist > self.n_eval {
            return Err(Error::Config(format!(
                "extraction needs 1 <= shortlist <= n_eval, got shortlist = {} of {}",
                self.shortlist, self.n_eval
            )));
        }
        if !(0.0..1.0).contains(&self.burn_fraction) {
            return Err(Error::Config("extract.burn_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Final-answer rescoring fidelity: each reported EIG is the mean of
/// `replications` independent nested Monte Carlo estimates at budget
/// (`n_outer`, `n_inner`), with the spread across replications as its SE.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportConfig {
    pub replications: usize,
    pub n_outer: usize,
    pub n_inner: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            replications: 20,
            n_outer: crate::eig::NmcBudget::REPORTING.n_outer,
            n_inner: crate::eig::NmcBudget::REPORTING.n_inner,
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::Config(
                "report replications and budgets must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One entry of the `methods` list: a particle flow, a classical baseline,
/// or the repeat-the-best-single-experiment control.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodSpec {
    Flow(Algorithm),
    Baseline(Method),
    RepeatBestSingle,
}

impl MethodSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("repeat_best_single") || t.eq_ignore_ascii_case("repeat-best-single")
        {
            return Ok(MethodSpec::RepeatBestSingle);
        }
        if let Ok(a) = Algorithm::parse(t) {
            return Ok(MethodSpec::Flow(a));
        }
        if let Ok(b) = Method::parse(t) {
            return Ok(MethodSpec::Baseline(b));
        }
        Err(Error::Parse {
            key: "methods".into(),
            reason: format!(
                "unknown method `{t}` (flows: joint|mf|mf_sub|iid|iid_rep; baselines: \
                 uniform|geometric_drs|beta_drs|ce_grid|ce_gp|ce_gp_g|sga_adam|smc; \
                 or repeat_best_single)"
            ),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodSpec::Flow(a) => a.as_str(),
            MethodSpec::Baseline(b) => b.as_str(),
            MethodSpec::RepeatBestSingle => "repeat_best_single",
        }
    }
}

/// Reference-measure selection (`reference`, `reference.mean`,
/// `reference.sigma`); the mean broadcasts from one entry to the design
/// dimension when it is resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceKeys {
    pub kind: String,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl Default for ReferenceKeys {
    fn default() -> Self {
        Self {
            kind: "uniform".into(),
            mean: vec![0.0],
            sigma: 1.0,
        }
    }
}

impl ReferenceKeys {
    /// Concretise for a design space of dimension `dim`.
    pub fn resolve(&self, dim: usize) -> Result<ReferenceMeasure> {
        match self.kind.as_str() {
            "uniform" => Ok(ReferenceMeasure::Uniform),
            "gaussian" => Ok(ReferenceMeasure::Gaussian {
                mean: broadcast("reference.mean", &self.mean, dim)?,
                sigma: self.sigma,
            }),
            other => Err(Error::Parse {
                key: "reference".into(),
                reason: format!("unknown reference `{other}` (expected uniform|gaussian)"),
            }),
        }
    }
}

/// Initial-particle selection (`init`, `init.mean`, `init.sd`).
#[derive(Clone, Debug, PartialEq)]
pub struct InitKeys {
    pub kind: String,
    pub mean: Vec<f64>,
    pub sd: f64,
}

impl Default for InitKeys {
    fn default() -> Self {
        Self {
            kind: "domain".into(),
            mean: vec![0.0],
            sd: 1.0,
        }
    }
}

impl InitKeys {
    pub fn resolve(&self, dim: usize) -> Result<InitSpec> {
        match self.kind.as_str() {
            "domain" => Ok(InitSpec::Domain),
            "gaussian" => Ok(InitSpec::Gaussian {
                mean: broadcast("init.mean", &self.mean, dim)?,
                sd: self.sd,
            }),
            other => Err(Error::Parse {
                key: "init".into(),
                reason: format!("unknown init `{other}` (expected domain|gaussian)"),
            }),
        }
    }
}

fn broadcast(key: &str, values: &[f64], dim: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; dim]),
        n if n == dim => Ok(values.to_vec()),
        n => Err(Error::Parse {
            key: key.into(),
            reason: format!("expected 1 or {dim} entries, got {n}"),
        }),
    }
}

/// Everything a full experiment needs: the model, batch sizes, the method
/// list, per-method knobs and output fidelities.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    /// `<model>.<param>` overrides, sorted by key.
    pub model_overrides: Vec<(String, f64)>,
    /// Batch sizes to sweep (`m`, comma-separated). Empty means the
    /// model's default.
    pub m_list: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    /// Number of seeds; the seed set is 0..n_seeds.
    pub n_seeds: u64,
    pub flow: FlowConfig,
    pub baseline: BaselineConfig,
    pub extract: ExtractConfig,
    pub report: ReportConfig,
    pub reference: ReferenceKeys,
    pub init: InitKeys,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            // No usable default: experiments must name their model.
            model: String::new(),
            model_overrides: Vec::new(),
            m_list: Vec::new(),
            methods: vec![MethodSpec::Flow(Algorithm::Iid)],
            n_seeds: 5,
            flow: FlowConfig::default(),
            baseline: BaselineConfig::default(),
            extract: ExtractConfig::default(),
            report: ReportConfig::default(),
            reference: ReferenceKeys::default(),
            init: InitKeys::default(),
            out_dir: "out".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| Error::Parse {
        key: key.into(),
        reason: format!("{e}"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|tok| parse_num(key, tok))
        .collect()
}

/// Split flat `key = value` text into ordered pairs. `#` starts a comment,
/// anywhere on a line.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            key: format!("line {}", lineno + 1),
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Route one assignment. Unknown keys are an error naming the key.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        // Experiment-level keys first.
        match key {
            "model" => {
                self.model = value.to_string();
                return Ok(());
            }
            "m" => {
                self.m_list = parse_list(key, value)?;
                return Ok(());
            }
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(MethodSpec::parse)
                    .collect::<Result<Vec<_>>>()?;
                return Ok(());
            }
            "seeds" => {
                self.n_seeds = parse_num(key, value)?;
                return Ok(());
            }
            "out_dir" => {
                self.out_dir = value.to_string();
                return Ok(());
            }
            "extract.n_eval" => {
                self.extract.n_eval = parse_num(key, value)?;
                return Ok(());
            }
            "extract.shortlist" => {
                self.extract.shortlist = parse_num(key, value)?;
                return Ok(());
            }
            "extract.burn_fraction" => {
                self.extract.burn_fraction = parse_num(key, value)?;
                return Ok(());
            }
            "report.replications" => {
                self.report.replications = parse_num(key, value)?;
                return Ok(());
            }
            "report.n_outer" => {
                self.report.n_outer = parse_num(key, value)?;
                return Ok(());
            }
            "report.n_inner" => {
                self.report.n_inner = parse_num(key, value)?;
                return Ok(());
            }
            "reference" => {
                self.reference.kind = value.to_string();
                return Ok(());
            }
            "reference.mean" => {
                self.reference.mean = parse_list(key, value)?;
                return Ok(());
            }
            "reference.sigma" => {
                self.reference.sigma = parse_num(key, value)?;
                return Ok(());
            }
            "init" => {
                self.init.kind = value.to_string();
                return Ok(());
            }
            "init.mean" => {
                self.init.mean = parse_list(key, value)?;
                return Ok(());
            }
            "init.sd" => {
                self.init.sd = parse_num(key, value)?;
                return Ok(());
            }
            _ => {}
        }

        // Model-parameter overrides: `<model>.<param> = number`.
        if let Some((prefix, param)) = key.split_once('.') {
            if MODEL_NAMES.contains(&prefix) {
                let v: f64 = parse_num(key, value)?;
                match self.model_overrides.iter_mut().find(|(k, _)| k == key) {
                    Some(slot) => slot.1 = v,
                    None => self.model_overrides.push((key.to_string(), v)),
                }
                let _ = param;
                return Ok(());
            }
        }

        if self.flow.apply_key(key, value)? {
            return Ok(());
        }
        if self.baseline.apply_key(key, value)? {
            return Ok(());
        }
        Err(Error::Parse {
            key: key.into(),
            reason: "unknown configuration key".into(),
        })
    }

    /// Build from ordered pairs; later assignments overwrite earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut methods_set = false;
        let mut method_set = false;
        let mut algorithm_set = false;
        for (key, value) in pairs {
            cfg.apply_key(key, value)?;
            match key.as_str() {
                "methods" => methods_set = true,
                "method" => method_set = true,
                "algorithm" => algorithm_set = true,
                _ => {}
            }
        }
        // An explicit `method`/`algorithm` without a `methods` list means
        // "run exactly that one".
        if !methods_set {
            if method_set {
                cfg.methods = vec![MethodSpec::Baseline(cfg.baseline.method)];
            } else if algorithm_set {
                cfg.methods = vec![MethodSpec::Flow(cfg.flow.algorithm)];
            }
        }
        cfg.model_overrides.sort_by(|a, b| a.0.cmp(&b.0));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_kv_text(text)?)
    }

    /// Read a config file and layer command-line overrides on top.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut pairs = parse_kv_text(&text)?;
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.is_empty() {
            return Err(Error::Parse {
                key: "model".into(),
                reason: "missing required key".into(),
            });
        }
        if !MODEL_NAMES.contains(&self.model.as_str()) {
            return Err(Error::Parse {
                key: "model".into(),
                reason: format!(
                    "unknown model `{}` (expected {})",
                    self.model,
                    MODEL_NAMES.join("|")
                ),
            });
        }
        for (key, _) in &self.model_overrides {
            let prefix = key.split('.').next().unwrap_or("");
            if prefix != self.model {
                return Err(Error::Parse {
                    key: key.clone(),
                    reason: format!("override targets model `{prefix}` but model is `{}`", self.model),
                });
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        if self.n_seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.m_list.iter().any(|&m| m == 0) {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        self.flow.validate()?;
        self.baseline.validate()?;
        self.extract.validate()?;
        self.report.validate()?;
        Ok(())
    }

    /// Serialise back to assignment pairs; `from_pairs` on the output
    /// reproduces the config exactly.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![("model".into(), self.model.clone())];
        for (k, v) in &self.model_overrides {
            pairs.push((k.clone(), format!("{v}")));
        }
        if !self.m_list.is_empty() {
            let m = self
                .m_list
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",");
            pairs.push(("m".into(), m));
        }
        let methods = self
            .methods
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join(",");
        pairs.push(("methods".into(), methods));
        pairs.push(("seeds".into(), self.n_seeds.to_string()));
        pairs.push(("out_dir".into(), self.out_dir.clone()));

        pairs.push(("reference".into(), self.reference.kind.clone()));
        pairs.push((
            "reference.mean".into(),
            join_floats(&self.reference.mean),
        ));
        pairs.push(("reference.sigma".into(), format!("{}", self.reference.sigma)));
        pairs.push(("init".into(), self.init.kind.clone()));
        pairs.push(("init.mean".into(), join_floats(&self.init.mean)));
        pairs.push(("init.sd".into(), format!("{}", self.init.sd)));

        pairs.push(("extract.n_eval".into(), self.extract.n_eval.to_string()));
        pairs.push(("extract.shortlist".into(), self.extract.shortlist.to_string()));
        pairs.push((
            "extract.burn_fraction".into(),
            format!("{}", self.extract.burn_fraction),
        ));
        pairs.push((
            "report.replications".into(),
            self.report.replications.to_string(),
        ));
        pairs.push(("report.n_outer".into(), self.report.n_outer.to_string()));
        pairs.push(("report.n_inner".into(), self.report.n_inner.to_string()));

        for (k, v) in self.flow.to_pairs() {
            pairs.push((k.to_string(), v));
        }
        pairs.push(("method".into(), self.baseline.method.as_str().to_string()));
        pairs.push(("n_sweeps".into(), self.baseline.budget.to_string()));
        pairs.push(("r_max".into(), format!("{}", self.baseline.r_max)));
        pairs.push(("grid_size".into(), self.baseline.grid_size.to_string()));
        pairs
    }

    /// Render as config-file text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// The seed set 0..n_seeds.
    pub fn seed_set(&self) -> Vec<u64> {
        (0..self.n_seeds).collect()
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}
