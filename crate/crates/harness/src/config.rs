//! Experiment configuration: one experiment per TOML file.
//!
//! ```toml
//! model = "sphere:r=1"
//! drift = "zero"
//! potential = "zero"
//! function = "coord:3"
//! estimator = "feynman_kac"
//! x0 = [0.0, 0.6, 0.8]
//! t = 0.5
//! dt = 0.005
//! n_paths = 100000
//! seed = 1
//! ```
//!
//! Every key can be overridden from the command line.

use std::fmt;
use std::path::PathBuf;

use hessmc_core::estimators::{alpha2, EstimatorSpec, HessianMethod, McConfig, Problem, TestFunction};
use hessmc_core::geometry::{Drift, ManifoldModel, Potential, ScalarFieldBundle, Vec3};
use hessmc_core::pathsim::Scheme;
use serde::{Deserialize, Serialize};

pub const MIN_PATHS: u64 = 100;
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    FeynmanKac,
    GradientPathwise,
    GradientBismut,
    HessianElementary,
    HessianFk,
    HessianMatrix,
    DoublyDampedCheck,
    NtScaling,
    ExpMoment,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 9] = [
        EstimatorId::FeynmanKac,
        EstimatorId::GradientPathwise,
        EstimatorId::GradientBismut,
        EstimatorId::HessianElementary,
        EstimatorId::HessianFk,
        EstimatorId::HessianMatrix,
        EstimatorId::DoublyDampedCheck,
        EstimatorId::NtScaling,
        EstimatorId::ExpMoment,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            EstimatorId::FeynmanKac => "feynman_kac",
            EstimatorId::GradientPathwise => "gradient_pathwise",
            EstimatorId::GradientBismut => "gradient_bismut",
            EstimatorId::HessianElementary => "hessian_elementary",
            EstimatorId::HessianFk => "hessian_fk",
            EstimatorId::HessianMatrix => "hessian_matrix",
            EstimatorId::DoublyDampedCheck => "doubly_damped_check",
            EstimatorId::NtScaling => "nt_scaling",
            EstimatorId::ExpMoment => "exp_moment",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id.trim())
    }

    pub fn description(&self) -> &'static str {
        match self {
            EstimatorId::FeynmanKac => "P_t f(x0); keys: function, t",
            EstimatorId::GradientPathwise => "dP_t f(v1) from E[df(W_t v1)]; needs V = 0",
            EstimatorId::GradientBismut => "dP_t f(v1) by integration by parts; needs V = 0",
            EstimatorId::HessianElementary => "Hess P_t f(v1, v2) from derivatives of f; needs V = 0",
            EstimatorId::HessianFk => "Hess P_t f(v1, v2) from the second order Feynman-Kac weights",
            EstimatorId::HessianMatrix => "full Hessian in the frame at x0; key: method = elementary | feynman-kac",
            EstimatorId::DoublyDampedCheck => "E[u_t C_t] vs finite differences of W_t; key: eps; gradient-sde",
            EstimatorId::NtScaling => "E|N_t| over t_list and its log-log slope",
            EstimatorId::ExpMoment => "E exp(alpha |W_t^(2)|^2) over n and 2n paths; key: alphas",
        }
    }

    /// Estimators with one mean per output, usable in every sweep axis.
    pub fn is_scalar(&self) -> bool {
        !matches!(self, EstimatorId::NtScaling | EstimatorId::ExpMoment)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn zero_id() -> String {
    "zero".into()
}
fn default_dt() -> f64 {
    5e-3
}
fn default_paths() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    1
}
fn default_substeps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(default = "zero_id")]
    pub drift: String,
    #[serde(default = "zero_id")]
    pub potential: String,
    pub function: String,
    pub estimator: EstimatorId,
    /// Base point in representation coordinates; the model's default point
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Defaults to the first vector of the orthonormal frame at `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<Vec<f64>>,
    /// Defaults to `v1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_substeps")]
    pub noise_substeps: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<HessianMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn new(model: &str, function: &str, estimator: EstimatorId) -> Self {
        Self {
            model: model.into(),
            drift: zero_id(),
            potential: zero_id(),
            function: function.into(),
            estimator,
            x0: None,
            v1: None,
            v2: None,
            t: None,
            t_list: None,
            dt: default_dt(),
            n_paths: default_paths(),
            seed: default_seed(),
            scheme: Scheme::default(),
            noise_substeps: default_substeps(),
            threads: 0,
            eps: None,
            alphas: None,
            method: None,
            output: None,
            format: OutputFormat::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The config as TOML; parsing it back yields an equal config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config fields are plain data")
    }
}

/// One problem with one config key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:{}", format_fields(.0))]
    Invalid(Vec<FieldError>),
}

fn format_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("\n  {}: {}", e.field, e.message))
        .collect()
}

/// A validated config with every id resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: ManifoldModel,
    pub fields: ScalarFieldBundle,
    pub f: TestFunction,
    pub x0: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
    /// Horizon `t`, or the first entry of `t_list`.
    pub t: f64,
    pub t_list: Vec<f64>,
    pub mc: McConfig,
    pub eps: f64,
    pub alphas: Vec<f64>,
    pub method: HessianMethod,
}

pub const DEFAULT_EPS: f64 = 1e-3;

impl Resolved {
    pub fn problem(&self) -> Problem {
        Problem::new(self.model, self.fields, self.x0, self.t).expect("validated")
    }

    /// The estimator as a path functional, for the scalar estimators.
    pub fn spec(&self) -> Option<EstimatorSpec> {
        let (f, v1, v2) = (self.f, self.v1, self.v2);
        Some(match self.config.estimator {
            EstimatorId::FeynmanKac => EstimatorSpec::FeynmanKac { f },
            EstimatorId::GradientPathwise => EstimatorSpec::GradientPathwise { f, v: v1 },
            EstimatorId::GradientBismut => EstimatorSpec::GradientBismut { f, v: v1 },
            EstimatorId::HessianElementary => EstimatorSpec::HessianElementary { f, v1, v2 },
            EstimatorId::HessianFk => EstimatorSpec::HessianFk { f, v1, v2 },
            EstimatorId::HessianMatrix => EstimatorSpec::HessianMatrix { f, method: self.method },
            EstimatorId::DoublyDampedCheck => EstimatorSpec::DoublyDamped { v1, v2, eps: self.eps },
            EstimatorId::NtScaling | EstimatorId::ExpMoment => return None,
        })
    }
}

/// Reads a vector key, checking its length against the model.
fn vector(
    errors: &mut Vec<FieldError>,
    field: &str,
    value: &[f64],
    model: &ManifoldModel,
) -> Option<Vec3> {
    let n = model.coord_dim();
    if value.len() != n || value.iter().any(|v| !v.is_finite()) {
        push(errors, field, format!("expected {n} finite coordinates for {}", model.id()));
        return None;
    }
    let mut out = Vec3::zeros();
    out.as_mut_slice()[..n].copy_from_slice(value);
    Some(out)
}

fn push(errors: &mut Vec<FieldError>, field: &str, message: impl Into<String>) {
    errors.push(FieldError {
        field: field.into(),
        message: message.into(),
    });
}

/// Checks that `t` is a positive whole number of steps, divisible by 4.
fn check_grid(errors: &mut Vec<FieldError>, field: &str, t: f64, dt: f64) {
    if !(t > 0.0 && t.is_finite()) {
        push(errors, field, format!("must be positive, got {t}"));
        return;
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return;
    }
    let m = (t / dt).round();
    if m < 1.0 || (t / dt - m).abs() > GRID_TOL * m.max(1.0) {
        push(errors, field, format!("t = {t} is not a whole number of steps of dt = {dt}"));
    } else if (m as u64) % 4 != 0 {
        push(errors, field, format!("t / dt = {m} must be divisible by 4"));
    }
}

pub fn validate(config: &ExperimentConfig) -> Result<Resolved, ConfigError> {
    let mut errors = Vec::new();
    let e = &mut errors;
    let model = ManifoldModel::from_id(&config.model)
        .map_err(|err| push(e, "model", err.to_string()))
        .ok();
    let drift = Drift::from_id(&config.drift)
        .map_err(|err| push(e, "drift", err.to_string()))
        .ok();
    let potential = Potential::from_id(&config.potential)
        .map_err(|err| push(e, "potential", err.to_string()))
        .ok();
    let f = TestFunction::from_id(&config.function)
        .map_err(|err| push(e, "function", err.to_string()))
        .ok();
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        push(e, "dt", format!("must be positive, got {}", config.dt));
    }
    if config.n_paths < MIN_PATHS {
        push(e, "n_paths", format!("must be at least {MIN_PATHS}, got {}", config.n_paths));
    }
    if config.noise_substeps == 0 {
        push(e, "noise_substeps", "must be positive");
    }
    let t_list = if config.estimator == EstimatorId::NtScaling {
        match &config.t_list {
            Some(list) if list.len() >= 2 => {
                for t in list {
                    check_grid(e, "t_list", *t, config.dt);
                }
                list.clone()
            }
            _ => {
                push(e, "t_list", "nt_scaling needs at least two times");
                Vec::new()
            }
        }
    } else {
        match config.t {
            Some(t) => {
                check_grid(e, "t", t, config.dt);
                vec![t]
            }
            None => {
                push(e, "t", "missing");
                Vec::new()
            }
        }
    };
    let eps = config.eps.unwrap_or(DEFAULT_EPS);
    if !(eps > 0.0 && eps.is_finite()) {
        push(e, "eps", format!("must be positive, got {eps}"));
    }
    if config.estimator == EstimatorId::DoublyDampedCheck && config.scheme != Scheme::GradientSde {
        push(e, "scheme", "doubly_damped_check needs scheme = \"gradient-sde\"");
    }

    let mut fields = None;
    let (mut x0, mut v1, mut v2) = (None, None, None);
    let mut alphas = Vec::new();
    if let Some(model) = &model {
        if let (Some(d), Some(p)) = (drift, potential) {
            fields = ScalarFieldBundle::new(model, d, p)
                .map_err(|err| push(e, "drift", err.to_string()))
                .ok();
        }
        if let Some(f) = &f {
            if let Err(err) = f.check(model) {
                push(e, "function", err.to_string());
            }
        }
        if config.scheme == Scheme::GradientSde && !model.is_extrinsic() {
            push(e, "scheme", format!("gradient-sde needs an embedded model, {} is a chart", model.id()));
        }
        x0 = match &config.x0 {
            Some(v) => vector(e, "x0", v, model).filter(|x| {
                let ok = model.check_point(x).is_ok();
                if !ok {
                    push(e, "x0", format!("not a point of {}", model.id()));
                }
                ok
            }),
            None => Some(model.default_point()),
        };
        if let Some(x) = x0 {
            let frame_vec = || -> Vec3 { model.orthonormal_frame(&x).column(0).into_owned() };
            let tangent = |e: &mut Vec<FieldError>, field: &str, v: Option<Vec3>| {
                v.filter(|v| {
                    let ok = model.check_tangent(&x, v).is_ok();
                    if !ok {
                        push(e, field, "not tangent at x0");
                    }
                    ok
                })
            };
            v1 = match &config.v1 {
                Some(v) => {
                    let v = vector(e, "v1", v, model);
                    tangent(e, "v1", v)
                }
                None => Some(frame_vec()),
            };
            v2 = match &config.v2 {
                Some(v) => {
                    let v = vector(e, "v2", v, model);
                    tangent(e, "v2", v)
                }
                None => v1,
            };
        }
        if config.estimator == EstimatorId::ExpMoment {
            let t = t_list.first().copied().unwrap_or(1.0);
            let limit = alpha2(model.dim(), model.curvature_sup_norm(), t, model.lower_bound_k());
            alphas = config.alphas.clone().unwrap_or_else(|| vec![limit]);
            if alphas.is_empty() {
                push(e, "alphas", "must not be empty");
            }
            for a in &alphas {
                if !(*a >= 0.0 && *a <= limit) {
                    push(e, "alphas", format!("{a} outside [0, alpha_2 = {limit:e}]"));
                }
            }
        }
    }
    if let Some(p) = potential {
        if !p.is_zero()
            && matches!(
                config.estimator,
                EstimatorId::GradientPathwise | EstimatorId::GradientBismut | EstimatorId::HessianElementary
            )
        {
            push(e, "potential", format!("{} requires potential = \"zero\"", config.estimator));
        }
        if !p.is_zero()
            && config.estimator == EstimatorId::HessianMatrix
            && config.method.unwrap_or(HessianMethod::FeynmanKac) == HessianMethod::Elementary
        {
            push(e, "potential", "the elementary method requires potential = \"zero\"");
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    let mc = McConfig {
        n_paths: config.n_paths,
        dt: config.dt,
        seed: config.seed,
        scheme: config.scheme,
        noise_substeps: config.noise_substeps,
        ..McConfig::default()
    };
    Ok(Resolved {
        config: config.clone(),
        model: model.expect("checked"),
        fields: fields.expect("checked"),
        f: f.expect("checked"),
        x0: x0.expect("checked"),
        v1: v1.expect("checked"),
        v2: v2.expect("checked"),
        t: t_list[0],
        t_list,
        mc,
        eps,
        alphas,
        method: config.method.unwrap_or(HessianMethod::FeynmanKac),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            t: Some(1.0),
            ..ExperimentConfig::new("euclidean:1", "square:1", EstimatorId::HessianFk)
        }
    }

    #[test]
    fn minimal_file_parses_with_defaults() {
        let c = ExperimentConfig::parse(
            "model = \"sphere:r=1\"\nfunction = \"coord:3\"\nestimator = \"feynman_kac\"\nt = 0.5\n",
        )
        .unwrap();
        assert_eq!(c.dt, 5e-3);
        assert_eq!(c.n_paths, 100_000);
        assert_eq!(c.scheme, Scheme::FrameBundle);
        let r = validate(&c).unwrap();
        assert_eq!(r.x0, r.model.default_point());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::parse("model = \"euclidean:1\"\nfunction = \"coord:1\"\nestimator = \"feynman_kac\"\nsteps = 3\n");
        assert!(matches!(e, Err(ConfigError::Parse(_))));
    }

    #[test]
    fn grid_must_be_divisible_by_four() {
        let c = ExperimentConfig { dt: 0.1, t: Some(0.5), ..base() };
        let Err(ConfigError::Invalid(errs)) = validate(&c) else { panic!() };
        assert_eq!(errs[0].field, "t");
        let c = ExperimentConfig { dt: 0.3, ..base() };
        assert!(validate(&c).is_err());
        assert!(validate(&base()).is_ok());
    }

    #[test]
    fn every_bad_field_is_reported() {
        let c = ExperimentConfig {
            model: "torus:2".into(),
            function: "cube:1".into(),
            n_paths: 10,
            ..base()
        };
        let Err(ConfigError::Invalid(errs)) = validate(&c) else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["model", "function", "n_paths"]);
    }

    #[test]
    fn vectors_are_checked_against_the_model() {
        let c = ExperimentConfig {
            x0: Some(vec![0.0, 0.0, 2.0]),
            ..ExperimentConfig { t: Some(0.5), ..ExperimentConfig::new("sphere:r=1", "coord:3", EstimatorId::FeynmanKac) }
        };
        assert!(validate(&c).is_err());
        let c = ExperimentConfig {
            x0: Some(vec![0.0, 0.0, 1.0]),
            v1: Some(vec![0.0, 0.0, 1.0]),
            ..c
        };
        let Err(ConfigError::Invalid(errs)) = validate(&c) else { panic!() };
        assert_eq!(errs[0].field, "v1");
    }

    #[test]
    fn gradient_estimators_need_zero_potential() {
        let c = ExperimentConfig {
            estimator: EstimatorId::GradientPathwise,
            potential: "const:c=1".into(),
            ..base()
        };
        assert!(validate(&c).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig {
            x0: Some(vec![0.1]),
            alphas: Some(vec![1e-4, 3.3e-5]),
            method: Some(HessianMethod::Elementary),
            output: Some("out/run.json".into()),
            format: OutputFormat::Csv,
            ..base()
        };
        assert_eq!(ExperimentConfig::parse(&c.echo()).unwrap(), c);
    }
}
