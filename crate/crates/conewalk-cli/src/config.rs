//! Config file schema and validation.
//!
//! Parsing happens in two stages. The TOML layer rejects syntax errors and
//! unknown keys (with line numbers); the build stage then walks the raw tree
//! and collects every semantic error it can find, each tagged with the key
//! path, instead of bailing at the first. The resolved [`RunConfig`] can be
//! re-emitted as an effective config with all defaults materialized, and
//! re-parsing that text yields an identical `RunConfig`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use conewalk_core::conditions::GcirVariant;
use conewalk_core::jump::{JumpSpec, KSpec, MarkLaw};
use conewalk_core::model::{
    FamilySpec, GammaSpec, GcirParams, GeneralParams, ModelSpec, OuParams, WishartParams,
};
use conewalk_core::psd::{self, GeneralMatrix, SymMatrix};
use conewalk_core::sim::{self, BoundaryPolicy, SimConfig};
use conewalk_core::verify::{default_checkpoints, HForm};

#[derive(Debug, Clone, Serialize)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

// ---------------------------------------------------------------------------
// Raw (serde) layer. Field order matters for TOML serialization: scalars
// before sub-tables.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: RawModel,
    #[serde(default)]
    pub sim: RawSim,
    #[serde(default)]
    pub experiment: RawExperiment,
    #[serde(default)]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub family: String,
    pub d: usize,
    /// Matrix literals use the row-major text format: "2,1;1,2".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    /// Wishart/GCIR shorthand: `b = delta·QᵀQ`. Mutually exclusive with `b`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<RawGamma>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jumps: Option<RawJumps>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<RawK>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGamma {
    /// "zero" | "constant" | "congruence" | "scaled-trace"
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawJumps {
    /// "poisson" | "schedule"
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// "rank-one" | "diag-exponential" | "constant"
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mark: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marks: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawK {
    /// "identity" | "scale" | "congruence" | "state-congruence"
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSim {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_halvings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_noise: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawExperiment {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_forms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths_csv: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

// ---------------------------------------------------------------------------
// Resolved layer.

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub x0: SymMatrix,
    pub sim: SimConfig,
    pub experiment: Experiment,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub n_paths: usize,
    pub checkpoints: Vec<f64>,
    pub axis: Vec<f64>,
    pub h_forms: Vec<String>,
    pub variants: Vec<String>,
    pub samples: usize,
    pub claimed_floor: Option<f64>,
    pub paths_csv: bool,
}

/// Flag-level overrides; flags win over config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub const SUBCOMMANDS: [&str; 5] = ["simulate", "check", "verify", "mc", "sweep"];

pub fn parse_config(
    text: &str,
    subcommand: &str,
    ov: &Overrides,
) -> Result<RunConfig, Vec<ConfigError>> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| vec![ConfigError::new("<config>", e.to_string().trim_end())])?;
    build(raw, subcommand, ov)
}

fn parse_general(
    errs: &mut Vec<ConfigError>,
    path: &str,
    text: &str,
    d: usize,
) -> Option<GeneralMatrix> {
    match psd::parse_matrix(text) {
        Err(e) => {
            errs.push(ConfigError::new(path, e.to_string()));
            None
        }
        Ok(m) => {
            if m.nrows() != d || m.ncols() != d {
                errs.push(ConfigError::new(
                    path,
                    format!("expected a {d}x{d} matrix, got {}x{}", m.nrows(), m.ncols()),
                ));
                None
            } else {
                Some(m)
            }
        }
    }
}

fn parse_symmetric(
    errs: &mut Vec<ConfigError>,
    path: &str,
    text: &str,
    d: usize,
) -> Option<SymMatrix> {
    match psd::parse_sym(text) {
        Err(e) => {
            errs.push(ConfigError::new(path, e.to_string()));
            None
        }
        Ok(m) => {
            if m.dim() != d {
                errs.push(ConfigError::new(
                    path,
                    format!("expected a {d}x{d} matrix, got {0}x{0}", m.dim()),
                ));
                None
            } else {
                Some(m)
            }
        }
    }
}

fn finite(errs: &mut Vec<ConfigError>, path: &str, v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        errs.push(ConfigError::new(path, format!("not finite: {v}")));
        None
    }
}

fn forbid<T>(errs: &mut Vec<ConfigError>, path: &str, field: &Option<T>, family: &str) {
    if field.is_some() {
        errs.push(ConfigError::new(path, format!("not a parameter of the {family} family")));
    }
}

struct DriftParams {
    q: GeneralMatrix,
    beta: GeneralMatrix,
    b: SymMatrix,
}

/// Resolve q (default identity), beta (default zero), and b (literal or the
/// `delta` shorthand) for the wishart and gcir families.
fn drift_params(errs: &mut Vec<ConfigError>, m: &RawModel, family: &str) -> Option<DriftParams> {
    let d = m.d;
    let q = match &m.q {
        None => Some(GeneralMatrix::identity(d, d)),
        Some(text) => parse_general(errs, "model.q", text, d),
    };
    let beta = match &m.beta {
        None => Some(GeneralMatrix::zeros(d, d)),
        Some(text) => parse_general(errs, "model.beta", text, d),
    };
    let b = match (&m.b, m.delta) {
        (Some(_), Some(_)) => {
            errs.push(ConfigError::new("model.b", "give either b or delta, not both"));
            None
        }
        (Some(text), None) => parse_symmetric(errs, "model.b", text, d),
        (None, Some(delta)) => {
            let delta = finite(errs, "model.delta", delta)?;
            if delta < 0.0 {
                errs.push(ConfigError::new("model.delta", format!("negative: {delta}")));
                None
            } else {
                let q = q.as_ref()?;
                match SymMatrix::new(q.transpose() * q * delta) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        errs.push(ConfigError::new("model.delta", e.to_string()));
                        None
                    }
                }
            }
        }
        (None, None) => {
            errs.push(ConfigError::new(
                "model.b",
                format!("the {family} family needs b or delta"),
            ));
            None
        }
    };
    Some(DriftParams { q: q?, beta: beta?, b: b? })
}

fn build_gamma(errs: &mut Vec<ConfigError>, raw: &Option<RawGamma>, d: usize) -> Option<GammaSpec> {
    let Some(g) = raw else { return Some(GammaSpec::Zero) };
    let p = "model.gamma";
    match g.kind.as_str() {
        "zero" => Some(GammaSpec::Zero),
        "constant" => {
            let Some(text) = &g.value else {
                errs.push(ConfigError::new(format!("{p}.value"), "constant gamma needs a matrix"));
                return None;
            };
            Some(GammaSpec::Constant(parse_symmetric(errs, &format!("{p}.value"), text, d)?))
        }
        "congruence" => {
            let Some(factors) = &g.factors else {
                errs.push(ConfigError::new(
                    format!("{p}.factors"),
                    "congruence gamma needs factor matrices",
                ));
                return None;
            };
            let mut out = Vec::with_capacity(factors.len());
            for (i, text) in factors.iter().enumerate() {
                out.push(parse_general(errs, &format!("{p}.factors[{i}]"), text, d)?);
            }
            Some(GammaSpec::Congruence(out))
        }
        "scaled-trace" => {
            let Some(coeff) = g.coeff else {
                errs.push(ConfigError::new(format!("{p}.coeff"), "scaled-trace gamma needs coeff"));
                return None;
            };
            let direction = match &g.direction {
                None => Some(SymMatrix::identity(d)),
                Some(text) => parse_symmetric(errs, &format!("{p}.direction"), text, d),
            };
            Some(GammaSpec::ScaledTrace {
                coeff: finite(errs, &format!("{p}.coeff"), coeff)?,
                power: g.power.unwrap_or(1.0),
                offset: g.offset.unwrap_or(0.0),
                direction: direction?,
            })
        }
        other => {
            errs.push(ConfigError::new(
                format!("{p}.kind"),
                format!("unknown gamma kind {other:?}; expected zero, constant, congruence, or scaled-trace"),
            ));
            None
        }
    }
}

fn build_jumps(errs: &mut Vec<ConfigError>, raw: &Option<RawJumps>, d: usize) -> Option<JumpSpec> {
    let Some(j) = raw else { return Some(JumpSpec::None) };
    let p = "model.jumps";
    match j.kind.as_str() {
        "poisson" => {
            let Some(rate) = j.rate else {
                errs.push(ConfigError::new(format!("{p}.rate"), "poisson jumps need a rate"));
                return None;
            };
            let rate = finite(errs, &format!("{p}.rate"), rate)?;
            let mark = j.mark.as_deref().unwrap_or("rank-one");
            let mark_law = match mark {
                "rank-one" => MarkLaw::RankOne { sigma: j.sigma.unwrap_or(1.0) },
                "diag-exponential" => MarkLaw::DiagExponential { mu: j.mu.unwrap_or(1.0) },
                "constant" => {
                    let Some(text) = &j.value else {
                        errs.push(ConfigError::new(
                            format!("{p}.value"),
                            "constant marks need a matrix",
                        ));
                        return None;
                    };
                    MarkLaw::ConstantMark(parse_symmetric(errs, &format!("{p}.value"), text, d)?)
                }
                other => {
                    errs.push(ConfigError::new(
                        format!("{p}.mark"),
                        format!("unknown mark law {other:?}; expected rank-one, diag-exponential, or constant"),
                    ));
                    return None;
                }
            };
            Some(JumpSpec::CompoundPoisson { rate, mark_law })
        }
        "schedule" => {
            let (Some(times), Some(marks)) = (&j.times, &j.marks) else {
                errs.push(ConfigError::new(
                    format!("{p}.times"),
                    "a schedule needs times and marks of equal length",
                ));
                return None;
            };
            if times.len() != marks.len() {
                errs.push(ConfigError::new(
                    format!("{p}.times"),
                    format!("{} times but {} marks", times.len(), marks.len()),
                ));
                return None;
            }
            let mut out = Vec::with_capacity(times.len());
            for (i, (t, text)) in times.iter().zip(marks).enumerate() {
                let mark = parse_symmetric(errs, &format!("{p}.marks[{i}]"), text, d)?;
                out.push((*t, mark));
            }
            Some(JumpSpec::DeterministicSchedule(out))
        }
        other => {
            errs.push(ConfigError::new(
                format!("{p}.kind"),
                format!("unknown jump kind {other:?}; expected poisson or schedule"),
            ));
            None
        }
    }
}

fn build_k(errs: &mut Vec<ConfigError>, raw: &Option<RawK>, d: usize) -> Option<KSpec> {
    let Some(k) = raw else { return Some(KSpec::Identity) };
    let p = "model.k";
    match k.kind.as_str() {
        "identity" => Some(KSpec::Identity),
        "state-congruence" => Some(KSpec::StateCongruence),
        "scale" => {
            let Some(value) = k.value else {
                errs.push(ConfigError::new(format!("{p}.value"), "scale needs a value"));
                return None;
            };
            Some(KSpec::Scale(finite(errs, &format!("{p}.value"), value)?))
        }
        "congruence" => {
            let Some(text) = &k.matrix else {
                errs.push(ConfigError::new(format!("{p}.matrix"), "congruence needs a matrix"));
                return None;
            };
            Some(KSpec::Congruence(parse_general(errs, &format!("{p}.matrix"), text, d)?))
        }
        other => {
            errs.push(ConfigError::new(
                format!("{p}.kind"),
                format!("unknown k kind {other:?}; expected identity, scale, congruence, or state-congruence"),
            ));
            None
        }
    }
}

fn build_family(errs: &mut Vec<ConfigError>, m: &RawModel, family: &str) -> Option<FamilySpec> {
    let d = m.d;
    let gamma = build_gamma(errs, &m.gamma, d);
    match family {
        "wishart" => {
            forbid(errs, "model.alpha", &m.alpha, family);
            let p = drift_params(errs, m, family);
            let p = p?;
            Some(FamilySpec::Wishart(WishartParams {
                q: p.q,
                beta: p.beta,
                b: p.b,
                gamma: gamma?,
            }))
        }
        "gcir" => {
            let Some(alpha) = m.alpha else {
                errs.push(ConfigError::new("model.alpha", "the gcir family needs alpha"));
                return None;
            };
            if !(0.5..=1.0).contains(&alpha) {
                errs.push(ConfigError::new("model.alpha", format!("alpha out of [0.5, 1]: {alpha}")));
                return None;
            }
            let p = drift_params(errs, m, family)?;
            Some(FamilySpec::Gcir(GcirParams {
                alpha,
                q: p.q,
                beta: p.beta,
                b: p.b,
                gamma: gamma?,
            }))
        }
        "ou" => {
            forbid(errs, "model.q", &m.q, family);
            forbid(errs, "model.beta", &m.beta, family);
            forbid(errs, "model.alpha", &m.alpha, family);
            forbid(errs, "model.delta", &m.delta, family);
            let Some(text) = &m.b else {
                errs.push(ConfigError::new("model.b", "the ou family needs b"));
                return None;
            };
            let b = parse_symmetric(errs, "model.b", text, d)?;
            Some(FamilySpec::Ou(OuParams { b, gamma: gamma? }))
        }
        other => {
            errs.push(ConfigError::new(
                "model.family",
                format!("unknown family {other:?}; expected wishart, gcir, ou, or general"),
            ));
            None
        }
    }
}

fn build_model(errs: &mut Vec<ConfigError>, m: &RawModel) -> Option<ModelSpec> {
    if m.d == 0 {
        errs.push(ConfigError::new("model.d", "dimension must be at least 1"));
        return None;
    }
    let family = if m.family == "general" {
        let base_name = match &m.base_family {
            Some(name) if name != "general" => name.clone(),
            Some(name) => {
                errs.push(ConfigError::new(
                    "model.base_family",
                    format!("cannot nest {name:?}; use wishart, gcir, or ou"),
                ));
                return None;
            }
            None => {
                errs.push(ConfigError::new(
                    "model.base_family",
                    "the general family wraps a base family",
                ));
                return None;
            }
        };
        let base = build_family(errs, m, &base_name);
        let rate = match m.rate {
            Some(r) => finite(errs, "model.rate", r),
            None => {
                errs.push(ConfigError::new("model.rate", "the general family needs rate"));
                None
            }
        };
        let floor_c = match m.floor_c {
            Some(c) => finite(errs, "model.floor_c", c),
            None => {
                errs.push(ConfigError::new(
                    "model.floor_c",
                    "the general family needs an explicit floor_c",
                ));
                None
            }
        };
        Some(FamilySpec::General(GeneralParams {
            base: Box::new(base?),
            rate: rate?,
            floor_c: floor_c?,
        }))
    } else {
        forbid(errs, "model.base_family", &m.base_family, &m.family);
        forbid(errs, "model.rate", &m.rate, &m.family);
        forbid(errs, "model.floor_c", &m.floor_c, &m.family);
        build_family(errs, m, &m.family)
    };
    let jump = build_jumps(errs, &m.jumps, m.d);
    let k = build_k(errs, &m.k, m.d);
    let spec = ModelSpec::new(m.d, family?, JumpSpec::None, KSpec::Identity);
    let spec = match spec {
        Ok(s) => s,
        Err(e) => {
            errs.push(ConfigError::new("model", e.to_string()));
            return None;
        }
    };
    match spec.with_jump(jump?, k?) {
        Ok(s) => Some(s),
        Err(e) => {
            errs.push(ConfigError::new("model.jumps", e.to_string()));
            None
        }
    }
}

fn build(raw: RawConfig, subcommand: &str, ov: &Overrides) -> Result<RunConfig, Vec<ConfigError>> {
    let mut errs: Vec<ConfigError> = Vec::new();

    if let Some(s) = &raw.subcommand {
        if !SUBCOMMANDS.contains(&s.as_str()) {
            errs.push(ConfigError::new("subcommand", format!("unknown subcommand {s:?}")));
        }
    }

    let model = build_model(&mut errs, &raw.model);
    let d = raw.model.d.max(1);

    // Sim block.
    let dt = raw.sim.dt.unwrap_or(1e-3);
    if !(dt.is_finite() && dt > 0.0) {
        errs.push(ConfigError::new("sim.dt", format!("must be positive and finite: {dt}")));
    }
    let horizon = raw.sim.horizon.unwrap_or(1.0);
    if !(horizon.is_finite() && horizon > 0.0) {
        errs.push(ConfigError::new("sim.horizon", format!("must be positive and finite: {horizon}")));
    }
    let x0 = match &raw.sim.x0 {
        None => Some(SymMatrix::identity(d)),
        Some(text) => parse_symmetric(&mut errs, "sim.x0", text, d),
    };
    let boundary_eps = match raw.sim.boundary_eps {
        Some(eps) => {
            if !(eps.is_finite() && eps > 0.0) {
                errs.push(ConfigError::new(
                    "sim.boundary_eps",
                    format!("must be positive and finite: {eps}"),
                ));
            }
            eps
        }
        None => x0.as_ref().map(sim::default_boundary_eps).unwrap_or(1e-8),
    };
    let policy = match raw.sim.policy.as_deref() {
        None | Some("stop") => BoundaryPolicy::Stop,
        Some("clamp") => BoundaryPolicy::Clamp,
        Some("halve") => BoundaryPolicy::Halve,
        Some(other) => {
            errs.push(ConfigError::new(
                "sim.policy",
                format!("unknown policy {other:?}; expected stop, clamp, or halve"),
            ));
            BoundaryPolicy::Stop
        }
    };
    let max_halvings = raw.sim.max_halvings.unwrap_or(4);
    if max_halvings > 40 {
        errs.push(ConfigError::new("sim.max_halvings", format!("at most 40: {max_halvings}")));
    }
    let mut record_stride = raw.sim.record_stride.unwrap_or(1);
    if record_stride == 0 {
        errs.push(ConfigError::new("sim.record_stride", "must be at least 1"));
        record_stride = 1;
    }
    let record_noise = raw.sim.record_noise.unwrap_or(false);
    if record_noise && record_stride != 1 {
        errs.push(ConfigError::new("sim.record_noise", "needs record_stride = 1"));
    }
    if subcommand == "verify" && record_stride != 1 {
        errs.push(ConfigError::new("sim.record_stride", "verify needs record_stride = 1"));
    }

    // Experiment block.
    let n_paths = raw.experiment.n_paths.unwrap_or(200);
    if n_paths == 0 {
        errs.push(ConfigError::new("experiment.n_paths", "must be at least 1"));
    }
    let checkpoints = raw
        .experiment
        .checkpoints
        .clone()
        .unwrap_or_else(|| default_checkpoints(horizon, 5));
    for (i, pair) in checkpoints.windows(2).enumerate() {
        if pair[0] >= pair[1] {
            errs.push(ConfigError::new(
                format!("experiment.checkpoints[{}]", i + 1),
                "checkpoints must increase strictly",
            ));
        }
    }
    for (i, cp) in checkpoints.iter().enumerate() {
        if !(cp.is_finite() && *cp > 0.0 && *cp <= horizon * (1.0 + 1e-12)) {
            errs.push(ConfigError::new(
                format!("experiment.checkpoints[{i}]"),
                format!("must lie in (0, horizon]: {cp}"),
            ));
        }
    }
    let axis = raw.experiment.axis.clone().unwrap_or_default();
    for (i, v) in axis.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            errs.push(ConfigError::new(
                format!("experiment.axis[{i}]"),
                format!("must be finite and non-negative: {v}"),
            ));
        }
    }
    if subcommand == "sweep" {
        if axis.is_empty() {
            errs.push(ConfigError::new("experiment.axis", "sweep needs a non-empty axis"));
        }
        if raw.model.family != "wishart" {
            errs.push(ConfigError::new(
                "model.family",
                "sweep rescales b = delta*QtQ and needs the wishart family",
            ));
        }
    }
    let h_forms = raw
        .experiment
        .h_forms
        .clone()
        .unwrap_or_else(|| vec!["identity".to_string()]);
    for (i, name) in h_forms.iter().enumerate() {
        if parse_h_form(name, d).is_none() {
            errs.push(ConfigError::new(
                format!("experiment.h_forms[{i}]"),
                format!("expected identity, sqrt-state, or a {d}x{d} symmetric matrix literal: {name:?}"),
            ));
        }
    }
    let variants = raw.experiment.variants.clone().unwrap_or_default();
    for (i, v) in variants.iter().enumerate() {
        if let Err(e) = GcirVariant::parse(v) {
            errs.push(ConfigError::new(format!("experiment.variants[{i}]"), e.to_string()));
        }
    }
    let samples = raw.experiment.samples.unwrap_or(200);
    if samples == 0 {
        errs.push(ConfigError::new("experiment.samples", "must be at least 1"));
    }
    if let Some(c) = raw.experiment.claimed_floor {
        let _ = finite(&mut errs, "experiment.claimed_floor", c);
    }

    let seed = ov.seed.or(raw.seed).unwrap_or(0);
    let out_dir = ov
        .out
        .clone()
        .or_else(|| raw.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    if !errs.is_empty() {
        return Err(errs);
    }

    let sim = SimConfig {
        dt,
        horizon,
        boundary_eps,
        policy,
        max_halvings,
        seed,
        record_stride,
        record_noise,
    };
    Ok(RunConfig {
        subcommand: subcommand.to_string(),
        seed,
        model: model.expect("validated"),
        x0: x0.expect("validated"),
        sim,
        experiment: Experiment {
            n_paths,
            checkpoints,
            axis,
            h_forms,
            variants,
            samples,
            claimed_floor: raw.experiment.claimed_floor,
            paths_csv: raw.experiment.paths_csv.unwrap_or(false),
        },
        out_dir,
    })
}

pub fn parse_h_form(name: &str, d: usize) -> Option<HForm> {
    match name {
        "identity" => Some(HForm::Constant(SymMatrix::identity(d))),
        "sqrt-state" => Some(HForm::SqrtState),
        literal => {
            let m = psd::parse_sym(literal).ok()?;
            (m.dim() == d).then_some(HForm::Constant(m))
        }
    }
}

// ---------------------------------------------------------------------------
// Effective-config emission.

fn fmt(m: &GeneralMatrix) -> String {
    psd::format_matrix(m)
}

fn gamma_to_raw(g: &GammaSpec) -> RawGamma {
    let empty = RawGamma {
        kind: String::new(),
        value: None,
        factors: None,
        coeff: None,
        power: None,
        offset: None,
        direction: None,
    };
    match g {
        GammaSpec::Zero => RawGamma { kind: "zero".into(), ..empty },
        GammaSpec::Constant(c) => RawGamma {
            kind: "constant".into(),
            value: Some(fmt(c.as_matrix())),
            ..empty
        },
        GammaSpec::Congruence(factors) => RawGamma {
            kind: "congruence".into(),
            factors: Some(factors.iter().map(fmt).collect()),
            ..empty
        },
        GammaSpec::ScaledTrace { coeff, power, offset, direction } => RawGamma {
            kind: "scaled-trace".into(),
            coeff: Some(*coeff),
            power: Some(*power),
            offset: Some(*offset),
            direction: Some(fmt(direction.as_matrix())),
            ..empty
        },
    }
}

fn jumps_to_raw(j: &JumpSpec) -> Option<RawJumps> {
    let empty = RawJumps {
        kind: String::new(),
        rate: None,
        mark: None,
        sigma: None,
        mu: None,
        value: None,
        times: None,
        marks: None,
    };
    match j {
        JumpSpec::None => None,
        JumpSpec::CompoundPoisson { rate, mark_law } => {
            let mut raw = RawJumps { kind: "poisson".into(), rate: Some(*rate), ..empty };
            match mark_law {
                MarkLaw::RankOne { sigma } => {
                    raw.mark = Some("rank-one".into());
                    raw.sigma = Some(*sigma);
                }
                MarkLaw::DiagExponential { mu } => {
                    raw.mark = Some("diag-exponential".into());
                    raw.mu = Some(*mu);
                }
                MarkLaw::ConstantMark(m) => {
                    raw.mark = Some("constant".into());
                    raw.value = Some(fmt(m.as_matrix()));
                }
            }
            Some(raw)
        }
        JumpSpec::DeterministicSchedule(items) => Some(RawJumps {
            kind: "schedule".into(),
            times: Some(items.iter().map(|(t, _)| *t).collect()),
            marks: Some(items.iter().map(|(_, m)| fmt(m.as_matrix())).collect()),
            ..empty
        }),
    }
}

fn k_to_raw(k: &KSpec) -> Option<RawK> {
    match k {
        KSpec::Identity => None,
        KSpec::Scale(c) => Some(RawK { kind: "scale".into(), value: Some(*c), matrix: None }),
        KSpec::Congruence(a) => {
            Some(RawK { kind: "congruence".into(), value: None, matrix: Some(fmt(a)) })
        }
        KSpec::StateCongruence => {
            Some(RawK { kind: "state-congruence".into(), value: None, matrix: None })
        }
    }
}

fn family_to_raw(raw: &mut RawModel, f: &FamilySpec) {
    match f {
        FamilySpec::Wishart(p) => {
            raw.q = Some(fmt(&p.q));
            raw.beta = Some(fmt(&p.beta));
            raw.b = Some(fmt(p.b.as_matrix()));
            raw.gamma = Some(gamma_to_raw(&p.gamma));
        }
        FamilySpec::Gcir(p) => {
            raw.alpha = Some(p.alpha);
            raw.q = Some(fmt(&p.q));
            raw.beta = Some(fmt(&p.beta));
            raw.b = Some(fmt(p.b.as_matrix()));
            raw.gamma = Some(gamma_to_raw(&p.gamma));
        }
        FamilySpec::Ou(p) => {
            raw.b = Some(fmt(p.b.as_matrix()));
            raw.gamma = Some(gamma_to_raw(&p.gamma));
        }
        FamilySpec::General(p) => {
            raw.base_family = Some(p.base.name().to_string());
            raw.rate = Some(p.rate);
            raw.floor_c = Some(p.floor_c);
            family_to_raw(raw, &p.base);
        }
    }
}

pub fn to_raw(cfg: &RunConfig) -> RawConfig {
    let mut model = RawModel {
        family: cfg.model.family().name().to_string(),
        d: cfg.model.dim(),
        q: None,
        beta: None,
        b: None,
        delta: None,
        alpha: None,
        base_family: None,
        rate: None,
        floor_c: None,
        gamma: None,
        jumps: None,
        k: None,
    };
    family_to_raw(&mut model, cfg.model.family());
    model.jumps = jumps_to_raw(cfg.model.jump());
    model.k = k_to_raw(cfg.model.k_op());
    RawConfig {
        subcommand: Some(cfg.subcommand.clone()),
        seed: Some(cfg.seed),
        model,
        sim: RawSim {
            dt: Some(cfg.sim.dt),
            horizon: Some(cfg.sim.horizon),
            x0: Some(fmt(cfg.x0.as_matrix())),
            boundary_eps: Some(cfg.sim.boundary_eps),
            policy: Some(cfg.sim.policy.as_str().to_string()),
            max_halvings: Some(cfg.sim.max_halvings),
            record_stride: Some(cfg.sim.record_stride),
            record_noise: Some(cfg.sim.record_noise),
        },
        experiment: RawExperiment {
            n_paths: Some(cfg.experiment.n_paths),
            checkpoints: Some(cfg.experiment.checkpoints.clone()),
            axis: Some(cfg.experiment.axis.clone()),
            h_forms: Some(cfg.experiment.h_forms.clone()),
            variants: Some(cfg.experiment.variants.clone()),
            samples: Some(cfg.experiment.samples),
            claimed_floor: cfg.experiment.claimed_floor,
            paths_csv: Some(cfg.experiment.paths_csv),
        },
        output: RawOutput { dir: Some(cfg.out_dir.to_string_lossy().into_owned()) },
    }
}

pub fn effective_toml(cfg: &RunConfig) -> String {
    toml::to_string(&to_raw(cfg)).expect("effective config serializes")
}
