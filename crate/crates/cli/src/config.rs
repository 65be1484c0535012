//! Versioned JSON configuration shared by every workflow.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use sdsvar::estimate::FitOptions;
use sdsvar::model::{RestrictionMap, StaticParams};
use sdsvar::simulate::{self, DgpConfig, DgpKind, InitStrategy};
use sdsvar::{ModelSpec, ThetaVector};

use crate::error::{CliError, Context, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub dgp: Option<DgpSection>,
    #[serde(default)]
    pub statics: Option<StaticsSection>,
    #[serde(default)]
    pub init: Option<InitSection>,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub irf: IrfSection,
    #[serde(default)]
    pub mc: McSection,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Correctly specified score-driven model, two lags.
    ScoreDriven,
    /// Deterministic sine paths.
    Sine,
    /// Random walks moved by the structural shocks.
    ShockDriven,
    /// Heterogeneous lags with 13 statics, monthly-sample shape.
    EmpiricalStyle,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpSection {
    Preset { name: Preset, t_len: usize },
    Explicit { spec: ModelSpec, t_len: usize, theta0: ThetaVector, process: DgpKind },
}

impl DgpSection {
    pub fn build(&self, seed: u64) -> DgpConfig {
        match self {
            DgpSection::Preset { name, t_len } => match name {
                Preset::ScoreDriven => simulate::reference_score_driven(*t_len, seed),
                Preset::Sine => simulate::reference_sine(*t_len, seed),
                Preset::ShockDriven => simulate::reference_shock_driven(*t_len, seed),
                Preset::EmpiricalStyle => simulate::empirical_style(*t_len, seed),
            },
            DgpSection::Explicit { spec, t_len, theta0, process } => {
                DgpConfig { spec: spec.clone(), t_len: *t_len, theta0: theta0.clone(), kind: process.clone(), seed }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    /// One α per parameter matrix.
    ByMatrix,
    /// Separate diagonal α's, shared off-diagonal ones.
    DiagonalOffdiagonal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StaticsSection {
    /// `ω = 0`, `β = 1` with one α per group; for `estimate` these are the
    /// starting values.
    Integrated { restriction: Restriction, alpha: Vec<f64> },
    Explicit { statics: StaticParams },
    /// θ never moves.
    Frozen,
    /// Statics, covariance, model and θ₀ from an `estimate.json`.
    Estimate { path: PathBuf },
}

impl StaticsSection {
    /// Statics for `spec`, or `None` for the estimate-file variant, which the
    /// caller resolves itself.
    pub fn direct(&self, spec: &ModelSpec) -> Result<Option<StaticParams>> {
        Ok(match self {
            StaticsSection::Integrated { restriction, alpha } => {
                let map = match restriction {
                    Restriction::ByMatrix => RestrictionMap::by_matrix(spec),
                    Restriction::DiagonalOffdiagonal => RestrictionMap::diagonal_offdiagonal(spec),
                };
                Some(StaticParams::integrated(spec.dim(), map, alpha).context("statics")?)
            }
            StaticsSection::Explicit { statics } => {
                statics.validate(spec.dim()).context("statics")?;
                Some(statics.clone())
            }
            StaticsSection::Frozen => Some(StaticParams::frozen(spec.dim())),
            StaticsSection::Estimate { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    /// OLS on the first `window` observations with `A = 0`.
    Ols { window: usize },
    Explicit { theta0: ThetaVector },
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection::Ols { window: 120 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub starts: usize,
    pub max_evals: usize,
    pub polish: bool,
    pub hessian_step: f64,
    /// Refit the pseudo-densities to the first-step shocks and re-estimate.
    pub two_step: bool,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let f = FitOptions::default();
        EstimateSection { starts: f.starts, max_evals: f.max_evals, polish: f.polish, hessian_step: f.hessian_step, two_step: false }
    }
}

impl EstimateSection {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions { starts: self.starts, max_evals: self.max_evals, polish: self.polish, hessian_step: self.hessian_step }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Parameter draws for the filtered-path bands; 0 turns them off.
    pub band_draws: usize,
    pub smoother: bool,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection { band_draws: sdsvar::filter::DEFAULT_BAND_DRAWS, smoother: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrfSection {
    pub horizon: usize,
    pub draws: usize,
    pub antithetic: bool,
    /// Parameter-uncertainty repetitions; below 2 the half-widths are the
    /// Monte-Carlo standard errors.
    pub repetitions: usize,
}

impl Default for IrfSection {
    fn default() -> Self {
        IrfSection {
            horizon: sdsvar::irf::DEFAULT_HORIZON,
            draws: sdsvar::irf::DEFAULT_DRAWS,
            antithetic: true,
            repetitions: sdsvar::irf::DEFAULT_REPETITIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub replications: usize,
    pub init: InitStrategy,
    pub smoother: bool,
    /// Re-estimate the statics in every replication, starting from the
    /// `statics` section.
    pub estimate: bool,
    /// θ labels to summarize (`S11`, `A12`, `Phi1_11`, ...); empty means all.
    pub components: Vec<String>,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { replications: 200, init: InitStrategy::True, smoother: true, estimate: false, components: Vec::new() }
    }
}

/// Render a serde path as a JSON pointer.
fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            // The variant name is the `source` value, not a document key.
            Segment::Enum { .. } => {}
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Sections written as `{"source": tag, ...}`.
const TAGGED: [&str; 3] = ["dgp", "statics", "init"];
/// Tags that carry no fields.
const UNIT_TAGS: [&str; 1] = ["frozen"];

/// Turn `{"source": tag, ..rest}` into `{tag: rest}`. Internally tagged
/// enums buffer their content, which hides the path of any error inside.
fn retag(doc: &mut serde_json::Value) -> std::result::Result<(), (String, String)> {
    use serde_json::Value;
    let Some(root) = doc.as_object_mut() else { return Ok(()) };
    for key in TAGGED {
        let Some(Value::Object(body)) = root.get_mut(key) else { continue };
        let tag = match body.remove("source") {
            Some(Value::String(t)) => t,
            Some(_) => return Err((format!("/{key}/source"), "expected a string".into())),
            None => return Err((format!("/{key}"), "missing field `source`".into())),
        };
        let rest = std::mem::take(body);
        let inner = if rest.is_empty() && UNIT_TAGS.contains(&tag.as_str()) { Value::Null } else { Value::Object(rest) };
        root.insert(key.to_string(), Value::Object([(tag, inner)].into_iter().collect()));
    }
    Ok(())
}

pub fn parse(text: &str, origin: &Path) -> Result<Config> {
    let fail = |pointer: String, message: String| CliError::Config { path: origin.to_path_buf(), pointer, message };
    let mut doc: serde_json::Value = serde_json::from_str(text).map_err(|e| fail("/".into(), e.to_string()))?;
    retag(&mut doc).map_err(|(p, m)| fail(p, m))?;
    let cfg: Config = serde_path_to_error::deserialize(doc).map_err(|e| fail(pointer(e.path()), e.inner().to_string()))?;
    if cfg.version != CONFIG_VERSION {
        return Err(CliError::Config {
            path: origin.to_path_buf(),
            pointer: "/version".into(),
            message: format!("unsupported version {}, expected {CONFIG_VERSION}", cfg.version),
        });
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<(Config, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let text = String::from_utf8_lossy(&bytes);
    Ok((parse(&text, path)?, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_carry_a_json_pointer() {
        let text = r#"{"version": 1, "model": {"n": 3, "lag_mode": {"kind": "plain", "p": 2},
            "skewt": [{"delta": -0.7, "nu": 5}, {"delta": -0.6, "nu": "six"}, {"delta": 0.7, "nu": 5.5}]}}"#;
        match parse(text, Path::new("c.json")) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/model/skewt/1/nu"),
            other => panic!("{other:?}"),
        }
        match parse(r#"{"version": 1, "irf": {"horizn": 4}}"#, Path::new("c.json")) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/irf/horizn"),
            other => panic!("{other:?}"),
        }
        match parse(r#"{"version": 1, "statics": {"source": "integrated", "restriction": "by_matrix", "alpha": [0.1, "x"]}}"#, Path::new("c")) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/statics/alpha/1"),
            other => panic!("{other:?}"),
        }
        match parse(r#"{"version": 1, "init": {"window": 3}}"#, Path::new("c")) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/init"),
            other => panic!("{other:?}"),
        }
        assert!(parse(r#"{"version": 1, "statics": {"source": "frozen"}}"#, Path::new("c")).is_ok());
    }

    #[test]
    fn version_is_enforced() {
        match parse(r#"{"version": 2}"#, Path::new("c.json")) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/version"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_and_defaults() {
        let cfg = parse(r#"{"version": 1, "dgp": {"source": "preset", "name": "score_driven", "t_len": 50}}"#, Path::new("c")).unwrap();
        let dgp = cfg.dgp.unwrap().build(9);
        assert_eq!((dgp.t_len, dgp.seed), (50, 9));
        assert_eq!(cfg.irf.horizon, 60);
        assert_eq!(cfg.filter.band_draws, 360);
    }
}
