//! Run configuration: TOML parsing and validation.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use optpot::{JacobianKind, PotentialSpec, SolverOptions, TargetSet};
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use toml::Spanned;

use crate::error::ConfigError;

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_OUTPUT_DIR: &str = "optpot-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Inverse,
    Verify,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Inverse => "inverse",
            Mode::Verify => "verify",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Settings for the minimality oracle in verify mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSettings {
    pub basis_dim: usize,
    pub trials: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            basis_dim: 32,
            trials: 5,
        }
    }
}

/// A validated run description with all defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub length: f64,
    pub n: usize,
    pub potential: PotentialSpec,
    pub m: usize,
    /// Present exactly when `mode` is not `forward`.
    pub targets: Option<TargetSet>,
    pub solver: SolverOptions,
    pub oracle: OracleSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// A real number that may also be written as `"pi"`, `"2pi"`, `"0.5pi"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

fn parse_pi_multiple(text: &str) -> Option<f64> {
    let factor = text.trim().strip_suffix("pi")?.trim_end();
    let factor = factor.strip_suffix('*').unwrap_or(factor).trim();
    let k = match factor {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(k * PI)
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RealVisitor;

        impl Visitor<'_> for RealVisitor {
            type Value = Real;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or a multiple of pi such as \"2pi\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                if v.is_finite() {
                    Ok(Real(v))
                } else {
                    Err(E::invalid_value(de::Unexpected::Float(v), &self))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                parse_pi_multiple(v)
                    .filter(|x| x.is_finite())
                    .map(Real)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(RealVisitor)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialTable {
    kind: String,
    value: Option<Real>,
    strength: Option<Real>,
    center: Option<Real>,
    depth: Option<Real>,
    left: Option<Real>,
    right: Option<Real>,
    path: Option<PathBuf>,
    column: Option<String>,
}

/// Either a bare preset name (`potential = "zero"`) or a table.
#[derive(Debug)]
enum RawPotential {
    Named(String),
    Table(PotentialTable),
}

impl<'de> Deserialize<'de> for RawPotential {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PotentialVisitor;

        impl<'de> Visitor<'de> for PotentialVisitor {
            type Value = RawPotential;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a preset name or a table with a `kind` key")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<RawPotential, E> {
                Ok(RawPotential::Named(v.to_owned()))
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<RawPotential, A::Error> {
                PotentialTable::deserialize(de::value::MapAccessDeserializer::new(map))
                    .map(RawPotential::Table)
            }
        }

        deserializer.deserialize_any(PotentialVisitor)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum JacobianChoice {
    Gram,
    FiniteDifference,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    scf_tol: Option<Real>,
    scf_damping: Option<Real>,
    scf_max_iter: Option<usize>,
    newton_tol: Option<Real>,
    newton_max_iter: Option<usize>,
    homotopy_steps: Option<usize>,
    sigma_threshold: Option<Real>,
    jacobian: Option<JacobianChoice>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    basis_dim: Option<usize>,
    trials: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Spanned<Mode>,
    #[serde(rename = "L", alias = "length")]
    length: Spanned<Real>,
    n: Option<Spanned<usize>>,
    potential: Option<Spanned<RawPotential>>,
    m: Option<Spanned<usize>>,
    targets: Option<Spanned<Vec<Real>>>,
    solver: Option<Spanned<RawSolver>>,
    oracle: Option<Spanned<RawOracle>>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
}

/// Line lookup for semantic errors.
struct Source<'a>(&'a str);

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].matches('\n').count() + 1
    }

    fn error(&self, field: &str, span: Option<Range<usize>>, message: String) -> ConfigError {
        ConfigError::Semantic {
            field: field.to_owned(),
            line: span.map(|s| self.line(s)),
            message,
        }
    }
}

/// Parses and validates a TOML run description.
///
/// Relative sample-file paths and `output_dir` are kept as written; use
/// [`load_config`] to resolve them against the config file's directory.
pub fn validate_config(raw: &str) -> Result<RunConfig, ConfigError> {
    let src = Source(raw);
    let parsed: RawConfig =
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_owned()))?;

    let mode = *parsed.mode.get_ref();
    let length = parsed.length.get_ref().0;
    if length <= 0.0 {
        return Err(src.error(
            "L",
            Some(parsed.length.span()),
            format!("interval length must be positive, got {length}"),
        ));
    }

    let n = parsed.n.as_ref().map_or(DEFAULT_N, |n| *n.get_ref());
    if n < 3 {
        return Err(src.error(
            "n",
            parsed.n.as_ref().map(|n| n.span()),
            format!("need at least 3 interior nodes, got {n}"),
        ));
    }

    let targets = match (&parsed.targets, mode) {
        (Some(t), Mode::Forward) => {
            return Err(src.error(
                "targets",
                Some(t.span()),
                "targets are only used in inverse and verify modes; remove them or change mode"
                    .into(),
            ))
        }
        (None, Mode::Inverse | Mode::Verify) => {
            return Err(src.error(
                "targets",
                None,
                format!("mode = \"{mode}\" requires a `targets` array of eigenvalues"),
            ))
        }
        (None, Mode::Forward) => None,
        (Some(t), _) => {
            let values: Vec<f64> = t.get_ref().iter().map(|r| r.0).collect();
            let set = TargetSet::new(values).map_err(|e| {
                src.error(
                    "targets",
                    Some(t.span()),
                    strip_invalid_argument(e.to_string()),
                )
            })?;
            Some(set)
        }
    };

    let m = match (&parsed.m, &targets) {
        (Some(m), Some(t)) if *m.get_ref() != t.len() => {
            return Err(src.error(
                "m",
                Some(m.span()),
                format!(
                    "m = {} but {} targets were given; drop m or make them agree",
                    m.get_ref(),
                    t.len()
                ),
            ))
        }
        (Some(m), _) => *m.get_ref(),
        (None, Some(t)) => t.len(),
        (None, None) => {
            return Err(src.error(
                "m",
                None,
                "forward mode requires `m`, the number of eigenpairs to compute".into(),
            ))
        }
    };
    if m == 0 {
        return Err(src.error(
            "m",
            parsed.m.as_ref().map(|m| m.span()),
            "m must be at least 1".into(),
        ));
    }
    if m > n {
        let span = parsed
            .m
            .as_ref()
            .map(|m| m.span())
            .or_else(|| parsed.targets.as_ref().map(|t| t.span()));
        return Err(src.error(
            "m",
            span,
            format!("m = {m} exceeds the number of interior nodes n = {n}; increase n"),
        ));
    }

    let potential = match &parsed.potential {
        None => PotentialSpec::Zero,
        Some(p) => potential_spec(p.get_ref(), length)
            .map_err(|message| src.error("potential", Some(p.span()), message))?,
    };

    let solver = match &parsed.solver {
        None => SolverOptions::default(),
        Some(s) => {
            let opts = solver_options(s.get_ref());
            opts.validate().map_err(|e| {
                src.error(
                    "solver",
                    Some(s.span()),
                    strip_invalid_argument(e.to_string()),
                )
            })?;
            opts
        }
    };

    let oracle = match &parsed.oracle {
        None => OracleSettings::default(),
        Some(o) => {
            let raw = o.get_ref();
            let defaults = OracleSettings::default();
            let settings = OracleSettings {
                basis_dim: raw.basis_dim.unwrap_or(defaults.basis_dim),
                trials: raw.trials.unwrap_or(defaults.trials),
            };
            if settings.basis_dim < m {
                return Err(src.error(
                    "oracle.basis_dim",
                    Some(o.span()),
                    format!(
                        "basis_dim = {} must be at least m = {m}",
                        settings.basis_dim
                    ),
                ));
            }
            settings
        }
    };

    Ok(RunConfig {
        mode,
        length,
        n,
        potential,
        m,
        targets,
        solver,
        oracle,
        output_dir: parsed
            .output_dir
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        seed: parsed.seed.unwrap_or(0),
    })
}

/// Reads and validates a config file, resolving relative paths against its
/// directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut config = validate_config(&raw)?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let PotentialSpec::Samples { path: samples, .. } = &mut config.potential {
        if samples.is_relative() {
            *samples = base.join(&*samples);
        }
    }
    if config.output_dir.is_relative() {
        config.output_dir = base.join(&config.output_dir);
    }
    Ok(config)
}

fn strip_invalid_argument(message: String) -> String {
    message
        .strip_prefix("invalid argument: ")
        .map(str::to_owned)
        .unwrap_or(message)
}

fn potential_spec(raw: &RawPotential, length: f64) -> Result<PotentialSpec, String> {
    let table = match raw {
        RawPotential::Named(name) => match name.as_str() {
            "zero" => return Ok(PotentialSpec::Zero),
            other => {
                return Err(format!(
                    "only \"zero\" can be given by name, got \"{other}\"; use a table with `kind` for parametrized presets"
                ))
            }
        },
        RawPotential::Table(t) => t,
    };

    let given = [
        ("value", table.value.is_some()),
        ("strength", table.strength.is_some()),
        ("center", table.center.is_some()),
        ("depth", table.depth.is_some()),
        ("left", table.left.is_some()),
        ("right", table.right.is_some()),
        ("path", table.path.is_some()),
        ("column", table.column.is_some()),
    ];
    let allowed: &[&str] = match table.kind.as_str() {
        "zero" => &[],
        "constant" => &["value"],
        "harmonic" => &["strength", "center"],
        "square_well" => &["depth", "left", "right"],
        "samples" => &["path", "column"],
        other => {
            return Err(format!(
                "unknown kind \"{other}\"; expected one of zero, constant, harmonic, square_well, samples"
            ))
        }
    };
    if let Some((key, _)) = given
        .iter()
        .find(|(key, present)| *present && !allowed.contains(key))
    {
        return Err(format!(
            "`{key}` does not apply to kind = \"{}\"",
            table.kind
        ));
    }

    let require = |key: &str, v: Option<Real>| {
        v.map(|r| r.0)
            .ok_or_else(|| format!("kind = \"{}\" requires `{key}`", table.kind))
    };

    Ok(match table.kind.as_str() {
        "zero" => PotentialSpec::Zero,
        "constant" => PotentialSpec::Constant(require("value", table.value)?),
        "harmonic" => PotentialSpec::Harmonic {
            strength: require("strength", table.strength)?,
            center: table.center.map_or(length / 2.0, |c| c.0),
        },
        "square_well" => {
            let (left, right) = (require("left", table.left)?, require("right", table.right)?);
            if left >= right {
                return Err(format!(
                    "square well needs left < right, got left = {left}, right = {right}"
                ));
            }
            PotentialSpec::SquareWell {
                depth: require("depth", table.depth)?,
                left,
                right,
            }
        }
        _ => PotentialSpec::Samples {
            path: table
                .path
                .clone()
                .ok_or_else(|| "kind = \"samples\" requires `path`".to_owned())?,
            column: table.column.clone(),
        },
    })
}

fn solver_options(raw: &RawSolver) -> SolverOptions {
    let d = SolverOptions::default();
    SolverOptions {
        scf_tol: raw.scf_tol.map_or(d.scf_tol, |r| r.0),
        scf_damping: raw.scf_damping.map_or(d.scf_damping, |r| r.0),
        scf_max_iter: raw.scf_max_iter.unwrap_or(d.scf_max_iter),
        newton_tol: raw.newton_tol.map_or(d.newton_tol, |r| r.0),
        newton_max_iter: raw.newton_max_iter.unwrap_or(d.newton_max_iter),
        homotopy_steps: raw.homotopy_steps.unwrap_or(d.homotopy_steps),
        sigma_threshold: raw.sigma_threshold.map_or(d.sigma_threshold, |r| r.0),
        jacobian: match raw.jacobian {
            None => d.jacobian,
            Some(JacobianChoice::Gram) => JacobianKind::Gram,
            Some(JacobianChoice::FiniteDifference) => JacobianKind::FiniteDifference,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn semantic(err: ConfigError) -> (String, Option<usize>, String) {
        match err {
            ConfigError::Semantic {
                field,
                line,
                message,
            } => (field, line, message),
            other => panic!("expected a semantic error, got {other}"),
        }
    }

    #[test]
    fn minimal_forward_config() {
        let cfg = validate_config(
            "mode = \"forward\"\nL = \"pi\"\nn = 2000\npotential = \"zero\"\nm = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Forward);
        assert_eq!(cfg.length, PI);
        assert_eq!(cfg.n, 2000);
        assert_eq!(cfg.m, 3);
        assert_eq!(cfg.potential, PotentialSpec::Zero);
        assert!(cfg.targets.is_none());
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn defaults_are_filled() {
        let cfg = validate_config("mode = \"inverse\"\nL = 3\ntargets = [2, 5.5]\n").unwrap();
        assert_eq!(cfg.n, DEFAULT_N);
        assert_eq!(cfg.m, 2);
        assert_eq!(cfg.length, 3.0);
        assert_eq!(cfg.targets.unwrap().values(), &[2.0, 5.5]);
        assert_eq!(cfg.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert_eq!(cfg.oracle, OracleSettings::default());
    }

    #[test]
    fn pi_multiples() {
        assert_eq!(parse_pi_multiple("pi"), Some(PI));
        assert_eq!(parse_pi_multiple("2pi"), Some(2.0 * PI));
        assert_eq!(parse_pi_multiple("0.5pi"), Some(0.5 * PI));
        assert_eq!(parse_pi_multiple(" -pi "), Some(-PI));
        assert_eq!(parse_pi_multiple("3*pi"), Some(3.0 * PI));
        assert_eq!(parse_pi_multiple("tau"), None);
        assert_eq!(parse_pi_multiple("xpi"), None);
    }

    #[test]
    fn decreasing_targets_are_rejected() {
        let raw = "mode = \"inverse\"\nL = \"pi\"\ntargets = [5, 2]\n";
        let (field, line, message) = semantic(validate_config(raw).unwrap_err());
        assert_eq!(field, "targets");
        assert_eq!(line, Some(3));
        assert!(
            message.contains("targets must be strictly increasing"),
            "{message}"
        );
    }

    #[test]
    fn inverse_mode_needs_targets() {
        let (field, _, message) =
            semantic(validate_config("mode = \"inverse\"\nL = 1\nm = 2\n").unwrap_err());
        assert_eq!(field, "targets");
        assert!(message.contains("requires"));
    }

    #[test]
    fn forward_mode_rejects_targets() {
        let raw = "mode = \"forward\"\nL = 1\nm = 1\ntargets = [1]\n";
        assert_eq!(semantic(validate_config(raw).unwrap_err()).0, "targets");
    }

    #[test]
    fn m_larger_than_n() {
        let raw = "mode = \"forward\"\nL = 1\nn = 4\nm = 5\n";
        let (field, line, message) = semantic(validate_config(raw).unwrap_err());
        assert_eq!(field, "m");
        assert_eq!(line, Some(4));
        assert!(message.contains("exceeds"));
    }

    #[test]
    fn m_must_match_targets() {
        let raw = "mode = \"verify\"\nL = 1\nm = 3\ntargets = [1, 2]\n";
        assert_eq!(semantic(validate_config(raw).unwrap_err()).0, "m");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = validate_config("mode = \"forward\"\nL = \"banana\"\nm = 1\n").unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(text.contains("line 2"), "{text}");

        let err = validate_config("mode = \"sideways\"\nL = 1\nm = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        let err = validate_config("mode = \"forward\"\nL = 1\nm = 1\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn potential_tables() {
        let raw =
            "mode = \"forward\"\nL = 10\nm = 2\n[potential]\nkind = \"harmonic\"\nstrength = 4\n";
        let cfg = validate_config(raw).unwrap();
        assert_eq!(
            cfg.potential,
            PotentialSpec::Harmonic {
                strength: 4.0,
                center: 5.0
            }
        );

        let raw = "mode = \"forward\"\nL = \"pi\"\nm = 2\n[potential]\nkind = \"square_well\"\ndepth = -10\nleft = \"0.25pi\"\nright = \"0.75pi\"\n";
        let cfg = validate_config(raw).unwrap();
        assert_eq!(
            cfg.potential,
            PotentialSpec::SquareWell {
                depth: -10.0,
                left: 0.25 * PI,
                right: 0.75 * PI
            }
        );

        let raw = "mode = \"forward\"\nL = 1\nm = 1\n[potential]\nkind = \"samples\"\npath = \"v.csv\"\ncolumn = \"v_hat\"\n";
        let cfg = validate_config(raw).unwrap();
        assert_eq!(
            cfg.potential,
            PotentialSpec::Samples {
                path: "v.csv".into(),
                column: Some("v_hat".into())
            }
        );
    }

    #[test]
    fn bad_potential_parameters() {
        let raw = "mode = \"forward\"\nL = 1\nm = 1\n[potential]\nkind = \"constant\"\n";
        let (field, line, message) = semantic(validate_config(raw).unwrap_err());
        assert_eq!(field, "potential");
        assert!(line.is_some());
        assert!(message.contains("requires `value`"));

        let raw =
            "mode = \"forward\"\nL = 1\nm = 1\n[potential]\nkind = \"harmonic\"\nstrength = 1\ndepth = 2\n";
        assert!(semantic(validate_config(raw).unwrap_err())
            .2
            .contains("does not apply"));

        let raw = "mode = \"forward\"\nL = 1\nm = 1\npotential = \"harmonic\"\n";
        assert_eq!(semantic(validate_config(raw).unwrap_err()).0, "potential");
    }

    #[test]
    fn solver_overrides() {
        let raw = "mode = \"inverse\"\nL = 1\ntargets = [20]\n[solver]\nscf_damping = 0.3\njacobian = \"finite_difference\"\nhomotopy_steps = 4\n";
        let cfg = validate_config(raw).unwrap();
        assert_eq!(cfg.solver.scf_damping, 0.3);
        assert_eq!(cfg.solver.homotopy_steps, 4);
        assert_eq!(cfg.solver.jacobian, JacobianKind::FiniteDifference);
        assert_eq!(cfg.solver.scf_tol, SolverOptions::default().scf_tol);

        let raw = "mode = \"inverse\"\nL = 1\ntargets = [20]\n[solver]\nscf_damping = 1.5\n";
        let (field, line, _) = semantic(validate_config(raw).unwrap_err());
        assert_eq!(field, "solver");
        assert_eq!(line, Some(4));
    }

    #[test]
    fn nonpositive_length() {
        let (field, line, _) =
            semantic(validate_config("mode = \"forward\"\nm = 1\nL = \"-pi\"\n").unwrap_err());
        assert_eq!(field, "L");
        assert_eq!(line, Some(3));
    }
}
