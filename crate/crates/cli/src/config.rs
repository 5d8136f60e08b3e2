use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, ValueEnum};
use ksol_core::orbit::rk::StepControl;
use ksol_core::orbit::IntegrateConfig;
use serde::Serialize;

/// Bad flags, bad config file or bad parameters; maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

const KEYS: &[&str] = &[
    "n", "k", "rho", "theta", "alpha", "s_max", "rtol", "atol", "format", "output", "grid", "orbits",
    "z_max", "rhos", "ratios", "alphas", "jobs",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (json or csv)")),
        }
    }
}

/// Flat `key = value` file, `#` starts a comment.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", i + 1));
            }
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key `{key}` = `{v}`: {e}"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| usage(format!("config key `{key}`: `{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

/// Flag value if given, else the config file value.
pub fn pick<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

pub fn pick_list(flag: &[f64], file: &FileConfig, key: &str) -> Result<Option<Vec<f64>>> {
    if flag.is_empty() {
        file.list(key)
    } else {
        Ok(Some(flag.to_vec()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Dimension n >= 3
    #[arg(long)]
    pub n: Option<u32>,
    /// Order k, 1 <= k <= n
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// theta > 0
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Shooting parameter at the origin (default 1)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Integration horizon in s = ln r (default 400)
    #[arg(long)]
    pub s_max: Option<f64>,
    /// Relative step tolerance (default 1e-10)
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute step tolerance on X; Z is always controlled relatively (default 1e-14)
    #[arg(long)]
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct IoArgs {
    /// Flat key = value file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub s_max: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub fn resolve(a: &ParamArgs, file: &FileConfig) -> Result<Self> {
        let defaults = IntegrateConfig::default();
        let t = Self {
            s_max: pick(a.s_max, file, "s_max")?.unwrap_or(defaults.s_max),
            rtol: pick(a.rtol, file, "rtol")?.unwrap_or(defaults.step.rtol),
            atol: pick(a.atol, file, "atol")?.unwrap_or(defaults.step.atol[0]),
        };
        if !(t.s_max > 0.0 && t.s_max.is_finite()) {
            return Err(usage(format!("s_max = {} must be positive", t.s_max)));
        }
        if !(t.rtol > 0.0 && t.rtol < 1.0) {
            return Err(usage(format!("rtol = {} must lie in (0, 1)", t.rtol)));
        }
        if !(t.atol >= 0.0 && t.atol.is_finite()) {
            return Err(usage(format!("atol = {} must be non-negative", t.atol)));
        }
        Ok(t)
    }

    pub fn integrate_config(&self) -> IntegrateConfig {
        let step = StepControl {
            rtol: self.rtol,
            atol: [self.atol, 0.0],
            ..StepControl::default()
        };
        IntegrateConfig {
            step,
            s_max: self.s_max,
            ..IntegrateConfig::default()
        }
    }
}

/// Fully resolved single-run configuration, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub n: u32,
    pub k: u32,
    pub rho: f64,
    pub theta: f64,
    pub alpha: f64,
    #[serde(flatten)]
    pub tol: Tolerances,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

pub fn load_file(io: &IoArgs) -> Result<FileConfig> {
    match &io.config {
        Some(path) => FileConfig::read(path),
        None => Ok(FileConfig::default()),
    }
}

pub fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required parameter --{name}")))
}

pub fn positive_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(alpha)
    } else {
        Err(usage(format!("alpha = {alpha} must be positive")))
    }
}

impl RunConfig {
    pub fn resolve(
        command: &'static str,
        a: &ParamArgs,
        io: &IoArgs,
        default_format: Format,
    ) -> Result<(Self, FileConfig)> {
        let file = load_file(io)?;
        let cfg = Self {
            command,
            n: required(pick(a.n, &file, "n")?, "n")?,
            k: required(pick(a.k, &file, "k")?, "k")?,
            rho: required(pick(a.rho, &file, "rho")?, "rho")?,
            theta: required(pick(a.theta, &file, "theta")?, "theta")?,
            alpha: positive_alpha(pick(a.alpha, &file, "alpha")?.unwrap_or(1.0))?,
            tol: Tolerances::resolve(a, &file)?,
            format: pick(io.format, &file, "format")?.unwrap_or(default_format),
            output: pick(io.output.clone(), &file, "output")?,
            config_file: io.config.clone(),
        };
        Ok((cfg, file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let f = FileConfig::parse("# run\nn = 4\nk=1 # order\n\ns-max = 50\nrhos = -1, 0, 1\n").unwrap();
        assert_eq!(f.get::<u32>("n").unwrap(), Some(4));
        assert_eq!(f.get::<f64>("s_max").unwrap(), Some(50.0));
        assert_eq!(f.list("rhos").unwrap(), Some(vec![-1.0, 0.0, 1.0]));
        assert_eq!(f.get::<f64>("theta").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(FileConfig::parse("nn = 4").unwrap_err().contains("unknown key"));
        assert!(FileConfig::parse("n 4").unwrap_err().contains("expected"));
        assert!(FileConfig::parse("n = 4\nn = 5").unwrap_err().contains("duplicate"));
        let f = FileConfig::parse("n = four").unwrap();
        assert!(f.get::<u32>("n").unwrap_err().downcast_ref::<Usage>().is_some());
    }

    #[test]
    fn flags_win_over_file() {
        let f = FileConfig::parse("rho = 2\ntheta = 3").unwrap();
        assert_eq!(pick(Some(-1.0), &f, "rho").unwrap(), Some(-1.0));
        assert_eq!(pick(None::<f64>, &f, "theta").unwrap(), Some(3.0));
    }
}
