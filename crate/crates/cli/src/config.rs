//! Run configuration: flat `key=value` files overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use ssep_core::InitialProfile;

use crate::error::CliError;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "SSEP_OUTPUT_DIR";

/// Keys in the order they are echoed into artifact headers.
pub const KEYS: &[&str] = &[
    "n", "k", "j", "init", "t-final", "times", "n-times", "replicas", "seed", "tol", "dt", "scheme", "h", "nr", "kind",
    "points", "window", "ladder", "format", "out-dir", "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    Oracle,
    Evolve,
    Macro,
    Kernels,
    Fourier,
    Study,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Oracle => "oracle",
            Self::Evolve => "evolve",
            Self::Macro => "macro",
            Self::Kernels => "kernels",
            Self::Fourier => "fourier",
            Self::Study => "study",
        }
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
    };
}

keyword_enum!(Scheme { Splitting => "splitting", Integral => "integral" });
keyword_enum!(KernelChoice { Reflected => "reflected", FullLine => "full-line", Neumann => "neumann", Boundary => "boundary", A => "a" });
keyword_enum!(Format { Csv => "csv", Json => "json", Both => "both" });

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub n: usize,
    pub k: usize,
    pub j: f64,
    pub init: InitialProfile,
    pub t_final: f64,
    /// Explicit output times; empty means `n_times` uniform times on `[0, t_final]`.
    pub times: Vec<f64>,
    pub n_times: usize,
    pub replicas: u64,
    pub seed: u64,
    pub tol: f64,
    /// Largest evolution step in units of `ε²`.
    pub dt: f64,
    pub scheme: Scheme,
    /// Macroscopic time step.
    pub h: f64,
    /// Macroscopic spatial grid size.
    pub nr: usize,
    pub kind: KernelChoice,
    pub points: Vec<f64>,
    pub window: f64,
    pub ladder: Vec<usize>,
    pub format: Format,
    pub out_dir: PathBuf,
    /// Worker threads, 0 for available parallelism.
    pub threads: usize,
}

fn defaults() -> BTreeMap<&'static str, String> {
    [
        ("n", "50"),
        ("k", "1"),
        ("j", "1"),
        ("init", "const:0.5"),
        ("t-final", "0.5"),
        ("times", ""),
        ("n-times", "11"),
        ("replicas", "1000"),
        ("seed", "1"),
        ("tol", "1e-10"),
        ("dt", "0.0625"),
        ("scheme", "splitting"),
        ("h", "0.001"),
        ("nr", "201"),
        ("kind", "reflected"),
        ("points", "-0.5,0,0.5"),
        ("window", "0.05"),
        ("ladder", "25,50,100"),
        ("format", "csv"),
        ("out-dir", "."),
        ("threads", "0"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect()
}

/// Parses a config file.
///
/// Lines are `key=value`; blank lines and `#` comments are skipped. A file
/// containing `#!` lines is read as an artifact: only its `#!` lines count.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let artifact = text.lines().any(|l| l.starts_with("#!"));
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let body = match line.strip_prefix("#!") {
            Some(rest) => rest,
            None if artifact => continue,
            None => line,
        };
        let body = body.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, got '{body}'", no + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("config line {}: unknown key '{key}'", no + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn field<T: FromStr>(map: &BTreeMap<&str, String>, key: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    let raw = &map[key];
    raw.parse().map_err(|e| CliError::Config(format!("{key}: cannot parse '{raw}': {e}")))
}

fn list<T: FromStr>(map: &BTreeMap<&str, String>, key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    map[key]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| CliError::Config(format!("{key}: cannot parse '{s}': {e}"))))
        .collect()
}

/// Reads `r,value` (or whitespace separated) rows into a table profile.
fn table_from_file(path: &str) -> Result<InitialProfile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read table {path}: {e}")))?;
    let mut nodes = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let nums: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Config(format!("table {path}: bad row '{line}'")))?;
        match nums.as_slice() {
            [r, v] => nodes.push((*r, *v)),
            _ => return Err(CliError::Config(format!("table {path}: expected two columns in '{line}'"))),
        }
    }
    let p = InitialProfile::Table(nodes);
    p.validate().map_err(|e| CliError::Config(format!("table {path}: {e}")))?;
    Ok(p)
}

impl RunConfig {
    /// Builds a config from defaults, then `file`, then `flags`, then the
    /// output-directory environment variable unless `out-dir` was a flag.
    pub fn resolve(
        subcommand: Subcommand,
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
        env_out_dir: Option<String>,
    ) -> Result<Self, CliError> {
        let mut map = defaults();
        for (k, v) in file {
            let key = KEYS.iter().find(|&&s| s == k).copied().ok_or_else(|| CliError::Config(format!("unknown key '{k}'")))?;
            map.insert(key, v);
        }
        if let Some(dir) = env_out_dir.filter(|_| !flags.contains_key("out-dir")) {
            map.insert("out-dir", dir);
        }
        for (k, v) in flags {
            let key = KEYS.iter().find(|&&s| s == k).copied().ok_or_else(|| CliError::Config(format!("unknown key '{k}'")))?;
            map.insert(key, v);
        }
        let init_spec = &map["init"];
        let init = match init_spec.strip_prefix("file:") {
            Some(path) => table_from_file(path)?,
            None => init_spec.parse().map_err(|e| CliError::Config(format!("init: {e}")))?,
        };
        let cfg = Self {
            subcommand,
            n: field(&map, "n")?,
            k: field(&map, "k")?,
            j: field(&map, "j")?,
            init,
            t_final: field(&map, "t-final")?,
            times: list(&map, "times")?,
            n_times: field(&map, "n-times")?,
            replicas: field(&map, "replicas")?,
            seed: field(&map, "seed")?,
            tol: field(&map, "tol")?,
            dt: field(&map, "dt")?,
            scheme: field(&map, "scheme")?,
            h: field(&map, "h")?,
            nr: field(&map, "nr")?,
            kind: field(&map, "kind")?,
            points: list(&map, "points")?,
            window: field(&map, "window")?,
            ladder: list(&map, "ladder")?,
            format: field(&map, "format")?,
            out_dir: PathBuf::from(&map["out-dir"]),
            threads: field(&map, "threads")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("t-final must be positive and finite");
        }
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return bad("j must be nonnegative");
        }
        if self.times.is_empty() && self.n_times < 2 {
            return bad("n-times must be at least 2");
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_final)) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("times must be increasing and lie in [0, t-final]");
        }
        if !(self.tol > 0.0 && self.dt > 0.0 && self.dt <= 0.5 && self.h > 0.0 && self.window > 0.0) {
            return bad("tol, h and window must be positive, and dt in (0, 0.5]");
        }
        if self.nr < 3 {
            return bad("nr must be at least 3");
        }
        if self.ladder.is_empty() {
            return bad("ladder must name at least one N");
        }
        Ok(())
    }

    /// Output times: the explicit list, or `n_times` uniform points including 0.
    pub fn output_times(&self) -> Vec<f64> {
        if self.times.is_empty() {
            ssep_core::evolution::uniform_times(self.t_final, self.n_times - 1, true)
        } else {
            self.times.clone()
        }
    }

    /// `(key, value)` pairs in header order, in the config-file syntax.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[String]| v.join(",");
        let values = [
            self.n.to_string(),
            self.k.to_string(),
            self.j.to_string(),
            self.init.to_string(),
            self.t_final.to_string(),
            join(&self.times.iter().map(f64::to_string).collect::<Vec<_>>()),
            self.n_times.to_string(),
            self.replicas.to_string(),
            self.seed.to_string(),
            self.tol.to_string(),
            self.dt.to_string(),
            self.scheme.to_string(),
            self.h.to_string(),
            self.nr.to_string(),
            self.kind.to_string(),
            join(&self.points.iter().map(f64::to_string).collect::<Vec<_>>()),
            self.window.to_string(),
            join(&self.ladder.iter().map(usize::to_string).collect::<Vec<_>>()),
            self.format.to_string(),
            self.out_dir.display().to_string(),
            self.threads.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}
