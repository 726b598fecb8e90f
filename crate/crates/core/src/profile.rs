//! Macroscopic initial data `u₀ : [-1, 1] → [0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A macroscopic profile on `[-1, 1]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialProfile {
    /// `c`
    Constant(f64),
    /// `a + b r`
    Linear { a: f64, b: f64 },
    /// `left` for `r < at`, `right` for `r >= at`
    Step { left: f64, right: f64, at: f64 },
    /// `mean + amplitude · cos(k π (r + 1) / 2)`, a Neumann eigenfunction plus a constant
    Cosine { mean: f64, amplitude: f64, mode: u32 },
    /// Piecewise-linear interpolation through `(r, value)` nodes, constant outside.
    Table(Vec<(f64, f64)>),
}

impl InitialProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match self {
            Self::Constant(c) if !(0.0..=1.0).contains(c) => bad(format!("constant {c} outside [0,1]")),
            Self::Linear { a, b } if !(0.0..=1.0).contains(&(a - b)) || !(0.0..=1.0).contains(&(a + b)) => {
                bad(format!("linear profile {a}+{b}r leaves [0,1]"))
            }
            Self::Step { left, right, at }
                if !(0.0..=1.0).contains(left) || !(0.0..=1.0).contains(right) || !(-1.0..=1.0).contains(at) =>
            {
                bad("step profile values must lie in [0,1] and the jump in [-1,1]".into())
            }
            Self::Cosine { mean, amplitude, .. }
                if mean - amplitude.abs() < 0.0 || mean + amplitude.abs() > 1.0 =>
            {
                bad("cosine profile leaves [0,1]".into())
            }
            Self::Table(nodes) => {
                if nodes.is_empty() {
                    return bad("table profile has no nodes".into());
                }
                if nodes.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("table profile nodes must be strictly increasing in r".into());
                }
                if nodes.iter().any(|(_, v)| !(0.0..=1.0).contains(v)) {
                    return bad("table profile values must lie in [0,1]".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Linear { a, b } => a + b * r,
            Self::Step { left, right, at } => {
                if r < *at {
                    *left
                } else {
                    *right
                }
            }
            Self::Cosine { mean, amplitude, mode } => {
                mean + amplitude * (*mode as f64 * std::f64::consts::PI * (r + 1.0) / 2.0).cos()
            }
            Self::Table(nodes) => {
                let first = nodes[0];
                let last = nodes[nodes.len() - 1];
                if r <= first.0 {
                    return first.1;
                }
                if r >= last.0 {
                    return last.1;
                }
                let i = nodes.partition_point(|&(x, _)| x <= r);
                let (x0, y0) = nodes[i - 1];
                let (x1, y1) = nodes[i];
                y0 + (y1 - y0) * (r - x0) / (x1 - x0)
            }
        }
    }

    /// Points where the profile or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Step { at, .. } => vec![*at],
            Self::Table(nodes) => nodes.iter().map(|n| n.0).filter(|r| r.abs() < 1.0).collect(),
            _ => Vec::new(),
        }
    }

    /// One-sided limit at `+1` (from inside).
    pub fn limit_at_plus_one(&self) -> f64 {
        self.eval(1.0 - 1e-13)
    }

    /// One-sided limit at `-1` (from inside).
    pub fn limit_at_minus_one(&self) -> f64 {
        self.eval(-1.0 + 1e-13)
    }

    /// The profile `r ↦ 1 - u₀(-r)`.
    pub fn particle_hole_reflected(&self) -> Self {
        match self {
            Self::Constant(c) => Self::Constant(1.0 - c),
            Self::Linear { a, b } => Self::Linear { a: 1.0 - a, b: *b },
            Self::Step { left, right, at } => Self::Step { left: 1.0 - right, right: 1.0 - left, at: -at },
            Self::Cosine { mean, amplitude, mode } => Self::Cosine {
                mean: 1.0 - mean,
                amplitude: if mode % 2 == 0 { -amplitude } else { *amplitude },
                mode: *mode,
            },
            Self::Table(nodes) => Self::Table(nodes.iter().rev().map(|&(r, v)| (-r, 1.0 - v)).collect()),
        }
    }
}

impl fmt::Display for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "const:{c}"),
            Self::Linear { a, b } => write!(f, "linear:{a},{b}"),
            Self::Step { left, right, at } => write!(f, "step:{left},{right},{at}"),
            Self::Cosine { mean, amplitude, mode } => write!(f, "cos:{mean},{amplitude},{mode}"),
            Self::Table(nodes) => {
                write!(f, "table:")?;
                for (i, (r, v)) in nodes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{r}/{v}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for InitialProfile {
    type Err = Error;

    /// Parses `const:c`, `linear:a,b`, `step:left,right[,at]`, `cos:mean,amp,k`
    /// or `table:r0/v0;r1/v1;...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParams(format!("profile spec '{s}' lacks a 'kind:' prefix")))?;
        let nums = |text: &str| -> Result<Vec<f64>> {
            text.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParams(format!("bad number '{t}' in profile '{s}'")))
                })
                .collect()
        };
        let profile = match kind {
            "const" => match nums(rest)?.as_slice() {
                [c] => Self::Constant(*c),
                _ => return Err(Error::InvalidParams("const takes one value".into())),
            },
            "linear" => match nums(rest)?.as_slice() {
                [a, b] => Self::Linear { a: *a, b: *b },
                _ => return Err(Error::InvalidParams("linear takes a,b".into())),
            },
            "step" => match nums(rest)?.as_slice() {
                [l, r] => Self::Step { left: *l, right: *r, at: 0.0 },
                [l, r, at] => Self::Step { left: *l, right: *r, at: *at },
                _ => return Err(Error::InvalidParams("step takes left,right[,at]".into())),
            },
            "cos" => match nums(rest)?.as_slice() {
                [m, a, k] if *k >= 0.0 && k.fract() == 0.0 => {
                    Self::Cosine { mean: *m, amplitude: *a, mode: *k as u32 }
                }
                _ => return Err(Error::InvalidParams("cos takes mean,amplitude,mode".into())),
            },
            "table" => {
                let nodes = rest
                    .split(';')
                    .filter(|p| !p.trim().is_empty())
                    .map(|pair| {
                        let (r, v) = pair
                            .split_once('/')
                            .ok_or_else(|| Error::InvalidParams(format!("table node '{pair}' is not r/v")))?;
                        let r = r.trim().parse::<f64>();
                        let v = v.trim().parse::<f64>();
                        match (r, v) {
                            (Ok(r), Ok(v)) => Ok((r, v)),
                            _ => Err(Error::InvalidParams(format!("bad table node '{pair}'"))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::Table(nodes)
            }
            other => return Err(Error::InvalidParams(format!("unknown profile kind '{other}'"))),
        };
        profile.validate()?;
        Ok(profile)
    }
}
