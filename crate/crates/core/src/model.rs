//! Model parameters, norms, kernels and connection probabilities.
//!
//! Distinct lattice points `x`, `y` are joined independently with probability
//! `1 - exp(-beta * q(x - y))`, where `exp(-inf) = 0`. Nearest neighbours
//! (points at `ell1` distance one) always have `q = +inf`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl Norm {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => x.iter().map(|v| v.abs()).sum(),
            Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::LInf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn eval_int(self, x: &[i64]) -> f64 {
        match self {
            Norm::L1 => x.iter().map(|v| v.unsigned_abs() as f64).sum(),
            Norm::L2 => x
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt(),
            Norm::LInf => x.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64,
        }
    }

    /// Lebesgue volume of the unit ball `{x in R^d : |x| <= 1}`.
    pub fn unit_ball_volume(self, d: usize) -> f64 {
        match self {
            Norm::L1 => 2f64.powi(d as i32) / factorial(d),
            Norm::LInf => 2f64.powi(d as i32),
            Norm::L2 => std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Norm::L1 => "ell1",
            Norm::L2 => "ell2",
            Norm::LInf => "ellInf",
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Gamma(k / 2)` for a positive integer `k`.
fn gamma_half_integer(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        factorial(k / 2 - 1)
    } else {
        // Gamma(1/2) = sqrt(pi), Gamma(x + 1) = x Gamma(x)
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while (2.0 * x) < k as f64 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ell1" | "l1" => Ok(Norm::L1),
            "ell2" | "l2" => Ok(Norm::L2),
            "ellInf" | "ellinf" | "linf" => Ok(Norm::LInf),
            other => Err(Error::Param(format!("unknown norm '{other}'"))),
        }
    }
}

/// Value of `q` for displacements not listed in a user table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableTail {
    /// `q = 0`: no long edges beyond the listed displacements.
    Zero,
    /// `q = |x|^{-s}` in the model norm.
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `q(x) = |x|^{-s}` off nearest neighbours.
    Canonical,
    /// Explicit values for chosen displacements, symmetric under `x -> -x`.
    Table {
        entries: BTreeMap<Vec<i64>, f64>,
        tail: TableTail,
    },
}

impl Kernel {
    /// A table kernel; each entry also defines the value at the negated displacement.
    pub fn table(entries: impl IntoIterator<Item = (Vec<i64>, f64)>, tail: TableTail) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (v, q) in entries {
            if q.is_nan() || q < 0.0 {
                return Err(Error::Param(format!("kernel value {q} at {v:?} must be in [0, inf]")));
            }
            if v.iter().all(|&c| c == 0) {
                return Err(Error::Param("kernel table cannot assign q(0)".into()));
            }
            let canon = canonical_displacement(&v);
            if let Some(prev) = map.insert(canon.clone(), q) {
                if prev != q {
                    return Err(Error::Param(format!(
                        "kernel table is not symmetric at {canon:?}: {prev} vs {q}"
                    )));
                }
            }
        }
        Ok(Kernel::Table { entries: map, tail })
    }

    /// A table kernel with no long edges at all.
    pub fn nearest_neighbor_only() -> Self {
        Kernel::Table {
            entries: BTreeMap::new(),
            tail: TableTail::Zero,
        }
    }
}

/// Representative of `{v, -v}` whose first non-zero coordinate is positive.
pub fn canonical_displacement(v: &[i64]) -> Vec<i64> {
    match v.iter().find(|&&c| c != 0) {
        Some(&c) if c < 0 => v.iter().map(|x| -x).collect(),
        _ => v.to_vec(),
    }
}

pub fn is_nearest_neighbor(v: &[i64]) -> bool {
    v.iter().map(|c| c.unsigned_abs()).sum::<u64>() == 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    d: usize,
    s: f64,
    beta: f64,
    norm: Norm,
    kernel: Kernel,
}

impl ModelParams {
    pub fn new(d: usize, s: f64, beta: f64, norm: Norm, kernel: Kernel) -> Result<Self> {
        if d == 0 {
            return Err(Error::Param("dimension must be at least 1".into()));
        }
        let dd = d as f64;
        if !(s > dd && s < 2.0 * dd) {
            return Err(Error::Param(format!("s = {s} must lie in the open interval ({d}, {})", 2 * d)));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Param(format!("beta = {beta} must be positive and finite")));
        }
        if let Kernel::Table { entries, .. } = &kernel {
            if let Some(bad) = entries.keys().find(|k| k.len() != d) {
                return Err(Error::Param(format!("kernel entry {bad:?} has wrong dimension")));
            }
        }
        Ok(Self { d, s, beta, norm, kernel })
    }

    /// Canonical kernel with the Euclidean norm.
    pub fn canonical(d: usize, s: f64, beta: f64) -> Result<Self> {
        Self::new(d, s, beta, Norm::L2, Kernel::Canonical)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn norm(&self) -> Norm {
        self.norm
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.d, self.s, beta, self.norm, self.kernel.clone())
    }

    /// `s / (2d)`.
    pub fn gamma(&self) -> f64 {
        self.s / (2.0 * self.d as f64)
    }

    /// `1 / log2(2d / s)`.
    pub fn delta(&self) -> f64 {
        1.0 / (2.0 * self.d as f64 / self.s).log2()
    }

    pub fn derived_constants(&self) -> (f64, f64) {
        (self.gamma(), self.delta())
    }

    /// `2d - s`.
    pub fn gap(&self) -> f64 {
        2.0 * self.d as f64 - self.s
    }

    /// Kernel value at a displacement; `q(0) = 0`.
    pub fn q(&self, v: &[i64]) -> f64 {
        if v.iter().all(|&c| c == 0) {
            return 0.0;
        }
        if is_nearest_neighbor(v) {
            return f64::INFINITY;
        }
        match &self.kernel {
            Kernel::Canonical => self.norm.eval_int(v).powf(-self.s),
            Kernel::Table { entries, tail } => match entries.get(&canonical_displacement(v)) {
                Some(&q) => q,
                None => match tail {
                    TableTail::Zero => 0.0,
                    TableTail::PowerLaw => self.norm.eval_int(v).powf(-self.s),
                },
            },
        }
    }

    /// `1 - exp(-beta q(v))`; exactly 1 when `q = +inf`.
    pub fn connection_probability(&self, v: &[i64]) -> Result<f64> {
        if v.len() != self.d {
            return Err(Error::Param(format!("displacement {v:?} has wrong dimension")));
        }
        if v.iter().all(|&c| c == 0) {
            return Err(Error::Param("connection probability undefined for zero displacement".into()));
        }
        Ok(prob_from_q(self.beta, self.q(v)))
    }

    /// Flat `key=value` lines: d, s, beta, norm, kernel.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("d".into(), self.d.to_string());
        m.insert("s".into(), fmt_f64(self.s));
        m.insert("beta".into(), fmt_f64(self.beta));
        m.insert("norm".into(), self.norm.to_string());
        m.insert("kernel".into(), kernel_to_string(&self.kernel));
        m
    }

    pub fn from_kv(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            map.get(k)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::Config(format!("missing key '{k}'")))
        };
        let d: usize = get("d")?
            .parse()
            .map_err(|e| Error::Config(format!("d: {e}")))?;
        let s = parse_f64("s", &get("s")?)?;
        let beta = parse_f64("beta", &get("beta")?)?;
        let norm = match map.get("norm") {
            Some(n) => n.parse()?,
            None => Norm::L2,
        };
        let kernel = match map.get("kernel") {
            Some(k) => kernel_from_str(k, d)?,
            None => Kernel::Canonical,
        };
        Self::new(d, s, beta, norm, kernel)
    }
}

#[inline]
pub(crate) fn prob_from_q(beta: f64, q: f64) -> f64 {
    if q == f64::INFINITY {
        1.0
    } else {
        -(-beta * q).exp_m1()
    }
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => t
            .parse::<f64>()
            .map_err(|e| Error::Config(format!("{key}: cannot parse '{t}': {e}"))),
    }
}

/// `canonical`, or `table:tail=zero|power;v1,v2=q;...`.
pub fn kernel_to_string(k: &Kernel) -> String {
    match k {
        Kernel::Canonical => "canonical".into(),
        Kernel::Table { entries, tail } => {
            let mut out = String::from("table:tail=");
            out.push_str(match tail {
                TableTail::Zero => "zero",
                TableTail::PowerLaw => "power",
            });
            for (v, q) in entries {
                out.push(';');
                let coords: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                out.push_str(&coords.join(","));
                out.push('=');
                out.push_str(&fmt_f64(*q));
            }
            out
        }
    }
}

pub fn kernel_from_str(s: &str, d: usize) -> Result<Kernel> {
    let s = s.trim();
    if s == "canonical" {
        return Ok(Kernel::Canonical);
    }
    let body = s
        .strip_prefix("table:")
        .ok_or_else(|| Error::Config(format!("unknown kernel '{s}'")))?;
    let mut tail = TableTail::Zero;
    let mut entries = Vec::new();
    for part in body.split(';').filter(|p| !p.trim().is_empty()) {
        let (lhs, rhs) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("kernel entry '{part}' lacks '='")))?;
        if lhs.trim() == "tail" {
            tail = match rhs.trim() {
                "zero" => TableTail::Zero,
                "power" => TableTail::PowerLaw,
                other => return Err(Error::Config(format!("unknown kernel tail '{other}'"))),
            };
            continue;
        }
        let v: Vec<i64> = lhs
            .split(',')
            .map(|c| c.trim().parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("kernel displacement '{lhs}': {e}")))?;
        if v.len() != d {
            return Err(Error::Config(format!("kernel displacement '{lhs}' is not {d}-dimensional")));
        }
        entries.push((v, parse_f64("kernel", rhs)?));
    }
    Kernel::table(entries, tail)
}
