//! Hosmer-Lemeshow goodness of fit and the chi-square upper tail it needs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::IncomeBracket;
use crate::logit::LogitModel;

const MAX_ITER: usize = 1000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
///
/// Series for P when x < a + 1, Lentz continued fraction for Q otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain(format!("shape {a} must be positive")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("argument {x} must be nonnegative")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                let p = (log_prefactor.exp() * sum).min(1.0);
                return Ok(1.0 - p);
            }
        }
        Err(Error::Domain(format!("series for Q({a}, {x}) did not converge")))
    } else {
        // Q = prefactor / (x + 1 − a − 1·(1−a)/(x + 3 − a − 2·(2−a)/(x + 5 − a − …)))
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                return Ok((log_prefactor.exp() * h).clamp(0.0, 1.0));
            }
        }
        Err(Error::Domain(format!("continued fraction for Q({a}, {x}) did not converge")))
    }
}

/// P(X > x) for X ~ χ²(df).
pub fn chi_square_sf(x: f64, df: u32) -> Result<f64> {
    if df < 1 {
        return Err(Error::Domain("chi-square degrees of freedom must be at least 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("chi-square statistic {x} must be nonnegative")));
    }
    regularized_gamma_q(f64::from(df) / 2.0, x / 2.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "groups")]
pub enum Grouping {
    /// One group per distinct bracket.
    #[default]
    CovariatePattern,
    /// `g` groups of near-equal size by ascending predicted probability.
    Deciles(usize),
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::CovariatePattern => f.write_str("covariate_pattern"),
            Grouping::Deciles(g) => write!(f, "deciles:{g}"),
        }
    }
}

impl FromStr for Grouping {
    type Err = Error;

    /// `covariate_pattern`, `deciles` (g = 10) or `deciles:<g>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "covariate_pattern" {
            return Ok(Grouping::CovariatePattern);
        }
        if s == "deciles" {
            return Ok(Grouping::Deciles(10));
        }
        s.strip_prefix("deciles:")
            .and_then(|g| g.trim().parse().ok())
            .map(Grouping::Deciles)
            .ok_or_else(|| Error::Config(format!("unknown grouping '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HlGroup {
    pub id: String,
    pub n: usize,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HLResult {
    pub chi2: f64,
    pub df: u32,
    pub p_value: f64,
    pub groups: Vec<HlGroup>,
}

fn cell(observed: f64, expected: f64, group: &str) -> Result<f64> {
    if expected > 0.0 {
        Ok((observed - expected).powi(2) / expected)
    } else if observed == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!("group {group} expects 0 but observes {observed}; grouping is degenerate")))
    }
}

impl HLResult {
    /// Statistic over both outcome classes of each group; df = groups − 2, at least 1.
    pub fn from_groups(groups: Vec<HlGroup>) -> Result<Self> {
        let mut chi2 = 0.0;
        for g in &groups {
            let n = g.n as f64;
            if g.expected < 0.0 || g.expected > n || g.observed < 0.0 || g.observed > n {
                return Err(Error::Domain(format!("group {} counts outside [0, {}]", g.id, g.n)));
            }
            chi2 += cell(g.observed, g.expected, &g.id)?;
            chi2 += cell(n - g.observed, n - g.expected, &g.id)?;
        }
        let df = (groups.len() as u32).saturating_sub(2).max(1);
        Ok(Self { chi2, df, p_value: chi_square_sf(chi2, df)?, groups })
    }
}

pub fn hosmer_lemeshow(model: &LogitModel, outcomes: &[(IncomeBracket, bool)], grouping: Grouping) -> Result<HLResult> {
    let mut prob_of = BTreeMap::new();
    for b in model.encoding.brackets_present() {
        prob_of.insert(*b, model.predict_prob(*b)?);
    }
    let prob = |b: IncomeBracket| {
        prob_of.get(&b).copied().ok_or_else(|| Error::Domain(format!("bracket {b} is not part of the model encoding")))
    };

    let groups = match grouping {
        Grouping::CovariatePattern => {
            let mut acc: BTreeMap<IncomeBracket, (usize, usize)> = BTreeMap::new();
            for &(b, y) in outcomes {
                prob(b)?;
                let e = acc.entry(b).or_default();
                e.0 += 1;
                e.1 += usize::from(y);
            }
            acc.into_iter()
                .map(|(b, (n, k))| {
                    Ok(HlGroup { id: b.code().to_string(), n, observed: k as f64, expected: n as f64 * prob(b)? })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Grouping::Deciles(g) => {
            if g < 3 {
                return Err(Error::Config(format!("decile grouping needs g >= 3, got {g}")));
            }
            let mut scored: Vec<(f64, bool)> =
                outcomes.iter().map(|&(b, y)| Ok((prob(b)?, y))).collect::<Result<_>>()?;
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let n = scored.len();
            (0..g)
                .filter_map(|k| {
                    let slice = &scored[k * n / g..(k + 1) * n / g];
                    (!slice.is_empty()).then(|| HlGroup {
                        id: format!("decile {}", k + 1),
                        n: slice.len(),
                        observed: slice.iter().filter(|s| s.1).count() as f64,
                        expected: slice.iter().map(|s| s.0).sum(),
                    })
                })
                .collect()
        }
    };
    HLResult::from_groups(groups)
}
