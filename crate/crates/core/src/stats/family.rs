//! Continuous distribution families with location/scale parameterisation.
//!
//! Conventions follow the usual `(shapes..., loc, scale)` layout: every
//! density is `f((x - loc) / scale) / scale` for a standard form `f`.
//!
//! | family      | shapes   | standard support |
//! |-------------|----------|------------------|
//! | Normal      | –        | ℝ                |
//! | LogNormal   | s        | (0, ∞)           |
//! | StudentT    | df       | ℝ                |
//! | Exponential | –        | [0, ∞)           |
//! | Powerlaw    | a        | [0, 1]           |
//! | Gamma       | a        | (0, ∞)           |
//! | Weibull     | c        | [0, ∞)           |
//! | Beta        | a, b     | (0, 1)           |
//! | Burr (XII)  | c, d     | (0, ∞)           |
//! | Pareto      | b        | [1, ∞)           |
//! | GEV         | ξ        | 1 + ξy > 0       |
//!
//! GEV uses the climatology sign convention: `ξ > 0` is the heavy-tailed
//! (Fréchet) branch.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::special::{beta_reg, gamma_p, ln1p_exp, ln_beta, ln_gamma, ln_sqrt_2pi, normal_cdf, student_t_cdf};
use super::StatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    LogNormal,
    StudentT,
    Exponential,
    Powerlaw,
    Gamma,
    Weibull,
    Beta,
    Burr,
    Pareto,
    Gev,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Normal,
        Family::LogNormal,
        Family::StudentT,
        Family::Exponential,
        Family::Powerlaw,
        Family::Gamma,
        Family::Weibull,
        Family::Beta,
        Family::Burr,
        Family::Pareto,
        Family::Gev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::LogNormal => "log_normal",
            Family::StudentT => "student_t",
            Family::Exponential => "exponential",
            Family::Powerlaw => "powerlaw",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::Beta => "beta",
            Family::Burr => "burr",
            Family::Pareto => "pareto",
            Family::Gev => "gev",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal | Family::Exponential => &["loc", "scale"],
            Family::LogNormal | Family::Powerlaw | Family::Gamma | Family::Pareto | Family::Gev => {
                &["shape", "loc", "scale"]
            }
            Family::StudentT => &["df", "loc", "scale"],
            Family::Weibull => &["shape", "loc", "scale"],
            Family::Beta => &["a", "b", "loc", "scale"],
            Family::Burr => &["c", "d", "loc", "scale"],
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    pub fn support(self) -> &'static str {
        match self {
            Family::Normal | Family::StudentT => "(-inf, inf)",
            Family::LogNormal | Family::Gamma | Family::Burr => "(loc, inf)",
            Family::Exponential | Family::Weibull => "[loc, inf)",
            Family::Powerlaw => "[loc, loc + scale]",
            Family::Beta => "(loc, loc + scale)",
            Family::Pareto => "[loc + scale, inf)",
            Family::Gev => "1 + shape (x - loc) / scale > 0",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let family = match key.as_str() {
            "normal" | "norm" | "gaussian" => Family::Normal,
            "lognormal" | "lognorm" => Family::LogNormal,
            "studentt" | "t" | "student" => Family::StudentT,
            "exponential" | "expon" | "exp" => Family::Exponential,
            "powerlaw" => Family::Powerlaw,
            "gamma" => Family::Gamma,
            "weibull" | "weibullmin" => Family::Weibull,
            "beta" => Family::Beta,
            "burr" | "burr12" | "burrxii" => Family::Burr,
            "pareto" => Family::Pareto,
            "gev" | "genextreme" => Family::Gev,
            _ => return Err(format!("unknown distribution family `{s}`")),
        };
        Ok(family)
    }
}

/// A fully parameterised distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Dist {
    Normal { loc: f64, scale: f64 },
    LogNormal { shape: f64, loc: f64, scale: f64 },
    StudentT { df: f64, loc: f64, scale: f64 },
    Exponential { loc: f64, scale: f64 },
    Powerlaw { shape: f64, loc: f64, scale: f64 },
    Gamma { shape: f64, loc: f64, scale: f64 },
    Weibull { shape: f64, loc: f64, scale: f64 },
    Beta { a: f64, b: f64, loc: f64, scale: f64 },
    Burr { c: f64, d: f64, loc: f64, scale: f64 },
    Pareto { shape: f64, loc: f64, scale: f64 },
    Gev { shape: f64, loc: f64, scale: f64 },
}

impl Dist {
    /// Builds a distribution from a parameter vector laid out as
    /// [`Family::param_names`], validating it.
    pub fn from_params(family: Family, p: &[f64]) -> Result<Dist, StatError> {
        if p.len() != family.arity() {
            return Err(StatError::InvalidParams(format!(
                "{family} takes {} parameters, got {}",
                family.arity(),
                p.len()
            )));
        }
        let dist = match family {
            Family::Normal => Dist::Normal { loc: p[0], scale: p[1] },
            Family::LogNormal => Dist::LogNormal { shape: p[0], loc: p[1], scale: p[2] },
            Family::StudentT => Dist::StudentT { df: p[0], loc: p[1], scale: p[2] },
            Family::Exponential => Dist::Exponential { loc: p[0], scale: p[1] },
            Family::Powerlaw => Dist::Powerlaw { shape: p[0], loc: p[1], scale: p[2] },
            Family::Gamma => Dist::Gamma { shape: p[0], loc: p[1], scale: p[2] },
            Family::Weibull => Dist::Weibull { shape: p[0], loc: p[1], scale: p[2] },
            Family::Beta => Dist::Beta { a: p[0], b: p[1], loc: p[2], scale: p[3] },
            Family::Burr => Dist::Burr { c: p[0], d: p[1], loc: p[2], scale: p[3] },
            Family::Pareto => Dist::Pareto { shape: p[0], loc: p[1], scale: p[2] },
            Family::Gev => Dist::Gev { shape: p[0], loc: p[1], scale: p[2] },
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn family(&self) -> Family {
        match self {
            Dist::Normal { .. } => Family::Normal,
            Dist::LogNormal { .. } => Family::LogNormal,
            Dist::StudentT { .. } => Family::StudentT,
            Dist::Exponential { .. } => Family::Exponential,
            Dist::Powerlaw { .. } => Family::Powerlaw,
            Dist::Gamma { .. } => Family::Gamma,
            Dist::Weibull { .. } => Family::Weibull,
            Dist::Beta { .. } => Family::Beta,
            Dist::Burr { .. } => Family::Burr,
            Dist::Pareto { .. } => Family::Pareto,
            Dist::Gev { .. } => Family::Gev,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Dist::Normal { loc, scale } | Dist::Exponential { loc, scale } => vec![loc, scale],
            Dist::LogNormal { shape, loc, scale }
            | Dist::Powerlaw { shape, loc, scale }
            | Dist::Gamma { shape, loc, scale }
            | Dist::Weibull { shape, loc, scale }
            | Dist::Pareto { shape, loc, scale }
            | Dist::Gev { shape, loc, scale } => vec![shape, loc, scale],
            Dist::StudentT { df, loc, scale } => vec![df, loc, scale],
            Dist::Beta { a, b, loc, scale } => vec![a, b, loc, scale],
            Dist::Burr { c, d, loc, scale } => vec![c, d, loc, scale],
        }
    }

    fn loc_scale(&self) -> (f64, f64) {
        let p = self.params();
        let n = p.len();
        (p[n - 2], p[n - 1])
    }

    /// Scale > 0, shape parameters > 0 (GEV shape may be any finite value),
    /// everything finite.
    pub fn validate(&self) -> Result<(), StatError> {
        let p = self.params();
        if p.iter().any(|v| !v.is_finite()) {
            return Err(StatError::InvalidParams(format!("non-finite parameter in {self:?}")));
        }
        let (_, scale) = self.loc_scale();
        let shapes_ok = match *self {
            Dist::Normal { .. } | Dist::Exponential { .. } | Dist::Gev { .. } => true,
            Dist::Beta { a, b, .. } => a > 0.0 && b > 0.0,
            Dist::Burr { c, d, .. } => c > 0.0 && d > 0.0,
            _ => p[0] > 0.0,
        };
        if scale > 0.0 && shapes_ok {
            Ok(())
        } else {
            Err(StatError::InvalidParams(format!("parameters out of range in {self:?}")))
        }
    }

    /// Natural log of the density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (loc, scale) = self.loc_scale();
        let y = (x - loc) / scale;
        let ln_scale = scale.ln();
        let v = match *self {
            Dist::Normal { .. } => -0.5 * y * y - ln_sqrt_2pi(),
            Dist::LogNormal { shape, .. } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let ly = y.ln();
                -0.5 * (ly / shape).powi(2) - ly - shape.ln() - ln_sqrt_2pi()
            }
            Dist::StudentT { df, .. } => {
                ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - 0.5 * (df + 1.0) * (y * y / df).ln_1p()
            }
            Dist::Exponential { .. } => {
                if y < 0.0 {
                    return f64::NEG_INFINITY;
                }
                -y
            }
            Dist::Powerlaw { shape, .. } => {
                if !(0.0..=1.0).contains(&y) {
                    return f64::NEG_INFINITY;
                }
                shape.ln() + (shape - 1.0) * y.ln()
            }
            Dist::Gamma { shape, .. } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * y.ln() - y - ln_gamma(shape)
            }
            Dist::Weibull { shape, .. } => {
                if y < 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape.ln() + (shape - 1.0) * y.ln() - y.powf(shape)
            }
            Dist::Beta { a, b, .. } => {
                if y <= 0.0 || y >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_beta(a, b)
            }
            Dist::Burr { c, d, .. } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let ly = y.ln();
                c.ln() + d.ln() - ly - ln1p_exp(-c * ly) - d * ln1p_exp(c * ly)
            }
            Dist::Pareto { shape, .. } => {
                if y < 1.0 {
                    return f64::NEG_INFINITY;
                }
                shape.ln() - (shape + 1.0) * y.ln()
            }
            Dist::Gev { shape, .. } => match gev_ln_t(shape, y) {
                Some(ln_t) => (shape + 1.0) * ln_t - ln_t.exp(),
                None => return f64::NEG_INFINITY,
            },
        };
        let out = v - ln_scale;
        if out.is_nan() {
            f64::NEG_INFINITY
        } else {
            out
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (loc, scale) = self.loc_scale();
        let y = (x - loc) / scale;
        let p = match *self {
            Dist::Normal { .. } => normal_cdf(y),
            Dist::LogNormal { shape, .. } => {
                if y <= 0.0 {
                    0.0
                } else {
                    normal_cdf(y.ln() / shape)
                }
            }
            Dist::StudentT { df, .. } => student_t_cdf(y, df),
            Dist::Exponential { .. } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-y).exp_m1()
                }
            }
            Dist::Powerlaw { shape, .. } => y.clamp(0.0, 1.0).powf(shape),
            Dist::Gamma { shape, .. } => gamma_p(shape, y),
            Dist::Weibull { shape, .. } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-y.powf(shape)).exp_m1()
                }
            }
            Dist::Beta { a, b, .. } => beta_reg(a, b, y),
            Dist::Burr { c, d, .. } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-d * ln1p_exp(c * y.ln())).exp_m1()
                }
            }
            Dist::Pareto { shape, .. } => {
                if y <= 1.0 {
                    0.0
                } else {
                    -(-shape * y.ln()).exp_m1()
                }
            }
            Dist::Gev { shape, .. } => match gev_ln_t(shape, y) {
                Some(ln_t) => (-ln_t.exp()).exp(),
                // outside the support: below the lower end point for shape > 0,
                // above the upper end point for shape < 0
                None => {
                    if shape > 0.0 {
                        0.0
                    } else {
                        1.0
                    }
                }
            },
        };
        p.clamp(0.0, 1.0)
    }

    /// Draws one value from the distribution.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (loc, scale) = self.loc_scale();
        // uniform on (0, 1]
        let mut u = || 1.0 - rng.random::<f64>();
        let y = match *self {
            Dist::Normal { .. } => StandardNormal.sample(rng),
            Dist::LogNormal { shape, .. } => {
                let z: f64 = StandardNormal.sample(rng);
                (shape * z).exp()
            }
            Dist::StudentT { df, .. } => rand_distr::StudentT::new(df)
                .expect("validated df")
                .sample(rng),
            Dist::Exponential { .. } => -u().ln(),
            Dist::Powerlaw { shape, .. } => u().powf(1.0 / shape),
            Dist::Gamma { shape, .. } => rand_distr::Gamma::new(shape, 1.0)
                .expect("validated shape")
                .sample(rng),
            Dist::Weibull { shape, .. } => (-u().ln()).powf(1.0 / shape),
            Dist::Beta { a, b, .. } => rand_distr::Beta::new(a, b)
                .expect("validated shapes")
                .sample(rng),
            Dist::Burr { c, d, .. } => {
                // invert 1 - (1 + y^c)^-d = 1 - u
                let w = (-u().ln() / d).exp_m1();
                w.powf(1.0 / c)
            }
            Dist::Pareto { shape, .. } => u().powf(-1.0 / shape),
            Dist::Gev { shape, .. } => {
                let e = -u().ln();
                if shape.abs() < 1e-12 {
                    -e.ln()
                } else {
                    ((-shape * e.ln()).exp() - 1.0) / shape
                }
            }
        };
        loc + scale * y
    }
}

/// `ln t(y)` for the GEV, where `t = (1 + ξy)^(-1/ξ)`, or `None` outside the
/// support.
fn gev_ln_t(shape: f64, y: f64) -> Option<f64> {
    if shape.abs() < 1e-12 {
        return Some(-y);
    }
    let arg = shape * y;
    if arg <= -1.0 {
        return None;
    }
    Some(-arg.ln_1p() / shape)
}

/// A maximum-likelihood fit together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedDist {
    pub dist: Dist,
    pub nll_at_fit: f64,
    pub sample_size: usize,
}

impl FittedDist {
    pub fn family(&self) -> Family {
        self.dist.family()
    }

    pub fn params(&self) -> Vec<f64> {
        self.dist.params()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.dist.pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist.cdf(x)
    }
}

/// `n` i.i.d. draws, reproducible for a given seed.
pub fn sample(dist: &Dist, n: usize, seed: u64) -> Result<Vec<f64>, StatError> {
    use rand::SeedableRng;
    dist.validate()?;
    if n == 0 {
        return Err(StatError::InsufficientData { needed: 1, got: 0 });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| dist.draw(&mut rng)).collect())
}

/// Negative log-likelihood of `xs`; `+inf` if any point is outside the
/// support.
pub fn nll(dist: &Dist, xs: &[f64]) -> f64 {
    let mut total = 0.0;
    for &x in xs {
        let l = dist.ln_pdf(x);
        if !l.is_finite() {
            return f64::INFINITY;
        }
        total -= l;
    }
    total
}
