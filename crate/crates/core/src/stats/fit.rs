//! Maximum-likelihood fitting for every [`Family`].
//!
//! Normal and Exponential are closed form. Families whose remaining
//! parameters have a closed form (or a one-dimensional root) once the
//! location is fixed are fitted by profiling the likelihood over the location
//! offset: LogNormal, Gamma, Weibull, Pareto and Powerlaw. Beta, Burr, GEV and
//! Student's t go through Nelder–Mead on log-transformed positive parameters
//! with three starts and a final polish from the best point.
//!
//! Positive-support families keep `loc <= min(xs) - gap` where
//! `gap = 1e-9 (1 + |min|)`. The offset below that bound is searched as
//! `exp(u)` so it can never cross it.

use super::family::{nll, Dist, Family, FittedDist};
use super::optim::{golden_section, nelder_mead, NmOptions};
use super::special::{digamma, ln_beta, ln_gamma, ln_sqrt_2pi, trigamma};
use super::StatError;

pub const MIN_FIT_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Fixed `(lower, upper)` support for Beta. Defaults to the data range
    /// widened by 0.1%.
    pub beta_support: Option<(f64, f64)>,
    /// Start the search from this distribution (same family) with a single
    /// run instead of the full multi-start. Faster, but only a local search.
    pub warm_start: Option<Dist>,
}

pub fn fit_mle(family: Family, xs: &[f64]) -> Result<FittedDist, StatError> {
    fit_mle_with(family, xs, &FitOptions::default())
}

pub fn fit_mle_with(family: Family, xs: &[f64], opts: &FitOptions) -> Result<FittedDist, StatError> {
    let s = Sample::new(xs)?;
    let warm = opts.warm_start.filter(|d| d.family() == family);
    let dist = match family {
        Family::Normal => fit_normal(&s),
        Family::Exponential => Dist::Exponential {
            loc: s.bound,
            scale: s.mean - s.bound,
        },
        Family::LogNormal => profile(&s, warm, |loc| lognormal_at(&s, loc))?,
        Family::Gamma => profile(&s, warm, |loc| gamma_at(&s, loc))?,
        Family::Weibull => profile(&s, warm, |loc| weibull_at(&s, loc))?,
        Family::Pareto => profile(&s, warm, |loc| pareto_at(&s, loc))?,
        Family::Powerlaw => profile(&s, warm, |loc| powerlaw_at(&s, loc))?,
        Family::Beta => fit_beta(&s, opts.beta_support, warm)?,
        Family::Burr => fit_burr(&s, warm)?,
        Family::Gev => fit_gev(&s, warm)?,
        Family::StudentT => fit_student_t(&s, warm)?,
    };
    dist.validate()
        .map_err(|_| StatError::OptimizationFailed(format!("{family}: fit left the parameter space")))?;
    let nll_at_fit = nll(&dist, xs);
    if !nll_at_fit.is_finite() {
        return Err(StatError::OptimizationFailed(format!("{family}: non-finite likelihood at fit")));
    }
    Ok(FittedDist {
        dist,
        nll_at_fit,
        sample_size: xs.len(),
    })
}

struct Sample<'a> {
    xs: &'a [f64],
    n: f64,
    min: f64,
    max: f64,
    mean: f64,
    sd: f64,
    /// Upper bound for the location of positive-support families.
    bound: f64,
}

impl<'a> Sample<'a> {
    fn new(xs: &'a [f64]) -> Result<Self, StatError> {
        if xs.len() < MIN_FIT_SIZE {
            return Err(StatError::InsufficientData {
                needed: MIN_FIT_SIZE,
                got: xs.len(),
            });
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(StatError::NonFiniteData);
        }
        let n = xs.len() as f64;
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(StatError::DegenerateSample);
        }
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let gap = 1e-9 * (1.0 + min.abs());
        Ok(Sample {
            xs,
            n,
            min,
            max,
            mean,
            sd,
            bound: min - gap,
        })
    }

    fn range(&self) -> f64 {
        self.max - self.min
    }

    fn loc_at(&self, u: f64) -> f64 {
        self.bound - u.exp()
    }

    fn u_of(&self, loc: f64) -> f64 {
        (self.bound - loc).max(1e-300).ln()
    }

    fn median(&self) -> f64 {
        let mut v = self.xs.to_vec();
        v.sort_by(f64::total_cmp);
        super::describe::quantile_sorted(&v, 0.5)
    }
}

fn fit_normal(s: &Sample) -> Dist {
    Dist::Normal {
        loc: s.mean,
        scale: s.sd,
    }
}

/// Minimises the profile likelihood over `u = ln(bound - loc)`: a coarse
/// grid, then golden section inside the best grid cell.
fn profile<F>(s: &Sample, warm: Option<Dist>, inner: F) -> Result<Dist, StatError>
where
    F: Fn(f64) -> Option<(Dist, f64)>,
{
    let eval = |u: f64| inner(s.loc_at(u)).map(|(_, v)| v).unwrap_or(f64::INFINITY);
    let lr = s.range().ln();
    let grid: Vec<f64> = match warm {
        Some(d) => {
            let u0 = s.u_of(d.params()[d.params().len() - 2]);
            (-8..=8).map(|k| u0 + 0.5 * k as f64).collect()
        }
        None => (0..=40).map(|k| lr - 20.0 + 0.75 * k as f64).collect(),
    };
    let values: Vec<f64> = grid.iter().map(|&u| eval(u)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if !values[best].is_finite() {
        return Err(StatError::OptimizationFailed("profile likelihood is infinite everywhere".into()));
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (u, fu) = golden_section(eval, lo, hi, 1e-10);
    let u = if fu <= values[best] { u } else { grid[best] };
    inner(s.loc_at(u))
        .map(|(d, _)| d)
        .ok_or_else(|| StatError::OptimizationFailed("profile optimum is infeasible".into()))
}

fn shifted(s: &Sample, loc: f64) -> Vec<f64> {
    s.xs.iter().map(|x| x - loc).collect()
}

fn lognormal_at(s: &Sample, loc: f64) -> Option<(Dist, f64)> {
    let ly: Vec<f64> = s.xs.iter().map(|x| (x - loc).ln()).collect();
    let mu = ly.iter().sum::<f64>() / s.n;
    let var = ly.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / s.n;
    if !(var > 0.0) || !mu.is_finite() {
        return None;
    }
    let shape = var.sqrt();
    let value = s.n * mu + s.n * shape.ln() + 0.5 * s.n + s.n * ln_sqrt_2pi();
    Some((Dist::LogNormal { shape, loc, scale: mu.exp() }, value))
}

/// Solves `ln a - digamma(a) = target` for `a > 0`.
fn gamma_shape(target: f64) -> Option<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return None;
    }
    let mut a = (3.0 - target + ((target - 3.0).powi(2) + 24.0 * target).sqrt()) / (12.0 * target);
    for _ in 0..50 {
        let g = a.ln() - digamma(a) - target;
        let dg = 1.0 / a - trigamma(a);
        let mut next = a - g / dg;
        if !(next > 0.0) {
            next = a / 2.0;
        }
        let done = ((next - a) / a).abs() < 1e-13;
        a = next;
        if done {
            break;
        }
    }
    a.is_finite().then_some(a)
}

fn gamma_at(s: &Sample, loc: f64) -> Option<(Dist, f64)> {
    let y = shifted(s, loc);
    let m = y.iter().sum::<f64>() / s.n;
    let lm = y.iter().map(|v| v.ln()).sum::<f64>() / s.n;
    let a = gamma_shape(m.ln() - lm)?;
    let scale = m / a;
    let value = s.n * (ln_gamma(a) + a * scale.ln() - (a - 1.0) * lm + a);
    Some((Dist::Gamma { shape: a, loc, scale }, value))
}

fn weibull_at(s: &Sample, loc: f64) -> Option<(Dist, f64)> {
    let y = shifted(s, loc);
    let ymax = y.iter().copied().fold(0.0, f64::max);
    let lt: Vec<f64> = y.iter().map(|v| (v / ymax).ln()).collect();
    let mean_lt = lt.iter().sum::<f64>() / s.n;
    // h(c) = sum t^c ln t / sum t^c - 1/c - mean ln t, increasing in c
    let h = |c: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &lt {
            let w = (c * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let r = s1 / s0;
        (r - 1.0 / c - mean_lt, s2 / s0 - r * r + 1.0 / (c * c))
    };
    let sd_lt = (lt.iter().map(|v| (v - mean_lt).powi(2)).sum::<f64>() / s.n).sqrt();
    if !(sd_lt > 0.0) {
        return None;
    }
    let mut c = (std::f64::consts::PI / (6f64.sqrt() * sd_lt)).clamp(1e-3, 1e4);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let (g, dg) = h(c);
        if !g.is_finite() {
            return None;
        }
        if g > 0.0 {
            hi = hi.min(c);
        } else {
            lo = lo.max(c);
        }
        let mut next = c - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * c };
        }
        let done = ((next - c) / c).abs() < 1e-13;
        c = next;
        if done {
            break;
        }
    }
    let mean_tc = lt.iter().map(|l| (c * l).exp()).sum::<f64>() / s.n;
    let scale = ymax * mean_tc.powf(1.0 / c);
    let sum_ly = lt.iter().sum::<f64>() + s.n * ymax.ln();
    let ln_scale = scale.ln();
    let value = -s.n * c.ln() - (c - 1.0) * (sum_ly - s.n * ln_scale) + s.n + s.n * ln_scale;
    Some((Dist::Weibull { shape: c, loc, scale }, value))
}

fn pareto_at(s: &Sample, loc: f64) -> Option<(Dist, f64)> {
    let scale = s.min - loc;
    let l: f64 = s.xs.iter().map(|x| ((x - loc) / scale).ln()).sum();
    if !(l > 0.0) {
        return None;
    }
    let b = s.n / l;
    let value = -s.n * b.ln() + s.n * scale.ln() + (b + 1.0) * l;
    Some((Dist::Pareto { shape: b, loc, scale }, value))
}

fn powerlaw_at(s: &Sample, loc: f64) -> Option<(Dist, f64)> {
    let scale = s.max - loc;
    let l: f64 = -s.xs.iter().map(|x| ((x - loc) / scale).ln()).sum::<f64>();
    if !(l > 0.0) {
        return None;
    }
    let a = s.n / l;
    let value = -s.n * a.ln() + (a - 1.0) * l + s.n * scale.ln();
    Some((Dist::Powerlaw { shape: a, loc, scale }, value))
}

/// Best of several Nelder–Mead runs, then one polish restart from the best.
/// With a warm start only that single start is used.
fn multistart<F>(f: F, starts: &[Vec<f64>]) -> Result<(Vec<f64>, f64), StatError>
where
    F: Fn(&[f64]) -> f64,
{
    let opts = NmOptions::default();
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for x0 in starts {
        let r = nelder_mead(&f, x0, &opts);
        if best.as_ref().is_none_or(|b| r.f < b.1) {
            best = Some((r.x, r.f, r.converged));
        }
    }
    let (x, fx, converged) = best.ok_or_else(|| StatError::OptimizationFailed("no starting point".into()))?;
    if !fx.is_finite() {
        return Err(StatError::OptimizationFailed("likelihood is infinite at every start".into()));
    }
    let polish = nelder_mead(&f, &x, &NmOptions { step: 0.02, ..opts });
    let (x, fx, converged) = if polish.f <= fx {
        (polish.x, polish.f, polish.converged || converged)
    } else {
        (x, fx, converged)
    };
    if !converged {
        return Err(StatError::OptimizationFailed(format!(
            "Nelder-Mead did not converge within {} iterations",
            opts.max_iter
        )));
    }
    Ok((x, fx))
}

fn fit_beta(s: &Sample, support: Option<(f64, f64)>, warm: Option<Dist>) -> Result<Dist, StatError> {
    let (lo, hi) = match support {
        Some((lo, hi)) => {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(StatError::InvalidParams(format!("beta support [{lo}, {hi}] is empty")));
            }
            if s.min <= lo || s.max >= hi {
                return Err(StatError::SupportViolation(format!(
                    "data range [{}, {}] is not inside the open beta support ({lo}, {hi})",
                    s.min, s.max
                )));
            }
            (lo, hi)
        }
        None => {
            let pad = 0.0005 * s.range();
            (s.min - pad, s.max + pad)
        }
    };
    let scale = hi - lo;
    let (mut s1, mut s2, mut m, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for x in s.xs {
        let t = (x - lo) / scale;
        s1 += t.ln();
        s2 += (-t).ln_1p();
        m += t;
        m2 += t * t;
    }
    let n = s.n;
    let f = |p: &[f64]| {
        let (a, b) = (p[0].exp(), p[1].exp());
        n * ln_beta(a, b) - (a - 1.0) * s1 - (b - 1.0) * s2 + n * scale.ln()
    };
    let starts = match warm {
        Some(Dist::Beta { a, b, .. }) => vec![vec![a.ln(), b.ln()]],
        _ => {
            let (m, v) = (m / n, (m2 / n - (m / n).powi(2)).max(1e-12));
            let common = (m * (1.0 - m) / v - 1.0).max(1e-3);
            let (a0, b0) = ((m * common).ln(), ((1.0 - m) * common).ln());
            vec![vec![a0, b0], vec![a0 + 0.5, b0 + 0.5], vec![0.0, 0.0]]
        }
    };
    let (p, _) = multistart(f, &starts)?;
    Ok(Dist::Beta {
        a: p[0].exp(),
        b: p[1].exp(),
        loc: lo,
        scale,
    })
}

/// Burr with `d` profiled out: for fixed `(c, loc, scale)` the likelihood
/// is maximised at `d = n / sum ln(1 + y^c)`.
fn burr_at(s: &Sample, c: f64, loc: f64, scale: f64) -> Option<(Dist, f64)> {
    // -(c - 1) ln y + (d + 1) ln(1 + y^c) is rearranged with
    // ln(1 + e^v) - v = ln(1 + e^-v) so large c does not cancel
    let (mut sum_ly, mut l, mut l_neg) = (0.0, 0.0, 0.0);
    for x in s.xs {
        let ly = ((x - loc) / scale).ln();
        sum_ly += ly;
        // ln(1 + e^v) and ln(1 + e^-v) share one exp and one ln1p
        let v = c * ly;
        let k = (-v.abs()).exp().ln_1p();
        l += v.max(0.0) + k;
        l_neg += (-v).max(0.0) + k;
    }
    if !(l > 0.0) || !l.is_finite() || !sum_ly.is_finite() {
        return None;
    }
    let d = s.n / l;
    let value = -s.n * (c.ln() + d.ln()) + sum_ly + l_neg + s.n + s.n * scale.ln();
    Some((Dist::Burr { c, d, loc, scale }, value))
}

fn fit_burr(s: &Sample, warm: Option<Dist>) -> Result<Dist, StatError> {
    let at = |p: &[f64]| burr_at(s, p[0].exp(), s.loc_at(p[1]), p[2].exp());
    let f = |p: &[f64]| at(p).map_or(f64::INFINITY, |(_, v)| v);
    let starts = match warm {
        Some(Dist::Burr { c, loc, scale, .. }) => vec![vec![c.ln(), s.u_of(loc), scale.ln()]],
        _ => {
            // trial locations scaled by the lower half of the data, which a
            // heavy right tail does not inflate
            let spread = (s.median() - s.min).max(1e-9 * s.range());
            [0.1, 1.0, 0.01]
            .iter()
            .map(|&off| {
                // log-logistic (d = 1) moments of the log data at a trial location
                let u = (off * spread).ln();
                let loc = s.loc_at(u);
                let ly: Vec<f64> = s.xs.iter().map(|x| (x - loc).ln()).collect();
                let mu = ly.iter().sum::<f64>() / s.n;
                let sd = (ly.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / s.n).sqrt().max(1e-6);
                let c = std::f64::consts::PI / (3f64.sqrt() * sd);
                vec![c.ln(), u, mu]
            })
            .collect()
        }
    };
    let (p, _) = multistart(f, &starts)?;
    at(&p)
        .map(|(d, _)| d)
        .ok_or_else(|| StatError::OptimizationFailed("burr optimum is infeasible".into()))
}

fn fit_gev(s: &Sample, warm: Option<Dist>) -> Result<Dist, StatError> {
    let f = |p: &[f64]| {
        nll(
            &Dist::Gev {
                shape: p[0],
                loc: p[1],
                scale: p[2].exp(),
            },
            s.xs,
        )
    };
    let starts = match warm {
        Some(Dist::Gev { shape, loc, scale }) => vec![vec![shape, loc, scale.ln()]],
        _ => {
            // Gumbel moments
            let scale = (s.sd * 6f64.sqrt() / std::f64::consts::PI).max(1e-12);
            let loc = s.mean - 0.577_215_664_901_532_9 * scale;
            [0.1, -0.1, 0.3]
                .iter()
                .map(|&xi| {
                    // keep every observation inside the support of the start
                    let mut loc0 = loc;
                    let need = if xi > 0.0 { s.min } else { s.max };
                    if 1.0 + xi * (need - loc0) / scale <= 0.0 {
                        loc0 = need + 0.9 / xi * scale;
                    }
                    vec![xi, loc0, scale.ln()]
                })
                .collect()
        }
    };
    let (p, _) = multistart(f, &starts)?;
    Ok(Dist::Gev {
        shape: p[0],
        loc: p[1],
        scale: p[2].exp(),
    })
}

fn fit_student_t(s: &Sample, warm: Option<Dist>) -> Result<Dist, StatError> {
    let f = |p: &[f64]| {
        let (df, loc, ln_scale) = (p[0].exp(), p[1], p[2]);
        if df > 1e7 {
            return f64::INFINITY;
        }
        let scale = ln_scale.exp();
        let konst = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * std::f64::consts::PI).ln() - ln_scale;
        let tail: f64 = s.xs.iter().map(|x| (((x - loc) / scale).powi(2) / df).ln_1p()).sum();
        -s.n * konst + 0.5 * (df + 1.0) * tail
    };
    let starts = match warm {
        Some(Dist::StudentT { df, loc, scale }) => vec![vec![df.ln(), loc, scale.ln()]],
        _ => {
            let med = s.median();
            let mut dev: Vec<f64> = s.xs.iter().map(|x| (x - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let mad = super::describe::quantile_sorted(&dev, 0.5) * 1.4826;
            let scale = if mad > 0.0 { mad } else { s.sd };
            [3.0f64, 10.0, 30.0]
                .iter()
                .map(|df| vec![df.ln(), med, scale.ln()])
                .collect()
        }
    };
    let (p, _) = multistart(f, &starts)?;
    Ok(Dist::StudentT {
        df: p[0].exp(),
        loc: p[1],
        scale: p[2].exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::family::sample;
    use approx::assert_relative_eq;

    #[test]
    fn normal_closed_form() {
        let xs = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let f = fit_mle(Family::Normal, &xs).unwrap();
        let p = f.params();
        assert_relative_eq!(p[0], 2.0);
        assert_relative_eq!(p[1], (2.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_eq!(f.sample_size, 9);
    }

    #[test]
    fn too_few_points() {
        let err = fit_mle(Family::Normal, &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err, StatError::InsufficientData { needed: 8, got: 3 });
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert_eq!(fit_mle(Family::Gamma, &[2.0; 20]).unwrap_err(), StatError::DegenerateSample);
    }

    #[test]
    fn beta_support_violation() {
        let xs = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.7];
        let opts = FitOptions {
            beta_support: Some((0.0, 1.0)),
            ..Default::default()
        };
        assert!(matches!(
            fit_mle_with(Family::Beta, &xs, &opts),
            Err(StatError::SupportViolation(_))
        ));
    }

    #[test]
    fn exponential_closed_form() {
        let xs = sample(&Dist::Exponential { loc: 1.0, scale: 2.0 }, 5000, 1).unwrap();
        let f = fit_mle(Family::Exponential, &xs).unwrap();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let p = f.params();
        assert!(p[0] < min && min - p[0] < 1e-8);
        assert_relative_eq!(p[1], mean - p[0], max_relative = 1e-12);
    }

    #[test]
    fn location_stays_below_the_data() {
        let xs = sample(&Dist::Gamma { shape: 2.0, loc: 0.0, scale: 3.0 }, 400, 5).unwrap();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        for fam in [
            Family::LogNormal,
            Family::Gamma,
            Family::Weibull,
            Family::Burr,
            Family::Pareto,
            Family::Powerlaw,
            Family::Exponential,
        ] {
            let f = fit_mle(fam, &xs).unwrap();
            let p = f.params();
            let loc = p[p.len() - 2];
            assert!(loc <= min - 1e-9, "{fam}: loc {loc} min {min}");
            assert!(f.nll_at_fit.is_finite());
        }
    }

    #[test]
    fn gamma_recovery() {
        let xs = sample(&Dist::Gamma { shape: 2.0, loc: 0.0, scale: 3.0 }, 20_000, 11).unwrap();
        let p = fit_mle(Family::Gamma, &xs).unwrap().params();
        assert!((p[0] - 2.0).abs() / 2.0 < 0.03, "{p:?}");
        assert!((p[2] - 3.0).abs() / 3.0 < 0.03, "{p:?}");
    }

    #[test]
    fn profile_optimum_beats_neighbours() {
        let xs = sample(&Dist::Weibull { shape: 3.0, loc: 1.0, scale: 2.0 }, 2000, 3).unwrap();
        let f = fit_mle(Family::Weibull, &xs).unwrap();
        let p = f.params();
        for (i, h) in [(0, 1e-3), (1, 1e-3), (2, 1e-3)] {
            for sign in [-1.0, 1.0] {
                let mut q = p.clone();
                q[i] += sign * h;
                if let Ok(d) = Dist::from_params(Family::Weibull, &q) {
                    assert!(nll(&d, &xs) >= f.nll_at_fit - 1e-6, "param {i}");
                }
            }
        }
    }

    #[test]
    fn warm_start_reaches_the_same_fit() {
        for fam in [Family::Burr, Family::Gamma, Family::Gev] {
            let xs = sample(&Dist::Gamma { shape: 3.0, loc: 1.0, scale: 1.0 }, 800, 2).unwrap();
            let cold = fit_mle(fam, &xs).unwrap();
            let opts = FitOptions {
                warm_start: Some(cold.dist),
                ..Default::default()
            };
            let warm = fit_mle_with(fam, &xs, &opts).unwrap();
            assert!((warm.nll_at_fit - cold.nll_at_fit).abs() < 1e-3 * (1.0 + cold.nll_at_fit.abs()));
        }
    }

    #[test]
    fn gamma_shape_root() {
        for a in [0.3, 1.0, 2.0, 17.5, 400.0] {
            let target = f64::ln(a) - digamma(a);
            assert_relative_eq!(gamma_shape(target).unwrap(), a, max_relative = 1e-9);
        }
    }
}
