use std::fmt;
use std::str::FromStr;

use super::series::{difference, integrate_continuation, mean, variance};
use super::{ForecastError, VARIANCE_FLOOR};
use crate::linalg::{least_squares, solve, Dense};

/// Orders of an ARIMA model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaSpec {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self, ForecastError> {
        let spec = ArimaSpec { p, d, q };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.p + self.q == 0 && self.d != 0 {
            return Err(ForecastError::InvalidSpec(format!(
                "{self} has no AR or MA terms; only (0,0,0) may omit both"
            )));
        }
        Ok(())
    }

    /// Shortest series `fit_arima` accepts.
    pub fn min_length(&self) -> usize {
        self.p + self.q + self.d + self.p.max(self.q) + 5
    }
}

impl fmt::Display for ArimaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ARIMA({},{},{})", self.p, self.d, self.q)
    }
}

impl FromStr for ArimaSpec {
    type Err = ForecastError;

    /// Accepts `p,d,q`, optionally wrapped as `(p,d,q)` or `ARIMA(p,d,q)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.trim();
        let body = body
            .strip_prefix("ARIMA")
            .or_else(|| body.strip_prefix("arima"))
            .unwrap_or(body)
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')');
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        let bad = || ForecastError::InvalidSpec(format!("cannot parse ARIMA orders from {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        ArimaSpec::new(n[0], n[1], n[2])
    }
}

/// Fitted model on the `d`-times differenced scale:
/// `w_t = c + sum phi_l w_{t-l} + sum theta_l e_{t-l} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub spec: ArimaSpec,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub c: f64,
    /// In-sample innovations on the differenced scale, zero for the first
    /// `p` positions.
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// The training series was constant; forecasts repeat `c`.
    pub degenerate: bool,
}

impl ArimaModel {
    fn degenerate(spec: ArimaSpec, level: f64) -> Self {
        ArimaModel {
            spec,
            phi: vec![0.0; spec.p],
            theta: vec![0.0; spec.q],
            c: level,
            residuals: Vec::new(),
            sigma2: 0.0,
            degenerate: true,
        }
    }

    /// Whether the AR polynomial has all roots outside the unit circle, for
    /// `p <= 2`; `None` for higher orders.
    pub fn ar_stationary(&self) -> Option<bool> {
        match self.phi.as_slice() {
            [] => Some(true),
            [a] => Some(a.abs() < 1.0),
            [a, b] => Some(b.abs() < 1.0 && a + b < 1.0 && b - a < 1.0),
            _ => None,
        }
    }
}

/// One-step innovations under fixed coefficients, with zero presample
/// innovations and the first `p` innovations set to zero.
fn innovations(w: &[f64], c: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let ar: f64 = phi.iter().enumerate().map(|(l, f)| f * w[t - l - 1]).sum();
        let ma: f64 = theta
            .iter()
            .enumerate()
            .filter(|(l, _)| t > *l)
            .map(|(l, th)| th * e[t - l - 1])
            .sum();
        e[t] = w[t] - c - ar - ma;
    }
    e
}

fn css(e: &[f64], p: usize) -> f64 {
    e[p..].iter().map(|v| v * v).sum()
}

/// Least squares of `w_t` on an intercept, `p` lags of `w` and the given
/// lagged regressors, over `t >= start`.
fn lagged_regression(
    w: &[f64],
    p: usize,
    extra: Option<(&[f64], usize)>,
    start: usize,
) -> Result<Vec<f64>, ForecastError> {
    let q = extra.map_or(0, |(_, q)| q);
    let k = 1 + p + q;
    let rows = w.len() - start;
    let mut x = Dense::zeros(rows, k);
    let mut y = Vec::with_capacity(rows);
    for (r, t) in (start..w.len()).enumerate() {
        x.set(r, 0, 1.0);
        for l in 0..p {
            x.set(r, 1 + l, w[t - l - 1]);
        }
        if let Some((e, q)) = extra {
            for l in 0..q {
                x.set(r, 1 + p + l, e[t - l - 1]);
            }
        }
        y.push(w[t]);
    }
    least_squares(&x, &y).ok_or(ForecastError::Singular)
}

/// Conditional least-squares fit.
pub fn fit_arima(series: &[f64], spec: ArimaSpec) -> Result<ArimaModel, ForecastError> {
    spec.validate()?;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let needed = spec.min_length();
    if series.len() < needed {
        return Err(ForecastError::TooShort {
            needed,
            got: series.len(),
        });
    }
    if variance(series) < VARIANCE_FLOOR {
        return Ok(ArimaModel::degenerate(spec, mean(series)));
    }
    let w = difference(series, spec.d)?;
    let (p, q) = (spec.p, spec.q);

    let (c, phi, theta) = if q == 0 {
        let beta = lagged_regression(&w, p, None, p)?;
        (beta[0], beta[1..].to_vec(), Vec::new())
    } else {
        hannan_rissanen(&w, p, q)?
    };

    let residuals = innovations(&w, c, &phi, &theta);
    let sigma2 = css(&residuals, p) / (w.len() - p) as f64;
    Ok(ArimaModel {
        spec,
        phi,
        theta,
        c,
        residuals,
        sigma2,
        degenerate: false,
    })
}

type Coefficients = (f64, Vec<f64>, Vec<f64>);

fn hannan_rissanen(w: &[f64], p: usize, q: usize) -> Result<Coefficients, ForecastError> {
    let n = w.len();
    let m = (n / 4).clamp(1, 10).max(p.max(q));
    // Stage 1: long autoregression for proxy innovations.
    let long = lagged_regression(w, m, None, m)?;
    let mut proxy = vec![0.0; n];
    for t in m..n {
        let fit: f64 = long[0] + (0..m).map(|l| long[1 + l] * w[t - l - 1]).sum::<f64>();
        proxy[t] = w[t] - fit;
    }
    // Stage 2: regression on lagged values and lagged proxies.
    let start = m + p.max(q);
    if n <= start + 1 + p + q {
        return Err(ForecastError::TooShort {
            needed: start + 2 + p + q + 1,
            got: n,
        });
    }
    let beta = lagged_regression(w, p, Some((&proxy, q)), start)?;
    let (c, phi, theta) = (beta[0], beta[1..1 + p].to_vec(), beta[1 + p..].to_vec());
    Ok(gauss_newton_pass(w, c, phi, theta))
}

/// One Gauss-Newton step on the conditional sum of squares, kept only if it
/// lowers it.
fn gauss_newton_pass(w: &[f64], c: f64, phi: Vec<f64>, theta: Vec<f64>) -> Coefficients {
    let (p, q) = (phi.len(), theta.len());
    let k = 1 + p + q;
    let n = w.len();
    let e = innovations(w, c, &phi, &theta);
    // de[t][j]: derivative of e_t w.r.t. parameter j (c, phi.., theta..).
    let mut de = vec![vec![0.0; k]; n];
    for t in p..n {
        let mut row = vec![0.0; k];
        row[0] = -1.0;
        for l in 0..p {
            row[1 + l] = -w[t - l - 1];
        }
        for l in 0..q {
            if t > l {
                row[1 + p + l] = -e[t - l - 1];
            }
        }
        for (l, th) in theta.iter().enumerate() {
            if t > l {
                for j in 0..k {
                    row[j] -= th * de[t - l - 1][j];
                }
            }
        }
        de[t] = row;
    }
    let mut jtj = Dense::zeros(k, k);
    let mut jte = vec![0.0; k];
    for t in p..n {
        for i in 0..k {
            jte[i] += de[t][i] * e[t];
            for j in 0..k {
                jtj.add(i, j, de[t][i] * de[t][j]);
            }
        }
    }
    let rhs: Vec<f64> = jte.iter().map(|v| -v).collect();
    let Some(delta) = solve(&jtj, &rhs) else {
        return (c, phi, theta);
    };
    let c2 = c + delta[0];
    let phi2: Vec<f64> = phi.iter().zip(&delta[1..1 + p]).map(|(a, b)| a + b).collect();
    let theta2: Vec<f64> = theta.iter().zip(&delta[1 + p..]).map(|(a, b)| a + b).collect();
    let before = css(&e, p);
    let after = css(&innovations(w, c2, &phi2, &theta2), p);
    if after.is_finite() && after < before {
        (c2, phi2, theta2)
    } else {
        (c, phi, theta)
    }
}

/// Recursive multi-step forecast after the end of `history`, integrated
/// back to the original scale and clamped at zero.
///
/// Innovations over the history are recomputed with the model's
/// coefficients, so `history` need not be the training series.
pub fn forecast(model: &ArimaModel, history: &[f64], steps: usize) -> Result<Vec<f64>, ForecastError> {
    let spec = model.spec;
    let needed = (spec.p + spec.d).max(1);
    if history.len() < needed {
        return Err(ForecastError::TooShort {
            needed,
            got: history.len(),
        });
    }
    if model.degenerate {
        return Ok(vec![model.c.max(0.0); steps]);
    }
    let mut w = difference(history, spec.d)?;
    let mut e = innovations(&w, model.c, &model.phi, &model.theta);
    let n = w.len();
    for s in 0..steps {
        let t = n + s;
        let ar: f64 = model.phi.iter().enumerate().map(|(l, f)| f * w[t - l - 1]).sum();
        let ma: f64 = model
            .theta
            .iter()
            .enumerate()
            .filter(|(l, _)| t > *l)
            .map(|(l, th)| th * e[t - l - 1])
            .sum();
        w.push(model.c + ar + ma);
        e.push(0.0);
    }
    let raw = integrate_continuation(history, spec.d, &w[n..]);
    Ok(raw.into_iter().map(|v| v.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ar1(phi: f64, c: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![c / (1.0 - phi)];
        for _ in 1..n {
            let prev = *x.last().unwrap();
            x.push(phi * prev + c + noise.sample(&mut rng));
        }
        x
    }

    fn model(p: Vec<f64>, d: usize, c: f64) -> ArimaModel {
        ArimaModel {
            spec: ArimaSpec { p: p.len(), d, q: 0 },
            phi: p,
            theta: Vec::new(),
            c,
            residuals: Vec::new(),
            sigma2: 1.0,
            degenerate: false,
        }
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("1,0,0".parse::<ArimaSpec>().unwrap(), ArimaSpec { p: 1, d: 0, q: 0 });
        assert_eq!("(0, 1, 1)".parse::<ArimaSpec>().unwrap(), ArimaSpec { p: 0, d: 1, q: 1 });
        assert_eq!("ARIMA(2,1,0)".parse::<ArimaSpec>().unwrap().to_string(), "ARIMA(2,1,0)");
        assert!("0,1,0".parse::<ArimaSpec>().is_err());
        assert!("1,0".parse::<ArimaSpec>().is_err());
        assert!("0,0,0".parse::<ArimaSpec>().is_ok());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = vec![7.0; 30];
        for spec in ["1,0,0", "0,1,1", "0,0,0", "1,1,0"] {
            let m = fit_arima(&s, spec.parse().unwrap()).unwrap();
            assert!(m.degenerate);
            assert_eq!(m.c, 7.0);
            assert_eq!(forecast(&m, &s, 3).unwrap(), vec![7.0; 3]);
        }
    }

    #[test]
    fn hand_recursions() {
        assert_eq!(forecast(&model(vec![0.5], 0, 0.0), &[3.0, 8.0], 2).unwrap(), vec![4.0, 2.0]);
        assert_eq!(forecast(&model(vec![0.5], 0, -10.0), &[3.0, 8.0], 1).unwrap(), vec![0.0]);
        // d = 1: differences continue at 0.5 * last difference.
        let f = forecast(&model(vec![0.5], 1, 0.0), &[10.0, 14.0], 2).unwrap();
        assert_eq!(f, vec![16.0, 17.0]);
    }

    #[test]
    fn mean_model_forecasts_training_mean() {
        let s: Vec<f64> = (0..20).map(|t| (t % 5) as f64 + 1.0).collect();
        let m = fit_arima(&s, ArimaSpec { p: 0, d: 0, q: 0 }).unwrap();
        let avg = s.iter().sum::<f64>() / 20.0;
        assert!((m.c - avg).abs() < 1e-12);
        for v in forecast(&m, &s, 4).unwrap() {
            assert!((v - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_coefficient_recovered() {
        let x = ar1(0.6, 10.0, 200, 7);
        let m = fit_arima(&x, ArimaSpec { p: 1, d: 0, q: 0 }).unwrap();
        assert!((0.5..=0.7).contains(&m.phi[0]), "phi = {}", m.phi[0]);
        assert_eq!(m.ar_stationary(), Some(true));
        assert!((m.sigma2 - 1.0).abs() < 0.3);
    }

    #[test]
    fn ma1_coefficient_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let eps: Vec<f64> = (0..801).map(|_| noise.sample(&mut rng)).collect();
        let x: Vec<f64> = (1..801).map(|t| 20.0 + eps[t] + 0.5 * eps[t - 1]).collect();
        let m = fit_arima(&x, ArimaSpec { p: 0, d: 0, q: 1 }).unwrap();
        assert!((m.theta[0] - 0.5).abs() < 0.1, "theta = {}", m.theta[0]);
        assert!((m.c - 20.0).abs() < 0.2);
    }

    #[test]
    fn short_and_bad_series_rejected() {
        let spec = ArimaSpec { p: 1, d: 0, q: 0 };
        assert!(matches!(fit_arima(&[1.0, 2.0, 3.0], spec), Err(ForecastError::TooShort { .. })));
        let mut s: Vec<f64> = (0..20).map(f64::from).collect();
        s[4] = f64::NAN;
        assert!(matches!(fit_arima(&s, spec), Err(ForecastError::NonFinite)));
        assert!(matches!(
            forecast(&model(vec![0.5, 0.1], 1, 0.0), &[1.0, 2.0], 1),
            Err(ForecastError::TooShort { .. })
        ));
    }
}
