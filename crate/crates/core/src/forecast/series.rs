use super::ForecastError;

/// Applies first differences `d` times.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    if series.len() <= d {
        return Err(ForecastError::TooShort {
            needed: d + 1,
            got: series.len(),
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// First element of the series after 0, 1, ..., d-1 differencing passes:
/// the initial values [`integrate`] needs.
pub fn difference_heads(series: &[f64], d: usize) -> Result<Vec<f64>, ForecastError> {
    difference(series, d)?;
    let mut heads = Vec::with_capacity(d);
    let mut level = series.to_vec();
    for _ in 0..d {
        heads.push(level[0]);
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(heads)
}

/// Inverts `d = heads.len()` differencing passes.
pub fn integrate(differenced: &[f64], heads: &[f64]) -> Vec<f64> {
    let mut level = differenced.to_vec();
    for &head in heads.iter().rev() {
        let mut next = Vec::with_capacity(level.len() + 1);
        next.push(head);
        let mut acc = head;
        for v in level {
            acc += v;
            next.push(acc);
        }
        level = next;
    }
    level
}

/// Continues `history` by values given on the `d`-times differenced scale.
pub(crate) fn integrate_continuation(history: &[f64], d: usize, future: &[f64]) -> Vec<f64> {
    // Last value of each differencing level of the history.
    let mut tails = Vec::with_capacity(d);
    let mut level = history.to_vec();
    for _ in 0..d {
        tails.push(*level.last().expect("history longer than d"));
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let mut out = future.to_vec();
    for &tail in tails.iter().rev() {
        let mut acc = tail;
        for v in out.iter_mut() {
            acc += *v;
            *v = acc;
        }
    }
    out
}

pub(crate) fn mean(series: &[f64]) -> f64 {
    series.iter().sum::<f64>() / series.len() as f64
}

/// Divide-by-n variance.
pub(crate) fn variance(series: &[f64]) -> f64 {
    let m = mean(series);
    series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / series.len() as f64
}

/// Sample autocorrelations at lags `0..=max_lag` from the biased
/// (divide-by-n) autocovariance.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, ForecastError> {
    let n = series.len();
    if n <= max_lag {
        return Err(ForecastError::TooShort {
            needed: max_lag + 1,
            got: n,
        });
    }
    let m = mean(series);
    let c0 = variance(series);
    if c0 < super::VARIANCE_FLOOR {
        return Err(ForecastError::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| {
            let ck: f64 = (0..n - k)
                .map(|t| (series[t] - m) * (series[t + k] - m))
                .sum::<f64>()
                / n as f64;
            ck / c0
        })
        .collect())
}

/// Partial autocorrelations at lags `0..=max_lag` by the Durbin-Levinson
/// recursion; entry 0 is 1 by convention.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>, ForecastError> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    let mut v: f64 = 1.0;
    for k in 1..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi[j - 1] * rho[k - j]).sum::<f64>();
        let kk = if v.abs() < 1e-15 { 0.0 } else { num / v };
        let mut next: Vec<f64> = (1..k).map(|j| phi[j - 1] - kk * phi[k - j - 1]).collect();
        next.push(kk);
        phi = next;
        v *= 1.0 - kk * kk;
        out.push(kk);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0, 3.0, 6.0], 1).unwrap(), vec![2.0, 3.0]);
        assert_eq!(difference(&[1.0, 3.0, 6.0], 2).unwrap(), vec![1.0]);
        assert_eq!(difference(&[4.0; 5], 1).unwrap(), vec![0.0; 4]);
        assert!(matches!(difference(&[1.0, 2.0], 2), Err(ForecastError::TooShort { .. })));
    }

    #[test]
    fn continuation_matches_integration() {
        let s = [3.0, 5.0, 4.0, 8.0, 13.0];
        let future_diff = [1.0, -2.0];
        let d = 2;
        let mut whole = difference(&s, d).unwrap();
        whole.extend_from_slice(&future_diff);
        let full = integrate(&whole, &difference_heads(&s, d).unwrap());
        assert_eq!(&full[..5], &s);
        assert_eq!(integrate_continuation(&s, d, &future_diff), full[5..].to_vec());
    }

    #[test]
    fn acf_and_pacf_basics() {
        let alt: Vec<f64> = (0..100).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&alt, 2).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] + 1.0).abs() < 0.05);
        let p = pacf(&alt, 3).unwrap();
        assert_eq!(p[1], r[1]);
        assert!(matches!(acf(&[2.0; 10], 1), Err(ForecastError::ZeroVariance)));
    }

    #[test]
    fn pacf_of_ar1_cuts_off_after_lag_one() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0f64; 4000];
        for t in 1..x.len() {
            x[t] = 0.5 * x[t - 1] + noise.sample(&mut rng);
        }
        let p = pacf(&x, 4).unwrap();
        assert!((p[1] - 0.5).abs() < 0.05, "pacf(1) = {}", p[1]);
        assert!(p[2..].iter().all(|v| v.abs() < 0.06), "{p:?}");
    }

    proptest! {
        #[test]
        fn round_trip(series in proptest::collection::vec(-1e3f64..1e3, 4..40), d in 0usize..3) {
            let back = integrate(&difference(&series, d).unwrap(), &difference_heads(&series, d).unwrap());
            prop_assert_eq!(back.len(), series.len());
            let scale = series.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back.iter().zip(&series) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn round_trip_integer_series_is_exact(series in proptest::collection::vec(-1000i32..1000, 4..40), d in 0usize..3) {
            let s: Vec<f64> = series.iter().map(|&v| v as f64).collect();
            let back = integrate(&difference(&s, d).unwrap(), &difference_heads(&s, d).unwrap());
            prop_assert_eq!(back, s);
        }
    }
}
