use statrs::distribution::{Beta, ContinuousCDF, Normal};

use super::FiError;

/// Two-sided standard normal quantile for `confidence` (0.95 → 1.95996…).
pub fn z_score(confidence: f64) -> Result<f64, FiError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(FiError::Invalid(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(n.inverse_cdf(0.5 + confidence / 2.0))
}

/// Fault-injection sample size for a finite (or, with `None`, infinite)
/// population:
///
/// `M = N / (1 + e²(N − 1) / (z² p (1 − p)))`
///
/// rounded up and clamped to `[1, N]`.
pub fn sample_size(p_expected: f64, population: Option<u64>, confidence: f64, margin: f64) -> Result<u64, FiError> {
    if !(p_expected > 0.0 && p_expected < 1.0) {
        return Err(FiError::Invalid(format!("expected probability must be in (0, 1), got {p_expected}")));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(FiError::Invalid(format!("margin must be positive, got {margin}")));
    }
    let z = z_score(confidence)?;
    let core = z * z * p_expected * (1.0 - p_expected);
    let m = match population {
        None => core / (margin * margin),
        Some(0) => return Err(FiError::Invalid("population must be at least 1".into())),
        Some(n) => {
            let n = n as f64;
            n / (1.0 + margin * margin * (n - 1.0) / core)
        }
    };
    // Guard against 1536.0000000002-style rounding noise before ceil.
    let m = ((m - 1e-9).ceil() as u64).max(1);
    Ok(population.map_or(m, |n| m.min(n)))
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64), FiError> {
    if trials == 0 {
        return Ok((0.0, 1.0));
    }
    let z = z_score(confidence)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Clopper-Pearson interval for `successes` out of `trials`.
///
/// Built from beta quantiles, so its coverage never drops below
/// `confidence`, even when the expected count of successes is below one.
pub fn clopper_pearson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64), FiError> {
    z_score(confidence)?;
    if trials == 0 {
        return Ok((0.0, 1.0));
    }
    if successes > trials {
        return Err(FiError::Invalid(format!("{successes} successes out of {trials} trials")));
    }
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let quantile = |a: f64, b: f64, q: f64| {
        Beta::new(a, b).map(|d| d.inverse_cdf(q)).map_err(|e| FiError::Invalid(format!("beta({a}, {b}): {e}")))
    };
    let lo = if successes == 0 { 0.0 } else { quantile(k, n - k + 1.0, alpha / 2.0)? };
    let hi = if successes == trials { 1.0 } else { quantile(k + 1.0, n - k, 1.0 - alpha / 2.0)? };
    Ok((lo, hi))
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns `None` when either side is constant or fewer than two points exist.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
