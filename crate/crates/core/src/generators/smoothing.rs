use crate::error::{check_len, Error, Result};
use crate::linalg;

/// `m_bar = (1/w) (m + sum_{i=1}^{w-1} grad r_{t-i})`.
///
/// `recent` holds `grad r_{t-1}, .., grad r_{t-w+1}` in that order. The recent gradients are
/// summed first and `m` is added last, which is the same floating-point order as the batch
/// update's average, so `m = grad r_{t-w}` reproduces it bit for bit.
pub fn smoothed_generator(m_value: &[f64], recent: &[Vec<f64>], w: usize) -> Result<Vec<f64>> {
    if w < 1 {
        return Err(Error::Config("evaluation window w must be >= 1".into()));
    }
    check_len("smoothing lags", w - 1, recent.len())?;
    let mut acc = vec![0.0; m_value.len()];
    for g in recent {
        check_len("smoothing lag gradient", m_value.len(), g.len())?;
        linalg::axpy(1.0, g, &mut acc);
    }
    linalg::axpy(1.0, m_value, &mut acc);
    linalg::scale(1.0 / w as f64, &mut acc);
    Ok(acc)
}

/// Plain average of gradients, accumulated in the given order.
pub fn average(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Precondition("nothing to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for g in grads {
        check_len("averaged gradient", first.len(), g.len())?;
        linalg::axpy(1.0, g, &mut acc);
    }
    linalg::scale(1.0 / grads.len() as f64, &mut acc);
    Ok(acc)
}

/// Recovers `m` from `m_bar`: `m = w m_bar - sum_{i=1}^{w-1} grad r_{t-i}`.
pub fn unsmooth(m_bar: &[f64], recent: &[Vec<f64>], w: usize) -> Result<Vec<f64>> {
    check_len("smoothing lags", w.saturating_sub(1), recent.len())?;
    let mut m: Vec<f64> = m_bar.iter().map(|x| w as f64 * x).collect();
    for g in recent {
        linalg::axpy(-1.0, g, &mut m);
    }
    Ok(m)
}

/// Normalized forecast error `||m - g||^2 / ||g||^2`.
pub fn forecast_error(forecast: &[f64], realized: &[f64]) -> Result<f64> {
    check_len("forecast", realized.len(), forecast.len())?;
    let denom = linalg::norm_sq(realized);
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(linalg::dist_sq(forecast, realized) / denom)
}
