use crate::error::Result;
use crate::generators::{average, combine, smoothed_generator};
use crate::stream::{History, MiniBatchPart};

/// What the forecast `m(.; t)` is for one round.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ForecastValue {
    Oracle,
    Lag(usize),
    /// Coefficients of lags `1..=len`.
    Linear(Vec<f64>),
}

impl ForecastValue {
    /// Lag coefficients, index `i` for `grad r_{t-i}`.
    fn coeffs(&self) -> Vec<f64> {
        match self {
            ForecastValue::Oracle => vec![1.0],
            ForecastValue::Lag(k) => {
                let mut c = vec![0.0; k + 1];
                c[*k] = 1.0;
                c
            }
            ForecastValue::Linear(a) => std::iter::once(0.0).chain(a.iter().copied()).collect(),
        }
    }
}

/// Training direction for one target round.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RoundGenerator {
    /// Mean of the last `b` gradients.
    Average { b: usize },
    /// `(m + sum_{i=1}^{w-1} grad r_{t-i}) / w`.
    Smoothed { w: usize, forecast: ForecastValue },
}

impl RoundGenerator {
    pub fn direction(
        &self,
        target: usize,
        theta: &[f64],
        part: Option<MiniBatchPart>,
        hist: &History<'_>,
    ) -> Result<Vec<f64>> {
        let mut memo: Vec<Option<Vec<f64>>> = Vec::new();
        let mut lag = |i: usize| -> Result<Vec<f64>> {
            if memo.len() <= i {
                memo.resize(i + 1, None);
            }
            if let Some(g) = &memo[i] {
                return Ok(g.clone());
            }
            let g = hist.grad_part(target as i64 - i as i64, theta, part)?;
            memo[i] = Some(g.clone());
            Ok(g)
        };
        match self {
            RoundGenerator::Average { b } => average(&(1..=*b).map(&mut lag).collect::<Result<Vec<_>>>()?),
            RoundGenerator::Smoothed { w, forecast } => {
                let recent = (1..*w).map(&mut lag).collect::<Result<Vec<_>>>()?;
                let m = match forecast {
                    ForecastValue::Oracle => hist.lookahead().grad_part(target as i64, theta, part)?,
                    ForecastValue::Lag(k) => lag(*k)?,
                    ForecastValue::Linear(a) => {
                        let grads = (1..=a.len()).map(&mut lag).collect::<Result<Vec<_>>>()?;
                        combine(a, &grads)?
                    }
                };
                smoothed_generator(&m, &recent, *w)
            }
        }
    }

    /// Coefficients of the forecast `m` for which this direction equals the `w`-smoothed
    /// generator: `m = w * direction - sum_{i=1}^{w-1} grad r_{t-i}`.
    pub fn implied_forecast(&self, w: usize) -> Vec<f64> {
        let (mut m, own_w, scale) = match self {
            RoundGenerator::Smoothed { w: ws, forecast } if *ws == w => return forecast.coeffs(),
            RoundGenerator::Average { b } => {
                let mut c = vec![0.0; b + 1];
                c[1..].fill(1.0);
                (c, 1, w as f64 / *b as f64)
            }
            RoundGenerator::Smoothed { w: ws, forecast } => (forecast.coeffs(), *ws, w as f64 / *ws as f64),
        };
        if m.len() < own_w.max(w) {
            m.resize(own_w.max(w), 0.0);
        }
        for c in m.iter_mut().take(own_w).skip(1) {
            *c += 1.0;
        }
        for c in m.iter_mut() {
            *c *= scale;
        }
        for c in m.iter_mut().take(w).skip(1) {
            *c -= 1.0;
        }
        m
    }
}
