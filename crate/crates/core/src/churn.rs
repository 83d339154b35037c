//! Session churn: Poisson arrivals, Pareto session lengths, and the
//! elapse-based time-to-stay estimator used to rank relay candidates.

use rand::Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of sessions shorter than 1 minute.
pub const Q_ONE_MINUTE: (f64, f64) = (1.0, 0.60);
/// Share of sessions shorter than 10 minutes.
pub const Q_TEN_MINUTES: (f64, f64) = (10.0, 0.90);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionModel {
    pub lambda_per_min: f64,
    pub pareto_shape: f64,
    pub pareto_scale_min: f64,
}

impl SessionModel {
    fn check(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if ok(self.lambda_per_min) && ok(self.pareto_shape) && ok(self.pareto_scale_min) {
            Ok(())
        } else {
            Err(Error::Argument(format!("session model parameters must be positive: {self:?}")))
        }
    }

    pub fn interarrival_sampler(&self) -> Result<InterarrivalSampler> {
        self.check()?;
        let exp = Exp::new(self.lambda_per_min / 60.0).map_err(|e| Error::Argument(e.to_string()))?;
        Ok(InterarrivalSampler(exp))
    }

    pub fn session_sampler(&self) -> Result<SessionSampler> {
        self.check()?;
        let pareto =
            Pareto::new(self.pareto_scale_min * 60.0, self.pareto_shape).map_err(|e| Error::Argument(e.to_string()))?;
        Ok(SessionSampler(pareto))
    }
}

/// Exponential gaps with mean `60 / lambda` seconds.
#[derive(Debug, Clone, Copy)]
pub struct InterarrivalSampler(Exp<f64>);

impl InterarrivalSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.0.sample(rng)
    }
}

/// Pareto session lengths in seconds.
#[derive(Debug, Clone, Copy)]
pub struct SessionSampler(Pareto<f64>);

impl SessionSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.0.sample(rng)
    }
}

pub fn sample_interarrival<R: Rng + ?Sized>(model: &SessionModel, rng: &mut R) -> Result<f64> {
    Ok(model.interarrival_sampler()?.sample(rng))
}

pub fn sample_session_duration<R: Rng + ?Sized>(model: &SessionModel, rng: &mut R) -> Result<f64> {
    Ok(model.session_sampler()?.sample(rng))
}

/// Pareto CDF in minutes.
pub fn pareto_cdf(scale_min: f64, shape: f64, t_min: f64) -> f64 {
    if t_min <= scale_min {
        0.0
    } else {
        1.0 - (scale_min / t_min).powf(shape)
    }
}

/// Solves `1 - (x_m / t)^a = p` at two quantile points `(t, p)` for the
/// Pareto scale `x_m` (minutes) and shape `a`.
///
/// Dividing the two survival equations gives `(t2 / t1)^a = s1 / s2`, so
/// `a = ln(s1 / s2) / ln(t2 / t1)` and `x_m = t1 * s1^(1/a)`.
pub fn calibrate_pareto(q1: (f64, f64), q2: (f64, f64)) -> Result<(f64, f64)> {
    let ((t1, p1), (t2, p2)) = (q1, q2);
    let finite = [t1, p1, t2, p2].iter().all(|x| x.is_finite());
    if !finite || !(t1 > 0.0 && t1 < t2) || !(0.0 < p1 && p1 < p2 && p2 < 1.0) {
        return Err(Error::Calibration(format!(
            "need 0 < t1 < t2 and 0 < p1 < p2 < 1, got ({t1}, {p1}) and ({t2}, {p2})"
        )));
    }
    let (s1, s2) = (1.0 - p1, 1.0 - p2);
    let shape = (s1 / s2).ln() / (t2 / t1).ln();
    let scale = t1 * s1.powf(1.0 / shape);
    if !(shape > 0.0 && scale > 0.0 && scale < t1) {
        return Err(Error::Calibration(format!("no positive Pareto fit (x_m = {scale}, a = {shape})")));
    }
    Ok((scale, shape))
}

/// `(x_m minutes, a)` fitted to the 1-minute and 10-minute session quantiles.
pub fn default_pareto() -> (f64, f64) {
    calibrate_pareto(Q_ONE_MINUTE, Q_TEN_MINUTES).expect("default quantiles are feasible")
}

/// Quadratic time-to-stay estimate over elapse, both in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeToStayModel {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    /// Inputs above this are evaluated at this point.
    pub valid_elapse_max_min: f64,
}

impl Default for TimeToStayModel {
    fn default() -> Self {
        TimeToStayModel { c2: -0.0076, c1: 0.97, c0: 3.5, valid_elapse_max_min: 60.0 }
    }
}

impl TimeToStayModel {
    /// Same as [`estimate_time_to_stay`] but without the argument check;
    /// negative elapse is clamped to zero.
    pub fn estimate(&self, elapse_min: f64) -> f64 {
        let x = elapse_min.clamp(0.0, self.valid_elapse_max_min);
        (self.c2 * x + self.c1) * x + self.c0
    }
}

pub fn estimate_time_to_stay(model: &TimeToStayModel, elapse_min: f64) -> Result<f64> {
    if elapse_min.is_nan() || elapse_min < 0.0 {
        return Err(Error::Argument(format!("elapse must be >= 0 minutes, got {elapse_min}")));
    }
    Ok(model.estimate(elapse_min))
}
