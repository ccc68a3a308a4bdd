//! Null-model data generators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng;

/// Shape of the baseline survival curve over `1..K−1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Shape {
    /// Linear decline.
    A,
    /// Early events: geometric decline with half the event mass by `(K − 1)/3`.
    B,
    /// Events concentrated mid-window: logistic decline centred at `(K − 1)/2`.
    C,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::A, Shape::B, Shape::C];

    /// Fraction of the total event mass reached by time `t` (`F(0) = 0`, `F(K−1) = 1`).
    fn cumulative(self, t: f64, last: f64) -> f64 {
        match self {
            Shape::A => t / last,
            Shape::B => {
                let r = 0.618f64.powf(3.0 / last);
                (1.0 - r.powf(t)) / (1.0 - r.powf(last))
            }
            Shape::C => {
                let s = 6.0 / last;
                let g = |u: f64| 1.0 / (1.0 + (-s * (u - last / 2.0)).exp());
                (g(t) - g(0.0)) / (g(last) - g(0.0))
            }
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Shape {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Shape::A),
            "B" | "b" => Ok(Shape::B),
            "C" | "c" => Ok(Shape::C),
            _ => Err(format!("unknown shape '{s}' (A, B, C)")),
        }
    }
}

/// Baseline logit intercepts `γ₀t`, `t = 1..K−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSchedule {
    pub gamma0: Vec<f64>,
}

impl BaselineSchedule {
    pub fn hazards(&self) -> Vec<f64> {
        self.gamma0.iter().map(|&g| 1.0 / (1.0 + (-g).exp())).collect()
    }

    /// `S(1..K−1)`.
    pub fn survival(&self) -> Vec<f64> {
        let mut s = 1.0;
        self.hazards()
            .into_iter()
            .map(|h| {
                s *= 1.0 - h;
                s
            })
            .collect()
    }

    /// `P(T = t)` for `t = 1..K`, where `T = K` means no event in the window.
    pub fn event_time_pmf(&self) -> Vec<f64> {
        let mut s = 1.0;
        let mut pmf: Vec<f64> = self
            .hazards()
            .into_iter()
            .map(|h| {
                let p = s * h;
                s *= 1.0 - h;
                p
            })
            .collect();
        pmf.push(s);
        pmf
    }
}

pub fn shape_to_gamma(k: u32, event_rate: f64, shape: Shape) -> Result<BaselineSchedule, Error> {
    if !(event_rate > 0.0 && event_rate < 1.0) {
        return Err(Error::Config(format!(
            "event rate must lie in (0, 1), got {event_rate}"
        )));
    }
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 time points, got K = {k}")));
    }
    let last = (k - 1) as f64;
    let mut prev = 1.0;
    let mut gamma0 = Vec::with_capacity(k as usize - 1);
    for t in 1..k {
        let s = 1.0 - event_rate * shape.cumulative(t as f64, last);
        let h = (prev - s) / prev;
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Config(format!("shape {shape} implies hazard {h} at t = {t}")));
        }
        gamma0.push((h / (1.0 - h)).ln());
        prev = s;
    }
    Ok(BaselineSchedule { gamma0 })
}

/// `N x q` standard normal covariates with pairwise correlation `rho`.
pub fn gen_covariates(n: usize, q: usize, rho: f64, seed: u64) -> Result<Vec<Vec<f64>>, Error> {
    let lower = if q > 1 { -1.0 / (q as f64 - 1.0) } else { -1.0 };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::Config(format!(
            "correlation {rho} must lie in ({lower}, 1) for q = {q}"
        )));
    }
    let sigma = DMatrix::from_fn(q, q, |i, j| if i == j { 1.0 } else { rho });
    let l = sigma
        .cholesky()
        .ok_or_else(|| {
            Error::Config(format!(
                "equicorrelation matrix with rho = {rho} is not positive definite"
            ))
        })?
        .unpack();
    let mut rng = rng::stream(seed, &[]);
    let mut e = vec![0.0; q];
    Ok((0..n)
        .map(|_| {
            for v in e.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            (0..q).map(|i| (0..=i).map(|j| l[(i, j)] * e[j]).sum()).collect()
        })
        .collect())
}

/// Event times by sequential Bernoulli trials; survivors of all `K − 1`
/// trials get `T = K`.
pub fn gen_survival(n: usize, schedule: &BaselineSchedule, seed: u64) -> Vec<u32> {
    let hazards = schedule.hazards();
    let k = hazards.len() as u32 + 1;
    let mut rng = rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            for (t, &h) in hazards.iter().enumerate() {
                if rng.random::<f64>() < h {
                    return t as u32 + 1;
                }
            }
            k
        })
        .collect()
}

/// `P(C < T)` when `C = min(⌈Exp(rate)⌉, K)`: for `T = t`, `C < t` iff the
/// continuous time is at most `t − 1`.
pub fn censoring_fraction(rate: f64, schedule: &BaselineSchedule) -> f64 {
    schedule
        .event_time_pmf()
        .iter()
        .enumerate()
        .map(|(i, p)| p * (1.0 - (-rate * i as f64).exp()))
        .sum()
}

/// Exponential rate whose discretized censoring times censor a `target`
/// fraction of subjects, by bisection on the exact censoring probability.
pub fn calibrate_censoring(target: f64, schedule: &BaselineSchedule) -> Result<f64, Error> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let sup = 1.0 - schedule.event_time_pmf()[0];
    if !(target > 0.0 && target < sup) {
        return Err(Error::Config(format!(
            "censoring target {target} is unattainable; it must lie in [0, {sup:.4})"
        )));
    }
    let mut hi = 1.0;
    while censoring_fraction(hi, schedule) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Config(format!("censoring target {target} is unattainable")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censoring_fraction(mid, schedule) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Discretized censoring times on `1..=K`; rate 0 means no censoring (`C ≡ K`).
pub fn gen_censoring(n: usize, rate: f64, k: u32, seed: u64) -> Vec<u32> {
    if rate <= 0.0 {
        return vec![k; n];
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut rng = rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let c: f64 = exp.sample(&mut rng);
            (c.ceil().max(1.0) as u32).min(k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn linear_shape_at_k4() {
        let s = shape_to_gamma(4, 0.6, Shape::A).unwrap();
        let want = [logit(0.2), logit(0.25), logit(1.0 / 3.0)];
        for (a, b) in s.gamma0.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_shape_hits_the_event_rate() {
        for k in 3..=11 {
            for rate in [0.8, 0.6, 0.4, 0.2] {
                for shape in Shape::ALL {
                    let s = shape_to_gamma(k, rate, shape).unwrap();
                    let surv = s.survival();
                    assert!((surv.last().unwrap() - (1.0 - rate)).abs() < 1e-6);
                    assert!(surv.windows(2).all(|w| w[1] < w[0]));
                }
                let a = shape_to_gamma(k, rate, Shape::A).unwrap().survival();
                let b = shape_to_gamma(k, rate, Shape::B).unwrap().survival();
                assert!(b[0] < a[0], "K = {k}");
            }
        }
    }

    #[test]
    fn censoring_calibration_is_exact() {
        let s = shape_to_gamma(8, 0.2, Shape::C).unwrap();
        let rate = calibrate_censoring(0.2, &s).unwrap();
        assert!((censoring_fraction(rate, &s) - 0.2).abs() < 1e-9);
        assert!(calibrate_censoring(0.999, &s).is_err());
        assert_eq!(calibrate_censoring(0.0, &s).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(shape_to_gamma(4, 1.0, Shape::A).is_err());
        assert!(gen_covariates(10, 13, -0.1, 1).is_err());
        assert!(gen_covariates(10, 13, 1.0, 1).is_err());
    }

    #[test]
    fn degenerate_hazards() {
        let s = BaselineSchedule {
            gamma0: vec![50.0, 50.0],
        };
        assert!(gen_survival(100, &s, 3).iter().all(|&t| t == 1));
    }
}
