//! Feedback delay policies and the sampled history they read from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    /// `worst` (always kappa), `min` (always eta_m), `random` or `none`.
    #[serde(default = "worst")]
    pub policy: String,
    pub eta_m: f64,
    pub kappa: f64,
    /// Hold time of each random draw [s].
    #[serde(default = "default_resample")]
    pub resample_interval: f64,
}

fn worst() -> String {
    "worst".into()
}

fn default_resample() -> f64 {
    0.05
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self {
            policy: worst(),
            eta_m: 0.05,
            kappa: 0.1,
            resample_interval: default_resample(),
        }
    }
}

impl DelaySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_m >= 0.0 && self.kappa >= self.eta_m) {
            return Err(CoreError::validation(format!(
                "delay bounds need 0 <= eta_m <= kappa, got eta_m = {}, kappa = {}",
                self.eta_m, self.kappa
            )));
        }
        if !(self.resample_interval > 0.0) {
            return Err(CoreError::validation("delay.resample_interval must be > 0"));
        }
        Ok(())
    }
}

/// Build context for delay policies.
#[derive(Debug, Clone)]
pub struct DelayContext {
    pub spec: DelaySpec,
    pub seed: u64,
}

/// Time-varying delay `nu(t)` with `eta_m <= nu <= kappa`.
pub trait DelayPolicy: Send {
    fn delay(&mut self, t: f64) -> f64;
    /// Times in `(t0, t1]` where `nu` jumps.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64>;
}

struct Constant(f64);

impl DelayPolicy for Constant {
    fn delay(&mut self, _t: f64) -> f64 {
        self.0
    }

    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Piecewise-constant uniform draws. Draw `k` covers
/// `[k*dt, (k+1)*dt)` and is produced in index order, so the sequence is
/// independent of query order.
struct RandomHold {
    lo: f64,
    hi: f64,
    dt: f64,
    rng: ChaCha8Rng,
    draws: Vec<f64>,
}

impl DelayPolicy for RandomHold {
    fn delay(&mut self, t: f64) -> f64 {
        let k = (t.max(0.0) / self.dt).floor() as usize;
        while self.draws.len() <= k {
            let v = if self.hi > self.lo { self.rng.random_range(self.lo..=self.hi) } else { self.lo };
            self.draws.push(v);
        }
        self.draws[k]
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let first = (t0 / self.dt).floor() as i64 + 1;
        (first..)
            .map(|k| k as f64 * self.dt)
            .take_while(|&t| t <= t1)
            .filter(|&t| t > t0)
            .collect()
    }
}

pub type DelayRegistry = Registry<dyn DelayPolicy, DelayContext>;

pub fn delay_registry() -> DelayRegistry {
    let mut r = DelayRegistry::new("delay policy");
    r.register("worst", |c: &DelayContext| Ok(Box::new(Constant(c.spec.kappa))));
    r.register("min", |c: &DelayContext| Ok(Box::new(Constant(c.spec.eta_m))));
    r.register("none", |_: &DelayContext| Ok(Box::new(Constant(0.0))));
    r.register("random", |c: &DelayContext| {
        Ok(Box::new(RandomHold {
            lo: c.spec.eta_m,
            hi: c.spec.kappa,
            dt: c.spec.resample_interval,
            rng: ChaCha8Rng::seed_from_u64(c.seed),
            draws: Vec::new(),
        }))
    });
    r
}

/// Uniformly spaced samples of a vector signal, read back with linear
/// interpolation. Before the first sample the signal is zero (deviations
/// from equilibrium).
#[derive(Debug, Clone)]
pub struct History {
    t0: f64,
    dt: f64,
    width: usize,
    data: Vec<f64>,
}

impl History {
    pub fn new(t0: f64, dt: f64, width: usize) -> Self {
        Self {
            t0,
            dt,
            width,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.width);
        self.data.extend_from_slice(v);
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Time of the newest sample.
    pub fn end(&self) -> f64 {
        self.t0 + (self.len() as f64 - 1.0) * self.dt
    }

    /// Interpolated value at `t`; `None` past the newest sample.
    pub fn at(&self, t: f64, out: &mut [f64]) -> Option<()> {
        let n = self.len();
        if n == 0 || t > self.end() + 1e-12 * self.dt {
            return None;
        }
        if t <= self.t0 {
            if t < self.t0 {
                out.fill(0.0);
            } else {
                out.copy_from_slice(&self.data[..self.width]);
            }
            return Some(());
        }
        let s = (t - self.t0) / self.dt;
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        let a = &self.data[i * self.width..(i + 1) * self.width];
        if i + 1 >= n || w == 0.0 {
            out.copy_from_slice(a);
        } else {
            let b = &self.data[(i + 1) * self.width..(i + 2) * self.width];
            for k in 0..self.width {
                out[k] = a[k] + w * (b[k] - a[k]);
            }
        }
        Some(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(policy: &str) -> DelayContext {
        DelayContext {
            spec: DelaySpec {
                policy: policy.into(),
                eta_m: 0.05,
                kappa: 0.1,
                resample_interval: 0.05,
            },
            seed: 7,
        }
    }

    #[test]
    fn constant_policies() {
        let r = delay_registry();
        assert_eq!(r.build("worst", &ctx("worst")).unwrap().delay(3.0), 0.1);
        assert_eq!(r.build("min", &ctx("min")).unwrap().delay(3.0), 0.05);
        assert_eq!(r.build("none", &ctx("none")).unwrap().delay(3.0), 0.0);
    }

    #[test]
    fn ramp_is_shifted_by_kappa() {
        let mut h = History::new(0.0, 1e-3, 1);
        for k in 0..=1000 {
            h.push(&[k as f64 * 1e-3]);
        }
        let mut p = delay_registry().build("worst", &ctx("worst")).unwrap();
        let mut out = [0.0];
        let t = 0.7;
        h.at(t - p.delay(t), &mut out).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12);
        h.at(-0.2, &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        assert!(h.at(1.5, &mut out).is_none());
    }

    #[test]
    fn random_draws_are_bounded_and_order_free() {
        let r = delay_registry();
        let mut a = r.build("random", &ctx("random")).unwrap();
        let mut b = r.build("random", &ctx("random")).unwrap();
        let fwd: Vec<f64> = (0..40).map(|k| a.delay(k as f64 * 0.025)).collect();
        let mut back: Vec<f64> = (0..40).rev().map(|k| b.delay(k as f64 * 0.025)).collect();
        back.reverse();
        assert_eq!(fwd, back);
        assert!(fwd.iter().all(|v| (0.05..=0.1).contains(v)));
        assert_eq!(fwd[0], fwd[1]);
        assert_eq!(a.breakpoints(0.0, 0.12), vec![0.05, 0.1]);
    }
}
