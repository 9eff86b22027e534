//! Delay pipeline of the sensor → controller → actuator loop: send times,
//! the `[N_min, N_max]` hold-length envelope and seeded per-iteration delays.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guards `⌈Δ/τ⌉` against representation error when `Δ` is a decimal multiple
/// of `τ`.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Sampling interval of sensor and ZoH, seconds.
    pub tau: f64,
    /// Channel bandwidth, bits per second.
    pub b_max: f64,
    pub d_req_max: f64,
    pub d_delay_min: f64,
    pub d_delay_max: f64,
    pub d_ctrl_min: f64,
    pub d_ctrl_max: f64,
}

impl NetworkConfig {
    /// Network of the unicycle example: 1 kbit/s, τ = 0.2 s.
    pub fn reference() -> Self {
        Self {
            tau: 0.2,
            b_max: 1000.0,
            d_req_max: 0.05,
            d_delay_min: 0.02,
            d_delay_max: 0.1,
            d_ctrl_min: 0.001,
            d_ctrl_max: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.tau, self.b_max, self.d_req_max, self.d_delay_min, self.d_delay_max, self.d_ctrl_min, self.d_ctrl_max];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("network parameters must be finite and nonnegative".into()));
        }
        if self.tau <= 0.0 || self.b_max <= 0.0 {
            return Err(Error::InvalidParameter("τ and bandwidth must be positive".into()));
        }
        if self.d_delay_min > self.d_delay_max || self.d_ctrl_min > self.d_ctrl_max {
            return Err(Error::InvalidParameter("each delay lower bound must not exceed its upper bound".into()));
        }
        Ok(())
    }
}

pub fn send_delay(bits: u32, b_max: f64) -> f64 {
    bits as f64 / b_max
}

/// Delay envelope and hold-length bounds for given encoding lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayEnvelope {
    pub send_sc: f64,
    pub send_ca: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub n_min: usize,
    pub n_max: usize,
}

fn hold_length(delta: f64, tau: f64) -> usize {
    ((delta / tau - CEIL_SLACK).ceil() as i64).max(1) as usize
}

pub fn envelope(cfg: &NetworkConfig, bits_x: u32, bits_u: u32) -> DelayEnvelope {
    let send_sc = send_delay(bits_x, cfg.b_max);
    let send_ca = send_delay(bits_u, cfg.b_max);
    let delta_min = send_sc + cfg.d_ctrl_min + send_ca + 2.0 * cfg.d_delay_min;
    let delta_max = send_sc + cfg.d_ctrl_max + send_ca + 2.0 * cfg.d_req_max + 2.0 * cfg.d_delay_max;
    DelayEnvelope {
        send_sc,
        send_ca,
        delta_min,
        delta_max,
        n_min: hold_length(delta_min, cfg.tau),
        n_max: hold_length(delta_max, cfg.tau),
    }
}

/// `(N_min, N_max)`; a zero lower envelope still yields `N_min = 1`.
pub fn n_bounds(cfg: &NetworkConfig, bits_x: u32, bits_u: u32) -> (usize, usize) {
    let e = envelope(cfg, bits_x, bits_u);
    (e.n_min, e.n_max)
}

/// Delays realized in one loop iteration, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRecord {
    pub d_req_sc: f64,
    pub d_delay_sc: f64,
    pub d_ctrl: f64,
    pub d_req_ca: f64,
    pub d_delay_ca: f64,
}

impl DelayRecord {
    pub fn all_min(cfg: &NetworkConfig) -> Self {
        Self { d_req_sc: 0.0, d_delay_sc: cfg.d_delay_min, d_ctrl: cfg.d_ctrl_min, d_req_ca: 0.0, d_delay_ca: cfg.d_delay_min }
    }

    pub fn all_max(cfg: &NetworkConfig) -> Self {
        Self {
            d_req_sc: cfg.d_req_max,
            d_delay_sc: cfg.d_delay_max,
            d_ctrl: cfg.d_ctrl_max,
            d_req_ca: cfg.d_req_max,
            d_delay_ca: cfg.d_delay_max,
        }
    }
}

/// Release instants of one iteration that starts at the ZoH refresh `A_k·τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTiming {
    /// Sensor send instant `t_{2k}`.
    pub t_send_sc: f64,
    /// Controller send instant `t_{2k+1}`.
    pub t_send_ca: f64,
    pub refresh_index: u64,
    pub hold: usize,
}

/// Timeline of iteration `k` given `A_k` and the realized delays.
pub fn iteration_timing(cfg: &NetworkConfig, env: &DelayEnvelope, a_k: u64, d: &DelayRecord) -> IterationTiming {
    let start = a_k as f64 * cfg.tau;
    let t_send_sc = start + d.d_req_sc;
    let arrive_ctrl = t_send_sc + env.send_sc + d.d_delay_sc;
    let t_send_ca = arrive_ctrl + d.d_ctrl + d.d_req_ca;
    let arrive_zoh = t_send_ca + env.send_ca + d.d_delay_ca;
    // total delay relative to A_k·τ keeps the ceiling exact for integer A_k
    let hold = hold_length(arrive_zoh - start, cfg.tau);
    IterationTiming { t_send_sc, t_send_ca, refresh_index: a_k + hold as u64, hold }
}

/// Draws one iteration's delays uniformly within their bounds.
pub fn sample_iteration<R: Rng + ?Sized>(cfg: &NetworkConfig, env: &DelayEnvelope, a_k: u64, rng: &mut R) -> (DelayRecord, IterationTiming) {
    let mut uni = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let d = DelayRecord {
        d_req_sc: uni(0.0, cfg.d_req_max),
        d_delay_sc: uni(cfg.d_delay_min, cfg.d_delay_max),
        d_ctrl: uni(cfg.d_ctrl_min, cfg.d_ctrl_max),
        d_req_ca: uni(0.0, cfg.d_req_max),
        d_delay_ca: uni(cfg.d_delay_min, cfg.d_delay_max),
    };
    (d, iteration_timing(cfg, env, a_k, &d))
}
