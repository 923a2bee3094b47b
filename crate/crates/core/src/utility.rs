//! Salvage-memory utility for single servers (Solo) and pooled pods.
//!
//! Each of a pod's `n` salvage links independently has enough idle bandwidth
//! with probability `p`. With `K ~ Binomial(n, p)` idle links of bandwidth
//! `B_L` and a memory provisioned at `B_M = x * B_L`, usable bandwidth is
//! `min(K * B_L, B_M)` and utility is its expectation over `B_M`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PodConfig {
    /// Pod size; 1 is a single server.
    pub n: u32,
    /// Probability that one salvage link is idle enough to use.
    pub p: f64,
    /// Provisioned memory bandwidth over one link's bandwidth.
    pub x: f64,
}

impl PodConfig {
    pub fn new(n: u32, p: f64, x: f64) -> Result<Self> {
        check(n, p)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::domain(format!("x must be > 0, got {x}")));
        }
        Ok(PodConfig { n, p, x })
    }
}

fn check(n: u32, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("pod size must be >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must be in [0, 1], got {p}")));
    }
    Ok(())
}

pub fn solo_utility(p: f64) -> f64 {
    p
}

/// Probability that at least one of `n` links is idle.
pub fn pod_utility(n: u32, p: f64) -> f64 {
    if n == 1 {
        // 1 - (1 - p) is not always p in floating point
        return solo_utility(p);
    }
    1.0 - (1.0 - p).powi(n as i32)
}

/// Exact binomial expectation of `min(K, x) / x`.
///
/// Summed as one minus the expected stranded share `(x - min(K, x)) / x`;
/// only `K < x` terms contribute, so `x = 1` reduces to [`pod_utility`]
/// bit for bit.
pub fn provisioned_utility(n: u32, p: f64, x: f64) -> Result<f64> {
    let cfg = PodConfig::new(n, p, x)?;
    if cfg.n == 1 {
        return Ok(cfg.p * cfg.x.min(1.0) / cfg.x);
    }
    let stranded: f64 = (0..=cfg.n)
        .take_while(|&k| (k as f64) < cfg.x)
        .map(|k| binomial_pmf(cfg.n, k, cfg.p) * (cfg.x - k as f64) / cfg.x)
        .sum();
    Ok(1.0 - stranded)
}

fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    // C(n, k) built as a running product to stay exact for small k
    let coeff = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Monte Carlo estimate of [`provisioned_utility`] from seeded binomial draws.
pub fn provisioned_utility_mc(n: u32, p: f64, x: f64, samples: u64, seed: u64) -> Result<f64> {
    let cfg = PodConfig::new(n, p, x)?;
    if samples == 0 {
        return Err(Error::domain("samples must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Binomial::new(cfg.n as u64, cfg.p).map_err(|e| Error::domain(e.to_string()))?;
    let total: f64 = (0..samples)
        .map(|_| (dist.sample(&mut rng) as f64).min(cfg.x) / cfg.x)
        .sum();
    Ok(total / samples as f64)
}
