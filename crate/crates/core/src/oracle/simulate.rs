//! Seeded Monte Carlo simulation of maximal paths.
//!
//! Path `i` draws from ChaCha8 seeded with `seed_from_u64(seed)` and switched
//! to stream `i`, so every path is reproducible on its own and batches can run
//! in any order. A categorical draw over probabilities with common
//! denominator `L ≤ 2^64` takes one `gen_range(0..L)` and picks the first
//! outcome whose cumulative numerator exceeds it; other draws use a `f64`
//! from `gen::<f64>()` against cumulative float probabilities.

use super::OracleError;
use crate::model::{Mdp, RewardDistribution, Scheduler};
use crate::rational::{to_f64, Rational};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    /// Steps after which a path is abandoned and resampled.
    pub max_steps: usize,
    /// Attempts per path before giving up.
    pub retries: usize,
    pub parallel: bool,
}

impl SimConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        SimConfig { samples, seed, max_steps: 1_000_000, retries: 3, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub samples: u64,
    pub seed: u64,
    pub mean: f64,
    pub mad: f64,
    pub smad: f64,
    pub sv: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_mad: f64,
    pub se_smad: f64,
    pub se_sv: f64,
    pub se_variance: f64,
    /// Accumulated reward and number of paths ending with it.
    pub histogram: BTreeMap<Rational, u64>,
    /// Paths that needed more than one attempt.
    pub resampled: u64,
}

impl SimReport {
    /// Empirical probability of every observed value.
    pub fn frequencies(&self) -> Vec<(Rational, f64)> {
        let n = self.samples as f64;
        self.histogram.iter().map(|(v, c)| (v.clone(), *c as f64 / n)).collect()
    }

    fn from_histogram(samples: u64, seed: u64, histogram: BTreeMap<Rational, u64>, resampled: u64) -> Self {
        let mut r = SimReport {
            samples,
            seed,
            mean: 0.0,
            mad: 0.0,
            smad: 0.0,
            sv: 0.0,
            variance: 0.0,
            se_mean: 0.0,
            se_mad: 0.0,
            se_smad: 0.0,
            se_sv: 0.0,
            se_variance: 0.0,
            histogram,
            resampled,
        };
        if samples == 0 {
            return r;
        }
        let n = samples as f64;
        let pts: Vec<(f64, f64)> = r.histogram.iter().map(|(v, c)| (to_f64(v), *c as f64 / n)).collect();
        let mean: f64 = pts.iter().map(|(v, p)| v * p).sum();
        let avg = |g: &dyn Fn(f64) -> f64| -> f64 { pts.iter().map(|(v, p)| p * g(*v)).sum() };
        // Standard error from the influence function `h`, which adds to the
        // per-path statistic the first-order effect of estimating the mean.
        let se = |h: &dyn Fn(f64) -> f64| -> f64 {
            let m = avg(h);
            (avg(&|v| (h(v) - m).powi(2)) / n).sqrt()
        };
        let below = avg(&|v| if v < mean { 1.0 } else { 0.0 });
        let above = avg(&|v| if v > mean { 1.0 } else { 0.0 });
        r.mean = mean;
        r.mad = avg(&|v| (v - mean).abs());
        r.smad = avg(&|v| (mean - v).max(0.0));
        r.sv = avg(&|v| (mean - v).max(0.0).powi(2));
        r.variance = avg(&|v| (v - mean).powi(2));
        let smad = r.smad;
        r.se_mean = se(&|v| v);
        r.se_mad = se(&|v| (v - mean).abs() + (below - above) * (v - mean));
        r.se_smad = se(&|v| (mean - v).max(0.0) + below * (v - mean));
        r.se_sv = se(&|v| (mean - v).max(0.0).powi(2) + 2.0 * smad * (v - mean));
        r.se_variance = se(&|v| (v - mean).powi(2));
        r
    }
}

enum Sampler {
    Exact { cumulative: Vec<u64>, total: u64 },
    Float { cumulative: Vec<f64> },
}

impl Sampler {
    fn new<'a>(probs: impl Iterator<Item = &'a Rational> + Clone) -> Sampler {
        let mut l = num_bigint::BigInt::from(1);
        for p in probs.clone() {
            l = l.lcm(p.denom());
        }
        if let Some(total) = l.to_u64() {
            let lr = Rational::from_integer(l);
            let mut acc = 0u64;
            let cumulative = probs
                .map(|p| {
                    acc += (p * &lr).to_integer().to_u64().expect("probability at most one");
                    acc
                })
                .collect();
            return Sampler::Exact { cumulative, total };
        }
        let mut acc = 0.0;
        Sampler::Float {
            cumulative: probs
                .map(|p| {
                    acc += to_f64(p);
                    acc
                })
                .collect(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Sampler::Exact { cumulative, total } => {
                let u = rng.gen_range(0..*total);
                cumulative.iter().position(|c| u < *c).expect("probabilities sum to one")
            }
            Sampler::Float { cumulative } => {
                let u: f64 = rng.gen();
                cumulative.iter().position(|c| u < *c).unwrap_or(cumulative.len() - 1)
            }
        }
    }
}

/// Samples `cfg.samples` maximal paths of `m` under `sched`.
pub fn simulate(m: &Mdp, sched: &Scheduler, cfg: &SimConfig) -> Result<SimReport, OracleError> {
    let resolved = sched.resolve(m)?;
    // Successor samplers per (state, choice).
    let successors: Vec<Vec<Sampler>> = (0..m.num_states())
        .map(|s| m.choices(s).iter().map(|ch| Sampler::new(ch.successors.iter().map(|(_, p)| p))).collect())
        .collect();
    let path = |index: u64| -> Result<(Rational, bool), OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);
        for attempt in 0..cfg.retries.max(1) {
            let mut s = m.initial();
            let mut w = Rational::zero();
            let mut mode = resolved.initial_mode();
            let mut steps = 0;
            while !m.is_trap(s) && steps < cfg.max_steps {
                let dist = resolved.decide(m, s, &w, mode)?;
                let c = if dist.len() == 1 {
                    dist[0].0
                } else {
                    dist[Sampler::new(dist.iter().map(|(_, p)| p)).draw(&mut rng)].0
                };
                let ch = &m.choices(s)[c];
                let t = ch.successors[successors[s][c].draw(&mut rng)].0;
                mode = resolved.next_mode(m, s, c, t, mode)?;
                w += &ch.reward;
                s = t;
                steps += 1;
            }
            if m.is_trap(s) {
                return Ok((w, attempt > 0));
            }
        }
        Err(OracleError::StepCap { index, steps: cfg.max_steps, retries: cfg.retries.max(1) })
    };
    const BATCH: u64 = 8192;
    let batches = cfg.samples.div_ceil(BATCH);
    let run = |b: u64| -> Result<(BTreeMap<Rational, u64>, u64), OracleError> {
        let mut hist = BTreeMap::new();
        let mut resampled = 0;
        for i in b * BATCH..((b + 1) * BATCH).min(cfg.samples) {
            let (w, again) = path(i)?;
            *hist.entry(w).or_insert(0) += 1;
            resampled += again as u64;
        }
        Ok((hist, resampled))
    };
    let parts: Vec<Result<_, OracleError>> =
        if cfg.parallel { (0..batches).into_par_iter().map(run).collect() } else { (0..batches).map(run).collect() };
    let mut histogram = BTreeMap::new();
    let mut resampled = 0;
    for part in parts {
        let (h, r) = part?;
        for (v, c) in h {
            *histogram.entry(v).or_insert(0) += c;
        }
        resampled += r;
    }
    Ok(SimReport::from_histogram(cfg.samples, cfg.seed, histogram, resampled))
}

/// Total-variation distance between the empirical law and `exact`, counting
/// the tail mass of `exact` as disjoint from every observed value.
pub fn total_variation(report: &SimReport, exact: &RewardDistribution) -> f64 {
    let n = report.samples as f64;
    let mut sum = to_f64(exact.tail_mass());
    for (v, p) in exact.atoms() {
        let observed = report.histogram.get(v).map_or(0.0, |c| *c as f64 / n);
        sum += (observed - to_f64(p)).abs();
    }
    for (v, c) in &report.histogram {
        if !exact.atoms().contains_key(v) {
            sum += *c as f64 / n;
        }
    }
    sum / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{geometric_loop, mix, two_branch};
    use crate::rational::{int, one, ratio};

    #[test]
    fn two_branch_beta_mean() {
        let r = simulate(&two_branch(), &mix("s_init", &int(0)).into(), &SimConfig::new(200_000, 7)).unwrap();
        assert_eq!(r.samples, 200_000);
        assert!((r.mean - 1.25).abs() <= 4.0 * r.se_mean);
        let mass: f64 = r.frequencies().iter().map(|(_, p)| p).sum();
        assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn geometric_loop_alpha_mean() {
        let r =
            simulate(&geometric_loop(&ratio(1, 4)), &mix("s_dec", &one()).into(), &SimConfig::new(100_000, 3)).unwrap();
        assert!((r.mean - 0.75).abs() <= 4.0 * r.se_mean);
    }

    #[test]
    fn reproducible_and_order_independent() {
        let m = two_branch();
        let s: Scheduler = mix("s_init", &ratio(1, 3)).into();
        let mut cfg = SimConfig::new(20_000, 11);
        let a = simulate(&m, &s, &cfg).unwrap();
        cfg.parallel = false;
        let b = simulate(&m, &s, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 12;
        assert_ne!(simulate(&m, &s, &cfg).unwrap().histogram, a.histogram);
    }

    #[test]
    fn empty_run() {
        let r = simulate(&two_branch(), &mix("s_init", &int(0)).into(), &SimConfig::new(0, 1)).unwrap();
        assert!(r.histogram.is_empty());
        assert_eq!((r.mean, r.se_mean, r.samples), (0.0, 0.0, 0));
    }

    #[test]
    fn step_cap() {
        let mut cfg = SimConfig::new(10, 1);
        cfg.max_steps = 1;
        cfg.retries = 2;
        let err = simulate(&two_branch(), &mix("s_init", &int(0)).into(), &cfg).unwrap_err();
        assert!(matches!(err, OracleError::StepCap { retries: 2, .. }));
    }
}
