//! Position samplers: which offsets of the flat join to keep.
//!
//! The uniform problem is: given `n` positions and a probability `p`, keep
//! each position independently with probability `p`. The non-uniform problem,
//! where every root row carries its own probability, reduces to one uniform
//! problem per root row over that row's weight.

use std::fmt;
use std::ops::Deref;

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rustc_hash::FxHashSet;
use thiserror::Error;

/// The generator behind every seeded run.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `t` of a run seeded with `seed`.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    seed ^ splitmix64(t)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("probability {0} outside the allowed range")]
    Domain(f64),
    #[error("probability {value} of root row {row} is outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, value: f64 },
    #[error("{weights} weights but {probs} probabilities")]
    LengthMismatch { weights: usize, probs: usize },
    #[error("positions are not strictly increasing at index {0}")]
    NotIncreasing(usize),
}

/// Strictly increasing flat-output positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProbeSequence(Vec<u64>);

impl ProbeSequence {
    pub fn new(positions: Vec<u64>) -> Result<Self, SamplingError> {
        if let Some(i) = positions.windows(2).position(|w| w[0] >= w[1]) {
            return Err(SamplingError::NotIncreasing(i + 1));
        }
        Ok(ProbeSequence(positions))
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.0
    }
}

impl Deref for ProbeSequence {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.0
    }
}

fn check_p(p: f64) -> Result<(), SamplingError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SamplingError::Domain(p))
    }
}

/// Uniform draw from the open interval (0, 1).
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Failures before the first success of a Bernoulli(p) process.
pub fn draw_geom<R: RngCore + ?Sized>(p: f64, rng: &mut R) -> Result<u64, SamplingError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SamplingError::Domain(p));
    }
    Ok(geom_from_unit(p, open_unit(rng)))
}

/// `floor(ln u / ln(1 - p))`, saturating for huge gaps.
pub fn geom_from_unit(p: f64, u: f64) -> u64 {
    (u.ln() / (-p).ln_1p()).floor() as u64
}

/// Skip sampling: jump straight from one kept position to the next.
pub fn geo<R: RngCore + ?Sized>(p: f64, n: u64, rng: &mut R) -> Result<ProbeSequence, SamplingError> {
    geo_counted(p, n, rng).map(|(s, _)| s)
}

/// [`geo`] plus the number of geometric draws it made (`k + 1` for
/// `0 < p < 1`, 0 for the base cases).
pub fn geo_counted<R: RngCore + ?Sized>(p: f64, n: u64, rng: &mut R) -> Result<(ProbeSequence, u64), SamplingError> {
    check_p(p)?;
    if p == 0.0 || n == 0 {
        return Ok((ProbeSequence::default(), 0));
    }
    if p == 1.0 {
        return Ok((ProbeSequence((0..n).collect()), 0));
    }
    let mut out = Vec::with_capacity(expected_len(p, n));
    let mut draws = 1;
    let mut i = draw_geom(p, rng)?;
    while i < n {
        out.push(i);
        draws += 1;
        i = i.saturating_add(1).saturating_add(draw_geom(p, rng)?);
    }
    Ok((ProbeSequence(out), draws))
}

fn expected_len(p: f64, n: u64) -> usize {
    let mean = p * n as f64;
    (mean + 4.0 * mean.sqrt() + 4.0).min(n as f64) as usize
}

/// One Bernoulli trial per position.
pub fn naive<R: RngCore + ?Sized>(p: f64, n: u64, rng: &mut R) -> Result<ProbeSequence, SamplingError> {
    check_p(p)?;
    let mut out = Vec::with_capacity(expected_len(p, n));
    for i in 0..n {
        if rng.gen::<f64>() < p {
            out.push(i);
        }
    }
    Ok(ProbeSequence(out))
}

/// Draws the sample size, then a uniform subset of that size.
pub fn binom<R: RngCore + ?Sized>(p: f64, n: u64, rng: &mut R) -> Result<ProbeSequence, SamplingError> {
    check_p(p)?;
    let k = binomial(n, p, rng);
    Ok(ProbeSequence(subset(n, k, rng)))
}

/// Exact Binomial(n, p) sample.
pub fn binomial<R: RngCore + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - binomial(n, 1.0 - p, rng);
    }
    if n as f64 * p <= 30.0 {
        // Inversion: walk the pmf from k = 0.
        let q = 1.0 - p;
        let ratio = p / q;
        let mut f = q.powf(n as f64);
        let mut u: f64 = rng.gen();
        let mut k = 0;
        while u >= f && k < n {
            u -= f;
            k += 1;
            f *= ratio * (n - k + 1) as f64 / k as f64;
        }
        return k;
    }
    Binomial::new(n, p).expect("0 < p < 1").sample(rng)
}

/// Uniform `k`-subset of `0..n`, sorted.
fn subset<R: RngCore + ?Sized>(n: u64, k: u64, rng: &mut R) -> Vec<u64> {
    if k == n {
        return (0..n).collect();
    }
    if k.saturating_mul(4) > n {
        // Selection sampling emits in order and is linear in n, which is
        // cheaper here than hashing and sorting a large k.
        let mut out = Vec::with_capacity(k as usize);
        let mut needed = k;
        for i in 0..n {
            if needed == 0 {
                break;
            }
            if rng.gen_range(0..n - i) < needed {
                out.push(i);
                needed -= 1;
            }
        }
        return out;
    }
    // Floyd's algorithm.
    let mut chosen = FxHashSet::default();
    chosen.reserve(k as usize);
    for j in n - k..n {
        let t = rng.gen_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<u64> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Skip sampling for small `p`, one trial per position otherwise.
pub fn hybrid<R: RngCore + ?Sized>(p: f64, n: u64, threshold: f64, rng: &mut R) -> Result<ProbeSequence, SamplingError> {
    if p <= threshold {
        geo(p, n, rng)
    } else {
        naive(p, n, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UniformMethod {
    Naive,
    Geo,
    Binom,
    Hybrid { threshold: f64 },
}

impl UniformMethod {
    pub fn hybrid() -> Self {
        UniformMethod::Hybrid {
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, p: f64, n: u64, rng: &mut R) -> Result<ProbeSequence, SamplingError> {
        self.sample_counted(p, n, rng).map(|(s, _)| s)
    }

    /// Sample plus the number of geometric draws made.
    pub fn sample_counted<R: RngCore + ?Sized>(
        &self,
        p: f64,
        n: u64,
        rng: &mut R,
    ) -> Result<(ProbeSequence, u64), SamplingError> {
        match *self {
            UniformMethod::Naive => naive(p, n, rng).map(|s| (s, 0)),
            UniformMethod::Geo => geo_counted(p, n, rng),
            UniformMethod::Binom => binom(p, n, rng).map(|s| (s, 0)),
            UniformMethod::Hybrid { threshold } if p <= threshold => geo_counted(p, n, rng),
            UniformMethod::Hybrid { .. } => naive(p, n, rng).map(|s| (s, 0)),
        }
    }
}

impl fmt::Display for UniformMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UniformMethod::Naive => "naive",
            UniformMethod::Geo => "geo",
            UniformMethod::Binom => "binom",
            UniformMethod::Hybrid { .. } => "hybrid",
        })
    }
}

impl std::str::FromStr for UniformMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(UniformMethod::Naive),
            "geo" => Ok(UniformMethod::Geo),
            "binom" => Ok(UniformMethod::Binom),
            "hybrid" => Ok(UniformMethod::hybrid()),
            other => Err(format!("unknown sampling method `{other}`")),
        }
    }
}

/// Per-root-row probabilities: solve each row's uniform problem over its
/// weight and shift by the running offset.
pub fn per_tuple<R: RngCore + ?Sized>(
    weights: &[u64],
    probs: &[f64],
    method: UniformMethod,
    rng: &mut R,
) -> Result<ProbeSequence, SamplingError> {
    per_tuple_counted(weights, probs, method, rng).map(|(s, _)| s)
}

pub fn per_tuple_counted<R: RngCore + ?Sized>(
    weights: &[u64],
    probs: &[f64],
    method: UniformMethod,
    rng: &mut R,
) -> Result<(ProbeSequence, u64), SamplingError> {
    if weights.len() != probs.len() {
        return Err(SamplingError::LengthMismatch {
            weights: weights.len(),
            probs: probs.len(),
        });
    }
    if let Some(row) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(SamplingError::ProbabilityOutOfRange {
            row,
            value: probs[row],
        });
    }
    let mut out = Vec::new();
    let mut draws = 0;
    let mut offset = 0u64;
    for (&w, &p) in weights.iter().zip(probs) {
        let (local, d) = method.sample_counted(p, w, rng)?;
        out.extend(local.iter().map(|&i| offset + i));
        draws += d;
        offset += w;
    }
    Ok((ProbeSequence(out), draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    const METHODS: [UniformMethod; 4] = [
        UniformMethod::Naive,
        UniformMethod::Geo,
        UniformMethod::Binom,
        UniformMethod::Hybrid { threshold: 0.5 },
    ];

    #[test]
    fn geom_formula() {
        // floor(ln 0.3 / ln 0.5) = floor(1.737) = 1
        assert_eq!(geom_from_unit(0.5, 0.3), 1);
        assert_eq!(geom_from_unit(0.5, 0.5), 1);
        assert_eq!(geom_from_unit(0.5, 0.51), 0);
        assert_eq!(geom_from_unit(1e-300, 1e-300), u64::MAX);
        let mut rng = rng_from_seed(1);
        assert!(draw_geom(0.0, &mut rng).is_err());
        assert!(draw_geom(1.0, &mut rng).is_err());
    }

    #[test]
    fn geom_mean() {
        let mut rng = rng_from_seed(42);
        let p = 0.25;
        let draws = 1_000_000;
        let sum: f64 = (0..draws).map(|_| draw_geom(p, &mut rng).unwrap() as f64).sum();
        let mean = sum / draws as f64;
        let sd = ((1.0 - p) / (p * p) / draws as f64).sqrt();
        assert!((mean - 3.0).abs() <= 5.0 * sd, "mean {mean}");
    }

    #[test]
    fn base_cases() {
        let mut rng = rng_from_seed(3);
        for m in METHODS {
            assert!(m.sample(0.0, 10, &mut rng).unwrap().is_empty(), "{m}");
            assert_eq!(&*m.sample(1.0, 5, &mut rng).unwrap(), &[0, 1, 2, 3, 4], "{m}");
            assert!(m.sample(0.4, 0, &mut rng).unwrap().is_empty(), "{m}");
            assert!(m.sample(1.5, 5, &mut rng).is_err(), "{m}");
            assert!(m.sample(-0.1, 5, &mut rng).is_err(), "{m}");
        }
    }

    #[test]
    fn inclusion_frequencies() {
        let (p, n, trials) = (0.3, 25u64, 20_000);
        let tol = 5.0 * (p * (1.0 - p) / trials as f64).sqrt();
        let joint_tol = 5.0 * (p * p * (1.0 - p * p) / trials as f64).sqrt();
        for m in METHODS {
            let mut rng = rng_from_seed(7);
            let mut hits = vec![0u32; n as usize];
            let mut joint = 0u32;
            for _ in 0..trials {
                let s = m.sample(p, n, &mut rng).unwrap();
                assert!(s.windows(2).all(|w| w[0] < w[1]));
                for &i in s.iter() {
                    hits[i as usize] += 1;
                }
                if s.contains(&3) && s.contains(&17) {
                    joint += 1;
                }
            }
            for (i, &h) in hits.iter().enumerate() {
                let f = h as f64 / trials as f64;
                assert!((f - p).abs() <= tol, "{m} position {i}: {f}");
            }
            let f = joint as f64 / trials as f64;
            assert!((f - p * p).abs() <= joint_tol, "{m} joint {f}");
        }
    }

    #[test]
    fn binom_mean_size() {
        let mut rng = rng_from_seed(11);
        let (p, n, runs) = (0.2, 50u64, 100_000);
        let total: u64 = (0..runs).map(|_| binom(p, n, &mut rng).unwrap().len() as u64).sum();
        let mean = total as f64 / runs as f64;
        let sd = (n as f64 * p * (1.0 - p) / runs as f64).sqrt();
        assert!((mean - 10.0).abs() <= 5.0 * sd, "mean {mean}");
    }

    #[test]
    fn binomial_large_case_uses_exact_sampler() {
        let mut rng = rng_from_seed(5);
        let (n, p, runs) = (10_000u64, 0.3, 20_000);
        let total: u64 = (0..runs).map(|_| binomial(n, p, &mut rng)).sum();
        let mean = total as f64 / runs as f64;
        let sd = (n as f64 * p * (1.0 - p) / runs as f64).sqrt();
        assert!((mean - 3000.0).abs() <= 5.0 * sd, "mean {mean}");
        assert!(binomial(1_000, 0.999, &mut rng) <= 1_000);
    }

    #[test]
    fn subsets_are_uniform_sets() {
        let mut rng = rng_from_seed(9);
        for (n, k) in [(100, 3), (100, 60), (10, 10), (7, 0)] {
            let s = subset(n, k, &mut rng);
            assert_eq!(s.len() as u64, k);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn geo_draw_count_is_k_plus_one() {
        let mut rng = rng_from_seed(13);
        for p in [0.01, 0.2, 0.5, 0.9] {
            for _ in 0..200 {
                let (s, draws) = geo_counted(p, 300, &mut rng).unwrap();
                assert_eq!(draws, s.len() as u64 + 1);
            }
        }
    }

    #[test]
    fn hybrid_dispatch() {
        let m = UniformMethod::hybrid();
        let mut a = rng_from_seed(1);
        let mut b = rng_from_seed(1);
        assert_eq!(m.sample(0.5, 100, &mut a).unwrap(), geo(0.5, 100, &mut b).unwrap());
        let mut a = rng_from_seed(2);
        let mut b = rng_from_seed(2);
        assert_eq!(m.sample(0.51, 100, &mut a).unwrap(), naive(0.51, 100, &mut b).unwrap());
    }

    #[test]
    fn per_tuple_examples() {
        let w = [6, 9, 4, 6];
        let mut rng = rng_from_seed(0);
        for m in METHODS {
            let all = per_tuple(&w, &[1.0; 4], m, &mut rng).unwrap();
            assert_eq!(all.into_vec(), (0..25).collect::<Vec<_>>());
            assert!(per_tuple(&w, &[0.0; 4], m, &mut rng).unwrap().is_empty());
            let mixed = per_tuple(&w, &[1.0, 0.0, 0.0, 1.0], m, &mut rng).unwrap();
            let expected: Vec<u64> = (0..6).chain(19..25).collect();
            assert_eq!(mixed.into_vec(), expected);
        }
        assert_eq!(
            per_tuple(&w, &[0.5, 1.2, 0.0, 1.0], UniformMethod::Geo, &mut rng),
            Err(SamplingError::ProbabilityOutOfRange { row: 1, value: 1.2 })
        );
        assert!(per_tuple(&w, &[f64::NAN, 0.0, 0.0, 0.0], UniformMethod::Geo, &mut rng).is_err());
        assert!(matches!(
            per_tuple(&w, &[0.5], UniformMethod::Geo, &mut rng),
            Err(SamplingError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn seeds_reproduce() {
        let a = geo(0.1, 1000, &mut rng_from_seed(trial_seed(5, 3))).unwrap();
        let b = geo(0.1, 1000, &mut rng_from_seed(trial_seed(5, 3))).unwrap();
        assert_eq!(a, b);
        assert_ne!(trial_seed(5, 3), trial_seed(5, 4));
        assert!(ProbeSequence::new(vec![1, 1]).is_err());
    }
}
