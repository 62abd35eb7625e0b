//! The many-to-one walk.
//!
//! At `t = 1` the identity reads
//! `E[Σ_{|x|=k} e^{-V(x)} F(V(x_1), ..., V(x))] = e^{kψ(1)} E[F(S_1, ..., S_k)]`
//! where `S` is a random walk whose step law has density proportional to
//! `E[ν] e^{-x}` against the child displacement law. In the boundary case
//! `ψ(1) = 0` and the walk is centred.

mod drawdown;
mod splitting;

pub use drawdown::{
    barrier_passage_prob, downfall_max_laplace, laplace_tau_barrier, DownfallConfig,
    DrawdownEstimate,
};
pub use splitting::{split_first_passage, SplitOutcome, SplitProblem, SplittingConfig};

/// The step law of the many-to-one walk.
pub type TiltedLaw = SpineLaw;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentParams, IncrementLaw};
use crate::range::{evaluate_f_path, FSpec};
use crate::rng::{stream, Purpose};
use crate::stats::{Accumulator, Estimate};
use crate::{Error, Result};

/// Step law of a one-dimensional walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpineLaw {
    Gaussian { mean: f64, variance: f64 },
    TwoPoint { up: f64, down: f64, prob_up: f64 },
}

impl SpineLaw {
    /// The `e^{-x}`-tilted displacement law (normalised by `e^{ψ(1)}`).
    pub fn tilted(params: &EnvironmentParams) -> Self {
        match params.increment {
            IncrementLaw::Gaussian { mean, variance } => SpineLaw::Gaussian {
                mean: mean - variance,
                variance,
            },
            IncrementLaw::TwoPoint {
                value_up,
                value_down,
                prob_up,
            } => {
                let wu = prob_up * (-value_up).exp();
                let wd = (1.0 - prob_up) * (-value_down).exp();
                SpineLaw::TwoPoint {
                    up: value_up,
                    down: value_down,
                    prob_up: wu / (wu + wd),
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SpineLaw::Gaussian { mean, .. } => mean,
            SpineLaw::TwoPoint { up, down, prob_up } => prob_up * up + (1.0 - prob_up) * down,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            SpineLaw::Gaussian { variance, .. } => variance,
            SpineLaw::TwoPoint { up, down, prob_up } => {
                prob_up * (1.0 - prob_up) * (up - down) * (up - down)
            }
        }
    }

    /// `Λ(θ) = log E[e^{θX}]`.
    pub fn log_mgf(&self, theta: f64) -> f64 {
        match *self {
            SpineLaw::Gaussian { mean, variance } => theta * mean + 0.5 * theta * theta * variance,
            SpineLaw::TwoPoint { up, down, prob_up } => {
                let a = prob_up.ln() + theta * up;
                let b = (1.0 - prob_up).ln() + theta * down;
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
        }
    }

    /// Law with density `e^{θx − Λ(θ)}` against this one.
    pub fn exp_tilt(&self, theta: f64) -> Self {
        match *self {
            SpineLaw::Gaussian { mean, variance } => SpineLaw::Gaussian {
                mean: mean + theta * variance,
                variance,
            },
            SpineLaw::TwoPoint { up, down, prob_up } => {
                let a = prob_up * (theta * (up - down)).exp();
                SpineLaw::TwoPoint {
                    up,
                    down,
                    prob_up: a / (a + 1.0 - prob_up),
                }
            }
        }
    }

    /// The `θ ≥ 0` with `Λ(θ) = λ`, for a centred law.
    pub fn tilt_for(&self, lambda: f64) -> Result<f64> {
        if lambda < 0.0 {
            return Err(Error::InvalidParams(format!("tilt target must be ≥ 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if let SpineLaw::Gaussian { mean, variance } = *self {
            // θμ + θ²σ²/2 = λ
            return Ok((-mean + (mean * mean + 2.0 * variance * lambda).sqrt()) / variance);
        }
        let mut hi = 1.0;
        while self.log_mgf(hi) < lambda {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NoSolution(format!("no tilt reaches Λ = {lambda}")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.log_mgf(mid) < lambda {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn sampler(&self) -> StepSampler {
        match *self {
            SpineLaw::Gaussian { mean, variance } => {
                StepSampler::Gaussian(Normal::new(mean, variance.sqrt()).expect("positive variance"))
            }
            SpineLaw::TwoPoint { up, down, prob_up } => StepSampler::TwoPoint { up, down, prob_up },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum StepSampler {
    Gaussian(Normal<f64>),
    TwoPoint { up: f64, down: f64, prob_up: f64 },
}

impl StepSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            StepSampler::Gaussian(n) => n.sample(rng),
            StepSampler::TwoPoint { up, down, prob_up } => {
                if rng.random::<f64>() < prob_up {
                    up
                } else {
                    down
                }
            }
        }
    }
}

/// One sampled line `S_1, ..., S_K` with `H^S_j` and `Σ_{i≤j} H^S_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpinePath {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
    pub cum_h: Vec<f64>,
}

impl SpinePath {
    pub fn with_capacity(k: usize) -> Self {
        SpinePath {
            s: Vec::with_capacity(k),
            h: Vec::with_capacity(k),
            cum_h: Vec::with_capacity(k),
        }
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.h.clear();
        self.cum_h.clear();
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Appends `S_{k+1} = S_k + x` and updates `H^S` by
    /// `H_{k+1} = 1 + e^{S_k − S_{k+1}} H_k`.
    pub fn push(&mut self, x: f64) {
        let (prev_s, prev_h, prev_cum) = match self.s.len() {
            0 => (0.0, 0.0, 0.0),
            k => (self.s[k - 1], self.h[k - 1], self.cum_h[k - 1]),
        };
        let s = prev_s + x;
        let h = 1.0 + (prev_s - s).exp() * prev_h;
        self.s.push(s);
        self.h.push(h);
        self.cum_h.push(prev_cum + h);
    }

    pub fn sample<R: Rng + ?Sized>(law: &SpineLaw, k: usize, rng: &mut R) -> Self {
        let sampler = law.sampler();
        let mut p = SpinePath::with_capacity(k);
        for _ in 0..k {
            p.push(sampler.sample(rng));
        }
        p
    }

    /// `max_j (S̄_j − S_j)`.
    pub fn max_downfall(&self) -> f64 {
        let mut top = 0.0_f64;
        let mut worst = 0.0_f64;
        for &s in &self.s {
            top = top.max(s);
            worst = worst.max(top - s);
        }
        worst
    }
}

/// Parameters of a Ψ sum `Σ_{k=1}^{K} Ψ^k_{λ,λ'}(f^{n,k})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiQuery {
    pub f: FSpec,
    /// Upper bound on every `H_j` along the line.
    pub lambda: f64,
    /// Strict lower bound on `H_k` at the endpoint; `None` means `n^b`.
    pub lambda_prime: Option<f64>,
    pub n: f64,
    pub b: f64,
    /// Largest generation `K`; `None` means `⌈10 (ln n)³⌉`.
    pub max_gen: Option<usize>,
}

impl PsiQuery {
    pub fn lambda_prime(&self) -> f64 {
        self.lambda_prime.unwrap_or_else(|| self.n.powf(self.b))
    }

    pub fn max_gen(&self) -> usize {
        self.max_gen
            .unwrap_or_else(|| (10.0 * self.n.ln().powi(3)).ceil().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        if !(self.n > 1.0) || self.lambda.is_nan() || self.lambda_prime().is_nan() {
            return Err(Error::InvalidParams(format!("invalid Ψ query {self:?}")));
        }
        Ok(())
    }

    /// `Σ_k f(S_1..S_k) 1{max_{j≤k} H_j ≤ λ, H_k > λ'}` along one line,
    /// stopping once the line leaves the regular set.
    pub fn line_value(&self, path: &SpinePath) -> f64 {
        let lp = self.lambda_prime();
        let mut total = 0.0;
        for k in 0..path.len() {
            if path.h[k] > self.lambda {
                break;
            }
            if path.h[k] > lp {
                total += evaluate_f_path(&self.f, &path.s[..=k], &path.cum_h[..=k], self.n);
            }
        }
        total
    }
}

/// Paths per deterministic chunk; chunk `i` draws from stream `i`.
const CHUNK: u64 = 4096;

fn chunked<F>(samples: u64, seed: u64, purpose: Purpose, per_chunk: F) -> Accumulator
where
    F: Fn(&mut crate::rng::StreamRng, u64) -> Accumulator + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let run = |c: u64| {
        let mut rng = stream(seed, purpose, c);
        let size = CHUNK.min(samples - c * CHUNK);
        per_chunk(&mut rng, size)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Accumulator> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Accumulator> = (0..chunks).map(run).collect();
    parts.iter().fold(Accumulator::new(), |acc, p| acc.merge(p))
}

/// Monte Carlo estimate of `Σ_{k=1}^{K} Ψ^k_{λ,λ'}(f^{n,k})` on the spine.
pub fn estimate_psi_sum(law: &SpineLaw, query: &PsiQuery, samples: u64, seed: u64) -> Result<Estimate> {
    query.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let k_max = query.max_gen();
    let sampler = law.sampler();
    let acc = chunked(samples, seed, Purpose::Spine, |rng, size| {
        let mut acc = Accumulator::new();
        let mut path = SpinePath::with_capacity(k_max);
        for _ in 0..size {
            path.clear();
            for _ in 0..k_max {
                path.push(sampler.sample(rng));
                if path.h[path.len() - 1] > query.lambda {
                    break;
                }
            }
            acc.push(query.line_value(&path));
        }
        acc
    });
    Ok(Estimate::from_accumulator(&acc, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{LawFamily, OffspringLaw};
    use rand::SeedableRng;
    use std::f64::consts::LN_2;

    fn gaussian() -> SpineLaw {
        SpineLaw::tilted(&EnvironmentParams::default_boundary())
    }

    #[test]
    fn default_tilt_is_centred_gaussian() {
        assert_eq!(
            gaussian(),
            SpineLaw::Gaussian {
                mean: 0.0,
                variance: 2.0 * LN_2
            }
        );
    }

    #[test]
    fn two_point_tilt_is_centred() {
        let params = EnvironmentParams::calibrated(
            &LawFamily::TwoPoint { gap: 1.7, prob_up: None },
            OffspringLaw::default(),
        )
        .unwrap();
        let law = SpineLaw::tilted(&params);
        assert!(law.mean().abs() < 1e-10);
        assert!((law.variance() - params.sigma2).abs() < 1e-10);
    }

    #[test]
    fn tilt_solves_log_mgf() {
        let g = gaussian();
        let t = g.tilt_for(0.01).unwrap();
        assert!((g.log_mgf(t) - 0.01).abs() < 1e-15);
        let tp = SpineLaw::TwoPoint { up: 1.0, down: -1.0, prob_up: 0.5 };
        let t = tp.tilt_for(0.01).unwrap();
        assert!((tp.log_mgf(t) - 0.01).abs() < 1e-12);
        let shifted = tp.exp_tilt(t);
        // derivative of Λ at θ is the tilted mean
        let h = 1e-6;
        let deriv = (tp.log_mgf(t + h) - tp.log_mgf(t - h)) / (2.0 * h);
        assert!((shifted.mean() - deriv).abs() < 1e-8);
    }

    #[test]
    fn h_recursion_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let path = SpinePath::sample(&gaussian(), 200, &mut rng);
            for j in 0..path.len() {
                let direct: f64 = (0..=j).map(|i| (path.s[i] - path.s[j]).exp()).sum();
                assert!((path.h[j] - direct).abs() <= 1e-9 * direct);
                // H_j ≥ e^{S̄_j − S_j} ≥ H_j / j
                let top = path.s[..=j].iter().cloned().fold(f64::MIN, f64::max);
                let drop = (top - path.s[j]).exp();
                assert!(path.h[j] >= drop * (1.0 - 1e-12));
                assert!(drop >= path.h[j] / (j + 1) as f64 * (1.0 - 1e-12));
            }
            assert_eq!(path.h[0], 1.0);
        }
    }

    #[test]
    fn unconstrained_constant_sum_is_exact() {
        for k in [1, 7, 30] {
            let q = PsiQuery {
                f: FSpec::Constant,
                lambda: f64::INFINITY,
                lambda_prime: Some(0.0),
                n: 100.0,
                b: 0.0,
                max_gen: Some(k),
            };
            let e = estimate_psi_sum(&gaussian(), &q, 5000, 1).unwrap();
            assert_eq!(e.mean, k as f64);
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn regular_line_sum_is_below_generation_bound() {
        let n = 16f64.exp();
        let q = PsiQuery {
            f: FSpec::Constant,
            lambda: n,
            lambda_prime: Some(1.0),
            n,
            b: 0.0,
            max_gen: None,
        };
        let e = estimate_psi_sum(&gaussian(), &q, 2000, 2).unwrap();
        assert!(e.mean - 4.0 * e.std_error <= 4096.0, "{e:?}");
    }

    #[test]
    fn estimates_are_reproducible() {
        let q = PsiQuery {
            f: FSpec::LastAbove { alpha: 1.2 },
            lambda: 1e3,
            lambda_prime: Some(1.0),
            n: 1e3,
            b: 0.0,
            max_gen: Some(50),
        };
        let a = estimate_psi_sum(&gaussian(), &q, 10_000, 5).unwrap();
        let b = estimate_psi_sum(&gaussian(), &q, 10_000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tilted_gaussian_moments() {
        let law = gaussian();
        let acc = chunked(1_000_000, 9, Purpose::Spine, |rng, size| {
            let s = law.sampler();
            (0..size).map(|_| s.sample(rng)).collect()
        });
        let var_se = (2.0 * (2.0 * LN_2).powi(2) / acc.count as f64).sqrt();
        assert!(acc.mean.abs() <= 4.0 * acc.std_error());
        assert!((acc.variance() - 2.0 * LN_2).abs() <= 4.0 * var_se);
    }
}
