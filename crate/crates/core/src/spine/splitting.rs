//! Fixed-effort multilevel splitting for first passages of `S` above a level
//! before a drawdown (and optionally a floor) kills the path.
//!
//! The path state is `(S, S̄)`. Levels `a, 2a, ..., r` are crossed in order;
//! at each stage `N` particles are launched from states resampled uniformly
//! among the previous stage's survivors. The product of the stage survival
//! fractions is unbiased for the passage probability. Independent groups give
//! the standard error.

use rand::Rng;

use super::SpineLaw;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Default number of independent groups.
pub const DEFAULT_GROUPS: usize = 10;
/// Fewest particles per stage and group.
pub const MIN_PARTICLES: usize = 32;
/// Steps allowed to one particle within one stage.
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitProblem {
    pub law: SpineLaw,
    /// Passage level `r` (reached at some `k > 0` with `S_k ≥ r`).
    pub target: f64,
    pub stage_width: f64,
    /// Kill once `S̄_k − S_k ≥ max_drawdown`.
    pub max_drawdown: f64,
    /// Kill once `S_k < floor`.
    pub floor: Option<f64>,
    /// Survivors are weighted by `e^{−θ S_τ}`.
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplittingConfig {
    pub groups: usize,
    pub particles: usize,
    pub step_cap: u64,
}

impl SplittingConfig {
    /// Spreads a launch budget over `groups × stages`.
    pub fn from_budget(launches: u64, stages: usize) -> Self {
        let per = launches / (DEFAULT_GROUPS as u64 * stages.max(1) as u64);
        SplittingConfig {
            groups: DEFAULT_GROUPS,
            particles: (per as usize).max(MIN_PARTICLES),
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    /// `ln` of each group's estimate (`−∞` after extinction).
    pub log_estimates: Vec<f64>,
    pub launches: u64,
    pub steps: u64,
}

impl SplitProblem {
    pub fn levels(&self) -> Vec<f64> {
        if self.target <= 0.0 {
            return vec![self.target];
        }
        let count = (self.target / self.stage_width).ceil().max(1.0) as usize;
        (1..=count)
            .map(|i| (i as f64 * self.stage_width).min(self.target))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.target.is_finite()
            && self.stage_width > 0.0
            && self.max_drawdown > 0.0
            && self.theta.is_finite()
            && self.floor.is_none_or(|f| !f.is_nan());
        if !ok {
            return Err(Error::InvalidParams(format!("invalid splitting problem {self:?}")));
        }
        if self.target / self.stage_width > 1e6 {
            return Err(Error::InvalidParams(format!(
                "{} splitting stages",
                self.target / self.stage_width
            )));
        }
        Ok(())
    }
}

enum Fate {
    Pass(f64, f64),
    Killed,
}

fn run_group(
    problem: &SplitProblem,
    config: &SplittingConfig,
    levels: &[f64],
    rng: &mut impl Rng,
    steps: &mut u64,
) -> Result<f64> {
    let sampler = problem.law.sampler();
    let floor = problem.floor.unwrap_or(f64::NEG_INFINITY);
    let mut states = vec![(0.0_f64, 0.0_f64)];
    let mut log_p = 0.0;
    for (stage, &level) in levels.iter().enumerate() {
        let mut next = Vec::with_capacity(config.particles);
        for _ in 0..config.particles {
            let (mut s, mut top) = states[rng.random_range(0..states.len())];
            let fate = if stage > 0 && s >= level {
                Fate::Pass(s, top)
            } else {
                let mut taken = 0u64;
                loop {
                    if taken == config.step_cap {
                        return Err(Error::StepBudgetExceeded(config.step_cap));
                    }
                    s += sampler.sample(rng);
                    taken += 1;
                    *steps += 1;
                    if s >= level {
                        top = top.max(s);
                        break Fate::Pass(s, top);
                    }
                    top = top.max(s);
                    if top - s >= problem.max_drawdown || s < floor {
                        break Fate::Killed;
                    }
                }
            };
            if let Fate::Pass(s, top) = fate {
                next.push((s, top));
            }
        }
        if next.is_empty() {
            return Ok(f64::NEG_INFINITY);
        }
        log_p += (next.len() as f64 / config.particles as f64).ln();
        states = next;
    }
    let weight = if problem.theta == 0.0 {
        0.0
    } else {
        // mean of e^{−θ S} computed relative to the target to avoid underflow
        let mean: f64 = states
            .iter()
            .map(|&(s, _)| (-problem.theta * (s - problem.target)).exp())
            .sum::<f64>()
            / states.len() as f64;
        mean.ln() - problem.theta * problem.target
    };
    Ok(log_p + weight)
}

/// Runs `config.groups` independent groups, group `g` drawing from stream
/// `first_stream + g`.
pub fn split_first_passage(
    problem: &SplitProblem,
    config: &SplittingConfig,
    seed: u64,
    first_stream: u64,
) -> Result<SplitOutcome> {
    problem.validate()?;
    if config.groups == 0 || config.particles == 0 {
        return Err(Error::InvalidParams("splitting needs groups and particles".into()));
    }
    let levels = problem.levels();
    let run = |g: usize| -> Result<(f64, u64)> {
        let mut rng = stream(seed, Purpose::Splitting, first_stream + g as u64);
        let mut steps = 0;
        let v = run_group(problem, config, &levels, &mut rng, &mut steps)?;
        Ok((v, steps))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(f64, u64)>> = {
        use rayon::prelude::*;
        (0..config.groups).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(f64, u64)>> = (0..config.groups).map(run).collect();
    let mut log_estimates = Vec::with_capacity(config.groups);
    let mut steps = 0;
    for r in results {
        let (v, s) = r?;
        log_estimates.push(v);
        steps += s;
    }
    Ok(SplitOutcome {
        log_estimates,
        launches: (config.groups * config.particles * levels.len()) as u64,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> SpineLaw {
        SpineLaw::TwoPoint { up: 1.0, down: -1.0, prob_up: 0.5 }
    }

    #[test]
    fn levels_end_at_target() {
        let p = SplitProblem {
            law: symmetric(),
            target: 10.0,
            stage_width: 3.0,
            max_drawdown: 5.0,
            floor: None,
            theta: 0.0,
        };
        assert_eq!(p.levels(), vec![3.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn simple_walk_gambler_ruin() {
        // ±1 walk, drawdown 2 kills. From a maximum the next maximum comes
        // first w.p. p = 1/2 + p/4, so p = 2/3 and six of them are needed.
        let p = SplitProblem {
            law: symmetric(),
            target: 6.0,
            stage_width: 2.0,
            max_drawdown: 2.0,
            floor: None,
            theta: 0.0,
        };
        let config = SplittingConfig { groups: 10, particles: 20_000, step_cap: 1000 };
        let out = split_first_passage(&p, &config, 11, 0).unwrap();
        let vals: Vec<f64> = out.log_estimates.iter().map(|l| l.exp()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
        let exact = (2.0f64 / 3.0).powi(6);
        assert!((mean - exact).abs() < 4.0 * sd / 10f64.sqrt() + 1e-4, "{mean} vs {exact}");
    }

    #[test]
    fn floor_kills() {
        // with floor just below 0 the ±1 walk must step up first and then
        // never return below 0 before reaching 3
        let p = SplitProblem {
            law: symmetric(),
            target: 3.0,
            stage_width: 1.0,
            max_drawdown: 100.0,
            floor: Some(-0.5),
            theta: 0.0,
        };
        let config = SplittingConfig { groups: 10, particles: 20_000, step_cap: 1000 };
        let out = split_first_passage(&p, &config, 4, 0).unwrap();
        let mean = out.log_estimates.iter().map(|l| l.exp()).sum::<f64>() / 10.0;
        // gambler's ruin from 0 on {−1, ..., 3}: 1/4
        assert!((mean - 0.25).abs() < 0.01, "{mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = SplitProblem {
            law: symmetric(),
            target: 8.0,
            stage_width: 2.0,
            max_drawdown: 3.0,
            floor: None,
            theta: 0.1,
        };
        let c = SplittingConfig { groups: 4, particles: 200, step_cap: 1000 };
        assert_eq!(
            split_first_passage(&p, &c, 1, 0).unwrap(),
            split_first_passage(&p, &c, 1, 0).unwrap()
        );
    }
}
