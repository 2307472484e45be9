use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PlantConfig, Region, ScenarioConfig};
use super::trajectory::{BoxStats, Metrics};
use super::{run_in_world, RunOptions};
use crate::error::{Error, Result};
use crate::world::{DynamicObstacle, World};

/// Length of every Monte Carlo trial in seconds.
pub const TRIAL_DURATION: f64 = 20.0;

const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    /// Collision free and settled at the goal.
    Success,
    Collided,
    /// Collision free but not settled by the end of the trial.
    TimedOut,
    AssumptionViolation,
    Precondition,
    Error,
}

impl TrialOutcome {
    pub fn is_safe(self) -> bool {
        matches!(self, TrialOutcome::Success | TrialOutcome::TimedOut)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcome: TrialOutcome,
    pub metrics: Option<Metrics>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub success: usize,
    pub collided: usize,
    pub timed_out: usize,
    pub assumption_violation: usize,
    pub precondition: usize,
    pub error: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub n_obstacles: usize,
    pub trials: usize,
    pub percent_safe: f64,
    pub percent_successful: f64,
    pub counts: OutcomeCounts,
    /// Distributions over successful trials.
    pub min_psi0: Option<BoxStats>,
    pub settling_time_s: Option<BoxStats>,
    pub rms_u: Vec<Option<BoxStats>>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

fn sample_in<R: Rng>(rng: &mut R, r: &Region) -> Vec<f64> {
    r.min
        .iter()
        .zip(&r.max)
        .map(|(&a, &b)| if b > a { rng.random_range(a..b) } else { a })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn point(v: &[f64]) -> Vector3<f64> {
    let mut p = Vector3::zeros();
    p.as_mut_slice()[..v.len()].copy_from_slice(v);
    p
}

/// Draws trial `trial` of the study: start, goal, then `n_obstacles` moving
/// obstacles in that order, so that trials with more obstacles extend those
/// with fewer. Moving obstacles already in `base` are dropped.
pub fn random_trial(
    cfg: &ScenarioConfig,
    base: &World,
    n_obstacles: usize,
    seed: u64,
    trial: usize,
) -> Result<(ScenarioConfig, World)> {
    let mc = cfg
        .montecarlo
        .as_ref()
        .ok_or_else(|| Error::config("scenario has no [montecarlo] section"))?;
    let gains = match &cfg.plant {
        PlantConfig::Unicycle { gains, .. } => *gains,
        PlantConfig::Quadrotor { .. } => {
            return Err(Error::config("the Monte Carlo study supports the unicycle plant only"))
        }
    };
    let speed_bound = cfg
        .barrier
        .speed_bound
        .ok_or_else(|| Error::config("montecarlo requires barrier.speed_bound"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);

    let mut tries = 0;
    let mut reject = || {
        tries += 1;
        if tries > MAX_REJECTIONS {
            Err(Error::config("montecarlo regions leave no admissible sample"))
        } else {
            Ok(())
        }
    };
    let start = loop {
        reject()?;
        let s = sample_in(&mut rng, &mc.start_region);
        if base.min_clearance(0.0, &point(&s)) >= mc.start_clearance {
            break s;
        }
    };
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let goal = loop {
        reject()?;
        let g = sample_in(&mut rng, &mc.goal_region);
        if dist(&g, &start) >= mc.min_goal_distance && base.min_clearance(0.0, &point(&g)) > 0.0 {
            break g;
        }
    };

    let mut world = base.static_only();
    for _ in 0..n_obstacles {
        let radius = rng.random_range(mc.obstacle_radius[0]..=mc.obstacle_radius[1]);
        let speed = speed_bound * (1.0 - rng.random::<f64>());
        let first = loop {
            reject()?;
            let p = sample_in(&mut rng, &mc.obstacle_region);
            if dist(&p, &start) - radius >= mc.start_clearance {
                break p;
            }
        };
        let mut waypoints = vec![first];
        for _ in 1..mc.waypoints {
            waypoints.push(sample_in(&mut rng, &mc.obstacle_region));
        }
        world.add_dynamic(&DynamicObstacle {
            radius,
            waypoints,
            speed,
        })?;
    }

    let mut trial_cfg = cfg.clone();
    trial_cfg.duration = TRIAL_DURATION;
    trial_cfg.plant = PlantConfig::Unicycle {
        x0: [start[0], start[1], 0.0, heading],
        goal: [goal[0], goal[1]],
        gains,
    };
    Ok((trial_cfg, world))
}

fn run_trial(cfg: &ScenarioConfig, base: &World, n_obstacles: usize, seed: u64, trial: usize) -> TrialRecord {
    let outcome = random_trial(cfg, base, n_obstacles, seed, trial)
        .and_then(|(c, w)| run_in_world(&c, &w, &RunOptions::default()));
    match outcome {
        Ok(out) => {
            let m = out.metrics;
            let outcome = if m.collided {
                TrialOutcome::Collided
            } else if m.reached {
                TrialOutcome::Success
            } else {
                TrialOutcome::TimedOut
            };
            TrialRecord {
                trial,
                outcome,
                metrics: Some(m),
                message: None,
            }
        }
        Err(e) => {
            let outcome = match e {
                Error::Precondition { .. } => TrialOutcome::Precondition,
                Error::AssumptionViolation(_) => TrialOutcome::AssumptionViolation,
                _ => TrialOutcome::Error,
            };
            log::debug!("trial {trial}: {e}");
            TrialRecord {
                trial,
                outcome,
                metrics: None,
                message: Some(e.to_string()),
            }
        }
    }
}

/// Runs `trials` randomized trials with `n_obstacles` moving obstacles added
/// to `base`. Trial `i` draws from stream `i` of a generator seeded with
/// `seed`, so results do not depend on `jobs`.
pub fn monte_carlo(
    cfg: &ScenarioConfig,
    base: &World,
    n_obstacles: usize,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<MonteCarloResult> {
    if trials < 1 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if jobs < 1 {
        return Err(Error::invalid("jobs must be at least 1"));
    }
    cfg.validate()?;
    // Surface configuration problems once instead of per trial.
    random_trial(cfg, base, n_obstacles, seed, 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| run_trial(cfg, base, n_obstacles, seed, i))
            .collect()
    });
    Ok(summarize(n_obstacles, records, cfg.plant.design_model().input_dim()))
}

fn summarize(n_obstacles: usize, records: Vec<TrialRecord>, input_dim: usize) -> MonteCarloResult {
    let trials = records.len();
    let count = |o: TrialOutcome| records.iter().filter(|r| r.outcome == o).count();
    let counts = OutcomeCounts {
        success: count(TrialOutcome::Success),
        collided: count(TrialOutcome::Collided),
        timed_out: count(TrialOutcome::TimedOut),
        assumption_violation: count(TrialOutcome::AssumptionViolation),
        precondition: count(TrialOutcome::Precondition),
        error: count(TrialOutcome::Error),
    };
    let safe = records.iter().filter(|r| r.outcome.is_safe()).count();
    let pct = |n: usize| 100.0 * n as f64 / trials as f64;
    let ok: Vec<&Metrics> = records
        .iter()
        .filter(|r| r.outcome == TrialOutcome::Success)
        .filter_map(|r| r.metrics.as_ref())
        .collect();
    let stats = |f: &dyn Fn(&Metrics) -> f64| BoxStats::from_sample(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    MonteCarloResult {
        n_obstacles,
        trials,
        percent_safe: pct(safe),
        percent_successful: pct(counts.success),
        min_psi0: stats(&|m| m.min_psi0),
        settling_time_s: stats(&|m| m.settling_time_s),
        rms_u: (0..input_dim).map(|c| stats(&|m| m.rms_u[c])).collect(),
        counts,
        records,
    }
}
