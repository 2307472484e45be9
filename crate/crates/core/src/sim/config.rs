use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierConfig;
use crate::composer::CompositeConfig;
use crate::controller::FilterConfig;
use crate::error::{Error, Result};
use crate::systems::{QuadrotorParams, SystemModel, UnicycleGains};
use crate::world::{LidarSpec, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    Unicycle {
        /// `(q_x, q_y, v, θ)`.
        x0: [f64; 4],
        goal: [f64; 2],
        #[serde(default)]
        gains: UnicycleGains,
    },
    Quadrotor {
        q0: [f64; 3],
        #[serde(default)]
        p0: [f64; 3],
        goal: [f64; 3],
        #[serde(default = "default_k5")]
        k5: f64,
        #[serde(default = "default_k6")]
        k6: f64,
        #[serde(default)]
        params: QuadrotorParams,
    },
}

fn default_k5() -> f64 {
    3.0
}

fn default_k6() -> f64 {
    2.0
}

impl PlantConfig {
    /// Model used for barrier design and the safety filter.
    pub fn design_model(&self) -> SystemModel {
        match self {
            PlantConfig::Unicycle { .. } => SystemModel::unicycle(),
            PlantConfig::Quadrotor { .. } => SystemModel::double_integrator(3),
        }
    }

    pub fn goal(&self) -> Vec<f64> {
        match self {
            PlantConfig::Unicycle { goal, .. } => goal.to_vec(),
            PlantConfig::Quadrotor { goal, .. } => goal.to_vec(),
        }
    }

    pub fn position_dim(&self) -> usize {
        self.design_model().position_dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub eps_a: f64,
    pub eps_beta: f64,
    pub rho: f64,
    #[serde(default)]
    pub fov_level: f64,
    /// Speed bound `v̄` of moving obstacles, if any.
    #[serde(default)]
    pub speed_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub control_hz: f64,
    pub integrator_dt: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            control_hz: 100.0,
            integrator_dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Randomization used by the Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub start_region: Region,
    pub goal_region: Region,
    pub min_goal_distance: f64,
    pub obstacle_region: Region,
    /// Inclusive radius range of random obstacles.
    pub obstacle_radius: [f64; 2],
    /// Initial obstacle surfaces stay at least this far from the start.
    pub start_clearance: f64,
    /// Waypoints per obstacle path (including the start).
    #[serde(default = "default_waypoints")]
    pub waypoints: usize,
}

fn default_waypoints() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// World file, relative to the scenario file.
    pub world: PathBuf,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantConfig,
    pub lidar: LidarSpec,
    pub barrier: BarrierParams,
    pub composer: CompositeConfig,
    pub filter: FilterConfig,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloConfig>,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<u64> {
    let r = num / den;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::config(format!("{what} must be a positive integer, got {r}")));
    }
    Ok(n as u64)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })
    }

    /// Reads a scenario and resolves its world path against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if cfg.world.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.world = dir.join(&cfg.world);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_world(&self) -> Result<World> {
        let world = World::load(&self.world)?;
        if world.dim != self.plant.position_dim() {
            return Err(Error::config(format!(
                "world dim {} does not match the plant position dim {}",
                world.dim,
                self.plant.position_dim()
            )));
        }
        if let Some(v) = self.barrier.speed_bound {
            world.check_speed_bound(v)?;
        }
        Ok(world)
    }

    pub fn barrier_config(&self) -> BarrierConfig {
        BarrierConfig {
            max_range: self.lidar.max_range,
            eps_a: self.barrier.eps_a,
            eps_beta: self.barrier.eps_beta,
            rho: self.barrier.rho,
            fov: self.lidar.fov,
            fov_level: self.barrier.fov_level,
            dynamic: self
                .barrier
                .speed_bound
                .map(|v| (self.composer.period, self.composer.window, v)),
        }
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.rates.control_hz
    }

    /// Integrator steps per control period.
    pub fn substeps(&self) -> Result<u64> {
        ratio(self.control_dt(), self.rates.integrator_dt, "control period / integrator_dt")
    }

    /// Control periods per perception period.
    pub fn steps_per_period(&self) -> Result<u64> {
        ratio(self.composer.period, self.control_dt(), "perception period / control period")
    }

    pub fn control_steps(&self) -> Result<u64> {
        ratio(self.duration, self.control_dt(), "duration / control period")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(self.rates.control_hz > 0.0) || !(self.rates.integrator_dt > 0.0) {
            return Err(Error::config("rates must be positive"));
        }
        self.substeps()?;
        self.steps_per_period()?;
        self.control_steps()?;
        self.lidar.validate()?;
        self.barrier_config().validate()?;
        self.composer.validate()?;
        self.filter.validate()?;
        if let PlantConfig::Quadrotor { .. } = self.plant {
            if self.lidar.fov.is_some() {
                return Err(Error::config("the quadrotor uses a full-sphere sensor; remove lidar.fov"));
            }
        }
        if let Some(mc) = &self.montecarlo {
            let dim = self.plant.position_dim();
            for (name, r) in [
                ("start_region", &mc.start_region),
                ("goal_region", &mc.goal_region),
                ("obstacle_region", &mc.obstacle_region),
            ] {
                if r.min.len() != dim || r.max.len() != dim || r.min.iter().zip(&r.max).any(|(a, b)| a > b) {
                    return Err(Error::config(format!("montecarlo.{name} is malformed")));
                }
            }
            if !(mc.obstacle_radius[0] > 0.0 && mc.obstacle_radius[0] <= mc.obstacle_radius[1]) {
                return Err(Error::config("montecarlo.obstacle_radius must be an increasing positive pair"));
            }
            if mc.waypoints < 1 {
                return Err(Error::config("montecarlo.waypoints must be at least 1"));
            }
            if self.barrier.speed_bound.is_none() {
                return Err(Error::config("montecarlo requires barrier.speed_bound"));
            }
        }
        Ok(())
    }
}
