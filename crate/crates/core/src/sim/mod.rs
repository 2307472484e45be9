//! Sampled-data closed-loop simulation.

mod config;
mod trajectory;
mod montecarlo;

use nalgebra::{DVector, Vector3};

pub use config::{BarrierParams, MonteCarloConfig, PlantConfig, Rates, Region, ScenarioConfig};
pub use trajectory::{compute_metrics, BoxStats, LogRow, Metrics, TrajectoryLog, GOAL_TOLERANCE};
pub use montecarlo::{monte_carlo, random_trial, MonteCarloResult, OutcomeCounts, TrialOutcome, TrialRecord, TRIAL_DURATION};

use crate::barrier::synthesize_barrier;
use crate::composer::{epoch_index, CompositeBarrier};
use crate::controller::{compute_control, QuadCost};
use crate::error::{Error, Result};
use crate::systems::{
    quadrotor_desired_control, quadrotor_step, unicycle_desired_control, QuadrotorParams, QuadrotorState, SystemModel,
    UnicycleGains,
};
use crate::world::World;

/// The simulated plant. The unicycle is both design model and plant; the
/// quadrotor is simulated in full while the filter sees its double
/// integrator outer loop.
#[derive(Debug, Clone)]
enum Plant {
    Unicycle {
        x: DVector<f64>,
        goal: [f64; 2],
        gains: UnicycleGains,
    },
    Quadrotor {
        state: QuadrotorState,
        goal: Vector3<f64>,
        k5: f64,
        k6: f64,
        params: QuadrotorParams,
    },
}

impl Plant {
    fn new(cfg: &PlantConfig) -> Self {
        match cfg {
            PlantConfig::Unicycle { x0, goal, gains } => Plant::Unicycle {
                x: DVector::from_column_slice(x0),
                goal: *goal,
                gains: *gains,
            },
            PlantConfig::Quadrotor {
                q0,
                p0,
                goal,
                k5,
                k6,
                params,
            } => {
                let mut state = QuadrotorState::hover(Vector3::from(*q0), params);
                state.p = Vector3::from(*p0);
                Plant::Quadrotor {
                    state,
                    goal: Vector3::from(*goal),
                    k5: *k5,
                    k6: *k6,
                    params: *params,
                }
            }
        }
    }

    fn design_state(&self) -> DVector<f64> {
        match self {
            Plant::Unicycle { x, .. } => x.clone(),
            Plant::Quadrotor { state, .. } => state.outer_state(),
        }
    }

    fn position(&self) -> Vector3<f64> {
        match self {
            Plant::Unicycle { x, .. } => Vector3::new(x[0], x[1], 0.0),
            Plant::Quadrotor { state, .. } => state.q,
        }
    }

    fn heading(&self) -> f64 {
        match self {
            Plant::Unicycle { x, .. } => x[3],
            Plant::Quadrotor { .. } => 0.0,
        }
    }

    fn desired(&self) -> DVector<f64> {
        match self {
            Plant::Unicycle { x, goal, gains } => DVector::from_row_slice(&unicycle_desired_control(x, goal, gains)),
            Plant::Quadrotor { state, goal, k5, k6, .. } => {
                let u = quadrotor_desired_control(&state.q, &state.p, goal, *k5, *k6);
                DVector::from_column_slice(u.as_slice())
            }
        }
    }

    /// Advances by `dt` under the held input; returns whether the attitude
    /// command saturated.
    fn step(&mut self, model: &SystemModel, u: &DVector<f64>, dt: f64) -> bool {
        match self {
            Plant::Unicycle { x, .. } => {
                *x = rk4(model, x, u, dt);
                false
            }
            Plant::Quadrotor { state, params, .. } => {
                let (next, saturated) = quadrotor_step(state, &Vector3::new(u[0], u[1], u[2]), params, dt);
                *state = next;
                saturated
            }
        }
    }
}

/// Classical RK4 step of `ẋ = f(x) + g(x)u` with `u` held.
pub fn rk4(model: &SystemModel, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = model.dynamics(x, u);
    let k2 = model.dynamics(&(x + &k1 * (0.5 * dt)), u);
    let k3 = model.dynamics(&(x + &k2 * (0.5 * dt)), u);
    let k4 = model.dynamics(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One sample of the fine trace used to inspect smoothness of `ψ₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub psi0: f64,
    /// `∂ψ₀/∂t`.
    pub psi0_t: f64,
    /// Total derivative `dψ₀/dt` along the closed loop.
    pub psi0_dot: f64,
    /// Total derivative of `∂ψ₀/∂t`.
    pub psi0_t_dot: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record a trace every this many seconds (rounded to integrator steps).
    pub trace_dt: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: Metrics,
    pub trace: Vec<TraceSample>,
    /// Control steps on which the filter clamped a vanishing denominator.
    pub assumption_warnings: usize,
    /// Integrator steps on which the quadrotor tilt limit was active.
    pub saturated_steps: usize,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let world = cfg.load_world()?;
    run_in_world(cfg, &world, &RunOptions::default())
}

/// Runs `cfg` against an already constructed world; the world file named in
/// `cfg` is ignored.
pub fn run_in_world(cfg: &ScenarioConfig, world: &World, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let model = cfg.plant.design_model();
    if world.dim != model.position_dim() {
        return Err(Error::config(format!(
            "world dim {} does not match the plant position dim {}",
            world.dim,
            model.position_dim()
        )));
    }
    let bcfg = cfg.barrier_config();
    let dt_i = cfg.rates.integrator_dt;
    let substeps = cfg.substeps()?;
    let per_period = cfg.steps_per_period()?;
    let steps = cfg.control_steps()?;
    let trace_stride = opts
        .trace_dt
        .map(|h| ((h / dt_i).round() as u64).max(1));

    let mut plant = Plant::new(&cfg.plant);
    let mut composite = CompositeBarrier::new(cfg.composer)?;
    let goal = cfg.plant.goal();
    let n = model.state_dim();
    let m = model.input_dim();
    let mut log = TrajectoryLog::new(n, m, goal);
    let mut trace = Vec::new();
    let mut warnings = 0;
    let mut saturated_steps = 0;

    for i in 0..=steps {
        let t = i as f64 / cfg.rates.control_hz;
        if i % per_period == 0 {
            let k = epoch_index(t, cfg.composer.period);
            let scan = world.ray_cast(t, k, &plant.position(), plant.heading(), &cfg.lidar)?;
            composite.push(synthesize_barrier(&scan, &bcfg)?, k)?;
        }
        let x = plant.design_state();
        let chain = composite.eval_chain(t, &x, &model)?;
        if i == 0 && (chain.psi0.jet.value < 0.0 || chain.psi1 < 0.0) {
            return Err(Error::Precondition {
                psi0: chain.psi0.jet.value,
                psi1: chain.psi1,
            });
        }
        let u_d = plant.desired();
        let out = compute_control(&chain, &QuadCost::minimum_intervention(&u_d), &cfg.filter)?;
        if out.assumption_warning {
            warnings += 1;
            log::debug!("t = {t:.3}: input gain vanished while the constraint was active");
        }
        let mut clearance = world.min_clearance(t, &plant.position());

        if i < steps {
            for j in 0..substeps {
                let ts = t + j as f64 * dt_i;
                if let Some(stride) = trace_stride {
                    if (i * substeps + j) % stride == 0 {
                        trace.push(trace_sample(&composite, &model, ts, &plant.design_state(), &out.u_star)?);
                    }
                }
                if plant.step(&model, &out.u_star, dt_i) {
                    saturated_steps += 1;
                }
                let ts_next = t + (j + 1) as f64 * dt_i;
                clearance = clearance.min(world.min_clearance(ts_next, &plant.position()));
            }
        } else if let Some(stride) = trace_stride {
            if (i * substeps) % stride == 0 {
                trace.push(trace_sample(&composite, &model, t, &x, &out.u_star)?);
            }
        }

        log.rows.push(LogRow {
            t,
            x: x.iter().copied().collect(),
            u_d: u_d.iter().copied().collect(),
            u: out.u_star.iter().copied().collect(),
            psi0: out.psi0,
            psi1: out.psi1,
            lambda: out.lambda,
            mu: out.mu_star,
            omega: out.omega,
            d: out.d,
            clearance,
            k: composite.current_k().unwrap_or(0),
            weights: chain.psi0.mu.clone(),
        });
    }
    let metrics = compute_metrics(&log);
    Ok(RunOutput {
        log,
        metrics,
        trace,
        assumption_warnings: warnings,
        saturated_steps,
    })
}

fn trace_sample(
    composite: &CompositeBarrier,
    model: &SystemModel,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<TraceSample> {
    let jet = composite.eval_psi0(t, x)?.jet;
    let xdot = model.dynamics(x, u);
    Ok(TraceSample {
        t,
        psi0: jet.value,
        psi0_t: jet.dt,
        psi0_dot: jet.dt + jet.grad.dot(&xdot),
        psi0_t_dot: jet.dtt + jet.dt_grad.dot(&xdot),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemModel;

    #[test]
    fn rk4_integrates_a_straight_line_exactly() {
        let model = SystemModel::unicycle();
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let u = DVector::from_vec(vec![0.5, 0.0]);
        let y = rk4(&model, &x, &u, 0.2);
        // v(t) = 1 + t/2, q_x = t + t²/4
        assert!((y[0] - (0.2 + 0.01)).abs() < 1e-14);
        assert!((y[2] - 1.1).abs() < 1e-14);
        assert_eq!(y[1], 0.0);
    }
}
