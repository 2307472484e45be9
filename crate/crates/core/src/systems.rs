//! Plant models: the nonholonomic unicycle with speed state, the
//! double-integrator design model, and the attitude-stabilized quadrotor that
//! the double integrator approximates.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Control-affine model `ẋ = f(x) + g(x) u` used for barrier design.
///
/// Positions always occupy the leading coordinates of the state, so the
/// position selector is `x[..position_dim]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemModel {
    /// `x = (q_x, q_y, v, θ)`, `u = (v̇, θ̇)`.
    Unicycle,
    /// `x = (q, p)` with `q, p ∈ R^dim`, `u = ṗ`.
    DoubleIntegrator { dim: usize },
}

impl SystemModel {
    pub fn unicycle() -> Self {
        SystemModel::Unicycle
    }

    pub fn double_integrator(dim: usize) -> Self {
        SystemModel::DoubleIntegrator { dim }
    }

    pub fn state_dim(&self) -> usize {
        match *self {
            SystemModel::Unicycle => 4,
            SystemModel::DoubleIntegrator { dim } => 2 * dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            SystemModel::Unicycle => 2,
            SystemModel::DoubleIntegrator { dim } => dim,
        }
    }

    pub fn position_dim(&self) -> usize {
        match *self {
            SystemModel::Unicycle => 2,
            SystemModel::DoubleIntegrator { dim } => dim,
        }
    }

    pub fn relative_degree(&self) -> usize {
        2
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            SystemModel::Unicycle => {
                let (v, th) = (x[2], x[3]);
                DVector::from_vec(vec![v * th.cos(), v * th.sin(), 0.0, 0.0])
            }
            SystemModel::DoubleIntegrator { dim } => {
                let mut f = DVector::zeros(2 * dim);
                f.rows_mut(0, dim).copy_from(&x.rows(dim, dim));
                f
            }
        }
    }

    pub fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut g = DMatrix::zeros(n, m);
        for j in 0..m {
            g[(n - m + j, j)] = 1.0;
        }
        g
    }

    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match *self {
            SystemModel::Unicycle => {
                let (v, th) = (x[2], x[3]);
                let mut j = DMatrix::zeros(4, 4);
                j[(0, 2)] = th.cos();
                j[(0, 3)] = -v * th.sin();
                j[(1, 2)] = th.sin();
                j[(1, 3)] = v * th.cos();
                j
            }
            SystemModel::DoubleIntegrator { dim } => {
                let mut j = DMatrix::zeros(2 * dim, 2 * dim);
                for i in 0..dim {
                    j[(i, dim + i)] = 1.0;
                }
                j
            }
        }
    }

    /// `ẋ` under input `u`.
    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_matrix(x) * u
    }

    /// Position of the state, zero-padded to three coordinates.
    pub fn position(&self, x: &DVector<f64>) -> Vector3<f64> {
        let mut p = Vector3::zeros();
        for i in 0..self.position_dim() {
            p[i] = x[i];
        }
        p
    }
}

/// Inside this distance from the goal the unicycle's desired control is zero.
pub const GOAL_RADIUS: f64 = 0.05;
const DISTANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for UnicycleGains {
    fn default() -> Self {
        Self {
            k1: 0.5,
            k2: 3.0,
            k3: 3.0,
        }
    }
}

/// Goal-seeking law for the unicycle; ignores obstacles entirely.
pub fn unicycle_desired_control(x: &DVector<f64>, goal: &[f64; 2], gains: &UnicycleGains) -> [f64; 2] {
    let (qx, qy, v, th) = (x[0], x[1], x[2], x[3]);
    let (ex, ey) = (qx - goal[0], qy - goal[1]);
    let dist = ex.hypot(ey);
    if dist <= GOAL_RADIUS {
        return [0.0, 0.0];
    }
    let UnicycleGains { k1, k2, k3 } = *gains;
    let delta = ey.atan2(ex) - th + std::f64::consts::PI;
    let (s, c) = delta.sin_cos();
    let ud1 = -(k1 + k3) * v + (1.0 + k1 * k3) * dist * c + k1 * (k2 * dist + v) * s * s;
    let ud2 = (k2 + v / dist.max(DISTANCE_FLOOR)) * s;
    [ud1, ud2]
}

/// Saturated PD law `k5 tanh(q_g − q) − k6 p`, elementwise.
pub fn quadrotor_desired_control(
    q: &Vector3<f64>,
    p: &Vector3<f64>,
    goal: &Vector3<f64>,
    k5: f64,
    k6: f64,
) -> Vector3<f64> {
    (goal - q).map(f64::tanh) * k5 - p * k6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    /// Attitude stiffness.
    pub k1: f64,
    /// Attitude damping.
    pub k2: f64,
    /// Yaw-rate gain.
    pub k3: f64,
    /// Thrust bandwidth.
    pub k4: f64,
    /// Commanded roll/pitch saturation (rad).
    pub tilt_limit: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.1,
            gravity: 9.81,
            k1: 3.4e3,
            k2: 116.67,
            k3: 1950.0,
            k4: 3.9e3,
            tilt_limit: 80f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorState {
    pub q: Vector3<f64>,
    pub p: Vector3<f64>,
    /// Body-to-inertial rotation.
    pub r: Matrix3<f64>,
    /// Body angular velocity.
    pub omega: Vector3<f64>,
    pub thrust: f64,
}

impl QuadrotorState {
    pub fn hover(q: Vector3<f64>, params: &QuadrotorParams) -> Self {
        Self {
            q,
            p: Vector3::zeros(),
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
            thrust: params.mass * params.gravity,
        }
    }

    /// Design-model state `(q, p)`.
    pub fn outer_state(&self) -> DVector<f64> {
        DVector::from_iterator(6, self.q.iter().chain(self.p.iter()).copied())
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.r.transpose() * self.r - Matrix3::identity()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeCommand {
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
    pub saturated: bool,
}

/// Maps a translational acceleration command to roll, pitch, and thrust
/// commands with zero yaw.
pub fn attitude_command(u: &Vector3<f64>, params: &QuadrotorParams) -> AttitudeCommand {
    let lim = params.tilt_limit;
    let lift = u.z + params.gravity;
    let pitch_raw = (u.x / lift).atan();
    let pitch = pitch_raw.clamp(-lim, lim);
    let roll_raw = (-u.y * pitch.cos() / lift).atan();
    let roll = roll_raw.clamp(-lim, lim);
    let thrust = (lift * params.mass / (roll.cos() * pitch.cos())).max(0.0);
    AttitudeCommand {
        roll,
        pitch,
        thrust,
        saturated: pitch != pitch_raw || roll != roll_raw || lift <= 0.0,
    }
}

const PITCH_GUARD: f64 = 1e-6;

/// 3-2-1 Euler angles `(roll φ, pitch θ, yaw ψ)` of a body-to-inertial
/// rotation, with pitch kept away from ±π/2.
pub fn euler_321(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin().clamp(-half_pi + PITCH_GUARD, half_pi - PITCH_GUARD);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

/// Euler-rate map `W` with `ω_body = W (φ̇, θ̇, ψ̇)`.
fn euler_rate_matrix(roll: f64, pitch: f64) -> Matrix3<f64> {
    let (sf, cf) = roll.sin_cos();
    let (st, ct) = pitch.sin_cos();
    Matrix3::new(1.0, 0.0, -st, 0.0, cf, sf * ct, 0.0, -sf, cf * ct)
}

fn euler_rates(roll: f64, pitch: f64, omega: &Vector3<f64>) -> Vector3<f64> {
    let (sf, cf) = roll.sin_cos();
    let (tt, ct) = (pitch.tan(), pitch.cos());
    let a = omega.y * sf + omega.z * cf;
    Vector3::new(omega.x + a * tt, omega.y * cf - omega.z * sf, a / ct)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorDerivative {
    pub q_dot: Vector3<f64>,
    pub p_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub thrust_dot: f64,
    pub saturated: bool,
}

/// Closed-loop attitude-stabilized quadrotor under acceleration command `u`.
/// The rotation evolves as `Ṙ = R[ω]×`; see [`quadrotor_step`].
pub fn quadrotor_derivative(
    state: &QuadrotorState,
    u: &Vector3<f64>,
    params: &QuadrotorParams,
) -> QuadrotorDerivative {
    let cmd = attitude_command(u, params);
    let (roll, pitch, _) = euler_321(&state.r);
    let rates = euler_rates(roll, pitch, &state.omega);
    let inner = Vector3::new(
        params.k1 * (cmd.roll - roll) - params.k2 * rates.x,
        params.k1 * (cmd.pitch - pitch) - params.k2 * rates.y,
        -params.k3 * rates.z,
    );
    let e3 = Vector3::z();
    QuadrotorDerivative {
        q_dot: state.p,
        p_dot: state.r * e3 * (state.thrust / params.mass) - e3 * params.gravity,
        omega_dot: euler_rate_matrix(roll, pitch) * inner,
        thrust_dot: params.k4 * (cmd.thrust - state.thrust),
        saturated: cmd.saturated,
    }
}

fn advance(s: &QuadrotorState, base_r: &Matrix3<f64>, d: &QuadrotorDerivative, omega: &Vector3<f64>, h: f64) -> QuadrotorState {
    QuadrotorState {
        q: s.q + d.q_dot * h,
        p: s.p + d.p_dot * h,
        r: base_r * Rotation3::new(omega * h).matrix(),
        omega: s.omega + d.omega_dot * h,
        thrust: s.thrust + d.thrust_dot * h,
    }
}

/// One RK4 step. The rotation stages use the exponential map of the stage
/// body rates and the result is projected back onto SO(3).
pub fn quadrotor_step(
    state: &QuadrotorState,
    u: &Vector3<f64>,
    params: &QuadrotorParams,
    dt: f64,
) -> (QuadrotorState, bool) {
    let r0 = state.r;
    let k1 = quadrotor_derivative(state, u, params);
    let s2 = advance(state, &r0, &k1, &state.omega, 0.5 * dt);
    let k2 = quadrotor_derivative(&s2, u, params);
    let s3 = advance(state, &r0, &k2, &s2.omega, 0.5 * dt);
    let k3 = quadrotor_derivative(&s3, u, params);
    let s4 = advance(state, &r0, &k3, &s3.omega, dt);
    let k4 = quadrotor_derivative(&s4, u, params);

    let w = |a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>| (a + 2.0 * b + 2.0 * c + d) / 6.0;
    let omega_avg = w(state.omega, s2.omega, s3.omega, s4.omega);
    let r = r0 * Rotation3::new(omega_avg * dt).matrix();
    let next = QuadrotorState {
        q: state.q + w(k1.q_dot, k2.q_dot, k3.q_dot, k4.q_dot) * dt,
        p: state.p + w(k1.p_dot, k2.p_dot, k3.p_dot, k4.p_dot) * dt,
        r: Rotation3::from_matrix(&r).into_inner(),
        omega: state.omega + w(k1.omega_dot, k2.omega_dot, k3.omega_dot, k4.omega_dot) * dt,
        thrust: (state.thrust
            + (k1.thrust_dot + 2.0 * k2.thrust_dot + 2.0 * k3.thrust_dot + k4.thrust_dot) / 6.0 * dt)
            .max(0.0),
    };
    (next, k1.saturated)
}
