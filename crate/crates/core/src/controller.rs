//! Closed-form minimizer of `½uᵀQu + cᵀu + ½γμ²` subject to the relaxed
//! barrier constraint
//!
//! ```text
//! ∂ψ₁/∂t + L_f ψ₁ + L_g ψ₁ u + α(ψ₁) + μ ψ₁ ≥ 0
//! ```
//!
//! together with a direct numerical solver of the same program used to
//! cross-check it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::composer::{ClassK, PsiChain};
use crate::error::{Error, Result};

/// `Q` and `c` of the control cost at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCost {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl QuadCost {
    /// `Q = I`, `c = −u_d`, i.e. minimize `‖u − u_d‖²`.
    pub fn minimum_intervention(u_d: &DVector<f64>) -> Self {
        Self {
            q: DMatrix::identity(u_d.len(), u_d.len()),
            c: -u_d,
        }
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.q * u)) + self.c.dot(u)
    }

    fn factor(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        if self.q.nrows() != self.c.len() || !self.q.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.c.len(),
                got: self.q.nrows(),
            });
        }
        if (&self.q - self.q.transpose()).amax() > 1e-12 * self.q.amax().max(1.0) {
            return Err(Error::config("cost matrix Q is not symmetric"));
        }
        self.q
            .clone()
            .cholesky()
            .ok_or_else(|| Error::config("cost matrix Q is not positive definite"))
    }
}

/// Full objective including the slack penalty.
pub fn safety_objective(cost: &QuadCost, gamma: f64, u: &DVector<f64>, mu: f64) -> f64 {
    cost.objective(u) + 0.5 * gamma * mu * mu
}

/// How to react when the constraint is active but the input cannot affect it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Clamp the denominator and flag the step.
    #[default]
    Simulation,
    /// Return an error.
    Verification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub gamma: f64,
    pub alpha: ClassK,
    #[serde(default)]
    pub mode: FilterMode,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::config(format!("gamma must be positive, got {}", self.gamma)));
        }
        let ClassK::Linear { gain } = self.alpha;
        ClassK::linear(gain).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u_star: DVector<f64>,
    pub mu_star: f64,
    pub lambda: f64,
    pub omega: f64,
    pub d: f64,
    pub psi0: f64,
    pub psi1: f64,
    /// Constraint function evaluated at `(u*, μ*)`.
    pub constraint_value: f64,
    pub slack_active: bool,
    pub assumption_warning: bool,
}

/// Smallest admissible denominator when the constraint is active.
pub const MIN_DENOMINATOR: f64 = 1e-12;

fn check_inputs(chain: &PsiChain, m: usize) -> Result<()> {
    if chain.lg_psi1.len() != m {
        return Err(Error::DimensionMismatch {
            expected: chain.lg_psi1.len(),
            got: m,
        });
    }
    Ok(())
}

/// The relaxed constraint function at a candidate `(û, μ̂)`.
pub fn constraint_value(chain: &PsiChain, alpha: &ClassK, u_hat: &DVector<f64>, mu_hat: f64) -> Result<f64> {
    check_inputs(chain, u_hat.len())?;
    Ok(chain.dpsi1_dt + chain.lf_psi1 + chain.lg_psi1.dot(u_hat) + alpha.eval(chain.psi1) + mu_hat * chain.psi1)
}

/// Closed-form optimal control and slack.
pub fn compute_control(chain: &PsiChain, cost: &QuadCost, cfg: &FilterConfig) -> Result<ControlOutput> {
    cfg.validate()?;
    check_inputs(chain, cost.c.len())?;
    let chol = cost.factor()?;
    let lg = &chain.lg_psi1;
    let psi1 = chain.psi1;
    let qinv_c = chol.solve(&cost.c);
    let qinv_lg = chol.solve(lg);

    let omega = chain.dpsi1_dt + chain.lf_psi1 + cfg.alpha.eval(psi1) - lg.dot(&qinv_c);
    let d = lg.dot(&qinv_lg) + psi1 * psi1 / cfg.gamma;

    let mut warning = chain.degenerate_input_gain;
    let lambda = if omega >= 0.0 {
        0.0
    } else if d < MIN_DENOMINATOR {
        if cfg.mode == FilterMode::Verification {
            return Err(Error::AssumptionViolation(format!(
                "constraint active (omega = {omega:e}) but d = {d:e}; L_g psi1 vanishes"
            )));
        }
        warning = true;
        -omega / d.max(MIN_DENOMINATOR)
    } else {
        -omega / d
    };

    let u_star = -qinv_c + qinv_lg * lambda;
    let mu_star = psi1 * lambda / cfg.gamma;
    let constraint_value = constraint_value(chain, &cfg.alpha, &u_star, mu_star)?;
    Ok(ControlOutput {
        slack_active: lambda > 0.0 && psi1 != 0.0,
        assumption_warning: warning,
        u_star,
        mu_star,
        lambda,
        omega,
        d,
        psi0: chain.psi0.jet.value,
        psi1,
        constraint_value,
    })
}

/// Solves the same program without the closed form: the unconstrained
/// minimizer when it is feasible, otherwise the equality-constrained KKT
/// system by LU, polished by projected gradient steps.
pub fn qp_oracle(chain: &PsiChain, cost: &QuadCost, cfg: &FilterConfig) -> Result<(DVector<f64>, f64)> {
    cfg.validate()?;
    check_inputs(chain, cost.c.len())?;
    let chol = cost.factor()?;
    let m = cost.c.len();
    let a = &chain.lg_psi1;
    let psi1 = chain.psi1;
    let e = chain.dpsi1_dt + chain.lf_psi1 + cfg.alpha.eval(psi1);

    let u_free = -chol.solve(&cost.c);
    if e + a.dot(&u_free) >= 0.0 {
        return Ok((u_free, 0.0));
    }

    let dim = m + 2;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (m, m)).copy_from(&cost.q);
    kkt[(m, m)] = cfg.gamma;
    for i in 0..m {
        kkt[(i, m + 1)] = -a[i];
        kkt[(m + 1, i)] = a[i];
    }
    kkt[(m, m + 1)] = -psi1;
    kkt[(m + 1, m)] = psi1;
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, m).copy_from(&(-&cost.c));
    rhs[m + 1] = -e;

    let lu = kkt.clone().lu();
    let sol = lu.solve(&rhs).ok_or_else(|| {
        Error::Singular(format!(
            "KKT matrix singular: |L_g psi1| = {:e}, psi1 = {psi1:e}, gamma = {}",
            a.norm(),
            cfg.gamma
        ))
    })?;
    let residual = (&kkt * &sol - &rhs).amax();
    if !residual.is_finite() || residual > 1e-6 * (1.0 + rhs.amax()) {
        return Err(Error::Singular(format!("KKT solve residual {residual:e}")));
    }
    let mut u = sol.rows(0, m).clone_owned();
    let mut mu = sol[m];
    polish(cost, cfg.gamma, a, psi1, e, &mut u, &mut mu);
    Ok((u, mu))
}

/// Projected gradient on `{aᵀu + ψ₁μ ≥ −e}`; keeps a step only if it lowers
/// the objective.
fn polish(cost: &QuadCost, gamma: f64, a: &DVector<f64>, psi1: f64, e: f64, u: &mut DVector<f64>, mu: &mut f64) {
    let lipschitz = cost.q.clone().symmetric_eigenvalues().amax().max(gamma);
    let step = 1.0 / lipschitz;
    let norm2 = a.norm_squared() + psi1 * psi1;
    if norm2 == 0.0 {
        return;
    }
    let mut best = safety_objective(cost, gamma, u, *mu);
    for _ in 0..50 {
        let gu = &cost.q * &*u + &cost.c;
        let mut un = &*u - gu * step;
        let mut mn = *mu - gamma * *mu * step;
        let slack = a.dot(&un) + psi1 * mn + e;
        if slack < 0.0 {
            un -= a * (slack / norm2);
            mn -= psi1 * slack / norm2;
        }
        let val = safety_objective(cost, gamma, &un, mn);
        if !(val < best) {
            break;
        }
        best = val;
        *u = un;
        *mu = mn;
    }
}
