//! Time-varying soft-maximum composition of the most recent perception
//! barriers, and the higher-order chain `ψ₁ = ∂ψ₀/∂t + L_f ψ₀ + α₀(ψ₀)`.
//!
//! The window holds `b_k, …, b_{k−N}` (newest first). Over each period the
//! newest barrier is blended in and the oldest blended out by a smoothstep
//! homotopy `η(t/T − k)`.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::PerceptionBarrier;
use crate::error::{Error, Result};
use crate::smoothmath::{smoothstep_jet, softblend_jet, BlendMode, ScalarJet2, SmoothstepSpec};
use crate::systems::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionVariant {
    /// Soft maximum of the middle barriers and one homotopy argument
    /// `η b_k + (1 − η) b_{k−N}`.
    #[default]
    Eq12,
    /// Homotopy between the soft maxima of the older `N` and newer `N`
    /// barriers.
    Eq46,
}

/// Extended class-K function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassK {
    Linear { gain: f64 },
}

impl ClassK {
    pub fn linear(gain: f64) -> Result<Self> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::config(format!("class-K gain must be positive, got {gain}")));
        }
        Ok(ClassK::Linear { gain })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            ClassK::Linear { gain } => gain * s,
        }
    }

    pub fn derivative(&self, _s: f64) -> f64 {
        match *self {
            ClassK::Linear { gain } => gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeConfig {
    /// `N`: the window holds `N + 1` barriers.
    pub window: usize,
    /// Perception period `T` in seconds.
    pub period: f64,
    pub kappa: f64,
    pub eta: SmoothstepSpec,
    #[serde(default)]
    pub variant: CompositionVariant,
    pub alpha0: ClassK,
    /// Relative degree; only 2 is implemented.
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    2
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::config("window N must be at least 1"));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::config(format!("period must be positive, got {}", self.period)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::config(format!("kappa must be positive, got {}", self.kappa)));
        }
        let ClassK::Linear { gain } = self.alpha0;
        ClassK::linear(gain)?;
        if self.order != 2 {
            return Err(Error::UnsupportedOrder(self.order));
        }
        Ok(())
    }
}

/// Relative tolerance that maps control instants landing on `kT` (up to
/// rounding) into epoch `k`.
const EPOCH_GUARD: f64 = 1e-9;

pub fn epoch_index(t: f64, period: f64) -> u64 {
    (t / period + EPOCH_GUARD).floor().max(0.0) as u64
}

#[derive(Debug, Clone)]
pub struct CompositeBarrier {
    cfg: CompositeConfig,
    window: VecDeque<Arc<PerceptionBarrier>>,
    k: Option<u64>,
}

/// `ψ₀` with its jet and composition weights.
#[derive(Debug, Clone)]
pub struct Psi0 {
    pub jet: ScalarJet2,
    /// `μ_0 … μ_N`; `μ_j` multiplies `b_{k−j}`.
    pub mu: Vec<f64>,
    /// Jets of `b_k, …, b_{k−N}` at the query state.
    pub components: Vec<ScalarJet2>,
    pub eta: f64,
    pub sharpness_spread: f64,
}

#[derive(Debug, Clone)]
pub struct PsiChain {
    pub psi0: Psi0,
    pub psi1: f64,
    pub dpsi1_dt: f64,
    pub grad_psi1: DVector<f64>,
    pub lf_psi1: f64,
    pub lg_psi1: DVector<f64>,
    /// `L_g ψ₀`; zero for position barriers.
    pub lg_psi0: DVector<f64>,
    /// `Σ μ_j L_g L_f b_{k−j}`, which must equal `lg_psi1`.
    pub lglf_convex: DVector<f64>,
    /// `L_g ψ₁` vanishes while `ψ₁ ≤ 0`.
    pub degenerate_input_gain: bool,
    /// For `N = 1`: whether the origin lies on the segment joining
    /// `L_g L_f b_k` and `L_g L_f b_{k−1}`.
    pub segment_hits_origin: Option<bool>,
}

const DEGENERATE_GAIN: f64 = 1e-9;

impl CompositeBarrier {
    pub fn new(cfg: CompositeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            window: VecDeque::with_capacity(cfg.window + 1),
            k: None,
        })
    }

    pub fn config(&self) -> &CompositeConfig {
        &self.cfg
    }

    pub fn current_k(&self) -> Option<u64> {
        self.k
    }

    /// Newest first.
    pub fn window(&self) -> impl Iterator<Item = &PerceptionBarrier> {
        self.window.iter().map(|b| b.as_ref())
    }

    /// Adds `b_k`. The first push must have `k = 0` and fills every slot;
    /// later pushes must advance `k` by one.
    pub fn push(&mut self, b: PerceptionBarrier, k: u64) -> Result<()> {
        let expected = self.k.map_or(0, |prev| prev + 1);
        if k != expected {
            return Err(Error::Sequencing(format!("pushed k = {k}, expected {expected}")));
        }
        let b = Arc::new(b);
        if self.k.is_none() {
            self.window.extend(std::iter::repeat(b).take(self.cfg.window + 1));
        } else {
            self.window.pop_back();
            self.window.push_front(b);
        }
        self.k = Some(k);
        Ok(())
    }

    fn check_epoch(&self, t: f64) -> Result<u64> {
        let k = self
            .k
            .ok_or_else(|| Error::Sequencing("no perception barrier pushed yet".into()))?;
        if !(t >= 0.0) {
            return Err(Error::Sequencing(format!("negative time {t}")));
        }
        let epoch = epoch_index(t, self.cfg.period);
        if epoch != k {
            return Err(Error::Sequencing(format!(
                "t = {t} lies in epoch {epoch} but the window is at k = {k}"
            )));
        }
        Ok(k)
    }

    fn component_jets(&self, x: &DVector<f64>) -> Result<Vec<ScalarJet2>> {
        let mut out: Vec<ScalarJet2> = Vec::with_capacity(self.window.len());
        for (j, b) in self.window.iter().enumerate() {
            let reuse = (0..j).find(|&i| Arc::ptr_eq(&self.window[i], b));
            out.push(match reuse {
                Some(i) => out[i].clone(),
                None => b.eval_jet(x)?,
            });
        }
        Ok(out)
    }

    /// `ψ₀(t, x)` as a jet, with its composition weights.
    pub fn eval_psi0(&self, t: f64, x: &DVector<f64>) -> Result<Psi0> {
        let k = self.check_epoch(t)?;
        let n = x.len();
        let big_n = self.cfg.window;
        let period = self.cfg.period;
        let tau = t / period - k as f64;
        let (e, de, dde) = smoothstep_jet(tau, &self.cfg.eta);
        let eta = ScalarJet2::time_only(e, de / period, dde / (period * period), n);
        let one_minus = ScalarJet2::time_only(1.0 - e, -de / period, -dde / (period * period), n);

        let b = self.component_jets(x)?;
        let (jet, mu, spread) = match self.cfg.variant {
            CompositionVariant::Eq12 => {
                let combo = eta.mul(&b[0])?.add(&one_minus.mul(&b[big_n])?)?;
                let mut args: Vec<ScalarJet2> = b[1..big_n].to_vec();
                args.push(combo);
                let blend = softblend_jet(&args, self.cfg.kappa, BlendMode::Max)?;
                let w_combo = blend.weights[big_n - 1];
                let mut mu = Vec::with_capacity(big_n + 1);
                mu.push(e * w_combo);
                mu.extend_from_slice(&blend.weights[..big_n - 1]);
                mu.push((1.0 - e) * w_combo);
                (blend.jet, mu, blend.sharpness_spread)
            }
            CompositionVariant::Eq46 => {
                let old = softblend_jet(&b[1..], self.cfg.kappa, BlendMode::Max)?;
                let new = softblend_jet(&b[..big_n], self.cfg.kappa, BlendMode::Max)?;
                let jet = one_minus.mul(&old.jet)?.add(&eta.mul(&new.jet)?)?;
                let mut mu = vec![0.0; big_n + 1];
                for j in 0..big_n {
                    mu[j] += e * new.weights[j];
                    mu[j + 1] += (1.0 - e) * old.weights[j];
                }
                (jet, mu, old.sharpness_spread.max(new.sharpness_spread))
            }
        };
        Ok(Psi0 {
            jet,
            mu,
            components: b,
            eta: e,
            sharpness_spread: spread,
        })
    }

    /// `ψ₀`, `ψ₁`, and the Lie derivatives of `ψ₁` along `model`.
    pub fn eval_chain(&self, t: f64, x: &DVector<f64>, model: &SystemModel) -> Result<PsiChain> {
        if model.relative_degree() != 2 {
            return Err(Error::UnsupportedOrder(model.relative_degree()));
        }
        if x.len() != model.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.state_dim(),
                got: x.len(),
            });
        }
        let psi0 = self.eval_psi0(t, x)?;
        let f = model.drift(x);
        let g = model.input_matrix(x);
        let jf_t = model.drift_jacobian(x).transpose();
        let alpha0 = self.cfg.alpha0;
        let p = &psi0.jet;
        let a_prime = alpha0.derivative(p.value);

        let psi1 = p.dt + p.grad.dot(&f) + alpha0.eval(p.value);
        let dpsi1_dt = p.dtt + p.dt_grad.dot(&f) + a_prime * p.dt;
        let grad_psi1 = &p.dt_grad + &p.hess * &f + &jf_t * &p.grad + &p.grad * a_prime;
        let lf_psi1 = grad_psi1.dot(&f);
        let lg_psi1 = g.tr_mul(&grad_psi1);
        let lg_psi0 = g.tr_mul(&p.grad);

        let lglf: Vec<DVector<f64>> = psi0
            .components
            .iter()
            .map(|c| g.tr_mul(&(&c.hess * &f + &jf_t * &c.grad)))
            .collect();
        let mut lglf_convex = DVector::zeros(g.ncols());
        for (mu, v) in psi0.mu.iter().zip(&lglf) {
            lglf_convex.axpy(*mu, v, 1.0);
        }
        let segment_hits_origin = (lglf.len() == 2).then(|| segment_touches_origin(&lglf[0], &lglf[1]));

        Ok(PsiChain {
            degenerate_input_gain: lg_psi1.norm() < DEGENERATE_GAIN && psi1 <= 0.0,
            psi0,
            psi1,
            dpsi1_dt,
            grad_psi1,
            lf_psi1,
            lg_psi1,
            lg_psi0,
            lglf_convex,
            segment_hits_origin,
        })
    }
}

fn segment_touches_origin(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let d = a - b;
    let dd = d.norm_squared();
    let s = if dd > 0.0 { (-b.dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let closest = b + d * s;
    closest.norm() <= DEGENERATE_GAIN * (1.0 + a.norm().max(b.norm()))
}
