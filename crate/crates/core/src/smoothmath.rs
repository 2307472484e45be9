//! Log-sum-exp soft minimum / soft maximum, smoothstep homotopies, and
//! second-order jets propagated through them.
//!
//! Every barrier quantity in this crate is carried as a [`ScalarJet2`]: the
//! value of a scalar field `h(t, x)` together with its first and second partial
//! derivatives in time and state. Treating `(t, x)` as one generalized
//! coordinate keeps the chain rules below uniform.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and first/second partial derivatives of a scalar field `h(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet2 {
    pub value: f64,
    /// ∂h/∂t
    pub dt: f64,
    /// ∂²h/∂t²
    pub dtt: f64,
    /// ∂h/∂x
    pub grad: DVector<f64>,
    /// ∂²h/∂t∂x
    pub dt_grad: DVector<f64>,
    /// ∂²h/∂x²
    pub hess: DMatrix<f64>,
}

impl ScalarJet2 {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            dt: 0.0,
            dtt: 0.0,
            grad: DVector::zeros(n),
            dt_grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    /// A field that depends on time only, e.g. a homotopy weight.
    pub fn time_only(value: f64, dt: f64, dtt: f64, n: usize) -> Self {
        Self {
            value,
            dt,
            dtt,
            ..Self::zeros(n)
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Checks the dimension contract on every component.
    pub fn is_consistent(&self) -> bool {
        let n = self.grad.len();
        self.dt_grad.len() == n && self.hess.nrows() == n && self.hess.ncols() == n
    }

    /// Largest asymmetry of the Hessian relative to its largest entry.
    pub fn hess_asymmetry(&self) -> f64 {
        let scale = self.hess.amax().max(f64::MIN_POSITIVE);
        (&self.hess - self.hess.transpose()).amax() / scale
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            value: s * self.value,
            dt: s * self.dt,
            dtt: s * self.dtt,
            grad: &self.grad * s,
            dt_grad: &self.dt_grad * s,
            hess: &self.hess * s,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            value: self.value + other.value,
            dt: self.dt + other.dt,
            dtt: self.dtt + other.dtt,
            grad: &self.grad + &other.grad,
            dt_grad: &self.dt_grad + &other.dt_grad,
            hess: &self.hess + &other.hess,
        })
    }

    /// Product rule through second order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let (a, b) = (self, other);
        let cross = &a.grad * b.grad.transpose();
        Ok(Self {
            value: a.value * b.value,
            dt: a.dt * b.value + a.value * b.dt,
            dtt: a.dtt * b.value + 2.0 * a.dt * b.dt + a.value * b.dtt,
            grad: &a.grad * b.value + &b.grad * a.value,
            dt_grad: &a.dt_grad * b.value
                + &b.grad * a.dt
                + &a.grad * b.dt
                + &b.dt_grad * a.value,
            hess: &a.hess * b.value + &cross + cross.transpose() + &b.hess * a.value,
        })
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Which hard extremum a blend approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    Min,
    Max,
}

fn validate_inputs(z: &[f64], kappa: f64) -> Result<()> {
    if z.is_empty() {
        return Err(Error::invalid("soft extremum of an empty vector"));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("sharpness must be positive, got {kappa}")));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite argument {bad}")));
    }
    Ok(())
}

/// Shifted log-sum-exp. Returns the blended value and the normalized weights
/// `w_i = ∂value/∂z_i`, which are nonnegative and sum to one.
///
/// Inputs are assumed validated.
pub(crate) fn soft_weights_into(z: &[f64], kappa: f64, mode: BlendMode, w: &mut Vec<f64>) -> f64 {
    w.clear();
    match mode {
        BlendMode::Max => {
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w.extend(z.iter().map(|&zi| (kappa * (zi - top)).exp()));
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= sum);
            top + (sum.ln() - (z.len() as f64).ln()) / kappa
        }
        BlendMode::Min => {
            let bottom = z.iter().copied().fold(f64::INFINITY, f64::min);
            w.extend(z.iter().map(|&zi| (-kappa * (zi - bottom)).exp()));
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= sum);
            bottom - sum.ln() / kappa
        }
    }
}

/// `softmin_κ(z) = -(1/κ) log Σ exp(-κ z_i)`, evaluated in the shifted form
/// `min(z) + softmin_κ(z - min(z))` so no exponent is ever positive.
pub fn stable_softmin(z: &[f64], kappa: f64) -> Result<f64> {
    validate_inputs(z, kappa)?;
    let mut w = Vec::with_capacity(z.len());
    Ok(soft_weights_into(z, kappa, BlendMode::Min, &mut w))
}

/// `softmax_κ(z) = (1/κ) log Σ exp(κ z_i) - log(N)/κ`, evaluated in the shifted
/// form `max(z) + softmax_κ(z - max(z))`.
pub fn stable_softmax(z: &[f64], kappa: f64) -> Result<f64> {
    validate_inputs(z, kappa)?;
    let mut w = Vec::with_capacity(z.len());
    Ok(soft_weights_into(z, kappa, BlendMode::Max, &mut w))
}

/// Result of [`softblend_jet`].
#[derive(Debug, Clone)]
pub struct Blend {
    pub jet: ScalarJet2,
    /// Convex weights `∂blend/∂arg_j`.
    pub weights: Vec<f64>,
    /// `κ · (max arg − min arg)`; large values mean the blend is close to the
    /// hard extremum and its curvature is correspondingly large.
    pub sharpness_spread: f64,
}

/// Soft minimum or maximum of jets.
///
/// The gradient is the weight-averaged gradient; second derivatives add the
/// `±κ`-scaled weighted covariance of the argument gradients in `(t, x)`.
pub fn softblend_jet(args: &[ScalarJet2], kappa: f64, mode: BlendMode) -> Result<Blend> {
    let values: Vec<f64> = args.iter().map(|a| a.value).collect();
    validate_inputs(&values, kappa)?;
    let n = args[0].dim();
    for a in args {
        check_dim(n, a.dim())?;
        if !a.is_consistent() {
            return Err(Error::invalid("inconsistent jet dimensions"));
        }
    }

    let mut weights = Vec::with_capacity(args.len());
    let value = soft_weights_into(&values, kappa, mode, &mut weights);
    let spread = {
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        kappa * (hi - lo)
    };

    let mut jet = ScalarJet2::zeros(n);
    jet.value = value;
    for (a, &w) in args.iter().zip(&weights) {
        jet.dt += w * a.dt;
        jet.grad.axpy(w, &a.grad, 1.0);
    }

    let sign = match mode {
        BlendMode::Max => kappa,
        BlendMode::Min => -kappa,
    };
    let mut dev = DVector::zeros(n);
    for (a, &w) in args.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let dev_t = a.dt - jet.dt;
        dev.copy_from(&a.grad);
        dev -= &jet.grad;

        jet.dtt += w * (a.dtt + sign * dev_t * dev_t);
        jet.dt_grad.axpy(w, &a.dt_grad, 1.0);
        jet.dt_grad.axpy(w * sign * dev_t, &dev, 1.0);
        jet.hess += &a.hess * w;
        jet.hess.ger(w * sign, &dev, &dev, 1.0);
    }

    Ok(Blend {
        jet,
        weights,
        sharpness_spread: spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothstepKind {
    Polynomial,
    Sinusoidal,
}

/// A transition `η` that is 0 for `t ≤ 0`, 1 for `t ≥ 1/ν`, and whose first
/// `r` derivatives vanish at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SmoothstepRaw", into = "SmoothstepRaw")]
pub struct SmoothstepSpec {
    kind: SmoothstepKind,
    r: u32,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
struct SmoothstepRaw {
    kind: SmoothstepKind,
    r: u32,
    nu: f64,
}

impl TryFrom<SmoothstepRaw> for SmoothstepSpec {
    type Error = Error;
    fn try_from(raw: SmoothstepRaw) -> Result<Self> {
        SmoothstepSpec::new(raw.kind, raw.r, raw.nu)
    }
}

impl From<SmoothstepSpec> for SmoothstepRaw {
    fn from(s: SmoothstepSpec) -> Self {
        SmoothstepRaw {
            kind: s.kind,
            r: s.r,
            nu: s.nu,
        }
    }
}

pub const MAX_SMOOTHSTEP_ORDER: u32 = 8;

impl SmoothstepSpec {
    pub fn new(kind: SmoothstepKind, r: u32, nu: f64) -> Result<Self> {
        if !(nu >= 1.0) || !nu.is_finite() {
            return Err(Error::invalid(format!("transition rate nu must be >= 1, got {nu}")));
        }
        match kind {
            SmoothstepKind::Polynomial if !(1..=MAX_SMOOTHSTEP_ORDER).contains(&r) => Err(
                Error::invalid(format!("polynomial smoothstep order must be in 1..=8, got {r}")),
            ),
            SmoothstepKind::Sinusoidal if !(1..=2).contains(&r) => Err(Error::invalid(format!(
                "sinusoidal smoothstep is only valid for r in {{1, 2}}, got {r}"
            ))),
            _ => Ok(Self { kind, r, nu }),
        }
    }

    pub fn polynomial(r: u32, nu: f64) -> Result<Self> {
        Self::new(SmoothstepKind::Polynomial, r, nu)
    }

    pub fn sinusoidal(r: u32, nu: f64) -> Result<Self> {
        Self::new(SmoothstepKind::Sinusoidal, r, nu)
    }

    pub fn kind(&self) -> SmoothstepKind {
        self.kind
    }

    pub fn order(&self) -> u32 {
        self.r
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

const BINOM_ROWS: usize = 2 * MAX_SMOOTHSTEP_ORDER as usize + 2;

const BINOM: [[f64; BINOM_ROWS]; BINOM_ROWS] = {
    let mut table = [[0.0; BINOM_ROWS]; BINOM_ROWS];
    let mut n = 0;
    while n < BINOM_ROWS {
        table[n][0] = 1.0;
        let mut k = 1;
        while k <= n {
            table[n][k] = table[n - 1][k - 1] + table[n - 1][k];
            k += 1;
        }
        n += 1;
    }
    table
};

/// Coefficients of the smoothstep polynomial in `s = νt`, lowest power first.
fn smoothstep_coefficients(r: usize) -> Vec<f64> {
    let mut c = vec![0.0; 2 * r + 2];
    for j in 0..=r {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        c[r + 1 + j] = sign * BINOM[r + j][j] * BINOM[2 * r + 1][r - j];
    }
    c
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(p, &c)| p as f64 * c)
        .collect()
}

/// `(η(t), η'(t), η''(t))`.
pub fn smoothstep_jet(t: f64, spec: &SmoothstepSpec) -> (f64, f64, f64) {
    let nu = spec.nu;
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 / nu {
        return (1.0, 0.0, 0.0);
    }
    let s = nu * t;
    match spec.kind {
        SmoothstepKind::Polynomial => {
            let c0 = smoothstep_coefficients(spec.r as usize);
            let c1 = derivative(&c0);
            let c2 = derivative(&c1);
            let v = horner(&c0, s).clamp(0.0, 1.0);
            (v, nu * horner(&c1, s), nu * nu * horner(&c2, s))
        }
        SmoothstepKind::Sinusoidal => {
            let two_pi = std::f64::consts::TAU;
            let v = s - (two_pi * s).sin() / two_pi;
            let d = nu * (1.0 - (two_pi * s).cos());
            let dd = nu * nu * two_pi * (two_pi * s).sin();
            (v.clamp(0.0, 1.0), d, dd)
        }
    }
}
