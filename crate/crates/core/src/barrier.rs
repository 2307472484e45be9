//! Perception barriers: a range scan captured at `t = kT` becomes a smooth
//! function `b_k` whose zero-superlevel set lies inside the detection region
//! and outside an ellipse (ellipsoid in 3D) around every detected point.
//!
//! Geometry is stored in position space. Evaluation lifts position
//! derivatives into the full state by taking the leading `dim` coordinates of
//! the state as the position, which holds for every plant in [`crate::systems`].

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothmath::ScalarJet2;

/// One detected point in sensor-centred spherical coordinates. For planar
/// scans `elevation` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub range: f64,
    /// World-frame azimuth in `[0, 2π)`.
    pub azimuth: f64,
    /// Angle above the horizontal plane in `[-π/2, π/2]`.
    #[serde(default)]
    pub elevation: f64,
}

impl ScanPoint {
    pub fn planar(range: f64, azimuth: f64) -> Self {
        Self {
            range,
            azimuth,
            elevation: 0.0,
        }
    }

    pub fn direction(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub index_k: u64,
    /// 2 or 3.
    pub dim: usize,
    /// Sensor position at capture; unused coordinates are zero.
    pub pose: Vector3<f64>,
    /// Heading at capture (planar scans only).
    pub heading: f64,
    pub points: Vec<ScanPoint>,
}

impl Scan {
    pub fn empty(index_k: u64, dim: usize, pose: Vector3<f64>, heading: f64) -> Self {
        Self {
            index_k,
            dim,
            pose,
            heading,
            points: Vec::new(),
        }
    }
}

/// `σ(p) = (p − c)ᵀ Rᵀ P R (p − c) − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionTerm {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    /// Semi-axes `(a, z)`: along the beam and across it.
    pub semi_axes: (f64, f64),
    shape: Matrix3<f64>,
}

impl ExclusionTerm {
    fn new(pose: &Vector3<f64>, point: &ScanPoint, dim: usize, max_range: f64, eps_a: f64) -> Self {
        let u = point.direction();
        let c = pose + u * point.range;
        let d = pose + u * max_range;
        let half = 0.5 * (max_range - point.range);
        let a = half + eps_a;
        let z = (a * a - half * half).sqrt();

        let (st, ct) = point.azimuth.sin_cos();
        let (rotation, p_diag) = if dim == 2 {
            (
                Matrix3::new(ct, st, 0.0, -st, ct, 0.0, 0.0, 0.0, 1.0),
                Vector3::new(a.powi(-2), z.powi(-2), 0.0),
            )
        } else {
            // Polar angle measured from +z.
            let polar = std::f64::consts::FRAC_PI_2 - point.elevation;
            let (sp, cp) = polar.sin_cos();
            (
                Matrix3::new(ct * sp, st * sp, cp, -st, ct, 0.0, -ct * cp, -st * cp, sp),
                Vector3::new(a.powi(-2), z.powi(-2), z.powi(-2)),
            )
        };
        let shape = rotation.transpose() * Matrix3::from_diagonal(&p_diag) * rotation;
        Self {
            center: 0.5 * (c + d),
            rotation,
            semi_axes: (a, z),
            shape: 0.5 * (shape + shape.transpose()),
        }
    }

    pub fn shape_matrix(&self) -> &Matrix3<f64> {
        &self.shape
    }

    pub fn value(&self, p: &Vector3<f64>) -> f64 {
        let d = p - self.center;
        d.dot(&(self.shape * d)) - 1.0
    }

    fn jet(&self, p: &Vector3<f64>) -> PositionJet {
        let d = p - self.center;
        let md = self.shape * d;
        PositionJet {
            value: d.dot(&md) - 1.0,
            grad: 2.0 * md,
            hess: 2.0 * self.shape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionKind {
    Disk360,
    /// Disk intersected with the wedge of half-angle `theta_f / 2` about
    /// `heading`, each wedge edge shifted outward by `-offset`.
    LimitedFov { theta_f: f64, heading: f64, offset: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRegion {
    pub kind: DetectionKind,
    pub center: Vector3<f64>,
    /// `r̄ − ε_β`.
    pub radius: f64,
}

/// Left unit normal of the planar direction `θ`.
fn edge_normal(theta: f64) -> Vector3<f64> {
    Vector3::new(-theta.sin(), theta.cos(), 0.0)
}

impl DetectionRegion {
    fn beta(&self, p: &Vector3<f64>, dim: usize) -> PositionJet {
        let d = p - self.center;
        let mut hess = Matrix3::zeros();
        for i in 0..dim {
            hess[(i, i)] = -2.0;
        }
        PositionJet {
            value: self.radius * self.radius - d.norm_squared(),
            grad: -2.0 * d,
            hess,
        }
    }

    fn jet(&self, p: &Vector3<f64>, dim: usize, rho: f64) -> PositionJet {
        let beta = self.beta(p, dim);
        match self.kind {
            DetectionKind::Disk360 => beta,
            DetectionKind::LimitedFov {
                theta_f,
                heading,
                offset,
            } => {
                let d = p - self.center;
                let lower = edge_normal(heading - 0.5 * theta_f);
                let upper = -edge_normal(heading + 0.5 * theta_f);
                let half_plane = |n: Vector3<f64>| PositionJet {
                    value: n.dot(&d) - offset,
                    grad: n,
                    hess: Matrix3::zeros(),
                };
                soft_min_position(&[beta, half_plane(lower), half_plane(upper)], rho)
            }
        }
    }
}

/// Value, gradient, and Hessian of a function of position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionJet {
    pub value: f64,
    pub grad: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

fn soft_min_position(args: &[PositionJet], rho: f64) -> PositionJet {
    let lo = args.iter().map(|a| a.value).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = args.iter().map(|a| (-rho * (a.value - lo)).exp()).collect();
    let sum: f64 = w.iter().sum();
    let mut grad = Vector3::zeros();
    for (a, wi) in args.iter().zip(&w) {
        grad += a.grad * (wi / sum);
    }
    let mut hess = Matrix3::zeros();
    for (a, wi) in args.iter().zip(&w) {
        let wi = wi / sum;
        if wi == 0.0 {
            continue;
        }
        let dev = a.grad - grad;
        hess += a.hess * wi - dev * dev.transpose() * (rho * wi);
    }
    PositionJet {
        value: lo - sum.ln() / rho,
        grad,
        hess,
    }
}

/// Perception feedback `b_k` built from one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionBarrier {
    pub index_k: u64,
    pub dim: usize,
    pub rho: f64,
    pub terms: Vec<ExclusionTerm>,
    pub region: DetectionRegion,
}

/// Ellipse margin needed so that an obstacle moving at `speed_bound` cannot
/// reach the perceived safe set during the `window + 1` periods it is used.
pub fn dynamic_margin(period: f64, window: usize, speed_bound: f64) -> f64 {
    period * (window as f64 + 1.0) * speed_bound
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierConfig {
    pub max_range: f64,
    pub eps_a: f64,
    pub eps_beta: f64,
    pub rho: f64,
    /// Field of view in radians; `None` means a full circle / sphere.
    #[serde(default)]
    pub fov: Option<f64>,
    /// Value of the detection-region function at the capture pose for a
    /// limited field of view. Zero places the pose on the region boundary.
    #[serde(default)]
    pub fov_level: f64,
    /// `(T, N, v̄)` when obstacles may move; margins are checked against
    /// [`dynamic_margin`].
    #[serde(default)]
    pub dynamic: Option<(f64, usize, f64)>,
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("max_range", self.max_range)?;
        positive("eps_a", self.eps_a)?;
        positive("rho", self.rho)?;
        if !(self.eps_beta >= 0.0) || self.eps_beta >= self.max_range {
            return Err(Error::config(format!(
                "eps_beta must lie in [0, max_range), got {}",
                self.eps_beta
            )));
        }
        if let Some(fov) = self.fov {
            if !(fov > 0.0 && fov <= std::f64::consts::PI) {
                return Err(Error::config(format!("fov must lie in (0, pi], got {fov}")));
            }
            if !(self.fov_level >= 0.0) {
                return Err(Error::config("fov_level must be nonnegative"));
            }
        }
        if let Some((period, window, speed)) = self.dynamic {
            let need = dynamic_margin(period, window, speed);
            if self.eps_a < need || self.eps_beta < need {
                return Err(Error::config(format!(
                    "moving obstacles require eps_a and eps_beta >= T(N+1)v = {need}"
                )));
            }
        }
        Ok(())
    }
}

/// Builds `b_k` from a scan.
pub fn synthesize_barrier(scan: &Scan, cfg: &BarrierConfig) -> Result<PerceptionBarrier> {
    cfg.validate()?;
    if scan.dim != 2 && scan.dim != 3 {
        return Err(Error::invalid(format!("scan dimension must be 2 or 3, got {}", scan.dim)));
    }
    for (i, pt) in scan.points.iter().enumerate() {
        if !(pt.range >= 0.0 && pt.range <= cfg.max_range) {
            return Err(Error::invalid(format!(
                "scan point {i} has range {} outside [0, {}]",
                pt.range, cfg.max_range
            )));
        }
    }
    let terms = scan
        .points
        .iter()
        .map(|pt| ExclusionTerm::new(&scan.pose, pt, scan.dim, cfg.max_range, cfg.eps_a))
        .collect();
    let radius = cfg.max_range - cfg.eps_beta;
    let kind = match cfg.fov {
        None => DetectionKind::Disk360,
        Some(_) if scan.dim == 3 => {
            return Err(Error::config("limited field of view is only supported for planar scans"))
        }
        Some(theta_f) => DetectionKind::LimitedFov {
            theta_f,
            heading: scan.heading,
            offset: solve_fov_offset_at_level(radius * radius, cfg.rho, cfg.fov_level)?,
        },
    };
    Ok(PerceptionBarrier {
        index_k: scan.index_k,
        dim: scan.dim,
        rho: cfg.rho,
        terms,
        region: DetectionRegion {
            kind,
            center: scan.pose,
            radius,
        },
    })
}

impl PerceptionBarrier {
    pub fn position_of(&self, x: &DVector<f64>) -> Result<Vector3<f64>> {
        if x.len() < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut p = Vector3::zeros();
        for i in 0..self.dim {
            p[i] = x[i];
        }
        Ok(p)
    }

    pub fn region_value(&self, p: &Vector3<f64>) -> f64 {
        self.region.jet(p, self.dim, self.rho).value
    }

    /// `b_k` and its position derivatives.
    pub fn eval_position(&self, p: &Vector3<f64>) -> PositionJet {
        let region = self.region.jet(p, self.dim, self.rho);
        if self.terms.is_empty() {
            return region;
        }
        let mut jets = Vec::with_capacity(self.terms.len() + 1);
        jets.push(region);
        jets.extend(self.terms.iter().map(|t| t.jet(p)));
        soft_min_position(&jets, self.rho)
    }

    pub fn value_at(&self, p: &Vector3<f64>) -> f64 {
        let region = self.region_value(p);
        if self.terms.is_empty() {
            return region;
        }
        let mut lo = region;
        let values: Vec<f64> = self.terms.iter().map(|t| t.value(p)).collect();
        for &v in &values {
            lo = lo.min(v);
        }
        let sum: f64 = std::iter::once(region)
            .chain(values)
            .map(|v| (-self.rho * (v - lo)).exp())
            .sum();
        lo - sum.ln() / self.rho
    }

    /// Evaluates `b_k` as a jet over the state `x`. Time partials are zero
    /// and every non-position coordinate has zero derivative.
    pub fn eval_jet(&self, x: &DVector<f64>) -> Result<ScalarJet2> {
        let p = self.position_of(x)?;
        let pj = self.eval_position(&p);
        let mut jet = ScalarJet2::zeros(x.len());
        jet.value = pj.value;
        for i in 0..self.dim {
            jet.grad[i] = pj.grad[i];
            for j in 0..self.dim {
                jet.hess[(i, j)] = pj.hess[(i, j)];
            }
        }
        Ok(jet)
    }
}

pub fn eval_barrier_jet(b: &PerceptionBarrier, x: &DVector<f64>) -> Result<ScalarJet2> {
    b.eval_jet(x)
}

/// Half-plane offset `ε` with `softmin_ρ(β, −ε, −ε) = 0`.
pub fn solve_fov_offset(beta: f64, rho: f64) -> Result<f64> {
    solve_fov_offset_at_level(beta, rho, 0.0)
}

const OFFSET_BRACKET: (f64, f64) = (-10.0, 10.0);

/// Bisection for `softmin_ρ(β, −ε, −ε) = level`.
pub fn solve_fov_offset_at_level(beta: f64, rho: f64, level: f64) -> Result<f64> {
    if !(rho > 0.0) || !(beta > level) {
        return Err(Error::Synthesis(format!(
            "offset root needs rho > 0 and beta > level (rho = {rho}, beta = {beta}, level = {level})"
        )));
    }
    let residual = |eps: f64| {
        let lo = beta.min(-eps);
        let s = (-rho * (beta - lo)).exp() + 2.0 * (-rho * (-eps - lo)).exp();
        lo - s.ln() / rho - level
    };
    let (mut a, mut b) = OFFSET_BRACKET;
    let (ra, rb) = (residual(a), residual(b));
    if ra.signum() == rb.signum() {
        return Err(Error::Synthesis(format!(
            "no sign change for the offset in [{a}, {b}]: residuals {ra:e}, {rb:e}"
        )));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let rm = residual(m);
        if rm == 0.0 || (b - a) < 1e-15 {
            return Ok(m);
        }
        if rm.signum() == ra.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BarrierConfig {
        BarrierConfig {
            max_range: 5.0,
            eps_a: 0.15,
            eps_beta: 0.15,
            rho: 30.0,
            fov: None,
            fov_level: 0.0,
            dynamic: None,
        }
    }

    fn one_point_scan() -> Scan {
        Scan {
            index_k: 0,
            dim: 2,
            pose: Vector3::zeros(),
            heading: 0.0,
            points: vec![ScanPoint::planar(3.0, 0.0)],
        }
    }

    #[test]
    fn semi_axes_example() {
        let b = synthesize_barrier(&one_point_scan(), &cfg()).unwrap();
        let (a, z) = b.terms[0].semi_axes;
        assert!((a - 1.15).abs() < 1e-12);
        assert!((z - (1.15f64 * 1.15 - 1.0).sqrt()).abs() < 1e-12);
        assert!((z - 0.567891).abs() < 1e-6);
    }

    #[test]
    fn ellipse_center_and_detected_point() {
        let b = synthesize_barrier(&one_point_scan(), &cfg()).unwrap();
        let t = &b.terms[0];
        assert_eq!(t.center, Vector3::new(4.0, 0.0, 0.0));
        assert!((t.value(&t.center) + 1.0).abs() < 1e-15);
        let at_point = t.value(&Vector3::new(3.0, 0.0, 0.0));
        assert!((at_point - (1.0 / 1.3225 - 1.0)).abs() < 1e-12);
        assert!(at_point < 0.0);
        assert!(t.value(&Vector3::new(5.0, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn empty_scan_is_region() {
        let scan = Scan::empty(0, 2, Vector3::zeros(), 0.0);
        let b = synthesize_barrier(&scan, &cfg()).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, 0.7, 1.0]);
        let jet = b.eval_jet(&x).unwrap();
        assert!((jet.value - 4.85f64 * 4.85).abs() < 1e-12);
        assert!((jet.value - 23.5225).abs() < 1e-12);
        let p = Vector3::new(1.0, -2.0, 0.0);
        assert!((b.value_at(&p) - (23.5225 - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_point() {
        let mut scan = one_point_scan();
        scan.points[0].range = 5.5;
        assert!(matches!(synthesize_barrier(&scan, &cfg()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn full_range_point_gives_thin_ellipse() {
        let mut scan = one_point_scan();
        scan.points[0].range = 5.0;
        let b = synthesize_barrier(&scan, &cfg()).unwrap();
        assert_eq!(b.terms[0].semi_axes, (0.15, 0.15));
    }

    #[test]
    fn dynamic_margin_enforced() {
        let mut c = cfg();
        c.dynamic = Some((0.2, 1, 0.5));
        assert!(c.validate().is_err());
        c.eps_a = dynamic_margin(0.2, 1, 0.5);
        c.eps_beta = c.eps_a;
        assert!(c.validate().is_ok());
        assert!((c.eps_a - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fov_offset_closed_form() {
        let (beta, rho) = (23.5225, 30.0);
        let eps = solve_fov_offset(beta, rho).unwrap();
        let closed = ((1.0 - (-rho * beta).exp()) / 2.0).ln() / rho;
        assert!((eps - closed).abs() < 1e-12);
        assert!((eps + 0.023105).abs() < 1e-6);
        let residual = crate::smoothmath::stable_softmin(&[beta, -eps, -eps], rho).unwrap();
        assert!(residual.abs() < 1e-10);
    }

    #[test]
    fn fov_offset_large_beta_limit() {
        let eps = solve_fov_offset(1e6, 20.0).unwrap();
        assert!((eps + 2f64.ln() / 20.0).abs() < 1e-12);
    }

    #[test]
    fn fov_offset_errors_without_sign_change() {
        assert!(matches!(solve_fov_offset(-1.0, 30.0), Err(Error::Synthesis(_))));
        assert!(matches!(solve_fov_offset(1.0, 0.0), Err(Error::Synthesis(_))));
    }

    #[test]
    fn limited_fov_region_vanishes_at_pose() {
        let mut c = cfg();
        c.fov = Some(2.0 * std::f64::consts::FRAC_PI_3);
        let scan = Scan::empty(0, 2, Vector3::new(1.0, 2.0, 0.0), 0.3);
        let b = synthesize_barrier(&scan, &c).unwrap();
        assert!(b.value_at(&scan.pose).abs() < 1e-10);
        let ahead = scan.pose + Vector3::new(0.3f64.cos(), 0.3f64.sin(), 0.0) * 2.0;
        let behind = scan.pose - Vector3::new(0.3f64.cos(), 0.3f64.sin(), 0.0) * 2.0;
        assert!(b.value_at(&ahead) > 1.0);
        assert!(b.value_at(&behind) < -1.0);

        c.fov_level = 0.1;
        let b = synthesize_barrier(&scan, &c).unwrap();
        assert!((b.value_at(&scan.pose) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn spatial_rotation_is_orthonormal() {
        let scan = Scan {
            index_k: 3,
            dim: 3,
            pose: Vector3::new(1.0, 1.0, 1.0),
            heading: 0.0,
            points: vec![
                ScanPoint { range: 2.0, azimuth: 0.4, elevation: 0.3 },
                ScanPoint { range: 1.0, azimuth: 5.0, elevation: -std::f64::consts::FRAC_PI_2 },
                ScanPoint { range: 4.0, azimuth: 2.0, elevation: std::f64::consts::FRAC_PI_2 },
            ],
        };
        let b = synthesize_barrier(&scan, &cfg()).unwrap();
        for (t, pt) in b.terms.iter().zip(&scan.points) {
            let r = &t.rotation;
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            // The major axis is aligned with the beam.
            assert!((r.row(0).transpose() - pt.direction()).norm() < 1e-12);
            let c = scan.pose + pt.direction() * pt.range;
            assert!(t.value(&c) < 0.0);
        }
    }

    #[test]
    fn jet_vanishes_off_position() {
        let b = synthesize_barrier(&one_point_scan(), &cfg()).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.5, -0.3, 2.0]);
        let jet = b.eval_jet(&x).unwrap();
        assert_eq!((jet.dt, jet.dtt), (0.0, 0.0));
        assert_eq!(jet.grad[2], 0.0);
        assert_eq!(jet.grad[3], 0.0);
        assert_eq!(jet.hess.column(3).amax(), 0.0);
        assert!((jet.value - b.value_at(&Vector3::new(1.0, 0.5, 0.0))).abs() < 1e-12);
    }
}
