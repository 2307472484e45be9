//! Randomized property suites, runnable outside the test harness.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::barrier::{synthesize_barrier, BarrierConfig};
use crate::composer::{ClassK, CompositeBarrier, CompositeConfig, CompositionVariant, Psi0, PsiChain};
use crate::controller::{compute_control, constraint_value, qp_oracle, safety_objective, FilterConfig, FilterMode, QuadCost};
use crate::error::{Error, Result};
use crate::sim::{run_in_world, PlantConfig, Rates, RunOptions, ScenarioConfig};
use crate::smoothmath::{
    smoothstep_jet, softblend_jet, stable_softmax, stable_softmin, BlendMode, ScalarJet2, SmoothstepSpec,
};
use crate::systems::{SystemModel, UnicycleGains};
use crate::world::{LidarSpec, StaticObstacle, World, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Softmath,
    Jets,
    Controller,
    Invariance,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 5] = ["softmath", "jets", "controller", "invariance", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmath" => Ok(Suite::Softmath),
            "jets" => Ok(Suite::Jets),
            "controller" => Ok(Suite::Controller),
            "invariance" => Ok(Suite::Invariance),
            "all" => Ok(Suite::All),
            _ => Err(Error::invalid(format!(
                "unknown suite {s:?}; expected one of {}",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub suite: &'static str,
    pub name: &'static str,
    pub cases: usize,
    /// First counterexample, if any.
    pub failure: Option<String>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "PASS {}/{} ({} cases)", self.suite, self.name, self.cases),
            Some(c) => write!(f, "FAIL {}/{} ({} cases): {c}", self.suite, self.name, self.cases),
        }
    }
}

type Check = std::result::Result<(), String>;

fn property(suite: &'static str, name: &'static str, cases: usize, mut case: impl FnMut(usize) -> Check) -> PropertyReport {
    let failure = (0..cases).find_map(|i| case(i).err().map(|e| format!("case {i}: {e}")));
    PropertyReport {
        suite,
        name,
        cases,
        failure,
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<PropertyReport> {
    match suite {
        Suite::Softmath => softmath(seed),
        Suite::Jets => jets(seed),
        Suite::Controller => controller(seed),
        Suite::Invariance => invariance(seed),
        Suite::All => [Suite::Softmath, Suite::Jets, Suite::Controller, Suite::Invariance]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_vec<R: Rng>(rng: &mut R, scale: f64) -> Vec<f64> {
    let n = rng.random_range(1..=20);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub const KAPPAS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

fn softmath(seed: u64) -> Vec<PropertyReport> {
    let s = "softmath";
    let mut out = Vec::new();

    let mut rng = rng_for(seed, 1);
    out.push(property(s, "soft-min/max bounds", 10_000, |_| {
        let z = random_vec(&mut rng, 100.0);
        let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
        let logn = (z.len() as f64).ln();
        for kappa in KAPPAS {
            let smax = stable_softmax(&z, kappa).map_err(|e| e.to_string())?;
            let smin = stable_softmin(&z, kappa).map_err(|e| e.to_string())?;
            if !(smax <= hi + slack && smax >= hi - logn / kappa - slack) {
                return Err(format!("softmax {smax} outside [{}, {hi}] for z = {z:?}, kappa = {kappa}", hi - logn / kappa));
            }
            if !(smin <= lo + slack && smin >= lo - logn / kappa - slack) {
                return Err(format!("softmin {smin} outside [{}, {lo}] for z = {z:?}, kappa = {kappa}", lo - logn / kappa));
            }
        }
        Ok(())
    }));

    let mut rng = rng_for(seed, 2);
    out.push(property(s, "no overflow for |z| <= 1e6", 10_000, |_| {
        let z = random_vec(&mut rng, 1e6);
        for kappa in KAPPAS {
            let a = stable_softmax(&z, kappa).map_err(|e| e.to_string())?;
            let b = stable_softmin(&z, kappa).map_err(|e| e.to_string())?;
            if !a.is_finite() || !b.is_finite() {
                return Err(format!("non-finite result for z = {z:?}, kappa = {kappa}"));
            }
        }
        Ok(())
    }));

    let mut rng = rng_for(seed, 3);
    out.push(property(s, "shifted form equals the naive form", 10_000, |_| {
        let z = random_vec(&mut rng, 5.0);
        for kappa in KAPPAS {
            let sum: f64 = z.iter().map(|&v| (kappa * v).exp()).sum();
            if !sum.is_finite() || sum == 0.0 {
                continue;
            }
            let naive = (sum.ln() - (z.len() as f64).ln()) / kappa;
            let stable = stable_softmax(&z, kappa).map_err(|e| e.to_string())?;
            if (naive - stable).abs() > 1e-10 * naive.abs().max(1.0) {
                return Err(format!("naive {naive} vs stable {stable} for z = {z:?}, kappa = {kappa}"));
            }
        }
        Ok(())
    }));

    let mut rng = rng_for(seed, 4);
    out.push(property(s, "blend weights are convex", 2_000, |_| {
        let z = random_vec(&mut rng, 10.0);
        let args: Vec<ScalarJet2> = z.iter().map(|&v| ScalarJet2::time_only(v, 0.0, 0.0, 1)).collect();
        for mode in [BlendMode::Max, BlendMode::Min] {
            let blend = softblend_jet(&args, 30.0, mode).map_err(|e| e.to_string())?;
            let sum: f64 = blend.weights.iter().sum();
            if blend.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(format!("weights {:?} for z = {z:?}", blend.weights));
            }
        }
        Ok(())
    }));

    let specs: Vec<SmoothstepSpec> = (1..=4)
        .flat_map(|r| [SmoothstepSpec::polynomial(r, 2.0), SmoothstepSpec::polynomial(r, 1.0)])
        .chain([SmoothstepSpec::sinusoidal(2, 2.0), SmoothstepSpec::sinusoidal(1, 1.0)])
        .collect::<Result<_>>()
        .expect("valid smoothstep specs");
    out.push(property(s, "smoothstep endpoints and monotonicity", specs.len(), |i| {
        let spec = &specs[i];
        let (e0, d0, dd0) = smoothstep_jet(0.0, spec);
        let (e1, d1, dd1) = smoothstep_jet(1.0, spec);
        if e0.abs() > 1e-12 || (e1 - 1.0).abs() > 1e-12 || d0.abs() > 1e-9 || d1.abs() > 1e-9 {
            return Err(format!("{spec:?}: endpoints ({e0}, {d0}) and ({e1}, {d1})"));
        }
        if spec.order() >= 2 && (dd0.abs() > 1e-9 || dd1.abs() > 1e-9) {
            return Err(format!("{spec:?}: second derivatives {dd0}, {dd1} at the endpoints"));
        }
        let mut prev = e0;
        for j in 1..=200 {
            let (e, d, _) = smoothstep_jet(j as f64 / 200.0, spec);
            if e < prev - 1e-14 || d < -1e-12 {
                return Err(format!("{spec:?}: not monotone near {}", j as f64 / 200.0));
            }
            prev = e;
        }
        Ok(())
    }));
    out
}

/// A composite barrier built along a random walk with a query `(t, x)`.
pub struct JetFixture {
    pub composite: CompositeBarrier,
    pub model: SystemModel,
    pub t: f64,
    pub x: DVector<f64>,
}

fn random_world<R: Rng>(rng: &mut R, dim: usize) -> World {
    let mut spec = WorldSpec {
        dim,
        bounds: crate::world::Bounds {
            min: vec![-10.0; dim],
            max: vec![10.0; dim],
        },
        static_obstacles: Vec::new(),
        dynamic: Vec::new(),
    };
    for _ in 0..6 {
        spec.static_obstacles.push(if dim == 2 {
            StaticObstacle::Circle {
                center: [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)],
                radius: rng.random_range(0.3..1.2),
            }
        } else {
            StaticObstacle::Sphere {
                center: [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0)],
                radius: rng.random_range(0.4..1.2),
            }
        });
    }
    World::from_spec(&spec).expect("valid random world")
}

fn free_point<R: Rng>(rng: &mut R, world: &World, near: Option<(&Vector3<f64>, f64)>) -> Vector3<f64> {
    loop {
        let mut p = Vector3::zeros();
        for i in 0..world.dim {
            p[i] = match near {
                Some((c, r)) => c[i] + rng.random_range(-r..r),
                None => rng.random_range(-7.0..7.0),
            };
        }
        if world.contains(&p) && world.min_clearance(0.0, &p) > 0.3 {
            return p;
        }
    }
}

fn default_composite(window: usize, variant: CompositionVariant) -> CompositeConfig {
    CompositeConfig {
        window,
        period: 0.2,
        kappa: 30.0,
        eta: SmoothstepSpec::polynomial(2, 2.0).expect("valid smoothstep"),
        variant,
        alpha0: ClassK::Linear { gain: 35.0 },
        order: 2,
    }
}

/// Builds a random fixture: `dim` selects the unicycle (2) or the spatial
/// double integrator (3).
pub fn jet_fixture<R: Rng>(
    rng: &mut R,
    dim: usize,
    fov: Option<f64>,
    window: usize,
    variant: CompositionVariant,
) -> Result<JetFixture> {
    let world = random_world(rng, dim);
    let lidar = LidarSpec {
        max_range: 5.0,
        beams: match (dim, fov) {
            (3, _) => 300,
            (_, Some(_)) => 30,
            _ => 100,
        },
        fov,
        elevation_rows: 10,
    };
    let bcfg = BarrierConfig {
        max_range: 5.0,
        eps_a: 0.15,
        eps_beta: 0.15,
        rho: 30.0,
        fov,
        fov_level: if fov.is_some() { 0.1 } else { 0.0 },
        dynamic: None,
    };
    let mut composite = CompositeBarrier::new(default_composite(window, variant))?;
    let epochs = window as u64 + 2;
    let mut pose = free_point(rng, &world, None);
    let mut heading: f64 = rng.random_range(-3.0..3.0);
    for k in 0..=epochs {
        let scan = world.ray_cast(0.0, k, &pose, heading, &lidar)?;
        composite.push(synthesize_barrier(&scan, &bcfg)?, k)?;
        if k < epochs {
            pose = free_point(rng, &world, Some((&pose, 0.4)));
            heading += rng.random_range(-0.3..0.3);
        }
    }
    let q = free_point(rng, &world, Some((&pose, 1.0)));
    let t = (epochs as f64 + rng.random_range(0.05..0.95)) * 0.2;
    let (model, x) = if dim == 2 {
        let x = DVector::from_vec(vec![q[0], q[1], rng.random_range(-1.0..3.0), heading + rng.random_range(-0.5..0.5)]);
        (SystemModel::unicycle(), x)
    } else {
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        (SystemModel::double_integrator(3), DVector::from_vec(vec![q[0], q[1], q[2], v[0], v[1], v[2]]))
    };
    Ok(JetFixture { composite, model, t, x })
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    num / b.iter().map(|v| v.abs()).fold(1.0, f64::max)
}

pub const FD_STEP: f64 = 1e-5;

fn central<F: Fn(&DVector<f64>) -> Vec<f64>>(f: F, x: &DVector<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += FD_STEP;
        xm[i] -= FD_STEP;
        out.extend(f(&xp).iter().zip(f(&xm)).map(|(a, b)| (a - b) / (2.0 * FD_STEP)));
    }
    out
}

/// Largest relative errors of the analytic gradients and Hessians of `b_k`
/// and `ψ₀`, and of `∇ψ₁`, against central differences.
pub fn jet_errors(fx: &JetFixture) -> Result<[(&'static str, f64); 5]> {
    let (t, x, c) = (fx.t, &fx.x, &fx.composite);
    let b = c.window().next().ok_or_else(|| Error::Sequencing("empty window".into()))?;
    let bj = b.eval_jet(x)?;
    let pj = c.eval_psi0(t, x)?.jet;
    let chain = c.eval_chain(t, x, &fx.model)?;
    let val = |r: Result<ScalarJet2>| r.map(|j| j.value).unwrap_or(f64::NAN);
    let grad = |r: Result<ScalarJet2>| r.map(|j| j.grad.as_slice().to_vec()).unwrap_or_default();
    let psi0 = |y: &DVector<f64>| c.eval_psi0(t, y).map(|p| p.jet);
    // Finite differences of a row-major matrix give rows `∂/∂x_i`; the
    // Hessians are symmetric so the layouts agree.
    Ok([
        ("grad b_k", relative_error(bj.grad.as_slice(), &central(|y| vec![val(b.eval_jet(y))], x))),
        ("hess b_k", relative_error(bj.hess.as_slice(), &central(|y| grad(b.eval_jet(y)), x))),
        ("grad psi0", relative_error(pj.grad.as_slice(), &central(|y| vec![val(psi0(y))], x))),
        ("hess psi0", relative_error(pj.hess.as_slice(), &central(|y| grad(psi0(y)), x))),
        (
            "grad psi1",
            relative_error(
                chain.grad_psi1.as_slice(),
                &central(|y| vec![c.eval_chain(t, y, &fx.model).map(|ch| ch.psi1).unwrap_or(f64::NAN)], x),
            ),
        ),
    ])
}

pub const JET_TOLERANCE: f64 = 1e-5;

fn jets(seed: u64) -> Vec<PropertyReport> {
    let s = "jets";
    let cases: [(&'static str, usize, Option<f64>, usize, CompositionVariant, u64); 4] = [
        ("unicycle, full circle", 2, None, 4, CompositionVariant::Eq12, 11),
        ("unicycle, 120 degree field of view", 2, Some(2.0 * std::f64::consts::FRAC_PI_3), 4, CompositionVariant::Eq12, 12),
        ("unicycle, alternative composition", 2, None, 1, CompositionVariant::Eq46, 13),
        ("double integrator, spatial scan", 3, None, 2, CompositionVariant::Eq12, 14),
    ];
    cases
        .iter()
        .map(|&(name, dim, fov, window, variant, stream)| {
            let mut rng = rng_for(seed, stream);
            property(s, name, 200, |_| {
                let fx = jet_fixture(&mut rng, dim, fov, window, variant).map_err(|e| e.to_string())?;
                let errs = jet_errors(&fx).map_err(|e| e.to_string())?;
                match errs.iter().find(|(_, e)| !(*e < JET_TOLERANCE)) {
                    Some((what, e)) => Err(format!("{what}: relative error {e:.3e} at t = {}, x = {:?}", fx.t, fx.x.as_slice())),
                    None => Ok(()),
                }
            })
        })
        .collect()
}

/// A random filter query: chain data, an SPD cost, and a filter config.
pub fn random_filter_case<R: Rng>(rng: &mut R) -> (PsiChain, QuadCost, FilterConfig) {
    let m = rng.random_range(1..=4);
    let psi1 = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-2.0..10.0) };
    let lg = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
    let chain = PsiChain {
        psi0: Psi0 {
            jet: ScalarJet2::zeros(m),
            mu: vec![1.0],
            components: Vec::new(),
            eta: 0.0,
            sharpness_spread: 0.0,
        },
        psi1,
        dpsi1_dt: rng.random_range(-20.0..20.0),
        grad_psi1: DVector::zeros(m),
        lf_psi1: rng.random_range(-50.0..50.0),
        lg_psi1: lg.clone(),
        lg_psi0: DVector::zeros(m),
        lglf_convex: lg,
        degenerate_input_gain: false,
        segment_hits_origin: None,
    };
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let q = &a * a.transpose() + DMatrix::identity(m, m) * rng.random_range(0.1..2.0);
    let c = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
    let cfg = FilterConfig {
        gamma: rng.random_range(1.0..500.0),
        alpha: ClassK::Linear {
            gain: rng.random_range(0.5..80.0),
        },
        mode: FilterMode::Verification,
    };
    (chain, QuadCost { q, c }, cfg)
}

fn controller(seed: u64) -> Vec<PropertyReport> {
    let s = "controller";
    let mut out = Vec::new();

    let mut rng = rng_for(seed, 21);
    out.push(property(s, "closed form matches the KKT oracle", 1_000, |_| {
        let (chain, cost, cfg) = random_filter_case(&mut rng);
        let cf = compute_control(&chain, &cost, &cfg).map_err(|e| e.to_string())?;
        let (u, mu) = qp_oracle(&chain, &cost, &cfg).map_err(|e| e.to_string())?;
        let du = (&cf.u_star - &u).amax();
        if du > 1e-6 || (cf.mu_star - mu).abs() > 1e-6 {
            return Err(format!("u* = {:?} vs {:?}, mu* = {} vs {mu}", cf.u_star.as_slice(), u.as_slice(), cf.mu_star));
        }
        Ok(())
    }));

    let mut rng = rng_for(seed, 22);
    out.push(property(s, "no feasible sample beats the minimizer", 1_000, |_| {
        let (chain, cost, cfg) = random_filter_case(&mut rng);
        let cf = compute_control(&chain, &cost, &cfg).map_err(|e| e.to_string())?;
        let best = safety_objective(&cost, cfg.gamma, &cf.u_star, cf.mu_star);
        let m = cost.c.len();
        let lg = &chain.lg_psi1;
        let norm2 = lg.norm_squared() + chain.psi1 * chain.psi1;
        for _ in 0..1_000 {
            let mut u = &cf.u_star + DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let mut mu = cf.mu_star + rng.random_range(-2.0..2.0);
            let g = constraint_value(&chain, &cfg.alpha, &u, mu).map_err(|e| e.to_string())?;
            if g < 0.0 {
                if norm2 == 0.0 {
                    continue;
                }
                u -= lg * (g / norm2);
                mu -= chain.psi1 * g / norm2;
            }
            let val = safety_objective(&cost, cfg.gamma, &u, mu);
            if val < best - 1e-9 * best.abs().max(1.0) {
                return Err(format!("sample u = {:?}, mu = {mu} gives {val} < {best}", u.as_slice()));
            }
        }
        Ok(())
    }));

    let mut rng = rng_for(seed, 23);
    out.push(property(s, "constraint value equals max(0, omega)", 1_000, |_| {
        let (chain, cost, cfg) = random_filter_case(&mut rng);
        let cf = compute_control(&chain, &cost, &cfg).map_err(|e| e.to_string())?;
        let want = cf.omega.max(0.0);
        if (cf.constraint_value - want).abs() > 1e-9 * want.abs().max(cf.omega.abs()).max(1.0) {
            return Err(format!("constraint {} vs max(0, omega) = {want}", cf.constraint_value));
        }
        Ok(())
    }));
    out
}

fn invariance_world<R: Rng>(rng: &mut R) -> (World, [f64; 4], [f64; 2]) {
    let mut spec = WorldSpec {
        dim: 2,
        bounds: crate::world::Bounds {
            min: vec![-2.0, -2.0],
            max: vec![18.0, 14.0],
        },
        static_obstacles: Vec::new(),
        dynamic: Vec::new(),
    };
    for _ in 0..4 {
        spec.static_obstacles.push(StaticObstacle::Circle {
            center: [rng.random_range(5.0..11.0), rng.random_range(1.0..9.0)],
            radius: rng.random_range(0.3..0.9),
        });
    }
    let world = World::from_spec(&spec).expect("valid random world");
    let start = loop {
        let p = [rng.random_range(0.0..3.0), rng.random_range(0.0..10.0)];
        if world.min_clearance(0.0, &Vector3::new(p[0], p[1], 0.0)) > 1.0 {
            break p;
        }
    };
    let goal = loop {
        let g = [rng.random_range(13.0..16.0), rng.random_range(0.0..10.0)];
        if world.min_clearance(0.0, &Vector3::new(g[0], g[1], 0.0)) > 1.0 {
            break g;
        }
    };
    let heading = rng.random_range(-1.0..1.0);
    (world, [start[0], start[1], 0.0, heading], goal)
}

fn invariance_config(x0: [f64; 4], goal: [f64; 2], variant: CompositionVariant) -> ScenarioConfig {
    ScenarioConfig {
        name: "invariance".into(),
        world: Default::default(),
        duration: 8.0,
        seed: 0,
        plant: PlantConfig::Unicycle {
            x0,
            goal,
            gains: UnicycleGains::default(),
        },
        lidar: LidarSpec {
            max_range: 5.0,
            beams: 100,
            fov: None,
            elevation_rows: 1,
        },
        barrier: crate::sim::BarrierParams {
            eps_a: 0.15,
            eps_beta: 0.15,
            rho: 30.0,
            fov_level: 0.0,
            speed_bound: None,
        },
        composer: default_composite(if variant == CompositionVariant::Eq46 { 1 } else { 4 }, variant),
        filter: FilterConfig {
            gamma: 200.0,
            alpha: ClassK::Linear { gain: 50.0 },
            mode: FilterMode::Simulation,
        },
        rates: Rates::default(),
        montecarlo: None,
    }
}

fn invariance(seed: u64) -> Vec<PropertyReport> {
    let s = "invariance";
    let mut out = Vec::new();
    for (name, variant, stream) in [
        ("closed loop stays safe (composition eq12)", CompositionVariant::Eq12, 31),
        ("closed loop stays safe (composition eq46)", CompositionVariant::Eq46, 32),
    ] {
        let mut rng = rng_for(seed, stream);
        out.push(property(s, name, 12, |_| {
            let (world, x0, goal) = invariance_world(&mut rng);
            let cfg = invariance_config(x0, goal, variant);
            let run = match run_in_world(&cfg, &world, &RunOptions::default()) {
                Ok(r) => r,
                Err(Error::Precondition { .. }) => return Ok(()),
                Err(e) => return Err(e.to_string()),
            };
            let m = &run.metrics;
            if !(m.min_psi0 > 0.0 && m.min_clearance > 0.0) {
                return Err(format!(
                    "x0 = {x0:?}, goal = {goal:?}: min psi0 = {:.4e}, min clearance = {:.4e}",
                    m.min_psi0, m.min_clearance
                ));
            }
            for r in &run.log.rows {
                let sum: f64 = r.weights.iter().sum();
                if r.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-12 {
                    return Err(format!("weights {:?} at t = {}", r.weights, r.t));
                }
            }
            Ok(())
        }));
    }

    let mut rng = rng_for(seed, 33);
    out.push(property(s, "compositions agree for a single-step window", 1_000, |_| {
        let fx = jet_fixture(&mut rng, 2, None, 1, CompositionVariant::Eq12).map_err(|e| e.to_string())?;
        let mut alt = CompositeBarrier::new(default_composite(1, CompositionVariant::Eq46)).map_err(|e| e.to_string())?;
        let k = fx.composite.current_k().unwrap_or(0);
        let barriers: Vec<_> = fx.composite.window().cloned().collect();
        // Rebuild the same window: oldest first.
        alt.push(barriers[1].clone(), 0).map_err(|e| e.to_string())?;
        for j in 1..k {
            alt.push(barriers[1].clone(), j).map_err(|e| e.to_string())?;
        }
        alt.push(barriers[0].clone(), k).map_err(|e| e.to_string())?;
        let a = fx.composite.eval_psi0(fx.t, &fx.x).map_err(|e| e.to_string())?.jet.value;
        let b = alt.eval_psi0(fx.t, &fx.x).map_err(|e| e.to_string())?.jet.value;
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(format!("eq12 {a} vs eq46 {b} at t = {}", fx.t));
        }
        Ok(())
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for name in Suite::NAMES {
            assert!(name.parse::<Suite>().is_ok());
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn softmath_suite_passes() {
        let reports = run_suite(Suite::Softmath, 5);
        for r in &reports {
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn controller_suite_passes() {
        for r in run_suite(Suite::Controller, 5) {
            assert!(r.passed(), "{r}");
        }
    }
}
