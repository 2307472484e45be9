//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safenav::barrier::{synthesize_barrier, BarrierConfig};
use safenav::composer::{ClassK, CompositeBarrier, CompositeConfig, CompositionVariant};
use safenav::smoothmath::SmoothstepSpec;
use safenav::systems::SystemModel;
use safenav::world::{LidarSpec, StaticObstacle, World, WorldSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn planar_world<R: Rng>(rng: &mut R) -> World {
    let mut spec: WorldSpec = toml::from_str(
        "dim = 2\n[bounds]\nmin = [-10.0, -10.0]\nmax = [10.0, 10.0]\n",
    )
    .unwrap();
    for _ in 0..6 {
        spec.static_obstacles.push(StaticObstacle::Circle {
            center: [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)],
            radius: rng.random_range(0.3..1.2),
        });
    }
    let (cx, cy) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    spec.static_obstacles.push(StaticObstacle::Polygon {
        vertices: vec![[cx, cy], [cx + 1.0, cy], [cx + 1.0, cy + 0.6], [cx, cy + 0.6]],
    });
    World::from_spec(&spec).unwrap()
}

pub fn spatial_world<R: Rng>(rng: &mut R) -> World {
    let mut spec: WorldSpec = toml::from_str(
        "dim = 3\n[bounds]\nmin = [-10.0, -10.0, -10.0]\nmax = [10.0, 10.0, 10.0]\n",
    )
    .unwrap();
    for _ in 0..5 {
        spec.static_obstacles.push(StaticObstacle::Sphere {
            center: [
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.0..3.0),
            ],
            radius: rng.random_range(0.4..1.2),
        });
    }
    let (cx, cy) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
    spec.static_obstacles.push(StaticObstacle::Prism {
        vertices: vec![[cx, cy], [cx + 1.0, cy], [cx + 1.0, cy + 1.0], [cx, cy + 1.0]],
        z_min: -2.0,
        z_max: 2.0,
    });
    World::from_spec(&spec).unwrap()
}

pub fn barrier_config(fov: Option<f64>) -> BarrierConfig {
    BarrierConfig {
        max_range: 5.0,
        eps_a: 0.15,
        eps_beta: 0.15,
        rho: 30.0,
        fov,
        fov_level: if fov.is_some() { 0.1 } else { 0.0 },
        dynamic: None,
    }
}

pub fn composite_config(window: usize, variant: CompositionVariant) -> CompositeConfig {
    CompositeConfig {
        window,
        period: 0.2,
        kappa: 30.0,
        eta: SmoothstepSpec::polynomial(2, 2.0).unwrap(),
        variant,
        alpha0: ClassK::linear(35.0).unwrap(),
        order: 2,
    }
}

/// A composite barrier built from scans along a random walk, plus a query
/// time inside the current epoch and a state near the last pose.
pub struct Fixture {
    pub world: World,
    pub composite: CompositeBarrier,
    pub model: SystemModel,
    pub t: f64,
    pub x: DVector<f64>,
}

pub struct FixtureSpec {
    pub dim: usize,
    pub fov: Option<f64>,
    pub window: usize,
    pub variant: CompositionVariant,
    pub epochs: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            fov: None,
            window: 4,
            variant: CompositionVariant::Eq12,
            epochs: 6,
        }
    }
}

fn free_point<R: Rng>(rng: &mut R, world: &World, dim: usize, near: Option<(&Vector3<f64>, f64)>) -> Vector3<f64> {
    loop {
        let mut p = Vector3::zeros();
        for i in 0..dim {
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

pub fn fixture<R: Rng>(rng: &mut R, spec: &FixtureSpec) -> Fixture {
    let world = if spec.dim == 2 { planar_world(rng) } else { spatial_world(rng) };
    let lidar = LidarSpec {
        max_range: 5.0,
        beams: if spec.dim == 2 { if spec.fov.is_some() { 30 } else { 100 } } else { 300 },
        fov: spec.fov,
        elevation_rows: 10,
    };
    let bcfg = barrier_config(spec.fov);
    let mut composite = CompositeBarrier::new(composite_config(spec.window, spec.variant)).unwrap();
    let mut pose = free_point(rng, &world, spec.dim, None);
    let mut heading = rng.random_range(-3.0..3.0);
    for k in 0..=spec.epochs {
        let scan = world.ray_cast(0.0, k, &pose, heading, &lidar).unwrap();
        composite.push(synthesize_barrier(&scan, &bcfg).unwrap(), k).unwrap();
        if k < spec.epochs {
            pose = free_point(rng, &world, spec.dim, Some((&pose, 0.4)));
            heading += rng.random_range(-0.3..0.3);
        }
    }
    let q = free_point(rng, &world, spec.dim, Some((&pose, 1.0)));
    let tau = rng.random_range(0.05..0.95);
    let t = (spec.epochs as f64 + tau) * 0.2;
    let (model, x) = if spec.dim == 2 {
        let x = DVector::from_vec(vec![q[0], q[1], rng.random_range(-1.0..3.0), heading + rng.random_range(-0.5..0.5)]);
        (SystemModel::unicycle(), x)
    } else {
        let mut x = DVector::zeros(6);
        for i in 0..3 {
            x[i] = q[i];
            x[3 + i] = rng.random_range(-1.5..1.5);
        }
        (SystemModel::double_integrator(3), x)
    };
    Fixture {
        world,
        composite,
        model,
        t,
        x,
    }
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    num / den
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_grad(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector map, row `i` = ∂/∂x_i.
pub fn fd_jac(f: &dyn Fn(&DVector<f64>) -> Vec<f64>, x: &DVector<f64>, h: f64) -> Vec<Vec<f64>> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            f(&xp).iter().zip(f(&xm)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        })
        .collect()
}
