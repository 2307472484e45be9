//! Ground-truth environments: static shapes, disks moving along waypoint
//! paths, range-scan simulation, and signed clearance.
//!
//! Planar worlds use the first two coordinates of every `Vector3` and keep
//! the third at zero.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::barrier::{Scan, ScanPoint};
use crate::error::{Error, Result};

const DISCRIMINANT_TOL: f64 = 1e-12;
const PARALLEL_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum StaticObstacle {
    Circle { center: [f64; 2], radius: f64 },
    /// Convex polygon; vertices in either winding.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Open polyline of zero-thickness walls.
    Segments { points: Vec<[f64; 2]> },
    Sphere { center: [f64; 3], radius: f64 },
    /// Convex polygon footprint extruded over `[z_min, z_max]`.
    Prism { vertices: Vec<[f64; 2]>, z_min: f64, z_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub radius: f64,
    /// Positions (2 or 3 coordinates) visited in order at constant speed.
    pub waypoints: Vec<Vec<f64>>,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Serialized world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub dim: usize,
    pub bounds: Bounds,
    #[serde(default, rename = "static")]
    pub static_obstacles: Vec<StaticObstacle>,
    #[serde(default)]
    pub dynamic: Vec<DynamicObstacle>,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Ball { center: Vector3<f64>, radius: f64 },
    Convex(ConvexPolygon),
    Walls(Vec<(Vector2<f64>, Vector2<f64>)>),
    Prism { footprint: ConvexPolygon, z_min: f64, z_max: f64 },
}

/// Counter-clockwise convex polygon with outward edge normals.
#[derive(Debug, Clone, PartialEq)]
struct ConvexPolygon {
    vertices: Vec<Vector2<f64>>,
    normals: Vec<Vector2<f64>>,
}

impl ConvexPolygon {
    fn new(raw: &[[f64; 2]]) -> Result<Self> {
        if raw.len() < 3 {
            return Err(Error::config("polygon needs at least three vertices"));
        }
        let mut vertices: Vec<Vector2<f64>> = raw.iter().map(|v| Vector2::new(v[0], v[1])).collect();
        let n = vertices.len();
        let area2: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        if area2.abs() < 1e-12 {
            return Err(Error::config("degenerate polygon"));
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        let normals: Vec<Vector2<f64>> = (0..n)
            .map(|i| {
                let e = vertices[(i + 1) % n] - vertices[i];
                Vector2::new(e.y, -e.x).normalize()
            })
            .collect();
        for i in 0..n {
            for (j, v) in vertices.iter().enumerate() {
                if normals[i].dot(&(v - vertices[i])) > 1e-9 && j != i {
                    return Err(Error::config("polygon is not convex"));
                }
            }
        }
        Ok(Self { vertices, normals })
    }

    fn sdf(&self, p: &Vector2<f64>) -> f64 {
        let n = self.vertices.len();
        let mut dist = f64::INFINITY;
        let mut inside = true;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            dist = dist.min(point_segment_distance(p, &a, &b));
            if self.normals[i].dot(&(p - a)) > 0.0 {
                inside = false;
            }
        }
        if inside {
            -dist
        } else {
            dist
        }
    }

    /// Entry/exit parameters of the planar ray against the polygon slab set.
    fn clip(&self, o: &Vector2<f64>, u: &Vector2<f64>, mut t_in: f64, mut t_out: f64) -> Option<(f64, f64)> {
        for (v, n) in self.vertices.iter().zip(&self.normals) {
            let num = n.dot(&(v - o));
            let den = n.dot(u);
            if den.abs() < PARALLEL_TOL {
                if num < 0.0 {
                    return None;
                }
                continue;
            }
            let t = num / den;
            if den < 0.0 {
                t_in = t_in.max(t);
            } else {
                t_out = t_out.min(t);
            }
        }
        (t_in <= t_out).then_some((t_in, t_out))
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Smallest nonnegative `s` with `|o + s u − c| = r`; tangential rays count.
fn ray_ball(o: &Vector3<f64>, u: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = u.dot(&oc);
    let cc = oc.norm_squared() - r * r;
    let mut disc = b * b - cc;
    if disc < -DISCRIMINANT_TOL {
        return None;
    }
    disc = disc.max(0.0);
    let sq = disc.sqrt();
    let (s0, s1) = (-b - sq, -b + sq);
    if s0 >= 0.0 {
        Some(s0)
    } else if s1 >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

impl Shape {
    fn ray(&self, o: &Vector3<f64>, u: &Vector3<f64>) -> Option<f64> {
        match self {
            Shape::Ball { center, radius } => ray_ball(o, u, center, *radius),
            Shape::Convex(poly) => {
                let (o2, u2) = (o.xy(), u.xy());
                let (t_in, t_out) = poly.clip(&o2, &u2, f64::NEG_INFINITY, f64::INFINITY)?;
                (t_out >= 0.0).then_some(t_in.max(0.0))
            }
            Shape::Walls(segs) => {
                let (o2, u2) = (o.xy(), u.xy());
                segs.iter()
                    .filter_map(|(a, b)| {
                        let e = b - a;
                        let den = cross2(&u2, &e);
                        if den.abs() < PARALLEL_TOL {
                            return None;
                        }
                        let w = a - o2;
                        let s = cross2(&w, &e) / den;
                        let t = cross2(&w, &u2) / den;
                        (s >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&t)).then_some(s)
                    })
                    .min_by(f64::total_cmp)
            }
            Shape::Prism { footprint, z_min, z_max } => {
                let (mut t_in, mut t_out) = (f64::NEG_INFINITY, f64::INFINITY);
                if u.z.abs() < PARALLEL_TOL {
                    if o.z < *z_min || o.z > *z_max {
                        return None;
                    }
                } else {
                    let (ta, tb) = ((z_min - o.z) / u.z, (z_max - o.z) / u.z);
                    t_in = ta.min(tb);
                    t_out = ta.max(tb);
                }
                let (t_in, t_out) = footprint.clip(&o.xy(), &u.xy(), t_in, t_out)?;
                (t_out >= 0.0).then_some(t_in.max(0.0))
            }
        }
    }

    fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Ball { center, radius } => (p - center).norm() - radius,
            Shape::Convex(poly) => poly.sdf(&p.xy()),
            Shape::Walls(segs) => {
                let p2 = p.xy();
                segs.iter()
                    .map(|(a, b)| point_segment_distance(&p2, a, b))
                    .fold(f64::INFINITY, f64::min)
            }
            Shape::Prism { footprint, z_min, z_max } => {
                let d2 = footprint.sdf(&p.xy());
                let dz = (z_min - p.z).max(p.z - z_max);
                let outside = d2.max(0.0).hypot(dz.max(0.0));
                outside + d2.max(dz).min(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Mover {
    radius: f64,
    waypoints: Vec<Vector3<f64>>,
    /// Arrival time at each waypoint.
    times: Vec<f64>,
    speed: f64,
}

impl Mover {
    fn position(&self, t: f64) -> Vector3<f64> {
        let last = self.waypoints.len() - 1;
        if t <= 0.0 || last == 0 {
            return self.waypoints[0];
        }
        if t >= self.times[last] {
            return self.waypoints[last];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let span = self.times[i + 1] - self.times[i];
        let s = if span > 0.0 { (t - self.times[i]) / span } else { 1.0 };
        self.waypoints[i] + (self.waypoints[i + 1] - self.waypoints[i]) * s
    }
}

/// Sensor description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub max_range: f64,
    /// `ℓ̄`: maximum number of beams and therefore of returned points.
    pub beams: usize,
    /// Planar field of view; `None` is a full circle.
    #[serde(default)]
    pub fov: Option<f64>,
    /// Number of elevation rows for spatial scans.
    #[serde(default = "default_rows")]
    pub elevation_rows: usize,
}

fn default_rows() -> usize {
    10
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beams < 1 {
            return Err(Error::config("lidar needs at least one beam"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::config("lidar max_range must be positive"));
        }
        if self.elevation_rows < 1 || self.elevation_rows > self.beams {
            return Err(Error::config("elevation_rows must lie in 1..=beams"));
        }
        Ok(())
    }

    /// Planar beam azimuths: equally spaced, the first at `heading − fov/2`.
    pub fn planar_azimuths(&self, heading: f64) -> Vec<f64> {
        let tau = std::f64::consts::TAU;
        let fov = self.fov.unwrap_or(tau);
        let n = self.beams;
        let full = fov >= tau - 1e-12;
        let step = if full {
            fov / n as f64
        } else if n > 1 {
            fov / (n - 1) as f64
        } else {
            0.0
        };
        let start = if !full && n == 1 { heading } else { heading - 0.5 * fov };
        (0..n).map(|i| (start + step * i as f64).rem_euclid(tau)).collect()
    }

    /// Spatial beam directions as `(azimuth, elevation)`: `beams / rows`
    /// azimuths on each of `rows` elevation rows at row centres.
    pub fn spatial_directions(&self) -> Vec<(f64, f64)> {
        let rows = self.elevation_rows;
        let cols = self.beams / rows;
        let mut out = Vec::with_capacity(rows * cols);
        for j in 0..rows {
            let el = -std::f64::consts::FRAC_PI_2 + (j as f64 + 0.5) * std::f64::consts::PI / rows as f64;
            for i in 0..cols {
                out.push((std::f64::consts::TAU * i as f64 / cols as f64, el));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub dim: usize,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
    shapes: Vec<Shape>,
    movers: Vec<Mover>,
}

fn vec3(v: &[f64], dim: usize, what: &str) -> Result<Vector3<f64>> {
    if v.len() != dim {
        return Err(Error::config(format!("{what} has {} coordinates, expected {dim}", v.len())));
    }
    let mut out = Vector3::zeros();
    out.as_mut_slice()[..dim].copy_from_slice(v);
    Ok(out)
}

impl World {
    pub fn empty(dim: usize, min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self {
            dim,
            bounds_min: min,
            bounds_max: max,
            shapes: Vec::new(),
            movers: Vec::new(),
        }
    }

    pub fn from_spec(spec: &WorldSpec) -> Result<Self> {
        let dim = spec.dim;
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!("world dim must be 2 or 3, got {dim}")));
        }
        let min = vec3(&spec.bounds.min, dim, "bounds.min")?;
        let max = vec3(&spec.bounds.max, dim, "bounds.max")?;
        if (0..dim).any(|i| min[i] >= max[i]) {
            return Err(Error::config("bounds.min must be below bounds.max"));
        }
        let mut world = World::empty(dim, min, max);
        for (i, obs) in spec.static_obstacles.iter().enumerate() {
            world.add_static(obs).map_err(|e| Error::config(format!("static[{i}]: {e}")))?;
        }
        for (i, d) in spec.dynamic.iter().enumerate() {
            world.add_dynamic(d).map_err(|e| Error::config(format!("dynamic[{i}]: {e}")))?;
        }
        Ok(world)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: WorldSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<world>".into(),
            message: e.to_string(),
        })?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: WorldSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_spec(&spec)
    }

    pub fn add_static(&mut self, obs: &StaticObstacle) -> Result<()> {
        let planar = matches!(
            obs,
            StaticObstacle::Circle { .. } | StaticObstacle::Polygon { .. } | StaticObstacle::Segments { .. }
        );
        if planar != (self.dim == 2) {
            return Err(Error::config(format!("obstacle {obs:?} does not match world dim {}", self.dim)));
        }
        let shape = match obs {
            StaticObstacle::Circle { center, radius } => Shape::Ball {
                center: Vector3::new(center[0], center[1], 0.0),
                radius: positive(*radius, "radius")?,
            },
            StaticObstacle::Sphere { center, radius } => Shape::Ball {
                center: Vector3::from(*center),
                radius: positive(*radius, "radius")?,
            },
            StaticObstacle::Polygon { vertices } => Shape::Convex(ConvexPolygon::new(vertices)?),
            StaticObstacle::Segments { points } => {
                if points.len() < 2 {
                    return Err(Error::config("segment chain needs at least two points"));
                }
                Shape::Walls(
                    points
                        .windows(2)
                        .map(|w| (Vector2::from(w[0]), Vector2::from(w[1])))
                        .collect(),
                )
            }
            StaticObstacle::Prism { vertices, z_min, z_max } => {
                if z_min >= z_max {
                    return Err(Error::config("prism needs z_min < z_max"));
                }
                Shape::Prism {
                    footprint: ConvexPolygon::new(vertices)?,
                    z_min: *z_min,
                    z_max: *z_max,
                }
            }
        };
        self.shapes.push(shape);
        Ok(())
    }

    pub fn add_dynamic(&mut self, d: &DynamicObstacle) -> Result<()> {
        positive(d.radius, "radius")?;
        if d.waypoints.is_empty() {
            return Err(Error::config("moving obstacle needs at least one waypoint"));
        }
        let waypoints = d
            .waypoints
            .iter()
            .map(|w| vec3(w, self.dim, "waypoint"))
            .collect::<Result<Vec<_>>>()?;
        if waypoints.len() > 1 {
            positive(d.speed, "speed")?;
        }
        let mut times = vec![0.0];
        for w in waypoints.windows(2) {
            let last = *times.last().unwrap();
            times.push(last + (w[1] - w[0]).norm() / d.speed);
        }
        self.movers.push(Mover {
            radius: d.radius,
            waypoints,
            times,
            speed: d.speed,
        });
        Ok(())
    }

    /// Rejects moving obstacles faster than `speed_bound`.
    pub fn check_speed_bound(&self, speed_bound: f64) -> Result<()> {
        for (i, m) in self.movers.iter().enumerate() {
            if m.waypoints.len() > 1 && m.speed > speed_bound {
                return Err(Error::config(format!(
                    "dynamic[{i}] moves at {} m/s, above the bound {speed_bound}",
                    m.speed
                )));
            }
        }
        Ok(())
    }

    pub fn static_count(&self) -> usize {
        self.shapes.len()
    }

    pub fn dynamic_count(&self) -> usize {
        self.movers.len()
    }

    /// A copy with the moving obstacles removed.
    pub fn static_only(&self) -> World {
        World {
            movers: Vec::new(),
            ..self.clone()
        }
    }

    /// Centres and radii of the moving obstacles at time `t`.
    pub fn advance_obstacles(&self, t: f64) -> Vec<(Vector3<f64>, f64)> {
        self.movers.iter().map(|m| (m.position(t), m.radius)).collect()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..self.dim).all(|i| p[i] >= self.bounds_min[i] && p[i] <= self.bounds_max[i])
    }

    /// Signed distance to the nearest obstacle at time `t`; negative inside.
    pub fn min_clearance(&self, t: f64, p: &Vector3<f64>) -> f64 {
        let stat = self.shapes.iter().map(|s| s.sdf(p)).fold(f64::INFINITY, f64::min);
        self.movers
            .iter()
            .map(|m| (p - m.position(t)).norm() - m.radius)
            .fold(stat, f64::min)
    }

    fn first_hit(&self, o: &Vector3<f64>, u: &Vector3<f64>, movers: &[(Vector3<f64>, f64)]) -> Option<f64> {
        let stat = self.shapes.iter().filter_map(|s| s.ray(o, u));
        let dynm = movers.iter().filter_map(|(c, r)| ray_ball(o, u, c, *r));
        stat.chain(dynm).min_by(f64::total_cmp)
    }

    /// Simulated scan from `pose` at time `t`.
    pub fn ray_cast(&self, t: f64, index_k: u64, pose: &Vector3<f64>, heading: f64, spec: &LidarSpec) -> Result<Scan> {
        spec.validate()?;
        if !self.contains(pose) {
            return Err(Error::OutOfBounds {
                pose: pose.as_slice()[..self.dim].to_vec(),
            });
        }
        let movers = self.advance_obstacles(t);
        let mut scan = Scan::empty(index_k, self.dim, *pose, heading);
        let mut push = |azimuth: f64, elevation: f64| {
            let pt = ScanPoint { range: 0.0, azimuth, elevation };
            let u = pt.direction();
            if let Some(s) = self.first_hit(pose, &u, &movers) {
                if s <= spec.max_range {
                    scan.points.push(ScanPoint { range: s, ..pt });
                }
            }
        };
        if self.dim == 2 {
            for az in spec.planar_azimuths(heading) {
                push(az, 0.0);
            }
        } else {
            for (az, el) in spec.spatial_directions() {
                push(az, el);
            }
        }
        Ok(scan)
    }

    /// Residual of the nearest obstacle surface at `p` (zero on a boundary).
    pub fn surface_residual(&self, t: f64, p: &Vector3<f64>) -> f64 {
        self.min_clearance(t, p).abs()
    }
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(format!("{what} must be positive, got {v}")))
    }
}
