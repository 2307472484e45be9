use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Radius of the goal ball used for the settling time.
pub const GOAL_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u_d: Vec<f64>,
    pub u: Vec<f64>,
    pub psi0: f64,
    pub psi1: f64,
    pub lambda: f64,
    /// Optimal slack `μ*`.
    pub mu: f64,
    pub omega: f64,
    pub d: f64,
    /// Smallest obstacle clearance over the control period.
    pub clearance: f64,
    pub k: u64,
    /// Composite weights `μ_j`; not written to CSV.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub state_dim: usize,
    pub input_dim: usize,
    pub goal: Vec<f64>,
    pub rows: Vec<LogRow>,
}

fn ser_inf_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `+∞` (written as `null`) when the goal ball is not held at the end.
    #[serde(serialize_with = "ser_inf_as_null", deserialize_with = "de_null_as_inf")]
    pub settling_time_s: f64,
    /// RMS of `u − u_d` per input channel.
    pub rms_u: Vec<f64>,
    pub min_psi0: f64,
    pub min_psi1: f64,
    pub min_clearance: f64,
    pub collided: bool,
    pub reached: bool,
}

pub fn compute_metrics(log: &TrajectoryLog) -> Metrics {
    let dim = log.goal.len();
    let dist = |r: &LogRow| {
        r.x.iter()
            .zip(&log.goal)
            .take(dim)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let settling_time_s = match log.rows.iter().rposition(|r| dist(r) > GOAL_TOLERANCE) {
        None => log.rows.first().map_or(f64::INFINITY, |r| r.t),
        Some(i) => log.rows.get(i + 1).map_or(f64::INFINITY, |r| r.t),
    };
    let count = log.rows.len().max(1) as f64;
    let rms_u = (0..log.input_dim)
        .map(|c| {
            let ss: f64 = log.rows.iter().map(|r| (r.u[c] - r.u_d[c]).powi(2)).sum();
            (ss / count).sqrt()
        })
        .collect();
    let min = |f: fn(&LogRow) -> f64| log.rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let min_clearance = min(|r| r.clearance);
    Metrics {
        settling_time_s,
        rms_u,
        min_psi0: min(|r| r.psi0),
        min_psi1: min(|r| r.psi1),
        min_clearance,
        collided: min_clearance < 0.0,
        reached: settling_time_s.is_finite(),
    }
}

impl TrajectoryLog {
    pub fn new(state_dim: usize, input_dim: usize, goal: Vec<f64>) -> Self {
        Self {
            state_dim,
            input_dim,
            goal,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.state_dim).map(|i| format!("x{i}")));
        h.extend((1..=self.input_dim).map(|i| format!("ud{i}")));
        h.extend((1..=self.input_dim).map(|i| format!("u{i}")));
        for s in ["psi0", "psi1", "lambda", "mu", "omega", "d", "clearance", "k"] {
            h.push(s.to_string());
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            let mut rec: Vec<String> = Vec::with_capacity(self.header().len());
            rec.push(r.t.to_string());
            rec.extend(r.x.iter().chain(&r.u_d).chain(&r.u).map(f64::to_string));
            rec.extend([r.psi0, r.psi1, r.lambda, r.mu, r.omega, r.d, r.clearance].iter().map(f64::to_string));
            rec.push(r.k.to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a log written by [`TrajectoryLog::write_csv`]. Dimensions are
    /// taken from the header; weights are not stored and come back empty.
    pub fn read_csv<R: Read>(r: R, goal: Vec<f64>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let count = |p: &str| {
            header
                .iter()
                .filter(|h| h.strip_prefix(p).is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())))
                .count()
        };
        let (n, m) = (count("x"), count("ud"));
        let mut log = Self::new(n, m, goal);
        if log.header().iter().map(String::as_str).ne(header.iter()) {
            return Err(Error::invalid("trajectory header does not match the expected layout"));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("column {i}: {e}")))
            };
            let vals = |a: usize, len: usize| -> Result<Vec<f64>> { (a..a + len).map(f).collect() };
            let base = 1 + n + 2 * m;
            log.rows.push(LogRow {
                t: f(0)?,
                x: vals(1, n)?,
                u_d: vals(1 + n, m)?,
                u: vals(1 + n + m, m)?,
                psi0: f(base)?,
                psi1: f(base + 1)?,
                lambda: f(base + 2)?,
                mu: f(base + 3)?,
                omega: f(base + 4)?,
                d: f(base + 5)?,
                clearance: f(base + 6)?,
                k: rec[base + 7]
                    .parse()
                    .map_err(|e| Error::invalid(format!("column k: {e}")))?,
                weights: Vec::new(),
            });
        }
        Ok(log)
    }
}

/// Quantile summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub p10: f64,
    pub p90: f64,
}

impl BoxStats {
    /// Linear-interpolation quantiles; `None` for an empty sample.
    pub fn from_sample(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            n: v.len(),
            median: q(0.5),
            p25: q(0.25),
            p75: q(0.75),
            p10: q(0.1),
            p90: q(0.9),
        })
    }
}
