//! Deterministic CSV/JSON artifacts and measure parsing.
//!
//! Trajectory CSV: columns `kind, t, mu_<label>…, h, speed, V_<x>_<y>…, psi_<label>…`
//! where the `V` columns list ordered pairs `x ≠ y` with `K(x,y) > 0`. Rows of kind
//! `node` carry `t_k = k/N` and the measure; rows of kind `interval` carry the
//! midpoint time and the interval quantities. Unused cells are empty. Numbers use
//! the shortest representation that parses back to the same value.

use serde::{Deserialize, Serialize};

use crate::action::{speed_profile, Trajectory, LOADED_CE_TOL};
use crate::chain::{EdgeField, MarkovChain};
use crate::duality::{DualCertificate, GapReport};
use crate::error::{Error, Result};
use crate::geodesic::RayResult;
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::transport::{check_nonlocality, Metric, Nonlocality, Shift, SolveReport};

pub const SCHEMA_VERSION: u32 = 1;

fn flux_pairs<T: Real>(chain: &MarkovChain<T>) -> Vec<(usize, usize)> {
    let n = chain.len();
    (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).filter(|&(x, y)| x != y && chain.k(x, y) > T::zero()).collect()
}

fn cell<T: Real>(v: T) -> String {
    v.to_string()
}

pub fn trajectory_to_csv<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Result<String> {
    let labels = chain.labels();
    let pairs = flux_pairs(chain);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["kind".to_string(), "t".to_string()];
    header.extend(labels.iter().map(|l| format!("mu_{l}")));
    header.push("h".into());
    header.push("speed".into());
    header.extend(pairs.iter().map(|&(x, y)| format!("V_{}_{}", labels[x], labels[y])));
    header.extend(labels.iter().map(|l| format!("psi_{l}")));
    w.write_record(&header)?;

    let n = chain.len();
    let width = header.len();
    let speeds = speed_profile(traj, chain);
    let nf = from_usize::<T>(traj.intervals());
    for k in 0..=traj.intervals() {
        let mut row = vec![String::new(); width];
        row[0] = "node".into();
        row[1] = cell(from_usize::<T>(k) / nf);
        for x in 0..n {
            row[2 + x] = cell(traj.mu[k][x]);
        }
        w.write_record(&row)?;
        if k == traj.intervals() {
            break;
        }
        let mut row = vec![String::new(); width];
        row[0] = "interval".into();
        row[1] = cell((from_usize::<T>(k) + lit(0.5)) / nf);
        row[2 + n] = cell(traj.h[k]);
        row[3 + n] = cell(speeds[k]);
        for (i, &(x, y)) in pairs.iter().enumerate() {
            row[4 + n + i] = cell(traj.v[k].get(x, y));
        }
        if let Some(psi) = &traj.psi {
            for x in 0..n {
                row[4 + n + pairs.len() + x] = cell(psi[k][x]);
            }
        }
        w.write_record(&row)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
}

fn parse_num<T: Real>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .ok()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Schema(format!("bad number {s:?} in {what}")))
}

/// Reads a trajectory CSV written by [`trajectory_to_csv`] and checks its invariants.
pub fn trajectory_from_csv<T: Real>(text: &str, chain: &MarkovChain<T>) -> Result<Trajectory<T>> {
    let labels = chain.labels();
    let n = chain.len();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::Schema(format!("missing column {name}")));
    let kind = col("kind")?;
    let mu_cols: Vec<usize> = labels.iter().map(|l| col(&format!("mu_{l}"))).collect::<Result<_>>()?;
    let h_col = col("h")?;
    let pairs = flux_pairs(chain);
    let v_cols: Vec<usize> =
        pairs.iter().map(|&(x, y)| col(&format!("V_{}_{}", labels[x], labels[y]))).collect::<Result<_>>()?;
    let psi_cols: Vec<usize> = labels.iter().filter_map(|l| col(&format!("psi_{l}")).ok()).collect();

    let mut mu = Vec::new();
    let mut v = Vec::new();
    let mut h = Vec::new();
    let mut psi: Vec<Vec<T>> = Vec::new();
    let mut psi_complete = psi_cols.len() == n;
    for rec in r.records() {
        let rec = rec?;
        match &rec[kind] {
            "node" => mu.push(mu_cols.iter().map(|&c| parse_num(&rec[c], "mu")).collect::<Result<Vec<T>>>()?),
            "interval" => {
                h.push(parse_num(&rec[h_col], "h")?);
                let mut f = EdgeField::zeros(n);
                for (&(x, y), &c) in pairs.iter().zip(&v_cols) {
                    f.set(x, y, parse_num(&rec[c], "V")?);
                }
                v.push(f);
                if psi_complete {
                    if psi_cols.iter().any(|&c| rec[c].is_empty()) {
                        psi_complete = false;
                    } else {
                        psi.push(psi_cols.iter().map(|&c| parse_num(&rec[c], "psi")).collect::<Result<Vec<T>>>()?);
                    }
                }
            }
            other => return Err(Error::Schema(format!("unknown row kind {other:?}"))),
        }
    }
    let psi = if psi_complete && psi.len() == h.len() { Some(psi) } else { None };
    let traj = Trajectory::new(mu, v, h, psi, crate::chain::tol(LOADED_CE_TOL))?;
    traj.validate(chain)?;
    Ok(traj)
}

/// JSON summary of a solve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolveSummary {
    pub schema_version: u32,
    pub metric: String,
    pub steps: usize,
    pub value: f64,
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub speed_variation: f64,
    pub min_interior_mass: f64,
    pub min_abs_source: f64,
    pub shift: Option<ShiftSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShiftSummary {
    pub h0: f64,
    pub h1: f64,
}

impl SolveSummary {
    pub fn new<T: Real>(report: &SolveReport<T>) -> Self {
        let Nonlocality { min_abs_source, .. } = check_nonlocality(report);
        Self {
            schema_version: SCHEMA_VERSION,
            metric: match report.metric {
                Metric::W => "W",
                Metric::ME => "ME",
                Metric::D => "D",
            }
            .into(),
            steps: report.trajectory.intervals(),
            value: to_f64(report.value),
            distance: to_f64(report.distance),
            iterations: report.iterations,
            converged: report.converged,
            residual: to_f64(report.residual),
            speed_variation: to_f64(report.speed_variation),
            min_interior_mass: to_f64(report.min_interior_mass),
            min_abs_source: to_f64(min_abs_source),
            shift: report.shift.map(|Shift { h0, h1 }| ShiftSummary { h0: to_f64(h0), h1: to_f64(h1) }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GapSummary {
    pub schema_version: u32,
    pub steps: usize,
    pub primal: f64,
    pub dual: f64,
    pub relative_gap: f64,
    pub feasibility_margin: f64,
    pub feasible: bool,
}

impl GapSummary {
    pub fn new<T: Real>(gap: &GapReport<T>, cert: &DualCertificate<T>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            steps: cert.intervals(),
            primal: to_f64(gap.primal),
            dual: to_f64(gap.dual),
            relative_gap: to_f64(gap.relative_gap),
            feasibility_margin: to_f64(gap.feasibility_margin),
            feasible: cert.is_feasible(),
        }
    }
}

pub fn certificate_to_csv<T: Real>(cert: &DualCertificate<T>, chain: &MarkovChain<T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(chain.labels().iter().map(|l| format!("phi_{l}")));
    w.write_record(&header)?;
    for (t, phi) in cert.grid.iter().zip(&cert.phi) {
        let mut row = vec![cell(*t)];
        row.extend(phi.iter().map(|&v| cell(v)));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Ray samples: `t, mu_<label>…, h, speed, gradpsi_<x>_<y>…`.
pub fn ray_to_csv<T: Real>(ray: &RayResult<T>, chain: &MarkovChain<T>) -> Result<String> {
    let labels = chain.labels();
    let n = chain.len();
    let edges = chain.edges();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().map(|l| format!("mu_{l}")));
    header.push("h".into());
    header.push("speed".into());
    header.extend(edges.iter().map(|&(x, y)| format!("gradpsi_{}_{}", labels[x], labels[y])));
    w.write_record(&header)?;
    for s in &ray.samples {
        let mut row = vec![cell(s.t)];
        row.extend((0..n).map(|x| cell(s.state.mu[x])));
        row.push(cell(s.state.h));
        row.push(cell(s.speed));
        row.extend(edges.iter().map(|&(x, y)| cell(s.state.grad_psi.get(x, y))));
        w.write_record(&row)?;
    }
    finish(w)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RayEntry {
    pub index: usize,
    pub file: String,
    pub stop_reason: String,
    pub stop_time: f64,
    pub speed_drift: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RayManifest {
    pub schema_version: u32,
    pub start: Vec<f64>,
    pub n_rays: usize,
    pub t_max: f64,
    pub eps_bd: f64,
    pub dt_min: f64,
    pub rtol: f64,
    pub rays: Vec<RayEntry>,
}

/// Parses a measure given as a JSON array, a JSON object keyed by state
/// labels, or inline comma-separated numbers.
pub fn parse_measure<T: Real>(text: &str, chain: &MarkovChain<T>) -> Result<Vec<T>> {
    let text = text.trim();
    let values: Vec<f64> = if text.starts_with('{') {
        let map: std::collections::BTreeMap<String, f64> = serde_json::from_str(text)?;
        if let Some(k) = map.keys().find(|k| !chain.labels().contains(k)) {
            return Err(Error::Schema(format!("unknown state label {k:?}")));
        }
        chain
            .labels()
            .iter()
            .map(|l| map.get(l).copied().ok_or_else(|| Error::Schema(format!("missing state {l:?}"))))
            .collect::<Result<_>>()?
    } else if text.starts_with('[') {
        serde_json::from_str(text)?
    } else {
        text.split(',').map(|s| parse_num::<f64>(s, "measure")).collect::<Result<_>>()?
    };
    if values.len() != chain.len() {
        return Err(Error::Dimension { expected: chain.len(), got: values.len() });
    }
    if let Some(x) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("measure entry {x} is negative or not finite")));
    }
    values.into_iter().map(|v| T::from_f64(v).ok_or_else(|| Error::Schema("value out of range".into()))).collect()
}

/// Pretty JSON with a trailing newline.
pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
