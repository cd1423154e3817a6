//! Reduced measurement-to-subobject association events.
//!
//! The measurement set is clustered with EM for Gaussian mixtures for every
//! cluster count `1..=Ns`, from several initializations. Unique partitions are
//! kept, and every injective cluster-to-subobject map of a partition yields
//! one association event.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Largest exhaustive enumeration accepted by [`full_assignment_enumeration`].
pub const FULL_ENUMERATION_LIMIT: f64 = 1e6;

/// Hard clustering of a measurement set with clusters labelled in order of
/// their smallest member index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Canonicalizes arbitrary labels; empty clusters vanish.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&l| match map.iter().find(|(from, _)| *from == l) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((l, to));
                    to
                }
            })
            .collect();
        Self {
            labels,
            n_clusters: map.len(),
        }
    }

    pub fn single(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Randomly seeded runs per cluster count.
    pub random_restarts: usize,
    /// Adds one farthest-point seeded run per cluster count.
    pub farthest_point: bool,
    pub max_iterations: usize,
    /// Stop when the log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Added to every cluster covariance as `floor · I`.
    pub covariance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            random_restarts: 15,
            farthest_point: true,
            max_iterations: 100,
            tolerance: 1e-6,
            covariance_floor: 1e-4,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.random_restarts + usize::from(self.farthest_point) == 0 {
            return Err(Error::Config("EM needs at least one initialization".into()));
        }
        if !(self.tolerance > 0.0 && self.covariance_floor > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("EM tolerance, floor and iteration count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmInit {
    /// Initial means are distinct measurements drawn with this seed.
    Random(u64),
    /// First mean farthest from the centroid, then greedily farthest from the
    /// chosen set.
    FarthestPoint,
}

// ---------------------------------------------------------------------------
// EM for Gaussian mixtures on a flat row-major data array
// ---------------------------------------------------------------------------

struct Data {
    x: Vec<f64>,
    n: usize,
    d: usize,
}

impl Data {
    fn new(measurements: &[DVector<f64>]) -> Result<Self> {
        let d = measurements.first().map_or(0, |z| z.len());
        let mut x = Vec::with_capacity(measurements.len() * d);
        for z in measurements {
            if z.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: z.len(),
                });
            }
            x.extend(z.iter());
        }
        Ok(Self {
            x,
            n: measurements.len(),
            d,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn sq_dist(&self, i: usize, p: &[f64]) -> f64 {
        self.row(i).iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// In-place lower Cholesky of a `d × d` row-major matrix.
fn cholesky_in_place(a: &mut [f64], d: usize) -> bool {
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let ljj = s.sqrt();
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = t / ljj;
        }
        for k in j + 1..d {
            a[j * d + k] = 0.0;
        }
    }
    true
}

/// `‖L⁻¹(x - μ)‖²` by forward substitution.
fn mahalanobis(l: &[f64], d: usize, x: &[f64], mu: &[f64], buf: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        let mut t = x[i] - mu[i];
        for k in 0..i {
            t -= l[i * d + k] * buf[k];
        }
        let y = t / l[i * d + i];
        buf[i] = y;
        acc += y * y;
    }
    acc
}

struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    covs: Vec<f64>,
}

fn global_covariance(data: &Data, floor: f64) -> Vec<f64> {
    let (n, d) = (data.n, data.d);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = data.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n as f64;
            }
        }
    }
    for a in 0..d {
        cov[a * d + a] += floor;
    }
    cov
}

fn initial_centers(data: &Data, k: usize, init: EmInit) -> Vec<usize> {
    match init {
        EmInit::Random(seed) => {
            let mut rng = stream_rng(seed, &[]);
            sample(&mut rng, data.n, k).into_vec()
        }
        EmInit::FarthestPoint => {
            let d = data.d;
            let mut centroid = vec![0.0; d];
            for i in 0..data.n {
                for (c, v) in centroid.iter_mut().zip(data.row(i)) {
                    *c += v / data.n as f64;
                }
            }
            let first = (0..data.n)
                .max_by(|&a, &b| data.sq_dist(a, &centroid).total_cmp(&data.sq_dist(b, &centroid)).then(b.cmp(&a)))
                .unwrap_or(0);
            let mut chosen = vec![first];
            let mut nearest: Vec<f64> = (0..data.n).map(|i| data.sq_dist(i, data.row(first))).collect();
            while chosen.len() < k {
                let next = (0..data.n)
                    .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                chosen.push(next);
                for (i, best) in nearest.iter_mut().enumerate() {
                    *best = best.min(data.sq_dist(i, data.row(next)));
                }
            }
            chosen
        }
    }
}

/// Runs EM and returns hard labels, or `None` on numerical breakdown.
fn run_em(data: &Data, k: usize, cfg: &EmConfig, init: EmInit) -> Option<Vec<usize>> {
    let (n, d) = (data.n, data.d);
    let centers = initial_centers(data, k, init);
    let base_cov = global_covariance(data, cfg.covariance_floor);
    let mut mix = Mixture {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().flat_map(|&c| data.row(c).to_vec()).collect(),
        covs: (0..k).flat_map(|_| base_cov.clone()).collect(),
    };
    let ln_2pi = (2.0 * PI).ln();
    let mut resp = vec![0.0; n * k];
    let mut lp = vec![0.0; k];
    let mut buf = vec![0.0; d];
    let mut chol = vec![0.0; k * d * d];
    let mut half_log_det = vec![0.0; k];
    // Start from a hard assignment to the nearest seed.
    for i in 0..n {
        let nearest = (0..k)
            .min_by(|&a, &b| {
                data.sq_dist(i, &mix.means[a * d..(a + 1) * d])
                    .total_cmp(&data.sq_dist(i, &mix.means[b * d..(b + 1) * d]))
            })
            .unwrap_or(0);
        resp[i * k + nearest] = 1.0;
    }
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iter = 0;
    loop {
        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            mix.weights[c] = nk / n as f64;
            if nk < 1e-10 {
                continue;
            }
            let mean = &mut mix.means[c * d..(c + 1) * d];
            mean.fill(0.0);
            for i in 0..n {
                let r = resp[i * k + c];
                for (m, v) in mean.iter_mut().zip(data.row(i)) {
                    *m += r * v / nk;
                }
            }
            let cov = &mut mix.covs[c * d * d..(c + 1) * d * d];
            cov.fill(0.0);
            for i in 0..n {
                let r = resp[i * k + c];
                let x = data.row(i);
                for a in 0..d {
                    for b in 0..d {
                        cov[a * d + b] += r * (x[a] - mean[a]) * (x[b] - mean[b]) / nk;
                    }
                }
            }
            for a in 0..d {
                cov[a * d + a] += cfg.covariance_floor;
            }
        }

        // E-step
        chol.copy_from_slice(&mix.covs);
        for c in 0..k {
            let l = &mut chol[c * d * d..(c + 1) * d * d];
            if !cholesky_in_place(l, d) {
                return None;
            }
            half_log_det[c] = (0..d).map(|a| l[a * d + a].ln()).sum();
        }
        let mut ll = 0.0;
        for i in 0..n {
            let x = data.row(i);
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let l = &chol[c * d * d..(c + 1) * d * d];
                let m2 = mahalanobis(l, d, x, &mix.means[c * d..(c + 1) * d], &mut buf);
                lp[c] = mix.weights[c].max(f64::MIN_POSITIVE).ln() - half_log_det[c] - 0.5 * (d as f64 * ln_2pi + m2);
                max = max.max(lp[c]);
            }
            let s: f64 = lp.iter().map(|v| (v - max).exp()).sum();
            let lse = max + s.ln();
            if !lse.is_finite() {
                return None;
            }
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (lp[c] - lse).exp();
            }
        }
        if iter >= cfg.max_iterations || ll - prev_ll < cfg.tolerance {
            break;
        }
        prev_ll = ll;
        iter += 1;
    }
    let labels = (0..n)
        .map(|i| {
            (0..k)
                .max_by(|&a, &b| resp[i * k + a].total_cmp(&resp[i * k + b]).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect();
    Some(labels)
}

/// EM clustering into at most `n_clusters` clusters (empty ones dropped).
pub fn em_gm_cluster(measurements: &[DVector<f64>], n_clusters: usize, cfg: &EmConfig, init: EmInit) -> Result<Partition> {
    let n = measurements.len();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::Domain(format!(
            "EM needs 1 <= clusters <= measurements, got {n_clusters} clusters for {n} measurements"
        )));
    }
    if n_clusters == 1 {
        return Ok(Partition::single(n));
    }
    let data = Data::new(measurements)?;
    Ok(match run_em(&data, n_clusters, cfg, init) {
        Some(labels) => Partition::from_labels(&labels),
        None => Partition::single(n),
    })
}

/// Unique partitions over cluster counts `1..=min(Ns, nz)`, in order of
/// cluster count, then initialization index.
pub fn generate_partitions(
    measurements: &[DVector<f64>],
    n_subobjects: usize,
    cfg: &EmConfig,
    seed: u64,
) -> Result<Vec<Partition>> {
    let n = measurements.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut jobs = Vec::new();
    for k in 1..=n_subobjects.min(n) {
        if k == 1 {
            jobs.push((1, EmInit::FarthestPoint));
            continue;
        }
        if cfg.farthest_point {
            jobs.push((k, EmInit::FarthestPoint));
        }
        for r in 0..cfg.random_restarts {
            jobs.push((k, EmInit::Random(crate::rng::derive_seed(seed, &[k as u64, r as u64]))));
        }
    }
    let results: Vec<Partition> = jobs
        .par_iter()
        .map(|&(k, init)| em_gm_cluster(measurements, k, cfg, init))
        .collect::<Result<_>>()?;
    let mut unique: Vec<Partition> = Vec::new();
    for p in results {
        if !unique.contains(&p) {
            unique.push(p);
        }
    }
    Ok(unique)
}

// ---------------------------------------------------------------------------
// Association events
// ---------------------------------------------------------------------------

/// Sufficient statistics of the measurements assigned to one subobject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetStats {
    pub count: usize,
    /// `None` for an empty subset.
    pub centroid: Option<DVector<f64>>,
    pub scatter: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssociationEvent {
    /// Subobject index of every measurement.
    pub assignment: Vec<usize>,
    pub subsets: Vec<SubsetStats>,
}

impl AssociationEvent {
    pub fn from_assignment(measurements: &[DVector<f64>], assignment: &[usize], n_subobjects: usize) -> Result<Self> {
        if assignment.len() != measurements.len() {
            return Err(Error::DimensionMismatch {
                expected: measurements.len(),
                actual: assignment.len(),
            });
        }
        let d = measurements.first().map_or(0, |z| z.len());
        let mut subsets = Vec::with_capacity(n_subobjects);
        for i in 0..n_subobjects {
            let members: Vec<&DVector<f64>> = measurements
                .iter()
                .zip(assignment)
                .filter(|(_, &a)| a == i)
                .map(|(z, _)| z)
                .collect();
            let count = members.len();
            let mut scatter = DMatrix::zeros(d, d);
            let centroid = if count > 0 {
                let c = members.iter().fold(DVector::zeros(d), |acc, z| acc + *z) / count as f64;
                for z in &members {
                    let e = *z - &c;
                    scatter += &e * e.transpose();
                }
                Some(c)
            } else {
                None
            };
            subsets.push(SubsetStats {
                count,
                centroid,
                scatter,
            });
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= n_subobjects) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: n_subobjects,
            });
        }
        Ok(Self {
            assignment: assignment.to_vec(),
            subsets,
        })
    }

    /// The event of an empty measurement set.
    pub fn empty(dim: usize, n_subobjects: usize) -> Self {
        Self {
            assignment: Vec::new(),
            subsets: (0..n_subobjects)
                .map(|_| SubsetStats {
                    count: 0,
                    centroid: None,
                    scatter: DMatrix::zeros(dim, dim),
                })
                .collect(),
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.subsets.iter().map(|s| s.count).collect()
    }
}

/// One event per injective cluster-to-subobject map.
pub fn enumerate_events(
    measurements: &[DVector<f64>],
    partition: &Partition,
    n_subobjects: usize,
) -> Result<Vec<AssociationEvent>> {
    let k = partition.n_clusters();
    if k > n_subobjects {
        return Err(Error::Domain(format!(
            "partition has {k} clusters but the target only {n_subobjects} subobjects"
        )));
    }
    (0..n_subobjects)
        .permutations(k)
        .map(|map| {
            let assignment: Vec<usize> = partition.labels().iter().map(|&l| map[l]).collect();
            AssociationEvent::from_assignment(measurements, &assignment, n_subobjects)
        })
        .collect()
}

/// The reduced event set; a single all-empty event for an empty scan.
pub fn generate_events(
    measurements: &[DVector<f64>],
    n_subobjects: usize,
    dim: usize,
    cfg: &EmConfig,
    seed: u64,
) -> Result<Vec<AssociationEvent>> {
    if measurements.is_empty() {
        return Ok(vec![AssociationEvent::empty(dim, n_subobjects)]);
    }
    let partitions = generate_partitions(measurements, n_subobjects, cfg, seed)?;
    let mut events = Vec::new();
    for p in &partitions {
        events.extend(enumerate_events(measurements, p, n_subobjects)?);
    }
    Ok(events)
}

/// `Σ C(Nc) · Ns! / (Ns - Nc)!` for a list of unique partitions.
pub fn reduced_event_count(partitions: &[Partition], n_subobjects: usize) -> usize {
    partitions
        .iter()
        .map(|p| ((n_subobjects - p.n_clusters() + 1)..=n_subobjects).product::<usize>())
        .sum()
}

/// Every assignment of `n_measurements` measurements to `n_subobjects`
/// subobjects, in lexicographic order.
pub fn full_assignment_enumeration(n_measurements: usize, n_subobjects: usize) -> Result<Vec<Vec<usize>>> {
    let size = (n_subobjects as f64).powi(n_measurements as i32);
    if size > FULL_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge(size));
    }
    if n_measurements == 0 {
        return Ok(vec![Vec::new()]);
    }
    Ok((0..n_measurements)
        .map(|_| 0..n_subobjects)
        .multi_cartesian_product()
        .collect())
}

pub fn full_event_enumeration(measurements: &[DVector<f64>], n_subobjects: usize) -> Result<Vec<AssociationEvent>> {
    full_assignment_enumeration(measurements.len(), n_subobjects)?
        .iter()
        .map(|a| AssociationEvent::from_assignment(measurements, a, n_subobjects))
        .collect()
}
