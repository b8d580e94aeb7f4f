//! K-means with k-means++ seeding, silhouette scoring, and the majority-class
//! split that turns one dominant class into several pseudo-classes.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::nn::{sq_dist, Matrix};
use crate::rng::{derive_seed, seeded, Rng};

/// Points per silhouette evaluation before uniform subsampling kicks in.
pub const DEFAULT_SILHOUETTE_CAP: usize = 2000;
pub const DEFAULT_MAX_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter_rows()
        .map(|r| sq_dist(r, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can walk past the end onto a zero-weight point
            while d2[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, r) in points.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign(points: &Matrix, centroids: &Matrix, assignments: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, row) in points.iter_rows().enumerate() {
        let (j, d) = nearest(row, centroids);
        assignments[i] = j;
        inertia += d;
    }
    inertia
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &Matrix, centroids: &mut Matrix, assignments: &mut [usize]) {
    let k = centroids.rows();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, row) in points.iter_rows().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let d = sq_dist(row, centroids.row(assignments[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a cluster with two members");
        assignments[i] = empty;
        centroids.row_mut(empty).copy_from_slice(points.row(i));
    }
}

fn update_centroids(points: &Matrix, assignments: &[usize], centroids: &mut Matrix) {
    let d = points.cols();
    let k = centroids.rows();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (row, &a) in points.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(row) {
            *s += v;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                *c = s / counts[j] as f64;
            }
        }
    }
}

fn inertia_of(points: &Matrix, centroids: &Matrix, assignments: &[usize]) -> f64 {
    points
        .iter_rows()
        .zip(assignments)
        .map(|(r, &a)| sq_dist(r, centroids.row(a)))
        .sum()
}

/// Lloyd iterations from k-means++ seeds until the assignment stops changing
/// or `max_iters` assignment steps have run. Distance ties go to the lowest id.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k < 2 {
        return Err(invalid(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(invalid(format!("k = {k} exceeds the {n} points")));
    }
    if max_iters == 0 {
        return Err(invalid("max_iters must be positive"));
    }
    if !points.is_finite() {
        return Err(invalid("k-means input contains non-finite values"));
    }
    let mut rng = seeded(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        assign(points, &centroids, &mut assignments);
        repair_empty(points, &mut centroids, &mut assignments);
        trace.push(inertia_of(points, &centroids, &assignments));
        if previous.as_deref() == Some(&assignments[..]) {
            break;
        }
        update_centroids(points, &assignments, &mut centroids);
        previous = Some(assignments.clone());
    }
    let inertia = inertia_of(points, &centroids, &assignments);
    Ok(KMeansResult {
        k,
        centroids,
        assignments,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

/// Mean silhouette `(b − a) / max(a, b)` with Euclidean distances.
/// Members of singleton clusters score 0.
pub fn silhouette(points: &Matrix, assignments: &[usize]) -> Result<f64> {
    let n = points.rows();
    if assignments.len() != n {
        return Err(invalid(format!(
            "{} assignments for {n} points",
            assignments.len()
        )));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(invalid("silhouette needs at least two nonempty clusters"));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let ri = points.row(i);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += sq_dist(ri, points.row(j)).sqrt();
            }
        }
        let own = assignments[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Silhouette on at most `cap` points drawn uniformly without replacement.
pub fn silhouette_capped(points: &Matrix, assignments: &[usize], cap: usize, seed: u64) -> Result<f64> {
    let n = points.rows();
    if cap == 0 || n <= cap {
        return silhouette(points, assignments);
    }
    if assignments.len() != n {
        return Err(invalid(format!(
            "{} assignments for {n} points",
            assignments.len()
        )));
    }
    let mut idx = sample(&mut seeded(seed), n, cap).into_vec();
    idx.sort_unstable();
    let sub: Vec<usize> = idx.iter().map(|&i| assignments[i]).collect();
    silhouette(&points.select_rows(&idx), &sub)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelabelConfig {
    pub k_candidates: Vec<usize>,
    pub seed: u64,
    pub max_iters: usize,
    /// 0 disables subsampling.
    pub silhouette_cap: usize,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        Self {
            k_candidates: (2..=7).collect(),
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            silhouette_cap: DEFAULT_SILHOUETTE_CAP,
        }
    }
}

/// Where one original class ended up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub original: String,
    pub first: usize,
    pub last: usize,
}

impl LabelMapping {
    pub fn range(&self) -> String {
        if self.first == self.last {
            self.first.to_string()
        } else {
            format!("{}-{}", self.first, self.last)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub k: usize,
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelabelOutcome {
    pub data: Dataset,
    pub k_star: usize,
    pub scores: Vec<CandidateScore>,
    pub mapping: Vec<LabelMapping>,
    pub silhouette_cap: usize,
    pub degenerate: bool,
}

/// Splits class `majority` into `k*` pseudo-classes `0..k*`, `k*` being the
/// candidate with the best silhouette (smallest k on ties). The remaining
/// classes keep their order and follow as `k*, k*+1, ...`. New class names are
/// the decimal ids.
pub fn relabel_majority(data: &Dataset, majority: usize, cfg: &RelabelConfig) -> Result<RelabelOutcome> {
    if majority >= data.n_classes() {
        return Err(invalid(format!(
            "majority class {majority} outside [0, {})",
            data.n_classes()
        )));
    }
    let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == majority).collect();
    let points = data.features.select_rows(&members);
    let mut ks = cfg.k_candidates.clone();
    ks.sort_unstable();
    ks.dedup();
    let feasible: Vec<usize> = ks.iter().copied().filter(|&k| k >= 2 && k <= members.len()).collect();
    if feasible.is_empty() {
        return Err(invalid(format!(
            "no feasible k among {:?} for a class of {} samples",
            cfg.k_candidates,
            members.len()
        )));
    }

    let first = points.row(0);
    let degenerate = points.iter_rows().all(|r| r == first);
    let mut scores: Vec<CandidateScore> = ks
        .iter()
        .map(|&k| CandidateScore { k, silhouette: None })
        .collect();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    if degenerate {
        log::warn!(
            "majority class {majority} has identical points; choosing k = {}",
            feasible[0]
        );
        let k = feasible[0];
        let assignments = (0..members.len()).map(|i| i % k).collect();
        best = Some((k, 0.0, assignments));
    } else {
        for &k in &feasible {
            let km = kmeans(&points, k, derive_seed(cfg.seed, k as u64), cfg.max_iters)?;
            let s = silhouette_capped(
                &points,
                &km.assignments,
                cfg.silhouette_cap,
                derive_seed(cfg.seed, 1000 + k as u64),
            )?;
            scores.iter_mut().find(|c| c.k == k).unwrap().silhouette = Some(s);
            if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
                best = Some((k, s, km.assignments));
            }
        }
    }
    let (k_star, _, assignments) = best.expect("at least one feasible candidate");

    let mut new_id = vec![0usize; data.n_classes()];
    let mut next = k_star;
    let mut mapping = Vec::with_capacity(data.n_classes());
    for c in 0..data.n_classes() {
        if c == majority {
            mapping.push(LabelMapping {
                original: data.class_names[c].clone(),
                first: 0,
                last: k_star - 1,
            });
        } else {
            new_id[c] = next;
            mapping.push(LabelMapping {
                original: data.class_names[c].clone(),
                first: next,
                last: next,
            });
            next += 1;
        }
    }
    let mut labels: Vec<usize> = data.labels.iter().map(|&c| new_id[c]).collect();
    for (&i, &a) in members.iter().zip(&assignments) {
        labels[i] = a;
    }
    let names = (0..next).map(|c| c.to_string()).collect();
    let out = Dataset::with_feature_names(
        data.features.clone(),
        labels,
        names,
        data.feature_names.clone(),
    )?;
    Ok(RelabelOutcome {
        data: out,
        k_star,
        scores,
        mapping,
        silhouette_cap: cfg.silhouette_cap,
        degenerate,
    })
}
