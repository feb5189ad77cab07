//! Irregular constellations fitted by Lloyd's K-means over sampled encoder
//! output symbols in the complex plane.
//!
//! Each round assigns every sample to its nearest centroid, moves every
//! centroid to the mean of its members, then reassigns against the moved
//! centroids; the loop stops once the reassignment matches the assignment
//! used for the update. The returned state is the post-update one.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::Rng;

/// Continuous symbols pooled from a set of encoded images.
#[derive(Clone, Debug)]
pub struct SymbolSample {
    points: Vec<Complex64>,
    source_image_count: usize,
}

impl SymbolSample {
    pub fn new(points: Vec<Complex64>, source_image_count: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("symbol sample is empty"));
        }
        if points
            .iter()
            .any(|p| !p.re.is_finite() || !p.im.is_finite())
        {
            return Err(Error::arg("symbol sample contains non-finite points"));
        }
        Ok(SymbolSample {
            points,
            source_image_count,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn source_image_count(&self) -> usize {
        self.source_image_count
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Finite set of distinct complex points shared by modulator and demodulator.
/// Index order is part of the value.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("constellation has no points"));
        }
        if points
            .iter()
            .any(|p| !p.re.is_finite() || !p.im.is_finite())
        {
            return Err(Error::arg("constellation contains non-finite points"));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].contains(a) {
                return Err(Error::arg(format!("constellation point {i} is duplicated")));
            }
        }
        Ok(Constellation { points })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Smallest pairwise distance (infinite for a single point).
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    pub fn average_power(&self) -> f64 {
        crate::complex::power_of(&self.points)
    }

    /// Serialized form: `M=<order>` then one `index,re,im` line per point,
    /// using shortest round-trip decimal formatting.
    pub fn to_text(&self) -> String {
        let mut out = format!("M={}\n", self.order());
        for (i, p) in self.points.iter().enumerate() {
            writeln!(out, "{i},{},{}", p.re, p.im).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("constellation file", detail);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let order: usize = header
            .trim()
            .strip_prefix("M=")
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| bad(format!("bad header line {header:?}")))?;
        let mut points = Vec::with_capacity(order);
        for (expected, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 3 {
                return Err(bad(format!("line {:?} does not have 3 fields", line)));
            }
            let index: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
            if index != expected {
                return Err(bad(format!(
                    "index {index} out of order, expected {expected}"
                )));
            }
            let re: f64 = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad real part {:?}", fields[1])))?;
            let im: f64 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad imaginary part {:?}", fields[2])))?;
            points.push(Complex64::new(re, im));
        }
        if points.len() != order {
            return Err(bad(format!(
                "header says M={order} but {} points follow",
                points.len()
            )));
        }
        Constellation::new(points).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => {
                Error::config(format!("constellation file {} not found", path.display()))
            }
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}

/// Index of the nearest point, lowest index on ties.
#[inline]
pub fn assign(s: Complex64, constellation: &Constellation) -> usize {
    nearest_index(s, constellation.points())
}

#[inline]
pub(crate) fn nearest_index(s: Complex64, points: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in points.iter().enumerate() {
        let d = (c - s).norm_sqr();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Initialization {
    /// M distinct samples drawn uniformly without replacement.
    #[default]
    Random,
    /// D²-weighted seeding.
    KMeansPlusPlus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    pub init: Initialization,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iters: 300,
            init: Initialization::Random,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub constellation: Constellation,
    /// Post-update assignment of every sample.
    pub assignments: Vec<usize>,
    /// Centroids before the first update.
    pub initial: Vec<Complex64>,
    /// Rounds executed.
    pub iterations: usize,
    /// False when `max_iters` was reached before the assignment stabilized.
    pub converged: bool,
    /// Within-cluster sum of squares after the initial assignment and after
    /// every round.
    pub objective_trace: Vec<f64>,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

/// Within-cluster sum of squared distances.
pub fn objective(points: &[Complex64], centroids: &[Complex64], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| (p - centroids[a]).norm_sqr())
        .sum()
}

fn assign_all(points: &[Complex64], centroids: &[Complex64]) -> Vec<usize> {
    par::map_slice(points, |&p| nearest_index(p, centroids))
}

fn distinct_points(points: &[Complex64]) -> Vec<Complex64> {
    let mut keyed: Vec<(u64, u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.re + 0.0).to_bits(), (p.im + 0.0).to_bits(), i))
        .collect();
    keyed.sort_unstable();
    keyed.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    // Restore first-occurrence order so the draw depends on sample order only
    // through the set of distinct values.
    keyed.sort_unstable_by_key(|k| k.2);
    keyed.into_iter().map(|(_, _, i)| points[i] + 0.0).collect()
}

fn initial_centroids(
    distinct: &[Complex64],
    order: usize,
    init: Initialization,
    rng: &mut Rng,
) -> Vec<Complex64> {
    match init {
        Initialization::Random => {
            // Partial Fisher-Yates over indices.
            let mut idx: Vec<usize> = (0..distinct.len()).collect();
            for i in 0..order {
                let j = i + rng.below(idx.len() - i);
                idx.swap(i, j);
            }
            idx[..order].iter().map(|&i| distinct[i]).collect()
        }
        Initialization::KMeansPlusPlus => {
            let mut chosen = vec![distinct[rng.below(distinct.len())]];
            let mut d2: Vec<f64> = distinct
                .iter()
                .map(|p| (p - chosen[0]).norm_sqr())
                .collect();
            while chosen.len() < order {
                let total: f64 = d2.iter().sum();
                let mut target = rng.uniform() * total;
                let mut pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 && target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
                let c = distinct[pick];
                chosen.push(c);
                for (w, p) in d2.iter_mut().zip(distinct) {
                    *w = w.min((p - c).norm_sqr());
                }
            }
            chosen
        }
    }
}

/// Moves each centroid to the mean of its members. Empty clusters are
/// reseated on the sample currently farthest from its own centroid.
fn update_centroids(points: &[Complex64], centroids: &mut [Complex64], assignments: &[usize]) {
    let m = centroids.len();
    let mut sums = vec![Complex64::new(0.0, 0.0); m];
    let mut counts = vec![0usize; m];
    for (p, &a) in points.iter().zip(assignments) {
        sums[a] += p;
        counts[a] += 1;
    }
    let old: Vec<Complex64> = centroids.to_vec();
    let mut taken: Vec<usize> = Vec::new();
    for j in 0..m {
        if counts[j] > 0 {
            centroids[j] = sums[j] / counts[j] as f64;
        }
    }
    for j in 0..m {
        if counts[j] == 0 {
            let mut far = None;
            let mut far_d = -1.0;
            for (i, (p, &a)) in points.iter().zip(assignments).enumerate() {
                let d = (p - old[a]).norm_sqr();
                if d > far_d && !taken.contains(&i) && !centroids.contains(p) {
                    far_d = d;
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                taken.push(i);
                centroids[j] = points[i];
            }
        }
    }
}

/// Lloyd's K-means from a given set of initial centroids.
pub fn fit_from(
    samples: &SymbolSample,
    initial: Vec<Complex64>,
    max_iters: usize,
) -> Result<KMeansFit> {
    let points = samples.points();
    let order = initial.len();
    let mut centroids = initial.clone();
    let mut assignments = assign_all(points, &centroids);
    let mut trace = vec![objective(points, &centroids, &assignments)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        update_centroids(points, &mut centroids, &assignments);
        let reassigned = assign_all(points, &centroids);
        trace.push(objective(points, &centroids, &reassigned));
        let stable = reassigned == assignments;
        assignments = reassigned;
        if stable && every_cluster_used(&assignments, order) {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("k-means stopped after {max_iters} rounds without a stable assignment");
    }
    let constellation = Constellation::new(centroids)
        .map_err(|e| Error::Numerical(format!("k-means produced an invalid constellation: {e}")))?;
    Ok(KMeansFit {
        constellation,
        assignments,
        initial,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn every_cluster_used(assignments: &[usize], order: usize) -> bool {
    let mut used = vec![false; order];
    for &a in assignments {
        used[a] = true;
    }
    used.into_iter().all(|u| u)
}

/// Fits an `order`-point constellation to `samples`.
pub fn fit(
    samples: &SymbolSample,
    order: usize,
    rng: &mut Rng,
    options: &KMeansOptions,
) -> Result<KMeansFit> {
    if order < 2 {
        return Err(Error::arg(format!("modulation order {order} must be >= 2")));
    }
    if samples.len() < order {
        return Err(Error::arg(format!(
            "{} samples cannot support {order} clusters",
            samples.len()
        )));
    }
    let distinct = distinct_points(samples.points());
    if distinct.len() < order {
        return Err(Error::arg(format!(
            "only {} distinct samples for {order} clusters",
            distinct.len()
        )));
    }
    let initial = initial_centroids(&distinct, order, options.init, rng);
    fit_from(samples, initial, options.max_iters)
}
