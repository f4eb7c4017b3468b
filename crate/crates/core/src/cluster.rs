//! K-means phase labelling of fused element + CT feature stacks, and the
//! ordered rules that turn clusters into named minerals.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::catalog::{PhaseCatalog, PointAnalysis, RuleCriterion};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::image::{ElementMapSet, LabelImage, ScalarImage};

/// Channel name given to the CT plane in a feature stack.
pub const CT_CHANNEL: &str = "CT";

/// Per-pixel feature vectors over a shared grid. Channel weights are folded
/// into the stored values.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    grid: Grid2,
    channels: Vec<String>,
    /// Pixel-major: `data[i * dim + c]`.
    data: Vec<f64>,
    /// `true` = pixel participates in clustering.
    mask: Option<Vec<bool>>,
}

impl FeatureStack {
    pub fn new(
        grid: Grid2,
        channels: Vec<String>,
        data: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::config("feature stack needs at least one channel"));
        }
        if data.len() != grid.pixel_count() * channels.len() {
            return Err(Error::shape(format!(
                "feature data has {} values, expected {} pixels x {} channels",
                data.len(),
                grid.pixel_count(),
                channels.len()
            )));
        }
        if let Some(m) = &mask {
            if m.len() != grid.pixel_count() {
                return Err(Error::shape("feature mask length must match pixel count"));
            }
        }
        Ok(FeatureStack { grid, channels, data, mask })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn is_included(&self, i: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[i])
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }
}

/// Fuses element maps with a CT plane into one stack. `weights`, when given,
/// lists one multiplicative factor per channel (elements first, CT last).
pub fn build_feature_stack(
    maps: &ElementMapSet,
    ct_slice: &ScalarImage,
    weights: Option<&[f64]>,
) -> Result<FeatureStack> {
    if maps.grid() != ct_slice.grid() {
        return Err(Error::geometry(format!(
            "element maps on {:?} but CT slice on {:?}; resample first",
            maps.grid().dims,
            ct_slice.grid().dims
        )));
    }
    let dim = maps.symbols().len() + 1;
    let w = match weights {
        None => vec![1.0; dim],
        Some(w) => {
            if w.len() != dim {
                return Err(Error::config(format!(
                    "expected {dim} channel weights, got {}",
                    w.len()
                )));
            }
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::config("channel weights must be positive and finite"));
            }
            w.to_vec()
        }
    };
    let n = maps.grid().pixel_count();
    let mut channels: Vec<String> = maps.symbols().to_vec();
    channels.push(CT_CHANNEL.to_string());
    let mut data = vec![0.0f64; n * dim];
    for (c, map) in maps.maps().iter().enumerate() {
        for (i, &v) in map.data().iter().enumerate() {
            data[i * dim + c] = v as f64 * w[c];
        }
    }
    for (i, &v) in ct_slice.data().iter().enumerate() {
        data[i * dim + dim - 1] = v as f64 * w[dim - 1];
    }
    FeatureStack::new(*maps.grid(), channels, data, maps.mask().map(|m| m.to_vec()))
}

/// Output of one K-means run, with clusters in a canonical order: the void
/// cluster (minimal CT centroid) is 0, the rest sorted by centroid.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    pub k: usize,
    /// k x D centroid matrix in feature (8-bit) scale.
    pub centroids: Vec<Vec<f64>>,
    pub channels: Vec<String>,
    /// Per-pixel cluster index; masked-out pixels get 0.
    pub labels: LabelImage,
    pub inertia: f64,
    /// Percent of nonvoid pixels per cluster; the void entry is 0.
    pub abundance_pct: Vec<f64>,
    /// Cluster treated as background; `None` when no CT channel exists.
    pub void_cluster: Option<usize>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means++ seeding over the included points.
fn seed_centroids(
    stack: &FeatureStack,
    points: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = points[rng.random_range(0..points.len())];
    centroids.push(stack.pixel(first).to_vec());
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(stack.pixel(p), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (j, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = j;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(stack.pixel(points[next]).to_vec());
        let c = centroids.last().unwrap();
        for (j, &p) in points.iter().enumerate() {
            d2[j] = d2[j].min(dist2(stack.pixel(p), c));
        }
    }
    centroids
}

/// One full Lloyd run. Returns (centroids, assignment, inertia, per-iteration
/// inertia trace).
fn lloyd(
    stack: &FeatureStack,
    points: &[usize],
    k: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>, f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(stack, points, k, &mut rng);
    let dim = stack.dim();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..300 {
        // Assignment step; ties go to the lowest centroid index.
        let next: Vec<usize> = points
            .par_iter()
            .map(|&p| {
                let v = stack.pixel(p);
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, cent) in centroids.iter().enumerate() {
                    let d = dist2(v, cent);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();
        let inertia: f64 =
            points.iter().zip(&next).map(|(&p, &c)| dist2(stack.pixel(p), &centroids[c])).sum();
        trace.push(inertia);
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
        // Update step.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (j, &p) in points.iter().enumerate() {
            let c = assignment[j];
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(stack.pixel(p)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster at the point farthest from its
                // assigned centroid (lowest index on ties).
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| (dist2(stack.pixel(p), &centroids[assignment[j]]), p))
                    .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                    .map(|(_, p)| p)
                    .unwrap();
                centroids[c] = stack.pixel(far).to_vec();
            } else {
                for (d, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *d = s / counts[c] as f64;
                }
            }
        }
    }
    let inertia = *trace.last().unwrap();
    (centroids, assignment, inertia, trace)
}

/// Lloyd's algorithm with k-means++ seeding and `n_init` independent
/// restarts; the lowest-inertia run wins. Deterministic for a fixed seed
/// regardless of thread count.
pub fn kmeans(stack: &FeatureStack, k: usize, n_init: usize, seed: u64) -> Result<ClusterResult> {
    if k < 1 {
        return Err(Error::config("k must be >= 1"));
    }
    if k > u8::MAX as usize {
        return Err(Error::config("k must fit in a u8 label"));
    }
    if n_init < 1 {
        return Err(Error::config("n_init must be >= 1"));
    }
    let points: Vec<usize> =
        (0..stack.grid().pixel_count()).filter(|&i| stack.is_included(i)).collect();
    if points.len() < k {
        return Err(Error::config(format!(
            "{} usable pixels cannot support k = {k}",
            points.len()
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let restart_seeds: Vec<u64> = (0..n_init).map(|_| master.random()).collect();
    let runs: Vec<(Vec<Vec<f64>>, Vec<usize>, f64)> = restart_seeds
        .par_iter()
        .map(|&s| {
            let (c, a, inertia, _) = lloyd(stack, &points, k, s);
            (c, a, inertia)
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.2.total_cmp(&b.2).then(i.cmp(j)))
        .map(|(i, _)| i)
        .unwrap();
    let (centroids, assignment, inertia) = runs[best].clone();

    // Canonical cluster order: void (minimal CT centroid) first, the rest by
    // centroid vector, so results are reproducible across runs and thread
    // counts.
    let ct = stack.channel_index(CT_CHANNEL);
    let void_old = ct.map(|ci| {
        (0..k).min_by(|&a, &b| centroids[a][ci].total_cmp(&centroids[b][ci]).then(a.cmp(&b))).unwrap()
    });
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let va = Some(a) == void_old;
        let vb = Some(b) == void_old;
        vb.cmp(&va).then_with(|| {
            for (x, y) in centroids[a].iter().zip(&centroids[b]) {
                let c = x.total_cmp(y);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            a.cmp(&b)
        })
    });
    let mut new_index = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let centroids: Vec<Vec<f64>> = order.iter().map(|&o| centroids[o].clone()).collect();
    let void_cluster = void_old.map(|v| new_index[v]);

    let mut labels = vec![0u8; stack.grid().pixel_count()];
    for (j, &p) in points.iter().enumerate() {
        labels[p] = new_index[assignment[j]] as u8;
    }
    let labels = LabelImage::new(*stack.grid(), labels)?;

    let mut counts = vec![0usize; k];
    for (j, _) in points.iter().enumerate() {
        counts[new_index[assignment[j]]] += 1;
    }
    let nonvoid: usize = counts
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != void_cluster)
        .map(|(_, &n)| n)
        .sum();
    let abundance_pct: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if Some(c) == void_cluster || nonvoid == 0 {
                0.0
            } else {
                n as f64 / nonvoid as f64 * 100.0
            }
        })
        .collect();

    Ok(ClusterResult {
        k,
        centroids,
        channels: stack.channels().to_vec(),
        labels,
        inertia,
        abundance_pct,
        void_cluster,
    })
}

/// Applies the catalog's ordered rules to name each nonvoid cluster.
/// Returns a bijection cluster index -> phase name.
pub fn assign_minerals(
    result: &ClusterResult,
    catalog: &PhaseCatalog,
    points: Option<&PointAnalysis>,
) -> Result<BTreeMap<usize, String>> {
    catalog.validate()?;
    if let Some(p) = points {
        p.validate()?;
    }
    let void = result.void_cluster;
    let mut candidates: Vec<usize> = (0..result.k).filter(|&c| Some(c) != void).collect();
    if candidates.len() != catalog.phases.len() {
        return Err(Error::data(format!(
            "{} nonvoid clusters cannot be matched to {} catalog phases",
            candidates.len(),
            catalog.phases.len()
        )));
    }
    let mut assigned: BTreeMap<usize, String> = BTreeMap::new();
    for (ri, rule) in catalog.rules.iter().enumerate() {
        let describe = || format!("rule {} ({} by {:?})", ri + 1, rule.phase, rule.element);
        if assigned.values().any(|p| *p == rule.phase) {
            return Err(Error::data(format!(
                "{} targets a phase that is already assigned",
                describe()
            )));
        }
        if candidates.is_empty() {
            return Err(Error::data(format!(
                "{} has no unassigned cluster left to match",
                describe()
            )));
        }
        let winner = match rule.criterion {
            RuleCriterion::CentroidArgmax => {
                let ei = result.channels.iter().position(|c| *c == rule.element).ok_or_else(
                    || {
                        Error::config(format!(
                            "{} names a channel missing from the stack",
                            describe()
                        ))
                    },
                )?;
                *candidates
                    .iter()
                    .max_by(|&&a, &&b| {
                        result.centroids[a][ei]
                            .total_cmp(&result.centroids[b][ei])
                            .then(b.cmp(&a))
                    })
                    .unwrap()
            }
            RuleCriterion::PointArgmax => {
                let analysis = points.ok_or_else(|| {
                    Error::config(format!("{} requires point analysis data", describe()))
                })?;
                let mut best: Option<(f64, usize)> = None;
                for p in &analysis.points {
                    let [y, x] = p.location;
                    if !result.labels.grid().contains([y, x]) {
                        return Err(Error::config(format!(
                            "point analysis location ({y}, {x}) is outside the label grid"
                        )));
                    }
                    let cluster = result.labels.get(y, x) as usize;
                    if !candidates.contains(&cluster) {
                        continue;
                    }
                    let mass = p.mass_pct.get(&rule.element).copied().unwrap_or(0.0);
                    if best.map_or(true, |(m, _)| mass > m) {
                        best = Some((mass, cluster));
                    }
                }
                best.ok_or_else(|| {
                    Error::data(format!(
                        "{} found no point inside an unassigned cluster",
                        describe()
                    ))
                })?
                .1
            }
        };
        assigned.insert(winner, rule.phase.clone());
        candidates.retain(|&c| c != winner);
    }
    if let Some(rem) = &catalog.remainder {
        if assigned.values().any(|p| p == rem) {
            return Err(Error::data(format!(
                "remainder phase {rem:?} was already assigned by a rule"
            )));
        }
        if candidates.len() != 1 {
            return Err(Error::data(format!(
                "remainder phase {rem:?} needs exactly one unassigned cluster, found {}",
                candidates.len()
            )));
        }
        assigned.insert(candidates[0], rem.clone());
        candidates.clear();
    }
    if !candidates.is_empty() {
        return Err(Error::data(format!(
            "{} clusters remain unassigned after all rules",
            candidates.len()
        )));
    }
    Ok(assigned)
}

/// Rewrites cluster indices as catalog phase labels (void and masked
/// pixels stay 0).
pub fn apply_assignment(
    labels: &LabelImage,
    assignment: &BTreeMap<usize, String>,
    catalog: &PhaseCatalog,
    void_cluster: Option<usize>,
) -> Result<LabelImage> {
    let mut table = vec![0u8; 256];
    for (&cluster, phase) in assignment {
        table[cluster] = catalog
            .label_of(phase)
            .ok_or_else(|| Error::config(format!("assigned phase {phase:?} not in catalog")))?;
    }
    if let Some(v) = void_cluster {
        table[v] = 0;
    }
    let data: Vec<u8> = labels.labels().iter().map(|&l| table[l as usize]).collect();
    LabelImage::new(*labels.grid(), data)
}

/// Percent of nonvoid pixels per label, indexed by label (entry 0 is 0).
pub fn cluster_abundances(labels: &LabelImage) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; labels.max_label() as usize + 1];
    let mut nonvoid = 0usize;
    for &l in labels.labels() {
        if l != 0 {
            counts[l as usize] += 1;
            nonvoid += 1;
        }
    }
    if nonvoid == 0 {
        return Err(Error::data("abundances are undefined for an all-void image"));
    }
    Ok(counts.iter().map(|&c| c as f64 / nonvoid as f64 * 100.0).collect())
}
