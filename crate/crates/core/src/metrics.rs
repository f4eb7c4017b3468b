//! Segmentation evaluation: confusion matrices, pixel accuracy, phase
//! abundance tables, and table comparison.

use crate::catalog::PhaseCatalog;
use crate::error::{Error, Result};
use crate::image::LabelImage;
use crate::volume::LabelVolume;
use serde::{Deserialize, Serialize};

/// Confusion counts between truth (rows) and prediction (columns), plus the
/// row-normalized form. Pixels whose truth class is excluded are not counted
/// at all; their rows stay zero in both representations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: usize,
    /// Row-major counts, `counts[truth * classes + pred]`.
    pub counts: Vec<u64>,
    /// Rows that occur in the retained truth sum to 1; absent rows are zero.
    pub normalized: Vec<f64>,
    /// Number of retained pixels (total of `counts`).
    pub retained: u64,
}

impl Confusion {
    /// Rebuilds the normalized form and retained total from raw counts, e.g.
    /// after summing counts over several evaluation surfaces.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Confusion> {
        if classes == 0 || counts.len() != classes * classes {
            return Err(Error::shape(format!(
                "expected {classes}x{classes} counts, got {}",
                counts.len()
            )));
        }
        let retained: u64 = counts.iter().sum();
        if retained == 0 {
            return Err(Error::data("confusion matrix has no counts"));
        }
        let mut normalized = vec![0.0f64; classes * classes];
        for t in 0..classes {
            let row = &counts[t * classes..(t + 1) * classes];
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            for (n, &c) in normalized[t * classes..(t + 1) * classes].iter_mut().zip(row) {
                *n = c as f64 / total as f64;
            }
        }
        Ok(Confusion { classes, counts, normalized, retained })
    }

    /// Percentage of retained pixels on the diagonal.
    pub fn accuracy_pct(&self) -> f64 {
        let diag: u64 = (0..self.classes).map(|c| self.counts[c * self.classes + c]).sum();
        100.0 * diag as f64 / self.retained as f64
    }

    pub fn row_sum(&self, truth: usize) -> f64 {
        self.normalized[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }
}

fn confusion_from_labels(
    pred: &[u8],
    truth: &[u8],
    classes: usize,
    exclude: &[u8],
) -> Result<Confusion> {
    let mut counts = vec![0u64; classes * classes];
    let mut retained = 0u64;
    for (&p, &t) in pred.iter().zip(truth) {
        if p as usize >= classes || t as usize >= classes {
            return Err(Error::data(format!(
                "label {} out of range for {classes} classes",
                p.max(t)
            )));
        }
        if exclude.contains(&t) {
            continue;
        }
        counts[t as usize * classes + p as usize] += 1;
        retained += 1;
    }
    if retained == 0 {
        return Err(Error::data("no pixels remain after excluding truth classes"));
    }
    let mut normalized = vec![0.0f64; classes * classes];
    for t in 0..classes {
        let row = &counts[t * classes..(t + 1) * classes];
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (n, &c) in normalized[t * classes..(t + 1) * classes].iter_mut().zip(row) {
            *n = c as f64 / total as f64;
        }
    }
    Ok(Confusion { classes, counts, normalized, retained })
}

/// Voxelwise confusion matrix of two label volumes on the same grid.
pub fn confusion_matrix(
    pred: &LabelVolume,
    truth: &LabelVolume,
    classes: usize,
    exclude: &[u8],
) -> Result<Confusion> {
    if pred.grid() != truth.grid() {
        return Err(Error::geometry("prediction and truth volumes are on different grids"));
    }
    confusion_from_labels(pred.labels(), truth.labels(), classes, exclude)
}

/// Pixelwise confusion matrix of two label images on the same grid.
pub fn confusion_matrix_2d(
    pred: &LabelImage,
    truth: &LabelImage,
    classes: usize,
    exclude: &[u8],
) -> Result<Confusion> {
    if pred.grid() != truth.grid() {
        return Err(Error::geometry("prediction and truth images are on different grids"));
    }
    confusion_from_labels(pred.labels(), truth.labels(), classes, exclude)
}

/// Percentage of correctly predicted pixels among those whose truth class is
/// not excluded.
pub fn pixel_accuracy(
    pred: &LabelVolume,
    truth: &LabelVolume,
    classes: usize,
    exclude: &[u8],
) -> Result<f64> {
    Ok(confusion_matrix(pred, truth, classes, exclude)?.accuracy_pct())
}

/// Phase names with their volume percentages, in catalog order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbundanceTable {
    pub phases: Vec<String>,
    pub percent: Vec<f64>,
}

impl AbundanceTable {
    pub fn get(&self, phase: &str) -> Option<f64> {
        self.phases.iter().position(|p| p == phase).map(|i| self.percent[i])
    }
}

/// Fraction of nonvoid voxels per catalog phase, as percentages summing
/// to 100.
pub fn phase_abundances(labels: &LabelVolume, catalog: &PhaseCatalog) -> Result<AbundanceTable> {
    let n_phases = catalog.names().len();
    let mut counts = vec![0u64; n_phases];
    let mut total = 0u64;
    for &l in labels.labels() {
        if l == 0 {
            continue;
        }
        let idx = l as usize - 1;
        if idx >= n_phases {
            return Err(Error::data(format!("label {l} has no catalog phase")));
        }
        counts[idx] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::data("volume contains no nonvoid voxels"));
    }
    Ok(AbundanceTable {
        phases: catalog.names().iter().map(|s| s.to_string()).collect(),
        percent: counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect(),
    })
}

/// Signed per-phase differences `a - b` in percentage points. Phases are
/// matched by name, so the two tables may be ordered differently, but their
/// phase sets must be identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbundanceDelta {
    pub phases: Vec<String>,
    pub delta: Vec<f64>,
    pub max_abs: f64,
}

pub fn compare_abundances(a: &AbundanceTable, b: &AbundanceTable) -> Result<AbundanceDelta> {
    if a.phases.len() != b.phases.len() {
        return Err(Error::data("abundance tables list different phase counts"));
    }
    let mut delta = Vec::with_capacity(a.phases.len());
    for (phase, &pa) in a.phases.iter().zip(&a.percent) {
        let pb = b
            .get(phase)
            .ok_or_else(|| Error::data(format!("phase {phase} missing from second table")))?;
        delta.push(pa - pb);
    }
    let max_abs = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(AbundanceDelta { phases: a.phases.clone(), delta, max_abs })
}

/// Confusion matrix as CSV with class names heading both axes.
pub fn confusion_csv(c: &Confusion, names: &[String]) -> String {
    let mut out = String::from("truth\\pred");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, name) in names.iter().enumerate() {
        out.push_str(name);
        for p in 0..c.classes {
            out.push_str(&format!(",{:.6}", c.normalized[t * c.classes + p]));
        }
        out.push('\n');
    }
    out
}

/// Abundance table as a two-column CSV (mineral, percentage).
pub fn abundance_csv(t: &AbundanceTable) -> String {
    let mut out = String::from("mineral,abundance_pct\n");
    for (phase, pct) in t.phases.iter().zip(&t.percent) {
        out.push_str(&format!("{phase},{pct:.2}\n"));
    }
    out
}

/// Cluster centroid table as CSV: one row per nonvoid cluster with its
/// assigned phase, channel means, and abundance.
pub fn centroid_csv(
    result: &crate::cluster::ClusterResult,
    assignment: &std::collections::BTreeMap<usize, String>,
) -> String {
    let mut out = String::from("phase,cluster");
    for ch in &result.channels {
        out.push(',');
        out.push_str(ch);
    }
    out.push_str(",abundance_pct\n");
    for (&cluster, phase) in assignment {
        out.push_str(&format!("{phase},{cluster}"));
        for v in &result.centroids[cluster] {
            out.push_str(&format!(",{v:.2}"));
        }
        out.push_str(&format!(",{:.2}\n", result.abundance_pct[cluster]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Phase;
    use crate::grid::Grid3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn volume(dims: [usize; 3], labels: Vec<u8>) -> LabelVolume {
        LabelVolume::new(Grid3::isotropic(dims, 1.0).unwrap(), labels).unwrap()
    }

    fn catalog(names: &[&str]) -> PhaseCatalog {
        let phases = names
            .iter()
            .map(|n| Phase {
                name: n.to_string(),
                composition: BTreeMap::new(),
                expected_abundance_pct: None,
                abundance_tolerance_pct: None,
                ct_density_rank: None,
            })
            .collect();
        PhaseCatalog::new(phases, vec![], None).unwrap()
    }

    #[test]
    fn perfect_prediction_gives_the_identity_matrix() {
        let truth = volume([1, 2, 4], vec![1, 2, 1, 2, 3, 3, 1, 2]);
        let c = confusion_matrix(&truth, &truth, 4, &[0]).unwrap();
        for t in 1..4 {
            for p in 1..4 {
                let want = if t == p { 1.0 } else { 0.0 };
                assert_eq!(c.normalized[t * 4 + p], want);
            }
        }
        assert_eq!(c.retained, 8);
        assert_eq!(pixel_accuracy(&truth, &truth, 4, &[0]).unwrap(), 100.0);
    }

    #[test]
    fn constant_prediction_fills_one_column() {
        let truth = volume([1, 2, 2], vec![1, 2, 1, 2]);
        let pred = volume([1, 2, 2], vec![2, 2, 2, 2]);
        let c = confusion_matrix(&pred, &truth, 3, &[0]).unwrap();
        assert_eq!(c.normalized[1 * 3 + 2], 1.0);
        assert_eq!(c.normalized[2 * 3 + 2], 1.0);
        assert_eq!(c.normalized[1 * 3 + 1], 0.0);
        assert_eq!(c.accuracy_pct(), 50.0);
    }

    #[test]
    fn random_pair_matches_direct_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 64;
        let pv: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let tv: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let c =
            confusion_matrix(&volume([1, 8, 8], pv.clone()), &volume([1, 8, 8], tv.clone()), 3, &[])
                .unwrap();
        let mut want = vec![0u64; 9];
        for i in 0..n {
            want[tv[i] as usize * 3 + pv[i] as usize] += 1;
        }
        assert_eq!(c.counts, want);
        for t in 0..3 {
            let total: u64 = want[t * 3..(t + 1) * 3].iter().sum();
            if total > 0 {
                assert!((c.row_sum(t) - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(c.retained, 64);
    }

    #[test]
    fn excluded_truth_pixels_are_not_counted() {
        let truth = volume([1, 1, 4], vec![0, 0, 1, 2]);
        let pred = volume([1, 1, 4], vec![1, 2, 1, 1]);
        let c = confusion_matrix(&pred, &truth, 3, &[0]).unwrap();
        assert_eq!(c.retained, 2);
        assert_eq!(c.counts.iter().sum::<u64>(), 2);
        assert_eq!(c.row_sum(0), 0.0);
        // Accuracy counts only the two retained pixels: one correct.
        assert_eq!(c.accuracy_pct(), 50.0);
    }

    #[test]
    fn degenerate_inputs_error() {
        let a = volume([1, 1, 2], vec![1, 1]);
        let b = volume([1, 2, 1], vec![1, 1]);
        assert!(matches!(confusion_matrix(&a, &b, 2, &[]), Err(Error::Geometry(_))));
        let all_void = volume([1, 1, 2], vec![0, 0]);
        assert!(matches!(
            confusion_matrix(&a, &all_void, 2, &[0]),
            Err(Error::Data(_))
        ));
        let too_big = volume([1, 1, 2], vec![5, 0]);
        assert!(confusion_matrix(&too_big, &a, 2, &[]).is_err());
    }

    #[test]
    fn accuracy_equals_diagonal_over_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pv: Vec<u8> = (0..125).map(|_| rng.random_range(0..4)).collect();
        let tv: Vec<u8> = (0..125).map(|_| rng.random_range(0..4)).collect();
        let pred = volume([5, 5, 5], pv);
        let truth = volume([5, 5, 5], tv);
        let c = confusion_matrix(&pred, &truth, 4, &[0]).unwrap();
        let diag: u64 = (0..4).map(|i| c.counts[i * 4 + i]).sum();
        let total: u64 = c.counts.iter().sum();
        let want = 100.0 * diag as f64 / total as f64;
        assert_eq!(pixel_accuracy(&pred, &truth, 4, &[0]).unwrap(), want);
    }

    #[test]
    fn three_to_one_split_is_75_25() {
        let cat = catalog(&["a", "b"]);
        let vol = volume([1, 2, 4], vec![1, 1, 1, 2, 0, 0, 0, 0]);
        let t = phase_abundances(&vol, &cat).unwrap();
        assert_eq!(t.percent, vec![75.0, 25.0]);
        assert!((t.percent.iter().sum::<f64>() - 100.0).abs() < 0.01);
    }

    #[test]
    fn abundances_follow_catalog_order() {
        // Swapping the catalog order (with labels remapped to match) swaps
        // the reported rows.
        let cat_ab = catalog(&["a", "b"]);
        let cat_ba = catalog(&["b", "a"]);
        let vol_ab = volume([1, 1, 4], vec![1, 1, 1, 2]);
        let vol_ba = volume([1, 1, 4], vec![2, 2, 2, 1]);
        let ta = phase_abundances(&vol_ab, &cat_ab).unwrap();
        let tb = phase_abundances(&vol_ba, &cat_ba).unwrap();
        assert_eq!(ta.get("a"), tb.get("a"));
        assert_eq!(ta.get("b"), tb.get("b"));
        assert_eq!(tb.phases, vec!["b".to_string(), "a".to_string()]);
    }

    #[test]
    fn all_void_volume_is_an_error() {
        let cat = catalog(&["a"]);
        let vol = volume([1, 1, 2], vec![0, 0]);
        assert!(matches!(phase_abundances(&vol, &cat), Err(Error::Data(_))));
        let stray = volume([1, 1, 2], vec![1, 3]);
        assert!(phase_abundances(&stray, &cat).is_err());
    }

    #[test]
    fn comparison_is_signed_and_order_insensitive() {
        let a = AbundanceTable {
            phases: vec!["x".into(), "y".into()],
            percent: vec![60.0, 40.0],
        };
        let b = AbundanceTable {
            phases: vec!["y".into(), "x".into()],
            percent: vec![55.0, 45.0],
        };
        let d = compare_abundances(&a, &b).unwrap();
        assert_eq!(d.delta, vec![60.0 - 45.0, 40.0 - 55.0]);
        assert_eq!(d.max_abs, 15.0);

        let same = compare_abundances(&a, &a).unwrap();
        assert!(same.delta.iter().all(|&d| d == 0.0));
        assert_eq!(same.max_abs, 0.0);

        let c = AbundanceTable { phases: vec!["x".into(), "z".into()], percent: vec![1.0, 2.0] };
        assert!(compare_abundances(&a, &c).is_err());
    }

    #[test]
    fn counts_rebuild_matches_direct_construction() {
        let grid = Grid2::isotropic([2, 2], 1.0).unwrap();
        let pred = LabelImage::new(grid, vec![0, 1, 1, 2]).unwrap();
        let truth = LabelImage::new(grid, vec![0, 1, 2, 2]).unwrap();
        let direct = confusion_matrix_2d(&pred, &truth, 3, &[]).unwrap();
        let rebuilt = Confusion::from_counts(3, direct.counts.clone()).unwrap();
        assert_eq!(rebuilt.counts, direct.counts);
        assert_eq!(rebuilt.normalized, direct.normalized);
        assert_eq!(rebuilt.retained, direct.retained);

        // Summing two copies of the counts doubles retained but keeps the
        // same row distribution.
        let doubled: Vec<u64> = direct.counts.iter().map(|&c| c * 2).collect();
        let merged = Confusion::from_counts(3, doubled).unwrap();
        assert_eq!(merged.retained, 2 * direct.retained);
        assert_eq!(merged.normalized, direct.normalized);

        assert!(Confusion::from_counts(3, vec![0; 4]).is_err());
        assert!(Confusion::from_counts(2, vec![0; 4]).is_err());
    }

    #[test]
    fn csv_layouts_are_stable() {
        let c = Confusion {
            classes: 2,
            counts: vec![3, 1, 0, 4],
            normalized: vec![0.75, 0.25, 0.0, 1.0],
            retained: 8,
        };
        let names = vec!["void".to_string(), "quartz".to_string()];
        let csv = confusion_csv(&c, &names);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "truth\\pred,void,quartz");
        assert_eq!(lines.next().unwrap(), "void,0.750000,0.250000");
        assert_eq!(lines.next().unwrap(), "quartz,0.000000,1.000000");

        let t = AbundanceTable {
            phases: vec!["albite".into(), "quartz".into()],
            percent: vec![50.481, 14.709],
        };
        let csv = abundance_csv(&t);
        assert_eq!(csv, "mineral,abundance_pct\nalbite,50.48\nquartz,14.71\n");
    }

    #[test]
    fn centroid_csv_lists_assigned_clusters_with_channels() {
        let grid2 = crate::grid::Grid2::isotropic([1, 2], 1.0).unwrap();
        let result = crate::cluster::ClusterResult {
            k: 3,
            centroids: vec![vec![0.0, 1.0], vec![10.0, 20.0], vec![30.0, 40.0]],
            channels: vec!["Si".into(), "CT".into()],
            labels: crate::image::LabelImage::new(grid2, vec![1, 2]).unwrap(),
            inertia: 0.0,
            abundance_pct: vec![0.0, 50.0, 50.0],
            void_cluster: Some(0),
        };
        let mut assignment = BTreeMap::new();
        assignment.insert(1usize, "quartz".to_string());
        assignment.insert(2usize, "albite".to_string());
        let csv = centroid_csv(&result, &assignment);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "phase,cluster,Si,CT,abundance_pct");
        assert_eq!(lines.next().unwrap(), "quartz,1,10.00,20.00,50.00");
        assert_eq!(lines.next().unwrap(), "albite,2,30.00,40.00,50.00");
    }
}
