//! Evaluation protocols: joint errors under alignment, skeleton rescaling,
//! depth alignment, PCK curves, pose clustering, view sweeps and joint
//! regressors.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    None,
    Root,
}

fn check_sets(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::JointSetMismatch(format!(
            "prediction has {} joints, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::JointSetMismatch("no joints to compare".into()));
    }
    Ok(())
}

fn check_root(n: usize, root: usize) -> Result<()> {
    if root >= n {
        return Err(Error::JointSetMismatch(format!(
            "root {root} outside {n} joints"
        )));
    }
    Ok(())
}

/// Euclidean error of every joint.
pub fn joint_errors(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    alignment: Alignment,
    root: usize,
) -> Result<Vec<f64>> {
    check_sets(pred, gt)?;
    let shift = match alignment {
        Alignment::None => Vector3::zeros(),
        Alignment::Root => {
            check_root(pred.len(), root)?;
            gt[root] - pred[root]
        }
    };
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p + shift - g).norm())
        .collect())
}

/// Mean per-joint position error, in the units of the inputs.
pub fn mpjpe(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    alignment: Alignment,
    root: usize,
) -> Result<f64> {
    let e = joint_errors(pred, gt, alignment, root)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn bone_lengths(joints: &[Vector3<f64>], parts: &[(usize, usize)]) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|&(m, n)| {
            if m >= joints.len() || n >= joints.len() {
                return Err(Error::JointSetMismatch(format!(
                    "part ({m}, {n}) outside {} joints",
                    joints.len()
                )));
            }
            Ok((joints[n] - joints[m]).norm())
        })
        .collect()
}

/// Uniform scale about the root so the mean bone length matches the reference mean.
pub fn rescale_to_average_skeleton(
    pred: &[Vector3<f64>],
    parts: &[(usize, usize)],
    reference: &[f64],
    root: usize,
) -> Result<Vec<Vector3<f64>>> {
    check_root(pred.len(), root)?;
    if reference.len() != parts.len() || parts.is_empty() {
        return Err(Error::JointSetMismatch(format!(
            "{} reference lengths for {} parts",
            reference.len(),
            parts.len()
        )));
    }
    let own = bone_lengths(pred, parts)?;
    let own_mean = own.iter().sum::<f64>() / own.len() as f64;
    let ref_mean = reference.iter().sum::<f64>() / reference.len() as f64;
    if !(own_mean > 0.0) {
        return Err(Error::Config("prediction has zero mean bone length".into()));
    }
    let s = ref_mean / own_mean;
    let r = pred[root];
    Ok(pred.iter().map(|p| r + (p - r) * s).collect())
}

/// Scale every joint about the camera center so the root depth matches
/// `gt_root_depth`; rays through the joints are unchanged.
pub fn depth_align(
    pred: &[Vector3<f64>],
    gt_root_depth: f64,
    root: usize,
    center: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    check_root(pred.len(), root)?;
    let own = pred[root].z - center.z;
    let target = gt_root_depth - center.z;
    if !(own > 0.0 && target > 0.0) {
        return Err(Error::Config(format!(
            "root depths must lie in front of the camera (predicted {own}, target {target})"
        )));
    }
    let alpha = target / own;
    Ok(pred.iter().map(|p| center + (p - center) * alpha).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckCurve {
    pub thresholds: Vec<f64>,
    pub pck: Vec<f64>,
    /// Trapezoid area divided by the threshold range.
    pub auc: f64,
}

impl PckCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold_mm,pck\n");
        for (t, p) in self.thresholds.iter().zip(&self.pck) {
            let _ = writeln!(s, "{t},{p}");
        }
        s
    }
}

/// PCK on `n` evenly spaced thresholds over `[t_min, t_max]` and its normalized area.
pub fn pck_auc(errors: &[f64], t_min: f64, t_max: f64, n: usize) -> Result<PckCurve> {
    if !(t_min.is_finite() && t_max.is_finite() && t_max > t_min) || n < 2 {
        return Err(Error::Config(format!(
            "PCK needs t_max > t_min and at least two thresholds (got {t_min}..{t_max}, n = {n})"
        )));
    }
    if errors.is_empty() {
        return Err(Error::Config("PCK needs at least one error".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let thresholds: Vec<f64> = (0..n)
        .map(|i| t_min + (t_max - t_min) * i as f64 / (n - 1) as f64)
        .collect();
    let pck: Vec<f64> = thresholds
        .iter()
        .map(|t| sorted.partition_point(|e| e <= t) as f64 / sorted.len() as f64)
        .collect();
    let area: f64 = thresholds
        .windows(2)
        .zip(pck.windows(2))
        .map(|(t, p)| 0.5 * (p[0] + p[1]) * (t[1] - t[0]))
        .sum();
    Ok(PckCurve {
        auc: area / (t_max - t_min),
        thresholds,
        pck,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 14,
            restarts: 50,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clusters {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
}

impl Clusters {
    /// Mean of `errors` (one per pose) within each cluster; `None` for empty clusters.
    pub fn mean_errors(&self, errors: &[f64]) -> Result<Vec<Option<f64>>> {
        if errors.len() != self.assignments.len() {
            return Err(Error::JointSetMismatch(format!(
                "{} errors for {} clustered poses",
                errors.len(),
                self.assignments.len()
            )));
        }
        let k = self.centroids.len();
        let mut sum = vec![0.0; k];
        let mut count = vec![0usize; k];
        for (&a, e) in self.assignments.iter().zip(errors) {
            sum[a] += e;
            count[a] += 1;
        }
        Ok(sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect())
    }
}

/// Root-aligned joint coordinates flattened into one vector per pose.
pub fn root_aligned_features(poses: &[Vec<Vector3<f64>>], root: usize) -> Result<Vec<Vec<f64>>> {
    let Some(first) = poses.first() else {
        return Ok(Vec::new());
    };
    poses
        .iter()
        .map(|p| {
            if p.len() != first.len() {
                return Err(Error::JointSetMismatch(format!(
                    "poses with {} and {} joints",
                    first.len(),
                    p.len()
                )));
            }
            check_root(p.len(), root)?;
            Ok(p.iter()
                .flat_map(|j| (j - p[root]).iter().copied().collect::<Vec<_>>())
                .collect())
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with k-means++ seeding; the restart with the lowest inertia wins.
pub fn kmeans(points: &[Vec<f64>], config: &KMeansConfig, seed: u64) -> Result<Clusters> {
    let k = config.k;
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= {} samples, got k = {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("k-means points differ in length".into()));
    }
    let mut best: Option<Clusters> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = stream(seed, "kmeans", restart as u64);
        let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
        let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
        while centroids.len() < k {
            let total: f64 = d2.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = points.len() - 1;
                for (i, d) in d2.iter().enumerate() {
                    if u < *d {
                        pick = i;
                        break;
                    }
                    u -= d;
                }
                pick
            } else {
                rng.random_range(0..points.len())
            };
            centroids.push(points[next].clone());
            for (d, p) in d2.iter_mut().zip(points) {
                *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
            }
        }
        let mut assignments = vec![usize::MAX; points.len()];
        for _ in 0..config.max_iter {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let a = nearest(p, &centroids);
                if a != assignments[i] {
                    assignments[i] = a;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sum = vec![vec![0.0; dim]; k];
            let mut count = vec![0usize; k];
            for (p, &a) in points.iter().zip(&assignments) {
                count[a] += 1;
                for (s, x) in sum[a].iter_mut().zip(p) {
                    *s += x;
                }
            }
            for c in 0..k {
                // an emptied cluster keeps its previous centroid
                if count[c] > 0 {
                    centroids[c] = sum[c].iter().map(|s| s / count[c] as f64).collect();
                }
            }
        }
        let inertia = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(Clusters {
                assignments,
                centroids,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (c, q) in centroids.iter().enumerate() {
        let d = sq_dist(p, q);
        if d < dist {
            dist = d;
            best = c;
        }
    }
    best
}

/// Cluster ground-truth poses after root alignment.
pub fn pose_clusters(
    poses: &[Vec<Vector3<f64>>],
    root: usize,
    config: &KMeansConfig,
    seed: u64,
) -> Result<Clusters> {
    kmeans(&root_aligned_features(poses, root)?, config, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub azimuth: f64,
    pub elevation: f64,
    pub count: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_CSV_HEADER: &str = "azimuth_deg,elevation_deg,count,mean_mpjpe_cm,std_mpjpe_cm";

impl SweepGrid {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_CSV_HEADER}\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.azimuth,
                c.elevation,
                c.count,
                opt(c.mean),
                opt(c.std)
            );
        }
        s
    }

    /// Mean over every error in the grid.
    pub fn global_mean(&self) -> Option<f64> {
        let n: usize = self.cells.iter().map(|c| c.count).sum();
        (n > 0).then(|| {
            self.cells
                .iter()
                .filter_map(|c| c.mean.map(|m| m * c.count as f64))
                .sum::<f64>()
                / n as f64
        })
    }
}

/// Per-view statistics on the full `azimuths x elevations` grid; views with
/// no results are reported as absent.
pub fn view_sweep_report(
    results: &[(f64, f64, f64)],
    azimuths: &[f64],
    elevations: &[f64],
) -> SweepGrid {
    let mut cells = Vec::with_capacity(azimuths.len() * elevations.len());
    for &az in azimuths {
        for &el in elevations {
            let errs: Vec<f64> = results
                .iter()
                .filter(|(a, e, _)| *a == az && *e == el)
                .map(|r| r.2)
                .collect();
            let count = errs.len();
            let mean = (count > 0).then(|| errs.iter().sum::<f64>() / count as f64);
            let std = mean.map(|m| {
                (errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / count as f64).sqrt()
            });
            cells.push(SweepCell {
                azimuth: az,
                elevation: el,
                count,
                mean,
                std,
            });
        }
    }
    SweepGrid { cells }
}

/// Linear map from source joints to target joints, shared across the three
/// coordinates: `target_t = sum_s w[t][s] source_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRegressor {
    pub weights: DMatrix<f64>,
}

impl JointRegressor {
    pub fn apply(&self, source: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        if source.len() != self.weights.ncols() {
            return Err(Error::JointSetMismatch(format!(
                "regressor expects {} source joints, got {}",
                self.weights.ncols(),
                source.len()
            )));
        }
        Ok((0..self.weights.nrows())
            .map(|t| {
                source
                    .iter()
                    .enumerate()
                    .map(|(s, p)| p * self.weights[(t, s)])
                    .sum()
            })
            .collect())
    }
}

/// Ridge least squares over all frames and coordinates.
pub fn fit_joint_regressor(
    source: &[Vec<Vector3<f64>>],
    target: &[Vec<Vector3<f64>>],
    lambda: f64,
) -> Result<JointRegressor> {
    if source.len() != target.len() || source.is_empty() {
        return Err(Error::JointSetMismatch(format!(
            "{} source frames for {} target frames",
            source.len(),
            target.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "ridge lambda must be finite and non-negative, got {lambda}"
        )));
    }
    let ns = source[0].len();
    let nt = target[0].len();
    if source.iter().any(|f| f.len() != ns) || target.iter().any(|f| f.len() != nt) {
        return Err(Error::JointSetMismatch(
            "frames differ in joint count".into(),
        ));
    }
    let rows = 3 * source.len();
    let x = DMatrix::from_fn(rows, ns, |r, s| source[r / 3][s][r % 3]);
    let y = DMatrix::from_fn(rows, nt, |r, t| target[r / 3][t][r % 3]);
    let mut gram = x.transpose() * &x;
    for i in 0..ns {
        gram[(i, i)] += lambda;
    }
    let rhs = x.transpose() * y;
    let sol = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.clone().lu().solve(&rhs))
        .ok_or(Error::Singular(lambda))?;
    Ok(JointRegressor {
        weights: sol.transpose(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};

    fn random_pose(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                let (x, y, z): (f64, f64, f64) = (
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                Vector3::new(x * 20.0, y * 20.0, z * 20.0 + 300.0)
            })
            .collect()
    }

    #[test]
    fn mpjpe_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(&mut rng, 10);
        assert_eq!(mpjpe(&gt, &gt, Alignment::None, 0).unwrap(), 0.0);
        let shifted: Vec<_> = gt
            .iter()
            .map(|p| p + Vector3::new(3.0, -1.0, 2.0))
            .collect();
        assert!(mpjpe(&shifted, &gt, Alignment::Root, 0).unwrap() < 1e-12);
        let r = gt[0];
        let scaled: Vec<_> = gt.iter().map(|p| r + (p - r) * 1.1).collect();
        let oracle = gt.iter().map(|p| 0.1 * (p - r).norm()).sum::<f64>() / gt.len() as f64;
        assert!((mpjpe(&scaled, &gt, Alignment::Root, 0).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(
            mpjpe(&gt[..3], &gt, Alignment::Root, 0),
            Err(Error::JointSetMismatch(_))
        ));
    }

    #[test]
    fn rescale_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pose = random_pose(&mut rng, 5);
        let parts = [(0, 1), (1, 2), (0, 3), (3, 4)];
        let lengths = bone_lengths(&pose, &parts).unwrap();
        let same = rescale_to_average_skeleton(&pose, &parts, &lengths, 0).unwrap();
        assert!(same.iter().zip(&pose).all(|(a, b)| (a - b).norm() < 1e-12));
        let half: Vec<_> = pose.iter().map(|p| pose[0] + (p - pose[0]) * 0.5).collect();
        let back = rescale_to_average_skeleton(&half, &parts, &lengths, 0).unwrap();
        assert!(back.iter().zip(&pose).all(|(a, b)| (a - b).norm() < 1e-12));
        let reference = [10.0, 20.0, 30.0, 40.0];
        let out = rescale_to_average_skeleton(&pose, &parts, &reference, 0).unwrap();
        let s = 25.0 / (lengths.iter().sum::<f64>() / 4.0);
        for (b, l) in bone_lengths(&out, &parts).unwrap().iter().enumerate() {
            assert!((l - s * lengths[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_align_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let gt = random_pose(&mut rng, 6);
        let o = Vector3::zeros();
        let half: Vec<_> = gt.iter().map(|p| p * 0.5).collect();
        let out = depth_align(&half, gt[0].z, 0, &o).unwrap();
        assert!(mpjpe(&out, &gt, Alignment::None, 0).unwrap() < 1e-9);
        let same = depth_align(&gt, gt[0].z, 0, &o).unwrap();
        assert_eq!(same, gt);
        assert!(depth_align(&gt, -1.0, 0, &o).is_err());
    }

    #[test]
    fn pck_examples() {
        let c = pck_auc(&[0.0; 5], 20.0, 50.0, 31).unwrap();
        assert!(c.pck.iter().all(|p| *p == 1.0));
        assert!((c.auc - 1.0).abs() < 1e-12);
        let c = pck_auc(&[30.0], 20.0, 50.0, 31).unwrap();
        assert_eq!(c.pck[0], 0.0);
        assert_eq!(*c.pck.last().unwrap(), 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let errs: Vec<f64> = (0..100_000).map(|_| rng.random_range(20.0..50.0)).collect();
        let c = pck_auc(&errs, 20.0, 50.0, 301).unwrap();
        assert!((c.auc - 0.5).abs() < 0.02);
        assert!(pck_auc(&errs, 50.0, 20.0, 10).is_err());
    }

    #[test]
    fn kmeans_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = if i % 2 == 0 { 0.0 } else { 100.0 };
                vec![c + rng.random::<f64>(), c + rng.random::<f64>()]
            })
            .collect();
        let one = kmeans(
            &pts,
            &KMeansConfig {
                k: 1,
                ..KMeansConfig::default()
            },
            1,
        )
        .unwrap();
        let mean: Vec<f64> = (0..2)
            .map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / 40.0)
            .collect();
        assert!(sq_dist(&one.centroids[0], &mean) < 1e-18);
        let two = kmeans(
            &pts,
            &KMeansConfig {
                k: 2,
                ..KMeansConfig::default()
            },
            1,
        )
        .unwrap();
        for (i, &a) in two.assignments.iter().enumerate() {
            assert_eq!(a, two.assignments[i % 2]);
        }
        assert_ne!(two.assignments[0], two.assignments[1]);
        assert_eq!(
            two,
            kmeans(
                &pts,
                &KMeansConfig {
                    k: 2,
                    ..KMeansConfig::default()
                },
                1
            )
            .unwrap()
        );
        assert!(kmeans(
            &pts[..3],
            &KMeansConfig {
                k: 4,
                ..KMeansConfig::default()
            },
            1
        )
        .is_err());
        let errs: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 1.0 } else { 3.0 })
            .collect();
        let means = two.mean_errors(&errs).unwrap();
        assert_eq!(means[two.assignments[0]], Some(1.0));
        assert_eq!(means[two.assignments[1]], Some(3.0));
    }

    #[test]
    fn sweep_examples() {
        let results = [(0.0, 0.0, 2.0), (0.0, 0.0, 4.0), (90.0, 0.0, 1.0)];
        let grid = view_sweep_report(&results, &[0.0, 90.0, 180.0], &[0.0]);
        assert_eq!(grid.cells[0].mean, Some(3.0));
        assert_eq!(grid.cells[0].std, Some(1.0));
        assert_eq!(grid.cells[2].count, 0);
        assert_eq!(grid.cells[2].mean, None);
        let csv = grid.to_csv();
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert!(csv.lines().nth(3).unwrap().ends_with("NA,NA"));
        assert!((grid.global_mean().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn regressor_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let source: Vec<Vec<Vector3<f64>>> = (0..30).map(|_| random_pose(&mut rng, 6)).collect();
        let subset: Vec<Vec<Vector3<f64>>> = source.iter().map(|f| vec![f[4], f[1]]).collect();
        let reg = fit_joint_regressor(&source, &subset, 1e-12).unwrap();
        for (s, t) in source.iter().zip(&subset) {
            let out = reg.apply(s).unwrap();
            assert!(out.iter().zip(t).all(|(a, b)| (a - b).norm() <= 1e-9));
        }
        let half: Vec<Vec<Vector3<f64>>> = source
            .iter()
            .map(|f| f.iter().map(|p| p * 0.5).collect())
            .collect();
        let reg = fit_joint_regressor(&source, &half, 1e-12).unwrap();
        assert!(
            (reg.weights.clone() - DMatrix::identity(6, 6) * 0.5)
                .abs()
                .max()
                < 1e-9
        );
        let reg = fit_joint_regressor(&source, &half, 1e15).unwrap();
        assert!(reg.weights.abs().max() < 1e-6);
    }

    proptest! {
        #[test]
        fn mpjpe_is_a_pseudometric(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_pose(&mut rng, 8), random_pose(&mut rng, 8), random_pose(&mut rng, 8));
            for al in [Alignment::None, Alignment::Root] {
                let ab = mpjpe(&a, &b, al, 0).unwrap();
                prop_assert!((ab - mpjpe(&b, &a, al, 0).unwrap()).abs() < 1e-12);
                prop_assert_eq!(mpjpe(&a, &a, al, 0).unwrap(), 0.0);
                prop_assert!(ab <= mpjpe(&a, &c, al, 0).unwrap() + mpjpe(&c, &b, al, 0).unwrap() + 1e-12);
            }
        }

        #[test]
        fn depth_align_preserves_rays(seed in 0u64..1000, depth in 100.0f64..600.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng, 8);
            let c = Vector3::new(1.0, -2.0, 0.5);
            let out = depth_align(&pose, depth, 2, &c).unwrap();
            prop_assert!((out[2].z - depth).abs() < 1e-9);
            for (a, b) in pose.iter().zip(&out) {
                prop_assert!(((a - c).normalize() - (b - c).normalize()).norm() < 1e-9);
            }
        }

        #[test]
        fn pck_is_monotone(errs in proptest::collection::vec(0.0f64..80.0, 1..50)) {
            let c = pck_auc(&errs, 20.0, 50.0, 31).unwrap();
            prop_assert!(c.pck.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn rescale_preserves_bone_directions(seed in 0u64..1000, target in 1.0f64..50.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng, 5);
            let parts = [(0, 1), (1, 2), (0, 3), (3, 4)];
            let out = rescale_to_average_skeleton(&pose, &parts, &[target; 4], 0).unwrap();
            for &(m, n) in &parts {
                let d0 = (pose[n] - pose[m]).normalize();
                let d1 = (out[n] - out[m]).normalize();
                prop_assert!((d0.dot(&d1) - 1.0).abs() < 1e-9);
            }
        }
    }
}
