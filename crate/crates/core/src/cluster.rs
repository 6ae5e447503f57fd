//! Household partitions.
//!
//! Three ways to split a fleet of households into clusters: uniformly
//! at random, by a categorical attribute, or by embedding each
//! household's rescaled consumption history with non-negative matrix
//! factorization and running k-means on the embedding. Partitions are
//! compared with the adjusted Rand index.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::panel::PanelFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Random { seed: u64 },
    Attribute { column: String },
    Nmf { r: usize, k: usize, seed: u64 },
}

/// A partition of the household set into clusters 1..k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clustering {
    /// household id → cluster index in {1..k}.
    pub assignment: BTreeMap<String, usize>,
    pub k: usize,
    pub provenance: Provenance,
}

impl Clustering {
    /// Build from raw labels, dropping empty clusters and compacting
    /// indices to 1..k.
    pub fn from_labels(
        ids: &[String],
        labels: &[usize],
        provenance: Provenance,
    ) -> Self {
        let mut used: Vec<usize> = labels.to_vec();
        used.sort_unstable();
        used.dedup();
        let remap: BTreeMap<usize, usize> = used
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new + 1))
            .collect();
        let assignment = ids
            .iter()
            .zip(labels.iter())
            .map(|(id, l)| (id.clone(), remap[l]))
            .collect();
        Clustering {
            assignment,
            k: used.len(),
            provenance,
        }
    }

    pub fn households(&self) -> Vec<String> {
        self.assignment.keys().cloned().collect()
    }

    /// Households of one cluster (index in 1..k).
    pub fn members(&self, cluster: usize) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["household_id", "cluster"])?;
        for (id, c) in &self.assignment {
            out.write_record([id.as_str(), &c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, provenance: Provenance) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut assignment = BTreeMap::new();
        let mut k = 0;
        for row in input.deserialize::<(String, usize)>() {
            let (id, c) = row?;
            k = k.max(c);
            assignment.insert(id, c);
        }
        Ok(Clustering {
            assignment,
            k,
            provenance,
        })
    }
}

// ---------------------------------------------------------------------------
// Rescaling and NMF
// ---------------------------------------------------------------------------

/// Row-rescaled history: entry (i, t) is household i's reading divided
/// by the household's mean over the window, so every row has mean 1.
pub fn rescale_history(households: &PanelFrame) -> Result<DMatrix<f64>> {
    let n = households.n_nodes();
    let t0 = households.len();
    let mut y0 = DMatrix::zeros(n, t0);
    for i in 0..n {
        let col = households.column(i);
        let mean: f64 = col.iter().sum::<f64>() / t0 as f64;
        if mean <= 0.0 {
            return Err(Error::ZeroMeanHousehold(households.nodes[i].clone()));
        }
        for t in 0..t0 {
            y0[(i, t)] = col[t] / mean;
        }
    }
    Ok(y0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfFactorization {
    pub w: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: usize,
    /// Final squared Frobenius reconstruction error.
    pub objective: f64,
    /// Objective after each sweep, non-increasing.
    pub objective_trace: Vec<f64>,
}

fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Factor `Y₀ ≈ W H` with W, H ≥ 0 by column-wise coordinate descent
/// (each column of W, then each row of H, is minimized exactly subject
/// to non-negativity), from a seeded non-negative random start.
pub fn nmf(
    y0: &DMatrix<f64>,
    r: usize,
    seed: u64,
    max_sweeps: usize,
    tol: f64,
) -> Result<NmfFactorization> {
    let (n, t0) = (y0.nrows(), y0.ncols());
    if y0.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeInput);
    }
    if r == 0 || r > n.min(t0) {
        return Err(Error::RankTooLarge { r, max: n.min(t0) });
    }
    let mean = y0.iter().sum::<f64>() / (n * t0) as f64;
    let scale = (mean / r as f64).sqrt().max(1e-12);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut w = DMatrix::from_fn(n, r, |_, _| rng.gen_range(0.0..1.0) * scale);
    let mut h = DMatrix::from_fn(r, t0, |_, _| rng.gen_range(0.0..1.0) * scale);

    let mut trace = Vec::with_capacity(max_sweeps + 1);
    let mut residual = y0 - &w * &h;
    trace.push(frobenius_sq(&residual));
    for _ in 0..max_sweeps {
        // Exact non-negative minimization of one factor column/row at a
        // time keeps the objective non-increasing.
        for j in 0..r {
            // Update column j of W against the residual plus its own
            // contribution.
            let hj = h.row(j).clone_owned();
            let denom = hj.dot(&hj);
            if denom > 0.0 {
                let wj_old = w.column(j).clone_owned();
                let target = &residual * hj.transpose() + &wj_old * denom;
                let wj_new = target.map(|v| (v / denom).max(0.0));
                residual += (&wj_old - &wj_new) * hj;
                w.set_column(j, &wj_new);
            }
        }
        for j in 0..r {
            let wj = w.column(j).clone_owned();
            let denom = wj.dot(&wj);
            if denom > 0.0 {
                let hj_old = h.row(j).clone_owned();
                let target = wj.transpose() * &residual + &hj_old * denom;
                let hj_new = target.map(|v| (v / denom).max(0.0));
                residual += &wj * (&hj_old - &hj_new);
                h.set_row(j, &hj_new);
            }
        }
        // Recompute the residual exactly to keep drift out of the trace.
        residual = y0 - &w * &h;
        let obj = frobenius_sq(&residual);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev > 0.0 && (prev - obj) / prev < tol {
            break;
        }
    }
    Ok(NmfFactorization {
        objective: *trace.last().unwrap(),
        objective_trace: trace,
        w,
        h,
        r,
    })
}

/// Per-household embedding: each column of W rescaled to sum 1, so all
/// factors carry equal total weight.
pub fn characteristic_vectors(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = w.clone();
    for j in 0..w.ncols() {
        let sum: f64 = w.column(j).iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        for i in 0..w.nrows() {
            out[(i, j)] /= sum;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// 0-based cluster label per point.
    pub labels: Vec<usize>,
    pub centers: Vec<DVector<f64>>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

fn nearest_center(point: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = sq_dist(point, &centers[0]);
    for (i, c) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(point, c);
        // Strict inequality keeps ties on the lowest cluster index.
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (best, best_d)
}

/// Lloyd's algorithm with k-means++ seeding; empty clusters are
/// re-seeded from the point farthest from its assigned center.
pub fn kmeans(
    points: &[DVector<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansResult> {
    let n = points.len();
    if k > n || k == 0 {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = StdRng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<DVector<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let dists: Vec<f64> = points
            .iter()
            .map(|p| nearest_center(p, &centers).1)
            .collect();
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dists.iter().enumerate() {
                if draw < d {
                    chosen = i;
                    break;
                }
                draw -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next].clone());
    }

    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest_center(p, &centers);
            if labels[i] != c {
                changed = true;
            }
            labels[i] = c;
            objective += d;
        }
        trace.push(objective);

        // Recompute centers; re-seed empty clusters from the farthest point.
        let dim = points[0].len();
        let mut sums = vec![DVector::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sums[labels[i]] += p;
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]])
                            .partial_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KmeansResult {
        labels,
        centers,
        objective_trace: trace,
    })
}

/// Full pipeline from raw household history to a partition: rescale,
/// factorize, embed, cluster.
pub fn nmf_clustering(
    households: &PanelFrame,
    r: usize,
    k: usize,
    seed: u64,
) -> Result<Clustering> {
    let y0 = rescale_history(households)?;
    let fact = nmf(&y0, r, seed, 500, 1e-6)?;
    let embed = characteristic_vectors(&fact.w)?;
    let points: Vec<DVector<f64>> = (0..embed.nrows())
        .map(|i| embed.row(i).transpose())
        .collect();
    let result = kmeans(&points, k, seed.wrapping_add(1), 200)?;
    Ok(Clustering::from_labels(
        &households.nodes,
        &result.labels,
        Provenance::Nmf { r, k, seed },
    ))
}

// ---------------------------------------------------------------------------
// Adjusted Rand index
// ---------------------------------------------------------------------------

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Chance-corrected agreement between two partitions of the same set:
/// 1 for identical partitions, about 0 for independent ones.
pub fn adjusted_rand_index(p: &Clustering, q: &Clustering) -> Result<f64> {
    if p.assignment.len() != q.assignment.len()
        || !p.assignment.keys().eq(q.assignment.keys())
    {
        return Err(Error::MismatchedSets);
    }
    let n = p.assignment.len() as u64;
    let mut contingency: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut row_sums: BTreeMap<usize, u64> = BTreeMap::new();
    let mut col_sums: BTreeMap<usize, u64> = BTreeMap::new();
    for (id, &ci) in &p.assignment {
        let cj = q.assignment[id];
        *contingency.entry((ci, cj)).or_insert(0) += 1;
        *row_sums.entry(ci).or_insert(0) += 1;
        *col_sums.entry(cj).or_insert(0) += 1;
    }
    let index: f64 = contingency.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = row_sums.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = col_sums.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() == 0.0 {
        // Both partitions trivial: treat as perfect agreement.
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

// ---------------------------------------------------------------------------
// Random and attribute partitions
// ---------------------------------------------------------------------------

/// Uniform i.i.d. assignment into k clusters, then compaction of any
/// empty clusters.
pub fn random_clustering(ids: &[String], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 || k > ids.len() {
        return Err(Error::KTooLarge { k, n: ids.len() });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let labels: Vec<usize> = ids.iter().map(|_| rng.gen_range(0..k)).collect();
    Ok(Clustering::from_labels(
        ids,
        &labels,
        Provenance::Random { seed },
    ))
}

/// Categorical household attributes, one row per household.
#[derive(Debug, Clone)]
pub struct HouseholdTable {
    pub households: Vec<String>,
    pub columns: Vec<String>,
    /// values[row][col] parallel to `columns`.
    pub values: Vec<Vec<String>>,
}

impl HouseholdTable {
    /// Read a CSV whose first column is the household id.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let headers = input.headers()?.clone();
        let columns: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut households = Vec::new();
        let mut values = Vec::new();
        for row in input.records() {
            let row = row?;
            households.push(row[0].to_string());
            values.push(row.iter().skip(1).map(|s| s.to_string()).collect());
        }
        Ok(HouseholdTable {
            households,
            columns,
            values,
        })
    }

    pub fn column_values(&self, column: &str) -> Result<Vec<&str>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::UnknownColumn(column.to_string()))?;
        Ok(self.values.iter().map(|row| row[idx].as_str()).collect())
    }
}

/// One cluster per distinct attribute value; values with fewer than
/// `min_count` households are dropped and those households reported
/// back instead of clustered.
pub fn attribute_clustering(
    table: &HouseholdTable,
    column: &str,
    min_count: usize,
) -> Result<(Clustering, Vec<String>)> {
    let values = table.column_values(column)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let kept: Vec<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(&v, _)| v)
        .collect();
    let value_index: BTreeMap<&str, usize> = kept
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i + 1))
        .collect();
    let mut assignment = BTreeMap::new();
    let mut dropped = Vec::new();
    for (hh, v) in table.households.iter().zip(values.iter()) {
        match value_index.get(v) {
            Some(&c) => {
                assignment.insert(hh.clone(), c);
            }
            None => dropped.push(hh.clone()),
        }
    }
    Ok((
        Clustering {
            assignment,
            k: kept.len(),
            provenance: Provenance::Attribute {
                column: column.to_string(),
            },
        },
        dropped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::half_hourly_axis;
    use chrono::{TimeZone, Utc};

    fn household_panel(rows: Vec<Vec<f64>>, names: Vec<String>) -> PanelFrame {
        let ts = half_hourly_axis(
            Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            rows.len(),
        );
        PanelFrame::from_rows(names, ts, rows).unwrap()
    }

    #[test]
    fn rescale_rows_have_unit_mean() {
        let panel = household_panel(
            vec![vec![2.0, 1.0], vec![2.0, 3.0], vec![2.0, 2.0]],
            vec!["a".into(), "b".into()],
        );
        let y0 = rescale_history(&panel).unwrap();
        // Constant household becomes a row of ones.
        assert!(y0.row(0).iter().all(|&v| (v - 1.0).abs() < 1e-12));
        for i in 0..2 {
            let mean: f64 = y0.row(i).iter().sum::<f64>() / 3.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rescale_rejects_zero_household() {
        let panel = household_panel(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec!["z".into(), "b".into()],
        );
        assert!(matches!(
            rescale_history(&panel),
            Err(Error::ZeroMeanHousehold(n)) if n == "z"
        ));
    }

    #[test]
    fn nmf_recovers_rank_one_matrix() {
        let w = DVector::from_vec(vec![1.0, 2.0, 3.0, 0.5]);
        let h = DVector::from_vec(vec![0.2, 0.8, 1.4, 0.1, 0.6]).transpose();
        let y0 = &w * &h;
        let fact = nmf(&y0, 1, 3, 500, 1e-12).unwrap();
        assert!(fact.objective < 1e-8 * frobenius_sq(&y0));
    }

    #[test]
    fn nmf_objective_is_monotone() {
        let mut rng = StdRng::seed_from_u64(4);
        for seed in 0..5 {
            let y0 = DMatrix::from_fn(8, 12, |_, _| rng.gen_range(0.0..1.0));
            let fact = nmf(&y0, 3, seed, 50, 0.0).unwrap();
            for pair in fact.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9 * pair[0].max(1.0));
            }
        }
    }

    #[test]
    fn nmf_objective_improves_with_rank() {
        let mut rng = StdRng::seed_from_u64(5);
        let y0 = DMatrix::from_fn(10, 10, |_, _| rng.gen_range(0.0..1.0));
        let low = nmf(&y0, 9, 1, 300, 1e-10).unwrap();
        let full = nmf(&y0, 10, 1, 300, 1e-10).unwrap();
        assert!(full.objective <= low.objective + 1e-9);
    }

    #[test]
    fn nmf_input_validation() {
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 0.3, 0.2]);
        assert!(matches!(nmf(&neg, 1, 0, 10, 0.0), Err(Error::NegativeInput)));
        let ok = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            nmf(&ok, 3, 0, 10, 0.0),
            Err(Error::RankTooLarge { .. })
        ));
    }

    #[test]
    fn characteristic_vector_examples() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 2.0]);
        let e = characteristic_vectors(&w).unwrap();
        assert!((e[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((e[(0, 1)] - 0.5).abs() < 1e-12);
        assert!((e[(1, 0)] - 0.75).abs() < 1e-12);
        assert!((e[(1, 1)] - 0.5).abs() < 1e-12);
        for j in 0..2 {
            let s: f64 = e.column(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let zero = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        assert!(matches!(
            characteristic_vectors(&zero),
            Err(Error::ZeroColumn(0))
        ));
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = StdRng::seed_from_u64(6);
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..60 {
            let center = if i < 30 { 0.0 } else { 10.0 };
            points.push(DVector::from_vec(vec![
                center + rng.gen_range(-0.5..0.5),
                center + rng.gen_range(-0.5..0.5),
            ]));
            truth.push(usize::from(i >= 30));
        }
        let result = kmeans(&points, 2, 1, 100).unwrap();
        let ids: Vec<String> = (0..60).map(|i| format!("p{i}")).collect();
        let got = Clustering::from_labels(&ids, &result.labels, Provenance::Random { seed: 0 });
        let want = Clustering::from_labels(&ids, &truth, Provenance::Random { seed: 0 });
        assert!((adjusted_rand_index(&got, &want).unwrap() - 1.0).abs() < 1e-12);
        for pair in result.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
    }

    #[test]
    fn kmeans_each_point_its_own_cluster() {
        let points: Vec<DVector<f64>> = (0..4)
            .map(|i| DVector::from_vec(vec![i as f64 * 3.0]))
            .collect();
        let result = kmeans(&points, 4, 2, 50).unwrap();
        let mut labels = result.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 4);
        assert!(result.objective_trace.last().unwrap() < &1e-12);
    }

    #[test]
    fn kmeans_rejects_large_k() {
        let points = vec![DVector::from_vec(vec![0.0])];
        assert!(matches!(
            kmeans(&points, 2, 0, 10),
            Err(Error::KTooLarge { .. })
        ));
    }

    fn partition(ids: &[&str], labels: &[usize]) -> Clustering {
        let ids: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        Clustering::from_labels(&ids, labels, Provenance::Random { seed: 0 })
    }

    #[test]
    fn ari_identical_partitions() {
        let p = partition(&["a", "b", "c", "d"], &[0, 0, 1, 1]);
        assert_eq!(adjusted_rand_index(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn ari_hand_derived_crossed_pairs() {
        // {1,2},{3,4} vs {1,3},{2,4}: every within-pair agreement broken.
        let p = partition(&["1", "2", "3", "4"], &[0, 0, 1, 1]);
        let q = partition(&["1", "2", "3", "4"], &[0, 1, 0, 1]);
        let ari = adjusted_rand_index(&p, &q).unwrap();
        assert!((ari - (-0.5)).abs() < 1e-12);
        // Symmetry.
        assert_eq!(ari, adjusted_rand_index(&q, &p).unwrap());
    }

    #[test]
    fn ari_random_partitions_near_zero() {
        let ids: Vec<String> = (0..1000).map(|i| format!("h{i}")).collect();
        let p = random_clustering(&ids, 4, 100).unwrap();
        let q = random_clustering(&ids, 4, 200).unwrap();
        assert!(adjusted_rand_index(&p, &q).unwrap().abs() < 0.05);
    }

    #[test]
    fn ari_rejects_mismatched_sets() {
        let p = partition(&["a", "b"], &[0, 1]);
        let q = partition(&["a", "c"], &[0, 1]);
        assert!(matches!(
            adjusted_rand_index(&p, &q),
            Err(Error::MismatchedSets)
        ));
    }

    #[test]
    fn random_clustering_is_deterministic() {
        let ids: Vec<String> = (0..50).map(|i| format!("h{i}")).collect();
        let a = random_clustering(&ids, 5, 7).unwrap();
        let b = random_clustering(&ids, 5, 7).unwrap();
        assert_eq!(a.assignment, b.assignment);
        let single = random_clustering(&ids, 1, 7).unwrap();
        assert!(single.assignment.values().all(|&c| c == 1));
    }

    #[test]
    fn attribute_clustering_groups_and_drops() {
        let csv = "household_id,region\nh1,A\nh2,A\nh3,B\n";
        let table = HouseholdTable::read_csv(csv.as_bytes()).unwrap();
        let (clust, dropped) = attribute_clustering(&table, "region", 1).unwrap();
        assert_eq!(clust.k, 2);
        assert!(dropped.is_empty());
        assert_eq!(clust.assignment["h1"], clust.assignment["h2"]);
        assert_ne!(clust.assignment["h1"], clust.assignment["h3"]);

        let (clust2, dropped2) = attribute_clustering(&table, "region", 2).unwrap();
        assert_eq!(clust2.k, 1);
        assert_eq!(dropped2, vec!["h3".to_string()]);

        assert!(matches!(
            attribute_clustering(&table, "acorn", 1),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn clustering_csv_round_trip() {
        let p = partition(&["a", "b", "c"], &[0, 1, 0]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = Clustering::read_csv(buf.as_slice(), p.provenance.clone()).unwrap();
        assert_eq!(back.assignment, p.assignment);
        assert_eq!(back.k, p.k);
    }
}
