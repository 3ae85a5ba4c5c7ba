//! Clustering accuracy under the best cluster-to-class matching, and NMI
//! normalized by the geometric mean of the two entropies.

use std::io::Write;

use crate::error::{Error, Result};

/// Counts of (predicted cluster, true class) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    clusters: usize,
    classes: usize,
    counts: Vec<usize>,
    total: usize,
}

impl ContingencyTable {
    /// Table sized to the largest index seen in either labeling.
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape(pred.len(), truth.len()));
        }
        if pred.is_empty() {
            return Err(Error::InvalidInput("metrics of an empty labeling".into()));
        }
        let clusters = pred.iter().max().map_or(0, |m| m + 1);
        let classes = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0; clusters * classes];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p * classes + t] += 1;
        }
        Ok(ContingencyTable {
            clusters,
            classes,
            counts,
            total: pred.len(),
        })
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, cluster: usize, class: usize) -> usize {
        self.counts[cluster * self.classes + class]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        (0..self.clusters)
            .map(|p| (0..self.classes).map(|t| self.get(p, t)).sum())
            .collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        (0..self.classes)
            .map(|t| (0..self.clusters).map(|p| self.get(p, t)).sum())
            .collect()
    }

    /// Square `n × n` value matrix, zero-padded, with `n = max(clusters, classes)`.
    fn square(&self) -> Vec<Vec<f64>> {
        let n = self.clusters.max(self.classes);
        (0..n)
            .map(|p| {
                (0..n)
                    .map(|t| {
                        if p < self.clusters && t < self.classes {
                            self.get(p, t) as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Permutation `perm` maximizing `Σ_i value[i][perm[i]]`.
///
/// Shortest augmenting path Hungarian method on the negated matrix, O(n³).
pub fn assignment_solver(value: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = value.len();
    for row in value {
        if row.len() != n {
            return Err(Error::shape(format!("{n} columns"), row.len()));
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("assignment matrix"));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let cost = |i: usize, j: usize| -value[i - 1][j - 1];

    // 1-indexed potentials; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0, j) - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Best cluster-to-class mapping: `mapping[cluster] = class`. Clusters that
/// never occur map to an unused class.
pub fn best_mapping(pred: &[usize], truth: &[usize]) -> Result<Vec<usize>> {
    let table = ContingencyTable::new(pred, truth)?;
    assignment_solver(&table.square())
}

pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let perm = assignment_solver(&table.square())?;
    let hits: usize = perm
        .iter()
        .enumerate()
        .filter(|&(p, &t)| p < table.clusters && t < table.classes)
        .map(|(p, &t)| table.get(p, t))
        .sum();
    Ok(hits as f64 / table.total as f64)
}

fn entropy(sizes: &[usize], total: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

fn same_partition(pred: &[usize], truth: &[usize]) -> bool {
    let mut forward = std::collections::HashMap::new();
    let mut backward = std::collections::HashMap::new();
    pred.iter().zip(truth).all(|(&p, &t)| {
        *forward.entry(p).or_insert(t) == t && *backward.entry(t).or_insert(p) == p
    })
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    if same_partition(pred, truth) {
        return Ok(1.0);
    }
    let n = table.total as f64;
    let h_pred = entropy(&table.cluster_sizes(), n);
    let h_truth = entropy(&table.class_sizes(), n);
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let rows = table.cluster_sizes();
    let cols = table.class_sizes();
    let mut mi = 0.0;
    for p in 0..table.clusters {
        for t in 0..table.classes {
            let c = table.get(p, t);
            if c == 0 {
                continue;
            }
            let joint = c as f64 / n;
            mi += joint * (c as f64 * n / (rows[p] as f64 * cols[t] as f64)).ln();
        }
    }
    Ok((mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

pub const CSV_HEADER: &str = "epoch,acc,nmi,loss_ppl,loss_pll,loss_opm,anchor_count,anchor_acc";

/// One row of the per-epoch metrics log. Missing values are written as
/// empty fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub loss_ppl: f64,
    pub loss_pll: f64,
    pub loss_opm: f64,
    pub anchor_count: usize,
    pub anchor_acc: Option<f64>,
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let field = |v: Option<f64>| v.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            field(r.acc),
            field(r.nmi),
            r.loss_ppl,
            r.loss_pll,
            r.loss_opm,
            r.anchor_count,
            field(r.anchor_acc)
        )?;
    }
    Ok(())
}
