use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-hot `n × K` cluster assignment, stored as a label per node.
///
/// The dense form is only materialised on request; every row of it has
/// exactly one 1, so storing labels keeps the invariant by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MembershipMatrix {
    labels: Vec<usize>,
    k: usize,
}

impl MembershipMatrix {
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "cluster count must be positive"));
        }
        if let Some(row) = labels.iter().position(|&c| c >= k) {
            return Err(Error::NotOneHot { row });
        }
        Ok(Self { labels, k })
    }

    /// Validates a dense 0/1 matrix and converts it to labels.
    pub fn from_dense(theta: ArrayView2<'_, f64>) -> Result<Self> {
        let k = theta.ncols();
        let mut labels = Vec::with_capacity(theta.nrows());
        for (row, r) in theta.rows().into_iter().enumerate() {
            let mut hot = None;
            for (c, &x) in r.iter().enumerate() {
                if x == 1.0 {
                    if hot.is_some() {
                        return Err(Error::NotOneHot { row });
                    }
                    hot = Some(c);
                } else if x != 0.0 {
                    return Err(Error::NotOneHot { row });
                }
            }
            labels.push(hot.ok_or(Error::NotOneHot { row })?);
        }
        Self::from_labels(labels, k)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.labels.len(), self.k));
        for (i, &c) in self.labels.iter().enumerate() {
            out[[i, c]] = 1.0;
        }
        out
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// Relabels clusters: node in cluster `c` moves to `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            labels: self.labels.iter().map(|&c| perm[c]).collect(),
            k: self.k,
        }
    }

    /// Restricts to a subset of nodes, in the given order.
    pub fn subset(&self, nodes: &[usize]) -> Self {
        Self {
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_round_trip() {
        let m = MembershipMatrix::from_labels(vec![0, 2, 1, 2], 3).unwrap();
        let d = m.to_dense();
        assert_eq!(d.sum_axis(ndarray::Axis(1)).to_vec(), vec![1.0; 4]);
        assert_eq!(MembershipMatrix::from_dense(d.view()).unwrap(), m);
        assert_eq!(m.cluster_sizes(), vec![1, 1, 2]);
    }

    #[test]
    fn rejects_non_one_hot() {
        let d = array![[1.0, 0.0], [1.0, 1.0]];
        assert!(matches!(
            MembershipMatrix::from_dense(d.view()),
            Err(Error::NotOneHot { row: 1 })
        ));
        let z = array![[0.0, 0.0]];
        assert!(MembershipMatrix::from_dense(z.view()).is_err());
        assert!(MembershipMatrix::from_labels(vec![0, 3], 3).is_err());
    }
}
