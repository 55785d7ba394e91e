//! Cluster assignments and the dependency-neighborhood structure.
//!
//! Observation `j` is in the neighborhood of `i` when the two share a cluster
//! on at least one dimension. All estimators and diagnostics iterate pairs
//! through a [`NeighborhoodIndex`].

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-observation cluster labels on each clustering dimension.
///
/// Labels are canonicalized to dense integers `0..C` in order of first
/// appearance, so clusters that are never used simply do not exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterScheme {
    n: usize,
    dims: Vec<String>,
    labels: Vec<Vec<usize>>,
    counts: Vec<usize>,
}

impl ClusterScheme {
    /// Builds a scheme from arbitrary hashable labels, one vector per named dimension.
    pub fn from_labels<T, S>(dims: Vec<(S, Vec<T>)>) -> Result<Self>
    where
        T: Eq + Hash + Clone,
        S: Into<String>,
    {
        if dims.is_empty() {
            return Err(Error::Schema("at least one clustering dimension is required".into()));
        }
        let n = dims[0].1.len();
        if n == 0 {
            return Err(Error::Schema("a cluster scheme needs at least one observation".into()));
        }
        let mut names = Vec::with_capacity(dims.len());
        let mut labels = Vec::with_capacity(dims.len());
        let mut counts = Vec::with_capacity(dims.len());
        for (name, raw) in dims {
            let name = name.into();
            if raw.len() != n {
                return Err(Error::Schema(format!("dimension `{name}` has {} labels, expected {n}", raw.len())));
            }
            let (dense, c) = canonicalize(&raw);
            names.push(name);
            labels.push(dense);
            counts.push(c);
        }
        Ok(Self { n, dims: names, labels, counts })
    }

    /// Two-way scheme with dimensions named `G` and `H`.
    pub fn two_way<T: Eq + Hash + Clone>(g: &[T], h: &[T]) -> Result<Self> {
        Self::from_labels(vec![("G", g.to_vec()), ("H", h.to_vec())])
    }

    /// One-way clustering on `g`; every observation gets its own `H` cluster.
    pub fn one_way<T: Eq + Hash + Clone>(g: &[T]) -> Result<Self> {
        let mut s = Self::from_labels(vec![("G", g.to_vec())])?;
        s.dims.push("H".into());
        s.labels.push((0..s.n).collect());
        s.counts.push(s.n);
        Ok(s)
    }

    /// Every observation is its own cluster on both dimensions.
    pub fn singletons(n: usize) -> Result<Self> {
        let ids: Vec<usize> = (0..n).collect();
        Self::two_way(&ids, &ids)
    }

    /// Balanced M_G × M_H grid with `cell_size` observations per intersection,
    /// observations ordered cell by cell (g major).
    pub fn balanced_grid(m_g: usize, m_h: usize, cell_size: usize) -> Result<Self> {
        if m_g == 0 || m_h == 0 || cell_size == 0 {
            return Err(Error::Schema("grid dimensions must be positive".into()));
        }
        let mut g = Vec::with_capacity(m_g * m_h * cell_size);
        let mut h = Vec::with_capacity(m_g * m_h * cell_size);
        for a in 0..m_g {
            for b in 0..m_h {
                for _ in 0..cell_size {
                    g.push(a);
                    h.push(b);
                }
            }
        }
        Self::two_way(&g, &h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn labels(&self, dim: usize) -> &[usize] {
        &self.labels[dim]
    }

    pub fn num_clusters(&self, dim: usize) -> usize {
        self.counts[dim]
    }
}

fn canonicalize<T: Eq + Hash + Clone>(raw: &[T]) -> (Vec<usize>, usize) {
    let mut map: HashMap<T, usize> = HashMap::new();
    let dense = raw
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l.clone()).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

/// One intersection cell 𝒩^G_g ∩ 𝒩^H_h.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub g: usize,
    pub h: usize,
    pub members: Vec<usize>,
}

/// Precomputed cluster membership for a two-way scheme.
///
/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    n: usize,
    dim_names: [String; 2],
    labels: [Vec<usize>; 2],
    members: [Vec<Vec<usize>>; 2],
    cells: Vec<Cell>,
    cell_of: Vec<usize>,
}

/// Which quantity [`pair_weight_sums`] reports per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairWeightMode {
    /// max_c (Σ_{i∈c} |ω_i|)²
    MaxClusterL1Squared,
    /// Σ_c (Σ_{i∈c} |ω_i|)²
    SumClusterL1Squared,
    /// Σ_c Σ_{i,j∈c} |ω_i ω_j|, accumulated pair by pair.
    CrossPairAbs,
}

impl NeighborhoodIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim_names(&self) -> &[String; 2] {
        &self.dim_names
    }

    /// Dense cluster label of every observation on `dim` (0 = G, 1 = H).
    pub fn labels(&self, dim: usize) -> &[usize] {
        &self.labels[dim]
    }

    /// Sorted member lists of every cluster on `dim`.
    pub fn clusters(&self, dim: usize) -> &[Vec<usize>] {
        &self.members[dim]
    }

    pub fn cluster_sizes(&self, dim: usize) -> Vec<usize> {
        self.members[dim].iter().map(Vec::len).collect()
    }

    /// Nonempty intersection cells, sorted by (g, h).
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_of(&self, i: usize) -> &Cell {
        &self.cells[self.cell_of[i]]
    }

    #[inline]
    pub fn shares_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[0][i] == self.labels[0][j] || self.labels[1][i] == self.labels[1][j]
    }

    /// |𝒩_i| = N^G_{g(i)} + N^H_{h(i)} − N_{g(i)h(i)}.
    pub fn neighborhood_size(&self, i: usize) -> usize {
        self.members[0][self.labels[0][i]].len() + self.members[1][self.labels[1][i]].len()
            - self.cell_of(i).members.len()
    }

    /// Sorted neighborhood 𝒩_i (0-based ids), always containing `i`.
    pub fn neighborhood(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, n: self.n });
        }
        let a = &self.members[0][self.labels[0][i]];
        let b = &self.members[1][self.labels[1][i]];
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut x, mut y) = (0, 0);
        while x < a.len() || y < b.len() {
            match (a.get(x), b.get(y)) {
                (Some(&p), Some(&q)) if p == q => {
                    out.push(p);
                    x += 1;
                    y += 1;
                }
                (Some(&p), Some(&q)) if p < q => {
                    out.push(p);
                    x += 1;
                }
                (Some(_), Some(&q)) => {
                    out.push(q);
                    y += 1;
                }
                (Some(&p), None) => {
                    out.push(p);
                    x += 1;
                }
                (None, Some(&q)) => {
                    out.push(q);
                    y += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Ok(out)
    }

    /// Calls `f(j)` once for every j ∈ 𝒩_i, without allocating: first the
    /// G-cluster of `i`, then H-cluster members outside that G-cluster.
    #[inline]
    pub fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        let gi = self.labels[0][i];
        for &j in &self.members[0][gi] {
            f(j);
        }
        for &j in &self.members[1][self.labels[1][i]] {
            if self.labels[0][j] != gi {
                f(j);
            }
        }
    }
}

/// Materializes cluster membership and intersection cells for a two-way scheme.
pub fn build_index(scheme: &ClusterScheme) -> Result<NeighborhoodIndex> {
    if scheme.dims.len() != 2 {
        return Err(Error::Unsupported(format!(
            "only two-way clustering is implemented, got {} dimensions",
            scheme.dims.len()
        )));
    }
    let n = scheme.n;
    for (d, l) in scheme.labels.iter().enumerate() {
        if l.len() != n {
            return Err(Error::Schema(format!("dimension `{}` has {} labels, expected {n}", scheme.dims[d], l.len())));
        }
    }
    let members: [Vec<Vec<usize>>; 2] = std::array::from_fn(|d| {
        let mut m = vec![Vec::new(); scheme.counts[d]];
        for (i, &c) in scheme.labels[d].iter().enumerate() {
            m[c].push(i);
        }
        m
    });

    let mut cell_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for i in 0..n {
        cell_map.entry((scheme.labels[0][i], scheme.labels[1][i])).or_default().push(i);
    }
    let mut cells: Vec<Cell> = cell_map.into_iter().map(|((g, h), members)| Cell { g, h, members }).collect();
    cells.sort_by_key(|c| (c.g, c.h));
    let mut cell_of = vec![0; n];
    for (k, c) in cells.iter().enumerate() {
        for &i in &c.members {
            cell_of[i] = k;
        }
    }

    Ok(NeighborhoodIndex {
        n,
        dim_names: [scheme.dims[0].clone(), scheme.dims[1].clone()],
        labels: [scheme.labels[0].clone(), scheme.labels[1].clone()],
        members,
        cells,
        cell_of,
    })
}

/// Per-dimension cluster weight sums used by the regularity ratios.
pub fn pair_weight_sums(index: &NeighborhoodIndex, omega: &[f64], mode: PairWeightMode) -> Result<[f64; 2]> {
    if omega.len() != index.n {
        return Err(Error::DimensionMismatch(format!("{} weights for {} observations", omega.len(), index.n)));
    }
    Ok(std::array::from_fn(|d| {
        let clusters = &index.members[d];
        match mode {
            PairWeightMode::MaxClusterL1Squared => {
                clusters.iter().map(|c| cluster_l1(c, omega).powi(2)).fold(0.0, f64::max)
            }
            PairWeightMode::SumClusterL1Squared => clusters.iter().map(|c| cluster_l1(c, omega).powi(2)).sum(),
            PairWeightMode::CrossPairAbs => clusters
                .iter()
                .map(|c| c.iter().map(|&i| c.iter().map(|&j| (omega[i] * omega[j]).abs()).sum::<f64>()).sum::<f64>())
                .sum(),
        }
    }))
}

fn cluster_l1(members: &[usize], omega: &[f64]) -> f64 {
    members.iter().map(|&i| omega[i].abs()).sum()
}

/// n×K outcome matrix with per-observation scalar weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    w: Matrix,
    omega: Vec<f64>,
}

impl WeightedSample {
    pub fn new(w: Matrix, omega: Vec<f64>) -> Result<Self> {
        if w.cols() == 0 {
            return Err(Error::DimensionMismatch("K must be at least 1".into()));
        }
        if omega.len() != w.rows() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} observations", omega.len(), w.rows())));
        }
        if w.as_slice().iter().chain(&omega).any(|v| !v.is_finite()) {
            return Err(Error::Schema("sample contains non-finite values".into()));
        }
        Ok(Self { w, omega })
    }

    /// Equal unit weights.
    pub fn unweighted(w: Matrix) -> Result<Self> {
        let n = w.rows();
        Self::new(w, vec![1.0; n])
    }

    /// K = 1 sample.
    pub fn scalar(values: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(Matrix::from_row_major(n, 1, values)?, omega)
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn k(&self) -> usize {
        self.w.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.w
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple() -> NeighborhoodIndex {
        build_index(&ClusterScheme::two_way(&[0, 0, 1], &[0, 1, 1]).unwrap()).unwrap()
    }

    #[test]
    fn triple_neighborhoods() {
        let idx = triple();
        assert_eq!(idx.neighborhood(0).unwrap(), vec![0, 1]);
        assert_eq!(idx.neighborhood(1).unwrap(), vec![0, 1, 2]);
        assert_eq!(idx.neighborhood(2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn disjoint_pair_is_isolated() {
        let idx = build_index(&ClusterScheme::two_way(&[0, 1], &[0, 1]).unwrap()).unwrap();
        assert_eq!(idx.neighborhood(0).unwrap(), vec![0]);
        assert_eq!(idx.neighborhood(1).unwrap(), vec![1]);
    }

    #[test]
    fn two_by_two_grid_has_three_neighbors_each() {
        let idx = build_index(&ClusterScheme::two_way(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap()).unwrap();
        for i in 0..4 {
            assert_eq!(idx.neighborhood(i).unwrap().len(), 3);
            assert_eq!(idx.neighborhood_size(i), 3);
        }
    }

    #[test]
    fn balanced_three_grid_has_five_neighbors() {
        let idx = build_index(&ClusterScheme::balanced_grid(3, 3, 1).unwrap()).unwrap();
        for i in 0..9 {
            assert_eq!(idx.neighborhood(i).unwrap().len(), 5);
        }
    }

    #[test]
    fn singletons_are_alone() {
        let idx = build_index(&ClusterScheme::singletons(6).unwrap()).unwrap();
        for i in 0..6 {
            assert_eq!(idx.neighborhood(i).unwrap(), vec![i]);
        }
    }

    #[test]
    fn out_of_range_neighborhood() {
        assert_eq!(triple().neighborhood(3), Err(Error::IndexOutOfRange { index: 3, n: 3 }));
    }

    #[test]
    fn label_length_mismatch_is_schema_error() {
        let err = ClusterScheme::two_way(&[0, 1, 2], &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn three_dimensions_rejected() {
        let s = ClusterScheme::from_labels(vec![("A", vec![0, 1]), ("B", vec![0, 0]), ("C", vec![1, 1])]).unwrap();
        assert!(matches!(build_index(&s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn string_labels_canonicalize_in_first_appearance_order() {
        let s = ClusterScheme::two_way(&["CA", "NY", "CA", "TX"], &["m", "m", "r", "r"]).unwrap();
        assert_eq!(s.labels(0), &[0, 1, 0, 2]);
        assert_eq!(s.labels(1), &[0, 0, 1, 1]);
        assert_eq!(s.num_clusters(0), 3);
    }

    #[test]
    fn sparse_integer_labels_drop_empty_clusters() {
        let s = ClusterScheme::two_way(&[7, 7, 100], &[3, 9, 9]).unwrap();
        assert_eq!(s.num_clusters(0), 2);
        let idx = build_index(&s).unwrap();
        assert_eq!(idx.cluster_sizes(0), vec![2, 1]);
    }

    #[test]
    fn weight_sums_singletons() {
        let idx = build_index(&ClusterScheme::singletons(5).unwrap()).unwrap();
        let w = vec![1.0; 5];
        assert_eq!(pair_weight_sums(&idx, &w, PairWeightMode::MaxClusterL1Squared).unwrap(), [1.0, 1.0]);
        assert_eq!(pair_weight_sums(&idx, &w, PairWeightMode::SumClusterL1Squared).unwrap(), [5.0, 5.0]);
    }

    #[test]
    fn weight_sums_balanced_grid_is_m_cubed() {
        let m = 6;
        let idx = build_index(&ClusterScheme::balanced_grid(m, m, 1).unwrap()).unwrap();
        let w = vec![1.0; m * m];
        let s = pair_weight_sums(&idx, &w, PairWeightMode::SumClusterL1Squared).unwrap();
        assert_eq!(s, [(m * m * m) as f64; 2]);
    }

    #[test]
    fn weight_sums_hand_example() {
        let idx = build_index(&ClusterScheme::two_way(&[0, 0, 1], &[0, 1, 2]).unwrap()).unwrap();
        let w = [1.0, 2.0, 3.0];
        assert_eq!(pair_weight_sums(&idx, &w, PairWeightMode::MaxClusterL1Squared).unwrap()[0], 9.0);
        assert_eq!(pair_weight_sums(&idx, &w, PairWeightMode::SumClusterL1Squared).unwrap()[0], 18.0);
        assert_eq!(pair_weight_sums(&idx, &w, PairWeightMode::CrossPairAbs).unwrap()[0], 18.0);
        assert!(pair_weight_sums(&idx, &w[..2], PairWeightMode::CrossPairAbs).is_err());
    }

    #[test]
    fn one_way_scheme_gives_unique_h() {
        let s = ClusterScheme::one_way(&["a", "a", "b"]).unwrap();
        assert_eq!(s.num_clusters(1), 3);
        let idx = build_index(&s).unwrap();
        assert_eq!(idx.neighborhood(0).unwrap(), vec![0, 1]);
    }
}
