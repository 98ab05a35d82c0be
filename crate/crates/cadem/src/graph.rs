//! Multiplex graph data model and graph-level utilities: adjacency
//! normalization, Laplacians, KNN construction, BFS distances, subgraph
//! extraction, and the on-disk multiplex format.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::SparseMatrix;
use crate::error::{CademError, Result};

/// Distance sentinel for nodes unreachable from every BFS source.
pub const UNREACHABLE: usize = usize::MAX;

/// Node features of one layer. One-hot features keep their index form so the
/// encoders can turn the feature transform into a row gather.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    Dense(Array2<f64>),
    /// Row i equals the `ids[i]`-th canonical basis vector of length `width`.
    OneHot { ids: Vec<usize>, width: usize },
}

impl FeatureMatrix {
    /// Identity features: row i = e_i.
    pub fn identity(n: usize) -> Self {
        FeatureMatrix::OneHot {
            ids: (0..n).collect(),
            width: n,
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            FeatureMatrix::Dense(x) => x.nrows(),
            FeatureMatrix::OneHot { ids, .. } => ids.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            FeatureMatrix::Dense(x) => x.ncols(),
            FeatureMatrix::OneHot { width, .. } => *width,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            FeatureMatrix::Dense(x) => x.clone(),
            FeatureMatrix::OneHot { ids, width } => {
                let mut out = Array2::zeros((ids.len(), *width));
                for (r, &c) in ids.iter().enumerate() {
                    out[[r, c]] = 1.0;
                }
                out
            }
        }
    }

    /// Restrict to a subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        match self {
            FeatureMatrix::Dense(x) => {
                let mut out = Array2::zeros((rows.len(), x.ncols()));
                for (r, &src) in rows.iter().enumerate() {
                    out.row_mut(r).assign(&x.row(src));
                }
                FeatureMatrix::Dense(out)
            }
            FeatureMatrix::OneHot { ids, width } => FeatureMatrix::OneHot {
                ids: rows.iter().map(|&r| ids[r]).collect(),
                width: *width,
            },
        }
    }

    fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.nrows() != n_nodes {
            return Err(CademError::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                self.nrows(),
                n_nodes
            )));
        }
        match self {
            FeatureMatrix::Dense(x) => {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(CademError::NonFinite("node features".into()));
                }
            }
            FeatureMatrix::OneHot { ids, width } => {
                if let Some(&bad) = ids.iter().find(|&&i| i >= *width) {
                    return Err(CademError::InvalidArgument(format!(
                        "one-hot id {bad} out of width {width}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One layer of a multiplex graph: an undirected simple edge list, node
/// features, and the cached normalized adjacency Â = D^{-1/2}(A+I)D^{-1/2}.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: FeatureMatrix,
    normalized_adj: Arc<SparseMatrix>,
}

impl LayerGraph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>, features: FeatureMatrix) -> Result<Self> {
        let edges = canonical_edges(edges, n_nodes)?;
        features.validate(n_nodes)?;
        let normalized_adj = Arc::new(normalize_adjacency(&edges, n_nodes)?);
        Ok(Self {
            n_nodes,
            edges,
            features,
            normalized_adj,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Canonical (u < v) edge list, sorted, each edge once.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn normalized_adj(&self) -> &Arc<SparseMatrix> {
        &self.normalized_adj
    }
}

/// Reject self-loops and out-of-range endpoints; store each edge once as
/// (min, max), sorted, duplicates removed.
fn canonical_edges(edges: Vec<(usize, usize)>, n_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    for (u, v) in edges {
        if u == v {
            return Err(CademError::InvalidArgument(format!(
                "self-loop at node {u} in raw edge list"
            )));
        }
        if u >= n_nodes || v >= n_nodes {
            return Err(CademError::InvalidArgument(format!(
                "edge ({u},{v}) out of bounds for {n_nodes} nodes"
            )));
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Â = D^{-1/2}(A + I)D^{-1/2} with degrees computed from A + I. Isolated
/// nodes end up with Â[i,i] = 1.
pub fn normalize_adjacency(edges: &[(usize, usize)], n_nodes: usize) -> Result<SparseMatrix> {
    let mut degree = vec![1.0f64; n_nodes]; // self-loop
    for &(u, v) in edges {
        if u >= n_nodes || v >= n_nodes || u == v {
            return Err(CademError::InvalidArgument(format!(
                "invalid edge ({u},{v})"
            )));
        }
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let mut entries = Vec::with_capacity(edges.len() * 2 + n_nodes);
    for (i, d) in degree.iter().enumerate() {
        entries.push((i, i, 1.0 / d));
    }
    for &(u, v) in edges {
        let w = 1.0 / (degree[u] * degree[v]).sqrt();
        entries.push((u, v, w));
        entries.push((v, u, w));
    }
    SparseMatrix::from_entries(n_nodes, n_nodes, entries)
}

/// Combinatorial Laplacian L = D - A as a dense matrix (no self-loops).
pub fn laplacian(edges: &[(usize, usize)], n_nodes: usize) -> Array2<f64> {
    let mut l = Array2::zeros((n_nodes, n_nodes));
    for &(u, v) in edges {
        l[[u, u]] += 1.0;
        l[[v, v]] += 1.0;
        l[[u, v]] -= 1.0;
        l[[v, u]] -= 1.0;
    }
    l
}

/// Undirected union of each node's K nearest Euclidean neighbors; ties broken
/// by lower node index.
pub fn knn_graph(points: &Array2<f64>, k: usize) -> Result<Vec<(usize, usize)>> {
    let m = points.nrows();
    if m <= k {
        return Err(CademError::InvalidArgument(format!(
            "knn_graph needs more than k={k} points, got {m}"
        )));
    }
    let mut edges = Vec::new();
    for i in 0..m {
        let mut dists: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = points
                    .row(i)
                    .iter()
                    .zip(points.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(k) {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// Largest eigenvalue via shifted power iteration on a symmetric sparse
/// matrix. For a non-negative adjacency this is the spectral radius; for a
/// Laplacian it is λ_max. Returns 0 for the zero matrix.
pub fn spectral_radius(adj: &SparseMatrix) -> Result<f64> {
    if !adj.is_symmetric(1e-12) {
        return Err(CademError::InvalidArgument(
            "spectral_radius expects a symmetric matrix".into(),
        ));
    }
    let n = adj.n_rows();
    if n == 0 || adj.nnz() == 0 {
        return Ok(0.0);
    }
    // Gershgorin shift keeps all eigenvalues of A + sI non-negative, so the
    // iteration cannot oscillate between ±λ_max on bipartite graphs.
    let mut row_abs = vec![0.0f64; n];
    for &(r, _, w) in adj.entries() {
        row_abs[r] += w.abs();
    }
    let shift = row_abs.iter().copied().fold(0.0, f64::max);

    let mut v = Array2::from_shape_fn((n, 1), |(i, _)| (i as f64 + 1.0).sin());
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v /= norm;

    let mut prev = f64::INFINITY;
    for _ in 0..10_000 {
        let mut w = adj.mul_dense(&v)?;
        w += &(&v * shift);
        let rayleigh: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return Ok(0.0);
        }
        v = w / wnorm;
        if (rayleigh - prev).abs() < 1e-9 {
            return Ok(rayleigh - shift);
        }
        prev = rayleigh;
    }
    Ok(prev - shift)
}

/// Subgraph induced by `nodes`; node i of the result is `nodes[i]` of the
/// input. Keeps edges with both endpoints sampled and restricts feature rows.
pub fn induced_subgraph(layer: &LayerGraph, nodes: &[usize]) -> Result<LayerGraph> {
    if nodes.is_empty() {
        return Err(CademError::InvalidArgument(
            "induced_subgraph with empty node list".into(),
        ));
    }
    let mut remap = vec![usize::MAX; layer.n_nodes()];
    for (new, &old) in nodes.iter().enumerate() {
        if old >= layer.n_nodes() {
            return Err(CademError::InvalidArgument(format!(
                "sampled node {old} out of bounds"
            )));
        }
        if remap[old] != usize::MAX {
            return Err(CademError::InvalidArgument(format!(
                "sampled node {old} appears twice"
            )));
        }
        remap[old] = new;
    }
    let edges: Vec<(usize, usize)> = layer
        .edges()
        .iter()
        .filter_map(|&(u, v)| {
            let (nu, nv) = (remap[u], remap[v]);
            (nu != usize::MAX && nv != usize::MAX).then_some((nu, nv))
        })
        .collect();
    LayerGraph::new(nodes.len(), edges, layer.features().select_rows(nodes))
}

/// Minimum hop distance from any source; unreachable nodes get [`UNREACHABLE`].
pub fn bfs_hop_distances(
    edges: &[(usize, usize)],
    n_nodes: usize,
    sources: &[usize],
) -> Result<Vec<usize>> {
    if sources.is_empty() {
        return Err(CademError::InvalidArgument("bfs with no sources".into()));
    }
    let mut adj = vec![Vec::new(); n_nodes];
    for &(u, v) in edges {
        if u >= n_nodes || v >= n_nodes {
            return Err(CademError::InvalidArgument(format!(
                "edge ({u},{v}) out of bounds"
            )));
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut dist = vec![UNREACHABLE; n_nodes];
    let mut queue = VecDeque::new();
    for &s in sources {
        if s >= n_nodes {
            return Err(CademError::InvalidArgument(format!(
                "source {s} out of bounds"
            )));
        }
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == UNREACHABLE {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// True when the graph on `n_nodes` given by `edges` is connected.
pub fn is_connected(edges: &[(usize, usize)], n_nodes: usize) -> bool {
    if n_nodes == 0 {
        return true;
    }
    match bfs_hop_distances(edges, n_nodes, &[0]) {
        Ok(d) => d.iter().all(|&x| x != UNREACHABLE),
        Err(_) => false,
    }
}

/// Multiplex graph: N layers over a shared node set.
#[derive(Debug, Clone)]
pub struct MultiplexGraph {
    pub n_nodes: usize,
    pub layers: Vec<LayerGraph>,
    /// Named labelings, each of length `n_nodes`.
    pub node_labels: BTreeMap<String, Vec<usize>>,
    /// Generator provenance (seed, parameters); not part of the wire format.
    pub metadata: serde_json::Value,
}

impl MultiplexGraph {
    pub fn new(
        layers: Vec<LayerGraph>,
        node_labels: BTreeMap<String, Vec<usize>>,
        metadata: serde_json::Value,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(CademError::InvalidArgument(
                "a multiplex graph needs at least one layer".into(),
            ));
        }
        let n_nodes = layers[0].n_nodes();
        if layers.iter().any(|l| l.n_nodes() != n_nodes) {
            return Err(CademError::InvalidArgument(
                "all layers must share the node count".into(),
            ));
        }
        for (name, labels) in &node_labels {
            if labels.len() != n_nodes {
                return Err(CademError::InvalidArgument(format!(
                    "labeling '{name}' has {} entries for {n_nodes} nodes",
                    labels.len()
                )));
            }
        }
        Ok(Self {
            n_nodes,
            layers,
            node_labels,
            metadata,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn labels(&self, name: &str) -> Result<&[usize]> {
        self.node_labels
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| CademError::InvalidArgument(format!("no labeling named '{name}'")))
    }
}

// ---------------------------------------------------------------------------
// Wire format: graph JSON + one headerless feature CSV per layer.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MultiplexFile {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    layers: Vec<LayerFile>,
    labels: BTreeMap<String, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    edges: Vec<(usize, usize)>,
    features_path: String,
}

/// 17 significant digits; round-trips every f64 exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    CademError::Format(format!("bad float '{t}' at {path:?}:{}", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CademError::Format(format!(
                    "ragged CSV at {path:?}:{}",
                    i + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CademError::Format(format!("empty CSV {path:?}")));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec(
        (r, c),
        rows.into_iter().flatten().collect(),
    )
    .expect("csv shape"))
}

/// Write the multiplex JSON at `json_path` with per-layer feature CSVs next
/// to it.
pub fn save_multiplex(graph: &MultiplexGraph, json_path: &Path) -> Result<()> {
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut layers = Vec::new();
    for (i, layer) in graph.layers.iter().enumerate() {
        let features_path = format!("features_layer{i}.csv");
        write_matrix_csv(&dir.join(&features_path), &layer.features().to_dense())?;
        layers.push(LayerFile {
            edges: layer.edges().to_vec(),
            features_path,
        });
    }
    let file = MultiplexFile {
        m: graph.n_nodes,
        n: graph.n_layers(),
        layers,
        labels: graph.node_labels.clone(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_multiplex(json_path: &Path) -> Result<MultiplexGraph> {
    let dir = json_path.parent().unwrap_or_else(|| Path::new("."));
    let file: MultiplexFile = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    if file.layers.len() != file.n {
        return Err(CademError::Format(format!(
            "N={} but {} layers present",
            file.n,
            file.layers.len()
        )));
    }
    let mut layers = Vec::new();
    for lf in file.layers {
        let features = read_matrix_csv(&dir.join(&lf.features_path))?;
        if features.nrows() != file.m {
            return Err(CademError::Format(format!(
                "feature CSV {} has {} rows, expected M={}",
                lf.features_path,
                features.nrows(),
                file.m
            )));
        }
        layers.push(LayerGraph::new(
            file.m,
            lf.edges,
            FeatureMatrix::Dense(features),
        )?);
    }
    MultiplexGraph::new(layers, file.labels, serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigen;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        edges
    }

    #[test]
    fn normalize_empty_graph_is_identity() {
        let a = normalize_adjacency(&[], 4).unwrap();
        assert_eq!(a.to_dense(), Array2::<f64>::eye(4));
    }

    #[test]
    fn normalize_single_edge_gives_all_halves() {
        let a = normalize_adjacency(&[(0, 1)], 2).unwrap();
        let expected = ndarray::arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(a.to_dense(), expected);
    }

    #[test]
    fn normalize_matches_dense_formula_oracle() {
        let edges = random_edges(6, 0.5, 3);
        let ahat = normalize_adjacency(&edges, 6).unwrap().to_dense();

        // Independent dense construction of D^{-1/2}(A+I)D^{-1/2}.
        let mut a = Array2::<f64>::eye(6);
        for &(u, v) in &edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let mut d_inv_sqrt = Array2::<f64>::zeros((6, 6));
        for i in 0..6 {
            d_inv_sqrt[[i, i]] = 1.0 / a.row(i).sum().sqrt();
        }
        let oracle = d_inv_sqrt.dot(&a).dot(&d_inv_sqrt);
        let diff = &ahat - &oracle;
        assert!(diff.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn normalized_adjacency_is_exactly_symmetric_with_unit_spectral_bound() {
        for seed in 0..5 {
            let edges = random_edges(8, 0.4, seed);
            let ahat = normalize_adjacency(&edges, 8).unwrap();
            assert!(ahat.is_symmetric(0.0));
            let rho = spectral_radius(&ahat).unwrap();
            assert!(rho <= 1.0 + 1e-9, "rho = {rho}");
        }
    }

    #[test]
    fn laplacian_basics() {
        assert_eq!(laplacian(&[], 3), Array2::<f64>::zeros((3, 3)));
        let l = laplacian(&[(0, 1)], 2);
        assert_eq!(l, ndarray::arr2(&[[1.0, -1.0], [-1.0, 1.0]]));
        let l = laplacian(&random_edges(7, 0.5, 11), 7);
        for i in 0..7 {
            assert!(l.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn knn_collinear_points_and_complete_graph() {
        // Brute-force oracle: 3 equidistant collinear points, K=1.
        let pts = ndarray::arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let edges = knn_graph(&pts, 1).unwrap();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);

        // K = M-1 yields the complete graph.
        let mut rng = StdRng::seed_from_u64(5);
        let pts = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0f64..1.0));
        let edges = knn_graph(&pts, 4).unwrap();
        assert_eq!(edges.len(), 10);
    }

    #[test]
    fn spectral_radius_known_cases() {
        let eye = SparseMatrix::identity(4);
        assert!((spectral_radius(&eye).unwrap() - 1.0).abs() < 1e-8);

        // K5 adjacency: spectral radius n-1 = 4.
        let mut entries = Vec::new();
        for u in 0..5 {
            for v in 0..5 {
                if u != v {
                    entries.push((u, v, 1.0));
                }
            }
        }
        let k5 = SparseMatrix::from_entries(5, 5, entries).unwrap();
        assert!((spectral_radius(&k5).unwrap() - 4.0).abs() < 1e-7);

        let zero = SparseMatrix::from_entries(3, 3, vec![]).unwrap();
        assert_eq!(spectral_radius(&zero).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_matches_jacobi_oracle() {
        for seed in 0..4 {
            let edges = random_edges(8, 0.5, 100 + seed);
            let mut entries = Vec::new();
            for &(u, v) in &edges {
                entries.push((u, v, 1.0));
                entries.push((v, u, 1.0));
            }
            let adj = SparseMatrix::from_entries(8, 8, entries).unwrap();
            let rho = spectral_radius(&adj).unwrap();
            let eig = jacobi_eigen(&adj.to_dense(), 1e-12, 50).unwrap();
            let max_abs = eig
                .eigenvalues
                .iter()
                .map(|x| x.abs())
                .fold(0.0f64, f64::max);
            assert!((rho - max_abs).abs() < 1e-6, "seed {seed}: {rho} vs {max_abs}");
        }
    }

    #[test]
    fn bipartite_spectral_radius_is_not_underestimated() {
        // 2-node path: eigenvalues ±1; plain power iteration would stall.
        let adj =
            SparseMatrix::from_entries(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!((spectral_radius(&adj).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn induced_subgraph_cases() {
        let layer = LayerGraph::new(
            3,
            vec![(0, 1), (1, 2), (0, 2)],
            FeatureMatrix::identity(3),
        )
        .unwrap();

        // Full sampling keeps the edge multiset.
        let full = induced_subgraph(&layer, &[0, 1, 2]).unwrap();
        assert_eq!(full.edges(), layer.edges());

        // One node: no edges.
        let single = induced_subgraph(&layer, &[1]).unwrap();
        assert!(single.edges().is_empty());

        // Triangle restricted to {0,1}: the single edge (0,1).
        let pair = induced_subgraph(&layer, &[0, 1]).unwrap();
        assert_eq!(pair.edges(), &[(0, 1)]);

        assert!(induced_subgraph(&layer, &[]).is_err());
    }

    #[test]
    fn bfs_distances_and_floyd_warshall_oracle() {
        let d = bfs_hop_distances(&[(0, 1), (1, 2)], 3, &[0]).unwrap();
        assert_eq!(d, vec![0, 1, 2]);

        for seed in 0..4 {
            let n = 9;
            let edges = random_edges(n, 0.3, 40 + seed);
            let bfs = bfs_hop_distances(&edges, n, &[2, 5]).unwrap();

            // Floyd-Warshall oracle.
            let inf = usize::MAX / 4;
            let mut dist = vec![vec![inf; n]; n];
            for i in 0..n {
                dist[i][i] = 0;
            }
            for &(u, v) in &edges {
                dist[u][v] = 1;
                dist[v][u] = 1;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let via = dist[i][k].saturating_add(dist[k][j]);
                        if via < dist[i][j] {
                            dist[i][j] = via;
                        }
                    }
                }
            }
            for i in 0..n {
                let oracle = dist[i][2].min(dist[i][5]);
                let got = if bfs[i] == UNREACHABLE { inf } else { bfs[i] };
                assert!(
                    (oracle >= inf && got >= inf) || oracle == got,
                    "seed {seed} node {i}: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn bfs_rejects_empty_sources() {
        assert!(bfs_hop_distances(&[(0, 1)], 2, &[]).is_err());
    }

    #[test]
    fn layer_graph_rejects_self_loops_and_nan_features() {
        assert!(LayerGraph::new(2, vec![(1, 1)], FeatureMatrix::identity(2)).is_err());
        let mut x = Array2::<f64>::zeros((2, 2));
        x[[0, 0]] = f64::NAN;
        assert!(LayerGraph::new(2, vec![(0, 1)], FeatureMatrix::Dense(x)).is_err());
    }

    #[test]
    fn multiplex_file_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let feats = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0f64..1.0));
        let layers = vec![
            LayerGraph::new(5, vec![(0, 1), (2, 4)], FeatureMatrix::Dense(feats)).unwrap(),
            LayerGraph::new(5, vec![(1, 3)], FeatureMatrix::identity(5)).unwrap(),
        ];
        let mut labels = BTreeMap::new();
        labels.insert("final".to_string(), vec![0, 1, 0, 1, 2]);
        let graph = MultiplexGraph::new(layers, labels, serde_json::Value::Null).unwrap();

        let json_path = dir.path().join("graph.json");
        save_multiplex(&graph, &json_path).unwrap();
        let loaded = load_multiplex(&json_path).unwrap();

        // Saving the loaded graph must reproduce every byte.
        let dir2 = tempfile::tempdir().unwrap();
        let json2 = dir2.path().join("graph.json");
        save_multiplex(&loaded, &json2).unwrap();
        assert_eq!(
            std::fs::read(&json_path).unwrap(),
            std::fs::read(&json2).unwrap()
        );
        for i in 0..2 {
            let f1 = std::fs::read(dir.path().join(format!("features_layer{i}.csv"))).unwrap();
            let f2 = std::fs::read(dir2.path().join(format!("features_layer{i}.csv"))).unwrap();
            assert_eq!(f1, f2, "layer {i} feature bytes");
        }

        assert_eq!(loaded.n_nodes, 5);
        assert_eq!(loaded.layers[0].edges(), graph.layers[0].edges());
        assert_eq!(
            loaded.layers[1].features().to_dense(),
            graph.layers[1].features().to_dense()
        );
        assert_eq!(loaded.labels("final").unwrap(), &[0, 1, 0, 1, 2]);
    }
}
