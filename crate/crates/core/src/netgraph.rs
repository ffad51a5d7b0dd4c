//! Network topology and diffusion combination weights.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Undirected network with self-loops: node `k` is always in its own neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from a dense row-major adjacency relation.
    ///
    /// Rejects relations that are not symmetric or are missing a self-loop.
    pub fn from_adjacency(n: usize, adjacency: Vec<bool>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Topology("network must have at least one node".into()));
        }
        if adjacency.len() != n * n {
            return Err(Error::Topology(format!(
                "adjacency has {} entries, expected {}",
                adjacency.len(),
                n * n
            )));
        }
        for k in 0..n {
            if !adjacency[k * n + k] {
                return Err(Error::Topology(format!("node {} is not in its own neighborhood", k + 1)));
            }
            for m in (k + 1)..n {
                if adjacency[k * n + m] != adjacency[m * n + k] {
                    return Err(Error::Topology(format!(
                        "adjacency is not symmetric between nodes {} and {}",
                        k + 1,
                        m + 1
                    )));
                }
            }
        }
        let neighbors = (0..n)
            .map(|k| (0..n).filter(|&m| adjacency[k * n + m]).collect())
            .collect();
        Ok(Self { n, adjacency, neighbors })
    }

    /// Builds a topology from 0-based undirected edges. Self-loops are implied.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![false; n * n];
        for k in 0..n {
            adjacency[k * n + k] = true;
        }
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            adjacency[a * n + b] = true;
            adjacency[b * n + a] = true;
        }
        Self::from_adjacency(n, adjacency)
    }

    /// Fully connected network on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        Self::from_adjacency(n, vec![true; n * n])
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn line(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        Self::from_edges(n, &edges)
    }

    /// Random geometric graph: nodes uniform in the unit square, linked when closer
    /// than `radius`. Redrawn until connected.
    pub fn random_geometric<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Self> {
        const MAX_ATTEMPTS: usize = 10_000;
        if !(radius > 0.0) {
            return Err(Error::param(format!("topology radius must be positive, got {radius}")));
        }
        for _ in 0..MAX_ATTEMPTS {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let mut edges = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    let (dx, dy) = (pts[a].0 - pts[b].0, pts[a].1 - pts[b].1);
                    if (dx * dx + dy * dy).sqrt() < radius {
                        edges.push((a, b));
                    }
                }
            }
            let topo = Self::from_edges(n, &edges)?;
            if topo.is_connected() {
                return Ok(topo);
            }
        }
        Err(Error::Topology(format!(
            "no connected {n}-node geometric graph with radius {radius} after {MAX_ATTEMPTS} draws"
        )))
    }

    /// Parses the plain-text topology format: first line `N`, then `m k` edge
    /// pairs with 1-based indices. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match n {
                None => {
                    if fields.len() != 1 {
                        return Err(err(idx + 1, "expected node count".into()));
                    }
                    let count: usize = fields[0]
                        .parse()
                        .map_err(|_| err(idx + 1, format!("bad node count `{}`", fields[0])))?;
                    n = Some(count);
                }
                Some(count) => {
                    if fields.len() != 2 {
                        return Err(err(idx + 1, "expected `m k` edge pair".into()));
                    }
                    let mut ends = [0usize; 2];
                    for (slot, f) in ends.iter_mut().zip(&fields) {
                        let v: usize = f.parse().map_err(|_| err(idx + 1, format!("bad node index `{f}`")))?;
                        if v == 0 || v > count {
                            return Err(err(idx + 1, format!("node index {v} outside 1..={count}")));
                        }
                        *slot = v - 1;
                    }
                    edges.push((ends[0], ends[1]));
                }
            }
        }
        let n = n.ok_or_else(|| err(0, "empty topology file".into()))?;
        Self::from_edges(n, &edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Serializes back to the 1-based text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                if self.is_linked(a, b) {
                    let _ = writeln!(out, "{} {}", a + 1, b + 1);
                }
            }
        }
        out
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn is_linked(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.n + b]
    }

    /// Neighborhood of `k` (self included) in ascending index order.
    pub fn neighbors(&self, k: usize) -> Result<&[usize]> {
        self.neighbors
            .get(k)
            .map(Vec::as_slice)
            .ok_or(Error::NodeIndex { index: k, n: self.n })
    }

    /// Neighborhood size `n_k`, self included.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(k) = queue.pop_front() {
                comp.push(k);
                for &m in &self.neighbors[k] {
                    if !seen[m] {
                        seen[m] = true;
                        queue.push_back(m);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }
}

/// Column-stochastic combination weights; entry `(m, k)` is the weight node `k`
/// gives to the estimate received from node `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    c: DMatrix<f64>,
    /// Nonzero support of each column as `(m, c_{m,k})`, ascending in `m`.
    support: Vec<Vec<(usize, f64)>>,
}

impl CombinationMatrix {
    /// Validates a user-supplied matrix: square, nonnegative, columns summing to one.
    pub fn from_matrix(c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() || c.nrows() == 0 {
            return Err(Error::Matrix(format!("combination matrix is {}x{}", c.nrows(), c.ncols())));
        }
        for k in 0..c.ncols() {
            let col = c.column(k);
            if col.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Matrix(format!("column {} has a negative or non-finite weight", k + 1)));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Matrix(format!("column {} sums to {sum}", k + 1)));
            }
        }
        let support = (0..c.ncols())
            .map(|k| {
                (0..c.nrows())
                    .filter(|&m| c[(m, k)] > 0.0)
                    .map(|m| (m, c[(m, k)]))
                    .collect()
            })
            .collect();
        Ok(Self { c, support })
    }

    /// No cooperation: every node keeps its own estimate.
    pub fn identity(n: usize) -> Self {
        Self::from_matrix(DMatrix::identity(n, n)).expect("identity is column-stochastic")
    }

    pub fn n_nodes(&self) -> usize {
        self.c.nrows()
    }

    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.c[(m, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Nonzero weights of column `k`.
    pub fn column(&self, k: usize) -> &[(usize, f64)] {
        &self.support[k]
    }
}

/// Metropolis rule: `c_{m,k} = 1/max(n_m, n_k)` for linked `m != k`, the diagonal
/// absorbs the remainder.
pub fn build_metropolis(topology: &Topology) -> CombinationMatrix {
    let n = topology.n_nodes();
    let mut c = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut off = 0.0;
        for &m in &topology.neighbors[k] {
            if m != k {
                let w = 1.0 / topology.degree(m).max(topology.degree(k)) as f64;
                c[(m, k)] = w;
                off += w;
            }
        }
        c[(k, k)] = 1.0 - off;
    }
    CombinationMatrix::from_matrix(c).expect("Metropolis weights are column-stochastic")
}

/// Free-function form of [`Topology::neighbors`].
pub fn neighbors(topology: &Topology, k: usize) -> Result<&[usize]> {
    topology.neighbors(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-14
    }

    #[test]
    fn isolated_node_keeps_full_weight() {
        let t = Topology::from_edges(1, &[]).unwrap();
        let c = build_metropolis(&t);
        assert_eq!(c.weight(0, 0), 1.0);
        assert_eq!(t.neighbors(0).unwrap(), &[0]);
    }

    #[test]
    fn line_graph_weights() {
        let t = Topology::line(3).unwrap();
        let c = build_metropolis(&t);
        let third = 1.0 / 3.0;
        assert!(close(c.weight(1, 0), third));
        assert!(close(c.weight(0, 0), 2.0 * third));
        assert!(close(c.weight(0, 1), third));
        assert!(close(c.weight(1, 1), third));
        assert!(close(c.weight(2, 1), third));
        assert!(close(c.weight(1, 2), third));
        assert!(close(c.weight(2, 2), 2.0 * third));
        assert_eq!(c.weight(2, 0), 0.0);
        assert_eq!(t.neighbors(1).unwrap(), &[0, 1, 2]);
    }

    #[test]
    fn complete_graph_is_uniform() {
        let c = build_metropolis(&Topology::complete(3).unwrap());
        for m in 0..3 {
            for k in 0..3 {
                assert!(close(c.weight(m, k), 1.0 / 3.0));
            }
        }
    }

    #[test]
    fn rejects_invalid_adjacency() {
        let asym = vec![true, true, false, true];
        assert!(matches!(Topology::from_adjacency(2, asym), Err(Error::Topology(_))));
        let no_self = vec![false, true, true, true];
        assert!(matches!(Topology::from_adjacency(2, no_self), Err(Error::Topology(_))));
    }

    #[test]
    fn neighbor_index_out_of_range() {
        let t = Topology::line(3).unwrap();
        assert!(matches!(t.neighbors(3), Err(Error::NodeIndex { index: 3, n: 3 })));
    }

    #[test]
    fn disconnected_graph_reports_components() {
        let t = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(t.components(), vec![vec![0, 1], vec![2, 3]]);
        assert!(!t.is_connected());
        // Estimation is still defined: the weights are valid.
        let c = build_metropolis(&t);
        assert_eq!(c.weight(2, 0), 0.0);
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let text = "# demo\n3\n1 2\n2 3\n";
        let t = Topology::parse(text, Path::new("demo.txt")).unwrap();
        assert_eq!(t, Topology::line(3).unwrap());
        assert_eq!(Topology::parse(&t.to_text(), Path::new("x")).unwrap(), t);
        let bad = Topology::parse("3\n1 4\n", Path::new("bad.txt"));
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn generated_twenty_node_fixture() {
        // Seed chosen so the fixture has a node with ten neighbors (self included),
        // like the densest node of the reference 20-node layout.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Topology::random_geometric(20, 0.4, &mut rng).unwrap();
        assert!(t.is_connected());
        let k = (0..20).find(|&k| t.degree(k) == 10).expect("fixture has a 10-neighbor node");
        assert_eq!(t.neighbors(k).unwrap().len(), 10);
        for k in 0..20 {
            let nb = t.neighbors(k).unwrap();
            assert!(nb.windows(2).all(|w| w[0] < w[1]));
            assert!(nb.contains(&k));
        }
    }

    fn arb_topology() -> impl Strategy<Value = Topology> {
        (1usize..12).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let mut edges = Vec::new();
                let mut it = bits.into_iter();
                for a in 0..n {
                    for b in (a + 1)..n {
                        if it.next().unwrap() {
                            edges.push((a, b));
                        }
                    }
                }
                Topology::from_edges(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn metropolis_properties(t in arb_topology()) {
            let c = build_metropolis(&t);
            let n = t.n_nodes();
            for k in 0..n {
                let sum: f64 = (0..n).map(|m| c.weight(m, k)).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for m in 0..n {
                    prop_assert!(c.weight(m, k) >= 0.0);
                    prop_assert_eq!(c.weight(m, k) == 0.0, !t.is_linked(m, k));
                    if m != k {
                        prop_assert_eq!(c.weight(m, k), c.weight(k, m));
                    }
                }
            }
        }
    }
}
