//! Weighted digraph of the communication topology, Laplacian construction,
//! connectivity checks and spectral analysis of the follower submatrix `H`.
//!
//! Node 0 is the leader. The adjacency convention is `a[i][j] > 0` iff
//! information flows from node `j` to node `i`; the leader receives
//! nothing, so row 0 is identically zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const POSDEF_TOL: f64 = 1e-10;

/// Weighted communication digraph over `N + 1` nodes (node 0 = leader).
#[derive(Clone, Debug, PartialEq)]
pub struct Digraph {
    adjacency: DMatrix<f64>,
}

impl Digraph {
    /// Build from a full `(N+1) x (N+1)` adjacency matrix, validating the
    /// structural invariants: zero diagonal, zero leader row, non-negative
    /// weights.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square and non-empty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{i}][{j}] = {a} must be finite and >= 0"
                    )));
                }
            }
        }
        for j in 0..n {
            if adjacency[(0, j)] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "leader must not receive: a[0][{j}] = {}",
                    adjacency[(0, j)]
                )));
            }
        }
        Ok(Self { adjacency })
    }

    /// Build from a directed edge list. `(from, to, weight)` adds an
    /// information-flow edge `from -> to`, i.e. sets `a[to][from] = weight`.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut a = DMatrix::zeros(node_count, node_count);
        for &(from, to, w) in edges {
            if from >= node_count || to >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({from} -> {to}) out of range for {node_count} nodes"
                )));
            }
            a[(to, from)] = w;
        }
        Self::from_adjacency(a)
    }

    /// The communication graph of the three-agent example: leader feeds
    /// agents 1 and 3, agents 1 and 2 exchange bidirectionally, unit
    /// weights.
    pub fn example_three_agents() -> Self {
        Self::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (0, 3, 1.0)])
            .expect("static example graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Number of followers `N`.
    pub fn follower_count(&self) -> usize {
        self.node_count() - 1
    }

    /// Weight `a_ij` (receiver `i`, sender `j`).
    pub fn weight(&self, receiver: usize, sender: usize) -> f64 {
        self.adjacency[(receiver, sender)]
    }

    /// In-neighbors of node `i` as `(sender, weight)` pairs in sender
    /// order.
    pub fn in_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.node_count())
            .filter_map(|j| {
                let a = self.adjacency[(i, j)];
                (a > 0.0).then_some((j, a))
            })
            .collect()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }
}

/// Laplacian of a digraph together with the follower submatrix `H` and its
/// spectrum (populated only when `H` is symmetric).
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianDecomposition {
    pub full_laplacian: DMatrix<f64>,
    /// `L` with the leader row and column deleted.
    pub follower_submatrix: DMatrix<f64>,
    /// Eigenvalues of `H` in descending order; empty when `H` is not
    /// symmetric (the follower subgraph is directed).
    pub eigenvalues: Vec<f64>,
    pub follower_symmetric: bool,
}

/// Build `L` (`l_ii = sum_j a_ij`, `l_ij = -a_ij`) and extract `H`.
pub fn build_laplacian(g: &Digraph) -> LaplacianDecomposition {
    let n = g.node_count();
    let a = g.adjacency();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if j != i {
                l[(i, j)] = -a[(i, j)];
                row_sum += a[(i, j)];
            }
        }
        l[(i, i)] = row_sum;
    }
    let h = l.view((1, 1), (n - 1, n - 1)).into_owned();

    let mut sym = true;
    'outer: for i in 0..h.nrows() {
        for j in (i + 1)..h.ncols() {
            if (h[(i, j)] - h[(j, i)]).abs() > SYMMETRY_TOL {
                sym = false;
                break 'outer;
            }
        }
    }

    let eigenvalues = if sym && h.nrows() > 0 {
        let mut eigs: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    } else {
        Vec::new()
    };

    LaplacianDecomposition {
        full_laplacian: l,
        follower_submatrix: h,
        eigenvalues,
        follower_symmetric: sym,
    }
}

/// Connectivity in the leader-following sense: every follower can be
/// reached from node 0 along information-flow edges, and the follower
/// subgraph is undirected (`a_ij = a_ji` for followers).
pub fn is_connected(g: &Digraph) -> bool {
    let n = g.node_count();
    let a = g.adjacency();

    // BFS from the leader over edges (j -> i), i.e. from node u visit every
    // i with a[i][u] > 0.
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && a[(i, u)] > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return false;
    }

    for i in 1..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue `lambda_N` of `H`. Requires a symmetric positive
/// definite `H`, i.e. a connected graph.
pub fn min_eigenvalue(dec: &LaplacianDecomposition) -> Result<f64> {
    if !dec.follower_symmetric {
        return Err(Error::NotConnected(
            "follower subgraph is directed; H has no real spectrum guarantee".into(),
        ));
    }
    let min = dec
        .eigenvalues
        .last()
        .copied()
        .ok_or_else(|| Error::NotConnected("empty follower set".into()))?;
    if min <= POSDEF_TOL {
        return Err(Error::NotConnected(format!(
            "H is not positive definite: min eigenvalue {min:.3e}"
        )));
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig1() -> Digraph {
        Digraph::example_three_agents()
    }

    #[test]
    fn laplacian_of_example_graph() {
        let dec = build_laplacian(&fig1());
        let h = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dec.follower_submatrix, h);
        // Row sums of L are exactly zero for unit weights.
        for i in 0..4 {
            let s: f64 = dec.full_laplacian.row(i).iter().sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn laplacian_of_empty_graph() {
        let g = Digraph::from_adjacency(DMatrix::zeros(3, 3)).unwrap();
        let dec = build_laplacian(&g);
        assert_eq!(dec.full_laplacian, DMatrix::zeros(3, 3));
        assert_eq!(dec.follower_submatrix, DMatrix::zeros(2, 2));
        assert!(dec.follower_symmetric);
    }

    #[test]
    fn example_graph_spectrum_matches_characteristic_polynomial() {
        // The 2x2 block [[2,-1],[-1,1]] has lambda^2 - 3 lambda + 1 = 0,
        // i.e. roots (3 +- sqrt(5))/2; the third eigenvalue is 1.
        let s5 = 5.0_f64.sqrt();
        let expected = [(3.0 + s5) / 2.0, 1.0, (3.0 - s5) / 2.0];
        let dec = build_laplacian(&fig1());
        assert_eq!(dec.eigenvalues.len(), 3);
        for (got, want) in dec.eigenvalues.iter().zip(expected) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-10);
        }
    }

    #[test]
    fn connectivity_examples() {
        assert!(is_connected(&fig1()));

        // Remove 0 -> 3: node 3 can no longer be reached from the leader.
        let g =
            Digraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(!is_connected(&g));

        let single = Digraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert!(is_connected(&single));
    }

    #[test]
    fn directed_follower_subgraph_is_not_connected() {
        // 1 -> 2 without the return edge.
        let g = Digraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(!is_connected(&g));
        let dec = build_laplacian(&g);
        assert!(!dec.follower_symmetric);
        assert!(dec.eigenvalues.is_empty());
        assert!(min_eigenvalue(&dec).is_err());
    }

    #[test]
    fn min_eigenvalue_examples() {
        let dec = build_laplacian(&fig1());
        let lam = min_eigenvalue(&dec).unwrap();
        assert_abs_diff_eq!(lam, (3.0 - 5.0_f64.sqrt()) / 2.0, epsilon = 1e-10);

        let single = Digraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(min_eigenvalue(&build_laplacian(&single)).unwrap(), 1.0);

        // Two followers, both leader-attached, joined by a unit edge:
        // H = [[2,-1],[-1,2]], min eigenvalue 1.
        let k2 = Digraph::from_edges(
            3,
            &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let lam = min_eigenvalue(&build_laplacian(&k2)).unwrap();
        assert_abs_diff_eq!(lam, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disconnected_graph_fails_positive_definiteness() {
        let g = Digraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        let dec = build_laplacian(&g);
        // H is symmetric but singular (row of zeros for follower 3).
        assert!(dec.follower_symmetric);
        assert!(matches!(
            min_eigenvalue(&dec),
            Err(Error::NotConnected(_))
        ));
    }

    #[test]
    fn invalid_graphs_rejected() {
        let mut a = DMatrix::zeros(2, 2);
        a[(1, 1)] = 1.0;
        assert!(Digraph::from_adjacency(a).is_err());

        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0; // leader in-edge
        assert!(Digraph::from_adjacency(a).is_err());

        let mut a = DMatrix::zeros(2, 2);
        a[(1, 0)] = -1.0;
        assert!(Digraph::from_adjacency(a).is_err());
    }
}
