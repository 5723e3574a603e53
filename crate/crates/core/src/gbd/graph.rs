use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Undirected proposal graph with IoU edge weights, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalGraph<T> {
    n: usize,
    weights: Vec<T>,
    degrees: Vec<T>,
}

impl<T: Scalar> ProposalGraph<T> {
    /// Graph over `boxes` with `W_ij = IoU(b_i, b_j)` and a zero diagonal.
    pub fn from_boxes(boxes: &[BBox<T>]) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::EmptyInput("cannot build a graph over zero proposals"));
        }
        if boxes.iter().any(|b| b.area() <= T::zero()) {
            return Err(Error::DegenerateArea("graph node with zero-area box"));
        }
        let n = boxes.len();
        let mut weights = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let w = boxes[i].iou(&boxes[j])?;
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        Ok(Self::from_trusted(n, weights))
    }

    /// Graph from an explicit row-major weight matrix, which must be
    /// symmetric with entries in `[0, 1]` and a zero diagonal.
    pub fn from_weights(n: usize, weights: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("cannot build a graph over zero nodes"));
        }
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: weights.len(),
            });
        }
        for i in 0..n {
            if weights[i * n + i] != T::zero() {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at node {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !(w >= T::zero() && w <= T::one()) {
                    return Err(Error::InvalidGraph(format!("weight {w} at ({i}, {j}) outside [0, 1]")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::InvalidGraph(format!("asymmetric weight at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_trusted(n, weights))
    }

    fn from_trusted(n: usize, weights: Vec<T>) -> Self {
        let degrees = (0..n)
            .map(|i| weights[i * n..(i + 1) * n].iter().copied().sum())
            .collect();
        Self { n, weights, degrees }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self, i: usize) -> T {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    pub fn has_edges(&self) -> bool {
        self.degrees.iter().any(|&d| d > T::zero())
    }

    /// Subgraph induced by `nodes`; node `k` of the result is `nodes[k]`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let m = nodes.len();
        let mut weights = Vec::with_capacity(m * m);
        for &i in nodes {
            let row = self.row(i);
            weights.extend(nodes.iter().map(|&j| row[j]));
        }
        Self::from_trusted(m, weights)
    }

    /// Connected components over positive-weight edges, each sorted, ordered
    /// by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for (v, &w) in self.row(u).iter().enumerate() {
                    if w > T::zero() && label[v] == usize::MAX {
                        label[v] = id;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub fn build_graph<T: Scalar>(boxes: &[BBox<T>]) -> Result<ProposalGraph<T>> {
    ProposalGraph::from_boxes(boxes)
}
