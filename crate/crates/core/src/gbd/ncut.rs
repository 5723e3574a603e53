//! Two-way normalized cuts and the recursive bipartition built on them.

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::scalar::{total_cmp, Scalar};

use super::graph::ProposalGraph;

/// A split of a graph's nodes into two sides with its normalized-cut value.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition<T> {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub ncut: T,
}

/// Disjoint, covering, nonempty node groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
}

/// One split decision made during the recursion, in global node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord<T> {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub ncut: T,
    pub accepted: bool,
}

/// `cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V)`. A side with zero association
/// has no edges at all, so its term is taken as zero.
pub fn ncut_value<T: Scalar>(g: &ProposalGraph<T>, a: &[usize], b: &[usize]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidGraph("normalized cut needs two nonempty sides".into()));
    }
    let mut side = vec![0u8; g.len()];
    for (tag, set) in [(1u8, a), (2u8, b)] {
        for &i in set {
            if i >= g.len() {
                return Err(Error::InvalidGraph(format!("node {i} out of range")));
            }
            if side[i] != 0 {
                return Err(Error::InvalidGraph(format!("node {i} appears twice")));
            }
            side[i] = tag;
        }
    }
    if side.contains(&0) {
        return Err(Error::InvalidGraph("sides do not cover the graph".into()));
    }
    let mut cut = T::zero();
    for &i in a {
        let row = g.row(i);
        for &j in b {
            cut = cut + row[j];
        }
    }
    let assoc_a: T = a.iter().map(|&i| g.degree(i)).sum();
    let assoc_b: T = b.iter().map(|&i| g.degree(i)).sum();
    Ok(ratio(cut, assoc_a) + ratio(cut, assoc_b))
}

fn ratio<T: Scalar>(cut: T, assoc: T) -> T {
    if assoc > T::zero() {
        cut / assoc
    } else {
        T::zero()
    }
}

/// Best two-way split of `g` from the second eigenvector of the generalized
/// problem `(D - W) y = lambda D y`, searched over every threshold of the
/// sorted eigenvector.
///
/// A disconnected graph is split along its first connected component
/// directly, which is the zero-cut split the eigenvector would expose.
pub fn spectral_bipartition<T: Scalar>(g: &ProposalGraph<T>) -> Result<Bipartition<T>> {
    let n = g.len();
    if n < 2 {
        return Err(Error::InvalidGraph("bipartition needs at least two nodes".into()));
    }
    if !g.has_edges() {
        return Err(Error::InvalidGraph("bipartition of a graph without edges".into()));
    }

    let comps = g.components();
    if comps.len() > 1 {
        let a = comps[0].clone();
        let b: Vec<usize> = comps[1..].iter().flatten().copied().collect::<Vec<_>>();
        let mut b = b;
        b.sort_unstable();
        let ncut = ncut_value(g, &a, &b)?;
        return Ok(Bipartition { a, b, ncut });
    }

    // Normalized Laplacian I - D^-1/2 W D^-1/2 shares its spectrum with the
    // generalized problem; y = D^-1/2 z maps eigenvectors back.
    let inv_sqrt: Vec<T> = g.degrees().iter().map(|d| T::one() / d.sqrt()).collect();
    let mut lap = vec![T::zero(); n * n];
    for i in 0..n {
        let row = g.row(i);
        for j in 0..n {
            let m = row[j] * inv_sqrt[i] * inv_sqrt[j];
            lap[i * n + j] = if i == j { T::one() - m } else { -m };
        }
    }
    let eig = symmetric_eigen(&lap, n)?;
    let mut y: Vec<T> = eig
        .vector(1)
        .iter()
        .zip(&inv_sqrt)
        .map(|(&z, &s)| z * s)
        .collect();

    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::lit(1e-9);
    if let Some(first) = y.iter().find(|v| v.abs() > tiny) {
        if *first < T::zero() {
            y.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| total_cmp(y[i], y[j]).then(i.cmp(&j)));

    // Sweep prefixes of the sorted order, updating cut and association
    // incrementally.
    let total: T = g.degrees().iter().copied().sum();
    let mut in_a = vec![false; n];
    let mut cut = T::zero();
    let mut assoc_a = T::zero();
    let mut best: Option<(usize, T)> = None;
    for (p, &v) in order.iter().enumerate().take(n - 1) {
        let to_a: T = g
            .row(v)
            .iter()
            .zip(&in_a)
            .filter(|(_, &inside)| inside)
            .map(|(&w, _)| w)
            .sum();
        cut = cut + g.degree(v) - T::two() * to_a;
        assoc_a = assoc_a + g.degree(v);
        in_a[v] = true;
        let value = ratio(cut, assoc_a) + ratio(cut, total - assoc_a);
        if best.is_none_or(|(_, bv)| value < bv) {
            best = Some((p, value));
        }
    }
    let (p, _) = best.expect("at least two nodes");
    let mut a: Vec<usize> = order[..=p].to_vec();
    let mut b: Vec<usize> = order[p + 1..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    if a[0] > b[0] {
        std::mem::swap(&mut a, &mut b);
    }
    let ncut = ncut_value(g, &a, &b)?;
    Ok(Bipartition { a, b, ncut })
}

/// Recursive two-way normalized cut. Zero-degree nodes of every subgraph are
/// peeled into singletons; a subgraph is split while its best split has
/// `ncut < epsilon` and is a final group otherwise.
pub fn recursive_partition<T: Scalar>(g: &ProposalGraph<T>, epsilon: T) -> Result<Partition> {
    recursive_partition_traced(g, epsilon).map(|(p, _)| p)
}

/// [`recursive_partition`] that also returns every split it evaluated.
pub fn recursive_partition_traced<T: Scalar>(
    g: &ProposalGraph<T>,
    epsilon: T,
) -> Result<(Partition, Vec<SplitRecord<T>>)> {
    if !(epsilon >= T::zero() && epsilon <= T::two()) {
        return Err(Error::InvalidConfig(format!("epsilon must lie in [0, 2], got {epsilon}")));
    }
    let mut groups = Vec::new();
    let mut trace = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![(0..g.len()).collect()];
    while let Some(nodes) = stack.pop() {
        if nodes.len() == 1 {
            groups.push(nodes);
            continue;
        }
        let sub = g.induced(&nodes);
        let mut rest = Vec::with_capacity(nodes.len());
        for (k, &node) in nodes.iter().enumerate() {
            if sub.degree(k) > T::zero() {
                rest.push(node);
            } else {
                groups.push(vec![node]);
            }
        }
        if rest.len() < 2 {
            if !rest.is_empty() {
                groups.push(rest);
            }
            continue;
        }
        let sub = if rest.len() == nodes.len() { sub } else { g.induced(&rest) };
        let split = spectral_bipartition(&sub)?;
        let a: Vec<usize> = split.a.iter().map(|&k| rest[k]).collect();
        let b: Vec<usize> = split.b.iter().map(|&k| rest[k]).collect();
        let accepted = split.ncut < epsilon;
        trace.push(SplitRecord {
            a: a.clone(),
            b: b.clone(),
            ncut: split.ncut,
            accepted,
        });
        if accepted {
            stack.push(b);
            stack.push(a);
        } else {
            groups.push(rest);
        }
    }
    for grp in &mut groups {
        grp.sort_unstable();
    }
    groups.sort_by_key(|grp| grp[0]);
    Ok((Partition { groups }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> ProposalGraph<f64> {
        let mut w = vec![0.0; n * n];
        for &(i, j, v) in edges {
            w[i * n + j] = v;
            w[j * n + i] = v;
        }
        ProposalGraph::from_weights(n, w).unwrap()
    }

    #[test]
    fn ncut_examples() {
        let g = graph(4, &[(0, 1, 0.7), (2, 3, 0.4)]);
        assert_eq!(ncut_value(&g, &[0, 1], &[2, 3]).unwrap(), 0.0);

        let g = graph(2, &[(0, 1, 0.5)]);
        assert_eq!(ncut_value(&g, &[0], &[1]).unwrap(), 2.0);

        // two 0.8 pairs with 0.1 on all four cross pairs: cut 0.4, each side
        // associates 2 * 0.8 + 0.4 = 2.0
        let g = graph(
            4,
            &[(0, 1, 0.8), (2, 3, 0.8), (0, 2, 0.1), (0, 3, 0.1), (1, 2, 0.1), (1, 3, 0.1)],
        );
        assert_relative_eq!(ncut_value(&g, &[0, 1], &[2, 3]).unwrap(), 0.4, epsilon = 1e-12);
        assert_relative_eq!(
            ncut_value(&g, &[0, 1], &[2, 3]).unwrap(),
            ncut_value(&g, &[2, 3], &[0, 1]).unwrap()
        );

        assert!(ncut_value(&g, &[], &[0, 1, 2, 3]).is_err());
        assert!(ncut_value(&g, &[0, 1], &[1, 2, 3]).is_err());
        assert!(ncut_value(&g, &[0], &[1, 2]).is_err());
    }

    #[test]
    fn bipartition_examples() {
        let g = graph(2, &[(0, 1, 0.3)]);
        let s = spectral_bipartition(&g).unwrap();
        assert_eq!((s.a, s.b, s.ncut), (vec![0], vec![1], 2.0));

        let mut edges = Vec::new();
        for (x, y) in [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            edges.push((x, y, 0.9));
        }
        for x in 0..3 {
            for y in 3..6 {
                edges.push((x, y, 0.01));
            }
        }
        let g = graph(6, &edges);
        let s = spectral_bipartition(&g).unwrap();
        assert_eq!(s.a, vec![0, 1, 2]);
        assert_eq!(s.b, vec![3, 4, 5]);
        assert!(s.ncut < 0.1);

        // path 0-1-2: {0}|{1,2} gives 1/1 + 1/3
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let s = spectral_bipartition(&g).unwrap();
        assert_relative_eq!(s.ncut, 1.0 + 1.0 / 3.0, epsilon = 1e-12);
        assert!(s.a.len() == 1 || s.b.len() == 1);

        assert!(spectral_bipartition(&graph(3, &[])).is_err());
        assert!(spectral_bipartition(&graph(1, &[])).is_err());
    }

    #[test]
    fn disconnected_graph_splits_on_component() {
        let g = graph(5, &[(0, 2, 0.5), (1, 3, 0.5), (3, 4, 0.2)]);
        let s = spectral_bipartition(&g).unwrap();
        assert_eq!(s.a, vec![0, 2]);
        assert_eq!(s.ncut, 0.0);
    }

    #[test]
    fn recursion_examples() {
        let g = graph(4, &[(0, 1, 0.9), (1, 2, 0.9), (2, 3, 0.9), (0, 3, 0.2)]);
        let p = recursive_partition(&g, 0.0).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1, 2, 3]]);

        let g = graph(5, &[(0, 1, 0.9), (1, 2, 0.8), (3, 4, 0.7)]);
        let p = recursive_partition(&g, 0.05).unwrap();
        assert_eq!(p.groups, vec![vec![0, 1, 2], vec![3, 4]]);

        let g = graph(2, &[(0, 1, 1.0)]);
        assert_eq!(recursive_partition(&g, 1.0).unwrap().groups, vec![vec![0, 1]]);

        // isolated nodes always become singletons
        let g = graph(3, &[(0, 2, 1.0)]);
        assert_eq!(recursive_partition(&g, 0.0).unwrap().groups, vec![vec![0, 2], vec![1]]);

        assert!(recursive_partition(&g, 2.5).is_err());
    }

    #[test]
    fn complete_graph_never_splits_below_one() {
        let n = 6;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j, 0.7));
            }
        }
        let g = graph(n, &edges);
        let s = spectral_bipartition(&g).unwrap();
        assert_relative_eq!(s.ncut, n as f64 / (n - 1) as f64, epsilon = 1e-12);
        assert_eq!(recursive_partition(&g, 1.0).unwrap().groups.len(), 1);
    }
}
