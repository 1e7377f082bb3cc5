use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Nonnegative `P x P` adjacency. Directed graphs are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGraph {
    adjacency: Tensor,
}

impl SpatialGraph {
    pub fn new(adjacency: Tensor) -> Result<Self> {
        let d = adjacency.dims();
        if d.len() != 2 || d[0] != d[1] {
            return Err(Error::shape("spatial graph", format!("adjacency must be square, got {d:?}")));
        }
        if let Some(v) = adjacency.data().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("adjacency entries must be finite and >= 0, found {v}")));
        }
        Ok(SpatialGraph { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }
}

/// `A_ij = exp(-d_ij / sigma^2)`, zeroing entries below `threshold`; the
/// diagonal is fixed to one.
pub fn gaussian_kernel_adjacency(
    distances: &Tensor,
    sigma_squared: f64,
    threshold: f64,
) -> Result<SpatialGraph> {
    let d = distances.dims();
    if d.len() != 2 || d[0] != d[1] {
        return Err(Error::shape("gaussian kernel", format!("distances must be square, got {d:?}")));
    }
    if !(sigma_squared > 0.0) {
        return Err(Error::invalid(format!("sigma^2 must be positive, got {sigma_squared}")));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::invalid(format!("sparsity threshold must lie in [0, 1), got {threshold}")));
    }
    let p = d[0];
    let mut a = Tensor::zeros(&[p, p]);
    for i in 0..p {
        for j in 0..p {
            let dij = distances.get2(i, j);
            if !dij.is_finite() || dij < 0.0 {
                return Err(Error::invalid(format!("distance ({i}, {j}) = {dij} is negative or non-finite")));
            }
            let w = if i == j { 1.0 } else { (-dij / sigma_squared).exp() };
            a.set2(i, j, if w < threshold { 0.0 } else { w });
        }
    }
    SpatialGraph::new(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportKind {
    RandomWalk,
    ReverseRandomWalk,
    NormalizedLaplacian,
}

/// Diffusion operator derived from a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSupport {
    pub kind: SupportKind,
    matrix: Arc<Tensor>,
}

impl GraphSupport {
    /// Wraps an arbitrary square matrix, e.g. for tests or custom filters.
    pub fn custom(kind: SupportKind, matrix: Tensor) -> Result<Self> {
        if matrix.dims().len() != 2 || matrix.rows() != matrix.cols() {
            return Err(Error::shape("graph support", format!("{:?} is not square", matrix.dims())));
        }
        Ok(GraphSupport { kind, matrix: Arc::new(matrix) })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn node_count(&self) -> usize {
        self.matrix.rows()
    }

    pub(crate) fn shared(&self) -> Arc<Tensor> {
        Arc::clone(&self.matrix)
    }
}

fn row_normalize(a: &Tensor) -> Tensor {
    let p = a.rows();
    let mut out = a.clone();
    for i in 0..p {
        let deg: f64 = (0..p).map(|j| a.get2(i, j)).sum();
        for j in 0..p {
            let v = if deg > 0.0 { a.get2(i, j) / deg } else { 0.0 };
            out.set2(i, j, v);
        }
    }
    out
}

/// `D^-1 A` with `D` the out-degree; zero-degree rows stay zero.
pub fn random_walk_support(graph: &SpatialGraph) -> GraphSupport {
    GraphSupport {
        kind: SupportKind::RandomWalk,
        matrix: Arc::new(row_normalize(graph.adjacency())),
    }
}

/// Random walk on the reversed edges, `D_in^-1 A^T`.
pub fn reverse_random_walk_support(graph: &SpatialGraph) -> GraphSupport {
    GraphSupport {
        kind: SupportKind::ReverseRandomWalk,
        matrix: Arc::new(row_normalize(&graph.adjacency().transpose())),
    }
}

/// `I - D^-1/2 A D^-1/2` on the symmetrized adjacency `(A + A^T) / 2`.
/// Isolated nodes get identity rows.
pub fn normalized_laplacian_support(graph: &SpatialGraph) -> GraphSupport {
    let a = graph.adjacency();
    let p = a.rows();
    let sym = |i: usize, j: usize| 0.5 * (a.get2(i, j) + a.get2(j, i));
    let inv_sqrt: Vec<f64> = (0..p)
        .map(|i| {
            let deg: f64 = (0..p).map(|j| sym(i, j)).sum();
            if deg > 0.0 { 1.0 / deg.sqrt() } else { 0.0 }
        })
        .collect();
    let mut out = Tensor::identity(p);
    for i in 0..p {
        for j in 0..p {
            let v = out.get2(i, j) - inv_sqrt[i] * sym(i, j) * inv_sqrt[j];
            out.set2(i, j, v);
        }
    }
    GraphSupport { kind: SupportKind::NormalizedLaplacian, matrix: Arc::new(out) }
}

/// Row count of the stacked weight matrix consumed by [`graph_conv`].
pub fn graph_conv_weight_rows(supports: usize, diffusion_steps: usize, d_in: usize) -> usize {
    supports * diffusion_steps * d_in
}

/// Diffusion convolution `sum_s sum_{k=1..K} (S_s^k X) W_{s,k}`.
///
/// `features` is `[batch * P, d_in]` (node-major inside each batch block)
/// and `weights` stacks the per-term blocks `W_{s,k}` vertically, supports
/// outermost, giving `[supports * K * d_in, d_out]`.
pub fn graph_conv(
    tape: &mut Tape,
    weights: Var,
    features: Var,
    supports: &[GraphSupport],
    diffusion_steps: usize,
) -> Result<Var> {
    if supports.is_empty() || diffusion_steps == 0 {
        return Err(Error::invalid("graph convolution needs at least one support and one diffusion step"));
    }
    let fv = tape.value(features);
    let (rows, d_in) = (fv.rows(), fv.cols());
    let p = supports[0].node_count();
    if supports.iter().any(|s| s.node_count() != p) || rows % p != 0 {
        return Err(Error::shape("graph_conv", format!("features {:?} on {p} nodes", fv.dims())));
    }
    let wrows = tape.value(weights).rows();
    let expected = graph_conv_weight_rows(supports.len(), diffusion_steps, d_in);
    if wrows != expected {
        return Err(Error::shape(
            "graph_conv",
            format!("weights have {wrows} rows, expected {expected} for {} supports, K = {diffusion_steps}, d_in = {d_in}", supports.len()),
        ));
    }
    let mut terms = Vec::with_capacity(supports.len() * diffusion_steps);
    for s in supports {
        let mut cur = features;
        for _ in 0..diffusion_steps {
            cur = tape.block_matmul(s.shared(), cur)?;
            terms.push(cur);
        }
    }
    let stacked = if terms.len() == 1 { terms[0] } else { tape.concat_cols(&terms)? };
    tape.matmul(stacked, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn kernel_values() {
        let d = m(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let g = gaussian_kernel_adjacency(&d, 2.0, 0.0).unwrap();
        assert_eq!(g.adjacency().get2(0, 0), 1.0);
        assert!((g.adjacency().get2(0, 1) - 0.36787944117144233).abs() < 1e-15);
        let sparse = gaussian_kernel_adjacency(&d, 2.0, 0.5).unwrap();
        assert_eq!(sparse.adjacency().get2(0, 1), 0.0);
        assert_eq!(sparse.adjacency().get2(1, 1), 1.0);
    }

    #[test]
    fn kernel_rejects_negative_distance() {
        let d = m(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(gaussian_kernel_adjacency(&d, 1.0, 0.0).is_err());
    }

    #[test]
    fn random_walk_examples() {
        let id = SpatialGraph::new(Tensor::identity(3)).unwrap();
        assert_eq!(random_walk_support(&id).matrix(), &Tensor::identity(3));
        let g = SpatialGraph::new(m(2, 2, &[0.0, 2.0, 1.0, 0.0])).unwrap();
        assert_eq!(random_walk_support(&g).matrix().data(), &[0.0, 1.0, 1.0, 0.0]);
        let z = SpatialGraph::new(m(2, 2, &[0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(random_walk_support(&z).matrix().data(), &[0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn reverse_walk_uses_transpose() {
        let g = SpatialGraph::new(m(2, 2, &[1.0, 3.0, 0.0, 1.0])).unwrap();
        let r = reverse_random_walk_support(&g);
        assert_eq!(r.matrix().data(), &[1.0, 0.0, 0.75, 0.25]);
    }

    #[test]
    fn laplacian_examples() {
        let id = SpatialGraph::new(Tensor::identity(2)).unwrap();
        assert_eq!(normalized_laplacian_support(&id).matrix().data(), &[0.0; 4]);
        let pair = SpatialGraph::new(m(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(normalized_laplacian_support(&pair).matrix().data(), &[1.0, -1.0, -1.0, 1.0]);
        let iso = SpatialGraph::new(m(3, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 0.])).unwrap();
        let l = normalized_laplacian_support(&iso);
        assert_eq!(&l.matrix().data()[6..9], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn graph_conv_hand_example() {
        let s = GraphSupport::custom(SupportKind::RandomWalk, m(2, 2, &[0., 1., 1., 0.])).unwrap();
        let mut tape = Tape::new();
        let w = tape.leaf(m(1, 1, &[1.0]));
        let x = tape.leaf(m(2, 1, &[1.0, 2.0]));
        let y = graph_conv(&mut tape, w, x, &[s], 1).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 1.0]);
    }

    #[test]
    fn graph_conv_zero_weights_block_gradient() {
        let s = GraphSupport::custom(SupportKind::RandomWalk, m(2, 2, &[0.5, 0.5, 0.2, 0.8])).unwrap();
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[4, 3]));
        let x = tape.leaf(m(2, 2, &[1.0, 2.0, -1.0, 0.5]));
        let y = graph_conv(&mut tape, w, x, &[s], 2).unwrap();
        assert!(tape.value(y).data().iter().all(|v| *v == 0.0));
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(x).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn graph_conv_weight_row_mismatch() {
        let s = GraphSupport::custom(SupportKind::RandomWalk, Tensor::identity(2)).unwrap();
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[3, 1]));
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(graph_conv(&mut tape, w, x, &[s], 1).is_err());
    }
}
