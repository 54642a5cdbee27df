//! The 3-clique complex of the complete graph on `N` entities and its
//! discrete differential operators.
//!
//! Vertices are `0..N`. Edges `(i, j)` with `i < j` and triangles `(i, j, k)`
//! with `i < j < k` are indexed in lexicographic order. Edge flows store the
//! value for the canonical orientation `i < j`; triangle flows store the value
//! for the canonical orientation `i < j < k`. Accessors for other orientations
//! apply the sign of the permutation.
//!
//! Sign convention: `(grad s)(i, j) = s(i) - s(j)`, so a positive edge value
//! means entity `i` is stronger than entity `j`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{check_len, Error, Result};

/// Relative singular-value cutoff used when extracting the curl basis.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const NONE: usize = usize::MAX;

/// Lexicographic indexing of the edges and triangles of the complete graph.
#[derive(Debug, Clone)]
pub struct ComplexIndex {
    n: usize,
    edges: Vec<(usize, usize)>,
    triangles: Vec<(usize, usize, usize)>,
    edge_lookup: Vec<usize>,
    triangle_lookup: Vec<usize>,
}

impl ComplexIndex {
    /// Builds the index for `n_entities` vertices. Requires at least three
    /// vertices so that the complex has a triangle.
    pub fn new(n_entities: usize) -> Result<Self> {
        if n_entities < 3 {
            return Err(Error::InvalidInput(format!(
                "at least 3 entities are required to form a triangle, got {n_entities}"
            )));
        }
        let n = n_entities;
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        let mut edge_lookup = vec![NONE; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                edge_lookup[i * n + j] = edges.len();
                edges.push((i, j));
            }
        }
        let mut triangles = Vec::with_capacity(binomial(n, 3));
        let mut triangle_lookup = vec![NONE; n * n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    triangle_lookup[(i * n + j) * n + k] = triangles.len();
                    triangles.push((i, j, k));
                }
            }
        }
        Ok(Self {
            n,
            edges,
            triangles,
            edge_lookup,
            triangle_lookup,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Cyclomatic number `|E| - |V| + 1 = C(N-1, 2)`, the dimension of the
    /// identifiable curl parameterization.
    pub fn cyclomatic(&self) -> usize {
        (self.n - 1) * (self.n - 2) / 2
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn triangles(&self) -> &[(usize, usize, usize)] {
        &self.triangles
    }

    /// Index of the canonical edge `(i, j)`, `i < j`.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        if i < j && j < self.n {
            Some(self.edge_lookup[i * self.n + j])
        } else {
            None
        }
    }

    /// Index and orientation sign of the edge between `i` and `j` in either order.
    pub fn oriented_edge(&self, i: usize, j: usize) -> Option<(usize, f64)> {
        if i < j {
            self.edge_index(i, j).map(|e| (e, 1.0))
        } else {
            self.edge_index(j, i).map(|e| (e, -1.0))
        }
    }

    /// Index of the canonical triangle `(i, j, k)`, `i < j < k`.
    pub fn triangle_index(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        if i < j && j < k && k < self.n {
            Some(self.triangle_lookup[(i * self.n + j) * self.n + k])
        } else {
            None
        }
    }

    /// Index and permutation sign of the triangle spanned by `i, j, k` in any order.
    pub fn oriented_triangle(&self, i: usize, j: usize, k: usize) -> Option<(usize, f64)> {
        let mut v = [i, j, k];
        let mut sign = 1.0;
        // three-element bubble sort, counting transpositions
        for (a, b) in [(0, 1), (1, 2), (0, 1)] {
            if v[a] > v[b] {
                v.swap(a, b);
                sign = -sign;
            }
        }
        self.triangle_index(v[0], v[1], v[2]).map(|t| (t, sign))
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// An alternating function on edges, stored for the canonical orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlow(pub DVector<f64>);

impl EdgeFlow {
    pub fn zeros(idx: &ComplexIndex) -> Self {
        Self(DVector::zeros(idx.n_edges()))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `X(i, j)`, with `X(j, i) = -X(i, j)`. Returns `None` when `i == j` or out of range.
    pub fn get(&self, idx: &ComplexIndex, i: usize, j: usize) -> Option<f64> {
        idx.oriented_edge(i, j).map(|(e, sign)| sign * self.0[e])
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }
}

/// An alternating function on triangles, stored for the canonical orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleFlow(pub DVector<f64>);

impl TriangleFlow {
    pub fn zeros(idx: &ComplexIndex) -> Self {
        Self(DVector::zeros(idx.n_triangles()))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Phi(i, j, k)` with the sign of the permutation relative to sorted order.
    pub fn get(&self, idx: &ComplexIndex, i: usize, j: usize, k: usize) -> Option<f64> {
        idx.oriented_triangle(i, j, k).map(|(t, sign)| sign * self.0[t])
    }
}

/// `(grad s)(i, j) = s_i - s_j`.
pub fn grad_apply(s: &DVector<f64>, idx: &ComplexIndex) -> Result<EdgeFlow> {
    check_len("score vector", idx.n_entities(), s.len())?;
    let values = idx.edges().iter().map(|&(i, j)| s[i] - s[j]).collect();
    Ok(EdgeFlow::from_vec(values))
}

/// `(curl X)(i, j, k) = X(i, j) + X(j, k) + X(k, i)`.
pub fn curl_apply(x: &EdgeFlow, idx: &ComplexIndex) -> Result<TriangleFlow> {
    check_len("edge flow", idx.n_edges(), x.len())?;
    let n = idx.n_entities();
    let v = x.values();
    let values = idx
        .triangles()
        .iter()
        .map(|&(i, j, k)| {
            let ij = idx.edge_lookup[i * n + j];
            let jk = idx.edge_lookup[j * n + k];
            let ik = idx.edge_lookup[i * n + k];
            v[ij] + v[jk] - v[ik]
        })
        .collect::<Vec<_>>();
    Ok(TriangleFlow(DVector::from_vec(values)))
}

/// `(grad* X)(i) = sum_j X(i, j)`.
pub fn grad_adjoint_apply(x: &EdgeFlow, idx: &ComplexIndex) -> Result<DVector<f64>> {
    check_len("edge flow", idx.n_edges(), x.len())?;
    let mut out = DVector::zeros(idx.n_entities());
    for (e, &(i, j)) in idx.edges().iter().enumerate() {
        out[i] += x.0[e];
        out[j] -= x.0[e];
    }
    Ok(out)
}

/// `(curl* Phi)(i, j) = sum_k Phi(i, j, k)`.
pub fn curl_adjoint_apply(phi: &TriangleFlow, idx: &ComplexIndex) -> Result<EdgeFlow> {
    check_len("triangle flow", idx.n_triangles(), phi.len())?;
    let n = idx.n_entities();
    let mut out = DVector::zeros(idx.n_edges());
    for (t, &(i, j, k)) in idx.triangles().iter().enumerate() {
        let p = phi.0[t];
        out[idx.edge_lookup[i * n + j]] += p;
        out[idx.edge_lookup[j * n + k]] += p;
        out[idx.edge_lookup[i * n + k]] -= p;
    }
    Ok(EdgeFlow(out))
}

/// Dense gradient matrix `G` (`|E| x N`).
pub fn grad_matrix(idx: &ComplexIndex) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(idx.n_edges(), idx.n_entities());
    for (e, &(i, j)) in idx.edges().iter().enumerate() {
        g[(e, i)] = 1.0;
        g[(e, j)] = -1.0;
    }
    g
}

/// Dense curl matrix `C` (`|T| x |E|`). Its transpose is the curl adjoint.
pub fn curl_matrix(idx: &ComplexIndex) -> DMatrix<f64> {
    let n = idx.n_entities();
    let mut c = DMatrix::zeros(idx.n_triangles(), idx.n_edges());
    for (t, &(i, j, k)) in idx.triangles().iter().enumerate() {
        c[(t, idx.edge_lookup[i * n + j])] = 1.0;
        c[(t, idx.edge_lookup[j * n + k])] = 1.0;
        c[(t, idx.edge_lookup[i * n + k])] = -1.0;
    }
    c
}

/// Graph Helmholtzian `grad grad* + curl* curl` as an `|E| x |E|` matrix.
pub fn helmholtzian(idx: &ComplexIndex) -> DMatrix<f64> {
    let g = grad_matrix(idx);
    let c = curl_matrix(idx);
    &g * g.transpose() + c.tr_mul(&c)
}

/// Makes the first entry of each column with magnitude above `eps` positive.
fn fix_column_signs(m: &mut DMatrix<f64>, eps: f64) {
    for mut col in m.column_iter_mut() {
        if let Some(&first) = col.iter().find(|v| v.abs() > eps) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Operator matrices for one complete graph, plus the orthonormal curl basis.
///
/// `curl_basis` (`H`, `|T| x K`) spans `im(curl)`, the orthogonal complement of
/// `ker(curl*)`; restricting triangle parameters to `Phi = H w` makes them
/// identifiable. `curl_flow_basis` caches `C^T H` (`|E| x K`), which maps curl
/// weights straight to edge flows.
#[derive(Debug)]
pub struct OperatorSet {
    index: ComplexIndex,
    grad: DMatrix<f64>,
    curl: DMatrix<f64>,
    curl_basis: DMatrix<f64>,
    curl_flow_basis: DMatrix<f64>,
    kernel_basis: OnceLock<DMatrix<f64>>,
}

impl OperatorSet {
    /// Builds all operators for `n_entities` with the default rank tolerance.
    pub fn new(n_entities: usize) -> Result<Self> {
        Self::build(ComplexIndex::new(n_entities)?, DEFAULT_RANK_TOL)
    }

    /// Builds operators and extracts `H` from a thin SVD of `C`, keeping left
    /// singular vectors whose singular value exceeds `rank_tol` times the largest.
    /// The numeric rank must equal the cyclomatic number.
    pub fn build(index: ComplexIndex, rank_tol: f64) -> Result<Self> {
        if rank_tol.is_nan() || rank_tol <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "rank tolerance must be positive, got {rank_tol}"
            )));
        }
        let grad = grad_matrix(&index);
        let curl = curl_matrix(&index);
        let k = index.cyclomatic();

        let svd = SVD::new(curl.clone(), true, false);
        let u = svd
            .u
            .as_ref()
            .ok_or_else(|| Error::Construction("SVD did not return left vectors".into()))?;
        let sv = &svd.singular_values;
        let max_sv = sv.iter().cloned().fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
        let rank = sv.iter().filter(|&&v| v > rank_tol * max_sv).count();
        if rank != k {
            return Err(Error::Construction(format!(
                "numeric rank of curl is {rank}, expected cyclomatic number {k}"
            )));
        }
        let mut h = DMatrix::zeros(index.n_triangles(), k);
        for (dst, &src) in order.iter().take(k).enumerate() {
            h.set_column(dst, &u.column(src));
        }
        fix_column_signs(&mut h, 1e-12);
        let curl_flow_basis = curl.tr_mul(&h);

        Ok(Self {
            index,
            grad,
            curl,
            curl_basis: h,
            curl_flow_basis,
            kernel_basis: OnceLock::new(),
        })
    }

    pub fn index(&self) -> &ComplexIndex {
        &self.index
    }

    pub fn n_entities(&self) -> usize {
        self.index.n_entities()
    }

    pub fn n_edges(&self) -> usize {
        self.index.n_edges()
    }

    /// Number of curl weights `K`.
    pub fn n_weights(&self) -> usize {
        self.curl_basis.ncols()
    }

    /// `G`, `|E| x N`.
    pub fn grad(&self) -> &DMatrix<f64> {
        &self.grad
    }

    /// `C`, `|T| x |E|`.
    pub fn curl(&self) -> &DMatrix<f64> {
        &self.curl
    }

    /// `C* = C^T`, `|E| x |T|`.
    pub fn curl_adjoint(&self) -> DMatrix<f64> {
        self.curl.transpose()
    }

    /// `H`, `|T| x K`, orthonormal columns.
    pub fn curl_basis(&self) -> &DMatrix<f64> {
        &self.curl_basis
    }

    /// `C^T H`, `|E| x K`.
    pub fn curl_flow_basis(&self) -> &DMatrix<f64> {
        &self.curl_flow_basis
    }

    /// `A`, an orthonormal basis of `ker(curl*)` (`|T| x (|T| - K)`), computed
    /// on first use. Only needed for diagnostics; cost grows as `|T|^3`.
    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        self.kernel_basis.get_or_init(|| {
            let t = self.index.n_triangles();
            let h = &self.curl_basis;
            let projector = DMatrix::identity(t, t) - h * h.transpose();
            let eig = SymmetricEigen::new(projector);
            let keep: Vec<usize> = (0..t).filter(|&c| eig.eigenvalues[c] > 0.5).collect();
            let mut a = DMatrix::zeros(t, keep.len());
            for (dst, &src) in keep.iter().enumerate() {
                a.set_column(dst, &eig.eigenvectors.column(src));
            }
            fix_column_signs(&mut a, 1e-12);
            a
        })
    }

    /// Triangle flow `Phi = H w`.
    pub fn triangle_flow(&self, w: &DVector<f64>) -> Result<TriangleFlow> {
        check_len("curl weights", self.n_weights(), w.len())?;
        Ok(TriangleFlow(&self.curl_basis * w))
    }

    /// Edge flow `curl*(H w) = C^T H w`.
    pub fn curl_flow(&self, w: &DVector<f64>) -> Result<EdgeFlow> {
        check_len("curl weights", self.n_weights(), w.len())?;
        Ok(EdgeFlow(&self.curl_flow_basis * w))
    }

    /// Edge flow `grad s = G s`.
    pub fn grad_flow(&self, s: &DVector<f64>) -> Result<EdgeFlow> {
        check_len("score vector", self.n_entities(), s.len())?;
        Ok(EdgeFlow(&self.grad * s))
    }

    /// Orthogonal projection of `m` onto `im(grad)` and `im(curl*)`.
    ///
    /// Both projections solve normal equations through a pseudoinverse:
    /// `G (G^T G)^+ G^T m` for the gradient part and `B (B^T B)^+ B^T m`
    /// with `B = C^T H` for the curl part.
    pub fn hodge_project(&self, m: &EdgeFlow) -> Result<HodgeProjection> {
        check_len("edge flow", self.n_edges(), m.len())?;
        let g = &self.grad;
        let gram = g.tr_mul(g);
        let gram_pinv = gram
            .pseudo_inverse(1e-10)
            .map_err(|e| Error::Construction(e.to_string()))?;
        let mut scores = gram_pinv * g.tr_mul(&m.0);
        let mean = scores.mean();
        scores.add_scalar_mut(-mean);
        let grad = g * &scores;

        let b = &self.curl_flow_basis;
        let curl = if b.ncols() == 0 {
            DVector::zeros(m.len())
        } else {
            let bgram_pinv = b
                .tr_mul(b)
                .pseudo_inverse(1e-10)
                .map_err(|e| Error::Construction(e.to_string()))?;
            b * (bgram_pinv * b.tr_mul(&m.0))
        };
        let residual = (&m.0 - &grad - &curl).norm();
        Ok(HodgeProjection {
            grad: EdgeFlow(grad),
            curl: EdgeFlow(curl),
            scores,
            residual,
        })
    }
}

/// Result of [`OperatorSet::hodge_project`].
#[derive(Debug, Clone)]
pub struct HodgeProjection {
    pub grad: EdgeFlow,
    pub curl: EdgeFlow,
    /// Centered scores with `grad s = grad` (least squares).
    pub scores: DVector<f64>,
    /// `||m - grad - curl||`, zero up to rounding on complete graphs.
    pub residual: f64,
}
