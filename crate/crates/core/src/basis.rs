//! Orthonormal Legendre chaos on `[-1, 1]^d` with the uniform density `2^-d`.
//!
//! Index sets are graded (total degree) and ordered so that the resolved set
//! `F = {|i| <= p_r}` is a prefix of the full set `F ∪ G = {|i| <= p_f}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Entries of the triple-product tensor with magnitude below this are dropped.
pub const DROP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    degrees: Vec<usize>,
}

impl MultiIndex {
    pub fn new(degrees: Vec<usize>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::InvalidArgument(
                "multi-index needs at least one dimension".into(),
            ));
        }
        Ok(Self { degrees })
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn total(&self) -> usize {
        self.degrees.iter().sum()
    }
}

/// Graded total-degree index set with a resolved prefix.
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    dim: usize,
    order: usize,
    resolved_order: usize,
    indices: Vec<MultiIndex>,
    n_resolved: usize,
    lookup: HashMap<Vec<usize>, usize>,
}

/// Builds the graded lexicographic set of all multi-indices in `d` dimensions
/// with total degree at most `p`; the first `binomial(p_r + d, d)` entries form `F`.
pub fn multi_index_set(dim: usize, order: usize, resolved_order: usize) -> Result<MultiIndexSet> {
    MultiIndexSet::new(dim, order, resolved_order)
}

impl MultiIndexSet {
    pub fn new(dim: usize, order: usize, resolved_order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if resolved_order > order {
            return Err(Error::InvalidArgument(format!(
                "resolved order {resolved_order} exceeds full order {order}"
            )));
        }
        let mut indices = Vec::with_capacity(binomial(order + dim, dim));
        for total in 0..=order {
            let mut current = vec![0; dim];
            compositions(total, 0, &mut current, &mut indices);
        }
        let n_resolved = indices.iter().take_while(|m| m.total() <= resolved_order).count();
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(pos, m)| (m.degrees.clone(), pos))
            .collect();
        Ok(Self { dim, order, resolved_order, indices, n_resolved, lookup })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn resolved_order(&self) -> usize {
        self.resolved_order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `|F|`; positions `0..n_resolved()` are resolved.
    pub fn n_resolved(&self) -> usize {
        self.n_resolved
    }

    pub fn n_unresolved(&self) -> usize {
        self.indices.len() - self.n_resolved
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, pos: usize) -> &MultiIndex {
        &self.indices[pos]
    }

    pub fn position(&self, degrees: &[usize]) -> Option<usize> {
        self.lookup.get(degrees).copied()
    }

    pub fn is_resolved(&self, pos: usize) -> bool {
        pos < self.n_resolved
    }

    /// Position of `p_r · e_dim`: degree `p_r` along `dim`, zero elsewhere.
    pub fn axis_index(&self, dim: usize, degree: usize) -> Option<usize> {
        if dim >= self.dim {
            return None;
        }
        let mut degrees = vec![0; self.dim];
        degrees[dim] = degree;
        self.position(&degrees)
    }
}

// Descending lexicographic enumeration of the compositions of `remaining`.
fn compositions(remaining: usize, slot: usize, current: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if slot + 1 == current.len() {
        current[slot] = remaining;
        out.push(MultiIndex { degrees: current.clone() });
        return;
    }
    for first in (0..=remaining).rev() {
        current[slot] = first;
        compositions(remaining - first, slot + 1, current, out);
    }
    current[slot] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Values of the orthonormal Legendre polynomials `sqrt(2n+1) P_n(x)` for `n = 0..=max_degree`.
pub fn legendre_table(max_degree: usize, x: f64) -> Vec<f64> {
    let mut values = Vec::with_capacity(max_degree + 1);
    let mut prev = 1.0;
    values.push(prev);
    if max_degree >= 1 {
        let mut cur = x;
        values.push(cur);
        for n in 1..max_degree {
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
            prev = cur;
            cur = next;
            values.push(cur);
        }
    }
    for (n, v) in values.iter_mut().enumerate() {
        *v *= (2.0 * n as f64 + 1.0).sqrt();
    }
    values
}

/// Evaluates `Φ_i(x) = Π_d sqrt(2 i_d + 1) P_{i_d}(x_d)`.
///
/// `point` must lie in `[-1, 1]^d`; nothing is clamped.
pub fn legendre_eval(index: &MultiIndex, point: &[f64]) -> f64 {
    debug_assert_eq!(index.dim(), point.len());
    index
        .degrees
        .iter()
        .zip(point)
        .map(|(&n, &x)| legendre_table(n, x)[n])
        .product()
}

/// Gauss-Legendre rule on `[-1, 1]`, tensorized over `dim` dimensions.
/// Weights are normalized to sum to one, absorbing the density 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(points: usize, dim: usize) -> Result<Self> {
        if points == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "quadrature needs at least one point and one dimension".into(),
            ));
        }
        let (nodes, weights) = gauss_legendre_1d(points);
        Ok(Self { dim, nodes, weights })
    }

    /// Smallest rule that integrates 1D polynomials of `degree` exactly.
    pub fn exact_for(degree: usize, dim: usize) -> Result<Self> {
        Self::gauss_legendre(degree / 2 + 1, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    /// Integrates `f` against the uniform probability density on `[-1, 1]^dim`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let n = self.nodes.len();
        let mut counter = vec![0usize; self.dim];
        let mut point = vec![self.nodes[0]; self.dim];
        let mut total = 0.0;
        loop {
            let w: f64 = counter.iter().map(|&c| self.weights[c]).product();
            total += w * f(&point);
            let mut d = 0;
            loop {
                if d == self.dim {
                    return total;
                }
                counter[d] += 1;
                if counter[d] < n {
                    point[d] = self.nodes[counter[d]];
                    break;
                }
                counter[d] = 0;
                point[d] = self.nodes[0];
                d += 1;
            }
        }
    }
}

fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                dp = legendre_with_derivative(n, x).1;
                break;
            }
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

type TensorCache = HashMap<(usize, usize), Arc<TripleProductTensor>>;

/// Sparse symmetric tensor `e_ijk = ∫ Φ_i Φ_j Φ_k dP` over a full index set.
#[derive(Debug, Clone)]
pub struct TripleProductTensor {
    dim: usize,
    order: usize,
    n: usize,
    canonical: Vec<([u32; 3], f64)>,
    row_offsets: Vec<usize>,
    row_entries: Vec<(u32, u32, f64)>,
}

/// Builds the triple-product tensor of `set` with the tensorized rule `rule`.
///
/// The rule must integrate 1D polynomials of degree `3 p_f` exactly.
pub fn triple_product_tensor(set: &MultiIndexSet, rule: &QuadratureRule) -> Result<TripleProductTensor> {
    TripleProductTensor::build(set, rule)
}

impl TripleProductTensor {
    pub fn build(set: &MultiIndexSet, rule: &QuadratureRule) -> Result<Self> {
        let p = set.order();
        let required = (3 * p + 2) / 2;
        if rule.points_per_dim() < required {
            return Err(Error::InsufficientQuadrature {
                points: rule.points_per_dim(),
                required,
            });
        }
        // 1D triple products; the tensor rule factorizes over dimensions.
        let table: Vec<Vec<f64>> = rule.nodes().iter().map(|&x| legendre_table(p, x)).collect();
        let q = p + 1;
        let mut e1 = vec![0.0; q * q * q];
        for a in 0..q {
            for b in a..q {
                for c in b..q {
                    let v: f64 = table
                        .iter()
                        .zip(rule.weights())
                        .map(|(vals, w)| w * vals[a] * vals[b] * vals[c])
                        .sum();
                    for (x, y, z) in permutations(a, b, c) {
                        e1[(x * q + y) * q + z] = v;
                    }
                }
            }
        }
        let n = set.len();
        let value = |i: usize, j: usize, k: usize| -> f64 {
            let (di, dj, dk) = (set.get(i).degrees(), set.get(j).degrees(), set.get(k).degrees());
            (0..set.dim()).map(|d| e1[(di[d] * q + dj[d]) * q + dk[d]]).product()
        };
        let mut canonical = Vec::new();
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let v = value(i, j, k);
                    if v.abs() > DROP_TOLERANCE {
                        canonical.push(([i as u32, j as u32, k as u32], v));
                    }
                }
            }
        }
        let mut rows: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); n];
        for &([i, j, k], v) in &canonical {
            let mut seen: Vec<(u32, u32, u32)> = Vec::with_capacity(6);
            for perm in permutations(i as usize, j as usize, k as usize) {
                let perm = (perm.0 as u32, perm.1 as u32, perm.2 as u32);
                if !seen.contains(&perm) {
                    seen.push(perm);
                    rows[perm.2 as usize].push((perm.0, perm.1, v));
                }
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut row_entries = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(a, b, _)| (a, b));
            row_entries.extend(row);
            row_offsets.push(row_entries.len());
        }
        Ok(Self { dim: set.dim(), order: p, n, canonical, row_offsets, row_entries })
    }

    /// Shared, lazily built tensor for `(dim, order)`; the graded ordering is
    /// fully determined by these two numbers.
    pub fn shared(dim: usize, order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<TensorCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().expect("tensor cache poisoned").get(&(dim, order)) {
            return Ok(Arc::clone(t));
        }
        let set = MultiIndexSet::new(dim, order, order)?;
        let rule = QuadratureRule::gauss_legendre((3 * order + 2) / 2, 1)?;
        let tensor = Arc::new(Self::build(&set, &rule)?);
        let mut guard = cache.lock().expect("tensor cache poisoned");
        Ok(Arc::clone(guard.entry((dim, order)).or_insert(tensor)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Stored entries with `i <= j <= k`.
    pub fn canonical_entries(&self) -> &[([u32; 3], f64)] {
        &self.canonical
    }

    /// Number of nonzero ordered triples.
    pub fn nnz(&self) -> usize {
        self.row_entries.len()
    }

    /// Symmetric lookup; absent entries are zero.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut key = [i as u32, j as u32, k as u32];
        key.sort_unstable();
        match self.canonical.binary_search_by(|(idx, _)| idx.cmp(&key)) {
            Ok(pos) => self.canonical[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Ordered pairs `(i, j, e_ijk)` for output mode `k`.
    pub fn row(&self, k: usize) -> &[(u32, u32, f64)] {
        &self.row_entries[self.row_offsets[k]..self.row_offsets[k + 1]]
    }

    /// `out_k += scale · Σ_ij e_ijk f_i g_j` for every `k` in `outputs`.
    pub fn accumulate_product(&self, f: &[f64], g: &[f64], scale: f64, out: &mut [f64], outputs: std::ops::Range<usize>) {
        for k in outputs {
            let mut acc = 0.0;
            for &(i, j, v) in self.row(k) {
                acc += v * f[i as usize] * g[j as usize];
            }
            out[k] += scale * acc;
        }
    }

    /// Galerkin projection of the product `f·g` onto the full basis.
    pub fn product(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.accumulate_product(f, g, 1.0, &mut out, 0..self.n);
        out
    }
}

fn permutations(a: usize, b: usize, c: usize) -> [(usize, usize, usize); 6] {
    [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Closed-form P_n via explicit monomial coefficients, independent of the recurrence.
    fn legendre_explicit(n: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..=n / 2 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let c = binomial(n, k) as f64 * binomial(2 * n - 2 * k, n) as f64;
            sum += sign * c * x.powi((n - 2 * k) as i32);
        }
        sum / 2f64.powi(n as i32) * (2.0 * n as f64 + 1.0).sqrt()
    }

    #[test]
    fn index_set_sizes() {
        let s = multi_index_set(1, 3, 1).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.n_resolved(), 2);
        assert_eq!(s.n_unresolved(), 2);
        let s = multi_index_set(2, 2, 2).unwrap();
        assert_eq!((s.len(), s.n_resolved(), s.n_unresolved()), (6, 6, 0));
        let s = multi_index_set(3, 7, 3).unwrap();
        assert_eq!((s.len(), s.n_resolved()), (120, 20));
    }

    #[test]
    fn index_set_is_graded_prefix_without_duplicates() {
        let s = multi_index_set(3, 5, 2).unwrap();
        let totals: Vec<usize> = s.indices().iter().map(MultiIndex::total).collect();
        assert!(totals.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.indices()[..s.n_resolved()].iter().all(|m| m.total() <= 2));
        assert!(s.indices()[s.n_resolved()..].iter().all(|m| m.total() > 2));
        let unique: std::collections::HashSet<_> = s.indices().iter().collect();
        assert_eq!(unique.len(), s.len());
        assert_eq!(s.get(1).degrees(), &[1, 0, 0]);
        assert_eq!(s.axis_index(2, 2).map(|p| s.get(p).degrees().to_vec()), Some(vec![0, 0, 2]));
    }

    #[test]
    fn rejects_resolved_above_full() {
        assert!(multi_index_set(2, 3, 4).is_err());
        assert!(multi_index_set(0, 3, 1).is_err());
    }

    #[test]
    fn legendre_values() {
        let x = |d: Vec<usize>| MultiIndex::new(d).unwrap();
        assert_eq!(legendre_eval(&x(vec![0]), &[0.37]), 1.0);
        assert_relative_eq!(legendre_eval(&x(vec![1]), &[0.5]), 0.866_025_403_784_438_6, epsilon = 1e-14);
        assert_relative_eq!(legendre_eval(&x(vec![2]), &[1.0]), 5f64.sqrt(), epsilon = 1e-14);
        for n in 0..12 {
            for &p in &[-1.0, -0.73, 0.0, 0.2, 0.91, 1.0] {
                assert_relative_eq!(legendre_table(n, p)[n], legendre_explicit(n, p), epsilon = 1e-11, max_relative = 1e-11);
            }
        }
        assert_relative_eq!(
            legendre_eval(&x(vec![1, 2]), &[0.5, 1.0]),
            3f64.sqrt() * 0.5 * 5f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn quadrature_weights_and_exactness() {
        for n in 1..20 {
            let rule = QuadratureRule::gauss_legendre(n, 1).unwrap();
            assert_relative_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for deg in 0..=rule.exact_degree() {
                let exact = if deg % 2 == 1 { 0.0 } else { 1.0 / (deg as f64 + 1.0) };
                let got = rule.integrate(|x| x[0].powi(deg as i32));
                assert!((got - exact).abs() < 1e-14, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn orthonormality() {
        let set = multi_index_set(2, 6, 6).unwrap();
        let rule = QuadratureRule::gauss_legendre(7, 2).unwrap();
        for a in set.indices() {
            for b in set.indices() {
                let ip = rule.integrate(|x| legendre_eval(a, x) * legendre_eval(b, x));
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_identities() {
        let set = multi_index_set(1, 7, 3).unwrap();
        let rule = QuadratureRule::gauss_legendre(11, 1).unwrap();
        let e = triple_product_tensor(&set, &rule).unwrap();
        assert_relative_eq!(e.get(0, 0, 0), 1.0, epsilon = 1e-14);
        for i in 0..set.len() {
            for j in 0..set.len() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((e.get(i, j, 0) - expected).abs() < 1e-12);
                for k in 0..set.len() {
                    if (i + j + k) % 2 == 1 {
                        assert_eq!(e.get(i, j, k), 0.0);
                    }
                    assert_eq!(e.get(i, j, k), e.get(k, i, j));
                }
            }
        }
        // high-order quadrature oracle for Φ1² Φ2
        let oracle = QuadratureRule::gauss_legendre(30, 1)
            .unwrap()
            .integrate(|x| legendre_table(2, x[0])[1].powi(2) * legendre_table(2, x[0])[2]);
        assert_relative_eq!(e.get(1, 1, 2), oracle, epsilon = 1e-14);
        assert_relative_eq!(e.get(1, 1, 2), 0.894_427_190_999_915_9, epsilon = 1e-14);
    }

    #[test]
    fn tensor_rejects_coarse_rule() {
        let set = multi_index_set(1, 7, 3).unwrap();
        let rule = QuadratureRule::gauss_legendre(10, 1).unwrap();
        assert!(matches!(
            triple_product_tensor(&set, &rule),
            Err(Error::InsufficientQuadrature { points: 10, required: 11 })
        ));
    }

    #[test]
    fn multi_dim_tensor_matches_tensor_quadrature() {
        let set = multi_index_set(2, 3, 1).unwrap();
        let rule = QuadratureRule::gauss_legendre(5, 2).unwrap();
        let e = TripleProductTensor::shared(2, 3).unwrap();
        for (i, a) in set.indices().iter().enumerate() {
            for (j, b) in set.indices().iter().enumerate() {
                for (k, c) in set.indices().iter().enumerate() {
                    let q = rule.integrate(|x| legendre_eval(a, x) * legendre_eval(b, x) * legendre_eval(c, x));
                    assert!((q - e.get(i, j, k)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn product_rows_cover_all_orderings() {
        let e = TripleProductTensor::shared(2, 4).unwrap();
        let n = e.len();
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if e.get(i, j, k) != 0.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, e.nnz());
    }
}
