//! Symbolic finite-dimensional norms: evaluation, duality, extreme-point
//! enumeration, linear maximization over unit balls, and Auerbach bases.
//!
//! Every representable ball is symmetric. Evaluation is exact for all
//! variants: `lp` and `l1sum` have closed forms, facet balls are a max of
//! inner products, vertex balls solve the gauge functional as a linear
//! program, and duals reduce structurally (the bidual of a
//! finite-dimensional norm is the norm itself).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, Rel};

/// Dimension cap for sign-vertex enumeration (2^20 ~ 1e6 points).
pub const SIGN_ENUM_CAP: usize = 20;
/// Cap on the size of product enumerations (dual balls of `l1sum`).
pub const PRODUCT_ENUM_CAP: usize = 1 << 20;
/// Sweep cap for the Auerbach coordinate ascent.
pub const AUERBACH_MAX_SWEEPS: usize = 200;

#[derive(Debug, Error)]
pub enum NormError {
    #[error("dimension mismatch: spec has dim {expected}, vector has dim {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unbounded gauge (origin not interior to the hull)")]
    UnboundedGauge,
    #[error("invalid norm spec: {0}")]
    InvalidSpec(String),
}

/// A finite-dimensional norm described symbolically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "raw::RawSpec", into = "raw::RawSpec")]
pub enum NormSpec {
    /// The `ℓ_p` norm on `R^dim`, `p ∈ [1, ∞]`.
    Lp { p: f64, dim: usize },
    /// Ball = symmetric convex hull of `±vertices`.
    PolytopeVertices { vertices: Vec<DVector<f64>> },
    /// Ball = `{x : |<f, x>| <= 1 for all facet functionals f}`.
    PolytopeFacets { facets: Vec<DVector<f64>> },
    /// Dual norm of the inner spec.
    Dual { inner: Box<NormSpec> },
    /// `ℓ_1`-sum of blocks: the norm of a concatenated vector is the sum
    /// of the block norms.
    L1Sum { blocks: Vec<NormSpec> },
}

/// Result of extreme-point enumeration.
#[derive(Debug, Clone)]
pub enum Enumeration {
    Points(Vec<DVector<f64>>),
    Unavailable(String),
}

impl Enumeration {
    pub fn points(self) -> Option<Vec<DVector<f64>>> {
        match self {
            Enumeration::Points(p) => Some(p),
            Enumeration::Unavailable(_) => None,
        }
    }

    pub fn is_available(&self) -> bool {
        matches!(self, Enumeration::Points(_))
    }
}

/// Conjugate exponent: `1/p + 1/q = 1` with the conventions
/// `q(1) = ∞`, `q(∞) = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p <= 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn lp_norm(p: f64, x: &DVector<f64>) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        x.norm()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Strict lexicographic comparison, used to break ties deterministically
/// when a linear functional has several maximizing vertices.
fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

impl NormSpec {
    pub fn lp(p: f64, dim: usize) -> Self {
        NormSpec::Lp { p, dim }
    }

    pub fn euclidean(dim: usize) -> Self {
        NormSpec::Lp { p: 2.0, dim }
    }

    pub fn dual_of(inner: NormSpec) -> Self {
        NormSpec::Dual {
            inner: Box::new(inner),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NormSpec::Lp { dim, .. } => *dim,
            NormSpec::PolytopeVertices { vertices } => {
                vertices.first().map(|v| v.len()).unwrap_or(0)
            }
            NormSpec::PolytopeFacets { facets } => facets.first().map(|v| v.len()).unwrap_or(0),
            NormSpec::Dual { inner } => inner.dim(),
            NormSpec::L1Sum { blocks } => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    /// Structural well-formedness: positive dimensions, `p >= 1`,
    /// vertex/facet families that span the space (so the ball is bounded
    /// with the origin interior).
    pub fn validate(&self) -> Result<(), NormError> {
        match self {
            NormSpec::Lp { p, dim } => {
                if *dim == 0 {
                    return Err(NormError::InvalidSpec("lp dim must be positive".into()));
                }
                if !(*p >= 1.0) {
                    return Err(NormError::InvalidSpec(format!("lp exponent {p} < 1")));
                }
                Ok(())
            }
            NormSpec::PolytopeVertices { vertices } => {
                spanning_family(vertices, "vertex")?;
                Ok(())
            }
            NormSpec::PolytopeFacets { facets } => {
                spanning_family(facets, "facet")?;
                Ok(())
            }
            NormSpec::Dual { inner } => inner.validate(),
            NormSpec::L1Sum { blocks } => {
                if blocks.is_empty() {
                    return Err(NormError::InvalidSpec("l1sum needs at least one block".into()));
                }
                blocks.iter().try_for_each(|b| b.validate())
            }
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), NormError> {
        if x.len() != self.dim() {
            return Err(NormError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluate the norm. Exact for every variant (up to LP arithmetic
    /// for vertex-polytope gauges).
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64, NormError> {
        self.check_dim(x)?;
        match self {
            NormSpec::Lp { p, .. } => Ok(lp_norm(*p, x)),
            NormSpec::PolytopeVertices { vertices } => gauge_lp(vertices, x),
            NormSpec::PolytopeFacets { facets } => {
                Ok(facets.iter().fold(0.0, |m, f| m.max(f.dot(x).abs())))
            }
            NormSpec::Dual { inner } => dual_ball_sup(inner, x),
            NormSpec::L1Sum { blocks } => {
                let mut total = 0.0;
                let mut off = 0;
                for b in blocks {
                    let piece = x.rows(off, b.dim()).into_owned();
                    total += b.eval(&piece)?;
                    off += b.dim();
                }
                Ok(total)
            }
        }
    }

    /// The dual norm, symbolically. `lp(p) ↦ lp(q)`, vertex and facet
    /// polytopes swap roles, a dual unwraps to its inner spec, and the
    /// `l1sum` dual stays a wrapper (its ball is a product, not one of
    /// the primitive shapes).
    pub fn dualize(&self) -> NormSpec {
        match self {
            NormSpec::Lp { p, dim } => NormSpec::Lp {
                p: conjugate_exponent(*p),
                dim: *dim,
            },
            NormSpec::PolytopeVertices { vertices } => NormSpec::PolytopeFacets {
                facets: vertices.clone(),
            },
            NormSpec::PolytopeFacets { facets } => NormSpec::PolytopeVertices {
                vertices: facets.clone(),
            },
            NormSpec::Dual { inner } => (**inner).clone(),
            NormSpec::L1Sum { .. } => NormSpec::dual_of(self.clone()),
        }
    }

    /// Extreme points of the unit ball, when enumerable.
    pub fn extreme_points(&self) -> Enumeration {
        match self {
            NormSpec::Lp { p, dim } => {
                if *p == 1.0 {
                    let mut pts = Vec::with_capacity(2 * dim);
                    for k in 0..*dim {
                        let mut e = DVector::zeros(*dim);
                        e[k] = 1.0;
                        pts.push(e.clone());
                        e[k] = -1.0;
                        pts.push(e);
                    }
                    Enumeration::Points(pts)
                } else if p.is_infinite() {
                    if *dim > SIGN_ENUM_CAP {
                        return Enumeration::Unavailable(format!(
                            "sign-vertex enumeration needs dim <= {SIGN_ENUM_CAP}, got {dim}"
                        ));
                    }
                    let n = *dim;
                    let mut pts = Vec::with_capacity(1 << n);
                    for mask in 0u64..(1u64 << n) {
                        let v = DVector::from_fn(n, |i, _| {
                            if mask >> i & 1 == 1 {
                                -1.0
                            } else {
                                1.0
                            }
                        });
                        pts.push(v);
                    }
                    Enumeration::Points(pts)
                } else {
                    Enumeration::Unavailable(format!(
                        "lp ball with p = {p} has no finite extreme set"
                    ))
                }
            }
            NormSpec::PolytopeVertices { vertices } => {
                let mut pts = Vec::with_capacity(2 * vertices.len());
                for v in vertices {
                    pts.push(v.clone());
                    pts.push(-v);
                }
                Enumeration::Points(pts)
            }
            NormSpec::PolytopeFacets { .. } => Enumeration::Unavailable(
                "vertex enumeration of a facet polytope is not supported".into(),
            ),
            NormSpec::Dual { inner } => dual_extreme_points(inner),
            NormSpec::L1Sum { blocks } => {
                let dim = self.dim();
                let mut pts = Vec::new();
                let mut off = 0;
                for b in blocks {
                    match b.extreme_points() {
                        Enumeration::Points(bp) => {
                            for p in bp {
                                let mut v = DVector::zeros(dim);
                                v.rows_mut(off, b.dim()).copy_from(&p);
                                pts.push(v);
                            }
                        }
                        Enumeration::Unavailable(r) => return Enumeration::Unavailable(r),
                    }
                    off += b.dim();
                }
                Enumeration::Points(pts)
            }
        }
    }

    /// A point of the unit ball maximizing `<c, x>`, together with the
    /// attained value (which equals the dual norm of `c`). Ties between
    /// maximizing vertices go to the lexicographically smallest one.
    pub fn support_point(&self, c: &DVector<f64>) -> Result<(DVector<f64>, f64), NormError> {
        self.check_dim(c)?;
        match self {
            NormSpec::Lp { p, dim } => Ok(lp_support(*p, *dim, c)),
            NormSpec::PolytopeVertices { vertices } => {
                let mut best: Option<(DVector<f64>, f64)> = None;
                for v in vertices {
                    for cand in [v.clone(), -v] {
                        let val = c.dot(&cand);
                        match &best {
                            None => best = Some((cand, val)),
                            Some((bx, bv)) => {
                                if val > bv + 1e-12 || (val > bv - 1e-12 && lex_less(&cand, bx)) {
                                    best = Some((cand, val));
                                }
                            }
                        }
                    }
                }
                best.ok_or_else(|| NormError::InvalidSpec("empty vertex list".into()))
            }
            NormSpec::PolytopeFacets { facets } => facet_ball_support(facets, c),
            NormSpec::Dual { inner } => dual_ball_support(inner, c),
            NormSpec::L1Sum { blocks } => {
                // Ball = convex hull of the embedded block balls, so the
                // maximum sits inside the best single block.
                let mut best_val = f64::NEG_INFINITY;
                let mut best: Option<(usize, usize, DVector<f64>)> = None;
                let mut off = 0;
                for (i, b) in blocks.iter().enumerate() {
                    let cb = c.rows(off, b.dim()).into_owned();
                    let (x, val) = b.support_point(&cb)?;
                    if val > best_val + 1e-15 {
                        best_val = val;
                        best = Some((i, off, x));
                    }
                    off += b.dim();
                }
                let (_, off, x) =
                    best.ok_or_else(|| NormError::InvalidSpec("empty l1sum".into()))?;
                let mut full = DVector::zeros(self.dim());
                full.rows_mut(off, x.len()).copy_from(&x);
                Ok((full, best_val))
            }
        }
    }

    /// Constants `(lo, hi)` with `lo ||x||_2 <= ||x|| <= hi ||x||_2`,
    /// where either side may be unknown for polytope specs.
    pub fn l2_bounds(&self) -> (Option<f64>, Option<f64>) {
        match self {
            NormSpec::Lp { p, dim } => {
                let n = *dim as f64;
                let gap = n.powf((1.0 / p.max(1.0)) - 0.5);
                if *p <= 2.0 {
                    (Some(1.0), Some(gap))
                } else {
                    // 1/p - 1/2 < 0 here, so gap <= 1.
                    let gap = if p.is_infinite() {
                        n.powf(-0.5)
                    } else {
                        gap
                    };
                    (Some(gap), Some(1.0))
                }
            }
            NormSpec::PolytopeVertices { vertices } => {
                let r = vertices.iter().fold(0.0f64, |m, v| m.max(v.norm()));
                (if r > 0.0 { Some(1.0 / r) } else { None }, None)
            }
            NormSpec::PolytopeFacets { facets } => {
                let r = facets.iter().fold(0.0f64, |m, f| m.max(f.norm()));
                (None, if r > 0.0 { Some(r) } else { None })
            }
            NormSpec::Dual { inner } => {
                let (lo, hi) = inner.l2_bounds();
                (hi.map(|h| 1.0 / h), lo.map(|l| 1.0 / l))
            }
            NormSpec::L1Sum { blocks } => {
                let mut lo = Some(f64::INFINITY);
                let mut hi_sq = Some(0.0f64);
                for b in blocks {
                    let (bl, bh) = b.l2_bounds();
                    lo = match (lo, bl) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        _ => None,
                    };
                    hi_sq = match (hi_sq, bh) {
                        (Some(a), Some(b)) => Some(a + b * b),
                        _ => None,
                    };
                }
                (lo, hi_sq.map(f64::sqrt))
            }
        }
    }
}

fn spanning_family(family: &[DVector<f64>], what: &str) -> Result<(), NormError> {
    if family.is_empty() {
        return Err(NormError::InvalidSpec(format!("empty {what} list")));
    }
    let dim = family[0].len();
    if dim == 0 || family.iter().any(|v| v.len() != dim) {
        return Err(NormError::InvalidSpec(format!(
            "{what} vectors must share a positive dimension"
        )));
    }
    let mat = nalgebra::DMatrix::from_columns(family);
    if mat.rank(1e-10) < dim {
        return Err(NormError::InvalidSpec(format!(
            "{what} family does not span the space (ball unbounded or origin not interior)"
        )));
    }
    Ok(())
}

/// Gauge of the symmetric hull of `vertices`: the optimum of
/// `min Σ|λ_i|` subject to `Σ λ_i v_i = x`.
fn gauge_lp(vertices: &[DVector<f64>], x: &DVector<f64>) -> Result<f64, NormError> {
    if x.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let n = x.len();
    let mut lp = LinearProgram::new();
    let lams: Vec<_> = vertices
        .iter()
        .map(|_| (lp.nonneg_var(1.0), lp.nonneg_var(1.0)))
        .collect();
    for row in 0..n {
        let terms = vertices
            .iter()
            .zip(&lams)
            .flat_map(|(v, &(p, m))| [(p, v[row]), (m, -v[row])])
            .collect();
        lp.constraint(terms, Rel::Eq, x[row]);
    }
    match lp.solve() {
        Ok(sol) => Ok(sol.objective()),
        Err(crate::lp::LpError::Infeasible(_)) => Err(NormError::UnboundedGauge),
        Err(e) => Err(NormError::InvalidSpec(format!("gauge LP failed: {e}"))),
    }
}

/// `sup { <x, b> : b in the unit ball of `inner` }`, the dual norm.
fn dual_ball_sup(inner: &NormSpec, x: &DVector<f64>) -> Result<f64, NormError> {
    match inner {
        NormSpec::Lp { p, .. } => Ok(lp_norm(conjugate_exponent(*p), x)),
        NormSpec::PolytopeVertices { vertices } => {
            Ok(vertices.iter().fold(0.0, |m, v| m.max(v.dot(x).abs())))
        }
        NormSpec::PolytopeFacets { facets } => gauge_lp(facets, x),
        NormSpec::Dual { inner } => inner.eval(x),
        NormSpec::L1Sum { blocks } => {
            // Dual norm of an l1-sum is the max of the block dual norms.
            let mut best = 0.0f64;
            let mut off = 0;
            for b in blocks {
                let piece = x.rows(off, b.dim()).into_owned();
                best = best.max(dual_ball_sup(b, &piece)?);
                off += b.dim();
            }
            Ok(best)
        }
    }
}

fn dual_extreme_points(inner: &NormSpec) -> Enumeration {
    match inner {
        NormSpec::Lp { p, dim } => NormSpec::Lp {
            p: conjugate_exponent(*p),
            dim: *dim,
        }
        .extreme_points(),
        NormSpec::PolytopeFacets { facets } => NormSpec::PolytopeVertices {
            vertices: facets.clone(),
        }
        .extreme_points(),
        NormSpec::PolytopeVertices { .. } => Enumeration::Unavailable(
            "dual of a vertex polytope needs facet-ball vertex enumeration".into(),
        ),
        NormSpec::Dual { inner } => inner.extreme_points(),
        NormSpec::L1Sum { blocks } => {
            // The dual ball of an l1-sum is the product of the block dual
            // balls; extreme points are all combinations.
            let mut block_pts = Vec::with_capacity(blocks.len());
            let mut count: usize = 1;
            for b in blocks {
                match dual_extreme_points(b) {
                    Enumeration::Points(p) => {
                        count = count.saturating_mul(p.len());
                        block_pts.push(p);
                    }
                    Enumeration::Unavailable(r) => return Enumeration::Unavailable(r),
                }
            }
            if count > PRODUCT_ENUM_CAP {
                return Enumeration::Unavailable(format!(
                    "product enumeration of {count} points exceeds cap {PRODUCT_ENUM_CAP}"
                ));
            }
            let dims: Vec<usize> = blocks.iter().map(|b| b.dim()).collect();
            let total: usize = dims.iter().sum();
            let mut pts = Vec::with_capacity(count);
            let mut indices = vec![0usize; blocks.len()];
            loop {
                let mut v = DVector::zeros(total);
                let mut off = 0;
                for (bi, pts_b) in block_pts.iter().enumerate() {
                    v.rows_mut(off, dims[bi]).copy_from(&pts_b[indices[bi]]);
                    off += dims[bi];
                }
                pts.push(v);
                let mut carry = blocks.len();
                for bi in (0..blocks.len()).rev() {
                    indices[bi] += 1;
                    if indices[bi] < block_pts[bi].len() {
                        carry = bi;
                        break;
                    }
                    indices[bi] = 0;
                }
                if carry == blocks.len() {
                    break;
                }
            }
            Enumeration::Points(pts)
        }
    }
}

fn lp_support(p: f64, dim: usize, c: &DVector<f64>) -> (DVector<f64>, f64) {
    if c.iter().all(|&v| v == 0.0) {
        return (DVector::zeros(dim), 0.0);
    }
    if p == 1.0 {
        // Best signed coordinate vector; lexicographic tie-break means
        // preferring -e_k for the largest tied index... scanning in a
        // fixed order keeps it deterministic.
        let mut best_k = 0usize;
        let mut best = c[0].abs();
        for k in 1..dim {
            if c[k].abs() > best + 1e-15 {
                best = c[k].abs();
                best_k = k;
            }
        }
        let mut x = DVector::zeros(dim);
        x[best_k] = if c[best_k] >= 0.0 { 1.0 } else { -1.0 };
        (x, best)
    } else if p.is_infinite() {
        // Sign vector; zeros go to -1, the lexicographically smaller choice.
        let x = DVector::from_fn(dim, |i, _| if c[i] > 0.0 { 1.0 } else { -1.0 });
        let val = c.iter().map(|v| v.abs()).sum();
        (x, val)
    } else if p == 2.0 {
        let n = c.norm();
        (c / n, n)
    } else {
        let q = conjugate_exponent(p);
        let nq = lp_norm(q, c);
        let x = DVector::from_fn(dim, |i, _| {
            c[i].signum() * (c[i].abs() / nq).powf(q - 1.0)
        });
        (x, nq)
    }
}

fn facet_ball_support(
    facets: &[DVector<f64>],
    c: &DVector<f64>,
) -> Result<(DVector<f64>, f64), NormError> {
    let n = c.len();
    let mut lp = LinearProgram::new();
    let xs: Vec<_> = (0..n).map(|i| lp.free_var(-c[i])).collect();
    for f in facets {
        let terms: Vec<_> = (0..n).map(|i| (xs[i], f[i])).collect();
        lp.constraint(terms.clone(), Rel::Le, 1.0);
        lp.constraint(terms, Rel::Ge, -1.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| NormError::InvalidSpec(format!("support LP failed: {e}")))?;
    let x = DVector::from_fn(n, |i, _| sol.value(xs[i]));
    Ok((x, -sol.objective()))
}

/// Maximize `<c, b>` over the unit ball of the dual of `inner`.
fn dual_ball_support(
    inner: &NormSpec,
    c: &DVector<f64>,
) -> Result<(DVector<f64>, f64), NormError> {
    match inner {
        NormSpec::Lp { p, dim } => Ok(lp_support(conjugate_exponent(*p), *dim, c)),
        NormSpec::PolytopeFacets { facets } => NormSpec::PolytopeVertices {
            vertices: facets.clone(),
        }
        .support_point(c),
        NormSpec::PolytopeVertices { vertices } => NormSpec::PolytopeFacets {
            facets: vertices.clone(),
        }
        .support_point(c),
        NormSpec::Dual { inner } => inner.support_point(c),
        NormSpec::L1Sum { blocks } => {
            // Product ball: optimize every block independently.
            let mut full = DVector::zeros(c.len());
            let mut val = 0.0;
            let mut off = 0;
            for b in blocks {
                let cb = c.rows(off, b.dim()).into_owned();
                let (x, v) = dual_ball_support(b, &cb)?;
                full.rows_mut(off, b.dim()).copy_from(&x);
                val += v;
                off += b.dim();
            }
            Ok((full, val))
        }
    }
}

/// A normalized basis with normalized biorthogonal dual functionals.
#[derive(Debug, Clone)]
pub struct AuerbachBasis {
    pub primal: Vec<DVector<f64>>,
    pub dual: Vec<DVector<f64>>,
    /// False when the determinant ascent hit the sweep cap; the
    /// biorthogonality certificate still holds for the best iterate.
    pub converged: bool,
}

impl AuerbachBasis {
    pub fn dim(&self) -> usize {
        self.primal.len()
    }
}

/// Coordinate-ascent maximization of `|det(e_1, ..., e_n)|` over unit
/// vectors: one column at a time is replaced by the unit-ball maximizer
/// of the determinant (a support-point computation). The dual basis is
/// read off the inverse matrix.
pub fn auerbach_basis(spec: &NormSpec) -> Result<AuerbachBasis, NormError> {
    spec.validate()?;
    let n = spec.dim();
    if n > 50 {
        return Err(NormError::InvalidSpec(format!(
            "auerbach ascent capped at dim 50, got {n}"
        )));
    }
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let nk = spec.eval(&e)?;
        if nk <= 0.0 {
            return Err(NormError::InvalidSpec(
                "degenerate spec: basis vector has zero norm".into(),
            ));
        }
        m.set_column(k, &(e / nk));
    }

    let mut det = m.determinant().abs();
    let mut converged = false;
    for _ in 0..AUERBACH_MAX_SWEEPS {
        let det_before = det;
        for k in 0..n {
            let inv = m
                .clone()
                .try_inverse()
                .ok_or_else(|| NormError::InvalidSpec("singular iterate in ascent".into()))?;
            let signed_det = m.determinant();
            // Gradient of the determinant in column k.
            let grad = DVector::from_fn(n, |i, _| signed_det * inv[(k, i)]);
            let (x, val) = spec.support_point(&grad)?;
            if val > det + 1e-15 {
                m.set_column(k, &x);
                det = val;
            }
        }
        if det <= det_before * (1.0 + 1e-12) {
            converged = true;
            break;
        }
    }

    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| NormError::InvalidSpec("ascent produced a singular basis".into()))?;
    let primal = (0..n).map(|k| m.column(k).into_owned()).collect();
    let dual = (0..n).map(|k| inv.row(k).transpose()).collect();
    Ok(AuerbachBasis {
        primal,
        dual,
        converged,
    })
}

mod raw {
    //! JSON mirror of [`NormSpec`]: tagged by `kind`, numbers accepted as
    //! decimal floats or exact-rational strings `"a/b"` ("inf" for ∞).
    use super::*;
    use crate::jsonx::{emit_vecs, parse_vecs, RawScalar};

    #[derive(Serialize, Deserialize, Clone)]
    #[serde(tag = "kind")]
    pub enum RawSpec {
        #[serde(rename = "lp")]
        Lp { p: RawScalar, dim: usize },
        #[serde(rename = "poly_v")]
        PolyV { vertices: Vec<Vec<RawScalar>> },
        #[serde(rename = "poly_f")]
        PolyF { facets: Vec<Vec<RawScalar>> },
        #[serde(rename = "dual")]
        Dual { inner: Box<RawSpec> },
        #[serde(rename = "l1sum")]
        L1Sum { blocks: Vec<RawSpec> },
    }

    impl TryFrom<RawSpec> for NormSpec {
        type Error = String;
        fn try_from(raw: RawSpec) -> Result<Self, String> {
            Ok(match raw {
                RawSpec::Lp { p, dim } => NormSpec::Lp { p: p.parse()?, dim },
                RawSpec::PolyV { vertices } => NormSpec::PolytopeVertices {
                    vertices: parse_vecs(vertices)?,
                },
                RawSpec::PolyF { facets } => NormSpec::PolytopeFacets {
                    facets: parse_vecs(facets)?,
                },
                RawSpec::Dual { inner } => NormSpec::Dual {
                    inner: Box::new(NormSpec::try_from(*inner)?),
                },
                RawSpec::L1Sum { blocks } => NormSpec::L1Sum {
                    blocks: blocks
                        .into_iter()
                        .map(NormSpec::try_from)
                        .collect::<Result<_, _>>()?,
                },
            })
        }
    }

    impl From<NormSpec> for RawSpec {
        fn from(spec: NormSpec) -> Self {
            match spec {
                NormSpec::Lp { p, dim } => RawSpec::Lp {
                    p: RawScalar::from_f64(p),
                    dim,
                },
                NormSpec::PolytopeVertices { vertices } => RawSpec::PolyV {
                    vertices: emit_vecs(&vertices),
                },
                NormSpec::PolytopeFacets { facets } => RawSpec::PolyF {
                    facets: emit_vecs(&facets),
                },
                NormSpec::Dual { inner } => RawSpec::Dual {
                    inner: Box::new(RawSpec::from(*inner)),
                },
                NormSpec::L1Sum { blocks } => RawSpec::L1Sum {
                    blocks: blocks.into_iter().map(RawSpec::from).collect(),
                },
            }
        }
    }
}
