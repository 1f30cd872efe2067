//! Operators between L-space instances: Lb-norms (the operator norm of
//! `1_L ⊗ φ` taken over all levels), coisometry verdicts, minimum-norm
//! preimages, lifting through strict coisometries, and right-inverse
//! search.
//!
//! The computational core is an LP encoder that expresses "level norm of
//! an affine matrix expression <= t" as linear constraints. This covers
//! every polyhedral level structure; Euclidean Bochner rows get a
//! closed-form least-norm treatment instead.

use nalgebra::{DMatrix, DVector};
use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Rel, VarId};
use crate::norm::{Enumeration, NormError, NormSpec};
use crate::space::{
    flatten_row_major, unflatten_row_major, LSpaceInstance, LevelStructure, SpaceError,
    WellComposed,
};
use crate::tensor::{NormEstimate, TensorElement, TensorError};

/// Feasibility slack accepted after the mandatory re-check of LP output.
pub const LP_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operators/instances do not share a paving")]
    PavingMismatch,
    #[error("tensor not in the range of the operator at the requested level")]
    NotInRange,
    #[error("level norm is not LP-encodable: {0}")]
    NotPolyhedral(String),
    #[error("operator failed the required coisometry verdict")]
    NotCoisometric(Box<CoisometryVerdict>),
    #[error("operator is not surjective")]
    NotSurjective,
    #[error("extreme-mode lifting requires lb-norm < 1, got {0}")]
    NotStrictContraction(f64),
    #[error("residue vector has no bounded preimage (column {0})")]
    ResidueNotLiftable(usize),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A linear map between L-space instances over a common paving,
/// carrying a cached Lb-norm estimate.
#[derive(Debug, Clone)]
pub struct LOperator {
    matrix: DMatrix<f64>,
    dom: LSpaceInstance,
    cod: LSpaceInstance,
    lb_cache: OnceCell<NormEstimate>,
}

impl PartialEq for LOperator {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix && self.dom == other.dom && self.cod == other.cod
    }
}

impl LOperator {
    /// `matrix` maps domain coordinates to codomain coordinates
    /// (`cod.e_dim() x dom.e_dim()`).
    pub fn new(
        matrix: DMatrix<f64>,
        dom: LSpaceInstance,
        cod: LSpaceInstance,
    ) -> Result<Self, OperatorError> {
        if matrix.nrows() != cod.e_dim() || matrix.ncols() != dom.e_dim() {
            return Err(OperatorError::ShapeMismatch(format!(
                "matrix is {}x{}, spaces want {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                cod.e_dim(),
                dom.e_dim()
            )));
        }
        if !dom.same_paving(&cod) {
            return Err(OperatorError::PavingMismatch);
        }
        Ok(LOperator {
            matrix,
            dom,
            cod,
            lb_cache: OnceCell::new(),
        })
    }

    pub fn identity(space: &LSpaceInstance) -> Self {
        LOperator {
            matrix: DMatrix::identity(space.e_dim(), space.e_dim()),
            dom: space.clone(),
            cod: space.clone(),
            lb_cache: OnceCell::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dom(&self) -> &LSpaceInstance {
        &self.dom
    }

    pub fn cod(&self) -> &LSpaceInstance {
        &self.cod
    }

    /// `(1 ⊗ φ) u` on a level-projected tensor: rows map through φ.
    pub fn apply_level(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        u * self.matrix.transpose()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LOperator) -> Result<LOperator, OperatorError> {
        if other.cod != self.dom {
            return Err(OperatorError::ShapeMismatch(
                "composition spaces do not match".into(),
            ));
        }
        LOperator::new(&self.matrix * &other.matrix, other.dom.clone(), self.cod.clone())
    }

    pub fn scale(&self, t: f64) -> LOperator {
        LOperator {
            matrix: &self.matrix * t,
            dom: self.dom.clone(),
            cod: self.cod.clone(),
            lb_cache: OnceCell::new(),
        }
    }

    /// The Lb-norm: `sup_ν || 1_{L^ν} ⊗ φ ||`, cached after the first
    /// computation.
    pub fn lb_norm(&self) -> Result<NormEstimate, OperatorError> {
        if let Some(e) = self.lb_cache.get() {
            return Ok(*e);
        }
        let est = lb_norm_uncached(&self.matrix, &self.dom, &self.cod)?;
        let _ = self.lb_cache.set(est);
        Ok(est)
    }
}

fn lb_norm_uncached(
    matrix: &DMatrix<f64>,
    dom: &LSpaceInstance,
    cod: &LSpaceInstance,
) -> Result<NormEstimate, OperatorError> {
    let mut parts = Vec::with_capacity(dom.paving().n_levels());
    for level in 0..dom.paving().n_levels() {
        parts.push(level_operator_norm(matrix, dom, cod, level)?);
    }
    NormEstimate::sup(parts).ok_or(OperatorError::Space(SpaceError::EmptyLevels))
}

/// Operator norm of `1_{L^ν} ⊗ φ` between the ν-level normed tensor
/// spaces. Exact by enumeration over the domain level ball when
/// available; `⊕_1` domains reduce exactly to the block maximum.
fn level_operator_norm(
    matrix: &DMatrix<f64>,
    dom: &LSpaceInstance,
    cod: &LSpaceInstance,
    level: usize,
) -> Result<NormEstimate, OperatorError> {
    if dom.e_dim() == 0 {
        return Ok(NormEstimate::exact(0.0));
    }
    let s = dom.paving().level_size(level);
    match dom.level_ball_extremes(level) {
        Enumeration::Points(pts) => {
            let mut lo = 0.0f64;
            let mut hi = 0.0f64;
            for flat in &pts {
                let u = unflatten_row_major(flat, s, dom.e_dim());
                let est = cod.level_norm(level, &(&u * matrix.transpose()))?;
                lo = lo.max(est.lower);
                hi = hi.max(est.upper);
            }
            Ok(NormEstimate::from_bounds(lo, hi))
        }
        Enumeration::Unavailable(_) => {
            if let LevelStructure::Sum { blocks } = dom.structure() {
                // Block maximum is exact: the sum ball is the convex
                // hull of the embedded block balls.
                let mut parts = Vec::with_capacity(blocks.len());
                let mut off = 0;
                for b in blocks {
                    let slice = matrix.columns(off, b.e_dim()).into_owned();
                    parts.push(level_operator_norm(&slice, b, cod, level)?);
                    off += b.e_dim();
                }
                return NormEstimate::sup(parts)
                    .ok_or(OperatorError::Space(SpaceError::EmptySum));
            }
            // Sampled lower bound; no finite upper bound in general.
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4c4f);
            let mut best = 0.0f64;
            for _ in 0..64 {
                let u = DMatrix::from_fn(s, dom.e_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let nrm = dom.level_norm(level, &u)?;
                if nrm.upper <= 0.0 {
                    continue;
                }
                let scaled = &u / nrm.upper;
                let val = cod.level_norm(level, &(&scaled * matrix.transpose()))?;
                best = best.max(val.lower);
            }
            Ok(NormEstimate::from_bounds(best, f64::INFINITY))
        }
    }
}

/// The coproduct map `⊕_i φ_i` of operators into a common codomain:
/// block tuple `x` goes to `Σ φ_i(x_i)`. Returns the operator together
/// with its `⊕_1` domain.
pub fn oplus_operators(parts: &[LOperator]) -> Result<LOperator, OperatorError> {
    if parts.is_empty() {
        return Err(OperatorError::Space(SpaceError::EmptySum));
    }
    let cod = parts[0].cod.clone();
    if parts.iter().any(|p| p.cod != cod) {
        return Err(OperatorError::ShapeMismatch(
            "coproduct parts have different codomains".into(),
        ));
    }
    let doms: Vec<LSpaceInstance> = parts.iter().map(|p| p.dom.clone()).collect();
    let (sum_dom, _) = crate::space::oplus1_sum(doms)?;
    let total: usize = parts.iter().map(|p| p.dom.e_dim()).sum();
    let mut matrix = DMatrix::zeros(cod.e_dim(), total);
    let mut off = 0;
    for p in parts {
        matrix
            .columns_mut(off, p.dom.e_dim())
            .copy_from(&p.matrix);
        off += p.dom.e_dim();
    }
    LOperator::new(matrix, sum_dom, cod)
}

// ---------------------------------------------------------------------
// LP encoding of level norms.

/// Linear combination of LP variables (no constant term).
type LinComb = Vec<(VarId, f64)>;

struct ExprMatrix {
    entries: Vec<LinComb>,
    rows: usize,
    cols: usize,
}

impl ExprMatrix {
    fn entry(&self, r: usize, c: usize) -> &LinComb {
        &self.entries[r * self.cols + c]
    }

    fn column_slice(&self, off: usize, width: usize) -> ExprMatrix {
        let mut entries = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            for c in 0..width {
                entries.push(self.entry(r, off + c).clone());
            }
        }
        ExprMatrix {
            entries,
            rows: self.rows,
            cols: width,
        }
    }

    fn row(&self, r: usize) -> Vec<LinComb> {
        (0..self.cols).map(|c| self.entry(r, c).clone()).collect()
    }

    fn flatten(&self) -> Vec<LinComb> {
        self.entries.clone()
    }
}

fn combine(terms: &[(f64, &LinComb)]) -> LinComb {
    let mut out: LinComb = Vec::new();
    for (w, comb) in terms {
        for &(v, c) in comb.iter() {
            out.push((v, w * c));
        }
    }
    out
}

/// Encode "level norm of `expr` at `level` is at most `bound`" into the
/// LP. Fails on non-polyhedral structures.
fn encode_level_norm_leq(
    instance: &LSpaceInstance,
    level: usize,
    expr: &ExprMatrix,
    bound: VarId,
    lp: &mut LinearProgram,
) -> Result<(), OperatorError> {
    match instance.structure() {
        LevelStructure::Min { z } => {
            let l_dual = instance.paving().level_spec(level).dualize();
            let fs = l_dual.extreme_points().points().ok_or_else(|| {
                OperatorError::NotPolyhedral("level dual ball not enumerable".into())
            })?;
            let gs = z.extreme_points().points().ok_or_else(|| {
                OperatorError::NotPolyhedral(format!("z = {z:?} ball not enumerable"))
            })?;
            let scales = instance.paving().level_row_scales(level);
            for f in &fs {
                for g in &gs {
                    let mut terms: LinComb = Vec::new();
                    for r in 0..expr.rows {
                        for c in 0..expr.cols {
                            let w = f[r] * scales[r] * g[c];
                            if w != 0.0 {
                                for &(v, cf) in expr.entry(r, c) {
                                    terms.push((v, w * cf));
                                }
                            }
                        }
                    }
                    let mut le = terms.clone();
                    le.push((bound, -1.0));
                    lp.constraint(le, Rel::Le, 0.0);
                    let mut ge: LinComb =
                        terms.into_iter().map(|(v, c)| (v, -c)).collect();
                    ge.push((bound, -1.0));
                    lp.constraint(ge, Rel::Le, 0.0);
                }
            }
            Ok(())
        }
        LevelStructure::Sum { blocks } => {
            let mut off = 0;
            let mut total: LinComb = vec![(bound, -1.0)];
            for b in blocks {
                let tb = lp.nonneg_var(0.0);
                let slice = expr.column_slice(off, b.e_dim());
                encode_level_norm_leq(b, level, &slice, tb, lp)?;
                total.push((tb, 1.0));
                off += b.e_dim();
            }
            lp.constraint(total, Rel::Le, 0.0);
            Ok(())
        }
        LevelStructure::Bochner { e_norm } => {
            let p = instance.paving().p();
            let set = instance.paving().level(level).to_vec();
            if p == 1.0 {
                let mut total: LinComb = vec![(bound, -1.0)];
                for (r, &atom) in set.iter().enumerate() {
                    let rb = lp.nonneg_var(0.0);
                    encode_vec_norm_leq(e_norm, &expr.row(r), rb, lp)?;
                    total.push((rb, instance.paving().weight(atom)));
                }
                lp.constraint(total, Rel::Le, 0.0);
                Ok(())
            } else if p.is_infinite() {
                for r in 0..expr.rows {
                    encode_vec_norm_leq(e_norm, &expr.row(r), bound, lp)?;
                }
                Ok(())
            } else {
                Err(OperatorError::NotPolyhedral(format!(
                    "bochner rows with p = {p} are not polyhedral"
                )))
            }
        }
        LevelStructure::Custom { level_norms } => {
            encode_vec_norm_leq(&level_norms[level], &expr.flatten(), bound, lp)
        }
    }
}

/// Encode "`||entries||_spec <= bound`" for a vector of linear
/// expressions.
fn encode_vec_norm_leq(
    spec: &NormSpec,
    entries: &[LinComb],
    bound: VarId,
    lp: &mut LinearProgram,
) -> Result<(), OperatorError> {
    match spec {
        NormSpec::Lp { p, .. } if *p == 1.0 => {
            let mut total: LinComb = vec![(bound, -1.0)];
            for e in entries {
                let a = lp.nonneg_var(0.0);
                let mut le = e.clone();
                le.push((a, -1.0));
                lp.constraint(le, Rel::Le, 0.0);
                let mut ge: LinComb = e.iter().map(|&(v, c)| (v, -c)).collect();
                ge.push((a, -1.0));
                lp.constraint(ge, Rel::Le, 0.0);
                total.push((a, 1.0));
            }
            lp.constraint(total, Rel::Le, 0.0);
            Ok(())
        }
        NormSpec::Lp { p, .. } if p.is_infinite() => {
            for e in entries {
                let mut le = e.clone();
                le.push((bound, -1.0));
                lp.constraint(le, Rel::Le, 0.0);
                let mut ge: LinComb = e.iter().map(|&(v, c)| (v, -c)).collect();
                ge.push((bound, -1.0));
                lp.constraint(ge, Rel::Le, 0.0);
            }
            Ok(())
        }
        NormSpec::PolytopeFacets { facets } => {
            for f in facets {
                let terms: Vec<(f64, &LinComb)> = entries
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (f[i], e))
                    .collect();
                let base = combine(&terms);
                let mut le = base.clone();
                le.push((bound, -1.0));
                lp.constraint(le, Rel::Le, 0.0);
                let mut ge: LinComb = base.into_iter().map(|(v, c)| (v, -c)).collect();
                ge.push((bound, -1.0));
                lp.constraint(ge, Rel::Le, 0.0);
            }
            Ok(())
        }
        NormSpec::PolytopeVertices { vertices } => {
            // Gauge epigraph: entries = Σ λ_k v_k with Σ |λ_k| <= bound.
            let lams: Vec<(VarId, VarId)> = vertices
                .iter()
                .map(|_| (lp.nonneg_var(0.0), lp.nonneg_var(0.0)))
                .collect();
            for (i, e) in entries.iter().enumerate() {
                let mut eq = e.clone();
                for (v, &(plus, minus)) in vertices.iter().zip(&lams) {
                    eq.push((plus, -v[i]));
                    eq.push((minus, v[i]));
                }
                lp.constraint(eq, Rel::Eq, 0.0);
            }
            let mut total: LinComb = vec![(bound, -1.0)];
            for &(plus, minus) in &lams {
                total.push((plus, 1.0));
                total.push((minus, 1.0));
            }
            lp.constraint(total, Rel::Le, 0.0);
            Ok(())
        }
        NormSpec::Dual { inner } => {
            let pts = inner.extreme_points().points().ok_or_else(|| {
                OperatorError::NotPolyhedral(format!(
                    "dual-norm encoding needs enumerable inner ball, inner = {inner:?}"
                ))
            })?;
            for p in &pts {
                let terms: Vec<(f64, &LinComb)> = entries
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (p[i], e))
                    .collect();
                let base = combine(&terms);
                let mut le = base.clone();
                le.push((bound, -1.0));
                lp.constraint(le, Rel::Le, 0.0);
                let mut ge: LinComb = base.into_iter().map(|(v, c)| (v, -c)).collect();
                ge.push((bound, -1.0));
                lp.constraint(ge, Rel::Le, 0.0);
            }
            Ok(())
        }
        NormSpec::L1Sum { blocks } => {
            let mut total: LinComb = vec![(bound, -1.0)];
            let mut off = 0;
            for b in blocks {
                let rb = lp.nonneg_var(0.0);
                encode_vec_norm_leq(b, &entries[off..off + b.dim()], rb, lp)?;
                total.push((rb, 1.0));
                off += b.dim();
            }
            lp.constraint(total, Rel::Le, 0.0);
            Ok(())
        }
        NormSpec::Lp { p, .. } => Err(OperatorError::NotPolyhedral(format!(
            "lp norm with p = {p} is not polyhedral"
        ))),
    }
}

// ---------------------------------------------------------------------
// Minimum-norm preimages.

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .expect("svd converges on finite matrices")
}

/// Minimize the domain level norm of `v` subject to `(1 ⊗ τ) v = u` at
/// the given level. Polyhedral level norms solve exactly as an LP;
/// Euclidean Bochner rows use the closed-form least-norm solution.
/// The returned point is re-projected onto the constraint so the
/// equality holds to machine precision, and its norm is re-evaluated.
pub fn min_norm_preimage(
    tau: &LOperator,
    level: usize,
    u: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, NormEstimate), OperatorError> {
    let s = tau.dom.paving().level_size(level);
    if u.nrows() != s || u.ncols() != tau.cod.e_dim() {
        return Err(OperatorError::ShapeMismatch(format!(
            "level tensor is {}x{}, expected {}x{}",
            u.nrows(),
            u.ncols(),
            s,
            tau.cod.e_dim()
        )));
    }
    let g = tau.dom.e_dim();
    let t_mat = &tau.matrix;
    let pinv = pseudo_inverse(t_mat);

    // Range precheck: every row of u must be reachable.
    let scale = 1.0 + u.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let least = u * pinv.transpose();
    let residual = &least * t_mat.transpose() - u;
    if residual.iter().any(|&r| r.abs() > 1e-7 * scale) {
        return Err(OperatorError::NotInRange);
    }
    if u.iter().all(|&x| x == 0.0) {
        let zero = DMatrix::zeros(s, g);
        return Ok((zero, NormEstimate::exact(0.0)));
    }

    // Euclidean Bochner rows: the least-norm solution minimizes each row
    // independently, for any row weights.
    if let LevelStructure::Bochner { e_norm } = tau.dom.structure() {
        if matches!(e_norm, NormSpec::Lp { p, .. } if *p == 2.0) {
            let est = tau.dom.level_norm(level, &least)?;
            return Ok((least, est));
        }
    }

    let mut lp = LinearProgram::new();
    let t = lp.nonneg_var(1.0);
    let vars: Vec<VarId> = (0..s * g).map(|_| lp.free_var(0.0)).collect();
    let expr = ExprMatrix {
        entries: vars.iter().map(|&v| vec![(v, 1.0)]).collect(),
        rows: s,
        cols: g,
    };
    // Feasibility: (v τ^T)_{r,c} = u_{r,c}.
    for r in 0..s {
        for c in 0..tau.cod.e_dim() {
            let terms: LinComb = (0..g)
                .map(|k| (vars[r * g + k], t_mat[(c, k)]))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            lp.constraint(terms, Rel::Eq, u[(r, c)]);
        }
    }
    encode_level_norm_leq(&tau.dom, level, &expr, t, &mut lp)?;
    let sol = lp.solve()?;
    let mut v = DMatrix::from_fn(s, g, |r, c| sol.value(vars[r * g + c]));

    // Mandatory feasibility re-check, then exact re-projection onto the
    // constraint (row-wise correction through the pseudo-inverse).
    let resid = &v * t_mat.transpose() - u;
    let worst = resid.iter().fold(0.0f64, |m, &r| m.max(r.abs()));
    if worst > LP_FEAS_TOL * scale {
        return Err(OperatorError::NotInRange);
    }
    v -= resid * pinv.transpose();
    let est = tau.dom.level_norm(level, &v)?;
    Ok((v, est))
}

// ---------------------------------------------------------------------
// Coisometry verdicts.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoisometryKind {
    Strict,
    Open,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoisometryMode {
    Strict,
    Open,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoisometryWitness {
    pub level: usize,
    /// Row-major flattened candidate tensor (unit level norm).
    pub tensor: Vec<f64>,
    /// `inf` when the candidate has no preimage at all.
    pub min_preimage_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoisometryVerdict {
    pub kind: CoisometryKind,
    /// True when every codomain level ball was enumerated and every
    /// preimage norm is exact.
    pub certified: bool,
    pub witnesses: Vec<CoisometryWitness>,
}

/// Decide (strict) coisometry by testing minimum-norm preimages of
/// extreme points of the codomain level balls; falls back to random
/// boundary samples (an uncertified verdict) when a ball is not
/// enumerable.
pub fn coisometry_check(
    tau: &LOperator,
    mode: CoisometryMode,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<CoisometryVerdict, OperatorError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut certified = true;
    let mut witnesses = Vec::new();
    let paving = tau.cod.paving().clone();
    for level in 0..paving.n_levels() {
        let s = paving.level_size(level);
        let candidates: Vec<DMatrix<f64>> = match tau.cod.level_ball_extremes(level) {
            Enumeration::Points(pts) => pts
                .iter()
                .map(|flat| unflatten_row_major(flat, s, tau.cod.e_dim()))
                .collect(),
            Enumeration::Unavailable(_) => {
                certified = false;
                (0..samples)
                    .map(|_| DMatrix::from_fn(s, tau.cod.e_dim(), |_, _| rng.gen_range(-1.0..1.0)))
                    .collect()
            }
        };
        for cand in candidates {
            let nrm = tau.cod.level_norm(level, &cand)?;
            if nrm.upper <= 1e-14 {
                continue;
            }
            if !nrm.exact {
                certified = false;
            }
            let unit = &cand / nrm.upper;
            match min_norm_preimage(tau, level, &unit) {
                Ok((_, est)) => {
                    if !est.exact {
                        certified = false;
                    }
                    // Both modes reduce to the same homogeneous test on
                    // unit candidates; the inf is attained here, so the
                    // open form uses the same threshold.
                    if est.upper > 1.0 + tol {
                        witnesses.push(CoisometryWitness {
                            level,
                            tensor: flatten_row_major(&unit).iter().copied().collect(),
                            min_preimage_norm: est.upper,
                        });
                    }
                }
                Err(OperatorError::NotInRange) => {
                    witnesses.push(CoisometryWitness {
                        level,
                        tensor: flatten_row_major(&unit).iter().copied().collect(),
                        min_preimage_norm: f64::INFINITY,
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    let kind = if witnesses.is_empty() {
        match mode {
            CoisometryMode::Strict => CoisometryKind::Strict,
            CoisometryMode::Open => CoisometryKind::Open,
        }
    } else {
        CoisometryKind::Neither
    };
    Ok(CoisometryVerdict {
        kind,
        certified,
        witnesses,
    })
}

// ---------------------------------------------------------------------
// Lifting.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMode {
    Metric,
    Extreme,
}

/// How the coisometry precondition of [`lift`] is established.
#[derive(Debug, Clone, Copy)]
pub enum CoisometryEvidence {
    /// Run [`coisometry_check`] with the given sampling budget.
    Verify { samples: usize, seed: u64 },
    /// The caller certifies the verdict by construction (for example a
    /// `⊕_1` block quotient).
    ByConstruction,
}

/// Lift `φ : P -> E` across `τ : G -> E`.
///
/// When `P` carries a well-composed block registry each block is pulled
/// back through the tensor-operator bijection and lifted by a
/// minimum-norm preimage at its level; otherwise a direct epigraph LP
/// minimizes the Lb-norm of the lifting. The returned operator
/// satisfies `τ ψ = φ` to machine precision and, in metric mode through
/// exact LPs, `lb(ψ) <= lb(φ) + ε`.
pub fn lift(
    tau: &LOperator,
    phi: &LOperator,
    mode: LiftMode,
    eps: f64,
    evidence: CoisometryEvidence,
) -> Result<LOperator, OperatorError> {
    if phi.cod != tau.cod {
        return Err(OperatorError::ShapeMismatch(
            "lift target spaces do not match".into(),
        ));
    }
    if let CoisometryEvidence::Verify { samples, seed } = evidence {
        let want = match mode {
            LiftMode::Metric => CoisometryMode::Strict,
            LiftMode::Extreme => CoisometryMode::Open,
        };
        let verdict = coisometry_check(tau, want, 1e-9, samples, seed)?;
        if verdict.kind == CoisometryKind::Neither {
            return Err(OperatorError::NotCoisometric(Box::new(verdict)));
        }
    }
    if mode == LiftMode::Extreme {
        let theta = phi.lb_norm()?;
        if !(theta.upper < 1.0) {
            return Err(OperatorError::NotStrictContraction(theta.upper));
        }
    }

    if let Some(wc) = WellComposed::from_instance(&phi.dom) {
        let g = tau.dom.e_dim();
        let mut psi = DMatrix::zeros(g, phi.dom.e_dim());
        for block in &wc.blocks {
            // u_b = φ_b applied to the distinguished element: the block
            // matrix transposed into the level slot.
            let phi_b = phi.matrix.columns(block.offset, block.dim).into_owned();
            let u_b = phi_b.transpose();
            let (v_b, _) = min_norm_preimage(tau, block.level_idx, &u_b)?;
            psi.columns_mut(block.offset, block.dim)
                .copy_from(&v_b.transpose());
        }
        return LOperator::new(psi, phi.dom.clone(), tau.dom.clone());
    }
    lift_direct(tau, phi)
}

/// Fallback for arbitrary domains: minimize the Lb-norm of ψ over the
/// affine space `τ ψ = φ` as one epigraph LP over all levels.
fn lift_direct(tau: &LOperator, phi: &LOperator) -> Result<LOperator, OperatorError> {
    let g = tau.dom.e_dim();
    let pd = phi.dom.e_dim();
    let mut lp = LinearProgram::new();
    let t = lp.nonneg_var(1.0);
    let vars: Vec<VarId> = (0..g * pd).map(|_| lp.free_var(0.0)).collect();
    // τ ψ = φ entrywise.
    for r in 0..phi.cod.e_dim() {
        for c in 0..pd {
            let terms: LinComb = (0..g)
                .map(|k| (vars[k * pd + c], tau.matrix[(r, k)]))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            lp.constraint(terms, Rel::Eq, phi.matrix[(r, c)]);
        }
    }
    let paving = phi.dom.paving().clone();
    for level in 0..paving.n_levels() {
        let s = paving.level_size(level);
        let pts = phi.dom.level_ball_extremes(level).points().ok_or_else(|| {
            OperatorError::NotPolyhedral("direct lifting needs enumerable domain balls".into())
        })?;
        for flat in &pts {
            let u = unflatten_row_major(flat, s, pd);
            // (1 ⊗ ψ) u has entries Σ_c u_{r,c} ψ_{k,c}.
            let mut entries = Vec::with_capacity(s * g);
            for r in 0..s {
                for k in 0..g {
                    let comb: LinComb = (0..pd)
                        .map(|c| (vars[k * pd + c], u[(r, c)]))
                        .filter(|&(_, w)| w != 0.0)
                        .collect();
                    entries.push(comb);
                }
            }
            let expr = ExprMatrix {
                entries,
                rows: s,
                cols: g,
            };
            encode_level_norm_leq(&tau.dom, level, &expr, t, &mut lp)?;
        }
    }
    let sol = lp.solve()?;
    let mut psi = DMatrix::from_fn(g, pd, |k, c| sol.value(vars[k * pd + c]));
    // Re-project onto τ ψ = φ.
    let pinv = pseudo_inverse(&tau.matrix);
    psi -= &pinv * (&tau.matrix * &psi - &phi.matrix);
    LOperator::new(psi, phi.dom.clone(), tau.dom.clone())
}

// ---------------------------------------------------------------------
// Lemma-style ε-lifting of full-base tensors.

/// Result of [`eps_lift_extension`].
#[derive(Debug, Clone)]
pub struct EpsLift {
    pub tensor: TensorElement,
    /// Ambient norm of the lifting.
    pub norm: NormEstimate,
    /// Ambient norm of the input.
    pub input_norm: NormEstimate,
    /// Cross-norm mass of the part of `u` outside the level.
    pub residue_mass: f64,
    /// Certified bound on the lifting norm: level part + residue cost.
    pub bound: f64,
    /// Whether `||v|| <= ||u|| + ε` was achieved.
    pub meets_eps: bool,
}

/// Two-step lifting of a tensor over the full base: the level part gets
/// a minimum-norm preimage, the residue is lifted vector by vector
/// through preimages of the codomain basis.
pub fn eps_lift_extension(
    tau: &LOperator,
    u: &TensorElement,
    level: usize,
    eps: f64,
) -> Result<EpsLift, OperatorError> {
    let paving = tau.dom.paving().clone();
    if u.l_dim() != paving.base_dim() || u.e_dim() != tau.cod.e_dim() {
        return Err(OperatorError::ShapeMismatch(format!(
            "tensor is {}x{}, expected {}x{}",
            u.l_dim(),
            u.e_dim(),
            paving.base_dim(),
            tau.cod.e_dim()
        )));
    }
    let u_level = paving.project(level, u);
    let (v0, v0_norm) = min_norm_preimage(tau, level, &u_level)?;
    let mut v = paving.embed(level, &v0).coeffs;

    // Residue rows live outside the level.
    let mut residue = u.coeffs.clone();
    for (r, &atom) in paving.level(level).iter().enumerate() {
        let _ = r;
        residue.set_row(atom, &DVector::zeros(u.e_dim()).transpose());
    }
    let cod_induced = tau.cod.induced_norm_spec();
    let dom_induced = tau.dom.induced_norm_spec();
    let mut residue_mass = 0.0;
    let mut residue_cost = 0.0;
    for j in 0..u.e_dim() {
        let xi = residue.column(j).into_owned();
        if xi.iter().all(|&x| x == 0.0) {
            continue;
        }
        let y = basis_preimage(tau, j, dom_induced.as_ref())
            .ok_or(OperatorError::ResidueNotLiftable(j))?;
        let xi_norm = paving.base_norm(&xi);
        let x_norm = match &cod_induced {
            Some(spec) => {
                let mut e = DVector::zeros(u.e_dim());
                e[j] = 1.0;
                spec.eval(&e)?
            }
            None => 1.0,
        };
        residue_mass += xi_norm * x_norm;
        let y_norm = match &dom_induced {
            Some(spec) => spec.eval(&y)?,
            None => y.norm(),
        };
        residue_cost += xi_norm * y_norm;
        v += xi * y.transpose();
    }
    let tensor = TensorElement::new(v);
    let norm = tau.dom.ambient_norm(&tensor)?;
    let input_norm = tau.cod.ambient_norm(u)?;
    let bound = v0_norm.upper + residue_cost;
    let meets_eps = norm.upper <= input_norm.upper + eps;
    Ok(EpsLift {
        tensor,
        norm,
        input_norm,
        residue_mass,
        bound,
        meets_eps,
    })
}

/// Minimum-induced-norm preimage of the j-th codomain basis vector.
fn basis_preimage(
    tau: &LOperator,
    j: usize,
    dom_induced: Option<&NormSpec>,
) -> Option<DVector<f64>> {
    let g = tau.dom.e_dim();
    let mut target = DVector::zeros(tau.cod.e_dim());
    target[j] = 1.0;
    let pinv = pseudo_inverse(&tau.matrix);
    let least = &pinv * &target;
    let resid = &tau.matrix * &least - &target;
    if resid.iter().any(|&r| r.abs() > 1e-7) {
        return None;
    }
    let Some(spec) = dom_induced else {
        return Some(least);
    };
    // LP when the induced norm is polyhedral, least-squares otherwise.
    let mut lp = LinearProgram::new();
    let t = lp.nonneg_var(1.0);
    let vars: Vec<VarId> = (0..g).map(|_| lp.free_var(0.0)).collect();
    for r in 0..tau.cod.e_dim() {
        let terms: LinComb = (0..g)
            .map(|k| (vars[k], tau.matrix[(r, k)]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        lp.constraint(terms, Rel::Eq, target[r]);
    }
    let entries: Vec<LinComb> = vars.iter().map(|&v| vec![(v, 1.0)]).collect();
    if encode_vec_norm_leq(spec, &entries, t, &mut lp).is_err() {
        return Some(least);
    }
    let sol = lp.solve().ok()?;
    let mut y = DVector::from_fn(g, |k, _| sol.value(vars[k]));
    let resid = &tau.matrix * &y - &target;
    y -= &pinv * resid;
    Some(y)
}

// ---------------------------------------------------------------------
// Right-inverse search.

#[derive(Debug)]
pub enum RightInverseOutcome {
    Found(LOperator),
    /// No right inverse with Lb-norm below `1 + ε`; the optimum is a
    /// certified lower bound over all right inverses.
    NotFound { best_lb_norm: f64 },
}

/// Find a right inverse `ρ` of `σ : G -> E` minimizing the Lb-norm, as
/// an epigraph LP over the affine space `σ ρ = 1`. Returns the witness
/// when the optimum is below `1 + ε`.
pub fn right_inverse_search(
    sigma: &LOperator,
    eps: f64,
) -> Result<RightInverseOutcome, OperatorError> {
    let e = sigma.cod.e_dim();
    let g = sigma.dom.e_dim();
    let rank = sigma.matrix.rank(1e-10);
    if rank < e {
        return Err(OperatorError::NotSurjective);
    }
    let mut lp = LinearProgram::new();
    let t = lp.nonneg_var(1.0);
    let vars: Vec<VarId> = (0..g * e).map(|_| lp.free_var(0.0)).collect();
    // σ ρ = identity.
    for r in 0..e {
        for c in 0..e {
            let terms: LinComb = (0..g)
                .map(|k| (vars[k * e + c], sigma.matrix[(r, k)]))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            lp.constraint(terms, Rel::Eq, if r == c { 1.0 } else { 0.0 });
        }
    }
    let paving = sigma.cod.paving().clone();
    for level in 0..paving.n_levels() {
        let s = paving.level_size(level);
        let pts = sigma.cod.level_ball_extremes(level).points().ok_or_else(|| {
            OperatorError::NotPolyhedral(
                "right-inverse search needs enumerable codomain balls".into(),
            )
        })?;
        for flat in &pts {
            let u = unflatten_row_major(flat, s, e);
            let mut entries = Vec::with_capacity(s * g);
            for r in 0..s {
                for k in 0..g {
                    let comb: LinComb = (0..e)
                        .map(|c| (vars[k * e + c], u[(r, c)]))
                        .filter(|&(_, w)| w != 0.0)
                        .collect();
                    entries.push(comb);
                }
            }
            let expr = ExprMatrix {
                entries,
                rows: s,
                cols: g,
            };
            encode_level_norm_leq(&sigma.dom, level, &expr, t, &mut lp)?;
        }
    }
    let sol = lp.solve()?;
    let best = sol.objective();
    if best >= 1.0 + eps {
        return Ok(RightInverseOutcome::NotFound { best_lb_norm: best });
    }
    let mut rho = DMatrix::from_fn(g, e, |k, c| sol.value(vars[k * e + c]));
    let pinv = pseudo_inverse(&sigma.matrix);
    rho += &pinv * (DMatrix::identity(e, e) - &sigma.matrix * &rho);
    Ok(RightInverseOutcome::Found(LOperator::new(
        rho,
        sigma.cod.clone(),
        sigma.dom.clone(),
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{make_min_space, make_well_composed, oplus1_sum, Paving};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn paving() -> Arc<Paving> {
        Arc::new(Paving::new(1.0, 4, vec![vec![0, 1], vec![2, 3], vec![0, 1, 2, 3]]).unwrap())
    }

    fn min_space(p: &Arc<Paving>, n: usize) -> LSpaceInstance {
        make_min_space(p.clone(), NormSpec::lp(1.0, n)).unwrap()
    }

    #[test]
    fn lb_norm_of_identity_and_scalars() {
        let p = paving();
        let e = min_space(&p, 2);
        let id = LOperator::identity(&e);
        let est = id.lb_norm().unwrap();
        assert!(est.exact);
        assert!((est.lower - 1.0).abs() < 1e-12);
        let half = id.scale(-0.5);
        let est = half.lb_norm().unwrap();
        assert!((est.lower - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lb_norm_of_coproduct_is_block_sup() {
        let p = paving();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let e = min_space(&p, 2);
            let a = min_space(&p, 1);
            let b = min_space(&p, 2);
            let phi_a = LOperator::new(
                DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0)),
                a.clone(),
                e.clone(),
            )
            .unwrap();
            let phi_b = LOperator::new(
                DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)),
                b.clone(),
                e.clone(),
            )
            .unwrap();
            let sum = oplus_operators(&[phi_a.clone(), phi_b.clone()]).unwrap();
            let combined = sum.lb_norm().unwrap();
            let na = phi_a.lb_norm().unwrap();
            let nb = phi_b.lb_norm().unwrap();
            let want = na.lower.max(nb.lower);
            assert!(combined.exact && na.exact && nb.exact);
            assert!(
                (combined.lower - want).abs() < 1e-9 * (1.0 + want),
                "{} vs {}",
                combined.lower,
                want
            );
        }
    }

    #[test]
    fn coproduct_zero_operators() {
        let p = paving();
        let e = min_space(&p, 2);
        let a = min_space(&p, 1);
        let z = LOperator::new(DMatrix::zeros(2, 1), a.clone(), e.clone()).unwrap();
        let sum = oplus_operators(&[z.clone(), z]).unwrap();
        assert_eq!(sum.lb_norm().unwrap().lower, 0.0);
    }

    #[test]
    fn post_composition_distributes_over_coproduct() {
        let p = paving();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let e = min_space(&p, 2);
        let f = min_space(&p, 2);
        let a = min_space(&p, 1);
        let b = min_space(&p, 1);
        let phi_a = LOperator::new(
            DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0)),
            a,
            e.clone(),
        )
        .unwrap();
        let phi_b = LOperator::new(
            DMatrix::from_fn(2, 1, |_, _| rng.gen_range(-1.0..1.0)),
            b,
            e.clone(),
        )
        .unwrap();
        let psi = LOperator::new(
            DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0)),
            e,
            f,
        )
        .unwrap();
        let lhs = psi.compose(&oplus_operators(&[phi_a.clone(), phi_b.clone()]).unwrap());
        let rhs = oplus_operators(&[
            psi.compose(&phi_a).unwrap(),
            psi.compose(&phi_b).unwrap(),
        ])
        .unwrap();
        let lhs = lhs.unwrap();
        let diff = (lhs.matrix() - rhs.matrix()).abs().max();
        assert!(diff <= 1e-10);
    }

    #[test]
    fn min_norm_preimage_of_sum_functional() {
        // τ : R^2 -> R, (x1, x2) -> x1 + x2, l1 row norms: the preimage
        // of 1 has minimum norm 1.
        let p = Arc::new(Paving::new(1.0, 2, vec![vec![0], vec![0, 1]]).unwrap());
        let g = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 2)).unwrap();
        let e = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 1)).unwrap();
        let tau = LOperator::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), g, e).unwrap();
        let u = DMatrix::from_row_slice(1, 1, &[1.0]);
        let (v, est) = min_norm_preimage(&tau, 0, &u).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-9);
        assert!(((v[(0, 0)] + v[(0, 1)]) - 1.0).abs() < 1e-12);
        // Zero input gives the zero preimage.
        let (v0, est0) = min_norm_preimage(&tau, 0, &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(est0.lower, 0.0);
        assert!(v0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn min_norm_preimage_through_isometry() {
        // τ invertible isometry (signed permutation): v = τ^{-1} u with
        // equal norm.
        let p = paving();
        let e = min_space(&p, 2);
        let perm = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let tau = LOperator::new(perm.clone(), e.clone(), e.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for level in 0..p.n_levels() {
            let s = p.level_size(level);
            let u = DMatrix::from_fn(s, 2, |_, _| rng.gen_range(-1.0..1.0));
            let (v, est) = min_norm_preimage(&tau, level, &u).unwrap();
            let want = e.level_norm(level, &u).unwrap();
            assert!((est.lower - want.lower).abs() < 1e-9);
            // v is unique here: v = u (τ^T)^{-1}.
            let direct = &u * perm.transpose().try_inverse().unwrap();
            assert!((v - direct).abs().max() < 1e-9);
        }
    }

    #[test]
    fn min_norm_preimage_euclidean_rows() {
        let p = Arc::new(Paving::new(1.0, 2, vec![vec![0, 1]]).unwrap());
        let g = LSpaceInstance::bochner(p.clone(), NormSpec::euclidean(3)).unwrap();
        let e = LSpaceInstance::bochner(p.clone(), NormSpec::euclidean(2)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
        let tau = LOperator::new(m.clone(), g, e).unwrap();
        let u = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let (v, est) = min_norm_preimage(&tau, 0, &u).unwrap();
        assert!((&v * m.transpose() - &u).abs().max() < 1e-10);
        // Row-wise least-norm is optimal for Euclidean rows.
        let pinv = pseudo_inverse(&m);
        let direct = &u * pinv.transpose();
        let dn: f64 = (0..2).map(|r| direct.row(r).norm()).sum();
        assert!((est.lower - dn).abs() < 1e-7 * (1.0 + dn));
    }

    #[test]
    fn min_norm_preimage_detects_infeasibility() {
        let p = Arc::new(Paving::new(1.0, 1, vec![vec![0]]).unwrap());
        let g = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 1)).unwrap();
        let e = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 2)).unwrap();
        // τ maps into the diagonal; (1, 0) is not reachable.
        let tau = LOperator::new(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]), g, e).unwrap();
        let u = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            min_norm_preimage(&tau, 0, &u),
            Err(OperatorError::NotInRange)
        ));
    }

    #[test]
    fn identity_is_a_certified_strict_coisometry() {
        let p = paving();
        let e = min_space(&p, 2);
        let id = LOperator::identity(&e);
        let verdict = coisometry_check(&id, CoisometryMode::Strict, 1e-9, 16, 7).unwrap();
        assert_eq!(verdict.kind, CoisometryKind::Strict);
        assert!(verdict.certified);
        assert!(verdict.witnesses.is_empty());
    }

    #[test]
    fn block_quotient_is_strict_and_contraction_is_not() {
        let p = paving();
        let e = min_space(&p, 2);
        let d = min_space(&p, 1);
        let (sum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        // Projection onto the first block of an ⊕_1-sum.
        let mut m = DMatrix::zeros(2, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let tau = LOperator::new(m, sum.clone(), e.clone()).unwrap();
        let verdict = coisometry_check(&tau, CoisometryMode::Strict, 1e-9, 16, 1).unwrap();
        assert_eq!(verdict.kind, CoisometryKind::Strict);
        assert!(verdict.certified);
        // Halving the quotient destroys strictness: preimages double.
        let half = tau.scale(0.5);
        let verdict = coisometry_check(&half, CoisometryMode::Strict, 1e-9, 16, 1).unwrap();
        assert_eq!(verdict.kind, CoisometryKind::Neither);
        assert!(!verdict.witnesses.is_empty());
        assert!(verdict.witnesses[0].min_preimage_norm > 1.9);
    }

    #[test]
    fn composed_strict_coisometries_stay_strict() {
        let p = paving();
        let e = min_space(&p, 1);
        let mid = min_space(&p, 2);
        let (g1, _) = oplus1_sum(vec![e.clone(), e.clone()]).unwrap();
        let (g2, _) = oplus1_sum(vec![mid.clone(), e.clone()]).unwrap();
        let tau1 = LOperator::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), g1, e.clone())
            .unwrap();
        // τ2 : (mid ⊕ e) -> (e ⊕ e) must hit the first block of g1.
        let m2 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let tau2 = LOperator::new(m2, g2, tau1.dom().clone()).unwrap();
        let v1 = coisometry_check(&tau1, CoisometryMode::Strict, 1e-9, 8, 2).unwrap();
        let v2 = coisometry_check(&tau2, CoisometryMode::Strict, 1e-9, 8, 2).unwrap();
        assert_eq!(v1.kind, CoisometryKind::Strict);
        assert_eq!(v2.kind, CoisometryKind::Strict);
        let comp = tau1.compose(&tau2).unwrap();
        let vc = coisometry_check(&comp, CoisometryMode::Strict, 1e-9, 8, 2).unwrap();
        assert_eq!(vc.kind, CoisometryKind::Strict);
        assert!(vc.certified);
    }

    #[test]
    fn lift_through_identity_returns_phi() {
        let p = paving();
        let e = min_space(&p, 2);
        let wc = make_well_composed(p.clone(), &[NormSpec::lp(1.0, 2)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let phi_m = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.4..0.4));
        let phi = LOperator::new(phi_m.clone(), wc.instance.clone(), e.clone()).unwrap();
        let id = LOperator::identity(&e);
        let psi = lift(
            &id,
            &phi,
            LiftMode::Metric,
            1e-9,
            CoisometryEvidence::Verify {
                samples: 8,
                seed: 1,
            },
        )
        .unwrap();
        assert!((psi.matrix() - &phi_m).abs().max() < 1e-12);
    }

    fn p2(p: &Arc<Paving>) -> Arc<Paving> {
        p.clone()
    }

    #[test]
    fn metric_lift_through_block_quotient() {
        let p = paving();
        let e = min_space(&p, 2);
        let d = min_space(&p, 2);
        let (gsum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        let mut m = DMatrix::zeros(2, 4);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let tau = LOperator::new(m, gsum, e.clone()).unwrap();
        let wc = make_well_composed(p.clone(), &[NormSpec::lp(1.0, 2), NormSpec::lp(1.0, 2)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let phi_m = DMatrix::from_fn(2, 4, |_, _| rng.gen_range(-0.3..0.3));
            let phi = LOperator::new(phi_m.clone(), wc.instance.clone(), e.clone()).unwrap();
            let psi = lift(
                &tau,
                &phi,
                LiftMode::Metric,
                1e-9,
                CoisometryEvidence::ByConstruction,
            )
            .unwrap();
            // τ ψ = φ to machine precision.
            let resid = (tau.matrix() * psi.matrix() - &phi_m).abs().max();
            assert!(resid < 1e-12, "residual {resid}");
            let lb_psi = psi.lb_norm().unwrap();
            let lb_phi = phi.lb_norm().unwrap();
            assert!(
                lb_psi.upper <= lb_phi.upper + 1e-9,
                "{} vs {}",
                lb_psi.upper,
                lb_phi.upper
            );
        }
    }

    #[test]
    fn extreme_lift_requires_strict_contraction() {
        let p = paving();
        let e = min_space(&p, 2);
        let wc = make_well_composed(p.clone(), &[NormSpec::lp(1.0, 2)]).unwrap();
        let phi = LOperator::new(DMatrix::identity(2, 2), wc.instance.clone(), e.clone())
            .unwrap();
        let id = LOperator::identity(&e);
        let err = lift(
            &id,
            &phi,
            LiftMode::Extreme,
            0.0,
            CoisometryEvidence::ByConstruction,
        );
        assert!(matches!(err, Err(OperatorError::NotStrictContraction(_))));
        // Scaled to θ = 0.9 the lift goes through and stays contractive.
        let phi9 = phi.scale(0.9);
        let psi = lift(
            &id,
            &phi9,
            LiftMode::Extreme,
            0.0,
            CoisometryEvidence::Verify {
                samples: 8,
                seed: 3,
            },
        )
        .unwrap();
        assert!(psi.lb_norm().unwrap().upper <= 1.0 + 1e-9);
    }

    #[test]
    fn direct_lift_covers_non_registered_domains() {
        // P with Bochner rows is not well composed; the epigraph LP path
        // still produces a metric lifting.
        let p = Arc::new(Paving::new(1.0, 2, vec![vec![0], vec![1], vec![0, 1]]).unwrap());
        let e = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 1)).unwrap();
        let dom = LSpaceInstance::bochner(p.clone(), NormSpec::lp(1.0, 2)).unwrap();
        let (gsum, _) = oplus1_sum(vec![e.clone(), e.clone()]).unwrap();
        let tau = LOperator::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            gsum,
            e.clone(),
        )
        .unwrap();
        let phi = LOperator::new(DMatrix::from_row_slice(1, 2, &[0.4, -0.2]), dom, e).unwrap();
        let psi = lift(
            &tau,
            &phi,
            LiftMode::Metric,
            1e-9,
            CoisometryEvidence::ByConstruction,
        )
        .unwrap();
        let resid = (tau.matrix() * psi.matrix() - phi.matrix()).abs().max();
        assert!(resid < 1e-12);
        let lb_psi = psi.lb_norm().unwrap();
        let lb_phi = phi.lb_norm().unwrap();
        assert!(lb_psi.upper <= lb_phi.upper + 1e-9);
    }

    #[test]
    fn eps_lift_reduces_to_preimage_on_level_support() {
        let p = paving();
        let e = min_space(&p, 2);
        let d = min_space(&p, 2);
        let (gsum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        let mut m = DMatrix::zeros(2, 4);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let tau = LOperator::new(m, gsum, e.clone()).unwrap();
        // u supported entirely in level 0 = {0, 1}.
        let mut coeffs = DMatrix::zeros(4, 2);
        coeffs[(0, 0)] = 0.5;
        coeffs[(1, 1)] = -0.25;
        let u = TensorElement::new(coeffs);
        let out = eps_lift_extension(&tau, &u, 0, 1e-9).unwrap();
        assert_eq!(out.residue_mass, 0.0);
        assert!(out.meets_eps);
        let lifted = &out.tensor.coeffs * tau.matrix().transpose();
        assert!((lifted - &u.coeffs).abs().max() < 1e-12);
    }

    #[test]
    fn eps_lift_with_planted_residue() {
        let p = paving();
        let e = min_space(&p, 2);
        let d = min_space(&p, 2);
        let (gsum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        let mut m = DMatrix::zeros(2, 4);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let tau = LOperator::new(m, gsum, e.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut coeffs = DMatrix::from_fn(4, 2, |i, _| {
            if i < 2 {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let delta = 1e-3;
        coeffs[(2, 0)] = delta;
        let u = TensorElement::new(coeffs);
        let out = eps_lift_extension(&tau, &u, 0, 1.0).unwrap();
        let lifted = &out.tensor.coeffs * tau.matrix().transpose();
        assert!((lifted - &u.coeffs).abs().max() < 1e-12);
        assert!(out.residue_mass > 0.0);
        assert!(out.norm.upper <= out.bound + 1e-9);
        // Residue cost is proportional to delta.
        assert!(out.bound <= out.input_norm.upper + 3.0 * delta);
    }

    #[test]
    fn right_inverse_of_block_projection_is_isometric_inclusion() {
        let p = paving();
        let e = min_space(&p, 2);
        let d = min_space(&p, 1);
        let (sum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        let mut m = DMatrix::zeros(2, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let sigma = LOperator::new(m, sum, e).unwrap();
        match right_inverse_search(&sigma, 1e-6).unwrap() {
            RightInverseOutcome::Found(rho) => {
                let est = rho.lb_norm().unwrap();
                assert!((est.lower - 1.0).abs() < 1e-9);
                let prod = sigma.matrix() * rho.matrix();
                assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-10);
            }
            RightInverseOutcome::NotFound { best_lb_norm } => {
                panic!("projection must have an isometric right inverse, got {best_lb_norm}")
            }
        }
        // Doubling σ halves the best right inverse norm.
        let two = sigma.scale(2.0);
        match right_inverse_search(&two, 1e-6).unwrap() {
            RightInverseOutcome::Found(rho) => {
                let est = rho.lb_norm().unwrap();
                assert!((est.lower - 0.5).abs() < 1e-9);
            }
            _ => panic!("scaled projection still has a right inverse"),
        }
    }

    #[test]
    fn planted_right_inverse_optimum() {
        // σ = [0.8, 0.8] on an ⊕_1 pair: any right inverse (a, b) has
        // a + b = 1.25, so the best Lb-norm is 1.25.
        let p = Arc::new(Paving::new(1.0, 1, vec![vec![0]]).unwrap());
        let e = min_space2(&p, 1);
        let (sum, _) = oplus1_sum(vec![e.clone(), e.clone()]).unwrap();
        let sigma = LOperator::new(
            DMatrix::from_row_slice(1, 2, &[0.8, 0.8]),
            sum,
            e,
        )
        .unwrap();
        match right_inverse_search(&sigma, 0.1).unwrap() {
            RightInverseOutcome::NotFound { best_lb_norm } => {
                assert!((best_lb_norm - 1.25).abs() < 1e-9);
            }
            _ => panic!("eps = 0.1 must fail at optimum 1.25"),
        }
        match right_inverse_search(&sigma, 0.3).unwrap() {
            RightInverseOutcome::Found(rho) => {
                assert!(rho.lb_norm().unwrap().upper <= 1.25 + 1e-9);
            }
            _ => panic!("eps = 0.3 admits the optimum 1.25"),
        }
    }

    fn min_space2(p: &Arc<Paving>, n: usize) -> LSpaceInstance {
        make_min_space(p.clone(), NormSpec::lp(1.0, n)).unwrap()
    }

    #[test]
    fn not_surjective_rejected() {
        let p = paving();
        let e = min_space(&p, 2);
        let sigma = LOperator::new(DMatrix::zeros(2, 2), e.clone(), e).unwrap();
        assert!(matches!(
            right_inverse_search(&sigma, 0.5),
            Err(OperatorError::NotSurjective)
        ));
    }

    #[test]
    fn retract_transfer_bound() {
        // If ψ0 lifts φσ and ρ is a right inverse of σ, then ψ0 ρ lifts
        // φ with lb <= lb(ψ0) lb(ρ).
        let p = paving();
        let e = min_space(&p, 2);
        let wc =
            make_well_composed(p.clone(), &[NormSpec::lp(1.0, 2), NormSpec::lp(1.0, 1)]).unwrap();
        let p0 = wc.instance.clone();
        // σ : P0 -> P (block projection), ρ its inclusion right inverse.
        let sub = make_well_composed(p.clone(), &[NormSpec::lp(1.0, 2)]).unwrap();
        let mut sm = DMatrix::zeros(2, 3);
        sm[(0, 0)] = 1.0;
        sm[(1, 1)] = 1.0;
        let sigma = LOperator::new(sm, p0.clone(), sub.instance.clone()).unwrap();
        let rho = match right_inverse_search(&sigma, 1e-6).unwrap() {
            RightInverseOutcome::Found(r) => r,
            _ => panic!("block projection has a right inverse"),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let phi = LOperator::new(
            DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.3..0.3)),
            sub.instance.clone(),
            e.clone(),
        )
        .unwrap();
        let phi_sigma = phi.compose(&sigma).unwrap();
        let d = min_space(&p, 2);
        let (gsum, _) = oplus1_sum(vec![e.clone(), d]).unwrap();
        let mut tm = DMatrix::zeros(2, 4);
        tm[(0, 0)] = 1.0;
        tm[(1, 1)] = 1.0;
        let tau = LOperator::new(tm, gsum, e).unwrap();
        let psi0 = lift(
            &tau,
            &phi_sigma,
            LiftMode::Metric,
            1e-9,
            CoisometryEvidence::ByConstruction,
        )
        .unwrap();
        let psi = psi0.compose(&rho).unwrap();
        let resid = (tau.matrix() * psi.matrix() - phi.matrix()).abs().max();
        assert!(resid < 1e-10);
        let bound = psi0.lb_norm().unwrap().upper * rho.lb_norm().unwrap().upper;
        assert!(psi.lb_norm().unwrap().lower <= bound + 1e-9);
    }
}
