//! Pavings of the base space `ℓ_p^N` by coordinate subspaces, and
//! L-space instances: a linear space `E` together with a norm on each
//! `L^ν ⊗ E`, represented structurally (minimal/injective, `⊕_1`-sums,
//! Bochner rows, or explicit per-level specs for adversarial tests).
//!
//! The ambient norm of a tensor over the full base is the supremum of
//! the level norms of its projections, the discrete form of extending a
//! norm from simple functions to the whole space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonx::RawScalar;
use crate::norm::{Enumeration, NormError, NormSpec};
use crate::tensor::{injective_norm, operator_norm, NormEstimate, TensorElement, TensorError};

/// Cap on level-ball extreme-point enumerations.
pub const LEVEL_ENUM_CAP: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("paving has no levels")]
    EmptyLevels,
    #[error("level index {0} out of range")]
    LevelOutOfRange(usize),
    #[error("instances do not share a paving")]
    PavingMismatch,
    #[error("sum of zero spaces is not allowed here")]
    EmptySum,
    #[error("summand not realizable as a level: {0}")]
    SummandNotRealizable(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// The base space `ℓ_p^N` (optionally with atom weights) together with a
/// family of coordinate subspaces `L^ν` and their projections `Q^ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "raw::RawPaving", into = "raw::RawPaving")]
pub struct Paving {
    p: f64,
    n: usize,
    weights: Option<Vec<f64>>,
    levels: Vec<Vec<usize>>,
}

impl Paving {
    pub fn new(p: f64, n: usize, levels: Vec<Vec<usize>>) -> Result<Self, SpaceError> {
        Self::build(p, n, None, levels)
    }

    /// Weighted atoms: coordinate `i` carries measure `weights[i]`.
    pub fn weighted(
        p: f64,
        n: usize,
        weights: Vec<f64>,
        levels: Vec<Vec<usize>>,
    ) -> Result<Self, SpaceError> {
        Self::build(p, n, Some(weights), levels)
    }

    fn build(
        p: f64,
        n: usize,
        weights: Option<Vec<f64>>,
        levels: Vec<Vec<usize>>,
    ) -> Result<Self, SpaceError> {
        if !(p >= 1.0) {
            return Err(SpaceError::InvalidInstance(format!("base exponent {p} < 1")));
        }
        if n == 0 {
            return Err(SpaceError::InvalidInstance("base dimension 0".into()));
        }
        if levels.is_empty() {
            return Err(SpaceError::EmptyLevels);
        }
        let mut levels = levels;
        for s in &mut levels {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(SpaceError::InvalidInstance("empty level".into()));
            }
            if *s.last().unwrap() >= n {
                return Err(SpaceError::InvalidInstance(format!(
                    "level index {} out of base range {n}",
                    s.last().unwrap()
                )));
            }
        }
        if let Some(w) = &weights {
            if w.len() != n || w.iter().any(|&x| !(x > 0.0)) {
                return Err(SpaceError::InvalidInstance(
                    "weights must be positive, one per atom".into(),
                ));
            }
        }
        Ok(Paving {
            p,
            n,
            weights,
            levels,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, idx: usize) -> &[usize] {
        &self.levels[idx]
    }

    pub fn level_size(&self, idx: usize) -> usize {
        self.levels[idx].len()
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Unweighted symbolic norm of the level subspace.
    pub fn level_spec(&self, idx: usize) -> NormSpec {
        NormSpec::lp(self.p, self.level_size(idx))
    }

    pub fn base_spec(&self) -> NormSpec {
        NormSpec::lp(self.p, self.n)
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Atom weight (1 for counting measure).
    pub fn weight(&self, atom: usize) -> f64 {
        self.weights.as_ref().map(|w| w[atom]).unwrap_or(1.0)
    }

    /// Row scalings `w_i^{1/p}` that turn a weighted level into the
    /// unweighted `ℓ_p` of the same size.
    pub fn level_row_scales(&self, idx: usize) -> Vec<f64> {
        let exp = if self.p.is_infinite() { 0.0 } else { 1.0 / self.p };
        self.levels[idx]
            .iter()
            .map(|&i| self.weight(i).powf(exp))
            .collect()
    }

    /// Norm of a base-space vector (weighted `ℓ_p`).
    pub fn base_norm(&self, x: &DVector<f64>) -> f64 {
        if self.p.is_infinite() {
            x.iter().fold(0.0, |m, v| m.max(v.abs()))
        } else {
            x.iter()
                .enumerate()
                .map(|(i, v)| self.weight(i) * v.abs().powf(self.p))
                .sum::<f64>()
                .powf(1.0 / self.p)
        }
    }

    /// Rows of `u` on the level's index set.
    pub fn project(&self, idx: usize, u: &TensorElement) -> DMatrix<f64> {
        let set = &self.levels[idx];
        let mut m = DMatrix::zeros(set.len(), u.e_dim());
        for (r, &atom) in set.iter().enumerate() {
            m.set_row(r, &u.coeffs.row(atom));
        }
        m
    }

    /// Embed a level-sized matrix back into the full base (zero rows
    /// outside the level).
    pub fn embed(&self, idx: usize, m: &DMatrix<f64>) -> TensorElement {
        let set = &self.levels[idx];
        let mut full = DMatrix::zeros(self.n, m.ncols());
        for (r, &atom) in set.iter().enumerate() {
            full.set_row(atom, &m.row(r));
        }
        TensorElement::new(full)
    }

    /// The coordinate projection `Q^ν` as an `N x N` matrix.
    pub fn projection_matrix(&self, idx: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.n, self.n);
        for &atom in &self.levels[idx] {
            q[(atom, atom)] = 1.0;
        }
        q
    }

    /// True when every nonempty subset of the base coordinates appears
    /// among the levels (only decidable at desk scale).
    pub fn properly_presented(&self) -> bool {
        if self.n > 16 {
            return false;
        }
        let present: std::collections::HashSet<u64> = self
            .levels
            .iter()
            .map(|s| s.iter().fold(0u64, |m, &i| m | 1 << i))
            .collect();
        (1u64..(1 << self.n)).all(|mask| present.contains(&mask))
    }
}

/// How the per-level norms of an instance are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelStructure {
    /// Minimal structure on `z*`: level norm = injective norm of
    /// `L^ν ⊗ z*`.
    Min { z: NormSpec },
    /// `⊕_1`-sum: block-decomposed tensors get the sum of block norms.
    Sum { blocks: Vec<LSpaceInstance> },
    /// Discretized Bochner `L_p(E)` norm: rows are measured in `e_norm`
    /// and combined with the base exponent and atom weights.
    Bochner { e_norm: NormSpec },
    /// Explicit per-level norms over row-major flattened coordinates
    /// (consistency tested, not enforced; used for adversarial cases).
    Custom { level_norms: Vec<NormSpec> },
}

/// A linear space `E` together with a norm on every `L^ν ⊗ E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "raw::RawInstance", into = "raw::RawInstance")]
pub struct LSpaceInstance {
    paving: Arc<Paving>,
    e_dim: usize,
    structure: LevelStructure,
}

impl LSpaceInstance {
    pub fn paving(&self) -> &Arc<Paving> {
        &self.paving
    }

    pub fn e_dim(&self) -> usize {
        self.e_dim
    }

    pub fn structure(&self) -> &LevelStructure {
        &self.structure
    }

    pub fn same_paving(&self, other: &LSpaceInstance) -> bool {
        Arc::ptr_eq(&self.paving, &other.paving) || self.paving == other.paving
    }

    /// The zero space (no coordinates); every tensor over it is zero.
    pub fn zero(paving: Arc<Paving>) -> LSpaceInstance {
        LSpaceInstance {
            paving,
            e_dim: 0,
            structure: LevelStructure::Sum { blocks: vec![] },
        }
    }

    /// Instance with explicit per-level norms over flattened tensor
    /// coordinates.
    pub fn custom(
        paving: Arc<Paving>,
        e_dim: usize,
        level_norms: Vec<NormSpec>,
    ) -> Result<LSpaceInstance, SpaceError> {
        if level_norms.len() != paving.n_levels() {
            return Err(SpaceError::InvalidInstance(format!(
                "need {} level norms, got {}",
                paving.n_levels(),
                level_norms.len()
            )));
        }
        for (idx, spec) in level_norms.iter().enumerate() {
            if spec.dim() != paving.level_size(idx) * e_dim {
                return Err(SpaceError::InvalidInstance(format!(
                    "level {idx} norm has dim {}, expected {}",
                    spec.dim(),
                    paving.level_size(idx) * e_dim
                )));
            }
        }
        Ok(LSpaceInstance {
            paving,
            e_dim,
            structure: LevelStructure::Custom { level_norms },
        })
    }

    /// Discretized Bochner instance: rows measured by `e_norm`.
    pub fn bochner(
        paving: Arc<Paving>,
        e_norm: NormSpec,
    ) -> Result<LSpaceInstance, SpaceError> {
        e_norm.validate()?;
        Ok(LSpaceInstance {
            e_dim: e_norm.dim(),
            paving,
            structure: LevelStructure::Bochner { e_norm },
        })
    }

    /// Norm of a level-projected tensor (`level_size x e_dim` matrix).
    pub fn level_norm(&self, idx: usize, m: &DMatrix<f64>) -> Result<NormEstimate, SpaceError> {
        if idx >= self.paving.n_levels() {
            return Err(SpaceError::LevelOutOfRange(idx));
        }
        if m.nrows() != self.paving.level_size(idx) || m.ncols() != self.e_dim {
            return Err(SpaceError::InvalidInstance(format!(
                "level {idx} tensor is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.paving.level_size(idx),
                self.e_dim
            )));
        }
        if self.e_dim == 0 || m.iter().all(|&v| v == 0.0) {
            return Ok(NormEstimate::exact(0.0));
        }
        match &self.structure {
            LevelStructure::Min { z } => {
                let scales = self.paving.level_row_scales(idx);
                let scaled = scale_rows(m, &scales);
                let l_spec = self.paving.level_spec(idx);
                Ok(injective_norm(&l_spec, &z.dualize(), &TensorElement::new(scaled))?)
            }
            LevelStructure::Sum { blocks } => {
                let mut parts = Vec::with_capacity(blocks.len());
                let mut off = 0;
                for b in blocks {
                    let slice = m.columns(off, b.e_dim()).into_owned();
                    parts.push(b.level_norm(idx, &slice)?);
                    off += b.e_dim();
                }
                Ok(NormEstimate::sum(parts))
            }
            LevelStructure::Bochner { e_norm } => {
                let p = self.paving.p();
                let set = self.paving.level(idx);
                if p.is_infinite() {
                    let mut worst = 0.0f64;
                    for r in 0..m.nrows() {
                        worst = worst.max(e_norm.eval(&m.row(r).transpose())?);
                    }
                    Ok(NormEstimate::exact(worst))
                } else {
                    let mut acc = 0.0;
                    for (r, &atom) in set.iter().enumerate() {
                        let rn = e_norm.eval(&m.row(r).transpose())?;
                        acc += self.paving.weight(atom) * rn.powf(p);
                    }
                    Ok(NormEstimate::exact(acc.powf(1.0 / p)))
                }
            }
            LevelStructure::Custom { level_norms } => {
                let flat = flatten_row_major(m);
                Ok(NormEstimate::exact(level_norms[idx].eval(&flat)?))
            }
        }
    }

    /// The ambient norm `sup_ν ||Q^ν · u||_ν` of a tensor over the full
    /// base.
    pub fn ambient_norm(&self, u: &TensorElement) -> Result<NormEstimate, SpaceError> {
        if u.l_dim() != self.paving.base_dim() || u.e_dim() != self.e_dim {
            return Err(SpaceError::InvalidInstance(format!(
                "tensor is {}x{}, instance needs {}x{}",
                u.l_dim(),
                u.e_dim(),
                self.paving.base_dim(),
                self.e_dim
            )));
        }
        let mut parts = Vec::with_capacity(self.paving.n_levels());
        for idx in 0..self.paving.n_levels() {
            let proj = self.paving.project(idx, u);
            parts.push(self.level_norm(idx, &proj)?);
        }
        NormEstimate::sup(parts).ok_or(SpaceError::EmptyLevels)
    }

    /// The norm induced on `E` itself (`||ξ ⊗ e|| = ||ξ|| ||e||`), when
    /// the structure determines it in closed form.
    pub fn induced_norm_spec(&self) -> Option<NormSpec> {
        match &self.structure {
            LevelStructure::Min { z } => Some(z.dualize()),
            LevelStructure::Sum { blocks } => {
                if blocks.is_empty() {
                    return None;
                }
                let parts: Option<Vec<NormSpec>> =
                    blocks.iter().map(|b| b.induced_norm_spec()).collect();
                parts.map(|blocks| NormSpec::L1Sum { blocks })
            }
            LevelStructure::Bochner { e_norm } => Some(e_norm.clone()),
            LevelStructure::Custom { .. } => None,
        }
    }

    /// Extreme points of the unit ball of the level norm, when
    /// enumerable (the polyhedral cases).
    pub fn level_ball_extremes(&self, idx: usize) -> Enumeration {
        let s = self.paving.level_size(idx);
        match &self.structure {
            LevelStructure::Min { z } => {
                let p = self.paving.p();
                let scales = self.paving.level_row_scales(idx);
                match (p, z) {
                    // p = 1, z = l1^n: ball is a product of column l1-balls.
                    (1.0, NormSpec::Lp { p: zp, dim: n }) if *zp == 1.0 => {
                        let count = match (2usize * s).checked_pow(*n as u32) {
                            Some(c) if c <= LEVEL_ENUM_CAP => c,
                            _ => {
                                return Enumeration::Unavailable(format!(
                                    "product enumeration (2*{s})^{n} exceeds cap"
                                ))
                            }
                        };
                        let mut pts = Vec::with_capacity(count);
                        let mut choice = vec![0usize; *n];
                        loop {
                            let mut m = DMatrix::zeros(s, *n);
                            for (j, &c) in choice.iter().enumerate() {
                                let row = c / 2;
                                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                                m[(row, j)] = sign / scales[row];
                            }
                            pts.push(flatten_row_major(&m));
                            if !advance(&mut choice, 2 * s) {
                                break;
                            }
                        }
                        Enumeration::Points(pts)
                    }
                    // p = inf, z = linf^n: ball is a product of row l1-balls.
                    (f, NormSpec::Lp { p: zp, dim: n }) if f.is_infinite() && zp.is_infinite() => {
                        let count = match (2usize * *n).checked_pow(s as u32) {
                            Some(c) if c <= LEVEL_ENUM_CAP => c,
                            _ => {
                                return Enumeration::Unavailable(format!(
                                    "product enumeration (2*{n})^{s} exceeds cap"
                                ))
                            }
                        };
                        let mut pts = Vec::with_capacity(count);
                        let mut choice = vec![0usize; s];
                        loop {
                            let mut m = DMatrix::zeros(s, *n);
                            for (i, &c) in choice.iter().enumerate() {
                                let col = c / 2;
                                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                                m[(i, col)] = sign;
                            }
                            pts.push(flatten_row_major(&m));
                            if !advance(&mut choice, 2 * *n) {
                                break;
                            }
                        }
                        Enumeration::Points(pts)
                    }
                    _ => Enumeration::Unavailable(format!(
                        "injective ball on l_{p} level with z = {z:?} is not enumerable"
                    )),
                }
            }
            LevelStructure::Sum { blocks } => {
                let mut pts: Vec<DVector<f64>> = Vec::new();
                let mut off = 0;
                for b in blocks {
                    match b.level_ball_extremes(idx) {
                        Enumeration::Points(bp) => {
                            for flat in bp {
                                let bm = unflatten_row_major(&flat, s, b.e_dim());
                                let mut m = DMatrix::zeros(s, self.e_dim);
                                m.columns_mut(off, b.e_dim()).copy_from(&bm);
                                pts.push(flatten_row_major(&m));
                            }
                        }
                        Enumeration::Unavailable(r) => return Enumeration::Unavailable(r),
                    }
                    off += b.e_dim();
                }
                if pts.len() > LEVEL_ENUM_CAP {
                    return Enumeration::Unavailable("sum enumeration exceeds cap".into());
                }
                Enumeration::Points(pts)
            }
            LevelStructure::Bochner { e_norm } => {
                if self.paving.p() != 1.0 {
                    return Enumeration::Unavailable(
                        "bochner level balls enumerable only for p = 1".into(),
                    );
                }
                match e_norm.extreme_points() {
                    Enumeration::Points(ep) => {
                        let set = self.paving.level(idx);
                        let mut pts = Vec::with_capacity(s * ep.len());
                        for (r, &atom) in set.iter().enumerate() {
                            let w = self.paving.weight(atom);
                            for x in &ep {
                                let mut m = DMatrix::zeros(s, self.e_dim);
                                m.set_row(r, &(x / w).transpose());
                                pts.push(flatten_row_major(&m));
                            }
                        }
                        Enumeration::Points(pts)
                    }
                    Enumeration::Unavailable(r) => Enumeration::Unavailable(r),
                }
            }
            LevelStructure::Custom { level_norms } => level_norms[idx].extreme_points(),
        }
    }
}

fn advance(choice: &mut [usize], radix: usize) -> bool {
    for slot in choice.iter_mut().rev() {
        *slot += 1;
        if *slot < radix {
            return true;
        }
        *slot = 0;
    }
    false
}

// Level-ball extreme points travel as row-major flattened vectors so the
// enumeration type can be shared with NormSpec.
pub fn flatten_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows() * m.ncols(), |k, _| {
        m[(k / m.ncols(), k % m.ncols())]
    })
}

pub fn unflatten_row_major(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

fn scale_rows(m: &DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &s) in scales.iter().enumerate() {
        if s != 1.0 {
            for j in 0..out.ncols() {
                out[(i, j)] *= s;
            }
        }
    }
    out
}

/// Minimal L-structure: the instance is `z*` with the injective tensor
/// norm on every level.
pub fn make_min_space(paving: Arc<Paving>, z: NormSpec) -> Result<LSpaceInstance, SpaceError> {
    z.validate()?;
    Ok(LSpaceInstance {
        e_dim: z.dim(),
        paving,
        structure: LevelStructure::Min { z },
    })
}

/// `⊕_1`-sum over a common paving. Returns the sum instance and the
/// canonical embedding matrices (which are L-isometric).
pub fn oplus1_sum(
    spaces: Vec<LSpaceInstance>,
) -> Result<(LSpaceInstance, Vec<DMatrix<f64>>), SpaceError> {
    if spaces.is_empty() {
        return Err(SpaceError::EmptySum);
    }
    let paving = spaces[0].paving.clone();
    if !spaces.iter().all(|s| spaces[0].same_paving(s)) {
        return Err(SpaceError::PavingMismatch);
    }
    let total: usize = spaces.iter().map(|s| s.e_dim()).sum();
    let mut embeddings = Vec::with_capacity(spaces.len());
    let mut off = 0;
    for s in &spaces {
        let mut e = DMatrix::zeros(total, s.e_dim());
        for k in 0..s.e_dim() {
            e[(off + k, k)] = 1.0;
        }
        embeddings.push(e);
        off += s.e_dim();
    }
    let sum = LSpaceInstance {
        paving,
        e_dim: total,
        structure: LevelStructure::Sum { blocks: spaces },
    };
    Ok((sum, embeddings))
}

/// Block layout of a well-composed instance: which level each `⊕_1`
/// summand is modeled on, and where its coordinates sit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcBlock {
    pub level_idx: usize,
    pub offset: usize,
    pub dim: usize,
}

/// A well-composed instance: `⊕_1` of minimal structures on duals of
/// level subspaces, with the block registry retained.
#[derive(Debug, Clone, PartialEq)]
pub struct WellComposed {
    pub instance: LSpaceInstance,
    pub blocks: Vec<WcBlock>,
}

impl WellComposed {
    /// Recover a registry from a plain `⊕_1`-of-minimal instance by
    /// matching block dimensions to level sizes (first match wins).
    pub fn from_instance(instance: &LSpaceInstance) -> Option<WellComposed> {
        let LevelStructure::Sum { blocks } = instance.structure() else {
            // A single minimal block counts as well composed.
            if let LevelStructure::Min { z } = instance.structure() {
                let level_idx = (0..instance.paving.n_levels())
                    .find(|&i| instance.paving.level_size(i) == z.dim())?;
                return Some(WellComposed {
                    instance: instance.clone(),
                    blocks: vec![WcBlock {
                        level_idx,
                        offset: 0,
                        dim: z.dim(),
                    }],
                });
            }
            return None;
        };
        let mut regs = Vec::with_capacity(blocks.len());
        let mut off = 0;
        for b in blocks {
            let LevelStructure::Min { z } = b.structure() else {
                return None;
            };
            let level_idx = (0..instance.paving.n_levels())
                .find(|&i| instance.paving.level_size(i) == z.dim())?;
            regs.push(WcBlock {
                level_idx,
                offset: off,
                dim: z.dim(),
            });
            off += b.e_dim();
        }
        Some(WellComposed {
            instance: instance.clone(),
            blocks: regs,
        })
    }
}

/// Build `⊕_1 MIN(Z_μ*)` over the paving. Every summand must be (an
/// isometric copy of) a level subspace of the base.
pub fn make_well_composed(
    paving: Arc<Paving>,
    summands: &[NormSpec],
) -> Result<WellComposed, SpaceError> {
    if summands.is_empty() {
        return Err(SpaceError::EmptySum);
    }
    let mut blocks = Vec::with_capacity(summands.len());
    let mut regs = Vec::with_capacity(summands.len());
    let mut off = 0;
    for z in summands {
        let level_idx = match z {
            NormSpec::Lp { p, dim }
                if *p == paving.p() || (p.is_infinite() && paving.p().is_infinite()) =>
            {
                (0..paving.n_levels()).find(|&i| paving.level_size(i) == *dim)
            }
            _ => None,
        };
        let Some(level_idx) = level_idx else {
            return Err(SpaceError::SummandNotRealizable(format!("{z:?}")));
        };
        regs.push(WcBlock {
            level_idx,
            offset: off,
            dim: z.dim(),
        });
        off += z.dim();
        blocks.push(make_min_space(paving.clone(), z.clone())?);
    }
    let (instance, _) = oplus1_sum(blocks)?;
    Ok(WellComposed {
        instance,
        blocks: regs,
    })
}

/// One sampled contractibility violation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractibilityWitness {
    pub from_level: usize,
    pub to_level: usize,
    pub violation: f64,
}

/// Sampled contractibility report for `||a · u|| <= ||a|| ||u||`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractibilityReport {
    pub samples_per_pair: usize,
    pub seed: u64,
    pub max_violation: f64,
    pub pass: bool,
    /// Finite sampling can certify failures, never the property itself.
    pub verdict: String,
    pub witnesses: Vec<ContractibilityWitness>,
}

/// Draw random contractions `a : L^μ -> L^ν` (Gaussian matrices scaled
/// by their computed operator norm) and random tensors `u`, and report
/// the worst violation of `||a · u||_ν <= ||u||_μ`.
pub fn check_contractibility(
    instance: &LSpaceInstance,
    samples_per_pair: usize,
    seed: u64,
) -> Result<ContractibilityReport, SpaceError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let paving = instance.paving();
    let mut max_violation = f64::NEG_INFINITY;
    let mut witnesses = Vec::new();
    for from in 0..paving.n_levels() {
        for to in 0..paving.n_levels() {
            let s_from = paving.level_size(from);
            let s_to = paving.level_size(to);
            let dom = NormSpec::lp(paving.p(), s_from);
            let cod = NormSpec::lp(paving.p(), s_to);
            let from_scales = paving.level_row_scales(from);
            let to_scales = paving.level_row_scales(to);
            let mut pair_worst = f64::NEG_INFINITY;
            for _ in 0..samples_per_pair {
                let mut a = DMatrix::from_fn(s_to, s_from, |_, _| {
                    let u1: f64 = rng.gen_range(1e-12..1.0f64);
                    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (-2.0 * u1.ln()).sqrt() * u2.cos()
                });
                // Normalize against the weighted level norms.
                let mut scaled = a.clone();
                for i in 0..s_to {
                    for j in 0..s_from {
                        scaled[(i, j)] *= to_scales[i] / from_scales[j];
                    }
                }
                let est = operator_norm(&scaled, &dom, &cod)?;
                if est.upper <= 0.0 {
                    continue;
                }
                a /= est.upper * (1.0 + 1e-12);
                let u = DMatrix::from_fn(s_from, instance.e_dim(), |_, _| {
                    rng.gen_range(-1.0..1.0)
                });
                let before = instance.level_norm(from, &u)?;
                let after = instance.level_norm(to, &(&a * &u))?;
                let violation = after.lower - before.upper;
                pair_worst = pair_worst.max(violation);
            }
            if pair_worst > max_violation {
                max_violation = pair_worst;
            }
            if pair_worst > 1e-9 {
                witnesses.push(ContractibilityWitness {
                    from_level: from,
                    to_level: to,
                    violation: pair_worst,
                });
            }
        }
    }
    if max_violation == f64::NEG_INFINITY {
        max_violation = 0.0;
    }
    Ok(ContractibilityReport {
        samples_per_pair,
        seed,
        max_violation,
        pass: max_violation <= 1e-9,
        verdict: "sampled".into(),
        witnesses,
    })
}

mod raw {
    use super::*;

    #[derive(Serialize, Deserialize, Clone)]
    pub struct RawPaving {
        p: RawScalar,
        n: usize,
        levels: Vec<Vec<usize>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<RawScalar>>,
    }

    impl TryFrom<RawPaving> for Paving {
        type Error = String;
        fn try_from(raw: RawPaving) -> Result<Self, String> {
            let weights = raw
                .weights
                .map(|w| w.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>())
                .transpose()?;
            Paving::build(raw.p.parse()?, raw.n, weights, raw.levels).map_err(|e| e.to_string())
        }
    }

    impl From<Paving> for RawPaving {
        fn from(p: Paving) -> Self {
            RawPaving {
                p: RawScalar::from_f64(p.p),
                n: p.n,
                levels: p.levels,
                weights: p
                    .weights
                    .map(|w| w.iter().map(|&x| RawScalar::from_f64(x)).collect()),
            }
        }
    }

    #[derive(Serialize, Deserialize, Clone)]
    #[serde(tag = "kind")]
    pub enum RawStructure {
        #[serde(rename = "min_of")]
        Min { z: NormSpec },
        #[serde(rename = "l1sum")]
        Sum { blocks: Vec<RawBody> },
        #[serde(rename = "bochner")]
        Bochner { e_norm: NormSpec },
        #[serde(rename = "levels")]
        Custom { level_norms: Vec<NormSpec> },
    }

    #[derive(Serialize, Deserialize, Clone)]
    pub struct RawBody {
        e_dim: usize,
        structure: RawStructure,
    }

    #[derive(Serialize, Deserialize, Clone)]
    pub struct RawInstance {
        paving: Paving,
        e_dim: usize,
        structure: RawStructure,
    }

    fn build_structure(
        paving: &Arc<Paving>,
        e_dim: usize,
        raw: RawStructure,
    ) -> Result<LevelStructure, String> {
        Ok(match raw {
            RawStructure::Min { z } => {
                if z.dim() != e_dim {
                    return Err(format!("min_of z has dim {}, e_dim {e_dim}", z.dim()));
                }
                LevelStructure::Min { z }
            }
            RawStructure::Sum { blocks } => {
                let mut insts = Vec::with_capacity(blocks.len());
                let mut total = 0;
                for b in blocks {
                    total += b.e_dim;
                    insts.push(LSpaceInstance {
                        paving: paving.clone(),
                        e_dim: b.e_dim,
                        structure: build_structure(paving, b.e_dim, b.structure)?,
                    });
                }
                if total != e_dim {
                    return Err(format!("l1sum blocks total {total}, e_dim {e_dim}"));
                }
                LevelStructure::Sum { blocks: insts }
            }
            RawStructure::Bochner { e_norm } => {
                if e_norm.dim() != e_dim {
                    return Err(format!(
                        "bochner e_norm has dim {}, e_dim {e_dim}",
                        e_norm.dim()
                    ));
                }
                LevelStructure::Bochner { e_norm }
            }
            RawStructure::Custom { level_norms } => {
                if level_norms.len() != paving.n_levels() {
                    return Err(format!(
                        "need {} level norms, got {}",
                        paving.n_levels(),
                        level_norms.len()
                    ));
                }
                for (idx, spec) in level_norms.iter().enumerate() {
                    if spec.dim() != paving.level_size(idx) * e_dim {
                        return Err(format!("level {idx} norm has wrong dimension"));
                    }
                }
                LevelStructure::Custom { level_norms }
            }
        })
    }

    fn emit_structure(s: &LevelStructure) -> RawStructure {
        match s {
            LevelStructure::Min { z } => RawStructure::Min { z: z.clone() },
            LevelStructure::Sum { blocks } => RawStructure::Sum {
                blocks: blocks
                    .iter()
                    .map(|b| RawBody {
                        e_dim: b.e_dim,
                        structure: emit_structure(&b.structure),
                    })
                    .collect(),
            },
            LevelStructure::Bochner { e_norm } => RawStructure::Bochner {
                e_norm: e_norm.clone(),
            },
            LevelStructure::Custom { level_norms } => RawStructure::Custom {
                level_norms: level_norms.clone(),
            },
        }
    }

    impl TryFrom<RawInstance> for LSpaceInstance {
        type Error = String;
        fn try_from(raw: RawInstance) -> Result<Self, String> {
            let paving = Arc::new(raw.paving);
            let structure = build_structure(&paving, raw.e_dim, raw.structure)?;
            Ok(LSpaceInstance {
                paving,
                e_dim: raw.e_dim,
                structure,
            })
        }
    }

    impl From<LSpaceInstance> for RawInstance {
        fn from(inst: LSpaceInstance) -> Self {
            RawInstance {
                paving: (*inst.paving).clone(),
                e_dim: inst.e_dim,
                structure: emit_structure(&inst.structure),
            }
        }
    }
}
