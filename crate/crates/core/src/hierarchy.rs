//! Truncated index set of the hierarchy and the sparse generator acting on
//! the stacked auxiliary density matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{HeomError, Result};
use crate::model::{build_coupling_table, CouplingTable, ModelParams, Side, Superop, C64, N_DIRECTIONS, I};

/// Default cap on the number of hierarchy slots (each slot is one 2x2 matrix).
pub const DEFAULT_SLOT_BUDGET: usize = 4_000_000;

/// Multi-index `(m_omega, m_xi1, m_xi2, m_k1, m_k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HierarchyIndex(pub [u16; N_DIRECTIONS]);

impl HierarchyIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn depth(&self) -> usize {
        self.0.iter().map(|&m| m as usize).sum()
    }

    pub fn component(&self, k: usize) -> usize {
        self.0[k] as usize
    }

    pub fn lifted(&self, k: usize) -> Self {
        let mut m = *self;
        m.0[k] += 1;
        m
    }

    pub fn dropped(&self, k: usize) -> Option<Self> {
        let mut m = *self;
        m.0[k] = m.0[k].checked_sub(1)?;
        Some(m)
    }
}

/// How the infinite hierarchy is cut off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Keep indices with `sum(m) <= depth`.
    #[default]
    Total,
    /// Keep indices with `max(m) <= depth`.
    PerDirection,
}

impl Truncation {
    pub fn name(self) -> &'static str {
        match self {
            Truncation::Total => "total",
            Truncation::PerDirection => "per_direction",
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of slots kept at `depth` when `active` directions are enumerated.
pub fn predicted_slot_count(depth: usize, truncation: Truncation, active: usize) -> u128 {
    match truncation {
        Truncation::Total => binomial((depth + active) as u128, active as u128),
        Truncation::PerDirection => (depth as u128 + 1).pow(active as u32),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLayout {
    depth: usize,
    truncation: Truncation,
    active: [bool; N_DIRECTIONS],
    indices: Vec<HierarchyIndex>,
    position: HashMap<HierarchyIndex, usize>,
}

impl HierarchyLayout {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn active(&self) -> [bool; N_DIRECTIONS] {
        self.active
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[HierarchyIndex] {
        &self.indices
    }

    pub fn index(&self, slot: usize) -> HierarchyIndex {
        self.indices[slot]
    }

    pub fn slot(&self, m: &HierarchyIndex) -> Option<usize> {
        self.position.get(m).copied()
    }

    fn admits(&self, m: &HierarchyIndex) -> bool {
        let in_active = m.0.iter().zip(self.active.iter()).all(|(&c, &a)| a || c == 0);
        in_active
            && match self.truncation {
                Truncation::Total => m.depth() <= self.depth,
                Truncation::PerDirection => m.0.iter().all(|&c| c as usize <= self.depth),
            }
    }
}

/// Full five-direction simplex of the given depth.
pub fn enumerate_indices(depth: usize) -> Result<HierarchyLayout> {
    enumerate_with(depth, Truncation::Total, [true; N_DIRECTIONS], DEFAULT_SLOT_BUDGET)
}

/// Enumerate indices over the `active` directions only, in graded
/// lexicographic order (ascending depth, then lexicographic).
pub fn enumerate_with(
    depth: usize,
    truncation: Truncation,
    active: [bool; N_DIRECTIONS],
    budget: usize,
) -> Result<HierarchyLayout> {
    let n_active = active.iter().filter(|&&a| a).count();
    let predicted = predicted_slot_count(depth, truncation, n_active);
    if predicted > budget as u128 || depth > u16::MAX as usize {
        return Err(HeomError::ResourceLimit { depth, slots: predicted, budget });
    }
    let mut indices = Vec::with_capacity(predicted as usize);
    let mut current = HierarchyIndex::zero();
    fill(0, depth, truncation, &active, &mut current, &mut indices);
    indices.sort_by(|a, b| a.depth().cmp(&b.depth()).then_with(|| a.cmp(b)));
    debug_assert_eq!(indices.len() as u128, predicted);
    let position = indices.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    Ok(HierarchyLayout { depth, truncation, active, indices, position })
}

fn fill(
    k: usize,
    remaining: usize,
    truncation: Truncation,
    active: &[bool; N_DIRECTIONS],
    current: &mut HierarchyIndex,
    out: &mut Vec<HierarchyIndex>,
) {
    if k == N_DIRECTIONS {
        out.push(*current);
        return;
    }
    let cap = if active[k] { remaining } else { 0 };
    for m in 0..=cap {
        current.0[k] = m as u16;
        let next = match truncation {
            Truncation::Total => remaining - m,
            Truncation::PerDirection => remaining,
        };
        fill(k + 1, next, truncation, active, current, out);
    }
    current.0[k] = 0;
}

/// Nonzero entries of a 4x4 superoperator matrix.
#[derive(Debug, Clone)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_superop(op: &Superop) -> Self {
        let m = op.matrix();
        let mut entries = Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                if m[(r, c)] != C64::new(0.0, 0.0) {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    #[inline]
    fn accumulate(&self, factor: f64, x: &[C64], out: &mut [C64; 4]) {
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c] * factor;
        }
    }
}

/// Whether a block lifts (`m -> m + e_k`) or drops (`m -> m - e_k`) the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Lift,
    Drop,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    source: u32,
    op: u16,
    factor: f64,
}

/// An off-diagonal block of the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub target: usize,
    pub source: usize,
    pub direction: usize,
    pub kind: BlockKind,
    pub factor: f64,
}

/// Sparse linear generator of the truncated hierarchy.
#[derive(Debug, Clone)]
pub struct Generator {
    layout: HierarchyLayout,
    table: CouplingTable,
    free: Superop,
    free_op: SparseOp,
    diagonal: Vec<C64>,
    /// `ops[2k]` is the lift of direction `k`, `ops[2k + 1]` its drop.
    ops: Vec<SparseOp>,
    row_start: Vec<usize>,
    links: Vec<Link>,
    link_meta: Vec<(u8, BlockKind)>,
}

/// Assemble the generator on a total-depth layout over the active directions.
pub fn assemble_generator(params: &ModelParams, depth: usize) -> Result<Generator> {
    assemble_with(params, depth, Truncation::Total, DEFAULT_SLOT_BUDGET)
}

pub fn assemble_with(
    params: &ModelParams,
    depth: usize,
    truncation: Truncation,
    budget: usize,
) -> Result<Generator> {
    let table = build_coupling_table(params)?;
    let layout = enumerate_with(depth, truncation, table.active_mask(), budget)?;
    Ok(Generator::new(params, table, layout))
}

impl Generator {
    pub fn new(params: &ModelParams, table: CouplingTable, layout: HierarchyLayout) -> Self {
        let free = Superop::single(Side::Commutator, params.tls.hamiltonian(), -I);
        let free_op = SparseOp::from_superop(&free);
        let ops = table
            .directions
            .iter()
            .flat_map(|d| [SparseOp::from_superop(&d.lift), SparseOp::from_superop(&d.drop)])
            .collect();

        let n = layout.len();
        let mut diagonal = Vec::with_capacity(n);
        let mut row_start = Vec::with_capacity(n + 1);
        let mut links = Vec::new();
        let mut link_meta = Vec::new();
        for m in layout.indices() {
            row_start.push(links.len());
            let mut diag = C64::new(0.0, 0.0);
            for (k, dir) in table.directions.iter().enumerate() {
                if !dir.active {
                    continue;
                }
                let mk = m.component(k);
                diag += dir.alpha * mk as f64;
                let up = m.lifted(k);
                if layout.admits(&up) {
                    if let Some(src) = layout.slot(&up) {
                        links.push(Link { source: src as u32, op: (2 * k) as u16, factor: 1.0 });
                        link_meta.push((k as u8, BlockKind::Lift));
                    }
                }
                if let Some(down) = m.dropped(k) {
                    let src = layout.slot(&down).expect("layout closed under drops");
                    links.push(Link { source: src as u32, op: (2 * k + 1) as u16, factor: mk as f64 });
                    link_meta.push((k as u8, BlockKind::Drop));
                }
            }
            diagonal.push(diag);
        }
        row_start.push(links.len());
        Self { layout, table, free, free_op, diagonal, ops, row_start, links, link_meta }
    }

    pub fn layout(&self) -> &HierarchyLayout {
        &self.layout
    }

    pub fn table(&self) -> &CouplingTable {
        &self.table
    }

    pub fn slots(&self) -> usize {
        self.layout.len()
    }

    pub fn depth(&self) -> usize {
        self.layout.depth()
    }

    /// `sum_k m_k alpha_k` for a slot.
    pub fn diagonal(&self, slot: usize) -> C64 {
        self.diagonal[slot]
    }

    pub fn free_superop(&self) -> &Superop {
        &self.free
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        (0..self.slots()).flat_map(move |target| {
            (self.row_start[target]..self.row_start[target + 1]).map(move |l| {
                let (direction, kind) = self.link_meta[l];
                Block {
                    target,
                    source: self.links[l].source as usize,
                    direction: direction as usize,
                    kind,
                    factor: self.links[l].factor,
                }
            })
        })
    }

    pub fn block_superop(&self, block: &Block) -> &Superop {
        let d = &self.table.directions[block.direction];
        match block.kind {
            BlockKind::Lift => &d.lift,
            BlockKind::Drop => &d.drop,
        }
    }

    #[inline]
    fn apply_slot(&self, slot: usize, state: &[C64], out: &mut [C64]) {
        let x = &state[4 * slot..4 * slot + 4];
        let d = self.diagonal[slot];
        let mut acc = [x[0] * d, x[1] * d, x[2] * d, x[3] * d];
        self.free_op.accumulate(1.0, x, &mut acc);
        for link in &self.links[self.row_start[slot]..self.row_start[slot + 1]] {
            let s = 4 * link.source as usize;
            self.ops[link.op as usize].accumulate(link.factor, &state[s..s + 4], &mut acc);
        }
        out.copy_from_slice(&acc);
    }

    /// Write `G * state` into `out`; both are slot-major `4 * slots` arrays.
    pub fn apply_into(&self, state: &[C64], out: &mut [C64]) -> Result<()> {
        let expected = 4 * self.slots();
        if state.len() != expected || out.len() != expected {
            return Err(HeomError::LayoutMismatch {
                expected: self.slots(),
                found: state.len().min(out.len()) / 4,
            });
        }
        self.apply_unchecked(state, out);
        Ok(())
    }

    pub(crate) fn apply_unchecked(&self, state: &[C64], out: &mut [C64]) {
        #[cfg(feature = "parallel")]
        if self.slots() >= PARALLEL_THRESHOLD {
            use rayon::prelude::*;
            out.par_chunks_mut(4 * PARALLEL_CHUNK).enumerate().for_each(|(c, chunk)| {
                let first = c * PARALLEL_CHUNK;
                for (j, o) in chunk.chunks_exact_mut(4).enumerate() {
                    self.apply_slot(first + j, state, o);
                }
            });
            return;
        }
        for (slot, o) in out.chunks_exact_mut(4).enumerate() {
            self.apply_slot(slot, state, o);
        }
    }

    /// Dense matrix of the generator; only sensible for small hierarchies.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = 4 * self.slots();
        let mut m = DMatrix::zeros(n, n);
        let free = self.free.matrix();
        for slot in 0..self.slots() {
            for r in 0..4 {
                for c in 0..4 {
                    m[(4 * slot + r, 4 * slot + c)] += free[(r, c)];
                }
                m[(4 * slot + r, 4 * slot + r)] += self.diagonal[slot];
            }
        }
        for b in self.blocks() {
            let op = self.block_superop(&b).matrix();
            for r in 0..4 {
                for c in 0..4 {
                    m[(4 * b.target + r, 4 * b.source + c)] += op[(r, c)] * b.factor;
                }
            }
        }
        m
    }
}

#[cfg(feature = "parallel")]
const PARALLEL_THRESHOLD: usize = 4096;
#[cfg(feature = "parallel")]
const PARALLEL_CHUNK: usize = 256;

/// Stacked hierarchy: slot-major array of row-major 2x2 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    data: Vec<C64>,
}

impl HierarchyState {
    pub fn zeros(slots: usize) -> Self {
        Self { data: vec![C64::new(0.0, 0.0); 4 * slots] }
    }

    pub fn from_vec(data: Vec<C64>) -> Self {
        assert!(data.len().is_multiple_of(4), "hierarchy data must hold whole 2x2 blocks");
        Self { data }
    }

    pub fn slots(&self) -> usize {
        self.data.len() / 4
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn slot(&self, i: usize) -> crate::model::Mat2 {
        let s = &self.data[4 * i..4 * i + 4];
        crate::model::Mat2::new(s[0], s[1], s[2], s[3])
    }

    pub fn set_slot(&mut self, i: usize, m: &crate::model::Mat2) {
        self.data[4 * i..4 * i + 4].copy_from_slice(&[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
    }

    /// Copy the overlapping slots of `other`, laid out by `from`, into a state
    /// laid out by `to`. Slots missing from `from` are zero.
    pub fn embed(other: &HierarchyState, from: &HierarchyLayout, to: &HierarchyLayout) -> Self {
        let mut out = Self::zeros(to.len());
        for (i, m) in from.indices().iter().enumerate() {
            if let Some(j) = to.slot(m) {
                out.data[4 * j..4 * j + 4].copy_from_slice(&other.data[4 * i..4 * i + 4]);
            }
        }
        out
    }
}

/// `G * state` as a new state.
pub fn apply_generator(gen: &Generator, state: &HierarchyState) -> Result<HierarchyState> {
    let mut out = HierarchyState::zeros(gen.slots());
    gen.apply_into(state.as_slice(), out.as_mut_slice())?;
    Ok(out)
}
