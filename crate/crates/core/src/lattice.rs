//! Simple coalescing random walks on `ℤ` and `ℤ' = ℤ + 1/2`.
//!
//! Particles are indexed from left to right. Coalesced particles are grouped
//! into consecutive blocks of an [`IntervalPartition`]; only the lowest index
//! of each block (its representative) moves, and the rest follow it. Every
//! representative jumps to each neighbour at rate 1/2, except where a
//! [`BoundarySpec`] freezes it (absorbing barrier) or suppresses the move
//! that would cross a barrier (reflecting barrier).

use std::fmt;
use std::ops::Range;

use rand::Rng as _;
use rand::RngCore;
use rand_distr::{Distribution, Exp};

use crate::error::{domain, Result};

/// A lattice site stored as twice its value, so integer and half-integer
/// sites share one exact representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(i64);

impl Site {
    /// The integer site `k`.
    pub const fn int(k: i64) -> Self {
        Site(2 * k)
    }

    /// The half-integer site `k + 1/2`.
    pub const fn half(k: i64) -> Self {
        Site(2 * k + 1)
    }

    pub const fn from_doubled(doubled: i64) -> Self {
        Site(doubled)
    }

    pub const fn doubled(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// One lattice step up (`+1`) or down (`-1`).
    pub const fn shifted(self, dir: i64) -> Self {
        Site(self.0 + 2 * dir)
    }

    pub fn lattice(self) -> Lattice {
        if self.is_integer() {
            Lattice::Integers
        } else {
            Lattice::HalfIntegers
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}", self.value())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lattice {
    Integers,
    HalfIntegers,
}

impl Lattice {
    /// All sites of this lattice in the closed integer window `[lo, hi]`.
    pub fn sites_in(self, lo: i64, hi: i64) -> Vec<Site> {
        match self {
            Lattice::Integers => (lo..=hi).map(Site::int).collect(),
            Lattice::HalfIntegers => (lo..hi).map(Site::half).collect(),
        }
    }
}

/// A partition of `{0, …, m-1}` into consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntervalPartition {
    m: usize,
    starts: Vec<usize>,
}

impl IntervalPartition {
    pub fn singletons(m: usize) -> Self {
        Self {
            m,
            starts: (0..m).collect(),
        }
    }

    /// Blocks given by their first indices; `starts` must begin at 0 and
    /// increase strictly below `m`.
    pub fn from_starts(m: usize, starts: Vec<usize>) -> Result<Self> {
        if m == 0 {
            return domain("partition of an empty index set");
        }
        if starts.first() != Some(&0)
            || starts.windows(2).any(|w| w[1] <= w[0])
            || starts.last().is_some_and(|&s| s >= m)
        {
            return domain(format!("invalid block starts {starts:?} for m = {m}"));
        }
        Ok(Self { m, starts })
    }

    /// Number of indices.
    pub fn size(&self) -> usize {
        self.m
    }

    /// Number of blocks `l(π)`.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Representatives `α_k(π)`: the smallest index of each block.
    pub fn representatives(&self) -> &[usize] {
        &self.starts
    }

    pub fn block(&self, k: usize) -> Range<usize> {
        let end = self.starts.get(k + 1).copied().unwrap_or(self.m);
        self.starts[k]..end
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.len()).map(|k| self.block(k))
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.starts.partition_point(|&s| s <= i) - 1
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.block_of(i) == self.block_of(j)
    }

    /// `K_π^{-1}`: expands representative positions to all `m` particles.
    pub fn lift(&self, reps: &[Site]) -> Result<Vec<Site>> {
        if reps.len() != self.len() {
            return domain(format!(
                "lift: {} representatives for {} blocks",
                reps.len(),
                self.len()
            ));
        }
        let mut out = Vec::with_capacity(self.m);
        self.lift_into(reps, &mut out);
        Ok(out)
    }

    pub(crate) fn lift_into(&self, reps: &[Site], out: &mut Vec<Site>) {
        out.clear();
        for (k, &x) in reps.iter().enumerate() {
            out.extend(std::iter::repeat_n(x, self.block(k).len()));
        }
    }

    /// Merges block `k + 1` into block `k`.
    fn merge_with_next(&mut self, k: usize) {
        self.starts.remove(k + 1);
    }
}

/// Canonical coalescing-walk state: positions plus the partition of their
/// maximal runs of equal values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeState {
    lattice: Lattice,
    positions: Vec<Site>,
    partition: IntervalPartition,
}

/// Builds the canonical state of a nondecreasing position vector; equal
/// neighbours share a block.
pub fn coalesce_state(positions: &[Site]) -> Result<LatticeState> {
    let Some(&first) = positions.first() else {
        return domain("coalesce_state: no particles");
    };
    let lattice = first.lattice();
    if positions.iter().any(|s| s.lattice() != lattice) {
        return domain("coalesce_state: positions mix integer and half-integer sites");
    }
    if positions.windows(2).any(|w| w[1] < w[0]) {
        return domain("coalesce_state: positions must be nondecreasing");
    }
    let mut starts = vec![0];
    starts.extend((1..positions.len()).filter(|&i| positions[i] != positions[i - 1]));
    Ok(LatticeState {
        lattice,
        positions: positions.to_vec(),
        partition: IntervalPartition {
            m: positions.len(),
            starts,
        },
    })
}

impl LatticeState {
    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn positions(&self) -> &[Site] {
        &self.positions
    }

    pub fn partition(&self) -> &IntervalPartition {
        &self.partition
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    /// `K_π(x)`: the positions of the representatives.
    pub fn project(&self) -> Vec<Site> {
        self.partition
            .representatives()
            .iter()
            .map(|&i| self.positions[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Free,
    Absorbing,
    Reflecting,
}

/// Barrier configuration: no barrier, absorption at integer sites (walks on
/// `ℤ`), or reflection at integer sites (walks on `ℤ'`). At most two points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoundarySpec {
    kind: BoundaryKind,
    points: Vec<i64>,
}

impl BoundarySpec {
    pub fn free() -> Self {
        Self {
            kind: BoundaryKind::Free,
            points: Vec::new(),
        }
    }

    pub fn absorbing(points: &[i64]) -> Result<Self> {
        Self::with_points(BoundaryKind::Absorbing, points)
    }

    /// Two reflecting barriers must be at least 2 apart: with `b - a = 1` the
    /// single site between them could never move, a case the generator does
    /// not define.
    pub fn reflecting(points: &[i64]) -> Result<Self> {
        let spec = Self::with_points(BoundaryKind::Reflecting, points)?;
        if spec.points.windows(2).any(|w| w[1] - w[0] < 2) {
            return domain("reflecting barriers must be at least 2 apart");
        }
        Ok(spec)
    }

    fn with_points(kind: BoundaryKind, points: &[i64]) -> Result<Self> {
        if points.is_empty() || points.len() > 2 {
            return domain(format!("expected one or two barrier points, got {}", points.len()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return domain("barrier points must be strictly increasing");
        }
        Ok(Self {
            kind,
            points: points.to_vec(),
        })
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn points(&self) -> &[i64] {
        &self.points
    }

    /// Checks that `state` lives on the lattice this boundary acts on.
    pub fn check(&self, state: &LatticeState) -> Result<()> {
        match (self.kind, state.lattice) {
            (BoundaryKind::Absorbing, Lattice::HalfIntegers) => domain("absorbing walks live on the integer lattice"),
            (BoundaryKind::Reflecting, Lattice::Integers) => {
                domain("reflecting walks live on the half-integer lattice; a particle sits on a barrier")
            }
            _ => Ok(()),
        }
    }

    /// Allowed jump directions of a representative at `site`.
    #[inline]
    pub(crate) fn allowed(&self, site: Site) -> (bool, bool) {
        let d = site.doubled();
        match self.kind {
            BoundaryKind::Free => (true, true),
            BoundaryKind::Absorbing => {
                let frozen = self.points.iter().any(|&c| 2 * c == d);
                (!frozen, !frozen)
            }
            BoundaryKind::Reflecting => {
                let up = !self.points.iter().any(|&c| d + 1 == 2 * c);
                let down = !self.points.iter().any(|&c| d - 1 == 2 * c);
                (up, down)
            }
        }
    }
}

/// Calls `visit(k, dir)` for every allowed jump of representative `k` in
/// direction `dir ∈ {+1, -1}`; each has rate 1/2.
#[inline]
pub(crate) fn for_each_move(boundary: &BoundarySpec, reps: &[Site], mut visit: impl FnMut(usize, i64)) {
    for (k, &x) in reps.iter().enumerate() {
        let (up, down) = boundary.allowed(x);
        if up {
            visit(k, 1);
        }
        if down {
            visit(k, -1);
        }
    }
}

/// `Gf(x)`, `G_a f(x)` or `G_r f(x)` depending on the boundary kind, for a
/// function of the full position vector.
pub fn generator_apply<F>(boundary: &BoundarySpec, f: F, state: &LatticeState) -> Result<f64>
where
    F: Fn(&[Site]) -> f64,
{
    boundary.check(state)?;
    let base = f(&state.positions);
    let reps = state.project();
    let mut moved = reps.clone();
    let mut buf = Vec::with_capacity(state.m());
    let mut acc = 0.0;
    for_each_move(boundary, &reps, |k, dir| {
        moved[k] = reps[k].shifted(dir);
        state.partition.lift_into(&moved, &mut buf);
        acc += 0.5 * (f(&buf) - base);
        moved[k] = reps[k];
    });
    Ok(acc)
}

/// Exact event-driven draw of the walk at time `t`.
pub fn simulate_walk<R: RngCore + ?Sized>(
    boundary: &BoundarySpec,
    init: &LatticeState,
    t: f64,
    rng: &mut R,
) -> Result<LatticeState> {
    simulate_walk_observed(boundary, init, t, rng, |_, _| {})
}

/// As [`simulate_walk`], calling `observer(time, reps)` after every jump with
/// the representative positions.
pub fn simulate_walk_observed<R, O>(
    boundary: &BoundarySpec,
    init: &LatticeState,
    t: f64,
    rng: &mut R,
    mut observer: O,
) -> Result<LatticeState>
where
    R: RngCore + ?Sized,
    O: FnMut(f64, &[Site]),
{
    boundary.check(init)?;
    if !(t >= 0.0) {
        return domain(format!("simulate_walk: time must be >= 0, got {t}"));
    }
    let mut reps = init.project();
    let mut partition = init.partition.clone();
    let mut moves: Vec<(usize, i64)> = Vec::with_capacity(2 * reps.len());
    let mut now = 0.0;
    loop {
        moves.clear();
        for_each_move(boundary, &reps, |k, dir| moves.push((k, dir)));
        if moves.is_empty() {
            break;
        }
        let rate = 0.5 * moves.len() as f64;
        now += Exp::new(rate).expect("positive rate").sample(rng);
        if now > t {
            break;
        }
        let (k, dir) = moves[rng.random_range(0..moves.len())];
        reps[k] = reps[k].shifted(dir);
        if dir > 0 && k + 1 < reps.len() && reps[k + 1] == reps[k] {
            reps.remove(k + 1);
            partition.merge_with_next(k);
        } else if dir < 0 && k > 0 && reps[k - 1] == reps[k] {
            reps.remove(k);
            partition.merge_with_next(k - 1);
        }
        observer(now, &reps);
    }
    let positions = partition.lift(&reps)?;
    Ok(LatticeState {
        lattice: init.lattice,
        positions,
        partition,
    })
}

/// Binary `m × (n-1)` array with entry `(i, j) = 1{y_j < x_i ≤ y_{j+1}}`,
/// packed row-major into a `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndicatorArray {
    rows: usize,
    cols: usize,
    bits: u64,
}

impl IndicatorArray {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        (self.bits >> (i * self.cols + j)) & 1 == 1
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

#[inline]
pub(crate) fn indicator_bits(xs: &[Site], ys: &[Site]) -> u64 {
    let cols = ys.len().saturating_sub(1);
    let mut bits = 0u64;
    for (i, &x) in xs.iter().enumerate() {
        for j in 0..cols {
            if ys[j] < x && x <= ys[j + 1] {
                bits |= 1 << (i * cols + j);
            }
        }
    }
    bits
}

/// Builds the indicator array. `ys` must be nondecreasing; tied neighbours
/// (coalesced duals) give an empty interval.
pub fn indicator_array(xs: &[Site], ys: &[Site]) -> Result<IndicatorArray> {
    if ys.len() < 2 {
        return domain("indicator_array: need at least two y points");
    }
    if ys.windows(2).any(|w| w[1] < w[0]) {
        return domain("indicator_array: y points must be ordered");
    }
    let cols = ys.len() - 1;
    if xs.len() * cols > 64 {
        return domain("indicator_array: more than 64 entries");
    }
    Ok(IndicatorArray {
        rows: xs.len(),
        cols,
        bits: indicator_bits(xs, ys),
    })
}
