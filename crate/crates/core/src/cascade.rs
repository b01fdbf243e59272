//! Generation-by-generation and leaf-by-leaf simulation of the dyadic tree.
//!
//! Node `u` at depth `n` with index `k` sits at `t_u = k / 2^n`; its children
//! are `2k` (left) and `2k + 1` (right). `V` and `X` accumulate the real and
//! imaginary parts of the node weights along the ancestral line. Both modes
//! read the same positional increments from a [`TreeKey`], so they produce
//! identical leaves.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{ChildIncrements, TreeKey, MAX_TREE_DEPTH};
use crate::summation::ComplexSum;
use crate::weights::ModelParams;

pub const DEFAULT_EPSILON0: f64 = 0.05;
/// Largest depth held in memory by default (two arrays of `2^26` floats).
pub const DEFAULT_BREADTH_CAP: u32 = 26;

/// Parents per parallel work item when extending large levels.
const EXTEND_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    /// Sets the barrier slope `r = 1/2 - epsilon0`.
    pub epsilon0: f64,
    /// Largest depth allowed in breadth mode.
    pub breadth_cap: u32,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { epsilon0: DEFAULT_EPSILON0, breadth_cap: DEFAULT_BREADTH_CAP }
    }
}

impl CascadeConfig {
    pub fn new(epsilon0: f64, breadth_cap: u32) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "epsilon0 must lie in (0, 1/2), got {epsilon0}"
            )));
        }
        if breadth_cap > MAX_TREE_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "breadth cap {breadth_cap} exceeds {MAX_TREE_DEPTH}"
            )));
        }
        Ok(Self { epsilon0, breadth_cap })
    }

    pub fn barrier_slope(&self) -> f64 {
        0.5 - self.epsilon0
    }
}

/// One leaf of a simulated tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    pub index: u64,
    pub t: f64,
    pub v: f64,
    /// `NaN` when only real parts are simulated.
    pub x: f64,
}

/// Running extremes over every node of every generation simulated so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeExtremes {
    /// Minimum of `V` over all nodes, the root included.
    pub min_so_far: f64,
    /// Minimum of `V(u) - r ln |u|` over nodes with `|u| >= 1`; `+inf` at the root.
    pub barrier_margin: f64,
}

impl TreeExtremes {
    fn root() -> Self {
        Self { min_so_far: 0.0, barrier_margin: f64::INFINITY }
    }

    /// Whether some node satisfied `V(u) <= -x + r ln |u|`.
    pub fn barrier_crossed(&self, x: f64) -> bool {
        self.barrier_margin <= -x
    }
}

/// One generation of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelState {
    key: TreeKey,
    config: CascadeConfig,
    depth: u32,
    v: Vec<f64>,
    x: Vec<f64>,
    extremes: TreeExtremes,
}

impl LevelState {
    pub fn root(key: TreeKey, config: CascadeConfig) -> Self {
        Self {
            key,
            config,
            depth: 0,
            v: vec![0.0],
            x: vec![0.0],
            extremes: TreeExtremes::root(),
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn key(&self) -> TreeKey {
        self.key
    }

    pub fn config(&self) -> CascadeConfig {
        self.config
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn extremes(&self) -> TreeExtremes {
        self.extremes
    }

    pub fn min_so_far(&self) -> f64 {
        self.extremes.min_so_far
    }

    pub fn barrier_crossed(&self, x: f64) -> bool {
        self.extremes.barrier_crossed(x)
    }

    /// The next generation.
    pub fn extend(&self) -> Result<LevelState> {
        let depth = self.depth + 1;
        if depth > self.config.breadth_cap {
            return Err(Error::Capacity {
                what: "breadth level",
                depth,
                cap: self.config.breadth_cap,
            });
        }
        let parents = self.v.len();
        let mut v = vec![0.0; 2 * parents];
        let mut x = vec![0.0; 2 * parents];
        let key = self.key;
        let d = self.depth;
        let fill = |chunk: usize, vs: &mut [f64], xs: &mut [f64]| -> f64 {
            let base = chunk * EXTEND_CHUNK;
            let mut lo = f64::INFINITY;
            for (j, (vc, xc)) in vs.chunks_exact_mut(2).zip(xs.chunks_exact_mut(2)).enumerate() {
                let k = base + j;
                let inc = key.child_increments(d, k as u64);
                let (pv, px) = (self.v[k], self.x[k]);
                vc[0] = pv + inc.v[0];
                vc[1] = pv + inc.v[1];
                xc[0] = px + inc.x[0];
                xc[1] = px + inc.x[1];
                lo = lo.min(vc[0]).min(vc[1]);
            }
            lo
        };
        let generation_min = if parents >= 2 * EXTEND_CHUNK {
            v.par_chunks_mut(2 * EXTEND_CHUNK)
                .zip(x.par_chunks_mut(2 * EXTEND_CHUNK))
                .enumerate()
                .map(|(c, (vs, xs))| fill(c, vs, xs))
                .reduce(|| f64::INFINITY, f64::min)
        } else {
            fill(0, &mut v, &mut x)
        };
        let slope = self.config.barrier_slope();
        let extremes = TreeExtremes {
            min_so_far: self.extremes.min_so_far.min(generation_min),
            barrier_margin: self
                .extremes
                .barrier_margin
                .min(generation_min - slope * f64::from(depth).ln()),
        };
        Ok(LevelState { key, config: self.config, depth, v, x, extremes })
    }

    /// Leaves in dyadic order.
    pub fn leaves(&self) -> impl Iterator<Item = Leaf> + '_ {
        let scale = (self.v.len() as f64).recip();
        self.v.iter().zip(&self.x).enumerate().map(move |(k, (&v, &x))| Leaf {
            index: k as u64,
            t: k as f64 * scale,
            v,
            x,
        })
    }

    /// Regenerates the generation at `depth <= self.depth` of the same tree.
    pub fn ancestor(&self, depth: u32) -> Result<LevelState> {
        if depth > self.depth {
            return Err(Error::InvalidDepth { depth, reason: "ancestor deeper than level" });
        }
        simulate_breadth(depth, self.key, self.config)
    }

    /// `V` and `X` of the node at `(depth, index)`, recomputed along its ancestral line.
    pub fn node_value(&self, depth: u32, index: u64) -> (f64, f64) {
        node_value(self.key, depth, index)
    }

    /// Writes the binary dump: a header followed by little-endian `v` then `x`.
    pub fn write_dump<W: Write>(&self, params: &ModelParams, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&self.depth.to_le_bytes())?;
        for f in [params.gamma(), params.beta(), self.config.epsilon0] {
            w.write_all(&f.to_le_bytes())?;
        }
        w.write_all(&self.key.seed().to_le_bytes())?;
        w.write_all(&self.extremes.min_so_far.to_le_bytes())?;
        w.write_all(&self.extremes.barrier_margin.to_le_bytes())?;
        for f in self.v.iter().chain(&self.x) {
            w.write_all(&f.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<(ModelParams, LevelState)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Mismatch("not a level dump".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DUMP_VERSION {
            return Err(Error::Mismatch(format!("unsupported dump version {version}")));
        }
        let depth = read_u32(&mut r)?;
        if depth > MAX_TREE_DEPTH {
            return Err(Error::InvalidDepth { depth, reason: "dump depth out of range" });
        }
        let gamma = read_f64(&mut r)?;
        let beta = read_f64(&mut r)?;
        let epsilon0 = read_f64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let min_so_far = read_f64(&mut r)?;
        let barrier_margin = read_f64(&mut r)?;
        let len = 1usize << depth;
        let mut read_array = || -> Result<Vec<f64>> { (0..len).map(|_| read_f64(&mut r)).collect() };
        let v = read_array()?;
        let x = read_array()?;
        let params = ModelParams::new(gamma, beta)?;
        let config = CascadeConfig::new(epsilon0, DEFAULT_BREADTH_CAP.max(depth))?;
        let level = LevelState {
            key: TreeKey::new(seed),
            config,
            depth,
            v,
            x,
            extremes: TreeExtremes { min_so_far, barrier_margin },
        };
        Ok((params, level))
    }
}

const DUMP_MAGIC: &[u8; 4] = b"CLAB";
const DUMP_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// `V` and `X` of a single node, summed root to node in the same order as a
/// breadth simulation so the result is bit-identical.
pub fn node_value(key: TreeKey, depth: u32, index: u64) -> (f64, f64) {
    let (mut v, mut x) = (0.0, 0.0);
    for d in 0..depth {
        let parent = index >> (depth - d);
        let side = ((index >> (depth - d - 1)) & 1) as usize;
        let inc = key.child_increments(d, parent);
        v += inc.v[side];
        x += inc.x[side];
    }
    (v, x)
}

/// Breadth simulation up to generation `n`.
pub fn simulate_breadth(n: u32, key: TreeKey, config: CascadeConfig) -> Result<LevelState> {
    if n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let mut level = LevelState::root(key, config);
    for _ in 0..n {
        level = level.extend()?;
    }
    Ok(level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Breadth,
    Stream,
}

/// The result of [`simulate`].
#[derive(Debug)]
pub enum Simulation {
    Breadth(LevelState),
    Stream(StreamCursor),
}

impl Simulation {
    /// Drains the leaves in dyadic order and returns them with the tree extremes.
    pub fn for_each_leaf(self, mut f: impl FnMut(Leaf)) -> TreeExtremes {
        match self {
            Simulation::Breadth(level) => {
                level.leaves().for_each(&mut f);
                level.extremes()
            }
            Simulation::Stream(mut cursor) => {
                for leaf in cursor.by_ref() {
                    f(leaf);
                }
                cursor.extremes()
            }
        }
    }
}

pub fn simulate(n: u32, key: TreeKey, config: CascadeConfig, mode: Mode) -> Result<Simulation> {
    match mode {
        Mode::Breadth => simulate_breadth(n, key, config).map(Simulation::Breadth),
        Mode::Stream => StreamCursor::new(n, key, config, Components::Full).map(Simulation::Stream),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    Full,
    /// Only `V`; reads a prefix of each node stream.
    RealOnly,
}

/// Depth-first leaf iterator holding one root-to-leaf path.
#[derive(Debug, Clone)]
pub struct StreamCursor {
    key: TreeKey,
    depth: u32,
    components: Components,
    next: u64,
    end: u64,
    v: Vec<f64>,
    x: Vec<f64>,
    pending: Vec<ChildIncrements>,
    barrier_offsets: Vec<f64>,
    extremes: TreeExtremes,
}

impl StreamCursor {
    pub fn new(depth: u32, key: TreeKey, config: CascadeConfig, components: Components) -> Result<Self> {
        if depth > MAX_TREE_DEPTH {
            return Err(Error::InvalidDepth { depth, reason: "stream depth above 62" });
        }
        let slope = config.barrier_slope();
        let d = depth as usize;
        Ok(Self {
            key,
            depth,
            components,
            next: 0,
            end: 1u64 << depth,
            v: vec![0.0; d + 1],
            x: vec![0.0; d + 1],
            pending: vec![ChildIncrements::default(); d],
            barrier_offsets: (0..=d).map(|j| slope * (j as f64).ln()).collect(),
            extremes: TreeExtremes::root(),
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn is_complete(&self) -> bool {
        self.next == self.end
    }

    /// Extremes over the nodes visited so far; complete once the cursor is drained.
    pub fn extremes(&self) -> TreeExtremes {
        self.extremes
    }

    #[inline]
    fn enter(&mut self, d: usize) {
        let v = self.v[d];
        self.extremes.min_so_far = self.extremes.min_so_far.min(v);
        self.extremes.barrier_margin = self.extremes.barrier_margin.min(v - self.barrier_offsets[d]);
    }

    #[inline]
    fn descend(&mut self, d: usize, side: usize) {
        let inc = &self.pending[d];
        self.v[d + 1] = self.v[d] + inc.v[side];
        if self.components == Components::Full {
            self.x[d + 1] = self.x[d] + inc.x[side];
        }
        self.enter(d + 1);
    }

    /// Visits every remaining leaf without materializing [`Leaf`] values.
    pub fn drain(&mut self) -> TreeExtremes {
        while self.advance() {}
        self.extremes
    }

    #[inline]
    fn advance(&mut self) -> bool {
        if self.next == self.end {
            return false;
        }
        let k = self.next;
        let n = self.depth as usize;
        let start = if k == 0 {
            0
        } else {
            let q = k.trailing_zeros() as usize;
            let d = n - q - 1;
            self.descend(d, 1);
            d + 1
        };
        for d in start..n {
            let parent = k >> (n - d);
            self.pending[d] = match self.components {
                Components::Full => self.key.child_increments(d as u32, parent),
                Components::RealOnly => ChildIncrements {
                    v: self.key.real_child_increments(d as u32, parent),
                    x: [f64::NAN; 2],
                },
            };
            self.descend(d, 0);
        }
        self.next += 1;
        true
    }
}

impl Iterator for StreamCursor {
    type Item = Leaf;

    fn next(&mut self) -> Option<Leaf> {
        let k = self.next;
        if !self.advance() {
            return None;
        }
        let n = self.depth as usize;
        Some(Leaf {
            index: k,
            t: k as f64 / self.end as f64,
            v: self.v[n],
            x: if self.components == Components::Full { self.x[n] } else { f64::NAN },
        })
    }
}

/// Masses `M_N(u)` of the subtrees rooted at every node `u` of generation
/// `l`, summed over the leaves of `leaf` (generation `N`).
pub fn subtree_masses(leaf: &LevelState, l: u32, params: &ModelParams) -> Result<Vec<Complex64>> {
    let anc = leaf.ancestor(l)?;
    subtree_masses_with(leaf, &anc, params)
}

/// As [`subtree_masses`] with the ancestor generation supplied.
pub fn subtree_masses_with(
    leaf: &LevelState,
    ancestors: &LevelState,
    params: &ModelParams,
) -> Result<Vec<Complex64>> {
    if ancestors.depth > leaf.depth {
        return Err(Error::InvalidDepth {
            depth: ancestors.depth,
            reason: "ancestor level deeper than leaf level",
        });
    }
    if ancestors.key != leaf.key {
        return Err(Error::Mismatch("levels come from different trees".into()));
    }
    let block = 1usize << (leaf.depth - ancestors.depth);
    Ok(leaf
        .v
        .chunks_exact(block)
        .zip(leaf.x.chunks_exact(block))
        .zip(ancestors.v.iter().zip(&ancestors.x))
        .map(|((vs, xs), (&vu, &xu))| {
            vs.iter()
                .zip(xs)
                .map(|(&vz, &xz)| params.weight(vz - vu, xz - xu))
                .collect::<ComplexSum>()
                .value()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanVar;
    use crate::weights::{REAL_MEAN, REAL_SD};

    fn key(s: u64) -> TreeKey {
        TreeKey::for_trial(77, s)
    }

    #[test]
    fn root_level() {
        let r = LevelState::root(key(0), CascadeConfig::default());
        assert_eq!(r.depth(), 0);
        assert_eq!(r.v(), &[0.0]);
        assert_eq!(r.x(), &[0.0]);
        assert_eq!(r.min_so_far(), 0.0);
        assert!(!r.barrier_crossed(5.0));
        assert!(!r.barrier_crossed(0.0));
    }

    #[test]
    fn extend_doubles_and_is_deterministic() {
        let l3 = simulate_breadth(3, key(1), CascadeConfig::default()).unwrap();
        let l4 = l3.extend().unwrap();
        assert_eq!(l4.depth(), 4);
        assert_eq!(l4.len(), 16);
        assert_eq!(l4.x().len(), 16);
        assert_eq!(l4, simulate_breadth(4, key(1), CascadeConfig::default()).unwrap());
        assert_ne!(l4.v(), simulate_breadth(4, key(2), CascadeConfig::default()).unwrap().v());
        assert!(l4.min_so_far() <= l3.min_so_far());
    }

    #[test]
    fn capacity_is_enforced() {
        let cfg = CascadeConfig::new(0.05, 3).unwrap();
        let l3 = simulate_breadth(3, key(0), cfg).unwrap();
        assert!(matches!(l3.extend(), Err(Error::Capacity { depth: 4, .. })));
        assert!(matches!(simulate_breadth(30, key(0), CascadeConfig::default()), Err(Error::Capacity { .. })));
        assert!(simulate(30, key(0), CascadeConfig::default(), Mode::Stream).is_ok());
        assert!(simulate(63, key(0), CascadeConfig::default(), Mode::Stream).is_err());
    }

    #[test]
    fn child_increment_law() {
        let (mut dv, mut dx) = (MeanVar::new(), MeanVar::new());
        let mut t = 0;
        while dv.count() < 1_000_000 {
            let k = key(1000 + t);
            let parent = simulate_breadth(9, k, CascadeConfig::default()).unwrap();
            let child = parent.extend().unwrap();
            for (j, (&v, &x)) in child.v().iter().zip(child.x()).enumerate() {
                dv.push(v - parent.v()[j / 2]);
                dx.push(x - parent.x()[j / 2]);
            }
            t += 1;
        }
        let n = dv.count() as f64;
        assert!((dv.mean() - REAL_MEAN).abs() < 4.0 * dv.std_error());
        assert!(dx.mean().abs() < 4.0 * dx.std_error());
        let var_se = (2.0 / n).sqrt();
        assert!((dv.variance() - REAL_SD * REAL_SD).abs() < 4.0 * REAL_MEAN * var_se);
        assert!((dx.variance() - 1.0).abs() < 4.0 * var_se);
    }

    #[test]
    fn stream_matches_breadth() {
        for n in [0, 1, 5, 12] {
            let level = simulate_breadth(n, key(n as u64), CascadeConfig::default()).unwrap();
            let cursor = StreamCursor::new(n, key(n as u64), CascadeConfig::default(), Components::Full).unwrap();
            let leaves: Vec<Leaf> = cursor.clone().collect();
            assert_eq!(leaves.len(), level.len());
            for (a, b) in leaves.iter().zip(level.leaves()) {
                assert_eq!(a, &b);
            }
            let mut c = cursor;
            assert_eq!(c.drain(), level.extremes());
            let mut real = StreamCursor::new(n, key(n as u64), CascadeConfig::default(), Components::RealOnly).unwrap();
            let vs: Vec<f64> = real.by_ref().map(|l| l.v).collect();
            assert_eq!(vs, level.v());
            assert_eq!(real.extremes(), level.extremes());
        }
    }

    #[test]
    fn node_value_agrees_with_levels() {
        let level = simulate_breadth(7, key(3), CascadeConfig::default()).unwrap();
        for k in [0u64, 1, 37, 127] {
            assert_eq!(level.node_value(7, k), (level.v()[k as usize], level.x()[k as usize]));
        }
        let anc = level.ancestor(4).unwrap();
        assert_eq!(level.node_value(4, 9), (anc.v()[9], anc.x()[9]));
    }

    #[test]
    fn barrier_flags_are_monotone() {
        let level = simulate_breadth(10, key(4), CascadeConfig::default()).unwrap();
        let margin = level.extremes().barrier_margin;
        let xs: Vec<f64> = (-40..40).map(|i| f64::from(i) * 0.25).collect();
        for w in xs.windows(2) {
            if level.barrier_crossed(w[1]) {
                assert!(level.barrier_crossed(w[0]));
            }
        }
        assert!(level.barrier_crossed(-margin));
        assert!(!level.barrier_crossed(-margin + 1e-9));
    }

    #[test]
    fn subtree_mass_cases() {
        let p = ModelParams::new(0.7, 0.3).unwrap();
        let level = simulate_breadth(8, key(5), CascadeConfig::default()).unwrap();
        let full = subtree_masses(&level, 8, &p).unwrap();
        assert!(full.iter().all(|m| *m == Complex64::new(1.0, 0.0)));
        let total: ComplexSum = level.leaves().map(|l| p.weight(l.v, l.x)).collect();
        let root = subtree_masses(&level, 0, &p).unwrap();
        assert_eq!(root.len(), 1);
        assert!((root[0] - total.value()).norm() <= 1e-12 * total.value().norm().max(1.0));
        for l in [1, 3, 6] {
            let anc = level.ancestor(l).unwrap();
            let masses = subtree_masses_with(&level, &anc, &p).unwrap();
            let recombined: ComplexSum = anc
                .leaves()
                .zip(&masses)
                .map(|(u, m)| p.weight(u.v, u.x) * m)
                .collect();
            let err = (recombined.value() - total.value()).norm();
            assert!(err <= 1e-10 * total.value().norm(), "l = {l}: {err}");
        }
        assert!(subtree_masses(&level, 9, &p).is_err());
        let other = simulate_breadth(2, key(6), CascadeConfig::default()).unwrap();
        assert!(subtree_masses_with(&level, &other, &p).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let p = ModelParams::new(0.7, 0.3).unwrap();
        let level = simulate_breadth(5, key(8), CascadeConfig::default()).unwrap();
        let mut buf = Vec::new();
        level.write_dump(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 * 8 + 8 + 16 + 2 * 32 * 8);
        assert_eq!(&buf[68..76], &level.v()[1].to_le_bytes());
        let (q, back) = LevelState::read_dump(&buf[..]).unwrap();
        assert_eq!(q, p);
        assert_eq!(back.v(), level.v());
        assert_eq!(back.x(), level.x());
        assert_eq!(back.extremes(), level.extremes());
        assert_eq!(back.extend().unwrap().v(), level.extend().unwrap().v());
        assert!(LevelState::read_dump(&buf[..20]).is_err());
    }
}
