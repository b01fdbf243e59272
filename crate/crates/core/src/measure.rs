//! The partial-sum process `t -> M_n[0, t]` on the dyadic grid and the
//! functionals computed from it.
//!
//! With the density `2^n dx` on each leaf cell, the mass of the cell of leaf
//! `z` is exactly its weight `exp(-gamma V(z) + i beta sqrt(2 ln 2) X(z))`, so
//! `sums[k]` is the compensated sum of the first `k` leaf weights.
//!
//! Relative errors of the exact identities are measured against the absolute
//! mass `sum |w_z|`, which bounds every partial sum of the process.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cascade::{node_value, Leaf, LevelState};
use crate::error::{Error, Result};
use crate::geometry::{bounding_box_diameter, convex_hull, hull_diameter, merge_hulls};
use crate::summation::{ComplexSum, NeumaierSum};
use crate::weights::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSumProcess {
    depth: u32,
    sums: Vec<Complex64>,
    abs_mass: f64,
    params: ModelParams,
}

impl PartialSumProcess {
    /// Builds the process from the leaves of a breadth level.
    pub fn from_level(level: &LevelState, params: &ModelParams) -> Self {
        Self::from_leaves(level.depth(), level.leaves(), params)
            .expect("a level yields its leaves in order")
    }

    /// Builds the process from a leaf stream, which must be in dyadic order
    /// and contain exactly `2^depth` leaves.
    pub fn from_leaves<I>(depth: u32, leaves: I, params: &ModelParams) -> Result<Self>
    where
        I: IntoIterator<Item = Leaf>,
    {
        let len = 1usize << depth;
        let mut sums = Vec::with_capacity(len + 1);
        sums.push(Complex64::new(0.0, 0.0));
        let mut run = ComplexSum::new();
        let mut abs = NeumaierSum::new();
        for (expected, leaf) in leaves.into_iter().enumerate() {
            if leaf.index != expected as u64 || expected >= len {
                return Err(Error::OutOfOrder { expected: expected as u64, got: leaf.index });
            }
            let w = params.weight(leaf.v, leaf.x);
            run.add(w);
            abs.add(w.norm());
            sums.push(run.value());
        }
        if sums.len() != len + 1 {
            return Err(Error::Mismatch(format!(
                "stream ended after {} of {len} leaves",
                sums.len() - 1
            )));
        }
        Ok(Self { depth, sums, abs_mass: abs.value(), params: *params })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// `sums[k] = M_n[0, k / 2^n]`, `2^n + 1` entries.
    pub fn sums(&self) -> &[Complex64] {
        &self.sums
    }

    pub fn total_mass(&self) -> Complex64 {
        self.sums[self.sums.len() - 1]
    }

    /// `sum_z |w_z|`.
    pub fn abs_mass(&self) -> f64 {
        self.abs_mass
    }

    /// The process divided by `factor` (e.g. `mean_factor^n`).
    pub fn scaled(mut self, factor: f64) -> Self {
        let inv = factor.recip();
        self.sums.iter_mut().for_each(|s| *s *= inv);
        self.abs_mass *= inv;
        self
    }

    /// Increment `M[(k) 2^-l, (k+1) 2^-l]` of the block `k` at level `l`.
    #[inline]
    pub fn block_increment(&self, l: u32, k: usize) -> Complex64 {
        let w = 1usize << (self.depth - l);
        self.sums[(k + 1) * w] - self.sums[k * w]
    }

    fn check_level(&self, l: u32) -> Result<()> {
        if l > self.depth {
            Err(Error::InvalidDepth { depth: l, reason: "level deeper than process" })
        } else {
            Ok(())
        }
    }
}

/// Increments of a process, at most `2 ulp`-level off; recovers leaf weights.
pub fn leaf_increments(proc: &PartialSumProcess) -> Vec<Complex64> {
    proc.sums.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Checks `M_{n+1} = T(0) M_n^{(0)} + T(1) M_n^{(1)}` on shared randomness,
/// half-interval by half-interval. Returns the larger relative error.
pub fn verify_cascade_recursion(
    parent: &PartialSumProcess,
    masses: &[Complex64],
    first_gen: &LevelState,
) -> Result<f64> {
    if parent.depth < 1 {
        return Err(Error::Mismatch("recursion needs a process of depth at least 1".into()));
    }
    if masses.len() != 2 || first_gen.depth() != 1 {
        return Err(Error::Mismatch(format!(
            "recursion needs the two generation-1 masses and nodes, got {} masses at depth {}",
            masses.len(),
            first_gen.depth()
        )));
    }
    let p = parent.params;
    let mut worst: f64 = 0.0;
    for (side, mass) in masses.iter().enumerate() {
        let half = parent.block_increment(1, side);
        let t = p.weight(first_gen.v()[side], first_gen.x()[side]);
        worst = worst.max((half - t * mass).norm());
    }
    Ok(worst / parent.abs_mass.max(f64::MIN_POSITIVE))
}

/// Evaluates `M_n[0, t_u]` as a prefix sum and as the sum over the left
/// subtrees hanging off the path to `u`. Returns `(prefix, decomposition)`.
pub fn left_decomposition(
    level: &LevelState,
    proc: &PartialSumProcess,
    u: u64,
) -> Result<(Complex64, Complex64)> {
    let n = level.depth();
    if proc.depth != n {
        return Err(Error::Mismatch("process and level depths differ".into()));
    }
    if u >= 1u64 << n {
        return Err(Error::InvalidParameter(format!("leaf index {u} outside depth {n}")));
    }
    let p = proc.params;
    let key = level.key();
    let mut sum = ComplexSum::new();
    for k in 0..n {
        let on_path = u >> (n - k - 1);
        if on_path & 1 == 0 {
            continue;
        }
        let left = on_path - 1;
        let (vl, xl) = node_value(key, k + 1, left);
        let block = 1usize << (n - k - 1);
        let lo = left as usize * block;
        let mass: ComplexSum = level.v()[lo..lo + block]
            .iter()
            .zip(&level.x()[lo..lo + block])
            .map(|(&vz, &xz)| p.weight(vz - vl, xz - xl))
            .collect();
        sum.add(p.weight(vl, xl) * mass.value());
    }
    Ok((proc.sums[u as usize], sum.value()))
}

/// Absolute discrepancy between the two evaluations of [`left_decomposition`].
pub fn verify_left_decomposition(level: &LevelState, proc: &PartialSumProcess, u: u64) -> Result<f64> {
    let (a, b) = left_decomposition(level, proc, u)?;
    Ok((a - b).norm())
}

/// `||M_{n,p}||_inf`: the largest ray-wise sum of left-subtree mass moduli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupFunctional {
    pub value: f64,
    pub n: u32,
    pub p: u32,
    /// Leaf of generation `n` attaining the maximum.
    pub argmax: u64,
}

/// Computes `max_{|z|=n} [ sum over the steps where the ray to z turns right
/// of |M_{n+p}[left sibling]| + |M_{n+p}[z]| ]` from the process at depth
/// `n + p`, in one pass over the generation-`n` nodes with `O(n)` state.
pub fn sup_functional(proc: &PartialSumProcess, n: u32) -> Result<SupFunctional> {
    proc.check_level(n)?;
    let p = proc.depth - n;
    let nu = n as usize;
    // acc[d] = sum of left-sibling contributions at depths 1..=d along the current ray.
    let mut acc = vec![0.0f64; nu + 1];
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    let count = 1u64 << n;
    for j in 0..count {
        let from = if j == 0 { 1 } else { nu - j.trailing_zeros() as usize };
        for d in from..=nu {
            let node = j >> (nu - d);
            let c = if node & 1 == 1 {
                proc.block_increment(d as u32, (node - 1) as usize).norm()
            } else {
                0.0
            };
            acc[d] = acc[d - 1] + c;
        }
        let value = acc[nu] + proc.block_increment(n, j as usize).norm();
        if value > best {
            best = value;
            argmax = j;
        }
    }
    Ok(SupFunctional { value: best, n, p, argmax })
}

/// `max_{1 <= k <= 2^n} |M[0, k 2^-n]|` for a process of depth at least `n`.
pub fn max_dyadic_partial_sum(proc: &PartialSumProcess, n: u32) -> Result<f64> {
    proc.check_level(n)?;
    let w = 1usize << (proc.depth - n);
    Ok((1..=(1usize << n)).map(|k| proc.sums[k * w].norm()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMode {
    /// Convex hull and rotating calipers.
    #[default]
    Exact,
    /// Bounding-box diagonal; overestimates by at most `sqrt(2)`.
    BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOscillations {
    pub level: u32,
    pub diameters: Vec<f64>,
    /// Largest block diameter; a lower bound on `sup_{|t-s| <= 2^-l} |M[s,t]|`.
    pub lo: f64,
    /// `3 lo`, an upper bound on the same supremum.
    pub hi: f64,
    pub mode: DiameterMode,
}

/// Diameters of the paths `{sums[j] : j in block}` over the `2^l` dyadic blocks.
pub fn block_oscillations(proc: &PartialSumProcess, l: u32, mode: DiameterMode) -> Result<BlockOscillations> {
    proc.check_level(l)?;
    let w = 1usize << (proc.depth - l);
    let diameters: Vec<f64> = (0..1usize << l)
        .map(|k| {
            let pts = &proc.sums[k * w..=(k + 1) * w];
            match mode {
                DiameterMode::Exact => hull_diameter(&convex_hull(&mut pts.to_vec())),
                DiameterMode::BoundingBox => bounding_box_diameter(pts),
            }
        })
        .collect();
    let lo = diameters.iter().copied().fold(0.0, f64::max);
    Ok(BlockOscillations { level: l, diameters, lo, hi: 3.0 * lo, mode })
}

/// Largest exact block diameter for every level in `levels`, computed by
/// building the hulls at the finest level once and merging them upward.
pub fn oscillation_profile(proc: &PartialSumProcess, levels: &[u32]) -> Result<Vec<(u32, f64)>> {
    let Some(&finest) = levels.iter().max() else {
        return Ok(Vec::new());
    };
    proc.check_level(finest)?;
    let coarsest = *levels.iter().min().expect("nonempty");
    let w = 1usize << (proc.depth - finest);
    let mut hulls: Vec<Vec<Complex64>> = (0..1usize << finest)
        .map(|k| convex_hull(&mut proc.sums[k * w..=(k + 1) * w].to_vec()))
        .collect();
    let mut out = Vec::new();
    let mut level = finest;
    loop {
        if levels.contains(&level) {
            let lo = hulls.iter().map(|h| hull_diameter(h)).fold(0.0, f64::max);
            out.push((level, lo));
        }
        if level == coarsest {
            break;
        }
        hulls = hulls.chunks_exact(2).map(|pair| merge_hulls(&pair[0], &pair[1])).collect();
        level -= 1;
    }
    out.reverse();
    Ok(out)
}

/// Exact `max |sums[j'] - sums[j]|` over `0 < j' - j <= window`, by pair scan.
pub fn windowed_sup_bruteforce(proc: &PartialSumProcess, window: usize) -> f64 {
    let s = &proc.sums;
    let mut best: f64 = 0.0;
    for i in 0..s.len() {
        for j in i + 1..s.len().min(i + window + 1) {
            best = best.max((s[j] - s[i]).norm());
        }
    }
    best
}

/// `sum_k |M[k 2^-l, (k+1) 2^-l]|`.
pub fn total_variation(proc: &PartialSumProcess, l: u32) -> Result<f64> {
    proc.check_level(l)?;
    let s: NeumaierSum = (0..1usize << l).map(|k| proc.block_increment(l, k).norm()).collect();
    Ok(s.value())
}

/// [`total_variation`] for every level `0..=depth`.
pub fn variation_profile(proc: &PartialSumProcess) -> Vec<f64> {
    (0..=proc.depth).map(|l| total_variation(proc, l).expect("level in range")).collect()
}

/// Statistics of a leaf stream that need only `O(1)` memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamSummary {
    pub leaves: u64,
    pub total_mass: Complex64,
    pub abs_mass: f64,
    /// `max_k |M[0, k 2^-n]|`.
    pub max_partial_sum: f64,
}

impl StreamSummary {
    pub fn of<I: IntoIterator<Item = Leaf>>(leaves: I, params: &ModelParams) -> Result<Self> {
        let mut run = ComplexSum::new();
        let mut abs = NeumaierSum::new();
        let mut max_partial_sum: f64 = 0.0;
        let mut count = 0u64;
        for leaf in leaves {
            if leaf.index != count {
                return Err(Error::OutOfOrder { expected: count, got: leaf.index });
            }
            let w = params.weight(leaf.v, leaf.x);
            run.add(w);
            abs.add(w.norm());
            max_partial_sum = max_partial_sum.max(run.value().norm());
            count += 1;
        }
        Ok(Self { leaves: count, total_mass: run.value(), abs_mass: abs.value(), max_partial_sum })
    }
}

/// Totals of one process, per level, for export alongside the raw path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSummary {
    pub depth: u32,
    pub total_mass: [f64; 2],
    pub abs_mass: f64,
    /// `TV(l)` for `l = 0..=depth`.
    pub total_variation: Vec<f64>,
    /// `[lo, hi]` oscillation bracket for `l = 0..=depth`.
    pub oscillation: Vec<[f64; 2]>,
}

pub fn process_summary(proc: &PartialSumProcess) -> ProcessSummary {
    let levels: Vec<u32> = (0..=proc.depth).collect();
    let oscillation = oscillation_profile(proc, &levels)
        .expect("levels in range")
        .into_iter()
        .map(|(_, lo)| [lo, 3.0 * lo])
        .collect();
    let m = proc.total_mass();
    ProcessSummary {
        depth: proc.depth,
        total_mass: [m.re, m.im],
        abs_mass: proc.abs_mass,
        total_variation: variation_profile(proc),
        oscillation,
    }
}

/// Writes `k,t,re,im` for every grid point `t = k / 2^n`.
pub fn write_process_csv<W: std::io::Write>(proc: &PartialSumProcess, mut w: W) -> Result<()> {
    writeln!(w, "k,t,re,im")?;
    let scale = (1u64 << proc.depth) as f64;
    for (k, s) in proc.sums.iter().enumerate() {
        writeln!(w, "{k},{},{:e},{:e}", k as f64 / scale, s.re, s.im)?;
    }
    Ok(())
}
