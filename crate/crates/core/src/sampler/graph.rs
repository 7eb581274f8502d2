//! Percolation graphs on finite boxes.
//!
//! Long edges are generated one displacement class at a time. For each
//! canonical displacement `v` (first non-zero coordinate positive) the box
//! holds `N_v = prod_i (2L + 1 - |v_i|)` pairs `(x, x + v)`. We draw
//! `K_v ~ Binomial(N_v, p(v))` and pick `K_v` distinct pair indices uniformly,
//! which has the same law as independent Bernoulli trials per pair but costs
//! `O(#classes + #edges)`.
//!
//! Pair index `j` in class `v` is decoded in lexicographic order of the smaller
//! endpoint `x`: coordinate `i` ranges over `[-L + max(0, -v_i), L - max(0, v_i)]`
//! and the first coordinate is the most significant digit.
//!
//! Coupled sampling over an ascending list of `beta` values selects candidate
//! pairs at the largest `beta` and attaches to each candidate the uniform
//! `U = p_top * u(seed, v, x)` where `u` is the counter-based uniform for the
//! pair. Conditioned on selection `U` is uniform on `[0, p_top)`, so an edge is
//! present at level `beta_j` iff `U < p_j`: marginals are exact and the edge
//! sets are nested.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Vertex};
use crate::model::{canonical_displacement, is_nearest_neighbor, prob_from_q, ModelParams};
use crate::rng::{self, encode_lattice, PhiloxStream, DOMAIN_CLASS, DOMAIN_PAIR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Upper bound on the estimated bytes of all emitted edge lists.
    pub memory_cap_bytes: u64,
    /// Below this ratio `K/N` indices are drawn with Floyd's algorithm and
    /// sorted; above it a partial Fisher-Yates shuffle is used.
    pub dense_crossover: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            memory_cap_bytes: 1536 << 20,
            dense_crossover: 1.0 / 64.0,
        }
    }
}

/// An immutable sample: nearest-neighbour edges are implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub params: ModelParams,
    pub lattice: LatticeBox,
    pub seed: u64,
    /// Unordered pairs `(a, b)` with `a < b`, sorted.
    pub long_edges: Vec<(Vertex, Vertex)>,
}

impl GraphSample {
    /// A sample with an explicit long-edge list (used by tests and oracles).
    pub fn from_edges(
        params: ModelParams,
        lattice: LatticeBox,
        seed: u64,
        edges: impl IntoIterator<Item = (Vertex, Vertex)>,
    ) -> Result<Self> {
        let n = lattice.len() as u64;
        let mut out: Vec<(Vertex, Vertex)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Param(format!("self-loop at vertex {a}")));
            }
            if a as u64 >= n || b as u64 >= n {
                return Err(Error::Param(format!("edge ({a}, {b}) leaves the box")));
            }
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let disp: Vec<i64> = lattice
                .coords(b)
                .iter()
                .zip(lattice.coords(a))
                .map(|(y, x)| y - x)
                .collect();
            if is_nearest_neighbor(&disp) {
                continue;
            }
            out.push((a, b));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self {
            params,
            lattice,
            seed,
            long_edges: out,
        })
    }

    /// Long edges as coordinate pairs.
    pub fn edge_coords(&self) -> impl Iterator<Item = (Vec<i64>, Vec<i64>)> + '_ {
        self.long_edges
            .iter()
            .map(|&(a, b)| (self.lattice.coords(a), self.lattice.coords(b)))
    }

    /// Number of long edges whose displacement is `v` or `-v`.
    pub fn class_count(&self, v: &[i64]) -> usize {
        let canon = canonical_displacement(v);
        let mut x = vec![0; self.lattice.d()];
        let mut y = vec![0; self.lattice.d()];
        self.long_edges
            .iter()
            .filter(|&&(a, b)| {
                self.lattice.coords_into(a, &mut x);
                self.lattice.coords_into(b, &mut y);
                y.iter().zip(&x).zip(&canon).all(|((yy, xx), c)| yy - xx == *c)
            })
            .count()
    }
}

/// Per-class geometry: pair count and decoding of pair indices.
struct ClassGeometry<'a> {
    lattice: &'a LatticeBox,
    v: &'a [i64],
    counts: Vec<u64>,
    starts: Vec<i64>,
}

impl<'a> ClassGeometry<'a> {
    fn new(lattice: &'a LatticeBox, v: &'a [i64]) -> Self {
        let side = lattice.side();
        let l = lattice.radius() as i64;
        let counts = v.iter().map(|c| side - c.unsigned_abs()).collect();
        let starts = v.iter().map(|&c| -l + (-c).max(0)).collect();
        Self {
            lattice,
            v,
            counts,
            starts,
        }
    }

    fn pair_count(&self) -> u64 {
        self.counts.iter().product()
    }

    fn decode(&self, mut j: u64, x: &mut [i64]) {
        for i in (0..self.v.len()).rev() {
            x[i] = self.starts[i] + (j % self.counts[i]) as i64;
            j /= self.counts[i];
        }
    }

    fn endpoints(&self, x: &[i64], y: &mut [i64]) -> (Vertex, Vertex) {
        for i in 0..x.len() {
            y[i] = x[i] + self.v[i];
        }
        (self.lattice.index(x).unwrap(), self.lattice.index(y).unwrap())
    }
}

/// Canonical displacements of the box in lexicographic order, excluding
/// nearest neighbours. Indexed by position in `[-2L, 2L]^d`.
struct ClassSpace {
    d: usize,
    span: u64,
    reach: i64,
}

impl ClassSpace {
    fn new(lattice: &LatticeBox) -> Self {
        let reach = 2 * lattice.radius() as i64;
        Self {
            d: lattice.d(),
            span: 2 * reach as u64 + 1,
            reach,
        }
    }

    fn total(&self) -> u64 {
        self.span.pow(self.d as u32)
    }

    /// Decodes slot `k` into `v` and reports whether it is a sampled class.
    fn decode(&self, mut k: u64, v: &mut [i64]) -> bool {
        for i in (0..self.d).rev() {
            v[i] = (k % self.span) as i64 - self.reach;
            k /= self.span;
        }
        match v.iter().find(|&&c| c != 0) {
            Some(&c) if c > 0 => !is_nearest_neighbor(v),
            _ => false,
        }
    }
}

const CHUNK: u64 = 1 << 14;

fn level_probs(levels: &[ModelParams], q: f64) -> Vec<f64> {
    levels.iter().map(|p| prob_from_q(p.beta(), q)).collect()
}

fn check_levels(levels: &[ModelParams], lattice: &LatticeBox) -> Result<()> {
    let first = levels
        .first()
        .ok_or_else(|| Error::Param("at least one beta level is required".into()))?;
    if first.d() != lattice.d() {
        return Err(Error::Param(format!(
            "box dimension {} differs from model dimension {}",
            lattice.d(),
            first.d()
        )));
    }
    for w in levels.windows(2) {
        if w[1].d() != w[0].d() || w[1].s() != w[0].s() || w[1].norm() != w[0].norm() || w[1].kernel() != w[0].kernel() {
            return Err(Error::Param("coupled levels must share d, s, norm and kernel".into()));
        }
        if w[1].beta() < w[0].beta() {
            return Err(Error::Param("coupled beta values must be ascending".into()));
        }
    }
    Ok(())
}

/// Expected total number of stored edges across all levels, with a generous
/// fluctuation margin.
fn estimate_edges(levels: &[ModelParams], lattice: &LatticeBox) -> f64 {
    let space = ClassSpace::new(lattice);
    let params = &levels[0];
    let chunks = space.total().div_ceil(CHUNK);
    let (mean, var) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut v = vec![0i64; space.d];
            let mut acc = (0.0, 0.0);
            for k in c * CHUNK..((c + 1) * CHUNK).min(space.total()) {
                if !space.decode(k, &mut v) {
                    continue;
                }
                let n = ClassGeometry::new(lattice, &v).pair_count() as f64;
                for p in level_probs(levels, params.q(&v)) {
                    acc.0 += n * p;
                    acc.1 += n * p * (1.0 - p);
                }
            }
            acc
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    mean + 8.0 * var.sqrt() + 64.0
}

/// Draws `k` distinct values from `0..n`, sorted ascending.
fn select_indices(n: u64, k: u64, rng: &mut PhiloxStream, crossover: f64) -> Vec<u64> {
    debug_assert!(k <= n);
    if k == n {
        return (0..n).collect();
    }
    let mut out: Vec<u64> = if (k as f64) < crossover * n as f64 {
        // Floyd's algorithm
        let mut set = std::collections::HashSet::with_capacity(k as usize);
        for j in n - k..n {
            let t = rng.below(j + 1);
            if !set.insert(t) {
                set.insert(j);
            }
        }
        set.into_iter().collect()
    } else {
        let mut pool: Vec<u64> = (0..n).collect();
        for i in 0..k as usize {
            let j = i + rng.below(n - i as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k as usize);
        pool
    };
    out.sort_unstable();
    out
}

fn sample_levels(
    levels: &[ModelParams],
    lattice: &LatticeBox,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<Vec<(Vertex, Vertex)>>> {
    check_levels(levels, lattice)?;
    let expected = estimate_edges(levels, lattice);
    let bytes = expected * std::mem::size_of::<(Vertex, Vertex)>() as f64;
    if bytes > cfg.memory_cap_bytes as f64 {
        return Err(Error::Resource(format!(
            "estimated {:.0} long edges ({:.2} GiB) exceed the memory cap of {:.2} GiB",
            expected,
            bytes / (1u64 << 30) as f64,
            cfg.memory_cap_bytes as f64 / (1u64 << 30) as f64
        )));
    }

    let class_key = rng::domain_key(seed, DOMAIN_CLASS);
    let pair_key = rng::domain_key(seed, DOMAIN_PAIR);
    let params = &levels[0];
    let space = ClassSpace::new(lattice);
    let n_levels = levels.len();
    let chunks = space.total().div_ceil(CHUNK);

    let parts: Vec<Vec<Vec<(Vertex, Vertex)>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut out = vec![Vec::new(); n_levels];
            let mut v = vec![0i64; space.d];
            let mut x = vec![0i64; space.d];
            let mut y = vec![0i64; space.d];
            for k in c * CHUNK..((c + 1) * CHUNK).min(space.total()) {
                if !space.decode(k, &mut v) {
                    continue;
                }
                let probs = level_probs(levels, params.q(&v));
                let p_top = probs[n_levels - 1];
                if p_top <= 0.0 {
                    continue;
                }
                let geom = ClassGeometry::new(lattice, &v);
                let n = geom.pair_count();
                let code = encode_lattice(&v).expect("box radius checked against encoding range");
                let mut stream = PhiloxStream::new(class_key, code);
                let count = if p_top >= 1.0 {
                    n
                } else {
                    Binomial::new(n, p_top)
                        .expect("probability in (0, 1)")
                        .sample(&mut stream)
                };
                if count == 0 {
                    continue;
                }
                for j in select_indices(n, count, &mut stream, cfg.dense_crossover) {
                    geom.decode(j, &mut x);
                    let edge = geom.endpoints(&x, &mut y);
                    let first = if n_levels == 1 {
                        0
                    } else {
                        let xcode = encode_lattice(&x).expect("box coordinates encodable");
                        let u = rng::unit_f64(rng::block(pair_key, code, xcode)) * p_top;
                        probs.iter().position(|&p| u < p).unwrap_or(n_levels - 1)
                    };
                    for level in out.iter_mut().skip(first) {
                        level.push(edge);
                    }
                }
            }
            out
        })
        .collect();

    let mut levels_out: Vec<Vec<(Vertex, Vertex)>> = (0..n_levels)
        .map(|l| {
            let total = parts.iter().map(|p| p[l].len()).sum();
            Vec::with_capacity(total)
        })
        .collect();
    for part in parts {
        for (dst, src) in levels_out.iter_mut().zip(part) {
            dst.extend(src);
        }
    }
    levels_out.par_iter_mut().for_each(|e| e.par_sort_unstable());
    Ok(levels_out)
}

pub fn sample_graph(params: &ModelParams, lattice: &LatticeBox, seed: u64) -> Result<GraphSample> {
    sample_graph_with(params, lattice, seed, &SamplerConfig::default())
}

pub fn sample_graph_with(
    params: &ModelParams,
    lattice: &LatticeBox,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<GraphSample> {
    let mut edges = sample_levels(std::slice::from_ref(params), lattice, seed, cfg)?;
    Ok(GraphSample {
        params: params.clone(),
        lattice: *lattice,
        seed,
        long_edges: edges.pop().unwrap(),
    })
}

/// Monotonically coupled samples for ascending `beta` values sharing the other parameters.
pub fn sample_graph_coupled(
    levels: &[ModelParams],
    lattice: &LatticeBox,
    seed: u64,
) -> Result<Vec<GraphSample>> {
    sample_graph_coupled_with(levels, lattice, seed, &SamplerConfig::default())
}

pub fn sample_graph_coupled_with(
    levels: &[ModelParams],
    lattice: &LatticeBox,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<GraphSample>> {
    let edges = sample_levels(levels, lattice, seed, cfg)?;
    Ok(levels
        .iter()
        .zip(edges)
        .map(|(p, e)| GraphSample {
            params: p.clone(),
            lattice: *lattice,
            seed,
            long_edges: e,
        })
        .collect())
}

/// Reference generator: one Bernoulli trial per vertex pair, edge present iff
/// `u(seed, v, x) < p(v)` with the same per-pair uniforms as the coupled
/// sampler. Costs `O(|box|^2)`; refuses boxes with more than `10^8` pairs.
pub fn sample_graph_per_pair(params: &ModelParams, lattice: &LatticeBox, seed: u64) -> Result<GraphSample> {
    check_levels(std::slice::from_ref(params), lattice)?;
    let n = lattice.len() as u64;
    if n * n / 2 > 100_000_000 {
        return Err(Error::Resource(format!("{n} vertices is too many for per-pair sampling")));
    }
    let pair_key = rng::domain_key(seed, DOMAIN_PAIR);
    let d = lattice.d();
    let mut x = vec![0i64; d];
    let mut y = vec![0i64; d];
    let mut v = vec![0i64; d];
    let mut edges = Vec::new();
    for a in 0..n as Vertex {
        lattice.coords_into(a, &mut x);
        for b in a + 1..n as Vertex {
            lattice.coords_into(b, &mut y);
            for i in 0..d {
                v[i] = y[i] - x[i];
            }
            if is_nearest_neighbor(&v) {
                continue;
            }
            let p = prob_from_q(params.beta(), params.q(&v));
            if p <= 0.0 {
                continue;
            }
            let u = rng::unit_f64(rng::block(
                pair_key,
                encode_lattice(&v).unwrap(),
                encode_lattice(&x).unwrap(),
            ));
            if u < p {
                edges.push((a, b));
            }
        }
    }
    Ok(GraphSample {
        params: params.clone(),
        lattice: *lattice,
        seed,
        long_edges: edges,
    })
}
