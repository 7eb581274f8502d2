//! Chemical distances on a sampled graph.
//!
//! Nearest-neighbour moves are generated from vertex coordinates; long edges
//! are kept in a compressed adjacency built once per sample. All searches are
//! breadth-first with two flat frontier generations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Vertex};
use crate::model::Norm;
use crate::sampler::GraphSample;

/// Marks vertices not (yet) reached.
pub const UNREACHED: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub source: Vertex,
    pub lattice: LatticeBox,
    /// `dist[v]` for every box vertex `v`.
    pub dist: Vec<u32>,
}

impl DistanceField {
    pub fn at(&self, x: &[i64]) -> Option<u32> {
        self.lattice.index(x).map(|v| self.dist[v as usize])
    }

    pub fn max(&self) -> u32 {
        self.dist.iter().copied().max().unwrap_or(0)
    }
}

/// How the restricted distances read their confinement constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestrictionConvention {
    /// `D~`: `|z - x| < 2 |x - y|_1`; `D~_k`: `|z - x| <= 2 |x - y|^{gbar^{-k}}`,
    /// with `|.|` the kernel norm.
    #[default]
    AsPrinted,
    /// Both read `|z - x|_1 <= 2 |x - y|_1^{gbar^{-k}}`, so `D~_0 = D~`.
    Nested,
}

impl std::str::FromStr for RestrictionConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "nested" => Ok(Self::Nested),
            _ => Err(Error::Config(format!("unknown restriction convention '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedDistanceResult {
    /// `None` when `y` is unreachable inside the constraint.
    pub value: Option<u32>,
    pub constraint_radius: f64,
    /// The constraint ball is not contained in the box, so `value` only
    /// bounds the infinite-volume quantity from above.
    pub truncated_by_box: bool,
}

/// A sample prepared for repeated searches.
pub struct MetricGraph {
    lattice: LatticeBox,
    strides: Vec<u64>,
    offsets: Vec<usize>,
    targets: Vec<Vertex>,
}

impl MetricGraph {
    pub fn new(sample: &GraphSample) -> Self {
        Self::from_edges(sample.lattice, &sample.long_edges)
    }

    pub fn from_edges(lattice: LatticeBox, edges: &[(Vertex, Vertex)]) -> Self {
        let n = lattice.len();
        let mut offsets = vec![0usize; n + 1];
        for &(a, b) in edges {
            offsets[a as usize + 1] += 1;
            offsets[b as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0 as Vertex; offsets[n]];
        for &(a, b) in edges {
            targets[fill[a as usize]] = b;
            fill[a as usize] += 1;
            targets[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        let strides = (0..lattice.d()).map(|i| lattice.stride(i)).collect();
        Self {
            lattice,
            strides,
            offsets,
            targets,
        }
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn long_neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.targets[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    /// Calls `f` on every neighbour of `v` (nearest-neighbour and long).
    #[inline]
    pub fn for_each_neighbor<F: FnMut(Vertex)>(&self, v: Vertex, coords: &mut [i64], mut f: F) {
        self.lattice.coords_into(v, coords);
        let l = self.lattice.radius() as i64;
        for (i, &c) in coords.iter().enumerate() {
            let st = self.strides[i] as Vertex;
            if c > -l {
                f(v - st);
            }
            if c < l {
                f(v + st);
            }
        }
        for &w in self.long_neighbors(v) {
            f(w);
        }
    }

    /// BFS over vertices accepted by `allowed`, stopping after depth `max_depth`
    /// or once `target` is settled.
    fn bfs<A>(&self, source: Vertex, target: Option<Vertex>, max_depth: u32, allowed: A) -> Vec<u32>
    where
        A: Fn(&[i64]) -> bool,
    {
        let d = self.lattice.d();
        let mut dist = vec![UNREACHED; self.lattice.len()];
        let mut coords = vec![0i64; d];
        let mut wc = vec![0i64; d];
        dist[source as usize] = 0;
        if target == Some(source) {
            return dist;
        }
        let mut current = vec![source];
        let mut next = Vec::new();
        let mut depth = 0u32;
        while !current.is_empty() && depth < max_depth {
            depth += 1;
            for &v in &current {
                self.for_each_neighbor(v, &mut coords, |w| {
                    if dist[w as usize] == UNREACHED {
                        self.lattice.coords_into(w, &mut wc);
                        if allowed(&wc) {
                            dist[w as usize] = depth;
                            next.push(w);
                        }
                    }
                });
            }
            if let Some(t) = target {
                if dist[t as usize] != UNREACHED {
                    break;
                }
            }
            std::mem::swap(&mut current, &mut next);
            next.clear();
        }
        dist
    }

    fn check_vertex(&self, v: Vertex) -> Result<()> {
        if (v as usize) < self.lattice.len() {
            Ok(())
        } else {
            Err(Error::Param(format!("vertex {v} outside the box")))
        }
    }

    pub fn distances_from(&self, source: Vertex) -> Result<DistanceField> {
        self.check_vertex(source)?;
        Ok(DistanceField {
            source,
            lattice: self.lattice,
            dist: self.bfs(source, None, u32::MAX, |_| true),
        })
    }

    pub fn distance_pair(&self, x: Vertex, y: Vertex) -> Result<u32> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        Ok(self.bfs(x, Some(y), u32::MAX, |_| true)[y as usize])
    }

    /// Size of the intrinsic ball `{z : D(x, z) <= k}`.
    pub fn intrinsic_ball(&self, x: Vertex, k: u32) -> Result<usize> {
        self.check_vertex(x)?;
        Ok(self.bfs(x, None, k, |_| true).iter().filter(|&&v| v != UNREACHED).count())
    }

    fn constrained(
        &self,
        x: Vertex,
        y: Vertex,
        norm: Norm,
        radius: f64,
        strict: bool,
    ) -> RestrictedDistanceResult {
        let xc = self.lattice.coords(x);
        let diff = std::cell::RefCell::new(vec![0i64; xc.len()]);
        let allowed = |z: &[i64]| {
            let mut diff = diff.borrow_mut();
            for ((o, a), b) in diff.iter_mut().zip(z).zip(&xc) {
                *o = a - b;
            }
            let r = norm.eval_int(&diff);
            if strict { r < radius } else { r <= radius }
        };
        let value = self.bfs(x, Some(y), u32::MAX, allowed)[y as usize];
        // all three norms reach exactly `radius` along a coordinate axis
        let reach = if strict {
            radius.ceil() - 1.0
        } else {
            radius.floor()
        };
        let l = self.lattice.radius() as f64;
        let truncated_by_box = xc.iter().any(|&c| c.abs() as f64 + reach > l);
        RestrictedDistanceResult {
            value: (value != UNREACHED).then_some(value),
            constraint_radius: radius,
            truncated_by_box,
        }
    }

    fn l1_between(&self, x: Vertex, y: Vertex) -> i64 {
        let a = self.lattice.coords(x);
        let b = self.lattice.coords(y);
        a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum()
    }

    fn norm_between(&self, norm: Norm, x: Vertex, y: Vertex) -> f64 {
        let a = self.lattice.coords(x);
        let b = self.lattice.coords(y);
        let diff: Vec<i64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        norm.eval_int(&diff)
    }

    /// `D~(x, y)`: paths confined near `x` at scale `2 |x - y|_1`.
    pub fn restricted_distance(
        &self,
        norm: Norm,
        x: Vertex,
        y: Vertex,
        convention: RestrictionConvention,
    ) -> Result<RestrictedDistanceResult> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        let radius = 2.0 * self.l1_between(x, y) as f64;
        Ok(match convention {
            RestrictionConvention::AsPrinted => self.constrained(x, y, norm, radius, true),
            RestrictionConvention::Nested => self.constrained(x, y, Norm::L1, radius, false),
        })
    }

    /// `D~_k(x, y)`: confinement radius `2 |x - y|^{gbar^{-k}}`.
    #[allow(clippy::too_many_arguments)]
    pub fn restricted_k_distance(
        &self,
        norm: Norm,
        gamma: f64,
        x: Vertex,
        y: Vertex,
        k: u32,
        gamma_bar: f64,
        convention: RestrictionConvention,
    ) -> Result<RestrictedDistanceResult> {
        if !(gamma_bar > gamma && gamma_bar < 1.0) {
            return Err(Error::Param(format!(
                "gamma_bar must lie in ({gamma}, 1), got {gamma_bar}"
            )));
        }
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        let e = gamma_bar.powf(-(k as f64));
        Ok(match convention {
            RestrictionConvention::AsPrinted => {
                let radius = 2.0 * self.norm_between(norm, x, y).powf(e);
                self.constrained(x, y, norm, radius, false)
            }
            RestrictionConvention::Nested => {
                let radius = 2.0 * (self.l1_between(x, y) as f64).powf(e);
                self.constrained(x, y, Norm::L1, radius, false)
            }
        })
    }
}

pub fn distances_from(sample: &GraphSample, source: Vertex) -> Result<DistanceField> {
    MetricGraph::new(sample).distances_from(source)
}

pub fn distance_pair(sample: &GraphSample, x: Vertex, y: Vertex) -> Result<u32> {
    MetricGraph::new(sample).distance_pair(x, y)
}

pub fn restricted_distance(
    sample: &GraphSample,
    x: Vertex,
    y: Vertex,
    convention: RestrictionConvention,
) -> Result<RestrictedDistanceResult> {
    MetricGraph::new(sample).restricted_distance(sample.params.norm(), x, y, convention)
}

pub fn restricted_k_distance(
    sample: &GraphSample,
    x: Vertex,
    y: Vertex,
    k: u32,
    gamma_bar: f64,
    convention: RestrictionConvention,
) -> Result<RestrictedDistanceResult> {
    MetricGraph::new(sample).restricted_k_distance(
        sample.params.norm(),
        sample.params.gamma(),
        x,
        y,
        k,
        gamma_bar,
        convention,
    )
}

pub fn intrinsic_ball(sample: &GraphSample, x: Vertex, k: u32) -> Result<usize> {
    MetricGraph::new(sample).intrinsic_ball(x, k)
}
