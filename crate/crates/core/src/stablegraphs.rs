//! Stable graphs of type (g,n) and the stable-graph sum for twisted volumes.
//!
//! A twisted volume is a sum over stable graphs `G` of
//! `1/|Aut G| * int prod_e l_e f(l_e) dl_e * prod_v V_{h(v),k(v)}`, where the
//! vertex volumes are evaluated at the leaf lengths and at the edge lengths
//! of their half-edges. Edge integrals turn `l^(2s)` into the odd moment
//! `m_{2s+1}[f]`.

use std::collections::BTreeSet;

use itertools::Itertools;
use serde_json::{json, Value};

use crate::coeffring::{rat, Coefficient, EvenPoly, Rational};
use crate::kernels::{KernelFamily, MomentSpec};
use crate::trengine::{is_stable, EngineError, Engine, VolumeTable};

/// A connected graph with genus-decorated vertices, edges (loops and
/// multiple edges allowed) and leaves labelled `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StableGraph {
    /// Genus of each vertex.
    pub genus: Vec<u32>,
    /// Edges as vertex pairs `(u, v)` with `u <= v`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Vertex carrying leaf `i`.
    pub leaves: Vec<usize>,
    aut: u64,
}

/// Where a half-edge at a vertex goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Leaf(usize),
    Edge(usize),
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

impl StableGraph {
    /// Build a graph from its data, canonicalizing vertex order. Fails if the
    /// graph is not connected or not stable.
    pub fn new(genus: Vec<u32>, edges: Vec<(usize, usize)>, leaves: Vec<usize>) -> Result<Self, EngineError> {
        let nv = genus.len();
        let mut g = StableGraph {
            genus,
            edges: edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).sorted().collect(),
            leaves,
            aut: 0,
        };
        if !g.is_connected() || !g.vertices_stable() || g.edges.iter().any(|&(_, v)| v >= nv) || g.leaves.iter().any(|&v| v >= nv) {
            return Err(EngineError::Unstable(g.total_genus(), g.leaves.len()));
        }
        let (canon, aut) = g.canonical();
        g = canon;
        g.aut = aut;
        Ok(g)
    }

    pub fn num_vertices(&self) -> usize {
        self.genus.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// First Betti number of the underlying graph.
    pub fn betti(&self) -> u32 {
        (self.edges.len() + 1).saturating_sub(self.genus.len()) as u32
    }

    pub fn total_genus(&self) -> u32 {
        self.genus.iter().sum::<u32>() + self.betti()
    }

    /// Order of the automorphism group fixing every leaf.
    pub fn aut(&self) -> u64 {
        self.aut
    }

    /// Number of half-edges and leaves at `v`.
    pub fn valence(&self, v: usize) -> usize {
        self.slots(v).len()
    }

    /// Leaves first (increasing label), then edge half-edges in edge order;
    /// a loop contributes two slots.
    pub fn slots(&self, v: usize) -> Vec<Slot> {
        let mut out: Vec<Slot> = (0..self.leaves.len()).filter(|i| self.leaves[*i] == v).map(Slot::Leaf).collect();
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if a == v {
                out.push(Slot::Edge(e));
            }
            if b == v {
                out.push(Slot::Edge(e));
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let nv = self.genus.len();
        if nv == 0 {
            return false;
        }
        let mut seen = vec![false; nv];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && y < nv && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn vertices_stable(&self) -> bool {
        (0..self.genus.len()).all(|v| is_stable(self.genus[v], self.valence(v)))
    }

    fn relabel(&self, perm: &[usize]) -> StableGraph {
        let mut genus = vec![0; self.genus.len()];
        for (v, h) in self.genus.iter().enumerate() {
            genus[perm[v]] = *h;
        }
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (perm[a], perm[b]);
                (x.min(y), x.max(y))
            })
            .sorted()
            .collect();
        let leaves = self.leaves.iter().map(|v| perm[*v]).collect();
        StableGraph { genus, edges, leaves, aut: 0 }
    }

    /// Lexicographically smallest relabelling, and the automorphism count:
    /// vertex permutations fixing the graph, times the ways of permuting
    /// parallel edges and flipping loops.
    fn canonical(&self) -> (StableGraph, u64) {
        let nv = self.genus.len();
        let mut best: Option<StableGraph> = None;
        let mut stabilizer = 0u64;
        for perm in (0..nv).permutations(nv) {
            let h = self.relabel(&perm);
            let key = (&h.genus, &h.leaves, &h.edges);
            if h.genus == self.genus && h.edges == self.edges && h.leaves == self.leaves {
                stabilizer += 1;
            }
            match &best {
                Some(b) if (&b.genus, &b.leaves, &b.edges) <= key => {}
                _ => best = Some(h),
            }
        }
        let mut edge_factor = 1u64;
        for ((a, b), group) in &self.edges.iter().chunk_by(|e| **e) {
            let m = group.count();
            edge_factor *= factorial(m);
            if a == b {
                edge_factor *= 1 << m;
            }
        }
        (best.unwrap(), stabilizer * edge_factor)
    }

    /// The same graph with leaf `i` renamed `perm[i]`.
    pub fn permute_leaves(&self, perm: &[usize]) -> StableGraph {
        let mut leaves = vec![0; self.leaves.len()];
        for (i, v) in self.leaves.iter().enumerate() {
            leaves[perm[i]] = *v;
        }
        StableGraph::new(self.genus.clone(), self.edges.clone(), leaves).expect("relabelling preserves stability")
    }

    pub fn to_json(&self) -> Value {
        json!({
            "vertices": self.genus.iter().map(|h| json!({"genus": h})).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
            "leaves": self.leaves,
            "aut": self.aut,
        })
    }
}

/// Multisets of `k` unordered vertex pairs on `nv` vertices.
fn edge_multisets(nv: usize, k: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..nv).flat_map(|a| (a..nv).map(move |b| (a, b))).collect();
    pairs.into_iter().combinations_with_replacement(k).collect()
}

/// Genus assignments of `nv` vertices summing to `total`.
fn compositions(nv: usize, total: u32) -> Vec<Vec<u32>> {
    if nv == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for h in 0..=total {
        for mut rest in compositions(nv - 1, total - h) {
            rest.insert(0, h);
            out.push(rest);
        }
    }
    out
}

/// All stable graphs of type (g,n) up to isomorphism, sorted by canonical
/// form (edgeless graph first).
pub fn enumerate(g: u32, n: usize) -> Result<Vec<StableGraph>, EngineError> {
    if !is_stable(g, n) {
        return Err(EngineError::Unstable(g, n));
    }
    let max_vertices = (2 * g as usize + n) - 2;
    let mut found = BTreeSet::new();
    for nv in 1..=max_vertices {
        for b1 in 0..=g {
            let ne = b1 as usize + nv - 1;
            let edge_sets = edge_multisets(nv, ne);
            for genus in compositions(nv, g - b1) {
                for edges in &edge_sets {
                    for leaves in std::iter::repeat_n(0..nv, n).multi_cartesian_product() {
                        if let Ok(sg) = StableGraph::new(genus.clone(), edges.clone(), leaves) {
                            found.insert(sg);
                        }
                    }
                }
            }
        }
    }
    let mut out: Vec<StableGraph> = found.into_iter().collect();
    out.sort_by_key(|sg| (sg.num_edges(), sg.clone()));
    Ok(out)
}

/// Stable-graph sum: `sum_G 1/|Aut G| int prod_e l f(l) dl prod_v V_{h(v),k(v)}`.
///
/// Vertex volumes come from `base`; a missing entry is an error.
pub fn graph_sum_volume<C: Coefficient>(g: u32, n: usize, base: &VolumeTable<C>, f: &MomentSpec) -> Result<EvenPoly<C>, EngineError> {
    graph_sum_with(g, n, f, |h, k| base.get(h, k).cloned().ok_or(EngineError::Unstable(h, k)))
}

/// Stable-graph sum with vertex volumes taken from a recursion engine.
pub fn graph_sum_from_engine<C: Coefficient>(g: u32, n: usize, engine: &Engine<C>, f: &MomentSpec) -> Result<EvenPoly<C>, EngineError> {
    graph_sum_with(g, n, f, |h, k| Ok((*engine.volume(h, k)?).clone()))
}

/// Stable-graph sum for a kernel family with coefficients in `C`.
pub fn graph_sum_for_family<C: Coefficient>(g: u32, n: usize, fam: &KernelFamily, f: &MomentSpec) -> Result<EvenPoly<C>, EngineError> {
    graph_sum_from_engine(g, n, &Engine::<C>::for_family(fam), f)
}

fn graph_sum_with<C: Coefficient>(
    g: u32,
    n: usize,
    f: &MomentSpec,
    vertex: impl Fn(u32, usize) -> Result<EvenPoly<C>, EngineError>,
) -> Result<EvenPoly<C>, EngineError> {
    let mut out = EvenPoly::new(n);
    for sg in enumerate(g, n)? {
        if sg.num_edges() > 0 && f.is_zero() {
            continue;
        }
        let term = contract_edges(&sg, n, &|_, h, k| vertex(h, k), |_, s| f.odd_moment::<C>(s).map_err(EngineError::from))?;
        out.add_assign_ref(&term.scale_rational(&rat(1, sg.aut() as i64)));
    }
    Ok(out)
}

/// Product of vertex amplitudes (given vertex index, genus and valence) with each variable `l_e^(2s)` of edge `e`
/// replaced by `moment(e, s)`. Leaves become the `n` output variables.
pub fn contract_edges<C: Coefficient>(
    sg: &StableGraph,
    n: usize,
    vertex: &impl Fn(usize, u32, usize) -> Result<EvenPoly<C>, EngineError>,
    moment: impl Fn(usize, u32) -> Result<C, EngineError>,
) -> Result<EvenPoly<C>, EngineError> {
    let total = n + sg.num_edges();
    let mut prod = EvenPoly::one(total);
    for v in 0..sg.num_vertices() {
        let slots = sg.slots(v);
        let positions: Vec<usize> = slots
            .iter()
            .map(|s| match s {
                Slot::Leaf(i) => *i,
                Slot::Edge(e) => n + e,
            })
            .collect();
        let vol = vertex(v, sg.genus[v], slots.len())?;
        prod = prod.checked_mul(&vol.embed(total, &positions))?;
    }
    let mut out = EvenPoly::new(n);
    let mut cache = std::collections::HashMap::new();
    for (d, c) in prod.terms() {
        let mut coeff = c.clone();
        for (e, &s) in d[n..].iter().enumerate() {
            if !cache.contains_key(&(e, s)) {
                cache.insert((e, s), moment(e, s)?);
            }
            coeff = coeff.mul_ref(&cache[&(e, s)]);
            if coeff.is_zero() {
                break;
            }
        }
        out.add_term(d[..n].to_vec(), coeff);
    }
    Ok(out)
}

/// `sum_G 1/|Aut G|` over all stable graphs of type (g,n).
pub fn inverse_aut_sum(g: u32, n: usize) -> Result<Rational, EngineError> {
    Ok(enumerate(g, n)?.iter().map(|sg| rat(1, sg.aut() as i64)).sum())
}

pub fn graphs_to_json(g: u32, n: usize, graphs: &[StableGraph]) -> Value {
    json!({"g": g, "n": n, "graphs": graphs.iter().map(StableGraph::to_json).collect::<Vec<_>>()})
}
