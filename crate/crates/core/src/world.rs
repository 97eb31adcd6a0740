//! Finite graphs with integer vertex ids, used wherever a region is small
//! enough to index: exact enumeration, cluster certification and the
//! experiment drivers.
//!
//! Lattice worlds key their edges with [`hash::edge_key`], so a world and the
//! lazy explorer see the same bit on the same edge in the same sample.

use rustc_hash::FxHashMap;

use crate::engine::hash::{self, Stream};
use crate::error::{Error, Result};
use crate::lattice::{EdgeId, LatticeSpec, Region, Site};

#[derive(Clone, Debug)]
pub struct World {
    spec: Option<LatticeSpec>,
    sites: Vec<Site>,
    index: FxHashMap<Site, u32>,
    n: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    adj: Vec<(u32, u32)>,
    keys: Vec<u64>,
}

impl World {
    /// The subgraph induced by a box, annulus or explicit set.
    pub fn from_region(spec: &LatticeSpec, region: &Region, limit: usize) -> Result<Self> {
        Ok(Self::from_sites(spec, region.sites(limit)?))
    }

    /// Induced subgraph on `sites`; vertex ids follow lexicographic order.
    pub fn from_sites(spec: &LatticeSpec, mut sites: Vec<Site>) -> Self {
        sites.sort();
        sites.dedup();
        let index: FxHashMap<Site, u32> = sites.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        let mut edges = Vec::new();
        let mut keys = Vec::new();
        for (i, x) in sites.iter().enumerate() {
            spec.for_each_neighbor(x, |y| {
                if let Some(&j) = index.get(y) {
                    if (i as u32) < j {
                        edges.push((i as u32, j));
                        keys.push(hash::edge_key(&EdgeId::new_unchecked(x.clone(), y.clone())));
                    }
                }
            });
        }
        let mut w = Self::assemble(sites.len(), edges, keys);
        w.spec = Some(*spec);
        w.sites = sites;
        w.index = index;
        w
    }

    /// An abstract graph on `0..n`; edge `i` is keyed by `(salt, i)`.
    pub fn from_edges(n: usize, edges: &[(u32, u32)], salt: u64) -> Result<Self> {
        for &(u, v) in edges {
            if u == v || u as usize >= n || v as usize >= n {
                return Err(Error::InvalidGeometry(format!("bad edge ({u}, {v}) on {n} vertices")));
            }
        }
        let keys = (0..edges.len() as u64).map(|i| hash::indexed_key(salt, i)).collect();
        Ok(Self::assemble(n, edges.to_vec(), keys))
    }

    fn assemble(n: usize, edges: Vec<(u32, u32)>, keys: Vec<u64>) -> Self {
        let mut deg = vec![0u32; n + 1];
        for &(u, v) in &edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![(0u32, 0u32); 2 * edges.len()];
        for (e, &(u, v)) in edges.iter().enumerate() {
            adj[fill[u as usize] as usize] = (v, e as u32);
            fill[u as usize] += 1;
            adj[fill[v as usize] as usize] = (u, e as u32);
            fill[v as usize] += 1;
        }
        World { spec: None, sites: Vec::new(), index: FxHashMap::default(), n, edges, offsets, adj, keys }
    }

    pub fn spec(&self) -> Option<&LatticeSpec> {
        self.spec.as_ref()
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: u32) -> (u32, u32) {
        self.edges[e as usize]
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn key(&self, e: u32) -> u64 {
        self.keys[e as usize]
    }

    /// `(neighbor, edge)` pairs of `v`.
    pub fn adj(&self, v: u32) -> &[(u32, u32)] {
        &self.adj[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    pub fn site(&self, v: u32) -> &Site {
        &self.sites[v as usize]
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn id(&self, x: &Site) -> Option<u32> {
        self.index.get(x).copied()
    }

    pub fn id_of(&self, x: &Site) -> Result<u32> {
        self.id(x).ok_or_else(|| Error::InvalidGeometry(format!("{x} is not in the world")))
    }

    pub fn edge_between(&self, u: u32, v: u32) -> Option<u32> {
        self.adj(u).iter().find(|&&(w, _)| w == v).map(|&(_, e)| e)
    }

    pub fn edge_id(&self, e: u32) -> Option<EdgeId> {
        if self.sites.is_empty() {
            return None;
        }
        let (u, v) = self.edge(e);
        Some(EdgeId::new_unchecked(self.site(u).clone(), self.site(v).clone()))
    }

    /// Edge index of a lattice edge, if both endpoints are in the world.
    pub fn edge_index(&self, e: &EdgeId) -> Option<u32> {
        let (a, b) = e.endpoints();
        self.edge_between(self.id(a)?, self.id(b)?)
    }
}

/// Edge states indexed by world edge id.
pub trait States {
    fn open(&self, e: u32) -> bool;
}

impl<S: States + ?Sized> States for &S {
    fn open(&self, e: u32) -> bool {
        (**self).open(e)
    }
}

/// Lazily hashed states of one sample.
#[derive(Clone, Copy)]
pub struct Hashed<'a> {
    pub keys: &'a [u64],
    pub stream: Stream,
}

impl<'a> Hashed<'a> {
    pub fn new(world: &'a World, stream: Stream) -> Self {
        Hashed { keys: &world.keys, stream }
    }
}

impl States for Hashed<'_> {
    #[inline]
    fn open(&self, e: u32) -> bool {
        self.stream.open(self.keys[e as usize])
    }
}

/// States of up to 64 edges packed in a word; bit `e` is edge `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mask(pub u64);

impl States for Mask {
    #[inline]
    fn open(&self, e: u32) -> bool {
        self.0 >> e & 1 == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitStates(pub Vec<u64>);

impl BitStates {
    pub fn collect(world: &World, s: &impl States) -> Self {
        let m = world.n_edges();
        let mut words = vec![0u64; m.div_ceil(64)];
        for e in 0..m {
            if s.open(e as u32) {
                words[e / 64] |= 1 << (e % 64);
            }
        }
        BitStates(words)
    }

    pub fn set(&mut self, e: u32, open: bool) {
        let (w, b) = (e as usize / 64, e % 64);
        if open {
            self.0[w] |= 1 << b;
        } else {
            self.0[w] &= !(1 << b);
        }
    }
}

impl States for BitStates {
    #[inline]
    fn open(&self, e: u32) -> bool {
        self.0[e as usize / 64] >> (e % 64) & 1 == 1
    }
}

/// Every edge in the same state.
#[derive(Clone, Copy, Debug)]
pub struct Uniform(pub bool);

impl States for Uniform {
    fn open(&self, _: u32) -> bool {
        self.0
    }
}

/// `base` with one edge forced to a state.
#[derive(Clone, Copy)]
pub struct With<S> {
    pub base: S,
    pub edge: u32,
    pub open: bool,
}

impl<S: States> States for With<S> {
    #[inline]
    fn open(&self, e: u32) -> bool {
        if e == self.edge {
            self.open
        } else {
            self.base.open(e)
        }
    }
}

/// Reusable traversal scratch. A vertex is marked in the current search iff
/// its stamp equals the current generation.
#[derive(Clone, Debug, Default)]
pub struct Search {
    stamp: Vec<u32>,
    gen: u32,
    stack: Vec<u32>,
    pub found: Vec<u32>,
}

impl Search {
    pub fn new(n: usize) -> Self {
        Search { stamp: vec![0; n], gen: 0, stack: Vec::new(), found: Vec::new() }
    }

    fn reset(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.gen = self.gen.wrapping_add(1);
        if self.gen == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.gen = 1;
        }
        self.found.clear();
        self.stack.clear();
    }

    pub fn marked(&self, v: u32) -> bool {
        self.stamp[v as usize] == self.gen
    }

    /// Marks the open component of `sources` within vertices passing
    /// `allowed`; stops early when `stop` fires on a reached vertex. Sources
    /// are taken as given, whether or not they pass `allowed`. Reached
    /// vertices are left in `found`.
    pub fn explore(
        &mut self,
        w: &World,
        s: &impl States,
        sources: impl IntoIterator<Item = u32>,
        allowed: impl Fn(u32) -> bool,
        mut stop: impl FnMut(u32) -> bool,
    ) -> bool {
        self.reset(w.n_vertices());
        for v in sources {
            if self.stamp[v as usize] != self.gen {
                self.stamp[v as usize] = self.gen;
                self.found.push(v);
                if stop(v) {
                    return true;
                }
                self.stack.push(v);
            }
        }
        while let Some(v) = self.stack.pop() {
            for &(y, e) in w.adj(v) {
                if self.stamp[y as usize] == self.gen || !allowed(y) || !s.open(e) {
                    continue;
                }
                self.stamp[y as usize] = self.gen;
                self.found.push(y);
                if stop(y) {
                    return true;
                }
                self.stack.push(y);
            }
        }
        false
    }

    /// The component, without early exit.
    pub fn component(
        &mut self,
        w: &World,
        s: &impl States,
        sources: impl IntoIterator<Item = u32>,
        allowed: impl Fn(u32) -> bool,
    ) -> &[u32] {
        self.explore(w, s, sources, allowed, |_| false);
        &self.found
    }

    pub fn connects(
        &mut self,
        w: &World,
        s: &impl States,
        sources: impl IntoIterator<Item = u32>,
        allowed: impl Fn(u32) -> bool,
        target: impl Fn(u32) -> bool,
    ) -> bool {
        self.explore(w, s, sources, allowed, target)
    }
}

/// Component labels of the open subgraph restricted to `allowed` vertices,
/// by union-find. Disallowed vertices get `u32::MAX`.
pub fn components(w: &World, s: &impl States, allowed: impl Fn(u32) -> bool) -> Vec<u32> {
    let n = w.n_vertices();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(p: &mut [u32], mut x: u32) -> u32 {
        while p[x as usize] != x {
            p[x as usize] = p[p[x as usize] as usize];
            x = p[x as usize];
        }
        x
    }
    for (e, &(u, v)) in w.edges().iter().enumerate() {
        if allowed(u) && allowed(v) && s.open(e as u32) {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            if a != b {
                parent[a.max(b) as usize] = a.min(b);
            }
        }
    }
    (0..n as u32).map(|v| if allowed(v) { find(&mut parent, v) } else { u32::MAX }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{explore_cluster, PercolationConfig};

    #[test]
    fn box_world_shape() {
        let spec = LatticeSpec::nearest_neighbor(2).unwrap();
        let w = World::from_region(&spec, &Region::ball(Site::origin(2), 2).unwrap(), 1000).unwrap();
        assert_eq!(w.n_vertices(), 25);
        assert_eq!(w.n_edges(), 40);
        let c = w.id(&Site::origin(2)).unwrap();
        assert_eq!(w.adj(c).len(), 4);
        for e in 0..w.n_edges() as u32 {
            let id = w.edge_id(e).unwrap();
            assert_eq!(w.edge_index(&id), Some(e));
        }
    }

    #[test]
    fn hashed_world_matches_lazy_engine() {
        let spec = LatticeSpec::nearest_neighbor(2).unwrap();
        let region = Region::ball(Site::origin(2), 6).unwrap();
        let w = World::from_region(&spec, &region, 1000).unwrap();
        let mut search = Search::new(w.n_vertices());
        for sid in 0..200 {
            let cfg = PercolationConfig::new(spec, 0.5, 3).unwrap().with_sample(sid);
            let lazy = explore_cluster(&spec, &cfg.oracle(), &Site::origin(2), &region, 1 << 20).unwrap();
            let st = Hashed::new(&w, cfg.stream());
            let mut got: Vec<Site> =
                search.component(&w, &st, [w.id(&Site::origin(2)).unwrap()], |_| true).iter().map(|&v| w.site(v).clone()).collect();
            got.sort();
            assert_eq!(got, lazy.vertices);
            let labels = components(&w, &st, |_| true);
            let root = labels[w.id(&Site::origin(2)).unwrap() as usize];
            assert_eq!(labels.iter().filter(|&&l| l == root).count(), got.len());
        }
    }

    #[test]
    fn abstract_graph_checks() {
        assert!(World::from_edges(2, &[(0, 2)], 0).is_err());
        assert!(World::from_edges(2, &[(1, 1)], 0).is_err());
        let w = World::from_edges(3, &[(0, 1), (1, 2)], 0).unwrap();
        let mut s = Search::new(3);
        assert!(s.connects(&w, &Mask(0b11), [0], |_| true, |v| v == 2));
        assert!(!s.connects(&w, &Mask(0b01), [0], |_| true, |v| v == 2));
        assert!(!s.connects(&w, &Mask(0b11), [0], |v| v != 1, |v| v == 2));
    }

    #[test]
    fn bitstates_roundtrip() {
        let w = World::from_edges(70, &(0..69).map(|i| (i, i + 1)).collect::<Vec<_>>(), 1).unwrap();
        let st = Stream::new(1, 1, 0.5);
        let h = Hashed::new(&w, st);
        let mut b = BitStates::collect(&w, &h);
        for e in 0..69 {
            assert_eq!(b.open(e), h.open(e));
        }
        b.set(68, true);
        assert!(b.open(68));
        b.set(68, false);
        assert!(!b.open(68));
    }
}
