//! Bernoulli bond percolation with lazily hashed edge states.
//!
//! Edge states are never stored: [`hash`] maps each edge to a bit, so an
//! exploration touches memory proportional to the cluster it builds. This is
//! what lets clusters in `d = 7` be explored without materializing a box.

pub mod exact;
pub mod hash;

use std::cell::RefCell;
use std::collections::VecDeque;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{region_boundaries, EdgeId, LatticeSpec, Region, Site};

pub use hash::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationConfig {
    pub spec: LatticeSpec,
    pub p: f64,
    pub seed: u64,
    pub sample_id: u64,
}

impl PercolationConfig {
    pub fn new(spec: LatticeSpec, p: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("p = {p} not in [0, 1]")));
        }
        Ok(PercolationConfig { spec, p, seed, sample_id: 0 })
    }

    pub fn with_sample(&self, sample_id: u64) -> Self {
        PercolationConfig { sample_id, ..*self }
    }

    pub fn with_p(&self, p: f64) -> Self {
        PercolationConfig { p, ..*self }
    }

    pub fn stream(&self) -> Stream {
        Stream::new(self.seed, self.sample_id, self.p)
    }

    pub fn oracle(&self) -> HashOracle {
        HashOracle { stream: self.stream() }
    }
}

/// State of one edge in the sample selected by `cfg`.
pub fn edge_state(cfg: &PercolationConfig, e: &EdgeId) -> bool {
    cfg.stream().open(hash::edge_key(e))
}

/// Source of edge states for lattice explorations.
pub trait EdgeOracle {
    fn is_open(&self, e: &EdgeId) -> bool;
}

impl<O: EdgeOracle + ?Sized> EdgeOracle for &O {
    fn is_open(&self, e: &EdgeId) -> bool {
        (**self).is_open(e)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HashOracle {
    pub stream: Stream,
}

impl EdgeOracle for HashOracle {
    fn is_open(&self, e: &EdgeId) -> bool {
        self.stream.open(hash::edge_key(e))
    }
}

/// Every edge in the same state.
#[derive(Clone, Copy, Debug)]
pub struct ConstOracle(pub bool);

impl EdgeOracle for ConstOracle {
    fn is_open(&self, _: &EdgeId) -> bool {
        self.0
    }
}

/// Overrides a base oracle on a fixed set of edges.
#[derive(Clone, Debug)]
pub struct ForcedOracle<O> {
    pub base: O,
    pub forced: FxHashMap<EdgeId, bool>,
}

impl<O: EdgeOracle> EdgeOracle for ForcedOracle<O> {
    fn is_open(&self, e: &EdgeId) -> bool {
        match self.forced.get(e) {
            Some(&b) => b,
            None => self.base.is_open(e),
        }
    }
}

/// Records every edge whose state is queried.
#[derive(Debug)]
pub struct Instrumented<O> {
    pub inner: O,
    pub queried: RefCell<FxHashSet<EdgeId>>,
}

impl<O> Instrumented<O> {
    pub fn new(inner: O) -> Self {
        Instrumented { inner, queried: RefCell::new(FxHashSet::default()) }
    }
}

impl<O: EdgeOracle> EdgeOracle for Instrumented<O> {
    fn is_open(&self, e: &EdgeId) -> bool {
        self.queried.borrow_mut().insert(e.clone());
        self.inner.is_open(e)
    }
}

/// An explored open cluster of a region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRecord {
    pub root: Site,
    #[serde(skip)]
    pub region: Option<Region>,
    /// Sorted.
    pub vertices: Vec<Site>,
    /// Sorted; both endpoints in `vertices`.
    pub open_edges: Vec<EdgeId>,
    pub boundary_in: Vec<Site>,
    pub boundary_out: Vec<Site>,
    pub truncated: bool,
}

impl ClusterRecord {
    pub fn min_vertex(&self) -> &Site {
        &self.vertices[0]
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.vertices.binary_search(x).is_ok()
    }

    pub fn is_spanning(&self) -> bool {
        !self.boundary_in.is_empty() && !self.boundary_out.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Traversal {
    Bfs,
    Dfs,
}

/// Outcome of a capped connectivity query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connect {
    Yes,
    No,
    /// The vertex cap was hit before a decision.
    Unknown,
}

struct Explorer<'a, O: ?Sized> {
    spec: &'a LatticeSpec,
    oracle: &'a O,
    region: &'a Region,
    cap: usize,
    seen: FxHashSet<Site>,
    frontier: VecDeque<Site>,
    order: Traversal,
    edges: Option<Vec<EdgeId>>,
    truncated: bool,
}

impl<'a, O: EdgeOracle + ?Sized> Explorer<'a, O> {
    fn new(spec: &'a LatticeSpec, oracle: &'a O, region: &'a Region, cap: usize, order: Traversal) -> Self {
        Explorer {
            spec,
            oracle,
            region,
            cap: cap.max(1),
            seen: FxHashSet::default(),
            frontier: VecDeque::new(),
            order,
            edges: None,
            truncated: false,
        }
    }

    fn seed(&mut self, x: Site) {
        if self.seen.insert(x.clone()) {
            self.frontier.push_back(x);
        }
    }

    /// Expands until the frontier empties, the cap is hit, or `stop` fires on
    /// a newly reached site. Returns whether `stop` fired.
    fn run(&mut self, mut stop: impl FnMut(&Site) -> bool) -> bool {
        let mut nb = Vec::with_capacity(self.spec.degree() as usize);
        loop {
            let v = match self.order {
                Traversal::Bfs => self.frontier.pop_front(),
                Traversal::Dfs => self.frontier.pop_back(),
            };
            let Some(v) = v else { return false };
            nb.clear();
            self.spec.for_each_neighbor(&v, |y| {
                if self.region.contains(y) {
                    nb.push(y.clone());
                }
            });
            for y in nb.drain(..) {
                let e = EdgeId::new_unchecked(v.clone(), y.clone());
                if !self.oracle.is_open(&e) {
                    continue;
                }
                if let Some(edges) = &mut self.edges {
                    if v < y || self.seen.contains(&y) {
                        edges.push(e);
                    }
                }
                if self.seen.contains(&y) {
                    continue;
                }
                if self.seen.len() >= self.cap {
                    self.truncated = true;
                    return false;
                }
                self.seen.insert(y.clone());
                if stop(&y) {
                    return true;
                }
                self.frontier.push_back(y);
            }
        }
    }
}

fn check_start(spec: &LatticeSpec, x: &Site, a: &Region) -> Result<()> {
    spec.check_site(x)?;
    if !a.contains(x) {
        return Err(Error::Precondition(format!("{x} is not in the region")));
    }
    Ok(())
}

fn finish<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    x: &Site,
    a: &Region,
    ex: Explorer<'_, O>,
) -> ClusterRecord {
    let mut vertices: Vec<Site> = ex.seen.into_iter().collect();
    vertices.sort();
    let mut open_edges = ex.edges.unwrap_or_default();
    open_edges.sort();
    open_edges.dedup();
    if ex.truncated {
        open_edges.retain(|e| {
            let (p, q) = e.endpoints();
            vertices.binary_search(p).is_ok() && vertices.binary_search(q).is_ok()
        });
    }
    let boundary_in = vertices.iter().filter(|y| a.is_inner_boundary(spec, y)).cloned().collect();
    let boundary_out = match a {
        Region::Explicit(_) => Vec::new(),
        _ => vertices.iter().filter(|y| a.is_outer_boundary(spec, y)).cloned().collect(),
    };
    ClusterRecord {
        root: x.clone(),
        region: Some(a.clone()),
        vertices,
        open_edges,
        boundary_in,
        boundary_out,
        truncated: ex.truncated,
    }
}

/// The open cluster of `x` using only edges with both endpoints in `a`.
pub fn explore_cluster<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    x: &Site,
    a: &Region,
    cap: usize,
) -> Result<ClusterRecord> {
    explore_cluster_with(spec, oracle, x, a, cap, Traversal::Bfs)
}

pub fn explore_cluster_with<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    x: &Site,
    a: &Region,
    cap: usize,
    order: Traversal,
) -> Result<ClusterRecord> {
    check_start(spec, x, a)?;
    let mut ex = Explorer::new(spec, oracle, a, cap, order);
    ex.edges = Some(Vec::new());
    ex.seed(x.clone());
    ex.run(|_| false);
    Ok(finish(spec, x, a, ex))
}

/// Whether `x` reaches a site satisfying `target` inside `a`.
pub fn restricted_connect<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    x: &Site,
    target: impl Fn(&Site) -> bool,
    a: &Region,
    cap: usize,
) -> Result<Connect> {
    check_start(spec, x, a)?;
    if target(x) {
        return Ok(Connect::Yes);
    }
    let mut ex = Explorer::new(spec, oracle, a, cap, Traversal::Bfs);
    ex.seed(x.clone());
    if ex.run(|y| target(y)) {
        Ok(Connect::Yes)
    } else if ex.truncated {
        Ok(Connect::Unknown)
    } else {
        Ok(Connect::No)
    }
}

/// Visits the open cluster of `x` inside `a`, calling `visit` on each site as
/// it is reached (the root first). Returns `(stopped, truncated, visited)`,
/// where `stopped` means `visit` returned `true`.
pub fn explore_visit<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    x: &Site,
    a: &Region,
    cap: usize,
    mut visit: impl FnMut(&Site) -> bool,
) -> Result<(bool, bool, usize)> {
    check_start(spec, x, a)?;
    if visit(x) {
        return Ok((true, false, 1));
    }
    let mut ex = Explorer::new(spec, oracle, a, cap, Traversal::Bfs);
    ex.seed(x.clone());
    let stopped = ex.run(visit);
    Ok((stopped, ex.truncated, ex.seen.len()))
}

/// Spanning clusters of an annulus, with a completeness flag.
#[derive(Clone, Debug)]
pub struct SpanningClusters {
    /// Sorted by minimal vertex.
    pub clusters: Vec<ClusterRecord>,
    pub complete: bool,
}

/// Open clusters of `a` meeting both its inner and outer boundary.
///
/// Every spanning cluster meets the inner boundary, so exploring from each
/// inner-boundary site not yet covered finds each exactly once.
pub fn spanning_clusters<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    a: &Region,
    cap: usize,
) -> Result<SpanningClusters> {
    if !matches!(a, Region::Annulus { .. }) {
        return Err(Error::Precondition("spanning clusters need an annulus".into()));
    }
    let (inner, _) = region_boundaries(spec, a)?;
    let mut covered: FxHashSet<Site> = FxHashSet::default();
    let mut clusters = Vec::new();
    let mut complete = true;
    for x in &inner {
        if covered.contains(x) {
            continue;
        }
        let c = explore_cluster(spec, oracle, x, a, cap)?;
        complete &= !c.truncated;
        covered.extend(c.vertices.iter().cloned());
        if c.is_spanning() {
            clusters.push(c);
        }
    }
    clusters.sort_by(|p, q| p.min_vertex().cmp(q.min_vertex()));
    Ok(SpanningClusters { clusters, complete })
}

/// Largest sup-norm distance from `x` reached by its open cluster inside
/// `B(x; r_max)`, stopping as soon as `r_max` is reached.
pub fn max_radius<O: EdgeOracle + ?Sized>(
    spec: &LatticeSpec,
    oracle: &O,
    x: &Site,
    r_max: i64,
    cap: usize,
) -> Result<(i64, bool)> {
    let a = Region::ball(x.clone(), r_max)?;
    check_start(spec, x, &a)?;
    let mut best = 0;
    let mut ex = Explorer::new(spec, oracle, &a, cap, Traversal::Bfs);
    ex.seed(x.clone());
    let hit = ex.run(|y| {
        best = best.max(y.sup_dist(x));
        best >= r_max
    });
    Ok((if hit { r_max } else { best }, ex.truncated))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn(d: usize) -> LatticeSpec {
        LatticeSpec::nearest_neighbor(d).unwrap()
    }

    #[test]
    fn edge_state_deterministic_and_extreme() {
        let spec = nn(2);
        let cfg = PercolationConfig::new(spec, 0.3, 9).unwrap().with_sample(4);
        let e = EdgeId::new(&spec, &Site::new(&[0, 0]), &Site::new(&[0, 1])).unwrap();
        assert_eq!(edge_state(&cfg, &e), edge_state(&cfg, &e));
        assert!(!edge_state(&cfg.with_p(0.0), &e));
        assert!(edge_state(&cfg.with_p(1.0), &e));
        assert!(PercolationConfig::new(spec, 1.5, 0).is_err());
    }

    #[test]
    fn edge_state_marginal() {
        let spec = nn(2);
        let cfg = PercolationConfig::new(spec, 0.3, 2024).unwrap();
        let n = 1_000_000;
        let mut open = 0u64;
        for k in 0..n as i32 {
            let x = Site::new(&[k, 0]);
            let y = Site::new(&[k, 1]);
            if edge_state(&cfg, &EdgeId::new_unchecked(x, y)) {
                open += 1;
            }
        }
        let mean = open as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 0.3).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn explore_extremes() {
        let spec = nn(2);
        let a = Region::ball(Site::origin(2), 3).unwrap();
        let x = Site::new(&[1, 1]);
        let c = explore_cluster(&spec, &ConstOracle(false), &x, &a, 1000).unwrap();
        assert_eq!(c.vertices, vec![x.clone()]);
        let c = explore_cluster(&spec, &ConstOracle(true), &x, &a, 1000).unwrap();
        assert_eq!(c.vertices, a.sites(1000).unwrap());
        assert_eq!(c.open_edges.len(), 2 * 7 * 6);
        assert!(!c.truncated);
        let c = explore_cluster(&spec, &ConstOracle(true), &x, &a, 10).unwrap();
        assert!(c.truncated);
        assert_eq!(c.vertices.len(), 10);
        assert!(explore_cluster(&spec, &ConstOracle(true), &Site::new(&[9, 0]), &a, 10).is_err());
    }

    #[test]
    fn annulus_all_open_is_connected() {
        let spec = nn(2);
        let a = Region::annulus(Site::origin(2), 1, 3).unwrap();
        let c = explore_cluster(&spec, &ConstOracle(true), &Site::new(&[2, 0]), &a, 1000).unwrap();
        assert_eq!(c.vertices.len(), 40);
        let s = spanning_clusters(&spec, &ConstOracle(true), &a, 1000).unwrap();
        assert_eq!(s.clusters.len(), 1);
        assert_eq!(s.clusters[0].vertices.len(), 40);
        assert!(spanning_clusters(&spec, &ConstOracle(false), &a, 1000).unwrap().clusters.is_empty());
    }

    #[test]
    fn connect_cases() {
        let spec = nn(2);
        let a = Region::ball(Site::origin(2), 3).unwrap();
        let x = Site::origin(2);
        let t = Site::new(&[2, 0]);
        assert_eq!(restricted_connect(&spec, &ConstOracle(false), &x, |y| *y == x, &a, 5).unwrap(), Connect::Yes);
        assert_eq!(restricted_connect(&spec, &ConstOracle(false), &x, |y| *y == t, &a, 5).unwrap(), Connect::No);
        assert_eq!(restricted_connect(&spec, &ConstOracle(true), &x, |y| *y == t, &a, 100).unwrap(), Connect::Yes);
        // Two-edge path forced open, everything else closed.
        let mut forced = FxHashMap::default();
        forced.insert(EdgeId::new(&spec, &x, &Site::new(&[1, 0])).unwrap(), true);
        forced.insert(EdgeId::new(&spec, &Site::new(&[1, 0]), &t).unwrap(), true);
        let o = ForcedOracle { base: ConstOracle(false), forced };
        assert_eq!(restricted_connect(&spec, &o, &x, |y| *y == t, &a, 100).unwrap(), Connect::Yes);
        let far = Site::new(&[3, 3]);
        assert_eq!(restricted_connect(&spec, &ConstOracle(true), &x, |y| *y == far, &a, 3).unwrap(), Connect::Unknown);
    }

    #[test]
    fn bfs_dfs_agree() {
        let spec = nn(3);
        let a = Region::ball(Site::origin(3), 6).unwrap();
        for sid in 0..1000 {
            let cfg = PercolationConfig::new(spec, 0.25, 77).unwrap().with_sample(sid);
            let o = cfg.oracle();
            let b = explore_cluster_with(&spec, &o, &Site::origin(3), &a, 1 << 20, Traversal::Bfs).unwrap();
            let d = explore_cluster_with(&spec, &o, &Site::origin(3), &a, 1 << 20, Traversal::Dfs).unwrap();
            assert_eq!(b, d);
        }
    }

    #[test]
    fn spanning_touches_only_region_edges() {
        let spec = nn(2);
        let a = Region::annulus(Site::origin(2), 2, 6).unwrap();
        for sid in 0..50 {
            let cfg = PercolationConfig::new(spec, 0.55, 5).unwrap().with_sample(sid);
            let o = Instrumented::new(cfg.oracle());
            spanning_clusters(&spec, &o, &a, 1 << 16).unwrap();
            for e in o.queried.borrow().iter() {
                let (p, q) = e.endpoints();
                assert!(a.contains(p) && a.contains(q));
            }
        }
    }

    #[test]
    fn max_radius_monotone_in_cap() {
        let spec = nn(2);
        let cfg = PercolationConfig::new(spec, 1.0, 1).unwrap();
        let (r, t) = max_radius(&spec, &cfg.oracle(), &Site::origin(2), 5, 1 << 20).unwrap();
        assert_eq!((r, t), (5, false));
        let cfg = PercolationConfig::new(spec, 0.0, 1).unwrap();
        assert_eq!(max_radius(&spec, &cfg.oracle(), &Site::origin(2), 5, 10).unwrap(), (0, false));
    }
}
