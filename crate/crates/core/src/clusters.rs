//! Cluster structure: the tameness event, regularity by conditional
//! resampling, good spanning sets, pivotal edges and the attachment set `Y`.
//!
//! Everything here runs on a [`World`] with an arbitrary [`States`], so the
//! same code serves Monte Carlo samples and exhaustive enumeration.

use num_rational::BigRational;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::engine::exact::{self, Histogram, MAX_EDGES};
use crate::engine::hash::{self, Stream};
use crate::engine::{ClusterRecord, PercolationConfig};
use crate::error::{Error, Result};
use crate::estimators::{farm, Tally};
use crate::lattice::{LatticeSpec, Region, Site};
use crate::scales::{Level, ScaleLadder};
use crate::world::{components, BitStates, Hashed, Search, States, Uniform, World};

/// `s^4 (ln s)^7`.
pub fn tame_threshold(s: u64) -> f64 {
    let x = s as f64;
    x.powi(4) * x.ln().powi(7)
}

/// `1 - exp(-(ln s)^2)`; `x` is `s`-bad when `P(T_s | C)` falls below it.
pub fn bad_threshold(s: u64) -> f64 {
    let l = (s as f64).ln();
    1.0 - (-l * l).exp()
}

/// Three-valued outcome of a statistical decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

impl Tri {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Tri::Yes
        } else {
            Tri::No
        }
    }
}

fn contains_box(region: &Region, x: &Site, s: i64) -> bool {
    match region {
        Region::Box { center, radius } => x.sup_dist(center) + s <= *radius,
        Region::Annulus { center, inner, outer } => {
            let m = x.sup_dist(center);
            m + s <= *outer && m - s > *inner
        }
        Region::Explicit(_) => match Region::ball(x.clone(), s).and_then(|b| b.sites(1 << 20)) {
            Ok(sites) => sites.iter().all(|y| region.contains(y)),
            Err(_) => false,
        },
    }
}

/// Whether `|C ∩ B(x;s)| < s^4 (ln s)^7` for an explored cluster.
///
/// The cluster must be complete (not truncated) and its exploration region
/// must contain `B(x;s)`; otherwise the count could be too small.
pub fn tame_event(cluster: &ClusterRecord, x: &Site, s: u64) -> Result<bool> {
    if s < 2 {
        return Err(Error::Precondition("s must be at least 2".into()));
    }
    if !cluster.contains(x) {
        return Err(Error::Precondition(format!("{x} is not in the cluster")));
    }
    if cluster.truncated {
        return Err(Error::Precondition("cluster exploration was truncated".into()));
    }
    if let Some(region) = &cluster.region {
        if !contains_box(region, x, s as i64) {
            return Err(Error::Precondition(format!("cluster not explored to radius {s} around {x}")));
        }
    }
    let n = cluster.vertices.iter().filter(|y| y.sup_dist(x) <= s as i64).count();
    Ok((n as f64) < tame_threshold(s))
}

/// Parameters of the regularity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityParams {
    /// Scales below `k` are not tested.
    pub k: u64,
    /// Scales tested; empty means every `s >= k` whose threshold does not
    /// exceed the world size (larger scales cannot be bad).
    #[serde(default)]
    pub s_list: Vec<u64>,
    pub n_inner: u64,
}

impl Default for RegularityParams {
    fn default() -> Self {
        RegularityParams { k: 3, s_list: Vec::new(), n_inner: 400 }
    }
}

impl RegularityParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("regularity K must be at least 2".into()));
        }
        if self.s_list.iter().any(|&s| s < 2) {
            return Err(Error::Config("regularity scales must be at least 2".into()));
        }
        if self.n_inner < 100 {
            return Err(Error::Config("n_inner must be at least 100".into()));
        }
        Ok(())
    }

    /// Scales to test in a world of `n_world` vertices.
    pub fn scales(&self, n_world: usize) -> Vec<u64> {
        if self.s_list.is_empty() {
            (self.k..).take_while(|&s| tame_threshold(s) <= n_world as f64).collect()
        } else {
            let mut v: Vec<u64> = self.s_list.iter().copied().filter(|&s| s >= self.k).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    }
}

/// How the non-frozen edges are resampled.
#[derive(Clone, Debug, PartialEq)]
pub enum Resampling {
    MonteCarlo { p: f64, seed: u64 },
    /// Enumerate all non-frozen edges (at most [`MAX_EDGES`]).
    Exact { p: BigRational },
}

/// How a badness verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// The frozen cluster alone already exceeds the threshold.
    Frozen,
    /// The whole world inside `B(x;s)` is below the threshold.
    Certain,
    Sampled,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleBadness {
    pub s: u64,
    pub threshold: f64,
    pub p_tame: f64,
    pub stderr: f64,
    pub bad: Tri,
    pub basis: Basis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub x: Site,
    pub per_s: Vec<ScaleBadness>,
    pub regular: Tri,
}

const FREE: u8 = 0;
const PIN_OPEN: u8 = 1;
const PIN_CLOSED: u8 = 2;

/// Pinned edges keep their pinned state; the rest come from `fresh`.
#[derive(Clone, Copy)]
pub struct Pinned<'a, F> {
    pub pin: &'a [u8],
    pub fresh: F,
}

impl<F: States> States for Pinned<'_, F> {
    #[inline]
    fn open(&self, e: u32) -> bool {
        match self.pin[e as usize] {
            FREE => self.fresh.open(e),
            x => x == PIN_OPEN,
        }
    }
}

/// Regularity of the vertices `ys` of `cluster`, given that `cluster` is the
/// open cluster of its vertices inside the region `within`.
///
/// Edges inside `cluster` are pinned open, edges from `cluster` to the rest of
/// the region pinned closed, and all others resampled; `T_s(y)` is then
/// evaluated on the cluster of `y` in the world. The verdict depends on the
/// vertex set alone.
pub fn regularity_in_world(
    w: &World,
    cluster: &[u32],
    within: impl Fn(u32) -> bool,
    ys: &[u32],
    params: &RegularityParams,
    res: &Resampling,
) -> Result<Vec<RegularityReport>> {
    params.validate()?;
    if w.sites().is_empty() {
        return Err(Error::InvalidGeometry("regularity needs a lattice world".into()));
    }
    let n = w.n_vertices();
    let mut in_c = vec![false; n];
    for &v in cluster {
        in_c[v as usize] = true;
    }
    for &y in ys {
        if !in_c[y as usize] {
            return Err(Error::Precondition(format!("{} is not in the cluster", w.site(y))));
        }
    }
    let pin: Vec<u8> = w
        .edges()
        .iter()
        .map(|&(u, v)| match (in_c[u as usize], in_c[v as usize]) {
            (true, true) => PIN_OPEN,
            (true, false) if within(v) => PIN_CLOSED,
            (false, true) if within(u) => PIN_CLOSED,
            _ => FREE,
        })
        .collect();
    let scales = params.scales(n);
    // (y index, s index) pairs that need resampling.
    let mut open_q: Vec<(usize, usize)> = Vec::new();
    let mut per: Vec<Vec<Option<ScaleBadness>>> = vec![vec![None; scales.len()]; ys.len()];
    for (a, &y) in ys.iter().enumerate() {
        let ys_site = w.site(y);
        for (b, &s) in scales.iter().enumerate() {
            let thr = tame_threshold(s);
            let frozen_count = cluster.iter().filter(|&&v| w.site(v).sup_dist(ys_site) <= s as i64).count();
            let world_count = w.sites().iter().filter(|z| z.sup_dist(ys_site) <= s as i64).count();
            let mk = |p: f64, bad: Tri, basis| ScaleBadness { s, threshold: bad_threshold(s), p_tame: p, stderr: 0.0, bad, basis };
            if frozen_count as f64 >= thr {
                per[a][b] = Some(mk(0.0, Tri::Yes, Basis::Frozen));
            } else if (world_count as f64) < thr {
                per[a][b] = Some(mk(1.0, Tri::No, Basis::Certain));
            } else {
                open_q.push((a, b));
            }
        }
    }
    if !open_q.is_empty() {
        let counts_tame = |st: &dyn Fn(u32) -> bool, search: &mut Search| -> Vec<bool> {
            struct Dyn<'a>(&'a dyn Fn(u32) -> bool);
            impl States for Dyn<'_> {
                fn open(&self, e: u32) -> bool {
                    (self.0)(e)
                }
            }
            let comp = search.component(w, &Dyn(st), cluster.iter().copied(), |_| true);
            open_q
                .iter()
                .map(|&(a, b)| {
                    let ysite = w.site(ys[a]);
                    let s = scales[b];
                    let c = comp.iter().filter(|&&v| w.site(v).sup_dist(ysite) <= s as i64).count();
                    (c as f64) < tame_threshold(s)
                })
                .collect()
        };
        match res {
            Resampling::MonteCarlo { p, seed } => {
                let k = open_q.len();
                let tallies = farm(
                    0,
                    params.n_inner,
                    || (vec![Tally::default(); k], Search::new(n)),
                    |(acc, search), r| {
                        let fresh = Hashed::new(w, Stream::new(*seed, r, *p));
                        let st = Pinned { pin: &pin, fresh };
                        let tame = counts_tame(&|e| st.open(e), search);
                        for (t, ok) in acc.iter_mut().zip(tame) {
                            t.push_bool(ok);
                        }
                    },
                    |(a, s), (b, _)| (a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(), s),
                );
                for (&(a, b), t) in open_q.iter().zip(&tallies.0) {
                    let s = scales[b];
                    let pt = t.sum / t.n as f64;
                    let se = (pt * (1.0 - pt) / t.n as f64).sqrt();
                    let thr = bad_threshold(s);
                    let bad = if pt + 3.0 * se < thr {
                        Tri::Yes
                    } else if pt - 3.0 * se >= thr {
                        Tri::No
                    } else {
                        Tri::Unknown
                    };
                    per[a][b] = Some(ScaleBadness { s, threshold: thr, p_tame: pt, stderr: se, bad, basis: Basis::Sampled });
                }
            }
            Resampling::Exact { p } => {
                exact::check_p(p)?;
                let free: Vec<u32> = (0..w.n_edges() as u32).filter(|&e| pin[e as usize] == FREE).collect();
                if free.len() > MAX_EDGES {
                    return Err(Error::TooLarge(format!("{} free edges exceeds {MAX_EDGES}", free.len())));
                }
                let mut hs = vec![Histogram::new(free.len()); open_q.len()];
                let mut states = BitStates::collect(w, &Pinned { pin: &pin, fresh: crate::world::Uniform(false) });
                let mut search = Search::new(n);
                for mask in 0u64..(1u64 << free.len()) {
                    for (j, &e) in free.iter().enumerate() {
                        states.set(e, mask >> j & 1 == 1);
                    }
                    let tame = counts_tame(&|e| states.open(e), &mut search);
                    let kk = mask.count_ones() as usize;
                    for (h, ok) in hs.iter_mut().zip(tame) {
                        if ok {
                            h.counts[kk] += 1;
                        }
                    }
                }
                for (&(a, b), h) in open_q.iter().zip(&hs) {
                    let s = scales[b];
                    let pr = h.prob(p);
                    let thr = bad_threshold(s);
                    let bad = Tri::from_bool(pr < exact::rational(thr)?);
                    per[a][b] = Some(ScaleBadness { s, threshold: thr, p_tame: exact::to_f64(&pr), stderr: 0.0, bad, basis: Basis::Exact });
                }
            }
        }
    }
    Ok(ys
        .iter()
        .zip(per)
        .map(|(&y, row)| {
            let per_s: Vec<ScaleBadness> = row.into_iter().map(|x| x.expect("every scale decided")).collect();
            let regular = if per_s.iter().any(|b| b.bad == Tri::Yes) {
                Tri::No
            } else if per_s.iter().any(|b| b.bad == Tri::Unknown) {
                Tri::Unknown
            } else {
                Tri::Yes
            };
            RegularityReport { x: w.site(y).clone(), per_s, regular }
        })
        .collect())
}

/// Tag separating regularity streams from the outer samples.
pub const REGULARITY_TAG: u64 = 0x7265_6775_6c61_72;

impl Resampling {
    /// The Monte Carlo stream is keyed by the candidate set so that its
    /// verdict does not depend on the outer sample.
    pub fn for_set(&self, sites: &[Site]) -> Resampling {
        match self {
            Resampling::MonteCarlo { p, seed } => {
                Resampling::MonteCarlo { p: *p, seed: hash::derive_seed(*seed, REGULARITY_TAG, label_hash(sites)) }
            }
            r => r.clone(),
        }
    }
}

/// Regularity of `x` for the cluster `C_A(x)` in one sample.
///
/// The unrestricted cluster in `T_s` is approximated by the cluster inside a
/// box of radius `outer(A) + max s` around the center of `A`.
pub fn estimate_regularity(cfg: &PercolationConfig, x: &Site, a: &Region, params: &RegularityParams) -> Result<RegularityReport> {
    params.validate()?;
    cfg.spec.check_site(x)?;
    if !a.contains(x) {
        return Err(Error::Precondition(format!("{x} is not in the region")));
    }
    let center = a.center().cloned().unwrap_or_else(|| Site::origin(cfg.spec.d));
    let outer = a.outer_radius().ok_or_else(|| Error::Unsupported("regularity needs a box or annulus".into()))?;
    let s_max = if params.s_list.is_empty() { 8 } else { *params.s_list.iter().max().unwrap() as i64 };
    let w = World::from_region(&cfg.spec, &Region::ball(center, outer + s_max)?, 1 << 24)?;
    let st = Hashed::new(&w, cfg.stream());
    let xi = w.id_of(x)?;
    let mut search = Search::new(w.n_vertices());
    let mut comp = search.component(&w, &st, [xi], |v| a.contains(w.site(v))).to_vec();
    comp.sort_unstable();
    let sites: Vec<Site> = comp.iter().map(|&v| w.site(v).clone()).collect();
    let res = Resampling::MonteCarlo { p: cfg.p, seed: cfg.seed }.for_set(&sites);
    let mut out = regularity_in_world(&w, &comp, |v| a.contains(w.site(v)), &[xi], params, &res)?;
    Ok(out.remove(0))
}

/// Boundary-cardinality window of a good spanning set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryWindow {
    /// `r^lo <= |d_in C| <= r^hi` with `r` the inner radius of `Ann_i^0`,
    /// and likewise for the outer boundary with the outer radius.
    Exponent { lo: f64, hi: f64 },
    /// Fixed inclusive count ranges.
    Counts { inner: (u64, u64), outer: (u64, u64) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodSpanningParams {
    pub window: BoundaryWindow,
    pub regular_fraction: f64,
    pub minimality: bool,
}

impl Default for GoodSpanningParams {
    fn default() -> Self {
        GoodSpanningParams { window: BoundaryWindow::Exponent { lo: 1.75, hi: 2.25 }, regular_fraction: 0.5, minimality: true }
    }
}

impl GoodSpanningParams {
    pub fn validate(&self) -> Result<()> {
        match self.window {
            BoundaryWindow::Exponent { lo, hi } if !(0.0 < lo && lo < hi) => {
                return Err(Error::Config("window exponents need 0 < lo < hi".into()))
            }
            BoundaryWindow::Counts { inner, outer } if inner.0 > inner.1 || outer.0 > outer.1 => {
                return Err(Error::Config("empty count window".into()))
            }
            _ => {}
        }
        if !(self.regular_fraction > 0.0 && self.regular_fraction <= 1.0) {
            return Err(Error::Config("regular fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn bounds(&self, level: &Level) -> ((f64, f64), (f64, f64)) {
        match self.window {
            BoundaryWindow::Exponent { lo, hi } => {
                let (r, s) = (level.sub[0].0.max(0) as f64, level.sub[0].1 as f64);
                ((r.powf(lo), r.powf(hi)), (s.powf(lo), s.powf(hi)))
            }
            BoundaryWindow::Counts { inner, outer } => {
                ((inner.0 as f64, inner.1 as f64), (outer.0 as f64, outer.1 as f64))
            }
        }
    }
}

/// A certified (or rejected) spanning cluster of `Ann_i^q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpanningSetRecord {
    #[serde(flatten)]
    pub cluster: ClusterRecord,
    pub level: usize,
    pub q: usize,
    pub good: bool,
    pub reasons: Vec<String>,
    pub regular_in: usize,
    pub regular_out: usize,
    pub undecided: usize,
}

/// A certification with world-level data kept for later events.
#[derive(Clone, Debug)]
pub struct Certified {
    pub record: SpanningSetRecord,
    /// Sorted world vertex ids.
    pub vertices: Vec<u32>,
    /// Sorted ids of regular boundary vertices.
    pub regular: Vec<u32>,
}

impl Certified {
    /// Canonical label: the sorted vertex list.
    pub fn label(&self) -> &[Site] {
        &self.record.cluster.vertices
    }
}

/// Stable 64-bit digest of a sorted site list.
pub fn label_hash(sites: &[Site]) -> u64 {
    let mut h = hash::GOLDEN ^ sites.len() as u64;
    for s in sites {
        for &c in s.coords() {
            h = hash::mix64(h ^ (c as i64 as u64));
        }
    }
    h
}

/// Certification of spanning sets on one configuration of a world.
pub struct Certifier<'a, S> {
    pub spec: LatticeSpec,
    pub world: &'a World,
    pub states: S,
    pub ladder: &'a ScaleLadder,
    pub good: GoodSpanningParams,
    pub reg: RegularityParams,
    pub resampling: Resampling,
}

struct Items {
    pass: Tri,
    reasons: Vec<String>,
    regular_in: usize,
    regular_out: usize,
    undecided: usize,
    regular: Vec<u32>,
}

impl<'a, S: States + Sync> Certifier<'a, S> {
    pub fn new(
        world: &'a World,
        states: S,
        ladder: &'a ScaleLadder,
        good: GoodSpanningParams,
        reg: RegularityParams,
        resampling: Resampling,
    ) -> Result<Self> {
        let spec = *world.spec().ok_or_else(|| Error::InvalidGeometry("certification needs a lattice world".into()))?;
        good.validate()?;
        reg.validate()?;
        ladder.validate()?;
        Ok(Certifier { spec, world, states, ladder, good, reg, resampling })
    }

    pub fn sub_region(&self, level: usize, q: usize) -> Result<Region> {
        self.ladder.level(level)?.sub_region(self.spec.d, q)
    }

    fn boundaries(&self, region: &Region, comp: &[u32]) -> (Vec<u32>, Vec<u32>) {
        let w = self.world;
        let bi = comp.iter().copied().filter(|&v| region.is_inner_boundary(&self.spec, w.site(v))).collect();
        let bo = comp.iter().copied().filter(|&v| region.is_outer_boundary(&self.spec, w.site(v))).collect();
        (bi, bo)
    }

    /// Open components of the world inside `Ann_i^q` that touch both
    /// boundaries, each sorted, ordered by smallest vertex.
    pub fn spanning(&self, level: usize, q: usize) -> Result<Vec<Vec<u32>>> {
        let region = self.sub_region(level, q)?;
        let w = self.world;
        let inside: Vec<bool> = w.sites().iter().map(|x| region.contains(x)).collect();
        self.spanning_within(&self.states, &region, &|v| inside[v as usize])
    }

    fn spanning_within(&self, st: &dyn States, region: &Region, allowed: &dyn Fn(u32) -> bool) -> Result<Vec<Vec<u32>>> {
        let w = self.world;
        let labels = components(w, &st, allowed);
        let mut groups: Vec<Vec<u32>> = Vec::new();
        let mut slot = rustc_hash::FxHashMap::default();
        for (v, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let i = *slot.entry(l).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[i].push(v as u32);
        }
        Ok(groups
            .into_iter()
            .filter(|g| {
                let (bi, bo) = self.boundaries(region, g);
                !bi.is_empty() && !bo.is_empty()
            })
            .collect())
    }

    fn items_1_to_3(&self, level: usize, q: usize, comp: &[u32]) -> Result<Items> {
        let lv = self.ladder.level(level)?;
        let region = self.sub_region(level, q)?;
        let w = self.world;
        let mut reasons = Vec::new();
        let mut pass = Tri::Yes;
        let (bi, bo) = self.boundaries(&region, comp);
        if q == 0 {
            reasons.push("sub-annulus index 0 is not admissible".into());
            pass = Tri::No;
        }
        if bi.is_empty() || bo.is_empty() {
            reasons.push("not spanning".into());
            pass = Tri::No;
        }
        for r in 0..lv.sub.len() {
            if r == q {
                continue;
            }
            let other = lv.sub_region(self.spec.d, r)?;
            let (oi, oo) = self.boundaries(&other, comp);
            if comp.iter().all(|&v| other.contains(w.site(v))) && !oi.is_empty() && !oo.is_empty() {
                reasons.push(format!("also spans sub-annulus {r}"));
                pass = Tri::No;
            }
        }
        let ((ilo, ihi), (olo, ohi)) = self.good.bounds(lv);
        let (ni, no) = (bi.len() as f64, bo.len() as f64);
        if ni < ilo {
            reasons.push(format!("inner boundary too small ({ni} < {ilo:.3})"));
            pass = Tri::No;
        }
        if ni > ihi {
            reasons.push(format!("inner boundary too large ({ni} > {ihi:.3})"));
            pass = Tri::No;
        }
        if no < olo {
            reasons.push(format!("outer boundary too small ({no} < {olo:.3})"));
            pass = Tri::No;
        }
        if no > ohi {
            reasons.push(format!("outer boundary too large ({no} > {ohi:.3})"));
            pass = Tri::No;
        }
        let mut ys: Vec<u32> = bi.iter().chain(&bo).copied().collect();
        ys.sort_unstable();
        ys.dedup();
        let reports = if ys.is_empty() {
            Vec::new()
        } else {
            let sites: Vec<Site> = comp.iter().map(|&v| w.site(v).clone()).collect();
            let res = self.resampling.for_set(&sites);
            regularity_in_world(w, comp, |v| region.contains(w.site(v)), &ys, &self.reg, &res)?
        };
        let verdict = |v: u32| reports[ys.binary_search(&v).expect("boundary vertex")].regular;
        let count = |b: &[u32], t: Tri| b.iter().filter(|&&v| verdict(v) == t).count();
        let (ri, ro) = (count(&bi, Tri::Yes), count(&bo, Tri::Yes));
        let (ui, uo) = (count(&bi, Tri::Unknown), count(&bo, Tri::Unknown));
        let f = self.good.regular_fraction;
        if (((ri + ui) as f64) < f * ni) || (((ro + uo) as f64) < f * no) {
            reasons.push(format!("too few regular boundary vertices (inner {ri}/{ni}, outer {ro}/{no})"));
            pass = Tri::No;
        } else if (ri as f64) < f * ni || (ro as f64) < f * no {
            reasons.push("regular fraction undecided".into());
            if pass == Tri::Yes {
                pass = Tri::Unknown;
            }
        }
        let regular = ys.iter().copied().filter(|&v| verdict(v) == Tri::Yes).collect();
        Ok(Items { pass, reasons, regular_in: ri, regular_out: ro, undecided: ui + uo, regular })
    }

    /// Checks the four items of a good spanning set for a spanning cluster
    /// `comp` of `Ann_level^q`.
    pub fn certify(&self, level: usize, q: usize, comp: &[u32]) -> Result<Certified> {
        let mut comp = comp.to_vec();
        comp.sort_unstable();
        let region = self.sub_region(level, q)?;
        let (bi, bo) = self.boundaries(&region, &comp);
        if bi.is_empty() || bo.is_empty() {
            return Err(Error::Precondition("candidate does not span its sub-annulus".into()));
        }
        let mut items = self.items_1_to_3(level, q, &comp)?;
        if self.good.minimality && items.pass != Tri::No {
            let in_c: FxHashSet<u32> = comp.iter().copied().collect();
            for r in 1..q {
                let sub = self.sub_region(level, r)?;
                let w = self.world;
                // Components of C within the smaller sub-annulus, as lattice sets.
                for d in self.spanning_within(&Uniform(true), &sub, &|v| in_c.contains(&v) && sub.contains(w.site(v)))? {
                    let it = self.items_1_to_3(level, r, &d)?;
                    match it.pass {
                        Tri::Yes => {
                            items.reasons.push(format!("not minimal: a component in sub-annulus {r} qualifies"));
                            items.pass = Tri::No;
                        }
                        Tri::Unknown if items.pass == Tri::Yes => {
                            items.reasons.push(format!("minimality undecided in sub-annulus {r}"));
                            items.pass = Tri::Unknown;
                        }
                        _ => {}
                    }
                }
            }
        }
        let record = SpanningSetRecord {
            cluster: self.record(&region, &comp),
            level,
            q,
            good: items.pass == Tri::Yes,
            reasons: items.reasons,
            regular_in: items.regular_in,
            regular_out: items.regular_out,
            undecided: items.undecided,
        };
        Ok(Certified { record, vertices: comp, regular: items.regular })
    }

    fn record(&self, region: &Region, comp: &[u32]) -> ClusterRecord {
        let w = self.world;
        let in_c: FxHashSet<u32> = comp.iter().copied().collect();
        let mut open_edges = Vec::new();
        for &v in comp {
            for &(u, e) in w.adj(v) {
                if v < u && in_c.contains(&u) && self.states.open(e) {
                    open_edges.push(w.edge_id(e).expect("lattice world"));
                }
            }
        }
        open_edges.sort();
        let vertices: Vec<Site> = comp.iter().map(|&v| w.site(v).clone()).collect();
        let (bi, bo) = self.boundaries(region, comp);
        ClusterRecord {
            root: vertices[0].clone(),
            region: Some(region.clone()),
            vertices,
            open_edges,
            boundary_in: bi.iter().map(|&v| w.site(v).clone()).collect(),
            boundary_out: bo.iter().map(|&v| w.site(v).clone()).collect(),
            truncated: false,
        }
    }

    /// Every good spanning set of level `level` realized in this
    /// configuration. Level 0 yields the origin by convention.
    pub fn good_sets(&self, level: usize) -> Result<Vec<Certified>> {
        let lv = self.ladder.level(level)?;
        if level == 0 {
            let o = Site::origin(self.spec.d);
            let v = self.world.id_of(&o)?;
            let record = SpanningSetRecord {
                cluster: ClusterRecord {
                    root: o.clone(),
                    region: Some(Region::singleton(o.clone())),
                    vertices: vec![o],
                    open_edges: Vec::new(),
                    boundary_in: Vec::new(),
                    boundary_out: Vec::new(),
                    truncated: false,
                },
                level: 0,
                q: 0,
                good: true,
                reasons: Vec::new(),
                regular_in: 0,
                regular_out: 0,
                undecided: 0,
            };
            return Ok(vec![Certified { record, vertices: vec![v], regular: vec![v] }]);
        }
        let mut out = Vec::new();
        for q in 1..=lv.q_max() {
            for comp in self.spanning(level, q)? {
                let c = self.certify(level, q, &comp)?;
                if c.record.good {
                    out.push(c);
                }
            }
        }
        out.sort_by(|a, b| a.label().cmp(b.label()));
        Ok(out)
    }

    /// Whether `c` is exactly an open cluster of its sub-annulus here.
    pub fn holds(&self, c: &Certified) -> Result<bool> {
        if c.record.level == 0 {
            return Ok(true);
        }
        let region = self.sub_region(c.record.level, c.record.q)?;
        let w = self.world;
        let mut s = Search::new(w.n_vertices());
        let mut comp = s.component(w, &self.states, [c.vertices[0]], |v| region.contains(w.site(v))).to_vec();
        comp.sort_unstable();
        Ok(comp == c.vertices)
    }
}

/// Open edges whose closing disconnects `sources` from `targets` inside
/// the `allowed` vertices. Sources and targets outside `allowed` are ignored.
///
/// Sources and targets are contracted to single nodes; the answer is the set
/// of bridges separating the two in the reachable open subgraph.
pub fn pivotal_edges(
    w: &World,
    s: &impl States,
    sources: &[u32],
    targets: &[u32],
    allowed: impl Fn(u32) -> bool,
) -> Result<Vec<u32>> {
    let n = w.n_vertices();
    const NONE: u32 = u32::MAX;
    let mut node = vec![NONE; n];
    for &v in sources.iter().filter(|&&v| allowed(v)) {
        node[v as usize] = 0;
    }
    for &v in targets.iter().filter(|&&v| allowed(v)) {
        if node[v as usize] == 0 {
            return Ok(Vec::new());
        }
        node[v as usize] = 1;
    }
    let mut search = Search::new(n);
    let src: Vec<u32> = sources.iter().copied().filter(|&v| allowed(v)).collect();
    let reach = search.component(w, s, src, &allowed).to_vec();
    if !reach.iter().any(|&v| node[v as usize] == 1) {
        return Err(Error::Precondition("sources are not connected to targets".into()));
    }
    let mut nn = 2u32;
    for &v in &reach {
        if node[v as usize] == NONE {
            node[v as usize] = nn;
            nn += 1;
        }
    }
    let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nn as usize];
    for &v in &reach {
        for &(u, e) in w.adj(v) {
            if v < u && node[u as usize] != NONE && s.open(e) {
                let (a, b) = (node[v as usize], node[u as usize]);
                if a != b {
                    adj[a as usize].push((b, e));
                    adj[b as usize].push((a, e));
                }
            }
        }
    }
    let mut disc = vec![NONE; nn as usize];
    let mut low = vec![0u32; nn as usize];
    let mut has_t = vec![false; nn as usize];
    has_t[1] = true;
    let mut out = Vec::new();
    let mut timer = 1;
    disc[0] = 0;
    let mut stack: Vec<(u32, u32, usize)> = vec![(0, NONE, 0)];
    while let Some(top) = stack.last_mut() {
        let (v, pe, i) = (top.0, top.1, top.2);
        if i < adj[v as usize].len() {
            top.2 += 1;
            let (u, e) = adj[v as usize][i];
            if e == pe {
                continue;
            }
            if disc[u as usize] == NONE {
                disc[u as usize] = timer;
                low[u as usize] = timer;
                timer += 1;
                stack.push((u, e, 0));
            } else {
                low[v as usize] = low[v as usize].min(disc[u as usize]);
            }
        } else {
            stack.pop();
            if let Some(&(p, _, _)) = stack.last() {
                low[p as usize] = low[p as usize].min(low[v as usize]);
                if has_t[v as usize] {
                    if low[v as usize] > disc[p as usize] {
                        out.push(pe);
                    }
                    has_t[p as usize] = true;
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// An element of `Y`: attachment vertices and their chosen outside neighbors.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YPair {
    pub x_i: Site,
    pub x_i_star: Site,
    pub x_j: Site,
    pub x_j_star: Site,
}

/// Lexicographically smallest world neighbor of `v` passing `pred`. World
/// ids follow lexicographic order, so the smallest id is the answer.
fn star(w: &World, v: u32, pred: impl Fn(&Site) -> bool) -> Option<u32> {
    w.adj(v).iter().map(|&(u, _)| u).filter(|&u| pred(w.site(u))).min()
}

/// Pairs `(x_i, x_j)` of regular boundary vertices of `c` (outer) and `d`
/// (inner) whose attachment edges are open and pivotal for `c <-> d` inside
/// `S_j \ S_i`. Both sets must be realized as clusters in this configuration.
pub fn y_set<S: States + Sync>(cert: &Certifier<'_, S>, c: &Certified, d: &Certified) -> Result<Vec<YPair>> {
    if !cert.holds(c)? || !cert.holds(d)? {
        return Err(Error::Precondition("both sets must be realized as clusters".into()));
    }
    let (i, j) = (c.record.level, d.record.level);
    if i >= j {
        return Err(Error::Precondition("the first set must lie at a lower level".into()));
    }
    let w = cert.world;
    let s_i = cert.ladder.level(i)?.s_radius;
    let s_j = cert.ladder.level(j)?.s_radius;
    let mid = |v: u32| {
        let m = w.site(v).sup_norm();
        m <= s_j && m > s_i
    };
    let pivots = match pivotal_edges(w, &cert.states, &c.vertices, &d.vertices, mid) {
        Ok(p) => p,
        Err(Error::Precondition(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let outer_c = cert.ladder.level(i)?.sub[c.record.q].1;
    let inner_d = cert.ladder.level(j)?.sub[d.record.q].0;
    let rc = cert.sub_region(i, c.record.q)?;
    let rd = cert.sub_region(j, d.record.q)?;
    let att = |v: u32, star_v: Option<u32>| -> Option<u32> {
        let e = w.edge_between(v, star_v?)?;
        pivots.binary_search(&e).is_ok().then_some(star_v?)
    };
    let xs: Vec<(u32, u32)> = c
        .regular
        .iter()
        .filter(|&&v| rc.is_outer_boundary(&cert.spec, w.site(v)))
        .filter_map(|&v| att(v, star(w, v, |z| z.sup_norm() > outer_c)).map(|t| (v, t)))
        .collect();
    let zs: Vec<(u32, u32)> = d
        .regular
        .iter()
        .filter(|&&v| rd.is_inner_boundary(&cert.spec, w.site(v)))
        .filter_map(|&v| att(v, star(w, v, |z| z.sup_norm() <= inner_d)).map(|t| (v, t)))
        .collect();
    let mut out = Vec::new();
    for &(a, at) in &xs {
        for &(b, bt) in &zs {
            out.push(YPair {
                x_i: w.site(a).clone(),
                x_i_star: w.site(at).clone(),
                x_j: w.site(b).clone(),
                x_j_star: w.site(bt).clone(),
            });
        }
    }
    Ok(out)
}

/// Remove-and-retest definition of pivotality.
pub fn pivotal_edges_naive(
    w: &World,
    s: &impl States,
    sources: &[u32],
    targets: &[u32],
    allowed: impl Fn(u32) -> bool + Copy,
) -> Vec<u32> {
    let mut search = Search::new(w.n_vertices());
    let src: Vec<u32> = sources.iter().copied().filter(|&v| allowed(v)).collect();
    let tgt: FxHashSet<u32> = targets.iter().copied().filter(|&v| allowed(v)).collect();
    (0..w.n_edges() as u32)
        .filter(|&e| {
            s.open(e) && {
                let closed = crate::world::With { base: s, edge: e, open: false };
                !search.connects(w, &closed, src.iter().copied(), allowed, |v| tgt.contains(&v))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Mask, Uniform};
    use proptest::prelude::*;

    fn nn(d: usize) -> LatticeSpec {
        LatticeSpec::nearest_neighbor(d).unwrap()
    }

    #[test]
    fn thresholds() {
        // 16 (ln 2)^7
        assert!((tame_threshold(2) - 16.0 * 2f64.ln().powi(7)).abs() < 1e-12);
        assert!(tame_threshold(2) > 1.0 && tame_threshold(2) < 2.0);
        assert!((bad_threshold(2) - (1.0 - (-(2f64.ln().powi(2))).exp())).abs() < 1e-15);
    }

    fn record(sites: Vec<Site>, region: Option<Region>) -> ClusterRecord {
        let mut v = sites;
        v.sort();
        ClusterRecord {
            root: v[0].clone(),
            region,
            vertices: v,
            open_edges: Vec::new(),
            boundary_in: Vec::new(),
            boundary_out: Vec::new(),
            truncated: false,
        }
    }

    #[test]
    fn tame_cases() {
        let o = Site::origin(2);
        let single = record(vec![o.clone()], None);
        assert!(tame_event(&single, &o, 2).unwrap());
        let pair = record(vec![o.clone(), Site::new(&[1, 0])], None);
        assert!(!tame_event(&pair, &o, 2).unwrap());
        assert!(tame_event(&pair, &o, 3).unwrap());
        assert!(tame_event(&pair, &o, 1).is_err());
        let small = record(vec![o.clone()], Some(Region::ball(o.clone(), 1).unwrap()));
        assert!(tame_event(&small, &o, 2).is_err());
    }

    #[test]
    fn scales_auto_list() {
        let p = RegularityParams { k: 2, ..Default::default() };
        assert_eq!(p.scales(100), vec![2]);
        let p3 = RegularityParams::default();
        assert!(p3.scales(100).is_empty());
        assert!(RegularityParams { n_inner: 10, ..Default::default() }.validate().is_err());
    }

    fn line(r: i32) -> World {
        World::from_region(&nn(1), &Region::ball(Site::origin(1), r as i64).unwrap(), 1000).unwrap()
    }

    #[test]
    fn regularity_trivial_cases() {
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 3).unwrap(), 100).unwrap();
        let o = w.id_of(&Site::origin(2)).unwrap();
        let p = RegularityParams { k: 2, ..Default::default() };
        let all = |_: u32| true;
        let r = regularity_in_world(&w, &[o], all, &[o], &p, &Resampling::MonteCarlo { p: 0.5, seed: 1 }).unwrap();
        assert_eq!(r[0].regular, Tri::Yes);
        assert_eq!(r[0].per_s[0].p_tame, 1.0);
        // Two adjacent sites already violate T_2.
        let e = w.id_of(&Site::new(&[1, 0])).unwrap();
        let r = regularity_in_world(&w, &[o, e], all, &[o], &p, &Resampling::MonteCarlo { p: 0.5, seed: 1 }).unwrap();
        assert_eq!(r[0].regular, Tri::No);
        assert_eq!(r[0].per_s[0].basis, Basis::Frozen);
        assert!(regularity_in_world(&w, &[o], all, &[e], &p, &Resampling::MonteCarlo { p: 0.5, seed: 1 }).is_err());
    }

    #[test]
    fn regularity_exact_corner() {
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 1).unwrap(), 100).unwrap();
        assert_eq!(w.n_edges(), 12);
        let corner = w.id_of(&Site::new(&[-1, -1])).unwrap();
        let params = RegularityParams { k: 2, s_list: vec![2], n_inner: 20_000 };
        let half = Resampling::Exact { p: exact::rational(0.5).unwrap() };
        // Both corner edges pinned closed: T_2 is sure.
        let ex = regularity_in_world(&w, &[corner], |_| true, &[corner], &params, &half).unwrap();
        assert_eq!(ex[0].per_s[0].p_tame, 1.0);
        assert_eq!(ex[0].regular, Tri::Yes);
        // Region {corner}: both edges are free and T_2 needs both closed, so
        // P(T_2) = (1-p)^2 = 1/4, below 1 - exp(-ln^2 2).
        let only = |v: u32| v == corner;
        let ex = regularity_in_world(&w, &[corner], only, &[corner], &params, &half).unwrap();
        assert_eq!(ex[0].per_s[0].p_tame, 0.25);
        assert_eq!(ex[0].per_s[0].basis, Basis::Exact);
        assert_eq!(ex[0].regular, Tri::No);
        let mc = regularity_in_world(&w, &[corner], only, &[corner], &params, &Resampling::MonteCarlo { p: 0.5, seed: 3 }).unwrap();
        let got = &mc[0].per_s[0];
        assert!((got.p_tame - 0.25).abs() < 4.0 * got.stderr, "{}", got.p_tame);
        assert_eq!(got.bad, Tri::Yes);
    }

    #[test]
    fn regularity_sampled_matches_independent_estimate() {
        // d=3, s=3: B(y;3) has 343 sites against a threshold near 156, so
        // tameness depends on the free edges.
        use rand::{Rng, SeedableRng};
        let w = World::from_region(&nn(3), &Region::ball(Site::origin(3), 3).unwrap(), 1000).unwrap();
        let y = w.id_of(&Site::origin(3)).unwrap();
        let p = 0.3;
        let params = RegularityParams { k: 3, s_list: vec![3], n_inner: 4000 };
        let r = regularity_in_world(&w, &[y], |v| v == y, &[y], &params, &Resampling::MonteCarlo { p, seed: 5 }).unwrap();
        let got = &r[0].per_s[0];
        assert_eq!(got.basis, Basis::Sampled);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut search = Search::new(w.n_vertices());
        let n = 4000;
        let mut tame = 0;
        for _ in 0..n {
            let mut st = BitStates::collect(&w, &Uniform(false));
            for k in 0..w.n_edges() {
                st.set(k as u32, rng.gen::<f64>() < p);
            }
            if (search.component(&w, &st, [y], |_| true).len() as f64) < tame_threshold(3) {
                tame += 1;
            }
        }
        let q = tame as f64 / n as f64;
        let sd = (q * (1.0 - q) / n as f64 + got.stderr * got.stderr).sqrt();
        assert!(q > 0.05 && q < 0.95, "degenerate oracle {q}");
        assert!((got.p_tame - q).abs() < 4.0 * sd, "{} vs {q}", got.p_tame);
    }

    #[test]
    fn pivotal_basic() {
        // Path 0-1-2-3 open: every edge pivotal.
        let w = World::from_edges(4, &[(0, 1), (1, 2), (2, 3)], 0).unwrap();
        assert_eq!(pivotal_edges(&w, &Uniform(true), &[0], &[3], |_| true).unwrap(), vec![0, 1, 2]);
        // Two disjoint paths 0-1-3 and 0-2-3.
        let w = World::from_edges(4, &[(0, 1), (1, 3), (0, 2), (2, 3)], 0).unwrap();
        assert!(pivotal_edges(&w, &Uniform(true), &[0], &[3], |_| true).unwrap().is_empty());
        assert!(pivotal_edges(&w, &Uniform(false), &[0], &[3], |_| true).is_err());
        // Theta graph 0..3 with pendant bridge 3-4.
        let w = World::from_edges(5, &[(0, 1), (1, 3), (0, 2), (2, 3), (0, 3), (3, 4)], 0).unwrap();
        assert_eq!(pivotal_edges(&w, &Uniform(true), &[0], &[4], |_| true).unwrap(), vec![5]);
        // Source and target overlap: nothing is pivotal.
        assert!(pivotal_edges(&w, &Uniform(true), &[0, 4], &[4], |_| true).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn pivotal_matches_remove_and_retest(mask in 0u64..(1 << 12), s in 0u32..9, t in 0u32..9, block in 0u32..9) {
            let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 1).unwrap(), 100).unwrap();
            let st = Mask(mask);
            let allowed = move |v: u32| v != block || v == s || v == t;
            let fast = pivotal_edges(&w, &st, &[s], &[t], allowed);
            let mut search = Search::new(9);
            let conn = allowed(s) && allowed(t) && search.connects(&w, &st, [s], allowed, |v| v == t);
            match fast {
                Ok(p) => {
                    prop_assert!(conn);
                    prop_assert_eq!(p, pivotal_edges_naive(&w, &st, &[s], &[t], allowed));
                }
                Err(_) => prop_assert!(!conn),
            }
        }

        #[test]
        fn pivotal_sets_match_remove_and_retest(mask in 0u64..(1 << 17), a in 0u32..12, b in 0u32..12, c in 0u32..12) {
            let sites: Vec<Site> = (0..4).flat_map(|x| (0..3).map(move |y| Site::new(&[x, y]))).collect();
            let w = World::from_sites(&nn(2), sites);
            let st = Mask(mask);
            let srcs = [a, b];
            let tgts = [c];
            if let Ok(p) = pivotal_edges(&w, &st, &srcs, &tgts, |_| true) {
                prop_assert_eq!(p, pivotal_edges_naive(&w, &st, &srcs, &tgts, |_| true));
            }
        }
    }

    fn toy_ladder() -> ScaleLadder {
        ScaleLadder::custom(vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(1, 2), (0, 3)], ann: (0, 3), s_radius: 2 },
        ])
        .unwrap()
    }

    #[test]
    fn full_annulus_is_too_large() {
        let ladder = toy_ladder();
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 4).unwrap(), 1000).unwrap();
        let good = GoodSpanningParams { window: BoundaryWindow::Exponent { lo: 1.75, hi: 2.25 }, ..Default::default() };
        let cert = Certifier::new(&w, Uniform(true), &ladder, good, RegularityParams::default(), Resampling::MonteCarlo { p: 1.0, seed: 0 }).unwrap();
        let sp = cert.spanning(1, 1).unwrap();
        assert_eq!(sp.len(), 1);
        let c = cert.certify(1, 1, &sp[0]).unwrap();
        // Inner radius 1 gives window [1, 1]; the annulus B(3)\B(0) has 8 inner
        // boundary sites... the ring at sup norm 1 with one extreme coordinate.
        assert_eq!(c.record.cluster.boundary_in.len(), 4);
        assert!(!c.record.good);
        assert!(c.record.reasons.iter().any(|r| r.contains("too large")), "{:?}", c.record.reasons);
    }

    #[test]
    fn lower_window_rejects() {
        let ladder = toy_ladder();
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 4).unwrap(), 1000).unwrap();
        let good = GoodSpanningParams { window: BoundaryWindow::Counts { inner: (100, 200), outer: (0, 1000) }, ..Default::default() };
        let cert = Certifier::new(&w, Uniform(true), &ladder, good, RegularityParams::default(), Resampling::MonteCarlo { p: 1.0, seed: 0 }).unwrap();
        let sp = cert.spanning(1, 1).unwrap();
        let c = cert.certify(1, 1, &sp[0]).unwrap();
        assert!(!c.record.good);
        assert!(c.record.reasons.iter().any(|r| r.contains("too small")));
    }

    #[test]
    fn minimality_rejects_outer_copy() {
        // All-open world: the q=2 cluster contains the q=1 cluster, which
        // passes items 1-3 under a permissive window, so q=2 fails item 4.
        let ladder = ScaleLadder::custom(vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(2, 3), (1, 4), (0, 5)], ann: (0, 5), s_radius: 3 },
        ])
        .unwrap();
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 5).unwrap(), 1000).unwrap();
        let good = GoodSpanningParams { window: BoundaryWindow::Counts { inner: (0, 1000), outer: (0, 1000) }, ..Default::default() };
        let cert = Certifier::new(&w, Uniform(true), &ladder, good, RegularityParams::default(), Resampling::MonteCarlo { p: 1.0, seed: 0 }).unwrap();
        let q1 = cert.certify(1, 1, &cert.spanning(1, 1).unwrap()[0]).unwrap();
        assert!(q1.record.good, "{:?}", q1.record.reasons);
        let q2 = cert.certify(1, 2, &cert.spanning(1, 2).unwrap()[0]).unwrap();
        assert!(!q2.record.good);
        assert!(q2.record.reasons.iter().any(|r| r.contains("not minimal")));
        let gs = cert.good_sets(1).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].record.q, 1);
    }

    #[test]
    fn spanning_needs_both_boundaries() {
        let ladder = toy_ladder();
        let w = World::from_region(&nn(2), &Region::ball(Site::origin(2), 4).unwrap(), 1000).unwrap();
        let cert = Certifier::new(&w, Uniform(false), &ladder, GoodSpanningParams::default(), RegularityParams::default(), Resampling::MonteCarlo { p: 0.0, seed: 0 }).unwrap();
        assert!(cert.spanning(1, 1).unwrap().is_empty());
        assert!(cert.good_sets(1).unwrap().is_empty());
        assert!(cert.certify(1, 1, &[0]).is_err());
    }

    #[test]
    fn ladder_rejects_empty_sub() {
        let l = ScaleLadder::custom(vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(2, 2), (1, 3)], ann: (1, 3), s_radius: 2 },
        ]);
        assert!(l.is_err());
    }

    #[test]
    fn corridor_has_one_y_pair() {
        let ladder = ScaleLadder::custom(vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(1, 2), (0, 3)], ann: (0, 3), s_radius: 2 },
            Level { sub: vec![(5, 6), (4, 7)], ann: (4, 7), s_radius: 6 },
        ])
        .unwrap();
        let w = line(8);
        let good = GoodSpanningParams { window: BoundaryWindow::Counts { inner: (1, 1), outer: (1, 1) }, ..Default::default() };
        // Open exactly the positive half-line 1..=7.
        let mut st = BitStates::collect(&w, &Uniform(false));
        for a in 1..7 {
            let (u, v) = (w.id_of(&Site::new(&[a])).unwrap(), w.id_of(&Site::new(&[a + 1])).unwrap());
            st.set(w.edge_between(u, v).unwrap(), true);
        }
        let cert = Certifier::new(&w, &st, &ladder, good, RegularityParams::default(), Resampling::MonteCarlo { p: 0.5, seed: 0 }).unwrap();
        let c = cert.good_sets(1).unwrap();
        let d = cert.good_sets(2).unwrap();
        assert_eq!((c.len(), d.len()), (1, 1));
        let y = y_set(&cert, &c[0], &d[0]).unwrap();
        assert_eq!(y.len(), 1);
        assert_eq!(y[0].x_i, Site::new(&[3]));
        assert_eq!(y[0].x_i_star, Site::new(&[4]));
        assert_eq!(y[0].x_j, Site::new(&[5]));
        assert_eq!(y[0].x_j_star, Site::new(&[4]));
    }

    #[test]
    fn disconnected_sets_give_empty_y() {
        let ladder = ScaleLadder::custom(vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(1, 2), (0, 3)], ann: (0, 3), s_radius: 2 },
            Level { sub: vec![(5, 6), (4, 7)], ann: (4, 7), s_radius: 6 },
        ])
        .unwrap();
        let w = line(8);
        let good = GoodSpanningParams { window: BoundaryWindow::Counts { inner: (1, 1), outer: (1, 1) }, ..Default::default() };
        let mut st = BitStates::collect(&w, &Uniform(true));
        let (u, v) = (w.id_of(&Site::new(&[4])).unwrap(), w.id_of(&Site::new(&[5])).unwrap());
        st.set(w.edge_between(u, v).unwrap(), false);
        // Cut the C side at 0 too so C = [1, 3] is a cluster of B(3)\B(0).
        let cert = Certifier::new(&w, &st, &ladder, good, RegularityParams::default(), Resampling::MonteCarlo { p: 0.5, seed: 0 }).unwrap();
        let c = cert.good_sets(1).unwrap();
        let d = cert.good_sets(2).unwrap();
        assert!(!c.is_empty() && !d.is_empty());
        for a in &c {
            for b in &d {
                if a.vertices[0] > w.id_of(&Site::origin(1)).unwrap() && b.vertices[0] > w.id_of(&Site::origin(1)).unwrap() {
                    assert!(y_set(&cert, a, b).unwrap().is_empty());
                }
            }
        }
    }

    #[test]
    fn estimate_regularity_lattice() {
        let cfg = PercolationConfig::new(nn(2), 0.0, 3).unwrap();
        let a = Region::annulus(Site::origin(2), 2, 6).unwrap();
        let r = estimate_regularity(&cfg, &Site::new(&[3, 0]), &a, &RegularityParams { k: 2, ..Default::default() }).unwrap();
        assert_eq!(r.regular, Tri::Yes);
        assert!(estimate_regularity(&cfg, &Site::origin(2), &a, &RegularityParams::default()).is_err());
    }

    #[test]
    fn label_hash_distinguishes() {
        let a = vec![Site::new(&[0, 1])];
        let b = vec![Site::new(&[1, 0])];
        assert_ne!(label_hash(&a), label_hash(&b));
        assert_eq!(label_hash(&a), label_hash(&a.clone()));
    }
}
