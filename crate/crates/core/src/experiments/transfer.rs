//! Transitions between good spanning sets of successive levels: per-sample
//! event classification, kernel extraction, the matrix-product reconstruction
//! of arm probabilities, and the exhaustive checks on tiny geometries.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::clusters::{label_hash, y_set, BoundaryWindow, Certified, Certifier, GoodSpanningParams, RegularityParams, Resampling};
use crate::engine::exact::{self, Histogram, MAX_EDGES};
use crate::engine::PercolationConfig;
use crate::error::{Error, Result};
use crate::estimators::{farm, Estimate, Tally};
use crate::lattice::{LatticeSpec, Site};
use crate::scales::{Level, ScaleLadder};
use crate::world::{Hashed, Mask, Search, States, World};

use super::family::{CompiledEvent, CylinderEvent, FamilyWorld};

/// A finite world with a ladder, conditioning sets and a cylinder event.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub name: String,
    pub fw: FamilyWorld,
    pub ladder: ScaleLadder,
    pub event: CylinderEvent,
    pub good: GoodSpanningParams,
    pub reg: RegularityParams,
    spec: LatticeSpec,
    compiled: CompiledEvent,
    sup: Vec<i64>,
}

impl Geometry {
    pub fn new(
        name: impl Into<String>,
        fw: FamilyWorld,
        ladder: ScaleLadder,
        event: CylinderEvent,
        good: GoodSpanningParams,
        reg: RegularityParams,
    ) -> Result<Self> {
        let spec = *fw.world.spec().ok_or_else(|| Error::InvalidGeometry("lattice world required".into()))?;
        ladder.validate()?;
        good.validate()?;
        reg.validate()?;
        let compiled = event.compile(&fw.world)?;
        for (i, lv) in ladder.levels.iter().enumerate().skip(1) {
            if !(lv.s_radius > lv.sub[0].0 && lv.s_radius <= lv.sub[0].1) {
                return Err(Error::InvalidScales(format!("level {i}: S_i must cut Ann_i^0")));
            }
            if lv.sub[lv.q_max()].1 > fw.n {
                return Err(Error::InvalidGeometry(format!("level {i} reaches beyond B(n) with n = {}", fw.n)));
            }
            if lv.q_max() == 0 {
                return Err(Error::InvalidScales(format!("level {i} has no admissible sub-annulus")));
            }
        }
        if ladder.levels.len() > 1 && event.radius()? > ladder.levels[1].s_radius {
            return Err(Error::InvalidGeometry("the event box must lie in S_1".into()));
        }
        let sup = fw.world.sites().iter().map(Site::sup_norm).collect();
        Ok(Geometry { name: name.into(), fw, ladder, event, good, reg, spec, compiled, sup })
    }

    pub fn world(&self) -> &World {
        &self.fw.world
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// Deepest level `j` the ladder supports here.
    pub fn max_level(&self) -> usize {
        self.ladder.levels.len() - 1
    }

    /// Warnings for levels beyond `Q(n)`.
    pub fn gate_warnings(&self, j: usize) -> Vec<String> {
        let min_norm = self
            .fw
            .world
            .sites()
            .iter()
            .enumerate()
            .filter(|&(v, _)| self.fw.target[v] || self.fw.obstacle[v])
            .map(|(_, x)| x.sup_norm())
            .min()
            .unwrap_or(i64::MAX);
        match self.ladder.q_of_n(min_norm) {
            Ok(q) if (j as u64) < q => Vec::new(),
            Ok(q) => vec![format!("level {j} is not below Q(n) = {q}; toy mode proceeds")],
            Err(_) => vec![format!("Q(n) is undefined for this ladder; toy mode proceeds at level {j}")],
        }
    }

    fn s(&self, i: usize) -> i64 {
        self.ladder.levels[i].s_radius
    }

    fn in_s(&self, i: usize, v: u32) -> bool {
        self.sup[v as usize] <= self.s(i)
    }

    fn in_ds(&self, i: usize, v: u32) -> bool {
        let s = self.s(i);
        let m = self.sup[v as usize];
        m <= s && m > s - self.spec.range()
    }

    pub fn certifier<S: States + Sync>(&self, st: S, res: &Resampling) -> Result<Certifier<'_, S>> {
        Certifier::new(&self.fw.world, st, &self.ladder, self.good.clone(), self.reg.clone(), res.clone())
    }
}

/// `from <->_X to`: an open path from some `a in from ∩ X` to some `b in to`
/// with every vertex in `X`.
fn conn(w: &World, st: &impl States, search: &mut Search, from: &[u32], x: impl Fn(u32) -> bool, to: impl Fn(u32) -> bool) -> bool {
    let src: Vec<u32> = from.iter().copied().filter(|&v| x(v)).collect();
    search.connects(w, st, src, &x, |v| to(v) && x(v))
}

fn member(set: &[u32]) -> impl Fn(u32) -> bool + '_ {
    move |v| set.binary_search(&v).is_ok()
}

/// First transition from the origin to a level-1 set `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FirstStep {
    pub c: usize,
    /// `H(C) ∩ {0 <->_{S_1} C} \ {0 <->_{¬C} ∂S_1}`.
    pub m0_hat: bool,
    /// `G(0, C)`.
    pub g: bool,
    /// `F(0, C)`.
    pub f: bool,
}

/// Transition from `C` at level `i` to `D` at level `i+1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub c: usize,
    pub d: usize,
    /// `H(D) ∩ {C <->_{¬S_i} D} \ {C <->_{¬D} ∂S_{i+1}}`.
    pub m: bool,
    pub g: bool,
    pub f: bool,
}

/// Everything the transfer experiments read from one configuration.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub e: bool,
    pub arm: bool,
    /// Good sets of levels `1..=j`; `sets[0]` is level 1.
    pub sets: Vec<Vec<Certified>>,
    pub first: Vec<FirstStep>,
    /// `steps[i-1]` holds transitions from level `i` to `i+1`.
    pub steps: Vec<Vec<Step>>,
    /// `gamma[i-1][c]`: `C <->_{¬(S_i ∪ D_n)} V_n` for the `c`-th set of level `i`.
    pub gamma: Vec<Vec<bool>>,
    /// Sets `C` (including the origin) with more than one `D` realizing `G(C, D)`.
    pub g_violations: u64,
    /// Pairs with `G(C, D)` but not `F(C, D)`.
    pub gf_violations: u64,
}

/// Classifies one configuration up to level `j`.
pub fn analyze<S: States + Sync + Copy>(g: &Geometry, st: S, j: usize, res: &Resampling, search: &mut Search) -> Result<Snapshot> {
    if j == 0 || j > g.max_level() {
        return Err(Error::OutOfRange(format!("level {j} not in 1..={}", g.max_level())));
    }
    let w = g.world();
    let fw = &g.fw;
    let cert = g.certifier(st, res)?;
    let sets: Vec<Vec<Certified>> = (1..=j).map(|i| cert.good_sets(i)).collect::<Result<_>>()?;
    let e = g.compiled.holds(w, &st, search);
    let arm = fw.arm(&st, search);
    let off_dn = |v: u32| !fw.obstacle[v as usize];
    let is_t = |v: u32| fw.target[v as usize];
    let gamma: Vec<Vec<bool>> = sets
        .iter()
        .enumerate()
        .map(|(k, lv)| {
            let i = k + 1;
            lv.iter().map(|c| conn(w, &st, search, &c.vertices, |v| !g.in_s(i, v) && off_dn(v), is_t)).collect()
        })
        .collect();
    let o = [fw.origin];
    let mut first = Vec::new();
    let mut viol = 0;
    let mut gf_viol = 0;
    let mut g0_count = 0;
    for (ci, c) in sets[0].iter().enumerate() {
        let in_c = member(&c.vertices);
        let leak = conn(w, &st, search, &o, |v| !in_c(v), |v| g.in_ds(1, v));
        let to_c_s1 = conn(w, &st, search, &o, |v| g.in_s(1, v), &in_c);
        let to_c = conn(w, &st, search, &o, |_| true, &in_c);
        let to_c_off = conn(w, &st, search, &o, off_dn, &in_c);
        let gm = gamma[0][ci];
        let step = FirstStep { c: ci, m0_hat: to_c_s1 && !leak, g: to_c && gm && !leak, f: to_c_off && gm };
        g0_count += step.g as u32;
        gf_viol += (step.g && !step.f) as u64;
        first.push(step);
    }
    viol += (g0_count > 1) as u64;
    let mut steps = Vec::new();
    for i in 1..j {
        let mut out = Vec::new();
        for (ci, c) in sets[i - 1].iter().enumerate() {
            let mut gc = 0;
            for (di, d) in sets[i].iter().enumerate() {
                let in_d = member(&d.vertices);
                let to_d = conn(w, &st, search, &c.vertices, |v| !g.in_s(i, v), &in_d);
                let to_d_off = conn(w, &st, search, &c.vertices, |v| !g.in_s(i, v) && off_dn(v), &in_d);
                let leak = conn(w, &st, search, &c.vertices, |v| !in_d(v), |v| g.in_ds(i + 1, v));
                let gm = gamma[i][di];
                let m = to_d && !leak;
                let s = Step { c: ci, d: di, m, g: m && gm, f: to_d_off && gm };
                gc += s.g as u32;
                gf_viol += (s.g && !s.f) as u64;
                out.push(s);
            }
            viol += (gc > 1) as u64;
        }
        steps.push(out);
    }
    Ok(Snapshot { e, arm, sets, first, steps, gamma, g_violations: viol, gf_violations: gf_viol })
}

fn rat_str(r: &BigRational) -> String {
    r.to_string()
}

/// One good level-1 set in the exact reconstruction.
#[derive(Clone, Debug, Serialize)]
pub struct ExactSetRow {
    pub label: Vec<Site>,
    pub q: usize,
    pub p_h: String,
    pub m0: String,
    pub m0_hat: String,
    pub gamma1: String,
    /// `P(E ∩ G(0, C))`.
    pub p_eg: String,
    /// `P(E ∩ G(0, C)) == M_0(0, C) γ_1(C)` exactly.
    pub factorizes: bool,
    pub factorizes_hat: bool,
}

/// Both sides of the `j = 1` decomposition by full enumeration.
#[derive(Clone, Debug, Serialize)]
pub struct ExactReconstruction {
    pub geometry: String,
    pub p: String,
    pub edges: usize,
    pub rows: Vec<ExactSetRow>,
    /// `P(E, 0 <->_{¬D_n} V_n)` and its sure-event version.
    pub lhs: String,
    pub lhs_hat: String,
    /// `Σ_C M_0(0, C) γ_1(C)` and the version with `M̂_0`.
    pub rhs: String,
    pub rhs_hat: String,
    pub lhs_f64: f64,
    pub rhs_f64: f64,
    pub ratio: Option<f64>,
    pub ratio_hat: Option<f64>,
    /// `[1, 1 + err/rhs]` with `err = P(arm \ ∪F) + Σ_C P(F(0,C) \ G(0,C))`.
    /// Membership is checked as `rhs <= lhs <= rhs + err`, which also covers
    /// `rhs = 0`.
    pub band: Option<(f64, f64)>,
    pub band_hat: Option<(f64, f64)>,
    pub within_band: bool,
    pub within_band_hat: bool,
    /// `lhs - Σ_C P(E ∩ G(0, C)) == P(E ∩ arm \ ∪G)`.
    pub residual_identity: bool,
    pub g_violations: u64,
    pub gf_violations: u64,
    pub warnings: Vec<String>,
}

impl ExactReconstruction {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.factorizes && r.factorizes_hat)
            && self.within_band
            && self.within_band_hat
            && self.residual_identity
            && self.g_violations == 0
            && self.gf_violations == 0
    }
}

const H_H: usize = 0;
const H_M0: usize = 1;
const H_M0HAT: usize = 2;
const H_GAMMA: usize = 3;
const H_EG: usize = 4;
const H_G: usize = 5;
const H_FNOTG: usize = 6;

/// The `j = 1` reconstruction with every probability exact.
pub fn exact_reconstruction(g: &Geometry, p: &BigRational) -> Result<ExactReconstruction> {
    exact::check_p(p)?;
    let m = g.world().n_edges();
    if m > MAX_EDGES {
        return Err(Error::TooLarge(format!("{m} edges exceeds the enumeration limit of {MAX_EDGES}")));
    }
    let res = Resampling::Exact { p: p.clone() };
    let mut search = Search::new(g.world().n_vertices());
    let mut labels: FxHashMap<Vec<u32>, usize> = FxHashMap::default();
    let mut info: Vec<(Vec<Site>, usize)> = Vec::new();
    let mut per: Vec<Vec<Histogram>> = Vec::new();
    // lhs, lhs_hat, resid, resid_hat, arm_not_f
    let mut glob = vec![Histogram::new(m); 5];
    let (mut viol, mut gf_viol) = (0, 0);
    for mask in 0u64..(1u64 << m) {
        let snap = analyze(g, Mask(mask), 1, &res, &mut search)?;
        viol += snap.g_violations;
        gf_viol += snap.gf_violations;
        let k = mask.count_ones() as usize;
        let any_g = snap.first.iter().any(|s| s.g);
        let any_f = snap.first.iter().any(|s| s.f);
        let flags = [snap.e && snap.arm, snap.arm, snap.e && snap.arm && !any_g, snap.arm && !any_g, snap.arm && !any_f];
        for (h, f) in glob.iter_mut().zip(flags) {
            h.counts[k] += f as u64;
        }
        for (c, st) in snap.sets[0].iter().zip(&snap.first) {
            let idx = *labels.entry(c.vertices.clone()).or_insert_with(|| {
                info.push((c.label().to_vec(), c.record.q));
                per.push(vec![Histogram::new(m); 7]);
                per.len() - 1
            });
            let h = &mut per[idx];
            let ev = [true, snap.e && st.m0_hat, st.m0_hat, snap.gamma[0][st.c], snap.e && st.g, st.g, st.f && !st.g];
            for (hh, f) in h.iter_mut().zip(ev) {
                hh.counts[k] += f as u64;
            }
        }
    }
    let pr = |h: &Histogram| h.prob(p);
    let mut order: Vec<usize> = (0..info.len()).collect();
    order.sort_by(|&a, &b| info[a].0.cmp(&info[b].0));
    let mut rows = Vec::new();
    let (mut rhs, mut rhs_hat, mut sum_eg, mut sum_g, mut sum_fng) =
        (BigRational::zero(), BigRational::zero(), BigRational::zero(), BigRational::zero(), BigRational::zero());
    for &i in &order {
        let h = &per[i];
        let ph = pr(&h[H_H]);
        let gamma = if ph.is_zero() { BigRational::zero() } else { pr(&h[H_GAMMA]) / &ph };
        let (m0, m0h) = (pr(&h[H_M0]), pr(&h[H_M0HAT]));
        let (peg, pg) = (pr(&h[H_EG]), pr(&h[H_G]));
        rhs += &m0 * &gamma;
        rhs_hat += &m0h * &gamma;
        sum_eg += &peg;
        sum_g += &pg;
        sum_fng += pr(&h[H_FNOTG]);
        rows.push(ExactSetRow {
            label: info[i].0.clone(),
            q: info[i].1,
            p_h: rat_str(&ph),
            m0: rat_str(&m0),
            m0_hat: rat_str(&m0h),
            gamma1: rat_str(&gamma),
            p_eg: rat_str(&peg),
            factorizes: peg == &m0 * &gamma,
            factorizes_hat: pg == &m0h * &gamma,
        });
    }
    let lhs = pr(&glob[0]);
    let lhs_hat = pr(&glob[1]);
    let err = pr(&glob[4]) + &sum_fng;
    let residual_identity = &lhs - &sum_eg == pr(&glob[2]) && &lhs_hat - &sum_g == pr(&glob[3]);
    let check = |l: &BigRational, r: &BigRational| -> (Option<f64>, Option<(f64, f64)>, bool) {
        let ok = l >= r && *l <= r + &err;
        if r.is_zero() {
            return (None, None, ok);
        }
        let hi = BigRational::one() + &err / r;
        (Some(exact::to_f64(&(l / r))), Some((1.0, exact::to_f64(&hi))), ok)
    };
    let (ratio, band, within_band) = check(&lhs, &rhs);
    let (ratio_hat, band_hat, within_band_hat) = check(&lhs_hat, &rhs_hat);
    Ok(ExactReconstruction {
        geometry: g.name.clone(),
        p: rat_str(p),
        edges: m,
        rows,
        lhs_f64: exact::to_f64(&lhs),
        rhs_f64: exact::to_f64(&rhs),
        lhs: rat_str(&lhs),
        lhs_hat: rat_str(&lhs_hat),
        rhs: rat_str(&rhs),
        rhs_hat: rat_str(&rhs_hat),
        ratio,
        ratio_hat,
        band,
        band_hat,
        within_band,
        within_band_hat,
        residual_identity,
        g_violations: viol,
        gf_violations: gf_viol,
        warnings: g.gate_warnings(1),
    })
}

/// Exhaustive `|Y|` census over all configurations of a geometry.
#[derive(Clone, Debug, Serialize)]
pub struct YReport {
    pub geometry: String,
    pub edges: usize,
    pub levels: (usize, usize),
    pub configurations: u64,
    /// `(configuration, C, D)` triples with `H(C) ∩ H(D)`.
    pub pairs: u64,
    /// Pairs with `|Y| = 1`.
    pub pairs_with_y: u64,
    pub max_y: usize,
    pub violations: u64,
}

/// Counts `|Y|` for every pair of good sets at levels `i < j` in every
/// configuration.
pub fn y_exhaustive(g: &Geometry, i: usize, j: usize, p: &BigRational) -> Result<YReport> {
    if !(1 <= i && i < j && j <= g.max_level()) {
        return Err(Error::OutOfRange(format!("need 1 <= i < j <= {}", g.max_level())));
    }
    let m = g.world().n_edges();
    if m > MAX_EDGES {
        return Err(Error::TooLarge(format!("{m} edges exceeds the enumeration limit of {MAX_EDGES}")));
    }
    let res = Resampling::Exact { p: p.clone() };
    let mut rep = YReport {
        geometry: g.name.clone(),
        edges: m,
        levels: (i, j),
        configurations: 0,
        pairs: 0,
        pairs_with_y: 0,
        max_y: 0,
        violations: 0,
    };
    for mask in 0u64..(1u64 << m) {
        rep.configurations += 1;
        let cert = g.certifier(Mask(mask), &res)?;
        let cs = cert.good_sets(i)?;
        if cs.is_empty() {
            continue;
        }
        let ds = cert.good_sets(j)?;
        for c in &cs {
            for d in &ds {
                let y = y_set(&cert, c, d)?.len();
                rep.pairs += 1;
                rep.pairs_with_y += (y == 1) as u64;
                rep.max_y = rep.max_y.max(y);
                rep.violations += (y > 1) as u64;
            }
        }
    }
    Ok(rep)
}

/// Three-level ladder shared by the tiny battery: `Ann_1^q` with radii
/// `(1,2), (0,3)` and `S_1 = B(2)`; `Ann_2^q` with `(4,5), (3,6)` and
/// `S_2 = B(5)`.
pub fn battery_ladder() -> ScaleLadder {
    ScaleLadder::custom(vec![
        Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
        Level { sub: vec![(1, 2), (0, 3)], ann: (0, 3), s_radius: 2 },
        Level { sub: vec![(4, 5), (3, 6)], ann: (3, 6), s_radius: 5 },
    ])
    .expect("valid ladder")
}

fn sites(d: usize, pts: impl IntoIterator<Item = Vec<i32>>) -> Vec<Site> {
    pts.into_iter().map(|c| {
        let mut v = c;
        v.resize(d, 0);
        Site::new(&v)
    }).collect()
}

/// Tiny geometries (at most 22 edges) with `V_n` the sites at sup norm 7 and
/// `E = {edge {0, e_1} open}`.
pub fn tiny_battery() -> Result<Vec<Geometry>> {
    let mut shapes: Vec<(&str, usize, Vec<Site>)> = Vec::new();
    shapes.push(("line", 1, sites(1, (-7..=7).map(|x| vec![x]))));
    shapes.push(("strip", 2, sites(2, (0..=7).flat_map(|x| [vec![x, 0], vec![x, 1]]))));
    let mut plus: Vec<Vec<i32>> = (-7..=7).map(|x| vec![x, 0]).collect();
    plus.extend((1..=3).flat_map(|y| [vec![0, y], vec![0, -y]]));
    shapes.push(("plus", 2, sites(2, plus)));
    let mut lp: Vec<Vec<i32>> = (0..=7).map(|x| vec![x, 0]).collect();
    lp.extend((2..=6).map(|x| vec![x, 1]));
    lp.push(vec![3, 2]);
    shapes.push(("ladder_loop", 2, sites(2, lp)));
    let mut tube: Vec<Vec<i32>> = (0..=7).map(|x| vec![x, 0, 0]).collect();
    for x in 3..=4 {
        tube.extend([vec![x, 1, 0], vec![x, 0, 1], vec![x, 1, 1]]);
    }
    shapes.push(("tube", 3, sites(3, tube)));
    let mut br: Vec<Vec<i32>> = (-2..=7).map(|x| vec![x, 0]).collect();
    br.extend([vec![4, 1], vec![5, 1], vec![4, 2], vec![5, 2]]);
    shapes.push(("branch", 2, sites(2, br)));
    let good = GoodSpanningParams { window: BoundaryWindow::Counts { inner: (1, 64), outer: (1, 64) }, ..Default::default() };
    let mut out = Vec::new();
    for (name, d, s) in shapes {
        let spec = LatticeSpec::nearest_neighbor(d)?;
        let world = World::from_sites(&spec, s);
        let target: Vec<bool> = world.sites().iter().map(|x| x.sup_norm() == 7).collect();
        let obstacle = vec![false; world.n_vertices()];
        let fw = FamilyWorld::new(world, target, obstacle, 6)?;
        let event = CylinderEvent {
            l: 0,
            kind: super::family::EventKind::Pattern {
                edges: vec![super::family::EdgeState {
                    a: Site::origin(d).coords().to_vec(),
                    b: Site::axis(d, 0, 1).coords().to_vec(),
                    open: true,
                }],
            },
        };
        out.push(Geometry::new(name, fw, battery_ladder(), event, good.clone(), RegularityParams::default())?);
    }
    Ok(out)
}

/// Monte Carlo transition counts, keyed by 64-bit set labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransferCounts {
    pub n: u64,
    pub e_arm: u64,
    pub arm: u64,
    pub g_violations: u64,
    pub gf_violations: u64,
    /// Per level `1..=j`: samples with `H(C)`, and with `H(C)` and `γ`.
    pub h: Vec<BTreeMap<u64, u64>>,
    pub gamma: Vec<BTreeMap<u64, u64>>,
    pub m0: BTreeMap<u64, u64>,
    pub m0_hat: BTreeMap<u64, u64>,
    pub g0: BTreeMap<u64, u64>,
    pub f0: BTreeMap<u64, u64>,
    /// Per transition `i -> i+1`.
    pub m: Vec<BTreeMap<(u64, u64), u64>>,
    pub g: Vec<BTreeMap<(u64, u64), u64>>,
    /// Per level `i` in `1..j`: samples with `H(C)` and some `F(C, D)`.
    pub f_any: Vec<BTreeMap<u64, u64>>,
    /// Size, sub-annulus index and smallest site of each label.
    pub info: BTreeMap<u64, (usize, usize, Site)>,
}

fn bump<K: Ord>(m: &mut BTreeMap<K, u64>, k: K, by: u64) {
    if by > 0 {
        *m.entry(k).or_insert(0) += by;
    }
}

fn merge_map<K: Ord + Clone>(a: &mut BTreeMap<K, u64>, b: &BTreeMap<K, u64>) {
    for (k, v) in b {
        bump(a, k.clone(), *v);
    }
}

impl TransferCounts {
    fn new(j: usize) -> Self {
        TransferCounts {
            h: vec![BTreeMap::new(); j],
            gamma: vec![BTreeMap::new(); j],
            m: vec![BTreeMap::new(); j.saturating_sub(1)],
            g: vec![BTreeMap::new(); j.saturating_sub(1)],
            f_any: vec![BTreeMap::new(); j.saturating_sub(1)],
            ..Default::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.h.len()
    }

    pub fn record(&mut self, snap: &Snapshot) {
        self.n += 1;
        self.e_arm += (snap.e && snap.arm) as u64;
        self.arm += snap.arm as u64;
        self.g_violations += snap.g_violations;
        self.gf_violations += snap.gf_violations;
        let keys: Vec<Vec<u64>> = snap.sets.iter().map(|lv| lv.iter().map(|c| label_hash(c.label())).collect()).collect();
        for (lv, (sets, ks)) in snap.sets.iter().zip(&keys).enumerate() {
            for (c, (set, &k)) in sets.iter().zip(ks).enumerate() {
                bump(&mut self.h[lv], k, 1);
                bump(&mut self.gamma[lv], k, snap.gamma[lv][c] as u64);
                self.info.entry(k).or_insert_with(|| (set.vertices.len(), set.record.q, set.label()[0].clone()));
            }
        }
        for s in &snap.first {
            let k = keys[0][s.c];
            bump(&mut self.m0, k, (snap.e && s.m0_hat) as u64);
            bump(&mut self.m0_hat, k, s.m0_hat as u64);
            bump(&mut self.g0, k, s.g as u64);
            bump(&mut self.f0, k, s.f as u64);
        }
        for (i, steps) in snap.steps.iter().enumerate() {
            let mut any_f: BTreeMap<u64, bool> = BTreeMap::new();
            for s in steps {
                let key = (keys[i][s.c], keys[i + 1][s.d]);
                bump(&mut self.m[i], key, s.m as u64);
                bump(&mut self.g[i], key, s.g as u64);
                *any_f.entry(key.0).or_insert(false) |= s.f;
            }
            for (k, f) in any_f {
                bump(&mut self.f_any[i], k, f as u64);
            }
        }
    }

    pub fn merge(mut self, o: TransferCounts) -> TransferCounts {
        if self.levels() == 0 {
            return o;
        }
        if o.levels() == 0 {
            return self;
        }
        self.n += o.n;
        self.e_arm += o.e_arm;
        self.arm += o.arm;
        self.g_violations += o.g_violations;
        self.gf_violations += o.gf_violations;
        for (a, b) in self.h.iter_mut().zip(&o.h) {
            merge_map(a, b);
        }
        for (a, b) in self.gamma.iter_mut().zip(&o.gamma) {
            merge_map(a, b);
        }
        merge_map(&mut self.m0, &o.m0);
        merge_map(&mut self.m0_hat, &o.m0_hat);
        merge_map(&mut self.g0, &o.g0);
        merge_map(&mut self.f0, &o.f0);
        for (a, b) in self.m.iter_mut().zip(&o.m) {
            merge_map(a, b);
        }
        for (a, b) in self.g.iter_mut().zip(&o.g) {
            merge_map(a, b);
        }
        for (a, b) in self.f_any.iter_mut().zip(&o.f_any) {
            merge_map(a, b);
        }
        for (k, v) in o.info {
            self.info.entry(k).or_insert(v);
        }
        self
    }

    fn get<K: Ord>(m: &BTreeMap<K, u64>, k: &K) -> u64 {
        m.get(k).copied().unwrap_or(0)
    }

    /// `Σ M̂_0(0,C_1) M̂_1(C_1,C_2) ... γ̂_j(C_j)` with `M̂_0` or its
    /// sure-event version.
    pub fn rhs(&self, hat: bool) -> f64 {
        let j = self.levels();
        if self.n == 0 || j == 0 {
            return f64::NAN;
        }
        let m0 = if hat { &self.m0_hat } else { &self.m0 };
        let mut v: BTreeMap<u64, f64> = m0.iter().map(|(&k, &c)| (k, c as f64 / self.n as f64)).collect();
        for i in 0..j - 1 {
            let mut next: BTreeMap<u64, f64> = BTreeMap::new();
            for (&(c, d), &cnt) in &self.m[i] {
                if let Some(&x) = v.get(&c) {
                    let hc = Self::get(&self.h[i], &c) as f64;
                    *next.entry(d).or_insert(0.0) += x * cnt as f64 / hc;
                }
            }
            v = next;
        }
        v.iter()
            .map(|(k, x)| {
                let h = Self::get(&self.h[j - 1], k) as f64;
                x * Self::get(&self.gamma[j - 1], k) as f64 / h
            })
            .sum()
    }

    pub fn lhs(&self, hat: bool) -> f64 {
        (if hat { self.arm } else { self.e_arm }) as f64 / self.n as f64
    }
}

fn prop(k: u64, n: u64, seed: u64, start: u64) -> Estimate {
    let t = Tally { n, n_truncated: 0, sum: k as f64, sum_sq: k as f64 };
    Estimate::proportion(&t, seed, start)
}

/// A set label in kernel outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelInfo {
    pub hash: String,
    pub size: usize,
    pub q: usize,
    pub min_site: Site,
    pub n_h: u64,
}

/// Empirical `M̂_i` and `γ̂_{i+1}` for one level.
#[derive(Clone, Debug, Serialize)]
pub struct KernelExtraction {
    pub level: usize,
    /// Empty for level 0, whose single row is the origin.
    pub rows: Vec<LabelInfo>,
    pub cols: Vec<LabelInfo>,
    pub m: Vec<Vec<Estimate>>,
    /// Sure-event version of the level-0 row.
    pub m_hat: Option<Vec<Estimate>>,
    pub gamma: Vec<Estimate>,
    pub zero_cells: usize,
    /// Rows where `Σ_D P̂(G|H) <= P̂(F|H)` fails by more than 4σ.
    pub g_over_f: usize,
    pub n_samples: u64,
    pub seed: u64,
    pub sample_start: u64,
    pub g_violations: u64,
    pub warnings: Vec<String>,
}

impl TransferCounts {
    fn label(&self, k: u64, lv: usize) -> LabelInfo {
        let (size, q, min_site) = self.info.get(&k).cloned().unwrap_or((0, 0, Site::new(&[])));
        LabelInfo { hash: format!("{k:016x}"), size, q, min_site, n_h: Self::get(&self.h[lv], &k) }
    }

    /// Kernel of level `i` (`0 <= i < j`).
    pub fn kernel(&self, i: usize, seed: u64, start: u64) -> Result<KernelExtraction> {
        let j = self.levels();
        if i >= j {
            return Err(Error::OutOfRange(format!("kernel level {i} needs levels up to {}", i + 1)));
        }
        let cols: Vec<u64> = self.h[i].keys().copied().collect();
        let gamma = cols.iter().map(|k| prop(Self::get(&self.gamma[i], k), Self::get(&self.h[i], k), seed, start)).collect();
        let mut warnings = Vec::new();
        let (rows, m, m_hat, g_over_f) = if i == 0 {
            let row: Vec<Estimate> = cols.iter().map(|k| prop(Self::get(&self.m0, k), self.n, seed, start)).collect();
            let hat = cols.iter().map(|k| prop(Self::get(&self.m0_hat, k), self.n, seed, start)).collect();
            let g: u64 = self.g0.values().sum();
            let f = self.f0.values().sum::<u64>();
            // Σ_C 1[G(0,C)] and Σ_C 1[F(0,C)] per sample; disjointness makes the first a probability.
            let bad = (g as f64 - f as f64) > 4.0 * (g as f64).sqrt().max(1.0);
            (Vec::new(), vec![row], Some(hat), bad as usize)
        } else {
            let rows: Vec<u64> = self.h[i - 1].keys().copied().collect();
            let mut m = Vec::new();
            let mut bad = 0;
            for r in &rows {
                let hr = Self::get(&self.h[i - 1], r);
                m.push(cols.iter().map(|c| prop(Self::get(&self.m[i - 1], &(*r, *c)), hr, seed, start)).collect());
                let gsum: u64 = self.g[i - 1].range((*r, 0)..=(*r, u64::MAX)).map(|(_, v)| v).sum();
                let fr = Self::get(&self.f_any[i - 1], r);
                let sd = (gsum.max(1) as f64).sqrt();
                bad += (gsum as f64 - fr as f64 > 4.0 * sd) as usize;
            }
            (rows.iter().map(|&k| self.label(k, i - 1)).collect(), m, None, bad)
        };
        let zero_cells = m.iter().flatten().filter(|e: &&Estimate| e.value == 0.0).count();
        if cols.is_empty() {
            warnings.push(format!("no good sets observed at level {}", i + 1));
        }
        Ok(KernelExtraction {
            level: i,
            rows,
            cols: cols.iter().map(|&k| self.label(k, i)).collect(),
            m,
            m_hat,
            gamma,
            zero_cells,
            g_over_f,
            n_samples: self.n,
            seed,
            sample_start: start,
            g_violations: self.g_violations,
            warnings,
        })
    }
}

/// Sampling plan for Monte Carlo transfer experiments.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TransferPlan {
    pub n_samples: u64,
    /// Batches for the jackknife error of the reconstruction ratio.
    pub batches: u64,
}

impl Default for TransferPlan {
    fn default() -> Self {
        TransferPlan { n_samples: 2000, batches: 10 }
    }
}

/// Transition counts from `plan.n_samples` hashed samples, per batch.
pub fn sample_transfers(cfg: &PercolationConfig, g: &Geometry, j: usize, plan: &TransferPlan) -> Result<Vec<TransferCounts>> {
    if plan.batches == 0 || plan.n_samples < plan.batches {
        return Err(Error::Config("need at least one sample per batch".into()));
    }
    if cfg.spec != *g.spec() {
        return Err(Error::Config("configuration lattice differs from the geometry".into()));
    }
    if j == 0 || j > g.max_level() {
        return Err(Error::OutOfRange(format!("level {j} not in 1..={}", g.max_level())));
    }
    let res = Resampling::MonteCarlo { p: cfg.p, seed: cfg.seed };
    let w = g.world();
    let per = plan.n_samples / plan.batches;
    let mut out = Vec::new();
    for b in 0..plan.batches {
        let start = cfg.sample_id + b * per;
        let n = if b + 1 == plan.batches { plan.n_samples - b * per } else { per };
        let acc = farm(
            start,
            n,
            || (TransferCounts::new(j), Search::new(w.n_vertices()), None::<Error>),
            |(acc, search, err), sid| {
                if err.is_some() {
                    return;
                }
                let st = Hashed::new(w, cfg.with_sample(sid).stream());
                match analyze(g, st, j, &res, search) {
                    Ok(s) => acc.record(&s),
                    Err(e) => *err = Some(e),
                }
            },
            |(a, s, ea), (b, _, eb)| (a.merge(b), s, ea.or(eb)),
        );
        if let Some(e) = acc.2 {
            return Err(e);
        }
        out.push(acc.0);
    }
    Ok(out)
}

/// Kernels `M̂_0 .. M̂_{j-1}` and the `γ̂` weights from one sampling run.
pub fn extract_kernels(cfg: &PercolationConfig, g: &Geometry, j: usize, plan: &TransferPlan) -> Result<Vec<KernelExtraction>> {
    let batches = sample_transfers(cfg, g, j, plan)?;
    let all = batches.into_iter().fold(TransferCounts::default(), TransferCounts::merge);
    let warn = g.gate_warnings(j);
    (0..j)
        .map(|i| {
            let mut k = all.kernel(i, cfg.seed, cfg.sample_id)?;
            k.warnings.extend(warn.iter().cloned());
            Ok(k)
        })
        .collect()
}

/// Monte Carlo reconstruction: both sides, their ratio and a jackknife
/// standard error over batches.
#[derive(Clone, Debug, Serialize)]
pub struct McReconstruction {
    pub geometry: String,
    pub j: usize,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub ratio_stderr: Option<f64>,
    pub lhs_hat: f64,
    pub rhs_hat: f64,
    pub ratio_hat: Option<f64>,
    pub ratio_hat_stderr: Option<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub g_violations: u64,
    pub gf_violations: u64,
    pub warnings: Vec<String>,
}

fn jackknife(batches: &[TransferCounts], f: impl Fn(&TransferCounts) -> Option<f64>) -> (Option<f64>, Option<f64>) {
    let all = batches.iter().cloned().fold(TransferCounts::default(), TransferCounts::merge);
    let full = f(&all);
    let b = batches.len();
    if full.is_none() || b < 2 {
        return (full, None);
    }
    let mut loo = Vec::new();
    for skip in 0..b {
        let part = batches
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .fold(TransferCounts::default(), |a, (_, x)| a.merge(x.clone()));
        match f(&part) {
            Some(v) => loo.push(v),
            None => return (full, None),
        }
    }
    let mean = loo.iter().sum::<f64>() / b as f64;
    let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (b as f64 - 1.0) / b as f64;
    (full, Some(var.sqrt()))
}

pub fn mc_reconstruction(cfg: &PercolationConfig, g: &Geometry, j: usize, plan: &TransferPlan) -> Result<McReconstruction> {
    let batches = sample_transfers(cfg, g, j, plan)?;
    let all = batches.iter().cloned().fold(TransferCounts::default(), TransferCounts::merge);
    if all.h[j - 1].is_empty() {
        return Err(Error::Precondition(format!("no good sets observed at level {j}")));
    }
    let ratio = |hat: bool| move |c: &TransferCounts| {
        let r = c.rhs(hat);
        (r > 0.0).then(|| c.lhs(hat) / r)
    };
    let (r, rse) = jackknife(&batches, ratio(false));
    let (rh, rhse) = jackknife(&batches, ratio(true));
    let mut warnings = g.gate_warnings(j);
    if all.rhs(false) == 0.0 {
        warnings.push("rhs is zero; ratio undefined".into());
    }
    Ok(McReconstruction {
        geometry: g.name.clone(),
        j,
        p: cfg.p,
        lhs: all.lhs(false),
        rhs: all.rhs(false),
        ratio: r,
        ratio_stderr: rse,
        lhs_hat: all.lhs(true),
        rhs_hat: all.rhs(true),
        ratio_hat: rh,
        ratio_hat_stderr: rhse,
        n_samples: all.n,
        seed: cfg.seed,
        g_violations: all.g_violations,
        gf_violations: all.gf_violations,
        warnings,
    })
}
