//! Monte Carlo estimation, power-law fits, `p_c` location and numeric checks
//! of the analytic inequalities.

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::exact::{self, check_p};
use crate::engine::{self, Connect, PercolationConfig};
use crate::error::{Error, Result};
use crate::lattice::{norm_power, Region, Site};
use crate::world::{Hashed, Search, World};

/// Associative accumulator of sample outcomes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub n: u64,
    pub n_truncated: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Tally {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn push_bool(&mut self, b: bool) {
        self.push(if b { 1.0 } else { 0.0 });
    }

    /// Counts a sample whose outcome could not be decided.
    pub fn push_truncated(&mut self) {
        self.n_truncated += 1;
    }

    pub fn push_connect(&mut self, c: Connect) {
        match c {
            Connect::Yes => self.push_bool(true),
            Connect::No => self.push_bool(false),
            Connect::Unknown => self.push_truncated(),
        }
    }

    pub fn merge(self, o: Tally) -> Tally {
        Tally {
            n: self.n + o.n,
            n_truncated: self.n_truncated + o.n_truncated,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }
}

/// A Monte Carlo result with its provenance.
///
/// `n_samples` counts every sample drawn; `value` is computed from the
/// `n_samples - n_truncated` decided ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_samples: u64,
    pub n_truncated: u64,
    pub seed: u64,
    pub sample_start: u64,
    pub sample_end: u64,
}

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959963984540054;

impl Estimate {
    /// From a tally of 0/1 outcomes; Wilson interval.
    pub fn proportion(t: &Tally, seed: u64, start: u64) -> Self {
        let n = t.n as f64;
        let (value, stderr, lo, hi) = if t.n == 0 {
            (f64::NAN, f64::NAN, 0.0, 1.0)
        } else {
            let v = t.sum / n;
            let se = (v * (1.0 - v) / n).max(0.0).sqrt();
            let (lo, hi) = wilson(v, n, Z95);
            (v, se, lo, hi)
        };
        Estimate {
            value,
            stderr,
            ci_lo: lo,
            ci_hi: hi,
            n_samples: t.n + t.n_truncated,
            n_truncated: t.n_truncated,
            seed,
            sample_start: start,
            sample_end: start + t.n + t.n_truncated,
        }
    }

    /// From a tally of real outcomes; normal interval.
    pub fn mean(t: &Tally, seed: u64, start: u64) -> Self {
        let n = t.n as f64;
        let v = t.sum / n;
        let var = (t.sum_sq / n - v * v).max(0.0);
        let se = (var / n).sqrt();
        Estimate {
            value: v,
            stderr: se,
            ci_lo: v - Z95 * se,
            ci_hi: v + Z95 * se,
            n_samples: t.n + t.n_truncated,
            n_truncated: t.n_truncated,
            seed,
            sample_start: start,
            sample_end: start + t.n + t.n_truncated,
        }
    }

    /// Samples that decided the event.
    pub fn n_decided(&self) -> u64 {
        self.n_samples - self.n_truncated
    }

    /// Whether `x` lies within `k` standard errors, with a floor for
    /// degenerate zero-variance estimates.
    pub fn within(&self, x: f64, k: f64) -> bool {
        let floor = 1.0 / self.n_decided().max(1) as f64;
        (self.value - x).abs() <= k * self.stderr.max(floor)
    }
}

/// Wilson score interval for a proportion `v` out of `n`.
pub fn wilson(v: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let mid = (v + z2 / (2.0 * n)) / den;
    let half = z * (v * (1.0 - v) / n + z2 / (4.0 * n * n)).max(0.0).sqrt() / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

const CHUNK: u64 = 512;

/// Runs `f` on sample ids `start..start+n` in parallel and merges in index
/// order, so the result does not depend on the thread count.
pub fn farm<T: Send>(start: u64, n: u64, init: impl Fn() -> T + Sync, f: impl Fn(&mut T, u64) + Sync, merge: impl Fn(T, T) -> T) -> T {
    let chunks: Vec<u64> = (0..n.div_ceil(CHUNK)).collect();
    let parts: Vec<T> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = init();
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(start + n);
            for sid in lo..hi {
                f(&mut acc, sid);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(init(), merge)
}

/// An event evaluated on one sample. `None` marks a truncated sample.
pub trait SampleEvent: Sync {
    fn sample(&self, cfg: &PercolationConfig) -> Option<bool>;
}

impl<F: Fn(&PercolationConfig) -> Option<bool> + Sync> SampleEvent for F {
    fn sample(&self, cfg: &PercolationConfig) -> Option<bool> {
        self(cfg)
    }
}

/// `source <-> target` on a finite world, optionally restricted to a vertex set.
pub struct WorldConnection<'a> {
    pub world: &'a World,
    pub source: u32,
    pub target: u32,
}

impl SampleEvent for WorldConnection<'_> {
    fn sample(&self, cfg: &PercolationConfig) -> Option<bool> {
        let st = Hashed::new(self.world, cfg.stream());
        let mut s = Search::new(self.world.n_vertices());
        let t = self.target;
        Some(s.connects(self.world, &st, [self.source], |_| true, |v| v == t))
    }
}

/// Empirical frequency of `event` over `n` samples starting at `cfg.sample_id`.
pub fn estimate_event(cfg: &PercolationConfig, event: &impl SampleEvent, n: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let t = farm(
        cfg.sample_id,
        n,
        Tally::default,
        |t, sid| match event.sample(&cfg.with_sample(sid)) {
            Some(b) => t.push_bool(b),
            None => t.push_truncated(),
        },
        Tally::merge,
    );
    Ok(Estimate::proportion(&t, cfg.seed, cfg.sample_id))
}

/// Unbounded exploration window.
pub fn whole_lattice(d: usize) -> Region {
    Region::Box { center: Site::origin(d), radius: 1 << 30 }
}

/// `P(0 <-> x)` for each target, one exploration per sample.
pub fn two_point_profile(
    cfg: &PercolationConfig,
    targets: &[Site],
    restriction: Option<&Region>,
    n: u64,
    cap: usize,
) -> Result<Vec<(Site, Estimate)>> {
    let d = cfg.spec.d;
    for t in targets {
        cfg.spec.check_site(t)?;
    }
    let mut sorted = targets.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != targets.len() {
        return Err(Error::Precondition("targets must be distinct".into()));
    }
    let region = restriction.cloned().unwrap_or_else(|| whole_lattice(d));
    let origin = Site::origin(d);
    if !region.contains(&origin) {
        return Err(Error::Precondition("restriction must contain the origin".into()));
    }
    let k = targets.len();
    let tallies = farm(
        cfg.sample_id,
        n,
        || vec![Tally::default(); k],
        |acc, sid| {
            let o = cfg.with_sample(sid).oracle();
            let mut hit = vec![false; k];
            let mut left = targets.iter().filter(|t| region.contains(t)).count();
            let (_, truncated, _) = engine::explore_visit(&cfg.spec, &o, &origin, &region, cap, |y| {
                if let Some(i) = targets.iter().position(|t| t == y) {
                    hit[i] = true;
                    left -= 1;
                }
                left == 0
            })
            .expect("origin in region");
            for i in 0..k {
                if hit[i] {
                    acc[i].push_bool(true);
                } else if truncated {
                    acc[i].push_truncated();
                } else {
                    acc[i].push_bool(false);
                }
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    Ok(targets.iter().cloned().zip(tallies.iter().map(|t| Estimate::proportion(t, cfg.seed, cfg.sample_id))).collect())
}

/// `P(0 <-> dB(r))` for increasing radii, from one exploration per sample
/// recording the largest radius reached; monotone by construction.
/// `dB(0)` contains the origin, so radius 0 gives the sure event.
pub fn one_arm_profile(cfg: &PercolationConfig, radii: &[i64], n: u64, cap: usize) -> Result<Vec<(i64, Estimate)>> {
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.first().is_some_and(|&r| r < 0) {
        return Err(Error::Precondition("radii must be nonnegative and increasing".into()));
    }
    let Some(&r_max) = radii.last() else { return Ok(Vec::new()) };
    let origin = Site::origin(cfg.spec.d);
    let k = radii.len();
    let tallies = farm(
        cfg.sample_id,
        n,
        || vec![Tally::default(); k],
        |acc, sid| {
            let o = cfg.with_sample(sid).oracle();
            let (reach, truncated) = engine::max_radius(&cfg.spec, &o, &origin, r_max, cap).expect("valid ball");
            for (i, &r) in radii.iter().enumerate() {
                if reach >= r {
                    acc[i].push_bool(true);
                } else if truncated {
                    acc[i].push_truncated();
                } else {
                    acc[i].push_bool(false);
                }
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    Ok(radii.iter().copied().zip(tallies.iter().map(|t| Estimate::proportion(t, cfg.seed, cfg.sample_id))).collect())
}

/// `P(0 <->_{B(r)} x)` for `x` on the boundary of `B(r)`.
pub fn half_space_two_point(cfg: &PercolationConfig, x: &Site, r: i64, n: u64, cap: usize) -> Result<Estimate> {
    cfg.spec.check_site(x)?;
    if x.sup_norm() != r {
        return Err(Error::Precondition(format!("{x} is not on the boundary of B({r})")));
    }
    let region = Region::ball(Site::origin(cfg.spec.d), r)?;
    let origin = Site::origin(cfg.spec.d);
    let ev = |c: &PercolationConfig| match engine::restricted_connect(&c.spec, &c.oracle(), &origin, |y| y == x, &region, cap) {
        Ok(Connect::Yes) => Some(true),
        Ok(Connect::No) => Some(false),
        _ => None,
    };
    estimate_event(cfg, &ev, n)
}

/// Which points of a profile enter a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWindow {
    /// Drops the two smallest scales and the largest.
    Default,
    All,
    /// Index range `lo..hi` into the profile.
    Range(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub amplitude: f64,
    pub window: (usize, usize),
    pub residual_norm: f64,
    pub n_points: usize,
    pub warnings: Vec<String>,
}

/// Weighted least squares of `ln value` on `ln scale`.
///
/// Weights are `(value/stderr)^2`, the inverse delta-method variance of the
/// log; if any point has zero stderr all weights are 1. The exponent's
/// standard error is scaled by the reduced chi-square.
pub fn fit_exponent(profile: &[(f64, Estimate)], window: FitWindow) -> Result<PowerFit> {
    let (lo, hi) = match window {
        FitWindow::Default => (2, profile.len().saturating_sub(1)),
        FitWindow::All => (0, profile.len()),
        FitWindow::Range(a, b) => (a, b.min(profile.len())),
    };
    if lo >= hi {
        return Err(Error::Precondition("empty fit window".into()));
    }
    let mut warnings = Vec::new();
    let mut pts = Vec::new();
    for (s, e) in &profile[lo..hi] {
        if e.value > 0.0 && *s > 0.0 {
            pts.push((s.ln(), e.value.ln(), e.value, e.stderr));
        } else {
            warnings.push(format!("excluded scale {s}: value {}", e.value));
        }
    }
    if pts.len() < 3 {
        return Err(Error::Precondition(format!("fit needs 3 positive points, found {}", pts.len())));
    }
    let unit = pts.iter().any(|p| !(p.3 > 0.0));
    let w: Vec<f64> = pts.iter().map(|p| if unit { 1.0 } else { (p.2 / p.3).powi(2) }).collect();
    let sw: f64 = w.iter().sum();
    let mx = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let chi2: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.1 - icept - slope * p.0).powi(2)).sum();
    let dof = (pts.len() - 2) as f64;
    Ok(PowerFit {
        exponent: slope,
        exponent_stderr: (chi2 / dof / sxx).sqrt(),
        amplitude: icept.exp(),
        window: (lo, hi),
        residual_norm: chi2.sqrt(),
        n_points: pts.len(),
        warnings,
    })
}

/// Observable whose sign change locates `p_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PcCriterion {
    /// `n2^rho pi(n2) / (n1^rho pi(n1)) - 1`, with `pi` the one-arm probability.
    ArmScaling { rho: f64, n1: i64, n2: i64 },
    /// `P(cross B(n2)) - P(cross B(n1))` for crossings between opposite faces
    /// along the first axis.
    Crossing { n1: i64, n2: i64 },
}

impl PcCriterion {
    /// `rho = 2` above the upper critical dimension, `5/48` in the plane,
    /// and crossings in between where no arm exponent is known.
    pub fn default_for(d: usize) -> Self {
        match d {
            2 => PcCriterion::ArmScaling { rho: 5.0 / 48.0, n1: 8, n2: 32 },
            3..=5 => PcCriterion::Crossing { n1: 4, n2: 10 },
            _ => PcCriterion::ArmScaling { rho: 2.0, n1: 2, n2: 4 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcPoint {
    pub p: f64,
    pub g: f64,
    pub g_stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcResult {
    pub p_c: f64,
    pub bracket: (f64, f64),
    pub criterion: PcCriterion,
    pub curve: Vec<PcPoint>,
}

/// Evaluates a criterion with common random numbers across `p`.
pub fn pc_criterion(base: &PercolationConfig, crit: &PcCriterion, n: u64, cap: usize) -> Result<PcPoint> {
    match *crit {
        PcCriterion::ArmScaling { rho, n1, n2 } => {
            let prof = one_arm_profile(base, &[n1, n2], n, cap)?;
            let (a, b) = (&prof[0].1, &prof[1].1);
            let s = (n2 as f64 / n1 as f64).powf(rho);
            let ratio = s * b.value / a.value;
            // Delta method on the ratio of two positively correlated estimates; the
            // independent-error form overstates the spread, which is conservative.
            let se = ratio * ((b.stderr / b.value).powi(2) + (a.stderr / a.value).powi(2)).sqrt();
            Ok(PcPoint { p: base.p, g: ratio - 1.0, g_stderr: se })
        }
        PcCriterion::Crossing { n1, n2 } => {
            let a = crossing_probability(base, n1, n)?;
            let b = crossing_probability(base, n2, n)?;
            Ok(PcPoint { p: base.p, g: b.value - a.value, g_stderr: (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() })
        }
    }
}

/// Probability of an open path in `B(r)` between the faces `x_1 = -r` and `x_1 = r`.
pub fn crossing_probability(cfg: &PercolationConfig, r: i64, n: u64) -> Result<Estimate> {
    let w = World::from_region(&cfg.spec, &Region::ball(Site::origin(cfg.spec.d), r)?, 1 << 24)?;
    let left: Vec<u32> = (0..w.n_vertices() as u32).filter(|&v| w.site(v).coords()[0] as i64 == -r).collect();
    let ev = |c: &PercolationConfig| {
        let st = Hashed::new(&w, c.stream());
        let mut s = Search::new(w.n_vertices());
        Some(s.connects(&w, &st, left.iter().copied(), |_| true, |v| w.site(v).coords()[0] as i64 == r))
    };
    estimate_event(cfg, &ev, n)
}

/// Bisection on a criterion whose sign changes at `p_c`.
pub fn locate_pc(
    base: &PercolationConfig,
    crit: &PcCriterion,
    bracket: (f64, f64),
    tol: f64,
    n: u64,
    cap: usize,
) -> Result<PcResult> {
    let (mut lo, mut hi) = bracket;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::Precondition(format!("bad bracket [{lo}, {hi}]")));
    }
    let mut curve = Vec::new();
    let glo = pc_criterion(&base.with_p(lo), crit, n, cap)?;
    let ghi = pc_criterion(&base.with_p(hi), crit, n, cap)?;
    let straddles = glo.g < 0.0 && ghi.g > 0.0;
    curve.push(glo.clone());
    curve.push(ghi.clone());
    if !straddles {
        return Err(Error::Precondition(format!(
            "bracket [{lo}, {hi}] does not straddle the transition (g = {:.4}, {:.4})",
            glo.g, ghi.g
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g = pc_criterion(&base.with_p(mid), crit, n, cap)?;
        if g.g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        curve.push(g);
    }
    curve.sort_by(|a, b| a.p.total_cmp(&b.p));
    Ok(PcResult { p_c: 0.5 * (lo + hi), bracket: (lo, hi), criterion: *crit, curve })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvolutionPoint {
    pub distance: f64,
    pub lhs_partial: f64,
    pub tail_bound: f64,
    /// `lhs_partial / |x-y|^(a+b-d)`.
    pub ratio: f64,
    /// `(lhs_partial + tail_bound) / |x-y|^(a+b-d)`.
    pub ratio_upper: f64,
}

/// `sum_{z in B(R)} |z-x|^(a-d) |z-y|^(b-d)` plus a bound on the rest.
///
/// When `x` and `y` both lie on the first axis the sum runs over `z_1` and
/// the squared norm of the remaining coordinates, whose multiplicities are
/// precomputed; otherwise the box is summed directly.
pub fn convolution_check(d: usize, a: f64, b: f64, x: &Site, y: &Site, r: i64) -> Result<ConvolutionPoint> {
    if !(a > 0.0 && b > 0.0 && a + b < d as f64) {
        return Err(Error::Precondition(format!("need 0 < a, b and a + b < d (a={a}, b={b}, d={d})")));
    }
    if x.dim() != d || y.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.dim().min(y.dim()) });
    }
    if x == y {
        return Err(Error::Precondition("x must differ from y".into()));
    }
    let rx = (x.norm2() as f64).sqrt().max((y.norm2() as f64).sqrt());
    if (r as f64) < 2.0 * rx {
        return Err(Error::Precondition("R must be at least twice |x| and |y|".into()));
    }
    let on_axis = |s: &Site| s.coords()[1..].iter().all(|&c| c == 0);
    let lhs = if on_axis(x) && on_axis(y) {
        axis_sum(d, a, b, x.coords()[0] as i64, y.coords()[0] as i64, r)
    } else {
        brute_sum(d, a, b, x, y, r)?
    };
    let df = d as f64;
    let tail = 2.0 * df * 3f64.powf(df - 1.0) * 2f64.powf(2.0 * df - a - b) * (r as f64).powf(a + b - df) / (df - a - b);
    let dist = ((x.sub(y)).norm2() as f64).sqrt();
    let scale = dist.powf(a + b - df);
    Ok(ConvolutionPoint { distance: dist, lhs_partial: lhs, tail_bound: tail, ratio: lhs / scale, ratio_upper: (lhs + tail) / scale })
}

fn pow_or_one(n2: i64, e: f64) -> f64 {
    if n2 == 0 {
        1.0
    } else {
        (n2 as f64).powf(e / 2.0)
    }
}

fn axis_sum(d: usize, a: f64, b: f64, x1: i64, y1: i64, r: i64) -> f64 {
    // mult[s] = #{w in [-R, R]^(d-1) : |w|^2 = s}.
    let smax = (d as i64 - 1) * r * r;
    let mut mult = vec![0f64; smax as usize + 1];
    mult[0] = 1.0;
    let mut top = 0usize;
    for _ in 1..d {
        let mut next = vec![0f64; smax as usize + 1];
        for (s, &m) in mult[..=top].iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for t in -r..=r {
                next[s + (t * t) as usize] += m;
            }
        }
        top += (r * r) as usize;
        mult = next;
    }
    let df = d as f64;
    let mut acc = 0.0;
    for z1 in -r..=r {
        let (dx, dy) = ((z1 - x1).pow(2), (z1 - y1).pow(2));
        for (s, &m) in mult.iter().enumerate() {
            if m != 0.0 {
                let s = s as i64;
                acc += m * pow_or_one(dx + s, a - df) * pow_or_one(dy + s, b - df);
            }
        }
    }
    acc
}

fn brute_sum(d: usize, a: f64, b: f64, x: &Site, y: &Site, r: i64) -> Result<f64> {
    let region = Region::ball(Site::origin(d), r)?;
    let sites = region.sites(50_000_000)?;
    let df = d as f64;
    Ok(sites.iter().map(|z| norm_power(&z.sub(x), a - df) * norm_power(&z.sub(y), b - df)).sum())
}

/// Ratios of the convolution sum to `|x-y|^(a+b-d)` for `x = 0`, `y = t e_1`.
pub fn convolution_sweep(d: usize, a: f64, b: f64, distances: &[i32], r_factor: i64) -> Result<Vec<ConvolutionPoint>> {
    distances
        .iter()
        .map(|&t| convolution_check(d, a, b, &Site::origin(d), &Site::axis(d, 0, t), r_factor * t as i64))
        .collect()
}

/// An instance of the no-further-connection inequality on a finite graph.
#[derive(Clone, Debug)]
pub struct NoFurtherInstance {
    /// The graph induced on `A_1`.
    pub world: World,
    /// Membership in `A_0`, by vertex.
    pub a0: Vec<bool>,
    /// Vertex set of the connected subgraph `C` (inside `A_0`).
    pub c: Vec<u32>,
    pub b: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoFurtherReport {
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
    pub boundary: Vec<u32>,
}

/// Exact comparison of `P(C <->_{A1} B | C is an open cluster of A0)` with
/// `sum_{w in d_{A1} C} P(w <->_{A1 \ C} B)`.
///
/// "C is an open cluster of A0" is the event that the open component of `C`
/// in the graph induced on `A0` has vertex set exactly `C`.
pub fn nofurther_check(inst: &NoFurtherInstance, p: &BigRational) -> Result<(BigRational, BigRational, NoFurtherReport)> {
    check_p(p)?;
    let w = &inst.world;
    let n = w.n_vertices();
    if inst.a0.len() != n || inst.c.is_empty() {
        return Err(Error::InvalidGeometry("malformed instance".into()));
    }
    let mut in_c = vec![false; n];
    for &v in &inst.c {
        if !inst.a0[v as usize] {
            return Err(Error::InvalidGeometry("C must lie in A0".into()));
        }
        in_c[v as usize] = true;
    }
    let mut in_b = vec![false; n];
    for &v in &inst.b {
        if in_c[v as usize] {
            return Err(Error::Precondition("B must be disjoint from C".into()));
        }
        in_b[v as usize] = true;
    }
    // C must be connected through its own edges.
    let mut s = Search::new(n);
    if s.component(w, &crate::world::Uniform(true), [inst.c[0]], |v| in_c[v as usize]).len() != inst.c.len() {
        return Err(Error::InvalidGeometry("C is not connected".into()));
    }
    let boundary: Vec<u32> = (0..n as u32)
        .filter(|&v| !inst.a0[v as usize] && w.adj(v).iter().any(|&(u, _)| in_c[u as usize]))
        .collect();
    if boundary.len() > 62 {
        return Err(Error::TooLarge("boundary too large".into()));
    }
    let hs = exact::histograms(w.n_edges(), 2 + boundary.len(), |m| {
        let mut flags = 0u64;
        let comp = s.component(w, &m, [inst.c[0]], |v| inst.a0[v as usize]);
        let is_cluster = comp.len() == inst.c.len() && comp.iter().all(|&v| in_c[v as usize]);
        if is_cluster {
            flags |= 2;
            if s.connects(w, &m, inst.c.iter().copied(), |_| true, |v| in_b[v as usize]) {
                flags |= 1;
            }
        }
        for (i, &b) in boundary.iter().enumerate() {
            if s.connects(w, &m, [b], |v| !in_c[v as usize], |v| in_b[v as usize]) {
                flags |= 1 << (2 + i);
            }
        }
        flags
    })?;
    let joint = hs[0].prob(p);
    let cond = hs[1].prob(p);
    let lhs = if cond.is_zero() { BigRational::zero() } else { joint / cond };
    let rhs = hs[2..].iter().fold(BigRational::zero(), |acc, h| acc + h.prob(p));
    let holds = lhs <= rhs;
    let report = NoFurtherReport { lhs: lhs.to_string(), rhs: rhs.to_string(), holds, boundary };
    Ok((lhs, rhs, report))
}

/// One `(graph, seed group)` comparison in [`oracle_battery`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCell {
    pub graph: String,
    pub group: u64,
    pub seed: u64,
    pub estimate: f64,
    pub exact: f64,
    pub sigma: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleBatteryReport {
    pub p: String,
    pub n_per_cell: u64,
    pub groups: u64,
    pub cells: usize,
    pub passing: usize,
    pub fraction: f64,
    /// Cells outside `4σ`.
    pub failures: Vec<OracleCell>,
}

/// Tag separating battery group seeds from other derived seeds.
pub const BATTERY_TAG: u64 = 0x6261_7474_6572_79;

/// Monte Carlo two-point estimates on every battery graph against exact
/// enumeration, for `groups` independent seeds derived from `seed`.
///
/// A cell passes when the estimate is within `4σ` of the exact value, with
/// `σ` computed from the exact probability; degenerate probabilities must be
/// hit exactly.
pub fn oracle_battery(seed: u64, p: &BigRational, n: u64, groups: u64) -> Result<OracleBatteryReport> {
    check_p(p)?;
    if n == 0 || groups == 0 {
        return Err(Error::Precondition("need samples and groups".into()));
    }
    let pf = exact::to_f64(p);
    let graphs = exact::battery();
    let mut exacts = Vec::new();
    for g in &graphs {
        let t = g.target;
        let mut s = Search::new(g.world.n_vertices());
        let q = exact::enumerate_exact(&g.world, p, |m| s.connects(&g.world, &m, [g.source], |_| true, |v| v == t))?;
        exacts.push(exact::to_f64(&q));
    }
    let mut cells = Vec::new();
    for group in 0..groups {
        let gseed = engine::hash::derive_seed(seed, BATTERY_TAG, group);
        for (g, &q) in graphs.iter().zip(&exacts) {
            let spec = crate::lattice::LatticeSpec::nearest_neighbor(1)?;
            let cfg = PercolationConfig { spec, p: pf, seed: gseed, sample_id: 0 };
            let ev = WorldConnection { world: &g.world, source: g.source, target: g.target };
            let est = estimate_event(&cfg, &ev, n)?;
            let sigma = (q * (1.0 - q) / n as f64).sqrt();
            let ok = if sigma == 0.0 { est.value == q } else { (est.value - q).abs() <= 4.0 * sigma };
            cells.push(OracleCell { graph: g.name.to_string(), group, seed: gseed, estimate: est.value, exact: q, sigma, ok });
        }
    }
    let passing = cells.iter().filter(|c| c.ok).count();
    Ok(OracleBatteryReport {
        p: p.to_string(),
        n_per_cell: n,
        groups,
        cells: cells.len(),
        passing,
        fraction: passing as f64 / cells.len() as f64,
        failures: cells.into_iter().filter(|c| !c.ok).collect(),
    })
}

impl NoFurtherInstance {
    /// A random connected graph on 4 to 8 vertices with at most 12 edges,
    /// a connected `C`, `A_0 ⊇ C` and a nonempty `B` disjoint from `C`.
    pub fn random(rng: &mut impl rand::Rng) -> Result<Self> {
        let n: u32 = rng.gen_range(4..=8);
        let mut edges: Vec<(u32, u32)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
        let extra = rng.gen_range(0..=(12 - edges.len()));
        for _ in 0..extra {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let e = (a.min(b), a.max(b));
            if a != b && !edges.contains(&e) {
                edges.push(e);
            }
        }
        let world = World::from_edges(n as usize, &edges, rng.gen())?;
        let mut c = vec![rng.gen_range(0..n)];
        let size = rng.gen_range(1..=3usize);
        while c.len() < size {
            let nbrs: Vec<u32> =
                c.iter().flat_map(|&v| world.adj(v).iter().map(|&(u, _)| u)).filter(|u| !c.contains(u)).collect();
            if nbrs.is_empty() {
                break;
            }
            c.push(nbrs[rng.gen_range(0..nbrs.len())]);
        }
        c.sort_unstable();
        let a0: Vec<bool> = (0..n).map(|v| c.contains(&v) || rng.gen_bool(0.4)).collect();
        let rest: Vec<u32> = (0..n).filter(|v| !c.contains(v)).collect();
        let mut b: Vec<u32> = rest.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        if b.is_empty() {
            b.push(rest[rng.gen_range(0..rest.len())]);
        }
        Ok(NoFurtherInstance { world, a0, c, b })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoFurtherBatch {
    pub seed: u64,
    pub count: usize,
    pub violations: usize,
    /// Instances whose left side is positive.
    pub nontrivial: usize,
    pub reports: Vec<NoFurtherReport>,
}

/// [`nofurther_check`] on `count` random instances, each at a random `p`
/// in `{1/8, ..., 7/8}`.
pub fn nofurther_batch(seed: u64, count: usize) -> Result<NoFurtherBatch> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = NoFurtherBatch { seed, count, violations: 0, nontrivial: 0, reports: Vec::new() };
    for _ in 0..count {
        let inst = NoFurtherInstance::random(&mut rng)?;
        let p = BigRational::new(rng.gen_range(1..=7).into(), 8.into());
        let (lhs, _, rep) = nofurther_check(&inst, &p)?;
        out.violations += !rep.holds as usize;
        out.nontrivial += !lhs.is_zero() as usize;
        out.reports.push(rep);
    }
    Ok(out)
}
