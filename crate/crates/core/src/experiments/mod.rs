//! Experiment drivers: conditional arm estimates over families of
//! conditioning sets, convergence diagnostics, the supercritical sweep, and
//! the transfer-kernel experiments in [`transfer`].

pub mod family;
pub mod transfer;

use serde::{Deserialize, Serialize};

use crate::engine::PercolationConfig;
use crate::error::{Error, Result};
use crate::estimators::{farm, Estimate, Tally};
use crate::world::{Hashed, Search};

pub use family::{CompiledEvent, ConditioningFamily, CylinderEvent, EdgeState, EventKind, FamilyKind, FamilyWorld};

/// Rejection sampling budget for conditional estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// Accepted samples wanted at every point.
    pub min_accepted: u64,
    pub batch: u64,
    pub max_samples: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { min_accepted: 500, batch: 2048, max_samples: 1_000_000 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.max_samples == 0 {
            return Err(Error::Config("batch and max_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Points with fewer accepted samples are flagged.
pub const LOW_CONFIDENCE: u64 = 100;

/// `P(E | 0 <-> V_n off D_n)` at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPoint {
    pub family: String,
    pub n: i64,
    pub p: f64,
    pub estimate: Estimate,
    pub accepted: u64,
    pub attempted: u64,
    /// `P(0 <-> V_n off D_n)`.
    pub acceptance: Estimate,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSeries {
    pub family: String,
    pub points: Vec<ConditionalPoint>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    accepted: u64,
    hit: u64,
}

/// Shared-sample rejection sampling on several windows at once. Every
/// sample id is used for every window, so the estimates are correlated.
fn conditional_multi(
    cfg: &PercolationConfig,
    e: &CylinderEvent,
    worlds: &[FamilyWorld],
    params: &SamplingParams,
) -> Result<(Vec<Counts>, u64)> {
    params.validate()?;
    e.validate(&cfg.spec)?;
    let first = worlds.first().ok_or_else(|| Error::Config("no conditioning sets".into()))?;
    let r = e.radius()?;
    if let Some(fw) = worlds.iter().find(|fw| fw.n < r) {
        return Err(Error::InvalidGeometry(format!("event box B({r}) exceeds B(n) with n = {}", fw.n)));
    }
    let compiled = e.compile(&first.world)?;
    let k = worlds.len();
    let max_v = worlds.iter().map(|fw| fw.world.n_vertices()).max().unwrap_or(0);
    let mut tot = vec![Counts::default(); k];
    let mut drawn = 0;
    while drawn < params.max_samples && tot.iter().any(|c| c.accepted < params.min_accepted) {
        let n = params.batch.min(params.max_samples - drawn);
        let (c, _) = farm(
            cfg.sample_id + drawn,
            n,
            || (vec![Counts::default(); k], Search::new(max_v)),
            |(acc, search), sid| {
                let stream = cfg.with_sample(sid).stream();
                let ev = compiled.holds(&first.world, &Hashed::new(&first.world, stream), search);
                for (a, fw) in acc.iter_mut().zip(worlds) {
                    if fw.arm(&Hashed::new(&fw.world, stream), search) {
                        a.accepted += 1;
                        a.hit += ev as u64;
                    }
                }
            },
            |(mut a, s), (b, _)| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.accepted += y.accepted;
                    x.hit += y.hit;
                }
                (a, s)
            },
        );
        for (t, x) in tot.iter_mut().zip(c) {
            t.accepted += x.accepted;
            t.hit += x.hit;
        }
        drawn += n;
    }
    Ok((tot, drawn))
}

fn point(cfg: &PercolationConfig, family: &str, n: i64, c: Counts, drawn: u64) -> ConditionalPoint {
    let t = Tally { n: c.accepted, n_truncated: 0, sum: c.hit as f64, sum_sq: c.hit as f64 };
    let mut estimate = Estimate::proportion(&t, cfg.seed, cfg.sample_id);
    estimate.sample_end = cfg.sample_id + drawn;
    let a = Tally { n: drawn, n_truncated: 0, sum: c.accepted as f64, sum_sq: c.accepted as f64 };
    ConditionalPoint {
        family: family.to_string(),
        n,
        p: cfg.p,
        estimate,
        accepted: c.accepted,
        attempted: drawn,
        acceptance: Estimate::proportion(&a, cfg.seed, cfg.sample_id),
        low_confidence: c.accepted < LOW_CONFIDENCE,
    }
}

/// Conditional estimates for every family and scale, all drawn from the same
/// sample ids.
pub fn iic_conditional(
    cfg: &PercolationConfig,
    e: &CylinderEvent,
    families: &[ConditioningFamily],
    params: &SamplingParams,
) -> Result<Vec<ConditionalSeries>> {
    let mut worlds = Vec::new();
    let mut index = Vec::new();
    for (fi, f) in families.iter().enumerate() {
        f.validate()?;
        for &n in &f.n_list {
            worlds.push(f.build(&cfg.spec, n)?);
            index.push((fi, n));
        }
    }
    let (counts, drawn) = conditional_multi(cfg, e, &worlds, params)?;
    let mut out: Vec<ConditionalSeries> =
        families.iter().map(|f| ConditionalSeries { family: f.kind.name().to_string(), points: Vec::new() }).collect();
    for ((fi, n), c) in index.into_iter().zip(counts) {
        let name = out[fi].family.clone();
        out[fi].points.push(point(cfg, &name, n, c, drawn));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

/// Difference between two conditional estimates against `3σ + tol`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub a: String,
    pub b: String,
    pub diff: f64,
    /// Combined standard error `sqrt(se_a^2 + se_b^2)`.
    pub sigma: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl Gap {
    pub fn between(a: &ConditionalPoint, b: &ConditionalPoint, tol: f64) -> Gap {
        let diff = (a.estimate.value - b.estimate.value).abs();
        let sigma = (a.estimate.stderr.powi(2) + b.estimate.stderr.powi(2)).sqrt();
        let bound = 3.0 * sigma + tol;
        let verdict = if a.low_confidence || b.low_confidence || !diff.is_finite() {
            Verdict::Inconclusive
        } else if diff <= bound {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        };
        let tag = |x: &ConditionalPoint| format!("{}@p={},n={}", x.family, x.p, x.n);
        Gap { a: tag(a), b: tag(b), diff, sigma, bound, verdict }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub tolerance: f64,
    /// Consecutive scales within each family.
    pub successive: Vec<Gap>,
    /// Terminal scales across families.
    pub terminal: Vec<Gap>,
    /// From the last successive gap of each family and all terminal gaps.
    pub verdict: Verdict,
}

pub const DEFAULT_TOLERANCE: f64 = 0.02;

pub fn convergence_diagnostic(series: &[ConditionalSeries], tol: f64) -> Diagnostic {
    let mut successive = Vec::new();
    let mut decisive = Vec::new();
    for s in series {
        for w in s.points.windows(2) {
            successive.push(Gap::between(&w[0], &w[1], tol));
        }
        if s.points.len() >= 2 {
            decisive.push(successive.last().unwrap().verdict);
        }
    }
    let mut terminal = Vec::new();
    for (i, a) in series.iter().enumerate() {
        for b in &series[i + 1..] {
            if let (Some(x), Some(y)) = (a.points.last(), b.points.last()) {
                let g = Gap::between(x, y, tol);
                decisive.push(g.verdict);
                terminal.push(g);
            }
        }
    }
    let verdict = if decisive.contains(&Verdict::Inconclusive) || decisive.is_empty() {
        Verdict::Inconclusive
    } else if decisive.contains(&Verdict::Inconsistent) {
        Verdict::Inconsistent
    } else {
        Verdict::Consistent
    };
    Diagnostic { tolerance: tol, successive, terminal, verdict }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    /// Strictly decreasing, above the critical point.
    pub p_list: Vec<f64>,
    /// Two proxy radii for the event `|C(0)| = ∞`.
    pub r_proxy: (i64, i64),
    #[serde(default)]
    pub sampling: SamplingParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// One entry per `p`, with a point per proxy radius.
    pub points: Vec<[ConditionalPoint; 2]>,
    /// `|v(R_1) - v(R_2)|` at the last `p`.
    pub r_shift: f64,
    pub r_shift_ok: bool,
    /// Last `p` at the larger radius against the critical estimate.
    pub versus_critical: Option<Gap>,
    pub tolerance: f64,
}

/// `P_p(E | 0 <-> ∂B(R))` for `p` decreasing to the critical point, with the
/// same sample ids for both radii.
pub fn supercritical_sweep(
    cfg: &PercolationConfig,
    e: &CylinderEvent,
    params: &SweepParams,
    critical: Option<&ConditionalPoint>,
    tol: f64,
) -> Result<SweepReport> {
    let ps = &params.p_list;
    if ps.is_empty() || ps.windows(2).any(|w| w[1] >= w[0]) || ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("p_list must be non-empty, strictly decreasing and inside [0, 1]".into()));
    }
    let (r1, r2) = params.r_proxy;
    if !(1 <= r1 && r1 < r2) {
        return Err(Error::Config("r_proxy must satisfy 1 <= R1 < R2".into()));
    }
    let fam = ConditioningFamily::new(FamilyKind::BoxBoundary, vec![r1, r2]);
    let worlds = [fam.build(&cfg.spec, r1)?, fam.build(&cfg.spec, r2)?];
    let mut points = Vec::new();
    for &p in ps {
        let c = cfg.with_p(p);
        let (counts, drawn) = conditional_multi(&c, e, &worlds, &params.sampling)?;
        let name = "supercritical_box";
        points.push([point(&c, name, r1, counts[0], drawn), point(&c, name, r2, counts[1], drawn)]);
    }
    let last = points.last().unwrap();
    let r_shift = (last[0].estimate.value - last[1].estimate.value).abs();
    Ok(SweepReport {
        r_shift,
        r_shift_ok: r_shift < tol,
        versus_critical: critical.map(|c| Gap::between(&last[1], c, tol)),
        points,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    fn cfg(p: f64) -> PercolationConfig {
        PercolationConfig::new(LatticeSpec::nearest_neighbor(2).unwrap(), p, 9).unwrap()
    }

    #[test]
    fn p_one_conditions_trivially() {
        let fam = [ConditioningFamily::new(FamilyKind::BoxBoundary, vec![4, 8])];
        let params = SamplingParams { min_accepted: 10, batch: 16, max_samples: 64 };
        let s = iic_conditional(&cfg(1.0), &CylinderEvent::two_east(2), &fam, &params).unwrap();
        for pt in &s[0].points {
            assert_eq!(pt.estimate.value, 1.0);
            assert_eq!(pt.accepted, 16);
            assert_eq!(pt.attempted, 16);
        }
    }

    #[test]
    fn p_zero_never_accepts() {
        let fam = [ConditioningFamily::new(FamilyKind::SingleVertex, vec![3])];
        let params = SamplingParams { min_accepted: 10, batch: 50, max_samples: 100 };
        let s = iic_conditional(&cfg(0.0), &CylinderEvent::sure(), &fam, &params).unwrap();
        let pt = &s[0].points[0];
        assert_eq!(pt.accepted, 0);
        assert_eq!(pt.attempted, 100);
        assert!(pt.low_confidence);
        let d = convergence_diagnostic(&s, 0.02);
        assert_eq!(d.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn event_must_fit() {
        let fam = [ConditioningFamily::new(FamilyKind::BoxBoundary, vec![1])];
        let e = CylinderEvent { l: 2, kind: EventKind::Sure };
        assert!(iic_conditional(&cfg(0.5), &e, &fam, &SamplingParams::default()).is_err());
    }

    #[test]
    fn conditional_matches_direct_ratio() {
        // Independent route: count E ∧ arm and arm with a plain loop.
        let c = cfg(0.5);
        let fam = ConditioningFamily::new(FamilyKind::BoxBoundary, vec![5]);
        let fw = fam.build(&c.spec, 5).unwrap();
        let e = CylinderEvent::two_east(2);
        let params = SamplingParams { min_accepted: 1_000_000, batch: 300, max_samples: 900 };
        let s = iic_conditional(&c, &e, &[fam], &params).unwrap();
        let ev = e.compile(&fw.world).unwrap();
        let mut search = Search::new(fw.world.n_vertices());
        let (mut acc, mut hit) = (0u64, 0u64);
        for sid in 0..900 {
            let st = Hashed::new(&fw.world, c.with_sample(sid).stream());
            if fw.arm(&st, &mut search) {
                acc += 1;
                hit += ev.holds(&fw.world, &st, &mut search) as u64;
            }
        }
        let pt = &s[0].points[0];
        assert_eq!((pt.accepted, pt.attempted), (acc, 900));
        assert_eq!(pt.estimate.value, hit as f64 / acc as f64);
    }

    #[test]
    fn diagnostic_verdicts() {
        let mk = |v: f64, n: i64| {
            let t = Tally { n: 1000, n_truncated: 0, sum: v * 1000.0, sum_sq: v * 1000.0 };
            ConditionalPoint {
                family: "f".into(),
                n,
                p: 0.5,
                estimate: Estimate::proportion(&t, 0, 0),
                accepted: 1000,
                attempted: 2000,
                acceptance: Estimate::proportion(&t, 0, 0),
                low_confidence: false,
            }
        };
        let a = ConditionalSeries { family: "a".into(), points: vec![mk(0.3, 8), mk(0.5, 16), mk(0.51, 32)] };
        let b = ConditionalSeries { family: "b".into(), points: vec![mk(0.52, 32)] };
        let d = convergence_diagnostic(&[a.clone(), b], 0.02);
        assert_eq!(d.successive.len(), 2);
        assert_eq!(d.successive[0].verdict, Verdict::Inconsistent);
        assert_eq!(d.verdict, Verdict::Consistent);
        let far = ConditionalSeries { family: "c".into(), points: vec![mk(0.9, 32)] };
        assert_eq!(convergence_diagnostic(&[a, far], 0.02).verdict, Verdict::Inconsistent);
    }

    #[test]
    fn sweep_validates_p_list() {
        let sp = SweepParams { p_list: vec![0.51, 0.52], r_proxy: (4, 8), sampling: SamplingParams::default() };
        assert!(supercritical_sweep(&cfg(0.5), &CylinderEvent::sure(), &sp, None, 0.02).is_err());
        let sp = SweepParams { p_list: vec![0.6], r_proxy: (8, 4), sampling: SamplingParams::default() };
        assert!(supercritical_sweep(&cfg(0.5), &CylinderEvent::sure(), &sp, None, 0.02).is_err());
    }

    #[test]
    fn sweep_runs_small() {
        let sp = SweepParams {
            p_list: vec![0.7, 0.6],
            r_proxy: (4, 8),
            sampling: SamplingParams { min_accepted: 200, batch: 256, max_samples: 4096 },
        };
        let r = supercritical_sweep(&cfg(0.5), &CylinderEvent::two_east(2), &sp, None, 0.02).unwrap();
        assert_eq!(r.points.len(), 2);
        // The larger radius accepts a subset of the smaller one's samples.
        for [a, b] in &r.points {
            assert!(b.accepted <= a.accepted);
            assert_eq!(a.attempted, b.attempted);
        }
    }
}
