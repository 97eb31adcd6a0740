//! Exhaustive enumeration of edge configurations, with exact rational
//! probabilities.
//!
//! Enumeration only counts configurations by their number of open edges; the
//! probability at any `p` is then a polynomial evaluated in exact arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::world::{Mask, World};

pub const MAX_EDGES: usize = 24;

/// Configuration counts of an event, bucketed by number of open edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(m: usize) -> Self {
        Histogram { counts: vec![0; m + 1] }
    }

    pub fn edges(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn prob(&self, p: &BigRational) -> BigRational {
        let m = self.edges();
        let q = BigRational::one() - p;
        let mut acc = BigRational::zero();
        for (k, &c) in self.counts.iter().enumerate() {
            if c != 0 {
                acc += BigRational::from_integer(BigInt::from(c)) * pow(p, k) * pow(&q, m - k);
            }
        }
        acc
    }

    pub fn prob_f64(&self, p: f64) -> f64 {
        let m = self.edges() as i32;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * p.powi(k as i32) * (1.0 - p).powi(m - k as i32))
            .sum()
    }
}

fn pow(x: &BigRational, k: usize) -> BigRational {
    let mut r = BigRational::one();
    for _ in 0..k {
        r *= x;
    }
    r
}

/// Runs `f` on all `2^m` configurations; bit `j` of its result flags event
/// `j`. Returns one histogram per event.
pub fn histograms(m: usize, n_events: usize, mut f: impl FnMut(Mask) -> u64) -> Result<Vec<Histogram>> {
    if m > MAX_EDGES {
        return Err(Error::TooLarge(format!("{m} edges exceeds the enumeration limit of {MAX_EDGES}")));
    }
    if n_events > 64 {
        return Err(Error::TooLarge("at most 64 events per enumeration".into()));
    }
    let mut out = vec![Histogram::new(m); n_events];
    for mask in 0u64..(1u64 << m) {
        let flags = f(Mask(mask));
        if flags == 0 {
            continue;
        }
        let k = mask.count_ones() as usize;
        for (j, h) in out.iter_mut().enumerate() {
            if flags >> j & 1 == 1 {
                h.counts[k] += 1;
            }
        }
    }
    Ok(out)
}

/// `sum over configurations of p^open (1-p)^closed 1{query}`.
pub fn enumerate_exact(w: &World, p: &BigRational, mut query: impl FnMut(Mask) -> bool) -> Result<BigRational> {
    check_p(p)?;
    let h = histograms(w.n_edges(), 1, |m| query(m) as u64)?;
    Ok(h[0].prob(p))
}

pub fn check_p(p: &BigRational) -> Result<()> {
    if p < &BigRational::zero() || p > &BigRational::one() {
        return Err(Error::OutOfRange(format!("p = {p} not in [0, 1]")));
    }
    Ok(())
}

/// The exact binary value of a float.
pub fn rational(p: f64) -> Result<BigRational> {
    BigRational::from_float(p).ok_or_else(|| Error::OutOfRange(format!("{p} is not finite")))
}

/// Parses `"a/b"`, an integer, or a decimal like `"0.3"` (read as `3/10`).
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let err = || Error::Parse(format!("not a rational: {s:?}"));
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().map_err(|_| err())?;
        let b: BigInt = b.trim().parse().map_err(|_| err())?;
        if b.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(a, b));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().map_err(|_| err())?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let r = BigRational::new(n, d);
        return Ok(if neg { -r } else { r });
    }
    Ok(BigRational::from_integer(s.parse().map_err(|_| err())?))
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// A small graph with a two-point query `source <-> target`.
#[derive(Clone, Debug)]
pub struct BatteryGraph {
    pub name: &'static str,
    pub world: World,
    pub source: u32,
    pub target: u32,
}

fn path(n: u32) -> Vec<(u32, u32)> {
    (0..n - 1).map(|i| (i, i + 1)).collect()
}

fn cycle(n: u32) -> Vec<(u32, u32)> {
    let mut e = path(n);
    e.push((n - 1, 0));
    e
}

fn complete(n: u32) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            e.push((i, j));
        }
    }
    e
}

fn grid(r: u32, c: u32) -> Vec<(u32, u32)> {
    let mut e = Vec::new();
    for i in 0..r {
        for j in 0..c {
            let v = i * c + j;
            if j + 1 < c {
                e.push((v, v + 1));
            }
            if i + 1 < r {
                e.push((v, v + c));
            }
        }
    }
    e
}

/// The fixed list of 30 graphs (at most 12 edges each) used to check Monte
/// Carlo estimators against exact enumeration.
pub fn battery() -> Vec<BatteryGraph> {
    let bip = |a: u32, b: u32| {
        let mut e = Vec::new();
        for i in 0..a {
            for j in 0..b {
                e.push((i, a + j));
            }
        }
        e
    };
    let wheel = |k: u32| {
        let mut e: Vec<(u32, u32)> = (1..=k).map(|i| (0, i)).collect();
        for i in 1..=k {
            e.push((i, if i == k { 1 } else { i + 1 }));
        }
        e
    };
    let raw: Vec<(&'static str, u32, Vec<(u32, u32)>, u32, u32)> = vec![
        ("edge", 2, path(2), 0, 1),
        ("path3", 3, path(3), 0, 2),
        ("path4", 4, path(4), 0, 3),
        ("path6", 6, path(6), 0, 5),
        ("triangle", 3, cycle(3), 0, 1),
        ("cycle4", 4, cycle(4), 0, 2),
        ("cycle5", 5, cycle(5), 0, 2),
        ("cycle6", 6, cycle(6), 0, 3),
        ("cycle8", 8, cycle(8), 0, 4),
        ("diamond_chord", 4, vec![(0, 1), (0, 2), (1, 3), (2, 3), (1, 2)], 0, 3),
        ("k4", 4, complete(4), 0, 3),
        ("k5", 5, complete(5), 0, 4),
        ("k23", 5, bip(2, 3), 0, 1),
        ("k33", 6, bip(3, 3), 0, 5),
        ("star4", 5, (1..5).map(|i| (0, i)).collect(), 1, 4),
        ("theta3", 5, vec![(0, 2), (2, 1), (0, 3), (3, 1), (0, 4), (4, 1)], 0, 1),
        ("theta3_pendant", 6, vec![(0, 2), (2, 1), (0, 3), (3, 1), (0, 4), (4, 1), (1, 5)], 0, 5),
        ("ladder2x3", 6, grid(2, 3), 0, 5),
        ("ladder2x4", 8, grid(2, 4), 0, 7),
        ("grid3x3", 9, grid(3, 3), 0, 8),
        ("wheel4", 5, wheel(4), 1, 3),
        ("wheel5", 6, wheel(5), 1, 3),
        ("bowtie", 5, vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)], 0, 4),
        (
            "prism",
            6,
            vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)],
            0,
            4,
        ),
        (
            "cube",
            8,
            (0..8u32)
                .flat_map(|v| (0..3).map(move |b| (v, v ^ (1 << b))))
                .filter(|&(u, v)| u < v)
                .collect(),
            0,
            7,
        ),
        ("wheatstone", 4, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], 0, 3),
        (
            "two_diamonds",
            7,
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6)],
            0,
            6,
        ),
        (
            "lollipop",
            7,
            complete(4).into_iter().chain([(3, 4), (4, 5), (5, 6)]).collect(),
            0,
            6,
        ),
        ("k4_minus_tail", 6, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5)], 0, 5),
        ("binary_tree", 7, vec![(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)], 3, 6),
    ];
    raw.into_iter()
        .enumerate()
        .map(|(i, (name, n, edges, source, target))| BatteryGraph {
            name,
            world: World::from_edges(n as usize, &edges, 0xba77e2 + i as u64).expect("battery graph"),
            source,
            target,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Search, States};

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn two_point(w: &World, s: u32, t: u32, p: &BigRational) -> BigRational {
        let mut search = Search::new(w.n_vertices());
        enumerate_exact(w, p, |m| search.connects(w, &m, [s], |_| true, |v| v == t)).unwrap()
    }

    #[test]
    fn single_edge() {
        let w = World::from_edges(2, &[(0, 1)], 0).unwrap();
        assert_eq!(two_point(&w, 0, 1, &q(2, 7)), q(2, 7));
    }

    #[test]
    fn parallel_paths() {
        // 0-1-3 and 0-2-3.
        let w = World::from_edges(4, &[(0, 1), (1, 3), (0, 2), (2, 3)], 0).unwrap();
        for p in [q(1, 3), q(1, 2), q(5, 7)] {
            let p2 = &p * &p;
            let want = BigRational::one() - (BigRational::one() - &p2) * (BigRational::one() - &p2);
            assert_eq!(two_point(&w, 0, 3, &p), want);
        }
    }

    #[test]
    fn triangle() {
        let w = World::from_edges(3, &cycle(3), 0).unwrap();
        for p in [q(1, 3), q(1, 2)] {
            let want = &p + &p * &p - &p * &p * &p;
            assert_eq!(two_point(&w, 0, 1, &p), want);
        }
    }

    #[test]
    fn limits_and_parsing() {
        let w = World::from_edges(26, &path(26), 0).unwrap();
        assert!(enumerate_exact(&w, &q(1, 2), |_| true).is_err());
        assert!(check_p(&q(3, 2)).is_err());
        assert_eq!(parse_rational("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_rational("0.3").unwrap(), q(3, 10));
        assert_eq!(parse_rational("-1.25").unwrap(), q(-5, 4));
        assert_eq!(parse_rational("2").unwrap(), q(2, 1));
        assert!(parse_rational("1/0").is_err());
        assert_eq!(rational(0.5).unwrap(), q(1, 2));
    }

    #[test]
    fn histogram_total_is_binomial() {
        let h = histograms(5, 1, |_| 1).unwrap();
        assert_eq!(h[0].counts, vec![1, 5, 10, 10, 5, 1]);
        assert_eq!(h[0].prob(&q(1, 3)), BigRational::one());
        assert!((h[0].prob_f64(0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn battery_shape() {
        let b = battery();
        assert_eq!(b.len(), 30);
        for g in &b {
            assert!(g.world.n_edges() <= 12, "{}", g.name);
            assert!(g.source != g.target);
            // Connected when all edges are open.
            let mut s = Search::new(g.world.n_vertices());
            let all = Mask(u64::MAX);
            assert!(all.open(0));
            assert!(s.connects(&g.world, &all, [g.source], |_| true, |v| v == g.target), "{}", g.name);
        }
        let mut names: Vec<_> = b.iter().map(|g| g.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 30);
    }
}
