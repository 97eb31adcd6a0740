//! Scale sequences, the annulus hierarchy and the cutoff scales `beta(p)`
//! and `Q(n)`.
//!
//! Faithful parameters produce radii like `2^(10^5)`, so every radius is kept
//! as a base-2 exponent in arbitrary precision. Concrete integer radii are
//! only produced by [`ScaleLadder`], which is what simulations consume.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{EdgeMode, LatticeSpec, Region, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    Faithful,
    Toy,
}

/// Integer or `+inf`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtInt {
    Finite(u64),
    Infinite,
}

impl std::fmt::Display for ExtInt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtInt::Finite(i) => write!(f, "{i}"),
            ExtInt::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub d: usize,
    /// Spread-out range; 0 for nearest neighbor.
    pub lambda: u32,
    /// Radius exponent of the cylinder event box.
    pub l: u64,
    pub k1: u64,
    pub m: u64,
    pub q_max: u64,
    pub ann_margin: u64,
    /// `ell_i = floor(ell_num * k_i / ell_den)`.
    pub ell_num: u64,
    pub ell_den: u64,
    pub mode: ScaleMode,
    /// Toy-mode lower bound on `k1`; unchecked when zero.
    #[serde(default)]
    pub k1_floor: u64,
}

impl ScaleParams {
    /// Smallest admissible `k1` with the faithful constants.
    pub fn faithful_k1_min(d: usize, l: u64, lambda: u32) -> u64 {
        l + lambda as u64 + 64 * (d as u64).pow(4) + 4
    }

    pub fn faithful(d: usize, l: u64, lambda: u32, k1: Option<u64>) -> Result<Self> {
        let d64 = d as u64;
        let p = ScaleParams {
            d,
            lambda,
            l,
            k1: k1.unwrap_or_else(|| Self::faithful_k1_min(d, l, lambda)),
            m: 2 * d64 * d64,
            q_max: 32 * d64.pow(4),
            ann_margin: 32 * d64.pow(4) + 1,
            ell_num: d64,
            ell_den: 1,
            mode: ScaleMode::Faithful,
            k1_floor: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn toy(d: usize, lambda: u32, k1: u64, m: u64, q_max: u64) -> Result<Self> {
        let p = ScaleParams {
            d,
            lambda,
            l: 0,
            k1,
            m,
            q_max,
            ann_margin: q_max + 1,
            ell_num: d as u64,
            ell_den: 1,
            mode: ScaleMode::Toy,
            k1_floor: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScales(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.k1 == 0 || self.ell_den == 0 || self.ell_num == 0 {
            return bad("k1 and ell factor must be positive".into());
        }
        match self.mode {
            ScaleMode::Faithful => {
                let d = self.d as u64;
                if self.m != 2 * d * d
                    || self.q_max != 32 * d.pow(4)
                    || self.ann_margin != 32 * d.pow(4) + 1
                    || self.ell_num != d * self.ell_den
                {
                    return bad("faithful mode fixes m, q_max, ann_margin and ell".into());
                }
                let min = Self::faithful_k1_min(self.d, self.l, self.lambda);
                if self.k1 < min {
                    return bad(format!("faithful k1 = {} below L + Lambda + 64d^4 + 4 = {min}", self.k1));
                }
            }
            ScaleMode::Toy => {
                if self.m < 2 {
                    return bad("toy multiplier must be at least 2".into());
                }
                if self.q_max < 1 {
                    return bad("q_max must be at least 1".into());
                }
                if self.k1 < self.k1_floor {
                    return bad(format!("k1 = {} below configured floor {}", self.k1, self.k1_floor));
                }
                if self.ann_margin <= self.q_max {
                    return bad("ann_margin must exceed q_max".into());
                }
                if self.k1 < self.q_max {
                    return bad("k1 must be at least q_max".into());
                }
            }
        }
        if !self.sub_boundaries_disjoint(self.k1) {
            return bad(format!(
                "sub-annulus inner radii 2^(k1 - q) are closer than 2*Lambda + 1 (k1 = {}, q_max = {})",
                self.k1, self.q_max
            ));
        }
        Ok(())
    }

    /// Consecutive inner radii `2^(k-q)` differ by `2^(k-q-1)`; the smallest
    /// gap `2^(k-q_max)` must be at least `2*Lambda + 1`.
    fn sub_boundaries_disjoint(&self, k: u64) -> bool {
        if k < self.q_max {
            return false;
        }
        let e = k - self.q_max;
        let need = 2 * self.lambda as u64 + 1;
        e >= 64 || (1u64 << e) >= need
    }
}

/// Exact scale data for one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleIndex {
    pub i: u64,
    #[serde(with = "big_str")]
    pub k: BigUint,
    #[serde(with = "big_str")]
    pub k_star: BigUint,
    /// `Ann_i = B(2^ann_outer_exp) \ B(2^ann_inner_exp)`; level 0 is `B(2)`.
    #[serde(with = "bigint_str")]
    pub ann_inner_exp: BigInt,
    #[serde(with = "bigint_str")]
    pub ann_outer_exp: BigInt,
    #[serde(with = "big_str")]
    pub ell: BigUint,
    pub q_max: u64,
}

mod big_str {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod bigint_str {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Levels `0..=i_max`.
pub fn scale_sequence(params: &ScaleParams, i_max: u64) -> Result<Vec<ScaleIndex>> {
    params.validate()?;
    let m = BigUint::from(params.m);
    let margin = BigInt::from(params.ann_margin);
    let mut out = Vec::with_capacity(i_max as usize + 1);
    out.push(ScaleIndex {
        i: 0,
        k: BigUint::zero(),
        k_star: BigUint::one(),
        ann_inner_exp: BigInt::from(-1),
        ann_outer_exp: BigInt::one(),
        ell: BigUint::zero(),
        q_max: 0,
    });
    let mut k = BigUint::from(params.k1);
    for i in 1..=i_max {
        if i > 1 {
            k = &m * &out[i as usize - 1].k_star;
        }
        let k_star = &m * &k;
        let ell = &k * params.ell_num / params.ell_den;
        out.push(ScaleIndex {
            i,
            ann_inner_exp: BigInt::from(k.clone()) - &margin,
            ann_outer_exp: BigInt::from(k_star.clone()) + &margin,
            k,
            k_star,
            ell,
            q_max: params.q_max,
        });
        k = out[i as usize].k.clone();
    }
    Ok(out)
}

/// `floor(2^e)` as an `i64`, or `None` when it does not fit.
pub fn pow2_radius(e: &BigInt) -> Option<i64> {
    if e.sign() == num_bigint::Sign::Minus {
        return Some(0);
    }
    let e = e.to_u32()?;
    if e >= 62 {
        None
    } else {
        Some(1i64 << e)
    }
}

/// `Ann_i^q = B(2^(k_i* + q)) \ B(2^(k_i - q))`.
pub fn sub_annulus(idx: &ScaleIndex, q: u64, d: usize) -> Result<Region> {
    if idx.i == 0 {
        return Err(Error::OutOfRange("level 0 has no sub-annuli".into()));
    }
    if q > idx.q_max {
        return Err(Error::OutOfRange(format!("q = {q} exceeds q_max = {}", idx.q_max)));
    }
    let (ie, oe) = sub_annulus_exps(idx, q);
    let too_big = || Error::TooLarge(format!("sub-annulus radii 2^{oe} do not fit machine integers"));
    let r = pow2_radius(&ie).ok_or_else(too_big)?;
    let s = pow2_radius(&oe).ok_or_else(too_big)?;
    Region::annulus(Site::origin(d), r, s)
}

/// Exponents `(k_i - q, k_i* + q)` of a sub-annulus.
pub fn sub_annulus_exps(idx: &ScaleIndex, q: u64) -> (BigInt, BigInt) {
    (BigInt::from(idx.k.clone()) - q, BigInt::from(idx.k_star.clone()) + q)
}

/// Number of edges with both endpoints in a box of `side` sites per axis.
pub fn box_edge_count(spec: &LatticeSpec, side: &BigUint) -> BigUint {
    let d = spec.d as u32;
    match spec.edge_mode {
        EdgeMode::NearestNeighbor => {
            if side.is_zero() {
                return BigUint::zero();
            }
            BigUint::from(spec.d) * side.pow(d - 1) * (side - 1u32)
        }
        EdgeMode::SpreadOut => {
            // Each offset v contributes prod_k (side - |v_k|)_+ ordered pairs.
            let l = spec.lambda as u64;
            let mut per_axis = BigUint::zero();
            for t in 0..=l {
                let t = BigUint::from(t);
                if side > &t {
                    let w = side - &t;
                    per_axis += if t.is_zero() { w } else { w * 2u32 };
                }
            }
            (per_axis.pow(d) - side.pow(d)) / 2u32
        }
    }
}

/// `beta(p)`: the largest level whose edge sigma-algebra keeps the pointwise
/// likelihood ratio of `P_p` against `P_{p_c}` inside `[1/2, 2]`.
///
/// The ratio on a configuration with `j` of `m` edges open is
/// `(p/p_c)^j ((1-p)/(1-p_c))^(m-j)`, so its extremes are the all-open and
/// all-closed configurations. Returns 0 when even level 0 fails.
pub fn beta_of_p(params: &ScaleParams, spec: &LatticeSpec, p: f64, p_c: f64) -> Result<ExtInt> {
    if !(0.0..=1.0).contains(&p) || !(0.0..1.0).contains(&p_c) || p_c <= 0.0 {
        return Err(Error::OutOfRange(format!("p = {p}, p_c = {p_c}")));
    }
    if p < p_c {
        return Err(Error::Precondition(format!("beta requires p >= p_c ({p} < {p_c})")));
    }
    if p == p_c {
        return Ok(ExtInt::Infinite);
    }
    let up = (p / p_c).ln();
    let down = ((1.0 - p_c) / (1.0 - p)).ln();
    let ln2 = std::f64::consts::LN_2;
    let ok = |m: f64| m * up <= ln2 && m * down <= ln2;
    let mut best = 0u64;
    let mut i = 0u64;
    loop {
        let seq = scale_sequence(params, i + 1)?;
        let e = &seq[i as usize + 1].k_star;
        let m = match e.to_u32() {
            Some(e) if e < 1000 => {
                let side = (BigUint::one() << e) * 2u32 + 1u32;
                box_edge_count(spec, &side).to_f64().unwrap_or(f64::INFINITY)
            }
            _ => f64::INFINITY,
        };
        if !ok(m) {
            return Ok(ExtInt::Finite(best));
        }
        best = i;
        i += 1;
    }
}

/// `Q(n) = max { i : (V_n u D_n) n B(2^(k_{i+1}*)) = {} }`, given the
/// smallest sup-norm over `V_n u D_n`.
pub fn q_of_n(params: &ScaleParams, min_norm: &BigUint) -> Result<u64> {
    let mut i = 0u64;
    loop {
        let seq = scale_sequence(params, i + 1)?;
        let e = &seq[i as usize + 1].k_star;
        let e = e.to_u64().ok_or_else(|| Error::TooLarge("scale exponent".into()))?;
        let radius = BigUint::one() << e;
        if min_norm <= &radius {
            if i == 0 {
                return Err(Error::Precondition(format!(
                    "V_n u D_n meets B(2^k_1*) = B(2^{e}); Q(n) undefined"
                )));
            }
            return Ok(i - 1);
        }
        i += 1;
    }
}

/// Concrete radii of one level of a ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    /// `(inner, outer)` radii of `Ann_i^q`, indexed by `q`.
    pub sub: Vec<(i64, i64)>,
    /// `(inner, outer)` radii of `Ann_i`.
    pub ann: (i64, i64),
    /// Radius of `S_i`; `-1` encodes the empty set.
    pub s_radius: i64,
}

impl Level {
    pub fn q_max(&self) -> usize {
        self.sub.len() - 1
    }

    pub fn sub_region(&self, d: usize, q: usize) -> Result<Region> {
        let (r, s) = *self
            .sub
            .get(q)
            .ok_or_else(|| Error::OutOfRange(format!("q = {q} exceeds q_max = {}", self.q_max())))?;
        Region::annulus(Site::origin(d), r, s)
    }
}

/// Integer radii for the levels a simulation uses. Level 0 is `Ann_0`, a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub levels: Vec<Level>,
}

impl ScaleLadder {
    pub fn from_params(params: &ScaleParams, i_max: u64) -> Result<Self> {
        let seq = scale_sequence(params, i_max)?;
        let mut levels = vec![Level { sub: vec![(-1, 2)], ann: (-1, 2), s_radius: -1 }];
        for idx in &seq[1..] {
            let too_big = || Error::TooLarge(format!("level {} radii exceed machine integers", idx.i));
            let mut sub = Vec::new();
            for q in 0..=params.q_max {
                let (ie, oe) = sub_annulus_exps(idx, q);
                sub.push((pow2_radius(&ie).ok_or_else(too_big)?, pow2_radius(&oe).ok_or_else(too_big)?));
            }
            let ann = (
                pow2_radius(&idx.ann_inner_exp).ok_or_else(too_big)?,
                pow2_radius(&idx.ann_outer_exp).ok_or_else(too_big)?,
            );
            let s_radius = pow2_radius(&BigInt::from(idx.ell.clone())).ok_or_else(too_big)?;
            levels.push(Level { sub, ann, s_radius });
        }
        let l = ScaleLadder { levels };
        l.validate()?;
        Ok(l)
    }

    /// Hand-specified radii, for geometries below the smallest toy parameters.
    pub fn custom(levels: Vec<Level>) -> Result<Self> {
        let l = ScaleLadder { levels };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScales(m));
        if self.levels.is_empty() {
            return bad("ladder has no levels".into());
        }
        for (i, lv) in self.levels.iter().enumerate() {
            if lv.sub.is_empty() {
                return bad(format!("level {i} has no sub-annuli"));
            }
            for w in lv.sub.windows(2) {
                if !(w[1].0 < w[0].0 && w[1].1 > w[0].1) {
                    return bad(format!("level {i}: sub-annuli not strictly nested"));
                }
            }
            for &(r, s) in &lv.sub {
                if r < -1 || s <= r {
                    return bad(format!("level {i}: bad sub-annulus ({r}, {s})"));
                }
            }
            let last = lv.sub[lv.sub.len() - 1];
            if lv.ann.0 > last.0 || lv.ann.1 < last.1 {
                return bad(format!("level {i}: Ann_i does not contain its sub-annuli"));
            }
        }
        Ok(())
    }

    pub fn level(&self, i: usize) -> Result<&Level> {
        self.levels.get(i).ok_or_else(|| Error::OutOfRange(format!("level {i} not in ladder")))
    }

    /// `Q` computed from ladder radii: the largest `i` with `min_norm` beyond
    /// the outer radius of `Ann_{i+1}^0`.
    pub fn q_of_n(&self, min_norm: i64) -> Result<u64> {
        let mut best = None;
        for i in 0..self.levels.len().saturating_sub(1) {
            if min_norm > self.levels[i + 1].sub[0].1 {
                best = Some(i as u64);
            } else {
                break;
            }
        }
        best.ok_or_else(|| Error::Precondition("V_n u D_n meets B(2^k_1*)".into()))
    }
}

/// Exact-arithmetic summary for faithful parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaithfulReport {
    pub params: ScaleParams,
    pub levels: Vec<ScaleIndex>,
    pub recurrences_hold: bool,
    pub sub_boundaries_disjoint: bool,
    pub levels_disjoint: bool,
}

pub fn faithful_report(params: &ScaleParams, i_max: u64) -> Result<FaithfulReport> {
    let levels = scale_sequence(params, i_max)?;
    let m = BigUint::from(params.m);
    let mut rec = levels[0].k_star == BigUint::one();
    let mut sub = true;
    let mut disj = true;
    for i in 1..levels.len() {
        let l = &levels[i];
        rec &= l.k_star == &m * &l.k;
        if i >= 2 {
            rec &= l.k == &m * &levels[i - 1].k_star;
        } else {
            rec &= l.k == BigUint::from(params.k1);
        }
        let k = l.k.to_u64();
        sub &= match k {
            Some(k) => params.sub_boundaries_disjoint(k),
            // Astronomically large k: gap 2^(k - q_max) certainly exceeds 2*Lambda + 1.
            None => true,
        };
        // Sub-annulus exponents are distinct: k - q and k* + q are injective in q,
        // and the innermost outer radius 2^k* exceeds the outermost inner radius 2^k.
        sub &= l.k_star > l.k;
        if i >= 2 {
            disj &= levels[i - 1].ann_outer_exp < l.ann_inner_exp;
        }
    }
    Ok(FaithfulReport {
        params: params.clone(),
        levels,
        recurrences_hold: rec,
        sub_boundaries_disjoint: sub,
        levels_disjoint: disj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rustc_hash::FxHashSet;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn toy_sequence_by_hand() {
        let p = ScaleParams::toy(2, 0, 5, 8, 1).unwrap();
        let s = scale_sequence(&p, 2).unwrap();
        assert_eq!(s[1].k_star, big(40));
        assert_eq!(s[2].k, big(320));
        assert_eq!(s[2].k_star, big(2560));
    }

    #[test]
    fn level_zero() {
        let p = ScaleParams::toy(2, 0, 5, 8, 1).unwrap();
        let s = scale_sequence(&p, 0).unwrap();
        assert_eq!(s[0].k_star, big(1));
        let lad = ScaleLadder::from_params(&ScaleParams::toy(2, 0, 2, 2, 1).unwrap(), 1).unwrap();
        assert_eq!(lad.levels[0].ann, (-1, 2));
    }

    #[test]
    fn faithful_d7() {
        assert_eq!(ScaleParams::faithful_k1_min(7, 4, 0), 153672);
        let p = ScaleParams::faithful(7, 4, 0, None).unwrap();
        let s = scale_sequence(&p, 1).unwrap();
        assert_eq!(s[1].k, big(153672));
        assert_eq!(s[1].k_star, big(98 * 153672));
        assert!(ScaleParams::faithful(7, 4, 0, Some(153671)).is_err());
        let r = faithful_report(&p, 6).unwrap();
        assert!(r.recurrences_hold && r.sub_boundaries_disjoint && r.levels_disjoint);
    }

    #[test]
    fn sub_annulus_formula() {
        let idx = ScaleIndex {
            i: 1,
            k: big(6),
            k_star: big(10),
            ann_inner_exp: BigInt::from(6 - 3),
            ann_outer_exp: BigInt::from(10 + 3),
            ell: big(12),
            q_max: 2,
        };
        let r = sub_annulus(&idx, 1, 2).unwrap();
        assert_eq!(r, Region::annulus(Site::origin(2), 1 << 5, 1 << 11).unwrap());
        let r0 = sub_annulus(&idx, 0, 2).unwrap();
        assert_eq!(r0, Region::annulus(Site::origin(2), 1 << 6, 1 << 10).unwrap());
        assert!(sub_annulus(&idx, 3, 2).is_err());
    }

    #[test]
    fn toy_validation() {
        assert!(ScaleParams::toy(2, 0, 5, 1, 1).is_err());
        assert!(ScaleParams::toy(2, 0, 5, 2, 0).is_err());
        // 2^(k1 - q_max) = 2 < 2*2 + 1.
        assert!(ScaleParams::toy(2, 2, 3, 2, 2).is_err());
        assert!(ScaleParams::toy(2, 2, 5, 2, 2).is_ok());
        let mut p = ScaleParams::toy(2, 0, 5, 2, 2).unwrap();
        p.k1_floor = 6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn edge_count_matches_brute_force() {
        for spec in [
            LatticeSpec::nearest_neighbor(2).unwrap(),
            LatticeSpec::nearest_neighbor(3).unwrap(),
            LatticeSpec::spread_out(2, 2).unwrap(),
        ] {
            for r in 0..3i64 {
                let b = Region::ball(Site::origin(spec.d), r).unwrap();
                let mut n = 0u64;
                for x in b.sites(1 << 16).unwrap() {
                    for y in crate::lattice::neighbors(&spec, &x).unwrap() {
                        if x < y && b.contains(&y) {
                            n += 1;
                        }
                    }
                }
                assert_eq!(box_edge_count(&spec, &big(2 * r as u64 + 1)), big(n), "{spec:?} r={r}");
            }
        }
    }

    #[test]
    fn beta_cases() {
        let spec = LatticeSpec::nearest_neighbor(2).unwrap();
        let p = ScaleParams::toy(2, 0, 1, 2, 1).unwrap();
        assert_eq!(beta_of_p(&p, &spec, 0.5, 0.5).unwrap(), ExtInt::Infinite);
        assert!(beta_of_p(&p, &spec, 0.4, 0.5).is_err());
        // Level 0 uses B(2^k_1*) = B(4): side 9, 144 edges.
        let m1 = box_edge_count(&spec, &big(9)).to_f64().unwrap();
        assert_eq!(m1, 144.0);
        let thresh = 0.5 * 2f64.powf(1.0 / m1);
        assert_eq!(beta_of_p(&p, &spec, thresh * 1.001, 0.5).unwrap(), ExtInt::Finite(0));
        let close = beta_of_p(&p, &spec, 0.5 + 1e-9, 0.5).unwrap();
        assert!(close > ExtInt::Finite(0));
    }

    #[test]
    fn q_of_n_cases() {
        let p = ScaleParams::toy(2, 0, 1, 2, 1).unwrap();
        let s = scale_sequence(&p, 4).unwrap();
        let r = |i: usize| 1u64 << s[i].k_star.to_u64().unwrap();
        // k*: 1 -> 2, 2 -> 8, 3 -> 32.
        assert_eq!(q_of_n(&p, &big(r(2) + 1)).unwrap(), 1);
        assert_eq!(q_of_n(&p, &big(r(3))).unwrap(), 1);
        assert!(q_of_n(&p, &big(r(1))).is_err());
        let s6 = scale_sequence(&ScaleParams::toy(2, 0, 1, 2, 1).unwrap(), 6).unwrap();
        let n = BigUint::one() << (s6[6].k_star.to_u64().unwrap() + 1);
        assert!(q_of_n(&p, &n).unwrap() >= 5);
    }

    #[test]
    fn ladder_nesting_and_q() {
        let p = ScaleParams::toy(2, 0, 3, 2, 2).unwrap();
        let lad = ScaleLadder::from_params(&p, 2).unwrap();
        let lv = &lad.levels[1];
        assert_eq!(lv.sub, vec![(8, 64), (4, 128), (2, 256)]);
        assert_eq!(lv.ann, (1, 512));
        assert_eq!(lad.q_of_n(65).unwrap(), 0);
        assert!(lad.q_of_n(64).is_err());
        let bad = Level { sub: vec![(2, 5), (3, 6)], ann: (0, 9), s_radius: 4 };
        assert!(ScaleLadder::custom(vec![bad]).is_err());
    }

    proptest! {
        #[test]
        fn recurrences_and_nesting(k1 in 2u64..40, m in 2u64..20, q in 1u64..3) {
            prop_assume!(k1 >= q + 1);
            let p = ScaleParams::toy(3, 0, k1, m, q).unwrap();
            let s = scale_sequence(&p, 5).unwrap();
            for i in 1..=5usize {
                prop_assert_eq!(&s[i].k_star, &(&s[i].k * m));
                if i >= 2 {
                    prop_assert_eq!(&s[i].k, &(&s[i - 1].k_star * m));
                }
                for qq in 0..q {
                    let (a, b) = sub_annulus_exps(&s[i], qq);
                    let (c, e) = sub_annulus_exps(&s[i], qq + 1);
                    prop_assert!(c < a && e > b);
                }
                let (c, e) = sub_annulus_exps(&s[i], q);
                prop_assert!(s[i].ann_inner_exp < c && s[i].ann_outer_exp > e);
            }
        }

        #[test]
        fn beta_monotone(a in 1e-6f64..0.2, b in 1e-6f64..0.2) {
            let spec = LatticeSpec::nearest_neighbor(2).unwrap();
            let p = ScaleParams::toy(2, 0, 1, 2, 1).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let bl = beta_of_p(&p, &spec, 0.5 + lo, 0.5).unwrap();
            let bh = beta_of_p(&p, &spec, 0.5 + hi, 0.5).unwrap();
            prop_assert!(bl >= bh);
        }

        #[test]
        fn sub_inner_boundaries_disjoint(k1 in 3u64..6, q in 1u64..3, lam in 0u32..2) {
            let spec = if lam == 0 {
                LatticeSpec::nearest_neighbor(2).unwrap()
            } else {
                LatticeSpec::spread_out(2, lam).unwrap()
            };
            let p = ScaleParams::toy(2, lam, k1, 2, q);
            prop_assume!(p.is_ok());
            let lad = ScaleLadder::from_params(&p.unwrap(), 1).unwrap();
            let lv = &lad.levels[1];
            let inner: Vec<FxHashSet<Site>> = lv
                .sub
                .iter()
                .map(|&(r, _)| {
                    // The inner boundary depends only on r; probe it with a thin annulus.
                    let a = Region::annulus(Site::origin(2), r, r + 2 * spec.range() + 2).unwrap();
                    crate::lattice::region_boundaries(&spec, &a).unwrap().0.into_iter().collect()
                })
                .collect();
            for a in 0..inner.len() {
                for b in a + 1..inner.len() {
                    prop_assert!(inner[a].is_disjoint(&inner[b]));
                }
            }
        }
    }
}
