//! Geometry of `Z^d`: edge sets, boxes, annuli and their boundaries.

use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Which edges of `Z^d` are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    NearestNeighbor,
    SpreadOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d: usize,
    pub edge_mode: EdgeMode,
    #[serde(default)]
    pub lambda: u32,
}

impl LatticeSpec {
    pub fn nearest_neighbor(d: usize) -> Result<Self> {
        let s = LatticeSpec { d, edge_mode: EdgeMode::NearestNeighbor, lambda: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn spread_out(d: usize, lambda: u32) -> Result<Self> {
        let s = LatticeSpec { d, edge_mode: EdgeMode::SpreadOut, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        match self.edge_mode {
            EdgeMode::NearestNeighbor if self.lambda != 0 => {
                Err(Error::InvalidSpec("nearest-neighbor mode requires lambda = 0".into()))
            }
            EdgeMode::SpreadOut if self.lambda == 0 => {
                Err(Error::InvalidSpec("spread-out mode requires lambda >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Sup-norm range of a single edge.
    pub fn range(&self) -> i64 {
        match self.edge_mode {
            EdgeMode::NearestNeighbor => 1,
            EdgeMode::SpreadOut => self.lambda as i64,
        }
    }

    /// Number of neighbors of any site.
    pub fn degree(&self) -> u64 {
        match self.edge_mode {
            EdgeMode::NearestNeighbor => 2 * self.d as u64,
            EdgeMode::SpreadOut => (2 * self.lambda as u64 + 1).pow(self.d as u32) - 1,
        }
    }

    pub fn check_site(&self, x: &Site) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.dim() });
        }
        Ok(())
    }

    pub fn is_edge(&self, x: &Site, y: &Site) -> bool {
        if x.dim() != self.d || y.dim() != self.d {
            return false;
        }
        match self.edge_mode {
            EdgeMode::NearestNeighbor => x.l1_dist(y) == 1,
            EdgeMode::SpreadOut => {
                let m = x.sup_dist(y);
                m > 0 && m <= self.lambda as i64
            }
        }
    }

    /// Calls `f` on each neighbor of `x`, in lexicographic order.
    pub fn for_each_neighbor(&self, x: &Site, mut f: impl FnMut(&Site)) {
        let d = self.d;
        match self.edge_mode {
            EdgeMode::NearestNeighbor => {
                let mut y = x.clone();
                // Lexicographic order: -e_0 < -e_1 < ... < +e_{d-1} < ... < +e_0.
                for k in 0..d {
                    y.0[k] -= 1;
                    f(&y);
                    y.0[k] += 1;
                }
                for k in (0..d).rev() {
                    y.0[k] += 1;
                    f(&y);
                    y.0[k] -= 1;
                }
            }
            EdgeMode::SpreadOut => {
                let l = self.lambda as i32;
                let mut off: SmallVec<[i32; 8]> = SmallVec::from_elem(-l, d);
                let mut y = x.clone();
                loop {
                    if off.iter().any(|&o| o != 0) {
                        for k in 0..d {
                            y.0[k] = x.0[k] + off[k];
                        }
                        f(&y);
                    }
                    let mut k = d;
                    loop {
                        if k == 0 {
                            return;
                        }
                        k -= 1;
                        if off[k] < l {
                            off[k] += 1;
                            break;
                        }
                        off[k] = -l;
                    }
                }
            }
        }
    }
}

/// A point of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub SmallVec<[i32; 8]>);

impl Site {
    pub fn new(coords: &[i32]) -> Self {
        Site(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Site(SmallVec::from_elem(0, d))
    }

    /// `t * e_axis`.
    pub fn axis(d: usize, axis: usize, t: i32) -> Self {
        let mut s = Site::origin(d);
        s.0[axis] = t;
        s
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64).abs()).max().unwrap_or(0)
    }

    pub fn sup_dist(&self, o: &Site) -> i64 {
        self.0.iter().zip(&o.0).map(|(&a, &b)| (a as i64 - b as i64).abs()).max().unwrap_or(0)
    }

    pub fn l1_dist(&self, o: &Site) -> i64 {
        self.0.iter().zip(&o.0).map(|(&a, &b)| (a as i64 - b as i64).abs()).sum()
    }

    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn sub(&self, o: &Site) -> Site {
        Site(self.0.iter().zip(&o.0).map(|(&a, &b)| a - b).collect())
    }

    pub fn add(&self, o: &Site) -> Site {
        Site(self.0.iter().zip(&o.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn neg(&self) -> Site {
        Site(self.0.iter().map(|&a| -a).collect())
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Euclidean `|x|^a`, with `|0|^a = 1` for negative `a`.
pub fn norm_power(x: &Site, a: f64) -> f64 {
    let n2 = x.norm2();
    if n2 == 0 {
        return if a <= 0.0 { 1.0 } else { 0.0 };
    }
    (n2 as f64).powf(a / 2.0)
}

/// An undirected edge with endpoints in lexicographic order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId {
    a: Site,
    b: Site,
}

impl EdgeId {
    pub fn new(spec: &LatticeSpec, x: &Site, y: &Site) -> Result<Self> {
        spec.check_site(x)?;
        spec.check_site(y)?;
        if !spec.is_edge(x, y) {
            return Err(Error::NotAnEdge(format!("{x} - {y}")));
        }
        Ok(Self::new_unchecked(x.clone(), y.clone()))
    }

    /// Orders the endpoints; does not check adjacency.
    pub fn new_unchecked(x: Site, y: Site) -> Self {
        if x <= y {
            EdgeId { a: x, b: y }
        } else {
            EdgeId { a: y, b: x }
        }
    }

    pub fn endpoints(&self) -> (&Site, &Site) {
        (&self.a, &self.b)
    }

    /// Flat encoding: coordinates of the smaller endpoint, then the larger.
    pub fn encode(&self) -> Vec<i32> {
        let mut v = Vec::with_capacity(2 * self.a.dim());
        v.extend_from_slice(&self.a.0);
        v.extend_from_slice(&self.b.0);
        v
    }

    pub fn decode(spec: &LatticeSpec, flat: &[i32]) -> Result<Self> {
        if flat.len() != 2 * spec.d {
            return Err(Error::DimensionMismatch { expected: 2 * spec.d, got: flat.len() });
        }
        let x = Site::new(&flat[..spec.d]);
        let y = Site::new(&flat[spec.d..]);
        Self::new(spec, &x, &y)
    }
}

impl fmt::Debug for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}-{:?}", self.a, self.b)
    }
}

/// A finite vertex set given by enumeration.
#[derive(Clone, Debug)]
pub struct ExplicitSites {
    sorted: Arc<Vec<Site>>,
    set: Arc<FxHashSet<Site>>,
}

impl ExplicitSites {
    pub fn new(sites: impl IntoIterator<Item = Site>) -> Self {
        let mut v: Vec<Site> = sites.into_iter().collect();
        v.sort();
        v.dedup();
        let set = v.iter().cloned().collect();
        ExplicitSites { sorted: Arc::new(v), set: Arc::new(set) }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sorted
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.set.contains(x)
    }
}

impl PartialEq for ExplicitSites {
    fn eq(&self, o: &Self) -> bool {
        self.sorted == o.sorted
    }
}

/// A box, an annulus `B(c;s) \ B(c;r)`, or an explicit vertex set.
///
/// The degenerate singleton is the annulus with `r = -1`, `s = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Box { center: Site, radius: i64 },
    Annulus { center: Site, inner: i64, outer: i64 },
    Explicit(ExplicitSites),
}

impl Region {
    pub fn ball(center: Site, radius: i64) -> Result<Self> {
        if radius < 0 {
            return Err(Error::InvalidRegion(format!("box radius {radius} < 0")));
        }
        Ok(Region::Box { center, radius })
    }

    pub fn annulus(center: Site, inner: i64, outer: i64) -> Result<Self> {
        if inner < -1 {
            return Err(Error::InvalidRegion(format!("inner radius {inner} < -1")));
        }
        if outer <= inner {
            return Err(Error::InvalidRegion(format!("outer radius {outer} <= inner radius {inner}")));
        }
        Ok(Region::Annulus { center, inner, outer })
    }

    pub fn singleton(x: Site) -> Self {
        Region::Annulus { center: x, inner: -1, outer: 0 }
    }

    pub fn explicit(sites: impl IntoIterator<Item = Site>) -> Self {
        Region::Explicit(ExplicitSites::new(sites))
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self, Region::Annulus { inner: -1, outer: 0, .. })
    }

    pub fn center(&self) -> Option<&Site> {
        match self {
            Region::Box { center, .. } | Region::Annulus { center, .. } => Some(center),
            Region::Explicit(_) => None,
        }
    }

    /// Outer sup-norm radius around the center (boxes and annuli).
    pub fn outer_radius(&self) -> Option<i64> {
        match self {
            Region::Box { radius, .. } => Some(*radius),
            Region::Annulus { outer, .. } => Some(*outer),
            Region::Explicit(_) => None,
        }
    }

    pub fn inner_radius(&self) -> Option<i64> {
        match self {
            Region::Box { .. } => Some(-1),
            Region::Annulus { inner, .. } => Some(*inner),
            Region::Explicit(_) => None,
        }
    }

    pub fn contains(&self, x: &Site) -> bool {
        match self {
            Region::Box { center, radius } => {
                x.dim() == center.dim() && x.sup_dist(center) <= *radius
            }
            Region::Annulus { center, inner, outer } => {
                if x.dim() != center.dim() {
                    return false;
                }
                let m = x.sup_dist(center);
                m <= *outer && m > *inner
            }
            Region::Explicit(e) => e.contains(x),
        }
    }

    /// Number of sites, when it fits in a `u128`.
    pub fn volume(&self) -> Option<u128> {
        let side = |r: i64| -> Option<u128> {
            if r < 0 {
                Some(0)
            } else {
                (2 * r as u128 + 1).checked_pow(self.dim()? as u32)
            }
        };
        match self {
            Region::Box { radius, .. } => side(*radius),
            Region::Annulus { inner, outer, .. } => Some(side(*outer)? - side(*inner)?),
            Region::Explicit(e) => Some(e.sites().len() as u128),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Box { center, .. } | Region::Annulus { center, .. } => Some(center.dim()),
            Region::Explicit(e) => e.sites().first().map(Site::dim),
        }
    }

    /// All sites, in lexicographic order. Refuses regions above `limit` sites.
    pub fn sites(&self, limit: usize) -> Result<Vec<Site>> {
        let (center, outer) = match self {
            Region::Explicit(e) => return Ok(e.sites().to_vec()),
            Region::Box { center, radius } => (center, *radius),
            Region::Annulus { center, outer, .. } => (center, *outer),
        };
        match self.volume() {
            Some(v) if v <= limit as u128 => {}
            _ => return Err(Error::TooLarge(format!("region exceeds {limit} sites"))),
        }
        let d = center.dim();
        let o = outer as i32;
        let mut out = Vec::new();
        let mut off: SmallVec<[i32; 8]> = SmallVec::from_elem(-o, d);
        loop {
            let y = Site(center.0.iter().zip(&off).map(|(&c, &t)| c + t).collect());
            if self.contains(&y) {
                out.push(y);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                if off[k] < o {
                    off[k] += 1;
                    break;
                }
                off[k] = -o;
            }
        }
    }

    /// Whether `y` lies in the inner boundary: in the region with a neighbor
    /// inside the hole.
    pub fn is_inner_boundary(&self, spec: &LatticeSpec, y: &Site) -> bool {
        let Region::Annulus { center, inner, .. } = self else {
            return false;
        };
        if *inner < 0 || !self.contains(y) {
            return false;
        }
        let m = y.sup_dist(center);
        match spec.edge_mode {
            EdgeMode::NearestNeighbor => {
                m == inner + 1
                    && y.0
                        .iter()
                        .zip(&center.0)
                        .filter(|(&a, &b)| (a as i64 - b as i64).abs() == inner + 1)
                        .count()
                        == 1
            }
            EdgeMode::SpreadOut => m <= inner + spec.lambda as i64,
        }
    }

    /// Whether `y` lies in the outer boundary: in the region with a neighbor
    /// outside the outer box.
    pub fn is_outer_boundary(&self, spec: &LatticeSpec, y: &Site) -> bool {
        let (center, outer) = match self {
            Region::Box { center, radius } => (center, *radius),
            Region::Annulus { center, outer, .. } => (center, *outer),
            Region::Explicit(_) => return false,
        };
        self.contains(y) && y.sup_dist(center) >= outer - spec.range() + 1
    }
}

/// Inner and outer boundary of a box or annulus, each sorted.
pub fn region_boundaries(spec: &LatticeSpec, a: &Region) -> Result<(Vec<Site>, Vec<Site>)> {
    if let Region::Explicit(_) = a {
        return Err(Error::Unsupported("boundaries of explicit regions".into()));
    }
    if let Some(c) = a.center() {
        spec.check_site(c)?;
    }
    let sites = a.sites(1 << 24)?;
    let inner = sites.iter().filter(|y| a.is_inner_boundary(spec, y)).cloned().collect();
    let outer = sites.iter().filter(|y| a.is_outer_boundary(spec, y)).cloned().collect();
    Ok((inner, outer))
}

/// Neighbors of `x` in lexicographic order.
pub fn neighbors(spec: &LatticeSpec, x: &Site) -> Result<Vec<Site>> {
    spec.check_site(x)?;
    let mut v = Vec::with_capacity(spec.degree() as usize);
    spec.for_each_neighbor(x, |y| v.push(y.clone()));
    Ok(v)
}
