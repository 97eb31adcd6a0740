//! Cylinder events and conditioning families `(V_n, D_n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, Region, Site};
use crate::world::{Search, States, Uniform, World};

/// One prescribed edge state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeState {
    pub a: Vec<i32>,
    pub b: Vec<i32>,
    pub open: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Sure,
    /// Every listed edge has the listed state.
    Pattern { edges: Vec<EdgeState> },
    /// `a` and `b` are joined by an open path inside `B(2^L)`.
    Connect { a: Vec<i32>, b: Vec<i32> },
}

/// An event depending only on the edges inside `B(2^L)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderEvent {
    pub l: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl CylinderEvent {
    pub fn sure() -> Self {
        CylinderEvent { l: 0, kind: EventKind::Sure }
    }

    /// Edges `{0, e_1}` and `{e_1, 2e_1}` both open, with `L = 1`.
    pub fn two_east(d: usize) -> Self {
        let at = |t: i32| Site::axis(d, 0, t).coords().to_vec();
        CylinderEvent {
            l: 1,
            kind: EventKind::Pattern {
                edges: vec![
                    EdgeState { a: at(0), b: at(1), open: true },
                    EdgeState { a: at(1), b: at(2), open: true },
                ],
            },
        }
    }

    pub fn is_sure(&self) -> bool {
        matches!(&self.kind, EventKind::Sure) || matches!(&self.kind, EventKind::Pattern { edges } if edges.is_empty())
    }

    pub fn radius(&self) -> Result<i64> {
        if self.l >= 62 {
            return Err(Error::TooLarge(format!("event radius 2^{}", self.l)));
        }
        Ok(1i64 << self.l)
    }

    pub fn validate(&self, spec: &LatticeSpec) -> Result<()> {
        let r = self.radius()?;
        let site = |c: &[i32]| -> Result<Site> {
            let s = Site::new(c);
            spec.check_site(&s)?;
            if s.sup_norm() > r {
                return Err(Error::Config(format!("event site {s} lies outside B(2^{})", self.l)));
            }
            Ok(s)
        };
        match &self.kind {
            EventKind::Sure => {}
            EventKind::Pattern { edges } => {
                for e in edges {
                    let (a, b) = (site(&e.a)?, site(&e.b)?);
                    if !spec.is_edge(&a, &b) {
                        return Err(Error::NotAnEdge(format!("{a} - {b}")));
                    }
                }
            }
            EventKind::Connect { a, b } => {
                site(a)?;
                site(b)?;
            }
        }
        Ok(())
    }

    /// Resolves the event against a world containing `B(2^L)`.
    pub fn compile(&self, w: &World) -> Result<CompiledEvent> {
        let spec = *w.spec().ok_or_else(|| Error::InvalidGeometry("events need a lattice world".into()))?;
        self.validate(&spec)?;
        let r = self.radius()?;
        match &self.kind {
            EventKind::Sure => Ok(CompiledEvent::Sure),
            EventKind::Pattern { edges } => {
                let mut out = Vec::new();
                for e in edges {
                    let (a, b) = (w.id_of(&Site::new(&e.a))?, w.id_of(&Site::new(&e.b))?);
                    let id = w.edge_between(a, b).ok_or_else(|| Error::InvalidGeometry("event edge missing from world".into()))?;
                    out.push((id, e.open));
                }
                Ok(CompiledEvent::Pattern(out))
            }
            EventKind::Connect { a, b } => {
                let inside = w.sites().iter().map(|x| x.sup_norm() <= r).collect();
                Ok(CompiledEvent::Connect { a: w.id_of(&Site::new(a))?, b: w.id_of(&Site::new(b))?, inside })
            }
        }
    }
}

/// A cylinder event resolved to world ids.
#[derive(Clone, Debug)]
pub enum CompiledEvent {
    Sure,
    Pattern(Vec<(u32, bool)>),
    Connect { a: u32, b: u32, inside: Vec<bool> },
}

impl CompiledEvent {
    pub fn holds(&self, w: &World, s: &impl States, search: &mut Search) -> bool {
        match self {
            CompiledEvent::Sure => true,
            CompiledEvent::Pattern(p) => p.iter().all(|&(e, open)| s.open(e) == open),
            CompiledEvent::Connect { a, b, inside } => {
                let b = *b;
                search.connects(w, s, [*a], |v| inside[v as usize], |v| v == b)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `V_n = {x : |x| = n+1}`, no obstacle.
    BoxBoundary,
    /// `V_n = {(n+1) e_1}`.
    SingleVertex,
    /// `V_n` the sphere of radius `n+1` minus the face patch
    /// `D_n = {x_1 = n+1, |x_j| <= (n+1)/2 for j >= 2}`.
    VertexSetWithObstacle,
    /// `V_n = {x_1 >= n+1}`.
    HalfspaceTarget,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::BoxBoundary => "box_boundary",
            FamilyKind::SingleVertex => "single_vertex",
            FamilyKind::VertexSetWithObstacle => "vertex_set_with_obstacle",
            FamilyKind::HalfspaceTarget => "halfspace_target",
        }
    }
}

fn default_window() -> f64 {
    2.0
}

/// A sequence of conditioning sets `(V_n, D_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningFamily {
    pub kind: FamilyKind,
    pub n_list: Vec<i64>,
    /// Simulation window radius over `n+1`, for families whose target is not
    /// a whole sphere. Connections are only sought inside the window.
    #[serde(default = "default_window")]
    pub window_factor: f64,
}

impl ConditioningFamily {
    pub fn new(kind: FamilyKind, n_list: Vec<i64>) -> Self {
        ConditioningFamily { kind, n_list, window_factor: default_window() }
    }

    pub fn window(&self, n: i64) -> i64 {
        match self.kind {
            FamilyKind::BoxBoundary | FamilyKind::VertexSetWithObstacle => n + 1,
            FamilyKind::SingleVertex | FamilyKind::HalfspaceTarget => {
                ((n + 1) as f64 * self.window_factor).ceil() as i64
            }
        }
    }

    pub fn is_target(&self, x: &Site, n: i64) -> bool {
        match self.kind {
            FamilyKind::BoxBoundary => x.sup_norm() == n + 1,
            FamilyKind::SingleVertex => {
                x.coords()[0] as i64 == n + 1 && x.coords()[1..].iter().all(|&c| c == 0)
            }
            FamilyKind::VertexSetWithObstacle => x.sup_norm() == n + 1 && !self.is_obstacle(x, n),
            FamilyKind::HalfspaceTarget => x.coords()[0] as i64 >= n + 1,
        }
    }

    pub fn is_obstacle(&self, x: &Site, n: i64) -> bool {
        match self.kind {
            FamilyKind::VertexSetWithObstacle => {
                x.coords()[0] as i64 == n + 1 && x.coords()[1..].iter().all(|&c| 2 * (c as i64).abs() <= n + 1)
            }
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("family needs at least one n".into()));
        }
        if self.n_list.iter().any(|&n| n < 1) {
            return Err(Error::Config("family scales must be positive".into()));
        }
        if !(self.window_factor >= 1.0 && self.window_factor.is_finite()) {
            return Err(Error::Config("window factor must be at least 1".into()));
        }
        Ok(())
    }

    /// The simulation window at scale `n`, checking the family invariants on
    /// it: `V_n` and `D_n` avoid `B(n)`, and `0` reaches `V_n` off `D_n`.
    pub fn build(&self, spec: &LatticeSpec, n: i64) -> Result<FamilyWorld> {
        self.validate()?;
        let world = World::from_region(spec, &Region::ball(Site::origin(spec.d), self.window(n))?, 1 << 26)?;
        let target: Vec<bool> = world.sites().iter().map(|x| self.is_target(x, n)).collect();
        let obstacle: Vec<bool> = world.sites().iter().map(|x| self.is_obstacle(x, n)).collect();
        FamilyWorld::new(world, target, obstacle, n)
    }
}

/// A finite window with target and obstacle flags per vertex.
#[derive(Clone, Debug)]
pub struct FamilyWorld {
    pub world: World,
    pub target: Vec<bool>,
    pub obstacle: Vec<bool>,
    pub origin: u32,
    pub n: i64,
}

impl FamilyWorld {
    pub fn new(world: World, target: Vec<bool>, obstacle: Vec<bool>, n: i64) -> Result<Self> {
        let d = world.spec().ok_or_else(|| Error::InvalidGeometry("lattice world required".into()))?.d;
        let origin = world.id_of(&Site::origin(d))?;
        for (v, x) in world.sites().iter().enumerate() {
            if (target[v] || obstacle[v]) && x.sup_norm() <= n {
                return Err(Error::InvalidGeometry(format!("V_n or D_n meets B({n}) at {x}")));
            }
            if target[v] && obstacle[v] {
                return Err(Error::InvalidGeometry(format!("{x} is both target and obstacle")));
            }
        }
        let fw = FamilyWorld { world, target, obstacle, origin, n };
        let mut s = Search::new(fw.world.n_vertices());
        if !fw.arm(&Uniform(true), &mut s) {
            return Err(Error::InvalidGeometry("0 cannot reach V_n off D_n in the window".into()));
        }
        Ok(fw)
    }

    /// `0 <-> V_n` off `D_n`.
    pub fn arm(&self, s: &impl States, search: &mut Search) -> bool {
        let (t, o) = (&self.target, &self.obstacle);
        search.connects(&self.world, s, [self.origin], |v| !o[v as usize], |v| t[v as usize])
    }
}
