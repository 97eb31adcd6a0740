//! TOML run configuration. Every section has defaults, so an empty file is a
//! valid configuration for every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clusters::{BoundaryWindow, GoodSpanningParams, RegularityParams};
use crate::engine::PercolationConfig;
use crate::error::{Error, Result};
use crate::estimators::PcCriterion;
use crate::experiments::transfer::{tiny_battery, Geometry, TransferPlan};
use crate::experiments::{ConditioningFamily, CylinderEvent, FamilyKind, SamplingParams};
use crate::lattice::{EdgeMode, LatticeSpec};
use crate::scales::{Level, ScaleLadder, ScaleParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub lattice: LatticeConfig,
    pub two_point: TwoPointConfig,
    pub one_arm: OneArmConfig,
    pub find_pc: FindPcConfig,
    pub scan: ScanConfig,
    pub transfer: TransferConfig,
    pub hopf: HopfConfig,
    pub iic: IicConfig,
    pub sweep: SweepConfig,
    pub battery: BatteryConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn percolation(&self, seed: u64) -> Result<PercolationConfig> {
        PercolationConfig::new(self.lattice.spec()?, self.lattice.p, seed).map_err(config_err)
    }
}

/// Reclassifies validation failures of user input as configuration errors.
pub fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::Io(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub d: usize,
    pub edge_mode: EdgeMode,
    pub lambda: u32,
    pub p: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { d: 2, edge_mode: EdgeMode::NearestNeighbor, lambda: 0, p: 0.5 }
    }
}

impl LatticeConfig {
    pub fn spec(&self) -> Result<LatticeSpec> {
        let s = LatticeSpec { d: self.d, edge_mode: self.edge_mode, lambda: self.lambda };
        s.validate().map_err(config_err)?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointConfig {
    pub targets: Vec<Vec<i32>>,
    /// Restrict paths to `B(r)` when set.
    pub restriction_radius: Option<i64>,
    pub samples: u64,
    pub cap: usize,
}

impl Default for TwoPointConfig {
    fn default() -> Self {
        TwoPointConfig {
            targets: vec![vec![1, 0], vec![2, 0], vec![4, 0], vec![8, 0]],
            restriction_radius: Some(64),
            samples: 10_000,
            cap: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneArmConfig {
    pub radii: Vec<i64>,
    pub samples: u64,
    pub cap: usize,
}

impl Default for OneArmConfig {
    fn default() -> Self {
        OneArmConfig { radii: vec![1, 2, 4, 8, 16, 32], samples: 10_000, cap: 1 << 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FindPcConfig {
    /// Dimension-dependent default when absent.
    pub criterion: Option<PcCriterion>,
    pub bracket: (f64, f64),
    pub tol: f64,
    pub samples: u64,
    pub cap: usize,
}

impl Default for FindPcConfig {
    fn default() -> Self {
        FindPcConfig { criterion: None, bracket: (0.4, 0.6), tol: 0.01, samples: 4000, cap: 1 << 20 }
    }
}

/// Radii for a ladder: explicit levels, or toy parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LadderConfig {
    Custom { levels: Vec<Level> },
    Params { params: ScaleParams, i_max: u64 },
}

impl LadderConfig {
    pub fn build(&self) -> Result<ScaleLadder> {
        match self {
            LadderConfig::Custom { levels } => ScaleLadder::custom(levels.clone()),
            LadderConfig::Params { params, i_max } => ScaleLadder::from_params(params, *i_max),
        }
        .map_err(config_err)
    }
}

/// Two levels with radii suited to a `B(12)` window.
pub fn demo_ladder() -> LadderConfig {
    LadderConfig::Custom {
        levels: vec![
            Level { sub: vec![(-1, 0)], ann: (-1, 0), s_radius: -1 },
            Level { sub: vec![(2, 4), (1, 5)], ann: (1, 5), s_radius: 3 },
            Level { sub: vec![(7, 10), (6, 11)], ann: (6, 11), s_radius: 8 },
        ],
    }
}

fn permissive() -> GoodSpanningParams {
    GoodSpanningParams { window: BoundaryWindow::Counts { inner: (1, 1000), outer: (1, 1000) }, ..Default::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Window `B(n)`.
    pub n: i64,
    pub ladder: LadderConfig,
    pub good: GoodSpanningParams,
    pub regularity: RegularityParams,
    pub samples: u64,
    /// Report rejected spanning sets too.
    pub include_rejected: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n: 12,
            ladder: demo_ladder(),
            good: permissive(),
            regularity: RegularityParams::default(),
            samples: 20,
            include_rejected: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeometryConfig {
    /// A member of the tiny enumerable battery, by name.
    Tiny { name: String },
    /// A conditioning-family window at scale `n` with its own ladder.
    Family { family: FamilyKind, n: i64, window_factor: Option<f64>, ladder: LadderConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub geometry: GeometryConfig,
    /// Ignored for tiny geometries, which carry their own event.
    pub event: CylinderEvent,
    pub good: GoodSpanningParams,
    pub regularity: RegularityParams,
    pub j: usize,
    pub plan: TransferPlan,
    /// Enumerate instead of sampling (tiny geometries, `j = 1`).
    pub exact: bool,
    /// Rational edge probability for the exact tier, e.g. `"1/2"`.
    pub p_exact: String,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            geometry: GeometryConfig::Family { family: FamilyKind::BoxBoundary, n: 12, window_factor: None, ladder: demo_ladder() },
            event: CylinderEvent::two_east(2),
            good: permissive(),
            regularity: RegularityParams::default(),
            j: 2,
            plan: TransferPlan::default(),
            exact: false,
            p_exact: "1/2".into(),
        }
    }
}

impl TransferConfig {
    pub fn geometry(&self, spec: &LatticeSpec) -> Result<Geometry> {
        match &self.geometry {
            GeometryConfig::Tiny { name } => tiny_battery()?
                .into_iter()
                .find(|g| &g.name == name)
                .ok_or_else(|| Error::Config(format!("no tiny geometry named {name:?}"))),
            GeometryConfig::Family { family, n, window_factor, ladder } => {
                let mut fam = ConditioningFamily::new(*family, vec![*n]);
                if let Some(w) = window_factor {
                    fam.window_factor = *w;
                }
                let fw = fam.build(spec, *n).map_err(config_err)?;
                let name = format!("{}_{}", family.name(), n);
                Geometry::new(name, fw, ladder.build()?, self.event.clone(), self.good.clone(), self.regularity.clone())
                    .map_err(config_err)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfConfig {
    pub kernels: usize,
    /// Length of the constant-kernel sequence.
    pub steps: usize,
    /// The constant kernel; must be positive.
    pub matrix: Vec<Vec<f64>>,
}

impl Default for HopfConfig {
    fn default() -> Self {
        HopfConfig { kernels: 10_000, steps: 30, matrix: vec![vec![2.0, 1.0], vec![1.0, 2.0]] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IicConfig {
    pub event: CylinderEvent,
    pub families: Vec<ConditioningFamily>,
    pub sampling: SamplingParams,
    pub tolerance: f64,
}

impl Default for IicConfig {
    fn default() -> Self {
        IicConfig {
            event: CylinderEvent::two_east(2),
            families: vec![
                ConditioningFamily::new(FamilyKind::BoxBoundary, vec![16, 32, 64]),
                ConditioningFamily::new(FamilyKind::SingleVertex, vec![16, 32, 64]),
            ],
            sampling: SamplingParams::default(),
            tolerance: crate::experiments::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub event: CylinderEvent,
    pub p_list: Vec<f64>,
    pub r_proxy: (i64, i64),
    pub sampling: SamplingParams,
    /// Box-boundary scale of the critical comparison point; none skips it.
    pub critical_n: Option<i64>,
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            event: CylinderEvent::two_east(2),
            p_list: vec![0.55, 0.52, 0.51],
            r_proxy: (64, 128),
            sampling: SamplingParams { min_accepted: 2000, ..Default::default() },
            critical_n: Some(64),
            tolerance: crate::experiments::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub p: String,
    pub samples: u64,
    pub groups: u64,
    /// Random no-further-connection instances checked exactly.
    pub nofurther: usize,
    /// Run the tiny-geometry `|Y|` census and exact reconstructions.
    pub tiny: bool,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig { p: "1/2".into(), samples: 100_000, groups: 100, nofurther: 500, tiny: true }
    }
}
