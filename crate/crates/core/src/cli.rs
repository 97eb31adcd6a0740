//! Command-line front end. Each subcommand writes one report file to the
//! output directory and prints a one-line summary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::clusters::{Certifier, Resampling};
use crate::config::{config_err, Config};
use crate::engine::exact;
use crate::error::{Error, Result};
use crate::estimators::{self, PcCriterion};
use crate::experiments::transfer::{self, tiny_battery};
use crate::experiments::{self, SweepParams, Verdict};
use crate::kernels::{self, Kernel};
use crate::lattice::{Region, Site};
use crate::world::{Hashed, World};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_LOW_CONFIDENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "iiclab", version, about = "Percolation laboratory for incipient infinite cluster experiments")]
pub struct Cli {
    /// TOML configuration file; defaults apply to anything omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// P(0 <-> x) for the configured targets
    EstimateTwoPoint,
    /// P(0 <-> dB(r)) profile and exponent fit
    EstimateOneArm,
    /// Bisection for p_c on a sign-changing observable
    FindPc,
    /// Certify good spanning sets level by level
    ScanGoodClusters,
    /// Monte Carlo transfer kernels and weights
    ExtractKernels,
    /// Arm probability against the kernel product
    ReconstructArm,
    /// Contraction check on random kernels and a ratio-limit run
    HopfDemo,
    /// Conditional probabilities across conditioning families
    IicConverge,
    /// Conditional probabilities above p_c at two radii
    SupercriticalSweep,
    /// Monte Carlo against exact enumeration on small graphs
    OracleBattery,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EstimateTwoPoint => "estimate-two-point",
            Command::EstimateOneArm => "estimate-one-arm",
            Command::FindPc => "find-pc",
            Command::ScanGoodClusters => "scan-good-clusters",
            Command::ExtractKernels => "extract-kernels",
            Command::ReconstructArm => "reconstruct-arm",
            Command::HopfDemo => "hopf-demo",
            Command::IicConverge => "iic-converge",
            Command::SupercriticalSweep => "supercritical-sweep",
            Command::OracleBattery => "oracle-battery",
        }
    }
}

/// Result of one subcommand.
pub struct Report {
    pub json: Value,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: String,
    pub status: i32,
}

fn to_json(v: &impl Serialize) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Parse(e.to_string()))
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn est_cols(e: &estimators::Estimate) -> Vec<String> {
    vec![f(e.value), f(e.stderr), f(e.ci_lo), f(e.ci_hi), e.n_samples.to_string(), e.n_truncated.to_string()]
}

const EST_HEADER: [&str; 6] = ["value", "stderr", "ci_lo", "ci_hi", "n_samples", "n_truncated"];

fn with_est(lead: &[&'static str]) -> Vec<&'static str> {
    lead.iter().copied().chain(EST_HEADER).collect()
}

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(1);
    let rep = run_command(cli.command, &cfg, seed)?;
    fs::create_dir_all(&cli.out_dir)?;
    let path = write_report(&cli.out_dir, cli.command.name(), cli.format, &rep)?;
    println!("{}: {} -> {}", cli.command.name(), rep.summary, path.display());
    Ok(rep.status)
}

pub fn write_report(dir: &Path, name: &str, format: Format, rep: &Report) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.{}", if format == Format::Csv { "csv" } else { "json" }));
    match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&rep.json).map_err(|e| Error::Parse(e.to_string()))?;
            text.push('\n');
            fs::write(&path, text)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Parse(e.to_string()))?;
            w.write_record(&rep.header).map_err(|e| Error::Parse(e.to_string()))?;
            for r in &rep.rows {
                w.write_record(r).map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    Ok(path)
}

pub fn run_command(cmd: Command, cfg: &Config, seed: u64) -> Result<Report> {
    match cmd {
        Command::EstimateTwoPoint => two_point(cfg, seed),
        Command::EstimateOneArm => one_arm(cfg, seed),
        Command::FindPc => find_pc(cfg, seed),
        Command::ScanGoodClusters => scan(cfg, seed),
        Command::ExtractKernels => extract(cfg, seed),
        Command::ReconstructArm => reconstruct(cfg, seed),
        Command::HopfDemo => hopf(cfg, seed),
        Command::IicConverge => iic(cfg, seed),
        Command::SupercriticalSweep => sweep(cfg, seed),
        Command::OracleBattery => battery(cfg, seed),
    }
}

fn two_point(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.two_point;
    let targets: Vec<Site> = c.targets.iter().map(|t| Site::new(t)).collect();
    let restriction = match c.restriction_radius {
        Some(r) => Some(Region::ball(Site::origin(pc.spec.d), r).map_err(config_err)?),
        None => None,
    };
    let prof = estimators::two_point_profile(&pc, &targets, restriction.as_ref(), c.samples, c.cap).map_err(config_err)?;
    let rows = prof.iter().map(|(x, e)| [vec![x.to_string()], est_cols(e)].concat()).collect();
    let json = json!({ "config": pc, "restriction_radius": c.restriction_radius, "profile": to_json(&prof)? });
    Ok(Report { json, header: with_est(&["target"]), rows, summary: format!("{} targets", prof.len()), status: EXIT_OK })
}

fn one_arm(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.one_arm;
    let prof = estimators::one_arm_profile(&pc, &c.radii, c.samples, c.cap).map_err(config_err)?;
    let rows = prof.iter().map(|(r, e)| [vec![r.to_string()], est_cols(e)].concat()).collect();
    let json = json!({ "config": pc, "profile": to_json(&prof)? });
    Ok(Report { json, header: with_est(&["radius"]), rows, summary: format!("{} radii", prof.len()), status: EXIT_OK })
}

fn find_pc(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.find_pc;
    let crit = c.criterion.unwrap_or_else(|| PcCriterion::default_for(pc.spec.d));
    let res = estimators::locate_pc(&pc, &crit, c.bracket, c.tol, c.samples, c.cap).map_err(config_err)?;
    let rows = res.curve.iter().map(|p| vec![f(p.p), f(p.g), f(p.g_stderr)]).collect();
    let summary = format!("p_c in [{}, {}]", res.bracket.0, res.bracket.1);
    Ok(Report { json: to_json(&res)?, header: vec!["p", "g", "g_stderr"], rows, summary, status: EXIT_OK })
}

fn scan(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.scan;
    let ladder = c.ladder.build()?;
    let world = World::from_region(&pc.spec, &Region::ball(Site::origin(pc.spec.d), c.n).map_err(config_err)?, 1 << 24)
        .map_err(config_err)?;
    let res = Resampling::MonteCarlo { p: pc.p, seed };
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for sid in 0..c.samples {
        let st = Hashed::new(&world, pc.with_sample(sid).stream());
        let cert = Certifier::new(&world, st, &ladder, c.good.clone(), c.regularity.clone(), res.clone()).map_err(config_err)?;
        for level in 1..ladder.levels.len() {
            if ladder.levels[level].sub[ladder.levels[level].q_max()].1 > c.n {
                continue;
            }
            for q in 1..=ladder.levels[level].q_max() {
                for comp in cert.spanning(level, q)? {
                    let r = cert.certify(level, q, &comp)?.record;
                    if !r.good && !c.include_rejected {
                        continue;
                    }
                    rows.push(vec![
                        sid.to_string(),
                        level.to_string(),
                        q.to_string(),
                        r.cluster.vertices.len().to_string(),
                        r.cluster.min_vertex().to_string(),
                        r.good.to_string(),
                        r.regular_in.to_string(),
                        r.regular_out.to_string(),
                        r.undecided.to_string(),
                        r.reasons.join("; "),
                    ]);
                    records.push(json!({ "sample": sid, "record": to_json(&r)? }));
                }
            }
        }
    }
    let good = rows.iter().filter(|r| r[5] == "true").count();
    let json = json!({ "config": pc, "ladder": ladder, "records": records });
    Ok(Report {
        json,
        header: vec!["sample", "level", "q", "size", "min_site", "good", "regular_in", "regular_out", "undecided", "reasons"],
        summary: format!("{} spanning sets, {good} good", rows.len()),
        rows,
        status: EXIT_OK,
    })
}

fn transfer_setup(cfg: &Config, seed: u64) -> Result<(crate::engine::PercolationConfig, transfer::Geometry)> {
    let g = cfg.transfer.geometry(&cfg.lattice.spec()?)?;
    let pc = crate::engine::PercolationConfig::new(*g.spec(), cfg.lattice.p, seed).map_err(config_err)?;
    Ok((pc, g))
}

fn extract(cfg: &Config, seed: u64) -> Result<Report> {
    let (pc, g) = transfer_setup(cfg, seed)?;
    let ks = transfer::extract_kernels(&pc, &g, cfg.transfer.j, &cfg.transfer.plan).map_err(config_err)?;
    let mut rows = Vec::new();
    for k in &ks {
        let row_name = |i: usize| k.rows.get(i).map_or("origin".to_string(), |l| l.hash.clone());
        for (i, r) in k.m.iter().enumerate() {
            for (j, e) in r.iter().enumerate() {
                rows.push([vec![k.level.to_string(), "m".into(), row_name(i), k.cols[j].hash.clone()], est_cols(e)].concat());
            }
        }
        if let Some(h) = &k.m_hat {
            for (j, e) in h.iter().enumerate() {
                rows.push([vec![k.level.to_string(), "m_hat".into(), "origin".into(), k.cols[j].hash.clone()], est_cols(e)].concat());
            }
        }
        for (j, e) in k.gamma.iter().enumerate() {
            rows.push([vec![k.level.to_string(), "gamma".into(), k.cols[j].hash.clone(), "V_n".into()], est_cols(e)].concat());
        }
    }
    let violations: u64 = ks.first().map_or(0, |k| k.g_violations);
    let over = ks.iter().map(|k| k.g_over_f).sum::<usize>();
    let empty = ks.iter().any(|k| k.cols.is_empty());
    let status = if violations > 0 || over > 0 {
        EXIT_INVARIANT
    } else if empty {
        EXIT_LOW_CONFIDENCE
    } else {
        EXIT_OK
    };
    let summary = format!(
        "{} levels, {} labels, {violations} disjointness violations",
        ks.len(),
        ks.iter().map(|k| k.cols.len()).sum::<usize>()
    );
    let json = json!({ "geometry": g.name, "config": pc, "kernels": to_json(&ks)? });
    Ok(Report { json, header: with_est(&["level", "kind", "row", "col"]), rows, summary, status })
}

fn reconstruct(cfg: &Config, seed: u64) -> Result<Report> {
    let (pc, g) = transfer_setup(cfg, seed)?;
    let header = vec!["quantity", "value"];
    if cfg.transfer.exact {
        let p = exact::parse_rational(&cfg.transfer.p_exact).map_err(config_err)?;
        let r = transfer::exact_reconstruction(&g, &p).map_err(config_err)?;
        let rows = vec![
            vec!["lhs".into(), r.lhs.clone()],
            vec!["rhs".into(), r.rhs.clone()],
            vec!["lhs_hat".into(), r.lhs_hat.clone()],
            vec!["rhs_hat".into(), r.rhs_hat.clone()],
            vec!["ratio".into(), r.ratio.map_or("undefined".into(), f)],
            vec!["band_hi".into(), r.band.map_or("undefined".into(), |b| f(b.1))],
            vec!["within_band".into(), r.within_band.to_string()],
        ];
        let status = if r.passes() { EXIT_OK } else { EXIT_INVARIANT };
        let summary = format!("exact j=1 on {}: ratio {:?}, within band {}", g.name, r.ratio, r.within_band);
        return Ok(Report { json: to_json(&r)?, header, rows, summary, status });
    }
    let r = transfer::mc_reconstruction(&pc, &g, cfg.transfer.j, &cfg.transfer.plan).map_err(|e| match e {
        Error::Precondition(_) => e,
        other => config_err(other),
    });
    let r = match r {
        Ok(r) => r,
        Err(Error::Precondition(m)) => {
            let json = json!({ "geometry": g.name, "error": m });
            return Ok(Report { json, header, rows: Vec::new(), summary: m, status: EXIT_LOW_CONFIDENCE });
        }
        Err(e) => return Err(e),
    };
    let opt = |x: Option<f64>| x.map_or("undefined".into(), f);
    let rows = vec![
        vec!["lhs".into(), f(r.lhs)],
        vec!["rhs".into(), f(r.rhs)],
        vec!["ratio".into(), opt(r.ratio)],
        vec!["ratio_stderr".into(), opt(r.ratio_stderr)],
        vec!["lhs_hat".into(), f(r.lhs_hat)],
        vec!["rhs_hat".into(), f(r.rhs_hat)],
        vec!["ratio_hat".into(), opt(r.ratio_hat)],
        vec!["ratio_hat_stderr".into(), opt(r.ratio_hat_stderr)],
    ];
    let status = if r.g_violations > 0 || r.gf_violations > 0 {
        EXIT_INVARIANT
    } else if r.ratio.is_none() {
        EXIT_LOW_CONFIDENCE
    } else {
        EXIT_OK
    };
    let summary = format!("j={} on {}: ratio {} ± {}", r.j, g.name, opt(r.ratio), opt(r.ratio_stderr));
    Ok(Report { json: to_json(&r)?, header, rows, summary, status })
}

fn hopf(cfg: &Config, seed: u64) -> Result<Report> {
    let c = &cfg.hopf;
    let batch = kernels::hopf_batch(seed, c.kernels)?;
    let t = Kernel::from_matrix(&c.matrix).map_err(config_err)?;
    if t.n_rows() != t.n_cols() {
        return Err(Error::Config("the demo kernel must be square".into()));
    }
    let seq = vec![t.clone(); c.steps.max(1)];
    let lim = kernels::ratio_limit(&seq, t.kappa())?;
    let mut rows = Vec::new();
    for pr in &lim.pairs {
        for (k, w) in pr.width.iter().enumerate() {
            rows.push(vec![
                format!("{}/{}", pr.row_a, pr.row_b),
                (k + 1).to_string(),
                f(pr.lo[k]),
                f(pr.hi[k]),
                f(*w),
            ]);
        }
    }
    let status = if batch.failures > 0 || !lim.all_monotone { EXIT_INVARIANT } else { EXIT_OK };
    let rate = lim.pairs.first().and_then(|p| p.rate);
    let summary = format!("{} kernels, {} failures; bracket rate {:?} vs bound {}", batch.count, batch.failures, rate, lim.rate_bound);
    let json = json!({ "batch": to_json(&batch)?, "ratio_limit": to_json(&lim)? });
    Ok(Report { json, header: vec!["pair", "step", "lo", "hi", "width"], rows, summary, status })
}

fn series_rows(series: &[experiments::ConditionalSeries]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for s in series {
        for p in &s.points {
            rows.push(
                [
                    vec![p.family.clone(), f(p.p), p.n.to_string(), p.accepted.to_string(), p.attempted.to_string()],
                    est_cols(&p.estimate),
                    vec![p.low_confidence.to_string()],
                ]
                .concat(),
            );
        }
    }
    rows
}

const SERIES_HEADER: [&str; 12] =
    ["family", "p", "n", "accepted", "attempted", "value", "stderr", "ci_lo", "ci_hi", "n_samples", "n_truncated", "low_confidence"];

fn iic(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.iic;
    let series = experiments::iic_conditional(&pc, &c.event, &c.families, &c.sampling).map_err(config_err)?;
    let diag = experiments::convergence_diagnostic(&series, c.tolerance);
    let low = series.iter().flat_map(|s| &s.points).any(|p| p.low_confidence);
    let status = if low || diag.verdict == Verdict::Inconclusive { EXIT_LOW_CONFIDENCE } else { EXIT_OK };
    let summary = format!("verdict {:?}", diag.verdict).to_lowercase();
    let json = json!({ "config": pc, "event": c.event, "series": to_json(&series)?, "diagnostic": to_json(&diag)? });
    Ok(Report { json, header: SERIES_HEADER.to_vec(), rows: series_rows(&series), summary, status })
}

fn sweep(cfg: &Config, seed: u64) -> Result<Report> {
    let pc = cfg.percolation(seed)?;
    let c = &cfg.sweep;
    let critical = match c.critical_n {
        Some(n) => {
            let fam = experiments::ConditioningFamily::new(experiments::FamilyKind::BoxBoundary, vec![n]);
            let s = experiments::iic_conditional(&pc, &c.event, &[fam], &c.sampling).map_err(config_err)?;
            s[0].points.first().cloned()
        }
        None => None,
    };
    let params = SweepParams { p_list: c.p_list.clone(), r_proxy: c.r_proxy, sampling: c.sampling.clone() };
    let rep = experiments::supercritical_sweep(&pc, &c.event, &params, critical.as_ref(), c.tolerance).map_err(config_err)?;
    let mut series = vec![experiments::ConditionalSeries {
        family: "supercritical_box".into(),
        points: rep.points.iter().flat_map(|pair| pair.iter().cloned()).collect(),
    }];
    if let Some(cp) = &critical {
        series.push(experiments::ConditionalSeries { family: cp.family.clone(), points: vec![cp.clone()] });
    }
    let low = series.iter().flat_map(|s| &s.points).any(|p| p.low_confidence);
    let status = if low { EXIT_LOW_CONFIDENCE } else { EXIT_OK };
    let summary = format!(
        "R shift {:.4} (ok {}), versus critical {}",
        rep.r_shift,
        rep.r_shift_ok,
        rep.versus_critical.as_ref().map_or("skipped".into(), |g| format!("{:?}", g.verdict).to_lowercase())
    );
    let json = json!({ "config": pc, "event": c.event, "critical": critical, "sweep": to_json(&rep)? });
    Ok(Report { json, header: SERIES_HEADER.to_vec(), rows: series_rows(&series), summary, status })
}

fn battery(cfg: &Config, seed: u64) -> Result<Report> {
    let c = &cfg.battery;
    let p = exact::parse_rational(&c.p).map_err(config_err)?;
    let two = estimators::oracle_battery(seed, &p, c.samples, c.groups).map_err(config_err)?;
    let mut rows = vec![vec!["two_point".into(), format!("{}/{}", two.passing, two.cells), (two.fraction >= 0.99).to_string()]];
    let mut ok = two.fraction >= 0.99;
    let nf = if c.nofurther > 0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nf = estimators::nofurther_batch(rand::Rng::gen(&mut rng), c.nofurther)?;
        rows.push(vec!["nofurther".into(), format!("{} violations / {}", nf.violations, nf.count), (nf.violations == 0).to_string()]);
        ok &= nf.violations == 0;
        Some(json!({ "seed": nf.seed, "count": nf.count, "violations": nf.violations, "nontrivial": nf.nontrivial }))
    } else {
        None
    };
    let mut tiny = Vec::new();
    if c.tiny {
        for g in tiny_battery()? {
            let y = transfer::y_exhaustive(&g, 1, 2, &p)?;
            let r = transfer::exact_reconstruction(&g, &p)?;
            rows.push(vec![format!("y:{}", g.name), format!("max |Y| = {}", y.max_y), (y.violations == 0).to_string()]);
            rows.push(vec![format!("reconstruction:{}", g.name), format!("ratio {:?}", r.ratio), r.passes().to_string()]);
            ok &= y.violations == 0 && r.passes();
            tiny.push(json!({ "y": to_json(&y)?, "reconstruction": to_json(&r)? }));
        }
    }
    let status = if ok { EXIT_OK } else { EXIT_INVARIANT };
    let summary = format!("{}/{} two-point cells within 4 sigma; all checks pass: {ok}", two.passing, two.cells);
    let json = json!({ "two_point": to_json(&two)?, "nofurther": nf, "tiny": tiny });
    Ok(Report { json, header: vec!["check", "result", "pass"], rows, summary, status })
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
                _ => EXIT_ERROR,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        Config::from_toml(
            r#"
[two_point]
samples = 200
[one_arm]
samples = 200
radii = [1, 2, 4]
[transfer.plan]
n_samples = 40
batches = 2
[hopf]
kernels = 50
steps = 5
"#,
        )
        .unwrap()
    }

    #[test]
    fn commands_run() {
        let c = small();
        for cmd in [Command::EstimateTwoPoint, Command::EstimateOneArm, Command::HopfDemo, Command::ExtractKernels] {
            let r = run_command(cmd, &c, 3).unwrap();
            assert!(!r.rows.is_empty(), "{}", cmd.name());
            assert_ne!(r.status, EXIT_INVARIANT, "{}", cmd.name());
            assert!(r.rows.iter().all(|row| row.len() == r.header.len()), "{}", cmd.name());
        }
    }

    #[test]
    fn exact_reconstruct_command() {
        let mut c = small();
        c.transfer = Config::from_toml("[transfer]\nexact = true\n[transfer.geometry]\nkind = \"tiny\"\nname = \"line\"")
            .unwrap()
            .transfer;
        let r = run_command(Command::ReconstructArm, &c, 1).unwrap();
        assert_eq!(r.status, EXIT_OK);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with(["iiclab", "no-such-command"]), EXIT_CONFIG);
        assert_eq!(main_with(["iiclab", "--config", "/nonexistent/x.toml", "hopf-demo"]), EXIT_CONFIG);
    }

    #[test]
    fn writes_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_command(Command::HopfDemo, &small(), 1).unwrap();
        let a = write_report(dir.path(), "h", Format::Csv, &r).unwrap();
        let b = write_report(dir.path(), "h", Format::Json, &r).unwrap();
        assert!(fs::read_to_string(a).unwrap().starts_with("pair,step,lo,hi,width"));
        assert!(fs::read_to_string(b).unwrap().contains("ratio_limit"));
    }
}
