//! Positive kernels, relative oscillation and Hopf's contraction.
//!
//! A kernel `T` acts on positive functions by `(Tf)(i) = sum_j T(i,j) f(j)`.
//! With `kappa^2` the largest cross ratio `T(i,j)T(i',j') / (T(i,j')T(i',j))`,
//! the oscillation of `Tf/Tg` is at most `(kappa-1)/(kappa+1)` times that of
//! `f/g`. Entries are stored as logarithms so long products do not underflow.

use std::io::{Read, Write};

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack for floating-point contraction assertions.
pub const EPS_NUM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    rows: Vec<String>,
    cols: Vec<String>,
    /// Row-major `ln T(i,j)`.
    log: Vec<f64>,
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl Kernel {
    pub fn new(rows: Vec<String>, cols: Vec<String>, entries: &[Vec<f64>]) -> Result<Self> {
        if entries.len() != rows.len() || entries.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::InvalidKernel("entry table does not match labels".into()));
        }
        let mut log = Vec::with_capacity(rows.len() * cols.len());
        for (i, r) in entries.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidKernel(format!("entry ({i},{j}) = {v} is not positive and finite")));
                }
                log.push(v.ln());
            }
        }
        Self::from_log(rows, cols, log)
    }

    pub fn from_matrix(entries: &[Vec<f64>]) -> Result<Self> {
        let nc = entries.first().map_or(0, Vec::len);
        Self::new(default_labels(entries.len()), default_labels(nc), entries)
    }

    pub fn from_log(rows: Vec<String>, cols: Vec<String>, log: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::InvalidKernel("empty index set".into()));
        }
        if log.len() != rows.len() * cols.len() {
            return Err(Error::InvalidKernel("entry count does not match labels".into()));
        }
        if log.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("entries must be positive and finite".into()));
        }
        Ok(Kernel { rows, cols, log })
    }

    /// Entries log-uniform in `[lo, hi]`.
    pub fn random(rng: &mut impl Rng, nr: usize, nc: usize, lo: f64, hi: f64) -> Self {
        let (a, b) = (lo.ln(), hi.ln());
        let log = (0..nr * nc).map(|_| rng.gen_range(a..=b)).collect();
        Kernel { rows: default_labels(nr), cols: default_labels(nc), log }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log[i * self.cols.len() + j]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.log_entry(i, j).exp()
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| (0..self.n_cols()).map(|j| self.entry(i, j)).collect()).collect()
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n_cols() {
            return Err(Error::DimensionMismatch { expected: self.n_cols(), got: f.len() });
        }
        Ok((0..self.n_rows()).map(|i| (0..self.n_cols()).map(|j| self.entry(i, j) * f[j]).sum()).collect())
    }

    /// `ln (T e^lf)`.
    pub fn apply_log(&self, lf: &[f64]) -> Result<Vec<f64>> {
        if lf.len() != self.n_cols() {
            return Err(Error::DimensionMismatch { expected: self.n_cols(), got: lf.len() });
        }
        Ok((0..self.n_rows())
            .map(|i| log_sum_exp((0..self.n_cols()).map(|j| self.log_entry(i, j) + lf[j])))
            .collect())
    }

    /// `ln kappa^2`: over row pairs, the spread of `ln T(i,.) - ln T(i',.)`.
    pub fn log_kappa_sq(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.n_rows() {
            for k in i + 1..self.n_rows() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for j in 0..self.n_cols() {
                    let d = self.log_entry(i, j) - self.log_entry(k, j);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                best = best.max(hi - lo);
            }
        }
        best
    }

    pub fn kappa(&self) -> f64 {
        (self.log_kappa_sq() / 2.0).exp()
    }

    pub fn contraction(&self) -> f64 {
        let k = self.kappa();
        (k - 1.0) / (k + 1.0)
    }

    /// `self * other`, by log-sum-exp.
    pub fn product(&self, other: &Kernel) -> Result<Kernel> {
        if self.cols != other.rows {
            return Err(Error::InvalidKernel(format!(
                "index mismatch: {} columns against {} rows",
                self.n_cols(),
                other.n_rows()
            )));
        }
        let mut log = Vec::with_capacity(self.n_rows() * other.n_cols());
        for i in 0..self.n_rows() {
            for k in 0..other.n_cols() {
                log.push(log_sum_exp((0..self.n_cols()).map(|j| self.log_entry(i, j) + other.log_entry(j, k))));
            }
        }
        Kernel::from_log(self.rows.clone(), other.cols.clone(), log)
    }

    /// CSV with a header of column labels and a label in front of each row.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.cols.iter().cloned());
        out.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.rows[i].clone()];
            rec.extend((0..self.n_cols()).map(|j| format!("{:e}", self.entry(i, j))));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Kernel> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let cols: Vec<String> = rd.headers().map_err(csv_err)?.iter().skip(1).map(str::to_owned).collect();
        let mut rows = Vec::new();
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let mut it = rec.iter();
            rows.push(it.next().unwrap_or_default().to_owned());
            let vals = it
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("kernel entry {s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            entries.push(vals);
        }
        Kernel::new(rows, cols, &entries)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn check_positive(f: &[f64]) -> Result<()> {
    if f.is_empty() {
        return Err(Error::InvalidKernel("empty function".into()));
    }
    if f.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidKernel("functions must be positive and finite".into()));
    }
    Ok(())
}

/// `max f/g - min f/g`.
pub fn oscillation(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: g.len() });
    }
    check_positive(f)?;
    check_positive(g)?;
    let (lo, hi) = ratio_range(f.iter().zip(g).map(|(a, b)| a / b));
    Ok(hi - lo)
}

/// Oscillation from logarithms of `f` and `g`.
pub fn oscillation_log(lf: &[f64], lg: &[f64]) -> Result<f64> {
    if lf.len() != lg.len() {
        return Err(Error::DimensionMismatch { expected: lf.len(), got: lg.len() });
    }
    let (lo, hi) = ratio_range(lf.iter().zip(lg).map(|(a, b)| a - b));
    Ok(hi.exp() - lo.exp())
}

fn ratio_range(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub kappa: f64,
    pub holds: bool,
}

/// Compares `osc(Tf, Tg)` with `(kappa-1)/(kappa+1) osc(f, g)`.
///
/// The slack is [`EPS_NUM`] relative to the largest ratio involved, which is
/// the scale at which the oscillations themselves are rounded.
pub fn contract_check(t: &Kernel, f: &[f64], g: &[f64]) -> Result<ContractCheck> {
    let osc_in = oscillation(f, g)?;
    let tf = t.apply(f)?;
    let tg = t.apply(g)?;
    let lhs = oscillation(&tf, &tg)?;
    let kappa = t.kappa();
    let rhs = (kappa - 1.0) / (kappa + 1.0) * osc_in;
    let scale = f.iter().zip(g).map(|(a, b)| a / b).fold(0.0, f64::max);
    Ok(ContractCheck { lhs, rhs, kappa, holds: lhs <= rhs + EPS_NUM * scale })
}

/// Outcome of [`hopf_batch`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HopfBatch {
    pub seed: u64,
    pub count: usize,
    pub failures: usize,
    /// Largest `lhs / rhs` seen; at most 1 up to rounding.
    pub worst_ratio: f64,
    pub min_kappa: f64,
    pub max_kappa: f64,
}

/// Contraction checks on `count` random kernels of sizes `2..=8` with
/// entries log-uniform in `[0.1, 10]` and positive `f`, `g` uniform on the
/// same range.
pub fn hopf_batch(seed: u64, count: usize) -> Result<HopfBatch> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = HopfBatch { seed, count, failures: 0, worst_ratio: 0.0, min_kappa: f64::INFINITY, max_kappa: 1.0 };
    for _ in 0..count {
        let (r, c) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
        let t = Kernel::random(&mut rng, r, c, 0.1, 10.0);
        let f: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..10.0)).collect();
        let g: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..10.0)).collect();
        let chk = contract_check(&t, &f, &g)?;
        out.failures += !chk.holds as usize;
        if chk.rhs > 0.0 {
            out.worst_ratio = out.worst_ratio.max(chk.lhs / chk.rhs);
        }
        out.min_kappa = out.min_kappa.min(chk.kappa);
        out.max_kappa = out.max_kappa.max(chk.kappa);
    }
    Ok(out)
}

/// Ordered product `T_1 T_2 ... T_n`.
pub fn kernel_product(ts: &[Kernel]) -> Result<Kernel> {
    let (first, rest) = ts.split_first().ok_or_else(|| Error::InvalidKernel("empty product".into()))?;
    rest.iter().try_fold(first.clone(), |acc, t| acc.product(t))
}

/// The bracket on `alpha(C, C')` for one pair of first-kernel rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairBracket {
    pub row_a: String,
    pub row_b: String,
    /// `min_j M(a,j)/M(b,j)` after each step `k = 1..`.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub width: Vec<f64>,
    pub alpha: f64,
    pub final_width: f64,
    /// Whether `lo` never decreased and `hi` never increased, in exact arithmetic.
    pub monotone: bool,
    /// Fitted per-step decay of `width`; `None` when fewer than two widths are positive.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioLimitReport {
    pub steps: usize,
    pub kappa_bound: f64,
    pub kappa_max: f64,
    /// `(kappa_bound - 1)/(kappa_bound + 1)`.
    pub rate_bound: f64,
    pub pairs: Vec<PairBracket>,
    /// Largest oscillation of any row pair after each step.
    pub oscillation: Vec<f64>,
    pub oscillation_nonincreasing: bool,
    pub all_monotone: bool,
}

/// Brackets the ratio limits of rows of `T_1 ... T_k` as `k` grows.
///
/// Row vectors are propagated in exact rational arithmetic over the
/// (dyadic) floating-point entries, so the monotonicity of the bracket
/// endpoints is checked without rounding.
pub fn ratio_limit(ts: &[Kernel], kappa_bound: f64) -> Result<RatioLimitReport> {
    let first = ts.first().ok_or_else(|| Error::InvalidKernel("empty kernel sequence".into()))?;
    let mut kappa_max: f64 = 1.0;
    for (n, t) in ts.iter().enumerate() {
        let k = t.kappa();
        if k > kappa_bound * (1.0 + EPS_NUM) {
            return Err(Error::Precondition(format!("kernel {n} has kappa {k} > bound {kappa_bound}")));
        }
        kappa_max = kappa_max.max(k);
    }
    for w in ts.windows(2) {
        if w[0].cols != w[1].rows {
            return Err(Error::InvalidKernel("adjacent index sets do not match".into()));
        }
    }
    let exact: Vec<Vec<Vec<BigRational>>> = ts
        .iter()
        .map(|t| {
            (0..t.n_rows())
                .map(|i| (0..t.n_cols()).map(|j| BigRational::from_float(t.entry(i, j)).expect("finite")).collect())
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for a in 0..first.n_rows() {
        for b in a + 1..first.n_rows() {
            pairs.push(bracket_pair(first, &exact, a, b));
        }
    }
    let steps = ts.len();
    let oscillation: Vec<f64> =
        (0..steps).map(|k| pairs.iter().map(|p| p.width[k]).fold(0.0, f64::max)).collect();
    let oscillation_nonincreasing = oscillation.windows(2).all(|w| w[1] <= w[0]);
    let all_monotone = pairs.iter().all(|p| p.monotone);
    Ok(RatioLimitReport {
        steps,
        kappa_bound,
        kappa_max,
        rate_bound: (kappa_bound - 1.0) / (kappa_bound + 1.0),
        pairs,
        oscillation,
        oscillation_nonincreasing,
        all_monotone,
    })
}

fn bracket_pair(first: &Kernel, exact: &[Vec<Vec<BigRational>>], a: usize, b: usize) -> PairBracket {
    let mut u = exact[0][a].clone();
    let mut v = exact[0][b].clone();
    let mut lo_q: Vec<BigRational> = Vec::new();
    let mut hi_q: Vec<BigRational> = Vec::new();
    for (step, t) in exact.iter().enumerate() {
        if step > 0 {
            u = vec_mat(&u, t);
            v = vec_mat(&v, t);
        }
        let mut lo: Option<BigRational> = None;
        let mut hi: Option<BigRational> = None;
        for (x, y) in u.iter().zip(&v) {
            let r = x / y;
            if lo.as_ref().map_or(true, |l| &r < l) {
                lo = Some(r.clone());
            }
            if hi.as_ref().map_or(true, |h| &r > h) {
                hi = Some(r);
            }
        }
        lo_q.push(lo.expect("nonempty"));
        hi_q.push(hi.expect("nonempty"));
    }
    let monotone = lo_q.windows(2).all(|w| w[1] >= w[0]) && hi_q.windows(2).all(|w| w[1] <= w[0]);
    let width_q: Vec<BigRational> = lo_q.iter().zip(&hi_q).map(|(l, h)| h - l).collect();
    let f = |q: &BigRational| q.to_f64().unwrap_or(f64::NAN);
    let lo: Vec<f64> = lo_q.iter().map(f).collect();
    let hi: Vec<f64> = hi_q.iter().map(f).collect();
    let width: Vec<f64> = width_q.iter().map(f).collect();
    let last = lo_q.len() - 1;
    let alpha = f(&((&lo_q[last] + &hi_q[last]) / BigRational::from_integer(2.into())));
    let pts: Vec<(f64, f64)> = width_q
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.is_zero())
        .map(|(k, w)| ((k + 1) as f64, log_of(w)))
        .collect();
    let rate = (pts.len() >= 2).then(|| slope(&pts).exp());
    PairBracket {
        row_a: first.rows[a].clone(),
        row_b: first.rows[b].clone(),
        final_width: width[last],
        lo,
        hi,
        width,
        alpha,
        monotone,
        rate,
    }
}

fn vec_mat(u: &[BigRational], t: &[Vec<BigRational>]) -> Vec<BigRational> {
    let nc = t[0].len();
    (0..nc)
        .map(|k| u.iter().zip(t).fold(BigRational::zero(), |acc, (x, row)| acc + x * &row[k]))
        .collect()
}

/// Natural log of a positive rational that may be far outside `f64` range.
fn log_of(q: &BigRational) -> f64 {
    let (n, d) = (q.numer(), q.denom());
    let shift = |x: &num_bigint::BigInt| -> (f64, f64) {
        let bits = x.bits() as i64;
        let s = (bits - 60).max(0);
        let top = (x >> s as usize).to_f64().unwrap_or(f64::NAN);
        (top.ln(), s as f64 * std::f64::consts::LN_2)
    };
    let (ln_n, sn) = shift(n);
    let (ln_d, sd) = shift(d);
    ln_n + sn - ln_d - sd
}

/// Least-squares slope of `y` on `x`.
fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Kernel {
        Kernel::from_matrix(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Quadruple loop over both orientations, independent of the row-pair spread.
    fn kappa_brute(t: &Kernel) -> f64 {
        let mut best: f64 = 1.0;
        for i in 0..t.n_rows() {
            for k in 0..t.n_rows() {
                for j in 0..t.n_cols() {
                    for l in 0..t.n_cols() {
                        let c = t.entry(i, j) * t.entry(k, l) / (t.entry(i, l) * t.entry(k, j));
                        best = best.max(c);
                    }
                }
            }
        }
        best.sqrt()
    }

    #[test]
    fn oscillation_cases() {
        assert_eq!(oscillation(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(oscillation(&[2.0, 6.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(oscillation(&[1.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(oscillation(&[0.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(oscillation(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn kappa_cases() {
        assert!((m(&[&[3.0, 3.0], &[3.0, 3.0]]).kappa() - 1.0).abs() < 1e-15);
        assert!((m(&[&[2.0, 1.0], &[1.0, 2.0]]).kappa() - 2.0).abs() < 1e-12);
        let a = [1.0, 2.0, 5.0];
        let b = [0.5, 7.0];
        let r1 = Kernel::from_matrix(&a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect::<Vec<_>>()).unwrap();
        assert!((r1.kappa() - 1.0).abs() < 1e-12);
        assert!(Kernel::from_matrix(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn kappa_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (r, c) = (rng.gen_range(1..6), rng.gen_range(1..6));
            let t = Kernel::random(&mut rng, r, c, 0.1, 10.0);
            assert!((t.kappa() - kappa_brute(&t)).abs() < 1e-9 * t.kappa());
        }
    }

    #[test]
    fn contraction_examples() {
        let a = [1.0, 2.0];
        let r1 = Kernel::from_matrix(&a.iter().map(|x| a.iter().map(|y| x * y).collect()).collect::<Vec<_>>()).unwrap();
        let c = contract_check(&r1, &[1.0, 5.0], &[2.0, 1.0]).unwrap();
        assert!(c.lhs.abs() < 1e-15 && c.holds);
        let t = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let c = contract_check(&t, &[1.0, 4.0], &[1.0, 4.0]).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert!(c.lhs.abs() < 1e-15 && c.holds);
        assert!(contract_check(&t, &[1.0, 4.0, 1.0], &[1.0, 4.0, 2.0]).is_err());
    }

    #[test]
    fn random_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (r, c) = (rng.gen_range(2..=8), rng.gen_range(2..=8));
            let t = Kernel::random(&mut rng, r, c, 0.1, 10.0);
            let f: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..10.0)).collect();
            let g: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..10.0)).collect();
            let chk = contract_check(&t, &f, &g).unwrap();
            assert!(chk.holds, "{chk:?}");
        }
    }

    #[test]
    fn batch_is_reproducible() {
        let a = hopf_batch(3, 200).unwrap();
        let b = hopf_batch(3, 200).unwrap();
        assert_eq!(a.failures, 0);
        assert_eq!(a.worst_ratio, b.worst_ratio);
        assert!(a.worst_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn products() {
        let t = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert_eq!(kernel_product(&[t.clone()]).unwrap(), t);
        let s = kernel_product(&[m(&[&[3.0]]), m(&[&[5.0]])]).unwrap();
        assert!((s.entry(0, 0) - 15.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Kernel::random(&mut rng, 3, 4, 0.1, 10.0);
        let b = Kernel::random(&mut rng, 4, 2, 0.1, 10.0);
        let c = Kernel::random(&mut rng, 2, 5, 0.1, 10.0);
        let left = a.product(&b).unwrap().product(&c).unwrap();
        let right = a.product(&b.product(&c).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert!((left.entry(i, j) / right.entry(i, j) - 1.0).abs() < 1e-12);
            }
        }
        assert!(a.product(&a).is_err());
        // Linear-space product as a second route.
        let ab = a.product(&b).unwrap();
        for i in 0..3 {
            for k in 0..2 {
                let lin: f64 = (0..4).map(|j| a.entry(i, j) * b.entry(j, k)).sum();
                assert!((ab.entry(i, k) / lin - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_path_matches_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let t = Kernel::random(&mut rng, 4, 4, 0.1, 10.0);
            let f: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..10.0)).collect();
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..10.0)).collect();
            let lin = oscillation(&t.apply(&f).unwrap(), &t.apply(&g).unwrap()).unwrap();
            let lf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
            let lg: Vec<f64> = g.iter().map(|v| v.ln()).collect();
            let lo = oscillation_log(&t.apply_log(&lf).unwrap(), &t.apply_log(&lg).unwrap()).unwrap();
            assert!((lin - lo).abs() <= 1e-9 * lin.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn ratio_limit_rank_one() {
        let a = [1.0, 3.0];
        let r1 = Kernel::from_matrix(&a.iter().map(|x| [2.0, 5.0].iter().map(|y| x * y).collect()).collect::<Vec<_>>()).unwrap();
        let t = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let rep = ratio_limit(&[r1.clone(), t.clone(), t], 2.0).unwrap();
        let p = &rep.pairs[0];
        // Zero up to the rounding of the stored logarithms.
        assert!(p.width[0] < 1e-15);
        assert!((p.alpha - 7.0 / 21.0).abs() < 1e-15);
        assert!(rep.all_monotone && rep.oscillation_nonincreasing);
    }

    #[test]
    fn ratio_limit_two_by_two() {
        let t = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let rep = ratio_limit(&vec![t; 30], 2.0).unwrap();
        let p = &rep.pairs[0];
        assert!(p.monotone);
        for (k, w) in p.width.iter().enumerate() {
            let k = (k + 1) as f64;
            let closed = 4.0 * 3f64.powf(k) / (9f64.powf(k) - 1.0);
            assert!((w / closed - 1.0).abs() < 1e-9, "k={k}: {w} vs {closed}");
        }
        let rate = p.rate.unwrap();
        assert!((rate - 1.0 / 3.0).abs() < 0.1 / 3.0, "{rate}");
        assert!((p.alpha - 1.0).abs() < 1e-12);
        assert!(ratio_limit(&[m(&[&[4.0, 1.0], &[1.0, 4.0]])], 2.0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let t = Kernel::new(vec!["a".into(), "b".into()], vec!["x".into(), "y".into(), "z".into()], &[
            vec![1.0, 2.5, 1e-30],
            vec![3.0, 4.0, 7.125],
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Kernel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows(), t.rows());
        assert_eq!(back.cols(), t.cols());
        for i in 0..2 {
            for j in 0..3 {
                assert!((back.entry(i, j) / t.entry(i, j) - 1.0).abs() < 1e-14);
            }
        }
        assert!(Kernel::read_csv(",x\na,-1\n".as_bytes()).is_err());
    }
}
