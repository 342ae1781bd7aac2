//! Monte-Carlo sweeps over the power-splitting ratio and the relay position,
//! plus single-drop convergence traces.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{self, ChannelSet, SystemParams};
use crate::diag::{self, DiagVariant};
use crate::error::{Error, Result};
use crate::joint::{self, IterConfig, OptScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    EfaOpt,
    NefaOpt,
    EfaS1,
    EfaS2,
    NefaS,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::EfaOpt, Scheme::NefaOpt, Scheme::EfaS1, Scheme::EfaS2, Scheme::NefaS];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::EfaOpt => "EFA-OPT",
            Scheme::NefaOpt => "NEFA-OPT",
            Scheme::EfaS1 => "EFA-S1",
            Scheme::EfaS2 => "EFA-S2",
            Scheme::NefaS => "NEFA-S",
        }
    }

    /// The diagonalized schemes need as many relay antennas as terminal antennas.
    pub fn needs_square_relay(self) -> bool {
        matches!(self, Scheme::EfaS1 | Scheme::EfaS2 | Scheme::NefaS)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Parse(format!("unknown scheme '{s}'")))
    }
}

/// How the power-splitting grid is searched for each relay position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoSearch {
    /// Evaluate every grid point.
    Exhaustive,
    /// Evaluate every `stride`-th grid point, then every grid point within
    /// `radius` indices of the best mean rate found by the first pass.
    Refine { stride: usize, radius: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Template; `rho`, `d_dr` and `d_rs` are overwritten per grid point,
    /// keeping the template's `d_DS`.
    pub params: SystemParams,
    pub schemes: Vec<Scheme>,
    pub rho_grid: Vec<f64>,
    pub dr_ratio_grid: Vec<f64>,
    pub drops: usize,
    pub seed: u64,
    pub rho_search: RhoSearch,
    /// Settings for the iterative schemes; the scheme field is ignored.
    pub iter: IterConfig,
    /// Stopping tolerance and iteration cap of the simplified schemes.
    pub diag_tol: f64,
    pub diag_max_iters: usize,
}

/// `0.02, 0.04, …, 0.98`.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=49).map(|i| i as f64 / 50.0).collect()
}

impl Default for Scenario {
    fn default() -> Self {
        let params = SystemParams::default();
        Scenario {
            dr_ratio_grid: vec![params.d_dr / params.d_ds()],
            params,
            schemes: Scheme::ALL.to_vec(),
            rho_grid: default_rho_grid(),
            drops: 200,
            seed: 1,
            rho_search: RhoSearch::Exhaustive,
            iter: IterConfig::new(OptScheme::EfaOpt),
            diag_tol: 1e-4,
            diag_max_iters: 500,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.iter.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.drops == 0 {
            return bad("drops must be at least 1".into());
        }
        if self.schemes.is_empty() || self.rho_grid.is_empty() || self.dr_ratio_grid.is_empty() {
            return bad("schemes and grids must be nonempty".into());
        }
        for &x in self.rho_grid.iter().chain(&self.dr_ratio_grid) {
            if !(x > 0.0 && x < 1.0) {
                return bad(format!("grid value {x} outside (0, 1)"));
            }
        }
        if let Some(s) = self.schemes.iter().find(|s| s.needs_square_relay()) {
            if self.params.r != self.params.r_relay {
                return bad(format!("{s} requires r_relay = r"));
            }
        }
        if let RhoSearch::Refine { stride, .. } = self.rho_search {
            if stride == 0 {
                return bad("refine stride must be at least 1".into());
            }
        }
        if !(self.diag_tol > 0.0) || self.diag_max_iters == 0 {
            return bad("simplified-scheme tolerance and cap must be positive".into());
        }
        Ok(())
    }

    pub fn params_at(&self, rho: f64, dr_ratio: f64) -> SystemParams {
        self.params.with_geometry(self.params.d_ds(), dr_ratio).with_rho(rho)
    }

    /// Apply one `key = value` setting. Lists are comma separated; grids also
    /// accept `start:step:stop`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Parse(format!("{key}: bad number '{v}'")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| Error::Parse(format!("{key}: bad integer '{v}'")));
        let d_ds = self.params.d_ds();
        let ratio = self.params.d_dr / d_ds;
        match key.trim().to_ascii_lowercase().as_str() {
            "r" => self.params.r = int(v)?,
            "r_relay" | "rr" => self.params.r_relay = int(v)?,
            "p_source" | "ps" => self.params.p_source = num(v)?,
            "p_dest" | "pd" => self.params.p_dest = num(v)?,
            "noise_power" => self.params.noise_power = num(v)?,
            "rician_k" | "k" => self.params.rician_k = num(v)?,
            "eh_efficiency" => self.params.eh_efficiency = num(v)?,
            "d_ds" => self.params = self.params.with_geometry(num(v)?, ratio),
            "dr_ratio" | "dr_grid" | "dr_ratio_grid" => self.dr_ratio_grid = parse_grid(v)?,
            "rho" | "rho_grid" => self.rho_grid = parse_grid(v)?,
            "drops" => self.drops = int(v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Parse(format!("seed: bad integer '{v}'")))?,
            "schemes" | "scheme" => {
                self.schemes = v.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
            }
            "epsilon" | "epsilon_obj" => self.iter.epsilon_obj = num(v)?,
            "max_iters" => self.iter.max_iters = int(v)?,
            "diag_tol" => self.diag_tol = num(v)?,
            "diag_max_iters" => self.diag_max_iters = int(v)?,
            other => return Err(Error::Parse(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Read a flat `key = value` file; `#` starts a comment.
    pub fn apply_config<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }
}

/// Parse `a,b,c` or `start:step:stop` (inclusive, to within half a step).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Parse(format!("bad grid '{s}'"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|x| x.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let (start, step, stop) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 0.5).floor() as usize;
        // Rounded to 12 decimals so 0.02:0.02:0.98 yields the literal values.
        return Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    if parts.len() != 1 {
        return Err(bad());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
}

/// Rate and iteration count of one scheme on one channel draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunResult {
    pub rate_bits: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Run one scheme with the sweep's settings. Errors mark the drop as flagged.
pub fn run_scheme(scheme: Scheme, ch: &ChannelSet, p: &SystemParams, s: &Scenario) -> Result<RunResult> {
    let res = match scheme {
        Scheme::EfaOpt | Scheme::NefaOpt => {
            let cfg = IterConfig {
                scheme: if scheme == Scheme::EfaOpt { OptScheme::EfaOpt } else { OptScheme::NefaOpt },
                ..s.iter.clone()
            };
            let (_, trace) = joint::run_joint_opt(ch, p, &cfg)?;
            RunResult {
                rate_bits: trace.final_rate(),
                iterations: trace.iterations(),
                converged: trace.converged,
            }
        }
        Scheme::EfaS1 | Scheme::EfaS2 => {
            let variant = if scheme == Scheme::EfaS1 { DiagVariant::S1 } else { DiagVariant::S2 };
            let out = diag::run_efa_s(ch, p, variant, s.diag_tol, s.diag_max_iters)?;
            RunResult {
                rate_bits: out.rate_bits,
                iterations: out.trace.iterations,
                converged: out.trace.converged,
            }
        }
        Scheme::NefaS => {
            let out = diag::run_nefa_s(ch, p)?;
            RunResult {
                rate_bits: out.rate_bits,
                iterations: out.trace.iterations,
                converged: true,
            }
        }
    };
    if !res.rate_bits.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(res)
}

/// Channel draw for `(seed, drop, dr_index)` from its own ChaCha stream, so
/// draws do not depend on the scheme list or on the evaluation order.
pub fn drop_channels(s: &Scenario, drop: usize, dr_index: usize) -> Result<ChannelSet> {
    let p = s.params_at(s.rho_grid[0], s.dr_ratio_grid[dr_index]);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(((drop as u64) << 24) | dr_index as u64);
    channel::make_channel_set(&p, &mut rng)
}

/// Aggregated statistics of one `(scheme, ρ, d_DR/d_DS)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub scheme: Scheme,
    pub rho: f64,
    pub dr_ratio: f64,
    pub mean_rate_bits: f64,
    /// Sample standard deviation over `√n_drops`.
    pub stderr: f64,
    /// Drops that entered the mean.
    pub n_drops: usize,
    /// Drops excluded because the scheme failed on them.
    pub n_flagged: usize,
    pub mean_iterations: f64,
    /// Included drops that hit the iteration cap.
    pub n_unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub cells: Vec<Cell>,
}

impl ResultTable {
    pub fn cell(&self, scheme: Scheme, rho: f64, dr_ratio: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.rho == rho && c.dr_ratio == dr_ratio)
    }

    /// Cells of one scheme at one relay position, in increasing `ρ`.
    pub fn curve(&self, scheme: Scheme, dr_ratio: f64) -> Vec<&Cell> {
        let mut v: Vec<&Cell> = self
            .cells
            .iter()
            .filter(|c| c.scheme == scheme && c.dr_ratio == dr_ratio && c.n_drops > 0)
            .collect();
        v.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        v
    }

    /// Cell with the highest mean rate; ties go to the smaller `ρ`.
    pub fn best_rho(&self, scheme: Scheme, dr_ratio: f64) -> Option<&Cell> {
        best_of(self.curve(scheme, dr_ratio))
    }

    pub fn max_flagged_fraction(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                let n = c.n_drops + c.n_flagged;
                if n == 0 {
                    0.0
                } else {
                    c.n_flagged as f64 / n as f64
                }
            })
            .fold(0.0, f64::max)
    }
}

fn best_of<'a>(curve: Vec<&'a Cell>) -> Option<&'a Cell> {
    curve
        .into_iter()
        .fold(None, |best: Option<&Cell>, c| match best {
            Some(b) if b.mean_rate_bits >= c.mean_rate_bits => Some(b),
            _ => Some(c),
        })
}

type DropResults = Vec<Result<RunResult>>;

/// Evaluate `(scheme, ρ index)` pairs on every drop at one relay position.
/// The outer vector is indexed by drop, the inner one follows `jobs`.
fn evaluate(s: &Scenario, dr_index: usize, jobs: &[(Scheme, usize)]) -> Vec<DropResults> {
    (0..s.drops)
        .into_par_iter()
        .map(|drop| match drop_channels(s, drop, dr_index) {
            Ok(ch) => jobs
                .iter()
                .map(|&(scheme, ri)| {
                    let p = s.params_at(s.rho_grid[ri], s.dr_ratio_grid[dr_index]);
                    run_scheme(scheme, &ch, &p, s)
                })
                .collect(),
            Err(e) => jobs.iter().map(|_| Err(e.clone())).collect(),
        })
        .collect()
}

fn aggregate(s: &Scenario, dr_index: usize, jobs: &[(Scheme, usize)], results: &[DropResults]) -> Vec<Cell> {
    jobs.iter()
        .enumerate()
        .map(|(j, &(scheme, ri))| {
            // Summed in drop order so the result does not depend on scheduling.
            let ok: Vec<&RunResult> = results.iter().filter_map(|d| d[j].as_ref().ok()).collect();
            let n = ok.len();
            let mean = if n > 0 { ok.iter().map(|r| r.rate_bits).sum::<f64>() / n as f64 } else { f64::NAN };
            let stderr = if n > 1 {
                let ss: f64 = ok.iter().map(|r| (r.rate_bits - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            let mean_iterations = if n > 0 {
                ok.iter().map(|r| r.iterations as f64).sum::<f64>() / n as f64
            } else {
                0.0
            };
            Cell {
                scheme,
                rho: s.rho_grid[ri],
                dr_ratio: s.dr_ratio_grid[dr_index],
                mean_rate_bits: mean,
                stderr,
                n_drops: n,
                n_flagged: s.drops - n,
                mean_iterations,
                n_unconverged: ok.iter().filter(|r| !r.converged).count(),
            }
        })
        .collect()
}

/// Sweep every scheme over the `ρ` grid at every relay position.
pub fn run_scenario(s: &Scenario) -> Result<ResultTable> {
    s.validate()?;
    let mut table = ResultTable::default();
    for dr_index in 0..s.dr_ratio_grid.len() {
        let first: Vec<usize> = match s.rho_search {
            RhoSearch::Exhaustive => (0..s.rho_grid.len()).collect(),
            RhoSearch::Refine { stride, .. } => (stride / 2..s.rho_grid.len()).step_by(stride).collect(),
        };
        let jobs: Vec<(Scheme, usize)> = s
            .schemes
            .iter()
            .flat_map(|&sc| first.iter().map(move |&ri| (sc, ri)))
            .collect();
        let results = evaluate(s, dr_index, &jobs);
        let mut cells = aggregate(s, dr_index, &jobs, &results);
        if let RhoSearch::Refine { radius, .. } = s.rho_search {
            let mut extra = Vec::new();
            for &sc in &s.schemes {
                let curve: Vec<&Cell> = cells.iter().filter(|c| c.scheme == sc && c.n_drops > 0).collect();
                let Some(best) = best_of(curve) else { continue };
                let bi = s.rho_grid.iter().position(|&x| x == best.rho).unwrap_or(0);
                let lo = bi.saturating_sub(radius);
                let hi = (bi + radius).min(s.rho_grid.len() - 1);
                extra.extend((lo..=hi).filter(|ri| !first.contains(ri)).map(|ri| (sc, ri)));
            }
            let results = evaluate(s, dr_index, &extra);
            cells.extend(aggregate(s, dr_index, &extra, &results));
        }
        cells.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.rho.total_cmp(&b.rho)));
        table.cells.extend(cells);
    }
    Ok(table)
}

pub const CSV_HEADER: &str = "scheme,rho,dr_ratio,mean_rate_bits,stderr,n_drops,n_flagged";

pub fn emit_csv<W: Write>(t: &ResultTable, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for c in &t.cells {
        writeln!(
            w,
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{},{}",
            c.scheme, c.rho, c.dr_ratio, c.mean_rate_bits, c.stderr, c.n_drops, c.n_flagged
        )?;
    }
    Ok(())
}

/// Read back a table written by [`emit_csv`]; iteration statistics are not
/// part of the format and come back as zero.
pub fn parse_csv<R: BufRead>(r: R) -> Result<ResultTable> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Parse("missing CSV header".into()));
    }
    let mut table = ResultTable::default();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("expected 7 fields in '{line}'")));
        }
        let num = |x: &str| x.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{x}'")));
        let int = |x: &str| x.parse::<usize>().map_err(|_| Error::Parse(format!("bad count '{x}'")));
        table.cells.push(Cell {
            scheme: f[0].parse()?,
            rho: num(f[1])?,
            dr_ratio: num(f[2])?,
            mean_rate_bits: num(f[3])?,
            stderr: num(f[4])?,
            n_drops: int(f[5])?,
            n_flagged: int(f[6])?,
            mean_iterations: 0.0,
            n_unconverged: 0,
        });
    }
    Ok(table)
}

/// Objective trajectory of one scheme on one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub scheme: Scheme,
    /// Objective after each iteration; `C_iter` for the iterative schemes
    /// and the diagonalized objective for the simplified ones.
    pub objective: Vec<f64>,
    pub rate_bits: f64,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }
}

/// Trace every scheme on one drop. The iterative schemes all start from
/// `joint::initialize_state`, the simplified ones from their equal-gain start.
pub fn convergence_report(
    ch: &ChannelSet,
    p: &SystemParams,
    schemes: &[Scheme],
    iter: &IterConfig,
    diag_tol: f64,
) -> Result<Vec<ConvergenceTrace>> {
    schemes
        .iter()
        .map(|&scheme| match scheme {
            Scheme::EfaOpt | Scheme::NefaOpt => {
                let cfg = IterConfig {
                    scheme: if scheme == Scheme::EfaOpt { OptScheme::EfaOpt } else { OptScheme::NefaOpt },
                    ..iter.clone()
                };
                let (_, t) = joint::run_joint_opt(ch, p, &cfg)?;
                Ok(ConvergenceTrace {
                    scheme,
                    objective: t.records.iter().map(|r| r.c_iter()).collect(),
                    rate_bits: t.final_rate(),
                    converged: t.converged,
                })
            }
            Scheme::EfaS1 | Scheme::EfaS2 => {
                let variant = if scheme == Scheme::EfaS1 { DiagVariant::S1 } else { DiagVariant::S2 };
                let out = diag::run_efa_s(ch, p, variant, diag_tol, iter.max_iters)?;
                Ok(ConvergenceTrace {
                    scheme,
                    objective: out.trace.objective.iter().skip(1).step_by(2).copied().collect(),
                    rate_bits: out.rate_bits,
                    converged: out.trace.converged,
                })
            }
            Scheme::NefaS => {
                let out = diag::run_nefa_s(ch, p)?;
                Ok(ConvergenceTrace {
                    scheme,
                    objective: out.trace.objective.clone(),
                    rate_bits: out.rate_bits,
                    converged: true,
                })
            }
        })
        .collect()
}

pub fn write_traces_csv<W: Write>(traces: &[ConvergenceTrace], mut w: W) -> Result<()> {
    writeln!(w, "scheme,iteration,objective")?;
    for t in traces {
        for (k, v) in t.objective.iter().enumerate() {
            writeln!(w, "{},{},{:.12e}", t.scheme, k + 1, v)?;
        }
    }
    Ok(())
}

/// The single-drop convergence setting: `r = 4`, both hops 1 m, 0.1 W at
/// each end and 1 mW of noise.
pub fn convergence_params() -> SystemParams {
    SystemParams {
        r: 4,
        r_relay: 4,
        p_source: 0.1,
        p_dest: 0.1,
        noise_power: 1e-3,
        rho: 0.5,
        d_dr: 1.0,
        d_rs: 1.0,
        ..SystemParams::default()
    }
}
