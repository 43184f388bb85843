//! Seeded Monte Carlo runs over channel draws, schemes and one scenario
//! parameter, with CSV and JSON output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use crate::allocation::snr_matrix_eigenvalues;
use crate::bca::{audit_ncma, baseline_cla, baseline_ncma, baseline_ula, run_cma, Scheme, SchemeResult};
use crate::channel::{sample_realization, AntennaLayout, CMat, ChannelRealization};
use crate::config::SystemConfig;
use crate::coupling::CouplingDecomposition;
use crate::error::{Error, Result};
use crate::optimizer::to_complex;

/// Sum of transmit power density toward the departure directions,
/// `tr(G C_T^{-1/2} Q C_T^{-1/2} G^H)`.
pub fn superdirectivity_metric(
    realization: &ChannelRealization,
    layout: &AntennaLayout,
    q: &CMat,
    dec_t: &CouplingDecomposition,
) -> f64 {
    let g = realization.tx_frm(&layout.tx);
    let gy = g * to_complex(&dec_t.inv_sqrt);
    (&gy * q * gy.adjoint()).trace().re
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Single point at the base configuration; rows carry its SNR in dB.
    None,
    /// `M = N = value`, apertures scaled proportionally.
    Antennas,
    /// `P_max / sigma^2` in dB.
    Snr,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep: SweepAxis,
    pub values: Vec<f64>,
    pub num_realizations: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Adds NC-MA layouts re-evaluated under the full coupling model.
    pub audit: bool,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig) -> Self {
        let seed = base.rng_seed;
        Self {
            base,
            sweep: SweepAxis::None,
            values: Vec::new(),
            num_realizations: 200,
            schemes: Scheme::PRIMARY.to_vec(),
            seed,
            threads: None,
            audit: false,
        }
    }

    /// `(sweep value, scenario)` pairs in sweep order.
    pub fn scenarios(&self) -> Result<Vec<(f64, SystemConfig)>> {
        let points: Vec<(f64, SystemConfig)> = match self.sweep {
            SweepAxis::None => vec![(self.base.snr_db(), self.base.clone())],
            SweepAxis::Snr => self
                .values
                .iter()
                .map(|&db| (db, self.base.clone().with_snr_db(db)))
                .collect(),
            SweepAxis::Antennas => self
                .values
                .iter()
                .map(|&v| {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidConfig(format!("antenna count {v} is not a positive integer")));
                    }
                    Ok((v, self.base.clone().with_antennas(v as usize)))
                })
                .collect::<Result<_>>()?,
        };
        if points.is_empty() {
            return Err(Error::InvalidConfig("sweep values must be non-empty".into()));
        }
        for (_, cfg) in &points {
            cfg.validate()?;
        }
        Ok(points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_realizations == 0 {
            return Err(Error::InvalidConfig("num_realizations must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes selected".into()));
        }
        self.scenarios().map(|_| ())
    }
}

/// One scheme on one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub realization: usize,
    pub capacity_bits: Option<f64>,
    pub iters: Option<usize>,
    pub p_trans: Option<f64>,
    /// Descending nonzero eigenvalues of the SNR matrix.
    pub gammas: Vec<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    fn from_result(sweep_value: f64, realization: usize, res: &SchemeResult) -> Self {
        Self {
            scheme: res.scheme,
            sweep_value,
            realization,
            capacity_bits: Some(res.capacity_bits),
            iters: Some(res.iterations),
            p_trans: Some(res.p_trans),
            gammas: res.gammas.clone(),
            error: None,
        }
    }

    fn failed(scheme: Scheme, sweep_value: f64, realization: usize, err: &Error) -> Self {
        Self {
            scheme,
            sweep_value,
            realization,
            capacity_bits: None,
            iters: None,
            p_trans: None,
            gammas: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

/// Capacity trace of one optimizer run, in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scheme: Scheme,
    pub sweep_index: usize,
    pub realization: usize,
    pub capacity_bits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub traces: Vec<RunTrace>,
    /// Number of eigenvalue columns in the CSV.
    pub gamma_columns: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for work item `(sweep_index, realization)`; independent of
/// scheduling.
pub fn derive_seed(base: u64, sweep_index: usize, realization: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ sweep_index as u64) ^ realization as u64)
}

/// Draws the channel for one work item.
pub fn realization_for(cfg: &SystemConfig, seed: u64, sweep_index: usize, realization: usize) -> Result<ChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, sweep_index, realization));
    sample_realization(cfg, &mut rng)
}

fn scheme_rng(seed: u64, sweep_index: usize, realization: usize, scheme: Scheme) -> ChaCha8Rng {
    let item = derive_seed(seed, sweep_index, realization);
    ChaCha8Rng::seed_from_u64(splitmix64(item ^ (scheme as u64 + 1)))
}

/// Runs one scheme on one draw.
pub fn run_scheme(
    scheme: Scheme,
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    rng: &mut ChaCha8Rng,
) -> Result<SchemeResult> {
    match scheme {
        Scheme::CMa => run_cma(cfg, realization, rng),
        Scheme::NcMa => baseline_ncma(cfg, realization, rng),
        Scheme::Ula => baseline_ula(cfg, realization),
        Scheme::Cla => baseline_cla(cfg, realization),
        Scheme::NcMaAudit => {
            let ncma = baseline_ncma(cfg, realization, rng)?;
            audit_ncma(cfg, realization, &ncma)
        }
    }
}

fn run_item(
    spec: &ExperimentSpec,
    schemes: &[Scheme],
    sweep_index: usize,
    sweep_value: f64,
    cfg: &SystemConfig,
    realization: usize,
) -> (Vec<ResultRow>, Vec<RunTrace>) {
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let draw = match realization_for(cfg, spec.seed, sweep_index, realization) {
        Ok(d) => d,
        Err(e) => {
            for &s in schemes {
                rows.push(ResultRow::failed(s, sweep_value, realization, &e));
            }
            return (rows, traces);
        }
    };
    for &scheme in schemes {
        let mut rng = scheme_rng(spec.seed, sweep_index, realization, scheme);
        match run_scheme(scheme, cfg, &draw, &mut rng) {
            Ok(res) => {
                rows.push(ResultRow::from_result(sweep_value, realization, &res));
                if !res.capacity_trace.is_empty() {
                    traces.push(RunTrace {
                        scheme,
                        sweep_index,
                        realization,
                        capacity_bits: res.capacity_trace.iter().map(|c| c / std::f64::consts::LN_2).collect(),
                    });
                }
                if scheme == Scheme::NcMa && spec.audit {
                    let row = match audit_ncma(cfg, &draw, &res) {
                        Ok(a) => ResultRow::from_result(sweep_value, realization, &a),
                        Err(e) => ResultRow::failed(Scheme::NcMaAudit, sweep_value, realization, &e),
                    };
                    rows.push(row);
                }
            }
            Err(e) => rows.push(ResultRow::failed(scheme, sweep_value, realization, &e)),
        }
    }
    (rows, traces)
}

/// Runs every `(sweep value, realization, scheme)` combination. Output
/// ordering is `(sweep index, realization, scheme)` regardless of thread
/// count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let scenarios = spec.scenarios()?;
    let mut schemes = spec.schemes.clone();
    schemes.retain(|s| *s != Scheme::NcMaAudit);
    schemes.sort();
    schemes.dedup();

    let items: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..spec.num_realizations).map(move |j| (i, j)))
        .collect();
    let work = || {
        items
            .par_iter()
            .map(|&(i, j)| {
                let (value, cfg) = &scenarios[i];
                ((i, j), run_item(spec, &schemes, i, *value, cfg, j))
            })
            .collect::<Vec<_>>()
    };
    let mut results = match spec.threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
    };
    results.sort_by_key(|(key, _)| *key);

    let gamma_columns = scenarios
        .iter()
        .map(|(_, c)| c.num_tx.min(c.num_rx).min(c.num_tx_paths).min(c.num_rx_paths))
        .max()
        .unwrap_or(0);
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (_, (r, t)) in results {
        rows.extend(r);
        traces.extend(t);
    }
    Ok(ExperimentOutput {
        rows,
        traces,
        gamma_columns,
    })
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn csv_header(gamma_columns: usize) -> Vec<String> {
    let mut header: Vec<String> = ["scheme", "sweep_value", "realization", "capacity_bits", "iters", "p_trans"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=gamma_columns).map(|k| format!("gamma_{k}")));
    header.push("error".into());
    header
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow], gamma_columns: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(gamma_columns))?;
    for row in rows {
        let mut rec = vec![
            row.scheme.label().to_string(),
            row.sweep_value.to_string(),
            row.realization.to_string(),
            fmt_opt(&row.capacity_bits),
            fmt_opt(&row.iters),
            fmt_opt(&row.p_trans),
        ];
        for k in 0..gamma_columns {
            rec.push(row.gammas.get(k).map(ToString::to_string).unwrap_or_default());
        }
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str) -> std::result::Result<Option<T>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| format!("bad {name} value '{field}'"))
}

/// Parses CSV produced by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> std::result::Result<Vec<ResultRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let gamma_columns = header.iter().filter(|h| h.starts_with("gamma_")).count();
    if header.len() != 7 + gamma_columns {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let gammas = (0..gamma_columns)
            .map(|k| parse_field::<f64>(get(6 + k), "gamma"))
            .collect::<std::result::Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        let error = get(6 + gamma_columns);
        rows.push(ResultRow {
            scheme: get(0).parse()?,
            sweep_value: parse_field(get(1), "sweep_value")?.ok_or("missing sweep_value")?,
            realization: parse_field(get(2), "realization")?.ok_or("missing realization")?,
            capacity_bits: parse_field(get(3), "capacity_bits")?,
            iters: parse_field(get(4), "iters")?,
            p_trans: parse_field(get(5), "p_trans")?,
            gammas,
            error: (!error.is_empty()).then(|| error.to_string()),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SchemeSummary {
    pub count: usize,
    pub errors: usize,
    pub mean_capacity_bits: f64,
    /// 95% normal-approximation half width of the mean.
    pub ci95_capacity_bits: f64,
    pub mean_p_trans: f64,
    pub ci95_p_trans: f64,
    pub mean_iters: f64,
    /// Positionwise mean of the SNR-matrix eigenvalues.
    pub mean_gammas: Vec<f64>,
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Per-scheme, per-sweep-value statistics.
pub fn summarize(rows: &[ResultRow]) -> BTreeMap<String, BTreeMap<String, SchemeSummary>> {
    let mut groups: BTreeMap<(Scheme, u64), (f64, Vec<&ResultRow>)> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.scheme, row.sweep_value.to_bits()))
            .or_insert_with(|| (row.sweep_value, Vec::new()))
            .1
            .push(row);
    }
    let mut out: BTreeMap<String, BTreeMap<String, SchemeSummary>> = BTreeMap::new();
    for ((scheme, _), (value, group)) in groups {
        let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.error.is_none()).collect();
        let caps: Vec<f64> = ok.iter().filter_map(|r| r.capacity_bits).collect();
        let pts: Vec<f64> = ok.iter().filter_map(|r| r.p_trans).collect();
        let iters: Vec<f64> = ok.iter().filter_map(|r| r.iters.map(|i| i as f64)).collect();
        let width = ok.iter().map(|r| r.gammas.len()).max().unwrap_or(0);
        let mean_gammas = (0..width)
            .map(|k| {
                let v: Vec<f64> = ok.iter().filter_map(|r| r.gammas.get(k).copied()).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let (mean_capacity_bits, ci95_capacity_bits) = mean_ci(&caps);
        let (mean_p_trans, ci95_p_trans) = mean_ci(&pts);
        out.entry(scheme.label().to_string()).or_default().insert(
            value.to_string(),
            SchemeSummary {
                count: ok.len(),
                errors: group.len() - ok.len(),
                mean_capacity_bits,
                ci95_capacity_bits,
                mean_p_trans,
                ci95_p_trans,
                mean_iters: mean_ci(&iters).0,
                mean_gammas,
            },
        );
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `results.csv`, `summary.json` and, when `traces` is set,
/// `traces/<scheme>_<sweep>_<realization>.csv`. Returns the written paths.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput, traces: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_csv(std::io::BufWriter::new(file), &output.rows, output.gamma_columns)?;
    written.push(csv_path);

    let json_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summarize(&output.rows)).expect("summary serializes");
    fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    written.push(json_path);

    if traces {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for t in &output.traces {
            let path = tdir.join(format!("{}_{}_{}.csv", t.scheme.label(), t.sweep_index, t.realization));
            let mut body = String::from("iter,capacity_bits\n");
            for (k, c) in t.capacity_bits.iter().enumerate() {
                body.push_str(&format!("{k},{c}\n"));
            }
            fs::write(&path, body).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}
