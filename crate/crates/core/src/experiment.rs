//! Config-driven sweeps that emit CSV.
//!
//! A run is described by an [`ExperimentConfig`] (TOML, unknown keys are
//! rejected). Sweep points get their own seed `derive_seed(master_seed,
//! SWEEP_POINT, index)` and run on a bounded rayon pool; rows are collected in
//! point order, so the output does not depend on the worker count.
//!
//! Every CSV starts with `#` metadata lines (tool version, SHA-256 of the
//! canonical config, seed) followed by a header row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{generate_block, CalibrationSet, ChannelParams, Protocol, DEFAULT_CALIBRATION_SAMPLES};
use crate::error::{Error, Result};
use crate::keyrate::{optimize_modulation_variance, BetaModel, LinkParams, VaSearch};
use crate::polar::{cache_file_name, load_or_construct, CodeKey, CRC_WIDTH};
use crate::quantizer::{optimize_grid, protocol_entropy, slice_entropy, GridSearch};
use crate::recon::{calibrate, efficiency_with_disclosure, run_session, LlrMode, Session, SessionConfig};
use crate::rng::{derive_seed, stream};

pub const TOOL_VERSION: &str = concat!("rsec ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    QuantSweep,
    ReconSweep,
    KeyrateSweep,
    ConstructCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    /// Where the CSV goes; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quant: Option<QuantSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recon: Option<ReconSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyrate: Option<KeyrateSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construct: Option<ConstructCodes>,
}

fn both_protocols() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}
fn default_ms() -> Vec<u32> {
    vec![4, 5]
}
fn default_m() -> u32 {
    5
}
fn default_d() -> usize {
    8
}
fn default_samples() -> usize {
    DEFAULT_CALIBRATION_SAMPLES
}
fn default_disclosed() -> u32 {
    2
}
fn default_blocks() -> usize {
    100
}
fn default_fer() -> f64 {
    0.1
}
fn default_llr_mode() -> LlrMode {
    LlrMode::VirtualBsc
}
fn default_crc() -> usize {
    CRC_WIDTH
}

/// Grid-step search bounds, in units of `sigma_Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub min_step: f64,
    pub max_step: f64,
    pub tolerance: f64,
    pub scan_points: usize,
    /// Samples used by the coarse scan; 0 scans on the full set.
    pub scan_samples: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let g = GridSearch::default();
        Self {
            min_step: g.min_step,
            max_step: g.max_step,
            tolerance: g.tolerance,
            scan_points: g.scan_points,
            scan_samples: g.scan_samples.unwrap_or(0),
        }
    }
}

impl SearchConfig {
    fn to_search(self, disclosed: u32) -> GridSearch {
        GridSearch {
            min_step: self.min_step,
            max_step: self.max_step,
            tolerance: self.tolerance,
            scan_points: self.scan_points,
            disclosed,
            scan_samples: (self.scan_samples > 0).then_some(self.scan_samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSweep {
    pub snr: Vec<f64>,
    #[serde(default = "default_ms")]
    pub m: Vec<u32>,
    #[serde(default = "both_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Slices counted as disclosed in beta_s.
    #[serde(default)]
    pub disclosed: u32,
    #[serde(default)]
    pub search: SearchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSweep {
    pub snr: Vec<f64>,
    pub n: Vec<usize>,
    #[serde(default = "both_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_disclosed")]
    pub disclosed: u32,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_fer")]
    pub target_fer: f64,
    #[serde(default = "default_samples")]
    pub calibration_samples: usize,
    /// Fixed grid step; omitted means optimized per point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(default = "default_llr_mode")]
    pub llr_mode: LlrMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_cache: Option<PathBuf>,
}

/// Link constants; `V_A` is optimized per distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub alpha: f64,
    pub excess_noise: f64,
    pub electronic_noise: f64,
    pub efficiency: f64,
    pub n_total: f64,
    pub n_data: f64,
    pub epsilon: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = LinkParams::reference(0.0, 1.0);
        Self {
            alpha: p.alpha,
            excess_noise: p.excess_noise,
            electronic_noise: p.electronic_noise,
            efficiency: p.efficiency,
            n_total: p.n_total,
            n_data: p.n_data,
            epsilon: p.epsilon,
        }
    }
}

impl LinkConfig {
    pub fn at(&self, distance_km: f64) -> LinkParams {
        LinkParams {
            alpha: self.alpha,
            distance_km,
            excess_noise: self.excess_noise,
            electronic_noise: self.electronic_noise,
            efficiency: self.efficiency,
            modulation_variance: 1.0,
            n_total: self.n_total,
            n_data: self.n_data,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaConfig {
    pub min: f64,
    pub max: f64,
    pub scan_points: usize,
    pub tolerance: f64,
}

impl Default for VaConfig {
    fn default() -> Self {
        let v = VaSearch::default();
        Self {
            min: v.min,
            max: v.max,
            scan_points: v.scan_points,
            tolerance: v.tolerance,
        }
    }
}

/// Where the reconciliation efficiency of a key-rate sweep comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSource {
    Constant {
        value: f64,
    },
    /// `[snr, beta]` pairs.
    Table {
        points: Vec<[f64; 2]>,
    },
    /// The `beta` column of a recon-sweep CSV, largest `n` per snr.
    ReconCsv {
        path: PathBuf,
        protocol: Protocol,
    },
    /// Perfect codes on every slice: `beta = beta_s`, measured on an snr grid.
    Ideal {
        protocol: Protocol,
        snr: Vec<f64>,
        #[serde(default = "default_m")]
        m: u32,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        search: SearchConfig,
    },
}

impl BetaSource {
    fn label(&self) -> String {
        match self {
            BetaSource::Constant { .. } => "constant".into(),
            BetaSource::Table { .. } => "table".into(),
            BetaSource::ReconCsv { protocol, .. } => format!("recon_{}", protocol_key(*protocol)),
            BetaSource::Ideal { protocol, .. } => format!("ideal_{}", protocol_key(*protocol)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyrateSweep {
    pub distances_km: Vec<f64>,
    pub beta: BetaSource,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub modulation: VaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructCodes {
    pub n: Vec<usize>,
    pub e: Vec<f64>,
    #[serde(default = "default_fer")]
    pub target_fer: f64,
    #[serde(default = "default_crc")]
    pub crc_width: usize,
    pub dir: PathBuf,
}

fn protocol_key(p: Protocol) -> &'static str {
    match p {
        Protocol::Rsec => "rsec",
        Protocol::Sec => "sec",
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(msg) => Error::Config(msg),
        other => other,
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form, ignoring the output path.
    pub fn hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.output = None;
        Ok(hex::encode(Sha256::digest(canon.to_toml_string()?.as_bytes())))
    }

    /// Checks that the section for `kind` is present and every sweep point
    /// is runnable.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExperimentKind::QuantSweep => {
                let q = self
                    .quant
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing [quant] section".into()))?;
                require(
                    !q.snr.is_empty() && !q.m.is_empty() && !q.protocols.is_empty(),
                    "quant grids must be non-empty",
                )?;
                require(q.d.is_power_of_two(), "d must be a power of two")?;
                require(
                    q.samples >= q.d && q.samples % q.d == 0,
                    "samples must be a positive multiple of d",
                )?;
                for &m in &q.m {
                    require((1..=8).contains(&m), "m must lie in [1, 8]")?;
                    require(q.disclosed < m, "disclosed must be smaller than m")?;
                }
                for &snr in &q.snr {
                    ChannelParams::from_snr(snr).map_err(config_err)?;
                }
                check_search(&q.search)
            }
            ExperimentKind::ReconSweep => {
                let r = self
                    .recon
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing [recon] section".into()))?;
                require(
                    !r.snr.is_empty() && !r.n.is_empty() && !r.protocols.is_empty(),
                    "recon grids must be non-empty",
                )?;
                require(r.blocks > 0, "blocks must be positive")?;
                for &snr in &r.snr {
                    for &n in &r.n {
                        for &p in &r.protocols {
                            r.session(p, snr, n, 0).validate().map_err(config_err)?;
                        }
                    }
                }
                Ok(())
            }
            ExperimentKind::KeyrateSweep => {
                let k = self
                    .keyrate
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing [keyrate] section".into()))?;
                require(!k.distances_km.is_empty(), "distance grid must be non-empty")?;
                for &l in &k.distances_km {
                    let mut p = k.link.at(l);
                    p.modulation_variance = k.modulation.min;
                    p.validate().map_err(config_err)?;
                }
                require(
                    k.modulation.min > 0.0 && k.modulation.max > k.modulation.min && k.modulation.scan_points >= 3,
                    "modulation search range is empty",
                )?;
                match &k.beta {
                    BetaSource::Constant { value } => require((0.0..=1.0).contains(value), "beta must lie in [0, 1]"),
                    BetaSource::Table { points } => {
                        BetaModel::table(points.iter().map(|p| (p[0], p[1])).collect()).map_err(config_err)?;
                        Ok(())
                    }
                    BetaSource::ReconCsv { .. } => Ok(()),
                    BetaSource::Ideal {
                        snr,
                        m,
                        d,
                        samples,
                        search,
                        ..
                    } => {
                        require(!snr.is_empty(), "ideal beta needs an snr grid")?;
                        require((1..=8).contains(m), "m must lie in [1, 8]")?;
                        require(
                            d.is_power_of_two() && *samples >= *d && samples % d == 0,
                            "samples must be a multiple of d",
                        )?;
                        for &s in snr {
                            ChannelParams::from_snr(s).map_err(config_err)?;
                        }
                        check_search(search)
                    }
                }
            }
            ExperimentKind::ConstructCode => {
                let c = self
                    .construct
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing [construct] section".into()))?;
                require(!c.n.is_empty() && !c.e.is_empty(), "construct grids must be non-empty")?;
                require(
                    c.n.iter().all(|n| n.is_power_of_two() && *n >= 2),
                    "n must be powers of two",
                )?;
                require(c.e.iter().all(|e| *e > 0.0 && *e <= 0.5), "e must lie in (0, 0.5]")?;
                require(
                    c.target_fer > 0.0 && c.target_fer <= 1.0,
                    "target_fer must lie in (0, 1]",
                )?;
                require(
                    c.crc_width == 0 || c.crc_width == CRC_WIDTH,
                    "crc_width must be 0 or 32",
                )
            }
        }
    }
}

fn check_search(s: &SearchConfig) -> Result<()> {
    require(
        s.min_step > 0.0 && s.max_step > s.min_step && s.scan_points >= 3 && s.tolerance > 0.0,
        "grid search range is empty",
    )
}

impl ReconSweep {
    fn session(&self, protocol: Protocol, snr: f64, n: usize, seed: u64) -> SessionConfig {
        SessionConfig {
            m: self.m,
            disclosed: self.disclosed,
            d: self.d,
            n,
            blocks: self.blocks,
            target_fer: self.target_fer,
            master_seed: seed,
            calibration_samples: self.calibration_samples,
            grid_step: self.grid_step,
            llr_mode: self.llr_mode,
            code_cache: self.code_cache.clone(),
            keep_key: false,
            ..SessionConfig::new(protocol, snr)
        }
    }
}

/// Seed of sweep point `index`.
pub fn point_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, stream::SWEEP_POINT, index as u64)
}

/// Shortest round-trip float text, so identical values give identical bytes.
fn num(x: f64) -> String {
    format!("{x}")
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn render(&self, cfg: &ExperimentConfig) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "# {TOOL_VERSION}").unwrap();
        writeln!(out, "# config_sha256 {}", cfg.hash()?).unwrap();
        writeln!(out, "# seed {}", cfg.master_seed).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        out.push_str(std::str::from_utf8(&bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

/// Runs `cfg` on a pool of `workers` threads and returns the CSV text.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<String> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let table = pool.install(|| match cfg.kind {
        ExperimentKind::QuantSweep => run_quant_sweep(cfg),
        ExperimentKind::ReconSweep => run_recon_sweep(cfg),
        ExperimentKind::KeyrateSweep => run_keyrate_sweep(cfg),
        ExperimentKind::ConstructCode => run_construct_code(cfg),
    })?;
    table.render(cfg)
}

/// Runs `cfg` and writes the CSV to `out`.
pub fn run_to_file(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<()> {
    let text = run_experiment(cfg, workers)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out, text).map_err(|e| Error::io(out, e))
}

/// One optimized quantization point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantPoint {
    pub protocol: Protocol,
    pub m: u32,
    pub snr: f64,
    pub step: f64,
    pub errors: Vec<f64>,
    pub entropy: f64,
    pub beta_s: f64,
    pub beta_s_se: f64,
    /// Same error rates scored against the Gaussian slice entropy, which is
    /// exact only for unrotated data.
    pub gaussian_entropy: f64,
    pub beta_s_gaussian: f64,
}

/// Optimizes the grid for every protocol on one shared calibration block.
#[allow(clippy::too_many_arguments)]
pub fn quant_point(
    snr: f64,
    m: u32,
    protocols: &[Protocol],
    d: usize,
    samples: usize,
    disclosed: u32,
    search: &SearchConfig,
    seed: u64,
) -> Result<Vec<QuantPoint>> {
    let params = ChannelParams::from_snr(snr)?;
    let block = generate_block(samples, &params, seed)?;
    let grid_search = search.to_search(disclosed);
    protocols
        .iter()
        .map(|&protocol| {
            let set = CalibrationSet::prepare(&block, protocol, d)?;
            let best = optimize_grid(m, &params, protocol, &set, &grid_search)?;
            let ber = set.slice_errors(&best.grid)?;
            let entropy = protocol_entropy(protocol, &best.grid, params.total_variance(), d)?;
            let (beta_s, beta_s_se) = efficiency_with_disclosure(&ber, entropy, &params, disclosed)?;
            let gaussian_entropy = slice_entropy(&best.grid, params.total_variance())?;
            let (beta_s_gaussian, _) = efficiency_with_disclosure(&ber, gaussian_entropy, &params, disclosed)?;
            Ok(QuantPoint {
                protocol,
                m,
                snr,
                step: best.grid.step(),
                errors: ber.e,
                entropy,
                beta_s,
                beta_s_se,
                gaussian_entropy,
                beta_s_gaussian,
            })
        })
        .collect()
}

fn run_quant_sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let q = cfg.quant.as_ref().expect("validated");
    let max_m = *q.m.iter().max().expect("validated") as usize;
    let mut header = vec!["protocol", "m", "snr", "delta_tau"];
    let e_cols: Vec<String> = (1..=max_m).map(|i| format!("e_{i}")).collect();
    header.extend(e_cols.iter().map(String::as_str));
    header.extend(["H", "beta_s", "beta_s_se", "H_gauss", "beta_s_gauss"]);
    let mut table = Table::new(&header);

    let points: Vec<(u32, f64)> = q.m.iter().flat_map(|&m| q.snr.iter().map(move |&s| (m, s))).collect();
    let results = points
        .par_iter()
        .enumerate()
        .map(|(i, &(m, snr))| {
            quant_point(
                snr,
                m,
                &q.protocols,
                q.d,
                q.samples,
                q.disclosed,
                &q.search,
                point_seed(cfg.master_seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for qp in results.into_iter().flatten() {
        let mut row = vec![qp.protocol.to_string(), qp.m.to_string(), num(qp.snr), num(qp.step)];
        for i in 0..max_m {
            row.push(qp.errors.get(i).map_or(String::new(), |&e| num(e)));
        }
        row.extend(
            [
                qp.entropy,
                qp.beta_s,
                qp.beta_s_se,
                qp.gaussian_entropy,
                qp.beta_s_gaussian,
            ]
            .map(num),
        );
        table.rows.push(row);
    }
    Ok(table)
}

fn run_recon_sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let r = cfg.recon.as_ref().expect("validated");
    let mut table = Table::new(&[
        "protocol",
        "snr",
        "m",
        "l",
        "d",
        "n",
        "blocks",
        "fer",
        "beta",
        "beta_s",
        "bits_per_pulse",
        "beta_s_se",
        "beta_ledger",
        "delta_tau",
        "blocks_passed",
        "residual_errors",
    ]);
    // Calibration depends on (snr, protocol) only and is shared over n.
    let jobs: Vec<(usize, f64, Protocol)> = r
        .snr
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| r.protocols.iter().map(move |&p| (i, s, p)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, snr, protocol)| -> Result<Vec<Vec<String>>> {
            let seed = point_seed(cfg.master_seed, i);
            let calibration = calibrate(&r.session(protocol, snr, r.n[0], seed))?;
            r.n.iter()
                .map(|&n| {
                    let session = Session::new(r.session(protocol, snr, n, seed), calibration.clone())?;
                    let out = run_session(&session, false)?;
                    Ok(vec![
                        protocol.to_string(),
                        num(snr),
                        r.m.to_string(),
                        (r.disclosed + 1).to_string(),
                        r.d.to_string(),
                        n.to_string(),
                        r.blocks.to_string(),
                        num(out.fer),
                        num(out.beta),
                        num(out.beta_s),
                        num(out.bits_per_pulse()),
                        num(out.beta_s_se),
                        num(out.beta_ledger),
                        num(out.grid.step()),
                        out.blocks_passed.to_string(),
                        out.residual_errors.to_string(),
                    ])
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    table.rows = results.into_iter().flatten().collect();
    Ok(table)
}

/// `(snr, beta)` pairs from the `beta` column of a recon-sweep CSV; when a
/// protocol/snr pair appears for several `n`, the largest `n` wins.
pub fn read_recon_betas(path: &Path, protocol: Protocol) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} has no {name} column", path.display())))
    };
    let (cp, cs, cn, cb) = (col("protocol")?, col("snr")?, col("n")?, col("beta")?);
    let mut best: Vec<(f64, usize, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec[cp] != protocol.to_string() {
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {:?} in {}", &rec[i], path.display())))
        };
        let (snr, n, beta) = (parse(cs)?, parse(cn)? as usize, parse(cb)?);
        match best.iter_mut().find(|b| b.0 == snr) {
            Some(b) if n > b.1 => *b = (snr, n, beta),
            Some(_) => {}
            None => best.push((snr, n, beta)),
        }
    }
    if best.is_empty() {
        return Err(Error::Config(format!("{} has no {protocol} rows", path.display())));
    }
    Ok(best.into_iter().map(|(s, _, b)| (s, b.clamp(0.0, 1.0))).collect())
}

/// Builds the beta model of a key-rate sweep.
pub fn beta_model(source: &BetaSource, master_seed: u64) -> Result<BetaModel> {
    match source {
        BetaSource::Constant { value } => Ok(BetaModel::Constant(*value)),
        BetaSource::Table { points } => BetaModel::table(points.iter().map(|p| (p[0], p[1])).collect()),
        BetaSource::ReconCsv { path, protocol } => BetaModel::table(read_recon_betas(path, *protocol)?),
        BetaSource::Ideal {
            protocol,
            snr,
            m,
            d,
            samples,
            search,
        } => {
            let points = snr
                .par_iter()
                .enumerate()
                .map(|(i, &s)| {
                    let qp = quant_point(s, *m, &[*protocol], *d, *samples, 0, search, point_seed(master_seed, i))?;
                    Ok((s, qp[0].beta_s.clamp(0.0, 1.0)))
                })
                .collect::<Result<Vec<_>>>()?;
            BetaModel::table(points)
        }
    }
}

fn run_keyrate_sweep(cfg: &ExperimentConfig) -> Result<Table> {
    let k = cfg.keyrate.as_ref().expect("validated");
    let model = beta_model(&k.beta, cfg.master_seed)?;
    let search = VaSearch {
        min: k.modulation.min,
        max: k.modulation.max,
        scan_points: k.modulation.scan_points,
        tolerance: k.modulation.tolerance,
    };
    let label = k.beta.label();
    let mut table = Table::new(&[
        "source", "L_km", "T", "V_A", "snr", "beta", "I_AB", "chi_BE", "Delta", "K_finite", "K_plob", "K_ideal",
        "no_key",
    ]);
    let reports = k
        .distances_km
        .par_iter()
        .map(|&l| optimize_modulation_variance(&k.link.at(l), &model, &search))
        .collect::<Result<Vec<_>>>()?;
    for r in reports {
        table.rows.push(vec![
            label.clone(),
            num(r.distance_km),
            num(r.transmittance),
            num(r.modulation_variance),
            num(r.snr_at_link),
            num(r.beta),
            num(r.i_ab),
            num(r.chi_be),
            num(r.delta),
            num(r.k_finite),
            num(r.k_plob),
            num(r.k_ideal),
            r.no_key.to_string(),
        ]);
    }
    Ok(table)
}

fn run_construct_code(cfg: &ExperimentConfig) -> Result<Table> {
    let c = cfg.construct.as_ref().expect("validated");
    std::fs::create_dir_all(&c.dir).map_err(|e| Error::io(&c.dir, e))?;
    let mut table = Table::new(&[
        "n",
        "e",
        "target_fer",
        "crc",
        "info_bits",
        "frozen_bits",
        "rate",
        "effective_rate",
        "file",
    ]);
    let keys: Vec<CodeKey> =
        c.n.iter()
            .flat_map(|&n| {
                c.e.iter().map(move |&e| CodeKey {
                    n,
                    e,
                    target_fer: c.target_fer,
                    crc_width: c.crc_width,
                })
            })
            .collect();
    let codes = keys
        .par_iter()
        .map(|key| load_or_construct(&c.dir, key).map(|(code, _)| code))
        .collect::<Result<Vec<_>>>()?;
    for (key, code) in keys.iter().zip(codes) {
        table.rows.push(vec![
            key.n.to_string(),
            num(key.e),
            num(key.target_fer),
            key.crc_width.to_string(),
            code.info().len().to_string(),
            code.frozen().len().to_string(),
            num(code.rate_pre_crc()),
            num(code.effective_rate()),
            cache_file_name(key),
        ]);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONSTRUCT: &str = r#"
kind = "construct_code"
master_seed = 1

[construct]
n = [256]
e = [0.02, 0.05]
dir = "DIR"
"#;

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = CONSTRUCT.replace("master_seed = 1", "master_seed = 1\nbogus = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let missing = "kind = \"quant_sweep\"\nmaster_seed = 1\n";
        assert!(matches!(
            ExperimentConfig::from_toml_str(missing),
            Err(Error::Config(_))
        ));
        let empty = "kind = \"quant_sweep\"\nmaster_seed = 1\n[quant]\nsnr = []\n";
        assert!(matches!(ExperimentConfig::from_toml_str(empty), Err(Error::Config(_))));
    }

    #[test]
    fn config_roundtrips() {
        let text = r#"
kind = "keyrate_sweep"
master_seed = 9
output = "k.csv"

[keyrate]
distances_km = [10.0, 20.0]
beta = { source = "table", points = [[0.5, 0.9], [3.0, 0.95]] }
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let mut moved = cfg.clone();
        moved.output = Some("elsewhere.csv".into());
        assert_eq!(cfg.hash().unwrap(), moved.hash().unwrap());
        moved.master_seed = 10;
        assert_ne!(cfg.hash().unwrap(), moved.hash().unwrap());
    }

    #[test]
    fn construct_code_is_idempotent_and_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let text = CONSTRUCT.replace("DIR", &dir.path().display().to_string().replace('\\', "/"));
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let first = run_experiment(&cfg, 2).unwrap();
        let file = dir.path().join(cache_file_name(&CodeKey {
            n: 256,
            e: 0.02,
            target_fer: 0.1,
            crc_width: 32,
        }));
        let bytes = std::fs::read(&file).unwrap();
        let second = run_experiment(&cfg, 1).unwrap();
        assert_eq!(first, second);
        assert_eq!(bytes, std::fs::read(&file).unwrap());

        let mut rows = first.lines().filter(|l| !l.starts_with('#')).skip(1);
        let frozen = |line: &str| line.split(',').nth(5).unwrap().parse::<usize>().unwrap();
        let (a, b) = (rows.next().unwrap(), rows.next().unwrap());
        assert!(frozen(a) < frozen(b), "{a} / {b}");
        assert!(first.starts_with(&format!("# {TOOL_VERSION}\n# config_sha256 ")));
    }

    #[test]
    fn keyrate_sweep_respects_plob() {
        let text = r#"
kind = "keyrate_sweep"
master_seed = 3

[keyrate]
distances_km = [5.0, 20.0, 40.0]
beta = { source = "constant", value = 0.95 }
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let csv = run_experiment(&cfg, 2).unwrap();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(csv.as_bytes());
        let mut n = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let k: f64 = rec[9].parse().unwrap();
            let plob: f64 = rec[10].parse().unwrap();
            assert!(k <= plob);
            n += 1;
        }
        assert_eq!(n, 3);
        assert_eq!(csv, run_experiment(&cfg, 1).unwrap());
    }

    #[test]
    fn recon_betas_take_largest_n() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(
            &path,
            "# rsec\nprotocol,snr,n,beta\nRSEC,1,4096,0.8\nRSEC,1,65536,0.9\nSEC,1,65536,0.7\nRSEC,3,4096,0.93\n",
        )
        .unwrap();
        let b = read_recon_betas(&path, Protocol::Rsec).unwrap();
        assert_eq!(b, vec![(1.0, 0.9), (3.0, 0.93)]);
        assert!(read_recon_betas(&path, Protocol::Sec).is_ok());
        assert!(read_recon_betas(&dir.path().join("none.csv"), Protocol::Sec).is_err());
    }
}
