//! Command-line driver: configuration, the seven subcommands and their CSV and
//! manifest outputs.
//!
//! ```text
//! bzbic <potential|bands|eigens|smatrix|bic-scan|poles|validate>
//!       [--config PATH] [--out DIR] [--threads N] [--preset paper-fig<N>]
//! ```
//!
//! A preset supplies a base configuration; `--config` is merged on top of it
//! table by table. Every run writes `<command>_*.csv`, the resolved
//! `<command>_config.toml` and `<command>_manifest.json` into the output
//! directory. Exit codes: 0 success, 1 usage or configuration error, 2
//! numerical failure (including failed validation checks).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::bloch::{band_edges, BlochChannel, RegionConfig};
use crate::continuum::{bic_line, find_poles, lifetime_scaling, scan_bics, Pole, PoleRegion, PoleSearchOptions};
use crate::error::{BicError, Result};
use crate::linalg::{norm_max, unitarity_defect};
use crate::potential::{potential_value, LatticeConfig, LatticePotential};
use crate::reaction::{
    build_channel_hamiltonian, classify_bases, solve_lattice_channel, Boundary, ChannelEigenBasis, ClassifyOptions,
    Parity,
};
use crate::scattering::{displaced_grid, reflection_coefficients, s_matrix_sweep, ReactionOptions};
use crate::validation::{
    fd_level_near, gaussian_comb_value, square_well_exact, square_well_pipeline, square_well_series, SquareWellConfig,
};

const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

/// Evenly spaced values `start..=stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub const fn new(start: f64, stop: f64, points: usize) -> Self {
        Self { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + step * i as f64).collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() || self.stop < self.start {
            return Err(BicError::InvalidConfig(format!(
                "grid `{name}` needs finite start <= stop and at least one point"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub x: Grid,
    pub z: Grid,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            x: Grid::new(-3.0, 3.0, 241),
            z: Grid::new(-2.0, 2.0, 161),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsSection {
    pub momentum: Grid,
    pub nu_min: i32,
    pub nu_max: i32,
}

impl Default for BandsSection {
    fn default() -> Self {
        let half = std::f64::consts::FRAC_PI_2;
        Self {
            momentum: Grid::new(-half, half, 101),
            nu_min: -2,
            nu_max: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigensSection {
    pub momenta: Vec<f64>,
    /// One point solves a single region; three or more also classify.
    pub half_widths: Grid,
    /// Half width whose states are tagged (nearest grid value).
    pub reference_half_width: f64,
    pub windows: Vec<[f64; 2]>,
    pub classify: ClassifyOptions,
}

impl Default for EigensSection {
    fn default() -> Self {
        Self {
            momenta: vec![0.0],
            half_widths: Grid::new(3.0, 3.0, 1),
            reference_half_width: 3.0,
            windows: vec![[0.0, 0.5 * PI2], [0.5 * PI2, 2.0 * PI2]],
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SMatrixSection {
    pub momentum: f64,
    pub energy: Grid,
    pub evanescent_shells: usize,
    /// Grid points closer than this to a `λ_j` are pushed away from it.
    pub displacement: f64,
}

impl Default for SMatrixSection {
    fn default() -> Self {
        Self {
            momentum: 0.0,
            energy: Grid::new(0.01, 0.5 * PI2 - 0.01, 1000),
            evanescent_shells: 1,
            displacement: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicScanSection {
    pub momenta: Vec<f64>,
    /// Lower end of every scan; the upper end is the ν=0 threshold `K²/2`.
    pub floor: f64,
    pub points: usize,
    /// Momenta for the positive-energy BIC line.
    pub line: Option<Grid>,
    pub line_floor: f64,
    pub line_points: usize,
}

impl Default for BicScanSection {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            momenta: vec![pi / 3.0, 2.0 * pi / 5.0],
            floor: -30.0,
            points: 2000,
            line: None,
            line_floor: -1.0,
            line_points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolesSection {
    pub momentum: f64,
    pub betas: Vec<f64>,
    pub windows: Vec<PoleRegion>,
    /// Re E seeds of the pole families to fit; needs four or more β values.
    pub seeds: Vec<f64>,
    pub search: PoleSearchOptions,
}

impl Default for PolesSection {
    fn default() -> Self {
        Self {
            momentum: 0.0,
            betas: vec![0.01],
            windows: vec![PoleRegion::below(1e-3, 0.5 * PI2 - 1e-3, 0.5, 1e-10)],
            seeds: vec![0.6, 4.7],
            search: PoleSearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub square_well: SquareWellConfig,
    pub energies: Vec<f64>,
    pub pipeline_cutoff: usize,
    pub comb_images: usize,
    pub fd_spacing: f64,
    pub fd_half_width: f64,
    /// Spectral levels near these energies are compared with the FD oracle.
    pub fd_targets: Vec<f64>,
    pub unitarity_points: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            square_well: SquareWellConfig::default(),
            energies: vec![-4.2, -2.2, 0.35, 1.7, 3.1, 6.2],
            pipeline_cutoff: 40,
            comb_images: 500,
            fd_spacing: 0.05,
            fd_half_width: 3.0,
            fd_targets: vec![0.656, 4.699],
            unitarity_points: 200,
        }
    }
}

/// Complete run configuration, one TOML table per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub region: RegionConfig,
    pub reaction: ReactionOptions,
    pub potential: PotentialSection,
    pub bands: BandsSection,
    pub eigens: EigensSection,
    pub smatrix: SMatrixSection,
    pub bic_scan: BicScanSection,
    pub poles: PolesSection,
    pub validate: ValidateSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| BicError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.region.validate()?;
        self.potential.x.validate("potential.x")?;
        self.potential.z.validate("potential.z")?;
        self.bands.momentum.validate("bands.momentum")?;
        if self.bands.nu_min > self.bands.nu_max {
            return Err(BicError::InvalidConfig("bands.nu_min exceeds bands.nu_max".into()));
        }
        self.eigens.half_widths.validate("eigens.half_widths")?;
        if self.eigens.momenta.is_empty() || self.eigens.windows.iter().any(|w| !(w[0] < w[1])) {
            return Err(BicError::InvalidConfig("eigens needs momenta and windows with lo < hi".into()));
        }
        if self.eigens.half_widths.values().iter().any(|&l| !(l > 0.0)) {
            return Err(BicError::InvalidConfig("eigens half widths must be positive".into()));
        }
        self.smatrix.energy.validate("smatrix.energy")?;
        if self.bic_scan.points < 2 || self.bic_scan.line_points < 2 {
            return Err(BicError::InvalidConfig("bic_scan grids need at least two points".into()));
        }
        if let Some(line) = &self.bic_scan.line {
            line.validate("bic_scan.line")?;
        }
        if self.poles.betas.is_empty() || self.poles.windows.is_empty() {
            return Err(BicError::InvalidConfig("poles needs at least one β and one window".into()));
        }
        if self.poles.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(BicError::InvalidConfig("poles.betas must be finite and non-negative".into()));
        }
        self.validate.square_well.validate()?;
        if !(self.validate.fd_spacing > 0.0) || self.validate.unitarity_points == 0 {
            return Err(BicError::InvalidConfig("validate needs fd_spacing > 0 and unitarity_points > 0".into()));
        }
        Ok(())
    }
}

const PRESETS: [(&str, &str); 12] = [
    ("paper-fig1", include_str!("../presets/paper-fig1.toml")),
    ("paper-fig2", include_str!("../presets/paper-fig2.toml")),
    ("paper-fig3", include_str!("../presets/paper-fig3.toml")),
    ("paper-fig4", include_str!("../presets/paper-fig4.toml")),
    ("paper-fig5", include_str!("../presets/paper-fig5.toml")),
    ("paper-fig6", include_str!("../presets/paper-fig6.toml")),
    ("paper-fig7", include_str!("../presets/paper-fig7.toml")),
    ("paper-fig8", include_str!("../presets/paper-fig8.toml")),
    ("paper-fig9", include_str!("../presets/paper-fig9.toml")),
    ("paper-fig10", include_str!("../presets/paper-fig10.toml")),
    ("paper-fig11", include_str!("../presets/paper-fig11.toml")),
    ("paper-fig12", include_str!("../presets/paper-fig12.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Preset (if any) with the config file merged on top.
pub fn load_config(preset: Option<&str>, config: Option<&Path>) -> Result<RunConfig> {
    let parse = |text: &str, origin: &str| -> Result<toml::Table> {
        text.parse::<toml::Table>()
            .map_err(|e| BicError::InvalidConfig(format!("{origin}: {e}")))
    };
    let mut table = toml::Table::new();
    if let Some(name) = preset {
        let text = preset_text(name).ok_or_else(|| {
            BicError::InvalidConfig(format!("unknown preset `{name}` (known: {})", preset_names().join(", ")))
        })?;
        table = parse(text, name)?;
    }
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| BicError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        merge_tables(&mut table, parse(&text, &path.display().to_string())?);
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| BicError::InvalidConfig(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Parser, Debug)]
#[command(name = "bzbic", version, about = "Reaction-matrix scattering and bound states in the continuum for a lattice line")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    /// TOML configuration, merged over the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Bundled configuration, `paper-fig1` to `paper-fig12`.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    /// Potential on an (x, z) grid.
    Potential,
    /// Asymptotic band edges (K, ν, E).
    Bands,
    /// Reaction-region eigenvalues, L sweep and localized-state tags.
    Eigens,
    /// Propagating S-matrix amplitudes over an energy grid.
    Smatrix,
    /// det H_bd scans, BIC roots and the BIC line.
    BicScan,
    /// Quasibound poles and lifetime fits.
    Poles,
    /// Oracle checks with a pass/fail table.
    Validate,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Potential => "potential",
            CommandKind::Bands => "bands",
            CommandKind::Eigens => "eigens",
            CommandKind::Smatrix => "smatrix",
            CommandKind::BicScan => "bic-scan",
            CommandKind::Poles => "poles",
            CommandKind::Validate => "validate",
        }
    }

    fn file_stem(&self) -> String {
        self.name().replace('-', "_")
    }
}

/// A CSV file held in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Twelve significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Everything a command produced, before anything is written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: CommandKind,
    pub tables: Vec<CsvTable>,
    pub summary: serde_json::Value,
    pub timings: Vec<(String, f64)>,
    /// Validation checks that did not pass.
    pub failures: usize,
}

struct Stopwatch {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) {
        let t = self.start.elapsed().as_secs_f64() - self.laps.iter().map(|l| l.1).sum::<f64>();
        self.laps.push((name.to_string(), t));
    }
}

/// Runs one command without touching the file system.
pub fn execute(command: CommandKind, cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    // Blocked kernels reduce in a thread-count-dependent order; parallelism
    // stays at the level of energies and bases so output is bitwise stable.
    faer::set_global_parallelism(faer::Par::Seq);
    let mut clock = Stopwatch::new();
    let (tables, summary, failures) = match command {
        CommandKind::Potential => run_potential(cfg, &mut clock),
        CommandKind::Bands => run_bands(cfg, &mut clock),
        CommandKind::Eigens => run_eigens(cfg, &mut clock)?,
        CommandKind::Smatrix => run_smatrix(cfg, &mut clock)?,
        CommandKind::BicScan => run_bic_scan(cfg, &mut clock)?,
        CommandKind::Poles => run_poles(cfg, &mut clock)?,
        CommandKind::Validate => run_validate(cfg, &mut clock)?,
    };
    Ok(RunReport {
        command,
        tables,
        summary,
        timings: clock.laps,
        failures,
    })
}

type Outcome = (Vec<CsvTable>, serde_json::Value, usize);

fn run_potential(cfg: &RunConfig, clock: &mut Stopwatch) -> Outcome {
    let xs = cfg.potential.x.values();
    let zs = cfg.potential.z.values();
    let rows: Vec<Vec<Vec<String>>> = zs
        .par_iter()
        .map(|&z| {
            xs.iter()
                .map(|&x| vec![num(x), num(z), num(potential_value(&cfg.lattice, x, z))])
                .collect()
        })
        .collect();
    let mut table = CsvTable::new("grid", &["x", "z", "V"]);
    table.rows = rows.into_iter().flatten().collect();
    clock.lap("grid");
    let summary = json!({
        "v_origin": potential_value(&cfg.lattice, 0.0, 0.0),
        "nome": cfg.lattice.nome(),
        "points": table.rows.len(),
    });
    (vec![table], summary, 0)
}

fn run_bands(cfg: &RunConfig, clock: &mut Stopwatch) -> Outcome {
    let b = &cfg.bands;
    let edges = band_edges(&b.momentum.values(), b.nu_min..=b.nu_max, cfg.lattice.half_cell);
    let mut table = CsvTable::new("edges", &["K", "nu", "E"]);
    table.rows = edges
        .iter()
        .map(|&(k, nu, e)| vec![num(k), nu.to_string(), num(e)])
        .collect();
    clock.lap("edges");
    let summary = json!({ "rows": table.rows.len() });
    (vec![table], summary, 0)
}

fn nearest_index(values: &[f64], target: f64) -> usize {
    (0..values.len())
        .min_by(|&a, &b| (values[a] - target).abs().total_cmp(&(values[b] - target).abs()))
        .unwrap_or(0)
}

fn run_eigens(cfg: &RunConfig, clock: &mut Stopwatch) -> Result<Outcome> {
    let e = &cfg.eigens;
    let half_widths = e.half_widths.values();
    let reference = nearest_index(&half_widths, e.reference_half_width);
    let lo = e.windows.iter().map(|w| w[0]).fold(f64::INFINITY, f64::min);
    let hi = e.windows.iter().map(|w| w[1]).fold(f64::NEG_INFINITY, f64::max);

    let mut levels = CsvTable::new("levels", &["K", "L", "j", "E", "parity"]);
    let mut states = CsvTable::new(
        "states",
        &["K", "window_lo", "window_hi", "j", "E", "localized", "parity", "max_slope", "flat", "core_weight"],
    );
    let mut tracks = CsvTable::new("tracks", &["K", "window_lo", "window_hi", "j", "L", "E"]);
    let mut windows_summary = Vec::new();

    for &k in &e.momenta {
        let channel = BlochChannel::from_momentum(k);
        let bases: Vec<ChannelEigenBasis> = half_widths
            .par_iter()
            .map(|&l| solve_lattice_channel(&cfg.lattice, &cfg.region.with_half_width(l), &channel))
            .collect::<Result<_>>()?;
        clock.lap(&format!("solve K={k}"));
        for (basis, &l) in bases.iter().zip(&half_widths) {
            for j in basis.states_in(lo, hi) {
                levels.rows.push(vec![
                    num(k),
                    num(l),
                    j.to_string(),
                    num(basis.eigenvalues[j]),
                    basis.parity(j, e.classify.parity_tolerance).label().to_string(),
                ]);
            }
        }
        if bases.len() < 3 {
            continue;
        }
        for w in &e.windows {
            let sweep = classify_bases(&bases, (w[0], w[1]), reference, &e.classify);
            for (tag, track) in sweep.tags.iter().zip(&sweep.tracks) {
                states.rows.push(vec![
                    num(k),
                    num(w[0]),
                    num(w[1]),
                    tag.j.to_string(),
                    num(tag.energy),
                    tag.localized.to_string(),
                    tag.parity.label().to_string(),
                    opt_num(tag.max_slope),
                    tag.flat.to_string(),
                    num(tag.core_weight),
                ]);
                for (&l, energy) in half_widths.iter().zip(track) {
                    tracks.rows.push(vec![
                        num(k),
                        num(w[0]),
                        num(w[1]),
                        tag.j.to_string(),
                        num(l),
                        opt_num(*energy),
                    ]);
                }
            }
            let localized: Vec<_> = sweep
                .localized()
                .iter()
                .map(|t| {
                    json!({
                        "j": t.j,
                        "energy": t.energy,
                        "parity": t.parity.label(),
                        "flat": t.flat,
                        "core_weight": t.core_weight,
                    })
                })
                .collect();
            windows_summary.push(json!({
                "momentum": k,
                "window": w,
                "reference_half_width": half_widths[reference],
                "localized": localized,
                "diagnostics": sweep.diagnostics,
            }));
        }
        clock.lap(&format!("classify K={k}"));
    }
    let summary = json!({ "levels": levels.rows.len(), "windows": windows_summary });
    let mut tables = vec![levels];
    if !states.rows.is_empty() {
        tables.push(states);
        tables.push(tracks);
    }
    Ok((tables, summary, 0))
}

fn run_smatrix(cfg: &RunConfig, clock: &mut Stopwatch) -> Result<Outcome> {
    let s = &cfg.smatrix;
    let channel = BlochChannel::from_momentum(s.momentum);
    let basis = solve_lattice_channel(&cfg.lattice, &cfg.region, &channel)?;
    clock.lap("solve");
    let energies = displaced_grid(
        s.energy.start,
        s.energy.stop,
        s.energy.points,
        &basis.eigenvalues,
        s.displacement,
    );
    let results = s_matrix_sweep(&basis, &energies, s.evanescent_shells, &cfg.reaction);
    clock.lap("sweep");

    let mut amplitudes = CsvTable::new(
        "amplitudes",
        &["E", "label", "out_side", "out_nu", "in_side", "in_nu", "abs", "re", "im"],
    );
    let mut unitarity = CsvTable::new("unitarity", &["E", "open_modes", "total_modes", "defect", "condition"]);
    let mut worst: f64 = 0.0;
    let mut sizes = std::collections::BTreeSet::new();
    for (&energy, result) in energies.iter().zip(results) {
        let blocks = result?;
        let defect = unitarity_defect(&blocks.s_prop);
        worst = worst.max(defect);
        sizes.insert((blocks.s_prop.nrows(), blocks.s_full.nrows()));
        unitarity.rows.push(vec![
            num(energy),
            blocks.s_prop.nrows().to_string(),
            blocks.s_full.nrows().to_string(),
            num(defect),
            num(blocks.condition),
        ]);
        for side in Boundary::BOTH {
            for a in reflection_coefficients(&blocks, side) {
                amplitudes.rows.push(vec![
                    num(energy),
                    a.label.clone(),
                    a.out_side.label().to_string(),
                    a.out_nu.to_string(),
                    a.in_side.label().to_string(),
                    a.in_nu.to_string(),
                    num(a.value.norm()),
                    num(a.value.re),
                    num(a.value.im),
                ]);
            }
        }
    }
    let summary = json!({
        "energies": energies.len(),
        "max_unitarity_defect": worst,
        "block_sizes": sizes.iter().map(|&(p, f)| json!({ "propagating": p, "full": f })).collect::<Vec<_>>(),
    });
    Ok((vec![amplitudes, unitarity], summary, 0))
}

fn run_bic_scan(cfg: &RunConfig, clock: &mut Stopwatch) -> Result<Outcome> {
    let b = &cfg.bic_scan;
    let scans = b
        .momenta
        .par_iter()
        .map(|&k| {
            let basis = solve_lattice_channel(&cfg.lattice, &cfg.region, &BlochChannel::from_momentum(k))?;
            scan_bics(&basis, (b.floor, 0.5 * k * k), b.points, &cfg.reaction)
        })
        .collect::<Result<Vec<_>>>()?;
    clock.lap("scans");

    let mut samples = CsvTable::new("det", &["K", "E", "det"]);
    let mut roots = CsvTable::new("roots", &["K", "E", "residual", "threshold"]);
    let mut listed = Vec::new();
    for scan in &scans {
        let k = scan.momentum;
        for &(e, d) in &scan.samples {
            samples.rows.push(vec![num(k), num(e), num(d)]);
        }
        for r in &scan.roots {
            roots.rows.push(vec![num(k), num(r.energy), num(r.residual), num(0.5 * k * k)]);
            listed.push(json!({ "momentum": k, "energy": r.energy, "residual": r.residual }));
        }
    }
    let mut tables = vec![samples, roots];
    let mut line_summary = Vec::new();
    if let Some(grid) = &b.line {
        let line = bic_line(&cfg.lattice, &cfg.region, &grid.values(), b.line_floor, b.line_points, &cfg.reaction)?;
        let mut table = CsvTable::new("line", &["K", "E"]);
        for r in &line {
            table.rows.push(vec![num(r.momentum), num(r.energy)]);
            line_summary.push(json!([r.momentum, r.energy]));
        }
        tables.push(table);
        clock.lap("line");
    }
    Ok((tables, json!({ "roots": listed, "line": line_summary }), 0))
}

fn pole_row(window: usize, beta: f64, p: &Pole) -> Vec<String> {
    vec![
        window.to_string(),
        num(beta),
        num(p.energy.re),
        num(p.energy.im),
        num(p.width()),
        num(p.inverse_width()),
        num(p.lifetime()),
        num(p.residue.re),
        num(p.residue.im),
    ]
}

fn run_poles(cfg: &RunConfig, clock: &mut Stopwatch) -> Result<Outcome> {
    let p = &cfg.poles;
    let channel = BlochChannel::from_momentum(p.momentum);
    let mut betas = p.betas.clone();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let fitting = betas.len() >= 4 && betas[0] > 0.0 && betas[betas.len() - 1] / betas[0] >= 10.0;

    let mut poles = CsvTable::new(
        "poles",
        &["window", "beta", "re_E", "im_E", "minus_im_E", "inverse_width", "lifetime", "residue_re", "residue_im"],
    );
    let mut fits = CsvTable::new("fits", &["window", "seed", "prefactor", "exponent", "rms", "tracked"]);
    let mut tracks = CsvTable::new("tracks", &["window", "seed", "beta", "re_E", "im_E"]);
    let mut summary_windows = Vec::new();
    let mut diagnostics = Vec::new();

    for (w, region) in p.windows.iter().enumerate() {
        let seeds: Vec<f64> = p
            .seeds
            .iter()
            .copied()
            .filter(|s| (region.re_min..=region.re_max).contains(s))
            .collect();
        let searches = if fitting && !seeds.is_empty() {
            let sweep = lifetime_scaling(
                &cfg.lattice,
                &cfg.region,
                &channel,
                &betas,
                region,
                &seeds,
                &cfg.reaction,
                &p.search,
            )?;
            for fit in &sweep.fits {
                let tracked = fit.poles.iter().filter(|x| x.is_some()).count();
                fits.rows.push(vec![
                    w.to_string(),
                    num(fit.seed),
                    num(fit.prefactor),
                    num(fit.exponent),
                    num(fit.rms),
                    tracked.to_string(),
                ]);
                for (&beta, pole) in fit.betas.iter().zip(&fit.poles) {
                    tracks.rows.push(vec![
                        w.to_string(),
                        num(fit.seed),
                        num(beta),
                        opt_num(pole.map(|x| x.0)),
                        opt_num(pole.map(|x| x.1)),
                    ]);
                }
            }
            diagnostics.extend(sweep.diagnostics);
            sweep.searches
        } else {
            betas
                .par_iter()
                .map(|&beta| {
                    let basis = solve_lattice_channel(&cfg.lattice.with_asymmetry(beta), &cfg.region, &channel)?;
                    Ok((beta, find_poles(&basis, region, &cfg.reaction, &p.search)?))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let mut per_beta = Vec::new();
        for (beta, search) in &searches {
            for pole in &search.poles {
                poles.rows.push(pole_row(w, *beta, pole));
            }
            diagnostics.extend(search.diagnostics.iter().cloned());
            per_beta.push(json!({
                "beta": beta,
                "poles": search.poles.iter().map(|x| json!([x.energy.re, x.energy.im])).collect::<Vec<_>>(),
            }));
        }
        summary_windows.push(json!({
            "window": [region.re_min, region.re_max, region.im_min, region.im_max],
            "searches": per_beta,
        }));
        clock.lap(&format!("window {w}"));
    }
    let fit_summary: Vec<_> = fits
        .rows
        .iter()
        .map(|r| json!({ "window": r[0], "seed": r[1], "prefactor": r[2], "exponent": r[3] }))
        .collect();
    let summary = json!({ "windows": summary_windows, "fits": fit_summary, "diagnostics": diagnostics });
    let mut tables = vec![poles];
    if !fits.rows.is_empty() {
        tables.push(fits);
        tables.push(tracks);
    }
    Ok((tables, summary, 0))
}

struct Check {
    name: &'static str,
    case: String,
    measured: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured < self.tolerance
    }
}

fn relative(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn run_validate(cfg: &RunConfig, clock: &mut Stopwatch) -> Result<Outcome> {
    let v = &cfg.validate;
    let mut checks = Vec::new();

    for &e in &v.energies {
        let (bb, bt) = square_well_exact(e, &v.square_well)?;
        let (sb, st) = square_well_series(e, &v.square_well, true)?;
        checks.push(Check {
            name: "series_accelerated",
            case: format!("E={e}"),
            measured: relative(sb, bb).max(relative(st, bt)),
            tolerance: 1e-8,
        });
        let (pb, pt) = square_well_pipeline(e, &v.square_well, v.pipeline_cutoff, &ReactionOptions::default())?;
        checks.push(Check {
            name: "square_well_pipeline",
            case: format!("E={e}"),
            measured: ((pb - bb).abs() / bb.abs().max(1.0)).max((pt - bt).abs() / bt.abs().max(1.0)),
            tolerance: 1e-6,
        });
    }
    clock.lap("square well");

    let a = cfg.lattice.half_cell;
    let mut comb: f64 = 0.0;
    for i in 0..=16 {
        for k in 0..=8 {
            let x = -a + 2.0 * a * i as f64 / 16.0;
            let z = -1.2 + 0.3 * k as f64;
            comb = comb.max((potential_value(&cfg.lattice, x, z) - gaussian_comb_value(&cfg.lattice, x, z, v.comb_images)).abs());
        }
    }
    checks.push(Check {
        name: "theta_comb",
        case: format!("beta={}", cfg.lattice.asymmetry),
        measured: comb,
        tolerance: 1e-10,
    });

    let tilted = cfg.lattice.with_asymmetry(cfg.lattice.asymmetry.max(0.05));
    let small = RegionConfig {
        fourier_cutoff: 4,
        transverse_cutoff: 20,
        ..cfg.region.clone()
    };
    let h = build_channel_hamiltonian(
        &LatticePotential::new(&tilted, &small),
        &small,
        &BlochChannel::from_momentum(0.3),
        tilted.half_cell,
    );
    checks.push(Check {
        name: "hamiltonian_hermiticity",
        case: format!("beta={} K=0.3", tilted.asymmetry),
        measured: norm_max(&(&h - h.adjoint())),
        tolerance: 1e-12,
    });
    clock.lap("potential");

    let free = LatticeConfig {
        well_depth: 0.0,
        ..cfg.lattice.clone()
    };
    let free_basis = solve_lattice_channel(&free, &small, &BlochChannel::gamma())?;
    let free_energies = displaced_grid(0.05, 0.5 * PI2 - 0.05, 25, &free_basis.eigenvalues, 1e-6);
    let mut free_err: f64 = 0.0;
    for r in s_matrix_sweep(&free_basis, &free_energies, 1, &ReactionOptions::default()) {
        let blocks = r?;
        let t = blocks
            .amplitude((Boundary::Top, 0), (Boundary::Bottom, 0))
            .unwrap_or(Complex64::new(0.0, 0.0));
        free_err = free_err.max((t.norm() - 1.0).abs());
    }
    checks.push(Check {
        name: "free_transmission",
        case: "U=0".into(),
        measured: free_err,
        tolerance: 1e-8,
    });

    let basis = solve_lattice_channel(&cfg.lattice, &cfg.region.with_half_width(v.fd_half_width), &BlochChannel::gamma())?;
    let grid = displaced_grid(0.01, 0.5 * PI2 - 0.01, v.unitarity_points, &basis.eigenvalues, 1e-6);
    let mut worst: f64 = 0.0;
    for r in s_matrix_sweep(&basis, &grid, 1, &cfg.reaction) {
        worst = worst.max(unitarity_defect(&r?.s_prop));
    }
    checks.push(Check {
        name: "unitarity",
        case: format!("first window, {} points", grid.len()),
        measured: worst,
        tolerance: 1e-8,
    });
    clock.lap("scattering");

    for &target in &v.fd_targets {
        let j = nearest_index(&basis.eigenvalues, target);
        let spectral = basis.eigenvalues[j];
        let parity = if cfg.lattice.asymmetry == 0.0 {
            basis.parity(j, 1e-6)
        } else {
            Parity::None
        };
        let fd = fd_level_near(
            &cfg.lattice,
            &BlochChannel::gamma(),
            v.fd_half_width,
            v.fd_spacing,
            spectral,
            parity,
        )?;
        checks.push(Check {
            name: "fd_oracle",
            case: format!("E={spectral:.6}"),
            measured: relative(fd, spectral),
            tolerance: 1e-2,
        });
    }
    clock.lap("finite difference");

    let mut table = CsvTable::new("checks", &["check", "case", "measured", "tolerance", "pass"]);
    let mut failures = 0;
    for c in &checks {
        if !c.passed() {
            failures += 1;
        }
        table.rows.push(vec![
            c.name.to_string(),
            c.case.clone(),
            num(c.measured),
            num(c.tolerance),
            c.passed().to_string(),
        ]);
    }
    let summary = json!({ "checks": checks.len(), "failures": failures });
    Ok((vec![table], summary, failures))
}

/// Writes the CSV tables, the resolved config and the manifest. Returns the
/// paths written.
pub fn write_outputs(
    report: &RunReport,
    cfg: &RunConfig,
    preset: Option<&str>,
    out: &Path,
    threads: usize,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let stem = report.command.file_stem();
    let mut written = Vec::new();
    let mut files = Vec::new();
    for table in &report.tables {
        let path = out.join(format!("{stem}_{}.csv", table.name));
        let text = table.render();
        fs::write(&path, &text)?;
        files.push(json!({
            "file": path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "columns": table.header,
            "rows": table.rows.len(),
            "sha256": hex::encode(Sha256::digest(text.as_bytes())),
        }));
        written.push(path);
    }
    let config_path = out.join(format!("{stem}_config.toml"));
    fs::write(&config_path, cfg.to_toml())?;
    written.push(config_path);

    let manifest = json!({
        "command": report.command.name(),
        "preset": preset,
        "config_sha256": cfg.hash(),
        "config_file": format!("{stem}_config.toml"),
        "versions": {
            "bzbic": env!("CARGO_PKG_VERSION"),
            "format": "{:.11e}",
        },
        "threads": threads,
        "timings_s": report.timings.iter().map(|(k, t)| json!({ "stage": k, "seconds": t })).collect::<Vec<_>>(),
        "outputs": files,
        "summary": report.summary,
    });
    let manifest_path = out.join(format!("{stem}_manifest.json"));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| BicError::Numerical(e.to_string()))?;
    fs::write(&manifest_path, text + "\n")?;
    written.push(manifest_path);
    Ok(written)
}

/// Exit code for an error: 1 for usage and configuration problems, 2 for
/// numerical failures.
pub fn exit_code(err: &BicError) -> i32 {
    match err {
        BicError::InvalidConfig(_) | BicError::InvalidNome(_) | BicError::Io(_) => 1,
        _ => 2,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cfg = match load_config(cli.preset.as_deref(), cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    let threads = pool.current_num_threads();
    let result = pool.install(|| execute(cli.command, &cfg));
    let report = match result {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {} failed: {e}", cli.command.name());
            return exit_code(&e);
        }
    };
    match write_outputs(&report, &cfg, cli.preset.as_deref(), &cli.out, threads) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing {}: {e}", cli.out.display());
            return exit_code(&e);
        }
    }
    if report.failures > 0 {
        eprintln!("{}: {} check(s) failed", report.command.name(), report.failures);
        return 2;
    }
    0
}
