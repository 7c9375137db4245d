//! Run configuration: one JSON file drives every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfeit_core::admittivity::Frequency;
use mfeit_core::asymptotics::SignConvention;
use mfeit_core::geometry::PhantomSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// path to the PhantomSpec JSON, relative to this config file
    pub phantom: PathBuf,
    pub mesh_h: f64,
    pub frequencies_hz: Vec<f64>,
    #[serde(default = "default_n_electrodes")]
    pub n_electrodes: usize,
    #[serde(default = "default_coverage")]
    pub electrode_coverage: f64,
    /// per-matrix SNR in dB; absent = noise-free
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pixel_n")]
    pub pixel_n: usize,
    /// fixed Tikhonov parameter; absent = 1e-4 * ||J||^2
    #[serde(default)]
    pub regularization_alpha: Option<f64>,
    #[serde(default = "default_pca")]
    pub pca_components: usize,
    /// add the mean image back into the fused output artifact
    #[serde(default)]
    pub fuse_add_mean: bool,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub sign_flag: SignConvention,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub validate_jump: Option<ValidateJumpSection>,
}

fn default_n_electrodes() -> usize {
    16
}
fn default_coverage() -> f64 {
    0.5
}
fn default_pixel_n() -> usize {
    32
}
fn default_pca() -> usize {
    2
}
fn default_model() -> String {
    "zero_thickness".into()
}
fn default_out_dir() -> PathBuf {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectSection {
    /// dataset frequency to detect from; absent = the highest simulated one
    #[serde(default)]
    pub frequency_hz: Option<f64>,
    #[serde(default = "default_contour_radius")]
    pub contour_radius: f64,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default = "default_max_poles")]
    pub max_poles: usize,
    #[serde(default = "default_detect_tol")]
    pub tol: f64,
    #[serde(default = "default_pair_threshold")]
    pub pair_threshold: f64,
    /// uniform-field current direction
    #[serde(default = "default_direction")]
    pub direction: [f64; 2],
}

impl Default for DetectSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

fn default_contour_radius() -> f64 {
    0.75
}
fn default_n_modes() -> usize {
    7
}
fn default_max_poles() -> usize {
    6
}
fn default_detect_tol() -> f64 {
    0.5
}
fn default_pair_threshold() -> f64 {
    0.12
}
fn default_direction() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateJumpSection {
    /// strip half-thickness sequence, decreasing
    pub deltas: Vec<f64>,
    pub frequencies_hz: Vec<f64>,
    #[serde(default = "default_segment_p")]
    pub p: [f64; 2],
    #[serde(default = "default_segment_q")]
    pub q: [f64; 2],
    #[serde(default = "default_c0")]
    pub c0_fraction: f64,
    /// far-field mesh size at the first delta
    #[serde(default = "default_h0")]
    pub h0: f64,
    /// mesh size scales as h0 * (delta/delta_0)^h_exponent
    #[serde(default = "default_h_exp")]
    pub h_exponent: f64,
}

fn default_segment_p() -> [f64; 2] {
    [-0.5, 0.0]
}
fn default_segment_q() -> [f64; 2] {
    [0.5, 0.0]
}
fn default_c0() -> f64 {
    0.1
}
fn default_h0() -> f64 {
    0.1
}
fn default_h_exp() -> f64 {
    0.75
}

pub struct LoadedConfig {
    pub run: RunConfig,
    pub phantom_spec: PhantomSpec,
    /// directory holding the config file (base for relative paths)
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let run: RunConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("cannot parse config {}: {e}", path.display()))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let phantom_path = if run.phantom.is_absolute() {
        run.phantom.clone()
    } else {
        base_dir.join(&run.phantom)
    };
    let phantom_text = std::fs::read_to_string(&phantom_path)
        .map_err(|e| anyhow::anyhow!("cannot read phantom {}: {e}", phantom_path.display()))?;
    let phantom_spec: PhantomSpec = serde_json::from_str(&phantom_text)
        .map_err(|e| anyhow::anyhow!("cannot parse phantom {}: {e}", phantom_path.display()))?;
    for &f in &run.frequencies_hz {
        Frequency::from_hz(f).map_err(|e| anyhow::anyhow!("bad frequency {f} Hz: {e}"))?;
    }
    Ok(LoadedConfig {
        run,
        phantom_spec,
        base_dir,
    })
}

/// Frequencies of the run as validated `Frequency` values.
pub fn frequencies(run: &RunConfig) -> Vec<Frequency> {
    run.frequencies_hz
        .iter()
        .map(|&f| Frequency::from_hz(f).expect("validated at load"))
        .collect()
}
