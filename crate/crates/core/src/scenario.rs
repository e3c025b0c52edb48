//! End-to-end scenario: configuration, pipeline, sweeps and result files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costs::{regime_cost_paths, CostConfig, Regime, RegimeCostPaths};
use crate::curve::{build_curve, eur_2012_quotes, load_quotes, MarketQuote, YieldCurve};
use crate::dynamics::{simulate_paths, CirParams, G2Model, G2Params, ModelParams, PathSet, TimeGrid};
use crate::error::{Error, Result, Stage, StageContext};
use crate::solver::{
    extract_boundary, solve_switching, write_boundary_csv, write_indicators_csv, write_switches_csv, BoundaryRow,
    LsmcExpectation, SolverConfig, SwitchingSolution,
};
use crate::swap::{exposure_from_npv, Direction, ExposureProfile, Fixing, SwapPricer, SwapSpec};

/// Historical volatility of the first rate factor.
pub const SIGMA_HISTORICAL: f64 = 0.12654;

/// Where the initial curve comes from. Inline quotes win over a file; with
/// neither, the built-in EUR 2012-06-15 table is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quotes: Option<Vec<MarketQuote>>,
}

impl CurveSource {
    pub fn quotes(&self) -> Result<Vec<MarketQuote>> {
        match (&self.quotes, &self.file) {
            (Some(q), _) => Ok(q.clone()),
            (None, Some(path)) => load_quotes(path),
            (None, None) => Ok(eur_2012_quotes()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityPreset {
    Low,
    High,
}

impl IntensityPreset {
    pub fn params(self) -> CirParams {
        match self {
            Self::Low => CirParams::low(),
            Self::High => CirParams::high(),
        }
    }
}

impl std::str::FromStr for IntensityPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "high" => Ok(Self::High),
            other => Err(Error::Parse(format!("unknown intensity preset `{other}`"))),
        }
    }
}

/// Default intensity: a named preset or explicit CIR parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntensitySpec {
    Preset { preset: IntensityPreset },
    Params(CirParams),
}

impl Default for IntensitySpec {
    fn default() -> Self {
        Self::Preset { preset: IntensityPreset::High }
    }
}

impl IntensitySpec {
    pub fn params(&self) -> CirParams {
        match self {
            Self::Preset { preset } => preset.params(),
            Self::Params(p) => p.clone(),
        }
    }
}

/// Swap terms; the notional is the one in [`CostConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapTerms {
    pub maturity: f64,
    pub float_tenor: f64,
    /// Strike; the curve's par rate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_rate: Option<f64>,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub fixing: Fixing,
}

impl Default for SwapTerms {
    fn default() -> Self {
        Self { maturity: 1.0, float_tenor: 0.5, fixed_rate: None, direction: Direction::default(), fixing: Fixing::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::n_paths")]
    pub n_paths: usize,
    #[serde(default = "defaults::n_steps")]
    pub n_steps: usize,
    #[serde(default = "defaults::initial_regime")]
    pub initial_regime: Regime,
    #[serde(default)]
    pub curve: CurveSource,
    #[serde(default = "G2Params::eur_2012")]
    pub g2: G2Params,
    /// Replace `g2.sigma` by the historical volatility.
    #[serde(default)]
    pub use_historical_sigma: bool,
    #[serde(default)]
    pub intensity: IntensitySpec,
    #[serde(default)]
    pub rate_intensity_corr: f64,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default)]
    pub swap: SwapTerms,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Also write per-path state and cost dumps.
    #[serde(default)]
    pub debug_dumps: bool,
}

mod defaults {
    use crate::costs::Regime;

    pub fn seed() -> u64 {
        20120615
    }
    pub fn n_paths() -> usize {
        1000
    }
    pub fn n_steps() -> usize {
        252
    }
    pub fn initial_regime() -> Regime {
        Regime::Uncollateralized
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Shape of `manifest.toml`; its `config` table is itself a valid config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunRecord,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    /// `sha256` over the resolved configuration, git-blob style.
    pub input_hash: String,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    /// Parses a config file, or the `config` table of a run manifest.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let cfg: Self = match value.get("config") {
            Some(inner) if value.contains_key("run") => inner.clone().try_into(),
            _ => value.try_into(),
        }
        .map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        // curve files are relative to the config
        if let Some(file) = cfg.curve.file.as_mut() {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        if let Some(file) = &self.curve.file {
            if self.curve.quotes.is_none() && !file.exists() {
                return Err(Error::InvalidParameter(format!("curve file {} not found", file.display())));
            }
        }
        self.g2.validate()?;
        self.intensity.params().validate()?;
        self.costs.validate()
    }

    pub fn model_params(&self) -> ModelParams {
        let mut g2 = self.g2.clone();
        if self.use_historical_sigma {
            g2.sigma = SIGMA_HISTORICAL;
        }
        ModelParams { g2, cir: self.intensity.params(), rate_intensity_corr: self.rate_intensity_corr }
    }

    /// Self-contained copy: curve quotes inlined, derived switches applied.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.curve = CurveSource { file: None, quotes: Some(self.curve.quotes()?) };
        out.g2 = self.model_params().g2;
        out.use_historical_sigma = false;
        Ok(out)
    }

    pub fn input_hash(&self) -> Result<String> {
        let text = self.resolved()?.to_toml_string()?;
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()));
        h.update(text.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = self.costs.warnings();
        if !self.model_params().cir.feller_satisfied() {
            out.push("intensity parameters violate the Feller condition; truncation keeps paths non-negative".into());
        }
        out
    }
}

/// Simulated market and the cost processes derived from it; independent of
/// switching costs and the target `delta`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub curve: YieldCurve,
    pub swap: SwapSpec,
    pub paths: PathSet,
    pub exposure: ExposureProfile,
    pub costs: RegimeCostPaths,
}

impl Prepared {
    pub fn npv(&self) -> &Array2<f64> {
        &self.exposure.npv
    }
}

/// Curve, simulation, swap exposure and cost processes.
pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    cfg.validate().stage(Stage::Config)?;
    let curve = build_curve(&cfg.curve.quotes().stage(Stage::Curve)?).stage(Stage::Curve)?;
    let params = cfg.model_params();
    let grid = TimeGrid::new(cfg.n_steps, cfg.swap.maturity).stage(Stage::Dynamics)?;
    let paths = simulate_paths(&params, &curve, grid, cfg.n_paths, cfg.seed).stage(Stage::Dynamics)?;

    let swap = swap_spec(cfg, &curve).stage(Stage::Swap)?;
    let model = G2Model::new(params.g2.clone(), curve.clone()).stage(Stage::Swap)?;
    let pricer = SwapPricer::new(swap.clone(), model, grid).stage(Stage::Swap)?;
    let npv = pricer.npv_matrix(&paths).stage(Stage::Swap)?;

    let expectation = LsmcExpectation::new(&paths);
    let costs = regime_cost_paths(&paths, &npv, &cfg.costs, &expectation).stage(Stage::Costs)?;
    let exposure = exposure_from_npv(&paths, npv);
    Ok(Prepared { curve, swap, paths, exposure, costs })
}

fn swap_spec(cfg: &ScenarioConfig, curve: &YieldCurve) -> Result<SwapSpec> {
    let terms = &cfg.swap;
    let mut spec = SwapSpec::at_par(curve, cfg.costs.notional, terms.maturity, terms.float_tenor)?;
    if let Some(k) = terms.fixed_rate {
        spec.fixed_rate = k;
    }
    spec.direction = terms.direction;
    spec.fixing = terms.fixing;
    spec.validate()?;
    Ok(spec)
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    /// Resolved configuration.
    pub config: ScenarioConfig,
    pub prepared: Prepared,
    pub solution: SwitchingSolution,
    pub boundary: Vec<BoundaryRow>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

/// Solves the switching problem on already prepared paths with the cost
/// settings of `cfg`.
pub fn solve_prepared(prepared: &Prepared, cfg: &ScenarioConfig) -> Result<SwitchingSolution> {
    cfg.costs.validate().stage(Stage::Config)?;
    solve_switching(&prepared.paths, &prepared.costs, &cfg.costs, &cfg.solver, cfg.initial_regime).stage(Stage::Solver)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let start = Instant::now();
    let resolved = cfg.resolved().stage(Stage::Config)?;
    let prepared = prepare(&resolved)?;
    let solution = solve_prepared(&prepared, &resolved)?;
    let boundary = extract_boundary(&solution, &prepared.paths, &prepared.costs);
    let warnings = resolved.warnings();
    Ok(ScenarioOutput {
        config: resolved,
        prepared,
        solution,
        boundary,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings,
    })
}

impl ScenarioOutput {
    pub fn manifest(&self) -> Result<Manifest> {
        Ok(Manifest {
            run: RunRecord {
                version: env!("CARGO_PKG_VERSION").to_string(),
                input_hash: self.config.input_hash()?,
                wall_time_s: self.wall_time_s,
                warnings: self.warnings.clone(),
            },
            config: self.config.clone(),
        })
    }

    /// Writes the result files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.write_inner(dir).stage(Stage::Output)
    }

    fn write_inner(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_values_csv(&self.solution, create("values.csv")?)?;
        write_indicators_csv(&self.solution, create("indicators.csv")?)?;
        write_boundary_csv(&self.boundary, create("boundary.csv")?)?;
        write_switches_csv(&self.solution, create("switches.csv")?)?;
        self.prepared.exposure.write_csv(create("exposure.csv")?)?;
        if self.config.debug_dumps {
            self.prepared.paths.write_csv(create("paths.csv")?)?;
            self.prepared.costs.write_csv(create("costs.csv")?)?;
        }
        let manifest = toml::to_string(&self.manifest()?).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), manifest)?;
        Ok(())
    }
}

/// Single-row table of the headline values.
pub fn write_values_csv<W: std::io::Write>(solution: &SwitchingSolution, out: W) -> Result<()> {
    let (best, v_star) = solution.best();
    let [z, zeta] = solution.v_star;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "v_star",
        "v_star_se",
        "v_cva",
        "v_cva_se",
        "v_coll",
        "v_coll_se",
        "v_star_from_z",
        "v_star_from_z_se",
        "v_star_from_zeta",
        "v_star_from_zeta_se",
        "best_initial_regime",
        "total_switches",
    ])?;
    let mut row: Vec<String> = [
        v_star.mean,
        v_star.se,
        solution.v_cva.mean,
        solution.v_cva.se,
        solution.v_coll.mean,
        solution.v_coll.se,
        z.mean,
        z.se,
        zeta.mean,
        zeta.se,
    ]
    .iter()
    .map(f64::to_string)
    .collect();
    row.push(best.label().to_string());
    row.push(solution.total_switches().to_string());
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Both switching costs, as a fraction of notional.
    C,
    /// Switching cost out of the uncollateralised regime, in currency.
    CZ,
    /// Switching cost out of the collateralised regime, in currency.
    CZeta,
    Delta,
    LambdaPreset,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "c" => Ok(Self::C),
            "c_z" => Ok(Self::CZ),
            "c_zeta" => Ok(Self::CZeta),
            "delta" => Ok(Self::Delta),
            "lambda_preset" => Ok(Self::LambdaPreset),
            other => Err(Error::Parse(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

impl SweepParam {
    fn reuses_paths(self) -> bool {
        self != Self::LambdaPreset
    }

    fn apply(self, cfg: &mut ScenarioConfig, value: &str) -> Result<()> {
        let number = || value.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{value}`: {e}")));
        match self {
            Self::C => {
                let c = number()? * cfg.costs.notional;
                cfg.costs.c_z = c;
                cfg.costs.c_zeta = c;
            }
            Self::CZ => cfg.costs.c_z = number()?,
            Self::CZeta => cfg.costs.c_zeta = number()?,
            Self::Delta => cfg.costs.delta = number()?,
            Self::LambdaPreset => cfg.intensity = IntensitySpec::Preset { preset: value.parse()? },
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub solution: SwitchingSolution,
}

/// Runs the scenario once per value at the common seed. Paths and cost
/// processes are simulated once unless the intensity itself is swept.
pub fn sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepRow>> {
    let base = cfg.resolved().stage(Stage::Config)?;
    let shared = if param.reuses_paths() { Some(prepare(&base)?) } else { None };
    values
        .iter()
        .map(|value| {
            let mut run = base.clone();
            param.apply(&mut run, value).stage(Stage::Config)?;
            let solution = match &shared {
                Some(prepared) => solve_prepared(prepared, &run)?,
                None => solve_prepared(&prepare(&run)?, &run)?,
            };
            Ok(SweepRow { value: value.clone(), solution })
        })
        .collect()
}

/// `value,v_star,v_star_se,v_cva,v_coll,switches`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "v_star", "v_star_se", "v_cva", "v_cva_se", "v_coll", "v_coll_se", "switches"])?;
    for row in rows {
        let s = &row.solution;
        let (_, v) = s.best();
        w.write_record(&[
            row.value.clone(),
            v.mean.to_string(),
            v.se.to_string(),
            s.v_cva.mean.to_string(),
            s.v_cva.se.to_string(),
            s.v_coll.mean.to_string(),
            s.v_coll.se.to_string(),
            s.total_switches().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Whether the headline value never decreases along the sweep.
pub fn is_non_decreasing(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| w[1].solution.best().1.mean >= w[0].solution.best().1.mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.n_paths, 1000);
        assert_eq!(cfg.n_steps, 252);
        assert_eq!(cfg.intensity.params(), CirParams::high());
        assert_eq!(cfg.g2, G2Params::eur_2012());
        assert_eq!(cfg.costs.recovery, 0.4);
    }

    #[test]
    fn config_parses_presets_and_params() {
        let cfg = ScenarioConfig::from_toml_str("[intensity]\npreset = \"low\"\n").unwrap();
        assert_eq!(cfg.intensity.params(), CirParams::low());
        let text = "[intensity]\nkappa = 1.0\ngamma = 0.1\nupsilon = 0.0\nlambda0 = 0.2\n";
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.intensity.params().lambda0, 0.2);
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ScenarioConfig { use_historical_sigma: true, ..Default::default() };
        let resolved = cfg.resolved().unwrap();
        assert_eq!(resolved.g2.sigma, SIGMA_HISTORICAL);
        assert_eq!(resolved.curve.quotes.as_ref().unwrap().len(), 15);
        let back = ScenarioConfig::from_toml_str(&resolved.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.input_hash().unwrap(), cfg.input_hash().unwrap());
    }

    #[test]
    fn missing_curve_file_is_a_config_error() {
        let cfg = ScenarioConfig {
            curve: CurveSource { file: Some("/nonexistent/curve.csv".into()), quotes: None },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_parameters() {
        let mut cfg = ScenarioConfig::default();
        SweepParam::C.apply(&mut cfg, "0.01").unwrap();
        assert_eq!(cfg.costs.c_z, 10.0);
        assert_eq!(cfg.costs.c_zeta, 10.0);
        "lambda_preset".parse::<SweepParam>().unwrap().apply(&mut cfg, "low").unwrap();
        assert_eq!(cfg.intensity.params(), CirParams::low());
        assert!(SweepParam::Delta.apply(&mut cfg, "x").is_err());
        assert!("gamma".parse::<SweepParam>().is_err());
    }
}
