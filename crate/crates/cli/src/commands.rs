use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use csviu_core::linalg::matrix_from_rows;
use csviu_core::norms::{self, NormReport, SweepRow};
use csviu_core::sim::{
    self, DecayCheck, EnergyEstimate, InputPolicy, NoiseKind, RepresentationCheck, RepresentationTerminal,
};
use csviu_core::solver::{self, LyapunovSolution};
use csviu_core::stability::{self, DetectabilityResult, StabilityReport};
use csviu_core::{load_config, load_model, CsviuError, CsviuModel, Result, SimConfig, Simulator, SymMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::args::{AnalyzeArgs, Common, Format, Noise, NormArgs, SimulateArgs, SweepArgs};
use crate::report::{emit_csv, emit_json, write_manifest_line, RunManifest};

/// Paths beyond this aborted fraction make the ensemble unusable.
const MAX_ABORTED_FRACTION: f64 = 0.01;

fn with_path(e: CsviuError, path: &Path) -> CsviuError {
    match e {
        CsviuError::Io(io) => CsviuError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn model_at(path: &Path) -> Result<CsviuModel> {
    load_model(path).map_err(|e| with_path(e, path))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?;
    serde_json::from_str(&text).map_err(|e| CsviuError::Parse(format!("{}: {e}", path.display())))
}

fn load_weight(common: &Common, model: &CsviuModel) -> Result<SymMatrix> {
    let Some(path) = &common.q else {
        return Ok(model.output_weight());
    };
    let q = SymMatrix::from_rows(&read_rows(path)?)?;
    if q.n() != model.n() {
        return Err(CsviuError::Dimension(format!(
            "Q is {0}x{0}, expected {1}x{1}",
            q.n(),
            model.n()
        )));
    }
    if !q.is_psd() {
        return Err(CsviuError::Value("Q must be positive semidefinite".into()));
    }
    Ok(q)
}

fn positive_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(CsviuError::Domain("alpha must be positive".into()))
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    alpha: f64,
    critical_alpha: f64,
    stability: StabilityReport,
    detectability: DetectabilityResult,
    lyapunov: Option<LyapunovSolution>,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let model = model_at(&args.common.model)?;
    let (alpha, q) = match &args.config {
        Some(path) => {
            let cfg = load_config(path).map_err(|e| with_path(e, path))?;
            cfg.validate_for(&model)?;
            (cfg.alpha, cfg.weight(&model))
        }
        None => (args.alpha, load_weight(&args.common, &model)?),
    };
    positive_alpha(alpha)?;
    let detectability = match &args.g {
        Some(path) => {
            let g = matrix_from_rows(&read_rows(path)?, "G")?;
            if g.shape() != (model.n(), model.p()) {
                return Err(CsviuError::Dimension(format!(
                    "G must be {}x{}, got {}x{}",
                    model.n(),
                    model.p(),
                    g.nrows(),
                    g.ncols()
                )));
            }
            stability::check_detectability_with_g(&model, alpha, &g)?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            stability::search_detectability(&model, alpha, args.budget, &mut rng)?
        }
    };
    let stability = stability::check_stability(&model, alpha)?;
    let lyapunov = match solver::solve(&model, alpha, &q) {
        Ok(sol) => Some(sol),
        Err(CsviuError::NotStable { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = AnalyzeReport {
        alpha,
        critical_alpha: solver::critical_alpha(&model, 1e-9)?,
        stability,
        detectability,
        lyapunov,
    };
    let config = json!({
        "alpha": alpha,
        "Q": q.to_rows(),
        "G": args.g,
        "budget": args.budget,
        "seed": args.seed,
    });
    let manifest = RunManifest::new("analyze", &args.common.model, config, args.common.out.as_deref());
    emit_json(&manifest, &report, args.common.out.as_deref())
}

fn emit_single(manifest: &RunManifest, report: &NormReport, format: Format, out: Option<&Path>) -> Result<()> {
    match format {
        Format::Json => emit_json(manifest, report, out),
        Format::Csv => emit_csv(
            manifest,
            &["alpha", "varpi_l", "h2_discounted", "power_norm"],
            &[vec![Some(report.alpha), Some(report.varpi_l), report.h2_discounted, report.power_norm]],
            out,
        ),
    }
}

#[derive(Serialize)]
struct SweepReport {
    critical_alpha: f64,
    closed_form_exact: bool,
    rows: Vec<SweepRow>,
}

fn emit_sweep(
    command: &str,
    common: &Common,
    alphas: Option<&[f64]>,
    format: Format,
) -> Result<()> {
    let model = model_at(&common.model)?;
    let q = load_weight(common, &model)?;
    let alphas = match alphas {
        Some([]) => return Err(CsviuError::Value("empty alpha list".into())),
        Some(a) => a.to_vec(),
        None => norms::default_sweep_grid(&model)?,
    };
    for &a in &alphas {
        positive_alpha(a)?;
    }
    let report = SweepReport {
        critical_alpha: solver::critical_alpha(&model, 1e-9)?,
        closed_form_exact: model.cross_operator_vanishes(),
        rows: norms::vanishing_discount_sweep(&model, &q, &alphas)?,
    };
    let config = json!({ "alphas": alphas, "Q": q.to_rows() });
    let out = common.out.as_deref();
    let manifest = RunManifest::new(command, &common.model, config, out);
    match format {
        Format::Json => emit_json(&manifest, &report, out),
        Format::Csv => {
            let rows: Vec<Vec<Option<f64>>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        Some(r.alpha),
                        r.varpi_l,
                        r.h2_discounted,
                        r.abel_gap,
                        r.l_distance,
                        r.not_stable_radius,
                    ]
                })
                .collect();
            emit_csv(
                &manifest,
                &["alpha", "varpi_l", "h2_discounted", "abel_gap", "l_distance", "not_stable_radius"],
                &rows,
                out,
            )
        }
    }
}

pub fn norm(args: &NormArgs) -> Result<()> {
    if let Some(alphas) = &args.mode.sweep {
        return emit_sweep("norm", &args.common, Some(alphas), args.format);
    }
    let model = model_at(&args.common.model)?;
    let q = load_weight(&args.common, &model)?;
    let alpha = if args.mode.power { 1.0 } else { args.mode.alpha.unwrap_or(1.0) };
    positive_alpha(alpha)?;
    let report = norms::norm_report(&model, alpha, &q)?;
    let config = json!({ "alpha": alpha, "power": args.mode.power, "Q": q.to_rows() });
    let out = args.common.out.as_deref();
    let manifest = RunManifest::new("norm", &args.common.model, config, out);
    emit_single(&manifest, &report, args.format, out)
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    emit_sweep("sweep", &args.common, args.alphas.as_deref(), args.format)
}

#[derive(Serialize)]
struct Comparison {
    estimate: EnergyEstimate,
    closed_form: Option<f64>,
    z_score: Option<f64>,
}

impl Comparison {
    fn new(estimate: EnergyEstimate, closed_form: Option<f64>) -> Self {
        Comparison {
            z_score: closed_form.map(|c| estimate.z_score(c)),
            estimate,
            closed_form,
        }
    }
}

#[derive(Serialize)]
struct SimulateReport {
    alpha: f64,
    n_paths: usize,
    aborted: usize,
    /// Closed forms carry no sign-dependent remainder for this model.
    closed_form_exact: bool,
    abel: Comparison,
    cesaro: Comparison,
    representation: Option<RepresentationCheck>,
    decay: Option<DecayCheck>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("CSVIU_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| CsviuError::Value(format!("CSVIU_THREADS must be a positive integer, got {v:?}"))),
        _ => Ok(flag),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = model_at(&args.common.model)?;
    let q = load_weight(&args.common, &model)?;
    positive_alpha(args.alpha)?;
    let noise_kind = match args.noise {
        Noise::Gaussian => NoiseKind::Gaussian,
        Noise::Rademacher => NoiseKind::Rademacher,
        Noise::Uniform => NoiseKind::Uniform,
    };
    let cfg = SimConfig {
        n_paths: args.paths,
        horizon: args.horizon,
        seed: args.seed,
        noise_kind,
        x0: args.x0.clone().unwrap_or_else(|| vec![0.0; model.n()]),
        input_policy: args.input.clone().map_or(InputPolicy::Zero, InputPolicy::Constant),
    };
    let mut sim = Simulator::new(&model, &cfg)?;
    if let Some(t) = thread_count(args.threads)? {
        sim = sim.with_threads(t)?;
    }

    let abel = sim::estimate_abel_energy(&sim, &q, args.alpha)?;
    if abel.aborted as f64 > MAX_ABORTED_FRACTION * cfg.n_paths as f64 {
        let first = sim::PathSource::map_paths(&sim, |_| ()).aborted[0];
        return Err(CsviuError::Overflow {
            path: first.path,
            stage: first.stage,
        });
    }
    let cesaro = sim::estimate_cesaro_power(&sim, &q)?;

    let from_rest = cfg.x0.iter().all(|&v| v == 0.0) && cfg.input_policy == InputPolicy::Zero;
    let abel_closed = (from_rest && args.alpha < 1.0)
        .then(|| norms::h2_discounted_norm(&model, args.alpha, &q).ok())
        .flatten();
    let power_closed = (cfg.input_policy == InputPolicy::Zero)
        .then(|| norms::power_norm(&model, &q).ok())
        .flatten();

    let representation = args
        .validate_representation
        .then(|| sim::validate_representation(&sim, args.alpha, &q, &RepresentationTerminal::zero(model.n())))
        .transpose()?;
    let decay = args
        .check_decay
        .then(|| sim::check_decay(&sim, args.alpha, &q))
        .transpose()?;

    let config = json!({
        "simulation": cfg,
        "alpha": args.alpha,
        "Q": q.to_rows(),
        "validate_representation": args.validate_representation,
        "check_decay": args.check_decay,
        "dump": args.dump,
    });
    let out = args.common.out.as_deref();
    let manifest = RunManifest::new("simulate", &args.common.model, config, out);

    if let Some(path) = &args.dump {
        let mut w = BufWriter::new(File::create(path)?);
        write_manifest_line(&mut w, &manifest)?;
        sim::write_trajectory_csv(&sim, w)?;
    }

    let report = SimulateReport {
        alpha: args.alpha,
        n_paths: cfg.n_paths,
        aborted: abel.aborted,
        closed_form_exact: model.cross_operator_vanishes(),
        abel: Comparison::new(abel, abel_closed),
        cesaro: Comparison::new(cesaro, power_closed),
        representation,
        decay,
    };
    emit_json(&manifest, &report, out)
}
