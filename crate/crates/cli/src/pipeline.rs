//! Stages of the identification study and the artifact tree they share.
//!
//! Every stage reads its inputs from the output directory, so running the
//! stages one by one or through [`run_pipeline`] produces the same files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hystid::boucwen::{linearized_modal, steady_state_record, TimeRecord};
use hystid::distortion::distortion_sweep;
use hystid::io::{frf_to_csv, time_record_from_csv, time_record_to_csv, RecordSidecar};
use hystid::linear_id::{estimate_bla, linear_grid, FrfEstimate, LinearFit, LinearModel};
use hystid::pnlss::{
    build_basis, estimate_pnlss, pnlss_simulate, MonomialBasis, PeriodicData, PnlssFit, PnlssModel,
};
use hystid::signals::{generate_multisine, generate_odd_detection_multisine, rms};
use hystid::validation::{error_spectrum, validate_multisine, validate_sweep, SpectrumLine, ValidationReport};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{degree_label, normalized, ExperimentManifest, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Distort,
    Bla,
    Fit,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Simulate, Stage::Distort, Stage::Bla, Stage::Fit, Stage::Validate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Distort => "distort",
            Stage::Bla => "bla",
            Stage::Fit => "fit",
            Stage::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum StageState {
    Running,
    Completed,
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusFile {
    pub stages: BTreeMap<String, StageState>,
}

/// Paths of every artifact below the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn status(&self) -> PathBuf {
        self.path("status.json")
    }

    pub fn estimation_record(&self, m: usize) -> String {
        format!("data/estimation_{:02}", m + 1)
    }

    pub fn validation_record(&self) -> String {
        "data/validation".into()
    }

    pub fn frf(&self) -> String {
        "bla/frf.json".into()
    }

    pub fn selected_linear(&self) -> String {
        "linear/selected.json".into()
    }

    pub fn pnlss_model(&self, degrees: &[u32]) -> String {
        format!("pnlss/{}.json", degree_label(&normalized(degrees)))
    }

    pub fn validation_report(&self, id: &str) -> String {
        format!("validation/{id}.json")
    }

    fn write(&self, rel: &str, contents: &str) -> CliResult<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        }
        fs::write(&p, contents).map_err(|source| io_err(&p, source))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Artifact {
            path: rel.into(),
            message: e.to_string(),
        })?;
        s.push('\n');
        self.write(rel, &s)
    }

    /// Reads an artifact produced by `stage`.
    fn read(&self, rel: &str, stage: Stage) -> CliResult<String> {
        let p = self.path(rel);
        match fs::read_to_string(&p) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::Prerequisite {
                artifact: p.display().to_string(),
                stage: stage.name(),
            }),
            Err(source) => Err(io_err(&p, source)),
        }
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str, stage: Stage) -> CliResult<T> {
        let text = self.read(rel, stage)?;
        serde_json::from_str(&text).map_err(|e| CliError::Artifact {
            path: self.path(rel).display().to_string(),
            message: e.to_string(),
        })
    }

    fn write_record(&self, stem: &str, record: &TimeRecord, sidecar: &RecordSidecar) -> CliResult<()> {
        self.write(&format!("{stem}.csv"), &time_record_to_csv(record))?;
        self.write_json(&format!("{stem}.json"), sidecar)
    }

    pub fn read_record(&self, stem: &str) -> CliResult<TimeRecord> {
        let side_text = self.read(&format!("{stem}.json"), Stage::Simulate)?;
        let corrupt = |message: String| CliError::Artifact { path: self.path(stem).display().to_string(), message };
        let sidecar = RecordSidecar::from_json(&side_text).map_err(|e| corrupt(e.to_string()))?;
        let csv = self.read(&format!("{stem}.csv"), Stage::Simulate)?;
        time_record_from_csv(&csv, &sidecar).map_err(|e| corrupt(e.to_string()))
    }

    pub fn read_status(&self) -> StatusFile {
        fs::read_to_string(self.status())
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }

    fn set_status(&self, stage: Stage, state: StageState) -> CliResult<()> {
        let mut status = self.read_status();
        status.stages.insert(stage.name().to_string(), state);
        self.write_json("status.json", &status)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

fn core<T>(stage: Stage, r: hystid::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from_core(stage.name(), e))
}

/// Label used in file names for an amplitude, e.g. `a12p5` for 12.5 N.
fn amplitude_label(a: f64) -> String {
    format!("a{}", a.to_string().replace('.', "p"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Runs one stage and records its outcome in the status file.
pub fn run_stage(m: &ExperimentManifest, out: &Artifacts, stage: Stage) -> CliResult<()> {
    out.set_status(stage, StageState::Running)?;
    let result = match stage {
        Stage::Simulate => simulate(m, out),
        Stage::Distort => distort(m, out),
        Stage::Bla => bla(m, out),
        Stage::Fit if m.pnlss.degree_sets.is_empty() => {
            return out.set_status(stage, StageState::Skipped { reason: "no degree sets".into() })
        }
        Stage::Fit => fit(m, out),
        Stage::Validate if m.pnlss.degree_sets.is_empty() => {
            return out.set_status(stage, StageState::Skipped { reason: "no degree sets".into() })
        }
        Stage::Validate => validate(m, out),
    };
    match &result {
        Ok(()) => out.set_status(stage, StageState::Completed)?,
        Err(e) => out.set_status(stage, StageState::Failed { error: e.to_string() })?,
    }
    result
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    tool_version: &'static str,
    library_version: &'static str,
    schema_version: u32,
    stages: Vec<&'static str>,
    seeds: BTreeMap<&'static str, Vec<u64>>,
    manifest: &'a ExperimentManifest,
}

/// All stages in order. A failing stage stops the run; earlier artifacts and
/// the status file stay on disk.
pub fn run_pipeline(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let mut seeds = BTreeMap::new();
    seeds.insert("estimation_phase", m.estimation.phase_seeds.clone());
    seeds.insert("estimation_noise", m.estimation.noise_seeds.clone());
    seeds.insert("validation_phase", vec![m.validation.phase_seed]);
    seeds.insert("validation_noise", vec![m.validation.noise_seed]);
    seeds.insert("distortion_design", vec![m.distortion.design_seed]);
    seeds.insert("distortion_noise", vec![m.distortion.noise_seed]);
    let summary = RunSummary {
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: hystid::VERSION,
        schema_version: SCHEMA_VERSION,
        stages: Stage::ALL.iter().map(|s| s.name()).collect(),
        seeds,
        manifest: m,
    };
    out.write_json("run_summary.json", &summary)?;
    out.write("manifest.toml", &m.to_toml())?;
    for stage in Stage::ALL {
        log::info!("stage {}", stage.name());
        run_stage(m, out, stage)?;
    }
    Ok(())
}

fn simulate(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let st = Stage::Simulate;
    let params = m.params();
    let newmark = m.newmark();
    let total = m.estimation.periods + m.estimation.discard_periods;
    let discard = m.estimation.discard_periods;
    let mut jobs: Vec<(String, u64, u64)> = m
        .estimation
        .phase_seeds
        .iter()
        .zip(&m.estimation.noise_seeds)
        .enumerate()
        .map(|(i, (&p, &n))| (out.estimation_record(i), p, n))
        .collect();
    jobs.push((out.validation_record(), m.validation.phase_seed, m.validation.noise_seed));
    let records: Vec<(String, TimeRecord, RecordSidecar)> = jobs
        .par_iter()
        .map(|(stem, phase_seed, noise_seed)| {
            let ms = core(st, generate_multisine(&m.estimation_spec(*phase_seed), *phase_seed))?;
            let rec = core(st, steady_state_record(&params, &newmark, &ms, total, discard, &m.acquisition(*noise_seed)))?;
            let mut side = RecordSidecar::from_record(&rec);
            side.phase_seed = Some(*phase_seed);
            side.integration_rate_hz = Some(newmark.step_hz);
            side.rms_input_n = Some(rms(&rec.input));
            side.params = Some(params);
            Ok((stem.clone(), rec, side))
        })
        .collect::<CliResult<_>>()?;
    for (stem, rec, side) in &records {
        log::info!("{stem}: transient residual {:?} dB", rec.transient_db);
        out.write_record(stem, rec, side)?;
    }
    Ok(())
}

fn distort(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let st = Stage::Distort;
    let d = &m.distortion;
    let (ms, classes) = core(st, generate_odd_detection_multisine(&m.distortion_spec()))?;
    let reports = core(
        st,
        distortion_sweep(
            &m.params(),
            &m.newmark(),
            &ms,
            &classes,
            &d.amplitudes_rms_n,
            d.periods + d.discard_periods,
            d.discard_periods,
            &m.acquisition(d.noise_seed),
        ),
    )?;
    let mut summary = String::from("amplitude_rms_n,band_low_hz,band_high_hz,output_db,odd_db,even_db,noise_db\n");
    for (a, r) in d.amplitudes_rms_n.iter().zip(&reports) {
        let label = amplitude_label(*a);
        out.write_json(&format!("distortion/{label}.json"), r)?;
        out.write(&format!("distortion/{label}.csv"), &r.to_csv())?;
        let mut lo = d.band_low_hz;
        while lo < d.band_high_hz {
            let hi = (lo + 5.0).min(d.band_high_hz);
            let b = r.band_levels(lo, hi);
            summary.push_str(&format!("{a},{lo},{hi},{},{},{},{}\n", b.output_db, b.odd_db, b.even_db, b.noise_db));
            lo += 5.0;
        }
    }
    out.write("distortion/summary.csv", &summary)
}

fn estimation_records(m: &ExperimentManifest, out: &Artifacts) -> CliResult<Vec<TimeRecord>> {
    (0..m.estimation.phase_seeds.len())
        .map(|i| out.read_record(&out.estimation_record(i)))
        .collect()
}

fn linear_as_pnlss(stage: Stage, model: &LinearModel) -> CliResult<PnlssModel> {
    let n = model.order();
    core(stage, PnlssModel::from_linear(model.clone(), MonomialBasis::empty(n), MonomialBasis::empty(n)))
}

/// Per-line comparison of a parametric FRF with the nonparametric BLA, in dB.
fn frf_fit_csv(frf: &FrfEstimate, model: &LinearModel) -> String {
    let db = |x: f64| 20.0 * x.max(1e-300).log10();
    let g = model.frequency_response(&frf.z());
    let mut s = String::from("frequency_hz,bla_db,model_db,error_db,total_distortion_db,noise_db\n");
    for (k, f) in frf.frequencies_hz().iter().enumerate() {
        s.push_str(&format!(
            "{f},{},{},{},{},{}\n",
            db(frf.g_bla[k].norm()),
            db(g[k].norm()),
            db((g[k] - frf.g_bla[k]).norm()),
            db(frf.total_variance[k].sqrt()),
            db(frf.noise_variance[k].sqrt()),
        ));
    }
    s
}

fn bla(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let st = Stage::Bla;
    let records = estimation_records(m, out)?;
    let validation = out.read_record(&out.validation_record())?;
    let lines = m.estimation_spec(0).band_lines();
    let frf = core(st, estimate_bla(&records, &lines))?;
    out.write_json(&out.frf(), &frf)?;
    out.write("bla/frf.csv", &frf_to_csv(&frf))?;

    let l = &m.linear;
    let grid: Vec<LinearFit> = core(st, linear_grid(&frf, &l.orders, &l.dimensions, &l.optimizer.lm()))?;
    let f = frf.excited_lines.len() as f64;
    let mut table = String::from("order,i,subspace_cost_per_line,refined_cost_per_line,stable\n");
    for g in &grid {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            g.order,
            g.i,
            g.subspace_cost / f,
            g.refined.cost / f,
            g.refined.model.is_stable()
        ));
        out.write_json(&format!("linear/n{}_i{}.json", g.order, g.i), &g.refined.model)?;
    }
    out.write("linear/grid.csv", &table)?;

    // best dimension per order, then one order for the nonlinear stage
    let mut best: BTreeMap<usize, &LinearFit> = BTreeMap::new();
    for g in &grid {
        let e = best.entry(g.order).or_insert(g);
        if g.refined.cost < e.refined.cost {
            *e = g;
        }
    }
    let mut selection = String::from("order,i,cost_per_line,validation_error_db,diverged\n");
    let mut val_err: BTreeMap<usize, f64> = BTreeMap::new();
    for (&n, g) in &best {
        let model = linear_as_pnlss(st, &g.refined.model)?;
        let rep = core(
            st,
            validate_multisine(&model, &format!("linear_n{n}"), &validation, m.validation.steady_max_periods, m.validation.steady_tolerance),
        )?;
        if let Some(e) = rep.rms_error_db {
            val_err.insert(n, e);
        }
        selection.push_str(&format!("{n},{},{},{},{}\n", g.i, g.refined.cost / f, opt(rep.rms_error_db), rep.diverged));
        out.write_json(&format!("linear/order_{n}.json"), &g.refined.model)?;
        out.write(&format!("linear/order_{n}_frf.csv"), &frf_fit_csv(&frf, &g.refined.model))?;
    }
    out.write("linear/selection.csv", &selection)?;
    let order = match l.selected_order {
        Some(n) => n,
        None => *val_err
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(n, _)| n)
            .ok_or_else(|| CliError::NoModel("every linear model diverges on the validation record".into()))?,
    };
    let chosen = best.get(&order).ok_or_else(|| {
        CliError::Config(format!("no linear model of order {order} could be fitted with the given dimensions"))
    })?;
    log::info!("selected linear order {order} (i = {})", chosen.i);
    out.write_json(&out.selected_linear(), &chosen.refined.model)
}

#[derive(Debug, Serialize, Deserialize)]
struct FitSummary {
    degrees: Vec<u32>,
    parameters: usize,
    initial_cost: f64,
    final_cost: f64,
    best_iteration: usize,
    diagnostic: Option<String>,
}

fn trace_csv(fit: &PnlssFit) -> String {
    let mut s = String::from("iter,est_error_db,val_error_db,cost,accepted\n");
    for t in &fit.trace {
        s.push_str(&format!("{},{},{},{},{}\n", t.iteration, t.est_error_db, opt(t.val_error_db), t.cost, t.accepted));
    }
    s
}

fn fit(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let st = Stage::Fit;
    let frf: FrfEstimate = out.read_json(&out.frf(), Stage::Bla)?;
    let linear: LinearModel = out.read_json(&out.selected_linear(), Stage::Bla)?;
    let records = estimation_records(m, out)?;
    let validation = out.read_record(&out.validation_record())?;
    let est: Vec<PeriodicData> = records
        .iter()
        .map(|r| core(st, PeriodicData::from_record(r, &frf.excited_lines)))
        .collect::<CliResult<_>>()?;
    let val = vec![core(st, PeriodicData::from_record(&validation, &frf.excited_lines))?];
    let n = linear.order();
    let output_basis = if m.pnlss.output_degrees.is_empty() {
        MonomialBasis::empty(n)
    } else {
        core(st, build_basis(n, m.pnlss.include_input, &m.pnlss.output_degrees))?
    };
    let cfg = m.pnlss_config();
    let fits: Vec<(Vec<u32>, PnlssFit)> = m
        .pnlss
        .degree_sets
        .par_iter()
        .map(|set| {
            let degrees = normalized(set);
            let basis = core(st, build_basis(n, m.pnlss.include_input, &degrees))?;
            let fit = core(st, estimate_pnlss(&linear, &basis, &output_basis, &est, Some(&val), &cfg))?;
            log::info!("{}: best iteration {}", degree_label(&degrees), fit.best_iteration);
            Ok((degrees, fit))
        })
        .collect::<CliResult<_>>()?;
    for (degrees, fit) in &fits {
        let label = degree_label(degrees);
        out.write_json(&out.pnlss_model(degrees), &fit.model)?;
        out.write(&format!("pnlss/{label}_trace.csv"), &trace_csv(fit))?;
        let summary = FitSummary {
            degrees: degrees.clone(),
            parameters: fit.model.num_parameters(),
            initial_cost: fit.initial_cost,
            final_cost: fit.cost,
            best_iteration: fit.best_iteration,
            diagnostic: fit.diagnostic.clone(),
        };
        out.write_json(&format!("pnlss/{label}_fit.json"), &summary)?;
    }
    Ok(())
}

fn spectrum_csv(lines: &[SpectrumLine]) -> String {
    let mut s = String::from("bin,frequency_hz,error_db,reference_db\n");
    for l in lines {
        s.push_str(&format!("{},{},{},{}\n", l.bin, l.frequency_hz, l.error_db, l.reference_db));
    }
    s
}

/// Multisine validation of a persisted model, as written by the validate stage.
pub fn validate_model_file(m: &ExperimentManifest, out: &Artifacts, model_path: &Path) -> CliResult<ValidationReport> {
    let st = Stage::Validate;
    let text = fs::read_to_string(model_path).map_err(|source| io_err(model_path, source))?;
    let model: PnlssModel = serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        path: model_path.display().to_string(),
        message: e.to_string(),
    })?;
    let id = model_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    let validation = out.read_record(&out.validation_record())?;
    validate_one(m, st, &model, &id, &validation)
}

fn validate_one(
    m: &ExperimentManifest,
    st: Stage,
    model: &PnlssModel,
    id: &str,
    record: &TimeRecord,
) -> CliResult<ValidationReport> {
    let mut rep = core(
        st,
        validate_multisine(model, id, record, m.validation.steady_max_periods, m.validation.steady_tolerance),
    )?;
    rep.metadata.insert("parameters".into(), model.num_parameters().to_string());
    rep.metadata.insert("state_degrees".into(), format!("{:?}", model.state_basis.degrees));
    Ok(rep)
}

fn validate(m: &ExperimentManifest, out: &Artifacts) -> CliResult<()> {
    let st = Stage::Validate;
    let validation = out.read_record(&out.validation_record())?;
    let linear: LinearModel = out.read_json(&out.selected_linear(), Stage::Bla)?;
    let mut models: Vec<(String, PnlssModel)> = vec![("linear".into(), linear_as_pnlss(st, &linear)?)];
    for set in &m.pnlss.degree_sets {
        let model: PnlssModel = out.read_json(&out.pnlss_model(set), Stage::Fit)?;
        models.push((degree_label(&normalized(set)), model));
    }

    let mut table = String::from("model,parameters,rms_error_db,rms_error_m,relative_error_pct,diverged\n");
    for (id, model) in &models {
        let rep = validate_one(m, st, model, id, &validation)?;
        table.push_str(&format!(
            "{id},{},{},{},{},{}\n",
            model.num_parameters(),
            opt(rep.rms_error_db),
            opt(rep.rms_error_m),
            opt(rep.relative_error_pct),
            rep.diverged
        ));
        out.write(&format!("validation/{id}_spectrum.csv"), &spectrum_csv(&rep.error_spectrum))?;
        out.write_json(&out.validation_report(id), &rep)?;
    }
    out.write("validation/table.csv", &table)?;

    if m.sweep.degree_sets.is_empty() || m.sweep.amplitudes_n.is_empty() {
        return Ok(());
    }
    let swept: Vec<(String, PnlssModel)> = m
        .sweep
        .degree_sets
        .iter()
        .map(|set| {
            let id = degree_label(&normalized(set));
            let model = models.iter().find(|(k, _)| *k == id).map(|(_, v)| v.clone()).expect("validated manifest");
            (id, model)
        })
        .collect();
    let mut amplitudes = m.sweep.amplitudes_n.clone();
    let spectrum_amp = m.sweep.spectrum_amplitude_n;
    if !amplitudes.contains(&spectrum_amp) {
        amplitudes.push(spectrum_amp);
    }
    let (curves, refs) = core(st, validate_sweep(&swept, &m.params(), &m.newmark(), &m.sweep_spec(1.0), &amplitudes))?;
    let mut csv = String::from("model,amplitude_n,relative_error_pct,diverged,divergence_time_s\n");
    for c in &curves {
        for p in c.points.iter().filter(|p| m.sweep.amplitudes_n.contains(&p.amplitude_n)) {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                c.model_id,
                p.amplitude_n,
                opt(p.relative_error_pct),
                p.diverged,
                opt(p.divergence_time_s)
            ));
        }
    }
    out.write("sweep/curves.csv", &csv)?;

    let reference = refs.iter().find(|r| r.amplitude_n == spectrum_amp).expect("amplitude was added");
    let label = amplitude_label(spectrum_amp);
    for (id, model) in &swept {
        let sim = core(st, pnlss_simulate(model, &reference.input, &vec![0.0; model.order()]))?;
        if sim.diverged() {
            log::warn!("{id} diverges on the {spectrum_amp} N sweep; no error spectrum written");
            continue;
        }
        let lines = core(
            st,
            error_spectrum(&sim.output, &reference.output, reference.sample_rate_hz, m.sweep.spectrum_low_hz, m.sweep.spectrum_high_hz),
        )?;
        out.write(&format!("sweep/{id}_{label}_spectrum.csv"), &spectrum_csv(&lines))?;
    }
    let modal = core(st, linearized_modal(&m.params()))?;
    out.write_json(
        "sweep/summary.json",
        &serde_json::json!({ "linearized": modal, "spectrum_amplitude_n": spectrum_amp, "curves": curves }),
    )
}
