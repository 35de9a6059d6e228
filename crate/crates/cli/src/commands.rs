use divdis_core::analysis::{self, DetectionMode, Ensemble};
use divdis_core::calibration::CalibrationConfig;
use divdis_core::detect;
use divdis_core::estimate::{self, EstimationConfig};
use divdis_core::grid::{self, GridMode};
use divdis_core::io;
use divdis_core::report::{self, Table};
use divdis_core::synth::{self, SynthConfig};
use divdis_core::{EpsilonPolicy, Error, Notion, Pairing, Result};

use crate::output::Sink;
use crate::{
    CalibrateArgs, Command, DetectArgs, DisagreeArgs, EstimateArgs, GridArgs, GridModeArg, InputArgs, LineArgs,
    OutputArgs, SynthArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Disagree(a) => disagree(a),
        Command::Error(a) => error(a),
        Command::Line(a) => line(a),
        Command::Estimate(a) => estimate(a),
        Command::Detect(a) => detect(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Synth(a) => synth(a),
        Command::Grid(a) => grid(a),
    }
}

fn sink(o: &OutputArgs) -> Sink {
    Sink {
        out: o.out.clone(),
        formats: o.format.clone(),
        force: o.force,
    }
}

fn notions(input: &InputArgs) -> Vec<Notion> {
    let mut v = input.notion.clone();
    v.sort();
    v.dedup();
    v
}

fn load(manifest: &std::path::Path, threads: Option<usize>) -> Result<Ensemble> {
    let manifest = io::load_manifest(manifest)?;
    analysis::with_threads(threads, || Ensemble::load(&manifest))?
}

fn disagree(a: DisagreeArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.input.eps)?;
    let notions = notions(&a.input);
    let table = analysis::with_threads(a.input.threads, || -> Result<Table> {
        let ens = load(&a.input.manifest, None)?;
        let dis = analysis::disagreement_table(&ens, &notions, eps)?;
        Ok(report::disagreement_report(&dis, &ens.splits(), &notions))
    })??;
    sink(&a.output).emit(&[table])
}

fn error(a: DisagreeArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.input.eps)?;
    let notions = notions(&a.input);
    let table = analysis::with_threads(a.input.threads, || -> Result<Table> {
        let ens = load(&a.input.manifest, None)?;
        let errs = analysis::error_table(&ens, &notions, eps)?;
        Ok(report::error_report(&errs, &ens.splits(), &notions))
    })??;
    sink(&a.output).emit(&[table])
}

fn line(a: LineArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.input.eps)?;
    let notions = notions(&a.input);
    let table = analysis::with_threads(a.input.threads, || -> Result<Table> {
        let ens = load(&a.input.manifest, None)?;
        let dis = analysis::disagreement_table(&ens, &notions, eps)?;
        let errs = analysis::error_table(&ens, &notions, eps)?;
        let lines = analysis::line_fits(&ens, &dis, &errs, &notions, a.transform)?;
        Ok(report::line_report(&lines))
    })??;
    sink(&a.output).emit(&[table])
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.input.eps)?;
    let notions = notions(&a.input);
    let tables = analysis::with_threads(a.input.threads, || -> Result<Vec<Table>> {
        let ens = load(&a.input.manifest, None)?;
        let dis = analysis::disagreement_table(&ens, &notions, eps)?;
        let errs = analysis::error_table(&ens, &notions, eps)?;
        let mut reports = Vec::new();
        for &notion in &notions {
            let cfg = EstimationConfig {
                transform: a.transform,
                r2_gate: a.r2_gate,
                anchor_weight: a.anchor_weight,
                ..EstimationConfig::new(notion, a.method)
            };
            reports.extend(analysis::estimate_all(&ens, &dis, &errs, &cfg)?);
        }
        if a.table1 {
            let r2 = analysis::agreement_r2(&ens, &dis, &notions, a.transform)?;
            let admitted = estimate::gate_by_r2(&r2, a.r2_gate, &notions)?;
            Ok(vec![report::table1(&reports, &admitted, &notions)])
        } else {
            let (est, summary) = report::estimate_reports(&reports);
            Ok(vec![est, summary])
        }
    })??;
    sink(&a.output).emit(&tables)
}

fn detect(a: DetectArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.eps)?;
    let mode = if a.pooled {
        DetectionMode::Pooled
    } else {
        DetectionMode::PerSubject
    };
    let tables = analysis::with_threads(a.threads, || -> Result<Vec<Table>> {
        let ens = load(&a.manifest, None)?;
        let results = analysis::detection(&ens, &a.kinds, mode, eps)?;
        let (by_split, by_severity) = detect::aggregate(&results);
        if a.table2 {
            Ok(vec![report::table2(&by_severity, &a.kinds)])
        } else {
            let (split_table, severity_table) = report::detection_aggregates(&by_split, &by_severity);
            Ok(vec![report::detection_report(&results), split_table, severity_table])
        }
    })??;
    sink(&a.output).emit(&tables)
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.input.eps)?;
    let cfg = CalibrationConfig::new(a.bins)?;
    let notions = notions(&a.input);
    let tables = analysis::with_threads(a.input.threads, || -> Result<Vec<Table>> {
        let ens = load(&a.input.manifest, None)?;
        let dis = analysis::disagreement_table(&ens, &notions, eps)?;
        let errs = analysis::error_table(&ens, &notions, eps)?;
        let study = analysis::calibration_study(&ens, &dis, &errs, &notions, a.transform, cfg)?;
        let (rows, trends) = report::calibration_reports(&study);
        Ok(vec![rows, trends])
    })??;
    sink(&a.output).emit(&tables)
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_models: a.models,
        n_samples: a.samples,
        n_classes: a.classes,
        skill: (a.skill[0], a.skill[1]),
        temperature: (a.temperature[0], a.temperature[1]),
        id_noise: a.id_noise,
        severities: a.severities,
        seed: a.seed,
    };
    let world = match a.planted {
        Some(n_extra) => synth::planted_world(&cfg, n_extra)?,
        None => synth::generate_world(&cfg)?,
    };
    let pairing = match a.anchor {
        Some(id) => Pairing::Anchor(id),
        None => Pairing::AllPairs,
    };
    let manifest = world.write(&a.out, pairing, a.force)?;
    println!("{}", manifest.display());
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let eps = EpsilonPolicy::new(a.eps)?;
    let table = match a.figure {
        1 => {
            let mode = match a.mode {
                GridModeArg::Disagreement => GridMode::DisagreementAgainst(anchor(&a.anchor)?),
                GridModeArg::Error => GridMode::ErrorForClass(a.label),
            };
            report::simplex_report(&grid::simplex_grid(a.notion, mode, a.resolution, eps)?)
        }
        _ => report::curve_report(&grid::binary_error_curve(a.notion, a.resolution, eps)?),
    };
    sink(&a.output).emit(&[table])
}

fn anchor(v: &[f64]) -> Result<[f64; 3]> {
    let q = [v[0], v[1], v[2]];
    divdis_core::domain::validate_prediction_set("anchor", "grid", &[q.to_vec()], 3)
        .map_err(|e| Error::InvalidConfig(format!("anchor is not a distribution: {e}")))?;
    Ok(q)
}
