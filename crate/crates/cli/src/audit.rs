//! The `audit` subcommand.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fairshift_core::audit::{aggregate, heatmap_matrix, run_audit, synthetic_split, AuditConfig, Metric, SeriesKey};
use fairshift_core::bias::{derive_seed, BiasGrid};
use fairshift_core::classifiers::{ClassifierId, DEFAULT_LAMBDAS};
use fairshift_core::config::KvConfig;
use fairshift_core::dataset::{stratified_split, LabeledDataset};
use fairshift_core::preprocess::{load_csv_split, read_dataset_csv, PreprocessSpec};
use fairshift_core::report::svg::{emit_heatmap_svg, emit_svg_scatter};
use fairshift_core::report::{
    fmt6, heatmap_stem, quadrant_counts, render_text_table, write_heatmap_csv, write_report_csv, write_results_csv,
    RunManifest,
};
use fairshift_core::synthetic::{GaussianSubgroupModel, SyntheticProfile};

use crate::settings::{bool_key, default_to, flag, merge, record_threads, usage, CliError, CliResult};
use crate::AuditArgs;

const DEFAULT_TEST_FRACTION: f64 = 0.3;

enum Source {
    Synthetic(SyntheticProfile),
    Csv { path: PathBuf, spec: Option<PreprocessSpec> },
}

struct Plan {
    source: Source,
    grid: BiasGrid,
    audit: AuditConfig,
    seed: u64,
    svg: bool,
    strict: bool,
}

fn resolve(args: &AuditArgs, threads: Option<usize>) -> CliResult<(KvConfig, Plan)> {
    let mut cfg = merge(
        args.config.as_deref(),
        &[
            ("dataset", args.dataset.clone()),
            ("spec", args.spec.clone()),
            ("classifiers", args.classifiers.clone()),
            ("grid", args.grid.clone()),
            ("runs", args.runs.map(|v| v.to_string())),
            ("master_seed", args.seed.map(|v| v.to_string())),
            ("lambdas", args.lambdas.clone()),
            ("beta_pos", args.beta_pos.clone()),
            ("beta_neg", args.beta_neg.clone()),
            ("nu", args.nu.clone()),
            ("oracle_eta", flag(args.oracle_eta)),
            ("svg", flag(args.svg)),
            ("strict", flag(args.strict)),
            ("out", Some(args.out.display().to_string())),
        ],
    )?;
    default_to(&mut cfg, "dataset", "synthetic:desk");
    default_to(&mut cfg, "grid", "desk");
    default_to(&mut cfg, "master_seed", "0");
    default_to(
        &mut cfg,
        "classifiers",
        ClassifierId::ALL.map(ClassifierId::as_str).join(","),
    );
    default_to(&mut cfg, "lambdas", DEFAULT_LAMBDAS.map(|l| l.to_string()).join(","));
    for key in ["oracle_eta", "svg", "strict"] {
        default_to(&mut cfg, key, "false");
    }

    let seed: u64 = usage(cfg.parse_value("master_seed"))?.unwrap_or(0);
    let grid = usage(BiasGrid::preset(cfg.get("grid").unwrap_or("desk"), seed))?;
    let grid = usage(grid.with_overrides(&cfg))?;
    for (key, values) in [
        ("beta_pos", &grid.beta_pos_values),
        ("beta_neg", &grid.beta_neg_values),
        ("nu", &grid.nu_values),
    ] {
        cfg.insert(key, values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }
    cfg.insert("runs", grid.runs.to_string());

    let classifiers = usage(ClassifierId::parse_list(cfg.get("classifiers").unwrap_or("")))?;
    if classifiers.is_empty() {
        return Err(CliError::Usage("`classifiers` is empty".into()));
    }
    let mut audit = AuditConfig::new(classifiers);
    audit.lambdas = usage(cfg.f64_list("lambdas"))?.unwrap_or_default();

    let dataset = cfg.get("dataset").unwrap_or_default().to_string();
    let source = match dataset.strip_prefix("synthetic:") {
        Some(profile) => {
            if cfg.contains("spec") {
                return Err(CliError::Usage("`spec` applies to CSV datasets only".into()));
            }
            Source::Synthetic(usage(SyntheticProfile::by_name(profile))?)
        }
        None => {
            let spec = match cfg.get("spec") {
                None => None,
                Some(s) => Some(match PreprocessSpec::builtin(s) {
                    Some(builtin) => usage(builtin)?,
                    None => usage(PreprocessSpec::from_file(Path::new(s)))?,
                }),
            };
            Source::Csv {
                path: PathBuf::from(&dataset),
                spec,
            }
        }
    };
    let oracle = bool_key(&cfg, "oracle_eta")?;
    if oracle && !matches!(source, Source::Synthetic(_)) {
        return Err(CliError::Usage("`oracle_eta` needs a synthetic dataset".into()));
    }
    let svg = bool_key(&cfg, "svg")?;
    let strict = bool_key(&cfg, "strict")?;
    record_threads(&mut cfg, threads);
    Ok((
        cfg,
        Plan {
            source,
            grid,
            audit,
            seed,
            svg,
            strict,
        },
    ))
}

fn load(plan: &Plan) -> CliResult<(Option<GaussianSubgroupModel>, LabeledDataset, LabeledDataset)> {
    Ok(match &plan.source {
        Source::Synthetic(profile) => {
            let (model, train, test) = synthetic_split(profile, plan.seed)?;
            (Some(model), train, test)
        }
        Source::Csv { path, spec: Some(spec) } => {
            let (train, test) = load_csv_split(path, spec, derive_seed(plan.seed, 13))?;
            (None, train, test)
        }
        Source::Csv { path, spec: None } => {
            let ds = read_dataset_csv(path)?;
            let (train, test) = stratified_split(&ds, DEFAULT_TEST_FRACTION, derive_seed(plan.seed, 13))?;
            (None, train, test)
        }
    })
}

fn series_stem(key: &SeriesKey) -> String {
    match key.lambda {
        Some(l) => format!("{}_lambda{}", key.classifier, fmt6(l.0)),
        None => key.classifier.to_string(),
    }
}

pub fn run(args: &AuditArgs, threads: Option<usize>) -> CliResult<ExitCode> {
    let (cfg, mut plan) = resolve(args, threads)?;
    let (model, train, test) = load(&plan)?;
    if bool_key(&cfg, "oracle_eta")? {
        plan.audit.oracle = model;
    }

    let out = &args.out;
    fs::create_dir_all(out).map_err(fairshift_core::Error::from)?;
    let fingerprint = format!("train={} test={}", train.fingerprint(), test.fingerprint());
    let manifest = RunManifest::new("audit", cfg.entries().clone(), fingerprint, plan.seed);
    let hash = manifest.write(&out.join("manifest.json"))?;
    let h = Some(hash.as_str());

    let outcome = run_audit(&train, &test, &plan.grid, &plan.audit)?;
    let records = &outcome.records;
    write_results_csv(&out.join("results.csv"), records, h)?;

    let report = aggregate(records)?;
    write_report_csv(&out.join("report.csv"), &report, records, h)?;
    let table = render_text_table(&report, records);
    fs::write(out.join("report.txt"), format!("# manifest={hash}\n{table}")).map_err(fairshift_core::Error::from)?;

    let keys: BTreeSet<SeriesKey> = report.beta.iter().map(|s| s.key).collect();
    for key in &keys {
        for metric in Metric::ALL {
            let m = heatmap_matrix(records, key.classifier, key.lambda.map(|l| l.0), metric)?;
            let stem = heatmap_stem(&m);
            write_heatmap_csv(&out.join(format!("{stem}.csv")), &m, h)?;
            if plan.svg {
                fs::write(out.join(format!("{stem}.svg")), emit_heatmap_svg(&m))
                    .map_err(fairshift_core::Error::from)?;
            }
        }
        if plan.svg {
            let svg = emit_svg_scatter(records, *key, Metric::Eod, report.baseline.as_ref());
            fs::write(out.join(format!("scatter_{}_eod.svg", series_stem(key))), svg)
                .map_err(fairshift_core::Error::from)?;
        }
    }

    print!("{table}");
    let unclassified: usize = report.beta.iter().map(|s| quadrant_counts(records, s, &report)[4]).sum();
    eprintln!(
        "{} records, {} degenerate, {} unclassified, {} non-converged fits; test hash {}",
        records.len(),
        report.degenerate_records,
        unclassified,
        outcome.nonconverged,
        outcome.test_hash
    );
    if plan.strict && (report.degenerate_records > 0 || unclassified > 0) {
        eprintln!("strict mode: degenerate or unclassified records present");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
