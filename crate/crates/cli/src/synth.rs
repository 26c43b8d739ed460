//! The `synth` subcommand: sampled train/test CSVs plus a metadata sidecar.

use std::fs;
use std::process::ExitCode;

use fairshift_core::audit::synthetic_split;
use fairshift_core::config::KvConfig;
use fairshift_core::preprocess::{write_dataset_csv, write_sidecar};
use fairshift_core::report::RunManifest;
use fairshift_core::synthetic::SyntheticProfile;

use crate::settings::{default_to, merge, record_threads, usage, CliResult};
use crate::SynthArgs;

pub const SIDECAR: &str = "synth.meta";

pub fn run(args: &SynthArgs, threads: Option<usize>) -> CliResult<ExitCode> {
    let mut cfg = merge(
        args.config.as_deref(),
        &[
            ("profile", args.profile.clone()),
            ("seed", args.seed.map(|v| v.to_string())),
            ("out", Some(args.out.display().to_string())),
        ],
    )?;
    default_to(&mut cfg, "profile", "desk");
    default_to(&mut cfg, "seed", "0");
    let profile = usage(SyntheticProfile::by_name(cfg.get("profile").unwrap_or_default()))?;
    let seed: u64 = usage(cfg.parse_value("seed"))?.unwrap_or(0);
    record_threads(&mut cfg, threads);

    let (model, train, test) = synthetic_split(&profile, seed)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(fairshift_core::Error::from)?;
    let fingerprint = format!("train={} test={}", train.fingerprint(), test.fingerprint());
    let hash = RunManifest::new("synth", cfg.entries().clone(), fingerprint, seed).write(&out.join("manifest.json"))?;
    write_dataset_csv(&train, &out.join("train.csv"))?;
    write_dataset_csv(&test, &out.join("test.csv"))?;

    let mut meta = KvConfig::default();
    meta.insert("profile", cfg.get("profile").unwrap_or_default());
    meta.insert("dim", model.dim().to_string());
    meta.insert("sigma", model.sigma().to_string());
    meta.insert("priors", model.priors().0.map(|p| p.to_string()).join(","));
    meta.insert("seed", seed.to_string());
    meta.insert("n_train", train.len().to_string());
    meta.insert("n_test", test.len().to_string());
    meta.insert("manifest", hash);
    write_sidecar(&out.join(SIDECAR), &meta)?;
    eprintln!("wrote {} train and {} test rows to {}", train.len(), test.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
