//! The `verify` subcommand: one JSON object per line on stdout.

use std::fs;
use std::process::ExitCode;

use fairshift_core::theory::verify::{self, CheckKind, VerifyOptions};
use fairshift_core::report::RunManifest;

use crate::settings::{merge, record_threads, usage, CliError, CliResult};
use crate::VerifyArgs;

pub fn run(args: &VerifyArgs, threads: Option<usize>) -> CliResult<ExitCode> {
    let mut cfg = merge(
        args.config.as_deref(),
        &[
            ("check", args.check.clone()),
            ("cases", args.cases.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("alpha", args.alpha.map(|v| v.to_string())),
            ("beta", args.beta.map(|v| v.to_string())),
            ("eps", args.eps.map(|v| v.to_string())),
            ("delta", args.delta.map(|v| v.to_string())),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ],
    )?;
    let check: CheckKind = match cfg.get("check") {
        Some(c) => usage(c.parse())?,
        None => return Err(CliError::Usage("`--check` is required".into())),
    };
    let mut opts = VerifyOptions::new(check);
    if let Some(v) = usage(cfg.parse_value("cases"))? {
        opts.cases = v;
    }
    if let Some(v) = usage(cfg.parse_value("seed"))? {
        opts.seed = v;
    }
    for (key, slot) in [
        ("alpha", &mut opts.alpha),
        ("beta", &mut opts.beta),
        ("eps", &mut opts.eps),
        ("delta", &mut opts.delta),
    ] {
        if let Some(v) = usage(cfg.parse_value(key))? {
            *slot = v;
        }
    }
    cfg.insert("check", check.as_str());
    cfg.insert("cases", opts.cases.to_string());
    cfg.insert("seed", opts.seed.to_string());
    cfg.insert("alpha", opts.alpha.to_string());
    cfg.insert("beta", opts.beta.to_string());
    cfg.insert("eps", opts.eps.to_string());
    cfg.insert("delta", opts.delta.to_string());
    record_threads(&mut cfg, threads);

    let hash = match &args.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(fairshift_core::Error::from)?;
            let m = RunManifest::new("verify", cfg.entries().clone(), "none".into(), opts.seed);
            Some(m.write(&out.join("manifest.json"))?)
        }
        None => None,
    };

    let outcome = match verify::run(&opts) {
        Ok(o) => o,
        // Parameter checks inside the runner are still usage problems.
        Err(e @ fairshift_core::Error::InvalidParameter { .. }) => return Err(CliError::Usage(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    for line in &outcome.lines {
        text.push_str(&line.to_string());
        text.push('\n');
    }
    print!("{text}");
    if let (Some(out), Some(hash)) = (&args.out, hash) {
        fs::write(out.join("verify.jsonl"), text).map_err(fairshift_core::Error::from)?;
        eprintln!("manifest {hash}");
    }
    eprintln!(
        "{}: {} of {} lines failed",
        check,
        outcome.failed,
        outcome.lines.len()
    );
    Ok(if outcome.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
