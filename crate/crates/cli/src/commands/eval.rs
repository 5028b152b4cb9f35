use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context};

use warden_core::api::ScoreReport;
use warden_core::bench::load_cases;
use warden_core::evaluator::{render_table, RunRecord, ScoreOptions};

use crate::args::{Cli, EvalCmd};
use crate::exit::Outcome;
use crate::runner::Runner;

fn read_records(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

fn write_outputs(dir: &Path, records: Option<&[RunRecord]>, report: &ScoreReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(records) = records {
        let path = dir.join("records.jsonl");
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?,
        );
        for r in records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    let path = dir.join("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print_report(report: &ScoreReport) {
    let mut rows = vec![("all".to_string(), &report.metrics)];
    for (key, groups) in &report.breakdowns {
        for (name, m) in groups {
            rows.push((format!("{key}: {name}"), m));
        }
    }
    print!("{}", render_table(&rows));
    println!(
        "executable rate: {:.1}% before debugging, {:.1}% after",
        report.executable_rate.before_debug, report.executable_rate.after_debug
    );
    if !report.metrics.undefined.is_empty() {
        println!("undefined (zero denominator, reported as 100): {}", report.metrics.undefined.join(", "));
    }
    if !report.failures.is_empty() {
        eprintln!("guard failures on {} cases: {}", report.failures.len(), report.failures.join(", "));
    }
}

pub fn run(cli: &Cli, cmd: &EvalCmd) -> anyhow::Result<Outcome> {
    match cmd {
        EvalCmd::Run { dataset, kind, out, ea_allow_extras } => {
            let cases = load_cases(dataset, kind.map(Into::into))?;
            if cases.is_empty() {
                bail!("{} holds no cases", dataset.display());
            }
            let runner = Runner::new(&cli.engine.settings()?, cli.server.as_deref())?;
            let reply = runner.eval(cases, ScoreOptions { ea_allow_extras: *ea_allow_extras })?;
            if let Some(dir) = out {
                write_outputs(dir, Some(&reply.records), &reply.report)?;
            }
            print_report(&reply.report);
        }
        EvalCmd::Score { records, out, ea_allow_extras } => {
            let records = read_records(records)?;
            let options = ScoreOptions { ea_allow_extras: *ea_allow_extras };
            let report = match &cli.server {
                Some(_) => Runner::new(&cli.engine.settings()?, cli.server.as_deref())?.score(records, options)?,
                None => ScoreReport::from_records(&records, options)?,
            };
            if let Some(dir) = out {
                write_outputs(dir, None, &report)?;
            }
            print_report(&report);
        }
    }
    Ok(Outcome::Granted)
}
