use anyhow::bail;

use warden_core::bench::{
    balance_mind2web, dataset_stats, generate_eicu_ac, generate_mind2web_raw, generate_mind2web_sc, label_case,
    load_cases, save_cases, smoke_cases,
};
use warden_core::toolbox::Policies;

use crate::args::{BenchCmd, Cli, SuiteArg};
use crate::exit::Outcome;

pub fn run(cli: &Cli, cmd: &BenchCmd) -> anyhow::Result<Outcome> {
    let policies = Policies::load(cli.engine.permissions.as_deref(), cli.engine.rules.as_deref())?;
    match cmd {
        BenchCmd::Build { suite, out } => {
            let cases = match suite {
                SuiteArg::EicuAc => generate_eicu_ac(cli.seed, &policies)?,
                SuiteArg::Mind2webSc => generate_mind2web_sc(cli.seed, &policies)?,
                SuiteArg::Mind2webRaw => generate_mind2web_raw(cli.seed, &policies)?,
                SuiteArg::Smoke => smoke_cases(),
            };
            save_cases(&cases, out)?;
            eprintln!("wrote {} cases to {}", cases.len(), out.display());
        }
        BenchCmd::Stats { dataset, json } => {
            let stats = dataset_stats(&load_cases(dataset, None)?, &policies);
            if *json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                println!("cases: {} (label 0: {}, label 1: {})", stats.total, stats.labels[0], stats.labels[1]);
                println!("unique queries: {}", stats.unique_queries);
                for (group, [g0, g1]) in &stats.groups {
                    println!("  {group:<24} {g0:>5} {g1:>5}");
                }
                for (rule, n) in &stats.rule_violations {
                    println!("  violations of rule {rule}: {n}");
                }
            }
        }
        BenchCmd::Validate { dataset } => {
            let cases = load_cases(dataset, None)?;
            let mut problems = 0;
            for case in &cases {
                let result = case.validate().and_then(|_| label_case(case, &policies).map_err(|e| e.to_string()));
                match result {
                    Err(message) => {
                        problems += 1;
                        println!("{}: {message}", case.id);
                    }
                    Ok((label, details)) if label != case.label || details != case.truth_details => {
                        problems += 1;
                        println!("{}: stored label disagrees with the policies", case.id);
                    }
                    Ok(_) => {}
                }
            }
            if problems > 0 {
                bail!("{problems} of {} cases are invalid", cases.len());
            }
            println!("{} cases valid", cases.len());
        }
        BenchCmd::Balance { input, out, target } => {
            let balanced = balance_mind2web(&load_cases(input, None)?, cli.seed, *target, &policies)?;
            save_cases(&balanced, out)?;
            eprintln!("wrote {} cases to {}", balanced.len(), out.display());
        }
    }
    Ok(Outcome::Granted)
}
