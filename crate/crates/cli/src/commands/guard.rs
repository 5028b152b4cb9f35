use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::json;

use warden_core::api::GuardBody;
use warden_core::bench::{parse_cases, GuardCase};
use warden_core::evaluator::RunRecord;
use warden_core::gdsl::GuardOutcome;
use warden_core::types::{AgentIo, StructuredIo};

use crate::args::{Cli, GuardArgs};
use crate::exit::Outcome;
use crate::runner::{GuardResult, Runner};

/// Reads a case file holding JSONL cases or one (possibly pretty-printed)
/// JSON case.
fn read_case(path: &Path, id: Option<&str>) -> anyhow::Result<GuardCase> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let shown = path.display().to_string();
    let cases = match parse_cases(BufReader::new(text.as_bytes()), None, &shown) {
        Ok(cases) => cases,
        Err(jsonl) => match serde_json::from_str::<GuardCase>(&text) {
            Ok(case) => vec![case],
            Err(_) => return Err(jsonl).with_context(|| format!("parsing {shown}")),
        },
    };
    match id {
        Some(id) => cases
            .into_iter()
            .find(|c| c.id == id)
            .with_context(|| format!("{shown} has no case with id {id:?}")),
        None if cases.len() == 1 => Ok(cases.into_iter().next().expect("one case")),
        None => bail!("{shown} holds {} cases; choose one with --id", cases.len()),
    }
}

pub fn run(cli: &Cli, args: &GuardArgs) -> anyhow::Result<Outcome> {
    let (body, case) = match (&args.case, args.kind, &args.input) {
        (Some(path), _, _) => {
            let case = read_case(path, args.id.as_deref())?;
            (GuardBody::from(&case), Some(case))
        }
        (None, Some(kind), Some(input)) => {
            let structured = match &args.facts {
                Some(text) => Some(serde_json::from_str::<StructuredIo>(text).context("parsing --facts")?),
                None => None,
            };
            let io = AgentIo { input_text: input.clone(), output_log: args.output.clone(), structured };
            (GuardBody::new(kind.into(), io), None)
        }
        _ => bail!("give either --case or --kind with --input"),
    };
    body.agent_io.validate()?;
    let runner = Runner::new(&cli.engine.settings()?, cli.server.as_deref())?;
    match runner.guard(&body)? {
        GuardResult::Verdict(reply) => {
            let record = case
                .as_ref()
                .map(|c| RunRecord::from_outcome(c, &GuardOutcome::Verdict(reply.verdict.clone())));
            if !args.json {
                print!("{}", reply.rendered);
            }
            println!("{}", json!({ "verdict": reply.verdict, "record": record }));
            Ok(if reply.verdict.is_denied() { Outcome::Denied } else { Outcome::Granted })
        }
        GuardResult::Failure { message, exec_stats } => {
            let record = match (&case, exec_stats) {
                (Some(c), Some(stats)) => Some(RunRecord::from_outcome(
                    c,
                    &GuardOutcome::Failure { exec_stats: stats, message: message.clone() },
                )),
                _ => None,
            };
            eprintln!("guard failure: {message}");
            println!("{}", json!({ "failure": message, "exec_stats": exec_stats, "record": record }));
            Ok(Outcome::GuardFailure)
        }
    }
}
