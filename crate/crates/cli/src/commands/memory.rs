use anyhow::{bail, Context};

use warden_core::gdsl::{extract_source, GuardrailProgram};
use warden_core::memory::NewEntry;
use warden_core::planner::parse_plan;
use warden_core::toolbox::{Policies, Registry};
use warden_core::{seeded_memory, RequestKind};

use crate::args::{Cli, MemoryCmd};
use crate::exit::Outcome;
use crate::runner::{add_to_file, Runner};

pub fn run(cli: &Cli, cmd: &MemoryCmd) -> anyhow::Result<Outcome> {
    match cmd {
        MemoryCmd::List { kind, json } => {
            let runner = Runner::new(&cli.engine.settings()?, cli.server.as_deref())?;
            let tag = kind.map(|k| RequestKind::from(k).as_str());
            for e in runner.memory()?.iter().filter(|e| tag.is_none_or(|t| e.benchmark_tag == t)) {
                if *json {
                    println!("{}", serde_json::to_string(e)?);
                } else {
                    println!("{:>4}  {:<14}  {}", e.id, e.benchmark_tag, e.agent_input.lines().next().unwrap_or(""));
                }
            }
        }
        MemoryCmd::Add { kind, input, output, plan, program } => {
            let plan_text = std::fs::read_to_string(plan).with_context(|| format!("reading {}", plan.display()))?;
            let text = std::fs::read_to_string(program).with_context(|| format!("reading {}", program.display()))?;
            let source = extract_source(&text);
            let plan = parse_plan(&plan_text).with_context(|| format!("parsing the plan in {}", plan.display()))?;
            GuardrailProgram::compile(&source, &Registry::with_defaults())
                .with_context(|| format!("checking the program in {}", program.display()))?;
            let entry = NewEntry {
                agent_input: input.clone(),
                agent_output: output.clone(),
                plan,
                program_source: source,
                benchmark_tag: RequestKind::from(*kind).as_str().to_string(),
            };
            let id = match (&cli.server, &cli.engine.memory) {
                (Some(_), _) => Runner::new(&cli.engine.settings()?, cli.server.as_deref())?
                    .add_remote(&entry)?
                    .expect("remote runner"),
                (None, Some(path)) => add_to_file(path, entry)?,
                (None, None) => bail!("memory add needs --memory <path> or --server <url>"),
            };
            println!("{id}");
        }
        MemoryCmd::Seed { force } => {
            let Some(path) = &cli.engine.memory else {
                bail!("memory seed needs --memory <path>");
            };
            if path.exists() && !force {
                bail!("{} exists; pass --force to overwrite", path.display());
            }
            let policies = Policies::load(cli.engine.permissions.as_deref(), cli.engine.rules.as_deref())?;
            let store = seeded_memory(&policies);
            store.save(path)?;
            eprintln!("wrote {} demonstrations to {}", store.len(), path.display());
        }
    }
    Ok(Outcome::Granted)
}
