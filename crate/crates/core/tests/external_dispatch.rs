use std::path::PathBuf;
use std::time::Duration;

use warden_core::bench::{generate_eicu_ac, generate_mind2web_sc, make_bindings};
use warden_core::bridge::canonical::{canonical_program, CanonicalSynthesizer};
use warden_core::gdsl::{execute, Bindings, Engine, ExternalError, ExternalExecutor, GuardrailProgram};
use warden_core::toolbox::{Policies, Registry};
use warden_core::types::ErrorClass;
use warden_core::{seeded_memory, EngineConfig, GuardEngine};

fn worker_cmd() -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_worker.py");
    format!("python3 {}", p.display())
}

fn executor(timeout_ms: u64) -> ExternalExecutor {
    ExternalExecutor::new(worker_cmd(), Duration::from_millis(timeout_ms))
}

#[test]
fn verdicts_match_the_internal_interpreter() {
    let policies = Policies::default();
    let registry = Registry::with_defaults();
    let ex = executor(5_000);
    let mut cases = generate_eicu_ac(21, &policies).unwrap();
    cases.truncate(10);
    let mut web = generate_mind2web_sc(21, &policies).unwrap();
    web.rotate_left(95);
    cases.extend(web.into_iter().take(10));
    assert_eq!(cases.len(), 20);
    for case in &cases {
        let source = canonical_program(case.kind);
        let program = GuardrailProgram::compile(source, &registry).unwrap();
        let bindings = make_bindings(case, &policies).unwrap();
        let internal = execute(program.ast.as_ref().unwrap(), &registry, &bindings).unwrap();
        let external = ex.dispatch(source, &bindings).unwrap();
        assert_eq!(
            serde_json::to_string(&internal).unwrap(),
            serde_json::to_string(&external).unwrap(),
            "{}",
            case.id
        );
    }
}

#[test]
fn error_classes_from_the_worker() {
    let ex = executor(5_000);
    let b = Bindings::new();
    let err = ex.dispatch("let r = check_access(role;", &b).unwrap_err();
    assert_eq!(err.class(), Some(ErrorClass::Parse), "{err}");
    let err = ex.dispatch("let r = check_acces(role, required, permissions);", &b).unwrap_err();
    assert_eq!(err.class(), Some(ErrorClass::UnknownFunction), "{err}");
    let err = ex.dispatch("verdict grant", &b).unwrap_err();
    assert_eq!(err.class(), Some(ErrorClass::Runtime), "{err}");
}

#[test]
fn timeout_kills_and_respawns_the_worker() {
    let ex = executor(300);
    let err = ex.dispatch("sleep(1)", &Bindings::new()).unwrap_err();
    assert!(matches!(err, ExternalError::Timeout(300)), "{err}");
    assert_eq!(err.class(), Some(ErrorClass::Timeout));
    let err = ex.dispatch("check_acces(x)", &Bindings::new()).unwrap_err();
    assert_eq!(err.class(), Some(ErrorClass::UnknownFunction), "{err}");
}

#[test]
fn protocol_violations_and_crashes() {
    let ex = executor(5_000);
    let err = ex.dispatch("garble()", &Bindings::new()).unwrap_err();
    assert!(matches!(err, ExternalError::Protocol(_)), "{err}");
    assert_eq!(err.class(), Some(ErrorClass::Protocol));
    let err = ex.dispatch("crash()", &Bindings::new()).unwrap_err();
    assert!(matches!(err, ExternalError::Crashed(_)), "{err}");
}

#[test]
fn pipeline_runs_on_the_external_engine() {
    let policies = Policies::default();
    let config = EngineConfig { engine: Engine::ExternalInterpreter, ..Default::default() };
    let engine = GuardEngine::new(
        config,
        policies.clone(),
        seeded_memory(&policies),
        std::sync::Arc::new(CanonicalSynthesizer::new(policies.clone())),
    )
    .unwrap()
    .with_external(executor(5_000));
    let case = warden_core::bench::smoke_cases().remove(0);
    let run = engine.guard_case(&case).unwrap();
    let verdict = run.outcome.verdict().unwrap();
    assert_eq!((verdict.label, verdict.details.clone()), (case.label, case.truth_details));
}

#[test]
fn missing_external_engine_is_an_error() {
    let policies = Policies::default();
    let config = EngineConfig { engine: Engine::ExternalInterpreter, ..Default::default() };
    let engine = GuardEngine::new(
        config,
        policies.clone(),
        seeded_memory(&policies),
        std::sync::Arc::new(CanonicalSynthesizer::new(policies)),
    )
    .unwrap();
    let case = warden_core::bench::smoke_cases().remove(0);
    assert!(matches!(
        engine.guard_case(&case),
        Err(warden_core::EngineError::Guard(warden_core::gdsl::GuardError::EngineUnavailable(_)))
    ));
}
