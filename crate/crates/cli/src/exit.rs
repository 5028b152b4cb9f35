//! Process exit codes.

use warden_client::ClientError;
use warden_core::bench::BenchError;
use warden_core::bridge::BackendError;
use warden_core::gdsl::GuardError;
use warden_core::memory::MemoryError;
use warden_core::planner::PlanningError;
use warden_core::toolbox::PolicyError;
use warden_core::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// A granted verdict, or any other command that succeeded.
    Granted,
    Denied,
    GuardFailure,
    Config,
    Io,
    Backend,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Self::Granted => 0,
            Self::Denied => 1,
            Self::GuardFailure => 2,
            Self::Config => 3,
            Self::Io => 4,
            Self::Backend => 5,
        }
    }
}

fn backend(err: &BackendError) -> Outcome {
    match err {
        BackendError::Config(_) => Outcome::Config,
        _ => Outcome::Backend,
    }
}

fn memory(err: &MemoryError) -> Outcome {
    match err {
        MemoryError::Io { .. } => Outcome::Io,
        _ => Outcome::Config,
    }
}

fn policy(err: &PolicyError) -> Outcome {
    match err {
        PolicyError::Io { .. } => Outcome::Io,
        _ => Outcome::Config,
    }
}

fn engine(err: &EngineError) -> Outcome {
    match err {
        EngineError::Guard(GuardError::Backend(e)) | EngineError::Guard(GuardError::Planning(PlanningError::Backend(e))) => {
            backend(e)
        }
        EngineError::Guard(GuardError::EngineUnavailable(_)) => Outcome::Backend,
        EngineError::Guard(GuardError::Planning(PlanningError::Unparseable { .. })) => Outcome::GuardFailure,
        EngineError::Guard(GuardError::Memory(e)) | EngineError::Memory(e) => memory(e),
        EngineError::Backend(e) => backend(e),
        EngineError::Policy(e) => policy(e),
        EngineError::Guard(GuardError::Config(_)) | EngineError::UnknownPolicy { .. } | EngineError::Config(_) => {
            Outcome::Config
        }
    }
}

fn client(err: &ClientError) -> Outcome {
    match err {
        ClientError::Transport(_) => Outcome::Backend,
        ClientError::Api { status: 503, .. } => Outcome::Backend,
        ClientError::Api { body, .. } if body.code == warden_core::api::CODE_GUARD_FAILURE => Outcome::GuardFailure,
        ClientError::Api { status: 500.., .. } | ClientError::Decode(_) => Outcome::Backend,
        ClientError::Api { .. } | ClientError::BadUrl(_) => Outcome::Config,
    }
}

/// The outcome class of a failed command.
pub fn classify(err: &anyhow::Error) -> Outcome {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<EngineError>() {
            return engine(e);
        }
        if let Some(e) = cause.downcast_ref::<ClientError>() {
            return client(e);
        }
        if let Some(e) = cause.downcast_ref::<BackendError>() {
            return backend(e);
        }
        if let Some(e) = cause.downcast_ref::<MemoryError>() {
            return memory(e);
        }
        if let Some(e) = cause.downcast_ref::<PolicyError>() {
            return policy(e);
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return match e {
                BenchError::Io { .. } => Outcome::Io,
                BenchError::Policy(p) => policy(p),
                _ => Outcome::Config,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Outcome::Io;
        }
    }
    Outcome::Config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let all = [
            Outcome::Granted,
            Outcome::Denied,
            Outcome::GuardFailure,
            Outcome::Config,
            Outcome::Io,
            Outcome::Backend,
        ];
        let codes: std::collections::BTreeSet<u8> = all.iter().map(|o| o.code()).collect();
        assert_eq!(codes.into_iter().collect::<Vec<_>>(), [0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn errors_map_to_classes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(classify(&anyhow::Error::new(io).context("reading x")), Outcome::Io);
        let net = EngineError::Guard(GuardError::Backend(BackendError::Network("refused".into())));
        assert_eq!(classify(&net.into()), Outcome::Backend);
        let planning = EngineError::Guard(GuardError::Planning(PlanningError::Backend(BackendError::Status {
            status: 500,
            body: String::new(),
        })));
        assert_eq!(classify(&planning.into()), Outcome::Backend);
        let policy = EngineError::Policy(PolicyError::UnknownRole("janitor".into()));
        assert_eq!(classify(&policy.into()), Outcome::Config);
        let missing = BackendError::Config("no fixtures".into());
        assert_eq!(classify(&anyhow::Error::new(missing)), Outcome::Config);
        assert_eq!(classify(&anyhow::anyhow!("bad flag")), Outcome::Config);
        let body = warden_core::api::ErrorBody {
            code: warden_core::api::CODE_GUARD_FAILURE.into(),
            message: "cap".into(),
            exec_stats: None,
        };
        assert_eq!(classify(&ClientError::Api { status: 500, body }.into()), Outcome::GuardFailure);
    }
}
