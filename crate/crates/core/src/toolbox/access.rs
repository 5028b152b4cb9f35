//! Role-based access permissions over the ICU record databases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{normalize_identifier, ResourceSet};

use super::PolicyError;

/// Accessible databases and columns per role. Role keys are normalized
/// (`"general administration"` is stored as `general_administration`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PermissionTable {
    roles: BTreeMap<String, ResourceSet>,
}

impl<'de> Deserialize<'de> for PermissionTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, ResourceSet>::deserialize(deserializer)?;
        let mut table = PermissionTable::new();
        for (role, set) in raw {
            table.insert_role(&role, set).map_err(serde::de::Error::custom)?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessResult {
    Granted,
    Denied { inaccessible: ResourceSet },
}

impl AccessResult {
    pub fn is_granted(&self) -> bool {
        matches!(self, AccessResult::Granted)
    }

    pub fn inaccessible(&self) -> ResourceSet {
        match self {
            AccessResult::Granted => ResourceSet::new(),
            AccessResult::Denied { inaccessible } => inaccessible.clone(),
        }
    }
}

impl PermissionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(text).map_err(|e| PolicyError::Parse(e.to_string()))
    }

    pub fn insert_role(&mut self, role: &str, accessible: ResourceSet) -> Result<(), PolicyError> {
        let key = normalize_identifier(role);
        if key.is_empty() {
            return Err(PolicyError::Invalid("empty role name".into()));
        }
        if self.roles.insert(key.clone(), accessible).is_some() {
            return Err(PolicyError::Invalid(format!("duplicate role {key:?}")));
        }
        Ok(())
    }

    pub fn role(&self, role: &str) -> Option<&ResourceSet> {
        self.roles.get(&normalize_identifier(role))
    }

    pub fn roles(&self) -> impl Iterator<Item = (&str, &ResourceSet)> {
        self.roles.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Human-readable role name (`general_administration` → `general administration`).
    pub fn display_role(role: &str) -> String {
        normalize_identifier(role).replace('_', " ")
    }
}

/// Lists the required (database, column) pairs the role cannot access.
pub fn check_access(
    role: &str,
    required: &ResourceSet,
    table: &PermissionTable,
) -> Result<AccessResult, PolicyError> {
    let accessible = table
        .role(role)
        .ok_or_else(|| PolicyError::UnknownRole(role.to_string()))?;
    let mut inaccessible = ResourceSet::new();
    for (db, col) in required.pairs() {
        if !accessible.contains(db, col) {
            inaccessible.insert(db, col);
        }
    }
    if inaccessible.is_empty() {
        Ok(AccessResult::Granted)
    } else {
        Ok(AccessResult::Denied { inaccessible })
    }
}

/// Columns of the ten ICU databases.
pub const ICU_SCHEMA: &[(&str, &[&str])] = &[
    ("allergy", &["patientunitstayid", "drugname", "allergyname", "allergytime"]),
    (
        "cost",
        &["uniquepid", "patienthealthsystemstayid", "eventtype", "eventid", "chargetime", "cost"],
    ),
    ("diagnosis", &["patientunitstayid", "icd9code", "diagnosisname", "diagnosistime"]),
    (
        "intakeoutput",
        &["patientunitstayid", "cellpath", "celllabel", "cellvaluenumeric", "intakeoutputtime"],
    ),
    ("lab", &["patientunitstayid", "labname", "labresult", "labresulttime"]),
    (
        "medication",
        &["patientunitstayid", "drugname", "dosage", "routeadmin", "drugstarttime", "drugstoptime"],
    ),
    ("microlab", &["patientunitstayid", "culturesite", "organism", "culturetakentime"]),
    (
        "patient",
        &[
            "uniquepid",
            "patienthealthsystemstayid",
            "patientunitstayid",
            "gender",
            "age",
            "ethnicity",
            "hospitalid",
            "wardid",
            "admissionheight",
            "admissionweight",
            "dischargeweight",
            "hospitaladmittime",
            "hospitaladmitsource",
            "unitadmittime",
            "unitdischargetime",
            "hospitaldischargetime",
            "hospitaldischargestatus",
        ],
    ),
    ("treatment", &["patientunitstayid", "treatmentname", "treatmenttime"]),
    (
        "vitalperiodic",
        &[
            "patientunitstayid",
            "temperature",
            "sao2",
            "heartrate",
            "respiration",
            "systemicsystolic",
            "systemicdiastolic",
            "systemicmean",
            "observationtime",
        ],
    ),
];

pub const DEFAULT_ROLES: [&str; 3] = ["physician", "nursing", "general administration"];

fn schema_subset(dbs: &[&str], excluded_columns: &[(&str, &str)]) -> ResourceSet {
    let mut set = ResourceSet::new();
    for (db, cols) in ICU_SCHEMA {
        if !dbs.contains(db) {
            continue;
        }
        for col in *cols {
            if !excluded_columns.contains(&(*db, *col)) {
                set.insert(db, col);
            }
        }
    }
    set
}

/// The bundled three-role table.
pub fn default_permission_table() -> PermissionTable {
    let mut table = PermissionTable::new();
    let physician = schema_subset(
        &[
            "allergy",
            "diagnosis",
            "intakeoutput",
            "lab",
            "medication",
            "microlab",
            "patient",
            "treatment",
            "vitalperiodic",
        ],
        &[("patient", "hospitaladmitsource"), ("patient", "hospitaldischargestatus")],
    );
    let nursing = schema_subset(
        &[
            "allergy",
            "intakeoutput",
            "lab",
            "medication",
            "microlab",
            "patient",
            "treatment",
            "vitalperiodic",
        ],
        &[
            ("patient", "hospitaladmitsource"),
            ("patient", "hospitaldischargestatus"),
            ("patient", "ethnicity"),
            ("microlab", "organism"),
        ],
    );
    let admin = schema_subset(&["cost", "patient", "medication"], &[
        ("medication", "dosage"),
        ("medication", "routeadmin"),
        ("medication", "drugstarttime"),
        ("medication", "drugstoptime"),
    ]);
    table.insert_role("physician", physician).expect("fresh table");
    table.insert_role("nursing", nursing).expect("fresh table");
    table
        .insert_role("general administration", admin)
        .expect("fresh table");
    table
}
