//! On-disk formats: the instance JSON schema, assignment files (integer
//! arrays with -1 for disconnected) and census exports.

use crate::ensemble::EnsembleParams;
use crate::game::{Assignment, Edge, GameError, GameInstance};
use crate::oracle::EquilibriumCensus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    u: usize,
    a: usize,
    w: u32,
    v: u32,
}

/// Instance file: `{"n_users", "n_units", "edges": [{"u","a","w","v"}],
/// "capacities": [..], "p": [..]}` plus an optional echo of the ensemble
/// parameters the instance was generated from.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n_users: usize,
    pub n_units: usize,
    edges: Vec<EdgeRecord>,
    pub capacities: Vec<u32>,
    pub p: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ensemble: Option<EnsembleParams>,
}

impl InstanceFile {
    pub fn from_instance(inst: &GameInstance, ensemble: Option<EnsembleParams>) -> Self {
        InstanceFile {
            n_users: inst.n_users(),
            n_units: inst.n_units(),
            edges: inst
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    u: e.user,
                    a: e.unit,
                    w: e.weight,
                    v: e.value,
                })
                .collect(),
            capacities: inst.capacities().to_vec(),
            p: inst.activity_probs().to_vec(),
            ensemble,
        }
    }

    pub fn into_instance(self) -> Result<GameInstance, GameError> {
        GameInstance::new(
            self.n_users,
            self.n_units,
            self.edges
                .into_iter()
                .map(|r| Edge {
                    user: r.u,
                    unit: r.a,
                    weight: r.w,
                    value: r.v,
                })
                .collect(),
            self.capacities,
            self.p,
        )
    }
}

pub fn write_instance(
    path: &Path,
    inst: &GameInstance,
    ensemble: Option<EnsembleParams>,
) -> Result<(), IoError> {
    let file = InstanceFile::from_instance(inst, ensemble);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<GameInstance, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    Ok(file.into_instance()?)
}

pub fn write_assignment(path: &Path, x: &Assignment) -> Result<(), IoError> {
    std::fs::write(path, serde_json::to_string(&x.to_int_vec())?)?;
    Ok(())
}

pub fn read_assignment(path: &Path) -> Result<Assignment, IoError> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<i64> = serde_json::from_str(&text)?;
    Ok(Assignment::from_int_vec(&raw))
}

#[derive(Debug, Serialize)]
struct CensusFile<'a> {
    count: usize,
    utility_histogram: &'a BTreeMap<i64, usize>,
    equilibria: Vec<Vec<i64>>,
}

pub fn write_census(path: &Path, census: &EquilibriumCensus) -> Result<(), IoError> {
    let file = CensusFile {
        count: census.count,
        utility_histogram: &census.utility_histogram,
        equilibria: census.equilibria.iter().map(|x| x.to_int_vec()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::example_instance;

    #[test]
    fn instance_round_trip() {
        let dir = std::env::temp_dir().join("spg-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("example.json");
        let inst = example_instance();
        write_instance(&path, &inst, None).unwrap();
        let back = read_instance(&path).unwrap();
        assert_eq!(back.edges(), inst.edges());
        assert_eq!(back.capacities(), inst.capacities());
        // Exact schema keys.
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for key in ["n_users", "n_units", "edges", "capacities", "p"] {
            assert!(raw.get(key).is_some(), "missing {key}");
        }
        assert!(raw["edges"][0].get("u").is_some());
        assert!(raw["edges"][0].get("w").is_some());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"n_users":1,"n_units":1,"edges":[],"capacities":[1],"p":[1.0],"bogus":3}"#;
        assert!(serde_json::from_str::<InstanceFile>(text).is_err());
    }

    #[test]
    fn assignment_round_trip_uses_minus_one() {
        let dir = std::env::temp_dir().join("spg-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("assignment.json");
        let mut x = Assignment::empty(3);
        x.choice[1] = crate::game::Choice::Unit(4);
        write_assignment(&path, &x).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "[-1,4,-1]");
        let back = read_assignment(&path).unwrap();
        assert_eq!(back.choice, x.choice);
    }
}
