//! The bundled digital-twin fixtures.
//!
//! Each fixture is an asset, a canonical scenario and a reference trajectory
//! (the scenario simulated at a tenth of its step, sampled every
//! [`REFERENCE_INTERVAL`] seconds). The files are compiled in; setting
//! `ARTJOINT_FIXTURES` to a directory makes every loader read from there
//! instead, using the same file names.

use std::borrow::Cow;
use std::env;
use std::fs;
use std::path::PathBuf;

use crate::asset::{parse_asset, Assembly, AssetError};
use crate::scenario::{from_csv_str, CsvError, Scenario, ScenarioError, Trajectory};

/// Environment variable overriding the fixture directory.
pub const FIXTURES_ENV: &str = "ARTJOINT_FIXTURES";
/// Sample spacing of the stored reference trajectories, in seconds.
pub const REFERENCE_INTERVAL: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    /// One line on what the fixture exercises.
    pub summary: &'static str,
    embedded_asset: &'static str,
    embedded_scenario: &'static str,
    embedded_reference: &'static str,
}

macro_rules! fixture {
    ($name:literal, $summary:literal) => {
        Fixture {
            name: $name,
            summary: $summary,
            embedded_asset: include_str!(concat!("../fixtures/", $name, ".artjoint.json")),
            embedded_scenario: include_str!(concat!("../fixtures/", $name, ".scenario.json")),
            embedded_reference: include_str!(concat!("../fixtures/", $name, ".reference.csv")),
        }
    };
}

static FIXTURES: [Fixture; 4] = [
    fixture!("drawer", "spring-returned drawer with stiction, pulled by a constant force"),
    fixture!("microwave", "latched door released by a push button"),
    fixture!("oven", "door closer that snaps the door shut below its latch threshold"),
    fixture!("trashcan", "open lid closed by a button, with a point agent and reward"),
];

pub fn all() -> &'static [Fixture] {
    &FIXTURES
}

pub fn get(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|f| f.name)
}

/// Directory named by `ARTJOINT_FIXTURES`, if set.
pub fn override_dir() -> Option<PathBuf> {
    env::var_os(FIXTURES_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Where the fixture files live in the source tree.
pub fn source_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Reads `file` from the override directory, or returns the embedded copy.
fn resolve(file: &str, embedded: &'static str) -> std::io::Result<Cow<'static, str>> {
    match override_dir() {
        Some(dir) => fs::read_to_string(dir.join(file)).map(Cow::Owned),
        None => Ok(Cow::Borrowed(embedded)),
    }
}

fn embedded_by_file(file: &str) -> Option<&'static str> {
    FIXTURES.iter().find_map(|f| {
        if file == f.asset_file() {
            Some(f.embedded_asset)
        } else if file == f.scenario_file() {
            Some(f.embedded_scenario)
        } else {
            None
        }
    })
}

impl Fixture {
    pub fn asset_file(&self) -> String {
        format!("{}.artjoint.json", self.name)
    }

    pub fn scenario_file(&self) -> String {
        format!("{}.scenario.json", self.name)
    }

    pub fn reference_file(&self) -> String {
        format!("{}.reference.csv", self.name)
    }

    pub fn asset_text(&self) -> std::io::Result<Cow<'static, str>> {
        resolve(&self.asset_file(), self.embedded_asset)
    }

    pub fn scenario_text(&self) -> std::io::Result<Cow<'static, str>> {
        resolve(&self.scenario_file(), self.embedded_scenario)
    }

    pub fn assembly(&self) -> Result<Assembly, AssetError> {
        let text = self.asset_text().map_err(|e| AssetError::Invalid {
            path: self.asset_file(),
            message: e.to_string(),
        })?;
        parse_asset(&text)
    }

    /// The canonical scenario. Asset references resolve against the other
    /// fixture files.
    pub fn scenario(&self) -> Result<Scenario, ScenarioError> {
        let text = self.scenario_text().map_err(|e| ScenarioError::Io {
            path: self.scenario_file(),
            message: e.to_string(),
        })?;
        Scenario::from_str_with(&text, |file| {
            let embedded = embedded_by_file(file).unwrap_or("");
            match resolve(file, embedded) {
                Ok(t) if !t.is_empty() => Ok(t.into_owned()),
                Ok(_) => Err(ScenarioError::Io {
                    path: file.to_owned(),
                    message: "not a fixture file".into(),
                }),
                Err(e) => Err(ScenarioError::Io {
                    path: file.to_owned(),
                    message: e.to_string(),
                }),
            }
        })
    }

    pub fn reference(&self) -> Result<Trajectory, CsvError> {
        let text = resolve(&self.reference_file(), self.embedded_reference).map_err(|source| CsvError::Io {
            path: self.reference_file(),
            source,
        })?;
        from_csv_str(&text)
    }
}
