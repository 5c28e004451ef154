//! JSON Schemas (draft 2020-12) for every file a run directory holds.

use schemars::{schema_for, Schema};
use serde_json::Value;

use super::{
    FrontFile, Manifest, RunConfig, ARCH_FILE, CACHE_FILE, CONFIG_FILE, MANIFEST_FILE, PARTITION_FILE, RANKING_FILE,
};
use crate::arch::{ArchitectureSpec, SubnetPartition};
use crate::eval::cache_file_schema;
use crate::gpir::{JointScheme, Ranking};
use crate::space::SpaceReport;

/// Artifact kinds with a published schema, by name.
pub const ARTIFACTS: [&str; 9] = [
    "config",
    "arch",
    "partition",
    "front",
    "ranking",
    "scheme",
    "eval-cache",
    "manifest",
    "space",
];

pub fn artifact_schema(kind: &str) -> Option<Schema> {
    Some(match kind {
        "config" => schema_for!(RunConfig),
        "arch" => schema_for!(ArchitectureSpec),
        "partition" => schema_for!(SubnetPartition),
        "front" => schema_for!(FrontFile),
        "ranking" => schema_for!(Ranking),
        "scheme" => schema_for!(JointScheme),
        "eval-cache" => cache_file_schema(),
        "manifest" => schema_for!(Manifest),
        "space" => schema_for!(SpaceReport),
        _ => return None,
    })
}

/// Artifact kind of a run-directory file name, if it is a JSON artifact.
pub fn kind_of_file(name: &str) -> Option<&'static str> {
    let fixed = [
        (CONFIG_FILE, "config"),
        (ARCH_FILE, "arch"),
        (PARTITION_FILE, "partition"),
        (RANKING_FILE, "ranking"),
        (CACHE_FILE, "eval-cache"),
        (MANIFEST_FILE, "manifest"),
    ];
    if let Some((_, kind)) = fixed.iter().find(|(f, _)| *f == name) {
        return Some(kind);
    }
    let stem = name.strip_suffix(".json")?;
    if stem.strip_prefix("front_").is_some_and(|i| i.parse::<usize>().is_ok()) {
        Some("front")
    } else if stem.strip_prefix("scheme_").is_some_and(|t| t.parse::<f64>().is_ok()) {
        Some("scheme")
    } else {
        None
    }
}

pub fn schema_for_file(name: &str) -> Option<Value> {
    kind_of_file(name).and_then(artifact_schema).map(Value::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_has_a_schema() {
        for kind in ARTIFACTS {
            let s = artifact_schema(kind).unwrap();
            assert!(s.get("$schema").is_some(), "{kind}");
        }
        assert!(artifact_schema("nope").is_none());
    }

    #[test]
    fn file_names_map_to_kinds() {
        assert_eq!(kind_of_file("front_12.json"), Some("front"));
        assert_eq!(kind_of_file("scheme_0.5.json"), Some("scheme"));
        assert_eq!(kind_of_file("manifest.json"), Some("manifest"));
        assert_eq!(kind_of_file("report.md"), None);
        assert_eq!(kind_of_file("front_x.json"), None);
    }

    fn validate(schema: &Value, doc: &Value) -> Result<(), String> {
        let validator = jsonschema::validator_for(schema).map_err(|e| e.to_string())?;
        let errors: Vec<String> = validator
            .iter_errors(doc)
            .map(|e| format!("{} at {}", e, e.instance_path()))
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors.join("; "))
        }
    }

    #[test]
    fn run_directory_validates() {
        use crate::moo::EvolutionConfig;
        use crate::pipeline::Pipeline;

        let mut config = RunConfig::for_preset("resnet56");
        config.targets = vec![0.3, 0.99];
        config.evolution = Some(EvolutionConfig {
            population_size: 8,
            offspring_per_iteration: 4,
            iterations: 2,
            ..Default::default()
        });
        let dir = tempfile::tempdir().unwrap();
        Pipeline::new(config, Some(dir.path().to_path_buf()))
            .unwrap()
            .run()
            .unwrap();
        let mut checked = Vec::new();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name().to_string_lossy().into_owned();
            if !name.ends_with(".json") {
                continue;
            }
            let schema = schema_for_file(&name).unwrap_or_else(|| panic!("no schema for {name}"));
            let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join(&name)).unwrap()).unwrap();
            validate(&schema, &doc).unwrap_or_else(|e| panic!("{name}: {e}"));
            checked.push(kind_of_file(&name).unwrap());
        }
        checked.sort();
        checked.dedup();
        assert_eq!(checked.len(), 8, "{checked:?}");
    }

    #[test]
    fn schemas_reject_malformed_documents() {
        let front = Value::from(artifact_schema("front").unwrap());
        let bad = serde_json::json!({"format_version": 1, "subnet": -1});
        assert!(validate(&front, &bad).is_err());
        let arch = Value::from(artifact_schema("arch").unwrap());
        let bad = serde_json::json!({"format_version": 1, "name": "x", "input": [8], "num_classes": 10, "blocks": []});
        assert!(validate(&arch, &bad).is_err());
    }

    #[test]
    fn space_report_validates() {
        let arch = crate::arch::build_preset("vgg16", 10, 32).unwrap();
        let part = crate::arch::partition_by_resolution(&arch);
        let report = SpaceReport::new(&arch, &part, 20, 10, 5).unwrap();
        let schema = Value::from(artifact_schema("space").unwrap());
        validate(&schema, &serde_json::to_value(&report).unwrap()).unwrap();
    }
}
