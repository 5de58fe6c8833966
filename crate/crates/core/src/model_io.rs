//! JSON model definitions.
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "classes": [
//!     { "prior": 0.5, "components": [ { "mean": [0.0], "variance": 1.0, "weight": 1.0 } ] },
//!     { "prior": 0.5, "components": [
//!         { "mean": [1.0], "variance": 1.0, "weight": 0.5 },
//!         { "mean": [-1.0], "variance": 1.0, "weight": 0.5 } ] }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, GaussianComponent, MixtureModel};

/// Name of the bundled two-class model.
pub const PAPER_PRESET: &str = "paper-gmm";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dimension: usize,
    pub classes: Vec<ClassEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub prior: f64,
    pub components: Vec<ComponentEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    pub mean: Vec<f64>,
    pub variance: f64,
    pub weight: f64,
}

impl ModelFile {
    pub fn from_model(model: &ClassConditionalModel<f64>) -> Self {
        let classes = model
            .class_mixtures()
            .iter()
            .zip(model.priors())
            .map(|(mix, &prior)| ClassEntry {
                prior,
                components: mix
                    .components()
                    .iter()
                    .map(|k| ComponentEntry {
                        mean: k.mean.clone(),
                        variance: k.variance,
                        weight: k.weight,
                    })
                    .collect(),
            })
            .collect();
        Self {
            dimension: model.dim(),
            classes,
        }
    }

    pub fn build(&self) -> Result<ClassConditionalModel<f64>> {
        if self.dimension == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        let mut mixtures = Vec::with_capacity(self.classes.len());
        for (c, class) in self.classes.iter().enumerate() {
            let mut components = Vec::with_capacity(class.components.len());
            for (k, entry) in class.components.iter().enumerate() {
                let at = || format!("classes[{c}].components[{k}]");
                if entry.mean.len() != self.dimension {
                    return Err(Error::InvalidModel(format!(
                        "{}: mean has length {}, dimension is {}",
                        at(),
                        entry.mean.len(),
                        self.dimension
                    )));
                }
                let component = GaussianComponent::new(entry.mean.clone(), entry.variance, entry.weight)
                    .map_err(|e| Error::InvalidModel(format!("{}: {e}", at())))?;
                components.push(component);
            }
            let mixture =
                MixtureModel::new(components).map_err(|e| Error::InvalidModel(format!("classes[{c}]: {e}")))?;
            mixtures.push(mixture);
        }
        ClassConditionalModel::new(self.classes.iter().map(|c| c.prior).collect(), mixtures)
    }
}

/// Parses a model document; `origin` names the source in diagnostics.
pub fn parse_model(text: &str, origin: &str) -> Result<ClassConditionalModel<f64>> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ParseFile {
        path: origin.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.build()
}

/// Loads a preset by name or a model file by path.
pub fn load_model(source: &str) -> Result<ClassConditionalModel<f64>> {
    if source == PAPER_PRESET {
        return Ok(ClassConditionalModel::paper_gmm());
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, source)
}

pub fn model_to_json(model: &ClassConditionalModel<f64>) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips_through_json() {
        let preset = ClassConditionalModel::<f64>::paper_gmm();
        let text = model_to_json(&preset);
        let back = parse_model(&text, "inline").unwrap();
        assert_eq!(ModelFile::from_model(&back), ModelFile::from_model(&preset));
        assert_eq!(
            ModelFile::from_model(&load_model(PAPER_PRESET).unwrap()),
            ModelFile::from_model(&preset)
        );
    }

    #[test]
    fn syntax_errors_report_line_and_column() {
        let text = "{\n  \"dimension\": 1,\n  \"classes\": [ oops ]\n}";
        match parse_model(text, "bad.json") {
            Err(Error::ParseFile { path, line, column, .. }) => {
                assert_eq!(path, std::path::PathBuf::from("bad.json"));
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = "{\"dimension\": 1, \"classes\": [], \"extra\": 3}";
        assert!(matches!(parse_model(text, "x"), Err(Error::ParseFile { line: 1, .. })));
    }

    #[test]
    fn semantic_errors_name_the_component() {
        let text = r#"{"dimension": 2, "classes": [
            {"prior": 1.0, "components": [{"mean": [0.0], "variance": 1.0, "weight": 1.0}]}]}"#;
        let err = parse_model(text, "x").unwrap_err().to_string();
        assert!(err.contains("classes[0].components[0]"), "{err}");
        let text = r#"{"dimension": 1, "classes": [
            {"prior": 1.0, "components": [{"mean": [0.0], "variance": -1.0, "weight": 1.0}]}]}"#;
        assert!(parse_model(text, "x").is_err());
        let text = r#"{"dimension": 1, "classes": [
            {"prior": 0.7, "components": [{"mean": [0.0], "variance": 1.0, "weight": 1.0}]}]}"#;
        assert!(parse_model(text, "x").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_model("/nonexistent/model.json"), Err(Error::Io(_))));
    }
}
