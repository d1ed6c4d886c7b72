use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DecodeConfig, MarginalConfig, Method};
use crate::labelspace::Taxonomy;
use crate::model::{load_table_model, CachedModel, LanguageModel, RemoteModel};

/// Settings for one evaluation run. Loadable from a JSON document; every
/// field except `model` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Path to a table-model document, or an `http(s)://` server root.
    pub model: String,
    /// JSON list of label codes; `S1`…`S14` when absent.
    pub taxonomy: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub decode: DecodeConfig,
    pub marginal: MarginalConfig,
    pub grid: Vec<f64>,
    /// Threshold for the fixed-threshold F1 column.
    pub default_threshold: f64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Extra attempts per query after a provider failure.
    pub retries: usize,
    /// Evaluate records on the rayon pool.
    pub parallel_records: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: String::new(),
            taxonomy: None,
            methods: vec![Method::Greedy, Method::Conditional, Method::Joint, Method::Marginal],
            decode: DecodeConfig::default(),
            marginal: MarginalConfig::default(),
            grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            default_threshold: 0.5,
            out: None,
            retries: 2,
            parallel_records: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(document: &str) -> Result<Self> {
        serde_json::from_str(document).map_err(|e| {
            Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn is_remote(&self) -> bool {
        self.model.starts_with("http://") || self.model.starts_with("https://")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method must be selected".into()));
        }
        if self.model.is_empty() {
            return Err(Error::Config("no model given".into()));
        }
        if !self.is_remote() && !Path::new(&self.model).exists() {
            return Err(Error::Config(format!("model file {:?} does not exist", self.model)));
        }
        if let Some(path) = &self.taxonomy {
            if !path.exists() {
                return Err(Error::Config(format!("taxonomy file {} does not exist", path.display())));
            }
        }
        if self.grid.is_empty() {
            return Err(Error::Config("threshold grid is empty".into()));
        }
        if let Some(t) = self
            .grid
            .iter()
            .chain([&self.default_threshold])
            .find(|t| !(0.0..=1.0).contains(*t))
        {
            return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
        }
        if self.decode.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        self.marginal.validate()
    }

    pub fn load_taxonomy(&self) -> Result<Taxonomy> {
        match &self.taxonomy {
            None => Ok(Taxonomy::guard_default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                Taxonomy::from_json(&text)
            }
        }
    }

    /// Opens the configured model. Remote models are wrapped in a per-run cache.
    pub fn open_model(&self) -> Result<Box<dyn LanguageModel>> {
        if self.is_remote() {
            return Ok(Box::new(CachedModel::new(RemoteModel::new(&self.model))));
        }
        let text = std::fs::read_to_string(&self.model).map_err(|e| Error::io(self.model.clone(), e))?;
        Ok(Box::new(load_table_model(&text)?))
    }
}

/// Parses a comma-separated list of method names.
pub fn parse_methods(csv: &str) -> Result<Vec<Method>> {
    let mut methods: Vec<Method> = csv
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    methods.dedup();
    Ok(methods)
}

/// Parses a comma-separated list of thresholds.
pub fn parse_grid(csv: &str) -> Result<Vec<f64>> {
    csv.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad threshold {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_methods_rejected() {
        let cfg = RunConfig {
            model: "http://localhost:1".into(),
            methods: vec![],
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("method")));
    }

    #[test]
    fn missing_model_file_rejected() {
        let cfg = RunConfig {
            model: "/definitely/not/here.json".into(),
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_document_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"model": "http://x", "methods": ["marginal", "prob-uncertainty"],
                "marginal": {"top_p": 0.9, "match_mode": "boundary-safe"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.methods, [Method::Marginal, Method::ProbUncertainty]);
        assert_eq!(cfg.marginal.top_p, 0.9);
        assert_eq!(cfg.marginal.prune_threshold, 1e-7);
        assert!(cfg.validate().is_ok());
        assert!(RunConfig::from_json(r#"{"modle": "x"}"#).is_err());
    }

    #[test]
    fn csv_parsers() {
        assert_eq!(parse_methods("greedy, marginal").unwrap(), [Method::Greedy, Method::Marginal]);
        assert!(parse_methods("greedy,beam").is_err());
        assert_eq!(parse_grid("0.1,0.5").unwrap(), [0.1, 0.5]);
        assert!(parse_grid("0.1,x").is_err());
    }
}
