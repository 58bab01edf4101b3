use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use midlstm_core::pipeline::RunConfig;

/// Read a JSON config; unknown or mistyped keys are reported with their path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("at `{path}`: {}", e.into_inner())
    })?;
    de.end()?;
    Ok(config)
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
}

pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match config_path {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(jobs) = overrides.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    if let Some(epochs) = overrides.epochs {
        config.lstm.epochs = epochs;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_unknown_key_reports_path() {
        let err = parse_config(r#"{"hmm": {"state": 3}}"#).unwrap_err().to_string();
        assert!(err.contains("hmm"), "{err}");
        assert!(err.contains("state"), "{err}");
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = parse_config(r#"{"lstm": {"epochs": "many"}}"#).unwrap_err().to_string();
        assert!(err.contains("lstm.epochs"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let overrides = Overrides {
            seed: Some(9),
            jobs: Some(2),
            out: Some("elsewhere".into()),
            epochs: Some(3),
        };
        let config = resolve(None, &overrides).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.jobs, Some(2));
        assert_eq!(config.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(config.lstm.epochs, 3);
    }
}
