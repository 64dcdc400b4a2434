//! Flat key-value run configuration files (TOML scalars only). Unknown keys
//! are hard errors so a benchmark report always reflects exactly the file it
//! was launched with.

use std::path::Path;

use kernet::error::{Error, Result};
use kernet::network::{RunConfig, SigmaStrategy, Solver};

fn as_f64(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("key '{key}' must be a number"))),
    }
}

fn as_usize(key: &str, value: &toml::Value) -> Result<usize> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!("key '{key}' must be a non-negative integer"))),
    }
}

fn as_u64(key: &str, value: &toml::Value) -> Result<u64> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Config(format!("key '{key}' must be a non-negative integer"))),
    }
}

fn as_bool(key: &str, value: &toml::Value) -> Result<bool> {
    match value {
        toml::Value::Boolean(b) => Ok(*b),
        _ => Err(Error::Config(format!("key '{key}' must be a boolean"))),
    }
}

fn as_str<'v>(key: &str, value: &'v toml::Value) -> Result<&'v str> {
    match value {
        toml::Value::String(s) => Ok(s),
        _ => Err(Error::Config(format!("key '{key}' must be a string"))),
    }
}

/// Parses a config file into a [`RunConfig`]. Absent keys take the defaults
/// of the selected solver; unknown keys are rejected by name.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;

    let solver = match table.get("solver") {
        Some(v) => match as_str("solver", v)? {
            "ws" => Solver::Ws,
            "wstar" => Solver::Wstar,
            other => {
                return Err(Error::Config(format!(
                    "key 'solver' must be 'ws' or 'wstar', got '{other}'"
                )))
            }
        },
        None => Solver::Wstar,
    };
    let mut cfg = RunConfig::for_solver(solver);
    let mut strategy: Option<String> = None;
    let mut decay: Option<f64> = None;
    let mut decay_steps: Option<usize> = None;

    for (key, value) in &table {
        match key.as_str() {
            "solver" => {}
            "rff_width" => cfg.rff_width = as_usize(key, value)?,
            "hsic_threshold" => cfg.hsic_threshold = as_f64(key, value)?,
            "max_layers" => cfg.max_layers = as_usize(key, value)?,
            "sigma_strategy" => strategy = Some(as_str(key, value)?.to_string()),
            "decay" => decay = Some(as_f64(key, value)?),
            "decay_steps" => decay_steps = Some(as_usize(key, value)?),
            "rank_tol" => cfg.rank_tol = as_f64(key, value)?,
            "conv_tol" => cfg.conv_tol = as_f64(key, value)?,
            "ism_max_iter" => cfg.ism_max_iter = as_usize(key, value)?,
            "scan_ism_max_iter" => cfg.scan_ism_max_iter = as_usize(key, value)?,
            "sigma_grid_points" => cfg.sigma_grid_points = as_usize(key, value)?,
            "kme_normalize" => cfg.kme_normalize = as_bool(key, value)?,
            "clamp_eps" => cfg.clamp_eps = as_f64(key, value)?,
            "seed" => cfg.seed = as_u64(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
    }

    let default_decay = match cfg.sigma_strategy {
        SigmaStrategy::Decay { decay, max_steps } => (decay, max_steps),
        _ => (0.9, 50),
    };
    match strategy.as_deref() {
        None => {
            if let SigmaStrategy::Decay { .. } = cfg.sigma_strategy {
                cfg.sigma_strategy = SigmaStrategy::Decay {
                    decay: decay.unwrap_or(default_decay.0),
                    max_steps: decay_steps.unwrap_or(default_decay.1),
                };
            } else if decay.is_some() || decay_steps.is_some() {
                return Err(Error::Config(
                    "keys 'decay'/'decay_steps' require sigma_strategy = 'decay'".into(),
                ));
            }
        }
        Some("max_hsic") => cfg.sigma_strategy = SigmaStrategy::MaxHsic,
        Some("max_separation") => cfg.sigma_strategy = SigmaStrategy::MaxSeparation,
        Some("decay") => {
            cfg.sigma_strategy = SigmaStrategy::Decay {
                decay: decay.unwrap_or(default_decay.0),
                max_steps: decay_steps.unwrap_or(default_decay.1),
            }
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "key 'sigma_strategy' must be one of max_hsic, max_separation, decay; got '{other}'"
            )))
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn defaults_follow_solver() {
        let (_d, p) = write("solver = \"ws\"\n");
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.solver, Solver::Ws);
        assert!(matches!(cfg.sigma_strategy, SigmaStrategy::Decay { .. }));

        let (_d, p) = write("solver = \"wstar\"\nseed = 7\n");
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(matches!(cfg.sigma_strategy, SigmaStrategy::MaxHsic));
    }

    #[test]
    fn unknown_key_is_named() {
        let (_d, p) = write("solvr = \"ws\"\n");
        let err = load_config(&p).unwrap_err();
        assert!(err.to_string().contains("solvr"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        let (_d, p) = write("hsic_threshold = 1.5\n");
        assert!(load_config(&p).is_err());
        let (_d, p) = write("sigma_strategy = \"bogus\"\n");
        assert!(load_config(&p).is_err());
    }
}
