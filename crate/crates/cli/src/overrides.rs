use anyhow::{bail, Context, Result};
use toml::{Table, Value};
use wavehits::pipeline::ExperimentConfig;

/// Parse the right-hand side of `key=value` as a TOML value, falling back to
/// a bare string.
fn parse_value(text: &str) -> Value {
    let doc = format!("v = {text}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.to_string())),
        Err(_) => Value::String(text.to_string()),
    }
}

fn key_exists(schema: &Table, path: &[&str]) -> bool {
    let mut node = schema;
    for (i, part) in path.iter().enumerate() {
        match node.get(*part) {
            Some(Value::Table(t)) if i + 1 < path.len() => node = t,
            Some(_) if i + 1 == path.len() => return true,
            _ => return false,
        }
    }
    false
}

/// Apply a dotted `key=value` override to a config table. The key must name
/// an existing config field.
pub fn apply(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    let schema: Table = ExperimentConfig::default()
        .to_toml()
        .parse()
        .expect("default config parses");
    if path.iter().any(|p| p.is_empty()) || !key_exists(&schema, &path) {
        bail!("unknown config key `{key}`");
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => bail!("config key `{key}`: `{part}` is not a section"),
        };
    }
    node.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Load the config file (or defaults), apply overrides, then validate.
pub fn load_config(text: Option<&str>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: Table = match text {
        Some(t) => t.parse().context("config file is not valid TOML")?,
        None => Table::new(),
    };
    for o in overrides {
        apply(&mut table, o)?;
    }
    Ok(ExperimentConfig::from_toml(&table.to_string())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wavehits::pipeline::Variant;

    #[test]
    fn overrides_apply_before_validation() {
        let c = load_config(None, &["train.max_epochs=3".into(), "model.variant=nhits_uv".into()]).unwrap();
        assert_eq!(c.train.max_epochs, 3);
        assert_eq!(c.model.variant, Variant::NhitsUv);
        let c = load_config(Some("[eval]\nhr_delta = 10.0\n"), &["eval.hr_delta=20.5".into()]).unwrap();
        assert_eq!(c.eval.hr_delta, 20.5);
        let c = load_config(None, &["model.kernels=[2, 1]".into(), "train.optimizer.learning_rate=0.01".into()]).unwrap();
        assert_eq!(c.model.kernels, vec![2, 1]);
        assert_eq!(c.train.optimizer.learning_rate, 0.01);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = load_config(None, &["train.epochs=3".into()]).unwrap_err().to_string();
        assert!(err.contains("train.epochs"), "{err}");
        assert!(load_config(None, &["nonsense".into()]).is_err());
        assert!(load_config(None, &["train.patience=0".into()]).is_err());
    }
}
