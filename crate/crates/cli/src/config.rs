use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use conroute_core::instances::{GeneratorLatents, LatentPrior};
use conroute_core::training::TrainConfig;
use conroute_core::{PolicyConfig, Task};

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Overwrites the fields of `base` named in `overlay`. Unknown field names
/// are rejected so that typos do not pass silently.
pub fn merge_onto<T: Serialize + DeserializeOwned>(base: &T, overlay: &Value, what: &str) -> Result<T> {
    let mut merged = serde_json::to_value(base)?;
    let (Value::Object(target), Value::Object(fields)) = (&mut merged, overlay) else {
        bail!("{what} must be a JSON object");
    };
    for (key, value) in fields {
        if !target.contains_key(key) {
            bail!("unknown {what} field `{key}`");
        }
        target.insert(key.clone(), value.clone());
    }
    serde_json::from_value(merged).with_context(|| format!("invalid {what}"))
}

pub enum GeneratorSource {
    Prior(LatentPrior),
    Fixed(GeneratorLatents),
}

/// A generator config is either latent fields or `{"prior": {...}}`.
pub fn generator_source(path: Option<&Path>) -> Result<GeneratorSource> {
    let Some(path) = path else {
        return Ok(GeneratorSource::Prior(LatentPrior::default()));
    };
    let doc = read_json(path)?;
    if let Some(prior) = doc.get("prior") {
        return Ok(GeneratorSource::Prior(merge_onto(
            &LatentPrior::default(),
            prior,
            "prior",
        )?));
    }
    let latents: GeneratorLatents = merge_onto(&GeneratorLatents::default(), &doc, "generator")?;
    latents.validate()?;
    Ok(GeneratorSource::Fixed(latents))
}

/// Training and policy settings from an optional file; `task` overrides the
/// file's task.
pub fn train_settings(path: Option<&Path>, task: Option<Task>) -> Result<(TrainConfig, PolicyConfig)> {
    let mut doc = match path {
        Some(p) => read_json(p)?,
        None => Value::Object(Default::default()),
    };
    let policy = doc.as_object_mut().and_then(|o| o.remove("policy"));
    let mut train: TrainConfig = merge_onto(&TrainConfig::default(), &doc, "training")?;
    if let Some(t) = task {
        train.task = t;
    }
    let mut policy = match policy {
        Some(p) => merge_onto(&PolicyConfig::desk(train.task), &p, "policy")?,
        None => PolicyConfig::desk(train.task),
    };
    policy.task = train.task;
    policy.validate()?;
    train.validate()?;
    Ok((train, policy))
}
