//! The JSON run configuration and its layering rules.
//!
//! A resolved configuration is built from defaults, then a user config file,
//! then scenario overrides, then command-line flags; every layer is a partial
//! JSON object merged key by key.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::perception::PerceptionConfig;
use crate::policy::PolicyConfig;
use crate::sensor::{NoiseConfig, SensorConfig};
use crate::sim::SimConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorConfig,
    pub noise: NoiseConfig,
    pub perception: PerceptionConfig,
    pub policy: PolicyConfig,
    pub sim: SimConfig,
}

impl RunConfig {
    /// Defaults with an ideal (noise-free, always valid) sensor.
    pub fn ideal() -> Self {
        let sensor = SensorConfig::default();
        Self {
            noise: NoiseConfig::ideal(sensor.max_range_m()),
            sensor,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.noise.validate(&self.sensor)?;
        self.perception.validate()?;
        self.policy.validate()?;
        self.sim.validate()?;
        if (self.sim.control_rate_hz - self.sensor.frame_rate_hz).abs() > 1e-9 {
            return Err(Error::config(
                "sim.control_rate_hz",
                format!(
                    "{} Hz must equal sensor.frame_rate_hz ({} Hz)",
                    self.sim.control_rate_hz, self.sensor.frame_rate_hz
                ),
            ));
        }
        Ok(())
    }

    /// Parses a (possibly partial) config; errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Merges `layers` in order over the defaults, then validates.
    pub fn layered<'a>(layers: impl IntoIterator<Item = &'a Value>) -> Result<Self> {
        let mut merged = Value::Object(Default::default());
        for layer in layers {
            if !(layer.is_object() || layer.is_null()) {
                return Err(Error::config(
                    "<root>",
                    "config layers must be JSON objects",
                ));
            }
            merge(&mut merged, layer);
        }
        Self::from_value(merged)
    }
}

/// Recursive object merge; non-object values in `overlay` replace `base`.
pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (_, Value::Null) => {}
        (b, o) => *b = o.clone(),
    }
}
