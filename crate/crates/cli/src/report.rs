use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_ID: &str = "symnet-report/1";

#[derive(Debug, Clone, Serialize)]
pub struct Input {
    pub source: String,
    pub sha256: String,
}

impl Input {
    pub fn new(source: impl Into<String>, bytes: &[u8]) -> Self {
        Input {
            source: source.into(),
            sha256: format!("{:x}", Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub ok: bool,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Warning {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

/// Marker returned once a failing stage has been recorded.
#[derive(Debug)]
pub struct Halt;

pub struct Report {
    command: Option<&'static str>,
    args: Map<String, Value>,
    input: Option<Input>,
    stages: Vec<Stage>,
    warnings: Vec<Warning>,
    error: Option<Failure>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Report {
    pub fn new(command: Option<&'static str>) -> Self {
        Report {
            command,
            args: Map::new(),
            input: None,
            stages: Vec::new(),
            warnings: Vec::new(),
            error: None,
            timings: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn arg(&mut self, name: &str, value: impl Serialize) {
        self.args.insert(
            name.into(),
            serde_json::to_value(value).expect("serializable argument"),
        );
    }

    pub fn set_input(&mut self, input: Input) {
        self.input = Some(input);
    }

    pub fn warn(&mut self, code: &'static str, message: impl Into<String>) {
        self.warnings.push(Warning {
            code,
            message: message.into(),
        });
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    /// Runs one stage, recording its result or its error.
    pub fn stage<T, E: std::fmt::Display>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Report) -> Result<(T, Value), E>,
    ) -> Result<T, Halt> {
        let t0 = Instant::now();
        let out = f(self);
        self.timings.push((name.into(), t0.elapsed().as_secs_f64()));
        match out {
            Ok((value, result)) => {
                self.stages.push(Stage {
                    name: name.into(),
                    ok: true,
                    result,
                    error: None,
                });
                Ok(value)
            }
            Err(e) => {
                self.fail(name, Value::Null, e.to_string());
                Err(Halt)
            }
        }
    }

    /// Records a stage that ran to completion but whose outcome is negative.
    pub fn fail(&mut self, name: &str, result: Value, message: String) {
        if let Some(s) = self.stages.iter_mut().rev().find(|s| s.name == name) {
            s.ok = false;
            s.error = Some(message.clone());
        } else {
            self.stages.push(Stage {
                name: name.into(),
                ok: false,
                result,
                error: Some(message.clone()),
            });
        }
        if self.error.is_none() {
            self.error = Some(Failure {
                stage: name.into(),
                message,
            });
        }
    }

    pub fn to_json(&self) -> Value {
        let timing: Vec<Value> = self
            .timings
            .iter()
            .map(|(n, s)| json!({ "stage": n, "seconds": s }))
            .collect();
        json!({
            "schema": SCHEMA_ID,
            "tool": { "name": "symnet", "version": env!("CARGO_PKG_VERSION") },
            "command": self.command,
            "args": self.args,
            "input": self.input,
            "ok": self.ok(),
            "stages": self.stages,
            "warnings": self.warnings,
            "error": self.error,
            "timing": {
                "total_seconds": self.started.elapsed().as_secs_f64(),
                "stages": timing,
            },
        })
    }
}
