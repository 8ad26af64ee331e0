//! Writes command output to stdout, or to a file with its sidecar and manifest.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use sda_core::io::sidecar_path;
use serde::Serialize;
use serde_json::Value;

use crate::cli::{Format, Global};
use crate::error::{usage, CliResult};
use crate::manifest::{manifest_path, RunManifest};

pub struct Emitter {
    pub format: Format,
    out: Option<PathBuf>,
    manifest: RunManifest,
}

impl Emitter {
    pub fn new(command: &str, global: &Global, default_format: Format) -> Self {
        Self {
            format: global.format.unwrap_or(default_format),
            out: global.out.clone(),
            manifest: RunManifest::start(command),
        }
    }

    pub fn set_parameters<T: Serialize>(&mut self, params: &T) -> CliResult<()> {
        self.manifest.parameters = serde_json::to_value(params)?;
        Ok(())
    }

    pub fn add_seed(&mut self, seed: u64) {
        self.manifest.seeds.push(seed);
    }

    /// File name of the manifest, which every written file refers to.
    fn manifest_ref(&self) -> Option<String> {
        let p = manifest_path(self.out.as_ref()?);
        p.file_name().map(|s| s.to_string_lossy().into_owned())
    }

    /// CSV body plus an optional JSON sidecar. On stdout the sidecar is dropped.
    pub fn table(self, body: Vec<u8>, sidecar: Option<Value>) -> CliResult<()> {
        let reference = self.manifest_ref();
        let sidecar = sidecar.map(|v| with_manifest(v, reference.as_deref()));
        self.write(body, sidecar)
    }

    /// JSON document; it names its manifest when written to a file.
    pub fn json<T: Serialize>(self, value: &T) -> CliResult<()> {
        let reference = self.manifest_ref();
        let doc = with_manifest(serde_json::to_value(value)?, reference.as_deref());
        let mut body = serde_json::to_vec_pretty(&doc)?;
        body.push(b'\n');
        self.write(body, None)
    }

    fn write(mut self, body: Vec<u8>, sidecar: Option<Value>) -> CliResult<()> {
        let Some(out) = self.out.clone() else {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&body)?;
            stdout.flush()?;
            return Ok(());
        };
        let side_path = sidecar_path(&out);
        if sidecar.is_some() && side_path == out {
            return usage(format!("{} would be overwritten by its own sidecar; use another extension", out.display()));
        }
        fs::write(&out, &body)?;
        self.manifest.record(&out, &body);
        if let Some(side) = sidecar {
            let path = side_path;
            let mut bytes = serde_json::to_vec_pretty(&side)?;
            bytes.push(b'\n');
            fs::write(&path, &bytes)?;
            self.manifest.record(&path, &bytes);
        }
        self.manifest.finish();
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        fs::write(manifest_path(&out), bytes)?;
        Ok(())
    }
}

fn with_manifest(mut v: Value, reference: Option<&str>) -> Value {
    if let (Some(r), Value::Object(map)) = (reference, &mut v) {
        map.insert("manifest".into(), Value::String(r.to_owned()));
    }
    v
}
