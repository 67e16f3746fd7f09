pub mod audit;
pub mod fit;
pub mod grid;
pub mod predict;
pub mod report;
pub mod simulate;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mcate::{CateModel, Schema};

use crate::failure::{io, Failure};

/// Column roles of an input CSV.
#[derive(Debug, Clone, clap::Args)]
pub struct SchemaArgs {
    /// Comma-separated feature columns; default is every column without
    /// another role and without the `truth_` prefix.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Treatment column (0/1).
    #[arg(long, default_value = "t")]
    pub treatment: String,
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Optional row-weight column.
    #[arg(long)]
    pub weights: Option<String>,
}

impl SchemaArgs {
    pub fn schema(&self) -> Schema {
        Schema {
            features: self.features.clone(),
            treatment: Some(self.treatment.clone()),
            outcome: self.outcome.clone(),
            weights: self.weights.clone(),
            truth: true,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(io(path))
}

pub fn load_model(path: &Path) -> Result<CateModel, Failure> {
    Ok(mcate::cate::model_from_json(&read_text(path)?)?)
}

/// Feature names recorded at fit time.
pub fn model_features(model: &CateModel) -> Option<Vec<String>> {
    let names = model.config.get("features")?.as_array()?;
    names.iter().map(|v| v.as_str().map(String::from)).collect()
}

/// Write to a file, or stdout for `-`.
pub fn write_output(out: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if out == Path::new("-") {
        let mut stdout = std::io::stdout().lock();
        // a reader that stops early (`| head`) is not an error
        return match stdout.write_all(bytes).and_then(|()| stdout.flush()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io(out)(e)),
            _ => Ok(()),
        };
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(out, bytes).map_err(io(out))
}

pub fn stdout_path() -> PathBuf {
    PathBuf::from("-")
}
