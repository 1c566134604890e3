use std::process::Command;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// External OCR step: a program invoked with an input PDF path and an output
/// PDF path. `{input}` and `{output}` in `args` are replaced by the paths;
/// when neither placeholder appears they are appended in that order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl OcrCommand {
    /// Parse a whitespace-separated command line, e.g. `ocrmypdf --force-ocr {input} {output}`.
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(OcrCommand {
            program,
            args: parts.collect(),
        })
    }

    pub fn run(&self, raw: &[u8]) -> Result<Vec<u8>, IngestError> {
        let dir = tempfile::tempdir().map_err(|e| IngestError::Ocr(e.to_string()))?;
        let input = dir.path().join("input.pdf");
        let output = dir.path().join("output.pdf");
        std::fs::write(&input, raw).map_err(|e| IngestError::Ocr(e.to_string()))?;

        let (inp, outp) = (input.to_string_lossy(), output.to_string_lossy());
        let has_placeholder = self.args.iter().any(|a| a.contains("{input}") || a.contains("{output}"));
        let mut args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace("{input}", &inp).replace("{output}", &outp))
            .collect();
        if !has_placeholder {
            args.push(inp.to_string());
            args.push(outp.to_string());
        }

        let status = Command::new(&self.program)
            .args(&args)
            .status()
            .map_err(|e| IngestError::Ocr(format!("{}: {e}", self.program)))?;
        if !status.success() {
            return Err(IngestError::Ocr(format!("{} exited with {status}", self.program)));
        }
        std::fs::read(&output).map_err(|e| IngestError::Ocr(format!("no output produced: {e}")))
    }
}
