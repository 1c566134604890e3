use serde::{Deserialize, Serialize};

use super::{IngestError, Span};

pub const DEFAULT_OVERLAP: f64 = 0.10;

/// Sliding-window parameters, in characters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub window_chars: usize,
    pub overlap_fraction: f64,
}

impl ChunkConfig {
    pub fn new(window_chars: usize) -> Self {
        ChunkConfig {
            window_chars,
            overlap_fraction: DEFAULT_OVERLAP,
        }
    }

    /// Characters shared by adjacent chunks.
    pub fn overlap_chars(&self) -> usize {
        (self.window_chars as f64 * self.overlap_fraction).floor() as usize
    }

    pub fn stride(&self) -> Result<usize, IngestError> {
        if self.window_chars == 0 {
            return Err(IngestError::InvalidConfig("window must be at least 1 character".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(IngestError::InvalidConfig(format!(
                "overlap fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        match self.window_chars.saturating_sub(self.overlap_chars()) {
            0 => Err(IngestError::InvalidConfig("stride would be 0".into())),
            s => Ok(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChunk {
    pub span: Span,
    pub text: String,
}

/// Split `text` into windows starting at 0, stride, 2*stride, ... where the
/// last window ends at the end of the text.
pub fn chunk_text(text: &str, cfg: &ChunkConfig) -> Result<Vec<TextChunk>, IngestError> {
    let stride = cfg.stride()?;
    // byte offset of every char boundary, plus the end
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let len = bounds.len() - 1;

    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + cfg.window_chars).min(len);
        chunks.push(TextChunk {
            span: Span::new(start, end),
            text: text[bounds[start]..bounds[end]].to_string(),
        });
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}
