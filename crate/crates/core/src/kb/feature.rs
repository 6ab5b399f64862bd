use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{KbError, Result};

/// Default number of video frames summarized by one feature vector.
pub const DEFAULT_SNIPPET_SPAN: u32 = 8;
/// Default video frame rate used to map timestamps onto feature vectors.
pub const DEFAULT_FPS: f64 = 24.0;

#[derive(Serialize, Deserialize)]
struct FeatureSequenceRepr {
    dim: usize,
    #[serde(default = "default_span")]
    snippet_span: u32,
    #[serde(default = "default_fps")]
    fps: f64,
    frames: Vec<Vec<f32>>,
}

fn default_span() -> u32 {
    DEFAULT_SNIPPET_SPAN
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

/// Ordered list of fixed-dimension feature vectors, one per video snippet.
///
/// Vectors are stored row-major as `f32`, matching the on-disk layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureSequenceRepr", into = "FeatureSequenceRepr")]
pub struct FeatureSequence {
    dim: usize,
    snippet_span: u32,
    fps: f64,
    data: Vec<f32>,
}

impl TryFrom<FeatureSequenceRepr> for FeatureSequence {
    type Error = KbError;

    fn try_from(repr: FeatureSequenceRepr) -> Result<Self> {
        let mut fs = FeatureSequence::from_frames(repr.dim, repr.frames)?;
        fs.snippet_span = repr.snippet_span;
        fs.fps = repr.fps;
        fs.validate_timing()?;
        Ok(fs)
    }
}

impl From<FeatureSequence> for FeatureSequenceRepr {
    fn from(fs: FeatureSequence) -> Self {
        let frames = fs.frames().map(<[f32]>::to_vec).collect();
        FeatureSequenceRepr { dim: fs.dim, snippet_span: fs.snippet_span, fps: fs.fps, frames }
    }
}

impl FeatureSequence {
    pub fn from_frames(dim: usize, frames: Vec<Vec<f32>>) -> Result<Self> {
        if dim == 0 {
            return Err(KbError::InvalidFeatures("dimension must be positive".into()));
        }
        if frames.is_empty() {
            return Err(KbError::InvalidFeatures("a feature sequence needs at least one frame".into()));
        }
        let mut data = Vec::with_capacity(dim * frames.len());
        for (i, frame) in frames.iter().enumerate() {
            if frame.len() != dim {
                return Err(KbError::InvalidFeatures(format!(
                    "frame {i} has dimension {}, expected {dim}",
                    frame.len()
                )));
            }
            data.extend_from_slice(frame);
        }
        Ok(Self { dim, snippet_span: DEFAULT_SNIPPET_SPAN, fps: DEFAULT_FPS, data })
    }

    pub fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(KbError::InvalidFeatures(format!(
                "{} values do not form whole frames of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, snippet_span: DEFAULT_SNIPPET_SPAN, fps: DEFAULT_FPS, data })
    }

    pub fn with_timing(mut self, snippet_span: u32, fps: f64) -> Result<Self> {
        self.snippet_span = snippet_span;
        self.fps = fps;
        self.validate_timing()?;
        Ok(self)
    }

    fn validate_timing(&self) -> Result<()> {
        if self.snippet_span == 0 || !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(KbError::InvalidFeatures(format!(
                "invalid timing: snippet span {}, fps {}",
                self.snippet_span, self.fps
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn snippet_span(&self) -> u32 {
        self.snippet_span
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    /// Feature vectors per second of video.
    pub fn vectors_per_second(&self) -> f64 {
        self.fps / f64::from(self.snippet_span)
    }

    /// Range of vectors covering the time interval `[t_start, t_end)`, clamped
    /// to the sequence and never empty.
    pub fn span_of(&self, t_start: f64, t_end: f64) -> Range<usize> {
        let rate = self.vectors_per_second();
        let len = self.len();
        let start = ((t_start * rate).round().max(0.0) as usize).min(len - 1);
        let end = ((t_end * rate).round().max(0.0) as usize).clamp(start + 1, len);
        start..end
    }

    /// Copies the vectors in `range` into a new sequence with the same timing.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(KbError::InvalidFeatures(format!(
                "frame range {range:?} is outside 0..{}",
                self.len()
            )));
        }
        Ok(Self {
            dim: self.dim,
            snippet_span: self.snippet_span,
            fps: self.fps,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_and_spans() {
        let fs = FeatureSequence::from_frames(2, vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]])
            .unwrap()
            .with_timing(8, 24.0)
            .unwrap();
        assert_eq!(fs.len(), 3);
        assert_eq!(fs.frame(1), &[2.0, 3.0]);
        assert_eq!(fs.vectors_per_second(), 3.0);
        assert_eq!(fs.span_of(0.0, 1.0 / 3.0), 0..1);
        assert_eq!(fs.span_of(1.0 / 3.0, 1.0), 1..3);
        // past the end collapses onto the last vector
        assert_eq!(fs.span_of(10.0, 11.0), 2..3);
        assert_eq!(fs.slice(1..3).unwrap().frame(0), &[2.0, 3.0]);
    }

    #[test]
    fn rejects_ragged_frames() {
        assert!(FeatureSequence::from_frames(2, vec![vec![0.0, 1.0], vec![2.0]]).is_err());
        assert!(FeatureSequence::from_frames(2, vec![]).is_err());
        assert!(FeatureSequence::from_flat(3, vec![0.0; 4]).is_err());
    }
}
