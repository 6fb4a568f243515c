//! Sliding-window assembly of the model input.
//!
//! Each prediction consumes the current frame plus the 83 frames before it:
//! 84 truncated differential profiles side by side, channel 0's 30 bins
//! stacked above channel 1's, for a 60 x 84 input. The assembler is
//! incremental: a new frame contributes exactly one new column and evicts
//! the oldest, so the added latency is one frame.

use ndarray::Array2;
use std::collections::VecDeque;

use crate::error::ShapeError;
use crate::profile::TRUNCATED_BINS;

/// Differential-profile columns per window (one second of frames).
pub const WINDOW_FRAMES: usize = 84;
/// Rows per window: truncated bins of both channels stacked.
pub const WINDOW_ROWS: usize = 2 * TRUNCATED_BINS;

/// The 60 x 84 model input. Column `t` is the differential profile at
/// `frame_index - (83 - t)`; the newest frame is the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoWindow {
    pub values: Array2<f64>,
    /// Frame index of the newest column.
    pub frame_index: usize,
}

impl EchoWindow {
    pub fn zeros(frame_index: usize) -> Self {
        Self {
            values: Array2::zeros((WINDOW_ROWS, WINDOW_FRAMES)),
            frame_index,
        }
    }
}

/// Ring buffer of truncated differential-profile columns.
#[derive(Debug, Clone, Default)]
pub struct WindowAssembler {
    columns: VecDeque<[f64; WINDOW_ROWS]>,
    newest_frame: Option<usize>,
}

impl WindowAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Push one truncated differential profile (`[30 x 2]`). Returns the
    /// complete window once 84 consecutive columns are buffered, otherwise
    /// `None` (the caller skips prediction until the buffer fills).
    pub fn push(
        &mut self,
        truncated: &Array2<f64>,
        frame_index: usize,
    ) -> Result<Option<EchoWindow>, ShapeError> {
        if truncated.dim() != (TRUNCATED_BINS, 2) {
            return Err(ShapeError::new(format!(
                "expected truncated profile [{} x 2], got {:?}",
                TRUNCATED_BINS,
                truncated.dim()
            )));
        }
        if let Some(prev) = self.newest_frame {
            if frame_index != prev + 1 {
                return Err(ShapeError::new(format!(
                    "non-consecutive frame: expected {}, got {}",
                    prev + 1,
                    frame_index
                )));
            }
        }
        self.newest_frame = Some(frame_index);

        let mut col = [0.0; WINDOW_ROWS];
        for bin in 0..TRUNCATED_BINS {
            col[bin] = truncated[[bin, 0]];
            col[TRUNCATED_BINS + bin] = truncated[[bin, 1]];
        }
        if self.columns.len() == WINDOW_FRAMES {
            self.columns.pop_front();
        }
        self.columns.push_back(col);

        if self.columns.len() < WINDOW_FRAMES {
            return Ok(None);
        }
        let mut values = Array2::zeros((WINDOW_ROWS, WINDOW_FRAMES));
        for (t, col) in self.columns.iter().enumerate() {
            for r in 0..WINDOW_ROWS {
                values[[r, t]] = col[r];
            }
        }
        Ok(Some(EchoWindow {
            values,
            frame_index,
        }))
    }

    pub fn reset(&mut self) {
        self.columns.clear();
        self.newest_frame = None;
    }
}
