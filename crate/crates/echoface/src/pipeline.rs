//! Streaming per-session DSP: filter, correlate, difference, window.
//!
//! One `FrameProcessor` owns all mutable state for one session (filter
//! memory, the previous frame's profile, the window ring). Frames must be
//! pushed in order by a single logical worker; separate sessions are
//! independent and can run in parallel.

use crate::chirp::{generate_chirp, ChirpSpec};
use crate::error::{Error, Result};
use crate::filter::{design_bandpass, BandpassSpec, FilterCoefficients, SosFilter};
use crate::profile::{
    differential, echo_profile_stereo, truncate_bins, Correlator, DiffProfile, EchoProfile,
    TRUNCATED_BINS,
};
use crate::window::{EchoWindow, WindowAssembler};

/// Everything one frame push produces.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: usize,
    /// Differential profile against the previous frame (absent for frame 0).
    pub diff: Option<DiffProfile>,
    /// The model input, once 84 differential profiles are buffered.
    pub window: Option<EchoWindow>,
}

/// Per-session processing state.
pub struct FrameProcessor {
    chirp: ChirpSpec,
    filters: [SosFilter; 2],
    correlator: Correlator,
    prev: Option<EchoProfile>,
    assembler: WindowAssembler,
    next_frame: usize,
    filter_enabled: bool,
}

impl FrameProcessor {
    pub fn new(chirp: &ChirpSpec) -> Result<Self> {
        let bandpass = BandpassSpec::for_chirp(chirp);
        Self::with_bandpass(chirp, &bandpass)
    }

    pub fn with_bandpass(chirp: &ChirpSpec, bandpass: &BandpassSpec) -> Result<Self> {
        chirp.validate()?;
        let coeffs = design_bandpass(bandpass)?;
        let template = generate_chirp(chirp)?;
        Ok(Self {
            chirp: chirp.clone(),
            filters: [SosFilter::new(coeffs.clone()), SosFilter::new(coeffs)],
            correlator: Correlator::new(&template),
            prev: None,
            assembler: WindowAssembler::new(),
            next_frame: 0,
            filter_enabled: true,
        })
    }

    /// Disable the band-pass stage (diagnostics only).
    pub fn set_filter_enabled(&mut self, enabled: bool) {
        self.filter_enabled = enabled;
    }

    pub fn chirp(&self) -> &ChirpSpec {
        &self.chirp
    }

    pub fn filter_coefficients(&self) -> &FilterCoefficients {
        self.filters[0].coefficients()
    }

    pub fn frames_processed(&self) -> usize {
        self.next_frame
    }

    /// Process one frame of both channels. The filter state carries across
    /// frames, so framewise processing equals whole-signal processing.
    pub fn push_frame(&mut self, frame: [&[f64]; 2]) -> Result<FrameOutput> {
        let n = self.chirp.n_samples;
        if frame[0].len() != n || frame[1].len() != n {
            return Err(Error::Shape(crate::error::ShapeError::new(format!(
                "expected {n}-sample frames, got {} and {}",
                frame[0].len(),
                frame[1].len()
            ))));
        }
        let frame_index = self.next_frame;
        self.next_frame += 1;

        let mut filtered0 = frame[0].to_vec();
        let mut filtered1 = frame[1].to_vec();
        if self.filter_enabled {
            self.filters[0].process_block(&mut filtered0);
            self.filters[1].process_block(&mut filtered1);
        }

        let profile = echo_profile_stereo(&self.correlator, [&filtered0, &filtered1], frame_index)?;

        let diff = match self.prev.take() {
            Some(prev) => Some(differential(&prev, &profile)?),
            None => None,
        };
        self.prev = Some(profile);

        let window = match &diff {
            Some(d) => {
                let truncated = truncate_bins(d, TRUNCATED_BINS)?;
                self.assembler.push(&truncated, d.frame_index)?
            }
            None => None,
        };

        Ok(FrameOutput {
            frame_index,
            diff,
            window,
        })
    }

    /// Drop all session state but keep the configuration.
    pub fn reset(&mut self) {
        self.filters[0].reset();
        self.filters[1].reset();
        self.prev = None;
        self.assembler.reset();
        self.next_frame = 0;
    }
}
