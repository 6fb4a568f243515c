//! Acoustic facial-expression sensing, end to end and hardware-free.
//!
//! The pipeline turns a continuously repeated ultrasonic FMCW sweep into
//! facial state: received audio is band-pass filtered, cross-correlated
//! against the transmitted sweep into *echo profiles*, differenced between
//! adjacent frames to cancel static reflectors, truncated to the near field,
//! and assembled into sliding 60 x 84 windows that a regressor maps to 52
//! blendshape parameters. A reflector-scene simulator stands in for the
//! physical hardware so every stage can be validated closed-loop, and a
//! byte-exact wire protocol reproduces the device-to-host transport.
//!
//! ```
//! use echoface::chirp::{generate_chirp, ChirpSpec};
//!
//! let spec = ChirpSpec::default();
//! let sweep = generate_chirp(&spec).unwrap();
//! assert_eq!(sweep.len(), 600);
//! assert_eq!(spec.frame_duration(), 0.012);
//! ```

pub mod blendshape;
pub mod blink;
pub mod chirp;
pub mod conv;
pub mod crossval;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod profile;
pub mod ridge;
pub mod sim;
pub mod waveio;
pub mod window;
pub mod wire;

pub use error::{ConfigError, Error, Result, ShapeError};

#[cfg(doctest)]
mod book {
    //! Runs every fenced Rust snippet in the guide as a doctest so the book
    //! can never drift from the library.
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(chirps, "../../../book/src/chirps-and-echo-profiles.md");
    chapter!(scenes, "../../../book/src/simulating-scenes.md");
    chapter!(wire, "../../../book/src/wire-transport.md");
    chapter!(blendshapes, "../../../book/src/blendshapes-and-metrics.md");
    chapter!(regression, "../../../book/src/regression.md");
    chapter!(blink, "../../../book/src/blink-detection.md");
    chapter!(cli, "../../../book/src/command-line.md");
}
