//! Random compositions `F_ω = R_ω ∘ F_L` of volume-preserving twist maps on
//! `T^{2N}`: Lyapunov spectra by QR cocycles, Grassmannian statistics, and
//! Monte Carlo checks of the hyperbolicity estimates behind them.
//!
//! The crate is organised bottom-up:
//!
//! - [`torus`]: the deterministic families `F(x, y) = (f_L(x) − y, x)`.
//! - [`grassmann`]: frames, principal angles, cones and graph charts.
//! - [`noise`]: volume-preserving random diffeomorphisms `R_ω`.
//! - [`lyapunov`]: trajectories, QR spectra and singular-value windows.
//! - [`diagnostics`]: critical-set measures, cone escape, transversality.
//! - [`runner`]: JSON configs, experiment dispatch and CSV/JSON output.

pub mod diagnostics;
pub mod error;
pub mod grassmann;
pub mod lyapunov;
pub mod noise;
pub mod runner;
pub mod stats;
pub mod stream;
pub mod torus;

pub use error::{Error, Result};
pub use grassmann::{Axis, GraphRep, JordanAngles, SubspaceFrame};
pub use lyapunov::{LyapunovReport, RunOptions, TrajectoryState};
pub use noise::{NoiseModel, NoiseSample, RotationalNoise};
pub use stream::{derive_stream, derive_substream, Stream};
pub use torus::{JacobianBlock, MapFamily, SmoothMap, TorusPoint};
