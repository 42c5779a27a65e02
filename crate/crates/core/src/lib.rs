pub mod cues;
pub mod ellipse;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod rotation;
pub mod synth;
