pub mod antenna;
pub mod autodiff;
pub mod calibrate;
pub mod geometry;
pub mod harness;
pub mod materials;
pub mod math;
pub mod metrics;
pub mod tracer;
