pub mod tensor;
pub mod ctc;
pub mod metrics;
pub mod channel;
pub mod classic;
pub mod dsp;
pub mod harness;
pub mod model;
