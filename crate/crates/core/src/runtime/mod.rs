//! File, stream, report and verification front ends around the inference model.

mod engine;
mod report;
mod verify;
mod wav;

pub use crate::generator::DelayBudget;
pub use engine::{enhance_file, measure_latency, stream_pcm, stream_signal, MeasuredLatency, StreamStats};
pub use report::{cost_report_text, REFERENCE_DELAY_MS, REFERENCE_GMACS, REFERENCE_PARAMS};
pub use verify::{
    run_verify, CheckResult, VerifyOptions, VerifyReport, DELAY_RANGE_MS, GRAD_TOLERANCE, PQMF_MIN_SNR_DB,
    STREAM_TOLERANCE,
};
pub use wav::{to_i16, SampleKind, WavFile};
