//! End-to-end scheme: encode with common randomness, add guard bands, send
//! over the deletion channel, segment, and decode in two stages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arikan;
use crate::channels::{transmit, DeletionParams};
use crate::construction::CodeConfig;
use crate::error::{invalid, Error, Result};
use crate::guardband::{insert_guard_bands, segment_with_genie, GuardLayout};
use crate::hmm_input::FaimProcess;
use crate::parallel::{map_range, Execution};
use crate::rng::{stream_rng, CommonRandomness, Stream};
use crate::sc_decoder::{
    conditional_probability, run_sc, shaped_bit, two_stage_decode, DecisionRule, FrozenMap, IndexPosterior,
    Node, ScOptions,
};
use crate::trellis::{build_input_trellis, build_tdc_trellis, Trellis};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    // The closed form cancels to the boundary only up to rounding.
    let edge = |v: f64, at: bool, to: f64| if at { to } else { v };
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (edge((centre - half).max(0.0), successes == 0, 0.0), edge((centre + half).min(1.0), successes == trials, 1.0))
}

/// Everything derived from a [`CodeConfig`] that encoding and decoding share.
#[derive(Clone, Debug)]
pub struct Scheme {
    pub config: CodeConfig,
    pub layout: GuardLayout,
    pub params: DeletionParams,
    pub process: FaimProcess,
    pub frozen: FrozenMap,
    pub common: CommonRandomness,
    /// Per-block input-process trellises, absent for uniform input.
    priors: Option<Vec<Trellis>>,
    pub opts: ScOptions,
}

/// Encoder outputs at each stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub u: Vec<u8>,
    pub x: Vec<u8>,
    pub g: Vec<u8>,
}

struct EncoderRule<'a> {
    frozen: &'a FrozenMap,
    common: CommonRandomness,
    payload: &'a [u8],
    next: usize,
}

impl DecisionRule for EncoderRule<'_> {
    fn decide(&mut self, i: usize, posts: &[IndexPosterior]) -> u8 {
        if self.frozen.is_information(i) {
            self.next += 1;
            self.payload[self.next - 1]
        } else {
            shaped_bit(&self.common, i, conditional_probability(&posts[0]))
        }
    }
}

impl Scheme {
    pub fn new(config: CodeConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.layout()?;
        let process = config.input_process()?;
        let priors = (!process.is_uniform_iid())
            .then(|| vec![build_input_trellis(layout.block_len(), &process); layout.num_blocks()]);
        Ok(Self {
            layout,
            params: config.params()?,
            frozen: config.frozen_map()?,
            common: CommonRandomness::new(config.common_seed),
            process,
            priors,
            opts: ScOptions::default(),
            config,
        })
    }

    pub fn payload_len(&self) -> usize {
        self.config.information_set.len()
    }

    /// Place the payload on information indices, shape the rest, transform
    /// and add guard bands.
    pub fn encode(&self, payload: &[u8]) -> Result<Encoded> {
        if payload.len() != self.payload_len() {
            return Err(Error::LengthMismatch { expected: self.payload_len(), got: payload.len() });
        }
        let u = match &self.priors {
            None => {
                let mut next = payload.iter();
                (1..=self.layout.len())
                    .map(|i| match self.frozen.is_information(i) {
                        true => *next.next().expect("payload length checked"),
                        false => shaped_bit(&self.common, i, 0.5),
                    })
                    .collect()
            }
            Some(priors) => {
                let mut rule = EncoderRule { frozen: &self.frozen, common: self.common, payload, next: 0 };
                run_sc(vec![Node::blocks(priors.clone())?], &mut rule, &self.opts)?.u
            }
        };
        let x = arikan::inverse_transform(&u)?;
        let g = insert_guard_bands(&x, &self.layout)?;
        Ok(Encoded { u, x, g })
    }

    /// Decode from per-block trimmed outputs.
    pub fn decode_blocks(&self, blocks: &[Vec<u8>]) -> Result<crate::sc_decoder::DecodeOutcome> {
        if blocks.len() != self.layout.num_blocks() {
            return Err(Error::LengthMismatch { expected: self.layout.num_blocks(), got: blocks.len() });
        }
        let trellises = blocks
            .iter()
            .map(|y| build_tdc_trellis(self.layout.block_len(), y, self.params, &self.process))
            .collect::<Result<Vec<_>>>()?;
        two_stage_decode(trellises, self.priors.clone(), &self.frozen, self.common, &self.opts)
    }

    pub fn extract_payload(&self, u: &[u8]) -> Vec<u8> {
        self.config.information_set.iter().map(|&i| u[i - 1]).collect()
    }

    /// One full trial on the payload, channel and common streams of `seed`.
    pub fn run_trial(&self, seed: u64, trial: u64) -> Result<TrialRecord> {
        let mut payload_rng = stream_rng(seed, Stream::Payload, trial);
        let payload: Vec<u8> = (0..self.payload_len()).map(|_| payload_rng.gen_range(0..=1)).collect();
        let enc = self.encode(&payload)?;
        let out = transmit(&enc.g, self.params, &mut stream_rng(seed, Stream::Channel, trial));
        let seg = segment_with_genie(&enc.g, &out.kept, &self.layout)?;
        let dec = self.decode_blocks(&seg.blocks)?;
        let decoded = self.extract_payload(&dec.u);
        let bit_errors = decoded.iter().zip(&payload).filter(|(a, b)| a != b).count();
        Ok(TrialRecord {
            trial,
            frame_error: bit_errors > 0,
            segmentation_ok: seg.success(),
            bit_errors,
            zero_mass: dec.zero_mass.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub frame_error: bool,
    /// Every guard-band cut was correct.
    pub segmentation_ok: bool,
    pub bit_errors: usize,
    /// Information indices decided on a zero-probability event.
    pub zero_mass: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub n: u32,
    pub n0: u32,
    pub xi: f64,
    pub blocks: usize,
    /// `ℓ_t` for `t = n0+1 ..= n`.
    pub guard_lengths: Vec<usize>,
    /// `Λ`.
    pub encoded_len: usize,
}

impl From<&GuardLayout> for LayoutSummary {
    fn from(l: &GuardLayout) -> Self {
        Self {
            n: l.n,
            n0: l.n0,
            xi: l.xi,
            blocks: l.num_blocks(),
            guard_lengths: (l.n0 + 1..=l.n).map(|t| l.guard_len(t)).collect(),
            encoded_len: l.encoded_len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub frame_errors: u64,
    pub fer: f64,
    /// Wilson 95% interval of the FER.
    pub fer_interval: (f64, f64),
    pub ber: f64,
    pub segmentation_failures: u64,
    /// Payload bits per `N`.
    pub rate: f64,
    /// Payload bits per transmitted symbol, `k / Λ`.
    pub rate_with_guards: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: CodeConfig,
    pub seed: u64,
    pub trials: u64,
    /// How each trial's randomness is derived from `seed`.
    pub stream_scheme: String,
    pub layout: LayoutSummary,
    pub aggregates: Aggregates,
    pub records: Vec<TrialRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Recompute aggregates from per-trial records.
pub fn aggregate(records: &[TrialRecord], payload_len: usize, layout: &GuardLayout) -> Aggregates {
    let trials = records.len() as u64;
    let frame_errors = records.iter().filter(|r| r.frame_error).count() as u64;
    let bits = (payload_len as u64 * trials).max(1);
    let bit_errors: u64 = records.iter().map(|r| r.bit_errors as u64).sum();
    Aggregates {
        frame_errors,
        fer: if trials == 0 { 0.0 } else { frame_errors as f64 / trials as f64 },
        fer_interval: wilson_interval(frame_errors, trials),
        ber: bit_errors as f64 / bits as f64,
        segmentation_failures: records.iter().filter(|r| !r.segmentation_ok).count() as u64,
        rate: payload_len as f64 / layout.len() as f64,
        rate_with_guards: payload_len as f64 / layout.encoded_len() as f64,
    }
}

/// Run `trials` independent trials. Results do not depend on `exec`.
pub fn run_experiment(config: &CodeConfig, trials: u64, seed: u64, exec: Execution) -> Result<ExperimentReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let scheme = Scheme::new(config.clone())?;
    let records = map_range(exec, 0..trials as usize, |t| scheme.run_trial(seed, t as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        seed,
        trials,
        stream_scheme: "chacha8(seed) with stream (purpose << 48 | trial); purposes payload=1 channel=2".into(),
        layout: LayoutSummary::from(&scheme.layout),
        aggregates: aggregate(&records, scheme.payload_len(), &scheme.layout),
        records,
        timings: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{estimate_index_stats, select_information_set, ProcessSpec, Selection, StatsOptions};

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036_993_5).abs() < 1e-6);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.403_831_7).abs() < 1e-6 && (hi - 0.596_168_3).abs() < 1e-6);
    }

    /// Indices whose genie posterior was certain in every noiseless trial.
    fn certain_indices(cfg: &CodeConfig) -> Vec<usize> {
        let mut opts = StatsOptions::new(2000, 11);
        opts.exec = Execution::Sequential;
        let stats = estimate_index_stats(cfg, &opts).unwrap();
        select_information_set(&stats, Selection::Threshold(1e-12)).unwrap()
    }

    #[test]
    fn noiseless_run_is_error_free() {
        let mut cfg = CodeConfig::new(7, 0.75, 0.0, ProcessSpec::Uniform).unwrap();
        cfg.information_set = certain_indices(&cfg);
        assert!(cfg.information_set.len() > 64);
        let report = run_experiment(&cfg, 30, 3, Execution::Sequential).unwrap();
        assert_eq!(report.aggregates.frame_errors, 0);
        assert_eq!(report.aggregates.segmentation_failures, 0);
    }

    #[test]
    fn markov_noiseless_roundtrip() {
        let mut cfg = CodeConfig::new(6, 0.85, 0.0, ProcessSpec::Markov { p_same: 0.6 }).unwrap();
        cfg.information_set = certain_indices(&cfg);
        assert!(!cfg.information_set.is_empty());
        let report = run_experiment(&cfg, 20, 5, Execution::Sequential).unwrap();
        assert_eq!(report.aggregates.frame_errors, 0);
    }

    #[test]
    fn modes_agree() {
        let mut cfg = CodeConfig::new(6, 0.5, 0.1, ProcessSpec::Uniform).unwrap();
        cfg.information_set = (33..=64).collect();
        let a = run_experiment(&cfg, 12, 9, Execution::Sequential).unwrap();
        let b = run_experiment(&cfg, 12, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_frozen_has_no_frame_errors() {
        let cfg = CodeConfig::new(6, 0.5, 0.3, ProcessSpec::Uniform).unwrap();
        let report = run_experiment(&cfg, 5, 1, Execution::Sequential).unwrap();
        assert_eq!(report.aggregates.fer, 0.0);
    }
}
