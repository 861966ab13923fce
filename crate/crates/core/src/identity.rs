//! Numerical verification of the flow-conservation identities.
//!
//! Each identity relates catalog quantities of one system:
//!
//! * `lemma1`  — `I(x0; e^n) = I(x^n → e^n)` (deterministic encoder)
//! * `lemma2`  — `I(y^n → e^n) = I(x0; e^n) + I(y^n → e^n | x0)` (universal)
//! * `theorem1` — `I(y^n → e^n) = I(x^n → e^n) + I(y^n → e^n | x0)`
//!   (deterministic encoder)
//! * `theorem2` — `I(x^n → y^n) ≥ I(x^{n-1} → e^{n-1}) + Σ I(e^{i-1}; y_i |
//!   y^{i-1})`, checked together with its exact form: the slack equals
//!   `I(y^n; x0 | e^{n-1})` (deterministic encoder)
//! * `theorem3` — `Σ I(e^{i-1}; x_i | x^{i-1}) = Σ I(y^{i-1}; x_i | x^{i-1})
//!   + Σ I(e^{i-1}; x_i | x^{i-1}, y^{i-1})` (universal)
//! * `massey_conservation` — `I(x^n; y^n) = I(x^n → y^n) + Σ I(y^{i-1}; x_i |
//!   x^{i-1})` (universal, distribution-free)
//! * `massey_inequality` — `I(x^n → y^n) ≤ I(x^n; y^n)` (universal)
//!
//! The identities that rely on the channel input being a function of the
//! message and past feedback are only asserted for deterministic encoders;
//! for stochastic encoders they are reported `out_of_scope` with the
//! residual still logged.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{named_quantities, QuantityCatalog, QuantityId};
use crate::system::{generate_random, Alphabets, EncoderMode, SystemSpec};
use crate::trajectory::{build_joint, TrajectoryDistribution};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default verification tolerance in bits.
pub const DEFAULT_TOLERANCE_BITS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    Lemma1,
    Lemma2,
    Theorem1,
    Theorem2,
    Theorem3,
    MasseyConservation,
    MasseyInequality,
}

impl IdentityId {
    pub const ALL: [IdentityId; 7] = [
        IdentityId::Lemma1,
        IdentityId::Lemma2,
        IdentityId::Theorem1,
        IdentityId::Theorem2,
        IdentityId::Theorem3,
        IdentityId::MasseyConservation,
        IdentityId::MasseyInequality,
    ];

    pub fn requires_deterministic_encoder(self) -> bool {
        matches!(
            self,
            IdentityId::Lemma1 | IdentityId::Theorem1 | IdentityId::Theorem2
        )
    }

    pub fn relation(self) -> Relation {
        match self {
            IdentityId::Theorem2 | IdentityId::MasseyInequality => Relation::LowerBound,
            _ => Relation::Equality,
        }
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IdentityId::Lemma1 => "lemma1",
            IdentityId::Lemma2 => "lemma2",
            IdentityId::Theorem1 => "theorem1",
            IdentityId::Theorem2 => "theorem2",
            IdentityId::Theorem3 => "theorem3",
            IdentityId::MasseyConservation => "massey_conservation",
            IdentityId::MasseyInequality => "massey_inequality",
        };
        write!(f, "{s}")
    }
}

/// How lhs and rhs relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs = Σ rhs`, so `|residual| ≤ τ` must hold.
    Equality,
    /// `lhs ≥ Σ rhs`, so `residual ≥ -τ` must hold.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    OutOfScope,
}

/// One labeled side of an identity.
#[derive(Debug, Clone, Serialize)]
pub struct ReportTerm {
    pub label: String,
    pub bits: f64,
}

/// Outcome of checking one identity on one system.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: IdentityId,
    pub relation: Relation,
    pub lhs: ReportTerm,
    pub rhs: Vec<ReportTerm>,
    /// `lhs - Σ rhs`.
    pub residual_bits: f64,
    /// The analytic slack `I(y^n; x0 | e^{n-1})`; present only for theorem2,
    /// whose verdict also requires `|residual - gap| ≤ τ` and `gap ≥ -τ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_bits: Option<f64>,
    pub requires_deterministic_encoder: bool,
    pub encoder_deterministic: bool,
    pub tolerance_bits: f64,
    pub verdict: Verdict,
}

impl IdentityReport {
    pub fn in_scope(&self) -> bool {
        self.verdict != Verdict::OutOfScope
    }
}

fn term(catalog: &QuantityCatalog, id: QuantityId) -> ReportTerm {
    ReportTerm {
        label: id.label().to_string(),
        bits: catalog.value(id),
    }
}

/// Check one identity against an already computed catalog.
pub fn verify_with_catalog(
    catalog: &QuantityCatalog,
    encoder_deterministic: bool,
    identity: IdentityId,
    tolerance_bits: f64,
) -> IdentityReport {
    use QuantityId::*;
    let (lhs, rhs, gap) = match identity {
        IdentityId::Lemma1 => (
            term(catalog, MessageToFeedback),
            vec![term(catalog, InputToFeedback)],
            None,
        ),
        IdentityId::Lemma2 => (
            term(catalog, OutputToFeedback),
            vec![
                term(catalog, MessageToFeedback),
                term(catalog, OutputToFeedbackGivenMsg),
            ],
            None,
        ),
        IdentityId::Theorem1 => (
            term(catalog, OutputToFeedback),
            vec![
                term(catalog, InputToFeedback),
                term(catalog, OutputToFeedbackGivenMsg),
            ],
            None,
        ),
        IdentityId::Theorem2 => (
            term(catalog, InputToOutput),
            vec![
                term(catalog, InputToFeedbackTruncated),
                term(catalog, DelayedFeedbackToOutput),
            ],
            Some(catalog.value(MessageOutputGivenFeedbackPast)),
        ),
        IdentityId::Theorem3 => (
            term(catalog, DelayedFeedbackToInput),
            vec![
                term(catalog, DelayedOutputToInput),
                term(catalog, FeedbackToInputGivenOutputPast),
            ],
            None,
        ),
        IdentityId::MasseyConservation => (
            term(catalog, InputOutputMutual),
            vec![
                term(catalog, InputToOutput),
                term(catalog, DelayedOutputToInput),
            ],
            None,
        ),
        IdentityId::MasseyInequality => (
            term(catalog, InputOutputMutual),
            vec![term(catalog, InputToOutput)],
            None,
        ),
    };

    let rhs_sum: f64 = rhs.iter().map(|t| t.bits).sum();
    let residual_bits = lhs.bits - rhs_sum;
    let relation = identity.relation();

    let mut satisfied = match relation {
        Relation::Equality => residual_bits.abs() <= tolerance_bits,
        Relation::LowerBound => residual_bits >= -tolerance_bits,
    };
    if let Some(gap) = gap {
        satisfied = satisfied
            && (residual_bits - gap).abs() <= tolerance_bits
            && gap >= -tolerance_bits;
    }

    let requires = identity.requires_deterministic_encoder();
    let verdict = if requires && !encoder_deterministic {
        Verdict::OutOfScope
    } else if satisfied {
        Verdict::Holds
    } else {
        Verdict::Violated
    };

    IdentityReport {
        identity,
        relation,
        lhs,
        rhs,
        residual_bits,
        gap_bits: gap,
        requires_deterministic_encoder: requires,
        encoder_deterministic,
        tolerance_bits,
        verdict,
    }
}

/// Check one identity on a distribution built from `spec`.
pub fn verify(
    dist: &TrajectoryDistribution,
    spec: &SystemSpec,
    identity: IdentityId,
    tolerance_bits: f64,
) -> Result<IdentityReport> {
    let catalog = named_quantities(dist)?;
    let det = spec.encoder_is_deterministic()?;
    Ok(verify_with_catalog(&catalog, det, identity, tolerance_bits))
}

/// Check every identity. The quantity catalog is computed once and shared.
pub fn verify_all(
    dist: &TrajectoryDistribution,
    spec: &SystemSpec,
    tolerance_bits: f64,
) -> Result<Vec<IdentityReport>> {
    let catalog = named_quantities(dist)?;
    let det = spec.encoder_is_deterministic()?;
    Ok(IdentityId::ALL
        .iter()
        .map(|&id| verify_with_catalog(&catalog, det, id, tolerance_bits))
        .collect())
}

/// True when no in-scope identity is violated.
pub fn all_in_scope_hold(reports: &[IdentityReport]) -> bool {
    reports.iter().all(|r| r.verdict != Verdict::Violated)
}

/// Configuration of a fuzzing run over random systems.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzConfig {
    pub master_seed: u64,
    pub trials: u64,
    /// Alphabet sizes are drawn uniformly from `2..=alphabet_max`
    /// (or fixed at 1 when `alphabet_max` is 1).
    pub alphabet_max: usize,
    /// Horizons are drawn uniformly from `1..=horizon_max`.
    pub horizon_max: usize,
    pub encoder_mode: EncoderMode,
    pub tolerance_bits: f64,
    #[serde(skip)]
    pub guard: usize,
}

/// Per-identity aggregates over a fuzzing run.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityFuzzStats {
    pub identity: IdentityId,
    pub in_scope_trials: u64,
    pub out_of_scope_trials: u64,
    pub violations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_residual_in_scope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_residual_in_scope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_residual_out_of_scope: Option<f64>,
    /// theorem2 only: worst `|residual - gap|` over in-scope trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_gap_mismatch: Option<f64>,
    /// theorem2 only: smallest gap seen over in-scope trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap_bits: Option<f64>,
}

/// Everything needed to rebuild a violating system.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzViolation {
    pub trial_index: u64,
    /// Seed to pass to [`generate_random`] with the dims below.
    pub generator_seed: u64,
    pub alphabets: Alphabets,
    pub horizon: usize,
    pub encoder_mode: EncoderMode,
    pub identity: IdentityId,
    pub residual_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_bits: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzSummary {
    pub config: FuzzConfig,
    pub trials_run: u64,
    pub identities: Vec<IdentityFuzzStats>,
    pub violations: Vec<FuzzViolation>,
    pub all_in_scope_hold: bool,
}

/// SplitMix64 step; the documented trial-seed derivation is
/// `splitmix64(master_seed + (trial_index + 1) · 0x9E3779B97F4A7C15)`.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(
        master_seed.wrapping_add((trial_index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

struct TrialOutcome {
    trial_index: u64,
    generator_seed: u64,
    alphabets: Alphabets,
    horizon: usize,
    reports: Vec<IdentityReport>,
}

fn run_trial(config: &FuzzConfig, trial_index: u64) -> Result<TrialOutcome> {
    let seed = trial_seed(config.master_seed, trial_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = if config.alphabet_max >= 2 { 2 } else { 1 };
    let alphabets = Alphabets::new(
        rng.gen_range(lo..=config.alphabet_max),
        rng.gen_range(lo..=config.alphabet_max),
        rng.gen_range(lo..=config.alphabet_max),
        rng.gen_range(lo..=config.alphabet_max),
    );
    let horizon = rng.gen_range(1..=config.horizon_max);
    let generator_seed = rng.next_u64();

    let spec = generate_random(
        generator_seed,
        alphabets,
        horizon,
        config.encoder_mode,
        config.guard,
    )?;
    let joint = build_joint(&spec, config.guard)?;
    let reports = verify_all(&joint, &spec, config.tolerance_bits)?;
    Ok(TrialOutcome {
        trial_index,
        generator_seed,
        alphabets,
        horizon,
        reports,
    })
}

/// Run seeded random trials and aggregate residual statistics.
///
/// Trials run in parallel; the aggregation folds them in trial order, so the
/// summary is independent of the worker count.
pub fn fuzz(config: &FuzzConfig) -> Result<FuzzSummary> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("fuzz needs at least one trial".into()));
    }
    if config.alphabet_max == 0 || config.horizon_max == 0 {
        return Err(Error::InvalidConfig(
            "alphabet_max and horizon_max must be positive".into(),
        ));
    }
    let per_step = (config.alphabet_max as u128).pow(3);
    let mut worst = config.alphabet_max as u128;
    for _ in 0..config.horizon_max {
        worst = worst.saturating_mul(per_step);
    }
    if worst > config.guard as u128 {
        return Err(Error::GuardExceeded {
            required: worst,
            guard: config.guard,
        });
    }

    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;

    let mut stats: Vec<IdentityFuzzStats> = IdentityId::ALL
        .iter()
        .map(|&identity| IdentityFuzzStats {
            identity,
            in_scope_trials: 0,
            out_of_scope_trials: 0,
            violations: 0,
            max_abs_residual_in_scope: None,
            min_residual_in_scope: None,
            max_abs_residual_out_of_scope: None,
            max_abs_gap_mismatch: None,
            min_gap_bits: None,
        })
        .collect();
    let mut violations = Vec::new();

    for outcome in &outcomes {
        for (slot, report) in stats.iter_mut().zip(&outcome.reports) {
            debug_assert_eq!(slot.identity, report.identity);
            match report.verdict {
                Verdict::OutOfScope => {
                    slot.out_of_scope_trials += 1;
                    fold_max(
                        &mut slot.max_abs_residual_out_of_scope,
                        report.residual_bits.abs(),
                    );
                }
                verdict => {
                    slot.in_scope_trials += 1;
                    fold_max(&mut slot.max_abs_residual_in_scope, report.residual_bits.abs());
                    fold_min(&mut slot.min_residual_in_scope, report.residual_bits);
                    if let Some(gap) = report.gap_bits {
                        fold_max(
                            &mut slot.max_abs_gap_mismatch,
                            (report.residual_bits - gap).abs(),
                        );
                        fold_min(&mut slot.min_gap_bits, gap);
                    }
                    if verdict == Verdict::Violated {
                        slot.violations += 1;
                        violations.push(FuzzViolation {
                            trial_index: outcome.trial_index,
                            generator_seed: outcome.generator_seed,
                            alphabets: outcome.alphabets,
                            horizon: outcome.horizon,
                            encoder_mode: config.encoder_mode,
                            identity: report.identity,
                            residual_bits: report.residual_bits,
                            gap_bits: report.gap_bits,
                        });
                    }
                }
            }
        }
    }

    let all_hold = violations.is_empty();
    Ok(FuzzSummary {
        config: config.clone(),
        trials_run: config.trials,
        identities: stats,
        violations,
        all_in_scope_hold: all_hold,
    })
}

fn fold_max(slot: &mut Option<f64>, value: f64) {
    *slot = Some(slot.map_or(value, |m| m.max(value)));
}

fn fold_min(slot: &mut Option<f64>, value: f64) {
    *slot = Some(slot.map_or(value, |m| m.min(value)));
}
