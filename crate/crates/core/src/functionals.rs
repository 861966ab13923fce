//! Directed-information functionals over trajectory distributions.
//!
//! Everything reduces to one generalized primitive,
//!
//! ```text
//! Σ_{i=1..k} I(src^{i-ℓ}; dst_i | dst^{i-1}, cond^{i-ℓ_c}, …, static)
//! ```
//!
//! which covers directed information `I(x^n → y^n) = Σ I(x^i; y_i | y^{i-1})`
//! (source lag 0, no conditions), causal conditioning
//! `I(x^n → y^n || z^n) = Σ I(x^i; y_i | y^{i-1}, z^i)` (a lag-0 condition),
//! delayed flows such as `Σ I(e^{i-1}; y_i | y^{i-1})` (source lag 1, with
//! the empty history contributing exactly 0 at i = 1), and message
//! conditioning via a static coordinate set. Mutual-information and entropy
//! query forms reuse the same selectors without the per-step sum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::{Coord, Stream};
use crate::trajectory::{Selector, TrajectoryDistribution};

/// What a query evaluates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryForm {
    Entropy,
    MutualInformation,
    DirectedInformation,
}

/// A stream together with a per-term lag (0 selects `s^i` in term `i`,
/// 1 selects `s^{i-1}`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamLag {
    pub stream: Stream,
    pub lag: usize,
}

impl StreamLag {
    pub fn new(stream: Stream, lag: usize) -> Self {
        Self { stream, lag }
    }
}

/// Selector-based description of one information functional.
#[derive(Debug, Clone)]
pub struct InfoQuery {
    pub form: QueryForm,
    pub src: Option<StreamLag>,
    pub dst: Option<Stream>,
    /// Causally conditioned streams: each contributes `cond^{i-lag}` to every
    /// term (for mutual information, `cond^{k-lag}` once).
    pub causal_conditions: Vec<StreamLag>,
    /// Fixed coordinates conditioned on in every term, e.g. the message.
    pub static_condition: Selector,
    /// Restrict the sum to terms `i = 1..k`; defaults to the distribution's
    /// horizon.
    pub horizon_override: Option<usize>,
}

impl InfoQuery {
    /// `I(src^n → dst^n)`.
    pub fn directed(src: Stream, dst: Stream) -> Self {
        Self {
            form: QueryForm::DirectedInformation,
            src: Some(StreamLag::new(src, 0)),
            dst: Some(dst),
            causal_conditions: Vec::new(),
            static_condition: Selector::empty(),
            horizon_override: None,
        }
    }

    /// `Σ I(src^{i-1}; dst_i | dst^{i-1})` — flow through a unit delay.
    pub fn delayed(src: Stream, dst: Stream) -> Self {
        let mut q = Self::directed(src, dst);
        q.src = Some(StreamLag::new(src, 1));
        q
    }

    /// `I(a_full; b_full)` between two stream sequences (M means `{x0}`).
    pub fn mutual(a: Stream, b: Stream) -> Self {
        Self {
            form: QueryForm::MutualInformation,
            src: Some(StreamLag::new(a, 0)),
            dst: Some(b),
            causal_conditions: Vec::new(),
            static_condition: Selector::empty(),
            horizon_override: None,
        }
    }

    pub fn with_static(mut self, sel: Selector) -> Self {
        self.static_condition = sel;
        self
    }

    pub fn with_condition(mut self, cond: StreamLag) -> Self {
        self.causal_conditions.push(cond);
        self
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.horizon_override = Some(k);
        self
    }
}

/// Value of a query plus its per-step terms (one per `i` for directed
/// information, a single term otherwise).
#[derive(Debug, Clone, Serialize)]
pub struct DiEvaluation {
    pub value_bits: f64,
    pub per_step_terms: Vec<f64>,
}

fn seq_selector(stream: Stream, upto: usize) -> Selector {
    match stream {
        Stream::M => Selector::message(),
        s => Selector::prefix(s, upto),
    }
}

/// Evaluate a query against a distribution.
///
/// Per-step terms are each clamped at the `-1e-9` bit threshold (see
/// [`crate::trajectory::CLAMP_EPS_BITS`]); the value is their sum in
/// ascending step order.
pub fn generalized_di(dist: &TrajectoryDistribution, query: &InfoQuery) -> Result<DiEvaluation> {
    let n = dist.horizon();
    let k = query.horizon_override.unwrap_or(n);
    if k > n {
        return Err(Error::InvalidQuery(format!(
            "horizon override {k} exceeds distribution horizon {n}"
        )));
    }

    match query.form {
        QueryForm::DirectedInformation => {
            let src = query
                .src
                .ok_or_else(|| Error::InvalidQuery("directed information needs a source".into()))?;
            let dst = query
                .dst
                .ok_or_else(|| Error::InvalidQuery("directed information needs a destination".into()))?;
            if src.stream == Stream::M || dst == Stream::M {
                return Err(Error::InvalidQuery(
                    "the message is not a sequence; use it as a static condition or a mutual-information argument"
                        .into(),
                ));
            }
            if src.lag > 1 || query.causal_conditions.iter().any(|c| c.lag > 1) {
                return Err(Error::InvalidQuery("lags must be 0 or 1".into()));
            }

            let term_sets: Vec<Option<(Selector, Selector, Selector)>> = (1..=k)
                .map(|i| {
                    let src_upto = i.saturating_sub(src.lag);
                    if src_upto == 0 {
                        return None;
                    }
                    let a = Selector::prefix(src.stream, src_upto);
                    let b = Selector::single(Coord::new(dst, i));
                    let mut c = Selector::prefix(dst, i - 1);
                    for cond in &query.causal_conditions {
                        c = c.union(&seq_selector_lagged(cond, i));
                    }
                    c = c.union(&query.static_condition);
                    Some((a, b, c))
                })
                .collect();

            let mut terms = vec![0.0; k];
            let mut current: Option<TrajectoryDistribution> = None;
            for i in (1..=k).rev() {
                let Some((a, b, c)) = &term_sets[i - 1] else {
                    continue;
                };
                let union = a.union(b).union(c);
                let cur = match &current {
                    Some(d) => d.marginal(&union)?,
                    None => dist.marginal(&union)?,
                };
                terms[i - 1] = cur.cmi(a, b, c)?;
                current = Some(cur);
            }
            let value_bits = terms.iter().sum();
            Ok(DiEvaluation {
                value_bits,
                per_step_terms: terms,
            })
        }
        QueryForm::MutualInformation => {
            let src = query
                .src
                .ok_or_else(|| Error::InvalidQuery("mutual information needs two arguments".into()))?;
            let dst = query
                .dst
                .ok_or_else(|| Error::InvalidQuery("mutual information needs two arguments".into()))?;
            let a = seq_selector(src.stream, k.saturating_sub(src.lag));
            let b = seq_selector(dst, k);
            let mut c = Selector::empty();
            for cond in &query.causal_conditions {
                c = c.union(&seq_selector(cond.stream, k.saturating_sub(cond.lag)));
            }
            c = c.union(&query.static_condition);
            let value_bits = if a.is_empty() || b.is_empty() {
                0.0
            } else {
                dist.cmi(&a, &b, &c)?
            };
            Ok(DiEvaluation {
                value_bits,
                per_step_terms: vec![value_bits],
            })
        }
        QueryForm::Entropy => {
            let mut a = query.static_condition.clone();
            if let Some(src) = query.src {
                a = a.union(&seq_selector(src.stream, k.saturating_sub(src.lag)));
            }
            if a.is_empty() {
                return Err(Error::EmptySelector);
            }
            let value_bits = dist.entropy(&a)?;
            Ok(DiEvaluation {
                value_bits,
                per_step_terms: vec![value_bits],
            })
        }
    }
}

fn seq_selector_lagged(cond: &StreamLag, i: usize) -> Selector {
    seq_selector(cond.stream, i.saturating_sub(cond.lag))
}

/// Stable identifiers of the quantities in the standard catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantityId {
    /// `I(x0; e^n)` — mutual information between the message and the
    /// feedback sequence.
    MessageToFeedback,
    /// `I(x^n → e^n)`
    InputToFeedback,
    /// `I(y^n → e^n)`
    OutputToFeedback,
    /// `I(y^n → e^n | x0)`
    OutputToFeedbackGivenMsg,
    /// `I(x^n → y^n)`
    InputToOutput,
    /// `I(x^{n-1} → e^{n-1})` — both sequences truncated by one step.
    InputToFeedbackTruncated,
    /// `Σ I(e^{i-1}; y_i | y^{i-1})`
    DelayedFeedbackToOutput,
    /// `Σ I(e^{i-1}; x_i | x^{i-1})`
    DelayedFeedbackToInput,
    /// `Σ I(y^{i-1}; x_i | x^{i-1})`
    DelayedOutputToInput,
    /// `Σ I(e^{i-1}; x_i | x^{i-1}, y^{i-1})`
    FeedbackToInputGivenOutputPast,
    /// `Σ I(e^i; x_i | x^{i-1}, y^{i-1})` — the undelayed-source variant of
    /// the previous quantity; reported alongside it.
    FeedbackToInputGivenOutputPastUndelayed,
    /// `I(y^n; x0 | e^{n-1})`
    MessageOutputGivenFeedbackPast,
    /// `I(x^n; y^n)`
    InputOutputMutual,
}

impl QuantityId {
    pub const ALL: [QuantityId; 13] = [
        QuantityId::MessageToFeedback,
        QuantityId::InputToFeedback,
        QuantityId::OutputToFeedback,
        QuantityId::OutputToFeedbackGivenMsg,
        QuantityId::InputToOutput,
        QuantityId::InputToFeedbackTruncated,
        QuantityId::DelayedFeedbackToOutput,
        QuantityId::DelayedFeedbackToInput,
        QuantityId::DelayedOutputToInput,
        QuantityId::FeedbackToInputGivenOutputPast,
        QuantityId::FeedbackToInputGivenOutputPastUndelayed,
        QuantityId::MessageOutputGivenFeedbackPast,
        QuantityId::InputOutputMutual,
    ];

    /// Stable display label, e.g. `DI[X->E]` or `DI[Y->E | M]`.
    pub fn label(self) -> &'static str {
        match self {
            QuantityId::MessageToFeedback => "MI[M;E]",
            QuantityId::InputToFeedback => "DI[X->E]",
            QuantityId::OutputToFeedback => "DI[Y->E]",
            QuantityId::OutputToFeedbackGivenMsg => "DI[Y->E | M]",
            QuantityId::InputToOutput => "DI[X->Y]",
            QuantityId::InputToFeedbackTruncated => "DI[X->E]@(n-1)",
            QuantityId::DelayedFeedbackToOutput => "DDI[E->Y]",
            QuantityId::DelayedFeedbackToInput => "DDI[E->X]",
            QuantityId::DelayedOutputToInput => "DDI[Y->X]",
            QuantityId::FeedbackToInputGivenOutputPast => "CCDI[E->X || Y-]",
            QuantityId::FeedbackToInputGivenOutputPastUndelayed => "CCDI[E0->X || Y-]",
            QuantityId::MessageOutputGivenFeedbackPast => "CMI[Y;M|E-]",
            QuantityId::InputOutputMutual => "MI[X;Y]",
        }
    }

    /// Defining sum at horizon `n`, as a plain-text formula.
    pub fn formula(self, n: usize) -> String {
        let m = n.saturating_sub(1);
        match self {
            QuantityId::MessageToFeedback => format!("I(x0; e^{n})"),
            QuantityId::InputToFeedback => {
                format!("sum_{{i=1..{n}}} I(x^i; e_i | e^{{i-1}})")
            }
            QuantityId::OutputToFeedback => {
                format!("sum_{{i=1..{n}}} I(y^i; e_i | e^{{i-1}})")
            }
            QuantityId::OutputToFeedbackGivenMsg => {
                format!("sum_{{i=1..{n}}} I(y^i; e_i | e^{{i-1}}, x0)")
            }
            QuantityId::InputToOutput => {
                format!("sum_{{i=1..{n}}} I(x^i; y_i | y^{{i-1}})")
            }
            QuantityId::InputToFeedbackTruncated => {
                format!("sum_{{i=1..{m}}} I(x^i; e_i | e^{{i-1}})")
            }
            QuantityId::DelayedFeedbackToOutput => {
                format!("sum_{{i=1..{n}}} I(e^{{i-1}}; y_i | y^{{i-1}})")
            }
            QuantityId::DelayedFeedbackToInput => {
                format!("sum_{{i=1..{n}}} I(e^{{i-1}}; x_i | x^{{i-1}})")
            }
            QuantityId::DelayedOutputToInput => {
                format!("sum_{{i=1..{n}}} I(y^{{i-1}}; x_i | x^{{i-1}})")
            }
            QuantityId::FeedbackToInputGivenOutputPast => {
                format!("sum_{{i=1..{n}}} I(e^{{i-1}}; x_i | x^{{i-1}}, y^{{i-1}})")
            }
            QuantityId::FeedbackToInputGivenOutputPastUndelayed => {
                format!("sum_{{i=1..{n}}} I(e^i; x_i | x^{{i-1}}, y^{{i-1}})")
            }
            QuantityId::MessageOutputGivenFeedbackPast => {
                format!("I(y^{n}; x0 | e^{m})")
            }
            QuantityId::InputOutputMutual => format!("I(x^{n}; y^{n})"),
        }
    }

    /// The query computing this quantity at horizon `n`.
    pub fn query(self, n: usize) -> InfoQuery {
        match self {
            QuantityId::MessageToFeedback => InfoQuery::mutual(Stream::M, Stream::E),
            QuantityId::InputToFeedback => InfoQuery::directed(Stream::X, Stream::E),
            QuantityId::OutputToFeedback => InfoQuery::directed(Stream::Y, Stream::E),
            QuantityId::OutputToFeedbackGivenMsg => {
                InfoQuery::directed(Stream::Y, Stream::E).with_static(Selector::message())
            }
            QuantityId::InputToOutput => InfoQuery::directed(Stream::X, Stream::Y),
            QuantityId::InputToFeedbackTruncated => {
                InfoQuery::directed(Stream::X, Stream::E).truncated(n.saturating_sub(1))
            }
            QuantityId::DelayedFeedbackToOutput => InfoQuery::delayed(Stream::E, Stream::Y),
            QuantityId::DelayedFeedbackToInput => InfoQuery::delayed(Stream::E, Stream::X),
            QuantityId::DelayedOutputToInput => InfoQuery::delayed(Stream::Y, Stream::X),
            QuantityId::FeedbackToInputGivenOutputPast => {
                InfoQuery::delayed(Stream::E, Stream::X).with_condition(StreamLag::new(Stream::Y, 1))
            }
            QuantityId::FeedbackToInputGivenOutputPastUndelayed => {
                InfoQuery::directed(Stream::E, Stream::X).with_condition(StreamLag::new(Stream::Y, 1))
            }
            QuantityId::MessageOutputGivenFeedbackPast => InfoQuery::mutual(Stream::Y, Stream::M)
                .with_condition(StreamLag::new(Stream::E, 1)),
            QuantityId::InputOutputMutual => InfoQuery::mutual(Stream::X, Stream::Y),
        }
    }
}

/// One labeled catalog value.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub id: QuantityId,
    pub label: String,
    pub formula: String,
    pub value_bits: f64,
    pub per_step_terms: Vec<f64>,
}

/// Every standard quantity, evaluated on one distribution.
#[derive(Debug, Clone, Serialize)]
pub struct QuantityCatalog {
    pub horizon: usize,
    pub entries: Vec<CatalogEntry>,
}

impl QuantityCatalog {
    pub fn entry(&self, id: QuantityId) -> &CatalogEntry {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .expect("catalog contains every standard quantity")
    }

    pub fn value(&self, id: QuantityId) -> f64 {
        self.entry(id).value_bits
    }
}

/// Evaluate the full quantity catalog.
pub fn named_quantities(dist: &TrajectoryDistribution) -> Result<QuantityCatalog> {
    let n = dist.horizon();
    let mut entries = Vec::with_capacity(QuantityId::ALL.len());
    for id in QuantityId::ALL {
        let eval = generalized_di(dist, &id.query(n))?;
        entries.push(CatalogEntry {
            id,
            label: id.label().to_string(),
            formula: id.formula(n),
            value_bits: eval.value_bits,
            per_step_terms: eval.per_step_terms,
        });
    }
    Ok(QuantityCatalog {
        horizon: n,
        entries,
    })
}
