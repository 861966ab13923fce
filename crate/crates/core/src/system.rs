//! Closed-loop system descriptions.
//!
//! A system couples four symbol streams over a finite horizon `n`:
//!
//! * `m` — the message `x0`, drawn once at time 0 from `message_prior`;
//! * `x` — channel inputs `x1..xn`, produced by the encoder
//!   `p(x_i | x0, x^{i-1}, e^{i-1})`;
//! * `y` — channel outputs `y1..yn`, produced by the forward channel
//!   `p(y_i | x^i, y^{i-1})`;
//! * `e` — feedback symbols `e1..en`, produced by the feedback channel
//!   `p(e_i | e^{i-1}, y^i)`.
//!
//! Each kernel is one table per time step. A row holds the output
//! distribution for one history; rows are ordered by the mixed-radix index of
//! the history tuple, with the history coordinates listed in trajectory order
//! (`x0, x1, y1, e1, x2, y2, e2, …` restricted to the coordinates the kernel
//! conditions on) and the oldest coordinate most significant. See
//! [`crate::index`] for the exact digit convention.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::{self, TupleCounter};

/// Row sums must match 1 within this tolerance to pass validation.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Row-sum deviations at or below this bound may be renormalized in repair
/// mode; anything larger is always a violation.
pub const REPAIR_TOL: f64 = 1e-9;

/// One of the four symbol streams of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    /// The message `x0`; exists only at time 0.
    M,
    /// Channel inputs `x1..xn`.
    X,
    /// Channel outputs `y1..yn`.
    Y,
    /// Feedback symbols `e1..en`.
    E,
}

impl Stream {
    fn rank(self) -> usize {
        match self {
            Stream::M => 0,
            Stream::X => 1,
            Stream::Y => 2,
            Stream::E => 3,
        }
    }
}

/// One coordinate of a trajectory: a stream at a time index.
///
/// Coordinates order themselves by position in the trajectory layout
/// `(x0, x1, y1, e1, …, xn, yn, en)`: first by time, then by the per-step
/// sampling order `x → y → e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub stream: Stream,
    pub time: usize,
}

impl Coord {
    pub fn new(stream: Stream, time: usize) -> Self {
        Self { stream, time }
    }

    /// The message coordinate `x0`.
    pub fn msg() -> Self {
        Self::new(Stream::M, 0)
    }

    /// Column label used by CSV exports: `x0`, `x1`, `y1`, `e1`, …
    pub fn label(&self) -> String {
        match self.stream {
            Stream::M => "x0".to_string(),
            Stream::X => format!("x{}", self.time),
            Stream::Y => format!("y{}", self.time),
            Stream::E => format!("e{}", self.time),
        }
    }
}

impl PartialOrd for Coord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Coord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.stream.rank()).cmp(&(other.time, other.stream.rank()))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Symbol counts of the four streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabets {
    pub m: usize,
    pub x: usize,
    pub y: usize,
    pub e: usize,
}

impl Alphabets {
    pub fn new(m: usize, x: usize, y: usize, e: usize) -> Self {
        Self { m, x, y, e }
    }

    pub fn size(&self, stream: Stream) -> usize {
        match stream {
            Stream::M => self.m,
            Stream::X => self.x,
            Stream::Y => self.y,
            Stream::E => self.e,
        }
    }
}

/// Which of the three kernels a table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    MessagePrior,
    Encoder,
    ForwardChannel,
    FeedbackChannel,
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelName::MessagePrior => "message_prior",
            KernelName::Encoder => "encoder",
            KernelName::ForwardChannel => "forward_channel",
            KernelName::FeedbackChannel => "feedback_channel",
        };
        write!(f, "{s}")
    }
}

/// The three conditional kernels, as roles with fixed history shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRole {
    /// `p(x_i | x0, x^{i-1}, e^{i-1})`
    Encoder,
    /// `p(y_i | x^i, y^{i-1})`
    Forward,
    /// `p(e_i | e^{i-1}, y^i)`
    Feedback,
}

impl KernelRole {
    pub const ALL: [KernelRole; 3] = [KernelRole::Encoder, KernelRole::Forward, KernelRole::Feedback];

    pub fn name(self) -> KernelName {
        match self {
            KernelRole::Encoder => KernelName::Encoder,
            KernelRole::Forward => KernelName::ForwardChannel,
            KernelRole::Feedback => KernelName::FeedbackChannel,
        }
    }

    /// Stream the kernel emits into.
    pub fn output_stream(self) -> Stream {
        match self {
            KernelRole::Encoder => Stream::X,
            KernelRole::Forward => Stream::Y,
            KernelRole::Feedback => Stream::E,
        }
    }

    pub fn output_coord(self, step: usize) -> Coord {
        Coord::new(self.output_stream(), step)
    }

    /// History coordinates the step-`step` table conditions on, in
    /// trajectory order (oldest first).
    pub fn history_coords(self, step: usize) -> Vec<Coord> {
        let mut coords = Vec::new();
        match self {
            KernelRole::Encoder => {
                coords.push(Coord::msg());
                for t in 1..step {
                    coords.push(Coord::new(Stream::X, t));
                    coords.push(Coord::new(Stream::E, t));
                }
            }
            KernelRole::Forward => {
                for t in 1..step {
                    coords.push(Coord::new(Stream::X, t));
                    coords.push(Coord::new(Stream::Y, t));
                }
                coords.push(Coord::new(Stream::X, step));
            }
            KernelRole::Feedback => {
                for t in 1..step {
                    coords.push(Coord::new(Stream::Y, t));
                    coords.push(Coord::new(Stream::E, t));
                }
                coords.push(Coord::new(Stream::Y, step));
            }
        }
        coords
    }

    /// The coordinate the shorthand kernels treat as "the current input":
    /// the message for the encoder, `x_i` for the forward channel, `y_i` for
    /// the feedback channel.
    pub fn current_input_coord(self, step: usize) -> Coord {
        match self {
            KernelRole::Encoder => Coord::msg(),
            KernelRole::Forward => Coord::new(Stream::X, step),
            KernelRole::Feedback => Coord::new(Stream::Y, step),
        }
    }

    pub fn history_radices(self, step: usize, alphabets: &Alphabets) -> Vec<usize> {
        self.history_coords(step)
            .iter()
            .map(|c| alphabets.size(c.stream))
            .collect()
    }

    pub fn row_count(self, step: usize, alphabets: &Alphabets) -> usize {
        index::table_len(&self.history_radices(step, alphabets))
    }
}

/// A kernel as written in a spec: either the canonical per-step tables or a
/// shorthand that expands into them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Canonical form: `steps[i-1]` is the table for time step `i`; each
    /// table is a vector of rows; each row a distribution over the output
    /// alphabet, indexed by the mixed-radix history index.
    Table {
        steps: Vec<Vec<Vec<f64>>>,
        /// Optional claim that every row is a point mass. Validated when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        deterministic: Option<bool>,
    },
    /// Binary symmetric crossover on the current input. Both the current
    /// input and the output alphabet must be binary.
    Bsc { eps: f64 },
    /// Output copies the current input. Alphabet sizes must match.
    Identity,
    /// Output is always `value`, regardless of history.
    Constant { value: usize },
    /// Output depends only on the current input symbol: `rows[s]` is the
    /// output distribution for current input `s`.
    Memoryless { rows: Vec<Vec<f64>> },
    /// Encoder-only alias for [`KernelSpec::Identity`]: `x_i = x0`.
    Repetition,
}

impl KernelSpec {
    pub fn is_table(&self) -> bool {
        matches!(self, KernelSpec::Table { .. })
    }
}

/// Full description of one closed-loop system.
///
/// This struct is also the JSON schema of spec files; see the crate README
/// for the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub alphabets: Alphabets,
    pub horizon: usize,
    pub message_prior: Vec<f64>,
    pub encoder: KernelSpec,
    pub forward_channel: KernelSpec,
    pub feedback_channel: KernelSpec,
}

impl SystemSpec {
    pub fn kernel(&self, role: KernelRole) -> &KernelSpec {
        match role {
            KernelRole::Encoder => &self.encoder,
            KernelRole::Forward => &self.forward_channel,
            KernelRole::Feedback => &self.feedback_channel,
        }
    }

    fn kernel_mut(&mut self, role: KernelRole) -> &mut KernelSpec {
        match role {
            KernelRole::Encoder => &mut self.encoder,
            KernelRole::Forward => &mut self.forward_channel,
            KernelRole::Feedback => &mut self.feedback_channel,
        }
    }

    /// Step-`step` table of an expanded kernel. Panics if the kernel is not
    /// in table form; call [`SystemSpec::expand`] first.
    pub fn table(&self, role: KernelRole, step: usize) -> &Vec<Vec<f64>> {
        match self.kernel(role) {
            KernelSpec::Table { steps, .. } => &steps[step - 1],
            _ => panic!("kernel {} is not expanded", role.name()),
        }
    }

    /// Number of entries of the dense joint trajectory table.
    pub fn trajectory_count(&self) -> u128 {
        let per_step =
            self.alphabets.x as u128 * self.alphabets.y as u128 * self.alphabets.e as u128;
        let mut count = self.alphabets.m as u128;
        for _ in 0..self.horizon {
            count = count.saturating_mul(per_step);
        }
        count
    }

    /// Trajectory coordinates `(x0, x1, y1, e1, …, xn, yn, en)`.
    pub fn coords(&self) -> Vec<Coord> {
        let mut coords = vec![Coord::msg()];
        for i in 1..=self.horizon {
            coords.push(Coord::new(Stream::X, i));
            coords.push(Coord::new(Stream::Y, i));
            coords.push(Coord::new(Stream::E, i));
        }
        coords
    }

    pub fn coord_sizes(&self) -> Vec<usize> {
        self.coords()
            .iter()
            .map(|c| self.alphabets.size(c.stream))
            .collect()
    }

    /// Replace every shorthand kernel by its canonical table form.
    ///
    /// Expansion is exact and idempotent; expanding a table is the identity.
    pub fn expand(&self) -> Result<SystemSpec> {
        let mut out = self.clone();
        for role in KernelRole::ALL {
            let expanded = expand_kernel(role, self.kernel(role), &self.alphabets, self.horizon)?;
            *out.kernel_mut(role) = expanded;
        }
        Ok(out)
    }

    pub fn is_expanded(&self) -> bool {
        KernelRole::ALL.iter().all(|&r| self.kernel(r).is_table())
    }

    /// True when every encoder row is an exact point mass (entries exactly
    /// 0.0 or 1.0). Identity verifiers use this to scope the results that
    /// need a deterministic encoder.
    pub fn encoder_is_deterministic(&self) -> Result<bool> {
        let expanded;
        let spec = if self.is_expanded() {
            self
        } else {
            expanded = self.expand()?;
            &expanded
        };
        if let KernelSpec::Table { steps, .. } = spec.kernel(KernelRole::Encoder) {
            Ok(steps
                .iter()
                .flatten()
                .all(|row| row.iter().all(|&p| p == 0.0 || p == 1.0)))
        } else {
            unreachable!("expanded spec has table kernels")
        }
    }

    /// Validate the spec. Structural problems (wrong shapes, impossible
    /// shorthands) are returned as errors; soft problems (row sums, negative
    /// entries, a broken `deterministic` claim) are listed as violations.
    ///
    /// With `repair` set, rows whose sum deviates from 1 by at most
    /// [`REPAIR_TOL`] are renormalized in the returned expanded spec instead
    /// of being reported.
    pub fn validate(&self, repair: bool) -> Result<ValidationReport> {
        if self.alphabets.m == 0
            || self.alphabets.x == 0
            || self.alphabets.y == 0
            || self.alphabets.e == 0
        {
            return Err(Error::Structure {
                kernel: "alphabets".to_string(),
                detail: "alphabet sizes must be positive".to_string(),
            });
        }
        if self.horizon == 0 {
            return Err(Error::Structure {
                kernel: "horizon".to_string(),
                detail: "horizon must be positive".to_string(),
            });
        }
        if self.message_prior.len() != self.alphabets.m {
            return Err(Error::Structure {
                kernel: KernelName::MessagePrior.to_string(),
                detail: format!(
                    "expected {} entries, found {}",
                    self.alphabets.m,
                    self.message_prior.len()
                ),
            });
        }

        let mut expanded = self.expand()?;

        for role in KernelRole::ALL {
            check_table_shape(role, &expanded, &self.alphabets, self.horizon)?;
        }

        let mut violations = Vec::new();
        let mut repairs = Vec::new();

        {
            let mut prior = std::mem::take(&mut expanded.message_prior);
            check_row(
                &mut prior,
                KernelName::MessagePrior,
                0,
                0,
                repair,
                &mut violations,
                &mut repairs,
            );
            expanded.message_prior = prior;
        }

        for role in KernelRole::ALL {
            if let KernelSpec::Table { steps, .. } = expanded.kernel_mut(role) {
                for (step_idx, table) in steps.iter_mut().enumerate() {
                    for (row_idx, row) in table.iter_mut().enumerate() {
                        check_row(
                            row,
                            role.name(),
                            step_idx + 1,
                            row_idx,
                            repair,
                            &mut violations,
                            &mut repairs,
                        );
                    }
                }
            }
        }

        // A declared deterministic encoder must be exactly point masses.
        if let KernelSpec::Table {
            steps,
            deterministic: Some(true),
        } = self.kernel(KernelRole::Encoder)
        {
            for (step_idx, table) in steps.iter().enumerate() {
                for (row_idx, row) in table.iter().enumerate() {
                    let ones = row.iter().filter(|&&p| p == 1.0).count();
                    let zeros = row.iter().filter(|&&p| p == 0.0).count();
                    if ones != 1 || ones + zeros != row.len() {
                        violations.push(Violation {
                            kernel: KernelName::Encoder,
                            step: step_idx + 1,
                            row: row_idx,
                            kind: ViolationKind::NotPointMass,
                        });
                    }
                }
            }
        }

        Ok(ValidationReport {
            violations,
            repairs,
            expanded,
        })
    }

    /// Copy of the spec whose encoder ignores the feedback symbols: every
    /// row is replaced by the row of the same history with all `e`
    /// coordinates set to 0. Useful for building feedback-free systems.
    pub fn with_feedback_blind_encoder(&self) -> Result<SystemSpec> {
        let mut spec = self.expand()?;
        if let KernelSpec::Table { steps, .. } = spec.kernel_mut(KernelRole::Encoder) {
            for (step_idx, table) in steps.iter_mut().enumerate() {
                let step = step_idx + 1;
                let coords = KernelRole::Encoder.history_coords(step);
                let radices = KernelRole::Encoder.history_radices(step, &self.alphabets);
                let old = table.clone();
                for (row_idx, row) in table.iter_mut().enumerate() {
                    let mut tuple = index::decode(row_idx, &radices);
                    for (slot, coord) in tuple.iter_mut().zip(&coords) {
                        if coord.stream == Stream::E {
                            *slot = 0;
                        }
                    }
                    *row = old[index::encode(&tuple, &radices)].clone();
                }
            }
        }
        Ok(spec)
    }

    /// SHA-256 of the canonical (expanded) JSON form, as lowercase hex.
    pub fn digest(&self) -> Result<String> {
        let expanded = self.expand()?;
        let bytes = serde_json::to_vec(&expanded)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        Ok(hex_string(&hasher.finalize()))
    }

    pub fn from_json_str(text: &str) -> Result<SystemSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn check_table_shape(
    role: KernelRole,
    expanded: &SystemSpec,
    alphabets: &Alphabets,
    horizon: usize,
) -> Result<()> {
    let KernelSpec::Table { steps, .. } = expanded.kernel(role) else {
        unreachable!("expanded spec has table kernels")
    };
    let name = role.name();
    if steps.len() != horizon {
        return Err(Error::Structure {
            kernel: name.to_string(),
            detail: format!("expected {horizon} step tables, found {}", steps.len()),
        });
    }
    let out_size = alphabets.size(role.output_stream());
    for (step_idx, table) in steps.iter().enumerate() {
        let step = step_idx + 1;
        let want_rows = role.row_count(step, alphabets);
        if table.len() != want_rows {
            return Err(Error::Structure {
                kernel: name.to_string(),
                detail: format!(
                    "step {step}: expected {want_rows} rows, found {}",
                    table.len()
                ),
            });
        }
        for (row_idx, row) in table.iter().enumerate() {
            if row.len() != out_size {
                return Err(Error::Structure {
                    kernel: name.to_string(),
                    detail: format!(
                        "step {step}, row {row_idx}: expected {out_size} entries, found {}",
                        row.len()
                    ),
                });
            }
        }
    }
    Ok(())
}

fn check_row(
    row: &mut Vec<f64>,
    kernel: KernelName,
    step: usize,
    row_idx: usize,
    repair: bool,
    violations: &mut Vec<Violation>,
    repairs: &mut Vec<Repair>,
) {
    for (symbol, &p) in row.iter().enumerate() {
        if !(p >= 0.0) {
            violations.push(Violation {
                kernel,
                step,
                row: row_idx,
                kind: ViolationKind::NegativeEntry { symbol, value: p },
            });
            return;
        }
    }
    let sum: f64 = row.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev <= ROW_SUM_TOL {
        return;
    }
    if repair && dev <= REPAIR_TOL {
        for p in row.iter_mut() {
            *p /= sum;
        }
        repairs.push(Repair {
            kernel,
            step,
            row: row_idx,
            original_sum: sum,
        });
    } else {
        violations.push(Violation {
            kernel,
            step,
            row: row_idx,
            kind: ViolationKind::RowSum { sum },
        });
    }
}

/// Outcome of [`SystemSpec::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub repairs: Vec<Repair>,
    /// Expanded (and possibly repaired) spec, usable downstream when the
    /// report passes.
    pub expanded: SystemSpec,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub kernel: KernelName,
    /// Time step of the offending table; 0 for the message prior.
    pub step: usize,
    pub row: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::RowSum { sum } => write!(
                f,
                "{} step {} row {}: row sums to {sum}, expected 1",
                self.kernel, self.step, self.row
            ),
            ViolationKind::NegativeEntry { symbol, value } => write!(
                f,
                "{} step {} row {}: entry {symbol} is {value}, expected >= 0",
                self.kernel, self.step, self.row
            ),
            ViolationKind::NotPointMass => write!(
                f,
                "{} step {} row {}: declared deterministic but row is not a point mass",
                self.kernel, self.step, self.row
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    RowSum { sum: f64 },
    NegativeEntry { symbol: usize, value: f64 },
    NotPointMass,
}

#[derive(Debug, Clone, Serialize)]
pub struct Repair {
    pub kernel: KernelName,
    pub step: usize,
    pub row: usize,
    pub original_sum: f64,
}

fn expand_kernel(
    role: KernelRole,
    spec: &KernelSpec,
    alphabets: &Alphabets,
    horizon: usize,
) -> Result<KernelSpec> {
    let name = role.name();
    let out_size = alphabets.size(role.output_stream());
    let structure = |detail: String| Error::Structure {
        kernel: name.to_string(),
        detail,
    };

    if let KernelSpec::Table {
        steps,
        deterministic,
    } = spec
    {
        return Ok(KernelSpec::Table {
            steps: steps.clone(),
            deterministic: *deterministic,
        });
    }
    if matches!(spec, KernelSpec::Repetition) && role != KernelRole::Encoder {
        return Err(structure(
            "repetition shorthand applies only to the encoder".to_string(),
        ));
    }

    let cur_size = alphabets.size(role.current_input_coord(1).stream);
    match spec {
        KernelSpec::Bsc { eps } => {
            if cur_size != 2 || out_size != 2 {
                return Err(structure(format!(
                    "bsc requires binary alphabets, found input {cur_size}, output {out_size}"
                )));
            }
            if !(0.0..=1.0).contains(eps) {
                return Err(structure(format!("bsc eps {eps} outside [0, 1]")));
            }
        }
        KernelSpec::Identity | KernelSpec::Repetition => {
            if cur_size != out_size {
                return Err(structure(format!(
                    "identity requires matching alphabets, found input {cur_size}, output {out_size}"
                )));
            }
        }
        KernelSpec::Constant { value } => {
            if *value >= out_size {
                return Err(structure(format!(
                    "constant value {value} outside output alphabet of size {out_size}"
                )));
            }
        }
        KernelSpec::Memoryless { rows } => {
            if rows.len() != cur_size {
                return Err(structure(format!(
                    "memoryless requires {cur_size} rows, found {}",
                    rows.len()
                )));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != out_size {
                    return Err(structure(format!(
                        "memoryless row {i}: expected {out_size} entries, found {}",
                        row.len()
                    )));
                }
            }
        }
        KernelSpec::Table { .. } => unreachable!(),
    }

    let mut steps = Vec::with_capacity(horizon);
    let deterministic = matches!(
        spec,
        KernelSpec::Identity | KernelSpec::Repetition | KernelSpec::Constant { .. }
    );
    for step in 1..=horizon {
        let coords = role.history_coords(step);
        let radices = role.history_radices(step, alphabets);
        let cur_pos = coords
            .iter()
            .position(|&c| c == role.current_input_coord(step))
            .expect("current input is part of the history");
        let rows = index::table_len(&radices);
        let mut table = Vec::with_capacity(rows);
        let mut counter = TupleCounter::new(&radices);
        for _ in 0..rows {
            let cur = counter.current()[cur_pos];
            let row = match spec {
                KernelSpec::Bsc { eps } => {
                    let mut row = vec![0.0; 2];
                    row[cur] = 1.0 - eps;
                    row[1 - cur] = *eps;
                    row
                }
                KernelSpec::Identity | KernelSpec::Repetition => {
                    let mut row = vec![0.0; out_size];
                    row[cur] = 1.0;
                    row
                }
                KernelSpec::Constant { value } => {
                    let mut row = vec![0.0; out_size];
                    row[*value] = 1.0;
                    row
                }
                KernelSpec::Memoryless { rows } => rows[cur].clone(),
                KernelSpec::Table { .. } => unreachable!(),
            };
            table.push(row);
            counter.advance();
        }
        steps.push(table);
    }
    Ok(KernelSpec::Table {
        steps,
        deterministic: if role == KernelRole::Encoder && deterministic {
            Some(true)
        } else {
            None
        },
    })
}

/// How [`generate_random`] fills encoder rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Every encoder row is a uniformly random point mass.
    Deterministic,
    /// Encoder rows are random distributions, like the channels.
    Stochastic,
}

/// Draw a random, valid system.
///
/// Stochastic rows normalize independent weights drawn uniformly from
/// `(0, 1]`; deterministic encoder rows place mass 1 on a uniformly random
/// symbol. The generator is ChaCha8 seeded with `seed`, consumed in a fixed
/// order (prior, then encoder/forward/feedback tables step by step, row by
/// row), so identical arguments reproduce the identical spec bit for bit.
pub fn generate_random(
    seed: u64,
    alphabets: Alphabets,
    horizon: usize,
    mode: EncoderMode,
    guard: usize,
) -> Result<SystemSpec> {
    let per_step = alphabets.x as u128 * alphabets.y as u128 * alphabets.e as u128;
    let mut required = alphabets.m as u128;
    for _ in 0..horizon {
        required = required.saturating_mul(per_step);
    }
    if required > guard as u128 {
        return Err(Error::GuardExceeded { required, guard });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let message_prior = random_row(&mut rng, alphabets.m);

    let mut tables: Vec<Vec<Vec<Vec<f64>>>> = Vec::with_capacity(3);
    for role in KernelRole::ALL {
        let out_size = alphabets.size(role.output_stream());
        let mut steps = Vec::with_capacity(horizon);
        for step in 1..=horizon {
            let rows = role.row_count(step, &alphabets);
            let mut table = Vec::with_capacity(rows);
            for _ in 0..rows {
                let row = if role == KernelRole::Encoder && mode == EncoderMode::Deterministic {
                    let mut row = vec![0.0; out_size];
                    row[rng.gen_range(0..out_size)] = 1.0;
                    row
                } else {
                    random_row(&mut rng, out_size)
                };
                table.push(row);
            }
            steps.push(table);
        }
        tables.push(steps);
    }

    let mut iter = tables.into_iter();
    let encoder_steps = iter.next().unwrap();
    let forward_steps = iter.next().unwrap();
    let feedback_steps = iter.next().unwrap();
    Ok(SystemSpec {
        alphabets,
        horizon,
        message_prior,
        encoder: KernelSpec::Table {
            steps: encoder_steps,
            deterministic: (mode == EncoderMode::Deterministic).then_some(true),
        },
        forward_channel: KernelSpec::Table {
            steps: forward_steps,
            deterministic: None,
        },
        feedback_channel: KernelSpec::Table {
            steps: feedback_steps,
            deterministic: None,
        },
    })
}

fn random_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    // 1 - u keeps every weight strictly positive.
    let weights: Vec<f64> = (0..len).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{bsc01_spec, nl_spec};
    use proptest::prelude::*;

    #[test]
    fn noiseless_loop_passes_validation() {
        let report = nl_spec().validate(false).unwrap();
        assert!(report.passed(), "violations: {:?}", report.violations);
        assert!(report.expanded.is_expanded());
    }

    #[test]
    fn scaled_row_names_kernel_step_and_row() {
        let mut spec = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, .. } = &mut spec.encoder {
            for p in steps[0][0].iter_mut() {
                *p *= 1.5;
            }
        }
        let report = spec.validate(false).unwrap();
        assert!(!report.passed());
        for v in &report.violations {
            assert_eq!(v.kernel, KernelName::Encoder);
            assert_eq!(v.step, 1);
            assert_eq!(v.row, 0);
        }
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v.kind, ViolationKind::RowSum { .. })));
    }

    #[test]
    fn missing_step_table_is_structural() {
        let mut spec = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, .. } = &mut spec.forward_channel {
            steps.truncate(1);
        }
        let err = spec.validate(false).unwrap_err();
        assert!(matches!(err, Error::Structure { .. }), "got {err:?}");
        assert!(err.to_string().contains("forward_channel"));
    }

    #[test]
    fn negative_entry_is_reported() {
        let mut spec = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, .. } = &mut spec.feedback_channel {
            steps[1][0][0] = -0.25;
            steps[1][0][1] = 1.25;
        }
        let report = spec.validate(false).unwrap();
        assert!(!report.passed());
        assert!(matches!(
            report.violations[0].kind,
            ViolationKind::NegativeEntry { .. }
        ));
        assert_eq!(report.violations[0].step, 2);
    }

    #[test]
    fn repair_renormalizes_tiny_deviations_only() {
        let mut spec = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, deterministic } = &mut spec.encoder {
            *deterministic = None;
            for p in steps[0][0].iter_mut() {
                *p *= 1.0 + 4e-10;
            }
        }
        // without repair: a violation
        let report = spec.validate(false).unwrap();
        assert!(!report.passed());
        // with repair: renormalized, recorded, no violation
        let report = spec.validate(true).unwrap();
        assert!(report.passed(), "violations: {:?}", report.violations);
        assert_eq!(report.repairs.len(), 1);
        let sum: f64 = report.expanded.table(KernelRole::Encoder, 1)[0].iter().sum();
        assert!((sum - 1.0).abs() <= ROW_SUM_TOL);

        // a 1.5x scaling is far beyond repair
        let mut bad = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, deterministic } = &mut bad.encoder {
            *deterministic = None;
            for p in steps[0][0].iter_mut() {
                *p *= 1.5;
            }
        }
        assert!(!bad.validate(true).unwrap().passed());
    }

    #[test]
    fn bsc_expansion_matches_definition() {
        let spec = bsc01_spec().expand().unwrap();
        for step in 1..=2 {
            let table = spec.table(KernelRole::Forward, step);
            let coords = KernelRole::Forward.history_coords(step);
            let radices = KernelRole::Forward.history_radices(step, &spec.alphabets);
            let cur_pos = coords
                .iter()
                .position(|&c| c == KernelRole::Forward.current_input_coord(step))
                .unwrap();
            for (row_idx, row) in table.iter().enumerate() {
                let cur = index::decode(row_idx, &radices)[cur_pos];
                assert_eq!(row[cur], 0.9);
                assert_eq!(row[1 - cur], 0.1);
            }
        }
    }

    #[test]
    fn identity_expansion_is_point_mass_on_current_input() {
        let spec = nl_spec().expand().unwrap();
        let table = spec.table(KernelRole::Feedback, 2);
        let radices = KernelRole::Feedback.history_radices(2, &spec.alphabets);
        // history (y1, e1, y2); current input is y2, the last coordinate
        for (row_idx, row) in table.iter().enumerate() {
            let cur = index::decode(row_idx, &radices)[2];
            for (v, &p) in row.iter().enumerate() {
                assert_eq!(p, if v == cur { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn expansion_is_idempotent() {
        let once = nl_spec().expand().unwrap();
        let twice = once.expand().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn bsc_on_non_binary_alphabet_fails() {
        let mut spec = nl_spec();
        spec.alphabets.y = 3;
        spec.forward_channel = KernelSpec::Bsc { eps: 0.1 };
        spec.feedback_channel = KernelSpec::Constant { value: 0 };
        let err = spec.expand().unwrap_err();
        assert!(err.to_string().contains("bsc"));
    }

    #[test]
    fn identity_between_mismatched_alphabets_fails() {
        let mut spec = nl_spec();
        spec.alphabets.e = 3;
        let err = spec.expand().unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }

    #[test]
    fn repetition_outside_encoder_fails() {
        let mut spec = nl_spec();
        spec.forward_channel = KernelSpec::Repetition;
        assert!(spec.expand().is_err());
    }

    #[test]
    fn row_counts_match_history_shapes() {
        let a = Alphabets::new(3, 2, 4, 5);
        for step in 1..=3 {
            assert_eq!(
                KernelRole::Encoder.row_count(step, &a),
                3 * 2usize.pow(step as u32 - 1) * 5usize.pow(step as u32 - 1)
            );
            assert_eq!(
                KernelRole::Forward.row_count(step, &a),
                2usize.pow(step as u32) * 4usize.pow(step as u32 - 1)
            );
            assert_eq!(
                KernelRole::Feedback.row_count(step, &a),
                5usize.pow(step as u32 - 1) * 4usize.pow(step as u32)
            );
        }
    }

    #[test]
    fn generated_specs_validate_and_reproduce() {
        let dims = Alphabets::new(3, 2, 3, 2);
        let a = generate_random(1, dims, 3, EncoderMode::Stochastic, crate::trajectory::DEFAULT_GUARD)
            .unwrap();
        assert!(a.validate(false).unwrap().passed());
        let b = generate_random(1, dims, 3, EncoderMode::Stochastic, crate::trajectory::DEFAULT_GUARD)
            .unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_random(2, dims, 3, EncoderMode::Stochastic, crate::trajectory::DEFAULT_GUARD)
            .unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn generated_deterministic_encoder_is_detected() {
        let dims = Alphabets::new(2, 3, 2, 2);
        let spec = generate_random(7, dims, 2, EncoderMode::Deterministic, 1 << 24).unwrap();
        assert!(spec.validate(false).unwrap().passed());
        assert!(spec.encoder_is_deterministic().unwrap());
        let stoch = generate_random(7, dims, 2, EncoderMode::Stochastic, 1 << 24).unwrap();
        assert!(!stoch.encoder_is_deterministic().unwrap());
    }

    #[test]
    fn generate_respects_guard() {
        let dims = Alphabets::new(2, 2, 2, 2);
        // 2 * (2*2*2)^2 = 128 trajectory entries needed
        let err = generate_random(1, dims, 2, EncoderMode::Stochastic, 8).unwrap_err();
        assert!(matches!(err, Error::GuardExceeded { required: 128, guard: 8 }));
    }

    #[test]
    fn declared_deterministic_flag_is_validated() {
        let mut spec = nl_spec().expand().unwrap();
        if let KernelSpec::Table { steps, deterministic } = &mut spec.encoder {
            *deterministic = Some(true);
            steps[0][0] = vec![0.5, 0.5];
        }
        let report = spec.validate(false).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v.kind, ViolationKind::NotPointMass)));
    }

    #[test]
    fn feedback_blind_encoder_ignores_feedback() {
        let dims = Alphabets::new(2, 2, 2, 2);
        let spec = generate_random(11, dims, 3, EncoderMode::Stochastic, 1 << 24).unwrap();
        let blind = spec.with_feedback_blind_encoder().unwrap();
        assert!(blind.validate(false).unwrap().passed());
        // step 3 history: (x0, x1, e1, x2, e2); rows differing only in e must match
        let radices = KernelRole::Encoder.history_radices(3, &dims);
        let table = blind.table(KernelRole::Encoder, 3);
        for (row_idx, row) in table.iter().enumerate() {
            let mut tuple = index::decode(row_idx, &radices);
            tuple[2] = 0;
            tuple[4] = 0;
            assert_eq!(row, &table[index::encode(&tuple, &radices)]);
        }
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = bsc01_spec();
        let text = spec.to_json_string().unwrap();
        let back = SystemSpec::from_json_str(&text).unwrap();
        assert_eq!(spec, back);
        assert_eq!(spec.digest().unwrap(), back.digest().unwrap());
    }

    #[test]
    fn digest_is_canonical_under_expansion() {
        let spec = nl_spec();
        assert_eq!(
            spec.digest().unwrap(),
            spec.expand().unwrap().digest().unwrap()
        );
    }

    proptest! {
        // Round-trip of the mixed-radix convention over every table shape
        // the kernels use at small dims.
        #[test]
        fn history_index_roundtrip(m in 1usize..4, x in 1usize..4, y in 1usize..4, e in 1usize..4, step in 1usize..4) {
            let a = Alphabets::new(m, x, y, e);
            for role in KernelRole::ALL {
                let radices = role.history_radices(step, &a);
                for idx in 0..index::table_len(&radices) {
                    let tuple = index::decode(idx, &radices);
                    prop_assert_eq!(index::encode(&tuple, &radices), idx);
                }
            }
        }
    }
}
