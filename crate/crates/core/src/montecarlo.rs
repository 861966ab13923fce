//! Trajectory sampling and plug-in estimation.
//!
//! Samples are drawn ancestrally in the per-step order `x_i → y_i → e_i`
//! using a ChaCha8 generator seeded from a `u64`, one `f64` in `[0, 1)` per
//! symbol, resolved by inverse CDF over the kernel row in symbol order. The
//! generator and the draw order are fixed, so a `(spec, count, seed)` triple
//! reproduces byte-identical batches on every platform.
//!
//! Estimates evaluate the same functionals on the empirical frequency table
//! (the plug-in principle). Plug-in estimates are biased upward for finite
//! samples; no bias correction is applied.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functionals::{generalized_di, InfoQuery};
use crate::index;
use crate::system::{Coord, KernelRole, SystemSpec};
use crate::trajectory::{build_joint, DistKind, TrajectoryDistribution};

/// A batch of i.i.d. trajectories drawn from one system.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    spec_digest: String,
    seed: u64,
    coords: Vec<Coord>,
    sizes: Vec<usize>,
    count: usize,
    /// Row-major `count × coords.len()` symbol matrix.
    data: Vec<u32>,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Digest of the generating spec (canonical expanded form).
    pub fn spec_digest(&self) -> &str {
        &self.spec_digest
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn trajectory(&self, i: usize) -> &[u32] {
        let w = self.coords.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks(self.coords.len())
    }

    /// SHA-256 over the little-endian symbol matrix, as lowercase hex.
    /// Identical `(spec, count, seed)` triples give identical digests.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for &s in &self.data {
            hasher.update(s.to_le_bytes());
        }
        let out = hasher.finalize();
        let mut hex = String::with_capacity(out.len() * 2);
        for b in out {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// CSV export: mandatory header `x0,x1,y1,e1,…`, one row per trajectory.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = self.coords.iter().map(|c| c.label()).collect();
        writeln!(w, "{}", header.join(","))?;
        for traj in self.trajectories() {
            let row: Vec<String> = traj.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn draw_symbol<R: Rng>(rng: &mut R, row: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (symbol, &p) in row.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = symbol;
            if u < cum {
                return symbol;
            }
        }
    }
    // u landed in the rounding sliver past the last positive entry.
    last_positive
}

/// Draw `count` i.i.d. trajectories from the exact joint of `spec`.
pub fn sample(spec: &SystemSpec, count: usize, seed: u64) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let report = spec.validate(false)?;
    if !report.passed() {
        return Err(Error::InvalidSpec(report.violations[0].to_string()));
    }
    let spec = &report.expanded;
    let alphabets = spec.alphabets;
    let coords = spec.coords();
    let sizes = spec.coord_sizes();

    // Gather positions of each kernel's history inside the trajectory tuple.
    let mut step_plans = Vec::new();
    for step in 1..=spec.horizon {
        for role in KernelRole::ALL {
            let hist = role.history_coords(step);
            let positions: Vec<usize> = hist
                .iter()
                .map(|c| coords.binary_search(c).expect("history within layout"))
                .collect();
            let radices: Vec<usize> = hist.iter().map(|c| alphabets.size(c.stream)).collect();
            step_plans.push((role, step, positions, radices));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = coords.len();
    let mut data = vec![0u32; count * width];
    let mut tuple = vec![0usize; width];
    for row in data.chunks_mut(width) {
        tuple.iter_mut().for_each(|s| *s = 0);
        tuple[0] = draw_symbol(&mut rng, &spec.message_prior);
        for (role, step, positions, radices) in &step_plans {
            let table = spec.table(*role, *step);
            let kernel_row = &table[index::encode_gather(&tuple, positions, radices)];
            let out_pos = coords
                .binary_search(&role.output_coord(*step))
                .expect("output within layout");
            tuple[out_pos] = draw_symbol(&mut rng, kernel_row);
        }
        for (slot, &s) in row.iter_mut().zip(&tuple) {
            *slot = s as u32;
        }
    }

    Ok(SampleBatch {
        spec_digest: spec.digest()?,
        seed,
        coords,
        sizes,
        count,
        data,
    })
}

/// Normalized frequency table over the full trajectory space.
///
/// The dense table obeys the same enumeration guard as exact joints.
pub fn empirical_distribution(
    batch: &SampleBatch,
    guard: usize,
) -> Result<TrajectoryDistribution> {
    if batch.count == 0 {
        return Err(Error::EmptyBatch);
    }
    let required = batch
        .sizes
        .iter()
        .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX);
    if required > guard as u128 {
        return Err(Error::GuardExceeded { required, guard });
    }
    let mut counts = vec![0u64; required as usize];
    let mut tuple = vec![0usize; batch.coords.len()];
    for traj in batch.trajectories() {
        for (slot, &s) in tuple.iter_mut().zip(traj) {
            *slot = s as usize;
        }
        counts[index::encode(&tuple, &batch.sizes)] += 1;
    }
    let total = batch.count as f64;
    let probs: Vec<f64> = counts.into_iter().map(|c| c as f64 / total).collect();
    TrajectoryDistribution::new(
        batch.coords.clone(),
        batch.sizes.clone(),
        probs,
        DistKind::Empirical,
    )
}

/// Plug-in estimate: the query evaluated on the empirical distribution.
pub fn estimate(batch: &SampleBatch, query: &InfoQuery, guard: usize) -> Result<f64> {
    let empirical = empirical_distribution(batch, guard)?;
    Ok(generalized_di(&empirical, query)?.value_bits)
}

/// One cell of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyCell {
    pub count: usize,
    pub seed: u64,
    /// Absolute error per query, in query order.
    pub abs_errors_bits: Vec<f64>,
    pub max_abs_error_bits: f64,
}

/// Absolute plug-in errors across sample counts and seeds.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub quantity_labels: Vec<String>,
    pub exact_bits: Vec<f64>,
    /// Count-major, then seed, matching `counts` × `seeds`.
    pub cells: Vec<StudyCell>,
    /// Max error over seeds and queries for each count.
    pub per_count_max_error_bits: Vec<f64>,
}

/// Compare plug-in estimates against exact values over a grid of sample
/// counts and seeds.
pub fn convergence_study(
    spec: &SystemSpec,
    counts: &[usize],
    seeds: &[u64],
    queries: &[(String, InfoQuery)],
    guard: usize,
) -> Result<ConvergenceStudy> {
    if counts.is_empty() || seeds.is_empty() || queries.is_empty() {
        return Err(Error::InvalidConfig(
            "convergence study needs counts, seeds, and queries".into(),
        ));
    }
    let joint = build_joint(spec, guard)?;
    let exact: Vec<f64> = queries
        .iter()
        .map(|(_, q)| generalized_di(&joint, q).map(|e| e.value_bits))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(counts.len() * seeds.len());
    let mut per_count_max = Vec::with_capacity(counts.len());
    for &count in counts {
        let mut count_max: f64 = 0.0;
        for &seed in seeds {
            let batch = sample(spec, count, seed)?;
            let empirical = empirical_distribution(&batch, guard)?;
            let mut errors = Vec::with_capacity(queries.len());
            for ((_, q), &x) in queries.iter().zip(&exact) {
                let est = generalized_di(&empirical, q)?.value_bits;
                errors.push((est - x).abs());
            }
            let max_err = errors.iter().cloned().fold(0.0f64, f64::max);
            count_max = count_max.max(max_err);
            cells.push(StudyCell {
                count,
                seed,
                abs_errors_bits: errors,
                max_abs_error_bits: max_err,
            });
        }
        per_count_max.push(count_max);
    }

    Ok(ConvergenceStudy {
        counts: counts.to_vec(),
        seeds: seeds.to_vec(),
        quantity_labels: queries.iter().map(|(l, _)| l.clone()).collect(),
        exact_bits: exact,
        cells,
        per_count_max_error_bits: per_count_max,
    })
}
