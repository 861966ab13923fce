//! Exact joint distributions over trajectories, with marginalization and the
//! entropy / conditional-mutual-information primitives everything else is
//! built from.
//!
//! A trajectory is one realization `(x0, x1, y1, e1, …, xn, yn, en)` of the
//! closed loop. The joint lives in a dense array indexed mixed-radix over
//! the coordinates in that order (see [`crate::index`]). All information
//! quantities are in bits (base-2 logarithms), with the convention
//! `0·log 0 = 0`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::index::{self, TupleCounter};
use crate::system::{Coord, KernelRole, SystemSpec};

/// Default cap on dense trajectory tables: 2^24 entries (~128 MB of f64).
pub const DEFAULT_GUARD: usize = 1 << 24;

/// Total probability mass must match 1 within this tolerance.
pub const MASS_TOL: f64 = 1e-9;

/// Information values in `(-CLAMP_EPS_BITS, 0)` are clamped to 0; anything
/// at or below `-CLAMP_EPS_BITS` raises [`Error::NegativeInformation`].
pub const CLAMP_EPS_BITS: f64 = 1e-9;

/// Whether a distribution is an exact enumeration or an empirical frequency
/// table built from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    Exact,
    Empirical,
}

/// An ordered set of trajectory coordinates.
///
/// Selectors are kept sorted in trajectory order and deduplicated, so a
/// selector also fixes the coordinate order of the marginal it names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector(Vec<Coord>);

impl Selector {
    pub fn new<I: IntoIterator<Item = Coord>>(coords: I) -> Self {
        let mut v: Vec<Coord> = coords.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn single(coord: Coord) -> Self {
        Self(vec![coord])
    }

    /// The message coordinate `{x0}`.
    pub fn message() -> Self {
        Self::single(Coord::msg())
    }

    /// `{stream_1, …, stream_upto}`; empty when `upto` is 0.
    pub fn prefix(stream: crate::system::Stream, upto: usize) -> Self {
        Self::new((1..=upto).map(|t| Coord::new(stream, t)))
    }

    pub fn union(&self, other: &Selector) -> Selector {
        Selector::new(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.0
    }

    pub fn contains(&self, coord: Coord) -> bool {
        self.0.binary_search(&coord).is_ok()
    }

    fn overlap(&self, other: &Selector) -> Option<Coord> {
        self.0.iter().find(|&&c| other.contains(c)).copied()
    }
}

/// Dense joint (or marginal) distribution over trajectory coordinates.
#[derive(Debug, Clone)]
pub struct TrajectoryDistribution {
    coords: Vec<Coord>,
    sizes: Vec<usize>,
    probs: Vec<f64>,
    kind: DistKind,
}

impl TrajectoryDistribution {
    /// Build a distribution from raw parts. `coords` must be strictly
    /// increasing in trajectory order; `probs` must be nonnegative with
    /// total mass 1 within [`MASS_TOL`] and length `Π sizes`.
    pub fn new(
        coords: Vec<Coord>,
        sizes: Vec<usize>,
        probs: Vec<f64>,
        kind: DistKind,
    ) -> Result<Self> {
        if coords.len() != sizes.len() {
            return Err(Error::InvalidConfig(
                "coordinate and size lists differ in length".to_string(),
            ));
        }
        if !coords.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "coordinates must be strictly increasing in trajectory order".to_string(),
            ));
        }
        let want = index::table_len_checked(&sizes).ok_or(Error::GuardExceeded {
            required: u128::MAX,
            guard: usize::MAX,
        })?;
        if probs.len() != want {
            return Err(Error::InvalidConfig(format!(
                "probability table has {} entries, expected {want}",
                probs.len()
            )));
        }
        let mut mass = 0.0;
        for &p in &probs {
            if !(p >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "negative or non-finite probability {p}"
                )));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidConfig(format!(
                "total mass {mass} deviates from 1 by more than {MASS_TOL}"
            )));
        }
        Ok(Self {
            coords,
            sizes,
            probs,
            kind,
        })
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Largest time index among the coordinates.
    pub fn horizon(&self) -> usize {
        self.coords.iter().map(|c| c.time).max().unwrap_or(0)
    }

    /// Probability of one full coordinate tuple.
    pub fn mass_of(&self, tuple: &[usize]) -> f64 {
        self.probs[index::encode(tuple, &self.sizes)]
    }

    /// Positions of the selector's coordinates inside this distribution.
    fn positions_of(&self, selector: &Selector) -> Result<Vec<usize>> {
        selector
            .coords()
            .iter()
            .map(|c| {
                self.coords
                    .binary_search(c)
                    .map_err(|_| Error::UnknownCoordinate(c.label()))
            })
            .collect()
    }

    /// Sum out every coordinate not in `keep`. Mass is preserved.
    pub fn marginal(&self, keep: &Selector) -> Result<TrajectoryDistribution> {
        if keep.is_empty() {
            return Err(Error::EmptySelector);
        }
        let positions = self.positions_of(keep)?;
        let kept_sizes: Vec<usize> = positions.iter().map(|&p| self.sizes[p]).collect();
        let mut out = vec![0.0; index::table_len(&kept_sizes)];
        let mut counter = TupleCounter::new(&self.sizes);
        for &p in &self.probs {
            if p != 0.0 {
                out[index::encode_gather(counter.current(), &positions, &kept_sizes)] += p;
            }
            counter.advance();
        }
        Ok(TrajectoryDistribution {
            coords: keep.coords().to_vec(),
            sizes: kept_sizes,
            probs: out,
            kind: self.kind,
        })
    }

    /// Shannon entropy (bits) of the marginal on `a`.
    pub fn entropy(&self, a: &Selector) -> Result<f64> {
        let m = self.marginal(a)?;
        let mut h = 0.0;
        for &p in &m.probs {
            if p > 0.0 {
                h -= p * p.log2();
            }
        }
        clamp_information(h, "entropy")
    }

    /// Conditional mutual information `I(A; B | C)` in bits.
    ///
    /// `A`, `B`, `C` must be pairwise disjoint; `C` may be empty, in which
    /// case this is the plain mutual information. Histories of zero mass
    /// contribute nothing. An empty `A` or `B` yields exactly 0.
    pub fn cmi(&self, a: &Selector, b: &Selector, c: &Selector) -> Result<f64> {
        for (lhs, rhs) in [(a, b), (a, c), (b, c)] {
            if let Some(coord) = lhs.overlap(rhs) {
                return Err(Error::OverlappingSelectors(coord.label()));
            }
        }
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        let abc = a.union(b).union(c);
        let m = self.marginal(&abc)?;

        let pos_ac = m.positions_of(&a.union(c))?;
        let pos_bc = m.positions_of(&b.union(c))?;
        let pos_c = m.positions_of(c)?;
        let sizes_ac: Vec<usize> = pos_ac.iter().map(|&p| m.sizes[p]).collect();
        let sizes_bc: Vec<usize> = pos_bc.iter().map(|&p| m.sizes[p]).collect();
        let sizes_c: Vec<usize> = pos_c.iter().map(|&p| m.sizes[p]).collect();

        let mut p_ac = vec![0.0; index::table_len(&sizes_ac)];
        let mut p_bc = vec![0.0; index::table_len(&sizes_bc)];
        let mut p_c = vec![0.0; index::table_len(&sizes_c)];
        let mut counter = TupleCounter::new(&m.sizes);
        for &p in &m.probs {
            if p != 0.0 {
                let t = counter.current();
                p_ac[index::encode_gather(t, &pos_ac, &sizes_ac)] += p;
                p_bc[index::encode_gather(t, &pos_bc, &sizes_bc)] += p;
                p_c[index::encode_gather(t, &pos_c, &sizes_c)] += p;
            }
            counter.advance();
        }

        let mut total = 0.0;
        let mut counter = TupleCounter::new(&m.sizes);
        for &p in &m.probs {
            if p > 0.0 {
                let t = counter.current();
                let ac = p_ac[index::encode_gather(t, &pos_ac, &sizes_ac)];
                let bc = p_bc[index::encode_gather(t, &pos_bc, &sizes_bc)];
                let cc = p_c[index::encode_gather(t, &pos_c, &sizes_c)];
                total += p * ((p * cc) / (ac * bc)).log2();
            }
            counter.advance();
        }
        clamp_information(total, "conditional mutual information")
    }

    /// Debug dump: one CSV row per trajectory with positive mass, columns in
    /// coordinate order followed by the probability.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut header: Vec<String> = self.coords.iter().map(|c| c.label()).collect();
        header.push("probability".to_string());
        writeln!(w, "{}", header.join(","))?;
        let mut counter = TupleCounter::new(&self.sizes);
        for &p in &self.probs {
            if p > 0.0 {
                let mut row: Vec<String> =
                    counter.current().iter().map(|s| s.to_string()).collect();
                row.push(format!("{p}"));
                writeln!(w, "{}", row.join(","))?;
            }
            counter.advance();
        }
        Ok(())
    }
}

/// Clamp floating-point noise below zero; report anything worse.
pub(crate) fn clamp_information(bits: f64, context: &str) -> Result<f64> {
    if bits >= 0.0 {
        Ok(bits)
    } else if bits > -CLAMP_EPS_BITS {
        Ok(0.0)
    } else {
        Err(Error::NegativeInformation {
            value_bits: bits,
            context: context.to_string(),
        })
    }
}

/// Exact joint distribution of a system, built step by step from the
/// factorization `p(x0) · Π_i p(x_i|·) p(y_i|·) p(e_i|·)`.
///
/// Fails with [`Error::GuardExceeded`] when the dense table would need more
/// than `guard` entries, and with [`Error::InvalidSpec`] when the spec does
/// not validate cleanly.
pub fn build_joint(spec: &SystemSpec, guard: usize) -> Result<TrajectoryDistribution> {
    let report = spec.validate(false)?;
    if !report.passed() {
        return Err(Error::InvalidSpec(report.violations[0].to_string()));
    }
    let spec = &report.expanded;

    let required = spec.trajectory_count();
    if required > guard as u128 {
        return Err(Error::GuardExceeded { required, guard });
    }

    let alphabets = spec.alphabets;
    let mut coords = vec![Coord::msg()];
    let mut sizes = vec![alphabets.m];
    let mut probs = spec.message_prior.clone();

    for step in 1..=spec.horizon {
        for role in KernelRole::ALL {
            let table = spec.table(role, step);
            let hist_coords = role.history_coords(step);
            let positions: Vec<usize> = hist_coords
                .iter()
                .map(|c| coords.binary_search(c).expect("history within prefix"))
                .collect();
            let hist_radices: Vec<usize> = hist_coords
                .iter()
                .map(|c| alphabets.size(c.stream))
                .collect();
            let out_size = alphabets.size(role.output_stream());

            let mut next = vec![0.0; probs.len() * out_size];
            let mut counter = TupleCounter::new(&sizes);
            for (idx, &p) in probs.iter().enumerate() {
                if p != 0.0 {
                    let row =
                        &table[index::encode_gather(counter.current(), &positions, &hist_radices)];
                    let base = idx * out_size;
                    for (v, &q) in row.iter().enumerate() {
                        next[base + v] = p * q;
                    }
                }
                counter.advance();
            }
            coords.push(role.output_coord(step));
            sizes.push(out_size);
            probs = next;
        }
    }

    TrajectoryDistribution::new(coords, sizes, probs, DistKind::Exact)
}

/// Convenience wrapper using [`DEFAULT_GUARD`].
pub fn build_joint_default(spec: &SystemSpec) -> Result<TrajectoryDistribution> {
    build_joint(spec, DEFAULT_GUARD)
}
