//! Per-layer reduced alphabets, SINR-based layer ordering, Cartesian
//! enumeration with corner removal, and the paired real-valued variant.
//!
//! Candidate vectors are expressed over *blocks*: each detector layer carries
//! two real components. In the complex formulation a block is the in-phase
//! and quadrature part of one physical layer; in the paired real formulation
//! a block may combine components of two different layers.

mod real;

pub use real::{
    build_pair_sets, pair_spic, real_decompose, PairEstimate, PairSpicState, PairingMode,
    RealPairedModel,
};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::mmse_spic::SpicState;

/// How block symbol ids are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolKind {
    /// Id is a constellation label; the block is one complex layer.
    Complex,
    /// Id is `a·L + b` over two PAM axes with `L = √|S|` levels each.
    PamPair,
}

/// Ranked per-layer candidate symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    kind: SymbolKind,
    constellation: Constellation,
    n_layers: usize,
    /// Real components `(a, b)` carried by each detector block. Component `c`
    /// is `Re x_c` for `c < N_L` and `Im x_{c−N_L}` otherwise.
    components: Vec<(usize, usize)>,
    /// Symbol ids per block, best first.
    sets: Vec<Vec<usize>>,
    /// Sizes as built, before any extension.
    m_vector: Vec<usize>,
}

impl CandidateSet {
    /// Assembles a set from already-ranked members.
    pub fn from_parts(
        kind: SymbolKind,
        constellation: Constellation,
        components: Vec<(usize, usize)>,
        sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n_layers = components.len();
        if sets.len() != n_layers {
            return Err(Error::DimensionMismatch(format!(
                "{} candidate sets for {} blocks",
                sets.len(),
                n_layers
            )));
        }
        let alphabet = constellation.len();
        for (k, set) in sets.iter().enumerate() {
            if set.is_empty() || set.len() > alphabet {
                return Err(Error::CandidateSetTooLarge {
                    layer: k,
                    requested: set.len(),
                    alphabet,
                });
            }
            let mut seen = vec![false; alphabet];
            for &id in set {
                if id >= alphabet || std::mem::replace(&mut seen[id], true) {
                    return Err(Error::DimensionMismatch(format!(
                        "invalid or repeated symbol {id} in block {k}"
                    )));
                }
            }
        }
        let mut used = vec![false; 2 * n_layers];
        for &(a, b) in &components {
            for c in [a, b] {
                if c >= 2 * n_layers || std::mem::replace(&mut used[c], true) {
                    return Err(Error::DimensionMismatch(format!(
                        "component map {components:?} is not a pairing"
                    )));
                }
            }
        }
        let m_vector = sets.iter().map(Vec::len).collect();
        Ok(Self {
            kind,
            constellation,
            n_layers,
            components,
            sets,
            m_vector,
        })
    }

    /// Complex-layer set with detector block `k` on physical layer `order[k]`.
    pub fn complex(
        constellation: Constellation,
        order: &[usize],
        sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = order.len();
        let components = order.iter().map(|&p| (p, p + n)).collect();
        Self::from_parts(SymbolKind::Complex, constellation, components, sets)
    }

    #[inline]
    pub fn kind(&self) -> SymbolKind {
        self.kind
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn components(&self) -> &[(usize, usize)] {
        &self.components
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Sizes as originally ranked.
    pub fn m_vector(&self) -> &[usize] {
        &self.m_vector
    }

    /// Current sizes, including symbols appended by [`Self::extend_with`].
    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Physical layer of each detector block in the complex formulation.
    pub fn layer_order(&self) -> Option<Vec<usize>> {
        (self.kind == SymbolKind::Complex).then(|| self.components.iter().map(|c| c.0).collect())
    }

    /// Number of symbols in each block's full alphabet.
    pub fn alphabet_size(&self) -> usize {
        self.constellation.len()
    }

    /// Axis labels of the two components carried by a block symbol.
    pub fn axis_labels(&self, id: usize) -> (usize, usize) {
        match self.kind {
            SymbolKind::Complex => self.constellation.split_label(id),
            SymbolKind::PamPair => {
                let side = self.constellation.axis_levels().len();
                (id / side, id % side)
            }
        }
    }

    /// Real 2-vector of a block symbol.
    pub fn value(&self, id: usize) -> [f64; 2] {
        let (a, b) = self.axis_labels(id);
        let levels = self.constellation.axis_levels();
        [levels[a], levels[b]]
    }

    /// Physical-layer labels of a candidate given per-block symbol ids.
    pub fn to_labels(&self, symbols: &[usize]) -> Vec<usize> {
        let n = self.n_layers;
        let mut axis = vec![0usize; 2 * n];
        for (k, &id) in symbols.iter().enumerate() {
            let (a, b) = self.axis_labels(id);
            let (ca, cb) = self.components[k];
            axis[ca] = a;
            axis[cb] = b;
        }
        (0..n)
            .map(|p| self.constellation.join_label(axis[p], axis[p + n]))
            .collect()
    }

    /// `‖x‖²` of a candidate.
    pub fn energy(&self, symbols: &[usize]) -> f64 {
        symbols
            .iter()
            .map(|&id| {
                let [a, b] = self.value(id);
                a * a + b * b
            })
            .sum()
    }

    /// Position of `id` within block `k`, if present.
    pub fn position(&self, k: usize, id: usize) -> Option<usize> {
        self.sets[k].iter().position(|&s| s == id)
    }

    /// Appends every symbol used by `list` that is not yet a member, keeping
    /// the original ranking in front.
    pub fn extend_with(&mut self, list: &CandidateList) {
        for entry in list.iter() {
            for (k, &id) in entry.iter().enumerate() {
                if !self.sets[k].contains(&id) {
                    self.sets[k].push(id);
                }
            }
        }
    }
}

/// Enumerated candidate vectors (per-block symbol ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateList {
    n_layers: usize,
    entries: Vec<usize>,
    /// Size of the Cartesian product before reduction.
    enumerated: usize,
}

impl CandidateList {
    pub fn new(n_layers: usize) -> Self {
        Self {
            n_layers,
            entries: Vec::new(),
            enumerated: 0,
        }
    }

    pub fn from_vectors(n_layers: usize, vectors: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let mut list = Self::new(n_layers);
        for v in vectors {
            list.push(&v);
        }
        list.enumerated = list.len();
        list
    }

    pub fn push(&mut self, symbols: &[usize]) {
        assert_eq!(symbols.len(), self.n_layers);
        self.entries.extend_from_slice(symbols);
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len() / self.n_layers.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn enumerated(&self) -> usize {
        self.enumerated
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[usize] {
        &self.entries[i * self.n_layers..(i + 1) * self.n_layers]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.entries.chunks(self.n_layers)
    }

    pub fn contains(&self, symbols: &[usize]) -> bool {
        self.iter().any(|e| e == symbols)
    }

    /// Sorts entries lexicographically by their positions in `set` so that
    /// consecutive entries share the longest possible prefix.
    pub fn sort_by_positions(&mut self, set: &CandidateSet) {
        let n = self.n_layers;
        let mut rows: Vec<(Vec<usize>, Vec<usize>)> = self
            .iter()
            .map(|e| {
                let pos = e
                    .iter()
                    .enumerate()
                    .map(|(k, &id)| set.position(k, id).unwrap_or(usize::MAX))
                    .collect();
                (pos, e.to_vec())
            })
            .collect();
        rows.sort();
        self.entries.clear();
        for (_, e) in rows {
            self.entries.extend(e);
        }
        debug_assert_eq!(self.entries.len() % n.max(1), 0);
    }
}

fn rank_by_distance(scores: &mut [(f64, usize)]) {
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// Detector-layer order: detector layer `k` maps to physical layer `order[k]`,
/// weakest (lowest SINR) first; ties keep the lower physical index first.
pub fn order_layers(sinrs: &[f64], m_vector: &[usize]) -> Vec<usize> {
    debug_assert_eq!(sinrs.len(), m_vector.len());
    let mut order: Vec<usize> = (0..sinrs.len()).collect();
    order.sort_by(|&a, &b| match sinrs[a].total_cmp(&sinrs[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}

fn check_m_vector(m_vector: &[usize], n_layers: usize, alphabet: usize) -> Result<()> {
    if m_vector.len() != n_layers {
        return Err(Error::DimensionMismatch(format!(
            "M-vector has {} entries for {} layers",
            m_vector.len(),
            n_layers
        )));
    }
    for (k, &m) in m_vector.iter().enumerate() {
        if m == 0 || m > alphabet {
            return Err(Error::CandidateSetTooLarge {
                layer: k,
                requested: m,
                alphabet,
            });
        }
    }
    Ok(())
}

/// Ranks, per layer, the constellation points by `|x̂ − β·s|²` and keeps the
/// best `M_k`, with layers ordered by post-processing SINR.
pub fn build_sets(
    spic: &SpicState,
    constellation: &Constellation,
    m_vector: &[usize],
) -> Result<CandidateSet> {
    check_m_vector(m_vector, spic.layers.len(), constellation.len())?;
    let order = order_layers(&spic.sinrs(), m_vector);
    let sets = order
        .iter()
        .zip(m_vector)
        .map(|(&p, &m)| {
            let est = &spic.layers[p];
            let mut scores: Vec<(f64, usize)> = constellation
                .points()
                .iter()
                .enumerate()
                .map(|(label, s)| ((est.x_hat - s * est.beta).norm_sqr(), label))
                .collect();
            rank_by_distance(&mut scores);
            scores.into_iter().take(m).map(|(_, l)| l).collect()
        })
        .collect();
    CandidateSet::complex(constellation.clone(), &order, sets)
}

/// Enumerates `C_1 × … × C_{N_L}` in lexicographic rank order. With
/// `reduction`, vectors that use the worst-ranked member of two or more
/// layers are dropped; layers with a single candidate never count.
pub fn enumerate_and_reduce(set: &CandidateSet, reduction: bool) -> CandidateList {
    let sizes = set.m_vector().to_vec();
    let n = sizes.len();
    let mut list = CandidateList::new(n);
    let mut ranks = vec![0usize; n];
    let mut symbols = vec![0usize; n];
    loop {
        list.enumerated += 1;
        let corners = ranks
            .iter()
            .zip(&sizes)
            .filter(|(r, m)| **m > 1 && **r + 1 == **m)
            .count();
        if !reduction || corners < 2 {
            for k in 0..n {
                symbols[k] = set.sets[k][ranks[k]];
            }
            list.push(&symbols);
        }
        // odometer, last layer fastest
        let mut k = n;
        loop {
            if k == 0 {
                return list;
            }
            k -= 1;
            ranks[k] += 1;
            if ranks[k] < sizes[k] {
                break;
            }
            ranks[k] = 0;
        }
    }
}

/// Survivors of corner removal in closed form: vectors with no worst-ranked
/// member plus vectors with exactly one.
pub fn predict_survivors(m_vector: &[usize]) -> u64 {
    let flag: Vec<u64> = m_vector.iter().map(|&m| u64::from(m > 1)).collect();
    let rest: Vec<u64> = m_vector.iter().zip(&flag).map(|(&m, f)| m as u64 - f).collect();
    let none: u64 = rest.iter().product();
    let one: u64 = (0..m_vector.len())
        .map(|j| {
            flag[j]
                * rest
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, r)| r)
                    .product::<u64>()
        })
        .sum();
    none + one
}
