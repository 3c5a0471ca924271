//! Coordinate blocks for the blockwise aggregation estimator.
//!
//! Indices are zero-based in memory. The JSON form used on the command
//! line is one-based: an array of arrays of coordinate numbers.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Threshold(f64),
    RandomPairs { seed: Option<u64>, count: usize },
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCollection {
    blocks: Vec<Vec<usize>>,
    dimension: usize,
    overlapping: bool,
    provenance: Provenance,
}

impl BlockCollection {
    fn build(blocks: Vec<Vec<usize>>, dimension: usize, provenance: Provenance) -> Result<Self> {
        let diag = validate_index_sets(&blocks, dimension, false);
        if let Some(err) = diag.clone().into_error() {
            return Err(err);
        }
        Ok(BlockCollection { overlapping: !diag.disjoint, blocks, dimension, provenance })
    }

    /// User-supplied zero-based index sets over `0..p`.
    pub fn manual(blocks: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        Self::build(blocks, p, Provenance::Manual)
    }

    /// Consecutive blocks `{0..k}, {k..2k}, …`; the last one may be short.
    pub fn contiguous(p: usize, k: usize) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::InvalidBlocks("dimension and block size must be >= 1".into()));
        }
        let blocks = (0..p).step_by(k).map(|s| (s..(s + k).min(p)).collect()).collect();
        Self::build(blocks, p, Provenance::Manual)
    }

    /// Parses the one-based JSON array-of-arrays form.
    pub fn from_json(text: &str, p: usize) -> Result<Self> {
        let raw: Vec<Vec<usize>> =
            serde_json::from_str(text).map_err(|e| Error::InvalidBlocks(format!("blocks JSON: {e}")))?;
        let mut blocks = Vec::with_capacity(raw.len());
        for (b, set) in raw.into_iter().enumerate() {
            let mut zero = Vec::with_capacity(set.len());
            for idx in set {
                if idx == 0 || idx > p {
                    return Err(Error::InvalidBlocks(format!("block {} has index {idx} outside 1..={p}", b + 1)));
                }
                zero.push(idx - 1);
            }
            blocks.push(zero);
        }
        Self::manual(blocks, p)
    }

    pub fn to_json(&self) -> String {
        let one_based: Vec<Vec<usize>> = self.blocks.iter().map(|b| b.iter().map(|i| i + 1).collect()).collect();
        serde_json::to_string(&one_based).expect("index lists always serialize")
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.blocks.iter().map(Vec::as_slice)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockDiagnostics {
    /// `(block number, offending index)`, zero-based.
    pub out_of_range: Vec<(usize, usize)>,
    pub duplicates: Vec<(usize, usize)>,
    pub empty_blocks: Vec<usize>,
    /// Coordinates that appear in more than one block.
    pub overlaps: Vec<usize>,
    pub max_block_size: usize,
    pub disjoint: bool,
    pub require_disjoint: bool,
}

impl BlockDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.out_of_range.is_empty()
            && self.duplicates.is_empty()
            && self.empty_blocks.is_empty()
            && (!self.require_disjoint || self.disjoint)
    }

    pub fn into_error(self) -> Option<Error> {
        if self.is_valid() {
            return None;
        }
        let mut parts = Vec::new();
        if let Some(&(b, i)) = self.out_of_range.first() {
            parts.push(format!("out-of-range index {} in block {}", i + 1, b + 1));
        }
        if let Some(&(b, i)) = self.duplicates.first() {
            parts.push(format!("duplicate index {} in block {}", i + 1, b + 1));
        }
        if let Some(&b) = self.empty_blocks.first() {
            parts.push(format!("block {} is empty", b + 1));
        }
        if self.require_disjoint && !self.disjoint {
            let shown: Vec<String> = self.overlaps.iter().take(5).map(|i| (i + 1).to_string()).collect();
            parts.push(format!("blocks overlap at index {}", shown.join(",")));
        }
        Some(Error::InvalidBlocks(parts.join("; ")))
    }
}

pub fn validate_index_sets(sets: &[Vec<usize>], p: usize, require_disjoint: bool) -> BlockDiagnostics {
    let mut diag = BlockDiagnostics { require_disjoint, ..Default::default() };
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    for (b, set) in sets.iter().enumerate() {
        if set.is_empty() {
            diag.empty_blocks.push(b);
        }
        diag.max_block_size = diag.max_block_size.max(set.len());
        let mut local = std::collections::HashSet::with_capacity(set.len());
        for &idx in set {
            if idx >= p {
                diag.out_of_range.push((b, idx));
                continue;
            }
            if !local.insert(idx) {
                diag.duplicates.push((b, idx));
                continue;
            }
            *seen.entry(idx).or_insert(0) += 1;
        }
    }
    diag.overlaps = seen.into_iter().filter(|&(_, c)| c > 1).map(|(i, _)| i).collect();
    diag.disjoint = diag.overlaps.is_empty();
    diag
}

pub fn validate_blocks(blocks: &BlockCollection, p: usize, require_disjoint: bool) -> BlockDiagnostics {
    validate_index_sets(&blocks.blocks, p, require_disjoint)
}

/// Connected components of the graph joining `i` and `j` whenever the
/// estimated absolute correlation exceeds `t`.
pub fn threshold_blocks(sigma: &DMatrix<f64>, t: f64) -> Result<BlockCollection> {
    let p = sigma.nrows();
    if p == 0 || sigma.ncols() != p {
        return Err(Error::DimensionMismatch("covariance must be square and nonempty".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("threshold {t} outside (0, 1)")));
    }
    let sd: Vec<f64> = (0..p)
        .map(|i| {
            let d = sigma[(i, i)];
            if d > 0.0 && d.is_finite() {
                Ok(d.sqrt())
            } else {
                Err(Error::domain(format!("diagonal entry {} is {} (must be positive)", i + 1, d)))
            }
        })
        .collect::<Result<_>>()?;

    let mut adjacency = vec![Vec::new(); p];
    for i in 0..p {
        for j in (i + 1)..p {
            if sigma[(i, j)].abs() / (sd[i] * sd[j]) > t {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
    }

    let mut label = vec![usize::MAX; p];
    let mut blocks = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..p {
        if label[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        label[start] = id;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(node) = queue.pop_front() {
            members.push(node);
            for &next in &adjacency[node] {
                if label[next] == usize::MAX {
                    label[next] = id;
                    queue.push_back(next);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    BlockCollection::build(blocks, p, Provenance::Threshold(t))
}

/// Decodes the `idx`-th pair `(i, j)`, `i < j`, in row-major order.
fn pair_at(idx: usize, p: usize) -> (usize, usize) {
    // Row i starts at offset i*(2p-i-1)/2.
    let offset = |i: usize| i * (2 * p - i - 1) / 2;
    let pf = p as f64;
    let guess = ((2.0 * pf - 1.0) - ((2.0 * pf - 1.0).powi(2) - 8.0 * idx as f64).max(0.0).sqrt()) / 2.0;
    let mut i = (guess.floor() as usize).min(p.saturating_sub(2));
    while i > 0 && offset(i) > idx {
        i -= 1;
    }
    while i + 1 < p - 1 && offset(i + 1) <= idx {
        i += 1;
    }
    (i, i + 1 + (idx - offset(i)))
}

/// Draws `count` distinct unordered pairs uniformly without replacement.
///
/// A partial Fisher–Yates shuffle over the virtual array of all
/// `p(p-1)/2` pair indices; displaced slots live in a hash map, so memory
/// is `O(count)`.
pub fn random_pair_blocks<R: Rng + ?Sized>(p: usize, count: usize, rng: &mut R) -> Result<BlockCollection> {
    if p < 2 {
        return Err(Error::InvalidBlocks("random pairs need p >= 2".into()));
    }
    let total = p * (p - 1) / 2;
    if count == 0 || count > total {
        return Err(Error::InvalidBlocks(format!("pair count {count} must lie in 1..={total} for p={p}")));
    }
    let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(count);
    let mut blocks = Vec::with_capacity(count);
    for k in 0..count {
        let pick = rng.random_range(k..total);
        let chosen = *displaced.get(&pick).unwrap_or(&pick);
        let at_k = *displaced.get(&k).unwrap_or(&k);
        displaced.insert(pick, at_k);
        let (i, j) = pair_at(chosen, p);
        blocks.push(vec![i, j]);
    }
    BlockCollection::build(blocks, p, Provenance::RandomPairs { seed: None, count })
}

/// As [`random_pair_blocks`] with a ChaCha stream seeded from `seed`,
/// recording the seed in the provenance.
pub fn random_pair_blocks_seeded(p: usize, count: usize, seed: u64) -> Result<BlockCollection> {
    let mut rng = crate::rng::seeded(seed);
    let mut out = random_pair_blocks(p, count, &mut rng)?;
    out.provenance = Provenance::RandomPairs { seed: Some(seed), count };
    Ok(out)
}
