//! Diagonalization of the coupled Hamiltonian and `|n, i>` labeling of the
//! dressed eigenstates by maximal overlap with product states.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use faer::Mat;

use crate::circuit::{
    apply_node_operator, CoupledHamiltonian, FluxBias, HilbertTruncation, Mode, NodeOperator,
};
use crate::eigen::SymmetricEigen;
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Photon index `n` of the resonator-like mode and atom level `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Label {
    pub n: usize,
    pub i: usize,
}

impl Label {
    pub const fn new(n: usize, i: usize) -> Self {
        Label { n, i }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match AtomLevel::from_index(self.i) {
            Some(level) => write!(f, "|{},{}>", self.n, level.symbol()),
            None => write!(f, "|{},{}>", self.n, self.i),
        }
    }
}

/// Named low-lying atom levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AtomLevel {
    G,
    E,
    F,
}

impl AtomLevel {
    pub const fn index(self) -> usize {
        match self {
            AtomLevel::G => 0,
            AtomLevel::E => 1,
            AtomLevel::F => 2,
        }
    }

    pub const fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(AtomLevel::G),
            1 => Some(AtomLevel::E),
            2 => Some(AtomLevel::F),
            _ => None,
        }
    }

    pub const fn symbol(self) -> char {
        match self {
            AtomLevel::G => 'g',
            AtomLevel::E => 'e',
            AtomLevel::F => 'f',
        }
    }

    pub const fn label(self, n: usize) -> Label {
        Label::new(n, self.index())
    }
}

/// How many of the lowest eigenpairs are labeled. States near the top of a
/// truncated spectrum are unphysical.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Retention {
    Fraction(f64),
    Count(usize),
    All,
}

impl Default for Retention {
    fn default() -> Self {
        Retention::Fraction(0.5)
    }
}

impl Retention {
    pub fn count(&self, dim: usize) -> usize {
        match *self {
            Retention::Fraction(f) => {
                ((dim as f64 * f.clamp(0.0, 1.0)).round() as usize).clamp(1, dim)
            }
            Retention::Count(k) => k.clamp(1, dim),
            Retention::All => dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DressedLevel {
    pub label: Label,
    /// `E/h`, GHz.
    pub energy: f64,
    /// Squared overlap with the product state of the same label.
    pub overlap: f64,
    pub ambiguous: bool,
}

/// Overlap below which a label is flagged as ambiguous.
pub const AMBIGUITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Default)]
pub struct LabelOptions<'a> {
    pub retention: Retention,
    /// Keep the retained eigenvectors (needed for operator matrix elements
    /// and continuity labeling).
    pub keep_vectors: bool,
    /// Label by overlap with this spectrum's eigenvectors instead of product
    /// states, for smooth flux sweeps. Must carry vectors of the same basis.
    pub previous: Option<&'a DressedSpectrum>,
}

/// Labeled eigenenergies of the coupled Hamiltonian at one flux bias.
#[derive(Debug, Clone)]
pub struct DressedSpectrum {
    pub flux: FluxBias,
    pub trunc: HilbertTruncation,
    pub modes: [Mode; 2],
    /// Retained levels in ascending energy.
    pub levels: Vec<DressedLevel>,
    index: BTreeMap<Label, usize>,
    /// Eigenvectors (columns, product Fock basis) matching `levels`.
    pub vectors: Option<Mat<f64>>,
}

pub fn diagonalize_and_label(
    h: &CoupledHamiltonian,
    opts: &LabelOptions<'_>,
) -> Result<DressedSpectrum> {
    let eig = SymmetricEigen::new(&h.matrix)?;
    let bare = SymmetricEigen::new(&h.bare_atom)?;
    let trunc = h.trunc;
    let dim = trunc.dim();
    let keep = opts.retention.count(dim);
    let (nr, na) = (trunc.n_res, trunc.n_atom);

    // Overlap amplitudes <n, i | psi_j> for retained j.
    let mut amp = Mat::<f64>::zeros(dim, keep);
    for j in 0..keep {
        for n in 0..nr {
            for i in 0..na {
                let mut acc = 0.0;
                for k in 0..na {
                    acc += bare.vectors[(k, i)] * eig.vectors[(trunc.index(n, k), j)];
                }
                amp[(trunc.index(n, i), j)] = acc;
            }
        }
    }

    let assignment = match opts.previous {
        Some(prev) => continuity_assignment(prev, &eig.vectors, keep)?,
        None => greedy_assignment(&amp, keep, dim),
    };

    let mut levels = Vec::with_capacity(keep);
    let mut index = BTreeMap::new();
    for (j, &(slot, overlap)) in assignment.iter().enumerate() {
        let label = Label::new(slot / na, slot % na);
        index.insert(label, j);
        levels.push(DressedLevel {
            label,
            energy: eig.values[j],
            overlap,
            ambiguous: overlap < AMBIGUITY_THRESHOLD,
        });
    }
    let vectors = opts
        .keep_vectors
        .then(|| Mat::from_fn(dim, keep, |r, c| eig.vectors[(r, c)]));
    Ok(DressedSpectrum {
        flux: h.flux,
        trunc,
        modes: h.modes,
        levels,
        index,
        vectors,
    })
}

/// Global greedy matching: candidate (eigenvector, product state) pairs are
/// taken in descending squared overlap; a pair is accepted when both sides
/// are still free.
fn greedy_assignment(amp: &Mat<f64>, keep: usize, dim: usize) -> Vec<(usize, f64)> {
    const CANDIDATES: usize = 4;
    let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(keep * CANDIDATES);
    for j in 0..keep {
        let mut top: [(f64, usize); CANDIDATES] = [(-1.0, 0); CANDIDATES];
        for r in 0..dim {
            let w = amp[(r, j)] * amp[(r, j)];
            if w > top[CANDIDATES - 1].0 {
                let mut pos = CANDIDATES - 1;
                while pos > 0 && top[pos - 1].0 < w {
                    top[pos] = top[pos - 1];
                    pos -= 1;
                }
                top[pos] = (w, r);
            }
        }
        cands.extend(top.iter().filter(|t| t.0 >= 0.0).map(|&(w, r)| (w, j, r)));
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out: Vec<Option<(usize, f64)>> = vec![None; keep];
    let mut taken = vec![false; dim];
    for (w, j, r) in cands {
        if out[j].is_none() && !taken[r] {
            out[j] = Some((r, w));
            taken[r] = true;
        }
    }
    // Leftovers: best free product state by full scan.
    for j in 0..keep {
        if out[j].is_none() {
            let mut best = (usize::MAX, -1.0);
            for r in 0..dim {
                let w = amp[(r, j)] * amp[(r, j)];
                if !taken[r] && w > best.1 {
                    best = (r, w);
                }
            }
            taken[best.0] = true;
            out[j] = Some(best);
        }
    }
    out.into_iter()
        .map(|o| o.expect("every retained state is assigned"))
        .collect()
}

fn continuity_assignment(
    prev: &DressedSpectrum,
    vectors: &Mat<f64>,
    keep: usize,
) -> Result<Vec<(usize, f64)>> {
    let pv = prev.vectors.as_ref().ok_or_else(|| {
        Error::invalid("continuity labeling needs the previous spectrum's eigenvectors")
    })?;
    if pv.nrows() != vectors.nrows() {
        return Err(Error::invalid(
            "continuity labeling needs matching truncations",
        ));
    }
    let na = prev.trunc.n_atom;
    let pk = pv.ncols();
    let prod = pv.transpose() * vectors.get(.., ..keep);
    let mut cands = Vec::with_capacity(keep * 3);
    for j in 0..keep {
        let mut best: [(f64, usize); 3] = [(-1.0, 0); 3];
        for p in 0..pk {
            let w = prod[(p, j)] * prod[(p, j)];
            if w > best[2].0 {
                best[2] = (w, p);
                best.sort_by(|a, b| b.0.total_cmp(&a.0));
            }
        }
        cands.extend(best.iter().filter(|b| b.0 >= 0.0).map(|&(w, p)| (w, j, p)));
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<Option<(usize, f64)>> = vec![None; keep];
    let mut taken = vec![false; pk];
    for (w, j, p) in cands {
        if out[j].is_none() && !taken[p] {
            let l = prev.levels[p].label;
            out[j] = Some((l.n * na + l.i, w));
            taken[p] = true;
        }
    }
    out.into_iter()
        .map(|o| o.ok_or(Error::LabelAmbiguity { count: 1 }))
        .collect()
}

impl DressedSpectrum {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, label: Label) -> Option<&DressedLevel> {
        self.index.get(&label).map(|&j| &self.levels[j])
    }

    /// Energy of an unambiguous label.
    pub fn energy(&self, label: Label) -> Result<f64> {
        match self.level(label) {
            Some(l) if !l.ambiguous => Ok(l.energy),
            _ => Err(Error::MissingLabel(label)),
        }
    }

    /// Energy of a label even if it is flagged ambiguous.
    pub fn energy_lenient(&self, label: Label) -> Result<f64> {
        self.level(label)
            .map(|l| l.energy)
            .ok_or(Error::MissingLabel(label))
    }

    pub fn ambiguous_count(&self) -> usize {
        self.levels.iter().filter(|l| l.ambiguous).count()
    }

    /// `Err(LabelAmbiguity)` when any retained label is flagged.
    pub fn ensure_unambiguous(&self) -> Result<()> {
        match self.ambiguous_count() {
            0 => Ok(()),
            count => Err(Error::LabelAmbiguity { count }),
        }
    }

    /// Largest photon index `n` such that `|n, i>` is retained for every
    /// `i` in `atom_levels`, counting from zero without gaps.
    pub fn retained_photon_range(&self, atom_levels: &[usize]) -> usize {
        let mut n = 0;
        while atom_levels
            .iter()
            .all(|&i| self.index.contains_key(&Label::new(n, i)))
        {
            n += 1;
        }
        n
    }

    pub fn vector(&self, label: Label) -> Result<Vec<f64>> {
        let v = self
            .vectors
            .as_ref()
            .ok_or_else(|| Error::invalid("spectrum was built without eigenvectors"))?;
        let &j = self.index.get(&label).ok_or(Error::MissingLabel(label))?;
        Ok((0..v.nrows()).map(|r| v[(r, j)]).collect())
    }

    /// `|<to| O |from>|` for a node operator in zero-point units.
    pub fn operator_element(&self, op: NodeOperator, from: Label, to: Label) -> Result<f64> {
        let a = self.vector(from)?;
        let b = self.vector(to)?;
        let ob = apply_node_operator(&self.trunc, &self.modes, op, &a);
        Ok(ob.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().abs())
    }
}
