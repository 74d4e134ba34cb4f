//! Exact diagonalization, dressed-state identification and the first-order
//! expressions for the drive-induced f0 ↔ g1 coupling.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;

use crate::error::{Error, LabelConflict, Result};
use crate::model::{
    build_hamiltonian, build_hjc, Basis, BasisLabel, CMatrix, CVector, DriveParams, Level,
    OperatorMatrix, SystemParams, C64,
};

/// Eigenvalue gaps below this (rad/ns) are treated as exact degeneracies.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Minimum |⟨label|Φ⟩|² for a dressed label to be accepted.
pub const LABEL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SpectralResult {
    /// Ascending eigenvalues ε_n.
    pub eigenvalues: Vec<f64>,
    /// Column n holds Φ_n, phase-fixed so its largest bare component is real positive.
    pub eigenvectors: CMatrix,
    /// Dressed label → eigenindex.
    pub labels: BTreeMap<BasisLabel, usize>,
}

impl SpectralResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, n: usize) -> CVector {
        self.eigenvectors.column(n).into_owned()
    }

    pub fn index_of(&self, label: BasisLabel) -> Option<usize> {
        self.labels.get(&label.as_dressed()).copied()
    }

    pub fn dressed_vector(&self, label: BasisLabel) -> Result<CVector> {
        self.index_of(label)
            .map(|n| self.vector(n))
            .ok_or_else(|| Error::Contract(format!("{} has not been labeled", label.as_dressed())))
    }

    pub fn dressed_energy(&self, label: BasisLabel) -> Result<f64> {
        self.index_of(label)
            .map(|n| self.eigenvalues[n])
            .ok_or_else(|| Error::Contract(format!("{} has not been labeled", label.as_dressed())))
    }
}

/// Full Hermitian eigendecomposition with the crate's phase and degeneracy conventions.
pub fn diagonalize(h: &OperatorMatrix) -> Result<SpectralResult> {
    if !h.is_hermitian() {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (max |H - H†| = {:.3e})",
            h.hermiticity_error()
        )));
    }
    let eig = SymmetricEigen::new(h.entries.clone());
    let n = h.dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eigenvalues[end] - eigenvalues[end - 1] < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            align_cluster_to_bare(&mut vectors, start, end);
        }
        start = end;
    }
    for col in 0..n {
        fix_phase(&mut vectors, col);
    }
    Ok(SpectralResult { eigenvalues, eigenvectors: vectors, labels: BTreeMap::new() })
}

/// Within a degenerate cluster, rotate to the orthonormal basis closest to the
/// bare states carrying the most weight in the cluster (Löwdin alignment).
fn align_cluster_to_bare(vectors: &mut CMatrix, start: usize, end: usize) {
    let d = end - start;
    let n = vectors.nrows();
    let block = vectors.columns(start, d).into_owned();
    let mut weights: Vec<(usize, f64)> = (0..n)
        .map(|i| (i, block.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>()))
        .collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = weights.iter().take(d).map(|w| w.0).collect();
    chosen.sort_unstable();
    // A[c, s] = ⟨Φ_c | bare_s⟩
    let a = CMatrix::from_fn(d, d, |c, s| block[(chosen[s], c)].conj());
    let svd = a.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return;
    };
    if svd.singular_values.iter().any(|s| *s < 1e-8) {
        return;
    }
    let rotated = &block * (u * v_t);
    vectors.columns_mut(start, d).copy_from(&rotated);
}

fn fix_phase(vectors: &mut CMatrix, col: usize) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in vectors.column(col).iter().enumerate() {
        // strict comparison with a small margin keeps the choice stable for
        // components of (numerically) equal magnitude
        if z.norm() > best_mag + 1e-12 {
            best = i;
            best_mag = z.norm();
        }
    }
    let pivot = vectors[(best, col)];
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for z in vectors.column_mut(col).iter_mut() {
            *z *= phase;
        }
        vectors[(best, col)] = C64::new(vectors[(best, col)].re, 0.0);
    }
}

/// Labels every bare state of `basis` with its dressed eigenvector.
pub fn label_dressed_states(eig: SpectralResult, basis: &Basis) -> Result<SpectralResult> {
    let all: Vec<BasisLabel> = basis.labels().collect();
    label_states(eig, basis, &all)
}

/// Greedy max-overlap assignment for the given bare labels.
///
/// Labels are processed in order of decreasing best overlap; a label whose
/// best eigenvector is already claimed, or whose best |overlap|² is below
/// [`LABEL_THRESHOLD`], is reported as a conflict.
pub fn label_states(
    mut eig: SpectralResult,
    basis: &Basis,
    labels: &[BasisLabel],
) -> Result<SpectralResult> {
    let mut candidates = Vec::with_capacity(labels.len());
    for &label in labels {
        let row = basis.index(label.as_bare())?;
        let (n, ov) = (0..eig.dim())
            .map(|n| (n, eig.eigenvectors[(row, n)].norm_sqr()))
            .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        candidates.push((label.as_dressed(), n, ov));
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut owner: BTreeMap<usize, BasisLabel> = BTreeMap::new();
    let mut conflicts = Vec::new();
    let mut assigned = BTreeMap::new();
    for (label, n, ov) in candidates {
        if ov < LABEL_THRESHOLD {
            conflicts.push(LabelConflict { label: label.to_string(), eigen_index: n, overlap_sq: ov, claimed_by: None });
        } else if let Some(other) = owner.get(&n) {
            conflicts.push(LabelConflict {
                label: label.to_string(),
                eigen_index: n,
                overlap_sq: ov,
                claimed_by: Some(other.to_string()),
            });
        } else {
            owner.insert(n, label);
            assigned.insert(label, n);
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::Labeling { conflicts });
    }
    eig.labels = assigned;
    Ok(eig)
}

/// Eigenstates of H_JC (Ω = 0) in the frame at `omega_d`, with the requested
/// dressed labels attached.
pub fn undriven_dressed(params: &SystemParams, omega_d: f64, labels: &[BasisLabel]) -> Result<SpectralResult> {
    let h = build_hjc(params, &DriveParams::undriven(params, omega_d))?;
    label_states(diagonalize(&h)?, &params.basis(), labels)
}

/// |f0⟩_D and |g1⟩_D as bare-basis vectors.
pub fn dressed_pair(params: &SystemParams, omega_d: f64) -> Result<(CVector, CVector)> {
    let eig = undriven_dressed(params, omega_d, &[BasisLabel::F0, BasisLabel::G1])?;
    Ok((eig.dressed_vector(BasisLabel::F0)?, eig.dressed_vector(BasisLabel::G1)?))
}

/// Overlap coefficients of two reference states with every eigenvector.
#[derive(Clone, Debug)]
pub struct OverlapSet {
    /// α_n = ⟨Φ_n|f0⟩_D
    pub alpha_n: Vec<C64>,
    /// β_n = ⟨Φ_n|g1⟩_D
    pub beta_n: Vec<C64>,
    /// θ_nm, the phase entering the cos[(ε_n − ε_m)t + θ_nm] interference term.
    pub theta_nm: Vec<Vec<f64>>,
}

impl OverlapSet {
    pub fn new(eig: &SpectralResult, f0_d: &CVector, g1_d: &CVector) -> Self {
        let alpha_n: Vec<C64> = (0..eig.dim()).map(|n| eig.eigenvectors.column(n).dotc(f0_d)).collect();
        let beta_n: Vec<C64> = (0..eig.dim()).map(|n| eig.eigenvectors.column(n).dotc(g1_d)).collect();
        let n = eig.dim();
        let theta_nm = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (alpha_n[i].conj() * beta_n[i] * alpha_n[j] * beta_n[j].conj()).arg())
                    .collect()
            })
            .collect();
        Self { alpha_n, beta_n, theta_nm }
    }

    pub fn alpha_norm(&self) -> f64 {
        self.alpha_n.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn beta_norm(&self) -> f64 {
        self.beta_n.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// The two eigenstates of the driven Hamiltonian with the largest combined
/// weight on |f0⟩_D and |g1⟩_D.
#[derive(Clone, Debug)]
pub struct PolaritonPair {
    pub spectrum: SpectralResult,
    pub overlaps: OverlapSet,
    /// Index of the upper polariton Φ_+.
    pub plus: usize,
    /// Index of the lower polariton Φ_−.
    pub minus: usize,
    pub f0_d: CVector,
    pub g1_d: CVector,
}

impl PolaritonPair {
    pub fn splitting(&self) -> f64 {
        self.spectrum.eigenvalues[self.plus] - self.spectrum.eigenvalues[self.minus]
    }
}

pub fn polariton_pair(params: &SystemParams, drive: &DriveParams) -> Result<PolaritonPair> {
    let (f0_d, g1_d) = dressed_pair(params, drive.omega_d())?;
    let spectrum = diagonalize(&build_hamiltonian(params, drive)?)?;
    let overlaps = OverlapSet::new(&spectrum, &f0_d, &g1_d);
    let mut ranked: Vec<(usize, f64)> = (0..spectrum.dim())
        .map(|n| (n, overlaps.alpha_n[n].norm_sqr() + overlaps.beta_n[n].norm_sqr()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (a, b) = (ranked[0].0, ranked[1].0);
    let (plus, minus) = if spectrum.eigenvalues[a] >= spectrum.eigenvalues[b] { (a, b) } else { (b, a) };
    Ok(PolaritonPair { spectrum, overlaps, plus, minus, f0_d, g1_d })
}

/// Raw gap ε_+ − ε_− between the two polaritons (2|g̃| at resonance, weak drive).
pub fn exact_splitting(params: &SystemParams, drive: &DriveParams) -> Result<f64> {
    Ok(polariton_pair(params, drive)?.splitting())
}

fn nonzero(x: f64, what: &str) -> Result<f64> {
    if x.abs() < 1e-12 {
        Err(Error::Singularity(format!("{what} vanishes")))
    } else {
        Ok(x)
    }
}

/// First-order (in g) dressed states |f, l⟩_D and |g, l+1⟩_D, unnormalized,
/// with the coefficients in the printed sign convention:
///
/// ```text
/// |f,l⟩_D   = |f,l⟩ − g√(2(l+1))/(Δ+α) |e,l+1⟩ + g√(3l)/(Δ+2α) |h,l−1⟩
/// |g,l+1⟩_D = |g,l+1⟩ + g√(l+1)/Δ |e,l⟩
/// ```
///
/// This sign convention is that of `g → −g` relative to `build_hjc`; exact
/// eigenvectors carry the opposite sign on the admixed components.
pub fn dressed_states_first_order(params: &SystemParams, l: usize) -> Result<(CVector, CVector)> {
    params.require_level_h()?;
    if l + 1 >= params.n_fock {
        return Err(Error::Size(format!("l + 1 = {} needs n_fock > {}", l + 1, l + 1)));
    }
    let delta = nonzero(params.detuning(), "Δ")?;
    let d_alpha = nonzero(delta + params.alpha, "Δ + α")?;
    let d_2alpha = nonzero(delta + 2.0 * params.alpha, "Δ + 2α")?;
    let ratio = params.g / delta;
    if ratio * ratio > 0.05 {
        log::warn!("(g/Δ)² = {:.3} is not small; first-order dressed states are unreliable", ratio * ratio);
    }
    let basis = params.basis();
    let lf = l as f64;
    let mut f = basis.unit(BasisLabel::bare(Level::F, l))?;
    f[basis.index(BasisLabel::bare(Level::E, l + 1))?] = C64::new(-params.g * (2.0 * (lf + 1.0)).sqrt() / d_alpha, 0.0);
    if l > 0 {
        f[basis.index(BasisLabel::bare(Level::H, l - 1))?] = C64::new(params.g * (3.0 * lf).sqrt() / d_2alpha, 0.0);
    }
    let mut g = basis.unit(BasisLabel::bare(Level::G, l + 1))?;
    g[basis.index(BasisLabel::bare(Level::E, l))?] = C64::new(params.g * (lf + 1.0).sqrt() / delta, 0.0);
    Ok((f, g))
}

/// First-order effective coupling
/// `g̃_l = g Ω e^{iφ} √((l+1)/2) α / (Δ(Δ+α))`, as printed. For `l = 0`
/// this is the coupling `g̃` between |f0⟩_D and |g1⟩_D. For α < 0 < Δ+α the
/// real prefactor is negative, so `arg g̃ = φ + π`.
pub fn effective_coupling_pt(params: &SystemParams, drive: &DriveParams, l: usize) -> Result<C64> {
    params.require_level_h()?;
    if l + 1 >= params.n_fock {
        return Err(Error::Size(format!("l + 1 = {} needs n_fock > {}", l + 1, l + 1)));
    }
    let delta = nonzero(params.detuning(), "Δ")?;
    let d_alpha = nonzero(delta + params.alpha, "Δ + α")?;
    let mag = params.g * drive.omega_amp() * ((l as f64 + 1.0) / 2.0).sqrt() * params.alpha / (delta * d_alpha);
    Ok(C64::from_polar(1.0, drive.phi()) * mag)
}

/// Raman coupling of a Λ system with the same g, Ω and Δ: `g_Λ = gΩe^{iφ}/Δ`.
///
/// For any finite α the transmon coupling is smaller, |g̃| < |g_Λ|: the two
/// second-order paths via |e0⟩ and |e1⟩ interfere destructively.
pub fn lambda_system_coupling(params: &SystemParams, drive: &DriveParams) -> Result<C64> {
    let delta = nonzero(params.detuning(), "Δ")?;
    Ok(C64::from_polar(params.g * drive.omega_amp() / delta, drive.phi()))
}
