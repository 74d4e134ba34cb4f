//! Truncated transmon ⊗ resonator Hilbert space and the rotating-frame
//! Hamiltonian of a coherently driven multilevel transmon.
//!
//! The transmon is treated as a Duffing oscillator with lowering operator
//! `b = |g⟩⟨e| + √2|e⟩⟨f| + √3|f⟩⟨h| + …`. In the frame rotating at the drive
//! frequency `ω_d`:
//!
//! ```text
//! H_JC = δ_r a†a + δ_q b†b + (α/2) b†b†bb + g (a b† + a† b)
//! H_d  = (Ω/2) (e^{iφ} b + e^{-iφ} b†)
//! ```
//!
//! with `δ_r = ω_r − ω_d` and `δ_q = ω_ge − ω_d`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest Hilbert dimension accepted by the matrix builders.
pub const MAX_DIM: usize = 4096;

/// Population threshold above which truncation guard levels raise a warning.
pub const GUARD_POPULATION_WARN: f64 = 1e-6;

/// Static device parameters. Frequencies and rates are angular, in rad/ns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_ge: f64,
    pub omega_r: f64,
    pub g: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_transmon: usize,
    pub n_fock: usize,
}

impl SystemParams {
    pub const DEFAULT_N_TRANSMON: usize = 5;
    pub const DEFAULT_N_FOCK: usize = 6;

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        omega_ge: f64,
        omega_r: f64,
        g: f64,
        alpha: f64,
        kappa: f64,
        gamma: f64,
        n_transmon: usize,
        n_fock: usize,
    ) -> Result<Self> {
        let p = Self { omega_ge, omega_r, g, alpha, kappa, gamma, n_transmon, n_fock };
        p.validate()?;
        Ok(p)
    }

    /// Device of the spectroscopy experiment: ω_ge/2π = 8.103 GHz,
    /// ω_r/2π = 7.126 GHz, g/2π = 65 MHz, α/2π = −0.376 GHz, κ/2π = 6.6 MHz.
    /// The qubit decay rate is not reported for this device; 1 MHz is used.
    pub fn device() -> Self {
        Self {
            omega_ge: units::ghz(8.103),
            omega_r: units::ghz(7.126),
            g: units::mhz(65.0),
            alpha: units::ghz(-0.376),
            kappa: units::mhz(6.6),
            gamma: units::mhz(1.0),
            n_transmon: Self::DEFAULT_N_TRANSMON,
            n_fock: Self::DEFAULT_N_FOCK,
        }
    }

    /// Parameters of the swap simulations: Δ/2π = 0.979 GHz with the same
    /// ω_ge, α and g, truncated to four transmon levels and four Fock states.
    pub fn swap_simulation() -> Self {
        Self {
            omega_r: units::ghz(8.103 - 0.979),
            n_transmon: 4,
            n_fock: 4,
            ..Self::device()
        }
    }

    pub fn with_truncation(mut self, n_transmon: usize, n_fock: usize) -> Result<Self> {
        self.n_transmon = n_transmon;
        self.n_fock = n_fock;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_ge, self.omega_r, self.g, self.alpha, self.kappa, self.gamma]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite system parameter".into()));
        }
        if self.alpha >= 0.0 {
            return Err(Error::Domain(format!("anharmonicity must be negative, got {}", self.alpha)));
        }
        if self.g < 0.0 {
            return Err(Error::Domain(format!("coupling g must be non-negative, got {}", self.g)));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::Domain("decay rates must be non-negative".into()));
        }
        if self.n_transmon < 3 {
            return Err(Error::Size(format!("n_transmon = {} < 3", self.n_transmon)));
        }
        if self.n_fock < 2 {
            return Err(Error::Size(format!("n_fock = {} < 2", self.n_fock)));
        }
        let dim = self.n_transmon.checked_mul(self.n_fock).unwrap_or(usize::MAX);
        if dim > MAX_DIM {
            return Err(Error::Size(format!("Hilbert dimension {dim} exceeds {MAX_DIM}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n_transmon * self.n_fock
    }

    /// Δ = ω_ge − ω_r.
    pub fn detuning(&self) -> f64 {
        self.omega_ge - self.omega_r
    }

    pub fn dispersive_ratio(&self) -> f64 {
        (self.g / self.detuning()).abs()
    }

    /// `|g/Δ| < 0.5`. Advisory only.
    pub fn is_dispersive(&self) -> bool {
        self.dispersive_ratio() < 0.5
    }

    /// 2ω_ge + α − ω_r: the f0 ↔ g1 drive resonance without any dressing.
    pub fn bare_resonance(&self) -> f64 {
        2.0 * self.omega_ge + self.alpha - self.omega_r
    }

    pub fn basis(&self) -> Basis {
        Basis { n_transmon: self.n_transmon, n_fock: self.n_fock }
    }

    pub(crate) fn require_level_h(&self) -> Result<()> {
        if self.n_transmon < 4 {
            return Err(Error::Size(format!(
                "operation needs transmon level h, but n_transmon = {}",
                self.n_transmon
            )));
        }
        Ok(())
    }
}

/// Drive amplitude Ω, phase φ and frequency ω_d, plus the bare frequencies
/// the detunings are taken against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveParams {
    omega_amp: f64,
    phi: f64,
    omega_d: f64,
    omega_r0: f64,
    omega_ge0: f64,
}

impl DriveParams {
    pub fn new(params: &SystemParams, omega_amp: f64, phi: f64, omega_d: f64) -> Result<Self> {
        if !(omega_amp >= 0.0) || !omega_amp.is_finite() {
            return Err(Error::Domain(format!("drive amplitude must be >= 0, got {omega_amp}")));
        }
        if !phi.is_finite() || !omega_d.is_finite() {
            return Err(Error::Domain("non-finite drive phase or frequency".into()));
        }
        Ok(Self { omega_amp, phi, omega_d, omega_r0: params.omega_r, omega_ge0: params.omega_ge })
    }

    /// Ω = 0 at frequency `omega_d`.
    pub fn undriven(params: &SystemParams, omega_d: f64) -> Self {
        Self { omega_amp: 0.0, phi: 0.0, omega_d, omega_r0: params.omega_r, omega_ge0: params.omega_ge }
    }

    pub fn omega_amp(&self) -> f64 {
        self.omega_amp
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn omega_d(&self) -> f64 {
        self.omega_d
    }

    /// δ_r = ω_r − ω_d.
    pub fn delta_r(&self) -> f64 {
        self.omega_r0 - self.omega_d
    }

    /// δ_q = ω_ge − ω_d.
    pub fn delta_q(&self) -> f64 {
        self.omega_ge0 - self.omega_d
    }

    pub fn with_omega_d(mut self, omega_d: f64) -> Self {
        self.omega_d = omega_d;
        self
    }

    pub fn with_amplitude(mut self, omega_amp: f64) -> Result<Self> {
        if !(omega_amp >= 0.0) {
            return Err(Error::Domain(format!("drive amplitude must be >= 0, got {omega_amp}")));
        }
        self.omega_amp = omega_amp;
        Ok(self)
    }

    pub fn with_phase(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }
}

/// Transmon level index: g = 0, e = 1, f = 2, h = 3, …
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Level(pub usize);

impl Level {
    pub const G: Level = Level(0);
    pub const E: Level = Level(1);
    pub const F: Level = Level(2);
    pub const H: Level = Level(3);
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => write!(f, "g"),
            1 => write!(f, "e"),
            2 => write!(f, "f"),
            3 => write!(f, "h"),
            n => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisLabel {
    pub transmon_level: Level,
    pub photons: usize,
    pub dressed: bool,
}

impl BasisLabel {
    pub const fn bare(level: Level, photons: usize) -> Self {
        Self { transmon_level: level, photons, dressed: false }
    }

    pub const fn dressed(level: Level, photons: usize) -> Self {
        Self { transmon_level: level, photons, dressed: true }
    }

    pub const F0: BasisLabel = BasisLabel::bare(Level::F, 0);
    pub const G1: BasisLabel = BasisLabel::bare(Level::G, 1);

    pub fn as_bare(self) -> Self {
        Self { dressed: false, ..self }
    }

    pub fn as_dressed(self) -> Self {
        Self { dressed: true, ..self }
    }

    pub fn excitations(&self) -> usize {
        self.transmon_level.0 + self.photons
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}{}⟩", self.transmon_level, self.photons)?;
        if self.dressed {
            write!(f, "_D")?;
        }
        Ok(())
    }
}

/// Composite indexing `level × n_fock + photons`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Basis {
    pub n_transmon: usize,
    pub n_fock: usize,
}

impl Basis {
    pub fn dim(&self) -> usize {
        self.n_transmon * self.n_fock
    }

    pub fn contains(&self, label: BasisLabel) -> bool {
        label.transmon_level.0 < self.n_transmon && label.photons < self.n_fock
    }

    pub fn index(&self, label: BasisLabel) -> Result<usize> {
        if !self.contains(label) {
            return Err(Error::Size(format!(
                "{label} outside truncation {}x{}",
                self.n_transmon, self.n_fock
            )));
        }
        Ok(label.transmon_level.0 * self.n_fock + label.photons)
    }

    pub fn label(&self, index: usize) -> BasisLabel {
        debug_assert!(index < self.dim());
        BasisLabel::bare(Level(index / self.n_fock), index % self.n_fock)
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.dim()).map(move |i| self.label(i))
    }

    /// Topmost transmon level or topmost Fock state.
    pub fn is_guard(&self, index: usize) -> bool {
        let l = self.label(index);
        l.transmon_level.0 + 1 == self.n_transmon || l.photons + 1 == self.n_fock
    }

    pub fn unit(&self, label: BasisLabel) -> Result<CVector> {
        let mut v = CVector::zeros(self.dim());
        v[self.index(label)?] = C64::new(1.0, 0.0);
        Ok(v)
    }
}

/// Dense complex operator on the truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub dim: usize,
    pub entries: CMatrix,
}

impl OperatorMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Size(format!(
                "operator must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() > MAX_DIM {
            return Err(Error::Size(format!("dimension {} exceeds {MAX_DIM}", entries.nrows())));
        }
        Ok(Self { dim: entries.nrows(), entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: CMatrix::zeros(dim, dim) }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// max |H − H†|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                err = err.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= 1e-12 * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn element(&self, basis: &Basis, bra: BasisLabel, ket: BasisLabel) -> Result<C64> {
        Ok(self.entries[(basis.index(bra)?, basis.index(ket)?)])
    }

    pub fn add(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { dim: self.dim, entries: &self.entries + &other.entries }
    }

    /// ⟨u|A|v⟩.
    pub fn expectation(&self, u: &CVector, v: &CVector) -> C64 {
        u.dotc(&(&self.entries * v))
    }
}

fn check_dim(params: &SystemParams) -> Result<()> {
    params.validate()
}

/// Transmon lowering operator `b` on the composite space.
pub fn transmon_lowering(params: &SystemParams) -> CMatrix {
    let basis = params.basis();
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for k in 1..params.n_transmon {
        for l in 0..params.n_fock {
            let row = (k - 1) * params.n_fock + l;
            let col = k * params.n_fock + l;
            m[(row, col)] = C64::new((k as f64).sqrt(), 0.0);
        }
    }
    m
}

/// Resonator annihilation operator `a` on the composite space.
pub fn resonator_lowering(params: &SystemParams) -> CMatrix {
    let basis = params.basis();
    let mut m = CMatrix::zeros(basis.dim(), basis.dim());
    for k in 0..params.n_transmon {
        for l in 1..params.n_fock {
            let row = k * params.n_fock + l - 1;
            let col = k * params.n_fock + l;
            m[(row, col)] = C64::new((l as f64).sqrt(), 0.0);
        }
    }
    m
}

/// Total excitation number `a†a + b†b` (diagonal).
pub fn excitation_number(params: &SystemParams) -> CMatrix {
    let basis = params.basis();
    CMatrix::from_diagonal(&CVector::from_iterator(
        basis.dim(),
        basis.labels().map(|l| C64::new(l.excitations() as f64, 0.0)),
    ))
}

/// Bare energy of |k, l⟩ in the frame rotating at `omega_d`.
pub fn bare_energy(params: &SystemParams, omega_d: f64, level: usize, photons: usize) -> f64 {
    let k = level as f64;
    let l = photons as f64;
    l * (params.omega_r - omega_d) + k * (params.omega_ge - omega_d) + 0.5 * params.alpha * k * (k - 1.0)
}

/// Undriven Jaynes–Cummings Hamiltonian in the frame rotating at `drive.omega_d()`.
pub fn build_hjc(params: &SystemParams, drive: &DriveParams) -> Result<OperatorMatrix> {
    check_dim(params)?;
    let basis = params.basis();
    let n = basis.dim();
    let mut h = CMatrix::zeros(n, n);
    for idx in 0..n {
        let lab = basis.label(idx);
        h[(idx, idx)] = C64::new(
            bare_energy(params, drive.omega_d(), lab.transmon_level.0, lab.photons),
            0.0,
        );
    }
    // g (a b† + a† b): |k, l⟩ → |k+1, l−1⟩ with amplitude √(k+1)√l
    for k in 0..params.n_transmon - 1 {
        for l in 1..params.n_fock {
            let from = k * params.n_fock + l;
            let to = (k + 1) * params.n_fock + l - 1;
            let amp = params.g * ((k + 1) as f64).sqrt() * (l as f64).sqrt();
            h[(to, from)] = C64::new(amp, 0.0);
            h[(from, to)] = C64::new(amp, 0.0);
        }
    }
    OperatorMatrix::new(h)
}

/// Drive term `(Ω/2)(e^{iφ} b + e^{−iφ} b†)`.
pub fn build_hdrive(params: &SystemParams, drive: &DriveParams) -> Result<OperatorMatrix> {
    check_dim(params)?;
    Ok(OperatorMatrix {
        dim: params.dim(),
        entries: drive_operator(params, drive.phi()) * C64::new(drive.omega_amp(), 0.0),
    })
}

/// ∂H/∂Ω = ½(e^{iφ} b + e^{−iφ} b†).
pub fn drive_operator(params: &SystemParams, phi: f64) -> CMatrix {
    let b = transmon_lowering(params);
    let phase = C64::from_polar(0.5, phi);
    let mut m = &b * phase;
    m += b.adjoint() * phase.conj();
    m
}

/// ∂H/∂ω_d = −(a†a + b†b).
pub fn drive_frequency_derivative(params: &SystemParams) -> CMatrix {
    -excitation_number(params)
}

/// H = H_JC + H_d.
pub fn build_hamiltonian(params: &SystemParams, drive: &DriveParams) -> Result<OperatorMatrix> {
    Ok(build_hjc(params, drive)?.add(&build_hdrive(params, drive)?))
}

/// Total population in guard levels (topmost transmon level or Fock state).
pub fn guard_population(params: &SystemParams, state: &CVector) -> f64 {
    let basis = params.basis();
    state
        .iter()
        .enumerate()
        .filter(|(i, _)| basis.is_guard(*i))
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Returns (and logs) a truncation warning when guard levels hold more than
/// [`GUARD_POPULATION_WARN`].
pub fn check_guard_levels(params: &SystemParams, state: &CVector, context: &str) -> Option<String> {
    let p = guard_population(params, state);
    if p > GUARD_POPULATION_WARN {
        let msg = format!(
            "{context}: guard-level population {p:.3e} exceeds {GUARD_POPULATION_WARN:e} \
             (truncation {}x{})",
            params.n_transmon, params.n_fock
        );
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    }
}

/// Closed-form transmon estimate `ω_ge ≈ √(8 E_J E_C) − E_C`, `α ≈ −E_C`.
///
/// Inputs are E/h in GHz; outputs are angular (rad/ns). An estimate only;
/// nothing else in the crate calls it.
pub fn transmon_frequency_estimate(ej_ghz: f64, ec_ghz: f64) -> Result<(f64, f64)> {
    if !(ec_ghz > 0.0) || !(ej_ghz > 20.0 * ec_ghz) {
        return Err(Error::Domain(format!(
            "transmon limit requires E_J > 20 E_C (E_J = {ej_ghz}, E_C = {ec_ghz})"
        )));
    }
    let f_ge = (8.0 * ej_ghz * ec_ghz).sqrt() - ec_ghz;
    Ok((units::ghz(f_ge), units::ghz(-ec_ghz)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    #[test]
    fn decoupled_hjc_is_diagonal() {
        let p = SystemParams { g: 0.0, ..SystemParams::device() };
        let h = build_hjc(&p, &DriveParams::undriven(&p, units::ghz(8.7))).unwrap();
        for i in 0..h.dim {
            for j in 0..h.dim {
                if i != j {
                    assert_eq!(h.entries[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn f0_diagonal_in_lab_frame() {
        let p = SystemParams::device();
        let h = build_hjc(&p, &DriveParams::undriven(&p, 0.0)).unwrap();
        let basis = p.basis();
        let e = h.element(&basis, BasisLabel::F0, BasisLabel::F0).unwrap().re;
        assert!((e - units::ghz(15.830)).abs() < 1e-9 * e.abs());
    }

    #[test]
    fn diagonal_matches_closed_form() {
        let p = SystemParams::device();
        let drive = DriveParams::new(&p, 0.3, 0.1, units::ghz(8.6)).unwrap();
        let h = build_hjc(&p, &drive).unwrap();
        let basis = p.basis();
        for lab in basis.labels() {
            let (k, l) = (lab.transmon_level.0 as f64, lab.photons as f64);
            let expect = l * drive.delta_r() + k * drive.delta_q() + 0.5 * p.alpha * k * (k - 1.0);
            let got = h.element(&basis, lab, lab).unwrap();
            assert!((got.re - expect).abs() < 1e-12 && got.im == 0.0);
        }
    }

    #[test]
    fn jc_coupling_element_is_g() {
        let p = SystemParams::device();
        let h = build_hjc(&p, &DriveParams::undriven(&p, 1.0)).unwrap();
        let basis = p.basis();
        let e0 = BasisLabel::bare(Level::E, 0);
        assert!((h.element(&basis, e0, BasisLabel::G1).unwrap().re - p.g).abs() < 1e-15);
    }

    #[test]
    fn drive_elements() {
        let p = SystemParams::device();
        let basis = p.basis();
        let zero = build_hdrive(&p, &DriveParams::undriven(&p, 1.0)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let omega = units::ghz(0.1);
        let d = DriveParams::new(&p, omega, 0.0, 1.0).unwrap();
        let h = build_hdrive(&p, &d).unwrap();
        for l in 0..p.n_fock {
            let el = h
                .element(&basis, BasisLabel::bare(Level::E, l), BasisLabel::bare(Level::F, l))
                .unwrap();
            assert!((el.re - omega * 2f64.sqrt() / 2.0).abs() < 1e-15 && el.im.abs() < 1e-15);
        }

        let d = DriveParams::new(&p, omega, FRAC_PI_2, 1.0).unwrap();
        let h = build_hdrive(&p, &d).unwrap();
        let el = h
            .element(&basis, BasisLabel::bare(Level::G, 2), BasisLabel::bare(Level::E, 2))
            .unwrap();
        assert!(el.re.abs() < 1e-15);
        assert!((el.im - TAU * 0.05).abs() < 1e-14);
    }

    #[test]
    fn lowering_operator_structure() {
        let p = SystemParams::device();
        let b = transmon_lowering(&p);
        let basis = p.basis();
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let (li, lj) = (basis.label(i), basis.label(j));
                let expect = if li.photons == lj.photons && lj.transmon_level.0 == li.transmon_level.0 + 1 {
                    (lj.transmon_level.0 as f64).sqrt()
                } else {
                    0.0
                };
                assert_eq!(b[(i, j)].re, expect);
            }
        }
    }

    #[test]
    fn hjc_conserves_excitations() {
        let p = SystemParams::device();
        let h = build_hjc(&p, &DriveParams::undriven(&p, units::ghz(8.7))).unwrap();
        let n = excitation_number(&p);
        let comm = &h.entries * &n - &n * &h.entries;
        assert!(max_abs(&comm) <= 1e-12 * h.max_abs());
    }

    #[test]
    fn frame_change_is_diagonal_shift() {
        let p = SystemParams::device();
        let (w1, w2) = (units::ghz(8.6), units::ghz(8.75));
        let h1 = build_hjc(&p, &DriveParams::undriven(&p, w1)).unwrap();
        let h2 = build_hjc(&p, &DriveParams::undriven(&p, w2)).unwrap();
        let diff = &h1.entries - &h2.entries;
        let basis = p.basis();
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let expect = if i == j { (w2 - w1) * basis.label(i).excitations() as f64 } else { 0.0 };
                assert!((diff[(i, j)].re - expect).abs() < 1e-12 && diff[(i, j)].im == 0.0);
            }
        }
    }

    #[test]
    fn basis_roundtrip() {
        let basis = SystemParams::device().basis();
        for i in 0..basis.dim() {
            assert_eq!(basis.index(basis.label(i)).unwrap(), i);
        }
        assert!(basis.index(BasisLabel::bare(Level(5), 0)).is_err());
        assert!(basis.index(BasisLabel::bare(Level::G, 6)).is_err());
    }

    #[test]
    fn size_limit() {
        let p = SystemParams::device().with_truncation(100, 50);
        assert!(matches!(p, Err(Error::Size(_))));
    }

    #[test]
    fn validation_rejects_bad_params() {
        let p = SystemParams::device();
        assert!(SystemParams { alpha: 0.1, ..p }.validate().is_err());
        assert!(SystemParams { kappa: -1.0, ..p }.validate().is_err());
        assert!(SystemParams { n_transmon: 2, ..p }.validate().is_err());
        assert!(DriveParams::new(&p, -0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn dispersive_flag() {
        let p = SystemParams::device();
        assert!(p.is_dispersive());
        let strong = SystemParams { g: units::ghz(0.6), ..p };
        assert!(!strong.is_dispersive());
    }

    #[test]
    fn transmon_estimate() {
        let (w, a) = transmon_frequency_estimate(47.3, 0.343).unwrap();
        let expect = (8.0f64 * 47.3 * 0.343).sqrt() - 0.343;
        assert!((units::to_ghz(w) - expect).abs() < 1e-12);
        assert!((units::to_ghz(w) - 11.05).abs() < 5e-3);
        assert!((units::to_ghz(a) + 0.343).abs() < 1e-12);
        assert!(matches!(transmon_frequency_estimate(20.0 * 0.343, 0.343), Err(Error::Domain(_))));
    }

    #[test]
    fn detunings_follow_drive_frequency() {
        let p = SystemParams::device();
        let d = DriveParams::new(&p, 0.1, 0.0, units::ghz(8.0)).unwrap();
        assert!((d.delta_r() - units::ghz(7.126 - 8.0)).abs() < 1e-12);
        let d2 = d.with_omega_d(units::ghz(7.0));
        assert!((d2.delta_q() - units::ghz(8.103 - 7.0)).abs() < 1e-12);
    }

    #[test]
    fn guard_levels() {
        let p = SystemParams::device();
        let basis = p.basis();
        let mut v = basis.unit(BasisLabel::F0).unwrap();
        assert!(check_guard_levels(&p, &v, "t").is_none());
        v[basis.index(BasisLabel::bare(Level(4), 0)).unwrap()] = C64::new(1e-2, 0.0);
        assert!(check_guard_levels(&p, &v, "t").is_some());
    }
}
