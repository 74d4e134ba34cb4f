//! Amplitude-dependent drive frequency ω_d(Ω) and exact effective coupling
//! g̃(Ω) by parallel transport of the resonant pair.
//!
//! The pair |Φ_{1,2}⟩ starts as (|f0⟩_D ± |g1⟩_D)/√2 at Ω = 0 and is carried
//! along Ω while ω_d follows
//!
//! ```text
//! dω_d/dΩ = −⟨Φ_1|∂H/∂Ω|Φ_2⟩ / ⟨Φ_1|∂H/∂ω_d|Φ_2⟩
//! ```
//!
//! which keeps the projected 2×2 Hamiltonian in resonant form. The drive
//! phase is set to zero throughout: a phase φ is removed by the unitary
//! e^{−iφ(b†b + a†a)}, which leaves every energy, and so ω_d(Ω) and g̃(Ω),
//! unchanged.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::model::{
    build_hamiltonian, drive_frequency_derivative, drive_operator, CMatrix, CVector, DriveParams,
    SystemParams, C64,
};
use crate::spectral::{diagonalize, undriven_dressed};
use crate::units;
use crate::BasisLabel;

/// Minimum |⟨previous|new⟩|² accepted when re-identifying the pair.
pub const TRACKING_THRESHOLD: f64 = 0.9;

/// Tolerance (rad/ns) on the dressed-energy gap at the Ω = 0 resonance.
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Integrator {
    /// Explicit midpoint, second order in ΔΩ.
    Midpoint,
    /// Forward Euler, first order.
    Euler,
}

#[derive(Clone, Copy, Debug)]
pub struct StarkConfig {
    pub n_steps: usize,
    pub integrator: Integrator,
    /// Re-impose the resonance condition by Newton iteration after each step.
    pub correct: bool,
}

impl StarkConfig {
    pub fn new(n_steps: usize) -> Self {
        Self { n_steps, integrator: Integrator::Midpoint, correct: true }
    }

    /// Plain forward Euler in Ω with no corrector.
    pub fn euler(n_steps: usize) -> Self {
        Self { n_steps, integrator: Integrator::Euler, correct: false }
    }
}

/// ω_d(0): the drive frequency at which |f0⟩_D and |g1⟩_D are degenerate.
pub fn initial_drive_frequency(params: &SystemParams) -> Result<f64> {
    params.validate()?;
    if !params.is_dispersive() {
        log::warn!("|g/Δ| = {:.3} is outside the dispersive regime", params.dispersive_ratio());
    }
    let bare = params.bare_resonance();
    let gap = |w: f64| -> Result<f64> {
        let s = undriven_dressed(params, w, &[BasisLabel::F0, BasisLabel::G1])?;
        Ok(s.dressed_energy(BasisLabel::F0)? - s.dressed_energy(BasisLabel::G1)?)
    };
    let g_mid = gap(bare)?;
    if g_mid.abs() < RESONANCE_TOL * 1e-3 {
        return Ok(bare);
    }
    let (mut lo, mut hi) = (bare - 10.0 * params.g, bare + 10.0 * params.g);
    let (mut f_lo, mut f_hi) = (gap(lo)?, gap(hi)?);
    if f_lo * f_hi > 0.0 {
        return Err(Error::Bracketing { lo, hi });
    }
    // Illinois-modified regula falsi; the gap is nearly linear in ω_d
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let fx = gap(x)?;
        if fx.abs() < RESONANCE_TOL * 1e-3 || (hi - lo).abs() < 1e-15 * x.abs() {
            return Ok(x);
        }
        if fx * f_hi > 0.0 {
            hi = x;
            f_hi = fx;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        } else {
            lo = x;
            f_lo = fx;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        }
    }
    let x = 0.5 * (lo + hi);
    if gap(x)?.abs() < RESONANCE_TOL {
        Ok(x)
    } else {
        Err(Error::Convergence { iterations: 200, residuals: vec![gap(x)?.abs()] })
    }
}

#[derive(Clone, Debug)]
pub struct StarkSolution {
    pub params: SystemParams,
    pub integrator: Integrator,
    pub omega_grid: Vec<f64>,
    pub omega_d_of_omega: Vec<f64>,
    /// g̃(Ω) = (E_1 − E_2)/2.
    pub gtilde_of_omega: Vec<f64>,
    /// (E_1 + E_2)/2, an overall shift of the pair.
    pub e_offset: Vec<f64>,
    pub phi_pair: Vec<(CVector, CVector)>,
    omega_d_interp: Pchip,
    gtilde_interp: Pchip,
}

impl StarkSolution {
    pub fn omega_max(&self) -> f64 {
        *self.omega_grid.last().unwrap()
    }

    pub fn omega_d0(&self) -> f64 {
        self.omega_d_of_omega[0]
    }

    /// Interpolated ω_d(Ω).
    pub fn omega_d_at(&self, omega_amp: f64) -> Result<f64> {
        self.omega_d_interp.eval(omega_amp)
    }

    /// Δ_f0g1(Ω) = ω_d(Ω) − ω_d(0).
    pub fn stark_shift_at(&self, omega_amp: f64) -> Result<f64> {
        Ok(self.omega_d_at(omega_amp)? - self.omega_d0())
    }

    /// Interpolated g̃(Ω).
    pub fn gtilde_at(&self, omega_amp: f64) -> Result<f64> {
        self.gtilde_interp.eval(omega_amp)
    }

    /// Index of the last grid point up to which g̃(Ω) is non-decreasing.
    pub fn monotone_end(&self) -> usize {
        let g = &self.gtilde_of_omega;
        (1..g.len()).find(|&i| g[i] < g[i - 1]).map_or(g.len() - 1, |i| i - 1)
    }

    /// Largest g̃ reachable on the monotone branch.
    pub fn gtilde_peak(&self) -> f64 {
        self.gtilde_of_omega[self.monotone_end()]
    }

    /// Ω such that g̃(Ω) = `gtilde`, restricted to the monotone branch.
    pub fn omega_for_gtilde(&self, gtilde: f64) -> Result<f64> {
        let end = self.monotone_end();
        let (g0, g_peak) = (self.gtilde_of_omega[0], self.gtilde_of_omega[end]);
        if !(gtilde >= g0 && gtilde <= g_peak) {
            if end + 1 < self.omega_grid.len() && gtilde > g_peak {
                log::warn!("g̃ = {gtilde:.4e} lies beyond the peak of g̃(Ω); post-peak branch refused");
            }
            return Err(Error::Range { what: "effective coupling outside the monotone range of g̃(Ω)".into(), value: gtilde, lo: g0, hi: g_peak });
        }
        let (mut lo, mut hi) = (self.omega_grid[0], self.omega_grid[end]);
        if gtilde == g_peak {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.gtilde_at(mid)? < gtilde {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// For every grid point, rebuild H at the solved ω_d and project onto the
    /// transported basis F = (Φ_1 + Φ_2)/√2, G = (Φ_1 − Φ_2)/√2; returns
    /// |⟨F|H|F⟩ − ⟨G|H|G⟩|.
    pub fn resonance_residuals(&self) -> Result<Vec<f64>> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        self.omega_grid
            .iter()
            .zip(&self.omega_d_of_omega)
            .zip(&self.phi_pair)
            .map(|((&om, &wd), (p1, p2))| {
                let h = build_hamiltonian(&self.params, &DriveParams::new(&self.params, om, 0.0, wd)?)?.entries;
                let f = (p1 + p2) * C64::new(s, 0.0);
                let g = (p1 - p2) * C64::new(s, 0.0);
                Ok((f.dotc(&(&h * &f)) - g.dotc(&(&h * &g))).norm())
            })
            .collect()
    }

    /// |⟨Φ_1|dΦ_2/dΩ⟩| by central differences at interior grid points.
    pub fn transport_residuals(&self) -> Vec<f64> {
        let n = self.omega_grid.len();
        (1..n.saturating_sub(1))
            .map(|i| {
                let h = self.omega_grid[i + 1] - self.omega_grid[i - 1];
                let d = (&self.phi_pair[i + 1].1 - &self.phi_pair[i - 1].1) / C64::new(h, 0.0);
                self.phi_pair[i].0.dotc(&d).norm()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["omega_2pi_ghz", "omega_d_2pi_ghz", "gtilde_2pi_mhz", "e_offset_2pi_mhz"])?;
        for i in 0..self.omega_grid.len() {
            wtr.write_record([
                format!("{:.12e}", units::to_ghz(self.omega_grid[i])),
                format!("{:.15e}", units::to_ghz(self.omega_d_of_omega[i])),
                format!("{:.12e}", units::to_mhz(self.gtilde_of_omega[i])),
                format!("{:.12e}", units::to_mhz(self.e_offset[i])),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Interpolated g̃(Ω) from a solved sweep.
pub fn effective_coupling_exact(solution: &StarkSolution, omega_amp: f64) -> Result<f64> {
    solution.gtilde_at(omega_amp)
}

pub fn stark_parallel_transport(params: &SystemParams, omega_max: f64, n_steps: usize) -> Result<StarkSolution> {
    stark_parallel_transport_with(params, omega_max, &StarkConfig::new(n_steps))
}

/// Orthonormal basis {F, G} of the resonant pair subspace, carried along Ω
/// by parallel transport from {|f0⟩_D, |g1⟩_D}.
#[derive(Clone, Debug)]
struct Frame {
    f: CVector,
    g: CVector,
    /// ⟨F|H|F⟩, ⟨G|H|G⟩ and ⟨F|H|G⟩.
    hff: f64,
    hgg: f64,
    hfg: C64,
}

impl Frame {
    fn phi_pair(&self) -> (CVector, CVector) {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        ((&self.f + &self.g) * s, (&self.f - &self.g) * s)
    }
}

struct Transport<'a> {
    params: &'a SystemParams,
    dh_domega: CMatrix,
    dh_domega_d: CMatrix,
}

impl Transport<'_> {
    /// Re-diagonalizes at (Ω, ω_d), picks the two eigenvectors spanning the
    /// continuation of `prev`, and rotates them onto the basis closest to
    /// `prev` (symmetric orthogonalization of the projected vectors).
    fn frame(&self, omega: f64, omega_d: f64, prev: &Frame) -> Result<Frame> {
        let h = build_hamiltonian(self.params, &DriveParams::new(self.params, omega, 0.0, omega_d)?)?;
        let eig = diagonalize(&h)?;
        let mut weights: Vec<(usize, f64)> = (0..eig.dim())
            .map(|n| {
                let v = eig.eigenvectors.column(n);
                (n, v.dotc(&prev.f).norm_sqr() + v.dotc(&prev.g).norm_sqr())
            })
            .collect();
        weights.sort_by(|a, b| b.1.total_cmp(&a.1));
        let (n1, n2) = (weights[0].0, weights[1].0);
        let u = CMatrix::from_columns(&[eig.vector(n1), eig.vector(n2)]);
        let p = CMatrix::from_columns(&[prev.f.clone(), prev.g.clone()]);
        let overlap = u.adjoint() * &p;
        let svd = overlap.clone().svd(true, true);
        let smin = svd.singular_values.min();
        if smin * smin < TRACKING_THRESHOLD {
            return Err(Error::Tracking { omega, overlap: smin * smin });
        }
        let rot = svd.u.unwrap() * svd.v_t.unwrap();
        let aligned = &u * rot;
        let (f, g) = (aligned.column(0).into_owned(), aligned.column(1).into_owned());
        let hm = &h.entries;
        Ok(Frame { hff: f.dotc(&(hm * &f)).re, hgg: g.dotc(&(hm * &g)).re, hfg: f.dotc(&(hm * &g)), f, g })
    }

    fn detuning_slope(&self, fr: &Frame) -> f64 {
        fr.f.dotc(&(&self.dh_domega_d * &fr.f)).re - fr.g.dotc(&(&self.dh_domega_d * &fr.g)).re
    }

    /// dω_d/dΩ from ⟨Φ_1|∂H/∂Ω|Φ_2⟩ + ω_d′ ⟨Φ_1|∂H/∂ω_d|Φ_2⟩ = 0 with
    /// Φ_{1,2} = (F ± G)/√2.
    fn slope(&self, fr: &Frame, omega: f64) -> Result<f64> {
        let num = fr.f.dotc(&(&self.dh_domega * &fr.f)).re - fr.g.dotc(&(&self.dh_domega * &fr.g)).re;
        let den = self.detuning_slope(fr);
        if den.abs() < 1e-12 {
            return Err(Error::Singularity(format!("⟨Φ1|∂H/∂ω_d|Φ2⟩ vanishes at Ω = {omega}")));
        }
        Ok(-num / den)
    }

    /// Newton iteration on ⟨F|H|F⟩ = ⟨G|H|G⟩ in ω_d, transporting from `prev`.
    fn correct(&self, omega: f64, mut omega_d: f64, prev: &Frame) -> Result<(f64, Frame)> {
        let mut history = Vec::new();
        for _ in 0..30 {
            let fr = self.frame(omega, omega_d, prev)?;
            let defect = fr.hff - fr.hgg;
            history.push(defect.abs());
            if defect.abs() < 1e-12 {
                return Ok((omega_d, fr));
            }
            let den = self.detuning_slope(&fr);
            if den.abs() < 1e-12 {
                return Err(Error::Singularity(format!("⟨Φ1|∂H/∂ω_d|Φ2⟩ vanishes at Ω = {omega}")));
            }
            omega_d -= defect / den;
        }
        Err(Error::Convergence { iterations: history.len(), residuals: history })
    }
}

/// Runs the sweep Ω = 0 … `omega_max` in `cfg.n_steps` equal steps.
pub fn stark_parallel_transport_with(params: &SystemParams, omega_max: f64, cfg: &StarkConfig) -> Result<StarkSolution> {
    params.validate()?;
    if !(omega_max >= 0.0) || !omega_max.is_finite() {
        return Err(Error::Domain(format!("omega_max must be finite and >= 0, got {omega_max}")));
    }
    let min_steps = (100.0 * units::to_ghz(omega_max)).ceil() as usize;
    if omega_max > 0.0 && cfg.n_steps < min_steps.max(1) {
        return Err(Error::Domain(format!("{} steps is below the floor of 100 per GHz ({min_steps})", cfg.n_steps)));
    }
    let omega_d0 = initial_drive_frequency(params)?;
    let spec0 = undriven_dressed(params, omega_d0, &[BasisLabel::F0, BasisLabel::G1])?;
    let (f0_d, g1_d) = (spec0.dressed_vector(BasisLabel::F0)?, spec0.dressed_vector(BasisLabel::G1)?);
    let (ef, eg) = (spec0.dressed_energy(BasisLabel::F0)?, spec0.dressed_energy(BasisLabel::G1)?);
    let mut frame = Frame { f: f0_d, g: g1_d, hff: ef, hgg: eg, hfg: C64::new(0.0, 0.0) };

    let tr = Transport { params, dh_domega: drive_operator(params, 0.0), dh_domega_d: drive_frequency_derivative(params) };

    let n = if omega_max == 0.0 { 0 } else { cfg.n_steps };
    let h = if n == 0 { 0.0 } else { omega_max / n as f64 };
    let mut omega_grid = vec![0.0];
    let mut omega_d_of_omega = vec![omega_d0];
    let mut gtilde = vec![frame.hfg.re];
    let mut offset = vec![0.5 * (ef + eg)];
    let mut phi_pair = vec![frame.phi_pair()];

    let mut wd = omega_d0;
    for i in 0..n {
        let om = i as f64 * h;
        let om_next = if i + 1 == n { omega_max } else { (i + 1) as f64 * h };
        let h = om_next - om;
        let k1 = tr.slope(&frame, om)?;
        let step = match cfg.integrator {
            Integrator::Euler => k1,
            Integrator::Midpoint => {
                let (om_m, wd_m) = (om + 0.5 * h, wd + 0.5 * h * k1);
                tr.slope(&tr.frame(om_m, wd_m, &frame)?, om_m)?
            }
        };
        let predicted = wd + h * step;
        let (wd_next, next) = if cfg.correct {
            tr.correct(om_next, predicted, &frame)?
        } else {
            (predicted, tr.frame(om_next, predicted, &frame)?)
        };
        wd = wd_next;
        frame = next;
        omega_grid.push(om_next);
        omega_d_of_omega.push(wd);
        // in the resonant frame the pair energies are (hff + hgg)/2 ± |hfg|;
        // with φ = 0 everything is real and hfg carries the sign of E_1 − E_2
        let mean = 0.5 * (frame.hff + frame.hgg);
        let half_gap = (0.25 * (frame.hff - frame.hgg).powi(2) + frame.hfg.norm_sqr()).sqrt();
        // without g there is no Raman path; the residual gap is round-off
        gtilde.push(if params.g == 0.0 { 0.0 } else { half_gap.copysign(frame.hfg.re) });
        offset.push(mean);
        phi_pair.push(frame.phi_pair());
    }

    Ok(StarkSolution {
        params: *params,
        integrator: cfg.integrator,
        omega_d_interp: Pchip::new(omega_grid.clone(), omega_d_of_omega.clone())?,
        gtilde_interp: Pchip::new(omega_grid.clone(), gtilde.clone())?,
        omega_grid,
        omega_d_of_omega,
        gtilde_of_omega: gtilde,
        e_offset: offset,
        phi_pair,
    })
}
