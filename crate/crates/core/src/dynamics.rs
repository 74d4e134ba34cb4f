//! Time-domain swaps between |f0⟩_D and |g1⟩_D.
//!
//! The Hamiltonian is assembled once in the frame rotating at ω_d(0). A drive
//! whose frequency follows ω_d(t) is represented in that frame by the phase
//! φ(t) = φ₀ + ∫₀ᵗ (ω_d(t′) − ω_d(0)) dt′, which is integrated alongside the
//! state as one extra component.

use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    build_hjc, BasisLabel, check_guard_levels, guard_population, transmon_lowering, CVector, DriveParams,
    SystemParams, C64,
};
use crate::ode::{integrate, OdeOptions, OdeStats};
use crate::spectral::{diagonalize, dressed_pair, polariton_pair};
use crate::stark::StarkSolution;

/// sin²-ramped envelope of the effective coupling:
/// g̃(t) = g̃_max sin²(πt/2Δt) on the rise, g̃_max on the plateau, mirrored on the fall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseShape {
    pub total_time: f64,
    pub rise_time: f64,
    pub gtilde_max: f64,
    pub phi: f64,
}

impl PulseShape {
    pub fn new(gtilde_max: f64, total_time: f64, rise_time: f64, phi: f64) -> Result<Self> {
        if !(rise_time > 0.0) || !(2.0 * rise_time <= total_time) || !total_time.is_finite() {
            return Err(Error::Domain(format!("pulse needs 0 < 2Δt <= T (T = {total_time}, Δt = {rise_time})")));
        }
        if !(gtilde_max >= 0.0) || !gtilde_max.is_finite() {
            return Err(Error::Domain(format!("g̃_max must be finite and >= 0, got {gtilde_max}")));
        }
        Ok(Self { total_time, rise_time, gtilde_max, phi })
    }

    pub fn gtilde(&self, t: f64) -> f64 {
        let (tt, dt) = (self.total_time, self.rise_time);
        if t <= 0.0 || t >= tt {
            0.0
        } else if t < dt {
            self.gtilde_max * (PI * t / (2.0 * dt)).sin().powi(2)
        } else if t > tt - dt {
            self.gtilde_max * (PI * (tt - t) / (2.0 * dt)).sin().powi(2)
        } else {
            self.gtilde_max
        }
    }

    /// ∫₀ᵀ g̃(t) dt = g̃_max (T − Δt).
    pub fn area(&self) -> f64 {
        self.gtilde_max * (self.total_time - self.rise_time)
    }

    /// Ends of the ramps, where the envelope's second derivative jumps.
    pub fn breakpoints(&self) -> [f64; 2] {
        [self.rise_time, self.total_time - self.rise_time]
    }
}

pub fn make_pulse(gtilde_max: f64, total_time: f64, rise_time: f64) -> Result<PulseShape> {
    PulseShape::new(gtilde_max, total_time, rise_time, 0.0)
}

/// π-swap pulse: g̃_max = (π/2)/(T − Δt), checked against the reachable
/// range of g̃(Ω).
pub fn pulse_pi(stark: &StarkSolution, total_time: f64, rise_time: f64) -> Result<PulseShape> {
    let shape = PulseShape::new(0.0, total_time, rise_time, 0.0)?;
    let gmax = 0.5 * PI / (total_time - rise_time);
    let peak = stark.gtilde_peak();
    if gmax > peak {
        return Err(Error::Range { what: "π-pulse plateau coupling beyond the solved g̃(Ω) range".into(), value: gmax, lo: 0.0, hi: peak });
    }
    Ok(PulseShape { gtilde_max: gmax, ..shape })
}

/// A drive seen from the frame rotating at a fixed `omega_d0`.
pub trait DriveProtocol {
    fn omega_d0(&self) -> f64;
    fn phi0(&self) -> f64;
    fn amplitude(&self, t: f64) -> Result<f64>;
    /// ω_d(t) − ω_d0.
    fn chirp(&self, t: f64) -> Result<f64>;
    /// Times at which the protocol is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Constant amplitude switched on at t = 0 (the square-pulse limit).
#[derive(Clone, Copy, Debug)]
pub struct ConstantDrive(pub DriveParams);

impl DriveProtocol for ConstantDrive {
    fn omega_d0(&self) -> f64 {
        self.0.omega_d()
    }
    fn phi0(&self) -> f64 {
        self.0.phi()
    }
    fn amplitude(&self, _t: f64) -> Result<f64> {
        Ok(self.0.omega_amp())
    }
    fn chirp(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Shaped pulse mapped through Ω(g̃) with the Stark chirp ω_d(Ω(t)).
#[derive(Clone, Debug)]
pub struct ChirpedDrive<'a> {
    pub pulse: PulseShape,
    stark: &'a StarkSolution,
    /// When false the drive stays at ω_d(0) and the Stark shift is left uncompensated.
    pub chirp_enabled: bool,
}

impl ChirpedDrive<'_> {
    pub fn without_chirp(mut self) -> Self {
        self.chirp_enabled = false;
        self
    }

    pub fn omega_d_at(&self, t: f64) -> Result<f64> {
        Ok(self.omega_d0() + self.chirp(t)?)
    }

    /// φ(t) by quadrature of the chirp (used for reporting; `evolve`
    /// integrates the phase together with the state).
    pub fn phase_at(&self, t: f64) -> Result<f64> {
        if t <= 0.0 || !self.chirp_enabled {
            return Ok(self.pulse.phi);
        }
        // composite Simpson on the smooth pieces
        let mut knots = vec![0.0];
        for b in self.pulse.breakpoints() {
            if b > 0.0 && b < t {
                knots.push(b);
            }
        }
        knots.push(t.min(self.pulse.total_time));
        let mut acc = 0.0;
        for w in knots.windows(2) {
            let n = 200;
            let h = (w[1] - w[0]) / n as f64;
            let mut s = self.chirp(w[0])? + self.chirp(w[1])?;
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * self.chirp(w[0] + k as f64 * h)?;
            }
            acc += s * h / 3.0;
        }
        Ok(self.pulse.phi + acc)
    }
}

impl DriveProtocol for ChirpedDrive<'_> {
    fn omega_d0(&self) -> f64 {
        self.stark.omega_d0()
    }
    fn phi0(&self) -> f64 {
        self.pulse.phi
    }
    fn amplitude(&self, t: f64) -> Result<f64> {
        let g = self.pulse.gtilde(t);
        if g == 0.0 {
            return Ok(0.0);
        }
        self.stark.omega_for_gtilde(g)
    }
    fn chirp(&self, t: f64) -> Result<f64> {
        if !self.chirp_enabled {
            return Ok(0.0);
        }
        let om = self.amplitude(t)?;
        if om == 0.0 {
            return Ok(0.0);
        }
        self.stark.stark_shift_at(om)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let [a, b] = self.pulse.breakpoints();
        vec![0.0, a, b, self.pulse.total_time]
    }
}

pub fn chirped_drive<'a>(pulse: &PulseShape, stark: &'a StarkSolution) -> Result<ChirpedDrive<'a>> {
    let peak = stark.gtilde_peak();
    if pulse.gtilde_max > peak {
        return Err(Error::Range { what: "pulse coupling beyond the solved g̃(Ω) range".into(), value: pulse.gtilde_max, lo: 0.0, hi: peak });
    }
    Ok(ChirpedDrive { pulse: *pulse, stark, chirp_enabled: true })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PopulationBasis {
    /// Eigenstates of H_JC (Ω = 0).
    Dressed,
    Bare,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    pub basis: PopulationBasis,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), basis: PopulationBasis::Dressed }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DynamicsResult {
    pub times: Vec<f64>,
    pub p_f0: Vec<f64>,
    pub p_g1: Vec<f64>,
    pub leakage: Vec<f64>,
    /// p_g1 at the last sample (end of pulse for shaped drives).
    pub fidelity: f64,
    pub max_norm_drift: f64,
    pub max_guard_population: f64,
    #[serde(skip)]
    pub states: Vec<CVector>,
    #[serde(skip)]
    pub stats: OdeStats,
}

impl DynamicsResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t_ns", "p_f0", "p_g1", "leakage"])?;
        for i in 0..self.times.len() {
            wtr.write_record([
                format!("{:.9}", self.times[i]),
                format!("{:.12e}", self.p_f0[i]),
                format!("{:.12e}", self.p_g1[i]),
                format!("{:.12e}", self.leakage[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Integrates the Schrödinger equation for `drive` starting from `psi0` at
/// `t_grid[0]`.
pub fn evolve(params: &SystemParams, drive: &dyn DriveProtocol, psi0: &CVector, t_grid: &[f64]) -> Result<DynamicsResult> {
    evolve_with(params, drive, psi0, t_grid, &EvolveOptions::default())
}

pub fn evolve_with(
    params: &SystemParams,
    drive: &dyn DriveProtocol,
    psi0: &CVector,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<DynamicsResult> {
    params.validate()?;
    let n = params.dim();
    if psi0.len() != n {
        return Err(Error::Size(format!("initial state has length {}, expected {n}", psi0.len())));
    }
    if (psi0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("initial state is not normalized (norm {})", psi0.norm())));
    }
    if t_grid.is_empty() {
        return Err(Error::Size("empty time grid".into()));
    }
    let omega_d0 = drive.omega_d0();
    // Interaction picture of the undriven Hamiltonian: ψ(t) = U₀ e^{−iE(t−t₀)} c(t),
    // so the integrator only resolves the slow drive coupling.
    let spec0 = diagonalize(&build_hjc(params, &DriveParams::undriven(params, omega_d0))?)?;
    let u0 = spec0.eigenvectors.clone();
    let energies = spec0.eigenvalues.clone();
    let b = u0.adjoint() * transmon_lowering(params) * &u0;
    let bd = b.adjoint();

    // Sample at the requested times plus the protocol's breakpoints.
    let t0 = t_grid[0];
    let mut outputs: Vec<f64> = t_grid.to_vec();
    outputs.extend(drive.breakpoints().into_iter().filter(|&b| b > t0 && b < *t_grid.last().unwrap()));
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();

    let mut y0 = CVector::zeros(n + 1);
    y0.rows_mut(0, n).copy_from(&(u0.adjoint() * psi0));
    y0[n] = C64::new(drive.phi0(), 0.0);

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut rot = CVector::zeros(n);
    let mut psi = CVector::zeros(n);
    let mut bpsi = CVector::zeros(n);
    let mut bdpsi = CVector::zeros(n);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let rhs = |t: f64, y: &CVector, dy: &mut CVector| {
        let (om, chirp) = match (drive.amplitude(t), drive.chirp(t)) {
            (Ok(a), Ok(c)) => (a, c),
            (Err(e), _) | (_, Err(e)) => {
                failure.borrow_mut().get_or_insert(e);
                (0.0, 0.0)
            }
        };
        dy[n] = C64::new(chirp, 0.0);
        if om == 0.0 {
            dy.rows_mut(0, n).fill(zero);
            return;
        }
        for k in 0..n {
            rot[k] = C64::from_polar(1.0, -energies[k] * (t - t0));
            psi[k] = rot[k] * y[k];
        }
        bpsi.gemv(one, &b, &psi, zero);
        bdpsi.gemv(one, &bd, &psi, zero);
        let c = C64::from_polar(0.5 * om, y[n].re);
        for k in 0..n {
            let h = c * bpsi[k] + c.conj() * bdpsi[k];
            dy[k] = C64::new(0.0, -1.0) * rot[k].conj() * h;
        }
    };
    let (states, stats) = integrate(rhs, t0, y0, &outputs, &opts.ode)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let (ref_f, ref_g) = match opts.basis {
        PopulationBasis::Dressed => dressed_pair(params, omega_d0)?,
        PopulationBasis::Bare => {
            let basis = params.basis();
            (basis.unit(BasisLabel::F0)?, basis.unit(BasisLabel::G1)?)
        }
    };
    let mut res = DynamicsResult {
        times: Vec::with_capacity(t_grid.len()),
        p_f0: Vec::with_capacity(t_grid.len()),
        p_g1: Vec::with_capacity(t_grid.len()),
        leakage: Vec::with_capacity(t_grid.len()),
        fidelity: 0.0,
        max_norm_drift: 0.0,
        max_guard_population: 0.0,
        states: Vec::with_capacity(t_grid.len()),
        stats,
    };
    let mut k = 0;
    for (t, y) in outputs.iter().zip(states) {
        let c = CVector::from_iterator(n, (0..n).map(|k| C64::from_polar(1.0, -energies[k] * (t - t0)) * y[k]));
        while k < t_grid.len() && t_grid[k] < *t {
            k += 1;
        }
        if k >= t_grid.len() || t_grid[k] != *t {
            continue;
        }
        let psi = &u0 * c;
        let pf = ref_f.dotc(&psi).norm_sqr();
        let pg = ref_g.dotc(&psi).norm_sqr();
        res.max_norm_drift = res.max_norm_drift.max((psi.norm() - 1.0).abs());
        res.max_guard_population = res.max_guard_population.max(guard_population(params, &psi));
        res.times.push(*t);
        res.p_f0.push(pf);
        res.p_g1.push(pg);
        res.leakage.push(1.0 - pf - pg);
        res.states.push(psi);
        // several requested samples may share one time
        while k + 1 < t_grid.len() && t_grid[k + 1] == *t {
            k += 1;
            let last = res.states.last().unwrap().clone();
            res.times.push(*t);
            res.p_f0.push(pf);
            res.p_g1.push(pg);
            res.leakage.push(1.0 - pf - pg);
            res.states.push(last);
        }
        k += 1;
    }
    if let Some(last) = res.states.last() {
        check_guard_levels(params, last, "evolve");
    }
    res.fidelity = *res.p_g1.last().unwrap();
    Ok(res)
}

/// Shaped π-swap from |f0⟩_D with Stark-chirp cancellation; returns the
/// trajectory sampled at `samples` equally spaced times over [0, T].
pub fn simulate_pi_pulse(params: &SystemParams, stark: &StarkSolution, total_time: f64, rise_time: f64, samples: usize) -> Result<DynamicsResult> {
    let pulse = pulse_pi(stark, total_time, rise_time)?;
    let drive = chirped_drive(&pulse, stark)?;
    let (f0, _) = dressed_pair(params, stark.omega_d0())?;
    let n = samples.max(2);
    let grid: Vec<f64> = (0..n).map(|i| total_time * i as f64 / (n - 1) as f64).collect();
    evolve(params, &drive, &f0, &grid)
}

/// Exact constant-drive swap probability from one diagonalization.
#[derive(Clone, Debug, Serialize)]
pub struct RabiExpansion {
    pub times: Vec<f64>,
    pub p_g1: Vec<f64>,
    /// F = 4|α₊α₋β₊β₋|.
    pub fidelity: f64,
    /// ε₊ − ε₋ (= 2g̃ at resonance).
    pub rate: f64,
    #[serde(skip)]
    terms: ExpansionTerms,
}

#[derive(Clone, Debug)]
struct ExpansionTerms {
    eps: Vec<f64>,
    alpha: Vec<C64>,
    beta: Vec<C64>,
}

impl ExpansionTerms {
    /// Σ_n |α_n|²|β_n|² + 2Σ_{n<m} |α_n α_m β_n β_m| cos[(ε_n − ε_m)t + θ_nm].
    fn eval(&self, t: f64) -> f64 {
        let n = self.eps.len();
        let mut p = 0.0;
        for i in 0..n {
            let (a, b) = (self.alpha[i], self.beta[i]);
            p += a.norm_sqr() * b.norm_sqr();
            for j in i + 1..n {
                let w = a.conj() * b * self.alpha[j] * self.beta[j].conj();
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                p += 2.0 * w.norm() * ((self.eps[i] - self.eps[j]) * t + w.arg()).cos();
            }
        }
        p
    }
}

impl RabiExpansion {
    pub fn p_g1_at(&self, t: f64) -> f64 {
        self.terms.eval(t)
    }

    /// First local maximum of P_g1D(t) after t = 0, located on a grid of
    /// `π/(8 rate)` and refined by golden-section search.
    pub fn first_maximum(&self) -> (f64, f64) {
        let h = PI / (8.0 * self.rate.abs().max(1e-12));
        let mut t = 0.0;
        let mut prev = self.p_g1_at(0.0);
        loop {
            let next = self.p_g1_at(t + h);
            if next < prev && t > 0.0 {
                break;
            }
            prev = next;
            t += h;
            if t > 1e3 * h {
                break;
            }
        }
        let (mut a, mut b) = ((t - h).max(0.0), t + h);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if self.p_g1_at(c) > self.p_g1_at(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let tm = 0.5 * (a + b);
        (tm, self.p_g1_at(tm))
    }
}

pub fn rabi_eigenexpansion(params: &SystemParams, drive: &DriveParams, t_grid: &[f64]) -> Result<RabiExpansion> {
    let pair = polariton_pair(params, drive)?;
    let ov = &pair.overlaps;
    let terms = ExpansionTerms { eps: pair.spectrum.eigenvalues.clone(), alpha: ov.alpha_n.clone(), beta: ov.beta_n.clone() };
    let (p, m) = (pair.plus, pair.minus);
    let fidelity = 4.0 * (ov.alpha_n[p] * ov.alpha_n[m] * ov.beta_n[p] * ov.beta_n[m]).norm();
    Ok(RabiExpansion {
        times: t_grid.to_vec(),
        p_g1: t_grid.iter().map(|&t| terms.eval(t)).collect(),
        fidelity,
        rate: pair.splitting(),
        terms,
    })
}

fn nonzero(x: f64, what: &str) -> Result<f64> {
    if x.abs() < 1e-12 {
        Err(Error::Singularity(format!("{what} vanishes")))
    } else {
        Ok(x)
    }
}

fn leakage_terms(params: &SystemParams, omega_amp: f64) -> Result<[f64; 3]> {
    let delta = nonzero(params.detuning(), "Δ")?;
    let d_plus = nonzero(delta + params.alpha, "Δ + α")?;
    let d_minus = nonzero(delta - params.alpha, "Δ − α")?;
    let x = 0.5 * omega_amp;
    let breakdown = (x / d_plus).powi(2);
    if breakdown > 0.1 {
        log::warn!("(Ω/2(Δ+α))² = {breakdown:.3}: second-order fidelity estimate is unreliable");
    }
    Ok([(x / d_plus).powi(2), (2f64.sqrt() * x / delta).powi(2), (3f64.sqrt() * x / d_minus).powi(2)])
}

/// Second-order swap fidelity
/// F = 1 − [(Ω/2/(Δ+α))² + (√2Ω/2/Δ)² + (√3Ω/2/(Δ−α))²].
pub fn analytic_fidelity(params: &SystemParams, omega_amp: f64) -> Result<f64> {
    let [a, b, c] = leakage_terms(params, omega_amp)?;
    Ok(1.0 - (a + b + c))
}

/// Second-order overlaps of the driven pair with the undriven states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairOverlaps {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
}

impl PairOverlaps {
    pub fn fidelity(&self) -> f64 {
        4.0 * (self.alpha_plus * self.alpha_minus * self.beta_plus * self.beta_minus).abs()
    }
}

/// α± = (1/√2)(1 − ½(√2Ω/2/Δ)² − ½(√3Ω/2/(Δ−α))²),
/// β± = ±(1/√2)(1 − ½(Ω/2/(Δ+α))²).
pub fn pair_overlaps(params: &SystemParams, omega_amp: f64) -> Result<PairOverlaps> {
    let [a, b, c] = leakage_terms(params, omega_amp)?;
    let alpha = FRAC_1_SQRT_2 * (1.0 - 0.5 * b - 0.5 * c);
    let beta = FRAC_1_SQRT_2 * (1.0 - 0.5 * a);
    Ok(PairOverlaps { alpha_plus: alpha, alpha_minus: alpha, beta_plus: beta, beta_minus: -beta })
}

/// One point of a fidelity-versus-duration scan.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FidelityPoint {
    pub total_time: f64,
    pub rise_time: f64,
    pub one_minus_f: f64,
}

pub fn pi_pulse_infidelity(params: &SystemParams, stark: &StarkSolution, total_time: f64, rise_time: f64) -> Result<FidelityPoint> {
    let r = simulate_pi_pulse(params, stark, total_time, rise_time, 2)?;
    Ok(FidelityPoint { total_time, rise_time, one_minus_f: 1.0 - r.fidelity })
}

pub fn write_fidelity_csv<W: Write>(points: &[FidelityPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["T_ns", "rise_ns", "one_minus_F"])?;
    for p in points {
        wtr.write_record([format!("{}", p.total_time), format!("{}", p.rise_time), format!("{:.12e}", p.one_minus_f)])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Hamiltonian-free helper for tests and reports: Ω at which the
/// second-order breakdown parameter (Ω/2(Δ+α))² reaches `level`.
pub fn breakdown_amplitude(params: &SystemParams, level: f64) -> f64 {
    2.0 * (params.detuning() + params.alpha).abs() * level.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stark::stark_parallel_transport;
    use crate::model::{excitation_number, CMatrix};
    use crate::units;
    use std::sync::OnceLock;

    fn swap_params() -> SystemParams {
        SystemParams::swap_simulation()
    }

    fn swap_stark() -> &'static StarkSolution {
        static S: OnceLock<StarkSolution> = OnceLock::new();
        S.get_or_init(|| stark_parallel_transport(&swap_params(), units::ghz(0.5), 500).unwrap())
    }

    #[test]
    fn pulse_area_and_closed_forms() {
        let s = swap_stark();
        let p = pulse_pi(s, 50.0, 0.2).unwrap();
        assert!((units::to_mhz(p.gtilde_max) - 0.25 / 49.8 * 1e3).abs() < 1e-9);
        assert!((p.area() - PI / 2.0).abs() < 1e-12);
        let sq = pulse_pi(s, 40.0, 20.0).unwrap();
        assert!((sq.gtilde_max - PI / 40.0).abs() < 1e-15);
        assert!(matches!(PulseShape::new(1.0, 1.0, 0.6, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn envelope_quadrature_matches_area() {
        let p = PulseShape::new(0.3, 20.0, 3.0, 0.0).unwrap();
        let n = 200_000;
        let h = p.total_time / n as f64;
        let q: f64 = (0..n).map(|i| p.gtilde((i as f64 + 0.5) * h) * h).sum();
        assert!((q - p.area()).abs() < 1e-8 * p.area());
    }

    #[test]
    fn pulse_beyond_range_is_rejected() {
        let s = swap_stark();
        assert!(matches!(pulse_pi(s, 2.0, 0.2), Err(Error::Range { .. })));
    }

    #[test]
    fn zero_pulse_keeps_frequency_and_phase() {
        let s = swap_stark();
        let p = PulseShape::new(0.0, 10.0, 1.0, 0.7).unwrap();
        let d = chirped_drive(&p, s).unwrap();
        for &t in &[0.0, 0.5, 5.0, 9.9] {
            assert_eq!(d.omega_d_at(t).unwrap(), s.omega_d0());
            assert_eq!(d.phase_at(t).unwrap(), 0.7);
        }
    }

    #[test]
    fn plateau_chirp_equals_stark_shift() {
        let s = swap_stark();
        let p = pulse_pi(s, 50.0, 5.0).unwrap();
        let d = chirped_drive(&p, s).unwrap();
        let om = s.omega_for_gtilde(p.gtilde_max).unwrap();
        let max = (0..=1000).map(|i| (d.omega_d_at(0.05 * i as f64).unwrap() - s.omega_d0()).abs()).fold(0.0, f64::max);
        assert!((max - s.stark_shift_at(om).unwrap().abs()).abs() < 1e-12);
    }

    #[test]
    fn undriven_dressed_state_is_stationary() {
        let p = swap_params();
        let s = swap_stark();
        let (f0, _) = dressed_pair(&p, s.omega_d0()).unwrap();
        let drive = ConstantDrive(DriveParams::undriven(&p, s.omega_d0()));
        let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let r = evolve(&p, &drive, &f0, &grid).unwrap();
        for x in &r.p_f0 {
            assert!((x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_drive_matches_eigenexpansion() {
        let p = swap_params();
        let s = swap_stark();
        let om = units::ghz(0.2);
        let d = DriveParams::new(&p, om, 0.4, s.omega_d_at(om).unwrap()).unwrap();
        let (f0, _) = dressed_pair(&p, d.omega_d()).unwrap();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 1.5).collect();
        let r = evolve(&p, &ConstantDrive(d), &f0, &grid).unwrap();
        let ex = rabi_eigenexpansion(&p, &d, &grid).unwrap();
        for (a, b) in r.p_g1.iter().zip(&ex.p_g1) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(r.max_norm_drift < 1e-9);
    }

    #[test]
    fn eigenexpansion_starts_at_zero() {
        let p = swap_params();
        let d = DriveParams::new(&p, units::ghz(0.1), 0.0, swap_stark().omega_d0()).unwrap();
        let ex = rabi_eigenexpansion(&p, &d, &[0.0]).unwrap();
        assert!(ex.p_g1[0].abs() < 1e-12);
    }

    #[test]
    fn weak_drive_swap_is_complete() {
        let p = swap_params();
        let s = swap_stark();
        let om = units::ghz(0.01);
        let d = DriveParams::new(&p, om, 0.0, s.omega_d_at(om).unwrap()).unwrap();
        let ex = rabi_eigenexpansion(&p, &d, &[]).unwrap();
        assert!(1.0 - ex.fidelity < 1e-3);
        let (t, pmax) = ex.first_maximum();
        assert!((pmax - ex.fidelity).abs() < 1e-3);
        assert!((t * ex.rate - PI).abs() < 0.05 * PI);
    }

    #[test]
    fn analytic_fidelity_values() {
        let p = SystemParams::device();
        assert_eq!(analytic_fidelity(&p, 0.0).unwrap(), 1.0);
        let f = analytic_fidelity(&p, units::ghz(0.2)).unwrap();
        assert!((f - 0.935).abs() < 1.5e-3, "{f}");
        let ov = pair_overlaps(&p, 0.0).unwrap();
        assert_eq!(ov.alpha_plus, FRAC_1_SQRT_2);
        assert_eq!(ov.beta_minus, -FRAC_1_SQRT_2);
        let ov = pair_overlaps(&p, units::ghz(0.2)).unwrap();
        assert!((ov.alpha_plus / FRAC_1_SQRT_2 - (1.0 - 0.0187)).abs() < 1e-3);
    }

    #[test]
    fn overlap_product_reproduces_second_order_fidelity() {
        let p = SystemParams::device();
        let om = units::ghz(0.05);
        let f_ov = pair_overlaps(&p, om).unwrap().fidelity();
        let f_an = analytic_fidelity(&p, om).unwrap();
        let x = (om / p.detuning()).powi(4);
        assert!((f_ov - f_an).abs() < 5.0 * x, "{f_ov} {f_an}");
    }

    #[test]
    fn singular_denominators() {
        let mut p = SystemParams::device();
        p.omega_r = p.omega_ge + p.alpha; // Δ + α = 0
        assert!(matches!(analytic_fidelity(&p, 0.1), Err(Error::Singularity(_))));
    }

    #[test]
    fn phase_covariance_of_populations_and_amplitude() {
        let p = swap_params();
        let s = swap_stark();
        let pulse = pulse_pi(s, 30.0, 5.0).unwrap();
        let (f0, g1) = dressed_pair(&p, s.omega_d0()).unwrap();
        let grid = [0.0, 15.0, 30.0];
        let base = evolve(&p, &chirped_drive(&pulse, s).unwrap(), &f0, &grid).unwrap();
        let phi0 = 0.9;
        let shifted = PulseShape { phi: phi0, ..pulse };
        let other = evolve(&p, &chirped_drive(&shifted, s).unwrap(), &f0, &grid).unwrap();
        for i in 0..grid.len() {
            assert!((base.p_g1[i] - other.p_g1[i]).abs() < 1e-9);
            assert!((base.p_f0[i] - other.p_f0[i]).abs() < 1e-9);
        }
        // H(φ) = V H(0) V† with V = e^{−iφN}; from |f0⟩_D (N = 2) the |g1⟩_D
        // amplitude (N = 1) picks up e^{+iφ} relative to the unshifted run
        let a0 = g1.dotc(base.states.last().unwrap());
        let a1 = g1.dotc(other.states.last().unwrap());
        let rel = (a1 / a0).arg();
        assert!((rel - phi0).abs() < 1e-7, "{rel}");
        let n = excitation_number(&p);
        assert!((n[(0, 0)].re).abs() < 1e-15);
    }

    #[test]
    fn chirp_compensation_matters() {
        let p = swap_params();
        let s = swap_stark();
        let pulse = pulse_pi(s, 50.0, 5.0).unwrap();
        let (f0, _) = dressed_pair(&p, s.omega_d0()).unwrap();
        let with = evolve(&p, &chirped_drive(&pulse, s).unwrap(), &f0, &[0.0, 50.0]).unwrap();
        let without = evolve(&p, &chirped_drive(&pulse, s).unwrap().without_chirp(), &f0, &[0.0, 50.0]).unwrap();
        assert!(1.0 - with.fidelity < 1e-3);
        assert!(1.0 - without.fidelity > 10.0 * (1.0 - with.fidelity));
    }

    #[test]
    fn population_closure_and_csv() {
        let p = swap_params();
        let s = swap_stark();
        let r = simulate_pi_pulse(&p, s, 20.0, 2.0, 11).unwrap();
        for i in 0..r.times.len() {
            assert!((r.p_f0[i] + r.p_g1[i] + r.leakage[i] - 1.0).abs() < 1e-10);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_ns,p_f0,p_g1,leakage\n"));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn rejects_unnormalized_state() {
        let p = swap_params();
        let psi = CVector::from_element(p.dim(), C64::new(1.0, 0.0));
        let d = ConstantDrive(DriveParams::undriven(&p, 1.0));
        assert!(matches!(evolve(&p, &d, &psi, &[0.0, 1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn hermitian_generator() {
        let p = swap_params();
        let h = build_hjc(&p, &DriveParams::undriven(&p, 50.0)).unwrap().entries;
        let b: CMatrix = transmon_lowering(&p);
        let m = &h + &b * C64::new(0.3, 0.1) + b.adjoint() * C64::new(0.3, -0.1);
        assert!((m.adjoint() - &m).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn fft_rate_matches_eigen_gap() {
        use rustfft::FftPlanner;
        let p = swap_params();
        let s = swap_stark();
        let om = units::ghz(0.1);
        let d = DriveParams::new(&p, om, 0.0, s.omega_d_at(om).unwrap()).unwrap();
        let (f0, _) = dressed_pair(&p, d.omega_d()).unwrap();
        let (n, dt) = (1024, 2.0);
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let r = evolve(&p, &ConstantDrive(d), &f0, &grid).unwrap();
        let mean = r.p_g1.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<C64> = r.p_g1.iter().map(|x| C64::new(x - mean, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (1..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        let bin = 1.0 / (n as f64 * dt);
        let expect = rabi_eigenexpansion(&p, &d, &[]).unwrap().rate / (2.0 * PI);
        assert!((k as f64 * bin - expect).abs() <= bin, "{} vs {expect}", k as f64 * bin);
    }

    #[test]
    fn short_rise_tracks_square_pulse_estimate() {
        let p = swap_params();
        let s = swap_stark();
        let r = simulate_pi_pulse(&p, s, 50.0, 0.2, 2).unwrap();
        let pulse = pulse_pi(s, 50.0, 0.2).unwrap();
        let om = s.omega_for_gtilde(pulse.gtilde_max).unwrap();
        let est = 1.0 - analytic_fidelity(&p, om).unwrap();
        let ratio = (1.0 - r.fidelity) / est;
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }
}
