//! Resolvent (self-energy) treatment of the ac Stark shift of the f0 ↔ g1
//! resonance.
//!
//! With `H = H_0 + H_I`, `H_0` diagonal in the bare basis and
//! `H_I = g a b† + (Ω/2) e^{iφ} b + h.c.`, the self-energy restricted to
//! `P = span{|f0⟩, |g1⟩}` is the weighted sum over transition paths
//!
//! ```text
//! Σ_kl(z) = ⟨k|H_I|l⟩ + Σ_m ⟨k|H_I|m⟩ (z − E_m)⁻¹ ⟨m|H_I|l⟩ + …
//! ```
//!
//! with every intermediate `m ∉ P`. Paths are accumulated breadth-first over
//! the bare-state graph, one amplitude vector per (depth, power of Ω), so
//! each term of the series is produced exactly once.

use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::model::{bare_energy, BasisLabel, DriveParams, SystemParams, C64};
use crate::units;

/// Intermediate energies closer than this to `z` (rad/ns) are a pole collision.
pub const POLE_TOL: f64 = 1e-6;

/// Longest path accepted by [`self_energy`].
pub const MAX_PATH_ORDER: usize = 24;

#[derive(Clone, Debug)]
pub struct ResolventConfig {
    /// Highest total power of Ω kept in Σ.
    pub order_omega: usize,
    /// Paths may be this much longer than `order_omega`, which keeps the
    /// g-only dressing to the matching order.
    pub extra_depth: usize,
    pub max_iterations: usize,
    pub damping: f64,
    pub tolerance: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self { order_omega: 6, extra_depth: 2, max_iterations: 200, damping: 0.5, tolerance: 1e-10 }
    }
}

impl ResolventConfig {
    pub fn with_order(order_omega: usize) -> Self {
        Self { order_omega, ..Self::default() }
    }

    pub fn max_depth(&self) -> usize {
        self.order_omega + self.extra_depth
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolventSolution {
    /// Converged pole position, measured from the bare |g1⟩ energy.
    pub z: f64,
    pub delta_f0g1: f64,
    /// Ω-independent renormalization of the f0 ↔ g1 resonance by g alone.
    pub delta_jc: f64,
    /// Longest path kept, i.e. the highest power of g that can appear.
    pub order_g: usize,
    pub order_omega: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl ResolventSolution {
    /// Drive frequency satisfying the resonance condition at this amplitude.
    pub fn drive_frequency(&self, params: &SystemParams) -> f64 {
        params.bare_resonance() + self.delta_jc + self.delta_f0g1
    }
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    to: usize,
    amp: C64,
    omega_power: usize,
}

/// Bare-state graph of H_I.
struct PathGraph {
    energies: Vec<f64>,
    /// `edges[m]` lists `(m', ⟨m'|H_I|m⟩)`.
    edges: Vec<Vec<Edge>>,
    excluded: [usize; 2],
    labels: Vec<BasisLabel>,
}

impl PathGraph {
    /// Energies are taken in the frame at `omega_d`, shifted by `offset`.
    fn new(params: &SystemParams, omega_amp: f64, phi: f64, omega_d: f64, offset: f64) -> Result<Self> {
        params.validate()?;
        let basis = params.basis();
        let n = basis.dim();
        let labels: Vec<BasisLabel> = basis.labels().collect();
        let energies = labels
            .iter()
            .map(|l| bare_energy(params, omega_d, l.transmon_level.0, l.photons) - offset)
            .collect();
        let mut edges = vec![Vec::new(); n];
        let nf = params.n_fock;
        let drive = C64::from_polar(omega_amp / 2.0, phi);
        for m in 0..n {
            let (k, l) = (m / nf, m % nf);
            // g a b†: |k,l⟩ → |k+1,l−1⟩
            if params.g != 0.0 && k + 1 < params.n_transmon && l >= 1 {
                let amp = params.g * ((k + 1) as f64).sqrt() * (l as f64).sqrt();
                edges[m].push(Edge { to: (k + 1) * nf + l - 1, amp: C64::new(amp, 0.0), omega_power: 0 });
            }
            // g a† b: |k,l⟩ → |k−1,l+1⟩
            if params.g != 0.0 && k >= 1 && l + 1 < nf {
                let amp = params.g * (k as f64).sqrt() * ((l + 1) as f64).sqrt();
                edges[m].push(Edge { to: (k - 1) * nf + l + 1, amp: C64::new(amp, 0.0), omega_power: 0 });
            }
            if omega_amp != 0.0 {
                // (Ω/2) e^{iφ} b: |k⟩ → √k |k−1⟩
                if k >= 1 {
                    edges[m].push(Edge { to: (k - 1) * nf + l, amp: drive * (k as f64).sqrt(), omega_power: 1 });
                }
                // (Ω/2) e^{−iφ} b†: |k⟩ → √(k+1) |k+1⟩
                if k + 1 < params.n_transmon {
                    edges[m].push(Edge { to: (k + 1) * nf + l, amp: drive.conj() * ((k + 1) as f64).sqrt(), omega_power: 1 });
                }
            }
        }
        let excluded = [basis.index(BasisLabel::F0)?, basis.index(BasisLabel::G1)?];
        Ok(Self { energies, edges, excluded, labels })
    }

    fn is_excluded(&self, m: usize) -> bool {
        self.excluded.contains(&m)
    }

    /// Contribution of each path length `1..=max_len` to Σ_{bra,ket}(z),
    /// keeping only paths whose Ω power is at most `max_omega`.
    fn sum_by_length(&self, bra: usize, ket: usize, z: C64, max_len: usize, max_omega: usize) -> Result<Vec<C64>> {
        let n = self.energies.len();
        let mut by_len = vec![C64::new(0.0, 0.0); max_len + 1];
        if max_len == 0 {
            return Ok(by_len);
        }
        let np = max_omega + 1;
        // amp[p * n + m]: paths ket → … → m with Ω power p, including (z − E)⁻¹ factors
        let mut amp = vec![C64::new(0.0, 0.0); np * n];
        let mut reached = vec![false; n];
        for e in &self.edges[ket] {
            if e.omega_power > max_omega {
                continue;
            }
            if e.to == bra {
                by_len[1] += e.amp;
            }
            if !self.is_excluded(e.to) {
                amp[e.omega_power * n + e.to] += e.amp;
                reached[e.to] = true;
            }
        }
        self.apply_propagator(&mut amp, &reached, z)?;

        for len in 2..=max_len {
            let mut next = vec![C64::new(0.0, 0.0); np * n];
            let mut next_reached = vec![false; n];
            for p in 0..np {
                for m in 0..n {
                    let a = amp[p * n + m];
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for e in &self.edges[m] {
                        let q = p + e.omega_power;
                        if q > max_omega {
                            continue;
                        }
                        let w = e.amp * a;
                        if e.to == bra {
                            by_len[len] += w;
                        }
                        if len < max_len && !self.is_excluded(e.to) {
                            next[q * n + e.to] += w;
                            next_reached[e.to] = true;
                        }
                    }
                }
            }
            if len < max_len {
                self.apply_propagator(&mut next, &next_reached, z)?;
            }
            amp = next;
        }
        Ok(by_len)
    }

    fn apply_propagator(&self, amp: &mut [C64], reached: &[bool], z: C64) -> Result<()> {
        let n = self.energies.len();
        for m in 0..n {
            if !reached[m] {
                continue;
            }
            let d = z - self.energies[m];
            if d.norm() < POLE_TOL {
                return Err(Error::PoleCollision { state: self.labels[m].to_string(), distance: d.norm() });
            }
            let inv = d.inv();
            for chunk in amp.chunks_mut(n) {
                chunk[m] *= inv;
            }
        }
        Ok(())
    }
}

fn pair_index(params: &SystemParams, label: BasisLabel) -> Result<usize> {
    let bare = label.as_bare();
    if bare != BasisLabel::F0 && bare != BasisLabel::G1 {
        return Err(Error::Contract(format!("self-energy is defined on {{|f0⟩, |g1⟩}}, got {label}")));
    }
    params.basis().index(bare)
}

/// Σ_{bra,ket}(z) summed over all paths of length 1..=`order`, with bare
/// energies in the frame at `drive.omega_d()`.
pub fn self_energy(params: &SystemParams, drive: &DriveParams, bra: BasisLabel, ket: BasisLabel, z: C64, order: usize) -> Result<C64> {
    Ok(self_energy_by_order(params, drive, bra, ket, z, order)?.iter().sum())
}

/// Per-order terms of [`self_energy`]; entry `n` is the sum over paths with
/// exactly `n` factors of H_I (entry 0 is always zero).
pub fn self_energy_by_order(
    params: &SystemParams,
    drive: &DriveParams,
    bra: BasisLabel,
    ket: BasisLabel,
    z: C64,
    order: usize,
) -> Result<Vec<C64>> {
    if order > MAX_PATH_ORDER {
        return Err(Error::Size(format!("path order {order} exceeds {MAX_PATH_ORDER}")));
    }
    let (b, k) = (pair_index(params, bra)?, pair_index(params, ket)?);
    let graph = PathGraph::new(params, drive.omega_amp(), drive.phi(), drive.omega_d(), 0.0)?;
    graph.sum_by_length(b, k, z, order, order)
}

struct Residuals {
    sigma_g1: f64,
    sigma_f0: f64,
}

fn evaluate(params: &SystemParams, omega_amp: f64, shift: f64, z: f64, cfg: &ResolventConfig) -> Result<Residuals> {
    let omega_d = params.bare_resonance() + shift;
    let offset = bare_energy(params, omega_d, 0, 1);
    let graph = PathGraph::new(params, omega_amp, 0.0, omega_d, offset)?;
    let basis = params.basis();
    let (f0, g1) = (basis.index(BasisLabel::F0)?, basis.index(BasisLabel::G1)?);
    let zc = C64::new(z, 0.0);
    let depth = cfg.max_depth();
    let sg: C64 = graph.sum_by_length(g1, g1, zc, depth, cfg.order_omega)?.iter().sum();
    let sf: C64 = graph.sum_by_length(f0, f0, zc, depth, cfg.order_omega)?.iter().sum();
    Ok(Residuals { sigma_g1: sg.re, sigma_f0: sf.re })
}

/// Damped fixed-point solve of
///
/// ```text
/// z − E_g1 − Σ_g1g1(z) = 0
/// z − E_g1 + D − Σ_f0f0(z) = 0
/// ```
///
/// for `(z, D)`, where `D` is the total shift of the resonance from
/// `2ω_ge + α − ω_r` and the bare energies follow the drive frame at
/// `ω_d = 2ω_ge + α − ω_r + D`. Energies are measured from `E_g1`, so the
/// iteration starts at `z = 0`.
fn solve_shift(params: &SystemParams, omega_amp: f64, shift0: f64, cfg: &ResolventConfig) -> Result<(f64, f64, usize, f64)> {
    let mut z = 0.0;
    let mut shift = shift0;
    let mut history = Vec::new();
    for it in 1..=cfg.max_iterations {
        let r = evaluate(params, omega_amp, shift, z, cfg)?;
        let res1 = z - r.sigma_g1;
        let res2 = z + shift - r.sigma_f0;
        let residual = res1.abs().max(res2.abs());
        history.push(residual);
        if residual < cfg.tolerance {
            return Ok((z, shift, it, residual));
        }
        if !residual.is_finite() {
            break;
        }
        let z_target = r.sigma_g1;
        let shift_target = r.sigma_f0 - z;
        z += cfg.damping * (z_target - z);
        shift += cfg.damping * (shift_target - shift);
    }
    Err(Error::Convergence { iterations: history.len(), residuals: history })
}

/// Δ_f0g1(Ω) from the resolvent, truncated at `order_omega` in Ω.
pub fn stark_shift_resolvent(params: &SystemParams, omega_amp: f64, order_omega: usize) -> Result<ResolventSolution> {
    stark_shift_resolvent_with(params, omega_amp, &ResolventConfig::with_order(order_omega))
}

pub fn stark_shift_resolvent_with(params: &SystemParams, omega_amp: f64, cfg: &ResolventConfig) -> Result<ResolventSolution> {
    if cfg.order_omega < 2 || cfg.order_omega % 2 != 0 {
        return Err(Error::Domain(format!("order_omega must be even and >= 2, got {}", cfg.order_omega)));
    }
    if !(omega_amp >= 0.0) {
        return Err(Error::Domain(format!("drive amplitude must be >= 0, got {omega_amp}")));
    }
    if cfg.max_depth() > MAX_PATH_ORDER {
        return Err(Error::Size(format!("path depth {} exceeds {MAX_PATH_ORDER}", cfg.max_depth())));
    }
    let (z0, delta_jc, it0, res0) = solve_shift(params, 0.0, 0.0, cfg)?;
    let (z, shift, iterations, residual) = if omega_amp == 0.0 {
        (z0, delta_jc, it0, res0)
    } else {
        solve_shift(params, omega_amp, delta_jc, cfg)?
    };
    Ok(ResolventSolution {
        z,
        delta_f0g1: if omega_amp == 0.0 { 0.0 } else { shift - delta_jc },
        delta_jc,
        order_g: cfg.max_depth(),
        order_omega: cfg.order_omega,
        iterations,
        residual,
    })
}

/// One Stark-shift measurement: linear drive power (mW) and Δ_f0g1 (rad/ns).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StarkMeasurement {
    pub power_mw: f64,
    pub delta_f0g1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationFit {
    /// Drive amplitude (rad/ns) per √mW: Ω = k √P.
    pub k: f64,
    pub k_std: Option<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Fits Ω = k √P so that the order-6 resolvent Stark shift reproduces the
/// measured Δ_f0g1 values.
pub fn calibrate_drive_power(params: &SystemParams, measurements: &[StarkMeasurement]) -> Result<CalibrationFit> {
    calibrate_drive_power_with(params, measurements, &ResolventConfig::with_order(6))
}

pub fn calibrate_drive_power_with(params: &SystemParams, measurements: &[StarkMeasurement], cfg: &ResolventConfig) -> Result<CalibrationFit> {
    let fit_err = |m: &str| Error::Fit { message: m.to_string(), residual_history: vec![] };
    if measurements.len() < 3 {
        return Err(fit_err("calibration needs at least 3 measurements"));
    }
    if measurements.iter().any(|m| !(m.power_mw > 0.0) || !m.delta_f0g1.is_finite()) {
        return Err(fit_err("powers must be positive and shifts finite"));
    }
    let p_min = measurements.iter().map(|m| m.power_mw).fold(f64::INFINITY, f64::min);
    let p_max = measurements.iter().map(|m| m.power_mw).fold(0.0, f64::max);
    if p_max - p_min <= 1e-12 * p_max {
        return Err(fit_err("degenerate calibration data: all powers equal"));
    }

    // first-order inversion Δ ≈ c₂ Ω² at the weakest point
    let omega_ref = units::ghz(0.01);
    let c2 = stark_shift_resolvent_with(params, omega_ref, cfg)?.delta_f0g1 / (omega_ref * omega_ref);
    let weakest = measurements.iter().min_by(|a, b| a.power_mw.total_cmp(&b.power_mw)).unwrap();
    let k0 = if c2 != 0.0 && weakest.delta_f0g1 != 0.0 {
        (weakest.delta_f0g1 / c2).abs().sqrt() / weakest.power_mw.sqrt()
    } else {
        return Err(fit_err("cannot initialize: vanishing Stark shift"));
    };
    let scale = measurements.iter().map(|m| m.delta_f0g1.abs()).fold(0.0, f64::max).max(1e-300);

    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let k = p[0] * k0;
        if !(k > 0.0) {
            return Err(fit_err("non-positive conversion factor"));
        }
        measurements
            .iter()
            .map(|m| Ok((stark_shift_resolvent_with(params, k * m.power_mw.sqrt(), cfg)?.delta_f0g1 - m.delta_f0g1) / scale))
            .collect()
    };
    let opts = LmOptions { max_iterations: 100, xtol: 1e-12, ftol: 1e-14, ..LmOptions::default() };
    let out = levenberg_marquardt(residuals, &[1.0], &opts)?;
    Ok(CalibrationFit {
        k: out.params[0] * k0,
        k_std: out.covariance.map(|c| c[(0, 0)].sqrt() * k0),
        residuals: out.residuals.iter().map(|r| r * scale).collect(),
        iterations: out.iterations,
    })
}

/// Reads `power_dbm,delta_f0g1_mhz` rows, converting dBm to mW and the
/// ordinary-frequency shift to rad/ns.
pub fn read_measurements_csv<R: Read>(reader: R) -> Result<Vec<StarkMeasurement>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["power_dbm", "delta_f0g1_mhz"] {
        return Err(Error::Config(format!("expected header power_dbm,delta_f0g1_mhz, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|e| Error::Config(format!("bad number {:?}: {e}", &row[i])))
        };
        out.push(StarkMeasurement { power_mw: units::dbm_to_mw(parse(0)?), delta_f0g1: units::mhz(parse(1)?) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian, build_hjc, DriveParams, Level};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn first_order_diagonal_vanishes() {
        let p = SystemParams::device();
        let d = DriveParams::new(&p, units::ghz(0.1), 0.3, units::ghz(8.7)).unwrap();
        let s = self_energy(&p, &d, BasisLabel::F0, BasisLabel::F0, c(0.3), 1).unwrap();
        assert_eq!(s, c(0.0));
    }

    #[test]
    fn second_order_jc_only() {
        let p = SystemParams::device();
        let d = DriveParams::undriven(&p, units::ghz(8.7));
        let z = c(-9.0);
        let s = self_energy(&p, &d, BasisLabel::G1, BasisLabel::G1, z, 2).unwrap();
        let e_e0 = bare_energy(&p, d.omega_d(), 1, 0);
        let expect = p.g * p.g / (z - e_e0);
        assert!((s - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn second_order_drive_only() {
        let p = SystemParams { g: 0.0, ..SystemParams::device() };
        let omega = units::ghz(0.2);
        let d = DriveParams::new(&p, omega, 0.9, units::ghz(8.7)).unwrap();
        let z = c(-9.5);
        let s = self_energy(&p, &d, BasisLabel::F0, BasisLabel::F0, z, 2).unwrap();
        let (e_h0, e_e0) = (bare_energy(&p, d.omega_d(), 3, 0), bare_energy(&p, d.omega_d(), 1, 0));
        let q = (omega / 2.0).powi(2);
        let expect = 3.0 * q / (z - e_h0) + 2.0 * q / (z - e_e0);
        assert!((s - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn pole_collision_detected() {
        let p = SystemParams::device();
        let d = DriveParams::undriven(&p, units::ghz(8.7));
        let e_e0 = bare_energy(&p, d.omega_d(), 1, 0);
        let r = self_energy(&p, &d, BasisLabel::G1, BasisLabel::G1, c(e_e0 + 1e-9), 2);
        assert!(matches!(r, Err(Error::PoleCollision { .. })));
    }

    #[test]
    fn only_pair_states_allowed() {
        let p = SystemParams::device();
        let d = DriveParams::undriven(&p, 1.0);
        let r = self_energy(&p, &d, BasisLabel::bare(Level::E, 0), BasisLabel::G1, c(0.0), 2);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    /// Recursive enumeration of every path, written independently of the
    /// breadth-first accumulation.
    fn brute_force(h_i: &crate::model::CMatrix, energies: &[f64], excluded: [usize; 2], bra: usize, ket: usize, z: C64, order: usize) -> C64 {
        fn walk(h: &crate::model::CMatrix, e: &[f64], ex: [usize; 2], bra: usize, cur: usize, z: C64, left: usize, acc: C64) -> C64 {
            let mut total = h[(bra, cur)] * acc;
            if left > 1 {
                for m in 0..e.len() {
                    if ex.contains(&m) || h[(m, cur)] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    total += walk(h, e, ex, bra, m, z, left - 1, acc * h[(m, cur)] / (z - e[m]));
                }
            }
            total
        }
        walk(h_i, energies, excluded, bra, ket, z, order, C64::new(1.0, 0.0))
    }

    #[test]
    fn path_sum_matches_brute_force() {
        let p = SystemParams::device().with_truncation(4, 3).unwrap();
        let d = DriveParams::new(&p, units::ghz(0.3), 0.4, units::ghz(8.65)).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap().entries;
        let h0 = build_hjc(&SystemParams { g: 0.0, ..p }, &d).unwrap().entries;
        let h_i = &h - &h0;
        let energies: Vec<f64> = (0..p.dim()).map(|i| h0[(i, i)].re).collect();
        let basis = p.basis();
        let ex = [basis.index(BasisLabel::F0).unwrap(), basis.index(BasisLabel::G1).unwrap()];
        let z = C64::new(-10.3, 0.05);
        for &(bra, ket) in &[(ex[0], ex[0]), (ex[0], ex[1]), (ex[1], ex[0]), (ex[1], ex[1])] {
            let expect = brute_force(&h_i, &energies, ex, bra, ket, z, 6);
            let got = self_energy(&p, &d, basis.label(bra), basis.label(ket), z, 6).unwrap();
            assert!((got - expect).norm() < 1e-12 * expect.norm().max(1e-3), "{got} vs {expect}");
        }
    }

    /// ⟨k|G₀ Σₙ (H_I G₀)ⁿ|l⟩ equals ⟨k|G₀ Σₙ (Σ G₀)ⁿ|l⟩ on the pair subspace,
    /// order by order in H_I.
    #[test]
    fn dyson_identity_through_fourth_order() {
        let p = SystemParams::device().with_truncation(3, 2).unwrap();
        let d = DriveParams::new(&p, units::ghz(0.25), 0.6, units::ghz(8.69)).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap().entries;
        let h0 = build_hjc(&SystemParams { g: 0.0, ..p }, &d).unwrap().entries;
        let h_i = &h - &h0;
        let z = C64::new(-9.7, 0.2);
        let n = p.dim();
        let g0 = crate::model::CMatrix::from_fn(n, n, |i, j| if i == j { (z - h0[(i, i)]).inv() } else { c(0.0) });
        let basis = p.basis();
        let pair = [BasisLabel::F0, BasisLabel::G1];
        let idx = [basis.index(pair[0]).unwrap(), basis.index(pair[1]).unwrap()];

        // left side, order by order
        let mut lhs = Vec::new();
        let mut term = g0.clone();
        for _ in 0..=4 {
            lhs.push(term.clone());
            term = &term * &h_i * &g0;
        }
        // Σ^{(j)} on the pair
        let mut sigma = vec![[[c(0.0); 2]; 2]; 5];
        for a in 0..2 {
            for b in 0..2 {
                let terms = self_energy_by_order(&p, &d, pair[a], pair[b], z, 4).unwrap();
                for j in 1..=4 {
                    sigma[j][a][b] = terms[j];
                }
            }
        }
        let g0p = [g0[(idx[0], idx[0])], g0[(idx[1], idx[1])]];
        // R_0 = G0, R_n = Σ_j G0 Σ^{(j)} R_{n−j}
        let mut r = vec![[[c(0.0); 2]; 2]; 5];
        r[0] = [[g0p[0], c(0.0)], [c(0.0), g0p[1]]];
        for nn in 1..=4 {
            for a in 0..2 {
                for b in 0..2 {
                    let mut acc = c(0.0);
                    for j in 1..=nn {
                        for m in 0..2 {
                            acc += g0p[a] * sigma[j][a][m] * r[nn - j][m][b];
                        }
                    }
                    r[nn][a][b] = acc;
                }
            }
        }
        for nn in 0..=4 {
            for a in 0..2 {
                for b in 0..2 {
                    let l = lhs[nn][(idx[a], idx[b])];
                    assert!((l - r[nn][a][b]).norm() <= 1e-12 * l.norm().max(1e-12), "order {nn} ({a},{b}): {l} vs {}", r[nn][a][b]);
                }
            }
        }
    }

    #[test]
    fn zero_drive_gives_zero_shift() {
        let p = SystemParams::device();
        let s = stark_shift_resolvent(&p, 0.0, 6).unwrap();
        assert_eq!(s.delta_f0g1, 0.0);
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn converged_residual_and_substitution() {
        let p = SystemParams::device();
        let cfg = ResolventConfig::default();
        let s = stark_shift_resolvent_with(&p, units::ghz(0.2), &cfg).unwrap();
        assert!(s.residual < 1e-10);
        let shift = s.delta_jc + s.delta_f0g1;
        let r = evaluate(&p, units::ghz(0.2), shift, s.z, &cfg).unwrap();
        assert!((s.z - r.sigma_g1).abs() < 1e-10);
        assert!((s.z + shift - r.sigma_f0).abs() < 1e-10);
    }

    #[test]
    fn order_must_be_even() {
        let p = SystemParams::device();
        assert!(stark_shift_resolvent(&p, 0.1, 3).is_err());
        assert!(stark_shift_resolvent(&p, 0.1, 0).is_err());
    }

    #[test]
    fn shift_monotone_in_drive_power() {
        let p = SystemParams::device();
        let mut prev = 0.0;
        for i in 1..=12 {
            let s = stark_shift_resolvent(&p, units::ghz(0.025 * i as f64), 6).unwrap().delta_f0g1;
            assert!(s < prev, "shift not monotone at step {i}: {s} vs {prev}");
            prev = s;
        }
    }

    #[test]
    fn calibration_degenerate_inputs() {
        let p = SystemParams::device();
        let m = |pw: f64| StarkMeasurement { power_mw: pw, delta_f0g1: -0.01 };
        assert!(matches!(calibrate_drive_power(&p, &[m(1.0), m(2.0)]), Err(Error::Fit { .. })));
        assert!(matches!(calibrate_drive_power(&p, &[m(1.0), m(1.0), m(1.0)]), Err(Error::Fit { .. })));
    }

    #[test]
    fn calibration_noiseless_roundtrip() {
        let p = SystemParams::device();
        let k = units::ghz(0.1) / 0.5;
        let meas: Vec<StarkMeasurement> = [0.05, 0.1, 0.2, 0.3, 0.45]
            .iter()
            .map(|&pw: &f64| StarkMeasurement { power_mw: pw, delta_f0g1: stark_shift_resolvent(&p, k * pw.sqrt(), 6).unwrap().delta_f0g1 })
            .collect();
        let fit = calibrate_drive_power(&p, &meas).unwrap();
        assert!(((fit.k - k) / k).abs() < 1e-6, "{} vs {k}", fit.k);
    }

    #[test]
    fn reads_measurement_csv() {
        let text = "power_dbm,delta_f0g1_mhz\n0,-5.0\n-10, -0.5\n";
        let m = read_measurements_csv(text.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m[1].power_mw - 0.1).abs() < 1e-15);
        assert!((m[0].delta_f0g1 - units::mhz(-5.0)).abs() < 1e-15);
        assert!(read_measurements_csv("power,delta\n1,2\n".as_bytes()).is_err());
    }
}
