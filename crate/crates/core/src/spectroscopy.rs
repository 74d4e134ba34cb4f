//! Resonator transmission of the driven system: synthesis, peak finding and
//! least-squares extraction of g̃.
//!
//! S(ω) = A₀² |(i|γ|ω − ω̃²) / (4g̃²(ω_d⁰)² − (i|γ|ω − ω̃²)(i|κ|ω − ω̃²))|²,
//! ω̃² = ω² − (ω_d⁰)².

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};
use crate::model::{build_hamiltonian, BasisLabel, DriveParams, SystemParams, C64};
use crate::spectral::{diagonalize, dressed_pair};
use crate::stark::StarkSolution;
use crate::units;

pub const MIN_TRACE_POINTS: usize = 32;
/// Minimum relative dip between two peaks for a trace to count as split.
pub const SPLIT_DIP: f64 = 0.10;
pub const FIT_MAX_ITERATIONS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResponseModel {
    pub a0: f64,
    pub gtilde: f64,
    pub omega_d0: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl ResponseModel {
    pub fn new(a0: f64, gtilde: f64, omega_d0: f64, kappa: f64, gamma: f64) -> Result<Self> {
        let m = Self { a0, gtilde, omega_d0, kappa, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a0, self.gtilde, self.omega_d0, self.kappa, self.gamma];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite response parameter in {self:?}")));
        }
        if !(self.a0 > 0.0) || self.gtilde < 0.0 || self.kappa < 0.0 || self.gamma < 0.0 || !(self.omega_d0 > 0.0) {
            return Err(Error::Domain(format!("need a0 > 0, ω_d⁰ > 0 and non-negative rates, got {self:?}")));
        }
        Ok(())
    }
}

/// ω² − ω₀², factored to keep precision near resonance.
fn detuning_sq(omega: f64, omega0: f64) -> f64 {
    (omega - omega0) * (omega + omega0)
}

/// Two-centre form: transmon-like centre `omega_a` (rate γ) and resonator-like
/// centre `omega_b` (rate κ). Equal centres give the single-centre response.
fn response_two_centre(m: &ResponseModel, omega_a: f64, omega_b: f64, omega: f64) -> Result<f64> {
    let num = C64::new(-detuning_sq(omega, omega_a), m.gamma.abs() * omega);
    let res = C64::new(-detuning_sq(omega, omega_b), m.kappa.abs() * omega);
    let den = C64::new(4.0 * m.gtilde * m.gtilde * m.omega_d0 * m.omega_d0, 0.0) - num * res;
    if den.norm() < 1e-30 {
        return Err(Error::Singularity(format!("response pole at ω = {omega}")));
    }
    Ok(m.a0 * m.a0 * (num / den).norm_sqr())
}

pub fn response(model: &ResponseModel, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("probe frequency must be positive, got {omega}")));
    }
    response_two_centre(model, model.omega_d0, model.omega_d0, omega)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransmissionTrace {
    omegas: Vec<f64>,
    values: Vec<f64>,
}

impl TransmissionTrace {
    pub fn new(omegas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::Size(format!("{} frequencies but {} values", omegas.len(), values.len())));
        }
        if omegas.len() < MIN_TRACE_POINTS {
            return Err(Error::Size(format!("trace needs at least {MIN_TRACE_POINTS} points, got {}", omegas.len())));
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("probe frequencies must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("transmission values must be finite and non-negative".into()));
        }
        Ok(Self { omegas, values })
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { omegas: self.omegas.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Reads `probe_ghz,transmission` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["probe_ghz", "transmission"] {
            return Err(Error::Config(format!("expected header probe_ghz,transmission, got {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let (mut w, mut s) = (Vec::new(), Vec::new());
        for rec in rdr.deserialize() {
            let (f, v): (f64, f64) = rec?;
            w.push(units::ghz(f));
            s.push(v);
        }
        Self::new(w, s)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["probe_ghz", "transmission"])?;
        for (o, v) in self.omegas.iter().zip(&self.values) {
            wtr.write_record([format!("{:.12}", units::to_ghz(*o)), format!("{:.12e}", v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `n` equally spaced probe frequencies on [lo, hi].
pub fn probe_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
}

pub fn synthesize(model: &ResponseModel, omegas: &[f64]) -> Result<TransmissionTrace> {
    model.validate()?;
    let vals = omegas.iter().map(|&w| response(model, w)).collect::<Result<Vec<_>>>()?;
    TransmissionTrace::new(omegas.to_vec(), vals)
}

/// Multiplies each sample by (1 + σ ξ), ξ ~ N(0, 1), clipped at zero.
pub fn add_multiplicative_noise(trace: &TransmissionTrace, sigma: f64, seed: u64) -> Result<TransmissionTrace> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(format!("noise level {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = trace.values.iter().map(|v| (v * (1.0 + normal.sample(&mut rng))).max(0.0)).collect();
    TransmissionTrace::new(trace.omegas.clone(), vals)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub omega: f64,
    pub height: f64,
    /// Full width at half maximum, from linear interpolation of the half-height crossings.
    pub fwhm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PeakResult {
    Single(Peak),
    Split { low: Peak, high: Peak },
}

impl PeakResult {
    pub fn separation(&self) -> f64 {
        match self {
            PeakResult::Single(_) => 0.0,
            PeakResult::Split { low, high } => high.omega - low.omega,
        }
    }

    pub fn center(&self) -> f64 {
        match self {
            PeakResult::Single(p) => p.omega,
            PeakResult::Split { low, high } => 0.5 * (low.omega + high.omega),
        }
    }
}

fn smooth(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(2), (i + 2).min(n - 1));
            v[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect()
}

fn refine(trace: &TransmissionTrace, i: usize) -> (f64, f64) {
    let (w, s) = (&trace.omegas, &trace.values);
    if i == 0 || i + 1 >= w.len() {
        return (w[i], s[i]);
    }
    // parabola through three (possibly non-uniform) points
    let (x0, x1, x2) = (w[i - 1], w[i], w[i + 1]);
    let (y0, y1, y2) = (s[i - 1], s[i], s[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if a >= 0.0 {
        return (x1, y1);
    }
    let b = d01 - a * (x0 + x1);
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    let yv = y1 + (xv - x1) * (d01 + a * (xv - x0));
    (xv, yv)
}

/// Half-height crossing walking from `i` in direction `dir`; falls back to the trace end.
fn half_crossing(w: &[f64], s: &[f64], i: usize, half: f64, dir: isize) -> f64 {
    let mut j = i as isize;
    loop {
        let k = j + dir;
        if k < 0 || k as usize >= w.len() {
            return w[j as usize];
        }
        let (a, b) = (j as usize, k as usize);
        if s[b] <= half {
            let t = (s[a] - half) / (s[a] - s[b]);
            return w[a] + t * (w[b] - w[a]);
        }
        j = k;
    }
}

fn peak_at(trace: &TransmissionTrace, smoothed: &[f64], i: usize, half_from: f64) -> Peak {
    let (omega, height) = refine(trace, i);
    let half = 0.5 * half_from;
    let lo = half_crossing(&trace.omegas, smoothed, i, half, -1);
    let hi = half_crossing(&trace.omegas, smoothed, i, half, 1);
    Peak { omega, height, fwhm: hi - lo }
}

/// Locates one or two resonance peaks. Two candidates count as split when the
/// trace dips by at least 10% of the lower peak between them.
pub fn find_split_peaks(trace: &TransmissionTrace) -> Result<PeakResult> {
    let s = &trace.values;
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    if !(max > 3.0 * median) {
        return Err(Error::Detection(format!("no peak above the noise floor (max {max:.3e}, median {median:.3e})")));
    }
    let sm = smooth(s);
    let n = sm.len();
    let imax = (0..n).max_by(|&a, &b| sm[a].total_cmp(&sm[b])).unwrap();
    let maxima: Vec<usize> = (1..n - 1).filter(|&i| sm[i] >= sm[i - 1] && sm[i] > sm[i + 1] && i != imax).collect();
    let dip_ok = |j: usize| {
        let (a, b) = (imax.min(j), imax.max(j));
        let valley = sm[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        valley <= (1.0 - SPLIT_DIP) * sm[j].min(sm[imax])
    };
    let second = maxima.into_iter().filter(|&j| sm[j] > 0.2 * sm[imax] && dip_ok(j)).max_by(|&a, &b| sm[a].total_cmp(&sm[b]));

    let single_width = {
        let p = peak_at(trace, &sm, imax, sm[imax]);
        p.fwhm
    };
    let span = trace.omegas[n - 1] - trace.omegas[0];
    let result = match second {
        None => PeakResult::Single(peak_at(trace, &sm, imax, sm[imax])),
        Some(j) => {
            let (a, b) = (imax.min(j), imax.max(j));
            let pa = peak_at(trace, &sm, a, sm[a]);
            let pb = peak_at(trace, &sm, b, sm[b]);
            // inner half-height crossings can fall past the valley; use outer half-widths
            let outer = |p: &Peak, idx: usize, dir: isize| 2.0 * (half_crossing(&trace.omegas, &sm, idx, 0.5 * sm[idx], dir) - p.omega).abs();
            let low = Peak { fwhm: outer(&pa, a, -1), ..pa };
            let high = Peak { fwhm: outer(&pb, b, 1), ..pb };
            PeakResult::Split { low, high }
        }
    };
    let linewidth = match &result {
        PeakResult::Single(_) => single_width,
        PeakResult::Split { low, high } => low.fwhm.max(high.fwhm),
    };
    if span < 6.0 * linewidth {
        return Err(Error::Domain(format!("trace spans {:.3} linewidths, need at least 6", span / linewidth)));
    }
    Ok(result)
}

/// Starting point for `fit_response`: g̃ from half the peak separation,
/// κ = γ from the peak widths, A₀ matched to the trace maximum.
pub fn initial_guess(trace: &TransmissionTrace) -> Result<ResponseModel> {
    let peaks = find_split_peaks(trace)?;
    let (gtilde, width) = match peaks {
        PeakResult::Single(p) => (0.25 * p.fwhm, p.fwhm),
        PeakResult::Split { low, high } => (0.5 * (high.omega - low.omega), 0.5 * (low.fwhm + high.fwhm)),
    };
    // each polariton is (κ + γ)/2 wide when κ and γ are both of order the width
    let probe = ResponseModel { a0: 1.0, gtilde, omega_d0: peaks.center(), kappa: width, gamma: width };
    let peak_omega = match peaks {
        PeakResult::Single(p) => p.omega,
        PeakResult::Split { low, high } => if low.height >= high.height { low.omega } else { high.omega },
    };
    let unit = response(&probe, peak_omega)?;
    let max = trace.values.iter().copied().fold(0.0, f64::max);
    ResponseModel::new((max / unit).sqrt(), gtilde, probe.omega_d0, width, width)
}

#[derive(Clone, Debug, Serialize)]
pub struct ResponseFit {
    pub model: ResponseModel,
    pub residuals: Vec<f64>,
    /// Covariance of (A₀, g̃, ω_d⁰, κ, γ) in the model's units.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
}

impl ResponseFit {
    pub fn std_errors(&self) -> Option<[f64; 5]> {
        let c = self.covariance.as_ref()?;
        Some(std::array::from_fn(|i| c[i][i].max(0.0).sqrt()))
    }
}

/// Damped least squares over (A₀, g̃, ω_d⁰, κ, γ). Each parameter is scaled by its
/// starting value (ω_d⁰ enters as an offset in units of the starting width) and
/// residuals by the trace maximum.
pub fn fit_response(trace: &TransmissionTrace, initial: &ResponseModel) -> Result<ResponseFit> {
    initial.validate()?;
    let smax = trace.values.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return Err(Error::Detection("trace is identically zero".into()));
    }
    let width = initial.kappa.max(initial.gamma).max(initial.gtilde).max(1e-9 * initial.omega_d0);
    let scale = [initial.a0, initial.gtilde.max(0.05 * width), width, initial.kappa.max(0.05 * width), initial.gamma.max(0.05 * width)];
    let unpack = |p: &[f64]| ResponseModel {
        a0: (p[0] * scale[0]).abs(),
        gtilde: (p[1] * scale[1]).abs(),
        omega_d0: initial.omega_d0 + p[2] * scale[2],
        kappa: (p[3] * scale[3]).abs(),
        gamma: (p[4] * scale[4]).abs(),
    };
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let m = unpack(p);
        trace.omegas.iter().zip(&trace.values).map(|(&w, &s)| Ok((response(&m, w)? - s) / smax)).collect()
    };
    let p0 = [1.0, initial.gtilde / scale[1], 0.0, initial.kappa / scale[3], initial.gamma / scale[4]];
    let opts = LmOptions { max_iterations: FIT_MAX_ITERATIONS, ..LmOptions::default() };
    let out = levenberg_marquardt(residuals, &p0, &opts)?;
    let model = unpack(&out.params);
    let sign = [out.params[0].signum(), out.params[1].signum(), 1.0, out.params[3].signum(), out.params[4].signum()];
    let covariance = out.covariance.map(|c| {
        (0..5).map(|i| (0..5).map(|j| c[(i, j)] * scale[i] * scale[j] * sign[i] * sign[j]).collect()).collect()
    });
    Ok(ResponseFit { model, residuals: out.residuals.iter().map(|r| r * smax).collect(), covariance, iterations: out.iterations })
}

/// Peak-find, then fit.
pub fn extract_coupling(trace: &TransmissionTrace) -> Result<ResponseFit> {
    fit_response(trace, &initial_guess(trace)?)
}

/// Probe transitions of the two polaritons at drive frequency `omega_d`,
/// measured from the driven ground state, and their g1-likeness.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PolaritonLines {
    pub omega_d: f64,
    pub lower: f64,
    pub upper: f64,
    /// |⟨g1_D|Φ_upper⟩|².
    pub upper_g1_weight: f64,
}

pub fn polariton_lines(params: &SystemParams, omega_amp: f64, omega_d: f64) -> Result<PolaritonLines> {
    let drive = DriveParams::new(params, omega_amp, 0.0, omega_d)?;
    let eig = diagonalize(&build_hamiltonian(params, &drive)?)?;
    let (f0, g1) = dressed_pair(params, omega_d)?;
    let g0 = params.basis().unit(BasisLabel::bare(crate::model::Level::G, 0))?;
    let n = eig.dim();
    let weight = |k: usize, v: &crate::model::CVector| eig.eigenvectors.column(k).dotc(v).norm_sqr();
    let ground = (0..n).max_by(|&a, &b| weight(a, &g0).total_cmp(&weight(b, &g0))).unwrap();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| (weight(b, &f0) + weight(b, &g1)).total_cmp(&(weight(a, &f0) + weight(a, &g1))));
    let (mut lo, mut hi) = (idx[0], idx[1]);
    if eig.eigenvalues[lo] > eig.eigenvalues[hi] {
        std::mem::swap(&mut lo, &mut hi);
    }
    let e0 = eig.eigenvalues[ground];
    Ok(PolaritonLines {
        omega_d,
        lower: eig.eigenvalues[lo] - e0 + omega_d,
        upper: eig.eigenvalues[hi] - e0 + omega_d,
        upper_g1_weight: weight(hi, &g1),
    })
}

/// Long-form avoided-crossing map S(ω_d, ω) at fixed Ω.
#[derive(Clone, Debug, Serialize)]
pub struct TransmissionMap {
    pub omega_amp: f64,
    pub drive_grid: Vec<f64>,
    pub probe_grid: Vec<f64>,
    /// values[i][j] for drive i and probe j.
    pub values: Vec<Vec<f64>>,
    pub lines: Vec<PolaritonLines>,
}

impl TransmissionMap {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["drive_ghz", "probe_ghz", "transmission"])?;
        for (i, wd) in self.drive_grid.iter().enumerate() {
            for (j, wp) in self.probe_grid.iter().enumerate() {
                wtr.write_record([
                    format!("{:.12}", units::to_ghz(*wd)),
                    format!("{:.12}", units::to_ghz(*wp)),
                    format!("{:.12e}", self.values[i][j]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One column of the map: the polariton lines at `omega_d` are split into a
/// resonator-like and a transmon-like centre whose coupling is g̃(Ω), so the
/// two peaks of the rendered response sit at the exact polariton lines.
pub fn map_column(params: &SystemParams, stark: &StarkSolution, omega_amp: f64, omega_d: f64, probe: &[f64]) -> Result<(Vec<f64>, PolaritonLines)> {
    let lines = polariton_lines(params, omega_amp, omega_d)?;
    let gt = if omega_amp == 0.0 { 0.0 } else { stark.gtilde_at(omega_amp)?.abs() };
    let mid = 0.5 * (lines.upper + lines.lower);
    let split = lines.upper - lines.lower;
    // peaks of the coupled pair sit at mid ± ½√(δ² + 4g̃²)
    let delta = (split * split - 4.0 * gt * gt).max(0.0).sqrt();
    let (res_c, tr_c) = if lines.upper_g1_weight >= 0.5 { (mid + 0.5 * delta, mid - 0.5 * delta) } else { (mid - 0.5 * delta, mid + 0.5 * delta) };
    let m = ResponseModel::new(1.0, gt, mid, params.kappa, params.gamma)?;
    let vals = probe.iter().map(|&w| response_two_centre(&m, tr_c, res_c, w)).collect::<Result<Vec<_>>>()?;
    Ok((vals, lines))
}

pub fn synthesize_fig1_map(params: &SystemParams, stark: &StarkSolution, omega_amp: f64, drive_grid: &[f64], probe_grid: &[f64]) -> Result<TransmissionMap> {
    if omega_amp < 0.0 || omega_amp > stark.omega_max() * (1.0 + 1e-12) {
        return Err(Error::Range { what: "map drive amplitude".into(), value: omega_amp, lo: 0.0, hi: stark.omega_max() });
    }
    if drive_grid.is_empty() || probe_grid.is_empty() {
        return Err(Error::Size("empty map grid".into()));
    }
    let mut values = Vec::with_capacity(drive_grid.len());
    let mut lines = Vec::with_capacity(drive_grid.len());
    for &wd in drive_grid {
        let (v, l) = map_column(params, stark, omega_amp, wd, probe_grid)?;
        values.push(v);
        lines.push(l);
    }
    Ok(TransmissionMap { omega_amp, drive_grid: drive_grid.to_vec(), probe_grid: probe_grid.to_vec(), values, lines })
}

/// Drive frequency at which the two rendered peaks have equal width, found by
/// linear interpolation of the width difference across `drive_grid`.
pub fn equal_width_drive_frequency(params: &SystemParams, stark: &StarkSolution, omega_amp: f64, drive_grid: &[f64], probe: &[f64]) -> Result<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for &wd in drive_grid {
        let (vals, _) = map_column(params, stark, omega_amp, wd, probe)?;
        let trace = TransmissionTrace::new(probe.to_vec(), vals)?;
        let diff = match find_split_peaks(&trace)? {
            PeakResult::Split { low, high } => high.fwhm - low.fwhm,
            PeakResult::Single(_) => continue,
        };
        if let Some((w0, d0)) = prev {
            if d0 == 0.0 {
                return Ok(w0);
            }
            if d0.signum() != diff.signum() {
                return Ok(w0 + (wd - w0) * d0 / (d0 - diff));
            }
        }
        prev = Some((wd, diff));
    }
    Err(Error::Bracketing { lo: drive_grid[0], hi: *drive_grid.last().unwrap() })
}
