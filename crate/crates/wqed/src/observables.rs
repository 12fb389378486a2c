//! Observables of a weak coherent drive in channel 1 at the carrier:
//! spectral power densities, normalized second- and third-order coherence
//! functions, dressed-propagator poles and detuning scans.
//!
//! Everything is reported at leading nonvanishing order in the photon flux
//! `Φ = |α|²/L`: spectra per `Φ²`, elastic weights per `Φ`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use wqed_numerics::{fourier::fourier_2d_table, lambert_w, quad::gauss_legendre, FourierTable, MomentumGrid, TailSpec};

use crate::{
    error::ObservableError,
    model::{inverse_propagator, Channel, ModelParams},
    scattering::{
        single_photon_s, two_photon_connected_t_with, AmplitudeMode, ChannelMatrix, OnShellColumn,
        ThreePhotonAmplitude, TwoPhotonAmplitude,
    },
    vertex::SolverOptions,
    C64,
};

type Result<T> = std::result::Result<T, ObservableError>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative tolerance on the `O(Φ²)` power balance.
pub const POWER_TOLERANCE: f64 = 1e-3;

/// Smallest `|S_μ1(0)|` accepted as a normalization.
pub const NORMALIZATION_FLOOR: f64 = 1e-6;

/// Largest accepted `|G⁻¹|` at a returned pole.
pub const POLE_RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub k: Vec<f64>,
    /// Inelastic density per channel, in units of `Φ²`.
    pub s_inel: [Vec<f64>; 2],
    /// Coefficient of `δ(k)` per channel: `|S_μ1(0)|²` in units of `Φ` plus
    /// the `Φ²` correction.
    pub s_el_weight: [f64; 2],
    /// The `Φ²` part of `s_el_weight` alone.
    pub s_el_correction: [f64; 2],
    /// Elastic loss plus inelastic gain, summed over channels.
    pub power_residual: f64,
    /// `32π³ Σ∫|M|²`, the scale the residual is judged against.
    pub power_scale: f64,
}

impl SpectrumResult {
    /// `s_inel` summed over channels.
    pub fn total(&self) -> Vec<f64> {
        self.s_inel[0].iter().zip(&self.s_inel[1]).map(|(a, b)| a + b).collect()
    }

    pub fn relative_residual(&self) -> f64 {
        if self.power_scale > 0.0 {
            self.power_residual.abs() / self.power_scale
        } else {
            self.power_residual.abs()
        }
    }
}

/// A local maximum of a sampled curve with its full width at half maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub k: f64,
    pub height: f64,
    pub fwhm: f64,
}

/// `|S_μ1(0)|` checked against [`NORMALIZATION_FLOOR`].
fn carrier_s(p: &ModelParams) -> Result<ChannelMatrix> {
    Ok(single_photon_s(p, 0.0)?)
}

fn check_normalization(s: &ChannelMatrix, channels: &[Channel]) -> Result<()> {
    for &ch in channels {
        let magnitude = s[ch.index()][0].norm();
        if magnitude < NORMALIZATION_FLOOR {
            return Err(ObservableError::DegenerateNormalization {
                channel: ch.label(),
                magnitude,
            });
        }
    }
    Ok(())
}

/// Inelastic spectrum, elastic weights and the power balance, failing
/// with `ConservationViolation` beyond [`POWER_TOLERANCE`].
pub fn spectral_density(p: &ModelParams, m: &TwoPhotonAmplitude) -> Result<SpectrumResult> {
    spectral_density_with(p, m, Some(POWER_TOLERANCE))
}

/// [`spectral_density`] with an explicit tolerance; `None` skips the check.
pub fn spectral_density_with(
    p: &ModelParams,
    m: &TwoPhotonAmplitude,
    tolerance: Option<f64>,
) -> Result<SpectrumResult> {
    let grid = m.grid();
    let s0 = carrier_s(p)?;
    let k_max = grid.k_max();
    let mut s_inel: [Vec<f64>; 2] = Default::default();
    let mut s_el_weight = [0.0; 2];
    let mut s_el_correction = [0.0; 2];
    let mut gain = 0.0;
    for inc in Channel::ALL {
        let mu = inc.index();
        let mut density = vec![0.0; grid.len()];
        let mut correction = 0.0;
        for out in Channel::ALL {
            let v = m.values(out, inc);
            for (d, z) in density.iter_mut().zip(v) {
                *d += 32.0 * PI.powi(3) * z.norm_sqr();
            }
            let sprod = s0[out.index()][0] * s0[mu][0];
            correction += 16.0 * PI * PI * (m.at(out, inc, 0.0) * sprod.conj()).im;
        }
        // Beyond the cutoff |M|² falls as 1/k⁴.
        let n = density.len();
        let beyond = (density[0] + density[n - 1]) * k_max / 3.0;
        gain += grid.integrate(&density) + beyond;
        s_el_correction[mu] = correction;
        s_el_weight[mu] = s0[mu][0].norm_sqr() + correction;
        s_inel[mu] = density;
    }
    let loss: f64 = s_el_correction.iter().sum();
    let result = SpectrumResult {
        k: grid.nodes().to_vec(),
        s_inel,
        s_el_weight,
        s_el_correction,
        power_residual: loss + gain,
        power_scale: gain,
    };
    if let Some(tol) = tolerance {
        if result.relative_residual() > tol {
            return Err(ObservableError::ConservationViolation {
                residual: result.power_residual,
                scale: result.power_scale,
            });
        }
    }
    Ok(result)
}

/// Local maxima of `y(x)` in decreasing height, at most `count` of them.
///
/// The half-maximum crossings are interpolated linearly; a peak whose
/// flank never drops to half height within the samples is given the
/// distance to the sample edge instead.
pub fn dominant_peaks(x: &[f64], y: &[f64], count: usize) -> Vec<Peak> {
    let n = y.len();
    let mut maxima: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    maxima.truncate(count);
    maxima
        .into_iter()
        .map(|i| {
            let half = 0.5 * y[i];
            let mut left = x[0];
            for j in (0..i).rev() {
                if y[j] <= half {
                    left = x[j] + (half - y[j]) / (y[j + 1] - y[j]) * (x[j + 1] - x[j]);
                    break;
                }
            }
            let mut right = x[n - 1];
            for j in i + 1..n {
                if y[j] <= half {
                    right = x[j - 1] + (y[j - 1] - half) / (y[j - 1] - y[j]) * (x[j] - x[j - 1]);
                    break;
                }
            }
            Peak {
                k: x[i],
                height: y[i],
                fwhm: right - left,
            }
        })
        .collect()
}

/// One coherence curve (or surface) for a tuple of detection channels.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceSeries {
    /// Channels in the order of the subscript, latest detection first.
    pub channels: Vec<u8>,
    /// `C(τ)` or, for third order, row-major `C(τ′, τ)`.
    pub values: Vec<f64>,
}

/// A located derivative discontinuity.
#[derive(Debug, Clone, Serialize)]
pub struct Kink {
    pub channels: Vec<u8>,
    /// Delay `τ` (second order) or diagonal offset `τ′ − τ` (third order).
    pub tau: f64,
    pub jump: f64,
    pub background: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceResult {
    pub taus: Vec<f64>,
    pub taus_prime: Option<Vec<f64>>,
    pub mode: AmplitudeMode,
    pub series: Vec<CoherenceSeries>,
    pub kink_report: Vec<Kink>,
}

impl CoherenceResult {
    pub fn series_for(&self, channels: &[Channel]) -> Option<&CoherenceSeries> {
        let labels: Vec<u8> = channels.iter().map(|c| c.label()).collect();
        self.series.iter().find(|s| s.channels == labels)
    }

    pub fn kinks_for(&self, channels: &[Channel]) -> Vec<&Kink> {
        let labels: Vec<u8> = channels.iter().map(|c| c.label()).collect();
        self.kink_report.iter().filter(|k| k.channels == labels).collect()
    }
}

/// Settings of the derivative-jump detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkOptions {
    /// Half-width of the one-sided difference stencil in delay units.
    pub stencil: f64,
    /// A jump must exceed this multiple of the background median.
    pub threshold: f64,
    /// Half-width of the window the median is taken over; `None` uses
    /// the whole axis.
    pub window: Option<f64>,
}

impl Default for KinkOptions {
    fn default() -> Self {
        Self {
            stencil: 0.2,
            threshold: 5.0,
            window: None,
        }
    }
}

fn uniform_step(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let uniform = x
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    (uniform && h > 0.0).then_some(h)
}

fn near_multiple(x: f64, period: f64, radius: f64) -> bool {
    period > 0.0 && (x - (x / period).round() * period).abs() <= radius
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flag local maxima of a jump profile that exceed `threshold` times the
/// median of the profile within `window` of them, away from multiples of
/// `period`. Returns `(position, jump, background)`.
fn flag_jumps(
    x: &[f64],
    gap: &[Option<f64>],
    period: f64,
    exclusion: f64,
    threshold: f64,
    window: Option<f64>,
) -> Vec<(f64, f64, f64)> {
    let quiet: Vec<(f64, f64)> = x
        .iter()
        .zip(gap)
        .filter(|(xi, _)| !near_multiple(**xi, period, exclusion))
        .filter_map(|(xi, g)| g.map(|g| (*xi, g)))
        .collect();
    let global = median(quiet.iter().map(|q| q.1).collect());
    let background = |at: f64| match window {
        Some(w) => {
            let local: Vec<f64> = quiet.iter().filter(|q| (q.0 - at).abs() <= w).map(|q| q.1).collect();
            if local.len() >= 8 {
                median(local)
            } else {
                global
            }
        }
        None => global,
    };
    let mut hits: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..gap.len() {
        let Some(g) = gap[i] else { continue };
        let left = i.checked_sub(1).and_then(|j| gap[j]).unwrap_or(0.0);
        let right = gap.get(i + 1).copied().flatten().unwrap_or(0.0);
        if !(g >= left && g > right) {
            continue;
        }
        let bg = background(x[i]);
        if g > threshold * bg {
            match hits.last_mut() {
                Some(last) if x[i] - last.0 <= exclusion => {
                    if g > last.1 {
                        *last = (x[i], g, bg);
                    }
                }
                _ => hits.push((x[i], g, bg)),
            }
        }
    }
    hits
}

/// Derivative jumps of a curve sampled on a uniform axis: the gap between
/// the right and left one-sided slopes over `stencil`, compared with its
/// median outside the neighbourhoods of multiples of `period`.
pub fn detect_kinks(taus: &[f64], values: &[f64], period: f64, options: &KinkOptions) -> Vec<(f64, f64, f64)> {
    let Some(h) = uniform_step(taus) else {
        return Vec::new();
    };
    let s = ((options.stencil / h).round() as usize).max(1);
    let n = values.len();
    let gap: Vec<Option<f64>> = (0..n)
        .map(|i| {
            (i >= s && i + s < n).then(|| {
                let dl = (values[i] - values[i - s]) / (s as f64 * h);
                let dr = (values[i + s] - values[i]) / (s as f64 * h);
                (dr - dl).abs()
            })
        })
        .collect();
    flag_jumps(
        taus,
        &gap,
        period,
        2.0 * s as f64 * h,
        options.threshold,
        options.window,
    )
}

/// Ridges of a surface `f(τ′, τ)` (row-major, both axes `taus`) along
/// the diagonals `τ′ − τ = d`: the slope jump across each diagonal,
/// averaged along it, then screened like [`detect_kinks`].
pub fn detect_ridges(taus: &[f64], values: &[f64], period: f64, options: &KinkOptions) -> Vec<(f64, f64, f64)> {
    let Some(h) = uniform_step(taus) else {
        return Vec::new();
    };
    let n = taus.len();
    let s = ((options.stencil / (2.0 * h)).round() as usize).max(1);
    let step = s as f64 * h * 2f64.sqrt();
    let mut sum = vec![0.0; 2 * n - 1];
    let mut count = vec![0usize; 2 * n - 1];
    for i in s..n.saturating_sub(s) {
        for j in s..n.saturating_sub(s) {
            let f = |a: usize, b: usize| values[a * n + b];
            let dl = (f(i, j) - f(i - s, j + s)) / step;
            let dr = (f(i + s, j - s) - f(i, j)) / step;
            let m = i + n - 1 - j;
            sum[m] += (dr - dl).abs();
            count[m] += 1;
        }
    }
    let offsets: Vec<f64> = (0..2 * n - 1).map(|m| (m as f64 - (n - 1) as f64) * h).collect();
    // Short diagonals near the corners average too few points to be stable.
    let min_count = n / 4;
    let profile: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(&t, &c)| (c >= min_count.max(1)).then(|| t / c as f64))
        .collect();
    flag_jumps(
        &offsets,
        &profile,
        period,
        4.0 * s as f64 * h,
        options.threshold,
        options.window,
    )
}

/// All four `C²_{μ′μ}(τ)` with derivative-jump report.
pub fn coherence2(p: &ModelParams, m: &TwoPhotonAmplitude, taus: &[f64]) -> Result<CoherenceResult> {
    let pairs: Vec<[Channel; 2]> = Channel::ALL
        .iter()
        .flat_map(|&a| Channel::ALL.iter().map(move |&b| [a, b]))
        .collect();
    coherence2_pairs(p, m, taus, &pairs, &KinkOptions::default())
}

/// `C²_{μ′μ}(τ) = |1 − 4πi I¹_{μ′μ}(τ)/(S_μ′1(0) S_μ1(0))|²` for chosen
/// `[μ′, μ]` pairs.
pub fn coherence2_pairs(
    p: &ModelParams,
    m: &TwoPhotonAmplitude,
    taus: &[f64],
    pairs: &[[Channel; 2]],
    kinks: &KinkOptions,
) -> Result<CoherenceResult> {
    let s0 = carrier_s(p)?;
    let mut series = Vec::with_capacity(pairs.len());
    let mut kink_report = Vec::new();
    for &[out, inc] in pairs {
        check_normalization(&s0, &[out, inc])?;
        let table =
            FourierTable::new(m.values(out, inc), m.grid(), &m.tail(out, inc)).map_err(ObservableError::from)?;
        let norm = s0[out.index()][0] * s0[inc.index()][0];
        let values: Vec<f64> = table
            .eval_many(taus)
            .into_iter()
            .map(|i1| (C64::new(1.0, 0.0) - 4.0 * PI * I * i1 / norm).norm_sqr())
            .collect();
        let labels = vec![out.label(), inc.label()];
        for (tau, jump, background) in detect_kinks(taus, &values, p.leg_separation(), kinks) {
            kink_report.push(Kink {
                channels: labels.clone(),
                tau,
                jump,
                background,
            });
        }
        series.push(CoherenceSeries {
            channels: labels,
            values,
        });
    }
    Ok(CoherenceResult {
        taus: taus.to_vec(),
        taus_prime: None,
        mode: m.mode(),
        series,
        kink_report,
    })
}

/// Settings of the finite-pulse two-photon oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct StateOracleOptions {
    /// Pulse lengths, increasing; the last two decide stability.
    pub lengths: Vec<f64>,
    /// Momentum cutoff of the direct quadrature.
    pub k_cut: f64,
    /// `|k|` below which the fine panels are used.
    pub k_inner: f64,
    pub inner_panel: f64,
    pub outer_panel: f64,
}

impl Default for StateOracleOptions {
    fn default() -> Self {
        Self {
            lengths: vec![800.0, 1600.0, 3200.0, 6400.0],
            k_cut: 1000.0,
            k_inner: 10.0,
            inner_panel: 0.005,
            outer_panel: 0.25,
        }
    }
}

/// Output of [`oracle_c2_from_state`]: the extrapolated curves plus the
/// raw finite-length ones.
#[derive(Debug, Clone)]
pub struct StateOracle {
    pub result: CoherenceResult,
    /// `raw[l][s]` is series `s` at `lengths[l]`.
    pub raw: Vec<Vec<Vec<f64>>>,
    pub lengths: Vec<f64>,
    /// Largest relative change between the last two lengths.
    pub last_doubling_change: f64,
}

fn panel_rule(a: f64, b: f64, width: f64, order: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    for j in 0..panels {
        let (x, wt) = gauss_legendre(order, a + j as f64 * w, a + (j + 1) as f64 * w);
        nodes.extend(x);
        weights.extend(wt);
    }
}

/// `C²_{μ′μ}(τ)` from the outgoing two-photon state of a Gaussian pulse
/// of length `L`, by direct quadrature, extrapolated in `L`.
///
/// The photons sit symmetrically about the pulse center at `±τ/2`. The
/// uncorrelated part keeps the full momentum dependence of `S(k)` across
/// the pulse spectrum; the connected part is built from the unsymmetrized
/// `T^(2,C)` with the exchange symmetrization done pointwise, integrated
/// with composite Gauss–Legendre panels and no tail model.
pub fn oracle_c2_from_state(
    p: &ModelParams,
    column: &OnShellColumn,
    taus: &[f64],
    pairs: &[[Channel; 2]],
    options: &StateOracleOptions,
) -> Result<StateOracle> {
    if options.lengths.len() < 2 {
        return Err(ObservableError::InvalidInput(
            "the oracle needs at least two pulse lengths".into(),
        ));
    }
    let s0 = carrier_s(p)?;
    for &[a, b] in pairs {
        check_normalization(&s0, &[a, b])?;
    }

    // Connected part: J_{μ′μ}(τ) = ∫dk e^{ikτ} [T_{μ′k,μ−k} + T_{μ−k,μ′k}]/2.
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    panel_rule(
        -options.k_cut,
        -options.k_inner,
        options.outer_panel,
        16,
        &mut nodes,
        &mut weights,
    );
    panel_rule(
        -options.k_inner,
        options.k_inner,
        options.inner_panel,
        8,
        &mut nodes,
        &mut weights,
    );
    panel_rule(
        options.k_inner,
        options.k_cut,
        options.outer_panel,
        16,
        &mut nodes,
        &mut weights,
    );
    let samples: Vec<[[C64; 2]; 2]> = nodes
        .par_iter()
        .map(|&k| -> Result<[[C64; 2]; 2]> {
            let plus = two_photon_connected_t_with(p, column, k)?;
            let minus = two_photon_connected_t_with(p, column, -k)?;
            Ok(std::array::from_fn(|o| {
                std::array::from_fn(|i| (plus[o][i] + minus[i][o]) * 0.5)
            }))
        })
        .collect::<Result<_>>()?;
    let connected: Vec<Vec<C64>> = pairs
        .iter()
        .map(|&[o, i]| {
            taus.par_iter()
                .map(|&tau| {
                    nodes
                        .iter()
                        .zip(&weights)
                        .zip(&samples)
                        .map(|((&k, &w), s)| s[o.index()][i.index()] * C64::from_polar(w, k * tau))
                        .sum()
                })
                .collect()
        })
        .collect();

    // Uncorrelated part: ψ_μ(x) = (2π)^{-1/2} ∫dk φ_L(k) S_μ1(k) e^{ikx},
    // φ_L(k) = √(L/π) e^{−k²L²/(2π)}, and ξ_L(0)² = 1/L for the pair.
    let one_photon = |l: f64, ch: Channel, x: f64| -> Result<C64> {
        let sigma = PI.sqrt() / l;
        let (ks, ws) = {
            let mut ks = Vec::new();
            let mut ws = Vec::new();
            panel_rule(-9.0 * sigma, 9.0 * sigma, 1.5 * sigma, 24, &mut ks, &mut ws);
            (ks, ws)
        };
        let mut acc = C64::new(0.0, 0.0);
        for (&k, &w) in ks.iter().zip(&ws) {
            let phi = (l / PI).sqrt() * (-k * k * l * l / (2.0 * PI)).exp();
            let s = single_photon_s(p, k)?;
            acc += s[ch.index()][0] * C64::from_polar(w * phi, k * x);
        }
        Ok(acc / (2.0 * PI).sqrt())
    };

    let mut raw = Vec::with_capacity(options.lengths.len());
    for &l in &options.lengths {
        let mut per_pair = Vec::with_capacity(pairs.len());
        for (pi, &[o, i]) in pairs.iter().enumerate() {
            let mut curve = Vec::with_capacity(taus.len());
            for (ti, &tau) in taus.iter().enumerate() {
                let a = one_photon(l, o, 0.5 * tau)?;
                let b = one_photon(l, i, -0.5 * tau)?;
                let direct = a * b;
                let amp = direct - 4.0 * PI * I * connected[pi][ti] / l;
                curve.push(amp.norm_sqr() / direct.norm_sqr());
            }
            per_pair.push(curve);
        }
        raw.push(per_pair);
    }

    let last = raw.len() - 1;
    let mut change: f64 = 0.0;
    for (a, b) in raw[last].iter().zip(&raw[last - 1]) {
        for (x, y) in a.iter().zip(b) {
            change = change.max((x - y).abs() / x.abs().max(1e-300));
        }
    }
    if change > 1e-2 {
        return Err(ObservableError::ExtrapolationUnstable { relative: change });
    }
    // Finite-pulse corrections are even in 1/L: one Richardson step.
    let (l1, l2) = (options.lengths[last - 1], options.lengths[last]);
    let ratio = (l2 / l1).powi(2);
    let series = pairs
        .iter()
        .enumerate()
        .map(|(pi, &[o, i])| CoherenceSeries {
            channels: vec![o.label(), i.label()],
            values: raw[last][pi]
                .iter()
                .zip(&raw[last - 1][pi])
                .map(|(fine, coarse)| (ratio * fine - coarse) / (ratio - 1.0))
                .collect(),
        })
        .collect();
    Ok(StateOracle {
        result: CoherenceResult {
            taus: taus.to_vec(),
            taus_prime: None,
            mode: AmplitudeMode::Exact,
            series,
            kink_report: Vec::new(),
        },
        raw,
        lengths: options.lengths.clone(),
        last_doubling_change: change,
    })
}

/// The four channel triples that are independent for symmetric couplings.
pub const INDEPENDENT_TRIPLES: [[Channel; 3]; 4] = [
    [Channel::One, Channel::One, Channel::One],
    [Channel::Two, Channel::Two, Channel::Two],
    [Channel::One, Channel::One, Channel::Two],
    [Channel::One, Channel::Two, Channel::Two],
];

/// `C³_{μ″μ′μ}(τ′, τ)` for [`INDEPENDENT_TRIPLES`] on a uniform delay axis
/// shared by `τ′` and `τ`.
pub fn coherence3(
    p: &ModelParams,
    q: &ThreePhotonAmplitude,
    m: &TwoPhotonAmplitude,
    taus: &[f64],
) -> Result<CoherenceResult> {
    coherence3_triples(p, q, m, taus, &INDEPENDENT_TRIPLES, &KinkOptions::default())
}

/// Third-order coherence for the given `[μ″, μ′, μ]` triples: photon `μ`
/// detected at 0, `μ′` at `τ`, `μ″` at `τ′`. Values are row-major over
/// `(τ′, τ)`; the ridge report lists diagonal offsets `τ′ − τ`.
pub fn coherence3_triples(
    p: &ModelParams,
    q: &ThreePhotonAmplitude,
    m: &TwoPhotonAmplitude,
    taus: &[f64],
    triples: &[[Channel; 3]],
    kinks: &KinkOptions,
) -> Result<CoherenceResult> {
    let h = uniform_step(taus).ok_or_else(|| {
        ObservableError::InvalidInput("third-order delays must be a uniform axis of ≥ 3 points".into())
    })?;
    let n = taus.len();
    let s0 = carrier_s(p)?;
    let grid = q.grid();
    let nq = grid.len();
    // I¹ on every difference τ_a − τ_b of the axis, then on the axis.
    let mut diffs: Vec<f64> = (0..2 * n - 1).map(|d| (d as f64 - (n - 1) as f64) * h).collect();
    diffs.extend_from_slice(taus);
    let mut i1_cache: [Option<Vec<C64>>; 4] = Default::default();
    let mut i1 = |a: Channel, b: Channel| -> Result<Vec<C64>> {
        let slot = &mut i1_cache[2 * a.index() + b.index()];
        if slot.is_none() {
            let t = FourierTable::new(m.values(a, b), m.grid(), &m.tail(a, b))?;
            *slot = Some(t.eval_many(&diffs));
        }
        Ok(slot.clone().unwrap_or_default())
    };
    let at = |v: &[C64], a: usize, b: usize| v[a + n - 1 - b];
    let mut series = Vec::with_capacity(triples.len());
    let mut kink_report = Vec::new();
    for &[c3, c2, c1] in triples {
        check_normalization(&s0, &[c3, c2, c1])?;
        let (s3, s2, s1) = (s0[c3.index()][0], s0[c2.index()][0], s0[c1.index()][0]);
        let i32_ = i1(c3, c2)?;
        let i21 = i1(c2, c1)?;
        let i31 = i1(c3, c1)?;
        // Q(−k−q, k, q) carries μ at −k−q, μ′ at k, μ″ at q; the 2D
        // transform wants rows over q.
        // The table is tapered by f(k) f(q) f(k+q) with uniform effective
        // weights, so the truncation is itself invariant under exchange of
        // the photons; without this the square cutoff breaks the relabeling
        // identities between channel triples at the percent level.
        let table = q.table([c1, c2, c3]);
        let nodes = grid.nodes();
        let weights = grid.weights();
        let spacing = grid.spacing();
        let taper = |x: f64| exchange_taper(x, grid.k_max());
        let mut by_q = vec![C64::new(0.0, 0.0); nq * nq];
        for ik in 0..nq {
            for iq in 0..nq {
                let (k, qq) = (nodes[ik], nodes[iq]);
                let f = taper(k) * taper(qq) * taper(k + qq);
                if f > 0.0 {
                    let w = spacing * spacing / (weights[ik] * weights[iq]);
                    by_q[iq * nq + ik] = table[ik * nq + iq] * (f * w);
                }
            }
        }
        let i2 = fourier_2d_table(&by_q, grid, taus, taus, &TailSpec::None)?;
        let mut values = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let pair =
                    at(&i32_, a, b) / (s3 * s2) + i21[2 * n - 1 + b] / (s2 * s1) + i31[2 * n - 1 + a] / (s3 * s1);
                let amp = C64::new(1.0, 0.0) - 4.0 * PI * I * pair - 12.0 * PI * I * i2[a * n + b] / (s3 * s2 * s1);
                values.push(amp.norm_sqr());
            }
        }
        let labels = vec![c3.label(), c2.label(), c1.label()];
        for (tau, jump, background) in detect_ridges(taus, &values, p.leg_separation(), kinks) {
            kink_report.push(Kink {
                channels: labels.clone(),
                tau,
                jump,
                background,
            });
        }
        series.push(CoherenceSeries {
            channels: labels,
            values,
        });
    }
    Ok(CoherenceResult {
        taus: taus.to_vec(),
        taus_prime: Some(taus.to_vec()),
        mode: q.mode(),
        series,
        kink_report,
    })
}

/// Raised-cosine taper over the outer [`TAPER_FRACTION`] of `[−K, K]`.
fn exchange_taper(x: f64, k_max: f64) -> f64 {
    let inner = (1.0 - TAPER_FRACTION) * k_max;
    let a = x.abs();
    if a <= inner {
        1.0
    } else if a >= k_max {
        0.0
    } else {
        0.5 * (1.0 + (PI * (a - inner) / (k_max - inner)).cos())
    }
}

/// Fraction of the three-photon momentum range given to the taper.
pub const TAPER_FRACTION: f64 = 0.2;

/// Which of the two root families of the pole formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleFamily {
    /// Zeros of `G⁻¹(k)`, the resonances of the emitting photon.
    Direct,
    /// Their mirror images `−k`, where the partner photon of an
    /// inelastic pair is emitted.
    Mirror,
}

impl PoleFamily {
    pub fn sign(self) -> f64 {
        match self {
            PoleFamily::Direct => -1.0,
            PoleFamily::Mirror => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PoleFamily::Direct => "direct",
            PoleFamily::Mirror => "mirror",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleResult {
    pub branch: i64,
    pub family: PoleFamily,
    #[serde(serialize_with = "serialize_complex")]
    pub pole: C64,
    /// `|G⁻¹(k)|` for direct poles, `|G⁻¹(−k)|` for mirror poles.
    pub residual: f64,
}

impl PoleResult {
    /// Full width at half maximum of the Lorentzian this pole produces.
    pub fn linewidth(&self) -> f64 {
        2.0 * self.pole.im.abs()
    }
}

fn serialize_complex<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

/// Poles `k = ±i(γ_f' R − iRΔ − W_n(z))/R` with
/// `z = −γ_f R e^{i(k₀−Δ−iγ)R}`, where `γ_f = 2√(Γ₁Γ₂)` is the feedback
/// strength and `γ_f' = γ`. At `R = 0` the single point-coupling pole
/// `−Δ − i(γ + γ_f)` is returned per family.
pub fn lambert_poles(p: &ModelParams, branches: &[i64]) -> Result<Vec<PoleResult>> {
    let r = p.leg_separation();
    let gamma = p.gamma();
    let delta = p.detuning();
    let gf = p.feedback_strength();
    let mut out = Vec::new();
    if r == 0.0 || gf == 0.0 {
        let k = -delta - I * (gamma + gf * C64::from_polar(1.0, p.carrier_phase()));
        for family in [PoleFamily::Direct, PoleFamily::Mirror] {
            out.push(PoleResult {
                branch: 0,
                family,
                pole: -family.sign() * k,
                residual: inverse_propagator(p, k).norm(),
            });
        }
        return checked(out);
    }
    // e^{i(k₀ − Δ − iγ)R} from the stored phase k₀R.
    let z = -gf * r * C64::from_polar((gamma * r).exp(), p.carrier_phase() - delta * r);
    for &n in branches {
        let w = lambert_w(z, n)?;
        let base = I * (C64::new(gamma * r, -r * delta) - w) / r;
        for family in [PoleFamily::Direct, PoleFamily::Mirror] {
            let pole = family.sign() * base;
            let direct = -family.sign() * pole;
            out.push(PoleResult {
                branch: n,
                family,
                pole,
                residual: inverse_propagator(p, direct).norm(),
            });
        }
    }
    checked(out)
}

fn checked(poles: Vec<PoleResult>) -> Result<Vec<PoleResult>> {
    for pole in &poles {
        if !(pole.residual < POLE_RESIDUAL_TOLERANCE) {
            return Err(ObservableError::ResidualTooLarge {
                branch: pole.branch,
                residual: pole.residual,
            });
        }
    }
    Ok(poles)
}

/// Spectra over a list of detunings.
#[derive(Debug, Clone, Serialize)]
pub struct DetuningScan {
    pub deltas: Vec<f64>,
    pub spectra: Vec<SpectrumResult>,
    /// `max |s_μ(Δ,k) − s_μ(−Δ,−k)| / max s` over the `±Δ` pairs present,
    /// or `None` if no pair is present.
    pub asymmetry: Option<f64>,
}

/// Inputs shared by every detuning of a scan.
#[derive(Debug, Clone)]
pub struct ScanSetup<'a> {
    pub vertex_grid: &'a MomentumGrid,
    pub grid: &'a MomentumGrid,
    pub mode: AmplitudeMode,
    pub solver: &'a SolverOptions,
    /// Power-balance tolerance per slice; `None` records without checking.
    pub tolerance: Option<f64>,
}

/// [`spectral_density`] at each detuning, with the `±Δ` asymmetry
/// diagnostic.
pub fn detuning_scan(p_base: &ModelParams, deltas: &[f64], setup: &ScanSetup<'_>) -> Result<DetuningScan> {
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(ObservableError::InvalidInput("detunings must be finite".into()));
    }
    let spectra = deltas
        .iter()
        .map(|&d| {
            let p = p_base.with_detuning(d);
            let m = TwoPhotonAmplitude::solve(&p, setup.vertex_grid, setup.grid, setup.mode, setup.solver)?;
            spectral_density_with(&p, &m, setup.tolerance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetuningScan::from_spectra(deltas, spectra))
}

impl DetuningScan {
    /// Assemble a scan from spectra computed elsewhere, one per detuning.
    pub fn from_spectra(deltas: &[f64], spectra: Vec<SpectrumResult>) -> Self {
        let asymmetry = scan_asymmetry(deltas, &spectra);
        Self {
            deltas: deltas.to_vec(),
            spectra,
            asymmetry,
        }
    }
}

fn scan_asymmetry(deltas: &[f64], spectra: &[SpectrumResult]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (a, &da) in deltas.iter().enumerate() {
        let Some(b) = deltas
            .iter()
            .position(|&db| (db + da).abs() <= 1e-12 * (1.0 + da.abs()))
        else {
            continue;
        };
        let (sa, sb) = (&spectra[a], &spectra[b]);
        let scale = sa
            .s_inel
            .iter()
            .chain(&sb.s_inel)
            .flatten()
            .fold(0.0_f64, |m, &x| m.max(x));
        let n = sa.k.len();
        let mut diff: f64 = 0.0;
        for ch in 0..2 {
            for j in 0..n {
                diff = diff.max((sa.s_inel[ch][j] - sb.s_inel[ch][n - 1 - j]).abs());
            }
        }
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        worst = Some(worst.map_or(rel, |w: f64| w.max(rel)));
    }
    worst
}

/// Where the spectral maximum of one scan slice sits relative to the
/// nearest pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgePoint {
    pub delta: f64,
    pub k_peak: f64,
    pub pole_re: f64,
    pub linewidth: f64,
    pub within: bool,
}

/// Compare the maximum of the total inelastic density at each detuning
/// with `Re` of the nearest pole of branches `n`, both families. The
/// tolerance is the pole's linewidth, floored at the grid spacing.
pub fn track_ridges(p_base: &ModelParams, scan: &DetuningScan, branches: &[i64]) -> Result<Vec<RidgePoint>> {
    let mut out = Vec::with_capacity(scan.deltas.len());
    for (&delta, spectrum) in scan.deltas.iter().zip(&scan.spectra) {
        let total = spectrum.total();
        let imax = (0..total.len())
            .max_by(|&a, &b| total[a].total_cmp(&total[b]))
            .unwrap_or(0);
        let k_peak = spectrum.k[imax];
        let spacing = if spectrum.k.len() > 1 {
            spectrum.k[1] - spectrum.k[0]
        } else {
            0.0
        };
        let poles = lambert_poles(&p_base.with_detuning(delta), branches)?;
        let nearest = poles
            .iter()
            .min_by(|a, b| (a.pole.re - k_peak).abs().total_cmp(&(b.pole.re - k_peak).abs()))
            .ok_or_else(|| ObservableError::InvalidInput("no branches requested".into()))?;
        let linewidth = nearest.linewidth().max(spacing);
        out.push(RidgePoint {
            delta,
            k_peak,
            pole_re: nearest.pole.re,
            linewidth,
            within: (k_peak - nearest.pole.re).abs() <= linewidth,
        });
    }
    Ok(out)
}
