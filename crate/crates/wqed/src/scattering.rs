//! On-shell scattering amplitudes for a weak drive at the carrier.
//!
//! All multi-photon amplitudes take the incoming photons in channel 1 at
//! momentum 0 (total energy 0) and strip the momentum-conserving delta.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wqed_numerics::{
    diffquot::{default_threshold, safe_difference_quotient},
    fourier::TailSpec,
    interp::{lagrange_stencil, UniformAxis},
    MomentumGrid, C64,
};

use crate::{
    error::{ModelError, ScatteringError},
    model::{
        coupling, coupling_dual, dressed_green, inverse_propagator, inverse_propagator_derivative, propagator,
        propagator_derivative, Channel, ModelParams,
    },
    vertex::{
        solve_f11_column, Contour, ContourColumn, EnergyFamilyTable, SolverOptions, TwoPhotonVertexSlice, VertexMode,
        VertexTable,
    },
};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Level of approximation used for the multi-photon amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Solved one-photon vertex and the two-photon vertex slice.
    Exact,
    /// Solved one-photon vertex; the two-photon remainder is dropped.
    WeakCorrelation,
    /// Bare chains in place of every vertex function.
    QuasiMarkovian,
    /// Point-coupling closure, which leaves only the free vertex.
    Markovian,
}

impl AmplitudeMode {
    pub const ALL: [AmplitudeMode; 4] = [
        AmplitudeMode::Exact,
        AmplitudeMode::WeakCorrelation,
        AmplitudeMode::QuasiMarkovian,
        AmplitudeMode::Markovian,
    ];

    /// Mode of the one-photon vertex this amplitude consumes.
    pub fn vertex_mode(self) -> VertexMode {
        match self {
            AmplitudeMode::Exact | AmplitudeMode::WeakCorrelation => VertexMode::Exact,
            AmplitudeMode::QuasiMarkovian => VertexMode::QuasiMarkovian,
            AmplitudeMode::Markovian => VertexMode::Markovian,
        }
    }

    pub fn uses_pair_vertex(self) -> bool {
        self == AmplitudeMode::Exact
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AmplitudeMode::Exact => "exact",
            AmplitudeMode::WeakCorrelation => "weak_correlation",
            AmplitudeMode::QuasiMarkovian => "quasi_markovian",
            AmplitudeMode::Markovian => "markovian",
        }
    }
}

impl FromStr for AmplitudeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// `[μ′][μ]` block over the two channels.
pub type ChannelMatrix = [[C64; 2]; 2];

/// Single-photon S-matrix `S_{μ′μ}(k) = δ_{μ′μ} − 2πi g*_μ(k) g_μ′(k) G(k)`.
pub fn single_photon_s(p: &ModelParams, k: f64) -> Result<ChannelMatrix, ModelError> {
    let mut s = [[ZERO; 2]; 2];
    for mu in Channel::ALL {
        s[mu.index()][mu.index()] = C64::new(1.0, 0.0);
    }
    if p.gamma() == 0.0 {
        return Ok(s);
    }
    let kc = C64::new(k, 0.0);
    let g = dressed_green(p, k.into())?;
    for out in Channel::ALL {
        for inc in Channel::ALL {
            s[out.index()][inc.index()] -= 2.0 * PI * I * coupling_dual(p, inc, kc) * coupling(p, out, kc) * g;
        }
    }
    Ok(s)
}

/// Lazily evaluated single-photon S-matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonS {
    params: ModelParams,
}

impl SinglePhotonS {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn at(&self, k: f64) -> Result<ChannelMatrix, ModelError> {
        single_photon_s(&self.params, k)
    }

    pub fn element(&self, out: Channel, inc: Channel, k: f64) -> Result<C64, ModelError> {
        Ok(self.at(k)?[out.index()][inc.index()])
    }

    /// `max_μ |Σ_μ′ |S_μ′μ(k)|² − 1|` over the given momenta.
    pub fn unitarity_defect(&self, momenta: &[f64]) -> Result<f64, ModelError> {
        let mut worst: f64 = 0.0;
        for &k in momenta {
            let s = self.at(k)?;
            for (a, b) in s[0].iter().zip(&s[1]) {
                let sum = a.norm_sqr() + b.norm_sqr();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        Ok(worst)
    }
}

/// Smooth part of the on-shell one-photon vertex `F̄(k′, 0; 0)`, available
/// at any real `k′`.
#[derive(Debug, Clone)]
pub struct OnShellColumn {
    solved: Option<(Contour, ContourColumn)>,
}

impl OnShellColumn {
    /// The vanishing column of the Markovian and quasi-Markovian closures.
    pub fn bare() -> Self {
        Self { solved: None }
    }

    /// Solve the incoming-momentum-0 column at energy 0 on `grid`.
    pub fn solve(
        p: &ModelParams,
        grid: &MomentumGrid,
        mode: VertexMode,
        options: &SolverOptions,
    ) -> Result<Self, ScatteringError> {
        if !mode.solves_kernel() || p.gamma() == 0.0 {
            return Ok(Self::bare());
        }
        let contour = Contour::for_params(p, grid, options);
        let column = solve_f11_column(p, ZERO, &contour, false, options)?;
        Ok(Self {
            solved: Some((contour, column)),
        })
    }

    /// Take the `k = 0` column of an on-shell table.
    pub fn from_table(table: &VertexTable) -> Result<Self, ScatteringError> {
        if table.complex_energy().norm() > 1e-12 {
            return Err(ScatteringError::Incompatible(format!(
                "vertex table solved at ε = {}, amplitudes need ε = 0",
                table.energy()
            )));
        }
        let j = table.grid().center();
        if table.grid().nodes()[j].abs() > 1e-12 {
            return Err(ScatteringError::Incompatible("vertex grid has no node at k = 0".into()));
        }
        Ok(match (table.contour(), table.column(j)) {
            (Some(c), Some(col)) => Self {
                solved: Some((c.clone(), col.clone())),
            },
            _ => Self::bare(),
        })
    }

    /// Rebuild from a column solved at `ε = 0`, incoming momentum 0.
    pub fn from_parts(contour: Contour, column: ContourColumn) -> Result<Self, ScatteringError> {
        if column.energy.norm() > 1e-12 || column.incoming.norm() > 1e-12 {
            return Err(ScatteringError::Incompatible(
                "on-shell column must sit at ε = 0, k = 0".into(),
            ));
        }
        if column.residues.len() != contour.len() || column.values.len() != contour.len() {
            return Err(ScatteringError::Incompatible(format!(
                "column has {} nodes, contour has {}",
                column.residues.len(),
                contour.len()
            )));
        }
        Ok(Self {
            solved: Some((contour, column)),
        })
    }

    pub fn parts(&self) -> Option<(&Contour, &ContourColumn)> {
        self.solved.as_ref().map(|(c, col)| (c, col))
    }

    pub fn is_bare(&self) -> bool {
        self.solved.is_none()
    }

    pub fn regular(&self, k_out: f64) -> C64 {
        match &self.solved {
            Some((c, col)) => col.regular_at(c, C64::new(k_out, 0.0)),
            None => ZERO,
        }
    }

    /// `lim_{k′→∞} −k′ F̄(k′,0;0)`, the sum of the Nyström residues.
    pub fn residue_sum(&self) -> C64 {
        match &self.solved {
            Some((_, col)) => col.residues.iter().sum(),
            None => ZERO,
        }
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn green(p: &ModelParams, x: f64) -> C64 {
    propagator(p, c(x))
}

/// `(G⁻¹(y) − G⁻¹(x))/(y − x)`.
fn dq_inverse(p: &ModelParams, x: f64, y: f64) -> C64 {
    let (x, y) = (c(x), c(y));
    safe_difference_quotient(
        |z| inverse_propagator(p, z),
        |z| inverse_propagator_derivative(p, z),
        y,
        x,
        default_threshold(x, y, 1.0),
    )
}

/// `(G(k) − G(−k))/(2k)`, continuous through `k = 0`.
fn dq_green_symmetric(p: &ModelParams, k: f64) -> C64 {
    let (a, b) = (c(k), c(-k));
    safe_difference_quotient(
        |z| propagator(p, z),
        |z| propagator_derivative(p, z),
        a,
        b,
        default_threshold(a, b, 1.0),
    )
}

/// `g*_1(0)²`, the absorption factor of two carrier photons in channel 1.
fn absorption(p: &ModelParams, photons: i32) -> C64 {
    coupling_dual(p, Channel::One, ZERO).powi(photons)
}

/// Connected two-photon T-matrix `T_{μk, μ′−k}` for a pair absorbed at the
/// carrier, indexed `[μ][μ′]`. Singular at `k = 0`.
pub fn two_photon_connected_t(
    p: &ModelParams,
    f11: &VertexTable,
    k_out: f64,
) -> Result<ChannelMatrix, ScatteringError> {
    let column = OnShellColumn::from_table(f11)?;
    two_photon_connected_t_with(p, &column, k_out)
}

/// [`two_photon_connected_t`] from a prepared on-shell column.
pub fn two_photon_connected_t_with(
    p: &ModelParams,
    column: &OnShellColumn,
    k: f64,
) -> Result<ChannelMatrix, ScatteringError> {
    if k.abs() < 1e-14 {
        return Err(ScatteringError::CoincidentMomenta { k });
    }
    let core = absorption(p, 2) * green(p, 0.0) * green(p, k) * (1.0 / k + column.regular(-k));
    let mut t = [[ZERO; 2]; 2];
    for a in Channel::ALL {
        for b in Channel::ALL {
            t[a.index()][b.index()] = coupling(p, a, c(k)) * coupling(p, b, c(-k)) * core;
        }
    }
    Ok(t)
}

/// Symmetrize samples `t2c[i][μ′][μ] = T_{μ′k_i, μ−k_i}` taken on a
/// symmetric grid into `M_{μ′μ}(k) = (T_{μ′k, μ−k} + T_{μ−k, μ′k})/2`.
pub fn symmetrize_m(grid: &MomentumGrid, t2c: &[ChannelMatrix], mode: AmplitudeMode) -> TwoPhotonAmplitude {
    let n = grid.len();
    assert_eq!(t2c.len(), n, "one sample per grid node");
    let mut values: [Vec<C64>; 4] = Default::default();
    for (idx, v) in values.iter_mut().enumerate() {
        let (o, i) = (idx / 2, idx % 2);
        *v = (0..n).map(|j| (t2c[j][o][i] + t2c[n - 1 - j][i][o]) * 0.5).collect();
    }
    TwoPhotonAmplitude {
        grid: grid.clone(),
        mode,
        values,
        source: None,
    }
}

#[derive(Debug, Clone)]
struct MSource {
    params: ModelParams,
    column: OnShellColumn,
}

impl MSource {
    fn eval(&self, out: Channel, inc: Channel, k: f64) -> C64 {
        let p = &self.params;
        if p.gamma() == 0.0 {
            return ZERO;
        }
        let pref = coupling(p, out, c(k)) * coupling(p, inc, c(-k)) * absorption(p, 2) * green(p, 0.0);
        let cross = green(p, k) * self.column.regular(-k) + green(p, -k) * self.column.regular(k);
        pref * (dq_green_symmetric(p, k) + cross * 0.5)
    }

    /// `Σ_s amp_s e^{iks}/(k² + γ²)` matching `M ~ pref(k)(1 + Σr)/k²`.
    fn tail(&self, out: Channel, inc: Channel) -> TailSpec {
        let p = &self.params;
        if p.gamma() == 0.0 {
            return TailSpec::None;
        }
        let scale = absorption(p, 2) * green(p, 0.0) * (C64::new(1.0, 0.0) + self.column.residue_sum());
        let legs = [
            ((p.gamma1() / (2.0 * PI)).sqrt(), -1.0),
            ((p.gamma2() / (2.0 * PI)).sqrt(), 1.0),
        ];
        let r = p.leg_separation();
        let phase = p.carrier_phase();
        let mut terms: Vec<(f64, C64)> = Vec::new();
        for &(a_o, s_o) in &legs {
            for &(a_i, s_i) in &legs {
                // g_out(k) g_in(−k): each leg contributes e^{i s c (±k + k₀)R/2}.
                let co = s_o * out.chirality();
                let ci = s_i * inc.chirality();
                let shift = 0.5 * r * (co - ci);
                let amp = scale * a_o * a_i * (I * 0.5 * phase * (co + ci)).exp();
                match terms.iter_mut().find(|(s, _)| (s - shift).abs() < 1e-12 * (1.0 + r)) {
                    Some(t) => t.1 += amp,
                    None => terms.push((shift, amp)),
                }
            }
        }
        TailSpec::Lorentzian { terms, rate: p.gamma() }
    }
}

/// Symmetrized connected two-photon amplitude `M_{μ′μ}(k)`.
#[derive(Debug, Clone)]
pub struct TwoPhotonAmplitude {
    grid: MomentumGrid,
    mode: AmplitudeMode,
    /// Indexed `2μ′ + μ`.
    values: [Vec<C64>; 4],
    source: Option<MSource>,
}

impl TwoPhotonAmplitude {
    /// Tabulate `M` on `grid` from the on-shell vertex column.
    ///
    /// Exact and weak-correlation modes share this path.
    pub fn new(p: &ModelParams, column: OnShellColumn, grid: &MomentumGrid, mode: AmplitudeMode) -> Self {
        let column = if mode.vertex_mode().solves_kernel() {
            column
        } else {
            OnShellColumn::bare()
        };
        let source = MSource { params: *p, column };
        let mut values: [Vec<C64>; 4] = Default::default();
        for (idx, v) in values.iter_mut().enumerate() {
            let (o, i) = (Channel::ALL[idx / 2], Channel::ALL[idx % 2]);
            *v = grid.nodes().par_iter().map(|&k| source.eval(o, i, k)).collect();
        }
        Self {
            grid: grid.clone(),
            mode,
            values,
            source: Some(source),
        }
    }

    /// Solve the vertex column on `vertex_grid` and tabulate on `grid`.
    pub fn solve(
        p: &ModelParams,
        vertex_grid: &MomentumGrid,
        grid: &MomentumGrid,
        mode: AmplitudeMode,
        options: &SolverOptions,
    ) -> Result<Self, ScatteringError> {
        let column = OnShellColumn::solve(p, vertex_grid, mode.vertex_mode(), options)?;
        Ok(Self::new(p, column, grid, mode))
    }

    /// Identically vanishing amplitude.
    pub fn zero(grid: &MomentumGrid, mode: AmplitudeMode) -> Self {
        let n = grid.len();
        Self {
            grid: grid.clone(),
            mode,
            values: std::array::from_fn(|_| vec![ZERO; n]),
            source: None,
        }
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn mode(&self) -> AmplitudeMode {
        self.mode
    }

    pub fn values(&self, out: Channel, inc: Channel) -> &[C64] {
        &self.values[2 * out.index() + inc.index()]
    }

    /// `M_{μ′μ}(k)` at any real `k`: direct evaluation when the source is
    /// known, otherwise cubic interpolation (zero outside the grid).
    pub fn at(&self, out: Channel, inc: Channel, k: f64) -> C64 {
        if let Some(s) = &self.source {
            return s.eval(out, inc, k);
        }
        let k_max = self.grid.k_max();
        if k.abs() > k_max {
            return ZERO;
        }
        let axis = UniformAxis::new(-k_max, k_max, self.grid.len());
        let (start, w) = lagrange_stencil(&axis, k);
        let v = self.values(out, inc);
        (0..4).map(|m| v[start + m] * w[m]).sum()
    }

    /// Large-`k` behaviour for the Fourier transforms.
    pub fn tail(&self, out: Channel, inc: Channel) -> TailSpec {
        match &self.source {
            Some(s) => s.tail(out, inc),
            None => TailSpec::None,
        }
    }

    /// `max |M_{μ′μ}(k) − M_{μμ′}(−k)|` over the nodes.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut worst: f64 = 0.0;
        for o in Channel::ALL {
            for i in Channel::ALL {
                let a = self.values(o, i);
                let b = self.values(i, o);
                for j in 0..n {
                    worst = worst.max((a[j] - b[n - 1 - j]).norm());
                }
            }
        }
        worst
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Vertex functions entering the connected three-photon amplitude.
pub trait ConnectedVertices: Sync {
    /// Smooth part `F̄(k′, 0; E)` of the one-photon vertex.
    fn regular(&self, k_out: f64, energy: f64) -> C64;

    /// Two-photon remainder `F̄(a, b, 0, 0; 0)`.
    fn pair(&self, a: f64, b: f64) -> C64;
}

/// Bare chains: every vertex function vanishes.
#[derive(Debug, Clone, Copy, Default)]
pub struct BareVertices;

impl ConnectedVertices for BareVertices {
    fn regular(&self, _: f64, _: f64) -> C64 {
        ZERO
    }

    fn pair(&self, _: f64, _: f64) -> C64 {
        ZERO
    }
}

/// Vertex functions backed by solved tables.
#[derive(Debug, Clone, Copy)]
pub struct SolvedVertices<'a> {
    pub family: &'a EnergyFamilyTable,
    pub pair: Option<&'a TwoPhotonVertexSlice>,
}

impl ConnectedVertices for SolvedVertices<'_> {
    fn regular(&self, k_out: f64, energy: f64) -> C64 {
        self.family.regular(k_out, energy)
    }

    fn pair(&self, a: f64, b: f64) -> C64 {
        self.pair.map_or(ZERO, |s| s.value(a, b))
    }
}

/// Channel triples `(μ₁′, μ₂′, μ₃′)` in table order `4μ₁′ + 2μ₂′ + μ₃′`.
pub fn channel_triples() -> [[Channel; 3]; 8] {
    std::array::from_fn(|idx| {
        [
            Channel::ALL[(idx >> 2) & 1],
            Channel::ALL[(idx >> 1) & 1],
            Channel::ALL[idx & 1],
        ]
    })
}

pub fn triple_index(ch: [Channel; 3]) -> usize {
    4 * ch[0].index() + 2 * ch[1].index() + ch[2].index()
}

/// Coupling factors `g*_1(0)³ g_μ₁′(k₁′) g_μ₂′(k₂′) g_μ₃′(k₃′)`.
pub fn three_photon_prefactor(p: &ModelParams, channels: [Channel; 3], momenta: [f64; 3]) -> C64 {
    channels
        .iter()
        .zip(momenta)
        .fold(absorption(p, 3), |acc, (&mu, k)| acc * coupling(p, mu, c(k)))
}

/// Channel-stripped connected three-photon amplitude for outgoing momenta
/// `(a, b, c)` with `a + b + c = 0`.
///
/// The pole `1/a` of the cross-term bracket is removable; the bracket is
/// evaluated as a difference quotient in `a` at fixed `b`.
pub fn connected_core(p: &ModelParams, v: &dyn ConnectedVertices, momenta: [f64; 3], include_pair: bool) -> C64 {
    let [a, b, cc] = momenta;
    let g0 = green(p, 0.0);

    let term1 = green(p, cc) * g0 * g0 * green(p, -a) * green(p, b) * dq_inverse(p, -a, b) * dq_inverse(p, -a, 0.0);

    // Φ(x) with c = −x − b; Φ(0) = 0 analytically.
    let phi = |x: f64| -> C64 {
        let cx = -x - b;
        let gc = green(p, cx);
        let ga = green(p, x);
        let chains = g0 * g0 * gc * (g0 * dq_inverse(p, 0.0, cx) - ga * dq_inverse(p, -b, 0.0));
        let crossed = ga * g0 * green(p, -b) * v.regular(b, 0.0) - g0 * gc * green(p, -x) * v.regular(b, -x);
        chains + crossed
    };
    let h = 1e-5 * (1.0 + b.abs());
    let dphi = |z: C64| (phi(z.re + h) - phi(z.re - h)) / (2.0 * h);
    let term2 = safe_difference_quotient(|z| phi(z.re), dphi, c(a), ZERO, default_threshold(c(a), ZERO, 1.0));

    let term3 = g0 * green(p, a) * v.regular(b, -cc) * green(p, -cc) * v.regular(cc, 0.0);

    let mut total = term1 + term2 + term3;
    if include_pair {
        total += g0 * green(p, a) * v.pair(b, cc);
    }
    total
}

/// Average of [`connected_core`] over the six orderings of the momenta.
pub fn symmetric_core(p: &ModelParams, v: &dyn ConnectedVertices, momenta: [f64; 3], include_pair: bool) -> C64 {
    let [x, y, z] = momenta;
    let perms = [[x, y, z], [x, z, y], [y, x, z], [y, z, x], [z, x, y], [z, y, x]];
    perms
        .iter()
        .map(|&m| connected_core(p, v, m, include_pair))
        .sum::<C64>()
        / 6.0
}

fn check_inputs(
    family: &EnergyFamilyTable,
    f12: Option<&TwoPhotonVertexSlice>,
    mode: AmplitudeMode,
) -> Result<(), ScatteringError> {
    if mode.uses_pair_vertex() && f12.is_none() {
        return Err(ScatteringError::MissingF12);
    }
    if mode.vertex_mode().solves_kernel() && family.mode() != VertexMode::Exact {
        return Err(ScatteringError::Incompatible(format!(
            "{} amplitude needs an exact vertex family, got {}",
            mode.as_str(),
            family.mode().as_str()
        )));
    }
    Ok(())
}

/// Connected three-photon T-matrix for outgoing `(−k−q, k, q)`, per
/// channel triple in [`channel_triples`] order.
pub fn three_photon_connected_t(
    p: &ModelParams,
    family: &EnergyFamilyTable,
    f12: Option<&TwoPhotonVertexSlice>,
    k: f64,
    q: f64,
    mode: AmplitudeMode,
) -> Result<[C64; 8], ScatteringError> {
    check_inputs(family, f12, mode)?;
    let momenta = [-k - q, k, q];
    let core = if p.gamma() == 0.0 {
        ZERO
    } else if mode.vertex_mode().solves_kernel() {
        let v = SolvedVertices { family, pair: f12 };
        connected_core(p, &v, momenta, mode.uses_pair_vertex())
    } else {
        connected_core(p, &BareVertices, momenta, false)
    };
    let triples = channel_triples();
    Ok(std::array::from_fn(|t| {
        three_photon_prefactor(p, triples[t], momenta) * core
    }))
}

/// Symmetrized connected three-photon amplitude `Q(−k−q, k, q)` over a
/// `(k, q)` grid.
#[derive(Debug, Clone)]
pub struct ThreePhotonAmplitude {
    grid: MomentumGrid,
    mode: AmplitudeMode,
    /// Row-major over `(k, q)`, one entry per channel triple.
    values: Vec<[C64; 8]>,
}

impl ThreePhotonAmplitude {
    /// Tabulate `Q` from vertex functions.
    pub fn new(p: &ModelParams, vertices: &dyn ConnectedVertices, grid: &MomentumGrid, mode: AmplitudeMode) -> Self {
        let include_pair = mode.uses_pair_vertex();
        let triples = channel_triples();
        let nodes = grid.nodes();
        let n = nodes.len();
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let momenta = [-nodes[idx / n] - nodes[idx % n], nodes[idx / n], nodes[idx % n]];
                let core = if p.gamma() == 0.0 {
                    ZERO
                } else {
                    symmetric_core(p, vertices, momenta, include_pair)
                };
                std::array::from_fn(|t| three_photon_prefactor(p, triples[t], momenta) * core)
            })
            .collect();
        Self {
            grid: grid.clone(),
            mode,
            values,
        }
    }

    /// Tabulate `Q` from solved tables, checking the inputs match `mode`.
    pub fn from_tables(
        p: &ModelParams,
        family: &EnergyFamilyTable,
        f12: Option<&TwoPhotonVertexSlice>,
        grid: &MomentumGrid,
        mode: AmplitudeMode,
    ) -> Result<Self, ScatteringError> {
        check_inputs(family, f12, mode)?;
        Ok(if mode.vertex_mode().solves_kernel() {
            Self::new(p, &SolvedVertices { family, pair: f12 }, grid, mode)
        } else {
            Self::new(p, &BareVertices, grid, mode)
        })
    }

    pub fn zero(grid: &MomentumGrid, mode: AmplitudeMode) -> Self {
        Self {
            grid: grid.clone(),
            mode,
            values: vec![[ZERO; 8]; grid.len() * grid.len()],
        }
    }

    /// Rebuild from [`raw`](Self::raw) entries.
    pub fn from_raw(grid: &MomentumGrid, mode: AmplitudeMode, values: Vec<[C64; 8]>) -> Result<Self, ScatteringError> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(ScatteringError::Incompatible(format!(
                "{} entries for a {n}×{n} grid",
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            mode,
            values,
        })
    }

    /// Row-major over `(k, q)`, triples in [`channel_triples`] order.
    pub fn raw(&self) -> &[[C64; 8]] {
        &self.values
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn mode(&self) -> AmplitudeMode {
        self.mode
    }

    /// `Q` at grid node `(k_i, q_j)` for a channel triple.
    pub fn value(&self, channels: [Channel; 3], i: usize, j: usize) -> C64 {
        self.values[i * self.grid.len() + j][triple_index(channels)]
    }

    /// Row-major `(k, q)` table for one channel triple.
    pub fn table(&self, channels: [Channel; 3]) -> Vec<C64> {
        let t = triple_index(channels);
        self.values.iter().map(|v| v[t]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Average an arbitrary three-photon evaluator over the six simultaneous
/// permutations of its (channel, momentum) pairs.
pub fn symmetrize_q<F>(t3c: F, grid: &MomentumGrid, mode: AmplitudeMode) -> ThreePhotonAmplitude
where
    F: Fn([Channel; 3], [f64; 3]) -> C64 + Sync,
{
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let triples = channel_triples();
    let nodes = grid.nodes();
    let n = nodes.len();
    let values = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let m = [-nodes[idx / n] - nodes[idx % n], nodes[idx / n], nodes[idx % n]];
            std::array::from_fn(|t| {
                let ch = triples[t];
                PERMS
                    .iter()
                    .map(|s| t3c([ch[s[0]], ch[s[1]], ch[s[2]]], [m[s[0]], m[s[1]], m[s[2]]]))
                    .sum::<C64>()
                    / 6.0
            })
        })
        .collect();
    ThreePhotonAmplitude {
        grid: grid.clone(),
        mode,
        values,
    }
}
