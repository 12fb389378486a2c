//! One function per observable; each writes its CSV and sidecar.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use wqed::{
    observables::{
        coherence2_pairs, coherence3_triples, dominant_peaks, lambert_poles, spectral_density_with, track_ridges,
        CoherenceResult, DetuningScan, KinkOptions, INDEPENDENT_TRIPLES,
    },
    scattering::{
        single_photon_s, AmplitudeMode, BareVertices, OnShellColumn, ThreePhotonAmplitude, TwoPhotonAmplitude,
    },
    vertex::{solve_f11_family, solve_f12_slice, Contour, ContourColumn, FamilyOptions, SliceOptions, SolverOptions},
    Channel, ModelParams, ObservableError, C64,
};
use wqed_numerics::MomentumGrid;

use crate::{
    cache::{self, Cache},
    config::{grid, linspace, Observable, RunConfig},
    output::{self, number, Cell, Table},
    validate, CliError,
};

/// What a run produced, for the summary printed by the binary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub observable: Observable,
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Compute the configured observable and write its artifacts.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let mut ctx = Context::new(config)?;
    let (files, summary) = match config.run.observable {
        Observable::Spectrum => spectrum(&mut ctx)?,
        Observable::G2 => g2(&mut ctx)?,
        Observable::G3 => g3(&mut ctx)?,
        Observable::Poles => poles(&mut ctx)?,
        Observable::DetuningScan => scan(&mut ctx)?,
        Observable::Validate => validate::run(&mut ctx)?,
    };
    Ok(Outcome {
        observable: config.run.observable,
        files,
        summary,
        cache_hits: ctx.hits,
        cache_misses: ctx.misses,
    })
}

pub(crate) type Artifacts = (Vec<PathBuf>, Vec<(String, String)>);

/// Shared state of one run: parameters, solver options and the cache.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub params: ModelParams,
    pub solver: SolverOptions,
    cache: Cache,
    hits: usize,
    misses: usize,
}

#[derive(Serialize)]
struct ColumnKey<'a> {
    params: &'a ModelParams,
    k_max: f64,
    n_points: usize,
    solver: String,
}

#[derive(Serialize)]
struct ThreePhotonKey<'a> {
    params: &'a ModelParams,
    mode: AmplitudeMode,
    q_k_max: f64,
    q_points: usize,
    path_k_max: f64,
    path_points: usize,
    energy_grid_points: usize,
    table_points: usize,
    slice_points: usize,
    f12_max_iter: Option<usize>,
    f12_tolerance: f64,
    family_refine: f64,
    solver: String,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self, CliError> {
        let cache = if config.run.cache {
            Cache::new(config.run.output_dir.join("cache"))
        } else {
            Cache::disabled()
        };
        Ok(Self {
            config,
            params: config.params()?,
            solver: SolverOptions::default(),
            cache,
            hits: 0,
            misses: 0,
        })
    }

    /// On-shell vertex column at `p` on the configured vertex path, read
    /// from the cache when an identical solve is stored.
    pub fn column(&mut self, p: &ModelParams, mode: AmplitudeMode) -> Result<OnShellColumn, CliError> {
        if !mode.vertex_mode().solves_kernel() || p.gamma() == 0.0 {
            return Ok(OnShellColumn::bare());
        }
        let vertex_grid = self.config.vertex_grid()?;
        let key = cache::key(
            "column",
            &ColumnKey {
                params: p,
                k_max: vertex_grid.k_max(),
                n_points: vertex_grid.len(),
                solver: format!("{:?}", self.solver),
            },
        );
        let contour = Contour::for_params(p, &vertex_grid, &self.solver);
        if let Some(data) = self.cache.load("column", &key) {
            if data.len() == 2 * contour.len() {
                let (values, residues) = data.split_at(contour.len());
                let column = ContourColumn {
                    energy: C64::new(0.0, 0.0),
                    incoming: C64::new(0.0, 0.0),
                    values: values.to_vec(),
                    residues: residues.to_vec(),
                    residues_de: None,
                };
                self.hits += 1;
                return Ok(OnShellColumn::from_parts(contour, column)?);
            }
        }
        self.misses += 1;
        let column = OnShellColumn::solve(p, &vertex_grid, mode.vertex_mode(), &self.solver)?;
        if let Some((_, col)) = column.parts() {
            let data: Vec<C64> = col.values.iter().chain(&col.residues).copied().collect();
            self.store("column", &key, &data)?;
        }
        Ok(column)
    }

    pub fn two_photon(&mut self, p: &ModelParams, grid: &MomentumGrid) -> Result<TwoPhotonAmplitude, CliError> {
        let mode = self.config.run.mode;
        let column = self.column(p, mode)?;
        Ok(TwoPhotonAmplitude::new(p, column, grid, mode))
    }

    /// Three-photon table; solved modes go through the vertex family and,
    /// for the exact mode, the two-photon vertex slice.
    pub fn three_photon(&mut self) -> Result<ThreePhotonAmplitude, CliError> {
        let n = &self.config.numerics;
        let mode = self.config.run.mode;
        let p = self.params;
        let q_grid = grid(n.q_k_max, n.q_points)?;
        if !mode.vertex_mode().solves_kernel() {
            return Ok(ThreePhotonAmplitude::new(&p, &BareVertices, &q_grid, mode));
        }
        let key = cache::key(
            "q",
            &ThreePhotonKey {
                params: &p,
                mode,
                q_k_max: n.q_k_max,
                q_points: n.q_points,
                path_k_max: n.path_k_max,
                path_points: n.path_points,
                energy_grid_points: n.energy_grid_points,
                table_points: n.table_points,
                slice_points: n.slice_points,
                f12_max_iter: n.f12_max_iter,
                f12_tolerance: n.tolerances.f12,
                family_refine: n.tolerances.family_refine,
                solver: format!("{:?}", self.solver),
            },
        );
        if let Some(data) = self.cache.load("q", &key) {
            if data.len() == 8 * q_grid.len() * q_grid.len() {
                let values = data.chunks_exact(8).map(|c| std::array::from_fn(|t| c[t])).collect();
                self.hits += 1;
                return Ok(ThreePhotonAmplitude::from_raw(&q_grid, mode, values)?);
            }
        }
        self.misses += 1;
        let path = grid(n.path_k_max, n.path_points)?;
        let half = 0.5 * n.path_k_max;
        let energies = linspace(-half, half, n.energy_grid_points);
        let family = solve_f11_family(
            &p,
            &energies,
            &grid(half, n.table_points)?,
            mode.vertex_mode(),
            &FamilyOptions {
                contour_grid: Some(path.clone()),
                solver: self.solver,
                refine_tolerance: Some(n.tolerances.family_refine),
                ..FamilyOptions::default()
            },
        )?;
        let slice = if mode.uses_pair_vertex() {
            Some(solve_f12_slice(
                &p,
                &family,
                &SliceOptions {
                    contour_grid: path,
                    solver: self.solver,
                    table_extent: Some(2.0 * n.q_k_max),
                    table_points: n.slice_points,
                    tolerance: n.tolerances.f12,
                    max_iterations: n.f12_max_iter.unwrap_or(0),
                    ..SliceOptions::default()
                },
            )?)
        } else {
            None
        };
        let q = ThreePhotonAmplitude::from_tables(&p, &family, slice.as_ref(), &q_grid, mode)?;
        let flat: Vec<C64> = q.raw().iter().flatten().copied().collect();
        self.store("q", &key, &flat)?;
        Ok(q)
    }

    fn store(&self, kind: &str, key: &[u8; 32], data: &[C64]) -> Result<(), CliError> {
        self.cache.store(kind, key, data).map_err(|e| {
            let path = self.cache.path(kind, key).unwrap_or_default();
            CliError::io(&path, e)
        })
    }
}

fn label(channels: &[u8]) -> String {
    channels.iter().map(|c| c.to_string()).collect()
}

/// Channels whose carrier transmission is large enough to normalize by.
fn usable(p: &ModelParams) -> Result<[bool; 2], CliError> {
    let s = single_photon_s(p, 0.0)?;
    Ok([0, 1].map(|i| s[i][0].norm() >= wqed::observables::NORMALIZATION_FLOOR))
}

fn spectrum(ctx: &mut Context) -> Result<Artifacts, CliError> {
    let cfg = ctx.config;
    let p = ctx.params;
    let m = ctx.two_photon(&p, &cfg.amplitude_grid()?)?;
    let s = spectral_density_with(&p, &m, Some(cfg.numerics.tolerances.power))?;
    let total = s.total();
    let mut table = Table::new(["k", "s_inel_1", "s_inel_2", "s_inel_total"]);
    for (j, &k) in s.k.iter().enumerate() {
        table.push(vec![
            k.into(),
            s.s_inel[0][j].into(),
            s.s_inel[1][j].into(),
            total[j].into(),
        ]);
    }
    let peaks = dominant_peaks(&s.k, &total, 2);
    let summary = json!({
        "peaks": peaks,
        "s_el_weight": s.s_el_weight,
        "s_el_correction": s.s_el_correction,
        "power_residual": s.power_residual,
        "power_scale": s.power_scale,
        "relative_residual": s.relative_residual(),
    });
    let files = output::write(cfg, "spectrum", &table, &summary)?;
    let mut lines = vec![("relative power residual".to_owned(), number(s.relative_residual()))];
    for (i, pk) in peaks.iter().enumerate() {
        lines.push((
            format!("peak {}", i + 1),
            format!("k = {:.6}, fwhm = {:.6}", pk.k, pk.fwhm),
        ));
    }
    Ok((files, lines))
}

fn value_at_zero(taus: &[f64], values: &[f64]) -> Option<f64> {
    taus.iter().position(|&t| t == 0.0).map(|i| values[i])
}

fn g2(ctx: &mut Context) -> Result<Artifacts, CliError> {
    let cfg = ctx.config;
    let p = ctx.params;
    let ok = usable(&p)?;
    let pairs: Vec<[Channel; 2]> = Channel::ALL
        .iter()
        .flat_map(|&a| Channel::ALL.map(|b| [a, b]))
        .filter(|pair| pair.iter().all(|c| ok[c.index()]))
        .collect();
    if pairs.is_empty() {
        return Err(degenerate(&p)?.into());
    }
    let m = ctx.two_photon(&p, &cfg.amplitude_grid()?)?;
    let taus = cfg.taus();
    let c2 = coherence2_pairs(&p, &m, &taus, &pairs, &KinkOptions::default())?;
    let mut columns = vec!["tau".to_owned()];
    columns.extend(c2.series.iter().map(|s| format!("c2_{}", label(&s.channels))));
    let mut table = Table::new(columns);
    for (i, &t) in taus.iter().enumerate() {
        let mut row = vec![Cell::from(t)];
        row.extend(c2.series.iter().map(|s| Cell::from(s.values[i])));
        table.push(row);
    }
    let summary = coherence_summary(&c2, |s| value_at_zero(&taus, &s.values), "tau");
    let files = output::write(cfg, "g2", &table, &summary)?;
    let mut lines = Vec::new();
    for s in &c2.series {
        if let Some(v) = value_at_zero(&taus, &s.values) {
            lines.push((format!("C2_{}(0)", label(&s.channels)), format!("{v:.6}")));
        }
    }
    lines.push(("kinks".into(), kink_line(&c2)));
    Ok((files, lines))
}

fn degenerate(p: &ModelParams) -> Result<ObservableError, CliError> {
    let s = single_photon_s(p, 0.0)?;
    Ok(ObservableError::DegenerateNormalization {
        channel: 1,
        magnitude: s[0][0].norm(),
    })
}

fn coherence_summary(
    c: &CoherenceResult,
    zero: impl Fn(&wqed::observables::CoherenceSeries) -> Option<f64>,
    axis: &str,
) -> Value {
    let at_zero: serde_json::Map<String, Value> =
        c.series.iter().map(|s| (label(&s.channels), json!(zero(s)))).collect();
    let kinks: Vec<Value> = c
        .kink_report
        .iter()
        .map(|k| json!({"channels": label(&k.channels), axis: k.tau, "jump": k.jump, "background": k.background}))
        .collect();
    json!({ "at_zero": at_zero, "kinks": kinks })
}

fn kink_line(c: &CoherenceResult) -> String {
    let mut taus: Vec<f64> = c.kink_report.iter().map(|k| k.tau).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let parts: Vec<String> = taus.iter().map(|t| format!("{t:.3}")).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(" ")
    }
}

fn g3(ctx: &mut Context) -> Result<Artifacts, CliError> {
    let cfg = ctx.config;
    let p = ctx.params;
    let ok = usable(&p)?;
    let triples: Vec<[Channel; 3]> = INDEPENDENT_TRIPLES
        .into_iter()
        .filter(|t| t.iter().all(|c| ok[c.index()]))
        .collect();
    if triples.is_empty() {
        return Err(degenerate(&p)?.into());
    }
    let m = ctx.two_photon(&p, &cfg.amplitude_grid()?)?;
    let q = ctx.three_photon()?;
    let taus = cfg.taus();
    let c3 = coherence3_triples(&p, &q, &m, &taus, &triples, &KinkOptions::default())?;
    let n = taus.len();
    let mut columns = vec!["tau_prime".to_owned(), "tau".to_owned()];
    columns.extend(c3.series.iter().map(|s| format!("c3_{}", label(&s.channels))));
    let mut table = Table::new(columns);
    for (a, &tp) in taus.iter().enumerate() {
        for (b, &t) in taus.iter().enumerate() {
            let mut row = vec![Cell::from(tp), Cell::from(t)];
            row.extend(c3.series.iter().map(|s| Cell::from(s.values[a * n + b])));
            table.push(row);
        }
    }
    let origin = taus.iter().position(|&t| t == 0.0);
    let at_origin = |s: &wqed::observables::CoherenceSeries| origin.map(|i| s.values[i * n + i]);
    let summary = coherence_summary(&c3, at_origin, "tau_prime_minus_tau");
    let files = output::write(cfg, "g3", &table, &summary)?;
    let mut lines = Vec::new();
    for s in &c3.series {
        if let Some(v) = at_origin(s) {
            lines.push((format!("C3_{}(0,0)", label(&s.channels)), format!("{v:.6}")));
        }
    }
    lines.push(("ridges at tau' - tau".into(), kink_line(&c3)));
    Ok((files, lines))
}

fn pole_rows(
    table: &mut Table,
    delta: Option<f64>,
    p: &ModelParams,
    branches: &[i64],
    tol: f64,
) -> Result<f64, CliError> {
    let poles = lambert_poles(p, branches)?;
    let mut worst: f64 = 0.0;
    for pole in &poles {
        if !(pole.residual < tol) {
            return Err(ObservableError::ResidualTooLarge {
                branch: pole.branch,
                residual: pole.residual,
            }
            .into());
        }
        worst = worst.max(pole.residual);
        let mut row = Vec::new();
        if let Some(d) = delta {
            row.push(Cell::from(d));
        }
        row.extend([
            Cell::from(pole.branch),
            Cell::from(pole.family.as_str()),
            Cell::from(pole.pole.re),
            Cell::from(pole.pole.im),
            Cell::from(pole.linewidth()),
            Cell::from(pole.residual),
        ]);
        table.push(row);
    }
    Ok(worst)
}

const POLE_COLUMNS: [&str; 6] = ["branch", "family", "re", "im", "linewidth", "residual"];

fn poles(ctx: &mut Context) -> Result<Artifacts, CliError> {
    let cfg = ctx.config;
    let mut table = Table::new(POLE_COLUMNS);
    let worst = pole_rows(
        &mut table,
        None,
        &ctx.params,
        &cfg.run.branches,
        cfg.numerics.tolerances.pole_residual,
    )?;
    let summary = json!({ "count": table.rows.len(), "max_residual": worst });
    let files = output::write(cfg, "poles", &table, &summary)?;
    Ok((
        files,
        vec![
            ("poles".into(), table.rows.len().to_string()),
            ("max residual".into(), number(worst)),
        ],
    ))
}

fn scan(ctx: &mut Context) -> Result<Artifacts, CliError> {
    let cfg = ctx.config;
    let deltas = cfg.deltas();
    let grid = grid(cfg.numerics.scan_k_max, cfg.numerics.scan_points)?;
    let mut spectra = Vec::with_capacity(deltas.len());
    for &d in &deltas {
        let p = ctx.params.with_detuning(d);
        let m = ctx.two_photon(&p, &grid)?;
        // The scan grid is narrow, so the power balance is not closed on it.
        spectra.push(spectral_density_with(&p, &m, None)?);
    }
    let scan = DetuningScan::from_spectra(&deltas, spectra);
    let mut table = Table::new(["delta", "k", "s_inel_1", "s_inel_2", "s_inel_total"]);
    for (d, s) in deltas.iter().zip(&scan.spectra) {
        let total = s.total();
        for (j, &k) in s.k.iter().enumerate() {
            table.push(vec![
                (*d).into(),
                k.into(),
                s.s_inel[0][j].into(),
                s.s_inel[1][j].into(),
                total[j].into(),
            ]);
        }
    }
    let branches = &cfg.run.branches;
    let ridges = track_ridges(&ctx.params, &scan, branches)?;
    let mut pole_table = Table::new(std::iter::once("delta").chain(POLE_COLUMNS));
    let mut worst: f64 = 0.0;
    for &d in &deltas {
        let p = ctx.params.with_detuning(d);
        worst = worst.max(pole_rows(
            &mut pole_table,
            Some(d),
            &p,
            branches,
            cfg.numerics.tolerances.pole_residual,
        )?);
    }
    let within = ridges.iter().filter(|r| r.within).count();
    let summary = json!({
        "asymmetry": scan.asymmetry,
        "ridges": ridges,
        "ridges_within_linewidth": within,
        "max_pole_residual": worst,
    });
    let mut files = output::write(cfg, "detuning_scan", &table, &summary)?;
    let pole_summary = json!({ "max_residual": worst });
    files.extend(output::write(cfg, "detuning_scan_poles", &pole_table, &pole_summary)?);
    Ok((
        files,
        vec![
            ("detunings".into(), deltas.len().to_string()),
            (
                "ridges within one linewidth".into(),
                format!("{within}/{}", ridges.len()),
            ),
            ("asymmetry".into(), scan.asymmetry.map_or("n/a".into(), number)),
        ],
    ))
}
