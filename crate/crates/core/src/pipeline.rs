//! End-to-end commands: generate data, fit anchors, train, evaluate, sweep
//! the ablation grid and render reports. Every file is written atomically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::anchors::{AnchorLibrary, EvolveSchedule, KMeansResult};
use crate::data::record::write_atomic;
use crate::data::{
    generate_dataset, load_anchors, load_checkpoint, load_dataset, read_csv, save_anchors, save_checkpoint,
    save_dataset, write_csv, Checkpoint, Dataset, EpochRow, GenConfig, LayerRow, MetricsRow,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::LengthMode;
use crate::loss::ClsKind;
use crate::metrics::{evaluate, EvalConfig, MetricsBundle, ScoreMode};
use crate::model::{init_model, ModelConfig};
use crate::train::{train, AssignConfig, EpochLog, Paradigm, TrainConfig};

/// Parses flat `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse value `{value}` for key `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects on|off, got `{value}`"))),
    }
}

pub fn gen_config_from_kv(text: &str) -> Result<GenConfig> {
    let mut cfg = GenConfig::default();
    for (k, v) in parse_kv(text)? {
        let v = v.as_str();
        match k.as_str() {
            "num_scenes" => cfg.num_scenes = parse_value(&k, v)?,
            "eval_fraction" => cfg.eval_fraction = parse_value(&k, v)?,
            "num_modes" => cfg.num_modes = parse_value(&k, v)?,
            "mode_prior_sharpness" => cfg.mode_prior_sharpness = parse_value(&k, v)?,
            "noise_sigma" => cfg.noise_sigma = parse_value(&k, v)?,
            "horizon" => cfg.horizon = parse_value(&k, v)?,
            "dt" => cfg.dt = parse_value(&k, v)?,
            "seed" => cfg.seed = parse_value(&k, v)?,
            "speed_min" => cfg.speed_min = parse_value(&k, v)?,
            "speed_max" => cfg.speed_max = parse_value(&k, v)?,
            "hard_turn_rate" => cfg.hard_turn_rate = parse_value(&k, v)?,
            "soft_turn_rate" => cfg.soft_turn_rate = parse_value(&k, v)?,
            "brake_factor" => cfg.brake_factor = parse_value(&k, v)?,
            "hard_turn_speed_factor" => cfg.hard_turn_speed_factor = parse_value(&k, v)?,
            "jitter" => cfg.jitter = parse_value(&k, v)?,
            "num_categories" => cfg.num_categories = parse_value(&k, v)?,
            _ => return Err(Error::Config(format!("unknown config key `{k}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub num_scenes: usize,
    pub train_count: usize,
    pub mode_histogram: Vec<usize>,
}

pub fn gen_data(cfg: &GenConfig, out: &Path, exec: Exec) -> Result<GenSummary> {
    let ds = generate_dataset(cfg, exec)?;
    save_dataset(&ds, out)?;
    let mut mode_histogram = vec![0; ds.num_modes];
    for s in &ds.scenes {
        mode_histogram[s.latent_mode] += 1;
    }
    Ok(GenSummary {
        num_scenes: ds.scenes.len(),
        train_count: ds.train_count,
        mode_histogram,
    })
}

pub const DEFAULT_KMEANS_ITERS: usize = 100;

/// Fits `k` intention points per category on training endpoints.
pub fn fit_anchors(ds: &Dataset, k: usize, seed: u64) -> Result<(AnchorLibrary, Vec<KMeansResult>)> {
    AnchorLibrary::fit(&ds.train_endpoints_by_category(), k, seed, DEFAULT_KMEANS_ITERS)
}

pub fn make_anchors(data: &Path, k: usize, seed: u64, out: &Path) -> Result<Vec<KMeansResult>> {
    let ds = load_dataset(data)?;
    let (lib, fits) = fit_anchors(&ds, k, seed)?;
    save_anchors(&lib, out)?;
    Ok(fits)
}

/// Everything `train` needs beyond the data and anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub paradigm: Paradigm,
    pub evolve_layers: Vec<usize>,
    pub distinct: bool,
    pub cls: ClsKind,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub length_mode: LengthMode,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Eda,
            evolve_layers: vec![2, 4],
            distinct: true,
            cls: ClsKind::Bce,
            epochs: 30,
            lr: 1e-3,
            batch_size: 64,
            seed: 0,
            hidden_dim: 64,
            num_layers: 6,
            length_mode: LengthMode::ArcLength,
        }
    }
}

impl TrainSpec {
    /// Short identifier, e.g. `eda-e2-on-bce`.
    pub fn config_id(&self) -> String {
        format!(
            "{}-e{}-{}-{}",
            self.paradigm.name(),
            self.evolve_layers.len(),
            if self.distinct { "on" } else { "off" },
            self.cls.name()
        )
    }

    pub fn configs(&self, ds: &Dataset, anchors: &AnchorLibrary) -> Result<(ModelConfig, TrainConfig)> {
        if anchors.num_categories() < ds.num_categories() {
            return Err(Error::Shape(format!(
                "dataset has {} categories, anchors cover {}",
                ds.num_categories(),
                anchors.num_categories()
            )));
        }
        let model = ModelConfig {
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            num_components: anchors.num_anchors(),
            seed: self.seed,
            ..ModelConfig::new(ds.context_dim, ds.horizon, ds.dt)
        };
        let assign = AssignConfig {
            paradigm: self.paradigm,
            schedule: EvolveSchedule::new(self.num_layers, self.evolve_layers.clone())?,
            distinct: self.distinct,
            length_mode: self.length_mode,
        };
        assign.validate(self.num_layers)?;
        let train = TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::new(assign, self.cls)
        };
        Ok((model, train))
    }
}

/// Initialises and trains a model on the training split.
pub fn train_model(
    ds: &Dataset,
    anchors: &AnchorLibrary,
    spec: &TrainSpec,
    exec: Exec,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    let (model_cfg, train_cfg) = spec.configs(ds, anchors)?;
    let mut params = init_model(&model_cfg, anchors)?;
    let logs = train(&mut params, ds.train(), &train_cfg, exec, on_epoch)?;
    Ok((
        Checkpoint {
            params,
            train: train_cfg,
        },
        logs,
    ))
}

pub fn epoch_rows(logs: &[EpochLog]) -> Vec<EpochRow> {
    logs.iter()
        .map(|l| EpochRow {
            epoch: l.epoch,
            total: l.loss.total,
            reg: l.loss.reg,
            cls: l.loss.cls,
        })
        .collect()
}

/// Training log path written next to a checkpoint.
pub fn train_log_path(model_out: &Path) -> PathBuf {
    model_out.with_file_name("train_log.csv")
}

pub fn train_cmd(
    data: &Path,
    anchors: &Path,
    spec: &TrainSpec,
    out: &Path,
    exec: Exec,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    let ds = load_dataset(data)?;
    let lib = load_anchors(anchors)?;
    let (ck, logs) = train_model(&ds, &lib, spec, exec, on_epoch)?;
    save_checkpoint(&ck, out)?;
    write_csv(&epoch_rows(&logs), &train_log_path(out))?;
    Ok(logs)
}

fn check_compatible(ds: &Dataset, ck: &Checkpoint) -> Result<()> {
    let cfg = &ck.params.config;
    if ds.horizon != cfg.horizon {
        return Err(Error::Shape(format!(
            "inconsistent horizons: data {} vs model {}",
            ds.horizon, cfg.horizon
        )));
    }
    if ds.context_dim != cfg.context_dim {
        return Err(Error::Shape(format!(
            "inconsistent context dims: data {} vs model {}",
            ds.context_dim, cfg.context_dim
        )));
    }
    Ok(())
}

/// Per-layer metrics of a checkpoint on the held-out split.
pub fn evaluate_checkpoint(ds: &Dataset, ck: &Checkpoint, cfg: &EvalConfig, exec: Exec) -> Result<Vec<MetricsBundle>> {
    check_compatible(ds, ck)?;
    evaluate(&ck.params, ds.eval(), ck.train.cls_kind, cfg, exec)
}

pub fn checkpoint_config_id(ck: &Checkpoint) -> String {
    let a = &ck.train.assign;
    format!(
        "{}-e{}-{}-{}",
        a.paradigm.name(),
        a.schedule.evolve_times(),
        if a.distinct { "on" } else { "off" },
        ck.train.cls_kind.name()
    )
}

pub fn metrics_row(
    config_id: &str,
    evolve_times: usize,
    distinct: bool,
    cls: ClsKind,
    mode: ScoreMode,
    b: &MetricsBundle,
) -> MetricsRow {
    MetricsRow {
        config_id: config_id.to_string(),
        evolve_times,
        distinct: if distinct { "on" } else { "off" }.into(),
        cls_kind: cls.name().into(),
        score_mode: mode.name().into(),
        min_ade: b.min_ade,
        min_fde: b.min_fde,
        miss_rate: b.miss_rate,
        map: b.map(mode),
    }
}

pub fn layer_rows(config_id: &str, per_layer: &[MetricsBundle]) -> Vec<LayerRow> {
    per_layer
        .iter()
        .enumerate()
        .map(|(l, b)| LayerRow {
            config_id: config_id.to_string(),
            layer: l + 1,
            min_fde: b.min_fde,
            min_ade: b.min_ade,
            miss_rate: b.miss_rate,
        })
        .collect()
}

/// `<dir>/<stem>_layers.csv` beside a metrics file.
pub fn layers_path(metrics: &Path) -> PathBuf {
    let stem = metrics.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    metrics.with_file_name(format!("{stem}_layers.csv"))
}

pub struct EvalOutcome {
    pub row: MetricsRow,
    pub per_layer: Vec<MetricsBundle>,
}

pub fn eval_cmd(data: &Path, model: &Path, cfg: &EvalConfig, mode: ScoreMode, out: &Path, exec: Exec) -> Result<EvalOutcome> {
    let ds = load_dataset(data)?;
    let ck = load_checkpoint(model)?;
    let per_layer = evaluate_checkpoint(&ds, &ck, cfg, exec)?;
    let id = checkpoint_config_id(&ck);
    let a = &ck.train.assign;
    let last = per_layer.last().ok_or(Error::EmptyInput("decoder layers"))?;
    let row = metrics_row(&id, a.schedule.evolve_times(), a.distinct, ck.train.cls_kind, mode, last);
    write_csv(std::slice::from_ref(&row), out)?;
    write_csv(&layer_rows(&id, &per_layer), &layers_path(out))?;
    Ok(EvalOutcome { row, per_layer })
}

/// One configuration of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCell {
    pub evolve_times: usize,
    pub distinct: bool,
    pub cls: ClsKind,
}

impl AblationCell {
    pub fn config_id(&self) -> String {
        format!(
            "e{}-{}-{}",
            self.evolve_times,
            if self.distinct { "on" } else { "off" },
            self.cls.name()
        )
    }
}

/// The grid and the shared training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationMatrix {
    pub evolve_times: Vec<usize>,
    pub distinct: Vec<bool>,
    pub cls: Vec<ClsKind>,
    pub seeds: Vec<u64>,
    /// Template for every run; paradigm, schedule, distinct, cls and seed are overridden.
    pub base: TrainSpec,
    pub eval: EvalConfig,
}

impl Default for AblationMatrix {
    fn default() -> Self {
        Self {
            evolve_times: vec![0, 1, 2, 5],
            distinct: vec![false, true],
            cls: vec![ClsKind::Bce],
            seeds: vec![0, 1, 2, 3, 4],
            base: TrainSpec::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl AblationMatrix {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (k, v) in parse_kv(text)? {
            let v = v.as_str();
            match k.as_str() {
                "evolve_times" => m.evolve_times = parse_list(&k, v)?,
                "distinct" => {
                    m.distinct = v
                        .split(',')
                        .map(|s| parse_switch(&k, s.trim()))
                        .collect::<Result<_>>()?
                }
                "cls" => {
                    m.cls = v
                        .split(',')
                        .map(|s| ClsKind::parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown cls `{s}`"))))
                        .collect::<Result<_>>()?
                }
                "seeds" => m.seeds = parse_list(&k, v)?,
                "epochs" => m.base.epochs = parse_value(&k, v)?,
                "lr" => m.base.lr = parse_value(&k, v)?,
                "batch_size" => m.base.batch_size = parse_value(&k, v)?,
                "hidden_dim" => m.base.hidden_dim = parse_value(&k, v)?,
                "num_layers" => m.base.num_layers = parse_value(&k, v)?,
                "k" => m.eval.k = parse_value(&k, v)?,
                "miss_threshold" => m.eval.miss_threshold = parse_value(&k, v)?,
                _ => return Err(Error::Config(format!("unknown config key `{k}`"))),
            }
        }
        if m.evolve_times.is_empty() || m.distinct.is_empty() || m.cls.is_empty() || m.seeds.is_empty() {
            return Err(Error::Config("every ablation axis needs at least one value".into()));
        }
        Ok(m)
    }

    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for &evolve_times in &self.evolve_times {
            for &distinct in &self.distinct {
                for &cls in &self.cls {
                    out.push(AblationCell {
                        evolve_times,
                        distinct,
                        cls,
                    });
                }
            }
        }
        out
    }

    pub fn spec_for(&self, cell: &AblationCell, seed: u64) -> Result<TrainSpec> {
        let schedule = EvolveSchedule::for_evolve_times(self.base.num_layers, cell.evolve_times)?;
        Ok(TrainSpec {
            paradigm: Paradigm::Eda,
            evolve_layers: schedule.evolve_after().to_vec(),
            distinct: cell.distinct,
            cls: cell.cls,
            seed,
            ..self.base.clone()
        })
    }
}

/// Per-seed, per-layer metrics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: AblationCell,
    pub runs: Vec<Vec<MetricsBundle>>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl CellResult {
    /// Median across seeds of `f` applied to layer `layer` (1-based).
    pub fn median_at(&self, layer: usize, f: impl Fn(&MetricsBundle) -> f64) -> f64 {
        let vals: Vec<f64> = self.runs.iter().map(|r| f(&r[layer - 1])).collect();
        median(&vals)
    }

    pub fn num_layers(&self) -> usize {
        self.runs.first().map_or(0, Vec::len)
    }

    pub fn median_final(&self, f: impl Fn(&MetricsBundle) -> f64) -> f64 {
        self.median_at(self.num_layers(), f)
    }
}

/// Trains and evaluates every cell for every seed.
pub fn run_ablation(
    ds: &Dataset,
    anchors: &AnchorLibrary,
    matrix: &AblationMatrix,
    cells: &[AblationCell],
    exec: Exec,
    mut progress: impl FnMut(&AblationCell, u64, &[MetricsBundle]),
) -> Result<Vec<CellResult>> {
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut runs = Vec::with_capacity(matrix.seeds.len());
        for &seed in &matrix.seeds {
            let spec = matrix.spec_for(cell, seed)?;
            let (ck, _) = train_model(ds, anchors, &spec, exec, |_| {})?;
            let per_layer = evaluate_checkpoint(ds, &ck, &matrix.eval, exec)?;
            progress(cell, seed, &per_layer);
            runs.push(per_layer);
        }
        out.push(CellResult { cell: *cell, runs });
    }
    Ok(out)
}

/// Median-aggregated rows: one per cell and score mode.
pub fn ablation_rows(results: &[CellResult]) -> (Vec<MetricsRow>, Vec<LayerRow>) {
    let mut rows = Vec::new();
    let mut layers = Vec::new();
    for r in results {
        let id = r.cell.config_id();
        for mode in ScoreMode::ALL {
            rows.push(MetricsRow {
                config_id: id.clone(),
                evolve_times: r.cell.evolve_times,
                distinct: if r.cell.distinct { "on" } else { "off" }.into(),
                cls_kind: r.cell.cls.name().into(),
                score_mode: mode.name().into(),
                min_ade: r.median_final(|b| b.min_ade),
                min_fde: r.median_final(|b| b.min_fde),
                miss_rate: r.median_final(|b| b.miss_rate),
                map: r.median_final(|b| b.map(mode)),
            });
        }
        for layer in 1..=r.num_layers() {
            layers.push(LayerRow {
                config_id: id.clone(),
                layer,
                min_fde: r.median_at(layer, |b| b.min_fde),
                min_ade: r.median_at(layer, |b| b.min_ade),
                miss_rate: r.median_at(layer, |b| b.miss_rate),
            });
        }
    }
    (rows, layers)
}

pub fn ablate_cmd(
    matrix: &AblationMatrix,
    data: &Path,
    anchors: &Path,
    out: &Path,
    exec: Exec,
    progress: impl FnMut(&AblationCell, u64, &[MetricsBundle]),
) -> Result<Vec<CellResult>> {
    let ds = load_dataset(data)?;
    let lib = load_anchors(anchors)?;
    let results = run_ablation(&ds, &lib, matrix, &matrix.cells(), exec, progress)?;
    let (rows, layers) = ablation_rows(&results);
    write_csv(&rows, out)?;
    write_csv(&layers, &layers_path(out))?;
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub series: usize,
    pub files: Vec<PathBuf>,
}

/// Per-layer CSV plus SVG line charts of minFDE and miss rate by layer, one
/// series per metrics row.
pub fn report_cmd(metrics: &Path, out_dir: &Path) -> Result<ReportSummary> {
    let rows: Vec<MetricsRow> = read_csv(metrics)?;
    let layers: Vec<LayerRow> = read_csv(&layers_path(metrics))?;
    let mut by_config: BTreeMap<&str, Vec<&LayerRow>> = BTreeMap::new();
    for l in &layers {
        by_config.entry(l.config_id.as_str()).or_default().push(l);
    }
    let mut series = Vec::with_capacity(rows.len());
    let mut table = Vec::new();
    for r in &rows {
        let Some(ls) = by_config.get(r.config_id.as_str()) else {
            return Err(Error::Config(format!("no per-layer rows for `{}`", r.config_id)));
        };
        let mut ls = ls.clone();
        ls.sort_by_key(|l| l.layer);
        let label = format!("{}/{}", r.config_id, r.score_mode);
        for l in &ls {
            table.push(LayerRow {
                config_id: label.clone(),
                ..(*l).clone()
            });
        }
        series.push((label, ls));
    }

    let csv_path = out_dir.join("layers.csv");
    write_csv(&table, &csv_path)?;
    let mut files = vec![csv_path];
    for (name, title, pick) in [
        ("min_fde.svg", "minFDE by layer", (|l: &LayerRow| l.min_fde) as fn(&LayerRow) -> f64),
        ("miss_rate.svg", "Miss rate by layer", |l: &LayerRow| l.miss_rate),
    ] {
        let lines: Vec<(String, Vec<(f64, f64)>)> = series
            .iter()
            .map(|(label, ls)| (label.clone(), ls.iter().map(|l| (l.layer as f64, pick(l))).collect()))
            .collect();
        let path = out_dir.join(name);
        write_atomic(&path, line_chart_svg(title, &lines).as_bytes())?;
        files.push(path);
    }
    Ok(ReportSummary {
        series: series.len(),
        files,
    })
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Minimal SVG line chart; one `<polyline>` per series.
pub fn line_chart_svg(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{pad},{pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="11">{y0:.3}</text>"#, h - pad + 14.0);
    let _ = writeln!(s, r#"<text x="4" y="{}" font-size="11">{y1:.3}</text>"#, pad + 4.0);
    for (i, (label, p)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 150.0,
            pad + 14.0 * (i + 1) as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
