use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::generate::Dataset;
use super::record::{fmt_real, parse_num, write_atomic, Header, RecordFile, RecordWriter};
use crate::anchors::{AnchorLibrary, EvolveSchedule};
use crate::error::{FormatError, Result};
use crate::geometry::LengthMode;
use crate::loss::ClsKind;
use crate::model::{tensor_rows, ModelConfig, ModelParams};
use crate::train::{AssignConfig, Paradigm, TrainConfig};
use crate::types::{AnchorSet, GaussianBounds, Point2, Scene, Trajectory};

const SCENES: &str = "scenes";
const ANCHORS: &str = "anchors";
const CHECKPOINT: &str = "checkpoint";
const ANCHOR_SCHEMA: &str = "category,index,x,y";

fn scene_schema(context_dim: usize, horizon: usize) -> String {
    format!("category,latent_mode,context*{context_dim},x*{horizon},y*{horizon}")
}

fn header_err(msg: String) -> FormatError {
    FormatError::Header(msg)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let header = Header::new(SCENES, ds.scenes.len(), scene_schema(ds.context_dim, ds.horizon))
        .with("train_count", ds.train_count)
        .with("context_dim", ds.context_dim)
        .with("horizon", ds.horizon)
        .with("num_modes", ds.num_modes)
        .with("dt", fmt_real(ds.dt));
    let mut w = RecordWriter::new(header);
    for s in &ds.scenes {
        let pts = s.gt.points();
        w.record(
            [s.category.to_string(), s.latent_mode.to_string()]
                .into_iter()
                .chain(s.context.iter().map(|&c| fmt_real(c)))
                .chain(pts.iter().map(|p| fmt_real(p.x)))
                .chain(pts.iter().map(|p| fmt_real(p.y))),
        );
    }
    Ok(w.write_to(path)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = RecordFile::read(path, SCENES)?;
    let h = &f.header;
    let context_dim: usize = h.parse_key("context_dim")?;
    let horizon: usize = h.parse_key("horizon")?;
    let dt: f64 = h.parse_key("dt")?;
    f.expect_schema(&scene_schema(context_dim, horizon))?;
    let width = 2 + context_dim + 2 * horizon;
    let mut scenes = Vec::with_capacity(h.count);
    for i in 0..h.count {
        let fields = f.fields(i, width)?;
        let category = parse_num(fields[0], i)?;
        let latent_mode = parse_num(fields[1], i)?;
        let nums = fields[2..]
            .iter()
            .map(|s| parse_num::<f64>(s, i))
            .collect::<Result<Vec<_>, _>>()?;
        let (context, xy) = nums.split_at(context_dim);
        let gt = Trajectory::from_xy(&xy[..horizon], &xy[horizon..], dt).map_err(FormatError::from)?;
        scenes.push(Scene {
            context: context.to_vec(),
            gt,
            latent_mode,
            category,
        });
    }
    let ds = Dataset {
        scenes,
        train_count: h.parse_key("train_count")?,
        context_dim,
        horizon,
        dt,
        num_modes: h.parse_key("num_modes")?,
    };
    ds.validate()?;
    Ok(ds)
}

fn anchor_records(lib: &AnchorLibrary, w: &mut RecordWriter) {
    for (c, set) in lib.sets().iter().enumerate() {
        for (i, p) in set.endpoints().iter().enumerate() {
            w.record([c.to_string(), i.to_string(), fmt_real(p.x), fmt_real(p.y)]);
        }
    }
}

fn parse_anchor_records(
    f: &RecordFile,
    first: usize,
    num_categories: usize,
    per_category: usize,
) -> Result<AnchorLibrary> {
    let mut sets = Vec::with_capacity(num_categories);
    for c in 0..num_categories {
        let mut pts = Vec::with_capacity(per_category);
        for i in 0..per_category {
            let r = first + c * per_category + i;
            let fields = f.fields(r, 4)?;
            let (fc, fi): (usize, usize) = (parse_num(fields[0], r)?, parse_num(fields[1], r)?);
            if (fc, fi) != (c, i) {
                return Err(FormatError::Malformed {
                    record: r,
                    detail: format!("expected anchor ({c}, {i}), found ({fc}, {fi})"),
                }
                .into());
            }
            pts.push(Point2::new(parse_num(fields[2], r)?, parse_num(fields[3], r)?));
        }
        sets.push(AnchorSet::from_endpoints(&pts)?);
    }
    AnchorLibrary::new(sets)
}

/// Only predefined anchors are persisted; evolved ones exist per forward pass.
pub fn save_anchors(lib: &AnchorLibrary, path: &Path) -> Result<()> {
    let header = Header::new(ANCHORS, lib.num_categories() * lib.num_anchors(), ANCHOR_SCHEMA.into())
        .with("num_categories", lib.num_categories())
        .with("per_category", lib.num_anchors());
    let mut w = RecordWriter::new(header);
    anchor_records(lib, &mut w);
    Ok(w.write_to(path)?)
}

pub fn load_anchors(path: &Path) -> Result<AnchorLibrary> {
    let f = RecordFile::read(path, ANCHORS)?;
    f.expect_schema(ANCHOR_SCHEMA)?;
    let c: usize = f.header.parse_key("num_categories")?;
    let n: usize = f.header.parse_key("per_category")?;
    if c * n != f.header.count {
        return Err(header_err(format!("count {} != {c} x {n}", f.header.count)).into());
    }
    parse_anchor_records(&f, 0, c, n)
}

/// Trained weights together with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub train: TrainConfig,
}

fn checkpoint_schema(cfg: &ModelConfig) -> String {
    let rows = tensor_rows(cfg);
    format!("anchor:{ANCHOR_SCHEMA};weights:rows*{}", rows.len())
}

fn join_layers(layers: &[usize]) -> String {
    if layers.is_empty() {
        "-".into()
    } else {
        layers.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

fn split_layers(s: &str) -> Result<Vec<usize>, FormatError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.parse().map_err(|_| header_err(format!("bad evolve layer `{t}`"))))
        .collect()
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let p = &ck.params;
    p.validate()?;
    let cfg = &p.config;
    let t = &ck.train;
    let rows = tensor_rows(cfg);
    let n_anchor = p.anchors.num_categories() * p.anchors.num_anchors();
    let header = Header::new(CHECKPOINT, n_anchor + rows.len(), checkpoint_schema(cfg))
        .with("context_dim", cfg.context_dim)
        .with("hidden_dim", cfg.hidden_dim)
        .with("num_layers", cfg.num_layers)
        .with("num_components", cfg.num_components)
        .with("horizon", cfg.horizon)
        .with("dt", fmt_real(cfg.dt))
        .with("pos_scale", fmt_real(cfg.pos_scale))
        .with("out_gain", fmt_real(cfg.out_gain))
        .with("init_seed", cfg.seed)
        .with("log_sigma_min", fmt_real(cfg.bounds.log_sigma_min))
        .with("log_sigma_max", fmt_real(cfg.bounds.log_sigma_max))
        .with("rho_bound", fmt_real(cfg.bounds.rho_bound))
        .with("num_categories", p.anchors.num_categories())
        .with("paradigm", t.assign.paradigm.name())
        .with("evolve_layers", join_layers(t.assign.schedule.evolve_after()))
        .with("distinct", if t.assign.distinct { "on" } else { "off" })
        .with("length_mode", t.assign.length_mode.name())
        .with("cls", t.cls_kind.name())
        .with("lambda_reg", fmt_real(t.lambda_reg))
        .with("lambda_cls", fmt_real(t.lambda_cls))
        .with("epochs", t.epochs)
        .with("lr", fmt_real(t.lr))
        .with("batch_size", t.batch_size)
        .with("train_seed", t.seed);
    let mut w = RecordWriter::new(header);
    anchor_records(&p.anchors, &mut w);
    let mut offset = 0;
    for width in rows {
        w.record(p.weights[offset..offset + width].iter().map(|&x| fmt_real(x)));
        offset += width;
    }
    Ok(w.write_to(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = RecordFile::read(path, CHECKPOINT)?;
    let h = &f.header;
    let cfg = ModelConfig {
        context_dim: h.parse_key("context_dim")?,
        hidden_dim: h.parse_key("hidden_dim")?,
        num_layers: h.parse_key("num_layers")?,
        num_components: h.parse_key("num_components")?,
        horizon: h.parse_key("horizon")?,
        dt: h.parse_key("dt")?,
        pos_scale: h.parse_key("pos_scale")?,
        out_gain: h.parse_key("out_gain")?,
        seed: h.parse_key("init_seed")?,
        bounds: GaussianBounds {
            log_sigma_min: h.parse_key("log_sigma_min")?,
            log_sigma_max: h.parse_key("log_sigma_max")?,
            rho_bound: h.parse_key("rho_bound")?,
        },
    };
    cfg.validate()?;
    f.expect_schema(&checkpoint_schema(&cfg))?;
    let num_categories: usize = h.parse_key("num_categories")?;
    let n_anchor = num_categories * cfg.num_components;
    let rows = tensor_rows(&cfg);
    if h.count != n_anchor + rows.len() {
        return Err(header_err(format!("count {} != {} anchors + {} rows", h.count, n_anchor, rows.len())).into());
    }
    let anchors = parse_anchor_records(&f, 0, num_categories, cfg.num_components)?;
    let mut weights = Vec::with_capacity(ModelParams::weight_count(&cfg));
    for (r, &width) in rows.iter().enumerate() {
        weights.extend(f.reals(n_anchor + r, width)?);
    }

    let bad = |k: &str| header_err(format!("bad value for `{k}`"));
    let paradigm = Paradigm::parse(h.get("paradigm")?).ok_or_else(|| bad("paradigm"))?;
    let distinct = match h.get("distinct")? {
        "on" => true,
        "off" => false,
        _ => return Err(bad("distinct").into()),
    };
    let train = TrainConfig {
        assign: AssignConfig {
            paradigm,
            schedule: EvolveSchedule::new(cfg.num_layers, split_layers(h.get("evolve_layers")?)?)?,
            distinct,
            length_mode: LengthMode::parse(h.get("length_mode")?).ok_or_else(|| bad("length_mode"))?,
        },
        cls_kind: ClsKind::parse(h.get("cls")?).ok_or_else(|| bad("cls"))?,
        lambda_reg: h.parse_key("lambda_reg")?,
        lambda_cls: h.parse_key("lambda_cls")?,
        epochs: h.parse_key("epochs")?,
        lr: h.parse_key("lr")?,
        batch_size: h.parse_key("batch_size")?,
        seed: h.parse_key("train_seed")?,
    };
    let params = ModelParams {
        config: cfg,
        anchors,
        weights,
    };
    params.validate()?;
    Ok(Checkpoint { params, train })
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config_id: String,
    pub evolve_times: usize,
    pub distinct: String,
    pub cls_kind: String,
    pub score_mode: String,
    #[serde(rename = "minADE")]
    pub min_ade: f64,
    #[serde(rename = "minFDE")]
    pub min_fde: f64,
    pub miss_rate: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
}

/// Per-layer results of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub config_id: String,
    pub layer: usize,
    pub min_fde: f64,
    pub min_ade: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub total: f64,
    pub reg: f64,
    pub cls: f64,
}

/// Writes a header row plus one row per item, atomically.
pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(FormatError::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| FormatError::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?;
    Ok(write_atomic(path, &bytes)?)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(FormatError::from)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(FormatError::from)?;
    Ok(rows)
}
