//! Deterministic report files: CSV tables for records, features, bounds,
//! metrics, and timing, plus JSON exports of trees and search results.
//!
//! Writers format floats with the shortest round-tripping representation
//! and keep row order canonical, so reruns with the same seed produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};

use crate::corruption::{FaultClass, FaultSpec, Magnitude, MemoryFaultSpec, MemoryFlavor};
use crate::detector::export::{rules_text, tree_to_json};
use crate::error::{Error, Result};
use crate::harness::bench::BenchResult;
use crate::harness::{
    build_seed_data, split_seeds, Campaign, CampaignConfig, OutcomeRecord, Phase, PipelineResult,
    SeedData,
};
use crate::monitor::{FeatureLayout, QuantileBounds, PERCENTILES};
use crate::reduction::{summarize_minimal, MinimalPool};

fn fmt_f64(v: f64) -> String {
    format!("{}", v)
}

fn parse_field<T: FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::parse(format!("bad {} '{}': {}", what, s, e)))
}

fn parse_bool(s: &str, what: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::parse(format!("bad {} '{}'", what, other))),
    }
}

const RECORD_COLUMNS: [&str; 16] = [
    "image_id",
    "image_class",
    "phase",
    "fi",
    "fault_class",
    "magnitude",
    "mem_flavor",
    "mem_layer",
    "mem_coord",
    "mem_bit",
    "accelerated",
    "seed",
    "due",
    "ref_top1",
    "faulty_top1",
    "label",
];

/// Render the campaign record table: one row per monitored inference with
/// the full fault location and the raw quantile markers.
pub fn records_csv(campaign: &Campaign) -> String {
    let layout = campaign.layout;
    let mut s = String::new();
    s.push_str(&RECORD_COLUMNS.join(","));
    for i in 0..layout.len() {
        let _ = write!(s, ",{}", layout.name(i));
    }
    s.push('\n');
    for r in &campaign.records {
        let (mem_flavor, mem_layer, mem_coord, mem_bit, accelerated) = match &r.spec.memory {
            Some(m) => (
                m.flavor.as_str().to_string(),
                m.layer.to_string(),
                format!("{}:{}:{}:{}", m.coord[0], m.coord[1], m.coord[2], m.coord[3]),
                m.bit.to_string(),
                m.accelerated.to_string(),
            ),
            None => Default::default(),
        };
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.image_id,
            r.image_class,
            r.phase.as_str(),
            r.fi,
            r.spec.class.as_str(),
            r.spec.magnitude.map(|m| m.as_str()).unwrap_or(""),
            mem_flavor,
            mem_layer,
            mem_coord,
            mem_bit,
            accelerated,
            r.spec.seed,
            r.due,
            r.ref_top1,
            r.faulty_top1.map(|t| t.to_string()).unwrap_or_default(),
            r.label.map(|l| l.as_str()).unwrap_or(""),
        );
        for v in &r.raw_quantiles {
            let _ = write!(s, ",{}", v);
        }
        s.push('\n');
    }
    s
}

pub fn write_records_csv(path: &Path, campaign: &Campaign) -> Result<()> {
    fs::write(path, records_csv(campaign))?;
    Ok(())
}

/// Parse a record table back into a campaign. The feature layout is
/// inferred from the marker columns.
pub fn parse_records_csv(text: &str) -> Result<Campaign> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("record table is empty"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < RECORD_COLUMNS.len() || cols[..RECORD_COLUMNS.len()] != RECORD_COLUMNS {
        return Err(Error::parse("record table header does not match"));
    }
    let q_cols = cols.len() - RECORD_COLUMNS.len();
    if q_cols == 0 || q_cols % PERCENTILES.len() != 0 {
        return Err(Error::parse(format!(
            "{} marker columns is not a whole number of layers",
            q_cols
        )));
    }
    let layout = FeatureLayout::new(q_cols / PERCENTILES.len());
    for i in 0..q_cols {
        if cols[RECORD_COLUMNS.len() + i] != layout.name(i) {
            return Err(Error::parse(format!(
                "marker column {} is named '{}', expected '{}'",
                i,
                cols[RECORD_COLUMNS.len() + i],
                layout.name(i)
            )));
        }
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                f.len(),
                cols.len()
            )));
        }
        let class = FaultClass::from_str(f[4])?;
        let magnitude = if f[5].is_empty() {
            None
        } else {
            Some(Magnitude::from_str(f[5])?)
        };
        let memory = if f[6].is_empty() {
            None
        } else {
            let parts: Vec<&str> = f[8].split(':').collect();
            if parts.len() != 4 {
                return Err(Error::parse(format!("bad memory coord '{}'", f[8])));
            }
            Some(MemoryFaultSpec {
                flavor: MemoryFlavor::from_str(f[6])?,
                layer: parse_field(f[7], "memory layer")?,
                coord: [
                    parse_field(parts[0], "memory coord")?,
                    parse_field(parts[1], "memory coord")?,
                    parse_field(parts[2], "memory coord")?,
                    parse_field(parts[3], "memory coord")?,
                ],
                bit: parse_field(f[9], "memory bit")?,
                accelerated: parse_bool(f[10], "accelerated flag")?,
            })
        };
        let raw_quantiles = f[RECORD_COLUMNS.len()..]
            .iter()
            .map(|v| parse_field(v, "marker value"))
            .collect::<Result<Vec<f64>>>()?;
        records.push(OutcomeRecord {
            image_id: parse_field(f[0], "image id")?,
            image_class: parse_field(f[1], "image class")?,
            phase: Phase::from_str(f[2])?,
            fi: parse_field(f[3], "injection slot")?,
            spec: FaultSpec {
                class,
                magnitude,
                memory,
                seed: parse_field(f[11], "fault seed")?,
            },
            due: parse_bool(f[12], "due flag")?,
            ref_top1: parse_field(f[13], "reference prediction")?,
            faulty_top1: if f[14].is_empty() {
                None
            } else {
                Some(parse_field(f[14], "faulty prediction")?)
            },
            label: if f[15].is_empty() {
                None
            } else {
                Some(FaultClass::from_str(f[15])?)
            },
            raw_quantiles,
        });
    }
    if records.is_empty() {
        return Err(Error::parse("record table has no rows"));
    }
    let n_images = records.iter().map(|r| r.image_id).max().unwrap() + 1;
    let mut image_classes = vec![None; n_images];
    for r in &records {
        match image_classes[r.image_id] {
            None => image_classes[r.image_id] = Some(r.image_class),
            Some(c) if c == r.image_class => {}
            Some(c) => {
                return Err(Error::parse(format!(
                    "image {} appears with classes {} and {}",
                    r.image_id, c, r.image_class
                )))
            }
        }
    }
    let image_classes = image_classes
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::parse(format!("image {} has no records", i))))
        .collect::<Result<Vec<u8>>>()?;
    Ok(Campaign {
        layout,
        n_images,
        image_classes,
        records,
    })
}

pub fn read_records_csv(path: &Path) -> Result<Campaign> {
    parse_records_csv(&fs::read_to_string(path)?)
}

/// Render the detector-ready anomaly features of one split.
pub fn features_csv(data: &SeedData, layout: FeatureLayout) -> String {
    let mut s = String::from("side,label");
    for i in 0..layout.len() {
        let _ = write!(s, ",{}", layout.name(i));
    }
    s.push('\n');
    for (side, ds) in [("train", &data.train), ("test", &data.test)] {
        for i in 0..ds.len() {
            let label = FaultClass::from_index(ds.label(i)).expect("labels are fault classes");
            let _ = write!(s, "{},{}", side, label.as_str());
            for v in ds.row(i) {
                let _ = write!(s, ",{}", v);
            }
            s.push('\n');
        }
    }
    s
}

/// Render the fault-free marker envelope, tagged with its origin.
pub fn bounds_csv(tag: &str, bounds: &QuantileBounds) -> String {
    let mut s = format!("# dataset: {}\nlayer,percentile,min,max\n", tag);
    for layer in 1..=bounds.layout.layers {
        for (p_idx, &p) in PERCENTILES.iter().enumerate() {
            let i = bounds.layout.index(layer, p_idx);
            let _ = writeln!(s, "{},{},{},{}", layer, p, bounds.min[i], bounds.max[i]);
        }
    }
    s
}

pub fn write_bounds_csv(path: &Path, tag: &str, bounds: &QuantileBounds) -> Result<()> {
    fs::write(path, bounds_csv(tag, bounds))?;
    Ok(())
}

pub fn parse_bounds_csv(text: &str) -> Result<(String, QuantileBounds)> {
    let mut lines = text.lines();
    let tag_line = lines
        .next()
        .ok_or_else(|| Error::parse("bounds table is empty"))?;
    let tag = tag_line
        .strip_prefix("# dataset: ")
        .ok_or_else(|| Error::parse("bounds table must start with '# dataset: <tag>'"))?
        .to_string();
    match lines.next() {
        Some("layer,percentile,min,max") => {}
        _ => return Err(Error::parse("bounds table header does not match")),
    }
    let mut rows = Vec::new();
    let mut max_layer = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(format!("bad bounds row '{}'", line)));
        }
        let layer: usize = parse_field(f[0], "layer")?;
        let p: u8 = parse_field(f[1], "percentile")?;
        let p_idx = PERCENTILES
            .iter()
            .position(|&q| q == p)
            .ok_or_else(|| Error::parse(format!("percentile {} is not a decile", p)))?;
        if layer == 0 {
            return Err(Error::parse("layer indices start at 1"));
        }
        max_layer = max_layer.max(layer);
        rows.push((
            layer,
            p_idx,
            parse_field::<f64>(f[2], "bound")?,
            parse_field::<f64>(f[3], "bound")?,
        ));
    }
    let layout = FeatureLayout::new(max_layer);
    if rows.len() != layout.len() {
        return Err(Error::parse(format!(
            "{} bounds rows for {} markers",
            rows.len(),
            layout.len()
        )));
    }
    let mut min = vec![f64::NAN; layout.len()];
    let mut max = vec![f64::NAN; layout.len()];
    for (layer, p_idx, lo, hi) in rows {
        let i = layout.index(layer, p_idx);
        if !min[i].is_nan() {
            return Err(Error::parse(format!(
                "duplicate bounds row for layer {} percentile {}",
                layer, PERCENTILES[p_idx]
            )));
        }
        min[i] = lo;
        max[i] = hi;
    }
    if min.iter().chain(&max).any(|v| v.is_nan()) {
        return Err(Error::parse("bounds table does not cover every marker"));
    }
    Ok((tag, QuantileBounds { layout, min, max }))
}

pub fn read_bounds_csv(path: &Path) -> Result<(String, QuantileBounds)> {
    parse_bounds_csv(&fs::read_to_string(path)?)
}

const METRIC_NAMES: [&str; 8] = [
    "p_cls", "r_cls", "p_cat", "r_cat", "p_sdc", "r_sdc", "n_ft", "n_l",
];

/// Render the aggregated metrics table: mean and spread over the reseeded
/// retrainings, for the full and the reduced detector.
pub fn metrics_csv(pipeline: &PipelineResult) -> String {
    let mut s = String::from("model,stat,p_cls,r_cls,p_cat,r_cat,p_sdc,r_sdc,n_ft/n_l\n");
    for (model, stat, row) in [
        ("full", "mean", &pipeline.full_mean),
        ("full", "std", &pipeline.full_std),
        ("reduced", "mean", &pipeline.reduced_mean),
        ("reduced", "std", &pipeline.reduced_std),
    ] {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}/{}",
            model,
            stat,
            row.p_cls,
            row.r_cls,
            row.p_cat,
            row.r_cat,
            row.p_sdc,
            row.r_sdc,
            row.n_ft,
            row.n_l
        );
    }
    s
}

/// Render every per-seed metric as one row.
pub fn metrics_long_csv(pipeline: &PipelineResult) -> String {
    let mut s = String::from("seed,model,metric,value\n");
    for seed in &pipeline.seeds {
        for (model, row) in [("full", &seed.full_row), ("reduced", &seed.reduced_row)] {
            for (name, v) in METRIC_NAMES.iter().zip(row.fields()) {
                let _ = writeln!(s, "{},{},{},{}", seed.seed_index, model, name, v);
            }
        }
    }
    s
}

/// Render the per-seed reduction traces: scores of every top-k retrain.
pub fn reduction_trace_csv(pipeline: &PipelineResult) -> String {
    let mut s = String::from("seed,k,features,precision,recall,accepted\n");
    for seed in &pipeline.seeds {
        for step in &seed.reduction.steps {
            let features: Vec<String> = step.features.iter().map(|f| f.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                seed.seed_index,
                step.k,
                features.join(";"),
                step.precision,
                step.recall,
                step.accepted
            );
        }
    }
    s
}

fn jnum(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(fmt_f64(v)))
}

/// Render the minimal-set search result with its summary statistics.
pub fn pool_json(pool: &MinimalPool, layout: FeatureLayout) -> Result<String> {
    let summary = summarize_minimal(&pool.pool, layout);
    let rounds: Vec<Value> = pool
        .rounds
        .iter()
        .map(|r| {
            json!({
                "round": r.round,
                "selected": r.model.selected,
                "used": r.model.used,
                "feature_names": r.model.used.iter().map(|&f| layout.name(f)).collect::<Vec<_>>(),
                "precision": jnum(r.model.precision),
                "recall": jnum(r.model.recall),
                "n_ft": r.model.n_ft,
                "n_l": r.model.n_l,
            })
        })
        .collect();
    let v = json!({
        "baseline": {"precision": jnum(pool.baseline.0), "recall": jnum(pool.baseline.1)},
        "stopped": pool.stopped.as_str(),
        "rounds": rounds,
        "pool": pool.pool,
        "summary": {
            "sets": summary.sets,
            "features": summary.features,
            "mean_set_size": jnum(summary.mean_set_size),
            "mean_normalized_depth": jnum(summary.mean_normalized_depth),
            "percentile_counts": summary.percentile_counts,
            "layer_counts": summary.layer_counts,
        },
    });
    serde_json::to_string_pretty(&v).map_err(|e| Error::parse(format!("pool export: {}", e)))
}

/// Render the run summary: config echo, campaign tallies, and the
/// aggregated detector scores.
pub fn summary_json(
    cfg: &CampaignConfig,
    campaign: &Campaign,
    pipeline: &PipelineResult,
) -> Result<String> {
    let seeds: Vec<Value> = pipeline
        .seeds
        .iter()
        .map(|s| {
            Ok(json!({
                "seed_index": s.seed_index,
                "split_seed": s.split_seed,
                "n_train": s.n_train,
                "n_test": s.n_test,
                "full": serde_json::to_value(s.full_row)?,
                "reduced": serde_json::to_value(s.reduced_row)?,
                "reduced_used": s.reduction.model.used,
                "reduced_accepted": s.reduction.model.accepted,
            }))
        })
        .collect::<std::result::Result<_, serde_json::Error>>()
        .map_err(|e| Error::parse(format!("summary export: {}", e)))?;
    let sweep = match &pipeline.sweep {
        Some(points) => Value::Array(
            points
                .iter()
                .map(|&(a, s)| Value::Array(vec![jnum(a), jnum(s)]))
                .collect(),
        ),
        None => Value::Null,
    };
    let v = json!({
        "config": serde_json::to_value(cfg).map_err(|e| Error::parse(e.to_string()))?,
        "campaign": serde_json::to_value(campaign.summary())
            .map_err(|e| Error::parse(e.to_string()))?,
        "alpha": jnum(pipeline.alpha),
        "sweep": sweep,
        "seeds": seeds,
        "metrics": {
            "full_mean": serde_json::to_value(pipeline.full_mean)
                .map_err(|e| Error::parse(e.to_string()))?,
            "full_std": serde_json::to_value(pipeline.full_std)
                .map_err(|e| Error::parse(e.to_string()))?,
            "reduced_mean": serde_json::to_value(pipeline.reduced_mean)
                .map_err(|e| Error::parse(e.to_string()))?,
            "reduced_std": serde_json::to_value(pipeline.reduced_std)
                .map_err(|e| Error::parse(e.to_string()))?,
        },
    });
    serde_json::to_string_pretty(&v).map_err(|e| Error::parse(format!("summary export: {}", e)))
}

/// Render per-rep wall-clock timings.
pub fn overhead_csv(bench: &BenchResult) -> String {
    let mut s = String::from("variant,rep,seconds_per_image\n");
    for v in &bench.variants {
        for (rep, secs) in v.seconds.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", v.variant.as_str(), rep, secs);
        }
    }
    s
}

/// Render per-variant per-image time statistics: mean, sample standard
/// deviation, median over reps, the 95% confidence interval, and the mean
/// overhead relative to the plain variant.
pub fn overhead_summary_csv(bench: &BenchResult) -> String {
    let mut s = String::from("variant,reps,mean,std,median,ci_lo,ci_hi,vs_plain\n");
    for v in bench.summaries() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            v.variant.as_str(),
            v.reps,
            v.mean,
            v.std,
            v.median,
            v.ci_lo,
            v.ci_hi,
            v.vs_plain
        );
    }
    s
}

/// Write the full report set for one pipeline run and return the paths.
///
/// Everything written here is deterministic for a fixed config; timing
/// files are handled separately because wall-clock measurements are not.
pub fn write_pipeline_reports(
    dir: &Path,
    cfg: &CampaignConfig,
    campaign: &Campaign,
    pipeline: &PipelineResult,
    minimal: Option<&MinimalPool>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let layout = campaign.layout;
    let seed0 = split_seeds(cfg)[0];
    let data0 = build_seed_data(campaign, cfg, seed0)?;
    let feature_names: Vec<String> = (0..layout.len()).map(|i| layout.name(i)).collect();
    let class_names: Vec<String> = FaultClass::ALL
        .iter()
        .map(|c| c.as_str().to_string())
        .collect();
    let primary = pipeline.primary();

    let mut files: Vec<(&str, String)> = vec![
        ("config.toml", cfg.to_toml_string()?),
        ("records.csv", records_csv(campaign)),
        (
            "bounds.csv",
            bounds_csv(
                &format!("campaign seed {}, split seed {}", cfg.seed, seed0),
                &data0.bounds,
            ),
        ),
        ("features.csv", features_csv(&data0, layout)),
        ("metrics.csv", metrics_csv(pipeline)),
        ("metrics_long.csv", metrics_long_csv(pipeline)),
        ("reduction_trace.csv", reduction_trace_csv(pipeline)),
        ("summary.json", summary_json(cfg, campaign, pipeline)?),
        (
            "tree.json",
            tree_to_json(&primary.reduction.full_tree, &feature_names, &class_names)?,
        ),
        (
            "rules.txt",
            rules_text(&primary.reduction.full_tree, &feature_names, &class_names)?,
        ),
        (
            "reduced_tree.json",
            tree_to_json(&primary.reduction.model.tree, &feature_names, &class_names)?,
        ),
    ];
    if let Some(p) = minimal {
        files.push(("pool.json", pool_json(p, layout)?));
    }

    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
