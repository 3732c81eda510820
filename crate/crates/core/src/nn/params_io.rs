//! Self-describing textual parameter container. Floats are written in
//! Rust's shortest round-trip form, so load -> forward reproduces the
//! trained network bit for bit.

use std::path::Path;

use super::{EncoderSpec, HeadNorm, HeadSpec, NetworkParams, NetworkSpec, TrainTask};
use crate::error::{Error, Result};

pub fn serialize_params(params: &NetworkParams) -> String {
    let mut out = String::new();
    out.push_str("cloudup-params v1\n");
    if let Some(task) = params.task {
        out.push_str(&format!("task = {}\n", task.name()));
    }
    out.push_str(&format!("init_seed = {}\n", params.init_seed));
    out.push_str(&format!("input_k = {}\n", params.input_k));
    out.push_str(&format!(
        "encoder = {}\n",
        join_widths(&params.spec.encoder.per_point_widths)
    ));
    out.push_str(&format!(
        "head = {}\n",
        join_widths(&params.spec.head.hidden_widths)
    ));
    out.push_str(&format!("output_dim = {}\n", params.spec.head.output_dim));
    let norm = match params.spec.head.norm {
        HeadNorm::None => "none",
        HeadNorm::Layer => "layer",
        HeadNorm::Batch => "batch",
    };
    out.push_str(&format!("norm = {norm}\n"));
    out.push_str(&format!("bn_running = {}\n", params.bn_running.len()));
    out.push_str(&format!("values = {}\n", params.values.len()));
    for v in &params.bn_running {
        out.push_str(&format!("{v}\n"));
    }
    for v in &params.values {
        out.push_str(&format!("{v}\n"));
    }
    out
}

fn join_widths(widths: &[usize]) -> String {
    if widths.is_empty() {
        return "-".to_string();
    }
    widths
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(text: &str, path: &str, line_no: usize) -> Result<Vec<usize>> {
    if text == "-" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(path, line_no, format!("invalid width `{t}`")))
        })
        .collect()
}

pub fn parse_params(text: &str) -> Result<NetworkParams> {
    let path = "params";
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty parameter file"))?;
    if header.trim() != "cloudup-params v1" {
        return Err(Error::parse(path, 1, "unknown params version"));
    }
    let mut task: Option<TrainTask> = None;
    let mut init_seed: Option<u64> = None;
    let mut input_k: Option<usize> = None;
    let mut encoder: Option<Vec<usize>> = None;
    let mut head: Option<Vec<usize>> = None;
    let mut output_dim: Option<usize> = None;
    let mut norm: Option<HeadNorm> = None;
    let mut bn_len: Option<usize> = None;
    let mut value_len: Option<usize> = None;

    let mut numbers: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if value_len.is_some() && bn_len.is_some() && !line.contains('=') {
            let v: f64 = line
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("invalid value `{line}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line_no, "non-finite parameter"));
            }
            numbers.push(v);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line_no, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "task" => {
                task = Some(value.parse()?);
            }
            "init_seed" => {
                init_seed = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(path, line_no, "invalid seed"))?,
                )
            }
            "input_k" => {
                input_k = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(path, line_no, "invalid input_k"))?,
                )
            }
            "encoder" => encoder = Some(parse_widths(value, path, line_no)?),
            "head" => head = Some(parse_widths(value, path, line_no)?),
            "output_dim" => {
                output_dim = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(path, line_no, "invalid output_dim"))?,
                )
            }
            "norm" => {
                norm = Some(match value {
                    "none" => HeadNorm::None,
                    "layer" => HeadNorm::Layer,
                    "batch" => HeadNorm::Batch,
                    other => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("unknown norm `{other}`"),
                        ))
                    }
                })
            }
            "bn_running" => {
                bn_len = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(path, line_no, "invalid count"))?,
                )
            }
            "values" => {
                value_len = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(path, line_no, "invalid count"))?,
                )
            }
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unknown key `{other}`"),
                ))
            }
        }
    }

    let missing = |name: &str| Error::parse(path, 0, format!("missing `{name}` field"));
    let spec = NetworkSpec {
        encoder: EncoderSpec {
            per_point_widths: encoder.ok_or_else(|| missing("encoder"))?,
        },
        head: HeadSpec {
            hidden_widths: head.ok_or_else(|| missing("head"))?,
            output_dim: output_dim.ok_or_else(|| missing("output_dim"))?,
            norm: norm.ok_or_else(|| missing("norm"))?,
        },
    };
    spec.validate()?;
    let bn_len = bn_len.ok_or_else(|| missing("bn_running"))?;
    let value_len = value_len.ok_or_else(|| missing("values"))?;
    if numbers.len() != bn_len + value_len {
        return Err(Error::parse(
            path,
            0,
            format!(
                "expected {} numbers, found {}",
                bn_len + value_len,
                numbers.len()
            ),
        ));
    }
    let values = numbers.split_off(bn_len);
    let params = NetworkParams {
        spec,
        values,
        bn_running: numbers,
        init_seed: init_seed.ok_or_else(|| missing("init_seed"))?,
        input_k: input_k.ok_or_else(|| missing("input_k"))?,
        task,
    };
    let layout = params.layout();
    if params.values.len() != layout.total || params.bn_running.len() != layout.running_len {
        return Err(Error::parse(path, 0, "parameter counts do not match spec"));
    }
    if let (Some(task), dim) = (params.task, params.spec.head.output_dim) {
        if task.output_dim() != dim {
            return Err(Error::parse(
                path,
                0,
                format!("task `{}` requires output_dim {}", task.name(), task.output_dim()),
            ));
        }
    }
    Ok(params)
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_params(params))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_params(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}
