//! Plain-text checkpoint container.
//!
//! ```text
//! delelstm-checkpoint 1
//! config <key> = <value>          one line per training setting
//! target <name>
//! variable <name>                 one line per input, in order
//! scaler mean <v1> ... <vD>       optional, together with the next three
//! scaler std <v1> ... <vD>
//! scaler target_mean <v>
//! scaler target_std <v>
//! best_epoch <n|none>
//! epoch <n> <train_mse> <val_rmse|none>
//! block <name> <d1>x<d2>...       followed by the row-major values,
//! <v> <v> ...                     one line per last-axis row
//! end
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every parameter bit for bit. Names run to the
//! end of their line and may contain spaces.

use std::fmt::Write as _;
use std::path::Path;

use delelstm_core::data::Scaler;
use delelstm_core::model::DelelstmParams;
use delelstm_core::train::{Checkpoint, EpochRecord, History, TrainConfig};
use delelstm_core::Tensor;

use crate::config::{apply_train, train_pairs};
use crate::error::{Error, Result};

const MAGIC: &str = "delelstm-checkpoint 1";

pub fn to_text(ck: &Checkpoint) -> String {
    let mut s = String::new();
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let _ = writeln!(s, "{MAGIC}");
    for (k, v) in train_pairs(&ck.config) {
        let _ = writeln!(s, "config {k} = {v}");
    }
    let _ = writeln!(s, "target {}", ck.target_name);
    for name in &ck.variable_names {
        let _ = writeln!(s, "variable {name}");
    }
    if let Some(sc) = &ck.scaler {
        let _ = writeln!(s, "scaler mean {}", join(&sc.mean));
        let _ = writeln!(s, "scaler std {}", join(&sc.std));
        let _ = writeln!(s, "scaler target_mean {}", sc.target_mean);
        let _ = writeln!(s, "scaler target_std {}", sc.target_std);
    }
    match ck.history.best_epoch {
        Some(e) => {
            let _ = writeln!(s, "best_epoch {e}");
        }
        None => {
            let _ = writeln!(s, "best_epoch none");
        }
    }
    for r in &ck.history.epochs {
        let val = r.val_rmse.map_or_else(|| "none".to_owned(), |v| v.to_string());
        let _ = writeln!(s, "epoch {} {} {val}", r.epoch, r.train_mse);
    }
    for (name, t) in ck.params.blocks() {
        let shape = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        let _ = writeln!(s, "block {name} {shape}");
        for row in t.data().chunks(t.last_dim().max(1)) {
            let _ = writeln!(s, "{}", join(row));
        }
    }
    let _ = writeln!(s, "end");
    s
}

fn bad<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line: line as u64,
        message: msg.into(),
    })
}

fn floats(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|w| w.parse::<f64>().or_else(|_| bad(line, format!("bad number '{w}'"))))
        .collect()
}

fn float(line: usize, text: &str) -> Result<f64> {
    text.trim().parse().or_else(|_| bad(line, format!("bad number '{text}'")))
}

pub fn from_text(text: &str) -> Result<Checkpoint> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == MAGIC => {}
        _ => return bad(1, format!("not a checkpoint (expected '{MAGIC}')")),
    }
    let mut config = TrainConfig::default();
    let mut target = None;
    let mut names = Vec::new();
    let (mut mean, mut std, mut tmean, mut tstd) = (None, None, None, None);
    let mut history = History::default();
    let mut blocks: Vec<(String, Tensor)> = Vec::new();
    let mut ended = false;

    while let Some((no, line)) = lines.next() {
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "config" => {
                let Some((k, v)) = rest.split_once(" = ") else {
                    return bad(no, "expected 'config key = value'");
                };
                let known = apply_train(&mut config, k.trim(), v.trim()).or_else(|e| bad(no, e.to_string()))?;
                if !known {
                    return bad(no, format!("unknown config key '{k}'"));
                }
            }
            "target" => target = Some(rest.to_owned()),
            "variable" => names.push(rest.to_owned()),
            "scaler" => {
                let (field, v) = rest.split_once(' ').unwrap_or((rest, ""));
                match field {
                    "mean" => mean = Some(floats(no, v)?),
                    "std" => std = Some(floats(no, v)?),
                    "target_mean" => tmean = Some(float(no, v)?),
                    "target_std" => tstd = Some(float(no, v)?),
                    _ => return bad(no, format!("unknown scaler field '{field}'")),
                }
            }
            "best_epoch" => {
                history.best_epoch = match rest.trim() {
                    "none" => None,
                    v => Some(v.parse().or_else(|_| bad(no, format!("bad epoch '{v}'")))?),
                }
            }
            "epoch" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return bad(no, "expected 'epoch <n> <train_mse> <val_rmse>'");
                }
                history.epochs.push(EpochRecord {
                    epoch: parts[0].parse().or_else(|_| bad(no, "bad epoch number"))?,
                    train_mse: float(no, parts[1])?,
                    val_rmse: match parts[2] {
                        "none" => None,
                        v => Some(float(no, v)?),
                    },
                });
            }
            "block" => {
                let Some((name, dims)) = rest.rsplit_once(' ') else {
                    return bad(no, "expected 'block <name> <shape>'");
                };
                let shape: Vec<usize> = dims
                    .split('x')
                    .map(|d| d.parse().or_else(|_| bad(no, format!("bad shape '{dims}'"))))
                    .collect::<Result<_>>()?;
                let len: usize = shape.iter().product();
                let mut data = Vec::with_capacity(len);
                while data.len() < len {
                    let Some((vno, vline)) = lines.next() else {
                        return bad(no, format!("block '{name}' is truncated"));
                    };
                    data.extend(floats(vno, vline)?);
                }
                if data.len() != len {
                    return bad(no, format!("block '{name}' has {} values, shape needs {len}", data.len()));
                }
                let t = Tensor::new(&shape, data).or_else(|e| bad(no, e.to_string()))?;
                blocks.push((name.to_owned(), t));
            }
            "end" => {
                ended = true;
                break;
            }
            "" => {}
            other => return bad(no, format!("unknown record '{other}'")),
        }
    }
    if !ended {
        return bad(text.lines().count(), "missing 'end'");
    }
    let target_name = target.ok_or(()).or_else(|_| bad(0, "missing target"))?;
    let scaler = match (mean, std, tmean, tstd) {
        (Some(mean), Some(std), Some(target_mean), Some(target_std)) => Some(Scaler {
            mean,
            std,
            target_mean,
            target_std,
        }),
        (None, None, None, None) => None,
        _ => return bad(0, "incomplete scaler"),
    };
    let inputs = names.len();
    let params = DelelstmParams::from_blocks(config.model, inputs, config.hidden, &blocks).or_else(|e| bad(0, e.to_string()))?;
    Ok(Checkpoint {
        config,
        params,
        history,
        scaler,
        variable_names: names,
        target_name,
    })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_text(ck)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text).map_err(|e| Error::Checkpoint {
        path: path.to_owned(),
        message: e.to_string(),
    })
}
