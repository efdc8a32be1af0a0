//! Per-epoch CSV reports, summary rows, SVG line plots and model files.

use std::fmt::Write as _;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::{read_tensor, write_tensor};
use crate::nn::{ClientModel, ModelParams, ModelVariant, ServerModel, Tensor};
use crate::split::{EpochMetrics, TrainConfig};

use super::AppError;

pub const EPOCH_HEADER: &str = "epoch,time_s,loss,train_acc,test_acc,bytes_c2s,bytes_s2c";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn epochs_csv(metrics: &[EpochMetrics]) -> String {
    let mut s = String::from(EPOCH_HEADER);
    s.push('\n');
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{:.3},{:.10},{:.4},{},{},{}",
            m.epoch,
            m.time_s,
            m.loss,
            m.train_acc,
            fmt_opt(m.test_acc),
            m.bytes_c2s,
            m.bytes_s2c
        );
    }
    s
}

/// One row with the columns of the usual HE comparison table.
pub fn summary_csv(cfg: &TrainConfig, metrics: &[EpochMetrics]) -> String {
    let n = metrics.len().max(1) as f64;
    let time = metrics.iter().map(|m| m.time_s).sum::<f64>() / n;
    let comm = metrics.iter().map(|m| m.bytes_c2s + m.bytes_s2c).sum::<u64>() as f64 / n;
    let last = metrics.last();
    let (n_deg, chain, scale) = match &cfg.he {
        Some(p) => (
            p.degree.to_string(),
            format!("[{}]", p.chain_bits.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")),
            format!("2^{}", p.scale_bits),
        ),
        None => ("-".into(), "-".into(), "-".into()),
    };
    format!(
        "mode,variant,ring_degree,chain,scale,be,time_per_epoch_s,test_acc,train_loss,comm_per_epoch_bytes\n{},{},{},{},{},{},{:.3},{},{},{:.0}\n",
        cfg.mode.name(),
        cfg.variant,
        n_deg,
        chain,
        scale,
        cfg.batched,
        time,
        fmt_opt(last.and_then(|m| m.test_acc)),
        last.map(|m| format!("{:.10}", m.loss)).unwrap_or_default(),
        comm
    )
}

pub fn write_reports(dir: &Path, cfg: &TrainConfig, metrics: &[EpochMetrics], plots: bool) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("epochs.csv"), epochs_csv(metrics))?;
    std::fs::write(dir.join("summary.csv"), summary_csv(cfg, metrics))?;
    if plots {
        let loss: Vec<f64> = metrics.iter().map(|m| m.loss).collect();
        std::fs::write(dir.join("loss.svg"), line_plot("training loss", &[("loss", &loss)]))?;
        let tr: Vec<f64> = metrics.iter().map(|m| m.train_acc).collect();
        let te: Vec<f64> = metrics.iter().filter_map(|m| m.test_acc).collect();
        std::fs::write(dir.join("accuracy.svg"), line_plot("accuracy (%)", &[("train", &tr), ("test", &te)]))?;
    }
    Ok(())
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Minimal static SVG with one polyline per series, sharing the y range.
pub fn line_plot(title: &str, series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let all: Vec<f64> = series.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if all.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
    );
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let n = ys.len().max(2) - 1;
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let px = pad + (w - 2.0 * pad) * k as f64 / n as f64;
                let py = h - pad - (h - 2.0 * pad) * (y - lo) / (hi - lo);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            w - pad - 80.0,
            30.0 + 14.0 * i as f64
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"4\" y=\"{}\" font-size=\"10\">{lo:.3}</text>\n<text x=\"4\" y=\"{}\" font-size=\"10\">{hi:.3}</text>\n</svg>",
        h - pad,
        pad
    );
    s
}

fn blocks_to_file(path: &Path, blocks: &[&[f64]]) -> Result<(), AppError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for b in blocks {
        let t = Tensor::new(&[b.len()], b.to_vec()).map_err(|e| AppError::Config(e.to_string()))?;
        write_tensor(&mut w, &t)?;
    }
    w.flush()?;
    Ok(())
}

fn read_blocks(path: &Path, sizes: &[usize]) -> Result<Vec<Vec<f64>>, AppError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let t = read_tensor(&mut r)?;
        if t.len() != n {
            return Err(AppError::Config(format!(
                "{}: parameter block of {} values, expected {n}",
                path.display(),
                t.len()
            )));
        }
        out.push(t.into_data());
    }
    Ok(out)
}

pub fn save_client_model(path: &Path, m: &ClientModel) -> Result<(), AppError> {
    blocks_to_file(path, &[&m.conv1.w, &m.conv1.b, &m.conv2.w, &m.conv2.b])
}

pub fn load_client_model(path: &Path, variant: ModelVariant) -> Result<ClientModel, AppError> {
    let mut m = ClientModel::zeros(variant);
    let mut b = read_blocks(path, &m.block_sizes())?.into_iter();
    m.conv1.w = b.next().unwrap();
    m.conv1.b = b.next().unwrap();
    m.conv2.w = b.next().unwrap();
    m.conv2.b = b.next().unwrap();
    Ok(m)
}

pub fn save_server_model(path: &Path, m: &ServerModel) -> Result<(), AppError> {
    blocks_to_file(path, &[&m.linear.w, &m.linear.b])
}

pub fn save_model(dir: &Path, p: &ModelParams) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)?;
    save_client_model(&dir.join("client_model.t64"), &p.client)?;
    save_server_model(&dir.join("server_model.t64"), &p.server)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(epoch: usize) -> EpochMetrics {
        EpochMetrics {
            epoch,
            time_s: 1.5,
            loss: 0.5,
            train_acc: 50.0,
            test_acc: Some(40.0),
            bytes_c2s: 10,
            bytes_s2c: 20,
        }
    }

    #[test]
    fn csv_rows() {
        let s = epochs_csv(&[m(1), m(2)]);
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().starts_with("1,1.500,"));
        let sum = summary_csv(&TrainConfig::default(), &[m(1)]);
        assert!(sum.contains("local,m1,-"));
        assert!(line_plot("x", &[("a", &[1.0, 2.0])]).starts_with("<svg"));
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::init(ModelVariant::M1, 3);
        save_model(dir.path(), &p).unwrap();
        let c = load_client_model(&dir.path().join("client_model.t64"), ModelVariant::M1).unwrap();
        assert_eq!(c, p.client);
        assert!(load_client_model(&dir.path().join("client_model.t64"), ModelVariant::M2).is_err());
    }
}
