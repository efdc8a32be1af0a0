//! Activation-map dumps: the raw input next to every channel the client
//! would send in plaintext, plus how closely the best channel tracks the input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{Dataset, CLASS_NAMES};
use crate::nn::{ActivationCache, ClientModel};

use super::AppError;

#[derive(Clone, Debug, PartialEq)]
pub struct AmDump {
    pub sample: usize,
    pub label: usize,
    /// `[channel][t]`
    pub input: Vec<Vec<f64>>,
    /// `[channel][t]`, at the pooled resolution
    pub am: Vec<Vec<f64>>,
    pub best_channel: usize,
    pub pearson: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (ma, mb) = (a[..n].iter().sum::<f64>() / n as f64, b[..n].iter().sum::<f64>() / n as f64);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (a[i] - ma, b[i] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Block-averages `x` down to `len` points.
fn downsample(x: &[f64], len: usize) -> Vec<f64> {
    let f = x.len() / len.max(1);
    (0..len).map(|i| x[i * f..(i + 1) * f].iter().sum::<f64>() / f as f64).collect()
}

pub fn activation_maps(model: &ClientModel, ds: &Dataset, indices: &[usize]) -> Result<Vec<AmDump>, AppError> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(AppError::Config(format!("sample index {bad} out of range (dataset has {})", ds.len())));
    }
    let (c, t) = (ds.channels(), ds.timesteps());
    let x = ds.x.gather_rows(indices);
    let mut cache = ActivationCache::default();
    let am = model.forward(&x, &mut cache).map_err(|e| AppError::Config(e.to_string()))?;
    let am_ch = model.conv2.out_channels;
    let width = am.dim(1) / am_ch;
    let mut out = Vec::with_capacity(indices.len());
    for (r, &i) in indices.iter().enumerate() {
        let xr = &x.data()[r * c * t..(r + 1) * c * t];
        let input: Vec<Vec<f64>> = xr.chunks(t).map(|s| s.to_vec()).collect();
        let ar = &am.data()[r * am.dim(1)..(r + 1) * am.dim(1)];
        let maps: Vec<Vec<f64>> = ar.chunks(width).map(|s| s.to_vec()).collect();
        let mean: Vec<f64> = (0..t).map(|k| input.iter().map(|ch| ch[k]).sum::<f64>() / c as f64).collect();
        let reference = downsample(&mean, width);
        let (best_channel, pearson) =
            maps.iter().map(|m| pearson(&reference, m)).enumerate().fold((0, 0.0), |(bi, bp), (k, p)| {
                if p.abs() > f64::abs(bp) {
                    (k, p)
                } else {
                    (bi, bp)
                }
            });
        out.push(AmDump { sample: i, label: ds.y[i], input, am: maps, best_channel, pearson });
    }
    Ok(out)
}

/// Columns `t, in_c*, am_c*`; activation columns are empty past their length.
pub fn dump_csv(d: &AmDump) -> String {
    let mut s = String::from("t");
    for k in 0..d.input.len() {
        let _ = write!(s, ",in_c{k}");
    }
    for k in 0..d.am.len() {
        let _ = write!(s, ",am_c{k}");
    }
    s.push('\n');
    let rows = d.input.first().map_or(0, |c| c.len());
    for t in 0..rows {
        let _ = write!(s, "{t}");
        for ch in &d.input {
            let _ = write!(s, ",{:.6}", ch[t]);
        }
        for ch in &d.am {
            match ch.get(t) {
                Some(v) => {
                    let _ = write!(s, ",{v:.6}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Stacked panels, input first, each on its own y range.
pub fn dump_svg(d: &AmDump) -> String {
    let series: Vec<(String, &Vec<f64>)> = d
        .input
        .iter()
        .enumerate()
        .map(|(k, c)| (format!("input c{k}"), c))
        .chain(d.am.iter().enumerate().map(|(k, c)| (format!("AM c{k}"), c)))
        .collect();
    let (w, ph) = (720.0, 70.0);
    let h = ph * series.len() as f64 + 30.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">sample {} (class {}), best AM channel {} r={:.3}</text>\n",
        d.sample,
        CLASS_NAMES.get(d.label).unwrap_or(&"?"),
        d.best_channel,
        d.pearson
    );
    for (p, (name, ys)) in series.iter().enumerate() {
        let top = 30.0 + ph * p as f64;
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
        let n = ys.len().max(2) - 1;
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let px = 90.0 + (w - 110.0) * k as f64 / n as f64;
                let py = top + ph - 8.0 - (ph - 16.0) * (y - lo) / span;
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let color = if p < d.input.len() { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            s,
            "<text x=\"6\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{name}</text>\n<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
            top + ph / 2.0,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `am_<i>.csv`, optionally `am_<i>.svg`, and `am_correlation.csv`.
pub fn write_dumps(dir: &Path, dumps: &[AmDump], svg: bool) -> Result<Vec<PathBuf>, AppError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut corr = String::from("sample,label,best_channel,pearson\n");
    for d in dumps {
        let p = dir.join(format!("am_{}.csv", d.sample));
        std::fs::write(&p, dump_csv(d))?;
        files.push(p);
        if svg {
            let p = dir.join(format!("am_{}.svg", d.sample));
            std::fs::write(&p, dump_svg(d))?;
            files.push(p);
        }
        let _ = writeln!(corr, "{},{},{},{:.6}", d.sample, d.label, d.best_channel, d.pearson);
    }
    let p = dir.join("am_correlation.csv");
    std::fs::write(&p, corr)?;
    files.push(p);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, SynthSpec};
    use crate::nn::{ModelParams, ModelVariant};

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn m1_dump_has_one_input_and_eight_maps() {
        let ds = generate_synth(&SynthSpec { per_class: 2, ..SynthSpec::for_variant(ModelVariant::M1, 1) });
        let m = ModelParams::init(ModelVariant::M1, 1).client;
        let d = activation_maps(&m, &ds, &[3]).unwrap();
        assert_eq!(d[0].input.len(), 1);
        assert_eq!(d[0].am.len(), 8);
        assert_eq!(d[0].am[0].len(), 32);
        assert!(activation_maps(&m, &ds, &[10]).is_err());
        let csv = dump_csv(&d[0]);
        assert_eq!(csv.lines().count(), 129);
        assert!(csv.starts_with("t,in_c0,am_c0"));
    }
}
