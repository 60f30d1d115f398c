//! Static SVG renderings of report and dataset CSVs.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use combinfer_core::generative::LabeledDataset;
use combinfer_core::io::{read_loss_csv, DatasetFile};
use combinfer_core::Error;

#[derive(Args)]
pub struct PlotArgs {
    /// Report CSV from `diagnose`, a loss CSV, or a dataset CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines samples; the first line's labels colour a point dataset.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
    color: &'static str,
}

enum Chart {
    Lines { series: Vec<Series>, band: Option<Vec<(f64, f64, f64)>> },
    Bars { categories: Vec<String>, groups: Vec<(String, Vec<f64>)> },
    Scatter { points: Vec<(f64, f64, usize)> },
    Grid { n: usize, cells: Vec<i8> },
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Frame { x: range(&mut xs.clone()), y: range(&mut ys.clone()) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn axes(svg: &mut String, fr: &Frame, numeric_x: bool) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(svg, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##, x1 - x0, y1 - y0);
    for t in ticks(fr.y.0, fr.y.1) {
        let y = fr.py(t);
        let _ = writeln!(svg, r##"<line x1="{}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="#333"/>"##, x0 - 4.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt_tick(t));
    }
    if numeric_x {
        for t in ticks(fr.x.0, fr.x.1) {
            let x = fr.px(t);
            let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{y1}" x2="{x:.1}" y2="{}" stroke="#333"/>"##, y1 + 4.0);
            let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, y1 + 16.0, fmt_tick(t));
        }
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(svg: &mut String, items: &[(String, &str, bool)]) {
    for (i, (name, col, dashed)) in items.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = W - RIGHT - 150.0;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{col}" stroke-width="2"{dash}/>"#, x + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, x + 26.0, y + 4.0, escape(name));
    }
}

fn render(chart: &Chart, title: &str, x_label: &str, y_label: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    );
    match chart {
        Chart::Lines { series, band } => {
            let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
            let band_ys = band.iter().flatten().flat_map(|b| [b.1, b.2]);
            let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(band_ys);
            let fr = Frame::new(xs.collect::<Vec<_>>().into_iter(), ys.collect::<Vec<_>>().into_iter());
            axes(&mut svg, &fr, true);
            if let Some(b) = band.as_ref().filter(|b| !b.is_empty()) {
                let mut d = String::new();
                for (i, (x, lo, _)) in b.iter().enumerate() {
                    let _ = write!(d, "{}{:.1},{:.1} ", if i == 0 { "M" } else { "L" }, fr.px(*x), fr.py(*lo));
                }
                for (x, _, hi) in b.iter().rev() {
                    let _ = write!(d, "L{:.1},{:.1} ", fr.px(*x), fr.py(*hi));
                }
                let _ = writeln!(svg, r##"<path d="{d}Z" fill="#999" fill-opacity="0.25" stroke="none"/>"##);
            }
            for s in series.iter().filter(|s| !s.points.is_empty()) {
                let pts: Vec<String> = s.points.iter().map(|(x, y)| format!("{:.1},{:.1}", fr.px(*x), fr.py(*y))).collect();
                let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
                let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#, pts.join(" "), s.color);
            }
            let items: Vec<(String, &str, bool)> = series.iter().map(|s| (s.name.clone(), s.color, s.dashed)).collect();
            legend(&mut svg, &items);
        }
        Chart::Bars { categories, groups } => {
            let ys = groups.iter().flat_map(|g| g.1.iter().copied()).chain([0.0]);
            let fr = Frame { x: (0.0, categories.len().max(1) as f64), y: Frame::new([0.0].into_iter(), ys.collect::<Vec<_>>().into_iter()).y };
            let fr = Frame { y: (0.0, fr.y.1), ..fr };
            axes(&mut svg, &fr, false);
            let slot = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
            let bw = 0.8 * slot / groups.len().max(1) as f64;
            for (c, name) in categories.iter().enumerate() {
                let x0 = LEFT + c as f64 * slot + 0.1 * slot;
                for (g, (_, vals)) in groups.iter().enumerate() {
                    let v = vals.get(c).copied().unwrap_or(0.0);
                    let (top, base) = (fr.py(v), fr.py(0.0));
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{:.1}" y="{top:.1}" width="{bw:.1}" height="{:.1}" fill="{}"/>"#,
                        x0 + g as f64 * bw,
                        (base - top).max(0.0),
                        color(g)
                    );
                }
                if categories.len() <= 40 {
                    let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{}</text>"#, x0 + 0.4 * slot, H - BOTTOM + 14.0, escape(name));
                }
            }
            let items: Vec<(String, &str, bool)> = groups.iter().enumerate().map(|(g, (n, _))| (n.clone(), color(g), false)).collect();
            legend(&mut svg, &items);
        }
        Chart::Scatter { points } => {
            let fr = Frame::new(points.iter().map(|p| p.0).collect::<Vec<_>>().into_iter(), points.iter().map(|p| p.1).collect::<Vec<_>>().into_iter());
            axes(&mut svg, &fr, true);
            for (x, y, c) in points {
                let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{}" fill-opacity="0.85"/>"#, fr.px(*x), fr.py(*y), color(*c));
            }
        }
        Chart::Grid { n, cells } => {
            let side = (H - TOP - BOTTOM).min(W - LEFT - RIGHT);
            let cell = side / (*n).max(1) as f64;
            for i in 0..*n {
                for j in 0..*n {
                    let fill = if cells[i * n + j] > 0 { "#222" } else { "#eee" };
                    let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}"/>"#, LEFT + j as f64 * cell, TOP + i as f64 * cell);
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn read_table(path: &PathBuf) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Format(format!("{}: row has {} fields, header has {}", path.display(), rec.len(), header.len())).into());
        }
        rows.push(
            rec.iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("{}: not a number: {s:?}", path.display()))))
                .collect::<combinfer_core::Result<Vec<f64>>>()?,
        );
    }
    Ok((header, rows))
}

fn sample_labels(path: &PathBuf) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().ok_or_else(|| Error::Format("empty samples file".into()))?;
    let v: serde_json::Value = serde_json::from_str(first)?;
    let labels = v
        .get("labels")
        .and_then(|l| l.as_array())
        .ok_or_else(|| Error::Format("sample line has no labels".into()))?;
    labels
        .iter()
        .map(|l| l.as_u64().filter(|&x| x >= 1).map(|x| x as usize - 1).ok_or_else(|| Error::Format("labels are 1-based integers".into()).into()))
        .collect()
}

fn dataset_chart(file: &DatasetFile, labels: Option<Vec<usize>>) -> Result<(Chart, &'static str, &'static str)> {
    let ds = file.datasets.first().ok_or_else(|| Error::Format("dataset file holds no datasets".into()))?;
    let colour = |n: usize, truth: Option<&combinfer_core::assignment::Assignment>| -> Result<Vec<usize>> {
        match (&labels, truth) {
            (Some(l), _) if l.len() != n => Err(Error::Format("sample labels and dataset differ in length".into()).into()),
            (Some(l), _) => Ok(l.clone()),
            (None, Some(t)) => Ok(t.labels().to_vec()),
            (None, None) => Ok(vec![0; n]),
        }
    };
    Ok(match ds {
        LabeledDataset::Clustering { points, truth } | LabeledDataset::Particles { points, truth, .. } => {
            let c = colour(points.len(), truth.as_ref())?;
            (Chart::Scatter { points: points.iter().zip(c).map(|(p, k)| (p[0], p.get(1).copied().unwrap_or(0.0), k)).collect() }, "x0", "x1")
        }
        LabeledDataset::Pairs { x, y, .. } => {
            let mut pts: Vec<(f64, f64, usize)> = x.iter().map(|p| (p[0], p[1], 0)).collect();
            pts.extend(y.iter().map(|p| (p[0], p[1], 1)));
            (Chart::Scatter { points: pts }, "0", "1")
        }
        LabeledDataset::Graph { adjacency, .. } => {
            let n = adjacency.n();
            let cells = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| adjacency.get(i, j)).collect();
            (Chart::Grid { n, cells }, "j", "i")
        }
    })
}

pub fn run(args: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    let title = args.title.clone().unwrap_or(stem);
    let svg = if text.starts_with("# kind=") {
        let file = DatasetFile::read_from(text.as_bytes())?;
        let labels = args.labels.as_ref().map(sample_labels).transpose()?;
        let (chart, xl, yl) = dataset_chart(&file, labels)?;
        render(&chart, &title, xl, yl)
    } else {
        let (header, rows) = read_table(&args.input)?;
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let col = |i: usize| -> Vec<f64> { rows.iter().map(|r| r[i]).collect() };
        match h.as_slice() {
            ["iter", "loss"] => {
                let pts = read_loss_csv(&args.input)?.into_iter().map(|(i, l)| (i as f64, l)).collect();
                let s = Series { name: "loss".into(), points: pts, dashed: false, color: color(0) };
                render(&Chart::Lines { series: vec![s], band: None }, &title, "iteration", "loss")
            }
            ["k", "exact", "estimated"] => {
                let categories = col(0).iter().map(|k| format!("{k}")).collect();
                let groups = vec![("exact".to_string(), col(1)), ("estimated".to_string(), col(2))];
                render(&Chart::Bars { categories, groups }, &title, "number of clusters K", "probability")
            }
            ["n", "exact_mean", "exact_std", "estimated_mean", ..] => {
                let (n, m, s, e) = (col(0), col(1), col(2), col(3));
                let band = (0..n.len()).map(|i| (n[i], m[i] - s[i], m[i] + s[i])).collect();
                let series = vec![
                    Series { name: "exact mean".into(), points: n.iter().copied().zip(m).collect(), dashed: false, color: color(0) },
                    Series { name: "estimated mean".into(), points: n.iter().copied().zip(e).collect(), dashed: true, color: color(1) },
                ];
                render(&Chart::Lines { series, band: Some(band) }, &title, "N", "mean K")
            }
            ["x", rest @ ..] if !rest.is_empty() && rest.iter().all(|c| c.starts_with("exact_") || c.starts_with("model_")) => {
                let x = col(0);
                let mut series = Vec::new();
                for (i, name) in rest.iter().enumerate() {
                    let (kind, k) = name.split_once('_').expect("checked prefix");
                    let k: usize = k.parse().map_err(|_| Error::Format(format!("bad column {name:?}")))?;
                    let label = if k + 1 == rest.len() / 2 { "new".to_string() } else { format!("cluster {}", k + 1) };
                    series.push(Series {
                        name: format!("{kind} {label}"),
                        points: x.iter().copied().zip(col(i + 1)).collect(),
                        dashed: kind == "model",
                        color: color(k),
                    });
                }
                render(&Chart::Lines { series, band: None }, &title, "probe position", "p(c = k)")
            }
            ["dataset", "tv", "kl"] => {
                let categories = col(0).iter().map(|d| format!("{d}")).collect();
                render(&Chart::Bars { categories, groups: vec![("tv".to_string(), col(1))] }, &title, "dataset", "TV distance")
            }
            ["batch", "n", "mean_nll", "std_nll", "ratio"] => {
                let categories = col(0).iter().map(|d| format!("{d}")).collect();
                render(&Chart::Bars { categories, groups: vec![("std/mean".to_string(), col(4))] }, &title, "batch", "NLL std / mean")
            }
            _ => return Err(Error::Format(format!("{}: unrecognised columns {header:?}", args.input.display())).into()),
        }
    };
    std::fs::write(&args.out, svg)?;
    Ok(())
}
