//! Dataset CSV files. Several datasets share one file through a leading
//! `dataset` column. Comment lines start with `#`:
//!
//! ```text
//! # kind=clustering
//! # generative={"kind":"crp_gauss2d",...}
//! dataset,x0,x1,label
//! ```
//!
//! Columns per kind: clustering `x0,x1,...,label`; graph `i,j,value` over
//! i ≤ j with a `# dataset=<d> n=<n> truth=...` line per graph; pairs
//! `x0,x1,y0,y1,truth`; particles `t,x0,x1,truth`. Truth columns are
//! optional and hold 1-based labels (for pairs: the 1-based x index paired
//! with y_i). Node indices in graph files are 0-based.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::assignment::{Assignment, Permutation};
use crate::error::{Error, Result};
use crate::generative::{Adjacency, GenerativeSpec, LabeledDataset, PointSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Clustering,
    Graph,
    Pairs,
    Particles,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Clustering => "clustering",
            DatasetKind::Graph => "graph",
            DatasetKind::Pairs => "pairs",
            DatasetKind::Particles => "particles",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "clustering" => DatasetKind::Clustering,
            "graph" => DatasetKind::Graph,
            "pairs" => DatasetKind::Pairs,
            "particles" => DatasetKind::Particles,
            other => return Err(Error::Format(format!("unknown dataset kind {other:?}"))),
        })
    }

    pub fn of(ds: &LabeledDataset) -> Self {
        match ds {
            LabeledDataset::Clustering { .. } => DatasetKind::Clustering,
            LabeledDataset::Graph { .. } => DatasetKind::Graph,
            LabeledDataset::Pairs { .. } => DatasetKind::Pairs,
            LabeledDataset::Particles { .. } => DatasetKind::Particles,
        }
    }

    pub fn for_generative(spec: &GenerativeSpec) -> Self {
        match spec {
            GenerativeSpec::CrpGauss2d(_) | GenerativeSpec::MfmGauss2d(_) => DatasetKind::Clustering,
            GenerativeSpec::SbmBetaBernoulli(_) => DatasetKind::Graph,
            GenerativeSpec::NoisyPairs2d(_) => DatasetKind::Pairs,
            GenerativeSpec::DriftingParticles(_) => DatasetKind::Particles,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub kind: DatasetKind,
    pub generative: Option<GenerativeSpec>,
    pub datasets: Vec<LabeledDataset>,
}

impl DatasetFile {
    pub fn new(kind: DatasetKind, generative: Option<GenerativeSpec>, datasets: Vec<LabeledDataset>) -> Result<Self> {
        if let Some(bad) = datasets.iter().find(|d| DatasetKind::of(d) != kind) {
            return Err(Error::Format(format!("{} dataset in a {} file", bad.kind_name(), kind.name())));
        }
        Ok(DatasetFile { kind, generative, datasets })
    }

    fn has_truth(&self) -> bool {
        !self.datasets.is_empty()
            && self.datasets.iter().all(|d| match d {
                LabeledDataset::Pairs { truth, .. } => truth.is_some(),
                other => other.cluster_truth().is_some(),
            })
    }

    fn point_dim(&self) -> usize {
        self.datasets
            .iter()
            .find_map(|d| match d {
                LabeledDataset::Clustering { points, .. } | LabeledDataset::Particles { points, .. } => Some(points.dim()),
                LabeledDataset::Pairs { x, .. } => Some(x.dim()),
                LabeledDataset::Graph { .. } => None,
            })
            .unwrap_or(2)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kind={}", self.kind.name())?;
        if let Some(g) = &self.generative {
            writeln!(w, "# generative={}", serde_json::to_string(g)?)?;
        }
        let truth = self.has_truth();
        let dim = self.point_dim();
        let coords = |p: &str| (0..dim).map(|d| format!("{p}{d}")).collect::<Vec<_>>();
        let mut header = vec!["dataset".to_string()];
        match self.kind {
            DatasetKind::Clustering => {
                header.extend(coords("x"));
                if truth {
                    header.push("label".into());
                }
            }
            DatasetKind::Graph => {
                for (d, ds) in self.datasets.iter().enumerate() {
                    if let LabeledDataset::Graph { adjacency, truth: t } = ds {
                        write!(w, "# dataset={d} n={}", adjacency.n())?;
                        if let Some(t) = t {
                            let s: Vec<String> = t.to_one_based().iter().map(|v| v.to_string()).collect();
                            write!(w, " truth={}", s.join(","))?;
                        }
                        writeln!(w)?;
                    }
                }
                header.extend(["i", "j", "value"].map(String::from));
            }
            DatasetKind::Pairs => {
                header.extend(coords("x"));
                header.extend(coords("y"));
                if truth {
                    header.push("truth".into());
                }
            }
            DatasetKind::Particles => {
                header.push("t".into());
                header.extend(coords("x"));
                if truth {
                    header.push("truth".into());
                }
            }
        }
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(&header)?;
        let num = |v: f64| format!("{v:?}");
        for (d, ds) in self.datasets.iter().enumerate() {
            match ds {
                LabeledDataset::Clustering { points, truth: t } => {
                    let lab = t.as_ref().map(|t| t.to_one_based());
                    for i in 0..points.len() {
                        let mut rec = vec![d.to_string()];
                        rec.extend(points.point(i).iter().map(|&v| num(v)));
                        if let (true, Some(l)) = (truth, &lab) {
                            rec.push(l[i].to_string());
                        }
                        csv.write_record(&rec)?;
                    }
                }
                LabeledDataset::Graph { adjacency, .. } => {
                    for i in 0..adjacency.n() {
                        for j in i..adjacency.n() {
                            csv.write_record([d.to_string(), i.to_string(), j.to_string(), adjacency.get(i, j).to_string()])?;
                        }
                    }
                }
                LabeledDataset::Pairs { x, y, truth: t } => {
                    let lab = t.as_ref().map(|t| t.to_one_based());
                    for i in 0..y.len() {
                        let mut rec = vec![d.to_string()];
                        rec.extend(x.point(i).iter().map(|&v| num(v)));
                        rec.extend(y.point(i).iter().map(|&v| num(v)));
                        if let (true, Some(l)) = (truth, &lab) {
                            rec.push(l[i].to_string());
                        }
                        csv.write_record(&rec)?;
                    }
                }
                LabeledDataset::Particles { timestamps, points, truth: t } => {
                    let lab = t.as_ref().map(|t| t.to_one_based());
                    for i in 0..points.len() {
                        let mut rec = vec![d.to_string(), timestamps[i].to_string()];
                        rec.extend(points.point(i).iter().map(|&v| num(v)));
                        if let (true, Some(l)) = (truth, &lab) {
                            rec.push(l[i].to_string());
                        }
                        csv.write_record(&rec)?;
                    }
                }
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut kind = None;
        let mut generative = None;
        let mut graph_meta: BTreeMap<usize, (usize, Option<Assignment>)> = BTreeMap::new();
        let mut body = String::new();
        for line in BufReader::new(r).lines() {
            let line = line?;
            let Some(comment) = line.strip_prefix('#') else {
                body.push_str(&line);
                body.push('\n');
                continue;
            };
            let comment = comment.trim();
            if let Some(k) = comment.strip_prefix("kind=") {
                kind = Some(DatasetKind::parse(k.trim())?);
            } else if let Some(g) = comment.strip_prefix("generative=") {
                generative = Some(serde_json::from_str(g).map_err(|e| Error::Format(format!("generative comment: {e}")))?);
            } else if comment.starts_with("dataset=") {
                let (d, n, t) = parse_graph_comment(comment)?;
                graph_meta.insert(d, (n, t));
            }
        }
        let kind = kind.ok_or_else(|| Error::Format("missing `# kind=` line".into()))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let prefixed = |p: char| -> Vec<usize> {
            let mut v: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.strip_prefix(p).and_then(|s| s.parse::<usize>().ok()).map(|d| (d, i)))
                .collect();
            v.sort();
            v.into_iter().map(|(_, i)| i).collect()
        };
        let ds_col = col("dataset");
        let mut rows: BTreeMap<usize, Vec<csv::StringRecord>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let d = match ds_col {
                Some(c) => parse_usize(&rec[c], "dataset")?,
                None => 0,
            };
            rows.entry(d).or_default().push(rec);
        }
        let f = |rec: &csv::StringRecord, c: usize| -> Result<f64> {
            rec[c].parse::<f64>().map_err(|_| Error::Format(format!("not a number: {:?}", &rec[c])))
        };
        let mut datasets = Vec::new();
        match kind {
            DatasetKind::Clustering | DatasetKind::Particles => {
                let xs = prefixed('x');
                if xs.is_empty() {
                    return Err(Error::Format("no x0.. columns".into()));
                }
                let label_col = if kind == DatasetKind::Clustering { col("label") } else { col("truth") };
                let t_col = col("t");
                if kind == DatasetKind::Particles && t_col.is_none() {
                    return Err(Error::Format("particle file needs a t column".into()));
                }
                for recs in rows.values() {
                    let mut flat = Vec::with_capacity(recs.len() * xs.len());
                    let mut labels = Vec::new();
                    let mut times = Vec::new();
                    for rec in recs {
                        for &c in &xs {
                            flat.push(f(rec, c)?);
                        }
                        if let Some(c) = label_col {
                            labels.push(parse_usize(&rec[c], "label")?);
                        }
                        if let Some(c) = t_col {
                            times.push(parse_usize(&rec[c], "t")?);
                        }
                    }
                    let points = PointSet::new(xs.len(), flat)?;
                    let truth = label_col.map(|_| Assignment::from_one_based(&labels)).transpose()?;
                    datasets.push(if kind == DatasetKind::Clustering {
                        LabeledDataset::Clustering { points, truth }
                    } else {
                        if times.windows(2).any(|w| w[1] != w[0] + 1) {
                            return Err(Error::Format("particle times must be consecutive integers".into()));
                        }
                        LabeledDataset::Particles { timestamps: times, points, truth }
                    });
                }
            }
            DatasetKind::Pairs => {
                let (xs, ys) = (prefixed('x'), prefixed('y'));
                if xs.is_empty() || xs.len() != ys.len() {
                    return Err(Error::Format("pair files need matching x and y columns".into()));
                }
                let tc = col("truth");
                for recs in rows.values() {
                    let (mut fx, mut fy, mut t) = (Vec::new(), Vec::new(), Vec::new());
                    for rec in recs {
                        for &c in &xs {
                            fx.push(f(rec, c)?);
                        }
                        for &c in &ys {
                            fy.push(f(rec, c)?);
                        }
                        if let Some(c) = tc {
                            let v = parse_usize(&rec[c], "truth")?;
                            if v == 0 {
                                return Err(Error::Format("pair truth is 1-based".into()));
                            }
                            t.push(v - 1);
                        }
                    }
                    let truth = tc.map(|_| Permutation::new(t)).transpose()?;
                    datasets.push(LabeledDataset::Pairs {
                        x: PointSet::new(xs.len(), fx)?,
                        y: PointSet::new(ys.len(), fy)?,
                        truth,
                    });
                }
            }
            DatasetKind::Graph => {
                let (ci, cj, cv) = match (col("i"), col("j"), col("value")) {
                    (Some(a), Some(b), Some(c)) => (a, b, c),
                    _ => return Err(Error::Format("graph files need i,j,value columns".into())),
                };
                let ids: Vec<usize> = graph_meta.keys().copied().chain(rows.keys().copied()).collect();
                let mut ids = ids;
                ids.sort_unstable();
                ids.dedup();
                for d in ids {
                    let (n, truth) = graph_meta
                        .get(&d)
                        .cloned()
                        .ok_or_else(|| Error::Format(format!("graph {d} has no `# dataset={d} n=` line")))?;
                    let mut data = vec![0i8; n * n];
                    for rec in rows.get(&d).map(|v| v.as_slice()).unwrap_or(&[]) {
                        let (i, j) = (parse_usize(&rec[ci], "i")?, parse_usize(&rec[cj], "j")?);
                        let v: i8 = rec[cv].parse().map_err(|_| Error::Format(format!("bad value {:?}", &rec[cv])))?;
                        if i >= n || j >= n {
                            return Err(Error::Format(format!("edge ({i}, {j}) outside n={n}")));
                        }
                        data[i * n + j] = v;
                        data[j * n + i] = v;
                    }
                    if data.contains(&0) {
                        return Err(Error::Format(format!("graph {d} does not list every pair i ≤ j")));
                    }
                    if truth.as_ref().is_some_and(|t| t.len() != n) {
                        return Err(Error::Format(format!("graph {d} truth length differs from n")));
                    }
                    datasets.push(LabeledDataset::Graph { adjacency: Adjacency::new(n, data)?, truth });
                }
            }
        }
        DatasetFile::new(kind, generative, datasets)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::read_from(f)
    }
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Format(format!("{what}: not a non-negative integer: {s:?}")))
}

fn parse_graph_comment(c: &str) -> Result<(usize, usize, Option<Assignment>)> {
    let (mut d, mut n, mut t) = (None, None, None);
    for part in c.split_whitespace() {
        if let Some(v) = part.strip_prefix("dataset=") {
            d = Some(parse_usize(v, "dataset")?);
        } else if let Some(v) = part.strip_prefix("n=") {
            n = Some(parse_usize(v, "n")?);
        } else if let Some(v) = part.strip_prefix("truth=") {
            let labels = v.split(',').map(|s| parse_usize(s, "truth")).collect::<Result<Vec<_>>>()?;
            t = Some(Assignment::from_one_based(&labels)?);
        }
    }
    match (d, n) {
        (Some(d), Some(n)) => Ok((d, n, t)),
        _ => Err(Error::Format(format!("bad graph line {c:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{GenerativeSpec, NRange, SbmSpec};
    use crate::rng;

    fn round_trip(file: &DatasetFile) -> DatasetFile {
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        DatasetFile::read_from(&buf[..]).unwrap()
    }

    #[test]
    fn every_kind_round_trips() {
        let specs = [
            GenerativeSpec::CrpGauss2d(Default::default()),
            GenerativeSpec::SbmBetaBernoulli(SbmSpec { n_range: NRange::new(3, 8).unwrap(), ..Default::default() }),
            GenerativeSpec::NoisyPairs2d(Default::default()),
            GenerativeSpec::DriftingParticles(Default::default()),
        ];
        for spec in specs {
            let datasets: Vec<_> = (0..3).map(|i| spec.sample(&mut rng::stream(5, "io", i)).unwrap()).collect();
            let file = DatasetFile::new(DatasetKind::for_generative(&spec), Some(spec.clone()), datasets).unwrap();
            assert_eq!(round_trip(&file), file, "{}", spec.kind_name());
        }
    }

    #[test]
    fn empty_file_is_header_only() {
        let spec = GenerativeSpec::CrpGauss2d(Default::default());
        let file = DatasetFile::new(DatasetKind::Clustering, Some(spec), vec![]).unwrap();
        let mut buf = Vec::new();
        file.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert!(text.contains("\"alpha\":0.7"));
        assert_eq!(round_trip(&file), file);
    }

    #[test]
    fn hand_written_files_parse() {
        let text = "# kind=clustering\nx0,x1,label\n0.5,1,1\n2,3,2\n1,1,1\n";
        let f = DatasetFile::read_from(text.as_bytes()).unwrap();
        match &f.datasets[0] {
            LabeledDataset::Clustering { points, truth } => {
                assert_eq!(points.len(), 3);
                assert_eq!(truth.as_ref().unwrap().labels(), &[0, 1, 0]);
            }
            _ => panic!(),
        }
        let unlabeled = "# kind=clustering\nx0,x1\n0.5,1\n";
        assert!(DatasetFile::read_from(unlabeled.as_bytes()).unwrap().datasets[0].cluster_truth().is_none());
    }

    #[test]
    fn malformed_files_are_rejected() {
        for bad in [
            "x0,x1\n1,2\n",
            "# kind=clustering\nx0,x1\n1,abc\n",
            "# kind=clustering\nx0,x1,label\n1,2,2\n",
            "# kind=graph\ni,j,value\n0,0,1\n",
            "# kind=graph\n# dataset=0 n=2\ni,j,value\n0,0,1\n0,1,1\n",
            "# kind=particles\nt,x0,x1\n1,0,0\n3,0,0\n",
            "# kind=pairs\nx0,x1,y0,y1,truth\n0,0,0,0,0\n",
            "# kind=nonsense\nx0\n1\n",
        ] {
            assert!(DatasetFile::read_from(bad.as_bytes()).is_err(), "{bad}");
        }
    }
}
