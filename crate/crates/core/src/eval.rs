//! Success metrics, sweeps over contamination level and minimum cluster
//! size, the ablation harness, and CSV report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{bma_lookahead, divider_bma, LookaheadConfig};
use crate::contam::ContaminationLevel;
use crate::dataset::{clean_cluster, contaminate, generate_references, split_half, Cluster, DatasetConfig};
use crate::error::{Error, Result};
use crate::neural::{train, train_resampled, ModelConfig, Prediction, Resampler, RrccModel, TrainReport, Variant};
use crate::scalar::Scalar;
use crate::seqcore::{edit_distance, DnaSequence};

/// Fraction of predictions that equal their reference at every position.
/// Empty input gives 0.
pub fn success_rate(predictions: &[DnaSequence], references: &[DnaSequence]) -> Result<f64> {
    if predictions.len() != references.len() {
        return Err(Error::LengthMismatch(predictions.len(), references.len()));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let ok = predictions.iter().zip(references).filter(|(p, r)| p == r).count();
    Ok(ok as f64 / predictions.len() as f64)
}

/// Edit-distance histogram of the wrong predictions; exact matches are skipped.
pub fn error_histogram<'a>(pairs: impl IntoIterator<Item = (&'a DnaSequence, &'a DnaSequence)>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for (p, r) in pairs {
        if p != r {
            *h.entry(edit_distance(p, r)).or_insert(0) += 1;
        }
    }
    h
}

/// Median of a histogram's samples (mean of the two middle ones for even counts).
pub fn histogram_median(h: &BTreeMap<usize, usize>) -> Option<f64> {
    let n: usize = h.values().sum();
    if n == 0 {
        return None;
    }
    let nth = |k: usize| {
        let mut seen = 0;
        for (&d, &c) in h {
            seen += c;
            if seen > k {
                return d;
            }
        }
        unreachable!("k < total count")
    };
    Some(if n % 2 == 1 { nth(n / 2) as f64 } else { (nth(n / 2 - 1) + nth(n / 2)) as f64 / 2.0 })
}

/// Order-sensitive hash of cluster ids, to check that two evaluations saw the same set.
pub fn cluster_ids_hash(clusters: &[Cluster]) -> u64 {
    let mut h = DefaultHasher::new();
    clusters.iter().for_each(|c| c.id.hash(&mut h));
    h.finish()
}

/// Anything that turns a cluster into a length-`len` estimate of its reference.
pub trait Reconstructor: Sync {
    fn name(&self) -> String;

    fn reconstruct(&self, cluster: &Cluster, len: usize) -> Result<DnaSequence>;

    /// All clusters, output in input order.
    fn reconstruct_all(&self, clusters: &[Cluster], len: usize) -> Result<Vec<DnaSequence>> {
        clusters.par_iter().map(|c| self.reconstruct(c, len)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Lookahead(pub LookaheadConfig);

impl Reconstructor for Lookahead {
    fn name(&self) -> String {
        "bma-lookahead".into()
    }

    fn reconstruct(&self, cluster: &Cluster, len: usize) -> Result<DnaSequence> {
        bma_lookahead(cluster, len, &self.0)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Divider;

impl Reconstructor for Divider {
    fn name(&self) -> String {
        "divider-bma".into()
    }

    fn reconstruct(&self, cluster: &Cluster, len: usize) -> Result<DnaSequence> {
        divider_bma(cluster, len)
    }
}

/// A trained model as a reconstructor. The model length must match `len`.
pub struct Neural<'a, T> {
    pub model: &'a RrccModel<T>,
    pub label: String,
}

impl<'a, T: Scalar> Neural<'a, T> {
    pub fn new(model: &'a RrccModel<T>) -> Self {
        Self { model, label: "neural".into() }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let want = self.model.config().len;
        if want != len {
            return Err(Error::InconsistentLength { expected: want, found: len });
        }
        Ok(())
    }

    /// Batched predictions with read weights, batches processed in parallel.
    pub fn predict_all(&self, clusters: &[Cluster]) -> Result<Vec<Prediction>> {
        let groups = crate::dataset::batch_by_size(clusters, self.model.config().batch_size);
        let done: Vec<Vec<(usize, Prediction)>> = groups
            .par_iter()
            .map(|g| {
                let members: Vec<&Cluster> = g.iter().map(|&i| &clusters[i]).collect();
                Ok(g.iter().copied().zip(self.model.predict(&members)?).collect())
            })
            .collect::<Result<_>>()?;
        let mut out: Vec<Option<Prediction>> = vec![None; clusters.len()];
        for (i, p) in done.into_iter().flatten() {
            out[i] = Some(p);
        }
        Ok(out.into_iter().map(|p| p.expect("every cluster predicted")).collect())
    }
}

impl<T: Scalar> Reconstructor for Neural<'_, T> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn reconstruct(&self, cluster: &Cluster, len: usize) -> Result<DnaSequence> {
        self.check_len(len)?;
        self.model.reconstruct(cluster)
    }

    fn reconstruct_all(&self, clusters: &[Cluster], len: usize) -> Result<Vec<DnaSequence>> {
        self.check_len(len)?;
        Ok(self.predict_all(clusters)?.into_iter().map(|p| p.sequence).collect())
    }
}

/// Outcome for one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub algo: String,
    pub level: f64,
    pub cluster_id: usize,
    pub size: usize,
    pub correct: bool,
    pub edit_distance: usize,
}

/// One row of `report.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub algo: String,
    pub level: f64,
    pub k_min: usize,
    pub n_clusters: usize,
    pub n_wrong: usize,
    /// `None` when no cluster has at least `k_min` reads.
    pub success_rate: Option<f64>,
    pub median_edit_dist: Option<f64>,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramRow {
    pub algo: String,
    pub level: f64,
    pub edit_distance: usize,
    pub count: usize,
}

/// Everything one benchmark run emits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    /// Resolved run configuration, echoed into the report files.
    pub config: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    pub histogram: Vec<HistogramRow>,
    pub verdicts: Vec<Verdict>,
}

/// Run one reconstructor over clusters that carry references.
pub fn evaluate(algo: &dyn Reconstructor, clusters: &[Cluster], len: usize, level: f64) -> Result<(Vec<Verdict>, f64)> {
    let start = Instant::now();
    let preds = algo.reconstruct_all(clusters, len)?;
    let wall = start.elapsed().as_secs_f64();
    let name = algo.name();
    let verdicts = preds
        .iter()
        .zip(clusters)
        .map(|(p, c)| {
            let r = c.reference.as_ref().ok_or_else(|| Error::InvalidConfig(format!("cluster {} has no reference to score against", c.id)))?;
            Ok(Verdict {
                algo: name.clone(),
                level,
                cluster_id: c.id,
                size: c.size(),
                correct: p == r,
                edit_distance: edit_distance(p, r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((verdicts, wall))
}

fn histogram_of(verdicts: &[&Verdict]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for v in verdicts.iter().filter(|v| !v.correct) {
        *h.entry(v.edit_distance).or_insert(0) += 1;
    }
    h
}

/// Report row for the verdicts of clusters with at least `k_min` reads.
pub fn summarize(verdicts: &[Verdict], k_min: usize, wall_s: f64) -> ReportRow {
    let sel: Vec<&Verdict> = verdicts.iter().filter(|v| v.size >= k_min).collect();
    let n_wrong = sel.iter().filter(|v| !v.correct).count();
    let first = verdicts.first();
    ReportRow {
        algo: first.map_or_else(String::new, |v| v.algo.clone()),
        level: first.map_or(0.0, |v| v.level),
        k_min,
        n_clusters: sel.len(),
        n_wrong,
        success_rate: (!sel.is_empty()).then(|| (sel.len() - n_wrong) as f64 / sel.len() as f64),
        median_edit_dist: histogram_median(&histogram_of(&sel)),
        wall_s,
    }
}

/// Success rate on the nested subsets `size >= k` for every `k`.
pub fn k_sweep(verdicts: &[Verdict], k_values: &[usize]) -> Vec<ReportRow> {
    k_values.iter().map(|&k| summarize(verdicts, k, 0.0)).collect()
}

pub fn histogram_rows(verdicts: &[Verdict]) -> Vec<HistogramRow> {
    let all: Vec<&Verdict> = verdicts.iter().collect();
    let first = verdicts.first();
    histogram_of(&all)
        .into_iter()
        .map(|(d, c)| HistogramRow {
            algo: first.map_or_else(String::new, |v| v.algo.clone()),
            level: first.map_or(0.0, |v| v.level),
            edit_distance: d,
            count: c,
        })
        .collect()
}

/// Evaluate every algorithm on the same clusters; one report row per
/// algorithm and `k`, plus histograms and verdicts.
pub fn compare_baselines(clusters: &[Cluster], algorithms: &[&dyn Reconstructor], len: usize, level: f64, k_values: &[usize]) -> Result<BenchReport> {
    if algorithms.is_empty() {
        return Err(Error::InvalidConfig("no algorithm selected".into()));
    }
    let mut report = BenchReport::default();
    for algo in algorithms {
        let (verdicts, wall) = evaluate(*algo, clusters, len, level)?;
        let ks: &[usize] = if k_values.is_empty() { &[0] } else { k_values };
        for &k in ks {
            report.rows.push(summarize(&verdicts, k, wall));
        }
        report.histogram.extend(histogram_rows(&verdicts));
        report.verdicts.extend(verdicts);
    }
    Ok(report)
}

/// Clusters with at least one contaminant whose contaminants receive a
/// lower mean weight than the clean reads, out of all such clusters.
pub fn attention_discrimination(predictions: &[Prediction], clusters: &[Cluster]) -> (usize, usize) {
    let mut hits = 0;
    let mut eligible = 0;
    for (p, c) in predictions.iter().zip(clusters) {
        let Some(flags) = &c.contaminated else { continue };
        let n_bad = flags.iter().filter(|&&f| f).count();
        if n_bad == 0 || n_bad == flags.len() {
            continue;
        }
        eligible += 1;
        let mean = |want: bool| {
            let w: Vec<f64> = p.alpha.iter().zip(flags).filter(|(_, &f)| f == want).map(|(a, _)| *a).collect();
            w.iter().sum::<f64>() / w.len() as f64
        };
        hits += usize::from(mean(true) < mean(false));
    }
    (hits, eligible)
}

/// Train/test material for one contamination level.
#[derive(Clone, Debug)]
pub struct LevelData {
    pub level: ContaminationLevel,
    pub references: Vec<DnaSequence>,
    pub train: Vec<Cluster>,
    pub test: Vec<Cluster>,
}

/// Same references, clean clusters and split for every level; only the
/// injected contaminants differ.
pub fn level_data(dataset: &DatasetConfig, level: ContaminationLevel, split_seed: u64) -> Result<LevelData> {
    dataset.validate()?;
    let references = generate_references(dataset);
    let clean: Vec<Cluster> = references.iter().enumerate().map(|(i, r)| clean_cluster(i, r, dataset, dataset.seed)).collect();
    let all = contaminate(&clean, &references, level, &dataset.rates, &dataset.kinds, dataset.seed)?;
    let (train, test) = split_half(&all, split_seed)?;
    Ok(LevelData { level, references, train, test })
}

/// Train one variant on a level's training half. With `resample`, reads of
/// the training references are redrawn every epoch.
pub fn train_on_level<T: Scalar>(
    data: &LevelData,
    dataset: &DatasetConfig,
    config: &ModelConfig,
    resample: bool,
) -> Result<(RrccModel<T>, TrainReport)> {
    if resample {
        let rs = Resampler::from_clusters(&data.train, data.references.clone(), dataset.with_level(data.level));
        train_resampled(&rs, config)
    } else {
        train(&data.train, config)
    }
}

/// Success rates of every variant at every level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub levels: Vec<f64>,
    /// `(variant, success rate per level)`.
    pub rows: Vec<(Variant, Vec<f64>)>,
    /// Per variant and level, the per-epoch batch hashes of training.
    pub batch_hashes: Vec<(Variant, f64, Vec<u64>)>,
}

impl AblationReport {
    /// Variants as rows, levels as columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant");
        for l in &self.levels {
            let _ = write!(s, ",{l:.2}");
        }
        s.push('\n');
        for (v, rates) in &self.rows {
            s.push_str(v.name());
            for r in rates {
                let _ = write!(s, ",{r:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn rate(&self, variant: Variant, level: f64) -> Option<f64> {
        let j = self.levels.iter().position(|&l| (l - level).abs() < 1e-9)?;
        self.rows.iter().find(|(v, _)| *v == variant).map(|(_, r)| r[j])
    }
}

/// Train and test every variant on identical data and seeds per level.
pub fn ablate<T: Scalar>(
    levels: &[LevelData],
    dataset: &DatasetConfig,
    config: &ModelConfig,
    variants: &[Variant],
    resample: bool,
) -> Result<AblationReport> {
    let mut report = AblationReport { levels: levels.iter().map(|l| l.level.fraction()).collect(), ..Default::default() };
    for &variant in variants {
        let cfg = ModelConfig { variant, ..config.clone() };
        let mut rates = Vec::new();
        for data in levels {
            let (model, tr) = train_on_level::<T>(data, dataset, &cfg, resample)?;
            let preds = Neural::new(&model).reconstruct_all(&data.test, cfg.len)?;
            let refs: Vec<DnaSequence> = data.test.iter().map(|c| c.reference.clone().unwrap_or_default()).collect();
            rates.push(success_rate(&preds, &refs)?);
            report.batch_hashes.push((variant, data.level.fraction(), tr.batch_hashes));
        }
        report.rows.push((variant, rates));
    }
    Ok(report)
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.prec$}"))
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "NA" {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
    }
}

fn config_header(config: &[(String, String)]) -> String {
    config.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
}

pub const REPORT_HEADER: &str = "algo,level,k_min,n_clusters,n_wrong,success_rate,median_edit_dist,wall_s";
pub const HISTOGRAM_HEADER: &str = "algo,level,edit_distance,count";
pub const VERDICT_HEADER: &str = "algo,level,cluster_id,size,correct,edit_distance";

impl BenchReport {
    pub fn report_csv(&self) -> String {
        let mut s = config_header(&self.config);
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.2},{},{},{},{},{},{:.3}",
                r.algo,
                r.level,
                r.k_min,
                r.n_clusters,
                r.n_wrong,
                fmt_opt(r.success_rate, 6),
                fmt_opt(r.median_edit_dist, 1),
                r.wall_s
            );
        }
        s
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = config_header(&self.config);
        s.push_str(HISTOGRAM_HEADER);
        s.push('\n');
        for h in &self.histogram {
            let _ = writeln!(s, "{},{:.2},{},{}", h.algo, h.level, h.edit_distance, h.count);
        }
        s
    }

    pub fn verdicts_csv(&self) -> String {
        let mut s = String::from(VERDICT_HEADER);
        s.push('\n');
        for v in &self.verdicts {
            let _ = writeln!(s, "{},{:.2},{},{},{},{}", v.algo, v.level, v.cluster_id, v.size, u8::from(v.correct), v.edit_distance);
        }
        s
    }

    /// Write `report.csv`, `histogram.csv` and `verdicts.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("report.csv", self.report_csv()), ("histogram.csv", self.histogram_csv()), ("verdicts.csv", self.verdicts_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Split a report file into its `# key = value` echo and the CSV records.
fn split_records(text: &str, header: &str, path: &Path) -> Result<(Vec<(String, String)>, Vec<(usize, Vec<String>)>)> {
    let mut config = Vec::new();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse { path: path.into(), line: i + 1, msg };
        if let Some(c) = line.strip_prefix("# ") {
            let (k, v) = c.split_once(" = ").ok_or_else(|| err("malformed config echo line".into()))?;
            config.push((k.to_string(), v.to_string()));
        } else if !seen_header {
            if line != header {
                return Err(err(format!("expected header {header:?}")));
            }
            seen_header = true;
        } else {
            let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
            let rec = r.records().next().ok_or_else(|| err("empty record".into()))??;
            let n = header.split(',').count();
            if rec.len() != n {
                return Err(err(format!("expected {n} fields, found {}", rec.len())));
            }
            rows.push((i + 1, rec.iter().map(str::to_string).collect()));
        }
    }
    if !seen_header {
        return Err(Error::Parse { path: path.into(), line: 0, msg: "missing header".into() });
    }
    Ok((config, rows))
}

fn field<F: std::str::FromStr>(v: &str, line: usize, path: &Path) -> Result<F> {
    v.parse().map_err(|_| Error::Parse { path: path.into(), line, msg: format!("bad field {v:?}") })
}

pub fn parse_report(text: &str, path: &Path) -> Result<(Vec<(String, String)>, Vec<ReportRow>)> {
    let (config, recs) = split_records(text, REPORT_HEADER, path)?;
    let rows = recs
        .into_iter()
        .map(|(line, r)| {
            let opt = |s: &str| parse_opt(s).map_err(|msg| Error::Parse { path: path.into(), line, msg });
            Ok(ReportRow {
                algo: r[0].clone(),
                level: field(&r[1], line, path)?,
                k_min: field(&r[2], line, path)?,
                n_clusters: field(&r[3], line, path)?,
                n_wrong: field(&r[4], line, path)?,
                success_rate: opt(&r[5])?,
                median_edit_dist: opt(&r[6])?,
                wall_s: field(&r[7], line, path)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((config, rows))
}

pub fn parse_histogram(text: &str, path: &Path) -> Result<(Vec<(String, String)>, Vec<HistogramRow>)> {
    let (config, recs) = split_records(text, HISTOGRAM_HEADER, path)?;
    let rows = recs
        .into_iter()
        .map(|(line, r)| {
            Ok(HistogramRow {
                algo: r[0].clone(),
                level: field(&r[1], line, path)?,
                edit_distance: field(&r[2], line, path)?,
                count: field(&r[3], line, path)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((config, rows))
}

pub fn parse_verdicts(text: &str, path: &Path) -> Result<Vec<Verdict>> {
    let (_, recs) = split_records(text, VERDICT_HEADER, path)?;
    recs.into_iter()
        .map(|(line, r)| {
            Ok(Verdict {
                algo: r[0].clone(),
                level: field(&r[1], line, path)?,
                cluster_id: field(&r[2], line, path)?,
                size: field(&r[3], line, path)?,
                correct: field::<u8>(&r[4], line, path)? == 1,
                edit_distance: field(&r[5], line, path)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> DnaSequence {
        x.parse().unwrap()
    }

    #[test]
    fn success_rate_examples() {
        let refs = vec![s("ACGT"), s("GGGG"), s("TTAA"), s("CATG")];
        assert_eq!(success_rate(&refs, &refs).unwrap(), 1.0);
        let mut p = refs.clone();
        p[3] = s("CATT");
        assert_eq!(success_rate(&p, &refs).unwrap(), 0.75);
        assert!(matches!(success_rate(&p[..3], &refs), Err(Error::LengthMismatch(3, 4))));
    }

    #[test]
    fn histogram_examples() {
        assert!(error_histogram(std::iter::empty()).is_empty());
        let pairs = [(s("ACGT"), s("ACGA")), (s("ACGT"), s("ACG")), (s("AAAA"), s("ATTT")), (s("ACGT"), s("ACGT"))];
        let h = error_histogram(pairs.iter().map(|(a, b)| (a, b)));
        assert_eq!(h, BTreeMap::from([(1, 2), (3, 1)]));
        assert_eq!(histogram_median(&h), Some(1.0));
        assert_eq!(histogram_median(&BTreeMap::from([(1, 1), (4, 1)])), Some(2.5));
        assert_eq!(histogram_median(&BTreeMap::new()), None);
    }

    fn verdict(size: usize, correct: bool, d: usize) -> Verdict {
        Verdict { algo: "x".into(), level: 0.1, cluster_id: size, size, correct, edit_distance: d }
    }

    #[test]
    fn k_sweep_nested_subsets() {
        let v = vec![verdict(5, false, 2), verdict(10, true, 0), verdict(20, true, 0), verdict(25, false, 1)];
        let rows = k_sweep(&v, &[5, 20, 26]);
        assert_eq!(rows.iter().map(|r| r.n_clusters).collect::<Vec<_>>(), [4, 2, 0]);
        assert_eq!(rows[0].success_rate, Some(0.5));
        assert_eq!(rows[1].success_rate, Some(0.5));
        assert_eq!(rows[2].success_rate, None);
        assert_eq!(rows[0].median_edit_dist, Some(1.5));
    }

    #[test]
    fn report_round_trip() {
        let v = vec![verdict(5, false, 2), verdict(10, true, 0), verdict(30, false, 7)];
        let mut rep = BenchReport { config: vec![("seed".into(), "7".into()), ("contam.kinds".into(), "random,spliced".into())], ..Default::default() };
        rep.rows = k_sweep(&v, &[5, 31]);
        rep.rows[0].wall_s = 1.23456;
        rep.histogram = histogram_rows(&v);
        rep.verdicts = v.clone();
        let p = Path::new("report.csv");
        let text = rep.report_csv();
        let (cfg, rows) = parse_report(&text, p).unwrap();
        let again = BenchReport { config: cfg, rows, ..Default::default() }.report_csv();
        assert_eq!(text, again);
        let h = rep.histogram_csv();
        let (cfg, rows) = parse_histogram(&h, p).unwrap();
        assert_eq!(BenchReport { config: cfg, histogram: rows, ..Default::default() }.histogram_csv(), h);
        let vt = rep.verdicts_csv();
        assert_eq!(parse_verdicts(&vt, p).unwrap(), v);
        assert!(text.contains(",NA,NA,"));
    }

    #[test]
    fn malformed_report_is_rejected() {
        let p = Path::new("r.csv");
        assert!(parse_report("nope\n", p).is_err());
        let bad = format!("{REPORT_HEADER}\nx,0.00,5,1\n");
        assert!(matches!(parse_report(&bad, p), Err(Error::Parse { line: 2, .. })));
    }
}
