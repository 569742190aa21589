//! Cluster assembly: synthesis, ingestion, splitting and size-homogeneous batching.
//!
//! Seeding scheme (all streams are xoshiro256++ seeded through SplitMix64):
//! references come from `seed` after one long jump; cluster `id` draws its
//! size and clean reads from `seed ^ id`, and its contaminants from the same
//! stream after one jump. Clean reads therefore do not depend on the
//! contamination level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{cluster_seed, random_sequence, rng_from_seed, sample_noisy_cluster, IdsRates, SimRng};
use crate::contam::{inject, ContaminantKind, ContaminationLevel, ForeignPool, InjectContext};
use crate::error::{Error, Result};
use crate::seqcore::{edit_distance, read_sequences, DnaSequence};

/// Reads grouped as originating from one reference, plus contaminants.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Index of the cluster's reference in the reference table.
    pub id: usize,
    pub reads: Vec<DnaSequence>,
    pub reference: Option<DnaSequence>,
    pub contaminated: Option<Vec<bool>>,
}

impl Cluster {
    pub fn new(id: usize, reads: Vec<DnaSequence>, reference: Option<DnaSequence>) -> Self {
        Self { id, reads, reference, contaminated: None }
    }

    pub fn size(&self) -> usize {
        self.reads.len()
    }

    pub fn n_contaminants(&self) -> usize {
        self.contaminated.as_ref().map_or(0, |f| f.iter().filter(|&&c| c).count())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reads.is_empty() {
            return Err(Error::EmptyCluster);
        }
        if let Some(f) = &self.contaminated {
            if f.len() != self.reads.len() {
                return Err(Error::LengthMismatch(f.len(), self.reads.len()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub num_references: usize,
    pub length: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub rates: IdsRates,
    pub level: ContaminationLevel,
    /// Contaminant kinds to draw from; empty means all four.
    pub kinds: Vec<ContaminantKind>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_references: 1000,
            length: 60,
            size_min: 5,
            size_max: 30,
            rates: IdsRates { p_ins: 0.01, p_del: 0.01, p_sub: 0.01 },
            level: ContaminationLevel::ZERO,
            kinds: Vec::new(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidConfig("reference length must be at least 1".into()));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::InvalidConfig(format!(
                "cluster sizes need 1 <= size_min <= size_max (got {}..{})",
                self.size_min, self.size_max
            )));
        }
        self.rates.validate()
    }

    pub fn with_level(&self, level: ContaminationLevel) -> Self {
        Self { level, ..self.clone() }
    }
}

pub fn generate_references(config: &DatasetConfig) -> Vec<DnaSequence> {
    let mut rng = rng_from_seed(config.seed);
    rng.long_jump();
    (0..config.num_references).map(|_| random_sequence(config.length, &mut rng)).collect()
}

/// Clean (uncontaminated) cluster for reference `id`, drawn from `seed ^ id`.
pub fn clean_cluster(id: usize, reference: &DnaSequence, config: &DatasetConfig, seed: u64) -> Cluster {
    let mut rng = rng_from_seed(cluster_seed(seed, id));
    let n = rng.gen_range(config.size_min..=config.size_max);
    let reads = sample_noisy_cluster(reference, n, &config.rates, &mut rng);
    Cluster { id, contaminated: Some(vec![false; reads.len()]), reads, reference: Some(reference.clone()) }
}

fn contamination_rng(seed: u64, id: usize) -> SimRng {
    let mut rng = rng_from_seed(cluster_seed(seed, id));
    rng.jump();
    rng
}

/// Inject contaminants into already-clean clusters. `references` is the
/// full reference table indexed by cluster id (the misclustered/spliced pool).
pub fn contaminate(
    clean: &[Cluster],
    references: &[DnaSequence],
    level: ContaminationLevel,
    rates: &IdsRates,
    kinds: &[ContaminantKind],
    seed: u64,
) -> Result<Vec<Cluster>> {
    clean
        .iter()
        .map(|c| {
            if level.fraction() == 0.0 {
                return Ok(c.clone());
            }
            let own = c.reference.as_ref().or_else(|| references.get(c.id)).ok_or_else(|| {
                Error::InvalidConfig(format!("cluster {} has no reference to derive contaminants from", c.id))
            })?;
            let ctx = InjectContext {
                own_reference: own,
                foreign_pool: ForeignPool::excluding(references, c.id),
                rates,
                kinds,
            };
            let mut rng = contamination_rng(seed, c.id);
            let inj = inject(&c.reads, level, &ctx, &mut rng)?;
            // strands that were already contaminants keep their flag
            let flags = inj
                .origin
                .iter()
                .map(|o| match o {
                    Some(i) => c.contaminated.as_ref().is_some_and(|f| f[*i]),
                    None => true,
                })
                .collect();
            Ok(Cluster { id: c.id, reads: inj.reads, reference: c.reference.clone(), contaminated: Some(flags) })
        })
        .collect()
}

/// Uniform references, one cluster each of uniform size in
/// `[size_min, size_max]`, then contamination at `config.level`.
pub fn generate_synthetic(config: &DatasetConfig) -> Result<Vec<Cluster>> {
    config.validate()?;
    let refs = generate_references(config);
    let clean: Vec<Cluster> = refs.iter().enumerate().map(|(i, r)| clean_cluster(i, r, config, config.seed)).collect();
    contaminate(&clean, &refs, config.level, &config.rates, &config.kinds, config.seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub clusters: Vec<Cluster>,
    /// References that received no read and were dropped.
    pub dropped: usize,
}

/// Index of the reference nearest to `read` in edit distance; ties go to
/// the smallest index.
pub fn nearest_reference(read: &DnaSequence, references: &[DnaSequence]) -> Option<(usize, usize)> {
    references
        .iter()
        .enumerate()
        .map(|(i, r)| (edit_distance(read, r), i))
        .min()
        .map(|(d, i)| (i, d))
}

/// Assign reads to references by exact nearest edit distance.
pub fn assign_reads(references: &[DnaSequence], reads: Vec<DnaSequence>) -> Ingested {
    let owners: Vec<Option<usize>> =
        reads.par_iter().map(|r| nearest_reference(r, references).map(|(i, _)| i)).collect();
    let mut buckets: Vec<Vec<DnaSequence>> = vec![Vec::new(); references.len()];
    for (read, owner) in reads.into_iter().zip(owners) {
        if let Some(i) = owner {
            buckets[i].push(read);
        }
    }
    let mut dropped = 0;
    let mut clusters = Vec::new();
    for (id, reads) in buckets.into_iter().enumerate() {
        if reads.is_empty() {
            dropped += 1;
            continue;
        }
        clusters.push(Cluster::new(id, reads, Some(references[id].clone())));
    }
    if dropped > 0 {
        log::warn!("{dropped} reference(s) received no reads and were dropped");
    }
    Ingested { clusters, dropped }
}

pub fn ingest(references_path: impl AsRef<Path>, reads_path: impl AsRef<Path>) -> Result<Ingested> {
    let references = read_sequences(references_path)?;
    let reads = read_sequences(reads_path)?;
    Ok(assign_reads(&references, reads))
}

/// Random half split; with an odd count the training half gets the extra cluster.
pub fn split_half(clusters: &[Cluster], seed: u64) -> Result<(Vec<Cluster>, Vec<Cluster>)> {
    if clusters.len() < 2 {
        return Err(Error::TooFewClusters(clusters.len()));
    }
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_train = clusters.len().div_ceil(2);
    let pick = |idx: &[usize]| idx.iter().map(|&i| clusters[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Group cluster indices by cluster size (ascending), then chunk each group.
pub fn batch_by_size(clusters: &[Cluster], batch_size: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        groups.entry(c.size()).or_default().push(i);
    }
    groups.into_values().flat_map(|g| g.chunks(batch_size).map(<[usize]>::to_vec).collect::<Vec<_>>()).collect()
}

pub const BLOCK_SEPARATOR: &str = "====";

/// Serialize in the `clusters.txt` block format: reference line, then reads,
/// blocks separated by a `====` line.
pub fn format_clusters(clusters: &[Cluster]) -> String {
    let mut out = String::new();
    for (i, c) in clusters.iter().enumerate() {
        if i > 0 {
            out.push_str(BLOCK_SEPARATOR);
            out.push('\n');
        }
        let _ = writeln!(out, "{}", c.reference.as_ref().map(|r| r.to_string()).unwrap_or_default());
        for r in &c.reads {
            let _ = writeln!(out, "{r}");
        }
    }
    out
}

pub fn write_clusters(path: impl AsRef<Path>, clusters: &[Cluster]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_clusters(clusters)).map_err(|e| Error::io(path, e))
}

/// Parse the block format. Cluster ids are block indices; an empty reference
/// line means "no reference".
pub fn parse_clusters(text: &str, path: &Path) -> Result<Vec<Cluster>> {
    let mut clusters = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let mut flush = |block: &mut Vec<(usize, &str)>, end_line: usize| -> Result<()> {
        let Some(&(ref_line, ref_text)) = block.first() else {
            return Err(Error::Parse { path: path.into(), line: end_line, msg: "empty cluster block".into() });
        };
        let reference = if ref_text.is_empty() {
            None
        } else {
            Some(DnaSequence::parse_line(ref_text, ref_line).map_err(|e| parse_err(path, ref_line, e))?)
        };
        let reads = block[1..]
            .iter()
            .map(|&(l, t)| DnaSequence::parse_line(t, l).map_err(|e| parse_err(path, l, e)))
            .collect::<Result<Vec<_>>>()?;
        if reads.is_empty() {
            return Err(Error::Parse { path: path.into(), line: ref_line, msg: "cluster block has no reads".into() });
        }
        clusters.push(Cluster::new(clusters.len(), reads, reference));
        block.clear();
        Ok(())
    };
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        last = i + 1;
        if line == BLOCK_SEPARATOR {
            flush(&mut block, i + 1)?;
        } else {
            block.push((i + 1, line));
        }
    }
    if !block.is_empty() {
        flush(&mut block, last)?;
    } else if last > 0 {
        return Err(Error::Parse { path: path.into(), line: last, msg: "trailing separator without a block".into() });
    }
    Ok(clusters)
}

fn parse_err(path: &Path, line: usize, e: Error) -> Error {
    Error::Parse { path: path.into(), line, msg: e.to_string() }
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<Vec<Cluster>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clusters(&text, path)
}

/// CSV manifest: `cluster_id,size,n_contaminants,reference_length`.
pub fn write_manifest(path: impl AsRef<Path>, clusters: &[Cluster]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cluster_id", "size", "n_contaminants", "reference_length"])?;
    for c in clusters {
        w.write_record([
            c.id.to_string(),
            c.size().to_string(),
            c.n_contaminants().to_string(),
            c.reference.as_ref().map_or(0, |r| r.len()).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub cluster_id: usize,
    pub size: usize,
    pub n_contaminants: usize,
    pub reference_length: usize,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<usize> {
            rec.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("bad manifest field {k}"),
            })
        };
        rows.push(ManifestRow { cluster_id: field(0)?, size: field(1)?, n_contaminants: field(2)?, reference_length: field(3)? });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contam::contaminant_count;

    fn seq(s: &str) -> DnaSequence {
        s.parse().unwrap()
    }

    fn cfg() -> DatasetConfig {
        DatasetConfig { num_references: 10, length: 20, size_min: 5, size_max: 5, rates: IdsRates::zero(), ..Default::default() }
    }

    #[test]
    fn noiseless_synthetic_clusters_are_exact_copies() {
        let clusters = generate_synthetic(&cfg()).unwrap();
        assert_eq!(clusters.len(), 10);
        for c in &clusters {
            assert_eq!(c.size(), 5);
            let r = c.reference.as_ref().unwrap();
            assert_eq!(r.len(), 20);
            assert!(c.reads.iter().all(|x| x == r));
        }
    }

    #[test]
    fn size_mean_is_uniform_midpoint() {
        let config = DatasetConfig { num_references: 10_000, length: 4, size_min: 5, size_max: 30, ..cfg() };
        let refs = generate_references(&config);
        let total: usize = refs.iter().enumerate().map(|(i, r)| clean_cluster(i, r, &config, 7).size()).sum();
        let mean = total as f64 / 10_000.0;
        assert!((mean - 17.5).abs() < 0.3, "{mean}");
    }

    #[test]
    fn contaminated_sizes_follow_count_formula() {
        let config = DatasetConfig {
            num_references: 200,
            size_min: 5,
            size_max: 30,
            level: ContaminationLevel::new(0.1).unwrap(),
            rates: IdsRates::new(0.01, 0.01, 0.01).unwrap(),
            ..cfg()
        };
        let clean = {
            let refs = generate_references(&config);
            refs.iter().enumerate().map(|(i, r)| clean_cluster(i, r, &config, config.seed)).collect::<Vec<_>>()
        };
        let dirty = generate_synthetic(&config).unwrap();
        let mut saw_18 = false;
        for (c, d) in clean.iter().zip(&dirty) {
            let m = contaminant_count(c.size(), config.level);
            assert_eq!(d.size(), c.size() + m);
            assert_eq!(d.n_contaminants(), m);
            if c.size() == 18 {
                assert_eq!((d.size(), d.n_contaminants()), (20, 2));
                saw_18 = true;
            }
            // clean reads survive unchanged
            let kept: Vec<_> =
                d.reads.iter().zip(d.contaminated.as_ref().unwrap()).filter(|(_, &f)| !f).map(|(r, _)| r).collect();
            let mut a: Vec<_> = kept.into_iter().cloned().collect();
            let mut b = c.reads.clone();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        assert!(saw_18);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let config = DatasetConfig {
            rates: IdsRates::new(0.02, 0.02, 0.02).unwrap(),
            level: ContaminationLevel::new(0.2).unwrap(),
            size_max: 12,
            seed: 42,
            ..cfg()
        };
        assert_eq!(generate_synthetic(&config).unwrap(), generate_synthetic(&config).unwrap());
        let other = DatasetConfig { seed: 43, ..config.clone() };
        assert_ne!(generate_synthetic(&config).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn ingest_assignment_examples() {
        let refs = vec![seq("AAAA"), seq("TTTT")];
        assert_eq!(nearest_reference(&seq("AAAT"), &refs), Some((0, 1)));
        assert_eq!(nearest_reference(&seq("TTTT"), &refs), Some((1, 0)));
        assert_eq!(nearest_reference(&seq("AATT"), &refs), Some((0, 2)));
        let got = assign_reads(&refs, vec![seq("AAAT"), seq("AATT"), seq("AAAA")]);
        assert_eq!(got.dropped, 1);
        assert_eq!(got.clusters.len(), 1);
        assert_eq!(got.clusters[0].size(), 3);
    }

    #[test]
    fn ingest_matches_bruteforce_argmin() {
        let mut rng = rng_from_seed(3);
        let refs: Vec<_> = (0..12).map(|_| random_sequence(10, &mut rng)).collect();
        let rates = IdsRates::new(0.1, 0.1, 0.1).unwrap();
        let reads: Vec<_> = (0..200).map(|i| crate::channel::transmit(&refs[i % 12], &rates, &mut rng)).collect();
        let got = assign_reads(&refs, reads.clone());
        for c in &got.clusters {
            for r in &c.reads {
                let best = refs.iter().map(|x| edit_distance(r, x)).min().unwrap();
                let first = refs.iter().position(|x| edit_distance(r, x) == best).unwrap();
                assert_eq!(first, c.id);
            }
        }
        assert_eq!(got.clusters.iter().map(Cluster::size).sum::<usize>(), 200);
    }

    #[test]
    fn ingest_reads_files_and_reports_bad_bases() {
        let dir = tempfile::tempdir().unwrap();
        let rp = dir.path().join("refs.txt");
        let qp = dir.path().join("reads.txt");
        fs::write(&rp, "AAAA\nTTTT\n").unwrap();
        fs::write(&qp, "AAAT\nTTTA\n").unwrap();
        assert_eq!(ingest(&rp, &qp).unwrap().clusters.len(), 2);
        fs::write(&qp, "AAAT\nTTXA\n").unwrap();
        match ingest(&rp, &qp) {
            Err(Error::InvalidBase { line: 2, column: 3, ch: 'X' }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(ingest(dir.path().join("missing"), &qp), Err(Error::Io { .. })));
    }

    fn dummy(n: usize) -> Vec<Cluster> {
        (0..n).map(|i| Cluster::new(i, vec![seq("A")], None)).collect()
    }

    #[test]
    fn split_sizes() {
        for (n, tr, te) in [(2, 1, 1), (5, 3, 2), (36_000, 18_000, 18_000)] {
            let (a, b) = split_half(&dummy(n), 1).unwrap();
            assert_eq!((a.len(), b.len()), (tr, te));
            let mut ids: Vec<_> = a.iter().chain(&b).map(|c| c.id).collect();
            ids.sort();
            assert_eq!(ids, (0..n).collect::<Vec<_>>());
        }
        assert!(matches!(split_half(&dummy(1), 1), Err(Error::TooFewClusters(1))));
    }

    #[test]
    fn batching_groups_by_size() {
        let mk = |sizes: &[usize]| -> Vec<Cluster> {
            sizes.iter().enumerate().map(|(i, &s)| Cluster::new(i, vec![seq("A"); s], None)).collect()
        };
        let b = batch_by_size(&mk(&[5, 5, 7, 5]), 2);
        assert_eq!(b, vec![vec![0, 1], vec![3], vec![2]]);
        let b = batch_by_size(&mk(&[6; 130]), 64);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64, 2]);
    }

    #[test]
    fn clusters_file_roundtrip() {
        let config = DatasetConfig { rates: IdsRates::new(0.05, 0.05, 0.05).unwrap(), size_max: 9, ..cfg() };
        let clusters: Vec<_> = generate_synthetic(&config)
            .unwrap()
            .into_iter()
            .map(|c| Cluster { contaminated: None, ..c })
            .collect();
        let text = format_clusters(&clusters);
        let back = parse_clusters(&text, Path::new("mem")).unwrap();
        assert_eq!(back, clusters);
        assert_eq!(format_clusters(&back), text);
    }

    #[test]
    fn clusters_parse_errors_carry_line() {
        let err = parse_clusters("ACGT\nACGT\n====\nACGT\nACNT\n", Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err:?}");
        let err = parse_clusters("ACGT\n====\nACGT\nAC\n", Path::new("f")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.csv");
        let config = DatasetConfig { level: ContaminationLevel::new(0.2).unwrap(), size_max: 20, ..cfg() };
        let clusters = generate_synthetic(&config).unwrap();
        write_manifest(&p, &clusters).unwrap();
        let rows = read_manifest(&p).unwrap();
        assert_eq!(rows.len(), clusters.len());
        for (r, c) in rows.iter().zip(&clusters) {
            assert_eq!(r.size, c.size());
            assert_eq!(r.n_contaminants, contaminant_count(c.size() - r.n_contaminants, config.level));
            assert_eq!(r.reference_length, 20);
        }
    }
}
