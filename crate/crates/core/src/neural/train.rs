use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::channel::rng_from_seed;
use crate::dataset::{batch_by_size, clean_cluster, contaminate, Cluster, DatasetConfig};
use crate::error::{Error, Result};
use crate::scalar::{FlushDenormals, Scalar};
use crate::seqcore::DnaSequence;

use super::graph::Graph;
use super::model::{decode_batch, Batch, ModelConfig, RrccModel};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_success_rate: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// One hash per epoch over the ordered cluster ids of every batch.
    pub batch_hashes: Vec<u64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut s = String::from("epoch,mean_loss,train_success_rate,wall_seconds\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.8},{:.6},{:.3}\n", e.epoch, e.mean_loss, e.train_success_rate, e.wall_seconds));
        }
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Fresh noisy reads of fixed training references every epoch.
///
/// Cluster sizes, channel noise and contaminants are redrawn from
/// `(seed, epoch)`; the reference set never changes.
#[derive(Clone, Debug)]
pub struct Resampler {
    /// `(cluster id, reference)` pairs of the training split.
    pub train: Vec<(usize, DnaSequence)>,
    /// Full reference table, the pool foreign contaminants are drawn from.
    pub references: Vec<DnaSequence>,
    pub dataset: DatasetConfig,
}

impl Resampler {
    pub fn from_clusters(train: &[Cluster], references: Vec<DnaSequence>, dataset: DatasetConfig) -> Self {
        let train = train.iter().filter_map(|c| c.reference.clone().map(|r| (c.id, r))).collect();
        Self { train, references, dataset }
    }

    pub fn epoch(&self, epoch: usize) -> Result<Vec<Cluster>> {
        let seed = self.dataset.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let clean: Vec<Cluster> = self.train.iter().map(|(id, r)| clean_cluster(*id, r, &self.dataset, seed)).collect();
        let level = self.dataset.level;
        if level.fraction() == 0.0 {
            return Ok(clean);
        }
        contaminate(&clean, &self.references, level, &self.dataset.rates, &self.dataset.kinds, seed)
    }
}

/// Sequential optimizer loop over size-homogeneous batches.
pub struct Trainer<T> {
    model: RrccModel<T>,
    report: TrainReport,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Ok(Self { model: RrccModel::new(config)?, report: TrainReport::default() })
    }

    pub fn from_model(model: RrccModel<T>) -> Self {
        Self { model, report: TrainReport::default() }
    }

    pub fn model(&self) -> &RrccModel<T> {
        &self.model
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn into_parts(self) -> (RrccModel<T>, TrainReport) {
        (self.model, self.report)
    }

    /// One pass over `clusters`, one Adam step per batch. The batch order is
    /// shuffled from the model seed and the epoch number.
    pub fn run_epoch(&mut self, clusters: &[Cluster]) -> Result<EpochLog> {
        if clusters.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Some(c) = clusters.iter().find(|c| c.reference.is_none()) {
            return Err(Error::InvalidConfig(format!("training cluster {} has no reference", c.id)));
        }
        let start = Instant::now();
        let _ftz = FlushDenormals::new();
        let epoch = self.report.epochs.len() + 1;
        let cfg = self.model.config().clone();
        let mut batches = batch_by_size(clusters, cfg.batch_size);
        batches.shuffle(&mut rng_from_seed(cfg.seed.wrapping_add(epoch as u64)));
        let mut hasher = DefaultHasher::new();
        let adam = cfg.adam();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in &batches {
            let members: Vec<&Cluster> = idx.iter().map(|&i| &clusters[i]).collect();
            members.iter().for_each(|c| c.id.hash(&mut hasher));
            usize::MAX.hash(&mut hasher);
            let batch = Batch::from_clusters(&members, cfg.len)?;
            let mut g = Graph::new();
            let f = self.model.forward(&mut g, &batch)?;
            let loss = f.loss.expect("labelled batch");
            loss_sum += g.value(loss).item().as_f64() * members.len() as f64;
            for (p, c) in decode_batch(&g, &f, &batch).iter().zip(&members) {
                correct += usize::from(Some(&p.sequence) == c.reference.as_ref());
            }
            g.backward(loss)?;
            let store = self.model.params_mut();
            store.zero_grad();
            store.accumulate(&g);
            store.adam_step(&adam);
        }
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / clusters.len() as f64,
            train_success_rate: correct as f64 / clusters.len() as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch}: loss {:.5} train success {:.4}", log.mean_loss, log.train_success_rate);
        self.report.epochs.push(log.clone());
        self.report.batch_hashes.push(hasher.finish());
        Ok(log)
    }
}

/// Train a fresh model for `config.epochs` epochs on a fixed set.
pub fn train<T: Scalar>(train_set: &[Cluster], config: &ModelConfig) -> Result<(RrccModel<T>, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut t = Trainer::new(config.clone())?;
    for _ in 0..config.epochs {
        t.run_epoch(train_set)?;
    }
    Ok(t.into_parts())
}

/// Same as [`train`] but with a freshly resampled set every epoch.
pub fn train_resampled<T: Scalar>(data: &Resampler, config: &ModelConfig) -> Result<(RrccModel<T>, TrainReport)> {
    if data.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut t = Trainer::new(config.clone())?;
    for e in 0..config.epochs {
        t.run_epoch(&data.epoch(e)?)?;
    }
    Ok(t.into_parts())
}
