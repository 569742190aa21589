//! Memoryless insertion/deletion/substitution read channel.
//!
//! Per template base one categorical event is drawn from {delete,
//! substitute, insert, copy}. An insertion emits a uniform random base and
//! re-draws the event for the same template base; a second insertion draw
//! at that base is treated as a copy, so each base receives at most one
//! insertion. After the last base there is one trailing insertion draw.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::seqcore::{Base, DnaSequence};

/// All randomness in the crate is drawn from xoshiro256++.
pub type SimRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Seed of the per-cluster stream: `master ^ index`.
pub fn cluster_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdsRates {
    pub p_ins: f64,
    pub p_del: f64,
    pub p_sub: f64,
}

impl Default for IdsRates {
    fn default() -> Self {
        Self::zero()
    }
}

impl IdsRates {
    pub fn new(p_ins: f64, p_del: f64, p_sub: f64) -> Result<Self> {
        let r = Self { p_ins, p_del, p_sub };
        r.validate()?;
        Ok(r)
    }

    pub fn zero() -> Self {
        Self { p_ins: 0.0, p_del: 0.0, p_sub: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let each_ok = [self.p_ins, self.p_del, self.p_sub].iter().all(|p| (0.0..=1.0).contains(p));
        if !each_ok || self.p_ins + self.p_del + self.p_sub > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "IDS rates must lie in [0,1] and sum to at most 1 (ins={}, del={}, sub={})",
                self.p_ins, self.p_del, self.p_sub
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Event {
    Delete,
    Substitute,
    Insert,
    Copy,
}

fn draw_event<R: Rng + ?Sized>(rates: &IdsRates, rng: &mut R) -> Event {
    let u: f64 = rng.gen();
    if u < rates.p_del {
        Event::Delete
    } else if u < rates.p_del + rates.p_sub {
        Event::Substitute
    } else if u < rates.p_del + rates.p_sub + rates.p_ins {
        Event::Insert
    } else {
        Event::Copy
    }
}

pub(crate) fn random_base<R: Rng + ?Sized>(rng: &mut R) -> Base {
    Base::from_index(rng.gen_range(0..4))
}

fn substitute<R: Rng + ?Sized>(b: Base, rng: &mut R) -> Base {
    Base::from_index(b.index() + 1 + rng.gen_range(0..3))
}

pub fn random_sequence<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DnaSequence {
    (0..len).map(|_| random_base(rng)).collect()
}

/// Pass `reference` through the IDS channel once.
pub fn transmit<R: Rng + ?Sized>(reference: &DnaSequence, rates: &IdsRates, rng: &mut R) -> DnaSequence {
    let mut out = Vec::with_capacity(reference.len() + reference.len() / 8 + 2);
    for &b in reference.bases() {
        let mut ev = draw_event(rates, rng);
        if ev == Event::Insert {
            out.push(random_base(rng));
            ev = match draw_event(rates, rng) {
                Event::Insert => Event::Copy,
                e => e,
            };
        }
        match ev {
            Event::Delete => {}
            Event::Substitute => out.push(substitute(b, rng)),
            Event::Copy => out.push(b),
            Event::Insert => unreachable!(),
        }
    }
    if rng.gen::<f64>() < rates.p_ins {
        out.push(random_base(rng));
    }
    DnaSequence::new(out)
}

/// `size` independent channel draws of the same reference.
pub fn sample_noisy_cluster<R: Rng + ?Sized>(
    reference: &DnaSequence,
    size: usize,
    rates: &IdsRates,
    rng: &mut R,
) -> Vec<DnaSequence> {
    (0..size).map(|_| transmit(reference, rates, rng)).collect()
}
