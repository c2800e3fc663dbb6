//! Class/label-indexed first-layer latent sets and point-set distances.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{check_header, Reader, Writer};
use crate::data::ImageSet;
use crate::error::{FfError, Result};
use crate::ffa::FfNetwork;
use crate::rng::{self, purpose};

pub const MAGIC: &[u8; 4] = b"FFLS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    #[default]
    Manhattan,
    Euclidean,
    /// `1 - cos`, taken as 1 when either vector is zero.
    Cosine,
}

impl std::str::FromStr for DistanceKind {
    type Err = FfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "manhattan" | "l1" => Ok(Self::Manhattan),
            "euclidean" | "l2" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(FfError::Config(format!("unknown distance '{other}'"))),
        }
    }
}

impl DistanceKind {
    fn code(self) -> u8 {
        match self {
            Self::Manhattan => 0,
            Self::Euclidean => 1,
            Self::Cosine => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Self::Manhattan),
            1 => Ok(Self::Euclidean),
            2 => Ok(Self::Cosine),
            c => Err(FfError::Format(format!("unknown distance code {c}"))),
        }
    }

    /// Distance between equal-length vectors.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Self::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Self::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Self::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }

    /// Distance to the zero vector.
    pub fn to_origin(self, a: &[f64]) -> f64 {
        match self {
            Self::Manhattan => manhattan_norm(a),
            Self::Euclidean => a.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Cosine => 1.0,
        }
    }
}

pub fn manhattan_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Index and distance of the closest member; the lowest index wins ties.
pub fn nearest(point: &[f64], set: &[Vec<f64>], kind: DistanceKind) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(FfError::State("distance to an empty latent set".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, member) in set.iter().enumerate() {
        if member.len() != point.len() {
            return Err(FfError::State(format!(
                "latent of dimension {} against set of dimension {}",
                point.len(),
                member.len()
            )));
        }
        let d = kind.distance(point, member);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// Minimum distance from `point` to any member of `set`.
pub fn point_set_distance(point: &[f64], set: &[Vec<f64>], kind: DistanceKind) -> Result<f64> {
    nearest(point, set, kind).map(|(_, d)| d)
}

/// Drops `ceil(fraction * len)` members by Manhattan norm: the lowest for
/// diagonal sets, the highest otherwise. Survivors keep their order; equal
/// norms are removed lowest index first.
pub fn filter_set(set: &mut Vec<Vec<f64>>, diagonal: bool, fraction: f64) {
    let remove = (fraction * set.len() as f64).ceil() as usize;
    if remove == 0 {
        return;
    }
    let norms: Vec<f64> = set.iter().map(|v| manhattan_norm(v)).collect();
    let mut order: Vec<usize> = (0..set.len()).collect();
    if diagonal {
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    } else {
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    }
    let mut keep = vec![true; set.len()];
    for &i in order.iter().take(remove) {
        keep[i] = false;
    }
    let mut i = 0;
    set.retain(|_| {
        i += 1;
        keep[i - 1]
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreConfig {
    pub samples: usize,
    pub filter_fraction: f64,
    pub distance: DistanceKind,
    pub seed: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            samples: 1024,
            filter_fraction: 0.2,
            distance: DistanceKind::Manhattan,
            seed: 0,
        }
    }
}

/// The sets `L[c][p]`: first-layer latents of class-`c` samples embedded
/// with label `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStore {
    class_count: usize,
    dim: usize,
    sets: Vec<Vec<Vec<f64>>>,
    sample_count: usize,
    filter_fraction: f64,
    distance: DistanceKind,
    layer_index: usize,
}

impl LatentStore {
    /// Builds a store from raw sets laid out as `sets[c * C + p]`, applying
    /// the filter.
    pub fn from_sets(
        class_count: usize,
        mut sets: Vec<Vec<Vec<f64>>>,
        sample_count: usize,
        filter_fraction: f64,
        distance: DistanceKind,
    ) -> Result<Self> {
        if class_count == 0 || sets.len() != class_count * class_count {
            return Err(FfError::Shape(format!(
                "{} sets for {class_count} classes",
                sets.len()
            )));
        }
        if !(0.0..1.0).contains(&filter_fraction) {
            return Err(FfError::Config(format!("filter fraction {filter_fraction} outside [0, 1)")));
        }
        let dim = sets.iter().flatten().next().map_or(0, Vec::len);
        if sets.iter().flatten().any(|v| v.len() != dim) {
            return Err(FfError::Shape("latents of unequal dimension".into()));
        }
        for (i, set) in sets.iter_mut().enumerate() {
            filter_set(set, i / class_count == i % class_count, filter_fraction);
        }
        if let Some(i) = sets.iter().position(Vec::is_empty) {
            return Err(FfError::Coverage(format!(
                "set (class {}, label {}) is empty",
                i / class_count,
                i % class_count
            )));
        }
        Ok(LatentStore {
            class_count,
            dim,
            sets,
            sample_count,
            filter_fraction,
            distance,
            layer_index: 0,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn filter_fraction(&self) -> f64 {
        self.filter_fraction
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    /// `L[class][label]`.
    pub fn set(&self, class: usize, label: usize) -> &[Vec<f64>] {
        &self.sets[class * self.class_count + label]
    }

    pub fn total_len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn distance_to(&self, point: &[f64], class: usize, label: usize) -> Result<f64> {
        point_set_distance(point, self.set(class, label), self.distance)
    }

    pub fn write<W: Write>(&self, out: W) -> std::io::Result<W> {
        let mut w = Writer::new(out);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.u32(self.class_count as u32)?;
        w.u32(self.dim as u32)?;
        w.u8(self.distance.code())?;
        w.f64(self.filter_fraction)?;
        w.u32(self.sample_count as u32)?;
        w.u32(self.layer_index as u32)?;
        for set in &self.sets {
            w.u32(set.len() as u32)?;
            for v in set {
                w.f64s(v)?;
            }
        }
        Ok(w.into_inner())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        check_header(&mut r, MAGIC, VERSION)?;
        let class_count = r.len("class count", 1 << 12)?;
        let dim = r.len("latent dim", 1 << 24)?;
        let distance = DistanceKind::from_code(r.u8()?)?;
        let filter_fraction = r.f64()?;
        let sample_count = r.u32()? as usize;
        let layer_index = r.u32()? as usize;
        let mut sets = Vec::with_capacity(class_count * class_count);
        for _ in 0..class_count * class_count {
            let n = r.len("set size", 1 << 24)?;
            let set = (0..n).map(|_| r.f64s(dim)).collect::<Result<Vec<_>>>()?;
            sets.push(set);
        }
        r.expect_end()?;
        if sets.iter().any(Vec::is_empty) {
            return Err(FfError::Format("store contains an empty set".into()));
        }
        Ok(LatentStore {
            class_count,
            dim,
            sets,
            sample_count,
            filter_fraction,
            distance,
            layer_index,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| FfError::io(path, e))?;
        let mut w = self.write(BufWriter::new(file)).map_err(|e| FfError::io(path, e))?;
        w.flush().map_err(|e| FfError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| FfError::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    /// One row per stored vector: `class,label,index,v0,...`. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn export_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "class,label,index")?;
        for j in 0..self.dim {
            write!(out, ",v{j}")?;
        }
        writeln!(out)?;
        for c in 0..self.class_count {
            for p in 0..self.class_count {
                for (i, v) in self.set(c, p).iter().enumerate() {
                    write!(out, "{c},{p},{i}")?;
                    for x in v {
                        write!(out, ",{x:?}")?;
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }
}

/// Class-balanced sample: `floor(n / C)` per class, the remainder going to
/// the lowest class ids.
pub fn balanced_sample(data: &ImageSet, samples: usize, seed: u64) -> Result<Vec<usize>> {
    let classes = data.class_count();
    let mut by_class = data.indices_by_class();
    let mut picked = Vec::with_capacity(samples);
    for (c, pool) in by_class.iter_mut().enumerate() {
        let want = samples / classes + usize::from(c < samples % classes);
        if pool.is_empty() && want > 0 {
            return Err(FfError::Coverage(format!("class {c} is absent from the dataset")));
        }
        if pool.len() < want {
            return Err(FfError::Coverage(format!(
                "class {c} has {} samples, {want} needed",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng::stream(seed, &[purpose::STORE_SAMPLE, c as u64]));
        picked.extend_from_slice(&pool[..want]);
    }
    Ok(picked)
}

/// Encoding seed for the store pass over dataset sample `index`.
pub fn store_seed(root: u64, index: usize) -> u64 {
    rng::derive_seed(root, &[purpose::STORE_SAMPLE, u64::MAX, index as u64])
}

pub fn build_store(network: &FfNetwork, data: &ImageSet, config: &StoreConfig) -> Result<LatentStore> {
    let classes = network.class_count();
    if data.class_count() != classes {
        return Err(FfError::Consistency(format!(
            "dataset has {} classes, network {classes}",
            data.class_count()
        )));
    }
    let picked = balanced_sample(data, config.samples, config.seed)?;
    let latents = picked
        .par_iter()
        .map(|&i| network.first_layer_latents(&data.flat(i), store_seed(config.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut sets = vec![Vec::new(); classes * classes];
    for (&i, per_label) in picked.iter().zip(latents) {
        let c = data.label(i);
        for (p, v) in per_label.into_iter().enumerate() {
            sets[c * classes + p].push(v);
        }
    }
    LatentStore::from_sets(classes, sets, picked.len(), config.filter_fraction, config.distance)
}
