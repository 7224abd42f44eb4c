use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{ParamDim, ParamSpace, Sampler, Scale};
use super::scaler::Scaler;
use crate::diffusion::{simulate_with_id, DiffusionConfig, PARAM_D, PARAM_DX};
use crate::error::{Error, Result};
use crate::json;
use crate::numerics::RngStream;
use crate::sequence::SimulationSequence;

pub const FORMAT_VERSION: u64 = 1;

/// Stream ids for the independent random streams derived from a seed.
pub mod streams {
    pub const SAMPLING: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SLICING: u64 = 5;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub space: ParamSpace,
    pub n: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub sampler: Sampler,
    pub seed: u64,
    pub record_profile: bool,
    pub profile_points: usize,
}

impl GenerationConfig {
    /// The diffusion database settings: 1000 runs, D linear on [1, 3], dx
    /// log-uniform on [1e-5, 1e-3], 1000 steps of 1e-6.
    pub fn diffusion_default(seed: u64) -> Self {
        Self {
            space: diffusion_space(1.0, 3.0, 1e-5, 1e-3, Scale::Log),
            n: 1000,
            dt: 1e-6,
            n_steps: 1000,
            sampler: Sampler::Uniform,
            seed,
            record_profile: false,
            profile_points: 100,
        }
    }
}

pub fn diffusion_space(d_min: f64, d_max: f64, dx_min: f64, dx_max: f64, dx_scale: Scale) -> ParamSpace {
    ParamSpace::new(vec![
        ParamDim::new(PARAM_D, d_min, d_max, Scale::Linear),
        ParamDim::new(PARAM_DX, dx_min, dx_max, dx_scale),
    ])
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u64,
    pub space: ParamSpace,
    pub seed: u64,
    pub sampler: Sampler,
    pub n: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub record_profile: bool,
    pub train_fraction: Option<f64>,
    pub split: Option<Split>,
    pub scaler: Option<Scaler>,
}

impl Manifest {
    pub fn from_generation(cfg: &GenerationConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            space: cfg.space.clone(),
            seed: cfg.seed,
            sampler: cfg.sampler,
            n: cfg.n,
            dt: cfg.dt,
            n_steps: cfg.n_steps,
            record_profile: cfg.record_profile,
            train_fraction: None,
            split: None,
            scaler: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = json::to_vec(self).expect("manifest serializes");
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("manifest has no train/test split; run `split` first".into()))
    }

    pub fn scaler(&self) -> Result<&Scaler> {
        self.scaler
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("manifest has no fitted scaler; run `split` first".into()))
    }
}

/// Default manifest location next to a dataset file.
pub fn manifest_path_for(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    dataset.with_file_name(name)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = BufWriter::new(File::create(&tmp).map_err(|e| Error::io(&tmp, e))?);
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: &Path, sequences: &[SimulationSequence]) -> Result<()> {
    let mut bytes = Vec::new();
    for seq in sequences {
        bytes.extend(json::to_vec(seq).expect("sequence serializes"));
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_dataset(path: &Path) -> Result<Vec<SimulationSequence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: SimulationSequence = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        seq.validate()?;
        out.push(seq);
    }
    Ok(out)
}

pub(crate) fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Samples the parameter space and simulates every point. Sequences come back
/// in id order whatever `jobs` is.
pub fn simulate_dataset(cfg: &GenerationConfig, jobs: usize) -> Result<Vec<SimulationSequence>> {
    let d_idx = cfg.space.dims.iter().position(|d| d.name == PARAM_D);
    let dx_idx = cfg.space.dims.iter().position(|d| d.name == PARAM_DX);
    let (Some(d_idx), Some(dx_idx)) = (d_idx, dx_idx) else {
        return Err(Error::InvalidConfig(format!(
            "diffusion space needs dimensions named {PARAM_D} and {PARAM_DX}"
        )));
    };
    let mut rng = RngStream::new(cfg.seed, streams::SAMPLING);
    let points = cfg.space.sample(cfg.sampler, cfg.n, &mut rng)?;
    let configs: Vec<DiffusionConfig> = points
        .iter()
        .map(|p| DiffusionConfig {
            diffusivity: p[d_idx],
            dx: p[dx_idx],
            dt: cfg.dt,
            n_steps: cfg.n_steps,
            record_profile: cfg.record_profile,
            profile_points: cfg.profile_points,
        })
        .collect();
    configs.first().map(|c| c.validate()).transpose()?;
    with_jobs(jobs, || {
        configs
            .par_iter()
            .enumerate()
            .map(|(id, c)| {
                simulate_with_id(c, id as u64).map_err(|e| Error::Simulation {
                    id: id as u64,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })
}

/// Simulates the database and writes the dataset file and its manifest.
pub fn generate_dataset(
    cfg: &GenerationConfig,
    out: &Path,
    manifest_out: &Path,
    jobs: usize,
) -> Result<(Vec<SimulationSequence>, Manifest)> {
    let sequences = simulate_dataset(cfg, jobs)?;
    write_dataset(out, &sequences)?;
    let manifest = Manifest::from_generation(cfg);
    manifest.write(manifest_out)?;
    Ok((sequences, manifest))
}

/// Random partition of ids: `floor(n * f)` train, the rest test.
pub fn split_dataset(ids: &[u64], train_fraction: f64, rng: &mut RngStream) -> Result<Split> {
    if ids.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (ids.len() as f64 * train_fraction).floor() as usize;
    if n_train == 0 {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} of {} sequences leaves an empty training set",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    rng.shuffle(&mut shuffled);
    let mut train = shuffled[..n_train].to_vec();
    let mut test = shuffled[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Splits, fits the scaler on the training part and records both.
pub fn apply_split(
    sequences: &[SimulationSequence],
    manifest: &mut Manifest,
    train_fraction: f64,
    seed: u64,
) -> Result<()> {
    let ids: Vec<u64> = sequences.iter().map(|s| s.id).collect();
    let split = split_dataset(&ids, train_fraction, &mut RngStream::new(seed, streams::SPLIT))?;
    let by_id = index_by_id(sequences);
    let train: Vec<&SimulationSequence> = split.train.iter().map(|id| by_id[id]).collect();
    let scaler = Scaler::fit(train)?;
    manifest.train_fraction = Some(train_fraction);
    manifest.split = Some(split);
    manifest.scaler = Some(scaler);
    Ok(())
}

pub fn index_by_id(sequences: &[SimulationSequence]) -> BTreeMap<u64, &SimulationSequence> {
    sequences.iter().map(|s| (s.id, s)).collect()
}

/// The sequences named by `ids`, in that order.
pub fn select(sequences: &[SimulationSequence], ids: &[u64]) -> Result<Vec<SimulationSequence>> {
    let by_id = index_by_id(sequences);
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .map(|s| (*s).clone())
                .ok_or_else(|| Error::OutOfRange(format!("sequence id {id} not in dataset")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> GenerationConfig {
        GenerationConfig {
            space: diffusion_space(1.0, 3.0, 1e-3, 1e-2, Scale::Log),
            n: 3,
            dt: 1e-6,
            n_steps: 20,
            sampler: Sampler::Lhs,
            seed,
            record_profile: false,
            profile_points: 100,
        }
    }

    #[test]
    fn generate_small_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.jsonl");
        let man = manifest_path_for(&out);
        let (seqs, manifest) = generate_dataset(&small_config(7), &out, &man, 1).unwrap();
        assert_eq!(seqs.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        let back = read_dataset(&out).unwrap();
        assert_eq!(back, seqs);
        assert_eq!(Manifest::read(&man).unwrap(), manifest);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"id\":0,\"params\":{\"D\":"));
    }

    #[test]
    fn regeneration_is_byte_identical_for_any_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        generate_dataset(&small_config(3), &a, &manifest_path_for(&a), 1).unwrap();
        generate_dataset(&small_config(3), &b, &manifest_path_for(&b), 3).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids: Vec<u64> = (0..1000).collect();
        let s = split_dataset(&ids, 0.8, &mut RngStream::new(1, streams::SPLIT)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (800, 200));
        let again = split_dataset(&ids, 0.8, &mut RngStream::new(1, streams::SPLIT)).unwrap();
        assert_eq!(s, again);
        let mut all: Vec<u64> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
    }

    #[test]
    fn split_guards() {
        let mut rng = RngStream::new(1, 1);
        assert!(split_dataset(&[0], 0.8, &mut rng).is_err());
        assert!(split_dataset(&[], 0.5, &mut rng).is_err());
        assert!(split_dataset(&[0, 1], 1.0, &mut rng).is_err());
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let mut m = Manifest::from_generation(&small_config(1));
        m.format_version = 9;
        std::fs::write(&p, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(Manifest::read(&p), Err(Error::Version { found: 9, .. })));
    }

    #[test]
    fn missing_dimension_rejected() {
        let mut cfg = small_config(1);
        cfg.space.dims[0].name = "alpha".into();
        assert!(matches!(simulate_dataset(&cfg, 1), Err(Error::InvalidConfig(_))));
    }
}
