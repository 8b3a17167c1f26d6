//! Batch generation of blurred / sharp light-field pairs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{synthesize_blur, BlurPair, WarpMode, DEFAULT_TIME_SAMPLES};
use crate::error::{Error, Result};
use crate::json::{read_json, write_json};
use crate::lightfield::{load_lightfield, save_lightfield, BitDepth, MANIFEST_FILE};
use crate::motion::{
    make_random_trajectory, normalize_midpoint, MotionBounds, TrajectoryFile, RNG_NAME,
};

pub const DATASET_MANIFEST_FILE: &str = "dataset.json";
pub const DATASET_VERSION: u32 = 1;

fn default_n_t() -> usize {
    DEFAULT_TIME_SAMPLES
}

fn default_bit_depth() -> u32 {
    8
}

fn default_rng() -> String {
    RNG_NAME.to_string()
}

/// Settings for one blur job (`synth`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurJobConfig {
    #[serde(default)]
    pub bounds: MotionBounds,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default)]
    pub warp_mode: WarpMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u32,
    #[serde(default = "default_rng")]
    pub rng: String,
}

impl Default for BlurJobConfig {
    fn default() -> Self {
        BlurJobConfig {
            bounds: MotionBounds::default(),
            n_t: DEFAULT_TIME_SAMPLES,
            warp_mode: WarpMode::default(),
            seed: 0,
            bit_depth: default_bit_depth(),
            rng: default_rng(),
        }
    }
}

impl BlurJobConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.n_t == 0 {
            return Err(Error::invalid("n_t", "must be at least 1"));
        }
        if self.rng != RNG_NAME {
            return Err(Error::invalid(
                "rng",
                format!(
                    "unsupported generator {:?}, expected {RNG_NAME:?}",
                    self.rng
                ),
            ));
        }
        BitDepth::from_bits(self.bit_depth)?;
        Ok(())
    }
}

/// Settings for a batch run (`dataset`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "default_motions")]
    pub motions_per_lf: usize,
    #[serde(default)]
    pub bounds: MotionBounds,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default)]
    pub warp_mode: WarpMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u32,
    #[serde(default = "default_rng")]
    pub rng: String,
}

fn default_motions() -> usize {
    1
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::from_job(1, &BlurJobConfig::default())
    }
}

impl DatasetConfig {
    pub fn from_job(motions_per_lf: usize, job: &BlurJobConfig) -> Self {
        DatasetConfig {
            motions_per_lf,
            bounds: job.bounds,
            n_t: job.n_t,
            warp_mode: job.warp_mode,
            seed: job.seed,
            bit_depth: job.bit_depth,
            rng: job.rng.clone(),
        }
    }

    /// Per-pair job settings; `seed` stays the master seed.
    pub fn job(&self) -> BlurJobConfig {
        BlurJobConfig {
            bounds: self.bounds,
            n_t: self.n_t,
            warp_mode: self.warp_mode,
            seed: self.seed,
            bit_depth: self.bit_depth,
            rng: self.rng.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sharp_id: String,
    pub trajectory_seed: u64,
    /// Paths are relative to the manifest's directory.
    pub blurred: String,
    pub ground_truth: String,
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub tool_version: String,
    pub config: DatasetConfig,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest: DatasetManifest = read_json(path)?;
        if manifest.version != DATASET_VERSION {
            return Err(Error::invalid(
                "version",
                format!(
                    "{} declares version {}, expected {DATASET_VERSION}",
                    path.display(),
                    manifest.version
                ),
            ));
        }
        Ok(manifest)
    }

    /// Checks that every referenced light field exists under `root` and
    /// that trajectory seeds are unique.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let mut seeds = BTreeSet::new();
        for e in &self.entries {
            if !seeds.insert(e.trajectory_seed) {
                return Err(Error::invalid(
                    "entries",
                    format!("duplicate trajectory seed {}", e.trajectory_seed),
                ));
            }
            for rel in [&e.blurred, &e.ground_truth] {
                let path = root.join(rel).join(MANIFEST_FILE);
                if !path.is_file() {
                    return Err(Error::MissingManifest(path));
                }
            }
            let traj = root.join(&e.trajectory);
            if !traj.is_file() {
                return Err(Error::io(&traj, std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(())
    }

    /// Loads every (blurred, ground truth) pair, resolving paths against the
    /// manifest's directory.
    pub fn load_pairs(&self, root: &Path) -> Result<Vec<BlurPair>> {
        self.entries
            .iter()
            .map(|e| {
                Ok(BlurPair {
                    blurred: load_lightfield(root.join(&e.blurred))?,
                    ground_truth: load_lightfield(root.join(&e.ground_truth))?,
                })
            })
            .collect()
    }
}

/// Reads a dataset manifest file and all its pairs.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<BlurPair>)> {
    let path = manifest_path.as_ref();
    let manifest = DatasetManifest::load(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let pairs = manifest.load_pairs(root)?;
    Ok((manifest, pairs))
}

/// Light-field directories under `dir`: `dir` itself if it holds a
/// manifest, else its immediate subdirectories that do, sorted by name.
pub fn list_lightfields(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let name_of = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "lf".to_string())
    };
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(vec![(name_of(dir), dir.to_path_buf())]);
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() && path.join(MANIFEST_FILE).is_file() {
            found.push((name_of(&path), path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::invalid(
            "sharp_dir",
            format!("{} contains no light-field directories", dir.display()),
        ));
    }
    Ok(found)
}

/// Draws `count` distinct trajectory seeds from the master seed.
pub fn trajectory_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut seeds = Vec::with_capacity(count);
    while seeds.len() < count {
        let s = rng.next_u64();
        if used.insert(s) {
            seeds.push(s);
        }
    }
    seeds
}

/// Blurs every light field under `sharp_dir` with `motions_per_lf` distinct
/// random trajectories and writes the pairs plus `dataset.json` to `out_dir`.
pub fn generate_dataset(
    sharp_dir: &Path,
    config: &DatasetConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let job = config.job();
    job.validate()?;
    if config.motions_per_lf == 0 {
        return Err(Error::invalid("motions_per_lf", "must be at least 1"));
    }
    let sources = list_lightfields(sharp_dir)?;
    let depth = BitDepth::from_bits(job.bit_depth)?;
    let seeds = trajectory_seeds(job.seed, sources.len() * config.motions_per_lf);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(seeds.len());
    for (i, (id, path)) in sources.iter().enumerate() {
        let lf = load_lightfield(path)?;
        for m in 0..config.motions_per_lf {
            let traj_seed = seeds[i * config.motions_per_lf + m];
            let traj = normalize_midpoint(&make_random_trajectory(traj_seed, &job.bounds)?)?;
            let pair = synthesize_blur(&lf, &traj, job.n_t, job.warp_mode)?;
            let stem = format!("pairs/{id}_m{m}");
            let entry = DatasetEntry {
                sharp_id: id.clone(),
                trajectory_seed: traj_seed,
                blurred: format!("{stem}/blurred"),
                ground_truth: format!("{stem}/sharp"),
                trajectory: format!("{stem}/trajectory.json"),
            };
            save_lightfield(&pair.blurred, out_dir.join(&entry.blurred), depth)?;
            save_lightfield(&pair.ground_truth, out_dir.join(&entry.ground_truth), depth)?;
            write_json(
                out_dir.join(&entry.trajectory),
                &TrajectoryFile::new(traj, job.n_t),
            )?;
            entries.push(entry);
        }
    }
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        entries,
    };
    write_json(out_dir.join(DATASET_MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::synthetic;

    fn write_sources(dir: &Path, n: usize) {
        for i in 0..n {
            let lf = synthetic::textured_scene(i as u64, (3, 3), (12, 16));
            save_lightfield(&lf, dir.join(format!("scene{i}")), BitDepth::Eight).unwrap();
        }
    }

    fn small_config(seed: u64) -> DatasetConfig {
        DatasetConfig {
            motions_per_lf: 2,
            n_t: 8,
            seed,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn counts_pairs_and_verifies() {
        let tmp = tempfile::tempdir().unwrap();
        write_sources(&tmp.path().join("sharp"), 2);
        let out = tmp.path().join("out");
        let m = generate_dataset(&tmp.path().join("sharp"), &small_config(3), &out).unwrap();
        assert_eq!(m.entries.len(), 4);
        m.verify(&out).unwrap();
        let (loaded, pairs) = load_dataset(out.join(DATASET_MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(pairs.len(), 4);
    }

    #[test]
    fn same_seed_gives_identical_manifest_bytes() {
        let tmp = tempfile::tempdir().unwrap();
        write_sources(&tmp.path().join("sharp"), 1);
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        generate_dataset(&tmp.path().join("sharp"), &small_config(9), &a).unwrap();
        generate_dataset(&tmp.path().join("sharp"), &small_config(9), &b).unwrap();
        let read = |p: &Path| fs::read(p.join(DATASET_MANIFEST_FILE)).unwrap();
        assert_eq!(read(&a), read(&b));
        let view = "pairs/scene0_m1/blurred/u1_v2.png";
        assert_eq!(
            fs::read(a.join(view)).unwrap(),
            fs::read(b.join(view)).unwrap()
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let err =
            generate_dataset(tmp.path(), &small_config(0), &tmp.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("sharp_dir"));
    }

    #[test]
    fn seeds_are_unique_and_deterministic() {
        let s = trajectory_seeds(5, 200);
        assert_eq!(s, trajectory_seeds(5, 200));
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 200);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<BlurJobConfig>(r#"{"n_t": 4, "nt": 5}"#).unwrap_err();
        assert!(err.to_string().contains("nt"));
        let cfg: BlurJobConfig = serde_json::from_str(r#"{"n_t": 4}"#).unwrap();
        assert_eq!(cfg.n_t, 4);
        assert_eq!(cfg.warp_mode, WarpMode::LiteralEq13);
    }
}
