//! Procedural skeleton motion generator with ground-truth retargeting pairs.
//!
//! Motions are parametric families of in-plane (x, y) limb-angle programs
//! driven through forward kinematics over the canonical 15-joint tree, so 3D
//! bone lengths are constant by construction and the same program performed
//! by two characters differs only in limb lengths. The camera is an
//! orthographic azimuth rotation about the vertical axis; at azimuth 0 the
//! figure is seen without foreshortening.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::io;
use crate::skeleton::{rotate_project, Sequence2D, Sequence3D, SkeletonTopology};
use crate::Result;

/// Canonical limb lengths, indexed like `SkeletonTopology::limbs()` of the
/// default 15-joint skeleton (child order: left_hip, left_knee, left_ankle,
/// right_hip, right_knee, right_ankle, neck, head, left_shoulder, left_elbow,
/// left_wrist, right_shoulder, right_elbow, right_wrist).
const CANONICAL_LIMB_LENGTHS: [f64; 14] = [
    0.10, 0.42, 0.42, // left leg
    0.10, 0.42, 0.42, // right leg
    0.55, 0.16, // torso, head
    0.20, 0.30, 0.26, // left arm
    0.20, 0.30, 0.26, // right arm
];

/// Rest direction of each limb in the frontal (x, y) plane.
const REST_DIRECTIONS: [[f64; 2]; 14] = [
    [-1.0, 0.0],
    [0.0, -1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [0.0, -1.0],
    [0.0, -1.0],
    [0.0, 1.0],
    [0.0, 1.0],
    [-1.0, 0.0],
    [0.0, -1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [0.0, -1.0],
    [0.0, -1.0],
];

/// Base pelvis height in character units.
const PELVIS_HEIGHT: f64 = 0.95;

/// Body proportions relative to the canonical skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterSpec {
    pub name: String,
    /// One multiplier per limb, each in `[0.5, 2]`.
    pub limb_multipliers: Vec<f64>,
    /// Uniform height scale, also applied to the root trajectory.
    pub height: f64,
}

impl CharacterSpec {
    pub fn uniform(name: impl Into<String>, height: f64) -> Self {
        CharacterSpec {
            name: name.into(),
            limb_multipliers: vec![1.0; CANONICAL_LIMB_LENGTHS.len()],
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.limb_multipliers.len() != CANONICAL_LIMB_LENGTHS.len() {
            return Err(Error::Config(format!(
                "{}: {} limb multipliers, expected {}",
                self.name,
                self.limb_multipliers.len(),
                CANONICAL_LIMB_LENGTHS.len()
            )));
        }
        for &m in &self.limb_multipliers {
            if !(0.5..=2.0).contains(&m) {
                return Err(Error::Config(format!(
                    "{}: limb multiplier {m} outside [0.5, 2]",
                    self.name
                )));
            }
        }
        if !(0.5..=2.0).contains(&self.height) {
            return Err(Error::Config(format!(
                "{}: height {} outside [0.5, 2]",
                self.name, self.height
            )));
        }
        Ok(())
    }

    /// Set the multiplier of the limbs above the named child joints.
    fn with(mut self, topo: &SkeletonTopology, joints: &[&str], value: f64) -> Self {
        for name in joints {
            let j = topo.joint_index(name).expect("known joint");
            let limb = topo.limb_above(j).expect("non-root joint");
            self.limb_multipliers[limb] = value;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionFamily {
    WalkCycle,
    ArmWave,
    Squat,
    Turn,
}

impl MotionFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "walk-cycle" => Ok(MotionFamily::WalkCycle),
            "arm-wave" => Ok(MotionFamily::ArmWave),
            "squat" => Ok(MotionFamily::Squat),
            "turn" => Ok(MotionFamily::Turn),
            other => Err(Error::Config(format!("unknown motion family `{other}`"))),
        }
    }
}

/// A parametric clip: family plus frequency (Hz), amplitude (radians), phase,
/// duration and camera azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub name: String,
    pub family: MotionFamily,
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub frames: usize,
    pub fps: f64,
    /// Camera azimuth about the vertical axis, fixed within a sequence.
    pub azimuth: f64,
}

impl MotionSpec {
    pub fn new(
        name: impl Into<String>,
        family: MotionFamily,
        frequency: f64,
        amplitude: f64,
    ) -> Self {
        MotionSpec {
            name: name.into(),
            family,
            frequency,
            amplitude,
            phase: 0.0,
            frames: 96,
            fps: 30.0,
            azimuth: 0.0,
        }
    }

    pub fn with_azimuth(mut self, azimuth: f64) -> Self {
        self.azimuth = azimuth;
        self
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }
}

/// Per-frame pose: an in-plane rotation per limb, a whole-figure in-plane
/// rotation, and a root offset in character units.
struct FramePose {
    limb_rot: [f64; 14],
    figure_rot: f64,
    root: [f64; 2],
}

// Limb indices in CANONICAL_LIMB_LENGTHS order.
const L_THIGH: usize = 1;
const L_SHANK: usize = 2;
const R_THIGH: usize = 4;
const R_SHANK: usize = 5;
const NECK: usize = 6;
const L_UPPER: usize = 9;
const L_FORE: usize = 10;
const R_UPPER: usize = 12;
const R_FORE: usize = 13;

fn pose_at(spec: &MotionSpec, frame: usize, phase_offset: f64) -> FramePose {
    let t = frame as f64 / spec.fps;
    let w = 2.0 * std::f64::consts::PI * spec.frequency * t + spec.phase + phase_offset;
    let a = spec.amplitude;
    let mut limb_rot = [0.0f64; 14];
    let mut figure_rot = 0.0;
    let mut root = [0.0, 0.0];
    match spec.family {
        MotionFamily::WalkCycle => {
            let swing = a * w.sin();
            limb_rot[L_THIGH] = 0.8 * swing;
            limb_rot[R_THIGH] = -0.8 * swing;
            limb_rot[L_SHANK] = 0.5 * a * (w - 0.9).sin();
            limb_rot[R_SHANK] = -0.5 * a * (w - 0.9).sin();
            limb_rot[L_UPPER] = -0.5 * swing;
            limb_rot[R_UPPER] = 0.5 * swing;
            limb_rot[L_FORE] = -0.3 * a * (w - 0.6).sin();
            limb_rot[R_FORE] = 0.3 * a * (w - 0.6).sin();
            limb_rot[NECK] = 0.05 * a * (2.0 * w).sin();
            root = [0.05 * a * w.sin(), 0.025 * a * (2.0 * w).sin()];
        }
        MotionFamily::ArmWave => {
            limb_rot[L_UPPER] = -a * (1.2 + 0.45 * w.sin());
            limb_rot[R_UPPER] = a * (1.2 + 0.45 * (w + 0.7).sin());
            limb_rot[L_FORE] = -0.5 * a * (2.0 * w + 0.4).sin();
            limb_rot[R_FORE] = 0.5 * a * (2.0 * w + 1.1).sin();
            limb_rot[NECK] = 0.04 * a * w.sin();
        }
        MotionFamily::Squat => {
            let dip = a * (1.0 - w.cos()) / 2.0;
            limb_rot[L_THIGH] = 0.7 * dip;
            limb_rot[R_THIGH] = -0.7 * dip;
            limb_rot[L_SHANK] = -1.1 * dip;
            limb_rot[R_SHANK] = 1.1 * dip;
            limb_rot[L_UPPER] = -0.4 * dip;
            limb_rot[R_UPPER] = 0.4 * dip;
            root = [0.0, -0.35 * dip];
        }
        MotionFamily::Turn => {
            figure_rot = a * w.sin();
            limb_rot[L_UPPER] = -0.3 * a * (w + 1.0).sin();
            limb_rot[R_UPPER] = 0.3 * a * (w + 1.0).sin();
            root = [0.04 * a * w.sin(), 0.0];
        }
    }
    FramePose {
        limb_rot,
        figure_rot,
        root,
    }
}

fn rotate2(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Forward kinematics of `motion` performed by `character`, plus the
/// orthographic 2D projection at the spec's azimuth. The seed perturbs only
/// the global phase: the same (character, motion, seed) triple always yields
/// the same clip, and two characters given the same (motion, seed) perform
/// identical joint-angle trajectories.
pub fn generate(
    character: &CharacterSpec,
    motion: &MotionSpec,
    seed: u64,
) -> Result<(Sequence3D, Sequence2D)> {
    character.validate()?;
    if motion.frames == 0 {
        return Err(Error::Config("motion duration must be positive".into()));
    }
    let topo = SkeletonTopology::default_15();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase_offset = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
    let n = topo.joint_count();
    let mut seq3 = Sequence3D::zeros(topo.clone(), motion.frames);
    seq3.fps = motion.fps;
    for f in 0..motion.frames {
        let pose = pose_at(motion, f, phase_offset);
        let mut pos = vec![[0.0f64; 3]; n];
        pos[topo.root()] = [
            character.height * pose.root[0],
            character.height * (PELVIS_HEIGHT + pose.root[1]),
            0.0,
        ];
        for &j in topo.topo_order() {
            let Some(parent) = topo.parent(j) else { continue };
            let limb = topo.limb_above(j).expect("non-root");
            let len = CANONICAL_LIMB_LENGTHS[limb]
                * character.limb_multipliers[limb]
                * character.height;
            let dir = rotate2(REST_DIRECTIONS[limb], pose.limb_rot[limb] + pose.figure_rot);
            pos[j] = [
                pos[parent][0] + len * dir[0],
                pos[parent][1] + len * dir[1],
                pos[parent][2],
            ];
        }
        for (j, p) in pos.iter().enumerate() {
            seq3.set_joint(f, j, *p);
        }
    }
    let seq2 = rotate_project(&seq3, motion.azimuth, [0.0, 1.0, 0.0])?;
    Ok((seq3, seq2))
}

/// A (source, target reference, ground truth) triple: the source motion
/// performed by the target character is the ground truth, and the reference
/// clip shows the target character doing something else.
#[derive(Debug, Clone)]
pub struct RetargetTriple {
    pub src: Sequence2D,
    pub tgt_ref: Sequence2D,
    pub ground_truth: Sequence2D,
}

pub fn make_retarget_pair(
    char_a: &CharacterSpec,
    char_b: &CharacterSpec,
    motion: &MotionSpec,
    ref_motion: &MotionSpec,
    seed: u64,
) -> Result<RetargetTriple> {
    let (_, src) = generate(char_a, motion, seed)?;
    let (_, ground_truth) = generate(char_b, motion, seed)?;
    let (_, tgt_ref) = generate(char_b, ref_motion, seed.wrapping_add(1))?;
    Ok(RetargetTriple {
        src,
        tgt_ref,
        ground_truth,
    })
}

/// The eight bench characters. All multipliers stay in `[0.5, 2]`.
pub fn bench_characters() -> Vec<CharacterSpec> {
    let topo = SkeletonTopology::default_15();
    let legs = ["left_knee", "left_ankle", "right_knee", "right_ankle"];
    let arms = ["left_elbow", "left_wrist", "right_elbow", "right_wrist"];
    let shoulders = ["left_shoulder", "right_shoulder"];
    let hips = ["left_hip", "right_hip"];
    vec![
        CharacterSpec::uniform("canon", 1.0),
        CharacterSpec::uniform("tall", 1.35),
        CharacterSpec::uniform("small", 0.65),
        CharacterSpec::uniform("longarms", 1.0).with(&topo, &arms, 1.55),
        CharacterSpec::uniform("longlegs", 1.0).with(&topo, &legs, 1.45),
        CharacterSpec::uniform("stocky", 0.95)
            .with(&topo, &legs, 0.75)
            .with(&topo, &["neck"], 1.15)
            .with(&topo, &arms, 0.9),
        CharacterSpec::uniform("lanky", 1.1)
            .with(&topo, &legs, 1.3)
            .with(&topo, &arms, 1.3)
            .with(&topo, &["neck"], 0.85)
            .with(&topo, &shoulders, 1.2),
        CharacterSpec::uniform("compact", 0.8)
            .with(&topo, &legs, 0.8)
            .with(&topo, &arms, 0.8)
            .with(&topo, &hips, 1.4),
    ]
}

/// The six bench motions (four families, two with parameter variants).
pub fn bench_motions(frames: usize) -> Vec<MotionSpec> {
    vec![
        MotionSpec::new("walk", MotionFamily::WalkCycle, 1.0, 0.55).with_frames(frames),
        MotionSpec::new("stride", MotionFamily::WalkCycle, 1.75, 0.4).with_frames(frames),
        MotionSpec::new("wave", MotionFamily::ArmWave, 1.2, 0.5).with_frames(frames),
        MotionSpec::new("pulse", MotionFamily::ArmWave, 2.0, 0.8).with_frames(frames),
        MotionSpec::new("squat", MotionFamily::Squat, 0.8, 0.9).with_frames(frames),
        MotionSpec::new("sway", MotionFamily::Turn, 0.9, 0.45).with_frames(frames),
    ]
}

/// Bench camera azimuths; the last two count as oblique views.
pub const BENCH_AZIMUTHS: [f64; 4] = [
    0.0,
    std::f64::consts::PI / 6.0,
    std::f64::consts::PI / 3.0,
    5.0 * std::f64::consts::PI / 12.0,
];

/// Azimuths at or beyond this are treated as oblique in evaluation splits.
pub const OBLIQUE_AZIMUTH: f64 = std::f64::consts::PI / 3.0 - 1e-9;

pub const BENCH_FRAMES: usize = 96;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub character: CharacterSpec,
    pub motion: MotionSpec,
    pub seed: u64,
    pub frames: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub topology: String,
    pub fps: f64,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

/// An on-disk dataset loaded into memory, with file checksums and shapes
/// verified against the manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub sequences: Vec<Sequence2D>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn character_label(&self, index: usize) -> &str {
        &self.manifest.entries[index].character.name
    }

    pub fn motion_label(&self, index: usize) -> &str {
        &self.manifest.entries[index].motion.name
    }

    pub fn azimuth(&self, index: usize) -> f64 {
        self.manifest.entries[index].motion.azimuth
    }
}

fn mix_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over a packed index; stable across platforms.
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate and write the 8 x 6 x 4 = 192 sequence training bench.
pub fn write_bench_dataset(dir: &Path, seed: u64) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let characters = bench_characters();
    let motions = bench_motions(BENCH_FRAMES);
    let mut entries = Vec::new();
    for (ci, character) in characters.iter().enumerate() {
        for (mi, motion) in motions.iter().enumerate() {
            for (ai, &azimuth) in BENCH_AZIMUTHS.iter().enumerate() {
                let entry_seed = mix_seed(seed, ci as u64, mi as u64, ai as u64);
                let spec = motion.clone().with_azimuth(azimuth);
                let (_, seq2) = generate(character, &spec, entry_seed)?;
                let file = format!("seq_{:03}.json", entries.len());
                let path = dir.join(&file);
                io::write_sequence2d(&path, &seq2)?;
                entries.push(ManifestEntry {
                    file,
                    character: character.clone(),
                    motion: spec,
                    seed: entry_seed,
                    frames: seq2.frames(),
                    sha256: io::file_sha256(&path)?,
                });
            }
        }
    }
    let manifest = DatasetManifest {
        name: "bench-192".into(),
        topology: crate::skeleton::DEFAULT_TOPOLOGY_NAME.into(),
        fps: 30.0,
        seed,
        entries,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = io::read_json(&dir.join("manifest.json"))?;
    let mut sequences = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = dir.join(&entry.file);
        let sha = io::file_sha256(&path)?;
        if sha != entry.sha256 {
            return Err(Error::Dataset(format!(
                "{}: checksum mismatch (manifest {}, file {})",
                path.display(),
                entry.sha256,
                sha
            )));
        }
        let seq = io::read_sequence2d(&path)?;
        if seq.frames() != entry.frames {
            return Err(Error::Dataset(format!(
                "{}: {} frames, manifest says {}",
                path.display(),
                seq.frames(),
                entry.frames
            )));
        }
        sequences.push(seq);
    }
    Ok(Dataset {
        manifest,
        sequences,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPairEntry {
    pub id: usize,
    pub src_file: String,
    pub tgt_ref_file: String,
    pub ground_truth_file: String,
    pub src_character: String,
    pub tgt_character: String,
    pub motion: String,
    pub ref_motion: String,
    pub azimuth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPairsManifest {
    pub seed: u64,
    pub pairs: Vec<EvalPairEntry>,
}

/// Held-out evaluation pairs: same characters and motion families as the
/// bench, fresh seed-derived phases, azimuths cycling through the bench set
/// so a quarter of the pairs sit at each view.
pub fn write_eval_pairs(dir: &Path, seed: u64, count: usize) -> Result<EvalPairsManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let characters = bench_characters();
    let motions = bench_motions(BENCH_FRAMES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0E7A_1_BEEF);
    let mut pairs = Vec::new();
    for id in 0..count {
        let azimuth = BENCH_AZIMUTHS[id % BENCH_AZIMUTHS.len()];
        let a = rng.gen_range(0..characters.len());
        let b = loop {
            let b = rng.gen_range(0..characters.len());
            if b != a {
                break b;
            }
        };
        let m = rng.gen_range(0..motions.len());
        let r = loop {
            let r = rng.gen_range(0..motions.len());
            if r != m {
                break r;
            }
        };
        let pair_seed = rng.gen::<u64>();
        let motion = motions[m].clone().with_azimuth(azimuth);
        let ref_motion = motions[r].clone().with_azimuth(azimuth);
        let triple =
            make_retarget_pair(&characters[a], &characters[b], &motion, &ref_motion, pair_seed)?;
        let src_file = format!("pair_{id:02}_src.json");
        let tgt_ref_file = format!("pair_{id:02}_ref.json");
        let ground_truth_file = format!("pair_{id:02}_gt.json");
        io::write_sequence2d(&dir.join(&src_file), &triple.src)?;
        io::write_sequence2d(&dir.join(&tgt_ref_file), &triple.tgt_ref)?;
        io::write_sequence2d(&dir.join(&ground_truth_file), &triple.ground_truth)?;
        pairs.push(EvalPairEntry {
            id,
            src_file,
            tgt_ref_file,
            ground_truth_file,
            src_character: characters[a].name.clone(),
            tgt_character: characters[b].name.clone(),
            motion: motion.name.clone(),
            ref_motion: ref_motion.name.clone(),
            azimuth,
        });
    }
    let manifest = EvalPairsManifest { seed, pairs };
    io::write_json(&dir.join("pairs.json"), &manifest)?;
    Ok(manifest)
}

/// A loaded evaluation pair. Ground truth is optional so a bench can skip
/// (and count) pairs whose reference clip is missing.
#[derive(Debug, Clone)]
pub struct LoadedPair {
    pub entry: EvalPairEntry,
    pub src: Sequence2D,
    pub tgt_ref: Sequence2D,
    pub ground_truth: Option<Sequence2D>,
}

pub fn read_eval_pairs(dir: &Path) -> Result<(EvalPairsManifest, Vec<LoadedPair>)> {
    let manifest: EvalPairsManifest = io::read_json(&dir.join("pairs.json"))?;
    let mut out = Vec::with_capacity(manifest.pairs.len());
    for entry in &manifest.pairs {
        let src = io::read_sequence2d(&dir.join(&entry.src_file))?;
        let tgt_ref = io::read_sequence2d(&dir.join(&entry.tgt_ref_file))?;
        let gt_path: PathBuf = dir.join(&entry.ground_truth_file);
        let ground_truth = if gt_path.exists() {
            Some(io::read_sequence2d(&gt_path)?)
        } else {
            None
        };
        out.push(LoadedPair {
            entry: entry.clone(),
            src,
            tgt_ref,
            ground_truth,
        });
    }
    Ok((manifest, out))
}

/// Hash over all per-file checksums in manifest order; pins the bench.
pub fn dataset_fingerprint(manifest: &DatasetManifest) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for entry in &manifest.entries {
        hasher.update(entry.sha256.as_bytes());
    }
    io::hex_string(&hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{limb_length_2d, limb_length_3d};

    fn topo() -> Arc<SkeletonTopology> {
        SkeletonTopology::default_15()
    }

    #[test]
    fn zero_amplitude_motion_is_static() {
        let character = CharacterSpec::uniform("c", 1.0);
        let motion = MotionSpec::new("still", MotionFamily::WalkCycle, 1.0, 0.0).with_frames(10);
        let (seq3, seq2) = generate(&character, &motion, 3).unwrap();
        for f in 1..10 {
            for j in 0..15 {
                assert_eq!(seq3.joint(f, j), seq3.joint(0, j));
                assert_eq!(seq2.joint(f, j), seq2.joint(0, j));
            }
        }
    }

    #[test]
    fn same_motion_on_two_characters_has_identical_angles_and_scaled_limbs() {
        let topo = topo();
        let chars = bench_characters();
        let motion = bench_motions(24)[0].clone();
        let (a3, _) = generate(&chars[0], &motion, 11).unwrap();
        let (b3, _) = generate(&chars[4], &motion, 11).unwrap();
        for f in 0..24 {
            for (limb, &(p, c)) in topo.limbs().iter().enumerate() {
                let la = limb_length_3d(&a3, f, limb);
                let lb = limb_length_3d(&b3, f, limb);
                let expect = (chars[4].limb_multipliers[limb] * chars[4].height)
                    / (chars[0].limb_multipliers[limb] * chars[0].height);
                assert!((lb / la - expect).abs() < 1e-9, "limb {limb} frame {f}");
                // Identical limb directions.
                let ua = a3.joint(f, p);
                let va = a3.joint(f, c);
                let ub = b3.joint(f, p);
                let vb = b3.joint(f, c);
                for i in 0..3 {
                    let da = (va[i] - ua[i]) / la;
                    let db = (vb[i] - ub[i]) / lb;
                    assert!((da - db).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bone_lengths_are_constant_across_frames() {
        let character = bench_characters()[6].clone();
        for motion in bench_motions(32) {
            let (seq3, _) = generate(&character, &motion, 5).unwrap();
            for limb in 0..14 {
                let first = limb_length_3d(&seq3, 0, limb);
                for f in 1..32 {
                    assert!(
                        (limb_length_3d(&seq3, f, limb) - first).abs() <= 1e-9,
                        "{} limb {limb}",
                        motion.name
                    );
                }
            }
        }
    }

    #[test]
    fn opposite_azimuths_mirror_x() {
        let character = CharacterSpec::uniform("c", 1.0);
        let motion = bench_motions(8)[2].clone();
        let (_, front) = generate(&character, &motion.clone().with_azimuth(0.0), 9).unwrap();
        let (_, back) =
            generate(&character, &motion.with_azimuth(std::f64::consts::PI), 9).unwrap();
        for f in 0..8 {
            for j in 0..15 {
                let a = front.joint(f, j);
                let b = back.joint(f, j);
                assert!((a[0] + b[0]).abs() < 1e-12);
                assert!((a[1] - b[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_in_its_seed() {
        let character = bench_characters()[1].clone();
        let motion = bench_motions(16)[5].clone();
        let (a3, a2) = generate(&character, &motion, 77).unwrap();
        let (b3, b2) = generate(&character, &motion, 77).unwrap();
        assert_eq!(a3.data(), b3.data());
        assert_eq!(a2.data(), b2.data());
        let (c3, _) = generate(&character, &motion, 78).unwrap();
        assert_ne!(a3.data(), c3.data());
    }

    #[test]
    fn same_character_pair_makes_ground_truth_equal_source() {
        let chars = bench_characters();
        let motions = bench_motions(16);
        let triple =
            make_retarget_pair(&chars[2], &chars[2], &motions[0], &motions[3], 21).unwrap();
        assert_eq!(triple.src.data(), triple.ground_truth.data());
    }

    #[test]
    fn ground_truth_limb_lengths_match_reference_at_frontal_view() {
        // Same character in both clips; at azimuth 0 the planar motions are
        // projected without foreshortening, so per-frame-average limb lengths
        // agree across different motions.
        let chars = bench_characters();
        let motions = bench_motions(32);
        let triple =
            make_retarget_pair(&chars[1], &chars[3], &motions[1], &motions[4], 4).unwrap();
        let topo = topo();
        for limb in 0..topo.limb_count() {
            let mean = |s: &Sequence2D| -> f64 {
                (0..s.frames())
                    .map(|f| limb_length_2d(s, f, limb))
                    .sum::<f64>()
                    / s.frames() as f64
            };
            let gt = mean(&triple.ground_truth);
            let re = mean(&triple.tgt_ref);
            assert!((gt - re).abs() < 1e-6, "limb {limb}: {gt} vs {re}");
        }
    }

    #[test]
    fn dataset_round_trip_validates_checksums() {
        let dir = tempfile::tempdir().unwrap();
        // A small grid (not the full bench) keeps this test quick; the full
        // 192-sequence bench is pinned in the integration suite.
        let characters = &bench_characters()[..2];
        let motions = &bench_motions(16)[..2];
        let mut entries = Vec::new();
        for (ci, character) in characters.iter().enumerate() {
            for (mi, motion) in motions.iter().enumerate() {
                let seed = mix_seed(1, ci as u64, mi as u64, 0);
                let (_, seq2) = generate(character, motion, seed).unwrap();
                let file = format!("seq_{:03}.json", entries.len());
                io::write_sequence2d(&dir.path().join(&file), &seq2).unwrap();
                entries.push(ManifestEntry {
                    file: file.clone(),
                    character: character.clone(),
                    motion: motion.clone(),
                    seed,
                    frames: seq2.frames(),
                    sha256: io::file_sha256(&dir.path().join(&file)).unwrap(),
                });
            }
        }
        let manifest = DatasetManifest {
            name: "mini".into(),
            topology: "momo15".into(),
            fps: 30.0,
            seed: 1,
            entries,
        };
        io::write_json(&dir.path().join("manifest.json"), &manifest).unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), manifest.entries.len());

        // Corrupt one file: the reader must reject it.
        let victim = dir.path().join(&manifest.entries[1].file);
        let mut text = std::fs::read_to_string(&victim).unwrap();
        text.push(' ');
        std::fs::write(&victim, text).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Dataset(_))));
    }

    #[test]
    fn eval_pairs_cover_all_azimuths_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_eval_pairs(dir.path(), 9, 8).unwrap();
        assert_eq!(manifest.pairs.len(), 8);
        for (i, az) in BENCH_AZIMUTHS.iter().enumerate() {
            assert_eq!(manifest.pairs[i].azimuth, *az);
        }
        let (_, loaded) = read_eval_pairs(dir.path()).unwrap();
        assert_eq!(loaded.len(), 8);
        assert!(loaded.iter().all(|p| p.ground_truth.is_some()));
    }
}
