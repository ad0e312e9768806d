//! Skeleton topology, perturbation geometry and sequence preprocessing.
//!
//! The joint tree is rooted at the pelvis. A *limb* is the (parent, child)
//! edge above each non-root joint; limbs are indexed by the order of
//! [`SkeletonTopology::limbs`]. All geometry here is pure: values are
//! immutable once constructed and safe to share across threads.

use std::sync::Arc;

use crate::error::Error;
use crate::Result;

/// Joint tree with named joints. The four marker joints (shoulders and hip
/// markers) are resolved at construction and drive body-axis estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    name: String,
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    root: usize,
    /// Joint visit order with every parent before its children.
    order: Vec<usize>,
    limbs: Vec<(usize, usize)>,
    /// Limb index above each non-root joint (`usize::MAX` for the root).
    limb_of_joint: Vec<usize>,
    left_shoulder: usize,
    right_shoulder: usize,
    left_hip: usize,
    right_hip: usize,
}

/// Canonical 15-joint skeleton: pelvis root, two 3-joint legs, a torso/neck/
/// head chain and two 3-joint arms.
pub const DEFAULT_TOPOLOGY_NAME: &str = "momo15";

const MOMO15: [(&str, Option<usize>); 15] = [
    ("pelvis", None),
    ("left_hip", Some(0)),
    ("left_knee", Some(1)),
    ("left_ankle", Some(2)),
    ("right_hip", Some(0)),
    ("right_knee", Some(4)),
    ("right_ankle", Some(5)),
    ("neck", Some(0)),
    ("head", Some(7)),
    ("left_shoulder", Some(7)),
    ("left_elbow", Some(9)),
    ("left_wrist", Some(10)),
    ("right_shoulder", Some(7)),
    ("right_elbow", Some(12)),
    ("right_wrist", Some(13)),
];

impl SkeletonTopology {
    pub fn new(
        name: impl Into<String>,
        names: Vec<String>,
        parent: Vec<Option<usize>>,
    ) -> Result<Arc<Self>> {
        let n = names.len();
        if n == 0 || parent.len() != n {
            return Err(Error::Topology(format!(
                "{} names vs {} parent entries",
                n,
                parent.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parent[j].is_none()).collect();
        let [root] = roots[..] else {
            return Err(Error::Topology(format!("expected 1 root, found {}", roots.len())));
        };
        // Parents must exist and every joint must reach the root (no cycles).
        for j in 0..n {
            if let Some(p) = parent[j] {
                if p >= n {
                    return Err(Error::Topology(format!("joint {j} has parent {p} >= {n}")));
                }
            }
            let mut cur = j;
            let mut hops = 0;
            while let Some(p) = parent[cur] {
                cur = p;
                hops += 1;
                if hops > n {
                    return Err(Error::Topology(format!("cycle through joint {j}")));
                }
            }
            if cur != root {
                return Err(Error::Topology(format!("joint {j} does not reach the root")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&j| {
            let mut depth = 0;
            let mut cur = j;
            while let Some(p) = parent[cur] {
                cur = p;
                depth += 1;
            }
            (depth, j)
        });
        let limbs: Vec<(usize, usize)> = (0..n)
            .filter_map(|j| parent[j].map(|p| (p, j)))
            .collect();
        let mut limb_of_joint = vec![usize::MAX; n];
        for (i, &(_, child)) in limbs.iter().enumerate() {
            limb_of_joint[child] = i;
        }
        let find = |want: &str| -> Result<usize> {
            names
                .iter()
                .position(|s| s == want)
                .ok_or_else(|| Error::Topology(format!("missing marker joint `{want}`")))
        };
        Ok(Arc::new(SkeletonTopology {
            left_shoulder: find("left_shoulder")?,
            right_shoulder: find("right_shoulder")?,
            left_hip: find("left_hip")?,
            right_hip: find("right_hip")?,
            name: name.into(),
            names,
            parent,
            root,
            order,
            limbs,
            limb_of_joint,
        }))
    }

    pub fn default_15() -> Arc<Self> {
        let names = MOMO15.iter().map(|(n, _)| n.to_string()).collect();
        let parent = MOMO15.iter().map(|(_, p)| *p).collect();
        Self::new(DEFAULT_TOPOLOGY_NAME, names, parent).expect("builtin topology is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Parent-before-child traversal order.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    /// (parent, child) pairs, one per non-root joint, ordered by child index.
    pub fn limbs(&self) -> &[(usize, usize)] {
        &self.limbs
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    /// Index into [`Self::limbs`] of the limb above `joint`.
    pub fn limb_above(&self, joint: usize) -> Option<usize> {
        let i = self.limb_of_joint[joint];
        (i != usize::MAX).then_some(i)
    }

    pub fn markers(&self) -> AxisMarkers {
        AxisMarkers {
            left_shoulder: self.left_shoulder,
            right_shoulder: self.right_shoulder,
            left_hip: self.left_hip,
            right_hip: self.right_hip,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AxisMarkers {
    pub left_shoulder: usize,
    pub right_shoulder: usize,
    pub left_hip: usize,
    pub right_hip: usize,
}

macro_rules! sequence_type {
    ($name:ident, $dim:literal, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            topology: Arc<SkeletonTopology>,
            /// `[T, N, dim]` row-major.
            data: Vec<f64>,
            frames: usize,
            pub fps: f64,
        }

        impl $name {
            pub fn new(topology: Arc<SkeletonTopology>, frames: usize, data: Vec<f64>) -> Result<Self> {
                let expect = frames * topology.joint_count() * $dim;
                if data.len() != expect {
                    return Err(Error::Sequence(format!(
                        "expected {} coordinates for {} frames, got {}",
                        expect,
                        frames,
                        data.len()
                    )));
                }
                if !data.iter().all(|v| v.is_finite()) {
                    return Err(Error::Sequence("non-finite coordinate".into()));
                }
                Ok(Self {
                    topology,
                    data,
                    frames,
                    fps: 30.0,
                })
            }

            pub fn zeros(topology: Arc<SkeletonTopology>, frames: usize) -> Self {
                let n = topology.joint_count();
                Self {
                    topology,
                    data: vec![0.0; frames * n * $dim],
                    frames,
                    fps: 30.0,
                }
            }

            pub fn topology(&self) -> &Arc<SkeletonTopology> {
                &self.topology
            }

            pub fn frames(&self) -> usize {
                self.frames
            }

            pub fn joint_count(&self) -> usize {
                self.topology.joint_count()
            }

            pub fn joint(&self, frame: usize, joint: usize) -> [f64; $dim] {
                let n = self.topology.joint_count();
                let base = (frame * n + joint) * $dim;
                let mut out = [0.0; $dim];
                out.copy_from_slice(&self.data[base..base + $dim]);
                out
            }

            pub fn set_joint(&mut self, frame: usize, joint: usize, value: [f64; $dim]) {
                let n = self.topology.joint_count();
                let base = (frame * n + joint) * $dim;
                self.data[base..base + $dim].copy_from_slice(&value);
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            /// Contiguous crop of `len` frames starting at `start`.
            pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
                if start + len > self.frames {
                    return Err(Error::Sequence(format!(
                        "crop {}..{} out of {} frames",
                        start,
                        start + len,
                        self.frames
                    )));
                }
                let n = self.topology.joint_count();
                let a = start * n * $dim;
                let b = (start + len) * n * $dim;
                let mut out = Self {
                    topology: self.topology.clone(),
                    data: self.data[a..b].to_vec(),
                    frames: len,
                    fps: self.fps,
                };
                out.fps = self.fps;
                Ok(out)
            }

            /// Channels-first layout `[dim*N, T]` with joint-major rows
            /// (x0, y0, ..., x1, y1, ...), for the convolutional stack.
            pub fn to_channels(&self) -> momo_autodiff::Tensor {
                let n = self.topology.joint_count();
                let t = self.frames;
                let mut out = vec![0.0; $dim * n * t];
                for f in 0..t {
                    for j in 0..n {
                        for c in 0..$dim {
                            out[(j * $dim + c) * t + f] = self.data[(f * n + j) * $dim + c];
                        }
                    }
                }
                momo_autodiff::Tensor::new(vec![$dim * n, t], out).expect("layout consistent")
            }

            /// Inverse of [`Self::to_channels`].
            pub fn from_channels(
                topology: Arc<SkeletonTopology>,
                tensor: &momo_autodiff::Tensor,
            ) -> Result<Self> {
                let n = topology.joint_count();
                let shape = tensor.shape();
                if shape.len() != 2 || shape[0] != $dim * n {
                    return Err(Error::Sequence(format!(
                        "expected [{}, T] tensor, got {:?}",
                        $dim * n,
                        shape
                    )));
                }
                let t = shape[1];
                let src = tensor.data();
                let mut data = vec![0.0; t * n * $dim];
                for f in 0..t {
                    for j in 0..n {
                        for c in 0..$dim {
                            data[(f * n + j) * $dim + c] = src[(j * $dim + c) * t + f];
                        }
                    }
                }
                Self::new(topology, t, data)
            }
        }
    };
}

sequence_type!(Sequence2D, 2, "2D joint sequence, `[T, N, 2]` row-major.");
sequence_type!(Sequence3D, 3, "3D joint sequence, `[T, N, 3]` row-major.");

/// Structural / view perturbation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationParams {
    /// One scale per limb, aligned with [`SkeletonTopology::limbs`].
    pub local_scales: Vec<f64>,
    pub global_scale: f64,
    pub rotation_axis: [f64; 3],
    pub rotation_angle: f64,
    /// Number of rotated projections per sequence.
    pub projections: usize,
}

impl PerturbationParams {
    pub fn identity(limbs: usize) -> Self {
        PerturbationParams {
            local_scales: vec![1.0; limbs],
            global_scale: 1.0,
            rotation_axis: [0.0, 1.0, 0.0],
            rotation_angle: 0.0,
            projections: 3,
        }
    }

    pub fn validate(&self, topology: &SkeletonTopology) -> Result<()> {
        if self.local_scales.len() != topology.limb_count() {
            return Err(Error::Config(format!(
                "{} local scales for {} limbs",
                self.local_scales.len(),
                topology.limb_count()
            )));
        }
        if self.local_scales.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::Config("local scales must be positive".into()));
        }
        if !(self.global_scale > 0.0) || !self.global_scale.is_finite() {
            return Err(Error::Config("global scale must be positive".into()));
        }
        let norm = norm3(self.rotation_axis);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("rotation axis norm {norm} != 1")));
        }
        if self.projections == 0 {
            return Err(Error::Config("projections must be >= 1".into()));
        }
        Ok(())
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Outcome of [`scale_limbs`]: the perturbed sequence plus the number of
/// (frame, limb) occurrences whose limb had exactly zero length, where the
/// limb direction is undefined and the subtree keeps only the translations
/// inherited from its ancestors.
#[derive(Debug, Clone)]
pub struct ScaledSequence {
    pub sequence: Sequence2D,
    pub zero_length_limbs: usize,
}

/// Per frame, rescale every limb `i` to `gamma_i` times its length by rigidly
/// translating the whole subtree below it along the limb direction, then
/// multiply all coordinates by the global scale. The root stays fixed before
/// global scaling, and `gamma == 1` everywhere reproduces the input
/// bit-for-bit.
pub fn scale_limbs(x: &Sequence2D, params: &PerturbationParams) -> Result<ScaledSequence> {
    let topo = x.topology();
    params.validate(topo)?;
    let n = topo.joint_count();
    let mut out = x.clone();
    let mut zero_hits = 0usize;
    // Accumulated subtree translation per joint, in parent-first order:
    // shift(child) = shift(parent) + (gamma - 1) * original_offset.
    let mut shift = vec![[0.0f64; 2]; n];
    for f in 0..x.frames() {
        for &j in topo.topo_order() {
            let Some(p) = topo.parent(j) else {
                shift[j] = [0.0, 0.0];
                continue;
            };
            let limb = topo.limb_above(j).expect("non-root joint has a limb");
            let gamma = params.local_scales[limb];
            let a = x.joint(f, p);
            let b = x.joint(f, j);
            let offset = [b[0] - a[0], b[1] - a[1]];
            if offset[0] == 0.0 && offset[1] == 0.0 {
                zero_hits += 1;
            }
            let g = gamma - 1.0;
            shift[j] = [
                shift[p][0] + g * offset[0],
                shift[p][1] + g * offset[1],
            ];
            let moved = [b[0] + shift[j][0], b[1] + shift[j][1]];
            out.set_joint(f, j, moved);
        }
    }
    if params.global_scale != 1.0 {
        for v in out.data_mut() {
            *v *= params.global_scale;
        }
    }
    Ok(ScaledSequence {
        sequence: out,
        zero_length_limbs: zero_hits,
    })
}

/// Rotation matrix about unit axis `n` by angle `theta`:
/// `R p = p cos(t) + (n x p) sin(t) + n (n . p) (1 - cos(t))`.
pub fn rodrigues(axis: [f64; 3], theta: f64) -> Result<[[f64; 3]; 3]> {
    let norm = norm3(axis);
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Degenerate(format!("rotation axis norm {norm} != 1")));
    }
    let [nx, ny, nz] = axis;
    let c = theta.cos();
    let s = theta.sin();
    let one_c = 1.0 - c;
    Ok([
        [
            c + nx * nx * one_c,
            nx * ny * one_c - nz * s,
            nx * nz * one_c + ny * s,
        ],
        [
            ny * nx * one_c + nz * s,
            c + ny * ny * one_c,
            ny * nz * one_c - nx * s,
        ],
        [
            nz * nx * one_c - ny * s,
            nz * ny * one_c + nx * s,
            c + nz * nz * one_c,
        ],
    ])
}

/// First two rows of a [`rodrigues`] matrix: rotate, then drop depth.
pub fn rotation_rows(axis: [f64; 3], theta: f64) -> Result<[[f64; 3]; 2]> {
    let r = rodrigues(axis, theta)?;
    Ok([r[0], r[1]])
}

/// Rotate a 3D sequence about `axis` by `theta` and orthographically project
/// to 2D by dropping the rotated depth coordinate. With `theta == 0` this is
/// exactly the (x, y) component extraction.
pub fn rotate_project(x: &Sequence3D, theta: f64, axis: [f64; 3]) -> Result<Sequence2D> {
    let rows = rotation_rows(axis, theta)?;
    let mut out = Sequence2D::zeros(x.topology().clone(), x.frames());
    out.fps = x.fps;
    for f in 0..x.frames() {
        for j in 0..x.joint_count() {
            let p = x.joint(f, j);
            out.set_joint(
                f,
                j,
                [
                    rows[0][0] * p[0] + rows[0][1] * p[1] + rows[0][2] * p[2],
                    rows[1][0] * p[0] + rows[1][1] * p[1] + rows[1][2] * p[2],
                ],
            );
        }
    }
    Ok(out)
}

/// The evenly spaced view-perturbation angles `k pi / (K + 1)`, `k = 1..=K`.
pub fn rotation_angles(projections: usize) -> Vec<f64> {
    (1..=projections)
        .map(|k| k as f64 * std::f64::consts::PI / (projections as f64 + 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyAxis {
    pub axis: [f64; 3],
    /// True when the estimate fell back to the default up direction.
    pub degenerate: bool,
}

/// Estimated vertical direction of the body: the normalized per-frame average
/// of `midpoint(shoulders) - midpoint(hip markers)`, normalized per frame
/// first. Falls back to `(0, 1, 0)` when every frame is degenerate.
pub fn body_axis(x: &Sequence3D) -> BodyAxis {
    let m = x.topology().markers();
    let mut acc = [0.0f64; 3];
    let mut valid = 0usize;
    for f in 0..x.frames() {
        let ls = x.joint(f, m.left_shoulder);
        let rs = x.joint(f, m.right_shoulder);
        let lh = x.joint(f, m.left_hip);
        let rh = x.joint(f, m.right_hip);
        let d = [
            0.5 * (ls[0] + rs[0]) - 0.5 * (lh[0] + rh[0]),
            0.5 * (ls[1] + rs[1]) - 0.5 * (lh[1] + rh[1]),
            0.5 * (ls[2] + rs[2]) - 0.5 * (lh[2] + rh[2]),
        ];
        let n = norm3(d);
        if n > 1e-12 {
            acc[0] += d[0] / n;
            acc[1] += d[1] / n;
            acc[2] += d[2] / n;
            valid += 1;
        }
    }
    if valid == 0 {
        return BodyAxis {
            axis: [0.0, 1.0, 0.0],
            degenerate: true,
        };
    }
    let n = norm3(acc);
    if n < 1e-12 {
        return BodyAxis {
            axis: [0.0, 1.0, 0.0],
            degenerate: true,
        };
    }
    BodyAxis {
        axis: [acc[0] / n, acc[1] / n, acc[2] / n],
        degenerate: false,
    }
}

/// A detector-style sequence that may have missing joints.
#[derive(Debug, Clone)]
pub struct RawSequence2D {
    pub topology: Arc<SkeletonTopology>,
    /// `frames[t][j]`, `None` for a missing detection.
    pub frames: Vec<Vec<Option<[f64; 2]>>>,
    pub fps: f64,
}

/// Temporal sigma used for detector data.
pub const DEFAULT_SMOOTH_SIGMA: f64 = 2.0;

/// Truncated (at 4 sigma) and renormalized Gaussian kernel; weights sum to 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Fill gaps from the nearest observed frame in time (ties to the earlier
/// frame), then smooth each coordinate with a temporal Gaussian. Near the
/// sequence boundaries the kernel is truncated to the valid range and
/// renormalized, so constants stay constant. `sigma <= 0` skips smoothing.
pub fn preprocess(raw: &RawSequence2D, sigma: f64) -> Result<Sequence2D> {
    let n = raw.topology.joint_count();
    let t = raw.frames.len();
    if t == 0 {
        return Err(Error::Sequence("empty sequence".into()));
    }
    for (f, frame) in raw.frames.iter().enumerate() {
        if frame.len() != n {
            return Err(Error::Sequence(format!(
                "frame {f} has {} joints, topology has {n}",
                frame.len()
            )));
        }
    }
    let mut filled = vec![0.0f64; t * n * 2];
    for j in 0..n {
        let observed: Vec<usize> = (0..t).filter(|&f| raw.frames[f][j].is_some()).collect();
        if observed.is_empty() {
            return Err(Error::JointNeverObserved(
                raw.topology.joint_names()[j].clone(),
            ));
        }
        let mut prev: Option<usize> = None;
        let mut next_iter = observed.iter().copied().peekable();
        for f in 0..t {
            while let Some(&nf) = next_iter.peek() {
                if nf < f {
                    prev = Some(next_iter.next().unwrap());
                } else {
                    break;
                }
            }
            let value = match raw.frames[f][j] {
                Some(v) => {
                    prev = Some(f);
                    next_iter.next();
                    v
                }
                None => {
                    let next = next_iter.peek().copied();
                    let src = match (prev, next) {
                        (Some(p), Some(q)) => {
                            // Tie goes to the earlier frame.
                            if f - p <= q - f {
                                p
                            } else {
                                q
                            }
                        }
                        (Some(p), None) => p,
                        (None, Some(q)) => q,
                        (None, None) => unreachable!("observed is non-empty"),
                    };
                    raw.frames[src][j].expect("source frame observed")
                }
            };
            filled[(f * n + j) * 2] = value[0];
            filled[(f * n + j) * 2 + 1] = value[1];
        }
    }

    let data = if sigma > 0.0 {
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() / 2) as isize;
        let mut smoothed = vec![0.0f64; t * n * 2];
        for j in 0..n {
            for c in 0..2 {
                for f in 0..t {
                    let mut acc = 0.0;
                    let mut weight = 0.0;
                    for (ki, &w) in kernel.iter().enumerate() {
                        let src = f as isize + ki as isize - radius;
                        if src >= 0 && (src as usize) < t {
                            acc += w * filled[((src as usize) * n + j) * 2 + c];
                            weight += w;
                        }
                    }
                    smoothed[(f * n + j) * 2 + c] = acc / weight;
                }
            }
        }
        smoothed
    } else {
        filled
    };

    let mut seq = Sequence2D::new(raw.topology.clone(), t, data)?;
    seq.fps = raw.fps;
    Ok(seq)
}

/// Per-sequence normalization: translate so the mean pelvis position is the
/// origin, scale so the mean shoulder-midpoint-to-hip-midpoint distance is 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizeTransform {
    pub center: [f64; 2],
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.center[0]) * self.scale, (p[1] - self.center[1]) * self.scale]
    }

    pub fn invert_point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] / self.scale + self.center[0], p[1] / self.scale + self.center[1]]
    }
}

pub fn normalize(x: &Sequence2D) -> Result<(Sequence2D, NormalizeTransform)> {
    let topo = x.topology();
    let m = topo.markers();
    let root = topo.root();
    let t = x.frames();
    let mut center = [0.0f64; 2];
    let mut torso = 0.0f64;
    for f in 0..t {
        let p = x.joint(f, root);
        center[0] += p[0];
        center[1] += p[1];
        let ls = x.joint(f, m.left_shoulder);
        let rs = x.joint(f, m.right_shoulder);
        let lh = x.joint(f, m.left_hip);
        let rh = x.joint(f, m.right_hip);
        let dx = 0.5 * (ls[0] + rs[0]) - 0.5 * (lh[0] + rh[0]);
        let dy = 0.5 * (ls[1] + rs[1]) - 0.5 * (lh[1] + rh[1]);
        torso += (dx * dx + dy * dy).sqrt();
    }
    center[0] /= t as f64;
    center[1] /= t as f64;
    torso /= t as f64;
    if torso < 1e-9 {
        return Err(Error::Degenerate(
            "zero mean torso length; cannot normalize".into(),
        ));
    }
    let transform = NormalizeTransform {
        center,
        scale: 1.0 / torso,
    };
    let mut out = x.clone();
    for f in 0..t {
        for j in 0..x.joint_count() {
            let p = out.joint(f, j);
            out.set_joint(f, j, transform.apply_point(p));
        }
    }
    Ok((out, transform))
}

pub fn denormalize(x: &Sequence2D, transform: &NormalizeTransform) -> Sequence2D {
    let mut out = x.clone();
    for f in 0..x.frames() {
        for j in 0..x.joint_count() {
            let p = out.joint(f, j);
            out.set_joint(f, j, transform.invert_point(p));
        }
    }
    out
}

/// Mean length of each limb across frames.
pub fn mean_limb_lengths(x: &Sequence2D) -> Vec<f64> {
    let topo = x.topology();
    let mut out = vec![0.0; topo.limb_count()];
    for f in 0..x.frames() {
        for (i, &(p, c)) in topo.limbs().iter().enumerate() {
            let a = x.joint(f, p);
            let b = x.joint(f, c);
            out[i] += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        }
    }
    for v in &mut out {
        *v /= x.frames() as f64;
    }
    out
}

/// Per-frame length of limb `i` in a 3D sequence.
pub fn limb_length_3d(x: &Sequence3D, frame: usize, limb: usize) -> f64 {
    let (p, c) = x.topology().limbs()[limb];
    let a = x.joint(frame, p);
    let b = x.joint(frame, c);
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt()
}

/// Per-frame length of limb `i` in a 2D sequence.
pub fn limb_length_2d(x: &Sequence2D, frame: usize, limb: usize) -> f64 {
    let (p, c) = x.topology().limbs()[limb];
    let a = x.joint(frame, p);
    let b = x.joint(frame, c);
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}
