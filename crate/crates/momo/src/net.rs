//! The motion / structure / view encoders, the decoder, the discriminator,
//! and code recombination for retargeting.
//!
//! All three encoders are stacks of three stride-2 temporal convolutions
//! (kernel 8, reflection padding 3, leaky-relu 0.2), so the time axis shrinks
//! by 8. The motion code keeps its time axis; structure and view codes are
//! max-pooled over time. The decoder broadcasts the pooled codes along time,
//! concatenates them with the motion code channel-wise and mirrors the
//! encoder with three (nearest-neighbor 2x upsample, stride-1 conv) blocks
//! before a linear convolution that emits 3N channels.

use momo_autodiff::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::skeleton::{body_axis, rotate_project, Sequence2D, Sequence3D};
use crate::Result;

/// Temporal downsampling factor of the encoders (three stride-2 layers).
pub const DOWNSAMPLE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCfg {
    pub joints: usize,
    pub motion_channels: [usize; 3],
    pub structure_channels: [usize; 3],
    pub view_channels: [usize; 3],
    pub decoder_channels: [usize; 3],
    pub disc_channels: [usize; 3],
    pub enc_kernel: usize,
    pub enc_pad: usize,
    pub dec_kernel: usize,
    pub out_kernel: usize,
    pub leaky_slope: f64,
}

impl ModelCfg {
    /// Full-size configuration: code widths 128 / 256 / 8.
    pub fn paper() -> Self {
        ModelCfg {
            joints: 15,
            motion_channels: [64, 96, 128],
            structure_channels: [64, 128, 256],
            view_channels: [16, 16, 8],
            decoder_channels: [256, 128, 64],
            disc_channels: [64, 96, 128],
            enc_kernel: 8,
            enc_pad: 3,
            dec_kernel: 7,
            out_kernel: 7,
            leaky_slope: 0.2,
        }
    }

    /// Small configuration sized for single-core CPU training.
    pub fn desk() -> Self {
        ModelCfg {
            joints: 15,
            motion_channels: [16, 16, 16],
            structure_channels: [16, 16, 24],
            view_channels: [8, 8, 6],
            decoder_channels: [32, 24, 16],
            disc_channels: [16, 16, 16],
            enc_kernel: 8,
            enc_pad: 3,
            dec_kernel: 7,
            out_kernel: 3,
            leaky_slope: 0.2,
        }
    }

    /// Tiny configuration for gradient checks and fast tests.
    pub fn micro() -> Self {
        ModelCfg {
            joints: 15,
            motion_channels: [3, 3, 3],
            structure_channels: [3, 3, 4],
            view_channels: [2, 2, 2],
            decoder_channels: [6, 5, 4],
            disc_channels: [3, 3, 3],
            enc_kernel: 8,
            enc_pad: 3,
            dec_kernel: 5,
            out_kernel: 3,
            leaky_slope: 0.2,
        }
    }

    pub fn motion_code(&self) -> usize {
        self.motion_channels[2]
    }

    pub fn structure_code(&self) -> usize {
        self.structure_channels[2]
    }

    pub fn view_code(&self) -> usize {
        self.view_channels[2]
    }

    pub fn input_channels(&self) -> usize {
        2 * self.joints
    }

    pub fn output_channels(&self) -> usize {
        3 * self.joints
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 {
            return Err(Error::Config("joints must be positive".into()));
        }
        // Stride-2 halving requires k = 2*pad + 2.
        if self.enc_kernel != 2 * self.enc_pad + 2 {
            return Err(Error::Config(format!(
                "encoder kernel {} does not halve time with padding {}",
                self.enc_kernel, self.enc_pad
            )));
        }
        for (name, k) in [("decoder", self.dec_kernel), ("output", self.out_kernel)] {
            if k % 2 == 0 {
                return Err(Error::Config(format!(
                    "{name} kernel {k} must be odd to preserve length"
                )));
            }
        }
        Ok(())
    }

    /// Check a clip length against the encoder's downsampling factor.
    pub fn check_frames(&self, frames: usize) -> Result<usize> {
        if frames == 0 || frames % DOWNSAMPLE != 0 {
            return Err(Error::Sequence(format!(
                "sequence length {frames} not divisible by {DOWNSAMPLE}; pad or crop first"
            )));
        }
        Ok(frames / DOWNSAMPLE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

/// Ordered, name-addressed parameter list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamGroup {
    pub entries: Vec<ParamEntry>,
}

impl ParamGroup {
    fn push(&mut self, name: String, shape: Vec<usize>, value: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.entries.push(ParamEntry { name, shape, value });
    }

    pub fn slot_sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.value.len()).collect()
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

// (name, c_out, c_in, k) per conv layer, in binding order.
fn conv_plan(cfg: &ModelCfg) -> Vec<(String, usize, usize, usize)> {
    let mut plan = Vec::new();
    let enc = |plan: &mut Vec<(String, usize, usize, usize)>,
               prefix: &str,
               chans: &[usize; 3],
               c0: usize,
               k: usize| {
        let mut c_in = c0;
        for (i, &c_out) in chans.iter().enumerate() {
            plan.push((format!("{prefix}.{i}"), c_out, c_in, k));
            c_in = c_out;
        }
    };
    enc(&mut plan, "enc_m", &cfg.motion_channels, cfg.input_channels(), cfg.enc_kernel);
    enc(&mut plan, "enc_s", &cfg.structure_channels, cfg.input_channels(), cfg.enc_kernel);
    enc(&mut plan, "enc_v", &cfg.view_channels, cfg.input_channels(), cfg.enc_kernel);
    let code = cfg.motion_code() + cfg.structure_code() + cfg.view_code();
    let mut c_in = code;
    for (i, &c_out) in cfg.decoder_channels.iter().enumerate() {
        plan.push((format!("dec.{i}"), c_out, c_in, cfg.dec_kernel));
        c_in = c_out;
    }
    plan.push(("dec.out".into(), cfg.output_channels(), c_in, cfg.out_kernel));
    plan
}

fn disc_plan(cfg: &ModelCfg) -> Vec<(String, usize, usize, usize)> {
    let mut plan = Vec::new();
    let mut c_in = cfg.input_channels();
    for (i, &c_out) in cfg.disc_channels.iter().enumerate() {
        plan.push((format!("disc.{i}"), c_out, c_in, cfg.enc_kernel));
        c_in = c_out;
    }
    plan.push(("disc.head".into(), 1, c_in, 1));
    plan
}

fn init_group(plan: &[(String, usize, usize, usize)], rng: &mut ChaCha8Rng) -> ParamGroup {
    let mut group = ParamGroup::default();
    for (name, c_out, c_in, k) in plan {
        let fan_in = c_in * k;
        let bound = (1.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..c_out * c_in * k)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b: Vec<f64> = (0..*c_out).map(|_| rng.gen_range(-bound..bound)).collect();
        group.push(format!("{name}.w"), vec![*c_out, *c_in, *k], w);
        group.push(format!("{name}.b"), vec![*c_out], b);
    }
    group
}

/// Generator (encoders + decoder) and discriminator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelCfg,
    pub gen: ParamGroup,
    pub disc: ParamGroup,
}

impl Model {
    /// Fan-in-scaled uniform initialization, deterministic in the seed.
    pub fn init(cfg: ModelCfg, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = init_group(&conv_plan(&cfg), &mut rng);
        let disc = init_group(&disc_plan(&cfg), &mut rng);
        Ok(Model { cfg, gen, disc })
    }

    /// Bind the generator parameters onto a tape. `trainable` controls
    /// whether gradients flow into the parameters.
    pub fn bind_generator<'t>(&self, tape: &'t Tape, trainable: bool) -> GenNet<'t> {
        GenNet {
            cfg: self.cfg.clone(),
            vars: bind_group(&self.gen, tape, trainable),
        }
    }

    pub fn bind_discriminator<'t>(&self, tape: &'t Tape, trainable: bool) -> DiscNet<'t> {
        DiscNet {
            cfg: self.cfg.clone(),
            vars: bind_group(&self.disc, tape, trainable),
        }
    }

    /// Encode a sequence into latent codes (values only).
    pub fn encode(&self, x: &Sequence2D) -> Result<LatentCodes> {
        self.cfg.check_frames(x.frames())?;
        let tape = Tape::new();
        let net = self.bind_generator(&tape, false);
        let input = tape.constant(x.to_channels());
        let codes = net.encode(input)?;
        Ok(LatentCodes::from_vars(&codes))
    }

    /// Decode latent codes back to a 3D sequence.
    pub fn decode(
        &self,
        codes: &LatentCodes,
        topology: &std::sync::Arc<crate::skeleton::SkeletonTopology>,
    ) -> Result<Sequence3D> {
        let tape = Tape::new();
        let net = self.bind_generator(&tape, false);
        let m = tape.constant(codes.motion_channels_first());
        let s = tape.constant(codes.structure.clone());
        let v = tape.constant(codes.view.clone());
        let out = net.decode(m, s, v)?;
        Sequence3D::from_channels(topology.clone(), &out.value())
    }

    /// Reconstruct: decode(encode(x)).
    pub fn reconstruct(&self, x: &Sequence2D) -> Result<Sequence3D> {
        self.cfg.check_frames(x.frames())?;
        let tape = Tape::new();
        let net = self.bind_generator(&tape, false);
        let input = tape.constant(x.to_channels());
        let codes = net.encode(input)?;
        let out = net.decode(codes.motion, codes.structure, codes.view)?;
        let mut recon = Sequence3D::from_channels(x.topology().clone(), &out.value())?;
        recon.fps = x.fps;
        Ok(recon)
    }

    /// Discriminator scores for a sequence (one per downsampled time step;
    /// sigmoid is applied at loss time, not here).
    pub fn discriminate(&self, x: &Sequence2D) -> Result<Tensor> {
        self.cfg.check_frames(x.frames())?;
        let tape = Tape::new();
        let net = self.bind_discriminator(&tape, false);
        let input = tape.constant(x.to_channels());
        Ok(net.scores(input)?.value())
    }

    /// Motion from `src`, structure and view from `tgt`, re-projected at
    /// `theta` radians about the decoded body axis (0 keeps the target view).
    pub fn retarget(&self, src: &Sequence2D, tgt: &Sequence2D, theta: f64) -> Result<Sequence2D> {
        self.cfg.check_frames(src.frames())?;
        self.cfg.check_frames(tgt.frames())?;
        let tape = Tape::new();
        let net = self.bind_generator(&tape, false);
        let src_in = tape.constant(src.to_channels());
        let tgt_in = tape.constant(tgt.to_channels());
        let src_codes = net.encode(src_in)?;
        let tgt_codes = net.encode(tgt_in)?;
        let out = net.decode(src_codes.motion, tgt_codes.structure, tgt_codes.view)?;
        let recon = Sequence3D::from_channels(src.topology().clone(), &out.value())?;
        let axis = body_axis(&recon);
        let mut projected = rotate_project(&recon, theta, axis.axis)?;
        projected.fps = src.fps;
        Ok(projected)
    }

    /// Linear latent interpolation between two equally long sequences:
    /// motion blended by `t_m`, structure by `t_s`, view kept from `a`.
    pub fn interpolate(
        &self,
        a: &Sequence2D,
        b: &Sequence2D,
        t_m: f64,
        t_s: f64,
    ) -> Result<Sequence2D> {
        if a.frames() != b.frames() {
            return Err(Error::Sequence(format!(
                "interpolation needs equal lengths, got {} and {}",
                a.frames(),
                b.frames()
            )));
        }
        self.cfg.check_frames(a.frames())?;
        let tape = Tape::new();
        let net = self.bind_generator(&tape, false);
        let a_in = tape.constant(a.to_channels());
        let b_in = tape.constant(b.to_channels());
        let ca = net.encode(a_in)?;
        let cb = net.encode(b_in)?;
        let m = ca.motion.scale(1.0 - t_m).add(cb.motion.scale(t_m));
        let s = ca.structure.scale(1.0 - t_s).add(cb.structure.scale(t_s));
        let out = net.decode(m, s, ca.view)?;
        let recon = Sequence3D::from_channels(a.topology().clone(), &out.value())?;
        let mut projected = rotate_project(&recon, 0.0, [0.0, 1.0, 0.0])?;
        projected.fps = a.fps;
        Ok(projected)
    }
}

fn bind_group<'t>(group: &ParamGroup, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
    group
        .entries
        .iter()
        .map(|e| {
            let t = Tensor::new(e.shape.clone(), e.value.clone()).expect("stored shape consistent");
            if trainable {
                tape.param(t)
            } else {
                tape.constant(t)
            }
        })
        .collect()
}

/// Codes of one sequence on a tape. `motion`, `structure_seq` and `view_seq`
/// are `[C, M]`; the pooled codes are `[C]`.
#[derive(Clone, Copy)]
pub struct Codes<'t> {
    pub motion: Var<'t>,
    pub structure_seq: Var<'t>,
    pub structure: Var<'t>,
    pub view_seq: Var<'t>,
    pub view: Var<'t>,
}

/// Generator bound to a tape.
pub struct GenNet<'t> {
    cfg: ModelCfg,
    vars: Vec<Var<'t>>,
}

impl<'t> GenNet<'t> {
    pub fn cfg(&self) -> &ModelCfg {
        &self.cfg
    }

    pub fn param_vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    // Var layout from conv_plan: 3 encoder stacks of 3 (w, b) pairs, then the
    // 3 decoder blocks and the output layer.
    fn layer(&self, index: usize) -> (Var<'t>, Var<'t>) {
        (self.vars[2 * index], self.vars[2 * index + 1])
    }

    fn encoder_stack(&self, x: Var<'t>, first_layer: usize) -> Result<Var<'t>> {
        let mut h = x;
        for i in 0..3 {
            let (w, b) = self.layer(first_layer + i);
            h = h
                .reflect_pad(self.cfg.enc_pad)
                .conv1d(w, Some(b), 2, 0)?
                .leaky_relu(self.cfg.leaky_slope);
        }
        Ok(h)
    }

    /// Encode `[2N, T]` into motion / structure / view codes.
    pub fn encode(&self, x: Var<'t>) -> Result<Codes<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[0] != self.cfg.input_channels() {
            return Err(Error::Sequence(format!(
                "encoder expects [{}, T], got {:?}",
                self.cfg.input_channels(),
                shape
            )));
        }
        self.cfg.check_frames(shape[1])?;
        let motion = self.encoder_stack(x, 0)?;
        let structure_seq = self.encoder_stack(x, 3)?;
        let view_seq = self.encoder_stack(x, 6)?;
        Ok(Codes {
            motion,
            structure_seq,
            structure: structure_seq.maxpool_time(),
            view_seq,
            view: view_seq.maxpool_time(),
        })
    }

    /// Decode `(motion [C_m, M], structure [C_s], view [C_v])` to `[3N, T]`.
    pub fn decode(&self, motion: Var<'t>, structure: Var<'t>, view: Var<'t>) -> Result<Var<'t>> {
        let mshape = motion.shape();
        if mshape.len() != 2 || mshape[0] != self.cfg.motion_code() {
            return Err(Error::Sequence(format!(
                "decoder expects motion [{}, M], got {:?}",
                self.cfg.motion_code(),
                mshape
            )));
        }
        if structure.shape() != vec![self.cfg.structure_code()] {
            return Err(Error::Sequence(format!(
                "decoder expects structure [{}], got {:?}",
                self.cfg.structure_code(),
                structure.shape()
            )));
        }
        if view.shape() != vec![self.cfg.view_code()] {
            return Err(Error::Sequence(format!(
                "decoder expects view [{}], got {:?}",
                self.cfg.view_code(),
                view.shape()
            )));
        }
        let m_len = mshape[1];
        let s_tiled = structure.repeat_cols(m_len);
        let v_tiled = view.repeat_cols(m_len);
        let mut h = Var::concat_rows(&[motion, s_tiled, v_tiled]);
        let dec_pad = (self.cfg.dec_kernel - 1) / 2;
        for i in 0..3 {
            let (w, b) = self.layer(9 + i);
            h = h
                .upsample2()
                .reflect_pad(dec_pad)
                .conv1d(w, Some(b), 1, 0)?
                .leaky_relu(self.cfg.leaky_slope);
        }
        let (w, b) = self.layer(12);
        let out_pad = (self.cfg.out_kernel - 1) / 2;
        Ok(h.reflect_pad(out_pad).conv1d(w, Some(b), 1, 0)?)
    }
}

/// Discriminator bound to a tape.
pub struct DiscNet<'t> {
    cfg: ModelCfg,
    vars: Vec<Var<'t>>,
}

impl<'t> DiscNet<'t> {
    pub fn param_vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    /// Raw scores `[1, M]` for an input `[2N, T]`.
    pub fn scores(&self, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[0] != self.cfg.input_channels() {
            return Err(Error::Sequence(format!(
                "discriminator expects [{}, T], got {:?}",
                self.cfg.input_channels(),
                shape
            )));
        }
        self.cfg.check_frames(shape[1])?;
        let mut h = x;
        for i in 0..3 {
            let (w, b) = (self.vars[2 * i], self.vars[2 * i + 1]);
            h = h
                .reflect_pad(self.cfg.enc_pad)
                .conv1d(w, Some(b), 2, 0)?
                .leaky_relu(self.cfg.leaky_slope);
        }
        let (w, b) = (self.vars[6], self.vars[7]);
        Ok(h.conv1d(w, Some(b), 1, 0)?)
    }
}

/// Plain-value latent codes of one sequence. The motion code is `[M, C_m]`
/// (time-major); pooled codes are vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodes {
    pub motion: Tensor,
    pub structure_seq: Tensor,
    pub structure: Tensor,
    pub view_seq: Tensor,
    pub view: Tensor,
}

impl LatentCodes {
    fn from_vars(codes: &Codes<'_>) -> Self {
        LatentCodes {
            motion: transpose(&codes.motion.value()),
            structure_seq: transpose(&codes.structure_seq.value()),
            structure: codes.structure.value(),
            view_seq: transpose(&codes.view_seq.value()),
            view: codes.view.value(),
        }
    }

    /// Time steps in the motion code.
    pub fn code_len(&self) -> usize {
        self.motion.shape()[0]
    }

    /// Motion code back in `[C_m, M]` layout for the decoder.
    pub fn motion_channels_first(&self) -> Tensor {
        transpose(&self.motion)
    }

    /// Mean over time of the motion code: a single `[C_m]` vector.
    pub fn motion_pooled(&self) -> Vec<f64> {
        let (m, c) = (self.motion.shape()[0], self.motion.shape()[1]);
        let mut out = vec![0.0; c];
        for t in 0..m {
            for i in 0..c {
                out[i] += self.motion.data()[t * c + i];
            }
        }
        for v in &mut out {
            *v /= m as f64;
        }
        out
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = t.rows_cols();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out).expect("transpose shape")
}
