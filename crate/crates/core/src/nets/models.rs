//! The published architectures: generator, spatial critic, temporal critic,
//! and the per-variable label embedding block shared by all three.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm, Bindings, Conv1dLayer, Conv2dLayer, ConvT1dLayer, Dense, InitKind, Param};
use super::{label_leaf, Critic, GeneratorNet, Mode, Net};
use crate::error::{Error, Result};
use crate::grid::ConditionLabel;
use crate::tensor::{Tape, Tensor};

/// Learned embedding output dimension.
pub const EMBED_DIM: usize = 100;
/// Per-variable embedding widths; they concatenate to [`EMBED_DIM`].
pub const EMBED_MONTH_DIM: usize = 56;
pub const EMBED_REGION_DIM: usize = 28;
pub const EMBED_PERIOD_DIM: usize = 16;
/// Conditioning inputs are scaled to O(1) before embedding.
pub const REGION_SCALE: f64 = 1.0 / 32.0;
pub const PERIOD_SCALE: f64 = 1.0 / 16.0;

/// Generator noise dimension.
pub const NOISE_DIM: usize = 100;

const LEAKY_SLOPE: f64 = 0.2;

/// Per-variable transform blocks mapping the raw 15-d label to a 100-d
/// learned embedding: one dense + leaky-ReLU block per variable, outputs
/// concatenated.
#[derive(Debug, Clone)]
pub struct LabelEmbedding {
    month: Dense,
    region: Dense,
    period: Dense,
}

impl LabelEmbedding {
    pub fn new(rng: &mut ChaCha8Rng, prefix: &str) -> Self {
        Self {
            month: Dense::new(rng, &format!("{prefix}.month"), 12, EMBED_MONTH_DIM, InitKind::HeUniform),
            region: Dense::new(rng, &format!("{prefix}.region"), 2, EMBED_REGION_DIM, InitKind::HeUniform),
            period: Dense::new(rng, &format!("{prefix}.period"), 1, EMBED_PERIOD_DIM, InitKind::HeUniform),
        }
    }

    /// Embed a raw (N, 15) label tensor into (N, 100).
    pub fn embed_raw(&self, tape: &mut Tape, b: &Bindings, raw: Tensor) -> Result<Tensor> {
        let month = tape.slice(raw, 1, 0, 12)?;
        let region = tape.slice(raw, 1, 12, 2)?;
        let period = tape.slice(raw, 1, 14, 1)?;
        let region = tape.mul_scalar(region, REGION_SCALE);
        let period = tape.mul_scalar(period, PERIOD_SCALE);

        let m = self.month.forward(tape, b, month)?;
        let m = tape.leaky_relu(m, LEAKY_SLOPE);
        let r = self.region.forward(tape, b, region)?;
        let r = tape.leaky_relu(r, LEAKY_SLOPE);
        let p = self.period.forward(tape, b, period)?;
        let p = tape.leaky_relu(p, LEAKY_SLOPE);

        let mr = tape.concat(m, r, 1)?;
        tape.concat(mr, p, 1)
    }

    /// Embed a label batch, validating each label first.
    pub fn embed(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        labels: &[ConditionLabel],
    ) -> Result<Tensor> {
        if labels.is_empty() {
            return Err(Error::InvalidLabel("empty label batch".into()));
        }
        let raw = label_leaf(tape, labels)?;
        self.embed_raw(tape, b, raw)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.month.params();
        p.extend(self.region.params());
        p.extend(self.period.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.month.params_mut();
        p.extend(self.region.params_mut());
        p.extend(self.period.params_mut());
        p
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Conditional generator: noise + embedded label through a dense block,
/// transposed 1-D convolutions, and a 2-D convolution pyramid down to the
/// (N, 24, 8, 8) output. Output units are standardized temperatures.
#[derive(Debug, Clone)]
pub struct Generator {
    pub embed: LabelEmbedding,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    ct1: ConvT1dLayer,
    bn_ct1: BatchNorm,
    ct2: ConvT1dLayer,
    bn_ct2: BatchNorm,
    ct3: ConvT1dLayer,
    bn_ct3: BatchNorm,
    ct4: ConvT1dLayer,
    bn_ct4: BatchNorm,
    c1d: Conv1dLayer,
    c2d1: Conv2dLayer,
    bn_c2d1: BatchNorm,
    c2d2: Conv2dLayer,
    bn_c2d2: BatchNorm,
    c2d3: Conv2dLayer,
    bn_c2d3: BatchNorm,
    c2d4: Conv2dLayer,
    bn_c2d4: BatchNorm,
    out: Conv2dLayer,
}

impl Generator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        Self {
            embed: LabelEmbedding::new(r, "g.embed"),
            fc1: Dense::new(r, "g.fc1", 2 * NOISE_DIM, 400, InitKind::HeUniform),
            fc2: Dense::new(r, "g.fc2", 400, 800, InitKind::HeUniform),
            fc3: Dense::new(r, "g.fc3", 800, 100, InitKind::HeUniform),
            ct1: ConvT1dLayer::new(r, "g.ct1", 1, 10, 3, InitKind::HeUniform),
            bn_ct1: BatchNorm::new("g.ct1.bn", 10),
            ct2: ConvT1dLayer::new(r, "g.ct2", 10, 10, 3, InitKind::HeUniform),
            bn_ct2: BatchNorm::new("g.ct2.bn", 10),
            ct3: ConvT1dLayer::new(r, "g.ct3", 10, 64, 5, InitKind::HeUniform),
            bn_ct3: BatchNorm::new("g.ct3.bn", 64),
            ct4: ConvT1dLayer::new(r, "g.ct4", 64, 112, 5, InitKind::HeUniform),
            bn_ct4: BatchNorm::new("g.ct4.bn", 112),
            c1d: Conv1dLayer::new(r, "g.c1d", 112, 28, 1, 4, InitKind::XavierUniform),
            c2d1: Conv2dLayer::new(r, "g.c2d1", 1, 2, 5, 0, InitKind::HeUniform),
            bn_c2d1: BatchNorm::new("g.c2d1.bn", 2),
            c2d2: Conv2dLayer::new(r, "g.c2d2", 2, 4, 5, 0, InitKind::XavierUniform),
            bn_c2d2: BatchNorm::new("g.c2d2.bn", 4),
            c2d3: Conv2dLayer::new(r, "g.c2d3", 4, 16, 5, 0, InitKind::XavierUniform),
            bn_c2d3: BatchNorm::new("g.c2d3.bn", 16),
            c2d4: Conv2dLayer::new(r, "g.c2d4", 16, 24, 5, 0, InitKind::XavierUniform),
            bn_c2d4: BatchNorm::new("g.c2d4.bn", 24),
            out: Conv2dLayer::new(r, "g.out", 24, 24, 5, 0, InitKind::XavierUniform),
        }
    }

    /// Parameter count of the core network, excluding the embedding block
    /// (batch-norm affine pairs included, running statistics excluded).
    pub fn param_count_excluding_embedding(&self) -> usize {
        let embed: usize = self.embed.params().iter().map(|p| p.len()).sum();
        self.param_count() - embed
    }

    fn bn_forward(
        bn: &mut BatchNorm,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        mode: Mode,
    ) -> Result<Tensor> {
        match mode {
            Mode::Train => bn.forward_train(tape, b, x),
            Mode::Eval => bn.forward_eval(tape, b, x),
        }
    }

    fn forward_impl(
        &mut self,
        tape: &mut Tape,
        z: Tensor,
        labels: &[ConditionLabel],
        mode: Mode,
        mut trace: Option<&mut Vec<Vec<usize>>>,
    ) -> Result<(Tensor, Bindings)> {
        let n = labels.len();
        if tape.shape(z) != [n, NOISE_DIM] {
            return Err(Error::ShapeMismatch {
                op: "generator",
                lhs: tape.shape(z).to_vec(),
                rhs: vec![n, NOISE_DIM],
            });
        }
        let b = Bindings::bind(tape, &self.params())?;
        let mut record = |tape: &Tape, t: Tensor| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(tape.shape(t).to_vec());
            }
        };

        let emb = self.embed.embed(tape, &b, labels)?;
        let mut x = tape.concat(z, emb, 1)?;
        record(tape, x);

        for fc in [&self.fc1, &self.fc2, &self.fc3] {
            x = fc.forward(tape, &b, x)?;
            x = tape.relu(x);
            record(tape, x);
        }

        x = tape.unsqueeze(x, 1)?;
        record(tape, x);

        let ct_stack: [(&ConvT1dLayer, &mut BatchNorm); 4] = [
            (&self.ct1, &mut self.bn_ct1),
            (&self.ct2, &mut self.bn_ct2),
            (&self.ct3, &mut self.bn_ct3),
            (&self.ct4, &mut self.bn_ct4),
        ];
        for (ct, bn) in ct_stack {
            x = ct.forward(tape, &b, x)?;
            x = Self::bn_forward(bn, tape, &b, x, mode)?;
            x = tape.relu(x);
            record(tape, x);
        }

        x = self.c1d.forward(tape, &b, x)?;
        record(tape, x);
        x = tape.unsqueeze(x, 1)?;
        record(tape, x);

        x = self.c2d1.forward(tape, &b, x)?;
        x = Self::bn_forward(&mut self.bn_c2d1, tape, &b, x, mode)?;
        x = tape.relu(x);
        record(tape, x);

        let tanh_stack: [(&Conv2dLayer, &mut BatchNorm); 3] = [
            (&self.c2d2, &mut self.bn_c2d2),
            (&self.c2d3, &mut self.bn_c2d3),
            (&self.c2d4, &mut self.bn_c2d4),
        ];
        for (conv, bn) in tanh_stack {
            x = conv.forward(tape, &b, x)?;
            x = Self::bn_forward(bn, tape, &b, x, mode)?;
            x = tape.tanh(x);
            record(tape, x);
        }

        x = self.out.forward(tape, &b, x)?;
        record(tape, x);
        Ok((x, b))
    }

    /// Forward pass that also records the output shape of every stage,
    /// starting from the noise/embedding concatenation.
    pub fn forward_traced(
        &mut self,
        tape: &mut Tape,
        z: Tensor,
        labels: &[ConditionLabel],
        mode: Mode,
    ) -> Result<(Tensor, Bindings, Vec<Vec<usize>>)> {
        let mut trace = Vec::new();
        let (out, b) = self.forward_impl(tape, z, labels, mode, Some(&mut trace))?;
        Ok((out, b, trace))
    }
}

impl Net for Generator {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.embed.params();
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p.extend(self.fc3.params());
        for (ct, bn) in [
            (&self.ct1, &self.bn_ct1),
            (&self.ct2, &self.bn_ct2),
            (&self.ct3, &self.bn_ct3),
            (&self.ct4, &self.bn_ct4),
        ] {
            p.extend(ct.params());
            p.extend(bn.params());
        }
        p.extend(self.c1d.params());
        for (conv, bn) in [
            (&self.c2d1, &self.bn_c2d1),
            (&self.c2d2, &self.bn_c2d2),
            (&self.c2d3, &self.bn_c2d3),
            (&self.c2d4, &self.bn_c2d4),
        ] {
            p.extend(conv.params());
            p.extend(bn.params());
        }
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.embed.params_mut();
        p.extend(self.fc1.params_mut());
        p.extend(self.fc2.params_mut());
        p.extend(self.fc3.params_mut());
        p.extend(self.ct1.params_mut());
        p.extend(self.bn_ct1.params_mut());
        p.extend(self.ct2.params_mut());
        p.extend(self.bn_ct2.params_mut());
        p.extend(self.ct3.params_mut());
        p.extend(self.bn_ct3.params_mut());
        p.extend(self.ct4.params_mut());
        p.extend(self.bn_ct4.params_mut());
        p.extend(self.c1d.params_mut());
        p.extend(self.c2d1.params_mut());
        p.extend(self.bn_c2d1.params_mut());
        p.extend(self.c2d2.params_mut());
        p.extend(self.bn_c2d2.params_mut());
        p.extend(self.c2d3.params_mut());
        p.extend(self.bn_c2d3.params_mut());
        p.extend(self.c2d4.params_mut());
        p.extend(self.bn_c2d4.params_mut());
        p.extend(self.out.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&Param> {
        [
            &self.bn_ct1, &self.bn_ct2, &self.bn_ct3, &self.bn_ct4, &self.bn_c2d1, &self.bn_c2d2,
            &self.bn_c2d3, &self.bn_c2d4,
        ]
        .into_iter()
        .flat_map(|bn| bn.buffers())
        .collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        out.extend(self.bn_ct1.buffers_mut());
        out.extend(self.bn_ct2.buffers_mut());
        out.extend(self.bn_ct3.buffers_mut());
        out.extend(self.bn_ct4.buffers_mut());
        out.extend(self.bn_c2d1.buffers_mut());
        out.extend(self.bn_c2d2.buffers_mut());
        out.extend(self.bn_c2d3.buffers_mut());
        out.extend(self.bn_c2d4.buffers_mut());
        out
    }
}

impl GeneratorNet for Generator {
    fn noise_dim(&self) -> usize {
        NOISE_DIM
    }

    fn arch_name(&self) -> &'static str {
        "paper"
    }

    fn forward(
        &mut self,
        tape: &mut Tape,
        z: Tensor,
        labels: &[ConditionLabel],
        mode: Mode,
    ) -> Result<(Tensor, Bindings)> {
        self.forward_impl(tape, z, labels, mode, None)
    }
}

// ---------------------------------------------------------------------------
// Spatial discriminator
// ---------------------------------------------------------------------------

/// Spatial critic: a 2-D convolution stack over the 24-channel hourly frames,
/// flattened and joined with the label embedding into a dense scoring head.
/// No final squashing; scores are unbounded reals.
#[derive(Debug, Clone)]
pub struct SpatialDiscriminator {
    pub embed: LabelEmbedding,
    convs: Vec<Conv2dLayer>,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    out: Dense,
}

impl SpatialDiscriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let convs = vec![
            Conv2dLayer::new(r, "ds.conv1", 24, 24, 3, 1, InitKind::HeUniform),
            Conv2dLayer::new(r, "ds.conv2", 24, 24, 3, 1, InitKind::HeUniform),
            Conv2dLayer::new(r, "ds.conv3", 24, 24, 3, 0, InitKind::HeUniform),
            Conv2dLayer::new(r, "ds.conv4", 24, 24, 3, 0, InitKind::HeUniform),
            Conv2dLayer::new(r, "ds.conv5", 24, 24, 3, 0, InitKind::HeUniform),
            Conv2dLayer::new(r, "ds.conv6", 24, 24, 2, 0, InitKind::HeUniform),
        ];
        Self {
            embed: LabelEmbedding::new(r, "ds.embed"),
            convs,
            fc1: Dense::new(r, "ds.fc1", 24, 100, InitKind::HeUniform),
            fc2: Dense::new(r, "ds.fc2", 200, 150, InitKind::HeUniform),
            fc3: Dense::new(r, "ds.fc3", 150, 50, InitKind::HeUniform),
            out: Dense::new(r, "ds.out", 50, 1, InitKind::XavierUniform),
        }
    }

    fn score_impl(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        labels: &[ConditionLabel],
        mut trace: Option<&mut Vec<Vec<usize>>>,
    ) -> Result<Tensor> {
        let mut record = |tape: &Tape, t: Tensor| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(tape.shape(t).to_vec());
            }
        };
        record(tape, x);
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(tape, b, h)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE);
            record(tape, h);
        }
        h = tape.flatten(h)?;
        record(tape, h);
        h = self.fc1.forward(tape, b, h)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE);
        record(tape, h);
        let emb = self.embed.embed(tape, b, labels)?;
        h = tape.concat(h, emb, 1)?;
        record(tape, h);
        h = self.fc2.forward(tape, b, h)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE);
        record(tape, h);
        h = self.fc3.forward(tape, b, h)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE);
        record(tape, h);
        h = self.out.forward(tape, b, h)?;
        record(tape, h);
        Ok(h)
    }

    /// Score with a per-stage shape trace, input included.
    pub fn score_traced(
        &self,
        tape: &mut Tape,
        x: Tensor,
        labels: &[ConditionLabel],
    ) -> Result<(Tensor, Vec<Vec<usize>>)> {
        let b = self.bind(tape)?;
        let mut trace = Vec::new();
        let s = self.score_impl(tape, &b, x, labels, Some(&mut trace))?;
        Ok((s, trace))
    }
}

impl Net for SpatialDiscriminator {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.embed.params();
        for c in &self.convs {
            p.extend(c.params());
        }
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p.extend(self.fc3.params());
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.embed.params_mut();
        for c in &mut self.convs {
            p.extend(c.params_mut());
        }
        p.extend(self.fc1.params_mut());
        p.extend(self.fc2.params_mut());
        p.extend(self.fc3.params_mut());
        p.extend(self.out.params_mut());
        p
    }
}

impl Critic for SpatialDiscriminator {
    fn arch_name(&self) -> &'static str {
        "paper_spatial"
    }

    fn score(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        labels: &[ConditionLabel],
    ) -> Result<Tensor> {
        self.score_impl(tape, b, x, labels, None)
    }
}

// ---------------------------------------------------------------------------
// Temporal discriminator
// ---------------------------------------------------------------------------

/// Temporal critic: a fixed hourly-difference stage (24 -> 23 frames) ahead
/// of a small 2-D convolution stack and dense scoring head, so the critic
/// only ever sees temperature transitions.
#[derive(Debug, Clone)]
pub struct TemporalDiscriminator {
    pub embed: LabelEmbedding,
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    out: Dense,
}

impl TemporalDiscriminator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        Self {
            embed: LabelEmbedding::new(r, "dt.embed"),
            conv1: Conv2dLayer::new(r, "dt.conv1", 23, 16, 3, 0, InitKind::HeUniform),
            conv2: Conv2dLayer::new(r, "dt.conv2", 16, 4, 3, 0, InitKind::HeUniform),
            fc1: Dense::new(r, "dt.fc1", 164, 164, InitKind::HeUniform),
            fc2: Dense::new(r, "dt.fc2", 164, 200, InitKind::HeUniform),
            fc3: Dense::new(r, "dt.fc3", 200, 100, InitKind::HeUniform),
            out: Dense::new(r, "dt.out", 100, 1, InitKind::XavierUniform),
        }
    }

    fn score_impl(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        labels: &[ConditionLabel],
        mut trace: Option<&mut Vec<Vec<usize>>>,
    ) -> Result<Tensor> {
        let mut record = |tape: &Tape, t: Tensor| {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(tape.shape(t).to_vec());
            }
        };
        record(tape, x);
        let mut h = tape.temporal_diff(x)?;
        record(tape, h);
        h = self.conv1.forward(tape, b, h)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE);
        record(tape, h);
        h = self.conv2.forward(tape, b, h)?;
        h = tape.leaky_relu(h, LEAKY_SLOPE);
        record(tape, h);
        h = tape.flatten(h)?;
        record(tape, h);
        let emb = self.embed.embed(tape, b, labels)?;
        h = tape.concat(h, emb, 1)?;
        record(tape, h);
        for fc in [&self.fc1, &self.fc2, &self.fc3] {
            h = fc.forward(tape, b, h)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE);
            record(tape, h);
        }
        h = self.out.forward(tape, b, h)?;
        record(tape, h);
        Ok(h)
    }

    /// Score with a per-stage shape trace, input included.
    pub fn score_traced(
        &self,
        tape: &mut Tape,
        x: Tensor,
        labels: &[ConditionLabel],
    ) -> Result<(Tensor, Vec<Vec<usize>>)> {
        let b = self.bind(tape)?;
        let mut trace = Vec::new();
        let s = self.score_impl(tape, &b, x, labels, Some(&mut trace))?;
        Ok((s, trace))
    }
}

impl Net for TemporalDiscriminator {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.embed.params();
        p.extend(self.conv1.params());
        p.extend(self.conv2.params());
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p.extend(self.fc3.params());
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.embed.params_mut();
        p.extend(self.conv1.params_mut());
        p.extend(self.conv2.params_mut());
        p.extend(self.fc1.params_mut());
        p.extend(self.fc2.params_mut());
        p.extend(self.fc3.params_mut());
        p.extend(self.out.params_mut());
        p
    }
}

impl Critic for TemporalDiscriminator {
    fn arch_name(&self) -> &'static str {
        "paper_temporal"
    }

    fn score(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Tensor,
        labels: &[ConditionLabel],
    ) -> Result<Tensor> {
        self.score_impl(tape, b, x, labels, None)
    }
}
