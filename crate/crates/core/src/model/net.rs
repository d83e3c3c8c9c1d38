//! The dose-prediction network.
//!
//! ```text
//! input ─ conv3 ─ relu ─┬─ pool(1) ─ conv3 ─ relu ─ feat_0 ─ up(1) ─┐
//!                       ├─ pool(2) ─ conv3 ─ relu ─ feat_1 ─ up(2) ─┼─ Σ g_s · ─ conv1 ─ dose
//!                       └─ ...                                       ┘
//! gate logits: w_s · mean(feat_s) + b_s, gates g = softmax(logits)
//! ```
//!
//! All arithmetic runs in 64-bit; parameters arrive as 32-bit
//! [`ParamVector`]s and are widened once per call.

use std::ops::Range;

use crate::datamodel::{Case, LayerSpec, Manifest, ParamVector, RoiLabel, VoxelGrid};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

use super::config::{ModelConfig, DEFAULT_IN_CHANNELS};
use super::loss::masked_mae_with_grad;
use super::tensor::{
    avg_pool, block_sum, conv3_backward, conv3_forward, relu_backward_inplace, relu_inplace, upsample_nearest, Volume,
};

const INIT_STREAM: u64 = 0x696e_6974;

#[derive(Clone, Debug)]
struct Layout {
    stem_w: Range<usize>,
    stem_b: Range<usize>,
    scale_w: Vec<Range<usize>>,
    scale_b: Vec<Range<usize>>,
    gate_w: Range<usize>,
    gate_b: Range<usize>,
    head_w: Range<usize>,
    head_b: Range<usize>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    stem_pre: Volume,
    pooled: Vec<Volume>,
    feat_pre: Vec<Volume>,
    feat: Vec<Volume>,
    gap: Vec<f64>,
    gates: Vec<f64>,
    fused: Volume,
    output: Vec<f64>,
}

impl ForwardPass {
    /// Raw (unclamped) predicted dose, x-fastest.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Softmax scale-attention weights.
    pub fn gates(&self) -> &[f64] {
        &self.gates
    }
}

#[derive(Clone, Debug)]
pub struct DoseNet {
    cfg: ModelConfig,
    manifest: Manifest,
    layout: Layout,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl DoseNet {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (c, f, s) = (cfg.in_channels, cfg.base_width, cfg.n_scales);
        let mut specs = vec![LayerSpec::new("stem.weight", &[f, c, 3, 3, 3]), LayerSpec::new("stem.bias", &[f])];
        for i in 0..s {
            specs.push(LayerSpec::new(format!("scale{i}.weight"), &[f, f, 3, 3, 3]));
            specs.push(LayerSpec::new(format!("scale{i}.bias"), &[f]));
        }
        specs.push(LayerSpec::new("gate.weight", &[s]));
        specs.push(LayerSpec::new("gate.bias", &[s]));
        specs.push(LayerSpec::new("head.weight", &[1, f]));
        specs.push(LayerSpec::new("head.bias", &[1]));
        let manifest = Manifest::new(specs)?;
        let r = |name: &str| manifest.range(name).expect("layer present");
        let layout = Layout {
            stem_w: r("stem.weight"),
            stem_b: r("stem.bias"),
            scale_w: (0..s).map(|i| r(&format!("scale{i}.weight"))).collect(),
            scale_b: (0..s).map(|i| r(&format!("scale{i}.bias"))).collect(),
            gate_w: r("gate.weight"),
            gate_b: r("gate.bias"),
            head_w: r("head.weight"),
            head_b: r("head.bias"),
        };
        Ok(DoseNet { cfg, manifest, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Glorot-uniform weights, zero biases, deterministic in `cfg.seed`.
    pub fn init_params(&self) -> ParamVector {
        let mut rng = SeededRng::derived(self.cfg.seed, &[INIT_STREAM]);
        let mut data = Vec::with_capacity(self.manifest.numel());
        for layer in self.manifest.layers() {
            let n = layer.numel();
            if layer.name.ends_with(".bias") {
                data.extend(std::iter::repeat_n(0.0f32, n));
                continue;
            }
            let (fan_in, fan_out) = match layer.shape.as_slice() {
                [out, inp, k @ ..] => {
                    let taps: usize = k.iter().product();
                    (inp * taps, out * taps)
                }
                // the per-scale gate weights are scalars
                _ => (1, 1),
            };
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            data.extend((0..n).map(|_| rng.uniform(-a, a) as f32));
        }
        ParamVector::new(self.manifest.clone(), data).expect("sized by manifest")
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.manifest() != &self.manifest {
            return Err(Error::Structural("parameter manifest does not match model configuration".into()));
        }
        Ok(())
    }

    fn check_input(&self, input: &Volume) -> Result<()> {
        if input.channels() != self.cfg.in_channels {
            return Err(Error::Config(format!(
                "model expects {} input channels, got {}",
                self.cfg.in_channels,
                input.channels()
            )));
        }
        let f = 1usize << (self.cfg.n_scales - 1);
        let d = input.dims();
        if d.as_array().iter().any(|n| n % f != 0) {
            return Err(Error::Config(format!(
                "grid {d} is not divisible by {f} as {} scales require",
                self.cfg.n_scales
            )));
        }
        Ok(())
    }

    /// Stacks CT and the ten ROI masks (organs then targets) into the input.
    /// Missing ROIs become all-zero channels.
    pub fn case_input(&self, case: &Case) -> Result<Volume> {
        if self.cfg.in_channels != DEFAULT_IN_CHANNELS {
            return Err(Error::Config(format!(
                "case inputs have {DEFAULT_IN_CHANNELS} channels, model expects {}",
                self.cfg.in_channels
            )));
        }
        let dims = case.ct.dims();
        let n = dims.len();
        let mut data = Vec::with_capacity(DEFAULT_IN_CHANNELS * n);
        data.extend(case.ct.values().iter().map(|&v| f64::from(v)));
        for label in RoiLabel::all() {
            match case.roi_masks.get(&label) {
                Some(m) => data.extend(m.values().iter().map(|&v| f64::from(v))),
                None => data.extend(std::iter::repeat_n(0.0, n)),
            }
        }
        Ok(Volume::from_vec(DEFAULT_IN_CHANNELS, dims, data))
    }

    /// Full forward pass on 64-bit parameters, keeping intermediates.
    pub fn forward_pass(&self, params: &[f64], input: &Volume) -> Result<ForwardPass> {
        if params.len() != self.manifest.numel() {
            return Err(Error::Structural(format!(
                "expected {} parameters, got {}",
                self.manifest.numel(),
                params.len()
            )));
        }
        self.check_input(input)?;
        let l = &self.layout;
        let dims = input.dims();
        let stem_pre = conv3_forward(input, &params[l.stem_w.clone()], &params[l.stem_b.clone()]);
        let mut stem = stem_pre.clone();
        relu_inplace(&mut stem);

        let s_count = self.cfg.n_scales;
        let mut pooled = Vec::with_capacity(s_count);
        let mut feat_pre = Vec::with_capacity(s_count);
        let mut feat = Vec::with_capacity(s_count);
        let mut gap = Vec::with_capacity(s_count);
        for s in 0..s_count {
            let p = avg_pool(&stem, 1 << s);
            let pre = conv3_forward(&p, &params[l.scale_w[s].clone()], &params[l.scale_b[s].clone()]);
            let mut f = pre.clone();
            relu_inplace(&mut f);
            gap.push(f.mean());
            pooled.push(p);
            feat_pre.push(pre);
            feat.push(f);
        }
        let gw = &params[l.gate_w.clone()];
        let gb = &params[l.gate_b.clone()];
        let logits: Vec<f64> = (0..s_count).map(|s| gw[s] * gap[s] + gb[s]).collect();
        let gates = softmax(&logits);

        let mut fused = Volume::zeros(self.cfg.base_width, dims);
        for s in 0..s_count {
            let up = upsample_nearest(&feat[s], 1 << s, dims);
            for (a, &b) in fused.data_mut().iter_mut().zip(up.data()) {
                *a += gates[s] * b;
            }
        }

        let hw = &params[l.head_w.clone()];
        let hb = params[l.head_b.start];
        let mut output = vec![hb; dims.len()];
        for (c, &w) in hw.iter().enumerate() {
            for (o, &x) in output.iter_mut().zip(fused.channel(c)) {
                *o += w * x;
            }
        }
        Ok(ForwardPass { stem_pre, pooled, feat_pre, feat, gap, gates, fused, output })
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward_pass(&self, params: &[f64], input: &Volume, pass: &ForwardPass, d_out: &[f64], grad: &mut [f64]) {
        let l = &self.layout;
        let dims = input.dims();
        let f_width = self.cfg.base_width;
        let s_count = self.cfg.n_scales;

        let hw = &params[l.head_w.clone()];
        grad[l.head_b.start] += d_out.iter().sum::<f64>();
        let mut d_fused = Volume::zeros(f_width, dims);
        for c in 0..f_width {
            let fc = pass.fused.channel(c);
            grad[l.head_w.start + c] += fc.iter().zip(d_out).map(|(a, b)| a * b).sum::<f64>();
            for (d, &g) in d_fused.channel_mut(c).iter_mut().zip(d_out) {
                *d = hw[c] * g;
            }
        }

        // d(loss)/d(gate_s) and the direct path into each feature map
        let mut d_gate = vec![0.0; s_count];
        let mut d_feat: Vec<Volume> = Vec::with_capacity(s_count);
        for s in 0..s_count {
            let summed = block_sum(&d_fused, 1 << s);
            d_gate[s] = summed.data().iter().zip(pass.feat[s].data()).map(|(a, b)| a * b).sum();
            let mut df = summed;
            df.data_mut().iter_mut().for_each(|x| *x *= pass.gates[s]);
            d_feat.push(df);
        }
        let dot: f64 = pass.gates.iter().zip(&d_gate).map(|(g, d)| g * d).sum();
        let gw = &params[l.gate_w.clone()];

        let mut d_stem = Volume::zeros(f_width, dims);
        for s in 0..s_count {
            let d_logit = pass.gates[s] * (d_gate[s] - dot);
            grad[l.gate_w.start + s] += d_logit * pass.gap[s];
            grad[l.gate_b.start + s] += d_logit;
            let d_gap = d_logit * gw[s];
            let df = &mut d_feat[s];
            let per_elem = d_gap / df.data().len() as f64;
            df.data_mut().iter_mut().for_each(|x| *x += per_elem);
            relu_backward_inplace(df, &pass.feat_pre[s]);

            let (w_range, b_range) = (l.scale_w[s].clone(), l.scale_b[s].clone());
            let (head, tail) = grad.split_at_mut(b_range.start);
            let d_pooled = conv3_backward(
                &pass.pooled[s],
                &params[w_range.clone()],
                df,
                &mut head[w_range],
                &mut tail[..b_range.len()],
                true,
            )
            .expect("input gradient requested");
            let factor = 1usize << s;
            let mut spread = upsample_nearest(&d_pooled, factor, dims);
            if factor > 1 {
                let inv = 1.0 / (factor * factor * factor) as f64;
                spread.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            for (a, &b) in d_stem.data_mut().iter_mut().zip(spread.data()) {
                *a += b;
            }
        }
        relu_backward_inplace(&mut d_stem, &pass.stem_pre);
        let (w_range, b_range) = (l.stem_w.clone(), l.stem_b.clone());
        let (head, tail) = grad.split_at_mut(b_range.start);
        conv3_backward(input, &params[w_range.clone()], &d_stem, &mut head[w_range], &mut tail[..b_range.len()], false);
    }

    /// Batch-mean masked MAE and its gradient, entirely in 64-bit.
    pub fn loss_and_grad(&self, params: &[f64], batch: &[&Case]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("empty training batch".into()));
        }
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for case in batch {
            let input = self.case_input(case)?;
            let pass = self.forward_pass(params, &input).map_err(|e| e.context(format!("case {}", case.id)))?;
            let (loss, d_out) =
                masked_mae_with_grad(&pass.output, case.dose.values(), case.possible_dose_mask.values())
                    .map_err(|e| e.context(format!("case {}", case.id)))?;
            total += loss;
            self.backward_pass(params, &input, &pass, &d_out, &mut grad);
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((total * inv, grad))
    }

    /// Gradient (rounded to parameter precision) and batch-mean loss.
    pub fn backward(&self, params: &ParamVector, batch: &[&Case]) -> Result<(ParamVector, f64)> {
        self.check_params(params)?;
        let (loss, grad) = self.loss_and_grad(&params.to_f64(), batch)?;
        Ok((ParamVector::from_f64(self.manifest.clone(), &grad)?, loss))
    }

    /// Raw predicted dose; no clamping.
    pub fn forward(&self, params: &ParamVector, input: &Volume) -> Result<VoxelGrid> {
        self.check_params(params)?;
        let pass = self.forward_pass(&params.to_f64(), input)?;
        let spacing = crate::datamodel::Spacing::isotropic(1.0)?;
        VoxelGrid::new(input.dims(), spacing, pass.output.iter().map(|&v| v as f32).collect())
    }

    /// Evaluation-time prediction on a case: clamped to >= 0 Gy, on the case's grid.
    pub fn predict(&self, params: &ParamVector, case: &Case) -> Result<VoxelGrid> {
        self.check_params(params)?;
        let input = self.case_input(case)?;
        let pass = self.forward_pass(&params.to_f64(), &input)?;
        VoxelGrid::new(case.ct.dims(), case.ct.spacing(), pass.output.iter().map(|&v| v.max(0.0) as f32).collect())
    }

    /// Unclamped masked MAE of the model on one case (the validation loss).
    pub fn case_loss(&self, params: &ParamVector, case: &Case) -> Result<f64> {
        self.check_params(params)?;
        let input = self.case_input(case)?;
        let pass = self.forward_pass(&params.to_f64(), &input)?;
        super::loss::masked_mae(pass.output.iter().copied(), case.dose.values(), case.possible_dose_mask.values())
            .map_err(|e| e.context(format!("case {}", case.id)))
    }

    /// Loss on one case plus every argument of a non-differentiable point
    /// in it: ReLU pre-activations and masked residuals. Finite-difference
    /// probes whose arguments change sign straddle a kink.
    pub fn loss_and_kinks(&self, params: &[f64], case: &Case) -> Result<(f64, Vec<f64>)> {
        let input = self.case_input(case)?;
        let pass = self.forward_pass(params, &input)?;
        let loss =
            super::loss::masked_mae(pass.output.iter().copied(), case.dose.values(), case.possible_dose_mask.values())
                .map_err(|e| e.context(format!("case {}", case.id)))?;
        let mut args = pass.stem_pre.data().to_vec();
        for pre in &pass.feat_pre {
            args.extend_from_slice(pre.data());
        }
        for ((&p, &t), &m) in pass.output.iter().zip(case.dose.values()).zip(case.possible_dose_mask.values()) {
            if m != 0.0 {
                args.push(p - f64::from(t));
            }
        }
        Ok((loss, args))
    }
}
