//! Network construction. One generic builder serves parameter creation,
//! train-mode, and eval-mode forward passes over either element type, so the
//! parameter layout can never drift between initialization and use.

use pulsebench_core::rng::Rng;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::graph::{window_out_len, Graph, NodeId};
use crate::model::{Backbone, ModelSpec};
use crate::params::ParamSet;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const S4_WIDTH: usize = 512;
pub const S4_STATES: usize = 16;
pub const S4_DT: f64 = 0.1;
pub const S4_L_MAX: usize = 2048;
pub const DEMO_FEATURES: usize = 3;
pub const DEMO_EMBED_WIDTH: usize = 16;
pub const FUSION_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How a tensor is filled the first time it exists.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Zero-mean normal with sd = sqrt(2 / fan_in).
    HeNormal { fan_in: usize },
    /// Zero-mean normal with the given sd.
    ScaledNormal { sd: f64 },
    /// rho[.., n] = ln(n + 1), so the continuous rates start at
    /// -1, -2, ..., -states: one timescale per state.
    SsmRho { states: usize },
}

/// Source of named tensors for the builder: either creates them (seeded
/// initialization) or fetches existing values.
pub trait ParamStore<E: Element> {
    fn fetch(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Vec<E>>;
    fn fetch_state(&mut self, name: &str, shape: &[usize], fill: f64) -> Result<Vec<E>>;
}

/// Materializes missing tensors into f32 master sets using the model rng.
pub struct CreateStore<'a> {
    pub params: &'a mut ParamSet<f32>,
    pub state: &'a mut ParamSet<f32>,
    pub rng: &'a mut Rng,
}

fn draw(init: Init, n: usize, rng: &mut Rng) -> Vec<f32> {
    match init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::HeNormal { fan_in } => {
            let sd = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| (rng.normal() * sd) as f32).collect()
        }
        Init::ScaledNormal { sd } => (0..n).map(|_| (rng.normal() * sd) as f32).collect(),
        Init::SsmRho { states } => (0..n).map(|i| ((i % states + 1) as f64).ln() as f32).collect(),
    }
}

impl ParamStore<f32> for CreateStore<'_> {
    fn fetch(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Vec<f32>> {
        if !self.params.contains(name) {
            let values = draw(init, shape.iter().product(), self.rng);
            self.params.push(name, shape.to_vec(), values)?;
        }
        fetch_from(self.params, name, shape)
    }

    fn fetch_state(&mut self, name: &str, shape: &[usize], fill: f64) -> Result<Vec<f32>> {
        if !self.state.contains(name) {
            let values = vec![fill as f32; shape.iter().product()];
            self.state.push(name, shape.to_vec(), values)?;
        }
        fetch_from(self.state, name, shape)
    }
}

/// Read-only view over existing master tensors.
pub struct FetchStore<'a, E> {
    pub params: &'a ParamSet<E>,
    pub state: &'a ParamSet<E>,
}

impl<E: Element> ParamStore<E> for FetchStore<'_, E> {
    fn fetch(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Vec<E>> {
        fetch_from(self.params, name, shape)
    }

    fn fetch_state(&mut self, name: &str, shape: &[usize], _fill: f64) -> Result<Vec<E>> {
        fetch_from(self.state, name, shape)
    }
}

fn fetch_from<E: Element>(set: &ParamSet<E>, name: &str, shape: &[usize]) -> Result<Vec<E>> {
    let t = set
        .get(name)
        .ok_or_else(|| Error::spec(format!("model has no tensor named {name}")))?;
    if t.shape != shape {
        return Err(Error::shape(format!(
            "tensor {name} is {:?}, builder expects {shape:?}",
            t.shape
        )));
    }
    Ok(t.values.clone())
}

/// Per-layer batch statistics a train-mode pass produced; the model owner
/// folds them into running statistics.
pub struct BnBatchStats<E> {
    pub name: String,
    pub mean: Vec<E>,
    pub var: Vec<E>,
    /// Elements per channel that entered the statistics.
    pub count: usize,
}

pub struct ForwardPass<E> {
    /// Predictions, shape (batch, 1).
    pub output: NodeId,
    /// Every parameter tensor in builder order with its graph node.
    pub param_nodes: Vec<(String, NodeId)>,
    pub bn_updates: Vec<BnBatchStats<E>>,
}

struct Ctx<'a, E: Element> {
    g: &'a mut Graph<E>,
    store: &'a mut dyn ParamStore<E>,
    mode: Mode,
    want_grads: bool,
    param_nodes: Vec<(String, NodeId)>,
    bn_updates: Vec<BnBatchStats<E>>,
}

impl<E: Element> Ctx<'_, E> {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<NodeId> {
        let values = self.store.fetch(name, shape, init)?;
        let id = if self.want_grads {
            self.g.param(shape, values)?
        } else {
            self.g.input(shape, values)?
        };
        self.param_nodes.push((name.to_string(), id));
        Ok(id)
    }

    fn conv(
        &mut self,
        name: &str,
        x: NodeId,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Result<NodeId> {
        let w = self.tensor(
            &format!("{name}.weight"),
            &[cout, cin, k],
            Init::HeNormal { fan_in: cin * k },
        )?;
        let b = if bias {
            Some(self.tensor(&format!("{name}.bias"), &[cout], Init::Zeros)?)
        } else {
            None
        };
        self.g.conv1d(x, w, b, stride, padding)
    }

    fn linear(&mut self, name: &str, x: NodeId, fin: usize, fout: usize) -> Result<NodeId> {
        let w = self.tensor(
            &format!("{name}.weight"),
            &[fout, fin],
            Init::HeNormal { fan_in: fin },
        )?;
        let b = self.tensor(&format!("{name}.bias"), &[fout], Init::Zeros)?;
        self.g.linear(x, w, Some(b))
    }

    fn batchnorm(&mut self, name: &str, x: NodeId, channels: usize) -> Result<NodeId> {
        let gamma = self.tensor(&format!("{name}.gamma"), &[channels], Init::Ones)?;
        let beta = self.tensor(&format!("{name}.beta"), &[channels], Init::Zeros)?;
        match self.mode {
            Mode::Train => {
                let shape = self.g.shape(x).to_vec();
                let count = shape[0] * shape.get(2).copied().unwrap_or(1);
                let (y, mean, var) = self.g.batchnorm_train(x, gamma, beta, BN_EPS)?;
                self.bn_updates.push(BnBatchStats {
                    name: name.to_string(),
                    mean,
                    var,
                    count,
                });
                Ok(y)
            }
            Mode::Eval => {
                let rm = self
                    .store
                    .fetch_state(&format!("{name}.running_mean"), &[channels], 0.0)?;
                let rv = self
                    .store
                    .fetch_state(&format!("{name}.running_var"), &[channels], 1.0)?;
                self.g.batchnorm_eval(x, gamma, beta, &rm, &rv, BN_EPS)
            }
        }
    }

    fn conv_bn(
        &mut self,
        name: &str,
        x: NodeId,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let c = self.conv(name, x, cin, cout, k, stride, padding, false)?;
        self.batchnorm(&format!("{name}.bn"), c, cout)
    }

    fn conv_bn_relu(
        &mut self,
        name: &str,
        x: NodeId,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let y = self.conv_bn(name, x, cin, cout, k, stride, padding)?;
        Ok(self.g.relu(y))
    }
}

fn shrink(what: &str, len: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    window_out_len(len, k, stride, padding)
        .ok_or_else(|| Error::length(format!("{what}: window of {k} cannot cover length {len}")))
}

// ---- backbones ----

fn lenet<E: Element>(ctx: &mut Ctx<E>, x: NodeId, l: usize, batch: usize) -> Result<(NodeId, usize)> {
    let mut len = shrink("lenet conv1", l, 5, 1, 0)?;
    let c1 = ctx.conv("lenet.conv1", x, 1, 6, 5, 1, 0, true)?;
    let r1 = ctx.g.relu(c1);
    len = shrink("lenet pool1", len, 2, 2, 0)?;
    let p1 = ctx.g.max_pool1d(r1, 2, 2, 0)?;
    len = shrink("lenet conv2", len, 5, 1, 0)?;
    let c2 = ctx.conv("lenet.conv2", p1, 6, 16, 5, 1, 0, true)?;
    let r2 = ctx.g.relu(c2);
    len = shrink("lenet pool2", len, 2, 2, 0)?;
    let p2 = ctx.g.max_pool1d(r2, 2, 2, 0)?;
    let flat = ctx.g.reshape(p2, &[batch, 16 * len])?;
    let f1 = ctx.linear("lenet.fc1", flat, 16 * len, 120)?;
    let f1 = ctx.g.relu(f1);
    let f2 = ctx.linear("lenet.fc2", f1, 120, 84)?;
    Ok((ctx.g.relu(f2), 84))
}

fn res_block<E: Element>(
    ctx: &mut Ctx<E>,
    name: &str,
    x: NodeId,
    cin: usize,
    width: usize,
    stride: usize,
    bottleneck: bool,
) -> Result<NodeId> {
    let (main, cout) = if bottleneck {
        let a = ctx.conv_bn_relu(&format!("{name}.conv1"), x, cin, width, 1, 1, 0)?;
        let b = ctx.conv_bn_relu(&format!("{name}.conv2"), a, width, width, 3, stride, 1)?;
        let c = ctx.conv_bn(&format!("{name}.conv3"), b, width, width * 4, 1, 1, 0)?;
        (c, width * 4)
    } else {
        let a = ctx.conv_bn_relu(&format!("{name}.conv1"), x, cin, width, 3, stride, 1)?;
        let b = ctx.conv_bn(&format!("{name}.conv2"), a, width, width, 3, 1, 1)?;
        (b, width)
    };
    let skip = if stride != 1 || cin != cout {
        ctx.conv_bn(&format!("{name}.proj"), x, cin, cout, 1, stride, 0)?
    } else {
        x
    };
    let sum = ctx.g.add(main, skip)?;
    Ok(ctx.g.relu(sum))
}

fn xresnet<E: Element>(ctx: &mut Ctx<E>, x: NodeId, l: usize, deep: bool) -> Result<(NodeId, usize)> {
    let mut len = shrink("stem conv1", l, 5, 2, 2)?;
    let mut cur = ctx.conv_bn_relu("stem.conv1", x, 1, 64, 5, 2, 2)?;
    cur = ctx.conv_bn_relu("stem.conv2", cur, 64, 64, 3, 1, 1)?;
    cur = ctx.conv_bn_relu("stem.conv3", cur, 64, 64, 3, 1, 1)?;
    len = shrink("stem pool", len, 2, 2, 0)?;
    cur = ctx.g.max_pool1d(cur, 2, 2, 0)?;
    let widths = [64usize, 128, 256, 512];
    let blocks: [usize; 4] = if deep { [3, 4, 6, 3] } else { [2, 2, 2, 2] };
    let expansion = if deep { 4 } else { 1 };
    let mut cin = 64;
    for (si, (&w, &nb)) in widths.iter().zip(&blocks).enumerate() {
        for bi in 0..nb {
            let stride = if si > 0 && bi == 0 { 2 } else { 1 };
            let name = format!("stage{}.block{}", si + 1, bi + 1);
            if stride == 2 {
                len = shrink(&name, len, 3, 2, 1)?;
            }
            cur = res_block(ctx, &name, cur, cin, w, stride, deep)?;
            cin = w * expansion;
        }
    }
    let _ = len;
    Ok((ctx.g.global_avg_pool(cur)?, cin))
}

fn inception<E: Element>(ctx: &mut Ctx<E>, x: NodeId) -> Result<(NodeId, usize)> {
    let mut cur = x;
    let mut cin = 1;
    let mut res_src = x;
    let mut res_cin = 1;
    for blk in 1..=6 {
        let name = format!("inc{blk}");
        let bt = ctx.conv(&format!("{name}.bottleneck"), cur, cin, 32, 1, 1, 0, false)?;
        let b39 = ctx.conv(&format!("{name}.branch39"), bt, 32, 32, 39, 1, 19, false)?;
        let b19 = ctx.conv(&format!("{name}.branch19"), bt, 32, 32, 19, 1, 9, false)?;
        let b9 = ctx.conv(&format!("{name}.branch9"), bt, 32, 32, 9, 1, 4, false)?;
        let pooled = ctx.g.max_pool1d(cur, 3, 1, 1)?;
        let bp = ctx.conv(&format!("{name}.pool_proj"), pooled, cin, 32, 1, 1, 0, false)?;
        let cat = ctx.g.concat(&[b39, b19, b9, bp])?;
        let bn = ctx.batchnorm(&format!("{name}.bn"), cat, 128)?;
        cur = ctx.g.relu(bn);
        cin = 128;
        // A projected shortcut joins in every three blocks.
        if blk % 3 == 0 {
            let sc = ctx.conv(&format!("{name}.res_proj"), res_src, res_cin, 128, 1, 1, 0, false)?;
            let sb = ctx.batchnorm(&format!("{name}.res_bn"), sc, 128)?;
            let sum = ctx.g.add(cur, sb)?;
            cur = ctx.g.relu(sum);
            res_src = cur;
            res_cin = 128;
        }
    }
    Ok((ctx.g.global_avg_pool(cur)?, 128))
}

fn s4<E: Element>(ctx: &mut Ctx<E>, x: NodeId, l: usize) -> Result<(NodeId, usize)> {
    if l > S4_L_MAX {
        return Err(Error::length(format!(
            "s4 accepts lengths up to {S4_L_MAX}, got {l}"
        )));
    }
    let mut cur = ctx.conv("s4.proj", x, 1, S4_WIDTH, 1, 1, 0, true)?;
    for blk in 1..=4 {
        let name = format!("s4.block{blk}");
        let h = ctx.batchnorm(&format!("{name}.bn"), cur, S4_WIDTH)?;
        let rho = ctx.tensor(
            &format!("{name}.rho"),
            &[S4_WIDTH, S4_STATES],
            Init::SsmRho { states: S4_STATES },
        )?;
        let bw = ctx.tensor(&format!("{name}.input_weight"), &[S4_WIDTH, S4_STATES], Init::Ones)?;
        let cw = ctx.tensor(
            &format!("{name}.output_weight"),
            &[S4_WIDTH, S4_STATES],
            Init::ScaledNormal {
                sd: (1.0 / S4_STATES as f64).sqrt(),
            },
        )?;
        let kern = ctx.g.ssm_kernel(rho, bw, cw, S4_DT, l)?;
        let conv = ctx.g.depthwise_causal_conv(h, kern)?;
        let d = ctx.tensor(&format!("{name}.skip"), &[S4_WIDTH], Init::Ones)?;
        let skip = ctx.g.channel_scale(h, d)?;
        let sum = ctx.g.add(conv, skip)?;
        let act = ctx.g.relu(sum);
        let mix = ctx.conv(&format!("{name}.mix"), act, S4_WIDTH, S4_WIDTH, 1, 1, 0, true)?;
        cur = ctx.g.add(cur, mix)?;
    }
    Ok((ctx.g.global_avg_pool(cur)?, S4_WIDTH))
}

// ---- full network ----

/// Builds the forward graph for `spec` on one batch. `ppg` is row-major
/// (batch, length); `demos` is (batch, 3) standardized demographic features,
/// required exactly when the spec is multimodal.
pub fn forward_network<E: Element>(
    g: &mut Graph<E>,
    spec: &ModelSpec,
    store: &mut dyn ParamStore<E>,
    mode: Mode,
    want_grads: bool,
    ppg: &[E],
    batch: usize,
    demos: Option<&[E]>,
) -> Result<ForwardPass<E>> {
    let l = spec.input_length;
    if batch == 0 {
        return Err(Error::shape("forward over an empty batch"));
    }
    if ppg.len() != batch * l {
        return Err(Error::shape(format!(
            "ppg batch holds {} samples, expected {batch} x {l}",
            ppg.len()
        )));
    }
    let x = g.input(&[batch, 1, l], ppg.to_vec())?;
    let mut ctx = Ctx {
        g,
        store,
        mode,
        want_grads,
        param_nodes: Vec::new(),
        bn_updates: Vec::new(),
    };
    let (feats, width) = match spec.backbone {
        Backbone::LeNet1d => lenet(&mut ctx, x, l, batch)?,
        Backbone::XResNet18 => xresnet(&mut ctx, x, l, false)?,
        Backbone::XResNet50 => xresnet(&mut ctx, x, l, true)?,
        Backbone::Inception1d => inception(&mut ctx, x)?,
        Backbone::S4 => s4(&mut ctx, x, l)?,
    };
    let (fused, fused_width) = if spec.use_demographics {
        let dv = demos.ok_or_else(|| Error::spec("multimodal forward needs demographic features"))?;
        if dv.len() != batch * DEMO_FEATURES {
            return Err(Error::shape(format!(
                "demographics hold {} values, expected {batch} x {DEMO_FEATURES}",
                dv.len()
            )));
        }
        let d = ctx.g.input(&[batch, DEMO_FEATURES], dv.to_vec())?;
        let e1 = ctx.linear("demo.fc1", d, DEMO_FEATURES, DEMO_EMBED_WIDTH)?;
        let e1 = ctx.g.relu(e1);
        let e2 = ctx.linear("demo.fc2", e1, DEMO_EMBED_WIDTH, DEMO_EMBED_WIDTH)?;
        (ctx.g.concat(&[feats, e2])?, width + DEMO_EMBED_WIDTH)
    } else {
        (feats, width)
    };
    let h = ctx.linear("head.fc1", fused, fused_width, FUSION_HIDDEN)?;
    let h = ctx.g.relu(h);
    let out = ctx.linear("head.fc2", h, FUSION_HIDDEN, 1)?;
    Ok(ForwardPass {
        output: out,
        param_nodes: ctx.param_nodes,
        bn_updates: ctx.bn_updates,
    })
}
