//! Bilateral-branch network.
//!
//! A shared trunk feeds two structurally identical branch blocks. The
//! conventional branch sees uniformly sampled batches, the re-balancing
//! branch sees reversed-sampler batches. Their feature vectors are scaled by
//! `α` and `1 − α`, projected by the branch classifiers `W_c`, `W_r`
//! (`D × C`, no bias) and summed:
//!
//! ```text
//! z = α·W_cᵀ f_c + (1 − α)·W_rᵀ f_r
//! L = α·CE(softmax z, y_c) + (1 − α)·CE(softmax z, y_r)
//! ```
//!
//! At inference both branches see the same input with `α = 0.5`.

mod checkpoint;
mod schedule;
mod train;

pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use schedule::{alpha_at, AdaptorSchedule};
pub use train::{evaluate_bbn, train_bbn, train_bbn_observed, BbnTrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::metrics::derive_seed;
use crate::nn::{softmax, softmax_xent, Activations, Layer, Network, Parameter};
use crate::tensor::Tensor;

const STREAM_BBN_INIT: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct BbnModel {
    pub trunk: Network,
    pub branch_c: Network,
    pub branch_r: Network,
    /// `D × C`.
    pub w_c: Parameter,
    /// `D × C`.
    pub w_r: Parameter,
    arch: Architecture,
    input_dim: usize,
    num_classes: usize,
}

/// Which side of the model a gradient flows through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Conventional,
    Rebalancing,
}

/// Cached activations of one bilateral forward pass.
#[derive(Debug, Clone)]
pub struct BilateralForward {
    pub trunk_c: Activations,
    pub trunk_r: Activations,
    pub branch_c: Activations,
    pub branch_r: Activations,
}

impl BilateralForward {
    pub fn f_c(&self) -> &Tensor {
        self.branch_c.output()
    }

    pub fn f_r(&self) -> &Tensor {
        self.branch_r.output()
    }
}

impl BbnModel {
    /// Fresh model; the two branches and classifiers are independent draws
    /// from one seeded stream.
    pub fn new(arch: &Architecture, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if arch.trunk.is_empty() {
            return Err(Error::Config("bilateral model needs a non-empty trunk".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_BBN_INIT));
        let mut trunk_dims = vec![input_dim];
        trunk_dims.extend(&arch.trunk);
        let mut branch_dims = vec![arch.trunk_out(input_dim)];
        branch_dims.extend(&arch.branch);
        let trunk = Network::mlp(&trunk_dims, true, &mut rng)?;
        let branch_c = Network::mlp(&branch_dims, true, &mut rng)?;
        let branch_r = Network::mlp(&branch_dims, true, &mut rng)?;
        let d = arch.feature_dim();
        let bound = 1.0 / (d as f64).sqrt();
        let w_c = Parameter::uniform(&[d, num_classes], bound, &mut rng);
        let w_r = Parameter::uniform(&[d, num_classes], bound, &mut rng);
        Ok(Self {
            trunk,
            branch_c,
            branch_r,
            w_c,
            w_r,
            arch: arch.clone(),
            input_dim,
            num_classes,
        })
    }

    /// Assembles a model from parts, checking every width.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        arch: &Architecture,
        input_dim: usize,
        num_classes: usize,
        trunk: Network,
        branch_c: Network,
        branch_r: Network,
        w_c: Tensor,
        w_r: Tensor,
    ) -> Result<Self> {
        let d = arch.feature_dim();
        let trunk_out = arch.trunk_out(input_dim);
        if trunk.in_dim() != Some(input_dim) || trunk.out_dim() != Some(trunk_out) {
            return Err(Error::dim("BbnModel trunk", format!("expected {input_dim}->{trunk_out}")));
        }
        for (name, b) in [("branch_c", &branch_c), ("branch_r", &branch_r)] {
            if b.in_dim() != Some(trunk_out) || b.out_dim() != Some(d) {
                return Err(Error::dim(format!("BbnModel {name}"), format!("expected {trunk_out}->{d}")));
            }
        }
        let layer_shapes = |n: &Network| -> Vec<Option<(usize, usize)>> {
            n.layers()
                .iter()
                .map(|l| match l {
                    Layer::Affine(a) => Some((a.in_dim(), a.out_dim())),
                    Layer::Relu => None,
                })
                .collect()
        };
        if layer_shapes(&branch_c) != layer_shapes(&branch_r) {
            return Err(Error::dim("BbnModel", "branches differ in layer shapes"));
        }
        for (name, w) in [("W_c", &w_c), ("W_r", &w_r)] {
            if w.shape() != [d, num_classes] {
                return Err(Error::dim(format!("BbnModel {name}"), format!("{:?}, expected [{d}, {num_classes}]", w.shape())));
            }
        }
        Ok(Self {
            trunk,
            branch_c,
            branch_r,
            w_c: Parameter::new(w_c),
            w_r: Parameter::new(w_r),
            arch: arch.clone(),
            input_dim,
            num_classes,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim()
    }

    /// All parameters in declaration order: trunk, branch_c, branch_r, W_c, W_r.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = self.trunk.params();
        v.extend(self.branch_c.params());
        v.extend(self.branch_r.params());
        v.push(&self.w_c);
        v.push(&self.w_r);
        v
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.branch_c.zero_grad();
        self.branch_r.zero_grad();
        self.w_c.zero_grad();
        self.w_r.zero_grad();
    }

    /// Parameters that receive gradient through the given branches, in
    /// declaration order: the trunk whenever any branch is active, plus each
    /// active branch's block and classifier.
    pub fn active_params_mut(&mut self, conventional: bool, rebalancing: bool) -> Vec<&mut Parameter> {
        let mut v = Vec::new();
        if conventional || rebalancing {
            v.extend(self.trunk.params_mut());
        }
        if conventional {
            v.extend(self.branch_c.params_mut());
        }
        if rebalancing {
            v.extend(self.branch_r.params_mut());
        }
        if conventional {
            v.push(&mut self.w_c);
        }
        if rebalancing {
            v.push(&mut self.w_r);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.active_params_mut(true, true)
    }

    /// `f_c = branch_c(trunk(x_c))`, `f_r = branch_r(trunk(x_r))`.
    pub fn forward_bilateral(&self, x_c: &Tensor, x_r: &Tensor) -> Result<BilateralForward> {
        if x_c.shape() != x_r.shape() {
            return Err(Error::dim(
                "forward_bilateral",
                format!("x_c {:?} vs x_r {:?}", x_c.shape(), x_r.shape()),
            ));
        }
        let trunk_c = self.trunk.forward(x_c)?;
        let trunk_r = self.trunk.forward(x_r)?;
        let branch_c = self.branch_c.forward(trunk_c.output())?;
        let branch_r = self.branch_r.forward(trunk_r.output())?;
        Ok(BilateralForward {
            trunk_c,
            trunk_r,
            branch_c,
            branch_r,
        })
    }

    /// Feature vector of one branch for a batch.
    pub fn branch_features(&self, branch: Branch, x: &Tensor) -> Result<Tensor> {
        let h = self.trunk.predict(x)?;
        match branch {
            Branch::Conventional => self.branch_c.predict(&h),
            Branch::Rebalancing => self.branch_r.predict(&h),
        }
    }

    /// Trunk followed by one branch block, as a standalone network.
    pub fn branch_extractor(&self, branch: Branch) -> Network {
        let block = match branch {
            Branch::Conventional => &self.branch_c,
            Branch::Rebalancing => &self.branch_r,
        };
        let layers = self.trunk.layers().iter().chain(block.layers()).cloned().collect();
        Network::new(layers).expect("trunk and branch widths chain")
    }

    /// Backpropagates `grad_z` through one side of the model: the branch
    /// classifier, the branch block, then the trunk (accumulating).
    pub fn backward_branch(&mut self, branch: Branch, fwd: &BilateralForward, grad_z: &Tensor, alpha: f64) -> Result<()> {
        let (scale, f, w, block, block_acts, trunk_acts) = match branch {
            Branch::Conventional => (alpha, fwd.f_c(), &mut self.w_c, &mut self.branch_c, &fwd.branch_c, &fwd.trunk_c),
            Branch::Rebalancing => (1.0 - alpha, fwd.f_r(), &mut self.w_r, &mut self.branch_r, &fwd.branch_r, &fwd.trunk_r),
        };
        // z = (scale·f) W  ⇒  ∂W = (scale·f)ᵀ g,  ∂f = scale · g Wᵀ
        let scaled = f.scale(scale);
        w.grad.add_scaled(&scaled.matmul_tn(grad_z)?, 1.0)?;
        let grad_f = grad_z.matmul_nt(&w.value)?.scale(scale);
        let grad_h = block.backward(block_acts, &grad_f)?;
        self.trunk.backward(trunk_acts, &grad_h)?;
        Ok(())
    }

    /// One bilateral forward/backward pass. Gradients are accumulated into
    /// the parameters; returns the loss.
    ///
    /// A branch whose weight is exactly zero (`α = 1` or `α = 0`) is not
    /// evaluated at all, so its parameters receive no gradient.
    pub fn accumulate_gradients(&mut self, x_c: &Tensor, y_c: &[usize], x_r: &Tensor, y_r: &[usize], alpha: f64) -> Result<f64> {
        let fwd = self.forward_bilateral(x_c, x_r)?;
        let z = aggregate_logits(fwd.f_c(), fwd.f_r(), &self.w_c.value, &self.w_r.value, alpha)?;
        let (loss, grad_z) = bbn_loss(&z, y_c, y_r, alpha)?;
        if alpha != 0.0 {
            self.backward_branch(Branch::Conventional, &fwd, &grad_z, alpha)?;
        }
        if alpha != 1.0 {
            self.backward_branch(Branch::Rebalancing, &fwd, &grad_z, alpha)?;
        }
        Ok(loss)
    }

    /// Logits at the inference setting `α = 0.5`, both branches fed `x`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.trunk.predict(x)?;
        let f_c = self.branch_c.predict(&h)?;
        let f_r = self.branch_r.predict(&h)?;
        aggregate_logits(&f_c, &f_r, &self.w_c.value, &self.w_r.value, 0.5)
    }

    /// Predicted labels (ties to the lowest class) and class probabilities.
    pub fn infer(&self, x: &Tensor) -> Result<(Vec<usize>, Tensor)> {
        let z = self.logits(x)?;
        Ok((z.argmax_rows(), softmax(&z)))
    }

    /// `0.5·W_c + 0.5·W_r`.
    pub fn combined_classifier(&self) -> Tensor {
        let mut w = self.w_c.value.scale(0.5);
        w.add_scaled(&self.w_r.value, 0.5).expect("classifiers share a shape");
        w
    }
}

/// `z = (α f_c) W_c + ((1 − α) f_r) W_r`, the scaling applied to the
/// features before the classifiers.
pub fn aggregate_logits(f_c: &Tensor, f_r: &Tensor, w_c: &Tensor, w_r: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if f_c.shape() != f_r.shape() || w_c.shape() != w_r.shape() {
        return Err(Error::dim(
            "aggregate_logits",
            format!("f {:?}/{:?}, W {:?}/{:?}", f_c.shape(), f_r.shape(), w_c.shape(), w_r.shape()),
        ));
    }
    let mut z = f_c.scale(alpha).matmul(w_c)?;
    z.add_scaled(&f_r.scale(1.0 - alpha).matmul(w_r)?, 1.0)?;
    Ok(z)
}

/// `α·CE(z, y_c) + (1 − α)·CE(z, y_r)` and its gradient with respect to `z`.
pub fn bbn_loss(z: &Tensor, y_c: &[usize], y_r: &[usize], alpha: f64) -> Result<(f64, Tensor)> {
    let (lc, mut grad) = softmax_xent(z, y_c)?;
    let (lr, gr) = softmax_xent(z, y_r)?;
    for (g, r) in grad.values_mut().iter_mut().zip(gr.values()) {
        *g = alpha * *g + (1.0 - alpha) * r;
    }
    Ok((alpha * lc + (1.0 - alpha) * lr, grad))
}
