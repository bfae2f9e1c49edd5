//! Generator and discriminator objectives.
//!
//! Every loss has a graph form (`*_graph`, differentiable w.r.t. the
//! prediction) and a plain form over tensors evaluated without gradients.

mod features;

pub use features::{ConvStage, FeatureExtractor, SimpleExtractor, Vgg19Extractor, STANDARD_LAYERS};

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::image::InputMode;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Weights of the joint generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_adv: f64,
    pub lambda_cont: f64,
    pub lambda_style: f64,
    pub lambda_l1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_adv: 1.0, lambda_cont: 1.0, lambda_style: 1000.0, lambda_l1: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_adv, self.lambda_cont, self.lambda_style, self.lambda_l1];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParams(format!("loss weights must be finite and nonnegative, got {all:?}")));
        }
        Ok(())
    }

    /// Weights actually applied in `mode`.
    pub fn for_mode(mut self, mode: InputMode) -> Self {
        if !mode.uses_content_loss() {
            self.lambda_cont = 0.0;
        }
        self
    }

    pub fn needs_extractor(&self, mode: InputMode) -> bool {
        let w = self.for_mode(mode);
        w.lambda_cont > 0.0 || w.lambda_style > 0.0
    }
}

/// Unweighted term values plus the weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv: f64,
    /// Absent when the content term is not part of the objective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cont: Option<f64>,
    pub style: f64,
    pub l1: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.adv, self.style, self.l1, self.total, self.cont.unwrap_or(0.0)]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Graph nodes of the joint objective.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub adv: Var,
    pub cont: Option<Var>,
    pub style: Var,
    pub l1: Var,
    pub total: Var,
}

impl LossTerms {
    pub fn breakdown<T: Scalar>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Var| g.value(x).to_scalar().as_f64();
        LossBreakdown {
            adv: v(self.adv),
            cont: self.cont.map(v),
            style: v(self.style),
            l1: v(self.l1),
            total: v(self.total),
        }
    }
}

fn check_shapes<T: Scalar>(g: &Graph<T>, a: Var, b: Var, what: &str) -> Result<()> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(Error::ShapeMismatch(format!("{what}: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

pub fn adversarial_loss_d_graph<T: Scalar>(g: &mut Graph<T>, logits_real: Var, logits_fake: Var) -> Result<Var> {
    check_shapes(g, logits_real, logits_fake, "discriminator logits")?;
    let real = g.bce_with_logits(logits_real, true);
    let fake = g.bce_with_logits(logits_fake, false);
    Ok(g.add(real, fake))
}

/// Non-saturating generator term `-mean(log sigmoid(z))`.
pub fn adversarial_loss_g_graph<T: Scalar>(g: &mut Graph<T>, logits_fake: Var) -> Var {
    g.bce_with_logits(logits_fake, true)
}

pub fn l1_loss_graph<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var) -> Result<Var> {
    check_shapes(g, pred, gt, "l1")?;
    Ok(g.l1_mean(pred, gt))
}

/// Pairs of `(pred, gt)` activations for every declared layer.
fn layer_pairs<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    gt: Var,
    fx: &dyn FeatureExtractor<T>,
) -> Result<Vec<(Var, Var)>> {
    check_shapes(g, pred, gt, "perceptual")?;
    let declared = fx.declared_layers();
    if declared.is_empty() {
        return Err(Error::Config("feature extractor declares no layers".into()));
    }
    let fp = fx.extract(g, pred)?;
    let gt_const = g.detach(gt);
    let fg = fx.extract(g, gt_const)?;
    declared
        .iter()
        .map(|name| {
            let find = |set: &[(String, Var)]| {
                set.iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Config(format!("feature extractor is missing layer {name}")))
            };
            let p = find(&fp)?;
            let t = find(&fg)?;
            let t = g.detach(t);
            Ok((p, t))
        })
        .collect()
}

fn layer_mean<T: Scalar>(g: &mut Graph<T>, terms: Vec<Var>) -> Var {
    let k = terms.len();
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t);
    }
    g.scale(acc, T::one() / T::from_usize(k).unwrap())
}

pub fn content_loss_graph<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var, fx: &dyn FeatureExtractor<T>) -> Result<Var> {
    let pairs = layer_pairs(g, pred, gt, fx)?;
    let terms = pairs.into_iter().map(|(p, t)| g.l1_mean(p, t)).collect();
    Ok(layer_mean(g, terms))
}

pub fn style_loss_graph<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: Var, fx: &dyn FeatureExtractor<T>) -> Result<Var> {
    let pairs = layer_pairs(g, pred, gt, fx)?;
    let terms = pairs
        .into_iter()
        .map(|(p, t)| {
            let gp = g.gram(p);
            let gt = g.gram(t);
            g.l1_mean(gp, gt)
        })
        .collect();
    Ok(layer_mean(g, terms))
}

/// Joint generator objective; the content term is left out of the graph
/// entirely when `mode` excludes it.
pub fn joint_generator_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    pred: Var,
    gt: Var,
    logits_fake: Var,
    weights: &LossWeights,
    fx: &dyn FeatureExtractor<T>,
    mode: InputMode,
) -> Result<LossTerms> {
    weights.validate()?;
    let w = weights.for_mode(mode);
    let adv = adversarial_loss_g_graph(g, logits_fake);
    let cont = if mode.uses_content_loss() { Some(content_loss_graph(g, pred, gt, fx)?) } else { None };
    let style = style_loss_graph(g, pred, gt, fx)?;
    let l1 = l1_loss_graph(g, pred, gt)?;

    let mut total = g.scale(adv, T::from_f64_lossy(w.lambda_adv));
    let mut add = |g: &mut Graph<T>, v: Var, lambda: f64| {
        let s = g.scale(v, T::from_f64_lossy(lambda));
        total = g.add(total, s);
    };
    if let Some(c) = cont {
        add(g, c, w.lambda_cont);
    }
    add(g, style, w.lambda_style);
    add(g, l1, w.lambda_l1);
    Ok(LossTerms { adv, cont, style, l1, total })
}

fn eval<T: Scalar>(f: impl FnOnce(&mut Graph<T>) -> Result<Var>) -> Result<T> {
    let mut g = Graph::no_grad();
    let v = f(&mut g)?;
    Ok(g.value(v).to_scalar())
}

pub fn adversarial_loss_d<T: Scalar>(logits_real: &Tensor<T>, logits_fake: &Tensor<T>) -> Result<T> {
    eval(|g| {
        let r = g.constant(logits_real.clone());
        let f = g.constant(logits_fake.clone());
        adversarial_loss_d_graph(g, r, f)
    })
}

pub fn adversarial_loss_g<T: Scalar>(logits_fake: &Tensor<T>) -> T {
    eval(|g| {
        let f = g.constant(logits_fake.clone());
        Ok(adversarial_loss_g_graph(g, f))
    })
    .expect("infallible")
}

pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<T> {
    eval(|g| {
        let p = g.constant(pred.clone());
        let t = g.constant(gt.clone());
        l1_loss_graph(g, p, t)
    })
}

pub fn content_loss<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, fx: &dyn FeatureExtractor<T>) -> Result<T> {
    eval(|g| {
        let p = g.constant(pred.clone());
        let t = g.constant(gt.clone());
        content_loss_graph(g, p, t, fx)
    })
}

pub fn style_loss<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, fx: &dyn FeatureExtractor<T>) -> Result<T> {
    eval(|g| {
        let p = g.constant(pred.clone());
        let t = g.constant(gt.clone());
        style_loss_graph(g, p, t, fx)
    })
}

/// Gram matrices `[n, 1, c, c]` of `[n, c, h, w]` features.
pub fn gram_matrix<T: Scalar>(features: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, _, h, w] = features.shape();
    if h * w == 0 {
        return Err(Error::InvalidInput("gram matrix of empty feature map".into()));
    }
    let mut g = Graph::no_grad();
    let f = g.constant(features.clone());
    let out = g.gram(f);
    Ok(g.value(out).clone())
}

pub fn joint_generator_loss<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    logits_fake: &Tensor<T>,
    weights: &LossWeights,
    fx: &dyn FeatureExtractor<T>,
    mode: InputMode,
) -> Result<LossBreakdown> {
    let mut g = Graph::no_grad();
    let p = g.constant(pred.clone());
    let t = g.constant(gt.clone());
    let l = g.constant(logits_fake.clone());
    let terms = joint_generator_loss_graph(&mut g, p, t, l, weights, fx, mode)?;
    Ok(terms.breakdown(&g))
}
