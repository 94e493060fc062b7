//! CTR predictor classes.
//!
//! Three families are provided:
//! - [`FinitePredictorClass`]: an explicit list of predictors,
//! - [`DiscretizedConstantClass`]: context-free predictors `(x, i) -> theta_i` with
//!   `theta` on the grid `{0, 1/G, ..., 1}^N`, enumerated lazily,
//! - [`SigmoidLinearPredictor`]: `sigmoid(theta_common . x_common + theta_ad . x_ad)`
//!   with parameters boxed to `[-B, B]`, the parametric class used by the
//!   gradient-based learners.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};
use crate::rng::SimRng;

/// Observable context of one round: a shared column plus one column per ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMatrix {
    dim: usize,
    num_ads: usize,
    common: Vec<f64>,
    // Row-major: ad i occupies [i * dim, (i + 1) * dim).
    per_ad: Vec<f64>,
}

impl ContextMatrix {
    pub fn new(common: Vec<f64>, per_ad: Vec<Vec<f64>>) -> Result<Self> {
        let dim = common.len();
        let num_ads = per_ad.len();
        let mut flat = Vec::with_capacity(dim * num_ads);
        for col in per_ad {
            if col.len() != dim {
                return Err(AuctionError::Dimension {
                    expected: dim,
                    got: col.len(),
                });
            }
            flat.extend(col);
        }
        Ok(Self {
            dim,
            num_ads,
            common,
            per_ad: flat,
        })
    }

    pub fn from_flat(common: Vec<f64>, per_ad: Vec<f64>, num_ads: usize) -> Result<Self> {
        let dim = common.len();
        if per_ad.len() != dim * num_ads {
            return Err(AuctionError::Dimension {
                expected: dim * num_ads,
                got: per_ad.len(),
            });
        }
        Ok(Self {
            dim,
            num_ads,
            common,
            per_ad,
        })
    }

    /// Context with no features, for non-contextual environments.
    pub fn featureless(num_ads: usize) -> Self {
        Self {
            dim: 0,
            num_ads,
            common: Vec::new(),
            per_ad: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_ads(&self) -> usize {
        self.num_ads
    }

    pub fn common(&self) -> &[f64] {
        &self.common
    }

    pub fn ad(&self, ad: usize) -> &[f64] {
        &self.per_ad[ad * self.dim..(ad + 1) * self.dim]
    }

    fn check_ad(&self, ad: usize) -> Result<()> {
        if ad >= self.num_ads {
            return Err(AuctionError::IndexOutOfRange {
                index: ad,
                len: self.num_ads,
            });
        }
        Ok(())
    }
}

/// A single CTR predictor `(x, i) -> [0, 1]`.
pub trait CtrPredictor {
    fn predict(&self, context: &ContextMatrix, ad: usize) -> Result<f64>;

    fn predict_all(&self, context: &ContextMatrix) -> Result<Vec<f64>> {
        (0..context.num_ads())
            .map(|i| self.predict(context, i))
            .collect()
    }
}

/// Largest `f64` below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function evaluated without overflowing for large `|u|`.
///
/// Saturated inputs return the floats nearest to 0 and 1, so outputs stay
/// strictly inside `(0, 1)`.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        (1.0 / (1.0 + (-u).exp())).min(BELOW_ONE)
    } else {
        let e = u.exp();
        (e / (1.0 + e)).max(f64::MIN_POSITIVE)
    }
}

/// `f(x, i) = sigmoid(theta_common . x_common + theta_ad . x_i)`.
///
/// Parameters are stored flat as `[theta_common; theta_ad]`, so gradients have
/// length `2 * dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidLinearPredictor {
    params: Vec<f64>,
    bound: f64,
}

impl SigmoidLinearPredictor {
    pub fn new(theta_common: Vec<f64>, theta_ad: Vec<f64>, bound: f64) -> Result<Self> {
        if theta_common.len() != theta_ad.len() {
            return Err(AuctionError::Dimension {
                expected: theta_common.len(),
                got: theta_ad.len(),
            });
        }
        Self::from_params(theta_common.into_iter().chain(theta_ad).collect(), bound)
    }

    pub fn from_params(params: Vec<f64>, bound: f64) -> Result<Self> {
        if params.len() % 2 != 0 {
            return Err(AuctionError::InvalidParameter(format!(
                "parameter vector length {} is not even",
                params.len()
            )));
        }
        if !(bound > 0.0) {
            return Err(AuctionError::InvalidParameter(format!(
                "parameter bound must be positive, got {bound}"
            )));
        }
        Ok(Self { params, bound })
    }

    pub fn zeros(dim: usize, bound: f64) -> Self {
        Self {
            params: vec![0.0; 2 * dim],
            bound,
        }
    }

    /// Parameters drawn uniformly from the box `[-bound, bound]^(2 dim)`.
    pub fn uniform(dim: usize, bound: f64, rng: &mut SimRng) -> Self {
        let params = (0..2 * dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self { params, bound }
    }

    pub fn dim(&self) -> usize {
        self.params.len() / 2
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn theta_common(&self) -> &[f64] {
        &self.params[..self.dim()]
    }

    pub fn theta_ad(&self) -> &[f64] {
        &self.params[self.dim()..]
    }

    /// Mutable access for in-place updates; call [`clamp`](Self::clamp) afterwards.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_context(&self, context: &ContextMatrix, ad: usize) -> Result<()> {
        if context.dim() != self.dim() {
            return Err(AuctionError::Dimension {
                expected: self.dim(),
                got: context.dim(),
            });
        }
        context.check_ad(ad)
    }

    pub fn logit(&self, context: &ContextMatrix, ad: usize) -> Result<f64> {
        self.check_context(context, ad)?;
        let d = self.dim();
        let common: f64 = self.params[..d]
            .iter()
            .zip(context.common())
            .map(|(w, x)| w * x)
            .sum();
        let own: f64 = self.params[d..]
            .iter()
            .zip(context.ad(ad))
            .map(|(w, x)| w * x)
            .sum();
        Ok(common + own)
    }

    /// `df/dtheta = f (1 - f) [x_common; x_ad]`.
    pub fn predict_gradient(&self, context: &ContextMatrix, ad: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradient(context, ad, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `out += scale * df(x, ad)/dtheta`.
    pub fn accumulate_gradient(
        &self,
        context: &ContextMatrix,
        ad: usize,
        scale: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let f = self.predict(context, ad)?;
        let w = scale * f * (1.0 - f);
        let d = self.dim();
        for (o, x) in out[..d].iter_mut().zip(context.common()) {
            *o += w * x;
        }
        for (o, x) in out[d..].iter_mut().zip(context.ad(ad)) {
            *o += w * x;
        }
        Ok(())
    }

    /// Project every coordinate onto `[-bound, bound]`.
    pub fn clamp(&mut self) {
        let b = self.bound;
        for p in &mut self.params {
            *p = p.clamp(-b, b);
        }
    }

    pub fn clamped(mut self) -> Self {
        self.clamp();
        self
    }
}

impl CtrPredictor for SigmoidLinearPredictor {
    fn predict(&self, context: &ContextMatrix, ad: usize) -> Result<f64> {
        Ok(sigmoid(self.logit(context, ad)?))
    }
}

/// Context-free predictor `(x, i) -> theta_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub theta: Vec<f64>,
}

impl CtrPredictor for ConstantPredictor {
    fn predict(&self, _context: &ContextMatrix, ad: usize) -> Result<f64> {
        self.theta
            .get(ad)
            .copied()
            .ok_or(AuctionError::IndexOutOfRange {
                index: ad,
                len: self.theta.len(),
            })
    }
}

/// A finite, deterministically ordered set of predictors addressed by index.
pub trait FiniteClass: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write predictor `index`'s CTRs for every ad of `context` into `out`.
    fn predict_into(&self, index: usize, context: &ContextMatrix, out: &mut Vec<f64>)
        -> Result<()>;
}

/// Explicit list of predictors.
#[derive(Debug, Clone)]
pub struct FinitePredictorClass<P> {
    predictors: Vec<P>,
}

impl<P: CtrPredictor> FinitePredictorClass<P> {
    pub fn new(predictors: Vec<P>) -> Result<Self> {
        if predictors.is_empty() {
            return Err(AuctionError::InvalidParameter(
                "predictor class must contain at least one predictor".into(),
            ));
        }
        Ok(Self { predictors })
    }

    pub fn predictors(&self) -> &[P] {
        &self.predictors
    }

    pub fn enumerate(&self) -> impl Iterator<Item = &P> {
        self.predictors.iter()
    }
}

impl<P: CtrPredictor + Send + Sync> FiniteClass for FinitePredictorClass<P> {
    fn len(&self) -> usize {
        self.predictors.len()
    }

    fn predict_into(
        &self,
        index: usize,
        context: &ContextMatrix,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let p = self
            .predictors
            .get(index)
            .ok_or(AuctionError::IndexOutOfRange {
                index,
                len: self.predictors.len(),
            })?;
        out.clear();
        for i in 0..context.num_ads() {
            out.push(p.predict(context, i)?);
        }
        Ok(())
    }
}

/// Default cap on the number of enumerated grid points.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 1_000_000;

/// Constant predictors with `theta` on the grid `{0, 1/G, ..., 1}^N`.
///
/// Predictor `k` is the base-`(G+1)` expansion of `k` with ad 0 as the most
/// significant digit, which gives lexicographic order over `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedConstantClass {
    grid: u32,
    num_ads: usize,
    len: usize,
}

impl DiscretizedConstantClass {
    pub fn new(grid: u32, num_ads: usize, budget: u128) -> Result<Self> {
        if grid == 0 {
            return Err(AuctionError::InvalidParameter(
                "grid resolution must be positive".into(),
            ));
        }
        if num_ads == 0 {
            return Err(AuctionError::InvalidParameter(
                "class needs at least one ad".into(),
            ));
        }
        let required = (grid as u128 + 1)
            .checked_pow(num_ads as u32)
            .unwrap_or(u128::MAX);
        if required > budget || required > usize::MAX as u128 {
            return Err(AuctionError::Capacity { required, budget });
        }
        Ok(Self {
            grid,
            num_ads,
            len: required as usize,
        })
    }

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn num_ads(&self) -> usize {
        self.num_ads
    }

    fn digit(&self, index: usize, ad: usize) -> u32 {
        let base = self.grid as usize + 1;
        let shift = self.num_ads - 1 - ad;
        ((index / base.pow(shift as u32)) % base) as u32
    }

    /// `theta_ad` of predictor `index`.
    pub fn value(&self, index: usize, ad: usize) -> f64 {
        self.digit(index, ad) as f64 / self.grid as f64
    }

    pub fn theta(&self, index: usize) -> Vec<f64> {
        (0..self.num_ads).map(|i| self.value(index, i)).collect()
    }

    pub fn predictor(&self, index: usize) -> ConstantPredictor {
        ConstantPredictor {
            theta: self.theta(index),
        }
    }

    pub fn enumerate(&self) -> impl Iterator<Item = ConstantPredictor> + '_ {
        (0..self.len).map(|k| self.predictor(k))
    }

    /// Index of the grid point `floor_G(rho)`, which is within `1/G` of `rho` coordinate-wise.
    pub fn floor_index(&self, rho: &[f64]) -> Result<usize> {
        if rho.len() != self.num_ads {
            return Err(AuctionError::Dimension {
                expected: self.num_ads,
                got: rho.len(),
            });
        }
        let base = self.grid as usize + 1;
        Ok(rho.iter().fold(0usize, |acc, &r| {
            let d =
                ((r.clamp(0.0, 1.0) * self.grid as f64).floor() as usize).min(self.grid as usize);
            acc * base + d
        }))
    }
}

impl FiniteClass for DiscretizedConstantClass {
    fn len(&self) -> usize {
        self.len
    }

    fn predict_into(
        &self,
        index: usize,
        context: &ContextMatrix,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if context.num_ads() > self.num_ads {
            return Err(AuctionError::IndexOutOfRange {
                index: context.num_ads() - 1,
                len: self.num_ads,
            });
        }
        if index >= self.len {
            return Err(AuctionError::IndexOutOfRange {
                index,
                len: self.len,
            });
        }
        out.clear();
        out.extend((0..context.num_ads()).map(|i| self.value(index, i)));
        Ok(())
    }
}

/// Serialized form of a predictor: a small header plus flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRecord {
    pub class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_ads: Option<usize>,
    pub params: Vec<f64>,
}

impl From<&SigmoidLinearPredictor> for PredictorRecord {
    fn from(p: &SigmoidLinearPredictor) -> Self {
        Self {
            class: "sigmoid_linear".into(),
            dim: Some(p.dim()),
            bound: Some(p.bound()),
            grid: None,
            num_ads: None,
            params: p.params().to_vec(),
        }
    }
}

impl From<&ConstantPredictor> for PredictorRecord {
    fn from(p: &ConstantPredictor) -> Self {
        Self {
            class: "constant".into(),
            dim: None,
            bound: None,
            grid: None,
            num_ads: Some(p.theta.len()),
            params: p.theta.clone(),
        }
    }
}

impl PredictorRecord {
    pub fn to_sigmoid_linear(&self) -> Result<SigmoidLinearPredictor> {
        if self.class != "sigmoid_linear" {
            return Err(AuctionError::Trace(format!(
                "expected a sigmoid_linear predictor, found {}",
                self.class
            )));
        }
        let p =
            SigmoidLinearPredictor::from_params(self.params.clone(), self.bound.unwrap_or(1.0))?;
        if let Some(d) = self.dim {
            if d != p.dim() {
                return Err(AuctionError::Dimension {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        Ok(p)
    }

    pub fn to_constant(&self) -> Result<ConstantPredictor> {
        if self.class != "constant" {
            return Err(AuctionError::Trace(format!(
                "expected a constant predictor, found {}",
                self.class
            )));
        }
        Ok(ConstantPredictor {
            theta: self.params.clone(),
        })
    }
}
