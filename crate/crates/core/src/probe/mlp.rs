//! A small multi-layer perceptron over `f64` with hand-written backprop.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LAYERS: usize = 2;

/// Shape of a probe: `n_layers` ReLU hidden layers of `hidden_size` units,
/// then a linear map to the labels. `hidden_size` is ignored when
/// `n_layers == 0`. Dropout acts on hidden activations during training only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub n_layers: usize,
    pub hidden_size: usize,
    pub dropout: f64,
}

impl MlpArchitecture {
    pub fn linear() -> Self {
        Self {
            n_layers: 0,
            hidden_size: 0,
            dropout: 0.0,
        }
    }

    pub fn new(n_layers: usize, hidden_size: usize, dropout: f64) -> Result<Self> {
        let arch = Self {
            n_layers,
            hidden_size,
            dropout,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers > MAX_LAYERS {
            return Err(Error::Config(format!("at most {MAX_LAYERS} hidden layers, got {}", self.n_layers)));
        }
        if self.n_layers > 0 && self.hidden_size == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn widths(&self, input_dim: usize, n_out: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(std::iter::repeat_n(self.hidden_size, self.n_layers));
        w.push(n_out);
        w
    }
}

/// `z = a W + b`, with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: MlpArchitecture,
    input_dim: usize,
    n_out: usize,
    layers: Vec<Dense>,
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|z| z - lse);
    }
}

impl Mlp {
    /// Hidden layers draw weights and biases from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    /// The output layer starts at zero, so the untrained network predicts
    /// the uniform distribution exactly.
    pub fn new<R: Rng + ?Sized>(arch: MlpArchitecture, input_dim: usize, n_out: usize, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        if input_dim == 0 || n_out == 0 {
            return Err(Error::Config("input and output widths must be positive".into()));
        }
        let widths = arch.widths(input_dim, n_out);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let mut layer = Dense::zeros(pair[0], pair[1]);
            if i + 2 < widths.len() {
                let bound = 1.0 / (pair[0] as f64).sqrt();
                layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                layer.b.mapv_inplace(|_| rng.random_range(-bound..bound));
            }
            layers.push(layer);
        }
        Ok(Self {
            arch,
            input_dim,
            n_out,
            layers,
        })
    }

    pub fn architecture(&self) -> MlpArchitecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Squared L2 norm of the weights; biases are not penalised.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(|l| l.w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DomainMismatch(format!(
                "input has dimension {} but the probe expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Deterministic logits (dropout off).
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Natural-log label probabilities, one row per input.
    pub fn log_probs(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(x)?;
        log_softmax(&mut z);
        Ok(z)
    }

    /// Mean cross-entropy in nats over `x`, evaluated in chunks.
    pub fn mean_cross_entropy(&self, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
        const CHUNK: usize = 4096;
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("examples"));
        }
        let mut total = 0.0;
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let lp = self.log_probs(x.slice(s![start..end, ..]))?;
            total -= y[start..end].iter().enumerate().map(|(i, &t)| lp[[i, t]]).sum::<f64>();
        }
        Ok(total / n as f64)
    }

    /// Mean cross-entropy (nats) of a batch and its gradient. With an RNG,
    /// inverted dropout masks hidden activations.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[usize],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(f64, Vec<Dense>)> {
        self.check_input(&x)?;
        let batch = y.len();
        if batch == 0 || x.nrows() != batch {
            return Err(Error::DomainMismatch(format!("{} inputs for {} labels", x.nrows(), batch)));
        }
        let p = self.arch.dropout;
        let last = self.layers.len() - 1;
        // activations[i] feeds layers[i]; masks[i] scales activations[i + 1]
        let mut activations: Vec<Array2<f64>> = vec![x.to_owned()];
        let mut masks: Vec<Option<Array2<f64>>> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.w);
            z += &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
                let mask = match dropout_rng.as_deref_mut() {
                    Some(rng) if p > 0.0 => {
                        let keep = 1.0 / (1.0 - p);
                        let m = Array2::from_shape_simple_fn(z.raw_dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
                        z *= &m;
                        Some(m)
                    }
                    _ => None,
                };
                masks.push(mask);
            }
            activations.push(z);
        }
        let mut delta = activations.pop().expect("output layer");
        log_softmax(&mut delta);
        let mut loss = 0.0;
        for (i, &t) in y.iter().enumerate() {
            if t >= self.n_out {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    size: self.n_out,
                });
            }
            loss -= delta[[i, t]];
        }
        loss /= batch as f64;
        // softmax minus one-hot, averaged over the batch
        delta.mapv_inplace(f64::exp);
        for (i, &t) in y.iter().enumerate() {
            delta[[i, t]] -= 1.0;
        }
        delta /= batch as f64;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let a = &activations[i];
            let gw = a.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push(Dense { w: gw, b: gb });
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].w.t());
                // a = relu(z) * mask, so relu'(z) is nonzero exactly where a > 0
                match &masks[i - 1] {
                    Some(m) => Zip::from(&mut upstream).and(a).and(m).for_each(|g, &av, &mv| {
                        *g = if av > 0.0 { *g * mv } else { 0.0 };
                    }),
                    None => Zip::from(&mut upstream).and(a).for_each(|g, &av| {
                        if av <= 0.0 {
                            *g = 0.0;
                        }
                    }),
                }
                delta = upstream;
            }
        }
        grads.reverse();
        Ok((loss, grads))
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DomainMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }
}

/// Flattens gradients in the order of [`Mlp::to_flat`].
pub fn flatten(grads: &[Dense]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.w.iter().chain(g.b.iter()).copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for layers in 0..=2 {
            let mlp = Mlp::new(MlpArchitecture::new(layers, 16, 0.2).unwrap(), 5, 4, &mut rng).unwrap();
            let x = Array2::from_shape_fn((7, 5), |(i, j)| (i * 5 + j) as f64 - 10.0);
            let lp = mlp.log_probs(x.view()).unwrap();
            assert!(lp.iter().all(|&v| v == -(4f64).ln()));
        }
    }

    #[test]
    fn architecture_validation() {
        assert!(MlpArchitecture::new(3, 32, 0.0).is_err());
        assert!(MlpArchitecture::new(1, 0, 0.0).is_err());
        assert!(MlpArchitecture::new(0, 0, 0.0).is_ok());
        assert!(MlpArchitecture::new(1, 32, 1.0).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mlp = Mlp::new(MlpArchitecture::new(2, 3, 0.0).unwrap(), 4, 2, &mut rng).unwrap();
        assert_eq!(mlp.n_params(), 4 * 3 + 3 + 3 * 3 + 3 + 3 * 2 + 2);
        let flat: Vec<f64> = (0..mlp.n_params()).map(|i| i as f64).collect();
        mlp.set_flat(&flat).unwrap();
        assert_eq!(mlp.to_flat(), flat);
        assert!(mlp.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(MlpArchitecture::linear(), 3, 2, &mut rng).unwrap();
        assert!(mlp.logits(Array2::zeros((1, 4)).view()).is_err());
    }
}
