//! Batched fully connected network (ReLU hidden layers, linear output).

use crate::error::{Error, Result};
use crate::nn::float::Float;
use crate::nn::layers;
use crate::nn::tensor::ParamSet;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// Layer widths, input first: `[in, hidden.., out]`.
    pub dims: Vec<usize>,
}

/// Activations of one batched forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    rows: usize,
    /// Input to each layer (after dropout / ReLU).
    acts: Vec<Vec<T>>,
    dropout_mask: Option<Vec<T>>,
    pub output: Vec<T>,
}

impl Mlp {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("mlp widths must be positive and at least two, got {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn zero_params<T: Float>(&self) -> ParamSet<T> {
        let mut p = ParamSet::new();
        for i in 0..self.layers() {
            p.push(format!("fc{}.weight", i + 1), &[self.dims[i + 1], self.dims[i]]);
            p.push(format!("fc{}.bias", i + 1), &[self.dims[i + 1]]);
        }
        p
    }

    pub fn init_params<T: Float>(&self, rng: &mut Rng) -> ParamSet<T> {
        let mut p = self.zero_params::<T>();
        let last = self.layers() - 1;
        for i in 0..self.layers() {
            let gain = if i == last { 1.0 } else { 2.0 };
            let std = (gain / self.dims[i] as f64).sqrt();
            p.tensors[2 * i].data.iter_mut().for_each(|v| *v = T::of(rng.normal() * std));
        }
        p
    }

    /// Forward `rows` inputs. `dropout` = (probability, rng) drops input units with inverted scaling.
    pub fn forward_cached<T: Float>(
        &self,
        params: &ParamSet<T>,
        x: &[T],
        rows: usize,
        dropout: Option<(f64, &mut Rng)>,
    ) -> MlpCache<T> {
        assert_eq!(x.len(), rows * self.input_dim(), "mlp input size");
        let mut input = x.to_vec();
        let mut dropout_mask = None;
        if let Some((p, rng)) = dropout {
            if p > 0.0 {
                let keep = T::of(1.0 / (1.0 - p));
                let mask: Vec<T> = (0..input.len())
                    .map(|_| if rng.bernoulli(p) { T::zero() } else { keep })
                    .collect();
                input.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
                dropout_mask = Some(mask);
            }
        }
        let mut acts = vec![input];
        let last = self.layers() - 1;
        for i in 0..self.layers() {
            let mut y = layers::dense_forward(
                &acts[i],
                rows,
                &params.tensors[2 * i].data,
                &params.tensors[2 * i + 1].data,
                self.dims[i + 1],
            );
            if i < last {
                layers::relu_inplace(&mut y);
                acts.push(y);
            } else {
                return MlpCache {
                    rows,
                    acts,
                    dropout_mask,
                    output: y,
                };
            }
        }
        unreachable!()
    }

    pub fn forward<T: Float>(&self, params: &ParamSet<T>, x: &[T], rows: usize) -> Vec<T> {
        self.forward_cached(params, x, rows, None).output
    }

    /// Parameter gradients and, when requested, the gradient with respect to the input.
    pub fn backward<T: Float>(
        &self,
        params: &ParamSet<T>,
        cache: &MlpCache<T>,
        dout: &[T],
        want_dx: bool,
    ) -> (ParamSet<T>, Option<Vec<T>>) {
        let mut grads = params.zeros_like();
        let mut d = dout.to_vec();
        for i in (0..self.layers()).rev() {
            let need = i > 0 || want_dx;
            let (lo, hi) = grads.tensors.split_at_mut(2 * i + 1);
            let dx = layers::dense_backward(
                &cache.acts[i],
                cache.rows,
                &params.tensors[2 * i].data,
                &d,
                self.dims[i + 1],
                &mut lo[2 * i].data,
                &mut hi[0].data,
                need,
            );
            match dx {
                Some(mut dx) => {
                    if i > 0 {
                        layers::relu_backward_inplace(&mut dx, &cache.acts[i]);
                    }
                    d = dx;
                }
                None => return (grads, None),
            }
        }
        if let Some(mask) = &cache.dropout_mask {
            d.iter_mut().zip(mask).for_each(|(v, &m)| *v *= m);
        }
        (grads, Some(d))
    }
}
