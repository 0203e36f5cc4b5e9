use ndarray::{s, Array1, Array2, Axis};
use rand::Rng as _;

use crate::rng::Rng;

/// Dense layer `y = x·W + b` with `W` stored as (in, out).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// He-uniform weights; small nonzero biases keep fully inactive rows
    /// off the ReLU kink.
    pub fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut Rng) -> Self {
        let bound = gain * (6.0 / fan_in as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-0.05..0.05));
        Self { weight, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Stack of dense layers with ReLU after each hidden layer, and after the
/// last one when `relu_last` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

/// Activations kept for the backward pass.
#[derive(Debug, Default)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("at least one layer")
    }
}

impl Mlp {
    pub fn init(widths: &[usize], relu_last: bool, rng: &mut Rng) -> Self {
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 1 == n && !relu_last { 0.5 } else { 1.0 };
                Linear::init(w[0], w[1], gain, rng)
            })
            .collect();
        Self { layers, relu_last }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
            relu_last: self.relu_last,
        }
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    fn relu_at(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.relu_last
    }

    pub fn forward(&self, x: Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache::default();
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h);
            if self.relu_at(i) {
                out.mapv_inplace(|v| v.max(0.0));
            }
            cache.inputs.push(h);
            h = out;
            cache.outputs.push(h.clone());
        }
        (h, cache)
    }

    /// Smallest absolute pre-activation over all ReLU units; finite
    /// differences are only valid when this exceeds the step size.
    pub fn relu_margin(&self, cache: &MlpCache) -> f64 {
        let mut margin = f64::INFINITY;
        for (i, layer) in self.layers.iter().enumerate() {
            if self.relu_at(i) {
                let z = layer.forward(&cache.inputs[i]);
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            }
        }
        margin
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input, or `None` when `need_input` is false.
    pub fn backward(
        &self,
        cache: &MlpCache,
        d_out: Array2<f64>,
        grads: &mut Mlp,
        need_input: bool,
    ) -> Option<Array2<f64>> {
        let mut d = d_out;
        for i in (0..self.layers.len()).rev() {
            if self.relu_at(i) {
                ndarray::Zip::from(&mut d)
                    .and(&cache.outputs[i])
                    .for_each(|g, &o| {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            let g = &mut grads.layers[i];
            g.weight += &cache.inputs[i].t().dot(&d);
            g.bias += &d.sum_axis(Axis(0));
            if i == 0 && !need_input {
                return None;
            }
            d = d.dot(&self.layers[i].weight.t());
        }
        Some(d)
    }
}

/// Column-wise max over contiguous row groups; ties keep the lowest row.
pub fn max_pool(h: &Array2<f64>, offsets: &[usize]) -> (Array2<f64>, Array2<usize>) {
    let groups = offsets.len() - 1;
    let width = h.ncols();
    let mut out = Array2::zeros((groups, width));
    let mut arg = Array2::zeros((groups, width));
    for g in 0..groups {
        let (lo, hi) = (offsets[g], offsets[g + 1]);
        for c in 0..width {
            let mut best = lo;
            for r in lo + 1..hi {
                if h[[r, c]] > h[[best, c]] {
                    best = r;
                }
            }
            out[[g, c]] = h[[best, c]];
            arg[[g, c]] = best;
        }
    }
    (out, arg)
}

/// Smallest gap between the winner and runner-up of any positive max-pool
/// column.
pub fn pool_margin(h: &Array2<f64>, offsets: &[usize]) -> f64 {
    let mut margin = f64::INFINITY;
    for w in offsets.windows(2) {
        for c in 0..h.ncols() {
            let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for r in w[0]..w[1] {
                let v = h[[r, c]];
                if v > top {
                    second = top;
                    top = v;
                } else if v > second {
                    second = v;
                }
            }
            if top > 0.0 && second.is_finite() {
                margin = margin.min(top - second);
            }
        }
    }
    margin
}

pub fn max_pool_backward(arg: &Array2<usize>, d_out: &Array2<f64>, rows: usize) -> Array2<f64> {
    let mut d = Array2::zeros((rows, d_out.ncols()));
    for ((g, c), &r) in arg.indexed_iter() {
        d[[r, c]] += d_out[[g, c]];
    }
    d
}

/// Horizontal concatenation.
pub fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    out.slice_mut(s![.., ..a.ncols()]).assign(a);
    out.slice_mut(s![.., a.ncols()..]).assign(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn max_pool_routes_to_first_maximum() {
        let h = ndarray::arr2(&[[1.0, 2.0], [3.0, 2.0], [0.0, 5.0], [0.0, 5.0]]);
        let (out, arg) = max_pool(&h, &[0, 2, 4]);
        assert_eq!(out, ndarray::arr2(&[[3.0, 2.0], [0.0, 5.0]]));
        assert_eq!(arg, ndarray::arr2(&[[1, 0], [2, 2]]));
        let d = max_pool_backward(&arg, &ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]), 4);
        assert_eq!(d, ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]));
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = substream(1, "mlp", 0);
        let mlp = Mlp::init(&[3, 5, 2], false, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3);
        let loss = |m: &Mlp, x: &Array2<f64>| m.forward(x.clone()).sum();
        let (out, cache) = mlp.forward_cached(x.clone());
        let mut grads = mlp.zeros_like();
        let dx = mlp
            .backward(&cache, Array2::ones(out.raw_dim()), &mut grads, true)
            .unwrap();
        let h = 1e-6;
        for (i, j) in [(0, 0), (2, 1), (1, 4)] {
            let mut p = mlp.clone();
            p.layers[0].weight[[i, j]] += h;
            let mut m = mlp.clone();
            m.layers[0].weight[[i, j]] -= h;
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!((fd - grads.layers[0].weight[[i, j]]).abs() < 1e-6);
        }
        let mut xp = x.clone();
        xp[[2, 1]] += h;
        let mut xm = x.clone();
        xm[[2, 1]] -= h;
        let fd = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
        assert!((fd - dx[[2, 1]]).abs() < 1e-6);
    }
}
