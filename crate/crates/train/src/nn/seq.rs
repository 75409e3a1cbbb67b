use super::ops::{
    conv2d_backward, conv2d_forward, instance_norm_backward, instance_norm_forward, upsample2_backward, upsample2_forward, Conv,
};
use super::{ParamSet, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Conv(Conv),
    InstanceNorm,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Upsample2,
    /// `x + body(x)`.
    Residual(Vec<Op>),
}

/// What each op keeps from its forward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv { input: Tensor<T> },
    Norm { output: Tensor<T>, inv_std: Vec<T> },
    Relu { output: Tensor<T> },
    LeakyRelu { input: Tensor<T> },
    Tanh { output: Tensor<T> },
    Upsample2,
    Residual(Vec<Cache<T>>),
}

fn forward_op<T: Scalar>(op: &Op, params: &ParamSet<T>, x: Tensor<T>, keep: bool) -> (Tensor<T>, Option<Cache<T>>) {
    match op {
        Op::Conv(conv) => {
            let y = conv2d_forward(conv, params, &x);
            (y, keep.then_some(Cache::Conv { input: x }))
        }
        Op::InstanceNorm => {
            let (y, inv_std) = instance_norm_forward(&x);
            let cache = keep.then(|| Cache::Norm { output: y.clone(), inv_std });
            (y, cache)
        }
        Op::Relu => {
            let mut y = x;
            y.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
            let cache = keep.then(|| Cache::Relu { output: y.clone() });
            (y, cache)
        }
        Op::LeakyRelu(slope) => {
            let s = T::of(*slope);
            let mut y = x.clone();
            y.data.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = *v * s
                }
            });
            (y, keep.then_some(Cache::LeakyRelu { input: x }))
        }
        Op::Tanh => {
            let mut y = x;
            y.data.iter_mut().for_each(|v| *v = v.tanh());
            let cache = keep.then(|| Cache::Tanh { output: y.clone() });
            (y, cache)
        }
        Op::Upsample2 => (upsample2_forward(&x), keep.then_some(Cache::Upsample2)),
        Op::Residual(body) => {
            let mut h = x.clone();
            let mut caches = Vec::new();
            for op in body {
                let (next, cache) = forward_op(op, params, h, keep);
                h = next;
                caches.extend(cache);
            }
            h.add_assign(&x);
            (h, keep.then_some(Cache::Residual(caches)))
        }
    }
}

fn backward_op<T: Scalar>(
    op: &Op,
    cache: &Cache<T>,
    params: &ParamSet<T>,
    dy: Tensor<T>,
    grads: &mut ParamSet<T>,
    want_dx: bool,
) -> Option<Tensor<T>> {
    match (op, cache) {
        (Op::Conv(conv), Cache::Conv { input }) => conv2d_backward(conv, params, input, &dy, grads, want_dx),
        (Op::InstanceNorm, Cache::Norm { output, inv_std }) => Some(instance_norm_backward(output, inv_std, &dy)),
        (Op::Relu, Cache::Relu { output }) => {
            let mut dx = dy;
            dx.data.iter_mut().zip(&output.data).for_each(|(g, &y)| {
                if y <= T::zero() {
                    *g = T::zero()
                }
            });
            Some(dx)
        }
        (Op::LeakyRelu(slope), Cache::LeakyRelu { input }) => {
            let s = T::of(*slope);
            let mut dx = dy;
            dx.data.iter_mut().zip(&input.data).for_each(|(g, &x)| {
                if x < T::zero() {
                    *g = *g * s
                }
            });
            Some(dx)
        }
        (Op::Tanh, Cache::Tanh { output }) => {
            let mut dx = dy;
            dx.data.iter_mut().zip(&output.data).for_each(|(g, &y)| *g = *g * (T::one() - y * y));
            Some(dx)
        }
        (Op::Upsample2, Cache::Upsample2) => Some(upsample2_backward(&dy)),
        (Op::Residual(body), Cache::Residual(caches)) => {
            let mut g = dy.clone();
            for (op, cache) in body.iter().zip(caches).rev() {
                g = backward_op(op, cache, params, g, grads, true).expect("inner ops produce input gradients");
            }
            g.add_assign(&dy);
            Some(g)
        }
        _ => panic!("cache does not belong to op"),
    }
}

/// Result of [`Sequential::run`].
#[derive(Debug, Clone)]
pub struct Run<T> {
    pub output: Tensor<T>,
    /// Activations at the requested boundaries, in request order.
    pub taps: Vec<Tensor<T>>,
    /// One cache per executed op (empty without caching).
    pub caches: Vec<Cache<T>>,
}

/// A chain of ops. Boundary `b` is the output of op `b - 1`; boundary 0 is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub ops: Vec<Op>,
}

impl Sequential {
    /// Runs ops `0..end`, copying out the activations at `taps` boundaries.
    pub fn run<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor<T>, end: usize, taps: &[usize], keep: bool) -> Run<T> {
        assert!(end <= self.ops.len(), "run past the last op");
        let mut taps_out: Vec<Option<Tensor<T>>> = vec![None; taps.len()];
        let mut record = |b: usize, t: &Tensor<T>| {
            for (slot, &want) in taps_out.iter_mut().zip(taps) {
                if want == b {
                    *slot = Some(t.clone());
                }
            }
        };
        let mut h = x.clone();
        record(0, &h);
        let mut caches = Vec::new();
        for (i, op) in self.ops[..end].iter().enumerate() {
            let (next, cache) = forward_op(op, params, h, keep);
            h = next;
            caches.extend(cache);
            record(i + 1, &h);
        }
        let taps = taps_out.into_iter().map(|t| t.expect("tap boundary inside the run")).collect();
        Run { output: h, taps, caches }
    }

    /// Backpropagates through the cached ops. `dy` enters at the last cached
    /// boundary; `inject` adds extra gradients at interior boundaries.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        caches: &[Cache<T>],
        dy: Option<Tensor<T>>,
        inject: &[(usize, &Tensor<T>)],
        grads: &mut ParamSet<T>,
        want_dx: bool,
    ) -> Option<Tensor<T>> {
        let end = caches.len();
        let mut g = dy;
        for b in (0..=end).rev() {
            for (at, t) in inject {
                if *at == b {
                    match g.as_mut() {
                        Some(g) => g.add_assign(t),
                        None => g = Some((*t).clone()),
                    }
                }
            }
            if b == 0 {
                break;
            }
            g = match g {
                Some(d) => backward_op(&self.ops[b - 1], &caches[b - 1], params, d, grads, want_dx || b > 1),
                None => None,
            };
        }
        g
    }

    /// Spatial size after ops `0..end` for a `h x w` input, or `None` when a
    /// convolution does not fit.
    pub fn trace_size(&self, h: usize, w: usize, end: usize) -> Option<(usize, usize, usize)> {
        fn step(op: &Op, s: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
            match op {
                Op::Conv(c) => c.output_size(s.1, s.2).map(|(h, w)| (c.cout, h, w)),
                Op::Upsample2 => Some((s.0, s.1 * 2, s.2 * 2)),
                Op::Residual(body) => body.iter().try_fold(s, |s, op| step(op, s)),
                _ => Some(s),
            }
        }
        self.ops[..end].iter().try_fold((0, h, w), |s, op| step(op, s))
    }
}
