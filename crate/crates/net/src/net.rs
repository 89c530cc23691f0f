use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{
    concat, conv_backward, conv_forward, maxpool, maxpool_backward, relu, relu_backward, split,
    upsample, upsample_backward, ConvShape,
};
use crate::tensor::{Grid, Padded, Real, Tensor4};
use crate::{NetError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Two-channel softmax over background/foreground.
    Pwc,
    /// One linear channel.
    Pwr,
}

impl Head {
    pub fn outputs(&self) -> usize {
        match self {
            Head::Pwc => 2,
            Head::Pwr => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Head::Pwc => "pwc",
            Head::Pwr => "pwr",
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Head {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pwc" => Ok(Head::Pwc),
            "pwr" => Ok(Head::Pwr),
            other => Err(format!("unknown arm {other:?} (expected pwc or pwr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub levels: usize,
    pub base_channels: usize,
    pub input_dims: [usize; 3],
    pub head: Head,
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_channels == 0 {
            return Err(NetError::Spec("levels and base channels must be >= 1".into()));
        }
        let f = 1usize << (self.levels - 1);
        if self.input_dims.iter().any(|&n| n == 0 || n % f != 0) {
            return Err(NetError::Spec(format!(
                "input dims {:?} must be positive multiples of {f} for {} levels",
                self.input_dims, self.levels
            )));
        }
        Ok(())
    }

    pub fn with_head(&self, head: Head) -> NetSpec {
        NetSpec { head, ..*self }
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn enc(&self, level: usize, second: bool) -> usize {
        2 * level + second as usize
    }

    /// Index of the up convolution of a decoder level; its two convolutions follow.
    fn dec(&self, level: usize) -> usize {
        2 * self.levels + 3 * (self.levels - 2 - level)
    }

    fn head_index(&self) -> usize {
        2 * self.levels + 3 * (self.levels - 1)
    }

    /// Every convolution in parameter order: encoder levels top-down, decoder
    /// levels bottom-up (up convolution first), then the head.
    pub fn layout(&self) -> Vec<ConvShape> {
        let conv = |cin, cout| ConvShape { cin, cout, kernel: 3 };
        let mut out = Vec::new();
        for l in 0..self.levels {
            let cin = if l == 0 { 1 } else { self.channels(l - 1) };
            out.push(conv(cin, self.channels(l)));
            out.push(conv(self.channels(l), self.channels(l)));
        }
        for l in (0..self.levels - 1).rev() {
            let c = self.channels(l);
            out.push(conv(self.channels(l + 1), c));
            out.push(conv(2 * c, c));
            out.push(conv(c, c));
        }
        out.push(ConvShape { cin: self.channels(0), cout: self.head.outputs(), kernel: 1 });
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(ConvShape::param_len).sum()
    }
}

/// All weights and biases in one flat buffer, convolution by convolution,
/// each as `[out][in][kz][ky][kx]` weights followed by `[out]` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    spec: NetSpec,
    seed: u64,
    /// World length of one unit of the linear head's output.
    output_scale: f64,
    offsets: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Params<T> {
    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Params::zeros(spec, seed);
        for (s, &off) in spec.layout().iter().zip(&p.offsets) {
            let bound = (6.0 / (s.cin * s.taps()) as f64).sqrt();
            for w in &mut p.values[off..off + s.weight_len()] {
                *w = T::of(rng.gen_range(-bound..bound));
            }
        }
        Ok(p)
    }

    pub(crate) fn zeros(spec: &NetSpec, seed: u64) -> Self {
        let mut offsets = Vec::new();
        let mut n = 0;
        for s in spec.layout() {
            offsets.push(n);
            n += s.param_len();
        }
        Params { spec: *spec, seed, output_scale: 1.0, offsets, values: vec![T::zero(); n] }
    }

    pub(crate) fn from_parts(spec: NetSpec, seed: u64, output_scale: f64, values: Vec<T>) -> Result<Self> {
        spec.validate()?;
        let mut p = Params::zeros(&spec, seed);
        if values.len() != p.values.len() {
            return Err(NetError::Shape {
                what: "parameters",
                expected: p.values.len().to_string(),
                found: values.len().to_string(),
            });
        }
        p.values = values;
        p.output_scale = output_scale;
        Ok(p)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn set_output_scale(&mut self, scale: f64) {
        self.output_scale = scale;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zeroes the final 1x1x1 convolution.
    pub fn zero_head(&mut self) {
        let off = self.offsets[self.spec.head_index()];
        self.values[off..].fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            spec: self.spec,
            seed: self.seed,
            output_scale: self.output_scale,
            offsets: self.offsets.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    fn conv(&self, index: usize) -> (&[T], &[T]) {
        let s = self.spec.layout()[index];
        let off = self.offsets[index];
        let (w, rest) = self.values[off..off + s.param_len()].split_at(s.weight_len());
        (w, rest)
    }

    fn conv_mut(&mut self, index: usize) -> (&mut [T], &mut [T]) {
        let s = self.spec.layout()[index];
        let off = self.offsets[index];
        self.values[off..off + s.param_len()].split_at_mut(s.weight_len())
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    layout: Vec<ConvShape>,
    inputs: Vec<Option<Padded<T>>>,
    outputs: Vec<Option<Padded<T>>>,
    pools: Vec<Vec<usize>>,
    grids: Vec<Grid>,
}

impl<T: Real> Tape<T> {
    fn input(&self, i: usize) -> &Padded<T> {
        self.inputs[i].as_ref().expect("recorded")
    }

    fn output(&self, i: usize) -> &Padded<T> {
        self.outputs[i].as_ref().expect("recorded")
    }

    /// Which units are active and which inputs each pool selected. The
    /// network is smooth in its parameters wherever this stays fixed.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for y in self.outputs.iter().flatten() {
            out.extend(y.data.iter().map(|&v| (v > T::zero()) as usize));
        }
        for arg in &self.pools {
            out.extend_from_slice(arg);
        }
        out
    }
}

struct Runner<'a, T> {
    params: &'a Params<T>,
    tape: Tape<T>,
}

impl<T: Real> Runner<'_, T> {
    fn conv(&mut self, index: usize, x: Padded<T>, activate: bool) -> Padded<T> {
        let (w, b) = self.params.conv(index);
        let mut y = conv_forward(self.tape.layout[index], w, b, &x);
        if activate {
            relu(&mut y);
            self.tape.outputs[index] = Some(y.clone());
        }
        self.tape.inputs[index] = Some(x);
        y
    }
}

fn check_input<T: Real>(params: &Params<T>, input: &Tensor4<T>) -> Result<()> {
    let spec = params.spec();
    if input.channels() != 1 || input.dims() != spec.input_dims {
        return Err(NetError::Shape {
            what: "network input",
            expected: format!("1 x {:?}", spec.input_dims),
            found: input.shape(),
        });
    }
    Ok(())
}

/// Forward pass returning the head's raw output (logits for `Pwc`) and the
/// recorded activations.
pub fn forward_train<T: Real>(params: &Params<T>, input: &Tensor4<T>) -> Result<(Tensor4<T>, Tape<T>)> {
    check_input(params, input)?;
    let spec = *params.spec();
    let layout = spec.layout();
    let n = layout.len();
    let mut run = Runner {
        params,
        tape: Tape {
            layout,
            inputs: vec![None; n],
            outputs: vec![None; n],
            pools: Vec::new(),
            grids: Vec::new(),
        },
    };
    let mut h = Padded::from_tensor(input);
    let mut skips = Vec::new();
    for l in 0..spec.levels {
        run.tape.grids.push(h.grid);
        h = run.conv(spec.enc(l, false), h, true);
        h = run.conv(spec.enc(l, true), h, true);
        if l + 1 < spec.levels {
            let (pooled, arg) = maxpool(&h);
            run.tape.pools.push(arg);
            skips.push(h);
            h = pooled;
        }
    }
    for l in (0..spec.levels - 1).rev() {
        let d = spec.dec(l);
        let up = run.conv(d, upsample(&h), true);
        h = concat(&skips[l], &up);
        h = run.conv(d + 1, h, true);
        h = run.conv(d + 2, h, true);
    }
    let out = run.conv(spec.head_index(), h, false);
    Ok((out.to_tensor(), run.tape))
}

/// Raw head output: logits for `Pwc`, the regressed value for `Pwr`.
pub fn forward_logits<T: Real>(params: &Params<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    Ok(forward_train(params, input)?.0)
}

/// Network output: per-voxel class probabilities for `Pwc` (channel 1 is the
/// foreground), the linear output for `Pwr`.
pub fn forward<T: Real>(params: &Params<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut out = forward_logits(params, input)?;
    if params.spec().head == Head::Pwc {
        softmax2(&mut out);
    }
    Ok(out)
}

pub(crate) fn softmax2<T: Real>(t: &mut Tensor4<T>) {
    let n = t.voxels();
    let (bg, fg) = t.values_mut().split_at_mut(n);
    for (a, b) in bg.iter_mut().zip(fg) {
        let m = a.max(*b);
        let (ea, eb) = ((*a - m).exp(), (*b - m).exp());
        let s = ea + eb;
        *a = ea / s;
        *b = eb / s;
    }
}

/// Parameter gradients of a scalar loss whose gradient with respect to the
/// raw head output is `upstream`. Returns the input gradient as well when
/// `input_grad` is set.
pub fn backward<T: Real>(
    params: &Params<T>,
    tape: &Tape<T>,
    upstream: &Tensor4<T>,
    input_grad: bool,
) -> Result<(Params<T>, Option<Tensor4<T>>)> {
    let spec = *params.spec();
    let out_shape = [spec.head.outputs(), spec.input_dims[0], spec.input_dims[1], spec.input_dims[2]];
    if [upstream.channels(), upstream.dims()[0], upstream.dims()[1], upstream.dims()[2]] != out_shape {
        return Err(NetError::Shape {
            what: "upstream gradient",
            expected: format!("{} x {:?}", out_shape[0], spec.input_dims),
            found: upstream.shape(),
        });
    }
    let mut grads = Params::zeros(&spec, params.seed);
    grads.output_scale = params.output_scale;
    let mut step = |index: usize, dy: &mut Padded<T>, activated: bool, need_dx: bool| {
        if activated {
            relu_backward(tape.output(index), dy);
        }
        let (w, _) = params.conv(index);
        let (dw, db) = grads.conv_mut(index);
        conv_backward(tape.layout[index], w, tape.input(index), dy, dw, db, need_dx)
    };

    let mut dy = Padded::from_tensor(upstream);
    let mut dh = step(spec.head_index(), &mut dy, false, true).expect("requested");
    let mut dskips = vec![None; spec.levels];
    for l in 0..spec.levels - 1 {
        let d = spec.dec(l);
        let mut g = step(d + 2, &mut dh, true, true).expect("requested");
        let g = step(d + 1, &mut g, true, true).expect("requested");
        let (dskip, mut dup) = split(g, spec.channels(l));
        dskips[l] = Some(dskip);
        let dup = step(d, &mut dup, true, true).expect("requested");
        dh = upsample_backward(&dup);
    }
    let mut dinput = None;
    for l in (0..spec.levels).rev() {
        if l + 1 < spec.levels {
            dh = maxpool_backward(&dh, &tape.pools[l], tape.grids[l]);
            let skip = dskips[l].take().expect("decoder visited");
            for (a, &b) in dh.data.iter_mut().zip(&skip.data) {
                *a = *a + b;
            }
        }
        let mut g = step(spec.enc(l, true), &mut dh, true, true).expect("requested");
        let need = l > 0 || input_grad;
        match step(spec.enc(l, false), &mut g, true, need) {
            Some(next) if l > 0 => dh = next,
            Some(dx) => dinput = Some(dx.to_tensor()),
            None => {}
        }
    }
    Ok((grads, dinput))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(head: Head) -> NetSpec {
        NetSpec { levels: 2, base_channels: 4, input_dims: [8, 8, 8], head }
    }

    fn input(seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::new(1, [8, 8, 8], (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(spec(Head::Pwc).validate().is_ok());
        let bad = NetSpec { input_dims: [8, 6, 8], levels: 3, ..spec(Head::Pwc) };
        assert!(bad.validate().is_err());
        let odd = NetSpec { input_dims: [7, 5, 3], levels: 1, ..spec(Head::Pwc) };
        assert!(odd.validate().is_ok());
        assert!(Params::<f32>::init(&bad, 0).is_err());
    }

    #[test]
    fn heads_differ_only_in_the_last_layer() {
        for levels in 1..=3 {
            let a = NetSpec { levels, ..spec(Head::Pwc) };
            let b = a.with_head(Head::Pwr);
            let (la, lb) = (a.layout(), b.layout());
            assert_eq!(la[..la.len() - 1], lb[..lb.len() - 1]);
            // One output channel fewer: 4 weights and one bias.
            assert_eq!(a.param_count() - b.param_count(), a.base_channels + 1);
        }
    }

    #[test]
    fn layout_counts() {
        // 1->4, 4->4, 4->8, 8->8, up 8->4, 8->4, 4->4, head 4->2.
        let want = [(1, 4), (4, 4), (4, 8), (8, 8), (8, 4), (8, 4), (4, 4)];
        let s = spec(Head::Pwc);
        let direct: usize = want.iter().map(|(i, o)| o * i * 27 + o).sum::<usize>() + 4 * 2 + 2;
        assert_eq!(s.param_count(), direct);
        assert_eq!(Params::<f64>::init(&s, 0).unwrap().len(), direct);
    }

    #[test]
    fn softmax_outputs_are_distributions() {
        let p = Params::<f64>::init(&spec(Head::Pwc), 5).unwrap();
        let y = forward(&p, &input(1)).unwrap();
        assert_eq!(y.channels(), 2);
        for (a, b) in y.channel(0).iter().zip(y.channel(1)) {
            assert!(*a >= 0.0 && *b >= 0.0);
            assert!((a + b - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_head_gives_uniform_output() {
        let mut p = Params::<f32>::init(&spec(Head::Pwc), 5).unwrap();
        p.zero_head();
        let y = forward(&p, &input(1).cast()).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_is_deterministic() {
        let p = Params::<f32>::init(&spec(Head::Pwr), 9).unwrap();
        let x = input(2).cast();
        let a = forward(&p, &x).unwrap();
        let b = forward(&Params::<f32>::init(&spec(Head::Pwr), 9).unwrap(), &x).unwrap();
        assert_eq!(a.channels(), 1);
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let p = Params::<f32>::init(&spec(Head::Pwr), 0).unwrap();
        let err = forward(&p, &Tensor4::zeros(1, [8, 8, 4])).unwrap_err();
        assert!(err.to_string().contains("[8, 8, 4]"), "{err}");
        assert!(forward(&p, &Tensor4::zeros(2, [8, 8, 8])).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = Params::<f64>::init(&spec(Head::Pwc), 1).unwrap();
        let (_, tape) = forward_train(&p, &input(3)).unwrap();
        let (g, dx) = backward(&p, &tape, &Tensor4::zeros(2, [8, 8, 8]), true).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert!(dx.unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_add_over_repeated_examples() {
        let p = Params::<f64>::init(&spec(Head::Pwr), 1).unwrap();
        let x = input(4);
        let (y, tape) = forward_train(&p, &x).unwrap();
        let up = Tensor4::new(1, [8, 8, 8], y.values().iter().map(|v| v * 0.3 - 0.1).collect()).unwrap();
        let (g1, _) = backward(&p, &tape, &up, false).unwrap();
        // A batch of the same example twice under sum reduction.
        let (_, tape2) = forward_train(&p, &x).unwrap();
        let (g2, _) = backward(&p, &tape2, &up, false).unwrap();
        for ((a, b), c) in g1.values().iter().zip(g2.values()).zip(g1.values()) {
            assert_eq!(a + b, 2.0 * c);
        }
    }

    #[test]
    fn single_level_net_runs() {
        let s = NetSpec { levels: 1, base_channels: 2, input_dims: [3, 4, 5], head: Head::Pwr };
        let p = Params::<f64>::init(&s, 0).unwrap();
        let x = Tensor4::new(1, [3, 4, 5], (0..60).map(|v| v as f64 / 60.0).collect()).unwrap();
        let (y, tape) = forward_train(&p, &x).unwrap();
        let (g, dx) = backward(&p, &tape, &y, true).unwrap();
        assert_eq!(g.len(), s.param_count());
        assert_eq!(dx.unwrap().dims(), [3, 4, 5]);
    }
}
