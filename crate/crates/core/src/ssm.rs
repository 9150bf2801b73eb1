//! Selective state-space kernel.
//!
//! Per token `x_k ∈ ℝ^m` a projector produces
//!
//! ```text
//! A_k  = exp(-softplus(W_A x_k + b_A))   ∈ (0,1)^d
//! Bx_k = W_B x_k + b_B                   ∈ ℝ^d
//! g_k  = sigmoid(w_g · x_k + b_g)        ∈ (0,1)
//! ```
//!
//! and the recurrence is `h_k = A_k ⊙ h_{k-1} + Bx_k`, `y_k = g_k · C0 h_k`,
//! `h_0 = 0`. Tokens whose source pixel is invalid decay the state without
//! injecting `Bx_k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::linalg::{dot, macs, sigmoid, softplus, Matrix};
use crate::scans::TokenSequence;

/// Weights of one selective SSM with token width `m` and state width `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    token_width: usize,
    state_width: usize,
    /// `d × m`
    pub decay_w: Matrix,
    pub decay_b: Vec<f64>,
    /// `d × m`
    pub input_w: Matrix,
    pub input_b: Vec<f64>,
    /// Shared `d × d` output mixing matrix `C0`.
    pub mix: Matrix,
    pub gate_w: Vec<f64>,
    pub gate_b: f64,
}

pub const INIT_BOUND: f64 = 0.1;
pub const INIT_DECAY_BIAS: f64 = 1.0;

impl SsmParams {
    pub fn zeros(token_width: usize, state_width: usize) -> Self {
        let (m, d) = (token_width, state_width);
        Self {
            token_width: m,
            state_width: d,
            decay_w: Matrix::zeros(d, m),
            decay_b: vec![0.0; d],
            input_w: Matrix::zeros(d, m),
            input_b: vec![0.0; d],
            mix: Matrix::zeros(d, d),
            gate_w: vec![0.0; m],
            gate_b: 0.0,
        }
    }

    /// Weights uniform in `(-0.1, 0.1)`, biases zero except `b_A = 1`.
    pub fn seeded(token_width: usize, state_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_rng(token_width, state_width, &mut rng)
    }

    pub fn from_rng(token_width: usize, state_width: usize, rng: &mut ChaCha8Rng) -> Self {
        let (m, d) = (token_width, state_width);
        let decay_w = Matrix::uniform(d, m, INIT_BOUND, rng);
        let input_w = Matrix::uniform(d, m, INIT_BOUND, rng);
        let mix = Matrix::uniform(d, d, INIT_BOUND, rng);
        let gate_w = Matrix::uniform(1, m, INIT_BOUND, rng).data().to_vec();
        Self {
            token_width: m,
            state_width: d,
            decay_w,
            decay_b: vec![INIT_DECAY_BIAS; d],
            input_w,
            input_b: vec![0.0; d],
            mix,
            gate_w,
            gate_b: 0.0,
        }
    }

    pub fn token_width(&self) -> usize {
        self.token_width
    }

    pub fn state_width(&self) -> usize {
        self.state_width
    }

    pub fn param_count(&self) -> usize {
        let (m, d) = (self.token_width, self.state_width);
        2 * d * m + 2 * d + d * d + m + 1
    }

    pub fn check(&self) -> Result<()> {
        let (m, d) = (self.token_width, self.state_width);
        let ok = self.decay_w.rows() == d
            && self.decay_w.cols() == m
            && self.decay_b.len() == d
            && self.input_w.rows() == d
            && self.input_w.cols() == m
            && self.input_b.len() == d
            && self.mix.rows() == d
            && self.mix.cols() == d
            && self.gate_w.len() == m;
        if ok && m > 0 && d > 0 {
            Ok(())
        } else {
            shape_err(format!("inconsistent SSM weight shapes for m={m}, d={d}"))
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.decay_w.data());
        v.extend_from_slice(&self.decay_b);
        v.extend_from_slice(self.input_w.data());
        v.extend_from_slice(&self.input_b);
        v.extend_from_slice(self.mix.data());
        v.extend_from_slice(&self.gate_w);
        v.push(self.gate_b);
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn from_flat(token_width: usize, state_width: usize, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(token_width, state_width);
        if flat.len() != p.param_count() {
            return shape_err(format!("{} values for {} SSM parameters", flat.len(), p.param_count()));
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(p.decay_w.data_mut());
        take(&mut p.decay_b);
        take(p.input_w.data_mut());
        take(&mut p.input_b);
        take(p.mix.data_mut());
        take(&mut p.gate_w);
        p.gate_b = rest[0];
        Ok(p)
    }

    /// `self += other`, elementwise over every weight. Used to sum gradients.
    pub fn accumulate(&mut self, other: &SsmParams) {
        assert_eq!((self.token_width, self.state_width), (other.token_width, other.state_width));
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(self.decay_w.data_mut(), other.decay_w.data());
        add(&mut self.decay_b, &other.decay_b);
        add(self.input_w.data_mut(), other.input_w.data());
        add(&mut self.input_b, &other.input_b);
        add(self.mix.data_mut(), other.mix.data());
        add(&mut self.gate_w, &other.gate_w);
        self.gate_b += other.gate_b;
    }

    /// MACs for one token step: both projections, the gate, the state update,
    /// the `C0` mix and the gate scaling.
    pub fn step_macs(&self) -> u64 {
        let (m, d) = (self.token_width as u64, self.state_width as u64);
        2 * d * m + m + d + d * d + d
    }
}

/// Per-step parameters produced by the projector.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub decay: Vec<f64>,
    pub drive: Vec<f64>,
    pub gate: f64,
}

fn project_into(x: &[f64], p: &SsmParams, decay: &mut [f64], drive: &mut [f64]) -> f64 {
    p.decay_w.matvec_into(x, decay);
    for (a, b) in decay.iter_mut().zip(&p.decay_b) {
        *a = (-softplus(*a + b)).exp();
    }
    p.input_w.matvec_into(x, drive);
    for (bx, b) in drive.iter_mut().zip(&p.input_b) {
        *bx += b;
    }
    sigmoid(dot(&p.gate_w, x) + p.gate_b)
}

pub fn project_params(x: &[f64], p: &SsmParams) -> Result<StepParams> {
    p.check()?;
    if x.len() != p.token_width {
        return shape_err(format!("token of width {} for m={}", x.len(), p.token_width));
    }
    let d = p.state_width;
    let (mut decay, mut drive) = (vec![0.0; d], vec![0.0; d]);
    let gate = project_into(x, p, &mut decay, &mut drive);
    Ok(StepParams { decay, drive, gate })
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmRun {
    token_width: usize,
    state_width: usize,
    /// `T × m`
    pub inputs: Vec<f64>,
    pub mask: Vec<bool>,
    /// `T × d`
    pub decay: Vec<f64>,
    /// `T × d`
    pub drive: Vec<f64>,
    pub gate: Vec<f64>,
    /// `T × d`
    pub states: Vec<f64>,
    /// `T × d`
    pub outputs: Vec<f64>,
}

impl SsmRun {
    pub fn empty(token_width: usize, state_width: usize) -> Self {
        Self {
            token_width,
            state_width,
            inputs: Vec::new(),
            mask: Vec::new(),
            decay: Vec::new(),
            drive: Vec::new(),
            gate: Vec::new(),
            states: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn token_width(&self) -> usize {
        self.token_width
    }

    pub fn state_width(&self) -> usize {
        self.state_width
    }

    pub fn output(&self, k: usize) -> &[f64] {
        let d = self.state_width;
        &self.outputs[k * d..(k + 1) * d]
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let d = self.state_width;
        &self.states[k * d..(k + 1) * d]
    }

    pub fn final_state(&self) -> Vec<f64> {
        if self.is_empty() {
            vec![0.0; self.state_width]
        } else {
            self.state(self.len() - 1).to_vec()
        }
    }

    /// Outputs as a sequence carrying the input mask.
    pub fn output_sequence(&self) -> TokenSequence {
        TokenSequence::new(self.state_width, self.outputs.clone(), self.mask.clone()).expect("run outputs are T × d")
    }
}

/// The diagonal recurrence with precomputed per-step parameters. Exposed for
/// degenerate fixed-parameter cases (e.g. `A ≡ 1`) that the projector cannot
/// produce.
pub fn recur(decay: &[f64], drive: &[f64], gate: &[f64], mask: &[bool], mix: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = mix.rows();
    let t = mask.len();
    if mix.cols() != d || decay.len() != t * d || drive.len() != t * d || gate.len() != t {
        return shape_err("recurrence inputs disagree on T or d");
    }
    let mut states = vec![0.0; t * d];
    let mut outputs = vec![0.0; t * d];
    let mut h = vec![0.0; d];
    for k in 0..t {
        let a = &decay[k * d..(k + 1) * d];
        let bx = &drive[k * d..(k + 1) * d];
        if mask[k] {
            for ((hi, ai), bi) in h.iter_mut().zip(a).zip(bx) {
                *hi = ai * *hi + bi;
            }
        } else {
            for (hi, ai) in h.iter_mut().zip(a) {
                *hi *= ai;
            }
        }
        macs::record(d);
        states[k * d..(k + 1) * d].copy_from_slice(&h);
        let y = &mut outputs[k * d..(k + 1) * d];
        mix.matvec_into(&h, y);
        y.iter_mut().for_each(|yi| *yi *= gate[k]);
        macs::record(d);
    }
    Ok((states, outputs))
}

pub fn ssm_forward(seq: &TokenSequence, p: &SsmParams) -> Result<SsmRun> {
    p.check()?;
    if seq.width() != p.token_width {
        return shape_err(format!("tokens of width {} for m={}", seq.width(), p.token_width));
    }
    let (t, d) = (seq.len(), p.state_width);
    let mut decay = vec![0.0; t * d];
    let mut drive = vec![0.0; t * d];
    let mut gate = vec![0.0; t];
    for k in 0..t {
        gate[k] = project_into(seq.token(k), p, &mut decay[k * d..(k + 1) * d], &mut drive[k * d..(k + 1) * d]);
    }
    let (states, outputs) = recur(&decay, &drive, &gate, seq.mask(), &p.mix)?;
    Ok(SsmRun {
        token_width: p.token_width,
        state_width: d,
        inputs: seq.tokens().to_vec(),
        mask: seq.mask().to_vec(),
        decay,
        drive,
        gate,
        states,
        outputs,
    })
}

/// Reverse-mode gradients of [`ssm_forward`] given `dL/dy` (`T × d`).
/// Returns `(dL/dinputs (T × m), dL/dparams)`.
pub fn ssm_backward(run: &SsmRun, p: &SsmParams, d_outputs: &[f64]) -> Result<(Vec<f64>, SsmParams)> {
    p.check()?;
    let (t, m, d) = (run.len(), p.token_width, p.state_width);
    if run.token_width != m || run.state_width != d {
        return shape_err("run was produced with different SSM widths");
    }
    if d_outputs.len() != t * d {
        return shape_err(format!("upstream gradient has {} values, expected {}", d_outputs.len(), t * d));
    }
    let mut grads = SsmParams::zeros(m, d);
    let mut d_inputs = vec![0.0; t * m];
    let mut dh = vec![0.0; d];
    let mut carry = vec![0.0; d];
    let mut mixed = vec![0.0; d];
    let mut dpre = vec![0.0; d];
    let mut pre = vec![0.0; d];
    let mut scaled = vec![0.0; d];
    let zeros = vec![0.0; d];

    for k in (0..t).rev() {
        let dy = &d_outputs[k * d..(k + 1) * d];
        let h = run.state(k);
        let h_prev = if k > 0 { run.state(k - 1) } else { &zeros[..] };
        let x = &run.inputs[k * m..(k + 1) * m];
        let a = &run.decay[k * d..(k + 1) * d];
        let g = run.gate[k];

        // y = g · C0 h
        p.mix.matvec_into(h, &mut mixed);
        let dg = dot(dy, &mixed);
        scaled.iter_mut().zip(dy).for_each(|(s, v)| *s = g * v);
        grads.mix.add_outer(&scaled, h);
        dh.copy_from_slice(&carry);
        p.mix.matvec_t_acc(&scaled, &mut dh);

        // h = A ⊙ h_prev (+ Bx when valid); dA/ds = -A · sigmoid(s), s = W_A x + b_A.
        // s is recomputed from x: inverting A loses precision near 0 and 1.
        p.decay_w.matvec_into(x, &mut pre);
        for i in 0..d {
            let da = dh[i] * h_prev[i];
            dpre[i] = -da * a[i] * sigmoid(pre[i] + p.decay_b[i]);
            carry[i] = dh[i] * a[i];
        }
        let dx = &mut d_inputs[k * m..(k + 1) * m];
        grads.decay_w.add_outer(&dpre, x);
        grads.decay_b.iter_mut().zip(&dpre).for_each(|(b, v)| *b += v);
        p.decay_w.matvec_t_acc(&dpre, dx);

        if run.mask[k] {
            grads.input_w.add_outer(&dh, x);
            grads.input_b.iter_mut().zip(&dh).for_each(|(b, v)| *b += v);
            p.input_w.matvec_t_acc(&dh, dx);
        }

        let dgate_pre = dg * g * (1.0 - g);
        grads.gate_w.iter_mut().zip(x).for_each(|(w, xi)| *w += dgate_pre * xi);
        grads.gate_b += dgate_pre;
        dx.iter_mut().zip(&p.gate_w).for_each(|(o, w)| *o += dgate_pre * w);
    }
    Ok((d_inputs, grads))
}

/// Mean of the per-step outputs; the zero vector for an empty run.
pub fn ring_descriptor(run: &SsmRun) -> Vec<f64> {
    let d = run.state_width;
    let mut z = vec![0.0; d];
    if run.is_empty() {
        return z;
    }
    for y in run.outputs.chunks_exact(d) {
        z.iter_mut().zip(y).for_each(|(a, b)| *a += b);
    }
    let n = run.len() as f64;
    z.iter_mut().for_each(|a| *a /= n);
    z
}

/// Per-ring descriptors `z_0 … z_R★`, innermost first.
#[derive(Debug, Clone, PartialEq)]
pub struct RingDescriptorSet {
    width: usize,
    values: Vec<f64>,
}

impl RingDescriptorSet {
    pub fn new(width: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || !values.len().is_multiple_of(width) {
            return shape_err(format!("{} values do not split into width-{width} descriptors", values.len()));
        }
        Ok(Self { width, values })
    }

    pub fn from_runs(runs: &[SsmRun]) -> Result<Self> {
        let Some(first) = runs.first() else {
            return shape_err("no ring runs");
        };
        let d = first.state_width;
        let values = runs.iter().flat_map(ring_descriptor).collect();
        Self::new(d, values)
    }

    pub fn ring_count(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Radial chain over the descriptors, innermost ring first, zero initial state.
pub fn radial_forward(z: &RingDescriptorSet, p_rad: &SsmParams) -> Result<SsmRun> {
    if p_rad.token_width != z.width {
        return shape_err(format!("radial SSM expects width {}, descriptors have {}", p_rad.token_width, z.width));
    }
    let seq = TokenSequence::from_tokens(z.width, z.values.clone())?;
    ssm_forward(&seq, p_rad)
}
