//! Tensor-train networks.
//!
//! A core is stored as a flat row-major array with axes
//! `[input][left bond][right bond][output]`. Cores without an input axis use an
//! input size of 1 and an implicit input `[1]`; all cores but the output core
//! have an output size of 1, and the two end bonds have size 1.
//!
//! Evaluation contracts the cores left of the output core into a bond vector,
//! the cores right of it into another, and combines both through the output
//! core.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_algebra::{standard_representation, GeneratorRep, InvariantProblem, Mode, RepMatrix, StandardKind};
use crate::invariant_basis::{expand_basis, invariant_basis, realify_basis, FirstGenerator, DEFAULT_BUDGET_BYTES};
use crate::linalg::RMat;
use crate::rng;

/// Standard deviation of the initialization noise.
pub const INIT_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Core {
    pub has_input: bool,
    /// `[input, left bond, right bond, output]`.
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(has_input: bool, dims: [usize; 4]) -> Self {
        let dims = if has_input { dims } else { [1, dims[1], dims[2], dims[3]] };
        Core { has_input, dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, l: usize, r: usize, o: usize) -> usize {
        let [_, rl, rr, no] = self.dims;
        ((x * rl + l) * rr + r) * no + o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
    output_pos: usize,
}

/// Cached partial contractions for one input.
struct Sweep {
    /// `left[m]` is the bond vector entering core `m` from the left, `m ≤ ℓ`.
    left: Vec<Vec<f64>>,
    /// `right[m]` is the bond vector entering core `m` from the right, `m ≥ ℓ`.
    right: Vec<Vec<f64>>,
    output: Vec<f64>,
}

const UNIT: [f64; 1] = [1.0];

impl TensorTrain {
    pub fn new(cores: Vec<Core>, output_pos: usize) -> Result<Self> {
        let d = cores.len();
        if d == 0 || output_pos >= d {
            return Err(Error::invalid("tensor train needs at least one core and an output position inside it"));
        }
        for (m, c) in cores.iter().enumerate() {
            if c.data.len() != c.dims.iter().product::<usize>() || c.dims.contains(&0) {
                return Err(Error::DimensionMismatch(format!("core {m} data does not match its dims")));
            }
            if !c.has_input && c.dims[0] != 1 {
                return Err(Error::DimensionMismatch(format!("core {m} has no input but input size {}", c.dims[0])));
            }
            if m != output_pos && c.dims[3] != 1 {
                return Err(Error::DimensionMismatch(format!("core {m} is not the output core")));
            }
            if m + 1 < d && c.dims[2] != cores[m + 1].dims[1] {
                return Err(Error::DimensionMismatch(format!("bond {m} sizes disagree")));
            }
        }
        if cores[0].dims[1] != 1 || cores[d - 1].dims[2] != 1 {
            return Err(Error::DimensionMismatch("end bonds must have size 1".into()));
        }
        Ok(TensorTrain { cores, output_pos })
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn output_pos(&self) -> usize {
        self.output_pos
    }

    pub fn output_dim(&self) -> usize {
        self.cores[self.output_pos].dims[3]
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.cores.iter().filter(|c| c.has_input).map(|c| c.dims[0]).collect()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1].iter().map(|c| c.dims[2]).collect()
    }

    pub fn num_entries(&self) -> usize {
        self.cores.iter().map(Core::len).sum()
    }

    pub(crate) fn core_mut(&mut self, m: usize) -> &mut Core {
        &mut self.cores[m]
    }

    fn core_inputs<'a>(&self, inputs: &[&'a [f64]]) -> Result<Vec<&'a [f64]>> {
        let expected = self.cores.iter().filter(|c| c.has_input).count();
        if inputs.len() != expected {
            return Err(Error::DimensionMismatch(format!("expected {expected} inputs, got {}", inputs.len())));
        }
        let mut it = inputs.iter();
        self.cores
            .iter()
            .enumerate()
            .map(|(m, c)| {
                if !c.has_input {
                    return Ok(&UNIT[..]);
                }
                let x = *it.next().expect("counted above");
                if x.len() != c.dims[0] {
                    return Err(Error::DimensionMismatch(format!(
                        "input for core {m} has length {}, expected {}",
                        x.len(),
                        c.dims[0]
                    )));
                }
                Ok(x)
            })
            .collect()
    }

    fn sweep(&self, xs: &[&[f64]]) -> Sweep {
        let d = self.cores.len();
        let l = self.output_pos;
        let mut left = vec![vec![1.0]];
        for m in 0..l {
            let c = &self.cores[m];
            let [ni, rl, rr, _] = c.dims;
            let v = &left[m];
            let mut out = vec![0.0; rr];
            for x in 0..ni {
                let xv = xs[m][x];
                if xv == 0.0 {
                    continue;
                }
                for (a, &va) in v.iter().enumerate().take(rl) {
                    let s = xv * va;
                    if s == 0.0 {
                        continue;
                    }
                    let row = &c.data[c.index(x, a, 0, 0)..c.index(x, a, 0, 0) + rr];
                    for (o, &t) in out.iter_mut().zip(row) {
                        *o += s * t;
                    }
                }
            }
            left.push(out);
        }
        let mut right = vec![Vec::new(); d];
        right[d - 1] = vec![1.0];
        for m in (l + 1..d).rev() {
            let c = &self.cores[m];
            let [ni, rl, rr, _] = c.dims;
            let w = &right[m];
            let mut out = vec![0.0; rl];
            for x in 0..ni {
                let xv = xs[m][x];
                if xv == 0.0 {
                    continue;
                }
                for (a, o) in out.iter_mut().enumerate() {
                    let row = &c.data[c.index(x, a, 0, 0)..c.index(x, a, 0, 0) + rr];
                    *o += xv * row.iter().zip(w).map(|(t, wb)| t * wb).sum::<f64>();
                }
            }
            right[m - 1] = out;
        }
        let c = &self.cores[l];
        let [ni, rl, rr, no] = c.dims;
        let (v, w) = (&left[l], &right[l]);
        let mut output = vec![0.0; no];
        for x in 0..ni {
            let xv = xs[l][x];
            if xv == 0.0 {
                continue;
            }
            for a in 0..rl {
                let s = xv * v[a];
                if s == 0.0 {
                    continue;
                }
                for (b, &wb) in w.iter().enumerate().take(rr) {
                    let base = c.index(x, a, b, 0);
                    for (o, out) in output.iter_mut().enumerate() {
                        *out += s * c.data[base + o] * wb;
                    }
                }
            }
        }
        Sweep { left, right, output }
    }

    /// Model output for one input vector per core that has an input axis.
    pub fn evaluate(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let xs = self.core_inputs(inputs)?;
        Ok(self.sweep(&xs).output)
    }

    /// Evaluates and adds `∂⟨g_out, f⟩/∂core` to `grads` (one buffer per core).
    pub fn accumulate_gradient(&self, inputs: &[&[f64]], g_out: &[f64], grads: &mut [Vec<f64>]) -> Result<Vec<f64>> {
        let xs = self.core_inputs(inputs)?;
        if g_out.len() != self.output_dim() || grads.len() != self.cores.len() {
            return Err(Error::DimensionMismatch("gradient buffers do not match the network".into()));
        }
        let sw = self.sweep(&xs);
        let d = self.cores.len();
        let l = self.output_pos;

        let c = &self.cores[l];
        let [ni, rl, rr, no] = c.dims;
        let (v, w) = (&sw.left[l], &sw.right[l]);
        let mut dv = vec![0.0; rl];
        let mut dw = vec![0.0; rr];
        for x in 0..ni {
            let xv = xs[l][x];
            if xv == 0.0 {
                continue;
            }
            for a in 0..rl {
                for b in 0..rr {
                    let base = c.index(x, a, b, 0);
                    let mut t = 0.0;
                    for o in 0..no {
                        grads[l][base + o] += xv * v[a] * w[b] * g_out[o];
                        t += c.data[base + o] * g_out[o];
                    }
                    dv[a] += xv * t * w[b];
                    dw[b] += xv * t * v[a];
                }
            }
        }

        for m in (0..l).rev() {
            let c = &self.cores[m];
            let [ni, rl, rr, _] = c.dims;
            let vin = &sw.left[m];
            let mut next = vec![0.0; rl];
            for x in 0..ni {
                let xv = xs[m][x];
                if xv == 0.0 {
                    continue;
                }
                for a in 0..rl {
                    let base = c.index(x, a, 0, 0);
                    let mut t = 0.0;
                    for b in 0..rr {
                        grads[m][base + b] += xv * vin[a] * dv[b];
                        t += c.data[base + b] * dv[b];
                    }
                    next[a] += xv * t;
                }
            }
            dv = next;
        }

        for m in l + 1..d {
            let c = &self.cores[m];
            let [ni, rl, rr, _] = c.dims;
            let win = &sw.right[m];
            let mut next = vec![0.0; rr];
            for x in 0..ni {
                let xv = xs[m][x];
                if xv == 0.0 {
                    continue;
                }
                for a in 0..rl {
                    let base = c.index(x, a, 0, 0);
                    for b in 0..rr {
                        grads[m][base + b] += xv * dw[a] * win[b];
                        next[b] += xv * c.data[base + b] * dw[a];
                    }
                }
            }
            dw = next;
        }
        Ok(sw.output)
    }

    /// Zeroed gradient buffers shaped like the cores.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.cores.iter().map(|c| vec![0.0; c.len()]).collect()
    }
}

/// Shape of one core slot before it has data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreShape {
    pub has_input: bool,
    pub dims: [usize; 4],
}

/// Core shapes of a chain with `inputs.len()` cores, bond size `b`.
fn chain_shapes(inputs: &[Option<usize>], b: usize, output_pos: usize, n_out: usize) -> Vec<CoreShape> {
    let d = inputs.len();
    (0..d)
        .map(|m| CoreShape {
            has_input: inputs[m].is_some(),
            dims: [
                inputs[m].unwrap_or(1),
                if m == 0 { 1 } else { b },
                if m + 1 == d { 1 } else { b },
                if m == output_pos { n_out } else { 1 },
            ],
        })
        .collect()
}

/// Deterministic part of the initialization: identity-like end cores, scaled
/// identity slices towards the output core, an all-ones output core.
fn identity_init(shape: CoreShape, m: usize, d: usize, output_pos: usize) -> Core {
    let mut core = Core::zeros(shape.has_input, shape.dims);
    let [ni, rl, rr, _] = core.dims;
    if m == output_pos {
        core.data.iter_mut().for_each(|v| *v = 1.0);
        return core;
    }
    let scale = if m == 0 || m + 1 == d { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
    for x in 0..ni {
        if m < output_pos {
            for a in 0..rl {
                if x < rr {
                    let i = core.index(x, a, x, 0);
                    core.data[i] = scale;
                }
            }
        } else {
            for b in 0..rr {
                if x < rl {
                    let i = core.index(x, x, b, 0);
                    core.data[i] = scale;
                }
            }
        }
    }
    core
}

fn add_noise(core: &mut Core, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, INIT_NOISE).expect("positive deviation");
    core.data.iter_mut().for_each(|v| *v += normal.sample(rng));
}

fn initial_cores(shapes: &[CoreShape], output_pos: usize, seed: u64) -> Vec<Core> {
    let mut rng = rng::stream(seed, "ttn-init");
    let d = shapes.len();
    shapes
        .iter()
        .enumerate()
        .map(|(m, &s)| {
            let mut c = identity_init(s, m, d, output_pos);
            add_noise(&mut c, &mut rng);
            c
        })
        .collect()
}

/// Unconstrained tensor train with `d` inputs of size `n`, all bonds `b`.
pub fn plain_ttn(d: usize, n: usize, b: usize, n_out: usize, output_pos: usize, seed: u64) -> Result<TensorTrain> {
    if d == 0 || n == 0 || b == 0 || n_out == 0 || output_pos >= d {
        return Err(Error::invalid("plain tensor train needs d, n, b, n_out ≥ 1 and an output position inside the chain"));
    }
    let shapes = chain_shapes(&vec![Some(n); d], b, output_pos, n_out);
    TensorTrain::new(initial_cores(&shapes, output_pos, seed), output_pos)
}

/// Parameter vector view of a network used by the trainer.
pub trait TtnModel {
    fn network(&self) -> &TensorTrain;
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Maps per-core gradients to the parameter vector.
    fn pullback(&self, core_grads: &[Vec<f64>]) -> Vec<f64>;
    fn kind(&self) -> &'static str;
}

impl TtnModel for TensorTrain {
    fn network(&self) -> &TensorTrain {
        self
    }

    fn num_params(&self) -> usize {
        self.num_entries()
    }

    fn params(&self) -> Vec<f64> {
        self.cores.iter().flat_map(|c| c.data.iter().copied()).collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_entries() {
            return Err(Error::DimensionMismatch("parameter length mismatch".into()));
        }
        let mut off = 0;
        for c in &mut self.cores {
            let n = c.len();
            c.data.copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn pullback(&self, core_grads: &[Vec<f64>]) -> Vec<f64> {
        core_grads.concat()
    }

    fn kind(&self) -> &'static str {
        "plain"
    }
}

/// One group generator acting on the inputs, on every bond and on the output.
#[derive(Debug, Clone)]
pub struct TtnGenerator {
    pub label: String,
    pub input: RepMatrix,
    pub bond: RepMatrix,
    pub output: RepMatrix,
}

/// Bit-flip generator for parity classification of strings of length `d`.
/// Bonds carry the reverser; the output classes swap for odd `d` and stay
/// fixed for even `d`, matching how a flip changes the parity.
pub fn parity_generators(d: usize, b: usize) -> Result<Vec<TtnGenerator>> {
    let flip = standard_representation(StandardKind::Reverser, 2)?;
    let bond = if b == 1 { RepMatrix::identity(1) } else { standard_representation(StandardKind::Reverser, b)? };
    Ok(vec![TtnGenerator {
        label: "flip".into(),
        input: flip.clone(),
        bond,
        output: if d % 2 == 1 { flip } else { RepMatrix::identity(2) },
    }])
}

/// Real group action on a model's inputs and outputs.
#[derive(Debug, Clone)]
pub struct ModelAction {
    pub input: RMat,
    pub output: RMat,
}

fn real_part(m: &RepMatrix) -> RMat {
    m.matrix().map(|z| z.re)
}

/// Tensor train whose cores are linear combinations of invariant bases.
#[derive(Debug, Clone)]
pub struct InvariantTTN {
    network: TensorTrain,
    /// Distinct core bases; `core_basis[m]` indexes into this list.
    bases: Vec<RMat>,
    core_basis: Vec<usize>,
    coeffs: Vec<Vec<f64>>,
    generators: Vec<TtnGenerator>,
}

/// Dense core `basis · coeffs`.
pub fn assemble_core(basis: &RMat, coeffs: &[f64]) -> Result<Vec<f64>> {
    if coeffs.len() != basis.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis of dimension {}",
            coeffs.len(),
            basis.ncols()
        )));
    }
    let mut out = vec![0.0; basis.nrows()];
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(basis.column(j).iter()) {
            *o += c * b;
        }
    }
    Ok(out)
}

/// Coefficients of the orthogonal projection of `core` onto the basis span.
pub fn project_core(basis: &RMat, core: &[f64]) -> Vec<f64> {
    (0..basis.ncols()).map(|j| basis.column(j).iter().zip(core).map(|(b, c)| b * c).sum()).collect()
}

/// Real orthonormal basis of the invariant tensors for the given modes.
fn real_invariant_basis(modes: Vec<Mode>, generators: Vec<GeneratorRep>) -> Result<RMat> {
    let problem = InvariantProblem::new(modes, generators)?;
    let fb = invariant_basis(&problem, FirstGenerator::Auto)?;
    realify_basis(&expand_basis(&fb, DEFAULT_BUDGET_BYTES)?)
}

/// Invariant tensor train with `d` input cores and bond dimension `b`.
///
/// Bonds point towards the output core: the core nearer the chain end carries
/// the bond as a primal space, its neighbour as a dual space. Inputs are dual,
/// the output is primal.
pub fn build_invariant_ttn(
    d: usize,
    b: usize,
    generators: &[TtnGenerator],
    output_pos: usize,
    seed: u64,
) -> Result<InvariantTTN> {
    if d < 3 || output_pos == 0 || output_pos + 1 >= d {
        return Err(Error::invalid("invariant tensor train needs d ≥ 3 and an interior output position"));
    }
    let first = generators.first().ok_or_else(|| Error::invalid("at least one generator is required"))?;
    let (n, n_out) = (first.input.dim(), first.output.dim());
    if generators.iter().any(|g| g.input.dim() != n || g.output.dim() != n_out || g.bond.dim() != b) {
        return Err(Error::DimensionMismatch("generator sizes disagree with the network shape".into()));
    }
    let shapes = chain_shapes(&vec![Some(n); d], b, output_pos, n_out);
    let mut bases = Vec::new();
    let mut cache: HashMap<(Vec<usize>, Vec<bool>), usize> = HashMap::new();
    let mut core_basis = Vec::with_capacity(d);
    for (m, s) in shapes.iter().enumerate() {
        let [_, rl, rr, _] = s.dims;
        let mut dims = vec![n, rl, rr];
        let mut dual = vec![true, m <= output_pos, m >= output_pos];
        if m == output_pos {
            dims.push(n_out);
            dual.push(false);
        }
        let key = (dims.clone(), dual.clone());
        let idx = match cache.get(&key) {
            Some(&i) => i,
            None => {
                let bond = |size: usize, g: &TtnGenerator| if size == 1 { RepMatrix::identity(1) } else { g.bond.clone() };
                let gens = generators
                    .iter()
                    .map(|g| {
                        let mut per_mode = vec![g.input.clone(), bond(rl, g), bond(rr, g)];
                        if m == output_pos {
                            per_mode.push(g.output.clone());
                        }
                        GeneratorRep::new(g.label.clone(), per_mode)
                    })
                    .collect();
                let modes = dims.iter().zip(&dual).map(|(&dim, &dual)| Mode { dim, dual }).collect();
                let basis = real_invariant_basis(modes, gens)?;
                if basis.ncols() == 0 {
                    return Err(Error::EmptyBasis { core: m });
                }
                bases.push(basis);
                cache.insert(key, bases.len() - 1);
                bases.len() - 1
            }
        };
        core_basis.push(idx);
    }
    let init = initial_cores(&shapes, output_pos, seed);
    let coeffs: Vec<Vec<f64>> = init.iter().zip(&core_basis).map(|(c, &i)| project_core(&bases[i], &c.data)).collect();
    let mut cores = Vec::with_capacity(d);
    for (m, s) in shapes.iter().enumerate() {
        let mut c = Core::zeros(s.has_input, s.dims);
        c.data = assemble_core(&bases[core_basis[m]], &coeffs[m])?;
        cores.push(c);
    }
    Ok(InvariantTTN {
        network: TensorTrain::new(cores, output_pos)?,
        bases,
        core_basis,
        coeffs,
        generators: generators.to_vec(),
    })
}

impl InvariantTTN {
    pub fn core_basis(&self, m: usize) -> &RMat {
        &self.bases[self.core_basis[m]]
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn generators(&self) -> &[TtnGenerator] {
        &self.generators
    }

    /// Group action of each generator on inputs and output.
    pub fn actions(&self) -> Vec<ModelAction> {
        self.generators.iter().map(|g| ModelAction { input: real_part(&g.input), output: real_part(&g.output) }).collect()
    }
}

impl TtnModel for InvariantTTN {
    fn network(&self) -> &TensorTrain {
        &self.network
    }

    fn num_params(&self) -> usize {
        self.coeffs.iter().map(Vec::len).sum()
    }

    fn params(&self) -> Vec<f64> {
        self.coeffs.concat()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch("parameter length mismatch".into()));
        }
        let mut off = 0;
        for m in 0..self.coeffs.len() {
            let r = self.coeffs[m].len();
            self.coeffs[m].copy_from_slice(&params[off..off + r]);
            off += r;
            let data = assemble_core(&self.bases[self.core_basis[m]], &self.coeffs[m])?;
            self.network.core_mut(m).data = data;
        }
        Ok(())
    }

    fn pullback(&self, core_grads: &[Vec<f64>]) -> Vec<f64> {
        core_grads.iter().enumerate().flat_map(|(m, g)| project_core(self.core_basis(m), g)).collect()
    }

    fn kind(&self) -> &'static str {
        "invariant"
    }
}

/// Largest deviation `‖f(g·x) − ρ_out(g) f(x)‖₂` over random Gaussian inputs.
pub fn verify_model_invariance(tt: &TensorTrain, actions: &[ModelAction], trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let dims = tt.input_dims();
    let mut rng = rng::stream(seed, "invariance-check");
    let normal = Normal::new(0.0, 1.0).expect("unit deviation");
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let xs: Vec<Vec<f64>> = dims.iter().map(|&n| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let f = tt.evaluate(&refs)?;
        for a in actions {
            let gx: Vec<Vec<f64>> = xs
                .iter()
                .map(|x| {
                    if a.input.ncols() != x.len() {
                        return Err(Error::DimensionMismatch("action does not match input size".into()));
                    }
                    Ok((0..a.input.nrows()).map(|i| (0..x.len()).map(|j| a.input[(i, j)] * x[j]).sum()).collect())
                })
                .collect::<Result<_>>()?;
            let grefs: Vec<&[f64]> = gx.iter().map(Vec::as_slice).collect();
            let fg = tt.evaluate(&grefs)?;
            if a.output.ncols() != f.len() {
                return Err(Error::DimensionMismatch("action does not match output size".into()));
            }
            let dev = (0..f.len())
                .map(|i| {
                    let rf: f64 = (0..f.len()).map(|j| a.output[(i, j)] * f[j]).sum();
                    (fg[i] - rf).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

/// Base pairing used by the complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// A↔T, C↔G.
    #[default]
    WatsonCrick,
    /// A↔C, G↔T.
    Swapped,
}

impl Pairing {
    /// Symbol order of the one-hot encoding. Complementary symbols sit at
    /// mirrored positions, so the reverser matrix implements the complement.
    pub fn alphabet(self) -> [char; 4] {
        match self {
            Pairing::WatsonCrick => ['A', 'C', 'G', 'T'],
            Pairing::Swapped => ['A', 'G', 'T', 'C'],
        }
    }

    pub fn symbol_index(self, c: char) -> Result<usize> {
        self.alphabet().iter().position(|&a| a == c).ok_or(Error::InvalidSymbol(c))
    }

    pub fn complement(self, c: char) -> Result<char> {
        Ok(self.alphabet()[3 - self.symbol_index(c)?])
    }
}

/// Reverse the strand and complement every symbol.
pub fn reverse_complement(strand: &str, pairing: Pairing) -> Result<String> {
    strand.chars().rev().map(|c| pairing.complement(c)).collect()
}

/// Tensor train invariant under reverse complement of its input strand.
///
/// For a strand of length `d` there are `⌊d/2⌋` free cores on the left, a
/// middle output core (with an input only for odd `d`) and mirrored cores on
/// the right. The core at mirrored position equals the left core with its bond
/// axes transposed and reversers applied to every axis.
#[derive(Debug, Clone)]
pub struct RCTensorTrain {
    network: TensorTrain,
    length: usize,
    bond: usize,
    pairing: Pairing,
    output_basis: RMat,
    output_coeffs: Vec<f64>,
}

const RC_ALPHABET: usize = 4;
const RC_OUTPUTS: usize = 2;

/// `σ(i) = n − 1 − i`, the reverser as an index map.
#[inline]
fn rev(i: usize, n: usize) -> usize {
    n - 1 - i
}

/// Mirror of a left core: `C'[x][l][r] = C[σx][σr][σl]`.
fn mirror_core(c: &Core) -> Core {
    let [ni, rl, rr, _] = c.dims;
    let mut out = Core::zeros(c.has_input, [ni, rr, rl, 1]);
    for x in 0..ni {
        for a in 0..rr {
            for b in 0..rl {
                let dst = out.index(x, a, b, 0);
                out.data[dst] = c.data[c.index(rev(x, ni), rev(b, rl), rev(a, rr), 0)];
            }
        }
    }
    out
}

/// Adjoint of [`mirror_core`] applied to a gradient of the mirrored core.
fn mirror_adjoint(left: &Core, g_mirror: &[f64], acc: &mut [f64]) {
    let [ni, rl, rr, _] = left.dims;
    for x in 0..ni {
        for a in 0..rr {
            for b in 0..rl {
                let src = (x * rr + a) * rl + b;
                acc[left.index(rev(x, ni), rev(b, rl), rev(a, rr), 0)] += g_mirror[src];
            }
        }
    }
}

/// Averages an output core with its image `C[σx][σr][σl][o]`. Applied after
/// assembly so the constraint holds bitwise; self-adjoint, so it also maps
/// gradients back.
fn symmetrize_output(c: &Core, data: &[f64]) -> Vec<f64> {
    let [ni, rl, rr, no] = c.dims;
    let mut out = vec![0.0; data.len()];
    for x in 0..ni {
        for l in 0..rl {
            for r in 0..rr {
                for o in 0..no {
                    let a = data[c.index(x, l, r, o)];
                    let b = data[c.index(rev(x, ni), rev(r, rr), rev(l, rl), o)];
                    out[c.index(x, l, r, o)] = 0.5 * (a + b);
                }
            }
        }
    }
    out
}

/// Permutation on `b×b` bond pairs: `(Pc)[(l, r)] = c[(σr, σl)]`. The map is
/// an involution, so it equals its own inverse.
fn bond_transpose_reverser(b: usize) -> Result<RepMatrix> {
    let mut perm = vec![0; b * b];
    for l in 0..b {
        for r in 0..b {
            perm[rev(r, b) * b + rev(l, b)] = l * b + r;
        }
    }
    RepMatrix::permutation(&perm)
}

/// Reverse-complement invariant tensor train for strands of `length ≥ 2`.
pub fn build_rc_ttn(length: usize, b: usize, pairing: Pairing, seed: u64) -> Result<RCTensorTrain> {
    if length < 2 || b < 1 {
        return Err(Error::invalid("RC tensor train needs length ≥ 2 and bond dimension ≥ 1"));
    }
    let k = length / 2;
    let odd = length % 2 == 1;
    let mut inputs = vec![Some(RC_ALPHABET); 2 * k + 1];
    if !odd {
        inputs[k] = None;
    }
    let shapes = chain_shapes(&inputs, b, k, RC_OUTPUTS);

    let n_mid = if odd { RC_ALPHABET } else { 1 };
    let mid_input = if odd {
        standard_representation(StandardKind::Reverser, RC_ALPHABET)?
    } else {
        RepMatrix::identity(1)
    };
    let generator = GeneratorRep::new("rc", vec![mid_input, bond_transpose_reverser(b)?, RepMatrix::identity(RC_OUTPUTS)]);
    let modes = vec![
        Mode { dim: n_mid, dual: true },
        Mode { dim: b * b, dual: true },
        Mode { dim: RC_OUTPUTS, dual: false },
    ];
    let output_basis = real_invariant_basis(modes, vec![generator])?;
    if output_basis.ncols() == 0 {
        return Err(Error::EmptyBasis { core: k });
    }

    let init = initial_cores(&shapes, k, seed);
    let output_coeffs = project_core(&output_basis, &init[k].data);
    let mut cores = init;
    let assembled = assemble_core(&output_basis, &output_coeffs)?;
    cores[k].data = symmetrize_output(&cores[k], &assembled);
    for m in 0..k {
        cores[2 * k - m] = mirror_core(&cores[m]);
    }
    Ok(RCTensorTrain {
        network: TensorTrain::new(cores, k)?,
        length,
        bond: b,
        pairing,
        output_basis,
        output_coeffs,
    })
}

impl RCTensorTrain {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn bond_dim(&self) -> usize {
        self.bond
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    /// Number of free (non-derived) cores, including the output core.
    pub fn num_free_cores(&self) -> usize {
        self.length / 2 + 1
    }

    pub fn output_basis(&self) -> &RMat {
        &self.output_basis
    }

    /// One-hot inputs for a strand.
    pub fn encode(&self, strand: &str) -> Result<Vec<Vec<f64>>> {
        if strand.chars().count() != self.length {
            return Err(Error::DimensionMismatch(format!("strand length must be {}", self.length)));
        }
        strand
            .chars()
            .map(|c| {
                let mut v = vec![0.0; RC_ALPHABET];
                v[self.pairing.symbol_index(c)?] = 1.0;
                Ok(v)
            })
            .collect()
    }

    pub fn evaluate_strand(&self, strand: &str) -> Result<Vec<f64>> {
        let xs = self.encode(strand)?;
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        self.network.evaluate(&refs)
    }

    /// Residual of the output-core constraint `C[x][l][r][o] = C[σx][σr][σl][o]`.
    pub fn output_constraint_residual(&self) -> f64 {
        let c = &self.network.cores()[self.network.output_pos()];
        let [ni, rl, rr, no] = c.dims;
        let mut worst: f64 = 0.0;
        for x in 0..ni {
            for l in 0..rl {
                for r in 0..rr {
                    for o in 0..no {
                        let a = c.data[c.index(x, l, r, o)];
                        let b = c.data[c.index(rev(x, ni), rev(r, rr), rev(l, rl), o)];
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest `‖f(s) − f(rc(s))‖∞` over random strands.
    pub fn rc_deviation(&self, trials: usize, seed: u64) -> Result<f64> {
        let mut rng = rng::stream(seed, "rc-strands");
        let alphabet = self.pairing.alphabet();
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let s: String = (0..self.length).map(|_| alphabet[rng.random_range(0..RC_ALPHABET)]).collect();
            let f = self.evaluate_strand(&s)?;
            let g = self.evaluate_strand(&reverse_complement(&s, self.pairing)?)?;
            worst = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        Ok(worst)
    }

    fn free_left(&self) -> usize {
        self.length / 2
    }
}

impl TtnModel for RCTensorTrain {
    fn network(&self) -> &TensorTrain {
        &self.network
    }

    fn num_params(&self) -> usize {
        let cores = self.network.cores();
        cores[..self.free_left()].iter().map(Core::len).sum::<usize>() + self.output_coeffs.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.network.cores()[..self.free_left()].iter().flat_map(|c| c.data.iter().copied()).collect();
        p.extend_from_slice(&self.output_coeffs);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch("parameter length mismatch".into()));
        }
        let k = self.free_left();
        let mut off = 0;
        for m in 0..k {
            let core = self.network.core_mut(m);
            let n = core.len();
            core.data.copy_from_slice(&params[off..off + n]);
            off += n;
            let mirrored = mirror_core(core);
            *self.network.core_mut(2 * k - m) = mirrored;
        }
        self.output_coeffs.copy_from_slice(&params[off..]);
        let assembled = assemble_core(&self.output_basis, &self.output_coeffs)?;
        let core = self.network.core_mut(k);
        core.data = symmetrize_output(core, &assembled);
        Ok(())
    }

    fn pullback(&self, core_grads: &[Vec<f64>]) -> Vec<f64> {
        let k = self.free_left();
        let cores = self.network.cores();
        let mut out = Vec::with_capacity(self.num_params());
        for m in 0..k {
            let mut g = core_grads[m].clone();
            mirror_adjoint(&cores[m], &core_grads[2 * k - m], &mut g);
            out.extend(g);
        }
        let sym = symmetrize_output(&cores[k], &core_grads[k]);
        out.extend(project_core(&self.output_basis, &sym));
        out
    }

    fn kind(&self) -> &'static str {
        "rc"
    }
}

/// Serialized model. `cores` always holds the assembled dense cores, so any
/// checkpoint can be evaluated as a plain tensor train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub input_dims: Vec<usize>,
    pub bond_dims: Vec<usize>,
    pub output_pos: usize,
    pub output_dim: usize,
    pub cores: Vec<Core>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn from_model<M: TtnModel + ?Sized>(model: &M, group: Option<String>) -> Self {
        let tt = model.network();
        Checkpoint {
            version: Self::VERSION,
            kind: model.kind().to_string(),
            input_dims: tt.input_dims(),
            bond_dims: tt.bond_dims(),
            output_pos: tt.output_pos(),
            output_dim: tt.output_dim(),
            cores: tt.cores().to_vec(),
            coefficients: (model.kind() != "plain").then(|| model.params()),
            group,
        }
    }

    pub fn network(&self) -> Result<TensorTrain> {
        if self.version != Self::VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {}", self.version)));
        }
        TensorTrain::new(self.cores.clone(), self.output_pos)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|source| Error::Json { path: path.display().to_string(), source })?;
        std::fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.display().to_string(), source })
    }
}
