//! Training tensor-train classifiers: one-hot features, softmax cross-entropy,
//! Adam and Nesterov SGD, parity data and AUROC.

use std::path::Path;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor_train::{
    build_invariant_ttn, parity_generators, plain_ttn, InvariantTTN, Pairing, TensorTrain, TtnModel,
};

/// Probability clamp applied before the logarithm.
pub const PROB_CLAMP: f64 = 1e-12;
/// Largest string length for which parity data is enumerated.
pub const MAX_PARITY_LENGTH: usize = 24;

/// One-hot encoding over a fixed alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMap {
    alphabet: Vec<char>,
}

impl FeatureMap {
    pub fn new(alphabet: Vec<char>) -> Self {
        FeatureMap { alphabet }
    }

    /// `0 ↦ e₁`, `1 ↦ e₂`.
    pub fn binary() -> Self {
        Self::new(vec!['0', '1'])
    }

    pub fn dna(pairing: Pairing) -> Self {
        Self::new(pairing.alphabet().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.alphabet.len()
    }

    pub fn encode_symbol(&self, c: char) -> Result<Vec<f64>> {
        let i = self.alphabet.iter().position(|&a| a == c).ok_or(Error::InvalidSymbol(c))?;
        let mut v = vec![0.0; self.dim()];
        v[i] = 1.0;
        Ok(v)
    }

    pub fn encode(&self, s: &str) -> Result<Vec<Vec<f64>>> {
        s.chars().map(|c| self.encode_symbol(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Look-ahead momentum: `v ← μv − ηg`, `θ ← θ + μv − ηg`.
    SgdNesterov { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn nesterov() -> Self {
        Optimizer::SgdNesterov { momentum: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub l2_coeff: f64,
    pub seed: u64,
    /// Restore the parameters of the epoch with the best evaluation AUROC.
    pub keep_best: bool,
}

/// Keras defaults for Adam and `fit`.
impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            l2_coeff: 0.0,
            seed: 0,
            keep_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.l2_coeff.is_nan() || self.l2_coeff < 0.0 {
            return Err(Error::invalid("l2 coefficient must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub inputs: Vec<String>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn encode(&self, fm: &FeatureMap) -> Result<Encoded> {
        if self.labels.iter().any(|&y| y > 1) || self.labels.len() != self.inputs.len() {
            return Err(Error::invalid("labels must be 0/1, one per input"));
        }
        Ok(Encoded {
            inputs: self.inputs.iter().map(|s| fm.encode(s)).collect::<Result<_>>()?,
            labels: self.labels.iter().map(|&y| y as usize).collect(),
        })
    }
}

/// Dataset after feature mapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Encoded {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn bitstring(v: usize, d: usize) -> String {
    (0..d).map(|i| if v >> (d - 1 - i) & 1 == 1 { '1' } else { '0' }).collect()
}

fn parity(s: &str) -> u8 {
    (s.chars().filter(|&c| c == '1').count() % 2) as u8
}

fn flip(s: &str) -> String {
    s.chars().map(|c| if c == '1' { '0' } else { '1' }).collect()
}

/// Random `⌈fraction·2ᵈ⌉` distinct bitstrings for training, the rest for
/// testing, labelled by parity. With `augment`, the bit-flipped copy of every
/// training string is appended with its own parity as label.
pub fn parity_dataset(d: usize, fraction: f64, seed: u64, augment: bool) -> Result<(Dataset, Dataset)> {
    if d == 0 || d > MAX_PARITY_LENGTH {
        return Err(Error::invalid(format!("parity length must be in 1..={MAX_PARITY_LENGTH}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("fraction must lie strictly between 0 and 1"));
    }
    let total = 1usize << d;
    let k = ((fraction * total as f64).ceil() as usize).min(total);
    let mut rng = rng::stream(seed, "parity-split");
    let mut chosen = vec![false; total];
    let mut picked: Vec<usize> = index::sample(&mut rng, total, k).into_vec();
    picked.sort_unstable();
    for &i in &picked {
        chosen[i] = true;
    }
    let mut train = Dataset::default();
    for &i in &picked {
        let s = bitstring(i, d);
        train.labels.push(parity(&s));
        train.inputs.push(s);
    }
    if augment {
        for i in 0..k {
            let f = flip(&train.inputs[i]);
            train.labels.push(parity(&f));
            train.inputs.push(f);
        }
    }
    let mut test = Dataset::default();
    for i in (0..total).filter(|&i| !chosen[i]) {
        let s = bitstring(i, d);
        test.labels.push(parity(&s));
        test.inputs.push(s);
    }
    Ok((train, test))
}

fn softmax(f: &[f64]) -> Vec<f64> {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = f.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn refs(x: &[Vec<f64>]) -> Vec<&[f64]> {
    x.iter().map(Vec::as_slice).collect()
}

fn l2_norm_sq(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum()
}

/// Mean softmax cross-entropy plus `l2·‖θ‖²`, and the raw outputs.
pub fn forward_loss<M: TtnModel + ?Sized>(
    model: &M,
    inputs: &[Vec<Vec<f64>>],
    labels: &[usize],
    l2: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::invalid("batch must be non-empty with one label per input"));
    }
    let mut total = 0.0;
    let mut outputs = Vec::with_capacity(inputs.len());
    for (x, &y) in inputs.iter().zip(labels) {
        let f = model.network().evaluate(&refs(x))?;
        let p = softmax(&f);
        total -= p[y].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
        outputs.push(f);
    }
    let l2_term = if l2 > 0.0 { l2 * l2_norm_sq(&model.params()) } else { 0.0 };
    Ok((total / inputs.len() as f64 + l2_term, outputs))
}

/// Gradient of [`forward_loss`] with respect to the model parameters.
pub fn gradient<M: TtnModel + ?Sized>(model: &M, inputs: &[Vec<Vec<f64>>], labels: &[usize], l2: f64) -> Result<Vec<f64>> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::invalid("batch must be non-empty with one label per input"));
    }
    let tt = model.network();
    let mut grads = tt.zero_grads();
    let scale = 1.0 / inputs.len() as f64;
    for (x, &y) in inputs.iter().zip(labels) {
        let xr = refs(x);
        let p = softmax(&tt.evaluate(&xr)?);
        // Inside the clamp band the derivative is p − e_y; outside it the loss is flat.
        if p[y] <= PROB_CLAMP || p[y] >= 1.0 - PROB_CLAMP {
            continue;
        }
        let g: Vec<f64> = p.iter().enumerate().map(|(o, &po)| scale * (po - f64::from(u8::from(o == y)))).collect();
        tt.accumulate_gradient(&xr, &g, &mut grads)?;
    }
    let mut out = model.pullback(&grads);
    if l2 > 0.0 {
        for (g, t) in out.iter_mut().zip(model.params()) {
            *g += 2.0 * l2 * t;
        }
    }
    Ok(out)
}

pub fn count_params<M: TtnModel + ?Sized>(model: &M) -> usize {
    model.num_params()
}

/// Area under the ROC curve by the Mann–Whitney statistic with midranks.
pub fn auroc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64 * mid;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn accuracy(outputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let hits = outputs
        .iter()
        .zip(labels)
        .filter(|(f, &y)| {
            let pred = usize::from(f[1] > f[0]);
            pred == y
        })
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Class-1 probability, the score used for AUROC.
fn positive_scores(outputs: &[Vec<f64>]) -> Vec<f64> {
    outputs.iter().map(|f| softmax(f)[1]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub initial_loss: f64,
    pub history: Vec<EpochMetrics>,
    /// Epoch whose parameters the model holds after training.
    pub kept_epoch: usize,
    /// Final train loss stayed within 5% of the initial loss.
    pub failed: bool,
}

impl TrainRun {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.history.iter().find(|m| m.epoch == self.kept_epoch).unwrap_or_else(|| self.history.last().expect("epochs ≥ 1"))
    }
}

enum OptState {
    Nesterov { v: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptState {
    fn new(opt: Optimizer, n: usize) -> Self {
        match opt {
            Optimizer::SgdNesterov { .. } => OptState::Nesterov { v: vec![0.0; n] },
            Optimizer::Adam { .. } => OptState::Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 },
        }
    }

    fn step(&mut self, opt: Optimizer, lr: f64, theta: &mut [f64], g: &[f64]) {
        match (self, opt) {
            (OptState::Nesterov { v }, Optimizer::SgdNesterov { momentum }) => {
                for i in 0..theta.len() {
                    v[i] = momentum * v[i] - lr * g[i];
                    theta[i] += momentum * v[i] - lr * g[i];
                }
            }
            (OptState::Adam { m, v, t }, Optimizer::Adam { beta1, beta2, eps }) => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..theta.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
            _ => unreachable!("optimizer state matches its configuration"),
        }
    }
}

/// Minibatch training. Deterministic for a fixed `cfg.seed`.
pub fn train<M: TtnModel + ?Sized>(model: &mut M, train: &Encoded, eval: &Encoded, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut theta = model.params();
    let mut state = OptState::new(cfg.optimizer, theta.len());
    let mut rng = rng::stream(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (initial_loss, _) = forward_loss(model, &train.inputs, &train.labels, cfg.l2_coeff)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<Vec<f64>>> = chunk.iter().map(|&i| train.inputs[i].clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let g = gradient(model, &xs, &ys, cfg.l2_coeff)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            state.step(cfg.optimizer, cfg.learning_rate, &mut theta, &g);
            model.set_params(&theta)?;
        }
        let (train_loss, train_out) = forward_loss(model, &train.inputs, &train.labels, cfg.l2_coeff)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (test_acc, test_auroc) = if eval.is_empty() {
            (f64::NAN, None)
        } else {
            let outs: Vec<Vec<f64>> =
                eval.inputs.iter().map(|x| model.network().evaluate(&refs(x))).collect::<Result<_>>()?;
            (accuracy(&outs, &eval.labels), auroc(&positive_scores(&outs), &eval.labels).ok())
        };
        if cfg.keep_best {
            let score = test_auroc.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, epoch, theta.clone()));
            }
        }
        history.push(EpochMetrics { epoch, train_loss, train_acc: accuracy(&train_out, &train.labels), test_acc, test_auroc });
    }
    let mut kept_epoch = cfg.epochs;
    if let Some((_, epoch, params)) = best {
        model.set_params(&params)?;
        kept_epoch = epoch;
    }
    let final_loss = history.last().map_or(initial_loss, |m| m.train_loss);
    Ok(TrainRun { initial_loss, history, kept_epoch, failed: final_loss >= 0.95 * initial_loss })
}

/// Double-double scalar: an unevaluated sum `hi + lo`.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Self {
        Dd(x, 0.0)
    }

    fn renorm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Dd(hi, e - (hi - s))
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.0 + o.0;
        let bb = s - self.0;
        let err = (self.0 - (s - bb)) + (o.0 - bb);
        Dd::renorm(s, err + self.1 + o.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let err = self.0.mul_add(o.0, -p);
        Dd::renorm(p, err + self.0 * o.1 + self.1 * o.0)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

/// Outputs of a network with cores `base + t·dir`, contracted in
/// double-double for one-hot inputs.
fn outputs_dd(base: &TensorTrain, dir: &TensorTrain, t: f64, x: &[Vec<f64>]) -> Result<Vec<Dd>> {
    let hot: Vec<usize> = x
        .iter()
        .map(|v| v.iter().position(|&e| e == 1.0).ok_or_else(|| Error::invalid("finite differences need one-hot inputs")))
        .collect::<Result<_>>()?;
    let l = base.output_pos();
    let mut inputs = hot.iter();
    let entry = |m: usize, i: usize| Dd::from(base.cores()[m].data[i]).add(Dd::from(t).mul(Dd::from(dir.cores()[m].data[i])));
    let no = base.output_dim();
    let mut sel = Vec::new();
    for c in base.cores() {
        sel.push(if c.has_input { *inputs.next().unwrap() } else { 0 });
    }
    Ok((0..no)
        .map(|o| {
            let mut acc = vec![Dd::from(1.0)];
            for (m, c) in base.cores().iter().enumerate() {
                let [_, rl, rr, _] = c.dims;
                let oo = if m == l { o } else { 0 };
                let mut next = vec![Dd::from(0.0); rr];
                for a in 0..rl {
                    for b in 0..rr {
                        next[b] = next[b].add(acc[a].mul(entry(m, c.index(sel[m], a, b, oo))));
                    }
                }
                acc = next;
            }
            acc[0]
        })
        .collect())
}

/// Central differences with step `h`, accurate to well below the f64 loss
/// roundoff. The parameter-to-core map is linear for every model kind, so
/// perturbed cores are `base ± h·dir_i` with `dir_i` the image of `e_i`.
pub fn finite_difference_gradient<M: TtnModel + Clone>(model: &M, data: &Encoded, l2: f64, h: f64) -> Result<Vec<f64>> {
    if data.is_empty() || model.network().output_dim() != 2 {
        return Err(Error::invalid("finite differences need a non-empty batch and two output classes"));
    }
    let p = model.params();
    let n = data.len() as f64;
    (0..p.len())
        .map(|i| {
            let mut unit = vec![0.0; p.len()];
            unit[i] = 1.0;
            let mut dir = model.clone();
            dir.set_params(&unit)?;
            let mut diff = 0.0;
            for (x, &y) in data.inputs.iter().zip(&data.labels) {
                let margin = |t: f64| {
                    let f = outputs_dd(model.network(), dir.network(), t, x)?;
                    Ok::<_, Error>(f[1 - y].add(f[y].neg()))
                };
                let (plus, minus) = (margin(h)?, margin(-h)?);
                let step = plus.add(minus.neg()).value();
                let sig = 1.0 / (1.0 + (-minus.value()).exp());
                diff += (sig * step.exp_m1()).ln_1p();
            }
            Ok(diff / n / (2.0 * h) + 2.0 * l2 * p[i])
        })
        .collect()
}

/// Largest relative deviation between the analytic gradient and central
/// differences with step `1e-6`, over coordinates with `|g| > 1e-8`.
pub fn gradient_check<M: TtnModel + Clone>(model: &M, data: &Encoded, l2: f64) -> Result<f64> {
    let g = gradient(model, &data.inputs, &data.labels, l2)?;
    let fd = finite_difference_gradient(model, data, l2, 1e-6)?;
    Ok(g.iter()
        .zip(&fd)
        .filter(|(a, _)| a.abs() > 1e-8)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParityMode {
    Plain,
    Invariant,
    /// Plain model trained on the flip-augmented set.
    Augmented,
}

impl ParityMode {
    pub fn name(self) -> &'static str {
        match self {
            ParityMode::Plain => "plain",
            ParityMode::Invariant => "invariant",
            ParityMode::Augmented => "augmented",
        }
    }
}

/// Either kind of parity model.
pub enum ParityModel {
    Plain(TensorTrain),
    Invariant(InvariantTTN),
}

impl ParityModel {
    pub fn build(mode: ParityMode, d: usize, b: usize, seed: u64) -> Result<Self> {
        Ok(match mode {
            ParityMode::Invariant => ParityModel::Invariant(build_invariant_ttn(d, b, &parity_generators(d, b)?, d / 2, seed)?),
            _ => ParityModel::Plain(plain_ttn(d, 2, b, 2, d / 2, seed)?),
        })
    }

    pub fn as_model(&self) -> &dyn TtnModel {
        match self {
            ParityModel::Plain(m) => m,
            ParityModel::Invariant(m) => m,
        }
    }

    pub fn as_model_mut(&mut self) -> &mut dyn TtnModel {
        match self {
            ParityModel::Plain(m) => m,
            ParityModel::Invariant(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParitySetup {
    pub length: usize,
    pub bond: usize,
    pub fraction: f64,
    pub mode: ParityMode,
    pub config: TrainConfig,
}

/// One seeded parity run: data split, model initialization and shuffling all
/// derive from `config.seed`.
pub fn run_parity(setup: &ParitySetup) -> Result<(ParityModel, TrainRun)> {
    let seed = setup.config.seed;
    let (train_set, test_set) =
        parity_dataset(setup.length, setup.fraction, seed, setup.mode == ParityMode::Augmented)?;
    let fm = FeatureMap::binary();
    let mut model = ParityModel::build(setup.mode, setup.length, setup.bond, seed)?;
    let run = train(model.as_model_mut(), &train_set.encode(&fm)?, &test_set.encode(&fm)?, &setup.config)?;
    Ok((model, run))
}

/// Writes `run,seed,epoch,train_loss,train_acc,test_acc` rows.
pub fn write_metrics_csv(path: &Path, runs: &[(usize, u64, TrainRun)]) -> Result<()> {
    let io_err = |source| Error::Io { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run", "seed", "epoch", "train_loss", "train_acc", "test_acc"])?;
    for (run, seed, tr) in runs {
        for m in &tr.history {
            w.write_record([
                run.to_string(),
                seed.to_string(),
                m.epoch.to_string(),
                format!("{:.10}", m.train_loss),
                format!("{:.6}", m.train_acc),
                format!("{:.6}", m.test_acc),
            ])
            ?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_train::{build_rc_ttn, verify_model_invariance};
    use rand::Rng;

    fn random_params<M: TtnModel + ?Sized>(m: &mut M, seed: u64, scale: f64) {
        let mut rng = rng::stream(seed, "test-params");
        let p: Vec<f64> = (0..m.num_params()).map(|_| rng.random_range(-scale..scale)).collect();
        m.set_params(&p).unwrap();
    }

    fn small_parity(d: usize) -> Encoded {
        let (tr, _) = parity_dataset(d, 0.3, 1, false).unwrap();
        tr.encode(&FeatureMap::binary()).unwrap()
    }

    #[test]
    fn parity_split() {
        let (tr, te) = parity_dataset(3, 0.5, 0, false).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 4));
        for (s, &y) in tr.inputs.iter().chain(&te.inputs).zip(tr.labels.iter().chain(&te.labels)) {
            assert_eq!(y as usize, s.chars().filter(|&c| c == '1').count() % 2);
        }
        let (tr, _) = parity_dataset(11, 0.05, 0, false).unwrap();
        assert_eq!(tr.len(), 103);
        let (tr7, te7) = parity_dataset(7, 0.05, 3, false).unwrap();
        assert_eq!((tr7.len(), te7.len()), (7, 121));
        assert!(parity_dataset(3, 1.0, 0, false).is_err());
        assert!(parity_dataset(30, 0.5, 0, false).is_err());
    }

    #[test]
    fn augmentation_labels_follow_the_output_rep() {
        for d in [5, 6] {
            let (tr, _) = parity_dataset(d, 0.2, 2, true).unwrap();
            let k = tr.len() / 2;
            for i in 0..k {
                assert_eq!(tr.inputs[k + i], flip(&tr.inputs[i]));
                let expected = if d % 2 == 1 { 1 - tr.labels[i] } else { tr.labels[i] };
                assert_eq!(tr.labels[k + i], expected);
            }
        }
    }

    #[test]
    fn loss_values() {
        // Zero output core: every output is 0 and each example costs ln 2.
        let mut m = plain_ttn(3, 2, 2, 2, 1, 0).unwrap();
        let first = m.network().cores()[0].len();
        let out_end = first + m.network().cores()[1].len();
        let mut p = m.params();
        p[first..out_end].iter_mut().for_each(|v| *v = 0.0);
        m.set_params(&p).unwrap();
        let data = small_parity(3);
        let (loss, _) = forward_loss(&m, &data.inputs, &data.labels, 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        // With every input present under both labels the data term cancels.
        let inputs: Vec<_> = data.inputs.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        let labels: Vec<usize> = data.inputs.iter().flat_map(|_| [0, 1]).collect();
        let g = gradient(&m, &inputs, &labels, 0.3).unwrap();
        for (gi, ti) in g.iter().zip(m.params()) {
            assert!((gi - 2.0 * 0.3 * ti).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_logits_leave_only_the_l2_term() {
        let cores = (0..3)
            .map(|pos| {
                let mut c = crate::tensor_train::Core::zeros(true, [2, 1, 1, if pos == 1 { 2 } else { 1 }]);
                if pos == 1 {
                    c.data = vec![20.0, -20.0, 20.0, -20.0];
                } else {
                    c.data = vec![1.0, 1.0];
                }
                c
            })
            .collect();
        let tt = TensorTrain::new(cores, 1).unwrap();
        let x = FeatureMap::binary().encode("010").unwrap();
        let l2 = 1e-3;
        let (loss, _) = forward_loss(&tt, &[x], &[0], l2).unwrap();
        let reg = l2 * l2_norm_sq(&tt.params());
        assert!((loss - reg).abs() < 1e-11);
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let mut m = plain_ttn(4, 2, 2, 2, 1, 0).unwrap();
        random_params(&mut m, 4, 0.8);
        let data = small_parity(4);
        let (loss, _) = forward_loss(&m, &data.inputs, &data.labels, 0.01).unwrap();
        // Independent recomputation through the dense contraction of each example.
        let cores = m.network().cores();
        let mut total = 0.0;
        for (x, &y) in data.inputs.iter().zip(&data.labels) {
            let idx: Vec<usize> = x.iter().map(|v| v.iter().position(|&e| e == 1.0).unwrap()).collect();
            let mut f = [0.0f64; 2];
            for (o, fo) in f.iter_mut().enumerate() {
                let mut acc = vec![1.0];
                for (pos, c) in cores.iter().enumerate() {
                    let [_, rl, rr, _] = c.dims;
                    let oo = if pos == 1 { o } else { 0 };
                    let mut next = vec![0.0; rr];
                    for a in 0..rl {
                        for b in 0..rr {
                            next[b] += acc[a] * c.data[c.index(idx[pos], a, b, oo)];
                        }
                    }
                    acc = next;
                }
                *fo = acc[0];
            }
            let lse = (f[0].exp() + f[1].exp()).ln();
            total += lse - f[y];
        }
        let expected = total / data.len() as f64 + 0.01 * m.params().iter().map(|v| v * v).sum::<f64>();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut plain = plain_ttn(5, 2, 2, 2, 2, seed).unwrap();
            random_params(&mut plain, seed, 0.7);
            assert!(gradient_check(&plain, &small_parity(5), 1e-3).unwrap() <= 1e-5);

            let mut inv = build_invariant_ttn(7, 4, &parity_generators(7, 4).unwrap(), 3, seed).unwrap();
            random_params(&mut inv, seed, 0.5);
            assert!(gradient_check(&inv, &small_parity(7), 1e-3).unwrap() <= 1e-5);

            let mut rc = build_rc_ttn(5, 2, Pairing::WatsonCrick, seed).unwrap();
            random_params(&mut rc, seed, 0.7);
            let fm = FeatureMap::dna(Pairing::WatsonCrick);
            let data = Dataset {
                inputs: vec!["ACGTA".into(), "GGTCA".into(), "TTACG".into(), "CAGTT".into()],
                labels: vec![1, 0, 1, 0],
            };
            assert!(gradient_check(&rc, &data.encode(&fm).unwrap(), 1e-3).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn duplicated_batch_gives_the_same_gradient() {
        let mut m = plain_ttn(4, 2, 3, 2, 2, 0).unwrap();
        random_params(&mut m, 1, 0.5);
        let x = FeatureMap::binary().encode("0110").unwrap();
        let once = gradient(&m, std::slice::from_ref(&x), &[1], 0.0).unwrap();
        let twice = gradient(&m, &[x.clone(), x], &[1, 1], 0.0).unwrap();
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + a.abs())));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn tiny_learning_rate_leaves_parameters_unchanged() {
        let setup = ParitySetup {
            length: 5,
            bond: 2,
            fraction: 0.3,
            mode: ParityMode::Plain,
            config: TrainConfig { epochs: 2, learning_rate: 1e-300, ..TrainConfig::default() },
        };
        let before = ParityModel::build(ParityMode::Plain, 5, 2, 0).unwrap().as_model().params();
        let (model, _) = run_parity(&setup).unwrap();
        assert_eq!(model.as_model().params(), before);
    }

    #[test]
    fn training_is_deterministic_and_keeps_invariance() {
        let setup = ParitySetup {
            length: 7,
            bond: 4,
            fraction: 0.1,
            mode: ParityMode::Invariant,
            config: TrainConfig { epochs: 100, batch_size: 8, seed: 5, ..TrainConfig::default() },
        };
        let (model, a) = run_parity(&setup).unwrap();
        let (_, b) = run_parity(&setup).unwrap();
        assert_eq!(a, b);
        let ParityModel::Invariant(inv) = &model else { unreachable!() };
        assert!(verify_model_invariance(inv.network(), &inv.actions(), 5, 0).unwrap() <= 1e-6);
        assert!(a.history.last().unwrap().train_loss < a.initial_loss);
    }

    #[test]
    fn nesterov_and_keep_best() {
        let mut rc = build_rc_ttn(5, 2, Pairing::WatsonCrick, 0).unwrap();
        let fm = FeatureMap::dna(Pairing::WatsonCrick);
        let strands = ["ACGTA", "GGTCA", "TTACG", "CAGTT", "AAAAC", "GTGTG"];
        let data = Dataset { inputs: strands.iter().map(|s| s.to_string()).collect(), labels: vec![1, 0, 1, 0, 1, 0] };
        let enc = data.encode(&fm).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 2,
            learning_rate: 0.05,
            optimizer: Optimizer::nesterov(),
            l2_coeff: 1e-3,
            keep_best: true,
            ..TrainConfig::default()
        };
        let run = train(&mut rc, &enc, &enc, &cfg).unwrap();
        assert!(run.history.iter().all(|m| m.test_auroc.is_some()));
        let best = run.history.iter().map(|m| m.test_auroc.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(run.final_metrics().test_auroc.unwrap(), best);
        assert!(rc.rc_deviation(20, 0).unwrap() <= 1e-10);
    }

    #[test]
    fn invariant_count_table() {
        let expected = [[168, 372, 1020], [200, 444, 1220], [232, 516, 1420]];
        for (i, d) in [11, 13, 15].into_iter().enumerate() {
            for (j, b) in [4, 6, 10].into_iter().enumerate() {
                let inv = ParityModel::build(ParityMode::Invariant, d, b, 0).unwrap();
                let plain = ParityModel::build(ParityMode::Plain, d, b, 0).unwrap();
                assert_eq!(count_params(inv.as_model()), expected[i][j]);
                assert_eq!(count_params(plain.as_model()), 2 * expected[i][j]);
            }
        }
    }
}
