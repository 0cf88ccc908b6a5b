//! MSN layers and networks, the tanh-MLP baselines, parameter counting and
//! checkpoint serialization.
//!
//! Parameters live in a [`ParamStore`]; forward passes are generic over
//! [`Real`] and read parameters from a flat slice laid out exactly like the
//! store. Per MSN layer `l` the blocks are
//!
//! | block           | group         | shape                     |
//! |-----------------|---------------|---------------------------|
//! | `l{l}.a`        | coefficients  | `d_in × d_out × K_e`      |
//! | `l{l}.b`        | coefficients  | `d_in × d_out × K_o`      |
//! | `l{l}.c`        | biases        | `d_out`                   |
//! | `l{l}.r_even`   | exponent_raw  | `K_e`                     |
//! | `l{l}.r_odd`    | exponent_raw  | `K_o`                     |
//!
//! and per MLP layer `l{l}.w` (`d_out × d_in`, row-major) then `l{l}.b`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffengine::{ParamGroup, ParamStore, Real};
use crate::error::{MsnError, Result};
use crate::powbasis::{
    bounded_map, check_bounds, cumsum_map, cumsum_raw_for, regularizer, ExponentMode,
    ExponentParams, MuntzEdgeCoeffs,
};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsnArch {
    /// Layer widths including input and output, e.g. `[1, 16, 1]`.
    pub dims: Vec<usize>,
    pub k_even: usize,
    pub k_odd: usize,
    pub p_max: f64,
    pub margin: f64,
    pub mode: ExponentMode,
}

impl MsnArch {
    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(MsnError::InvalidConfig(format!("invalid layer widths {:?}", self.dims)));
        }
        if self.k_even + self.k_odd == 0 {
            return Err(MsnError::InvalidConfig("an edge needs at least one term".into()));
        }
        check_bounds(self.p_max, self.margin)
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.dims
            .windows(2)
            .map(|w| w[0] * w[1] * (self.k_even + self.k_odd) + w[1] + self.k_even + self.k_odd)
            .sum()
    }

    fn map<R: Real>(&self, raw: &[R]) -> Vec<R> {
        match self.mode {
            ExponentMode::Bounded => bounded_map(raw, self.p_max, self.margin),
            ExponentMode::Cumsum => cumsum_map(raw, self.p_max, self.margin),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub dims: Vec<usize>,
}

impl MlpArch {
    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(MsnError::InvalidConfig(format!("invalid layer widths {:?}", self.dims)));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Materialized exponents of one MSN layer.
#[derive(Clone, Debug)]
pub struct LayerExponents<R> {
    pub mu: Vec<R>,
    pub lambda: Vec<R>,
}

/// One MSN layer in structured form.
#[derive(Clone, Debug, PartialEq)]
pub struct MsnLayerParams {
    /// `edge_coeffs[i][j]` is the edge from input `i` to output `j`.
    pub edge_coeffs: Vec<Vec<MuntzEdgeCoeffs>>,
    pub biases: Vec<f64>,
    pub shared_even: ExponentParams,
    pub shared_odd: ExponentParams,
}

impl MsnLayerParams {
    pub fn d_in(&self) -> usize {
        self.edge_coeffs.len()
    }

    pub fn d_out(&self) -> usize {
        self.biases.len()
    }

    fn validate(&self) -> Result<()> {
        let (ke, ko) = (self.shared_even.len(), self.shared_odd.len());
        for row in &self.edge_coeffs {
            if row.len() != self.d_out() {
                return Err(MsnError::DimensionMismatch {
                    expected: self.d_out(),
                    got: row.len(),
                });
            }
            for e in row {
                if e.a.len() != ke || e.b.len() != ko {
                    return Err(MsnError::DimensionMismatch {
                        expected: ke + ko,
                        got: e.a.len() + e.b.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// `out_j = Σ_i φ_ij(x_i) + c_j` with exponents materialized once.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if x.len() != self.d_in() {
            return Err(MsnError::DimensionMismatch {
                expected: self.d_in(),
                got: x.len(),
            });
        }
        let mu = self.shared_even.exponents()?;
        let lambda = self.shared_odd.exponents()?;
        let (ke, ko) = (mu.len(), lambda.len());
        let d_out = self.d_out();
        let mut a = Vec::with_capacity(self.d_in() * d_out * ke);
        let mut b = Vec::with_capacity(self.d_in() * d_out * ko);
        for row in &self.edge_coeffs {
            for e in row {
                a.extend_from_slice(&e.a);
                b.extend_from_slice(&e.b);
            }
        }
        let exps = LayerExponents { mu, lambda };
        Ok(layer_forward(&a, &b, &self.biases, &exps, x, d_out))
    }
}

/// Generic MSN layer on flat coefficient slices.
pub fn layer_forward<R: Real>(
    a: &[R],
    b: &[R],
    c: &[R],
    exps: &LayerExponents<R>,
    x: &[R],
    d_out: usize,
) -> Vec<R> {
    let (ke, ko) = (exps.mu.len(), exps.lambda.len());
    let d_in = x.len();
    let k = ke + ko;
    // per input: its ke even powers followed by its ko odd powers
    let mut pows = Vec::with_capacity(d_in * k);
    for &xi in x {
        xi.pow_family(&exps.mu, &exps.lambda, &mut pows);
    }
    let mut terms = Vec::with_capacity(d_in * k);
    (0..d_out)
        .map(|j| {
            terms.clear();
            for i in 0..d_in {
                let edge = i * d_out + j;
                let p = &pows[i * k..(i + 1) * k];
                let ae = &a[edge * ke..(edge + 1) * ke];
                terms.extend(ae.iter().copied().zip(p[..ke].iter().copied()));
                let be = &b[edge * ko..(edge + 1) * ko];
                terms.extend(be.iter().copied().zip(p[ke..].iter().copied()));
            }
            R::lincomb(c[j], &terms)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct MsnLayerLayout {
    a: usize,
    b: usize,
    c: usize,
    r_even: usize,
    r_odd: usize,
    d_in: usize,
    d_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsnNetwork {
    pub arch: MsnArch,
    pub params: ParamStore,
    layout: Vec<MsnLayerLayout>,
}

impl MsnNetwork {
    /// Random initialization: coefficients ~ N(0, 1/√(d_in·(K_e+K_o))),
    /// zero biases, raw exponents ~ N(0, 1) (mapped to the cumsum
    /// parameterization with the same spread in cumsum mode).
    pub fn init<G: Rng>(arch: MsnArch, rng: &mut G) -> Result<Self> {
        arch.validate()?;
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut store = ParamStore::new();
        for (l, w) in arch.dims.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let scale = 1.0 / ((d_in * (arch.k_even + arch.k_odd)) as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| scale * std_normal.sample(rng)).collect()
            };
            let a = draw(d_in * d_out * arch.k_even);
            let b = draw(d_in * d_out * arch.k_odd);
            store.push_block(format!("l{l}.a"), ParamGroup::Coefficients, &a);
            store.push_block(format!("l{l}.b"), ParamGroup::Coefficients, &b);
            store.push_block(format!("l{l}.c"), ParamGroup::Biases, &vec![0.0; d_out]);
            for (name, k) in [("r_even", arch.k_even), ("r_odd", arch.k_odd)] {
                let raw: Vec<f64> = (0..k).map(|_| std_normal.sample(rng)).collect();
                let raw = match arch.mode {
                    ExponentMode::Bounded => raw,
                    ExponentMode::Cumsum => {
                        let spread = bounded_map(&raw, arch.p_max, arch.margin);
                        cumsum_raw_for(&spread, arch.margin)
                    }
                };
                store.push_block(format!("l{l}.{name}"), ParamGroup::ExponentRaw, &raw);
            }
        }
        Self::from_store(arch, store)
    }

    /// Wrap an existing store, checking that it matches `arch`.
    pub fn from_store(arch: MsnArch, params: ParamStore) -> Result<Self> {
        arch.validate()?;
        let mut layout = Vec::new();
        for (l, w) in arch.dims.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let get = |name: &str, len: usize| -> Result<usize> {
                let full = format!("l{l}.{name}");
                let block = params
                    .block(&full)
                    .ok_or_else(|| MsnError::InvalidConfig(format!("missing parameter block {full}")))?;
                if block.len != len {
                    return Err(MsnError::DimensionMismatch {
                        expected: len,
                        got: block.len,
                    });
                }
                Ok(block.offset)
            };
            layout.push(MsnLayerLayout {
                a: get("a", d_in * d_out * arch.k_even)?,
                b: get("b", d_in * d_out * arch.k_odd)?,
                c: get("c", d_out)?,
                r_even: get("r_even", arch.k_even)?,
                r_odd: get("r_odd", arch.k_odd)?,
                d_in,
                d_out,
            });
        }
        if params.len() != arch.param_count() {
            return Err(MsnError::DimensionMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        Ok(Self { arch, params, layout })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn d_in(&self) -> usize {
        self.arch.dims[0]
    }

    pub fn d_out(&self) -> usize {
        *self.arch.dims.last().expect("validated dims")
    }

    /// Exponents of every layer, computed from `params` (a slice laid out
    /// like the store).
    pub fn materialize<R: Real>(&self, params: &[R]) -> Vec<LayerExponents<R>> {
        let (ke, ko) = (self.arch.k_even, self.arch.k_odd);
        self.layout
            .iter()
            .map(|lay| LayerExponents {
                mu: if ke > 0 {
                    self.arch.map(&params[lay.r_even..lay.r_even + ke])
                } else {
                    Vec::new()
                },
                lambda: if ko > 0 {
                    self.arch.map(&params[lay.r_odd..lay.r_odd + ko])
                } else {
                    Vec::new()
                },
            })
            .collect()
    }

    pub fn exponents(&self) -> Vec<LayerExponents<f64>> {
        self.materialize(self.params.values())
    }

    /// Forward pass given precomputed exponents.
    pub fn forward_with<R: Real>(&self, params: &[R], exps: &[LayerExponents<R>], x: &[R]) -> Vec<R> {
        let (ke, ko) = (self.arch.k_even, self.arch.k_odd);
        let last = self.layout.len() - 1;
        let mut h: Vec<R> = x.to_vec();
        for (l, lay) in self.layout.iter().enumerate() {
            let a = &params[lay.a..lay.a + lay.d_in * lay.d_out * ke];
            let b = &params[lay.b..lay.b + lay.d_in * lay.d_out * ko];
            let c = &params[lay.c..lay.c + lay.d_out];
            h = layer_forward(a, b, c, &exps[l], &h, lay.d_out);
            if l < last {
                h = h.into_iter().map(|v| v.tanh()).collect();
            }
        }
        h
    }

    /// `L_L ∘ tanh ∘ … ∘ tanh ∘ L_1` at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(MsnError::DimensionMismatch {
                expected: self.d_in(),
                got: x.len(),
            });
        }
        let exps = self.exponents();
        Ok(self.forward_with(self.params.values(), &exps, x))
    }

    /// Sum over layers of the Müntz regularizer `max(0, C - D)`.
    pub fn muntz_penalty<R: Real>(&self, exps: &[LayerExponents<R>], c: f64) -> Option<R> {
        exps.iter()
            .map(|e| regularizer(&e.mu, &e.lambda, c))
            .reduce(|acc, r| acc + r)
    }

    /// `‖a‖₁ + ‖b‖₁` over every edge.
    pub fn l1_penalty<R: Real>(&self, params: &[R]) -> Option<R> {
        let (ke, ko) = (self.arch.k_even, self.arch.k_odd);
        self.layout
            .iter()
            .flat_map(|lay| {
                let n = lay.d_in * lay.d_out;
                params[lay.a..lay.a + n * ke]
                    .iter()
                    .chain(&params[lay.b..lay.b + n * ko])
                    .map(|&v| v.abs())
            })
            .reduce(|acc, v| acc + v)
    }

    /// Structured copy of layer `l`.
    pub fn layer(&self, l: usize) -> MsnLayerParams {
        let lay = self.layout[l];
        let (ke, ko) = (self.arch.k_even, self.arch.k_odd);
        let v = self.params.values();
        let edge_coeffs = (0..lay.d_in)
            .map(|i| {
                (0..lay.d_out)
                    .map(|j| {
                        let e = i * lay.d_out + j;
                        MuntzEdgeCoeffs {
                            a: v[lay.a + e * ke..lay.a + (e + 1) * ke].to_vec(),
                            b: v[lay.b + e * ko..lay.b + (e + 1) * ko].to_vec(),
                        }
                    })
                    .collect()
            })
            .collect();
        let exp = |off: usize, k: usize| ExponentParams {
            raw: v[off..off + k].to_vec(),
            p_max: self.arch.p_max,
            margin: self.arch.margin,
            mode: self.arch.mode,
        };
        MsnLayerParams {
            edge_coeffs,
            biases: v[lay.c..lay.c + lay.d_out].to_vec(),
            shared_even: exp(lay.r_even, ke),
            shared_odd: exp(lay.r_odd, ko),
        }
    }

    /// Build a network from structured layers (all sharing `arch` settings).
    pub fn from_layers(arch: MsnArch, layers: &[MsnLayerParams]) -> Result<Self> {
        arch.validate()?;
        if layers.len() != arch.n_layers() {
            return Err(MsnError::DimensionMismatch {
                expected: arch.n_layers(),
                got: layers.len(),
            });
        }
        let mut store = ParamStore::new();
        for (l, layer) in layers.iter().enumerate() {
            layer.validate()?;
            let mut a = Vec::new();
            let mut b = Vec::new();
            for row in &layer.edge_coeffs {
                for e in row {
                    a.extend_from_slice(&e.a);
                    b.extend_from_slice(&e.b);
                }
            }
            store.push_block(format!("l{l}.a"), ParamGroup::Coefficients, &a);
            store.push_block(format!("l{l}.b"), ParamGroup::Coefficients, &b);
            store.push_block(format!("l{l}.c"), ParamGroup::Biases, &layer.biases);
            store.push_block(format!("l{l}.r_even"), ParamGroup::ExponentRaw, &layer.shared_even.raw);
            store.push_block(format!("l{l}.r_odd"), ParamGroup::ExponentRaw, &layer.shared_odd.raw);
        }
        Self::from_store(arch, store)
    }

    /// Flat indices of the exponent-raw entries of each layer, concatenated
    /// even then odd.
    pub fn exponent_groups(&self) -> Vec<Vec<usize>> {
        let (ke, ko) = (self.arch.k_even, self.arch.k_odd);
        self.layout
            .iter()
            .map(|lay| (lay.r_even..lay.r_even + ke).chain(lay.r_odd..lay.r_odd + ko).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    pub arch: MlpArch,
    pub params: ParamStore,
    offsets: Vec<(usize, usize)>,
}

impl MlpNetwork {
    /// Xavier-normal weights, zero biases.
    pub fn init<G: Rng>(arch: MlpArch, rng: &mut G) -> Result<Self> {
        arch.validate()?;
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut store = ParamStore::new();
        for (l, w) in arch.dims.windows(2).enumerate() {
            let (d_in, d_out) = (w[0], w[1]);
            let scale = (2.0 / (d_in + d_out) as f64).sqrt();
            let weights: Vec<f64> = (0..d_in * d_out).map(|_| scale * std_normal.sample(rng)).collect();
            store.push_block(format!("l{l}.w"), ParamGroup::Coefficients, &weights);
            store.push_block(format!("l{l}.b"), ParamGroup::Biases, &vec![0.0; d_out]);
        }
        Self::from_store(arch, store)
    }

    pub fn from_store(arch: MlpArch, params: ParamStore) -> Result<Self> {
        arch.validate()?;
        let mut offsets = Vec::new();
        for (l, w) in arch.dims.windows(2).enumerate() {
            let find = |name: String, len: usize| -> Result<usize> {
                let block = params
                    .block(&name)
                    .ok_or_else(|| MsnError::InvalidConfig(format!("missing parameter block {name}")))?;
                if block.len != len {
                    return Err(MsnError::DimensionMismatch {
                        expected: len,
                        got: block.len,
                    });
                }
                Ok(block.offset)
            };
            offsets.push((find(format!("l{l}.w"), w[0] * w[1])?, find(format!("l{l}.b"), w[1])?));
        }
        if params.len() != arch.param_count() {
            return Err(MsnError::DimensionMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        Ok(Self { arch, params, offsets })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn d_in(&self) -> usize {
        self.arch.dims[0]
    }

    pub fn forward_with<R: Real>(&self, params: &[R], x: &[R]) -> Vec<R> {
        let last = self.offsets.len() - 1;
        let mut h: Vec<R> = x.to_vec();
        let mut terms = Vec::new();
        for (l, (&(w_off, b_off), dims)) in self.offsets.iter().zip(self.arch.dims.windows(2)).enumerate() {
            let (d_in, d_out) = (dims[0], dims[1]);
            h = (0..d_out)
                .map(|j| {
                    terms.clear();
                    let row = &params[w_off + j * d_in..w_off + (j + 1) * d_in];
                    terms.extend(row.iter().copied().zip(h.iter().copied()));
                    let z = R::lincomb(params[b_off + j], &terms);
                    if l < last {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
        }
        h
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(MsnError::DimensionMismatch {
                expected: self.d_in(),
                got: x.len(),
            });
        }
        Ok(self.forward_with(self.params.values(), x))
    }
}

/// Either model family behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Network {
    Msn(MsnNetwork),
    Mlp(MlpNetwork),
}

impl Network {
    pub fn params(&self) -> &ParamStore {
        match self {
            Network::Msn(n) => &n.params,
            Network::Mlp(n) => &n.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Network::Msn(n) => &mut n.params,
            Network::Mlp(n) => &mut n.params,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn as_msn(&self) -> Option<&MsnNetwork> {
        match self {
            Network::Msn(n) => Some(n),
            Network::Mlp(_) => None,
        }
    }

    /// Exponents (MSN) computed from `params`; empty for an MLP.
    pub fn prepare<R: Real>(&self, params: &[R]) -> Vec<LayerExponents<R>> {
        match self {
            Network::Msn(n) => n.materialize(params),
            Network::Mlp(_) => Vec::new(),
        }
    }

    pub fn forward_with<R: Real>(&self, params: &[R], exps: &[LayerExponents<R>], x: &[R]) -> Vec<R> {
        match self {
            Network::Msn(n) => n.forward_with(params, exps, x),
            Network::Mlp(n) => n.forward_with(params, x),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Network::Msn(n) => n.forward(x),
            Network::Mlp(n) => n.forward(x),
        }
    }

    /// Scalar-in, scalar-out evaluation on many points.
    pub fn predict(&self, xs: &[f64]) -> Vec<f64> {
        let params = self.params().values();
        let exps = self.prepare(params);
        xs.iter().map(|&x| self.forward_with(params, &exps, &[x])[0]).collect()
    }
}

/// Exact count of trainable scalars.
pub fn param_count(net: &Network) -> usize {
    net.param_count()
}

/// Parameter count of a `d_in → h → … → h → d_out` tanh MLP.
pub fn mlp_param_count(d_in: usize, hidden: usize, hidden_layers: usize, d_out: usize) -> usize {
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat_n(hidden, hidden_layers));
    dims.push(d_out);
    MlpArch { dims }.param_count()
}

/// Hidden width whose MLP parameter count is closest to `target`; ties go to
/// the smaller width.
pub fn match_mlp_width(target: usize, hidden_layers: usize, d_in: usize, d_out: usize) -> Result<usize> {
    if hidden_layers == 0 {
        return Err(MsnError::InvalidConfig("at least one hidden layer is required".into()));
    }
    if mlp_param_count(d_in, 1, hidden_layers, d_out) > target {
        return Err(MsnError::Infeasible(format!(
            "width 1 already exceeds {target} parameters"
        )));
    }
    let mut best = 1;
    let mut h = 1;
    loop {
        let count = mlp_param_count(d_in, h, hidden_layers, d_out);
        let dist = count.abs_diff(target);
        if dist < mlp_param_count(d_in, best, hidden_layers, d_out).abs_diff(target) {
            best = h;
        }
        if count >= target {
            return Ok(best);
        }
        h += 1;
    }
}

/// Versioned checkpoint document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: ArchSpec,
    pub blocks: Vec<NamedArray>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSpec {
    Msn(MsnArch),
    Mlp(MlpArch),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub group: ParamGroup,
    pub values: Vec<f64>,
}

impl Network {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let store = self.params();
        let blocks = store
            .blocks()
            .iter()
            .map(|b| NamedArray {
                name: b.name.clone(),
                group: b.group,
                values: store.values()[b.range()].to_vec(),
            })
            .collect();
        let architecture = match self {
            Network::Msn(n) => ArchSpec::Msn(n.arch.clone()),
            Network::Mlp(n) => ArchSpec::Mlp(n.arch.clone()),
        };
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            architecture,
            blocks,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(MsnError::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        let mut store = ParamStore::new();
        for b in &ck.blocks {
            store.push_block(b.name.clone(), b.group, &b.values);
        }
        match &ck.architecture {
            ArchSpec::Msn(a) => Ok(Network::Msn(MsnNetwork::from_store(a.clone(), store)?)),
            ArchSpec::Mlp(a) => Ok(Network::Mlp(MlpNetwork::from_store(a.clone(), store)?)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(s)?)
    }
}
