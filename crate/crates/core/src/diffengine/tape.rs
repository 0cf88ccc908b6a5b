//! Reverse accumulation over jet-valued nodes.
//!
//! Every node stores a [`Jet`] (value plus first and second derivative in the
//! designated input), so a loss may be built from `u`, `u'` and `u''` and still
//! be differentiated with respect to every leaf. Adjoints are jets as well: the
//! adjoint of a node holds the sensitivity of the loss to each jet component.
//!
//! The tape supports gradient accumulation over many independent evaluations
//! that share a common prefix (parameters, derived exponents): record the
//! prefix, take a [`Mark`], then for each point record its suffix, seed its
//! contribution and call [`Tape::propagate_to`] with the mark. Adjoints that
//! flow into the prefix accumulate there; a final propagation down to the
//! start of the tape finishes the gradient.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::jet::{log_abs_derivs, log_abs_jet, Derivs, Jet, UnaryKind};

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    AddConst(u32),
    Scale(u32, f64),
    Unary(u32, UnaryKind),
    PowAbs { x: u32, p: u32, odd: bool },
    // ln|x| floored, shared by a family of powers of x
    LnAbs(u32),
    // sign · exp(p · l)
    ExpScaled { l: u32, p: u32, sign: f64 },
    MaxConst(u32, f64),
    MinConst(u32, f64),
    Deriv(u32, u8),
    LinComb { start: u32, len: u32, bias: u32 },
}

#[derive(Default)]
struct TapeData {
    ops: Vec<Op>,
    vals: Vec<Jet>,
    adj: Vec<Jet>,
    // node does not depend on the input variable
    flat: Vec<bool>,
    // (weight, value) index pairs referenced by LinComb nodes
    operands: Vec<u32>,
}

/// A position on the tape; everything recorded after it can be discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark {
    nodes: usize,
    operands: usize,
}

impl Mark {
    /// The beginning of the tape.
    pub const START: Mark = Mark {
        nodes: 0,
        operands: 0,
    };
}

#[derive(Default)]
pub struct Tape {
    data: RefCell<TapeData>,
}

/// A differentiable scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct DiffScalar<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl std::fmt::Debug for DiffScalar<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffScalar")
            .field("idx", &self.idx)
            .field("jet", &self.jet())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let tape = Self::default();
        {
            let mut d = tape.data.borrow_mut();
            d.ops.reserve(nodes);
            d.vals.reserve(nodes);
            d.flat.reserve(nodes);
            d.operands.reserve(2 * nodes);
        }
        tape
    }

    fn push(&self, op: Op, val: Jet) -> DiffScalar<'_> {
        let mut d = self.data.borrow_mut();
        let f = |i: u32| d.flat[i as usize];
        let flat = match op {
            Op::Leaf => true,
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => f(a) && f(b),
            Op::Neg(a)
            | Op::AddConst(a)
            | Op::Scale(a, _)
            | Op::Unary(a, _)
            | Op::MaxConst(a, _)
            | Op::MinConst(a, _)
            | Op::LnAbs(a)
            | Op::Deriv(a, _) => f(a),
            Op::PowAbs { x, p, .. } => f(x) && f(p),
            Op::ExpScaled { l, p, .. } => f(l) && f(p),
            Op::LinComb { start, len, bias } => {
                f(bias) && d.operands[start as usize..(start + 2 * len) as usize].iter().all(|&i| f(i))
            }
        };
        Self::push_flagged(&mut d, op, val, flat);
        DiffScalar {
            tape: self,
            idx: d.ops.len() as u32 - 1,
        }
    }

    fn push_flagged(d: &mut TapeData, op: Op, val: Jet, flat: bool) {
        d.ops.push(op);
        d.vals.push(val);
        d.flat.push(flat);
    }

    /// A trainable leaf (constant in the input variable).
    pub fn var(&self, value: f64) -> DiffScalar<'_> {
        self.push(Op::Leaf, Jet::constant(value))
    }

    /// A constant; identical to a leaf whose adjoint is never read.
    pub fn constant(&self, value: f64) -> DiffScalar<'_> {
        self.var(value)
    }

    /// The designated input variable, seeded with unit first derivative.
    pub fn input(&self, x: f64) -> DiffScalar<'_> {
        let mut d = self.data.borrow_mut();
        Self::push_flagged(&mut d, Op::Leaf, Jet::variable(x), false);
        DiffScalar {
            tape: self,
            idx: d.ops.len() as u32 - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.data.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mark(&self) -> Mark {
        let d = self.data.borrow();
        Mark {
            nodes: d.ops.len(),
            operands: d.operands.len(),
        }
    }

    /// Discard every node recorded after `mark` together with its adjoint.
    pub fn truncate(&self, mark: Mark) {
        let mut d = self.data.borrow_mut();
        d.ops.truncate(mark.nodes);
        d.vals.truncate(mark.nodes);
        d.flat.truncate(mark.nodes);
        d.adj.truncate(mark.nodes);
        d.operands.truncate(mark.operands);
    }

    pub fn clear(&self) {
        self.truncate(Mark::START);
    }

    /// Add `weight` to the adjoint of the value component of `v`.
    pub fn seed(&self, v: DiffScalar<'_>, weight: f64) {
        let mut d = self.data.borrow_mut();
        let n = d.ops.len();
        if d.adj.len() < n {
            d.adj.resize(n, Jet::ZERO);
        }
        d.adj[v.idx as usize].v += weight;
    }

    pub fn zero_adjoints(&self) {
        let mut d = self.data.borrow_mut();
        d.adj.iter_mut().for_each(|a| *a = Jet::ZERO);
    }

    /// Adjoint (value component) accumulated at `v`.
    pub fn adjoint(&self, v: DiffScalar<'_>) -> f64 {
        let d = self.data.borrow();
        d.adj.get(v.idx as usize).map_or(0.0, |a| a.v)
    }

    /// Propagate adjoints of every node at or after `mark` into its parents.
    /// Interior adjoints in that range are cleared afterwards so a second call
    /// never double counts; leaf adjoints keep accumulating until
    /// [`Tape::zero_adjoints`]. Nodes are kept, call [`Tape::truncate`] to drop them.
    pub fn propagate_to(&self, mark: Mark) {
        let mut guard = self.data.borrow_mut();
        let d = &mut *guard;
        let n = d.ops.len();
        if d.adj.len() < n {
            d.adj.resize(n, Jet::ZERO);
        }
        for i in (mark.nodes..n).rev() {
            let zb = d.adj[i];
            if zb == Jet::ZERO || matches!(d.ops[i], Op::Leaf) {
                continue;
            }
            backprop_node(d.ops[i], i, zb, &d.vals, &d.flat, &mut d.adj, &d.operands);
            d.adj[i] = Jet::ZERO;
        }
    }

    /// Full reverse pass from `loss`, returning d(loss)/d(leaf) for each of
    /// `wrt`. Adjoints are reset first; the tape itself is left intact.
    pub fn gradient(&self, loss: DiffScalar<'_>, wrt: &[DiffScalar<'_>]) -> Vec<f64> {
        let mut guard = self.data.borrow_mut();
        let d = &mut *guard;
        let n = loss.idx as usize + 1;
        d.adj.clear();
        d.adj.resize(d.ops.len(), Jet::ZERO);
        d.adj[loss.idx as usize].v = 1.0;
        for i in (0..n).rev() {
            let zb = d.adj[i];
            if zb == Jet::ZERO {
                continue;
            }
            backprop_node(d.ops[i], i, zb, &d.vals, &d.flat, &mut d.adj, &d.operands);
        }
        let out = wrt.iter().map(|w| d.adj[w.idx as usize].v).collect();
        d.adj.clear();
        out
    }

    /// Weighted sum `bias + Σ w_i·v_i` recorded as a single node.
    pub fn lincomb<'t, I>(&'t self, bias: DiffScalar<'t>, terms: I) -> DiffScalar<'t>
    where
        I: IntoIterator<Item = (DiffScalar<'t>, DiffScalar<'t>)>,
    {
        let mut guard = self.data.borrow_mut();
        let d = &mut *guard;
        let start = d.operands.len();
        let mut acc = d.vals[bias.idx as usize];
        let mut flat = d.flat[bias.idx as usize];
        for (w, v) in terms {
            let (wj, vj) = (d.vals[w.idx as usize], d.vals[v.idx as usize]);
            acc = acc + wj * vj;
            flat &= d.flat[w.idx as usize] && d.flat[v.idx as usize];
            d.operands.push(w.idx);
            d.operands.push(v.idx);
        }
        let len = ((d.operands.len() - start) / 2) as u32;
        let idx = d.ops.len() as u32;
        let op = Op::LinComb {
            start: start as u32,
            len,
            bias: bias.idx,
        };
        Self::push_flagged(d, op, acc, flat);
        DiffScalar { tape: self, idx }
    }
}

#[inline]
fn unary_back(a: Jet, g: &Derivs, zb: Jet) -> Jet {
    Jet::new(
        zb.v * g.g1 + zb.d1 * g.g2 * a.d1 + zb.d2 * (g.g3 * a.d1 * a.d1 + g.g2 * a.d2),
        zb.d1 * g.g1 + 2.0 * zb.d2 * g.g2 * a.d1,
        zb.d2 * g.g1,
    )
}

/// Adjoint reaching one factor of a jet product, given the other factor.
#[inline]
fn mul_back(zb: Jet, other: Jet) -> Jet {
    Jet::new(
        zb.v * other.v + zb.d1 * other.d1 + zb.d2 * other.d2,
        zb.d1 * other.v + 2.0 * zb.d2 * other.d1,
        zb.d2 * other.v,
    )
}

#[inline]
fn acc(adj: &mut [Jet], i: u32, g: Jet) {
    let a = &mut adj[i as usize];
    a.v += g.v;
    a.d1 += g.d1;
    a.d2 += g.d2;
}

// For a node that does not depend on the input, only the value component of
// its adjoint can reach any value component upstream, so the derivative
// components are not accumulated.
fn backprop_node(op: Op, node: usize, zb: Jet, vals: &[Jet], flat: &[bool], adj: &mut [Jet], operands: &[u32]) {
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(adj, a, zb);
            acc(adj, b, zb);
        }
        Op::Sub(a, b) => {
            acc(adj, a, zb);
            acc(adj, b, -zb);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (vals[a as usize], vals[b as usize]);
            acc(adj, a, mul_back(zb, vb));
            acc(adj, b, mul_back(zb, va));
        }
        Op::Neg(a) => acc(adj, a, -zb),
        Op::AddConst(a) => acc(adj, a, zb),
        Op::Scale(a, s) => acc(adj, a, zb.scale(s)),
        Op::Unary(a, kind) => {
            let va = vals[a as usize];
            let y = vals[node].v;
            // reuse the stored output where the derivatives follow from it
            let g = match kind {
                UnaryKind::Tanh => {
                    let g1 = 1.0 - y * y;
                    let g2 = -2.0 * y * g1;
                    Derivs {
                        g0: y,
                        g1,
                        g2,
                        g3: -2.0 * g1 * g1 - 2.0 * y * g2,
                    }
                }
                UnaryKind::Exp => Derivs {
                    g0: y,
                    g1: y,
                    g2: y,
                    g3: y,
                },
                _ => kind.derivs(va.v),
            };
            acc(adj, a, unary_back(va, &g, zb));
        }
        Op::PowAbs { x, p, odd } => {
            let vx = vals[x as usize];
            if vx.v == 0.0 {
                return;
            }
            let vp = vals[p as usize];
            let log_abs = log_abs_jet(vx);
            let w = vp * log_abs;
            let zb = if odd && vx.v < 0.0 { -zb } else { zb };
            let wb = unary_back(w, &UnaryKind::Exp.derivs(w.v), zb);
            acc(adj, p, mul_back(wb, log_abs));
            let lb = mul_back(wb, vp);
            acc(adj, x, unary_back(vx, &log_abs_derivs(vx.v), lb));
        }
        Op::LnAbs(x) => {
            let vx = vals[x as usize];
            acc(adj, x, unary_back(vx, &log_abs_derivs(vx.v), zb));
        }
        Op::ExpScaled { l, p, sign } => {
            let (vl, vp) = (vals[l as usize], vals[p as usize]);
            // every derivative of exp is the stored magnitude
            let e = vals[node].v * sign;
            let g = Derivs {
                g0: e,
                g1: e,
                g2: e,
                g3: e,
            };
            if flat[p as usize] {
                let wb = unary_back(vl.scale(vp.v), &g, zb.scale(sign));
                adj[p as usize].v += wb.v * vl.v + wb.d1 * vl.d1 + wb.d2 * vl.d2;
                acc(adj, l, wb.scale(vp.v));
            } else {
                let wb = unary_back(vp * vl, &g, zb.scale(sign));
                acc(adj, p, mul_back(wb, vl));
                acc(adj, l, mul_back(wb, vp));
            }
        }
        Op::MaxConst(a, c) => {
            if vals[a as usize].v > c {
                acc(adj, a, zb);
            }
        }
        Op::MinConst(a, c) => {
            if vals[a as usize].v < c {
                acc(adj, a, zb);
            }
        }
        Op::Deriv(a, k) => {
            let mut g = Jet::ZERO;
            match k {
                1 => g.d1 = zb.v,
                2 => g.d2 = zb.v,
                _ => g.v = zb.v,
            }
            acc(adj, a, g);
        }
        Op::LinComb { start, len, bias } => {
            acc(adj, bias, zb);
            let pairs = &operands[start as usize..(start + 2 * len) as usize];
            for pair in pairs.chunks_exact(2) {
                let (w, v) = (pair[0], pair[1]);
                let (vw, vv) = (vals[w as usize], vals[v as usize]);
                if flat[w as usize] {
                    adj[w as usize].v += zb.v * vv.v + zb.d1 * vv.d1 + zb.d2 * vv.d2;
                    acc(adj, v, zb.scale(vw.v));
                } else {
                    acc(adj, w, mul_back(zb, vv));
                    acc(adj, v, mul_back(zb, vw));
                }
            }
        }
    }
}

impl<'t> DiffScalar<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn jet(&self) -> Jet {
        self.tape.data.borrow().vals[self.idx as usize]
    }

    pub fn value(&self) -> f64 {
        self.jet().v
    }

    /// The k-th input derivative (k = 1 or 2) as a new scalar whose value is
    /// that derivative. It stays differentiable in every leaf.
    pub fn input_derivative(self, k: u8) -> DiffScalar<'t> {
        let j = self.jet();
        let v = match k {
            1 => j.d1,
            2 => j.d2,
            _ => j.v,
        };
        self.tape.push(Op::Deriv(self.idx, k), Jet::constant(v))
    }

    #[inline]
    fn check_same(&self, other: &DiffScalar<'_>) {
        debug_assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    pub fn unary(self, kind: UnaryKind) -> DiffScalar<'t> {
        let j = self.jet().unary(kind);
        self.tape.push(Op::Unary(self.idx, kind), j)
    }

    pub fn exp(self) -> Self {
        self.unary(UnaryKind::Exp)
    }
    pub fn ln(self) -> Self {
        self.unary(UnaryKind::Ln)
    }
    pub fn tanh(self) -> Self {
        self.unary(UnaryKind::Tanh)
    }
    pub fn abs(self) -> Self {
        self.unary(UnaryKind::Abs)
    }
    pub fn signum(self) -> Self {
        self.unary(UnaryKind::Sign)
    }
    pub fn sigmoid(self) -> Self {
        self.unary(UnaryKind::Sigmoid)
    }
    pub fn softplus(self) -> Self {
        self.unary(UnaryKind::Softplus)
    }
    pub fn recip(self) -> Self {
        self.unary(UnaryKind::Recip)
    }

    pub fn max_const(self, c: f64) -> Self {
        let j = self.jet();
        let out = if j.v > c { j } else { Jet::constant(c) };
        self.tape.push(Op::MaxConst(self.idx, c), out)
    }

    pub fn min_const(self, c: f64) -> Self {
        let j = self.jet();
        let out = if j.v < c { j } else { Jet::constant(c) };
        self.tape.push(Op::MinConst(self.idx, c), out)
    }

    pub fn pow_abs(self, p: DiffScalar<'t>) -> Self {
        self.check_same(&p);
        let j = self.jet().pow_abs(p.jet());
        self.tape.push(
            Op::PowAbs {
                x: self.idx,
                p: p.idx,
                odd: false,
            },
            j,
        )
    }

    /// `|x|^p` for each `p` in `even`, then `sign(x)·|x|^p` for each `p` in
    /// `odd`, appended to `out`. One logarithm of `x` is shared by the whole
    /// family, so each power costs a single exponential.
    pub fn pow_family(self, even: &[Self], odd: &[Self], out: &mut Vec<Self>) {
        let x = self.jet();
        if x.v == 0.0 {
            let z = self.tape.constant(0.0);
            out.extend(std::iter::repeat_n(z, even.len() + odd.len()));
            return;
        }
        let lj = log_abs_jet(x);
        let l = self.tape.push(Op::LnAbs(self.idx), lj);
        let s_odd = if x.v < 0.0 { -1.0 } else { 1.0 };
        let signed = even.iter().map(|p| (p, 1.0)).chain(odd.iter().map(|p| (p, s_odd)));
        for (p, sign) in signed {
            self.check_same(p);
            let y = (p.jet() * lj).unary(UnaryKind::Exp).scale(sign);
            out.push(self.tape.push(
                Op::ExpScaled {
                    l: l.idx,
                    p: p.idx,
                    sign,
                },
                y,
            ));
        }
    }

    pub fn sign_pow_abs(self, p: DiffScalar<'t>) -> Self {
        self.check_same(&p);
        let j = self.jet().sign_pow_abs(p.jet());
        self.tape.push(
            Op::PowAbs {
                x: self.idx,
                p: p.idx,
                odd: true,
            },
            j,
        )
    }
}

impl<'t> Add for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn add(self, o: Self) -> Self {
        self.check_same(&o);
        let j = self.jet() + o.jet();
        self.tape.push(Op::Add(self.idx, o.idx), j)
    }
}

impl<'t> Sub for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn sub(self, o: Self) -> Self {
        self.check_same(&o);
        let j = self.jet() - o.jet();
        self.tape.push(Op::Sub(self.idx, o.idx), j)
    }
}

impl<'t> Mul for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn mul(self, o: Self) -> Self {
        self.check_same(&o);
        let j = self.jet() * o.jet();
        self.tape.push(Op::Mul(self.idx, o.idx), j)
    }
}

impl<'t> Div for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<'t> Neg for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn neg(self) -> Self {
        let j = -self.jet();
        self.tape.push(Op::Neg(self.idx), j)
    }
}

impl<'t> Add<f64> for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn add(self, c: f64) -> Self {
        let j = self.jet() + c;
        self.tape.push(Op::AddConst(self.idx), j)
    }
}

impl<'t> Sub<f64> for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn sub(self, c: f64) -> Self {
        self + (-c)
    }
}

impl<'t> Mul<f64> for DiffScalar<'t> {
    type Output = DiffScalar<'t>;
    fn mul(self, c: f64) -> Self {
        let j = self.jet() * c;
        self.tape.push(Op::Scale(self.idx, c), j)
    }
}
