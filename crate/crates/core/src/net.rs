//! Permutation-equivariant feature network and its output heads.
//!
//! A one-electron stream `h_j` and a two-electron stream `g_ij` are updated
//! layer by layer. Each one-electron update sees the electron's own features,
//! the means of `h` over same-spin and opposite-spin electrons, and the means
//! of its row of `g` over same-spin and opposite-spin partners. All means are
//! reduced in ascending electron order.
//!
//! Every routine is generic over the scalar type `S` of the coordinates and
//! the scalar type `P` of the parameters, so the same code evaluates values,
//! Taylor jets in `x`, and tape variables in the parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::AnsatzKind;
use crate::error::{Error, Result};
use crate::hamiltonian::{Potential, SystemSpec};
use crate::math::{Param, Real, Tensor};

/// Lower bound applied to envelope decay rates after each update.
pub const MIN_DECAY: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub layers: usize,
    pub one_width: usize,
    pub two_width: usize,
    /// Hidden width of the dedicated pair networks (two-electron `phi_B` of
    /// the Han form and the generic pair function).
    pub pair_width: usize,
    /// Number of ensemble members `K`.
    pub ensemble: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            one_width: 256,
            two_width: 32,
            pair_width: 16,
            ensemble: 1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.one_width == 0 || self.two_width == 0 || self.pair_width == 0 {
            return Err(Error::InvalidConfig(
                "network depth and widths must be positive".into(),
            ));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidConfig(
                "ensemble size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A named block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Envelope decay rates, kept positive by [`NetParams::project`].
    pub positive: bool,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct ParamLayout {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl ParamLayout {
    fn add(&mut self, name: String, shape: Vec<usize>, positive: bool) -> usize {
        let offset = self.total;
        let e = ParamEntry {
            name,
            shape,
            offset,
            positive,
        };
        self.total += e.len();
        self.entries.push(e);
        offset
    }
}

/// Flat parameter vector plus the names and shapes of its blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    entries: Vec<ParamEntry>,
    pub data: Vec<f64>,
}

impl NetParams {
    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        Tensor::new(e.shape.clone(), self.data[e.range()].to_vec()).ok()
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .map(|e| {
                let t = Tensor::new(e.shape.clone(), self.data[e.range()].to_vec())
                    .expect("entry shape matches its range");
                (e.name.clone(), t)
            })
            .collect()
    }

    /// Overwrites values from named tensors; every entry must be present with
    /// the expected shape.
    pub fn assign_named(&mut self, arrays: &[(String, Tensor)]) -> Result<()> {
        for e in &self.entries {
            let (_, t) = arrays.iter().find(|(n, _)| *n == e.name).ok_or_else(|| {
                Error::Shape(format!("parameter '{}' missing from checkpoint", e.name))
            })?;
            if t.shape() != e.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    e.name,
                    t.shape(),
                    e.shape
                )));
            }
            self.data[e.range()].copy_from_slice(t.data());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Clamps envelope decay rates to at least [`MIN_DECAY`].
    pub fn project(&mut self) {
        project_decays(&self.entries, &mut self.data);
    }

    pub fn set_zero(&mut self, prefix: &str) {
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            self.data[e.range()].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn project_decays(entries: &[ParamEntry], data: &mut [f64]) {
    for e in entries.iter().filter(|e| e.positive) {
        for v in &mut data[e.range()] {
            if !(*v >= MIN_DECAY) {
                *v = MIN_DECAY;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

impl Dense {
    fn new(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = layout.add(format!("{name}.w"), vec![n_out, n_in], false);
        let b = layout.add(format!("{name}.b"), vec![n_out], false);
        Self { w, b, n_in, n_out }
    }

    #[inline]
    fn unit<S: Real, P: Param<S>>(&self, theta: &[P], o: usize, input: &[S]) -> S {
        let w = &theta[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
        P::affine(theta[self.b + o], w, input)
    }

    fn tanh_into<S: Real, P: Param<S>>(&self, theta: &[P], input: &[S], out: &mut Vec<S>) {
        debug_assert_eq!(input.len(), self.n_in);
        out.extend((0..self.n_out).map(|o| self.unit(theta, o, input).tanh()));
    }
}

/// `w . h + b` producing one scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Linear {
    w: usize,
    b: usize,
    n_in: usize,
}

impl Linear {
    fn new(layout: &mut ParamLayout, name: &str, n_in: usize) -> Self {
        let w = layout.add(format!("{name}.w"), vec![n_in], false);
        let b = layout.add(format!("{name}.b"), vec![1], false);
        Self { w, b, n_in }
    }

    #[inline]
    fn eval<S: Real, P: Param<S>>(&self, theta: &[P], input: &[S]) -> S {
        P::affine(theta[self.b], &theta[self.w..self.w + self.n_in], input)
    }
}

/// One-hidden-layer scalar network.
#[derive(Clone, Copy, Debug, PartialEq)]
struct PairNet {
    hidden: Dense,
    out: Linear,
}

impl PairNet {
    fn new(layout: &mut ParamLayout, name: &str, n_in: usize, width: usize) -> Self {
        let hidden = Dense::new(layout, &format!("{name}.hidden"), n_in, width);
        let out = Linear::new(layout, &format!("{name}.out"), width);
        Self { hidden, out }
    }

    fn eval<S: Real, P: Param<S>>(&self, theta: &[P], input: &[S], scratch: &mut Vec<S>) -> S {
        scratch.clear();
        self.hidden.tanh_into(theta, input, scratch);
        self.out.eval(theta, scratch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Member {
    phi_b: Linear,
    phi_b_decay: usize,
    phi_a: Option<(Linear, usize)>,
    /// weights `[N, W]`, biases `[N]`, decay rates `[N, M]`
    orbitals: Option<(usize, usize, usize)>,
    phi_c: Option<Linear>,
    han_pair: Option<PairNet>,
    generic_pair: Option<PairNet>,
    /// decay rates of the symmetric per-electron envelope of pair forms
    sym_decay: Option<usize>,
}

/// Structure of the network for one (kind, system, configuration) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct NetLayout {
    pub kind: AnsatzKind,
    pub config: NetConfig,
    n_electrons: usize,
    n_up: usize,
    dim: usize,
    n_centres: usize,
    one_layers: Vec<Dense>,
    two_layers: Vec<Dense>,
    pub(crate) members: Vec<Member>,
    ensemble_weights: usize,
    params: ParamLayout,
}

impl NetLayout {
    pub fn new(kind: AnsatzKind, spec: &SystemSpec, config: &NetConfig) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let n = spec.n_electrons();
        let m = spec.nuclei.len();
        let d = spec.dim;
        let mut p = ParamLayout::default();

        let one_in = m * (d + 1);
        let two_in = d + 1;
        let mut one_layers = Vec::new();
        let mut two_layers = Vec::new();
        let (mut w1, mut w2) = (one_in, two_in);
        for l in 0..config.layers {
            one_layers.push(Dense::new(
                &mut p,
                &format!("one.{l}"),
                3 * w1 + 2 * w2,
                config.one_width,
            ));
            if l + 1 < config.layers {
                two_layers.push(Dense::new(
                    &mut p,
                    &format!("two.{l}"),
                    w2,
                    config.two_width,
                ));
                w2 = config.two_width;
            }
            w1 = config.one_width;
        }
        let width = config.one_width;
        let g_width = w2;

        let mut members = Vec::new();
        for k in 0..config.ensemble {
            let name = |s: &str| format!("k{k}.{s}");
            let phi_b = Linear::new(&mut p, &name("phi_b"), width);
            let phi_b_decay = p.add(name("phi_b.decay"), vec![m], true);
            let phi_a = (kind == AnsatzKind::PairDouble).then(|| {
                let head = Linear::new(&mut p, &name("phi_a"), width);
                let decay = p.add(name("phi_a.decay"), vec![m], true);
                (head, decay)
            });
            let orbitals = kind.is_determinant().then(|| {
                let w = p.add(name("orbitals.w"), vec![n, width], false);
                let b = p.add(name("orbitals.b"), vec![n], false);
                let a = p.add(name("orbitals.decay"), vec![n, m], true);
                (w, b, a)
            });
            let phi_c =
                (kind == AnsatzKind::Han).then(|| Linear::new(&mut p, &name("phi_c"), width));
            let han_pair = (kind == AnsatzKind::Han).then(|| {
                PairNet::new(
                    &mut p,
                    &name("han_pair"),
                    2 * one_in + two_in,
                    config.pair_width,
                )
            });
            let generic_pair = (kind == AnsatzKind::PairGeneric).then(|| {
                PairNet::new(
                    &mut p,
                    &name("generic_pair"),
                    3 * width + g_width,
                    config.pair_width,
                )
            });
            let sym_decay =
                (!kind.is_determinant()).then(|| p.add(name("envelope.decay"), vec![m], true));
            members.push(Member {
                phi_b,
                phi_b_decay,
                phi_a,
                orbitals,
                phi_c,
                han_pair,
                generic_pair,
                sym_decay,
            });
        }
        let ensemble_weights = p.add("ensemble.weights".into(), vec![config.ensemble], false);

        Ok(Self {
            kind,
            config: config.clone(),
            n_electrons: n,
            n_up: spec.n_up,
            dim: d,
            n_centres: m,
            one_layers,
            two_layers,
            members,
            ensemble_weights,
            params: p,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.total
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.params.entries
    }

    pub fn width(&self) -> usize {
        self.config.one_width
    }

    pub(crate) fn ensemble_weight<S: Real, P: Param<S>>(&self, theta: &[P], k: usize) -> S {
        theta[self.ensemble_weights + k].lift()
    }

    /// Zero-initialized parameters with this layout.
    pub fn zeros(&self) -> NetParams {
        NetParams {
            entries: self.params.entries.clone(),
            data: vec![0.0; self.params.total],
        }
    }

    /// Fan-in scaled uniform weights (variance `1/fan_in`), zero biases,
    /// decay rates from the system (nuclear charge, or trap frequency), unit
    /// ensemble weights. Deterministic in `seed`.
    pub fn init_params(&self, spec: &SystemSpec, seed: u64) -> NetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = self.zeros();
        for e in &self.params.entries {
            let slot = &mut params.data[e.range()];
            if e.positive {
                let m = spec.nuclei.len();
                for (i, v) in slot.iter_mut().enumerate() {
                    *v = match spec.potential {
                        Potential::Coulomb => spec.nuclei[i % m].charge,
                        Potential::Harmonic { omega } => omega,
                    };
                }
            } else if e.name == "ensemble.weights" {
                slot.iter_mut().for_each(|v| *v = 1.0);
            } else if e.name.ends_with(".w") {
                let fan_in = *e.shape.last().unwrap();
                let limit = libm::sqrt(3.0 / fan_in as f64);
                for v in slot.iter_mut() {
                    *v = rng.random_range(-limit..limit);
                }
            }
        }
        params
    }

    pub fn project(&self, data: &mut [f64]) {
        project_decays(&self.params.entries, data);
    }
}

/// Electron-nucleus and electron-electron geometry plus raw input features.
#[derive(Clone, Debug)]
pub struct Geometry<S> {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    smooth: bool,
    /// `|x_j - R_m|`, `[N, M]`
    pub r_en: Vec<S>,
    /// `|x_j - R_m|²`, `[N, M]`
    pub r2_en: Vec<S>,
    /// one-electron features `[N, M(d+1)]`
    pub feat1: Vec<S>,
    /// two-electron features `[N, N, d+1]`, zero on the diagonal
    pub feat2: Vec<S>,
}

impl<S: Real> Geometry<S> {
    pub fn new(x: &[S], spec: &SystemSpec) -> Result<Self> {
        let n = spec.n_electrons();
        let m = spec.nuclei.len();
        let d = spec.dim;
        if x.len() != n * d {
            return Err(Error::Shape(format!(
                "configuration has {} coordinates, system needs {}",
                x.len(),
                n * d
            )));
        }
        let smooth = spec.smooth_features();
        let zero = S::constant(0.0);
        let mut r_en = Vec::with_capacity(n * m);
        let mut r2_en = Vec::with_capacity(n * m);
        let mut feat1 = Vec::with_capacity(n * m * (d + 1));
        for j in 0..n {
            for nuc in &spec.nuclei {
                let mut r2 = zero;
                for c in 0..d {
                    let dx = x[j * d + c] - S::constant(nuc.position[c]);
                    feat1.push(dx);
                    r2 = r2 + dx * dx;
                }
                let r = r2.sqrt();
                feat1.push(if smooth { r2 } else { r });
                r_en.push(r);
                r2_en.push(r2);
            }
        }
        let mut feat2 = vec![zero; n * n * (d + 1)];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let base = (i * n + j) * (d + 1);
                let mut r2 = zero;
                for c in 0..d {
                    let dx = x[i * d + c] - x[j * d + c];
                    feat2[base + c] = dx;
                    r2 = r2 + dx * dx;
                }
                feat2[base + d] = if smooth { r2 } else { r2.sqrt() };
            }
        }
        Ok(Self {
            n,
            m,
            dim: d,
            smooth,
            r_en,
            r2_en,
            feat1,
            feat2,
        })
    }

    /// `sum_m exp(-a_m r_jm)` for atoms, `sum_m exp(-a_m r_jm² / 2)` for traps.
    pub fn envelope<P: Param<S>>(&self, decay: &[P], j: usize) -> S {
        let mut acc = S::constant(0.0);
        for (mi, d) in decay.iter().enumerate().take(self.m) {
            let a = d.lift();
            let arg = if self.smooth {
                a * self.r2_en[j * self.m + mi].scale(0.5)
            } else {
                a * self.r_en[j * self.m + mi]
            };
            acc = acc + (-arg).exp();
        }
        acc
    }
}

/// Per-electron embeddings `h` (`[N, W]`) and the final two-electron stream
/// `g` (`[N, N, Wg]`).
#[derive(Clone, Debug)]
pub struct Embeddings<S> {
    pub n: usize,
    pub width: usize,
    pub h: Vec<S>,
    pub g_width: usize,
    pub g: Vec<S>,
}

impl<S: Real> Embeddings<S> {
    pub fn row(&self, j: usize) -> &[S] {
        &self.h[j * self.width..(j + 1) * self.width]
    }

    pub fn pair(&self, i: usize, j: usize) -> &[S] {
        let b = (i * self.n + j) * self.g_width;
        &self.g[b..b + self.g_width]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_fn(self.n, self.width, |i, c| {
            self.h[i * self.width + c].value()
        })
    }

    /// Column means over all electrons, reduced in index order.
    pub fn mean(&self) -> Vec<S> {
        let mut acc = vec![S::constant(0.0); self.width];
        for j in 0..self.n {
            for (a, &v) in acc.iter_mut().zip(self.row(j)) {
                *a = *a + v;
            }
        }
        let inv = 1.0 / self.n as f64;
        acc.into_iter().map(|a| a.scale(inv)).collect()
    }
}

fn mean_rows<S: Real>(
    rows: &[S],
    width: usize,
    idx: impl Iterator<Item = usize>,
    out: &mut Vec<S>,
) {
    let start = out.len();
    out.extend(core::iter::repeat_n(S::constant(0.0), width));
    let mut count = 0usize;
    for j in idx {
        for (a, &v) in out[start..]
            .iter_mut()
            .zip(&rows[j * width..(j + 1) * width])
        {
            *a = *a + v;
        }
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        for a in &mut out[start..] {
            *a = a.scale(inv);
        }
    }
}

impl NetLayout {
    /// Runs the equivariant streams. With `interacting == false` all pooled
    /// inputs are zero, so each row depends on its own electron only.
    pub fn forward<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        geo: &Geometry<S>,
        interacting: bool,
    ) -> Result<Embeddings<S>> {
        let n = self.n_electrons;
        let up = 0..self.n_up;
        let down = self.n_up..n;
        let mut w1 = geo.feat1.len() / n.max(1);
        let mut w2 = self.dim + 1;
        let mut h = geo.feat1.clone();
        let mut g = geo.feat2.clone();
        let zero = S::constant(0.0);

        let mut input = Vec::new();
        for (l, layer) in self.one_layers.iter().enumerate() {
            let mut means = Vec::with_capacity(2 * w1);
            mean_rows(&h, w1, up.clone(), &mut means);
            mean_rows(&h, w1, down.clone(), &mut means);
            let mut next = Vec::with_capacity(n * layer.n_out);
            for j in 0..n {
                let spin = usize::from(j >= self.n_up);
                input.clear();
                input.extend_from_slice(&h[j * w1..(j + 1) * w1]);
                if interacting {
                    let (same, opp) = if spin == 0 { (0, 1) } else { (1, 0) };
                    input.extend_from_slice(&means[same * w1..(same + 1) * w1]);
                    input.extend_from_slice(&means[opp * w1..(opp + 1) * w1]);
                    let row = &g[j * n * w2..(j + 1) * n * w2];
                    let (same_set, opp_set) = if spin == 0 {
                        (up.clone(), down.clone())
                    } else {
                        (down.clone(), up.clone())
                    };
                    mean_rows(row, w2, same_set, &mut input);
                    mean_rows(row, w2, opp_set, &mut input);
                } else {
                    input.extend(core::iter::repeat_n(zero, layer.n_in - w1));
                }
                let start = next.len();
                layer.tanh_into(theta, &input, &mut next);
                if layer.n_out == w1 {
                    for (o, &prev) in next[start..].iter_mut().zip(&h[j * w1..(j + 1) * w1]) {
                        *o = *o + prev;
                    }
                }
            }
            h = next;
            w1 = layer.n_out;

            if interacting {
                if let Some(two) = self.two_layers.get(l) {
                    let mut next = Vec::with_capacity(n * n * two.n_out);
                    for ij in 0..n * n {
                        let src = &g[ij * w2..(ij + 1) * w2];
                        let start = next.len();
                        two.tanh_into(theta, src, &mut next);
                        if two.n_out == w2 {
                            for (o, &prev) in next[start..].iter_mut().zip(src) {
                                *o = *o + prev;
                            }
                        }
                    }
                    g = next;
                    w2 = two.n_out;
                }
            }
        }
        if !h.iter().all(|v| v.value().is_finite()) {
            return Err(Error::NonFinite("equivariant network"));
        }
        Ok(Embeddings {
            n,
            width: w1,
            h,
            g_width: w2,
            g,
        })
    }

    /// `phi_B(x_j; {x_\j})` for every electron of ensemble member `k`.
    pub fn head_phi_b<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        emb: &Embeddings<S>,
        geo: &Geometry<S>,
    ) -> Vec<S> {
        let mem = &self.members[k];
        let decay = &theta[mem.phi_b_decay..mem.phi_b_decay + self.n_centres];
        (0..emb.n)
            .map(|j| mem.phi_b.eval(theta, emb.row(j)) * geo.envelope(decay, j))
            .collect()
    }

    /// `phi_A`, present only for the two-function pair form.
    pub fn head_phi_a<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        emb: &Embeddings<S>,
        geo: &Geometry<S>,
    ) -> Option<Vec<S>> {
        let (head, off) = self.members[k].phi_a?;
        let decay = &theta[off..off + self.n_centres];
        Some(
            (0..emb.n)
                .map(|j| head.eval(theta, emb.row(j)) * geo.envelope(decay, j))
                .collect(),
        )
    }

    /// Orbital matrix `[N, N]` with entry `(i, j) = phi_i(x_j; {x_\j})`.
    pub fn head_orbitals<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        emb: &Embeddings<S>,
        geo: &Geometry<S>,
    ) -> Option<Vec<S>> {
        let (w, b, a) = self.members[k].orbitals?;
        let n = emb.n;
        let width = emb.width;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            let wi = &theta[w + i * width..w + (i + 1) * width];
            let decay = &theta[a + i * self.n_centres..a + (i + 1) * self.n_centres];
            for j in 0..n {
                out.push(P::affine(theta[b + i], wi, emb.row(j)) * geo.envelope(decay, j));
            }
        }
        Some(out)
    }

    /// Symmetric scalar `phi_C`: linear head on the mean embedding.
    pub fn head_phi_c<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        emb: &Embeddings<S>,
    ) -> Option<S> {
        let head = self.members[k].phi_c?;
        Some(head.eval(theta, &emb.mean()))
    }

    /// Two-electron `phi_B(x_i, x_j)` of the Han form as a matrix `[N, N]`.
    /// Sees only the two electrons' own features.
    pub fn han_pair_matrix<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        geo: &Geometry<S>,
    ) -> Option<Vec<S>> {
        let net = self.members[k].han_pair?;
        let n = geo.n;
        let f1 = geo.feat1.len() / n;
        let f2 = self.dim + 1;
        let mut input = Vec::with_capacity(2 * f1 + f2);
        let mut scratch = Vec::new();
        let mut out = vec![S::constant(0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                input.clear();
                input.extend_from_slice(&geo.feat1[i * f1..(i + 1) * f1]);
                input.extend_from_slice(&geo.feat1[j * f1..(j + 1) * f1]);
                let b = (i * n + j) * f2;
                input.extend_from_slice(&geo.feat2[b..b + f2]);
                out[i * n + j] = net.eval(theta, &input, &mut scratch);
            }
        }
        Some(out)
    }

    /// Generic pair function `F(x_i, x_j; {x_\{i,j}})` as a matrix `[N, N]`:
    /// a small network on `(h_i, h_j, g_ij, mean of h over the other N-2
    /// electrons)`.
    pub fn generic_pair_matrix<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        emb: &Embeddings<S>,
    ) -> Option<Vec<S>> {
        let net = self.members[k].generic_pair?;
        let n = emb.n;
        let w = emb.width;
        let mut total = vec![S::constant(0.0); w];
        for j in 0..n {
            for (t, &v) in total.iter_mut().zip(emb.row(j)) {
                *t = *t + v;
            }
        }
        let inv_rest = if n > 2 { 1.0 / (n - 2) as f64 } else { 0.0 };
        let mut input = Vec::with_capacity(3 * w + emb.g_width);
        let mut scratch = Vec::new();
        let mut out = vec![S::constant(0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                input.clear();
                input.extend_from_slice(emb.row(i));
                input.extend_from_slice(emb.row(j));
                input.extend_from_slice(emb.pair(i, j));
                input.extend(
                    total
                        .iter()
                        .zip(emb.row(i).iter().zip(emb.row(j)))
                        .map(|(&t, (&a, &b))| (t - a - b).scale(inv_rest)),
                );
                out[i * n + j] = net.eval(theta, &input, &mut scratch);
            }
        }
        Some(out)
    }

    /// `sum_j log(envelope(x_j))` over the given electrons.
    pub fn log_sym_envelope<S: Real, P: Param<S>>(
        &self,
        theta: &[P],
        k: usize,
        geo: &Geometry<S>,
        electrons: impl Iterator<Item = usize>,
    ) -> Option<S> {
        let off = self.members[k].sym_decay?;
        let decay = &theta[off..off + self.n_centres];
        let logs: Vec<S> = electrons.map(|j| geo.envelope(decay, j).ln()).collect();
        Some(S::sum(&logs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm::permute_electrons;

    fn small() -> NetConfig {
        NetConfig {
            layers: 2,
            one_width: 8,
            two_width: 4,
            pair_width: 4,
            ensemble: 1,
        }
    }

    fn gaussian_point(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = SystemSpec::lithium();
        let layout = NetLayout::new(AnsatzKind::PairPrime, &spec, &small()).unwrap();
        let a = layout.init_params(&spec, 7);
        let b = layout.init_params(&spec, 7);
        let c = layout.init_params(&spec, 8);
        assert_eq!(
            a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.data, c.data);
        assert!(a
            .tensor("one.0.b")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn lithium_decay_rates_start_at_nuclear_charge() {
        let spec = SystemSpec::lithium();
        for kind in AnsatzKind::ALL {
            let layout = NetLayout::new(kind, &spec, &small()).unwrap();
            let p = layout.init_params(&spec, 1);
            let decays: Vec<f64> = p
                .entries()
                .iter()
                .filter(|e| e.positive)
                .flat_map(|e| p.data[e.range()].to_vec())
                .collect();
            assert!(!decays.is_empty());
            assert!(decays.iter().all(|&a| a == 3.0), "{kind:?}");
        }
    }

    #[test]
    fn forward_is_equivariant_within_spin_blocks() {
        let spec = SystemSpec::atom(4.0, 3, 2);
        let layout = NetLayout::new(AnsatzKind::PairPrime, &spec, &small()).unwrap();
        let p = layout.init_params(&spec, 3);
        let x = gaussian_point(11, spec.n_coords());
        // swap electrons 0 and 2 (up) and 3 and 4 (down)
        let perm = [2, 1, 0, 4, 3];
        let xp = permute_electrons(&x, 3, &perm);
        let e = layout
            .forward(&p.data, &Geometry::new(&x, &spec).unwrap(), true)
            .unwrap();
        let ep = layout
            .forward(&p.data, &Geometry::new(&xp, &spec).unwrap(), true)
            .unwrap();
        for (k, &src) in perm.iter().enumerate() {
            for (a, b) in ep.row(k).iter().zip(e.row(src)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_electron_forward_is_finite() {
        let spec = SystemSpec::hydrogen();
        let layout = NetLayout::new(AnsatzKind::Fermi, &spec, &small()).unwrap();
        let p = layout.init_params(&spec, 0);
        let e = layout
            .forward(
                &p.data,
                &Geometry::new(&[0.2, -0.3, 0.5], &spec).unwrap(),
                true,
            )
            .unwrap();
        assert!(e.h.iter().all(|v| v.is_finite()));
        assert_eq!(e.h.len(), 8);
    }

    #[test]
    fn translation_invariance() {
        let mut spec = SystemSpec::atom(2.0, 2, 1);
        let layout = NetLayout::new(AnsatzKind::PairDouble, &spec, &small()).unwrap();
        let p = layout.init_params(&spec, 5);
        let x = gaussian_point(4, spec.n_coords());
        let e = layout
            .forward(&p.data, &Geometry::new(&x, &spec).unwrap(), true)
            .unwrap();
        let shift = [0.7, -1.3, 2.1];
        spec.nuclei[0].position = shift.to_vec();
        let xs: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v + shift[i % 3])
            .collect();
        let es = layout
            .forward(&p.data, &Geometry::new(&xs, &spec).unwrap(), true)
            .unwrap();
        for (a, b) in e.h.iter().zip(&es.h) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn heads_permute_and_vanish() {
        let spec = SystemSpec::atom(3.0, 3, 0);
        let layout = NetLayout::new(AnsatzKind::PairDouble, &spec, &small()).unwrap();
        let mut p = layout.init_params(&spec, 9);
        let x = gaussian_point(2, 9);
        let xp = permute_electrons(&x, 3, &[1, 0, 2]);
        let eval = |p: &NetParams, x: &[f64]| {
            let geo = Geometry::new(x, &spec).unwrap();
            let emb = layout.forward(&p.data, &geo, true).unwrap();
            (
                layout.head_phi_b(&p.data, 0, &emb, &geo),
                layout.head_phi_a(&p.data, 0, &emb, &geo).unwrap(),
            )
        };
        let (b, a) = eval(&p, &x);
        let (bp, ap) = eval(&p, &xp);
        for (u, v) in [(&b, &bp), (&a, &ap)] {
            assert!((u[0] - v[1]).abs() <= 1e-12 && (u[1] - v[0]).abs() <= 1e-12);
            assert!((u[2] - v[2]).abs() <= 1e-12);
        }
        p.set_zero("k0.phi_b.");
        p.set_zero("k0.phi_a.");
        let (b, a) = eval(&p, &x);
        assert!(b.iter().chain(&a).all(|&v| v == 0.0));
    }

    #[test]
    fn heads_decay_far_from_nucleus() {
        let spec = SystemSpec::atom(3.0, 2, 0);
        let layout = NetLayout::new(AnsatzKind::PairDouble, &spec, &small()).unwrap();
        let p = layout.init_params(&spec, 4);
        let at = |r: f64| {
            let x = [r, 0.0, 0.0, 0.5, 0.1, -0.2];
            let geo = Geometry::new(&x, &spec).unwrap();
            let emb = layout.forward(&p.data, &geo, true).unwrap();
            (
                layout.head_phi_b(&p.data, 0, &emb, &geo)[0].abs(),
                layout.head_phi_a(&p.data, 0, &emb, &geo).unwrap()[0].abs(),
            )
        };
        let (b50, a50) = at(50.0);
        let (b100, a100) = at(100.0);
        assert!(b100 <= b50 && a100 <= a50);
        assert!(b50 < 1e-50 && a50 < 1e-50);
    }

    #[test]
    fn orbitals_permute_columns_and_phi_c_is_symmetric() {
        let spec = SystemSpec::atom(2.0, 3, 0);
        let x = gaussian_point(8, 9);
        let xp = permute_electrons(&x, 3, &[2, 0, 1]);
        let fermi = NetLayout::new(AnsatzKind::Fermi, &spec, &small()).unwrap();
        let pf = fermi.init_params(&spec, 1);
        let han = NetLayout::new(AnsatzKind::Han, &spec, &small()).unwrap();
        let ph = han.init_params(&spec, 1);
        let orb = |x: &[f64]| {
            let geo = Geometry::new(x, &spec).unwrap();
            let emb = fermi.forward(&pf.data, &geo, true).unwrap();
            fermi.head_orbitals(&pf.data, 0, &emb, &geo).unwrap()
        };
        let phic = |x: &[f64]| {
            let geo = Geometry::new(x, &spec).unwrap();
            let emb = han.forward(&ph.data, &geo, true).unwrap();
            han.head_phi_c(&ph.data, 0, &emb).unwrap()
        };
        let (o, op) = (orb(&x), orb(&xp));
        for i in 0..3 {
            for (c, &src) in [2usize, 0, 1].iter().enumerate() {
                assert!((op[i * 3 + c] - o[i * 3 + src]).abs() <= 1e-12);
            }
        }
        assert!((phic(&x) - phic(&xp)).abs() <= 1e-12);
    }

    #[test]
    fn phi_c_equals_head_on_averaged_rows() {
        let spec = SystemSpec::atom(2.0, 2, 0);
        let han = NetLayout::new(AnsatzKind::Han, &spec, &small()).unwrap();
        let p = han.init_params(&spec, 12);
        let x = gaussian_point(5, 6);
        let geo = Geometry::new(&x, &spec).unwrap();
        let emb = han.forward(&p.data, &geo, true).unwrap();
        let w = p.tensor("k0.phi_c.w").unwrap();
        let avg: Vec<f64> = (0..8)
            .map(|c| (emb.row(0)[c] + emb.row(1)[c]) / 2.0)
            .collect();
        let manual: f64 = w.data().iter().zip(&avg).map(|(a, b)| a * b).sum();
        let got = han.head_phi_c(&p.data, 0, &emb).unwrap();
        assert!((got - manual).abs() <= 1e-12);
    }

    #[test]
    fn named_tensors_round_trip_and_shape_checks() {
        let spec = SystemSpec::hydrogen();
        let layout = NetLayout::new(AnsatzKind::Fermi, &spec, &small()).unwrap();
        let p = layout.init_params(&spec, 2);
        let mut q = layout.zeros();
        q.assign_named(&p.named_tensors()).unwrap();
        assert_eq!(p, q);
        let mut bad = p.named_tensors();
        bad[0].1 = Tensor::zeros(vec![1]);
        assert!(q.assign_named(&bad).is_err());
    }
}
