//! Rank-`R` BiLSTM attention. Every cell reads the query embedding at each of
//! the `L` steps; position `i` joins the forward state after `i` steps with the
//! backward state after `L - i + 1` steps, and one shared projection plus
//! softmax maps it to weights over the identity and the `|P|` predicates.

use super::{sigmoid, CellDirection, CellIndex, ModelParams};

/// `R × L × (|P| + 1)` weights; operator 0 is the identity. Also used for
/// gradients with respect to the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    rank: usize,
    max_len: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttentionTensor {
    pub fn zeros(rank: usize, max_len: usize, width: usize) -> Self {
        AttentionTensor {
            rank,
            max_len,
            width,
            values: vec![0.0; rank * max_len * width],
        }
    }

    /// Builds a tensor from `f(r, l, k)`, `l` 0-based.
    pub fn from_fn(rank: usize, max_len: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(rank, max_len, width);
        for r in 0..rank {
            for l in 0..max_len {
                for k in 0..width {
                    t.values[(r * max_len + l) * width + k] = f(r, l, k);
                }
            }
        }
        t
    }

    /// Single rank with one operator per hop (operator indices, 0 = identity).
    pub fn one_hot(width: usize, hops: &[usize]) -> Self {
        Self::from_fn(1, hops.len(), width, |_, l, k| (k == hops[l]) as u8 as f64)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, l: usize, k: usize) -> f64 {
        self.values[(r * self.max_len + l) * self.width + k]
    }

    pub fn slice(&self, r: usize, l: usize) -> &[f64] {
        let s = (r * self.max_len + l) * self.width;
        &self.values[s..s + self.width]
    }

    pub fn slice_mut(&mut self, r: usize, l: usize) -> &mut [f64] {
        let s = (r * self.max_len + l) * self.width;
        &mut self.values[s..s + self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn add_assign(&mut self, other: &AttentionTensor) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// `W · x` for a row-major `rows × x.len()` matrix.
fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ · g`.
fn matvec_t(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `W += g ⊗ x`.
fn outer_add(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(x) {
            *a += gi * b;
        }
    }
}

#[derive(Clone, Debug)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `i, f, g, o`, each `d_h` long.
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Clone, Debug)]
struct CellCache {
    steps: Vec<StepCache>,
}

/// Intermediate values kept for [`attention_backward`].
#[derive(Clone, Debug)]
pub struct AttentionCache {
    query: usize,
    cells: Vec<[CellCache; 2]>,
    attention: AttentionTensor,
}

impl AttentionCache {
    pub fn query(&self) -> usize {
        self.query
    }

    pub fn attention(&self) -> &AttentionTensor {
        &self.attention
    }
}

fn run_cell(params: &ModelParams, cell: CellIndex, x: &[f64], steps: usize) -> CellCache {
    let dh = params.shape().hidden_dim;
    let mut wx = params.data(cell.bias).to_vec();
    matvec(params.data(cell.w_x), x, &mut wx);
    let mut h = vec![0.0; dh];
    let mut c = vec![0.0; dh];
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut z = wx.clone();
        matvec(params.data(cell.w_h), &h, &mut z);
        let mut gates = z;
        for (k, v) in gates.iter_mut().enumerate() {
            *v = if (2 * dh..3 * dh).contains(&k) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let (i, rest) = gates.split_at(dh);
        let (f, rest) = rest.split_at(dh);
        let (g, o) = rest.split_at(dh);
        let c_new: Vec<f64> = (0..dh).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let h_new: Vec<f64> = (0..dh).map(|k| o[k] * c_new[k].tanh()).collect();
        out.push(StepCache {
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new.clone()),
            gates,
            c: c_new,
            h: h_new,
        });
    }
    CellCache { steps: out }
}

fn joined_state(cells: &[CellCache; 2], pos: usize, len: usize) -> Vec<f64> {
    let mut cat = cells[0].steps[pos].h.clone();
    cat.extend_from_slice(&cells[1].steps[len - 1 - pos].h);
    cat
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Attention over operators for query predicate `q`.
pub fn attention_forward(params: &ModelParams, q: usize) -> (AttentionTensor, AttentionCache) {
    let shape = params.shape();
    assert!(q < shape.num_predicates, "query predicate {q} out of range");
    let (de, len, width) = (shape.embed_dim, shape.max_len, shape.num_operators());
    let x = &params.data(params.embeddings())[q * de..(q + 1) * de];
    let mut attn = AttentionTensor::zeros(shape.rank, len, width);
    let mut cells = Vec::with_capacity(shape.rank);
    for r in 0..shape.rank {
        let pair = [
            run_cell(params, params.cell(r, CellDirection::Forward), x, len),
            run_cell(params, params.cell(r, CellDirection::Backward), x, len),
        ];
        for pos in 0..len {
            let cat = joined_state(&pair, pos, len);
            let out = attn.slice_mut(r, pos);
            out.copy_from_slice(params.data(params.projection_b()));
            matvec(params.data(params.projection_w()), &cat, out);
            softmax_in_place(out);
        }
        cells.push(pair);
    }
    let cache = AttentionCache {
        query: q,
        cells,
        attention: attn.clone(),
    };
    (attn, cache)
}

/// Back-propagates `grad` (loss gradient w.r.t. the attention weights) into
/// `grads`, which must have the layout of `params`.
pub fn attention_backward(
    params: &ModelParams,
    cache: &AttentionCache,
    grad: &AttentionTensor,
    grads: &mut ModelParams,
) {
    let shape = params.shape();
    let (de, dh, len, width) = (shape.embed_dim, shape.hidden_dim, shape.max_len, shape.num_operators());
    let q = cache.query;
    let x = params.data(params.embeddings())[q * de..(q + 1) * de].to_vec();
    let mut g_x = vec![0.0; de];

    for r in 0..shape.rank {
        let pair = &cache.cells[r];
        // dL/dh per direction and step, from the projection.
        let mut g_h = [vec![vec![0.0; dh]; len], vec![vec![0.0; dh]; len]];
        for pos in 0..len {
            let a = cache.attention.slice(r, pos);
            let g = grad.slice(r, pos);
            let dot: f64 = a.iter().zip(g).map(|(x, y)| x * y).sum();
            let g_logit: Vec<f64> = a.iter().zip(g).map(|(ai, gi)| ai * (gi - dot)).collect();
            let cat = joined_state(pair, pos, len);
            outer_add(grads.data_mut(params.projection_w()), &g_logit, &cat);
            for (b, gl) in grads.data_mut(params.projection_b()).iter_mut().zip(&g_logit) {
                *b += gl;
            }
            let mut g_cat = vec![0.0; 2 * dh];
            matvec_t(params.data(params.projection_w()), &g_logit, &mut g_cat);
            for k in 0..dh {
                g_h[0][pos][k] += g_cat[k];
                g_h[1][len - 1 - pos][k] += g_cat[dh + k];
            }
        }
        debug_assert_eq!(width, params.data(params.projection_b()).len());

        for dir in [CellDirection::Forward, CellDirection::Backward] {
            let cell = params.cell(r, dir);
            let steps = &pair[dir as usize].steps;
            let mut dh_next = vec![0.0; dh];
            let mut dc_next = vec![0.0; dh];
            let mut dz_sum = vec![0.0; 4 * dh];
            for s in (0..len).rev() {
                let st = &steps[s];
                let (i, rest) = st.gates.split_at(dh);
                let (f, rest) = rest.split_at(dh);
                let (g, o) = rest.split_at(dh);
                let mut dz = vec![0.0; 4 * dh];
                for k in 0..dh {
                    let gh = g_h[dir as usize][s][k] + dh_next[k];
                    let tc = st.c[k].tanh();
                    let gc = dc_next[k] + gh * o[k] * (1.0 - tc * tc);
                    dz[k] = gc * g[k] * i[k] * (1.0 - i[k]);
                    dz[dh + k] = gc * st.c_prev[k] * f[k] * (1.0 - f[k]);
                    dz[2 * dh + k] = gc * i[k] * (1.0 - g[k] * g[k]);
                    dz[3 * dh + k] = gh * tc * o[k] * (1.0 - o[k]);
                    dc_next[k] = gc * f[k];
                }
                outer_add(grads.data_mut(cell.w_h), &dz, &st.h_prev);
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                matvec_t(params.data(cell.w_h), &dz, &mut dh_next);
                for (a, b) in dz_sum.iter_mut().zip(&dz) {
                    *a += b;
                }
            }
            outer_add(grads.data_mut(cell.w_x), &dz_sum, &x);
            for (b, d) in grads.data_mut(cell.bias).iter_mut().zip(&dz_sum) {
                *b += d;
            }
            matvec_t(params.data(cell.w_x), &dz_sum, &mut g_x);
        }
    }
    let emb = grads.data_mut(params.embeddings());
    for (e, g) in emb[q * de..(q + 1) * de].iter_mut().zip(&g_x) {
        *e += g;
    }
}
