//! Gated recurrent unit.
//!
//! Convention used everywhere in the crate:
//!
//! ```text
//! z  = sigmoid(x Wz + h Uz + bz)          update gate
//! r  = sigmoid(x Wr + h Ur + br)          reset gate
//! c  = tanh(x Wc + (r * h) Uc + bc)       candidate
//! h' = (1 - z) * h + z * c
//! ```
//!
//! Three evaluation paths exist: [`GruCellParams::step`] on plain buffers
//! (rollouts), [`gru_step`] built from primitive graph ops, and the fused
//! [`gru_sequence`] op that unrolls a whole sequence with a hand-written
//! backward pass. The fused op batches every time-independent matrix product.

use rand::Rng;

use super::graph::{add_into, sigmoid, slot, Graph, Op, Var};
use super::init::uniform_fan_in;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GruCellParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub wz: Tensor,
    pub uz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub ur: Tensor,
    pub br: Tensor,
    pub wc: Tensor,
    pub uc: Tensor,
    pub bc: Tensor,
}

/// Graph handles for the nine GRU parameter tensors.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wc: Var,
    pub uc: Var,
    pub bc: Var,
}

impl GruVars {
    fn all(&self) -> [Var; 9] {
        [
            self.wz, self.uz, self.bz, self.wr, self.ur, self.br, self.wc, self.uc, self.bc,
        ]
    }
}

impl GruCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let (i, h) = (input_dim, hidden_dim);
        GruCellParams {
            input_dim,
            hidden_dim,
            wz: Tensor::zeros(&[i, h]),
            uz: Tensor::zeros(&[h, h]),
            bz: Tensor::zeros(&[h]),
            wr: Tensor::zeros(&[i, h]),
            ur: Tensor::zeros(&[h, h]),
            br: Tensor::zeros(&[h]),
            wc: Tensor::zeros(&[i, h]),
            uc: Tensor::zeros(&[h, h]),
            bc: Tensor::zeros(&[h]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let (i, h) = (input_dim, hidden_dim);
        GruCellParams {
            input_dim,
            hidden_dim,
            wz: uniform_fan_in(i, h, rng),
            uz: uniform_fan_in(h, h, rng),
            bz: Tensor::zeros(&[h]),
            wr: uniform_fan_in(i, h, rng),
            ur: uniform_fan_in(h, h, rng),
            br: Tensor::zeros(&[h]),
            wc: uniform_fan_in(i, h, rng),
            uc: uniform_fan_in(h, h, rng),
            bc: Tensor::zeros(&[h]),
        }
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        3 * (input_dim * hidden_dim + hidden_dim * hidden_dim + hidden_dim)
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("wz", &self.wz),
            ("uz", &self.uz),
            ("bz", &self.bz),
            ("wr", &self.wr),
            ("ur", &self.ur),
            ("br", &self.br),
            ("wc", &self.wc),
            ("uc", &self.uc),
            ("bc", &self.bc),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 9] {
        [
            ("wz", &mut self.wz),
            ("uz", &mut self.uz),
            ("bz", &mut self.bz),
            ("wr", &mut self.wr),
            ("ur", &mut self.ur),
            ("br", &mut self.br),
            ("wc", &mut self.wc),
            ("uc", &mut self.uc),
            ("bc", &mut self.bc),
        ]
    }

    pub fn bind(&self, g: &mut Graph) -> GruVars {
        GruVars {
            wz: g.param(&self.wz),
            uz: g.param(&self.uz),
            bz: g.param(&self.bz),
            wr: g.param(&self.wr),
            ur: g.param(&self.ur),
            br: g.param(&self.br),
            wc: g.param(&self.wc),
            uc: g.param(&self.uc),
            bc: g.param(&self.bc),
        }
    }

    /// One step on a batch of rows: `x [B x input]`, `h [B x hidden]`.
    /// Returns the new hidden state `[B x hidden]`.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let (ni, nh) = (self.input_dim, self.hidden_dim);
        if x.len() % ni != 0 || h.len() % nh != 0 || x.len() / ni != h.len() / nh {
            return Err(Error::config(format!(
                "gru step: input {} / hidden {} do not fit cell ({ni} -> {nh})",
                x.len(),
                h.len()
            )));
        }
        let b = h.len() / nh;
        let affine = |w: &Tensor, u: &Tensor, bias: &Tensor, hin: &[f64]| {
            let mut out = vec![0.0; b * nh];
            for row in out.chunks_mut(nh) {
                row.copy_from_slice(bias.data());
            }
            gemm(b, ni, nh, x, false, w.data(), false, 1.0, &mut out);
            gemm(b, nh, nh, hin, false, u.data(), false, 1.0, &mut out);
            out
        };
        let mut z = affine(&self.wz, &self.uz, &self.bz, h);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = affine(&self.wr, &self.ur, &self.br, h);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut c = affine(&self.wc, &self.uc, &self.bc, &rh);
        c.iter_mut().for_each(|v| *v = v.tanh());
        Ok((0..b * nh)
            .map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i])
            .collect())
    }
}

/// One GRU step assembled from primitive graph operations.
pub fn gru_step(g: &mut Graph, x: Var, h: Var, p: &GruVars) -> Result<Var> {
    let xdim = g.value(x).cols();
    let hdim = g.value(h).cols();
    let (pi, ph) = (g.value(p.wz).rows(), g.value(p.wz).cols());
    if xdim != pi || hdim != ph || g.value(x).rows() != g.value(h).rows() {
        return Err(Error::config(format!(
            "gru step: x {:?}, h {:?} against cell {pi} -> {ph}",
            g.value(x).shape(),
            g.value(h).shape()
        )));
    }
    let gate = |g: &mut Graph, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(hin, u)?;
        let s = g.add(xw, hu)?;
        g.add_row(s, b)
    };
    let az = gate(g, p.wz, p.uz, p.bz, h)?;
    let z = g.sigmoid(az);
    let ar = gate(g, p.wr, p.ur, p.br, h)?;
    let r = g.sigmoid(ar);
    let rh = g.mul(r, h)?;
    let ac = gate(g, p.wc, p.uc, p.bc, rh)?;
    let c = g.tanh(ac);
    let keep = g.one_minus(z);
    let a = g.mul(keep, h)?;
    let b = g.mul(z, c)?;
    g.add(a, b)
}

pub(crate) struct GruSeqCache {
    x: Var,
    h0: Var,
    p: GruVars,
    steps: usize,
    batch: usize,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    hprev: Vec<f64>,
    rh: Vec<f64>,
}

/// Unrolls the cell over `steps` time steps.
///
/// `x` is `[steps * batch x input]` in time-major row order (row
/// `t * batch + b`), `h0` is `[batch x hidden]`. The output holds every
/// hidden state `h_1..h_T` in the same row order.
pub fn gru_sequence(
    g: &mut Graph,
    x: Var,
    h0: Var,
    p: &GruVars,
    steps: usize,
    batch: usize,
) -> Result<Var> {
    let (ni, nh) = (g.value(p.wz).rows(), g.value(p.wz).cols());
    let xt = g.value(x);
    let ht = g.value(h0);
    if xt.cols() != ni || xt.rows() != steps * batch || ht.cols() != nh || ht.rows() != batch {
        return Err(Error::config(format!(
            "gru sequence: x {:?}, h0 {:?}, {steps} steps x {batch} rows against cell {ni} -> {nh}",
            xt.shape(),
            ht.shape()
        )));
    }
    let n = steps * batch;
    let val = |v: Var| g.value(v).data();

    // Input projections for all steps at once, biases folded in.
    let project = |w: Var, b: Var| {
        let mut out = vec![0.0; n * nh];
        for row in out.chunks_mut(nh) {
            row.copy_from_slice(val(b));
        }
        gemm(n, ni, nh, val(x), false, val(w), false, 1.0, &mut out);
        out
    };
    let mut z = project(p.wz, p.bz);
    let mut r = project(p.wr, p.br);
    let mut c = project(p.wc, p.bc);

    // [Uz | Ur] side by side so both recurrent products are one gemm.
    let mut uzr = vec![0.0; nh * 2 * nh];
    for i in 0..nh {
        uzr[i * 2 * nh..i * 2 * nh + nh].copy_from_slice(&val(p.uz)[i * nh..(i + 1) * nh]);
        uzr[i * 2 * nh + nh..(i + 1) * 2 * nh].copy_from_slice(&val(p.ur)[i * nh..(i + 1) * nh]);
    }
    let uc = val(p.uc).to_vec();

    let mut hprev = vec![0.0; n * nh];
    let mut rh = vec![0.0; n * nh];
    let mut out = vec![0.0; n * nh];
    let mut h = val(h0).to_vec();
    let mut zr = vec![0.0; batch * 2 * nh];
    let mut cu = vec![0.0; batch * nh];
    let bn = batch * nh;
    for t in 0..steps {
        let span = t * bn..(t + 1) * bn;
        hprev[span.clone()].copy_from_slice(&h);
        gemm(batch, nh, 2 * nh, &h, false, &uzr, false, 0.0, &mut zr);
        for bi in 0..batch {
            for j in 0..nh {
                let k = t * bn + bi * nh + j;
                z[k] = sigmoid(z[k] + zr[bi * 2 * nh + j]);
                r[k] = sigmoid(r[k] + zr[bi * 2 * nh + nh + j]);
                rh[k] = r[k] * h[bi * nh + j];
            }
        }
        gemm(batch, nh, nh, &rh[span.clone()], false, &uc, false, 0.0, &mut cu);
        for i in 0..bn {
            let k = t * bn + i;
            c[k] = (c[k] + cu[i]).tanh();
            h[i] = (1.0 - z[k]) * h[i] + z[k] * c[k];
        }
        out[span].copy_from_slice(&h);
    }

    let needs = g.requires_grad(x) || g.requires_grad(h0) || p.all().iter().any(|&v| g.requires_grad(v));
    let cache = GruSeqCache {
        x,
        h0,
        p: *p,
        steps,
        batch,
        z,
        r,
        c,
        hprev,
        rh,
    };
    let out = Tensor::matrix(n, nh, out)?;
    Ok(g.push(out, Op::GruSeq(Box::new(cache)), needs))
}

pub(crate) fn backward(
    g: &Graph,
    cache: &GruSeqCache,
    gout: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let p = &cache.p;
    let (ni, nh) = (g.value(p.wz).rows(), g.value(p.wz).cols());
    let (steps, batch) = (cache.steps, cache.batch);
    let n = steps * batch;
    let bn = batch * nh;
    let (uz, ur, uc) = (
        g.value(p.uz).data(),
        g.value(p.ur).data(),
        g.value(p.uc).data(),
    );

    let mut daz = vec![0.0; n * nh];
    let mut dar = vec![0.0; n * nh];
    let mut dac = vec![0.0; n * nh];
    let mut dh = vec![0.0; bn];
    let mut drh = vec![0.0; bn];
    let mut tmp = vec![0.0; bn];
    for t in (0..steps).rev() {
        let base = t * bn;
        for i in 0..bn {
            dh[i] += gout[base + i];
        }
        // dh now holds dL/dh_t; split into the pieces of h_t.
        for i in 0..bn {
            let k = base + i;
            let (z, c, hp) = (cache.z[k], cache.c[k], cache.hprev[k]);
            dac[k] = dh[i] * z * (1.0 - c * c);
            daz[k] = dh[i] * (c - hp) * z * (1.0 - z);
            dh[i] *= 1.0 - z;
        }
        gemm(batch, nh, nh, &dac[base..base + bn], false, uc, true, 0.0, &mut drh);
        for i in 0..bn {
            let k = base + i;
            let r = cache.r[k];
            dar[k] = drh[i] * cache.hprev[k] * r * (1.0 - r);
            dh[i] += drh[i] * r;
        }
        gemm(batch, nh, nh, &daz[base..base + bn], false, uz, true, 0.0, &mut tmp);
        add_into(&mut dh, &tmp);
        gemm(batch, nh, nh, &dar[base..base + bn], false, ur, true, 0.0, &mut tmp);
        add_into(&mut dh, &tmp);
    }

    let xval = g.value(cache.x).data();
    let weight_grads = [
        (p.wz, p.uz, p.bz, &daz, &cache.hprev),
        (p.wr, p.ur, p.br, &dar, &cache.hprev),
        (p.wc, p.uc, p.bc, &dac, &cache.rh),
    ];
    for (w, u, b, da, hin) in weight_grads {
        if g.requires_grad(w) {
            gemm(ni, n, nh, xval, true, da, false, 1.0, slot(grads, w, ni * nh));
        }
        if g.requires_grad(u) {
            gemm(nh, n, nh, hin, true, da, false, 1.0, slot(grads, u, nh * nh));
        }
        if g.requires_grad(b) {
            let buf = slot(grads, b, nh);
            for row in da.chunks(nh) {
                add_into(buf, row);
            }
        }
    }
    if g.requires_grad(cache.x) {
        let buf = slot(grads, cache.x, n * ni);
        gemm(n, nh, ni, &daz, false, g.value(p.wz).data(), true, 1.0, buf);
        gemm(n, nh, ni, &dar, false, g.value(p.wr).data(), true, 1.0, buf);
        gemm(n, nh, ni, &dac, false, g.value(p.wc).data(), true, 1.0, buf);
    }
    if g.requires_grad(cache.h0) {
        add_into(slot(grads, cache.h0, bn), &dh);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_everything_gives_zero_state() {
        let p = GruCellParams::zeros(3, 4);
        let h = p.step(&[0.0; 3], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn zero_candidate_halves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = GruCellParams::init(3, 4, &mut rng);
        // z = sigmoid(0) needs the update-gate weights zeroed as well.
        p.wz = Tensor::zeros(&[3, 4]);
        p.uz = Tensor::zeros(&[4, 4]);
        p.wc = Tensor::zeros(&[3, 4]);
        p.uc = Tensor::zeros(&[4, 4]);
        let h = [0.3, -0.7, 1.1, 0.05];
        let out = p.step(&[0.4, -1.0, 2.0], &h).unwrap();
        for (o, hi) in out.iter().zip(h) {
            assert!((o - 0.5 * hi).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = GruCellParams::zeros(3, 4);
        assert!(matches!(p.step(&[0.0; 2], &[0.0; 4]), Err(Error::Config(_))));
        let mut g = Graph::new();
        let vars = p.bind(&mut g);
        let x = g.constant(Tensor::zeros(&[1, 2]));
        let h = g.constant(Tensor::zeros(&[1, 4]));
        assert!(gru_step(&mut g, x, h, &vars).is_err());
        assert!(gru_sequence(&mut g, x, h, &vars, 1, 1).is_err());
    }

    #[test]
    fn three_paths_agree_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = GruCellParams::init(3, 5, &mut rng);
        let (steps, batch) = (4, 2);
        let xs: Vec<f64> = (0..steps * batch * 3).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect();
        let h0: Vec<f64> = (0..batch * 5).map(|i| (i as f64 * 0.1).sin()).collect();

        let mut plain = Vec::new();
        let mut h = h0.clone();
        for t in 0..steps {
            h = p.step(&xs[t * batch * 3..(t + 1) * batch * 3], &h).unwrap();
            plain.extend_from_slice(&h);
        }

        let mut g = Graph::new();
        let vars = p.bind(&mut g);
        let x = g.constant(Tensor::matrix(steps * batch, 3, xs.clone()).unwrap());
        let hv = g.constant(Tensor::matrix(batch, 5, h0.clone()).unwrap());
        let fused = gru_sequence(&mut g, x, hv, &vars, steps, batch).unwrap();
        let mut hcur = hv;
        let mut composed = Vec::new();
        for t in 0..steps {
            let xt = g.constant(
                Tensor::matrix(batch, 3, xs[t * batch * 3..(t + 1) * batch * 3].to_vec()).unwrap(),
            );
            hcur = gru_step(&mut g, xt, hcur, &vars).unwrap();
            composed.extend_from_slice(g.value(hcur).data());
        }
        for ((a, b), c) in plain.iter().zip(g.value(fused).data()).zip(&composed) {
            assert!((a - b).abs() < 1e-14 && (a - c).abs() < 1e-14);
        }
    }
}
