//! Convolutional subnetworks for the scale and bias functions of coupling
//! layers: a plain 2-conv stack for desk-scale work and a 2-level U-Net
//! for full-scale configs. Forward, JVP, input-VJP and parameter gradients
//! are all hand-written; tanh activations keep every path smooth.

use crate::error::{Error, Result};
use crate::substrate::rng::Rng;
use crate::substrate::tensor::Vol;

/// 3×3 convolution with zero same-padding and stride 1 or 2.
#[derive(Debug, Clone)]
pub(crate) struct Conv2d {
    pub k: Vec<f32>, // [dy][dx][cin][cout], row-major
    pub bias: Vec<f32>,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

impl Conv2d {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / ((9 * cin) as f64).sqrt();
        let k = (0..9 * cin * cout)
            .map(|_| (rng.normal() * scale) as f32)
            .collect();
        Conv2d {
            k,
            bias: vec![0.0; cout],
            cin,
            cout,
            stride,
        }
    }

    fn new_zero(cin: usize, cout: usize) -> Self {
        Conv2d {
            k: vec![0.0; 9 * cin * cout],
            bias: vec![0.0; cout],
            cin,
            cout,
            stride: 1,
        }
    }

    #[inline]
    fn kidx(&self, dy: usize, dx: usize, i: usize, o: usize) -> usize {
        ((dy * 3 + dx) * self.cin + i) * self.cout + o
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        if self.stride == 1 {
            (h, w)
        } else {
            (h.div_ceil(2), w.div_ceil(2))
        }
    }

    fn forward(&self, x: &Vol) -> Vol {
        debug_assert_eq!(x.c, self.cin);
        let (oh, ow) = self.out_hw(x.h, x.w);
        let mut out = Vol::zeros(oh, ow, self.cout);
        for hy in 0..oh {
            for hx in 0..ow {
                for dy in 0..3 {
                    let sy = (self.stride * hy + dy) as isize - 1;
                    if sy < 0 || sy >= x.h as isize {
                        continue;
                    }
                    for dx in 0..3 {
                        let sx = (self.stride * hx + dx) as isize - 1;
                        if sx < 0 || sx >= x.w as isize {
                            continue;
                        }
                        for i in 0..self.cin {
                            let xv = x.at(sy as usize, sx as usize, i);
                            if xv == 0.0 {
                                continue;
                            }
                            let base = self.kidx(dy, dx, i, 0);
                            for o in 0..self.cout {
                                *out.at_mut(hy, hx, o) += self.k[base + o] as f64 * xv;
                            }
                        }
                    }
                }
                for o in 0..self.cout {
                    *out.at_mut(hy, hx, o) += self.bias[o] as f64;
                }
            }
        }
        out
    }

    /// Directional derivative in the input: the convolution applied to the
    /// tangent, without the bias.
    fn jvp(&self, t: &Vol) -> Vol {
        let mut z = self.clone();
        z.bias = vec![0.0; self.cout];
        z.forward(t)
    }

    /// Backward pass: accumulates the input cotangent and, when `grads` is
    /// given, kernel/bias gradients into [k..., bias...] layout.
    fn vjp(&self, x: &Vol, cot: &Vol, grads: Option<&mut [f64]>) -> Vol {
        let (oh, ow) = self.out_hw(x.h, x.w);
        debug_assert_eq!((cot.h, cot.w, cot.c), (oh, ow, self.cout));
        let mut xbar = Vol::zeros(x.h, x.w, x.c);
        let mut gref = grads;
        for hy in 0..oh {
            for hx in 0..ow {
                for dy in 0..3 {
                    let sy = (self.stride * hy + dy) as isize - 1;
                    if sy < 0 || sy >= x.h as isize {
                        continue;
                    }
                    for dx in 0..3 {
                        let sx = (self.stride * hx + dx) as isize - 1;
                        if sx < 0 || sx >= x.w as isize {
                            continue;
                        }
                        for i in 0..self.cin {
                            let base = self.kidx(dy, dx, i, 0);
                            let xv = x.at(sy as usize, sx as usize, i);
                            let mut acc = 0.0;
                            for o in 0..self.cout {
                                let c = cot.at(hy, hx, o);
                                acc += self.k[base + o] as f64 * c;
                                if let Some(g) = gref.as_deref_mut() {
                                    g[base + o] += xv * c;
                                }
                            }
                            *xbar.at_mut(sy as usize, sx as usize, i) += acc;
                        }
                    }
                }
                if let Some(g) = gref.as_deref_mut() {
                    let boff = 9 * self.cin * self.cout;
                    for o in 0..self.cout {
                        g[boff + o] += cot.at(hy, hx, o);
                    }
                }
            }
        }
        xbar
    }

    fn n_params(&self) -> usize {
        self.k.len() + self.bias.len()
    }

    fn read_params(&self, out: &mut Vec<f32>) {
        out.extend_from_slice(&self.k);
        out.extend_from_slice(&self.bias);
    }

    fn write_params(&mut self, src: &[f32]) {
        let nk = self.k.len();
        let nb = self.bias.len();
        self.k.copy_from_slice(&src[..nk]);
        self.bias.copy_from_slice(&src[nk..nk + nb]);
    }
}

fn tanh_vol(x: &Vol) -> Vol {
    Vol {
        h: x.h,
        w: x.w,
        c: x.c,
        data: x.data.iter().map(|v| v.tanh()).collect(),
    }
}

/// d tanh = 1 − tanh², elementwise on a cached tanh output.
fn tanh_bwd(tanh_out: &Vol, cot: &Vol) -> Vol {
    Vol {
        h: cot.h,
        w: cot.w,
        c: cot.c,
        data: tanh_out
            .data
            .iter()
            .zip(&cot.data)
            .map(|(y, c)| (1.0 - y * y) * c)
            .collect(),
    }
}

fn upsample2(x: &Vol) -> Vol {
    let mut out = Vol::zeros(x.h * 2, x.w * 2, x.c);
    for y in 0..out.h {
        for xx in 0..out.w {
            for c in 0..x.c {
                *out.at_mut(y, xx, c) = x.at(y / 2, xx / 2, c);
            }
        }
    }
    out
}

fn upsample2_bwd(cot: &Vol) -> Vol {
    let mut out = Vol::zeros(cot.h / 2, cot.w / 2, cot.c);
    for y in 0..cot.h {
        for xx in 0..cot.w {
            for c in 0..cot.c {
                *out.at_mut(y / 2, xx / 2, c) += cot.at(y, xx, c);
            }
        }
    }
    out
}

fn concat_c(a: &Vol, b: &Vol) -> Vol {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut out = Vol::zeros(a.h, a.w, a.c + b.c);
    for y in 0..a.h {
        for x in 0..a.w {
            for c in 0..a.c {
                *out.at_mut(y, x, c) = a.at(y, x, c);
            }
            for c in 0..b.c {
                *out.at_mut(y, x, a.c + c) = b.at(y, x, c);
            }
        }
    }
    out
}

fn split_c(v: &Vol, ca: usize) -> (Vol, Vol) {
    let cb = v.c - ca;
    let mut a = Vol::zeros(v.h, v.w, ca);
    let mut b = Vol::zeros(v.h, v.w, cb);
    for y in 0..v.h {
        for x in 0..v.w {
            for c in 0..ca {
                *a.at_mut(y, x, c) = v.at(y, x, c);
            }
            for c in 0..cb {
                *b.at_mut(y, x, c) = v.at(y, x, ca + c);
            }
        }
    }
    (a, b)
}

/// Which subnet topology to build for coupling scale/bias functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubnetKind {
    /// conv → tanh → conv, last conv zero-initialized.
    Plain { hidden: usize },
    /// 2-level U-Net (two stride-2 down blocks, two up blocks with skip
    /// concatenation, 32 then 64 channels), last conv zero-initialized.
    UNet,
}

#[derive(Debug, Clone)]
pub(crate) enum Subnet {
    Plain { c1: Conv2d, c2: Conv2d },
    UNet(Box<UNet>),
}

#[derive(Debug, Clone)]
pub(crate) struct UNet {
    enc_a: Conv2d,  // cin -> 32
    enc_b: Conv2d,  // 32 -> 32
    down1: Conv2d,  // 32 -> 32, stride 2
    enc_c: Conv2d,  // 32 -> 64
    enc_d: Conv2d,  // 64 -> 64
    down2: Conv2d,  // 64 -> 64, stride 2
    mid: Conv2d,    // 64 -> 64
    dec_a: Conv2d,  // 128 -> 64
    dec_b: Conv2d,  // 96 -> 32
    out: Conv2d,    // 32 -> cout, zero-init
}

const W1: usize = 32;
const W2: usize = 64;

pub(crate) enum SubnetCache {
    Plain {
        x: Vol,
        t1: Vol,
    },
    UNet(Box<UNetCache>),
}

pub(crate) struct UNetCache {
    x: Vol,
    a1: Vol,
    a2: Vol,
    d1: Vol,
    a3: Vol,
    a4: Vol,
    d2: Vol,
    m: Vol,
    cat2: Vol,
    b2: Vol,
    cat1: Vol,
    b1: Vol,
}

impl Subnet {
    pub fn new(kind: SubnetKind, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        match kind {
            SubnetKind::Plain { hidden } => {
                let mut r1 = rng.split(1);
                Subnet::Plain {
                    c1: Conv2d::new(cin, hidden, 1, &mut r1),
                    c2: Conv2d::new_zero(hidden, cout),
                }
            }
            SubnetKind::UNet => {
                let mut r = rng.split(2);
                let mut down1 = Conv2d::new(W1, W1, 2, &mut r);
                down1.stride = 2;
                let mut down2 = Conv2d::new(W2, W2, 2, &mut r);
                down2.stride = 2;
                Subnet::UNet(Box::new(UNet {
                    enc_a: Conv2d::new(cin, W1, 1, &mut r),
                    enc_b: Conv2d::new(W1, W1, 1, &mut r),
                    down1,
                    enc_c: Conv2d::new(W1, W2, 1, &mut r),
                    enc_d: Conv2d::new(W2, W2, 1, &mut r),
                    down2,
                    mid: Conv2d::new(W2, W2, 1, &mut r),
                    dec_a: Conv2d::new(W2 + W2, W2, 1, &mut r),
                    dec_b: Conv2d::new(W2 + W1, W1, 1, &mut r),
                    out: Conv2d::new_zero(W1, cout),
                }))
            }
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Subnet::Plain { c2, .. } => c2.cout,
            Subnet::UNet(u) => u.out.cout,
        }
    }

    pub fn check_spatial(&self, h: usize, w: usize) -> Result<()> {
        if matches!(self, Subnet::UNet(_)) && (h % 4 != 0 || w % 4 != 0) {
            return Err(Error::Shape(format!(
                "u-net subnets need spatial dims divisible by 4, got {h}x{w}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vol) -> Result<(Vol, SubnetCache)> {
        self.check_spatial(x.h, x.w)?;
        match self {
            Subnet::Plain { c1, c2 } => {
                let t1 = tanh_vol(&c1.forward(x));
                let out = c2.forward(&t1);
                Ok((
                    out,
                    SubnetCache::Plain {
                        x: x.clone(),
                        t1,
                    },
                ))
            }
            Subnet::UNet(u) => {
                let a1 = tanh_vol(&u.enc_a.forward(x));
                let a2 = tanh_vol(&u.enc_b.forward(&a1));
                let d1 = tanh_vol(&u.down1.forward(&a2));
                let a3 = tanh_vol(&u.enc_c.forward(&d1));
                let a4 = tanh_vol(&u.enc_d.forward(&a3));
                let d2 = tanh_vol(&u.down2.forward(&a4));
                let m = tanh_vol(&u.mid.forward(&d2));
                let cat2 = concat_c(&upsample2(&m), &a4);
                let b2 = tanh_vol(&u.dec_a.forward(&cat2));
                let cat1 = concat_c(&upsample2(&b2), &a2);
                let b1 = tanh_vol(&u.dec_b.forward(&cat1));
                let out = u.out.forward(&b1);
                Ok((
                    out,
                    SubnetCache::UNet(Box::new(UNetCache {
                        x: x.clone(),
                        a1,
                        a2,
                        d1,
                        a3,
                        a4,
                        d2,
                        m,
                        cat2,
                        b2,
                        cat1,
                        b1,
                    })),
                ))
            }
        }
    }

    pub fn jvp(&self, cache: &SubnetCache, t: &Vol) -> Vol {
        match (self, cache) {
            (Subnet::Plain { c1, c2 }, SubnetCache::Plain { t1, .. }) => {
                let dt1 = c1.jvp(t);
                let dt1 = Vol {
                    h: dt1.h,
                    w: dt1.w,
                    c: dt1.c,
                    data: dt1
                        .data
                        .iter()
                        .zip(&t1.data)
                        .map(|(d, y)| (1.0 - y * y) * d)
                        .collect(),
                };
                c2.jvp(&dt1)
            }
            (Subnet::UNet(u), SubnetCache::UNet(cc)) => {
                let tanh_j = |out: &Vol, d: &Vol| Vol {
                    h: d.h,
                    w: d.w,
                    c: d.c,
                    data: d
                        .data
                        .iter()
                        .zip(&out.data)
                        .map(|(dv, y)| (1.0 - y * y) * dv)
                        .collect(),
                };
                let da1 = tanh_j(&cc.a1, &u.enc_a.jvp(t));
                let da2 = tanh_j(&cc.a2, &u.enc_b.jvp(&da1));
                let dd1 = tanh_j(&cc.d1, &u.down1.jvp(&da2));
                let da3 = tanh_j(&cc.a3, &u.enc_c.jvp(&dd1));
                let da4 = tanh_j(&cc.a4, &u.enc_d.jvp(&da3));
                let dd2 = tanh_j(&cc.d2, &u.down2.jvp(&da4));
                let dm = tanh_j(&cc.m, &u.mid.jvp(&dd2));
                let dcat2 = concat_c(&upsample2(&dm), &da4);
                let db2 = tanh_j(&cc.b2, &u.dec_a.jvp(&dcat2));
                let dcat1 = concat_c(&upsample2(&db2), &da2);
                let db1 = tanh_j(&cc.b1, &u.dec_b.jvp(&dcat1));
                u.out.jvp(&db1)
            }
            _ => unreachable!("cache kind mismatch"),
        }
    }

    /// Input cotangent; parameter gradients accumulate into `grads` (flat
    /// layout matching `read_params`).
    pub fn vjp(&self, cache: &SubnetCache, cot: &Vol, grads: Option<&mut [f64]>) -> Vol {
        match (self, cache) {
            (Subnet::Plain { c1, c2 }, SubnetCache::Plain { x, t1 }) => {
                let n1 = c1.n_params();
                let (g1, g2) = match grads {
                    Some(g) => {
                        let (a, b) = g.split_at_mut(n1);
                        (Some(a), Some(b))
                    }
                    None => (None, None),
                };
                let t1bar = c2.vjp(t1, cot, g2);
                let a1bar = tanh_bwd(t1, &t1bar);
                c1.vjp(x, &a1bar, g1)
            }
            (Subnet::UNet(u), SubnetCache::UNet(cc)) => {
                let sizes = [
                    u.enc_a.n_params(),
                    u.enc_b.n_params(),
                    u.down1.n_params(),
                    u.enc_c.n_params(),
                    u.enc_d.n_params(),
                    u.down2.n_params(),
                    u.mid.n_params(),
                    u.dec_a.n_params(),
                    u.dec_b.n_params(),
                    u.out.n_params(),
                ];
                let mut slots: Vec<Option<&mut [f64]>> = Vec::with_capacity(10);
                match grads {
                    Some(mut g) => {
                        for s in sizes {
                            let rest = g;
                            let (a, b) = rest.split_at_mut(s);
                            slots.push(Some(a));
                            g = b;
                        }
                    }
                    None => {
                        for _ in 0..10 {
                            slots.push(None);
                        }
                    }
                }
                let mut take = |i: usize| slots[i].take();

                let b1bar = u.out.vjp(&cc.b1, cot, take(9));
                let cat1bar = u.dec_b.vjp(&cc.cat1, &tanh_bwd(&cc.b1, &b1bar), take(8));
                let (u1bar, mut a2bar) = split_c(&cat1bar, W2);
                let b2bar = upsample2_bwd(&u1bar);
                let cat2bar = u.dec_a.vjp(&cc.cat2, &tanh_bwd(&cc.b2, &b2bar), take(7));
                let (u2bar, mut a4bar) = split_c(&cat2bar, W2);
                let mbar = upsample2_bwd(&u2bar);
                let d2bar = u.mid.vjp(&cc.d2, &tanh_bwd(&cc.m, &mbar), take(6));
                let a4bar_main = u.down2.vjp(&cc.a4, &tanh_bwd(&cc.d2, &d2bar), take(5));
                a4bar.add_assign(&a4bar_main);
                let a3bar = u.enc_d.vjp(&cc.a3, &tanh_bwd(&cc.a4, &a4bar), take(4));
                let d1bar = u.enc_c.vjp(&cc.d1, &tanh_bwd(&cc.a3, &a3bar), take(3));
                let a2bar_main = u.down1.vjp(&cc.a2, &tanh_bwd(&cc.d1, &d1bar), take(2));
                a2bar.add_assign(&a2bar_main);
                let a1bar = u.enc_b.vjp(&cc.a1, &tanh_bwd(&cc.a2, &a2bar), take(1));
                u.enc_a.vjp(&cc.x, &tanh_bwd(&cc.a1, &a1bar), take(0))
            }
            _ => unreachable!("cache kind mismatch"),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Subnet::Plain { c1, c2 } => c1.n_params() + c2.n_params(),
            Subnet::UNet(u) => u.convs().iter().map(|c| c.n_params()).sum(),
        }
    }

    pub fn read_params(&self, out: &mut Vec<f32>) {
        match self {
            Subnet::Plain { c1, c2 } => {
                c1.read_params(out);
                c2.read_params(out);
            }
            Subnet::UNet(u) => {
                for c in u.convs() {
                    c.read_params(out);
                }
            }
        }
    }

    pub fn write_params(&mut self, src: &[f32]) {
        match self {
            Subnet::Plain { c1, c2 } => {
                let n1 = c1.n_params();
                c1.write_params(&src[..n1]);
                c2.write_params(&src[n1..]);
            }
            Subnet::UNet(u) => {
                let mut off = 0;
                for c in u.convs_mut() {
                    let n = c.n_params();
                    c.write_params(&src[off..off + n]);
                    off += n;
                }
            }
        }
    }

    /// (name suffix, element count) pairs in flat-parameter order.
    pub fn param_entries(&self, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
        let conv_entry = |name: &str, c: &Conv2d, out: &mut Vec<(String, Vec<usize>)>| {
            out.push((format!("{prefix}.{name}.k"), vec![3, 3, c.cin, c.cout]));
            out.push((format!("{prefix}.{name}.b"), vec![c.cout]));
        };
        match self {
            Subnet::Plain { c1, c2 } => {
                conv_entry("conv0", c1, out);
                conv_entry("conv1", c2, out);
            }
            Subnet::UNet(u) => {
                for (name, c) in u.named_convs() {
                    conv_entry(name, c, out);
                }
            }
        }
    }

    /// Zeroes the final conv so the subnet output (and any coupling built on
    /// it) is identically zero regardless of input.
    pub fn zero_output(&mut self) {
        match self {
            Subnet::Plain { c2, .. } => {
                c2.k.iter_mut().for_each(|v| *v = 0.0);
                c2.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            Subnet::UNet(u) => {
                u.out.k.iter_mut().for_each(|v| *v = 0.0);
                u.out.bias.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Forces a constant output: zero weights everywhere useful plus an
    /// output bias. Used by tests to freeze couplings at fixed scale/shift.
    pub fn set_constant_output(&mut self, value: f32) {
        self.zero_output();
        match self {
            Subnet::Plain { c2, .. } => c2.bias.iter_mut().for_each(|v| *v = value),
            Subnet::UNet(u) => u.out.bias.iter_mut().for_each(|v| *v = value),
        }
    }
}

impl UNet {
    fn convs(&self) -> [&Conv2d; 10] {
        [
            &self.enc_a, &self.enc_b, &self.down1, &self.enc_c, &self.enc_d, &self.down2,
            &self.mid, &self.dec_a, &self.dec_b, &self.out,
        ]
    }

    fn convs_mut(&mut self) -> [&mut Conv2d; 10] {
        [
            &mut self.enc_a,
            &mut self.enc_b,
            &mut self.down1,
            &mut self.enc_c,
            &mut self.enc_d,
            &mut self.down2,
            &mut self.mid,
            &mut self.dec_a,
            &mut self.dec_b,
            &mut self.out,
        ]
    }

    fn named_convs(&self) -> [(&'static str, &Conv2d); 10] {
        [
            ("enc_a", &self.enc_a),
            ("enc_b", &self.enc_b),
            ("down1", &self.down1),
            ("enc_c", &self.enc_c),
            ("enc_d", &self.enc_d),
            ("down2", &self.down2),
            ("mid", &self.mid),
            ("dec_a", &self.dec_a),
            ("dec_b", &self.dec_b),
            ("out", &self.out),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vol(h: usize, w: usize, c: usize, rng: &mut Rng) -> Vol {
        Vol {
            h,
            w,
            c,
            data: rng.normal_vec(h * w * c),
        }
    }

    #[test]
    fn zero_init_subnet_outputs_zero() {
        let mut rng = Rng::new(1, 0);
        let net = Subnet::new(SubnetKind::Plain { hidden: 8 }, 2, 3, &mut rng);
        let x = rand_vol(4, 4, 2, &mut rng);
        let (y, _) = net.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), (4, 4, 3));
    }

    fn check_adjoint(net: &Subnet, h: usize, w: usize, cin: usize, seed: u64) {
        let mut rng = Rng::new(seed, 7);
        let x = rand_vol(h, w, cin, &mut rng);
        let (y, cache) = net.forward(&x).unwrap();
        let t = rand_vol(h, w, cin, &mut rng);
        let c = rand_vol(y.h, y.w, y.c, &mut rng);
        let jv = net.jvp(&cache, &t);
        let vj = net.vjp(&cache, &c, None);
        let lhs = jv.dot(&c);
        let rhs = t.dot(&vj);
        assert!(
            (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0),
            "adjoint identity violated: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn plain_adjoint_identity() {
        let mut rng = Rng::new(2, 0);
        let mut net = Subnet::new(SubnetKind::Plain { hidden: 6 }, 3, 2, &mut rng);
        // Randomize the last conv so the test is not trivially zero.
        let n = net.n_params();
        let mut p = Vec::new();
        net.read_params(&mut p);
        for v in p.iter_mut().skip(n / 2) {
            *v = (rng.normal() * 0.3) as f32;
        }
        net.write_params(&p);
        check_adjoint(&net, 4, 4, 3, 11);
    }

    #[test]
    fn unet_adjoint_identity() {
        let mut rng = Rng::new(3, 0);
        let mut net = Subnet::new(SubnetKind::UNet, 2, 2, &mut rng);
        let mut p = Vec::new();
        net.read_params(&mut p);
        let total = p.len();
        for v in p.iter_mut().skip(total - 9 * 32 * 2 - 2) {
            *v = (rng.normal() * 0.1) as f32;
        }
        net.write_params(&p);
        check_adjoint(&net, 8, 8, 2, 13);
    }

    #[test]
    fn unet_rejects_bad_spatial_dims() {
        let mut rng = Rng::new(4, 0);
        let net = Subnet::new(SubnetKind::UNet, 1, 1, &mut rng);
        let x = rand_vol(6, 6, 1, &mut rng);
        assert!(net.forward(&x).is_err());
    }

    /// Parameter gradients against central differences on a scalar loss
    /// L = <w, net(x)> with fixed cotangent w.
    fn check_param_grads(net: &mut Subnet, h: usize, w: usize, cin: usize, subset: usize) {
        let mut rng = Rng::new(99, 1);
        let x = rand_vol(h, w, cin, &mut rng);
        let (y0, cache) = net.forward(&x).unwrap();
        let cot = rand_vol(y0.h, y0.w, y0.c, &mut rng);
        let mut grads = vec![0.0; net.n_params()];
        net.vjp(&cache, &cot, Some(&mut grads));

        let mut params = Vec::new();
        net.read_params(&mut params);
        let n = params.len();
        let step = (n / subset).max(1);
        let hstep = 1e-3f32;
        for idx in (0..n).step_by(step) {
            let orig = params[idx];
            params[idx] = orig + hstep;
            net.write_params(&params);
            let (yp, _) = net.forward(&x).unwrap();
            params[idx] = orig - hstep;
            net.write_params(&params);
            let (ym, _) = net.forward(&x).unwrap();
            params[idx] = orig;
            net.write_params(&params);
            let realized = (orig + hstep) as f64 - (orig - hstep) as f64;
            let fd = (yp.dot(&cot) - ym.dot(&cot)) / realized;
            let err = (fd - grads[idx]).abs();
            assert!(
                err <= 1e-4 * grads[idx].abs().max(1.0),
                "param {idx}: analytic {} vs fd {fd}",
                grads[idx]
            );
        }
    }

    #[test]
    fn plain_param_gradients_match_fd() {
        let mut rng = Rng::new(5, 0);
        let mut net = Subnet::new(SubnetKind::Plain { hidden: 5 }, 2, 2, &mut rng);
        let mut p = Vec::new();
        net.read_params(&mut p);
        for v in p.iter_mut() {
            if *v == 0.0 {
                *v = (rng.normal() * 0.2) as f32;
            }
        }
        net.write_params(&p);
        check_param_grads(&mut net, 4, 4, 2, 1000000);
    }

    #[test]
    fn unet_param_gradients_match_fd_spot_check() {
        let mut rng = Rng::new(6, 0);
        let mut net = Subnet::new(SubnetKind::UNet, 1, 1, &mut rng);
        let mut p = Vec::new();
        net.read_params(&mut p);
        for v in p.iter_mut() {
            if *v == 0.0 {
                *v = (rng.normal() * 0.05) as f32;
            }
        }
        net.write_params(&p);
        check_param_grads(&mut net, 8, 8, 1, 120);
    }

    #[test]
    fn constant_output_helper() {
        let mut rng = Rng::new(7, 0);
        let mut net = Subnet::new(SubnetKind::Plain { hidden: 4 }, 1, 2, &mut rng);
        net.set_constant_output(0.7);
        let x = rand_vol(3, 3, 1, &mut rng);
        let (y, _) = net.forward(&x).unwrap();
        assert!(y.data.iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }
}
