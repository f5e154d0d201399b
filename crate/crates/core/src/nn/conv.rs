use super::{gemm, Init, ParamGroup, ParamRef, ParamStore};

/// Spatio-temporal extent (t, h, w). A 2-D feature map has t = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims3 {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims3 {
    pub fn new(t: usize, h: usize, w: usize) -> Self {
        Dims3 { t, h, w }
    }

    pub fn plane(h: usize, w: usize) -> Self {
        Dims3 { t: 1, h, w }
    }

    pub fn volume(&self) -> usize {
        self.t * self.h * self.w
    }
}

/// Kernel, stride and padding per axis, ordered (t, h, w).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeom {
    /// Square 2-D kernel.
    pub fn planar(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvGeom {
            cin,
            cout,
            kernel: [1, k, k],
            stride: [1, stride, stride],
            pad: [0, pad, pad],
        }
    }

    pub fn patch(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    pub fn out_dims(&self, d: Dims3) -> Option<Dims3> {
        let ax = |n: usize, i: usize| {
            let span = n + 2 * self.pad[i];
            (span >= self.kernel[i]).then(|| (span - self.kernel[i]) / self.stride[i] + 1)
        };
        Some(Dims3::new(ax(d.t, 0)?, ax(d.h, 1)?, ax(d.w, 2)?))
    }
}

/// Convolution over (C, T, H, W) tensors via im2col and GEMM; the 2-D case
/// is the same kernel with a unit temporal axis.
#[derive(Debug, Clone)]
pub struct ConvNd {
    pub geom: ConvGeom,
    pub weight: ParamRef,
    pub bias: ParamRef,
}

impl ConvNd {
    pub fn new(store: &mut ParamStore, name: &str, geom: ConvGeom, group: ParamGroup) -> Self {
        let [kt, kh, kw] = geom.kernel;
        let shape: Vec<usize> = if kt == 1 && geom.stride[0] == 1 && geom.pad[0] == 0 {
            vec![geom.cout, geom.cin, kh, kw]
        } else {
            vec![geom.cout, geom.cin, kt, kh, kw]
        };
        let weight = store.add(
            format!("{name}.weight"),
            &shape,
            group,
            Init::HeUniform { fan_in: geom.patch() },
        );
        let bias = store.add(format!("{name}.bias"), &[geom.cout], group, Init::Constant(0.0));
        ConvNd { geom, weight, bias }
    }

    /// Returns the output and the im2col buffer needed by `backward`.
    pub fn forward(&self, params: &[f64], x: &[f64], dims: Dims3) -> (Vec<f64>, Vec<f64>, Dims3) {
        let g = &self.geom;
        assert_eq!(x.len(), g.cin * dims.volume(), "conv input size");
        let od = g.out_dims(dims).expect("conv input smaller than kernel");
        let cols = self.im2col(x, dims, od);
        let n = od.volume();
        let mut y = vec![0.0; g.cout * n];
        gemm(g.cout, g.patch(), n, self.weight.of(params), false, &cols, false, 0.0, &mut y);
        for (row, b) in y.chunks_mut(n).zip(self.bias.of(params)) {
            row.iter_mut().for_each(|v| *v += b);
        }
        (y, cols, od)
    }

    /// Accumulates weight/bias gradients and returns the input gradient when
    /// requested.
    pub fn backward(
        &self,
        params: &[f64],
        cols: &[f64],
        dy: &[f64],
        in_dims: Dims3,
        grads: &mut [f64],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let g = &self.geom;
        let od = g.out_dims(in_dims).expect("valid dims");
        let n = od.volume();
        let patch = g.patch();
        gemm(g.cout, n, patch, dy, false, cols, true, 1.0, self.weight.of_mut(grads));
        for (b, row) in self.bias.of_mut(grads).iter_mut().zip(dy.chunks(n)) {
            *b += row.iter().sum::<f64>();
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![0.0; patch * n];
        gemm(patch, g.cout, n, self.weight.of(params), true, dy, false, 0.0, &mut dcols);
        Some(self.col2im(&dcols, in_dims, od))
    }

    fn im2col(&self, x: &[f64], d: Dims3, od: Dims3) -> Vec<f64> {
        let g = &self.geom;
        let [kt, kh, kw] = g.kernel;
        let n = od.volume();
        let mut cols = vec![0.0; g.patch() * n];
        let mut row = 0;
        for c in 0..g.cin {
            let xc = &x[c * d.volume()..(c + 1) * d.volume()];
            for a in 0..kt {
                for b in 0..kh {
                    for e in 0..kw {
                        let out = &mut cols[row * n..(row + 1) * n];
                        self.for_each_tap(d, od, [a, b, e], |o, i| out[o] = xc[i]);
                        row += 1;
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], d: Dims3, od: Dims3) -> Vec<f64> {
        let g = &self.geom;
        let [kt, kh, kw] = g.kernel;
        let n = od.volume();
        let mut dx = vec![0.0; g.cin * d.volume()];
        let mut row = 0;
        for c in 0..g.cin {
            let xc = &mut dx[c * d.volume()..(c + 1) * d.volume()];
            for a in 0..kt {
                for b in 0..kh {
                    for e in 0..kw {
                        let src = &cols[row * n..(row + 1) * n];
                        self.for_each_tap(d, od, [a, b, e], |o, i| xc[i] += src[o]);
                        row += 1;
                    }
                }
            }
        }
        dx
    }

    /// Visits (output position, input position) for one kernel tap,
    /// skipping taps that land in the zero padding.
    #[inline]
    fn for_each_tap(&self, d: Dims3, od: Dims3, tap: [usize; 3], mut f: impl FnMut(usize, usize)) {
        let g = &self.geom;
        for ot in 0..od.t {
            let it = (ot * g.stride[0] + tap[0]) as isize - g.pad[0] as isize;
            if it < 0 || it >= d.t as isize {
                continue;
            }
            for oh in 0..od.h {
                let ih = (oh * g.stride[1] + tap[1]) as isize - g.pad[1] as isize;
                if ih < 0 || ih >= d.h as isize {
                    continue;
                }
                let obase = (ot * od.h + oh) * od.w;
                let ibase = (it as usize * d.h + ih as usize) * d.w;
                for ow in 0..od.w {
                    let iw = (ow * g.stride[2] + tap[2]) as isize - g.pad[2] as isize;
                    if iw < 0 || iw >= d.w as isize {
                        continue;
                    }
                    f(obase + ow, ibase + iw as usize);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn direct(conv: &ConvNd, p: &[f64], x: &[f64], d: Dims3) -> Vec<f64> {
        let g = conv.geom;
        let od = g.out_dims(d).unwrap();
        let w = conv.weight.of(p);
        let b = conv.bias.of(p);
        let [kt, kh, kw] = g.kernel;
        let mut y = vec![0.0; g.cout * od.volume()];
        for co in 0..g.cout {
            for ot in 0..od.t {
                for oh in 0..od.h {
                    for ow in 0..od.w {
                        let mut acc = b[co];
                        for ci in 0..g.cin {
                            for a in 0..kt {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let it = (ot * g.stride[0] + a) as isize - g.pad[0] as isize;
                                        let ih = (oh * g.stride[1] + bb) as isize - g.pad[1] as isize;
                                        let iw = (ow * g.stride[2] + e) as isize - g.pad[2] as isize;
                                        if it < 0 || ih < 0 || iw < 0 || it >= d.t as isize || ih >= d.h as isize || iw >= d.w as isize {
                                            continue;
                                        }
                                        let xi = ((ci * d.t + it as usize) * d.h + ih as usize) * d.w + iw as usize;
                                        let wi = (((co * g.cin + ci) * kt + a) * kh + bb) * kw + e;
                                        acc += w[wi] * x[xi];
                                    }
                                }
                            }
                        }
                        y[((co * od.t + ot) * od.h + oh) * od.w + ow] = acc;
                    }
                }
            }
        }
        y
    }

    fn setup(geom: ConvGeom, d: Dims3) -> (ConvNd, ParamStore, Vec<f64>) {
        let mut store = ParamStore::new();
        let conv = ConvNd::new(&mut store, "c", geom, ParamGroup::Head);
        store.initialize(3);
        for (i, v) in conv.bias.of_mut(store.values_mut()).iter_mut().enumerate() {
            *v = 0.1 * i as f64 - 0.05;
        }
        let x: Vec<f64> = (0..geom.cin * d.volume()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        (conv, store, x)
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let cases = [
            (ConvGeom::planar(3, 4, 3, 2, 1), Dims3::plane(9, 7)),
            (ConvGeom::planar(2, 3, 1, 2, 0), Dims3::plane(6, 6)),
            (
                ConvGeom { cin: 2, cout: 3, kernel: [3, 3, 3], stride: [1, 2, 2], pad: [1, 1, 1] },
                Dims3::new(5, 6, 5),
            ),
            (
                ConvGeom { cin: 2, cout: 2, kernel: [3, 3, 3], stride: [2, 1, 1], pad: [1, 1, 1] },
                Dims3::new(1, 4, 4),
            ),
        ];
        for (geom, d) in cases {
            let (conv, store, x) = setup(geom, d);
            let (y, _, _) = conv.forward(store.values(), &x, d);
            let want = direct(&conv, store.values(), &x, d);
            assert_eq!(y.len(), want.len());
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let geom = ConvGeom { cin: 2, cout: 2, kernel: [3, 3, 3], stride: [1, 2, 2], pad: [1, 1, 1] };
        let d = Dims3::new(3, 5, 5);
        let (conv, store, x) = setup(geom, d);
        let p = store.values().to_vec();
        // loss = sum(y * r) for a fixed r
        let (y, cols, _) = conv.forward(&p, &x, d);
        let r: Vec<f64> = (0..y.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut grads = vec![0.0; p.len()];
        let dx = conv.backward(&p, &cols, &r, d, &mut grads, true).unwrap();
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            conv.forward(p, x, d).0.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in (0..p.len()).step_by(5) {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a, &x) - loss(&b, &x)) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-6, "param {i}: {fd} vs {}", grads[i]);
        }
        for i in (0..x.len()).step_by(7) {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&p, &a) - loss(&p, &b)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "input {i}");
        }
    }
}
