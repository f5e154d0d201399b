use super::{gemm, sigmoid, Init, ParamGroup, ParamRef, ParamStore};

/// Single-direction LSTM layer. Gate order in the stacked weights is
/// input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub inputs: usize,
    pub hidden: usize,
    pub w_ih: ParamRef,
    pub w_hh: ParamRef,
    pub bias: ParamRef,
}

/// Activations saved by [`Lstm::forward`] for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTape {
    /// Per step: activated gates [i, f, g, o], 4·hidden values.
    gates: Vec<Vec<f64>>,
    /// Cell states c_0..c_T (c_0 = 0).
    cells: Vec<Vec<f64>>,
    /// Hidden states h_0..h_T (h_0 = 0).
    hiddens: Vec<Vec<f64>>,
}

impl LstmTape {
    pub fn last_hidden(&self) -> &[f64] {
        self.hiddens.last().expect("h_0 always present")
    }
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, group: ParamGroup) -> Self {
        let w_ih = store.add(
            format!("{name}.w_ih"),
            &[4 * hidden, inputs],
            group,
            Init::SmallUniform { fan_in: inputs },
        );
        let w_hh = store.add(format!("{name}.w_hh"), &[4 * hidden, hidden], group, Init::Orthogonal { n: hidden });
        // forget-gate bias starts at 1
        let bias = store.add(
            format!("{name}.bias"),
            &[4 * hidden],
            group,
            Init::Blocks {
                n: hidden,
                values: [0.0, 1.0, 0.0, 0.0],
            },
        );
        Lstm {
            inputs,
            hidden,
            w_ih,
            w_hh,
            bias,
        }
    }

    pub fn forward(&self, params: &[f64], xs: &[&[f64]]) -> LstmTape {
        let h = self.hidden;
        let w_ih = self.w_ih.of(params);
        let w_hh = self.w_hh.of(params);
        let bias = self.bias.of(params);
        let mut tape = LstmTape {
            gates: Vec::with_capacity(xs.len()),
            cells: vec![vec![0.0; h]],
            hiddens: vec![vec![0.0; h]],
        };
        for x in xs {
            assert_eq!(x.len(), self.inputs, "lstm input size");
            let mut z = bias.to_vec();
            gemm(4 * h, self.inputs, 1, w_ih, false, x, false, 1.0, &mut z);
            gemm(4 * h, h, 1, w_hh, false, tape.hiddens.last().unwrap(), false, 1.0, &mut z);
            let c_prev = tape.cells.last().unwrap();
            let mut c = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
                c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                hn[j] = z[3 * h + j] * c[j].tanh();
            }
            tape.gates.push(z);
            tape.cells.push(c);
            tape.hiddens.push(hn);
        }
        tape
    }

    /// Backpropagates a gradient on the final hidden state only. Returns the
    /// gradient for each input step.
    pub fn backward(&self, params: &[f64], xs: &[&[f64]], tape: &LstmTape, dh_last: &[f64], grads: &mut [f64]) -> Vec<Vec<f64>> {
        let h = self.hidden;
        let w_ih = self.w_ih.of(params);
        let w_hh = self.w_hh.of(params);
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h];
        let mut dxs = vec![Vec::new(); xs.len()];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..xs.len()).rev() {
            let gt = &tape.gates[t];
            let c = &tape.cells[t + 1];
            let c_prev = &tape.cells[t];
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = c[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                dz[j] = dc[j] * g * i * (1.0 - i);
                dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc[j] * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * o * (1.0 - o);
                dc[j] *= f;
            }
            gemm(4 * h, 1, self.inputs, &dz, false, xs[t], false, 1.0, self.w_ih.of_mut(grads));
            gemm(4 * h, 1, h, &dz, false, &tape.hiddens[t], false, 1.0, self.w_hh.of_mut(grads));
            self.bias.of_mut(grads).iter_mut().zip(&dz).for_each(|(g, d)| *g += d);
            let mut dx = vec![0.0; self.inputs];
            gemm(self.inputs, 4 * h, 1, w_ih, true, &dz, false, 0.0, &mut dx);
            dxs[t] = dx;
            gemm(h, 4 * h, 1, w_hh, true, &dz, false, 0.0, &mut dh);
        }
        dxs
    }
}
