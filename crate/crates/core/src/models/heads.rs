use crate::nn::{relu_backward, relu_inplace, ConvGeom, ConvNd, Dims3, Linear, Lstm, LstmTape, ParamGroup, ParamStore};

/// 3D convolutions over a (C, T, H, W) stack of per-frame feature maps,
/// global average pooling and a single-logit output layer.
#[derive(Debug, Clone)]
pub struct Conv3dHead {
    convs: Vec<ConvNd>,
    fc: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct Conv3dTape {
    dims: Vec<Dims3>,
    cols: Vec<Vec<f64>>,
    outs: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

impl Conv3dHead {
    /// First layer keeps resolution, later layers halve H and W. Every layer
    /// has a temporal extent of 3 with temporal padding 1.
    pub fn new(store: &mut ParamStore, in_channels: usize, channels: &[usize]) -> Self {
        let mut cin = in_channels;
        let mut convs = Vec::with_capacity(channels.len());
        for (i, &cout) in channels.iter().enumerate() {
            let s = if i == 0 { 1 } else { 2 };
            let geom = ConvGeom {
                cin,
                cout,
                kernel: [3, 3, 3],
                stride: [1, s, s],
                pad: [1, 1, 1],
            };
            convs.push(ConvNd::new(store, &format!("head.conv3d{}", i + 1), geom, ParamGroup::Head));
            cin = cout;
        }
        let fc = Linear::new(store, "head.conv_fc", cin, 1, ParamGroup::Head);
        Conv3dHead { convs, fc }
    }

    pub(crate) fn forward(&self, params: &[f64], x: &[f64], dims: Dims3) -> (f64, Conv3dTape) {
        let mut h = x.to_vec();
        let mut d = dims;
        let mut tape = Conv3dTape {
            dims: Vec::new(),
            cols: Vec::new(),
            outs: Vec::new(),
            pooled: Vec::new(),
        };
        for conv in &self.convs {
            let (mut y, cols, od) = conv.forward(params, &h, d);
            relu_inplace(&mut y);
            tape.dims.push(d);
            tape.cols.push(cols);
            tape.outs.push(y.clone());
            h = y;
            d = od;
        }
        let area = d.volume() as f64;
        let pooled: Vec<f64> = h.chunks(d.volume()).map(|c| c.iter().sum::<f64>() / area).collect();
        let logit = self.fc.forward(params, &pooled)[0];
        tape.pooled = pooled;
        (logit, tape)
    }

    /// Returns the gradient on the stacked input.
    pub(crate) fn backward(&self, params: &[f64], tape: &Conv3dTape, dlogit: f64, grads: &mut [f64]) -> Vec<f64> {
        let dp = self
            .fc
            .backward(params, &tape.pooled, &[dlogit], grads, true)
            .expect("requested dx");
        let last = tape.outs.last().expect("at least one conv");
        let area = last.len() / dp.len();
        let mut dh: Vec<f64> = dp.iter().flat_map(|g| std::iter::repeat_n(g / area as f64, area)).collect();
        for (i, conv) in self.convs.iter().enumerate().rev() {
            relu_backward(&tape.outs[i], &mut dh);
            dh = conv
                .backward(params, &tape.cols[i], &dh, tape.dims[i], grads, true)
                .expect("requested dx");
        }
        dh
    }
}

/// Forward and backward LSTMs over the embedding sequence; the two final
/// states are concatenated into a single-logit output layer.
#[derive(Debug, Clone)]
pub struct BiRecurrentHead {
    forward_rnn: Lstm,
    backward_rnn: Lstm,
    fc: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct BiRecurrentTape {
    fwd: LstmTape,
    bwd: LstmTape,
    joined: Vec<f64>,
}

impl BiRecurrentHead {
    pub fn new(store: &mut ParamStore, inputs: usize, hidden: usize) -> Self {
        let forward_rnn = Lstm::new(store, "head.lstm_fwd", inputs, hidden, ParamGroup::Head);
        let backward_rnn = Lstm::new(store, "head.lstm_bwd", inputs, hidden, ParamGroup::Head);
        let fc = Linear::new(store, "head.rnn_fc", 2 * hidden, 1, ParamGroup::Head);
        BiRecurrentHead {
            forward_rnn,
            backward_rnn,
            fc,
        }
    }

    pub(crate) fn forward(&self, params: &[f64], seq: &[&[f64]]) -> (f64, BiRecurrentTape) {
        let rev: Vec<&[f64]> = seq.iter().rev().copied().collect();
        let fwd = self.forward_rnn.forward(params, seq);
        let bwd = self.backward_rnn.forward(params, &rev);
        let mut joined = fwd.last_hidden().to_vec();
        joined.extend_from_slice(bwd.last_hidden());
        let logit = self.fc.forward(params, &joined)[0];
        (logit, BiRecurrentTape { fwd, bwd, joined })
    }

    /// Returns the gradient for each sequence element, in input order.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        seq: &[&[f64]],
        tape: &BiRecurrentTape,
        dlogit: f64,
        grads: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let h = self.forward_rnn.hidden;
        let dj = self
            .fc
            .backward(params, &tape.joined, &[dlogit], grads, true)
            .expect("requested dx");
        let rev: Vec<&[f64]> = seq.iter().rev().copied().collect();
        let mut dx = self.forward_rnn.backward(params, seq, &tape.fwd, &dj[..h], grads);
        let dx_rev = self.backward_rnn.backward(params, &rev, &tape.bwd, &dj[h..], grads);
        for (d, r) in dx.iter_mut().zip(dx_rev.iter().rev()) {
            d.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        dx
    }
}
