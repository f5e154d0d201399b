use super::{Init, ParamGroup, ParamRef, ParamStore};

/// Fully connected layer `y = W·x + b` with `W` stored (out, in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: ParamRef,
    pub bias: ParamRef,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, group: ParamGroup) -> Self {
        Self::with_init(store, name, inputs, outputs, group, Init::SmallUniform { fan_in: inputs })
    }

    pub fn with_init(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        group: ParamGroup,
        init: Init,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), &[outputs, inputs], group, init);
        let bias = store.add(
            format!("{name}.bias"),
            &[outputs],
            group,
            Init::SmallUniform { fan_in: inputs },
        );
        Linear {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs, "linear input size");
        let w = self.weight.of(params);
        self.bias
            .of(params)
            .iter()
            .zip(w.chunks(self.inputs))
            .map(|(b, row)| b + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grads: &mut [f64], need_dx: bool) -> Option<Vec<f64>> {
        {
            let gw = self.weight.of_mut(grads);
            for (row, d) in gw.chunks_mut(self.inputs).zip(dy) {
                if *d != 0.0 {
                    row.iter_mut().zip(x).for_each(|(g, v)| *g += d * v);
                }
            }
        }
        self.bias.of_mut(grads).iter_mut().zip(dy).for_each(|(g, d)| *g += d);
        if !need_dx {
            return None;
        }
        let w = self.weight.of(params);
        let mut dx = vec![0.0; self.inputs];
        for (row, d) in w.chunks(self.inputs).zip(dy) {
            dx.iter_mut().zip(row).for_each(|(g, a)| *g += d * a);
        }
        Some(dx)
    }
}
