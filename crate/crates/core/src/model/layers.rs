use rand::Rng;

use crate::numerics::{glorot_uniform, he_normal_kernel, Graph, ParamId, ParamStore, Tensor, Var};

use super::config::{CONV_KERNEL, CONV_PAD};
use super::ModelError;

/// Fully connected layer, `x·W + b` with `W` stored `in×out`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Self, ModelError> {
        let weight = store.register(format!("{name}.weight"), glorot_uniform(rng, fan_in, fan_out), true)?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]), true)?;
        Ok(Self { weight, bias, fan_in, fan_out })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var, ModelError> {
        let (w, b) = (g.param(self.weight)?, g.param(self.bias)?);
        Ok(g.linear(x, w, b)?)
    }
}

/// Stack of dense layers with ReLU between them and tanh on the output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths` runs from the input width to the output width.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        widths: &[usize],
    ) -> Result<Self, ModelError> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::register(store, rng, &format!("{prefix}fc{i}"), w[0], w[1]))
            .collect::<Result<_, _>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var, ModelError> {
        let pre = self.layers[0].forward(g, x)?;
        self.finish(g, pre)
    }

    /// First-layer pieces for an input laid out as `[point (3) | feature]`:
    /// the `3×out` point block and `feature·W_feat + b`.
    ///
    /// For a feature shared by many rows this turns the first layer into a
    /// thin `rows×3` product plus one broadcast row.
    pub fn split_first(&self, g: &mut Graph<'_>, feature: Var) -> Result<(Var, Var), ModelError> {
        let first = &self.layers[0];
        let w = g.param(first.weight)?;
        let b = g.param(first.bias)?;
        let w_point = g.slice_rows(w, 0, 3)?;
        let w_feat = g.slice_rows(w, 3, first.fan_in)?;
        let f = g.matmul(feature, w_feat)?;
        let f = g.add(f, b)?;
        Ok((w_point, f))
    }

    /// Applies everything after the first layer's affine map.
    pub fn finish(&self, g: &mut Graph<'_>, pre: Var) -> Result<Var, ModelError> {
        let mut h = pre;
        for layer in &self.layers[1..] {
            h = g.relu(h)?;
            h = layer.forward(g, h)?;
        }
        Ok(g.tanh(h)?)
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

/// Conv layers with ReLU, then a ReLU dense layer and a linear output layer.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    pub convs: Vec<ConvLayer>,
    pub fc_hidden: Dense,
    pub fc_out: Dense,
    pub input_shape: [usize; 3],
}

impl ImageEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        input_shape: [usize; 3],
        channels: &[usize],
        strides: &[usize],
        flat_len: usize,
        hidden: usize,
        out: usize,
    ) -> Result<Self, ModelError> {
        let mut c_in = input_shape[0];
        let mut convs = Vec::with_capacity(channels.len());
        for (i, (&c_out, &stride)) in channels.iter().zip(strides).enumerate() {
            let kernel = store.register(
                format!("encoder.conv{i}.kernel"),
                he_normal_kernel(rng, c_out, c_in, CONV_KERNEL),
                true,
            )?;
            let bias = store.register(format!("encoder.conv{i}.bias"), Tensor::zeros(&[c_out]), true)?;
            convs.push(ConvLayer { kernel, bias, stride });
            c_in = c_out;
        }
        let fc_hidden = Dense::register(store, rng, "encoder.fc0", flat_len, hidden)?;
        let fc_out = Dense::register(store, rng, "encoder.fc1", hidden, out)?;
        Ok(Self { convs, fc_hidden, fc_out, input_shape })
    }

    pub fn forward(&self, g: &mut Graph<'_>, image: Var) -> Result<Var, ModelError> {
        let shape = g.value(image).shape().to_vec();
        if shape != self.input_shape {
            return Err(ModelError::Contract(format!(
                "image shape {shape:?} does not match the configured {:?}",
                self.input_shape
            )));
        }
        let mut h = image;
        for c in &self.convs {
            let k = g.param(c.kernel)?;
            let b = g.param(c.bias)?;
            h = g.conv2d(h, k, c.stride, CONV_PAD)?;
            h = g.add_channel_bias(h, b)?;
            h = g.relu(h)?;
        }
        let flat = g.value(h).len();
        h = g.reshape(h, &[1, flat])?;
        h = self.fc_hidden.forward(g, h)?;
        h = g.relu(h)?;
        self.fc_out.forward(g, h)
    }
}
