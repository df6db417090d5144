//! Cross-view tensor mechanisms: standard convolution, the cross-attention
//! reference, CVIE (projections, concat, per-pixel dense map, shift, sum),
//! CCF and the dynamic weight assignment network.
//!
//! Feature maps are `C × H × W` arrays. Nothing here is trained; weights are
//! either decoded from a [`tensor_file`] or built analytically.

pub mod tensor_file;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis};

use crate::error::{ensure, invalid, malformed, Result};
use crate::signal::SeededRng;
use tensor_file::{NamedTensor, TensorMap};

/// Real feature map indexed `[channel, row, col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Array3<f64>,
}

impl FeatureMap {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (c, h, w) = data.dim();
        ensure!(c >= 1 && h >= 1 && w >= 1, "feature map dimensions must be >= 1, got {c}x{h}x{w}");
        ensure!(data.iter().all(|v| v.is_finite()), "feature map has non-finite entries");
        Ok(Self { data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(Array3::zeros((channels, height, width)))
    }

    pub fn random(channels: usize, height: usize, width: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(Array3::from_shape_simple_fn((channels, height, width), || rng.standard_normal()))
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        assert_eq!(self.dim(), other.dim(), "shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    // (C, H*W) view, one column per pixel
    fn pixels(&self) -> ArrayView2<'_, f64> {
        let (c, h, w) = self.dim();
        self.data
            .view()
            .into_shape_with_order((c, h * w))
            .expect("standard layout")
    }

    fn from_pixels(m: Array2<f64>, h: usize, w: usize) -> Self {
        let c = m.nrows();
        let data = m
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, h, w))
            .expect("pixel count matches");
        Self { data }
    }

    fn scaled_add(&self, a: f64, other: &FeatureMap, b: f64) -> FeatureMap {
        FeatureMap {
            data: &self.data * a + &other.data * b,
        }
    }
}

fn same_shape(a: &FeatureMap, b: &FeatureMap, what: &str) -> Result<()> {
    ensure!(a.dim() == b.dim(), "{what}: shape mismatch {:?} vs {:?}", a.dim(), b.dim());
    Ok(())
}

/// Convolution kernel `F[p, q, c_in, c_out]` with odd spatial size `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    weights: Array4<f64>,
}

impl ConvKernel {
    pub fn new(weights: Array4<f64>) -> Result<Self> {
        let (k1, k2, ci, co) = weights.dim();
        ensure!(k1 == k2, "kernel must be square, got {k1}x{k2}");
        ensure!(k1 % 2 == 1, "kernel size must be odd, got {k1}");
        ensure!(ci >= 1 && co >= 1, "kernel channel counts must be >= 1");
        ensure!(weights.iter().all(|v| v.is_finite()), "kernel has non-finite entries");
        Ok(Self { weights })
    }

    pub fn random(size: usize, c_in: usize, c_out: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(Array4::from_shape_simple_fn((size, size, c_in, c_out), || rng.standard_normal()))
    }

    /// Kernel whose only nonzero tap is the centre, holding the identity.
    pub fn identity(size: usize, channels: usize) -> Result<Self> {
        let mut w = Array4::zeros((size, size, channels, channels));
        for c in 0..channels {
            w[[size / 2, size / 2, c, c]] = 1.0;
        }
        Self::new(w)
    }

    pub fn size(&self) -> usize {
        self.weights.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dim().2
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dim().3
    }

    pub fn weights(&self) -> &Array4<f64> {
        &self.weights
    }
}

/// Zero-padded "same" cross-correlation:
/// `y[o,i,j] = Σ_{p,q,c} F[p,q,c,o] · x[c, i+p−K/2, j+q−K/2]`.
pub fn conv2d(x: &FeatureMap, kernel: &ConvKernel) -> Result<FeatureMap> {
    ensure!(
        x.channels() == kernel.in_channels(),
        "conv2d: input has {} channels, kernel expects {}",
        x.channels(),
        kernel.in_channels()
    );
    let k = kernel.size();
    let half = (k / 2) as isize;
    let (_, h, w) = x.dim();
    let mut out = Array3::zeros((kernel.out_channels(), h, w));
    for p in 0..k {
        for q in 0..k {
            // tap (p, q) mixes channels then reads the map offset by (p-half, q-half)
            let tap = kernel.weights.slice(s![p, q, .., ..]);
            let mixed = tap.t().dot(&x.pixels());
            let mixed = FeatureMap::from_pixels(mixed, h, w);
            accumulate_shifted(&mut out, &mixed.data, p as isize - half, q as isize - half);
        }
    }
    Ok(FeatureMap { data: out })
}

// out[c,i,j] += src[c, i+dx, j+dy] where in range
fn accumulate_shifted(out: &mut Array3<f64>, src: &Array3<f64>, dx: isize, dy: isize) {
    let (_, h, w) = src.dim();
    let (h, w) = (h as isize, w as isize);
    let i0 = (-dx).max(0);
    let i1 = (h - dx).min(h);
    let j0 = (-dy).max(0);
    let j1 = (w - dy).min(w);
    if i0 >= i1 || j0 >= j1 {
        return;
    }
    let mut dst = out.slice_mut(s![.., i0..i1, j0..j1]);
    dst += &src.slice(s![.., i0 + dx..i1 + dx, j0 + dy..j1 + dy]);
}

/// `out[c,i,j] = x[c, i+dx, j+dy]`, zero where the read falls outside the
/// map. Offsets are limited to `kernel_size / 2`.
pub fn shift(x: &FeatureMap, dx: isize, dy: isize, kernel_size: usize) -> Result<FeatureMap> {
    let half = (kernel_size / 2) as isize;
    ensure!(
        dx.abs() <= half && dy.abs() <= half,
        "shift ({dx}, {dy}) exceeds the radius {half} of a {kernel_size}x{kernel_size} kernel"
    );
    let mut out = Array3::zeros(x.dim());
    accumulate_shifted(&mut out, &x.data, dx, dy);
    Ok(FeatureMap { data: out })
}

/// One affine layer `y = W x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        ensure!(
            weight.nrows() == bias.len(),
            "dense layer: weight has {} rows but bias has {} entries",
            weight.nrows(),
            bias.len()
        );
        ensure!(weight.ncols() >= 1 && weight.nrows() >= 1, "dense layer must be non-empty");
        ensure!(
            weight.iter().chain(bias.iter()).all(|v| v.is_finite()),
            "dense layer has non-finite parameters"
        );
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Uniform(-1/√in, 1/√in) weights and biases.
    pub fn random(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((outputs, inputs), || rng.uniform(-bound, bound)),
            bias: Array1::from_shape_simple_fn(outputs, || rng.uniform(-bound, bound)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Stack of dense layers with ReLU between consecutive layers (none after
/// the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        ensure!(!layers.is_empty(), "an MLP needs at least one layer");
        for (i, pair) in layers.windows(2).enumerate() {
            ensure!(
                pair[0].outputs() == pair[1].inputs(),
                "MLP layer {i} emits {} features but layer {} takes {}",
                pair[0].outputs(),
                i + 1,
                pair[1].inputs()
            );
        }
        Ok(Self { layers })
    }

    /// Random MLP with the given layer widths, e.g. `[3, 16, 2]`.
    pub fn random(widths: &[usize], rng: &mut SeededRng) -> Result<Self> {
        ensure!(widths.len() >= 2, "need at least input and output widths");
        Self::new(widths.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Applies the network to every column of `x` (features × samples).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut act = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            act = layer.weight.dot(&act) + &layer.bias.view().insert_axis(Axis(1));
            if i < last {
                act.mapv_inplace(|v| v.max(0.0));
            }
        }
        act
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let col = ArrayView2::from_shape((x.len(), 1), x).expect("column");
        self.forward(col).into_iter().collect()
    }
}

/// How the two DWA logits become branch weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DwaNormalization {
    /// Softmax over the pair, so the weights sum to one.
    #[default]
    SoftmaxPair,
    /// Independent logistic sigmoid per weight.
    Sigmoid,
}

/// Normalization set for the cross-attention reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CamNormalization {
    /// Softmax across channels at each pixel; one output channel.
    #[default]
    Channel,
    /// Softmax across all pixels (ordinary dot-product attention); C output
    /// channels.
    Spatial,
}

pub const DWA_HIDDEN_WIDTH: usize = 16;

/// Conditions fed to the weight assignment network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaInput {
    pub snr1_db: f64,
    pub snr2_db: f64,
    pub scs: f64,
}

impl DwaInput {
    pub fn new(snr1_db: f64, snr2_db: f64, scs: f64) -> Result<Self> {
        ensure!(snr1_db.is_finite() && snr2_db.is_finite(), "SNRs must be finite");
        ensure!((0.0..=1.0).contains(&scs), "scs must lie in [0, 1], got {scs}");
        Ok(Self { snr1_db, snr2_db, scs })
    }
}

/// Parameters of the CVIE/CCF/DWA stack.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    kernel_size: usize,
    channels: usize,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    /// Per-pixel map `3C → K²C` of the cross-view branch.
    pub mlp: Mlp,
    /// Map for the single-view branch; falls back to `mlp` when absent.
    pub consistency_mlp: Option<Mlp>,
    /// `3 → 2` network producing the CCF branch weights.
    pub dwa_mlp: Mlp,
    pub dwa_mode: DwaNormalization,
    /// Optional reference convolution kept alongside the weights.
    pub conv: Option<ConvKernel>,
}

impl KernelWeights {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kernel_size: usize,
        w_q: Array2<f64>,
        w_k: Array2<f64>,
        w_v: Array2<f64>,
        mlp: Mlp,
        consistency_mlp: Option<Mlp>,
        dwa_mlp: Mlp,
        dwa_mode: DwaNormalization,
        conv: Option<ConvKernel>,
    ) -> Result<Self> {
        let channels = w_q.nrows();
        let w = Self {
            kernel_size,
            channels,
            w_q,
            w_k,
            w_v,
            mlp,
            consistency_mlp,
            dwa_mlp,
            dwa_mode,
            conv,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, c) = (self.kernel_size, self.channels);
        ensure!(k % 2 == 1, "kernel size must be odd, got {k}");
        ensure!(c >= 1, "channel count must be >= 1");
        for (name, m) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            ensure!(m.dim() == (c, c), "{name} must be {c}x{c}, got {:?}", m.dim());
            ensure!(m.iter().all(|v| v.is_finite()), "{name} has non-finite entries");
        }
        for (name, m) in std::iter::once(("mlp", &self.mlp))
            .chain(self.consistency_mlp.as_ref().map(|m| ("consistency_mlp", m)))
        {
            ensure!(
                m.inputs() == 3 * c && m.outputs() == k * k * c,
                "{name} must map {} to {} features, maps {} to {}",
                3 * c,
                k * k * c,
                m.inputs(),
                m.outputs()
            );
        }
        ensure!(
            self.dwa_mlp.inputs() == 3 && self.dwa_mlp.outputs() == 2,
            "dwa_mlp must map 3 to 2 features"
        );
        Ok(())
    }

    /// Random weights with the default layer structure: one linear `3C → K²C`
    /// map and a `3 → 16 → 2` DWA network.
    pub fn random(channels: usize, kernel_size: usize, rng: &mut SeededRng) -> Result<Self> {
        ensure!(channels >= 1, "channel count must be >= 1");
        let mut square = || {
            let b = 1.0 / (channels as f64).sqrt();
            Array2::from_shape_simple_fn((channels, channels), || rng.uniform(-b, b))
        };
        let (w_q, w_k, w_v) = (square(), square(), square());
        let mlp = Mlp::random(&[3 * channels, kernel_size * kernel_size * channels], rng)?;
        let dwa_mlp = Mlp::random(&[3, DWA_HIDDEN_WIDTH, 2], rng)?;
        Self::new(kernel_size, w_q, w_k, w_v, mlp, None, dwa_mlp, DwaNormalization::default(), None)
    }

    /// Weights for which [`cvie`] computes exactly `conv2d(z1, kernel)`:
    /// `W_v = I`, `W_q = W_k = 0`, and the dense map sends the value block to
    /// shift group `(p, q)` through `F[p, q]`.
    pub fn conv_equivalent(kernel: &ConvKernel, dwa_mlp: Mlp) -> Result<Self> {
        let c = kernel.in_channels();
        ensure!(
            kernel.out_channels() == c,
            "CVIE preserves channel count; kernel maps {c} to {}",
            kernel.out_channels()
        );
        let k = kernel.size();
        let mut routing = Array2::zeros((k * k * c, 3 * c));
        for p in 0..k {
            for q in 0..k {
                let g = p * k + q;
                for o in 0..c {
                    for ci in 0..c {
                        routing[[g * c + o, 2 * c + ci]] = kernel.weights[[p, q, ci, o]];
                    }
                }
            }
        }
        let mlp = Mlp::new(vec![Dense::new(routing, Array1::zeros(k * k * c))?])?;
        Self::new(
            k,
            Array2::zeros((c, c)),
            Array2::zeros((c, c)),
            Array2::eye(c),
            mlp,
            None,
            dwa_mlp,
            DwaNormalization::default(),
            Some(kernel.clone()),
        )
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn to_tensors(&self) -> TensorMap {
        let mut m = TensorMap::new();
        let mat = |a: &Array2<f64>| NamedTensor::new(vec![a.nrows(), a.ncols()], a.iter().copied().collect());
        m.insert("kernel_size".into(), NamedTensor::scalar(self.kernel_size as f64));
        let mode = match self.dwa_mode {
            DwaNormalization::SoftmaxPair => 0.0,
            DwaNormalization::Sigmoid => 1.0,
        };
        m.insert("dwa_mode".into(), NamedTensor::scalar(mode));
        m.insert("w_q".into(), mat(&self.w_q));
        m.insert("w_k".into(), mat(&self.w_k));
        m.insert("w_v".into(), mat(&self.w_v));
        let mut put_mlp = |prefix: &str, mlp: &Mlp| {
            for (i, layer) in mlp.layers.iter().enumerate() {
                m.insert(format!("{prefix}.{i}.weight"), mat(&layer.weight));
                m.insert(
                    format!("{prefix}.{i}.bias"),
                    NamedTensor::new(vec![layer.bias.len()], layer.bias.to_vec()),
                );
            }
        };
        put_mlp("mlp", &self.mlp);
        if let Some(cm) = &self.consistency_mlp {
            put_mlp("consistency_mlp", cm);
        }
        put_mlp("dwa_mlp", &self.dwa_mlp);
        if let Some(conv) = &self.conv {
            m.insert(
                "conv".into(),
                NamedTensor::new(conv.weights.shape().to_vec(), conv.weights.iter().copied().collect()),
            );
        }
        m
    }

    pub fn from_tensors(mut m: TensorMap) -> Result<Self> {
        fn take(m: &mut TensorMap, name: &str) -> Result<NamedTensor> {
            m.remove(name).ok_or_else(|| malformed(format!("missing tensor `{name}`")))
        }
        fn scalar(m: &mut TensorMap, name: &str) -> Result<f64> {
            let t = take(m, name)?;
            if t.data.len() != 1 {
                return Err(malformed(format!("`{name}` must hold a single value")));
            }
            Ok(t.data[0])
        }
        fn matrix(t: NamedTensor, name: &str) -> Result<Array2<f64>> {
            match t.shape[..] {
                [r, c] => Ok(Array2::from_shape_vec((r, c), t.data).expect("size checked by decoder")),
                _ => Err(malformed(format!("`{name}` must be 2-D, has shape {:?}", t.shape))),
            }
        }
        fn vector(t: NamedTensor, name: &str) -> Result<Array1<f64>> {
            match t.shape[..] {
                [_] => Ok(Array1::from(t.data)),
                _ => Err(malformed(format!("`{name}` must be 1-D, has shape {:?}", t.shape))),
            }
        }
        fn mlp(m: &mut TensorMap, prefix: &str, required: bool) -> Result<Option<Mlp>> {
            let mut layers = Vec::new();
            loop {
                let wn = format!("{prefix}.{}.weight", layers.len());
                let bn = format!("{prefix}.{}.bias", layers.len());
                let Some(w) = m.remove(&wn) else { break };
                let b = take(m, &bn)?;
                let layer = Dense::new(matrix(w, &wn)?, vector(b, &bn)?).map_err(|e| malformed(e.to_string()))?;
                layers.push(layer);
            }
            if layers.is_empty() {
                return if required {
                    Err(malformed(format!("missing tensor `{prefix}.0.weight`")))
                } else {
                    Ok(None)
                };
            }
            Mlp::new(layers).map(Some).map_err(|e| malformed(e.to_string()))
        }

        let k = scalar(&mut m, "kernel_size")?;
        if !(k >= 1.0 && k <= 1e6 && k.fract() == 0.0) {
            return Err(malformed(format!("kernel_size {k} is not a positive integer")));
        }
        let dwa_mode = match scalar(&mut m, "dwa_mode")? {
            v if v == 0.0 => DwaNormalization::SoftmaxPair,
            v if v == 1.0 => DwaNormalization::Sigmoid,
            v => return Err(malformed(format!("unknown dwa_mode {v}"))),
        };
        let w_q = matrix(take(&mut m, "w_q")?, "w_q")?;
        let w_k = matrix(take(&mut m, "w_k")?, "w_k")?;
        let w_v = matrix(take(&mut m, "w_v")?, "w_v")?;
        let main = mlp(&mut m, "mlp", true)?.expect("required");
        let consistency = mlp(&mut m, "consistency_mlp", false)?;
        let dwa_mlp = mlp(&mut m, "dwa_mlp", true)?.expect("required");
        let conv = match m.remove("conv") {
            Some(t) => match t.shape[..] {
                [a, b, c, d] => Some(
                    ConvKernel::new(Array4::from_shape_vec((a, b, c, d), t.data).expect("size checked"))
                        .map_err(|e| malformed(e.to_string()))?,
                ),
                _ => return Err(malformed("`conv` must be 4-D")),
            },
            None => None,
        };
        if let Some(name) = m.keys().next() {
            return Err(malformed(format!("unexpected tensor `{name}`")));
        }
        Self::new(k as usize, w_q, w_k, w_v, main, consistency, dwa_mlp, dwa_mode, conv)
            .map_err(|e| malformed(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        tensor_file::encode(&self.to_tensors())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_tensors(tensor_file::decode(bytes)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| crate::Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::decode(&bytes)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|source| crate::Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

fn project(w: &Array2<f64>, z: &FeatureMap) -> FeatureMap {
    FeatureMap::from_pixels(w.dot(&z.pixels()), z.height(), z.width())
}

/// Per-pixel projections `q² = W_q z²`, `k¹ = W_k z¹`, `v¹ = W_v z¹`.
pub fn project_qkv(
    z1: &FeatureMap,
    z2: &FeatureMap,
    w: &KernelWeights,
) -> Result<(FeatureMap, FeatureMap, FeatureMap)> {
    same_shape(z1, z2, "project_qkv")?;
    ensure!(
        z1.channels() == w.channels,
        "project_qkv: maps have {} channels, weights expect {}",
        z1.channels(),
        w.channels
    );
    Ok((project(&w.w_q, z2), project(&w.w_k, z1), project(&w.w_v, z1)))
}

/// Softmax-weighted attention reference.
///
/// With [`CamNormalization::Channel`] the scores at pixel `(i,j)` are
/// `s_c = q_c k_c`; the result has one channel holding `Σ_c softmax(s)_c v_c`.
/// With [`CamNormalization::Spatial`] each pixel attends over every pixel with
/// score `⟨q_{ij}, k_{i'j'}⟩` and the output keeps C channels.
pub fn cam_reference(q: &FeatureMap, k: &FeatureMap, v: &FeatureMap, mode: CamNormalization) -> Result<FeatureMap> {
    same_shape(q, k, "cam_reference")?;
    same_shape(q, v, "cam_reference")?;
    let (c, h, w) = q.dim();
    match mode {
        CamNormalization::Channel => {
            let mut out = Array3::zeros((1, h, w));
            let mut scores = vec![0.0; c];
            for i in 0..h {
                for j in 0..w {
                    for (ch, s) in scores.iter_mut().enumerate() {
                        *s = q.data[[ch, i, j]] * k.data[[ch, i, j]];
                    }
                    let weights = softmax(&scores);
                    out[[0, i, j]] = weights.iter().enumerate().map(|(ch, a)| a * v.data[[ch, i, j]]).sum();
                }
            }
            Ok(FeatureMap { data: out })
        }
        CamNormalization::Spatial => {
            let (qp, kp, vp) = (q.pixels(), k.pixels(), v.pixels());
            let scores = qp.t().dot(&kp); // (HW, HW)
            let mut attn = Array2::zeros(scores.raw_dim());
            for (row, mut dst) in scores.rows().into_iter().zip(attn.rows_mut()) {
                let sm = softmax(row.as_slice().expect("contiguous"));
                dst.assign(&Array1::from(sm));
            }
            Ok(FeatureMap::from_pixels(vp.dot(&attn.t()), h, w))
        }
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

// concat → per-pixel MLP → K² groups → shift each group → sum
fn shift_sum(q: &FeatureMap, k: &FeatureMap, v: &FeatureMap, mlp: &Mlp, kernel_size: usize) -> FeatureMap {
    let (c, h, w) = q.dim();
    let concat = ndarray::concatenate(Axis(0), &[q.pixels(), k.pixels(), v.pixels()]).expect("equal pixel counts");
    let features = mlp.forward(concat.view());
    let half = (kernel_size / 2) as isize;
    let mut out = Array3::zeros((c, h, w));
    for p in 0..kernel_size {
        for qq in 0..kernel_size {
            let g = p * kernel_size + qq;
            let group = features.slice(s![g * c..(g + 1) * c, ..]).to_owned();
            let group = FeatureMap::from_pixels(group, h, w);
            accumulate_shifted(&mut out, &group.data, p as isize - half, qq as isize - half);
        }
    }
    FeatureMap { data: out }
}

/// Cross-view information extraction. Output has the shape of `z1`.
pub fn cvie(z1: &FeatureMap, z2: &FeatureMap, w: &KernelWeights) -> Result<FeatureMap> {
    let (q2, k1, v1) = project_qkv(z1, z2, w)?;
    Ok(shift_sum(&q2, &k1, &v1, &w.mlp, w.kernel_size))
}

/// Single-view branch of CCF: the same pipeline with `z1` as its own query.
pub fn consistency_branch(z1: &FeatureMap, w: &KernelWeights) -> Result<FeatureMap> {
    let (q1, k1, v1) = project_qkv(z1, z1, w)?;
    let mlp = w.consistency_mlp.as_ref().unwrap_or(&w.mlp);
    Ok(shift_sum(&q1, &k1, &v1, mlp, w.kernel_size))
}

/// Branch weights `(K1, K2)` for the given channel conditions.
pub fn dwa(input: &DwaInput, w: &KernelWeights) -> (f64, f64) {
    let logits = w.dwa_mlp.forward_vec(&[input.snr1_db, input.snr2_db, input.scs]);
    match w.dwa_mode {
        DwaNormalization::SoftmaxPair => {
            let p = softmax(&logits);
            (p[0], p[1])
        }
        DwaNormalization::Sigmoid => (sigmoid(logits[0]), sigmoid(logits[1])),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Complementarity-consistency fusion with weights from [`dwa`].
pub fn ccf(z1: &FeatureMap, z2: &FeatureMap, w: &KernelWeights, dwa_in: &DwaInput) -> Result<FeatureMap> {
    let (k1, k2) = dwa(dwa_in, w);
    ccf_with_weights(z1, z2, w, k1, k2)
}

/// `k1 · cvie(z1, z2) + k2 · consistency_branch(z1)`.
pub fn ccf_with_weights(z1: &FeatureMap, z2: &FeatureMap, w: &KernelWeights, k1: f64, k2: f64) -> Result<FeatureMap> {
    ensure!(k1.is_finite() && k2.is_finite(), "branch weights must be finite");
    let cross = cvie(z1, z2, w)?;
    let single = consistency_branch(z1, w)?;
    Ok(cross.scaled_add(k1, &single, k2))
}

/// Runs the convolution-equivalence construction on `trials` random
/// instances per kernel size and returns the largest absolute deviation
/// between CVIE and direct convolution.
pub fn conv_equivalence_max_error(
    kernel_sizes: &[usize],
    trials: usize,
    channels: usize,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &k in kernel_sizes {
        for _ in 0..trials {
            let kernel = ConvKernel::random(k, channels, channels, rng)?;
            let dwa_mlp = Mlp::random(&[3, DWA_HIDDEN_WIDTH, 2], rng)?;
            let weights = KernelWeights::conv_equivalent(&kernel, dwa_mlp)?;
            let z1 = FeatureMap::random(channels, height, width, rng)?;
            let z2 = FeatureMap::random(channels, height, width, rng)?;
            let got = cvie(&z1, &z2, &weights)?;
            let want = conv2d(&z1, &kernel)?;
            worst = worst.max(got.max_abs_diff(&want));
        }
    }
    if worst.is_nan() {
        return Err(invalid("conv-equivalence produced NaN"));
    }
    Ok(worst)
}
