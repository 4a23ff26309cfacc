//! Declarative network descriptions and exact parameter accounting.

use std::fmt;

use crate::autodiff::kernels::ConvGeom;
use crate::error::{Error, Result};
use crate::ini;

/// Per-sample feature-map extent `(T, H, W, C)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(t: usize, h: usize, w: usize, c: usize) -> Self {
        Shape { t, h, w, c }
    }

    pub fn numel(&self) -> usize {
        self.t * self.h * self.w * self.c
    }

    pub fn batched(&self, b: usize) -> [usize; 5] {
        [b, self.t, self.h, self.w, self.c]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.t, self.h, self.w, self.c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3d,
    Conv2d,
    Conv1dTemporal,
    FactorizedConv,
    TemporalShift,
    BatchNorm,
    LeakyRelu,
    Linear,
    Gru,
}

impl LayerKind {
    pub const ALL: [LayerKind; 9] = [
        LayerKind::Conv3d,
        LayerKind::Conv2d,
        LayerKind::Conv1dTemporal,
        LayerKind::FactorizedConv,
        LayerKind::TemporalShift,
        LayerKind::BatchNorm,
        LayerKind::LeakyRelu,
        LayerKind::Linear,
        LayerKind::Gru,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv3d => "conv3d",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv1dTemporal => "conv1d-temporal",
            LayerKind::FactorizedConv => "factorized-conv",
            LayerKind::TemporalShift => "temporal-shift",
            LayerKind::BatchNorm => "batch-norm",
            LayerKind::LeakyRelu => "leaky-relu",
            LayerKind::Linear => "linear",
            LayerKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Option<LayerKind> {
        LayerKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Number of entries in kernel/stride/padding.
    pub fn arity(self) -> usize {
        match self {
            LayerKind::Conv3d | LayerKind::FactorizedConv => 3,
            LayerKind::Conv2d => 2,
            LayerKind::Conv1dTemporal => 1,
            _ => 0,
        }
    }

    /// Layers whose output channel count is their input channel count.
    pub fn passes_channels(self) -> bool {
        matches!(
            self,
            LayerKind::TemporalShift | LayerKind::BatchNorm | LayerKind::LeakyRelu
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    BatchNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::LeakyRelu => "lrelu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// Temporal shift of `num/den` of the channels in each direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShiftSpec {
    pub num: usize,
    pub den: usize,
    pub steps: usize,
}

impl ShiftSpec {
    pub const QUARTER: ShiftSpec = ShiftSpec {
        num: 1,
        den: 4,
        steps: 1,
    };

    pub fn fold(&self, channels: usize) -> usize {
        channels * self.num / self.den
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// `None` only for channel-preserving kinds.
    pub channels: Option<usize>,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
    pub norm: Option<Norm>,
    pub activation: Option<Activation>,
    pub bias: bool,
    pub shift: Option<ShiftSpec>,
}

impl LayerSpec {
    fn base(name: &str, kind: LayerKind, channels: Option<usize>) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind,
            channels,
            kernel: vec![],
            stride: vec![],
            padding: vec![],
            norm: None,
            activation: None,
            bias: false,
            shift: None,
        }
    }

    fn conv(name: &str, kind: LayerKind, ch: usize, k: &[usize], s: &[usize], p: &[usize]) -> Self {
        LayerSpec {
            kernel: k.to_vec(),
            stride: s.to_vec(),
            padding: p.to_vec(),
            ..LayerSpec::base(name, kind, Some(ch))
        }
    }

    /// Kernel `(t, h, w)`, stride and padding per axis.
    pub fn conv3d(name: &str, ch: usize, k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> Self {
        Self::conv(name, LayerKind::Conv3d, ch, &k, &s, &p)
    }

    /// Per-frame spatial convolution, `(h, w)`.
    pub fn conv2d(name: &str, ch: usize, k: [usize; 2], s: [usize; 2], p: [usize; 2]) -> Self {
        Self::conv(name, LayerKind::Conv2d, ch, &k, &s, &p)
    }

    pub fn conv1d_temporal(name: &str, ch: usize, k: usize, s: usize, p: usize) -> Self {
        Self::conv(name, LayerKind::Conv1dTemporal, ch, &[k], &[s], &[p])
    }

    /// Spatial `(1, k_h, k_w)` stage, LReLU, then temporal `(k_t, 1, 1)` stage.
    pub fn factorized(name: &str, ch: usize, k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> Self {
        Self::conv(name, LayerKind::FactorizedConv, ch, &k, &s, &p)
    }

    pub fn temporal_shift(name: &str, shift: ShiftSpec) -> Self {
        LayerSpec {
            shift: Some(shift),
            ..LayerSpec::base(name, LayerKind::TemporalShift, None)
        }
    }

    pub fn batch_norm(name: &str) -> Self {
        LayerSpec::base(name, LayerKind::BatchNorm, None)
    }

    pub fn leaky_relu(name: &str) -> Self {
        LayerSpec::base(name, LayerKind::LeakyRelu, None)
    }

    pub fn linear(name: &str, out: usize) -> Self {
        LayerSpec::base(name, LayerKind::Linear, Some(out))
    }

    pub fn gru(name: &str, hidden: usize) -> Self {
        LayerSpec::base(name, LayerKind::Gru, Some(hidden))
    }

    pub fn with_bn(mut self) -> Self {
        self.norm = Some(Norm::BatchNorm);
        self
    }

    pub fn with_act(mut self, a: Activation) -> Self {
        self.activation = Some(a);
        self
    }

    pub fn lrelu(self) -> Self {
        self.with_act(Activation::LeakyRelu)
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    /// `(k_t, k_h, k_w)` of the full receptive kernel.
    pub fn kernel3(&self) -> [usize; 3] {
        expand3(self.kind, &self.kernel, 1)
    }

    pub fn stride3(&self) -> [usize; 3] {
        expand3(self.kind, &self.stride, 1)
    }

    pub fn pad3(&self) -> [usize; 3] {
        expand3(self.kind, &self.padding, 0)
    }

    fn validate(&self) -> Result<()> {
        let a = self.kind.arity();
        if self.kernel.len() != a || self.stride.len() != a || self.padding.len() != a {
            return Err(Error::invalid(format!(
                "layer {:?} ({}): kernel/stride/pad need {} entries each",
                self.name,
                self.kind.as_str(),
                a
            )));
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(Error::invalid(format!(
                "layer {:?}: zero kernel or stride",
                self.name
            )));
        }
        match self.channels {
            Some(0) => Err(Error::invalid(format!("layer {:?}: zero channels", self.name))),
            None if !self.kind.passes_channels() => Err(Error::invalid(format!(
                "layer {:?} ({}) needs a channel count",
                self.name,
                self.kind.as_str()
            ))),
            _ => Ok(()),
        }?;
        if self.kind == LayerKind::TemporalShift {
            match self.shift {
                Some(s) if s.den > 0 && s.num * 2 <= s.den => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "layer {:?}: temporal shift needs a fraction <= 1/2",
                        self.name
                    )))
                }
            }
        }
        Ok(())
    }

    /// Output shape for a given input, or an error naming this layer.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        let fail = |why: String| {
            Error::invalid(format!(
                "layer {:?} ({}) does not chain with input {}: {}",
                self.name,
                self.kind.as_str(),
                input,
                why
            ))
        };
        if let Some(c) = self.channels {
            if self.kind.passes_channels() && c != input.c {
                return Err(fail(format!("declares {c} channels")));
            }
        }
        let out_c = self.channels.unwrap_or(input.c);
        let axes = |k: [usize; 3], s: [usize; 3], p: [usize; 3], i: [usize; 3]| -> Result<[usize; 3]> {
            let mut o = [0; 3];
            for a in 0..3 {
                o[a] = ConvGeom::out_extent(i[a], k[a], s[a], p[a])
                    .ok_or_else(|| fail(format!("kernel {:?} exceeds padded extent", k)))?;
            }
            Ok(o)
        };
        let i3 = [input.t, input.h, input.w];
        match self.kind {
            LayerKind::Conv3d | LayerKind::Conv2d | LayerKind::Conv1dTemporal => {
                let o = axes(self.kernel3(), self.stride3(), self.pad3(), i3)?;
                Ok(Shape::new(o[0], o[1], o[2], out_c))
            }
            LayerKind::FactorizedConv => {
                let [kt, kh, kw] = self.kernel3();
                let [st, sh, sw] = self.stride3();
                let [pt, ph, pw] = self.pad3();
                let mid = axes([1, kh, kw], [1, sh, sw], [0, ph, pw], i3)?;
                let o = axes([kt, 1, 1], [st, 1, 1], [pt, 0, 0], mid)?;
                Ok(Shape::new(o[0], o[1], o[2], out_c))
            }
            LayerKind::TemporalShift | LayerKind::BatchNorm | LayerKind::LeakyRelu => Ok(input),
            LayerKind::Linear => Ok(Shape::new(1, 1, 1, out_c)),
            LayerKind::Gru => {
                if input.h != 1 || input.w != 1 {
                    return Err(fail("GRU expects a (T,1,1,C) sequence".into()));
                }
                Ok(Shape::new(input.t, 1, 1, out_c))
            }
        }
    }

    /// Learnable scalars for this layer given its input channel/feature count.
    pub fn param_count(&self, input: Shape) -> usize {
        let cin = input.c;
        let cout = self.channels.unwrap_or(cin);
        let [kt, kh, kw] = self.kernel3();
        let b = usize::from(self.bias);
        let bn = if self.norm == Some(Norm::BatchNorm) { 2 * cout } else { 0 };
        match self.kind {
            LayerKind::Conv3d | LayerKind::Conv2d | LayerKind::Conv1dTemporal => {
                cout * cin * kt * kh * kw + b * cout + bn
            }
            LayerKind::FactorizedConv => {
                cout * cin * kh * kw + cout * cout * kt + 2 * b * cout + bn
            }
            LayerKind::TemporalShift | LayerKind::LeakyRelu => 0,
            LayerKind::BatchNorm => 2 * cin,
            LayerKind::Linear => input.numel() * cout + b * cout + bn,
            LayerKind::Gru => 3 * (cin * cout + cout * cout) + 6 * b * cout,
        }
    }
}

fn expand3(kind: LayerKind, v: &[usize], fill: usize) -> [usize; 3] {
    match (kind, v) {
        (LayerKind::Conv3d | LayerKind::FactorizedConv, [t, h, w]) => [*t, *h, *w],
        (LayerKind::Conv2d, [h, w]) => [fill, *h, *w],
        (LayerKind::Conv1dTemporal, [t]) => [*t, fill, fill],
        _ => [fill; 3],
    }
}

/// Named sequential architecture over a `(T, H, W, C)` input.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    /// Negative slope shared by every LReLU in the network.
    pub slope: f64,
}

/// One row of a per-layer parameter table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCount {
    pub name: String,
    pub kind: LayerKind,
    pub output: Shape,
    pub params: usize,
}

impl NetSpec {
    pub fn new(name: &str, input: Shape, layers: Vec<LayerSpec>) -> Self {
        NetSpec {
            name: name.to_string(),
            input,
            layers,
            slope: 0.2,
        }
    }

    /// Input and output shape of every layer; fails at the first layer that does not chain.
    pub fn shapes(&self) -> Result<Vec<(Shape, Shape)>> {
        if self.layers.is_empty() {
            return Err(Error::invalid(format!("network {:?} has no layers", self.name)));
        }
        let mut names = std::collections::HashSet::new();
        let mut cur = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::invalid(format!("duplicate layer name {:?}", l.name)));
            }
            let next = l.output_shape(cur)?;
            out.push((cur, next));
            cur = next;
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().unwrap().1)
    }

    pub fn layer_counts(&self) -> Result<Vec<LayerCount>> {
        Ok(self
            .shapes()?
            .into_iter()
            .zip(&self.layers)
            .map(|((i, o), l)| LayerCount {
                name: l.name.clone(),
                kind: l.kind,
                output: o,
                params: l.param_count(i),
            })
            .collect())
    }

    /// Exact learnable-scalar count, independent of initialization.
    pub fn count_params(&self) -> Result<usize> {
        Ok(self.layer_counts()?.iter().map(|c| c.params).sum())
    }

    /// Largest number of axes any kernel in the network spans.
    pub fn max_kernel_dim(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv3d => l.kernel3().iter().filter(|&&k| k > 1).count().max(1),
                LayerKind::Conv2d => 2,
                LayerKind::FactorizedConv => 2,
                LayerKind::Conv1dTemporal => 1,
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Text form: a `[net]` section followed by one `[layer]` section per layer.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[net]\n");
        s.push_str(&format!("name = {}\n", self.name));
        let i = self.input;
        s.push_str(&format!("input = {},{},{},{}\n", i.t, i.h, i.w, i.c));
        s.push_str(&format!("slope = {}\n", self.slope));
        for l in &self.layers {
            s.push_str("\n[layer]\n");
            s.push_str(&format!("name = {}\n", l.name));
            s.push_str(&format!("kind = {}\n", l.kind.as_str()));
            if let Some(c) = l.channels {
                s.push_str(&format!("channels = {c}\n"));
            }
            if l.kind.arity() > 0 {
                s.push_str(&format!("kernel = {}\n", ini::join(&l.kernel)));
                s.push_str(&format!("stride = {}\n", ini::join(&l.stride)));
                s.push_str(&format!("pad = {}\n", ini::join(&l.padding)));
            }
            s.push_str(&format!(
                "norm = {}\n",
                if l.norm.is_some() { "bn" } else { "none" }
            ));
            s.push_str(&format!(
                "act = {}\n",
                l.activation.map_or("none", |a| a.as_str())
            ));
            s.push_str(&format!("bias = {}\n", l.bias));
            if let Some(sh) = l.shift {
                s.push_str(&format!("shift = {}/{}\n", sh.num, sh.den));
                s.push_str(&format!("steps = {}\n", sh.steps));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<NetSpec> {
        let sections = ini::parse(text)?;
        let mut it = sections.iter();
        let head = it.next().filter(|s| s.name == "net").ok_or(Error::Config {
            line: 1,
            msg: "net spec must start with a [net] section".into(),
        })?;
        check_keys(head, &["name", "input", "slope"])?;
        let name = head.get("name").map_or("unnamed".to_string(), |e| e.value.clone());
        let input_e = head.get("input").ok_or(Error::Config {
            line: head.line,
            msg: "missing key \"input\"".into(),
        })?;
        let dims: Vec<usize> = ini::parse_list(input_e)?;
        if dims.len() != 4 {
            return Err(Error::Config {
                line: input_e.line,
                msg: "input needs T,H,W,C".into(),
            });
        }
        let slope = match head.get("slope") {
            Some(e) => ini::parse_value(e)?,
            None => 0.2,
        };
        let mut layers = Vec::new();
        for sec in it {
            if sec.name != "layer" {
                return Err(Error::Config {
                    line: sec.line,
                    msg: format!("unknown section [{}]", sec.name),
                });
            }
            layers.push(parse_layer(sec, layers.len())?);
        }
        let spec = NetSpec {
            name,
            input: Shape::new(dims[0], dims[1], dims[2], dims[3]),
            layers,
            slope,
        };
        spec.shapes()?;
        Ok(spec)
    }
}

fn check_keys(sec: &ini::Section, allowed: &[&str]) -> Result<()> {
    for e in &sec.entries {
        if !allowed.contains(&e.key.as_str()) {
            return Err(Error::Config {
                line: e.line,
                msg: format!("unknown key {:?} in [{}]", e.key, sec.name),
            });
        }
    }
    Ok(())
}

fn parse_layer(sec: &ini::Section, idx: usize) -> Result<LayerSpec> {
    check_keys(
        sec,
        &[
            "name", "kind", "channels", "kernel", "stride", "pad", "norm", "act", "bias", "shift",
            "steps",
        ],
    )?;
    let bad = |e: &ini::Entry, what: &str| Error::Config {
        line: e.line,
        msg: format!("bad {what} {:?}", e.value),
    };
    let kind_e = sec.get("kind").ok_or(Error::Config {
        line: sec.line,
        msg: "layer without kind".into(),
    })?;
    let kind = LayerKind::parse(&kind_e.value).ok_or_else(|| bad(kind_e, "kind"))?;
    let mut l = LayerSpec::base(
        &sec.get("name").map_or(format!("l{idx}"), |e| e.value.clone()),
        kind,
        None,
    );
    if let Some(e) = sec.get("channels") {
        l.channels = Some(ini::parse_value(e)?);
    }
    let list = |key: &str| -> Result<Vec<usize>> {
        match sec.get(key) {
            Some(e) => ini::parse_list(e),
            None => Ok(vec![]),
        }
    };
    l.kernel = list("kernel")?;
    l.stride = list("stride")?;
    l.padding = list("pad")?;
    if l.stride.is_empty() {
        l.stride = vec![1; l.kernel.len()];
    }
    if l.padding.is_empty() {
        l.padding = vec![0; l.kernel.len()];
    }
    if let Some(e) = sec.get("norm") {
        l.norm = match e.value.as_str() {
            "none" => None,
            "bn" => Some(Norm::BatchNorm),
            _ => return Err(bad(e, "norm")),
        };
    }
    if let Some(e) = sec.get("act") {
        l.activation = match e.value.as_str() {
            "none" => None,
            "lrelu" => Some(Activation::LeakyRelu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => return Err(bad(e, "act")),
        };
    }
    if let Some(e) = sec.get("bias") {
        l.bias = ini::parse_value(e)?;
    }
    if kind == LayerKind::TemporalShift {
        let mut s = ShiftSpec::QUARTER;
        if let Some(e) = sec.get("shift") {
            let (n, d) = e.value.split_once('/').ok_or_else(|| bad(e, "shift fraction"))?;
            s.num = n.trim().parse().map_err(|_| bad(e, "shift fraction"))?;
            s.den = d.trim().parse().map_err(|_| bad(e, "shift fraction"))?;
        }
        if let Some(e) = sec.get("steps") {
            s.steps = ini::parse_value(e)?;
        }
        l.shift = Some(s);
    }
    l.validate().map_err(|err| Error::Config {
        line: sec.line,
        msg: err.to_string(),
    })?;
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetSpec {
        NetSpec::new(
            "tiny",
            Shape::new(4, 8, 8, 2),
            vec![
                LayerSpec::conv3d("c0", 3, [2, 2, 2], [1, 2, 2], [0, 1, 1]).lrelu(),
                LayerSpec::temporal_shift("s0", ShiftSpec::QUARTER),
                LayerSpec::factorized("c1", 4, [2, 3, 3], [1, 1, 1], [1, 1, 1])
                    .with_bn()
                    .lrelu(),
                LayerSpec::linear("fc", 5).with_bias(true),
            ],
        )
    }

    #[test]
    fn conv3d_shape_formula() {
        let l = LayerSpec::conv3d("c0", 64, [4, 4, 4], [1, 2, 2], [0, 1, 1]);
        let o = l.output_shape(Shape::new(16, 64, 64, 3)).unwrap();
        assert_eq!(o, Shape::new(13, 32, 32, 64));
    }

    #[test]
    fn linear_count_closed_form() {
        let l = LayerSpec::linear("fc", 7).with_bias(true);
        assert_eq!(l.param_count(Shape::new(1, 1, 1, 11)), 11 * 7 + 7);
    }

    #[test]
    fn empty_spec_rejected() {
        let s = NetSpec::new("empty", Shape::new(1, 4, 4, 1), vec![]);
        assert!(s.count_params().is_err());
    }

    #[test]
    fn non_chaining_names_layer() {
        let s = NetSpec::new(
            "bad",
            Shape::new(2, 4, 4, 1),
            vec![
                LayerSpec::conv2d("ok", 2, [3, 3], [1, 1], [1, 1]),
                LayerSpec::conv3d("too_big", 2, [3, 3, 3], [1, 1, 1], [0, 0, 0]),
            ],
        );
        let err = s.shapes().unwrap_err().to_string();
        assert!(err.contains("too_big"), "{err}");
    }

    #[test]
    fn text_round_trip() {
        let s = tiny();
        let txt = s.to_text();
        let back = NetSpec::from_text(&txt).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), txt);
    }

    #[test]
    fn text_rejects_unknown_key_with_line() {
        let txt = "[net]\ninput = 1,4,4,1\n[layer]\nkind = conv2d\nchannels = 2\nkernal = 3,3\n";
        match NetSpec::from_text(txt) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 6);
                assert!(msg.contains("kernal"));
            }
            other => panic!("{other:?}"),
        }
    }
}
