//! Layer notation: `c7s1-60`, `d120`, `R960 X 9`, `u480`, `c4s2p1-64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Down,
    Residual,
    Up,
    ConvFinal,
    DiscConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stride {
    One,
    Two,
    /// Fractional stride: doubles the spatial size.
    Half,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    Reflect(usize),
    Zero(usize),
}

impl Padding {
    pub fn amount(self) -> usize {
        match self {
            Padding::Reflect(p) | Padding::Zero(p) => p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    Instance,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// Slope 0.2.
    LeakyRelu,
    Sigmoid,
    Tanh,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: Stride,
    pub padding: Padding,
    pub filters: usize,
    pub norm: Norm,
    pub activation: Activation,
}

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

impl LayerSpec {
    pub fn conv(kernel: usize, stride: Stride, filters: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding: Padding::Reflect(kernel / 2),
            filters,
            norm: Norm::Instance,
            activation: Activation::Relu,
        }
    }

    pub fn down(filters: usize) -> Self {
        Self { kind: LayerKind::Down, stride: Stride::Two, ..Self::conv(3, Stride::One, filters) }
    }

    pub fn residual(filters: usize) -> Self {
        Self { kind: LayerKind::Residual, ..Self::conv(3, Stride::One, filters) }
    }

    pub fn up(filters: usize) -> Self {
        Self { kind: LayerKind::Up, stride: Stride::Half, ..Self::conv(3, Stride::One, filters) }
    }

    pub fn disc_conv(kernel: usize, stride: Stride, pad: usize, filters: usize) -> Self {
        Self {
            kind: LayerKind::DiscConv,
            kernel,
            stride,
            padding: Padding::Zero(pad),
            filters,
            norm: Norm::None,
            activation: Activation::LeakyRelu,
        }
    }

    /// Output convolution: no normalization, the given activation.
    pub fn conv_final(kernel: usize, filters: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::ConvFinal,
            kernel,
            stride: Stride::One,
            padding: Padding::Reflect(kernel / 2),
            filters,
            norm: Norm::None,
            activation,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if ![3, 4, 7].contains(&self.kernel) {
            return Err(format!("kernel {} not in {{3, 4, 7}}", self.kernel));
        }
        if self.filters == 0 {
            return Err("zero filters".into());
        }
        if (self.stride == Stride::Half) != (self.kind == LayerKind::Up) {
            return Err("stride 1/2 is reserved for up layers".into());
        }
        if matches!(self.padding, Padding::Reflect(_)) && self.kernel.is_multiple_of(2) {
            return Err("even kernels need explicit zero padding (c<k>s<s>p<p>-<f>)".into());
        }
        Ok(())
    }

    /// Token in the layer notation.
    pub fn render(&self) -> String {
        let s = match self.stride {
            Stride::One => 1,
            Stride::Two => 2,
            Stride::Half => 0,
        };
        match self.kind {
            LayerKind::Conv | LayerKind::ConvFinal => format!("c{}s{}-{}", self.kernel, s, self.filters),
            LayerKind::DiscConv => format!("c{}s{}p{}-{}", self.kernel, s, self.padding.amount(), self.filters),
            LayerKind::Down => format!("d{}", self.filters),
            LayerKind::Residual => format!("R{}", self.filters),
            LayerKind::Up => format!("u{}", self.filters),
        }
    }
}

fn number(s: &str) -> std::result::Result<usize, String> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("expected a number, found {s:?}"));
    }
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_conv(body: &str) -> std::result::Result<LayerSpec, String> {
    // <k>s<s>[p<p>]-<f>
    let (head, filters) = body.split_once('-').ok_or("missing '-<filters>'")?;
    let (kernel, rest) = head.split_once('s').ok_or("missing 's<stride>'")?;
    let (stride, pad) = match rest.split_once('p') {
        Some((s, p)) => (s, Some(number(p)?)),
        None => (rest, None),
    };
    let kernel = number(kernel)?;
    let stride = match number(stride)? {
        1 => Stride::One,
        2 => Stride::Two,
        s => return Err(format!("stride {s} not in {{1, 2}}")),
    };
    let filters = number(filters)?;
    Ok(match pad {
        Some(p) => LayerSpec::disc_conv(kernel, stride, p, filters),
        None => LayerSpec::conv(kernel, stride, filters),
    })
}

fn parse_residual(body: &str) -> std::result::Result<Vec<LayerSpec>, String> {
    let (filters, repeat) = match body.find(['X', 'x']) {
        Some(i) => (body[..i].trim(), number(body[i + 1..].trim())?),
        None => (body.trim(), 1),
    };
    if repeat == 0 {
        return Err("repeat count must be positive".into());
    }
    Ok(vec![LayerSpec::residual(number(filters)?); repeat])
}

fn parse_token(token: &str) -> std::result::Result<Vec<LayerSpec>, String> {
    let mut chars = token.chars();
    let prefix = chars.next().ok_or("empty token")?;
    let body = chars.as_str();
    let layers = match prefix {
        'c' => vec![parse_conv(body)?],
        'd' => vec![LayerSpec::down(number(body)?)],
        'R' => parse_residual(body)?,
        'u' => vec![LayerSpec::up(number(body)?)],
        other => return Err(format!("unknown layer prefix {other:?}")),
    };
    for l in &layers {
        l.validate()?;
    }
    Ok(layers)
}

/// Parse a comma-separated architecture string. Token positions in errors
/// are 1-based.
pub fn parse_arch(spec: &str) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    for (i, raw) in spec.split(',').enumerate() {
        let token = raw.trim();
        let parsed =
            parse_token(token).map_err(|reason| Error::Parse { token: token.to_string(), position: i + 1, reason })?;
        layers.extend(parsed);
    }
    Ok(layers)
}

/// Inverse of [`parse_arch`]; runs of identical residual blocks collapse to
/// `R<f> X <n>`.
pub fn render_arch(layers: &[LayerSpec]) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < layers.len() {
        if !out.is_empty() {
            out.push_str(", ");
        }
        let l = &layers[i];
        let mut run = 1;
        if l.kind == LayerKind::Residual {
            while i + run < layers.len() && layers[i + run] == *l {
                run += 1;
            }
        }
        if run > 1 {
            let _ = write!(out, "{} X {}", l.render(), run);
        } else {
            out.push_str(&l.render());
        }
        i += run;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_token() {
        let l = parse_arch("c7s1-60").unwrap();
        assert_eq!(
            l,
            vec![LayerSpec {
                kind: LayerKind::Conv,
                kernel: 7,
                stride: Stride::One,
                padding: Padding::Reflect(3),
                filters: 60,
                norm: Norm::Instance,
                activation: Activation::Relu,
            }]
        );
    }

    #[test]
    fn residual_repeat_expands() {
        let l = parse_arch("R960 X 9").unwrap();
        assert_eq!(l.len(), 9);
        assert!(l.iter().all(|s| s.kind == LayerKind::Residual && s.filters == 960));
    }

    #[test]
    fn up_token_is_fractional() {
        let l = parse_arch("u480").unwrap()[0];
        assert_eq!((l.kind, l.kernel, l.stride, l.filters), (LayerKind::Up, 3, Stride::Half, 480));
    }

    #[test]
    fn down_layers_use_reflection_padding() {
        let l = parse_arch("d120").unwrap()[0];
        assert_eq!(l.padding, Padding::Reflect(1));
        assert_eq!(l.stride, Stride::Two);
    }

    #[test]
    fn discriminator_tokens() {
        let l = parse_arch("c4s2p1-64, c4s1p1-1").unwrap();
        assert_eq!(l[0].padding, Padding::Zero(1));
        assert_eq!(l[0].activation, Activation::LeakyRelu);
        assert_eq!(l[0].norm, Norm::None);
        assert_eq!(l[1].stride, Stride::One);
    }

    #[test]
    fn unknown_prefix_reports_position() {
        match parse_arch("z99") {
            Err(Error::Parse { token, position, .. }) => {
                assert_eq!(token, "z99");
                assert_eq!(position, 1);
            }
            other => panic!("{other:?}"),
        }
        match parse_arch("c7s1-60, d12x") {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in ["c5s1-8", "c7s3-8", "c7s1-0", "c4s1-8", "R8 X 0", "", "d", "u-3"] {
            assert!(parse_arch(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn render_collapses_residual_runs() {
        let s = "c3s1-960, R960 X 9, u480, u240, u120, u60, c7s1-3";
        assert_eq!(render_arch(&parse_arch(s).unwrap()), s);
    }
}
