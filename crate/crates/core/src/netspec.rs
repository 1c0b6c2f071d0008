//! Integer shape algebra for the adaptation discriminators.
//!
//! The built-in tables record the reference layer hyperparameters and the
//! output size expected after each row, so a trainer can check its wiring
//! against them. The gradient reversal layer is shape-neutral and does not
//! appear here.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Domain(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl std::str::FromStr for TensorShape {
    type Err = Error;

    /// Parses `CxHxW`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['x', 'X', '×']).collect();
        let dims: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Domain(format!("bad shape {s:?}; expected CxHxW")))?;
        match dims[..] {
            [c, h, w] => TensorShape::new(c, h, w),
            _ => Err(Error::Domain(format!("bad shape {s:?}; expected CxHxW"))),
        }
    }
}

/// Convolution hyperparameters; square kernels only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvParams {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv {
        params: ConvParams,
        out_channels: usize,
    },
    /// Two stacked convolutions with an identity skip; must preserve shape.
    ResidualPair {
        params: ConvParams,
        out_channels: usize,
    },
    AdaptiveAvgPool {
        height: usize,
        width: usize,
    },
    /// Collapses `C x H x W` into a `(C*H*W) x 1 x 1` vector.
    Flatten,
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, padding: usize, out_channels: usize) -> Self {
        LayerSpec::Conv {
            params: ConvParams {
                kernel,
                stride,
                padding,
            },
            out_channels,
        }
    }

    pub fn residual(kernel: usize, stride: usize, padding: usize, out_channels: usize) -> Self {
        LayerSpec::ResidualPair {
            params: ConvParams {
                kernel,
                stride,
                padding,
            },
            out_channels,
        }
    }

    pub fn pool(height: usize, width: usize) -> Self {
        LayerSpec::AdaptiveAvgPool { height, width }
    }
}

fn conv_dim(dim: usize, p: &ConvParams) -> Option<usize> {
    if p.kernel == 0 || p.stride == 0 {
        return None;
    }
    let padded = dim + 2 * p.padding;
    if padded < p.kernel {
        return None;
    }
    Some((padded - p.kernel) / p.stride + 1)
}

/// `floor((dim + 2p - k) / s) + 1` on both spatial axes.
pub fn conv_output_shape(
    input: TensorShape,
    params: &ConvParams,
    out_channels: usize,
) -> Result<TensorShape> {
    if params.kernel == 0 || params.stride == 0 {
        return Err(Error::Domain(format!(
            "kernel and stride must be at least 1, got k={} s={}",
            params.kernel, params.stride
        )));
    }
    match (
        conv_dim(input.height, params),
        conv_dim(input.width, params),
    ) {
        (Some(h), Some(w)) => TensorShape::new(out_channels, h, w),
        _ => Err(Error::Domain(format!(
            "k={} s={} p={} leaves no output for input {input}",
            params.kernel, params.stride, params.padding
        ))),
    }
}

pub fn layer_output_shape(input: TensorShape, layer: &LayerSpec) -> Result<TensorShape> {
    match layer {
        LayerSpec::Conv {
            params,
            out_channels,
        } => conv_output_shape(input, params, *out_channels),
        LayerSpec::ResidualPair {
            params,
            out_channels,
        } => {
            let mid = conv_output_shape(input, params, *out_channels)?;
            let out = conv_output_shape(mid, params, *out_channels)?;
            if out != input {
                return Err(Error::Domain(format!(
                    "residual pair maps {input} to {out}; the skip connection needs equal shapes"
                )));
            }
            Ok(out)
        }
        LayerSpec::AdaptiveAvgPool { height, width } => {
            TensorShape::new(input.channels, *height, *width)
        }
        LayerSpec::Flatten => TensorShape::new(input.numel(), 1, 1),
    }
}

/// Shapes after each layer. Errors name the index of the first bad layer.
pub fn chain_shapes(input: TensorShape, layers: &[LayerSpec]) -> Result<Vec<TensorShape>> {
    let mut cur = input;
    let mut out = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        cur =
            layer_output_shape(cur, layer).map_err(|e| Error::Domain(format!("layer {i}: {e}")))?;
        out.push(cur);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub layer: LayerSpec,
    pub expected: TensorShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    pub name: String,
    pub input: TensorShape,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// Image-level discriminator.
    Dimg,
    /// Semantic-level discriminator.
    Dsem,
    /// FPN levels P2..P5 of a 256x256 input average-pooled to 8x8.
    ImgPool,
    /// Mask-branch RoI feature pooled to 2x2 and flattened.
    InsFlatten,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::Dimg,
        Builtin::Dsem,
        Builtin::ImgPool,
        Builtin::InsFlatten,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Dimg => "DIMG",
            Builtin::Dsem => "DSEM",
            Builtin::ImgPool => "IMG_POOL",
            Builtin::InsFlatten => "INS_FLATTEN",
        }
    }

    pub fn tables(self) -> Vec<ShapeTable> {
        let s = |c, h, w| TensorShape {
            channels: c,
            height: h,
            width: w,
        };
        let row = |name: &str, layer, expected| TableRow {
            name: name.to_string(),
            layer,
            expected,
        };
        match self {
            Builtin::Dimg => vec![ShapeTable {
                name: "DIMG".into(),
                input: s(256, 8, 8),
                rows: vec![
                    row("Conv1", LayerSpec::conv(3, 1, 1, 256), s(256, 8, 8)),
                    row("Conv2", LayerSpec::conv(3, 1, 1, 512), s(512, 8, 8)),
                    row("Conv3", LayerSpec::conv(3, 1, 1, 512), s(512, 8, 8)),
                    row("Conv4", LayerSpec::conv(1, 1, 0, 2), s(2, 8, 8)),
                ],
            }],
            Builtin::Dsem => vec![ShapeTable {
                name: "DSEM".into(),
                input: s(2, 256, 256),
                rows: vec![
                    row("C1", LayerSpec::conv(7, 2, 3, 64), s(64, 128, 128)),
                    row("R11/R12", LayerSpec::residual(3, 1, 1, 64), s(64, 128, 128)),
                    row("C2", LayerSpec::conv(5, 2, 2, 128), s(128, 64, 64)),
                    row("R21/R22", LayerSpec::residual(3, 1, 1, 128), s(128, 64, 64)),
                    row("C3", LayerSpec::conv(5, 2, 2, 256), s(256, 32, 32)),
                    row("R31/R32", LayerSpec::residual(3, 1, 1, 256), s(256, 32, 32)),
                    row("C4", LayerSpec::conv(5, 2, 2, 512), s(512, 16, 16)),
                    row("R41/R42", LayerSpec::residual(3, 1, 1, 512), s(512, 16, 16)),
                    row("C5", LayerSpec::conv(1, 1, 0, 2), s(2, 16, 16)),
                ],
            }],
            Builtin::ImgPool => [("P2", 64), ("P3", 32), ("P4", 16), ("P5", 8)]
                .into_iter()
                .map(|(level, side)| ShapeTable {
                    name: format!("IMG_POOL/{level}"),
                    input: s(256, side, side),
                    rows: vec![row("AvgPool", LayerSpec::pool(8, 8), s(256, 8, 8))],
                })
                .collect(),
            Builtin::InsFlatten => vec![ShapeTable {
                name: "INS_FLATTEN".into(),
                input: s(256, 14, 14),
                rows: vec![
                    row("AvgPool", LayerSpec::pool(2, 2), s(256, 2, 2)),
                    row("Flatten", LayerSpec::Flatten, s(1024, 1, 1)),
                ],
            }],
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "DIMG" => Ok(Builtin::Dimg),
            "DSEM" => Ok(Builtin::Dsem),
            "IMG_POOL" => Ok(Builtin::ImgPool),
            "INS_FLATTEN" => Ok(Builtin::InsFlatten),
            other => Err(Error::Domain(format!("unknown built-in table {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowCheck {
    pub table: String,
    pub row: String,
    pub expected: TensorShape,
    /// `Err` carries the reason the layer could not be applied.
    pub computed: std::result::Result<TensorShape, String>,
}

impl RowCheck {
    pub fn passed(&self) -> bool {
        self.computed.as_ref() == Ok(&self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub rows: Vec<RowCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(RowCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RowCheck> {
        self.rows.iter().filter(|r| !r.passed())
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.rows {
            let computed = match &r.computed {
                Ok(s) => s.to_string(),
                Err(e) => format!("error ({e})"),
            };
            writeln!(
                f,
                "{} {}/{}: expected {} computed {}",
                if r.passed() { "PASS" } else { "FAIL" },
                r.table,
                r.row,
                r.expected,
                computed
            )?;
        }
        Ok(())
    }
}

/// Recomputes every row of `table`. After a failed row the expected shape
/// is carried forward so later rows are judged on their own.
pub fn validate_table(table: &ShapeTable) -> ValidationReport {
    let mut cur = table.input;
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let computed = layer_output_shape(cur, &row.layer).map_err(|e| e.to_string());
            cur = row.expected;
            RowCheck {
                table: table.name.clone(),
                row: row.name.clone(),
                expected: row.expected,
                computed,
            }
        })
        .collect();
    ValidationReport { rows }
}

pub fn validate_builtin(which: Builtin) -> ValidationReport {
    let mut report = ValidationReport::default();
    for t in which.tables() {
        report.rows.extend(validate_table(&t).rows);
    }
    report
}

/// Parses a layer chain from CSV rows `kind,k,s,p,out_channels,target`.
///
/// `kind` is `conv`, `residual_pair`, `adaptive_avg_pool` or `flatten`;
/// `target` is `HxW` for pooling and empty otherwise. A header row starting
/// with `kind` is skipped.
pub fn parse_chain_csv(reader: impl std::io::Read, source: &str) -> Result<Vec<LayerSpec>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut layers = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::Parse {
            path: source.into(),
            line,
            reason,
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let kind = field(0).to_ascii_lowercase();
        if kind.is_empty() || kind.starts_with('#') || (line == 1 && kind == "kind") {
            continue;
        }
        let num = |i: usize, name: &str| -> Result<usize> {
            field(i)
                .parse::<usize>()
                .map_err(|_| bad(format!("bad {name} {:?}", field(i))))
        };
        let layer = match kind.as_str() {
            "conv" => LayerSpec::conv(
                num(1, "k")?,
                num(2, "s")?,
                num(3, "p")?,
                num(4, "out_channels")?,
            ),
            "residual_pair" | "residual" => LayerSpec::residual(
                num(1, "k")?,
                num(2, "s")?,
                num(3, "p")?,
                num(4, "out_channels")?,
            ),
            "adaptive_avg_pool" | "pool" => {
                let target = field(5);
                let (h, w) = target
                    .split_once(['x', 'X'])
                    .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)))
                    .ok_or_else(|| bad(format!("bad pool target {target:?}; expected HxW")))?;
                LayerSpec::pool(h, w)
            }
            "flatten" => LayerSpec::Flatten,
            other => return Err(bad(format!("unknown layer kind {other:?}"))),
        };
        layers.push(layer);
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(c: usize, h: usize, w: usize) -> TensorShape {
        TensorShape::new(c, h, w).unwrap()
    }

    #[test]
    fn conv_rows() {
        let p = ConvParams {
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        assert_eq!(
            conv_output_shape(shape(256, 8, 8), &p, 256).unwrap(),
            shape(256, 8, 8)
        );
        let p = ConvParams {
            kernel: 7,
            stride: 2,
            padding: 3,
        };
        assert_eq!(
            conv_output_shape(shape(2, 256, 256), &p, 64).unwrap(),
            shape(64, 128, 128)
        );
        let p = ConvParams {
            kernel: 1,
            stride: 1,
            padding: 0,
        };
        assert_eq!(
            conv_output_shape(shape(3, 13, 7), &p, 5).unwrap(),
            shape(5, 13, 7)
        );
    }

    #[test]
    fn conv_without_output_is_an_error() {
        let p = ConvParams {
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(conv_output_shape(shape(1, 4, 4), &p, 1).is_err());
        let p = ConvParams {
            kernel: 3,
            stride: 0,
            padding: 1,
        };
        assert!(conv_output_shape(shape(1, 4, 4), &p, 1).is_err());
    }

    #[test]
    fn builtins_validate() {
        for b in Builtin::ALL {
            let r = validate_builtin(b);
            assert!(r.passed(), "{}:\n{r}", b.name());
        }
    }

    #[test]
    fn builtin_chains_end_where_expected() {
        let dsem = &Builtin::Dsem.tables()[0];
        let layers: Vec<_> = dsem.rows.iter().map(|r| r.layer).collect();
        assert_eq!(
            *chain_shapes(dsem.input, &layers).unwrap().last().unwrap(),
            shape(2, 16, 16)
        );
        let dimg = &Builtin::Dimg.tables()[0];
        let layers: Vec<_> = dimg.rows.iter().map(|r| r.layer).collect();
        assert_eq!(
            *chain_shapes(dimg.input, &layers).unwrap().last().unwrap(),
            shape(2, 8, 8)
        );
        let flat = chain_shapes(
            shape(256, 14, 14),
            &[LayerSpec::pool(2, 2), LayerSpec::Flatten],
        )
        .unwrap();
        assert_eq!(flat[1].numel(), 1024);
    }

    #[test]
    fn mutated_stride_is_caught() {
        let mut t = Builtin::Dsem.tables().remove(0);
        let c2 = t.rows.iter_mut().find(|r| r.name == "C2").unwrap();
        c2.layer = LayerSpec::conv(5, 1, 2, 128);
        let report = validate_table(&t);
        let failed: Vec<_> = report.failures().map(|r| r.row.as_str()).collect();
        assert_eq!(failed, vec!["C2"]);
        let bad = report.rows.iter().find(|r| r.row == "C2").unwrap();
        assert_eq!(bad.computed, Ok(shape(128, 128, 128)));
    }

    #[test]
    fn residual_pair_must_preserve_shape() {
        let err = chain_shapes(
            shape(4, 8, 8),
            &[LayerSpec::conv(1, 1, 0, 4), LayerSpec::residual(3, 2, 1, 4)],
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("layer 1:"), "{err}");
        assert!(chain_shapes(shape(4, 8, 8), &[LayerSpec::residual(3, 1, 1, 8)]).is_err());
    }

    #[test]
    fn chain_csv() {
        let text = "kind,k,s,p,out_channels,target\nconv,3,1,1,16,\nresidual_pair,3,1,1,16,\nadaptive_avg_pool,,,,,2x2\nflatten,,,,,\n";
        let layers = parse_chain_csv(text.as_bytes(), "c.csv").unwrap();
        assert_eq!(layers.len(), 4);
        let shapes = chain_shapes(shape(3, 10, 10), &layers).unwrap();
        assert_eq!(shapes.last().unwrap(), &shape(64, 1, 1));
        assert!(matches!(
            parse_chain_csv("conv,3,x,1,16,\n".as_bytes(), "c.csv"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_chain_csv("deconv,3,1,1,16,\n".as_bytes(), "c.csv").is_err());
    }

    #[test]
    fn shape_parsing() {
        assert_eq!(
            "2x256x256".parse::<TensorShape>().unwrap(),
            shape(2, 256, 256)
        );
        assert!("2x256".parse::<TensorShape>().is_err());
        assert!("0x1x1".parse::<TensorShape>().is_err());
    }
}
