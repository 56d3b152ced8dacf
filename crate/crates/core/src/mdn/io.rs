//! Model file format.
//!
//! ```text
//! mdn-v1
//! m=<inputs>
//! n=<components>
//! trunk=<comma-separated hidden sizes>
//! heads=<comma-separated hidden sizes, shared by all three heads>
//! activation=<relu|tanh|identity>          (optional, default relu)
//! layer <rows> <cols> <rows*cols weights, row-major> <rows biases>
//! ...
//! ```
//!
//! Layers appear as trunk, weight head, means head, precision head. Reals
//! are written with 17 significant digits so loading is bit-exact.

use std::fmt::Write as _;

use super::{Activation, Dense, Head, MdnParams};
use crate::error::{Error, Result};
use crate::gmm::{fmt_real, line_offsets};

const MAGIC: &str = "mdn-v1";

fn sizes(list: &[usize]) -> String {
    list.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn hidden_sizes(layers: &[Dense]) -> Vec<usize> {
    layers.iter().map(|l| l.rows).collect()
}

pub fn save_params(p: &MdnParams) -> Result<Vec<u8>> {
    p.validate()?;
    let head_hidden = hidden_sizes(&p.head(Head::Weights)[..p.head(Head::Weights).len() - 1]);
    for h in Head::ALL {
        let layers = p.head(h);
        if hidden_sizes(&layers[..layers.len() - 1]) != head_hidden {
            return Err(Error::Shape("the model file requires all heads to share hidden sizes".into()));
        }
    }
    let activation = p.trunk.first().or(p.head(Head::Weights).first()).map_or(Activation::Relu, |l| l.activation);

    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "m={}", p.inputs);
    let _ = writeln!(out, "n={}", p.components);
    let _ = writeln!(out, "trunk={}", sizes(&hidden_sizes(&p.trunk)));
    let _ = writeln!(out, "heads={}", sizes(&head_hidden));
    let _ = writeln!(out, "activation={}", activation.name());
    for l in p.trunk.iter().chain(p.heads.iter().flatten()) {
        let _ = write!(out, "layer {} {}", l.rows, l.cols);
        for v in l.weights.iter().chain(&l.bias) {
            out.push(' ');
            out.push_str(&fmt_real(*v));
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

fn header_value<'a>(line: Option<(usize, &'a str)>, key: &str, eof: usize) -> Result<(usize, &'a str)> {
    let (off, l) = line.ok_or_else(|| parse_err(eof, format!("missing `{key}=` line")))?;
    let v = l
        .trim()
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(off, format!("expected `{key}=...`")))?;
    Ok((off, v.trim()))
}

fn parse_sizes(off: usize, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| s.trim().parse::<usize>().map_err(|e| parse_err(off, format!("bad size `{s}`: {e}")))).collect()
}

pub fn load_params(bytes: &[u8]) -> Result<MdnParams> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(e.valid_up_to(), "model file is not UTF-8"))?;
    let eof = text.len();
    let mut lines = line_offsets(text).filter(|(_, l)| !l.trim().is_empty()).peekable();

    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        Some((off, _)) => return Err(parse_err(off, format!("expected `{MAGIC}` header"))),
        None => return Err(parse_err(0, "empty model file")),
    }
    let (off, v) = header_value(lines.next(), "m", eof)?;
    let inputs: usize = v.parse().map_err(|e| parse_err(off, format!("bad input count: {e}")))?;
    let (off, v) = header_value(lines.next(), "n", eof)?;
    let components: usize = v.parse().map_err(|e| parse_err(off, format!("bad component count: {e}")))?;
    let (off, v) = header_value(lines.next(), "trunk", eof)?;
    let trunk_sizes = parse_sizes(off, v)?;
    let (off, v) = header_value(lines.next(), "heads", eof)?;
    let head_sizes = parse_sizes(off, v)?;
    let mut activation = Activation::Relu;
    if let Some((off, l)) = lines.peek().copied() {
        if let Some(v) = l.trim().strip_prefix("activation=") {
            activation = Activation::parse(v.trim()).ok_or_else(|| parse_err(off, format!("unknown activation `{v}`")))?;
            lines.next();
        }
    }

    // Expected (rows, cols, activation) for every layer in file order.
    let mut expected = Vec::new();
    let mut width = inputs;
    for &s in &trunk_sizes {
        expected.push((s, width, activation));
        width = s;
    }
    let trunk_out = width;
    for h in Head::ALL {
        let mut width = trunk_out;
        for &s in &head_sizes {
            expected.push((s, width, activation));
            width = s;
        }
        expected.push((h.outputs_per_component() * components, width, Activation::Identity));
    }

    let mut layers = Vec::with_capacity(expected.len());
    for (i, &(rows, cols, act)) in expected.iter().enumerate() {
        let (off, line) = lines.next().ok_or_else(|| parse_err(eof, format!("file ends before layer {i}")))?;
        let mut fields = line.split_whitespace();
        if fields.next() != Some("layer") {
            return Err(parse_err(off, format!("expected `layer` record {i}")));
        }
        let mut dim = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| parse_err(off, format!("layer {i}: missing {name}")))?
                .parse()
                .map_err(|e| parse_err(off, format!("layer {i}: bad {name}: {e}")))
        };
        let (r, c) = (dim("rows")?, dim("cols")?);
        if (r, c) != (rows, cols) {
            return Err(Error::Shape(format!("layer {i} declared {r}x{c}, header implies {rows}x{cols}")));
        }
        let values: Vec<f64> = fields
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(off, format!("layer {i}: bad number `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if values.len() != rows * cols + rows {
            return Err(Error::Shape(format!(
                "layer {i} holds {} values, expected {} for {rows}x{cols}",
                values.len(),
                rows * cols + rows
            )));
        }
        let (w, b) = values.split_at(rows * cols);
        layers.push(Dense { rows, cols, weights: w.to_vec(), bias: b.to_vec(), activation: act });
    }
    if let Some((off, _)) = lines.next() {
        return Err(parse_err(off, "unexpected content after the last layer"));
    }

    let mut it = layers.into_iter();
    let trunk: Vec<Dense> = it.by_ref().take(trunk_sizes.len()).collect();
    let per_head = head_sizes.len() + 1;
    let heads = [0, 1, 2].map(|_| it.by_ref().take(per_head).collect::<Vec<_>>());
    let p = MdnParams { inputs, components, trunk, heads };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::Architecture;
    use crate::gmm::Point3;

    fn model() -> MdnParams {
        let arch = Architecture { inputs: 4, components: 3, trunk: vec![6, 5], head: vec![4], activation: Activation::Relu };
        MdnParams::init(&arch, Some(Point3::new(0.0, 0.01, 0.1)), 77).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = model();
        let bytes = save_params(&p).unwrap();
        let q = load_params(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(save_params(&q).unwrap(), bytes);
    }

    #[test]
    fn default_architecture_round_trips() {
        let p = MdnParams::init(&Architecture::default(), None, 1).unwrap();
        assert_eq!(load_params(&save_params(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bytes = save_params(&model()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let cut = text.rfind("\nlayer").unwrap();
        let err = load_params(text[..cut + 1].as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { offset, .. } if offset == cut + 1), "{err}");
        assert!(matches!(load_params(&text.as_bytes()[..20]), Err(Error::Parse { .. })));
        assert!(matches!(load_params(b""), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn mismatched_shape_is_a_shape_error() {
        let text = String::from_utf8(save_params(&model()).unwrap()).unwrap();
        let bad = text.replacen("layer 6 4", "layer 6 3", 1);
        assert!(matches!(load_params(bad.as_bytes()), Err(Error::Shape(_))));
        let bad = text.replacen("n=3", "n=2", 1);
        assert!(matches!(load_params(bad.as_bytes()), Err(Error::Shape(_))));
        // Drop one value from the first layer.
        let mut lines: Vec<&str> = text.lines().collect();
        let first_layer = lines.iter().position(|l| l.starts_with("layer")).unwrap();
        let shortened = lines[first_layer].rsplit_once(' ').unwrap().0.to_string();
        lines[first_layer] = &shortened;
        let bad = lines.join("\n");
        assert!(matches!(load_params(bad.as_bytes()), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_number_reports_line_offset() {
        let text = String::from_utf8(save_params(&model()).unwrap()).unwrap();
        let pos = text.find("layer").unwrap();
        let bad = format!("{}layer 6 4 nope{}", &text[..pos], &text[pos + "layer 6 4".len()..]);
        assert!(matches!(load_params(bad.as_bytes()), Err(Error::Parse { offset, .. }) if offset == pos));
    }
}
