//! JSON and CSV text with every float at 17 significant digits.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// `x` with 17 significant digits; non-finite values become `null` in JSON
/// and `nan`/`inf`/`-inf` in CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if n.is_f64() {
        let x = n.as_f64().unwrap_or(f64::NAN);
        if x.is_finite() {
            out.push_str(&fmt_f64(x));
        } else {
            out.push_str("null");
        }
    } else {
        out.push_str(&n.to_string());
    }
}

fn write_value(v: &Value, indent: Option<usize>, out: &mut String) {
    let newline = |out: &mut String, level: usize| {
        if indent.is_some() {
            out.push('\n');
            out.push_str(&"  ".repeat(level));
        }
    };
    let level = indent.unwrap_or(0);
    let inner = indent.map(|l| l + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, level + 1);
                write_value(item, inner, out);
            }
            newline(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, level + 1);
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(item, inner, out);
            }
            newline(out, level);
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and 17-digit floats, newline-terminated.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, Some(0), &mut out);
    out.push('\n');
    Ok(out)
}

/// Single-line JSON with sorted keys and 17-digit floats.
pub fn to_json_compact(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, None, &mut out);
    Ok(out)
}

/// CSV text from a header and rows of already formatted cells.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::RunError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::error::RunError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_carry_seventeen_digits_and_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = fmt_f64(x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_is_valid_sorted_and_keeps_integers() {
        #[derive(Serialize)]
        struct R {
            zeta: f64,
            alpha: u64,
            inner: Vec<f64>,
            gone: f64,
        }
        let s = to_json(&R {
            zeta: 0.1,
            alpha: u64::MAX,
            inner: vec![1.5],
            gone: f64::INFINITY,
        })
        .unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["alpha"].as_u64(), Some(u64::MAX));
        assert_eq!(v["zeta"].as_f64(), Some(0.1));
        assert!(v["gone"].is_null());
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("1.0000000000000001e-1"));
    }
}
