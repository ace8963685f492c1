//! Text forms of test functions and weights used in config files.
//!
//! Test functions: `constant:c`, `shortest_vector_bump:center,width`,
//! `systole_bump:center,width`, `smoothed_count:inner,outer,mollifier`.
//!
//! Weights: `smooth_bump:a,b`, `triangle:a,b`, and
//! `trig:start|k:c:s|k:c:s...` for `Σ c cos 2πkt + s sin 2πkt` on
//! `[start, start + 1)`.

use horocycle_core::ensembles::WeightFunction;
use horocycle_core::TestFunction;

use crate::error::LabError;

fn numbers(kind: &str, body: &str, want: usize) -> Result<Vec<f64>, LabError> {
    let vals: Result<Vec<f64>, _> = body.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == want && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(LabError::Config(format!("`{kind}` needs {want} finite numbers, got `{body}`"))),
    }
}

fn split(s: &str) -> (&str, &str) {
    let s = s.trim();
    s.split_once(':').unwrap_or((s, ""))
}

pub fn parse_test_function(s: &str) -> Result<TestFunction, LabError> {
    let (kind, body) = split(s);
    let f = match kind {
        "constant" => TestFunction::Constant(numbers(kind, body, 1)?[0]),
        "shortest_vector_bump" => {
            let v = numbers(kind, body, 2)?;
            TestFunction::shortest_vector_bump(v[0], v[1])?
        }
        "systole_bump" => {
            let v = numbers(kind, body, 2)?;
            TestFunction::systole_bump(v[0], v[1])?
        }
        "smoothed_count" => {
            let v = numbers(kind, body, 3)?;
            TestFunction::smoothed_count(v[0], v[1], v[2])?
        }
        _ => return Err(LabError::Config(format!("unknown test function `{s}`"))),
    };
    Ok(f)
}

pub fn parse_weight(s: &str) -> Result<WeightFunction, LabError> {
    let (kind, body) = split(s);
    let w = match kind {
        "smooth_bump" => {
            let v = numbers(kind, body, 2)?;
            WeightFunction::smooth_bump(v[0], v[1])?
        }
        "triangle" => {
            let v = numbers(kind, body, 2)?;
            WeightFunction::triangle(v[0], v[1])?
        }
        "trig" => {
            let mut parts = body.split('|');
            let start = numbers(kind, parts.next().unwrap_or(""), 1)?[0];
            let mut terms = Vec::new();
            for p in parts {
                let f: Vec<&str> = p.split(':').map(str::trim).collect();
                let term = match f.as_slice() {
                    [k, c, s] => k.parse::<u32>().ok().zip(c.parse::<f64>().ok()).zip(s.parse::<f64>().ok()),
                    _ => None,
                };
                let ((k, c), s) = term.ok_or_else(|| LabError::Config(format!("bad trig term `{p}`")))?;
                terms.push((k, c, s));
            }
            WeightFunction::trig(start, terms)?
        }
        _ => return Err(LabError::Config(format!("unknown weight `{s}`"))),
    };
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_kind() {
        assert_eq!(parse_test_function("constant:1").unwrap(), TestFunction::Constant(1.0));
        assert_eq!(
            parse_test_function("shortest_vector_bump:0.3, 0.25").unwrap(),
            TestFunction::ShortestVectorBump { center: 0.3, width: 0.25 }
        );
        assert!(parse_test_function("smoothed_count:0,0.8,0").is_ok());
        assert!(parse_test_function("systole_bump:1,0").is_err());
        assert_eq!(parse_weight("smooth_bump:0,2").unwrap(), WeightFunction::SmoothBump { a: 0.0, b: 2.0 });
        assert_eq!(
            parse_weight("trig:0|0:1:0|3:0.5:-0.25").unwrap(),
            WeightFunction::Trig { start: 0.0, terms: vec![(0, 1.0, 0.0), (3, 0.5, -0.25)] }
        );
        assert!(parse_weight("trig:0|1:2").is_err());
        assert!(parse_weight("triangle:2,1").is_err());
        assert!(parse_weight("box:0,1").is_err());
    }
}
