//! `start:end:count` yaw lists.

use anyhow::{bail, Context};

fn number(s: &str, what: &str) -> anyhow::Result<f64> {
    // typeset minus signs show up when specs are pasted from documents
    let v: f64 = s.trim().replace('\u{2212}', "-").parse().with_context(|| format!("bad {what} '{s}'"))?;
    if !v.is_finite() || v.abs() >= std::f64::consts::PI {
        bail!("{what} {v} must be a finite angle in (-pi, pi)");
    }
    Ok(v)
}

pub fn parse(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, count] = parts.as_slice() else {
        bail!("yaw spec '{spec}' is not start:end:count");
    };
    let count: usize = count.trim().parse().with_context(|| format!("bad view count '{count}'"))?;
    if count == 0 {
        bail!("yaw spec needs at least one view");
    }
    Ok(depthguide::pipeline::linspace(number(start, "start")?, number(end, "end")?, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        let v = parse("\u{2212}0.4:0.4:8").unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!((v[0], v[7]), (-0.4, 0.4));
        assert_eq!(parse("0:0:1").unwrap(), vec![0.0]);
        assert_eq!(parse("-0.2:0.2:3").unwrap().len(), 3);
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in ["", "0:1", "a:0:2", "0:1:0", "0:1:x", "0:4:2", "0:1:2:3"] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }
}
