//! `--grid` parsing and cartesian expansion of model-validation cells.

use std::fmt;
use std::str::FromStr;

use nc_toolkit::codec::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKey {
    K,
    Q,
    PZero,
    Per,
}

impl GridKey {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "k" => Ok(GridKey::K),
            "q" => Ok(GridKey::Q),
            "p_zero" | "p" => Ok(GridKey::PZero),
            "per" => Ok(GridKey::Per),
            other => Err(format!("unknown grid key `{other}` (expected k, q, p_zero or per)")),
        }
    }
}

/// A number, or `1/q` resolved per field size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    InvQ,
}

impl Value {
    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "1/q" {
            return Ok(Value::InvQ);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Num)
            .ok_or_else(|| format!("not a number: `{s}`"))
    }

    fn resolve(self, q: u32) -> f64 {
        match self {
            Value::Num(v) => v,
            Value::InvQ => 1.0 / q as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub key: GridKey,
    start: Value,
    stop: Option<Value>,
    step: f64,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, range) = s
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=START:STOP:STEP, got `{s}`"))?;
        let key = GridKey::parse(key.trim())?;
        let parts: Vec<&str> = range.split(':').collect();
        let spec = match parts.as_slice() {
            [v] => GridSpec {
                key,
                start: Value::parse(v)?,
                stop: None,
                step: 1.0,
            },
            [a, b, c] => {
                let step = match Value::parse(c)? {
                    Value::Num(v) if v > 0.0 => v,
                    _ => return Err(format!("step must be a positive number in `{s}`")),
                };
                GridSpec {
                    key,
                    start: Value::parse(a)?,
                    stop: Some(Value::parse(b)?),
                    step,
                }
            }
            _ => return Err(format!("expected KEY=START:STOP:STEP or KEY=VALUE, got `{s}`")),
        };
        if key != GridKey::PZero && (spec.start == Value::InvQ || spec.stop == Some(Value::InvQ)) {
            return Err("`1/q` is only meaningful for p_zero".into());
        }
        Ok(spec)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = match self.key {
            GridKey::K => "k",
            GridKey::Q => "q",
            GridKey::PZero => "p_zero",
            GridKey::Per => "per",
        };
        let v = |v: Value| match v {
            Value::Num(x) => x.to_string(),
            Value::InvQ => "1/q".to_string(),
        };
        match self.stop {
            None => write!(f, "{key}={}", v(self.start)),
            Some(stop) => write!(f, "{key}={}:{}:{}", v(self.start), v(stop), self.step),
        }
    }
}

impl GridSpec {
    /// Expanded values for field size `q`. Inclusive of `stop` up to a
    /// relative rounding slack.
    pub fn values(&self, q: u32) -> Vec<f64> {
        let start = self.start.resolve(q);
        let Some(stop) = self.stop.map(|v| v.resolve(q)) else {
            return vec![start];
        };
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let v = start + self.step * i as f64;
            if v > stop + 1e-9 * self.step {
                break;
            }
            out.push(v);
            i += 1;
        }
        out
    }
}

/// One single-layer validation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCell {
    pub scheme: Scheme,
    pub k: usize,
    pub q: u32,
    pub p_zero: f64,
    pub per: f64,
}

/// `n` evenly spaced values from `1/q` to `0.97` inclusive.
pub fn default_sparsity_points(q: u32, n: usize) -> Vec<f64> {
    let lo = 1.0 / q as f64;
    (0..n).map(|i| lo + (0.97 - lo) * i as f64 / (n - 1) as f64).collect()
}

pub const DEFAULT_K: [usize; 4] = [10, 30, 50, 70];
pub const DEFAULT_SPARSITY_POINTS: usize = 8;

/// Expands grid specs into cells. Axes not given fall back to the defaults
/// passed in; `default_p_zero(q)` supplies the sparsity axis per field.
pub fn expand(
    specs: &[GridSpec],
    scheme: Scheme,
    default_q: &[u32],
    default_k: &[usize],
    default_p_zero: &dyn Fn(u32) -> Vec<f64>,
    default_per: &[f64],
) -> Result<Vec<ModelCell>, String> {
    let find = |key| specs.iter().filter(move |s| s.key == key);
    for key in [GridKey::K, GridKey::Q, GridKey::PZero, GridKey::Per] {
        if find(key).count() > 1 {
            return Err(format!("grid key {key:?} given more than once"));
        }
    }
    let axis = |key| find(key).next();

    let qs: Vec<u32> = match axis(GridKey::Q) {
        Some(spec) => spec
            .values(2)
            .into_iter()
            .map(|v| match v {
                2.0 => Ok(2),
                256.0 => Ok(256),
                _ => Err(format!("q must be 2 or 256, got {v}")),
            })
            .collect::<Result<_, _>>()?,
        None => default_q.to_vec(),
    };
    let ks: Vec<usize> = match axis(GridKey::K) {
        Some(spec) => spec
            .values(2)
            .into_iter()
            .map(|v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(format!("k must be a positive integer, got {v}"))
                }
            })
            .collect::<Result<_, _>>()?,
        None => default_k.to_vec(),
    };
    let pers: Vec<f64> = match axis(GridKey::Per) {
        Some(spec) => spec.values(2),
        None => default_per.to_vec(),
    };
    if let Some(p) = pers.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(format!("per must be in [0, 1), got {p}"));
    }

    let mut cells = Vec::new();
    for &q in &qs {
        let lo = 1.0 / q as f64;
        let mut ps = match axis(GridKey::PZero) {
            Some(spec) => spec.values(q),
            None => default_p_zero(q),
        };
        if let Some(p) = ps.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(format!("p_zero must be in [0, 1), got {p}"));
        }
        // below 1/q the approximation is not meaningful; dense schemes only
        // have the one point
        ps.retain(|&p| p >= lo - 1e-12);
        if !scheme.is_sparse() {
            ps = vec![lo];
        }
        for &k in &ks {
            for &p_zero in &ps {
                for &per in &pers {
                    cells.push(ModelCell {
                        scheme,
                        k,
                        q,
                        p_zero,
                        per,
                    });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(cells)
}

/// Upper bound on the number of cells, computed before expansion.
pub fn cell_count(
    specs: &[GridSpec],
    default_q: usize,
    default_k: usize,
    default_p: usize,
    default_per: usize,
) -> usize {
    let len = |key, default: usize| {
        specs
            .iter()
            .find(|s| s.key == key)
            .map(|s| s.values(2).len().max(s.values(256).len()))
            .unwrap_or(default)
    };
    len(GridKey::Q, default_q)
        .saturating_mul(len(GridKey::K, default_k))
        .saturating_mul(len(GridKey::PZero, default_p))
        .saturating_mul(len(GridKey::Per, default_per))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> GridSpec {
        s.parse().unwrap()
    }

    #[test]
    fn parses_ranges_and_single_values() {
        assert_eq!(spec("k=10:70:20").values(2), vec![10.0, 30.0, 50.0, 70.0]);
        assert_eq!(spec("per=0.1").values(2), vec![0.1]);
        let p = spec("p_zero=1/q:0.9:0.1");
        assert_eq!(p.values(2).len(), 5);
        assert_eq!(p.values(2)[0], 0.5);
        assert!((p.values(256)[0] - 1.0 / 256.0).abs() < 1e-15);
        assert_eq!(spec("p_zero=0.1:0.9:0.1").values(2).len(), 9);
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in [
            "k",
            "k=1:2",
            "k=1:5:0",
            "k=1:5:-1",
            "x=1",
            "k=a",
            "per=1/q",
            "k=1:2:3:4",
        ] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_range_is_a_usage_error() {
        let specs = vec![spec("k=10:5:1")];
        let r = expand(
            &specs,
            Scheme::SparseRlnc,
            &[2],
            &[10],
            &|q| vec![1.0 / q as f64],
            &[0.0],
        );
        assert!(r.is_err());
    }

    #[test]
    fn ten_points_times_two_fields() {
        let specs = vec![spec("p_zero=0.5:0.95:0.05"), spec("k=20")];
        let cells = expand(&specs, Scheme::SparseRlnc, &[2, 256], &[], &|_| vec![], &[0.0]).unwrap();
        assert_eq!(cells.len(), 20);
        assert_eq!(cell_count(&specs, 2, 1, 1, 1), 20);
    }

    #[test]
    fn default_points_span_the_interval() {
        let p = default_sparsity_points(2, 8);
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], 0.5);
        assert!((p[7] - 0.97).abs() < 1e-15);
    }

    #[test]
    fn display_round_trips() {
        for s in ["k=10:70:20", "p_zero=1/q:0.97:0.1", "per=0.1"] {
            assert_eq!(spec(s).to_string(), s);
        }
    }
}
