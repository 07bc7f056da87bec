//! Splitting methods: coefficients, validation, JSON files and built-ins.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance of the consistency sums `sum(a) = sum(b) = 1`.
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// Coefficients of `exp(tau b_n B) exp(tau a_n A) ... exp(tau b_1 B) exp(tau a_1 A)`.
///
/// `a[i]` multiplies the `q`-update `q += a_i tau H p` and `b[i]` the
/// `p`-update `p -= b_i tau H q`; stage `i` applies `a[i]` first.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingMethod {
    pub name: String,
    /// Stage count (cost per step in `H`-applications on a complex vector).
    pub m: usize,
    /// Nominal order.
    pub r: usize,
    /// Scaled time step `tau*rho(H)/m` the method was designed for.
    pub theta_prime: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SplittingMethod {
    /// Builds a method after structural validation.
    pub fn new(
        name: impl Into<String>,
        m: usize,
        r: usize,
        theta_prime: f64,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        let method = SplittingMethod { name: name.into(), m, r, theta_prime, a, b };
        method.check_structure()?;
        Ok(method)
    }

    fn check_structure(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput("stage count m must be at least 1".into()));
        }
        if self.a.len() != self.b.len() {
            return Err(Error::InvalidInput(format!(
                "length mismatch: a has {} entries, b has {}",
                self.a.len(),
                self.b.len()
            )));
        }
        if self.a.len() != self.m && self.a.len() != self.m + 1 {
            return Err(Error::InvalidInput(format!(
                "expected m = {} or m + 1 = {} coefficient pairs, got {}",
                self.m,
                self.m + 1,
                self.a.len()
            )));
        }
        if let Some(c) = self.a.iter().chain(&self.b).find(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {c}")));
        }
        if !self.theta_prime.is_finite() || self.theta_prime <= 0.0 {
            return Err(Error::InvalidInput(format!("theta_prime must be positive, got {}", self.theta_prime)));
        }
        Ok(())
    }

    /// Warnings for violated consistency sums; not fatal.
    pub fn consistency_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sa: f64 = self.a.iter().sum();
        let sb: f64 = self.b.iter().sum();
        if (sa - 1.0).abs() > CONSISTENCY_TOL {
            out.push(format!("consistency: sum(a) = {sa}"));
        }
        if (sb - 1.0).abs() > CONSISTENCY_TOL {
            out.push(format!("consistency: sum(b) = {sb}"));
        }
        out
    }

    /// Last `b` vanishes, so the final stage fuses with the next step's first.
    pub fn is_fsal(&self) -> bool {
        self.b.last() == Some(&0.0)
    }

    /// Number of coefficient pairs.
    pub fn pairs(&self) -> usize {
        self.a.len()
    }

    /// Effective stages per step once consecutive steps are fused.
    pub fn stage_cost(&self) -> usize {
        self.pairs() - usize::from(self.is_fsal())
    }

    /// `sum |a_i| + |b_i|`.
    pub fn coefficient_sum(&self) -> f64 {
        self.a.iter().chain(&self.b).map(|c| c.abs()).sum()
    }

    pub fn to_json_string(&self) -> String {
        let file = MethodFile {
            name: self.name.clone(),
            m: self.m,
            r: self.r,
            theta_prime: Number::Text(fmt_num(self.theta_prime)),
            a: self.a.iter().map(|&x| Number::Text(fmt_num(x))).collect(),
            b: self.b.iter().map(|&x| Number::Text(fmt_num(x))).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("method serializes");
        s.push('\n');
        s
    }

    /// Parses a method file; returns the method and any consistency warnings.
    pub fn from_json_str(text: &str) -> Result<(Self, Vec<String>)> {
        let file: MethodFile = serde_json::from_str(text)?;
        let parse_all = |v: &[Number], field: &str| -> Result<Vec<f64>> {
            v.iter()
                .enumerate()
                .map(|(i, n)| n.value().map_err(|e| Error::Parse(format!("{field}[{i}]: {e}"))))
                .collect()
        };
        let method = SplittingMethod::new(
            file.name,
            file.m,
            file.r,
            file.theta_prime.value().map_err(|e| Error::Parse(format!("theta_prime: {e}")))?,
            parse_all(&file.a, "a")?,
            parse_all(&file.b, "b")?,
        )?;
        let warnings = method.consistency_warnings();
        Ok((method, warnings))
    }
}

/// Decimal text with 17 significant digits.
fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize, Deserialize)]
struct MethodFile {
    name: String,
    m: usize,
    r: usize,
    theta_prime: Number,
    a: Vec<Number>,
    b: Vec<Number>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Text(String),
    Value(f64),
}

impl Number {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Number::Value(v) => Ok(*v),
            Number::Text(s) => s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")),
        }
    }
}

/// Reads and validates a method file.
pub fn load_method(path: impl AsRef<Path>) -> Result<(SplittingMethod, Vec<String>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    SplittingMethod::from_json_str(&text)
}

/// Writes `method` in canonical form.
pub fn save_method(method: &SplittingMethod, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, method.to_json_string()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `leapfrog`, `strang` or `leapfrog_concat(m)`.
pub fn builtin(name: &str) -> Result<SplittingMethod> {
    let name = name.trim();
    match name {
        "leapfrog" => SplittingMethod::new("leapfrog", 1, 1, 1.0, vec![0.0, 1.0], vec![1.0, 0.0]),
        "strang" => SplittingMethod::new("strang", 1, 2, 1.0, vec![0.5, 0.5], vec![1.0, 0.0]),
        _ => {
            let m = name
                .strip_prefix("leapfrog_concat(")
                .and_then(|rest| rest.strip_suffix(')'))
                .and_then(|n| n.trim().parse::<usize>().ok())
                .filter(|&m| m >= 1)
                .ok_or_else(|| Error::UnknownMethod(name.to_string()))?;
            leapfrog_concat(m)
        }
    }
}

/// `m` leapfrog substeps of length `tau/m` fused into one method.
pub fn leapfrog_concat(m: usize) -> Result<SplittingMethod> {
    let h = 1.0 / m as f64;
    let mut a = vec![h; m + 1];
    a[0] = 0.0;
    let mut b = vec![h; m + 1];
    b[m] = 0.0;
    SplittingMethod::new(format!("leapfrog_concat({m})"), m, 1, 1.0, a, b)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["leapfrog", "strang", "leapfrog_concat(m)"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_coefficients() {
        let lf = builtin("leapfrog").unwrap();
        assert_eq!((lf.a.as_slice(), lf.b.as_slice()), (&[0.0, 1.0][..], &[1.0, 0.0][..]));
        assert!(lf.is_fsal());
        assert_eq!(lf.stage_cost(), 1);
        let c3 = builtin("leapfrog_concat(3)").unwrap();
        assert_eq!(c3.m, 3);
        assert_eq!(c3.pairs(), 4);
        assert_eq!(c3.stage_cost(), 3);
        assert!(matches!(builtin("rk4"), Err(Error::UnknownMethod(_))));
        assert!(matches!(builtin("leapfrog_concat(0)"), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn concat_one_is_leapfrog() {
        let c1 = leapfrog_concat(1).unwrap();
        let lf = builtin("leapfrog").unwrap();
        assert_eq!((c1.a, c1.b), (lf.a, lf.b));
    }

    #[test]
    fn load_examples() {
        let (lf, w) =
            SplittingMethod::from_json_str(r#"{"name":"lf","m":1,"r":1,"theta_prime":1,"a":[1],"b":[1]}"#).unwrap();
        assert!(!lf.is_fsal());
        assert!(w.is_empty());
        let (st, w) = SplittingMethod::from_json_str(
            r#"{"name":"st","m":2,"r":2,"theta_prime":"1","a":["0.5","0.5"],"b":[1,0]}"#,
        )
        .unwrap();
        assert!(st.is_fsal());
        assert!(w.is_empty());
        let (_, w) =
            SplittingMethod::from_json_str(r#"{"name":"x","m":1,"r":0,"theta_prime":1,"a":[1],"b":[0.5]}"#).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("sum(b) = 0.5"));
    }

    #[test]
    fn load_rejects_bad_lengths() {
        let r = SplittingMethod::from_json_str(r#"{"name":"x","m":1,"r":0,"theta_prime":1,"a":[1,0],"b":[1]}"#);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        let r = SplittingMethod::from_json_str(r#"{"name":"x","m":1,"r":0,"theta_prime":1,"a":[1,0,0],"b":[1,0,0]}"#);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        assert!(matches!(SplittingMethod::from_json_str("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let m = SplittingMethod::new("t", 2, 2, 0.7, vec![0.1, 1.0 / 3.0, 0.5666666666666667], vec![-0.25, 1.25, 0.0])
            .unwrap();
        let text = m.to_json_string();
        let (back, _) = SplittingMethod::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json_string(), text);
    }
}
