//! Verifier reports and their structured-text record format.
//!
//! A record is a block of `key = value` lines opened by `[report]`:
//!
//! ```text
//! [report]
//! check = aronson_benilan
//! verdict = pass
//! constant.sigma1 = 3.3333333333333331e-1
//! tolerance.slack = 3.9062500000000000e-2
//! witness.x = ...
//! note = ...
//! ```

use std::fmt::Write as _;

use crate::grid::Point;

/// Decimal text with 17 significant digits; parses back to the same `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pass" => Some(Verdict::Pass),
            "fail" => Some(Verdict::Fail),
            "inconclusive" => Some(Verdict::Inconclusive),
            _ => None,
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Where the worst case of a check was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub x: Point,
    pub t: f64,
    pub value: f64,
}

/// Outcome of one verifier: fitted constants, tolerances, worst witness.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub check: String,
    pub verdict: Verdict,
    pub constants: Vec<(String, f64)>,
    pub tolerances: Vec<(String, f64)>,
    pub witness: Option<Witness>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(check: &str, verdict: Verdict) -> Self {
        EstimateReport {
            check: check.to_string(),
            verdict,
            constants: Vec::new(),
            tolerances: Vec::new(),
            witness: None,
            notes: Vec::new(),
        }
    }

    pub fn inconclusive(check: &str, why: impl Into<String>) -> Self {
        let mut r = Self::new(check, Verdict::Inconclusive);
        r.notes.push(why.into());
        r
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.push((name.to_string(), value));
        self
    }

    pub fn with_tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.push((name.to_string(), value));
        self
    }

    pub fn with_witness(mut self, witness: Option<Witness>) -> Self {
        self.witness = witness;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn tolerance(&self, name: &str) -> Option<f64> {
        self.tolerances.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn to_record(&self) -> String {
        let mut s = String::from("[report]\n");
        let _ = writeln!(s, "check = {}", self.check);
        let _ = writeln!(s, "verdict = {}", self.verdict.as_str());
        for (k, v) in &self.constants {
            let _ = writeln!(s, "constant.{k} = {}", fmt17(*v));
        }
        for (k, v) in &self.tolerances {
            let _ = writeln!(s, "tolerance.{k} = {}", fmt17(*v));
        }
        if let Some(w) = &self.witness {
            let _ = writeln!(s, "witness.x = {}", fmt17(w.x[0]));
            let _ = writeln!(s, "witness.y = {}", fmt17(w.x[1]));
            let _ = writeln!(s, "witness.t = {}", fmt17(w.t));
            let _ = writeln!(s, "witness.value = {}", fmt17(w.value));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {}", n.replace('\n', " "));
        }
        s
    }

    /// Parses every `[report]` block in `text`. Unknown keys are ignored.
    pub fn parse_records(text: &str) -> Result<Vec<EstimateReport>, String> {
        let mut out: Vec<EstimateReport> = Vec::new();
        let mut wx = [f64::NAN; 4];
        let flush = |r: &mut EstimateReport, wx: &mut [f64; 4]| {
            if wx.iter().all(|v| v.is_finite()) {
                r.witness = Some(Witness { x: [wx[0], wx[1]], t: wx[2], value: wx[3] });
            }
            *wx = [f64::NAN; 4];
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[report]" {
                if let Some(last) = out.last_mut() {
                    flush(last, &mut wx);
                }
                out.push(EstimateReport::new("", Verdict::Inconclusive));
                continue;
            }
            let Some(cur) = out.last_mut() else {
                return Err(format!("line {}: content before the first [report]", lineno + 1));
            };
            let (k, v) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let num = || v.parse::<f64>().map_err(|_| format!("line {}: bad number '{v}'", lineno + 1));
            match k {
                "check" => cur.check = v.to_string(),
                "verdict" => {
                    cur.verdict =
                        Verdict::parse(v).ok_or_else(|| format!("line {}: bad verdict '{v}'", lineno + 1))?
                }
                "note" => cur.notes.push(v.to_string()),
                "witness.x" => wx[0] = num()?,
                "witness.y" => wx[1] = num()?,
                "witness.t" => wx[2] = num()?,
                "witness.value" => wx[3] = num()?,
                _ => {
                    if let Some(name) = k.strip_prefix("constant.") {
                        cur.constants.push((name.to_string(), num()?));
                    } else if let Some(name) = k.strip_prefix("tolerance.") {
                        cur.tolerances.push((name.to_string(), num()?));
                    }
                }
            }
        }
        if let Some(last) = out.last_mut() {
            flush(last, &mut wx);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn record_round_trips() {
        let r = EstimateReport::new("cone_monotonicity", Verdict::Fail)
            .with_constant("violation", 0.125)
            .with_tolerance("slack", 1.0 / 3.0)
            .with_witness(Some(Witness { x: [0.5, -0.25], t: 1.5, value: 0.125 }))
            .with_note("negative control");
        let text = format!("{}{}", r.to_record(), r.to_record());
        let back = EstimateReport::parse_records(&text).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
    }
}
