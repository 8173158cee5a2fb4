use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str =
    "t,p,V,V_hat,omega_c,omega_g,delta,i_d,i_q,u_c_d,u_c_q,psi_hat_d,psi_hat_q,e_d,e_q";

/// Uniformly sampled simulation output. Controller-frame quantities use the
/// controller angle at the sample instant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    /// Active power (pu).
    pub p: Vec<f64>,
    /// Converter voltage magnitude (pu).
    pub v: Vec<f64>,
    /// Estimated voltage magnitude `omega_c |psi_hat|` (pu).
    pub v_hat: Vec<f64>,
    /// rad/s
    pub omega_c: Vec<f64>,
    /// rad/s
    pub omega_g: Vec<f64>,
    /// Load angle, wrapped to (-pi, pi].
    pub delta: Vec<f64>,
    pub i_d: Vec<f64>,
    pub i_q: Vec<f64>,
    pub u_c_d: Vec<f64>,
    pub u_c_q: Vec<f64>,
    pub psi_hat_d: Vec<f64>,
    pub psi_hat_q: Vec<f64>,
    pub e_d: Vec<f64>,
    pub e_q: Vec<f64>,
}

/// One output sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub p: f64,
    pub v: f64,
    pub v_hat: f64,
    pub omega_c: f64,
    pub omega_g: f64,
    pub delta: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub u_c_d: f64,
    pub u_c_q: f64,
    pub psi_hat_d: f64,
    pub psi_hat_q: f64,
    pub e_d: f64,
    pub e_q: f64,
}

impl Sample {
    fn to_row(self) -> [f64; 15] {
        [
            self.t,
            self.p,
            self.v,
            self.v_hat,
            self.omega_c,
            self.omega_g,
            self.delta,
            self.i_d,
            self.i_q,
            self.u_c_d,
            self.u_c_q,
            self.psi_hat_d,
            self.psi_hat_q,
            self.e_d,
            self.e_q,
        ]
    }
}

/// Number format for CSV output. Both round-trip exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatFormat {
    /// Shortest decimal that parses back to the same double.
    #[default]
    Decimal,
    /// C99 `%a` style, e.g. `0x1.8p+1`.
    Hex,
}

impl TimeSeries {
    pub fn with_capacity(n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            t: v(),
            p: v(),
            v: v(),
            v_hat: v(),
            omega_c: v(),
            omega_g: v(),
            delta: v(),
            i_d: v(),
            i_q: v(),
            u_c_d: v(),
            u_c_q: v(),
            psi_hat_d: v(),
            psi_hat_q: v(),
            e_d: v(),
            e_q: v(),
        }
    }

    pub fn push(&mut self, s: Sample) {
        for (c, v) in self.channels_mut().into_iter().zip(s.to_row()) {
            c.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Channels in CSV column order, time first.
    pub fn channels(&self) -> [&[f64]; 15] {
        [
            &self.t,
            &self.p,
            &self.v,
            &self.v_hat,
            &self.omega_c,
            &self.omega_g,
            &self.delta,
            &self.i_d,
            &self.i_q,
            &self.u_c_d,
            &self.u_c_q,
            &self.psi_hat_d,
            &self.psi_hat_q,
            &self.e_d,
            &self.e_q,
        ]
    }

    fn channels_mut(&mut self) -> [&mut Vec<f64>; 15] {
        [
            &mut self.t,
            &mut self.p,
            &mut self.v,
            &mut self.v_hat,
            &mut self.omega_c,
            &mut self.omega_g,
            &mut self.delta,
            &mut self.i_d,
            &mut self.i_q,
            &mut self.u_c_d,
            &mut self.u_c_q,
            &mut self.psi_hat_d,
            &mut self.psi_hat_q,
            &mut self.e_d,
            &mut self.e_q,
        ]
    }

    pub fn channel_names() -> impl Iterator<Item = &'static str> {
        CSV_HEADER.split(',')
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Indices with `t` in `[from, to)`.
    pub fn window(&self, from: f64, to: f64) -> std::ops::Range<usize> {
        let a = self.t.partition_point(|&t| t < from);
        let b = self.t.partition_point(|&t| t < to);
        a..b.max(a)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, format: FloatFormat) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        let cols = self.channels();
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            for (j, c) in cols.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                match format {
                    FloatFormat::Decimal => line.push_str(&format!("{:?}", c[k])),
                    FloatFormat::Hex => line.push_str(&hex_float(c[k])),
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self, format: FloatFormat) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, format).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Hexadecimal floating-point text, e.g. `-0x1.921fb54442d18p+1`.
pub fn hex_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mut mant = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let mut digits = 13;
    while digits > 0 && mant & 0xf == 0 {
        mant >>= 4;
        digits -= 1;
    }
    if digits == 0 {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{mant:0digits$x}p{exp:+}")
    }
}

/// Inverse of [`hex_float`].
pub fn parse_hex_float(s: &str) -> Option<f64> {
    match s {
        "nan" => return Some(f64::NAN),
        "inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x")?;
    let (mant, exp) = rest.split_once('p')?;
    let exp: i32 = exp.parse().ok()?;
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let lead = u64::from_str_radix(int, 16).ok()?;
    let frac_val = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).ok()?
    };
    let frac_bits = 4 * frac.len() as i32;
    let m = ((lead << frac_bits) | frac_val) as f64;
    // split the scaling so subnormals do not underflow in one go
    let e = exp - frac_bits;
    let v = m * 2f64.powi(e / 2) * 2f64.powi(e - e / 2);
    Some(if neg { -v } else { v })
}

/// Root-mean-square difference of two equally long slices.
pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        f64::NAN
    } else {
        a.iter().sum::<f64>() / a.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_float_examples() {
        assert_eq!(hex_float(1.0), "0x1p+0");
        assert_eq!(hex_float(3.0), "0x1.8p+1");
        assert_eq!(hex_float(-0.5), "-0x1p-1");
        assert_eq!(hex_float(0.0), "0x0p+0");
        assert_eq!(hex_float(std::f64::consts::PI), "0x1.921fb54442d18p+1");
    }

    #[test]
    fn header_has_fifteen_columns() {
        assert_eq!(TimeSeries::channel_names().count(), 15);
        let mut ts = TimeSeries::default();
        ts.push(Sample {
            t: 0.0,
            p: 0.1,
            v: 1.0,
            v_hat: 1.0,
            omega_c: 314.0,
            omega_g: 314.0,
            delta: 0.0,
            i_d: 0.0,
            i_q: 0.0,
            u_c_d: 1.0,
            u_c_q: 0.0,
            psi_hat_d: 0.0,
            psi_hat_q: -0.003,
            e_d: 0.0,
            e_q: 0.0,
        });
        let csv = ts.to_csv(FloatFormat::Decimal);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 15);
    }

    #[test]
    fn window_bounds() {
        let ts = TimeSeries {
            t: vec![0.0, 0.1, 0.2, 0.3],
            ..Default::default()
        };
        assert_eq!(ts.window(0.1, 0.3), 1..3);
        assert_eq!(ts.window(0.5, 0.6), 4..4);
    }

    proptest! {
        #[test]
        fn hex_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_hex_float(&hex_float(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }

        #[test]
        fn decimal_round_trip(x in any::<f64>()) {
            prop_assume!(x.is_finite());
            let back: f64 = format!("{x:?}").parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
