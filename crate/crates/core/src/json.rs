//! JSON output with every real written at 17 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

#[derive(Clone, Copy, Debug, Default)]
pub struct SigDigitsFormatter;

impl Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        // `{:.16e}` is one leading digit plus 16 fractional digits and parses
        // back to the same bits.
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{:.16e}", value as f64)
    }
}

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitsFormatter);
    value.serialize(&mut ser)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_and_exact_roundtrip() {
        let xs: Vec<f64> = vec![0.1, 1.0 / 3.0, 1e-5, -2.5e300, 0.0, 5e-324];
        let text = String::from_utf8(to_vec(&xs).unwrap()).unwrap();
        assert!(text.starts_with("[1.0000000000000001e-1,"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
