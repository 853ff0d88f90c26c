//! Hex-float string encoding for bit-exact f64 round-trips in JSON.
//!
//! Format matches C99 `%a`: `[-]0x1.<mantissa>p<exp>`, with `0x0p+0` for zero.
//! Subnormals are encoded as `0x0.<mantissa>p-1022`.

/// Formats an f64 as a hex-float string that round-trips bit-exactly.
pub fn format_hex(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0x0p+0".to_string()
        } else {
            "0x0p+0".to_string()
        };
    }
    assert!(v.is_finite(), "hex-float encoding requires finite values");
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    let (lead, exp) = if biased == 0 {
        // subnormal
        (0u64, -1022i64)
    } else {
        (1u64, biased - 1023)
    };
    // trim trailing zero nibbles
    let mut hex = format!("{:013x}", mantissa);
    while hex.len() > 1 && hex.ends_with('0') {
        hex.pop();
    }
    if mantissa == 0 {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{hex}p{exp:+}")
    }
}

/// Parses a hex-float string produced by [`format_hex`] (or C99 `%a`).
pub fn parse_hex(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let s = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    let p = s.find(['p', 'P'])?;
    let (mant_str, exp_str) = (&s[..p], &s[p + 1..]);
    let exp: i64 = exp_str.parse().ok()?;
    let (int_str, frac_str) = match mant_str.find('.') {
        Some(dot) => (&mant_str[..dot], &mant_str[dot + 1..]),
        None => (mant_str, ""),
    };
    let mut value = 0.0f64;
    for c in int_str.chars() {
        value = value * 16.0 + c.to_digit(16)? as f64;
    }
    let mut scale = 1.0 / 16.0;
    for c in frac_str.chars() {
        value += c.to_digit(16)? as f64 * scale;
        scale /= 16.0;
    }
    let mut out = value * (exp as f64).exp2();
    // Rebuild exactly: value * 2^exp via ldexp-style bit manipulation is not
    // needed; all inputs we emit have <= 53 significant bits, and exp2 of an
    // integer is exact, so the product rounds correctly except near the
    // subnormal range. Handle that by splitting the exponent.
    if !out.is_normal() && value != 0.0 {
        let half = exp / 2;
        out = value * (half as f64).exp2() * ((exp - half) as f64).exp2();
    }
    Some(if neg { -out } else { out })
}
