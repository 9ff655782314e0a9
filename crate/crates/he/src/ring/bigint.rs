//! Minimal unsigned big integer, little-endian u64 limbs.
//!
//! Only what CRT reconstruction needs: multiply/divide by a word, add,
//! subtract, compare, and a float conversion for decoding. Chains top out
//! below 500 bits, so allocation churn is irrelevant.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UBig(Vec<u64>);

impl UBig {
    pub fn zero() -> Self {
        UBig(vec![])
    }

    pub fn from_u64(x: u64) -> Self {
        if x == 0 {
            UBig(vec![])
        } else {
            UBig(vec![x])
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn trim(&mut self) {
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
    }

    pub fn mul_u64(&self, m: u64) -> Self {
        if m == 0 || self.is_zero() {
            return UBig::zero();
        }
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut carry = 0u128;
        for &w in &self.0 {
            let v = w as u128 * m as u128 + carry;
            out.push(v as u64);
            carry = v >> 64;
        }
        if carry > 0 {
            out.push(carry as u64);
        }
        UBig(out)
    }

    /// Exact division by a word; panics if the remainder is nonzero.
    pub fn div_exact_u64(&self, d: u64) -> Self {
        let (q, r) = self.div_rem_u64(d);
        assert_eq!(r, 0, "division was not exact");
        q
    }

    pub fn div_rem_u64(&self, d: u64) -> (Self, u64) {
        assert!(d != 0);
        let mut out = vec![0u64; self.0.len()];
        let mut rem = 0u128;
        for i in (0..self.0.len()).rev() {
            let cur = (rem << 64) | self.0[i] as u128;
            out[i] = (cur / d as u128) as u64;
            rem = cur % d as u128;
        }
        let mut q = UBig(out);
        q.trim();
        (q, rem as u64)
    }

    pub fn rem_u64(&self, d: u64) -> u64 {
        self.div_rem_u64(d).1
    }

    pub fn add_assign(&mut self, other: &UBig) {
        let len = self.0.len().max(other.0.len());
        self.0.resize(len, 0);
        let mut carry = 0u128;
        for i in 0..len {
            let b = other.0.get(i).copied().unwrap_or(0);
            let v = self.0[i] as u128 + b as u128 + carry;
            self.0[i] = v as u64;
            carry = v >> 64;
        }
        if carry > 0 {
            self.0.push(carry as u64);
        }
    }

    /// self - other; panics on underflow.
    pub fn sub(&self, other: &UBig) -> Self {
        assert!(self.cmp_big(other) != std::cmp::Ordering::Less);
        let mut out = self.0.clone();
        let mut borrow = 0i128;
        for i in 0..out.len() {
            let b = other.0.get(i).copied().unwrap_or(0);
            let v = out[i] as i128 - b as i128 - borrow;
            if v < 0 {
                out[i] = (v + (1i128 << 64)) as u64;
                borrow = 1;
            } else {
                out[i] = v as u64;
                borrow = 0;
            }
        }
        let mut r = UBig(out);
        r.trim();
        r
    }

    pub fn cmp_big(&self, other: &UBig) -> std::cmp::Ordering {
        if self.0.len() != other.0.len() {
            return self.0.len().cmp(&other.0.len());
        }
        for i in (0..self.0.len()).rev() {
            match self.0[i].cmp(&other.0[i]) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    }

    /// Shift right by one bit (floor halving).
    pub fn shr1(&self) -> Self {
        let mut out = self.0.clone();
        for i in 0..out.len() {
            out[i] >>= 1;
            if i + 1 < self.0.len() {
                out[i] |= (self.0[i + 1] & 1) << 63;
            }
        }
        let mut r = UBig(out);
        r.trim();
        r
    }

    pub fn to_f64(&self) -> f64 {
        let mut acc = 0.0f64;
        let hi = self.0.len();
        // Three top limbs carry far more than f64 precision.
        let lo = hi.saturating_sub(3);
        for i in (lo..hi).rev() {
            acc = acc * 18446744073709551616.0 + self.0[i] as f64;
        }
        acc * 18446744073709551616.0f64.powi(lo as i32)
    }
}
