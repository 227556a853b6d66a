//! IPv6 prefixes as exact 128-bit values.
//!
//! A prefix is an address plus a length in `[0, 128]`, kept canonical: every
//! bit below the prefix length is zero. Bit 0 is the most significant bit of
//! the address, so "the last fixed bit" of a `/32` is bit 31. All allocator
//! arithmetic (containment, buddy, halving) reduces to mask operations on the
//! `u128` form; text parsing and shortest-form display defer to the standard
//! library's RFC-conformant `Ipv6Addr` handling.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("malformed address in {0:?}")]
    MalformedAddress(String),
    #[error("prefix length out of range: {0}")]
    LengthOutOfRange(u32),
    #[error("host bits set below the prefix length in {0:?}")]
    NonCanonicalPrefix(String),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv6Prefix {
    addr: u128,
    len: u8,
}

impl Ipv6Prefix {
    /// Builds a prefix, rejecting lengths over 128 and set host bits.
    pub fn new(addr: u128, len: u8) -> Result<Self, PrefixError> {
        if len > 128 {
            return Err(PrefixError::LengthOutOfRange(len as u32));
        }
        if addr & !mask(len) != 0 {
            return Err(PrefixError::NonCanonicalPrefix(format!(
                "{}/{}",
                Ipv6Addr::from(addr),
                len
            )));
        }
        Ok(Ipv6Prefix { addr, len })
    }

    pub const fn addr(&self) -> u128 {
        self.addr
    }

    /// The prefix length in bits (not a collection size; there is no
    /// corresponding emptiness notion).
    #[allow(clippy::len_without_is_empty)]
    pub const fn len(&self) -> u8 {
        self.len
    }

    /// True when `other` lies inside `self` (equality included).
    pub fn contains(&self, other: &Ipv6Prefix) -> bool {
        self.len <= other.len && (other.addr & mask(self.len)) == self.addr
    }

    /// The sibling block: same length, bit `len - 1` flipped. Together a
    /// prefix and its buddy tile their parent exactly.
    pub fn buddy(&self) -> Result<Ipv6Prefix, PrefixError> {
        if self.len == 0 {
            return Err(PrefixError::LengthOutOfRange(0));
        }
        Ok(Ipv6Prefix {
            addr: self.addr ^ half_bit(self.len),
            len: self.len,
        })
    }

    /// Splits into (lower, upper) halves of length `len + 1`.
    pub fn split(&self) -> Result<(Ipv6Prefix, Ipv6Prefix), PrefixError> {
        if self.len >= 128 {
            return Err(PrefixError::LengthOutOfRange(self.len as u32 + 1));
        }
        let len = self.len + 1;
        Ok((
            Ipv6Prefix { addr: self.addr, len },
            Ipv6Prefix {
                addr: self.addr | half_bit(len),
                len,
            },
        ))
    }

    /// The enclosing block of length `len - 1`.
    pub fn parent(&self) -> Result<Ipv6Prefix, PrefixError> {
        if self.len == 0 {
            return Err(PrefixError::LengthOutOfRange(0));
        }
        let len = self.len - 1;
        Ok(Ipv6Prefix {
            addr: self.addr & mask(len),
            len,
        })
    }

    /// Number of addresses as a power of two: `2^(128 - len)` has exponent
    /// `128 - len`. Exposed for coverage arithmetic rather than the raw count,
    /// which overflows `u128` at `len == 0`.
    pub const fn size_exponent(&self) -> u8 {
        128 - self.len
    }
}

/// Mask covering the first `len` bits.
fn mask(len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        u128::MAX << (128 - len)
    }
}

/// The single bit distinguishing the two halves of a block of length `len`.
fn half_bit(len: u8) -> u128 {
    debug_assert!((1..=128).contains(&len));
    1u128 << (128 - len)
}

impl fmt::Display for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", Ipv6Addr::from(self.addr), self.len)
    }
}

impl fmt::Debug for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ipv6Prefix({self})")
    }
}

impl FromStr for Ipv6Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr_part, len_part) = s
            .split_once('/')
            .ok_or_else(|| PrefixError::MalformedAddress(s.to_string()))?;
        let addr = Ipv6Addr::from_str(addr_part)
            .map_err(|_| PrefixError::MalformedAddress(s.to_string()))?;
        let len: u32 = len_part
            .parse()
            .map_err(|_| PrefixError::MalformedAddress(s.to_string()))?;
        if len > 128 {
            return Err(PrefixError::LengthOutOfRange(len));
        }
        Ipv6Prefix::new(addr.into(), len as u8)
    }
}

impl Serialize for Ipv6Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv6Prefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pfx(s: &str) -> Ipv6Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn parse_canonical_prefixes() {
        let p = pfx("2001:db8::/32");
        assert_eq!(p.addr(), 0x2001_0db8u128 << 96);
        assert_eq!(p.len(), 32);
        assert_eq!(pfx("::/0").addr(), 0);
        // A /128 is a single address; any address is canonical at /128.
        assert_eq!(pfx("2001:db8::1/128").addr(), (0x2001_0db8u128 << 96) | 1);
    }

    #[test]
    fn parse_rejections() {
        assert_eq!(
            "2001:db8::/129".parse::<Ipv6Prefix>(),
            Err(PrefixError::LengthOutOfRange(129))
        );
        assert!(matches!(
            "2001:db8::1/32".parse::<Ipv6Prefix>(),
            Err(PrefixError::NonCanonicalPrefix(_))
        ));
        assert!(matches!(
            "2001:zz8::/32".parse::<Ipv6Prefix>(),
            Err(PrefixError::MalformedAddress(_))
        ));
        assert!(matches!(
            "2001:db8::".parse::<Ipv6Prefix>(),
            Err(PrefixError::MalformedAddress(_))
        ));
        assert!(matches!(
            "2001:db8::/x".parse::<Ipv6Prefix>(),
            Err(PrefixError::MalformedAddress(_))
        ));
    }

    #[test]
    fn shortest_form_display() {
        assert_eq!(
            Ipv6Prefix::new(0x2001_1800u128 << 96, 32).unwrap().to_string(),
            "2001:1800::/32"
        );
        assert_eq!(pfx("2001:db8:0:0::/64").to_string(), "2001:db8::/64");
        assert_eq!(pfx("::/0").to_string(), "::/0");
    }

    #[test]
    fn containment() {
        let p32 = pfx("2001:db8::/32");
        assert!(p32.contains(&pfx("2001:db8:ff00::/40")));
        assert!(!p32.contains(&pfx("2001:db9::/40")));
        assert!(p32.contains(&p32));
        // A longer prefix never contains a shorter one.
        assert!(!pfx("2001:db8::/40").contains(&p32));
    }

    #[test]
    fn buddy_flips_last_fixed_bit() {
        assert_eq!(pfx("2001:db8::/32").buddy().unwrap(), pfx("2001:db9::/32"));
        assert_eq!(pfx("2001:db9::/32").buddy().unwrap(), pfx("2001:db8::/32"));
        assert_eq!(pfx("2001:1000::/20").buddy().unwrap(), pfx("2001::/20"));
        assert_eq!(pfx("::/0").buddy(), Err(PrefixError::LengthOutOfRange(0)));
    }

    #[test]
    fn buddies_tile_their_parent() {
        // Brute-force check over 2001:db8::/31: the two /32 halves are
        // exactly the prefix and its buddy, they are disjoint, and they
        // cover the parent.
        let parent = pfx("2001:db8::/31");
        let (lower, upper) = parent.split().unwrap();
        assert_eq!(lower, pfx("2001:db8::/32"));
        assert_eq!(upper, pfx("2001:db9::/32"));
        assert_eq!(lower.buddy().unwrap(), upper);
        assert!(parent.contains(&lower) && parent.contains(&upper));
        assert!(!lower.contains(&upper) && !upper.contains(&lower));
        assert_eq!(lower.parent().unwrap(), parent);
        assert_eq!(upper.parent().unwrap(), parent);
    }

    #[test]
    fn split_produces_halves() {
        let (lo, hi) = pfx("2001:db8::/32").split().unwrap();
        assert_eq!(lo, pfx("2001:db8::/33"));
        assert_eq!(hi, pfx("2001:db8:8000::/33"));
        assert_eq!(
            pfx("::1/128").split(),
            Err(PrefixError::LengthOutOfRange(129))
        );
    }

    /// Exhaustive consistency check over a narrow (8-bit) slice of the space:
    /// every prefix of length <= 8 whose fixed bits sit in the top byte.
    /// Containment must agree with integer-range inclusion, and buddy/split
    /// must agree with range arithmetic.
    #[test]
    fn narrow_space_exhaustive() {
        let mut all = Vec::new();
        for len in 0u8..=8 {
            for top in 0u16..(1u16 << len) {
                let addr = if len == 0 { 0 } else { (top as u128) << (128 - len) };
                all.push(Ipv6Prefix::new(addr, len).unwrap());
            }
        }
        assert_eq!(all.len(), 511);
        let range = |p: &Ipv6Prefix| {
            let start = (p.addr() >> 120) as u32;
            let width = 1u32 << (8 - p.len());
            (start, start + width)
        };
        for a in &all {
            let (as_, ae) = range(a);
            for b in &all {
                let (bs, be) = range(b);
                let range_contains = as_ <= bs && be <= ae;
                assert_eq!(a.contains(b), range_contains, "{a} vs {b}");
            }
            if a.len() > 0 {
                let buddy = a.buddy().unwrap();
                let (bs, be) = range(&buddy);
                // Buddy is adjacent and equal-sized: the union is the parent.
                assert_eq!(ae - as_, be - bs);
                assert!(ae == bs || be == as_);
                assert_eq!(a.parent().unwrap(), buddy.parent().unwrap());
            }
            if a.len() < 8 {
                let (lo, hi) = a.split().unwrap();
                let (ls, le) = range(&lo);
                let (hs, he) = range(&hi);
                assert_eq!((ls, he), (as_, ae));
                assert_eq!(le, hs);
            }
        }
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(addr: u128, len in 0u8..=128) {
            let canonical = if len == 0 { 0 } else { addr & (u128::MAX << (128 - len)) };
            let p = Ipv6Prefix::new(canonical, len).unwrap();
            let back: Ipv6Prefix = p.to_string().parse().unwrap();
            prop_assert_eq!(p, back);
        }

        #[test]
        fn split_children_reassemble(addr: u128, len in 0u8..128) {
            let canonical = if len == 0 { 0 } else { addr & (u128::MAX << (128 - len)) };
            let p = Ipv6Prefix::new(canonical, len).unwrap();
            let (lo, hi) = p.split().unwrap();
            prop_assert_eq!(lo.buddy().unwrap(), hi);
            prop_assert_eq!(hi.buddy().unwrap(), lo);
            prop_assert_eq!(lo.parent().unwrap(), p);
            prop_assert_eq!(hi.parent().unwrap(), p);
            prop_assert!(p.contains(&lo) && p.contains(&hi));
            prop_assert!(lo < hi);
        }
    }
}
