//! Finite unions of subintervals of `[0, 1]`.

use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use super::EPS_GEOM;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: true,
            hi_closed: true,
        }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: true,
            hi_closed: false,
        }
    }

    pub fn length(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    fn flags(&self) -> &'static str {
        match (self.lo_closed, self.hi_closed) {
            (true, true) => "[]",
            (true, false) => "[)",
            (false, true) => "(]",
            (false, false) => "()",
        }
    }

    fn from_flags(lo: f64, hi: f64, flags: &str) -> Option<Self> {
        let (lo_closed, hi_closed) = match flags {
            "[]" => (true, true),
            "[)" => (true, false),
            "(]" => (false, true),
            "()" => (false, false),
            _ => return None,
        };
        Some(Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }
}

/// Sorted, pairwise disjoint union of intervals inside `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSet {
    components: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self {
            components: vec![Interval::closed(0.0, 1.0)],
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(vec![Interval::closed(lo, hi)])
    }

    /// Builds a set from arbitrary intervals: clips to `[0, 1]`, drops empty
    /// pieces, sorts, and merges overlapping or touching components.
    pub fn new(parts: Vec<Interval>) -> Self {
        let mut parts: Vec<Interval> = parts
            .into_iter()
            .map(|mut iv| {
                if iv.lo < 0.0 {
                    iv.lo = 0.0;
                    iv.lo_closed = true;
                }
                if iv.hi > 1.0 {
                    iv.hi = 1.0;
                    iv.hi_closed = true;
                }
                iv
            })
            .filter(|iv| !iv.is_empty())
            .collect();
        parts.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for iv in parts {
            if let Some(last) = out.last_mut() {
                let touches = iv.lo < last.hi
                    || (iv.lo == last.hi && (iv.lo_closed || last.hi_closed));
                if touches {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                        last.hi_closed = iv.hi_closed;
                    } else if iv.hi == last.hi {
                        last.hi_closed |= iv.hi_closed;
                    }
                    continue;
                }
            }
            out.push(iv);
        }
        Self { components: out }
    }

    pub fn components(&self) -> &[Interval] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.components.iter().any(|iv| iv.contains(x))
    }

    /// Lebesgue measure.
    pub fn length(&self) -> f64 {
        self.components.iter().map(Interval::length).sum()
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = self.components.clone();
        parts.extend_from_slice(&other.components);
        Self::new(parts)
    }

    pub fn intersect_interval(&self, lo: f64, hi: f64) -> IntervalSet {
        let parts = self
            .components
            .iter()
            .filter_map(|iv| {
                let (a, ac) = if iv.lo >= lo { (iv.lo, iv.lo_closed) } else { (lo, true) };
                let (b, bc) = if iv.hi <= hi { (iv.hi, iv.hi_closed) } else { (hi, true) };
                let cut = Interval {
                    lo: a,
                    hi: b,
                    lo_closed: ac,
                    hi_closed: bc,
                };
                (!cut.is_empty()).then_some(cut)
            })
            .collect();
        Self::new(parts)
    }

    /// Closure-level inclusion with geometric tolerance: every component of
    /// `self` lies inside a single component of `other` enlarged by `ε_geom`.
    /// Endpoint flags of `other` are honoured, so a closed set is not a subset
    /// of the open interval with the same endpoints.
    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.components.iter().all(|iv| {
            other.components.iter().any(|ov| {
                let lo_ok = if ov.lo_closed || !iv.lo_closed {
                    iv.lo >= ov.lo - EPS_GEOM
                } else {
                    iv.lo > ov.lo + EPS_GEOM
                };
                let hi_ok = if ov.hi_closed || !iv.hi_closed {
                    iv.hi <= ov.hi + EPS_GEOM
                } else {
                    iv.hi < ov.hi - EPS_GEOM
                };
                lo_ok && hi_ok
            })
        })
    }

    /// All dyadic intervals `[k 2^{-l}, (k+1) 2^{-l}]` for `l` in `0..=max_level`.
    pub fn dyadic_family(max_level: u32) -> Vec<IntervalSet> {
        let mut out = Vec::new();
        for level in 0..=max_level {
            let count = 1u32 << level;
            let width = 1.0 / count as f64;
            for k in 0..count {
                out.push(Self::closed(k as f64 * width, (k + 1) as f64 * width));
            }
        }
        out
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return write!(f, "∅");
        }
        for (i, iv) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            let (l, r) = iv.flags().split_at(1);
            write!(f, "{l}{}, {}{r}", iv.lo, iv.hi)?;
        }
        Ok(())
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.components.len()))?;
        for iv in &self.components {
            seq.serialize_element(&(iv.lo, iv.hi, iv.flags()))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SetVisitor;

        impl<'de> Visitor<'de> for SetVisitor {
            type Value = IntervalSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of [lo, hi, flags] triples")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<IntervalSet, A::Error> {
                let mut parts = Vec::new();
                while let Some((lo, hi, flags)) = seq.next_element::<(f64, f64, String)>()? {
                    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                        return Err(de::Error::custom(format!(
                            "interval [{lo}, {hi}] is not a subinterval of [0, 1]"
                        )));
                    }
                    let iv = Interval::from_flags(lo, hi, &flags).ok_or_else(|| {
                        de::Error::custom(format!("unknown endpoint flags {flags:?}"))
                    })?;
                    parts.push(iv);
                }
                let set = IntervalSet::new(parts.clone());
                if set.components.len() != parts.iter().filter(|p| !p.is_empty()).count() {
                    return Err(de::Error::custom("interval components overlap"));
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(SetVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_touching_components() {
        let s = IntervalSet::new(vec![
            Interval::closed(0.5, 0.75),
            Interval::half_open(0.0, 0.5),
            Interval::open(0.8, 0.9),
        ]);
        assert_eq!(s.components().len(), 2);
        assert_eq!(s.components()[0], Interval::closed(0.0, 0.75));
        assert!((s.length() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn open_endpoints_do_not_merge() {
        let s = IntervalSet::new(vec![Interval::half_open(0.0, 0.5), Interval::open(0.5, 1.0)]);
        assert_eq!(s.components().len(), 2);
        assert!(!s.contains(0.5));
    }

    #[test]
    fn subset_respects_flags() {
        let closed = IntervalSet::closed(0.2, 0.4);
        let open = IntervalSet::new(vec![Interval::open(0.2, 0.4)]);
        assert!(closed.is_subset_of(&IntervalSet::closed(0.1, 0.4)));
        assert!(!closed.is_subset_of(&open));
        assert!(open.is_subset_of(&closed));
        assert!(IntervalSet::empty().is_subset_of(&open));
    }

    #[test]
    fn json_format() {
        let s = IntervalSet::new(vec![Interval::closed(0.0, 0.25), Interval::open(0.5, 1.0)]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"[[0.0,0.25,"[]"],[0.5,1.0,"()"]]"#);
        let back: IntervalSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<IntervalSet>(r#"[[0.0,0.5,"[]"],[0.25,1.0,"[]"]]"#).is_err());
        assert!(serde_json::from_str::<IntervalSet>(r#"[[0.0,1.5,"[]"]]"#).is_err());
    }

    #[test]
    fn dyadic_family_size() {
        assert_eq!(IntervalSet::dyadic_family(5).len(), 63);
    }
}
