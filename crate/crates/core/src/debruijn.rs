//! History windows on the binary de Bruijn graph.
//!
//! A window `m = (m_1, ..., m_d)` lists the last `d` market moves, oldest
//! first. It is packed into an integer by reading the window as a binary
//! number with `-1 -> 0` and `+1 -> 1`, so `m_1` is the most significant bit
//! and the newest move always sits in bit 0. Shifting in a new move is then a
//! left shift, mask, and or. The textual form `"+-+"` (or `"101"`) spells the
//! window oldest first, which is also the binary reading of the code.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest window length accepted by [`enumerate_states`].
pub const MAX_WINDOW: usize = 24;

/// A single market move `b ∈ {-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bit {
    Minus,
    Plus,
}

impl Bit {
    pub const BOTH: [Bit; 2] = [Bit::Plus, Bit::Minus];

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Bit::Plus => 1.0,
            Bit::Minus => -1.0,
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Bit::Plus => 1,
            Bit::Minus => -1,
        }
    }

    #[inline]
    fn code(self) -> u32 {
        match self {
            Bit::Plus => 1,
            Bit::Minus => 0,
        }
    }

    pub fn from_sign(v: i64) -> Result<Bit> {
        match v {
            1 => Ok(Bit::Plus),
            -1 => Ok(Bit::Minus),
            other => Err(Error::InvalidState(format!("{other} is not a market move"))),
        }
    }

    /// `+1` for nonnegative inputs, `-1` otherwise (zero maps to `+1`).
    pub fn sign_of(v: f64) -> Bit {
        if v >= 0.0 {
            Bit::Plus
        } else {
            Bit::Minus
        }
    }

    pub fn flip(self) -> Bit {
        match self {
            Bit::Plus => Bit::Minus,
            Bit::Minus => Bit::Plus,
        }
    }

    fn glyph(self) -> char {
        match self {
            Bit::Plus => '+',
            Bit::Minus => '-',
        }
    }
}

/// A node of the `d`-dimensional de Bruijn graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryState {
    d: u8,
    code: u32,
}

impl HistoryState {
    pub fn new(d: usize, code: u32) -> Result<Self> {
        if d == 0 || d > 31 {
            return Err(Error::InvalidState(format!("window length {d} out of range")));
        }
        if u64::from(code) >= 1u64 << d {
            return Err(Error::InvalidState(format!("code {code} does not fit in {d} bits")));
        }
        Ok(Self { d: d as u8, code })
    }

    /// Builds a window from moves listed oldest first.
    pub fn from_bits(bits: &[Bit]) -> Result<Self> {
        let code = bits.iter().fold(0u32, |acc, b| (acc << 1) | b.code());
        Self::new(bits.len(), code)
    }

    /// Builds a window from `±1` values listed oldest first.
    pub fn from_signs(signs: &[i64]) -> Result<Self> {
        let bits = signs
            .iter()
            .map(|&s| Bit::from_sign(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }

    #[inline]
    pub fn window(self) -> usize {
        self.d as usize
    }

    #[inline]
    pub fn code(self) -> u32 {
        self.code
    }

    #[inline]
    pub fn index(self) -> usize {
        self.code as usize
    }

    #[inline]
    fn mask(self) -> u32 {
        if self.d == 32 {
            u32::MAX
        } else {
            (1u32 << self.d) - 1
        }
    }

    /// Move `j` of the window, `j = 0` being the oldest.
    pub fn bit(self, j: usize) -> Bit {
        assert!(j < self.window(), "bit index {j} out of range");
        if (self.code >> (self.window() - 1 - j)) & 1 == 1 {
            Bit::Plus
        } else {
            Bit::Minus
        }
    }

    pub fn bits(self) -> Vec<Bit> {
        (0..self.window()).map(|j| self.bit(j)).collect()
    }

    pub fn signs(self) -> Vec<i8> {
        self.bits().into_iter().map(Bit::as_i8).collect()
    }

    /// `m|b`: drop the oldest move and append `b`.
    #[inline]
    pub fn shift(self, b: Bit) -> Self {
        Self {
            d: self.d,
            code: ((self.code << 1) | b.code()) & self.mask(),
        }
    }

    /// `m|s` for a word `s` applied left to right.
    pub fn shift_word(self, word: &[Bit]) -> Self {
        word.iter().fold(self, |m, &b| m.shift(b))
    }

    /// The successor `m_+`.
    #[inline]
    pub fn plus(self) -> Self {
        self.shift(Bit::Plus)
    }

    /// The successor `m_-`.
    #[inline]
    pub fn minus(self) -> Self {
        self.shift(Bit::Minus)
    }
}

impl fmt::Display for HistoryState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{}", b.glyph())?;
        }
        Ok(())
    }
}

impl FromStr for HistoryState {
    type Err = Error;

    /// Accepts `+`/`-` or `1`/`0` spellings, oldest move first.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bits = s
            .chars()
            .map(|c| match c {
                '+' | '1' => Ok(Bit::Plus),
                '-' | '0' => Ok(Bit::Minus),
                other => Err(Error::InvalidState(format!("unexpected symbol {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::InvalidState("empty state".into()));
        }
        Self::from_bits(&bits)
    }
}

/// All `2^d` windows in increasing code order.
pub fn enumerate_states(d: usize) -> Result<Vec<HistoryState>> {
    enumerate_states_with_guard(d, MAX_WINDOW)
}

pub fn enumerate_states_with_guard(d: usize, max: usize) -> Result<Vec<HistoryState>> {
    if d == 0 {
        return Err(Error::InvalidState("window length must be positive".into()));
    }
    if d > max || d > 31 {
        return Err(Error::WindowTooLarge { d, max });
    }
    Ok((0..(1u32 << d)).map(|code| HistoryState { d: d as u8, code }).collect())
}

/// Every word of length `len`, in lexicographic order with `-` before `+`.
pub fn words(len: usize) -> impl Iterator<Item = Vec<Bit>> {
    assert!(len < 32, "word length {len} too large to enumerate");
    (0..(1u64 << len)).map(move |w| {
        (0..len)
            .map(|j| {
                if (w >> (len - 1 - j)) & 1 == 1 {
                    Bit::Plus
                } else {
                    Bit::Minus
                }
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(s: &str) -> HistoryState {
        s.parse().unwrap()
    }

    #[test]
    fn shift_follows_figure_edges() {
        assert_eq!(st("101").shift(Bit::Plus), st("011"));
        assert_eq!(st("101").shift(Bit::Minus), st("010"));
        assert_eq!(st("1").shift(Bit::Plus), st("1"));
        assert_eq!(st("101").plus(), st("011"));
        assert_eq!(st("101").minus(), st("010"));
    }

    #[test]
    fn shift_word_examples() {
        assert_eq!(st("01").shift_word(&[Bit::Plus]), st("11"));
        assert_eq!(
            st("01").shift_word(&[Bit::Plus, Bit::Minus, Bit::Minus]),
            st("00")
        );
        assert_eq!(st("101").shift_word(&[Bit::Plus, Bit::Plus]), st("111"));
    }

    #[test]
    fn enumerate_small_windows() {
        let one = enumerate_states(1).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].to_string(), "-");
        assert_eq!(one[1].to_string(), "+");
        let two = enumerate_states(2).unwrap();
        assert_eq!(two.iter().map(|m| m.code()).collect::<Vec<_>>(), vec![0, 1, 2, 3]);

        let three = enumerate_states(3).unwrap();
        let mut names: Vec<String> = three
            .iter()
            .map(|m| m.to_string().replace('+', "1").replace('-', "0"))
            .collect();
        names.sort();
        let mut fig = vec!["000", "001", "010", "011", "100", "101", "110", "111"];
        fig.sort();
        assert_eq!(names, fig);
    }

    #[test]
    fn window_guard() {
        assert_eq!(
            enumerate_states(25),
            Err(Error::WindowTooLarge { d: 25, max: 24 })
        );
        assert!(enumerate_states_with_guard(3, 2).is_err());
        assert!(enumerate_states(0).is_err());
    }

    #[test]
    fn parsing_and_display() {
        assert_eq!(st("++-"), st("110"));
        assert_eq!(st("110").to_string(), "++-");
        assert!("+x-".parse::<HistoryState>().is_err());
        assert!("".parse::<HistoryState>().is_err());
        assert_eq!(HistoryState::from_signs(&[1, -1, 1]).unwrap(), st("101"));
        assert!(HistoryState::from_signs(&[1, 0]).is_err());
        assert!(HistoryState::new(2, 4).is_err());
    }

    #[test]
    fn in_degree_is_two() {
        for d in 1..=6 {
            let states = enumerate_states(d).unwrap();
            let mut indeg = vec![0usize; states.len()];
            for m in &states {
                indeg[m.plus().index()] += 1;
                indeg[m.minus().index()] += 1;
                assert_ne!(m.plus(), m.minus());
            }
            assert!(indeg.iter().all(|&c| c == 2), "d = {d}");
        }
    }

    fn arb_bits(max: usize) -> impl Strategy<Value = Vec<Bit>> {
        prop::collection::vec(prop_oneof![Just(Bit::Minus), Just(Bit::Plus)], 0..max)
    }

    proptest! {
        #[test]
        fn round_trip(d in 1usize..=12, raw in any::<u32>()) {
            let m = HistoryState::new(d, raw % (1 << d)).unwrap();
            prop_assert_eq!(HistoryState::from_bits(&m.bits()).unwrap(), m);
            let back: HistoryState = m.to_string().parse().unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn root_forgotten_after_d_moves(d in 1usize..=8, a in any::<u32>(), b in any::<u32>(), tail in arb_bits(12)) {
            let m1 = HistoryState::new(d, a % (1 << d)).unwrap();
            let m2 = HistoryState::new(d, b % (1 << d)).unwrap();
            if tail.len() >= d {
                prop_assert_eq!(m1.shift_word(&tail), m2.shift_word(&tail));
                let last = HistoryState::from_bits(&tail[tail.len() - d..]).unwrap();
                prop_assert_eq!(m1.shift_word(&tail), last);
            }
        }

        #[test]
        fn concatenation_is_associative(d in 1usize..=8, a in any::<u32>(), s in arb_bits(10), t in arb_bits(10)) {
            let m = HistoryState::new(d, a % (1 << d)).unwrap();
            let st: Vec<Bit> = s.iter().chain(t.iter()).copied().collect();
            prop_assert_eq!(m.shift_word(&st), m.shift_word(&s).shift_word(&t));
        }
    }
}
