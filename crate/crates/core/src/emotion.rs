//! The six task emotions and the binary label vectors built over them.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Number of emotion classes. The set is closed.
pub const NUM_EMOTIONS: usize = 6;

/// Task emotions in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Anger = 0,
    Disgust = 1,
    Fear = 2,
    Joy = 3,
    Sadness = 4,
    Surprise = 5,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Emotion> {
        Self::ALL.get(ordinal).copied()
    }

    /// Lower-case column name.
    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Contract(format!("unknown emotion `{s}`")))
    }
}

/// One binary flag per emotion, indexed by ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector {
    bits: [bool; NUM_EMOTIONS],
}

impl LabelVector {
    pub fn new(bits: [bool; NUM_EMOTIONS]) -> Self {
        LabelVector { bits }
    }

    /// Builds a vector from 0/1 integers; anything else is rejected.
    pub fn from_flags(flags: [u8; NUM_EMOTIONS]) -> Option<Self> {
        let mut bits = [false; NUM_EMOTIONS];
        for (bit, flag) in bits.iter_mut().zip(flags) {
            *bit = match flag {
                0 => false,
                1 => true,
                _ => return None,
            };
        }
        Some(LabelVector { bits })
    }

    /// Decodes the low six bits of `mask`, bit k being emotion ordinal k.
    pub fn from_mask(mask: u8) -> Self {
        let mut bits = [false; NUM_EMOTIONS];
        for (k, bit) in bits.iter_mut().enumerate() {
            *bit = mask & (1 << k) != 0;
        }
        LabelVector { bits }
    }

    pub fn mask(&self) -> u8 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |m, (k, &b)| if b { m | (1 << k) } else { m })
    }

    pub fn get(&self, emotion: Emotion) -> bool {
        self.bits[emotion.ordinal()]
    }

    pub fn set(&mut self, emotion: Emotion, on: bool) {
        self.bits[emotion.ordinal()] = on;
    }

    pub fn flags(&self) -> [u8; NUM_EMOTIONS] {
        self.bits.map(u8::from)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_neutral(&self) -> bool {
        self.count() == 0
    }

    /// Active emotions in canonical order.
    pub fn active(&self) -> impl Iterator<Item = Emotion> + '_ {
        Emotion::ALL.into_iter().filter(|e| self.get(*e))
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flags = self.flags();
        write!(
            f,
            "({},{},{},{},{},{})",
            flags[0], flags[1], flags[2], flags[3], flags[4], flags[5]
        )
    }
}
