//! Token counts, prices and the request cost model.
//!
//! Money is held as an integer number of picounits (1e-12 of the currency)
//! so cost identities hold exactly.

use core::fmt;
use core::iter::Sum;
use core::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenCount(pub u64);

impl Add for TokenCount {
    type Output = TokenCount;
    fn add(self, rhs: TokenCount) -> TokenCount {
        TokenCount(self.0 + rhs.0)
    }
}

impl AddAssign for TokenCount {
    fn add_assign(&mut self, rhs: TokenCount) {
        self.0 += rhs.0;
    }
}

impl Sum for TokenCount {
    fn sum<I: Iterator<Item = TokenCount>>(iter: I) -> TokenCount {
        iter.fold(TokenCount(0), Add::add)
    }
}

impl fmt::Display for TokenCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Amount of currency in picounits. Serializes as a decimal currency value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(pub u128);

impl Money {
    pub const PICOS_PER_UNIT: u128 = 1_000_000_000_000;

    pub const ZERO: Money = Money(0);

    /// Rounds a non-negative currency amount to the nearest picounit.
    /// Negative or non-finite input maps to zero.
    pub fn from_units(units: f64) -> Money {
        if !(units.is_finite() && units > 0.0) {
            return Money(0);
        }
        Money(libm::round(units * Self::PICOS_PER_UNIT as f64) as u128)
    }

    pub fn whole_units(units: u64) -> Money {
        Money(u128::from(units) * Self::PICOS_PER_UNIT)
    }

    pub fn as_units(self) -> f64 {
        let whole = self.0 / Self::PICOS_PER_UNIT;
        let frac = self.0 % Self::PICOS_PER_UNIT;
        whole as f64 + frac as f64 / Self::PICOS_PER_UNIT as f64
    }

    pub fn picos(self) -> u128 {
        self.0
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Mul<TokenCount> for Money {
    type Output = Money;
    fn mul(self, rhs: TokenCount) -> Money {
        Money(self.0 * u128::from(rhs.0))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_units())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let units = f64::deserialize(d)?;
        if units < 0.0 || !units.is_finite() {
            return Err(serde::de::Error::custom("price must be a non-negative finite number"));
        }
        Ok(Money::from_units(units))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_units())
    }
}

/// Per-token prices for input and output tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pricing {
    pub p_input: Money,
    pub p_output: Money,
}

impl Pricing {
    pub fn new(p_input: Money, p_output: Money) -> Self {
        Self { p_input, p_output }
    }

    pub fn charge(&self, input: TokenCount, output: TokenCount) -> Money {
        self.p_input * input + self.p_output * output
    }
}

/// `(n_con + n_ins) * p_input + n_out * p_output`
pub fn cost_vanilla(n_con: TokenCount, n_ins: TokenCount, n_out: TokenCount, pricing: Pricing) -> Money {
    pricing.p_input * (n_con + n_ins) + pricing.p_output * n_out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPartitions;

impl fmt::Display for ZeroPartitions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("partition count must be at least 1")
    }
}

/// `(n_con + m * n_ins) * p_input + (m + 1) * n_out * p_output` for `m`
/// extraction requests plus one summarization request.
pub fn cost_briefcontext(
    n_con: TokenCount,
    n_ins: TokenCount,
    n_out: TokenCount,
    m: u64,
    pricing: Pricing,
) -> Result<Money, ZeroPartitions> {
    if m == 0 {
        return Err(ZeroPartitions);
    }
    let input = n_con + TokenCount(m * n_ins.0);
    let output = TokenCount((m + 1) * n_out.0);
    Ok(pricing.p_input * input + pricing.p_output * output)
}

/// Running total of requests and tokens. The cost is always derived from
/// the totals, never accumulated separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTally {
    pub requests: u64,
    pub input_tokens: TokenCount,
    pub output_tokens: TokenCount,
    pub pricing: Pricing,
    pub cost: Money,
}

impl CostTally {
    pub fn new(pricing: Pricing) -> Self {
        Self { pricing, ..Self::default() }
    }

    pub fn record(&mut self, input: TokenCount, output: TokenCount) {
        self.requests += 1;
        self.input_tokens += input;
        self.output_tokens += output;
        self.cost = self.pricing.charge(self.input_tokens, self.output_tokens);
    }

    /// Adds another tally priced with the same model.
    pub fn merge(&mut self, other: &CostTally) {
        self.requests += other.requests;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.cost = self.pricing.charge(self.input_tokens, self.output_tokens);
    }
}
