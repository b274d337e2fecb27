//! Seeded xoshiro256++ generator and the Gamma / Beta / Dirichlet samplers
//! that produce mixing weights.

use crate::error::{Error, Result};

/// xoshiro256++ with its state expanded from a 64-bit seed by splitmix64.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Independent child generator seeded from this stream.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` without modulo bias.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below: empty range");
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % bound) as usize;
            }
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Box–Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform01(); // (0, 1]
        let u2 = self.uniform01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// Fills `out` with `N(0, std²)` draws, consuming Box–Muller pairs.
    pub fn fill_normal(&mut self, out: &mut [f64], std: f64) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a * std;
            pair[1] = b * std;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.standard_normal() * std;
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("{alpha} (must be > 0)")));
    }
    Ok(())
}

/// Gamma(shape, 1) variate.
///
/// Marsaglia–Tsang squeeze for `shape >= 1`; smaller shapes are boosted with
/// `G(a) = G(a + 1) · U^(1/a)`.
pub fn gamma_sample(rng: &mut Rng, shape: f64) -> Result<f64> {
    check_alpha(shape)?;
    if shape < 1.0 {
        let g = marsaglia_tsang(rng, shape + 1.0);
        let u = 1.0 - rng.uniform01();
        // Underflow would produce 0 for very small shapes; keep the draw positive.
        return Ok((g * u.powf(1.0 / shape)).max(f64::MIN_POSITIVE));
    }
    Ok(marsaglia_tsang(rng, shape))
}

fn marsaglia_tsang(rng: &mut Rng, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform01();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// λ ~ Beta(α, α), computed as `G₁ / (G₁ + G₂)`.
pub fn beta_symmetric(rng: &mut Rng, alpha: f64) -> Result<f64> {
    let a = gamma_sample(rng, alpha)?;
    let b = gamma_sample(rng, alpha)?;
    Ok(a / (a + b))
}

/// Realized mixing weights `(u₁, …, u_k)` on the probability simplex.
#[derive(Clone, PartialEq, Debug)]
pub struct MixDraw {
    weights: Vec<f64>,
}

/// Allowed deviation of a draw's weight sum from 1.
pub const SIMPLEX_TOL: f64 = 1e-12;

impl MixDraw {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("mix draw", format!("needs >= 2 weights, got {}", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::invalid("mix draw", format!("weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid("mix draw", format!("weights sum to {sum}")));
        }
        Ok(MixDraw { weights })
    }

    /// The two-way draw `(λ, 1 − λ)`.
    pub fn pair(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("lambda", format!("{lambda} outside [0, 1]")));
        }
        Ok(MixDraw {
            weights: vec![lambda, 1.0 - lambda],
        })
    }

    /// All weight on input `index` of `k`.
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut weights = vec![0.0; k];
        weights[index] = 1.0;
        MixDraw { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }
}

/// `(u₁, …, u_k) ~ Dir(α, …, α)` as normalized Gamma(α) draws.
pub fn dirichlet_symmetric(rng: &mut Rng, alpha: f64, k: usize) -> Result<MixDraw> {
    check_alpha(alpha)?;
    if k < 2 {
        return Err(Error::invalid("dirichlet arity", format!("k = {k} (must be >= 2)")));
    }
    let mut g = Vec::with_capacity(k);
    for _ in 0..k {
        g.push(gamma_sample(rng, alpha)?);
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    Ok(MixDraw { weights: g })
}

/// One mixing draw of the given arity: Beta for pairs, Dirichlet otherwise.
pub fn draw_mix(rng: &mut Rng, alpha: f64, k: usize) -> Result<MixDraw> {
    if k == 2 {
        MixDraw::pair(beta_symmetric(rng, alpha)?)
    } else {
        dirichlet_symmetric(rng, alpha, k)
    }
}
