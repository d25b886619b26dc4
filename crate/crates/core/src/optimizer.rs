//! Joint MM estimation of all offsets.
//!
//! With the covariances fixed, `J(ε) = -Σ x̂ᴴ V⁻¹ x̂` splits into negative
//! cosines of `ω[t,f]·(ε_n - ε_m) + ∠Υ_mn[t,f]`. Each cosine is bounded from
//! below by a concave quadratic that touches it at the current estimate
//! `ε̃`, so the surrogate is a weighted least-squares problem in the pairwise
//! differences `Dε`. Maximizing it under `ε_0 = 0` is one bordered linear
//! solve.
//!
//! Pair `(m, n)` is stored at flat index `m·M + n`.

use core::f64::consts::PI;

use crate::likelihood::{profile_from_loaded, sample_covariance, SroVector, UpsilonSet};
use crate::linalg::{solve_real, LoadedCovariance, DEFAULT_LOADING};
use crate::prelude::*;
use crate::signal::{SpectrogramSet, StftConfig, MAX_ABS_SRO};
use crate::{Complex, Error, Result, PPM};

/// Added to `(ξ+γ)/2π` before taking the floor so that exact integers (up to
/// rounding) resolve to `ξ - μ = -π`.
const FLOOR_NUDGE: f64 = 1e-12;

/// Relative ridge added to `DᵀAD` before solving.
pub const KKT_RIDGE: f64 = 1e-12;

const SINC_TAYLOR: f64 = 1e-4;

/// `sin(x)/x`, with `sinc(0) = 1` and a Taylor branch near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_TAYLOR {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Curvature `λ` and center `μ` of the quadratic minorizer
/// `-λ(ωθ - μ)² + ν ≤ -|Υ| cos(ωθ + ∠Υ)`, tight at `ωθ = ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub lambda: f64,
    pub mu: f64,
}

/// Bound parameters for one `Υ` entry at the expansion point
/// `ξ = ω·(ε̃_n - ε̃_m)`.
pub fn cosine_bound_params(upsilon: Complex, omega: f64, eps_diff_tilde: f64) -> BoundParams {
    let alpha = upsilon.norm();
    let gamma = upsilon.arg();
    let xi = omega * eps_diff_tilde;
    let turns = ((xi + gamma) / (2.0 * PI) + FLOOR_NUDGE).floor();
    let mu = 2.0 * PI * turns + PI - gamma;
    // sinc is non-negative on [-π, π]; the nudge can push ξ-μ a hair below -π
    let lambda = (0.5 * alpha * sinc(xi - mu)).max(0.0);
    BoundParams { lambda, mu }
}

/// Same bound, computed from the rotated entry `z = Υ·e^{jξ}`:
/// `ξ - μ` is the angle of `-z` wrapped to `[-π, π)`.
#[inline]
fn bound_from_rotated(z: Complex, xi: f64) -> BoundParams {
    let mut d = (-z.im).atan2(-z.re);
    if d >= PI {
        d = -PI;
    }
    // |z| sin(d) = -Im z, so the sinc needs no extra transcendental away from 0.
    let lambda = if d.abs() < SINC_TAYLOR {
        0.5 * (z.re * z.re + z.im * z.im).sqrt() * (1.0 - d * d / 6.0)
    } else {
        -0.5 * z.im / d
    };
    let lambda = lambda.max(0.0);
    BoundParams { lambda, mu: xi - d }
}

/// Auxiliary variables `ξ, λ, μ` for every `(t, f, m, n)` plus `ω[t,f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    channels: usize,
    frames: usize,
    bins: usize,
    xi: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    omega: Vec<f64>,
}

impl AuxState {
    /// Evaluates the bound parameters at `eps_tilde` for every entry of `upsilon`.
    pub fn new(upsilon: &UpsilonSet, config: &StftConfig, eps_tilde: &SroVector) -> Result<Self> {
        let (c, frames, bins) = (
            upsilon.num_channels(),
            upsilon.num_frames(),
            upsilon.num_bins(),
        );
        if eps_tilde.len() != c || bins != config.num_bins() {
            return Err(Error::InvalidInput(
                "auxiliary state dimensions do not match".into(),
            ));
        }
        let total = frames * bins * c * c;
        let mut state = Self {
            channels: c,
            frames,
            bins,
            xi: Vec::with_capacity(total),
            lambda: Vec::with_capacity(total),
            mu: Vec::with_capacity(total),
            omega: Vec::with_capacity(frames * bins),
        };
        for t in 0..frames {
            for f in 0..bins {
                let omega = config.omega(t, f);
                state.omega.push(omega);
                for m in 0..c {
                    for n in 0..c {
                        let diff = eps_tilde.get(n) - eps_tilde.get(m);
                        let p = cosine_bound_params(upsilon.get(t, f, m, n), omega, diff);
                        state.xi.push(omega * diff);
                        state.lambda.push(p.lambda);
                        state.mu.push(p.mu);
                    }
                }
            }
        }
        Ok(state)
    }

    /// Assembles a state from raw arrays laid out `[(t·F_b + f)·M² + m·M + n]`
    /// (and `[t·F_b + f]` for `omega`).
    pub fn from_parts(
        channels: usize,
        frames: usize,
        bins: usize,
        xi: Vec<f64>,
        lambda: Vec<f64>,
        mu: Vec<f64>,
        omega: Vec<f64>,
    ) -> Result<Self> {
        let total = frames * bins * channels * channels;
        if xi.len() != total
            || lambda.len() != total
            || mu.len() != total
            || omega.len() != frames * bins
        {
            return Err(Error::InvalidInput(
                "auxiliary arrays have inconsistent lengths".into(),
            ));
        }
        if xi
            .iter()
            .chain(&lambda)
            .chain(&mu)
            .chain(&omega)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "auxiliary arrays contain non-finite values".into(),
            ));
        }
        Ok(Self {
            channels,
            frames,
            bins,
            xi,
            lambda,
            mu,
            omega,
        })
    }

    fn index(&self, t: usize, f: usize, m: usize, n: usize) -> usize {
        ((t * self.bins + f) * self.channels + m) * self.channels + n
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    pub fn xi(&self, t: usize, f: usize, m: usize, n: usize) -> f64 {
        self.xi[self.index(t, f, m, n)]
    }

    pub fn lambda(&self, t: usize, f: usize, m: usize, n: usize) -> f64 {
        self.lambda[self.index(t, f, m, n)]
    }

    pub fn mu(&self, t: usize, f: usize, m: usize, n: usize) -> f64 {
        self.mu[self.index(t, f, m, n)]
    }

    pub fn omega(&self, t: usize, f: usize) -> f64 {
        self.omega[t * self.bins + f]
    }
}

/// Normal equations of the quadratic surrogate: `A` (diagonal, `M²`) and
/// `b` (`M²`). The difference matrix `D` and selector `u` are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    channels: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Bordered-solve output: offsets and the (discarded) KKT multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub epsilon: Vec<f64>,
    pub multiplier: f64,
}

impl KktSystem {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            a: vec![0.0; channels * channels],
            b: vec![0.0; channels * channels],
        }
    }

    pub fn from_parts(channels: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let n = channels * channels;
        if a.len() != n || b.len() != n {
            return Err(Error::InvalidInput(format!(
                "KKT vectors must have {n} entries"
            )));
        }
        if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "diagonal of A must be finite and non-negative".into(),
            ));
        }
        Ok(Self { channels, a, b })
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    /// Diagonal of `A`.
    pub fn a_diag(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Adds `ω²λ` to `A` and `ωλμ` to `b` at pair `(m, n)`; self-pairs are skipped.
    pub fn add_term(&mut self, m: usize, n: usize, omega: f64, lambda: f64, mu: f64) {
        if m == n {
            return;
        }
        let p = m * self.channels + n;
        let wl = omega * lambda;
        self.a[p] += omega * wl;
        self.b[p] += wl * mu;
    }

    /// `D` as a row-major `M² × M` matrix: `(Dε)_{mM+n} = ε_n - ε_m`.
    pub fn difference_matrix(&self) -> Vec<f64> {
        let c = self.channels;
        let mut d = vec![0.0; c * c * c];
        for m in 0..c {
            for n in 0..c {
                if m != n {
                    let row = m * c + n;
                    d[row * c + n] += 1.0;
                    d[row * c + m] -= 1.0;
                }
            }
        }
        d
    }

    /// `u = [1, 0, …, 0]ᵀ`.
    pub fn selector(&self) -> Vec<f64> {
        let mut u = vec![0.0; self.channels];
        u[0] = 1.0;
        u
    }

    /// `DᵀAD`, row-major `M × M`.
    pub fn normal_matrix(&self) -> Vec<f64> {
        let c = self.channels;
        let d = self.difference_matrix();
        let mut out = vec![0.0; c * c];
        for (p, &w) in self.a.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &d[p * c..(p + 1) * c];
            for i in 0..c {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..c {
                    out[i * c + j] += row[i] * w * row[j];
                }
            }
        }
        out
    }

    /// `Dᵀb`.
    pub fn normal_rhs(&self) -> Vec<f64> {
        let c = self.channels;
        let d = self.difference_matrix();
        let mut out = vec![0.0; c];
        for (p, &bp) in self.b.iter().enumerate() {
            for i in 0..c {
                out[i] += d[p * c + i] * bp;
            }
        }
        out
    }

    fn ridged_normal(&self) -> (Vec<f64>, f64) {
        let c = self.channels;
        let mut n = self.normal_matrix();
        let trace: f64 = (0..c).map(|i| n[i * c + i]).sum();
        for i in 0..c {
            n[i * c + i] += KKT_RIDGE * trace;
        }
        (n, trace)
    }

    /// Solves `[[DᵀAD, u], [uᵀ, 0]] [ε; ρ] = [Dᵀb; 0]`. The block system is
    /// scaled by `trace(DᵀAD)/M` first; `ε_0` is returned as exactly zero.
    pub fn solve_bordered(&self) -> Result<KktSolution> {
        let c = self.channels;
        let (normal, trace) = self.ridged_normal();
        let scale = if trace > 0.0 { trace / c as f64 } else { 1.0 };
        let size = c + 1;
        let mut mat = vec![0.0; size * size];
        for i in 0..c {
            for j in 0..c {
                mat[i * size + j] = normal[i * c + j] / scale;
            }
        }
        mat[c] = 1.0;
        mat[c * size] = 1.0;
        let mut rhs: Vec<f64> = self.normal_rhs().iter().map(|v| v / scale).collect();
        rhs.push(0.0);
        let (x, pivot) = solve_real(mat, rhs);
        let mut x = x.ok_or(Error::SingularKkt { trace, pivot })?;
        if pivot <= 1e-14 || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularKkt { trace, pivot });
        }
        let multiplier = x.pop().unwrap_or(0.0) * scale;
        x[0] = 0.0;
        Ok(KktSolution {
            epsilon: x,
            multiplier,
        })
    }

    /// Same maximizer through elimination of `ε_0`: solves the trailing
    /// `(M-1)`-dimensional block of the ridged normal equations.
    pub fn solve_eliminated(&self) -> Result<Vec<f64>> {
        let c = self.channels;
        let (normal, trace) = self.ridged_normal();
        if c == 1 {
            return Ok(vec![0.0]);
        }
        let r = c - 1;
        let mut mat = vec![0.0; r * r];
        for i in 0..r {
            for j in 0..r {
                mat[i * r + j] = normal[(i + 1) * c + j + 1];
            }
        }
        let rhs = self.normal_rhs()[1..].to_vec();
        let (x, pivot) = solve_real(mat, rhs);
        let x = x.ok_or(Error::SingularKkt { trace, pivot })?;
        let mut out = vec![0.0];
        out.extend(x);
        Ok(out)
    }

    /// Relative residual of `DᵀAD ε + u ρ = Dᵀb` (without the ridge).
    pub fn stationarity_residual(&self, solution: &KktSolution) -> f64 {
        let c = self.channels;
        let n = self.normal_matrix();
        let rhs = self.normal_rhs();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = rhs.iter().fold(0.0, |a, v| a.max(v.abs()));
        for i in 0..c {
            let mut lhs = if i == 0 { solution.multiplier } else { 0.0 };
            for j in 0..c {
                let term = n[i * c + j] * solution.epsilon[j];
                scale = scale.max(term.abs());
                lhs += term;
            }
            worst = worst.max((lhs - rhs[i]).abs());
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}

/// `A = Σ ω²Λ`, `b = Σ ωΛμ` over all bins and pairs with `m ≠ n`.
pub fn build_kkt(aux: &AuxState) -> KktSystem {
    let c = aux.channels;
    let mut sys = KktSystem::new(c);
    for t in 0..aux.frames {
        for f in 0..aux.bins {
            let omega = aux.omega(t, f);
            for m in 0..c {
                for n in 0..c {
                    let i = aux.index(t, f, m, n);
                    sys.add_term(m, n, omega, aux.lambda[i], aux.mu[i]);
                }
            }
        }
    }
    sys
}

/// Maximizer of the surrogate under `ε_0 = 0`.
pub fn solve_kkt(system: &KktSystem) -> Result<SroVector> {
    SroVector::new(system.solve_bordered()?.epsilon)
}

/// `J(ε)` as the sum of entry-wise negative cosines,
/// `-Σ |Υ_mn| cos(ω(ε_n - ε_m) + ∠Υ_mn)` over all `(t, f, m, n)`.
pub fn entrywise_objective(upsilon: &UpsilonSet, config: &StftConfig, sro: &SroVector) -> f64 {
    let c = upsilon.num_channels();
    let mut total = 0.0;
    for t in 0..upsilon.num_frames() {
        for f in 0..upsilon.num_bins() {
            let omega = config.omega(t, f);
            for m in 0..c {
                for n in 0..c {
                    let u = upsilon.get(t, f, m, n);
                    total -= u.norm() * (omega * (sro.get(n) - sro.get(m)) + u.arg()).cos();
                }
            }
        }
    }
    total
}

/// Surrogate normal equations at `ε̃` straight from the compensated
/// coefficients: `Υ_mn e^{jξ_mn} = conj(x̂_m) (V⁻¹)_mn x̂_n`. Only `m < n` is
/// evaluated; pair `(n, m)` has the same `λ` and the negated `μ`.
pub(crate) fn accumulate_kkt(
    xhat: &SpectrogramSet,
    loaded: &[LoadedCovariance],
    eps_tilde: &SroVector,
) -> KktSystem {
    let c = xhat.num_channels();
    let config = xhat.config();
    let bins = xhat.num_bins();
    let channels: Vec<&[Complex]> = (0..c).map(|m| xhat.channel_coeffs(m)).collect();
    let eps = eps_tilde.as_slice();
    let pairs: Vec<(usize, usize)> = (0..c)
        .flat_map(|m| (m + 1..c).map(move |n| (m, n)))
        .collect();
    // Per pair: Σ ω²λ and Σ ωλμ for (m, n); (n, m) has the same weight and -μ.
    let mut weight = vec![0.0; pairs.len()];
    let mut target = vec![0.0; pairs.len()];
    let mut col = vec![Complex::default(); c];
    for t in 0..xhat.num_frames() {
        let row = t * bins;
        for f in 0..bins {
            let omega = config.omega(t, f);
            if omega == 0.0 {
                continue;
            }
            for (v, ch) in col.iter_mut().zip(&channels) {
                *v = ch[row + f];
            }
            let w = loaded[f].inverse.as_slice();
            for (k, &(m, n)) in pairs.iter().enumerate() {
                let z = col[m].conj() * w[m * c + n] * col[n];
                let p = bound_from_rotated(z, omega * (eps[n] - eps[m]));
                let wl = omega * p.lambda;
                weight[k] += omega * wl;
                target[k] += wl * p.mu;
            }
        }
    }
    let mut a = vec![0.0; c * c];
    let mut b = vec![0.0; c * c];
    for (k, &(m, n)) in pairs.iter().enumerate() {
        a[m * c + n] = weight[k];
        a[n * c + m] = weight[k];
        b[m * c + n] = target[k];
        b[n * c + m] = -target[k];
    }
    KktSystem { channels: c, a, b }
}

/// Iteration controls for [`estimate_joint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    /// Outer iterations `K` (covariance updates).
    pub outer_iterations: usize,
    /// Inner MM steps `K'` per covariance update.
    pub inner_iterations: usize,
    /// Early stop once `max_m |Δε_m|` between outer iterations drops below this.
    pub tolerance: f64,
    /// Relative diagonal loading of the covariances.
    pub loading: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 100,
            inner_iterations: 1,
            tolerance: 1e-4 * PPM,
            loading: DEFAULT_LOADING,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub sro: SroVector,
    /// Profile log-likelihood at the initial value and after every outer
    /// iteration (`iterations + 1` entries).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Prepared {
    xhat: SpectrogramSet,
    loaded: Vec<LoadedCovariance>,
    profile: f64,
}

impl Prepared {
    fn new(set: &SpectrogramSet, sro: &SroVector, loading: f64) -> Result<Self> {
        let xhat = set.compensated(sro)?;
        let loaded = sample_covariance(&xhat).loaded(loading)?;
        let profile = profile_from_loaded(set.num_frames(), set.num_channels(), &loaded);
        Ok(Self {
            xhat,
            loaded,
            profile,
        })
    }
}

/// Alternates the covariance update with `K'` MM steps on the offsets.
pub fn estimate_joint(
    set: &SpectrogramSet,
    init: &SroVector,
    config: &JointConfig,
) -> Result<JointEstimate> {
    if config.outer_iterations == 0 || config.inner_iterations == 0 {
        return Err(Error::Config("iteration counts must be at least 1".into()));
    }
    if init.len() != set.num_channels() {
        return Err(Error::InvalidInput(format!(
            "initial SRO vector has {} entries for {} channels",
            init.len(),
            set.num_channels()
        )));
    }
    let mut sro = init.clone();
    let mut state = Prepared::new(set, &sro, config.loading)?;
    let mut trace = vec![state.profile];
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..config.outer_iterations {
        let before = sro.clone();
        for inner in 0..config.inner_iterations {
            let system = if inner == 0 {
                accumulate_kkt(&state.xhat, &state.loaded, &sro)
            } else {
                accumulate_kkt(&set.compensated(&sro)?, &state.loaded, &sro)
            };
            let next = system.solve_bordered()?.epsilon;
            if next
                .iter()
                .any(|e| !e.is_finite() || e.abs() >= MAX_ABS_SRO)
            {
                return Err(Error::NonFinite {
                    iteration: k,
                    state: format!("{next:?}"),
                });
            }
            sro = SroVector::new(next)?;
        }
        state = Prepared::new(set, &sro, config.loading)?;
        trace.push(state.profile);
        iterations = k + 1;
        if sro.max_abs_diff(&before) < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(JointEstimate {
        sro,
        trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{compute_upsilon, joint_objective, update_scm};
    use crate::signal::Spectrogram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(
        rng: &mut ChaCha8Rng,
        config: &StftConfig,
        channels: usize,
        frames: usize,
    ) -> SpectrogramSet {
        let n = frames * config.num_bins();
        let specs = (0..channels)
            .map(|_| {
                let d = (0..n)
                    .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                Spectrogram::from_coeffs(config.clone(), frames, d).unwrap()
            })
            .collect();
        SpectrogramSet::from_channels(specs).unwrap()
    }

    /// `-λ(u - μ)² + ν` with ν chosen so the bound touches at `u = ξ`.
    fn minorizer(ups: Complex, omega: f64, diff_tilde: f64, diff: f64) -> f64 {
        let p = cosine_bound_params(ups, omega, diff_tilde);
        let xi = omega * diff_tilde;
        let nu = p.lambda * (xi - p.mu).powi(2) - ups.norm() * (xi + ups.arg()).cos();
        -p.lambda * (omega * diff - p.mu).powi(2) + nu
    }

    #[test]
    fn sinc_branches() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(9.9e-5) - (9.9e-5f64).sin() / 9.9e-5).abs() < 1e-15);
        assert!(sinc(PI).abs() < 1e-16);
    }

    #[test]
    fn bound_params_examples() {
        let p = cosine_bound_params(Complex::new(1.0, 0.0), 0.0, 0.0);
        assert!((p.mu - PI).abs() < 1e-15);
        assert!(p.lambda.abs() < 1e-16);
        let p = cosine_bound_params(Complex::new(-1.0, 0.0), 0.0, 0.0);
        assert!(p.mu.abs() < 1e-15);
        assert!((p.lambda - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bound_is_a_tight_minorizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let alpha = rng.random_range(0.0..10.0);
            let gamma = rng.random_range(-PI..PI);
            let ups = Complex::from_polar(alpha, gamma);
            let omega = rng.random_range(0.0..1e5);
            let diff_tilde = rng.random_range(-1e-4..1e-4);
            let diff = rng.random_range(-1e-4..1e-4);
            let exact = |d: f64| -alpha * (omega * d + gamma).cos();
            let p = cosine_bound_params(ups, omega, diff_tilde);
            let gap = omega * diff_tilde - p.mu;
            assert!((-PI - 1e-9..PI).contains(&gap), "ξ-μ = {gap}");
            assert!(p.lambda >= 0.0);
            assert!(minorizer(ups, omega, diff_tilde, diff) <= exact(diff) + 1e-9 * (1.0 + alpha));
            assert!(
                (minorizer(ups, omega, diff_tilde, diff_tilde) - exact(diff_tilde)).abs()
                    < 1e-9 * (1.0 + alpha)
            );
        }
    }

    #[test]
    fn rotated_kernel_agrees_with_floor_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let ups = Complex::from_polar(rng.random_range(0.0..3.0), rng.random_range(-PI..PI));
            let omega = rng.random_range(0.0..1e5);
            let diff = rng.random_range(-2e-4..2e-4);
            let xi = omega * diff;
            let a = cosine_bound_params(ups, omega, diff);
            let b = bound_from_rotated(ups * Complex::from_polar(1.0, xi), xi);
            assert!((a.lambda - b.lambda).abs() < 1e-9 * (1.0 + a.lambda));
            // μ may differ by 2π only when ξ-μ sits on the ±π seam, where λ = 0
            let dmu = a.mu - b.mu;
            assert!(dmu.abs() < 1e-8 || a.lambda < 1e-8, "{a:?} {b:?}");
        }
    }

    #[test]
    fn self_pairs_and_tie_rule() {
        // Υ_mm is real and positive: γ = 0, ξ = 0 lands exactly on the tie.
        let p = cosine_bound_params(Complex::new(2.5, 0.0), 1234.0, 0.0);
        assert!((0.0 - p.mu + PI).abs() < 1e-12);
        assert!(p.lambda < 1e-15);
    }

    #[test]
    fn build_kkt_examples() {
        let zero =
            AuxState::from_parts(2, 1, 1, vec![0.0; 4], vec![0.0; 4], vec![1.0; 4], vec![3.0])
                .unwrap();
        let sys = build_kkt(&zero);
        assert!(sys.a_diag().iter().chain(sys.b()).all(|&v| v == 0.0));

        let (omega, lambda, mu) = (2.0, 0.75, -0.4);
        let mut lam = vec![0.0; 4];
        let mut mus = vec![0.0; 4];
        lam[1] = lambda;
        mus[1] = mu;
        let aux = AuxState::from_parts(2, 1, 1, vec![0.0; 4], lam, mus, vec![omega]).unwrap();
        let sys = build_kkt(&aux);
        assert_eq!(sys.a_diag(), &[0.0, omega * omega * lambda, 0.0, 0.0]);
        assert_eq!(sys.b(), &[0.0, omega * lambda * mu, 0.0, 0.0]);
    }

    #[test]
    fn build_kkt_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, frames, bins) = (3, 2, 2);
        let total = frames * bins * c * c;
        let lambda: Vec<f64> = (0..total).map(|_| rng.random_range(0.0..2.0)).collect();
        let mu: Vec<f64> = (0..total).map(|_| rng.random_range(-5.0..5.0)).collect();
        let omega: Vec<f64> = (0..frames * bins)
            .map(|_| rng.random_range(0.0..10.0))
            .collect();
        let aux = AuxState::from_parts(
            c,
            frames,
            bins,
            vec![0.0; total],
            lambda.clone(),
            mu.clone(),
            omega.clone(),
        )
        .unwrap();
        let sys = build_kkt(&aux);
        for m in 0..c {
            for n in 0..c {
                let (mut a, mut b) = (0.0, 0.0);
                if m != n {
                    for t in 0..frames {
                        for f in 0..bins {
                            let i = ((t * bins + f) * c + m) * c + n;
                            let w = omega[t * bins + f];
                            a += w * w * lambda[i];
                            b += w * lambda[i] * mu[i];
                        }
                    }
                }
                assert!((sys.a_diag()[m * c + n] - a).abs() < 1e-12 * (1.0 + a));
                assert!((sys.b()[m * c + n] - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
        let d = sys.difference_matrix();
        let eps = [0.3, -1.2, 2.5];
        for m in 0..c {
            for n in 0..c {
                let row = &d[(m * c + n) * c..(m * c + n + 1) * c];
                let got: f64 = row.iter().zip(eps).map(|(a, b)| a * b).sum();
                assert_eq!(got, if m == n { 0.0 } else { eps[n] - eps[m] });
            }
        }
    }

    #[test]
    fn solve_kkt_examples() {
        // b = 0 with a positive A gives the origin
        let sys = KktSystem::from_parts(
            3,
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0],
            vec![0.0; 9],
        )
        .unwrap();
        let eps = solve_kkt(&sys).unwrap();
        assert_eq!(eps.as_slice(), &[0.0, 0.0, 0.0]);

        // single pair (0,1): maximize -λ(ωε_1 - μ)² → ε_1 = μ/ω
        let (omega, lambda, mu) = (5e4, 0.8, 1.7);
        let mut s = KktSystem::new(2);
        s.add_term(0, 1, omega, lambda, mu);
        let sol = s.solve_bordered().unwrap();
        assert_eq!(sol.epsilon[0], 0.0);
        assert!((sol.epsilon[1] - mu / omega).abs() < 1e-10 * (mu / omega));
        assert!(s.stationarity_residual(&sol) < 1e-8);
    }

    #[test]
    fn singular_kkt_is_reported() {
        let sys = KktSystem::new(3);
        assert!(matches!(
            sys.solve_bordered(),
            Err(Error::SingularKkt { .. })
        ));
    }

    #[test]
    fn bordered_and_eliminated_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let a = (0..c * c)
                .map(|i| {
                    if i % (c + 1) == 0 {
                        0.0
                    } else {
                        rng.random_range(0.0..1e10)
                    }
                })
                .collect();
            let b = (0..c * c).map(|_| rng.random_range(-1e6..1e6)).collect();
            let sys = KktSystem::from_parts(c, a, b).unwrap();
            let sol = sys.solve_bordered().unwrap();
            let elim = sys.solve_eliminated().unwrap();
            let scale = elim.iter().fold(1e-300f64, |s, v| s.max(v.abs()));
            for (x, y) in sol.epsilon.iter().zip(&elim) {
                assert!((x - y).abs() <= 1e-10 * scale);
            }
            assert!(sys.stationarity_residual(&sol) < 1e-8);
        }
    }

    #[test]
    fn fast_accumulation_matches_aux_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let config = StftConfig::rectangular(8, 4, 8).unwrap();
        let set = random_set(&mut rng, &config, 4, 5);
        let eps_tilde = SroVector::new(vec![0.0, 3e-3, -2e-3, 1e-3]).unwrap();
        let scms = update_scm(&set, &SroVector::zeros(4)).unwrap();
        let ups = compute_upsilon(&set, &scms).unwrap();
        let slow = build_kkt(&AuxState::new(&ups, &config, &eps_tilde).unwrap());
        let loaded = scms.loaded(DEFAULT_LOADING).unwrap();
        let fast = accumulate_kkt(&set.compensated(&eps_tilde).unwrap(), &loaded, &eps_tilde);
        for (x, y) in slow.a_diag().iter().zip(fast.a_diag()) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} {y}");
        }
        for (x, y) in slow.b().iter().zip(fast.b()) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} {y}");
        }
    }

    #[test]
    fn aux_state_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = StftConfig::rectangular(8, 4, 8).unwrap();
        let set = random_set(&mut rng, &config, 3, 4);
        let scms = update_scm(&set, &SroVector::zeros(3)).unwrap();
        let ups = compute_upsilon(&set, &scms).unwrap();
        let eps = SroVector::new(vec![0.0, 5e-3, -4e-3]).unwrap();
        let aux = AuxState::new(&ups, &config, &eps).unwrap();
        for t in 0..4 {
            for f in 0..5 {
                for m in 0..3 {
                    for n in 0..3 {
                        let gap = aux.xi(t, f, m, n) - aux.mu(t, f, m, n);
                        assert!((-PI - 1e-9..PI).contains(&gap));
                        assert!(aux.lambda(t, f, m, n) >= 0.0);
                        assert_eq!(aux.xi(t, f, m, n), -aux.xi(t, f, n, m));
                    }
                }
            }
        }
    }

    #[test]
    fn entrywise_form_equals_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let config = StftConfig::rectangular(8, 4, 8).unwrap();
        let set = random_set(&mut rng, &config, 3, 5);
        let scms = update_scm(&set, &SroVector::zeros(3)).unwrap();
        let ups = compute_upsilon(&set, &scms).unwrap();
        let eps = SroVector::new(vec![0.0, 2e-3, 7e-3]).unwrap();
        let a = joint_objective(&set, &eps, &scms).unwrap();
        let b = entrywise_objective(&ups, &config, &eps);
        assert!((a - b).abs() <= 1e-8 * a.abs());
    }

    #[test]
    fn identical_channels_stay_synchronized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = StftConfig::rectangular(16, 8, 16).unwrap();
        let one = random_set(&mut rng, &config, 1, 20);
        let set = one.select(&[0, 0]).unwrap();
        let est = estimate_joint(&set, &SroVector::zeros(2), &JointConfig::default()).unwrap();
        assert_eq!(est.sro.get(0), 0.0);
        assert!(est.sro.get(1).abs() < 1e-12);
        assert_eq!(est.trace.len(), est.iterations + 1);
    }

    #[test]
    fn rejects_zero_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = StftConfig::rectangular(16, 8, 16).unwrap();
        let set = random_set(&mut rng, &config, 2, 4);
        let cfg = JointConfig {
            outer_iterations: 0,
            ..JointConfig::default()
        };
        assert!(matches!(
            estimate_joint(&set, &SroVector::zeros(2), &cfg),
            Err(Error::Config(_))
        ));
    }
}
