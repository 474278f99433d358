//! Gamma–Poisson infinite relational model over countries, actions and time
//! steps, each entity belonging to exactly one group, with an optional degree
//! correction (one positive scalar per entity).

use alloc::vec;
use alloc::vec::Vec;

use crate::distributions::{sample_gamma, sample_log_categorical, sample_poisson};
use crate::error::{Error, Result};
use crate::events::{CountTensor, EventToken};
use crate::linalg::{pair_mass, CoreTensor, Matrix};
use crate::math;
use crate::model::{gamma_vec, Hyperparams, ModelDims, TuckerParams};
use crate::rng::RngStream;
use crate::sampler::{ModelKind, NamedArray, Sampler, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct GpirmState {
    /// Community of each country.
    pub country: Vec<usize>,
    /// Topic of each action.
    pub action: Vec<usize>,
    /// Regime of each time step.
    pub time: Vec<usize>,
    pub core: CoreTensor,
    /// Degree scalars; all ones unless degree corrected.
    pub country_degree: Vec<f64>,
    pub action_degree: Vec<f64>,
    pub time_degree: Vec<f64>,
    pub degree_corrected: bool,
    pub hyper: Hyperparams,
}

impl GpirmState {
    pub fn sample_prior(dims: ModelDims, hyper: Hyperparams, degree_corrected: bool, rng: &mut RngStream) -> Result<Self> {
        dims.validate()?;
        hyper.validate()?;
        let e = hyper.eps0;
        let country = (0..dims.countries).map(|_| rng.below(dims.communities)).collect();
        let action = (0..dims.actions).map(|_| rng.below(dims.topics)).collect();
        let time = (0..dims.steps).map(|_| rng.below(dims.regimes)).collect();
        let data = gamma_vec(dims.classes(), e, e, rng)?;
        let core = CoreTensor::from_vec(dims.communities, dims.topics, dims.regimes, data).expect("sized");
        let degrees = |n: usize, rng: &mut RngStream| -> Result<Vec<f64>> {
            if degree_corrected {
                gamma_vec(n, e, e, rng)
            } else {
                Ok(vec![1.0; n])
            }
        };
        Ok(Self {
            country,
            action,
            time,
            core,
            country_degree: degrees(dims.countries, rng)?,
            action_degree: degrees(dims.actions, rng)?,
            time_degree: degrees(dims.steps, rng)?,
            degree_corrected,
            hyper,
        })
    }

    /// Random assignments, unit degrees and a unit-mean core scaled so the
    /// expected total matches `target_total`.
    pub fn initial(dims: ModelDims, hyper: Hyperparams, degree_corrected: bool, target_total: f64, rng: &mut RngStream) -> Result<Self> {
        dims.validate()?;
        hyper.validate()?;
        let data = gamma_vec(dims.classes(), 1.0, 1.0, rng)?;
        let mut state = Self {
            country: (0..dims.countries).map(|_| rng.below(dims.communities)).collect(),
            action: (0..dims.actions).map(|_| rng.below(dims.topics)).collect(),
            time: (0..dims.steps).map(|_| rng.below(dims.regimes)).collect(),
            core: CoreTensor::from_vec(dims.communities, dims.topics, dims.regimes, data).expect("sized"),
            country_degree: vec![1.0; dims.countries],
            action_degree: vec![1.0; dims.actions],
            time_degree: vec![1.0; dims.steps],
            degree_corrected,
            hyper,
        };
        let total = state.total_rate();
        if target_total > 0.0 && total > 0.0 {
            let scale = target_total / total;
            state.core.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
        }
        Ok(state)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            countries: self.country.len(),
            actions: self.action.len(),
            steps: self.time.len(),
            communities: self.core.communities(),
            topics: self.core.topics(),
            regimes: self.core.regimes(),
        }
    }

    /// Poisson rate of `(i → j, a, t)`. The multiplication order matches
    /// [`TuckerParams::rate_unchecked`] on the embedding, so the two agree
    /// exactly.
    #[inline]
    pub fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        let l = self.core.get(self.country[i], self.country[j], self.action[a], self.time[t]);
        (self.action_degree[a] * self.time_degree[t]) * (self.country_degree[i] * (l * self.country_degree[j]))
    }

    /// The same model written as BPTD with one-hot factor rows.
    pub fn embed(&self) -> TuckerParams {
        let one_hot = |groups: &[usize], weights: &[f64], n: usize| {
            let mut m = Matrix::zeros(groups.len(), n);
            for (row, (&g, &w)) in groups.iter().zip(weights).enumerate() {
                m.set(row, g, w);
            }
            m
        };
        let d = self.dims();
        TuckerParams {
            theta: one_hot(&self.country, &self.country_degree, d.communities),
            phi: one_hot(&self.action, &self.action_degree, d.topics),
            psi: one_hot(&self.time, &self.time_degree, d.regimes),
            core: self.core.clone(),
        }
    }

    /// `X[c][d] = Σ_{i≠j} w_i w_j [z_i=c][z_j=d]`, minus `held` pairs.
    fn community_mass(&self, held: &[(usize, usize)]) -> Matrix {
        let c_n = self.core.communities();
        let mut u = Matrix::zeros(self.country.len(), c_n);
        for (i, (&c, &w)) in self.country.iter().zip(&self.country_degree).enumerate() {
            u.set(i, c, w);
        }
        pair_mass(&u, &u, held)
    }

    fn group_mass(groups: &[usize], weights: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&g, &w) in groups.iter().zip(weights) {
            out[g] += w;
        }
        out
    }

    fn topic_mass(&self) -> Vec<f64> {
        Self::group_mass(&self.action, &self.action_degree, self.core.topics())
    }

    fn regime_mass(&self) -> Vec<f64> {
        Self::group_mass(&self.time, &self.time_degree, self.core.regimes())
    }

    pub fn total_rate(&self) -> f64 {
        let x = self.community_mass(&[]);
        let f = self.topic_mass();
        let p = self.regime_mass();
        let mut total = 0.0;
        for (r, &pr) in p.iter().enumerate() {
            for (k, &fk) in f.iter().enumerate() {
                let s: f64 = self.core.slice(k, r).iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
                total += fk * pr * s;
            }
        }
        total
    }

    pub fn log_likelihood(&self, data: &CountTensor) -> f64 {
        let mut ll = -self.total_rate();
        for (e, n) in data.entries() {
            let mu = self.rate(e.sender, e.receiver, e.action, e.time);
            ll += n as f64 * math::ln(mu) - math::ln_gamma(n as f64 + 1.0);
        }
        ll
    }

    pub fn simulate(&self, rng: &mut RngStream) -> Result<CountTensor> {
        let d = self.dims();
        let mut out = CountTensor::new(d.tensor());
        for i in 0..d.countries {
            for j in 0..d.countries {
                if i == j {
                    continue;
                }
                for a in 0..d.actions {
                    for t in 0..d.steps {
                        let y = sample_poisson(self.rate(i, j, a, t), rng)?;
                        if y > 0 {
                            out.add(EventToken::new(i, j, a, t), y)?;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// A GPIRM or DCGPIRM Markov chain bound to one count tensor.
#[derive(Debug, Clone)]
pub struct GpirmChain {
    state: GpirmState,
    data: CountTensor,
    entries: Vec<(EventToken, u64)>,
    by_sender: Vec<Vec<usize>>,
    by_receiver: Vec<Vec<usize>>,
    by_action: Vec<Vec<usize>>,
    by_time: Vec<Vec<usize>>,
    held: Vec<(usize, usize)>,
    test_phase: bool,
}

impl GpirmChain {
    pub fn new(
        data: CountTensor,
        communities: usize,
        topics: usize,
        regimes: usize,
        hyper: Hyperparams,
        degree_corrected: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let dims = ModelDims::for_tensor(data.dims(), communities, topics, regimes)?;
        let state = GpirmState::initial(dims, hyper, degree_corrected, data.total() as f64, rng)?;
        Self::from_state(state, data)
    }

    pub fn from_state(state: GpirmState, data: CountTensor) -> Result<Self> {
        if state.dims().tensor() != data.dims() {
            return Err(Error::DimensionMismatch("GPIRM state does not match data".into()));
        }
        let mut chain = Self {
            state,
            data: CountTensor::new(data.dims()),
            entries: Vec::new(),
            by_sender: Vec::new(),
            by_receiver: Vec::new(),
            by_action: Vec::new(),
            by_time: Vec::new(),
            held: Vec::new(),
            test_phase: false,
        };
        chain.index(data);
        Ok(chain)
    }

    fn index(&mut self, data: CountTensor) {
        let d = data.dims();
        self.entries = data.entries().collect();
        self.by_sender = vec![Vec::new(); d.countries];
        self.by_receiver = vec![Vec::new(); d.countries];
        self.by_action = vec![Vec::new(); d.actions];
        self.by_time = vec![Vec::new(); d.steps];
        for (n, (e, _)) in self.entries.iter().enumerate() {
            self.by_sender[e.sender].push(n);
            self.by_receiver[e.receiver].push(n);
            self.by_action[e.action].push(n);
            self.by_time[e.time].push(n);
        }
        self.data = data;
    }

    pub fn state(&self) -> &GpirmState {
        &self.state
    }

    pub fn data(&self) -> &CountTensor {
        &self.data
    }

    pub fn set_state(&mut self, state: GpirmState) {
        self.state = state;
    }

    pub fn set_data(&mut self, data: CountTensor) -> Result<()> {
        if data.dims() != self.data.dims() {
            return Err(Error::DimensionMismatch("replacement data has other dims".into()));
        }
        self.index(data);
        Ok(())
    }

    fn ln_core(&self) -> Vec<f64> {
        self.state.core.as_slice().iter().map(|&l| math::ln(l)).collect()
    }

    /// `H[c][d] = Σ_{k,r} (λ[c,d,k,r] + λ[d,c,k,r]) Φ_k Ψ_r`.
    fn symmetric_rate(&self) -> Matrix {
        let s = &self.state;
        let c_n = s.core.communities();
        let (f, p) = (s.topic_mass(), s.regime_mass());
        let mut h = Matrix::zeros(c_n, c_n);
        for (r, &pr) in p.iter().enumerate() {
            for (k, &fk) in f.iter().enumerate() {
                let slice = s.core.slice(k, r);
                for c in 0..c_n {
                    for d in 0..c_n {
                        let v = h.get(c, d) + (slice[c * c_n + d] + slice[d * c_n + c]) * fk * pr;
                        h.set(c, d, v);
                    }
                }
            }
        }
        h
    }

    fn update_countries(&mut self, rng: &mut RngStream) -> Result<()> {
        let c_n = self.state.core.communities();
        let lc = self.ln_core();
        let h = self.symmetric_rate();
        let core = &self.state.core;
        let mut mass = GpirmState::group_mass(&self.state.country, &self.state.country_degree, c_n);
        let mut logw = vec![0.0; c_n];
        for i in 0..self.state.country.len() {
            let w_i = self.state.country_degree[i];
            mass[self.state.country[i]] -= w_i;
            for (c, lw) in logw.iter_mut().enumerate() {
                let expo: f64 = (0..c_n).map(|d| mass[d].max(0.0) * h.get(c, d)).sum();
                *lw = -w_i * expo;
            }
            for &n in &self.by_sender[i] {
                let (e, y) = self.entries[n];
                let (d, k, r) = (self.state.country[e.receiver], self.state.action[e.action], self.state.time[e.time]);
                for (c, lw) in logw.iter_mut().enumerate() {
                    *lw += y as f64 * lc[core.index(c, d, k, r)];
                }
            }
            for &n in &self.by_receiver[i] {
                let (e, y) = self.entries[n];
                let (c, k, r) = (self.state.country[e.sender], self.state.action[e.action], self.state.time[e.time]);
                for (d, lw) in logw.iter_mut().enumerate() {
                    *lw += y as f64 * lc[core.index(c, d, k, r)];
                }
            }
            let c = sample_log_categorical(&mut logw, rng)?;
            self.state.country[i] = c;
            mass[c] += w_i;
        }
        Ok(())
    }

    /// `G_k = Σ_{c,d,r} X_cd λ[c,d,k,r] Ψ_r`.
    fn topic_exposure(&self, x: &Matrix) -> Vec<f64> {
        let s = &self.state;
        let p = s.regime_mass();
        let mut g = vec![0.0; s.core.topics()];
        for (r, &pr) in p.iter().enumerate() {
            for (k, gk) in g.iter_mut().enumerate() {
                let v: f64 = s.core.slice(k, r).iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
                *gk += pr * v;
            }
        }
        g
    }

    /// `H_r = Σ_{c,d,k} X_cd Φ_k λ[c,d,k,r]`.
    fn regime_exposure(&self, x: &Matrix) -> Vec<f64> {
        let s = &self.state;
        let f = s.topic_mass();
        let mut h = vec![0.0; s.core.regimes()];
        for (r, hr) in h.iter_mut().enumerate() {
            for (k, &fk) in f.iter().enumerate() {
                let v: f64 = s.core.slice(k, r).iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
                *hr += fk * v;
            }
        }
        h
    }

    fn update_actions(&mut self, rng: &mut RngStream) -> Result<()> {
        let k_n = self.state.core.topics();
        let lc = self.ln_core();
        let x = self.state.community_mass(&[]);
        let g = self.topic_exposure(&x);
        let mut logw = vec![0.0; k_n];
        for a in 0..self.state.action.len() {
            let w = self.state.action_degree[a];
            for (k, lw) in logw.iter_mut().enumerate() {
                *lw = -w * g[k];
            }
            for &n in &self.by_action[a] {
                let (e, y) = self.entries[n];
                let s = &self.state;
                let (c, d, r) = (s.country[e.sender], s.country[e.receiver], s.time[e.time]);
                for (k, lw) in logw.iter_mut().enumerate() {
                    *lw += y as f64 * lc[s.core.index(c, d, k, r)];
                }
            }
            self.state.action[a] = sample_log_categorical(&mut logw, rng)?;
        }
        Ok(())
    }

    fn update_times(&mut self, rng: &mut RngStream) -> Result<()> {
        let r_n = self.state.core.regimes();
        let lc = self.ln_core();
        let x = self.state.community_mass(&self.held);
        let h = self.regime_exposure(&x);
        let mut logw = vec![0.0; r_n];
        for t in 0..self.state.time.len() {
            let w = self.state.time_degree[t];
            for (r, lw) in logw.iter_mut().enumerate() {
                *lw = -w * h[r];
            }
            for &n in &self.by_time[t] {
                let (e, y) = self.entries[n];
                let s = &self.state;
                let (c, d, k) = (s.country[e.sender], s.country[e.receiver], s.action[e.action]);
                for (r, lw) in logw.iter_mut().enumerate() {
                    *lw += y as f64 * lc[s.core.index(c, d, k, r)];
                }
            }
            self.state.time[t] = sample_log_categorical(&mut logw, rng)?;
        }
        Ok(())
    }

    fn update_core(&mut self, rng: &mut RngStream) -> Result<()> {
        let s = &self.state;
        let e0 = s.hyper.eps0;
        let mut counts = vec![0u64; s.core.as_slice().len()];
        for (e, y) in &self.entries {
            let i = s.core.index(s.country[e.sender], s.country[e.receiver], s.action[e.action], s.time[e.time]);
            counts[i] += y;
        }
        let x = s.community_mass(&[]);
        let (f, p) = (s.topic_mass(), s.regime_mass());
        let c2 = x.as_slice().len();
        for (idx, n) in counts.into_iter().enumerate() {
            let (kr, cd) = (idx / c2, idx % c2);
            let (k, r) = (kr % f.len(), kr / f.len());
            let expo = x.as_slice()[cd] * f[k] * p[r];
            self.state.core.as_mut_slice()[idx] = sample_gamma(e0 + n as f64, e0 + expo, rng)?;
        }
        Ok(())
    }

    fn update_country_degrees(&mut self, rng: &mut RngStream) -> Result<()> {
        let c_n = self.state.core.communities();
        let e0 = self.state.hyper.eps0;
        let h = self.symmetric_rate();
        let mut mass = GpirmState::group_mass(&self.state.country, &self.state.country_degree, c_n);
        for i in 0..self.state.country.len() {
            let c = self.state.country[i];
            mass[c] -= self.state.country_degree[i];
            let expo: f64 = (0..c_n).map(|d| mass[d].max(0.0) * h.get(c, d)).sum();
            let m: u64 = self.by_sender[i]
                .iter()
                .chain(&self.by_receiver[i])
                .map(|&n| self.entries[n].1)
                .sum();
            let w = sample_gamma(e0 + m as f64, e0 + expo, rng)?;
            self.state.country_degree[i] = w;
            mass[c] += w;
        }
        Ok(())
    }

    fn update_action_degrees(&mut self, rng: &mut RngStream) -> Result<()> {
        let e0 = self.state.hyper.eps0;
        let x = self.state.community_mass(&[]);
        let g = self.topic_exposure(&x);
        for a in 0..self.state.action.len() {
            let m: u64 = self.by_action[a].iter().map(|&n| self.entries[n].1).sum();
            self.state.action_degree[a] = sample_gamma(e0 + m as f64, e0 + g[self.state.action[a]], rng)?;
        }
        Ok(())
    }

    fn update_time_degrees(&mut self, rng: &mut RngStream) -> Result<()> {
        let e0 = self.state.hyper.eps0;
        let x = self.state.community_mass(&self.held);
        let h = self.regime_exposure(&x);
        for t in 0..self.state.time.len() {
            let m: u64 = self.by_time[t].iter().map(|&n| self.entries[n].1).sum();
            self.state.time_degree[t] = sample_gamma(e0 + m as f64, e0 + h[self.state.time[t]], rng)?;
        }
        Ok(())
    }
}

impl Sampler for GpirmChain {
    fn kind(&self) -> ModelKind {
        if self.state.degree_corrected {
            ModelKind::Dcgpirm
        } else {
            ModelKind::Gpirm
        }
    }

    fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        if !self.test_phase {
            self.update_countries(rng)?;
            self.update_actions(rng)?;
        }
        self.update_times(rng)?;
        if self.test_phase {
            if self.state.degree_corrected {
                self.update_time_degrees(rng)?;
            }
            return Ok(());
        }
        self.update_core(rng)?;
        if self.state.degree_corrected {
            self.update_country_degrees(rng)?;
            self.update_action_degrees(rng)?;
            self.update_time_degrees(rng)?;
        }
        Ok(())
    }

    fn rate(&self, i: usize, j: usize, a: usize, t: usize) -> f64 {
        self.state.rate(i, j, a, t)
    }

    fn log_likelihood(&self) -> f64 {
        self.state.log_likelihood(&self.data)
    }

    fn trace(&self) -> TraceRecord {
        let occupied = |groups: &[usize], n: usize| {
            let mut seen = vec![false; n];
            for &g in groups {
                seen[g] = true;
            }
            seen.iter().filter(|&&b| b).count()
        };
        let s = &self.state;
        TraceRecord {
            model: self.kind(),
            log_likelihood: self.log_likelihood(),
            effective_dims: Some((
                occupied(&s.country, s.core.communities()),
                occupied(&s.action, s.core.topics()),
                occupied(&s.time, s.core.regimes()),
            )),
            delta: None,
            zeta: None,
        }
    }

    fn clamp_for_test(&mut self, observed: CountTensor, held: &[(usize, usize)], rng: &mut RngStream) -> Result<()> {
        let d = observed.dims();
        if d.countries != self.state.country.len() || d.actions != self.state.action.len() {
            return Err(Error::DimensionMismatch("test tensor does not match model".into()));
        }
        let r_n = self.state.core.regimes();
        let e0 = self.state.hyper.eps0;
        self.state.time = (0..d.steps).map(|_| rng.below(r_n)).collect();
        self.state.time_degree = if self.state.degree_corrected {
            gamma_vec(d.steps, e0, e0, rng)?
        } else {
            vec![1.0; d.steps]
        };
        self.index(observed);
        self.held = held.to_vec();
        self.test_phase = true;
        Ok(())
    }

    fn arrays(&self) -> Vec<NamedArray> {
        let s = &self.state;
        let d = s.dims();
        let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        vec![
            NamedArray::vector("country_group", &as_f64(&s.country)),
            NamedArray::vector("action_group", &as_f64(&s.action)),
            NamedArray::vector("time_group", &as_f64(&s.time)),
            NamedArray::new(
                "core",
                &[d.regimes, d.topics, d.communities, d.communities],
                s.core.as_slice().to_vec(),
            ),
            NamedArray::vector("country_degree", &s.country_degree),
            NamedArray::vector("action_degree", &s.action_degree),
            NamedArray::vector("time_degree", &s.time_degree),
            NamedArray::vector("hyper", &[s.hyper.eps0, s.hyper.gamma0]),
        ]
    }
}
