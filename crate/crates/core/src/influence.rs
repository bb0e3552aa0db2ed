//! The influence function `I(C) = Σ_u [1 − Π_{b∈C} (1 − p(b,u))]` and its
//! marginal gains.
//!
//! [`naive_influence`] evaluates the formula user by user and is kept as the
//! reference. [`ResidualState`] tracks `r_u = Π_{b∈C}(1 − p(b,u))` for every
//! user so a marginal gain costs one pass over the slot's exposure list.

use crate::corpus::ExposureModel;
use crate::error::{Error, Result};

/// Reference evaluation: for every user, multiply `1 − p(b,u)` over `slots`
/// by looking each probability up. Duplicate indices are ignored.
pub fn naive_influence(model: &ExposureModel, slots: &[usize]) -> Result<f64> {
    let slots = model.normalize(slots)?;
    let mut total = 0.0;
    for user in 0..model.n_users() as u32 {
        let miss: f64 = slots.iter().map(|&b| 1.0 - model.probability(b, user)).product();
        total += 1.0 - miss;
    }
    Ok(total)
}

/// Fast evaluation through a dense residual vector. Same value as
/// [`naive_influence`] up to rounding.
pub fn evaluate(model: &ExposureModel, slots: &[usize]) -> Result<f64> {
    let slots = model.normalize(slots)?;
    let mut residual = vec![1.0; model.n_users()];
    for &b in &slots {
        for e in model.exposures(b) {
            residual[e.user as usize] *= 1.0 - e.p;
        }
    }
    Ok(residual.iter().map(|r| 1.0 - r).sum())
}

/// `I({b}) = Σ_u p(b,u)`.
pub fn singleton_influence(model: &ExposureModel, b: usize) -> f64 {
    model.exposures(b).iter().map(|e| e.p).sum()
}

/// Per-user residual products for a growing selection.
#[derive(Clone, Debug)]
pub struct ResidualState<'m> {
    model: &'m ExposureModel,
    selected: Vec<usize>,
    member: Vec<bool>,
    residual: Vec<f64>,
    total: f64,
}

/// Empty selection: every residual is 1 and the influence is 0.
pub fn init_state(model: &ExposureModel) -> ResidualState<'_> {
    ResidualState::new(model)
}

impl<'m> ResidualState<'m> {
    pub fn new(model: &'m ExposureModel) -> Self {
        Self {
            model,
            selected: Vec::new(),
            member: vec![false; model.n_slots()],
            residual: vec![1.0; model.n_users()],
            total: 0.0,
        }
    }

    /// State with every slot of `ground` committed (duplicates ignored).
    pub fn over(model: &'m ExposureModel, ground: &[usize]) -> Result<Self> {
        let mut s = Self::new(model);
        for b in model.normalize(ground)? {
            for e in model.exposures(b) {
                s.residual[e.user as usize] *= 1.0 - e.p;
            }
            s.member[b] = true;
            s.selected.push(b);
        }
        s.total = s.residual.iter().map(|r| 1.0 - r).sum();
        Ok(s)
    }

    pub fn model(&self) -> &'m ExposureModel {
        self.model
    }

    /// Committed slots, in commit order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, b: usize) -> bool {
        self.member.get(b).copied().unwrap_or(false)
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn total_influence(&self) -> f64 {
        self.total
    }

    /// `Δ(b|C) = Σ_{u exposed to b} p(b,u) · r_u`; leaves the state untouched.
    pub fn marginal_gain(&self, b: usize) -> Result<f64> {
        self.model.check_slot(b)?;
        if self.member[b] {
            return Err(Error::arg(format!("slot {b} is already selected")));
        }
        Ok(self.gain_unchecked(b))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, b: usize) -> f64 {
        self.model.exposures(b).iter().map(|e| e.p * self.residual[e.user as usize]).sum()
    }

    /// Adds `b` to the selection and returns its marginal gain.
    pub fn commit(&mut self, b: usize) -> Result<f64> {
        let gain = self.marginal_gain(b)?;
        for e in self.model.exposures(b) {
            self.residual[e.user as usize] *= 1.0 - e.p;
        }
        self.member[b] = true;
        self.selected.push(b);
        self.total += gain;
        Ok(gain)
    }

    /// `I(u | G∖{u}) = I(G) − I(G∖{u})` where `G` is the committed set.
    ///
    /// Computed as `Σ_j p(u,j) · r_j / (1 − p(u,j))`; the division is safe
    /// because stored probabilities never reach 1.
    pub fn deletion_marginal(&self, u: usize) -> Result<f64> {
        self.model.check_slot(u)?;
        if !self.member[u] {
            return Err(Error::arg(format!("slot {u} is not in the conditioning set")));
        }
        Ok(self.model.exposures(u).iter().map(|e| e.p * self.residual[e.user as usize] / (1.0 - e.p)).sum())
    }
}

/// `Δ(b|C)` against `state`.
pub fn marginal_gain(state: &ResidualState<'_>, b: usize) -> Result<f64> {
    state.marginal_gain(b)
}

pub fn commit(state: &mut ResidualState<'_>, b: usize) -> Result<f64> {
    state.commit(b)
}

/// `I(u | G∖{u})` for the ground set held by `state`.
pub fn deletion_marginal(state: &ResidualState<'_>, u: usize) -> Result<f64> {
    state.deletion_marginal(u)
}

/// Division-free `I(u | G∖{u})`: recomputes `I(G)` and `I(G∖{u})` directly.
pub fn deletion_marginal_by_recompute(model: &ExposureModel, ground: &[usize], u: usize) -> Result<f64> {
    let ground = model.normalize(ground)?;
    if ground.binary_search(&u).is_err() {
        return Err(Error::arg(format!("slot {u} is not in the conditioning set")));
    }
    let rest: Vec<usize> = ground.iter().copied().filter(|&b| b != u).collect();
    Ok(naive_influence(model, &ground)? - naive_influence(model, &rest)?)
}

/// `I(d|u) = I({d,u}) − I({u}) = Σ_{j exposed to d} p(d,j)·(1 − p(u,j))`.
pub fn pair_conditional(model: &ExposureModel, d: usize, u: usize) -> Result<f64> {
    model.check_slot(d)?;
    model.check_slot(u)?;
    if d == u {
        return Err(Error::arg(format!("pair conditional needs distinct slots, got {d} twice")));
    }
    let (ds, us) = (model.exposures(d), model.exposures(u));
    let mut j = 0;
    let mut total = 0.0;
    for e in ds {
        while j < us.len() && us[j].user < e.user {
            j += 1;
        }
        let q = if j < us.len() && us[j].user == e.user { us[j].p } else { 0.0 };
        total += e.p * (1.0 - q);
    }
    Ok(total)
}
