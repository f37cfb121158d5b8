//! Split and merge moves for the Poisson-gamma model.
//!
//! Births cannot undo a column that has absorbed two real factors: the
//! merged column already explains most of both, so a fresh column gains
//! little until the old one shrinks, which single-entry updates will not do.
//! A split replaces column `k` by `k` and an empty column `c` and
//! reallocates `k`'s users among them; a merge is its reverse.
//!
//! Each move starts from an ordered pair of anchor points chosen uniformly.
//! A split pins the anchors to opposite sides and allocates the remaining
//! users one at a time in a fixed order, scoring each against running
//! estimates of the two factors; factors are then drawn from gamma
//! proposals built from the counts credited to each side. Like the birth
//! move these run after compaction, on the target with the slice variable
//! integrated out.

use rand::Rng;

use crate::dist::rng::gamma;
use crate::dist::StirlingTable;
use crate::error::Result;
use crate::likelihood::pgm::{gamma_ln_pdf, GammaProposal, RowRates};
use crate::likelihood::PgmParams;
use crate::rhbp::prior::source_list;
use crate::rhbp::{compact_state, sample_stick_marginal, Assignments, Concentrations, InactiveTail, StickState};

use super::birth::{column_log_prior, MIN_INCLUDE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitMergeReport {
    pub splits: usize,
    pub merges: usize,
}

/// A user of the columns involved, with its rates from all other columns.
struct User {
    j: usize,
    i: usize,
    base: Vec<f64>,
}

/// One column: factor plus per-user weights.
struct Joined {
    phi: Vec<f64>,
    w: Vec<f64>,
}

/// Two columns: factors plus per-user weights where switched on.
struct Parted {
    phi: [Vec<f64>; 2],
    w: Vec<[Option<f64>; 2]>,
}

/// Credited counts and total weight of the users on one side.
#[derive(Clone)]
struct Side {
    counts: Vec<f64>,
    weight: f64,
}

impl Side {
    fn new(n_features: usize) -> Self {
        Self { counts: vec![0.0; n_features], weight: 0.0 }
    }

    fn add(&mut self, y: &[(usize, f64)], w: f64, frac: f64) {
        for &(m, v) in y {
            self.counts[m] += frac * v;
        }
        self.weight += frac * w;
    }

    fn estimate(&self, a: f64, b: f64) -> Vec<f64> {
        self.counts.iter().map(|&s| (a + s) / (b + self.weight)).collect()
    }

    fn proposal(&self, a: f64, b: f64) -> Vec<GammaProposal> {
        self.counts.iter().map(|&s| GammaProposal { shape: a + s, rate: b + self.weight }).collect()
    }
}

fn ln_pdf_all(q: &[GammaProposal], x: &[f64]) -> f64 {
    q.iter().zip(x).map(|(g, &v)| g.ln_pdf(v)).sum()
}

fn draw_all<R: Rng + ?Sized>(q: &[GammaProposal], rng: &mut R) -> Result<Vec<f64>> {
    q.iter().map(|g| g.sample(rng)).collect()
}

struct Ctx<'a> {
    sparse: &'a [Vec<Vec<(usize, u64)>>],
    n_sources: usize,
    n_features: usize,
    a_phi: f64,
    b_phi: f64,
    a_w: f64,
    b_w: &'a [f64],
}

impl Ctx<'_> {
    fn row(&self, u: &User) -> RowRates<'_> {
        RowRates { counts: &self.sparse[u.j][u.i], rates: u.base.clone() }
    }

    /// Counts of `u` credited to a contribution `contrib` on top of its base.
    fn credited(&self, u: &User, contrib: &[f64]) -> Vec<(usize, f64)> {
        self.sparse[u.j][u.i].iter().map(|&(m, x)| (m, x as f64 * contrib[m] / (u.base[m] + contrib[m]))).collect()
    }

    /// Allocation probabilities over {first only, second only, both}.
    fn options(&self, u: &User, phi: &[Vec<f64>; 2], sums: [f64; 2]) -> [f64; 3] {
        let b_w = self.b_w[u.j];
        let rr = self.row(u);
        let q0 = rr.weight_proposal(&phi[0], sums[0], self.a_w, b_w);
        let q1 = rr.weight_proposal(&phi[1], sums[1], self.a_w, b_w);
        let (m0, m1) = (q0.shape / q0.rate, q1.shape / q1.rate);
        let g0 = rr.gain(&phi[0], sums[0], m0);
        let g1 = rr.gain(&phi[1], sums[1], m1);
        let mut both = self.row(u);
        both.apply(&phi[0], m0, true, 0.0);
        let qb = both.weight_proposal(&phi[1], sums[1], self.a_w, b_w);
        let g01 = g0 + both.gain(&phi[1], sums[1], qb.shape / qb.rate);
        let g = [g0, g1, g01];
        let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = g.map(|x| (x - top).exp());
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x = (*x / total).max(MIN_INCLUDE));
        let total: f64 = p.iter().sum();
        p.map(|x| x / total)
    }

    /// Sequential allocation of `users` to {first, second, both}: anchors
    /// pinned to the first and second side, the rest in index order, each
    /// scored against the running side estimates. `choose` picks an option
    /// from the probabilities. Returns the options, their log-probability,
    /// and the final sides.
    fn allocate(
        &self,
        users: &[User],
        credit: &[(Vec<(usize, f64)>, f64)],
        anchors: (usize, usize),
        choose: &mut dyn FnMut(usize, [f64; 3]) -> usize,
    ) -> (Vec<usize>, f64, [Side; 2]) {
        let mut sides = [Side::new(self.n_features), Side::new(self.n_features)];
        let mut opts = vec![0; users.len()];
        let mut ln_p = 0.0;
        opts[anchors.1] = 1;
        sides[0].add(&credit[anchors.0].0, credit[anchors.0].1, 1.0);
        sides[1].add(&credit[anchors.1].0, credit[anchors.1].1, 1.0);
        for (n, u) in users.iter().enumerate() {
            if n == anchors.0 || n == anchors.1 {
                continue;
            }
            let est = [sides[0].estimate(self.a_phi, self.b_phi), sides[1].estimate(self.a_phi, self.b_phi)];
            let sums = [est[0].iter().sum(), est[1].iter().sum()];
            let probs = self.options(u, &est, sums);
            let o = choose(n, probs);
            ln_p += probs[o].ln();
            opts[n] = o;
            let (y, w) = &credit[n];
            match o {
                0 | 1 => sides[o].add(y, *w, 1.0),
                _ => sides.iter_mut().for_each(|s| s.add(y, *w, 0.5)),
            }
        }
        (opts, ln_p, sides)
    }

    /// Credit of each user to the single column of `joined`.
    fn split_credit(&self, users: &[User], joined: &Joined) -> Vec<(Vec<(usize, f64)>, f64)> {
        users
            .iter()
            .zip(&joined.w)
            .map(|(u, &w)| {
                let contrib: Vec<f64> = joined.phi.iter().map(|f| w * f).collect();
                (self.credited(u, &contrib), w)
            })
            .collect()
    }

    /// Merge proposal for the factor, from the counts credited to both
    /// columns of `parted`.
    fn merge_proposal(&self, users: &[User], parted: &Parted) -> Vec<GammaProposal> {
        let mut side = Side::new(self.n_features);
        for (u, w) in users.iter().zip(&parted.w) {
            let mut contrib = vec![0.0; self.n_features];
            let mut scale = 0.0;
            for (s, wi) in w.iter().enumerate() {
                if let Some(wi) = *wi {
                    scale += wi;
                    contrib.iter_mut().zip(&parted.phi[s]).for_each(|(c, f)| *c += wi * f);
                }
            }
            side.add(&self.credited(u, &contrib), scale, 1.0);
        }
        side.proposal(self.a_phi, self.b_phi)
    }
}

fn option_index(w: &[Option<f64>; 2]) -> usize {
    match w {
        [Some(_), None] => 0,
        [None, Some(_)] => 1,
        _ => 2,
    }
}

fn draw_split<R: Rng + ?Sized>(ctx: &Ctx<'_>, users: &[User], joined: &Joined, anchors: (usize, usize), rng: &mut R) -> Result<Parted> {
    let credit = ctx.split_credit(users, joined);
    let (opts, _, sides) = ctx.allocate(users, &credit, anchors, &mut |_, p| {
        let r: f64 = rng.random();
        if r < p[0] {
            0
        } else if r < p[0] + p[1] {
            1
        } else {
            2
        }
    });
    let phi = [draw_all(&sides[0].proposal(ctx.a_phi, ctx.b_phi), rng)?, draw_all(&sides[1].proposal(ctx.a_phi, ctx.b_phi), rng)?];
    let sums = [phi[0].iter().sum(), phi[1].iter().sum()];
    let mut w = Vec::with_capacity(users.len());
    for (u, &opt) in users.iter().zip(&opts) {
        let b_w = ctx.b_w[u.j];
        let mut rr = ctx.row(u);
        let mut wi = [None, None];
        if opt != 1 {
            let w0 = rr.weight_proposal(&phi[0], sums[0], ctx.a_w, b_w).sample(rng)?;
            rr.apply(&phi[0], w0, true, 0.0);
            wi[0] = Some(w0);
        }
        if opt != 0 {
            wi[1] = Some(rr.weight_proposal(&phi[1], sums[1], ctx.a_w, b_w).sample(rng)?);
        }
        w.push(wi);
    }
    Ok(Parted { phi, w })
}

fn draw_merge<R: Rng + ?Sized>(ctx: &Ctx<'_>, users: &[User], parted: &Parted, rng: &mut R) -> Result<Joined> {
    let phi = draw_all(&ctx.merge_proposal(users, parted), rng)?;
    let sum: f64 = phi.iter().sum();
    let w = users.iter().map(|u| ctx.row(u).weight_proposal(&phi, sum, ctx.a_w, ctx.b_w[u.j]).sample(rng)).collect::<Result<_>>()?;
    Ok(Joined { phi, w })
}

/// `ln π(parted) - ln π(joined)`, `ln q(parted | joined)` and
/// `ln q(joined | parted)`, without the move-selection terms.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Ctx<'_>,
    users: &[User],
    joined: &Joined,
    parted: &Parted,
    anchors: (usize, usize),
    betas: [f64; 2],
    conc: &Concentrations,
    n_points: &[usize],
) -> (f64, f64, f64) {
    let mut counts = [vec![0; ctx.n_sources], vec![0; ctx.n_sources], vec![0; ctx.n_sources]];
    for (u, w) in users.iter().zip(&parted.w) {
        counts[2][u.j] += 1;
        for side in 0..2 {
            if w[side].is_some() {
                counts[side][u.j] += 1;
            }
        }
    }
    let zeros = vec![0; ctx.n_sources];
    let mut target = column_log_prior(betas[0], &counts[0], conc, n_points) + column_log_prior(betas[1], &counts[1], conc, n_points)
        - column_log_prior(betas[0], &counts[2], conc, n_points)
        - column_log_prior(betas[1], &zeros, conc, n_points);
    let prior_phi = |phi: &[f64]| phi.iter().map(|&x| gamma_ln_pdf(x, ctx.a_phi, ctx.b_phi)).sum::<f64>();
    target += prior_phi(&parted.phi[0]) + prior_phi(&parted.phi[1]) - prior_phi(&joined.phi);

    let opts: Vec<usize> = parted.w.iter().map(option_index).collect();
    let credit = ctx.split_credit(users, joined);
    let (_, ln_alloc, sides) = ctx.allocate(users, &credit, anchors, &mut |n, _| opts[n]);
    let mut q_split = ln_alloc
        + ln_pdf_all(&sides[0].proposal(ctx.a_phi, ctx.b_phi), &parted.phi[0])
        + ln_pdf_all(&sides[1].proposal(ctx.a_phi, ctx.b_phi), &parted.phi[1]);
    let mut q_merge = ln_pdf_all(&ctx.merge_proposal(users, parted), &joined.phi);

    let sums = [parted.phi[0].iter().sum::<f64>(), parted.phi[1].iter().sum::<f64>()];
    let joined_sum: f64 = joined.phi.iter().sum();
    for ((u, w), &wj) in users.iter().zip(&parted.w).zip(&joined.w) {
        let b_w = ctx.b_w[u.j];
        let rr = ctx.row(u);
        target -= gamma_ln_pdf(wj, ctx.a_w, b_w) + rr.gain(&joined.phi, joined_sum, wj);
        q_merge += rr.weight_proposal(&joined.phi, joined_sum, ctx.a_w, b_w).ln_pdf(wj);
        let mut rr = ctx.row(u);
        for side in 0..2 {
            if let Some(wi) = w[side] {
                target += gamma_ln_pdf(wi, ctx.a_w, b_w) + rr.gain(&parted.phi[side], sums[side], wi);
                q_split += rr.weight_proposal(&parted.phi[side], sums[side], ctx.a_w, b_w).ln_pdf(wi);
                rr.apply(&parted.phi[side], wi, true, 0.0);
            }
        }
    }
    (target, q_split, q_merge)
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    log_a >= 0.0 || rng.random::<f64>().ln() < log_a
}

/// Runs `attempts` moves, each a split or a merge with equal probability.
#[allow(clippy::too_many_arguments)]
pub fn pgm_split_merge<R: Rng + ?Sized>(
    sparse: &[Vec<Vec<(usize, u64)>>],
    n_points: &[usize],
    sticks: &mut StickState,
    assign: &mut Assignments,
    conc: &Concentrations,
    p: &mut PgmParams,
    table: &StirlingTable<f64>,
    attempts: usize,
    rng: &mut R,
) -> Result<SplitMergeReport> {
    let mut report = SplitMergeReport::default();
    let points: Vec<(usize, usize)> = n_points.iter().enumerate().flat_map(|(j, &n)| (0..n).map(move |i| (j, i))).collect();
    if points.len() < 2 {
        return Ok(report);
    }
    let n_features = p.phi.first().map_or(0, Vec::len);
    let sources = source_list(&conc.alpha, assign);
    let tail = InactiveTail::new(&sources, sticks.tau0, table)?;
    let mut rates: Vec<Vec<Vec<f64>>> =
        (0..n_points.len()).map(|j| (0..n_points[j]).map(|i| p.rates(j, i, &assign.sources[j])).collect()).collect();

    for _ in 0..attempts {
        let a = rng.random_range(0..points.len());
        let b = (a + 1 + rng.random_range(0..points.len() - 1)) % points.len();
        let (pa, pb) = (points[a], points[b]);
        let kd = sticks.k_dagger();
        let on = |(j, i): (usize, usize), k: usize| assign.sources[j].get(i, k);
        let active: Vec<usize> = (0..kd).filter(|&c| assign.is_active(c)).collect();
        let n_empty = kd - active.len();
        let shared: Vec<usize> = active.iter().copied().filter(|&k| on(pa, k) && on(pb, k)).collect();
        let only_a: Vec<usize> = active.iter().copied().filter(|&k| on(pa, k) && !on(pb, k)).collect();
        let only_b: Vec<usize> = active.iter().copied().filter(|&k| !on(pa, k) && on(pb, k)).collect();
        let b_w = p.hyper.b_w.clone();
        let ctx =
            Ctx { sparse, n_sources: n_points.len(), n_features, a_phi: p.hyper.a_phi, b_phi: p.hyper.b_phi, a_w: p.hyper.a_w, b_w: &b_w };
        // Users of the columns `cols` with those columns' contributions
        // removed, and the positions of the two anchors among them.
        let gather = |cols: &[usize], rates: &[Vec<Vec<f64>>]| -> (Vec<User>, (usize, usize)) {
            let mut out = Vec::new();
            let mut pos = (0, 0);
            for &(j, i) in &points {
                let used: Vec<usize> = cols.iter().copied().filter(|&k| assign.sources[j].get(i, k)).collect();
                if used.is_empty() {
                    continue;
                }
                if (j, i) == pa {
                    pos.0 = out.len();
                }
                if (j, i) == pb {
                    pos.1 = out.len();
                }
                let mut base = rates[j][i].clone();
                for &k in &used {
                    let w = p.w[j][k][i];
                    base.iter_mut().zip(&p.phi[k]).for_each(|(r, f)| *r = (*r - w * f).max(p.lambda[j]));
                }
                out.push(User { j, i, base });
            }
            (out, pos)
        };

        if rng.random::<bool>() {
            if shared.is_empty() || n_empty == 0 {
                continue;
            }
            let k = shared[rng.random_range(0..shared.len())];
            let c = (0..kd).filter(|&c| !assign.is_active(c)).nth(rng.random_range(0..n_empty)).expect("empty column");
            let (users, anchors) = gather(&[k], &rates);
            let joined = Joined { phi: p.phi[k].clone(), w: users.iter().map(|u| p.w[u.j][k][u.i]).collect() };
            let parted = draw_split(&ctx, &users, &joined, anchors, rng)?;
            let (target, q_split, q_merge) =
                evaluate(&ctx, &users, &joined, &parted, anchors, [sticks.betas[k], sticks.betas[c]], conc, n_points);
            let sel_fwd = -(shared.len() as f64).ln() - (n_empty as f64).ln();
            let sel_rev = -(((only_a.len() + 1) * (only_b.len() + 1)) as f64).ln();
            if accept(target + sel_rev + q_merge - sel_fwd - q_split, rng) {
                for (u, w) in users.iter().zip(&parted.w) {
                    let (j, i) = (u.j, u.i);
                    let mut r = u.base.clone();
                    for (side, col) in [k, c].into_iter().enumerate() {
                        assign.sources[j].set(i, col, w[side].is_some());
                        match w[side] {
                            Some(wi) => {
                                p.w[j][col][i] = wi;
                                r.iter_mut().zip(&parted.phi[side]).for_each(|(x, f)| *x += wi * f);
                            }
                            None if col == k => p.w[j][k][i] = gamma(rng, ctx.a_w, b_w[j])?.max(f64::MIN_POSITIVE),
                            None => {}
                        }
                    }
                    rates[j][i] = r;
                }
                let [phi0, phi1] = parted.phi;
                p.phi[k] = phi0;
                p.phi[c] = phi1;
                if c + 1 == kd {
                    let draw = sample_stick_marginal(sticks.betas[c], &sources, &tail, rng)?;
                    sticks.betas.push(draw.value);
                    assign.push_zero_column();
                    p.push_prior_column(n_features, n_points, rng)?;
                }
                report.splits += 1;
            }
        } else {
            if only_a.is_empty() || only_b.is_empty() {
                continue;
            }
            let k = only_a[rng.random_range(0..only_a.len())];
            let c = only_b[rng.random_range(0..only_b.len())];
            // Emptying the last active column drops the trailing stick; only
            // allowed when exactly one stick goes, as a split can rebuild it.
            let is_last = active.last() == Some(&c);
            if is_last && c > 0 && !assign.is_active(c - 1) {
                continue;
            }
            let empty_after = if is_last { n_empty } else { n_empty + 1 };
            let (users, anchors) = gather(&[k, c], &rates);
            let parted = Parted {
                phi: [p.phi[k].clone(), p.phi[c].clone()],
                w: users.iter().map(|u| [k, c].map(|col| assign.sources[u.j].get(u.i, col).then(|| p.w[u.j][col][u.i]))).collect(),
            };
            let joined = draw_merge(&ctx, &users, &parted, rng)?;
            let (target, q_split, q_merge) =
                evaluate(&ctx, &users, &joined, &parted, anchors, [sticks.betas[k], sticks.betas[c]], conc, n_points);
            let sel_fwd = -((only_a.len() * only_b.len()) as f64).ln();
            let sel_rev = -((shared.len() + 1) as f64).ln() - (empty_after as f64).ln();
            if accept(-target + sel_rev + q_split - sel_fwd - q_merge, rng) {
                for (u, &wj) in users.iter().zip(&joined.w) {
                    let (j, i) = (u.j, u.i);
                    assign.sources[j].set(i, k, true);
                    assign.sources[j].set(i, c, false);
                    p.w[j][k][i] = wj;
                    p.w[j][c][i] = gamma(rng, ctx.a_w, b_w[j])?.max(f64::MIN_POSITIVE);
                    let mut r = u.base.clone();
                    r.iter_mut().zip(&joined.phi).for_each(|(x, f)| *x += wj * f);
                    rates[j][i] = r;
                }
                p.phi[k] = joined.phi;
                p.phi[c] = (0..n_features).map(|_| gamma(rng, ctx.a_phi, ctx.b_phi)).collect::<Result<_>>()?;
                let keep = compact_state(sticks, assign)?;
                p.truncate(keep);
                report.merges += 1;
            }
        }
    }
    Ok(report)
}
