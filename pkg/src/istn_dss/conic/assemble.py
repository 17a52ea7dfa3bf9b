"""Assembly of the convexified joint and refinement subproblems.

Every candidate transmission (server, UE, subchannel, RB-time) is a *link*.
Link kinds:

``D``   terrestrial link on a D resource block
``MT``  terrestrial link on an M resource block
``MS``  satellite link on an M resource block
``S``   satellite link on an S resource block

Units inside the program: power W, queues Mbit, rates Mbit/s, log arguments
normalized by the victim's noise power.  D service rows are written in kbit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..grid import BwpPlan, GridConfig
from ..phy import LN2, AllocationState, PhyParams, dispersion_penalty
from ..queueing import QueueState, SteeringWeights, TrafficTrace
from ..sca import f_apx, f_apx_upper_coeffs
from .program import ConicProgram, SubproblemSolution

KINDS = ("D", "MT", "MS", "S")
K_D, K_MT, K_MS, K_S = range(4)
_FIELD = {K_D: "p_d", K_MT: "p_m", K_MS: "p0_m", K_S: "p0_s"}
_SERVICE = {K_D: "D", K_MT: "M", K_MS: "M", K_S: "S"}
MBIT = 1e6
KBIT = 1e3


@dataclass
class PlanningInputs:
    """Everything a planner sees for one cycle (bits, W, linear gains)."""

    grid: GridConfig
    phy: PhyParams
    chans: object  # ChannelSet
    traffic: TrafficTrace
    q0: QueueState
    caps: Dict[str, float]
    n_ap: int
    k: Dict[str, int]


@dataclass
class ExpansionPoint:
    """Powers, interference-log and sqrt-count expansion values.

    ``eta`` maps a power field name to a tensor shaped like that field (values
    are normalized logs ``log(1 + I / sigma^2)``); ``zeta`` has shape
    ``(L, K_D, N_SF)``.
    """

    alloc: AllocationState
    eta: Dict[str, np.ndarray]
    zeta: np.ndarray

    def copy(self) -> "ExpansionPoint":
        return ExpansionPoint(self.alloc.copy(), {k: v.copy() for k, v in self.eta.items()}, self.zeta.copy())


@dataclass
class AssemblyOptions:
    epsilon: float = 1e-4
    kappa: float = 1.0
    interference: bool = True
    steering: Optional[SteeringWeights] = None  # fixed steering when given
    bwp: Optional[BwpPlan] = None               # restrict links to this plan when given
    elastic: bool = False
    penalty: float = 1e3
    freeze_tol: float = 1e-10
    slope_floor: float = 1e-9
    # refinement scope
    subframe: Optional[int] = None
    tn_support: Optional[AllocationState] = None  # links allowed to carry TN power
    fixed_sat: Optional[AllocationState] = None   # frozen satellite decisions


def _group_pairs(keys: np.ndarray):
    """All ordered (i, j) pairs of positions sharing a key, i != j excluded later."""
    if keys.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    sizes = np.diff(np.r_[starts, sk.size])
    gid = np.repeat(np.arange(starts.size), sizes)
    m = sizes[gid]                       # group size for each element
    i_pos = np.repeat(np.arange(sk.size), m)
    base = np.repeat(starts[gid], m)
    within = np.arange(i_pos.size) - np.repeat(np.cumsum(m) - m, m)
    j_pos = base + within
    return order[i_pos], order[j_pos]


def _groups(keys: np.ndarray):
    """Row id per element for elements sharing a key (dense 0..R-1)."""
    _, inv = np.unique(keys, return_inverse=True)
    return inv.astype(np.int64)


class CycleProblem:
    """Static link structure for one cycle; builds one program per SCA iterate."""

    def __init__(self, inputs: PlanningInputs, opts: AssemblyOptions):
        self.inp = inputs
        self.opts = opts
        g = inputs.grid
        self.grid = g
        self._enumerate()
        self._pairs()
        self._rows()

    # ------------------------------------------------------------------
    # static structure

    def _enumerate(self):
        inp, g, o = self.inp, self.grid, self.opts
        L, k = inp.n_ap, inp.k
        ch = inp.chans
        refine = o.subframe is not None
        parts = []
        for kind in range(4):
            x = _SERVICE[kind]
            V, N = g.cap(x), g.n_rb_times(x)
            if kind in (K_D, K_MT):
                shape = (L, k[x], V, N)
            else:
                shape = (k[x], V, N)
            if 0 in shape:
                continue
            mask = np.ones(shape, dtype=bool)
            if kind in (K_D, K_MT):
                mask &= g.tn_dl_mask(x)[None, None, None, :]
            if o.bwp is not None:
                act = o.bwp.active[x]
                mask &= (act[None, None, :, None] if mask.ndim == 4 else act[None, :, None])
            if refine:
                sf = g.subframe_of(x) == o.subframe
                mask &= sf.reshape((1,) * (mask.ndim - 1) + (-1,))
                if kind in (K_D, K_MT):
                    mask &= getattr(o.tn_support, {K_D: "a_d", K_MT: "a_m"}[kind])
                elif kind == K_MS:
                    mask &= o.fixed_sat.b_m
                else:
                    mask[:] = False  # S links do not interact with terrestrial power
            idx = np.argwhere(mask)
            if idx.size == 0:
                continue
            flat = np.ravel_multi_index(idx.T, shape)
            n = idx[:, -1]
            v = idx[:, -2]
            ue = idx[:, -3]
            srv = idx[:, 0] if kind in (K_D, K_MT) else np.full(idx.shape[0], -1)
            f = g.frame_of(x)[n]
            noise = ch.noise[x]
            if kind in (K_D, K_MT):
                gain = ch.tn[x][srv, ue, v, f]
            else:
                gain = ch.sat[x][ue, v, f]
            fixed = np.full(idx.shape[0], np.nan)
            if refine and kind == K_MS:
                fixed = o.fixed_sat.p0_m.ravel()[flat]
            parts.append(dict(
                kind=np.full(idx.shape[0], kind), flat=flat, srv=srv, ue=ue, v=v, n=n, f=f,
                sf=g.subframe_of(x)[n], c=gain / noise, fixed=fixed,
            ))
        if parts:
            self.links = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
        else:
            self.links = {key: np.zeros(0, dtype=np.int64) for key in
                          ("kind", "flat", "srv", "ue", "v", "n", "f", "sf", "c", "fixed")}
            self.links["c"] = self.links["c"].astype(float)
            self.links["fixed"] = self.links["fixed"].astype(float)
        self.n_links = self.links["kind"].size

    def _pairs(self):
        """Interference coefficients (victim, interferer, coef) on shared RBs."""
        lk = self.links
        inp, o = self.inp, self.opts
        self.pair_v = np.zeros(0, np.int64)
        self.pair_j = np.zeros(0, np.int64)
        self.pair_c = np.zeros(0)
        if not o.interference or self.n_links == 0:
            return
        svc = np.array([0, 1, 1, 2])[lk["kind"]]
        vmax = max(self.grid.cap(x) for x in "DMS") + 1
        nmax = max(self.grid.n_rb_times(x) for x in "DMS") + 1
        key = (svc * vmax + lk["v"]) * nmax + lk["n"]
        vi, ji = _group_pairs(key)
        kv, kj = lk["kind"][vi], lk["kind"][ji]
        keep = (
            ((kv == K_D) & (kj == K_D) & (lk["srv"][vi] != lk["srv"][ji]))
            | ((kv == K_MT) & (kj == K_MT) & (lk["srv"][vi] != lk["srv"][ji]))
            | ((kv == K_MT) & (kj == K_MS))
            | ((kv == K_MS) & (kj == K_MT))
        )
        vi, ji = vi[keep], ji[keep]
        kv, kj = lk["kind"][vi], lk["kind"][ji]
        ch = inp.chans
        coef = np.zeros(vi.size)
        ue, v, f = lk["ue"][vi], lk["v"][vi], lk["f"][vi]
        srv_j = lk["srv"][ji]
        m = kv == K_D
        coef[m] = ch.tn["D"][srv_j[m], ue[m], v[m], f[m]] / ch.noise["D"]
        m = kj == K_MT  # terrestrial interferer on an M RB (ICI or onto a satellite victim)
        coef[m] = ch.tn["M"][srv_j[m], ue[m], v[m], f[m]] / ch.noise["M"]
        if o.subframe is not None:
            coef[(kv == K_MS) & (kj == K_MT)] *= o.kappa
        m = kj == K_MS  # satellite interferer onto terrestrial M victim
        coef[m] = ch.sat["M"][ue[m], v[m], f[m]] / ch.noise["M"]
        if o.subframe is not None:
            coef[m] *= o.kappa
        self.pair_v, self.pair_j, self.pair_c = vi, ji, coef

    def _rows(self):
        """Association and bandwidth-part row membership."""
        lk, g = self.links, self.grid
        kind, srv, ue, v, n = lk["kind"], lk["srv"], lk["ue"], lk["v"], lk["n"]
        nmax = max(g.n_rb_times(x) for x in "DMS") + 1
        vmax = max(g.cap(x) for x in "DMS") + 1
        kmax = max(self.inp.k.values()) + 1
        lmax = self.inp.n_ap + 1
        rb = v * nmax + n
        rows = []  # (tag, member link positions, row ids)
        tn = np.flatnonzero((kind == K_D) | (kind == K_MT))
        rows.append(("C5", tn, _groups(((kind[tn] * lmax + srv[tn]) * vmax * nmax) + rb[tn])))
        d = np.flatnonzero(kind == K_D)
        rows.append(("C6", d, _groups(ue[d] * vmax * nmax + rb[d])))
        sat = np.flatnonzero((kind == K_MS) | (kind == K_S))
        rows.append(("C8", sat, _groups(kind[sat] * vmax * nmax + rb[sat])))
        m = np.flatnonzero((kind == K_MT) | (kind == K_MS))
        rows.append(("C9", m, _groups(ue[m] * vmax * nmax + rb[m])))
        self.assoc_rows = [(t, mem, rid) for t, mem, rid in rows if mem.size]
        # subchannel aggregates: agg id = service offset + v
        svc = np.array([0, 1, 1, 2])[kind]
        self.agg_off = np.array([0, g.cap("D"), g.cap("D") + g.cap("M")])
        self.n_agg = self.agg_off[-1] + g.cap("S")
        self.link_agg = self.agg_off[svc] + v
        _ = kmax

    # ------------------------------------------------------------------
    # per-iterate numerics

    def link_power(self, alloc: AllocationState) -> np.ndarray:
        out = np.zeros(self.n_links)
        for kind, fld in _FIELD.items():
            m = self.links["kind"] == kind
            if m.any():
                out[m] = getattr(alloc, fld).ravel()[self.links["flat"][m]]
        return out

    def link_eta(self, eta: Dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.n_links)
        for kind, fld in _FIELD.items():
            m = self.links["kind"] == kind
            if m.any() and fld in eta:
                out[m] = eta[fld].ravel()[self.links["flat"][m]]
        return out

    def frozen(self, x: np.ndarray):
        """Links whose surrogate rows cap their power at (numerically) zero."""
        eps, o = self.opts.epsilon, self.opts
        a, b = f_apx_upper_coeffs(x, eps)
        pmax = max(self.inp.phy.p_max_ap, self.inp.phy.p_max_sat)
        # same slope floor as the assembled rows: flat surrogates never cap
        b = np.where(b * pmax < o.slope_floor, 0.0, b)
        cap = np.full(self.n_links, np.inf)
        if o.subframe is None:
            for _, mem, rid in self.assoc_rows:
                slack = 1.0 - np.bincount(rid, weights=a[mem], minlength=rid.max() + 1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    c = np.where(b[mem] > 0, slack[rid] / b[mem], np.inf)
                cap[mem] = np.minimum(cap[mem], c)
            if o.bwp is None:
                agg_x = np.bincount(self.link_agg, weights=x, minlength=self.n_agg)
                A, B = f_apx_upper_coeffs(agg_x, eps)
                B = np.where(B * pmax < o.slope_floor, 0.0, B)
                for rid_links, slack_of, weight in self._bwp_caps(A):
                    den = weight * B[self.link_agg[rid_links]]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        c = np.where(den > 0, slack_of / den, np.inf)
                    cap[rid_links] = np.minimum(cap[rid_links], c)
        out = cap <= o.freeze_tol
        # a D link at exactly zero cannot meet its SINR-floor row (slope 1/eps)
        # and only pins the interference it sees; keep it off
        if self.opts.interference:
            out |= (self.links["kind"] == K_D) & (x <= 0.0)
        return out

    def _bwp_rows(self):
        """Yield (tag, list of (agg ids, weights), rhs) for C1, C2, C3."""
        g = self.grid
        off = self.agg_off
        vd, vm, vs = g.cap("D"), g.cap("M"), g.cap("S")
        out = []
        for v in range(1, vd + 1):
            ids = [off[0] + v - 1] + [off[1] + i for i in range(min(2 * v + 1, vm))] + \
                  [off[2] + j for j in range(min(4 * v + 2, vs))]
            out.append(("C1", np.array(ids), np.ones(len(ids)), 1.0))
        for v in range(1, vm + 1):
            ids = [off[1] + v - 1] + [off[2] + j for j in range(min(2 * v + 1, vs))]
            out.append(("C2", np.array(ids), np.ones(len(ids)), 1.0))
        w = np.concatenate([np.full(vd, g.spacing("D")), np.full(vm, g.spacing("M")), np.full(vs, g.spacing("S"))])
        rhs = g.total_bandwidth_hz - g.guard_d_m - g.guard_m_s
        out.append(("C3", np.arange(self.n_agg), w / 1e6, rhs / 1e6))
        return out

    def _bwp_caps(self, A):
        links_by_agg = [[] for _ in range(self.n_agg)]
        for i, a in enumerate(self.link_agg):
            links_by_agg[a].append(i)
        for _, ids, w, rhs in self._bwp_rows():
            slack = rhs - float(np.dot(w, A[ids]))
            for agg, wt in zip(ids, w):
                mem = links_by_agg[agg]
                if mem:
                    yield np.array(mem), slack, wt

    # ------------------------------------------------------------------

    def build(self, point: ExpansionPoint, keep_live: Optional[np.ndarray] = None):
        """Assemble the convex program at ``point``.

        ``keep_live`` marks links that stay variables even if the freeze test
        would fix them at zero; passing the previous iterate's live set keeps
        that iterate feasible, so SCA objectives never increase.

        Returns the program and a decoding map used by :meth:`decode`.
        """
        inp, g, o, lk = self.inp, self.grid, self.opts, self.links
        eps = o.epsilon
        refine = o.subframe is not None
        x = self.link_power(point.alloc)
        fixed_mask = ~np.isnan(lk["fixed"])
        x = np.where(fixed_mask, np.nan_to_num(lk["fixed"]), x)
        frozen = self.frozen(x) & ~fixed_mask
        if keep_live is not None:
            frozen &= ~keep_live
        live = ~frozen & ~fixed_mask          # power is a variable
        present = live | (fixed_mask & (np.nan_to_num(lk["fixed"]) > 0))
        kind = lk["kind"]
        a_l, b_l = f_apx_upper_coeffs(x, eps)
        pmax = max(inp.phy.p_max_ap, inp.phy.p_max_sat)
        b_eff = np.where(b_l * pmax < o.slope_floor, 0.0, b_l)
        # with a fixed support every supported D link is on: its indicator is
        # exactly 1 and its power stays at or above the recovery threshold
        held = (kind == K_D) & live if o.tn_support is not None else np.zeros(self.n_links, bool)
        a_l = np.where(held, 1.0, a_l)
        b_eff = np.where(held, 0.0, b_eff)

        prog = ConicProgram()
        li = np.flatnonzero(live)
        pvar = np.full(self.n_links, -1)
        pvar[li] = prog.add_block("p", li.size)
        prog.add_nonneg(pvar[li], "p>=0")
        hi = np.flatnonzero(held)
        if hi.size:
            prog.add_le(np.arange(hi.size), pvar[hi], -np.ones(hi.size), np.full(hi.size, -eps), "p>=eps")

        # victims: links whose rate is modeled
        victim = present.copy()
        if refine:
            victim &= (kind != K_S)
        # interference pairs restricted to present victims and present interferers
        pv, pj, pc = self.pair_v, self.pair_j, self.pair_c
        keep = victim[pv] & present[pj]
        pv, pj, pc = pv[keep], pj[keep], pc[keep]
        var_pair = live[pj]
        i_const = np.bincount(pv[~var_pair], weights=pc[~var_pair] * x[pj[~var_pair]], minlength=self.n_links)
        has_var_int = np.bincount(pv[var_pair], minlength=self.n_links) > 0
        need_eta = victim & has_var_int & (kind != K_S)
        eta_var = np.full(self.n_links, -1)
        ei = np.flatnonzero(need_eta)
        eta_var[ei] = prog.add_block("eta", ei.size)
        eta_const = np.log1p(i_const)          # used where no variable interference

        # own-signal term
        own_var = live & victim
        own_const = np.where(fixed_mask & victim, lk["c"] * np.nan_to_num(lk["fixed"]), 0.0)

        # --- eta rows: sum coef p_j + 1 + I_c <= e^{eta_i}(eta - eta_i + 1)
        if ei.size:
            eta_i = self.link_eta(point.eta)[ei]
            # links that were not victims at the last iterate are expanded at the exact value
            i_now = np.bincount(pv, weights=pc * x[pj], minlength=self.n_links)[ei]
            eta_i = np.where(np.isnan(eta_i), np.log1p(i_now), eta_i)
            # expansion in a safe range; the tangent is valid for any eta_i
            eta_i = np.clip(eta_i, 0.0, 60.0)
            loc = np.full(self.n_links, -1)
            loc[ei] = np.arange(ei.size)
            m = var_pair & need_eta[pv]
            rows = np.concatenate([loc[pv[m]], np.arange(ei.size)])
            cols = np.concatenate([pvar[pj[m]], eta_var[ei]])
            # rows divided by e^{eta_i} for conditioning
            sc = np.exp(-eta_i)
            vals = np.concatenate([pc[m] * sc[loc[pv[m]]], -np.ones(ei.size)])
            rhs = (1.0 - eta_i) - (1.0 + i_const[ei]) * sc
            prog.add_le(rows, cols, vals, rhs, "eta")

        # --- log rows
        vi = np.flatnonzero(victim)
        vloc = np.full(self.n_links, -1)
        vloc[vi] = np.arange(vi.size)
        # argument: 1 + I_c + own_const + c p (if own var) + sum coef p_j (var interferers)
        m = var_pair & victim[pv]
        u_rows = np.concatenate([vloc[pv[m]], vloc[vi[own_var[vi]]]])
        u_cols = np.concatenate([pvar[pj[m]], pvar[vi[own_var[vi]]]])
        u_vals = np.concatenate([pc[m], lk["c"][vi[own_var[vi]]]])
        u_const = 1.0 + i_const[vi] + own_const[vi]
        # left side per kind
        kv = kind[vi]
        t_var = np.full(self.n_links, -1)
        r_var = np.full(self.n_links, -1)
        dvi = vi[kv == K_D]
        t_var[dvi] = prog.add_block("t", dvi.size)
        rvi = vi[kv != K_D]
        r_var[rvi] = prog.add_block("r", rvi.size)
        t_rows, t_cols, t_vals = [], [], []
        t_const = np.zeros(vi.size)
        # D: t <= log(arg)
        t_rows.append(vloc[dvi]); t_cols.append(t_var[dvi]); t_vals.append(np.ones(dvi.size))
        # M/S: eta + r * MBIT ln2 / w <= log(arg)
        wk = np.array([g.spacing(_SERVICE[kk]) for kk in range(4)])
        t_rows.append(vloc[rvi]); t_cols.append(r_var[rvi]); t_vals.append(MBIT * LN2 / wk[kind[rvi]])
        e_r = rvi[need_eta[rvi]]
        t_rows.append(vloc[e_r]); t_cols.append(eta_var[e_r]); t_vals.append(np.ones(e_r.size))
        c_r = rvi[~need_eta[rvi]]
        t_const[vloc[c_r]] += eta_const[c_r]
        # divide each argument by its value at the expansion point: t - ln s <= ln(u / s)
        u_at = u_const + np.bincount(u_rows, weights=u_vals * x[np.concatenate([pj[m], vi[own_var[vi]]])],
                                     minlength=vi.size)
        u_sc = np.maximum(u_at, 1.0)
        t_const = t_const - np.log(u_sc)
        prog.add_log(np.concatenate(t_rows), np.concatenate(t_cols), np.concatenate(t_vals), t_const,
                     u_rows, u_cols, u_vals / u_sc[u_rows], u_const / u_sc, "rate-log")

        # --- D per-RB SINR floor: t - eta >= ln(1+g0) (a + b p)
        l0 = np.log1p(inp.phy.gamma0_d)
        if dvi.size:
            rows = [np.arange(dvi.size)]
            cols = [t_var[dvi]]
            vals = [-np.ones(dvi.size)]
            e_d = np.flatnonzero(need_eta[dvi])
            rows.append(e_d); cols.append(eta_var[dvi[e_d]]); vals.append(np.ones(e_d.size))
            s_d = np.flatnonzero(b_eff[dvi] > 0)
            rows.append(s_d); cols.append(pvar[dvi[s_d]]); vals.append(l0 * b_eff[dvi[s_d]])
            rhs = -l0 * a_l[dvi] - np.where(need_eta[dvi], 0.0, eta_const[dvi])
            prog.add_le(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs, "C10")

        # --- association rows
        if not refine:
            for tag, mem, rid in self.assoc_rows:
                self._add_surrogate_rows(prog, tag, mem, rid, live, a_l, b_eff, pvar)
            if o.bwp is None:
                self._add_bwp_rows(prog, x, live, pvar)

        # --- power budgets
        self._add_budgets(prog, live, pvar, x, fixed_mask)

        # --- steering
        st = self._add_steering(prog, self._dead_d_pairs(live & victim))

        # --- D service
        zmap = self._add_d_service(prog, point, live, victim, need_eta, t_var, eta_var, eta_const, a_l, b_eff, pvar, st)

        # --- queues and objective
        qmap = self._add_queues(prog, r_var, st)

        dec = dict(live=live, pvar=pvar, eta_var=eta_var, eta_const=eta_const, need_eta=need_eta,
                   t_var=t_var, r_var=r_var, zmap=zmap, qmap=qmap, steer=st, x=x, fixed=fixed_mask,
                   victim=victim)
        return prog, dec

    def _add_surrogate_rows(self, prog, tag, mem, rid, live, a_l, b_eff, pvar):
        nrow = rid.max() + 1
        rhs = 1.0 - np.bincount(rid, weights=a_l[mem], minlength=nrow)
        sl = live[mem] & (b_eff[mem] > 0)
        has = np.bincount(rid[sl], minlength=nrow) > 0
        if not has.any():
            return
        remap = np.cumsum(has) - 1
        prog.add_le(remap[rid[sl]], pvar[mem[sl]], b_eff[mem[sl]], np.maximum(rhs[has], 0.0), tag)

    def _add_bwp_rows(self, prog, x, live, pvar):
        eps, o = self.opts.epsilon, self.opts
        agg_x = np.bincount(self.link_agg, weights=x, minlength=self.n_agg)
        A, B = f_apx_upper_coeffs(agg_x, eps)
        pmax = max(self.inp.phy.p_max_ap, self.inp.phy.p_max_sat)
        B = np.where(B * pmax < o.slope_floor, 0.0, B)
        li = np.flatnonzero(live)
        batches = {}
        for tag, ids, w, rhs in self._bwp_rows():
            coef_agg = np.zeros(self.n_agg)
            coef_agg[ids] = w * B[ids]
            lc = coef_agg[self.link_agg[li]]
            nz = lc > 0
            if not nz.any():
                continue
            bt = batches.setdefault(tag, ([], [], [], []))
            row = len(bt[3])
            bt[0].append(np.full(nz.sum(), row))
            bt[1].append(pvar[li[nz]])
            bt[2].append(lc[nz])
            bt[3].append(max(rhs - float(np.dot(w, A[ids])), 0.0))
        for tag, (rr, cc, vv, hh) in batches.items():
            prog.add_le(np.concatenate(rr), np.concatenate(cc), np.concatenate(vv), np.array(hh), tag)

    def _add_budgets(self, prog, live, pvar, x, fixed_mask):
        g, lk, inp = self.grid, self.links, self.inp
        kind, n = lk["kind"], lk["n"]
        nd = g.rbs_per_subframe("D")
        r_m = nd // g.rbs_per_subframe("M")
        r_s = nd // g.rbs_per_subframe("S")
        # express each link's D-slot coverage: D link covers slot n; M link slots r_m*n..; S link r_s*n..
        li = np.flatnonzero(live | fixed_mask)
        if li.size == 0:
            return
        span = np.where(kind[li] == K_D, 1, np.where(kind[li] == K_S, r_s, r_m))
        start = np.where(kind[li] == K_D, n[li], n[li] * span)
        reps = span
        lid = np.repeat(li, reps)
        slot = np.repeat(start, reps) + (np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps))
        is_tn = (kind[lid] == K_D) | (kind[lid] == K_MT)
        server = np.where(is_tn, lk["srv"][lid], inp.n_ap)
        nslots = g.n_rb_times("D")
        key = server * nslots + slot
        for tn_side, pm in ((True, inp.phy.p_max_ap), (False, inp.phy.p_max_sat)):
            sel = is_tn == tn_side
            if not sel.any():
                continue
            k_sel, l_sel = key[sel], lid[sel]
            var = live[l_sel]
            const = np.bincount(_groups(k_sel), weights=np.where(var, 0.0, x[l_sel]))
            rid = _groups(k_sel)
            # dedupe identical rows (same member set)
            members = {}
            for r_, l_ in zip(rid[var], l_sel[var]):
                members.setdefault(r_, []).append(l_)
            seen = {}
            rows, cols, vals, rhs = [], [], [], []
            for r_, mem in members.items():
                sig = (tuple(sorted(mem)), round(const[r_], 15))
                if sig in seen:
                    continue
                seen[sig] = len(rhs)
                rows.extend([len(rhs)] * len(mem))
                cols.extend(pvar[mem])
                vals.extend([1.0] * len(mem))
                rhs.append(pm - const[r_])
            if rhs:
                prog.add_le(rows, cols, vals, rhs, "C11" if tn_side else "C12")

    def _dead_d_pairs(self, carrying: np.ndarray) -> np.ndarray:
        """(L, K_D) mask of AP-UE pairs with D demand in a subframe where no link can carry it.

        Their C14 rows read ``omega * lam <= 0`` and pin the weight to zero;
        leaving them as inequalities removes the program's strict interior.
        A UE with no carrying AP at all keeps its weights so infeasibility is
        still reported.
        """
        inp, g, lk = self.inp, self.grid, self.links
        L, kd, nsf = inp.n_ap, inp.k["D"], g.n_subframes
        sfs = np.arange(nsf) if self.opts.subframe is None else np.array([self.opts.subframe])
        can = np.zeros((L, kd, nsf), bool)
        d = np.flatnonzero((lk["kind"] == K_D) & carrying)
        can[lk["srv"][d], lk["ue"][d], lk["sf"][d]] = True
        demand = np.zeros((kd, nsf), bool)
        demand[:, sfs] = inp.traffic.d[:, sfs] > 0
        dead = (demand[None] & ~can).any(axis=2)
        return dead & ~dead.all(axis=0, keepdims=True)

    def _add_steering(self, prog, dead_d: Optional[np.ndarray] = None):
        inp, o = self.inp, self.opts
        L, kd, km = inp.n_ap, inp.k["D"], inp.k["M"]
        if o.steering is not None:
            return dict(fixed=True, d=o.steering.omega_d, m=o.steering.omega_m)
        dead_d = np.zeros((L, kd), bool) if dead_d is None else dead_d
        wd = np.full((L, kd), -1)
        wd[~dead_d] = prog.add_block("omega_d", int((~dead_d).sum()))
        wm = prog.add_block("omega_m", L * km).reshape(L, km)
        prog.add_nonneg(wd[~dead_d], "omega>=0")
        prog.add_nonneg(wm, "omega>=0")
        if kd:
            rows = np.repeat(np.arange(kd)[None, :], L, axis=0)
            on = ~dead_d
            prog.add_eq(rows[on], wd[on], np.ones(int(on.sum())), np.ones(kd), "C13")
        if km:
            rows = np.repeat(np.arange(km)[None, :], L, axis=0)
            prog.add_le(rows.ravel(), wm.ravel(), np.ones(L * km), np.ones(km), "omega_m<=1")
        return dict(fixed=False, d=wd, m=wm)

    def _add_d_service(self, prog, point, live, victim, need_eta, t_var, eta_var, eta_const, a_l, b_eff, pvar, st):
        inp, g, o, lk = self.inp, self.grid, self.opts, self.links
        L, kd = inp.n_ap, inp.k["D"]
        nsf = g.n_subframes
        lam = inp.traffic.d / KBIT  # (K_D, N_SF) kbit
        T = g.rb_duration("D")
        c1 = T * g.spacing("D") / LN2 / KBIT
        chi = dispersion_penalty(g, inp.phy.error_prob)
        d = np.flatnonzero((lk["kind"] == K_D) & live & victim)
        key = (lk["srv"][d] * kd + lk["ue"][d]) * nsf + lk["sf"][d]
        sfs = range(nsf) if o.subframe is None else [o.subframe]
        zmap = {}
        if kd == 0:
            return zmap
        uk, inv = np.unique(key, return_inverse=True) if d.size else (np.zeros(0, np.int64), np.zeros(0, np.int64))
        zeta_idx = prog.add_block("zeta", uk.size)
        prog.add_nonneg(zeta_idx, "zeta>=0")
        # zeta >= sum (a + b p)
        if uk.size:
            sl = b_eff[d] > 0
            rows = np.concatenate([inv[sl], np.arange(uk.size)])
            cols = np.concatenate([pvar[d[sl]], zeta_idx])
            vals = np.concatenate([b_eff[d[sl]], -np.ones(uk.size)])
            rhs = -np.bincount(inv, weights=a_l[d], minlength=uk.size)
            prog.add_le(rows, cols, vals, rhs, "C17d")
        # service rows
        slack_idx = []
        rows, cols, vals, rhs = [], [], [], []
        r = 0
        lookup = {int(kk): i for i, kk in enumerate(uk)}
        for l in range(L):
            for k in range(kd):
                for s in sfs:
                    lam_ks = lam[k, s]
                    w = st["d"][l, k]
                    if st["fixed"] and (w * lam_ks <= 0):
                        continue
                    if not st["fixed"] and w < 0:     # weight pinned at zero
                        continue
                    if not st["fixed"] and lam_ks <= 0:
                        continue
                    kk = (l * kd + k) * nsf + s
                    const_lam = 0.0
                    if st["fixed"]:
                        const_lam = w * lam_ks
                    else:
                        rows.append(r); cols.append(int(w)); vals.append(lam_ks)
                    rhs_r = -const_lam
                    if kk in lookup:
                        zi = lookup[kk]
                        mem = d[inv == zi]
                        z_i = float(point.zeta[l, k, s])
                        # the penalty uses min(z, sqrt z): concave, equal to sqrt z at integer counts
                        if z_i <= 1.0:
                            c2, c3 = T * chi / KBIT, 0.0
                        else:
                            sq = np.sqrt(z_i)
                            c2 = T * chi / (2 * sq) / KBIT
                            c3 = T * chi * sq / 2 / KBIT
                        rows.extend([r] * mem.size); cols.extend(t_var[mem]); vals.extend([-c1] * mem.size)
                        em = mem[need_eta[mem]]
                        rows.extend([r] * em.size); cols.extend(eta_var[em]); vals.extend([c1] * em.size)
                        rhs_r -= c1 * eta_const[mem[~need_eta[mem]]].sum()
                        rows.append(r); cols.append(int(zeta_idx[zi])); vals.append(c2)
                        rhs_r -= c3
                        zmap[(l, k, s)] = int(zeta_idx[zi])
                    if o.elastic:
                        slack_idx.append(r)
                    rhs.append(rhs_r)
                    r += 1
        if r:
            if slack_idx:
                sv = prog.add_block("slack_d", len(slack_idx))
                prog.add_nonneg(sv, "slack>=0")
                rows.extend(slack_idx); cols.extend(sv); vals.extend([-1.0] * len(slack_idx))
                prog.add_objective(sv, o.penalty)
            prog.add_le(rows, cols, vals, rhs, "C14")
        return zmap

    def _add_queues(self, prog, r_var, st):
        inp, g, o, lk = self.inp, self.grid, self.opts, self.links
        L, km, ks = inp.n_ap, inp.k["M"], inp.k["S"]
        refine = o.subframe is not None
        nm, ns = g.n_rb_times("M"), g.n_rb_times("S")
        pm_frame = 10 * g.rbs_per_subframe("M")
        ps_frame = 10 * g.rbs_per_subframe("S")
        if refine:
            win_m = np.flatnonzero(g.subframe_of("M") == o.subframe)
            win_s = np.zeros(0, np.int64)
        else:
            win_m = np.arange(nm)
            win_s = np.arange(ns)
        lam_m = inp.traffic.m / MBIT
        lam_s = inp.traffic.s / MBIT
        q0 = inp.q0
        Tm, Ts = g.rb_duration("M"), g.rb_duration("S")
        qmap = {}

        # served terms: r variables grouped per (queue, n)
        kind = lk["kind"]
        has_r = r_var >= 0

        def queue_block(name, n_q, window, served_key, lam_fn, q_init, per_frame, T, cap, weight):
            """Rows q[n] >= q[n-1] + arrivals(n) - T * sum r, caps, objective."""
            if n_q == 0 or window.size == 0:
                return None
            qv = prog.add_block(name, n_q * window.size).reshape(n_q, window.size)
            prog.add_nonneg(qv, "q>=0")
            rows, cols, vals, rhs = [], [], [], []
            pos = {int(nn): i for i, nn in enumerate(window)}
            # service contributions
            sk = served_key  # (link ids, queue idx, n)
            lids, qids, ns_ = sk
            for lid, qi, nn in zip(lids, qids, ns_):
                if int(nn) in pos:
                    rows.append(qi * window.size + pos[int(nn)])
                    cols.append(int(r_var[lid]))
                    vals.append(-T)
            const = np.zeros(n_q * window.size)
            for qi in range(n_q):
                for wi, nn in enumerate(window):
                    row = qi * window.size + wi
                    rows.append(row); cols.append(int(qv[qi, wi])); vals.append(-1.0)
                    if wi > 0:
                        rows.append(row); cols.append(int(qv[qi, wi - 1])); vals.append(1.0)
                    else:
                        const[row] += q_init[qi]
                    if nn % per_frame == 0:
                        terms, c = lam_fn(qi, nn // per_frame)
                        const[row] += c
                        for col, val in terms:
                            rows.append(row); cols.append(col); vals.append(val)
            prog.add_le(rows, cols, vals, -const, "C15a" if name != "q_s" else "C16a")
            # caps per node and RB-time
            if cap is not None:
                groups, capv = cap
                crow, ccol, cval = [], [], []
                ncap = 0
                for gi, members in enumerate(groups):
                    for wi in range(window.size):
                        for qi in members:
                            crow.append(ncap); ccol.append(int(qv[qi, wi])); cval.append(1.0)
                        ncap += 1
                if ncap:
                    if o.elastic:
                        sv = prog.add_block(f"slack_{name}", ncap)
                        prog.add_nonneg(sv, "slack>=0")
                        crow.extend(range(ncap)); ccol.extend(sv); cval.extend([-1.0] * ncap)
                        prog.add_objective(sv, o.penalty)
                    prog.add_le(crow, ccol, cval, np.full(ncap, capv), "C15b" if name != "q_s" else "C16b")
            prog.add_objective(qv.ravel(), weight)
            return qv

        # terrestrial M queues, queue index l*km + k
        sel = np.flatnonzero((kind == K_MT) & has_r)
        served = (sel, lk["srv"][sel] * km + lk["ue"][sel], lk["n"][sel])

        def lam_tn(qi, e):
            l, k = divmod(qi, km)
            if st["fixed"]:
                return [], st["m"][l, k] * lam_m[k, e]
            return [(int(st["m"][l, k]), lam_m[k, e])], 0.0

        qmap["tn"] = queue_block(
            "q_tn", L * km, win_m, served, lam_tn, q0.tn.ravel() / MBIT, pm_frame, Tm,
            ([list(range(l * km, (l + 1) * km)) for l in range(L)], inp.caps["tn"] / MBIT), 1.0 / nm,
        )
        sel = np.flatnonzero((kind == K_MS) & has_r)
        served = (sel, lk["ue"][sel], lk["n"][sel])

        def lam_sat(qi, e):
            if st["fixed"]:
                share = max(0.0, 1.0 - float(st["m"][:, qi].sum()))
                return [], share * lam_m[qi, e]
            return [(int(st["m"][l, qi]), -lam_m[qi, e]) for l in range(L)], lam_m[qi, e]

        qmap["sat_m"] = queue_block(
            "q_sm", km, win_m, served, lam_sat, q0.sat_m / MBIT, pm_frame, Tm,
            ([list(range(km))], inp.caps["sat_m"] / MBIT), 1.0 / nm,
        )
        sel = np.flatnonzero((kind == K_S) & has_r)
        served = (sel, lk["ue"][sel], lk["n"][sel])
        qmap["sat_s"] = queue_block(
            "q_s", ks, win_s, served, lambda qi, e: ([], lam_s[qi, e]), q0.sat_s / MBIT, ps_frame, Ts,
            ([list(range(ks))], inp.caps["sat_s"] / MBIT), 1.0 / ns,
        )
        return qmap

    # ------------------------------------------------------------------

    def decode(self, sol: SubproblemSolution, dec, point: ExpansionPoint) -> ExpansionPoint:
        """New expansion point from a subproblem solution."""
        lk = self.links
        x = sol.x
        alloc = point.alloc.copy()
        p = np.where(dec["live"], np.maximum(x[np.maximum(dec["pvar"], 0)], 0.0), 0.0)
        p = np.where(dec["fixed"], dec["x"], p)
        for kind, fld in _FIELD.items():
            m = lk["kind"] == kind
            if not m.any():
                continue
            arr = getattr(alloc, fld)
            flat = arr.reshape(-1)
            flat[lk["flat"][m]] = p[m]
            setattr(alloc, fld, flat.reshape(arr.shape))
        if self.opts.subframe is None:
            # links outside the candidate set carry no power
            for kind, fld in _FIELD.items():
                arr = getattr(alloc, fld)
                keep = np.zeros(arr.size, dtype=bool)
                m = lk["kind"] == kind
                keep[lk["flat"][m]] = True
                setattr(alloc, fld, np.where(keep.reshape(arr.shape), arr, 0.0))
        for pf, af in (("p_d", "a_d"), ("p_m", "a_m"), ("p0_m", "b_m"), ("p0_s", "b_s")):
            setattr(alloc, af, getattr(alloc, pf) > 0)
        eta = {k: v.copy() for k, v in point.eta.items()}
        ev = np.where(dec["need_eta"], x[np.maximum(dec["eta_var"], 0)], dec["eta_const"])
        ev = np.where(dec["victim"], ev, np.nan)
        for kind, fld in _FIELD.items():
            m = lk["kind"] == kind
            if m.any():
                e = eta[fld].reshape(-1)
                e[lk["flat"][m]] = ev[m]
        zeta = point.zeta.copy()
        for (l, k, s), zi in dec["zmap"].items():
            zeta[l, k, s] = x[zi]
        return ExpansionPoint(alloc, eta, zeta)

    def steering(self, sol: SubproblemSolution, dec) -> SteeringWeights:
        st = dec["steer"]
        if st["fixed"]:
            return SteeringWeights(np.array(st["d"], float), np.array(st["m"], float))
        wd = np.where(st["d"] >= 0, sol.x[np.maximum(st["d"], 0)], 0.0)
        return SteeringWeights(np.clip(wd, 0, 1), np.clip(sol.x[st["m"]], 0, 1))


def exact_eta(problem: CycleProblem, alloc: AllocationState, template: Dict[str, np.ndarray]):
    """Normalized log interference ``log(1 + I/sigma^2)`` at ``alloc`` for every link."""
    lk = problem.links
    x = problem.link_power(alloc)
    x = np.where(np.isnan(lk["fixed"]), x, np.nan_to_num(lk["fixed"]))
    I = np.bincount(problem.pair_v, weights=problem.pair_c * x[problem.pair_j], minlength=problem.n_links)
    val = np.log1p(I)
    eta = {k: v.copy() for k, v in template.items()}
    for kind, fld in _FIELD.items():
        m = lk["kind"] == kind
        if m.any():
            e = eta[fld].reshape(-1)
            e[lk["flat"][m]] = val[m]
    return eta


def exact_zeta(alloc: AllocationState, grid: GridConfig, eps: float) -> np.ndarray:
    """Smoothed RB counts per (l, k, subframe) for D links."""
    L, K, V, N = alloc.p_d.shape
    nrb = grid.rbs_per_subframe("D")
    fa = f_apx(alloc.p_d, eps).sum(axis=2)
    return fa.reshape(L, K, N // nrb, nrb).sum(axis=3)


def empty_eta(alloc: AllocationState) -> Dict[str, np.ndarray]:
    return {f: np.zeros(getattr(alloc, f).shape) for f in _FIELD.values()}


def assemble_joint(point: ExpansionPoint, inputs: PlanningInputs, opts: Optional[AssemblyOptions] = None):
    """Convex iterate of the joint problem at ``point``."""
    problem = CycleProblem(inputs, opts or AssemblyOptions())
    prog, _ = problem.build(point)
    return prog


def assemble_refine(point: ExpansionPoint, inputs: PlanningInputs, subframe: int, phase1: AllocationState,
                    steering: SteeringWeights, kappa: float = 1.1, **kw):
    """Convex iterate of the per-subframe refinement problem.

    Terrestrial links keep the support of ``phase1``; satellite power,
    association, bandwidth parts and steering stay frozen.
    """
    if kappa < 1:
        raise ValueError("interference margin must be >= 1")
    opts = AssemblyOptions(kappa=kappa, steering=steering, bwp=phase1.bwp, subframe=subframe,
                           tn_support=phase1, fixed_sat=phase1, **kw)
    problem = CycleProblem(inputs, opts)
    prog, _ = problem.build(point)
    return prog
