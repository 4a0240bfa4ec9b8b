"""Measurement model, WLS state estimation, and residual-based bad data detection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import chi2

from .acpf import VoltageState
from .attack_vector import FLOW_KINDS, AttackVector, MeasurementId, assemble
from .netmodel import Network
from .zone import AttackZone

logger = logging.getLogger(__name__)

DEFAULT_SIGMAS = {
    "flow_p_from": 0.01, "flow_q_from": 0.01, "flow_p_to": 0.01, "flow_q_to": 0.01,
    "inj_p": 0.01, "inj_q": 0.01, "v_mag": 0.004, "v_ang": 0.002,
}


class EstimationError(RuntimeError):
    """WLS did not converge or the gain matrix is singular (unobservable)."""


@dataclass
class MeasurementSet:
    values: dict[MeasurementId, float]
    weights: dict[MeasurementId, float]

    def __post_init__(self):
        if set(self.values) != set(self.weights):
            raise ValueError("values and weights must cover the same measurements")
        if any(w <= 0 for w in self.weights.values()):
            raise ValueError("weights must be positive")

    @property
    def ids(self) -> list[MeasurementId]:
        return list(self.values)

    def copy(self) -> "MeasurementSet":
        return MeasurementSet(dict(self.values), dict(self.weights))


@dataclass(frozen=True)
class ResidualReport:
    norm: float  # sqrt(sum w r^2)
    max_normalized: float
    threshold: float
    flagged: bool
    dof: int


def measurement_ids(net: Network, pmu_channels: bool = True) -> list[MeasurementId]:
    ids = [MeasurementId(kind, k) for k in range(len(net.branches)) for kind in FLOW_KINDS]
    bus_kinds = ["inj_p", "inj_q", "v_mag"] + (["v_ang"] if pmu_channels else [])
    ids += [MeasurementId(kind, b.id) for b in net.buses for kind in bus_kinds]
    return ids


class MeasurementModel:
    """Vectorised h(x) and its Jacobian for a fixed list of measurement ids.

    The state vector is (theta without the slack, all magnitudes).
    """

    def __init__(self, net: Network, ids: list[MeasurementId]):
        self.net = net
        self.ids = ids
        n = net.n_bus
        self.ybus = net.ybus()
        nb = len(net.branches)
        self.f = np.array([net.index[b.from_bus] for b in net.branches], dtype=int)
        self.t = np.array([net.index[b.to_bus] for b in net.branches], dtype=int)
        ys = np.array([b.series_admittance for b in net.branches])
        bc = np.array([b.b_charging for b in net.branches])
        ratio = np.array([b.tap * np.exp(1j * b.shift) for b in net.branches])
        tap = np.array([b.tap for b in net.branches])
        self.yff = (ys + 0.5j * bc) / tap**2
        self.yft = -ys / np.conj(ratio)
        self.ytf = -ys / ratio
        self.ytt = ys + 0.5j * bc
        # branch-by-bus admittance rows for from- and to-end currents
        self.yf = np.zeros((nb, n), dtype=complex)
        self.yt = np.zeros((nb, n), dtype=complex)
        rng = np.arange(nb)
        self.yf[rng, self.f] += self.yff
        self.yf[rng, self.t] += self.yft
        self.yt[rng, self.f] += self.ytf
        self.yt[rng, self.t] += self.ytt

        kind_slot = {"flow_p_from": 0, "flow_q_from": 1, "flow_p_to": 2, "flow_q_to": 3,
                     "inj_p": 4, "inj_q": 5, "v_mag": 6, "v_ang": 7}
        self.slot = np.array([kind_slot[m.kind] for m in ids], dtype=int)
        self.pos = np.array([m.location if m.is_flow else net.index[m.location] for m in ids], dtype=int)
        self.non_slack = np.array([i for i in range(n) if i != net.slack_index], dtype=int)

    def state_vector(self, state: VoltageState) -> np.ndarray:
        return np.concatenate([state.theta[self.non_slack], state.v])

    def to_state(self, x: np.ndarray) -> VoltageState:
        n = self.net.n_bus
        theta = np.zeros(n)
        theta[self.non_slack] = x[: n - 1]
        return VoltageState(x[n - 1:], theta)

    def _blocks(self, state: VoltageState) -> np.ndarray:
        vc = state.phasor
        sf = vc[self.f] * np.conj(self.yf @ vc)
        st = vc[self.t] * np.conj(self.yt @ vc)
        sb = vc * np.conj(self.ybus @ vc)
        return sf, st, sb

    def h(self, state: VoltageState) -> np.ndarray:
        sf, st, sb = self._blocks(state)
        table = [sf.real, sf.imag, st.real, st.imag, sb.real, sb.imag, state.v, state.theta]
        out = np.empty(len(self.ids))
        for s in range(8):
            mask = self.slot == s
            out[mask] = table[s][self.pos[mask]]
        return out

    def jacobian(self, state: VoltageState) -> np.ndarray:
        vc = state.phasor
        n = self.net.n_bus
        vnorm = vc / np.abs(vc)
        ibus = self.ybus @ vc
        dsb_da = 1j * (np.diag(vc) @ np.conj(np.diag(ibus) - self.ybus * vc[None, :]))
        dsb_dv = np.diag(vc) @ np.conj(self.ybus * vnorm[None, :]) + np.diag(np.conj(ibus) * vnorm)

        def branch_derivs(yb, ends):
            ib = yb @ vc
            v_end = vc[ends]
            nb = len(ends)
            sel = np.zeros((nb, n))
            sel[np.arange(nb), ends] = 1.0
            da = 1j * (np.conj(ib)[:, None] * sel * v_end[:, None]
                       - v_end[:, None] * np.conj(yb * vc[None, :]))
            dv = (np.conj(ib)[:, None] * sel * (v_end / np.abs(v_end))[:, None]
                  + v_end[:, None] * np.conj(yb * vnorm[None, :]))
            return da, dv

        dsf_da, dsf_dv = branch_derivs(self.yf, self.f)
        dst_da, dst_dv = branch_derivs(self.yt, self.t)
        eye = np.eye(n)
        zero = np.zeros((n, n))
        table_a = [dsf_da.real, dsf_da.imag, dst_da.real, dst_da.imag, dsb_da.real, dsb_da.imag, zero, eye]
        table_v = [dsf_dv.real, dsf_dv.imag, dst_dv.real, dst_dv.imag, dsb_dv.real, dsb_dv.imag, eye, zero]
        jac = np.empty((len(self.ids), 2 * n))
        for s in range(8):
            mask = self.slot == s
            jac[mask, :n] = table_a[s][self.pos[mask]]
            jac[mask, n:] = table_v[s][self.pos[mask]]
        return np.delete(jac, self.net.slack_index, axis=1)


def _sigma_for(kind: str, noise_sigma) -> float:
    if noise_sigma is None:
        return 0.0
    if isinstance(noise_sigma, Mapping):
        return float(noise_sigma.get(kind, 0.0))
    return float(noise_sigma)


def generate_measurements(
    net: Network,
    state: VoltageState,
    noise_sigma: float | Mapping[str, float] | None = None,
    seed: int = 0,
    pmu_channels: bool = True,
    sigmas: Mapping[str, float] = DEFAULT_SIGMAS,
) -> MeasurementSet:
    """Evaluate h(state) for the full meter set, optionally with seeded Gaussian noise.

    ``sigmas`` sets the estimator weights (1/sigma^2); ``noise_sigma`` sets the
    noise actually added (a float for every kind, or a per-kind mapping).
    """
    ids = measurement_ids(net, pmu_channels)
    values = MeasurementModel(net, ids).h(state)
    if noise_sigma:
        rng = np.random.default_rng(seed)
        scale = np.array([_sigma_for(m.kind, noise_sigma) for m in ids])
        values = values + rng.standard_normal(len(ids)) * scale
    weights = {m: 1.0 / sigmas[m.kind] ** 2 for m in ids}
    return MeasurementSet(dict(zip(ids, values.tolist())), weights)


def apply_attack(meas: MeasurementSet, a: AttackVector) -> MeasurementSet:
    """z_attack = z + a."""
    unknown = [m for m in a.entries if m not in meas.values]
    if unknown:
        raise KeyError(f"attack vector references unmetered measurements: {unknown[:5]}")
    out = meas.copy()
    for m, d in a.entries.items():
        out.values[m] += d
    return out


def restrict(a: AttackVector, meas: MeasurementSet) -> AttackVector:
    """Drop attack entries for channels the meter set does not have."""
    keep = {m: d for m, d in a.entries.items() if m in meas.values}
    return AttackVector(keep, a.zone, {m: a.before[m] for m in keep if m in a.before})


def chi2_threshold(dof: int, confidence: float = 0.95) -> float:
    """Threshold on the weighted residual norm: sqrt of the chi-square quantile."""
    return float(np.sqrt(chi2.ppf(confidence, max(dof, 1))))


def wls_estimate(
    net: Network,
    meas: MeasurementSet,
    tau: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    init: VoltageState | None = None,
) -> tuple[VoltageState, ResidualReport]:
    """Gauss-Newton weighted least squares with the slack angle fixed at zero."""
    ids = meas.ids
    model = MeasurementModel(net, ids)
    z = np.array([meas.values[m] for m in ids])
    w = np.array([meas.weights[m] for m in ids])
    state = init if init is not None else VoltageState(np.ones(net.n_bus), np.zeros(net.n_bus))
    x = model.state_vector(state)
    for it in range(max_iter):
        r = z - model.h(state)
        H = model.jacobian(state)
        gain = H.T @ (w[:, None] * H)
        try:
            dx = np.linalg.solve(gain, H.T @ (w * r))
        except np.linalg.LinAlgError as exc:
            raise EstimationError("gain matrix is singular; measurement set unobservable") from exc
        if not np.all(np.isfinite(dx)) or np.linalg.cond(gain) > 1e14:
            raise EstimationError("gain matrix is rank deficient; measurement set unobservable")
        x = x + dx
        state = model.to_state(x)
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise EstimationError(f"WLS did not converge in {max_iter} iterations")

    r = z - model.h(state)
    H = model.jacobian(state)
    gain = H.T @ (w[:, None] * H)
    norm = float(np.sqrt(np.sum(w * r * r)))
    dof = len(ids) - H.shape[1]
    # residual covariance diagonal: R - H G^-1 H^T
    omega = 1.0 / w - np.einsum("ij,ji->i", H, np.linalg.solve(gain, H.T))
    omega = np.maximum(omega, 1e-300)
    max_norm = float(np.max(np.abs(r) / np.sqrt(omega))) if len(r) else 0.0
    threshold = chi2_threshold(dof) if tau is None else float(tau)
    return state, ResidualReport(norm=norm, max_normalized=max_norm, threshold=threshold,
                                 flagged=norm > threshold, dof=dof)


@dataclass
class StealthVerdict:
    clean: ResidualReport
    attacked: ResidualReport
    difference: float
    tolerance: float
    passed: bool
    estimate: VoltageState | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def rep(r: ResidualReport):
            return {"norm": r.norm, "max_normalized": r.max_normalized, "threshold": r.threshold,
                    "flagged": r.flagged, "dof": r.dof}

        return {"residual_clean": rep(self.clean), "residual_attacked": rep(self.attacked),
                "difference": self.difference, "tolerance": self.tolerance, "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def stealth_check(
    net: Network,
    zone: AttackZone,
    baseline: VoltageState,
    attacked: VoltageState,
    noise_sigma: float | Mapping[str, float] | None = None,
    tau: float | None = None,
    seed: int = 0,
    pmu_channels: bool = True,
    attack: AttackVector | None = None,
) -> StealthVerdict:
    """Compare BDD residuals with and without the attack on the same noise draw.

    ``attack`` defaults to the vector assembled from the two states.
    """
    a = attack if attack is not None else assemble(net, zone, baseline, attacked)
    clean = generate_measurements(net, baseline, noise_sigma, seed, pmu_channels)
    dirty = apply_attack(clean, restrict(a, clean))
    _, r_clean = wls_estimate(net, clean, tau)
    est, r_att = wls_estimate(net, dirty, tau)
    diff = abs(r_att.norm - r_clean.norm)
    tol = 1e-3 * r_clean.norm if noise_sigma else 1e-6
    return StealthVerdict(clean=r_clean, attacked=r_att, difference=diff, tolerance=tol,
                          passed=diff <= tol, estimate=est)
