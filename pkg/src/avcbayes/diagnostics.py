"""Convergence diagnostics: potential scale reduction and effective sample size."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .draws import DrawStore
from .sampler import monitored

MIN_RHAT_LENGTH = 10
MIN_ESS_LENGTH = 50


class DiagnosticsError(ValueError):
    pass


def gelman_rubin(chains):
    """Potential scale reduction factor for an (m, N) array of chains.

    Returns None when every chain is constant (within-chain variance zero).
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DiagnosticsError("gelman_rubin needs at least two chains")
    m, N = x.shape
    if N < MIN_RHAT_LENGTH:
        raise DiagnosticsError(f"gelman_rubin needs at least {MIN_RHAT_LENGTH} draws per chain, got {N}")
    W = x.var(axis=1, ddof=1).mean()
    if W == 0:
        return None
    B = N * x.mean(axis=1).var(ddof=1)
    var_plus = (N - 1) / N * W + B / N
    return float(np.sqrt(var_plus / W))


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at all lags, via FFT."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    N = x.shape[0]
    size = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:N] / N
    return acov / acov[0]


def effective_sample_size(x):
    """ESS of one chain from Geyer's initial positive sequence, capped at N.

    Returns None for a constant chain.
    """
    x = np.asarray(x, dtype=float).ravel()
    N = x.shape[0]
    if N < MIN_ESS_LENGTH:
        raise DiagnosticsError(f"effective_sample_size needs at least {MIN_ESS_LENGTH} draws, got {N}")
    if np.all(x == x[0]):
        return None
    rho = autocorrelation(x)
    pairs = rho[: N - N % 2].reshape(-1, 2).sum(axis=1)
    # initial positive sequence, made monotone
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else len(pairs)
    gamma = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * gamma.sum()
    return float(min(N, N / max(tau, 1e-12)))


def multichain_ess(chains):
    """Sum of per-chain ESS values; None if any chain is constant."""
    parts = [effective_sample_size(c) for c in np.atleast_2d(chains)]
    if any(p is None for p in parts):
        return None
    return float(sum(parts))


@dataclass
class ParameterDiagnostics:
    name: str
    rhat: float | None
    ess: float | None


@dataclass
class DiagnosticsReport:
    parameters: list
    mh_acceptance: list
    chains: int
    draws_per_chain: int

    @property
    def mean_rhat(self):
        vals = [p.rhat for p in self.parameters if p.rhat is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def max_rhat(self):
        vals = [p.rhat for p in self.parameters if p.rhat is not None]
        return float(np.max(vals)) if vals else None

    def to_dict(self):
        return {
            "chains": self.chains,
            "draws_per_chain": self.draws_per_chain,
            "mean_rhat": self.mean_rhat,
            "max_rhat": self.max_rhat,
            "mh_acceptance": self.mh_acceptance,
            "parameters": [asdict(p) for p in self.parameters],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        fmt = lambda v, spec: "n/a" if v is None else format(v, spec)
        lines = [f"chains: {self.chains}   draws per chain: {self.draws_per_chain}"]
        lines.append("MH acceptance: " + ", ".join(fmt(a, ".3f") for a in self.mh_acceptance))
        lines.append(f"mean r_hat: {fmt(self.mean_rhat, '.4f')}   max r_hat: {fmt(self.max_rhat, '.4f')}")
        lines.append(f"{'parameter':<24s} {'r_hat':>8s} {'ess':>10s}")
        for p in self.parameters:
            lines.append(f"{p.name:<24s} {fmt(p.rhat, '8.4f'):>8s} {fmt(p.ess, '10.1f'):>10s}")
        return "\n".join(lines)


def diagnose(store: DrawStore, names=None) -> DiagnosticsReport:
    """r_hat and ESS for the monitored parameters of a multi-chain run."""
    names = [n for n in store.names if monitored(n)] if names is None else list(names)
    chains = store.chains
    out = []
    length = 0
    for name in names:
        mat = store.by_chain(name)
        length = mat.shape[1]
        rhat = gelman_rubin(mat) if len(chains) > 1 else None
        ess = multichain_ess(mat) if length >= MIN_ESS_LENGTH else None
        out.append(ParameterDiagnostics(name, rhat, ess))
    acceptance = [c.get("mh_acceptance") for c in store.metadata.get("chains", [])]
    return DiagnosticsReport(out, acceptance, len(chains), length)
