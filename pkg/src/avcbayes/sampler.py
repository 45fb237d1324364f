"""Blocked Gibbs engine: full sweeps, chains, draw recording and checkpoints.

A sweep runs the exposure block (assign -> sticks -> continuize -> cluster
parameters -> MH crossings) and then the collision block (omega -> beta ->
[alpha_t, gamma_t] -> indicators -> q).  Every chain owns one random stream
derived from ``(seed, chain_id)`` and consumes it in a fixed order, so runs
and checkpoint resumes are bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special, stats

from . import collision, exposure
from .config import RunConfig
from .data import Dataset
from .distributions import DecompositionError, InvalidParameterError, truncated_normal_draws
from .draws import DrawStore
from .rng import RandomStream

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "avcbayes-checkpoint"
CHECKPOINT_VERSION = 1
FAULTS = frozenset({"unsquared_rate", "stale_kappa"})


class SamplerError(RuntimeError):
    """Numeric failure inside a sweep; names the sweep and the block."""

    def __init__(self, iteration, block, cause):
        super().__init__(f"sweep {iteration}: {block}: {cause}")
        self.iteration = iteration
        self.block = block


@dataclass
class ChainState:
    iteration: int
    n: np.ndarray
    nstar: np.ndarray
    z: np.ndarray
    dp: exposure.DpState
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    q: np.ndarray
    indicator: np.ndarray
    omega: np.ndarray
    kappa: np.ndarray
    mh_accepted: int = 0
    mh_proposed: int = 0

    def copy(self) -> "ChainState":
        return replace(
            self,
            n=self.n.copy(), nstar=self.nstar.copy(), z=self.z.copy(), dp=self.dp.copy(),
            beta=self.beta.copy(), alpha=self.alpha.copy(), gamma=self.gamma.copy(), q=self.q.copy(),
            indicator=self.indicator.copy(), omega=self.omega.copy(), kappa=self.kappa.copy(),
        )


def _inverse_cdf_draw(log_w, u):
    """Index drawn along the last axis with probabilities proportional to exp(log_w)."""
    cdf = np.cumsum(np.exp(log_w - log_w.max(axis=-1, keepdims=True)), axis=-1)
    return (cdf < u[..., None] * cdf[..., -1:]).sum(axis=-1)


def parameter_names(dataset: Dataset) -> list[str]:
    T = dataset.T
    names = [f"beta[{c}]" for c in dataset.covariate_names]
    names += [f"alpha0[{t}]" for t in range(1, T + 1)]
    names += [f"gamma[{t},{c}]" for t in range(1, T + 1) for c in dataset.time_varying_names]
    names += [f"q[{t}]" for t in range(1, T + 1)]
    names += [f"total_np[{t}]" for t in range(1, T + 1)]
    names += [f"nonzero_n[{t}]" for t in range(1, T + 1)]
    names += [f"count_I[{t}]" for t in range(1, T + 1)]
    return names


def monitored(name: str) -> bool:
    """Parameters included in convergence diagnostics."""
    return name.split("[", 1)[0] in ("beta", "alpha0", "gamma", "q", "total_np")


class GibbsSampler:
    def __init__(self, dataset: Dataset, config: RunConfig, chain_id: int = 0, faults=(), cluster_update=None):
        unknown = set(faults) - FAULTS
        if unknown:
            raise ValueError(f"unknown faults {sorted(unknown)}")
        self.dataset = dataset
        self.config = config
        self.chain_id = chain_id
        self.faults = frozenset(faults)
        self.cluster_update = cluster_update or config.cluster_update
        self.stream = RandomStream(config.seed, chain_id)
        if config.standardize:
            scale = dataset.x.std(axis=0)
            self.scale = np.where(scale > 0, scale, 1.0)
        else:
            self.scale = np.ones(dataset.P)
        self.x = dataset.x / self.scale
        self.y = np.asarray(dataset.y)
        self.k = np.array(dataset.k, dtype=np.int64)
        self.n_cap = int(max(config.n_cap, 10 * int(self.k.max(initial=0))))
        self.beta_prior_precision = np.eye(dataset.P) / config.beta_prior_var
        self.tv_prior_precision = np.eye(1 + dataset.Q) / config.tv_prior_var

    @property
    def generator(self):
        return self.stream.generator

    # -- state ---------------------------------------------------------------

    def initial_state(self) -> ChainState:
        cfg, gen = self.config, self.generator
        S, T, Q = self.dataset.S, self.dataset.T, self.dataset.Q
        dp = exposure.prior_dp_state(cfg.clusters, gen, cfg.dp_precision, cfg.mu0, cfg.d0, cfg.e0)
        if cfg.init_exposure == "prior":
            log_w = np.broadcast_to(exposure.log_mixture_pmf(self.n_cap, dp), (S, T, self.n_cap + 1))
        else:
            # crossings consistent with the starting collision probability of 1/2
            grid = np.arange(self.n_cap + 1)
            log_w = stats.binom.logpmf(self.k[..., None], grid, 0.5)
        draw = _inverse_cdf_draw(log_w, gen.random((S, T)))
        n = np.maximum(self.k, draw).astype(np.int64)
        z = gen.integers(0, cfg.clusters, size=(S, T))
        indicator = (gen.random((S, T)) < 0.5).astype(np.int8)
        return ChainState(
            iteration=0, n=n, nstar=n.astype(float), z=z, dp=dp,
            beta=np.zeros(self.dataset.P), alpha=np.zeros(T), gamma=np.zeros((T, Q)),
            q=np.full(T, 0.5), indicator=indicator, omega=np.zeros((S, T)),
            kappa=collision.pseudo_response(self.k, n),
        )

    def linear_parts(self, state: ChainState):
        """(x'beta per segment, gamma_t'y per cell)."""
        xb = self.x @ state.beta
        tv = np.einsum("stq,tq->st", self.y, state.gamma)
        return xb, tv

    def psi(self, state: ChainState) -> np.ndarray:
        xb, tv = self.linear_parts(state)
        return xb[:, None] + tv + state.alpha[None, :] * state.indicator

    # -- sweep ---------------------------------------------------------------

    def sweep(self, state: ChainState) -> ChainState:
        """One blocked Gibbs sweep; updates ``state`` in place and returns it."""
        it = state.iteration + 1
        gen = self.generator
        cfg = self.config
        k = self.k
        block = "exposure"
        try:
            if "stale_kappa" in self.faults:
                state.kappa = collision.pseudo_response(k, state.n)
            psi = self.psi(state)
            block = "cluster assignment"
            table = exposure.log_kernel_table(self.n_cap, state.dp)
            z, mu_c, sd_c = exposure.assign_clusters(state.n, state.dp, gen, table=table)
            block = "stick weights"
            V, w = exposure.update_stick_weights(z, state.dp, gen)
            dp = replace(state.dp, V=V, w=w)
            block = "latent continuization"
            nstar = exposure.sample_latent_continuous(state.n, mu_c, sd_c, gen)
            if not np.array_equal(np.floor(nstar + 0.5), state.n):
                raise FloatingPointError("continuized crossings do not round back to n")
            block = "cluster parameters"
            dp = exposure.update_cluster_params(
                nstar, z, dp, gen, method=self.cluster_update, squared="unsquared_rate" not in self.faults
            )
            dp.check()
            block = "crossing MH"
            n, accepted = exposure.mh_update_crossings(k, state.n, None, dp, gen, self.n_cap, psi=psi)
            if np.any(n < k):
                raise FloatingPointError("crossings fell below observed counts")
            nstar = exposure.refresh_latent(n, nstar, z, dp, accepted & (n != state.n), gen)
            if "stale_kappa" not in self.faults:
                state.kappa = collision.pseudo_response(k, n)
            state.n, state.nstar, state.z, state.dp = n, nstar, z, dp
            state.mh_accepted += int(accepted.sum())
            state.mh_proposed += accepted.size

            block = "Polya-Gamma augmentation"
            state.omega = collision.augment_polya_gamma(n, psi, gen, cfg.pg_normal_threshold)
            block = "beta update"
            xb, tv = self.linear_parts(state)
            offset = tv + state.alpha[None, :] * state.indicator
            state.beta = collision.update_beta(state.omega, state.kappa, self.x, offset, self.beta_prior_precision, gen)
            block = "time-varying update"
            xb = self.x @ state.beta
            zdesign = collision.time_varying_design(state.indicator, self.y)
            draw = collision.update_time_varying(state.omega, state.kappa, zdesign, xb, self.tv_prior_precision, gen)
            state.alpha = draw[:, 0].copy()
            state.gamma = draw[:, 1:].copy()
            block = "indicator update"
            psi0 = xb[:, None] + np.einsum("stq,tq->st", self.y, state.gamma)
            state.indicator = collision.update_indicators(state.omega, state.kappa, psi0, state.alpha, state.q, gen)
            block = "q update"
            state.q = collision.update_q(state.indicator, gen, cfg.q_a0, cfg.q_b0)
            for name in ("beta", "alpha", "gamma", "q"):
                if not np.all(np.isfinite(getattr(state, name))):
                    raise FloatingPointError(f"non-finite {name}")
        except (FloatingPointError, DecompositionError, InvalidParameterError, np.linalg.LinAlgError) as exc:
            raise SamplerError(it, block, exc) from exc
        state.iteration = it
        return state

    # -- recording -----------------------------------------------------------

    def record_vector(self, state: ChainState) -> np.ndarray:
        psi = self.psi(state)
        p = special.expit(psi)
        return np.concatenate([
            state.beta / self.scale,
            state.alpha,
            state.gamma.ravel(),
            state.q,
            (state.n * p).sum(axis=0),
            (state.n > 0).sum(axis=0).astype(float),
            state.indicator.sum(axis=0).astype(float),
        ])


# ---------------------------------------------------------------------------
# checkpoints


def _checkpoint_path(config: RunConfig, chain_id: int) -> Path:
    template = config.checkpoint_path or str(Path(config.output_dir) / "checkpoint_chain{chain}.npz")
    return Path(template.format(chain=chain_id))


def save_checkpoint(path, sampler: GibbsSampler, state: ChainState, recorder: "_Recorder"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "chain_id": sampler.chain_id,
        "iteration": state.iteration,
        "config": sampler.config.to_mapping(),
        "cluster_update": sampler.cluster_update,
        "faults": sorted(sampler.faults),
        "rng_state": sampler.stream.state,
        "mh_accepted": state.mh_accepted,
        "mh_proposed": state.mh_proposed,
        "shape": [sampler.dataset.S, sampler.dataset.T, sampler.dataset.P, sampler.dataset.Q],
    }
    arrays = dict(
        n=state.n, nstar=state.nstar, z=state.z, beta=state.beta, alpha=state.alpha, gamma=state.gamma,
        q=state.q, indicator=state.indicator, omega=state.omega, kappa=state.kappa,
        dp_mu=state.dp.mu, dp_sig2=state.dp.sig2, dp_V=state.dp.V, dp_w=state.dp.w,
        rec_iteration=np.asarray(recorder.iterations, dtype=np.int64),
        rec_values=np.asarray(recorder.values, dtype=float).reshape(
                len(recorder.values), len(parameter_names(sampler.dataset))),
        cell_iteration=np.asarray(recorder.cell_iterations, dtype=np.int64),
        cell_n=np.asarray(recorder.cell_n, dtype=np.int64).reshape((-1,) + state.n.shape),
        cell_p=np.asarray(recorder.cell_p, dtype=float).reshape((-1,) + state.n.shape),
        cell_indicator=np.asarray(recorder.cell_indicator, dtype=np.int8).reshape((-1,) + state.n.shape),
    )
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a sampler checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        arrays = {k: data[k].copy() for k in data.files if k != "header"}
    return header, arrays


class _Recorder:
    def __init__(self):
        self.iterations, self.values = [], []
        self.cell_iterations, self.cell_n, self.cell_p, self.cell_indicator = [], [], [], []

    def restore(self, arrays):
        self.iterations = arrays["rec_iteration"].tolist()
        self.values = list(arrays["rec_values"])
        self.cell_iterations = arrays["cell_iteration"].tolist()
        self.cell_n = list(arrays["cell_n"])
        self.cell_p = list(arrays["cell_p"])
        self.cell_indicator = list(arrays["cell_indicator"])


def _restore_state(sampler: GibbsSampler, header, arrays) -> ChainState:
    cfg = sampler.config
    dp = exposure.DpState(arrays["dp_mu"], arrays["dp_sig2"], arrays["dp_V"], arrays["dp_w"],
                          cfg.dp_precision, cfg.mu0, cfg.d0, cfg.e0)
    sampler.stream.state = header["rng_state"]
    return ChainState(
        iteration=header["iteration"], n=arrays["n"], nstar=arrays["nstar"], z=arrays["z"], dp=dp,
        beta=arrays["beta"], alpha=arrays["alpha"], gamma=arrays["gamma"], q=arrays["q"],
        indicator=arrays["indicator"], omega=arrays["omega"], kappa=arrays["kappa"],
        mh_accepted=header["mh_accepted"], mh_proposed=header["mh_proposed"],
    )


_RESUMABLE_CHANGES = {"iterations", "checkpoint_every", "checkpoint_path", "output_dir", "workers", "chains"}


def run_chain(config: RunConfig, dataset: Dataset, chain_id: int = 0, resume_from=None,
              faults=(), cluster_update=None, stop_after=None) -> DrawStore:
    """Run one chain and return its post-burn-in draws.

    ``resume_from`` continues from a checkpoint written by an earlier call.
    ``stop_after`` ends the run early after that sweep (used to produce
    checkpoints mid-run); the returned store holds what was recorded so far.
    """
    sampler = GibbsSampler(dataset, config, chain_id, faults=faults, cluster_update=cluster_update)
    recorder = _Recorder()
    if resume_from is not None:
        header, arrays = load_checkpoint(resume_from)
        if header["chain_id"] != chain_id:
            raise ValueError(f"checkpoint belongs to chain {header['chain_id']}, not {chain_id}")
        if header["shape"] != [dataset.S, dataset.T, dataset.P, dataset.Q]:
            raise ValueError("checkpoint was written for a dataset of a different shape")
        saved = header["config"]
        now = config.to_mapping()
        changed = {k for k in now if saved.get(k) != now[k]} - _RESUMABLE_CHANGES
        if changed:
            raise ValueError(f"config differs from checkpoint in {sorted(changed)}")
        state = _restore_state(sampler, header, arrays)
        recorder.restore(arrays)
    else:
        state = sampler.initial_state()

    ckpt = _checkpoint_path(config, chain_id)
    last = config.iterations if stop_after is None else min(stop_after, config.iterations)
    while state.iteration < last:
        sampler.sweep(state)
        it = state.iteration
        j = it - config.burn_in - 1
        if j >= 0 and j % config.thin == 0:
            recorder.iterations.append(it)
            recorder.values.append(sampler.record_vector(state))
            if config.store_cells and (j // config.thin) % config.cell_thin == 0:
                recorder.cell_iterations.append(it)
                recorder.cell_n.append(state.n.astype(np.int64))
                recorder.cell_p.append(special.expit(sampler.psi(state)))
                recorder.cell_indicator.append(state.indicator.copy())
        if config.checkpoint_every and it % config.checkpoint_every == 0:
            save_checkpoint(ckpt, sampler, state, recorder)
        if it % 1000 == 0:
            log.info("chain %d: sweep %d/%d", chain_id, it, config.iterations)

    S, T = dataset.S, dataset.T
    names = parameter_names(dataset)
    R = len(recorder.iterations)
    M = len(recorder.cell_iterations)
    meta = {
        "chains": [{
            "chain": chain_id,
            "mh_accepted": state.mh_accepted,
            "mh_proposed": state.mh_proposed,
            "mh_acceptance": state.mh_accepted / state.mh_proposed if state.mh_proposed else None,
            "sweeps": state.iteration,
        }],
        "config": config.to_mapping(),
        "cluster_update": sampler.cluster_update,
        "n_cap": sampler.n_cap,
        "covariate_scale": sampler.scale.tolist(),
        "covariates": list(dataset.covariate_names),
        "time_varying": list(dataset.time_varying_names),
        "months": T,
        "cell_thin": config.cell_thin * config.thin,
        "thin": config.thin,
        "burn_in": config.burn_in,
    }
    return DrawStore(
        names, np.full(R, chain_id), np.asarray(recorder.iterations, dtype=np.int64),
        np.asarray(recorder.values).reshape(R, len(names)), dataset.segment_ids, T,
        np.full(M, chain_id), np.asarray(recorder.cell_iterations, dtype=np.int64),
        np.asarray(recorder.cell_n, dtype=np.int64).reshape(M, S, T),
        np.asarray(recorder.cell_p, dtype=float).reshape(M, S, T),
        np.asarray(recorder.cell_indicator, dtype=np.int8).reshape(M, S, T),
        meta,
    )


def _run_chain_args(args):
    return run_chain(*args)


def fit(dataset: Dataset, config: RunConfig, resume=False) -> DrawStore:
    """Run ``config.chains`` independent chains and pool their draws.

    With ``resume`` each chain continues from its checkpoint file if one exists.
    """
    jobs = []
    for c in range(config.chains):
        ckpt = _checkpoint_path(config, c)
        jobs.append((config, dataset, c, ckpt if resume and ckpt.exists() else None))
    if config.workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.chains)) as pool:
            parts = list(pool.map(_run_chain_args, jobs))
    else:
        parts = [_run_chain_args(j) for j in jobs]
    return DrawStore.concat(parts)


def simulate_prior_state(sampler: GibbsSampler, gen) -> ChainState:
    """Draw every unknown, including latent crossings, from the prior.

    The sampler's support for crossings is 0..n_cap, which conditions the
    joint prior on *all* cells staying under the cap.  Exposure states that
    break it are therefore rejected as a whole, not truncated cell by cell.
    Does not touch ``sampler.k``.
    """
    cfg = sampler.config
    ds = sampler.dataset
    S, T, Q, P = ds.S, ds.T, ds.Q, ds.P
    while True:
        dp = exposure.prior_dp_state(cfg.clusters, gen, cfg.dp_precision, cfg.mu0, cfg.d0, cfg.e0)
        z = gen.choice(cfg.clusters, size=(S, T), p=dp.w)
        nstar = truncated_normal_draws(dp.mu[z], dp.sigma[z], -0.5, np.inf, gen)
        n = np.floor(nstar + 0.5).astype(np.int64)
        if n.max() <= sampler.n_cap:
            break
    beta = gen.standard_normal(P) * np.sqrt(cfg.beta_prior_var)
    tv = gen.standard_normal((T, 1 + Q)) * np.sqrt(cfg.tv_prior_var)
    q = gen.beta(cfg.q_a0, cfg.q_b0, size=T)
    indicator = (gen.random((S, T)) < q[None, :]).astype(np.int8)
    return ChainState(
        iteration=0, n=n, nstar=nstar, z=z, dp=dp, beta=beta, alpha=tv[:, 0].copy(),
        gamma=tv[:, 1:].copy(), q=q, indicator=indicator, omega=np.zeros((S, T)),
        kappa=np.zeros((S, T)),
    )
