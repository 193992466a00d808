"""Metropolis Monte Carlo and its adaptive variant.

One optimizer step proposes a simultaneous Gaussian change of every
parameter, evaluates the loss at the proposal, and accepts or rejects it.
At zero temperature a move is accepted iff the loss does not increase.
The adaptive variant drifts each parameter's proposal mean toward the last
accepted move (momentum-like), shrinks the global move scale after n_s
consecutive rejections, and can scale each weight's moves so the induced
change of every neuron's input has the same variance ("signal norm").
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .networks import ActivationTrace, NetworkSpec
from .recording import RunRecord

__all__ = [
    "AmcConfig",
    "AmcState",
    "StepReport",
    "McRunResult",
    "propose",
    "metropolis_accept",
    "compute_lambdas",
    "amc_step",
    "run_mc",
]

ACCEPTANCE_WINDOW = 100


@dataclass(frozen=True)
class AmcConfig:
    """Hyperparameters: initial move scale sigma0, proposal-mean adaptation
    rate epsilon (zero disables it, negative is allowed), scheduler patience
    n_s (math.inf disables the scheduler), the signal-norm switch, the
    acceptance temperature (0 = downhill-only), and the scheduler's sigma
    multiplier."""

    sigma0: float
    epsilon: float = 0.0
    n_s: float = math.inf
    signal_norm: bool = False
    temperature: float = 0.0
    decay: float = 0.95

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not (self.n_s >= 1):
            raise ValueError("n_s must be >= 1 (or infinity)")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0,
            "epsilon": self.epsilon,
            "n_s": self.n_s if math.isfinite(self.n_s) else "inf",
            "signal_norm": self.signal_norm,
            "temperature": self.temperature,
            "decay": self.decay,
        }

    @staticmethod
    def from_dict(d: dict) -> "AmcConfig":
        n_s = d.get("n_s", math.inf)
        if isinstance(n_s, str):
            n_s = math.inf
        return AmcConfig(
            sigma0=d["sigma0"],
            epsilon=d.get("epsilon", 0.0),
            n_s=n_s,
            signal_norm=bool(d.get("signal_norm", False)),
            temperature=d.get("temperature", 0.0),
            decay=d.get("decay", 0.95),
        )


class AmcState:
    """Mutable optimizer state.

    sigma is kept equal to sigma0 * decay**n_firings at all times, so the
    scale after k scheduler firings is the closed form exactly.
    """

    def __init__(self, n_params: int, config: AmcConfig):
        self.sigma = config.sigma0
        self.mu = np.zeros(n_params)
        self.lam = np.ones(n_params)
        self.n_cr = 0
        self.n_firings = 0
        self.current_loss: float | None = None

    def fire_scheduler(self, config: AmcConfig) -> None:
        self.n_cr = 0
        self.n_firings += 1
        self.sigma = config.sigma0 * config.decay**self.n_firings
        self.mu[:] = 0.0

    def reset_schedule(self, config: AmcConfig) -> None:
        """Full scale reset (sigma back to sigma0, mu zeroed), used when
        progressive batching doubles the minibatch."""
        self.sigma = config.sigma0
        self.n_firings = 0
        self.n_cr = 0
        self.mu[:] = 0.0


@dataclass
class StepReport:
    accepted: bool
    loss_before: float
    loss_after: float
    sigma_after: float
    scheduler_fired: bool = False
    error_rate: float | None = None  # minibatch classification error, if tracked


@dataclass
class McRunResult:
    record: RunRecord
    params: np.ndarray
    state: AmcState
    accept_history: deque = field(default_factory=deque)


def propose(
    params: np.ndarray, state: AmcState, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw eps_i ~ N(mu_i, (lam_i * sigma)^2) and return (params + eps, eps).

    The input vector is never modified. A zero lam_i freezes parameter i
    (up to its mu drift)."""
    eps = state.mu + (state.lam * state.sigma) * rng.standard_normal(len(params))
    return params + eps, eps


def metropolis_accept(delta_u: float, temperature: float, rng: np.random.Generator) -> bool:
    """Zero temperature accepts iff the loss does not increase; finite
    temperature accepts iff xi < exp(-delta_u / T) with xi uniform on (0, 1].

    No random number is consumed at zero temperature, so T=0 trajectories
    are reproducible against implementations that never draw an acceptance
    variate."""
    if temperature == 0.0:
        return delta_u <= 0.0
    xi = 1.0 - rng.random()
    arg = -delta_u / temperature
    if arg >= 0:
        return arg > 0 or xi < 1.0
    return xi < math.exp(arg)


def compute_lambdas(spec: NetworkSpec, trace: ActivationTrace) -> np.ndarray:
    """Per-parameter proposal scales from accumulated activation power.

    For every weight feeding neuron j the scale is
    [N_data^-1 sum_alpha sum_{i'->j} (S_{i'}^alpha)^2]^(-1/2); biases get 1.
    A neuron whose feeding activations vanished over the whole pass gets 0
    (those weights are frozen until the inputs wake up)."""
    if trace.n_data < 1:
        raise ValueError("trace holds no data")
    if trace.sum_sq.shape[0] != spec.neuron_count:
        raise ValueError("trace does not match the network spec")
    lam = np.ones(spec.param_count)
    blocks = spec.weight_blocks
    for group in spec.lambda_groups:
        power = sum(
            float(trace.sum_sq[blocks[b].src_ids[0] : blocks[b].src_ids[1]].sum()) for b in group
        )
        mean_power = power / trace.n_data
        value = mean_power ** -0.5 if mean_power > 0.0 else 0.0
        for b in group:
            blk = blocks[b]
            lam[blk.offset : blk.offset + blk.size] = value
    return lam


def _evaluate(objective, params, want_trace: bool):
    """(loss, trace-or-None) for the objective's currently selected data."""
    if want_trace:
        return objective.evaluate_traced(params)
    return objective.evaluate(params), None


def amc_step(
    params: np.ndarray,
    state: AmcState,
    config: AmcConfig,
    objective,
    rng: np.random.Generator,
) -> StepReport:
    """One propose/evaluate/accept cycle. Mutates params in place on
    acceptance and leaves it bitwise untouched on rejection.

    Batch objectives reuse state.current_loss so each step costs one loss
    evaluation; stochastic objectives select fresh data and evaluate both
    the current and proposed parameters on it."""
    signal_norm = config.signal_norm
    if objective.stochastic:
        objective.begin_step(rng)
        u0, trace = _evaluate(objective, params, signal_norm)
        if signal_norm:
            state.lam = compute_lambdas(objective.spec, trace)
        state.current_loss = u0
        error_rate = objective.last_error_rate
    else:
        u0 = state.current_loss
        if u0 is None:
            u0, trace = _evaluate(objective, params, signal_norm)
            if signal_norm:
                state.lam = compute_lambdas(objective.spec, trace)
            state.current_loss = u0
        error_rate = None

    proposal, eps = propose(params, state, rng)
    try:
        u1, trace1 = _evaluate(objective, proposal, signal_norm and not objective.stochastic)
    except FloatingPointError:
        # a broken proposal is simply rejected; params stay put
        u1, trace1 = math.inf, None

    fired = False
    if not math.isnan(u1) and metropolis_accept(u1 - u0, config.temperature, rng):
        params[:] = proposal
        state.n_cr = 0
        if config.epsilon != 0.0:
            state.mu += config.epsilon * (eps - state.mu)
        state.current_loss = u1
        if signal_norm and trace1 is not None:
            state.lam = compute_lambdas(objective.spec, trace1)
        accepted = True
    else:
        accepted = False
        state.n_cr += 1
        if state.n_cr == config.n_s:
            state.fire_scheduler(config)
            fired = True
    return StepReport(accepted, u0, u1, state.sigma, fired, error_rate)


def run_mc(
    objective,
    params: np.ndarray,
    config: AmcConfig,
    n_steps: int,
    rng: np.random.Generator,
    *,
    record_every: int = 1,
    metrics_every: int | None = None,
    grad_every: int | None = None,
    start_step: int = 0,
    state: AmcState | None = None,
    accept_history: deque | None = None,
    checkpoint_every: int = 0,
    checkpoint_cb=None,
) -> McRunResult:
    """Drive amc_step for n_steps, recording a metrics time series.

    Records loss, the trailing-window acceptance rate, and sigma every
    record_every steps; expensive metrics (accuracy, auxiliary loss) every
    metrics_every steps and the gradient norm every grad_every steps, both
    aligned to recorded rows. Passing state/start_step/accept_history
    resumes a checkpointed run: the continuation is bitwise identical to
    the uninterrupted one.
    """
    record = RunRecord()
    window = accept_history if accept_history is not None else deque(maxlen=ACCEPTANCE_WINDOW)

    def extras(step):
        out = {}
        if metrics_every and step % metrics_every == 0:
            out.update(objective.metrics(params))
        if grad_every and step % grad_every == 0:
            g = objective.gradient(params)
            out["grad_norm"] = float(np.linalg.norm(g))
        return out

    if state is None:
        state = AmcState(len(params), config)
        if objective.stochastic:
            objective.begin_step(rng)
        u0, trace = _evaluate(objective, params, config.signal_norm)
        if config.signal_norm:
            state.lam = compute_lambdas(objective.spec, trace)
        state.current_loss = u0
        record.append(epoch=0, loss=u0, sigma=state.sigma, **extras(0))

    for n in range(start_step + 1, n_steps + 1):
        report = amc_step(params, state, config, objective, rng)
        window.append(report.accepted)
        if (
            objective.stochastic
            and getattr(objective, "progressive", False)
            and report.error_rate is not None
            and report.error_rate < objective.progressive_trigger
        ):
            objective.grow_batch()
            state.reset_schedule(config)
        if n % record_every == 0 or n == n_steps:
            if objective.stochastic:
                loss = report.loss_after if report.accepted else report.loss_before
            else:
                loss = state.current_loss
            record.append(
                epoch=n,
                loss=loss,
                acceptance_rate=sum(window) / len(window),
                sigma=state.sigma,
                **extras(n),
            )
        if checkpoint_every and checkpoint_cb is not None and n % checkpoint_every == 0:
            checkpoint_cb(n, params, state, window)
    return McRunResult(record, params, state, window)
