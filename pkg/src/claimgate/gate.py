"""Consistency gate: bidirectional NLI + embedding similarity routing.

Per candidate rewrite, the gate computes
    e = min of the two directional entailment probabilities,
    c = max of the two directional contradiction probabilities,
    sim = cosine similarity of the original and rewritten claim embeddings
          (clamped to [0, 1] so the composite score shares tau's domain),
    s = alpha*e + beta*sim + gamma*(1 - c),
and accepts the rewrite iff s >= tau (ties accept), otherwise routes back to
the original claim. NLI probabilities are temperature-calibrated: logits are
divided by a scalar T (learned by NLL minimization on a calibration set)
before the softmax.

Signals depend only on (instance, candidate), never on tau, so threshold
sweeps re-threshold cached signals and run the downstream protocol once per
grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backends import Backend, NliLogits
from .errors import ConfigError, TransportError
from .pipeline import ClaimSurfaces, join_context_claim

DEFAULT_TAU_GRID = tuple(round(0.20 + 0.05 * i, 2) for i in range(17))  # 0.20..1.00


@dataclass(frozen=True)
class GateWeights:
    alpha: float = 0.4
    beta: float = 0.2
    gamma: float = 0.4

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("gate weights must be non-negative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError("gate weights must sum to 1")


@dataclass(frozen=True)
class GateConfig:
    weights: GateWeights = GateWeights()
    tau: float = 0.70
    temperature: float = 4.96
    sim_clamp: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


@dataclass(frozen=True)
class GateOutcome:
    instance_id: str
    candidate_kind: str  # "r4" | "r5"
    e: float
    c: float
    sim: float
    s: float
    accepted: bool
    degenerate_identity: bool
    routed_surface: str
    backend_error: str | None = None


@dataclass
class CalibrationResult:
    temperature: float
    nll_before: float
    nll_after: float
    sample_count: int


def apply_temperature(logits: NliLogits, temperature: float):
    """Softmax of z/T, max-subtracted for stability. Returns probabilities
    (entailment, neutral, contradiction) summing to 1 within 1e-6."""
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    z = np.asarray(logits.as_tuple(), dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite NLI logits")
    z = z / temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return tuple(float(x) for x in p)


def bidirectional_signals(premise_a: str, premise_b: str, backend: Backend,
                          temperature: float) -> tuple[float, float]:
    """(e, c) over the two NLI directions; order-invariant by construction."""
    fwd, bwd = backend.nli_logits_batch([(premise_a, premise_b), (premise_b, premise_a)])
    p_fwd = apply_temperature(fwd, temperature)
    p_bwd = apply_temperature(bwd, temperature)
    e = min(p_fwd[0], p_bwd[0])
    c = max(p_fwd[2], p_bwd[2])
    return e, c


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def gate_score(e: float, sim: float, c: float, weights: GateWeights) -> float:
    return weights.alpha * e + weights.beta * sim + weights.gamma * (1.0 - c)


def decide(instance, candidate_kind: str, surfaces: ClaimSurfaces,
           config: GateConfig, backend: Backend) -> GateOutcome:
    """Route one instance between its rewrite candidate and the original claim.

    A candidate byte-equal to r0 (including r4 with no resolved pronoun) is a
    degenerate identity: accepted with (e, c, sim, s) = (1, 0, 1, 1) and zero
    backend calls. Backend failures fall back to r0 and are flagged.
    """
    candidate = surfaces.surface(candidate_kind)
    r0 = surfaces.r0
    if candidate == r0 or (candidate_kind == "r4" and not surfaces.r4_candidate_present):
        return GateOutcome(
            instance_id=surfaces.instance_id, candidate_kind=candidate_kind,
            e=1.0, c=0.0, sim=1.0, s=1.0, accepted=True,
            degenerate_identity=True, routed_surface=r0,
        )
    premise = join_context_claim(instance.context_turns, r0)
    try:
        e, c = bidirectional_signals(premise, candidate, backend, config.temperature)
        emb_r0, emb_cand = backend.embed_batch([r0, candidate])
    except TransportError as exc:
        return GateOutcome(
            instance_id=surfaces.instance_id, candidate_kind=candidate_kind,
            e=0.0, c=1.0, sim=0.0, s=0.0, accepted=False,
            degenerate_identity=False, routed_surface=r0, backend_error=str(exc),
        )
    sim = cosine(emb_r0, emb_cand)
    if config.sim_clamp:
        sim = min(1.0, max(0.0, sim))
    s = gate_score(e, sim, c, config.weights)
    accepted = s >= config.tau
    return GateOutcome(
        instance_id=surfaces.instance_id, candidate_kind=candidate_kind,
        e=e, c=c, sim=sim, s=s, accepted=accepted,
        degenerate_identity=False,
        routed_surface=candidate if accepted else r0,
    )


def activation_rate(outcomes) -> dict:
    """Accepted fraction (degenerate identities included, and broken out
    separately) plus the mean score over non-degenerate outcomes."""
    total = len(outcomes)
    if total == 0:
        return {"total": 0, "accepted": None, "rate": None,
                "rate_excluding_degenerate": None, "degenerate": 0, "mean_score": None}
    accepted = sum(1 for o in outcomes if o.accepted)
    degenerate = sum(1 for o in outcomes if o.degenerate_identity)
    non_deg = [o for o in outcomes if not o.degenerate_identity]
    non_deg_accepted = sum(1 for o in non_deg if o.accepted)
    return {
        "total": total,
        "accepted": accepted,
        "rate": accepted / total,
        "rate_excluding_degenerate": (non_deg_accepted / len(non_deg)) if non_deg else None,
        "degenerate": degenerate,
        "mean_score": (sum(o.s for o in non_deg) / len(non_deg)) if non_deg else None,
    }


# ---------------------------------------------------------------------------
# temperature calibration

LABEL_TO_CLASS = {"SUPPORTS": 0, "NEI": 1, "REFUTES": 2}  # ent / neu / ctr


def nll_at_temperature(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    """Mean negative log-likelihood of softmax(z/T) against integer labels."""
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    logprob = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logprob[np.arange(len(labels)), labels].mean())


def fit_temperature(logits, labels) -> CalibrationResult:
    """Scalar NLL minimization over log T: coarse grid, then golden-section
    refinement to |delta NLL| < 1e-8. Never returns a T worse than T=1."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(logits) == 0:
        raise ConfigError("calibration requires at least one pair")

    def nll_log(t_log):
        return nll_at_temperature(logits, labels, math.exp(t_log))

    grid = np.linspace(math.log(1e-2), math.log(1e3), 121)
    values = [nll_log(t) for t in grid]
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]

    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c_pt = b - invphi * (b - a)
    d_pt = a + invphi * (b - a)
    fc, fd = nll_log(c_pt), nll_log(d_pt)
    while abs(fc - fd) > 1e-8 or (b - a) > 1e-10:
        if fc < fd:
            b, d_pt, fd = d_pt, c_pt, fc
            c_pt = b - invphi * (b - a)
            fc = nll_log(c_pt)
        else:
            a, c_pt, fc = c_pt, d_pt, fd
            d_pt = a + invphi * (b - a)
            fd = nll_log(d_pt)
        if (b - a) < 1e-12:
            break
    t_hat = math.exp((a + b) / 2)

    nll_before = nll_at_temperature(logits, labels, 1.0)
    nll_after = nll_at_temperature(logits, labels, t_hat)
    if nll_after > nll_before:
        t_hat, nll_after = 1.0, nll_before
    return CalibrationResult(
        temperature=t_hat, nll_before=nll_before, nll_after=nll_after,
        sample_count=len(labels),
    )


def calibrate_temperature(pairs, backend: Backend) -> CalibrationResult:
    """Fit T from (premise, hypothesis, gold 3-way label) triples.

    Labels map SUPPORTS -> entailment, REFUTES -> contradiction,
    NEI -> neutral.
    """
    if not pairs:
        raise ConfigError("calibration requires at least one pair")
    logits = backend.nli_logits_batch([(p, h) for p, h, _ in pairs])
    z = np.array([lg.as_tuple() for lg in logits])
    labels = np.array([LABEL_TO_CLASS[lbl] for _, _, lbl in pairs])
    return fit_temperature(z, labels)


# ---------------------------------------------------------------------------
# threshold sweeps

@dataclass
class SweepRow:
    tau: float
    activation: dict
    metrics: dict


@dataclass
class GateSignals:
    """Cached per-instance gate signals, computed once and re-thresholded."""

    candidate_kind: str
    outcomes: dict = field(default_factory=dict)  # instance_id -> GateOutcome
    candidates: dict = field(default_factory=dict)  # instance_id -> candidate text
    originals: dict = field(default_factory=dict)  # instance_id -> r0 text

    def routed_at(self, tau: float) -> tuple[dict, list]:
        """(instance_id -> routed surface text, outcomes at tau)."""
        routed = {}
        outcomes = []
        for iid, base in self.outcomes.items():
            if base.degenerate_identity or base.backend_error:
                out = base
            else:
                accepted = base.s >= tau
                out = GateOutcome(
                    instance_id=base.instance_id, candidate_kind=base.candidate_kind,
                    e=base.e, c=base.c, sim=base.sim, s=base.s,
                    accepted=accepted, degenerate_identity=False,
                    routed_surface=self.candidates[iid] if accepted else self.originals[iid],
                )
            routed[iid] = out.routed_surface
            outcomes.append(out)
        return routed, outcomes


def compute_signals(instances, surfaces_by_id, candidate_kind: str,
                    config: GateConfig, backend: Backend) -> GateSignals:
    signals = GateSignals(candidate_kind=candidate_kind)
    for inst in instances:
        surfaces = surfaces_by_id[inst.instance_id]
        outcome = decide(inst, candidate_kind, surfaces, config, backend)
        signals.outcomes[inst.instance_id] = outcome
        signals.candidates[inst.instance_id] = surfaces.surface(candidate_kind)
        signals.originals[inst.instance_id] = surfaces.r0
    return signals


def gate_sweep(signals: GateSignals, tau_grid, protocol_hook) -> list[SweepRow]:
    """One row per tau: routed surfaces are re-thresholded from cached scores
    (no re-scoring) and `protocol_hook(routed_map, tau)` supplies the metrics."""
    taus = list(tau_grid)
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ConfigError("tau grid must be strictly increasing")
    rows = []
    for tau in taus:
        routed, outcomes = signals.routed_at(tau)
        rows.append(SweepRow(tau=tau, activation=activation_rate(outcomes),
                             metrics=protocol_hook(routed, tau)))
    return rows


def sweep_table(rows: list[SweepRow]) -> str:
    """Delimited sweep table; metric columns from the first row's keys."""
    if not rows:
        return "tau\tactivation\n"
    metric_keys = sorted(rows[0].metrics)
    header = ["tau", "activation", "mean_score"] + metric_keys
    lines = ["\t".join(header)]
    for row in rows:
        rate = row.activation["rate"]
        mean_s = row.activation["mean_score"]
        cells = [f"{row.tau:.2f}",
                 "n/a" if rate is None else f"{rate:.6f}",
                 "n/a" if mean_s is None else f"{mean_s:.6f}"]
        cells += [f"{row.metrics[k]:.6f}" if isinstance(row.metrics[k], float)
                  else str(row.metrics[k]) for k in metric_keys]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
