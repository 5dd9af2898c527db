"""Mitigation simulation: source blacklisting plus capacity-bounded admission.

Each flow is classified, then passed through :func:`gate_decide`, then
its source is blacklisted if the classifier called it malicious. Labels in
the trace only feed the report, never a decision.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowvae.data.dataset import NO_IP, Dataset, FlowRecord
from flowvae.data.schema import int_to_ip

ALLOW, BLOCK = "allow", "block"
REASONS = ("admitted", "blacklisted", "below_threshold", "over_capacity")


@dataclass
class GateState:
    """Mutable gate state for one simulation run.

    ``window_capacity`` (N) bounds admitted flows per window; ``window_size``
    is the number of flows a window spans before the counter resets. ``None``
    means unbounded for either.
    """

    threshold: float = 0.5
    window_capacity: int | None = None
    window_size: int | None = None
    blacklist: set[int] = field(default_factory=set)
    window_admitted: int = 0
    window_seen: int = 0

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.window_capacity is not None and self.window_capacity < 0:
            raise ValueError("window_capacity must be >= 0")
        if self.window_size is not None and self.window_size < 1:
            raise ValueError("window_size must be >= 1")

    @property
    def capacity(self) -> float:
        return math.inf if self.window_capacity is None else self.window_capacity


@dataclass(frozen=True)
class GateDecision:
    verdict: str
    reason: str

    @property
    def allowed(self) -> bool:
        return self.verdict == ALLOW


def gate_decide(flow: FlowRecord, prob_benign: float, state: GateState) -> GateDecision:
    """Blacklist first, then the threshold, then window capacity."""
    if not 0.0 <= prob_benign <= 1.0:
        raise ValueError(f"prob_benign must lie in [0, 1], got {prob_benign}")
    if state.window_size is not None and state.window_seen >= state.window_size:
        state.window_seen = state.window_admitted = 0
    state.window_seen += 1
    if flow.src_ip is not None and flow.src_ip in state.blacklist:
        return GateDecision(BLOCK, "blacklisted")
    if prob_benign < state.threshold:
        return GateDecision(BLOCK, "below_threshold")
    if state.window_admitted >= state.capacity:
        return GateDecision(BLOCK, "over_capacity")
    state.window_admitted += 1
    return GateDecision(ALLOW, "admitted")


def blacklist_update(state: GateState, flow: FlowRecord, malicious: bool) -> None:
    """Add the flow's source when the classifier called it malicious."""
    if not malicious:
        return
    if flow.src_ip is None or flow.src_ip == NO_IP:
        warnings.warn("flow has no source address; blacklist unchanged", stacklevel=2)
        return
    state.blacklist.add(int(flow.src_ip))


@dataclass
class GateReport:
    threshold: float
    window_capacity: int | None
    reasons: Counter
    benign_total: int
    benign_allowed: int
    malicious_total: int
    malicious_allowed: int
    leaked_by_source: dict[int, int]
    blacklist_sizes: np.ndarray
    allowed_mask: np.ndarray

    @property
    def total(self) -> int:
        return self.benign_total + self.malicious_total

    @property
    def allowed(self) -> int:
        return self.reasons["admitted"]

    @property
    def blocked(self) -> int:
        return sum(n for r, n in self.reasons.items() if r != "admitted")

    @property
    def benign_pass_rate(self) -> float:
        return self.benign_allowed / self.benign_total if self.benign_total else float("nan")

    @property
    def malicious_pass_rate(self) -> float:
        return self.malicious_allowed / self.malicious_total if self.malicious_total else float("nan")

    def text(self) -> str:
        cap = "inf" if self.window_capacity is None else str(self.window_capacity)
        lines = [f"flows: {self.total}", f"threshold: {self.threshold}", f"window_capacity: {cap}",
                 f"allowed: {self.allowed}", f"blocked: {self.blocked}",
                 f"benign_pass_rate: {self.benign_pass_rate:.6f}",
                 f"malicious_pass_rate: {self.malicious_pass_rate:.6f}",
                 f"blacklist_size: {int(self.blacklist_sizes[-1]) if self.blacklist_sizes.size else 0}"]
        lines += [f"reason {r}: {self.reasons[r]}" for r in REASONS]
        worst = max(self.leaked_by_source.values(), default=0)
        lines.append(f"max_leak_per_malicious_source: {worst}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        """Reason histogram: one row per reason with verdict and count."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["reason", "verdict", "count"])
            for r in REASONS:
                w.writerow([r, ALLOW if r == "admitted" else BLOCK, self.reasons[r]])

    def leak_table(self) -> list[tuple[str, int]]:
        return [("-" if s == NO_IP else int_to_ip(s), n) for s, n in sorted(self.leaked_by_source.items())]


def _classify(trace: Dataset, model):
    """``(prob_benign, malicious)`` arrays for the whole trace.

    ``model`` is a trained model (``prob_benign`` + ``predict``) or a callable
    mapping feature rows to benign probabilities; for a callable, malicious
    means probability below one half.
    """
    x = np.ascontiguousarray(trace.features)
    if hasattr(model, "prob_benign"):
        prob = np.asarray(model.prob_benign(x), dtype=np.float64)
        benign = model.schema.benign_index
        return prob, np.asarray(model.predict(x)) != benign
    prob = np.asarray(model(x), dtype=np.float64)
    return prob, prob < 0.5


def run_gate_sim(trace: Dataset, model, state: GateState) -> GateReport:
    """Stream the trace in order through classify, decide, blacklist update.

    The classifier is frozen during the run, so all flows are scored in one
    batch up front; the gate itself still sees them one at a time.
    """
    prob, malicious = _classify(trace, model)
    if prob.shape != (len(trace),):
        raise ValueError("classifier must return one probability per flow")
    prob = np.clip(prob, 0.0, 1.0)
    is_benign = trace.is_benign()
    reasons = Counter({r: 0 for r in REASONS})
    leaked: dict[int, int] = {}
    sizes = np.empty(len(trace), np.int64)
    allowed = np.zeros(len(trace), bool)
    for i in range(len(trace)):
        flow = trace.record(i)
        decision = gate_decide(flow, float(prob[i]), state)
        reasons[decision.reason] += 1
        allowed[i] = decision.allowed
        if not is_benign[i]:
            src = NO_IP if flow.src_ip is None else int(flow.src_ip)
            leaked[src] = leaked.get(src, 0) + int(decision.allowed)
        blacklist_update(state, flow, bool(malicious[i]))
        sizes[i] = len(state.blacklist)
    return GateReport(state.threshold, state.window_capacity, reasons,
                      int(is_benign.sum()), int((allowed & is_benign).sum()),
                      int((~is_benign).sum()), int((allowed & ~is_benign).sum()),
                      leaked, sizes, allowed)
