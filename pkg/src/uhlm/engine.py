"""Round orchestration and metrics for the five inference methods.

One round produces one response token. The draft model always runs on the
device; the gate decides whether the round also pays for the uplink and the
server model. Per-round time accounting:

    transmitted round:  tau_slm + tau_uplink + tau_llm
    skipped round:      tau_slm
    server-only method: tau_llm

Oracle mode additionally evaluates the server distribution on skipped
rounds to produce counterfactual verification outcomes — metrics only, by
construction evaluated after the gate so it can never influence control
flow.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .backends.base import BackendPair
from .channel import ChannelParams, draw_channel, payload_bits
from .core import RandomStream, TokenId, TokenSequence, softmax, sample_categorical
from .errors import ConfigError, UhlmError, ValidationError
from .uncertainty import PerturbationConfig, measure_uncertainty, skip_decision
from .verifier import VerificationOutcome, verify


@dataclass(frozen=True)
class LatencyModel:
    """Per-token compute times of the device and server models."""

    tau_slm_s: float = 0.0246
    tau_llm_s: float = 0.1046

    def __post_init__(self) -> None:
        if self.tau_slm_s < 0 or self.tau_llm_s < 0:
            raise ValidationError("compute latencies must be non-negative")


class Method(enum.Enum):
    LLM = "llm"
    SLM = "slm"
    HLM = "hlm"
    RAND_HLM = "rand-hlm"
    UHLM = "uhlm"


@dataclass(frozen=True)
class EngineConfig:
    """Everything one generation needs besides the backends."""

    method: Method
    r_max: int = 100
    seed: int = 0
    u_th: float | None = None
    rand_skip_prob: float | None = None
    oracle_mode: bool = False
    prompt: TokenSequence = field(default_factory=list)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    channel: ChannelParams = field(default_factory=ChannelParams)
    payload_vocab_size: int | None = None

    def __post_init__(self) -> None:
        if self.r_max < 1:
            raise ConfigError(f"r_max must be >= 1, got {self.r_max}")
        if self.method is Method.UHLM and self.u_th is None:
            raise ConfigError("method uhlm requires u_th")
        if self.method is Method.RAND_HLM:
            if self.rand_skip_prob is None or not 0.0 <= self.rand_skip_prob <= 1.0:
                raise ConfigError("method rand-hlm requires rand_skip_prob in [0,1]")


@dataclass(frozen=True)
class RoundRecord:
    """Full trace of one generation round."""

    t: int
    draft: TokenId
    u: float | None
    delta: int
    outcome: VerificationOutcome | None
    counterfactual_outcome: VerificationOutcome | None
    tau_uplink_s: float
    round_time_s: float
    response: TokenId
    snr_linear: float | None
    x_draft: float | None = None
    y_draft: float | None = None

    def to_json_dict(self) -> dict:
        def enc(o: VerificationOutcome | None):
            if o is None:
                return None
            return {"decision": o.decision.value, "response": o.response, "beta": o.beta}

        return {
            "t": self.t,
            "draft": self.draft,
            "u": self.u,
            "delta": self.delta,
            "outcome": enc(self.outcome),
            "counterfactual_outcome": enc(self.counterfactual_outcome),
            "tau_uplink_s": self.tau_uplink_s,
            "round_time_s": self.round_time_s,
            "response": self.response,
            "snr_linear": self.snr_linear,
            "x_draft": self.x_draft,
            "y_draft": self.y_draft,
        }


@dataclass(frozen=True)
class RunSummary:
    """Aggregates of one generation."""

    tokens_generated: int
    total_time_s: float
    throughput_tok_per_s: float
    tr: float
    tsr: float | None
    mean_beta: float | None
    mean_u: float | None
    realized_risk: float | None
    fidelity_tv: float | None


class _Streams:
    """Label-derived random streams, one per concern, so methods that skip
    a concern leave the other streams untouched."""

    def __init__(self, seed: int) -> None:
        self.draft = RandomStream(seed, "draft")
        self.perturbation = RandomStream(seed, "perturbation")
        self.verify = RandomStream(seed, "verify")
        self.oracle = RandomStream(seed, "oracle")
        self.channel = RandomStream(seed, "channel")
        self.gate = RandomStream(seed, "gate")


@dataclass
class GenerationState:
    """Mutable sequence state shared by both models (synchronization after
    skips is modeled as free, so the server always sees the same tokens)."""

    sequence: list[int]
    responses: list[int] = field(default_factory=list)


def _model_distribution(backend, sequence: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
    """(logits, distribution) for the next token, taking the exact
    distribution from the backend when it provides one."""
    dist = backend.next_distribution(sequence)
    if dist is not None:
        return np.log(dist), dist
    z = backend.next_logits(sequence)
    return z, softmax(z)


def _gate(cfg: EngineConfig, u: float | None, streams: _Streams) -> int:
    if cfg.method is Method.SLM:
        return 0
    if cfg.method in (Method.HLM, Method.LLM):
        return 1
    if cfg.method is Method.RAND_HLM:
        return 0 if streams.gate.uniform() < cfg.rand_skip_prob else 1
    assert u is not None
    return skip_decision(u, cfg.u_th)


def run_round(
    state: GenerationState, cfg: EngineConfig, pair: BackendPair, streams: _Streams, t: int
) -> RoundRecord:
    """Execute one generation round and append its response to the state."""
    lat = cfg.latency
    if cfg.method is Method.LLM:
        _, y = _model_distribution(pair.llm, state.sequence)
        response = sample_categorical(y, streams.draft)
        record = RoundRecord(
            t=t, draft=response, u=None, delta=1, outcome=None,
            counterfactual_outcome=None, tau_uplink_s=0.0, round_time_s=lat.tau_llm_s,
            response=response, snr_linear=None, y_draft=float(y[response]),
        )
        state.responses.append(response)
        state.sequence.append(response)
        return record

    z, x = _model_distribution(pair.slm, state.sequence)
    draft = sample_categorical(x, streams.draft)
    u: float | None = None
    perturb_overhead = 0.0
    if cfg.method is Method.UHLM:
        u = measure_uncertainty(z, draft, cfg.perturbation, streams.perturbation).u
        perturb_overhead = cfg.perturbation.perturbation_cost * lat.tau_slm_s
    delta = _gate(cfg, u, streams)

    payload_vocab = cfg.payload_vocab_size or pair.vocab.size
    outcome: VerificationOutcome | None = None
    counterfactual: VerificationOutcome | None = None
    snr: float | None = None
    x_d = float(x[draft])
    y_d: float | None = None

    if delta == 1:
        draw = draw_channel(payload_bits(payload_vocab, cfg.channel.b_prob), cfg.channel, streams.channel)
        snr = draw.snr_linear
        _, y = _model_distribution(pair.llm, state.sequence)
        outcome = verify(x, y, draft, streams.verify)
        response = outcome.response
        tau_uplink = draw.tau_s
        round_time = lat.tau_slm_s + perturb_overhead + tau_uplink + lat.tau_llm_s
        y_d = float(y[draft])
    else:
        response = draft
        tau_uplink = 0.0
        round_time = lat.tau_slm_s + perturb_overhead
        if cfg.channel.sync_bits > 0:
            # Sensitivity hook: price the post-skip token-sync side channel.
            draw = draw_channel(cfg.channel.sync_bits, cfg.channel, streams.channel)
            snr = draw.snr_linear
            tau_uplink = draw.tau_s
            round_time += tau_uplink
        if cfg.oracle_mode:
            _, y = _model_distribution(pair.llm, state.sequence)
            counterfactual = verify(x, y, draft, streams.oracle)
            y_d = float(y[draft])

    record = RoundRecord(
        t=t, draft=draft, u=u, delta=delta, outcome=outcome,
        counterfactual_outcome=counterfactual, tau_uplink_s=tau_uplink,
        round_time_s=round_time, response=response, snr_linear=snr,
        x_draft=x_d, y_draft=y_d,
    )
    state.responses.append(response)
    state.sequence.append(response)
    return record


def run_generation(cfg: EngineConfig, pair: BackendPair) -> tuple[list[RoundRecord], RunSummary]:
    """Generate until ``r_max`` responses or an end-of-sentence token.

    Backend or channel failures abort the run; the raised error carries the
    rounds completed so far in ``partial_records`` so callers can flush a
    partial trace alongside the diagnostic.
    """
    streams = _Streams(cfg.seed)
    state = GenerationState(sequence=list(cfg.prompt))
    records: list[RoundRecord] = []
    for t in range(1, cfg.r_max + 1):
        try:
            record = run_round(state, cfg, pair, streams, t)
        except UhlmError as exc:
            exc.partial_records = records  # type: ignore[attr-defined]
            raise
        records.append(record)
        if record.response == pair.vocab.eos_id:
            break
    return records, summarize(records)


def summarize(records: list[RoundRecord]) -> RunSummary:
    tokens = len(records)
    total_time = sum(r.round_time_s for r in records)
    betas = [r.outcome.beta for r in records if r.outcome is not None]
    us = [r.u for r in records if r.u is not None]
    skipped_cf = [
        r.counterfactual_outcome.beta
        for r in records
        if r.delta == 0 and r.counterfactual_outcome is not None
    ]
    # Counterfactuals exist for every skipped round only under oracle mode.
    oracle_complete = all(
        r.delta == 1 or r.counterfactual_outcome is not None for r in records
    )

    tsr: float | None = None
    fidelity: float | None = None
    if records and oracle_complete:
        try:
            tsr = compute_tsr(records)
        except ValidationError:
            tsr = None
        # Per-round distributional damage given the realized draft: zero for
        # verified rounds (verification reproduces the target law exactly),
        # the counterfactual rejection mass for skipped ones.
        if all(r.delta == 0 or r.outcome is not None for r in records):
            fidelity = float(
                np.mean(
                    [0.0 if r.delta == 1 else r.counterfactual_outcome.beta for r in records]
                )
            )

    return RunSummary(
        tokens_generated=tokens,
        total_time_s=total_time,
        throughput_tok_per_s=tokens / total_time if total_time > 0 else float("inf"),
        tr=float(np.mean([r.delta for r in records])) if records else 0.0,
        tsr=tsr,
        mean_beta=float(np.mean(betas)) if betas else None,
        mean_u=float(np.mean(us)) if us else None,
        realized_risk=float(np.mean(skipped_cf)) if skipped_cf else None,
        fidelity_tv=fidelity,
    )


def compute_tsr(records: list[RoundRecord]) -> float:
    """True skip rate: among rounds whose (counter)factual verification
    accepts the draft, the fraction that skipped the uplink."""
    accepted_total = 0
    accepted_skipped = 0
    for r in records:
        if r.delta == 0:
            if r.counterfactual_outcome is None:
                raise ValidationError(
                    f"round {r.t} skipped without a counterfactual outcome; rerun with oracle_mode"
                )
            accepted = r.counterfactual_outcome.accepted
        else:
            if r.outcome is None:
                continue  # server-only rounds have no draft to accept
            accepted = r.outcome.accepted
        if accepted:
            accepted_total += 1
            accepted_skipped += int(r.delta == 0)
    if accepted_total == 0:
        raise ValidationError("no accepted rounds; true skip rate undefined")
    return accepted_skipped / accepted_total


@dataclass(frozen=True)
class IdentityCheckResult:
    ok: bool
    failures: list[str]


def throughput_identity_check(
    records: list[RoundRecord],
    summary: RunSummary,
    latency: LatencyModel,
    method: Method,
    perturbation_overhead_s: float = 0.0,
    tol: float = 1e-9,
) -> IdentityCheckResult:
    """Verify the per-round time accounting and the aggregate throughput."""
    failures: list[str] = []
    gated_extra = perturbation_overhead_s if method is Method.UHLM else 0.0
    for r in records:
        if method is Method.LLM:
            expected = latency.tau_llm_s
        elif r.delta == 1:
            expected = latency.tau_slm_s + gated_extra + r.tau_uplink_s + latency.tau_llm_s
        else:
            expected = latency.tau_slm_s + gated_extra + r.tau_uplink_s
        if abs(r.round_time_s - expected) > tol:
            failures.append(
                f"round {r.t}: time {r.round_time_s!r} != expected {expected!r} (delta={r.delta})"
            )
    total = sum(r.round_time_s for r in records)
    if records and total > 0:
        implied = len(records) / total
        if abs(implied - summary.throughput_tok_per_s) > tol:
            failures.append(
                f"throughput {summary.throughput_tok_per_s!r} != tokens/time {implied!r}"
            )
    return IdentityCheckResult(ok=not failures, failures=failures)
