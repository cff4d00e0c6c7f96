"""Synthetic CAN traffic: periodic attack-free baselines and labeled attack
injection.

Every generator is a pure function of its inputs and ``seed``. Timestamps are
quantized to microseconds so logs survive a CSV round trip unchanged. Merged
streams are ordered by ``(timestamp, can_id, injected)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .can_log import (
    MAX_STD_ID,
    AttackInterval,
    AttackKind,
    FrameLabel,
    FrameLog,
    LabeledFrame,
)

DIAGNOSTIC_RANGE = (0x700, 0x7FF)
DOS_FLOOD_ID = 0x000

# injected frames per second when a spec leaves ``rate`` unset
DEFAULT_RATES = {
    AttackKind.DOS: 2000.0,
    AttackKind.FUZZY: 1000.0,
    AttackKind.FUZZING_ID: 500.0,
    AttackKind.FUZZING_PAYLOAD: 500.0,
    AttackKind.SPOOFING: 1000.0,
    AttackKind.DIAGNOSTIC: 500.0,
    AttackKind.REPLAY: None,
    AttackKind.SUSPENSION: None,
}


@dataclass(frozen=True)
class Ecu:
    can_id: int
    period_ms: float
    payload_seed: int = 0
    offset_ms: float = 0.0
    dlc: int = 8


@dataclass(frozen=True)
class BaselineProfile:
    ecus: tuple
    jitter_fraction: float = 0.1
    duration: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if not self.ecus:
            raise ValueError("profile needs at least one ECU")
        if any(e.period_ms <= 0 for e in self.ecus):
            raise ValueError("ECU periods must be positive")
        if not 0.0 <= self.jitter_fraction <= 0.5:
            raise ValueError("jitter_fraction must lie in [0, 0.5]")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


def default_profile(duration: float = 60.0, seed: int = 0) -> BaselineProfile:
    """Ten ECUs with 5 to 100 ms periods, 10% jitter."""
    table = [
        (0x0C1, 5.0),
        (0x0D0, 10.0),
        (0x130, 10.0),
        (0x18F, 20.0),
        (0x1A0, 20.0),
        (0x260, 50.0),
        (0x2B0, 50.0),
        (0x316, 100.0),
        (0x329, 100.0),
        (0x43F, 100.0),
    ]
    # unrelated start phases, fixed so the default profile never changes
    phases = np.random.default_rng(2021).uniform(0.0, 1.0, size=len(table))
    ecus = tuple(
        Ecu(can_id, period, payload_seed=i, offset_ms=round(float(ph) * period, 3))
        for i, ((can_id, period), ph) in enumerate(zip(table, phases))
    )
    return BaselineProfile(ecus=ecus, jitter_fraction=0.1, duration=duration, seed=seed)


@dataclass(frozen=True)
class AttackSpec:
    """One attack on ``[start, end)`` seconds.

    ``params`` keys by kind: ``flood_id`` (DoS), ``target`` (Spoofing,
    Suspension), ``id_range`` (Diagnostic), ``source`` as ``(start, end)``
    (Replay).
    """

    kind: AttackKind
    start: float
    end: float
    rate: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0 <= self.start < self.end:
            raise ValueError(f"attack interval [{self.start}, {self.end}) is empty or negative")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("attack rate must be positive")

    @property
    def effective_rate(self) -> Optional[float]:
        return self.rate if self.rate is not None else DEFAULT_RATES[self.kind]


def _q(t: float) -> float:
    return round(t, 6)


def _sort_key(f: LabeledFrame):
    return (f.timestamp, f.can_id, f.injected)


def _ecu_payloads(ecu: Ecu, count: int, seed: int) -> list:
    # slowly varying signal bytes plus a rolling counter in the last byte
    rng = np.random.default_rng([seed, ecu.payload_seed, ecu.can_id])
    base = rng.integers(0, 256, size=ecu.dlc, dtype=np.int64)
    steps = rng.integers(-1, 2, size=(count, ecu.dlc), dtype=np.int64)
    steps[:, : max(0, ecu.dlc - 4)] = 0
    signal = (base + np.cumsum(steps, axis=0)) % 256
    if ecu.dlc:
        signal[:, -1] = np.arange(count) % 16
    return [bytes(row.tolist()) for row in signal]


def generate_baseline(profile: BaselineProfile) -> FrameLog:
    """Emit every ECU at its period plus uniform jitter and merge by time."""
    rng = np.random.default_rng(profile.seed)
    frames = []
    for ecu in profile.ecus:
        period = ecu.period_ms / 1000.0
        offset = ecu.offset_ms / 1000.0
        count = max(0, math.ceil(round((profile.duration - offset) / period, 9)))
        nominal = offset + period * np.arange(count)
        jitter = rng.uniform(-1.0, 1.0, size=count) * profile.jitter_fraction * period
        times = np.clip(nominal + jitter, 0.0, None)
        times = np.maximum.accumulate(times)
        payloads = _ecu_payloads(ecu, count, profile.seed)
        for t, payload in zip(times.tolist(), payloads):
            t = _q(t)
            if t < profile.duration:
                frames.append(LabeledFrame(t, ecu.can_id, ecu.dlc, payload))
    frames.sort(key=_sort_key)
    return FrameLog(frames=frames, source="synthetic-baseline", id_width=11)


def _check_window(log: FrameLog, spec: AttackSpec) -> None:
    if not log.frames:
        return
    first = log.frames[0].timestamp
    last = log.frames[-1].timestamp
    if spec.start > last or spec.end <= first:
        raise ValueError(
            f"attack interval [{spec.start}, {spec.end}) outside log span [{first}, {last}]"
        )


def _injection_times(spec: AttackSpec) -> np.ndarray:
    rate = spec.effective_rate
    count = math.ceil(round((spec.end - spec.start) * rate, 9))
    times = spec.start + np.arange(count) / rate
    times = np.round(times, 6)
    return times[times < spec.end]


def _merge(log: FrameLog, injected: Sequence[LabeledFrame], attack: AttackInterval,
           keep=None) -> FrameLog:
    base = log.frames if keep is None else [f for f in log.frames if keep(f)]
    frames = sorted(list(base) + list(injected), key=_sort_key)
    return replace(log, frames=frames, attacks=list(log.attacks) + [attack])


def _make(times, ids, payloads, kind: AttackKind) -> list:
    return [
        LabeledFrame(float(t), int(i), len(p), bytes(p), FrameLabel.INJECTED, kind)
        for t, i, p in zip(times, ids, payloads)
    ]


def _expect(spec: AttackSpec, kind: AttackKind) -> None:
    if spec.kind is not kind:
        raise ValueError(f"expected a {kind.value} spec, got {spec.kind.value}")


def _default_target(log: FrameLog) -> int:
    if not log.frames:
        raise ValueError("cannot choose a target ID in an empty log")
    ids, counts = np.unique([f.can_id for f in log.frames], return_counts=True)
    return int(ids[np.argmax(counts)])


def inject_dos(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Flood ``flood_id`` (default 0x000) with zero payloads."""
    _expect(spec, AttackKind.DOS)
    _check_window(log, spec)
    flood = int(spec.params.get("flood_id", DOS_FLOOD_ID))
    times = _injection_times(spec)
    frames = _make(times, [flood] * len(times), [bytes(8)] * len(times), spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end, flood))


def inject_fuzzy(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Random 11-bit IDs with random 8-byte payloads."""
    _expect(spec, AttackKind.FUZZY)
    _check_window(log, spec)
    rng = np.random.default_rng([seed, 1])
    times = _injection_times(spec)
    ids = rng.integers(0, MAX_STD_ID + 1, size=len(times))
    payloads = rng.integers(0, 256, size=(len(times), 8), dtype=np.uint8)
    frames = _make(times, ids, payloads, spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end))


def inject_fuzzing_id(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """IDs never seen in ``log``; payloads copied from legitimate frames."""
    _expect(spec, AttackKind.FUZZING_ID)
    _check_window(log, spec)
    used = log.ids()
    candidates = np.array(sorted(set(range(MAX_STD_ID + 1)) - used))
    if candidates.size == 0:
        raise ValueError("no unused CAN IDs left to fuzz")
    rng = np.random.default_rng([seed, 2])
    times = _injection_times(spec)
    ids = rng.choice(candidates, size=len(times))
    if log.frames:
        donors = rng.integers(0, len(log.frames), size=len(times))
        payloads = [log.frames[j].payload for j in donors]
    else:
        payloads = [bytes(8)] * len(times)
    frames = _make(times, ids, payloads, spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end))


def inject_fuzzing_payload(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Legitimate IDs carrying payloads never observed for that ID."""
    _expect(spec, AttackKind.FUZZING_PAYLOAD)
    _check_window(log, spec)
    if not log.frames:
        raise ValueError("fuzzing-payload attack needs legitimate IDs to reuse")
    seen = {(f.can_id, f.payload) for f in log.frames}
    legit = np.array(sorted(log.ids()))
    rng = np.random.default_rng([seed, 3])
    times = _injection_times(spec)
    ids = rng.choice(legit, size=len(times))
    payloads = []
    for can_id in ids:
        while True:
            p = bytes(rng.integers(0, 256, size=8, dtype=np.uint8).tolist())
            if (int(can_id), p) not in seen:
                break
        seen.add((int(can_id), p))
        payloads.append(p)
    frames = _make(times, ids, payloads, spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end))


def inject_spoofing(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Extra frames of a legitimate ``target`` ID with one forged payload."""
    _expect(spec, AttackKind.SPOOFING)
    _check_window(log, spec)
    target = int(spec.params["target"]) if "target" in spec.params else _default_target(log)
    rng = np.random.default_rng([seed, 4])
    forged = bytes(rng.integers(0, 256, size=8, dtype=np.uint8).tolist())
    times = _injection_times(spec)
    frames = _make(times, [target] * len(times), [forged] * len(times), spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end, target))


def inject_diagnostic(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """IDs uniform over ``id_range`` (default 0x700..0x7FF inclusive)."""
    _expect(spec, AttackKind.DIAGNOSTIC)
    _check_window(log, spec)
    lo, hi = spec.params.get("id_range", DIAGNOSTIC_RANGE)
    lo, hi = int(lo), int(hi)
    if not 0 <= lo <= hi <= MAX_STD_ID:
        raise ValueError(f"bad diagnostic ID range 0x{lo:X}..0x{hi:X}")
    rng = np.random.default_rng([seed, 5])
    times = _injection_times(spec)
    ids = rng.integers(lo, hi + 1, size=len(times))
    payloads = rng.integers(0, 256, size=(len(times), 8), dtype=np.uint8)
    frames = _make(times, ids, payloads, spec.kind)
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end))


def inject_replay(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Copy the frames of ``source`` and replay them from ``spec.start``.

    The default source is the stretch of the same length right before
    ``start``. Replayed frames past ``spec.end`` are dropped.
    """
    _expect(spec, AttackKind.REPLAY)
    _check_window(log, spec)
    length = spec.end - spec.start
    src_start, src_end = spec.params.get("source", (max(0.0, spec.start - length), spec.start))
    if not src_start < src_end <= spec.start:
        raise ValueError("replay source must be a non-empty interval ending before start")
    source = [f for f in log.frames if src_start <= f.timestamp < src_end and not f.injected]
    if not source:
        raise ValueError(f"replay source [{src_start}, {src_end}) holds no frames")
    shift = spec.start - source[0].timestamp
    frames = []
    for f in source:
        t = _q(f.timestamp + shift)
        if t >= spec.end:
            break
        frames.append(LabeledFrame(t, f.can_id, f.dlc, f.payload, FrameLabel.INJECTED, spec.kind))
    return _merge(log, frames, AttackInterval(spec.kind, spec.start, spec.end))


def inject_suspension(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    """Drop every frame of ``target`` inside ``[start, end]``."""
    _expect(spec, AttackKind.SUSPENSION)
    target = int(spec.params["target"]) if "target" in spec.params else _default_target(log)
    if target not in log.ids():
        raise ValueError(f"suspension target 0x{target:03X} absent from log")

    def keep(f: LabeledFrame) -> bool:
        return not (f.can_id == target and spec.start <= f.timestamp <= spec.end)

    return _merge(log, [], AttackInterval(spec.kind, spec.start, spec.end, target), keep)


INJECTORS = {
    AttackKind.DOS: inject_dos,
    AttackKind.FUZZY: inject_fuzzy,
    AttackKind.FUZZING_ID: inject_fuzzing_id,
    AttackKind.FUZZING_PAYLOAD: inject_fuzzing_payload,
    AttackKind.SPOOFING: inject_spoofing,
    AttackKind.DIAGNOSTIC: inject_diagnostic,
    AttackKind.REPLAY: inject_replay,
    AttackKind.SUSPENSION: inject_suspension,
}


def inject(log: FrameLog, spec: AttackSpec, seed: int = 0) -> FrameLog:
    return INJECTORS[spec.kind](log, spec, seed=seed)


def mix_attacks(log: FrameLog, specs: Sequence[AttackSpec], seed: int = 0) -> FrameLog:
    """Apply ``specs`` in order; their intervals must not overlap."""
    ordered = sorted(specs, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise ValueError(
                f"overlapping attacks: {a.kind.value} [{a.start}, {a.end}) "
                f"and {b.kind.value} [{b.start}, {b.end})"
            )
    seeds = np.random.SeedSequence(seed).generate_state(max(1, len(specs)))
    for spec, s in zip(specs, seeds):
        log = inject(log, spec, seed=int(s))
    return log


# The four-attack mix of the public car-hacking captures.
MIXED_KINDS = (AttackKind.REPLAY, AttackKind.DOS, AttackKind.FUZZY, AttackKind.SPOOFING)


def default_attack(kind: AttackKind, duration: float = 60.0) -> AttackSpec:
    """Single-attack default: the attack spans 40%..80% of the capture."""
    return AttackSpec(AttackKind(kind), round(0.4 * duration, 6), round(0.8 * duration, 6))


def default_mixed(duration: float = 60.0, kinds: Sequence[AttackKind] = MIXED_KINDS) -> list:
    """Consecutive equal slices of the 40%..80% span, one per kind."""
    start, end = 0.4 * duration, 0.8 * duration
    step = (end - start) / len(kinds)
    return [
        AttackSpec(AttackKind(k), round(start + i * step, 6), round(start + (i + 1) * step, 6))
        for i, k in enumerate(kinds)
    ]


def synthesize_corpus(kind: Optional[str] = None, duration: float = 60.0,
                      seed: int = 7) -> FrameLog:
    """Default baseline plus one default attack (``kind="Mixed"`` for the mix)."""
    log = generate_baseline(default_profile(duration, seed=seed))
    if kind is None:
        return log
    if kind == "Mixed":
        return mix_attacks(log, default_mixed(duration), seed=seed)
    return mix_attacks(log, [default_attack(AttackKind(kind), duration)], seed=seed)


# ---------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    profile: BaselineProfile
    attacks: list
    seed: int = 0

    def build(self) -> FrameLog:
        return mix_attacks(generate_baseline(self.profile), self.attacks, seed=self.seed)


def _as_int(value) -> int:
    return int(value, 0) if isinstance(value, str) else int(value)


_PARAM_CONVERTERS = {
    "flood_id": _as_int,
    "target": _as_int,
    "id_range": lambda v: tuple(_as_int(x) for x in v),
    "source": lambda v: tuple(float(x) for x in v),
}


def _attack_from_dict(doc: dict, duration: float) -> AttackSpec:
    doc = dict(doc)
    try:
        kind = AttackKind(doc.pop("kind"))
    except KeyError:
        raise ValueError("attack entry needs a 'kind'") from None
    default = default_attack(kind, duration)
    start = float(doc.pop("start", default.start))
    end = float(doc.pop("end", default.end))
    rate = doc.pop("rate", None)
    params = {}
    for key, value in doc.items():
        if key not in _PARAM_CONVERTERS:
            raise ValueError(f"unknown attack field {key!r} for {kind.value}")
        params[key] = _PARAM_CONVERTERS[key](value)
    if end > duration:
        raise ValueError(f"{kind.value} attack ends at {end} after the {duration} s capture")
    return AttackSpec(kind, start, end, None if rate is None else float(rate), params)


def scenario_from_dict(doc: dict, seed: Optional[int] = None) -> Scenario:
    """Build a :class:`Scenario` from a parsed scenario document.

    See the README for the schema. ``seed`` overrides the document's seed.
    """
    doc = doc or {}
    unknown = set(doc) - {"seed", "baseline", "attacks"}
    if unknown:
        raise ValueError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    base = doc.get("baseline") or {}
    duration = float(base.get("duration", 60.0))
    if "ecus" in base:
        ecus = tuple(
            Ecu(_as_int(e["can_id"]), float(e["period_ms"]), int(e.get("payload_seed", i)),
                float(e.get("offset_ms", 0.0)), int(e.get("dlc", 8)))
            for i, e in enumerate(base["ecus"])
        )
        profile = BaselineProfile(ecus, float(base.get("jitter_fraction", 0.1)), duration, seed)
    else:
        profile = replace(default_profile(duration, seed),
                          jitter_fraction=float(base.get("jitter_fraction", 0.1)))
    attacks = [_attack_from_dict(a, duration) for a in doc.get("attacks") or []]
    return Scenario(profile, attacks, seed)


def load_scenario(path: str, seed: Optional[int] = None) -> Scenario:
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is not None and not isinstance(doc, dict):
        raise ValueError(f"{path}: scenario must be a mapping")
    return scenario_from_dict(doc, seed)
