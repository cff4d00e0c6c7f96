"""CAN traffic logs: frame types plus readers/writers for the dataset CSV and
candump text formats.

Dataset CSV records look like::

    1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R

``R`` marks a regular frame and ``T`` an injected one. Lines starting with
``#`` are comments. A comment of the form
``# attack kind=DoS start=24 end=48 target=0x000`` records an attack interval,
so suspension attacks (which add no frames) survive a round trip.
"""

from __future__ import annotations

import enum
import io
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

MAX_STD_ID = 0x7FF
MAX_EXT_ID = 0x1FFFFFFF


class LogFormatError(ValueError):
    """Malformed or invalid log input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


class FrameLabel(str, enum.Enum):
    NORMAL = "Normal"
    INJECTED = "Injected"


class AttackKind(str, enum.Enum):
    DOS = "DoS"
    FUZZY = "Fuzzy"
    FUZZING_ID = "FuzzingId"
    FUZZING_PAYLOAD = "FuzzingPayload"
    SPOOFING = "Spoofing"
    DIAGNOSTIC = "Diagnostic"
    REPLAY = "Replay"
    SUSPENSION = "Suspension"


@dataclass(frozen=True)
class LabeledFrame:
    timestamp: float
    can_id: int
    dlc: int
    payload: bytes = b""
    label: FrameLabel = FrameLabel.NORMAL
    attack_kind: Optional[AttackKind] = None

    @property
    def injected(self) -> bool:
        return self.label is FrameLabel.INJECTED

    @property
    def extended(self) -> bool:
        return self.can_id > MAX_STD_ID

    def validate(self, id_width: int = 11) -> None:
        if not 0 <= self.dlc <= 8:
            raise LogFormatError(f"dlc {self.dlc} outside 0..8")
        if len(self.payload) != self.dlc:
            raise LogFormatError(
                f"payload arity mismatch: dlc={self.dlc}, {len(self.payload)} bytes"
            )
        limit = MAX_STD_ID if id_width == 11 else MAX_EXT_ID
        if not 0 <= self.can_id <= limit:
            raise LogFormatError(f"can_id 0x{self.can_id:X} exceeds {id_width}-bit range")
        if self.timestamp < 0:
            raise LogFormatError(f"negative timestamp {self.timestamp}")


@dataclass(frozen=True)
class AttackInterval:
    """Metadata for one applied attack: time span plus target where relevant."""

    kind: AttackKind
    start: float
    end: float
    target: Optional[int] = None

    def overlap(self, start: float, end: float) -> float:
        return max(0.0, min(self.end, end) - max(self.start, start))


@dataclass
class FrameLog:
    frames: list = field(default_factory=list)
    source: str = ""
    id_width: int = 11
    attacks: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[LabeledFrame]:
        return iter(self.frames)

    @property
    def suspensions(self) -> list:
        return [a for a in self.attacks if a.kind is AttackKind.SUSPENSION]

    @property
    def duration(self) -> float:
        if not self.frames:
            return 0.0
        return self.frames[-1].timestamp - self.frames[0].timestamp

    def ids(self) -> set:
        return {f.can_id for f in self.frames}

    def validate(self) -> None:
        prev = None
        for i, frame in enumerate(self.frames):
            frame.validate(self.id_width)
            if prev is not None and frame.timestamp < prev:
                raise LogFormatError(
                    f"decreasing timestamp {frame.timestamp!r} after {prev!r} (frame {i})"
                )
            prev = frame.timestamp


Source = Union[str, bytes, IO[str], IO[bytes], Iterable[str]]

_ATTACK_RE = re.compile(r"^#\s*attack\s+(.*)$")


def _lines(stream: Source) -> Iterator[str]:
    if isinstance(stream, bytes):
        stream = stream.decode("ascii")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("ascii")
        yield line.rstrip("\r\n")


def _parse_attack_comment(body: str, lineno: int) -> AttackInterval:
    fields = dict(tok.split("=", 1) for tok in body.split() if "=" in tok)
    try:
        target = fields.get("target")
        return AttackInterval(
            kind=AttackKind(fields["kind"]),
            start=float(fields["start"]),
            end=float(fields["end"]),
            target=int(target, 16) if target not in (None, "", "none") else None,
        )
    except (KeyError, ValueError) as exc:
        raise LogFormatError(f"bad attack directive ({exc})", lineno, "attack") from None


def _parse_hex_id(text: str, lineno: int) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise LogFormatError(f"bad CAN id {text!r}", lineno, "can_id") from None


def _finish(frames: list, attacks: list, source: str) -> FrameLog:
    width = 29 if any(f.can_id > MAX_STD_ID for f in frames) else 11
    if attacks:
        # frames carry no kind in the CSV; recover it from the recorded intervals
        tagged = []
        for f in frames:
            if f.injected and f.attack_kind is None:
                for a in attacks:
                    if a.start <= f.timestamp <= a.end and a.kind is not AttackKind.SUSPENSION:
                        f = LabeledFrame(f.timestamp, f.can_id, f.dlc, f.payload, f.label, a.kind)
                        break
            tagged.append(f)
        frames = tagged
    return FrameLog(frames=frames, source=source, id_width=width, attacks=attacks)


def parse_dataset_csv(stream: Source, source: str = "") -> FrameLog:
    """Parse ``timestamp,id_hex,dlc,b0..b{dlc-1},flag`` records.

    A leading header line (first field not numeric) is skipped. Raises
    :class:`LogFormatError` naming the line for any malformed record.
    """
    frames = []
    attacks = []
    prev_ts = None
    seen_data = False
    for lineno, line in enumerate(_lines(stream), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _ATTACK_RE.match(stripped)
            if m:
                attacks.append(_parse_attack_comment(m.group(1), lineno))
            continue
        parts = [p.strip() for p in stripped.split(",")]
        try:
            ts = float(parts[0])
        except ValueError:
            if not seen_data and not frames:
                seen_data = True  # header
                continue
            raise LogFormatError(f"bad timestamp {parts[0]!r}", lineno, "timestamp") from None
        seen_data = True
        if len(parts) < 4:
            raise LogFormatError("truncated record", lineno)
        can_id = _parse_hex_id(parts[1], lineno)
        try:
            dlc = int(parts[2])
        except ValueError:
            raise LogFormatError(f"bad dlc {parts[2]!r}", lineno, "dlc") from None
        if not 0 <= dlc <= 8:
            raise LogFormatError(f"dlc {dlc} outside 0..8", lineno, "dlc")
        data = parts[3:-1]
        flag = parts[-1]
        if len(data) != dlc:
            raise LogFormatError("payload arity mismatch", lineno, "payload")
        if flag not in ("R", "T"):
            raise LogFormatError(f"bad flag {flag!r}", lineno, "flag")
        try:
            payload = bytes(int(b, 16) for b in data)
        except ValueError:
            raise LogFormatError(f"bad payload byte in {data!r}", lineno, "payload") from None
        if prev_ts is not None and ts < prev_ts:
            raise LogFormatError(
                f"decreasing timestamp {ts!r} after {prev_ts!r}", lineno, "timestamp"
            )
        if ts < 0:
            raise LogFormatError(f"negative timestamp {ts!r}", lineno, "timestamp")
        if can_id > MAX_EXT_ID:
            raise LogFormatError(f"can_id 0x{can_id:X} exceeds 29-bit range", lineno, "can_id")
        prev_ts = ts
        label = FrameLabel.INJECTED if flag == "T" else FrameLabel.NORMAL
        frames.append(LabeledFrame(ts, can_id, dlc, payload, label))
    return _finish(frames, attacks, source)


_CANDUMP_RE = re.compile(r"^\(\s*(?P<ts>[0-9.]+)\s*\)\s+(?P<ifname>\S+)\s+(?P<body>\S+)$")


def parse_candump(stream: Source, source: str = "") -> FrameLog:
    """Parse candump ``-L`` style lines: ``(0.023000) can0 130#11223344``."""
    frames = []
    prev_ts = None
    for lineno, line in enumerate(_lines(stream), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _CANDUMP_RE.match(stripped)
        if not m:
            raise LogFormatError("malformed candump line", lineno)
        body = m.group("body")
        if "#" not in body:
            raise LogFormatError("missing '#' separator", lineno, "body")
        id_text, data = body.split("#", 1)
        can_id = _parse_hex_id(id_text, lineno)
        if can_id > MAX_EXT_ID:
            raise LogFormatError(f"can_id 0x{can_id:X} exceeds 29-bit range", lineno, "can_id")
        if len(data) % 2:
            raise LogFormatError("odd number of payload hex digits", lineno, "payload")
        try:
            payload = bytes.fromhex(data)
        except ValueError:
            raise LogFormatError(f"bad payload {data!r}", lineno, "payload") from None
        if len(payload) > 8:
            raise LogFormatError("payload longer than 8 bytes", lineno, "payload")
        ts = float(m.group("ts"))
        if prev_ts is not None and ts < prev_ts:
            raise LogFormatError(
                f"decreasing timestamp {ts!r} after {prev_ts!r}", lineno, "timestamp"
            )
        prev_ts = ts
        frames.append(LabeledFrame(ts, can_id, len(payload), payload))
    return _finish(frames, [], source)


def _format_id(can_id: int, id_width: int) -> str:
    return f"{can_id:04x}" if id_width == 11 else f"{can_id:08x}"


def format_attack_comment(attack: AttackInterval) -> str:
    target = "none" if attack.target is None else f"0x{attack.target:03X}"
    return (
        f"# attack kind={attack.kind.value} start={attack.start!r} "
        f"end={attack.end!r} target={target}"
    )


def iter_dataset_csv(log: FrameLog, header: Sequence[str] = ()) -> Iterator[str]:
    for line in header:
        yield f"# {line}\n" if line else "#\n"
    for attack in log.attacks:
        yield format_attack_comment(attack) + "\n"
    for f in log.frames:
        data = ",".join(f"{b:02x}" for b in f.payload)
        flag = "T" if f.injected else "R"
        cells = [f"{f.timestamp:.6f}", _format_id(f.can_id, log.id_width), str(f.dlc)]
        if data:
            cells.append(data)
        cells.append(flag)
        yield ",".join(cells) + "\n"


def write_dataset_csv(log: FrameLog, sink: IO[str], header: Sequence[str] = ()) -> None:
    """Write ``log`` in dataset CSV form. ``header`` lines become ``#`` comments."""
    for chunk in iter_dataset_csv(log, header):
        sink.write(chunk)


def write_candump(log: FrameLog, sink: IO[str], ifname: str = "can0") -> None:
    for f in log.frames:
        ident = f"{f.can_id:03X}" if f.can_id <= MAX_STD_ID else f"{f.can_id:08X}"
        sink.write(f"({f.timestamp:.6f}) {ifname} {ident}#{f.payload.hex().upper()}\n")


def dumps_dataset_csv(log: FrameLog, header: Sequence[str] = ()) -> str:
    return "".join(iter_dataset_csv(log, header))


def read_log(path: str) -> FrameLog:
    """Open ``path`` and dispatch on content: candump lines start with ``(``."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if first.startswith("("):
        return parse_candump(text, source=path)
    return parse_dataset_csv(text, source=path)
