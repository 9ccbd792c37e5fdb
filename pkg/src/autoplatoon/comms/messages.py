"""Protocol records and their canonical wire encoding.

Every message is a frozen dataclass. On the wire it is a compact JSON object
whose keys follow the dataclass field order; enums travel as their string
values, tuples as arrays, and floats in shortest round-trip form, so
``loads(type(m), dumps(m)) == m`` for every message.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import typing
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Type, TypeVar

from ..latch import LatchCommand, LatchMode, Origin, Verb  # noqa: F401  (re-exported wire types)
from ..perception import ClassLabel, Detection
from ..planner import FleetState, PlanKind

T = TypeVar("T")


@dataclass(frozen=True)
class PoseEstimate:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class StatusUpdate:
    agent_id: str
    tick: int
    pose: PoseEstimate
    latch_mode: LatchMode
    plan_kind: PlanKind
    obstacle_seen: bool
    target_track_id: Optional[int] = None


@dataclass(frozen=True)
class StopCause:
    agent_id: str
    tick: int


@dataclass(frozen=True)
class SystemState:
    fleet_state: FleetState = FleetState.RUN
    cause: Optional[StopCause] = None
    version: int = 0


@dataclass(frozen=True)
class PollRequest:
    agent_id: str
    tick: int


@dataclass(frozen=True)
class PollReply:
    agent_id: str
    tick: int
    state: SystemState
    commands: Tuple[LatchCommand, ...] = ()


@dataclass(frozen=True)
class PerceptionRequest:
    agent_id: str
    tick: int
    snapshot_id: int


@dataclass(frozen=True)
class TrackReport:
    track_id: int
    class_label: ClassLabel
    x_c: float
    y_c: float
    s: float
    a: float
    frames_since_update: int
    hits: int

    @property
    def centroid(self) -> Tuple[float, float]:
        return self.x_c, self.y_c

    @property
    def bbox(self) -> Tuple[float, float, float, float]:
        return self.x_c, self.y_c, self.s, self.a


@dataclass(frozen=True)
class DepthReading:
    track_id: int
    meters: float


@dataclass(frozen=True)
class TrackEventRecord:
    kind: str
    track_id: int


@dataclass(frozen=True)
class PerceptionResult:
    agent_id: str
    tick: int
    detections: Tuple[Detection, ...] = ()
    tracks: Tuple[TrackReport, ...] = ()
    depth: Tuple[DepthReading, ...] = ()
    events: Tuple[TrackEventRecord, ...] = ()

    def depth_by_track(self) -> dict:
        return {d.track_id: d.meters for d in self.depth}


@dataclass(frozen=True)
class ResolveStop:
    agent_id: str
    tick: int = 0


@dataclass(frozen=True)
class Ack:
    ok: bool = True
    stale: bool = False
    error: str = ""


MESSAGE_TYPES = {
    cls.__name__: cls
    for cls in (
        StatusUpdate,
        SystemState,
        PollRequest,
        PollReply,
        PerceptionRequest,
        PerceptionResult,
        LatchCommand,
        ResolveStop,
        Ack,
    )
}


class WireError(ValueError):
    """Body does not decode into the expected message type."""


def encode(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: encode(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (tuple, list)):
        return [encode(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        return obj
    # numpy scalars
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _decode(tp: Any, data: Any) -> Any:
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if data is None:
            return None
        return _decode(args[0], data)
    if origin in (tuple, Tuple):
        args = typing.get_args(tp)
        if not isinstance(data, list):
            raise WireError(f"expected array for {tp}, got {type(data).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode(args[0], v) for v in data)
        if len(args) != len(data):
            raise WireError(f"expected {len(args)} items, got {len(data)}")
        return tuple(_decode(a, v) for a, v in zip(args, data))
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(data)
        except ValueError as exc:
            raise WireError(str(exc)) from None
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, data)
    if tp is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise WireError(f"expected number, got {data!r}")
        return float(data)
    if tp is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise WireError(f"expected integer, got {data!r}")
        return data
    if tp is bool:
        if not isinstance(data, bool):
            raise WireError(f"expected boolean, got {data!r}")
        return data
    if tp is str:
        if not isinstance(data, str):
            raise WireError(f"expected string, got {data!r}")
        return data
    raise WireError(f"unsupported wire type {tp!r}")


def from_dict(cls: Type[T], data: Any) -> T:
    if not isinstance(data, dict):
        raise WireError(f"{cls.__name__}: expected object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = set(data) - set(names)
    if unknown:
        raise WireError(f"{cls.__name__}: unknown fields {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _decode(hints[f.name], data[f.name])
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise WireError(f"{cls.__name__}: missing field {f.name!r}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise WireError(f"{cls.__name__}: {exc}") from None


def dumps(msg: Any) -> str:
    return json.dumps(encode(msg), separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def loads(cls: Type[T], text: str | bytes) -> T:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireError(f"malformed body: {exc}") from None
    return from_dict(cls, data)
