from .messages import (
    Ack,
    DepthReading,
    PerceptionRequest,
    PerceptionResult,
    PollReply,
    PollRequest,
    PoseEstimate,
    ResolveStop,
    StatusUpdate,
    StopCause,
    SystemState,
    TrackReport,
    WireError,
    dumps,
    loads,
)
from .network import Chaos, LinkConfig, VirtualNetwork
from .server import CommsError, PerceptionConfig, PerceptionServer, Rejected, StatusServer, UnknownAgent, UnknownSnapshot
from .transport import HttpTransport, InProcessTransport

__all__ = [
    "Ack",
    "Chaos",
    "CommsError",
    "DepthReading",
    "HttpTransport",
    "InProcessTransport",
    "LinkConfig",
    "PerceptionConfig",
    "PerceptionRequest",
    "PerceptionResult",
    "PerceptionServer",
    "PollReply",
    "PollRequest",
    "PoseEstimate",
    "Rejected",
    "ResolveStop",
    "StatusServer",
    "StatusUpdate",
    "StopCause",
    "SystemState",
    "TrackReport",
    "UnknownAgent",
    "UnknownSnapshot",
    "VirtualNetwork",
    "WireError",
    "dumps",
    "loads",
]
