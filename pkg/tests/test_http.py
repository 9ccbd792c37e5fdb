import json
import threading
import urllib.request

import pytest

from autoplatoon.comms import HttpTransport, PerceptionServer, Rejected, StatusServer, UnknownAgent
from autoplatoon.comms.http import ServiceThread
from autoplatoon.comms.messages import PoseEstimate, StatusUpdate
from autoplatoon.latch import LatchCommand, LatchMode, Origin, Verb
from autoplatoon.planner import FleetState, PlanKind


@pytest.fixture
def service():
    status = StatusServer(["F1", "F2"], "L")
    with ServiceThread(status, PerceptionServer(["F1", "F2"])) as svc:
        yield status, svc


def _update(agent, tick, seen):
    return StatusUpdate(agent, tick, PoseEstimate(0, 0, 0), LatchMode.ENGAGED, PlanKind.FOLLOW, seen)


def test_endpoints_round_trip(service):
    status, svc = service
    client = HttpTransport(svc.url)
    assert client.submit_status(_update("F1", 1, True), 2).ok
    reply = client.poll("F2", 2, 2)
    assert reply.state.fleet_state is FleetState.STOP and reply.state.version == 1
    client.latch_command(LatchCommand(Verb.ENGAGE, Origin.OPERATOR, 3, "operator", "F2"))
    assert len(client.poll("F2", 3, 3).commands) == 1
    assert client.resolve_stop("F1", 4).fleet_state is FleetState.RUN
    with pytest.raises(Rejected):
        client.resolve_stop("F1", 5)
    with pytest.raises(UnknownAgent):
        client.poll("nobody", 0, 0)
    client.close()


def test_bad_body_is_400(service):
    _, svc = service
    req = urllib.request.Request(svc.url + "/status", data=b'{"agent_id": 3}', method="POST")
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(req)
    assert err.value.code == 400
    assert "error" in json.loads(err.value.read())


def test_concurrent_reports_are_linearizable(service):
    status, svc = service

    def worker(agent):
        client = HttpTransport(svc.url)
        for t in range(1, 41):
            client.submit_status(_update(agent, t, t % 2 == 1), t)
        client.close()

    threads = [threading.Thread(target=worker, args=(a,)) for a in ("F1", "F2")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    # each agent toggled 20 reports and 20 resolutions; every one bumped the version once
    assert status.state.version == 80
    assert status.state.fleet_state is FleetState.RUN and status.unresolved == 0
    versions = [e.version for e in status.events]
    assert versions == list(range(1, 81))
