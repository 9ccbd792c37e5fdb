"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Oracles here are written independently of the package code paths they check:
exact rational arithmetic for depth, a dense textbook Kalman step, a
scan-for-maximum greedy matcher, and a counter-based latch fault model.
"""

import contextlib
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from autoplatoon.depth import CalibrationAnchor, DepthQuery, bilinear_depth, calibrate
from autoplatoon.harness import check_rows, load_scenario, run
from autoplatoon.latch import Latch, LatchCommand, LatchThresholds, Origin, TriggerConditions, Verb
from autoplatoon.perception import RelativeDepthMap
from autoplatoon.tracker import H, KalmanState, greedy_match, kf_predict, kf_update, transition

MATCH_THRESHOLD = 0.65


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def _report(number, title):
        started = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            with capsys.disabled():
                print(f"\n[FAIL] criterion {number}: {title} :: {type(exc).__name__}: {exc}")
            raise
        with capsys.disabled():
            print(f"\n[PASS] criterion {number}: {title} ({time.perf_counter() - started:.2f} s)")

    return _report


# -- 1: depth formulas -------------------------------------------------------


def _bilinear_oracle(values, x, y):
    """Exact rational bilinear interpolation, written as two linear blends."""
    h, w = values.shape
    x, y = Fraction(x), Fraction(y)
    x1 = min(int(math.floor(x)), w - 2)
    y1 = min(int(math.floor(y)), h - 2)
    tx, ty = x - x1, y - y1
    v = lambda r, c: Fraction(float(values[r, c]))  # noqa: E731
    top = v(y1, x1) + tx * (v(y1, x1 + 1) - v(y1, x1))
    bottom = v(y1 + 1, x1) + tx * (v(y1 + 1, x1 + 1) - v(y1 + 1, x1))
    return top + ty * (bottom - top)


def _rel_err(got, exact):
    return abs(Fraction(got) - exact) / abs(exact)


def test_criterion_1_depth_formulas(criterion):
    with criterion(1, "depth calibration and bilinear lookup exact to 1e-12 on 1000 inputs; worked example"):
        started = time.perf_counter()
        example = RelativeDepthMap(np.array([[1.0, 2.0], [3.0, 4.0]]), (0, 0), 0.5)
        assert bilinear_depth(example, DepthQuery(0.25, 0.75)) == pytest.approx(2.75, rel=1e-12)

        rng = np.random.default_rng(20240601)
        worst = 0.0
        for i in range(1000):
            w, h = rng.integers(2, 9, size=2)
            values = rng.uniform(0.05, 20.0, size=(h, w))
            dmap = RelativeDepthMap(values, (int(h - 1), 0), float(rng.uniform(0.1, 2.0)))
            # include exact edges and grid points alongside interior points
            x = float(rng.choice([0.0, w - 1.0, float(rng.integers(0, w)), rng.uniform(0, w - 1)]))
            y = float(rng.choice([0.0, h - 1.0, float(rng.integers(0, h)), rng.uniform(0, h - 1)]))
            d_rel = bilinear_depth(dmap, DepthQuery(x, y))
            worst = max(worst, _rel_err(d_rel, _bilinear_oracle(values, x, y)))

            anchor = CalibrationAnchor(float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.05, 10.0)))
            exact = Fraction(d_rel) * Fraction(anchor.d_ref) / Fraction(anchor.d_rel_ref)
            worst = max(worst, _rel_err(calibrate(d_rel, anchor), exact))
        elapsed = time.perf_counter() - started
        assert worst <= 1e-12, f"max relative error {worst:.3e}"
        assert elapsed < 1.0, f"took {elapsed:.2f} s"


# -- 2: Kalman equivalence ---------------------------------------------------


def _spd(rng, n, scale):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T / n + 0.1 * np.eye(n))


def _textbook_step(x, p, f, q, r, z):
    x = f @ x
    p = f @ p @ f.T + q
    s = H @ p @ H.T + r
    k = p @ H.T @ np.linalg.inv(s)
    x = x + k @ (z - H @ x)
    p = (np.eye(len(x)) - k @ H) @ p
    return x, p


def test_criterion_2_kalman_equivalence(criterion):
    with criterion(2, "kf_predict/kf_update equal a dense textbook step on 1000 instances to 1e-9; cov sym PSD"):
        started = time.perf_counter()
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(1000):
            dt = float(rng.uniform(0.01, 0.2))
            x0 = rng.normal(0, 100, size=7)
            p0 = _spd(rng, 7, float(rng.uniform(0.1, 100.0)))
            q = _spd(rng, 7, float(rng.uniform(0.01, 10.0)))
            r = _spd(rng, 4, float(rng.uniform(0.1, 10.0)))
            z = rng.normal(0, 100, size=4)

            kf = kf_predict(KalmanState(x0, p0), dt, q, s_floor=-np.inf)
            assert np.array_equal(kf.cov, kf.cov.T)
            kf = kf_update(kf, z, r, s_floor=-np.inf)
            x_ref, p_ref = _textbook_step(x0, p0, transition(dt), q, r, z)

            worst = max(
                worst,
                np.max(np.abs(kf.mean - x_ref)) / max(1.0, np.max(np.abs(x_ref))),
                np.max(np.abs(kf.cov - p_ref)) / max(1.0, np.max(np.abs(p_ref))),
            )
            assert np.array_equal(kf.cov, kf.cov.T)
            assert np.linalg.eigvalsh(kf.cov).min() >= -1e-9 * np.abs(kf.cov).max()
        elapsed = time.perf_counter() - started
        assert worst <= 1e-9, f"max normalized difference {worst:.3e}"
        assert elapsed < 5.0, f"took {elapsed:.2f} s"


# -- 3: association ----------------------------------------------------------


def _greedy_oracle(track_ids, sim, threshold):
    """Repeatedly take the best remaining pair; ties go to lower track id, then detection."""
    rows = set(range(sim.shape[0]))
    cols = set(range(sim.shape[1]))
    matches = []
    while rows and cols:
        best = None
        for i in rows:
            for j in cols:
                key = (sim[i, j], -track_ids[i], -j)
                if best is None or key > best[0]:
                    best = (key, i, j)
        (value, _, _), i, j = best
        if value < threshold:
            break
        matches.append((track_ids[i], j))
        rows.discard(i)
        cols.discard(j)
    return matches


def test_criterion_3_association(criterion):
    with criterion(3, "greedy matcher equals brute-force greedy (tie grids enumerated to 3x4, 4x4 sampled); nothing below 0.65"):
        started = time.perf_counter()
        below = 0.6499999999
        grids_by_size = {
            5: (0.3, below, MATCH_THRESHOLD, 0.8, 0.95),
            4: (below, MATCH_THRESHOLD, 0.8, 0.95),
            3: (below, MATCH_THRESHOLD, 0.9),
            2: (below, MATCH_THRESHOLD),
        }
        rng = np.random.default_rng(3)
        checked = 0
        for nt, nd in itertools.product(range(5), repeat=2):
            cells = nt * nd
            ids = [int(v) for v in rng.permutation(np.arange(1, 20))[:nt]]
            # full enumeration over a value grid with ties when small enough, else a dense random sample
            k = next((k for k in (5, 4, 3, 2) if k ** cells <= 6600), None)
            if k is not None:
                grids = itertools.product(grids_by_size[k], repeat=cells)
            else:
                grids = (rng.choice(grids_by_size[5], size=cells) for _ in range(6000))
            for flat in grids:
                sim = np.asarray(flat, dtype=float).reshape(nt, nd)
                got, un_t, un_d = greedy_match(ids, sim, MATCH_THRESHOLD)
                assert got == _greedy_oracle(ids, sim, MATCH_THRESHOLD), (ids, sim)
                index = {tid: i for i, tid in enumerate(ids)}
                assert all(sim[index[t], j] >= MATCH_THRESHOLD for t, j in got)
                assert sorted(un_t + [t for t, _ in got]) == sorted(ids)
                assert sorted(un_d + [j for _, j in got]) == list(range(nd))
                checked += 1
        elapsed = time.perf_counter() - started
        assert checked > 30000, checked
        assert elapsed < 5.0, f"took {elapsed:.2f} s"


# -- 4: ID stability ---------------------------------------------------------


def _track_events(rows, agent):
    out = []
    for r in rows:
        if r["agent"] == agent:
            for ev in filter(None, r["track_events"].split(";")):
                kind, _, tid = ev.partition(":")
                out.append((int(r["tick"]), kind, int(tid)))
    return out


def test_criterion_4_id_stability(criterion, scenario_dir):
    with criterion(4, "10-tick occlusion: 0 ID switches; max_age+5 occlusion: 1 removal then 1 new track"):
        short = load_scenario(scenario_dir / "occlusion_short.yaml")
        long_ = load_scenario(scenario_dir / "occlusion_long.yaml")
        assert short.duration == 500 and short.noise.embedding_sigma == 0.05
        assert short.occlusions[0].ticks == 10 < short.tracker.max_age
        assert long_.occlusions[0].ticks == long_.tracker.max_age + 5

        res = run(short)
        f = res.metrics.followers["F1"]
        assert res.verdict.ok, res.verdict.summary()
        assert f.follow_ticks > 400
        assert f.id_switches == 0
        assert (f.tracks_created, f.tracks_removed) == (1, 0)

        res = run(long_)
        assert res.verdict.ok, res.verdict.summary()
        lifecycle = [(k, tid) for _, k, tid in _track_events(res.rows, "F1") if k != "TrackUpdated"]
        assert lifecycle == [("TrackCreated", 1), ("TrackRemoved", 1), ("TrackCreated", 2)]


# -- 5: 30 cm following ------------------------------------------------------


def test_criterion_5_following(criterion, scenario_dir):
    with criterion(5, "follower converges to 0.30 +/- 0.05 m within 400 ticks, holds 200, never below 0.25 m"):
        s = load_scenario(scenario_dir / "baseline_follow.yaml")
        assert s.leader.script[0].v == 0.2 and s.leader.pose[0] - s.agents[1].pose[0] == 1.0
        res = run(s)
        assert res.verdict.ok, res.verdict.summary()
        ranges = [(int(r["tick"]), float(r["true_range"])) for r in res.rows if r["agent"] == "F1"]
        # independent scan for the first 200-tick window inside the band
        start = next(
            (t for t, _ in ranges if all(abs(rg - 0.30) <= 0.05 for _, rg in ranges[t:t + 200])
             and len(ranges[t:t + 200]) == 200),
            None,
        )
        assert start is not None and start <= 400, f"converged at {start}"
        assert start == res.metrics.followers["F1"].convergence_tick
        assert min(rg for _, rg in ranges) >= 0.25


# -- 6: stop-state propagation ----------------------------------------------


def test_criterion_6_stop_propagation(criterion, scenario_dir):
    with criterion(6, "STOP observed within L+P=5 ticks, zero command next tick, Follow resumes on same target"):
        base = load_scenario(scenario_dir / "obstacle_stop.yaml")
        assert base.network.status.latency == 3 and base.network.poll_period == 2
        bound = 3 + 2
        for spawn in (200, 201):  # both poll phases
            obstacle = base.obstacles[0].model_copy(update={"spawn": spawn, "remove": spawn + 20})
            res = run(base.model_copy(update={"obstacles": [obstacle]}))
            assert res.verdict.ok, res.verdict.summary()
            rows = res.rows
            server = {int(r["tick"]): r for r in rows if r["agent"] == "server"}
            arrival = next(t for t, r in sorted(server.items()) if "report:" in r["server_events"])
            stop_version = int(server[arrival]["server_version"])
            resume = next(t for t, r in sorted(server.items()) if t > arrival and r["server_fleet"] == "RUN")
            for agent in ("F1", "F2"):
                by_tick = {int(r["tick"]): r for r in rows if r["agent"] == agent}
                seen = next(t for t in sorted(by_tick) if t >= arrival
                            and int(by_tick[t]["version_observed"]) >= stop_version)
                assert seen - arrival <= bound, f"{agent} saw STOP after {seen - arrival} ticks"
                nxt = by_tick[seen + 1]
                assert float(nxt["v_cmd"]) == 0.0 and float(nxt["w_cmd"]) == 0.0
                before = [by_tick[t]["target_track_id"] for t in range(spawn - 5, spawn)
                          if by_tick[t]["plan"] == "Follow"]
                after = next(by_tick[t] for t in sorted(by_tick) if t > resume and by_tick[t]["plan"] == "Follow")
                assert before and after["target_track_id"] == before[-1]
                assert after["latch"] == "Engaged"
            for p in res.metrics.stop_propagation:
                assert p.latency is not None and p.latency <= bound


# -- 7: latch safety fuzz ----------------------------------------------------


def _sticky(rng, state, p_flip):
    return (not state) if rng.random() < p_flip else state


def test_criterion_7_latch_fuzz(criterion):
    with criterion(7, "10,000-step latch fuzz: no unjustified Engaged, every sustained fault disengages in 1 tick"):
        th = LatchThresholds()
        latch = Latch(th)
        rng = np.random.default_rng(99)
        flags = {"leader_recognized": True, "comms_healthy": True, "depth_valid": True, "hold": False}
        runs = {"leader_recognized": 0, "comms_healthy": 0, "depth_valid": 0}
        limits = {"leader_recognized": th.t_track, "comms_healthy": th.t_fail, "depth_valid": th.t_depth_fail}
        honors_hold = {"leader_recognized": True, "comms_healthy": False, "depth_valid": True}
        rows, overdue = [], None
        faults_seen = 0
        for t in range(10_000):
            for name in flags:
                flags[name] = _sticky(rng, flags[name], 0.04 if flags[name] else 0.08)
            cond = TriggerConditions(**flags)
            commands = []
            if rng.random() < 0.08:
                verb = Verb.ENGAGE if rng.random() < 0.75 else Verb.DISENGAGE
                origin = Origin.OPERATOR if rng.random() < 0.5 else Origin.LEADER
                commands.append(LatchCommand(verb, origin, t, "operator" if origin is Origin.OPERATOR else "L", "F1"))
            was_engaged = latch.engaged
            latch.step(commands, cond, t)

            exceeded = False
            for name in runs:
                ok = flags[name] or (honors_hold[name] and flags["hold"])
                runs[name] = 0 if ok else runs[name] + 1
                exceeded |= runs[name] > limits[name]
            if was_engaged and exceeded and overdue is None:
                overdue = t + 1
                faults_seen += 1
            if overdue is not None:
                if not latch.engaged:
                    overdue = None
                else:
                    assert t <= overdue, f"fault at tick {overdue - 1} not handled by tick {t}"
            rows.append({
                "tick": str(t), "agent": "F1", "role": "Follower", "latch": latch.state.mode.value,
                "latch_cmd": ";".join(f"{c.verb.value}@{c.origin.value}" for c in commands),
                "leader_recognized": "1" if cond.leader_recognized else "0",
                "comms_healthy": "1" if cond.comms_healthy else "0",
                "depth_valid": "1" if cond.depth_valid else "0",
                "v_cmd": "0.0", "w_cmd": "0.0", "obstacle_in_frame": "0", "fleet_observed": "RUN",
                "plan": "Idle", "version_observed": "0", "latch_events": "", "track_events": "",
                "true_range": "", "desired_range": "", "target_track_id": "",
            })
        verdict = check_rows(rows)
        assert verdict.ok, verdict.summary()
        engagements = sum(1 for e in latch.log if e.kind.value == "Engaged")
        assert engagements > 20 and faults_seen > 20, (engagements, faults_seen)


# -- 8: determinism ----------------------------------------------------------


def test_criterion_8_determinism(criterion, scenario_dir):
    with criterion(8, "equal seeds give byte-identical CSV; sim and http give identical plan/latch events"):
        for path in sorted(scenario_dir.glob("*.yaml")):
            s = load_scenario(path)
            assert run(s).csv_text == run(s).csv_text, path.name
        for name in ("obstacle_stop", "comms_chaos"):
            s = load_scenario(scenario_dir / f"{name}.yaml")
            sim, http = run(s, transport="sim"), run(s, transport="http")
            assert sim.metrics.plan_transitions == http.metrics.plan_transitions, name
            assert sim.metrics.latch_events == http.metrics.latch_events, name
            assert sim.metrics.stop_propagation == http.metrics.stop_propagation, name
