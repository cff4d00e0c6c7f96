import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cangraph.can_log import AttackKind, FrameLog, LabeledFrame, dumps_dataset_csv
from cangraph.graphing import WindowSpec, build_graph, window_stream
from cangraph.ranking import pagerank
from cangraph.traffic_synth import (
    AttackSpec,
    BaselineProfile,
    Ecu,
    default_profile,
    generate_baseline,
    inject,
    inject_diagnostic,
    inject_dos,
    inject_fuzzing_id,
    inject_fuzzing_payload,
    inject_fuzzy,
    inject_replay,
    inject_spoofing,
    inject_suspension,
    load_scenario,
    mix_attacks,
    scenario_from_dict,
)


def two_ecu(duration=2.0, jitter=0.0):
    return generate_baseline(BaselineProfile((Ecu(0x100, 10.0), Ecu(0x200, 20.0, 1, 5.0)),
                                             jitter, duration, seed=1))


def baseline(duration=4.0, seed=0):
    return generate_baseline(default_profile(duration, seed))


def test_single_ecu_periodic():
    log = generate_baseline(BaselineProfile((Ecu(0x10, 10.0),), 0.0, 1.0))
    assert len(log) == 100
    assert np.allclose([f.timestamp for f in log], np.arange(100) * 0.01, atol=1e-9)


def test_tie_break_lower_id_first():
    log = generate_baseline(BaselineProfile((Ecu(0x20, 10.0), Ecu(0x10, 10.0)), 0.0, 1.0))
    assert len(log) == 200
    assert [f.can_id for f in log.frames[:4]] == [0x10, 0x20, 0x10, 0x20]


def test_baseline_deterministic():
    a = dumps_dataset_csv(baseline(seed=5))
    b = dumps_dataset_csv(baseline(seed=5))
    assert a == b
    assert a != dumps_dataset_csv(baseline(seed=6))


def test_profile_invariants():
    with pytest.raises(ValueError):
        BaselineProfile(())
    with pytest.raises(ValueError):
        BaselineProfile((Ecu(1, 0.0),))
    with pytest.raises(ValueError):
        BaselineProfile((Ecu(1, 1.0),), jitter_fraction=0.6)
    with pytest.raises(ValueError):
        AttackSpec("DoS", 1.0, 1.0)


def test_default_profile_shape():
    p = default_profile()
    assert len(p.ecus) == 10
    assert min(e.period_ms for e in p.ecus) == 5 and max(e.period_ms for e in p.ecus) == 100
    assert p.duration == 60


def test_dos_flood_dominates_windows():
    # one flood frame per baseline frame in the covered stretch
    log = generate_baseline(BaselineProfile((Ecu(0x100, 2.0), Ecu(0x200, 2.0, 0, 1.0)), 0.0, 1.0))
    attacked = inject_dos(log, AttackSpec("DoS", 0.2, 0.8, rate=1000.0,
                                          params={"flood_id": 0}), 0)
    checked = 0
    for w in window_stream(attacked, WindowSpec.time_ms(23)):
        if w.start >= 0.2 and w.end <= 0.8:
            ids = w.ids
            assert ids[0::2] == [0] * len(ids[0::2]) or ids[1::2] == [0] * len(ids[1::2])
            g = build_graph(w)
            indeg = g.in_degree()
            assert indeg[0] > max(v for k, v in indeg.items() if k != 0)
            pr = pagerank(g).scores
            assert pr[0] > max(v for k, v in pr.items() if k != 0)
            checked += 1
    assert checked > 10


def test_dos_into_empty_log():
    out = inject_dos(FrameLog(), AttackSpec("DoS", 0.0, 0.01), 0)
    assert len(out) == 20 and all(f.can_id == 0 and f.injected for f in out)


def test_attack_outside_log_rejected():
    with pytest.raises(ValueError, match="outside"):
        inject_dos(two_ecu(1.0), AttackSpec("DoS", 5.0, 6.0))


def test_fuzzy_deterministic_and_rate():
    log = baseline(10.0)
    spec = AttackSpec("Fuzzy", 2.0, 4.0, rate=1000.0)
    a, b = inject_fuzzy(log, spec, 3), inject_fuzzy(log, spec, 3)
    assert a.frames == b.frames
    inside = [f for f in a if 2.0 <= f.timestamp <= 4.0]
    injected = sum(f.injected for f in inside)
    base_inside = sum(1 for f in log if 2.0 <= f.timestamp <= 4.0)
    expected = 1000 * 2.0 / (1000 * 2.0 + base_inside)
    assert abs(injected / len(inside) - expected) <= 0.05 * expected


def test_fuzzing_id_uses_unseen_ids():
    log = baseline()
    out = inject_fuzzing_id(log, AttackSpec("FuzzingId", 1.0, 2.0), 1)
    injected = {f.can_id for f in out if f.injected}
    assert injected and not injected & log.ids()
    assert out.frames == inject_fuzzing_id(log, AttackSpec("FuzzingId", 1.0, 2.0), 1).frames
    for w in window_stream(out):
        if any(f.injected for f in w.frames):
            assert set(w.ids) - log.ids()


def test_fuzzing_id_exhausted():
    full = FrameLog([LabeledFrame(i * 1e-4, i, 0) for i in range(0x800)])
    with pytest.raises(ValueError, match="no unused"):
        inject_fuzzing_id(full, AttackSpec("FuzzingId", 0.0, 0.1))


def test_fuzzing_payload_pairs_unseen():
    log = baseline()
    out = inject_fuzzing_payload(log, AttackSpec("FuzzingPayload", 1.0, 2.0), 2)
    seen = {(f.can_id, f.payload) for f in log}
    inj = [(f.can_id, f.payload) for f in out if f.injected]
    assert inj and not set(inj) & seen
    for w in window_stream(out):
        assert set(w.ids) <= log.ids()


def test_spoofing_adds_only_target():
    log = baseline()
    spec = AttackSpec("Spoofing", 1.0, 2.0, params={"target": 0x316})
    out = inject_spoofing(log, spec, 0)
    count = lambda lg, i: sum(f.can_id == i for f in lg)
    assert count(out, 0x316) > count(log, 0x316)
    assert [f for f in out if f.can_id != 0x316] == [f for f in log if f.can_id != 0x316]
    # paired windows at the same offset: the target gains degree
    spec23 = WindowSpec.time_ms(23)
    before = {w.index: w for w in window_stream(log, spec23)}
    raised = 0
    for w in window_stream(out, spec23, origin=log.frames[0].timestamp):
        if any(f.injected for f in w.frames) and w.index in before:
            g, g0 = build_graph(w), build_graph(before[w.index])
            raised += g.in_degree(True)[0x316] > g0.in_degree(True).get(0x316, 0)
    assert raised > 0


def test_diagnostic_range():
    log = baseline()
    out = inject_diagnostic(log, AttackSpec("Diagnostic", 1.0, 2.0), 4)
    ids = [f.can_id for f in out if f.injected]
    assert ids and all(0x700 <= i <= 0x7FF for i in ids)
    assert out.frames == inject_diagnostic(log, AttackSpec("Diagnostic", 1.0, 2.0), 4).frames


def test_replay_preserves_gaps_and_ids():
    log = baseline(12.0)
    spec = AttackSpec("Replay", 10.0, 11.0, params={"source": (0.0, 1.0)})
    out = inject_replay(log, spec)
    src = [f for f in log if f.timestamp < 1.0]
    rep = [f for f in out if f.injected]
    assert sorted(f.can_id for f in rep) == sorted(f.can_id for f in src)
    gaps_src = np.diff([f.timestamp for f in src])
    gaps_rep = np.diff([f.timestamp for f in rep])
    assert np.allclose(gaps_src, gaps_rep, atol=1e-9 + 2e-6)


def test_replay_window_graph_matches_source():
    log = two_ecu(3.0)
    # keep the first second plus one late frame so the log spans the attack
    quiet = FrameLog([f for f in log if f.timestamp < 1.0] + [log.frames[-1]])
    out = inject_replay(quiet, AttackSpec("Replay", 2.0, 2.5, params={"source": (0.0, 1.0)}))
    src_frames = [f for f in quiet if f.timestamp < 0.1]
    rep_frames = [f for f in out if 2.0 <= f.timestamp < 2.1]
    assert all(f.injected for f in rep_frames)
    assert build_graph(src_frames) == build_graph(rep_frames)


def test_replay_empty_source():
    log = two_ecu(3.0)
    with pytest.raises(ValueError, match="no frames"):
        inject_replay(log, AttackSpec("Replay", 2.0, 2.5, params={"source": (1.0001, 1.0003)}))


def test_suspension():
    only = generate_baseline(BaselineProfile((Ecu(0x50, 10.0),), 0.0, 1.0))
    assert len(inject_suspension(only, AttackSpec("Suspension", 0.0, 1.0))) == 0
    log = two_ecu(2.0)
    out = inject_suspension(log, AttackSpec("Suspension", 0.5, 1.0, params={"target": 0x100}))
    outside = [f for f in log if not 0.5 <= f.timestamp <= 1.0]
    assert [f for f in out if not 0.5 <= f.timestamp <= 1.0] == outside
    assert out.suspensions[0].target == 0x100
    with pytest.raises(ValueError, match="absent"):
        inject_suspension(log, AttackSpec("Suspension", 0.5, 1.0, params={"target": 0x7}))


def test_suspension_windows_shrink():
    log = two_ecu(2.0, jitter=0.0)
    out = inject_suspension(log, AttackSpec("Suspension", 0.5, 1.5, params={"target": 0x200}))
    spec = WindowSpec.time_ms(40)
    base = {w.index: build_graph(w) for w in window_stream(log, spec)}
    n = 0
    for w in window_stream(out, spec, origin=log.frames[0].timestamp):
        if w.label and w.start >= 0.5 and w.end <= 1.5:
            g, g0 = build_graph(w), base[w.index]
            assert g.n_vertices < g0.n_vertices or g.n_edges < g0.n_edges
            n += 1
    assert n > 0


def test_mix_attacks():
    log = baseline()
    specs = [AttackSpec("DoS", 0.5, 1.0), AttackSpec("Fuzzy", 2.0, 2.5)]
    out = mix_attacks(log, specs, seed=1)
    assert {f.attack_kind for f in out if f.injected} == {AttackKind.DOS, AttackKind.FUZZY}
    with pytest.raises(ValueError, match="overlapping"):
        mix_attacks(log, [AttackSpec("DoS", 0.5, 1.0), AttackSpec("Fuzzy", 0.9, 2.5)])
    assert mix_attacks(log, []).frames == log.frames


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from([k for k in AttackKind]), start=st.floats(0.2, 1.5),
       length=st.floats(0.05, 1.0), seed=st.integers(0, 2**16))
def test_injectors_keep_order_and_labels(kind, start, length, seed):
    log = two_ecu(3.0, jitter=0.1)
    spec = AttackSpec(kind, round(start, 3), round(start + length, 3))
    out = inject(log, spec, seed)
    times = [f.timestamp for f in out]
    assert times == sorted(times)
    # injected frames are exactly the additions
    assert [f for f in out if not f.injected] == [f for f in log if f in set(out.frames)]
    assert out.frames == inject(log, spec, seed).frames
    assert all(spec.start <= f.timestamp < spec.end for f in out if f.injected)


def test_scenario_file(tmp_path):
    doc = """
seed: 3
baseline:
  duration: 2.0
  jitter_fraction: 0.0
  ecus:
    - {can_id: "0x100", period_ms: 10}
    - {can_id: 0x200, period_ms: 20}
attacks:
  - {kind: DoS, start: 0.5, end: 1.0, rate: 500}
  - {kind: Suspension, start: 1.2, end: 1.5, target: "0x100"}
"""
    path = tmp_path / "s.yaml"
    path.write_text(doc)
    log = load_scenario(str(path)).build()
    assert sum(f.injected for f in log) == 250
    assert log.suspensions[0].target == 0x100
    assert scenario_from_dict({"baseline": {"duration": 1.0}}).build().frames
