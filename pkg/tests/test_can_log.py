import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cangraph.can_log import (
    AttackKind,
    FrameLabel,
    FrameLog,
    LabeledFrame,
    LogFormatError,
    dumps_dataset_csv,
    parse_candump,
    parse_dataset_csv,
    read_log,
    write_candump,
    write_dataset_csv,
)
from cangraph.traffic_synth import AttackSpec, generate_baseline, default_profile, mix_attacks

FIXTURE = """\
1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R
1478198376.389636,018f,8,fe,5b,00,00,00,3c,00,00,R
1478198376.389864,0260,8,19,21,22,30,08,8e,6d,3a,R
1478198376.390096,02a0,8,64,00,9a,1d,97,02,bd,00,R
1478198376.390333,0000,8,00,00,00,00,00,00,00,00,T
"""


def test_public_record_example():
    log = parse_dataset_csv(FIXTURE)
    f = log.frames[0]
    assert f.timestamp == 1478198376.389427
    assert f.can_id == 0x316 and f.dlc == 8
    assert f.payload == bytes([0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6F])
    assert f.label is FrameLabel.NORMAL
    assert len(log) == 5
    assert log.frames[-1].injected


def test_empty_stream():
    assert len(parse_dataset_csv("")) == 0
    assert len(parse_candump(b"")) == 0


def test_payload_arity_mismatch_names_line():
    bad = FIXTURE.splitlines()[0] + "\n" + "1478198376.5,0316,8,05,21,68,09,21,21,00,R\n"
    with pytest.raises(LogFormatError, match="payload arity mismatch at line 2"):
        parse_dataset_csv(bad)


def test_decreasing_timestamp_names_both():
    bad = "2.5,0316,1,00,R\n1.25,0316,1,00,R\n"
    with pytest.raises(LogFormatError) as err:
        parse_dataset_csv(bad)
    assert "2.5" in str(err.value) and "1.25" in str(err.value)


def test_bad_flag_and_id_carry_field():
    with pytest.raises(LogFormatError) as err:
        parse_dataset_csv("1.0,zz,0,R\n")
    assert err.value.line == 1 and err.value.field == "can_id"
    with pytest.raises(LogFormatError):
        parse_dataset_csv("1.0,0316,0,X\n")


def test_candump_examples():
    log = parse_candump("(0.023000) can0 130#11223344\n(0.0230005) can0 000#\n")
    a, b = log.frames
    assert a.timestamp == 0.023 and a.can_id == 0x130 and a.dlc == 4
    assert a.payload == bytes([0x11, 0x22, 0x33, 0x44])
    assert b.can_id == 0 and b.dlc == 0 and b.payload == b""


def test_candump_missing_hash():
    with pytest.raises(LogFormatError, match="line 2"):
        parse_candump("(0.0) can0 000#\n(0.1) can0 13011223344\n")


def test_writer_flags():
    normal = FrameLog([LabeledFrame(1.0, 0x316, 1, b"\x05")])
    assert dumps_dataset_csv(normal).strip().endswith(",R")
    assert dumps_dataset_csv(normal).count("\n") == 1
    inj = FrameLog([LabeledFrame(1.0, 0x000, 0, b"", FrameLabel.INJECTED, AttackKind.DOS)])
    assert dumps_dataset_csv(inj).strip().endswith(",T")


def test_synthetic_round_trip_1000_frames(tmp_path):
    log = generate_baseline(default_profile(duration=1.5, seed=3))
    log = mix_attacks(log, [AttackSpec("DoS", 0.2, 0.4), AttackSpec("Suspension", 0.5, 0.7, params={"target": 0x0C1})])
    assert len(log) >= 1000
    path = tmp_path / "log.csv"
    with open(path, "w") as fh:
        write_dataset_csv(log, fh)
    back = read_log(str(path))
    assert back.frames == log.frames
    assert back.attacks == log.attacks


def test_candump_round_trip(tmp_path):
    log = generate_baseline(default_profile(duration=0.2))
    buf = io.StringIO()
    write_candump(log, buf)
    path = tmp_path / "log.txt"
    path.write_text(buf.getvalue())
    back = read_log(str(path))
    assert [(f.timestamp, f.can_id, f.payload) for f in back] == \
        [(f.timestamp, f.can_id, f.payload) for f in log]


frame_st = st.builds(
    lambda dt, cid, payload, inj: (dt, cid, payload, inj),
    st.integers(0, 10**6),
    st.integers(0, 0x7FF),
    st.binary(max_size=8),
    st.booleans(),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(frame_st, max_size=40))
def test_parsed_frames_satisfy_invariants(rows):
    t = 0
    frames = []
    for dt, cid, payload, inj in rows:
        t += dt
        label = FrameLabel.INJECTED if inj else FrameLabel.NORMAL
        frames.append(LabeledFrame(t / 1e6, cid, len(payload), payload, label))
    log = FrameLog(frames)
    back = parse_dataset_csv(dumps_dataset_csv(log))
    back.validate()
    assert [(f.timestamp, f.can_id, f.payload, f.label) for f in back] == \
        [(f.timestamp, f.can_id, f.payload, f.label) for f in frames]
