import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from revsph import checkpoint as ck
from revsph import integrate as it
from revsph.bench import DamBreakScenario


def make(arith, n=7, seed=0):
    rng = np.random.default_rng(seed)
    if arith == "fixpa":
        r = rng.integers(-2**62, 2**62, (n, 2), dtype=np.int64)
        u = rng.integers(-2**62, 2**62, (n, 2), dtype=np.int64)
    else:
        r, u = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
    return ck.Checkpoint(arith, "sym", r, u, rng.random(n), rng.random(n),
                         rng.integers(0, 3, n).astype(np.int8), 5, 17, 0.125, 1e-3, True,
                         bytes(range(32)))


def same(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("r", "u", "rho", "mass", "kind")) and \
        (a.arithmetic, a.scheme, a.step, a.total_steps, a.time, a.dissipated, a.reversed,
         a.config_hash) == (b.arithmetic, b.scheme, b.step, b.total_steps, b.time,
                            b.dissipated, b.reversed, b.config_hash)


@given(st.sampled_from(["fixpa", "flopa"]), st.integers(0, 40), st.integers(0, 2**31))
def test_round_trip_is_bitwise(arith, n, seed):
    c = make(arith, n, seed)
    data = ck.to_bytes(c)
    assert same(ck.from_bytes(data), c)
    assert ck.to_bytes(ck.from_bytes(data)) == data


def test_every_single_byte_corruption_is_detected():
    data = bytearray(ck.to_bytes(make("fixpa", 3)))
    for i in range(len(data)):
        bad = bytearray(data)
        bad[i] ^= 0x40
        with pytest.raises(ck.CheckpointError):
            ck.from_bytes(bytes(bad))
    bad = bytearray(data)
    bad[100] ^= 1
    with pytest.raises(ck.ChecksumError):
        ck.from_bytes(bytes(bad))


def test_truncation_and_trailing_bytes():
    data = ck.to_bytes(make("flopa", 4))
    for cut in (0, 10, 88, len(data) - 1):
        with pytest.raises(ck.TruncatedError):
            ck.from_bytes(data[:cut])
    with pytest.raises(ck.CheckpointError, match="trailing"):
        ck.from_bytes(data + b"\0")


def test_mode_and_hash_mismatch(tmp_path):
    p = tmp_path / "a.ckpt"
    ck.write_checkpoint(p, make("fixpa"))
    with pytest.raises(ck.ModeMismatchError):
        ck.read_checkpoint(p, expected_mode="flopa")
    with pytest.raises(ck.CheckpointError, match="configuration"):
        ck.read_checkpoint(p, expected_hash=b"\1" * 32)
    assert ck.read_checkpoint(p, "fixpa", bytes(range(32))).n == 7


def test_invalid_checkpoint_objects():
    c = make("fixpa")
    c.r = c.r.astype(float)
    with pytest.raises(ck.CheckpointError, match="dtype"):
        ck.to_bytes(c)
    c = make("flopa")
    c.config_hash = b"x"
    with pytest.raises(ck.CheckpointError):
        ck.to_bytes(c)


def test_resume_from_checkpoint_continues_bit_exactly(tmp_path):
    sc = DamBreakScenario(dr=0.1, l_wcw=0.5, l_wch=0.5, l_bw=1.0, l_bh=1.0)
    pos, vel, phys, _ = sc.build()
    full = sc.config("fixpa", end_time=20 * sc.dt)
    half = sc.config("fixpa", end_time=10 * sc.dt)
    ref, _ = it.run(it.init_state(pos, vel, phys, full), full, phys)
    s, _ = it.run(it.init_state(pos, vel, phys, half), half, phys)
    ck.write_checkpoint(tmp_path / "h.ckpt", ck.from_state(s, phys, "sym"))
    c = ck.read_checkpoint(tmp_path / "h.ckpt", "fixpa")
    resumed = it.SimState(c.arithmetic, c.r, c.u, c.rho, step=c.step, total_steps=c.total_steps,
                          time=c.time, dissipated=c.dissipated, reversed=c.reversed)
    it.refresh(resumed, phys, full)
    out, _ = it.run(resumed, full, phys)
    assert np.array_equal(out.r, ref.r) and np.array_equal(out.u, ref.u)
